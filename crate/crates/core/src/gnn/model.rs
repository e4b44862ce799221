use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array2, Axis};
use rand::{Rng, RngCore};

use crate::error::{RareError, Result};
use crate::gnn::operator::{normalized_adjacency, SparseOperator};
use crate::gnn::Backbone;
use crate::graph::Graph;

/// Two-layer weights. SAGE layers take `[self, neighbour-mean]`, so their
/// input widths are doubled.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub backbone: Backbone,
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub dropout: f64,
}

/// Aggregation operator for one graph plus the layer-one input it induces.
/// Rebuilt whenever the edge set changes.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub backbone: Backbone,
    pub operator: SparseOperator,
    pub input1: Array2<f64>,
}

impl GraphInput {
    pub fn new(graph: &Graph, backbone: Backbone) -> Self {
        let operator = normalized_adjacency(graph, backbone);
        let input1 = layer_input(backbone, &operator, graph.features());
        GraphInput {
            backbone,
            operator,
            input1,
        }
    }
}

fn layer_input(backbone: Backbone, op: &SparseOperator, h: &Array2<f64>) -> Array2<f64> {
    match backbone {
        Backbone::Gcn => op.matmul(h),
        Backbone::SageMean => concatenate![Axis(1), h.view(), op.matmul(h).view()],
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

impl GcnModel {
    pub fn new(
        backbone: Backbone,
        in_features: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(RareError::invalid(format!("dropout must be in [0, 1), got {dropout}")));
        }
        if hidden == 0 || classes == 0 {
            return Err(RareError::invalid("hidden width and class count must be positive"));
        }
        let widen = match backbone {
            Backbone::Gcn => 1,
            Backbone::SageMean => 2,
        };
        let w1 = glorot(widen * in_features, hidden, rng);
        let w2 = glorot(widen * hidden, classes, rng);
        Ok(GcnModel {
            backbone,
            w1,
            w2,
            dropout,
        })
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn classes(&self) -> usize {
        self.w2.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(self.w2.iter()).all(|x| x.is_finite())
    }

    /// Little-endian layout: magic `RMDL`, `u32` version, `u8` backbone tag,
    /// `u64` rows/cols of each weight matrix, `f64` dropout, then `w1` and
    /// `w2` row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RMDL");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.push(self.backbone.tag());
        for w in [&self.w1, &self.w2] {
            out.extend_from_slice(&(w.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(w.ncols() as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.dropout.to_le_bytes());
        for w in [&self.w1, &self.w2] {
            for x in w.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| RareError::Format(format!("model checkpoint: {m}"));
        if bytes.len() < 49 || &bytes[..4] != b"RMDL" {
            return Err(bad("missing RMDL header"));
        }
        if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != 1 {
            return Err(bad("unsupported version"));
        }
        let backbone = Backbone::from_tag(bytes[8]).ok_or_else(|| bad("unknown backbone tag"))?;
        let u = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap()) as usize;
        let (r1, c1, r2, c2) = (u(9), u(17), u(25), u(33));
        let dropout = f64::from_le_bytes(bytes[41..49].try_into().unwrap());
        let n1 = r1.checked_mul(c1).ok_or_else(|| bad("shape overflow"))?;
        let n2 = r2.checked_mul(c2).ok_or_else(|| bad("shape overflow"))?;
        if bytes.len() != 49 + 8 * (n1 + n2) {
            return Err(bad("length does not match shape header"));
        }
        let vals: Vec<f64> = bytes[49..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(GcnModel {
            backbone,
            w1: Array2::from_shape_vec((r1, c1), vals[..n1].to_vec()).map_err(|e| bad(&e.to_string()))?,
            w2: Array2::from_shape_vec((r2, c2), vals[n1..].to_vec()).map_err(|e| bad(&e.to_string()))?,
            dropout,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| RareError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| RareError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Pre-activation of layer one.
    pub pre1: Array2<f64>,
    /// Inverted-dropout multipliers (`0` or `1/(1-p)`); `None` in eval mode.
    pub dropout_scale: Option<Array2<f64>>,
    /// Layer-one output after ReLU and dropout.
    pub hidden: Array2<f64>,
    /// Aggregated input of layer two.
    pub input2: Array2<f64>,
}

/// Runs both layers. Dropout is active iff `dropout_rng` is provided.
pub fn forward(
    model: &GcnModel,
    input: &GraphInput,
    dropout_rng: Option<&mut dyn RngCore>,
) -> Result<(Array2<f64>, ForwardCache)> {
    if input.backbone != model.backbone {
        return Err(RareError::invalid("graph input built for a different backbone"));
    }
    if input.input1.ncols() != model.w1.nrows() {
        return Err(RareError::DimensionMismatch(format!(
            "layer-one input width {} vs weights {}",
            input.input1.ncols(),
            model.w1.nrows()
        )));
    }
    let pre1 = input.input1.dot(&model.w1);
    let mut hidden = pre1.mapv(|z| z.max(0.0));
    let dropout_scale = match dropout_rng {
        Some(rng) if model.dropout > 0.0 => {
            let keep = 1.0 / (1.0 - model.dropout);
            let p = model.dropout;
            let scale = Array2::from_shape_simple_fn(hidden.dim(), || {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    keep
                }
            });
            hidden *= &scale;
            Some(scale)
        }
        _ => None,
    };
    let input2 = layer_input(model.backbone, &input.operator, &hidden);
    let logits = input2.dot(&model.w2);
    if !logits.iter().all(|x| x.is_finite()) {
        return Err(RareError::NonFinite("GNN logits".into()));
    }
    Ok((
        logits,
        ForwardCache {
            pre1,
            dropout_scale,
            hidden,
            input2,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

/// Mean softmax cross-entropy over masked nodes, and its gradient with an L2
/// term `weight_decay * W` added. The returned loss excludes the L2 term.
pub fn loss_and_grad(
    model: &GcnModel,
    input: &GraphInput,
    cache: &ForwardCache,
    logits: &Array2<f64>,
    labels: &[usize],
    mask: &[bool],
    weight_decay: f64,
) -> Result<(f64, GradientPair)> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(RareError::invalid("loss over an empty mask"));
    }
    let inv = 1.0 / count as f64;
    let mut dlogits = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for (v, row) in logits.outer_iter().enumerate() {
        if !mask[v] {
            continue;
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[labels[v]];
        for (c, z) in row.iter().enumerate() {
            dlogits[[v, c]] = (z - lse).exp() * inv;
        }
        dlogits[[v, labels[v]]] -= inv;
    }
    loss *= inv;

    let mut gw2 = cache.input2.t().dot(&dlogits);
    let dinput2 = dlogits.dot(&model.w2.t());
    let h = model.hidden();
    let mut dhidden = match model.backbone {
        Backbone::Gcn => input.operator.matmul_transpose(&dinput2),
        Backbone::SageMean => {
            let own = dinput2.slice(s![.., ..h]).to_owned();
            let neigh = dinput2.slice(s![.., h..]).to_owned();
            own + input.operator.matmul_transpose(&neigh)
        }
    };
    if let Some(scale) = &cache.dropout_scale {
        dhidden *= scale;
    }
    ndarray::Zip::from(&mut dhidden)
        .and(&cache.pre1)
        .for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
    let mut gw1 = input.input1.t().dot(&dhidden);
    if weight_decay != 0.0 {
        gw1.scaled_add(weight_decay, &model.w1);
        gw2.scaled_add(weight_decay, &model.w2);
    }
    Ok((loss, GradientPair { w1: gw1, w2: gw2 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path3() -> Graph {
        Graph::new(
            array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            vec![0, 1, 0],
            2,
            [(0, 1), (1, 2)],
        )
        .unwrap()
    }

    #[test]
    fn edgeless_identity_weights_pass_features_through() {
        let x = array![[0.3, -0.2, 0.1], [0.5, 0.4, 0.0]];
        let g = Graph::new(x.clone(), vec![0, 1], 2, []).unwrap();
        let model = GcnModel {
            backbone: Backbone::Gcn,
            w1: Array2::eye(3),
            w2: array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
            dropout: 0.5,
        };
        let input = GraphInput::new(&g, Backbone::Gcn);
        let (logits, _) = forward(&model, &input, None).unwrap();
        // ReLU zeroes the negative entry before the class projection.
        assert_eq!(logits, array![[0.3, 0.0], [0.5, 0.4]]);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn forward_matches_hand_stepped_dense_computation() {
        let g = path3();
        let model = GcnModel {
            backbone: Backbone::Gcn,
            w1: array![[0.5, -1.0, 0.25], [1.0, 0.5, -0.5]],
            w2: array![[1.0, -1.0], [0.5, 0.5], [-0.25, 1.0]],
            dropout: 0.0,
        };
        let (logits, _) = forward(&model, &GraphInput::new(&g, Backbone::Gcn), None).unwrap();
        // Dense D^-1/2 (A+I) D^-1/2 for the path with degrees (2, 3, 2).
        let deg = [2.0f64, 3.0, 2.0];
        let adj = [[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]];
        let x = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let w1 = [[0.5, -1.0, 0.25], [1.0, 0.5, -0.5]];
        let w2 = [[1.0, -1.0], [0.5, 0.5], [-0.25, 1.0]];
        let a = |i: usize, j: usize| adj[i][j] / (deg[i] * deg[j]).sqrt();
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                let mut z = 0.0;
                for j in 0..3 {
                    for f in 0..2 {
                        z += a(i, j) * x[j][f] * w1[f][k];
                    }
                }
                h[i][k] = f64::max(z, 0.0);
            }
        }
        for i in 0..3 {
            for c in 0..2 {
                let mut z = 0.0;
                for j in 0..3 {
                    for k in 0..3 {
                        z += a(i, j) * h[j][k] * w2[k][c];
                    }
                }
                assert!((logits[[i, c]] - z).abs() < 1e-12, "({i},{c}) {} vs {z}", logits[[i, c]]);
            }
        }
    }

    #[test]
    fn dropout_is_seeded() {
        let g = path3();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = GcnModel::new(Backbone::SageMean, 2, 8, 2, 0.5, &mut rng).unwrap();
        let input = GraphInput::new(&g, Backbone::SageMean);
        let run = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            forward(&model, &input, Some(&mut r)).unwrap().0
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn uniform_logits_give_ln_c_loss() {
        let g = path3();
        let model = GcnModel {
            backbone: Backbone::Gcn,
            w1: Array2::zeros((2, 4)),
            w2: Array2::zeros((4, 3)),
            dropout: 0.0,
        };
        let input = GraphInput::new(&g, Backbone::Gcn);
        let (logits, cache) = forward(&model, &input, None).unwrap();
        let labels = [0, 2, 1];
        let (loss, _) = loss_and_grad(&model, &input, &cache, &logits, &labels, &[true; 3], 0.0).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        assert!(loss_and_grad(&model, &input, &cache, &logits, &labels, &[false; 3], 0.0).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_and_header() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = GcnModel::new(Backbone::SageMean, 3, 4, 2, 0.5, &mut rng).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..4], b"RMDL");
        assert_eq!(bytes[8], 1);
        assert_eq!(GcnModel::from_bytes(&bytes).unwrap(), model);
        assert!(GcnModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
