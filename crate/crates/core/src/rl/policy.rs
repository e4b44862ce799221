use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, RngCore};

use crate::error::{RareError, Result};
use crate::gnn::adam_update;
use crate::rl::mdp::{RewireAction, RewireState};

const MAGIC: &[u8; 4] = b"RPPO";
const VERSION: u32 = 1;
pub const CHOICES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    inputs: usize,
    hidden: usize,
    heads: usize,
}

impl Layout {
    fn logits(&self) -> usize {
        self.heads * CHOICES
    }
    fn w1(&self) -> Range<usize> {
        0..self.inputs * self.hidden
    }
    fn b1(&self) -> Range<usize> {
        let o = self.w1().end;
        o..o + self.hidden
    }
    fn wh(&self) -> Range<usize> {
        let o = self.b1().end;
        o..o + self.hidden * self.logits()
    }
    fn bh(&self) -> Range<usize> {
        let o = self.wh().end;
        o..o + self.logits()
    }
    fn wv(&self) -> Range<usize> {
        let o = self.bh().end;
        o..o + self.hidden
    }
    fn bv(&self) -> usize {
        self.wv().end
    }
    fn len(&self) -> usize {
        self.bv() + 1
    }
}

/// Adam moments over the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOptimizer {
    pub m: Array1<f64>,
    pub v: Array1<f64>,
    pub step: u64,
    pub learning_rate: f64,
}

/// MLP trunk (tanh) shared by `2N` three-way categorical heads and a scalar
/// value head. Inputs are the state counts divided by `scale`.
///
/// Parameters live in one flat vector: `w1 (2N x H)`, `b1`, `wh (H x 6N)`,
/// `bh`, `wv`, `bv`, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    layout: Layout,
    pub scale: f64,
    pub params: Array1<f64>,
    pub optimizer: PolicyOptimizer,
}

/// Batched forward values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct PolicyForward {
    pub inputs: Array2<f64>,
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
    pub values: Array1<f64>,
}

impl PolicyForward {
    /// Log-softmax of head `j` for batch row `b`.
    pub fn head_log_probs(&self, b: usize, j: usize) -> [f64; CHOICES] {
        log_softmax3(self.logits.slice(s![b, j * CHOICES..(j + 1) * CHOICES]))
    }
}

fn log_softmax3(z: ArrayView1<f64>) -> [f64; CHOICES] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    [z[0] - lse, z[1] - lse, z[2] - lse]
}

impl PolicyNet {
    pub fn new(num_nodes: usize, hidden: usize, scale: f64, learning_rate: f64, rng: &mut dyn RngCore) -> Result<Self> {
        if num_nodes == 0 || hidden == 0 {
            return Err(RareError::invalid("policy needs at least one node and one hidden unit"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(RareError::invalid("policy input scale must be positive"));
        }
        let layout = Layout { inputs: 2 * num_nodes, hidden, heads: 2 * num_nodes };
        let mut params = Array1::zeros(layout.len());
        let mut fill = |range: Range<usize>, fan_in: usize, fan_out: usize, gain: f64| {
            let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in params.slice_mut(s![range]).iter_mut() {
                *p = rng.random_range(-limit..limit);
            }
        };
        fill(layout.w1(), layout.inputs, hidden, 1.0);
        fill(layout.wh(), hidden, layout.logits(), 0.01);
        fill(layout.wv(), hidden, 1, 1.0);
        let n = layout.len();
        Ok(Self {
            layout,
            scale,
            params,
            optimizer: PolicyOptimizer {
                m: Array1::zeros(n),
                v: Array1::zeros(n),
                step: 0,
                learning_rate,
            },
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.layout.inputs / 2
    }

    pub fn num_heads(&self) -> usize {
        self.layout.heads
    }

    pub fn hidden(&self) -> usize {
        self.layout.hidden
    }

    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Sets the head weights and biases to zero, making every head uniform.
    pub fn zero_heads(&mut self) {
        let (wh, bh) = (self.layout.wh(), self.layout.bh());
        self.params.slice_mut(s![wh]).fill(0.0);
        self.params.slice_mut(s![bh]).fill(0.0);
    }

    fn view2(&self, range: Range<usize>, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        self.params
            .slice(s![range])
            .into_shape_with_order((rows, cols))
            .expect("parameter block shape")
    }

    fn encode(&self, states: &[&RewireState]) -> Result<Array2<f64>> {
        let mut x = Array2::zeros((states.len(), self.layout.inputs));
        for (b, st) in states.iter().enumerate() {
            if 2 * st.num_nodes() != self.layout.inputs || st.d.len() != st.k.len() {
                return Err(RareError::DimensionMismatch(format!(
                    "policy expects {} nodes, state has {}",
                    self.num_nodes(),
                    st.num_nodes()
                )));
            }
            for (i, v) in st.features(self.scale).into_iter().enumerate() {
                x[[b, i]] = v;
            }
        }
        Ok(x)
    }

    pub fn forward_inputs(&self, inputs: Array2<f64>) -> Result<PolicyForward> {
        let l = self.layout;
        let w1 = self.view2(l.w1(), l.inputs, l.hidden);
        let b1 = self.params.slice(s![l.b1()]);
        let wh = self.view2(l.wh(), l.hidden, l.logits());
        let bh = self.params.slice(s![l.bh()]);
        let wv = self.params.slice(s![l.wv()]);
        let bv = self.params[l.bv()];
        let hidden = (inputs.dot(&w1) + b1).mapv(f64::tanh);
        let logits = hidden.dot(&wh) + bh;
        let values = hidden.dot(&wv) + bv;
        if logits.iter().chain(values.iter()).any(|x| !x.is_finite()) {
            return Err(RareError::NonFinite("policy logits or value".into()));
        }
        Ok(PolicyForward { inputs, hidden, logits, values })
    }

    pub fn forward(&self, states: &[&RewireState]) -> Result<PolicyForward> {
        self.forward_inputs(self.encode(states)?)
    }

    /// `2N x 3` matrix of head probabilities for one state; column `c` is
    /// the probability of delta `c - 1`.
    pub fn head_probabilities(&self, state: &RewireState) -> Result<Array2<f64>> {
        let out = self.forward(&[state])?;
        let mut p = Array2::zeros((self.layout.heads, CHOICES));
        for j in 0..self.layout.heads {
            let lp = out.head_log_probs(0, j);
            for c in 0..CHOICES {
                p[[j, c]] = lp[c].exp();
            }
        }
        Ok(p)
    }

    pub fn value(&self, state: &RewireState) -> Result<f64> {
        Ok(self.forward(&[state])?.values[0])
    }

    /// Samples every head independently. Returns the joint log-probability
    /// and the value estimate alongside the action.
    pub fn sample_action(&self, state: &RewireState, rng: &mut dyn RngCore) -> Result<(RewireAction, f64, f64)> {
        let out = self.forward(&[state])?;
        let mut choices = Vec::with_capacity(self.layout.heads);
        let mut log_prob = 0.0;
        for j in 0..self.layout.heads {
            let lp = out.head_log_probs(0, j);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = CHOICES - 1;
            for (c, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    pick = c;
                    break;
                }
            }
            log_prob += lp[pick];
            choices.push(pick);
        }
        Ok((RewireAction::from_choices(&choices), log_prob, out.values[0]))
    }

    /// Per-head argmax; ties prefer "keep", then the lower delta.
    pub fn greedy(&self, state: &RewireState) -> Result<RewireAction> {
        let out = self.forward(&[state])?;
        let choices: Vec<usize> = (0..self.layout.heads)
            .map(|j| {
                let lp = out.head_log_probs(0, j);
                [1, 0, 2].into_iter().fold(1, |best, c| if lp[c] > lp[best] { c } else { best })
            })
            .collect();
        Ok(RewireAction::from_choices(&choices))
    }

    pub fn log_prob(&self, state: &RewireState, action: &RewireAction) -> Result<f64> {
        let out = self.forward(&[state])?;
        let choices = action.choices();
        if choices.len() != self.layout.heads {
            return Err(RareError::DimensionMismatch("action length differs from head count".into()));
        }
        Ok(choices.iter().enumerate().map(|(j, &c)| out.head_log_probs(0, j)[c]).sum())
    }

    /// Backpropagates gradients with respect to logits and values through
    /// the network, returning a flat gradient aligned with `params`.
    pub fn backward(&self, fwd: &PolicyForward, dlogits: &Array2<f64>, dvalues: &Array1<f64>) -> Array1<f64> {
        let l = self.layout;
        let wh = self.view2(l.wh(), l.hidden, l.logits());
        let wv = self.params.slice(s![l.wv()]);
        let mut grad = Array1::zeros(l.len());

        let dwh = fwd.hidden.t().dot(dlogits);
        grad.slice_mut(s![l.wh()]).assign(&Array1::from_iter(dwh.iter().copied()));
        grad.slice_mut(s![l.bh()]).assign(&dlogits.sum_axis(Axis(0)));
        grad.slice_mut(s![l.wv()]).assign(&fwd.hidden.t().dot(dvalues));
        grad[l.bv()] = dvalues.sum();

        let mut dh = dlogits.dot(&wh.t());
        for (mut row, &dv) in dh.outer_iter_mut().zip(dvalues) {
            row.scaled_add(dv, &wv);
        }
        let dpre = dh * fwd.hidden.mapv(|h| 1.0 - h * h);
        let dw1 = fwd.inputs.t().dot(&dpre);
        grad.slice_mut(s![l.w1()]).assign(&Array1::from_iter(dw1.iter().copied()));
        grad.slice_mut(s![l.b1()]).assign(&dpre.sum_axis(Axis(0)));
        grad
    }

    pub fn adam_step(&mut self, grad: &Array1<f64>) {
        let opt = &mut self.optimizer;
        opt.step += 1;
        adam_update(&mut self.params, grad, &mut opt.m, &mut opt.v, opt.step, opt.learning_rate, 0.9, 0.999, 1e-8);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for dim in [self.num_nodes(), self.layout.inputs, self.layout.hidden, self.layout.logits()] {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.scale.to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Restores parameters; the optimizer restarts with `learning_rate`.
    pub fn from_bytes(bytes: &[u8], learning_rate: f64) -> Result<Self> {
        let header = 4 + 4 + 4 * 8 + 8;
        if bytes.len() < header || &bytes[..4] != MAGIC {
            return Err(RareError::Format("not a policy checkpoint".into()));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap()) as usize;
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(RareError::Format(format!("unsupported policy checkpoint version {version}")));
        }
        let (n, inputs, hidden, logits) = (word(8), word(16), word(24), word(32));
        let scale = f64::from_le_bytes(bytes[40..48].try_into().unwrap());
        if inputs != 2 * n || logits != CHOICES * 2 * n || hidden == 0 {
            return Err(RareError::Format("inconsistent policy checkpoint shapes".into()));
        }
        let layout = Layout { inputs, hidden, heads: 2 * n };
        if bytes.len() != header + 8 * layout.len() {
            return Err(RareError::Format("policy checkpoint length does not match its header".into()));
        }
        let params: Array1<f64> = bytes[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let net = Self {
            layout,
            scale,
            optimizer: PolicyOptimizer {
                m: Array1::zeros(params.len()),
                v: Array1::zeros(params.len()),
                step: 0,
                learning_rate,
            },
            params,
        };
        if !net.is_finite() {
            return Err(RareError::NonFinite("policy checkpoint parameters".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| RareError::io(path, e))
    }

    pub fn load(path: &Path, learning_rate: f64) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| RareError::io(path, e))?;
        Self::from_bytes(&bytes, learning_rate)
    }
}
