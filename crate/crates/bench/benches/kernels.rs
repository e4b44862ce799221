use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rare_core::entropy::{build_sequences, structural_entropy};
use rare_core::gnn::{forward, loss_and_grad, GraphInput};
use rare_core::rl::{apply_rewire, StateBounds};
use rare_core::synthetic::{webkb_like, WebKbProfile};
use rare_core::{Backbone, EmbeddingConfig, EntropyTable, GcnModel, Graph, PolicyNet, RewireState};

fn cornell() -> Graph {
    webkb_like(&WebKbProfile::cornell(), 0).unwrap()
}

fn entropy(c: &mut Criterion) {
    let mut group = c.benchmark_group("entropy");
    group.sample_size(20);
    for profile in [WebKbProfile::cornell(), WebKbProfile::wisconsin()] {
        let g = webkb_like(&profile, 0).unwrap();
        let config = EmbeddingConfig::auto(g.num_features(), 0);
        group.bench_with_input(BenchmarkId::new("table", profile.name), &g, |b, g| {
            b.iter(|| EntropyTable::compute(g, &config, 1.0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("structural", profile.name), &g, |b, g| {
            b.iter(|| structural_entropy(g).unwrap())
        });
    }
    group.finish();
}

fn gnn(c: &mut Criterion) {
    let g = cornell();
    let mask = vec![true; g.num_nodes()];
    let mut group = c.benchmark_group("gnn");
    for backbone in [Backbone::Gcn, Backbone::SageMean] {
        let input = GraphInput::new(&g, backbone);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = GcnModel::new(backbone, g.num_features(), 64, g.num_classes(), 0.5, &mut rng).unwrap();
        group.bench_function(BenchmarkId::new("forward", backbone), |b| {
            b.iter(|| forward(&model, &input, None).unwrap())
        });
        group.bench_function(BenchmarkId::new("forward_backward", backbone), |b| {
            b.iter(|| {
                let (logits, cache) = forward(&model, &input, None).unwrap();
                loss_and_grad(&model, &input, &cache, &logits, g.labels(), &mask, 5e-5).unwrap()
            })
        });
        group.bench_function(BenchmarkId::new("operator", backbone), |b| b.iter(|| GraphInput::new(&g, backbone)));
    }
    group.finish();
}

fn rewiring(c: &mut Criterion) {
    let g = cornell();
    let table = EntropyTable::compute(&g, &EmbeddingConfig::auto(g.num_features(), 0), 1.0).unwrap();
    let seq = build_sequences(&table, &g).unwrap();
    let bounds = StateBounds::standard(&g, &seq, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut state = RewireState::zeros(g.num_nodes());
    for v in 0..g.num_nodes() {
        state.k[v] = rng.random_range(0..=bounds.k_max[v]);
        state.d[v] = rng.random_range(0..=bounds.d_max[v]);
    }
    let mut group = c.benchmark_group("rl");
    group.bench_function("apply_rewire", |b| b.iter(|| apply_rewire(&g, &state, &seq).unwrap()));
    group.bench_function("build_sequences", |b| b.iter(|| build_sequences(&table, &g).unwrap()));
    let policy = PolicyNet::new(g.num_nodes(), 64, 10.0, 3e-4, &mut rng).unwrap();
    group.bench_function("policy_sample", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        b.iter(|| policy.sample_action(&state, &mut rng).unwrap())
    });
    group.finish();
}

criterion_group!(benches, entropy, gnn, rewiring);
criterion_main!(benches);
