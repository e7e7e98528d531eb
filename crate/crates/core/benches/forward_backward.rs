use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gaitgraph::exec;
use gaitgraph::experiment::{prepare, RunConfig, SessionSpec};
use gaitgraph::net::Model;
use gaitgraph::train::batch_gradients;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn forward_backward(c: &mut Criterion) {
    let mut cfg = RunConfig::benchmark();
    cfg.synth.duration_s = 4.0;
    cfg.session = SessionSpec { blocks: 3, trials_per_block: 8 };
    let data = prepare(&cfg).expect("benchmark data");
    let model = Model::new(cfg.model.clone(), &data.adjacency.prior, 0).expect("model");
    let mut group = c.benchmark_group("forward_backward");
    group.sample_size(10);
    for batch in [16usize, 64] {
        let (x, y) = data.train.gather_range(0..batch).expect("batch");
        for (label, parallel) in [("parallel", true), ("sequential", false)] {
            group.bench_with_input(BenchmarkId::new(label, batch), &batch, |b, _| {
                exec::set_parallel(parallel);
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                b.iter(|| batch_gradients(&model, x.clone(), &y, &cfg.loss, &mut rng).expect("step"));
            });
        }
    }
    exec::set_parallel(true);
    group.finish();
}

criterion_group!(benches, forward_backward);
criterion_main!(benches);
