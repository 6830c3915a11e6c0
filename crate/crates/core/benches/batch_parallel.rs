use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use idiomkit::models::{batch_gradients, ModelConfig, ModelKind, ModelParams, Mode, Preset};
use idiomkit::parallel::Parallelism;
use idiomkit::tokenizer::{TokenizedInput, CLS_ID, PAD_ID, SEP_ID};
use rand::{Rng, SeedableRng};

fn batch(cfg: &ModelConfig, n: usize) -> (Vec<TokenizedInput>, Vec<usize>) {
    let mut r = rand::rngs::StdRng::seed_from_u64(1);
    let inputs = (0..n)
        .map(|_| {
            let mut ids = vec![CLS_ID];
            ids.extend((0..r.gen_range(8..24)).map(|_| r.gen_range(4..cfg.vocab_size as u32)));
            ids.push(SEP_ID);
            let real_len = ids.len();
            ids.resize(cfg.max_len, PAD_ID);
            let mask = (0..cfg.max_len).map(|i| u8::from(i < real_len)).collect();
            TokenizedInput { ids, mask, real_len }
        })
        .collect();
    let targets = (0..n).map(|_| r.gen_range(0..cfg.num_classes)).collect();
    (inputs, targets)
}

fn bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10);
    for kind in ModelKind::ALL {
        let cfg = ModelConfig::new(kind, Preset::Desk, 500, 5);
        let params = ModelParams::<f32>::init(&cfg, 3).unwrap();
        let (inputs, targets) = batch(&cfg, 16);
        for par in [Parallelism::Sequential, Parallelism::Threads] {
            group.bench_with_input(BenchmarkId::new(kind.name(), format!("{par:?}")), &par, |b, &par| {
                b.iter(|| batch_gradients(&params, &inputs, &targets, Mode::Train { seed: 7 }, par).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
