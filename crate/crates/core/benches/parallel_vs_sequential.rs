//! The same workloads on the rayon global pool and on a single-thread pool.
//! Build with `--no-default-features --features http` to compare against the
//! purely sequential fallback instead.

use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stereoprobe::emotions::{profile_model, EmotionLexicon};
use stereoprobe::probe::{Elicitor, FixtureBackend};
use stereoprobe::registry::{Registry, TemplateSet};
use stereoprobe::rsa::build_rsm;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![
        ("parallel", rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()),
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn elicitation(c: &mut Criterion) {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let backend = FixtureBackend::load(&root.join("data/fixtures/fixture_backend.json")).unwrap();
    let templates = TemplateSet::bundled();
    let registry = Registry::bundled();
    let groups = &registry.groups()[..60];
    let lexicon = EmotionLexicon::fixture();
    let el = Elicitor::new(&backend, &templates);

    let mut g = c.benchmark_group("elicit_and_profile");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    let sets: Vec<_> = el.elicit_all(groups, 200).into_iter().map(Result::unwrap).collect();
                    profile_model(&sets, &lexicon).unwrap()
                })
            })
        });
    }
    g.finish();
}

fn rsm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 373;
    let names: Vec<String> = (0..n).map(|i| format!("g{i}")).collect();
    let vectors: Vec<Vec<f64>> = (0..n).map(|_| (0..10).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();

    let mut g = c.benchmark_group("build_rsm");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| build_rsm(names.clone(), &vectors).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, elicitation, rsm);
criterion_main!(benches);
