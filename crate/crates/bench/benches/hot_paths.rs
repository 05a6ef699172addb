use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dvf_core::approx::{GraphCritic, LdGnnActor};
use dvf_core::da2c::{CriticKind, TrainConfig, Trainer};
use dvf_core::envs::EnvSpec;
use dvf_core::graph::{generate, DiffusionOperator, GeneratorSpec};
use dvf_core::rng::seeded;

fn diffusion(c: &mut Criterion) {
    let g = generate(&GeneratorSpec::ErdosRenyi { n: 2000, mean_degree: 4.0 }, 1).unwrap().graph;
    let op = DiffusionOperator::new(&g, 0.9).unwrap();
    let v: Vec<f64> = (0..g.n()).map(|i| i as f64 / g.n() as f64).collect();
    let mut out = vec![0.0; g.n()];
    c.bench_function("gamma_apply_er2000", |b| b.iter(|| op.apply_into(black_box(&v), &mut out).unwrap()));
}

fn actor_step(c: &mut Criterion) {
    let spec = EnvSpec::Colouring {
        graph: GeneratorSpec::ErdosRenyi { n: 60, mean_degree: 3.0 },
        colours: 3,
        p_m: 0.4,
    };
    let actor = LdGnnActor::new(spec.actor_config(16, 0, 16), 0).unwrap();
    let mut env = spec.build(2).unwrap();
    let mut rng = seeded(3);
    env.reset(&mut rng);
    let obs = env.observe();
    let graph = env.graph().clone();
    let state = actor.initial_state(&obs, &graph).unwrap();
    c.bench_function("actor_step_colouring60", |b| {
        b.iter(|| actor.step(black_box(&obs), &graph, &state, &mut rng).unwrap())
    });
}

fn train_iteration(c: &mut Criterion) {
    let spec = EnvSpec::Colouring {
        graph: GeneratorSpec::ErdosRenyi { n: 60, mean_degree: 3.0 },
        colours: 3,
        p_m: 0.4,
    };
    let factory = |s: u64| spec.build(s);
    let actor = LdGnnActor::new(spec.actor_config(16, 0, 16), 0).unwrap();
    let critic = GraphCritic::new(spec.critic_config(16, 2, false), 1).unwrap();
    let cfg = TrainConfig {
        c_j: 3e-3,
        c_v: 1e-3,
        c_r: 1.0,
        batch: 8,
        ..TrainConfig::colouring()
    };
    let mut trainer = Trainer::new(&factory, actor, Some(Box::new(critic)), CriticKind::Dvf, cfg, 0).unwrap();
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("da2c_iteration_colouring60_b8", |b| b.iter(|| trainer.iteration().unwrap()));
    group.finish();
}

criterion_group!(benches, diffusion, actor_step, train_iteration);
criterion_main!(benches);
