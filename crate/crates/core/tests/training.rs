use dvf_core::approx::{ActorConfig, ActorHead, Critic, CriticInput, AgentGraph, GateMode, GraphCritic, LdGnnActor, OptimizerKind, TabularCritic};
use dvf_core::da2c::{critic_loss_gradient, train, CriticKind, EnvFactory, TrainConfig, Trainer};
use dvf_core::envs::EnvSpec;
use dvf_core::gmdp::{GmdpEnvironment, MarkovChainEnv};
use dvf_core::graph::{DiffusionOperator, GeneratorSpec, InfluenceGraph};
use dvf_core::oracle::dvf_exact_markov;
use ndarray::{array, Array2};

fn chain_graph() -> InfluenceGraph {
    InfluenceGraph::from_edges(2, &[(0, 0), (1, 1), (0, 1)]).unwrap()
}

fn chain_actor(states: usize) -> LdGnnActor {
    let cfg = ActorConfig {
        head: ActorHead::Bits { bits: 1 },
        gate: GateMode::Full,
        obs_dim: states,
        memory_dim: 4,
        edge_dim: 0,
        hidden: 4,
    };
    LdGnnActor::new(cfg, 0).unwrap()
}

fn chain_config(gamma: f64) -> TrainConfig {
    TrainConfig {
        c_v: 0.05,
        rollout: 5,
        batch: 4,
        gamma,
        optimizer: OptimizerKind::Sgd,
        ..TrainConfig::transmit_power()
    }
}

fn colouring(n: usize) -> EnvSpec {
    EnvSpec::Colouring {
        graph: GeneratorSpec::ErdosRenyi { n, mean_degree: 2.0 },
        colours: 3,
        p_m: 0.4,
    }
}

fn desk(iterations: usize) -> TrainConfig {
    TrainConfig {
        c_j: 1e-2,
        c_v: 1e-3,
        c_r: 1.0,
        c_h: 0.0,
        c_m: 0.0,
        iterations,
        rollout: 5,
        batch: 4,
        ..TrainConfig::colouring()
    }
}

fn mean_reward(records: &[dvf_core::da2c::TrainRecord]) -> f64 {
    records.iter().map(|r| r.reward).sum::<f64>() / records.len() as f64
}

#[test]
fn zero_iterations_yield_no_records() {
    let spec = colouring(6);
    let factory = |s: u64| spec.build(s);
    let actor = LdGnnActor::new(spec.actor_config(4, 0, 4), 0).unwrap();
    let (records, _, _) = train(&factory, actor, None, CriticKind::Rein, desk(0), 1).unwrap();
    assert!(records.is_empty());
}

#[test]
fn training_is_deterministic() {
    let spec = colouring(8);
    let factory = |s: u64| spec.build(s);
    let run = || {
        let actor = LdGnnActor::new(spec.actor_config(4, 0, 4), 3).unwrap();
        let critic = GraphCritic::new(spec.critic_config(4, 1, false), 4).unwrap();
        train(&factory, actor, Some(Box::new(critic)), CriticKind::Dvf, desk(5), 9).unwrap()
    };
    let (ra, aa, ca) = run();
    let (rb, ab, cb) = run();
    assert_eq!(ra, rb);
    assert_eq!(aa.store().values(), ab.store().values());
    assert_eq!(ca.unwrap().params(), cb.unwrap().params());
}

#[test]
fn exact_critic_has_zero_td_error_on_a_deterministic_chain() {
    let p = array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
    let r = array![[1.0, 0.0], [0.0, 2.0], [-1.0, 0.5]];
    let gamma = 0.8;
    let op = DiffusionOperator::new(&chain_graph(), gamma).unwrap();
    let exact = dvf_exact_markov(&p, &r, &op, 1e-14).unwrap();
    let env = MarkovChainEnv::new(chain_graph(), p, r, None).unwrap();
    let factory = move |_: u64| -> Result<Box<dyn GmdpEnvironment>, _> { Ok(Box::new(env.clone())) };
    let critic = TabularCritic::from_table(&exact);
    let cfg = TrainConfig {
        iterations: 10,
        ..chain_config(gamma)
    };
    let (records, _, critic) = train(&factory, chain_actor(3), Some(Box::new(critic)), CriticKind::Dvf, cfg, 2).unwrap();
    for rec in &records {
        assert!(rec.td_loss < 1e-24, "td loss {}", rec.td_loss);
    }
    let after = Array2::from_shape_vec((3, 2), critic.unwrap().params().to_vec()).unwrap();
    assert!((&after - &exact).iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn tabular_critic_learns_the_diffusion_value() {
    let p = array![[0.1, 0.6, 0.3], [0.5, 0.2, 0.3], [0.3, 0.3, 0.4]];
    let r = array![[1.0, 0.0], [0.0, 1.0], [0.5, -0.5]];
    let gamma = 0.7;
    let op = DiffusionOperator::new(&chain_graph(), gamma).unwrap();
    let exact = dvf_exact_markov(&p, &r, &op, 1e-14).unwrap();
    let env = MarkovChainEnv::new(chain_graph(), p, r, None).unwrap();
    let factory = move |_: u64| -> Result<Box<dyn GmdpEnvironment>, _> { Ok(Box::new(env.clone())) };
    let cfg = TrainConfig {
        iterations: 2000,
        c_v: 0.02,
        ..chain_config(gamma)
    };
    let critic = TabularCritic::new(3, 2);
    let (_, _, critic) = train(&factory, chain_actor(3), Some(Box::new(critic)), CriticKind::Dvf, cfg, 5).unwrap();
    let learned = Array2::from_shape_vec((3, 2), critic.unwrap().params().to_vec()).unwrap();
    let err = (&learned - &exact).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    assert!(err < 0.05, "sup error {err}");
}

#[test]
fn critic_gradient_holds_the_target_fixed() {
    // A self-looping state: the target depends on the same table entries the
    // gradient is taken with respect to, and must not contribute.
    let graph = chain_graph();
    let op = DiffusionOperator::new(&graph, 0.9).unwrap();
    let critic = TabularCritic::from_table(&array![[2.0, -1.0]]);
    let obs = dvf_core::gmdp::Observation::plain(Array2::ones((2, 1)));
    let agents = AgentGraph::new(&graph);
    let input = CriticInput { obs: &obs, agents: &agents };
    let v = critic.values(&input).unwrap();
    let reward = [1.0, 0.5];
    let next: Vec<f64> = reward.iter().zip(&v).map(|(r, v)| r + v).collect();
    let target = op.apply(&next).unwrap();
    let (loss, grad) = critic_loss_gradient(&critic, &input, &target).unwrap();
    let delta: Vec<f64> = target.iter().zip(&v).map(|(y, v)| y - v).collect();
    assert!((loss - delta.iter().map(|d| d * d).sum::<f64>() / 2.0).abs() < 1e-15);
    for (g, d) in grad.iter().zip(&delta) {
        assert!((g + d).abs() < 1e-15);
    }
}

#[test]
fn bandit_policy_climbs_and_entropy_returns_to_uniform() {
    // One isolated node: reward is the number of colours taken.
    let spec = EnvSpec::Colouring {
        graph: GeneratorSpec::ErdosRenyi { n: 1, mean_degree: 0.0 },
        colours: 3,
        p_m: 0.4,
    };
    let factory = |s: u64| spec.build(s);
    let actor = LdGnnActor::new(spec.actor_config(4, 0, 8), 1).unwrap();
    let critic = GraphCritic::new(spec.critic_config(8, 1, false), 2).unwrap();
    let (records, actor, _) = train(&factory, actor, Some(Box::new(critic)), CriticKind::Dvf, desk(400), 3).unwrap();
    let early = mean_reward(&records[..10]);
    let late = mean_reward(&records[records.len() - 10..]);
    assert!(early < 2.0 && late > 2.7, "early {early}, late {late}");
    let low = records.last().unwrap().entropy;

    let uniform = 3.0 * std::f64::consts::LN_2;
    let cfg = TrainConfig {
        c_r: 0.0,
        c_h: 1.0,
        ..desk(300)
    };
    let mut trainer = Trainer::new(&factory as &EnvFactory, actor, None, CriticKind::Rein, cfg, 4).unwrap();
    let records = trainer.run().unwrap();
    let high = records.last().unwrap().entropy;
    assert!(low < 0.5 * uniform, "entropy after climbing {low}");
    assert!(high > 0.95 * uniform, "entropy after the entropy bonus {high}");
}

#[test]
fn critic_kinds_without_a_critic_are_rejected() {
    let spec = colouring(4);
    let factory = |s: u64| spec.build(s);
    let actor = LdGnnActor::new(spec.actor_config(4, 0, 4), 0).unwrap();
    assert!(Trainer::new(&factory, actor, None, CriticKind::Dvf, desk(1), 0).is_err());
}
