//! Central finite differences for checking analytic gradients.

/// Default step for central differences.
pub const STEP: f64 = 1e-5;

/// `∂f/∂x_k ≈ (f(x + h e_k) − f(x − h e_k)) / 2h` for every `k`.
pub fn finite_difference(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + step;
            let up = f(&probe);
            probe[k] = x[k] - step;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Relative error of `analytic` against central differences at `STEP` and
/// `STEP / 10`, whichever agrees better. A ReLU kink inside one step skews
/// that difference but rarely both.
pub fn fd_error(analytic: &[f64], x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    [STEP, STEP / 10.0]
        .iter()
        .map(|&h| relative_error(analytic, &finite_difference(x, h, &mut f)))
        .fold(f64::INFINITY, f64::min)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use super::{
    bernoulli_gate_terms, bernoulli_head, categorical_head, gate_probabilities, ActorConfig, ActorHead, AgentGraph,
    Critic, CriticConfig, CriticInput, GateMode, GraphCritic, Gru, LdGnnActor, MessagePass, Mlp, ParameterStore, Tape,
    Var,
};
use crate::gmdp::{ChoiceSet, CommView, Observation};
use crate::graph::{edge_transform_with_self_edges, InfluenceGraph};
use crate::rng::{stream, SimRng};

/// Worst relative error seen for one operation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub op: &'static str,
    pub instances: usize,
    pub max_rel_err: f64,
}

fn random_matrix(rows: usize, cols: usize, rng: &mut SimRng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn random_graph(n: usize, p: f64, rng: &mut SimRng) -> InfluenceGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    InfluenceGraph::with_self_loops(n, &edges).expect("indices in range")
}

/// Compare `∇` of the scalar built by `build` against central differences
/// over every parameter in `store`.
fn check_store(store: &ParameterStore, build: impl Fn(&mut Tape, &ParameterStore) -> Var) -> f64 {
    let mut tape = Tape::new();
    let out = build(&mut tape, store);
    let analytic = tape.backward(out, store.len());
    let mut probe = store.clone();
    fd_error(&analytic, store.values(), |x| {
        probe.values_mut().copy_from_slice(x);
        let mut t = Tape::new();
        let o = build(&mut t, &probe);
        t.scalar(o)
    })
}

/// Compare the adjoint of a constant input against central differences.
fn check_input(x: &Array2<f64>, build: impl Fn(&mut Tape, Var) -> Var) -> f64 {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let out = build(&mut tape, xv);
    let grads = tape.gradients(out, 0);
    let analytic: Vec<f64> = grads
        .of(xv)
        .map(|g| g.iter().copied().collect())
        .unwrap_or_else(|| vec![0.0; x.len()]);
    let flat: Vec<f64> = x.iter().copied().collect();
    fd_error(&analytic, &flat, |v| {
        let mut t = Tape::new();
        let xv = t.constant(Array2::from_shape_vec(x.raw_dim(), v.to_vec()).expect("shape"));
        let o = build(&mut t, xv);
        t.scalar(o)
    })
}

/// Zero biases can leave a ReLU input exactly at its kink, where central
/// differences are meaningless; a small shift avoids that.
fn jitter(values: &mut [f64], rng: &mut SimRng) {
    for v in values {
        *v += rng.random_range(-0.1..0.1);
    }
}

fn project(tape: &mut Tape, v: Var, c: &Array2<f64>) -> Var {
    tape.weighted_sum(v, c.clone())
}

fn mlp_case(rng: &mut SimRng) -> f64 {
    let (i, h, o, m) = (rng.random_range(1..5), rng.random_range(2..6), rng.random_range(1..4), rng.random_range(1..5));
    let mut store = ParameterStore::new(0);
    let mlp = Mlp::new(&mut store, rng, "m", i, h, o);
    jitter(store.values_mut(), rng);
    let x = random_matrix(m, i, rng);
    let c = random_matrix(m, o, rng);
    check_store(&store, |t, s| {
        let xv = t.constant(x.clone());
        let y = mlp.forward(t, s, xv);
        project(t, y, &c)
    })
}

fn gate_case(rng: &mut SimRng) -> f64 {
    let m = rng.random_range(1..8);
    let logits = random_matrix(m, 1, rng).mapv(|v| 3.0 * v);
    let active: Vec<bool> = (0..m).map(|_| rng.random()).collect();
    let (c1, c2) = (random_matrix(m, 1, rng), random_matrix(m, 1, rng));
    check_input(&logits, |t, l| {
        let p = gate_probabilities(t, l);
        let (lp, h) = bernoulli_gate_terms(t, p, &active);
        let a = project(t, lp, &c1);
        let b = project(t, h, &c2);
        t.add(a, b)
    })
}

fn message_case(rng: &mut SimRng) -> f64 {
    let n = rng.random_range(2..7);
    let d = rng.random_range(1..5);
    let mut store = ParameterStore::new(0);
    let mp = MessagePass::new(&mut store, rng, "mp", d);
    let incoming: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && rng.random::<f64>() < 0.5).collect())
        .collect();
    let x = random_matrix(n, d, rng);
    let c = random_matrix(n, d, rng);
    let params = check_store(&store, |t, s| {
        let xv = t.constant(x.clone());
        let z = mp.forward(t, s, xv, &incoming);
        project(t, z, &c)
    });
    let inputs = check_input(&x, |t, xv| {
        let z = mp.forward(t, &store, xv, &incoming);
        project(t, z, &c)
    });
    params.max(inputs)
}

fn memory_case(rng: &mut SimRng) -> f64 {
    let (m, i, d) = (rng.random_range(1..6), rng.random_range(1..5), rng.random_range(1..5));
    let mut store = ParameterStore::new(0);
    let gru = Gru::new(&mut store, rng, "g", i, d);
    let x = random_matrix(m, i, rng);
    let h = random_matrix(m, d, rng);
    let mask: Arc<Vec<bool>> = Arc::new((0..m).map(|_| rng.random()).collect());
    let c = random_matrix(m, d, rng);
    let params = check_store(&store, |t, s| {
        let xv = t.constant(x.clone());
        let hv = t.constant(h.clone());
        let h1 = gru.forward(t, s, xv, hv);
        let sel = t.row_select(h1, hv, mask.clone());
        project(t, sel, &c)
    });
    let state = check_input(&h, |t, hv| {
        let xv = t.constant(x.clone());
        let h1 = gru.forward(t, &store, xv, hv);
        let sel = t.row_select(h1, hv, mask.clone());
        project(t, sel, &c)
    });
    params.max(state)
}

fn bits_case(rng: &mut SimRng) -> f64 {
    let (m, k) = (rng.random_range(1..6), rng.random_range(1..4));
    let logits = random_matrix(m, k, rng).mapv(|v| 2.0 * v);
    let bits: Vec<bool> = (0..m * k).map(|_| rng.random()).collect();
    let (c1, c2) = (random_matrix(m, 1, rng), random_matrix(m, 1, rng));
    check_input(&logits, |t, l| {
        let (_, lp, h) = bernoulli_head(t, l, None, Some(&bits));
        let a = project(t, lp, &c1);
        let b = project(t, h, &c2);
        t.add(a, b)
    })
}

fn categorical_case(rng: &mut SimRng) -> f64 {
    let segments = rng.random_range(1..5);
    let mut offsets = vec![0];
    for _ in 0..segments {
        let last = *offsets.last().expect("nonempty");
        offsets.push(last + rng.random_range(1..5));
    }
    let total = *offsets.last().expect("nonempty");
    let picks: Vec<usize> = offsets.windows(2).map(|w| rng.random_range(0..w[1] - w[0])).collect();
    let scores = random_matrix(total, 1, rng).mapv(|v| 2.0 * v);
    let (c1, c2) = (random_matrix(segments, 1, rng), random_matrix(segments, 1, rng));
    let offsets = Arc::new(offsets);
    check_input(&scores, |t, s| {
        let (_, lp, h) = categorical_head(t, s, offsets.clone(), None, Some(&picks));
        let a = project(t, lp, &c1);
        let b = project(t, h, &c2);
        t.add(a, b)
    })
}

fn critic_case(rng: &mut SimRng) -> f64 {
    let n = rng.random_range(2..7);
    let g = random_graph(n, 0.3, rng);
    let cfg = CriticConfig {
        obs_dim: rng.random_range(1..4),
        hidden: rng.random_range(2..5),
        layers: rng.random_range(0..3),
        pooled: rng.random::<f64>() < 0.25,
    };
    let mut critic = GraphCritic::new(cfg, rng.random()).expect("valid config");
    jitter(critic.params_mut(), rng);
    let agents = AgentGraph::new(&g);
    let obs = Observation::plain(random_matrix(n, cfg.obs_dim, rng));
    let seed: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let input = CriticInput { obs: &obs, agents: &agents };
    let analytic = critic.value_vjp(&input, &seed).expect("dims agree");
    let x0 = critic.params().to_vec();
    fd_error(&analytic, &x0, |x| {
        critic.params_mut().copy_from_slice(x);
        let input = CriticInput { obs: &obs, agents: &agents };
        let v = critic.values(&input).expect("dims agree");
        v.iter().zip(&seed).map(|(a, b)| a * b).sum()
    })
}

fn actor_instance(head: ActorHead, rng: &mut SimRng) -> (LdGnnActor, Observation, InfluenceGraph) {
    let n = rng.random_range(2..6);
    let nodes = random_graph(n, 0.5, rng);
    let obs_dim = rng.random_range(1..4);
    let cfg = ActorConfig {
        head,
        gate: GateMode::Learned,
        obs_dim,
        memory_dim: rng.random_range(2..5),
        edge_dim: rng.random_range(1..4),
        hidden: rng.random_range(2..5),
    };
    let actor = LdGnnActor::new(cfg, rng.random()).expect("valid config");
    let features = random_matrix(n, obs_dim, rng);
    match head {
        ActorHead::EdgeGates => {
            let eg = edge_transform_with_self_edges(&nodes);
            let agents = eg.influence_graph();
            let obs = Observation {
                features: Array2::zeros((eg.len(), 1)),
                choices: None,
                comm: Some(CommView {
                    graph: Arc::new(nodes),
                    node_features: features,
                    agent_edges: Arc::new(eg.agent_edges.clone()),
                }),
            };
            (actor, obs, agents)
        }
        ActorHead::Choice { candidate_dim } => {
            let mut offsets = vec![0];
            for _ in 0..n {
                let last = *offsets.last().expect("nonempty");
                offsets.push(last + rng.random_range(1..4));
            }
            let total = *offsets.last().expect("nonempty");
            let obs = Observation {
                features,
                choices: Some(ChoiceSet {
                    offsets,
                    features: random_matrix(total, candidate_dim, rng),
                }),
                comm: None,
            };
            (actor, obs, nodes)
        }
        ActorHead::Bits { .. } => (actor, Observation::plain(features), nodes),
    }
}

fn actor_case(head: ActorHead, rng: &mut SimRng) -> f64 {
    let (mut actor, obs, graph) = actor_instance(head, rng);
    jitter(actor.store_mut().values_mut(), rng);
    let mut state = actor.initial_state(&obs, &graph).expect("dims agree");
    state.node_memory.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    state.edge_memory.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    let mut sample_rng = stream(rng.random(), "gradcheck", 0);
    let first = actor.step(&obs, &graph, &state, &mut sample_rng).expect("valid step");
    let decision = first.decision.clone();
    let agents = first.log_probs.len();
    let adv: Vec<f64> = (0..agents).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (c_r, c_h, c_m) = (rng.random_range(0.1..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let mut trace = actor.evaluate(&obs, &graph, &state, &decision).expect("valid step");
    let analytic = trace.gain_gradient(actor.store().len(), &adv, c_r, c_h, c_m);
    let x0 = actor.store().values().to_vec();
    fd_error(&analytic, &x0, |x| {
        actor.store_mut().values_mut().copy_from_slice(x);
        let tr = actor.evaluate(&obs, &graph, &state, &decision).expect("valid step");
        let pg: f64 = tr.log_probs.iter().zip(&adv).map(|(l, a)| l * a).sum();
        let h: f64 = tr.tape.value(tr.entropy).sum();
        c_r * pg + c_h * h + c_m * tr.tape.scalar(tr.gate_mass)
    })
}

/// Run every gradient check on `instances` random instances each.
pub fn gradient_suite(instances: usize, seed: u64) -> Vec<GradReport> {
    type Case = fn(&mut SimRng) -> f64;
    let cases: [(&'static str, Case); 10] = [
        ("mlp_forward", mlp_case),
        ("gate_probabilities", gate_case),
        ("message_pass", message_case),
        ("memory_update", memory_case),
        ("output_head_bits", bits_case),
        ("output_head_categorical", categorical_case),
        ("critic_forward", critic_case),
        ("actor_bits", |r| actor_case(ActorHead::Bits { bits: 2 }, r)),
        ("actor_choice", |r| actor_case(ActorHead::Choice { candidate_dim: 2 }, r)),
        ("actor_edge_gates", |r| actor_case(ActorHead::EdgeGates, r)),
    ];
    cases
        .iter()
        .enumerate()
        .map(|(k, &(op, case))| {
            let mut rng = stream(seed, op, k as u64);
            let max_rel_err = (0..instances).map(|_| case(&mut rng)).fold(0.0, f64::max);
            GradReport {
                op,
                instances,
                max_rel_err,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = finite_difference(&[1.0, -2.0], STEP, |x| x[0] * x[0] + 3.0 * x[1]);
        assert!(relative_error(&g, &[2.0, 3.0]) < 1e-9);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn suite_passes() {
        for r in gradient_suite(3, 11) {
            assert!(r.max_rel_err < 1e-4, "{}: {}", r.op, r.max_rel_err);
        }
    }
}
