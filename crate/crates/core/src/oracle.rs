//! Exact and Monte Carlo evaluation of the global value, the local value and
//! the diffusion value function, plus numerical checks of their properties.
//!
//! Every value here uses the shifted discount: the reward at time `t` is
//! weighted by `γ^{t+1}` (or `Γ^{t+1}`).

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::gmdp::{global_reward, rollout, EnvError, GmdpEnvironment, JointPolicy};
use crate::graph::{DiffusionOperator, GraphError, InfluenceGraph};
use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("transition matrix is not row-stochastic")]
    NotStochastic,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("fixed-point iteration did not converge in {0} sweeps")]
    NoConvergence(usize),
    #[error("at least one episode is required")]
    ZeroEpisodes,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

const MAX_SWEEPS: usize = 1_000_000;

/// Result of fixed-point iteration on an enumerated chain.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    /// `S × n`; row `s` is `V_D(s)`.
    pub values: Array2<f64>,
    /// `sup_S ‖V_{k+1}(S) − V_k(S)‖₁` for every sweep.
    pub residuals: Vec<f64>,
}

fn check_chain(p: &Array2<f64>, r: &Array2<f64>, op: &DiffusionOperator) -> Result<(), OracleError> {
    let s = p.nrows();
    if p.ncols() != s || r.nrows() != s {
        return Err(OracleError::Dimension(format!(
            "P is {}x{}, R has {} rows",
            p.nrows(),
            p.ncols(),
            r.nrows()
        )));
    }
    if r.ncols() != op.n() {
        return Err(OracleError::Dimension(format!("R has {} agents, Γ has {}", r.ncols(), op.n())));
    }
    for row in p.rows() {
        if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (row.sum() - 1.0).abs() > 1e-9 {
            return Err(OracleError::NotStochastic);
        }
    }
    Ok(())
}

/// `sup_S ‖·‖₁` over the rows of an `S × n` array.
pub fn sup_l1(x: &Array2<f64>) -> f64 {
    x.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn apply_rows(op: &DiffusionOperator, x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    let mut buf = vec![0.0; op.n()];
    for (src, mut dst) in x.rows().into_iter().zip(out.rows_mut()) {
        let v = src.to_vec();
        op.apply_into(&v, &mut buf).expect("row length equals n");
        dst.assign(&ndarray::ArrayView1::from(&buf[..]));
    }
    out
}

/// The Bellman operator `(𝒯V)(s) = Γ[R(s) + Σ_{s'} P(s, s') V(s')]`.
pub fn bellman_apply(p: &Array2<f64>, r: &Array2<f64>, op: &DiffusionOperator, v: &Array2<f64>) -> Array2<f64> {
    apply_rows(op, &(r + &p.dot(v)))
}

/// Iterate the Bellman operator from zero until successive iterates differ
/// by less than `tol` in `sup_S ‖·‖₁`.
pub fn dvf_fixed_point(
    p: &Array2<f64>,
    r: &Array2<f64>,
    op: &DiffusionOperator,
    tol: f64,
) -> Result<FixedPoint, OracleError> {
    check_chain(p, r, op)?;
    let mut v = Array2::zeros(r.raw_dim());
    let mut residuals = Vec::new();
    for _ in 0..MAX_SWEEPS {
        let next = bellman_apply(p, r, op, &v);
        let res = sup_l1(&(&next - &v));
        residuals.push(res);
        v = next;
        if !res.is_finite() {
            break;
        }
        if res < tol {
            return Ok(FixedPoint { values: v, residuals });
        }
    }
    Err(OracleError::NoConvergence(residuals.len()))
}

/// Exact DVF of a Markov chain with per-state rewards.
pub fn dvf_exact_markov(
    p: &Array2<f64>,
    r: &Array2<f64>,
    op: &DiffusionOperator,
    tol: f64,
) -> Result<Array2<f64>, OracleError> {
    dvf_fixed_point(p, r, op, tol).map(|f| f.values)
}

/// Truncated series `Σ_{t<terms} Γ^{t+1} E[R^t | S^0 = s]`.
///
/// `Γ` acts on the agent axis and `P` on the state axis, so the terms obey
/// `y_{t+1} = P Γ y_t` with `y_0 = Γ R`.
pub fn dvf_neumann_markov(
    p: &Array2<f64>,
    r: &Array2<f64>,
    op: &DiffusionOperator,
    terms: usize,
) -> Result<Array2<f64>, OracleError> {
    check_chain(p, r, op)?;
    let mut acc = Array2::zeros(r.raw_dim());
    let mut y = apply_rows(op, r);
    for _ in 0..terms {
        acc += &y;
        y = p.dot(&apply_rows(op, &y));
    }
    Ok(acc)
}

/// Smallest `T` with `γ^{T+1} r_max / (1 − γ) ≤ target`.
pub fn horizon_for_tail(gamma: f64, r_max: f64, target: f64) -> usize {
    let mut t = 0;
    while tail_bound(gamma, r_max, t) > target && t < 100_000 {
        t += 1;
    }
    t
}

/// `γ^{T+1} r_max / (1 − γ)`.
pub fn tail_bound(gamma: f64, r_max: f64, horizon: usize) -> f64 {
    gamma.powi(horizon as i32 + 1) * r_max.abs() / (1.0 - gamma)
}

/// `Σ_t Γ^{t+1} R^t` for one reward trajectory, accumulated by Horner's rule.
pub fn trajectory_dvf(op: &DiffusionOperator, rewards: &[Vec<f64>]) -> Result<Vec<f64>, GraphError> {
    let mut acc = vec![0.0; op.n()];
    let mut sum = vec![0.0; op.n()];
    for r in rewards.iter().rev() {
        if r.len() != op.n() {
            return Err(GraphError::DimensionMismatch {
                expected: op.n(),
                got: r.len(),
            });
        }
        sum.iter_mut().zip(r.iter().zip(&acc)).for_each(|(s, (a, b))| *s = a + b);
        op.apply_into(&sum, &mut acc)?;
    }
    Ok(acc)
}

/// `Σ_t γ^{t+1} r^t` with `r^t` the mean of `R^t`.
pub fn trajectory_global(gamma: f64, rewards: &[Vec<f64>]) -> f64 {
    let mut disc = gamma;
    let mut total = 0.0;
    for r in rewards {
        total += disc * global_reward(r);
        disc *= gamma;
    }
    total
}

/// `Σ_t n⁻¹ γ^{t+1} Σ_{j ∈ N⃗ᵢ^{t+1}} R_j^t` for every agent `i`.
pub fn trajectory_local(graph: &InfluenceGraph, gamma: f64, rewards: &[Vec<f64>]) -> Result<Vec<f64>, GraphError> {
    let n = graph.n();
    let dist: Vec<Vec<Option<usize>>> = (0..n).map(|i| graph.distances_from(i)).collect::<Result<_, _>>()?;
    let mut out = vec![0.0; n];
    let mut disc = gamma;
    for (t, r) in rewards.iter().enumerate() {
        if r.len() != n {
            return Err(GraphError::DimensionMismatch { expected: n, got: r.len() });
        }
        for (i, row) in dist.iter().enumerate() {
            let reach: f64 = row
                .iter()
                .zip(r)
                .filter(|(d, _)| d.is_some_and(|d| d <= t + 1))
                .map(|(_, rj)| rj)
                .sum();
            out[i] += disc * reach / n as f64;
        }
        disc *= gamma;
    }
    Ok(out)
}

/// `|n⁻¹ 1ᵀ Σ_t Γ^{t+1} R^t − Σ_t γ^{t+1} r^t|` on one trajectory.
pub fn mean_return_residual(op: &DiffusionOperator, rewards: &[Vec<f64>]) -> Result<f64, GraphError> {
    let dvf = trajectory_dvf(op, rewards)?;
    Ok((global_reward(&dvf) - trajectory_global(op.gamma(), rewards)).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub episodes: usize,
}

fn summarise(samples: &[Vec<f64>]) -> Estimate {
    let k = samples.len() as f64;
    let n = samples[0].len();
    let mean: Vec<f64> = (0..n).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / k).collect();
    let std_err = (0..n)
        .map(|i| {
            if samples.len() < 2 {
                return 0.0;
            }
            let var = samples.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        })
        .collect();
    Estimate {
        mean,
        std_err,
        episodes: samples.len(),
    }
}

fn reward_trajectories<E, P>(
    env: &mut E,
    policy: &mut P,
    episodes: usize,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Vec<Vec<Vec<f64>>>, OracleError>
where
    E: GmdpEnvironment + ?Sized,
    P: JointPolicy + ?Sized,
{
    if episodes == 0 {
        return Err(OracleError::ZeroEpisodes);
    }
    (0..episodes)
        .map(|_| {
            env.reset(rng);
            let tr = rollout(env, policy, horizon, rng)?;
            Ok(tr.into_iter().map(|t| t.rewards).collect())
        })
        .collect()
}

/// Monte Carlo DVF over `episodes` fresh resets, truncated at `horizon`.
pub fn dvf_monte_carlo<E, P>(
    env: &mut E,
    policy: &mut P,
    op: &DiffusionOperator,
    episodes: usize,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Estimate, OracleError>
where
    E: GmdpEnvironment + ?Sized,
    P: JointPolicy + ?Sized,
{
    let trajs = reward_trajectories(env, policy, episodes, horizon, rng)?;
    let samples = trajs
        .iter()
        .map(|tr| trajectory_dvf(op, tr))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarise(&samples))
}

/// Monte Carlo local value, truncated at `horizon`.
pub fn local_value_monte_carlo<E, P>(
    env: &mut E,
    policy: &mut P,
    graph: &InfluenceGraph,
    gamma: f64,
    episodes: usize,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<Estimate, OracleError>
where
    E: GmdpEnvironment + ?Sized,
    P: JointPolicy + ?Sized,
{
    let trajs = reward_trajectories(env, policy, episodes, horizon, rng)?;
    let samples = trajs
        .iter()
        .map(|tr| trajectory_local(graph, gamma, tr))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarise(&samples))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueReport {
    pub dvf: Vec<f64>,
    pub global: f64,
    pub local: Vec<f64>,
    pub horizon: usize,
    pub tail_bound: f64,
}

/// DVF, global and local values estimated from one shared trajectory set.
pub fn value_report<E, P>(
    env: &mut E,
    policy: &mut P,
    op: &DiffusionOperator,
    graph: &InfluenceGraph,
    episodes: usize,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<ValueReport, OracleError>
where
    E: GmdpEnvironment + ?Sized,
    P: JointPolicy + ?Sized,
{
    let trajs = reward_trajectories(env, policy, episodes, horizon, rng)?;
    let mut dvf = Vec::with_capacity(trajs.len());
    let mut local = Vec::with_capacity(trajs.len());
    let mut global = 0.0;
    let mut r_max: f64 = 0.0;
    for tr in &trajs {
        dvf.push(trajectory_dvf(op, tr)?);
        local.push(trajectory_local(graph, op.gamma(), tr)?);
        global += trajectory_global(op.gamma(), tr);
        r_max = tr.iter().flatten().fold(r_max, |m, r| m.max(r.abs()));
    }
    Ok(ValueReport {
        dvf: summarise(&dvf).mean,
        global: global / trajs.len() as f64,
        local: summarise(&local).mean,
        horizon,
        tail_bound: tail_bound(op.gamma(), r_max, horizon),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanReturnCheck {
    pub passed: bool,
    pub residual: f64,
}

/// Worst per-trajectory residual of the averaging identity.
pub fn check_mean_return<E, P>(
    env: &mut E,
    policy: &mut P,
    op: &DiffusionOperator,
    episodes: usize,
    horizon: usize,
    rng: &mut SimRng,
) -> Result<MeanReturnCheck, OracleError>
where
    E: GmdpEnvironment + ?Sized,
    P: JointPolicy + ?Sized,
{
    let trajs = reward_trajectories(env, policy, episodes, horizon, rng)?;
    let mut residual: f64 = 0.0;
    for tr in &trajs {
        residual = residual.max(mean_return_residual(op, tr)?);
    }
    Ok(MeanReturnCheck {
        passed: residual < 1e-10,
        residual,
    })
}

/// A random row-stochastic matrix.
pub fn random_stochastic(states: usize, rng: &mut SimRng) -> Array2<f64> {
    let mut p = Array2::from_shape_fn((states, states), |_| rng.random::<f64>() + 1e-3);
    for mut row in p.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    p
}

/// Largest observed `‖𝒯V − 𝒯W‖ / ‖V − W‖` in `sup_S ‖·‖₁` over random
/// chains and value pairs.
pub fn check_contraction(op: &DiffusionOperator, trials: usize, rng: &mut SimRng) -> f64 {
    let n = op.n();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let states = rng.random_range(1..=5);
        let p = random_stochastic(states, rng);
        let r = Array2::from_shape_fn((states, n), |_| rng.random_range(-1.0..1.0));
        let scale = rng.random_range(0.1..10.0);
        let v = Array2::from_shape_fn((states, n), |_| scale * rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((states, n), |_| scale * rng.random_range(-1.0..1.0));
        let den = sup_l1(&(&v - &w));
        if den == 0.0 {
            continue;
        }
        let num = sup_l1(&(bellman_apply(&p, &r, op, &v) - bellman_apply(&p, &r, op, &w)));
        worst = worst.max(num / den);
    }
    worst
}

/// Largest ratio between successive fixed-point residuals, ignoring sweeps
/// whose residual is already at rounding level.
pub fn residual_decay(residuals: &[f64]) -> f64 {
    residuals
        .windows(2)
        .filter(|w| w[0] > 1e-8)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceDemo {
    /// Entry `T − 1` is `Σ_{t<T} Σ_{k≤t+1} (d−1)^k γ^{t+1}`.
    pub local: Vec<f64>,
    /// Entry `T − 1` is `Σ_{t<T} γ^{t+1}`.
    pub dvf: Vec<f64>,
}

impl DivergenceDemo {
    /// First horizon `T` at which the local partial sum exceeds `threshold`.
    pub fn local_exceeds(&self, threshold: f64) -> Option<usize> {
        self.local.iter().position(|&s| s > threshold).map(|k| k + 1)
    }
}

/// Partial sums of the local value and the DVF on a self-connected infinite
/// tree of degree `d` with unit rewards.
pub fn divergence_demo(d: usize, gamma: f64, horizon: usize) -> DivergenceDemo {
    assert!(d >= 2, "degree must be at least 2");
    let branch = (d - 1) as f64 * gamma;
    let mut local = Vec::with_capacity(horizon);
    let mut dvf = Vec::with_capacity(horizon);
    // inner_t = γ^{t+1} Σ_{k≤t+1} (d−1)^k satisfies
    // inner_{t+1} = γ inner_t + ((d−1)γ)^{t+2}.
    let mut inner = gamma * (1.0 + (d - 1) as f64);
    let mut power = branch;
    let mut disc = gamma;
    let (mut l, mut v) = (0.0, 0.0);
    for _ in 0..horizon {
        l += inner;
        v += disc;
        local.push(l);
        dvf.push(v);
        power *= branch;
        inner = gamma * inner + power;
        disc *= gamma;
    }
    DivergenceDemo { local, dvf }
}

/// `Some(mean(u) > mean(v))` when `u` dominates `v` componentwise with at
/// least one strict inequality, `None` otherwise.
pub fn alignment(u: &[f64], v: &[f64]) -> Option<bool> {
    let weak = u.iter().zip(v).all(|(a, b)| a >= b);
    let strict = u.iter().zip(v).any(|(a, b)| a > b);
    (weak && strict).then(|| global_reward(u) > global_reward(v))
}

/// Column means of an `S × n` value table weighted by a state distribution.
pub fn expected_values(values: &Array2<f64>, dist: &[f64]) -> Vec<f64> {
    let w = ndarray::ArrayView1::from(dist);
    values
        .axis_iter(Axis(1))
        .map(|col| col.dot(&w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmdp::{MarkovChainEnv, UniformPolicy};
    use crate::rng::seeded;
    use ndarray::array;

    fn single() -> (InfluenceGraph, DiffusionOperator) {
        let g = InfluenceGraph::with_self_loops(1, &[]).unwrap();
        let op = DiffusionOperator::new(&g, 0.9).unwrap();
        (g, op)
    }

    #[test]
    fn single_node_constant_reward() {
        let (_, op) = single();
        let v = dvf_exact_markov(&array![[1.0]], &array![[1.0]], &op, 1e-12).unwrap();
        assert!((v[[0, 0]] - 9.0).abs() < 1e-9);
    }

    #[test]
    fn zero_rewards_give_zero() {
        let g = InfluenceGraph::undirected(3, &[(0, 1), (1, 2)]).unwrap();
        let op = DiffusionOperator::new(&g, 0.7).unwrap();
        let p = array![[0.5, 0.5], [0.1, 0.9]];
        let v = dvf_exact_markov(&p, &Array2::zeros((2, 3)), &op, 1e-9).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn regular_graph_constant_reward() {
        // A cycle with self-loops is 3-regular, so Γ1 = γ1.
        let n = 7;
        let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let g = InfluenceGraph::undirected(n, &pairs).unwrap();
        let op = DiffusionOperator::new(&g, 0.5).unwrap();
        let v = dvf_exact_markov(&array![[1.0]], &Array2::ones((1, n)), &op, 1e-13).unwrap();
        for x in v.iter() {
            assert!((x - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn neumann_agrees_with_fixed_point() {
        let g = InfluenceGraph::with_self_loops(3, &[(0, 1), (1, 2), (2, 0), (0, 2)]).unwrap();
        let op = DiffusionOperator::new(&g, 0.8).unwrap();
        let p = array![[0.2, 0.5, 0.3], [0.0, 0.4, 0.6], [0.9, 0.05, 0.05]];
        let r = array![[1.0, -1.0, 0.5], [0.0, 2.0, 0.0], [0.3, 0.3, -0.7]];
        let fp = dvf_exact_markov(&p, &r, &op, 1e-12).unwrap();
        let neu = dvf_neumann_markov(&p, &r, &op, 200).unwrap();
        assert!(sup_l1(&(fp - neu)) < 1e-9);
    }

    #[test]
    fn rejects_non_stochastic() {
        let (_, op) = single();
        assert_eq!(
            dvf_exact_markov(&array![[0.5]], &array![[1.0]], &op, 1e-9).unwrap_err(),
            OracleError::NotStochastic
        );
    }

    #[test]
    fn trajectory_dvf_matches_powers() {
        let g = InfluenceGraph::with_self_loops(3, &[(0, 1), (1, 2)]).unwrap();
        let op = DiffusionOperator::new(&g, 0.6).unwrap();
        let rs = vec![vec![1.0, 0.0, 2.0], vec![-1.0, 0.5, 0.0], vec![0.0, 0.0, 3.0]];
        let direct = rs.iter().enumerate().fold(vec![0.0; 3], |acc, (t, r)| {
            let term = op.power_apply(r, t + 1).unwrap();
            acc.iter().zip(&term).map(|(a, b)| a + b).collect()
        });
        let horner = trajectory_dvf(&op, &rs).unwrap();
        for (a, b) in direct.iter().zip(&horner) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(mean_return_residual(&op, &rs).unwrap() < 1e-14);
    }

    #[test]
    fn local_value_on_small_cases() {
        // One node: local value equals global value.
        let g1 = InfluenceGraph::with_self_loops(1, &[]).unwrap();
        let rs = vec![vec![2.0], vec![1.0]];
        let l = trajectory_local(&g1, 0.5, &rs).unwrap();
        assert_eq!(l[0], trajectory_global(0.5, &rs));

        // Isolated agent counts only its own reward.
        let g2 = InfluenceGraph::with_self_loops(2, &[(0, 1)]).unwrap();
        let rs = vec![vec![1.0, 4.0]];
        let l = trajectory_local(&g2, 0.5, &rs).unwrap();
        assert_eq!(l[1], 0.5 * 4.0 / 2.0);
        assert_eq!(l[0], 0.5 * 5.0 / 2.0);
    }

    #[test]
    fn local_value_three_chain_by_hand() {
        // 0→1→2 with self-loops, γ = 0.5, R ≡ 1, t ≤ 3.
        let g = InfluenceGraph::with_self_loops(3, &[(0, 1), (1, 2)]).unwrap();
        let rs = vec![vec![1.0; 3]; 4];
        let l = trajectory_local(&g, 0.5, &rs).unwrap();
        // Node 0 reaches {0,1} at t=0 and {0,1,2} afterwards.
        let expect0 = (0.5 * 2.0 + 0.25 * 3.0 + 0.125 * 3.0 + 0.0625 * 3.0) / 3.0;
        let expect2 = (0.5 + 0.25 + 0.125 + 0.0625) / 3.0;
        assert!((l[0] - expect0).abs() < 1e-15);
        assert!((l[2] - expect2).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_matches_exact_on_stub() {
        let g = InfluenceGraph::undirected(2, &[(0, 1)]).unwrap();
        let op = DiffusionOperator::new(&g, 0.9).unwrap();
        let mut env = MarkovChainEnv::constant(g, 1.0);
        let h = horizon_for_tail(0.9, 1.0, 1e-6);
        let est = dvf_monte_carlo(&mut env, &mut UniformPolicy, &op, 3, h, &mut seeded(1)).unwrap();
        for m in est.mean {
            assert!((m - 9.0).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_episodes_rejected() {
        let (g, op) = single();
        let mut env = MarkovChainEnv::constant(g, 1.0);
        let err = dvf_monte_carlo(&mut env, &mut UniformPolicy, &op, 0, 5, &mut seeded(0));
        assert_eq!(err.unwrap_err(), OracleError::ZeroEpisodes);
    }

    #[test]
    fn divergence_demo_shapes() {
        let demo = divergence_demo(3, 0.5, 60);
        assert!(demo.local.windows(2).all(|w| w[1] > w[0]));
        assert!((demo.dvf[59] - 1.0).abs() < 1e-9);
        assert_eq!(divergence_demo(5, 0.3, 1).dvf[0], 0.3);
        let conv = divergence_demo(2, 0.4, 400);
        // (d−1)γ < 1: inner terms are (t+2)γ^{t+1}, which sum to a finite limit.
        assert!((conv.local[399] - conv.local[398]).abs() < 1e-12);
    }

    #[test]
    fn divergence_demo_matches_direct_sum() {
        let demo = divergence_demo(4, 0.3, 8);
        let mut direct = 0.0;
        for t in 0..8 {
            for k in 0..=t + 1 {
                direct += 3f64.powi(k as i32) * 0.3f64.powi(t as i32 + 1);
            }
        }
        assert!((demo.local[7] - direct).abs() < 1e-12);
    }

    #[test]
    fn contraction_ratio_bounded() {
        let g = InfluenceGraph::with_self_loops(4, &[(0, 1), (1, 2), (3, 1), (2, 0)]).unwrap();
        for gamma in [0.5, 0.99] {
            let op = DiffusionOperator::new(&g, gamma).unwrap();
            assert!(check_contraction(&op, 50, &mut seeded(2)) <= gamma + 1e-12);
        }
    }

    #[test]
    fn alignment_cases() {
        assert_eq!(alignment(&[1.0, 2.0], &[1.0, 1.0]), Some(true));
        assert_eq!(alignment(&[1.0, 1.0], &[1.0, 1.0]), None);
        assert_eq!(alignment(&[0.0, 2.0], &[1.0, 1.0]), None);
    }
}
