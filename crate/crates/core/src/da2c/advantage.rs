use serde::{Deserialize, Serialize};

use super::Da2cError;
use crate::graph::{DiffusionOperator, InfluenceGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    /// Discount each unrolled step with `Γ`, so `W = 1` is the diffusion TD error.
    #[default]
    GammaOperator,
    /// Discount with the scalar `γᵏ`, as in the plain n-step return.
    GammaScalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvantageConfig {
    pub w: usize,
    #[serde(default)]
    pub mode: AdvantageMode,
}

impl Default for AdvantageConfig {
    fn default() -> Self {
        Self {
            w: 1,
            mode: AdvantageMode::GammaOperator,
        }
    }
}

impl AdvantageConfig {
    pub fn validate(&self) -> Result<(), Da2cError> {
        if self.w == 0 {
            return Err(Da2cError::Config("advantage horizon W must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), Da2cError> {
    if expected == got {
        Ok(())
    } else {
        Err(Da2cError::Dimension { expected, got })
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `Γ[R + V(S')]`, the diffusion Bellman target.
pub fn diffusion_target(op: &DiffusionOperator, rewards: &[f64], v_next: &[f64]) -> Result<Vec<f64>, Da2cError> {
    check_len(op.n(), rewards.len())?;
    check_len(op.n(), v_next.len())?;
    Ok(op.apply(&add(rewards, v_next))?)
}

/// `δ = Γ[R + V(S')] − V(S)`. `v_next` enters only through the target.
pub fn td_error(op: &DiffusionOperator, rewards: &[f64], v_now: &[f64], v_next: &[f64]) -> Result<Vec<f64>, Da2cError> {
    check_len(op.n(), v_now.len())?;
    let target = diffusion_target(op, rewards, v_next)?;
    Ok(sub(&target, v_now))
}

/// W-step advantage from the rewards `R^t … R^{t+W−1}`, the current values
/// and the bootstrap values at `t + W`.
pub fn n_step_advantage(
    cfg: &AdvantageConfig,
    op: &DiffusionOperator,
    window: &[Vec<f64>],
    v_t: &[f64],
    v_tw: &[f64],
) -> Result<Vec<f64>, Da2cError> {
    cfg.validate()?;
    if window.len() != cfg.w {
        return Err(Da2cError::Window {
            expected: cfg.w,
            got: window.len(),
        });
    }
    let n = op.n();
    check_len(n, v_t.len())?;
    check_len(n, v_tw.len())?;
    for r in window {
        check_len(n, r.len())?;
    }
    match cfg.mode {
        AdvantageMode::GammaOperator => {
            // Γ[R^t + Γ[R^{t+1} + … Γ[R^{t+W−1} + V^{t+W}]]] − V^t
            let mut acc = v_tw.to_vec();
            for r in window.iter().rev() {
                acc = diffusion_target(op, r, &acc)?;
            }
            Ok(sub(&acc, v_t))
        }
        AdvantageMode::GammaScalar => {
            let gamma = op.gamma();
            let mut acc = vec![0.0; n];
            let mut g = 1.0;
            for r in window {
                for (a, x) in acc.iter_mut().zip(r) {
                    *a += g * x;
                }
                g *= gamma;
            }
            Ok(acc.iter().zip(v_tw).zip(v_t).map(|((a, b), v)| a + g * b - v).collect())
        }
    }
}

/// Agent `i`'s share of the Bellman target, formed from its out-neighbours'
/// rewards, bootstrap values and in-degrees only.
pub fn distributed_td_target(graph: &InfluenceGraph, gamma: f64, rewards: &[f64], v_next: &[f64], i: usize) -> f64 {
    graph
        .out_neighbours(i)
        .iter()
        .map(|&j| gamma / graph.in_degree(j) as f64 * (rewards[j] + v_next[j]))
        .sum()
}

/// Which value estimate supplies the advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    /// Diffusion value function, trained on `Γ[R + V']`.
    Dvf,
    /// No critic; the truncated discounted global return.
    Rein,
    /// Independent critics on `R_i + γV_i'`.
    Ia2c,
    /// Critics on the out-neighbourhood reward sum `Σ_{j∈N⃗ᵢ} R_j + γV_i'`.
    Na2c,
    /// One pooled critic on `r + γV'`, broadcast to every agent.
    Maa2c,
}

impl CriticKind {
    pub fn uses_critic(self) -> bool {
        self != CriticKind::Rein
    }

    pub fn pooled(self) -> bool {
        self == CriticKind::Maa2c
    }

    pub fn name(self) -> &'static str {
        match self {
            CriticKind::Dvf => "dvf",
            CriticKind::Rein => "rein",
            CriticKind::Ia2c => "ia2c",
            CriticKind::Na2c => "na2c",
            CriticKind::Maa2c => "maa2c",
        }
    }
}

/// One-step critic target for every kind that learns a critic.
pub fn critic_target(
    kind: CriticKind,
    op: &DiffusionOperator,
    graph: &InfluenceGraph,
    rewards: &[f64],
    v_next: &[f64],
) -> Result<Vec<f64>, Da2cError> {
    let n = op.n();
    check_len(n, rewards.len())?;
    check_len(n, v_next.len())?;
    check_len(n, graph.n())?;
    let gamma = op.gamma();
    match kind {
        CriticKind::Dvf => diffusion_target(op, rewards, v_next),
        CriticKind::Ia2c => Ok(rewards.iter().zip(v_next).map(|(r, v)| r + gamma * v).collect()),
        CriticKind::Na2c => Ok((0..n)
            .map(|i| graph.out_neighbours(i).iter().map(|&j| rewards[j]).sum::<f64>() + gamma * v_next[i])
            .collect()),
        CriticKind::Maa2c => {
            let r = crate::gmdp::global_reward(rewards);
            let v = v_next.iter().sum::<f64>() / n as f64;
            Ok(vec![r + gamma * v; n])
        }
        CriticKind::Rein => Err(Da2cError::Config("REINFORCE has no critic target".into())),
    }
}

/// `G^t = Σ_{k≥t} γ^{k−t} r^k` over a truncated rollout of global rewards.
pub fn discounted_returns(gamma: f64, rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn pair(gamma: f64) -> (InfluenceGraph, DiffusionOperator) {
        let g = InfluenceGraph::with_self_loops(2, &[(0, 1), (1, 0)]).unwrap();
        let op = DiffusionOperator::new(&g, gamma).unwrap();
        (g, op)
    }

    #[test]
    fn td_error_vanishes_at_the_fixed_point() {
        let g = InfluenceGraph::with_self_loops(1, &[]).unwrap();
        let op = DiffusionOperator::new(&g, 0.9).unwrap();
        let d = td_error(&op, &[1.0], &[9.0], &[9.0]).unwrap();
        assert!(d[0].abs() < 1e-12);
        assert_eq!(td_error(&op, &[0.0], &[0.0], &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn single_step_reductions() {
        let (_, op) = pair(0.8);
        let r = vec![1.0, -2.0];
        let (v, v1) = (vec![0.3, 0.1], vec![2.0, 0.5]);
        let operator = AdvantageConfig::default();
        let a = n_step_advantage(&operator, &op, &[r.clone()], &v, &v1).unwrap();
        assert_eq!(a, td_error(&op, &r, &v, &v1).unwrap());
        let scalar = AdvantageConfig {
            w: 1,
            mode: AdvantageMode::GammaScalar,
        };
        let a = n_step_advantage(&scalar, &op, &[r.clone()], &v, &v1).unwrap();
        for i in 0..2 {
            assert!((a[i] - (r[i] + 0.8 * v1[i] - v[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn operator_mode_unrolls_the_bellman_equation() {
        let (_, op) = pair(0.5);
        let cfg = AdvantageConfig {
            w: 2,
            mode: AdvantageMode::GammaOperator,
        };
        let window = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
        let a = n_step_advantage(&cfg, &op, &window, &[0.0, 0.0], &[4.0, 4.0]).unwrap();
        // Γ = 0.25 everywhere.
        let inner = [0.25 * (0.0 + 4.0 + 2.0 + 4.0); 2];
        let outer = 0.25 * (1.0 + inner[0] + 0.0 + inner[1]);
        assert!((a[0] - outer).abs() < 1e-14 && (a[1] - outer).abs() < 1e-14);
    }

    #[test]
    fn window_length_is_checked() {
        let (_, op) = pair(0.5);
        let cfg = AdvantageConfig {
            w: 2,
            mode: AdvantageMode::GammaScalar,
        };
        let err = n_step_advantage(&cfg, &op, &[vec![0.0; 2]], &[0.0; 2], &[0.0; 2]);
        assert!(matches!(err, Err(Da2cError::Window { expected: 2, got: 1 })));
        let zero = AdvantageConfig {
            w: 2,
            mode: AdvantageMode::GammaScalar,
        };
        let a = n_step_advantage(&zero, &op, &[vec![0.0; 2], vec![0.0; 2]], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(a, vec![0.0; 2]);
    }

    #[test]
    fn distributed_target_matches_the_operator() {
        let mut rng = seeded(3);
        for _ in 0..20 {
            let n = rng.random_range(1..8);
            let edges: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|_| rng.random_bool(0.3))
                .collect();
            let g = InfluenceGraph::with_self_loops(n, &edges).unwrap();
            let op = DiffusionOperator::new(&g, 0.9).unwrap();
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = diffusion_target(&op, &r, &v).unwrap();
            for i in 0..n {
                assert!((distributed_td_target(&g, 0.9, &r, &v, i) - y[i]).abs() < 1e-12);
            }
        }
        let single = InfluenceGraph::with_self_loops(1, &[]).unwrap();
        assert!((distributed_td_target(&single, 0.7, &[2.0], &[1.0], 0) - 2.1).abs() < 1e-15);
    }

    #[test]
    fn baseline_targets_on_two_agents() {
        // 0 → 1 only: agent 0 sees both rewards, agent 1 only its own.
        let g = InfluenceGraph::with_self_loops(2, &[(0, 1)]).unwrap();
        let op = DiffusionOperator::new(&g, 0.5).unwrap();
        let (r, v) = ([1.0, 3.0], [2.0, 4.0]);
        assert_eq!(critic_target(CriticKind::Ia2c, &op, &g, &r, &v).unwrap(), vec![2.0, 5.0]);
        assert_eq!(critic_target(CriticKind::Na2c, &op, &g, &r, &v).unwrap(), vec![5.0, 5.0]);
        assert_eq!(critic_target(CriticKind::Maa2c, &op, &g, &r, &v).unwrap(), vec![3.5, 3.5]);
        // Γ column 0: (0.5, 0); column 1: (0.25, 0.25).
        let dvf = critic_target(CriticKind::Dvf, &op, &g, &r, &v).unwrap();
        assert!((dvf[0] - (0.5 * 3.0 + 0.25 * 7.0)).abs() < 1e-15);
        assert!((dvf[1] - 0.25 * 7.0).abs() < 1e-15);
        assert!(critic_target(CriticKind::Rein, &op, &g, &r, &v).is_err());
    }

    #[test]
    fn returns_accumulate_backwards() {
        assert_eq!(discounted_returns(0.5, &[1.0, 2.0, 4.0]), vec![1.0 + 1.0 + 1.0, 2.0 + 2.0, 4.0]);
        assert!(discounted_returns(0.9, &[]).is_empty());
    }
}
