use rayon::prelude::*;

use super::Da2cError;
use crate::approx::{Critic, CriticInput, Direction, LdGnnActor, Optimizer, StepTrace};

/// Outcome of one parameter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    /// Loss (critic) or surrogate gain (actor) before the update.
    pub value: f64,
    /// Set when the gradient was non-finite and the update was skipped.
    pub flagged: bool,
}

/// TD loss `n⁻¹‖y − V(S)‖²` and its semi-gradient, with the target `y`
/// held constant.
pub fn critic_loss_gradient(
    critic: &dyn Critic,
    input: &CriticInput<'_>,
    target: &[f64],
) -> Result<(f64, Vec<f64>), Da2cError> {
    let n = target.len() as f64;
    let mut loss = 0.0;
    let (values, grad) = critic.value_and_vjp(input, &mut |v: &[f64]| {
        let delta: Vec<f64> = target.iter().zip(v).map(|(y, v)| y - v).collect();
        loss = delta.iter().map(|d| d * d).sum::<f64>() / n;
        delta.iter().map(|d| -2.0 * d / n).collect()
    })?;
    if values.len() != target.len() {
        return Err(Da2cError::Dimension {
            expected: values.len(),
            got: target.len(),
        });
    }
    Ok((loss, grad))
}

/// Apply `params ± lr·grad` unless the gradient is non-finite.
pub fn apply_gradient(params: &mut [f64], grad: &[f64], lr: f64, optimizer: &mut Optimizer, dir: Direction) -> bool {
    if grad.iter().any(|g| !g.is_finite()) {
        return false;
    }
    optimizer.step(params, grad, lr, dir);
    true
}

/// One semi-gradient descent step on the mean TD loss of a batch of
/// `(input, target)` samples.
pub fn critic_step(
    critic: &mut dyn Critic,
    samples: &[(CriticInput<'_>, Vec<f64>)],
    c_v: f64,
    optimizer: &mut Optimizer,
) -> Result<UpdateReport, Da2cError> {
    if samples.is_empty() {
        return Ok(UpdateReport {
            value: 0.0,
            flagged: false,
        });
    }
    let shared: &dyn Critic = critic;
    let parts: Vec<(f64, Vec<f64>)> = samples
        .par_iter()
        .map(|(input, target)| critic_loss_gradient(shared, input, target))
        .collect::<Result<_, _>>()?;
    let scale = 1.0 / samples.len() as f64;
    let mut grad = vec![0.0; critic.params().len()];
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l * scale;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b * scale;
        }
    }
    let applied = loss.is_finite() && apply_gradient(critic.params_mut(), &grad, c_v, optimizer, Direction::Descend);
    Ok(UpdateReport {
        value: loss,
        flagged: !applied,
    })
}

/// Scalings of the surrogate gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCoefficients {
    pub c_r: f64,
    pub c_h: f64,
    pub c_m: f64,
}

/// `J_t = c_r Σ_i logπ_i G_i + c_h Σ_i H_i + c_m Σ_e λ_e` at the recorded step.
pub fn step_gain(trace: &StepTrace, advantages: &[f64], coeffs: &GainCoefficients) -> f64 {
    let pg: f64 = trace.log_probs.iter().zip(advantages).map(|(l, g)| l * g).sum();
    let h: f64 = trace.tape.value(trace.entropy).sum();
    let mass = trace.tape.value(trace.gate_mass)[[0, 0]];
    coeffs.c_r * pg + coeffs.c_h * h + coeffs.c_m * mass
}

/// `J = M⁻¹ Σ_t J_t` and its gradient over one rollout of `M` traces.
pub fn actor_gain_gradient(
    n_params: usize,
    traces: &mut [StepTrace],
    advantages: &[Vec<f64>],
    coeffs: &GainCoefficients,
) -> Result<(f64, Vec<f64>), Da2cError> {
    if traces.len() != advantages.len() {
        return Err(Da2cError::Window {
            expected: traces.len(),
            got: advantages.len(),
        });
    }
    let m = traces.len().max(1) as f64;
    let mut gain = 0.0;
    let mut grad = vec![0.0; n_params];
    for (trace, adv) in traces.iter_mut().zip(advantages) {
        if adv.len() != trace.log_probs.len() {
            return Err(Da2cError::Dimension {
                expected: trace.log_probs.len(),
                got: adv.len(),
            });
        }
        gain += step_gain(trace, adv, coeffs) / m;
        let g = trace.gain_gradient(n_params, adv, coeffs.c_r, coeffs.c_h, coeffs.c_m);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b / m;
        }
    }
    Ok((gain, grad))
}

/// `θ ← θ + c_j ∇_θ J` with the advantages treated as constants.
pub fn actor_step(
    actor: &mut LdGnnActor,
    traces: &mut [StepTrace],
    advantages: &[Vec<f64>],
    coeffs: &GainCoefficients,
    c_j: f64,
    optimizer: &mut Optimizer,
) -> Result<UpdateReport, Da2cError> {
    let n = actor.store().len();
    let (gain, grad) = actor_gain_gradient(n, traces, advantages, coeffs)?;
    let applied = apply_gradient(actor.store_mut().values_mut(), &grad, c_j, optimizer, Direction::Ascend);
    Ok(UpdateReport {
        value: gain,
        flagged: !applied,
    })
}
