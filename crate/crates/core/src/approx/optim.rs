use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `θ ← θ ± lr · g`.
    #[default]
    Sgd,
    /// Bias-corrected adaptive moments with `β = (0.9, 0.999)`, `ε = 1e-8`:
    /// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
    /// `θ ← θ ± lr · m̂ / (√v̂ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam {
                m: vec![0.0; len],
                v: vec![0.0; len],
                t: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, dir: Direction) {
        let sign = match dir {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        };
        match self {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p += sign * lr * g;
                }
            }
            Optimizer::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - BETA1.powi(*t);
                let c2 = 1.0 - BETA2.powi(*t);
                for k in 0..params.len() {
                    m[k] = BETA1 * m[k] + (1.0 - BETA1) * grad[k];
                    v[k] = BETA2 * v[k] + (1.0 - BETA2) * grad[k] * grad[k];
                    params[k] += sign * lr * (m[k] / c1) / ((v[k] / c2).sqrt() + EPS);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_descends() {
        let mut p = vec![1.0, -1.0];
        Optimizer::new(OptimizerKind::Sgd, 2).step(&mut p, &[2.0, -4.0], 0.5, Direction::Descend);
        assert_eq!(p, vec![0.0, 1.0]);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p = vec![0.0; 3];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 3);
        opt.step(&mut p, &[1e-3, -5.0, 0.0], 0.1, Direction::Ascend);
        assert!((p[0] - 0.1).abs() < 1e-5);
        assert!((p[1] + 0.1).abs() < 1e-9);
        assert_eq!(p[2], 0.0);
    }
}
