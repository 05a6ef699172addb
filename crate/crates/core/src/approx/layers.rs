use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use super::params::{ParamId, ParameterStore};
use super::tape::{RowMix, Tape, Var};
use crate::rng::SimRng;

/// Probabilities are kept inside `[PROB_EPS, 1 − PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-6;

/// `x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(store: &mut ParameterStore, rng: &mut SimRng, name: &str, inputs: usize, outputs: usize) -> Self {
        let w = store.add_glorot(&format!("{name}.w"), inputs, outputs, rng);
        let b = store.add_const(&format!("{name}.b"), 1, outputs, 0.0);
        Self {
            w,
            b: Some(b),
            inputs,
            outputs,
        }
    }

    pub fn without_bias(store: &mut ParameterStore, rng: &mut SimRng, name: &str, inputs: usize, outputs: usize) -> Self {
        let w = store.add_glorot(&format!("{name}.w"), inputs, outputs, rng);
        Self {
            w,
            b: None,
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let y = tape.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = tape.param(store, b);
                tape.add_bias(y, b)
            }
            None => y,
        }
    }
}

/// Two hidden ReLU layers and a linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(
        store: &mut ParameterStore,
        rng: &mut SimRng,
        name: &str,
        inputs: usize,
        hidden: usize,
        outputs: usize,
    ) -> Self {
        let dims = [inputs, hidden, hidden, outputs];
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, d)| Linear::new(store, rng, &format!("{name}.{k}"), d[0], d[1]))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Var {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h);
            if k < last {
                h = tape.relu(h);
            }
        }
        h
    }
}

/// Gated recurrent cell with update gate `u`, reset gate `r` and candidate
/// `c = tanh(x W_c + (r ⊙ h) U_c + b_c)`; the new state is
/// `(1 − u) ⊙ h + u ⊙ c`.
#[derive(Debug, Clone)]
pub struct Gru {
    wu: Linear,
    uu: Linear,
    wr: Linear,
    ur: Linear,
    wc: Linear,
    uc: Linear,
}

impl Gru {
    pub fn new(store: &mut ParameterStore, rng: &mut SimRng, name: &str, inputs: usize, state: usize) -> Self {
        Self {
            wu: Linear::new(store, rng, &format!("{name}.wu"), inputs, state),
            uu: Linear::without_bias(store, rng, &format!("{name}.uu"), state, state),
            wr: Linear::new(store, rng, &format!("{name}.wr"), inputs, state),
            ur: Linear::without_bias(store, rng, &format!("{name}.ur"), state, state),
            wc: Linear::new(store, rng, &format!("{name}.wc"), inputs, state),
            uc: Linear::without_bias(store, rng, &format!("{name}.uc"), state, state),
        }
    }

    /// Bias of the update gate; a large negative value freezes the state.
    pub fn update_bias(&self) -> ParamId {
        self.wu.b.expect("gate bias")
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var, h: Var) -> Var {
        let gate = |tape: &mut Tape, w: &Linear, u: &Linear, hv: Var| {
            let a = w.forward(tape, store, x);
            let b = u.forward(tape, store, hv);
            tape.add(a, b)
        };
        let u_pre = gate(tape, &self.wu, &self.uu, h);
        let u = tape.sigmoid(u_pre);
        let r_pre = gate(tape, &self.wr, &self.ur, h);
        let r = tape.sigmoid(r_pre);
        let rh = tape.mul(r, h);
        let c_pre = gate(tape, &self.wc, &self.uc, rh);
        let c = tape.tanh(c_pre);
        let keep = tape.affine(u, -1.0, 1.0);
        let old = tape.mul(keep, h);
        let new = tape.mul(u, c);
        tape.add(old, new)
    }
}

/// `Z = I W_self + mean_in(I) W_msg + b`, where `incoming[i]` lists the
/// senders of active edges into `i` and an empty mean is zero.
#[derive(Debug, Clone)]
pub struct MessagePass {
    pub self_map: Linear,
    pub msg_map: Linear,
}

impl MessagePass {
    pub fn new(store: &mut ParameterStore, rng: &mut SimRng, name: &str, dim: usize) -> Self {
        Self {
            self_map: Linear::new(store, rng, &format!("{name}.self"), dim, dim),
            msg_map: Linear::without_bias(store, rng, &format!("{name}.msg"), dim, dim),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, embed: Var, incoming: &[Vec<usize>]) -> Var {
        let mean = tape.mix(embed, mean_rows(incoming));
        let a = self.self_map.forward(tape, store, embed);
        let b = self.msg_map.forward(tape, store, mean);
        tape.add(a, b)
    }
}

/// Row-mixing weights that average each listed set; empty sets give zero.
pub fn mean_rows(sets: &[Vec<usize>]) -> RowMix {
    Arc::new(
        sets.iter()
            .map(|s| {
                let w = 1.0 / s.len().max(1) as f64;
                s.iter().map(|&k| (k, w)).collect()
            })
            .collect(),
    )
}

/// Clamped sigmoid gate probabilities from logits.
pub fn gate_probabilities(tape: &mut Tape, logits: Var) -> Var {
    let p = tape.sigmoid(logits);
    tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
}

/// Independent Bernoulli draws, one uniform per edge in order.
pub fn sample_active_edges(probs: &[f64], rng: &mut SimRng) -> Vec<bool> {
    probs.iter().map(|&p| rng.random::<f64>() < p).collect()
}

/// Per-row log-probability and entropy of Bernoulli gates with
/// probabilities `p` (a column) at the outcomes `active`.
pub fn bernoulli_gate_terms(tape: &mut Tape, p: Var, active: &[bool]) -> (Var, Var) {
    let q = tape.affine(p, -1.0, 1.0);
    let ln_p = tape.ln(p);
    let ln_q = tape.ln(q);
    let on = Array2::from_shape_fn((active.len(), 1), |(k, _)| if active[k] { 1.0 } else { 0.0 });
    let off = on.mapv(|v| 1.0 - v);
    let on = tape.constant(on);
    let off = tape.constant(off);
    let a = tape.mul(ln_p, on);
    let b = tape.mul(ln_q, off);
    let log_prob = tape.add(a, b);
    let pp = tape.mul(p, ln_p);
    let qq = tape.mul(q, ln_q);
    let s = tape.add(pp, qq);
    let entropy = tape.affine(s, -1.0, 0.0);
    (log_prob, entropy)
}

/// Bernoulli-vector head over `logits` (`m × c`). Returns the sampled bits,
/// and per-row log-probability and entropy columns.
pub fn bernoulli_head(tape: &mut Tape, logits: Var, rng: Option<&mut SimRng>, forced: Option<&[bool]>) -> (Vec<bool>, Var, Var) {
    let l = tape.value(logits).clone();
    let bits: Vec<bool> = match (forced, rng) {
        (Some(f), _) => f.to_vec(),
        (None, Some(rng)) => l.iter().map(|&x| rng.random::<f64>() < sigmoid(x)).collect(),
        (None, None) => l.iter().map(|&x| x > 0.0).collect(),
    };
    let ls_pos = tape.log_sigmoid(logits);
    let neg = tape.affine(logits, -1.0, 0.0);
    let ls_neg = tape.log_sigmoid(neg);
    let y = Array2::from_shape_fn(l.raw_dim(), |(i, j)| if bits[i * l.ncols() + j] { 1.0 } else { 0.0 });
    let ny = y.mapv(|v| 1.0 - v);
    let yv = tape.constant(y);
    let nyv = tape.constant(ny);
    let a = tape.mul(ls_pos, yv);
    let b = tape.mul(ls_neg, nyv);
    let lp = tape.add(a, b);
    let log_prob = tape.sum_cols(lp);
    let p = tape.sigmoid(logits);
    let q = tape.affine(p, -1.0, 1.0);
    let pa = tape.mul(p, ls_pos);
    let qb = tape.mul(q, ls_neg);
    let h = tape.add(pa, qb);
    let hs = tape.sum_cols(h);
    let entropy = tape.affine(hs, -1.0, 0.0);
    (bits, log_prob, entropy)
}

/// Categorical head over per-candidate scores (a column) grouped by
/// `offsets`. Returns the chosen index within each segment, and per-segment
/// log-probability and entropy columns.
pub fn categorical_head(
    tape: &mut Tape,
    scores: Var,
    offsets: Arc<Vec<usize>>,
    rng: Option<&mut SimRng>,
    forced: Option<&[usize]>,
) -> (Vec<usize>, Var, Var) {
    let logp = tape.segment_log_softmax(scores, offsets.clone());
    let lp = tape.value(logp).clone();
    let segments = offsets.len() - 1;
    let picks: Vec<usize> = match (forced, rng) {
        (Some(f), _) => f.to_vec(),
        (None, Some(rng)) => (0..segments)
            .map(|s| {
                let (a, b) = (offsets[s], offsets[s + 1]);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for k in a..b {
                    acc += lp[[k, 0]].exp();
                    if u < acc {
                        return k - a;
                    }
                }
                b - a - 1
            })
            .collect(),
        (None, None) => (0..segments)
            .map(|s| {
                let (a, b) = (offsets[s], offsets[s + 1]);
                (a..b).fold(a, |best, k| if lp[[k, 0]] > lp[[best, 0]] { k } else { best }) - a
            })
            .collect(),
    };
    let chosen = Arc::new(
        picks
            .iter()
            .enumerate()
            .map(|(s, &k)| vec![(offsets[s] + k, 1.0)])
            .collect(),
    );
    let log_prob = tape.mix(logp, chosen);
    let p = tape.exp(logp);
    let plp = tape.mul(p, logp);
    let seg_sum = Arc::new((0..segments).map(|s| (offsets[s]..offsets[s + 1]).map(|k| (k, 1.0)).collect()).collect());
    let s = tape.mix(plp, seg_sum);
    let entropy = tape.affine(s, -1.0, 0.0);
    (picks, log_prob, entropy)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
