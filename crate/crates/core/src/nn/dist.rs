//! Independent three-way categorical per design parameter.

use rand::Rng;

use crate::circuit::{CircuitGraph, ParamVector};

pub const DECREASE: usize = 0;
pub const KEEP: usize = 1;
pub const INCREASE: usize = 2;
pub const N_ACTIONS: usize = 3;

/// Numerically stable `log softmax` of one row of three logits.
pub fn log_softmax(row: &[f64]) -> [f64; N_ACTIONS] {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    [row[0] - lse, row[1] - lse, row[2] - lse]
}

pub fn softmax(row: &[f64]) -> [f64; N_ACTIONS] {
    log_softmax(row).map(f64::exp)
}

/// Row probabilities of an `M x 3` logit block stored flat.
pub fn action_probabilities(logits: &[f64]) -> Vec<[f64; N_ACTIONS]> {
    logits.chunks_exact(N_ACTIONS).map(softmax).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub actions: Vec<usize>,
    pub log_prob: f64,
    pub entropy: f64,
}

/// Joint log-probability of `actions` and joint entropy under `logits`.
pub fn log_prob_entropy(logits: &[f64], actions: &[usize]) -> (f64, f64) {
    let mut lp = 0.0;
    let mut ent = 0.0;
    for (row, &a) in logits.chunks_exact(N_ACTIONS).zip(actions) {
        let ls = log_softmax(row);
        lp += ls[a];
        ent -= ls.iter().map(|l| l.exp() * l).sum::<f64>();
    }
    (lp, ent)
}

pub fn sample_action<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> SampledAction {
    let actions: Vec<usize> = logits
        .chunks_exact(N_ACTIONS)
        .map(|row| {
            let p = softmax(row);
            let u: f64 = rng.random();
            if u < p[0] {
                DECREASE
            } else if u < p[0] + p[1] {
                KEEP
            } else {
                INCREASE
            }
        })
        .collect();
    let (log_prob, entropy) = log_prob_entropy(logits, &actions);
    SampledAction {
        actions,
        log_prob,
        entropy,
    }
}

/// Most likely action per row; ties prefer keep, then the lower index.
pub fn greedy_action(logits: &[f64]) -> Vec<usize> {
    logits
        .chunks_exact(N_ACTIONS)
        .map(|row| {
            let mut best = KEEP;
            for a in [DECREASE, INCREASE] {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Gradient of `c_lp * log_prob + c_ent * entropy` with respect to the logits.
pub fn log_prob_entropy_grad(logits: &[f64], actions: &[usize], c_lp: f64, c_ent: f64, out: &mut [f64]) {
    for ((row, &a), g) in logits
        .chunks_exact(N_ACTIONS)
        .zip(actions)
        .zip(out.chunks_exact_mut(N_ACTIONS))
    {
        let ls = log_softmax(row);
        let p = ls.map(f64::exp);
        let h: f64 = -p.iter().zip(&ls).map(|(p, l)| p * l).sum::<f64>();
        for k in 0..N_ACTIONS {
            let d_lp = f64::from(u8::from(k == a)) - p[k];
            // dH/dz_k = -p_k (log p_k + H)
            let d_ent = -p[k] * (ls[k] + h);
            g[k] += c_lp * d_lp + c_ent * d_ent;
        }
    }
}

/// Moves every parameter one grid step down, nowhere, or up, clamped to its bounds.
pub fn apply_action(params: &ParamVector, actions: &[usize], graph: &CircuitGraph) -> ParamVector {
    ParamVector(
        graph
            .slots()
            .zip(&params.0)
            .zip(actions)
            .map(|((slot, &v), &a)| {
                let idx = slot.index_of(v).unwrap_or_else(|| slot.index_of(slot.clamp_to_grid(v)).unwrap_or(0));
                let next = match a {
                    DECREASE => idx.saturating_sub(1),
                    INCREASE => (idx + 1).min(slot.levels() - 1),
                    _ => idx,
                };
                slot.value_at(next)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::build_benchmark;

    #[test]
    fn forced_keep_has_zero_log_prob() {
        let s = sample_action(&[-1e3, 0.0, -1e3], &mut rand::rng());
        assert_eq!(s.actions, vec![KEEP]);
        assert_eq!(s.log_prob, 0.0);
    }

    #[test]
    fn uniform_row_entropy_is_ln3() {
        let (_, h) = log_prob_entropy(&[0.5; 6], &[0, 2]);
        assert!((h - 2.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn greedy_ties_keep() {
        assert_eq!(greedy_action(&[1.0, 1.0, 1.0, 2.0, 0.0, 2.0]), vec![KEEP, DECREASE]);
    }

    #[test]
    fn bounds_clamp_actions() {
        let b = build_benchmark("two_stage").unwrap();
        let g = &b.graph;
        let lo = g.lower_bounds();
        let m = g.param_count();
        assert_eq!(apply_action(&lo, &vec![DECREASE; m], g), lo);
        assert_eq!(apply_action(&lo, &vec![KEEP; m], g), lo);
        let up = apply_action(&lo, &vec![INCREASE; m], g);
        assert_eq!(apply_action(&up, &vec![DECREASE; m], g), lo);
    }
}
