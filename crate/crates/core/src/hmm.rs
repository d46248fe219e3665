//! Hidden Markov model whose hidden states are clusterings.
//!
//! Transitions are smoothed sample frequencies from a labelled sequence and
//! emissions are the pairwise exponential densities (no pair prior).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::exp_model::{train_exponential, ExpModelParams, TrainConfig, TrainingSet};
use crate::partition::{all_partitions, pairs, ClusterTimeline, Partition};
use crate::similarity::SimilarityMatrix;

pub const HMM_GUARD: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterHmm {
    n: usize,
    states: Vec<Partition>,
    index: HashMap<Partition, usize>,
    log_transition: Vec<f64>,
    log_initial: Vec<f64>,
    emission: ExpModelParams,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Turns counts into log-probabilities with additive smoothing. A row with
/// no mass at all (unseen source, no smoothing) becomes uniform.
fn smoothed_log_probs(counts: &[f64], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + alpha * counts.len() as f64;
    if total == 0.0 {
        let u = -(counts.len() as f64).ln();
        return vec![u; counts.len()];
    }
    counts.iter().map(|c| ((c + alpha) / total).ln()).collect()
}

impl ClusterHmm {
    /// Builds a model from explicit probabilities (not logs). Rows of
    /// `transition` are indexed by the canonical state order.
    pub fn from_probabilities(
        n: usize,
        transition: &[Vec<f64>],
        initial: &[f64],
        emission: ExpModelParams,
    ) -> Result<Self> {
        let states = states_for(n)?;
        let s = states.len();
        if emission.n() != n {
            return Err(Error::contract("emission parameters have the wrong size"));
        }
        if transition.len() != s || transition.iter().any(|r| r.len() != s) || initial.len() != s {
            return Err(Error::contract(format!("expected {s} states")));
        }
        let check = |row: &[f64]| {
            row.iter().all(|&p| (0.0..=1.0).contains(&p)) && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9
        };
        if !transition.iter().all(|r| check(r)) || !check(initial) {
            return Err(Error::contract("rows must be probability vectors"));
        }
        Ok(ClusterHmm {
            n,
            index: index_of(&states),
            states,
            log_transition: transition.iter().flatten().map(|p| p.ln()).collect(),
            log_initial: initial.iter().map(|p| p.ln()).collect(),
            emission,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn states(&self) -> &[Partition] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn log_transition(&self, from: usize, to: usize) -> f64 {
        self.log_transition[from * self.states.len() + to]
    }

    pub fn log_initial(&self) -> &[f64] {
        &self.log_initial
    }

    pub fn emission(&self) -> &ExpModelParams {
        &self.emission
    }

    pub fn state_index(&self, p: &Partition) -> Option<usize> {
        self.index.get(p).copied()
    }

    /// Log joint probability of a state path and observations.
    pub fn path_log_score(&self, path: &[usize], obs: &[SimilarityMatrix]) -> Result<f64> {
        if path.len() != obs.len() || path.is_empty() {
            return Err(Error::contract("path and observations differ in length"));
        }
        let mut score = self.log_initial[path[0]];
        for (t, (&st, s)) in path.iter().zip(obs).enumerate() {
            if t > 0 {
                score += self.log_transition(path[t - 1], st);
            }
            score += emission_loglik(s, &self.states[st], &self.emission)?;
        }
        Ok(score)
    }

    fn emission_table(&self, obs: &[SimilarityMatrix]) -> Result<Vec<Vec<f64>>> {
        obs.iter()
            .map(|s| {
                self.states
                    .iter()
                    .map(|p| emission_loglik(s, p, &self.emission))
                    .collect()
            })
            .collect()
    }

    /// Transition matrix as CSV with a `from,to...` header of state strings.
    pub fn transition_csv(&self, fmt_value: impl Fn(f64) -> String) -> String {
        let mut out = String::from("from");
        for st in &self.states {
            out.push(',');
            out.push_str(&csv_field(st));
        }
        out.push('\n');
        for (a, st) in self.states.iter().enumerate() {
            out.push_str(&csv_field(st));
            for b in 0..self.states.len() {
                out.push(',');
                out.push_str(&fmt_value(self.log_transition(a, b).exp()));
            }
            out.push('\n');
        }
        out
    }
}

/// Partition strings contain commas, so CSV fields holding them are quoted.
fn csv_field(p: &Partition) -> String {
    let s = p.to_string();
    if s.contains(',') {
        format!("\"{s}\"")
    } else {
        s
    }
}

fn index_of(states: &[Partition]) -> HashMap<Partition, usize> {
    states.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect()
}

fn states_for(n: usize) -> Result<Vec<Partition>> {
    if n > HMM_GUARD {
        return Err(Error::Capacity(format!(
            "clustering HMM supports at most {HMM_GUARD} series, got {n}"
        )));
    }
    all_partitions(n)
}

/// Fits transitions, initial distribution and emissions from a labelled,
/// time-ordered sequence.
pub fn hmm_train(data: &TrainingSet, alpha: f64) -> Result<ClusterHmm> {
    hmm_train_with(data, alpha, &TrainConfig::default())
}

pub fn hmm_train_with(data: &TrainingSet, alpha: f64, cfg: &TrainConfig) -> Result<ClusterHmm> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::contract("smoothing must be a finite non-negative number"));
    }
    if data.len() < 2 {
        return Err(Error::contract("need at least two labelled steps"));
    }
    let n = data.n();
    let states = states_for(n)?;
    let s = states.len();
    let lookup = index_of(&states);
    let index: Vec<usize> = data.observations().iter().map(|(_, p)| lookup[p]).collect();
    let mut trans = vec![0.0; s * s];
    for w in index.windows(2) {
        trans[w[0] * s + w[1]] += 1.0;
    }
    let mut init = vec![0.0; s];
    for &i in &index {
        init[i] += 1.0;
    }
    let log_transition = trans
        .chunks(s)
        .flat_map(|row| smoothed_log_probs(row, alpha))
        .collect();
    Ok(ClusterHmm {
        n,
        index: lookup,
        states,
        log_transition,
        log_initial: smoothed_log_probs(&init, alpha),
        emission: train_exponential(data, cfg),
    })
}

/// Sum over pairs of the log exponential density under the class implied by
/// `state`.
pub fn emission_loglik(s: &SimilarityMatrix, state: &Partition, emission: &ExpModelParams) -> Result<f64> {
    if s.n() != emission.n() || state.n() != emission.n() {
        return Err(Error::contract("similarity, state and emission sizes differ"));
    }
    let labels = state.labels();
    Ok(pairs(s.n())
        .map(|(i, j)| emission.log_density(i, j, s.get(i, j), labels[i] == labels[j]))
        .sum())
}

/// Most probable state path (Viterbi). Ties go to the lower state index.
pub fn viterbi_path(hmm: &ClusterHmm, obs: &[SimilarityMatrix]) -> Result<Vec<usize>> {
    if obs.is_empty() {
        return Err(Error::contract("no observations to decode"));
    }
    let s = hmm.n_states();
    let emit = hmm.emission_table(obs)?;
    let mut delta: Vec<f64> = (0..s).map(|j| hmm.log_initial[j] + emit[0][j]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(obs.len());
    for e in emit.iter().skip(1) {
        let mut next = vec![f64::NEG_INFINITY; s];
        let mut arg = vec![0usize; s];
        for (j, (nx, ag)) in next.iter_mut().zip(arg.iter_mut()).enumerate() {
            for (i, &d) in delta.iter().enumerate() {
                let v = d + hmm.log_transition(i, j);
                if v > *nx {
                    *nx = v;
                    *ag = i;
                }
            }
            *nx += e[j];
        }
        delta = next;
        back.push(arg);
    }
    let mut best = 0;
    for j in 1..s {
        if delta[j] > delta[best] {
            best = j;
        }
    }
    let mut path = vec![best; obs.len()];
    for t in (0..back.len()).rev() {
        path[t] = back[t][path[t + 1]];
    }
    Ok(path)
}

/// Viterbi decoding of time-stamped observations into a timeline.
pub fn viterbi_decode(hmm: &ClusterHmm, obs: &[(usize, SimilarityMatrix)]) -> Result<ClusterTimeline> {
    let mats: Vec<SimilarityMatrix> = obs.iter().map(|(_, s)| s.clone()).collect();
    let path = viterbi_path(hmm, &mats)?;
    ClusterTimeline::new(
        obs.iter()
            .zip(path)
            .map(|((t, _), st)| (*t, hmm.states[st].clone()))
            .collect(),
    )
}

/// Normalized forward recursion; entry `t` is the posterior over states given
/// observations up to and including `t`.
pub fn forward_filter(hmm: &ClusterHmm, obs: &[SimilarityMatrix]) -> Result<Vec<Vec<f64>>> {
    if obs.is_empty() {
        return Err(Error::contract("no observations to filter"));
    }
    let s = hmm.n_states();
    let emit = hmm.emission_table(obs)?;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(obs.len());
    let mut log_alpha: Vec<f64> = (0..s).map(|j| hmm.log_initial[j] + emit[0][j]).collect();
    for t in 0..obs.len() {
        if t > 0 {
            let prev = &out[t - 1];
            let prev_log: Vec<f64> = prev.iter().map(|p| p.ln()).collect();
            log_alpha = (0..s)
                .map(|j| {
                    let terms: Vec<f64> = (0..s).map(|i| prev_log[i] + hmm.log_transition(i, j)).collect();
                    log_sum_exp(&terms) + emit[t][j]
                })
                .collect();
        }
        let z = log_sum_exp(&log_alpha);
        if z == f64::NEG_INFINITY {
            return Err(Error::DegenerateInput(format!(
                "observation {t} has zero probability under every state"
            )));
        }
        out.push(log_alpha.iter().map(|a| (a - z).exp()).collect::<Vec<f64>>());
    }
    Ok(out)
}
