//! Pairwise model restricted to valid clusterings.
//!
//! A three-way factor on every triangle `{i, j, k}` is zero exactly when two
//! of its edges are present and the third is not, so the posterior puts mass
//! only on edge ensembles that are disjoint unions of cliques. MAP is found
//! by scoring every partition, which is the support of the posterior.

use crate::error::{Error, Result};
use crate::exp_model::{check_n, ExpModelParams};
use crate::partition::{n_pairs, pair_index, pairs, Partition, RgsIter, ENUMERATION_GUARD};
use crate::similarity::SimilarityMatrix;

/// Three-edge factor: 0 when exactly two indicators are set, 1 otherwise.
pub fn triangle_potential(cij: bool, cik: bool, cjk: bool) -> u8 {
    let set = u8::from(cij) + u8::from(cik) + u8::from(cjk);
    u8::from(set != 2)
}

/// Unnormalized log posterior of a partition: the sum over pairs of the
/// class log density plus class log prior. Triangle factors are all 1 on a
/// partition and contribute nothing.
pub fn log_posterior_unnorm(p: &Partition, s: &SimilarityMatrix, params: &ExpModelParams) -> Result<f64> {
    check_n(s, params)?;
    if p.n() != s.n() {
        return Err(Error::contract("partition and similarity disagree on n"));
    }
    let labels = p.labels();
    Ok(pairs(s.n())
        .map(|(i, j)| params.log_weight(i, j, s.get(i, j), labels[i] == labels[j]))
        .sum())
}

/// Posterior probability that a pair shares a cluster when it is considered
/// on its own.
pub fn edge_posterior(s: f64, rate1: f64, rate0: f64, prior1: f64) -> f64 {
    if prior1 >= 1.0 {
        return 1.0;
    }
    if prior1 <= 0.0 {
        return 0.0;
    }
    let w1 = rate1.ln() - rate1 * s + prior1.ln();
    let w0 = rate0.ln() - rate0 * s + (1.0 - prior1).ln();
    // logistic(w1 - w0), evaluated on the stable side
    let d = w1 - w0;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Symmetric per-pair probabilities `p_hat` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbabilities {
    n: usize,
    p: Vec<f64>,
}

impl EdgeProbabilities {
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n_pairs(n) {
            return Err(Error::contract("wrong number of edge probabilities"));
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::contract("edge probabilities must lie in [0, 1]"));
        }
        Ok(EdgeProbabilities { n, p })
    }

    pub fn from_model(s: &SimilarityMatrix, params: &ExpModelParams) -> Result<Self> {
        check_n(s, params)?;
        let p = pairs(s.n())
            .map(|(i, j)| {
                edge_posterior(
                    s.get(i, j),
                    params.rate1(i, j),
                    params.rate0(i, j),
                    params.prior1(i, j),
                )
            })
            .collect();
        Ok(EdgeProbabilities { n: s.n(), p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[pair_index(i, j, self.n)]
    }

    /// `ln prod_{chosen} p * prod_{not chosen} (1 - p)` for a partition.
    pub fn log_score(&self, partition: &Partition) -> f64 {
        let labels = partition.labels();
        pairs(self.n)
            .map(|(i, j)| {
                let p = self.get(i, j);
                if labels[i] == labels[j] {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            })
            .sum()
    }
}

/// A MAP partition and its unnormalized log score.
#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub partition: Partition,
    pub log_score: f64,
    /// Partitions scored (or chain steps, for sampled estimates).
    pub n_evaluated: u64,
}

/// MAP over all partitions by enumeration. Ties keep the earliest partition
/// in restricted-growth order.
pub fn exact_map(s: &SimilarityMatrix, params: &ExpModelParams) -> Result<MapResult> {
    check_n(s, params)?;
    let n = s.n();
    if n > ENUMERATION_GUARD {
        return Err(Error::Capacity(format!(
            "exact MAP over {n} series exceeds the enumeration limit of {ENUMERATION_GUARD}; use MCMC"
        )));
    }
    let pair_list: Vec<(usize, usize)> = pairs(n).collect();
    let w: Vec<[f64; 2]> = pair_list
        .iter()
        .map(|&(i, j)| {
            let sij = s.get(i, j);
            [
                params.log_weight(i, j, sij, false),
                params.log_weight(i, j, sij, true),
            ]
        })
        .collect();
    let mut it = RgsIter::new(n);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut count = 0u64;
    while let Some(labels) = it.next_labels() {
        count += 1;
        let score: f64 = pair_list
            .iter()
            .zip(&w)
            .map(|(&(i, j), wk)| wk[usize::from(labels[i] == labels[j])])
            .sum();
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((labels.to_vec(), score));
        }
    }
    let (labels, log_score) = best.expect("at least one partition");
    Ok(MapResult {
        partition: Partition::from_labels(&labels),
        log_score,
        n_evaluated: count,
    })
}

/// Search-node budget for [`exact_map_constrained`].
pub const DEFAULT_SEARCH_BUDGET: u64 = 200_000_000;

/// Largest `n` accepted by the constrained search.
pub const CONSTRAINED_GUARD: usize = 64;

/// MAP of `prod_{chosen} p * prod_{not chosen} (1 - p)` over partitions
/// whose blocks never contain a forbidden pair.
///
/// Blocks are grown item by item in restricted-growth order, so ties resolve
/// exactly as in [`exact_map`]. Branches whose optimistic bound cannot beat
/// the incumbent are pruned.
pub fn exact_map_constrained(ep: &EdgeProbabilities, forbidden: &[(usize, usize)]) -> Result<MapResult> {
    exact_map_constrained_with_budget(ep, forbidden, DEFAULT_SEARCH_BUDGET)
}

pub fn exact_map_constrained_with_budget(
    ep: &EdgeProbabilities,
    forbidden: &[(usize, usize)],
    budget: u64,
) -> Result<MapResult> {
    let n = ep.n();
    if n > CONSTRAINED_GUARD {
        return Err(Error::Capacity(format!(
            "constrained MAP over {n} items exceeds the limit of {CONSTRAINED_GUARD}"
        )));
    }
    let mut banned = vec![false; n * n];
    for &(i, j) in forbidden {
        if i >= n || j >= n || i == j {
            return Err(Error::contract(format!(
                "forbidden pair ({}, {}) is not a pair of distinct items",
                i + 1,
                j + 1
            )));
        }
        if ep.get(i, j) > 0.0 {
            return Err(Error::contract(format!(
                "forbidden pair ({}, {}) has non-zero probability",
                i + 1,
                j + 1
            )));
        }
        banned[i * n + j] = true;
        banned[j * n + i] = true;
    }
    // lp[i][j] / lq[i][j] for j < i
    let mut lp = vec![0.0; n * n];
    let mut lq = vec![0.0; n * n];
    for (i, j) in pairs(n) {
        let p = ep.get(i, j);
        lp[j * n + i] = p.ln();
        lq[j * n + i] = (1.0 - p).ln();
        lp[i * n + j] = lp[j * n + i];
        lq[i * n + j] = lq[j * n + i];
    }
    // remaining[t] = best possible contribution of items t.. against earlier items
    let mut remaining = vec![0.0; n + 1];
    for t in (0..n).rev() {
        let row: f64 = (0..t)
            .map(|j| {
                if banned[t * n + j] {
                    lq[t * n + j]
                } else {
                    lp[t * n + j].max(lq[t * n + j])
                }
            })
            .sum();
        remaining[t] = remaining[t + 1] + row;
    }

    let mut search = Search {
        n,
        banned: &banned,
        lp: &lp,
        lq: &lq,
        remaining: &remaining,
        ep,
        labels: vec![0; n],
        blocks: Vec::new(),
        best: None,
        nodes: 0,
        leaves: 0,
        budget,
    };
    search.place(0, 0.0)?;
    let (labels, log_score) = search.best.expect("singletons are always admissible");
    Ok(MapResult {
        partition: Partition::from_labels(&labels),
        log_score,
        n_evaluated: search.leaves,
    })
}

struct Search<'a> {
    n: usize,
    banned: &'a [bool],
    lp: &'a [f64],
    lq: &'a [f64],
    remaining: &'a [f64],
    ep: &'a EdgeProbabilities,
    labels: Vec<usize>,
    blocks: Vec<Vec<usize>>,
    best: Option<(Vec<usize>, f64)>,
    nodes: u64,
    leaves: u64,
    budget: u64,
}

impl Search<'_> {
    fn canonical_score(&self) -> f64 {
        pairs(self.n)
            .map(|(i, j)| {
                let p = self.ep.get(i, j);
                if self.labels[i] == self.labels[j] {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            })
            .sum()
    }

    fn worth_exploring(&self, bound: f64) -> bool {
        match &self.best {
            None => true,
            Some((_, b)) => {
                if bound == f64::NEG_INFINITY {
                    false
                } else if *b == f64::NEG_INFINITY {
                    true
                } else {
                    bound >= *b - 1e-9 * (1.0 + b.abs())
                }
            }
        }
    }

    fn place(&mut self, item: usize, score: f64) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::Capacity(format!(
                "constrained MAP search exceeded its budget of {} nodes",
                self.budget
            )));
        }
        let n = self.n;
        if item == n {
            self.leaves += 1;
            let exact = self.canonical_score();
            if self.best.as_ref().is_none_or(|(_, b)| exact > *b) {
                self.best = Some((self.labels.clone(), exact));
            }
            return Ok(());
        }
        let base: f64 = (0..item).map(|j| self.lq[item * n + j]).sum();
        for b in 0..=self.blocks.len() {
            let delta = if b < self.blocks.len() {
                if self.blocks[b].iter().any(|&j| self.banned[item * n + j]) {
                    continue;
                }
                base + self.blocks[b]
                    .iter()
                    .map(|&j| self.lp[item * n + j] - self.lq[item * n + j])
                    .sum::<f64>()
            } else {
                base
            };
            let next = score + delta;
            if !self.worth_exploring(next + self.remaining[item + 1]) {
                continue;
            }
            self.labels[item] = b;
            if b == self.blocks.len() {
                self.blocks.push(vec![item]);
                self.place(item + 1, next)?;
                self.blocks.pop();
            } else {
                self.blocks[b].push(item);
                self.place(item + 1, next)?;
                self.blocks[b].pop();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exp_model::exp_predict;
    use crate::partition::all_partitions;

    #[test]
    fn potential_table() {
        assert_eq!(triangle_potential(true, true, false), 0);
        assert_eq!(triangle_potential(true, false, true), 0);
        assert_eq!(triangle_potential(false, true, true), 0);
        assert_eq!(triangle_potential(true, true, true), 1);
        assert_eq!(triangle_potential(false, false, false), 1);
        assert_eq!(triangle_potential(true, false, false), 1);
    }

    #[test]
    fn two_series_score_difference_is_log_odds() {
        let s = SimilarityMatrix::from_pairs(2, &[0.7]).unwrap();
        let params = ExpModelParams::uniform(2, 1.5, 3.0, 0.4).unwrap();
        let merged = log_posterior_unnorm(&Partition::single_block(2), &s, &params).unwrap();
        let split = log_posterior_unnorm(&Partition::singletons(2), &s, &params).unwrap();
        let expected = (1.5f64.ln() - 1.05 + 0.4f64.ln()) - (3.0f64.ln() - 2.1 + 0.6f64.ln());
        assert!((merged - split - expected).abs() < 1e-12);
        let p = edge_posterior(0.7, 1.5, 3.0, 0.4);
        assert!(((p / (1.0 - p)).ln() - expected).abs() < 1e-12);
    }

    #[test]
    fn edge_posterior_examples() {
        assert_eq!(edge_posterior(0.3, 1.0, 4.0, 1.0), 1.0);
        assert_eq!(edge_posterior(0.3, 1.0, 4.0, 0.0), 0.0);
        assert!((edge_posterior(0.9, 2.0, 2.0, 0.37) - 0.37).abs() < 1e-15);
        let e1 = (-1.0f64).exp();
        let expected = e1 / (e1 + 4.0 * (-4.0f64).exp());
        assert!((edge_posterior(1.0, 1.0, 4.0, 0.5) - expected).abs() < 1e-12);
        assert!((expected - 0.834).abs() < 1e-3);
    }

    #[test]
    fn limitation_example_prefers_a_two_block_partition() {
        // Equal rates make the pair posterior equal to the prior.
        let s = SimilarityMatrix::from_pairs(3, &[0.5, 0.5, 0.5]).unwrap();
        let params = ExpModelParams::new(3, vec![1.0; 3], vec![1.0; 3], vec![0.51, 0.51, 0.10]).unwrap();
        let r = exact_map(&s, &params).unwrap();
        assert_eq!(r.partition.to_string(), "1,2|3");
        assert_eq!(r.n_evaluated, 5);
        assert_eq!(exp_predict(&s, &params).unwrap(), Partition::single_block(3));
    }

    #[test]
    fn two_series_agree_with_independent_prediction() {
        for &(sv, r1, r0, pr) in &[(0.9, 1.0, 5.0, 0.3), (0.1, 1.0, 5.0, 0.3), (0.5, 2.0, 2.0, 0.6)] {
            let s = SimilarityMatrix::from_pairs(2, &[sv]).unwrap();
            let params = ExpModelParams::uniform(2, r1, r0, pr).unwrap();
            assert_eq!(
                exact_map(&s, &params).unwrap().partition,
                exp_predict(&s, &params).unwrap()
            );
        }
    }

    #[test]
    fn zero_priors_give_singletons() {
        let s = SimilarityMatrix::ones(4);
        let params = ExpModelParams::uniform(4, 1.0, 9.0, 0.0).unwrap();
        let r = exact_map(&s, &params).unwrap();
        assert_eq!(r.partition, Partition::singletons(4));
        assert!(r.log_score.is_finite());
    }

    #[test]
    fn exact_map_guard() {
        let params = ExpModelParams::uniform(14, 1.0, 1.0, 0.5).unwrap();
        assert!(exact_map(&SimilarityMatrix::ones(14), &params)
            .unwrap_err()
            .is_capacity());
    }

    #[test]
    fn constrained_matches_enumeration_without_constraints() {
        let ep = EdgeProbabilities::new(4, vec![0.7, 0.2, 0.6, 0.4, 0.9, 0.55]).unwrap();
        let got = exact_map_constrained(&ep, &[]).unwrap();
        let best = all_partitions(4)
            .unwrap()
            .into_iter()
            .map(|p| (ep.log_score(&p), p))
            .fold(None::<(f64, Partition)>, |acc, (s, p)| match acc {
                Some((b, q)) if b >= s => Some((b, q)),
                _ => Some((s, p)),
            })
            .unwrap();
        assert_eq!(got.partition, best.1);
    }

    #[test]
    fn all_forbidden_gives_singletons() {
        let ep = EdgeProbabilities::new(4, vec![0.0; 6]).unwrap();
        let forbidden: Vec<_> = pairs(4).collect();
        let r = exact_map_constrained(&ep, &forbidden).unwrap();
        assert_eq!(r.partition, Partition::singletons(4));
        assert_eq!(r.n_evaluated, 1);
    }

    #[test]
    fn forbidden_pairs_must_have_zero_probability() {
        let ep = EdgeProbabilities::new(3, vec![0.5, 0.0, 0.0]).unwrap();
        assert!(matches!(
            exact_map_constrained(&ep, &[(0, 1)]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn search_budget_is_enforced() {
        let ep = EdgeProbabilities::new(6, vec![0.5; 15]).unwrap();
        assert!(exact_map_constrained_with_budget(&ep, &[], 10)
            .unwrap_err()
            .is_capacity());
    }
}
