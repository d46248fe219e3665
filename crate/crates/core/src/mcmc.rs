//! Metropolis-Hastings over partitions with split/merge proposals.
//!
//! A move either picks a uniform block and splits it by a uniform
//! non-trivial bipartition, or picks a uniform pair of blocks and merges
//! them. The MAP estimate is the partition visited most often after burn-in.
//!
//! Move-type probabilities depend on the state: with a single block only a
//! split is possible, with all singletons only a merge; otherwise a split is
//! proposed with probability `frag_prob`. Choosing a singleton block for a
//! split is a self-move and counts as a rejection.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exp_model::ExpModelParams;
use crate::partition::Partition;
use crate::similarity::SimilarityMatrix;
use crate::triangular::{log_posterior_unnorm, MapResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub steps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub frag_prob: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            steps: 20_000,
            burn_in: 2_000,
            thin: 1,
            seed: 0,
            frag_prob: 0.5,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.steps {
            return Err(Error::contract("burn-in must be shorter than the chain"));
        }
        if self.thin == 0 {
            return Err(Error::contract("thin must be at least 1"));
        }
        if !(self.frag_prob > 0.0 && self.frag_prob < 1.0) {
            return Err(Error::contract("fragmentation probability must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn samples_kept(&self) -> u64 {
        (self.steps - self.burn_in) / self.thin
    }
}

/// Which summary of the chain is reported as the MAP estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MapEstimator {
    /// Most frequent kept sample.
    #[default]
    Mode,
    /// Highest-scoring state visited at any step.
    MaxVisited,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub samples_kept: u64,
    pub acceptance_rate: f64,
    pub mode: Partition,
    pub mode_frequency: f64,
    pub visited_distinct: usize,
    /// Highest-scoring state seen and its score.
    pub best_visited: (Partition, f64),
}

/// The kind of move a proposal made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Split,
    Merge,
    /// Picked a singleton block to split; the state is unchanged.
    SelfMove,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub state: Partition,
    /// `ln q(proposed -> current) - ln q(current -> proposed)`.
    pub log_ratio: f64,
    pub kind: Move,
}

/// `(split, merge)` move-type probabilities in a state with `k` blocks.
fn move_probs(p: &Partition, frag_prob: f64) -> (f64, f64) {
    let can_split = p.blocks().iter().any(|b| b.len() >= 2);
    let can_merge = p.n_blocks() >= 2;
    match (can_split, can_merge) {
        (true, true) => (frag_prob, 1.0 - frag_prob),
        (true, false) => (1.0, 0.0),
        (false, true) => (0.0, 1.0),
        (false, false) => (0.0, 0.0),
    }
}

/// `ln(2^(s-1) - 1)`, the number of non-trivial unordered bipartitions.
fn ln_bipartitions(s: usize) -> f64 {
    debug_assert!(s >= 2);
    let e = (s - 1) as f64;
    e * std::f64::consts::LN_2 + (-(-e * std::f64::consts::LN_2).exp()).ln_1p()
}

fn ln_choose2(k: usize) -> f64 {
    ((k * (k - 1) / 2) as f64).ln()
}

/// Log density of the split of a block of size `s` in a state with `k` blocks.
fn ln_split_density(split_prob: f64, k: usize, s: usize) -> f64 {
    split_prob.ln() - (k as f64).ln() - ln_bipartitions(s)
}

fn ln_merge_density(merge_prob: f64, k: usize) -> f64 {
    merge_prob.ln() - ln_choose2(k)
}

/// Draws a split/merge move from `p`.
pub fn propose<R: Rng + ?Sized>(p: &Partition, frag_prob: f64, rng: &mut R) -> Proposal {
    let (split_prob, merge_prob) = move_probs(p, frag_prob);
    let k = p.n_blocks();
    let self_move = || Proposal {
        state: p.clone(),
        log_ratio: 0.0,
        kind: Move::SelfMove,
    };
    if split_prob == 0.0 && merge_prob == 0.0 {
        return self_move();
    }
    let do_split = rng.gen::<f64>() < split_prob;
    if do_split {
        let b = rng.gen_range(0..k);
        let block = &p.blocks()[b];
        let s = block.len();
        if s < 2 {
            return self_move();
        }
        // The first member stays put; the others join the new part by coin
        // flip, redrawn if nobody moved.
        let part: Vec<usize> = loop {
            let part: Vec<usize> = block[1..].iter().copied().filter(|_| rng.gen::<bool>()).collect();
            if !part.is_empty() {
                break part;
            }
        };
        let next = p.split_block(b, &part);
        let (_, rev_merge) = move_probs(&next, frag_prob);
        let forward = ln_split_density(split_prob, k, s);
        let reverse = ln_merge_density(rev_merge, k + 1);
        Proposal {
            state: next,
            log_ratio: reverse - forward,
            kind: Move::Split,
        }
    } else {
        let a = rng.gen_range(0..k);
        let mut b = rng.gen_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        let merged_size = p.blocks()[a].len() + p.blocks()[b].len();
        let next = p.merge_blocks(a, b);
        let (rev_split, _) = move_probs(&next, frag_prob);
        let forward = ln_merge_density(merge_prob, k);
        let reverse = ln_split_density(rev_split, k - 1, merged_size);
        Proposal {
            state: next,
            log_ratio: reverse - forward,
            kind: Move::Merge,
        }
    }
}

/// Log proposal density of moving from `from` to `to` in one split or merge,
/// or `None` when no single move connects them.
pub fn log_proposal_density(from: &Partition, to: &Partition, frag_prob: f64) -> Option<f64> {
    let (split_prob, merge_prob) = move_probs(from, frag_prob);
    let k = from.n_blocks();
    if to.n_blocks() == k + 1 {
        // `to` must equal `from` with one block split in two.
        let changed: Vec<&Vec<usize>> = from
            .blocks()
            .iter()
            .filter(|b| !to.blocks().contains(b))
            .collect();
        if changed.len() != 1 {
            return None;
        }
        let block = changed[0];
        let pieces: Vec<&Vec<usize>> = to
            .blocks()
            .iter()
            .filter(|b| !from.blocks().contains(b))
            .collect();
        if pieces.len() != 2 || pieces.iter().any(|p| !p.iter().all(|x| block.contains(x))) {
            return None;
        }
        (split_prob > 0.0).then(|| ln_split_density(split_prob, k, block.len()))
    } else if to.n_blocks() + 1 == k {
        log_proposal_density(to, from, frag_prob).map(|_| ln_merge_density(merge_prob, k))
    } else {
        None
    }
}

/// One Metropolis-Hastings step from `current` with cached log target
/// `current_score`. Returns the new state, its score, and whether a move
/// was accepted.
pub fn mh_step_scored<R: Rng + ?Sized>(
    current: &Partition,
    current_score: f64,
    target: &dyn Fn(&Partition) -> f64,
    frag_prob: f64,
    rng: &mut R,
) -> (Partition, f64, bool) {
    let proposal = propose(current, frag_prob, rng);
    if proposal.kind == Move::SelfMove {
        return (current.clone(), current_score, false);
    }
    let proposed_score = target(&proposal.state);
    let log_alpha = if current_score == f64::NEG_INFINITY {
        if proposed_score > f64::NEG_INFINITY {
            0.0
        } else {
            proposal.log_ratio
        }
    } else {
        proposed_score - current_score + proposal.log_ratio
    };
    let accept = log_alpha >= 0.0 || rng.gen::<f64>() < log_alpha.exp();
    if accept {
        (proposal.state, proposed_score, true)
    } else {
        (current.clone(), current_score, false)
    }
}

/// One step targeting the triangular posterior.
pub fn mh_step<R: Rng + ?Sized>(
    p: &Partition,
    s: &SimilarityMatrix,
    params: &ExpModelParams,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<(Partition, bool)> {
    let current = log_posterior_unnorm(p, s, params)?;
    let target = |q: &Partition| log_posterior_unnorm(q, s, params).unwrap_or(f64::NEG_INFINITY);
    let (next, _, accepted) = mh_step_scored(p, current, &target, cfg.frag_prob, rng);
    Ok((next, accepted))
}

/// The generator used for chain `stream` under `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One row of a chain trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub accepted: bool,
    pub log_score: f64,
    pub state: Partition,
}

/// Runs a chain against an arbitrary log target, starting from singletons.
pub fn run_chain_with_target(
    n: usize,
    target: &dyn Fn(&Partition) -> f64,
    cfg: &ChainConfig,
    stream: u64,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<(ChainStats, HashMap<Partition, u64>)> {
    cfg.validate()?;
    let mut rng = chain_rng(cfg.seed, stream);
    let mut state = Partition::singletons(n);
    let mut score = target(&state);
    let mut counts: HashMap<Partition, u64> = HashMap::new();
    let mut best = (state.clone(), score);
    let mut accepted_moves = 0u64;
    for step in 1..=cfg.steps {
        let (next, next_score, accepted) = mh_step_scored(&state, score, target, cfg.frag_prob, &mut rng);
        state = next;
        score = next_score;
        debug_assert!(crate::partition::is_valid_clustering(
            &crate::partition::partition_to_ensemble(&state)
        ));
        if accepted {
            accepted_moves += 1;
            if score > best.1 {
                best = (state.clone(), score);
            }
        }
        if step > cfg.burn_in && (step - cfg.burn_in).is_multiple_of(cfg.thin) {
            *counts.entry(state.clone()).or_insert(0) += 1;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRow {
                step,
                accepted,
                log_score: score,
                state: state.clone(),
            });
        }
    }
    let kept: u64 = counts.values().sum();
    let (mode, mode_count) = mode_of(&counts);
    Ok((
        ChainStats {
            samples_kept: kept,
            acceptance_rate: accepted_moves as f64 / cfg.steps as f64,
            mode,
            mode_frequency: mode_count as f64 / kept as f64,
            visited_distinct: counts.len(),
            best_visited: best,
        },
        counts,
    ))
}

/// Most frequent partition; ties go to the smallest in canonical order.
pub fn mode_of(counts: &HashMap<Partition, u64>) -> (Partition, u64) {
    let (p, c) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .expect("at least one kept sample");
    (p.clone(), *c)
}

/// Samples the triangular posterior and reports its mode as the MAP estimate.
pub fn run_chain(
    s: &SimilarityMatrix,
    params: &ExpModelParams,
    cfg: &ChainConfig,
) -> Result<(ChainStats, MapResult)> {
    run_chain_estimating(s, params, cfg, MapEstimator::Mode)
}

pub fn run_chain_estimating(
    s: &SimilarityMatrix,
    params: &ExpModelParams,
    cfg: &ChainConfig,
    estimator: MapEstimator,
) -> Result<(ChainStats, MapResult)> {
    crate::exp_model::check_n(s, params)?;
    let target = |q: &Partition| log_posterior_unnorm(q, s, params).unwrap_or(f64::NEG_INFINITY);
    let (stats, _) = run_chain_with_target(s.n(), &target, cfg, 0, None)?;
    let partition = match estimator {
        MapEstimator::Mode => stats.mode.clone(),
        MapEstimator::MaxVisited => stats.best_visited.0.clone(),
    };
    let log_score = target(&partition);
    Ok((
        stats,
        MapResult {
            partition,
            log_score,
            n_evaluated: cfg.steps,
        },
    ))
}

/// Runs `chains` independent chains (streams `0..chains`) concurrently and
/// merges their frequency tables.
pub fn run_chains(
    s: &SimilarityMatrix,
    params: &ExpModelParams,
    cfg: &ChainConfig,
    chains: u64,
) -> Result<MapResult> {
    run_chains_from(s, params, cfg, 0, chains)
}

/// As [`run_chains`], with chain `c` on stream `first_stream + c`.
pub fn run_chains_from(
    s: &SimilarityMatrix,
    params: &ExpModelParams,
    cfg: &ChainConfig,
    first_stream: u64,
    chains: u64,
) -> Result<MapResult> {
    crate::exp_model::check_n(s, params)?;
    if chains == 0 {
        return Err(Error::contract("need at least one chain"));
    }
    let target = |q: &Partition| log_posterior_unnorm(q, s, params).unwrap_or(f64::NEG_INFINITY);
    let tables: Vec<Result<HashMap<Partition, u64>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (first_stream..first_stream + chains)
            .map(|stream| {
                let target = &target;
                scope.spawn(move || run_chain_with_target(s.n(), target, cfg, stream, None).map(|(_, c)| c))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    let mut merged: HashMap<Partition, u64> = HashMap::new();
    for table in tables {
        for (p, c) in table? {
            *merged.entry(p).or_insert(0) += c;
        }
    }
    let (partition, _) = mode_of(&merged);
    Ok(MapResult {
        log_score: target(&partition),
        partition,
        n_evaluated: cfg.steps * chains,
    })
}
