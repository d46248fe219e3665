//! Synthetic regime-switching panels, clustering metrics and
//! inverse-volatility weights.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::panel::SeriesPanel;
use crate::partition::{all_partitions, n_pairs, pairs, ClusterTimeline, Partition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub steps: usize,
    pub noise_sd: f64,
    pub regime_change_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 3,
            steps: 5000,
            noise_sd: 0.1,
            regime_change_prob: 0.002,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::contract("need at least two series"));
        }
        if self.steps == 0 {
            return Err(Error::contract("need at least one step"));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::contract("noise standard deviation must be positive"));
        }
        if !(0.0..=1.0).contains(&self.regime_change_prob) {
            return Err(Error::contract("regime change probability must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Draws a panel where each block shares a standard normal factor per step
/// plus independent `Normal(0, noise_sd^2)` noise. The partition is redrawn
/// uniformly from all partitions with probability `regime_change_prob` at
/// each step after the first.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<(SeriesPanel, ClusterTimeline)> {
    cfg.validate()?;
    let states = all_partitions(cfg.n)?;
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::contract(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = states[rng.gen_range(0..states.len())].clone();
    let mut values = Vec::with_capacity(cfg.steps * cfg.n);
    let mut truth = Vec::with_capacity(cfg.steps);
    for t in 1..=cfg.steps {
        if t > 1 && rng.gen::<f64>() < cfg.regime_change_prob {
            current = states[rng.gen_range(0..states.len())].clone();
        }
        let factors: Vec<f64> = (0..current.n_blocks())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let labels = current.labels();
        for &l in &labels {
            values.push(factors[l] + noise.sample(&mut rng));
        }
        truth.push((t, current.clone()));
    }
    Ok((
        SeriesPanel::new(cfg.n, cfg.steps, values)?,
        ClusterTimeline::new(truth)?,
    ))
}

fn check_same_n(a: &Partition, b: &Partition) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::contract(format!(
            "partitions cover {} and {} items",
            a.n(),
            b.n()
        )));
    }
    Ok(())
}

/// Fraction of item pairs on which the two partitions agree.
pub fn rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    check_same_n(a, b)?;
    let n = a.n();
    if n < 2 {
        return Ok(1.0);
    }
    let (la, lb) = (a.labels(), b.labels());
    let agree = pairs(n)
        .filter(|&(i, j)| (la[i] == la[j]) == (lb[i] == lb[j]))
        .count();
    Ok(agree as f64 / n_pairs(n) as f64)
}

fn choose2(x: usize) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

/// Rand index corrected for chance agreement.
pub fn adjusted_rand(a: &Partition, b: &Partition) -> Result<f64> {
    check_same_n(a, b)?;
    let n = a.n();
    let (la, lb) = (a.labels(), b.labels());
    let mut table = vec![0usize; a.n_blocks() * b.n_blocks()];
    for i in 0..n {
        table[la[i] * b.n_blocks() + lb[i]] += 1;
    }
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let sum_a: f64 = a.blocks().iter().map(|x| choose2(x.len())).sum();
    let sum_b: f64 = b.blocks().iter().map(|x| choose2(x.len())).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // Only possible when both are all-singletons or both a single block.
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepEval {
    pub time: usize,
    pub exact: bool,
    pub rand_index: f64,
    pub adjusted_rand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_step_exact_match: f64,
    pub rand_index: f64,
    pub adjusted_rand: f64,
    /// Fraction of consecutive evaluated steps where the prediction is unchanged.
    pub stability: f64,
    pub rows: Vec<StepEval>,
}

/// Compares two timelines on their common time indices.
pub fn evaluate_timeline(pred: &ClusterTimeline, truth: &ClusterTimeline) -> Result<EvalReport> {
    evaluate_where(pred, truth, |_| true)
}

/// Times `t` at which the partition differs from the previous step's.
pub fn regime_changes(truth: &ClusterTimeline) -> Vec<usize> {
    truth
        .steps()
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| w[1].0)
        .collect()
}

/// Like [`evaluate_timeline`] but skips the `skip` steps starting at each
/// regime change of `truth`.
pub fn evaluate_timeline_masked(
    pred: &ClusterTimeline,
    truth: &ClusterTimeline,
    skip: usize,
) -> Result<EvalReport> {
    let changes = regime_changes(truth);
    evaluate_where(pred, truth, |t| !changes.iter().any(|&c| t >= c && t < c + skip))
}

fn evaluate_where(
    pred: &ClusterTimeline,
    truth: &ClusterTimeline,
    keep: impl Fn(usize) -> bool,
) -> Result<EvalReport> {
    if let (Some(a), Some(b)) = (pred.n(), truth.n()) {
        if a != b {
            return Err(Error::contract(format!(
                "prediction covers {a} series but truth covers {b}"
            )));
        }
    }
    let mut rows = Vec::new();
    let mut preds: Vec<&Partition> = Vec::new();
    for (t, p) in pred.steps() {
        if !keep(*t) {
            continue;
        }
        if let Some(q) = truth.get(*t) {
            rows.push(StepEval {
                time: *t,
                exact: p == q,
                rand_index: rand_index(p, q)?,
                adjusted_rand: adjusted_rand(p, q)?,
            });
            preds.push(p);
        }
    }
    if rows.is_empty() {
        return Err(Error::contract("prediction and truth share no time steps"));
    }
    let m = rows.len() as f64;
    let stability = if preds.len() < 2 {
        1.0
    } else {
        preds.windows(2).filter(|w| w[0] == w[1]).count() as f64 / (preds.len() - 1) as f64
    };
    Ok(EvalReport {
        per_step_exact_match: rows.iter().filter(|r| r.exact).count() as f64 / m,
        rand_index: rows.iter().map(|r| r.rand_index).sum::<f64>() / m,
        adjusted_rand: rows.iter().map(|r| r.adjusted_rand).sum::<f64>() / m,
        stability,
        rows,
    })
}

/// Fraction of consecutive steps of a timeline with an unchanged partition.
pub fn stability(tl: &ClusterTimeline) -> f64 {
    let s = tl.steps();
    if s.len() < 2 {
        return 1.0;
    }
    s.windows(2).filter(|w| w[0].1 == w[1].1).count() as f64 / (s.len() - 1) as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Inverse-volatility weights over the trailing `w` steps of the panel.
pub fn inverse_vol_weights(panel: &SeriesPanel, p: &Partition, w: usize) -> Result<Vec<f64>> {
    inverse_vol_weights_at(panel, p, w, panel.n_steps())
}

/// Each block becomes an equal-weighted composite; composites are weighted by
/// the reciprocal of their sample standard deviation over the `w` steps
/// ending at `k` (1-based), and each block's weight is split equally among
/// its members.
pub fn inverse_vol_weights_at(panel: &SeriesPanel, p: &Partition, w: usize, k: usize) -> Result<Vec<f64>> {
    if p.n() != panel.n_series() {
        return Err(Error::contract(format!(
            "partition covers {} series but the panel has {}",
            p.n(),
            panel.n_series()
        )));
    }
    if w < 2 {
        return Err(Error::contract("volatility window must be at least 2"));
    }
    let windows: Vec<Vec<f64>> = (0..panel.n_series())
        .map(|i| panel.window(i, k, w))
        .collect::<Result<_>>()?;
    let mut inv = Vec::with_capacity(p.n_blocks());
    for (b, block) in p.blocks().iter().enumerate() {
        let composite: Vec<f64> = (0..w)
            .map(|t| block.iter().map(|&i| windows[i][t]).sum::<f64>() / block.len() as f64)
            .collect();
        let sd = sample_sd(&composite);
        if sd.is_nan() || sd <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "composite of block {} has zero volatility",
                b + 1
            )));
        }
        inv.push(1.0 / sd);
    }
    let total: f64 = inv.iter().sum();
    let mut weights = vec![0.0; p.n()];
    for (block, v) in p.blocks().iter().zip(&inv) {
        for &i in block {
            weights[i] = v / total / block.len() as f64;
        }
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(s: &str) -> Partition {
        s.parse().unwrap()
    }

    #[test]
    fn identical_partitions_score_one() {
        for s in ["1,2|3,4", "1|2|3|4", "1,2,3,4"] {
            assert_eq!(rand_index(&part(s), &part(s)).unwrap(), 1.0);
            assert_eq!(adjusted_rand(&part(s), &part(s)).unwrap(), 1.0);
        }
    }

    #[test]
    fn rand_index_hand_count() {
        // Only pairs 12 and 34 disagree.
        let ri = rand_index(&part("1,2|3,4"), &part("1|2|3|4")).unwrap();
        assert!((ri - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn adjusted_rand_reference_value() {
        // Contingency [[2,1,0],[0,1,2]]: index 2, row sums 6, column sums 3,
        // expected 18/15, max 9/2, so ARI = (4/5)/(33/10) = 8/33.
        let ari = adjusted_rand(&part("1,2,3|4,5,6"), &part("1,2|3,4|5,6")).unwrap();
        assert!((ari - 8.0 / 33.0).abs() < 1e-15);
        assert_eq!(adjusted_rand(&part("1,2|3,4"), &part("1,2,3|4")).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        assert!(rand_index(&part("1|2"), &part("1|2|3")).is_err());
    }

    #[test]
    fn generator_is_deterministic_and_sized() {
        let cfg = SynthConfig {
            n: 3,
            steps: 5000,
            seed: 7,
            ..Default::default()
        };
        let (panel, truth) = gen_synthetic(&cfg).unwrap();
        assert_eq!(panel.n_steps(), 5000);
        assert_eq!(panel.n_series(), 3);
        assert_eq!(truth.len(), 5000);
        let again = gen_synthetic(&cfg).unwrap();
        assert_eq!(again.0, panel);
        assert_eq!(again.1, truth);
    }

    #[test]
    fn no_regime_changes_means_constant_truth() {
        let cfg = SynthConfig {
            n: 4,
            steps: 300,
            regime_change_prob: 0.0,
            seed: 3,
            ..Default::default()
        };
        let (_, truth) = gen_synthetic(&cfg).unwrap();
        assert!(regime_changes(&truth).is_empty());
        assert_eq!(stability(&truth), 1.0);
    }

    #[test]
    fn tiny_noise_makes_blocks_identical() {
        let cfg = SynthConfig {
            n: 4,
            steps: 50,
            noise_sd: 1e-14,
            regime_change_prob: 0.1,
            seed: 11,
        };
        let (panel, truth) = gen_synthetic(&cfg).unwrap();
        for (t, p) in truth.steps() {
            for b in p.blocks() {
                for &i in b {
                    assert!((panel.value(*t, i) - panel.value(*t, b[0])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn lagging_prediction() {
        let a = part("1,2|3");
        let b = part("1|2|3");
        let truth: Vec<_> = (1..=100)
            .map(|t| (t, if t <= 50 { a.clone() } else { b.clone() }))
            .collect();
        let pred: Vec<_> = (1..=100)
            .map(|t| (t, if t <= 51 { a.clone() } else { b.clone() }))
            .collect();
        let r = evaluate_timeline(
            &ClusterTimeline::new(pred).unwrap(),
            &ClusterTimeline::new(truth.clone()).unwrap(),
        )
        .unwrap();
        assert!((r.per_step_exact_match - 0.99).abs() < 1e-15);
        let truth = ClusterTimeline::new(truth).unwrap();
        let own = evaluate_timeline(&truth, &truth).unwrap();
        assert_eq!(own.per_step_exact_match, 1.0);
        assert_eq!(own.stability, stability(&truth));
        assert_eq!(regime_changes(&truth), vec![51]);
        let masked = evaluate_timeline_masked(&truth, &truth, 20).unwrap();
        assert_eq!(masked.rows.len(), 80);
    }

    #[test]
    fn disjoint_timelines_are_rejected() {
        let a = ClusterTimeline::new(vec![(1, part("1|2"))]).unwrap();
        let b = ClusterTimeline::new(vec![(2, part("1|2"))]).unwrap();
        assert!(matches!(evaluate_timeline(&a, &b), Err(Error::Contract(_))));
        let c = ClusterTimeline::new(vec![(1, part("1|2|3"))]).unwrap();
        assert!(matches!(evaluate_timeline(&a, &c), Err(Error::Contract(_))));
    }

    fn panel_from_columns(cols: &[Vec<f64>]) -> SeriesPanel {
        let rows: Vec<Vec<f64>> = (0..cols[0].len())
            .map(|t| cols.iter().map(|c| c[t]).collect())
            .collect();
        SeriesPanel::from_rows(&rows).unwrap()
    }

    #[test]
    fn equal_vols_give_uniform_weights() {
        let base = [1.0, -1.0, 2.0, 0.5, -0.7];
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|k| base.iter().rev().cycle().skip(k).take(5).copied().collect())
            .collect();
        let w = inverse_vol_weights(&panel_from_columns(&cols), &Partition::singletons(3), 5).unwrap();
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_inverse_to_composite_vol() {
        let base = vec![1.0, -1.0, 2.0, 0.5];
        let double: Vec<f64> = base.iter().map(|x| 2.0 * x).collect();
        let panel = panel_from_columns(&[base.clone(), base, double]);
        let w = inverse_vol_weights(&panel, &part("1,2|3"), 4).unwrap();
        assert!((w[0] + w[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 1.0 / 3.0).abs() < 1e-15);
        let w = inverse_vol_weights(&panel, &Partition::single_block(3), 4).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn flat_composite_is_degenerate() {
        let panel = panel_from_columns(&[vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]]);
        assert!(matches!(
            inverse_vol_weights(&panel, &Partition::singletons(2), 3),
            Err(Error::DegenerateInput(_))
        ));
    }
}
