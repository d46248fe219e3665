//! Pairwise exponential model.
//!
//! Each pair `{i, j}` has a Bernoulli co-membership indicator with prior
//! `prior1`, and the observed similarity is exponential with rate `rate1`
//! when the pair shares a cluster and `rate0` otherwise. Prediction picks
//! each indicator independently and then takes connected components.

use crate::error::{Error, Result};
use crate::partition::{ensemble_to_partition, n_pairs, pair_index, pairs, EdgeEnsemble, Partition};
use crate::similarity::SimilarityMatrix;

/// Smallest class mean used when estimating a rate (caps rates at 1e9).
pub const MIN_CLASS_MEAN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpModelParams {
    n: usize,
    rate1: Vec<f64>,
    rate0: Vec<f64>,
    prior1: Vec<f64>,
}

impl ExpModelParams {
    /// Per-pair vectors in pair order (see [`pair_index`]).
    pub fn new(n: usize, rate1: Vec<f64>, rate0: Vec<f64>, prior1: Vec<f64>) -> Result<Self> {
        let m = n_pairs(n);
        if rate1.len() != m || rate0.len() != m || prior1.len() != m {
            return Err(Error::contract(format!("expected {m} pair parameters")));
        }
        if rate1.iter().chain(&rate0).any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::contract("rates must be positive and finite"));
        }
        if prior1.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::contract("priors must lie in [0, 1]"));
        }
        Ok(ExpModelParams {
            n,
            rate1,
            rate0,
            prior1,
        })
    }

    /// Same rates and prior for every pair.
    pub fn uniform(n: usize, rate1: f64, rate0: f64, prior1: f64) -> Result<Self> {
        let m = n_pairs(n);
        Self::new(n, vec![rate1; m], vec![rate0; m], vec![prior1; m])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rate1(&self, i: usize, j: usize) -> f64 {
        self.rate1[pair_index(i, j, self.n)]
    }

    pub fn rate0(&self, i: usize, j: usize) -> f64 {
        self.rate0[pair_index(i, j, self.n)]
    }

    pub fn prior1(&self, i: usize, j: usize) -> f64 {
        self.prior1[pair_index(i, j, self.n)]
    }

    pub fn set_pair(&mut self, i: usize, j: usize, rate1: f64, rate0: f64, prior1: f64) -> Result<()> {
        if !(rate1 > 0.0 && rate0 > 0.0 && (0.0..=1.0).contains(&prior1)) {
            return Err(Error::contract("invalid pair parameters"));
        }
        let k = pair_index(i, j, self.n);
        self.rate1[k] = rate1;
        self.rate0[k] = rate0;
        self.prior1[k] = prior1;
        Ok(())
    }

    /// `ln(rate * exp(-rate * s))` for the class `same`.
    #[inline]
    pub fn log_density(&self, i: usize, j: usize, s: f64, same: bool) -> f64 {
        let r = if same { self.rate1(i, j) } else { self.rate0(i, j) };
        r.ln() - r * s
    }

    /// Log density plus log prior for the class `same`.
    #[inline]
    pub fn log_weight(&self, i: usize, j: usize, s: f64, same: bool) -> f64 {
        let p = self.prior1(i, j);
        let prior = if same { p } else { 1.0 - p };
        self.log_density(i, j, s, same) + prior.ln()
    }

    /// Relabels series: pair `(perm[i], perm[j])` of the result carries `(i, j)`'s values.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for (i, j) in pairs(self.n) {
            let src = pair_index(i, j, self.n);
            let dst = pair_index(perm[i], perm[j], self.n);
            out.rate1[dst] = self.rate1[src];
            out.rate0[dst] = self.rate0[src];
            out.prior1[dst] = self.prior1[src];
        }
        out
    }
}

/// Similarity matrices paired with their clusterings, in time order.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    observations: Vec<(SimilarityMatrix, Partition)>,
}

impl TrainingSet {
    pub fn new(observations: Vec<(SimilarityMatrix, Partition)>) -> Result<Self> {
        let Some((s0, _)) = observations.first() else {
            return Err(Error::contract("training set is empty"));
        };
        let n = s0.n();
        if observations.iter().any(|(s, p)| s.n() != n || p.n() != n) {
            return Err(Error::contract("training observations disagree on n"));
        }
        Ok(TrainingSet { observations })
    }

    pub fn n(&self) -> usize {
        self.observations[0].0.n()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[(SimilarityMatrix, Partition)] {
        &self.observations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateMode {
    /// Separate rates for co-clustered and separated pairs.
    #[default]
    Conditional,
    /// One rate per pair from all observations; both classes share it.
    Pooled,
}

impl std::str::FromStr for RateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional" => Ok(RateMode::Conditional),
            "pooled" => Ok(RateMode::Pooled),
            other => Err(Error::Parse(format!("unknown rate mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub rates: RateMode,
    /// Clamp priors to `[1/(2m), 1 - 1/(2m)]` so no class has zero mass.
    pub clamp_priors: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rates: RateMode::Conditional,
            clamp_priors: true,
        }
    }
}

fn rate_from_mean(mean: f64) -> f64 {
    1.0 / mean.max(MIN_CLASS_MEAN)
}

/// Maximum-likelihood fit: rates are inverse class means, the prior is the
/// co-clustering frequency.
///
/// A class never observed for a pair falls back to the pooled rate.
pub fn train_exponential(data: &TrainingSet, cfg: &TrainConfig) -> ExpModelParams {
    let n = data.n();
    let m = data.len() as f64;
    let np = n_pairs(n);
    let mut sum = [vec![0.0; np], vec![0.0; np]];
    let mut count = [vec![0usize; np], vec![0usize; np]];
    for (s, p) in data.observations() {
        let labels = p.labels();
        for (k, (i, j)) in pairs(n).enumerate() {
            let class = usize::from(labels[i] == labels[j]);
            sum[class][k] += s.get(i, j);
            count[class][k] += 1;
        }
    }
    let eps = 1.0 / (2.0 * m);
    let mut rate1 = Vec::with_capacity(np);
    let mut rate0 = Vec::with_capacity(np);
    let mut prior1 = Vec::with_capacity(np);
    for k in 0..np {
        let pooled = rate_from_mean((sum[0][k] + sum[1][k]) / m);
        let class_rate = |c: usize| {
            if count[c][k] == 0 {
                pooled
            } else {
                rate_from_mean(sum[c][k] / count[c][k] as f64)
            }
        };
        match cfg.rates {
            RateMode::Conditional => {
                rate1.push(class_rate(1));
                rate0.push(class_rate(0));
            }
            RateMode::Pooled => {
                rate1.push(pooled);
                rate0.push(pooled);
            }
        }
        let mut p = count[1][k] as f64 / m;
        if cfg.clamp_priors {
            p = p.clamp(eps, 1.0 - eps);
        }
        prior1.push(p);
    }
    ExpModelParams {
        n,
        rate1,
        rate0,
        prior1,
    }
}

/// Per-pair MAP indicator; ties go to "not clustered". The result need not
/// be transitive.
pub fn independent_map(s: &SimilarityMatrix, params: &ExpModelParams) -> Result<EdgeEnsemble> {
    check_n(s, params)?;
    let n = s.n();
    let mut c = EdgeEnsemble::empty(n);
    for (i, j) in pairs(n) {
        let sij = s.get(i, j);
        let w1 = params.log_weight(i, j, sij, true);
        let w0 = params.log_weight(i, j, sij, false);
        if w1 > w0 {
            c.set(i, j, true);
        }
    }
    Ok(c)
}

/// Connected components of the independent MAP. Runs in `O(n^2)`.
pub fn exp_predict(s: &SimilarityMatrix, params: &ExpModelParams) -> Result<Partition> {
    Ok(ensemble_to_partition(&independent_map(s, params)?))
}

pub(crate) fn check_n(s: &SimilarityMatrix, params: &ExpModelParams) -> Result<()> {
    if s.n() != params.n() {
        return Err(Error::contract(format!(
            "similarity has {} series but the model has {}",
            s.n(),
            params.n()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const RAW: TrainConfig = TrainConfig {
        rates: RateMode::Conditional,
        clamp_priors: false,
    };

    fn two_series(s: f64, p: &str) -> (SimilarityMatrix, Partition) {
        (SimilarityMatrix::from_pairs(2, &[s]).unwrap(), p.parse().unwrap())
    }

    #[test]
    fn always_clustered_pair() {
        let data = TrainingSet::new(vec![two_series(0.5, "1,2"), two_series(1.0, "1,2")]).unwrap();
        let params = train_exponential(&data, &RAW);
        assert_eq!(params.prior1(0, 1), 1.0);
        assert_eq!(params.rate1(0, 1), 1.0 / 0.75);
        // Empty "separated" class falls back to the pooled rate.
        assert_eq!(params.rate0(0, 1), 1.0 / 0.75);

        let clamped = train_exponential(&data, &TrainConfig::default());
        assert_eq!(clamped.prior1(0, 1), 0.75);
    }

    #[test]
    fn never_clustered_pair() {
        let data = TrainingSet::new(vec![two_series(0.2, "1|2"), two_series(0.4, "1|2")]).unwrap();
        let params = train_exponential(&data, &RAW);
        assert_eq!(params.prior1(0, 1), 0.0);
        assert!((params.rate1(0, 1) - 1.0 / 0.3).abs() < 1e-12);
        assert!((params.rate0(0, 1) - 1.0 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn equal_similarities_give_equal_rates() {
        let data = TrainingSet::new(vec![two_series(0.4, "1|2"), two_series(0.4, "1,2")]).unwrap();
        let params = train_exponential(&data, &RAW);
        assert_eq!(params.rate1(0, 1), params.rate0(0, 1));
        assert_eq!(params.rate1(0, 1), 1.0 / 0.4);
    }

    #[test]
    fn zero_mean_class_is_capped() {
        let data = TrainingSet::new(vec![two_series(0.0, "1|2"), two_series(0.5, "1,2")]).unwrap();
        let params = train_exponential(&data, &RAW);
        assert_eq!(params.rate0(0, 1), 1.0 / MIN_CLASS_MEAN);
    }

    #[test]
    fn pooled_rates_share_the_overall_mean() {
        let data = TrainingSet::new(vec![two_series(0.2, "1|2"), two_series(0.6, "1,2")]).unwrap();
        let cfg = TrainConfig {
            rates: RateMode::Pooled,
            clamp_priors: false,
        };
        let params = train_exponential(&data, &cfg);
        assert!((params.rate1(0, 1) - 2.5).abs() < 1e-12);
        assert_eq!(params.rate1(0, 1), params.rate0(0, 1));
        assert_eq!(params.prior1(0, 1), 0.5);
    }

    #[test]
    fn degenerate_priors_force_the_indicator() {
        let s = SimilarityMatrix::from_pairs(2, &[0.01]).unwrap();
        let p = ExpModelParams::uniform(2, 1.0, 50.0, 1.0).unwrap();
        assert!(independent_map(&s, &p).unwrap().get(0, 1));
        let s = SimilarityMatrix::from_pairs(2, &[0.99]).unwrap();
        let p = ExpModelParams::uniform(2, 50.0, 1.0, 0.0).unwrap();
        assert!(!independent_map(&s, &p).unwrap().get(0, 1));
    }

    #[test]
    fn log_density_comparison() {
        // class 1: ln 1 - 1 = -1; class 0: ln 4 - 4 = -2.61
        let s = SimilarityMatrix::from_pairs(2, &[1.0]).unwrap();
        let p = ExpModelParams::uniform(2, 1.0, 4.0, 0.5).unwrap();
        assert!(independent_map(&s, &p).unwrap().get(0, 1));
        assert!((p.log_density(0, 1, 1.0, false) - (4f64.ln() - 4.0)).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_separated() {
        let s = SimilarityMatrix::from_pairs(2, &[0.5]).unwrap();
        let p = ExpModelParams::uniform(2, 2.0, 2.0, 0.5).unwrap();
        assert!(!independent_map(&s, &p).unwrap().get(0, 1));
    }

    #[test]
    fn open_triangle_merges_into_one_block() {
        let s = SimilarityMatrix::from_pairs(3, &[0.5, 0.5, 0.5]).unwrap();
        let p = ExpModelParams::new(3, vec![1.0; 3], vec![1.0; 3], vec![1.0, 1.0, 0.0]).unwrap();
        assert_eq!(exp_predict(&s, &p).unwrap(), Partition::single_block(3));
        let none = ExpModelParams::uniform(3, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(exp_predict(&s, &none).unwrap(), Partition::singletons(3));
        let all = ExpModelParams::uniform(3, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(exp_predict(&s, &all).unwrap(), Partition::single_block(3));
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let s = SimilarityMatrix::ones(3);
        let p = ExpModelParams::uniform(2, 1.0, 1.0, 0.5).unwrap();
        assert!(exp_predict(&s, &p).is_err());
        assert!(TrainingSet::new(vec![]).is_err());
    }
}
