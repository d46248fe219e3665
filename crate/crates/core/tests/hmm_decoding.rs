use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tricluster::exp_model::{ExpModelParams, TrainingSet};
use tricluster::hmm::*;
use tricluster::partition::*;
use tricluster::similarity::SimilarityMatrix;

fn random_hmm(rng: &mut ChaCha8Rng, sticky: f64) -> ClusterHmm {
    let k = 5;
    let normalise = |v: Vec<f64>| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let trans: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            normalise(
                (0..k)
                    .map(|b| rng.gen_range(0.05..1.0) + if a == b { sticky } else { 0.0 })
                    .collect(),
            )
        })
        .collect();
    let init = normalise((0..k).map(|_| rng.gen_range(0.05..1.0)).collect());
    let emission = ExpModelParams::new(
        3,
        (0..3).map(|_| rng.gen_range(0.5..3.0)).collect(),
        (0..3).map(|_| rng.gen_range(2.0..8.0)).collect(),
        vec![0.5; 3],
    )
    .unwrap();
    ClusterHmm::from_probabilities(3, &trans, &init, emission).unwrap()
}

fn random_obs(rng: &mut ChaCha8Rng, t: usize) -> Vec<SimilarityMatrix> {
    (0..t)
        .map(|_| {
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            SimilarityMatrix::from_pairs(3, &v).unwrap()
        })
        .collect()
}

fn all_paths(states: usize, t: usize) -> Vec<Vec<usize>> {
    (0..states.pow(t as u32))
        .map(|mut code| {
            (0..t)
                .map(|_| {
                    let s = code % states;
                    code /= states;
                    s
                })
                .collect()
        })
        .collect()
}

#[test]
fn viterbi_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for t in 1..=5 {
        for sticky in [0.0, 5.0] {
            let hmm = random_hmm(&mut rng, sticky);
            let obs = random_obs(&mut rng, t);
            let path = viterbi_path(&hmm, &obs).unwrap();
            let best = all_paths(5, t)
                .into_iter()
                .map(|p| hmm.path_log_score(&p, &obs).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let got = hmm.path_log_score(&path, &obs).unwrap();
            assert!((got - best).abs() < 1e-9, "T={t}: {got} vs {best}");
        }
    }
}

#[test]
fn viterbi_beats_random_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let hmm = random_hmm(&mut rng, 2.0);
    let obs = random_obs(&mut rng, 20);
    let best = hmm
        .path_log_score(&viterbi_path(&hmm, &obs).unwrap(), &obs)
        .unwrap();
    for _ in 0..1000 {
        let path: Vec<usize> = (0..20).map(|_| rng.gen_range(0..5)).collect();
        assert!(hmm.path_log_score(&path, &obs).unwrap() <= best + 1e-9);
    }
}

#[test]
fn filter_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let hmm = random_hmm(&mut rng, 1.0);
    let obs = random_obs(&mut rng, 3);
    let post = forward_filter(&hmm, &obs).unwrap();
    for (t, step) in post.iter().enumerate() {
        assert!((step.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // P(state at t | obs up to t) by summing joint scores of prefix paths.
        let prefix = &obs[..=t];
        let mut mass = [0.0; 5];
        for p in all_paths(5, t + 1) {
            mass[p[t]] += hmm.path_log_score(&p, prefix).unwrap().exp();
        }
        let z: f64 = mass.iter().sum();
        for s in 0..5 {
            assert!((step[s] - mass[s] / z).abs() < 1e-12);
        }
    }
}

#[test]
fn sticky_transitions_hold_the_dominant_state() {
    let e = ExpModelParams::uniform(3, 1.0, 1.0, 0.5).unwrap();
    let mut trans = vec![vec![0.001; 5]; 5];
    for (a, row) in trans.iter_mut().enumerate() {
        row[a] = 1.0 - 0.004;
    }
    let init = vec![0.2; 5];
    let hmm = ClusterHmm::from_probabilities(3, &trans, &init, e).unwrap();
    let obs: Vec<SimilarityMatrix> = (0..4)
        .map(|k| SimilarityMatrix::from_pairs(3, &[0.1 * k as f64, 0.5, 0.9]).unwrap())
        .collect();
    let path = viterbi_path(&hmm, &obs).unwrap();
    assert!(path.iter().all(|&s| s == path[0]));
}

#[test]
fn independent_states_reduce_to_per_step_argmax() {
    // Rows equal to the state frequencies make consecutive states independent,
    // so Viterbi picks argmax of log frequency + emission at each step.
    let labels = [
        "1,2|3", "1,2|3", "1|2|3", "1,2,3", "1,2|3", "1|2,3", "1|2|3", "1,2|3",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data = TrainingSet::new(
        labels
            .iter()
            .map(|l| {
                let v: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
                (
                    SimilarityMatrix::from_pairs(3, &v).unwrap(),
                    l.parse::<Partition>().unwrap(),
                )
            })
            .collect(),
    )
    .unwrap();
    let trained = hmm_train(&data, 0.0).unwrap();
    let freq: Vec<f64> = trained.log_initial().iter().map(|l| l.exp()).collect();
    let hmm =
        ClusterHmm::from_probabilities(3, &vec![freq.clone(); 5], &freq, trained.emission().clone()).unwrap();
    let obs = random_obs(&mut rng, 6);
    let path = viterbi_path(&hmm, &obs).unwrap();
    for (t, s) in obs.iter().enumerate() {
        let scores: Vec<f64> = hmm
            .states()
            .iter()
            .zip(&freq)
            .map(|(p, f)| f.ln() + emission_loglik(s, p, hmm.emission()).unwrap())
            .collect();
        let mut best = 0;
        for j in 1..5 {
            if scores[j] > scores[best] {
                best = j;
            }
        }
        assert_eq!(path[t], best);
    }
}
