use proptest::prelude::*;
use tricluster::exp_model::{exp_predict, independent_map, ExpModelParams};
use tricluster::partition::*;
use tricluster::similarity::SimilarityMatrix;
use tricluster::triangular::*;

fn instance(n: usize) -> impl Strategy<Value = (SimilarityMatrix, ExpModelParams)> {
    let np = n * (n - 1) / 2;
    (
        prop::collection::vec(0.0f64..=1.0, np),
        prop::collection::vec(0.2f64..8.0, np),
        prop::collection::vec(0.2f64..8.0, np),
        prop::collection::vec(0.02f64..0.98, np),
    )
        .prop_map(move |(s, r1, r0, p)| {
            (
                SimilarityMatrix::from_pairs(n, &s).unwrap(),
                ExpModelParams::new(n, r1, r0, p).unwrap(),
            )
        })
}

fn sized_instance() -> impl Strategy<Value = (SimilarityMatrix, ExpModelParams)> {
    (2usize..=6).prop_flat_map(instance)
}

fn permute_partition(p: &Partition, perm: &[usize]) -> Partition {
    let blocks = p
        .blocks()
        .iter()
        .map(|b| b.iter().map(|&i| perm[i]).collect())
        .collect();
    Partition::from_blocks(p.n(), blocks).unwrap()
}

proptest! {
    #[test]
    fn exact_map_beats_every_partition((s, params) in sized_instance()) {
        let map = exact_map(&s, &params).unwrap();
        let all = all_partitions(s.n()).unwrap();
        prop_assert_eq!(map.n_evaluated as usize, all.len());
        let first_best = all
            .iter()
            .map(|p| (p, log_posterior_unnorm(p, &s, &params).unwrap()))
            .fold(None::<(&Partition, f64)>, |acc, (p, v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((p, v)),
            })
            .unwrap();
        prop_assert_eq!(&map.partition, first_best.0);
        prop_assert!((map.log_score - first_best.1).abs() < 1e-9);
    }

    #[test]
    fn constrained_search_agrees_with_enumeration((s, params) in sized_instance()) {
        let map = exact_map(&s, &params).unwrap();
        let ep = EdgeProbabilities::from_model(&s, &params).unwrap();
        let searched = exact_map_constrained(&ep, &[]).unwrap();
        // Both objectives differ by a per-pair constant, so their maximisers
        // coincide up to exact ties.
        let a = ep.log_score(&map.partition);
        let b = ep.log_score(&searched.partition);
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn valid_independent_map_is_the_exact_map((s, params) in sized_instance()) {
        let c = independent_map(&s, &params).unwrap();
        if is_valid_clustering(&c) {
            let map = exact_map(&s, &params).unwrap();
            let predicted = exp_predict(&s, &params).unwrap();
            let a = log_posterior_unnorm(&predicted, &s, &params).unwrap();
            prop_assert!((a - map.log_score).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn map_is_permutation_equivariant((s, params) in sized_instance(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = s.n();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let map = exact_map(&s, &params).unwrap();
        let moved = exact_map(&s.permuted(&perm), &params.permuted(&perm)).unwrap();
        prop_assert!((map.log_score - moved.log_score).abs() < 1e-9 * (1.0 + map.log_score.abs()));
        let mapped = permute_partition(&map.partition, &perm);
        let score = log_posterior_unnorm(&mapped, &s.permuted(&perm), &params.permuted(&perm)).unwrap();
        prop_assert!((score - moved.log_score).abs() < 1e-9 * (1.0 + score.abs()));
    }

    #[test]
    fn constrained_search_respects_forbidden_pairs(
        p in prop::collection::vec(0.0f64..=1.0, 21),
        mask in any::<u32>(),
    ) {
        let n = 7;
        let forbidden: Vec<(usize, usize)> = pairs(n)
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, ij)| ij)
            .collect();
        let mut p = p;
        for (k, _) in pairs(n).enumerate() {
            if mask & (1 << k) != 0 {
                p[k] = 0.0;
            }
        }
        let ep = EdgeProbabilities::new(n, p).unwrap();
        let map = exact_map_constrained(&ep, &forbidden).unwrap();
        for &(i, j) in &forbidden {
            prop_assert!(!map.partition.same_block(i, j));
        }
        let best = all_partitions(n)
            .unwrap()
            .iter()
            .filter(|q| forbidden.iter().all(|&(i, j)| !q.same_block(i, j)))
            .map(|q| ep.log_score(q))
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((map.log_score - best).abs() < 1e-9 * (1.0 + best.abs()) || map.log_score == best);
    }
}
