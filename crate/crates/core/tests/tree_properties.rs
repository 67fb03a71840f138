mod common;

use common::{balanced, brute_force_splits, caterpillar, names, relabel};
use latent_quartet::nj::table_distance;
use latent_quartet::synth::{random_topology, tree_model};
use latent_quartet::{
    bipartitions, build_tree, from_newick, insert_leaf, neighbor_join, robinson_foulds, to_newick,
    DistanceMatrix, LatentTree,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn oracle_build(truth: &LatentTree, seed: u64) -> (LatentTree, latent_quartet::BuildTrace) {
    let l = truth.leaves().to_vec();
    build_tree(&truth.leaf_names(), seed, |q| {
        truth.quartet_topology([l[q[0]], l[q[1]], l[q[2]], l[q[3]]])
    })
    .unwrap()
}

#[test]
fn oracle_builds_are_exact_on_random_shapes() {
    for d in [4, 5, 6, 7, 9, 13, 20] {
        for beta in [0.2, 0.5] {
            for seed in 0..10 {
                let truth = random_topology(d, beta, seed).unwrap();
                let (t, trace) = oracle_build(&truth, seed);
                t.validate().unwrap();
                assert_eq!(t.hidden().len(), d - 2);
                assert_eq!(robinson_foulds(&t, &truth).unwrap(), 0);
                assert_eq!(trace.insertion_depths.len(), d - 4);
            }
        }
    }
}

#[test]
fn call_count_within_constant_times_d_log_d() {
    for d in [8usize, 16, 32] {
        for seed in 0..10 {
            let truth = random_topology(d, 0.2, seed).unwrap();
            let (_, trace) = oracle_build(&truth, seed);
            let bound = 4.0 * d as f64 * (d as f64).log2();
            assert!((trace.quartet_test_count as f64) <= bound);
        }
    }
}

#[test]
fn every_insertion_edge_round_trips_through_removal() {
    let base = random_topology(7, 0.5, 2).unwrap();
    let edges = base.edges();
    assert_eq!(edges.len(), 2 * 7 - 3);
    let mut built = Vec::new();
    for e in edges {
        let t = insert_leaf(&base, e, "new").unwrap();
        t.validate().unwrap();
        assert_eq!(
            robinson_foulds(&t.remove_leaf("new").unwrap(), &base).unwrap(),
            0
        );
        built.push(t);
    }
    for i in 0..built.len() {
        for j in 0..i {
            assert!(robinson_foulds(&built[i], &built[j]).unwrap() > 0);
        }
    }
}

#[test]
fn splits_match_flood_fill_oracle() {
    for seed in 0..20 {
        let t = random_topology(4 + seed as usize, 0.3, seed).unwrap();
        let splits = bipartitions(&t);
        assert_eq!(splits, brute_force_splits(&t));
        assert_eq!(splits.len(), t.leaf_count() - 3);
    }
    let t = random_topology(16, 0.5, 99).unwrap();
    assert_eq!(bipartitions(&t).len(), 13);
}

#[test]
fn caterpillar_against_relabeled_balanced_reaches_maximum() {
    let n = names(16);
    let cat = caterpillar(&n);
    // interleave labels so no cherry of the balanced tree is a caterpillar prefix split
    let perm: Vec<usize> = vec![0, 8, 1, 9, 2, 10, 3, 11, 4, 12, 5, 13, 6, 14, 7, 15];
    let bal = relabel(&balanced(&n), &perm);
    let a = bipartitions(&cat);
    let b = bipartitions(&bal);
    assert!(a.is_disjoint(&b));
    assert_eq!(robinson_foulds(&cat, &bal).unwrap(), 26);
}

#[test]
fn newick_round_trip_on_random_trees() {
    for seed in 0..100 {
        let d = 4 + (seed as usize % 20);
        let t = random_topology(d, if seed % 2 == 0 { 0.5 } else { 0.2 }, seed).unwrap();
        let text = to_newick(&t).unwrap();
        assert!(text.ends_with(';'));
        let back = from_newick(&text).unwrap();
        assert_eq!(robinson_foulds(&t, &back).unwrap(), 0);
        assert_eq!(to_newick(&back).unwrap(), text);
    }
}

#[test]
fn splits_ignore_relabeling_of_hidden_nodes() {
    let t = random_topology(12, 0.3, 5).unwrap();
    let back = from_newick(&to_newick(&t).unwrap()).unwrap();
    assert_eq!(bipartitions(&t), bipartitions(&back));
}

fn random_labeled(d: usize, seed: u64) -> LatentTree {
    let t = random_topology(d, 0.5, seed).unwrap();
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xABCD));
    relabel(&t, &perm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rf_is_a_metric(d in 4usize..14, s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let a = random_labeled(d, s1);
        let b = random_labeled(d, s2);
        let c = random_labeled(d, s3);
        let ab = robinson_foulds(&a, &b).unwrap();
        prop_assert_eq!(ab, robinson_foulds(&b, &a).unwrap());
        prop_assert_eq!(robinson_foulds(&a, &a).unwrap(), 0);
        prop_assert_eq!(ab == 0, bipartitions(&a) == bipartitions(&b));
        prop_assert!(robinson_foulds(&a, &c).unwrap() <= ab + robinson_foulds(&b, &c).unwrap());
        prop_assert!(ab <= 2 * (d - 3));
    }
}

#[test]
fn population_distances_satisfy_four_point_condition() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..5 {
        let topo = random_topology(7, 0.4, seed).unwrap();
        let model = tree_model(&topo, 3, 3, 0.5, 1.0, &mut rng).unwrap();
        let d = DistanceMatrix::from_model(&model).unwrap();
        assert_eq!(d.infinite_count(), 0);
        let l = model.leaves().to_vec();
        for q in [[0, 1, 2, 3], [0, 2, 4, 6], [1, 3, 5, 6], [2, 3, 4, 5]] {
            let [a, b, c, e] = q;
            let rel = model.quartet_topology([l[a], l[b], l[c], l[e]]).unwrap();
            let [[p, r], [s, u]] = rel.pairs();
            let dd = |x: usize, y: usize| d.get(q[x], q[y]);
            let inner = dd(p, r) + dd(s, u);
            let cross1 = dd(p, s) + dd(r, u);
            let cross2 = dd(p, u) + dd(r, s);
            assert!((cross1 - cross2).abs() < 1e-6, "{cross1} vs {cross2}");
            assert!(inner < cross1);
        }
    }
}

#[test]
fn nj_consistent_at_population_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..10 {
        let topo = random_topology(9, 0.3, seed).unwrap();
        let model = tree_model(&topo, 4, 4, 0.5, 1.0, &mut rng).unwrap();
        let d = DistanceMatrix::from_model(&model).unwrap();
        let t = neighbor_join(&d, &model.leaf_names()).unwrap();
        assert_eq!(robinson_foulds(&t, &model).unwrap(), 0);
    }
}

#[test]
fn deficient_rank_gives_infinite_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let topo = random_topology(6, 0.5, 1).unwrap();
    let model = tree_model(&topo, 2, 4, 0.5, 1.0, &mut rng).unwrap();
    let l = model.leaves().to_vec();
    let p = model.pairwise_distribution(l[0], l[1]).unwrap();
    assert_eq!(table_distance(&p).unwrap(), f64::INFINITY);
    let d = DistanceMatrix::from_model(&model).unwrap();
    assert_eq!(d.infinite_count(), 15);
    let t = neighbor_join(&d, &model.leaf_names()).unwrap();
    t.validate().unwrap();
}
