mod common;

use common::QuartetParts;
use latent_quartet::synth::{
    diagnostics, perturbed_cpt, quartet_model, random_topology, run_quartet_experiment,
    run_tree_experiment, theta_closed_form, theta_from_unfoldings, tree_model, Method,
    QuartetExperimentConfig, TreeExperimentConfig,
};
use latent_quartet::tensor::{nuclear_norm, unfold};
use latent_quartet::{
    build_tree, resolve_nuclear, robinson_foulds, Cpt, LatentTree, Matrix, QuartetRelation,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn perturbed_cpt_matches_straight_line_formula() {
    let seed = 42;
    let got = perturbed_cpt(3, 2, 1.0, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
    for j in 0..2 {
        let raw: Vec<f64> = (0..3)
            .map(|i| base[i][j] + rng.gen_range(0.0..1.0))
            .collect();
        let total: f64 = raw.iter().sum();
        for i in 0..3 {
            assert!((got.matrix()[(i, j)] - raw[i] / total).abs() < 1e-15);
        }
    }
}

#[test]
fn balanced_splits_have_shorter_hidden_paths() {
    for seed in 0..100 {
        let wide = random_topology(16, 0.5, seed).unwrap();
        let skewed = random_topology(16, 0.1, seed).unwrap();
        assert!(wide.hidden_diameter() <= skewed.hidden_diameter());
    }
}

#[test]
fn independent_edge_model_diagnostics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = quartet_model(2, 3, 5, 0.5, 0.0, &mut rng).unwrap();
    let d = diagnostics(&model, 4.0).unwrap();
    assert!(d.delta < 1e-15);
    assert!(d.lemma2_ok && d.a3_ok && d.a4_ok);
    assert!(d.alpha_min > 0.0);
    let small = d.lemma3_bound(10);
    let large = d.lemma3_bound(10_000_000);
    assert!(small < large);
    assert!(large > 1.0 - 1e-9 && large <= 1.0);
    let m = 5000;
    let by_hand = 1.0 - 8.0 * (-(m as f64) * d.alpha_min * d.alpha_min / 32.0).exp();
    assert_eq!(d.lemma3_bound(m), by_hand);
}

#[test]
fn deterministic_hidden_link_fails_conditions() {
    let k = 2;
    let mut t = LatentTree::quartet_tree(["X1", "X2", "X3", "X4"], QuartetRelation::P12_34);
    let ident = |n: usize| Cpt::new(Matrix::identity(n, n)).unwrap();
    let mut cpts = vec![None; 6];
    for slot in cpts.iter_mut().take(4) {
        *slot = Some(ident(k));
    }
    cpts[5] = Some(Cpt::new(Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap());
    t.parameterize(4, vec![0.5, 0.5], cpts).unwrap();
    let d = diagnostics(&t, 4.0).unwrap();
    assert!(!d.lemma2_ok);
    assert!(!d.a4_ok);
    assert!(d.delta > d.threshold());
}

#[test]
fn theta_agrees_across_three_routes() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let k_h = rng.gen_range(2..=3);
        let k_g = rng.gen_range(2..=3);
        let mut parts = QuartetParts::random(k_h, k_g, 4, &mut rng);
        let t = parts.tree();
        let p12 = t.pairwise_distribution(0, 1).unwrap();
        let p34 = t.pairwise_distribution(2, 3).unwrap();
        let closed = theta_closed_form(&p12, &p34).unwrap();
        let unfolded = theta_from_unfoldings(&p12, &p34).unwrap();
        assert!((closed - unfolded).abs() < 1e-9);

        // surrogate model with the hidden link cut; leaf pairs are untouched
        parts.make_independent();
        let surrogate = parts
            .tree()
            .exact_quartet_distribution([0, 1, 2, 3])
            .unwrap();
        let norms: Vec<f64> = QuartetRelation::ALL
            .iter()
            .map(|&g| nuclear_norm(&unfold(&surrogate, g)).unwrap())
            .collect();
        let via_model = norms[1].min(norms[2]) - norms[0];
        assert!((closed - via_model).abs() < 1e-9);
        assert!((diagnostics(&t, 4.0).unwrap().theta_min - closed.max(0.0)).abs() < 1e-9);
    }
}

#[test]
fn zero_hidden_perturbation_is_resolved_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let model = quartet_model(
            rng.gen_range(2..=4),
            rng.gen_range(2..=4),
            6,
            0.5,
            0.0,
            &mut rng,
        )
        .unwrap();
        let d = diagnostics(&model, 4.0).unwrap();
        assert_eq!(d.delta, 0.0);
        let v = resolve_nuclear(&model.exact_quartet_distribution([0, 1, 2, 3]).unwrap()).unwrap();
        assert_eq!(v.relation, QuartetRelation::P12_34);
        assert!(!v.tie);
    }
}

#[test]
fn models_meeting_a4_are_rebuilt_exactly_from_population_tensors() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    for seed in 0..40 {
        let topo = random_topology(5 + (seed % 2) as usize, 0.5, seed).unwrap();
        let model = tree_model(&topo, 2, 2, 0.1, 0.05, &mut rng).unwrap();
        let diag = diagnostics(&model, 4.0).unwrap();
        if !diag.a4_ok {
            continue;
        }
        checked += 1;
        let l = model.leaves().to_vec();
        let (t, _) = build_tree(&model.leaf_names(), seed, |q| {
            let p = model.exact_quartet_distribution([l[q[0]], l[q[1]], l[q[2]], l[q[3]]])?;
            Ok(resolve_nuclear(&p)?.relation)
        })
        .unwrap();
        assert_eq!(robinson_foulds(&t, &model).unwrap(), 0);
    }
    assert!(checked >= 5, "only {checked} models met the condition");
}

fn quartet_cfg(methods: Vec<Method>) -> QuartetExperimentConfig {
    QuartetExperimentConfig {
        k_h: 2,
        k_g: 4,
        n: 6,
        mu: 0.5,
        sample_grid: vec![50, 400],
        trials: 12,
        methods,
        seed: 11,
        timing: false,
    }
}

#[test]
fn quartet_tables_are_reproducible_and_oracle_is_perfect() {
    let cfg = quartet_cfg(vec![Method::Tensor, Method::Spectral(2), Method::Oracle]);
    let a = run_quartet_experiment(&cfg).unwrap();
    let b = run_quartet_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 3 * 2 * 12);
    assert_eq!(a.mean("oracle", 50), Some(1.0));
    assert_eq!(a.mean("oracle", 400), Some(1.0));
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn tree_tables_report_zero_rf_for_oracle() {
    let cfg = TreeExperimentConfig {
        d: 8,
        beta: 0.3,
        k_lo: 2,
        k_hi: 3,
        n: 4,
        mu: 0.3,
        mu_hidden: 0.2,
        sample_grid: vec![200],
        trials: 4,
        methods: vec![Method::Oracle, Method::Nj, Method::Tensor],
        seed: 2,
        timing: false,
    };
    let t = run_tree_experiment(&cfg).unwrap();
    assert_eq!(t.rows.len(), 12);
    assert!(t
        .rows
        .iter()
        .filter(|r| r.method == "oracle")
        .all(|r| r.outcome == 0));
    assert!(t.rows.iter().all(|r| r.outcome <= 10));
    assert_eq!(t, run_tree_experiment(&cfg).unwrap());
}
