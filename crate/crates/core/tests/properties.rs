use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use shortcut_core::dataset::parse_dataset;
use shortcut_core::rng::{normals, seeded};
use shortcut_core::{fit_closed_form, fit_iterative, penalty_value, write_dataset, Dataset, ModelParams, PenaltySpec, Role, TrainConfig};

fn random_dataset(seed: u64, n: usize, dims: (usize, usize, usize)) -> Dataset {
    let mut rng = seeded(seed);
    let (c, u, s) = dims;
    let m = |k: usize, rng: &mut _| DMatrix::from_vec(n, k, normals(rng, n * k));
    let cm = m(c, &mut rng);
    let um = m(u, &mut rng);
    let sm = m(s, &mut rng);
    let y = DVector::from_vec(normals(&mut rng, n));
    Dataset::new(cm, um, sm, y, Role::Train).unwrap()
}

// Normal equations on the full design with the penalty only on the u+s block.
fn ridge_oracle(ds: &Dataset, lambda: f64, weights: &[f64]) -> Vec<f64> {
    let x = DMatrix::from_columns(&ds.c.column_iter().chain(ds.u.column_iter()).chain(ds.s.column_iter()).collect::<Vec<_>>());
    let n = ds.n() as f64;
    let mut a = x.transpose() * &x / n;
    let c = ds.c.ncols();
    for (i, w) in weights.iter().enumerate() {
        a[(c + i, c + i)] += lambda * w;
    }
    let b = x.transpose() * &ds.y / n;
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

fn flat(p: &ModelParams) -> Vec<f64> {
    p.beta_c.iter().chain(&p.beta_u).chain(&p.beta_s).copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn closed_form_solves_penalized_normal_equations(
        seed in any::<u64>(),
        log_lambda in -4.0f64..1.0,
        w in prop::collection::vec(0.1f64..10.0, 3),
        weighted in any::<bool>(),
    ) {
        let ds = random_dataset(seed, 60, (2, 2, 1));
        let lambda = 10f64.powf(log_lambda);
        let (spec, weights) = if weighted {
            (PenaltySpec::WeightedL2 { weights: w.clone() }, w)
        } else {
            (PenaltySpec::L2, vec![1.0; 3])
        };
        let got = flat(&fit_closed_form(&ds, lambda, &spec).unwrap());
        let want = ridge_oracle(&ds, lambda, &weights);
        for (g, e) in got.iter().zip(&want) {
            prop_assert!((g - e).abs() < 1e-8 * (1.0 + e.abs()), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn penalties_are_homogeneous(
        beta in prop::collection::vec(-5.0f64..5.0, 5),
        a in -3.0f64..3.0,
    ) {
        let p = ModelParams { beta_c: beta[..2].to_vec(), beta_u: beta[2..4].to_vec(), beta_s: beta[4..].to_vec(), intercept: 0.0 };
        let scaled = ModelParams {
            beta_c: p.beta_c.iter().map(|v| v * a).collect(),
            beta_u: p.beta_u.iter().map(|v| v * a).collect(),
            beta_s: p.beta_s.iter().map(|v| v * a).collect(),
            intercept: 0.0,
        };
        let l1 = penalty_value(&p, &PenaltySpec::L1).unwrap();
        let l2 = penalty_value(&p, &PenaltySpec::L2).unwrap();
        prop_assert!(l1 >= 0.0 && l2 >= 0.0);
        prop_assert!((penalty_value(&scaled, &PenaltySpec::L1).unwrap() - a.abs() * l1).abs() < 1e-9 * (1.0 + l1));
        prop_assert!((penalty_value(&scaled, &PenaltySpec::L2).unwrap() - a * a * l2).abs() < 1e-9 * (1.0 + l2));
        prop_assert_eq!(penalty_value(&p, &PenaltySpec::None).unwrap(), 0.0);
        // L1 and L2 leave the concept block alone
        let mut no_us = p.clone();
        no_us.beta_u = vec![0.0; 2];
        no_us.beta_s = vec![0.0];
        for spec in [PenaltySpec::L1, PenaltySpec::L2] {
            prop_assert!(penalty_value(&no_us, &spec).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn dataset_text_round_trips(seed in any::<u64>(), n in 1usize..20) {
        let ds = random_dataset(seed, n, (1, 2, 1));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&ds, &path).unwrap();
        let back = parse_dataset(&std::fs::read_to_string(&path).unwrap()).unwrap();
        prop_assert_eq!(back.c, ds.c);
        prop_assert_eq!(back.u, ds.u);
        prop_assert_eq!(back.s, ds.s);
        prop_assert_eq!(back.y, ds.y);
    }
}

#[test]
fn large_l1_penalty_zeroes_the_penalized_block() {
    let ds = random_dataset(11, 200, (2, 2, 1));
    let cfg = TrainConfig {
        learning_rate: 0.1,
        max_epochs: 5000,
        tol: 1e-12,
        lambda_reg: 10.0,
        ..TrainConfig::default()
    };
    let (p, trace) = fit_iterative(&ds, &PenaltySpec::L1, &cfg).unwrap();
    assert!(trace.converged);
    assert!(p.beta_u.iter().chain(&p.beta_s).all(|v| *v == 0.0), "{p:?}");
    // with the u+s block at zero the concept block is plain least squares
    let want = ridge_oracle(&Dataset::new(ds.c.clone(), DMatrix::zeros(200, 0), DMatrix::zeros(200, 0), ds.y.clone(), Role::Train).unwrap(), 0.0, &[]);
    for (g, e) in p.beta_c.iter().zip(&want) {
        assert!((g - e).abs() < 1e-6, "{g} vs {e}");
    }
}

#[test]
fn iterative_l2_converges_to_closed_form() {
    let ds = random_dataset(3, 300, (2, 2, 1));
    let cfg = TrainConfig {
        learning_rate: 0.2,
        max_epochs: 100_000,
        tol: 1e-13,
        lambda_reg: 0.05,
        ..TrainConfig::default()
    };
    let (it, _) = fit_iterative(&ds, &PenaltySpec::L2, &cfg).unwrap();
    let cf = fit_closed_form(&ds, 0.05, &PenaltySpec::L2).unwrap();
    for (a, b) in flat(&it).iter().zip(flat(&cf)) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}
