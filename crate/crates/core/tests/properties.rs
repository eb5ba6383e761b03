use proptest::prelude::*;
use twinforge_core::basis::{neighborhood, BasisId};
use twinforge_core::scheme::cell_mass;
use twinforge_core::tape::worked_example;
use twinforge_core::train::{FoldSplit, TrainData};
use twinforge_core::twin::{
    fd_component, grad_mismatch_alpha, grad_objective_control, mismatch, truncation_error,
};
use twinforge_core::*;

fn bl(m: usize, n: usize, amplitude: f64, offset: f64) -> GrayBoxCase {
    GrayBoxCase::new(
        FluxKind::BuckleyLeverett,
        InitialCondition::Sine { amplitude, offset },
        build_grid(m, n, 1.0, (0.0, 1.0)).unwrap(),
        0.5,
    )
    .unwrap()
}

fn dict(alphas: &[f64]) -> Dictionary {
    let ids = vec![BasisId::univariate(1, 1), BasisId::univariate(2, 1), BasisId::univariate(2, 3)];
    Dictionary::from_parts(ids, alphas.to_vec()).unwrap()
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(12)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn source_free_runs_conserve_mass(amp in 0.05..0.45f64, off in 0.45..0.55f64, n in 9usize..40) {
        let case = bl(7, n, amp, off);
        let gray = graybox_solve(&case, &ControlField::scalar(0.0)).unwrap();
        let mass = cell_mass(&gray);
        for m in &mass {
            prop_assert!((m - mass[0]).abs() <= 1e-12 * mass[0].abs());
        }
        let twin = TwinModel::new(dict(&[0.3, -0.2, 0.1]), case.setup().unwrap());
        let sol = twin_solve(&twin, &ControlField::scalar(0.0)).unwrap();
        let tm = cell_mass(&sol);
        for m in &tm {
            prop_assert!((m - tm[0]).abs() <= 1e-12 * tm[0].abs());
        }
    }

    #[test]
    fn monotone_scheme_respects_initial_bounds(amp in 0.05..0.45f64, off in 0.45..0.55f64) {
        let case = bl(9, 24, amp, off);
        let gray = graybox_solve(&case, &ControlField::scalar(0.0)).unwrap();
        let (lo, hi) = gray.range();
        let ic: Vec<f64> = gray.row(0, 0).to_vec();
        let ic_lo = ic.iter().cloned().fold(f64::INFINITY, f64::min);
        let ic_hi = ic.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo >= ic_lo - 1e-14 && hi <= ic_hi + 1e-14);
    }

    #[test]
    fn periodic_shift_commutes_with_the_solve(shift in 1usize..15, amp in 0.1..0.4f64) {
        let n = 17;
        let case = bl(6, n, amp, 0.5);
        let setup = case.setup().unwrap();
        let cells = setup.initial().to_vec();
        let mut rolled = cells.clone();
        rolled.rotate_right(shift);
        let a = TwinModel::new(dict(&[0.4, -0.1, 0.05]), setup.clone());
        let b = TwinModel::new(
            dict(&[0.4, -0.1, 0.05]),
            Setup::new(case.grid.clone(), rolled, setup.substeps()).unwrap(),
        );
        let sa = twin_solve(&a, &ControlField::scalar(0.0)).unwrap();
        let sb = twin_solve(&b, &ControlField::scalar(0.0)).unwrap();
        for i in 0..6 {
            for j in 0..n - 1 {
                let diff = sa.at(0, i, j) - sb.at(0, i, (j + shift) % (n - 1));
                prop_assert!(diff.abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn mismatch_splits_over_a_mask_and_its_complement(bits in proptest::collection::vec(any::<bool>(), 7 * 12)) {
        let case = bl(7, 12, 0.3, 0.5);
        let gray = graybox_solve(&case, &ControlField::scalar(0.0)).unwrap();
        let twin = TwinModel::new(dict(&[0.5, 0.0, 0.0]), case.setup().unwrap());
        let sol = twin_solve(&twin, &ControlField::scalar(0.0)).unwrap();
        let w = trapezoid_weights(&case.grid);
        let mask = Mask::from_bits(&case.grid, bits).unwrap();
        let a = mismatch(&sol, &gray, &w, Some(&mask)).unwrap();
        let b = mismatch(&sol, &gray, &w, Some(&mask.complement())).unwrap();
        let full = mismatch(&sol, &gray, &w, None).unwrap();
        prop_assert!((a + b - full).abs() <= 1e-14 * full.max(1e-300));
        let ta = truncation_error(&twin, &gray, &ControlField::scalar(0.0), &w, Some(&mask)).unwrap();
        let tb = truncation_error(&twin, &gray, &ControlField::scalar(0.0), &w, Some(&mask.complement())).unwrap();
        let tf = truncation_error(&twin, &gray, &ControlField::scalar(0.0), &w, None).unwrap();
        prop_assert!((ta + tb - tf).abs() <= 1e-13 * tf.max(1e-300));
    }

    #[test]
    fn alpha_gradient_matches_central_differences(a in -0.5..0.5f64, b in -0.3..0.3f64, c in -0.3..0.3f64) {
        let case = bl(6, 12, 0.35, 0.5);
        let gray = graybox_solve(&case, &ControlField::scalar(0.0)).unwrap();
        let twin = TwinModel::new(dict(&[0.6 + a, b, c]), case.setup().unwrap());
        let w = trapezoid_weights(&case.grid);
        let control = ControlField::scalar(0.0);
        let (_, g) = grad_mismatch_alpha(&twin, &gray, &control, &w, None).unwrap();
        let alphas = twin.dict().alphas().to_vec();
        for (i, gi) in g.iter().enumerate() {
            let fd = fd_component(
                |x| mismatch(&twin_solve(&twin.with_dict(twin.dict().with_alphas(x)?), &control)?, &gray, &w, None),
                &alphas,
                i,
                1e-6,
            )
            .unwrap();
            prop_assert!((gi - fd).abs() <= 1e-5 * fd.abs().max(1e-8), "{i}: {gi} vs {fd}");
        }
    }

    #[test]
    fn control_gradient_is_one_solve_and_matches_fd(seed in any::<u64>()) {
        let case = bl(5, 9, 0.3, 0.5);
        let twin = TwinModel::new(dict(&[0.7, -0.1, 0.05]), case.setup().unwrap());
        let len = case.grid.len();
        let values: Vec<f64> = (0..len).map(|k| 0.01 * (((seed >> (k % 60)) & 7) as f64 - 3.5)).collect();
        let control = ControlField::Grid { values: values.clone() };
        let obj = Objective::terminal(0.5);
        let before = twin.solves();
        let (_, g) = grad_objective_control(&twin, &obj, &control).unwrap();
        prop_assert_eq!(twin.solves() - before, 1);
        for i in [0, len / 3, len - 1] {
            let fd = fd_component(
                |x| obj.value(&twin_solve(&twin, &control.with_values(x)?)?, &control.with_values(x)?),
                &values,
                i,
                1e-6,
            )
            .unwrap();
            prop_assert!((g[i] - fd).abs() <= 1e-5 * fd.abs().max(1e-7), "{i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn worked_example_gradient_is_exact(c1 in -10.0..10.0f64, c2 in -10.0..10.0f64) {
        let (mut tape, out) = worked_example(c1, c2).unwrap();
        let g = tape.backward(out).unwrap().input_grads;
        prop_assert!((g[0] - (c1.cos() + c2)).abs() <= 1e-12);
        prop_assert!((g[1] - c1).abs() <= 1e-12);
    }

    #[test]
    fn neighborhoods_stay_within_one_level(j in 0i32..6, eta in -8i64..8) {
        let id = BasisId::univariate(j, eta);
        for n in neighborhood(std::slice::from_ref(&id)) {
            prop_assert!(n.resolution_sum() == id.resolution_sum() || n.resolution_sum() == id.resolution_sum() + 1);
            prop_assert!(n != id);
        }
    }

    #[test]
    fn folds_partition_every_node(k in 2usize..5, seed in any::<u64>()) {
        let grid = build_grid(6, 11, 1.0, (0.0, 1.0)).unwrap();
        let split = FoldSplit::new(&grid, k, seed).unwrap();
        let mut count = vec![0usize; grid.len()];
        for f in 0..k {
            let m = split.fold_mask(&grid, f).unwrap();
            for (c, &b) in count.iter_mut().zip(m.bits()) {
                *c += usize::from(b);
            }
        }
        prop_assert!(count.iter().all(|&c| c == 1));
    }
}

#[test]
fn training_is_deterministic_under_a_seed() {
    use twinforge_core::train::{adaptive_train, Metric, TrainConfig};
    let case = bl(7, 12, 0.3, 0.5);
    let gray = graybox_solve(&case, &ControlField::scalar(0.0)).unwrap();
    let data = TrainData::new(gray, ControlField::scalar(0.0)).unwrap();
    let base = TwinModel::new(Dictionary::new(), case.setup().unwrap());
    let cfg = TrainConfig {
        seed: 11,
        max_outer_iters: 3,
        ..TrainConfig::default()
    };
    let (a, ra) = adaptive_train(&base, &data, &cfg, Metric::Truncation).unwrap();
    let (b, rb) = adaptive_train(&base, &data, &cfg, Metric::Truncation).unwrap();
    assert_eq!(a.dict(), b.dict());
    assert_eq!(ra.steps, rb.steps);
    let v = ra.accepted_validation();
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
}
