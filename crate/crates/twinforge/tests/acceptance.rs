//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach the output.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twinforge_core::basis::BasisId;
use twinforge_core::scheme::cell_mass;
use twinforge_core::tape::worked_example;
use twinforge_core::train::{
    adaptive_train, contraction_check, minimize_inner, pretrain_finetune, sgd_pretrain, Metric, SgdConfig,
    TrainConfig, TrainData, TrainReport,
};
use twinforge_core::twin::{
    fd_component, grad_mismatch_alpha, grad_objective_control, integrated_gradient_error, mismatch, Objective,
};
use twinforge_core::verify::flux_recovery_report;
use twinforge_core::*;

/// Criteria allowed to fail, with the part that fails.
const EXPECTED_RED: &[(u8, &str)] = &[(6, "bound")];

struct Outcome {
    id: u8,
    name: &'static str,
    pass: bool,
    failed_parts: Vec<&'static str>,
    detail: String,
}

fn bl(amplitude: f64, offset: f64) -> GrayBoxCase {
    GrayBoxCase::new(
        FluxKind::BuckleyLeverett,
        InitialCondition::Sine { amplitude, offset },
        build_grid(21, 32, 1.0, (0.0, 1.0)).unwrap(),
        0.5,
    )
    .unwrap()
}

fn data_for(case: &GrayBoxCase) -> TrainData {
    let gray = graybox_solve(case, &ControlField::scalar(0.0)).unwrap();
    TrainData::new(gray, ControlField::scalar(0.0)).unwrap()
}

fn base_for(case: &GrayBoxCase) -> TwinModel {
    TwinModel::new(Dictionary::new(), case.setup().unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    if b.abs() < 1e-14 {
        (a - b).abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn zero_grid(case: &GrayBoxCase) -> ControlField {
    ControlField::Grid {
        values: vec![0.0; case.grid.len()],
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let case = bl(0.45, 0.5);
    let data = data_for(&case);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ids = vec![
        BasisId::univariate(1, 1),
        BasisId::univariate(1, 0),
        BasisId::univariate(2, 1),
        BasisId::univariate(2, 2),
        BasisId::univariate(3, 4),
    ];
    let alphas: Vec<f64> = (0..ids.len())
        .map(|k| if k == 0 { 6.0 } else { 0.0 } + rng.random_range(-0.5..0.5))
        .collect();
    let twin = base_for(&case).with_dict(Dictionary::from_parts(ids, alphas.clone()).unwrap());

    let (_, g) = grad_mismatch_alpha(&twin, &data.gray, &data.control, &data.weights, None).unwrap();
    let mut worst_alpha: f64 = 0.0;
    for i in 0..g.len() {
        let fd = fd_component(
            |x| {
                let t = twin.with_dict(twin.dict().with_alphas(x)?);
                mismatch(&twin_solve(&t, &data.control)?, &data.gray, &data.weights, None)
            },
            &alphas,
            i,
            1e-5,
        )
        .unwrap();
        worst_alpha = worst_alpha.max(rel(g[i], fd));
    }

    let control = zero_grid(&case);
    let obj = Objective::terminal(0.5);
    let (_, gc) = grad_objective_control(&twin, &obj, &control).unwrap();
    let base = control.as_slice().to_vec();
    let mut worst_control: f64 = 0.0;
    for i in 0..gc.len() {
        let fd = fd_component(
            |x| {
                let c = control.with_values(x)?;
                obj.value(&twin_solve(&twin, &c)?, &c)
            },
            &base,
            i,
            1e-5,
        )
        .unwrap();
        worst_control = worst_control.max(rel(gc[i], fd));
    }
    let secs = start.elapsed().as_secs_f64();
    let mut failed = Vec::new();
    if worst_alpha > 1e-4 {
        failed.push("alpha");
    }
    if worst_control > 1e-4 {
        failed.push("control");
    }
    if secs > 10.0 {
        failed.push("runtime");
    }
    Outcome {
        id: 1,
        name: "adjoint correctness",
        pass: failed.is_empty(),
        failed_parts: failed,
        detail: format!(
            "max rel err dM/dalpha {worst_alpha:.2e} ({} comps), dxi/dc {worst_control:.2e} ({} comps), tol 1e-4, {secs:.1} s (limit 10 s)",
            g.len(),
            gc.len()
        ),
    }
}

fn criterion_2() -> Outcome {
    let case = bl(0.45, 0.5);
    let dict = Dictionary::from_parts(vec![BasisId::univariate(1, 1)], vec![6.0]).unwrap();
    let twin = base_for(&case).with_dict(dict);
    let control = zero_grid(&case);
    let obj = Objective::terminal(0.5);
    let before = twin.solves();
    let (_, g) = grad_objective_control(&twin, &obj, &control).unwrap();
    let adjoint = twin.solves() - before;
    let before = twin.solves();
    let base = control.as_slice().to_vec();
    for i in 0..g.len() {
        fd_component(
            |x| {
                let c = control.with_values(x)?;
                obj.value(&twin_solve(&twin, &c)?, &c)
            },
            &base,
            i,
            1e-5,
        )
        .unwrap();
    }
    let fd = twin.solves() - before;
    let dofs = case.grid.len();
    let mut failed = Vec::new();
    if adjoint != 1 {
        failed.push("adjoint");
    }
    if fd != 2 * dofs {
        failed.push("fd");
    }
    Outcome {
        id: 2,
        name: "cost independence",
        pass: failed.is_empty(),
        failed_parts: failed,
        detail: format!("{dofs} control dofs: adjoint {adjoint} solve (want 1), FD {fd} solves (want {})", 2 * dofs),
    }
}

/// Shared by criteria 3, 4 and 6: the wide-range BL case trained with pre-training.
struct Wide {
    case: GrayBoxCase,
    data: TrainData,
    twin: TwinModel,
    report: TrainReport,
    finetuned: f64,
    secs: f64,
}

fn train_wide() -> Wide {
    let start = Instant::now();
    let case = bl(0.45, 0.5);
    let data = data_for(&case);
    let (twin, report, finetuned) = pretrain_finetune(&base_for(&case), &data, &TrainConfig::default()).unwrap();
    Wide {
        case,
        data,
        twin,
        report,
        finetuned,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn graybox_gradient(case: &GrayBoxCase) -> Vec<f64> {
    let control = zero_grid(case);
    let base = control.as_slice().to_vec();
    (0..base.len())
        .map(|i| {
            fd_component(
                |x| Ok(graybox_objective(&graybox_solve(case, &control.with_values(x)?)?)),
                &base,
                i,
                1e-5,
            )
            .unwrap()
        })
        .collect()
}

fn criterion_3(w: &Wide) -> Outcome {
    let start = Instant::now();
    let cfg = TrainConfig::default();
    let truth = graybox_gradient(&w.case);
    let weights = trapezoid_weights(&w.case.grid);
    let control = zero_grid(&w.case);
    let obj = Objective::terminal(0.5);
    let (_, ga) = grad_objective_control(&w.twin, &obj, &control).unwrap();
    let adaptive = integrated_gradient_error(&ga, &truth, &weights).unwrap();

    // ad-hoc baseline: five uniform bases at level 2, same coefficient pipeline
    let ids: Vec<BasisId> = (0..=4).map(|e| BasisId::univariate(2, e)).collect();
    let mut adhoc = base_for(&w.case).with_dict(Dictionary::from_parts(ids, vec![0.0; 5]).unwrap());
    let r = minimize_inner(&adhoc, &w.data, Metric::Truncation, None, &cfg).unwrap();
    adhoc.set_alphas(&r.alphas).unwrap();
    let r = minimize_inner(&adhoc, &w.data, Metric::Mismatch, None, &cfg).unwrap();
    adhoc.set_alphas(&r.alphas).unwrap();
    let (_, gh) = grad_objective_control(&adhoc, &obj, &control).unwrap();
    let baseline = integrated_gradient_error(&gh, &truth, &weights).unwrap();
    let ratio = baseline / adaptive;
    let secs = w.secs + start.elapsed().as_secs_f64();
    let mut failed = Vec::new();
    if !(ratio >= 10.0) {
        failed.push("ratio");
    }
    if secs > 300.0 {
        failed.push("runtime");
    }
    Outcome {
        id: 3,
        name: "gradient quality",
        pass: failed.is_empty(),
        failed_parts: failed,
        detail: format!(
            "integrated error adaptive {adaptive:.2e} ({} bases) vs ad-hoc {baseline:.2e} (5 bases): {ratio:.0}x (need 10x), {secs:.1} s (limit 300 s)",
            w.twin.dict().len()
        ),
    }
}

fn criterion_4(w: &Wide) -> Outcome {
    let range = w.data.gray.range();
    let fr = flux_recovery_report(w.twin.dict(), FluxKind::BuckleyLeverett, range, 401).unwrap();
    let mut failed = Vec::new();
    if fr.derivative_rel_l2 > 0.05 {
        failed.push("derivative");
    }
    if fr.offset_spread_rel > 0.05 {
        failed.push("offset");
    }
    Outcome {
        id: 4,
        name: "flux recovery",
        pass: failed.is_empty(),
        failed_parts: failed,
        detail: format!(
            "u in [{:.3}, {:.3}]: dF rel L2 {:.2e} (tol 5e-2); F~ - F = {:.4} + spread {:.2e} relative (tol 5e-2)",
            range.0, range.1, fr.derivative_rel_l2, fr.offset, fr.offset_spread_rel
        ),
    }
}

fn strictly_decreasing(r: &TrainReport) -> bool {
    r.accepted_validation().windows(2).all(|p| p[1] < p[0])
}

fn criterion_5(w: &Wide) -> Outcome {
    // noise-free data never penalizes extra bases, so both runs use the same small L1 weight
    let cfg = TrainConfig {
        l1_weight: 1e-8,
        ..TrainConfig::default()
    };
    let run = |amp: f64| {
        let case = bl(amp, 0.5);
        let (t, r, _) = pretrain_finetune(&base_for(&case), &data_for(&case), &cfg).unwrap();
        (t.dict().len(), r)
    };
    let (wide, rw) = run(0.45);
    let (narrow, rn) = run(0.1);
    let reports = [&w.report, &rw, &rn];
    let mut failed = Vec::new();
    if !reports.iter().all(|r| strictly_decreasing(r)) {
        failed.push("monotone");
    }
    if reports.iter().any(|r| r.max_outer_reached) {
        failed.push("termination");
    }
    if narrow >= wide {
        failed.push("size");
    }
    Outcome {
        id: 5,
        name: "algorithm discipline",
        pass: failed.is_empty(),
        failed_parts: failed,
        detail: format!(
            "accepted CV strictly decreasing in 3 runs; outer iterations {}/{}/{}; dictionary narrow (amp 0.1) {narrow} vs wide (amp 0.45) {wide} at l1 1e-8",
            w.report.outer_iterations, rw.outer_iterations, rn.outer_iterations
        ),
    }
}

fn advection_implicit(alpha: f64, ic: &[f64]) -> TwinModel {
    let g = build_grid(21, 33, 0.5, (0.0, 1.0)).unwrap();
    let setup = Setup::new(g, ic.to_vec(), 1).unwrap();
    let dict = Dictionary::from_parts(vec![BasisId::univariate(0, 0)], vec![alpha]).unwrap();
    TwinModel::new(dict, setup).with_scheme(Scheme::ImplicitUpwindLinear)
}

fn criterion_6(w: &Wide) -> Outcome {
    // plain SGD crawls on the ill-conditioned full dictionary; use a small fixed one
    let ids = vec![BasisId::univariate(1, 1), BasisId::univariate(1, 0), BasisId::univariate(2, 1)];
    let zero = base_for(&w.case).with_dict(Dictionary::from_parts(ids, vec![0.0; 3]).unwrap());
    let counted = zero.solves();
    let sgd = sgd_pretrain(&zero, &w.data, &SgdConfig::default(), 0).unwrap();
    let sgd_solves = zero.solves() - counted;
    let reduction = sgd.initial / sgd.final_value;

    let (_, cold) = adaptive_train(&base_for(&w.case), &w.data, &TrainConfig::default(), Metric::Mismatch).unwrap();
    let cold_m = cold.final_metric;

    let g = build_grid(21, 33, 0.5, (0.0, 1.0)).unwrap();
    let ic: Vec<f64> = g.x_nodes()[..32]
        .iter()
        .map(|&x| 0.05 * (2.0 * std::f64::consts::PI * x).sin())
        .collect();
    let truth = advection_implicit(4.0, &ic);
    let gray = twin_solve(&truth, &ControlField::scalar(0.0)).unwrap();
    let data = TrainData {
        weights: QuadratureWeights::time_independent(gray.grid()),
        gray,
        control: ControlField::scalar(0.0),
    };
    let c = contraction_check(&advection_implicit(4.2, &ic), &data, 0).unwrap();

    let mut failed = Vec::new();
    if !(reduction >= 100.0) || sgd_solves != 0 {
        failed.push("sgd");
    }
    if !(w.finetuned <= 2.0 * cold_m) {
        failed.push("finetune");
    }
    if !(c.applicable && c.holds == Some(true)) {
        failed.push("bound");
    }
    Outcome {
        id: 6,
        name: "pre-training",
        pass: failed.is_empty(),
        failed_parts: failed,
        detail: format!(
            "SGD on 3 bases T {:.2e} -> {:.2e} ({reduction:.0}x, need 100x) with {sgd_solves} solves; finetuned M {:.2e} vs cold start {cold_m:.2e} (need <= 2x); \
             beta {:.4}, M {:.3e} vs T/(1-beta) {:.3e}, T/(1-sqrt beta)^2 {:.3e}",
            sgd.initial, sgd.final_value, w.finetuned, c.beta, c.mismatch, c.bound, c.sqrt_bound
        ),
    }
}

fn advection_error(n: usize) -> f64 {
    // one period at unit speed
    let case = GrayBoxCase::new(
        FluxKind::LinearAdvection { speed: 1.0 },
        InitialCondition::Sine {
            amplitude: 0.5,
            offset: 0.0,
        },
        build_grid(5, n, 1.0, (0.0, 1.0)).unwrap(),
        0.5,
    )
    .unwrap();
    let f = graybox_solve(&case, &ControlField::scalar(0.0)).unwrap();
    let last = f.grid().m() - 1;
    let dx = f.grid().dx();
    (0..n - 1).map(|j| (f.at(0, last, j) - f.at(0, 0, j)).abs() * dx).sum()
}

fn criterion_7() -> Outcome {
    let cases = [
        (FluxKind::BuckleyLeverett, InitialCondition::Sine { amplitude: 0.4, offset: 0.5 }),
        (FluxKind::Burgers, InitialCondition::Sine { amplitude: 1.0, offset: 0.2 }),
        (
            FluxKind::LinearAdvection { speed: -0.7 },
            InitialCondition::Step { left: 1.0, right: 0.25, jump_pos: 0.4 },
        ),
        (
            FluxKind::BuckleyLeverett,
            InitialCondition::Gaussian { center: 0.5, width: 0.1, height: 0.9 },
        ),
    ];
    let mut drift: f64 = 0.0;
    for (flux, ic) in cases {
        let case = GrayBoxCase::new(flux, ic, build_grid(21, 64, 1.0, (0.0, 1.0)).unwrap(), 0.5).unwrap();
        let f = graybox_solve(&case, &ControlField::scalar(0.0)).unwrap();
        let m = cell_mass(&f);
        drift = m.iter().fold(drift, |d, v| d.max((v - m[0]).abs() / m[0].abs()));
    }
    let coarse = advection_error(129);
    let fine = advection_error(257);
    let ratio = coarse / fine;
    let mut failed = Vec::new();
    if drift > 1e-12 {
        failed.push("conservation");
    }
    if !(1.6..=2.4).contains(&ratio) {
        failed.push("convergence");
    }
    Outcome {
        id: 7,
        name: "scheme sanity",
        pass: failed.is_empty(),
        failed_parts: failed,
        detail: format!(
            "mass drift {drift:.1e} (tol 1e-12); advection L1 error after one period {coarse:.3e} (N=129) -> {fine:.3e} (N=257), ratio {ratio:.3} (need 2 +- 20%)"
        ),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (c1, c2) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let (mut tape, out) = worked_example(c1, c2).unwrap();
        let g = tape.backward(out).unwrap().input_grads;
        worst = worst.max((g[0] - (c1.cos() + c2)).abs()).max((g[1] - c1).abs());
    }
    let pass = worst <= 1e-12;
    Outcome {
        id: 8,
        name: "tape worked example",
        pass,
        failed_parts: if pass { vec![] } else { vec!["gradient"] },
        detail: format!("10 random points, max abs err {worst:.1e} against (cos c1 + c2, c1) (tol 1e-12)"),
    }
}

fn main() {
    let mut outcomes = vec![criterion_1(), criterion_2()];
    let wide = train_wide();
    outcomes.push(criterion_3(&wide));
    outcomes.push(criterion_4(&wide));
    outcomes.push(criterion_5(&wide));
    outcomes.push(criterion_6(&wide));
    outcomes.push(criterion_7());
    outcomes.push(criterion_8());

    let mut unexpected = 0;
    for o in &outcomes {
        let expected: Vec<&str> = EXPECTED_RED.iter().filter(|(id, _)| *id == o.id).map(|(_, p)| *p).collect();
        let tag = if o.pass {
            "PASS".to_string()
        } else if o.failed_parts.iter().all(|p| expected.contains(p)) {
            format!("FAIL (expected: {})", o.failed_parts.join(", "))
        } else {
            unexpected += 1;
            format!("FAIL ({})", o.failed_parts.join(", "))
        };
        println!("criterion {} {}: {tag}: {}", o.id, o.name, o.detail);
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed unexpectedly");
        std::process::exit(1);
    }
}
