//! `simulate`, `train`, `gradcheck` and `report`.
//!
//! Every command reads and writes fixed file names under the output directory
//! and never records wall-clock time, so reruns produce identical bytes.

use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twinforge_core::basis::Dictionary;
use twinforge_core::graybox::graybox_run;
use twinforge_core::train::{
    adaptive_train, minimize_inner, pretrain_finetune, Metric, StepKind, TrainData, TrainReport,
};
use twinforge_core::twin::{
    grad_objective_control, integrated_gradient_error, mismatch, truncation_error, GradientReport, Objective,
};
use twinforge_core::verify::{flux_compare, flux_recovery_report, FluxRecovery};
use twinforge_core::{graybox_solve, trapezoid_weights, twin_solve, ControlField, FluxKind, TwinModel};

use crate::config::{CaseSpec, Loaded, ObjectiveSpec};
use crate::error::{CliError, CliResult};
use crate::io::{self, fmt_f64};

pub const CASE: &str = "case.json";
pub const GRAY: &str = "gray.csv";
pub const SIMULATE: &str = "simulate.json";
pub const DICTIONARY: &str = "dictionary.json";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const GRADCHECK: &str = "gradcheck.json";
pub const GRADCHECK_CSV: &str = "gradcheck.csv";
pub const FLUX_COMPARE: &str = "flux_compare.csv";
pub const HISTORY: &str = "mismatch_history.csv";
pub const OVERLAY: &str = "gradient_overlay.csv";
pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateMeta {
    pub scheme: String,
    pub substeps: usize,
    pub max_courant: f64,
    /// Largest relative change of `sum u dx` between output rows.
    pub mass_drift: f64,
    pub rows: usize,
}

/// Solves the gray box and writes `gray.csv`, `simulate.json` and `case.json`.
pub fn simulate(cfg: &Loaded) -> CliResult<SimulateMeta> {
    let control = cfg.control()?;
    let run = graybox_run(&cfg.case, &control)?;
    let dir = &cfg.output_dir;
    io::write_field(&dir.join(GRAY), &run.field)?;
    let meta = SimulateMeta {
        scheme: "rusanov_forward_euler".into(),
        substeps: run.substeps,
        max_courant: run.max_courant,
        mass_drift: run.mass_drift,
        rows: cfg.grid().len(),
    };
    io::write_json(&dir.join(SIMULATE), &meta)?;
    io::write_json(&dir.join(CASE), &cfg.config.case)?;
    Ok(meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    #[serde(rename = "mismatch")]
    Mismatch,
    #[serde(rename = "pretrain+finetune")]
    PretrainFinetune,
}

impl std::str::FromStr for TrainMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mismatch" => Ok(TrainMode::Mismatch),
            "pretrain+finetune" => Ok(TrainMode::PretrainFinetune),
            _ => Err(format!("expected `mismatch` or `pretrain+finetune`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BasisMode {
    Adaptive,
    Adhoc(PathBuf),
}

impl std::str::FromStr for BasisMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "adaptive" => Ok(BasisMode::Adaptive),
            Some(("adhoc", p)) if !p.is_empty() => Ok(BasisMode::Adhoc(PathBuf::from(p))),
            _ => Err(format!("expected `adaptive` or `adhoc:<file>`, got `{s}`")),
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub stage: String,
    pub step: usize,
    pub kind: String,
    pub basis: String,
    pub dict_size: usize,
    pub accepted: bool,
    /// Mean validation error; `None` where no validation was run.
    pub validation: Option<f64>,
    /// Full-data metric after the step.
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutput {
    pub mode: TrainMode,
    pub basis: String,
    pub dict_size: usize,
    pub final_mismatch: f64,
    pub final_truncation: f64,
    /// Twin PDE solves spent in the truncation-error stage.
    pub pretrain_solves: Option<usize>,
    pub total_solves: usize,
    pub history: Vec<HistoryEntry>,
    pub adaptive: Option<TrainReport>,
}

fn history_of(stage: &str, r: &TrainReport) -> Vec<HistoryEntry> {
    let mut out = vec![HistoryEntry {
        stage: stage.into(),
        step: 0,
        kind: "initial".into(),
        basis: r.initial_dict.iter().map(|b| b.label()).collect::<Vec<_>>().join(" "),
        dict_size: r.initial_dict.len(),
        accepted: true,
        validation: None,
        metric: Some(r.initial_metric),
    }];
    for (k, s) in r.steps.iter().enumerate() {
        out.push(HistoryEntry {
            stage: stage.into(),
            step: k + 1,
            kind: match s.kind {
                StepKind::Forward => "forward".into(),
                StepKind::Backward => "backward".into(),
            },
            basis: s.basis.label(),
            dict_size: s.dict_size,
            accepted: s.accepted,
            validation: s.validation.is_finite().then_some(s.validation),
            metric: s.metric_after,
        });
    }
    out
}

fn require(dir: &Path, names: &[&str]) -> CliResult<()> {
    let missing: Vec<String> = names
        .iter()
        .filter(|n| !dir.join(n).is_file())
        .map(|n| dir.join(n).display().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Missing(missing))
    }
}

fn read_gray(cfg: &Loaded) -> CliResult<twinforge_core::SpaceTimeField> {
    let path = cfg.output_dir.join(GRAY);
    let gray = io::read_field(&path)?;
    if gray.grid() != cfg.grid() || gray.k() != 1 {
        return Err(CliError::format(&path, "gray solution does not match the case grid"));
    }
    Ok(gray)
}

fn base_twin(cfg: &Loaded, dict: Dictionary) -> CliResult<TwinModel> {
    Ok(TwinModel::new(dict, cfg.case.setup()?).with_scheme(cfg.config.scheme))
}

/// Trains the twin on `gray.csv`; writes `dictionary.json` and `train_report.json`.
/// Reads nothing but the gray-box output, the case discretization and the control.
/// A numerical failure still leaves a `train_report.json` holding the error.
pub fn train(cfg: &Loaded, mode: TrainMode, basis: &BasisMode) -> CliResult<TrainOutput> {
    match train_inner(cfg, mode, basis) {
        Err(e) if e.exit_code() == 3 => {
            io::write_json(&cfg.output_dir.join(TRAIN_REPORT), &e.payload())?;
            Err(e)
        }
        r => r,
    }
}

fn train_inner(cfg: &Loaded, mode: TrainMode, basis: &BasisMode) -> CliResult<TrainOutput> {
    require(&cfg.output_dir, &[GRAY])?;
    let gray = read_gray(cfg)?;
    let data = TrainData::new(gray, cfg.control()?)?;
    let tc = cfg.train_config();
    let (twin, adaptive, pretrain_solves, history, label) = match basis {
        BasisMode::Adaptive => {
            let base = base_twin(cfg, Dictionary::new())?;
            match mode {
                TrainMode::Mismatch => {
                    let (t, r) = adaptive_train(&base, &data, &tc, Metric::Mismatch)?;
                    let h = history_of("mismatch", &r);
                    (t, Some(r), None, h, "adaptive".to_string())
                }
                TrainMode::PretrainFinetune => {
                    let (t, r, fm) = pretrain_finetune(&base, &data, &tc)?;
                    let mut h = history_of("pretrain", &r);
                    h.push(HistoryEntry {
                        stage: "finetune".into(),
                        step: 0,
                        kind: "coefficients".into(),
                        basis: String::new(),
                        dict_size: t.dict().len(),
                        accepted: true,
                        validation: None,
                        metric: Some(fm),
                    });
                    let pre = r.solves;
                    (t, Some(r), Some(pre), h, "adaptive".to_string())
                }
            }
        }
        BasisMode::Adhoc(path) => {
            let dict = io::read_dictionary(path)?;
            if dict.is_empty() {
                return Err(CliError::format(path, "ad-hoc dictionary is empty"));
            }
            let mut twin = base_twin(cfg, dict)?;
            let mut h = Vec::new();
            let mut pre = None;
            if mode == TrainMode::PretrainFinetune {
                let r = minimize_inner(&twin, &data, Metric::Truncation, None, &tc)?;
                twin.set_alphas(&r.alphas)?;
                pre = Some(twin.solves());
                h.push(coefficient_entry("pretrain", twin.dict().len(), r.value));
            }
            let r = minimize_inner(&twin, &data, Metric::Mismatch, None, &tc)?;
            twin.set_alphas(&r.alphas)?;
            h.push(coefficient_entry("mismatch", twin.dict().len(), r.value));
            (twin, None, pre, h, format!("adhoc:{}", path.display()))
        }
    };
    let sol = twin_solve(&twin, &data.control)?;
    let final_mismatch = mismatch(&sol, &data.gray, &data.weights, None)?;
    let final_truncation = truncation_error(&twin, &data.gray, &data.control, &data.weights, None)?;
    let out = TrainOutput {
        mode,
        basis: label,
        dict_size: twin.dict().len(),
        final_mismatch,
        final_truncation,
        pretrain_solves,
        total_solves: twin.solves(),
        history,
        adaptive,
    };
    io::write_dictionary(&cfg.output_dir.join(DICTIONARY), twin.dict())?;
    io::write_json(&cfg.output_dir.join(TRAIN_REPORT), &out)?;
    Ok(out)
}

fn coefficient_entry(stage: &str, size: usize, value: f64) -> HistoryEntry {
    HistoryEntry {
        stage: stage.into(),
        step: 0,
        kind: "coefficients".into(),
        basis: String::new(),
        dict_size: size,
        accepted: true,
        validation: None,
        metric: Some(value),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdSweep {
    pub delta: f64,
    /// Gray-box central differences at the sampled components.
    pub fd: Vec<f64>,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckOutput {
    pub objective_twin: f64,
    pub objective_gray: f64,
    /// Twin solves spent on the full adjoint gradient.
    pub adjoint_solves: usize,
    /// Gray-box solves spent on the full finite-difference reference.
    pub reference_solves: usize,
    pub reference_delta: f64,
    /// `sum w (g/w - h/w)^2` against the full reference.
    pub integrated_error: f64,
    /// The same with `g = 0`, for scale.
    pub integrated_reference_norm: f64,
    pub report: GradientReport,
    pub sweep: Vec<FdSweep>,
    pub adjoint: Vec<f64>,
    pub reference: Vec<f64>,
}

fn objective(spec: &ObjectiveSpec) -> Objective {
    match spec {
        ObjectiveSpec::Terminal { target } => Objective::terminal(*target),
    }
}

/// Control as a full grid, so every node is a degree of freedom.
fn grid_control(cfg: &Loaded) -> CliResult<ControlField> {
    Ok(match cfg.control()? {
        ControlField::Scalar { value } => ControlField::Grid {
            values: vec![value; cfg.grid().len()],
        },
        g => g,
    })
}

fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(Path::new("--jobs"), Some("jobs".into()), e.to_string()))
}

/// Gray-box central differences of the objective for the listed control components.
pub fn graybox_fd(cfg: &Loaded, control: &ControlField, comps: &[usize], delta: f64, jobs: usize) -> CliResult<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(CliError::config(Path::new("--fd-step"), Some("fd_step".into()), "must be positive"));
    }
    let obj = objective(&cfg.config.objective);
    let base = control.as_slice().to_vec();
    let eval = |i: usize, s: f64| -> CliResult<f64> {
        let mut v = base.clone();
        v[i] += s;
        let c = ControlField::Grid { values: v };
        Ok(obj.value(&graybox_solve(&cfg.case, &c)?, &c)?)
    };
    pool(jobs)?.install(|| {
        comps
            .par_iter()
            .map(|&i| Ok((eval(i, delta)? - eval(i, -delta)?) / (2.0 * delta)))
            .collect()
    })
}

/// Adjoint gradient of the objective through the trained twin against gray-box
/// finite differences: `components` sampled nodes at every step in `deltas`,
/// and the full grid at the first step.
pub fn gradcheck(cfg: &Loaded, components: usize, deltas: &[f64], jobs: usize) -> CliResult<GradcheckOutput> {
    require(&cfg.output_dir, &[DICTIONARY])?;
    if deltas.is_empty() {
        return Err(CliError::config(Path::new("--fd-step"), Some("fd_step".into()), "need at least one step"));
    }
    let dict = io::read_dictionary(&cfg.output_dir.join(DICTIONARY))?;
    let twin = base_twin(cfg, dict)?;
    let control = grid_control(cfg)?;
    let obj = objective(&cfg.config.objective);
    let (value, g) = grad_objective_control(&twin, &obj, &control)?;
    let adjoint_solves = twin.solves();
    let objective_gray = obj.value(&graybox_solve(&cfg.case, &control)?, &control)?;

    let dofs = g.len();
    let all: Vec<usize> = (0..dofs).collect();
    let reference = graybox_fd(cfg, &control, &all, deltas[0], jobs)?;
    let weights = trapezoid_weights(cfg.grid());
    let integrated_error = integrated_gradient_error(&g, &reference, &weights)?;
    let integrated_reference_norm = integrated_gradient_error(&vec![0.0; dofs], &reference, &weights)?;

    let n = components.min(dofs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.config.seed);
    let mut comps = index::sample(&mut rng, dofs, n).into_vec();
    comps.sort_unstable();
    let mut sweep = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let fd = graybox_fd(cfg, &control, &comps, d, jobs)?;
        let r = GradientReport::new(g.clone(), comps.clone(), Some(fd.clone()))?;
        sweep.push(FdSweep {
            delta: d,
            fd,
            max_rel_err: r.max_rel_err,
        });
    }
    let report = GradientReport::new(g.clone(), comps.clone(), Some(sweep[0].fd.clone()))?;
    let rows = sweep.iter().flat_map(|s| {
        let r = GradientReport::new(g.clone(), comps.clone(), Some(s.fd.clone())).expect("components checked above");
        comps
            .iter()
            .zip(&s.fd)
            .zip(r.errors)
            .map(|((&c, &f), e)| vec![c.to_string(), fmt_f64(s.delta), fmt_f64(g[c]), fmt_f64(f), fmt_f64(e)])
            .collect::<Vec<_>>()
    });
    io::write_csv(
        &cfg.output_dir.join(GRADCHECK_CSV),
        &["component", "delta", "adjoint", "fd", "rel_err"],
        rows,
    )?;
    let out = GradcheckOutput {
        objective_twin: value,
        objective_gray,
        adjoint_solves,
        reference_solves: 2 * dofs,
        reference_delta: deltas[0],
        integrated_error,
        integrated_reference_norm,
        report,
        sweep,
        adjoint: g,
        reference,
    };
    io::write_json(&cfg.output_dir.join(GRADCHECK), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub case: CaseSpec,
    pub solution_range: (f64, f64),
    pub dict_size: usize,
    pub dictionary: Vec<io::BasisRecord>,
    pub flux_recovery: FluxRecovery,
    pub train_mode: TrainMode,
    pub basis: String,
    pub final_mismatch: f64,
    pub final_truncation: f64,
    pub pretrain_solves: Option<usize>,
    pub gradient_integrated_error: f64,
    pub gradient_integrated_reference_norm: f64,
    pub gradient_max_rel_err: f64,
    pub adjoint_solves: usize,
    pub reference_solves: usize,
    pub files: Vec<String>,
}

/// Consolidates the outputs of the other commands in `dir`.
pub fn report(dir: &Path) -> CliResult<Summary> {
    require(dir, &[CASE, GRAY, DICTIONARY, TRAIN_REPORT, GRADCHECK])?;
    let case: CaseSpec = read_json(&dir.join(CASE))?;
    let gray = io::read_field(&dir.join(GRAY))?;
    let dict = io::read_dictionary(&dir.join(DICTIONARY))?;
    let train: TrainOutput = read_json(&dir.join(TRAIN_REPORT))?;
    let grad: GradcheckOutput = read_json(&dir.join(GRADCHECK))?;
    let range = gray.range();

    let plot = match case.flux {
        FluxKind::BuckleyLeverett => (0.0, 1.0),
        _ => {
            let pad = 0.25 * (range.1 - range.0).max(1e-3);
            (range.0 - pad, range.1 + pad)
        }
    };
    let samples = flux_compare(&dict, case.flux, range, plot, 201);
    io::write_csv(
        &dir.join(FLUX_COMPARE),
        &["u", "F_true", "F_twin", "dF_true", "dF_twin", "in_range"],
        samples.iter().map(|s| {
            vec![
                fmt_f64(s.u),
                fmt_f64(s.f_true),
                fmt_f64(s.f_twin),
                fmt_f64(s.df_true),
                fmt_f64(s.df_twin),
                u8::from(s.in_range).to_string(),
            ]
        }),
    )?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    io::write_csv(
        &dir.join(HISTORY),
        &["stage", "step", "kind", "basis", "dict_size", "accepted", "validation", "metric"],
        train.history.iter().map(|h| {
            vec![
                h.stage.clone(),
                h.step.to_string(),
                h.kind.clone(),
                format!("\"{}\"", h.basis),
                h.dict_size.to_string(),
                u8::from(h.accepted).to_string(),
                opt(h.validation),
                opt(h.metric),
            ]
        }),
    )?;
    let g = gray.grid();
    if grad.adjoint.len() != g.len() || grad.reference.len() != g.len() {
        return Err(CliError::format(&dir.join(GRADCHECK), "gradient length does not match the grid"));
    }
    io::write_csv(
        &dir.join(OVERLAY),
        &["i", "j", "t", "x", "adjoint", "reference"],
        (0..g.len()).map(|p| {
            let (i, j) = (p / g.n(), p % g.n());
            vec![
                i.to_string(),
                j.to_string(),
                fmt_f64(g.t_nodes()[i]),
                fmt_f64(g.x_nodes()[j]),
                fmt_f64(grad.adjoint[p]),
                fmt_f64(grad.reference[p]),
            ]
        }),
    )?;
    let summary = Summary {
        flux_recovery: flux_recovery_report(&dict, case.flux, range, 401)?,
        case,
        solution_range: range,
        dict_size: dict.len(),
        dictionary: io::dictionary_records(&dict),
        train_mode: train.mode,
        basis: train.basis,
        final_mismatch: train.final_mismatch,
        final_truncation: train.final_truncation,
        pretrain_solves: train.pretrain_solves,
        gradient_integrated_error: grad.integrated_error,
        gradient_integrated_reference_norm: grad.integrated_reference_norm,
        gradient_max_rel_err: grad.report.max_rel_err,
        adjoint_solves: grad.adjoint_solves,
        reference_solves: grad.reference_solves,
        files: [FLUX_COMPARE, HISTORY, OVERLAY, SUMMARY].iter().map(|s| s.to_string()).collect(),
    };
    io::write_json(&dir.join(SUMMARY), &summary)?;
    Ok(summary)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = io::read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::format(path, format!("at `{}`: {}", e.path(), e.inner())))
}
