use std::path::{Path, PathBuf};
use std::time::Instant;

use diffmax::cv::{run_cv, select_gamma, CvReport, CvSettings, GammaSelection};
use diffmax::mm::{run_with_rng, terminal_residual, TerminalResidual, Termination};
use diffmax::pwa::{
    best_run, default_c, multistart, start_rngs, synth_example1, synth_example2, Dataset, InitSampler, PWAModel, PWAProblem,
};
use diffmax::snewton::SnConfig;
use diffmax::stationarity::{
    classify_point, dc_critical_check, dstat_residual_with, subdifferentials, weak_mstat_residual, PiecewiseAffine1D,
    StationarityFlags, SubdifferentialReport,
};
use serde::Serialize;

use crate::config::{BenchEntry, Gamma, GammaChoice, RunConfig};
use crate::output::{csv_writer, io, opt, unix_time, write_histogram, write_json, write_text};
use crate::CliError;

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn problem(cfg: &RunConfig, data: Dataset, k1: usize, k2: usize, gamma: f64) -> PWAProblem {
    PWAProblem {
        dataset: data,
        k1,
        k2,
        loss: cfg.loss,
        gamma,
        regularizer: cfg.regularizer,
        bound: cfg.bound,
    }
}

fn cv_settings(cfg: &RunConfig, grid: Vec<(usize, usize)>, gamma: f64) -> CvSettings {
    CvSettings {
        folds: cfg.folds,
        starts: cfg.starts,
        simulations: cfg.simulations,
        grid,
        mm: cfg.mm_config(1.0),
        c: cfg.mm.c,
        init: cfg.init,
        loss: cfg.loss,
        gamma,
        regularizer: cfg.regularizer,
        seed: cfg.seed,
    }
}

/// The configured gamma, or the cross-validated choice for `(k1, k2)`.
fn resolve_gamma(
    cfg: &RunConfig,
    data: &Dataset,
    k1: usize,
    k2: usize,
) -> Result<(f64, Option<GammaSelection>), CliError> {
    match cfg.gamma {
        Gamma::Value(g) => Ok((g, None)),
        Gamma::Choice(GammaChoice::Cv) => {
            let sel = select_gamma(data, k1, k2, &cv_settings(cfg, vec![(k1, k2)], 0.0), cfg.gamma_grid)?;
            Ok((sel.gamma, Some(sel)))
        }
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Tolerance => "tolerance",
        Termination::StepTolerance => "step_tolerance",
        Termination::MaxOuter => "max_outer",
        Termination::Stalled => "stalled",
    }
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BestRun {
    start: usize,
    objective: f64,
    /// Objective with the paper's scaling (squared residuals without 1/2).
    paper_objective: f64,
    initial_objective: f64,
    termination: Termination,
    outer_iterations: usize,
    subproblems: usize,
    sn_iterations: usize,
    seconds: f64,
}

#[derive(Serialize)]
struct Polished {
    objective: f64,
    paper_objective: f64,
    termination: Termination,
    outer_iterations: usize,
    subproblems: usize,
    sn_iterations: usize,
    seconds: f64,
}

/// The saved model.
#[derive(Serialize)]
struct FinalModel {
    objective: f64,
    paper_objective: f64,
    residual: Option<TerminalResidual>,
    residual_error: Option<String>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    command: &'static str,
    generated_unix: u64,
    config: &'a RunConfig,
    c: f64,
    gamma: f64,
    gamma_selection: Option<GammaSelection>,
    starts_succeeded: usize,
    starts_failed: usize,
    best: BestRun,
    polish: Option<Polished>,
    model: FinalModel,
    files: Vec<&'static str>,
}

pub fn fit(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = load_dataset(cfg.dataset_path()?)?;
    let (gamma, gamma_selection) = resolve_gamma(cfg, &data, cfg.k1, cfg.k2)?;
    let c = cfg.mm.c.unwrap_or_else(|| default_c(&data));
    let prob = problem(cfg, data, cfg.k1, cfg.k2, gamma);
    let cp = prob.assemble()?;
    let mm = cfg.mm_config(c);
    let sampler = InitSampler::new(&prob, cfg.init)?;
    let runs = multistart(&cp, &mm, &sampler, cfg.starts, cfg.seed);
    let Some(b) = best_run(&runs) else {
        let first = runs.iter().find_map(|r| r.as_ref().err()).map(|e| e.to_string());
        return Err(CliError::Solver(format!(
            "all {} starts failed; first error: {}",
            cfg.starts,
            first.unwrap_or_default()
        )));
    };
    let best = runs[b].as_ref().expect("best run succeeded");

    let mut starts = csv_writer(&out.join("starts.csv"))?;
    starts
        .write_record([
            "start",
            "status",
            "objective",
            "paper_objective",
            "initial_objective",
            "outer_iterations",
            "subproblems",
            "sn_iterations",
            "termination",
            "seconds",
            "error",
        ])
        .map_err(io)?;
    let mut objectives = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let row = match r {
            Ok(r) => {
                objectives.push(r.objective);
                vec![
                    i.to_string(),
                    "ok".into(),
                    r.objective.to_string(),
                    prob.paper_objective(&cp, &r.theta)?.to_string(),
                    r.initial_objective.to_string(),
                    r.outer_iterations.to_string(),
                    r.subproblems.to_string(),
                    r.sn_iterations.to_string(),
                    termination_name(r.termination).into(),
                    format!("{:.6}", r.seconds),
                    String::new(),
                ]
            }
            Err(e) => {
                let mut row = vec![i.to_string(), "failed".into()];
                row.extend(std::iter::repeat_n(String::new(), 8));
                row.push(e.to_string());
                row
            }
        };
        starts.write_record(&row).map_err(io)?;
    }
    starts.flush().map_err(io)?;

    best.trace.write_csv(std::fs::File::create(out.join("trace.csv")).map_err(io)?)?;
    write_histogram(&out.join("histogram.csv"), &objectives, cfg.histogram_bins)?;
    let mut files = vec!["model.json", "starts.csv", "trace.csv", "histogram.csv"];

    let mut theta = best.theta.clone();
    let polish = if cfg.polish.enabled {
        // The selection stream continues independently of the start's own.
        let (_, rng) = start_rngs(cfg.seed ^ 0x9017_15E5, b);
        let p = run_with_rng(&cp, &cfg.polish_config(c), &theta, rng)?;
        p.trace.write_csv(std::fs::File::create(out.join("polish_trace.csv")).map_err(io)?)?;
        files.push("polish_trace.csv");
        theta = p.theta.clone();
        Some(Polished {
            objective: p.objective,
            paper_objective: prob.paper_objective(&cp, &p.theta)?,
            termination: p.termination,
            outer_iterations: p.outer_iterations,
            subproblems: p.subproblems,
            sn_iterations: p.sn_iterations,
            seconds: p.seconds,
        })
    } else {
        None
    };
    write_text(&out.join("model.json"), &(prob.model(&theta)?.to_json()? + "\n"))?;

    let (residual, residual_error) = match terminal_residual(&cp, &theta, &mm) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = FitReport {
        command: "fit",
        generated_unix: unix_time(),
        config: cfg,
        c,
        gamma,
        gamma_selection,
        starts_succeeded: objectives.len(),
        starts_failed: runs.len() - objectives.len(),
        best: BestRun {
            start: b,
            objective: best.objective,
            paper_objective: prob.paper_objective(&cp, &best.theta)?,
            initial_objective: best.initial_objective,
            termination: best.termination,
            outer_iterations: best.outer_iterations,
            subproblems: best.subproblems,
            sn_iterations: best.sn_iterations,
            seconds: best.seconds,
        },
        polish,
        model: FinalModel {
            objective: cp.objective(&theta)?,
            paper_objective: prob.paper_objective(&cp, &theta)?,
            residual,
            residual_error,
        },
        files,
    };
    write_json(&out.join("fit_report.json"), &report)?;
    println!(
        "fit: best start {b}, model objective {:.6e} (paper scale {:.6e}), residual {}, {} of {} starts succeeded",
        report.model.objective,
        report.model.paper_objective,
        report.model.residual.map(|r| format!("{:.2e}", r.value)).unwrap_or_else(|| "n/a".into()),
        report.starts_succeeded,
        cfg.starts
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// cv
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CvOutput<'a> {
    command: &'static str,
    generated_unix: u64,
    config: &'a RunConfig,
    /// Gamma used per cell, in grid order.
    gammas: Vec<f64>,
    report: CvReport,
}

pub fn cv(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data = load_dataset(cfg.dataset_path()?)?;
    let (report, gammas) = match cfg.gamma {
        Gamma::Value(g) => (run_cv(&data, &cv_settings(cfg, cfg.grid.clone(), g))?, vec![g; cfg.grid.len()]),
        Gamma::Choice(GammaChoice::Cv) => {
            let mut cells = Vec::new();
            let mut gammas = Vec::new();
            for &(k1, k2) in &cfg.grid {
                let (g, _) = resolve_gamma(cfg, &data, k1, k2)?;
                cells.extend(run_cv(&data, &cv_settings(cfg, vec![(k1, k2)], g))?.cells);
                gammas.push(g);
            }
            (CvReport { cells }, gammas)
        }
    };

    // Table layout: one row per k2, one column per k1.
    let mut k1s: Vec<usize> = cfg.grid.iter().map(|c| c.0).collect();
    let mut k2s: Vec<usize> = cfg.grid.iter().map(|c| c.1).collect();
    k1s.sort_unstable();
    k1s.dedup();
    k2s.sort_unstable();
    k2s.dedup();
    let mut table = csv_writer(&out.join("ratio_grid.csv"))?;
    let mut header = vec!["k2\\k1".to_string()];
    header.extend(k1s.iter().map(|k| k.to_string()));
    table.write_record(&header).map_err(io)?;
    for &k2 in &k2s {
        let mut row = vec![k2.to_string()];
        for &k1 in &k1s {
            row.push(match report.cell(k1, k2) {
                None => String::new(),
                Some(c) => c.ratio.map(|r| r.to_string()).unwrap_or_else(|| "failed".into()),
            });
        }
        table.write_record(&row).map_err(io)?;
    }
    table.flush().map_err(io)?;

    let mut cells = csv_writer(&out.join("cv_cells.csv"))?;
    cells
        .write_record(["k1", "k2", "gamma", "ratio", "e_pa", "e_ls", "error"])
        .map_err(io)?;
    let mut folds = csv_writer(&out.join("cv_folds.csv"))?;
    folds
        .write_record(["k1", "k2", "simulation", "fold", "e_pa", "e_ls", "failed_starts"])
        .map_err(io)?;
    let mut objectives = csv_writer(&out.join("cv_objectives.csv"))?;
    objectives
        .write_record(["k1", "k2", "simulation", "fold", "objective"])
        .map_err(io)?;
    for (cell, g) in report.cells.iter().zip(&gammas) {
        let (k1, k2) = (cell.k1.to_string(), cell.k2.to_string());
        cells
            .write_record([
                k1.clone(),
                k2.clone(),
                g.to_string(),
                opt(cell.ratio),
                opt(cell.e_pa),
                opt(cell.e_ls),
                cell.error.clone().unwrap_or_default(),
            ])
            .map_err(io)?;
        for (s, sim) in cell.simulations.iter().enumerate() {
            for (f, (pa, ls)) in sim.fold_pa.iter().zip(&sim.fold_ls).enumerate() {
                folds
                    .write_record([
                        k1.clone(),
                        k2.clone(),
                        s.to_string(),
                        f.to_string(),
                        pa.to_string(),
                        ls.to_string(),
                        sim.failed_starts.to_string(),
                    ])
                    .map_err(io)?;
                for v in &sim.fold_objectives[f] {
                    objectives
                        .write_record([k1.clone(), k2.clone(), s.to_string(), f.to_string(), v.to_string()])
                        .map_err(io)?;
                }
            }
        }
    }
    for w in [&mut cells, &mut folds, &mut objectives] {
        w.flush().map_err(io)?;
    }

    let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
    write_json(
        &out.join("cv_report.json"),
        &CvOutput {
            command: "cv",
            generated_unix: unix_time(),
            config: cfg,
            gammas,
            report,
        },
    )?;
    println!("cv: {} cells, {failed} failed", cfg.grid.len());
    if failed == cfg.grid.len() {
        return Err(CliError::Solver("every grid cell failed".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn synthesize(example: u8, n: usize, seed: u64) -> Result<(Dataset, PWAModel), CliError> {
    let made = match example {
        1 => synth_example1(n, seed),
        _ => synth_example2(n, seed),
    };
    made.map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Serialize)]
struct SynthReport<'a> {
    command: &'static str,
    generated_unix: u64,
    config: &'a RunConfig,
    files: [&'static str; 2],
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (data, truth) = synthesize(cfg.synth.example, cfg.synth.n, cfg.seed)?;
    data.write_csv(std::fs::File::create(out.join("data.csv")).map_err(io)?)?;
    write_text(&out.join("truth.json"), &(truth.to_json()? + "\n"))?;
    write_json(
        &out.join("synth_report.json"),
        &SynthReport {
            command: "synth",
            generated_unix: unix_time(),
            config: cfg,
            files: ["data.csv", "truth.json"],
        },
    )?;
    println!("synth: example {} with {} samples", cfg.synth.example, cfg.synth.n);
    Ok(())
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FixtureResult {
    function: &'static str,
    point: f64,
    subdifferentials: SubdifferentialReport,
    flags: StationarityFlags,
    expected: StationarityFlags,
    matches: bool,
}

fn flags(c: bool, l: bool, d: bool, local_min: bool) -> StationarityFlags {
    StationarityFlags {
        c_stationary: c,
        l_stationary: l,
        d_stationary: d,
        local_min,
    }
}

/// The univariate examples with their known classifications.
fn fixtures() -> Vec<(&'static str, PiecewiseAffine1D, f64, StationarityFlags)> {
    let lin = PiecewiseAffine1D::affine;
    let abs = lin(1.0, 0.0).max(&lin(-1.0, 0.0));
    let ridge = abs.neg().max(&lin(1.0, -1.0));
    let shelf = lin(-1.0, -1.0).max(&lin(-1.0, 0.0).min(&lin(0.0, 0.0)));
    let vee = lin(1.0, 0.0).max(&lin(-1.0, -4.0));
    vec![
        ("|x|", abs.clone(), 0.0, flags(true, true, true, true)),
        ("-|x|", abs.neg(), 0.0, flags(true, false, false, false)),
        ("max(-|x|, x-1)", ridge.clone(), 0.0, flags(true, false, false, false)),
        ("max(-|x|, x-1)", ridge, 0.5, flags(true, true, true, true)),
        ("max(-x-1, min(-x, 0))", shelf.clone(), 0.0, flags(true, true, false, false)),
        ("max(-x-1, min(-x, 0))", shelf, -1.0, flags(true, true, true, true)),
        ("max(x, -x-4)", vee, -2.0, flags(true, true, true, true)),
    ]
}

#[derive(Serialize)]
struct CriticalResult {
    f1: &'static str,
    f2: &'static str,
    point: f64,
    critical: bool,
    expected: bool,
}

#[derive(Serialize)]
struct ModelCheck {
    model: PathBuf,
    objective: f64,
    paper_objective: f64,
    c: f64,
    dstat_residual: f64,
    worst_selection: Vec<(usize, usize)>,
    coverage: f64,
    selections: usize,
    weak_residual: f64,
    /// Samples with more than one active atom pair.
    tied_samples: usize,
    classification: &'static str,
}

#[derive(Serialize)]
struct CheckReport<'a> {
    command: &'static str,
    generated_unix: u64,
    config: &'a RunConfig,
    fixtures: Vec<FixtureResult>,
    critical: Vec<CriticalResult>,
    fixtures_match: bool,
    model: Option<ModelCheck>,
}

fn check_model(cfg: &RunConfig, path: &Path) -> Result<ModelCheck, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let model = PWAModel::from_json(&text)?;
    let data = load_dataset(cfg.dataset_path()?)?;
    if data.dim() != model.dim() {
        return Err(CliError::Config(format!(
            "model has {} features, dataset has {}",
            model.dim(),
            data.dim()
        )));
    }
    let gamma = match cfg.gamma {
        Gamma::Value(g) => g,
        Gamma::Choice(_) => return Err(CliError::Config("check needs a numeric gamma".into())),
    };
    let c = cfg.mm.c.unwrap_or_else(|| default_c(&data));
    let prob = problem(cfg, data, model.k1(), model.k2(), gamma);
    let cp = prob.assemble()?;
    let theta = model.flatten();
    let sn = SnConfig {
        tol_grad: 1e-10,
        ..cfg.sn_config()
    };
    let res = dstat_residual_with(&cp, &theta, c, cfg.check.combo_cap, cfg.seed, &sn)?;
    let sel = cp.first_exact_selection(&theta)?;
    let weak = weak_mstat_residual(&cp, &theta, &sel, c, &sn)?;
    let tied_samples = cp
        .exact_argmax(&theta)?
        .iter()
        .filter(|(a, b)| a.len() * b.len() > 1)
        .count();
    let classification = if res.residual <= cfg.check.tol && res.coverage >= 1.0 {
        "d-stationary"
    } else if res.residual <= cfg.check.tol {
        "d-stationary on the sampled selections"
    } else if weak <= cfg.check.tol {
        "weak M-stationary only"
    } else {
        "not stationary"
    };
    Ok(ModelCheck {
        model: path.to_path_buf(),
        objective: cp.objective(&theta)?,
        paper_objective: prob.paper_objective(&cp, &theta)?,
        c,
        dstat_residual: res.residual,
        worst_selection: res.worst,
        coverage: res.coverage,
        selections: res.selections,
        weak_residual: weak,
        tied_samples,
        classification,
    })
}

pub fn check(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let fixtures: Vec<FixtureResult> = fixtures()
        .into_iter()
        .map(|(name, f, x, expected)| {
            let got = classify_point(&f, x);
            FixtureResult {
                function: name,
                point: x,
                subdifferentials: subdifferentials(&f, x),
                flags: got,
                expected,
                matches: got == expected,
            }
        })
        .collect();
    let lin = PiecewiseAffine1D::affine;
    let abs = lin(1.0, 0.0).max(&lin(-1.0, 0.0));
    let f1 = PiecewiseAffine1D::max_affine(&[(2.0, 0.0), (0.0, 0.0), (-2.0, -4.0)])?;
    let critical = vec![
        CriticalResult {
            f1: "max(2x, 0, -2x-4)",
            f2: "|x|",
            point: 0.0,
            critical: dc_critical_check(&f1, &abs, 0.0)?,
            expected: true,
        },
        CriticalResult {
            f1: "max(2x, 0, -2x-4)",
            f2: "|x|",
            point: -2.0,
            critical: dc_critical_check(&f1, &abs, -2.0)?,
            expected: true,
        },
        CriticalResult {
            f1: "2x",
            f2: "x",
            point: 0.0,
            critical: dc_critical_check(&lin(2.0, 0.0), &lin(1.0, 0.0), 0.0)?,
            expected: false,
        },
    ];
    let fixtures_match = fixtures.iter().all(|f| f.matches) && critical.iter().all(|c| c.critical == c.expected);
    for f in &fixtures {
        println!(
            "{:<24} x = {:>4}: C {} l {} d {} min {} {}",
            f.function,
            f.point,
            f.flags.c_stationary,
            f.flags.l_stationary,
            f.flags.d_stationary,
            f.flags.local_min,
            if f.matches { "ok" } else { "MISMATCH" }
        );
    }
    let model = match &cfg.check.model {
        Some(path) => {
            let m = check_model(cfg, path)?;
            println!(
                "model {}: dstat residual {:.3e} over {} selections (coverage {:.2}), weak {:.3e}: {}",
                path.display(),
                m.dstat_residual,
                m.selections,
                m.coverage,
                m.weak_residual,
                m.classification
            );
            Some(m)
        }
        None => None,
    };
    write_json(
        &out.join("check.json"),
        &CheckReport {
            command: "check",
            generated_unix: unix_time(),
            config: cfg,
            fixtures,
            critical,
            fixtures_match,
            model,
        },
    )?;
    if !fixtures_match {
        return Err(CliError::Solver("univariate fixtures disagree with their known classification".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BenchRow {
    dataset: String,
    n: usize,
    d: usize,
    starts: usize,
    failed_starts: usize,
    best_objective: f64,
    /// Outer iterations, SN solves and SN iterations of the best start.
    mm_iterations: usize,
    sn_solves: usize,
    sn_iterations: usize,
    sn_per_solve: f64,
    mean_mm_iterations: f64,
    seconds: f64,
}

#[derive(Serialize)]
struct BenchReport<'a> {
    command: &'static str,
    generated_unix: u64,
    config: &'a RunConfig,
    rows: &'a [BenchRow],
}

pub fn bench(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mut entries = cfg.bench.clone();
    if entries.is_empty() {
        match &cfg.dataset {
            Some(p) => entries.push(BenchEntry::File { path: p.clone() }),
            None => return Err(CliError::Config("bench needs \"bench\" entries or \"dataset\"".into())),
        }
    }
    let mut rows = Vec::new();
    for entry in &entries {
        let (name, data) = match entry {
            BenchEntry::File { path } => (path.display().to_string(), load_dataset(path)?),
            BenchEntry::Synthetic { example, n } => {
                (format!("example{example}_n{n}"), synthesize(*example, *n, cfg.seed)?.0)
            }
        };
        let started = Instant::now();
        let (n, d) = (data.len(), data.dim());
        let (gamma, _) = resolve_gamma(cfg, &data, cfg.k1, cfg.k2)?;
        let c = cfg.mm.c.unwrap_or_else(|| default_c(&data));
        let prob = problem(cfg, data, cfg.k1, cfg.k2, gamma);
        let cp = prob.assemble()?;
        let sampler = InitSampler::new(&prob, cfg.init)?;
        let runs = multistart(&cp, &cfg.mm_config(c), &sampler, cfg.starts, cfg.seed);
        let ok: Vec<_> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
        let Some(b) = best_run(&runs) else {
            return Err(CliError::Solver(format!("{name}: every start failed")));
        };
        let best = runs[b].as_ref().expect("best run succeeded");
        rows.push(BenchRow {
            dataset: name,
            n,
            d,
            starts: cfg.starts,
            failed_starts: runs.len() - ok.len(),
            best_objective: best.objective,
            mm_iterations: best.outer_iterations,
            sn_solves: best.subproblems,
            sn_iterations: best.sn_iterations,
            sn_per_solve: best.mean_sn_per_subproblem(),
            mean_mm_iterations: ok.iter().map(|r| r.outer_iterations as f64).sum::<f64>() / ok.len() as f64,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    let mut w = csv_writer(&out.join("bench.csv"))?;
    for row in &rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(io)?;
    write_json(
        &out.join("bench_report.json"),
        &BenchReport {
            command: "bench",
            generated_unix: unix_time(),
            config: cfg,
            rows: &rows,
        },
    )?;
    for r in &rows {
        println!(
            "{}: N {} d {} MM {} SN {} ({:.1}/solve) {:.2}s",
            r.dataset, r.n, r.d, r.mm_iterations, r.sn_iterations, r.sn_per_solve, r.seconds
        );
    }
    Ok(())
}
