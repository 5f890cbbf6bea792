//! Nonmonotone majorization-minimization over augmented iterates
//! `z = (theta, r, s)`.
//!
//! Each outer step picks per-sample atom pairs from the epsilon-argmax sets,
//! builds the convex majorant with auxiliary variables, adds a proximal term
//! and solves the result with [`crate::snewton`].

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problem::{CompositeProblem, PairSelection};
use crate::snewton::{DualSubproblem, SnConfig, SnOutcome, SubproblemPrimal};

/// How pairs are chosen at every outer step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Every selection in the epsilon-argmax product (up to a cap).
    Full,
    /// The first exact-argmax pair of every sample; always accepted.
    One,
    /// One uniform draw per sample; accepted only on strict decrease.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MMConfig {
    pub c: f64,
    pub eps: f64,
    pub variant: Variant,
    /// Lower bound every pair probability must meet under `Random`.
    pub p_floor: f64,
    /// Relative objective change that stops the run; 0 disables it.
    pub tol_rel: f64,
    /// Also stop once an accepted step has `||dz|| <= tol_step` (0 disables).
    pub tol_step: f64,
    pub max_outer: usize,
    pub combo_cap: usize,
    /// Consecutive rejected steps after which a random run is declared
    /// stalled. The deterministic variants stop at the first rejection.
    pub max_rejections: usize,
    pub seed: u64,
    pub sn: SnConfig,
    /// Use `max(1e-6, 1e-2 |df|)` as the dual gradient tolerance instead of
    /// the fixed `sn.tol_grad`.
    pub adaptive_sn_tol: bool,
    /// Compute the terminal stationarity residual.
    pub final_residual: bool,
}

impl Default for MMConfig {
    fn default() -> Self {
        MMConfig {
            c: 1e-2,
            eps: 1e-4,
            variant: Variant::Random,
            p_floor: 1e-3,
            tol_rel: 1e-4,
            tol_step: 0.0,
            max_outer: 500,
            combo_cap: 64,
            max_rejections: 50,
            seed: 0,
            sn: SnConfig::default(),
            adaptive_sn_tol: true,
            final_residual: true,
        }
    }
}

impl MMConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.eps > 0.0) {
            return Err(Error::Invalid("c and eps must be positive".into()));
        }
        if !(self.p_floor > 0.0 && self.p_floor <= 1.0) {
            return Err(Error::Invalid(format!("p_floor must lie in (0,1], got {}", self.p_floor)));
        }
        if !(self.tol_rel >= 0.0) || !(self.tol_step >= 0.0) {
            return Err(Error::Invalid("tolerances must be nonnegative".into()));
        }
        if self.max_outer == 0 || self.combo_cap == 0 || self.max_rejections == 0 {
            return Err(Error::Invalid("iteration limits must be positive".into()));
        }
        self.sn.validate()
    }
}

/// The MM state. Slacks are those of the last solved subproblem.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedIterate {
    pub theta: DVector<f64>,
    pub r: DVector<f64>,
    pub s: DVector<f64>,
    pub r_slack: DVector<f64>,
    pub s_slack: DVector<f64>,
}

/// Starting state with `r = s = psi(theta0)`.
pub fn init_state(problem: &CompositeProblem, theta0: &DVector<f64>) -> Result<AugmentedIterate> {
    check_dim(problem.dim(), theta0.len())?;
    if !problem.domain().contains(theta0) {
        return Err(Error::Infeasible("initial point violates the domain".into()));
    }
    let psi = problem.psi_values(theta0);
    let sel = problem.first_exact_selection(theta0)?;
    let sub = problem.subproblem(theta0, &psi, &psi, &sel, 1.0)?;
    let (r_slack, s_slack) = split_slacks(&sub, &sub.slack_anchor);
    Ok(AugmentedIterate {
        theta: theta0.clone(),
        r: psi.clone(),
        s: psi,
        r_slack,
        s_slack,
    })
}

fn split_slacks(sub: &DualSubproblem, slack: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    use crate::snewton::RowKind;
    let up: Vec<f64> = (0..slack.len())
        .filter(|&i| sub.row_kind[i] == RowKind::Upper)
        .map(|i| slack[i])
        .collect();
    let down: Vec<f64> = (0..slack.len())
        .filter(|&i| sub.row_kind[i] == RowKind::Lower)
        .map(|i| slack[i])
        .collect();
    (DVector::from_vec(up), DVector::from_vec(down))
}

/// `(1/N) sum [up(r_s) + down(s_s)] + gamma P(theta)`.
pub fn surrogate(problem: &CompositeProblem, state: &AugmentedIterate) -> f64 {
    problem.split_loss(&state.r, &state.s) + problem.regularizer().value(&state.theta)
}

/// Selections to solve at one step, with the fraction of the product covered.
#[derive(Clone, Debug, PartialEq)]
pub struct Selections {
    pub list: Vec<PairSelection>,
    pub coverage: f64,
}

/// Per-sample option lists, pairs ordered with `i1` major.
fn pair_options(sets: &[(Vec<usize>, Vec<usize>)]) -> Vec<Vec<(usize, usize)>> {
    sets.iter()
        .map(|(a, b)| a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).collect())
        .collect()
}

/// Enumerates the product of per-sample options in lexicographic order
/// (sample 0 most significant). Past `cap` elements, half the cap is taken
/// from the front of the order and the rest drawn uniformly.
pub fn enumerate_product(
    options: &[Vec<(usize, usize)>],
    cap: usize,
    rng: &mut impl Rng,
) -> Selections {
    let total = options
        .iter()
        .fold(1.0f64, |acc, o| acc * o.len() as f64);
    let first: PairSelection = options.iter().map(|o| o[0]).collect();
    let varying: Vec<usize> = (0..options.len()).filter(|&k| options[k].len() > 1).collect();
    let take = if total <= cap as f64 { total as usize } else { (cap / 2).max(1) };

    let mut list = Vec::with_capacity(cap.min(take.max(1)));
    let mut digits = vec![0usize; varying.len()];
    'outer: loop {
        let mut sel = first.clone();
        for (d, &k) in digits.iter().zip(&varying) {
            sel[k] = options[k][*d];
        }
        list.push(sel);
        if list.len() >= take {
            break;
        }
        // Odometer increment, last varying sample fastest.
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < options[varying[pos]].len() {
                continue 'outer;
            }
            digits[pos] = 0;
        }
        break;
    }
    if total > cap as f64 {
        let mut attempts = 0;
        while list.len() < cap && attempts < 20 * cap {
            attempts += 1;
            let sel: PairSelection = options.iter().map(|o| o[rng.random_range(0..o.len())]).collect();
            if !list.contains(&sel) {
                list.push(sel);
            }
        }
    }
    let coverage = (list.len() as f64 / total).min(1.0);
    Selections { list, coverage }
}

/// Pair selections for one outer step at `theta`.
pub fn select_pairs(
    problem: &CompositeProblem,
    theta: &DVector<f64>,
    config: &MMConfig,
    rng: &mut impl Rng,
) -> Result<Selections> {
    match config.variant {
        Variant::One => Ok(Selections {
            list: vec![problem.first_exact_selection(theta)?],
            coverage: 1.0,
        }),
        Variant::Full => {
            let options = pair_options(&problem.eps_argmax(theta, config.eps)?);
            Ok(enumerate_product(&options, config.combo_cap, rng))
        }
        Variant::Random => {
            let options = pair_options(&problem.eps_argmax(theta, config.eps)?);
            let mut sel = Vec::with_capacity(options.len());
            for o in &options {
                if 1.0 / (o.len() as f64) < config.p_floor {
                    return Err(Error::Invalid(format!(
                        "uniform selection over {} pairs violates p_floor {}",
                        o.len(),
                        config.p_floor
                    )));
                }
                sel.push(o[rng.random_range(0..o.len())]);
            }
            let total = options.iter().fold(1.0f64, |a, o| a * o.len() as f64);
            Ok(Selections {
                list: vec![sel],
                coverage: 1.0 / total,
            })
        }
    }
}

/// One row of the outer trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub surrogate: f64,
    pub step_norm: f64,
    pub accepted: bool,
    pub subproblems: usize,
    pub sn_iterations: usize,
    pub sn_converged: bool,
    pub seconds: f64,
    #[serde(skip)]
    pub selection: PairSelection,
}

/// Per-iteration records; the objective and surrogate are those of the state
/// after the step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
}

impl Trace {
    /// Writes one CSV row per outer iteration.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record([
            "iteration",
            "objective",
            "surrogate",
            "step_norm",
            "accepted",
            "subproblems",
            "sn_iterations",
            "sn_converged",
            "seconds",
            "selection",
        ])?;
        for r in &self.records {
            let sel: Vec<String> = r.selection.iter().map(|(a, b)| format!("{a}:{b}")).collect();
            w.write_record([
                r.iteration.to_string(),
                format!("{:e}", r.objective),
                format!("{:e}", r.surrogate),
                format!("{:e}", r.step_norm),
                r.accepted.to_string(),
                r.subproblems.to_string(),
                r.sn_iterations.to_string(),
                r.sn_converged.to_string(),
                format!("{:.6}", r.seconds),
                sel.join(" "),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    StepTolerance,
    MaxOuter,
    Stalled,
}

/// Terminal stationarity residual and the fraction of selections it covered.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TerminalResidual {
    pub value: f64,
    pub coverage: f64,
    /// `true` for the weak (single selection) residual.
    pub weak: bool,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub theta: DVector<f64>,
    pub state: AugmentedIterate,
    pub objective: f64,
    pub initial_objective: f64,
    pub trace: Trace,
    pub outer_iterations: usize,
    pub subproblems: usize,
    pub sn_iterations: usize,
    pub termination: Termination,
    pub residual: Option<TerminalResidual>,
    pub seconds: f64,
}

impl SolveReport {
    pub fn mean_sn_per_subproblem(&self) -> f64 {
        if self.subproblems == 0 {
            0.0
        } else {
            self.sn_iterations as f64 / self.subproblems as f64
        }
    }
}

/// Mutable solver context carried across outer steps.
pub struct MMContext<R: Rng> {
    pub rng: R,
    /// Dual warm start from the previous subproblem.
    pub warm: Option<DVector<f64>>,
    pub sn_tol: f64,
}

struct Candidate {
    selection: PairSelection,
    sub: DualSubproblem,
    out: SnOutcome,
}

fn solve_one(
    problem: &CompositeProblem,
    state: &AugmentedIterate,
    selection: PairSelection,
    c: f64,
    warm: Option<&DVector<f64>>,
    sn: &SnConfig,
) -> Result<Candidate> {
    let sub = problem.subproblem(&state.theta, &state.r, &state.s, &selection, c)?;
    let start = match warm {
        Some(w) if w.len() == sub.dual_dim() => w.clone(),
        _ => DVector::zeros(sub.dual_dim()),
    };
    let out = sub.sn_solve(&start, sn)?;
    Ok(Candidate {
        selection,
        sub,
        out,
    })
}

fn step_norm(state: &AugmentedIterate, sub: &DualSubproblem, z: &SubproblemPrimal) -> f64 {
    ((&z.theta - &state.theta).norm_squared()
        + (&z.r - &state.r).norm_squared()
        + (&z.s - &state.s).norm_squared()
        + (&z.slack - &sub.slack_anchor).norm_squared())
    .sqrt()
}

/// Relative surrogate increase accepted as rounding.
const ACCEPT_ROUNDING: f64 = 1e-12;

/// One outer MM step. A rejected step returns the current state unchanged.
pub fn mm_iterate<R: Rng>(
    problem: &CompositeProblem,
    state: &AugmentedIterate,
    config: &MMConfig,
    ctx: &mut MMContext<R>,
    iteration: usize,
) -> Result<(AugmentedIterate, IterationRecord)> {
    let started = Instant::now();
    let current = surrogate(problem, state);
    let selections = select_pairs(problem, &state.theta, config, &mut ctx.rng)?;
    let sn = SnConfig {
        tol_grad: ctx.sn_tol,
        ..config.sn
    };
    let warm = ctx.warm.clone();
    let solve = |sel: &PairSelection| solve_one(problem, state, sel.clone(), config.c, warm.as_ref(), &sn);
    let candidates: Vec<Candidate> = if selections.list.len() > 1 {
        selections.list.par_iter().map(solve).collect::<Result<_>>()?
    } else {
        selections.list.iter().map(solve).collect::<Result<_>>()?
    };
    let subproblems = candidates.len();
    let mut sn_iterations: usize = candidates.iter().map(|c| c.out.iterations).sum();

    // Smallest subproblem value; ties keep the earlier (lexicographic) selection.
    let mut best = 0;
    for (i, cand) in candidates.iter().enumerate() {
        if cand.out.primal_value < candidates[best].out.primal_value {
            best = i;
        }
    }
    let mut chosen = candidates.into_iter().nth(best).expect("at least one selection");

    let new_surrogate = |z: &SubproblemPrimal| {
        problem.split_loss(&z.r, &z.s) + problem.regularizer().value(&z.theta)
    };
    let mut accepted = match config.variant {
        Variant::Random => chosen.out.primal_value < current,
        _ => true,
    };
    // Increases below this are rounding in the repaired primal.
    let slack = ACCEPT_ROUNDING * current.abs().max(1.0);
    // An inexact dual solve can break the descent inequality; tighten once.
    if accepted && new_surrogate(&chosen.out.primal) > current + slack {
        let tight = SnConfig {
            tol_grad: 1e-11,
            ..config.sn
        };
        let out = chosen.sub.sn_solve(&chosen.out.multipliers, &tight)?;
        sn_iterations += out.iterations;
        chosen.out = out;
        accepted = new_surrogate(&chosen.out.primal) <= current + slack
            && (config.variant != Variant::Random || chosen.out.primal_value < current);
    }
    ctx.warm = Some(chosen.out.multipliers.clone());

    let (next, step) = if accepted {
        let z = &chosen.out.primal;
        let (r_slack, s_slack) = split_slacks(&chosen.sub, &z.slack);
        let step = step_norm(state, &chosen.sub, z);
        (
            AugmentedIterate {
                theta: z.theta.clone(),
                r: z.r.clone(),
                s: z.s.clone(),
                r_slack,
                s_slack,
            },
            step,
        )
    } else {
        (state.clone(), 0.0)
    };
    let objective = problem.objective(&next.theta)?;
    if !objective.is_finite() {
        return Err(Error::NonFinite { iteration });
    }
    let record = IterationRecord {
        iteration,
        objective,
        surrogate: surrogate(problem, &next),
        step_norm: step,
        accepted,
        subproblems,
        sn_iterations,
        sn_converged: chosen.out.converged,
        seconds: started.elapsed().as_secs_f64(),
        selection: chosen.selection,
    };
    Ok((next, record))
}

/// Runs MM from `theta0` with a generator seeded from `config.seed`.
pub fn run(problem: &CompositeProblem, config: &MMConfig, theta0: &DVector<f64>) -> Result<SolveReport> {
    run_with_rng(problem, config, theta0, ChaCha8Rng::seed_from_u64(config.seed))
}

/// Runs MM from `theta0` drawing random selections from `rng`.
pub fn run_with_rng<R: Rng>(
    problem: &CompositeProblem,
    config: &MMConfig,
    theta0: &DVector<f64>,
    rng: R,
) -> Result<SolveReport> {
    config.validate()?;
    let started = Instant::now();
    let mut state = init_state(problem, theta0)?;
    let initial_objective = problem.objective(theta0)?;
    if !initial_objective.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut ctx = MMContext {
        rng,
        warm: None,
        sn_tol: if config.adaptive_sn_tol { 1e-6 } else { config.sn.tol_grad },
    };
    let mut trace = Trace::default();
    let mut objective = initial_objective;
    let mut rejections = 0;
    let mut termination = Termination::MaxOuter;
    let (mut subproblems, mut sn_iterations) = (0, 0);

    for it in 1..=config.max_outer {
        let (next, record) = mm_iterate(problem, &state, config, &mut ctx, it)?;
        subproblems += record.subproblems;
        sn_iterations += record.sn_iterations;
        let accepted = record.accepted;
        let step = record.step_norm;
        let change = (record.objective - objective).abs();
        let rel = change / objective.abs().max(1.0);
        trace.records.push(record);
        if !accepted {
            rejections += 1;
            // Full and MM-1 would propose the same step again.
            if rejections >= config.max_rejections || config.variant != Variant::Random {
                termination = Termination::Stalled;
                break;
            }
            continue;
        }
        rejections = 0;
        state = next;
        objective = problem.objective(&state.theta)?;
        if config.adaptive_sn_tol {
            ctx.sn_tol = (1e-2 * change).max(1e-6);
        }
        if config.tol_rel > 0.0 && rel <= config.tol_rel {
            termination = Termination::Tolerance;
            break;
        }
        if config.tol_step > 0.0 && step <= config.tol_step {
            termination = Termination::StepTolerance;
            break;
        }
    }

    let residual = if config.final_residual {
        Some(terminal_residual(problem, &state.theta, config)?)
    } else {
        None
    };

    Ok(SolveReport {
        theta: state.theta.clone(),
        objective,
        initial_objective,
        outer_iterations: trace.records.len(),
        trace,
        state,
        subproblems,
        sn_iterations,
        termination,
        residual,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Stationarity residual matching the variant: weak M-stationarity on the
/// first exact selection for `One`, the d-stationarity residual otherwise.
pub fn terminal_residual(problem: &CompositeProblem, theta: &DVector<f64>, config: &MMConfig) -> Result<TerminalResidual> {
    let sn = SnConfig {
        tol_grad: 1e-10,
        ..config.sn
    };
    Ok(match config.variant {
        Variant::One => {
            let sel = problem.first_exact_selection(theta)?;
            TerminalResidual {
                value: crate::stationarity::weak_mstat_residual(problem, theta, &sel, config.c, &sn)?,
                coverage: 1.0,
                weak: true,
            }
        }
        _ => {
            let res =
                crate::stationarity::dstat_residual_with(problem, theta, config.c, config.combo_cap, config.seed, &sn)?;
            TerminalResidual {
                value: res.residual,
                coverage: res.coverage,
                weak: false,
            }
        }
    })
}
