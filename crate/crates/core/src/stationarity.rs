//! Subdifferentials and stationarity of univariate piecewise affine
//! functions, and fixed-point residuals certifying d-stationarity of the
//! composite problem.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mm::enumerate_product;
use crate::problem::{CompositeProblem, PairSelection};
use crate::snewton::SnConfig;

/// Tolerance for continuity checks and piece merging.
const PIECE_TOL: f64 = 1e-12;

/// A continuous piecewise affine function on the real line.
///
/// `pieces[k]` is active on `[breakpoints[k-1], breakpoints[k]]` with the
/// obvious unbounded conventions for the first and last piece.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseAffine1D {
    breakpoints: Vec<f64>,
    pieces: Vec<(f64, f64)>,
}

impl PiecewiseAffine1D {
    /// Builds a function from sorted breakpoints and `(slope, intercept)`
    /// pieces, checking continuity.
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<(f64, f64)>) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::Invalid(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::Invalid("breakpoints must be finite and strictly increasing".into()));
        }
        for (k, &b) in breakpoints.iter().enumerate() {
            let (l, r) = (pieces[k], pieces[k + 1]);
            let gap = (l.0 * b + l.1) - (r.0 * b + r.1);
            if gap.abs() > PIECE_TOL * (1.0 + b.abs()) {
                return Err(Error::Invalid(format!("discontinuity of {gap} at {b}")));
            }
        }
        Ok(PiecewiseAffine1D { breakpoints, pieces }.simplified())
    }

    pub fn affine(slope: f64, intercept: f64) -> Self {
        PiecewiseAffine1D {
            breakpoints: Vec::new(),
            pieces: vec![(slope, intercept)],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    fn piece_index(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&b| b < x)
    }

    pub fn value(&self, x: f64) -> f64 {
        let (a, b) = self.pieces[self.piece_index(x)];
        a * x + b
    }

    /// `(left slope, right slope)` at `x`.
    pub fn one_sided_slopes(&self, x: f64) -> (f64, f64) {
        let left = self.pieces[self.breakpoints.partition_point(|&b| b < x)].0;
        let right = self.pieces[self.breakpoints.partition_point(|&b| b <= x)].0;
        (left, right)
    }

    /// Merges adjacent pieces that coincide.
    fn simplified(mut self) -> Self {
        let mut bps = Vec::with_capacity(self.breakpoints.len());
        let mut pcs = vec![self.pieces[0]];
        for (k, &b) in self.breakpoints.iter().enumerate() {
            let next = self.pieces[k + 1];
            let last = *pcs.last().unwrap();
            if (last.0 - next.0).abs() <= PIECE_TOL && (last.1 - next.1).abs() <= PIECE_TOL * (1.0 + b.abs()) {
                continue;
            }
            bps.push(b);
            pcs.push(next);
        }
        self.breakpoints = bps;
        self.pieces = pcs;
        self
    }

    /// Pointwise combination of two functions where `take_max` chooses which
    /// piece wins on each subinterval.
    fn combine(&self, other: &Self, take_max: bool) -> Self {
        let mut cuts: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        // Add crossing points inside each cell.
        let mut cells = Vec::with_capacity(cuts.len() + 1);
        let mut lo = f64::NEG_INFINITY;
        for &hi in cuts.iter().chain(std::iter::once(&f64::INFINITY)) {
            cells.push((lo, hi));
            lo = hi;
        }
        let mut all_cuts = cuts.clone();
        for &(lo, hi) in &cells {
            let x = midpoint(lo, hi);
            let (a1, b1) = self.pieces[self.piece_index(x)];
            let (a2, b2) = other.pieces[other.piece_index(x)];
            if a1 != a2 {
                let cross = (b2 - b1) / (a1 - a2);
                if cross > lo && cross < hi {
                    all_cuts.push(cross);
                }
            }
        }
        all_cuts.sort_by(f64::total_cmp);
        all_cuts.dedup();
        let mut pieces = Vec::with_capacity(all_cuts.len() + 1);
        let mut lo = f64::NEG_INFINITY;
        for &hi in all_cuts.iter().chain(std::iter::once(&f64::INFINITY)) {
            let x = midpoint(lo, hi);
            let p1 = self.pieces[self.piece_index(x)];
            let p2 = other.pieces[other.piece_index(x)];
            let (v1, v2) = (p1.0 * x + p1.1, p2.0 * x + p2.1);
            pieces.push(if (v1 >= v2) == take_max { p1 } else { p2 });
            lo = hi;
        }
        PiecewiseAffine1D {
            breakpoints: all_cuts,
            pieces,
        }
        .simplified()
    }

    pub fn max(&self, other: &Self) -> Self {
        self.combine(other, true)
    }

    pub fn min(&self, other: &Self) -> Self {
        self.combine(other, false)
    }

    pub fn neg(&self) -> Self {
        PiecewiseAffine1D {
            breakpoints: self.breakpoints.clone(),
            pieces: self.pieces.iter().map(|&(a, b)| (-a, -b)).collect(),
        }
    }

    /// `max_i (a_i x + b_i)`.
    pub fn max_affine(atoms: &[(f64, f64)]) -> Result<Self> {
        let (first, rest) = atoms
            .split_first()
            .ok_or_else(|| Error::Invalid("need at least one affine piece".into()))?;
        Ok(rest
            .iter()
            .fold(Self::affine(first.0, first.1), |f, &(a, b)| f.max(&Self::affine(a, b))))
    }

    pub fn is_convex(&self) -> bool {
        self.pieces.windows(2).all(|w| w[0].0 <= w[1].0)
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo + 1.0,
        (false, true) => hi - 1.0,
        (false, false) => 0.0,
    }
}

/// A finite union of closed intervals (points are degenerate intervals).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { intervals: Vec::new() }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        if lo <= hi {
            IntervalSet {
                intervals: vec![(lo, hi)],
            }
        } else {
            Self::empty()
        }
    }

    pub fn points(pts: &[f64]) -> Self {
        Self::union_of(pts.iter().map(|&p| (p, p)).collect())
    }

    fn union_of(mut parts: Vec<(f64, f64)>) -> Self {
        parts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (lo, hi) in parts {
            match out.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        IntervalSet { intervals: out }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::union_of(self.intervals.iter().chain(&other.intervals).copied().collect())
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= x && x <= hi)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.intervals
            .iter()
            .all(|&(lo, hi)| other.intervals.iter().any(|&(a, b)| a <= lo && hi <= b))
    }

    /// Convex hull, or `None` when empty.
    pub fn hull(&self) -> Option<(f64, f64)> {
        Some((self.intervals.first()?.0, self.intervals.last()?.1))
    }

    pub fn intersect_interval(&self, lo: f64, hi: f64) -> Self {
        Self::union_of(
            self.intervals
                .iter()
                .filter_map(|&(a, b)| {
                    let (l, h) = (a.max(lo), b.min(hi));
                    (l <= h).then_some((l, h))
                })
                .collect(),
        )
    }
}

/// Bouligand, regular, limiting and Clarke subdifferentials at a point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubdifferentialReport {
    pub bouligand: IntervalSet,
    pub regular: IntervalSet,
    pub limiting: IntervalSet,
    pub clarke: IntervalSet,
}

pub fn subdifferentials(f: &PiecewiseAffine1D, x: f64) -> SubdifferentialReport {
    let (l, r) = f.one_sided_slopes(x);
    let bouligand = IntervalSet::points(&[l, r]);
    let regular = IntervalSet::interval(l, r);
    // Regular subgradients near x are the single slopes of the adjacent
    // pieces, so the limit adds both one-sided slopes.
    let limiting = regular.union(&bouligand);
    let clarke = IntervalSet::interval(l.min(r), l.max(r));
    SubdifferentialReport {
        bouligand,
        regular,
        limiting,
        clarke,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StationarityFlags {
    pub c_stationary: bool,
    pub l_stationary: bool,
    pub d_stationary: bool,
    pub local_min: bool,
}

pub fn classify_point(f: &PiecewiseAffine1D, x: f64) -> StationarityFlags {
    let sub = subdifferentials(f, x);
    let (l, r) = f.one_sided_slopes(x);
    // Step small enough to stay within the pieces adjacent to x.
    let gap = f
        .breakpoints()
        .iter()
        .filter(|&&b| b != x)
        .map(|&b| (b - x).abs())
        .fold(1.0, f64::min);
    let delta = 0.5 * gap;
    let fx = f.value(x);
    let local_min = f.value(x - delta) >= fx && f.value(x + delta) >= fx;
    StationarityFlags {
        c_stationary: sub.clarke.contains(0.0),
        l_stationary: sub.limiting.contains(0.0),
        d_stationary: r >= 0.0 && -l >= 0.0,
        local_min,
    }
}

/// Whether the convex subdifferentials of `f1` and `f2` meet at `x`, i.e. `x`
/// is critical for `f1 - f2`.
pub fn dc_critical_check(f1: &PiecewiseAffine1D, f2: &PiecewiseAffine1D, x: f64) -> Result<bool> {
    if !f1.is_convex() || !f2.is_convex() {
        return Err(Error::Invalid("dc criticality needs convex components".into()));
    }
    let (l1, r1) = f1.one_sided_slopes(x);
    let (l2, r2) = f2.one_sided_slopes(x);
    Ok(l1.max(l2) <= r1.min(r2))
}

/// Outcome of a d-stationarity residual evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DstatResult {
    pub residual: f64,
    pub worst: PairSelection,
    pub coverage: f64,
    pub selections: usize,
}

/// Seed of the random remainder when the selection product is capped.
pub const RESIDUAL_SEED: u64 = 0x5EED;

fn fixed_point_gap(
    problem: &CompositeProblem,
    theta: &DVector<f64>,
    selection: &[(usize, usize)],
    c: f64,
    sn: &SnConfig,
) -> Result<f64> {
    let psi = problem.psi_values(theta);
    let sub = problem.subproblem(theta, &psi, &psi, selection, c)?;
    let out = sub.sn_solve(&DVector::zeros(sub.dual_dim()), sn)?;
    if !out.converged {
        return Err(Error::Solver(format!(
            "residual subproblem stopped at gradient norm {:e} after {} iterations",
            out.grad_norm, out.iterations
        )));
    }
    Ok((theta - &out.primal.theta).amax())
}

/// Largest distance between `theta` and the minimizer of the proximal
/// majorant anchored at `(theta, psi(theta), psi(theta))`, over the product
/// of per-sample exact argmax pairs.
pub fn dstat_residual(
    problem: &CompositeProblem,
    theta: &DVector<f64>,
    c: f64,
    combo_cap: usize,
) -> Result<DstatResult> {
    let sn = SnConfig {
        tol_grad: 1e-10,
        ..SnConfig::default()
    };
    dstat_residual_with(problem, theta, c, combo_cap, RESIDUAL_SEED, &sn)
}

pub fn dstat_residual_with(
    problem: &CompositeProblem,
    theta: &DVector<f64>,
    c: f64,
    combo_cap: usize,
    seed: u64,
    sn: &SnConfig,
) -> Result<DstatResult> {
    if !problem.domain().contains(theta) {
        return Err(Error::Infeasible("residual requested outside the domain".into()));
    }
    let sets = problem.exact_argmax(theta)?;
    let options: Vec<Vec<(usize, usize)>> = sets
        .iter()
        .map(|(a, b)| a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sel = enumerate_product(&options, combo_cap.max(1), &mut rng);
    let gaps: Vec<f64> = sel
        .list
        .par_iter()
        .map(|s| fixed_point_gap(problem, theta, s, c, sn))
        .collect::<Result<_>>()?;
    let mut worst = 0;
    for (i, g) in gaps.iter().enumerate() {
        if *g > gaps[worst] {
            worst = i;
        }
    }
    Ok(DstatResult {
        residual: gaps[worst],
        worst: sel.list[worst].clone(),
        coverage: sel.coverage,
        selections: sel.list.len(),
    })
}

/// The fixed-point gap for a single pair selection.
pub fn weak_mstat_residual(
    problem: &CompositeProblem,
    theta: &DVector<f64>,
    selection: &[(usize, usize)],
    c: f64,
    sn: &SnConfig,
) -> Result<f64> {
    if !problem.domain().contains(theta) {
        return Err(Error::Infeasible("residual requested outside the domain".into()));
    }
    let sets = problem.exact_argmax(theta)?;
    for (k, ((a, b), &(i1, i2))) in sets.iter().zip(selection).enumerate() {
        if !a.contains(&i1) || !b.contains(&i2) {
            return Err(Error::Invalid(format!(
                "pair ({i1},{i2}) of sample {k} is not in the exact argmax"
            )));
        }
    }
    fixed_point_gap(problem, theta, selection, c, sn)
}
