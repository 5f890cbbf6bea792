//! Shared fixtures for the integration tests: random composite instances and
//! an active-set enumeration oracle for the convex subproblem.
#![allow(dead_code)]

use diffmax::funcs::{
    monotone_split, DcRegularizer, DiffMaxFunction, MaxFunction, MonotonePart, Monotonicity, SmoothConvexAtom,
    UnivariateConvexLoss,
};
use diffmax::problem::{CompositeProblem, CompositeTerm, Domain};
use diffmax::snewton::{DualSubproblem, RowKind, SubproblemPrimal};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub dim: usize,
    pub k1: usize,
    pub k2: usize,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reg {
    None,
    L1(f64),
    Scad(f64),
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gauss(rng))
}

fn random_max<R: Rng>(rng: &mut R, dim: usize, k: usize) -> MaxFunction {
    if k == 0 {
        return MaxFunction::zero(dim);
    }
    let atoms = (0..k)
        .map(|_| SmoothConvexAtom::affine(random_vec(rng, dim), gauss(rng)))
        .collect();
    MaxFunction::new(atoms).unwrap()
}

/// Squared or quantile loss, chosen at random.
pub fn random_loss<R: Rng>(rng: &mut R) -> UnivariateConvexLoss {
    let y = gauss(rng);
    if rng.random_bool(0.5) {
        UnivariateConvexLoss::Squared { y }
    } else {
        UnivariateConvexLoss::Quantile {
            y,
            tau: rng.random_range(0.2..0.8),
        }
    }
}

pub fn random_problem<R: Rng>(rng: &mut R, shape: Shape, reg: Reg) -> CompositeProblem {
    build_problem(rng, shape, reg, false)
}

/// Like [`random_problem`] with every loss squared.
pub fn random_squared_problem<R: Rng>(rng: &mut R, shape: Shape, reg: Reg) -> CompositeProblem {
    build_problem(rng, shape, reg, true)
}

fn build_problem<R: Rng>(rng: &mut R, shape: Shape, reg: Reg, squared: bool) -> CompositeProblem {
    let terms = (0..shape.n)
        .map(|_| {
            let g = random_max(rng, shape.dim, shape.k1);
            let h = random_max(rng, shape.dim, shape.k2);
            let loss = if squared {
                UnivariateConvexLoss::Squared { y: gauss(rng) }
            } else {
                random_loss(rng)
            };
            CompositeTerm {
                split: monotone_split(&loss).unwrap(),
                psi: DiffMaxFunction::new(g, h).unwrap(),
            }
        })
        .collect();
    let regularizer = match reg {
        Reg::None => DcRegularizer::none(shape.dim),
        Reg::L1(gamma) => DcRegularizer::l1(shape.dim, gamma).unwrap(),
        Reg::Scad(gamma) => DcRegularizer::scad(shape.dim, gamma).unwrap(),
    };
    CompositeProblem::new(terms, regularizer, Domain::Free).unwrap()
}

/// A random shape within the given bounds, every count at least one.
pub fn random_shape<R: Rng>(rng: &mut R, max_dim: usize, max_k: usize, max_n: usize) -> Shape {
    Shape {
        dim: rng.random_range(1..=max_dim),
        k1: rng.random_range(1..=max_k),
        k2: rng.random_range(1..=max_k),
        n: rng.random_range(1..=max_n),
    }
}

/// A random pair per sample.
pub fn random_selection<R: Rng>(rng: &mut R, problem: &CompositeProblem) -> Vec<(usize, usize)> {
    problem
        .terms()
        .iter()
        .map(|t| (rng.random_range(0..t.psi.g.len()), rng.random_range(0..t.psi.h.len())))
        .collect()
}

// ---------------------------------------------------------------------------
// Active-set oracle
// ---------------------------------------------------------------------------

/// Piece of a variable's objective. `Fixed` pins the variable to a value and
/// defers to a subgradient check; the other pieces leave it free.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Piece {
    /// Smooth on the whole line (no l1 weight, flat loss part).
    Free,
    /// `theta >= 0` side of `|theta|`.
    Pos,
    /// `theta <= 0` side of `|theta|`.
    Neg,
    /// Loss part on the side where the excursion is zero.
    Flat,
    /// Loss part on the side where the excursion is active.
    Curved,
    /// Variable fixed at `0` (theta, slack) or at the knot (loss parts).
    Fixed,
}

#[derive(Clone, Copy, Debug)]
enum Var {
    Theta(usize),
    R(usize),
    S(usize),
    Slack(usize),
}

struct Layout {
    m: usize,
    n: usize,
    rows: usize,
}

impl Layout {
    fn of(sub: &DualSubproblem) -> Self {
        Layout {
            m: sub.theta_anchor.len(),
            n: sub.r_anchor.len(),
            rows: sub.beta.len(),
        }
    }

    fn len(&self) -> usize {
        self.m + 2 * self.n + self.rows
    }

    fn var(&self, j: usize) -> Var {
        if j < self.m {
            Var::Theta(j)
        } else if j < self.m + self.n {
            Var::R(j - self.m)
        } else if j < self.m + 2 * self.n {
            Var::S(j - self.m - self.n)
        } else {
            Var::Slack(j - self.m - 2 * self.n)
        }
    }
}

fn part_is_flat(p: &MonotonePart) -> bool {
    p.linear == 0.0 && p.quadratic == 0.0
}

fn options(sub: &DualSubproblem, lay: &Layout, j: usize) -> Vec<Piece> {
    match lay.var(j) {
        Var::Theta(i) if sub.l1[i] > 0.0 => vec![Piece::Pos, Piece::Neg, Piece::Fixed],
        Var::Theta(_) => vec![Piece::Free],
        Var::R(k) | Var::S(k) => {
            let part = if matches!(lay.var(j), Var::R(_)) {
                &sub.splits[k].up
            } else {
                &sub.splits[k].down
            };
            if part_is_flat(part) {
                vec![Piece::Free]
            } else if part.linear > 0.0 {
                vec![Piece::Flat, Piece::Curved, Piece::Fixed]
            } else {
                vec![Piece::Flat, Piece::Curved]
            }
        }
        Var::Slack(_) => vec![Piece::Free, Piece::Fixed],
    }
}

/// The piece a primal point lies on; used only to order the enumeration.
fn piece_at(sub: &DualSubproblem, lay: &Layout, j: usize, z: &SubproblemPrimal) -> Piece {
    const TOL: f64 = 1e-9;
    let opts = options(sub, lay, j);
    let want = match lay.var(j) {
        Var::Theta(i) => {
            let t = z.theta[i];
            if t.abs() <= TOL {
                Piece::Fixed
            } else if t > 0.0 {
                Piece::Pos
            } else {
                Piece::Neg
            }
        }
        Var::R(k) | Var::S(k) => {
            let (part, t) = match lay.var(j) {
                Var::R(_) => (&sub.splits[k].up, z.r[k]),
                _ => (&sub.splits[k].down, z.s[k]),
            };
            let excursion = match part.monotonicity {
                Monotonicity::NonDecreasing => t - part.knot,
                Monotonicity::NonIncreasing => part.knot - t,
            };
            if excursion.abs() <= TOL {
                Piece::Fixed
            } else if excursion > 0.0 {
                Piece::Curved
            } else {
                Piece::Flat
            }
        }
        Var::Slack(i) => {
            if z.slack[i] <= TOL {
                Piece::Fixed
            } else {
                Piece::Free
            }
        }
    };
    if opts.contains(&want) {
        want
    } else if want == Piece::Fixed && opts.contains(&Piece::Curved) {
        Piece::Curved
    } else {
        opts[0]
    }
}

/// Exact minimizer of a subproblem certified by its KKT conditions.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub primal: SubproblemPrimal,
    pub value: f64,
    /// Number of piece patterns tried before the certificate was found.
    pub tried: usize,
}

/// Objective of the subproblem, written out independently of the library.
pub fn subproblem_objective(sub: &DualSubproblem, z: &SubproblemPrimal) -> f64 {
    let mut loss = 0.0;
    for k in 0..z.r.len() {
        loss += sub.splits[k].up.value(z.r[k]) + sub.splits[k].down.value(z.s[k]);
    }
    let mut reg = sub.reg_constant;
    for i in 0..z.theta.len() {
        reg += sub.l1[i] * z.theta[i].abs() - sub.linear[i] * z.theta[i];
    }
    let sq = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm_squared();
    sub.loss_scale * loss
        + reg
        + 0.5
            * sub.c
            * (sq(&z.theta, &sub.theta_anchor)
                + sq(&z.r, &sub.r_anchor)
                + sq(&z.s, &sub.s_anchor)
                + sq(&z.slack, &sub.slack_anchor))
}

/// Solves the equality-constrained quadratic program of one piece pattern
/// and checks every KKT condition. Returns the primal point on success.
fn try_pattern(sub: &DualSubproblem, lay: &Layout, pattern: &[Piece], tol: f64) -> Option<DVector<f64>> {
    let nv = lay.len();
    let c = sub.c;
    let ls = sub.loss_scale;
    // Diagonal Hessian, linear term and pinned values per variable.
    let mut hess = DVector::from_element(nv, c);
    let mut lin = DVector::zeros(nv);
    let mut pinned: Vec<Option<f64>> = vec![None; nv];
    for j in 0..nv {
        match lay.var(j) {
            Var::Theta(i) => {
                lin[j] = -c * sub.theta_anchor[i] - sub.linear[i];
                match pattern[j] {
                    Piece::Pos => lin[j] += sub.l1[i],
                    Piece::Neg => lin[j] -= sub.l1[i],
                    Piece::Fixed => pinned[j] = Some(0.0),
                    _ => {}
                }
            }
            Var::R(k) | Var::S(k) => {
                let (part, anchor) = match lay.var(j) {
                    Var::R(_) => (&sub.splits[k].up, sub.r_anchor[k]),
                    _ => (&sub.splits[k].down, sub.s_anchor[k]),
                };
                lin[j] = -c * anchor + ls * part.slope;
                match pattern[j] {
                    Piece::Curved => {
                        hess[j] += ls * part.quadratic;
                        // d/dt of linear*e + quad/2*e^2 with e = +-(t - knot).
                        let sign = match part.monotonicity {
                            Monotonicity::NonDecreasing => 1.0,
                            Monotonicity::NonIncreasing => -1.0,
                        };
                        lin[j] += ls * (sign * part.linear - part.quadratic * part.knot);
                    }
                    Piece::Fixed => pinned[j] = Some(part.knot),
                    _ => {}
                }
            }
            Var::Slack(i) => {
                lin[j] = -c * sub.slack_anchor[i];
                if pattern[j] == Piece::Fixed {
                    pinned[j] = Some(0.0);
                }
            }
        }
    }

    // Equality rows A x = beta.
    let mut a = DMatrix::zeros(lay.rows, nv);
    for i in 0..lay.rows {
        for t in 0..lay.m {
            a[(i, t)] = sub.b[(i, t)];
        }
        let k = sub.row_sample[i];
        match sub.row_kind[i] {
            RowKind::Upper => a[(i, lay.m + k)] = -1.0,
            RowKind::Lower => a[(i, lay.m + lay.n + k)] = 1.0,
        }
        a[(i, lay.m + 2 * lay.n + i)] = 1.0;
    }

    let free: Vec<usize> = (0..nv).filter(|&j| pinned[j].is_none()).collect();
    let nf = free.len();
    let size = nf + lay.rows;
    let mut kkt = DMatrix::zeros(size, size);
    let mut rhs = DVector::zeros(size);
    for (p, &j) in free.iter().enumerate() {
        kkt[(p, p)] = hess[j];
        rhs[p] = -lin[j];
        for i in 0..lay.rows {
            kkt[(p, nf + i)] = a[(i, j)];
            kkt[(nf + i, p)] = a[(i, j)];
        }
    }
    for i in 0..lay.rows {
        let mut b = sub.beta[i];
        for j in 0..nv {
            if let Some(v) = pinned[j] {
                b -= a[(i, j)] * v;
            }
        }
        rhs[nf + i] = b;
    }
    let sol = kkt.clone().lu().solve(&rhs)?;
    if (&kkt * &sol - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) || sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut x = DVector::zeros(nv);
    for (p, &j) in free.iter().enumerate() {
        x[j] = sol[p];
    }
    for j in 0..nv {
        if let Some(v) = pinned[j] {
            x[j] = v;
        }
    }
    let lambda = sol.rows(nf, lay.rows).into_owned();
    let at_lambda = a.transpose() * &lambda;

    // Primal piece membership and dual conditions of the pinned variables.
    for j in 0..nv {
        let t = x[j];
        match (lay.var(j), pattern[j]) {
            (Var::Theta(_), Piece::Pos) if t < -tol => return None,
            (Var::Theta(_), Piece::Neg) if t > tol => return None,
            (Var::Theta(i), Piece::Fixed) => {
                let g = hess[j] * t + lin[j] + at_lambda[j];
                if g.abs() > sub.l1[i] + tol {
                    return None;
                }
            }
            (Var::R(k), p) | (Var::S(k), p) => {
                let part = match lay.var(j) {
                    Var::R(_) => &sub.splits[k].up,
                    _ => &sub.splits[k].down,
                };
                let excursion = match part.monotonicity {
                    Monotonicity::NonDecreasing => t - part.knot,
                    Monotonicity::NonIncreasing => part.knot - t,
                };
                match p {
                    Piece::Flat if excursion > tol => return None,
                    Piece::Curved if excursion < -tol => return None,
                    Piece::Fixed => {
                        // Loss subgradient forced by stationarity, in loss units.
                        let q = -(c * (t - if matches!(lay.var(j), Var::R(_)) {
                            sub.r_anchor[k]
                        } else {
                            sub.s_anchor[k]
                        }) + at_lambda[j])
                            / ls;
                        let (lo, hi) = match part.monotonicity {
                            Monotonicity::NonDecreasing => (part.slope, part.slope + part.linear),
                            Monotonicity::NonIncreasing => (part.slope - part.linear, part.slope),
                        };
                        if q < lo - tol / ls || q > hi + tol / ls {
                            return None;
                        }
                    }
                    _ => {}
                }
            }
            (Var::Slack(_), Piece::Free) if t < -tol => return None,
            (Var::Slack(_), Piece::Fixed) => {
                let mu = hess[j] * t + lin[j] + at_lambda[j];
                if mu < -tol {
                    return None;
                }
            }
            _ => {}
        }
    }
    Some(x)
}

/// Enumerates piece patterns in order of Hamming distance from `hint`
/// (every pattern is reached eventually) and returns the first one whose
/// KKT conditions hold. The subproblem is strongly convex, so the certified
/// point is its unique minimizer regardless of the order.
pub fn active_set_oracle(sub: &DualSubproblem, hint: &SubproblemPrimal) -> Option<OracleSolution> {
    assert!(matches!(sub.domain, Domain::Free), "the oracle handles the unconstrained domain");
    let lay = Layout::of(sub);
    let nv = lay.len();
    let opts: Vec<Vec<Piece>> = (0..nv).map(|j| options(sub, &lay, j)).collect();
    let base: Vec<Piece> = (0..nv).map(|j| piece_at(sub, &lay, j, hint)).collect();
    let varying: Vec<usize> = (0..nv).filter(|&j| opts[j].len() > 1).collect();
    let tol = 1e-10 * (1.0 + sub.beta.amax() + sub.theta_anchor.amax());

    let mut tried = 0;
    let mut pattern = base.clone();
    for dist in 0..=varying.len() {
        let mut chosen = Vec::with_capacity(dist);
        if let Some(x) = search(&lay, sub, &opts, &base, &varying, dist, 0, &mut chosen, &mut pattern, &mut tried, tol) {
            let primal = SubproblemPrimal {
                theta: x.rows(0, lay.m).into_owned(),
                r: x.rows(lay.m, lay.n).into_owned(),
                s: x.rows(lay.m + lay.n, lay.n).into_owned(),
                slack: x.rows(lay.m + 2 * lay.n, lay.rows).into_owned(),
            };
            let value = subproblem_objective(sub, &primal);
            return Some(OracleSolution { primal, value, tried });
        }
    }
    None
}

/// Chooses `dist` more positions from `varying[start..]` to move off `base`,
/// then every alternative piece at the chosen positions.
#[allow(clippy::too_many_arguments)]
fn search(
    lay: &Layout,
    sub: &DualSubproblem,
    opts: &[Vec<Piece>],
    base: &[Piece],
    varying: &[usize],
    dist: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    pattern: &mut Vec<Piece>,
    tried: &mut usize,
    tol: f64,
) -> Option<DVector<f64>> {
    if chosen.len() == dist {
        return assign(lay, sub, opts, base, chosen, 0, pattern, tried, tol);
    }
    for p in start..varying.len() {
        if varying.len() - p < dist - chosen.len() {
            break;
        }
        chosen.push(varying[p]);
        let found = search(lay, sub, opts, base, varying, dist, p + 1, chosen, pattern, tried, tol);
        chosen.pop();
        if found.is_some() {
            return found;
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn assign(
    lay: &Layout,
    sub: &DualSubproblem,
    opts: &[Vec<Piece>],
    base: &[Piece],
    chosen: &[usize],
    depth: usize,
    pattern: &mut Vec<Piece>,
    tried: &mut usize,
    tol: f64,
) -> Option<DVector<f64>> {
    if depth == chosen.len() {
        *tried += 1;
        return try_pattern(sub, lay, pattern, tol);
    }
    let j = chosen[depth];
    for &p in &opts[j] {
        if p == base[j] {
            continue;
        }
        pattern[j] = p;
        let found = assign(lay, sub, opts, base, chosen, depth + 1, pattern, tried, tol);
        pattern[j] = base[j];
        if found.is_some() {
            return found;
        }
    }
    None
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}
