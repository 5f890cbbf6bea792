//! Function atoms and the calculus shared by every solver.
//!
//! A difference-max function is `psi = g - h` where `g` and `h` are pointwise
//! maxima of smooth convex atoms. Univariate convex losses are split into a
//! non-decreasing and a non-increasing convex part so that a composite
//! `phi(psi(theta))` admits a convex majorant built from linearizations of the
//! two maxima.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};

/// Absolute tolerance used to decide argmax membership.
pub const TIE_TOL: f64 = 1e-9;

/// An affine or convex quadratic function of `theta`.
#[derive(Clone, Debug, PartialEq)]
pub enum SmoothConvexAtom {
    /// `w' theta + b`
    Affine { w: DVector<f64>, b: f64 },
    /// `0.5 theta' Q theta + w' theta + b` with `Q` symmetric positive semidefinite.
    Quadratic {
        q: DMatrix<f64>,
        w: DVector<f64>,
        b: f64,
    },
}

impl SmoothConvexAtom {
    pub fn affine(w: DVector<f64>, b: f64) -> Self {
        SmoothConvexAtom::Affine { w, b }
    }

    /// Builds a quadratic atom, rejecting asymmetric or indefinite `q`.
    pub fn quadratic(q: DMatrix<f64>, w: DVector<f64>, b: f64) -> Result<Self> {
        check_dim(w.len(), q.nrows())?;
        check_dim(w.len(), q.ncols())?;
        let scale = q.amax().max(1.0);
        if (&q - q.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Invalid("quadratic atom matrix is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(q.clone());
        if eig.eigenvalues.min() < -1e-10 * scale {
            return Err(Error::Invalid(
                "quadratic atom matrix is not positive semidefinite".into(),
            ));
        }
        Ok(SmoothConvexAtom::Quadratic { q, w, b })
    }

    pub fn dim(&self) -> usize {
        match self {
            SmoothConvexAtom::Affine { w, .. } | SmoothConvexAtom::Quadratic { w, .. } => w.len(),
        }
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        match self {
            SmoothConvexAtom::Affine { w, b } => w.dot(theta) + b,
            SmoothConvexAtom::Quadratic { q, w, b } => {
                0.5 * theta.dot(&(q * theta)) + w.dot(theta) + b
            }
        }
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            SmoothConvexAtom::Affine { w, .. } => w.clone(),
            SmoothConvexAtom::Quadratic { q, w, .. } => q * theta + w,
        }
    }

    /// `(w, b)` when the atom is affine.
    pub fn as_affine(&self) -> Option<(&DVector<f64>, f64)> {
        match self {
            SmoothConvexAtom::Affine { w, b } => Some((w, *b)),
            SmoothConvexAtom::Quadratic { .. } => None,
        }
    }
}

/// Pointwise maximum of a nonempty list of atoms sharing one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxFunction {
    atoms: Vec<SmoothConvexAtom>,
}

impl MaxFunction {
    pub fn new(atoms: Vec<SmoothConvexAtom>) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::Invalid("a max function needs at least one atom".into()))?;
        let dim = first.dim();
        for atom in &atoms {
            check_dim(dim, atom.dim())?;
        }
        Ok(MaxFunction { atoms })
    }

    /// The stand-in for an empty maximum: a single all-zero affine atom.
    pub fn zero(dim: usize) -> Self {
        MaxFunction {
            atoms: vec![SmoothConvexAtom::affine(DVector::zeros(dim), 0.0)],
        }
    }

    pub fn atoms(&self) -> &[SmoothConvexAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn atom(&self, index: usize) -> Result<&SmoothConvexAtom> {
        self.atoms.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.atoms.len(),
        })
    }

    pub fn values(&self, theta: &DVector<f64>) -> Vec<f64> {
        self.atoms.iter().map(|a| a.value(theta)).collect()
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.value(theta))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximum value together with every index attaining it within [`TIE_TOL`].
    pub fn max_eval(&self, theta: &DVector<f64>) -> Result<(f64, Vec<usize>)> {
        check_dim(self.dim(), theta.len())?;
        let values = self.values(theta);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((max, indices_within(&values, max, TIE_TOL)))
    }

    /// Indices whose atom value is at least `max - eps`.
    pub fn eps_argmax(&self, theta: &DVector<f64>, eps: f64) -> Result<Vec<usize>> {
        check_dim(self.dim(), theta.len())?;
        if !(eps > 0.0) {
            return Err(Error::Invalid(format!("eps must be positive, got {eps}")));
        }
        let values = self.values(theta);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // The exact argmax is always included, even when eps < TIE_TOL.
        Ok(indices_within(&values, max, eps.max(TIE_TOL)))
    }

    /// `max_{i in argmax} grad_i' v`, the directional derivative of the max.
    pub fn dir_derivative(&self, theta: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        let (_, active) = self.max_eval(theta)?;
        Ok(active
            .iter()
            .map(|&i| self.atoms[i].gradient(theta).dot(v))
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

fn indices_within(values: &[f64], max: f64, tol: f64) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= max - tol)
        .map(|(i, _)| i)
        .collect()
}

/// `psi = g - h`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffMaxFunction {
    pub g: MaxFunction,
    pub h: MaxFunction,
}

impl DiffMaxFunction {
    pub fn new(g: MaxFunction, h: MaxFunction) -> Result<Self> {
        check_dim(g.dim(), h.dim())?;
        Ok(DiffMaxFunction { g, h })
    }

    /// `psi = g` with the empty second max.
    pub fn convex(g: MaxFunction) -> Self {
        let dim = g.dim();
        DiffMaxFunction {
            g,
            h: MaxFunction::zero(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        self.g.value(theta) - self.h.value(theta)
    }

    pub fn is_affine(&self) -> bool {
        self.g
            .atoms()
            .iter()
            .chain(self.h.atoms())
            .all(|a| a.as_affine().is_some())
    }

    /// `psi'(theta; v) = g'(theta; v) - h'(theta; v)`.
    pub fn dir_derivative(&self, theta: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        Ok(self.g.dir_derivative(theta, v)? - self.h.dir_derivative(theta, v)?)
    }
}

/// Univariate convex losses `phi(t)` with known minimizers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnivariateConvexLoss {
    /// `0.5 (t - y)^2`
    Squared { y: f64 },
    /// `max(tau (t - y), (tau - 1)(t - y))`
    Quantile { y: f64, tau: f64 },
    /// `slope * t`, monotone on the whole line.
    Linear { slope: f64 },
}

impl UnivariateConvexLoss {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            UnivariateConvexLoss::Squared { y } => 0.5 * (t - y) * (t - y),
            UnivariateConvexLoss::Quantile { y, tau } => (tau * (t - y)).max((tau - 1.0) * (t - y)),
            UnivariateConvexLoss::Linear { slope } => slope * t,
        }
    }

    /// A minimizer of the loss, or the infinite end it decreases towards.
    pub fn pivot(&self) -> f64 {
        match *self {
            UnivariateConvexLoss::Squared { y } | UnivariateConvexLoss::Quantile { y, .. } => y,
            UnivariateConvexLoss::Linear { slope } if slope > 0.0 => f64::NEG_INFINITY,
            UnivariateConvexLoss::Linear { slope } if slope < 0.0 => f64::INFINITY,
            UnivariateConvexLoss::Linear { .. } => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    NonDecreasing,
    NonIncreasing,
}

/// A convex monotone univariate function of the form
/// `offset + slope*t + linear*e(t) + 0.5*quadratic*e(t)^2`
/// with the one-sided excursion `e(t) = (t - knot)_+` when non-decreasing and
/// `e(t) = (knot - t)_+` when non-increasing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotonePart {
    pub monotonicity: Monotonicity,
    pub knot: f64,
    pub offset: f64,
    pub slope: f64,
    pub linear: f64,
    pub quadratic: f64,
}

impl MonotonePart {
    pub fn new(
        monotonicity: Monotonicity,
        knot: f64,
        offset: f64,
        slope: f64,
        linear: f64,
        quadratic: f64,
    ) -> Result<Self> {
        let slope_ok = match monotonicity {
            Monotonicity::NonDecreasing => slope >= 0.0,
            Monotonicity::NonIncreasing => slope <= 0.0,
        };
        if !slope_ok || linear < 0.0 || quadratic < 0.0 {
            return Err(Error::Invalid(format!(
                "part is not convex {monotonicity:?}: slope {slope}, linear {linear}, quadratic {quadratic}"
            )));
        }
        if !knot.is_finite() && (linear != 0.0 || quadratic != 0.0) {
            return Err(Error::Invalid("a curved part needs a finite knot".into()));
        }
        Ok(MonotonePart {
            monotonicity,
            knot,
            offset,
            slope,
            linear,
            quadratic,
        })
    }

    pub fn zero(monotonicity: Monotonicity) -> Self {
        MonotonePart {
            monotonicity,
            knot: 0.0,
            offset: 0.0,
            slope: 0.0,
            linear: 0.0,
            quadratic: 0.0,
        }
    }

    /// `slope * t`; monotonicity follows the sign of the slope.
    pub fn linear_fn(slope: f64) -> Self {
        let monotonicity = if slope >= 0.0 {
            Monotonicity::NonDecreasing
        } else {
            Monotonicity::NonIncreasing
        };
        MonotonePart {
            slope,
            ..MonotonePart::zero(monotonicity)
        }
    }

    fn excursion(&self, t: f64) -> f64 {
        match self.monotonicity {
            Monotonicity::NonDecreasing => (t - self.knot).max(0.0),
            Monotonicity::NonIncreasing => (self.knot - t).max(0.0),
        }
    }

    fn is_flat_beyond_knot(&self) -> bool {
        self.linear == 0.0 && self.quadratic == 0.0
    }

    pub fn value(&self, t: f64) -> f64 {
        if self.is_flat_beyond_knot() {
            return self.offset + self.slope * t;
        }
        let e = self.excursion(t);
        self.offset + self.slope * t + self.linear * e + 0.5 * self.quadratic * e * e
    }

    /// One-sided directional derivative at `t` along `w`.
    pub fn dir_derivative(&self, t: f64, w: f64) -> f64 {
        if self.is_flat_beyond_knot() {
            return self.slope * w;
        }
        let e = self.excursion(t);
        let de = match self.monotonicity {
            Monotonicity::NonDecreasing if t > self.knot => w,
            Monotonicity::NonDecreasing if t < self.knot => 0.0,
            Monotonicity::NonDecreasing => w.max(0.0),
            Monotonicity::NonIncreasing if t < self.knot => -w,
            Monotonicity::NonIncreasing if t > self.knot => 0.0,
            Monotonicity::NonIncreasing => (-w).max(0.0),
        };
        self.slope * w + (self.linear + self.quadratic * e) * de
    }

    /// Unique minimizer of `part(r) - a*r + (c/2)(r - anchor)^2`, `c > 0`.
    pub fn prox(&self, a: f64, anchor: f64, c: f64) -> f64 {
        // Minimizer on the flat side of the knot.
        let flat = anchor + (a - self.slope) / c;
        if self.is_flat_beyond_knot() {
            return flat;
        }
        match self.monotonicity {
            Monotonicity::NonDecreasing => {
                if flat <= self.knot {
                    return flat;
                }
                let curved = (a - self.slope - self.linear + self.quadratic * self.knot + c * anchor)
                    / (self.quadratic + c);
                if curved >= self.knot {
                    curved
                } else {
                    self.knot
                }
            }
            Monotonicity::NonIncreasing => {
                if flat >= self.knot {
                    return flat;
                }
                let curved = (a - self.slope + self.linear + self.quadratic * self.knot + c * anchor)
                    / (self.quadratic + c);
                if curved <= self.knot {
                    curved
                } else {
                    self.knot
                }
            }
        }
    }

    /// Right derivative of [`MonotonePart::prox`] with respect to `a`.
    pub fn prox_derivative(&self, a: f64, anchor: f64, c: f64) -> f64 {
        let flat = anchor + (a - self.slope) / c;
        if self.is_flat_beyond_knot() {
            return 1.0 / c;
        }
        match self.monotonicity {
            Monotonicity::NonDecreasing => {
                if flat < self.knot {
                    return 1.0 / c;
                }
                let curved = (a - self.slope - self.linear + self.quadratic * self.knot + c * anchor)
                    / (self.quadratic + c);
                if curved >= self.knot {
                    1.0 / (self.quadratic + c)
                } else {
                    0.0
                }
            }
            Monotonicity::NonIncreasing => {
                if flat >= self.knot {
                    return 1.0 / c;
                }
                let curved = (a - self.slope + self.linear + self.quadratic * self.knot + c * anchor)
                    / (self.quadratic + c);
                if curved < self.knot {
                    1.0 / (self.quadratic + c)
                } else {
                    0.0
                }
            }
        }
    }
}

/// A convex loss written as `up + down` with `up` non-decreasing and `down`
/// non-increasing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotoneSplit {
    pub up: MonotonePart,
    pub down: MonotonePart,
    /// A minimizer of `up + down`, or the infinite end for monotone losses.
    pub pivot: f64,
}

impl MonotoneSplit {
    /// Pairs two parts into a split, checking their monotonicity.
    pub fn from_parts(up: MonotonePart, down: MonotonePart, pivot: f64) -> Result<Self> {
        if up.monotonicity != Monotonicity::NonDecreasing
            || down.monotonicity != Monotonicity::NonIncreasing
        {
            return Err(Error::Invalid(
                "split needs a non-decreasing up part and a non-increasing down part".into(),
            ));
        }
        Ok(MonotoneSplit { up, down, pivot })
    }

    pub fn value(&self, t: f64) -> f64 {
        self.up.value(t) + self.down.value(t)
    }

    pub fn dir_derivative(&self, t: f64, w: f64) -> f64 {
        self.up.dir_derivative(t, w) + self.down.dir_derivative(t, w)
    }
}

/// Splits a loss following the minimizer construction: below the pivot the
/// whole loss goes to the non-increasing part, above it the excess over the
/// minimum value goes to the non-decreasing part.
pub fn monotone_split(loss: &UnivariateConvexLoss) -> Result<MonotoneSplit> {
    use Monotonicity::*;
    match *loss {
        UnivariateConvexLoss::Squared { y } => MonotoneSplit::from_parts(
            MonotonePart::new(NonDecreasing, y, 0.0, 0.0, 0.0, 1.0)?,
            MonotonePart::new(NonIncreasing, y, 0.0, 0.0, 0.0, 1.0)?,
            y,
        ),
        UnivariateConvexLoss::Quantile { y, tau } => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::Unsupported(format!(
                    "quantile level must lie in (0,1), got {tau}"
                )));
            }
            MonotoneSplit::from_parts(
                MonotonePart::new(NonDecreasing, y, 0.0, 0.0, tau, 0.0)?,
                MonotonePart::new(NonIncreasing, y, 0.0, 0.0, 1.0 - tau, 0.0)?,
                y,
            )
        }
        UnivariateConvexLoss::Linear { slope } => {
            let (up, down) = if slope >= 0.0 {
                (MonotonePart::linear_fn(slope), MonotonePart::zero(NonIncreasing))
            } else {
                (MonotonePart::zero(NonDecreasing), MonotonePart::linear_fn(slope))
            };
            MonotoneSplit::from_parts(up, down, loss.pivot())
        }
    }
}

/// `(phi o psi)'(theta; v) = phi'(psi(theta); psi'(theta; v))`.
pub fn composite_dir(
    split: &MonotoneSplit,
    psi: &DiffMaxFunction,
    theta: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    check_dim(psi.dim(), theta.len())?;
    let inner = psi.dir_derivative(theta, v)?;
    Ok(split.dir_derivative(psi.value(theta), inner))
}

/// Linearization of atom `index` of `f` at `anchor`, evaluated at `theta`.
pub(crate) fn atom_linearization(
    f: &MaxFunction,
    index: usize,
    anchor: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<f64> {
    let atom = f.atom(index)?;
    Ok(atom.value(anchor) + atom.gradient(anchor).dot(&(theta - anchor)))
}

/// Convex majorant of `phi o psi` for the index pair `(i1, i2)` linearized at
/// `anchor`:
/// `up(g(theta) - lin_{h,i2}(theta)) + down(lin_{g,i1}(theta) - h(theta))`.
///
/// The linearizations are of the atoms themselves, so the bound holds for any
/// pair; for pairs in the exact argmax sets it also touches at `anchor`.
pub fn majorant_value(
    split: &MonotoneSplit,
    psi: &DiffMaxFunction,
    pair: (usize, usize),
    theta: &DVector<f64>,
    anchor: &DVector<f64>,
) -> Result<f64> {
    check_dim(psi.dim(), theta.len())?;
    check_dim(psi.dim(), anchor.len())?;
    let lin_h = atom_linearization(&psi.h, pair.1, anchor, theta)?;
    let lin_g = atom_linearization(&psi.g, pair.0, anchor, theta)?;
    Ok(split.up.value(psi.g.value(theta) - lin_h) + split.down.value(lin_g - psi.h.value(theta)))
}

/// Differentiable convex parts `p_i` subtracted in a dc regularizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmoothPenalty {
    Zero,
    /// `|t| - scad(t)/lambda` for the SCAD penalty with threshold `lambda`
    /// and shape `a > 2`. Vanishes on `[-lambda, lambda]`.
    Scad { a: f64, lambda: f64 },
}

/// Shape parameter conventionally used with SCAD.
pub const SCAD_A: f64 = 3.7;

/// The SCAD penalty itself.
pub fn scad(t: f64, a: f64, lambda: f64) -> f64 {
    let u = t.abs();
    if u <= lambda {
        lambda * u
    } else if u <= a * lambda {
        (2.0 * a * lambda * u - u * u - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    }
}

impl SmoothPenalty {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            SmoothPenalty::Zero => 0.0,
            SmoothPenalty::Scad { a, lambda } => {
                let u = t.abs();
                if u <= lambda {
                    0.0
                } else if u <= a * lambda {
                    (u - lambda) * (u - lambda) / (2.0 * (a - 1.0) * lambda)
                } else {
                    u - (a + 1.0) * lambda / 2.0
                }
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            SmoothPenalty::Zero => 0.0,
            SmoothPenalty::Scad { a, lambda } => {
                let u = t.abs();
                let mag = if u <= lambda {
                    0.0
                } else if u <= a * lambda {
                    (u - lambda) / ((a - 1.0) * lambda)
                } else {
                    1.0
                };
                mag * t.signum()
            }
        }
    }
}

/// `gamma * [sum_i c_i |theta_i| - sum_i p_i(theta_i)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DcRegularizer {
    pub weights: DVector<f64>,
    pub smooth: Vec<SmoothPenalty>,
    pub gamma: f64,
}

/// Data of the convex majorant `gamma * P_hat(., anchor)` in the form
/// `sum_i l1_weights_i |theta_i| - linear' theta + constant`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizerMajorant {
    pub value: f64,
    pub l1_weights: DVector<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl RegularizerMajorant {
    pub fn eval(&self, theta: &DVector<f64>) -> f64 {
        self.l1_weights.dot(&theta.abs()) - self.linear.dot(theta) + self.constant
    }
}

impl DcRegularizer {
    pub fn new(weights: DVector<f64>, smooth: Vec<SmoothPenalty>, gamma: f64) -> Result<Self> {
        check_dim(weights.len(), smooth.len())?;
        if gamma < 0.0 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Invalid("regularizer weights must be nonnegative".into()));
        }
        for p in &smooth {
            if let SmoothPenalty::Scad { a, lambda } = *p {
                if !(a > 2.0 && lambda > 0.0) {
                    return Err(Error::Invalid(format!("bad SCAD parameters a={a}, lambda={lambda}")));
                }
            }
        }
        Ok(DcRegularizer {
            weights,
            smooth,
            gamma,
        })
    }

    /// The disabled regularizer.
    pub fn none(dim: usize) -> Self {
        DcRegularizer {
            weights: DVector::zeros(dim),
            smooth: vec![SmoothPenalty::Zero; dim],
            gamma: 0.0,
        }
    }

    /// Plain weighted l1: `gamma * ||theta||_1`.
    pub fn l1(dim: usize, gamma: f64) -> Result<Self> {
        DcRegularizer::new(DVector::from_element(dim, 1.0), vec![SmoothPenalty::Zero; dim], gamma)
    }

    /// SCAD on every coordinate with threshold `gamma`, so that the weighted
    /// regularizer equals `sum_i scad(theta_i)`.
    pub fn scad(dim: usize, gamma: f64) -> Result<Self> {
        if gamma == 0.0 {
            return Ok(DcRegularizer::none(dim));
        }
        DcRegularizer::new(
            DVector::from_element(dim, 1.0),
            vec![SmoothPenalty::Scad { a: SCAD_A, lambda: gamma }; dim],
            gamma,
        )
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_active(&self) -> bool {
        self.gamma > 0.0
    }

    /// Unweighted `P(theta)`.
    pub fn penalty(&self, theta: &DVector<f64>) -> f64 {
        self.weights.dot(&theta.abs()) - self.smooth_value(theta)
    }

    /// `gamma * P(theta)`.
    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        if self.gamma == 0.0 {
            0.0
        } else {
            self.gamma * self.penalty(theta)
        }
    }

    pub fn smooth_value(&self, theta: &DVector<f64>) -> f64 {
        self.smooth.iter().zip(theta.iter()).map(|(p, &t)| p.value(t)).sum()
    }

    pub fn smooth_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            theta.len(),
            self.smooth.iter().zip(theta.iter()).map(|(p, &t)| p.derivative(t)),
        )
    }

    /// Convex majorant of `gamma * P` at `anchor`, evaluated at `theta`.
    pub fn majorant(&self, theta: &DVector<f64>, anchor: &DVector<f64>) -> Result<RegularizerMajorant> {
        check_dim(self.dim(), theta.len())?;
        check_dim(self.dim(), anchor.len())?;
        let dim = self.dim();
        if self.gamma == 0.0 {
            return Ok(RegularizerMajorant {
                value: 0.0,
                l1_weights: DVector::zeros(dim),
                linear: DVector::zeros(dim),
                constant: 0.0,
            });
        }
        let grad = self.smooth_gradient(anchor);
        let l1_weights = &self.weights * self.gamma;
        let linear = &grad * self.gamma;
        let constant = self.gamma * (grad.dot(anchor) - self.smooth_value(anchor));
        let mut out = RegularizerMajorant {
            value: 0.0,
            l1_weights,
            linear,
            constant,
        };
        out.value = out.eval(theta);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn scalar_max(slopes: &[f64]) -> MaxFunction {
        MaxFunction::new(slopes.iter().map(|&a| SmoothConvexAtom::affine(v(&[a]), 0.0)).collect())
            .unwrap()
    }

    fn example1_max() -> MaxFunction {
        let atoms = [(1.0, 1.0), (1.0, -1.0), (-2.0, 1.0), (-2.0, -1.0)]
            .iter()
            .map(|&(a, b)| SmoothConvexAtom::affine(v(&[a, b]), 0.0))
            .collect();
        MaxFunction::new(atoms).unwrap()
    }

    #[test]
    fn max_eval_ties_and_singletons() {
        let g = scalar_max(&[2.0, 1.5]);
        let (val, idx) = g.max_eval(&v(&[0.0])).unwrap();
        assert_eq!(val, 0.0);
        assert_eq!(idx, vec![0, 1]);

        let single = scalar_max(&[3.0]);
        let (val, idx) = single.max_eval(&v(&[2.0])).unwrap();
        assert_eq!(val, 6.0);
        assert_eq!(idx, vec![0]);

        let (val, idx) = example1_max().max_eval(&v(&[1.0, 1.0])).unwrap();
        assert_eq!(val, 2.0);
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn max_eval_rejects_wrong_dimension() {
        let err = example1_max().max_eval(&v(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn eps_argmax_expands() {
        let g = scalar_max(&[2.0, 1.5]);
        assert_eq!(g.eps_argmax(&v(&[1.0]), 0.6).unwrap(), vec![0, 1]);
        assert_eq!(g.eps_argmax(&v(&[1.0]), 0.1).unwrap(), vec![0]);
        let f = example1_max();
        assert_eq!(f.eps_argmax(&v(&[0.3, -0.2]), 100.0).unwrap(), vec![0, 1, 2, 3]);
        assert!(g.eps_argmax(&v(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn diffmax_directional_derivatives() {
        let abs = DiffMaxFunction::convex(scalar_max(&[1.0, -1.0]));
        assert_eq!(abs.dir_derivative(&v(&[0.0]), &v(&[1.0])).unwrap(), 1.0);

        // t - max(0, 2t)
        let psi = DiffMaxFunction::new(scalar_max(&[1.0]), scalar_max(&[0.0, 2.0])).unwrap();
        assert_eq!(psi.dir_derivative(&v(&[0.0]), &v(&[1.0])).unwrap(), -1.0);
        assert_eq!(psi.dir_derivative(&v(&[0.0]), &v(&[-1.0])).unwrap(), -1.0);
    }

    #[test]
    fn split_examples() {
        let sq = monotone_split(&UnivariateConvexLoss::Squared { y: 0.0 }).unwrap();
        assert_eq!(sq.up.value(1.0), 0.5);
        assert_eq!(sq.down.value(1.0), 0.0);
        assert_eq!(sq.up.value(-1.0), 0.0);
        assert_eq!(sq.down.value(-1.0), 0.5);

        let q = monotone_split(&UnivariateConvexLoss::Quantile { y: 0.0, tau: 0.5 }).unwrap();
        assert_eq!(q.up.value(2.0), 1.0);
        assert_eq!(q.down.value(-2.0), 1.0);

        assert!(monotone_split(&UnivariateConvexLoss::Quantile { y: 0.0, tau: 1.5 }).is_err());
    }

    #[test]
    fn split_identity_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let losses = [
            UnivariateConvexLoss::Squared { y: 0.3 },
            UnivariateConvexLoss::Quantile { y: -1.2, tau: 0.25 },
            UnivariateConvexLoss::Linear { slope: 2.0 },
            UnivariateConvexLoss::Linear { slope: -0.5 },
        ];
        for loss in &losses {
            let split = monotone_split(loss).unwrap();
            for _ in 0..1000 {
                let t: f64 = rng.random_range(-10.0..10.0);
                let sum = split.up.value(t) + split.down.value(t);
                assert!((sum - loss.value(t)).abs() <= 1e-12 * (1.0 + loss.value(t).abs()));
                let u: f64 = rng.random_range(-10.0..10.0);
                let (lo, hi) = if t < u { (t, u) } else { (u, t) };
                assert!(split.up.value(lo) <= split.up.value(hi) + 1e-12);
                assert!(split.down.value(lo) >= split.down.value(hi) - 1e-12);
            }
            // Constant on the far side of a finite pivot.
            if split.pivot.is_finite() {
                let p = split.pivot;
                assert_eq!(split.up.value(p - 1.0), split.up.value(p - 3.0));
                assert_eq!(split.down.value(p + 1.0), split.down.value(p + 3.0));
            }
        }
    }

    #[test]
    fn composite_dir_examples() {
        let sq = monotone_split(&UnivariateConvexLoss::Squared { y: 0.0 }).unwrap();
        let ident = DiffMaxFunction::convex(scalar_max(&[1.0]));
        assert_eq!(composite_dir(&sq, &ident, &v(&[3.0]), &v(&[1.0])).unwrap(), 3.0);

        let abs = DiffMaxFunction::convex(scalar_max(&[1.0, -1.0]));
        for w in [-1.0, 1.0, 2.5] {
            assert_eq!(composite_dir(&sq, &abs, &v(&[0.0]), &v(&[w])).unwrap(), 0.0);
        }
        let q = monotone_split(&UnivariateConvexLoss::Quantile { y: 0.0, tau: 0.5 }).unwrap();
        assert_eq!(composite_dir(&q, &abs, &v(&[0.0]), &v(&[1.0])).unwrap(), 0.5);
    }

    #[test]
    fn prox_closed_forms() {
        let sq = monotone_split(&UnivariateConvexLoss::Squared { y: 0.0 }).unwrap();
        assert_eq!(sq.up.prox(0.0, -2.0, 1.0), -2.0);
        assert_eq!(sq.up.prox(1.0, 0.0, 1.0), 0.5);
    }

    #[test]
    fn prox_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let y: f64 = rng.random_range(-2.0..2.0);
            let tau: f64 = rng.random_range(0.05..0.95);
            let split = monotone_split(&UnivariateConvexLoss::Quantile { y, tau }).unwrap();
            let a: f64 = rng.random_range(-3.0..3.0);
            let anchor: f64 = rng.random_range(-3.0..3.0);
            let c: f64 = rng.random_range(0.1..5.0);
            for part in [split.up, split.down] {
                let got = part.prox(a, anchor, c);
                let obj = |r: f64| part.value(r) - a * r + 0.5 * c * (r - anchor).powi(2);
                // Coarse grid, then bisection on the sign of the right derivative.
                let (lo, hi) = (-20.0, 20.0);
                let steps = 4000;
                let h = (hi - lo) / steps as f64;
                let k = (0..=steps)
                    .min_by(|&i, &j| obj(lo + i as f64 * h).total_cmp(&obj(lo + j as f64 * h)))
                    .unwrap();
                let (mut l, mut u) = (lo + (k as f64 - 1.0) * h, lo + (k as f64 + 1.0) * h);
                let slope = |r: f64| part.dir_derivative(r, 1.0) - a + c * (r - anchor);
                for _ in 0..200 {
                    let m = 0.5 * (l + u);
                    if slope(m) < 0.0 {
                        l = m;
                    } else {
                        u = m;
                    }
                }
                let best = 0.5 * (l + u);
                assert!((got - best).abs() < 1e-10, "prox {got} vs grid {best}");
                assert!(obj(got) <= obj(best) + 1e-14);
            }
        }
    }

    #[test]
    fn prox_derivative_matches_differences() {
        let sq = monotone_split(&UnivariateConvexLoss::Squared { y: 0.4 }).unwrap();
        let h = 1e-7;
        for part in [sq.up, sq.down] {
            for &a in &[-2.0, -0.3, 0.1, 1.7] {
                let fd = (part.prox(a + h, 0.2, 2.0) - part.prox(a, 0.2, 2.0)) / h;
                assert!((fd - part.prox_derivative(a, 0.2, 2.0)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn quadratic_atom_validation_and_gradient() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let atom = SmoothConvexAtom::quadratic(q, v(&[0.3, -1.0]), 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let theta = v(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            let grad = atom.gradient(&theta);
            for k in 0..2 {
                let h = 1e-5;
                let mut e = DVector::zeros(2);
                e[k] = h;
                let fd = (atom.value(&(&theta + &e)) - atom.value(&(&theta - &e))) / (2.0 * h);
                assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + grad[k].abs()));
            }
        }
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(SmoothConvexAtom::quadratic(bad, v(&[0.0, 0.0]), 0.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(SmoothConvexAtom::quadratic(asym, v(&[0.0, 0.0]), 0.0).is_err());
    }

    #[test]
    fn majorant_touches_and_dominates() {
        let split = monotone_split(&UnivariateConvexLoss::Squared { y: 0.2 }).unwrap();
        let psi = DiffMaxFunction::new(scalar_max(&[2.0, 1.5, -1.0]), scalar_max(&[1.0, 0.5])).unwrap();
        let anchor = v(&[0.7]);
        let (_, a1) = psi.g.max_eval(&anchor).unwrap();
        let (_, a2) = psi.h.max_eval(&anchor).unwrap();
        let pair = (a1[0], a2[0]);
        let at_anchor = majorant_value(&split, &psi, pair, &anchor, &anchor).unwrap();
        assert!((at_anchor - split.value(psi.value(&anchor))).abs() < 1e-12);
        for k in -200..=200 {
            let theta = v(&[k as f64 * 0.03]);
            let maj = majorant_value(&split, &psi, pair, &theta, &anchor).unwrap();
            assert!(maj >= split.value(psi.value(&theta)) - 1e-12);
        }
        assert!(matches!(
            majorant_value(&split, &psi, (5, 0), &anchor, &anchor),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn majorant_exact_for_affine_psi() {
        let split = monotone_split(&UnivariateConvexLoss::Quantile { y: 0.0, tau: 0.3 }).unwrap();
        let psi = DiffMaxFunction::new(scalar_max(&[2.0]), scalar_max(&[0.5])).unwrap();
        for k in -20..=20 {
            let theta = v(&[k as f64 * 0.1]);
            let maj = majorant_value(&split, &psi, (0, 0), &theta, &v(&[0.4])).unwrap();
            assert!((maj - split.value(psi.value(&theta))).abs() < 1e-12);
        }
    }

    #[test]
    fn regularizer_majorant_cases() {
        let theta = v(&[0.5, -2.0, 0.0]);
        let anchor = v(&[1.0, 1.0, -3.0]);
        let off = DcRegularizer::none(3);
        let m = off.majorant(&theta, &anchor).unwrap();
        assert_eq!(m.value, 0.0);
        assert!(m.l1_weights.iter().chain(m.linear.iter()).all(|&x| x == 0.0));

        let l1 = DcRegularizer::l1(3, 1.0).unwrap();
        assert_eq!(l1.majorant(&theta, &anchor).unwrap().value, 2.5);

        let scad_reg = DcRegularizer::scad(1, 0.8).unwrap();
        for &a in &[-4.0, -1.5, -0.3, 0.0, 0.9, 2.2, 5.0] {
            let anchor = v(&[a]);
            let touch = scad_reg.majorant(&anchor, &anchor).unwrap().value;
            assert!((touch - scad_reg.value(&anchor)).abs() < 1e-12);
            for k in -300..=300 {
                let t = v(&[k as f64 * 0.02]);
                let maj = scad_reg.majorant(&t, &anchor).unwrap().value;
                assert!(maj >= scad_reg.value(&t) - 1e-12);
            }
        }
    }

    #[test]
    fn scad_decomposition_is_consistent() {
        let (a, lambda) = (SCAD_A, 0.7);
        let p = SmoothPenalty::Scad { a, lambda };
        let mut prev_deriv = f64::NEG_INFINITY;
        for k in -400..=400 {
            let t = k as f64 * 0.01;
            // lambda * (|t| - p(t)) reproduces SCAD.
            assert!((lambda * (t.abs() - p.value(t)) - scad(t, a, lambda)).abs() < 1e-12);
            let h = 1e-6;
            let fd = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
            assert!((fd - p.derivative(t)).abs() < 1e-6);
            // Convexity: derivative non-decreasing.
            assert!(p.derivative(t) >= prev_deriv - 1e-12);
            prev_deriv = p.derivative(t);
        }
    }
}
