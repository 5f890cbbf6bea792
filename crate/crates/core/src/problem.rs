//! Sample-average composite problems and the construction of their convex
//! subproblems.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::funcs::{DcRegularizer, DiffMaxFunction, MonotoneSplit};
use crate::snewton::{DualSubproblem, RowKind};

/// Feasible set for `theta`.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Free,
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
}

impl Domain {
    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::Invalid("box lower bound exceeds upper bound".into()));
        }
        Ok(Domain::Box { lower, upper })
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        match self {
            Domain::Free => theta.iter().all(|t| t.is_finite()),
            Domain::Box { lower, upper } => {
                theta.len() == lower.len()
                    && theta
                        .iter()
                        .zip(lower.iter().zip(upper.iter()))
                        .all(|(t, (l, u))| l <= t && t <= u)
            }
        }
    }

    /// Clamps coordinate `i` into the domain.
    pub fn clamp(&self, i: usize, t: f64) -> f64 {
        match self {
            Domain::Free => t,
            Domain::Box { lower, upper } => t.clamp(lower[i], upper[i]),
        }
    }

    /// Whether the clamp is differentiable from the right with slope one at `t`.
    pub(crate) fn passes(&self, i: usize, t: f64) -> bool {
        match self {
            Domain::Free => true,
            Domain::Box { lower, upper } => t >= lower[i] && t < upper[i],
        }
    }
}

/// One summand `phi_s(psi_s(theta))`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeTerm {
    pub split: MonotoneSplit,
    pub psi: DiffMaxFunction,
}

/// Per-sample atom pair `(i1, i2)` used to linearize `h_s` and `g_s`.
pub type PairSelection = Vec<(usize, usize)>;

/// `(1/N) sum_s phi_s(psi_s(theta)) + gamma * P(theta)` over a domain.
#[derive(Clone, Debug)]
pub struct CompositeProblem {
    terms: Vec<CompositeTerm>,
    regularizer: DcRegularizer,
    domain: Domain,
}

impl CompositeProblem {
    pub fn new(terms: Vec<CompositeTerm>, regularizer: DcRegularizer, domain: Domain) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Invalid("a problem needs at least one sample".into()))?;
        let dim = first.psi.dim();
        for t in &terms {
            check_dim(dim, t.psi.dim())?;
        }
        check_dim(dim, regularizer.dim())?;
        if let Domain::Box { lower, .. } = &domain {
            check_dim(dim, lower.len())?;
        }
        Ok(CompositeProblem {
            terms,
            regularizer,
            domain,
        })
    }

    pub fn dim(&self) -> usize {
        self.terms[0].psi.dim()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[CompositeTerm] {
        &self.terms
    }

    pub fn regularizer(&self) -> &DcRegularizer {
        &self.regularizer
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn loss_scale(&self) -> f64 {
        1.0 / self.terms.len() as f64
    }

    pub fn psi_values(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.terms.iter().map(|t| t.psi.value(theta)))
    }

    /// `f_N(theta)`.
    pub fn objective(&self, theta: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        let loss: f64 = self
            .terms
            .iter()
            .map(|t| t.split.value(t.psi.value(theta)))
            .sum();
        Ok(loss * self.loss_scale() + self.regularizer.value(theta))
    }

    /// `(1/N) sum_s [up_s(r_s) + down_s(s_s)]`.
    pub fn split_loss(&self, r: &DVector<f64>, s: &DVector<f64>) -> f64 {
        let total: f64 = self
            .terms
            .iter()
            .zip(r.iter().zip(s.iter()))
            .map(|(t, (&ri, &si))| t.split.up.value(ri) + t.split.down.value(si))
            .sum();
        total * self.loss_scale()
    }

    /// Directional derivative of `f_N` at `theta` along `v`.
    pub fn dir_derivative(&self, theta: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for t in &self.terms {
            total += crate::funcs::composite_dir(&t.split, &t.psi, theta, v)?;
        }
        let reg = &self.regularizer;
        let mut reg_dir = 0.0;
        if reg.is_active() {
            let grad = reg.smooth_gradient(theta);
            for i in 0..theta.len() {
                let l1 = if theta[i] != 0.0 {
                    theta[i].signum() * v[i]
                } else {
                    v[i].abs()
                };
                reg_dir += reg.weights[i] * l1 - grad[i] * v[i];
            }
            reg_dir *= reg.gamma;
        }
        Ok(total * self.loss_scale() + reg_dir)
    }

    /// Per-sample exact argmax index sets of `g_s` and `h_s`.
    pub fn exact_argmax(&self, theta: &DVector<f64>) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        self.terms
            .iter()
            .map(|t| Ok((t.psi.g.max_eval(theta)?.1, t.psi.h.max_eval(theta)?.1)))
            .collect()
    }

    /// Per-sample epsilon-argmax index sets of `g_s` and `h_s`.
    pub fn eps_argmax(&self, theta: &DVector<f64>, eps: f64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        self.terms
            .iter()
            .map(|t| Ok((t.psi.g.eps_argmax(theta, eps)?, t.psi.h.eps_argmax(theta, eps)?)))
            .collect()
    }

    /// The lexicographically first exact-argmax pair of every sample.
    pub fn first_exact_selection(&self, theta: &DVector<f64>) -> Result<PairSelection> {
        Ok(self
            .exact_argmax(theta)?
            .into_iter()
            .map(|(a, b)| (a[0], b[0]))
            .collect())
    }

    /// Builds the convex subproblem for `selection` with proximal center
    /// `(theta, r, s)`. Slack centers are the values that make the center
    /// satisfy every equality, clipped at zero.
    pub fn subproblem(
        &self,
        theta: &DVector<f64>,
        r: &DVector<f64>,
        s: &DVector<f64>,
        selection: &[(usize, usize)],
        c: f64,
    ) -> Result<DualSubproblem> {
        let m = self.dim();
        check_dim(m, theta.len())?;
        check_dim(self.len(), r.len())?;
        check_dim(self.len(), s.len())?;
        check_dim(self.len(), selection.len())?;
        if !(c > 0.0) {
            return Err(Error::Invalid(format!("proximal weight must be positive, got {c}")));
        }
        let rows: usize = self.terms.iter().map(|t| t.psi.g.len() + t.psi.h.len()).sum();
        let mut b = DMatrix::zeros(rows, m);
        let mut beta = DVector::zeros(rows);
        let mut row_sample = Vec::with_capacity(rows);
        let mut row_kind = Vec::with_capacity(rows);
        let mut row = 0;
        for (idx, (term, &(i1, i2))) in self.terms.iter().zip(selection).enumerate() {
            let (w1, b1) = affine_parts(term.psi.g.atom(i1)?)?;
            let (w2, b2) = affine_parts(term.psi.h.atom(i2)?)?;
            for atom in term.psi.g.atoms() {
                let (w, bj) = affine_parts(atom)?;
                b.row_mut(row).copy_from(&(w - w2).transpose());
                beta[row] = b2 - bj;
                row_sample.push(idx);
                row_kind.push(RowKind::Upper);
                row += 1;
            }
            for atom in term.psi.h.atoms() {
                let (w, bj) = affine_parts(atom)?;
                b.row_mut(row).copy_from(&(w - w1).transpose());
                beta[row] = b1 - bj;
                row_sample.push(idx);
                row_kind.push(RowKind::Lower);
                row += 1;
            }
        }
        let bt = &b * theta;
        let slack_anchor = DVector::from_iterator(
            rows,
            (0..rows).map(|i| {
                let sample = row_sample[i];
                let v = match row_kind[i] {
                    RowKind::Upper => beta[i] - bt[i] + r[sample],
                    RowKind::Lower => beta[i] - bt[i] - s[sample],
                };
                v.max(0.0)
            }),
        );
        let majorant = self.regularizer.majorant(theta, theta)?;
        Ok(DualSubproblem {
            b,
            beta,
            row_sample,
            row_kind,
            splits: self.terms.iter().map(|t| t.split).collect(),
            theta_anchor: theta.clone(),
            r_anchor: r.clone(),
            s_anchor: s.clone(),
            slack_anchor,
            c,
            loss_scale: self.loss_scale(),
            l1: majorant.l1_weights,
            linear: majorant.linear,
            reg_constant: majorant.constant,
            domain: self.domain.clone(),
        })
    }
}

fn affine_parts(atom: &crate::funcs::SmoothConvexAtom) -> Result<(&DVector<f64>, f64)> {
    atom.as_affine().ok_or_else(|| {
        Error::Unsupported("the dual subproblem path requires affine atoms".into())
    })
}
