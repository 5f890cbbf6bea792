//! Semismooth Newton solver for the Lagrangian dual of the MM subproblem.
//!
//! With affine atoms the subproblem for a fixed pair selection reads
//!
//! ```text
//! minimize   L(r, s) + R(theta) + (c/2) ||(theta, r, s, slack) - center||^2
//! subject to b_i' theta - r_{s(i)} + slack_i = beta_i   (upper rows)
//!            b_i' theta + s_{s(i)} + slack_i = beta_i   (lower rows)
//!            slack >= 0, theta in the domain
//! ```
//!
//! where `L` is the scaled split loss and `R` a weighted l1 term minus a
//! linear term. Its dual function `xi(y)` is concave, unconstrained and
//! continuously differentiable with a semismooth gradient, so Newton steps on
//! `-xi` with an Armijo line search converge globally.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::funcs::MonotoneSplit;
use crate::problem::Domain;

/// Which side of `r >= psi >= s` a constraint row encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Upper,
    Lower,
}

/// Stacked data of one convex subproblem. Rows of the constraint matrix are
/// indexed by the dual vector.
#[derive(Clone, Debug)]
pub struct DualSubproblem {
    pub b: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub row_sample: Vec<usize>,
    pub row_kind: Vec<RowKind>,
    pub splits: Vec<MonotoneSplit>,
    pub theta_anchor: DVector<f64>,
    pub r_anchor: DVector<f64>,
    pub s_anchor: DVector<f64>,
    pub slack_anchor: DVector<f64>,
    pub c: f64,
    /// Weight of the split loss, `1/N` for a sample average.
    pub loss_scale: f64,
    pub l1: DVector<f64>,
    /// Linear term subtracted from the objective, `gamma * grad P2(anchor)`.
    pub linear: DVector<f64>,
    pub reg_constant: f64,
    pub domain: Domain,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnConfig {
    /// Backtracking factor.
    pub rho: f64,
    /// Sufficient increase constant.
    pub sigma: f64,
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Regularization is `min(eps_floor + ||grad||, eps_cap)`.
    pub eps_floor: f64,
    pub eps_cap: f64,
}

impl Default for SnConfig {
    fn default() -> Self {
        SnConfig {
            rho: 0.5,
            sigma: 1e-4,
            tol_grad: 1e-6,
            max_iter: 200,
            eps_floor: 1e-8,
            eps_cap: 1e-2,
        }
    }
}

impl SnConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.rho < 1.0
            && self.sigma > 0.0
            && self.sigma < 1.0
            && self.tol_grad > 0.0
            && self.eps_floor >= 0.0
            && self.eps_cap >= 0.0
            && self.max_iter > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad semismooth Newton settings: {self:?}")))
        }
    }
}

/// A primal point `(theta, r, s, slack)` of the subproblem.
#[derive(Clone, Debug, PartialEq)]
pub struct SubproblemPrimal {
    pub theta: DVector<f64>,
    pub r: DVector<f64>,
    pub s: DVector<f64>,
    pub slack: DVector<f64>,
}

/// Minimizers of the Lagrangian at fixed multipliers, with the branch data
/// needed for a generalized Jacobian.
#[derive(Clone, Debug)]
pub struct InnerSolution {
    pub primal: SubproblemPrimal,
    theta_pass: Vec<bool>,
    slack_pass: Vec<bool>,
    r_slope: Vec<f64>,
    s_slope: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SnOutcome {
    pub multipliers: DVector<f64>,
    /// Feasible primal point recovered from the inner minimizers.
    pub primal: SubproblemPrimal,
    pub primal_value: f64,
    pub dual_value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Steps accepted because the Armijo test was below rounding level.
    pub rounding_steps: usize,
}

impl SnOutcome {
    pub fn duality_gap(&self) -> f64 {
        self.primal_value - self.dual_value
    }
}

/// `sign(u) * max(|u| - t, 0)`.
pub fn soft_threshold(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// Componentwise minimizer of `m * v + (c/2)(v - anchor)^2` over `v >= 0`.
pub fn prox_slack(anchor: &DVector<f64>, multiplier: &DVector<f64>, c: f64) -> DVector<f64> {
    anchor.zip_map(multiplier, |a, m| (a - m / c).max(0.0))
}

/// Groups of rows sharing a sample and a kind.
struct RowGroups {
    upper: Vec<Vec<usize>>,
    lower: Vec<Vec<usize>>,
}

/// Problems with at most this many dual variables use a dense factorization.
const DENSE_LIMIT: usize = 300;

impl DualSubproblem {
    pub fn dual_dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn samples(&self) -> usize {
        self.splits.len()
    }

    /// Checks internal consistency of the stacked data.
    pub fn validate(&self) -> Result<()> {
        let n = self.b.nrows();
        let m = self.b.ncols();
        check_dim(n, self.beta.len())?;
        check_dim(n, self.row_sample.len())?;
        check_dim(n, self.row_kind.len())?;
        check_dim(n, self.slack_anchor.len())?;
        check_dim(m, self.theta_anchor.len())?;
        check_dim(m, self.l1.len())?;
        check_dim(m, self.linear.len())?;
        check_dim(self.samples(), self.r_anchor.len())?;
        check_dim(self.samples(), self.s_anchor.len())?;
        if let Some(&bad) = self.row_sample.iter().find(|&&s| s >= self.samples()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.samples(),
            });
        }
        if !(self.c > 0.0 && self.loss_scale > 0.0) {
            return Err(Error::Invalid("proximal weight and loss scale must be positive".into()));
        }
        Ok(())
    }

    fn groups(&self) -> RowGroups {
        let mut upper = vec![Vec::new(); self.samples()];
        let mut lower = vec![Vec::new(); self.samples()];
        for (i, (&s, &k)) in self.row_sample.iter().zip(&self.row_kind).enumerate() {
            match k {
                RowKind::Upper => upper[s].push(i),
                RowKind::Lower => lower[s].push(i),
            }
        }
        RowGroups { upper, lower }
    }

    /// `(Lambda_s, M_s)`: per-sample sums of upper and lower multipliers.
    fn multiplier_sums(&self, y: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut up = vec![0.0; self.samples()];
        let mut down = vec![0.0; self.samples()];
        for (i, (&s, &k)) in self.row_sample.iter().zip(&self.row_kind).enumerate() {
            match k {
                RowKind::Upper => up[s] += y[i],
                RowKind::Lower => down[s] += y[i],
            }
        }
        (up, down)
    }

    /// Minimizer over the domain of
    /// `(B'y)' theta + sum l1_i |theta_i| - linear' theta + (c/2)||theta - anchor||^2`.
    pub fn inner_theta(&self, y: &DVector<f64>) -> DVector<f64> {
        self.theta_branch(&self.b.tr_mul(y)).0
    }

    fn theta_branch(&self, bty: &DVector<f64>) -> (DVector<f64>, Vec<bool>) {
        let m = bty.len();
        let mut theta = DVector::zeros(m);
        let mut pass = vec![false; m];
        for i in 0..m {
            let u = self.theta_anchor[i] - (bty[i] - self.linear[i]) / self.c;
            let thr = self.l1[i] / self.c;
            let soft = soft_threshold(u, thr);
            theta[i] = self.domain.clamp(i, soft);
            pass[i] = (u >= thr || u < -thr) && self.domain.passes(i, soft);
        }
        (theta, pass)
    }

    /// Lagrangian minimizers at multipliers `y`.
    pub fn inner(&self, y: &DVector<f64>) -> InnerSolution {
        self.evaluate(y).2
    }

    fn evaluate(&self, y: &DVector<f64>) -> (f64, DVector<f64>, InnerSolution) {
        let bty = self.b.tr_mul(y);
        let (theta, theta_pass) = self.theta_branch(&bty);
        let mut value = bty.dot(&theta) + self.l1.dot(&theta.abs()) - self.linear.dot(&theta)
            + 0.5 * self.c * (&theta - &self.theta_anchor).norm_squared()
            + self.reg_constant;

        let (lam, mu) = self.multiplier_sums(y);
        let ls = self.loss_scale;
        let cs = self.c / ls;
        let n_samples = self.samples();
        let mut r = DVector::zeros(n_samples);
        let mut s = DVector::zeros(n_samples);
        let mut r_slope = vec![0.0; n_samples];
        let mut s_slope = vec![0.0; n_samples];
        for k in 0..n_samples {
            let split = &self.splits[k];
            let a_up = lam[k] / ls;
            let rk = split.up.prox(a_up, self.r_anchor[k], cs);
            r_slope[k] = split.up.prox_derivative(a_up, self.r_anchor[k], cs) / ls;
            value += ls * split.up.value(rk) - lam[k] * rk
                + 0.5 * self.c * (rk - self.r_anchor[k]).powi(2);
            r[k] = rk;

            let a_down = -mu[k] / ls;
            let sk = split.down.prox(a_down, self.s_anchor[k], cs);
            s_slope[k] = split.down.prox_derivative(a_down, self.s_anchor[k], cs) / ls;
            value += ls * split.down.value(sk) + mu[k] * sk
                + 0.5 * self.c * (sk - self.s_anchor[k]).powi(2);
            s[k] = sk;
        }

        let slack = prox_slack(&self.slack_anchor, y, self.c);
        let slack_pass: Vec<bool> = self
            .slack_anchor
            .iter()
            .zip(y.iter())
            .map(|(a, m)| a - m / self.c > 0.0)
            .collect();
        value += y.dot(&slack) + 0.5 * self.c * (&slack - &self.slack_anchor).norm_squared();
        value -= y.dot(&self.beta);

        let grad = self.constraint_residual(&theta, &r, &s, &slack);
        let inner = InnerSolution {
            primal: SubproblemPrimal { theta, r, s, slack },
            theta_pass,
            slack_pass,
            r_slope,
            s_slope,
        };
        (value, grad, inner)
    }

    /// `xi(y)` and its gradient, the constraint residual at the inner minimizers.
    pub fn dual_value_grad(&self, y: &DVector<f64>) -> (f64, DVector<f64>) {
        let (v, g, _) = self.evaluate(y);
        (v, g)
    }

    /// Left-hand side minus right-hand side of every equality row.
    pub fn constraint_residual(
        &self,
        theta: &DVector<f64>,
        r: &DVector<f64>,
        s: &DVector<f64>,
        slack: &DVector<f64>,
    ) -> DVector<f64> {
        let mut res = &self.b * theta + slack - &self.beta;
        for i in 0..res.len() {
            let k = self.row_sample[i];
            match self.row_kind[i] {
                RowKind::Upper => res[i] -= r[k],
                RowKind::Lower => res[i] += s[k],
            }
        }
        res
    }

    /// Subproblem objective at a primal point.
    pub fn primal_value(&self, z: &SubproblemPrimal) -> f64 {
        let loss: f64 = self
            .splits
            .iter()
            .zip(z.r.iter().zip(z.s.iter()))
            .map(|(sp, (&r, &s))| sp.up.value(r) + sp.down.value(s))
            .sum();
        let prox = (&z.theta - &self.theta_anchor).norm_squared()
            + (&z.r - &self.r_anchor).norm_squared()
            + (&z.s - &self.s_anchor).norm_squared()
            + (&z.slack - &self.slack_anchor).norm_squared();
        self.loss_scale * loss + self.l1.dot(&z.theta.abs()) - self.linear.dot(&z.theta)
            + self.reg_constant
            + 0.5 * self.c * prox
    }

    /// Projects inner minimizers onto the feasible set by moving `r` up,
    /// `s` down and recomputing slacks, keeping `theta`.
    pub fn repair(&self, inner: &SubproblemPrimal) -> SubproblemPrimal {
        let bt = &self.b * &inner.theta;
        let mut r = inner.r.clone();
        let mut s = inner.s.clone();
        for i in 0..bt.len() {
            let k = self.row_sample[i];
            match self.row_kind[i] {
                RowKind::Upper => r[k] = r[k].max(bt[i] - self.beta[i]),
                RowKind::Lower => s[k] = s[k].min(self.beta[i] - bt[i]),
            }
        }
        let slack = DVector::from_iterator(
            bt.len(),
            (0..bt.len()).map(|i| {
                let k = self.row_sample[i];
                let v = match self.row_kind[i] {
                    RowKind::Upper => self.beta[i] - bt[i] + r[k],
                    RowKind::Lower => self.beta[i] - bt[i] - s[k],
                };
                v.max(0.0)
            }),
        );
        SubproblemPrimal {
            theta: inner.theta.clone(),
            r,
            s,
            slack,
        }
    }

    /// An element of the generalized Hessian of `-xi` at `y`, chosen on the
    /// right-hand branch at every kink.
    pub fn gen_jacobian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let inner = self.inner(y);
        self.dense_hessian(&inner, 0.0)
    }

    fn selected_columns(&self, inner: &InnerSolution) -> DMatrix<f64> {
        let cols: Vec<usize> = (0..self.b.ncols()).filter(|&j| inner.theta_pass[j]).collect();
        self.b.select_columns(&cols)
    }

    fn dense_hessian(&self, inner: &InnerSolution, eps: f64) -> DMatrix<f64> {
        let n = self.dual_dim();
        let bsel = self.selected_columns(inner);
        let mut v = (&bsel * bsel.transpose()) / self.c;
        for i in 0..n {
            v[(i, i)] += eps + if inner.slack_pass[i] { 1.0 / self.c } else { 0.0 };
        }
        let groups = self.groups();
        for (k, rows) in groups.upper.iter().enumerate() {
            add_block(&mut v, rows, inner.r_slope[k]);
        }
        for (k, rows) in groups.lower.iter().enumerate() {
            add_block(&mut v, rows, inner.s_slope[k]);
        }
        v
    }

    /// Solves `(V + eps I) d = rhs`.
    fn newton_direction(
        &self,
        inner: &InnerSolution,
        groups: &RowGroups,
        rhs: &DVector<f64>,
        eps: f64,
    ) -> Option<DVector<f64>> {
        let n = self.dual_dim();
        if n <= DENSE_LIMIT || eps <= 0.0 {
            let mut e = eps;
            for _ in 0..6 {
                let v = self.dense_hessian(inner, e);
                if let Some(ch) = Cholesky::new(v.clone()) {
                    return Some(ch.solve(rhs));
                }
                if let Some(sol) = v.lu().solve(rhs) {
                    if sol.iter().all(|x| x.is_finite()) {
                        return Some(sol);
                    }
                }
                e = (e * 10.0).max(1e-10);
            }
            return None;
        }
        let op = StructuredOperator::new(self, inner, groups, eps)?;
        let mut x = op.woodbury_solve(rhs)?;
        for _ in 0..3 {
            let res = rhs - op.apply(&x);
            if res.norm() <= 1e-14 * rhs.norm() {
                break;
            }
            x += op.woodbury_solve(&res)?;
        }
        Some(x)
    }

    /// Maximizes the dual from `warm` and recovers a feasible primal point.
    pub fn sn_solve(&self, warm: &DVector<f64>, cfg: &SnConfig) -> Result<SnOutcome> {
        self.validate()?;
        cfg.validate()?;
        check_dim(self.dual_dim(), warm.len())?;
        let groups = self.groups();
        let mut y = warm.clone();
        let (mut value, mut grad, mut inner) = self.evaluate(&y);
        if !value.is_finite() {
            return Err(Error::Solver("dual value is not finite at the warm start".into()));
        }
        let mut iterations = 0;
        let mut rounding_steps = 0;
        let mut converged = false;
        loop {
            let gnorm = grad.norm();
            if gnorm <= cfg.tol_grad {
                converged = true;
                break;
            }
            if iterations >= cfg.max_iter {
                break;
            }
            let eps = (cfg.eps_floor + gnorm).min(cfg.eps_cap);
            let mut d = match self.newton_direction(&inner, &groups, &grad, eps) {
                Some(d) if d.iter().all(|x| x.is_finite()) => d,
                _ => grad.clone(),
            };
            let mut slope = grad.dot(&d);
            if !(slope > 0.0) {
                d = grad.clone();
                slope = gnorm * gnorm;
            }
            let scale = 1.0 + value.abs();
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-20 {
                let cand_y = &y + &d * t;
                let cand = self.evaluate(&cand_y);
                if cand.0 >= value + cfg.sigma * t * slope {
                    accepted = Some((cand_y, cand));
                    break;
                }
                // Near the optimum the predicted increase drops below the
                // resolution of the dual value; a full step that shrinks the
                // gradient is then taken anyway.
                if t == 1.0
                    && cfg.sigma * slope <= 1e-13 * scale
                    && cand.0 >= value - 1e-13 * scale
                    && cand.1.norm() < gnorm
                {
                    rounding_steps += 1;
                    accepted = Some((cand_y, cand));
                    break;
                }
                t *= cfg.rho;
            }
            iterations += 1;
            match accepted {
                Some((ny, (nv, ng, ni))) => {
                    if !nv.is_finite() {
                        return Err(Error::Solver("dual value became non-finite".into()));
                    }
                    y = ny;
                    value = nv;
                    grad = ng;
                    inner = ni;
                }
                None => break,
            }
        }
        let primal = self.repair(&inner.primal);
        let primal_value = self.primal_value(&primal);
        Ok(SnOutcome {
            grad_norm: grad.norm(),
            multipliers: y,
            primal,
            primal_value,
            dual_value: value,
            iterations,
            converged,
            rounding_steps,
        })
    }
}

fn add_block(v: &mut DMatrix<f64>, rows: &[usize], coef: f64) {
    if coef == 0.0 {
        return;
    }
    for &i in rows {
        for &j in rows {
            v[(i, j)] += coef;
        }
    }
}

/// `V + eps I = K + (1/c) U U'` with `K` block diagonal (diagonal plus one
/// rank-one term per row group) and `U` the active columns of the constraint
/// matrix. Solved with Sherman-Morrison inside Woodbury.
struct StructuredOperator<'a> {
    diag: DVector<f64>,
    groups: Vec<(&'a [usize], f64)>,
    u: DMatrix<f64>,
    c: f64,
    kinv_u: DMatrix<f64>,
    capacitance: Option<Cholesky<f64, Dyn>>,
}

impl<'a> StructuredOperator<'a> {
    fn new(
        sub: &DualSubproblem,
        inner: &InnerSolution,
        groups: &'a RowGroups,
        eps: f64,
    ) -> Option<Self> {
        let n = sub.dual_dim();
        let diag = DVector::from_iterator(
            n,
            (0..n).map(|i| eps + if inner.slack_pass[i] { 1.0 / sub.c } else { 0.0 }),
        );
        let mut g: Vec<(&[usize], f64)> = Vec::new();
        for (k, rows) in groups.upper.iter().enumerate() {
            if inner.r_slope[k] != 0.0 && !rows.is_empty() {
                g.push((rows.as_slice(), inner.r_slope[k]));
            }
        }
        for (k, rows) in groups.lower.iter().enumerate() {
            if inner.s_slope[k] != 0.0 && !rows.is_empty() {
                g.push((rows.as_slice(), inner.s_slope[k]));
            }
        }
        let u = sub.selected_columns(inner);
        let mut op = StructuredOperator {
            diag,
            groups: g,
            u,
            c: sub.c,
            kinv_u: DMatrix::zeros(0, 0),
            capacitance: None,
        };
        let mut kinv_u = op.u.clone();
        for j in 0..kinv_u.ncols() {
            let col = op.k_solve(&op.u.column(j).into_owned());
            kinv_u.set_column(j, &col);
        }
        let mut cap = op.u.tr_mul(&kinv_u);
        for i in 0..cap.nrows() {
            cap[(i, i)] += op.c;
        }
        op.capacitance = if cap.nrows() > 0 {
            Some(Cholesky::new(cap)?)
        } else {
            None
        };
        op.kinv_u = kinv_u;
        Some(op)
    }

    fn k_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut w = v.component_div(&self.diag);
        for &(rows, kappa) in &self.groups {
            let sum_inv: f64 = rows.iter().map(|&i| 1.0 / self.diag[i]).sum();
            let sum_w: f64 = rows.iter().map(|&i| v[i] / self.diag[i]).sum();
            let f = kappa * sum_w / (1.0 + kappa * sum_inv);
            for &i in rows {
                w[i] -= f / self.diag[i];
            }
        }
        w
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.u * self.u.tr_mul(x) / self.c + self.diag.component_mul(x);
        for &(rows, kappa) in &self.groups {
            let sum: f64 = rows.iter().map(|&i| x[i]).sum();
            for &i in rows {
                out[i] += kappa * sum;
            }
        }
        out
    }

    fn woodbury_solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let base = self.k_solve(rhs);
        let Some(cap) = &self.capacitance else {
            return Some(base);
        };
        let corr = cap.solve(&self.u.tr_mul(&base));
        let x = base - &self.kinv_u * corr;
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}
