//! Continuous piecewise affine regression:
//! `psi(x) = max_i (a_i' x + alpha_i) - max_j (b_j' x + beta_j)`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::funcs::{
    monotone_split, DcRegularizer, DiffMaxFunction, MaxFunction, SmoothConvexAtom, UnivariateConvexLoss,
};
use crate::mm::{run_with_rng, MMConfig, SolveReport};
use crate::problem::{CompositeProblem, CompositeTerm, Domain};

/// A difference of two max-affine functions on `R^d`. With `k2 = 0` the
/// second max is identically zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PWAModel {
    pub a: DMatrix<f64>,
    pub alpha: DVector<f64>,
    pub b: DMatrix<f64>,
    pub beta: DVector<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    k1: usize,
    k2: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    beta: Vec<f64>,
}

fn max_affine(m: &DMatrix<f64>, off: &DVector<f64>, x: &[f64]) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum::<f64>() + off[i])
        .fold(f64::NEG_INFINITY, f64::max)
}

impl PWAModel {
    pub fn new(a: DMatrix<f64>, alpha: DVector<f64>, b: DMatrix<f64>, beta: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 {
            return Err(Error::Invalid("the first max needs at least one affine piece".into()));
        }
        check_dim(a.nrows(), alpha.len())?;
        check_dim(b.nrows(), beta.len())?;
        if b.nrows() > 0 {
            check_dim(a.ncols(), b.ncols())?;
        }
        let b = if b.nrows() == 0 { DMatrix::zeros(0, a.ncols()) } else { b };
        Ok(PWAModel { a, alpha, b, beta })
    }

    pub fn k1(&self) -> usize {
        self.a.nrows()
    }

    pub fn k2(&self) -> usize {
        self.b.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let g = max_affine(&self.a, &self.alpha, x);
        let h = if self.k2() == 0 { 0.0 } else { max_affine(&self.b, &self.beta, x) };
        g - h
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.nrows(),
            (0..x.nrows()).map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.eval(&row)
            }),
        )
    }

    /// `[a_1, alpha_1, ..., a_k1, alpha_k1, b_1, beta_1, ...]`.
    pub fn flatten(&self) -> DVector<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity((self.k1() + self.k2()) * (d + 1));
        for (m, off) in [(&self.a, &self.alpha), (&self.b, &self.beta)] {
            for i in 0..m.nrows() {
                out.extend(m.row(i).iter());
                out.push(off[i]);
            }
        }
        DVector::from_vec(out)
    }

    pub fn unflatten(theta: &DVector<f64>, k1: usize, k2: usize, d: usize) -> Result<Self> {
        check_dim((k1 + k2) * (d + 1), theta.len())?;
        let block = |start: usize, k: usize| {
            let m = DMatrix::from_fn(k, d, |i, j| theta[start + i * (d + 1) + j]);
            let off = DVector::from_fn(k, |i, _| theta[start + i * (d + 1) + d]);
            (m, off)
        };
        let (a, alpha) = block(0, k1);
        let (b, beta) = block(k1 * (d + 1), k2);
        PWAModel::new(a, alpha, b, beta)
    }

    pub fn to_json(&self) -> Result<String> {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        let j = ModelJson {
            k1: self.k1(),
            k2: self.k2(),
            a: rows(&self.a),
            alpha: self.alpha.iter().copied().collect(),
            b: rows(&self.b),
            beta: self.beta.iter().copied().collect(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: ModelJson = serde_json::from_str(text)?;
        if j.a.len() != j.k1 || j.b.len() != j.k2 {
            return Err(Error::Invalid("model row counts disagree with k1/k2".into()));
        }
        let d = j.a.first().map_or(0, |r| r.len());
        let to_mat = |rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
            for r in rows {
                check_dim(d, r.len())?;
            }
            Ok(DMatrix::from_fn(rows.len(), d, |i, k| rows[i][k]))
        };
        PWAModel::new(
            to_mat(&j.a)?,
            DVector::from_vec(j.alpha),
            to_mat(&j.b)?,
            DVector::from_vec(j.beta),
        )
    }

    /// The model with the affine function `w' x + kappa` added to every atom
    /// of both maxima; represents the same function.
    pub fn shifted(&self, w: &[f64], kappa: f64) -> Self {
        let mut out = self.clone();
        for m in [&mut out.a, &mut out.b] {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    m[(i, j)] += w[j];
                }
            }
        }
        out.alpha.add_scalar_mut(kappa);
        out.beta.add_scalar_mut(kappa);
        if self.k2() == 0 {
            // An empty second max is zero; write the shift as one explicit atom.
            out.b = DMatrix::from_row_slice(1, self.dim(), w);
            out.beta = DVector::from_element(1, kappa);
        }
        out
    }
}

/// Samples `(x_s, y_s)` stored row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        check_dim(x.nrows(), y.len())?;
        if y.is_empty() {
            return Err(Error::Invalid("a dataset needs at least one sample".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("dataset contains non-finite values".into()));
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Dataset::new(self.x.select_rows(idx), self.y.select_rows(idx))
    }

    /// Reads feature columns followed by the response. A first row that does
    /// not parse as numbers is taken as a header.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(r) => rows.push(r),
                Err(_) if i == 0 => continue,
                Err(e) => {
                    return Err(Error::Invalid(format!("row {}: {e}", i + 1)));
                }
            }
        }
        let width = rows.first().map_or(0, |r| r.len());
        if width < 2 {
            return Err(Error::Invalid("need at least one feature column and a response".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::Invalid(format!("row {} has {} columns, expected {width}", i + 1, r.len())));
            }
        }
        let n = rows.len();
        let x = DMatrix::from_fn(n, width - 1, |i, j| rows[i][j]);
        let y = DVector::from_fn(n, |i, _| rows[i][width - 1]);
        Dataset::new(x, y)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Dataset::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format!("{v:e}")).collect();
            rec.push(format!("{:e}", self.y[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LossKind {
    Squared,
    Quantile { tau: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    None,
    L1,
    Scad,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PWAProblem {
    pub dataset: Dataset,
    pub k1: usize,
    pub k2: usize,
    pub loss: LossKind,
    pub gamma: f64,
    pub regularizer: RegularizerKind,
    /// Optional bound `|theta_i| <= bound`.
    pub bound: Option<f64>,
}

impl PWAProblem {
    /// Least squares without regularization.
    pub fn least_squares(dataset: Dataset, k1: usize, k2: usize) -> Self {
        PWAProblem {
            dataset,
            k1,
            k2,
            loss: LossKind::Squared,
            gamma: 0.0,
            regularizer: RegularizerKind::None,
            bound: None,
        }
    }

    pub fn dim(&self) -> usize {
        (self.k1 + self.k2) * (self.dataset.dim() + 1)
    }

    /// The sample-average composite problem in `theta`.
    pub fn assemble(&self) -> Result<CompositeProblem> {
        if self.k1 == 0 {
            return Err(Error::Invalid("k1 must be at least 1".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Invalid("gamma must be nonnegative".into()));
        }
        let d = self.dataset.dim();
        let m = self.dim();
        let atom = |slot: usize, x: &[f64]| {
            let mut w = DVector::zeros(m);
            for j in 0..d {
                w[slot * (d + 1) + j] = x[j];
            }
            w[slot * (d + 1) + d] = 1.0;
            SmoothConvexAtom::affine(w, 0.0)
        };
        let mut terms = Vec::with_capacity(self.dataset.len());
        for s in 0..self.dataset.len() {
            let x = self.dataset.row(s);
            let y = self.dataset.y[s];
            let g = MaxFunction::new((0..self.k1).map(|i| atom(i, &x)).collect())?;
            let h = if self.k2 == 0 {
                MaxFunction::zero(m)
            } else {
                MaxFunction::new((0..self.k2).map(|i| atom(self.k1 + i, &x)).collect())?
            };
            let loss = self.sample_loss(y);
            terms.push(CompositeTerm {
                split: monotone_split(&loss)?,
                psi: DiffMaxFunction::new(g, h)?,
            });
        }
        let reg = match (self.regularizer, self.gamma > 0.0) {
            (_, false) | (RegularizerKind::None, _) => DcRegularizer::none(m),
            (RegularizerKind::L1, true) => DcRegularizer::l1(m, self.gamma)?,
            (RegularizerKind::Scad, true) => DcRegularizer::scad(m, self.gamma)?,
        };
        let domain = match self.bound {
            None => Domain::Free,
            Some(b) => Domain::boxed(DVector::from_element(m, -b), DVector::from_element(m, b))?,
        };
        CompositeProblem::new(terms, reg, domain)
    }

    pub fn model(&self, theta: &DVector<f64>) -> Result<PWAModel> {
        PWAModel::unflatten(theta, self.k1, self.k2, self.dataset.dim())
    }

    fn sample_loss(&self, y: f64) -> UnivariateConvexLoss {
        match self.loss {
            LossKind::Squared => UnivariateConvexLoss::Squared { y },
            LossKind::Quantile { tau } => UnivariateConvexLoss::Quantile { y, tau },
        }
    }

    /// Objective as the paper displays it: squared residuals carry no `1/2`.
    /// Equal to the internal objective for the quantile loss.
    pub fn paper_objective(&self, problem: &CompositeProblem, theta: &DVector<f64>) -> Result<f64> {
        let internal = problem.objective(theta)?;
        Ok(match self.loss {
            LossKind::Squared => {
                let reg = problem.regularizer().value(theta);
                2.0 * (internal - reg) + reg
            }
            LossKind::Quantile { .. } => internal,
        })
    }

    /// Smallest `gamma` for which `theta = 0` is stationary under a pure l1
    /// penalty on the affine model: `|| (1/N) sum phi_s'(0) [x_s; 1] ||_inf`.
    pub fn gamma_max(&self) -> Result<f64> {
        let d = self.dataset.dim();
        let n = self.dataset.len() as f64;
        let mut grad = DVector::zeros(d + 1);
        for s in 0..self.dataset.len() {
            let slope = monotone_split(&self.sample_loss(self.dataset.y[s]))?.dir_derivative(0.0, 1.0);
            for j in 0..d {
                grad[j] += slope * self.dataset.x[(s, j)] / n;
            }
            grad[d] += slope / n;
        }
        Ok(grad.amax())
    }
}

/// `count` values from `max` down to `1e-3 max`, evenly spaced in log scale.
pub fn gamma_grid(max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![max],
        _ => (0..count)
            .map(|i| max * 10f64.powf(-3.0 * i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Mean squared prediction error of `model` on `data`.
pub fn mse(model: &PWAModel, data: &Dataset) -> f64 {
    let pred = model.predict(&data.x);
    (pred - &data.y).norm_squared() / data.len() as f64
}

/// Default proximal weight `1e-2 (1 + mean y^2) / N`.
///
/// The loss block carries weight `1/N`, so the proximal pull is scaled the
/// same way; without the `1/N` the steps shrink as the sample grows.
pub fn default_c(data: &Dataset) -> f64 {
    let n = data.len() as f64;
    1e-2 * (1.0 + data.y.norm_squared() / n) / n
}

/// Affine least-squares fit.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub intercept: f64,
    /// A ridge term was added because `[X, 1]` is rank deficient.
    pub ridge: bool,
}

impl OlsFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        (x * &self.coef).add_scalar(self.intercept)
    }

    pub fn as_model(&self) -> PWAModel {
        PWAModel {
            a: DMatrix::from_row_slice(1, self.coef.len(), self.coef.as_slice()),
            alpha: DVector::from_element(1, self.intercept),
            b: DMatrix::zeros(0, self.coef.len()),
            beta: DVector::zeros(0),
        }
    }
}

const RIDGE: f64 = 1e-8;

/// Solves the normal equations of `y ~ [X, 1]`, adding a small ridge when
/// the design is rank deficient.
pub fn ols_fit(data: &Dataset) -> Result<OlsFit> {
    let n = data.len();
    let d = data.dim();
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { data.x[(i, j)] } else { 1.0 });
    let gram = design.tr_mul(&design);
    let rhs = design.tr_mul(&data.y);
    let sv = gram.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let deficient = n < d + 1 || smin <= 1e-12 * smax.max(1.0);
    let sol = if deficient {
        let ridged = &gram + DMatrix::identity(d + 1, d + 1) * (RIDGE * smax.max(1.0));
        ridged.cholesky().map(|c| c.solve(&rhs))
    } else {
        gram.clone().cholesky().map(|c| c.solve(&rhs))
    }
    .ok_or_else(|| Error::Invalid("normal equations could not be factored".into()))?;
    Ok(OlsFit {
        coef: sol.rows(0, d).into_owned(),
        intercept: sol[d],
        ridge: deficient,
    })
}

fn uniform_x(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    DMatrix::from_fn(n, d, |_, _| u.sample(rng))
}

fn with_uniform_noise(model: &PWAModel, n: usize, seed: u64) -> Result<(Dataset, PWAModel)> {
    if n == 0 {
        return Err(Error::Invalid("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform_x(&mut rng, n, model.dim());
    let noise = Uniform::new_inclusive(-0.5, 0.5).expect("valid range");
    let clean = model.predict(&x);
    let y = clean.map(|v| v + noise.sample(&mut rng));
    Ok((Dataset::new(x, y)?, model.clone()))
}

/// `max(x1+x2, x1-x2, -2x1+x2, -2x1-x2)`.
pub fn example1_model() -> PWAModel {
    PWAModel {
        a: DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -2.0, 1.0, -2.0, -1.0]),
        alpha: DVector::zeros(4),
        b: DMatrix::zeros(0, 2),
        beta: DVector::zeros(0),
    }
}

/// `max(x1-2x2, -2x1+x2+1) - max(3x1-2x2, 2x1+5x2)`.
pub fn example2_model() -> PWAModel {
    PWAModel {
        a: DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0]),
        alpha: DVector::from_row_slice(&[0.0, 1.0]),
        b: DMatrix::from_row_slice(2, 2, &[3.0, -2.0, 2.0, 5.0]),
        beta: DVector::zeros(2),
    }
}

/// Convex max-affine truth on `[-1,1]^2` with uniform noise on `[-0.5,0.5]`.
pub fn synth_example1(n: usize, seed: u64) -> Result<(Dataset, PWAModel)> {
    with_uniform_noise(&example1_model(), n, seed)
}

/// Nonconvex difference-of-max truth on `[-1,1]^2` with uniform noise.
pub fn synth_example2(n: usize, seed: u64) -> Result<(Dataset, PWAModel)> {
    with_uniform_noise(&example2_model(), n, seed)
}

fn first_primes(k: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(k);
    let mut p = 2u64;
    while out.len() < k {
        if (2..p).take_while(|q| q * q <= p).all(|q| p % q != 0) {
            out.push(p);
        }
        p += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Evaluation points on `[-1,1]^d`: a 101-point-per-axis grid for `d <= 2`,
/// otherwise the first 1000 Halton points.
pub fn comparison_points(d: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..101).map(|i| -1.0 + 2.0 * i as f64 / 100.0).collect();
    match d {
        0 => vec![Vec::new()],
        1 => axis.iter().map(|&t| vec![t]).collect(),
        2 => axis
            .iter()
            .flat_map(|&a| axis.iter().map(move |&b| vec![a, b]))
            .collect(),
        _ => {
            let primes = first_primes(d);
            (1..=1000u64)
                .map(|i| primes.iter().map(|&p| 2.0 * radical_inverse(i, p) - 1.0).collect())
                .collect()
        }
    }
}

/// Root-mean-square difference of two models over [`comparison_points`].
pub fn model_rmse(a: &PWAModel, b: &PWAModel) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let pts = comparison_points(a.dim());
    let ss: f64 = pts.iter().map(|x| (a.eval(x) - b.eval(x)).powi(2)).sum();
    Ok((ss / pts.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitStrategy {
    /// i.i.d. normal entries times `scale`.
    Gaussian { scale: f64 },
    /// Normal noise times `scale`, with the first atom of `g` moved to the
    /// least-squares fit.
    OlsPerturb { scale: f64 },
}

/// Draws starting points for multi-start runs.
#[derive(Clone, Debug)]
pub struct InitSampler {
    k1: usize,
    k2: usize,
    d: usize,
    strategy: InitStrategy,
    ols: Option<OlsFit>,
    bound: Option<f64>,
}

impl InitSampler {
    pub fn new(problem: &PWAProblem, strategy: InitStrategy) -> Result<Self> {
        let ols = match strategy {
            InitStrategy::OlsPerturb { .. } => Some(ols_fit(&problem.dataset)?),
            InitStrategy::Gaussian { .. } => None,
        };
        Ok(InitSampler {
            k1: problem.k1,
            k2: problem.k2,
            d: problem.dataset.dim(),
            strategy,
            ols,
            bound: problem.bound,
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let m = (self.k1 + self.k2) * (self.d + 1);
        let scale = match self.strategy {
            InitStrategy::Gaussian { scale } | InitStrategy::OlsPerturb { scale } => scale,
        };
        let mut theta = DVector::from_fn(m, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        });
        if let Some(ols) = &self.ols {
            for j in 0..self.d {
                theta[j] += ols.coef[j];
            }
            theta[self.d] += ols.intercept;
        }
        if let Some(b) = self.bound {
            theta.apply(|t| *t = t.clamp(-b, b));
        }
        theta
    }
}

/// Generators for start `index`: one stream for the initial point, one for
/// the random pair selections.
pub fn start_rngs(seed: u64, index: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut init = ChaCha8Rng::seed_from_u64(seed);
    init.set_stream(2 * index as u64);
    let mut sel = ChaCha8Rng::seed_from_u64(seed);
    sel.set_stream(2 * index as u64 + 1);
    (init, sel)
}

/// Independent runs from `starts` sampled initial points, in start order.
/// Execution order does not affect the results.
pub fn multistart(
    problem: &CompositeProblem,
    config: &MMConfig,
    sampler: &InitSampler,
    starts: usize,
    seed: u64,
) -> Vec<Result<SolveReport>> {
    (0..starts)
        .into_par_iter()
        .map(|i| {
            let (mut init, sel) = start_rngs(seed, i);
            let theta0 = sampler.sample(&mut init);
            run_with_rng(problem, config, &theta0, sel)
        })
        .collect()
}

/// Index of the successful run with the smallest objective.
pub fn best_run(runs: &[Result<SolveReport>]) -> Option<usize> {
    runs.iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().ok().map(|r| (i, r.objective)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Fraction of values within `tol * max(1, |best|)` of the smallest one.
pub fn share_near_best(values: &[f64], tol: f64) -> f64 {
    let Some(best) = values.iter().copied().min_by(f64::total_cmp) else {
        return 0.0;
    };
    let near = values.iter().filter(|&&v| v - best <= tol * best.abs().max(1.0)).count();
    near as f64 / values.len() as f64
}

/// Number of clusters of sorted values separated by gaps larger than `tol`.
pub fn distinct_values(values: &[f64], tol: f64) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return 0;
    }
    1 + v.windows(2).filter(|w| w[1] - w[0] > tol).count()
}
