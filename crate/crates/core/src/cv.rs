//! K-fold comparison of piecewise affine fits against ordinary least squares.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mm::MMConfig;
use crate::pwa::{
    best_run, default_c, gamma_grid, mse, multistart, ols_fit, Dataset, InitSampler, InitStrategy, LossKind,
    PWAProblem, RegularizerKind,
};

/// Random partition of `0..n` into `folds` groups whose sizes differ by at
/// most one.
pub fn fold_partition<R: rand::Rng>(n: usize, folds: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(Error::Invalid(format!("cannot split {n} samples into {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut out = vec![Vec::with_capacity(n / folds + 1); folds];
    for (k, i) in idx.into_iter().enumerate() {
        out[k % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CvSettings {
    pub folds: usize,
    pub starts: usize,
    pub simulations: usize,
    pub grid: Vec<(usize, usize)>,
    pub mm: MMConfig,
    /// Proximal weight; `None` uses [`default_c`] on each training set.
    pub c: Option<f64>,
    pub init: InitStrategy,
    pub loss: LossKind,
    pub gamma: f64,
    pub regularizer: RegularizerKind,
    pub seed: u64,
}

/// Prediction errors of one simulation: sums over folds of per-fold mean
/// squared test error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationErrors {
    pub fold_pa: Vec<f64>,
    pub fold_ls: Vec<f64>,
    pub e_pa: f64,
    pub e_ls: f64,
    pub ratio: f64,
    pub failed_starts: usize,
    /// Terminal objectives of the successful starts, per fold.
    pub fold_objectives: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvCell {
    pub k1: usize,
    pub k2: usize,
    /// Mean ratio over simulations; `None` when the cell failed.
    pub ratio: Option<f64>,
    pub e_pa: Option<f64>,
    pub e_ls: Option<f64>,
    pub simulations: Vec<SimulationErrors>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvReport {
    pub cells: Vec<CvCell>,
}

impl CvReport {
    pub fn cell(&self, k1: usize, k2: usize) -> Option<&CvCell> {
        self.cells.iter().find(|c| c.k1 == k1 && c.k2 == k2)
    }
}

/// Mixes identifiers into a seed for an independent stream.
fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(seed ^ 0x9E37_79B9_7F4A_7C15, |h, &p| {
        let x = h.wrapping_add(p).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x ^ (x >> 31)
    })
}

fn simulate(
    data: &Dataset,
    k1: usize,
    k2: usize,
    settings: &CvSettings,
    partition: &[Vec<usize>],
    sim: usize,
) -> Result<SimulationErrors> {
    let mut fold_pa = Vec::with_capacity(partition.len());
    let mut fold_ls = Vec::with_capacity(partition.len());
    let mut failed_starts = 0;
    let mut fold_objectives = Vec::with_capacity(partition.len());
    for (f, test_idx) in partition.iter().enumerate() {
        let train_idx: Vec<usize> = (0..data.len()).filter(|i| test_idx.binary_search(i).is_err()).collect();
        let train = data.subset(&train_idx)?;
        let test = data.subset(test_idx)?;

        let prob = PWAProblem {
            dataset: train.clone(),
            k1,
            k2,
            loss: settings.loss,
            gamma: settings.gamma,
            regularizer: settings.regularizer,
            bound: None,
        };
        let cp = prob.assemble()?;
        let sampler = InitSampler::new(&prob, settings.init)?;
        let mm = MMConfig {
            c: settings.c.unwrap_or_else(|| default_c(&train)),
            final_residual: false,
            ..settings.mm.clone()
        };
        let seed = derive_seed(settings.seed, &[sim as u64, f as u64, k1 as u64, k2 as u64]);
        let runs = multistart(&cp, &mm, &sampler, settings.starts, seed);
        failed_starts += runs.iter().filter(|r| r.is_err()).count();
        fold_objectives.push(runs.iter().filter_map(|r| r.as_ref().ok().map(|r| r.objective)).collect());
        let Some(best) = best_run(&runs) else {
            return Err(runs
                .into_iter()
                .find_map(|r| r.err())
                .unwrap_or_else(|| Error::Invalid("no starts configured".into())));
        };
        let theta = &runs[best].as_ref().expect("best run succeeded").theta;
        fold_pa.push(mse(&prob.model(theta)?, &test));

        let ls = ols_fit(&train)?;
        fold_ls.push((ls.predict(&test.x) - &test.y).norm_squared() / test.len() as f64);
    }
    let e_pa: f64 = fold_pa.iter().sum();
    let e_ls: f64 = fold_ls.iter().sum();
    if !(e_ls > 0.0) {
        return Err(Error::Invalid("least-squares prediction error is zero".into()));
    }
    Ok(SimulationErrors {
        ratio: e_pa / e_ls,
        fold_pa,
        fold_ls,
        e_pa,
        e_ls,
        failed_starts,
        fold_objectives,
    })
}

/// Runs every grid cell over `settings.simulations` random fold partitions.
/// All cells share the partitions of a given simulation.
pub fn run_cv(data: &Dataset, settings: &CvSettings) -> Result<CvReport> {
    if settings.simulations == 0 || settings.starts == 0 {
        return Err(Error::Invalid("simulations and starts must be positive".into()));
    }
    let partitions: Vec<Vec<Vec<usize>>> = (0..settings.simulations)
        .map(|sim| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, &[u64::MAX, sim as u64]));
            fold_partition(data.len(), settings.folds, &mut rng)
        })
        .collect::<Result<_>>()?;
    let cells = settings
        .grid
        .par_iter()
        .map(|&(k1, k2)| {
            let sims: Result<Vec<SimulationErrors>> = partitions
                .iter()
                .enumerate()
                .map(|(sim, part)| simulate(data, k1, k2, settings, part, sim))
                .collect();
            match sims {
                Ok(sims) => {
                    let n = sims.len() as f64;
                    CvCell {
                        k1,
                        k2,
                        ratio: Some(sims.iter().map(|s| s.ratio).sum::<f64>() / n),
                        e_pa: Some(sims.iter().map(|s| s.e_pa).sum::<f64>() / n),
                        e_ls: Some(sims.iter().map(|s| s.e_ls).sum::<f64>() / n),
                        simulations: sims,
                        error: None,
                    }
                }
                Err(e) => CvCell {
                    k1,
                    k2,
                    ratio: None,
                    e_pa: None,
                    e_ls: None,
                    simulations: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(CvReport { cells })
}

/// Outcome of choosing `gamma` by cross-validation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaSelection {
    pub grid: Vec<f64>,
    /// Summed fold prediction error per grid value.
    pub errors: Vec<f64>,
    pub gamma: f64,
}

/// Picks `gamma` from a `count`-point log grid below
/// [`PWAProblem::gamma_max`] by `settings.folds`-fold prediction error on one
/// seeded partition. `settings.gamma` is ignored.
pub fn select_gamma(data: &Dataset, k1: usize, k2: usize, settings: &CvSettings, count: usize) -> Result<GammaSelection> {
    if settings.regularizer == RegularizerKind::None {
        return Err(Error::Invalid("gamma selection needs the l1 or scad regularizer".into()));
    }
    if count == 0 || settings.starts == 0 {
        return Err(Error::Invalid("gamma grid and starts must be nonempty".into()));
    }
    let full = PWAProblem {
        dataset: data.clone(),
        k1,
        k2,
        loss: settings.loss,
        gamma: 0.0,
        regularizer: settings.regularizer,
        bound: None,
    };
    let grid = gamma_grid(full.gamma_max()?, count);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, &[u64::MAX - 1]));
    let partition = fold_partition(data.len(), settings.folds, &mut rng)?;
    let errors = grid
        .par_iter()
        .map(|&gamma| {
            let s = CvSettings {
                gamma,
                ..settings.clone()
            };
            simulate(data, k1, k2, &s, &partition, 0).map(|e| e.e_pa)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, e) in errors.iter().enumerate() {
        if *e < errors[best] {
            best = i;
        }
    }
    Ok(GammaSelection {
        gamma: grid[best],
        grid,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_covers_every_index_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = fold_partition(10, 5, &mut rng).unwrap();
        assert!(p.iter().all(|f| f.len() == 2));
        let mut all: Vec<usize> = p.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let p = fold_partition(13, 5, &mut rng).unwrap();
        assert!(p.iter().all(|f| f.len() == 2 || f.len() == 3));
        assert!(fold_partition(3, 5, &mut rng).is_err());
        assert!(fold_partition(10, 1, &mut rng).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[0, 0]), derive_seed(1, &[0, 1]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(3, &[4]), derive_seed(3, &[4]));
    }
}
