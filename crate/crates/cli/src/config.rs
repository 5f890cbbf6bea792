//! Run configuration: a JSON file with every field optional. The resolved
//! config (defaults filled in) is embedded in every report and can be fed
//! back unchanged.

use std::path::{Path, PathBuf};

use diffmax::mm::{MMConfig, Variant};
use diffmax::pwa::{InitStrategy, LossKind, RegularizerKind};
use diffmax::snewton::SnConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaChoice {
    /// Pick gamma by cross-validation over a log grid.
    Cv,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gamma {
    Value(f64),
    Choice(GammaChoice),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub k1: usize,
    pub k2: usize,
    pub loss: LossKind,
    pub regularizer: RegularizerKind,
    pub gamma: Gamma,
    /// Size of the log grid searched when `gamma` is `"cv"`.
    pub gamma_grid: usize,
    /// Optional box `|theta_i| <= bound`.
    pub bound: Option<f64>,
    pub starts: usize,
    pub folds: usize,
    pub simulations: usize,
    /// `(k1, k2)` cells for `cv`.
    pub grid: Vec<(usize, usize)>,
    pub init: InitStrategy,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub histogram_bins: usize,
    pub mm: MmSection,
    pub sn: SnSection,
    pub polish: PolishSection,
    pub synth: SynthSection,
    pub check: CheckSection,
    pub bench: Vec<BenchEntry>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            k1: 2,
            k2: 2,
            loss: LossKind::Squared,
            regularizer: RegularizerKind::None,
            gamma: Gamma::Value(0.0),
            gamma_grid: 10,
            bound: None,
            starts: 20,
            folds: 5,
            simulations: 10,
            grid: (1..=4).flat_map(|k2| (1..=4).map(move |k1| (k1, k2))).collect(),
            init: InitStrategy::Gaussian { scale: 1.0 },
            seed: 0,
            threads: None,
            out: None,
            histogram_bins: 20,
            mm: MmSection::default(),
            sn: SnSection::default(),
            polish: PolishSection::default(),
            synth: SynthSection::default(),
            check: CheckSection::default(),
            bench: Vec::new(),
        }
    }
}

/// Outer-loop settings. `c = null` means the data-scaled default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmSection {
    pub c: Option<f64>,
    pub eps: f64,
    pub variant: Variant,
    pub p_floor: f64,
    pub tol_rel: f64,
    pub tol_step: f64,
    pub max_outer: usize,
    pub combo_cap: usize,
    pub max_rejections: usize,
    pub adaptive_sn_tol: bool,
}

impl Default for MmSection {
    fn default() -> Self {
        let d = MMConfig::default();
        MmSection {
            c: None,
            eps: d.eps,
            variant: d.variant,
            p_floor: d.p_floor,
            tol_rel: d.tol_rel,
            tol_step: d.tol_step,
            max_outer: d.max_outer,
            combo_cap: d.combo_cap,
            max_rejections: d.max_rejections,
            adaptive_sn_tol: d.adaptive_sn_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnSection {
    pub rho: f64,
    pub sigma: f64,
    pub tol_grad: f64,
    pub max_iter: usize,
    pub eps_floor: f64,
    pub eps_cap: f64,
}

impl Default for SnSection {
    fn default() -> Self {
        let d = SnConfig::default();
        SnSection {
            rho: d.rho,
            sigma: d.sigma,
            tol_grad: d.tol_grad,
            max_iter: d.max_iter,
            eps_floor: d.eps_floor,
            eps_cap: d.eps_cap,
        }
    }
}

/// After the multi-start, `fit` continues MM from the best start until the
/// steps vanish, so the saved model is a terminal point rather than a point
/// where the relative change first dropped below `mm.tol_rel`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolishSection {
    pub enabled: bool,
    pub tol_step: f64,
    pub max_outer: usize,
    /// Fixed dual gradient tolerance while polishing.
    pub sn_tol: f64,
}

impl Default for PolishSection {
    fn default() -> Self {
        PolishSection {
            enabled: true,
            tol_step: 1e-9,
            max_outer: 2000,
            sn_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// 1: convex max of four planes; 2: difference of two maxes.
    pub example: u8,
    pub n: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { example: 1, n: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSection {
    /// Model JSON to certify; without it only the univariate fixtures run.
    pub model: Option<PathBuf>,
    pub combo_cap: usize,
    /// Residual below which the model is reported d-stationary.
    pub tol: f64,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            model: None,
            combo_cap: 64,
            tol: 1e-5,
        }
    }
}

/// A bench input: a CSV file or a synthetic example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum BenchEntry {
    File { path: PathBuf },
    Synthetic { example: u8, n: usize },
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.k1 == 0 {
            return bad("k1 must be at least 1");
        }
        if self.starts == 0 {
            return bad("starts must be positive");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.simulations == 0 {
            return bad("simulations must be positive");
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be positive");
        }
        if self.grid.iter().any(|&(k1, _)| k1 == 0) {
            return bad("every grid cell needs k1 >= 1");
        }
        match self.gamma {
            Gamma::Value(g) if !(g >= 0.0) => return bad("gamma must be nonnegative"),
            Gamma::Choice(GammaChoice::Cv) if self.regularizer == RegularizerKind::None => {
                return bad("gamma \"cv\" needs regularizer l1 or scad")
            }
            Gamma::Choice(GammaChoice::Cv) if self.gamma_grid == 0 => return bad("gamma_grid must be positive"),
            _ => {}
        }
        if let LossKind::Quantile { tau } = self.loss {
            if !(tau > 0.0 && tau < 1.0) {
                return bad("quantile tau must lie in (0,1)");
            }
        }
        if let Some(b) = self.bound {
            if !(b > 0.0) {
                return bad("bound must be positive");
            }
        }
        if ![1, 2].contains(&self.synth.example) || self.bench.iter().any(|b| matches!(b, BenchEntry::Synthetic { example, .. } if ![1, 2].contains(example))) {
            return bad("synthetic example must be 1 or 2");
        }
        if self.polish.enabled && !(self.polish.tol_step > 0.0 && self.polish.sn_tol > 0.0 && self.polish.max_outer > 0) {
            return bad("polish needs positive tol_step, sn_tol and max_outer");
        }
        if self.mm.c.is_some_and(|c| !(c > 0.0)) {
            return bad("mm.c must be positive");
        }
        self.mm_config(1.0).validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn sn_config(&self) -> SnConfig {
        let s = &self.sn;
        SnConfig {
            rho: s.rho,
            sigma: s.sigma,
            tol_grad: s.tol_grad,
            max_iter: s.max_iter,
            eps_floor: s.eps_floor,
            eps_cap: s.eps_cap,
        }
    }

    /// Solver settings with the proximal weight `c` already resolved.
    pub fn mm_config(&self, c: f64) -> MMConfig {
        let m = &self.mm;
        MMConfig {
            c,
            eps: m.eps,
            variant: m.variant,
            p_floor: m.p_floor,
            tol_rel: m.tol_rel,
            tol_step: m.tol_step,
            max_outer: m.max_outer,
            combo_cap: m.combo_cap,
            max_rejections: m.max_rejections,
            seed: self.seed,
            sn: self.sn_config(),
            adaptive_sn_tol: m.adaptive_sn_tol,
            final_residual: false,
        }
    }

    /// Settings for the polishing run from the best start.
    pub fn polish_config(&self, c: f64) -> MMConfig {
        let base = self.mm_config(c);
        MMConfig {
            tol_rel: 0.0,
            tol_step: self.polish.tol_step,
            max_outer: self.polish.max_outer,
            adaptive_sn_tol: false,
            sn: SnConfig {
                tol_grad: self.polish.sn_tol,
                ..base.sn
            },
            ..base
        }
    }

    pub fn dataset_path(&self) -> Result<&Path, CliError> {
        self.dataset
            .as_deref()
            .ok_or_else(|| CliError::Config("this command needs \"dataset\"".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.grid.len(), 16);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"k3": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"mm": {"tolerance": 1}}"#).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"k1": 4, "k2": 0, "gamma": "cv", "regularizer": "scad",
                "loss": {"kind": "quantile", "tau": 0.3},
                "bench": [{"example": 1, "n": 50}, {"path": "a.csv"}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.gamma, Gamma::Choice(GammaChoice::Cv));
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn validation_catches_bad_values() {
        for text in [
            r#"{"k1": 0}"#,
            r#"{"gamma": "cv"}"#,
            r#"{"gamma": -1}"#,
            r#"{"folds": 1}"#,
            r#"{"mm": {"c": 0}}"#,
            r#"{"mm": {"p_floor": 2}}"#,
            r#"{"loss": {"kind": "quantile", "tau": 1.5}}"#,
        ] {
            let cfg: RunConfig = serde_json::from_str(text).unwrap();
            assert!(cfg.validate().is_err(), "{text}");
        }
    }
}
