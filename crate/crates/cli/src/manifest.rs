//! Experiment manifests: the single source of configuration for every run.
//!
//! A manifest (JSON file or CLI flags) fully determines an experiment;
//! each run writes its resolved manifest next to the outputs so reruns with
//! the same manifest and seed are byte-identical.

use std::path::PathBuf;

use coarsespace::perturbation::PairPolicy;
use coarsespace::two_level::{KappaVariant, TiePolicy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Figure1,
    Table1,
    Sweep,
    Optimize,
    #[serde(alias = "case-classify")]
    Classify,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Figure1 => "figure1",
            ExperimentKind::Table1 => "table1",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::Classify => "classify",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentManifest {
    pub experiment: ExperimentKind,
    /// Mesh width; 1/h must be an integer.
    pub h: f64,
    /// Advection coefficient for single-point experiments.
    pub c: f64,
    /// Damping parameter for single-point experiments.
    pub omega: f64,
    /// Coarse dimension for `optimize`.
    pub m: usize,
    /// Coarse dimensions covered by `table1`.
    pub m_values: Vec<usize>,
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_points: usize,
    /// Power of `T` in the optimizer surrogate.
    pub k: usize,
    /// Number of Rademacher probes; `null` means n.
    pub samples: Option<usize>,
    /// Learning rate of the plain gradient descent.
    pub lr: f64,
    /// Optimizer step budget.
    pub iters: usize,
    /// Probes per step; `null` means the full sample set.
    pub batch: Option<usize>,
    pub seed: u64,
    /// Half-width of the uniform initialization; `null` means `0.2/√n`.
    pub init_scale: Option<f64>,
    /// Redraw probes every step.
    pub resample: bool,
    pub kappa2_variant: KappaVariant,
    pub tie_policy: TiePolicy,
    pub pair_policy: PairPolicy,
    /// Whether `table1` also runs the optimizer per cell.
    pub include_optimized: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Table1,
            h: 0.1,
            c: 0.0,
            omega: 1.0,
            m: 1,
            m_values: vec![1, 5, 10, 15],
            eps_min: -3.0,
            eps_max: 3.0,
            eps_points: 601,
            k: 10,
            samples: None,
            lr: 0.1,
            iters: 2000,
            batch: None,
            seed: 0,
            init_scale: None,
            resample: false,
            kappa2_variant: KappaVariant::default(),
            tie_policy: TiePolicy::default(),
            pair_policy: PairPolicy::default(),
            include_optimized: true,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentManifest {
    pub fn optimizer_config(&self, m: usize, seed: u64) -> coarsespace::OptimizerConfig {
        let mut cfg = coarsespace::OptimizerConfig::new(m);
        cfg.k = self.k;
        cfg.num_samples = self.samples;
        cfg.learning_rate = self.lr;
        cfg.iterations = self.iters;
        cfg.batch_size = self.batch;
        cfg.seed = seed;
        cfg.init_scale = self.init_scale;
        cfg.resample = self.resample;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let m: ExperimentManifest =
            serde_json::from_str(r#"{"experiment":"figure1","h":0.125}"#).unwrap();
        assert_eq!(m.experiment, ExperimentKind::Figure1);
        assert_eq!(m.h, 0.125);
        assert_eq!(m.eps_points, 601);
        assert_eq!(m.iters, 2000);
    }

    #[test]
    fn classify_alias_accepted() {
        let m: ExperimentManifest =
            serde_json::from_str(r#"{"experiment":"case-classify"}"#).unwrap();
        assert_eq!(m.experiment, ExperimentKind::Classify);
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let m = ExperimentManifest::default();
        let json = serde_json::to_string(&m).unwrap();
        let back: ExperimentManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
