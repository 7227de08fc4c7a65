//! Experiment configuration (versioned JSON, unknown keys rejected)
//! and the run manifest written next to every experiment's artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use phaseret::synth::SceneSpec;
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Intersection dimensions of the torus tangent fiber with padded
    /// support subspaces, over smoothness levels and paddings.
    Table1,
    /// Non-negativity cone dimensions over smoothness levels.
    Table2,
    /// Principal-angle spectra for smoothed-disc images.
    Fig4Spectra,
    /// Principal-angle spectra for radial-power images.
    #[serde(rename = "fig4_1_spectra")]
    Fig41Spectra,
    /// Multi-restart solver runs against one scene.
    Restarts,
    /// Microlocal pair: equal data, distant images.
    NonuniqueMicrolocal,
    /// Reducible-spectrum pairs over several seeds.
    NonuniqueReducible,
    /// Sharp cut-off mask protocol vs unmasked baseline.
    SharpMask,
    /// External-reference holography protocol vs unmasked baseline.
    Holography,
    /// Eigenvalue moduli of the solver's linear block model.
    LinearModel,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub experiment: ExperimentKind,
    /// Base seed; run i uses seed + i.
    #[serde(default)]
    pub seed: u64,
    /// Scene override; each experiment supplies its own default.
    #[serde(default)]
    pub scene: Option<SceneSpec>,
    /// Support padding p (experiments with a single padding).
    #[serde(default)]
    pub pad: Option<usize>,
    /// Paddings to sweep (table/figure experiments).
    #[serde(default)]
    pub pads: Option<Vec<usize>>,
    /// Smoothness levels to sweep.
    #[serde(default)]
    pub smoothness_levels: Option<Vec<u32>>,
    /// Random samples per cell.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Support threshold, relative to max |f|.
    #[serde(default)]
    pub support_eps_rel: Option<f64>,
    /// σ-tolerance for intersection-dimension counting.
    #[serde(default)]
    pub intersection_tol: Option<f64>,
    /// Solver restarts.
    #[serde(default)]
    pub restarts: Option<usize>,
    /// Solver iteration cap.
    #[serde(default)]
    pub max_iters: Option<usize>,
    /// Trace record stride.
    #[serde(default)]
    pub record_every: Option<usize>,
    /// Stagnation window length, in records.
    #[serde(default)]
    pub stagnation_window: Option<usize>,
    /// Maximum relative flatness of residual/step over the window for
    /// a run to be declared stagnated.
    #[serde(default)]
    pub stagnation_rel_tol: Option<f64>,
    /// Output directory (CLI --out overrides).
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            experiment,
            seed: 0,
            scene: None,
            pad: None,
            pads: None,
            smoothness_levels: None,
            samples: None,
            support_eps_rel: None,
            intersection_tol: None,
            restarts: None,
            max_iters: None,
            record_every: None,
            stagnation_window: None,
            stagnation_rel_tol: None,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| format!("bad experiment config: {e}"))?;
        if config.version != CONFIG_VERSION {
            return Err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                config.version
            ));
        }
        Ok(config)
    }
}

/// Record of everything an experiment produced, written as
/// `manifest.json` in the output directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub build_version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub statuses: Vec<String>,
    pub wall_ms: u128,
    pub summary: BTreeMap<String, serde_json::Value>,
    /// Paths of emitted files, relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub passed: bool,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        RunManifest {
            build_version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            seeds: Vec::new(),
            statuses: Vec::new(),
            wall_ms: 0,
            summary: BTreeMap::new(),
            outputs: Vec::new(),
            passed: false,
        }
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(
            key.to_string(),
            serde_json::to_value(value).expect("summary value serializes"),
        );
    }

    /// Writes the manifest, first verifying every referenced output
    /// exists on disk.
    pub fn write(&self, dir: &Path) -> phaseret::Result<PathBuf> {
        for rel in &self.outputs {
            let p = dir.join(rel);
            if !p.exists() {
                return Err(phaseret::Error::InvalidArgument(format!(
                    "manifest references missing output {}",
                    p.display()
                )));
            }
        }
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
