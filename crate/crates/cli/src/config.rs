//! Run configuration read from `--config`.

use dyson_circ::covariance::ModelDocument;
use dyson_circ::density::GridSpec;
use dyson_circ::ensemble::Field;
use dyson_circ::DysonOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelDocument,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub brown: BrownConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn override_seed(&mut self, seed: u64) {
        self.simulate.seed = seed;
        self.check.seed = seed;
    }
}

/// Overrides of the Dyson solver defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

impl SolverConfig {
    pub fn options(&self) -> DysonOptions {
        let mut opts = DysonOptions::default();
        if let Some(v) = self.tol {
            opts.tol = v;
        }
        if let Some(v) = self.accept_tol {
            opts.accept_tol = v;
        }
        if let Some(v) = self.eta_min {
            opts.eta_min = v;
        }
        if let Some(v) = self.margin {
            opts.margin = v;
        }
        opts
    }
}

fn default_grid() -> GridSpec {
    GridSpec::uniform(64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self { grid: default_grid() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrownConfig {
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
}

impl Default for BrownConfig {
    fn default() -> Self {
        Self { grid: default_grid() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub n: usize,
    pub field: Field,
    pub seed: u64,
    pub samples: usize,
    /// Grid size of the predicted profile used by the radial comparison.
    pub profile_points: usize,
    /// Bulk depth `τ*` for the outlier and delocalization checks.
    pub tau_star: f64,
    /// Spectral parameter `[re, im]` of the resolvent and singular-value checks.
    pub zeta: [f64; 2],
    pub resolvent_eta: f64,
    pub singular_eta: f64,
    pub probes: usize,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub girko: Option<GirkoConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n: 512,
            field: Field::Complex,
            seed: 0,
            samples: 1,
            profile_points: 32,
            tau_star: 0.1,
            zeta: [0.3, 0.0],
            resolvent_eta: 1.0,
            singular_eta: 0.05,
            probes: 16,
            epsilon: 0.25,
            girko: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirkoConfig {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default = "default_girko_points")]
    pub points: usize,
}

fn default_girko_points() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    /// Values of τ; those within the edge margin of ρ or beyond are
    /// reported as precondition-rejected.
    pub taus: Vec<f64>,
    pub scales: Vec<f64>,
    /// Random pairs for the operator identities.
    pub pairs: usize,
    pub seed: u64,
    pub laplacian_h: f64,
    pub laplacian_points: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            taus: vec![0.2, 0.5, 0.8],
            scales: vec![0.25, 4.0],
            pairs: 10,
            seed: 0,
            laplacian_h: 0.005,
            laplacian_points: 3,
        }
    }
}
