//! Run configuration. Each setting is taken from the command line if
//! given, else from the config file, else from the built-in default.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use lambda_profile::classify::ClassifierOptions;
use lambda_profile::{Error, IntegrationControls, Params};
use serde::{Deserialize, Serialize};

/// Settings shared by every command.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Common {
    /// Ambient dimension n (the hypersurface lives in ℝ^{n+1}).
    #[arg(long)]
    pub n: Option<u32>,
    /// Constant λ of the integrated system.
    #[arg(long, alias = "lambda-tilde", allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Relative step tolerance [default: 1e-10].
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Absolute step tolerance [default: 1e-12].
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Axis cutoff [default: 1e-6].
    #[arg(long)]
    pub r_min: Option<f64>,
    /// Arclength budget [default: 50].
    #[arg(long)]
    pub s_max: Option<f64>,
    /// Event root tolerance in s [default: 1e-12].
    #[arg(long)]
    pub event_tol: Option<f64>,
    /// Largest step in s [default: 0.05].
    #[arg(long)]
    pub h_max: Option<f64>,
    /// Axis layer of the classifier [default: 1e-4].
    #[arg(long)]
    pub axis_layer: Option<f64>,
    /// Output directory [default: .].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    /// Fills unset fields from `file`.
    pub fn or(self, file: &Common) -> Common {
        Common {
            n: self.n.or(file.n),
            lambda: self.lambda.or(file.lambda),
            rel_tol: self.rel_tol.or(file.rel_tol),
            abs_tol: self.abs_tol.or(file.abs_tol),
            r_min: self.r_min.or(file.r_min),
            s_max: self.s_max.or(file.s_max),
            event_tol: self.event_tol.or(file.event_tol),
            h_max: self.h_max.or(file.h_max),
            axis_layer: self.axis_layer.or(file.axis_layer),
            out: self.out.or_else(|| file.out.clone()),
        }
    }
}

/// Config file layout:
///
/// ```toml
/// jobs = 4
/// [run]
/// n = 2
/// lambda = -2.2360679
/// rel-tol = 1e-11
/// [shoot]
/// tol-delta = 1e-6
/// ```
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub jobs: Option<usize>,
    #[serde(default)]
    pub run: Common,
    #[serde(default)]
    pub shoot: ShootFile,
    #[serde(default)]
    pub mesh: MeshFile,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ShootFile {
    pub tol_delta: Option<f64>,
    pub grid_points: Option<usize>,
    pub r_close: Option<f64>,
    pub meridians: Option<usize>,
    pub profile_points: Option<usize>,
    pub mesh_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MeshFile {
    pub meridians: Option<usize>,
    pub profile_points: Option<usize>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| Error::InvalidParameter(format!("config {}: {e}", path.display())).into())
}

/// Validated settings for one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub params: Params,
    pub controls: IntegrationControls,
    pub classifier: ClassifierOptions,
    pub out: PathBuf,
}

impl RunConfig {
    /// Resolves against `base` for unset integration settings.
    pub fn resolve(common: &Common, base: IntegrationControls) -> Result<Self> {
        let n = common.n.ok_or_else(|| Error::InvalidParameter("--n is required".into()))?;
        let lambda = common.lambda.ok_or_else(|| Error::InvalidParameter("--lambda is required".into()))?;
        let params = Params::new(n, lambda)?;
        let d = base;
        let controls = IntegrationControls {
            rel_tol: common.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: common.abs_tol.unwrap_or(d.abs_tol),
            r_min: common.r_min.unwrap_or(d.r_min),
            s_max: common.s_max.unwrap_or(d.s_max),
            event_tol: common.event_tol.unwrap_or(d.event_tol),
            h_max: common.h_max.unwrap_or(d.h_max),
            ..d
        };
        controls.validate()?;
        let classifier = ClassifierOptions {
            axis_layer: common.axis_layer.unwrap_or(ClassifierOptions::default().axis_layer),
            ..Default::default()
        };
        if !(classifier.axis_layer >= 0.0) {
            return Err(Error::InvalidParameter(format!("axis-layer must be non-negative, got {}", classifier.axis_layer)).into());
        }
        Ok(Self { params, controls, classifier, out: common.out.clone().unwrap_or_else(|| PathBuf::from(".")) })
    }
}
