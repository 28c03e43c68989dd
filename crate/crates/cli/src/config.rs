use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use sphere_mv::kernels::KernelConfig;
use sphere_mv::solver::SolverConfig;

use crate::CliError;

/// Every tunable of a run. Loaded from `--config`, then overridden by flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Kernel description (JSON file with n, family and parameters)
    #[arg(long = "kernel", value_name = "FILE", global = true)]
    #[serde(skip)]
    pub kernel_file: Option<PathBuf>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,

    /// Ambient dimension (sphere S^{n-1})
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Kernel family when no kernel file is given: transformer, onsager, opinion, heat
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,

    /// Interaction strength (use `inf` for noiseless particle dynamics)
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_min: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_max: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_steps: Option<usize>,
    /// Space the gamma grid geometrically instead of linearly
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_grid: Option<bool>,
    /// Trace the branch from gamma-max down to gamma-min
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse: Option<bool>,

    /// Spectral truncation degree
    #[arg(long = "K", global = true)]
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    /// Quadrature order
    #[arg(long = "M", global = true)]
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    /// Relative size of the seed perturbation
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_amplitude: Option<f64>,

    /// Degree of the seed perturbation or traced branch (0 seeds the uniform state)
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,
    /// Orientation of the seed perturbation, +1 or -1
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<f64>,

    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Particle force: pairwise, truncated or auto
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<String>,
    /// Kernel truncation degree of the truncated force
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    /// Initial particle law: uniform or pole
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    /// Moment axis: principal (re-estimated) or pole (fixed last coordinate)
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<String>,
    /// Harmonic degrees whose moments are recorded
    #[arg(long, global = true, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<Vec<usize>>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    /// Write final particle positions as little-endian f64 rows
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,

    /// Output format: csv or json
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// Output file (stdout when absent)
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl RunConfig {
    /// `self` with every field set in `top` replaced.
    pub fn merged(mut self, top: RunConfig) -> Self {
        overlay!(self, top; kernel_file, kernel, n, family, beta, p, epsilon, gamma, gamma_min, gamma_max,
            gamma_steps, log_grid, reverse, k_max, order, damping, tol, max_iters, seed_amplitude, mode, sign,
            seed, particles, dt, steps, force, degree, init, axis, moments, burn_in, record_every, snapshot,
            format, out);
        self
    }

    /// Folds the kernel file and the family shortcuts into `kernel`.
    pub fn resolve_kernel(&mut self) -> Result<KernelConfig, CliError> {
        let mut kernel = match self.kernel_file.take() {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::invalid(format!("cannot read kernel file {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::invalid(format!("bad kernel file {}: {e}", path.display())))?
            }
            None => match (self.kernel.take(), &self.family) {
                (Some(k), _) => k,
                (None, Some(family)) => KernelConfig {
                    n: self.n.ok_or_else(|| CliError::invalid("--n is required with --family"))?,
                    family: family.clone(),
                    beta: None,
                    p: None,
                    epsilon: None,
                    profile: None,
                    derivative_bound: None,
                },
                (None, None) => return Err(CliError::invalid("no kernel given: use --kernel FILE or --family")),
            },
        };
        if let Some(f) = self.family.take() {
            kernel.family = f;
        }
        if let Some(n) = self.n.take() {
            kernel.n = n;
        }
        kernel.beta = self.beta.take().or(kernel.beta);
        kernel.p = self.p.take().or(kernel.p);
        kernel.epsilon = self.epsilon.take().or(kernel.epsilon);
        self.kernel = Some(kernel.clone());
        Ok(kernel)
    }

    pub fn solver(&mut self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            damping: *self.damping.get_or_insert(d.damping),
            tol: *self.tol.get_or_insert(d.tol),
            max_iters: *self.max_iters.get_or_insert(d.max_iters),
            k_max: *self.k_max.get_or_insert(d.k_max),
            order: *self.order.get_or_insert(d.order),
            seed_amplitude: *self.seed_amplitude.get_or_insert(d.seed_amplitude),
        }
    }

    pub fn format(&mut self, default: Format) -> Result<Format, CliError> {
        let name = self.format.get_or_insert_with(|| match default {
            Format::Csv => "csv".into(),
            Format::Json => "json".into(),
        });
        match name.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::invalid(format!("unknown format `{other}`, expected csv or json"))),
        }
    }

    /// Grid over [gamma-min, gamma-max]; None when neither end is given.
    pub fn grid(&mut self, default_steps: usize) -> Result<Option<Vec<f64>>, CliError> {
        let (lo, hi) = match (self.gamma_min, self.gamma_max) {
            (None, None) => return Ok(None),
            (Some(lo), Some(hi)) => (lo, hi),
            _ => return Err(CliError::invalid("--gamma-min and --gamma-max must be given together")),
        };
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(CliError::invalid(format!("need 0 < gamma-min < gamma-max, got {lo} and {hi}")));
        }
        let steps = *self.gamma_steps.get_or_insert(default_steps);
        if steps < 2 {
            return Err(CliError::invalid("--gamma-steps must be at least 2"));
        }
        let log = *self.log_grid.get_or_insert(false);
        let grid = (0..steps)
            .map(|i| {
                let s = i as f64 / (steps - 1) as f64;
                if log {
                    lo * (hi / lo).powf(s)
                } else {
                    lo + s * (hi - lo)
                }
            })
            .collect();
        Ok(Some(grid))
    }
}
