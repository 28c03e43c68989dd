use std::fmt::Write as _;

use serde::Serialize;

use super::{bifurcation_points, gibbs_fixed_point, mode_seed, FixedPoint, SolverConfig};
use crate::error::{invalid, Error, Result};
use crate::harmonics::ZonalCoefficients;
use crate::io::fmt_f64;
use crate::meanfield::{EnergyReport, ZonalDensity};

/// Relative anisotropy below which a state counts as uniform.
pub(crate) const UNIFORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct BranchPoint {
    pub gamma: f64,
    #[serde(skip)]
    pub density: ZonalDensity,
    /// Degree l ≥ 1 with the largest |⟨ρ, Y_{l,0}⟩|.
    pub dominant_mode: usize,
    /// ⟨ρ, Y_{l,0}⟩ of the dominant mode.
    pub amplitude: f64,
    /// ⟨ρ, Y_{k,0}⟩ of the traced mode k.
    pub mode_amplitude: f64,
    pub energy: EnergyReport,
    pub residual: f64,
    pub iterations: usize,
}

impl BranchPoint {
    pub(crate) fn from_fixed_point(gamma: f64, mode: usize, fp: FixedPoint) -> Self {
        let (dominant_mode, amplitude) = fp.density.dominant_mode();
        Self {
            gamma,
            mode_amplitude: fp.density.normalized_coefficient(mode),
            dominant_mode,
            amplitude,
            energy: fp.energy,
            residual: fp.residual,
            iterations: fp.iterations,
            density: fp.density,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchTrace {
    pub mode: usize,
    pub bifurcation_gamma: f64,
    /// Relative kick ε₀ added along Y_{k,0} before each solve.
    pub kick: f64,
    pub points: Vec<BranchPoint>,
    /// Why the trace stopped early, if it did.
    pub diagnostic: Option<String>,
}

impl BranchTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma,mode,amplitude,entropy,interaction,free_energy,residual,iterations\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt_f64(p.gamma),
                p.dominant_mode,
                fmt_f64(p.amplitude),
                fmt_f64(p.energy.entropy),
                fmt_f64(p.energy.interaction),
                fmt_f64(p.energy.free_energy),
                fmt_f64(p.residual),
                p.iterations
            );
        }
        out
    }
}

fn kicked(prev: &ZonalDensity, mode: usize, sign: f64, eps: f64) -> ZonalDensity {
    let basis = prev.basis().clone();
    let Ok(kick) = mode_seed(basis.clone(), mode, sign, eps) else {
        return prev.clone();
    };
    let rho_bar = 1.0 / basis.omega_n();
    let values: Vec<f64> = prev.values().iter().zip(kick.values()).map(|(p, k)| p + (k - rho_bar)).collect();
    if values.iter().any(|&v| v <= 0.0) {
        return prev.clone();
    }
    ZonalDensity::normalized(basis, values).unwrap_or_else(|_| prev.clone())
}

/// Follows the branch bifurcating from (ρ̄, γ_k) over `gamma_grid`, in the given order.
pub fn trace_branch(
    kernel: &ZonalCoefficients,
    mode: usize,
    gamma_grid: &[f64],
    config: &SolverConfig,
) -> Result<BranchTrace> {
    config.validate()?;
    if gamma_grid.is_empty() {
        return Err(invalid("gamma grid is empty"));
    }
    if let Some(g) = gamma_grid.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        return Err(invalid(format!("gamma values must be positive, got {g}")));
    }
    let bif = bifurcation_points(kernel)?;
    let point = bif
        .points
        .iter()
        .find(|p| p.k == mode)
        .ok_or_else(|| invalid(format!("degree {mode} is not a simple bifurcation point")))?;
    let basis = config.basis(kernel.n)?;
    let eps = config.seed_amplitude;
    let mut trace = BranchTrace {
        mode,
        bifurcation_gamma: point.gamma,
        kick: eps,
        points: Vec::new(),
        diagnostic: None,
    };

    // first point: both orientations, keep the smallest non-uniform state
    let gamma0 = gamma_grid[0];
    let mut first: Option<FixedPoint> = None;
    let mut failures = Vec::new();
    for sign in [1.0, -1.0] {
        let seed = mode_seed(basis.clone(), mode, sign, eps)?;
        match gibbs_fixed_point(kernel, gamma0, &seed, config) {
            Ok(fp) if fp.density.anisotropy() > UNIFORM_TOL => {
                let amp = fp.density.normalized_coefficient(mode).abs();
                if first.as_ref().map_or(true, |f| amp < f.density.normalized_coefficient(mode).abs()) {
                    first = Some(fp);
                }
            }
            Ok(_) => failures.push(format!("seed sign {sign:+} relaxed to the uniform state")),
            Err(Error::NotConverged(fp)) => failures.push(format!(
                "seed sign {sign:+} did not converge (residual {:.3e})",
                fp.residual
            )),
            Err(e) => return Err(e),
        }
    }
    let Some(first) = first else {
        trace.diagnostic = Some(format!("branch not found at gamma = {gamma0}: {}", failures.join("; ")));
        return Ok(trace);
    };
    let mut sign = first.density.normalized_coefficient(mode).signum();
    let mut prev = first.density.clone();
    trace.points.push(BranchPoint::from_fixed_point(gamma0, mode, first));

    for &gamma in &gamma_grid[1..] {
        let seed = kicked(&prev, mode, sign, eps);
        match gibbs_fixed_point(kernel, gamma, &seed, config) {
            Ok(fp) if fp.density.anisotropy() > UNIFORM_TOL => {
                sign = fp.density.normalized_coefficient(mode).signum();
                prev = fp.density.clone();
                trace.points.push(BranchPoint::from_fixed_point(gamma, mode, fp));
            }
            Ok(_) => {
                trace.diagnostic = Some(format!("branch lost at gamma = {gamma}: relaxed to the uniform state"));
                break;
            }
            Err(Error::NotConverged(fp)) => {
                trace.diagnostic = Some(format!(
                    "branch lost at gamma = {gamma}: no convergence (residual {:.3e})",
                    fp.residual
                ));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}
