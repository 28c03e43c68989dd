//! Stationary states as zeros of the Gibbs map ρ - e^{-γW*ρ}/Z, their
//! continuation in γ, and detection of phase transitions.

mod branch;
mod resonance;
mod transition;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use branch::{trace_branch, BranchPoint, BranchTrace};
pub use resonance::{
    competitor_density, competitor_energy_gap, heat_bandwidth, heat_epsilon_threshold, resonance_check,
    HarmonicCombination, ResonanceReport,
};
pub use transition::{find_transition, CompetitorWitness, TransitionReport, TransitionType};

use crate::error::{invalid, Error, Result};
use crate::harmonics::{ZonalBasis, ZonalCoefficients};
use crate::meanfield::{check_gamma, free_energy, EnergyReport, ZonalDensity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Damping τ ∈ (0, 1] of the Picard update.
    pub damping: f64,
    /// Target residual in the normalized L² norm.
    pub tol: f64,
    pub max_iters: usize,
    /// Truncation degree K.
    pub k_max: usize,
    /// Quadrature order M ≥ K + 2.
    pub order: usize,
    /// Relative size ε₀ of seed perturbations ρ̄(1 + ε₀ Y/|Y|∞).
    pub seed_amplitude: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-10, max_iters: 200_000, k_max: 64, order: 96, seed_amplitude: 0.05 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if self.order < self.k_max + 2 {
            return Err(Error::InsufficientQuadrature { order: self.order, required: self.k_max + 2 });
        }
        if !(self.seed_amplitude > 0.0 && self.seed_amplitude < 1.0) {
            return Err(invalid(format!("seed amplitude must lie in (0, 1), got {}", self.seed_amplitude)));
        }
        Ok(())
    }

    pub fn basis(&self, n: usize) -> Result<Arc<ZonalBasis>> {
        self.validate()?;
        Ok(Arc::new(ZonalBasis::new(n, self.k_max, self.order)?))
    }
}

/// Outcome of a fixed-point solve.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub density: ZonalDensity,
    pub residual: f64,
    pub iterations: usize,
    pub energy: EnergyReport,
    pub seed_free_energy: f64,
    /// Whether the converged free energy is at most the seed's (not guaranteed by Picard).
    pub energy_not_increased: bool,
}

/// The Gibbs map on a fixed basis, ρ ↦ e^{-γW*ρ}/Z with unit σ-mass.
pub(crate) struct GibbsMap {
    basis: Arc<ZonalBasis>,
    scaled_kernel: Vec<f64>,
    gamma: f64,
    coeff_buf: Vec<f64>,
    pot_buf: Vec<f64>,
}

impl GibbsMap {
    pub(crate) fn new(kernel: &ZonalCoefficients, gamma: f64, basis: Arc<ZonalBasis>) -> Result<Self> {
        check_gamma(gamma)?;
        if kernel.n != basis.n() {
            return Err(Error::DimensionMismatch { expected: basis.n(), found: kernel.n });
        }
        let k = basis.truncation();
        if kernel.truncation() < k {
            return Err(Error::TruncationExceeded { requested: k, available: kernel.truncation() });
        }
        let om = basis.omega_n();
        let scaled_kernel = kernel.coeffs[..=k].iter().map(|w| om * w).collect();
        Ok(Self { coeff_buf: vec![0.0; k + 1], pot_buf: vec![0.0; basis.order()], basis, scaled_kernel, gamma })
    }

    pub(crate) fn apply(&mut self, rho: &[f64], out: &mut [f64]) {
        self.basis.analyze_into(rho, &mut self.coeff_buf);
        for (c, w) in self.coeff_buf.iter_mut().zip(&self.scaled_kernel) {
            *c *= w;
        }
        self.basis.synthesize_into(&self.coeff_buf, &mut self.pot_buf);
        let top = self.pot_buf.iter().map(|p| -self.gamma * p).fold(f64::NEG_INFINITY, f64::max);
        for (o, p) in out.iter_mut().zip(&self.pot_buf) {
            *o = (-self.gamma * p - top).exp();
        }
        let mass = self.basis.integrate_sigma(out);
        out.iter_mut().for_each(|o| *o /= mass);
    }

    pub(crate) fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = &self.basis.rule().weights;
        let s: f64 = w.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * (x - y) * (x - y)).sum();
        (self.basis.c_lambda() * s).sqrt()
    }
}

/// ‖ρ - e^{-γW*ρ}/Z‖ in the normalized L² norm.
pub fn residual(kernel: &ZonalCoefficients, gamma: f64, density: &ZonalDensity) -> Result<f64> {
    let mut map = GibbsMap::new(kernel, gamma, density.basis().clone())?;
    let mut g = vec![0.0; density.values().len()];
    map.apply(density.values(), &mut g);
    Ok(map.distance(density.values(), &g))
}

/// Damped Picard iteration ρ ← (1-τ)ρ + τ e^{-γW*ρ}/Z from `init`.
pub fn gibbs_fixed_point(
    kernel: &ZonalCoefficients,
    gamma: f64,
    init: &ZonalDensity,
    config: &SolverConfig,
) -> Result<FixedPoint> {
    config.validate()?;
    let basis = init.basis().clone();
    let mut map = GibbsMap::new(kernel, gamma, basis.clone())?;
    let seed_energy = free_energy(kernel, init, gamma)?.free_energy;
    let tau = config.damping;

    let mut rho = init.values().to_vec();
    let mut g = vec![0.0; rho.len()];
    let mut best = (f64::INFINITY, rho.clone(), 0);
    let mut iterations = 0;
    let converged = loop {
        map.apply(&rho, &mut g);
        let r = map.distance(&rho, &g);
        if !r.is_finite() {
            return Err(Error::NonFinite(format!("Gibbs iteration produced residual {r} at step {iterations}")));
        }
        if r < best.0 {
            best = (r, rho.clone(), iterations);
        }
        if r <= config.tol {
            break true;
        }
        if iterations >= config.max_iters {
            break false;
        }
        for (x, y) in rho.iter_mut().zip(&g) {
            *x = (1.0 - tau) * *x + tau * y;
        }
        iterations += 1;
    };
    let (res, values, at) = if converged { (best.0, rho, iterations) } else { best };
    let density = ZonalDensity::normalized(basis, values)?;
    let energy = free_energy(kernel, &density, gamma)?;
    let out = FixedPoint {
        energy_not_increased: energy.free_energy <= seed_energy + 1e-14 * seed_energy.abs().max(1.0),
        density,
        residual: res,
        iterations: at,
        energy,
        seed_free_energy: seed_energy,
    };
    if converged {
        Ok(out)
    } else {
        Err(Error::NotConverged(Box::new(out)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub k: usize,
    pub gamma: f64,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bifurcations {
    /// Simple bifurcation points sorted by γ.
    pub points: Vec<BifurcationPoint>,
    /// Negative coefficients shared by several degrees, excluded from `points`.
    pub ties: Vec<Vec<usize>>,
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// γ_k = -1/Ŵ_k for every k ≥ 1 whose negative coefficient is not repeated.
pub fn bifurcation_points(coeffs: &ZonalCoefficients) -> Result<Bifurcations> {
    let c = &coeffs.coeffs;
    let negative: Vec<usize> = (1..c.len()).filter(|&k| c[k] < 0.0).collect();
    if negative.is_empty() {
        return Err(Error::StableKernel { truncation: coeffs.truncation() });
    }
    let mut points = Vec::new();
    let mut ties: Vec<Vec<usize>> = Vec::new();
    for &k in &negative {
        let group: Vec<usize> = (1..c.len()).filter(|&j| tied(c[j], c[k])).collect();
        if group.len() == 1 {
            points.push(BifurcationPoint { k, gamma: -1.0 / c[k], coefficient: c[k] });
        } else if group[0] == k {
            ties.push(group);
        }
    }
    points.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.k.cmp(&b.k)));
    Ok(Bifurcations { points, ties })
}

/// ρ̄(1 + s ε₀ Y_k/|Y_k|∞), positive by construction.
pub fn mode_seed(basis: Arc<ZonalBasis>, k: usize, sign: f64, amplitude: f64) -> Result<ZonalDensity> {
    let sup = crate::harmonics::norm_const(k, basis.n()) * crate::specfun::gegenbauer_at_one(k, basis.lambda());
    ZonalDensity::perturbed(basis, &[(k, sign * amplitude / sup)])
}
