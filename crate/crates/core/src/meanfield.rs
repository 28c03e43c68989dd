//! Axially symmetric densities, spherical convolution and the free energy
//! 𝓕_γ(ρ) = γ⁻¹𝓔(ρ) + 𝓘(ρ).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harmonics::{ZonalBasis, ZonalCoefficients, ZonalProfile};
use crate::specfun::QuadratureRule;

const MASS_TOL: f64 = 1e-10;

/// Density with respect to the surface measure σ, sampled on quadrature nodes.
#[derive(Debug, Clone)]
pub struct ZonalDensity {
    basis: Arc<ZonalBasis>,
    values: Vec<f64>,
    coeffs: ZonalCoefficients,
}

impl ZonalDensity {
    /// Validates nonnegativity and unit mass.
    pub fn new(basis: Arc<ZonalBasis>, values: Vec<f64>) -> Result<Self> {
        if values.len() != basis.order() {
            return Err(invalid(format!("{} values for a rule of order {}", values.len(), basis.order())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("density value at node {i}")));
        }
        if let Some(i) = values.iter().position(|&v| v < 0.0) {
            return Err(Error::NonPositiveDensity { index: i, value: values[i] });
        }
        let mass = basis.integrate_sigma(&values);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::MassMismatch { mass });
        }
        let coeffs = ZonalCoefficients { n: basis.n(), coeffs: basis.analyze(&values) };
        Ok(Self { basis, values, coeffs })
    }

    /// Rescales nonnegative values to unit mass.
    pub fn normalized(basis: Arc<ZonalBasis>, mut values: Vec<f64>) -> Result<Self> {
        let mass = basis.integrate_sigma(&values);
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::MassMismatch { mass });
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(basis, values)
    }

    /// ρ̄ = 1/ω_n.
    pub fn uniform(basis: Arc<ZonalBasis>) -> Self {
        let rho = 1.0 / basis.omega_n();
        let values = vec![rho; basis.order()];
        Self::normalized(basis, values).expect("uniform density is valid")
    }

    /// ρ̄(1 + Σ c_l Y_{l,0}); fails if the result is not positive.
    pub fn perturbed(basis: Arc<ZonalBasis>, terms: &[(usize, f64)]) -> Result<Self> {
        let rho = 1.0 / basis.omega_n();
        let mut values = vec![1.0; basis.order()];
        for &(l, c) in terms {
            for (v, y) in values.iter_mut().zip(basis.harmonic_values(l)) {
                *v += c * y;
            }
        }
        if let Some(i) = values.iter().position(|&v| v <= 0.0) {
            return Err(Error::NonPositiveDensity { index: i, value: rho * values[i] });
        }
        Self::normalized(basis, values.into_iter().map(|v| rho * v).collect())
    }

    /// Density proportional to exp(Σ c_l Y_{l,0}).
    pub fn gibbs(basis: Arc<ZonalBasis>, terms: &[(usize, f64)]) -> Result<Self> {
        let mut expo = vec![0.0; basis.order()];
        for &(l, c) in terms {
            for (e, y) in expo.iter_mut().zip(basis.harmonic_values(l)) {
                *e += c * y;
            }
        }
        let top = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self::normalized(basis, expo.into_iter().map(|e| (e - top).exp()).collect())
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn basis(&self) -> &Arc<ZonalBasis> {
        &self.basis
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        self.basis.rule()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coeffs(&self) -> &ZonalCoefficients {
        &self.coeffs
    }

    pub fn mass(&self) -> f64 {
        self.basis.integrate_sigma(&self.values)
    }

    /// ⟨ρ, Y_{l,0}⟩ = ω_n⁻¹ ∫ ρ Y_{l,0} dσ.
    pub fn normalized_coefficient(&self, l: usize) -> f64 {
        self.coeffs.coeffs[l] * self.basis.normalized_factor(l)
    }

    /// Expected value of Y_{l,0} under ρ, ∫ ρ Y_{l,0} dσ.
    pub fn expectation(&self, l: usize) -> f64 {
        self.basis.omega_n() * self.normalized_coefficient(l)
    }

    /// Degree l ≥ 1 with the largest |⟨ρ, Y_{l,0}⟩|, and that coefficient.
    pub fn dominant_mode(&self) -> (usize, f64) {
        (1..=self.basis.truncation())
            .map(|l| (l, self.normalized_coefficient(l)))
            .fold((1, 0.0), |best, cur| if cur.1.abs() > best.1.abs() { cur } else { best })
    }

    /// max_l≥1 |⟨ρ,Y_l⟩| / ⟨ρ,1⟩, zero for the uniform state.
    pub fn anisotropy(&self) -> f64 {
        self.dominant_mode().1.abs() * self.basis.omega_n()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn check_kernel(kernel: &ZonalCoefficients, density: &ZonalDensity) -> Result<()> {
    if kernel.n != density.n() {
        return Err(Error::DimensionMismatch { expected: density.n(), found: kernel.n });
    }
    if kernel.truncation() < density.basis.truncation() {
        return Err(Error::TruncationExceeded {
            requested: density.basis.truncation(),
            available: kernel.truncation(),
        });
    }
    Ok(())
}

/// W*ρ on the density's nodes, via (W*ρ)^_p = ω_n Ŵ_p ρ̂_p.
pub fn convolve(kernel: &ZonalCoefficients, density: &ZonalDensity) -> Result<ZonalProfile> {
    check_kernel(kernel, density)?;
    let basis = &density.basis;
    let scaled: Vec<f64> = density
        .coeffs
        .coeffs
        .iter()
        .zip(&kernel.coeffs)
        .map(|(r, w)| basis.omega_n() * w * r)
        .collect();
    ZonalProfile::new(basis.rule().clone(), basis.synthesize(&scaled))
}

/// 𝓔(ρ) = ∫ f log f dm with f = ω_n ρ and m the normalized measure; +∞ unless ρ > 0.
pub fn entropy(density: &ZonalDensity) -> f64 {
    entropy_of(&density.basis, &density.values)
}

pub(crate) fn entropy_of(basis: &ZonalBasis, values: &[f64]) -> f64 {
    let om = basis.omega_n();
    let w = &basis.rule().weights;
    let mut s = 0.0;
    for (&wi, &v) in w.iter().zip(values) {
        if !(v > 0.0) {
            return f64::INFINITY;
        }
        // f log f written around f = 1 to keep small perturbations accurate
        let x = om * v - 1.0;
        s += wi * (1.0 + x) * x.ln_1p();
    }
    basis.c_lambda() * s
}

/// 𝓘(ρ) = ½∫∫W ρ ρ = ½ω_n² Σ_l Ŵ_l ⟨ρ,Y_l⟩².
pub fn interaction_energy(kernel: &ZonalCoefficients, density: &ZonalDensity) -> Result<f64> {
    check_kernel(kernel, density)?;
    let om = density.basis.omega_n();
    let s: f64 = (0..=density.basis.truncation())
        .map(|l| {
            let a = density.normalized_coefficient(l);
            kernel.coeffs[l] * a * a
        })
        .sum();
    Ok(0.5 * om * om * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub entropy: f64,
    pub interaction: f64,
    pub free_energy: f64,
    pub gamma: f64,
}

pub fn free_energy(kernel: &ZonalCoefficients, density: &ZonalDensity, gamma: f64) -> Result<EnergyReport> {
    check_gamma(gamma)?;
    let entropy = entropy(density);
    let interaction = interaction_energy(kernel, density)?;
    Ok(EnergyReport { entropy, interaction, free_energy: entropy / gamma + interaction, gamma })
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid(format!("gamma must be positive and finite, got {gamma}")));
    }
    Ok(())
}

/// Eigenvalues λ_l = -l(n+l-2)(1+γŴ_l) of the linearization at the uniform state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySpectrum {
    pub gamma: f64,
    pub eigenvalues: Vec<f64>,
}

pub fn linear_spectrum(kernel: &ZonalCoefficients, gamma: f64, l_max: usize) -> Result<StabilitySpectrum> {
    check_gamma(gamma)?;
    if l_max > kernel.truncation() {
        return Err(Error::TruncationExceeded { requested: l_max, available: kernel.truncation() });
    }
    let n = kernel.n as f64;
    let eigenvalues = (0..=l_max)
        .map(|l| {
            if l == 0 {
                return 0.0;
            }
            let lf = l as f64;
            -lf * (n + lf - 2.0) * (1.0 + gamma * kernel.coeffs[l])
        })
        .collect();
    Ok(StabilitySpectrum { gamma, eigenvalues })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSharp {
    pub gamma_sharp: f64,
    /// Degrees k ≥ 1 attaining min Ŵ_k (ties within relative 1e-12).
    pub argmin: Vec<usize>,
    pub min_coefficient: f64,
}

/// γ_# = -1/min_{k≥1} Ŵ_k; the k = 0 mode carries mass and never destabilizes.
pub fn gamma_sharp(coeffs: &ZonalCoefficients) -> Result<GammaSharp> {
    let min = coeffs.coeffs.iter().skip(1).cloned().fold(f64::INFINITY, f64::min);
    if !(min < 0.0) {
        return Err(Error::StableKernel { truncation: coeffs.truncation() });
    }
    let argmin = (1..coeffs.coeffs.len())
        .filter(|&k| coeffs.coeffs[k] <= min + 1e-12 * min.abs())
        .collect();
    Ok(GammaSharp { gamma_sharp: -1.0 / min, argmin, min_coefficient: min })
}
