//! Zonal spherical-harmonics transforms on S^{n-1}.
//!
//! A zonal function g(⟨e, x⟩) is expanded as g = Σ ĝ_k (k+λ)/λ C_k^λ with
//! λ = (n-2)/2 and ĝ_k = c_λ ∫ g C_k/C_k(1) (1-t²)^{λ-1/2} dt. Normalized
//! harmonics Y_{l,0} = A_l C_l^λ have unit norm for ⟨f,g⟩ = ω_n⁻¹∫fg dσ.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::fmt_f64;
use crate::specfun::{self, gauss_jacobi_rule, gegenbauer_at_one, QuadratureRule};

/// Surface measure of S^{n-1}, 2π^{n/2}/Γ(n/2).
pub fn omega_n(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("omega_n requires n >= 2, got {n}")));
    }
    Ok(omega(n))
}

pub(crate) fn omega(n: usize) -> f64 {
    let h = 0.5 * n as f64;
    2.0 * (h * PI.ln() - specfun::ln_gamma_pos(h)).exp()
}

/// c_λ = Γ(λ+1)/(√π Γ(λ+½)), the reciprocal mass of (1-t²)^{λ-1/2}.
pub fn c_lambda(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("c_lambda requires lambda > 0, got {lambda}")));
    }
    Ok(c_lam(lambda))
}

pub(crate) fn c_lam(lambda: f64) -> f64 {
    (specfun::ln_gamma_pos(lambda + 1.0) - 0.5 * PI.ln() - specfun::ln_gamma_pos(lambda + 0.5)).exp()
}

pub(crate) fn lambda_of(n: usize) -> f64 {
    0.5 * (n as f64 - 2.0)
}

fn check_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(invalid(format!("sphere dimension n must be >= 3, got {n}")));
    }
    Ok(())
}

/// A_l with Y_{l,0} = A_l C_l^{(n-2)/2} of unit normalized norm.
pub fn zonal_norm_constant(l: usize, n: usize) -> Result<f64> {
    check_n(n)?;
    Ok(norm_const(l, n))
}

pub(crate) fn norm_const(l: usize, n: usize) -> f64 {
    let lambda = lambda_of(n);
    let h = specfun::gegenbauer_norm_sq(l, lambda).expect("lambda > 0 for n >= 3");
    1.0 / (c_lam(lambda) * h).sqrt()
}

/// Truncated coefficient sequence (ĝ_0, …, ĝ_K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalCoefficients {
    pub n: usize,
    pub coeffs: Vec<f64>,
}

impl ZonalCoefficients {
    pub fn new(n: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_n(n)?;
        if coeffs.is_empty() {
            return Err(invalid("coefficient sequence must not be empty"));
        }
        if let Some(k) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient {k} is {}", coeffs[k])));
        }
        Ok(Self { n, coeffs })
    }

    /// Truncation degree K.
    pub fn truncation(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn lambda(&self) -> f64 {
        lambda_of(self.n)
    }

    /// ⟨g, Y_{k,0}⟩ under the normalized inner product.
    pub fn normalized(&self, k: usize) -> f64 {
        self.coeffs[k] * norm_const(k, self.n) * gegenbauer_at_one(k, self.lambda())
    }

    pub fn truncate(&self, k: usize) -> Self {
        Self { n: self.n, coeffs: self.coeffs[..=k.min(self.truncation())].to_vec() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,coeff\n");
        for (k, c) in self.coeffs.iter().enumerate() {
            let _ = writeln!(out, "{k},{}", fmt_f64(*c));
        }
        out
    }

    pub fn from_csv(n: usize, text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('k') {
                continue;
            }
            let (k, c) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("expected `k,coeff`, got `{line}`")))?;
            let k: usize = k.trim().parse().map_err(|_| Error::Parse(format!("bad degree `{k}`")))?;
            let c: f64 = c.trim().parse().map_err(|_| Error::Parse(format!("bad coefficient `{c}`")))?;
            rows.push((k, c));
        }
        for (i, (k, _)) in rows.iter().enumerate() {
            if *k != i {
                return Err(Error::Parse(format!("row {i} has degree {k}")));
            }
        }
        Self::new(n, rows.into_iter().map(|(_, c)| c).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coefficients serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Self = serde_json::from_str(text)?;
        Self::new(raw.n, raw.coeffs)
    }
}

/// Samples g(t_i) of a zonal function on the nodes of a quadrature rule.
#[derive(Debug, Clone)]
pub struct ZonalProfile {
    pub rule: Arc<QuadratureRule>,
    pub values: Vec<f64>,
}

impl ZonalProfile {
    pub fn new(rule: Arc<QuadratureRule>, values: Vec<f64>) -> Result<Self> {
        if values.len() != rule.order() {
            return Err(invalid(format!(
                "profile has {} values for a rule of order {}",
                values.len(),
                rule.order()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("profile value at node {i}")));
        }
        Ok(Self { rule, values })
    }

    pub fn from_fn(rule: Arc<QuadratureRule>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = rule.nodes.iter().map(|&t| f(t)).collect();
        Self::new(rule, values)
    }

    pub fn n(&self) -> usize {
        self.rule.n
    }
}

/// Coefficients ĝ_k = c_λ ∫ g C_k (1-t²)^{λ-½} dt / C_k(1), k ≤ K, of a sampled profile.
pub fn decompose(profile: &ZonalProfile, k_max: usize) -> Result<ZonalCoefficients> {
    let rule = &profile.rule;
    if rule.order() < k_max + 2 {
        return Err(Error::InsufficientQuadrature { order: rule.order(), required: k_max + 2 });
    }
    if let Some(i) = profile.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("profile value at node {i}")));
    }
    let lambda = rule.lambda();
    let c = c_lam(lambda);
    let mut acc = vec![0.0; k_max + 1];
    let mut poly = vec![0.0; k_max + 1];
    for ((&t, &w), &g) in rule.nodes.iter().zip(&rule.weights).zip(&profile.values) {
        specfun::gegenbauer_fill(lambda, t, &mut poly);
        for (a, p) in acc.iter_mut().zip(&poly) {
            *a += w * g * p;
        }
    }
    let coeffs = acc
        .iter()
        .enumerate()
        .map(|(k, a)| c * a / gegenbauer_at_one(k, lambda))
        .collect();
    ZonalCoefficients::new(rule.n, coeffs)
}

/// Evaluates the truncated series Σ ĝ_k (k+λ)/λ C_k^λ(t) at each point.
pub fn reconstruct(coeffs: &ZonalCoefficients, t_grid: &[f64]) -> Result<Vec<f64>> {
    let lambda = coeffs.lambda();
    let mut poly = vec![0.0; coeffs.coeffs.len()];
    t_grid
        .iter()
        .map(|&t| {
            if !t.is_finite() || t.abs() > 1.0 {
                return Err(invalid(format!("reconstruction point {t} outside [-1, 1]")));
            }
            specfun::gegenbauer_fill(lambda, t, &mut poly);
            Ok(coeffs
                .coeffs
                .iter()
                .zip(&poly)
                .enumerate()
                .map(|(k, (c, p))| c * (k as f64 + lambda) / lambda * p)
                .sum())
        })
        .collect()
}

/// ∫ Y_{l,0}³ in three normalizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripleProduct {
    pub l: usize,
    pub n: usize,
    /// A_l³ ∫ C_l³ (1-t²)^{(n-3)/2} dt, the one-dimensional reduced integral
    pub weighted: f64,
    /// ∫ Y_{l,0}³ dσ over the sphere, equal to ω_{n-1}·weighted
    pub sigma: f64,
    /// ω_n⁻¹ ∫ Y_{l,0}³ dσ
    pub normalized: f64,
}

pub fn triple_product_integral(l: usize, n: usize) -> Result<TripleProduct> {
    check_n(n)?;
    let rule = gauss_jacobi_rule(n, 3 * l / 2 + 2)?;
    let lambda = rule.lambda();
    let a = norm_const(l, n);
    let weighted = rule.integrate(|t| (a * specfun::gegenbauer(l, lambda, t)).powi(3));
    let sigma = omega(n - 1) * weighted;
    Ok(TripleProduct { l, n, weighted, sigma, normalized: sigma / omega(n) })
}

/// Precomputed analysis/synthesis tables for repeated transforms on a fixed rule.
#[derive(Debug, Clone)]
pub struct ZonalBasis {
    rule: Arc<QuadratureRule>,
    k_max: usize,
    lambda: f64,
    omega_n: f64,
    omega_sub: f64,
    // analysis[k*M + i] = c_λ w_i C_k(t_i)/C_k(1)
    analysis: Vec<f64>,
    // synthesis[i*(K+1) + k] = (k+λ)/λ C_k(t_i)
    synthesis: Vec<f64>,
    norm_factor: Vec<f64>,
}

impl ZonalBasis {
    pub fn new(n: usize, k_max: usize, order: usize) -> Result<Self> {
        if order < k_max + 2 {
            return Err(Error::InsufficientQuadrature { order, required: k_max + 2 });
        }
        let rule = Arc::new(gauss_jacobi_rule(n, order)?);
        Self::with_rule(rule, k_max)
    }

    pub fn with_rule(rule: Arc<QuadratureRule>, k_max: usize) -> Result<Self> {
        let n = rule.n;
        let m = rule.order();
        if m < k_max + 2 {
            return Err(Error::InsufficientQuadrature { order: m, required: k_max + 2 });
        }
        let lambda = rule.lambda();
        let c = c_lam(lambda);
        let at_one: Vec<f64> = (0..=k_max).map(|k| gegenbauer_at_one(k, lambda)).collect();
        let mut analysis = vec![0.0; (k_max + 1) * m];
        let mut synthesis = vec![0.0; (k_max + 1) * m];
        let mut poly = vec![0.0; k_max + 1];
        for (i, (&t, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            specfun::gegenbauer_fill(lambda, t, &mut poly);
            for k in 0..=k_max {
                analysis[k * m + i] = c * w * poly[k] / at_one[k];
                synthesis[i * (k_max + 1) + k] = (k as f64 + lambda) / lambda * poly[k];
            }
        }
        let norm_factor = (0..=k_max).map(|k| norm_const(k, n) * at_one[k]).collect();
        Ok(Self {
            rule,
            k_max,
            lambda,
            omega_n: omega(n),
            omega_sub: omega(n - 1),
            analysis,
            synthesis,
            norm_factor,
        })
    }

    pub fn n(&self) -> usize {
        self.rule.n
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        &self.rule
    }

    pub fn truncation(&self) -> usize {
        self.k_max
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// ω_n, the area of the sphere.
    pub fn omega_n(&self) -> f64 {
        self.omega_n
    }

    /// ω_{n-1}, the area of a latitude sphere of unit radius.
    pub fn omega_sub(&self) -> f64 {
        self.omega_sub
    }

    pub fn c_lambda(&self) -> f64 {
        c_lam(self.lambda)
    }

    /// Factor turning ĝ_k into ⟨g, Y_{k,0}⟩.
    pub fn normalized_factor(&self, k: usize) -> f64 {
        self.norm_factor[k]
    }

    /// Raw coefficients ĝ_k of node values; `out` has length K+1.
    pub fn analyze_into(&self, values: &[f64], out: &mut [f64]) {
        let m = self.order();
        for (k, o) in out.iter_mut().enumerate().take(self.k_max + 1) {
            let row = &self.analysis[k * m..(k + 1) * m];
            *o = row.iter().zip(values).map(|(a, v)| a * v).sum();
        }
    }

    pub fn analyze(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k_max + 1];
        self.analyze_into(values, &mut out);
        out
    }

    /// Series values at the nodes from coefficients (any length ≤ K+1).
    pub fn synthesize_into(&self, coeffs: &[f64], out: &mut [f64]) {
        let stride = self.k_max + 1;
        let len = coeffs.len().min(stride);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.synthesis[i * stride..i * stride + len];
            *o = row.iter().zip(coeffs).map(|(s, c)| s * c).sum();
        }
    }

    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.order()];
        self.synthesize_into(coeffs, &mut out);
        out
    }

    /// Values of Y_{l,0} at the nodes.
    pub fn harmonic_values(&self, l: usize) -> Vec<f64> {
        let a = norm_const(l, self.n());
        self.rule.nodes.iter().map(|&t| a * specfun::gegenbauer(l, self.lambda, t)).collect()
    }

    /// ∫ f dσ for a zonal f sampled on the nodes.
    pub fn integrate_sigma(&self, values: &[f64]) -> f64 {
        self.omega_sub * self.rule.weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>()
    }

    /// ω_n⁻¹ ∫ f dσ.
    pub fn mean(&self, values: &[f64]) -> f64 {
        self.integrate_sigma(values) / self.omega_n
    }
}
