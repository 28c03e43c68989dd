//! Interaction kernel families W(⟨x,y⟩) and their zonal coefficients.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harmonics::{self, decompose, lambda_of, ZonalCoefficients, ZonalProfile};
use crate::specfun::{
    self, bessel_i, gauss_jacobi_rule, gegenbauer_at_one, jacobi_nodes_weights, ln_gamma_pos, signed_ln_gamma,
    QuadratureRule, SignedLnGamma,
};

/// Default number of nodes used to sample user profiles.
pub const CUSTOM_ORDER: usize = 160;
/// Default truncation for series representations of user profiles.
pub const CUSTOM_DEGREE: usize = 96;

const STABILITY_TOL: f64 = 1e-12;
const HEAT_MAX_DEGREE: usize = 4000;

#[derive(Debug, Clone)]
pub struct CustomKernel {
    pub profile: ZonalProfile,
    /// Bound on max(sup|W'|, sup|W''|) when known.
    pub derivative_bound: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum KernelFamily {
    /// W(t) = -(1/β) e^{βt}
    Transformer { beta: f64 },
    /// W(t) = √(1-t²)
    Onsager,
    /// W(t) = -(1+t)^p
    Opinion { p: f64 },
    /// W = -u(ε, ·), the heat kernel at time ε
    Heat { epsilon: f64 },
    Custom(CustomKernel),
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub n: usize,
    pub family: KernelFamily,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn check_dim(n: usize) -> Result<()> {
    if n < 3 {
        return Err(invalid(format!("sphere dimension n must be >= 3, got {n}")));
    }
    Ok(())
}

impl KernelSpec {
    pub fn transformer(n: usize, beta: f64) -> Result<Self> {
        check_dim(n)?;
        check_positive("beta", beta)?;
        Ok(Self { n, family: KernelFamily::Transformer { beta } })
    }

    pub fn onsager(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(Self { n, family: KernelFamily::Onsager })
    }

    pub fn opinion(n: usize, p: f64) -> Result<Self> {
        check_dim(n)?;
        check_positive("p", p)?;
        Ok(Self { n, family: KernelFamily::Opinion { p } })
    }

    pub fn heat(n: usize, epsilon: f64) -> Result<Self> {
        check_dim(n)?;
        check_positive("epsilon", epsilon)?;
        Ok(Self { n, family: KernelFamily::Heat { epsilon } })
    }

    pub fn custom(profile: ZonalProfile, derivative_bound: Option<f64>) -> Result<Self> {
        check_dim(profile.n())?;
        if let Some(i) = profile.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("custom profile value at node {i}")));
        }
        if let Some(b) = derivative_bound {
            check_positive("derivative_bound", b)?;
        }
        Ok(Self { n: profile.n(), family: KernelFamily::Custom(CustomKernel { profile, derivative_bound }) })
    }

    /// Custom kernel sampled from a closure on a rule of order [`CUSTOM_ORDER`].
    pub fn custom_fn(n: usize, g: impl Fn(f64) -> f64, derivative_bound: Option<f64>) -> Result<Self> {
        check_dim(n)?;
        let rule = Arc::new(gauss_jacobi_rule(n, CUSTOM_ORDER)?);
        Self::custom(ZonalProfile::from_fn(rule, g)?, derivative_bound)
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Transformer { .. } => "transformer",
            KernelFamily::Onsager => "onsager",
            KernelFamily::Opinion { .. } => "opinion",
            KernelFamily::Heat { .. } => "heat",
            KernelFamily::Custom(_) => "custom",
        }
    }

    pub fn lambda(&self) -> f64 {
        lambda_of(self.n)
    }

    /// Pointwise profile W(t) together with W' and W''.
    pub fn profile(&self) -> Result<KernelProfile> {
        KernelProfile::new(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: KernelConfig = serde_json::from_str(text)?;
        cfg.build()
    }
}

/// JSON form of a kernel specification.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KernelConfig {
    pub n: usize,
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative_bound: Option<f64>,
}

/// User profile given as a sample table (linearly interpolated), monomial
/// coefficients g(t) = Σ a_j t^j, or Gegenbauer coefficients ĝ_k.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ProfileSource {
    Table { t: Vec<f64>, g: Vec<f64> },
    Monomial { monomial: Vec<f64> },
    Coefficients { coefficients: Vec<f64> },
}

impl ProfileSource {
    fn evaluator(&self, n: usize) -> Result<Box<dyn Fn(f64) -> f64>> {
        match self {
            ProfileSource::Table { t, g } => {
                if t.len() != g.len() || t.len() < 2 {
                    return Err(invalid("profile table needs matching t and g of length >= 2"));
                }
                if t.windows(2).any(|w| !(w[0] < w[1])) || t[0] > -1.0 || t[t.len() - 1] < 1.0 {
                    return Err(invalid("profile table t must increase and cover [-1, 1]"));
                }
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("profile table value".into()));
                }
                let (t, g) = (t.clone(), g.clone());
                Ok(Box::new(move |x| {
                    let j = t.partition_point(|&s| s <= x).clamp(1, t.len() - 1);
                    let h = (x - t[j - 1]) / (t[j] - t[j - 1]);
                    g[j - 1] + h * (g[j] - g[j - 1])
                }))
            }
            ProfileSource::Monomial { monomial } => {
                let a = monomial.clone();
                Ok(Box::new(move |x| a.iter().rev().fold(0.0, |acc, c| acc * x + c)))
            }
            ProfileSource::Coefficients { coefficients } => {
                let c = ZonalCoefficients::new(n, coefficients.clone())?;
                Ok(Box::new(move |x| harmonics::reconstruct(&c, &[x]).map(|v| v[0]).unwrap_or(f64::NAN)))
            }
        }
    }
}

impl KernelConfig {
    pub fn build(&self) -> Result<KernelSpec> {
        self.build_with_order(CUSTOM_ORDER)
    }

    /// As [`build`](Self::build), sampling a custom profile on a rule of the given order.
    pub fn build_with_order(&self, order: usize) -> Result<KernelSpec> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| invalid(format!("family `{}` needs `{name}`", self.family)));
        match self.family.to_ascii_lowercase().as_str() {
            "transformer" => KernelSpec::transformer(self.n, need(self.beta, "beta")?),
            "onsager" => KernelSpec::onsager(self.n),
            "opinion" => KernelSpec::opinion(self.n, need(self.p, "p")?),
            "heat" => KernelSpec::heat(self.n, need(self.epsilon, "epsilon")?),
            "custom" => {
                let src = self.profile.as_ref().ok_or_else(|| invalid("family `custom` needs `profile`"))?;
                check_dim(self.n)?;
                let f = src.evaluator(self.n)?;
                let rule = Arc::new(gauss_jacobi_rule(self.n, order)?);
                KernelSpec::custom(ZonalProfile::from_fn(rule, f)?, self.derivative_bound)
            }
            other => Err(invalid(format!("unknown kernel family `{other}`"))),
        }
    }

    pub fn describe(spec: &KernelSpec) -> Self {
        let mut cfg = KernelConfig {
            n: spec.n,
            family: spec.name().to_string(),
            beta: None,
            p: None,
            epsilon: None,
            profile: None,
            derivative_bound: None,
        };
        match &spec.family {
            KernelFamily::Transformer { beta } => cfg.beta = Some(*beta),
            KernelFamily::Opinion { p } => cfg.p = Some(*p),
            KernelFamily::Heat { epsilon } => cfg.epsilon = Some(*epsilon),
            KernelFamily::Custom(c) => {
                cfg.profile = Some(ProfileSource::Table { t: c.profile.rule.nodes.clone(), g: c.profile.values.clone() });
                cfg.derivative_bound = c.derivative_bound;
            }
            KernelFamily::Onsager => {}
        }
        cfg
    }
}

/// A note about a numerically delicate coefficient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientWarning {
    pub k: usize,
    pub message: String,
}

/// Closed-form coefficients of a named family.
pub fn closed_form_coefficients(spec: &KernelSpec, k_max: usize) -> Result<ZonalCoefficients> {
    closed_form_with_warnings(spec, k_max).map(|(c, _)| c)
}

pub fn closed_form_with_warnings(
    spec: &KernelSpec,
    k_max: usize,
) -> Result<(ZonalCoefficients, Vec<CoefficientWarning>)> {
    let n = spec.n;
    let nf = n as f64;
    let lambda = spec.lambda();
    let mut warnings = Vec::new();
    let coeffs: Vec<f64> = match &spec.family {
        KernelFamily::Transformer { beta } => {
            let ln_pre = lambda * 2f64.ln() - 0.5 * nf * beta.ln() + ln_gamma_pos(0.5 * nf);
            (0..=k_max)
                .map(|k| Ok(-ln_pre.exp() * bessel_i(k as f64 + lambda, *beta)?))
                .collect::<Result<_>>()?
        }
        KernelFamily::Onsager => {
            let ln_pre = 2.0 * ln_gamma_pos(lambda + 1.0) + ln_gamma_pos(2.0 * lambda)
                - 2f64.ln()
                - 0.5 * PI.ln()
                - ln_gamma_pos(lambda + 0.5)
                - ln_gamma_pos(lambda);
            (0..=k_max)
                .map(|k| {
                    if k % 2 == 1 {
                        return 0.0;
                    }
                    let m = (k / 2) as f64;
                    // Γ(m-½) is negative only at m = 0
                    let (ln_g, sign) = match signed_ln_gamma(m - 0.5) {
                        SignedLnGamma::Finite { ln_abs, sign } => (ln_abs, sign),
                        SignedLnGamma::Pole => unreachable!("half-integer argument"),
                    };
                    let ln = ln_pre + ln_gamma_pos(2.0 * m + 1.0) + ln_gamma_pos(lambda + m) + ln_g
                        - ln_gamma_pos(m + 1.0)
                        - ln_gamma_pos(2.0 * m + 2.0 * lambda)
                        - ln_gamma_pos(m + lambda + 1.5);
                    -sign * ln.exp()
                })
                .collect()
        }
        KernelFamily::Opinion { p } => {
            let p = *p;
            let ln_pre = (nf - 2.0 + p) * 2f64.ln() + ln_gamma_pos(0.5 * nf) + ln_gamma_pos(0.5 * (nf - 1.0) + p)
                + ln_gamma_pos(p + 1.0)
                - 0.5 * PI.ln();
            (0..=k_max)
                .map(|k| {
                    let kf = k as f64;
                    let arg = p + 1.0 - kf;
                    match signed_ln_gamma(arg) {
                        SignedLnGamma::Pole => 0.0,
                        SignedLnGamma::Finite { ln_abs, sign } => {
                            if arg <= 0.0 && (arg - arg.round()).abs() < 1e-12 {
                                warnings.push(CoefficientWarning {
                                    k,
                                    message: format!("Γ({arg}) is within 1e-12 of a pole; value is ill-conditioned"),
                                });
                            }
                            let ln = ln_pre - ln_gamma_pos(nf + kf + p - 1.0) - ln_abs;
                            -sign * ln.exp()
                        }
                    }
                })
                .collect()
        }
        KernelFamily::Heat { epsilon } => {
            let scale = 1.0 / harmonics::omega(n);
            (0..=k_max)
                .map(|k| {
                    let kf = k as f64;
                    -scale * (-kf * (kf + nf - 2.0) * epsilon).exp()
                })
                .collect()
        }
        KernelFamily::Custom(_) => {
            return Err(invalid("custom kernels have no closed form; use coefficients()"));
        }
    };
    if let Some(k) = coeffs.iter().position(|c: &f64| !c.is_finite()) {
        return Err(Error::Overflow(format!("{} coefficient {k} is not finite", spec.name())));
    }
    Ok((ZonalCoefficients::new(n, coeffs)?, warnings))
}

/// Coefficients by the closed form when available, by quadrature otherwise.
pub fn coefficients(spec: &KernelSpec, k_max: usize) -> Result<ZonalCoefficients> {
    match &spec.family {
        KernelFamily::Custom(c) => {
            let order = c.profile.rule.order();
            if order < k_max + 2 {
                let rule = Arc::new(gauss_jacobi_rule(spec.n, k_max + 2)?);
                let series = custom_series(c)?;
                let values = harmonics::reconstruct(&series, &rule.nodes)?;
                return decompose(&ZonalProfile::new(rule, values)?, k_max).map(denoise);
            }
            decompose(&c.profile, k_max).map(denoise)
        }
        _ => closed_form_coefficients(spec, k_max),
    }
}

/// Zeroes quadrature round-off so that exact zeros do not masquerade as negative coefficients.
fn denoise(mut c: ZonalCoefficients) -> ZonalCoefficients {
    let floor = 1e-14 * c.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in &mut c.coeffs {
        if v.abs() <= floor {
            *v = 0.0;
        }
    }
    c
}

fn custom_series(c: &CustomKernel) -> Result<ZonalCoefficients> {
    let k = CUSTOM_DEGREE.min(c.profile.rule.order() - 2);
    decompose(&c.profile, k)
}

/// Coefficients computed by Gauss quadrature of the defining integral, independent of the
/// closed forms. Singular factors are absorbed into the Jacobi weight.
pub fn quadrature_coefficients(spec: &KernelSpec, k_max: usize) -> Result<ZonalCoefficients> {
    let n = spec.n;
    let lambda = spec.lambda();
    let c = harmonics::c_lam(lambda);
    let a = 0.5 * (n as f64 - 3.0);
    let order = k_max + 64;
    let integrate = |nodes: &[f64], weights: &[f64], g: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..=k_max)
            .map(|k| {
                let s: f64 = nodes
                    .iter()
                    .zip(weights)
                    .map(|(&t, &w)| w * g(t) * specfun::gegenbauer(k, lambda, t))
                    .sum();
                c * s / gegenbauer_at_one(k, lambda)
            })
            .collect()
    };
    let coeffs = match &spec.family {
        KernelFamily::Onsager => {
            // √(1-t²)(1-t²)^a = (1-t²)^{a+½}
            let (x, w) = jacobi_nodes_weights(a + 0.5, a + 0.5, order)?;
            integrate(&x, &w, &|_| 1.0)
        }
        KernelFamily::Opinion { p } => {
            let (x, w) = jacobi_nodes_weights(a, a + p, order)?;
            integrate(&x, &w, &|_| -1.0)
        }
        KernelFamily::Custom(_) => return coefficients(spec, k_max),
        _ => {
            let rule = gauss_jacobi_rule(n, order)?;
            let prof = spec.profile()?;
            integrate(&rule.nodes, &rule.weights, &|t| prof.value(t))
        }
    };
    ZonalCoefficients::new(n, coeffs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable { first_negative: usize },
}

pub fn stability_check(coeffs: &ZonalCoefficients) -> Stability {
    match coeffs.coeffs.iter().position(|&c| c < -STABILITY_TOL) {
        Some(k) => Stability::Unstable { first_negative: k },
        None => Stability::Stable,
    }
}

/// γ_o = (n-2)/(4C) below which the free energy is geodesically convex.
pub fn convexity_threshold(spec: &KernelSpec) -> Option<f64> {
    let nm2 = spec.n as f64 - 2.0;
    let c = match &spec.family {
        KernelFamily::Transformer { beta } => (beta * beta.exp()).max(beta.exp()),
        KernelFamily::Onsager => return None,
        KernelFamily::Opinion { p } => {
            let p = *p;
            if p >= 2.0 || p == 1.0 {
                (2f64.powf(p - 1.0) * p).max(2f64.powf(p - 2.0) * p * (p - 1.0))
            } else {
                return None;
            }
        }
        KernelFamily::Heat { .. } => {
            // all coefficients share one sign, so |W'| and |W''| peak at t = 1
            let prof = spec.profile().ok()?;
            prof.derivative(1.0).abs().max(prof.second_derivative(1.0).abs())
        }
        KernelFamily::Custom(c) => c.derivative_bound?,
    };
    Some(nm2 / (4.0 * c))
}

/// Pointwise evaluation of W, W', W''.
#[derive(Debug, Clone)]
pub enum KernelProfile {
    Transformer { beta: f64 },
    Onsager { clamp: f64 },
    Opinion { p: f64 },
    Series(GegenbauerSeries),
}

impl KernelProfile {
    pub fn new(spec: &KernelSpec) -> Result<Self> {
        Ok(match &spec.family {
            KernelFamily::Transformer { beta } => KernelProfile::Transformer { beta: *beta },
            KernelFamily::Onsager => KernelProfile::Onsager { clamp: 1e-9 },
            KernelFamily::Opinion { p } => KernelProfile::Opinion { p: *p },
            KernelFamily::Heat { epsilon } => KernelProfile::Series(heat_series(spec.n, *epsilon)?),
            KernelFamily::Custom(c) => KernelProfile::Series(GegenbauerSeries::new(&custom_series(c)?)),
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            KernelProfile::Transformer { beta } => -(beta * t).exp() / beta,
            KernelProfile::Onsager { .. } => (1.0 - t * t).max(0.0).sqrt(),
            KernelProfile::Opinion { p } => -(1.0 + t).max(0.0).powf(*p),
            KernelProfile::Series(s) => s.value(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            KernelProfile::Transformer { beta } => -(beta * t).exp(),
            KernelProfile::Onsager { clamp } => {
                let t = t.clamp(-1.0 + clamp, 1.0 - clamp);
                -t / (1.0 - t * t).sqrt()
            }
            KernelProfile::Opinion { p } => -p * (1.0 + t).max(0.0).powf(p - 1.0),
            KernelProfile::Series(s) => s.derivative(t),
        }
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        match self {
            KernelProfile::Transformer { beta } => -beta * (beta * t).exp(),
            KernelProfile::Onsager { clamp } => {
                let t = t.clamp(-1.0 + clamp, 1.0 - clamp);
                -(1.0 - t * t).powf(-1.5)
            }
            KernelProfile::Opinion { p } => -p * (p - 1.0) * (1.0 + t).max(0.0).powf(p - 2.0),
            KernelProfile::Series(s) => s.second_derivative(t),
        }
    }

    /// True when W' has to be clamped at this inner product.
    pub fn is_clamped(&self, t: f64) -> bool {
        matches!(self, KernelProfile::Onsager { clamp } if t.abs() > 1.0 - clamp)
    }
}

/// g(t) = Σ ĝ_k (k+λ)/λ C_k^λ(t) with derivatives.
#[derive(Debug, Clone)]
pub struct GegenbauerSeries {
    lambda: f64,
    // a_k = ĝ_k (k+λ)/λ
    scaled: Vec<f64>,
}

impl GegenbauerSeries {
    pub fn new(coeffs: &ZonalCoefficients) -> Self {
        let lambda = coeffs.lambda();
        let scaled = coeffs.coeffs.iter().enumerate().map(|(k, c)| c * (k as f64 + lambda) / lambda).collect();
        Self { lambda, scaled }
    }

    fn sum(&self, order: usize, t: f64) -> f64 {
        // d^j/dt^j C_k^λ = 2^j (λ)_j C_{k-j}^{λ+j}
        let len = self.scaled.len();
        if len <= order {
            return 0.0;
        }
        let lam = self.lambda + order as f64;
        let mut poly = vec![0.0; len - order];
        specfun::gegenbauer_fill(lam, t, &mut poly);
        let mut factor = 1.0;
        for j in 0..order {
            factor *= 2.0 * (self.lambda + j as f64);
        }
        factor * self.scaled[order..].iter().zip(&poly).map(|(a, p)| a * p).sum::<f64>()
    }

    pub fn value(&self, t: f64) -> f64 {
        self.sum(0, t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.sum(1, t)
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        self.sum(2, t)
    }

    pub fn degree(&self) -> usize {
        self.scaled.len() - 1
    }
}

/// Heat-kernel series truncated where the remaining terms fall below double precision.
pub fn heat_series(n: usize, epsilon: f64) -> Result<GegenbauerSeries> {
    let lambda = lambda_of(n);
    let nf = n as f64;
    let mut k_max = 0;
    let mut total = 0.0;
    loop {
        let kf = k_max as f64;
        let term = (-kf * (kf + nf - 2.0) * epsilon).exp() * (kf + lambda) / lambda * gegenbauer_at_one(k_max, lambda);
        total += term;
        if k_max > 2 && term < 1e-17 * total {
            break;
        }
        k_max += 1;
        if k_max > HEAT_MAX_DEGREE {
            return Err(Error::Overflow(format!(
                "heat kernel with epsilon {epsilon} needs more than {HEAT_MAX_DEGREE} terms"
            )));
        }
    }
    let spec = KernelSpec::heat(n, epsilon)?;
    Ok(GegenbauerSeries::new(&closed_form_coefficients(&spec, k_max)?))
}

/// Samples of W on the nodes of `rule`.
pub fn sample_profile(spec: &KernelSpec, rule: Arc<QuadratureRule>) -> Result<ZonalProfile> {
    let prof = spec.profile()?;
    ZonalProfile::from_fn(rule, |t| prof.value(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn onsager_examples() {
        let c = closed_form_coefficients(&KernelSpec::onsager(3).unwrap(), 8).unwrap();
        assert!((c.coeffs[2] + PI / 32.0).abs() < 1e-15);
        assert!((c.coeffs[0] - PI / 4.0).abs() < 1e-15);
        for k in [1, 3, 5, 7] {
            assert_eq!(c.coeffs[k], 0.0);
        }
    }

    #[test]
    fn opinion_vanishes_above_integer_p() {
        let c = closed_form_coefficients(&KernelSpec::opinion(3, 2.0).unwrap(), 6).unwrap();
        assert_eq!(c.coeffs[3], 0.0);
        assert_eq!(c.coeffs[6], 0.0);
        assert!(c.coeffs[1] < 0.0 && c.coeffs[2] < 0.0);
        // -(1+t)² = -1 - 2t - t², so ĝ_0 = -1 - 1/3
        assert!((c.coeffs[0] + 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn coefficient_examples() {
        let c = coefficients(&KernelSpec::transformer(3, 1.0).unwrap(), 4).unwrap();
        assert!((c.coeffs[0] + 1f64.sinh()).abs() < 1e-14);
        let c = coefficients(&KernelSpec::heat(3, 0.5).unwrap(), 4).unwrap();
        assert!((c.coeffs[1] + (-1f64).exp() / (4.0 * PI)).abs() < 1e-16);
        let c = coefficients(&KernelSpec::custom_fn(3, |_| 1.0, None).unwrap(), 5).unwrap();
        assert!((c.coeffs[0] - 1.0).abs() < 1e-14);
        assert!(c.coeffs[1..].iter().all(|x| x.abs() < 1e-14));
        assert!(closed_form_coefficients(&KernelSpec::custom_fn(3, |_| 1.0, None).unwrap(), 5).is_err());
    }

    #[test]
    fn stability_examples() {
        for beta in [0.1, 1.0, 5.0] {
            let c = coefficients(&KernelSpec::transformer(4, beta).unwrap(), 10).unwrap();
            assert_eq!(stability_check(&c), Stability::Unstable { first_negative: 0 });
        }
        let c = coefficients(&KernelSpec::custom_fn(3, |t| t * t, None).unwrap(), 10).unwrap();
        assert_eq!(stability_check(&c), Stability::Stable);
        let c = coefficients(&KernelSpec::heat(5, 0.2).unwrap(), 10).unwrap();
        assert!(matches!(stability_check(&c), Stability::Unstable { .. }));
    }

    #[test]
    fn convexity_examples() {
        let t = convexity_threshold(&KernelSpec::transformer(3, 2.0).unwrap()).unwrap();
        assert!((t - 1.0 / (4.0 * 2.0 * 2f64.exp())).abs() < 1e-15);
        let t = convexity_threshold(&KernelSpec::opinion(5, 3.0).unwrap()).unwrap();
        assert!((t - 3.0 / (4.0 * 12.0)).abs() < 1e-15);
        assert!(convexity_threshold(&KernelSpec::onsager(3).unwrap()).is_none());
        assert!(convexity_threshold(&KernelSpec::opinion(3, 1.5).unwrap()).is_none());
        assert!(convexity_threshold(&KernelSpec::custom_fn(3, |t| t, None).unwrap()).is_none());
        assert!(convexity_threshold(&KernelSpec::custom_fn(3, |t| t, Some(1.0)).unwrap()).is_some());
    }

    #[test]
    fn json_specs() {
        let s = KernelSpec::from_json(r#"{"n": 3, "family": "transformer", "beta": 1.5}"#).unwrap();
        assert!(matches!(s.family, KernelFamily::Transformer { beta } if beta == 1.5));
        assert!(KernelSpec::from_json(r#"{"n": 3, "family": "opinion"}"#).is_err());
        assert!(KernelSpec::from_json(r#"{"n": 2, "family": "onsager"}"#).is_err());
        let s = KernelSpec::from_json(r#"{"n": 4, "family": "custom", "profile": {"monomial": [0, 0, 1]}}"#).unwrap();
        let c = coefficients(&s, 4).unwrap();
        assert!(c.coeffs[0] > 0.0 && c.coeffs[2] > 0.0 && c.coeffs[1].abs() < 1e-14);
        let s = KernelSpec::from_json(r#"{"n": 3, "family": "custom", "profile": {"t": [-1, 1], "g": [0, 2]}}"#)
            .unwrap();
        let c = coefficients(&s, 2).unwrap();
        assert!((c.coeffs[0] - 1.0).abs() < 1e-13 && (c.coeffs[1] - 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn series_derivatives_match_closed_forms() {
        let spec = KernelSpec::transformer(5, 1.3).unwrap();
        let series = GegenbauerSeries::new(&closed_form_coefficients(&spec, 40).unwrap());
        let exact = spec.profile().unwrap();
        for t in [-0.9, -0.2, 0.4, 1.0] {
            assert!((series.value(t) - exact.value(t)).abs() < 1e-12);
            assert!((series.derivative(t) - exact.derivative(t)).abs() < 1e-11);
            assert!((series.second_derivative(t) - exact.second_derivative(t)).abs() < 1e-10);
        }
    }
}
