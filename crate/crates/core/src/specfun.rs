//! Gamma, Gegenbauer and modified Bessel functions, plus Gauss–Jacobi quadrature.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_ln_gamma(x: f64) -> f64 {
    // valid for x >= 0.5
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Natural logarithm of Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(invalid(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_pos(x))
}

pub(crate) fn ln_gamma_pos(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x) = π / (sin(πx) Γ(1-x)), sin(πx) > 0 on (0, 1/2)
        PI.ln() - sin_pi(x).ln() - lanczos_ln_gamma(1.0 - x)
    } else {
        lanczos_ln_gamma(x)
    }
}

/// sin(πx) with exact argument reduction, so integers give exact zeros.
pub(crate) fn sin_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    let (r, sign) = if r > 1.0 { (r - 1.0, -1.0) } else { (r, 1.0) };
    let r = if r > 0.5 { 1.0 - r } else { r };
    sign * (PI * r).sin()
}

/// Γ evaluated in log space with its sign, valid on the whole real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignedLnGamma {
    Pole,
    Finite { ln_abs: f64, sign: f64 },
}

pub fn signed_ln_gamma(x: f64) -> SignedLnGamma {
    if x > 0.0 {
        return SignedLnGamma::Finite { ln_abs: ln_gamma_pos(x), sign: 1.0 };
    }
    if x == x.floor() {
        return SignedLnGamma::Pole;
    }
    let s = sin_pi(x);
    SignedLnGamma::Finite {
        ln_abs: PI.ln() - s.abs().ln() - ln_gamma_pos(1.0 - x),
        sign: s.signum(),
    }
}

/// C_k^λ(t) by the three-term recurrence.
pub fn gegenbauer_eval(k: usize, lambda: f64, t: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("gegenbauer argument {t}")));
    }
    if t.abs() > 1.0 {
        return Err(invalid(format!("gegenbauer argument {t} outside [-1, 1]")));
    }
    Ok(gegenbauer(k, lambda, t))
}

pub(crate) fn gegenbauer(k: usize, lambda: f64, t: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 2.0 * lambda * t;
    for m in 0..k - 1 {
        let m = m as f64;
        let next = (2.0 * (lambda + m + 1.0) * t * cur - (2.0 * lambda + m) * prev) / (m + 2.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Writes C_0^λ(t), …, C_K^λ(t) into `out` (length K+1).
pub(crate) fn gegenbauer_fill(lambda: f64, t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = 2.0 * lambda * t;
    for k in 2..out.len() {
        let m = (k - 2) as f64;
        out[k] = (2.0 * (lambda + m + 1.0) * t * out[k - 1] - (2.0 * lambda + m) * out[k - 2]) / (m + 2.0);
    }
}

/// C_k^λ(1) = Γ(k+2λ)/(Γ(2λ) k!).
pub fn gegenbauer_at_one(k: usize, lambda: f64) -> f64 {
    let k = k as f64;
    (ln_gamma_pos(k + 2.0 * lambda) - ln_gamma_pos(2.0 * lambda) - ln_gamma_pos(k + 1.0)).exp()
}

/// ∫_{-1}^1 [C_k^λ(t)]² (1-t²)^{λ-1/2} dt.
pub fn gegenbauer_norm_sq(k: usize, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let kf = k as f64;
    let ln = PI.ln() + (1.0 - 2.0 * lambda) * 2f64.ln() + ln_gamma_pos(kf + 2.0 * lambda)
        - ln_gamma_pos(kf + 1.0)
        - (kf + lambda).ln()
        - 2.0 * ln_gamma_pos(lambda);
    Ok(ln.exp())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("Gegenbauer index must be positive, got {lambda}")));
    }
    Ok(())
}

/// Modified Bessel function of the first kind I_ν(x) for ν, x ≥ 0.
///
/// The ascending series has only positive terms, so it stays accurate for
/// every argument that does not overflow.
pub fn bessel_i(nu: f64, x: f64) -> Result<f64> {
    if !nu.is_finite() || !x.is_finite() {
        return Err(Error::NonFinite(format!("bessel_i({nu}, {x})")));
    }
    if nu < 0.0 || x < 0.0 {
        return Err(invalid(format!("bessel_i requires nu, x >= 0, got ({nu}, {x})")));
    }
    if x == 0.0 {
        return Ok(if nu == 0.0 { 1.0 } else { 0.0 });
    }
    let lead = nu * (0.5 * x).ln() - ln_gamma_pos(nu + 1.0);
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut m = 0.0;
    loop {
        m += 1.0;
        term *= q / (m * (m + nu));
        sum += term;
        if term < 1e-17 * sum && m > 0.5 * x {
            break;
        }
        if !sum.is_finite() {
            return Err(Error::Overflow(format!("bessel_i({nu}, {x})")));
        }
    }
    let value = (lead + sum.ln()).exp();
    if !value.is_finite() {
        return Err(Error::Overflow(format!("bessel_i({nu}, {x})")));
    }
    Ok(value)
}

/// Gauss rule for the weight (1-t²)^{(n-3)/2} on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Gegenbauer index λ = (n-2)/2 matching the weight.
    pub fn lambda(&self) -> f64 {
        0.5 * (self.n as f64 - 2.0)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

pub fn gauss_jacobi_rule(n: usize, order: usize) -> Result<QuadratureRule> {
    if n < 3 {
        return Err(invalid(format!("sphere dimension n must be >= 3, got {n}")));
    }
    if order < 1 {
        return Err(invalid("quadrature order must be >= 1"));
    }
    let a = 0.5 * (n as f64 - 3.0);
    let (nodes, weights) = jacobi_nodes_weights(a, a, order)?;
    Ok(QuadratureRule { n, nodes, weights })
}

/// Nodes (ascending) and weights of the M-point Gauss rule for (1-t)^a (1+t)^b.
pub fn jacobi_nodes_weights(a: f64, b: f64, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(a > -1.0 && b > -1.0) {
        return Err(invalid(format!("Jacobi exponents must exceed -1, got ({a}, {b})")));
    }
    if m == 0 {
        return Err(invalid("quadrature order must be >= 1"));
    }
    let ab = a + b;
    let diag: Vec<f64> = (0..m)
        .map(|k| {
            let k = k as f64;
            if k == 0.0 {
                (b - a) / (ab + 2.0)
            } else {
                (b * b - a * a) / ((2.0 * k + ab) * (2.0 * k + ab + 2.0))
            }
        })
        .collect();
    // off[k-1] = sqrt(beta_k), k = 1..=m; the last one only enters the Newton step
    let off: Vec<f64> = (1..=m)
        .map(|k| {
            let k = k as f64;
            let s = 2.0 * k + ab;
            let beta = if k == 1.0 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                4.0 * k * (k + a) * (k + b) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0))
            };
            beta.sqrt()
        })
        .collect();
    let ln_mu0 = (ab + 1.0) * 2f64.ln() + ln_gamma_pos(a + 1.0) + ln_gamma_pos(b + 1.0) - ln_gamma_pos(ab + 2.0);
    let p0 = (-0.5 * ln_mu0).exp();

    let mut jac = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        jac[(i, i)] = diag[i];
        if i + 1 < m {
            jac[(i, i + 1)] = off[i];
            jac[(i + 1, i)] = off[i];
        }
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    nodes.sort_by(|x, y| x.total_cmp(y));

    // orthonormal recurrence: sqrt(b_{k+1}) p_{k+1} = (t - a_k) p_k - sqrt(b_k) p_{k-1}
    let eval = |t: f64| -> (f64, f64, f64) {
        let (mut p_prev, mut p) = (0.0, p0);
        let (mut d_prev, mut d) = (0.0, 0.0);
        let mut sum_sq = p * p;
        for k in 0..m {
            let back = if k == 0 { 0.0 } else { off[k - 1] };
            let fwd = off[k];
            let p_next = ((t - diag[k]) * p - back * p_prev) / fwd;
            let d_next = (p + (t - diag[k]) * d - back * d_prev) / fwd;
            p_prev = p;
            p = p_next;
            d_prev = d;
            d = d_next;
            if k + 1 < m {
                sum_sq += p * p;
            }
        }
        (p, d, sum_sq)
    };

    let mut weights = Vec::with_capacity(m);
    for t in nodes.iter_mut() {
        // one Newton correction on p_M, only when it stays inside the interval
        let (p, d, _) = eval(*t);
        if d != 0.0 {
            let cand = *t - p / d;
            if cand.abs() < 1.0 && (cand - *t).abs() < 1e-10 {
                *t = cand;
            }
        }
        let (_, _, sum_sq) = eval(*t);
        weights.push(1.0 / sum_sq);
    }
    Ok((nodes, weights))
}
