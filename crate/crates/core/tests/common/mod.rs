#![allow(dead_code)]

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

/// Tanh-sinh quadrature of f over [-1, 1]; tolerates integrable endpoint singularities.
pub fn tanh_sinh(f: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / 64.0;
    let mut sum = 0.0;
    let mut k = 0i64;
    loop {
        let t = k as f64 * h;
        let u = 0.5 * PI * t.sinh();
        let x = u.tanh();
        if 1.0 - x.abs() < 1e-300 || t > 6.5 {
            break;
        }
        let w = 0.5 * PI * t.cosh() / (u.cosh() * u.cosh());
        let s = if k == 0 { w * f(0.0) } else { w * (f(x) + f(-x)) };
        sum += s;
        if k > 0 && s.abs() < 1e-18 * sum.abs() {
            break;
        }
        k += 1;
    }
    h * sum
}

/// C_k^λ(t) from the explicit hypergeometric sum, with term ratios in exact arithmetic form.
pub fn gegenbauer_sum(k: usize, lambda: f64, t: f64) -> f64 {
    gegenbauer_sum_scaled(k, lambda, t).0
}

/// The explicit sum together with the sum of absolute terms, which bounds its round-off.
pub fn gegenbauer_sum_scaled(k: usize, lambda: f64, t: f64) -> (f64, f64) {
    // leading term Γ(k+λ)/(Γ(λ) k!) (2t)^k
    let mut c: f64 = (0..k).map(|j| (lambda + j as f64) / (j as f64 + 1.0)).product();
    let (mut sum, mut scale) = (0.0, 0.0);
    for m in 0..=k / 2 {
        let term = c * (2.0 * t).powi((k - 2 * m) as i32);
        sum += term;
        scale += term.abs();
        let r = (k - 2 * m) as f64;
        c *= -r * (r - 1.0) / ((m as f64 + 1.0) * (k as f64 - m as f64 - 1.0 + lambda));
    }
    (sum, scale)
}

/// Surface area of S^{m-1} ⊂ R^m.
pub fn sphere_area(m: usize) -> f64 {
    2.0 * PI.powf(m as f64 / 2.0) / gamma(m as f64 / 2.0)
}

/// ∫_{S^{n-1}} g(⟨e, x⟩) dσ(x).
pub fn sphere_integral(n: usize, g: impl Fn(f64) -> f64) -> f64 {
    let e = 0.5 * (n as f64 - 3.0);
    sphere_area(n - 1) * tanh_sinh(|t| g(t) * (1.0 - t * t).powf(e))
}

/// A_l C_l^λ(1) for the zonal harmonic normalized by ω_n⁻¹∫Y² dσ = 1.
pub fn zonal_harmonic(l: usize, n: usize, t: f64) -> f64 {
    let lambda = 0.5 * (n as f64 - 2.0);
    let c = |t: f64| gegenbauer_sum(l, lambda, t);
    let norm = sphere_integral(n, |s| c(s) * c(s)) / sphere_area(n);
    c(t) / norm.sqrt()
}

/// (W * ρ)(x) = ∫ W(⟨x, y⟩) ρ(⟨e, y⟩) dσ(y) for ⟨e, x⟩ = t0, by nested quadrature.
pub fn brute_convolution(n: usize, w: impl Fn(f64) -> f64, rho: impl Fn(f64) -> f64, t0: f64) -> f64 {
    let r0 = (1.0 - t0 * t0).max(0.0).sqrt();
    let inner = |t: f64| {
        let r = (1.0 - t * t).max(0.0).sqrt();
        if n == 3 {
            // trapezoid in the azimuth is spectrally accurate for periodic integrands
            let m = 256;
            (0..m).map(|j| w(t * t0 + r * r0 * (2.0 * PI * j as f64 / m as f64).cos())).sum::<f64>() * 2.0 * PI / m as f64
        } else {
            let e = 0.5 * (n as f64 - 4.0);
            sphere_area(n - 2) * tanh_sinh(|s| w(t * t0 + r * r0 * s) * (1.0 - s * s).powf(e))
        }
    };
    let e = 0.5 * (n as f64 - 3.0);
    tanh_sinh(|t| rho(t) * inner(t) * (1.0 - t * t).powf(e))
}
