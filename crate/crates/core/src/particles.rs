//! Interacting Langevin particles on S^{n-1}:
//! dX_i = -∇_{X_i} (1/N) Σ_j W(⟨X_i, X_j⟩) dt + √(2/γ) dB_i,
//! discretized by projected Euler–Maruyama with renormalization.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harmonics::{lambda_of, norm_const, ZonalCoefficients};
use crate::io::fmt_f64;
use crate::kernels::{coefficients, KernelProfile, KernelSpec};
use crate::specfun::gegenbauer;

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    n: usize,
    // row-major N × n
    positions: Vec<f64>,
    rng: ChaCha8Rng,
    generation: u64,
}

impl ParticleEnsemble {
    fn empty(n: usize, count: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("ambient dimension must be >= 2, got {n}")));
        }
        if count == 0 {
            return Err(invalid("ensemble must contain at least one particle"));
        }
        Ok(Self { n, positions: vec![0.0; n * count], rng: ChaCha8Rng::seed_from_u64(seed), generation: 0 })
    }

    /// Independent uniform points on the sphere.
    pub fn uniform(n: usize, count: usize, seed: u64) -> Result<Self> {
        let mut e = Self::empty(n, count, seed)?;
        for i in 0..count {
            loop {
                let mut norm = 0.0;
                for d in 0..n {
                    let z: f64 = e.rng.sample(StandardNormal);
                    e.positions[i * n + d] = z;
                    norm += z * z;
                }
                if norm > 1e-24 {
                    let s = 1.0 / norm.sqrt();
                    e.positions[i * n..(i + 1) * n].iter_mut().for_each(|v| *v *= s);
                    break;
                }
            }
        }
        Ok(e)
    }

    /// All particles at the unit vector `point`.
    pub fn concentrated(point: &[f64], count: usize, seed: u64) -> Result<Self> {
        let norm = point.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(invalid("concentration point must be nonzero"));
        }
        let mut e = Self::empty(point.len(), count, seed)?;
        for row in e.positions.chunks_mut(point.len()) {
            row.iter_mut().zip(point).for_each(|(r, p)| *r = p / norm);
        }
        Ok(e)
    }

    pub fn from_positions(points: &[Vec<f64>], seed: u64) -> Result<Self> {
        let n = points.first().map(|p| p.len()).ok_or_else(|| invalid("ensemble must contain at least one particle"))?;
        let mut e = Self::empty(n, points.len(), seed)?;
        for (row, p) in e.positions.chunks_mut(n).zip(points) {
            if p.len() != n {
                return Err(invalid("all particles need the same dimension"));
            }
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(invalid("particle positions must be nonzero and finite"));
            }
            row.iter_mut().zip(p).for_each(|(r, v)| *r = v / norm);
        }
        Ok(e)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.n..(i + 1) * self.n]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Writes positions as rows of n little-endian doubles.
    pub fn write_snapshot(&self, mut w: impl Write) -> Result<()> {
        for v in &self.positions {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Tangential force -(1/N) Σ_j W'(⟨x,x_j⟩)(x_j - ⟨x,x_j⟩x) by direct summation.
pub fn kernel_force(spec: &KernelSpec, x: &[f64], ensemble: &ParticleEnsemble) -> Result<Vec<f64>> {
    if x.len() != ensemble.n || spec.n != ensemble.n {
        return Err(Error::DimensionMismatch { expected: ensemble.n, found: x.len() });
    }
    let profile = spec.profile()?;
    let mut out = vec![0.0; x.len()];
    pairwise_force(&profile, x, ensemble, &mut out);
    Ok(out)
}

fn pairwise_force(profile: &KernelProfile, x: &[f64], ensemble: &ParticleEnsemble, out: &mut [f64]) -> usize {
    let n = ensemble.n;
    let mut grad = vec![0.0; n];
    let mut clamped = 0;
    for xj in ensemble.positions.chunks(n) {
        let t = dot(x, xj);
        if profile.is_clamped(t) {
            clamped += 1;
        }
        let d = profile.derivative(t);
        for k in 0..n {
            grad[k] += d * (xj[k] - t * x[k]);
        }
    }
    let inv = -1.0 / ensemble.len() as f64;
    for (o, g) in out.iter_mut().zip(&grad) {
        *o = inv * g;
    }
    project(out, x);
    clamped
}

fn project(v: &mut [f64], x: &[f64]) {
    let s = dot(v, x) / dot(x, x);
    v.iter_mut().zip(x).for_each(|(a, b)| *a -= s * b);
}

/// Exponent vectors of all monomials of total degree `d` in `n` variables.
fn exponents(n: usize, d: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![d]];
    }
    let mut out = Vec::new();
    for a in (0..=d).rev() {
        for mut rest in exponents(n - 1, d - a) {
            rest.insert(0, a);
            out.push(rest);
        }
    }
    out
}

fn multinomial(e: &[u32]) -> f64 {
    let mut total = 0u32;
    let mut r = 1.0;
    for &k in e {
        for i in 1..=k {
            total += 1;
            r *= total as f64 / i as f64;
        }
    }
    r
}

const LANES: usize = 8;
type Lane = [f64; LANES];

fn lane_mul(a: &Lane, b: &Lane) -> Lane {
    std::array::from_fn(|p| a[p] * b[p])
}

/// Homogeneous monomials of one degree, evaluated lane-wise from a table of powers x_v^e.
#[derive(Debug, Clone)]
struct Monomials {
    n: usize,
    exps: Vec<Vec<u32>>,
    // n offsets v·stride + e_v per monomial
    offs: Vec<usize>,
}

impl Monomials {
    fn new(n: usize, degree: u32, stride: usize) -> Self {
        let exps = exponents(n, degree);
        let offs = exps.iter().flat_map(|e| e.iter().enumerate().map(move |(v, &k)| v * stride + k as usize)).collect();
        Self { n, exps, offs }
    }

    fn len(&self) -> usize {
        self.exps.len()
    }

    fn index(&self, e: &[u32]) -> usize {
        self.exps.iter().position(|x| x == e).expect("monomial present")
    }

    fn eval(&self, pw: &[Lane], out: &mut [Lane]) {
        for (o, offs) in out.iter_mut().zip(self.offs.chunks_exact(self.n)) {
            let mut acc = pw[offs[0]];
            for &k in &offs[1..] {
                acc = lane_mul(&acc, &pw[k]);
            }
            *o = acc;
        }
    }
}

/// Terms of one parity, homogenized to degree D on the sphere:
/// Σ_m b_m ⟨x,y⟩^m (|x||y|)^{D-m} = Σ_{α,β} M_{αβ} x^α y^β.
#[derive(Debug, Clone)]
struct Homogeneous {
    grad: Monomials,
    mom: Monomials,
    kernel: Vec<f64>,
    // (α, i, α - e_i, α_i)
    deriv: Vec<(usize, usize, usize, f64)>,
    // gradient coefficients, n rows of grad.len()
    gcoef: Vec<f64>,
    offset: usize,
}

impl Homogeneous {
    fn new(n: usize, terms: &[(u32, f64)], stride: usize, offset: usize) -> Self {
        let d = terms.iter().map(|t| t.0).max().unwrap_or(1);
        let mom = Monomials::new(n, d, stride);
        let grad = Monomials::new(n, d - 1, stride);
        let len = mom.len();
        let mut kernel = vec![0.0; len * len];
        for &(m, b) in terms {
            let k = (d - m) / 2;
            let pad = exponents(n, k);
            for g in exponents(n, m) {
                let cg = b * multinomial(&g);
                for dl in &pad {
                    for ep in &pad {
                        let a: Vec<u32> = g.iter().zip(dl).map(|(x, y)| x + 2 * y).collect();
                        let bb: Vec<u32> = g.iter().zip(ep).map(|(x, y)| x + 2 * y).collect();
                        kernel[mom.index(&a) * len + mom.index(&bb)] += cg * multinomial(dl) * multinomial(ep);
                    }
                }
            }
        }
        let mut deriv = Vec::new();
        for (ai, a) in mom.exps.iter().enumerate() {
            for i in 0..n {
                if a[i] > 0 {
                    let mut e = a.clone();
                    e[i] -= 1;
                    deriv.push((ai, i, grad.index(&e), a[i] as f64));
                }
            }
        }
        let gcoef = vec![0.0; n * grad.len()];
        Self { grad, mom, kernel, deriv, gcoef, offset }
    }

    fn prepare(&mut self, moments: &[f64]) {
        let len = self.mom.len();
        let s = &moments[self.offset..self.offset + len];
        let c: Vec<f64> = self.kernel.chunks_exact(len).map(|row| row.iter().zip(s).map(|(a, b)| a * b).sum()).collect();
        let lg = self.grad.len();
        self.gcoef.iter_mut().for_each(|v| *v = 0.0);
        for &(a, i, g, f) in &self.deriv {
            self.gcoef[i * lg + g] += f * c[a];
        }
    }
}

/// Force of the kernel truncated to Gegenbauer degree L, computed through
/// empirical moments (1/N) Σ_j x_j^α of top degree in O(N) per step.
#[derive(Debug, Clone)]
pub struct TruncatedForce {
    n: usize,
    degree: usize,
    coeffs: ZonalCoefficients,
    stride: usize,
    parts: Vec<Homogeneous>,
    moment_len: usize,
}

impl TruncatedForce {
    pub fn new(spec: &KernelSpec, degree: usize) -> Result<Self> {
        let coeffs = coefficients(spec, degree)?;
        Self::from_coefficients(&coeffs)
    }

    pub fn from_coefficients(coeffs: &ZonalCoefficients) -> Result<Self> {
        let n = coeffs.n;
        let degree = coeffs.truncation();
        let lambda = lambda_of(n);
        // monomial coefficients b_m of Σ_k ĝ_k (k+λ)/λ C_k^λ(t)
        let mut b = vec![0.0; degree + 1];
        let mut prev = vec![0.0; degree + 1];
        let mut cur = vec![0.0; degree + 1];
        prev[0] = 1.0;
        if degree >= 1 {
            cur[1] = 2.0 * lambda;
        }
        for k in 0..=degree {
            let poly = if k == 0 { &prev } else { &cur };
            let a = coeffs.coeffs[k] * (k as f64 + lambda) / lambda;
            for (bm, p) in b.iter_mut().zip(poly.iter()) {
                *bm += a * p;
            }
            if k >= 1 && k < degree {
                let m = (k - 1) as f64;
                let mut next = vec![0.0; degree + 1];
                for j in 0..degree {
                    next[j + 1] += 2.0 * (lambda + m + 1.0) * cur[j];
                }
                for j in 0..=degree {
                    next[j] -= (2.0 * lambda + m) * prev[j];
                }
                next.iter_mut().for_each(|v| *v /= m + 2.0);
                prev = std::mem::replace(&mut cur, next);
            }
        }
        let stride = degree + 1;
        let mut parts = Vec::new();
        let mut moment_len = 0;
        for parity in [0, 1] {
            let terms: Vec<(u32, f64)> =
                (1..=degree).filter(|m| m % 2 == parity && b[*m] != 0.0).map(|m| (m as u32, b[m])).collect();
            if !terms.is_empty() {
                let h = Homogeneous::new(n, &terms, stride, moment_len);
                moment_len += h.mom.len();
                parts.push(h);
            }
        }
        Ok(Self { n, degree, coeffs: coeffs.clone(), stride, parts, moment_len })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Gegenbauer coefficients of the truncated kernel.
    pub fn coefficients(&self) -> &ZonalCoefficients {
        &self.coeffs
    }

    /// Power table x_v^e for up to LANES particles; unused lanes are zero.
    fn powers(&self, xs: &[f64], pw: &mut [Lane]) {
        let n = self.n;
        let m = xs.len() / n;
        for v in 0..n {
            let base: Lane = std::array::from_fn(|p| if p < m { xs[p * n + v] } else { 0.0 });
            pw[v * self.stride] = [1.0; LANES];
            for e in 1..self.stride {
                pw[v * self.stride + e] = lane_mul(&pw[v * self.stride + e - 1], &base);
            }
        }
    }

    fn accumulate(&self, pw: &[Lane], mono: &mut [Lane], out: &mut [Lane]) {
        for h in &self.parts {
            let len = h.mom.len();
            h.mom.eval(pw, &mut mono[..len]);
            for (o, m) in out[h.offset..h.offset + len].iter_mut().zip(&mono[..len]) {
                for p in 0..LANES {
                    o[p] += m[p];
                }
            }
        }
    }

    fn reduce(acc: &[Lane], count: usize, out: &mut [f64]) {
        let inv = 1.0 / count as f64;
        for (o, a) in out.iter_mut().zip(acc) {
            *o = a.iter().sum::<f64>() * inv;
        }
    }

    fn moments(&self, ensemble: &ParticleEnsemble, out: &mut [f64]) {
        let mut pw = vec![[0.0; LANES]; self.n * self.stride];
        let mut mono = vec![[0.0; LANES]; self.moment_len];
        let mut acc = vec![[0.0; LANES]; self.moment_len];
        for xs in ensemble.positions.chunks(self.n * LANES) {
            self.powers(xs, &mut pw);
            self.accumulate(&pw, &mut mono, &mut acc);
        }
        Self::reduce(&acc, ensemble.len(), out);
    }

    /// Loads the gradient of x ↦ (1/N) Σ_j W_L(⟨x,x_j⟩) for the given moments.
    fn prepare(&mut self, moments: &[f64]) {
        for h in &mut self.parts {
            h.prepare(moments);
        }
    }

    /// Euclidean gradients, one lane per particle, written to `out` (n lanes).
    fn gradient(&self, pw: &[Lane], mono: &mut [Lane], out: &mut [Lane]) {
        out.iter_mut().for_each(|v| *v = [0.0; LANES]);
        for h in &self.parts {
            let lg = h.grad.len();
            h.grad.eval(pw, &mut mono[..lg]);
            for (o, row) in out.iter_mut().zip(h.gcoef.chunks_exact(lg)) {
                for (c, m) in row.iter().zip(&mono[..lg]) {
                    for p in 0..LANES {
                        o[p] += c * m[p];
                    }
                }
            }
        }
    }

    /// Tangential force at x exerted by `ensemble`.
    pub fn force_on(&mut self, x: &[f64], ensemble: &ParticleEnsemble) -> Result<Vec<f64>> {
        if x.len() != self.n || ensemble.n != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.len() });
        }
        let mut mom = vec![0.0; self.moment_len];
        self.moments(ensemble, &mut mom);
        self.prepare(&mom);
        Ok(self.force_at(x))
    }

    fn force_at(&self, x: &[f64]) -> Vec<f64> {
        let mut pw = vec![[0.0; LANES]; self.n * self.stride];
        let mut mono = vec![[0.0; LANES]; self.moment_len];
        let mut g = vec![[0.0; LANES]; self.n];
        self.powers(x, &mut pw);
        self.gradient(&pw, &mut mono, &mut g);
        let mut f: Vec<f64> = g.iter().map(|l| -l[0]).collect();
        project(&mut f, x);
        f
    }
}

#[derive(Debug, Clone)]
pub enum ForceModel {
    /// Exact O(N²) pairwise summation.
    Pairwise(KernelProfile),
    /// Kernel truncated to a polynomial, O(N) per step.
    Truncated(Box<TruncatedForce>),
}

impl ForceModel {
    pub fn pairwise(spec: &KernelSpec) -> Result<Self> {
        Ok(ForceModel::Pairwise(spec.profile()?))
    }

    pub fn truncated(spec: &KernelSpec, degree: usize) -> Result<Self> {
        Ok(ForceModel::Truncated(Box::new(TruncatedForce::new(spec, degree)?)))
    }

    /// W ≡ 0: pure Brownian motion.
    pub fn zero(n: usize) -> Result<Self> {
        let w = ZonalCoefficients::new(n, vec![0.0])?;
        Ok(ForceModel::Truncated(Box::new(TruncatedForce::from_coefficients(&w)?)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub steps: usize,
    /// Inverse temperature; `f64::INFINITY` switches the noise off.
    pub gamma: f64,
    pub seed: u64,
    /// Fraction of steps discarded before averaging.
    pub burn_in: f64,
    /// Steps between recorded samples.
    pub record_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 1e-3, steps: 1000, gamma: 1.0, seed: 0, burn_in: 0.3, record_every: 10 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(invalid("steps must be >= 1"));
        }
        if !(self.gamma > 0.0) {
            return Err(invalid(format!("gamma must be positive (or infinite), got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(invalid(format!("burn-in fraction must lie in [0, 1), got {}", self.burn_in)));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every must be >= 1"));
        }
        Ok(())
    }
}

/// Reusable buffers for stepping an ensemble.
#[derive(Debug, Clone)]
pub struct Stepper {
    force: ForceModel,
    forces: Vec<f64>,
    noise: Vec<f64>,
    moments: Vec<f64>,
    moments_generation: Option<u64>,
    /// Number of Onsager derivative clamps applied so far.
    pub clamp_events: usize,
}

impl Stepper {
    pub fn new(force: ForceModel) -> Self {
        Self { force, forces: Vec::new(), noise: Vec::new(), moments: Vec::new(), moments_generation: None, clamp_events: 0 }
    }

    /// One step x ← normalize(x + dt·F(x) + √(2dt/γ)(ξ - ⟨ξ,x⟩x)).
    pub fn step(&mut self, ens: &mut ParticleEnsemble, cfg: &SimConfig) -> Result<()> {
        let n = ens.n;
        let count = ens.len();
        let noisy = cfg.gamma.is_finite();
        if noisy {
            self.noise.resize(n * count, 0.0);
            for z in self.noise.iter_mut() {
                *z = ens.rng.sample(StandardNormal);
            }
        }
        let scale = if noisy { (2.0 * cfg.dt / cfg.gamma).sqrt() } else { 0.0 };
        match &mut self.force {
            ForceModel::Pairwise(profile) => {
                self.forces.resize(n * count, 0.0);
                let mut clamped = 0;
                for i in 0..count {
                    let x = ens.positions[i * n..(i + 1) * n].to_vec();
                    clamped += pairwise_force(profile, &x, ens, &mut self.forces[i * n..(i + 1) * n]);
                }
                self.clamp_events += clamped;
                for i in 0..count {
                    let row = i * n..(i + 1) * n;
                    let noise = if noisy { Some(&self.noise[row.clone()]) } else { None };
                    advance(&mut ens.positions[row.clone()], &self.forces[row], noise, cfg.dt, scale, i)?;
                }
            }
            ForceModel::Truncated(tf) => {
                self.moments.resize(tf.moment_len, 0.0);
                if self.moments_generation != Some(ens.generation) {
                    tf.moments(ens, &mut self.moments);
                }
                tf.prepare(&self.moments);
                let tf = tf.as_ref();
                let mut acc = vec![[0.0; LANES]; tf.moment_len];
                let mut mono = vec![[0.0; LANES]; tf.moment_len];
                let mut pw = vec![[0.0; LANES]; n * tf.stride];
                let mut grad = vec![[0.0; LANES]; n];
                let mut f = vec![0.0; n];
                for (c, xs) in ens.positions.chunks_mut(n * LANES).enumerate() {
                    tf.powers(xs, &mut pw);
                    tf.gradient(&pw, &mut mono, &mut grad);
                    for (p, x) in xs.chunks_exact_mut(n).enumerate() {
                        let i = c * LANES + p;
                        f.iter_mut().zip(&grad).for_each(|(fv, g)| *fv = -g[p]);
                        project(&mut f, x);
                        let noise = if noisy { Some(&self.noise[i * n..(i + 1) * n]) } else { None };
                        advance(x, &f, noise, cfg.dt, scale, i)?;
                    }
                    tf.powers(xs, &mut pw);
                    tf.accumulate(&pw, &mut mono, &mut acc);
                }
                TruncatedForce::reduce(&acc, count, &mut self.moments);
            }
        }
        ens.generation += 1;
        if matches!(self.force, ForceModel::Truncated(_)) {
            self.moments_generation = Some(ens.generation);
        }
        Ok(())
    }
}

fn advance(x: &mut [f64], force: &[f64], noise: Option<&[f64]>, dt: f64, scale: f64, index: usize) -> Result<()> {
    let xi_par = noise.map_or(0.0, |z| dot(z, x));
    let mut norm = 0.0;
    for k in 0..x.len() {
        let z = noise.map_or(0.0, |z| z[k] - xi_par * x[k]);
        x[k] += dt * force[k] + scale * z;
        norm += x[k] * x[k];
    }
    if !(norm > 1e-24) || !norm.is_finite() {
        return Err(Error::DegenerateStep(format!("particle {index} vanished before normalization (norm² = {norm})")));
    }
    let s = 1.0 / norm.sqrt();
    x.iter_mut().for_each(|v| *v *= s);
    Ok(())
}

/// One projected Euler–Maruyama step with exact pairwise forces.
pub fn step(ensemble: &mut ParticleEnsemble, spec: &KernelSpec, config: &SimConfig) -> Result<()> {
    config.validate()?;
    if spec.n != ensemble.n {
        return Err(Error::DimensionMismatch { expected: ensemble.n, found: spec.n });
    }
    Stepper::new(ForceModel::pairwise(spec)?).step(ensemble, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub degrees: Vec<usize>,
    pub means: Vec<f64>,
    pub standard_errors: Vec<f64>,
}

/// Sample means of Y_{l,0}(⟨axis, x_j⟩) with i.i.d. standard errors.
pub fn empirical_moments(ensemble: &ParticleEnsemble, axis: &[f64], degrees: &[usize]) -> Result<MomentSummary> {
    if ensemble.is_empty() {
        return Err(invalid("empty ensemble"));
    }
    if axis.len() != ensemble.n {
        return Err(Error::DimensionMismatch { expected: ensemble.n, found: axis.len() });
    }
    if (dot(axis, axis).sqrt() - 1.0).abs() > 1e-9 {
        return Err(invalid("axis must be a unit vector"));
    }
    let n = ensemble.n;
    let count = ensemble.len() as f64;
    let lambda = lambda_of(n);
    let mut means = Vec::with_capacity(degrees.len());
    let mut ses = Vec::with_capacity(degrees.len());
    for &l in degrees {
        let a = norm_const(l, n);
        let (mut s, mut s2) = (0.0, 0.0);
        for x in ensemble.positions.chunks(n) {
            let y = a * gegenbauer(l, lambda, dot(axis, x).clamp(-1.0, 1.0));
            s += y;
            s2 += y * y;
        }
        let mean = s / count;
        let var = if count > 1.0 { ((s2 - count * mean * mean) / (count - 1.0)).max(0.0) } else { 0.0 };
        means.push(mean);
        ses.push((var / count).sqrt());
    }
    Ok(MomentSummary { degrees: degrees.to_vec(), means, standard_errors: ses })
}

/// Top eigenvector of (1/N) Σ x_j x_jᵀ, oriented so that Σ⟨axis, x_j⟩ ≥ 0.
pub fn principal_axis(ensemble: &ParticleEnsemble) -> Vec<f64> {
    let n = ensemble.n;
    let mut q = DMatrix::<f64>::zeros(n, n);
    for x in ensemble.positions.chunks(n) {
        for a in 0..n {
            for b in 0..n {
                q[(a, b)] += x[a] * x[b];
            }
        }
    }
    let eig = SymmetricEigen::new(q);
    let top = eig.eigenvalues.iamax();
    let mut axis: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let mean: f64 = ensemble.positions.chunks(n).map(|x| dot(x, &axis)).sum();
    if mean < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
    let norm = dot(&axis, &axis).sqrt();
    axis.iter_mut().for_each(|v| *v /= norm);
    axis
}

/// Time series of moments about the running principal axis.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub degrees: Vec<usize>,
    pub steps: Vec<usize>,
    /// rows aligned with `steps`, one column per degree
    pub moments: Vec<Vec<f64>>,
    /// Averages over recorded samples after burn-in with batch-means standard errors.
    pub summary: MomentSummary,
    pub clamp_events: usize,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step");
        for l in &self.degrees {
            let _ = write!(out, ",moment_{l}");
        }
        out.push('\n');
        for (s, row) in self.steps.iter().zip(&self.moments) {
            let _ = write!(out, "{s}");
            for v in row {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Where moments are measured from.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisChoice {
    /// Re-estimate the principal axis at every record.
    Principal,
    Fixed(Vec<f64>),
}

/// Runs `config.steps` steps, recording moments every `record_every` steps.
pub fn simulate(
    ensemble: &mut ParticleEnsemble,
    force: ForceModel,
    config: &SimConfig,
    degrees: &[usize],
    axis: &AxisChoice,
) -> Result<Trajectory> {
    config.validate()?;
    let mut stepper = Stepper::new(force);
    let burn = (config.burn_in * config.steps as f64).ceil() as usize;
    let mut steps = Vec::new();
    let mut rows = Vec::new();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for s in 1..=config.steps {
        stepper.step(ensemble, config)?;
        if s % config.record_every == 0 || s == config.steps {
            let ax = match axis {
                AxisChoice::Principal => principal_axis(ensemble),
                AxisChoice::Fixed(a) => a.clone(),
            };
            let m = empirical_moments(ensemble, &ax, degrees)?;
            if s > burn {
                kept.push(m.means.clone());
            }
            steps.push(s);
            rows.push(m.means);
        }
    }
    let summary = batch_means(degrees, &kept);
    Ok(Trajectory { degrees: degrees.to_vec(), steps, moments: rows, summary, clamp_events: stepper.clamp_events })
}

/// Mean and batch-means standard error (20 batches) per column.
fn batch_means(degrees: &[usize], samples: &[Vec<f64>]) -> MomentSummary {
    let cols = degrees.len();
    let m = samples.len();
    let mut means = vec![f64::NAN; cols];
    let mut ses = vec![f64::NAN; cols];
    if m > 0 {
        for c in 0..cols {
            means[c] = samples.iter().map(|r| r[c]).sum::<f64>() / m as f64;
        }
    }
    let batches = 20.min(m);
    if batches >= 2 {
        let size = m / batches;
        for c in 0..cols {
            let bm: Vec<f64> = (0..batches)
                .map(|b| samples[b * size..(b + 1) * size].iter().map(|r| r[c]).sum::<f64>() / size as f64)
                .collect();
            let mu = bm.iter().sum::<f64>() / batches as f64;
            let var = bm.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (batches - 1) as f64;
            ses[c] = (var / batches as f64).sqrt();
        }
    }
    MomentSummary { degrees: degrees.to_vec(), means, standard_errors: ses }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic 1% critical value 1.6276/√N.
    pub critical: f64,
    pub passed: bool,
}

/// Kolmogorov–Smirnov test of ⟨axis, x_j⟩ against the density ∝ (1-t²)^{(n-3)/2}.
pub fn latitude_ks(ensemble: &ParticleEnsemble, axis: &[f64]) -> Result<KsResult> {
    if axis.len() != ensemble.n {
        return Err(Error::DimensionMismatch { expected: ensemble.n, found: axis.len() });
    }
    if ensemble.n < 3 {
        return Err(invalid("latitude law needs n >= 3"));
    }
    let a = 0.5 * (ensemble.n as f64 - 3.0) + 1.0;
    let mut t: Vec<f64> = ensemble.positions.chunks(ensemble.n).map(|x| dot(axis, x).clamp(-1.0, 1.0)).collect();
    t.sort_by(|x, y| x.total_cmp(y));
    let count = t.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &ti) in t.iter().enumerate() {
        let cdf = statrs::function::beta::beta_reg(a, a, 0.5 * (1.0 + ti));
        d = d.max((i as f64 + 1.0) / count - cdf).max(cdf - i as f64 / count);
    }
    let critical = 1.6276 / count.sqrt();
    Ok(KsResult { statistic: d, critical, passed: d < critical })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transformer_pair_force() {
        let spec = KernelSpec::transformer(3, 1.0).unwrap();
        let ens = ParticleEnsemble::from_positions(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 0).unwrap();
        let f = kernel_force(&spec, ens.position(0), &ens).unwrap();
        // (1/N) e^0 y with N = 2
        assert!((f[0]).abs() < 1e-15 && (f[1] - 0.5).abs() < 1e-15 && f[2].abs() < 1e-15);
    }

    #[test]
    fn constant_kernel_has_no_force() {
        let spec = KernelSpec::custom_fn(3, |_| 2.0, None).unwrap();
        let ens = ParticleEnsemble::uniform(3, 20, 1).unwrap();
        for i in 0..ens.len() {
            let f = kernel_force(&spec, ens.position(i), &ens).unwrap();
            assert!(f.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(exponents(3, 4).len(), 15);
        assert_eq!(exponents(4, 3).len(), 20);
        let m = Monomials::new(3, 4, 5);
        let x = [0.3f64, -0.2, 0.5];
        let pw: Vec<Lane> = (0..3).flat_map(|v| (0..5).map(move |e| [x[v].powi(e); LANES])).collect();
        let mut out = vec![[0.0; LANES]; m.len()];
        m.eval(&pw, &mut out);
        let j = m.index(&[1, 2, 1]);
        assert!((out[j][3] - 0.3 * 0.04 * 0.5).abs() < 1e-16);
        assert_eq!(multinomial(&[1, 2, 1]), 12.0);
    }

    #[test]
    fn truncated_matches_pairwise_for_polynomial_kernel() {
        let spec = KernelSpec::opinion(4, 3.0).unwrap();
        let ens = ParticleEnsemble::uniform(4, 50, 9).unwrap();
        let mut tf = TruncatedForce::new(&spec, 3).unwrap();
        for i in [0, 17, 49] {
            let x = ens.position(i);
            let f = tf.force_on(x, &ens).unwrap();
            let exact = kernel_force(&spec, x, &ens).unwrap();
            for (a, b) in f.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn pole_moments_are_exact() {
        let ens = ParticleEnsemble::concentrated(&[0.0, 0.0, 1.0], 10, 0).unwrap();
        let m = empirical_moments(&ens, &[0.0, 0.0, 1.0], &[1, 2, 3]).unwrap();
        for (l, v) in m.degrees.iter().zip(&m.means) {
            let exact = norm_const(*l, 3) * gegenbauer(*l, 0.5, 1.0);
            assert!((v - exact).abs() < 1e-14);
        }
    }
}
