use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harmonics::{norm_const, omega, ZonalBasis, ZonalCoefficients};
use crate::meanfield::{check_gamma, entropy_of, gamma_sharp, ZonalDensity};
use crate::specfun::{gauss_jacobi_rule, gegenbauer};

/// Modes considered in the multi-mode resonance search.
const MAX_MODES: usize = 6;
const SUP_GRID: usize = 4001;
const COMPETITOR_ORDER: usize = 160;

/// u = Σ c_l Y_{l,0} in normalized harmonics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicCombination {
    pub n: usize,
    pub terms: Vec<(usize, f64)>,
}

impl HarmonicCombination {
    pub fn new(n: usize, terms: Vec<(usize, f64)>) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("sphere dimension n must be >= 3, got {n}")));
        }
        if terms.iter().any(|(_, c)| !c.is_finite()) {
            return Err(Error::NonFinite("harmonic combination coefficient".into()));
        }
        Ok(Self { n, terms })
    }

    /// Y_{l,0}/|Y_{l,0}|∞.
    pub fn unit_mode(n: usize, l: usize) -> Result<Self> {
        let lambda = 0.5 * (n as f64 - 2.0);
        let sup = norm_const(l, n) * crate::specfun::gegenbauer_at_one(l, lambda);
        Self::new(n, vec![(l, 1.0 / sup)])
    }

    pub fn value(&self, t: f64) -> f64 {
        let lambda = 0.5 * (self.n as f64 - 2.0);
        self.terms.iter().map(|&(l, c)| c * norm_const(l, self.n) * gegenbauer(l, lambda, t)).sum()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.0).max().unwrap_or(0)
    }

    /// ‖u‖² = Σ c_l² under the normalized inner product (distinct degrees).
    pub fn norm_sq(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c * c).sum()
    }

    /// sup_{t∈[-1,1]} |u(t)|, from a dense Chebyshev grid refined by golden section.
    pub fn sup_norm(&self) -> f64 {
        let ts: Vec<f64> = cheb_grid(SUP_GRID);
        let vals: Vec<f64> = ts.iter().map(|&t| self.value(t).abs()).collect();
        let (j, _) = vals.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let lo = ts[j.saturating_sub(1)].min(ts[(j + 1).min(ts.len() - 1)]);
        let hi = ts[j.saturating_sub(1)].max(ts[(j + 1).min(ts.len() - 1)]);
        let refined = golden_max(|t| self.value(t).abs(), lo, hi);
        refined.max(vals[j])
    }

    /// ∫ u³ dσ over the sphere.
    pub fn cube_integral(&self) -> f64 {
        let rule = gauss_jacobi_rule(self.n, 3 * self.degree() / 2 + 2).expect("n >= 3");
        omega(self.n - 1) * rule.integrate(|t| self.value(t).powi(3))
    }

    fn scaled(&self, s: f64) -> Self {
        Self { n: self.n, terms: self.terms.iter().map(|&(l, c)| (l, c * s)).collect() }
    }
}

fn cheb_grid(m: usize) -> Vec<f64> {
    (0..m).map(|j| (std::f64::consts::PI * j as f64 / (m - 1) as f64).cos()).collect()
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..80 {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    f(0.5 * (a + b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub satisfied: bool,
    /// Bandwidth δ used to build K_{#,δ} (relative to 1/γ_#).
    pub delta: f64,
    pub gamma_sharp: f64,
    /// K_{#,δ}, ordered by coefficient; at most six modes are searched.
    pub modes: Vec<usize>,
    /// Best u found, scaled to |u|∞ = 1.
    pub witness: Option<HarmonicCombination>,
    /// U₃ = ∫u³dσ with σ the surface measure of S^{n-1}.
    pub u3: f64,
    /// U₃/ω_n, the same integral against the normalized measure.
    pub u3_normalized: f64,
    /// min(¼, U₃²/(49 σ(S^{n-1})²)).
    pub bound: f64,
}

/// Tables of Y_l on the dense sup grid and on a Gauss rule, per mode.
struct ModeTables {
    n: usize,
    modes: Vec<usize>,
    dense: Vec<Vec<f64>>,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    om_sub: f64,
}

impl ModeTables {
    fn new(n: usize, modes: &[usize]) -> Self {
        let lambda = 0.5 * (n as f64 - 2.0);
        let deg = modes.iter().copied().max().unwrap_or(0);
        let rule = gauss_jacobi_rule(n, 3 * deg / 2 + 2).expect("n >= 3");
        let grid = cheb_grid(SUP_GRID);
        let y = |l: usize, t: f64| norm_const(l, n) * gegenbauer(l, lambda, t);
        Self {
            n,
            modes: modes.to_vec(),
            dense: modes.iter().map(|&l| grid.iter().map(|&t| y(l, t)).collect()).collect(),
            nodes: modes.iter().map(|&l| rule.nodes.iter().map(|&t| y(l, t)).collect()).collect(),
            weights: rule.weights.clone(),
            om_sub: omega(n - 1),
        }
    }

    /// U₃ of Σ c_i Y_{l_i} rescaled to unit sup norm (grid estimate).
    fn u3(&self, idx: &[usize], c: &[f64]) -> f64 {
        let combo = |table: &Vec<Vec<f64>>, j: usize| -> f64 { idx.iter().zip(c).map(|(&i, &ci)| ci * table[i][j]).sum() };
        let sup = (0..SUP_GRID).map(|j| combo(&self.dense, j).abs()).fold(0.0, f64::max);
        if sup == 0.0 {
            return 0.0;
        }
        let s: f64 = self.weights.iter().enumerate().map(|(j, w)| w * (combo(&self.nodes, j) / sup).powi(3)).sum();
        self.om_sub * s
    }

    fn combination(&self, idx: &[usize], c: &[f64]) -> HarmonicCombination {
        let raw = HarmonicCombination { n: self.n, terms: idx.iter().zip(c).map(|(&i, &ci)| (self.modes[i], ci)).collect() };
        let sup = raw.sup_norm();
        raw.scaled(1.0 / sup)
    }
}

fn direction(angles: &[f64]) -> Vec<f64> {
    match angles {
        [] => vec![1.0],
        [a] => vec![a.cos(), a.sin()],
        [a, b] => vec![a.cos(), a.sin() * b.cos(), a.sin() * b.sin()],
        _ => unreachable!("at most three modes are combined"),
    }
}

/// Maximizes |U₃| over unit directions in the span of the chosen modes.
fn search(tables: &ModeTables, idx: &[usize]) -> (f64, Vec<f64>) {
    let pi = std::f64::consts::PI;
    let dims = idx.len() - 1;
    let grid: Vec<Vec<f64>> = match dims {
        0 => vec![vec![]],
        1 => (0..180).map(|i| vec![pi * i as f64 / 180.0]).collect(),
        _ => (0..36)
            .flat_map(|i| (0..72).map(move |j| vec![pi * (i as f64 + 0.5) / 36.0, 2.0 * pi * j as f64 / 72.0]))
            .collect(),
    };
    let score = |a: &[f64]| tables.u3(idx, &direction(a)).abs();
    let mut best = grid
        .into_iter()
        .map(|a| (score(&a), a))
        .fold((f64::NEG_INFINITY, vec![]), |b, c| if c.0 > b.0 { c } else { b });
    // pattern search around the best grid point
    let mut step = if dims == 0 { 0.0 } else { pi / 90.0 };
    while step > 1e-7 {
        let mut improved = false;
        for d in 0..dims {
            for s in [-1.0, 1.0] {
                let mut a = best.1.clone();
                a[d] += s * step;
                let v = score(&a);
                if v > best.0 {
                    best = (v, a);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best.0, direction(&best.1))
}

/// Checks the relaxed resonance condition with bandwidth δ.
pub fn resonance_check(coeffs: &ZonalCoefficients, delta: f64) -> Result<ResonanceReport> {
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid(format!("bandwidth must lie in [0, 1), got {delta}")));
    }
    let gs = gamma_sharp(coeffs)?;
    let min = gs.min_coefficient;
    let threshold = (1.0 - delta) * min + 1e-12 * min.abs();
    let mut modes: Vec<usize> = (1..coeffs.coeffs.len()).filter(|&k| coeffs.coeffs[k] <= threshold).collect();
    modes.sort_by(|&a, &b| coeffs.coeffs[a].total_cmp(&coeffs.coeffs[b]).then(a.cmp(&b)));
    let searched: Vec<usize> = modes.iter().copied().take(MAX_MODES).collect();
    let tables = ModeTables::new(coeffs.n, &searched);

    let m = searched.len();
    let mut subsets: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    for i in 0..m {
        for j in i + 1..m {
            subsets.push(vec![i, j]);
            for k in j + 1..m {
                subsets.push(vec![i, j, k]);
            }
        }
    }
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for idx in subsets {
        let (v, c) = search(&tables, &idx);
        if best.as_ref().map_or(true, |b| v > b.0 + 1e-12) {
            best = Some((v, idx, c));
        }
    }
    let sigma = omega(coeffs.n);
    let (witness, u3) = match best {
        Some((v, idx, c)) if v > 1e-12 => {
            let mut u = tables.combination(&idx, &c);
            let mut u3 = u.cube_integral();
            if u3 < 0.0 {
                u = u.scaled(-1.0);
                u3 = -u3;
            }
            (Some(u), u3)
        }
        _ => (None, 0.0),
    };
    let bound = 0.25f64.min(u3 * u3 / (49.0 * sigma * sigma));
    Ok(ResonanceReport {
        satisfied: witness.is_some() && delta < bound,
        delta,
        gamma_sharp: gs.gamma_sharp,
        modes,
        witness,
        u3,
        u3_normalized: u3 / sigma,
        bound,
    })
}

/// ρ̄(1 + ε ξ u) with ξ = sign ∫u³dσ, on the given basis.
pub fn competitor_density(basis: Arc<ZonalBasis>, u: &HarmonicCombination, epsilon: f64) -> Result<ZonalDensity> {
    let xi = if u.cube_integral() < 0.0 { -1.0 } else { 1.0 };
    let terms: Vec<(usize, f64)> = u.terms.iter().map(|&(l, c)| (l, xi * epsilon * c)).collect();
    ZonalDensity::perturbed(basis, &terms)
}

/// 𝓕_γ(ρ̄(1+εξu)) - 𝓕_γ(ρ̄), with the interaction part taken from the exact
/// identity 𝓘(ρ̄(1+v)) - 𝓘(ρ̄) = ½ Σ_l Ŵ_l v̂_l² to avoid cancellation.
pub fn competitor_energy_gap(kernel: &ZonalCoefficients, u: &HarmonicCombination, epsilon: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if kernel.n != u.n {
        return Err(Error::DimensionMismatch { expected: u.n, found: kernel.n });
    }
    if u.degree() > kernel.truncation() {
        return Err(Error::TruncationExceeded { requested: u.degree(), available: kernel.truncation() });
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(invalid(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    if epsilon * u.sup_norm() >= 1.0 {
        return Err(invalid(format!("epsilon = {epsilon} makes the competitor density nonpositive")));
    }
    let order = COMPETITOR_ORDER.max(u.degree() + 2);
    let basis = Arc::new(ZonalBasis::new(u.n, u.degree(), order)?);
    let rho = competitor_density(basis.clone(), u, epsilon)?;
    let ent = entropy_of(&basis, rho.values());
    let dint: f64 = u.terms.iter().map(|&(l, c)| 0.5 * kernel.coeffs[l] * (epsilon * c).powi(2)).sum();
    Ok(ent / gamma + dint)
}

/// Relative bandwidth 1 - Ŵ_2/Ŵ_1 of the heat kernel at time ε.
pub fn heat_bandwidth(n: usize, epsilon: f64) -> f64 {
    -(-(n as f64 + 1.0) * epsilon).exp_m1()
}

/// Largest ε (to relative 1e-3) at which the heat kernel satisfies the
/// relaxed resonance condition with its own bandwidth; scans downward from
/// ε = 1 by halving, then bisects.
pub fn heat_epsilon_threshold(n: usize) -> Result<(f64, ResonanceReport)> {
    let check = |eps: f64| -> Result<ResonanceReport> {
        let spec = crate::kernels::KernelSpec::heat(n, eps)?;
        let c = crate::kernels::closed_form_coefficients(&spec, 8)?;
        resonance_check(&c, heat_bandwidth(n, eps))
    };
    let mut hi = 1.0;
    let mut lo = hi;
    let mut report = check(lo)?;
    let mut halvings = 0;
    while !report.satisfied {
        hi = lo;
        lo *= 0.5;
        report = check(lo)?;
        halvings += 1;
        if halvings > 80 {
            return Err(Error::NonFinite("no epsilon satisfies the resonance condition".into()));
        }
    }
    if halvings == 0 {
        return Ok((lo, report));
    }
    while (hi - lo) > 1e-3 * lo {
        let mid = (lo * hi).sqrt();
        let r = check(mid)?;
        if r.satisfied {
            lo = mid;
            report = r;
        } else {
            hi = mid;
        }
    }
    Ok((lo, report))
}
