use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::branch::UNIFORM_TOL;
use super::resonance::{competitor_density, resonance_check, HarmonicCombination};
use super::{bifurcation_points, gibbs_fixed_point, SolverConfig};
use crate::error::{invalid, Error, Result};
use crate::harmonics::{norm_const, ZonalBasis, ZonalCoefficients};
use crate::meanfield::{entropy, free_energy, gamma_sharp, ZonalDensity};
use crate::specfun::gegenbauer_at_one;

const DEFAULT_GRID: usize = 200;
const SEED_STRENGTH: f64 = 3.0;
const MAX_SEED_MODES: usize = 4;
const BRACKET_WIDTH: f64 = 1e-3;
const PROBES: [f64; 2] = [1.02, 1.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionType {
    Discontinuous,
    ContinuousCandidate,
    None,
}

/// The state that beats the uniform one at the upper end of the bracket.
#[derive(Debug, Clone, Serialize)]
pub struct CompetitorWitness {
    /// "branch" for a converged fixed point, "competitor" for ρ̄(1+εξu).
    pub kind: String,
    pub description: String,
    pub gamma: f64,
    /// 𝓕_γ(state) - 𝓕_γ(ρ̄).
    pub energy_gap: f64,
    pub free_energy: f64,
    pub uniform_free_energy: f64,
    pub dominant_mode: usize,
    pub amplitude: f64,
    /// Fixed-point residual; absent for the explicit competitor.
    pub residual: Option<f64>,
    #[serde(skip)]
    pub density: Option<ZonalDensity>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionReport {
    pub gamma_sharp: Option<f64>,
    pub gamma_c_bracket: Option<[f64; 2]>,
    #[serde(rename = "type")]
    pub kind: TransitionType,
    pub witness: Option<CompetitorWitness>,
    /// Explicit competitor ρ̄(1+εξu) when a resonance condition holds.
    pub competitor: Option<CompetitorSummary>,
    pub grid_points: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompetitorSummary {
    pub u: HarmonicCombination,
    pub u3: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// Energy gap of the competitor at γ_#.
    pub gap_at_gamma_sharp: f64,
}

impl TransitionReport {
    fn none(gamma_sharp: Option<f64>, grid_points: usize, diagnostics: Vec<String>) -> Self {
        Self {
            gamma_sharp,
            gamma_c_bracket: None,
            kind: TransitionType::None,
            witness: None,
            competitor: None,
            grid_points,
            diagnostics,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A seed family: strongly ordered start along ±Y_k, continued downward in γ.
#[derive(Debug, Clone, Copy)]
struct Family {
    mode: usize,
    sign: f64,
}

struct Sweep {
    family: Family,
    // (grid index, gap, state) for every converged non-uniform point
    states: Vec<(usize, f64, ZonalDensity, f64)>,
    note: Option<String>,
}

struct Competitor {
    summary: CompetitorSummary,
    density: ZonalDensity,
    entropy: f64,
    dint: f64,
}

impl Competitor {
    fn gap(&self, gamma: f64) -> f64 {
        self.entropy / gamma + self.dint
    }
}

fn strong_seed(basis: Arc<ZonalBasis>, f: Family) -> Result<ZonalDensity> {
    let sup = norm_const(f.mode, basis.n()) * gegenbauer_at_one(f.mode, basis.lambda());
    ZonalDensity::gibbs(basis, &[(f.mode, f.sign * SEED_STRENGTH / sup)])
}

fn solve_gap(
    kernel: &ZonalCoefficients,
    gamma: f64,
    seed: &ZonalDensity,
    config: &SolverConfig,
    uniform_energy: f64,
) -> Result<Option<(f64, ZonalDensity, f64)>> {
    match gibbs_fixed_point(kernel, gamma, seed, config) {
        Ok(fp) if fp.density.anisotropy() > UNIFORM_TOL => {
            Ok(Some((fp.energy.free_energy - uniform_energy, fp.density, fp.residual)))
        }
        Ok(_) | Err(Error::NotConverged(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn sweep(
    kernel: &ZonalCoefficients,
    grid: &[f64],
    basis: Arc<ZonalBasis>,
    family: Family,
    config: &SolverConfig,
    uniform_energy: f64,
) -> Result<Sweep> {
    let mut out = Sweep { family, states: Vec::new(), note: None };
    let mut seed = strong_seed(basis, family)?;
    for i in (0..grid.len()).rev() {
        match solve_gap(kernel, grid[i], &seed, config, uniform_energy)? {
            Some((gap, rho, res)) => {
                seed = rho.clone();
                out.states.push((i, gap, rho, res));
            }
            None => {
                out.note = Some(format!(
                    "mode {} sign {:+}: no ordered state at gamma = {:.6e}",
                    family.mode, family.sign, grid[i]
                ));
                break;
            }
        }
    }
    Ok(out)
}

fn default_grid(gamma_sharp: f64) -> Vec<f64> {
    let (lo, hi) = ((0.2 * gamma_sharp).ln(), gamma_sharp.ln());
    (0..DEFAULT_GRID)
        .map(|i| {
            if i + 1 == DEFAULT_GRID {
                gamma_sharp
            } else {
                (lo + (hi - lo) * i as f64 / (DEFAULT_GRID - 1) as f64).exp()
            }
        })
        .collect()
}

fn build_competitor(kernel: &ZonalCoefficients, basis: &Arc<ZonalBasis>, diagnostics: &mut Vec<String>) -> Option<Competitor> {
    let gs = gamma_sharp(kernel).ok()?;
    let mut deltas = vec![0.0];
    // bandwidth reaching the next distinct coefficient, as for localized kernels
    let min = gs.min_coefficient;
    let next = kernel.coeffs[1..]
        .iter()
        .filter(|&&c| c > min + 1e-12 * min.abs())
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if next < 0.0 {
        deltas.push(1.0 - next / min);
    }
    for delta in deltas {
        let Ok(report) = resonance_check(kernel, delta) else { continue };
        if !report.satisfied {
            continue;
        }
        let u = report.witness.clone()?;
        let sigma = basis.omega_n();
        let epsilon = if delta == 0.0 { 0.5f64.min(report.u3.abs() / (4.0 * sigma)) } else { delta.sqrt() };
        let density = match competitor_density(basis.clone(), &u, epsilon) {
            Ok(d) => d,
            Err(e) => {
                diagnostics.push(format!("competitor not admissible: {e}"));
                continue;
            }
        };
        let ent = entropy(&density);
        let dint: f64 = u.terms.iter().map(|&(l, c)| 0.5 * kernel.coeffs[l] * (epsilon * c).powi(2)).sum();
        let gap_at = ent / gs.gamma_sharp + dint;
        return Some(Competitor {
            summary: CompetitorSummary { u, u3: report.u3, delta, epsilon, gap_at_gamma_sharp: gap_at },
            density,
            entropy: ent,
            dint,
        });
    }
    diagnostics.push("no resonant competitor: resonance condition not satisfied".into());
    None
}

/// Scans γ for the point where a non-uniform state first beats the uniform one.
pub fn find_transition(
    kernel: &ZonalCoefficients,
    gamma_grid: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<TransitionReport> {
    config.validate()?;
    let gs = match gamma_sharp(kernel) {
        Ok(g) => g,
        Err(Error::StableKernel { .. }) => {
            return Ok(TransitionReport::none(
                None,
                0,
                vec!["kernel has no negative coefficient of degree >= 1; the uniform state is the unique minimizer".into()],
            ))
        }
        Err(e) => return Err(e),
    };
    let gamma_sharp = gs.gamma_sharp;
    let grid: Vec<f64> = match gamma_grid {
        Some(g) => g.to_vec(),
        None => default_grid(gamma_sharp),
    };
    if grid.len() < 2 {
        return Err(invalid("gamma grid needs at least two points"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) || !(grid[0] > 0.0) {
        return Err(invalid("gamma grid must be positive and strictly increasing"));
    }
    let basis = config.basis(kernel.n)?;
    let uniform = ZonalDensity::uniform(basis.clone());
    let uniform_energy = free_energy(kernel, &uniform, 1.0)?.interaction;
    let mut diagnostics = Vec::new();

    let competitor = build_competitor(kernel, &basis, &mut diagnostics);

    let mut families = Vec::new();
    let bif = bifurcation_points(kernel)?;
    for p in bif.points.iter().take(MAX_SEED_MODES) {
        families.push(Family { mode: p.k, sign: 1.0 });
        if p.k % 2 == 0 {
            families.push(Family { mode: p.k, sign: -1.0 });
        }
    }
    let sweeps: Vec<Sweep> = families
        .par_iter()
        .map(|&f| sweep(kernel, &grid, basis.clone(), f, config, uniform_energy))
        .collect::<Result<_>>()?;
    diagnostics.extend(sweeps.iter().filter_map(|s| s.note.clone()));

    // best gap per grid point, with the (sweep, state) it came from; None marks the competitor
    type Best = Option<(f64, Option<(usize, usize)>)>;
    let best_at = |i: usize| -> Best {
        let mut best: Best = None;
        for (si, s) in sweeps.iter().enumerate() {
            if let Some(pos) = s.states.iter().position(|st| st.0 == i) {
                let gap = s.states[pos].1;
                if best.map_or(true, |b| gap < b.0) {
                    best = Some((gap, Some((si, pos))));
                }
            }
        }
        if let Some(c) = &competitor {
            let gap = c.gap(grid[i]);
            if best.map_or(true, |b| gap < b.0) {
                best = Some((gap, None));
            }
        }
        best
    };
    let gaps: Vec<Best> = (0..grid.len()).map(best_at).collect();
    let crossing = gaps.iter().position(|g| g.is_some_and(|g| g.0 < 0.0));
    let step = grid[grid.len() - 1] - grid[grid.len() - 2];

    let Some(i) = crossing else {
        return probe_above(kernel, &grid, gamma_sharp, basis, config, uniform_energy, competitor, diagnostics);
    };
    if i == 0 {
        diagnostics.push(format!("a non-uniform state already beats the uniform one at the lowest grid point {}", grid[0]));
    }

    // bisection between the last non-negative and the first negative grid point
    let mut lo = if i == 0 { 0.0 } else { grid[i - 1] };
    let mut hi = grid[i];
    let (mut hi_gap, source) = gaps[i].expect("crossing has a gap");
    let family = source.map(|(si, _)| sweeps[si].family);
    // fixed point continued along the bracket, and whether it is the best state at `hi`
    let mut state: Option<(ZonalDensity, f64)> =
        source.map(|(si, pos)| (sweeps[si].states[pos].2.clone(), sweeps[si].states[pos].3));
    let mut state_is_best = source.is_some();
    if i > 0 {
        while hi - lo > BRACKET_WIDTH * hi {
            let mid = 0.5 * (lo + hi);
            let mut found: Option<(f64, ZonalDensity, f64)> = None;
            if let Some((rho, _)) = &state {
                found = solve_gap(kernel, mid, rho, config, uniform_energy)?;
            }
            let comp_gap = competitor.as_ref().map(|c| c.gap(mid));
            let state_gap = found.as_ref().map(|f| f.0);
            let best = match (state_gap, comp_gap) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            match best {
                Some(gap) if gap < 0.0 => {
                    hi = mid;
                    hi_gap = gap;
                    state_is_best = state_gap == Some(gap);
                    if let Some((_, rho, res)) = found {
                        state = Some((rho, res));
                    }
                }
                _ => lo = mid,
            }
        }
    }

    let witness = match (&state, family) {
        (Some((rho, res)), Some(f)) if state_is_best => {
            let (dominant_mode, amplitude) = rho.dominant_mode();
            Some(CompetitorWitness {
                kind: "branch".into(),
                description: format!("fixed point continued from exp({:+}·{}·Y_{}/|Y_{}|∞)", f.sign, SEED_STRENGTH, f.mode, f.mode),
                gamma: hi,
                energy_gap: hi_gap,
                free_energy: uniform_energy + hi_gap,
                uniform_free_energy: uniform_energy,
                dominant_mode,
                amplitude,
                residual: Some(*res),
                density: Some(rho.clone()),
            })
        }
        _ => competitor.as_ref().map(|c| competitor_witness(c, hi, uniform_energy)),
    };

    let kind = if hi <= gamma_sharp - step * (1.0 - 1e-9) && hi_gap < 0.0 {
        TransitionType::Discontinuous
    } else {
        TransitionType::ContinuousCandidate
    };
    Ok(TransitionReport {
        gamma_sharp: Some(gamma_sharp),
        gamma_c_bracket: Some([lo, hi]),
        kind,
        witness,
        competitor: competitor.map(|c| c.summary),
        grid_points: grid.len(),
        diagnostics,
    })
}

fn competitor_witness(c: &Competitor, gamma: f64, uniform_energy: f64) -> CompetitorWitness {
    let (dominant_mode, amplitude) = c.density.dominant_mode();
    let gap = c.gap(gamma);
    CompetitorWitness {
        kind: "competitor".into(),
        description: format!("rho_bar(1 + {:.6e} xi u) with U3 = {:.6e}", c.summary.epsilon, c.summary.u3),
        gamma,
        energy_gap: gap,
        free_energy: uniform_energy + gap,
        uniform_free_energy: uniform_energy,
        dominant_mode,
        amplitude,
        residual: None,
        density: Some(c.density.clone()),
    }
}

/// No crossing up to γ_#: look just above it for a lower-energy ordered state.
#[allow(clippy::too_many_arguments)]
fn probe_above(
    kernel: &ZonalCoefficients,
    grid: &[f64],
    gamma_sharp: f64,
    basis: Arc<ZonalBasis>,
    config: &SolverConfig,
    uniform_energy: f64,
    competitor: Option<Competitor>,
    mut diagnostics: Vec<String>,
) -> Result<TransitionReport> {
    let gs = gamma_sharp_modes(kernel);
    for factor in PROBES {
        let gamma = gamma_sharp * factor;
        for &mode in &gs {
            for sign in [1.0, -1.0] {
                let seed = super::mode_seed(basis.clone(), mode, sign, config.seed_amplitude)?;
                if let Some((gap, rho, res)) = solve_gap(kernel, gamma, &seed, config, uniform_energy)? {
                    if gap < 0.0 {
                        diagnostics.push(format!(
                            "no crossing below gamma_sharp; ordered state bifurcates at gamma_sharp (found at {gamma:.6e})"
                        ));
                        let (dominant_mode, amplitude) = rho.dominant_mode();
                        let lo = grid.iter().cloned().filter(|&g| g <= gamma_sharp).fold(0.0, f64::max);
                        return Ok(TransitionReport {
                            gamma_sharp: Some(gamma_sharp),
                            gamma_c_bracket: Some([lo, gamma]),
                            kind: TransitionType::ContinuousCandidate,
                            witness: Some(CompetitorWitness {
                                kind: "branch".into(),
                                description: format!("fixed point seeded along {sign:+}Y_{mode} above gamma_sharp"),
                                gamma,
                                energy_gap: gap,
                                free_energy: uniform_energy + gap,
                                uniform_free_energy: uniform_energy,
                                dominant_mode,
                                amplitude,
                                residual: Some(res),
                                density: Some(rho),
                            }),
                            competitor: competitor.map(|c| c.summary),
                            grid_points: grid.len(),
                            diagnostics,
                        });
                    }
                }
            }
        }
    }
    diagnostics.push("no non-uniform state with lower free energy found on the grid or just above gamma_sharp".into());
    let mut report = TransitionReport::none(Some(gamma_sharp), grid.len(), diagnostics);
    report.competitor = competitor.map(|c| c.summary);
    Ok(report)
}

fn gamma_sharp_modes(kernel: &ZonalCoefficients) -> Vec<usize> {
    gamma_sharp(kernel).map(|g| g.argmin).unwrap_or_default()
}
