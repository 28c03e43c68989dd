use std::fmt::Write as _;

use serde_json::{json, Value};
use sphere_mv::io::{csv_row, fmt_f64};
use sphere_mv::kernels::{closed_form_with_warnings, coefficients, stability_check, KernelConfig};
use sphere_mv::meanfield::{gamma_sharp, linear_spectrum};
use sphere_mv::particles::{simulate as run_particles, AxisChoice};
use sphere_mv::solver::{
    bifurcation_points, find_transition, gibbs_fixed_point, mode_seed, trace_branch, FixedPoint,
};
use sphere_mv::{Error, ForceModel, KernelFamily, KernelSpec, ParticleEnsemble, SimConfig, ZonalDensity};

use crate::config::{Format, RunConfig};
use crate::CliError;

/// What a command produced: a CSV body with comment lines, or a JSON value.
pub struct Output {
    pub comments: Vec<String>,
    pub csv: String,
    pub json: Value,
    /// Error to report after the output has been written.
    pub deferred: Option<CliError>,
}

impl Output {
    fn new(csv: String, json: Value) -> Self {
        Self { comments: Vec::new(), csv, json, deferred: None }
    }

    pub fn render(&self, format: Format, command: &str, config: &RunConfig) -> String {
        match format {
            Format::Csv => {
                let mut out = format!("# sphere-mv {} {command}\n", env!("CARGO_PKG_VERSION"));
                let _ = writeln!(out, "# config: {}", serde_json::to_string(config).expect("config serializes"));
                for c in &self.comments {
                    let _ = writeln!(out, "# {c}");
                }
                out + &self.csv
            }
            Format::Json => {
                let doc = json!({ "command": command, "config": config, "result": self.json });
                serde_json::to_string_pretty(&doc).expect("output serializes") + "\n"
            }
        }
    }
}

fn kernel(cfg: &mut RunConfig) -> Result<KernelSpec, CliError> {
    let kc: KernelConfig = cfg.resolve_kernel()?;
    let order = *cfg.order.get_or_insert(96);
    Ok(kc.build_with_order(order)?)
}

pub fn decompose(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let solver = cfg.solver();
    let spec = kernel(cfg)?;
    let (coeffs, warnings) = match spec.family {
        KernelFamily::Custom(_) => (coefficients(&spec, solver.k_max)?, Vec::new()),
        _ => closed_form_with_warnings(&spec, solver.k_max)?,
    };
    let stability = stability_check(&coeffs);
    let sharp = gamma_sharp(&coeffs).ok();
    let mut out = Output::new(
        coeffs.to_csv(),
        json!({ "n": coeffs.n, "coeffs": coeffs.coeffs, "stability": stability, "gamma_sharp": sharp, "warnings": warnings }),
    );
    out.comments.extend(warnings.iter().map(|w| format!("warning: k = {}: {}", w.k, w.message)));
    Ok(out)
}

pub fn bifurcations(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let solver = cfg.solver();
    let spec = kernel(cfg)?;
    let coeffs = coefficients(&spec, solver.k_max)?;
    let bif = bifurcation_points(&coeffs)?;
    let mut csv = String::from("k,gamma,coeff\n");
    for p in &bif.points {
        let _ = writeln!(csv, "{},{},{}", p.k, fmt_f64(p.gamma), fmt_f64(p.coefficient));
    }
    let mut out = Output::new(csv, serde_json::to_value(&bif).expect("bifurcations serialize"));
    for t in &bif.ties {
        out.comments.push(format!("tie: degrees {t:?} share a coefficient and are not simple"));
    }
    Ok(out)
}

pub fn spectrum(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let solver = cfg.solver();
    let spec = kernel(cfg)?;
    let gamma = cfg.gamma.ok_or_else(|| CliError::invalid("--gamma is required"))?;
    let coeffs = coefficients(&spec, solver.k_max)?;
    let s = linear_spectrum(&coeffs, gamma, solver.k_max)?;
    let mut csv = String::from("l,eigenvalue\n");
    for (l, v) in s.eigenvalues.iter().enumerate() {
        let _ = writeln!(csv, "{l},{}", fmt_f64(*v));
    }
    let unstable: Vec<usize> = (1..s.eigenvalues.len()).filter(|&l| s.eigenvalues[l] > 0.0).collect();
    let mut out = Output::new(csv, json!({ "gamma": gamma, "eigenvalues": s.eigenvalues, "unstable": unstable }));
    out.comments.push(format!("unstable degrees: {unstable:?}"));
    Ok(out)
}

/// Degree of the first bifurcation, or None for a stable kernel.
fn first_mode(coeffs: &sphere_mv::ZonalCoefficients) -> Option<usize> {
    bifurcation_points(coeffs).ok().and_then(|b| b.points.first().map(|p| p.k))
}

fn fixed_point_json(fp: &FixedPoint, converged: bool) -> Value {
    let d = &fp.density;
    let (dominant_mode, amplitude) = d.dominant_mode();
    let k = d.coeffs().truncation();
    json!({
        "converged": converged,
        "residual": fp.residual,
        "iterations": fp.iterations,
        "energy": fp.energy,
        "dominant_mode": dominant_mode,
        "amplitude": amplitude,
        "harmonic_coefficients": (0..=k).map(|l| d.normalized_coefficient(l)).collect::<Vec<_>>(),
        "nodes": d.rule().nodes,
        "density": d.values(),
    })
}

pub fn solve(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let solver = cfg.solver();
    let spec = kernel(cfg)?;
    let gamma = cfg.gamma.ok_or_else(|| CliError::invalid("--gamma is required"))?;
    let coeffs = coefficients(&spec, solver.k_max)?;
    let mode = *cfg.mode.get_or_insert(first_mode(&coeffs).unwrap_or(0));
    let sign = *cfg.sign.get_or_insert(1.0);
    if sign != 1.0 && sign != -1.0 {
        return Err(CliError::invalid(format!("--sign must be +1 or -1, got {sign}")));
    }
    let basis = solver.basis(spec.n)?;
    let seed = if mode == 0 {
        ZonalDensity::uniform(basis)
    } else {
        mode_seed(basis, mode, sign, solver.seed_amplitude)?
    };
    let (fp, deferred) = match gibbs_fixed_point(&coeffs, gamma, &seed, &solver) {
        Ok(fp) => (fp, None),
        Err(Error::NotConverged(fp)) => {
            let err = CliError::from(Error::NotConverged(fp.clone()));
            (*fp, Some(err))
        }
        Err(e) => return Err(e.into()),
    };
    let converged = deferred.is_none();
    let mut csv = String::from("t,rho\n");
    for (t, v) in fp.density.rule().nodes.iter().zip(fp.density.values()) {
        let _ = writeln!(csv, "{}", csv_row(&[*t, *v]));
    }
    let mut out = Output::new(csv, fixed_point_json(&fp, converged));
    let e = &fp.energy;
    out.comments.push(format!(
        "converged: {converged}, residual: {}, iterations: {}",
        fmt_f64(fp.residual),
        fp.iterations
    ));
    out.comments.push(format!(
        "entropy: {}, interaction: {}, free_energy: {}",
        fmt_f64(e.entropy),
        fmt_f64(e.interaction),
        fmt_f64(e.free_energy)
    ));
    out.deferred = deferred;
    Ok(out)
}

pub fn branch(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let solver = cfg.solver();
    let spec = kernel(cfg)?;
    let coeffs = coefficients(&spec, solver.k_max)?;
    let mode = match cfg.mode {
        Some(m) => m,
        None => *cfg.mode.insert(first_mode(&coeffs).ok_or(Error::StableKernel { truncation: solver.k_max })?),
    };
    let mut grid = cfg.grid(20)?.ok_or_else(|| CliError::invalid("--gamma-min and --gamma-max are required"))?;
    if *cfg.reverse.get_or_insert(false) {
        grid.reverse();
    }
    let trace = trace_branch(&coeffs, mode, &grid, &solver)?;
    let mut out = Output::new(trace.to_csv(), serde_json::to_value(&trace).expect("trace serializes"));
    out.comments.push(format!("mode: {mode}, bifurcation gamma: {}", fmt_f64(trace.bifurcation_gamma)));
    if let Some(d) = &trace.diagnostic {
        out.comments.push(format!("diagnostic: {d}"));
    }
    Ok(out)
}

pub fn transition(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let solver = cfg.solver();
    let spec = kernel(cfg)?;
    let coeffs = coefficients(&spec, solver.k_max)?;
    if cfg.gamma_min.is_some() || cfg.gamma_max.is_some() {
        cfg.log_grid.get_or_insert(true);
    }
    let grid = cfg.grid(200)?;
    let report = find_transition(&coeffs, grid.as_deref(), &solver)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let [lo, hi] = report.gamma_c_bracket.map_or([None, None], |[a, b]| [Some(a), Some(b)]);
    let w = report.witness.as_ref();
    let kind = serde_json::to_value(report.kind).expect("kind serializes");
    let csv = format!(
        "type,gamma_sharp,gamma_c_lo,gamma_c_hi,witness,witness_mode,witness_energy_gap\n{},{},{},{},{},{},{}\n",
        kind.as_str().unwrap_or_default(),
        opt(report.gamma_sharp),
        opt(lo),
        opt(hi),
        w.map(|w| w.kind.as_str()).unwrap_or_default(),
        w.map(|w| w.dominant_mode.to_string()).unwrap_or_default(),
        opt(w.map(|w| w.energy_gap)),
    );
    let mut out = Output::new(csv, serde_json::to_value(&report).expect("report serializes"));
    out.comments.extend(report.diagnostics.iter().map(|d| format!("diagnostic: {d}")));
    Ok(out)
}

pub fn simulate(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let spec = kernel(cfg)?;
    let n = spec.n;
    let gamma = cfg.gamma.ok_or_else(|| CliError::invalid("--gamma is required (inf for no noise)"))?;
    let count = *cfg.particles.get_or_insert(1000);
    let steps = *cfg.steps.get_or_insert(1000);
    let d = SimConfig::default();
    let sim = SimConfig {
        dt: *cfg.dt.get_or_insert(d.dt),
        steps,
        gamma,
        seed: *cfg.seed.get_or_insert(0),
        burn_in: *cfg.burn_in.get_or_insert(d.burn_in),
        record_every: *cfg.record_every.get_or_insert((steps / 1000).max(1)),
    };
    let force_name = cfg.force.get_or_insert_with(|| "auto".into()).to_ascii_lowercase();
    let force_name = match force_name.as_str() {
        "auto" if count <= 2000 => "pairwise",
        "auto" => "truncated",
        other => other,
    }
    .to_string();
    let force = match force_name.as_str() {
        "pairwise" => ForceModel::pairwise(&spec)?,
        "truncated" => ForceModel::truncated(&spec, *cfg.degree.get_or_insert(8))?,
        other => return Err(CliError::invalid(format!("unknown force `{other}`, expected pairwise, truncated or auto"))),
    };
    cfg.force = Some(force_name);
    let mut pole = vec![0.0; n];
    pole[n - 1] = 1.0;
    let mut ens = match cfg.init.get_or_insert_with(|| "uniform".into()).as_str() {
        "uniform" => ParticleEnsemble::uniform(n, count, sim.seed)?,
        "pole" => ParticleEnsemble::concentrated(&pole, count, sim.seed)?,
        other => return Err(CliError::invalid(format!("unknown init `{other}`, expected uniform or pole"))),
    };
    let axis = match cfg.axis.get_or_insert_with(|| "principal".into()).as_str() {
        "principal" => AxisChoice::Principal,
        "pole" => AxisChoice::Fixed(pole),
        other => return Err(CliError::invalid(format!("unknown axis `{other}`, expected principal or pole"))),
    };
    let degrees = cfg.moments.get_or_insert_with(|| vec![1, 2, 4]).clone();
    let traj = run_particles(&mut ens, force, &sim, &degrees, &axis)?;
    if let Some(path) = &cfg.snapshot {
        let file = std::fs::File::create(path)
            .map_err(|e| CliError::invalid(format!("cannot create snapshot {}: {e}", path.display())))?;
        ens.write_snapshot(std::io::BufWriter::new(file))?;
    }
    let mut out = Output::new(traj.to_csv(), serde_json::to_value(&traj).expect("trajectory serializes"));
    for ((l, m), se) in traj.summary.degrees.iter().zip(&traj.summary.means).zip(&traj.summary.standard_errors) {
        out.comments.push(format!("moment {l}: mean {}, standard error {}", fmt_f64(*m), fmt_f64(*se)));
    }
    if traj.clamp_events > 0 {
        out.comments.push(format!("force derivative clamped {} times near t = ±1", traj.clamp_events));
    }
    Ok(out)
}
