//! Declarative experiment specs: parse a scenario file, run the named studies,
//! and emit trajectory CSVs, gnuplot scripts, and a pass/fail summary.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::analysis::{
    closeness, default_step, escape_study_trajectories, hpf_tracking_detail, simulate_scheme,
    uniformity_sweep,
};
use crate::cost::{constant, from_csv, paper_cost, quadratic, CostModel, PAPER_COST_X_STAR};
use crate::dynamics::{EsParams, PvPlant, Scheme};
use crate::error::{Error, Result};
use crate::fourier::{b1_half, find_equilibrium, sign_scan};
use crate::sim::{tail_metrics, time_to_enter, Trajectory, DEFAULT_DWELL, DEFAULT_TAIL_FRACTION};

/// A parsed scenario file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub cost: CostSpec,
    pub es: EsSpec,
    #[serde(default)]
    pub sim: SimSpec,
    pub x0: Option<f64>,
    #[serde(default)]
    pub runs: Vec<RunSpec>,
    #[serde(default)]
    pub studies: Vec<StudySpec>,
    pub plant: Option<PlantSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub label: String,
    pub h0: Option<f64>,
    pub amp: Option<f64>,
    pub center: Option<f64>,
    pub value: Option<f64>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsSpec {
    pub gamma: f64,
    pub delta: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    /// Horizon in dither periods; defaults to `60 / gamma`.
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    /// Row decimation for trajectory CSVs (metrics always use every sample).
    pub record_every: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub scheme: String,
    pub label: Option<String>,
    pub x0: Option<f64>,
    pub ybar0: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudySpec {
    /// Tail containment of one scheme in a band around the minimiser.
    Containment {
        name: Option<String>,
        scheme: String,
        x0: Option<f64>,
        delta: Option<f64>,
        horizon: Option<f64>,
        center: Option<f64>,
        radius: Option<f64>,
        max_entry_time: Option<f64>,
        max_tail_sup: Option<f64>,
    },
    /// Root of the averaged field inside a bracket, with a sign-scan fallback.
    Equilibrium {
        name: Option<String>,
        delta: Option<f64>,
        bracket: Option<[f64; 2]>,
        /// Asymmetry check: require `|root - x_star| > min_offset`.
        min_offset: Option<f64>,
    },
    /// sup |x - x_a| over `t_bar / gamma` for a list of gains; the first gain
    /// fits the linear constant `K` and the rest must stay under
    /// `margin * K * gamma`.
    Closeness {
        name: Option<String>,
        x0: Option<f64>,
        t_bar: f64,
        gammas: Vec<f64>,
        #[serde(default = "default_margin")]
        margin: f64,
    },
    /// Escape study over a list of dither amplitudes.
    Escape {
        name: Option<String>,
        x0: Option<f64>,
        horizon: Option<f64>,
        deltas: Vec<f64>,
        /// Target radii per delta; defaults to the deltas themselves.
        radii: Option<Vec<f64>>,
        expect_escape: Option<Vec<bool>>,
        stall_expect: Option<f64>,
        stall_tol: Option<f64>,
        stall_grad_tol: Option<f64>,
    },
    /// Classic vs HPF across cost magnitudes.
    Uniformity {
        name: Option<String>,
        h0: Vec<f64>,
        #[serde(default)]
        amp: f64,
        x0: Option<f64>,
        horizon: Option<f64>,
        min_classic_p2p_ratio: Option<f64>,
        hpf_entry_ratio_band: Option<[f64; 2]>,
    },
    /// Filter-state tracking residuals across cost magnitudes.
    HpfTracking {
        name: Option<String>,
        h0: Vec<f64>,
        #[serde(default)]
        amp: f64,
        x0: Option<f64>,
        horizon: Option<f64>,
        max_residual_ratio: Option<f64>,
    },
    /// Support oscillator against its closed-form solution.
    Oscillation {
        name: Option<String>,
        c: f64,
        x0: Option<f64>,
        horizon: Option<f64>,
        step: Option<f64>,
        rel_tol: Option<f64>,
        p2p_rel_tol: Option<f64>,
    },
    /// PV maximum-power-point tracking comparison.
    PvPower {
        name: Option<String>,
        z0: f64,
        horizon: Option<f64>,
        min_power_fraction: Option<f64>,
        #[serde(default)]
        require_hpf_beats_classic: bool,
    },
}

fn default_margin() -> f64 {
    1.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// Double pole of the critically damped voltage plant, rad/s.
    pub pole: Option<f64>,
    pub isc: Option<f64>,
    pub voc: Option<f64>,
    pub vt: Option<f64>,
    pub noise_bound: Option<f64>,
    pub seed: Option<u64>,
    pub omega: Option<f64>,
    pub v_max: Option<f64>,
}

/// One pass/fail row of `summary.csv`.
#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub study: String,
    pub check: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

/// What a spec run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub rows: Vec<SummaryRow>,
    pub all_pass: bool,
}

/// Loads and validates a scenario file.
pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path)?;
    let spec: ExperimentSpec = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    validate(&spec)?;
    Ok(spec)
}

fn validate(spec: &ExperimentSpec) -> Result<()> {
    EsParams::new(spec.es.gamma, spec.es.delta)
        .map_err(|e| Error::config("es", e.to_string()))?;
    let horizon_ok = |h: Option<f64>| h.is_none_or(|h| h >= 10.0);
    if !horizon_ok(spec.sim.horizon) {
        return Err(Error::config(
            "sim.horizon",
            "horizon must cover at least 10 dither periods",
        ));
    }
    build_cost(&spec.cost, None)?;
    let mut run_labels = std::collections::BTreeSet::new();
    for (i, run) in spec.runs.iter().enumerate() {
        let scheme = Scheme::parse(&run.scheme)
            .map_err(|_| Error::config(format!("runs[{i}].scheme"), format!("unknown scheme `{}`", run.scheme)))?;
        if !horizon_ok(run.horizon) {
            return Err(Error::config(
                format!("runs[{i}].horizon"),
                "horizon must cover at least 10 dither periods",
            ));
        }
        let label = run.label.clone().unwrap_or_else(|| format!("{}_{i}", scheme.name()));
        if !run_labels.insert(label.clone()) {
            return Err(Error::config(
                format!("runs[{i}].label"),
                format!("duplicate run label `{label}`"),
            ));
        }
    }
    let mut study_names = std::collections::BTreeSet::new();
    for (i, study) in spec.studies.iter().enumerate() {
        if let Some(name) = study_name(study) {
            if !study_names.insert(name.to_string()) {
                return Err(Error::config(
                    format!("studies[{i}].name"),
                    format!("duplicate study name `{name}`"),
                ));
            }
        }
    }
    for (i, study) in spec.studies.iter().enumerate() {
        for t in study_thresholds(study) {
            if !(t > 0.0) {
                return Err(Error::config(
                    format!("studies[{i}]"),
                    "thresholds must be positive",
                ));
            }
        }
        let h = match study {
            StudySpec::Containment { horizon, .. }
            | StudySpec::Escape { horizon, .. }
            | StudySpec::Uniformity { horizon, .. }
            | StudySpec::HpfTracking { horizon, .. }
            | StudySpec::Oscillation { horizon, .. }
            | StudySpec::PvPower { horizon, .. } => *horizon,
            _ => None,
        };
        if !horizon_ok(h) {
            return Err(Error::config(
                format!("studies[{i}].horizon"),
                "horizon must cover at least 10 dither periods",
            ));
        }
        if let StudySpec::Containment { scheme, .. } = study {
            Scheme::parse(scheme).map_err(|_| {
                Error::config(format!("studies[{i}].scheme"), format!("unknown scheme `{scheme}`"))
            })?;
        }
    }
    Ok(())
}

fn study_name(study: &StudySpec) -> Option<&str> {
    match study {
        StudySpec::Containment { name, .. }
        | StudySpec::Equilibrium { name, .. }
        | StudySpec::Closeness { name, .. }
        | StudySpec::Escape { name, .. }
        | StudySpec::Uniformity { name, .. }
        | StudySpec::HpfTracking { name, .. }
        | StudySpec::Oscillation { name, .. }
        | StudySpec::PvPower { name, .. } => name.as_deref(),
    }
}

fn study_thresholds(study: &StudySpec) -> Vec<f64> {
    match study {
        StudySpec::Containment {
            max_entry_time,
            max_tail_sup,
            radius,
            ..
        } => [*max_entry_time, *max_tail_sup, *radius].iter().flatten().copied().collect(),
        StudySpec::Equilibrium { min_offset, .. } => min_offset.iter().copied().collect(),
        StudySpec::Closeness { margin, .. } => vec![*margin],
        StudySpec::Escape { stall_tol, stall_grad_tol, .. } => {
            [*stall_tol, *stall_grad_tol].iter().flatten().copied().collect()
        }
        StudySpec::Uniformity {
            min_classic_p2p_ratio,
            hpf_entry_ratio_band,
            ..
        } => {
            let mut v: Vec<f64> = min_classic_p2p_ratio.iter().copied().collect();
            if let Some([a, b]) = hpf_entry_ratio_band {
                v.push(*a);
                v.push(*b);
            }
            v
        }
        StudySpec::HpfTracking { max_residual_ratio, .. } => {
            max_residual_ratio.iter().copied().collect()
        }
        StudySpec::Oscillation { rel_tol, p2p_rel_tol, .. } => {
            [*rel_tol, *p2p_rel_tol].iter().flatten().copied().collect()
        }
        StudySpec::PvPower { min_power_fraction, .. } => {
            min_power_fraction.iter().copied().collect()
        }
    }
}

/// Builds the cost named by a spec and reports its known minimiser.
pub fn build_cost(spec: &CostSpec, base_dir: Option<&Path>) -> Result<(CostModel, f64)> {
    match spec.label.as_str() {
        "paper_cost" => Ok((
            paper_cost(spec.h0.unwrap_or(10.0), spec.amp.unwrap_or(0.0)),
            PAPER_COST_X_STAR,
        )),
        "quadratic" => {
            let c = spec.center.unwrap_or(0.0);
            Ok((quadratic(c), c))
        }
        "constant" => Ok((constant(spec.value.unwrap_or(0.0)), 0.0)),
        "pv_default" => {
            let plant = PvPlant::default_panel();
            let (z_star, _) = plant.max_static_power(20001);
            let c = CostModel::new("pv_default", move |z| -plant.static_power(z));
            Ok((c, z_star))
        }
        "table" => {
            let rel = spec.path.as_ref().ok_or_else(|| {
                Error::config("cost.path", "table costs need a `path` to a CSV file")
            })?;
            let path = match base_dir {
                Some(d) if rel.is_relative() => d.join(rel),
                _ => rel.clone(),
            };
            let cost = from_csv(&path)?;
            // Grid argmin over the tabulated range as the minimiser hint.
            let text = fs::read_to_string(&path)?;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for line in text.lines().skip(1) {
                if let Some(x) = line.split(',').next().and_then(|s| s.trim().parse::<f64>().ok()) {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
            }
            let mut best = (lo, f64::INFINITY);
            for j in 0..=2000 {
                let x = lo + (hi - lo) * j as f64 / 2000.0;
                let v = cost.value(x);
                if v < best.1 {
                    best = (x, v);
                }
            }
            Ok((cost, best.0))
        }
        other => Err(Error::config(
            "cost.label",
            format!("unknown cost `{other}`; run `esx list` for the builtins"),
        )),
    }
}

/// Builds the PV plant from the optional `[plant]` overrides.
pub fn build_plant(spec: Option<&PlantSpec>, default_seed: u64) -> PvPlant {
    let mut plant = PvPlant::default_panel();
    plant.rng_seed = default_seed;
    if let Some(s) = spec {
        if let Some(p) = s.pole {
            plant.a_mat = [[0.0, 1.0], [-p * p, -2.0 * p]];
            plant.b_vec = [0.0, p * p];
        }
        let isc = s.isc.unwrap_or(5.0);
        let voc = s.voc.unwrap_or(20.0);
        let vt = s.vt.unwrap_or(2.0);
        if s.isc.is_some() || s.voc.is_some() || s.vt.is_some() {
            plant.q = std::sync::Arc::new(move |v: f64| (isc * (1.0 - ((v - voc) / vt).exp())).max(0.0));
        }
        if let Some(nb) = s.noise_bound {
            plant.noise_bound = nb;
        }
        if let Some(seed) = s.seed {
            plant.rng_seed = seed;
        }
        if let Some(omega) = s.omega {
            plant.time_scale = 2.0 * PI / omega;
        }
        if let Some(v_max) = s.v_max {
            plant.v_range = (0.0, v_max);
        }
    }
    plant
}

/// Stable, sorted listing of the built-in costs, schemes, and studies.
pub fn list_builtins() -> String {
    let mut out = String::new();
    out.push_str("costs:\n");
    out.push_str("  constant     value\n");
    out.push_str("  paper_cost   h0, amp\n");
    out.push_str("  pv_default   (negative static power of the default panel)\n");
    out.push_str("  quadratic    center\n");
    out.push_str("  table        path (CSV of x,h rows; monotone cubic interpolation)\n");
    out.push_str("schemes:\n");
    let mut names: Vec<&str> = Scheme::ALL.iter().map(|s| s.name()).collect();
    names.sort_unstable();
    for n in names {
        out.push_str("  ");
        out.push_str(n);
        out.push('\n');
    }
    out.push_str("studies:\n");
    for s in [
        "closeness",
        "containment",
        "equilibrium",
        "escape",
        "hpf_tracking",
        "oscillation",
        "pv_power",
        "uniformity",
    ] {
        out.push_str("  ");
        out.push_str(s);
        out.push('\n');
    }
    out
}

struct Ctx {
    cost: CostModel,
    x_star: f64,
    params: EsParams,
    x0: f64,
    horizon: f64,
    record_every: usize,
    plant: PvPlant,
}

/// Executes a scenario file. `out_override` (the CLI's `--out` / `ESX_OUT`)
/// replaces the spec's `output_dir`.
pub fn run(path: &Path, out_override: Option<&Path>) -> Result<RunOutcome> {
    let spec = load_spec(path)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let out_dir = match out_override {
        Some(d) => d.to_path_buf(),
        None => spec
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}_out", spec.name))),
    };
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("spec_echo.toml"), fs::read_to_string(path)?)?;

    let (cost, x_star) = build_cost(&spec.cost, Some(&base_dir))?;
    let params = EsParams::new(spec.es.gamma, spec.es.delta)?;
    let ctx = Ctx {
        cost,
        x_star,
        params,
        x0: spec.x0.unwrap_or(x_star),
        horizon: spec.sim.horizon.unwrap_or(60.0 / spec.es.gamma),
        record_every: spec.sim.record_every.unwrap_or(1),
        plant: build_plant(spec.plant.as_ref(), spec.seed),
    };

    // Plain trajectory runs.
    if !spec.runs.is_empty() {
        let mut gp = gnuplot_header(&format!("{} trajectories", spec.name));
        gp.push_str("plot ");
        for (i, run) in spec.runs.iter().enumerate() {
            let scheme = Scheme::parse(&run.scheme)?;
            let mut p = ctx.params;
            if let Some(g) = run.gamma {
                p.gamma = g;
            }
            if let Some(d) = run.delta {
                p.delta = d;
            }
            EsParams::new(p.gamma, p.delta)
                .map_err(|e| Error::config(format!("runs[{i}]"), e.to_string()))?;
            let step = run.step.or(spec.sim.step).unwrap_or_else(|| default_step(scheme));
            let horizon = run.horizon.unwrap_or(ctx.horizon);
            let plant = scheme.is_pv().then_some(&ctx.plant);
            let traj = simulate_scheme(
                scheme,
                &ctx.cost,
                &p,
                plant,
                run.x0.unwrap_or(ctx.x0),
                run.ybar0,
                horizon,
                step,
            )?;
            let label = run.label.clone().unwrap_or_else(|| format!("{}_{i}", scheme.name()));
            let file = format!("traj_{label}.csv");
            write_traj_csv(&out_dir.join(&file), &traj, ctx.record_every)?;
            if i > 0 {
                gp.push_str(", \\\n     ");
            }
            let _ = write!(gp, "'{file}' using 1:2 with lines title '{label}'");
        }
        gp.push('\n');
        fs::write(out_dir.join("trajectories.gp"), gp)?;
    }

    // Studies, each confined to its own subdirectory.
    let mut rows = Vec::new();
    for (i, study) in spec.studies.iter().enumerate() {
        rows.extend(run_study(study, i, &ctx, &out_dir)?);
    }

    if !rows.is_empty() {
        let mut csv = String::from("study,check,value,threshold,pass\n");
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{:.9e},{},{}",
                r.study, r.check, r.value, r.threshold, r.pass
            );
        }
        fs::write(out_dir.join("summary.csv"), csv)?;
    }

    let all_pass = rows.iter().all(|r| r.pass);
    Ok(RunOutcome {
        output_dir: out_dir,
        rows,
        all_pass,
    })
}

fn study_dir(out_dir: &Path, name: &str) -> Result<PathBuf> {
    let dir = out_dir.join(name);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn run_study(study: &StudySpec, index: usize, ctx: &Ctx, out_dir: &Path) -> Result<Vec<SummaryRow>> {
    match study {
        StudySpec::Containment {
            name,
            scheme,
            x0,
            delta,
            horizon,
            center,
            radius,
            max_entry_time,
            max_tail_sup,
        } => {
            let name = name.clone().unwrap_or_else(|| format!("containment_{index}"));
            let dir = study_dir(out_dir, &name)?;
            let scheme = Scheme::parse(scheme)?;
            let mut p = ctx.params;
            if let Some(d) = delta {
                p.delta = *d;
            }
            let center = center.unwrap_or(ctx.x_star);
            let radius = radius.unwrap_or(2.0 * p.delta);
            let horizon = horizon.unwrap_or(ctx.horizon);
            let x0 = x0.unwrap_or(ctx.x0);
            let traj = simulate_scheme(
                scheme, &ctx.cost, &p, None, x0, None, horizon, default_step(scheme),
            )?;
            write_traj_csv(&dir.join("trajectory.csv"), &traj, ctx.record_every)?;
            let entry = time_to_enter(&traj, 0, center, radius, DEFAULT_DWELL);
            let tail = tail_metrics(&traj, 0, DEFAULT_TAIL_FRACTION, center);

            let mut report = String::from("check,value\n");
            let _ = writeln!(report, "entered,{}", entry.is_some() as u8);
            let _ = writeln!(report, "entry_time,{}", fmt_opt(entry));
            let _ = writeln!(report, "tail_sup_dist,{:.16e}", tail.sup_dist);
            let _ = writeln!(report, "tail_peak_to_peak,{:.16e}", tail.peak_to_peak);
            let _ = writeln!(report, "tail_mean,{:.16e}", tail.mean);
            fs::write(dir.join(format!("{name}_report.csv")), report)?;

            let mut gp = gnuplot_header(&name);
            let _ = writeln!(
                gp,
                "plot 'trajectory.csv' using 1:2 with lines title '{}', \\\n     {} with lines dt 2 lc 'gray' title 'band', \\\n     {} with lines dt 2 lc 'gray' notitle",
                scheme.name(),
                center + radius,
                center - radius
            );
            fs::write(dir.join(format!("{name}.gp")), gp)?;

            let mut rows = Vec::new();
            if let Some(t) = max_entry_time {
                rows.push(SummaryRow {
                    study: name.clone(),
                    check: "entry_time".into(),
                    value: entry.unwrap_or(f64::INFINITY),
                    threshold: format!("<= {t}"),
                    pass: entry.is_some_and(|e| e <= *t),
                });
            }
            if let Some(s) = max_tail_sup {
                rows.push(SummaryRow {
                    study: name,
                    check: "tail_sup_dist".into(),
                    value: tail.sup_dist,
                    threshold: format!("<= {s}"),
                    pass: tail.sup_dist <= *s,
                });
            }
            Ok(rows)
        }

        StudySpec::Equilibrium {
            name,
            delta,
            bracket,
            min_offset,
        } => {
            let name = name.clone().unwrap_or_else(|| format!("equilibrium_{index}"));
            let dir = study_dir(out_dir, &name)?;
            let delta = delta.unwrap_or(ctx.params.delta);
            let [lo, hi] = bracket.unwrap_or([ctx.x_star - delta, ctx.x_star + delta]);
            let mut rows = Vec::new();
            let mut report = String::from("check,value\n");
            match find_equilibrium(&ctx.cost, delta, (lo, hi)) {
                Ok(root) => {
                    let residual = b1_half(&ctx.cost, root, delta)?;
                    let _ = writeln!(report, "root,{root:.16e}");
                    let _ = writeln!(report, "offset_from_x_star,{:.16e}", root - ctx.x_star);
                    let _ = writeln!(report, "b1_half_residual,{residual:.16e}");
                    rows.push(SummaryRow {
                        study: name.clone(),
                        check: "root_in_bracket_interior".into(),
                        value: root,
                        threshold: format!("in ({lo}; {hi})"),
                        pass: root > lo && root < hi,
                    });
                    if let Some(mo) = min_offset {
                        rows.push(SummaryRow {
                            study: name.clone(),
                            check: "asymmetric_offset".into(),
                            value: (root - ctx.x_star).abs(),
                            threshold: format!("> {mo}"),
                            pass: (root - ctx.x_star).abs() > *mo,
                        });
                    }
                }
                Err(Error::NoSignChange { .. }) => {
                    // The attractor may be a set: report the sign pattern.
                    let scan = sign_scan(&ctx.cost, delta, (lo, hi), 101)?;
                    let mut csv = String::from("x,b1_half\n");
                    for s in &scan {
                        let _ = writeln!(csv, "{:.16e},{:.16e}", s.x, s.b1_half);
                    }
                    fs::write(dir.join("sign_scan.csv"), csv)?;
                    let _ = writeln!(report, "root,nan");
                    let _ = writeln!(report, "sign_scan,see sign_scan.csv");
                    rows.push(SummaryRow {
                        study: name.clone(),
                        check: "root_in_bracket_interior".into(),
                        value: f64::NAN,
                        threshold: "sign change in bracket".into(),
                        pass: false,
                    });
                }
                Err(e) => return Err(e),
            }
            fs::write(dir.join(format!("{name}_report.csv")), report)?;
            let mut gp = gnuplot_header(&name);
            let _ = writeln!(
                gp,
                "# b1_half sign structure near the minimiser\nplot [{lo}:{hi}] 0 with lines lc 'gray' notitle"
            );
            fs::write(dir.join(format!("{name}.gp")), gp)?;
            Ok(rows)
        }

        StudySpec::Closeness {
            name,
            x0,
            t_bar,
            gammas,
            margin,
        } => {
            let name = name.clone().unwrap_or_else(|| format!("closeness_{index}"));
            let dir = study_dir(out_dir, &name)?;
            if gammas.is_empty() {
                return Err(Error::config("studies.closeness.gammas", "need at least one gamma"));
            }
            let x0 = x0.unwrap_or(ctx.x0);
            let mut rows = Vec::new();
            let mut report = String::from("gamma,horizon,sup_error\n");
            let mut fit_k = f64::NAN;
            for (j, &gamma) in gammas.iter().enumerate() {
                let p = EsParams::new(gamma, ctx.params.delta)?;
                let rep = closeness(&ctx.cost, &p, x0, *t_bar, crate::sim::DEFAULT_STEP)?;
                let _ = writeln!(report, "{gamma},{:.16e},{:.16e}", rep.horizon, rep.sup_error);
                let mut wcsv = String::from("window,sup\n");
                for (w, s) in rep.per_window.iter().enumerate() {
                    let _ = writeln!(wcsv, "{w},{s:.16e}");
                }
                fs::write(dir.join(format!("windows_gamma{j}.csv")), wcsv)?;
                if j == 0 {
                    fit_k = rep.sup_error / gamma;
                } else {
                    let bound = margin * fit_k * gamma;
                    rows.push(SummaryRow {
                        study: name.clone(),
                        check: format!("sup_error_gamma{gamma}"),
                        value: rep.sup_error,
                        threshold: format!("<= {bound:.6e}"),
                        pass: rep.sup_error <= bound,
                    });
                }
            }
            let _ = writeln!(report, "# fitted K = {fit_k:.16e}");
            fs::write(dir.join(format!("{name}_report.csv")), report)?;
            let mut gp = gnuplot_header(&name);
            gp.push_str("plot ");
            for (j, &gamma) in gammas.iter().enumerate() {
                if j > 0 {
                    gp.push_str(", \\\n     ");
                }
                let _ = write!(gp, "'windows_gamma{j}.csv' using 1:2 with lines title 'gamma={gamma}'");
            }
            gp.push('\n');
            fs::write(dir.join(format!("{name}.gp")), gp)?;
            Ok(rows)
        }

        StudySpec::Escape {
            name,
            x0,
            horizon,
            deltas,
            radii,
            expect_escape,
            stall_expect,
            stall_tol,
            stall_grad_tol,
        } => {
            let name = name.clone().unwrap_or_else(|| format!("escape_{index}"));
            let dir = study_dir(out_dir, &name)?;
            let x0 = x0.unwrap_or(ctx.x0);
            let horizon = horizon.unwrap_or(ctx.horizon);
            if let Some(r) = radii {
                if r.len() != deltas.len() {
                    return Err(Error::config(
                        "studies.escape.radii",
                        "must have one radius per delta",
                    ));
                }
            }
            let mut rows = Vec::new();
            let mut report = String::from("scheme,delta,escaped,entry_time,final_position,stall_location\n");
            let mut gp = gnuplot_header(&name);
            let _ = writeln!(gp, "set multiplot layout 1,{}", deltas.len());
            for (j, &delta) in deltas.iter().enumerate() {
                let radius = radii.as_ref().map(|r| r[j]).unwrap_or(delta);
                let verdicts = escape_study_trajectories(
                    &ctx.cost, &[delta], ctx.params.gamma, x0, ctx.x_star, Some(radius), horizon,
                )?;
                let _ = writeln!(gp, "set title 'delta = {delta}'");
                gp.push_str("plot ");
                for (vi, (v, traj)) in verdicts.iter().enumerate() {
                    let _ = writeln!(
                        report,
                        "{},{},{},{},{:.16e},{}",
                        v.scheme,
                        v.delta,
                        v.escaped as u8,
                        fmt_opt(v.entry_time),
                        v.final_position,
                        fmt_opt(v.stall_location)
                    );
                    let file = format!("traj_{}_d{j}.csv", v.scheme);
                    write_traj_csv(&dir.join(&file), traj, ctx.record_every)?;
                    if vi > 0 {
                        gp.push_str(", \\\n     ");
                    }
                    let _ = write!(gp, "'{file}' using 1:2 with lines title '{}'", v.scheme);

                    if v.scheme == Scheme::Classic {
                        if let Some(exp) = expect_escape.as_ref().and_then(|e| e.get(j)) {
                            rows.push(SummaryRow {
                                study: name.clone(),
                                check: format!("classic_escape_delta{delta}"),
                                value: v.escaped as u8 as f64,
                                threshold: format!("== {}", *exp as u8),
                                pass: v.escaped == *exp,
                            });
                        }
                    }
                    if v.scheme == Scheme::AvgTaylor1 {
                        if let (Some(at), Some(tol)) = (stall_expect, stall_tol) {
                            let loc = v.stall_location.unwrap_or(f64::NAN);
                            rows.push(SummaryRow {
                                study: name.clone(),
                                check: format!("taylor_stall_delta{delta}"),
                                value: loc,
                                threshold: format!("within {tol} of {at}"),
                                pass: (loc - at).abs() <= *tol,
                            });
                            if let Some(gt) = stall_grad_tol {
                                let g = ctx.cost.gradient(loc);
                                rows.push(SummaryRow {
                                    study: name.clone(),
                                    check: format!("taylor_stall_grad_delta{delta}"),
                                    value: g.abs(),
                                    threshold: format!("<= {gt}"),
                                    pass: g.abs() <= *gt,
                                });
                            }
                        }
                    }
                }
                gp.push('\n');
            }
            gp.push_str("unset multiplot\n");
            fs::write(dir.join(format!("{name}_report.csv")), report)?;
            fs::write(dir.join(format!("{name}.gp")), gp)?;
            Ok(rows)
        }

        StudySpec::Uniformity {
            name,
            h0,
            amp,
            x0,
            horizon,
            min_classic_p2p_ratio,
            hpf_entry_ratio_band,
        } => {
            let name = name.clone().unwrap_or_else(|| format!("uniformity_{index}"));
            let dir = study_dir(out_dir, &name)?;
            let x0 = x0.unwrap_or(ctx.x0);
            let horizon = horizon.unwrap_or(ctx.horizon);
            let table = uniformity_sweep(h0, *amp, &ctx.params, x0, ctx.x_star, horizon)?;
            let mut report =
                String::from("h0,classic_tail_p2p,classic_entry,hpf_tail_p2p,hpf_entry\n");
            for r in &table.rows {
                let _ = writeln!(
                    report,
                    "{},{:.16e},{},{:.16e},{}",
                    r.h0,
                    r.classic_tail_p2p,
                    fmt_opt(r.classic_entry),
                    r.hpf_tail_p2p,
                    fmt_opt(r.hpf_entry)
                );
            }
            let _ = writeln!(report, "# classic_p2p_ratio = {:.16e}", table.classic_p2p_ratio);
            let _ = writeln!(report, "# hpf_entry_ratio = {}", fmt_opt(table.hpf_entry_ratio));
            fs::write(dir.join(format!("{name}_report.csv")), report)?;

            // Panel layout: classic on the left, HPF on the right, one row
            // per magnitude.
            let mut gp = gnuplot_header(&name);
            let _ = writeln!(gp, "set multiplot layout {},2", table.rows.len());
            for r in &table.rows {
                for (scheme, tag) in [(Scheme::Classic, "classic"), (Scheme::Hpf, "hpf")] {
                    let cost = paper_cost(r.h0, *amp);
                    let traj = simulate_scheme(
                        scheme, &cost, &ctx.params, None, x0, None, horizon,
                        crate::sim::DEFAULT_STEP,
                    )?;
                    let file = format!("traj_{tag}_h0_{}.csv", r.h0);
                    write_traj_csv(&dir.join(&file), &traj, ctx.record_every)?;
                    let _ = writeln!(
                        gp,
                        "set title '{tag}, h0 = {}'\nplot '{file}' using 1:2 with lines notitle",
                        r.h0
                    );
                }
            }
            gp.push_str("unset multiplot\n");
            fs::write(dir.join(format!("{name}.gp")), gp)?;

            let mut rows = Vec::new();
            if let Some(min) = min_classic_p2p_ratio {
                rows.push(SummaryRow {
                    study: name.clone(),
                    check: "classic_p2p_ratio".into(),
                    value: table.classic_p2p_ratio,
                    threshold: format!(">= {min}"),
                    pass: table.classic_p2p_ratio >= *min,
                });
            }
            if let Some([lo, hi]) = hpf_entry_ratio_band {
                let ratio = table.hpf_entry_ratio.unwrap_or(f64::NAN);
                rows.push(SummaryRow {
                    study: name.clone(),
                    check: "hpf_entry_ratio".into(),
                    value: ratio,
                    threshold: format!("in [{lo}; {hi}]"),
                    pass: ratio >= *lo && ratio <= *hi,
                });
            }
            Ok(rows)
        }

        StudySpec::HpfTracking {
            name,
            h0,
            amp,
            x0,
            horizon,
            max_residual_ratio,
        } => {
            let name = name.clone().unwrap_or_else(|| format!("hpf_tracking_{index}"));
            let dir = study_dir(out_dir, &name)?;
            let x0 = x0.unwrap_or(ctx.x0);
            let horizon = horizon.unwrap_or(ctx.horizon);
            let mut residuals = Vec::new();
            let mut report =
                String::from("h0,tail_residual_avg,tail_residual_static,ybar0,ybar0_deviation\n");
            let mut gp = gnuplot_header(&name);
            let _ = writeln!(gp, "set multiplot layout 1,{}", h0.len());
            for &h in h0 {
                let cost = paper_cost(h, *amp);
                let d = hpf_tracking_detail(&cost, &ctx.params, x0, None, horizon)?;
                let t = d.report;
                let _ = writeln!(
                    report,
                    "{h},{:.16e},{:.16e},{:.16e},{:.16e}",
                    t.tail_residual_avg, t.tail_residual_static, t.ybar0, t.ybar0_deviation
                );
                residuals.push(t.tail_residual_avg);
                let f1 = format!("ybar_h0_{h}.csv");
                let f2 = format!("ybar_avg_h0_{h}.csv");
                write_traj_csv(&dir.join(&f1), &d.hpf, ctx.record_every.max(10))?;
                write_traj_csv(&dir.join(&f2), &d.avg, ctx.record_every)?;
                let _ = writeln!(
                    gp,
                    "set title 'h0 = {h}'\nplot '{f1}' using 1:3 with lines title 'ybar', \\\n     '{f2}' using 1:3 with lines title 'ybar_a'"
                );
            }
            gp.push_str("unset multiplot\n");
            fs::write(dir.join(format!("{name}_report.csv")), report)?;
            fs::write(dir.join(format!("{name}.gp")), gp)?;

            let mut rows = Vec::new();
            if let Some(max) = max_residual_ratio {
                let lo = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = residuals.iter().cloned().fold(0.0f64, f64::max);
                let ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
                rows.push(SummaryRow {
                    study: name.clone(),
                    check: "residual_ratio".into(),
                    value: ratio,
                    threshold: format!("< {max}"),
                    pass: ratio < *max,
                });
            }
            Ok(rows)
        }

        StudySpec::Oscillation {
            name,
            c,
            x0,
            horizon,
            step,
            rel_tol,
            p2p_rel_tol,
        } => {
            let name = name.clone().unwrap_or_else(|| format!("oscillation_{index}"));
            let dir = study_dir(out_dir, &name)?;
            let x0 = x0.unwrap_or(100.0);
            let horizon = horizon.unwrap_or(10.0);
            let step = step.unwrap_or(0.002);
            let cost = constant(*c);
            let traj = simulate_scheme(
                Scheme::SupportOsc, &cost, &ctx.params, None, x0, None, horizon, step,
            )?;
            let scale = ctx.params.gamma * c / (2.0 * PI);
            let mut max_rel = 0.0f64;
            let mut csv = String::from("t,x1,exact\n");
            for (i, &t) in traj.times().iter().enumerate() {
                let exact = x0 + scale * ((2.0 * PI * t).cos() - 1.0);
                let got = traj.row(i)[0];
                max_rel = max_rel.max(((got - exact) / exact).abs());
                if i % ctx.record_every == 0 {
                    let _ = writeln!(csv, "{t:.16e},{got:.16e},{exact:.16e}");
                }
            }
            fs::write(dir.join("oscillation.csv"), csv)?;
            let p2p = tail_metrics(&traj, 0, 1.0, x0).peak_to_peak;
            let p2p_expected = ctx.params.gamma * c / PI;

            let mut report = String::from("check,value\n");
            let _ = writeln!(report, "max_rel_error,{max_rel:.16e}");
            let _ = writeln!(report, "peak_to_peak,{p2p:.16e}");
            let _ = writeln!(report, "peak_to_peak_expected,{p2p_expected:.16e}");
            fs::write(dir.join(format!("{name}_report.csv")), report)?;
            let mut gp = gnuplot_header(&name);
            gp.push_str(
                "plot 'oscillation.csv' using 1:2 with lines title 'simulated', \\\n     'oscillation.csv' using 1:3 with lines dt 2 title 'closed form'\n",
            );
            fs::write(dir.join(format!("{name}.gp")), gp)?;

            let mut rows = Vec::new();
            if let Some(tol) = rel_tol {
                rows.push(SummaryRow {
                    study: name.clone(),
                    check: "max_rel_error".into(),
                    value: max_rel,
                    threshold: format!("<= {tol}"),
                    pass: max_rel <= *tol,
                });
            }
            if let Some(tol) = p2p_rel_tol {
                let err = (p2p - p2p_expected).abs();
                let bound = tol * ctx.params.gamma * c;
                rows.push(SummaryRow {
                    study: name.clone(),
                    check: "peak_to_peak_error".into(),
                    value: err,
                    threshold: format!("<= {bound:.6e}"),
                    pass: err <= bound,
                });
            }
            Ok(rows)
        }

        StudySpec::PvPower {
            name,
            z0,
            horizon,
            min_power_fraction,
            require_hpf_beats_classic,
        } => {
            let name = name.clone().unwrap_or_else(|| format!("pv_power_{index}"));
            let dir = study_dir(out_dir, &name)?;
            let horizon = horizon.unwrap_or(ctx.horizon);
            let plant = &ctx.plant;
            plant.validate()?;
            let (z_star, p_max) = plant.max_static_power(20001);

            // Static map panel.
            let mut map_csv = String::from("z,power\n");
            for j in 0..=400 {
                let z = plant.v_range.0 + (plant.v_range.1 - plant.v_range.0) * j as f64 / 400.0;
                let _ = writeln!(map_csv, "{z:.16e},{:.16e}", plant.static_power(z));
            }
            fs::write(dir.join("static_map.csv"), map_csv)?;

            let mut tail_means = std::collections::BTreeMap::new();
            let mut max_power = std::collections::BTreeMap::new();
            for scheme in [Scheme::PvClassic, Scheme::PvHpf] {
                let traj = simulate_scheme(
                    scheme, &ctx.cost, &ctx.params, Some(plant), *z0, None, horizon,
                    crate::sim::DEFAULT_STEP,
                )?;
                // Augment the recorded states with the clean output power.
                let file = format!("traj_{}.csv", scheme.name());
                let mut csv = String::from("t");
                for l in traj.labels() {
                    let _ = write!(csv, ",{l}");
                }
                csv.push_str(",power\n");
                let every = ctx.record_every;
                let mut powers = Vec::with_capacity(traj.len());
                for i in 0..traj.len() {
                    let p = plant.power_from_state(scheme, traj.row(i));
                    powers.push(p);
                    if i % every == 0 || i + 1 == traj.len() {
                        let _ = write!(csv, "{:.16e}", traj.times()[i]);
                        for v in traj.row(i) {
                            let _ = write!(csv, ",{v:.16e}");
                        }
                        let _ = writeln!(csv, ",{p:.16e}");
                    }
                }
                fs::write(dir.join(&file), csv)?;
                let start = ((1.0 - DEFAULT_TAIL_FRACTION) * powers.len() as f64) as usize;
                let tail = &powers[start.min(powers.len() - 1)..];
                tail_means.insert(
                    scheme.name(),
                    tail.iter().sum::<f64>() / tail.len() as f64,
                );
                max_power.insert(
                    scheme.name(),
                    powers.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                );
            }

            let mut report = String::from("check,value\n");
            let _ = writeln!(report, "p_max_static,{p_max:.16e}");
            let _ = writeln!(report, "z_star,{z_star:.16e}");
            for (k, v) in &tail_means {
                let _ = writeln!(report, "tail_mean_power_{k},{v:.16e}");
            }
            for (k, v) in &max_power {
                let _ = writeln!(report, "max_power_{k},{v:.16e}");
            }
            fs::write(dir.join(format!("{name}_report.csv")), report)?;

            let nhpf = Scheme::PvHpf.name();
            let nclassic = Scheme::PvClassic.name();
            let mut gp = gnuplot_header(&name);
            let _ = writeln!(gp, "set multiplot layout 2,2");
            let _ = writeln!(gp, "set title 'static map'\nplot 'static_map.csv' using 1:2 with lines notitle");
            let _ = writeln!(
                gp,
                "set title 'output power'\nplot 'traj_{nclassic}.csv' using 1:5 with lines title 'classic', \\\n     'traj_{nhpf}.csv' using 1:6 with lines title 'hpf'"
            );
            let _ = writeln!(
                gp,
                "set title 'commanded voltage'\nplot 'traj_{nclassic}.csv' using 1:2 with lines title 'classic', \\\n     'traj_{nhpf}.csv' using 1:2 with lines title 'hpf'"
            );
            let _ = writeln!(
                gp,
                "set title 'hpf filter state'\nplot 'traj_{nhpf}.csv' using 1:3 with lines title 'ybar'"
            );
            gp.push_str("unset multiplot\n");
            fs::write(dir.join(format!("{name}.gp")), gp)?;

            let mut rows = Vec::new();
            if let Some(frac) = min_power_fraction {
                let mean = tail_means[nhpf];
                rows.push(SummaryRow {
                    study: name.clone(),
                    check: "hpf_tail_power_fraction".into(),
                    value: mean / p_max,
                    threshold: format!(">= {frac}"),
                    pass: mean >= frac * p_max,
                });
            }
            if *require_hpf_beats_classic {
                rows.push(SummaryRow {
                    study: name.clone(),
                    check: "hpf_beats_classic_tail_mean".into(),
                    value: tail_means[nhpf] - tail_means[nclassic],
                    threshold: "> 0".into(),
                    pass: tail_means[nhpf] > tail_means[nclassic],
                });
            }
            Ok(rows)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.16e}"),
        None => "nan".into(),
    }
}

fn gnuplot_header(title: &str) -> String {
    format!(
        "set datafile separator ','\nset key autotitle columnhead noenhanced\nset grid\nset title '{title}'\n"
    )
}

fn write_traj_csv(path: &Path, traj: &Trajectory, every: usize) -> Result<()> {
    let every = every.max(1);
    let mut csv = String::from("t");
    for l in traj.labels() {
        let _ = write!(csv, ",{l}");
    }
    csv.push('\n');
    for i in 0..traj.len() {
        if i % every == 0 || i + 1 == traj.len() {
            let _ = write!(csv, "{:.16e}", traj.times()[i]);
            for v in traj.row(i) {
                let _ = write!(csv, ",{v:.16e}");
            }
            csv.push('\n');
        }
    }
    fs::write(path, csv)?;
    Ok(())
}
