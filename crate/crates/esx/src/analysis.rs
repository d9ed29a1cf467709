//! Measured verdicts for the toolkit's stability and uniformity claims:
//! closeness of true and averaged trajectories, attractor containment,
//! saddle and local-minimum escape, Taylor-stall detection, and
//! cost-magnitude-uniformity comparisons.

use crate::cost::{paper_cost, CostModel};
use crate::dynamics::{build_system, initial_state, EsParams, PvPlant, Scheme};
use crate::error::{Error, Result};
use crate::fourier::a0_half;
use crate::sim::{
    integrate, tail_metrics, time_to_enter, Trajectory, DEFAULT_DWELL, DEFAULT_STEP,
    DEFAULT_TAIL_FRACTION,
};

/// Default step for the purely averaged (dither-free) systems: 1/20 of the
/// dither period. Their fields are smooth and slow, so RK4 stays far below
/// the quadrature tolerance while the runs shrink tenfold.
pub const DEFAULT_AVG_STEP: f64 = 1.0 / 20.0;

/// Speed threshold below which a trajectory counts as stalled.
pub const STALL_SPEED: f64 = 1e-8;

/// How long the speed must stay below [`STALL_SPEED`] (in dither periods).
pub const STALL_DWELL: f64 = 10.0;

/// Step a scheme is integrated with unless the caller overrides it.
pub fn default_step(scheme: Scheme) -> f64 {
    if scheme.is_dithered() {
        DEFAULT_STEP
    } else {
        DEFAULT_AVG_STEP
    }
}

/// Builds, initialises, and integrates one scheme.
#[allow(clippy::too_many_arguments)]
pub fn simulate_scheme(
    scheme: Scheme,
    cost: &CostModel,
    params: &EsParams,
    plant: Option<&PvPlant>,
    x0: f64,
    ybar0: Option<f64>,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    if scheme.is_dithered() && step > 1.0 / 50.0 {
        return Err(Error::invalid(
            "step",
            format!("{step} exceeds 1/50 of the dither period for scheme {scheme}"),
        ));
    }
    let mut sys = build_system(scheme, cost, params, plant)?;
    let s0 = initial_state(scheme, cost, params, plant, x0, ybar0)?;
    integrate(sys.as_mut(), &s0, t_end, step)
}

/// Measured counterpart of the closeness claim: the sup gap between the true
/// trajectory and the averaged one over the horizon `t_bar / gamma`.
#[derive(Clone, Debug)]
pub struct ClosenessReport {
    pub gamma: f64,
    /// Horizon in simulation time (`t_bar / gamma`).
    pub horizon: f64,
    pub sup_error: f64,
    /// Sup gap over each dither period of the horizon.
    pub per_window: Vec<f64>,
    pub diverged: bool,
}

/// Integrates the classic scheme and its Fourier average from the same `x0`
/// with matched steps and reports the sup gap at the common sample times.
pub fn closeness(
    cost: &CostModel,
    params: &EsParams,
    x0: f64,
    t_bar: f64,
    step: f64,
) -> Result<ClosenessReport> {
    if !(t_bar > 0.0) {
        return Err(Error::invalid("t_bar", "horizon must be positive"));
    }
    let horizon = t_bar / params.gamma;
    let classic = simulate_scheme(Scheme::Classic, cost, params, None, x0, None, horizon, step)?;
    let avg = simulate_scheme(Scheme::AvgFourier, cost, params, None, x0, None, horizon, step)?;
    let diverged = classic.diverged() || avg.diverged();
    let n = classic.len().min(avg.len());
    let mut sup = 0.0f64;
    let mut per_window = Vec::new();
    let mut window_end = 1.0;
    let mut window_sup = 0.0f64;
    for i in 0..n {
        let gap = (classic.row(i)[0] - avg.row(i)[0]).abs();
        sup = sup.max(gap);
        let t = classic.times()[i];
        if t > window_end {
            per_window.push(window_sup);
            window_sup = 0.0;
            window_end += 1.0;
        }
        window_sup = window_sup.max(gap);
    }
    per_window.push(window_sup);
    Ok(ClosenessReport {
        gamma: params.gamma,
        horizon,
        sup_error: if diverged { f64::NAN } else { sup },
        per_window,
        diverged,
    })
}

/// Containment verdict for one trajectory against a target band.
#[derive(Clone, Copy, Debug)]
pub struct Containment {
    pub entered: bool,
    pub entry_time: Option<f64>,
    /// Sup distance from the band centre over the trajectory tail.
    pub tail_sup_dist: f64,
}

/// Runs `scheme` and checks tail containment in `x_star +/- 2 delta`
/// (entry with the default dwell, tail over the default fraction).
pub fn containment(
    cost: &CostModel,
    params: &EsParams,
    scheme: Scheme,
    x0: f64,
    x_star: f64,
    t_end: f64,
) -> Result<Containment> {
    let traj = simulate_scheme(
        scheme,
        cost,
        params,
        None,
        x0,
        None,
        t_end,
        default_step(scheme),
    )?;
    let radius = 2.0 * params.delta;
    let entry = time_to_enter(&traj, 0, x_star, radius, DEFAULT_DWELL);
    let tail = tail_metrics(&traj, 0, DEFAULT_TAIL_FRACTION, x_star);
    Ok(Containment {
        entered: entry.is_some(),
        entry_time: entry,
        tail_sup_dist: tail.sup_dist,
    })
}

/// Verdict of one escape run.
#[derive(Clone, Copy, Debug)]
pub struct EscapeVerdict {
    pub scheme: Scheme,
    pub delta: f64,
    pub escaped: bool,
    pub entry_time: Option<f64>,
    pub final_position: f64,
    /// Where the trajectory stalled, when it did (speed below [`STALL_SPEED`]
    /// sustained for [`STALL_DWELL`] periods).
    pub stall_location: Option<f64>,
}

/// For each dither amplitude, runs the classic scheme, the Fourier average,
/// and the Taylor average from `x0` and marks escape by entry into
/// `x_star +/- target_radius` (defaulting to `delta`).
pub fn escape_study(
    cost: &CostModel,
    deltas: &[f64],
    gamma: f64,
    x0: f64,
    x_star: f64,
    target_radius: Option<f64>,
    t_end: f64,
) -> Result<Vec<EscapeVerdict>> {
    Ok(escape_study_trajectories(cost, deltas, gamma, x0, x_star, target_radius, t_end)?
        .into_iter()
        .map(|(v, _)| v)
        .collect())
}

/// [`escape_study`] keeping the simulated trajectories for plotting.
pub fn escape_study_trajectories(
    cost: &CostModel,
    deltas: &[f64],
    gamma: f64,
    x0: f64,
    x_star: f64,
    target_radius: Option<f64>,
    t_end: f64,
) -> Result<Vec<(EscapeVerdict, Trajectory)>> {
    let mut out = Vec::new();
    for &delta in deltas {
        let params = EsParams::new(gamma, delta)?;
        for scheme in [Scheme::Classic, Scheme::AvgFourier, Scheme::AvgTaylor1] {
            let step = default_step(scheme);
            let traj = simulate_scheme(scheme, cost, &params, None, x0, None, t_end, step)?;
            let radius = target_radius.unwrap_or(delta);
            let entry = time_to_enter(&traj, 0, x_star, radius, DEFAULT_DWELL);
            let verdict = EscapeVerdict {
                scheme,
                delta,
                escaped: entry.is_some(),
                entry_time: entry,
                final_position: traj.row(traj.len() - 1)[0],
                stall_location: detect_stall(&traj),
            };
            out.push((verdict, traj));
        }
    }
    Ok(out)
}

/// Final position of a trajectory whose trailing speed stayed below
/// [`STALL_SPEED`] for at least [`STALL_DWELL`] periods.
pub fn detect_stall(traj: &Trajectory) -> Option<f64> {
    let step = traj.step();
    if step <= 0.0 || traj.len() < 2 {
        return None;
    }
    let xs = traj.channel(0);
    let mut slow_time = 0.0;
    for i in (1..xs.len()).rev() {
        let speed = (xs[i] - xs[i - 1]).abs() / step;
        if speed >= STALL_SPEED {
            break;
        }
        slow_time += step;
    }
    if slow_time >= STALL_DWELL {
        Some(*xs.last().unwrap())
    } else {
        None
    }
}

/// One row of the cost-magnitude-uniformity comparison.
#[derive(Clone, Copy, Debug)]
pub struct UniformityRow {
    pub h0: f64,
    pub classic_tail_p2p: f64,
    pub classic_entry: Option<f64>,
    pub hpf_tail_p2p: f64,
    pub hpf_entry: Option<f64>,
}

/// The comparison table plus the headline ratios (largest `h0` over smallest).
#[derive(Clone, Debug)]
pub struct UniformityTable {
    pub rows: Vec<UniformityRow>,
    pub classic_p2p_ratio: f64,
    pub hpf_entry_ratio: Option<f64>,
}

/// Runs the classic and HPF schemes with identical tuning over the
/// benchmark-cost family `paper_cost(h0, amp)` for each `h0`.
pub fn uniformity_sweep(
    h0_list: &[f64],
    amp: f64,
    params: &EsParams,
    x0: f64,
    x_star: f64,
    t_end: f64,
) -> Result<UniformityTable> {
    if h0_list.len() < 2 {
        return Err(Error::invalid("h0_list", "need at least two cost magnitudes"));
    }
    let radius = 2.0 * params.delta;
    let mut rows = Vec::new();
    for &h0 in h0_list {
        let cost = paper_cost(h0, amp);
        let classic =
            simulate_scheme(Scheme::Classic, &cost, params, None, x0, None, t_end, DEFAULT_STEP)?;
        let hpf = simulate_scheme(Scheme::Hpf, &cost, params, None, x0, None, t_end, DEFAULT_STEP)?;
        rows.push(UniformityRow {
            h0,
            classic_tail_p2p: tail_metrics(&classic, 0, DEFAULT_TAIL_FRACTION, x_star).peak_to_peak,
            classic_entry: time_to_enter(&classic, 0, x_star, radius, DEFAULT_DWELL),
            hpf_tail_p2p: tail_metrics(&hpf, 0, DEFAULT_TAIL_FRACTION, x_star).peak_to_peak,
            hpf_entry: time_to_enter(&hpf, 0, x_star, radius, DEFAULT_DWELL),
        });
    }
    rows.sort_by(|a, b| a.h0.total_cmp(&b.h0));
    let first = rows.first().unwrap();
    let last = rows.last().unwrap();
    let classic_p2p_ratio = last.classic_tail_p2p / first.classic_tail_p2p;
    let hpf_entry_ratio = match (first.hpf_entry, last.hpf_entry) {
        (Some(a), Some(b)) if a > 0.0 => Some(b / a),
        _ => None,
    };
    Ok(UniformityTable {
        rows,
        classic_p2p_ratio,
        hpf_entry_ratio,
    })
}

/// Tail residuals of the HPF filter state against its two references.
#[derive(Clone, Copy, Debug)]
pub struct HpfTracking {
    /// Sup of `|ybar(t) - ybar_a(t)|` over the common tail samples.
    pub tail_residual_avg: f64,
    /// Sup of `|ybar(t) - a0_half(x(t))|` over the same samples.
    pub tail_residual_static: f64,
    pub ybar0: f64,
    /// `|ybar0 - a0_half(x0)|`, checked against the `gamma` bound.
    pub ybar0_deviation: f64,
}

/// [`HpfTracking`] plus the two trajectories it was measured on.
pub struct HpfTrackingDetail {
    pub report: HpfTracking,
    pub hpf: Trajectory,
    pub avg: Trajectory,
}

/// Runs the HPF scheme and its averaged cascade jointly and reports how well
/// the filter state tracks the averaged one and the running period mean.
///
/// The initial filter value must satisfy `|ybar0 - a0_half(x0)| <= gamma`
/// (the tracking precondition); violating it is a configuration error.
pub fn hpf_tracking(
    cost: &CostModel,
    params: &EsParams,
    x0: f64,
    ybar0: Option<f64>,
    t_end: f64,
) -> Result<HpfTracking> {
    hpf_tracking_detail(cost, params, x0, ybar0, t_end).map(|d| d.report)
}

/// [`hpf_tracking`] keeping the simulated trajectories for plotting.
pub fn hpf_tracking_detail(
    cost: &CostModel,
    params: &EsParams,
    x0: f64,
    ybar0: Option<f64>,
    t_end: f64,
) -> Result<HpfTrackingDetail> {
    let a0 = a0_half(cost, x0, params.delta)?;
    let ybar0 = ybar0.unwrap_or(a0);
    let deviation = (ybar0 - a0).abs();
    if deviation > params.gamma {
        return Err(Error::config(
            "ybar0",
            format!(
                "|ybar0 - a0_half(x0)| = {deviation:.3e} exceeds gamma = {}; \
                 the filter must start on the period mean for tracking to hold",
                params.gamma
            ),
        ));
    }
    // The dithered run needs the fine step; the averaged cascade is smooth and
    // runs at the coarse one. Residuals are compared on the coarse grid.
    let fast = DEFAULT_STEP;
    let coarse = DEFAULT_AVG_STEP;
    let every = (coarse / fast).round() as usize;
    let hpf = simulate_scheme(Scheme::Hpf, cost, params, None, x0, Some(ybar0), t_end, fast)?;
    let avg = simulate_scheme(Scheme::AvgHpf, cost, params, None, x0, Some(ybar0), t_end, coarse)?;
    let n = avg.len().min((hpf.len() - 1) / every + 1);
    let start = ((1.0 - DEFAULT_TAIL_FRACTION) * n as f64).floor() as usize;
    let mut residual_avg = 0.0f64;
    let mut residual_static = 0.0f64;
    for i in start..n {
        let hrow = hpf.row(i * every);
        let arow = avg.row(i);
        residual_avg = residual_avg.max((hrow[1] - arow[1]).abs());
        residual_static = residual_static.max((hrow[1] - a0_half(cost, hrow[0], params.delta)?).abs());
    }
    Ok(HpfTrackingDetail {
        report: HpfTracking {
            tail_residual_avg: residual_avg,
            tail_residual_static: residual_static,
            ybar0,
            ybar0_deviation: deviation,
        },
        hpf,
        avg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{constant, quadratic};
    use std::f64::consts::PI;

    #[test]
    fn closeness_constant_cost_matches_oscillation_bound() {
        // x oscillates as x0 + (gamma c / 2 pi)(cos - 1); the average is frozen.
        let c = constant(50.0);
        let params = EsParams::new(0.1, 0.1).unwrap();
        let rep = closeness(&c, &params, 2.0, 2.0, DEFAULT_STEP).unwrap();
        let bound = params.gamma * 50.0 / PI;
        assert!(!rep.diverged);
        assert!((rep.sup_error - bound).abs() < 1e-6, "sup {}", rep.sup_error);
        assert!(rep.per_window.iter().all(|&w| w <= rep.sup_error + 1e-15));
        assert!((rep.horizon * params.gamma - 2.0).abs() < 1e-12);
    }

    #[test]
    fn closeness_shrinks_with_gamma() {
        let c = constant(50.0);
        let sup = |gamma: f64| {
            let params = EsParams::new(gamma, 0.1).unwrap();
            closeness(&c, &params, 2.0, 2.0, DEFAULT_STEP).unwrap().sup_error
        };
        let s1 = sup(0.2);
        let s2 = sup(0.05);
        assert!(s2 < 0.5 * s1);
    }

    #[test]
    fn containment_point_attractor_for_even_cost() {
        let c = quadratic(0.0);
        let params = EsParams::new(0.5, 0.1).unwrap();
        // The field is -gamma delta x: the tail must start late enough for
        // 3 exp(-gamma delta t) to sink below the point-attractor tolerance.
        let rep = containment(&c, &params, Scheme::AvgFourier, 3.0, 0.0, 500.0).unwrap();
        assert!(rep.entered);
        assert!(rep.tail_sup_dist <= 1e-6, "tail {}", rep.tail_sup_dist);
    }

    #[test]
    fn containment_from_the_attractor_is_immediate() {
        let c = quadratic(0.0);
        let params = EsParams::new(0.1, 0.1).unwrap();
        let rep = containment(&c, &params, Scheme::Classic, 0.0, 0.0, 60.0).unwrap();
        assert!(rep.entered);
        assert_eq!(rep.entry_time, Some(0.0));
    }

    #[test]
    fn stall_detection_on_synthetic_trace() {
        // Exponential decay to 1 stalls once the speed is resolution-small.
        let c = quadratic(1.0);
        let params = EsParams::new(1.0, 0.5).unwrap();
        let traj = simulate_scheme(
            Scheme::AvgTaylor1,
            &c,
            &params,
            None,
            2.0,
            None,
            120.0,
            DEFAULT_AVG_STEP,
        )
        .unwrap();
        let stall = detect_stall(&traj).expect("decayed trajectory must stall");
        assert!((stall - 1.0).abs() < 1e-6);
        // A healthy oscillation never stalls.
        let osc = simulate_scheme(
            Scheme::Classic,
            &constant(100.0),
            &EsParams::new(0.1, 0.1).unwrap(),
            None,
            0.0,
            None,
            30.0,
            DEFAULT_STEP,
        )
        .unwrap();
        assert_eq!(detect_stall(&osc), None);
    }

    #[test]
    fn classic_oscillation_scales_exactly_with_constant_costs() {
        // On a constant cost the classic scheme is the support oscillator:
        // tail peak-to-peak = gamma c / pi, exactly proportional to c.
        let params = EsParams::new(0.1, 0.1).unwrap();
        let p2p = |c: f64| {
            let traj = simulate_scheme(
                Scheme::Classic, &constant(c), &params, None, 0.0, None, 30.0, DEFAULT_STEP,
            )
            .unwrap();
            crate::sim::tail_metrics(&traj, 0, 0.2, 0.0).peak_to_peak
        };
        let a = p2p(50.0);
        let b = p2p(500.0);
        assert!((b / a - 10.0).abs() < 1e-9, "ratio {}", b / a);
        assert!((a - 0.1 * 50.0 / std::f64::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn hpf_tracking_constant_cost_has_zero_residual() {
        let c = constant(9.0);
        let params = EsParams::new(0.1, 0.1).unwrap();
        let t = hpf_tracking(&c, &params, 2.0, Some(9.0), 30.0).unwrap();
        assert_eq!(t.ybar0_deviation, 0.0);
        assert_eq!(t.tail_residual_avg, 0.0);
        assert_eq!(t.tail_residual_static, 0.0);
    }

    #[test]
    fn closeness_flags_diverged_runs_without_claiming_a_sup() {
        // A cost with a non-finite wall right of the start: the first dithered
        // evaluation crosses it and both trajectories truncate.
        let wall = crate::cost::CostModel::new("wall", |x: f64| {
            if x > 2.0 {
                f64::NAN
            } else {
                x * x
            }
        });
        let params = EsParams::new(0.5, 1.0).unwrap();
        let rep = closeness(&wall, &params, 1.5, 2.0, DEFAULT_STEP).unwrap();
        assert!(rep.diverged);
        assert!(rep.sup_error.is_nan());
    }

    #[test]
    fn hpf_tracking_enforces_the_filter_precondition() {
        let c = quadratic(0.0);
        let params = EsParams::new(0.1, 0.1).unwrap();
        let err = hpf_tracking(&c, &params, 2.0, Some(100.0), 30.0).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        let ok = hpf_tracking(&c, &params, 2.0, None, 30.0).unwrap();
        assert_eq!(ok.ybar0_deviation, 0.0);
        assert!(ok.tail_residual_avg.is_finite());
    }

    #[test]
    fn hpf_converges_from_far_away_on_globally_lipschitz_costs() {
        // Globally Lipschitz, strictly quasi-convex, smooth: sqrt(x^2+1) - 1.
        // The washout makes the far-field update magnitude-independent, so a
        // start 30 units out still lands in the attractor band.
        let cost = crate::cost::CostModel::with_grad(
            "pseudo-huber",
            |x: f64| (x * x + 1.0).sqrt() - 1.0,
            |x: f64| x / (x * x + 1.0).sqrt(),
        );
        let params = EsParams::new(0.5, 1.0).unwrap();
        let traj = simulate_scheme(
            Scheme::Hpf, &cost, &params, None, 30.0, None, 300.0, DEFAULT_STEP,
        )
        .unwrap();
        let entry = time_to_enter(&traj, 0, 0.0, 2.0 * params.delta, DEFAULT_DWELL);
        assert!(entry.is_some(), "never entered the attractor band");
        let tail = tail_metrics(&traj, 0, DEFAULT_TAIL_FRACTION, 0.0);
        assert!(tail.sup_dist <= 2.0 * params.delta, "tail sup {}", tail.sup_dist);
    }

    #[test]
    fn uniformity_needs_two_magnitudes() {
        let params = EsParams::new(0.1, 0.1).unwrap();
        assert!(uniformity_sweep(&[10.0], 0.0, &params, 1.0, 0.0, 30.0).is_err());
    }
}
