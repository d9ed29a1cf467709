//! Fixed-step RK4 integration with trajectory recording and metric extraction.

use std::io::Write;

use crate::error::{Error, Result};

/// Default integrator step: 1/200 of the dither period.
pub const DEFAULT_STEP: f64 = 1.0 / 200.0;

/// Dwell used by entry detection unless a caller overrides it (five dither
/// periods, filtering transient band crossings).
pub const DEFAULT_DWELL: f64 = 5.0;

/// Fraction of the horizon treated as the trajectory tail.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;

/// Right-hand side of a (possibly time-periodic) ODE system.
///
/// `begin_step` runs once per integrator step, before the four RK4 stages;
/// systems with sampled-and-held inputs (the PV watt-meter noise) refresh them
/// there so the hold time equals the step.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn labels(&self) -> Vec<String>;
    fn begin_step(&mut self, _t: f64) {}
    fn rhs(&mut self, t: f64, state: &[f64], out: &mut [f64]);
}

/// Time-stamped state samples of one simulated system.
///
/// Rows are stored at a constant time step; a blow-up truncates the recording
/// and raises `diverged` instead of emitting non-finite rows. Values are
/// immutable after the integration completes.
#[derive(Clone, Debug)]
pub struct Trajectory {
    t: Vec<f64>,
    states: Vec<f64>, // row-major, len == t.len() * channels
    labels: Vec<String>,
    meta: String,
    diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.labels.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.channels();
        &self.states[i * c..(i + 1) * c]
    }

    /// Copy of one channel by index.
    pub fn channel(&self, idx: usize) -> Vec<f64> {
        let c = self.channels();
        self.states.iter().skip(idx).step_by(c).copied().collect()
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Sample spacing (zero for a single-row trajectory).
    pub fn step(&self) -> f64 {
        if self.t.len() > 1 {
            self.t[1] - self.t[0]
        } else {
            0.0
        }
    }

    /// Writes `t,<labels...>` rows at full double precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for l in &self.labels {
            write!(w, ",{l}")?;
        }
        writeln!(w)?;
        for (i, t) in self.t.iter().enumerate() {
            write!(w, "{t:.16e}")?;
            for v in self.row(i) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrates `system` from `t = 0` to `t_end` with classical RK4, recording
/// every step.
pub fn integrate(system: &mut dyn OdeSystem, x0: &[f64], t_end: f64, step: f64) -> Result<Trajectory> {
    integrate_decimated(system, x0, t_end, step, 1)
}

/// As [`integrate`], recording every `record_every`-th sample (the initial
/// state and the final one are always kept).
pub fn integrate_decimated(
    system: &mut dyn OdeSystem,
    x0: &[f64],
    t_end: f64,
    step: f64,
    record_every: usize,
) -> Result<Trajectory> {
    if !(step > 0.0) {
        return Err(Error::invalid("step", "step must be positive"));
    }
    if t_end < step {
        return Err(Error::invalid("t_end", "horizon must cover at least one step"));
    }
    if record_every == 0 {
        return Err(Error::invalid("record_every", "decimation must be at least 1"));
    }
    let dim = system.dim();
    if x0.len() != dim {
        return Err(Error::invalid(
            "x0",
            format!("state has {} channels, system expects {}", x0.len(), dim),
        ));
    }

    let n_steps = (t_end / step).round() as usize;
    let mut state = x0.to_vec();
    let mut t = Vec::with_capacity(n_steps / record_every + 2);
    let mut states = Vec::with_capacity((n_steps / record_every + 2) * dim);
    let mut diverged = !state.iter().all(|v| v.is_finite());

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];

    if !diverged {
        t.push(0.0);
        states.extend_from_slice(&state);
        for i in 0..n_steps {
            let tn = i as f64 * step;
            system.begin_step(tn);
            system.rhs(tn, &state, &mut k1);
            for d in 0..dim {
                stage[d] = state[d] + 0.5 * step * k1[d];
            }
            system.rhs(tn + 0.5 * step, &stage, &mut k2);
            for d in 0..dim {
                stage[d] = state[d] + 0.5 * step * k2[d];
            }
            system.rhs(tn + 0.5 * step, &stage, &mut k3);
            for d in 0..dim {
                stage[d] = state[d] + step * k3[d];
            }
            system.rhs(tn + step, &stage, &mut k4);
            for d in 0..dim {
                state[d] += step / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
            }
            if !state.iter().all(|v| v.is_finite()) {
                diverged = true;
                break;
            }
            if (i + 1) % record_every == 0 || i + 1 == n_steps {
                t.push((i + 1) as f64 * step);
                states.extend_from_slice(&state);
            }
        }
    }

    Ok(Trajectory {
        t,
        states,
        labels: system.labels(),
        meta: format!("step={step:.16e},t_end={t_end:.16e}"),
        diverged,
    })
}

/// First time after which `channel` stays within `center +/- radius` for at
/// least `dwell` time units; `None` if that never happens.
pub fn time_to_enter(
    traj: &Trajectory,
    channel: usize,
    center: f64,
    radius: f64,
    dwell: f64,
) -> Option<f64> {
    let step = traj.step();
    if traj.is_empty() {
        return None;
    }
    let need = if step > 0.0 {
        (dwell / step).ceil() as usize + 1
    } else {
        1
    };
    let c = traj.channels();
    let mut run_start: Option<usize> = None;
    let mut run_len = 0usize;
    for i in 0..traj.len() {
        let v = traj.states[i * c + channel];
        if (v - center).abs() <= radius {
            if run_start.is_none() {
                run_start = Some(i);
            }
            run_len += 1;
            if run_len >= need {
                return Some(traj.t[run_start.unwrap()]);
            }
        } else {
            run_start = None;
            run_len = 0;
        }
    }
    // A run reaching the end of the horizon counts when the horizon itself is
    // shorter than the dwell would require.
    match run_start {
        Some(s) if traj.t[traj.len() - 1] - traj.t[s] >= dwell => Some(traj.t[s]),
        _ => None,
    }
}

/// Aggregates over the final fraction of a trajectory.
#[derive(Clone, Copy, Debug)]
pub struct TailMetrics {
    pub sup_dist: f64,
    pub peak_to_peak: f64,
    pub mean: f64,
}

/// Metrics of `channel` over the last `tail_fraction` of the samples;
/// `sup_dist` is measured from `center`.
pub fn tail_metrics(traj: &Trajectory, channel: usize, tail_fraction: f64, center: f64) -> TailMetrics {
    let n = traj.len();
    let start = ((1.0 - tail_fraction) * n as f64).floor() as usize;
    let start = start.min(n.saturating_sub(1));
    let c = traj.channels();
    let mut sup = 0.0f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in start..n {
        let v = traj.states[i * c + channel];
        sup = sup.max((v - center).abs());
        min = min.min(v);
        max = max.max(v);
        sum += v;
        count += 1;
    }
    TailMetrics {
        sup_dist: sup,
        peak_to_peak: max - min,
        mean: sum / count.max(1) as f64,
    }
}

/// A system defined by a closure; the workhorse wrapper for the schemes.
pub struct FnSystem<F> {
    dim: usize,
    labels: Vec<String>,
    f: F,
}

impl<F> FnSystem<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(labels: Vec<String>, f: F) -> Self {
        FnSystem {
            dim: labels.len(),
            labels,
            f,
        }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn rhs(&mut self, t: f64, state: &[f64], out: &mut [f64]) {
        (self.f)(t, state, out)
    }
}
