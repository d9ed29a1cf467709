//! Right-hand sides of every scheme in the toolkit: the classic
//! extremum-seeking law, its high-pass-filter variant, the Fourier and
//! first-order Taylor averaged systems, the constant-cost support oscillator,
//! and the solar-panel plant driven by either seeking law.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::fourier::{a0_half, b1_half};
use crate::sim::{FnSystem, OdeSystem};

/// The tuning pair of every scheme. The dither itself is fixed to
/// `u(t) = sin(2 pi t)` (period one).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EsParams {
    pub gamma: f64,
    pub delta: f64,
}

impl EsParams {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::invalid("gamma", "adaptation gain must be positive"));
        }
        if !(delta > 0.0) {
            return Err(Error::invalid("delta", "dither amplitude must be positive"));
        }
        Ok(EsParams { gamma, delta })
    }
}

/// The dither signal `u(t) = sin(2 pi t)`.
pub fn dither(t: f64) -> f64 {
    (TAU * t).sin()
}

/// `dx = -gamma h(x + delta u) u`.
pub fn classic_es_rhs(cost: &CostModel, params: &EsParams, x: f64, t: f64) -> Result<f64> {
    let u = dither(t);
    let y = cost.value_checked(x + params.delta * u)?;
    Ok(-params.gamma * y * u)
}

/// `dx = -gamma (h(x + delta u) - ybar) u`, `dybar = gamma (h(x + delta u) - ybar)`.
pub fn hpf_es_rhs(cost: &CostModel, params: &EsParams, x: f64, ybar: f64, t: f64) -> Result<(f64, f64)> {
    let u = dither(t);
    let e = cost.value_checked(x + params.delta * u)? - ybar;
    Ok((-params.gamma * e * u, params.gamma * e))
}

/// The Fourier average field `dx_a = -gamma b1_half(x_a)`.
pub fn avg_fourier_rhs(cost: &CostModel, params: &EsParams, x_a: f64) -> Result<f64> {
    Ok(-params.gamma * b1_half(cost, x_a, params.delta)?)
}

/// The averaged HPF cascade: `dx_a = -gamma b1_half(x_a)`,
/// `dybar_a = -gamma ybar_a + gamma a0_half(x_a)`.
pub fn avg_hpf_rhs(cost: &CostModel, params: &EsParams, x_a: f64, ybar_a: f64) -> Result<(f64, f64)> {
    Ok((
        -params.gamma * b1_half(cost, x_a, params.delta)?,
        params.gamma * (a0_half(cost, x_a, params.delta)? - ybar_a),
    ))
}

/// First-order Taylor average `dx_a = -gamma c1 delta h'(x_a)` with `c1 = 1/2`,
/// the value forced by matching the Fourier field on linear costs.
pub fn avg_taylor1_rhs(cost: &CostModel, params: &EsParams, x_a: f64) -> Result<f64> {
    Ok(-params.gamma * 0.5 * params.delta * cost.gradient_checked(x_a)?)
}

/// The support oscillator `dx1 = -gamma h(x1) u` (no dither inside the cost).
///
/// For constant costs the solution is the pure oscillation
/// `x1(t) = x10 + (gamma c / 2 pi)(cos(2 pi t) - 1)` with peak-to-peak
/// `gamma c / pi`.
pub fn support_oscillator_rhs(cost: &CostModel, params: &EsParams, x1: f64, t: f64) -> Result<f64> {
    Ok(-params.gamma * cost.value_checked(x1)? * dither(t))
}

/// Scheme selector; the names double as config labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Classic,
    Hpf,
    AvgFourier,
    AvgHpf,
    AvgTaylor1,
    SupportOsc,
    PvClassic,
    PvHpf,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Classic,
        Scheme::Hpf,
        Scheme::AvgFourier,
        Scheme::AvgHpf,
        Scheme::AvgTaylor1,
        Scheme::SupportOsc,
        Scheme::PvClassic,
        Scheme::PvHpf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Classic => "classic",
            Scheme::Hpf => "hpf",
            Scheme::AvgFourier => "avg_fourier",
            Scheme::AvgHpf => "avg_hpf",
            Scheme::AvgTaylor1 => "avg_taylor1",
            Scheme::SupportOsc => "support_osc",
            Scheme::PvClassic => "pv_classic",
            Scheme::PvHpf => "pv_hpf",
        }
    }

    pub fn parse(name: &str) -> Result<Scheme> {
        Scheme::ALL
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or_else(|| {
                Error::config(
                    "scheme",
                    format!(
                        "unknown scheme `{name}`; expected one of {}",
                        Scheme::ALL.map(|s| s.name()).join(", ")
                    ),
                )
            })
    }

    pub fn is_pv(&self) -> bool {
        matches!(self, Scheme::PvClassic | Scheme::PvHpf)
    }

    /// Whether the scheme carries the dither explicitly in time (which pins
    /// the integrator step to a fraction of the dither period).
    pub fn is_dithered(&self) -> bool {
        !matches!(self, Scheme::AvgFourier | Scheme::AvgHpf | Scheme::AvgTaylor1)
    }

    pub fn dim(&self) -> usize {
        match self {
            Scheme::Classic | Scheme::AvgFourier | Scheme::AvgTaylor1 | Scheme::SupportOsc => 1,
            Scheme::Hpf | Scheme::AvgHpf => 2,
            Scheme::PvClassic => 3,
            Scheme::PvHpf => 4,
        }
    }

    pub fn labels(&self) -> Vec<String> {
        let ls: &[&str] = match self {
            Scheme::Classic => &["x"],
            Scheme::Hpf => &["x", "ybar"],
            Scheme::AvgFourier => &["x_a"],
            Scheme::AvgHpf => &["x_a", "ybar_a"],
            Scheme::AvgTaylor1 => &["x_a"],
            Scheme::SupportOsc => &["x1"],
            Scheme::PvClassic => &["z", "zeta1", "zeta2"],
            Scheme::PvHpf => &["z", "ybar", "zeta1", "zeta2"],
        };
        ls.iter().map(|s| s.to_string()).collect()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The photovoltaic array: a stable two-state LTI voltage plant feeding a
/// static current map, with sampled-and-held watt-meter noise.
///
/// The plant matrices are expressed in real seconds; `time_scale` (seconds per
/// dither period, `2 pi / omega`) converts them to dither-normalised time so
/// the seeking laws keep the printed `gamma`, `delta` untouched.
#[derive(Clone)]
pub struct PvPlant {
    pub a_mat: [[f64; 2]; 2],
    pub b_vec: [f64; 2],
    pub c_vec: [f64; 2],
    pub q: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Sup bound of the watt-meter noise `|nu|`.
    pub noise_bound: f64,
    pub rng_seed: u64,
    /// Seconds per dither period (`2 pi / omega`).
    pub time_scale: f64,
    /// Voltage range the power map is validated on.
    pub v_range: (f64, f64),
}

impl fmt::Debug for PvPlant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PvPlant")
            .field("a_mat", &self.a_mat)
            .field("b_vec", &self.b_vec)
            .field("c_vec", &self.c_vec)
            .field("noise_bound", &self.noise_bound)
            .field("rng_seed", &self.rng_seed)
            .field("time_scale", &self.time_scale)
            .finish()
    }
}

/// Dither frequency of the solar-panel scenario, rad/s.
pub const PV_OMEGA: f64 = 115.2;

impl PvPlant {
    /// The default panel: a critically damped voltage plant with unit DC gain
    /// (poles at -500 rad/s) and a single-diode current map
    /// `q(v) = I_sc (1 - exp((v - V_oc) / V_t))` clipped at zero, with
    /// `I_sc = 5 A`, `V_oc = 20 V`, `V_t = 2 V`.
    pub fn default_panel() -> Self {
        let a = 500.0;
        PvPlant {
            a_mat: [[0.0, 1.0], [-a * a, -2.0 * a]],
            b_vec: [0.0, a * a],
            c_vec: [1.0, 0.0],
            q: Arc::new(|v: f64| (5.0 * (1.0 - ((v - 20.0) / 2.0).exp())).max(0.0)),
            noise_bound: 1.0,
            rng_seed: 42,
            time_scale: TAU / PV_OMEGA,
            v_range: (0.0, 22.0),
        }
    }

    /// DC gain `L = -C A^{-1} B` of the voltage plant.
    pub fn dc_gain(&self) -> f64 {
        let [[a11, a12], [a21, a22]] = self.a_mat;
        let det = a11 * a22 - a12 * a21;
        // -C A^{-1} B with the 2x2 inverse written out.
        let inv_b = [
            (a22 * self.b_vec[0] - a12 * self.b_vec[1]) / det,
            (-a21 * self.b_vec[0] + a11 * self.b_vec[1]) / det,
        ];
        -(self.c_vec[0] * inv_b[0] + self.c_vec[1] * inv_b[1])
    }

    /// The static power map `h(z) = L z q(L z)` seen through the settled plant.
    pub fn static_power(&self, z: f64) -> f64 {
        let v = self.dc_gain() * z;
        v * (self.q)(v)
    }

    /// Maximum of the static power map over the configured voltage range
    /// (grid search; the validated map is concave around the peak).
    pub fn max_static_power(&self, n: usize) -> (f64, f64) {
        let (lo, hi) = self.v_range;
        let mut best = (lo, self.static_power(lo));
        for j in 1..n {
            let z = lo + (hi - lo) * j as f64 / (n - 1) as f64;
            let p = self.static_power(z);
            if p > best.1 {
                best = (z, p);
            }
        }
        best
    }

    /// Checks the configuration invariants: a Hurwitz plant and a power map
    /// with one interior maximiser on the configured range.
    pub fn validate(&self) -> Result<()> {
        let [[a11, a12], [a21, a22]] = self.a_mat;
        let trace = a11 + a22;
        let det = a11 * a22 - a12 * a21;
        if !(trace < 0.0 && det > 0.0) {
            return Err(Error::config(
                "plant.a_mat",
                format!("matrix is not Hurwitz (trace = {trace}, det = {det})"),
            ));
        }
        if !(self.time_scale > 0.0) {
            return Err(Error::config("plant.time_scale", "must be positive"));
        }
        if self.noise_bound < 0.0 {
            return Err(Error::config("plant.noise_bound", "must be nonnegative"));
        }
        let (z_max, p_max) = self.max_static_power(2001);
        let (lo, hi) = self.v_range;
        let edge = (hi - lo) / 2000.0;
        if !(z_max > lo + edge && z_max < hi - edge) || !(p_max > 0.0) {
            return Err(Error::config(
                "plant.q",
                "the power map has no interior maximum on the configured voltage range",
            ));
        }
        // Uniqueness: exactly one strict local maximum on the grid.
        let n = 2001;
        let mut peaks = 0;
        let mut prev2 = self.static_power(lo);
        let mut prev1 = self.static_power(lo + (hi - lo) / (n - 1) as f64);
        for j in 2..n {
            let v = self.static_power(lo + (hi - lo) * j as f64 / (n - 1) as f64);
            if prev1 > prev2 && prev1 > v {
                peaks += 1;
            }
            prev2 = prev1;
            prev1 = v;
        }
        if peaks != 1 {
            return Err(Error::config(
                "plant.q",
                format!("the power map has {peaks} local maxima on the configured voltage range; need exactly one"),
            ));
        }
        Ok(())
    }

    /// Clean output power from a recorded state row of a PV scheme.
    pub fn power_from_state(&self, scheme: Scheme, row: &[f64]) -> f64 {
        let zeta = match scheme {
            Scheme::PvClassic => [row[1], row[2]],
            Scheme::PvHpf => [row[2], row[3]],
            _ => return f64::NAN,
        };
        let v = self.c_vec[0] * zeta[0] + self.c_vec[1] * zeta[1];
        v * (self.q)(v)
    }
}

/// The PV plant coupled with a seeking law. The power here is maximised, so
/// the seeking updates ascend the measured power.
struct PvSystem {
    plant: PvPlant,
    params: EsParams,
    hpf: bool,
    rng: ChaCha8Rng,
    held_noise: f64,
}

impl OdeSystem for PvSystem {
    fn dim(&self) -> usize {
        if self.hpf {
            4
        } else {
            3
        }
    }

    fn labels(&self) -> Vec<String> {
        if self.hpf {
            Scheme::PvHpf.labels()
        } else {
            Scheme::PvClassic.labels()
        }
    }

    fn begin_step(&mut self, _t: f64) {
        self.held_noise = if self.plant.noise_bound > 0.0 {
            self.rng.gen_range(-self.plant.noise_bound..=self.plant.noise_bound)
        } else {
            0.0
        };
    }

    fn rhs(&mut self, t: f64, state: &[f64], out: &mut [f64]) {
        let scheme = if self.hpf { Scheme::PvHpf } else { Scheme::PvClassic };
        pv_es_rhs(&self.plant, &self.params, scheme, state, t, self.held_noise, out);
    }
}

/// The plant coupled with a seeking law, ascending the measured power
/// `y = x q(x) + nu`. `nu` is the current watt-meter noise sample (held over
/// the integrator step that evaluates this). State layout: `[z, zeta1, zeta2]`
/// for `pv_classic`, `[z, ybar, zeta1, zeta2]` for `pv_hpf`.
pub fn pv_es_rhs(
    plant: &PvPlant,
    params: &EsParams,
    scheme: Scheme,
    state: &[f64],
    t: f64,
    nu: f64,
    out: &mut [f64],
) {
    let u = dither(t);
    let (z, ybar, zeta, dz_idx) = match scheme {
        Scheme::PvHpf => (state[0], state[1], [state[2], state[3]], 2),
        _ => (state[0], 0.0, [state[1], state[2]], 1),
    };
    let v = plant.c_vec[0] * zeta[0] + plant.c_vec[1] * zeta[1];
    let y = v * (plant.q)(v) + nu;
    if scheme == Scheme::PvHpf {
        out[0] = params.gamma * (y - ybar) * u;
        out[1] = params.gamma * (y - ybar);
    } else {
        out[0] = params.gamma * y * u;
    }
    let drive = z + params.delta * u;
    for r in 0..2 {
        out[dz_idx + r] = plant.time_scale
            * (plant.a_mat[r][0] * zeta[0] + plant.a_mat[r][1] * zeta[1] + plant.b_vec[r] * drive);
    }
}

/// Builds the integrable system for `scheme`. PV schemes need a plant.
pub fn build_system(
    scheme: Scheme,
    cost: &CostModel,
    params: &EsParams,
    plant: Option<&PvPlant>,
) -> Result<Box<dyn OdeSystem>> {
    let cost = cost.clone();
    let p = *params;
    EsParams::new(p.gamma, p.delta)?;
    let labels = scheme.labels();
    Ok(match scheme {
        Scheme::Classic => Box::new(FnSystem::new(labels, move |t, s: &[f64], o: &mut [f64]| {
            let u = dither(t);
            o[0] = -p.gamma * cost.value(s[0] + p.delta * u) * u;
        })),
        Scheme::Hpf => Box::new(FnSystem::new(labels, move |t, s: &[f64], o: &mut [f64]| {
            let u = dither(t);
            let e = cost.value(s[0] + p.delta * u) - s[1];
            o[0] = -p.gamma * e * u;
            o[1] = p.gamma * e;
        })),
        Scheme::AvgFourier => Box::new(FnSystem::new(labels, move |_t, s: &[f64], o: &mut [f64]| {
            o[0] = -p.gamma * b1_half(&cost, s[0], p.delta).unwrap_or(f64::NAN);
        })),
        Scheme::AvgHpf => Box::new(FnSystem::new(labels, move |_t, s: &[f64], o: &mut [f64]| {
            o[0] = -p.gamma * b1_half(&cost, s[0], p.delta).unwrap_or(f64::NAN);
            o[1] = p.gamma * (a0_half(&cost, s[0], p.delta).unwrap_or(f64::NAN) - s[1]);
        })),
        Scheme::AvgTaylor1 => Box::new(FnSystem::new(labels, move |_t, s: &[f64], o: &mut [f64]| {
            o[0] = -p.gamma * 0.5 * p.delta * cost.gradient(s[0]);
        })),
        Scheme::SupportOsc => Box::new(FnSystem::new(labels, move |t, s: &[f64], o: &mut [f64]| {
            o[0] = -p.gamma * cost.value(s[0]) * dither(t);
        })),
        Scheme::PvClassic | Scheme::PvHpf => {
            let plant = plant
                .ok_or_else(|| Error::config("plant", "PV schemes need a plant section"))?
                .clone();
            plant.validate()?;
            let rng = ChaCha8Rng::seed_from_u64(plant.rng_seed);
            Box::new(PvSystem {
                plant,
                params: p,
                hpf: scheme == Scheme::PvHpf,
                rng,
                held_noise: 0.0,
            })
        }
    })
}

/// Default initial state for `scheme` started at `x0`.
///
/// HPF variants initialise the filter at `a0_half(x0)` (the tracking
/// precondition) unless `ybar0` overrides it; PV schemes pre-settle the plant
/// at the commanded voltage and start the filter on the measured static power.
pub fn initial_state(
    scheme: Scheme,
    cost: &CostModel,
    params: &EsParams,
    plant: Option<&PvPlant>,
    x0: f64,
    ybar0: Option<f64>,
) -> Result<Vec<f64>> {
    Ok(match scheme {
        Scheme::Classic | Scheme::AvgFourier | Scheme::AvgTaylor1 | Scheme::SupportOsc => vec![x0],
        Scheme::Hpf | Scheme::AvgHpf => {
            let ybar = match ybar0 {
                Some(v) => v,
                None => a0_half(cost, x0, params.delta)?,
            };
            vec![x0, ybar]
        }
        Scheme::PvClassic | Scheme::PvHpf => {
            let plant = plant.ok_or_else(|| Error::config("plant", "PV schemes need a plant section"))?;
            // Plant pre-settled at the commanded voltage: x = L z.
            let v = plant.dc_gain() * x0;
            let zeta = settle_companion(plant, v);
            if scheme == Scheme::PvHpf {
                let ybar = ybar0.unwrap_or_else(|| plant.static_power(x0));
                vec![x0, ybar, zeta[0], zeta[1]]
            } else {
                vec![x0, zeta[0], zeta[1]]
            }
        }
    })
}

/// Steady state of the plant for a constant drive: solves `A zeta = -B v`.
fn settle_companion(plant: &PvPlant, v: f64) -> [f64; 2] {
    let [[a11, a12], [a21, a22]] = plant.a_mat;
    let det = a11 * a22 - a12 * a21;
    let rhs = [-plant.b_vec[0] * v, -plant.b_vec[1] * v];
    [
        (a22 * rhs[0] - a12 * rhs[1]) / det,
        (-a21 * rhs[0] + a11 * rhs[1]) / det,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{constant, paper_cost, quadratic, CostModel};
    use crate::fourier::find_equilibrium;
    use crate::sim::{integrate, tail_metrics};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn params(gamma: f64, delta: f64) -> EsParams {
        EsParams::new(gamma, delta).unwrap()
    }

    #[test]
    fn params_must_be_positive() {
        assert!(EsParams::new(0.0, 0.1).is_err());
        assert!(EsParams::new(0.1, -1.0).is_err());
        assert!(EsParams::new(0.1, 0.1).is_ok());
    }

    #[test]
    fn classic_rhs_direct_substitutions() {
        let p = params(1.0, 0.1);
        let c = constant(3.0);
        assert_eq!(classic_es_rhs(&c, &p, 5.0, 0.0).unwrap(), 0.0);
        // sin(pi/2) = 1 at t = 1/4.
        assert_relative_eq!(classic_es_rhs(&c, &p, 5.0, 0.25).unwrap(), -3.0, epsilon = 1e-12);
        let q = quadratic(0.0);
        assert_relative_eq!(
            classic_es_rhs(&q, &p, 0.0, 0.25).unwrap(),
            -0.01,
            epsilon = 1e-14
        );
    }

    #[test]
    fn hpf_rhs_direct_substitutions() {
        let p = params(0.5, 0.1);
        let c = constant(4.0);
        // Filter at equilibrium: both derivatives vanish for all t.
        for t in [0.0, 0.1, 0.37, 0.75] {
            let (dx, dy) = hpf_es_rhs(&c, &p, 1.0, 4.0, t).unwrap();
            assert_eq!(dx, 0.0);
            assert_eq!(dy, 0.0);
        }
        let (dx, dy) = hpf_es_rhs(&c, &p, 1.0, 0.0, 0.25).unwrap();
        assert_relative_eq!(dx, -2.0, epsilon = 1e-12);
        assert_relative_eq!(dy, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn average_fields_closed_forms() {
        let p = params(1.0, 0.1);
        let q = quadratic(0.0);
        assert_relative_eq!(avg_fourier_rhs(&q, &p, 1.0).unwrap(), -0.1, epsilon = 1e-12);
        assert_relative_eq!(avg_taylor1_rhs(&q, &p, 1.0).unwrap(), -0.1, epsilon = 1e-12);
        let c = constant(11.0);
        assert!(avg_fourier_rhs(&c, &p, -2.0).unwrap().abs() < 1e-13);
        let (dx, dy) = avg_hpf_rhs(&q, &p, 1.0, 0.0).unwrap();
        assert_relative_eq!(dx, -0.1, epsilon = 1e-12);
        assert_relative_eq!(dy, 1.005, epsilon = 1e-12);
    }

    #[test]
    fn average_field_vanishes_at_equilibrium() {
        let p = params(1.0, 0.1);
        let c = paper_cost(10.0, 0.0);
        let x_star = 2.0 * PI;
        let eq = find_equilibrium(&c, 0.1, (x_star - 0.1, x_star + 0.1)).unwrap();
        assert!(avg_fourier_rhs(&c, &p, eq).unwrap().abs() <= 1e-9);
        let ybar = crate::fourier::a0_half(&c, eq, 0.1).unwrap();
        let (dx, dy) = avg_hpf_rhs(&c, &p, eq, ybar).unwrap();
        assert!(dx.abs() <= 1e-9 && dy.abs() <= 1e-9);
    }

    #[test]
    fn taylor_stalls_at_the_saddle() {
        let p = params(0.1, 0.1);
        let c = paper_cost(10.0, 0.0);
        assert_eq!(avg_taylor1_rhs(&c, &p, PI).unwrap(), 0.0);
    }

    #[test]
    fn taylor_matches_fourier_on_linear_costs() {
        let p = params(0.7, 0.3);
        let lin = CostModel::with_grad("linear", |x| 2.5 * x, |_| 2.5);
        for x in [-3.0, 0.0, 1.7, 42.0] {
            let a = avg_taylor1_rhs(&lin, &p, x).unwrap();
            let b = avg_fourier_rhs(&lin, &p, x).unwrap();
            assert!((a - b).abs() <= 1e-12, "{a} vs {b} at {x}");
        }
    }

    #[test]
    fn frozen_x_period_average_equals_fourier_field() {
        // The defining identity of the averaged system, checked by the same
        // uniform rule on a different node count for smooth costs.
        let p = params(0.2, 0.25);
        let q = quadratic(1.0);
        for x in [-1.0, 0.3, 2.0] {
            let n = 2048;
            let mut acc = 0.0;
            for j in 0..n {
                let t = j as f64 / n as f64;
                acc += classic_es_rhs(&q, &p, x, t).unwrap();
            }
            let lhs = acc / n as f64;
            let rhs = avg_fourier_rhs(&q, &p, x).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs} at x = {x}");
        }
    }

    #[test]
    fn support_oscillator_closed_form() {
        let p = params(0.1, 0.1);
        let c = constant(1000.0);
        let mut sys = build_system(Scheme::SupportOsc, &c, &p, None).unwrap();
        let x0 = 100.0;
        let traj = integrate(sys.as_mut(), &[x0], 5.0, 0.005).unwrap();
        let scale = p.gamma * 1000.0 / TAU;
        for (i, &t) in traj.times().iter().enumerate() {
            let exact = x0 + scale * ((TAU * t).cos() - 1.0);
            let got = traj.row(i)[0];
            assert!(
                ((got - exact) / exact).abs() <= 1e-8,
                "rel err {} at t = {t}",
                ((got - exact) / exact).abs()
            );
        }
        let m = tail_metrics(&traj, 0, 1.0, x0);
        let p2p = p.gamma * 1000.0 / PI;
        assert!((m.peak_to_peak - p2p).abs() <= 1e-6 * p.gamma * 1000.0);
        // Zero gain freezes the trajectory.
        let frozen = constant(0.0);
        let mut sys = build_system(Scheme::SupportOsc, &frozen, &p, None).unwrap();
        let traj = integrate(sys.as_mut(), &[x0], 2.0, 0.005).unwrap();
        assert!(traj.channel(0).iter().all(|&v| v == x0));
    }

    #[test]
    fn hpf_rejects_constant_costs() {
        let p = params(0.5, 0.1);
        let c = constant(25.0);
        let mut sys = build_system(Scheme::Hpf, &c, &p, None).unwrap();
        let traj = integrate(sys.as_mut(), &[3.0, 0.0], 60.0, 0.005).unwrap();
        // After the filter settles, sup |dx| <= gamma |c - ybar| -> 0.
        let xs = traj.channel(0);
        let ys = traj.channel(1);
        let tail = (0.8 * traj.len() as f64) as usize;
        let tail_x_span = xs[tail..].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - xs[tail..].iter().cloned().fold(f64::INFINITY, f64::min);
        // sup |dx| <= gamma |c - ybar| with |c - ybar| ~ c e^{-gamma t}.
        assert!(tail_x_span < 1e-9, "x still moving: span {tail_x_span}");
        assert!((ys.last().unwrap() - 25.0).abs() < 1e-9);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::parse(s.name()).unwrap(), s);
            assert_eq!(s.labels().len(), s.dim());
        }
        assert!(Scheme::parse("newton").is_err());
    }

    #[test]
    fn pv_rhs_direct_structure() {
        let plant = PvPlant::default_panel();
        let p = params(0.5, 0.05);
        // At steady state with zero noise, the hpf update with ybar on the
        // measured power is zero in the seeking channels.
        let v = 7.0;
        let power = v * (plant.q)(v);
        let state = [7.0, power, 7.0, 0.0];
        let mut out = [0.0; 4];
        pv_es_rhs(&plant, &p, Scheme::PvHpf, &state, 0.37, 0.0, &mut out);
        assert!(out[0].abs() < 1e-12 && out[1].abs() < 1e-12);
        // Noise enters the measurement: dybar = gamma nu.
        pv_es_rhs(&plant, &p, Scheme::PvHpf, &state, 0.0, 0.8, &mut out);
        assert_relative_eq!(out[1], 0.5 * 0.8, epsilon = 1e-12);
        // Classic channel ascends the measured power at the dither peak.
        let state3 = [7.0, 7.0, 0.0];
        let mut out3 = [0.0; 3];
        pv_es_rhs(&plant, &p, Scheme::PvClassic, &state3, 0.25, 0.0, &mut out3);
        assert_relative_eq!(out3[0], 0.5 * power, epsilon = 1e-9);
    }

    #[test]
    fn pv_plant_validates_and_has_unit_gain() {
        let plant = PvPlant::default_panel();
        plant.validate().unwrap();
        assert_relative_eq!(plant.dc_gain(), 1.0, epsilon = 1e-12);
        let (z_max, p_max) = plant.max_static_power(20001);
        assert!(p_max > 60.0 && z_max > 14.0 && z_max < 17.0);
        let mut bad = plant.clone();
        bad.a_mat = [[0.0, 1.0], [1.0, 0.0]];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pv_dc_identity_with_frozen_command() {
        // gamma ~ 0 freezes z; the plant settles and the measured power equals
        // the static map.
        let mut plant = PvPlant::default_panel();
        plant.noise_bound = 0.0;
        // Vanishing gain freezes z and a vanishing dither leaves the drive DC.
        let p = params(1e-12, 1e-9);
        let cost = constant(0.0);
        let z0 = 7.0;
        let mut sys = build_system(Scheme::PvClassic, &cost, &p, Some(&plant)).unwrap();
        // Start the plant away from steady state on purpose.
        let traj = integrate(sys.as_mut(), &[z0, 0.0, 0.0], 5.0, 0.005).unwrap();
        let last = traj.row(traj.len() - 1);
        let power = plant.power_from_state(Scheme::PvClassic, last);
        assert_relative_eq!(power, plant.static_power(z0), max_relative = 1e-3);
    }

    #[test]
    fn pv_zero_current_map_freezes_the_command() {
        let mut plant = PvPlant::default_panel();
        plant.noise_bound = 0.0;
        plant.q = Arc::new(|_| 0.0);
        // Skip validate: q == 0 has no interior max, which is the point here.
        let p = params(0.5, 0.05);
        let rng = ChaCha8Rng::seed_from_u64(0);
        let mut sys = PvSystem {
            plant,
            params: p,
            hpf: false,
            rng,
            held_noise: 0.0,
        };
        let traj = integrate(&mut sys, &[5.0, 5.0, 0.0], 10.0, 0.005).unwrap();
        let z = traj.channel(0);
        assert!(z.iter().all(|&v| v == 5.0), "z drifted");
    }

    #[test]
    fn pv_trajectories_are_seed_deterministic() {
        let plant = PvPlant::default_panel();
        let p = params(0.5, 0.05);
        let cost = constant(0.0);
        let run = || {
            let mut sys = build_system(Scheme::PvHpf, &cost, &p, Some(&plant)).unwrap();
            let s0 = initial_state(Scheme::PvHpf, &cost, &p, Some(&plant), 5.0, None).unwrap();
            integrate(sys.as_mut(), &s0, 3.0, 0.005).unwrap()
        };
        let a = run();
        let b = run();
        for i in 0..a.len() {
            assert_eq!(a.row(i), b.row(i));
        }
        // A different seed produces a different trajectory.
        let mut plant2 = plant.clone();
        plant2.rng_seed = 43;
        let mut sys = build_system(Scheme::PvHpf, &cost, &p, Some(&plant2)).unwrap();
        let s0 = initial_state(Scheme::PvHpf, &cost, &p, Some(&plant2), 5.0, None).unwrap();
        let c = integrate(sys.as_mut(), &s0, 3.0, 0.005).unwrap();
        assert_ne!(a.row(a.len() - 1), c.row(c.len() - 1));
    }

    #[test]
    fn initial_states_match_scheme_dimensions() {
        let p = params(0.1, 0.1);
        let cost = quadratic(0.0);
        let plant = PvPlant::default_panel();
        for s in Scheme::ALL {
            let st = initial_state(s, &cost, &p, Some(&plant), 1.0, None).unwrap();
            assert_eq!(st.len(), s.dim(), "{s}");
        }
        // HPF filter starts on the period mean.
        let st = initial_state(Scheme::Hpf, &cost, &p, None, 2.0, None).unwrap();
        assert_relative_eq!(st[1], 4.0 + 0.005, epsilon = 1e-12);
    }
}
