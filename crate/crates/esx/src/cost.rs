//! Cost-function models, the benchmark cost family, and the checkers for the
//! quasi-convexity envelope and the local constants `L_r` / `M_r`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const TWO_PI: f64 = 2.0 * PI;

/// Default number of grid points used by the grid-based checkers.
pub const DEFAULT_CHECK_GRID: usize = 2001;

/// A scalar cost `h(x)` with an optional analytic gradient.
///
/// Values are immutable after construction and cheap to clone; they can be
/// shared freely across threads.
#[derive(Clone)]
pub struct CostModel {
    eval: ScalarFn,
    grad: Option<ScalarFn>,
    label: String,
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostModel")
            .field("label", &self.label)
            .field("has_grad", &self.grad.is_some())
            .finish()
    }
}

impl CostModel {
    pub fn new(label: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CostModel {
            eval: Arc::new(eval),
            grad: None,
            label: label.into(),
        }
    }

    pub fn with_grad(
        label: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CostModel {
            eval: Arc::new(eval),
            grad: Some(Arc::new(grad)),
            label: label.into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    /// Unchecked evaluation.
    pub fn value(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// Evaluation that turns a non-finite result into an evaluation-domain error.
    pub fn value_checked(&self, x: f64) -> Result<f64> {
        let v = (self.eval)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::EvalDomain {
                label: self.label.clone(),
                x,
            })
        }
    }

    /// Analytic gradient when present, otherwise a central finite difference
    /// with step `1e-6 * max(1, |x|)`.
    pub fn gradient(&self, x: f64) -> f64 {
        match &self.grad {
            Some(g) => g(x),
            None => {
                let h = 1e-6 * x.abs().max(1.0);
                ((self.eval)(x + h) - (self.eval)(x - h)) / (2.0 * h)
            }
        }
    }

    pub fn gradient_checked(&self, x: f64) -> Result<f64> {
        let v = self.gradient(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::EvalDomain {
                label: self.label.clone(),
                x,
            })
        }
    }
}

/// The benchmark cost: `h0 + A sin(10x)` plus a piecewise backbone with a
/// saddle at `x = pi` and the global minimum at `x = 2*pi`.
///
/// The three branches meet with matching values and first derivatives, so the
/// stitched function is C1.
pub fn paper_cost(h0: f64, a_amp: f64) -> CostModel {
    let eval = move |x: f64| {
        let base = if x < PI {
            (x - PI).powi(2) - 1.0
        } else if x < TWO_PI {
            (x - PI).cos() - 2.0
        } else {
            (x - TWO_PI).powi(2) - 3.0
        };
        h0 + a_amp * (10.0 * x).sin() + base
    };
    let grad = move |x: f64| {
        let base = if x < PI {
            2.0 * (x - PI)
        } else if x < TWO_PI {
            -(x - PI).sin()
        } else {
            2.0 * (x - TWO_PI)
        };
        10.0 * a_amp * (10.0 * x).cos() + base
    };
    CostModel::with_grad(format!("paper_cost(h0={h0}, A={a_amp})"), eval, grad)
}

/// The global minimiser of [`paper_cost`] for `A = 0`.
pub const PAPER_COST_X_STAR: f64 = TWO_PI;

/// `(x - center)^2`.
pub fn quadratic(center: f64) -> CostModel {
    CostModel::with_grad(
        format!("quadratic(center={center})"),
        move |x| (x - center).powi(2),
        move |x| 2.0 * (x - center),
    )
}

/// A constant cost.
pub fn constant(c: f64) -> CostModel {
    CostModel::with_grad(format!("constant({c})"), move |_| c, |_| 0.0)
}

/// The quasi-convexity envelope: `m` strictly quasi-convex,
/// `alpha` class-K-infinity and `|h - m| <= a_bound` everywhere.
#[derive(Clone)]
pub struct EnvelopeSpec {
    pub m: ScalarFn,
    pub alpha: ScalarFn,
    /// Envelope half-width `A`.
    pub a_bound: f64,
    /// Global minimiser of `m`.
    pub x_star: f64,
}

impl EnvelopeSpec {
    pub fn new(
        m: impl Fn(f64) -> f64 + Send + Sync + 'static,
        alpha: impl Fn(f64) -> f64 + Send + Sync + 'static,
        a_bound: f64,
        x_star: f64,
    ) -> Self {
        EnvelopeSpec {
            m: Arc::new(m),
            alpha: Arc::new(alpha),
            a_bound,
            x_star,
        }
    }

    /// Checks `alpha(0) = 0` and strict monotonicity of `alpha` on a uniform
    /// sample of `[0, s_max]`.
    pub fn validate_alpha(&self, s_max: f64, n: usize) -> Result<()> {
        if (self.alpha)(0.0) != 0.0 {
            return Err(Error::invalid("alpha", "alpha(0) must be 0"));
        }
        let mut prev = 0.0;
        for j in 1..=n {
            let s = s_max * j as f64 / n as f64;
            let v = (self.alpha)(s);
            if !(v > prev) {
                return Err(Error::invalid(
                    "alpha",
                    format!("alpha is not strictly increasing at s = {s}"),
                ));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Local Lipschitz constant and sup bound of `|h|` on `[x_star - r, x_star + r]`.
///
/// Both are grid lower estimates of the true constants; with nested grids they
/// are non-decreasing under refinement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalConstants {
    pub r: f64,
    /// `L_r`: largest grid difference quotient.
    pub lipschitz: f64,
    /// `M_r`: largest grid value of `|h|`.
    pub sup_bound: f64,
}

/// Estimates `L_r` and `M_r` over `n` uniformly spaced adjacent pairs
/// (`n + 1` grid points including both endpoints).
pub fn estimate_constants(cost: &CostModel, x_star: f64, r: f64, n: usize) -> Result<LocalConstants> {
    if !(r > 0.0) {
        return Err(Error::invalid("r", "interval half-width must be positive"));
    }
    if n < 16 {
        return Err(Error::invalid("n", "need at least 16 grid pairs"));
    }
    let step = 2.0 * r / n as f64;
    let mut lipschitz: f64 = 0.0;
    let mut sup_bound: f64 = 0.0;
    let mut prev = cost.value_checked(x_star - r)?;
    sup_bound = sup_bound.max(prev.abs());
    for j in 1..=n {
        let x = x_star - r + step * j as f64;
        let v = cost.value_checked(x)?;
        lipschitz = lipschitz.max((v - prev).abs() / step);
        sup_bound = sup_bound.max(v.abs());
        prev = v;
    }
    Ok(LocalConstants {
        r,
        lipschitz,
        sup_bound,
    })
}

/// Outcome of the envelope grid check. Violations are data, not errors.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeReport {
    pub pass: bool,
    /// Largest `|h - m| - A` over the grid (negative when the envelope holds).
    pub worst_gap: f64,
    pub worst_gap_x: f64,
    /// Largest `alpha(|x2 - x1|) - |m(x2) - m(x1)|` over same-side pairs
    /// (negative when monotone growth holds).
    pub worst_monotonicity_violation: f64,
    pub worst_pair: (f64, f64),
}

/// Checks both envelope conditions (gap bound and same-side monotone
/// growth) on a uniform grid over `interval`.
///
/// The grid should cover `env.x_star`: pairs are compared only when they sit
/// on the same side of it, so a one-sided grid checks half the condition.
pub fn check_envelope(
    cost: &CostModel,
    env: &EnvelopeSpec,
    interval: (f64, f64),
    n: usize,
) -> EnvelopeReport {
    let (lo, hi) = interval;
    let xs: Vec<f64> = (0..n)
        .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
        .collect();
    let mv: Vec<f64> = xs.iter().map(|&x| (env.m)(x)).collect();

    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_gap_x = lo;
    for (&x, &m) in xs.iter().zip(&mv) {
        let gap = (cost.value(x) - m).abs() - env.a_bound;
        if gap > worst_gap {
            worst_gap = gap;
            worst_gap_x = x;
        }
    }

    let mut worst_violation = f64::NEG_INFINITY;
    let mut worst_pair = (lo, lo);
    for i in 0..n {
        let si = xs[i] - env.x_star;
        for j in (i + 1)..n {
            // Same side of the minimiser only.
            if si * (xs[j] - env.x_star) < 0.0 {
                continue;
            }
            let violation = (env.alpha)(xs[j] - xs[i]) - (mv[j] - mv[i]).abs();
            if violation > worst_violation {
                worst_violation = violation;
                worst_pair = (xs[i], xs[j]);
            }
        }
    }

    EnvelopeReport {
        pass: worst_gap <= 0.0 && worst_violation <= 0.0,
        worst_gap,
        worst_gap_x,
        worst_monotonicity_violation: worst_violation,
        worst_pair,
    }
}

/// Largest slope `c` such that `alpha(s) = c * s` satisfies the same-side
/// growth condition of the envelope on the sampled grid.
pub fn fit_linear_minorant(m: &dyn Fn(f64) -> f64, x_star: f64, interval: (f64, f64), n: usize) -> f64 {
    let (lo, hi) = interval;
    let xs: Vec<f64> = (0..n)
        .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
        .collect();
    let mv: Vec<f64> = xs.iter().map(|&x| m(x)).collect();
    let mut c = f64::INFINITY;
    for i in 0..n {
        let si = xs[i] - x_star;
        for j in (i + 1)..n {
            if si * (xs[j] - x_star) < 0.0 {
                continue;
            }
            c = c.min((mv[j] - mv[i]).abs() / (xs[j] - xs[i]));
        }
    }
    if c.is_finite() {
        c.max(0.0)
    } else {
        0.0
    }
}

/// A cost interpolated from tabulated `(x, h)` pairs with a monotone cubic
/// (Fritsch-Carlson) interpolant; queries outside the table extend linearly
/// with the boundary slope.
pub fn from_table(label: impl Into<String>, points: &[(f64, f64)]) -> Result<CostModel> {
    let interp = MonotoneCubic::new(points)?;
    let deriv = interp.clone();
    let eval = move |x: f64| interp.value(x);
    let grad = move |x: f64| deriv.derivative(x);
    Ok(CostModel::with_grad(label, eval, grad))
}

/// Loads `(x, h)` rows from a CSV file (an optional header row is skipped).
pub fn from_csv(path: &Path) -> Result<CostModel> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let a = cols.next().unwrap_or("").trim();
        let b = cols.next().unwrap_or("").trim();
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(h)) => points.push((x, h)),
            _ if lineno == 0 => continue, // header
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    detail: format!("line {}: expected two numeric columns", lineno + 1),
                })
            }
        }
    }
    let label = format!("table({})", path.display());
    from_table(label, &points)
}

/// Fritsch-Carlson monotone piecewise-cubic Hermite interpolant.
#[derive(Clone)]
struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("table", "need at least two points"));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pts.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(
                    "table",
                    format!("duplicate abscissa x = {}", w[0].0),
                ));
            }
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let n = xs.len();
        let d: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = d[0];
        slopes[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            slopes[i] = if d[i - 1] * d[i] <= 0.0 {
                0.0
            } else {
                // Harmonic mean weighted by interval widths.
                let w1 = 2.0 * (xs[i + 1] - xs[i]) + (xs[i] - xs[i - 1]);
                let w2 = (xs[i + 1] - xs[i]) + 2.0 * (xs[i] - xs[i - 1]);
                (w1 + w2) / (w1 / d[i - 1] + w2 / d[i])
            };
        }
        // Clamp endpoint slopes to preserve monotonicity on boundary intervals.
        for (i, edge) in [(0usize, 0usize), (n - 1, n - 2)] {
            if slopes[i] * d[edge] <= 0.0 {
                slopes[i] = 0.0;
            } else if slopes[i].abs() > 3.0 * d[edge].abs() {
                slopes[i] = 3.0 * d[edge];
            }
        }
        Ok(MonotoneCubic { xs, ys, slopes })
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.xs.len() - 2),
        }
    }

    fn value(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return self.ys[0] + self.slopes[0] * (x - self.xs[0]);
        }
        if x > self.xs[n - 1] {
            return self.ys[n - 1] + self.slopes[n - 1] * (x - self.xs[n - 1]);
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (h00, h10, h01, h11) = hermite_basis(t);
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }

    fn derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] {
            return self.slopes[0];
        }
        if x > self.xs[n - 1] {
            return self.slopes[n - 1];
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let d00 = (6.0 * t * t - 6.0 * t) / h;
        let d10 = 3.0 * t * t - 4.0 * t + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * t * t - 2.0 * t;
        d00 * self.ys[i] + d10 * self.slopes[i] + d01 * self.ys[i + 1] + d11 * self.slopes[i + 1]
    }
}

fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}
