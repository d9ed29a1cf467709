//! Grid checks of the standing assumptions: the quasi-convexity envelope,
//! a fitted linear minorant, and the local constants L_r / M_r.
//!
//! Run with: cargo run --release --example assumption_checks

use esx::cost::{
    check_envelope, estimate_constants, fit_linear_minorant, paper_cost, EnvelopeSpec,
    DEFAULT_CHECK_GRID, PAPER_COST_X_STAR,
};

fn main() -> esx::Result<()> {
    let x_star = PAPER_COST_X_STAR;
    let cost = paper_cost(10.0, 0.25);
    let envelope = paper_cost(10.0, 0.0);

    println!("local constants of the wiggly benchmark cost around x* = 2 pi:");
    println!("{:>6} {:>12} {:>12}", "r", "L_r", "M_r");
    for r in [0.5, 1.0, 2.0, 4.0] {
        let lc = estimate_constants(&cost, x_star, r, 4000)?;
        println!("{r:>6} {:>12.4} {:>12.4}", lc.lipschitz, lc.sup_bound);
    }
    println!("both grow with r, as the definitions require\n");

    let interval = (x_star - 5.0, x_star + 5.0);
    // Fit on the same grid the check runs on, so the minorant is valid there.
    let slope = fit_linear_minorant(&|x| envelope.value(x), x_star, interval, DEFAULT_CHECK_GRID);
    println!("fitted linear minorant slope on [x*-5, x*+5]: c = {slope:.6}");
    println!("(small because the envelope is flat at the saddle and the minimiser)\n");

    let safe = slope * (1.0 - 1e-9);
    let m = envelope.clone();
    let env = EnvelopeSpec::new(move |x| m.value(x), move |s| safe * s, 0.25, x_star);
    env.validate_alpha(10.0, 200)?;
    let report = check_envelope(&cost, &env, interval, DEFAULT_CHECK_GRID);
    println!("envelope check for h = envelope + sin wiggles of depth 1/4:");
    println!("  pass                = {}", report.pass);
    println!("  worst gap |h-m|-A   = {:+.3e} at x = {:.4}", report.worst_gap, report.worst_gap_x);
    println!(
        "  worst monotonicity  = {:+.3e} on pair ({:.4}, {:.4})",
        report.worst_monotonicity_violation, report.worst_pair.0, report.worst_pair.1
    );

    let sine = esx::cost::CostModel::new("sin", |x: f64| x.sin());
    let env = EnvelopeSpec::new(|x: f64| x.sin(), |s| 0.1 * s, 0.0, -std::f64::consts::FRAC_PI_2);
    let report = check_envelope(&sine, &env, (-std::f64::consts::PI, std::f64::consts::PI), 201);
    println!("\nsin(x) against itself is not strictly quasi-convex:");
    println!("  pass = {}, worst violation = {:+.3e}", report.pass, report.worst_monotonicity_violation);
    Ok(())
}
