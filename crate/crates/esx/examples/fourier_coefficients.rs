//! Fourier coefficients of the dithered cost, the delta_star threshold, and
//! the equilibrium of the averaged field.
//!
//! Run with: cargo run --release --example fourier_coefficients

use std::f64::consts::PI;

use esx::cost::{paper_cost, quadratic, PAPER_COST_X_STAR};
use esx::fourier::{a0_half, b1_derivative, b1_half, delta_star, find_equilibrium, fourier_coeff};

fn main() -> esx::Result<()> {
    let delta = 0.1;

    println!("harmonics of the dithered quadratic at x = 1, delta = {delta}");
    println!("{:>3} {:>14} {:>14}", "k", "a_k", "b_k");
    let q = quadratic(0.0);
    for k in 0..=4 {
        let c = fourier_coeff(&q, 1.0, delta, k, 1024)?;
        println!("{k:>3} {:>14.6e} {:>14.6e}", c.a_k, c.b_k);
    }
    println!("closed forms: a_0 = 2(x^2 + delta^2/2), b_1 = 2 x delta, rest zero\n");

    println!("delta_star thresholds (class-K-infinity in the dither amplitude):");
    for s in [0.25, 0.5, 1.0, 2.0] {
        println!(
            "  s = {s:<5} linear alpha: {:.6}  (2s/pi = {:.6})   quadratic alpha: {:.6}",
            delta_star(&|r| r, s)?,
            2.0 * s / PI,
            delta_star(&|r| 0.5 * r * r, s)?
        );
    }
    println!();

    let cost = paper_cost(10.0, 0.0);
    let x_star = PAPER_COST_X_STAR;
    println!("benchmark cost, minimiser x* = 2 pi = {x_star:.6}:");
    for delta in [0.01, 0.1, 0.5] {
        let root = find_equilibrium(&cost, delta, (x_star - delta, x_star + delta))?;
        println!(
            "  delta = {delta:<5} averaged-field equilibrium = {root:.9}  (offset {:+.3e}, residual {:+.1e})",
            root - x_star,
            b1_half(&cost, root, delta)?
        );
    }
    println!("the offset is negative: the cost is flatter on the cosine side\n");

    println!("field ingredients at x = 5.5, delta = 0.1:");
    println!("  b1_half        = {:+.6e}", b1_half(&cost, 5.5, 0.1)?);
    println!("  a0_half        = {:+.6e}", a0_half(&cost, 5.5, 0.1)?);
    println!("  d(b1)/dx       = {:+.6e}", b1_derivative(&cost, 5.5, 0.1, 1024)?);
    Ok(())
}
