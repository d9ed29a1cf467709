//! What happens when the cost grows by two decades: the classic update turns
//! into a big oscillator, the high-pass-filter variant does not notice.
//!
//! Run with: cargo run --release --example cost_uniformity

use std::f64::consts::PI;

use esx::analysis::uniformity_sweep;
use esx::cost::PAPER_COST_X_STAR;
use esx::dynamics::EsParams;

fn main() -> esx::Result<()> {
    let params = EsParams::new(0.1, 0.1)?;
    let table = uniformity_sweep(
        &[10.0, 100.0, 1000.0],
        0.0,
        &params,
        4.0 * PI,
        PAPER_COST_X_STAR,
        600.0,
    )?;

    println!("x0 = 4 pi, gamma = delta = 0.1, horizon 600\n");
    println!(
        "{:>8} {:>16} {:>14} {:>14} {:>12}",
        "h0", "classic tail p2p", "classic entry", "hpf tail p2p", "hpf entry"
    );
    for r in &table.rows {
        println!(
            "{:>8} {:>16.4} {:>14} {:>14.3e} {:>12}",
            r.h0,
            r.classic_tail_p2p,
            r.classic_entry.map_or("-".into(), |t| format!("{t:.1}")),
            r.hpf_tail_p2p,
            r.hpf_entry.map_or("-".into(), |t| format!("{t:.1}")),
        );
    }
    println!();
    println!(
        "classic oscillation scales like gamma h0 / pi (ratio across the sweep: {:.1});",
        table.classic_p2p_ratio
    );
    println!(
        "the hpf entry time is flat (ratio {:.4}): its update only sees cost differences.",
        table.hpf_entry_ratio.unwrap_or(f64::NAN)
    );
    Ok(())
}
