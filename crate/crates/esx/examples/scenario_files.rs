//! Driving the toolkit from a declarative scenario file, exactly like the
//! `esx run` subcommand does.
//!
//! Run with: cargo run --release --example scenario_files

use std::path::Path;

use esx::config;

fn main() -> esx::Result<()> {
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs/fig6.toml");
    let out = std::env::temp_dir().join("esx_scenario_example");
    println!("running {} -> {}\n", spec.display(), out.display());

    let outcome = config::run(&spec, Some(&out))?;
    println!("{:<20} {:<24} {:>14} {:>18} pass", "study", "check", "value", "threshold");
    for row in &outcome.rows {
        println!(
            "{:<20} {:<24} {:>14.6e} {:>18} {}",
            row.study, row.check, row.value, row.threshold, row.pass
        );
    }
    println!();
    println!("artifacts:");
    let mut files: Vec<_> = walk(&outcome.output_dir);
    files.sort();
    for f in files {
        println!("  {}", f.strip_prefix(&outcome.output_dir).unwrap().display());
    }
    println!("\nall checks passed: {}", outcome.all_pass);
    Ok(())
}

fn walk(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out
}
