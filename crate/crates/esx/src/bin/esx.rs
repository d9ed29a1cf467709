//! Command-line front end: run scenario files, query Fourier coefficients,
//! fire off ad-hoc simulations, and list the builtins.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use esx::analysis::{default_step, simulate_scheme};
use esx::config::{self, build_cost, build_plant, CostSpec};
use esx::dynamics::{EsParams, Scheme};
use esx::fourier::{fourier_coeff, DEFAULT_N_QUAD};

#[derive(Parser)]
#[command(name = "esx", version, about = "Extremum-seeking schemes, averages, and property checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its artifacts and summary.
    Run {
        /// Path to the TOML scenario.
        spec: PathBuf,
        /// Output directory (overrides the spec; ESX_OUT overrides both).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print Fourier coefficients of the dithered cost as CSV rows.
    Fourier {
        #[command(flatten)]
        cost: CostArgs,
        /// Query points (repeatable).
        #[arg(long, required = true, num_args = 1..)]
        x: Vec<f64>,
        /// Dither amplitude.
        #[arg(long)]
        delta: f64,
        /// Harmonic indices (repeatable).
        #[arg(long, default_values_t = [1usize])]
        k: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_N_QUAD)]
        n_quad: usize,
    },
    /// Integrate one scheme and write the trajectory as CSV.
    Simulate {
        #[command(flatten)]
        cost: CostArgs,
        /// Scheme name (see `esx list`).
        #[arg(long)]
        scheme: String,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        /// Initial filter state for the HPF variants (defaults to the period
        /// mean of the dithered cost at x0).
        #[arg(long)]
        ybar0: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        /// Noise seed for the PV schemes.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in costs, schemes, and studies.
    List,
}

#[derive(Args)]
struct CostArgs {
    /// Cost label (see `esx list`).
    #[arg(long)]
    cost: String,
    #[arg(long)]
    h0: Option<f64>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long)]
    center: Option<f64>,
    #[arg(long)]
    value: Option<f64>,
    /// CSV table for `--cost table`.
    #[arg(long)]
    table: Option<PathBuf>,
}

impl CostArgs {
    fn to_spec(&self) -> CostSpec {
        CostSpec {
            label: self.cost.clone(),
            h0: self.h0,
            amp: self.amp,
            center: self.center,
            value: self.value,
            path: self.table.clone(),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> esx::Result<ExitCode> {
    match cli.command {
        Command::Run { spec, out } => {
            let out = out.or_else(|| std::env::var_os("ESX_OUT").map(PathBuf::from));
            let outcome = config::run(&spec, out.as_deref())?;
            for row in &outcome.rows {
                println!(
                    "{}: {} = {:.6e} ({}) ... {}",
                    row.study,
                    row.check,
                    row.value,
                    row.threshold,
                    if row.pass { "pass" } else { "FAIL" }
                );
            }
            println!(
                "{} -> {}",
                if outcome.all_pass { "ok" } else { "FAILED" },
                outcome.output_dir.display()
            );
            Ok(if outcome.all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Fourier {
            cost,
            x,
            delta,
            k,
            n_quad,
        } => {
            let (model, _) = build_cost(&cost.to_spec(), None)?;
            println!("x,delta,k,a_k,b_k,n_quad");
            for &xi in &x {
                for &ki in &k {
                    let c = fourier_coeff(&model, xi, delta, ki, n_quad)?;
                    println!(
                        "{:.16e},{:.16e},{},{:.16e},{:.16e},{}",
                        c.x, c.delta, c.k, c.a_k, c.b_k, c.n_quad
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            cost,
            scheme,
            gamma,
            delta,
            x0,
            ybar0,
            t_end,
            step,
            record_every,
            seed,
            out,
        } => {
            let (model, _) = build_cost(&cost.to_spec(), None)?;
            let scheme = Scheme::parse(&scheme)?;
            let params = EsParams::new(gamma, delta)?;
            let mut plant = build_plant(None, seed);
            plant.rng_seed = seed;
            let t_end = t_end.unwrap_or(60.0 / gamma);
            let step = step.unwrap_or_else(|| default_step(scheme));
            let traj = simulate_scheme(
                scheme,
                &model,
                &params,
                scheme.is_pv().then_some(&plant),
                x0,
                ybar0,
                t_end,
                step,
            )?;
            let mut buf = Vec::new();
            if record_every <= 1 {
                traj.write_csv(&mut buf)?;
            } else {
                use std::io::Write;
                write!(buf, "t")?;
                for l in traj.labels() {
                    write!(buf, ",{l}")?;
                }
                writeln!(buf)?;
                for i in (0..traj.len()).filter(|i| i % record_every == 0 || i + 1 == traj.len()) {
                    write!(buf, "{:.16e}", traj.times()[i])?;
                    for v in traj.row(i) {
                        write!(buf, ",{v:.16e}")?;
                    }
                    writeln!(buf)?;
                }
            }
            match out {
                Some(p) => std::fs::write(p, buf)?,
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&buf)?;
                }
            }
            if traj.diverged() {
                eprintln!("warning: trajectory diverged and was truncated");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::List => {
            print!("{}", config::list_builtins());
            Ok(ExitCode::SUCCESS)
        }
    }
}
