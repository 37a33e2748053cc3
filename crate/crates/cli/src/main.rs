use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epmac_core::run::{compare, run, sweep, RunConfig, RunOutcome, SchemeKind, SweepConfig};
use epmac_core::verify::{verify, VerifyOptions, DEFAULT_SEED};
use epmac_core::Error;

/// Environment variable naming the default output root.
const OUT_ENV: &str = "EPMAC_OUT";

#[derive(Parser)]
#[command(name = "epmac", version, about = "Euler-Poisson solvers on staggered grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write snapshots, reports and a manifest.
    Run(RunArgs),
    /// Run the same configuration for several Debye lengths.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated Debye lengths.
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        /// Concurrent simulations (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the property suite.
    Verify {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Number of consecutive seeds to run, starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Corrupt the divergence operator; the duality check must fail.
        #[arg(long, hide = true)]
        corrupt_duality: bool,
    },
    /// Run two schemes and report field differences at the final time.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Two scheme tags, e.g. `ap,limit`.
        #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "ap,classical")]
        schemes: Vec<String>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON configuration; the flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
    /// ap, classical or limit.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    /// Cells per axis.
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Safety factor of the semi-implicit scheme and CFL number of the explicit one.
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Output directory (default: $EPMAC_OUT/<case>-<scheme>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Explicit-scheme step cap as a multiple of eps.
    #[arg(long)]
    dt_eps_factor: Option<f64>,
    /// Write the first assembled potential system to matrix.txt.
    #[arg(long)]
    dump_matrix: bool,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(case) = &self.case {
            cfg.case = case.clone();
        }
        if let Some(tag) = &self.scheme {
            cfg.scheme = SchemeKind::parse(tag)?;
        }
        if self.eps.is_some() {
            cfg.eps = self.eps;
        }
        if self.cells.is_some() {
            cfg.cells = self.cells;
        }
        if let Some(eta) = self.eta {
            cfg.ap.eta = eta;
        }
        if let Some(alpha) = self.alpha {
            cfg.ap.alpha = alpha;
        }
        if let Some(cfl) = self.cfl {
            cfg.ap.safety = cfl;
            cfg.classical.cfl = cfl;
        }
        if self.t_end.is_some() {
            cfg.t_end = self.t_end;
        }
        if let Some(f) = self.dt_eps_factor {
            cfg.classical.dt_eps_factor = f;
        }
        if self.dump_matrix {
            cfg.dump_matrix = true;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if cfg.out.is_none() {
            let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("epmac-out"), PathBuf::from);
            cfg.out = Some(root.join(format!("{}-{}", cfg.case, cfg.scheme.as_str())));
        }
        Ok(cfg)
    }
}

fn usage(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidConfig(_) | Error::UnknownCase(_) | Error::InvalidGrid(_) | Error::Json(_)
    )
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if usage(&e) { 2 } else { 1 })
}

fn summarize(outcome: &RunOutcome) {
    println!(
        "{} {}: {} steps, t = {}, {} snapshots, {:.2}s",
        outcome.case.name(),
        outcome.scheme.as_str(),
        outcome.reports.len(),
        outcome.snapshots.last().map_or(0.0, |s| s.t),
        outcome.snapshots.len(),
        outcome.wall_time_s
    );
    for c in &outcome.invariants {
        let status = match (c.passed, c.advisory) {
            (true, _) => "ok",
            (false, true) => "advisory",
            (false, false) => "FAILED",
        };
        println!("  {:<20} {:<8} worst {:.3e}", c.name, status, c.worst);
    }
    if let Some(e) = &outcome.error {
        println!("  aborted: {e}");
    }
    if let Some(dir) = &outcome.dir {
        println!("  output: {}", dir.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let outcome = match args.resolve().and_then(|cfg| run(&cfg)) {
                Ok(o) => o,
                Err(e) => return fail(e),
            };
            summarize(&outcome);
            if outcome.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Sweep { run, eps_list, workers } => {
            let cfg = match run.resolve() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let rows = match sweep(&SweepConfig {
                base: cfg,
                eps: eps_list,
                workers,
            }) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            println!("{:>10} {:>6} {:>11} {:>11} {:>12} {:>7}", "eps", "steps", "dt_min", "dt_max", "rho_dev", "energy");
            for r in &rows {
                println!(
                    "{:>10.3e} {:>6} {:>11.4e} {:>11.4e} {:>12.4e} {:>7} {}",
                    r.eps, r.steps, r.dt_min, r.dt_max, r.final_rho_dev, r.energy_ok, r.error
                );
            }
            if rows.iter().all(|r| r.error.is_empty()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Verify {
            seed,
            seeds,
            corrupt_duality,
        } => {
            let opts = VerifyOptions {
                corrupt_duality,
                samples: None,
            };
            let mut ok = true;
            for s in seed..seed.saturating_add(seeds.max(1)) {
                let report = verify(s, &opts);
                for c in &report.checks {
                    let status = if c.passed { "PASS" } else { "FAIL" };
                    println!("{status} seed={s} {:<18} ratio={:.3e} {}", c.name, c.worst_ratio, c.detail);
                }
                ok &= report.passed();
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Compare { run, schemes } => {
            let parsed: Result<Vec<SchemeKind>, Error> = schemes.iter().map(|s| SchemeKind::parse(s)).collect();
            let pair = match parsed {
                Ok(v) if v.len() == 2 => [v[0], v[1]],
                Ok(v) => {
                    return fail(Error::InvalidConfig(format!(
                        "compare needs exactly two schemes, got {}",
                        v.len()
                    )))
                }
                Err(e) => return fail(e),
            };
            let result = run.resolve().and_then(|cfg| compare(&cfg, pair));
            let cmp = match result {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            println!(
                "{} (t = {}) vs {} (t = {})",
                cmp.schemes[0].as_str(),
                cmp.t[0],
                cmp.schemes[1].as_str(),
                cmp.t[1]
            );
            println!("{:<6} {:>12} {:>12} {:>12}", "field", "L1", "L2", "Linf");
            for n in &cmp.norms {
                println!("{:<6} {:>12.4e} {:>12.4e} {:>12.4e}", n.field, n.l1, n.l2, n.linf);
            }
            if cmp.outcomes.iter().all(|o| o.error.is_none()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
