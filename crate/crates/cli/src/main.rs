use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use bayescub::domain::BUILT_IN_NAMES;
use bayescub::{Criterion, GeneratingVector, KernelSpec, Transform};
use bayescub_cli::{
    compare, run_one, success_rate, sweep, write_compare_csv, write_records, RunRecord, RunSpec, SweepConfig,
};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

/// Automatic Bayesian cubature on rank-1 lattices.
#[derive(Parser, Debug)]
#[command(name = "bayescub", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one built-in integrand and print the result.
    Integrate {
        #[command(flatten)]
        common: Common,
        /// Absolute error tolerance.
        #[arg(long)]
        tol: f64,
        /// Seed of the random lattice shift.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Repeat an integration over log-uniform random tolerances and write CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        #[arg(long)]
        tol_lo: f64,
        #[arg(long)]
        tol_hi: f64,
        /// Seed for the tolerance and shift draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave the time_s column empty so that output is byte-reproducible.
        #[arg(long)]
        omit_time: bool,
    },
    /// Time one fit and width evaluation on the fast and generic paths.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated powers of two.
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        /// Range parameter of the Matérn kernel on the generic path.
        #[arg(long, default_value_t = 1.0)]
        matern_scale: f64,
        /// Time the fast path only.
        #[arg(long)]
        fast_only: bool,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Built-in integrand: mvn, keister or option.
    #[arg(long)]
    integrand: String,
    /// Dimension; the integrand's default when absent.
    #[arg(long)]
    dim: Option<usize>,
    /// mle, full or gcv.
    #[arg(long, default_value = "mle")]
    criterion: Criterion,
    /// Bernoulli kernel order (1 or 2); the integrand's default when absent.
    #[arg(long)]
    kernel_r: Option<u32>,
    /// none, baker, sidi1 or sidi2; the integrand's default when absent.
    #[arg(long)]
    transform: Option<Transform>,
    #[arg(long, default_value_t = 1 << 8)]
    n0: usize,
    #[arg(long, default_value_t = 1 << 20)]
    nmax: usize,
    /// Generating vector file (line 1 = max dimension, then one odd integer per line).
    #[arg(long, env = "BAYESCUB_GEN_VECTOR")]
    gen_vector: Option<PathBuf>,
}

impl Common {
    fn spec(&self, tolerance: f64, seed: u64) -> Result<RunSpec, String> {
        if !BUILT_IN_NAMES.contains(&self.integrand.as_str()) {
            return Err(format!(
                "unknown integrand '{}' (expected one of {})",
                self.integrand,
                BUILT_IN_NAMES.join(", ")
            ));
        }
        let mut spec = RunSpec::new(&self.integrand, tolerance);
        spec.dim = self.dim;
        spec.criterion = self.criterion;
        spec.order = self.kernel_r;
        spec.transform = self.transform;
        spec.seed = seed;
        spec.n0 = self.n0;
        spec.n_max = self.nmax;
        if let Some(path) = &self.gen_vector {
            spec.generating_vector = GeneratingVector::from_file(path).map_err(|e| e.to_string())?;
        }
        spec.resolve().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

enum Failure {
    Usage(&'static str, String),
    Runtime(String),
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn io::Write>, Failure> {
    match out {
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn io::Write>)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn print_record(r: &RunRecord) {
    println!("integrand   {} (d = {})", r.integrand, r.dim);
    println!(
        "criterion   {}  transform {}  r = {}",
        r.criterion, r.transform, r.order
    );
    println!("estimate    {:.12e}", r.mu_hat);
    println!("half-width  {:.3e}  (tolerance {:.3e})", r.half_width, r.eps);
    println!("n           {}", r.n);
    if let Some(t) = r.time_s {
        println!("time        {t:.4} s");
    }
    if let Some(ratio) = r.err_ratio {
        println!("error/tol   {ratio:.4}");
    }
    println!("converged   {}", r.converged);
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Integrate { common, tol, seed } => {
            let usage_error = |m: String| Failure::Usage("integrate", m);
            let spec = common.spec(tol, seed).map_err(usage_error)?;
            let (record, _) = run_one(&spec).map_err(|e| Failure::Runtime(e.to_string()))?;
            print_record(&record);
            if !record.converged {
                eprintln!("warning: tolerance not met within n_max = {}", spec.n_max);
            }
            Ok(if record.converged { 0 } else { 2 })
        }
        Command::Sweep {
            common,
            replicates,
            tol_lo,
            tol_hi,
            seed,
            out,
            omit_time,
        } => {
            let usage_error = |m: String| Failure::Usage("sweep", m);
            let mut base = common.spec(tol_lo, seed).map_err(usage_error)?;
            base.record_time = !omit_time;
            let cfg = SweepConfig {
                base,
                replicates,
                tol_lo,
                tol_hi,
            };
            cfg.draws().map_err(|e| usage_error(e.to_string()))?;
            let writer = open_out(&out)?;
            let runs = sweep(&cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
            let records: Vec<RunRecord> = runs.into_iter().map(|r| r.record).collect();
            write_records(writer, &records).map_err(|e| Failure::Runtime(e.to_string()))?;
            match success_rate(&records) {
                Some(rate) => eprintln!(
                    "success rate {rate:.4} ({} of {} runs within tolerance)",
                    records.iter().filter(|r| r.succeeded() == Some(true)).count(),
                    records.len()
                ),
                None => eprintln!("success rate unavailable: no reference value"),
            }
            Ok(0)
        }
        Command::Compare {
            common,
            n_list,
            matern_scale,
            fast_only,
            repeats,
            seed,
            out,
        } => {
            let usage_error = |m: String| Failure::Usage("compare", m);
            let spec = common.spec(1e-3, seed).map_err(usage_error)?;
            let kernel = KernelSpec::matern(matern_scale).map_err(|e| usage_error(e.to_string()))?;
            let writer = open_out(&out)?;
            let records = compare(&spec, &n_list, (!fast_only).then_some(kernel), repeats)
                .map_err(|e| usage_error(e.to_string()))?;
            for r in records.iter().filter(|r| !fast_only && r.generic_s.is_none()) {
                eprintln!(
                    "generic path skipped at n = {}: dense algebra is limited to n <= 8192",
                    r.n
                );
            }
            write_compare_csv(writer, &records).map_err(|e| Failure::Runtime(e.to_string()))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(sub, msg)) => {
            let mut cmd = Cli::command();
            cmd.build();
            let usage = cmd
                .find_subcommand_mut(sub)
                .map(|c| c.render_usage())
                .unwrap_or_else(|| Cli::command().render_usage());
            eprintln!("error: {msg}\n\n{usage}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
