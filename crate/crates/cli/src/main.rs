use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rankstop::numerics::{QuadratureConfig, RootConfig};
use rankstop::oracle::enumerate_relrank_policies;
use rankstop::relranks::{case_values, compute_pq, PermutationTable};
use rankstop::report::{self, parse_probability, PolicySpec, RunManifest, Tolerances, VerifyOptions};
use rankstop::simulate::{estimate_expected_rank_detailed, estimate_pq_monte_carlo, chunk_partials_csv};
use rankstop::{DistSpec, SimConfig, SymmetricDistribution};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "rankstop", version, about = "Expected-rank stopping rules for short symmetric random walks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV instead of JSON for tabular commands.
    #[arg(long, global = true)]
    csv: bool,
    /// Simulation threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[arg(long, global = true, env = "RANKSTOP_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, global = true, default_value_t = QuadratureConfig::default().abs_tol)]
    quad_abs_tol: f64,
    #[arg(long, global = true, default_value_t = QuadratureConfig::default().rel_tol)]
    quad_rel_tol: f64,
    #[arg(long, global = true, default_value_t = QuadratureConfig::default().max_subdivisions)]
    quad_max_subdivisions: usize,
    #[arg(long, global = true, default_value_t = RootConfig::default().x_tol)]
    root_x_tol: f64,
    #[arg(long, global = true, default_value_t = RootConfig::default().f_tol)]
    root_f_tol: f64,
    #[arg(long, global = true, default_value_t = RootConfig::default().max_iter)]
    root_max_iter: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Full,
    Relranks,
}

#[derive(Clone, Copy, ValueEnum)]
enum PqMode {
    Quadrature,
    MonteCarlo,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal rule and value for one distribution.
    Solve {
        /// Distribution JSON, or @PATH to read it from a file.
        #[arg(long)]
        dist: String,
        #[arg(long, value_enum)]
        model: Model,
    },
    /// Runs every invariant check; exits 1 if any fails.
    Verify {
        #[arg(long)]
        dist: String,
        /// Monte Carlo paths per policy (0 skips the simulation checks).
        #[arg(long, default_value_t = VerifyOptions::default().mc_paths)]
        mc_paths: u64,
        /// Grid DP atoms (0 skips the DP check).
        #[arg(long, default_value_t = VerifyOptions::default().dp_atoms)]
        dp_atoms: usize,
    },
    /// Summary table for horizon 3.
    Table2,
    /// Samples W1 on an even grid.
    Curve {
        #[arg(long)]
        dist: String,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Monte Carlo estimate of a policy's expected rank.
    Simulate {
        #[arg(long)]
        dist: String,
        /// thm1, thm2, thm4a, thm4b, stop_at_0, stop_at_n, a JSON rank table or @PATH.
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 1_000_000)]
        paths: u64,
        /// Defaults to the policy's own horizon, else 3.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = SimConfig::new(1, 1, 0).chunk_size)]
        chunk_size: u64,
    },
    /// The p/q split and the ordering table.
    Pq {
        #[arg(long)]
        dist: String,
        #[arg(long, value_enum, default_value = "quadrature")]
        method: PqMode,
        /// Paths for the Monte Carlo method.
        #[arg(long, default_value_t = 10_000_000)]
        paths: u64,
    },
    /// Exhaustive search over relative-rank policies.
    Enumerate {
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        /// Probability p as a fraction or a decimal (horizon 3 only).
        #[arg(long, default_value = "1/192")]
        p: String,
    },
}

enum Failure {
    Input(String),
    Numeric(String),
}

impl From<rankstop::Error> for Failure {
    fn from(e: rankstop::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numeric(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    manifest: &'a RunManifest,
    result: T,
}

/// Primary output and whether every check in it passed.
struct Output {
    text: String,
    ok: bool,
}

fn read_arg(text: &str) -> CliResult<String> {
    match text.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {path}: {e}"))),
        None => Ok(text.to_string()),
    }
}

fn load_dist(text: &str) -> CliResult<(DistSpec, SymmetricDistribution)> {
    let spec = DistSpec::from_json(&read_arg(text)?)?;
    let dist = spec.build()?;
    Ok((spec, dist))
}

fn json<T: Serialize>(manifest: &RunManifest, result: T) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope { manifest, result }).expect("reports serialize");
    s.push('\n');
    s
}

fn csv_with_manifest(manifest: &RunManifest, body: &str) -> String {
    let m = serde_json::to_string(manifest).expect("manifests serialize");
    format!("# manifest: {m}\n{body}")
}

fn run(cli: &Cli) -> CliResult<Output> {
    let c = &cli.common;
    let tol = Tolerances {
        quadrature: QuadratureConfig {
            abs_tol: c.quad_abs_tol,
            rel_tol: c.quad_rel_tol,
            max_subdivisions: c.quad_max_subdivisions,
        },
        root: RootConfig { x_tol: c.root_x_tol, f_tol: c.root_f_tol, max_iter: c.root_max_iter },
    };
    let ok = |text| Ok(Output { text, ok: true });
    match &cli.command {
        Command::Solve { dist, model } => {
            let (spec, d) = load_dist(dist)?;
            let m = RunManifest::new("solve", Some(spec), tol, None);
            match model {
                Model::Full => ok(json(&m, report::solve_full(&d, &tol)?)),
                Model::Relranks => ok(json(&m, report::solve_relranks(&d, &tol)?)),
            }
        }
        Command::Verify { dist, mc_paths, dp_atoms } => {
            let (spec, d) = load_dist(dist)?;
            let opts = VerifyOptions { mc_paths: *mc_paths, seed: c.seed, workers: c.workers, dp_atoms: *dp_atoms };
            let m = RunManifest::new("verify", Some(spec), tol, Some(c.seed));
            let r = report::verify(&d, &tol, &opts);
            for f in r.failures() {
                eprintln!("FAILED {}: {}", f.name, f.detail);
            }
            Ok(Output { ok: r.passed, text: json(&m, &r) })
        }
        Command::Table2 => {
            let m = RunManifest::new("table2", None, tol, None);
            let rows = report::table2(&tol)?;
            ok(if c.csv { csv_with_manifest(&m, &report::table2_csv(&rows)) } else { json(&m, rows) })
        }
        Command::Curve { dist, from, to, points } => {
            let (spec, d) = load_dist(dist)?;
            let m = RunManifest::new("curve", Some(spec), tol, None);
            let curve = report::curve(&d, &tol, *from, *to, *points)?;
            ok(if c.csv { csv_with_manifest(&m, &curve.to_csv()) } else { json(&m, curve) })
        }
        Command::Simulate { dist, policy, paths, horizon, chunk_size } => {
            let (spec, d) = load_dist(dist)?;
            let ps = PolicySpec::parse(&read_arg(policy)?)?;
            let horizon = horizon.or(ps.horizon()).unwrap_or(3);
            let policy = ps.build(&d, horizon, &tol)?;
            let cfg = SimConfig::new(*paths, horizon, c.seed).with_workers(c.workers).with_chunk_size(*chunk_size);
            let m = RunManifest::new("simulate", Some(spec), tol, Some(c.seed));
            let (r, chunks) = estimate_expected_rank_detailed(&d, &policy, &cfg)?;
            ok(if c.csv { csv_with_manifest(&m, &chunk_partials_csv(&chunks)) } else { json(&m, r) })
        }
        Command::Pq { dist, method, paths } => {
            let (spec, d) = load_dist(dist)?;
            let (pq, seed) = match method {
                PqMode::Quadrature => (compute_pq(&d, &tol.quadrature)?, None),
                PqMode::MonteCarlo => {
                    let cfg = SimConfig::new(*paths, 3, c.seed).with_workers(c.workers);
                    (estimate_pq_monte_carlo(&d, &cfg)?, Some(c.seed))
                }
            };
            let m = RunManifest::new("pq", Some(spec), tol, seed);
            let table = PermutationTable::from_params(&pq)?;
            if c.csv {
                return ok(csv_with_manifest(&m, &table.to_csv()));
            }
            let result = serde_json::json!({
                "pq": pq,
                "value": pq.value(),
                "branch": pq.branch(),
                "table": table.to_json(),
                "cases": case_values(pq.p, pq.q)?,
            });
            ok(json(&m, result))
        }
        Command::Enumerate { horizon, p } => {
            let p = parse_probability(p)?;
            let m = RunManifest::new("enumerate", None, tol, None);
            ok(json(&m, enumerate_relrank_policies(*horizon, p)?))
        }
    }
}

fn emit(path: Option<&PathBuf>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if let Err(e) = emit(cli.common.out.as_ref(), &out.text) {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(1);
            }
            ExitCode::from(if out.ok { 0 } else { 1 })
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            let diag = serde_json::json!({ "error": "numeric failure", "detail": msg });
            println!("{diag}");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
