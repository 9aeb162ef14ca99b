//! `mcox`: simulate, score, validate and fit marginalized Cox processes.

mod error;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use marginal_cox::inference::{initial_coefficients, mh_fit, mle_fit, summarize};
use marginal_cox::marginal::{marginal_loglik, marginal_loglik_lattice};
use marginal_cox::oracles::{
    grid_coeff_marginal, grid_log_marginal, mc_marginal_with, GridSpec, McSpec,
};
use marginal_cox::par::Exec;
use marginal_cox::paths::{adapt_path, tune_w};
use marginal_cox::{simulate, CountPath, ModelParams};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::io::{FitFile, ModelConfig, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "mcox", version, about = "Marginalized Cox process toolkit")]
struct Cli {
    /// Worker threads for replica-parallel work; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct EventsAndModel {
    #[arg(long)]
    events: PathBuf,
    /// Model JSON: {"T", "beta0", "w", "gamma": {"type": "poly", "coeffs": [...]}}
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw (X, Y) from the model and write X's event times.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the latent jump times here.
        #[arg(long)]
        emit_latent: Option<PathBuf>,
    },
    /// Print the closed-form marginal log-likelihood.
    Loglik {
        #[command(flatten)]
        io: EventsAndModel,
    },
    /// Compare the closed form against the grid and Monte Carlo oracles.
    Validate {
        #[command(flatten)]
        io: EventsAndModel,
        #[arg(long, default_value_t = 1 << 14)]
        grid_n: usize,
        #[arg(long, default_value_t = 100_000)]
        mc_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Metropolis–Hastings over γ's coefficients; writes the chain CSV.
    FitMcmc {
        #[arg(long)]
        events: PathBuf,
        /// Fit JSON: "T", "beta0", "w" plus sampler settings.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Maximum-likelihood γ by Nelder–Mead; prints JSON.
    FitMle {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated starting coefficients.
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<f64>>,
        #[arg(long, default_value_t = 2_000)]
        budget: usize,
    },
    /// Turn a raw count series into a path compatible with increasing γ.
    Adapt {
        #[arg(long)]
        events: PathBuf,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long)]
        out: PathBuf,
        /// Weight for the scaled integral; tuned to keep the event count if absent.
        #[arg(long)]
        w: Option<f64>,
    },
    /// Posterior summaries and a plot-ready γ / Γ band.
    Summarize {
        #[arg(long)]
        chain: PathBuf,
        /// Time grid as start:end:points.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Run {
    args: Vec<String>,
    started_at: String,
    exec: Exec,
}

impl Run {
    fn manifest(
        &self,
        command: &str,
        config_sha256: Option<String>,
        inputs: Vec<(String, String)>,
        seed: Option<u64>,
        extras: Value,
    ) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            args: self.args.clone(),
            config_sha256,
            inputs,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            started_at: self.started_at.clone(),
            finished_at: now(),
            extras,
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

fn input_hash(path: &Path) -> Result<(String, String), CliError> {
    Ok((path.display().to_string(), io::sha256_hex(&io::read_bytes(path)?)))
}

fn load_model(path: &Path) -> Result<(ModelParams, String), CliError> {
    let loaded = io::read_json::<ModelConfig>(path)?;
    Ok((loaded.value.params(path)?, loaded.sha256))
}

fn load_fit(path: &Path) -> Result<(FitFile, String), CliError> {
    let loaded = io::read_json::<FitFile>(path)?;
    loaded.value.fit.validate().map_err(|e| CliError::config(path, e))?;
    Ok((loaded.value, loaded.sha256))
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("--grid expects start:end:points, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(bad());
    };
    let a: f64 = a.parse().map_err(|_| bad())?;
    let b: f64 = b.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

fn cmd_simulate(
    run: &Run,
    config: &Path,
    seed: u64,
    out: &Path,
    latent: Option<&Path>,
) -> Result<(), CliError> {
    let (params, sha) = load_model(config)?;
    let sim = simulate(&params, seed)?;
    let comments = [
        ("seed", seed.to_string()),
        ("T", params.horizon().to_string()),
    ];
    io::write_atomic(out, io::format_events(sim.x.jumps(), &comments).as_bytes())?;
    if let Some(path) = latent {
        io::write_atomic(path, io::format_events(sim.y.jumps(), &comments).as_bytes())?;
    }
    let extras = json!({ "events": sim.x.len(), "latent_jumps": sim.y.len() });
    io::write_manifest(out, &run.manifest("simulate", Some(sha), vec![], Some(seed), extras))
}

fn loglik_json(x: &CountPath, params: &ModelParams) -> Result<Value, CliError> {
    let r = marginal_loglik(x, params)?;
    Ok(json!({
        "loglik": r.loglik,
        "polynomial_term_log": r.polynomial_term_log,
        "exponent_term": r.exponent_term,
        "events": r.jumps,
    }))
}

fn cmd_loglik(io: &EventsAndModel) -> Result<(), CliError> {
    let (params, _) = load_model(&io.config)?;
    let x = io::read_events(&io.events, params.horizon())?;
    print_json(&loglik_json(&x, &params)?);
    Ok(())
}

fn oracle_entry(result: marginal_cox::Result<f64>, ln_p: f64) -> Value {
    match result {
        Ok(ln_q) => json!({
            "log_value": ln_q,
            "relative_error": ((ln_q - ln_p).exp() - 1.0).abs(),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn cmd_validate(
    run: &Run,
    io: &EventsAndModel,
    grid_n: usize,
    mc_n: usize,
    seed: u64,
) -> Result<(), CliError> {
    let (params, _) = load_model(&io.config)?;
    let x = io::read_events(&io.events, params.horizon())?;
    let closed = marginal_loglik(&x, &params)?;
    let ln_p = closed.loglik;
    let lattice = marginal_loglik_lattice(&x, &params)?.loglik;

    let grid = GridSpec::new(grid_n, &params).and_then(|spec| grid_log_marginal(&x, &params, &spec));
    let discrete = grid_coeff_marginal(&x, &params, grid_n).map(f64::ln);
    let mc = McSpec::new(mc_n, seed).and_then(|spec| mc_marginal_with(&x, &params, &spec, run.exec));
    let mc_json = match mc {
        Ok(est) => json!({
            "replicas": est.replicas,
            "log_estimate": est.ln_estimate,
            "relative_se": est.relative_se,
            "z": est.z_score(ln_p),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    print_json(&json!({
        "events": x.len(),
        "loglik": ln_p,
        "lattice_loglik": lattice,
        "grid": { "n": grid_n, "result": oracle_entry(grid, ln_p) },
        "discrete_recursion": { "n": grid_n, "result": oracle_entry(discrete, ln_p) },
        "monte_carlo": mc_json,
    }));
    Ok(())
}

fn cmd_fit_mcmc(
    run: &Run,
    events: &Path,
    config: &Path,
    out: &Path,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let (mut file, sha) = load_fit(config)?;
    if let Some(seed) = seed {
        file.fit.seed = seed;
    }
    let x = io::read_events(events, file.horizon)?;
    let chain = mh_fit(&x, file.beta0, file.w, &file.fit)?;
    for warning in &chain.warnings {
        eprintln!("warning: {warning}");
    }
    io::write_atomic(out, io::format_chain(&chain).as_bytes())?;
    let report = json!({
        "draws": chain.len(),
        "accept_rate": chain.accept_rate,
        "proposal_sd": chain.proposal_sd,
        "evaluations": chain.evaluations,
        "infeasible_proposals": chain.infeasible,
        "warnings": chain.warnings,
    });
    let inputs = vec![input_hash(events)?];
    io::write_manifest(
        out,
        &run.manifest("fit-mcmc", Some(sha), inputs, Some(file.fit.seed), report.clone()),
    )?;
    print_json(&report);
    Ok(())
}

fn cmd_fit_mle(
    events: &Path,
    config: &Path,
    start: Option<Vec<f64>>,
    budget: usize,
) -> Result<(), CliError> {
    let (file, _) = load_fit(config)?;
    let x = io::read_events(events, file.horizon)?;
    let start = start
        .or_else(|| file.fit.init.clone())
        .unwrap_or_else(|| initial_coefficients(&x, file.beta0, file.w, file.fit.n_coeffs()));
    let fit = mle_fit(&x, file.beta0, file.w, &start, budget)?;
    if !fit.converged {
        eprintln!("warning: evaluation budget exhausted before convergence");
    }
    print_json(&json!({
        "coeffs": fit.coeffs,
        "loglik": fit.loglik,
        "converged": fit.converged,
        "evaluations": fit.evaluations,
    }));
    Ok(())
}

fn cmd_adapt(
    run: &Run,
    events: &Path,
    horizon: f64,
    out: &Path,
    w: Option<f64>,
) -> Result<(), CliError> {
    let raw = io::read_events(events, horizon)?;
    let (w, tuned) = match w {
        Some(w) => (w, false),
        None => (tune_w(&raw)?, true),
    };
    let adapted = adapt_path(&raw, w)?;
    let comments = [("w", w.to_string()), ("T", horizon.to_string())];
    io::write_atomic(out, io::format_events(adapted.path.jumps(), &comments).as_bytes())?;
    let extras = json!({
        "w": w,
        "w_tuned": tuned,
        "raw_events": raw.len(),
        "adapted_events": adapted.path.len(),
    });
    let inputs = vec![input_hash(events)?];
    io::write_manifest(out, &run.manifest("adapt", None, inputs, None, extras))
}

fn cmd_summarize(run: &Run, chain_path: &Path, grid: &str, out: &Path) -> Result<(), CliError> {
    let grid = parse_grid(grid)?;
    let chain = io::read_chain(chain_path)?;
    let summary = summarize(&chain, &grid)?;
    io::write_atomic(out, io::format_band(&summary.band).as_bytes())?;
    let coefficients = json!(summary.coefficients);
    let inputs = vec![input_hash(chain_path)?];
    io::write_manifest(
        out,
        &run.manifest("summarize", None, inputs, None, json!({ "draws": chain.len() })),
    )?;
    print_json(&json!({ "draws": chain.len(), "coefficients": coefficients }));
    Ok(())
}

fn configure_threads(jobs: Option<usize>) -> Result<Exec, CliError> {
    match jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(1) => Ok(Exec::Sequential),
        Some(_n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(_n)
                .build_global()
                .map_err(|e| CliError::Usage(format!("cannot start {_n} threads: {e}")))?;
            Ok(Exec::default())
        }
        None => Ok(Exec::default()),
    }
}

fn dispatch(cli: Cli, args: Vec<String>) -> Result<(), CliError> {
    let run = Run {
        args,
        started_at: now(),
        exec: configure_threads(cli.jobs)?,
    };
    match &cli.command {
        Command::Simulate {
            config,
            seed,
            out,
            emit_latent,
        } => cmd_simulate(&run, config, *seed, out, emit_latent.as_deref()),
        Command::Loglik { io } => cmd_loglik(io),
        Command::Validate {
            io,
            grid_n,
            mc_n,
            seed,
        } => cmd_validate(&run, io, *grid_n, *mc_n, *seed),
        Command::FitMcmc {
            events,
            config,
            out,
            seed,
        } => cmd_fit_mcmc(&run, events, config, out, *seed),
        Command::FitMle {
            events,
            config,
            start,
            budget,
        } => cmd_fit_mle(events, config, start.clone(), *budget),
        Command::Adapt {
            events,
            horizon,
            out,
            w,
        } => cmd_adapt(&run, events, *horizon, out, *w),
        Command::Summarize { chain, grid, out } => cmd_summarize(&run, chain, grid, out),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            eprintln!("{}", CliError::Usage(first).report());
            return ExitCode::from(error::EXIT_USAGE as u8);
        }
    };
    // argv[0] varies between installs, so only the arguments are recorded
    match dispatch(cli, args[1..].to_vec()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
