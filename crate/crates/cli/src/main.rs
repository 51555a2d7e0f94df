//! `boom`: simulate the boom model, check equilibrium stability, and calibrate it to data.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 numerical divergence.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use boom_core::dde::{integrate, HistorySpec};
use boom_core::inference::FixedSettings;
use boom_core::io::{self as bio, load_config_unvalidated, load_series, RunConfig};
use boom_core::pes::{FixedValues, PesSession, SessionStatus};
use boom_core::report::{fit_round, FitReport};
use boom_core::stability::{check_stability, StabilityVerdict};
use boom_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "boom", version, about = "Societal boom model with delayed feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Run configuration (`key=value` lines).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Random seed for the sampler.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the model and write the trajectory as CSV.
    Simulate(Common),
    /// Evaluate the stability conditions at the nontrivial equilibrium.
    Stability(Common),
    /// Run one sampling round against the data and write a fit report.
    Fit(Common),
    /// Start (or continue) an estimation session and run one round.
    Pes {
        #[command(flatten)]
        common: Common,
        /// Continue the session stored at PATH; `--set zeta/tau1/tau2` adjust it.
        #[arg(long, value_name = "PATH")]
        session: Option<PathBuf>,
        /// Finalize the session given by `--session` instead of running a round.
        #[arg(long, requires = "session")]
        finalize: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Directory for persisted sessions and jobs.
        #[arg(long, default_value = "boom-store")]
        store: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_divergence() => 3,
            Failure::Core(_) => 2,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn load(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config_unvalidated(path)?,
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| {
                Failure::Usage(format!(
                    "--set expects KEY=VALUE, got {kv:?}; keys: {}",
                    bio::CONFIG_KEYS.join(", ")
                ))
            })?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(out: Option<&Path>, text: &str) -> CliResult<()> {
    let mut w = output(out)?;
    let target = out.unwrap_or(Path::new("<stdout>"));
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(target, e))?;
    Ok(())
}

fn observed(cfg: &RunConfig) -> CliResult<boom_core::goodness::ObservedSeries> {
    let path = cfg
        .data
        .as_deref()
        .ok_or_else(|| Failure::Core(Error::Config("data: a series file is required".into())))?;
    Ok(load_series(path, cfg.normalize)?)
}

fn simulate(common: &Common) -> CliResult<()> {
    let cfg = load(common)?;
    let params = cfg.params().validated()?;
    let horizon = cfg.horizon.unwrap_or(100.0);
    let traj = integrate(&params, &HistorySpec::constant(cfg.initial_state(None)), horizon, cfg.step)?;
    let target = common.out.as_deref().unwrap_or(Path::new("<stdout>"));
    let mut w = output(common.out.as_deref())?;
    bio::write_trajectory_csv(&traj, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(target, e))?;
    Ok(())
}

fn condition_lines(v: &StabilityVerdict) -> String {
    let mut s = String::new();
    for (name, holds) in v.condition_table() {
        let mark = match holds {
            Some(true) => "holds",
            Some(false) => "fails",
            None => "not evaluable",
        };
        s.push_str(&format!("  {name:<50} {mark}\n"));
    }
    s
}

fn stability_text(v: &StabilityVerdict) -> String {
    let q = &v.quantities;
    let mut s = String::new();
    if let Some(eq) = &v.equilibrium {
        s.push_str(&format!("equilibrium  y1* = {}  y2* = {}\n", eq.y1_star, eq.y2_star));
    }
    s.push_str(&format!("A = {}\nB = {}\ntau1 bound = {}\n", q.a, q.b, q.tau1_bound));
    match q.tau2_bound {
        Some(b) => s.push_str(&format!("tau2 bound = {b}\n")),
        None => s.push_str("tau2 bound = not evaluable (epsilon = 0)\n"),
    }
    s.push_str("conditions:\n");
    s.push_str(&condition_lines(v));
    s.push_str(&format!("verdict: {:?}\n", v.verdict));
    s
}

fn stability(common: &Common) -> CliResult<()> {
    let cfg = load(common)?;
    let v = check_stability(&cfg.params())?;
    let text = match &common.out {
        Some(_) => bio::to_json(&v)?,
        None => stability_text(&v),
    };
    write_text(common.out.as_deref(), &text)
}

fn report_summary(r: &FitReport) -> String {
    let verdict = r
        .stability
        .as_ref()
        .map(|v| format!("{:?}", v.verdict))
        .unwrap_or_else(|| r.stability_note.clone().unwrap_or_default());
    format!(
        "R² = {:.4}  RMSE = {:.4e}  stability: {verdict}",
        r.r_squared, r.rmse
    )
}

fn fit(common: &Common) -> CliResult<()> {
    let cfg = load(common)?;
    let obs = observed(&cfg)?;
    let fixed = cfg.fixed_for(&obs)?;
    let settings = FixedSettings {
        zeta: fixed.zeta,
        tau1: fixed.tau1,
        tau2: fixed.tau2,
        initial_state: cfg.initial_state(Some(&obs)),
        sigma_obs: cfg.sigma_obs_for(&obs),
        step: cfg.step,
    };
    let report = fit_round(&obs, cfg.theta(), &settings, &cfg.mcmc(), |_, _| {})?;
    eprintln!("{}", report_summary(&report));
    write_text(common.out.as_deref(), &bio::to_json(&report)?)
}

fn adjustment(cfg: &RunConfig, current: FixedValues) -> Option<FixedValues> {
    if cfg.zeta.is_none() && cfg.tau1.is_none() && cfg.tau2.is_none() {
        return None;
    }
    Some(FixedValues {
        zeta: cfg.zeta.unwrap_or(current.zeta),
        tau1: cfg.tau1.unwrap_or(current.tau1),
        tau2: cfg.tau2.unwrap_or(current.tau2),
    })
}

fn pes(common: &Common, resume: Option<&Path>, finalize: bool) -> CliResult<()> {
    let cfg = load(common)?;
    let mut session: PesSession = match resume {
        Some(path) => bio::read_json(path)?,
        None => cfg.start_session(observed(&cfg)?)?,
    };
    let out = common.out.as_deref().or(resume);
    if finalize {
        let report = session.finalize()?;
        eprintln!(
            "finalized at iteration {}: {}",
            session.final_index.unwrap_or_default(),
            report_summary(&report)
        );
        if let Some(path) = resume {
            bio::write_json(&session, path)?;
        }
        return match &common.out {
            Some(path) => Ok(bio::write_json(&report, path)?),
            None => write_text(None, &bio::to_json(&report)?),
        };
    }
    if session.status == SessionStatus::Finalized {
        return Err(Error::Session("session is finalized".into()).into());
    }
    let adj = match resume {
        Some(_) => adjustment(&cfg, session.fixed),
        None => None,
    };
    let entry = session.iterate(adj, &cfg.mcmc())?;
    eprintln!(
        "iteration {}: zeta = {}  tau1 = {}  tau2 = {}  {}",
        entry.index,
        entry.fixed.zeta,
        entry.fixed.tau1,
        entry.fixed.tau2,
        report_summary(&entry.report)
    );
    write_text(out, &bio::to_json(&session)?)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => simulate(&c),
        Command::Stability(c) => stability(&c),
        Command::Fit(c) => fit(&c),
        Command::Pes {
            common,
            session,
            finalize,
        } => pes(&common, session.as_deref(), finalize),
        Command::Serve { listen, store } => boom_server::serve_blocking(listen, store)
            .map_err(|e| Failure::Core(Error::io("<server>", e))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Core(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
