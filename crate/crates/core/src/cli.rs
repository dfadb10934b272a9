//! Command-line front-end.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::chernoff::{self, ChernoffQuery, Side};
use crate::config::{ConfigError, RunConfig};
use crate::error::Error;
use crate::keyrate::{sweep, KeyRatePoint, Mode};
use crate::trojan::{analyze, effective_mu_out, simulate_trojan_fill, PhotonNumberDistribution, MIN_PULSES};

pub const CSV_HEADER: &str = "distance_km,Q_mu,E_mu,M1_L,Y1_L,E1_U,mu_out_eff,delta,E1_ph,R_per_pulse,R_per_click";
const COIN_HEADER: &str = "mode,mu_out,mu_out_eff,fidelity,delta,y1,delta_prime,e1_bit,e1_phase,vacuous";

#[derive(Debug, Parser)]
#[command(
    name = "qkd-trojan",
    version,
    about = "Trojan-horse side-channel analysis for decoy-state BB84"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantum-coin imbalance and phase-error bound for one operating point
    Coin(CoinArgs),
    /// Secret key rate over a distance sweep, as CSV
    Keyrate(KeyrateArgs),
    /// Chernoff corrections for a single expectation
    Bounds(BoundsArgs),
    /// Monte Carlo check that no probe fills more pulses than the bound
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run configuration; built-in defaults when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured mode
    #[arg(long, value_parser = ["asymptotic", "finite"])]
    pub mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct CoinArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Also write the report as a one-row CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KeyrateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// CSV destination; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Expectation value
    #[arg(long)]
    pub x: f64,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value = "upper")]
    pub side: Side,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000_000)]
    pub n_pulses: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Scales the mean of every tested distribution (values above 1 must fail)
    #[arg(long, default_value_t = 1.0)]
    pub mean_scale: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid argument `{name}`: {reason}")]
    Usage { name: &'static str, reason: String },
    #[error("analysis aborted: {0}")]
    Analysis(Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("validation failed")]
    ValidationFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(ConfigError::Io { .. }) => 4,
            CliError::Config(_) | CliError::Usage { .. } => 2,
            CliError::Analysis(_) => 3,
            CliError::Io { .. } => 4,
            CliError::ValidationFailed => 5,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

fn stdout_err(e: io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(mode) = &args.mode {
        cfg.mode = mode.parse().map_err(|e: Error| CliError::Usage {
            name: "mode",
            reason: e.to_string(),
        })?;
    }
    Ok(cfg)
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn csv_row(p: &KeyRatePoint) -> String {
    let v = [
        p.distance_km,
        p.gain_signal,
        p.qber_signal,
        p.m1_lower,
        p.y1,
        p.e1_bit,
        p.mu_out_eff,
        p.delta,
        p.e1_phase,
        p.rate,
        p.rate_per_click,
    ];
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
    cells.join(",")
}

/// Key-rate table with the effective config as a comment header.
pub fn keyrate_csv(cfg: &RunConfig, points: &[KeyRatePoint]) -> String {
    let mut s = cfg.comment_block();
    s.push_str(CSV_HEADER);
    s.push('\n');
    for p in points {
        s.push_str(&csv_row(p));
        s.push('\n');
    }
    s
}

pub fn cmd_keyrate(args: &KeyrateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.cfg)?;
    let pipe = cfg.pipeline()?;
    let distances = cfg.sweep.distances()?;
    let points = sweep(&pipe, &distances).map_err(CliError::Analysis)?;
    let csv = keyrate_csv(&cfg, &points);
    match &args.out {
        Some(path) => write_atomic(path, &csv),
        None => out.write_all(csv.as_bytes()).map_err(stdout_err),
    }
}

pub fn cmd_coin(args: &CoinArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.cfg)?;
    let prep = cfg.prep.model()?;
    let budget = cfg.budget.budget()?;
    let mu_eff = match cfg.mode {
        Mode::Asymptotic => budget.mu_out,
        Mode::Finite => {
            let m1 = cfg.coin.m1_lower.ok_or_else(|| ConfigError::Field {
                field: "coin.m1_lower".into(),
                reason: "required in finite mode".into(),
            })?;
            effective_mu_out(m1, budget.mu_out, budget.epsilon).map_err(CliError::Analysis)?
        }
    };
    let a = analyze(&prep, mu_eff, cfg.coin.y1, cfg.coin.e1_bit).map_err(CliError::Analysis)?;

    let mut report = String::new();
    let _ = writeln!(report, "mode          = {}", cfg.mode);
    let _ = writeln!(report, "mu_out        = {:.10e}", budget.mu_out);
    let _ = writeln!(report, "mu_out_eff    = {:.10e}", mu_eff);
    let _ = writeln!(report, "fidelity      = {:.16}", a.fidelity);
    let _ = writeln!(report, "delta         = {:.10e}", a.delta);
    let _ = writeln!(report, "y1            = {:.10e}", a.y1);
    let _ = writeln!(report, "delta_prime   = {:.10e}", a.delta_prime);
    let _ = writeln!(report, "e1_bit        = {:.10e}", a.e1_bit);
    let _ = writeln!(report, "e1_phase      = {:.10e}", a.e1_phase);
    if a.vacuous {
        let _ = writeln!(
            report,
            "warning: normalized imbalance exceeds 1/2, phase-error bound is trivial"
        );
    }
    out.write_all(report.as_bytes()).map_err(stdout_err)?;

    if let Some(path) = &args.out {
        let mut csv = cfg.comment_block();
        let _ = writeln!(csv, "{COIN_HEADER}");
        let nums: Vec<String> = [mu_eff, a.fidelity, a.delta, a.y1, a.delta_prime, a.e1_bit, a.e1_phase]
            .iter()
            .map(|x| format!("{x:.16e}"))
            .collect();
        let _ = writeln!(
            csv,
            "{},{:.16e},{},{}",
            cfg.mode,
            budget.mu_out,
            nums.join(","),
            a.vacuous
        );
        write_atomic(path, &csv)?;
    }
    Ok(())
}

pub fn cmd_bounds(args: &BoundsArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let q = ChernoffQuery::new(args.x, args.epsilon, args.side).map_err(|e| CliError::Usage {
        name: "x/epsilon",
        reason: e.to_string(),
    })?;
    let mut report = String::new();
    let _ = writeln!(report, "x             = {:.10e}", q.x);
    let _ = writeln!(report, "epsilon       = {:.10e}", q.epsilon);
    let _ = writeln!(report, "side          = {}", q.side);
    match chernoff::chernoff_delta_numeric(&q) {
        Ok(delta) => {
            let _ = writeln!(report, "delta_numeric = {delta:.16e}");
            if q.side == Side::Upper {
                let closed = chernoff::chernoff_delta_closed_form(q.x, q.epsilon).map_err(CliError::Analysis)?;
                let rel = if delta > 0.0 {
                    (closed - delta).abs() / delta
                } else {
                    (closed - delta).abs()
                };
                let _ = writeln!(report, "delta_closed  = {closed:.16e}");
                let _ = writeln!(report, "cross_check   = {rel:.3e}");
            }
        }
        Err(Error::NoSolution { .. }) => {
            writeln!(
                err,
                "warning: lower Chernoff bound has no solution (eps < e^-x); bound clamped to 0"
            )
            .map_err(|e| CliError::io(Path::new("<stderr>"), e))?;
            let _ = writeln!(report, "delta_numeric = none");
        }
        Err(e) => return Err(CliError::Analysis(e)),
    }
    let _ = writeln!(report, "bound         = {:.16e}", chernoff::bound_value(&q));
    out.write_all(report.as_bytes()).map_err(stdout_err)
}

/// Probe statistics tested by `validate`, each with mean `m`.
pub fn validation_battery(m: f64) -> Vec<(&'static str, PhotonNumberDistribution)> {
    use PhotonNumberDistribution as P;
    vec![
        ("two-point", P::two_point(m)),
        ("poisson", P::Poisson { mean: m }),
        ("geometric", P::Geometric { mean: m }),
        (
            "mixture",
            P::Mixture(vec![
                (0.5, P::two_point(m)),
                (0.3, P::Poisson { mean: 0.5 * m }),
                (0.2, P::Geometric { mean: 1.75 * m }),
            ]),
        ),
    ]
}

pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if args.n_pulses < MIN_PULSES {
        return Err(CliError::Usage {
            name: "n-pulses",
            reason: format!("need at least {MIN_PULSES}"),
        });
    }
    if !(args.mean_scale > 0.0 && args.mean_scale.is_finite()) {
        return Err(CliError::Usage {
            name: "mean-scale",
            reason: "must be > 0".into(),
        });
    }
    let mu = cfg.budget.budget()?.mu_out;
    let m = mu * args.mean_scale;
    if m > 1.0 {
        return Err(CliError::Usage {
            name: "mean-scale",
            reason: format!("scaled mean {m} exceeds 1"),
        });
    }
    let n = args.n_pulses as f64;
    let threshold = mu + 5.0 * (mu / n).sqrt();
    let mut report = String::new();
    let _ = writeln!(
        report,
        "mu_out = {mu:.6e}, N = {}, seed = {}, threshold = {threshold:.6e}",
        args.n_pulses, args.seed
    );
    let mut ok = true;
    for (name, dist) in validation_battery(m) {
        let r = simulate_trojan_fill(&dist, args.n_pulses, args.seed).map_err(CliError::Analysis)?;
        let pass = r.fraction <= threshold;
        ok &= pass;
        let _ = writeln!(
            report,
            "{name:<10} filled = {:>10}  fraction = {:.6e}  {}",
            r.filled,
            r.fraction,
            if pass { "PASS" } else { "FAIL" }
        );
        if name == "two-point" {
            let sigma = (m * (1.0 - m) / n).sqrt();
            let sat = (r.fraction - m).abs() <= 5.0 * sigma;
            ok &= sat;
            let _ = writeln!(
                report,
                "{:<10} |fraction - mean| = {:.3e} (5 sigma = {:.3e})  {}",
                "saturation",
                (r.fraction - m).abs(),
                5.0 * sigma,
                if sat { "PASS" } else { "FAIL" }
            );
        }
    }
    let _ = writeln!(report, "overall: {}", if ok { "PASS" } else { "FAIL" });
    out.write_all(report.as_bytes()).map_err(stdout_err)?;
    if ok {
        Ok(())
    } else {
        Err(CliError::ValidationFailed)
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Coin(a) => cmd_coin(a, out),
        Command::Keyrate(a) => cmd_keyrate(a, out),
        Command::Bounds(a) => cmd_bounds(a, out, err),
        Command::Validate(a) => cmd_validate(a, out),
    }
}
