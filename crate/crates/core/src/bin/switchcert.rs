use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use switchcert::certificate::{
    certify, AffinePrior, CertificateReport, ConfidenceParams, EpsilonVariant, InvariantEllipsoid,
};
use switchcert::harness::experiment::{run_experiment_named, run_repetition, write_summary};
use switchcert::harness::{
    find_min_radius, plot_state_space, reproduce_benchmark, ExperimentConfig, PriorSource, SystemSource,
};
use switchcert::sampling::{draw_samples, SampleSet};
use switchcert::scenario::SupportMethod;
use switchcert::system::{ModeSequence, SwitchedAffineSystem};
use switchcert::whitebox::{
    attractor_bound, attractor_iterate, common_lyapunov_norm, jsr_bruteforce, verify_ellipsoid_invariance,
    DEFAULT_POINT_CAP, DEFAULT_PRODUCT_CAP,
};

const EXIT_CERTIFIED: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_NO_CERTIFICATE: u8 = 2;

/// Data-driven stability certificates for switched affine systems.
#[derive(Parser, Debug)]
#[command(name = "switchcert", version, about)]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment configuration (JSON); command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory under a given mode sequence.
    Simulate {
        #[arg(long)]
        system: Option<String>,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Vec<f64>,
        /// 1-based modes, comma separated.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<usize>,
    },
    /// Draw one sample set and write it as CSV.
    Sample {
        #[command(flatten)]
        data: DataArgs,
        /// Substream index.
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Solve the scenario program and compute both certificates.
    Certify {
        #[command(flatten)]
        data: DataArgs,
        /// Read observations from a CSV file instead of sampling.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[command(flatten)]
        cert: CertArgs,
    },
    /// Oracles with the true matrices: JSR bounds, contractive norm,
    /// attractor ball and (optionally) ellipsoid invariance.
    Whitebox {
        #[arg(long)]
        system: Option<String>,
        /// Longest product length for the JSR bounds.
        #[arg(long, default_value_t = 8)]
        depth: usize,
        /// Bisection tolerance of the contractive norm.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Certificate JSON whose ellipsoid should be checked.
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
    /// Iterate the attractor point sets and export them as CSV.
    Attractor {
        #[arg(long)]
        system: Option<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Replace each level by its convex-hull vertices.
        #[arg(long)]
        prune: bool,
    },
    /// Plot one sample set (and its ellipsoid, if certified) as SVG.
    Plot {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cert: CertArgs,
    },
    /// Run the benchmark study on both fixtures and compare with the
    /// reference values.
    #[command(name = "reproduce", visible_alias = "reproduce-paper")]
    Reproduce {
        #[arg(long, default_value_t = 100)]
        repetitions: usize,
    },
    /// Smallest radius at which an invariant ellipsoid is certified.
    FindRadius {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        cert: CertArgs,
        #[arg(long)]
        r_max: f64,
    },
    /// Repetition study driven by `--config`.
    Run,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// `f1`, `f2`, or a JSON system file.
    #[arg(long)]
    system: Option<String>,
    /// Sampling radius.
    #[arg(long)]
    radius: Option<f64>,
    /// Number of samples.
    #[arg(long = "n")]
    n_samples: Option<usize>,
    /// Trajectory length of each observation.
    #[arg(long)]
    lift: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct CertArgs {
    /// Confidence parameter β.
    #[arg(long)]
    beta: Option<f64>,
    /// `dimension` or `sample-count`.
    #[arg(long)]
    epsilon: Option<EpsilonVariant>,
    /// `d-bound` or `greedy`.
    #[arg(long)]
    support: Option<SupportMethod>,
    /// Offset bound `B`; defaults to the true value when a system is given.
    #[arg(long)]
    b: Option<f64>,
    /// Skip the offset-dependent bound.
    #[arg(long)]
    no_prior: bool,
}

impl Cli {
    fn base_config(&self, system: Option<&str>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::benchmark(SystemSource::Fixture("f1".into()), 1),
        };
        if let Some(s) = system {
            cfg.system = SystemSource::parse(s);
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        Ok(cfg)
    }

    fn config_with(&self, data: &DataArgs, cert: Option<&CertArgs>) -> Result<ExperimentConfig> {
        let mut cfg = self.base_config(data.system.as_deref())?;
        if let Some(r) = data.radius {
            cfg.radius = r;
        }
        if let Some(n) = data.n_samples {
            cfg.n_samples = n;
        }
        if let Some(l) = data.lift {
            cfg.lift = l;
        }
        if let Some(c) = cert {
            if let Some(b) = c.beta {
                cfg.beta = b;
            }
            if let Some(e) = c.epsilon {
                cfg.epsilon_variant = e;
            }
            if let Some(s) = c.support {
                cfg.support_method = s;
            }
            if let Some(b) = c.b {
                cfg.prior = PriorSource::Value(b);
            }
            if c.no_prior {
                cfg.prior = PriorSource::None;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn system(&self, arg: Option<&str>) -> Result<SwitchedAffineSystem> {
        Ok(self.base_config(arg)?.system.load()?)
    }
}

fn out_file(cli: &Cli, name: &str) -> Result<Option<PathBuf>> {
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Ok(Some(dir.join(name)))
        }
        None => Ok(None),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn certified(report: &CertificateReport) -> bool {
    let below = |v: Option<f64>| v.is_some_and(|x| x < 1.0);
    below(report.rho1_value()) || below(report.rho2_value())
}

fn summarize_report(r: &CertificateReport) -> String {
    let fmt = |v: Option<f64>| v.map_or("no certificate".to_string(), |x| format!("{x:.6}"));
    let mut s = format!(
        "gamma   = {:.6}\nkappa   = {:.6}\ns       = {}\nepsilon = {:.6}\nrho1    = {}\nrho2    = {}\n",
        r.gamma,
        r.kappa,
        r.s,
        r.epsilon,
        if r.rho1.is_some() { fmt(r.rho1_value()) } else { "not computed (no offset bound)".into() },
        fmt(r.rho2_value())
    );
    match &r.ellipsoid {
        Some(e) => s.push_str(&format!("ellipsoid: xᵀPx ≤ {:.6}²\n", e.level)),
        None => s.push_str("ellipsoid: none\n"),
    }
    s
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Simulate { system, x0, modes } => {
            let sys = cli.system(system.as_deref())?;
            let word = ModeSequence::from_one_based(modes, sys.mode_count())?;
            let traj = sys.simulate(&DVector::from_vec(x0.clone()), &word)?;
            let states: Vec<Vec<f64>> = traj.states.iter().map(|x| x.iter().copied().collect()).collect();
            if cli.json {
                print_json(&serde_json::json!({ "states": states, "modes": modes }))?;
            } else {
                for (k, x) in states.iter().enumerate() {
                    let cells: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
                    println!("{k},{}", cells.join(","));
                }
            }
            Ok(EXIT_CERTIFIED)
        }
        Command::Sample { data, stream } => {
            let cfg = cli.config_with(data, None)?;
            let omega = draw_samples(&cfg.system.load()?, &cfg.sample_config(*stream, cfg.radius))?;
            let comment = cfg.provenance();
            match out_file(cli, "samples.csv")? {
                Some(path) => {
                    omega.write_csv(std::fs::File::create(&path)?, Some(&comment))?;
                    eprintln!("wrote {}", path.display());
                }
                None => omega.write_csv(std::io::stdout().lock(), Some(&comment))?,
            }
            Ok(EXIT_CERTIFIED)
        }
        Command::Certify { data, samples, cert } => {
            let cfg = cli.config_with(data, Some(cert))?;
            let (omega, prior) = match samples {
                Some(path) => {
                    let omega = SampleSet::read_csv(BufReader::new(std::fs::File::open(path)?))?;
                    let prior = match cfg.prior {
                        PriorSource::None => None,
                        PriorSource::Value(b) => Some(AffinePrior::new(b)?),
                        PriorSource::FromSystem if data.system.is_some() || cli.config.is_some() => {
                            cfg.prior_for(&cfg.observed_system()?)?
                        }
                        PriorSource::FromSystem => None,
                    };
                    (omega, prior)
                }
                None => {
                    let omega = draw_samples(&cfg.system.load()?, &cfg.sample_config(0, cfg.radius))?;
                    (omega, cfg.prior_for(&cfg.observed_system()?)?)
                }
            };
            let conf = ConfidenceParams::for_samples(&omega, cfg.beta, cfg.epsilon_variant);
            let report = certify(&omega, &cfg.scenario, &conf, prior.as_ref(), cfg.support_method)?;
            if let Some(path) = out_file(cli, "certificate.json")? {
                std::fs::write(&path, report.to_json()?)?;
            }
            if cli.json {
                println!("{}", report.to_json()?);
            } else {
                print!("{}", summarize_report(&report));
            }
            Ok(if certified(&report) { EXIT_CERTIFIED } else { EXIT_NO_CERTIFICATE })
        }
        Command::Whitebox { system, depth, tol, certificate } => {
            let sys = cli.system(system.as_deref())?;
            let mats = sys.matrices();
            let norm = common_lyapunov_norm(&mats, *tol)?;
            let jsr = jsr_bruteforce(&mats, *depth, norm.as_ref(), DEFAULT_PRODUCT_CAP)?;
            let ball = norm.as_ref().map(|n| attractor_bound(n, &sys.offsets())).transpose()?;
            let verdict = match certificate {
                Some(path) => {
                    let report: CertificateReport = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                    match report.ellipsoid {
                        Some(ell) => Some(verify_ellipsoid_invariance(&sys, &ell, 1e-9)?),
                        None => bail!("certificate {} has no ellipsoid", path.display()),
                    }
                }
                None => None,
            };
            if cli.json {
                print_json(&serde_json::json!({
                    "jsr": jsr,
                    "norm": norm,
                    "attractor_ball_radius": ball,
                    "invariance": verdict,
                }))?;
            } else {
                println!("JSR bounds (depth {}): [{:.6}, {:.6}]", jsr.depth, jsr.lower, jsr.upper);
                match &norm {
                    Some(n) => println!("quadratic contraction factor: {:.6}", n.rho_tilde),
                    None => println!("no common quadratic norm with factor ≤ 1"),
                }
                if let Some(r) = ball {
                    println!("attractor ball radius (P-norm): {r:.6}");
                }
                if let Some(v) = &verdict {
                    println!("ellipsoid invariance: {v:?}");
                }
            }
            let ok = match &verdict {
                Some(v) => v.is_invariant(),
                None => norm.is_some_and(|n| n.rho_tilde < 1.0),
            };
            Ok(if ok { EXIT_CERTIFIED } else { EXIT_NO_CERTIFICATE })
        }
        Command::Attractor { system, k, prune } => {
            let sys = cli.system(system.as_deref())?;
            let approx = attractor_iterate(&sys, *k, *prune, DEFAULT_POINT_CAP)?;
            let comment = format!("k={k}\nprune={prune}");
            match out_file(cli, "attractor.csv")? {
                Some(path) => approx.write_csv(std::fs::File::create(&path)?, Some(&comment))?,
                None if !cli.json => approx.write_csv(std::io::stdout().lock(), Some(&comment))?,
                None => {}
            }
            if cli.json {
                print_json(&serde_json::json!({
                    "levels": approx.iterates.iter().map(Vec::len).collect::<Vec<_>>(),
                    "hausdorff_gaps": approx.hausdorff_gaps,
                    "hull_pruned": approx.hull_pruned,
                }))?;
            }
            Ok(EXIT_CERTIFIED)
        }
        Command::Plot { data, cert } => {
            let cfg = cli.config_with(data, Some(cert))?;
            let base = cfg.system.load()?;
            let observed = cfg.observed_system()?;
            let rep = run_repetition(&cfg, &observed, &base, 0)?;
            let ell: Option<&InvariantEllipsoid> = rep.report.as_ref().and_then(|r| r.ellipsoid.as_ref());
            let path = out_file(cli, "state.svg")?.unwrap_or_else(|| PathBuf::from("state.svg"));
            plot_state_space(&base, &rep.omega, ell, &path)?;
            eprintln!("wrote {}", path.display());
            Ok(if ell.is_some() { EXIT_CERTIFIED } else { EXIT_NO_CERTIFICATE })
        }
        Command::Reproduce { repetitions } => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("reproduction"));
            let seed = cli.seed.unwrap_or(1);
            let rep = reproduce_benchmark(&dir, seed, *repetitions)?;
            if cli.json {
                print_json(&rep.comparison)?;
            } else {
                print!("{}", rep.table());
                eprintln!("outputs in {}", dir.display());
            }
            Ok(EXIT_CERTIFIED)
        }
        Command::FindRadius { data, cert, r_max } => {
            let cfg = cli.config_with(data, Some(cert))?;
            let search = find_min_radius(&cfg, *r_max)?;
            if cli.json {
                print_json(&search)?;
            } else {
                match search.radius {
                    Some(r) => println!("smallest certified radius: {r:.6} ({} probes)", search.probes.len()),
                    None => println!("no invariant-ellipsoid certificate at R = {r_max}"),
                }
            }
            Ok(if search.radius.is_some() { EXIT_CERTIFIED } else { EXIT_NO_CERTIFICATE })
        }
        Command::Run => {
            if cli.config.is_none() {
                bail!("`run` needs --config <file>");
            }
            let cfg = cli.base_config(None)?;
            let summary = run_experiment_named(&cfg, "summary")?;
            if cfg.out_dir.is_none() {
                write_summary(&summary, &cfg, Path::new("summary.csv"))?;
            }
            if cli.json {
                print_json(&serde_json::json!({
                    "rho1": summary.rho1,
                    "rho2": summary.rho2,
                    "failures": summary.failures,
                    "infeasible": summary.infeasible,
                    "ellipsoids": summary.ellipsoids,
                    "whitebox_confirmed": summary.whitebox_confirmed,
                }))?;
            } else {
                let fmt = |m: Option<f64>, s: Option<f64>| match (m, s) {
                    (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
                    (Some(m), None) => format!("{m:.4}"),
                    _ => "n/a".into(),
                };
                println!("rho1: {}", fmt(summary.rho1.mean, summary.rho1.std));
                println!("rho2: {}", fmt(summary.rho2.mean, summary.rho2.std));
                println!(
                    "failures: {}, infeasible: {}, ellipsoids: {} ({} confirmed)",
                    summary.failures, summary.infeasible, summary.ellipsoids, summary.whitebox_confirmed
                );
            }
            let any = summary.rho1.mean.is_some_and(|m| m < 1.0) || summary.rho2.mean.is_some_and(|m| m < 1.0);
            Ok(if any { EXIT_CERTIFIED } else { EXIT_NO_CERTIFICATE })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
