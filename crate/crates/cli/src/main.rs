//! `calib`: calibration measures, smoothing and omniprediction regret from
//! the command line.
//!
//! Every subcommand reads its inputs from JSON files and prints one JSON
//! document, either to stdout or to `--out`. Exit codes: 0 on success, 2 on
//! invalid input, 3 when a solver fails, 4 when an instance is too large for
//! an exact method.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use calib_core::constructions::by_name;
use calib_core::error::ErrorKind;
use calib_core::experiments::{sample, udce_distinguish_experiment};
use calib_core::io::{
    expected_manifest, read_loss, read_pld, read_postprocessing, write_construction, write_file,
};
use calib_core::metrics::{dce_marginal_preserving, ldce};
use calib_core::omni::best_post_report;
use calib_core::smoothing::PiecewisePrediction;
use calib_core::transport::TransportPlan;
use calib_core::{
    demc, omni_regret, omni_regret_calibrated, smce, smooth, udce_exact, wasserstein,
    wasserstein_label_preserving, CalibError, OmniConfig, Pld, PostProcessing,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

/// Largest support on which `metrics` also reports the exact upper distance.
const UDCE_SUPPORT_LIMIT: usize = 12;

#[derive(Parser)]
#[command(
    name = "calib",
    version,
    about = "Calibration measures and omniprediction regret"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// smCE, ECE, dEMC, ldCE, the marginal-preserving distance, udCE (support
    /// at most 12) and the label marginal of a PLD.
    Metrics {
        #[arg(long)]
        pld: PathBuf,
        /// Grid spacing for the grid-restricted distances.
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Earth mover's distance between two PLDs with an optimal coupling.
    Wasserstein {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        /// Only couple atoms that share a label.
        #[arg(long)]
        label_preserving: bool,
        #[command(flatten)]
        out: Output,
    },
    /// The law of clip(p + z) for z uniform on [-sigma, sigma], with the
    /// posterior label mean.
    Smooth {
        #[arg(long)]
        pld: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Regret of the smoothed predictor against a benchmark.
    Omni {
        #[arg(long, value_enum)]
        mode: OmniMode,
        #[arg(long)]
        mu: PathBuf,
        /// Benchmark PLD (modes post-processed and calibrated).
        #[arg(long)]
        nu: Option<PathBuf>,
        #[arg(long)]
        loss: PathBuf,
        /// Post-processing applied to the smoothed benchmark (mode
        /// post-processed; identity when omitted).
        #[arg(long)]
        kappa: Option<PathBuf>,
        #[arg(long)]
        sigma: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Writes a named example as JSON files plus an expected.json manifest.
    Construct {
        /// One of almost-balanced, two-point, smoothing-necessity, lb1, lb2,
        /// udce-cases.
        name: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory to write into; created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// I.i.d. draws from a PLD.
    Sample {
        #[arg(long)]
        pld: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    #[command(subcommand)]
    Experiment(Experiment),
}

#[derive(Subcommand)]
enum Experiment {
    /// Collision tester between the two perturbed upper-distance cases.
    UdceDistinguish {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OmniMode {
    /// Against a smoothed, post-processed benchmark with the same label marginal.
    PostProcessed,
    /// Against an unsmoothed calibrated benchmark.
    Calibrated,
    /// Against the best post-processing of the smoothed predictor itself.
    BestPost,
}

#[derive(Args)]
struct Output {
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Output {
    fn emit(&self, value: &Value) -> Result<(), CalibError> {
        let text = serde_json::to_string(value).expect("json values always serialize");
        match &self.out {
            Some(path) => write_file(path, &text),
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }
}

fn plan_json(plan: &TransportPlan, mu: &Pld, nu: &Pld) -> Value {
    let rows: Vec<Value> = plan
        .entries
        .iter()
        .map(|&(i, j, mass)| {
            let (a, b) = (mu.atoms()[i], nu.atoms()[j]);
            json!({"p": a.p, "y": a.y, "q": b.p, "y_target": b.y, "mass": mass})
        })
        .collect();
    json!({"total_cost": plan.total_cost, "rows": rows})
}

fn law_json(law: &PiecewisePrediction) -> Value {
    let pieces: Vec<Value> = law
        .pieces
        .iter()
        .map(|s| json!({"lo": s.lo, "hi": s.hi, "density": s.density}))
        .collect();
    json!({"atom0": law.atom0, "atom1": law.atom1, "pieces": pieces})
}

fn post_json(kappa: &PostProcessing) -> Value {
    let pieces: Vec<Value> = kappa
        .all_pieces()
        .iter()
        .map(|p| json!({"lo": p.lo, "hi": p.hi, "slope": p.slope, "intercept": p.intercept}))
        .collect();
    json!({"pieces": pieces})
}

fn read_opt(path: Option<&Path>, flag: &str) -> Result<PathBuf, CalibError> {
    path.map(Path::to_path_buf)
        .ok_or_else(|| CalibError::InvalidParameter(format!("this mode needs --{flag}")))
}

fn run(cli: Cli) -> Result<(), CalibError> {
    match cli.command {
        Command::Metrics { pld, h, out } => {
            let pld = read_pld(&pld)?;
            let udce = if pld.support().len() <= UDCE_SUPPORT_LIMIT {
                Some(udce_exact(&pld)?.0)
            } else {
                None
            };
            out.emit(&json!({
                "smce": smce(&pld)?.0,
                "ece": pld.ece(),
                "demc": demc(&pld, h)?.value,
                "ldce": ldce(&pld, h)?,
                "dce_marginal": dce_marginal_preserving(&pld)?,
                "udce": udce,
                "tau": pld.tau(),
                "h": h,
            }))
        }
        Command::Wasserstein {
            mu,
            nu,
            label_preserving,
            out,
        } => {
            let (mu, nu) = (read_pld(&mu)?, read_pld(&nu)?);
            let (w, plan) = if label_preserving {
                wasserstein_label_preserving(&mu, &nu)?
            } else {
                wasserstein(&mu, &nu)?
            };
            out.emit(&json!({
                "w": w,
                "label_preserving": label_preserving,
                "plan": plan_json(&plan, &mu, &nu),
            }))
        }
        Command::Smooth { pld, sigma, out } => {
            let spld = smooth(&read_pld(&pld)?, sigma)?;
            out.emit(&json!({
                "sigma": sigma,
                "marginal": law_json(&spld.marginal()),
                "posterior": post_json(&spld.posterior().to_postprocessing()),
            }))
        }
        Command::Omni {
            mode,
            mu,
            nu,
            loss,
            kappa,
            sigma,
            out,
        } => {
            let config = OmniConfig::default();
            let mu = read_pld(&mu)?;
            let loss = read_loss(&loss)?;
            let report = match mode {
                OmniMode::PostProcessed => {
                    let nu = read_pld(&read_opt(nu.as_deref(), "nu")?)?;
                    let kappa = match kappa {
                        Some(path) => read_postprocessing(&path)?,
                        None => PostProcessing::identity(),
                    };
                    omni_regret(&mu, &nu, &loss, &kappa, sigma, &config)?
                }
                OmniMode::Calibrated => {
                    let nu = read_pld(&read_opt(nu.as_deref(), "nu")?)?;
                    omni_regret_calibrated(&mu, &nu, &loss, sigma, &config)?
                }
                OmniMode::BestPost => best_post_report(&smooth(&mu, sigma)?, &loss, &config)?,
            };
            out.emit(&serde_json::to_value(report).expect("reports always serialize"))
        }
        Command::Construct {
            name,
            eps,
            sigma,
            k,
            seed,
            out,
        } => {
            let outputs = by_name(&name, eps, sigma, k, seed)?;
            let mut files = Vec::new();
            for o in &outputs {
                files.extend(write_construction(&out, o)?);
            }
            let manifest = out.join("expected.json");
            write_file(&manifest, &expected_manifest(&outputs))?;
            files.push(manifest);
            let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            println!("{}", json!({ "written": files }));
            Ok(())
        }
        Command::Sample { pld, n, seed, out } => {
            let mut set = sample(&read_pld(&pld)?, n, seed)?;
            set.source = pld.display().to_string();
            out.emit(&serde_json::to_value(set).expect("sample sets always serialize"))
        }
        Command::Experiment(Experiment::UdceDistinguish {
            eps,
            k,
            s,
            trials,
            seed,
            out,
        }) => {
            let report = udce_distinguish_experiment(eps, k, s, trials, seed)?;
            out.emit(&serde_json::to_value(report).expect("reports always serialize"))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Solver => 3,
                ErrorKind::Size => 4,
            })
        }
    }
}
