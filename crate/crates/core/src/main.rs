// NaN-rejecting `!(x > 0.0)` comparisons are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use splitkci::datagen::{self, Hypothesis};
use splitkci::error::{Error, Result};
use splitkci::harness::{
    resolve_auto_ratio, run_experiment, run_single_test, write_error_rate_csv, ExperimentConfig,
    MethodSelect, SplitSpec,
};
use splitkci::split_heuristic::{select_split_ratio, SplitSelectConfig};

#[derive(Parser)]
#[command(
    name = "splitkci",
    about = "Kernel-based conditional independence testing",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as CSV.
    Gen {
        /// postnonlinear | circular
        #[arg(long)]
        generator: String,
        /// h0 | h1
        #[arg(long, default_value = "h0")]
        hyp: String,
        /// Number of samples.
        #[arg(long)]
        n: usize,
        /// Conditioning dimension (postnonlinear only).
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Noise scale (circular only).
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a single conditional-independence test on a CSV dataset and print
    /// the result as one JSON line.
    Test {
        /// kci | circe | splitkci | splitkci_a_only | gcm | rbpt2 | rbpt2_corrected
        #[arg(long)]
        method: String,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated column names for A.
        #[arg(long, value_delimiter = ',')]
        a_cols: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        b_cols: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        c_cols: Vec<String>,
        /// auto | none | ratio:X | n:K (default: per-method)
        #[arg(long)]
        split: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Wild-bootstrap resamples.
        #[arg(long, default_value_t = 1000)]
        boot: usize,
        /// wild_bootstrap | gamma
        #[arg(long, default_value = "wild_bootstrap")]
        calibration: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a Monte-Carlo experiment from a JSON config and append the
    /// error-rate row(s) to a CSV file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select a train/test split ratio with the rejection-rate heuristic.
    SplitSelect {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        a_cols: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        b_cols: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        c_cols: Vec<String>,
        /// Ratio grid as lo:hi:step, e.g. 0.1:0.5:0.1 (default: from N).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 20)]
        resamples: usize,
        #[arg(long, default_value_t = 1000)]
        boot: usize,
        /// Method whose marginal tests drive the selection.
        #[arg(long, default_value = "splitkci")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simulate the null on a real dataset by shuffling A within clusters of
    /// the first conditioning column.
    ShuffleNull {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        a_cols: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        b_cols: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        c_cols: Vec<String>,
        #[arg(long, default_value_t = 20)]
        clusters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_hypothesis(s: &str) -> Result<Hypothesis> {
    match s {
        "h0" | "null" => Ok(Hypothesis::Null),
        "h1" | "alternative" => Ok(Hypothesis::Alternative),
        other => Err(Error::Config(format!("hypothesis '{other}' is not h0 or h1"))),
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("grid '{s}' is not of the form lo:hi:step")));
    }
    let lo: f64 = parts[0].parse().map_err(|_| Error::Config(format!("bad grid start '{}'", parts[0])))?;
    let hi: f64 = parts[1].parse().map_err(|_| Error::Config(format!("bad grid end '{}'", parts[1])))?;
    let step: f64 =
        parts[2].parse().map_err(|_| Error::Config(format!("bad grid step '{}'", parts[2])))?;
    if !(step > 0.0) || !(lo > 0.0) || !(hi < 1.0) || hi < lo {
        return Err(Error::Config(format!("grid '{s}' must satisfy 0 < lo <= hi < 1, step > 0")));
    }
    let mut out = Vec::new();
    let mut b = lo;
    while b <= hi + 1e-12 {
        out.push(b.min(hi));
        b += step;
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { generator, hyp, n, d, gamma, seed, out } => {
            let hyp = parse_hypothesis(&hyp)?;
            let ds = match generator.as_str() {
                "postnonlinear" => datagen::gen_postnonlinear(d, n, hyp, seed)?,
                "circular" => datagen::gen_circular(n, gamma, hyp, seed)?,
                other => {
                    return Err(Error::Config(format!(
                        "generator '{other}' is not postnonlinear or circular"
                    )))
                }
            };
            datagen::write_csv(&ds, &out)?;
            eprintln!("wrote {} rows to {}", ds.len(), out.display());
            Ok(())
        }
        Command::Test {
            method,
            data,
            a_cols,
            b_cols,
            c_cols,
            split,
            alpha,
            boot,
            calibration,
            seed,
        } => {
            let method = MethodSelect::parse(&method)?;
            let dataset = datagen::load_csv(&data, &a_cols, &b_cols, &c_cols, false)?;
            let mut config = ExperimentConfig::new(
                method,
                splitkci::harness::DatasetSpec::Csv {
                    path: data,
                    a_cols,
                    b_cols,
                    c_cols,
                    standardize: false,
                    shuffle_clusters: None,
                },
                seed,
            );
            config.alpha = alpha;
            config.bootstrap = boot;
            config.calibration = match calibration.as_str() {
                "wild_bootstrap" | "wild" => splitkci::pipeline::Calibration::WildBootstrap,
                "gamma" => splitkci::pipeline::Calibration::Gamma,
                other => {
                    return Err(Error::Config(format!(
                        "calibration '{other}' is not wild_bootstrap or gamma"
                    )))
                }
            };
            config.split = match split {
                Some(s) => Some(SplitSpec::parse(&s)?),
                None => None,
            };
            if config.split.unwrap_or_else(|| SplitSpec::default_for(method)) == SplitSpec::Auto {
                let beta = resolve_auto_ratio(&config, &dataset)?;
                config.split = Some(SplitSpec::Ratio(beta));
            }
            let result = run_single_test(&config, &dataset, seed)?;
            println!("{}", serde_json::to_string(&result).expect("result serializes"));
            Ok(())
        }
        Command::Experiment { config, out } => {
            let text = std::fs::read_to_string(&config)?;
            let config: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad experiment config: {e}")))?;
            let table = run_experiment(&config)?;
            for (t, msg) in &table.failures {
                eprintln!("trial {t} failed: {msg}");
            }
            write_error_rate_csv(&table, &out)?;
            for row in &table.rows {
                eprintln!(
                    "{} {} {}: rejection rate {:.4} ± {:.4} over {} trials",
                    row.method, row.generator, row.hypothesis, row.rejection_rate,
                    row.standard_error, row.trials
                );
            }
            Ok(())
        }
        Command::SplitSelect {
            data,
            a_cols,
            b_cols,
            c_cols,
            grid,
            alpha,
            resamples,
            boot,
            method,
            seed,
        } => {
            let method = MethodSelect::parse(&method)?;
            let dataset = datagen::load_csv(&data, &a_cols, &b_cols, &c_cols, false)?;
            let ratio_grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => splitkci::split_heuristic::default_ratio_grid(dataset.len()),
            };
            let kernel_method = match method {
                MethodSelect::Kci => splitkci::stats::Method::Kci,
                MethodSelect::Circe => splitkci::stats::Method::Circe,
                MethodSelect::SplitKci => splitkci::stats::Method::SplitKci,
                MethodSelect::SplitKciAOnly => splitkci::stats::Method::SplitKciAOnly,
                _ => {
                    return Err(Error::Config(
                        "split selection applies to kernel methods only".into(),
                    ))
                }
            };
            let mut settings = splitkci::pipeline::PipelineSettings::new(kernel_method);
            settings.num_resamples = boot;
            let selection = select_split_ratio(
                &dataset,
                &settings,
                &SplitSelectConfig { ratio_grid, alpha, resamples, rng_seed: seed },
            )?;
            for (beta, omega) in &selection.evaluated {
                eprintln!("beta {beta:.4}: omega {omega:.4}");
            }
            println!("{}", selection.beta);
            Ok(())
        }
        Command::ShuffleNull { data, a_cols, b_cols, c_cols, clusters, seed, out } => {
            let dataset = datagen::load_csv(&data, &a_cols, &b_cols, &c_cols, false)?;
            let shuffled = datagen::simulate_null_shuffle(&dataset, clusters, seed)?;
            datagen::write_csv(&shuffled, &out)?;
            eprintln!("wrote {} shuffled rows to {}", shuffled.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
