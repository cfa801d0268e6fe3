use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use shiftlab::domains::{generate_domains, oracle_truth, to_feature_table, OracleTruth, Scenario};
use shiftlab::evaluate::{repeat_experiment, ExperimentConfig};
use shiftlab::normalize::{NormKind, NormScheme};
use shiftlab::report::{config_comment, consolidate, write_report_set};
use shiftlab::signal::io::{list_recordings, read_recording, write_recording};
use shiftlab::signal::{generate_synthetic_eeg, parse_bands, EegScenario, FeaturePipeline};
use shiftlab::table::FeatureTable;
use shiftlab::{Error, Result};

const SEED_ENV: &str = "SHIFTLAB_SEED";

#[derive(Parser)]
#[command(name = "shiftlab", version, about = "Estimate cross-domain conditional and marginal shift")]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic domain scenario or synthetic EEG recordings.
    Synth {
        /// Domain scenario JSON (has a `domains` list) or EEG scenario JSON.
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Turn a directory of recordings into a band-power feature CSV.
    Features {
        raw_dir: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Band list, `name:low:high,...`.
        #[arg(long)]
        bands: Option<String>,
        /// Decimation target in Hz; 0 keeps the native rate.
        #[arg(long, default_value_t = 250.0)]
        target_hz: f64,
    },
    /// Estimate conditional and marginal shift.
    Shift {
        features: PathBuf,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Oracle truth JSON written by `synth`, for comparison.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the repeated leave-one-subject-out protocol.
    Loso {
        features: PathBuf,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Merge the runs.csv files under a report directory.
    Report { out_dir: PathBuf },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON file with experiment settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Normalization scheme(s): none, whitening, baseline1, baseline2.
    #[arg(long, value_delimiter = ',')]
    norm: Vec<NormKind>,
    /// Run every normalization scheme.
    #[arg(long, conflicts_with = "norm")]
    all_schemes: bool,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    norm_exponent: Option<u8>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    trees_subject: Option<usize>,
    #[arg(long)]
    trees_workload: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Task rows kept per subject and session in each repetition.
    #[arg(long, conflicts_with = "no_subsample")]
    subsample: Option<usize>,
    /// Use every task row in each repetition.
    #[arg(long)]
    no_subsample: bool,
    /// Hold-out rows per training subject in LOSO.
    #[arg(long)]
    holdout: Option<usize>,
    /// Master seed; falls back to the config file, then SHIFTLAB_SEED, then 10.
    #[arg(long)]
    seed: Option<u64>,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

impl ExperimentArgs {
    /// Flags over config file over defaults; the seed additionally consults
    /// the environment between the file and the default.
    fn resolve(&self, loso: bool) -> Result<ExperimentConfig> {
        let (mut cfg, file_seed) = match &self.config {
            Some(path) => {
                let value = read_json(path)?;
                let has_seed = value.get("seed").is_some();
                (serde_json::from_value::<ExperimentConfig>(value)?, has_seed)
            }
            None => (ExperimentConfig::default(), false),
        };
        cfg.loso = loso;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        } else if !file_seed {
            if let Some(seed) = env_seed()? {
                cfg.seed = seed;
            }
        }
        let kinds: Vec<NormKind> = if self.all_schemes {
            NormKind::ALL.to_vec()
        } else {
            self.norm.clone()
        };
        if !kinds.is_empty() {
            cfg.schemes = kinds.into_iter().map(NormScheme::of).collect();
        }
        if let Some(e) = self.norm_exponent {
            for s in &mut cfg.schemes {
                *s = NormScheme::new(s.kind, e)?;
            }
        }
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.k, self.k);
        set(&mut cfg.trees_subject, self.trees_subject);
        set(&mut cfg.trees_workload, self.trees_workload);
        set(&mut cfg.folds, self.folds);
        set(&mut cfg.reps, self.reps);
        set(&mut cfg.holdout, self.holdout);
        if self.no_subsample {
            cfg.subsample = None;
        } else if self.subsample.is_some() {
            cfg.subsample = self.subsample;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn cmd_synth(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let value = read_json(config)?;
    fs::create_dir_all(out)?;
    if value.get("domains").is_some() {
        let mut scenario: Scenario = serde_json::from_value(value)?;
        if let Some(s) = seed {
            scenario.seed = s;
        }
        let ds = generate_domains(&scenario.domains, scenario.seed)?;
        let table = to_feature_table(&ds)?;
        let comment = config_comment(&scenario)?;
        let mut f = fs::File::create(out.join("features.csv"))?;
        table.write_csv(&mut f, Some(&comment))?;
        let truth = oracle_truth(&scenario.domains, scenario.n_mc, scenario.seed)?;
        let doc = json!({ "scenario": scenario, "truth": truth });
        fs::write(out.join("truth.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
        log::info!(
            "{} domains, conditional shift {:.4}, marginal shift {:.4}",
            ds.len(),
            truth.conditional_shift,
            truth.marginal_shift
        );
    } else {
        let mut scenario: EegScenario = serde_json::from_value(value)?;
        if let Some(s) = seed {
            scenario.seed = s;
        }
        for session in scenario.sessions() {
            let rec = generate_synthetic_eeg(&session)?;
            let cond = session.condition.map_or("none", |c| c.as_str());
            write_recording(out, &format!("s{}_{cond}", session.subject_id), &rec)?;
        }
        fs::write(out.join("scenario.json"), serde_json::to_string_pretty(&scenario)? + "\n")?;
    }
    Ok(())
}

fn cmd_features(raw_dir: &Path, out: &Path, bands: Option<&str>, target_hz: f64) -> Result<()> {
    let pipeline = FeaturePipeline {
        target_hz: (target_hz > 0.0).then_some(target_hz),
        bands: match bands {
            Some(spec) => parse_bands(spec)?,
            None => FeaturePipeline::default().bands,
        },
        ..FeaturePipeline::default()
    };
    let mut table: Option<FeatureTable> = None;
    for path in list_recordings(raw_dir)? {
        let rows = pipeline.run(&read_recording(&path)?)?;
        log::info!("{}: {} rows", path.display(), rows.len());
        match &mut table {
            Some(t) => t.extend(rows)?,
            None => table = Some(rows),
        }
    }
    let table = table.ok_or_else(|| Error::Empty(format!("no recordings in {}", raw_dir.display())))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(out)?;
    table.write_csv(&mut f, Some(&config_comment(&pipeline)?))
}

fn run_experiment(features: &Path, exp: &ExperimentArgs, loso: bool) -> Result<shiftlab::evaluate::ReportSet> {
    let cfg = exp.resolve(loso)?;
    let table = FeatureTable::read_csv_path(features)?;
    let set = repeat_experiment(&table, &cfg)?;
    write_report_set(&set, &exp.out)?;
    for s in &set.schemes {
        log::info!(
            "{}: conditional {:.4} ± {:.4}, marginal {:.4} ± {:.4}",
            s.scheme,
            s.conditional_shift.mean,
            s.conditional_shift.std,
            s.marginal_shift.mean,
            s.marginal_shift.std
        );
    }
    Ok(set)
}

fn cmd_shift(features: &Path, exp: &ExperimentArgs, truth: Option<&Path>) -> Result<()> {
    let set = run_experiment(features, exp, false)?;
    let truth: Option<OracleTruth> = match truth {
        Some(path) => {
            let doc = read_json(path)?;
            let inner = doc.get("truth").cloned().unwrap_or(doc);
            Some(serde_json::from_value(inner)?)
        }
        None => None,
    };
    let estimates: Vec<Value> = set
        .schemes
        .iter()
        .map(|s| {
            let mut e = json!({
                "scheme": s.scheme,
                "conditional_shift": s.conditional_shift,
                "marginal_shift": s.marginal_shift,
            });
            if let Some(t) = &truth {
                e["conditional_error"] = json!((s.conditional_shift.mean - t.conditional_shift).abs());
                e["marginal_error"] = json!((s.marginal_shift.mean - t.marginal_shift).abs());
            }
            e
        })
        .collect();
    let doc = json!({
        "config": set.config,
        "estimates": estimates,
        "truth": truth.map(|t| json!({
            "conditional_shift": t.conditional_shift,
            "marginal_shift": t.marginal_shift,
        })),
    });
    fs::write(exp.out.join("shift.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

fn cmd_report(out_dir: &Path) -> Result<()> {
    let merged = consolidate(out_dir)?;
    for ((scheme, metric, subject), (n, s)) in &merged.summary {
        println!("{scheme}\t{metric}\t{subject}\tn={n}\tmean={:.4}\tstd={:.4}", s.mean, s.std);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Synth { config, out, seed } => cmd_synth(&config, &out, seed),
        Command::Features {
            raw_dir,
            out,
            bands,
            target_hz,
        } => cmd_features(&raw_dir, &out, bands.as_deref(), target_hz),
        Command::Shift { features, exp, truth } => cmd_shift(&features, &exp, truth.as_deref()),
        Command::Loso { features, exp } => run_experiment(&features, &exp, true).map(|_| ()),
        Command::Report { out_dir } => cmd_report(&out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
