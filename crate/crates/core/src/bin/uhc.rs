use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use uhc::bench::{generate_world, train_hcs, write_samples, HCConfigSpec, WorldSpec};
use uhc::experiment::{run_experiment, run_sweep, ExperimentConfig, Method, SensitivitySpec, SweepAxis, TrialSeeds};
use uhc::io::{read_predictions, write_fused, write_predictions, FusedRecord, PredictionRecord};
use uhc::trainer::{Checkpoint, TrainConfig};
use uhc::{build_profile, Fusion, Result, UhcError};

#[derive(Parser)]
#[command(name = "uhc", version, about = "Fuse heterogeneous classifiers and benchmark the fusion methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse per-classifier predictions from a JSON Lines file into soft labels.
    Fuse {
        /// Prediction records, one per (sample, classifier).
        input: PathBuf,
        /// sd, ce, mf-p, mf-lv or mf-lf.
        #[arg(long, default_value = "ce")]
        method: String,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Run a full benchmark and write a JSON report.
    Experiment(Overrides),
    /// Repeat the benchmark across values of one axis.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// transfer-size, temperature or hc-accuracy.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values; the axis defaults when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// CSV series of per-value accuracy statistics.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a synthetic world and dump it as JSON Lines.
    GenWorld {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train source classifiers for one trial and save their checkpoints.
    TrainHc {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the checkpoints.
        #[arg(long)]
        out: PathBuf,
        /// Also write the HCs' transfer-set predictions here.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

impl Overrides {
    fn apply(&self) -> Result<ExperimentConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = &self.methods {
            cfg.methods = m.iter().map(|s| s.parse::<Method>()).collect::<Result<_>>()?;
        }
        if let Some(t) = self.temperature {
            cfg.temperature = t;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_fuse(input: &Path, method: &str, temperature: f64, lambda: f64, out: Option<&Path>, jobs: usize) -> Result<()> {
    let fusion = Fusion::from_name(method, lambda)?;
    let set = read_predictions(BufReader::new(File::open(input)?))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| UhcError::InvalidArgument(e.to_string()))?;
    let records = pool.install(|| {
        set.samples
            .par_iter()
            .map(|s| {
                let profile = build_profile(&s.predictions, &set.universe, temperature)
                    .map_err(|e| UhcError::InvalidArgument(format!("sample {}: {e}", s.sample_id)))?;
                Ok(FusedRecord::new(&s.sample_id, &set.universe, fusion.fuse(&profile)?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_fused(output(out)?, &records)
}

fn cmd_experiment(cfg: &ExperimentConfig) -> Result<()> {
    let start = Instant::now();
    let report = run_experiment(cfg)?;
    print!("{}", report.table());
    if let Some(path) = &cfg.output {
        fs::write(path, report.to_json()?)?;
    }
    eprintln!("finished in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig, axis: &str, values: Option<Vec<f64>>, csv: Option<&Path>) -> Result<()> {
    let axis: SweepAxis = axis.parse()?;
    let mut spec = SensitivitySpec::with_defaults(axis);
    if let Some(v) = values {
        spec.values = v;
    }
    let start = Instant::now();
    let report = run_sweep(cfg, &spec)?;
    for p in &report.points {
        println!("{axis:?} = {}", p.value);
        print!("{}", p.report.table());
    }
    if let Some(path) = csv {
        fs::write(path, report.to_csv())?;
    }
    if let Some(path) = &cfg.output {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    eprintln!("finished in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn world_spec(config: Option<&Path>, seed: Option<u64>) -> Result<(ExperimentConfig, WorldSpec, HCConfigSpec, TrainConfig)> {
    let cfg = load_config(config)?;
    let seeds = TrialSeeds::derive(seed.unwrap_or(cfg.seed), 0);
    let world = WorldSpec { seed: seeds.world, ..cfg.world.clone() };
    let hcs = HCConfigSpec { seed: seeds.hcs, ..cfg.hcs.clone() };
    let train = TrainConfig { seed: seeds.hcs, ..cfg.train.clone() };
    Ok((cfg, world, hcs, train))
}

fn cmd_gen_world(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let (_, spec, _, _) = world_spec(config, seed)?;
    let world = generate_world(&spec)?;
    let records = world.records();
    write_samples(out, &records)?;
    println!("wrote {} samples to {}", records.len(), out.display());
    Ok(())
}

fn cmd_train_hc(config: Option<&Path>, seed: Option<u64>, out: &Path, predictions: Option<&Path>) -> Result<()> {
    let (cfg, spec, hc_spec, train) = world_spec(config, seed)?;
    let world = generate_world(&spec)?;
    let set = train_hcs(&world, &hc_spec, &train)?;
    fs::create_dir_all(out)?;
    for (i, hc) in set.classifiers.iter().enumerate() {
        let mut ckpt = Checkpoint::new(&hc.model, &train);
        ckpt.class_labels = Some(hc.subset.members().iter().map(|&m| world.universe.label(m).to_string()).collect());
        let path = out.join(format!("hc-{i}.json"));
        ckpt.save(&path)?;
        let labels = ckpt.class_labels.unwrap_or_default().join(",");
        println!("hc-{i} classes [{labels}] test accuracy {:.4}", set.accuracy(i, &world.test));
    }
    if let Some(path) = predictions {
        let mut records = Vec::new();
        for s in &world.transfer {
            for (i, hc) in set.classifiers.iter().enumerate() {
                let pred = set.predict(i, s);
                records.push(PredictionRecord {
                    sample_id: s.id.clone(),
                    classifier_id: format!("hc-{i}"),
                    classes: hc.subset.members().iter().map(|&m| world.universe.label(m).to_string()).collect(),
                    probs: None,
                    logits: Some(pred.logits().into_owned()),
                });
            }
        }
        write_predictions(BufWriter::new(File::create(path)?), &records)?;
        println!("wrote predictions for {} transfer samples (temperature {} applies at fusion time)", world.transfer.len(), cfg.temperature);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fuse { input, method, temperature, lambda, out, jobs } => {
            cmd_fuse(&input, &method, temperature, lambda, out.as_deref(), jobs)
        }
        Command::Experiment(o) => cmd_experiment(&o.apply()?),
        Command::Sweep { overrides, axis, values, csv } => cmd_sweep(&overrides.apply()?, &axis, values, csv.as_deref()),
        Command::GenWorld { config, seed, out } => cmd_gen_world(config.as_deref(), seed, &out),
        Command::TrainHc { config, seed, out, predictions } => {
            cmd_train_hc(config.as_deref(), seed, &out, predictions.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
