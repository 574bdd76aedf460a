//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (one `error: ...` line on
//! stderr), 2 on a usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use latentfm_core::fm::evaluate_rmse;
use log::info;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiment::{self, MetricsSink, Prepared, Stats};
use crate::formats;

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "latentfm", version, about = "Factorization machines with latent user and item features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Dotted-key override, e.g. `lda.k=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Seed for the split, LDA, skip-gram and FM.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Load and split the ratings; write stats, documents and split files.
    Prepare,
    /// Train LDA topic vectors (`lda.k`) for the sides in `topic_sides`.
    Topics,
    /// Train skip-gram item vectors (`skipgram.dim`).
    Embed,
    /// Train the FM variant named by `model` and save it.
    Train,
    /// Score a saved model on the test split.
    Evaluate,
    /// Run every variant in `variants` and write metrics and summaries.
    Experiment,
}

pub fn parse_cli<I, T>(args: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(args)
}

impl Cli {
    /// Defaults, config file, `--set` overrides, then `--seed` and `--output`.
    pub fn load_config(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(self.config.as_deref(), &self.set)?;
        if let Some(seed) = self.seed {
            config.set_seed(seed);
        }
        if let Some(out) = &self.output {
            config.output = out.clone();
        }
        Ok(config)
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("LATENTFM_LOG", "warn")).try_init();
    let cli = match parse_cli(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let config = cli.load_config()?;
    match cli.command {
        Command::Experiment => {
            experiment::run_experiment(&config)?;
            let summary = config.output.join("summary.txt");
            if summary.exists() {
                print!("{}", fs::read_to_string(&summary).map_err(|e| Error::io(&summary, e))?);
            }
            Ok(())
        }
        command => {
            let p = experiment::prepare(&config)?;
            let out = &config.output;
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            match command {
                Command::Prepare => prepare(&p, out),
                Command::Topics => topics(&p, &config),
                Command::Embed => embed(&p, &config),
                Command::Train => train(&p, &config),
                Command::Evaluate => evaluate(&p, &config),
                Command::Experiment => unreachable!(),
            }
        }
    }
}

fn write_with(path: &Path, f: impl FnOnce(formats::Writer) -> std::io::Result<()>) -> Result<()> {
    f(formats::create(path)?).map_err(|e| Error::io(path, e))
}

fn prepare(p: &Prepared, out: &Path) -> Result<()> {
    let stats = serde_json::to_string_pretty(&Stats::of(p)).expect("stats serialize") + "\n";
    experiment::write_text(&out.join("stats.json"), &stats)?;
    write_with(&out.join("user_documents.txt"), |w| formats::write_user_documents(w, &p.user_docs, &p.split.train))?;
    write_with(&out.join("item_documents.txt"), |w| formats::write_item_documents(w, &p.item_docs, &p.split.train))?;
    write_with(&out.join("train.tsv"), |w| formats::write_ratings(w, &p.split.train))?;
    write_with(&out.join("test.tsv"), |w| formats::write_ratings(w, &p.split.test))?;
    print!("{stats}");
    Ok(())
}

fn topics(p: &Prepared, config: &ExperimentConfig) -> Result<()> {
    let spec = crate::VariantSpec { variant: latentfm_core::Variant::Topic, latent_dim: config.lda.k };
    let f = experiment::train_topics(p, config, config.lda.k, config.topic_sides)?;
    experiment::write_features(p, &config.output, spec, &f)
}

fn embed(p: &Prepared, config: &ExperimentConfig) -> Result<()> {
    let spec = crate::VariantSpec { variant: latentfm_core::Variant::Vector, latent_dim: config.skipgram.dim };
    let f = experiment::train_vectors(p, config, config.skipgram.dim)?;
    experiment::write_features(p, &config.output, spec, &f)
}

fn train(p: &Prepared, config: &ExperimentConfig) -> Result<()> {
    let spec = config.model;
    let features = experiment::load_or_train_features(p, config, spec, &config.output)?;
    let layout = experiment::layout_for(spec, config.topic_sides, p.n_users(), p.n_items());
    let (train, test) = experiment::encode_split(p, &layout, &features)?;
    let mut sink = MetricsSink::create(&config.output)?;
    let (model, records) = experiment::train_variant(spec, layout, &train, &test, config, |r| sink.emit(r))?;
    let path = config.model_path();
    write_with(&path, |w| formats::write_model(w, &model))?;
    info!("wrote {}", path.display());
    if let Some(last) = records.last() {
        println!("{spec} epoch {} train_rmse {} test_rmse {}", last.epoch, last.train_rmse, last.test_rmse);
    }
    Ok(())
}

fn evaluate(p: &Prepared, config: &ExperimentConfig) -> Result<()> {
    let path = config.model_path();
    let model = formats::read_model(&path)?;
    let spec = config.model;
    let expected = experiment::layout_for(spec, config.topic_sides, p.n_users(), p.n_items());
    if *model.layout() != expected {
        return Err(Error::Mismatch(format!(
            "{}: model layout does not match variant {spec} on this dataset",
            path.display()
        )));
    }
    let features = experiment::read_features(p, &config.output, spec, config.topic_sides)?.ok_or_else(|| {
        Error::Mismatch(format!("feature files for {spec} are missing in {}", config.output.display()))
    })?;
    let test = experiment::encode_dataset(&p.split.test, Some(&p.split.cold_start), &expected, &features)?;
    let clamp = config.fm.clamp.then_some(config.dataset.scale);
    println!("{}", evaluate_rmse(&model, &test, clamp)?);
    Ok(())
}
