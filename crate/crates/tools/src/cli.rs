//! Command-line interface: corpus building and validation, toy training,
//! generation, evaluation, and report formatting.
//!
//! Exit status: 0 on success, 1 on validation findings or runtime failure,
//! 2 on usage errors. Diagnostics go to stderr, data to files or stdout.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mmcot_core::corpus::BuildConfig;
use mmcot_core::eval::{report, ReportFormat};
use mmcot_core::geometry::PatchGrid;
use mmcot_core::model::TrainParams;

use crate::corpus_io::{build_items, read_annotation_items, validate_corpus_file, write_corpus};
use crate::pipeline::{self, DecodeMode, TrainSpec};
use crate::{checkpoint, eval_io, vocab_io};

#[derive(Debug, Parser)]
#[command(
    name = "mmcot",
    version,
    about = "Grounded chain-of-thought corpus tools, toy model trainer, and spatial-reasoning scorer"
)]
pub struct Cli {
    /// Base directory prepended to relative file paths.
    #[arg(long, global = true, env = "MMCOT_DATA_DIR")]
    pub data_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Tsv,
    Structured,
}

impl From<OutputFormat> for ReportFormat {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Tsv => ReportFormat::Tsv,
            OutputFormat::Structured => ReportFormat::Structured,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenerationMode {
    Greedy,
    Constrained,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an MM-CoT corpus from annotation records.
    BuildCorpus {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        patch_size: u32,
        /// Abort on undecodable input lines instead of counting them.
        #[arg(long)]
        strict: bool,
        /// Worker threads; output is identical regardless of the count.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Check an existing corpus against the grid geometry and the format.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        image_width: u32,
        #[arg(long)]
        image_height: u32,
        #[arg(long)]
        patch_size: u32,
    },
    /// Memorization-train the toy model on a corpus.
    TrainToy {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        image_width: u32,
        #[arg(long)]
        image_height: u32,
        #[arg(long = "out-model")]
        out_model: PathBuf,
        #[arg(long = "out-vocab")]
        out_vocab: PathBuf,
        /// Loss trajectory file (JSON lines), one record per step.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value_t = 1500)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        /// Stop once the batch loss falls below this value.
        #[arg(long)]
        stop_below: Option<f64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        embed_dim: usize,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 128)]
        max_seq_len: usize,
        #[arg(long, default_value_t = 16)]
        feature_dim: usize,
        #[arg(long, default_value_t = 1.0)]
        text_loss_weight: f64,
        #[arg(long, default_value_t = 1.0)]
        vrt_loss_weight: f64,
        /// Fixed instruction text prepended to every query.
        #[arg(long, default_value = "")]
        query_prefix: String,
    },
    /// Generate predictions for every record of a corpus.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, default_value_t = 96)]
        max_new: usize,
        #[arg(long, value_enum, default_value_t = GenerationMode::Greedy)]
        mode: GenerationMode,
        #[arg(long, default_value = "")]
        query_prefix: String,
    },
    /// Score predictions against ground truths.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Report file; stdout when omitted.
        #[arg(long = "out")]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
        format: OutputFormat,
    },
    /// Re-render a structured scorecard.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
        format: OutputFormat,
    },
}

fn resolve(data_dir: &Option<PathBuf>, path: &Path) -> PathBuf {
    match data_dir {
        Some(base) if path.is_relative() => base.join(path),
        _ => path.to_path_buf(),
    }
}

fn emit(output: &Option<PathBuf>, data_dir: &Option<PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => {
            let path = resolve(data_dir, path);
            std::fs::write(&path, text).with_context(|| format!("write {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs one parsed invocation; the return value is the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let dir = &cli.data_dir;
    match cli.command {
        Command::BuildCorpus {
            input,
            output,
            patch_size,
            strict,
            threads,
        } => {
            let items = read_annotation_items(&resolve(dir, &input))?;
            let config = BuildConfig { patch_size, strict };
            let (samples, stats) = build_items(items, &config, threads.max(1))?;
            write_corpus(&resolve(dir, &output), patch_size, &samples)?;
            eprintln!(
                "records in: {}, samples out: {}, rejected: {}",
                stats.records_in,
                stats.samples_out,
                stats.rejected_total()
            );
            for (reason, count) in &stats.rejected {
                eprintln!("  rejected[{reason}] = {count}");
            }
            Ok(0)
        }
        Command::Validate {
            input,
            image_width,
            image_height,
            patch_size,
        } => {
            let grid = PatchGrid::new(image_width, image_height, patch_size)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let diagnostics = validate_corpus_file(&resolve(dir, &input), &grid)?;
            for d in &diagnostics {
                eprintln!("{d}");
            }
            if diagnostics.is_empty() {
                eprintln!("corpus is clean");
                Ok(0)
            } else {
                eprintln!("{} finding(s)", diagnostics.len());
                Ok(1)
            }
        }
        Command::TrainToy {
            input,
            image_width,
            image_height,
            out_model,
            out_vocab,
            trajectory,
            steps,
            learning_rate,
            momentum,
            stop_below,
            seed,
            embed_dim,
            layers,
            heads,
            max_seq_len,
            feature_dim,
            text_loss_weight,
            vrt_loss_weight,
            query_prefix,
        } => {
            let corpus = pipeline::load_corpus(&resolve(dir, &input), image_width, image_height)?;
            let spec = TrainSpec {
                embed_dim,
                layers,
                heads,
                max_seq_len,
                feature_dim,
                seed,
                text_loss_weight,
                vrt_loss_weight,
                query_prefix,
                params: TrainParams {
                    steps,
                    learning_rate,
                    momentum,
                    stop_below,
                },
            };
            let artifacts = pipeline::train_on_corpus(&corpus, &spec)?;
            checkpoint::save_model(&resolve(dir, &out_model), &artifacts.model)?;
            vocab_io::save_vocab(&resolve(dir, &out_vocab), &artifacts.vocab)?;
            if let Some(path) = trajectory {
                checkpoint::write_trajectory(&resolve(dir, &path), &artifacts.trajectory)?;
            }
            if let Some(last) = artifacts.trajectory.last() {
                eprintln!(
                    "trained {} step(s); final loss: text {:.6}, vrt {:.6}, total {:.6}",
                    artifacts.trajectory.len(),
                    last.text,
                    last.vrt,
                    last.total
                );
            }
            Ok(0)
        }
        Command::Generate {
            model,
            vocab,
            input,
            output,
            max_new,
            mode,
            query_prefix,
        } => {
            let model = checkpoint::load_model(&resolve(dir, &model))?;
            let vocab = vocab_io::load_vocab(&resolve(dir, &vocab))?;
            let mode = match mode {
                GenerationMode::Greedy => DecodeMode::Greedy,
                GenerationMode::Constrained => DecodeMode::Constrained,
            };
            let predictions = pipeline::generate_predictions(
                &model,
                &vocab,
                &resolve(dir, &input),
                &query_prefix,
                max_new,
                mode,
            )?;
            eval_io::write_predictions(&resolve(dir, &output), &predictions)?;
            eprintln!("generated {} prediction(s)", predictions.len());
            Ok(0)
        }
        Command::Eval {
            pred,
            gt,
            output,
            format,
        } => {
            let scorecard = eval_io::eval_files(&resolve(dir, &pred), &resolve(dir, &gt))?;
            let text = report(&scorecard, format.into());
            emit(&output, dir, &text)?;
            Ok(0)
        }
        Command::Report {
            input,
            output,
            format,
        } => {
            let scorecard = eval_io::read_scorecard(&resolve(dir, &input))?;
            let text = report(&scorecard, format.into());
            emit(&output, dir, &text)?;
            Ok(0)
        }
    }
}
