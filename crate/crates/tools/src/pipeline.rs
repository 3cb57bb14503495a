//! Corpus-to-model plumbing shared by the CLI and the test suites: corpus
//! loading into samples, vocabulary construction, encoding, training, and
//! batch generation into prediction files.

use std::path::Path;

use anyhow::{bail, Result};
use mmcot_core::format::{parse, MMCoTSample};
use mmcot_core::geometry::PatchGrid;
use mmcot_core::model::{
    train_overfit, GenMode, LossBreakdown, ModelConfig, PatchFeatures, ToyModel, TrainParams,
};
use mmcot_core::vocab::{decode, encode, tokenize, EncodedSample, Vocabulary, BOS_ID};

use crate::corpus_io::read_corpus;
use crate::schema::{CorpusLineWire, PredictionWire};

/// A corpus record reassembled into a full sample.
pub fn sample_from_line(line: &CorpusLineWire) -> Result<MMCoTSample> {
    let task = line
        .task_kind()
        .map_err(|e| anyhow::anyhow!("record '{}': {e}", line.sample_id))?;
    let body = parse(&line.mmcot)
        .map_err(|e| anyhow::anyhow!("record '{}': {e}", line.sample_id))?;
    MMCoTSample::from_parsed(
        line.sample_id.clone(),
        line.image_ref.clone(),
        line.query.clone(),
        task,
        body,
    )
    .map_err(|e| anyhow::anyhow!("record '{}': {e}", line.sample_id))
}

/// Loaded corpus: grid geometry plus full samples.
pub struct LoadedCorpus {
    pub grid: PatchGrid,
    pub patch_size: u32,
    pub samples: Vec<MMCoTSample>,
}

pub fn load_corpus(path: &Path, image_width: u32, image_height: u32) -> Result<LoadedCorpus> {
    let (header, lines) = read_corpus(path)?;
    let grid = PatchGrid::new(image_width, image_height, header.patch_size)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let samples = lines
        .iter()
        .map(sample_from_line)
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        bail!("corpus {} holds no records", path.display());
    }
    Ok(LoadedCorpus {
        grid,
        patch_size: header.patch_size,
        samples,
    })
}

/// Vocabulary over the queries and serialized bodies of the corpus (plus the
/// query prefix, when one is configured).
pub fn vocab_for_samples(
    samples: &[MMCoTSample],
    grid: &PatchGrid,
    query_prefix: &str,
) -> Result<Vocabulary> {
    let mut texts: Vec<String> = Vec::with_capacity(samples.len() * 2 + 1);
    if !query_prefix.is_empty() {
        texts.push(query_prefix.to_string());
    }
    for s in samples {
        texts.push(s.query().to_string());
        texts.push(s.serialize());
    }
    Vocabulary::build(texts.iter().map(String::as_str), grid).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Architecture knobs the trainer exposes; vocabulary sizes come from the
/// data.
#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_seq_len: usize,
    pub feature_dim: usize,
    pub seed: u64,
    pub text_loss_weight: f64,
    pub vrt_loss_weight: f64,
    pub query_prefix: String,
    pub params: TrainParams,
}

pub struct TrainedArtifacts {
    pub model: ToyModel,
    pub vocab: Vocabulary,
    pub trajectory: Vec<LossBreakdown>,
}

/// Encodes a sample batch against a vocabulary, with per-image synthetic
/// patch features keyed by the model seed.
pub fn encode_batch(
    samples: &[MMCoTSample],
    vocab: &Vocabulary,
    config: &ModelConfig,
    query_prefix: &str,
) -> Result<Vec<(EncodedSample, PatchFeatures)>> {
    samples
        .iter()
        .map(|s| {
            let encoded = encode(s, vocab, query_prefix)
                .map_err(|e| anyhow::anyhow!("encode '{}': {e}", s.sample_id()))?;
            if encoded.token_ids.len() > config.max_seq_len {
                bail!(
                    "sample '{}' needs {} tokens but max_seq_len is {}",
                    s.sample_id(),
                    encoded.token_ids.len(),
                    config.max_seq_len
                );
            }
            let features = PatchFeatures::synthetic(
                s.image_ref(),
                config.seed,
                config.vrt_capacity,
                config.feature_dim,
            );
            Ok((encoded, features))
        })
        .collect()
}

/// Trains on the whole corpus as one memorization batch.
pub fn train_on_corpus(corpus: &LoadedCorpus, spec: &TrainSpec) -> Result<TrainedArtifacts> {
    let vocab = vocab_for_samples(&corpus.samples, &corpus.grid, &spec.query_prefix)?;
    let config = ModelConfig {
        embed_dim: spec.embed_dim,
        layers: spec.layers,
        heads: spec.heads,
        max_seq_len: spec.max_seq_len,
        base_vocab_size: vocab.base_size() as usize,
        vrt_capacity: vocab.vrt_capacity() as usize,
        feature_dim: spec.feature_dim,
        seed: spec.seed,
        text_loss_weight: spec.text_loss_weight,
        vrt_loss_weight: spec.vrt_loss_weight,
    };
    let batch = encode_batch(&corpus.samples, &vocab, &config, &spec.query_prefix)?;
    let mut model = ToyModel::init(config).map_err(|e| anyhow::anyhow!("{e}"))?;
    let trajectory =
        train_overfit(&mut model, &batch, &spec.params).map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(TrainedArtifacts {
        model,
        vocab,
        trajectory,
    })
}

/// Decoding mode selector for the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Constrained,
}

/// Runs generation for one corpus record; returns the decoded new text (the
/// prompt and the trailing end marker are stripped).
pub fn generate_for_sample(
    model: &ToyModel,
    vocab: &Vocabulary,
    query_prefix: &str,
    query: &str,
    image_ref: &str,
    max_new: usize,
    mode: DecodeMode,
) -> Result<String> {
    let prompt_text = if query_prefix.is_empty() {
        query.to_string()
    } else {
        format!("{query_prefix} {query}")
    };
    let mut prompt_ids = vec![BOS_ID];
    for token in tokenize(&prompt_text) {
        prompt_ids.push(vocab.id_of(token).map_err(|e| anyhow::anyhow!("{e}"))?);
    }
    let config = model.config();
    if prompt_ids.len() + max_new > config.max_seq_len {
        bail!(
            "prompt of {} tokens plus budget {} exceeds max_seq_len {}",
            prompt_ids.len(),
            max_new,
            config.max_seq_len
        );
    }
    let features = PatchFeatures::synthetic(
        image_ref,
        config.seed,
        config.vrt_capacity,
        config.feature_dim,
    );
    let gen_mode = match mode {
        DecodeMode::Greedy => GenMode::Greedy {
            eos_id: vocab.special_ids().eos,
        },
        DecodeMode::Constrained => GenMode::Constrained {
            specials: vocab.special_ids(),
            base_size: vocab.base_size(),
        },
    };
    let ids = model
        .generate(&prompt_ids, &features, max_new, &gen_mode)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut new_ids = &ids[prompt_ids.len()..];
    if let Some((last, rest)) = new_ids.split_last() {
        if *last == vocab.special_ids().eos {
            new_ids = rest;
        }
    }
    decode(new_ids, vocab).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Generates predictions for every record of a corpus file.
pub fn generate_predictions(
    model: &ToyModel,
    vocab: &Vocabulary,
    corpus_path: &Path,
    query_prefix: &str,
    max_new: usize,
    mode: DecodeMode,
) -> Result<Vec<PredictionWire>> {
    let (_, lines) = read_corpus(corpus_path)?;
    let mut out = Vec::with_capacity(lines.len());
    for line in &lines {
        // Keep the run going on over-long prompts; an empty output scores 0.
        let raw_text = match generate_for_sample(
            model,
            vocab,
            query_prefix,
            &line.query,
            &line.image_ref,
            max_new,
            mode,
        ) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("warning: sample '{}': {e}", line.sample_id);
                String::new()
            }
        };
        out.push(PredictionWire {
            sample_id: line.sample_id.clone(),
            task: line.task.clone(),
            raw_text,
        });
    }
    Ok(out)
}
