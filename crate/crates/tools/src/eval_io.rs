//! Prediction/ground-truth file readers and report writing around the core
//! scoring functions.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use mmcot_core::eval::{score_all, GroundTruth, Prediction, Scorecard, TaskScore};
use mmcot_core::TaskKind;

use crate::schema::{GroundTruthWire, PredictionWire, ScorecardWire};

fn read_jsonl<T, F, O>(path: &Path, convert: F) -> Result<Vec<O>>
where
    T: serde::de::DeserializeOwned,
    F: Fn(T) -> Result<O, String>,
{
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: T = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", path.display(), idx + 1))?;
        let item = convert(wire)
            .map_err(|e| anyhow::anyhow!("{} line {}: {e}", path.display(), idx + 1))?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    read_jsonl(path, PredictionWire::into_prediction)
}

pub fn read_ground_truths(path: &Path) -> Result<Vec<GroundTruth>> {
    read_jsonl(path, GroundTruthWire::into_ground_truth)
}

pub fn write_predictions(path: &Path, predictions: &[PredictionWire]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut out = std::io::BufWriter::new(file);
    for p in predictions {
        writeln!(out, "{}", serde_json::to_string(p)?)?;
    }
    out.flush()?;
    Ok(())
}

/// Scores prediction and ground-truth files into a scorecard.
pub fn eval_files(pred_path: &Path, gt_path: &Path) -> Result<Scorecard> {
    let predictions = read_predictions(pred_path)?;
    let ground_truths = read_ground_truths(gt_path)?;
    score_all(&predictions, &ground_truths).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Reads back a structured scorecard emitted by the core report function.
pub fn read_scorecard(path: &Path) -> Result<Scorecard> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let wire: ScorecardWire = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("decode scorecard {}", path.display()))?;
    let mut scores = BTreeMap::new();
    for (task, s) in [
        (TaskKind::Yaw, &wire.yaw),
        (TaskKind::Pixel, &wire.pixel),
        (TaskKind::Depth, &wire.depth),
        (TaskKind::Distance, &wire.distance),
        (TaskKind::LeftRight, &wire.left_right),
        (TaskKind::FrontBehind, &wire.front_behind),
    ] {
        scores.insert(
            task,
            TaskScore {
                mean_percent: s.mean,
                count: s.count,
            },
        );
    }
    Scorecard::from_task_scores(scores).map_err(|e| anyhow::anyhow!("{e}"))
}
