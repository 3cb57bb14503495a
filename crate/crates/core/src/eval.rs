//! Scoring for the six spatial-reasoning tasks: exact match for the
//! categorical tasks, a centerness metric for pixel localization, per-task
//! means in percent, and the unweighted overall average.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::format::TaskKind;
use crate::geometry::BBox;
use crate::num;

/// Evaluation failures. Scoring itself never fails on malformed predictions
/// (they score 0); these are bookkeeping errors.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    DuplicatePrediction { sample_id: String },
    DuplicateGroundTruth { sample_id: String },
    /// Ground truth for the pixel task must carry a box, and vice versa.
    AnswerTypeMismatch { sample_id: String },
    /// No ground truths for a task, so its mean is undefined.
    EmptyTask { task: TaskKind },
}

impl core::fmt::Display for EvalError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EvalError::DuplicatePrediction { sample_id } => {
                write!(f, "duplicate prediction for sample '{sample_id}'")
            }
            EvalError::DuplicateGroundTruth { sample_id } => {
                write!(f, "duplicate ground truth for sample '{sample_id}'")
            }
            EvalError::AnswerTypeMismatch { sample_id } => {
                write!(f, "ground-truth answer type does not fit the task for '{sample_id}'")
            }
            EvalError::EmptyTask { task } => write!(f, "no ground truths for task '{task}'"),
        }
    }
}

impl core::error::Error for EvalError {}

/// Task-specific payload recovered from a raw model output.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedAnswer {
    Label(String),
    Point(f64, f64),
}

/// One model output for one sample. `parsed` is present only when the raw
/// text yielded a usable answer; otherwise the prediction scores 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sample_id: String,
    pub task: TaskKind,
    pub raw_text: String,
    pub parsed: Option<ParsedAnswer>,
}

impl Prediction {
    pub fn from_raw(sample_id: String, task: TaskKind, raw_text: String) -> Self {
        let parsed = parse_answer(&raw_text, task);
        Prediction {
            sample_id,
            task,
            raw_text,
            parsed,
        }
    }
}

/// Reference answer for one sample; the pixel task grades against the target
/// box rather than a literal string.
#[derive(Debug, Clone, PartialEq)]
pub enum GtAnswer {
    Label(String),
    TargetBox(BBox),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub sample_id: String,
    pub task: TaskKind,
    pub answer: GtAnswer,
}

/// Pulls the answer payload out of a raw model output: the `<answer>` block
/// when the text parses (or contains one), otherwise the whole trimmed text.
pub fn extract_answer_text(raw_text: &str) -> &str {
    if let Some(start) = raw_text.find("<answer>") {
        let after = start + "<answer>".len();
        if let Some(len) = raw_text[after..].find("</answer>") {
            return raw_text[after..after + len].trim();
        }
    }
    raw_text.trim()
}

/// Task-specific answer parsing. Failures are `None`, never errors.
pub fn parse_answer(raw_text: &str, task: TaskKind) -> Option<ParsedAnswer> {
    let text = extract_answer_text(raw_text);
    if text.is_empty() {
        return None;
    }
    match task {
        TaskKind::Pixel => parse_point(text).map(|(x, y)| ParsedAnswer::Point(x, y)),
        _ => Some(ParsedAnswer::Label(text.to_string())),
    }
}

/// Coordinate grammar `(x, y)`, parens optional, real-valued.
fn parse_point(text: &str) -> Option<(f64, f64)> {
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .unwrap_or(text);
    let (a, b) = inner.split_once(',')?;
    let x: f64 = a.trim().parse().ok()?;
    let y: f64 = b.trim().parse().ok()?;
    if x.is_finite() && y.is_finite() {
        Some((x, y))
    } else {
        None
    }
}

fn canonical_label(s: &str) -> String {
    s.trim().to_lowercase()
}

/// 1 iff the canonical forms (trimmed, case-folded) are equal.
pub fn score_exact(pred_answer: &str, gt_answer: &str) -> u32 {
    (canonical_label(pred_answer) == canonical_label(gt_answer)) as u32
}

/// Centerness of a predicted point against the target box: 0 outside the
/// box; inside, the geometric mean of the two per-axis ratios of the smaller
/// to the larger side distance. 1 exactly at the box center.
pub fn score_centerness(point: (f64, f64), target: &BBox) -> f64 {
    let (x, y) = point;
    let l = x - target.x_min();
    let r = target.x_max() - x;
    let t = y - target.y_min();
    let b = target.y_max() - y;
    if l < 0.0 || r < 0.0 || t < 0.0 || b < 0.0 {
        return 0.0;
    }
    let horiz = l.min(r) / l.max(r);
    let vert = t.min(b) / t.max(b);
    num::sqrt(horiz * vert)
}

/// Mean score for one task, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskScore {
    pub mean_percent: f64,
    pub count: usize,
}

/// Scores one task: the mean over all its ground truths, times 100. Missing
/// predictions score 0; duplicate predictions or ground truths are errors.
pub fn score_task(
    predictions: &[Prediction],
    ground_truths: &[GroundTruth],
    task: TaskKind,
) -> Result<TaskScore, EvalError> {
    let mut preds: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in predictions.iter().filter(|p| p.task == task) {
        if preds.insert(&p.sample_id, p).is_some() {
            return Err(EvalError::DuplicatePrediction {
                sample_id: p.sample_id.clone(),
            });
        }
    }
    let gts: Vec<&GroundTruth> = ground_truths.iter().filter(|g| g.task == task).collect();
    if gts.is_empty() {
        return Err(EvalError::EmptyTask { task });
    }
    let mut seen: Vec<&str> = Vec::with_capacity(gts.len());
    let mut sum = 0.0f64;
    for gt in &gts {
        if seen.contains(&gt.sample_id.as_str()) {
            return Err(EvalError::DuplicateGroundTruth {
                sample_id: gt.sample_id.clone(),
            });
        }
        seen.push(&gt.sample_id);
        sum += score_one(preds.get(gt.sample_id.as_str()).copied(), gt)?;
    }
    Ok(TaskScore {
        mean_percent: sum / gts.len() as f64 * 100.0,
        count: gts.len(),
    })
}

fn score_one(pred: Option<&Prediction>, gt: &GroundTruth) -> Result<f64, EvalError> {
    let score = match (&gt.answer, gt.task) {
        (GtAnswer::TargetBox(target), TaskKind::Pixel) => match pred.and_then(|p| p.parsed.as_ref())
        {
            Some(ParsedAnswer::Point(x, y)) => score_centerness((*x, *y), target),
            _ => 0.0,
        },
        (GtAnswer::Label(label), task) if task != TaskKind::Pixel => {
            match pred.and_then(|p| p.parsed.as_ref()) {
                Some(ParsedAnswer::Label(got)) => score_exact(got, label) as f64,
                _ => 0.0,
            }
        }
        _ => {
            return Err(EvalError::AnswerTypeMismatch {
                sample_id: gt.sample_id.clone(),
            })
        }
    };
    Ok(score)
}

/// Per-task means for all six tasks plus the unweighted overall average.
#[derive(Debug, Clone, PartialEq)]
pub struct Scorecard {
    scores: BTreeMap<TaskKind, TaskScore>,
}

impl Scorecard {
    /// Requires a score for every one of the six tasks.
    pub fn from_task_scores(scores: BTreeMap<TaskKind, TaskScore>) -> Result<Self, EvalError> {
        for task in TaskKind::ALL {
            if !scores.contains_key(&task) {
                return Err(EvalError::EmptyTask { task });
            }
        }
        Ok(Scorecard { scores })
    }

    pub fn task(&self, task: TaskKind) -> TaskScore {
        self.scores[&task]
    }

    pub fn task_means(&self) -> [f64; 6] {
        let mut means = [0.0; 6];
        for (i, task) in TaskKind::ALL.iter().enumerate() {
            means[i] = self.scores[task].mean_percent;
        }
        means
    }

    pub fn overall(&self) -> f64 {
        overall_score(self.task_means())
    }
}

/// Unweighted mean of the six per-task means.
pub fn overall_score(task_means: [f64; 6]) -> f64 {
    task_means.iter().sum::<f64>() / 6.0
}

/// Scores every task and assembles the scorecard.
pub fn score_all(
    predictions: &[Prediction],
    ground_truths: &[GroundTruth],
) -> Result<Scorecard, EvalError> {
    let mut scores = BTreeMap::new();
    for task in TaskKind::ALL {
        scores.insert(task, score_task(predictions, ground_truths, task)?);
    }
    Scorecard::from_task_scores(scores)
}

/// Output layout for [`report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Structured,
}

/// Renders the scorecard: a tab-separated header/row pair in task order plus
/// overall, or a structured (JSON) object with the same fields. Two-decimal
/// fixed formatting, byte-deterministic.
pub fn report(scorecard: &Scorecard, fmt: ReportFormat) -> String {
    match fmt {
        ReportFormat::Tsv => {
            let mut header: Vec<&str> = TaskKind::ALL.iter().map(TaskKind::as_str).collect();
            header.push("overall");
            let mut row: Vec<String> = TaskKind::ALL
                .iter()
                .map(|t| format!("{:.2}", scorecard.task(*t).mean_percent))
                .collect();
            row.push(format!("{:.2}", scorecard.overall()));
            format!("{}\n{}\n", header.join("\t"), row.join("\t"))
        }
        ReportFormat::Structured => {
            let mut out = String::from("{");
            for task in TaskKind::ALL {
                let s = scorecard.task(task);
                out.push_str(&format!(
                    "\"{}\":{{\"mean\":{:.2},\"count\":{}}},",
                    task.as_str(),
                    s.mean_percent,
                    s.count
                ));
            }
            out.push_str(&format!("\"overall\":{:.2}}}", scorecard.overall()));
            out.push('\n');
            out
        }
    }
}
