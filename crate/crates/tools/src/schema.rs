//! Wire types for the line-delimited file formats, kept apart from the core
//! types so dataset-specific loaders stay isolated behind plain conversions.
//!
//! Every file is UTF-8 JSON-lines. The corpus file opens with a header line
//! carrying the format version and the patch size it was built with.

use mmcot_core::corpus::{AnnotationRecord, BuiltSample, ObjectAnnotation};
use mmcot_core::eval::{GroundTruth, GtAnswer, Prediction};
use mmcot_core::geometry::BBox;
use mmcot_core::model::ModelConfig;
use mmcot_core::TaskKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const CORPUS_FORMAT_VERSION: &str = "1";
pub const CHECKPOINT_FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectWire {
    pub label: String,
    pub description: String,
    /// `[x_min, y_min, x_max, y_max]` in image pixels.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

/// One input annotation record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationWire {
    pub sample_id: String,
    pub image_ref: String,
    pub image_width: u32,
    pub image_height: u32,
    pub objects: Vec<ObjectWire>,
    pub question: String,
    pub answer: String,
    pub reasoning_trace: String,
    pub task: String,
}

impl AnnotationWire {
    pub fn into_record(self) -> Result<AnnotationRecord, String> {
        let task = TaskKind::parse_name(&self.task)
            .ok_or_else(|| format!("unknown task '{}'", self.task))?;
        Ok(AnnotationRecord {
            sample_id: self.sample_id,
            image_ref: self.image_ref,
            image_width: self.image_width,
            image_height: self.image_height,
            objects: self
                .objects
                .into_iter()
                .map(|o| ObjectAnnotation {
                    label: o.label,
                    description: o.description,
                    x_min: o.bbox[0],
                    y_min: o.bbox[1],
                    x_max: o.bbox[2],
                    y_max: o.bbox[3],
                })
                .collect(),
            question: self.question,
            answer: self.answer,
            reasoning_trace: self.reasoning_trace,
            task,
        })
    }
}

/// First line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeaderWire {
    pub format_version: String,
    pub patch_size: u32,
}

/// One corpus record: identity fields, the conditioning query, and the
/// serialized MM-CoT text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLineWire {
    pub sample_id: String,
    pub image_ref: String,
    pub task: String,
    pub query: String,
    pub mmcot: String,
}

impl CorpusLineWire {
    pub fn from_built(sample: &BuiltSample) -> Self {
        CorpusLineWire {
            sample_id: sample.sample_id.clone(),
            image_ref: sample.image_ref.clone(),
            task: sample.task.as_str().to_string(),
            query: sample.query.clone(),
            mmcot: sample.mmcot.clone(),
        }
    }

    pub fn task_kind(&self) -> Result<TaskKind, String> {
        TaskKind::parse_name(&self.task).ok_or_else(|| format!("unknown task '{}'", self.task))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionWire {
    pub sample_id: String,
    pub task: String,
    pub raw_text: String,
}

impl PredictionWire {
    pub fn into_prediction(self) -> Result<Prediction, String> {
        let task = TaskKind::parse_name(&self.task)
            .ok_or_else(|| format!("unknown task '{}'", self.task))?;
        Ok(Prediction::from_raw(self.sample_id, task, self.raw_text))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthWire {
    pub sample_id: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    /// Target box for the pixel-localization task.
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

impl GroundTruthWire {
    pub fn into_ground_truth(self) -> Result<GroundTruth, String> {
        let task = TaskKind::parse_name(&self.task)
            .ok_or_else(|| format!("unknown task '{}'", self.task))?;
        let answer = match (task, self.answer, self.bbox) {
            (TaskKind::Pixel, _, Some(b)) => {
                let bbox = BBox::new(b[0], b[1], b[2], b[3]).map_err(|e| e.to_string())?;
                GtAnswer::TargetBox(bbox)
            }
            (TaskKind::Pixel, _, None) => {
                return Err(format!("pixel ground truth '{}' needs a box", self.sample_id))
            }
            (_, Some(a), _) => GtAnswer::Label(a),
            (_, None, _) => {
                return Err(format!("ground truth '{}' needs an answer", self.sample_id))
            }
        };
        Ok(GroundTruth {
            sample_id: self.sample_id,
            task,
            answer,
        })
    }
}

/// Mirror of the model configuration for checkpoint headers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfigWire {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_seq_len: usize,
    pub base_vocab_size: usize,
    pub vrt_capacity: usize,
    pub feature_dim: usize,
    pub seed: u64,
    pub text_loss_weight: f64,
    pub vrt_loss_weight: f64,
}

impl From<&ModelConfig> for ModelConfigWire {
    fn from(c: &ModelConfig) -> Self {
        ModelConfigWire {
            embed_dim: c.embed_dim,
            layers: c.layers,
            heads: c.heads,
            max_seq_len: c.max_seq_len,
            base_vocab_size: c.base_vocab_size,
            vrt_capacity: c.vrt_capacity,
            feature_dim: c.feature_dim,
            seed: c.seed,
            text_loss_weight: c.text_loss_weight,
            vrt_loss_weight: c.vrt_loss_weight,
        }
    }
}

impl From<ModelConfigWire> for ModelConfig {
    fn from(w: ModelConfigWire) -> Self {
        ModelConfig {
            embed_dim: w.embed_dim,
            layers: w.layers,
            heads: w.heads,
            max_seq_len: w.max_seq_len,
            base_vocab_size: w.base_vocab_size,
            vrt_capacity: w.vrt_capacity,
            feature_dim: w.feature_dim,
            seed: w.seed,
            text_loss_weight: w.text_loss_weight,
            vrt_loss_weight: w.vrt_loss_weight,
        }
    }
}

/// Whole checkpoint: version, configuration, named parameter groups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointWire {
    pub format_version: String,
    pub config: ModelConfigWire,
    pub params: BTreeMap<String, Vec<f64>>,
}

/// One trainer trajectory record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryLineWire {
    pub step: usize,
    pub text_loss: f64,
    pub vrt_loss: f64,
    pub total_loss: f64,
}

/// Structured scorecard, matching the core report emitter field-for-field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorecardWire {
    pub yaw: TaskScoreWire,
    pub pixel: TaskScoreWire,
    pub depth: TaskScoreWire,
    pub distance: TaskScoreWire,
    pub left_right: TaskScoreWire,
    pub front_behind: TaskScoreWire,
    pub overall: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskScoreWire {
    pub mean: f64,
    pub count: usize,
}
