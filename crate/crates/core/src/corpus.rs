//! Turns raw annotation records (boxes, descriptions, QA, reasoning traces)
//! into validated MM-CoT samples, and checks existing corpora against the
//! grid geometry. File IO lives in the companion tools crate; everything
//! here is pure and deterministic.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::format::{self, MMCoTSample, ObjectGrounding, ParseErrorKind, TaskKind};
use crate::geometry::{BBox, PatchGrid};

/// One object annotation as ingested: label, brief description, raw box.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAnnotation {
    pub label: String,
    pub description: String,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// One raw input record. Reasoning traces are adopted from the source
/// benchmark as-is; this layer only grounds and validates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub image_ref: String,
    pub image_width: u32,
    pub image_height: u32,
    pub objects: Vec<ObjectAnnotation>,
    pub question: String,
    pub answer: String,
    pub reasoning_trace: String,
    pub task: TaskKind,
}

/// Why a record was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RejectReason {
    /// Input line could not be decoded at all.
    Parse,
    /// Record-level invariant broken (empty fields, duplicate labels,
    /// reserved strings, no objects).
    InvalidRecord,
    /// Image/patch-size combination does not form a grid.
    InvalidGeometry,
    /// An object box has no interior (raw or after clamping).
    DegenerateBox,
    /// An object owns no patch center, so the record cannot be grounded.
    UngroundableObject,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::Parse => "parse",
            RejectReason::InvalidRecord => "invalid-record",
            RejectReason::InvalidGeometry => "invalid-geometry",
            RejectReason::DegenerateBox => "degenerate-box",
            RejectReason::UngroundableObject => "ungroundable-object",
        }
    }
}

impl core::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rejection outcome for one record. `empty_groundings` counts the objects
/// that owned no patch center (nonzero only for ungroundable records).
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: String,
    pub empty_groundings: u64,
}

impl Rejection {
    fn new(reason: RejectReason, detail: String) -> Self {
        Rejection {
            reason,
            detail,
            empty_groundings: 0,
        }
    }
}

/// Aggregate counters for one corpus build.
/// Invariant: `records_in == samples_out + rejected totals`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    pub records_in: u64,
    pub samples_out: u64,
    pub rejected: BTreeMap<RejectReason, u64>,
    /// Per-object grounded sequence length K -> count, over accepted samples.
    pub vrt_count_histogram: BTreeMap<u32, u64>,
    /// Objects that grounded to an empty VRT set, across all records.
    pub empty_grounding_count: u64,
}

impl CorpusStats {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    pub fn conserves_counts(&self) -> bool {
        self.records_in == self.samples_out + self.rejected_total()
    }

    fn note_rejection(&mut self, rejection: &Rejection) {
        *self.rejected.entry(rejection.reason).or_insert(0) += 1;
        self.empty_grounding_count += rejection.empty_groundings;
    }

    fn note_sample(&mut self, sample: &MMCoTSample) {
        self.samples_out += 1;
        for obj in sample.objects() {
            *self
                .vrt_count_histogram
                .entry(obj.vrts().len() as u32)
                .or_insert(0) += 1;
        }
    }

    /// Merges partial stats (associative and commutative), for pipelines
    /// that process records in parallel.
    pub fn merge(&mut self, other: &CorpusStats) {
        self.records_in += other.records_in;
        self.samples_out += other.samples_out;
        for (reason, n) in &other.rejected {
            *self.rejected.entry(*reason).or_insert(0) += n;
        }
        for (k, n) in &other.vrt_count_histogram {
            *self.vrt_count_histogram.entry(*k).or_insert(0) += n;
        }
        self.empty_grounding_count += other.empty_grounding_count;
    }
}

fn invalid(detail: String) -> Rejection {
    Rejection::new(RejectReason::InvalidRecord, detail)
}

/// Grounds one record on the patch grid and assembles the MM-CoT sample.
///
/// Any object that owns no patch center rejects the whole record: a
/// relational question is unanswerable with a missing referent.
pub fn build_sample(record: &AnnotationRecord, patch_size: u32) -> Result<MMCoTSample, Rejection> {
    if record.objects.is_empty() {
        return Err(invalid("record has no objects".to_string()));
    }
    for (i, obj) in record.objects.iter().enumerate() {
        if obj.label.trim().is_empty() {
            return Err(invalid(alloc::format!("object {i} has an empty label")));
        }
        if record.objects[..i].iter().any(|o| o.label == obj.label) {
            return Err(invalid(alloc::format!("duplicate object label '{}'", obj.label)));
        }
    }

    let grid = PatchGrid::new(record.image_width, record.image_height, patch_size)
        .map_err(|e| Rejection::new(RejectReason::InvalidGeometry, e.to_string()))?;

    let mut groundings = Vec::with_capacity(record.objects.len());
    let mut empty = 0u64;
    let mut empty_labels: Vec<&str> = Vec::new();
    for obj in &record.objects {
        let raw = BBox::new(obj.x_min, obj.y_min, obj.x_max, obj.y_max)
            .map_err(|e| Rejection::new(RejectReason::DegenerateBox, e.to_string()))?;
        let clamped = raw
            .clamp_to_image(record.image_width, record.image_height)
            .map_err(|e| Rejection::new(RejectReason::DegenerateBox, e.to_string()))?;
        let vrts = grid.vrts_in_box(&clamped);
        if vrts.is_empty() {
            empty += 1;
            empty_labels.push(&obj.label);
            continue;
        }
        let grounding = ObjectGrounding::new(obj.description.clone(), vrts.ordered())
            .map_err(|e| invalid(e.to_string()))?;
        groundings.push(grounding);
    }
    if empty > 0 {
        let mut rejection = Rejection::new(
            RejectReason::UngroundableObject,
            alloc::format!("objects own no patch center: {}", empty_labels.join(", ")),
        );
        rejection.empty_groundings = empty;
        return Err(rejection);
    }

    MMCoTSample::new(
        record.sample_id.clone(),
        record.image_ref.clone(),
        record.question.clone(),
        record.task,
        groundings,
        record.reasoning_trace.clone(),
        record.answer.clone(),
    )
    .map_err(|e| invalid(e.to_string()))
}

/// Build configuration: grid patch size plus input strictness.
#[derive(Debug, Clone, Copy)]
pub struct BuildConfig {
    pub patch_size: u32,
    /// When set, an undecodable input line aborts the build instead of being
    /// counted under `rejected["parse"]`.
    pub strict: bool,
}

/// One accepted output record, ready for line-oriented emission.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltSample {
    pub sample_id: String,
    pub image_ref: String,
    pub task: TaskKind,
    pub query: String,
    pub mmcot: String,
}

impl BuiltSample {
    pub fn from_sample(sample: &MMCoTSample) -> Self {
        BuiltSample {
            sample_id: sample.sample_id().to_string(),
            image_ref: sample.image_ref().to_string(),
            task: sample.task(),
            query: sample.query().to_string(),
            mmcot: sample.serialize(),
        }
    }
}

/// Fatal abort in strict mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildAbort {
    /// Zero-based index of the offending input item.
    pub index: usize,
    pub detail: String,
}

impl core::fmt::Display for BuildAbort {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "input record {} undecodable: {}", self.index, self.detail)
    }
}

impl core::error::Error for BuildAbort {}

/// Builds a corpus from pre-decoded input items, in input order. Items that
/// failed to decode arrive as `Err(detail)` and are counted under
/// `rejected["parse"]` (lenient) or abort the build (strict).
pub fn build_corpus<I>(
    items: I,
    config: &BuildConfig,
) -> Result<(Vec<BuiltSample>, CorpusStats), BuildAbort>
where
    I: IntoIterator<Item = Result<AnnotationRecord, String>>,
{
    let mut out = Vec::new();
    let mut stats = CorpusStats::default();
    for (index, item) in items.into_iter().enumerate() {
        stats.records_in += 1;
        match item {
            Err(detail) => {
                if config.strict {
                    return Err(BuildAbort { index, detail });
                }
                stats.note_rejection(&Rejection::new(RejectReason::Parse, detail));
            }
            Ok(record) => match build_sample(&record, config.patch_size) {
                Ok(sample) => {
                    stats.note_sample(&sample);
                    out.push(BuiltSample::from_sample(&sample));
                }
                Err(rejection) => stats.note_rejection(&rejection),
            },
        }
    }
    debug_assert!(stats.conserves_counts());
    Ok((out, stats))
}

/// Categories reported by corpus validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    ParseError,
    OrderingViolation,
    ReservedTagLeak,
    IndexOutOfRange,
}

impl DiagnosticKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiagnosticKind::ParseError => "parse error",
            DiagnosticKind::OrderingViolation => "ordering violation",
            DiagnosticKind::ReservedTagLeak => "reserved tag leak",
            DiagnosticKind::IndexOutOfRange => "index out of range",
        }
    }
}

/// One finding against a serialized sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDiagnostic {
    pub kind: DiagnosticKind,
    /// Byte offset into the sample text, when known.
    pub offset: Option<usize>,
    pub message: String,
}

/// Checks one serialized MM-CoT text against the format grammar and the
/// grid's index range. Reports findings instead of failing.
pub fn validate_sample_text(mmcot: &str, grid: &PatchGrid) -> Vec<SampleDiagnostic> {
    let body = match format::parse(mmcot) {
        Ok(body) => body,
        Err(e) => {
            let kind = match &e.kind {
                ParseErrorKind::VrtOrder => DiagnosticKind::OrderingViolation,
                ParseErrorKind::Field(format::FormatError::Reserved { .. })
                | ParseErrorKind::DuplicateTag(_) => DiagnosticKind::ReservedTagLeak,
                _ => DiagnosticKind::ParseError,
            };
            return alloc::vec![SampleDiagnostic {
                kind,
                offset: Some(e.offset),
                message: e.to_string(),
            }];
        }
    };
    let mut diags = Vec::new();
    let capacity = grid.num_patches();
    for (i, obj) in body.objects.iter().enumerate() {
        for idx in obj.vrts().indices() {
            if *idx >= capacity {
                diags.push(SampleDiagnostic {
                    kind: DiagnosticKind::IndexOutOfRange,
                    offset: None,
                    message: alloc::format!(
                        "object {i}: index out of range: <vrt_{idx}> on a grid of {capacity} patches"
                    ),
                });
            }
        }
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn record(objects: Vec<ObjectAnnotation>) -> AnnotationRecord {
        AnnotationRecord {
            sample_id: "r1".into(),
            image_ref: "img-001".into(),
            image_width: 224,
            image_height: 224,
            objects,
            question: "where is the red car".into(),
            answer: "left".into(),
            reasoning_trace: "the red car sits near the left edge".into(),
            task: TaskKind::LeftRight,
        }
    }

    fn obj(label: &str, desc: &str, b: (f64, f64, f64, f64)) -> ObjectAnnotation {
        ObjectAnnotation {
            label: label.into(),
            description: desc.into(),
            x_min: b.0,
            y_min: b.1,
            x_max: b.2,
            y_max: b.3,
        }
    }

    #[test]
    fn full_cover_object_grounds_every_patch() {
        let r = record(vec![obj("car", "the red car", (0.0, 0.0, 224.0, 224.0))]);
        let s = build_sample(&r, 28).unwrap();
        assert_eq!(s.objects()[0].vrts().len(), 64);
    }

    #[test]
    fn corner_fixture_grounds_expected_indices() {
        let r = record(vec![obj("car", "the red car", (0.0, 0.0, 56.0, 56.0))]);
        let s = build_sample(&r, 28).unwrap();
        assert_eq!(s.objects()[0].vrts().indices(), &[0, 1, 8, 9]);
    }

    #[test]
    fn tiny_box_rejects_as_ungroundable() {
        // A 5x5 box between centers contains none of them.
        let r = record(vec![obj("dot", "a dot", (20.0, 20.0, 25.0, 25.0))]);
        let e = build_sample(&r, 28).unwrap_err();
        assert_eq!(e.reason, RejectReason::UngroundableObject);
        assert_eq!(e.empty_groundings, 1);
    }

    #[test]
    fn degenerate_and_outside_boxes_reject() {
        let r = record(vec![obj("z", "zero", (50.0, 50.0, 50.0, 80.0))]);
        assert_eq!(build_sample(&r, 28).unwrap_err().reason, RejectReason::DegenerateBox);
        let r = record(vec![obj("o", "outside", (-80.0, 0.0, -10.0, 50.0))]);
        assert_eq!(build_sample(&r, 28).unwrap_err().reason, RejectReason::DegenerateBox);
    }

    #[test]
    fn invalid_records_reject() {
        let r = record(vec![]);
        assert_eq!(build_sample(&r, 28).unwrap_err().reason, RejectReason::InvalidRecord);

        let r = record(vec![
            obj("car", "a", (0.0, 0.0, 56.0, 56.0)),
            obj("car", "b", (0.0, 0.0, 56.0, 56.0)),
        ]);
        assert_eq!(build_sample(&r, 28).unwrap_err().reason, RejectReason::InvalidRecord);

        let mut r = record(vec![obj("car", "the red car", (0.0, 0.0, 56.0, 56.0))]);
        r.answer = "x </answer> y".into();
        assert_eq!(build_sample(&r, 28).unwrap_err().reason, RejectReason::InvalidRecord);
    }

    #[test]
    fn oversized_patch_rejects_as_invalid_geometry() {
        let r = record(vec![obj("car", "the red car", (0.0, 0.0, 56.0, 56.0))]);
        assert_eq!(build_sample(&r, 500).unwrap_err().reason, RejectReason::InvalidGeometry);
    }

    #[test]
    fn empty_input_builds_empty_corpus() {
        let cfg = BuildConfig { patch_size: 28, strict: false };
        let (out, stats) = build_corpus(core::iter::empty(), &cfg).unwrap();
        assert!(out.is_empty());
        assert_eq!(stats, CorpusStats::default());
    }

    #[test]
    fn counts_are_conserved() {
        let cfg = BuildConfig { patch_size: 28, strict: false };
        let good = record(vec![obj("car", "the red car", (0.0, 0.0, 56.0, 56.0))]);
        let bad = record(vec![obj("dot", "a dot", (20.0, 20.0, 25.0, 25.0))]);
        let items = vec![
            Ok(good.clone()),
            Ok(good.clone()),
            Ok(good),
            Ok(bad),
            Err("garbage line".to_string()),
        ];
        let (out, stats) = build_corpus(items, &cfg).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(stats.records_in, 5);
        assert_eq!(stats.samples_out, 3);
        assert_eq!(stats.rejected[&RejectReason::UngroundableObject], 1);
        assert_eq!(stats.rejected[&RejectReason::Parse], 1);
        assert!(stats.conserves_counts());
        assert_eq!(stats.vrt_count_histogram[&4], 3);
        assert_eq!(stats.empty_grounding_count, 1);
    }

    #[test]
    fn strict_mode_aborts_on_undecodable_line() {
        let cfg = BuildConfig { patch_size: 28, strict: true };
        let items = vec![Err("garbage".to_string())];
        let abort = build_corpus(items, &cfg).unwrap_err();
        assert_eq!(abort.index, 0);
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = BuildConfig { patch_size: 28, strict: false };
        let items = || {
            vec![
                Ok(record(vec![obj("car", "the red car", (0.0, 0.0, 56.0, 56.0))])),
                Ok(record(vec![obj("van", "a white van", (28.0, 28.0, 84.0, 84.0))])),
            ]
        };
        let (a, sa) = build_corpus(items(), &cfg).unwrap();
        let (b, sb) = build_corpus(items(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn builder_output_validates_clean() {
        let cfg = BuildConfig { patch_size: 28, strict: false };
        let items = vec![Ok(record(vec![obj("car", "the red car", (0.0, 0.0, 56.0, 56.0))]))];
        let (out, _) = build_corpus(items, &cfg).unwrap();
        let grid = PatchGrid::new(224, 224, 28).unwrap();
        for line in &out {
            assert!(validate_sample_text(&line.mmcot, &grid).is_empty());
        }
    }

    #[test]
    fn validator_flags_out_of_range_index() {
        let grid = PatchGrid::new(224, 224, 28).unwrap();
        let text = "<loc> a refer to <vrt_99> </loc>\n<think> t </think>\n<answer> x </answer>";
        let diags = validate_sample_text(text, &grid);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::IndexOutOfRange);
        assert!(diags[0].message.contains("index out of range"));
    }

    #[test]
    fn validator_flags_shuffled_vrts() {
        let grid = PatchGrid::new(224, 224, 28).unwrap();
        let text = "<loc> a refer to <vrt_9>, <vrt_1> </loc>\n<think> t </think>\n<answer> x </answer>";
        let diags = validate_sample_text(text, &grid);
        assert_eq!(diags[0].kind, DiagnosticKind::OrderingViolation);
    }

    #[test]
    fn validator_flags_parse_error() {
        let grid = PatchGrid::new(224, 224, 28).unwrap();
        let diags = validate_sample_text("not a sample", &grid);
        assert_eq!(diags[0].kind, DiagnosticKind::ParseError);
        assert!(diags[0].offset.is_some());
    }
}
