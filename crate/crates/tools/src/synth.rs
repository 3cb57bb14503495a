//! Deterministic synthetic fixtures: annotation records with groundable
//! cell-aligned boxes, matching ground truths, and random valid samples for
//! format stress tests. Everything is driven by the toolkit PRNG, so a seed
//! pins the fixtures exactly.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use mmcot_core::format::{MMCoTSample, ObjectGrounding, TaskKind};
use mmcot_core::geometry::OrderedVrtSequence;
use mmcot_core::rng::Rng;

use crate::schema::{AnnotationWire, GroundTruthWire, ObjectWire};

const COLORS: &[&str] = &["red", "blue", "white", "black", "silver", "green", "yellow"];
const NOUNS: &[&str] = &["car", "van", "truck", "bus", "bike", "trailer"];
const YAW_ANSWERS: &[&str] = &["oncoming", "leading", "left-facing", "right-facing"];
const DEPTH_ANSWERS: &[&str] = &["near", "medium", "far"];

fn pick<'a>(rng: &mut Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.next_below(pool.len() as u64) as usize]
}

struct SynthObject {
    description: String,
    bbox: [f64; 4],
}

/// A cell-aligned box spanning 1..=2 grid cells per axis; every spanned cell
/// center falls inside it, so the object is always groundable.
fn synth_object(rng: &mut Rng, rows: u32, cols: u32, ps: u32, taken: &[String]) -> SynthObject {
    let description = loop {
        let d = format!("the {} {}", pick(rng, COLORS), pick(rng, NOUNS));
        if !taken.contains(&d) {
            break d;
        }
    };
    let span_c = 1 + rng.next_below(2.min(cols as u64));
    let span_r = 1 + rng.next_below(2.min(rows as u64));
    let c0 = rng.next_below((cols as u64) - span_c + 1);
    let r0 = rng.next_below((rows as u64) - span_r + 1);
    let ps = ps as f64;
    SynthObject {
        description,
        bbox: [
            c0 as f64 * ps,
            r0 as f64 * ps,
            (c0 + span_c) as f64 * ps,
            (r0 + span_r) as f64 * ps,
        ],
    }
}

/// Synthesizes `count` annotation records cycling through the six tasks.
pub fn synth_annotations(
    count: usize,
    image_width: u32,
    image_height: u32,
    patch_size: u32,
    seed: u64,
) -> Vec<AnnotationWire> {
    let mut rng = Rng::new(seed);
    let rows = image_height.div_ceil(patch_size);
    let cols = image_width.div_ceil(patch_size);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let task = TaskKind::ALL[i % TaskKind::ALL.len()];
        let multi = matches!(
            task,
            TaskKind::Distance | TaskKind::LeftRight | TaskKind::FrontBehind
        );
        let n_objects = if multi {
            2 + rng.next_below(2) as usize
        } else {
            1 + rng.next_below(2) as usize
        };
        let mut objects = Vec::with_capacity(n_objects);
        let mut taken = Vec::new();
        for _ in 0..n_objects {
            let obj = synth_object(&mut rng, rows, cols, patch_size, &taken);
            taken.push(obj.description.clone());
            objects.push(obj);
        }
        let d1 = objects[0].description.clone();
        let d2 = objects.get(1).map(|o| o.description.clone()).unwrap_or_default();
        let (question, answer) = match task {
            TaskKind::Yaw => (
                format!("in frame f{i} which way is {d1} facing"),
                pick(&mut rng, YAW_ANSWERS).to_string(),
            ),
            TaskKind::Pixel => {
                let cx = (objects[0].bbox[0] + objects[0].bbox[2]) / 2.0;
                let cy = (objects[0].bbox[1] + objects[0].bbox[3]) / 2.0;
                (
                    format!("in frame f{i} where is {d1} located"),
                    format!("({cx}, {cy})"),
                )
            }
            TaskKind::Depth => (
                format!("in frame f{i} how far is {d1}"),
                pick(&mut rng, DEPTH_ANSWERS).to_string(),
            ),
            TaskKind::Distance => (
                format!("in frame f{i} which is closer, {d1} or {d2}"),
                if rng.next_below(2) == 0 { d1.clone() } else { d2.clone() },
            ),
            TaskKind::LeftRight => (
                format!("in frame f{i} is {d1} left or right of {d2}"),
                if rng.next_below(2) == 0 { "left" } else { "right" }.to_string(),
            ),
            TaskKind::FrontBehind => (
                format!("in frame f{i} is {d1} in front of or behind {d2}"),
                if rng.next_below(2) == 0 { "front" } else { "behind" }.to_string(),
            ),
        };
        let reasoning_trace = if multi {
            format!("ground {d1} and {d2}, compare their cells, the answer is {answer}")
        } else {
            format!("ground {d1} and read its cells, the answer is {answer}")
        };
        out.push(AnnotationWire {
            sample_id: format!("s{i:04}"),
            image_ref: format!("img-{i:04}"),
            image_width,
            image_height,
            objects: objects
                .into_iter()
                .enumerate()
                .map(|(j, o)| ObjectWire {
                    label: format!("obj{j}"),
                    description: o.description,
                    bbox: o.bbox,
                })
                .collect(),
            question,
            answer,
            reasoning_trace,
            task: task.as_str().to_string(),
        });
    }
    out
}

/// Ground truths matching [`synth_annotations`]: the literal answer for the
/// categorical tasks, the first object's box for pixel localization.
pub fn synth_ground_truths(annotations: &[AnnotationWire]) -> Vec<GroundTruthWire> {
    annotations
        .iter()
        .map(|a| {
            let pixel = a.task == TaskKind::Pixel.as_str();
            GroundTruthWire {
                sample_id: a.sample_id.clone(),
                task: a.task.clone(),
                answer: Some(a.answer.clone()),
                bbox: pixel.then(|| a.objects[0].bbox),
            }
        })
        .collect()
}

pub fn write_annotations(path: &Path, records: &[AnnotationWire]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn write_ground_truths(path: &Path, records: &[GroundTruthWire]) -> Result<()> {
    write_jsonl(path, records)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file =
        std::fs::File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut out = std::io::BufWriter::new(file);
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    out.flush()?;
    Ok(())
}

const FREE_WORDS: &[&str] = &[
    "the", "a", "red", "white", "car", "van", "sign", "left", "right", "near", "far", "refer",
    "to", "is", "sits", "beside", "lane", "behind", "ahead", "small", "señal", "7", "x9",
    "row-3", "it's", "probably", "then",
];

fn words(rng: &mut Rng, min: usize, max: usize) -> String {
    let n = min + rng.next_below((max - min + 1) as u64) as usize;
    (0..n)
        .map(|_| pick(rng, FREE_WORDS))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A structurally valid random sample with adversarial-ish text: commas,
/// `refer to` inside descriptions, newlines in the reasoning, non-ASCII.
pub fn random_valid_sample(rng: &mut Rng, index: usize) -> MMCoTSample {
    let n_objects = 1 + rng.next_below(3) as usize;
    let mut objects = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        let mut indices: Vec<u32> = Vec::new();
        let k = 1 + rng.next_below(7);
        let mut next = rng.next_below(40) as u32;
        for _ in 0..k {
            indices.push(next);
            next += 1 + rng.next_below(30) as u32;
        }
        let vrts = OrderedVrtSequence::from_ascending(indices).unwrap();
        objects.push(ObjectGrounding::new(words(rng, 1, 5), vrts).unwrap());
    }
    let mut think = words(rng, 1, 6);
    if rng.next_below(3) == 0 {
        think.push(',');
    }
    if rng.next_below(3) == 0 {
        think.push('\n');
        think.push_str(&words(rng, 1, 4));
    }
    let task = TaskKind::ALL[rng.next_below(6) as usize];
    MMCoTSample::new(
        format!("rs{index}"),
        format!("img-rs{index}"),
        words(rng, 2, 7),
        task,
        objects,
        think,
        words(rng, 1, 3),
    )
    .unwrap()
}
