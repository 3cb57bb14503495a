//! Corpus building and validation over JSON-lines files.
//!
//! Records are processed independently and may be spread over worker
//! threads, but output lines are re-sequenced by input index so corpora are
//! byte-reproducible regardless of the thread count.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use mmcot_core::corpus::{
    build_corpus, validate_sample_text, AnnotationRecord, BuildConfig, BuiltSample, CorpusStats,
};
use mmcot_core::geometry::PatchGrid;

use crate::schema::{AnnotationWire, CorpusHeaderWire, CorpusLineWire, CORPUS_FORMAT_VERSION};

/// Reads annotation lines; undecodable lines become `Err(detail)` items so
/// the core builder can count or abort on them. Blank lines are skipped.
pub fn read_annotation_items(path: &Path) -> Result<Vec<Result<AnnotationRecord, String>>> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut items = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str::<AnnotationWire>(&line)
            .map_err(|e| format!("line {}: {e}", lineno + 1))
            .and_then(|wire| {
                wire.into_record()
                    .map_err(|e| format!("line {}: {e}", lineno + 1))
            });
        items.push(item);
    }
    Ok(items)
}

pub fn write_corpus(path: &Path, patch_size: u32, samples: &[BuiltSample]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    let header = CorpusHeaderWire {
        format_version: CORPUS_FORMAT_VERSION.to_string(),
        patch_size,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for sample in samples {
        writeln!(out, "{}", serde_json::to_string(&CorpusLineWire::from_built(sample))?)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a corpus file: the header line, then one record per line.
pub fn read_corpus(path: &Path) -> Result<(CorpusHeaderWire, Vec<CorpusLineWire>)> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .context("corpus file is empty (missing header line)")??;
    let header: CorpusHeaderWire =
        serde_json::from_str(&header_line).context("corpus header line")?;
    if header.format_version != CORPUS_FORMAT_VERSION {
        bail!("unsupported corpus format version '{}'", header.format_version);
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusLineWire = serde_json::from_str(&line)
            .with_context(|| format!("corpus line {}", lineno + 2))?;
        records.push(record);
    }
    Ok((header, records))
}

/// Builds corpus items on up to `threads` workers by handing contiguous
/// chunks to the core builder, then re-joining in input order. One thread
/// falls through to the plain sequential path; outputs and stats are
/// identical either way.
pub fn build_items(
    items: Vec<Result<AnnotationRecord, String>>,
    config: &BuildConfig,
    threads: usize,
) -> Result<(Vec<BuiltSample>, CorpusStats)> {
    if threads <= 1 || items.len() < 2 {
        return build_corpus(items, config).map_err(|abort| anyhow::anyhow!("{abort}"));
    }

    let chunk_len = items.len().div_ceil(threads);
    let mut chunks: Vec<Vec<Result<AnnotationRecord, String>>> = Vec::new();
    let mut rest = items;
    while rest.len() > chunk_len {
        let tail = rest.split_off(chunk_len);
        chunks.push(rest);
        rest = tail;
    }
    chunks.push(rest);

    let cfg = *config;
    type ChunkResult = Result<(Vec<BuiltSample>, CorpusStats), mmcot_core::corpus::BuildAbort>;
    let outputs: Vec<(usize, ChunkResult)> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .enumerate()
                .map(|(c, chunk)| scope.spawn(move || (c * chunk_len, build_corpus(chunk, &cfg))))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("corpus worker panicked"))
                .collect()
        });

    // Strict mode: surface the abort with the smallest global index, exactly
    // what a sequential run would have hit first.
    if let Some((base, abort)) = outputs
        .iter()
        .filter_map(|(base, r)| r.as_ref().err().map(|a| (*base, a.clone())))
        .min_by_key(|(base, abort)| base + abort.index)
    {
        bail!("input record {} undecodable: {}", base + abort.index, abort.detail);
    }

    let mut samples = Vec::new();
    let mut stats = CorpusStats::default();
    for (_, result) in outputs {
        let (chunk_samples, chunk_stats) = result.expect("aborts handled above");
        samples.extend(chunk_samples);
        stats.merge(&chunk_stats);
    }
    Ok((samples, stats))
}

/// One validation finding, tied to a 1-based file line.
#[derive(Debug, Clone, PartialEq)]
pub struct FileDiagnostic {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for FileDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Validates every record of a corpus file against the grid: decode errors,
/// format violations, and out-of-range VRT indices. Always completes and
/// reports findings; it never throws on bad data.
pub fn validate_corpus_file(path: &Path, grid: &PatchGrid) -> Result<Vec<FileDiagnostic>> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut diagnostics = Vec::new();
    let mut saw_header = false;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            saw_header = true;
            // Headerless files are tolerated; on decode failure fall through
            // and treat the first line as a record.
            if let Ok(header) = serde_json::from_str::<CorpusHeaderWire>(&line) {
                if header.patch_size != grid.patch_size() {
                    diagnostics.push(FileDiagnostic {
                        line: lineno,
                        message: format!(
                            "header patch_size {} differs from the requested {}",
                            header.patch_size,
                            grid.patch_size()
                        ),
                    });
                }
                continue;
            }
        }
        let record: CorpusLineWire = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                diagnostics.push(FileDiagnostic {
                    line: lineno,
                    message: format!("undecodable record: {e}"),
                });
                continue;
            }
        };
        if let Err(e) = record.task_kind() {
            diagnostics.push(FileDiagnostic { line: lineno, message: e });
        }
        for d in validate_sample_text(&record.mmcot, grid) {
            // The core message already carries the byte offset and reason;
            // prefix the category only when it adds information.
            let message = if d.message.contains(d.kind.as_str()) {
                d.message
            } else {
                format!("{}: {}", d.kind.as_str(), d.message)
            };
            diagnostics.push(FileDiagnostic { line: lineno, message });
        }
    }
    Ok(diagnostics)
}
