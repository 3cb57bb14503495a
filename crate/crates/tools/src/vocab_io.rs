//! Vocabulary persistence: a versioned text file, one token per line, id =
//! token line index. The newline special (and any backslash) is escaped so
//! every token stays on one line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use mmcot_core::Vocabulary;

const HEADER_PREFIX: &str = "#mmcot-vocab 1 vrt_capacity=";

fn escape(token: &str) -> String {
    token
        .replace('\\', "\\\\")
        .replace('\n', "\\n")
        .replace('\r', "\\r")
}

fn unescape(line: &str) -> Result<String> {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => bail!("bad escape '\\{}' in vocabulary file", other.unwrap_or(' ')),
        }
    }
    Ok(out)
}

pub fn save_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{HEADER_PREFIX}{}", vocab.vrt_capacity())?;
    for token in vocab.base_tokens() {
        writeln!(out, "{}", escape(token))?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().context("empty vocabulary file")??;
    let capacity: u32 = header
        .strip_prefix(HEADER_PREFIX)
        .with_context(|| format!("bad vocabulary header '{header}'"))?
        .parse()
        .context("vocabulary header capacity")?;
    let mut tokens = Vec::new();
    for line in lines {
        tokens.push(unescape(&line?)?);
    }
    Vocabulary::from_parts(tokens, capacity).map_err(|e| anyhow::anyhow!("{e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmcot_core::geometry::PatchGrid;

    #[test]
    fn vocab_round_trips_through_disk() {
        let grid = PatchGrid::new(224, 224, 28).unwrap();
        let vocab = Vocabulary::build(
            ["the red car, parked\nnear the sign", "a question"],
            &grid,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        save_vocab(&path, &vocab).unwrap();
        let loaded = load_vocab(&path).unwrap();
        assert_eq!(loaded, vocab);
    }
}
