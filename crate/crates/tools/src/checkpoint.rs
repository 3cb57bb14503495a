//! Model checkpoints (JSON: version + config + named parameter groups) and
//! training-trajectory files (JSON lines). Parameter values round-trip
//! exactly: the JSON layer prints shortest-round-trip floats.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use mmcot_core::model::{LossBreakdown, ToyModel};

use crate::schema::{CheckpointWire, ModelConfigWire, TrajectoryLineWire, CHECKPOINT_FORMAT_VERSION};

pub fn save_model(path: &Path, model: &ToyModel) -> Result<()> {
    let wire = CheckpointWire {
        format_version: CHECKPOINT_FORMAT_VERSION.to_string(),
        config: ModelConfigWire::from(model.config()),
        params: model
            .param_groups()
            .into_iter()
            .map(|(name, values)| (name, values.to_vec()))
            .collect(),
    };
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer(&mut out, &wire)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ToyModel> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let wire: CheckpointWire = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("decode checkpoint {}", path.display()))?;
    if wire.format_version != CHECKPOINT_FORMAT_VERSION {
        bail!("unsupported checkpoint format version '{}'", wire.format_version);
    }
    let params = wire.params;
    ToyModel::from_param_groups(wire.config.into(), |name| params.get(name).cloned())
        .map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn write_trajectory(path: &Path, trajectory: &[LossBreakdown]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for (step, loss) in trajectory.iter().enumerate() {
        let line = TrajectoryLineWire {
            step,
            text_loss: loss.text,
            vrt_loss: loss.vrt,
            total_loss: loss.total,
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryLineWire>> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmcot_core::model::{ModelConfig, ToyModel};

    #[test]
    fn checkpoint_round_trips_exactly() {
        let model = ToyModel::init(ModelConfig {
            embed_dim: 16,
            layers: 1,
            heads: 4,
            max_seq_len: 16,
            base_vocab_size: 12,
            vrt_capacity: 4,
            feature_dim: 4,
            seed: 9,
            text_loss_weight: 1.0,
            vrt_loss_weight: 0.75,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);

        // Identical models serialize to identical bytes.
        let path2 = dir.path().join("model2.json");
        save_model(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
