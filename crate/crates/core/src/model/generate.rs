//! Greedy decoding, with an optional structural mode that forces the
//! grounding/think/answer tag skeleton so evaluation always receives
//! well-tagged output.

use alloc::vec::Vec;

use super::{ModelError, PatchFeatures, ToyModel};
use crate::vocab::SpecialIds;

/// Decoding mode. Both are deterministic; ties break toward the lowest id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    /// Unconstrained argmax until the end marker or the budget runs out.
    Greedy { eos_id: u32 },
    /// Argmax restricted to tokens legal for the current region, with the
    /// six tags (and the final end marker) forced in skeleton order.
    Constrained { specials: SpecialIds, base_size: u32 },
}

/// Region progression for constrained decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    AwaitLocOpen,
    InLoc,
    AwaitThinkOpen,
    InThink,
    AwaitAnswerOpen,
    InAnswer,
    Done,
}

impl Region {
    /// Tokens still required to complete the skeleton from this region.
    fn skeleton_left(&self) -> usize {
        match self {
            Region::AwaitLocOpen => 7, // <loc> </loc> <think> </think> <answer> </answer> <eos>
            Region::InLoc => 6,
            Region::AwaitThinkOpen => 5,
            Region::InThink => 4,
            Region::AwaitAnswerOpen => 3,
            Region::InAnswer => 2,
            Region::Done => 1,
        }
    }

    fn forced_token(&self, s: &SpecialIds) -> u32 {
        match self {
            Region::AwaitLocOpen => s.loc_open,
            Region::InLoc => s.loc_close,
            Region::AwaitThinkOpen => s.think_open,
            Region::InThink => s.think_close,
            Region::AwaitAnswerOpen => s.answer_open,
            Region::InAnswer => s.answer_close,
            Region::Done => s.eos,
        }
    }
}

/// Greedy decoding from a prompt. Appends at most `max_new` tokens and stops
/// after emitting the end marker. The prompt must leave room for the budget.
pub fn generate(
    model: &ToyModel,
    prompt: &[u32],
    features: &PatchFeatures,
    max_new: usize,
    mode: &GenMode,
) -> Result<Vec<u32>, ModelError> {
    if prompt.len() + max_new > model.config.max_seq_len {
        return Err(ModelError::SequenceTooLong {
            len: prompt.len() + max_new,
            max: model.config.max_seq_len,
        });
    }
    let mut ids = prompt.to_vec();
    if max_new == 0 {
        return Ok(ids);
    }

    let mut region = Region::AwaitLocOpen;
    for step in 0..max_new {
        let logits = model.forward(&ids, features)?;
        let row = logits.row(ids.len() - 1);
        let next = match mode {
            GenMode::Greedy { .. } => argmax(row, |_| true),
            GenMode::Constrained { specials, base_size } => {
                let remaining = max_new - step;
                if remaining <= region.skeleton_left() {
                    region.forced_token(specials)
                } else {
                    argmax(row, |id| allowed(id, region, specials, *base_size))
                }
            }
        };
        ids.push(next);
        if let GenMode::Constrained { specials, .. } = mode {
            region = advance(region, next, specials);
        }
        let eos = match mode {
            GenMode::Greedy { eos_id } => *eos_id,
            GenMode::Constrained { specials, .. } => specials.eos,
        };
        if next == eos {
            break;
        }
    }
    Ok(ids)
}

fn argmax<F: Fn(u32) -> bool>(row: &[f64], allow: F) -> u32 {
    let mut best = u32::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for (id, score) in row.iter().enumerate() {
        let id = id as u32;
        if allow(id) && *score > best_score {
            best = id;
            best_score = *score;
        }
    }
    best
}

/// Whether a token is legal inside the current region. Plain words stay
/// legal everywhere; structural tags only advance the skeleton in order;
/// VRT ids are confined to the grounding block.
fn allowed(id: u32, region: Region, s: &SpecialIds, base_size: u32) -> bool {
    if id == s.bos {
        return false;
    }
    let is_vrt = id >= base_size;
    let is_tag = [
        s.loc_open,
        s.loc_close,
        s.think_open,
        s.think_close,
        s.answer_open,
        s.answer_close,
    ]
    .contains(&id);
    match region {
        Region::AwaitLocOpen => id == s.loc_open,
        Region::AwaitThinkOpen => id == s.think_open,
        Region::AwaitAnswerOpen => id == s.answer_open,
        Region::InLoc => {
            if is_tag {
                id == s.loc_close
            } else {
                id != s.eos
            }
        }
        Region::InThink => {
            if is_tag {
                id == s.think_close
            } else {
                id != s.eos && !is_vrt
            }
        }
        Region::InAnswer => {
            if is_tag {
                id == s.answer_close
            } else {
                id != s.eos && !is_vrt
            }
        }
        Region::Done => id == s.eos,
    }
}

fn advance(region: Region, id: u32, s: &SpecialIds) -> Region {
    match region {
        Region::AwaitLocOpen if id == s.loc_open => Region::InLoc,
        Region::InLoc if id == s.loc_close => Region::AwaitThinkOpen,
        Region::AwaitThinkOpen if id == s.think_open => Region::InThink,
        Region::InThink if id == s.think_close => Region::AwaitAnswerOpen,
        Region::AwaitAnswerOpen if id == s.answer_open => Region::InAnswer,
        Region::InAnswer if id == s.answer_close => Region::Done,
        other => other,
    }
}

impl ToyModel {
    /// Method form of [`generate`].
    pub fn generate(
        &self,
        prompt: &[u32],
        features: &PatchFeatures,
        max_new: usize,
        mode: &GenMode,
    ) -> Result<Vec<u32>, ModelError> {
        generate(self, prompt, features, max_new, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::vocab::SPECIAL_IDS;

    fn model() -> ToyModel {
        ToyModel::init(ModelConfig {
            embed_dim: 16,
            layers: 1,
            heads: 4,
            max_seq_len: 40,
            base_vocab_size: 15,
            vrt_capacity: 6,
            feature_dim: 5,
            seed: 11,
            text_loss_weight: 1.0,
            vrt_loss_weight: 1.0,
        })
        .unwrap()
    }

    fn feats() -> PatchFeatures {
        PatchFeatures::synthetic("img", 11, 6, 5)
    }

    #[test]
    fn zero_budget_returns_prompt() {
        let m = model();
        let out = m
            .generate(&[0, 12], &feats(), 0, &GenMode::Greedy { eos_id: 1 })
            .unwrap();
        assert_eq!(out, vec![0, 12]);
    }

    #[test]
    fn greedy_is_deterministic() {
        let m = model();
        let a = m
            .generate(&[0, 12], &feats(), 10, &GenMode::Greedy { eos_id: 1 })
            .unwrap();
        let b = m
            .generate(&[0, 12], &feats(), 10, &GenMode::Greedy { eos_id: 1 })
            .unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 12);
    }

    #[test]
    fn budget_overflow_is_rejected() {
        let m = model();
        assert!(matches!(
            m.generate(&[0; 35], &feats(), 10, &GenMode::Greedy { eos_id: 1 }),
            Err(ModelError::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn constrained_mode_always_emits_the_full_skeleton() {
        let m = model();
        let mode = GenMode::Constrained {
            specials: SPECIAL_IDS,
            base_size: 15,
        };
        let out = m.generate(&[0, 12, 13], &feats(), 20, &mode).unwrap();
        let gen = &out[3..];
        let s = SPECIAL_IDS;
        let order: Vec<u32> = gen
            .iter()
            .copied()
            .filter(|id| {
                [
                    s.loc_open,
                    s.loc_close,
                    s.think_open,
                    s.think_close,
                    s.answer_open,
                    s.answer_close,
                    s.eos,
                ]
                .contains(id)
            })
            .collect();
        assert_eq!(
            order,
            vec![
                s.loc_open,
                s.loc_close,
                s.think_open,
                s.think_close,
                s.answer_open,
                s.answer_close,
                s.eos
            ]
        );
        assert_eq!(gen[0], s.loc_open);
        assert_eq!(*gen.last().unwrap(), s.eos);
        // VRT ids may only appear between <loc> and </loc>.
        let close_pos = gen.iter().position(|id| *id == s.loc_close).unwrap();
        for (i, id) in gen.iter().enumerate() {
            if *id >= 15 {
                assert!(i < close_pos, "VRT id outside the grounding block");
            }
        }
    }
}
