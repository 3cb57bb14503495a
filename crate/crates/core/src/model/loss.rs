//! The two training objectives and their combination: mean negative
//! log-likelihood over text-masked target positions, mean NLL over
//! VRT-masked target positions (whose targets follow the deterministic
//! ascending order), and the weighted sum.

use alloc::vec;
use alloc::vec::Vec;

use super::{Logits, ModelConfig, ModelError};
use crate::num;
use crate::vocab::EncodedSample;

/// Per-objective losses for one sample or batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub text: f64,
    pub vrt: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.text.is_finite() && self.vrt.is_finite() && self.total.is_finite()
    }
}

fn check_shapes(logits: &Logits, encoded: &EncodedSample) -> Result<(), ModelError> {
    let n = encoded.token_ids.len();
    let masks_fit = encoded.text_loss_mask.len() == n
        && encoded.vrt_loss_mask.len() == n
        && logits.seq_len == n;
    if !masks_fit {
        return Err(ModelError::MaskShape);
    }
    // Position 0 has no predictor; the masks must stay disjoint.
    if encoded.text_loss_mask[0] || encoded.vrt_loss_mask[0] {
        return Err(ModelError::MaskShape);
    }
    for p in 0..n {
        if encoded.text_loss_mask[p] && encoded.vrt_loss_mask[p] {
            return Err(ModelError::MaskShape);
        }
    }
    Ok(())
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|v| num::exp(v - max)).sum();
    max + num::ln(sum)
}

/// Computes `(L_text, L_vrt, L_total)`. A position `p` marked in a mask is a
/// target predicted from the logits at `p - 1`; normalization spans the full
/// vocabulary. An empty text mask is an error (every sample supervises an
/// answer); an empty VRT mask means `L_vrt = 0` (plain-CoT samples).
pub fn compute_loss(
    logits: &Logits,
    encoded: &EncodedSample,
    config: &ModelConfig,
) -> Result<LossBreakdown, ModelError> {
    let (breakdown, _) = loss_with_grad(logits, encoded, config, false)?;
    Ok(breakdown)
}

/// Loss plus (optionally) the gradient of `L_total` with respect to the
/// logits, in the same `[T, vocab]` layout.
pub(crate) fn loss_with_grad(
    logits: &Logits,
    encoded: &EncodedSample,
    config: &ModelConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Vec<f64>), ModelError> {
    check_shapes(logits, encoded)?;
    let n = encoded.token_ids.len();
    let vocab = logits.vocab;

    let text_count = encoded.text_loss_mask.iter().filter(|b| **b).count();
    let vrt_count = encoded.vrt_loss_mask.iter().filter(|b| **b).count();
    if text_count == 0 {
        return Err(ModelError::EmptyTextMask);
    }

    let mut text_sum = 0.0;
    let mut vrt_sum = 0.0;
    let mut d_logits = if want_grad {
        vec![0.0; logits.data.len()]
    } else {
        Vec::new()
    };

    for p in 1..n {
        let is_text = encoded.text_loss_mask[p];
        let is_vrt = encoded.vrt_loss_mask[p];
        if !is_text && !is_vrt {
            continue;
        }
        let row = logits.row(p - 1);
        let target = encoded.token_ids[p] as usize;
        let lse = log_sum_exp(row);
        let nll = lse - row[target];
        let weight_over_count = if is_text {
            text_sum += nll;
            config.text_loss_weight / text_count as f64
        } else {
            vrt_sum += nll;
            config.vrt_loss_weight / vrt_count as f64
        };
        if want_grad && weight_over_count != 0.0 {
            let out = &mut d_logits[(p - 1) * vocab..p * vocab];
            for (slot, z) in out.iter_mut().zip(row) {
                *slot += weight_over_count * num::exp(z - lse);
            }
            out[target] -= weight_over_count;
        }
    }

    let text = text_sum / text_count as f64;
    let vrt = if vrt_count == 0 {
        0.0
    } else {
        vrt_sum / vrt_count as f64
    };
    let total = config.text_loss_weight * text + config.vrt_loss_weight * vrt;
    Ok((LossBreakdown { text, vrt, total }, d_logits))
}
