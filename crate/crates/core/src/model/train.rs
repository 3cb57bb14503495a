//! Full-batch gradient descent with momentum for the memorization setting,
//! and a central-finite-difference check of the analytic gradients.

use alloc::vec::Vec;

use super::loss::loss_with_grad;
use super::{LossBreakdown, ModelError, PatchFeatures, Tensors, ToyModel};
use crate::num;
use crate::rng::Rng;
use crate::vocab::EncodedSample;

/// Optimizer settings. `momentum = 0` is plain gradient descent;
/// `stop_below` ends training early once the batch loss falls under it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub stop_below: Option<f64>,
}

impl TrainParams {
    fn validate(&self) -> Result<(), ModelError> {
        if self.steps == 0 {
            return Err(ModelError::InvalidConfig("steps must be >= 1".into()));
        }
        let ok = self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && self.momentum.is_finite()
            && (0.0..1.0).contains(&self.momentum);
        if !ok {
            return Err(ModelError::InvalidConfig(
                "learning rate must be >= 0 and momentum in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Batch gradient of the total loss, averaged over samples, plus the
/// averaged per-objective losses.
fn batch_grad(
    model: &ToyModel,
    batch: &[(EncodedSample, PatchFeatures)],
    grads: &mut Tensors,
) -> Result<LossBreakdown, ModelError> {
    let inv_b = 1.0 / batch.len() as f64;
    let mut text = 0.0;
    let mut vrt = 0.0;
    let mut total = 0.0;
    for (encoded, features) in batch {
        let cache = model.forward_cached(&encoded.token_ids, features)?;
        let (loss, mut d_logits) = loss_with_grad(&cache.logits, encoded, &model.config, true)?;
        for g in d_logits.iter_mut() {
            *g *= inv_b;
        }
        model.backward(&cache, &d_logits, grads, features);
        text += loss.text * inv_b;
        vrt += loss.vrt * inv_b;
        total += loss.total * inv_b;
    }
    Ok(LossBreakdown { text, vrt, total })
}

/// Trains the model to memorize `batch`, recording the batch losses at the
/// parameters of each step (before that step's update). Deterministic given
/// the model and inputs; aborts with a divergence error on non-finite loss.
pub fn train_overfit(
    model: &mut ToyModel,
    batch: &[(EncodedSample, PatchFeatures)],
    params: &TrainParams,
) -> Result<Vec<LossBreakdown>, ModelError> {
    params.validate()?;
    if batch.is_empty() {
        return Err(ModelError::InvalidConfig("empty training batch".into()));
    }
    let mut momentum = Tensors::zeros(&model.config);
    let mut trajectory = Vec::with_capacity(params.steps);
    for step in 0..params.steps {
        let mut grads = Tensors::zeros(&model.config);
        let loss = batch_grad(model, batch, &mut grads)?;
        if !loss.is_finite() || !model.params.is_finite() {
            return Err(ModelError::Divergence { step });
        }
        trajectory.push(loss);
        if params.stop_below.is_some_and(|bound| loss.total < bound) {
            break;
        }
        for ((m, g), p) in momentum
            .groups_mut()
            .into_iter()
            .zip(grads.groups())
            .zip(model.params.groups_mut())
        {
            for i in 0..p.len() {
                m[i] = params.momentum * m[i] + g[i];
                p[i] -= params.learning_rate * m[i];
            }
        }
    }
    Ok(trajectory)
}

/// Relative error with an absolute floor: coordinates whose gradients are
/// tiny on the scale of the loss are compared at absolute tolerance
/// `1e-5 * REL_FLOOR` instead of amplifying finite-difference roundoff.
const REL_FLOOR: f64 = 1e-3;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    num::abs(analytic - numeric) / (num::abs(analytic) + num::abs(numeric)).max(REL_FLOOR)
}

/// Central finite differences against the analytic gradient of the total
/// loss, over a seeded subsample of at least 200 coordinates touching every
/// parameter group. Returns the maximum relative error observed.
pub fn grad_check(
    model: &ToyModel,
    encoded: &EncodedSample,
    features: &PatchFeatures,
    epsilon: f64,
) -> Result<f64, ModelError> {
    if !epsilon.is_finite() || !(1e-7..=1e-4).contains(&epsilon) {
        return Err(ModelError::InvalidEpsilon { epsilon });
    }

    let mut grads = Tensors::zeros(&model.config);
    {
        let cache = model.forward_cached(&encoded.token_ids, features)?;
        let (_, d_logits) = loss_with_grad(&cache.logits, encoded, &model.config, true)?;
        model.backward(&cache, &d_logits, &mut grads, features);
    }

    let sizes: Vec<usize> = model.params.groups().iter().map(|g| g.len()).collect();
    let total: usize = sizes.iter().sum();
    const TARGET: usize = 200;
    let mut per_group: Vec<usize> = sizes
        .iter()
        .map(|s| ((TARGET * s) / total).max(2).min(*s))
        .collect();
    let mut planned: usize = per_group.iter().sum();
    let mut round = 0;
    while planned < TARGET {
        let g = round % per_group.len();
        if per_group[g] < sizes[g] {
            per_group[g] += 1;
            planned += 1;
        }
        round += 1;
        if round > 16 * per_group.len() {
            break;
        }
    }

    let mut rng = Rng::new(model.config.seed ^ 0x5eed_c0de_u64);
    let mut probe = model.clone();
    let mut max_rel = 0.0f64;
    for (g, want) in per_group.iter().enumerate() {
        let mut chosen: Vec<usize> = Vec::with_capacity(*want);
        while chosen.len() < *want {
            let i = rng.next_below(sizes[g] as u64) as usize;
            if !chosen.contains(&i) {
                chosen.push(i);
            }
        }
        for i in chosen {
            let original = probe.params.groups()[g][i];
            probe.params.groups_mut()[g][i] = original + epsilon;
            let plus = probe_loss(&probe, encoded, features)?;
            probe.params.groups_mut()[g][i] = original - epsilon;
            let minus = probe_loss(&probe, encoded, features)?;
            probe.params.groups_mut()[g][i] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let analytic = grads.groups()[g][i];
            max_rel = max_rel.max(relative_error(analytic, numeric));
        }
    }
    Ok(max_rel)
}

fn probe_loss(
    model: &ToyModel,
    encoded: &EncodedSample,
    features: &PatchFeatures,
) -> Result<f64, ModelError> {
    let logits = model.forward(&encoded.token_ids, features)?;
    let (loss, _) = loss_with_grad(&logits, encoded, &model.config, false)?;
    Ok(loss.total)
}
