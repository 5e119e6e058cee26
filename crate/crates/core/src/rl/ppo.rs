use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::SizingContext;
use super::TrainConfig;
use crate::circuit::ParamVector;
use crate::error::{Error, Result};
use crate::nn::dist::{log_prob_entropy, log_prob_entropy_grad};
use crate::nn::{clip_grad_norm, ActorCritic, Adam, Tensor};

/// One collected step, ready for the update.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    pub params: ParamVector,
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub actor_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    /// Fraction of samples whose ratio fell outside the clip range.
    pub clip_fraction: f64,
    /// Largest `|ratio - 1|`.
    pub max_ratio_delta: f64,
}

/// Clipped-surrogate loss of `samples` and its gradient with respect to every
/// policy tensor, in [`ActorCritic::tensors_mut`] order.
pub fn ppo_loss(
    policy: &ActorCritic,
    ctx: &SizingContext,
    samples: &[&PpoSample],
    cfg: &TrainConfig,
) -> Result<(PpoStats, Vec<Tensor>)> {
    if samples.is_empty() {
        return Err(Error::Update("empty minibatch".into()));
    }
    let refs: Vec<(&ParamVector, &[f64])> = samples.iter().map(|s| (&s.params, s.obs.as_slice())).collect();
    let input = ctx.inputs.build(ctx.benchmark(), &refs)?;
    policy.check_input(&input)?;
    let b = samples.len() as f64;
    let (lo, hi) = (1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let mut stats = PpoStats::default();

    let (_, mut grads) = policy.actor.value_and_grad(&input, |logits| {
        let mut seed = Tensor::zeros(logits.rows(), logits.cols());
        for (k, s) in samples.iter().enumerate() {
            let row = logits.row(k);
            let (lp, ent) = log_prob_entropy(row, &s.actions);
            let ratio = (lp - s.old_log_prob).exp();
            let clipped = ratio.clamp(lo, hi);
            let unclipped_term = ratio * s.advantage;
            let clipped_term = clipped * s.advantage;
            stats.actor_loss -= unclipped_term.min(clipped_term) / b;
            stats.entropy += ent / b;
            stats.max_ratio_delta = stats.max_ratio_delta.max((ratio - 1.0).abs());
            if ratio < lo || ratio > hi {
                stats.clip_fraction += 1.0 / b;
            }
            // d ratio / d log_prob = ratio; zero where the clipped term is the minimum
            let c_lp = if unclipped_term <= clipped_term { -unclipped_term / b } else { 0.0 };
            log_prob_entropy_grad(row, &s.actions, c_lp, -cfg.entropy_coef / b, seed.row_mut(k));
        }
        seed
    });
    let (_, critic_grads) = policy.critic.value_and_grad(&input, |values| {
        let mut seed = Tensor::zeros(values.rows(), 1);
        for (k, s) in samples.iter().enumerate() {
            let err = values.get(k, 0) - s.ret;
            stats.value_loss += err * err / b;
            seed.set(k, 0, cfg.value_coef * 2.0 * err / b);
        }
        seed
    });
    grads.extend(critic_grads);
    stats.total_loss = stats.actor_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    if !stats.total_loss.is_finite() || !grads.iter().all(Tensor::is_finite) {
        return Err(Error::Update(format!(
            "non-finite loss: actor {}, value {}, entropy {}",
            stats.actor_loss, stats.value_loss, stats.entropy
        )));
    }
    Ok((stats, grads))
}

/// `cfg.epochs` passes over shuffled minibatches with one Adam step each.
/// Returns statistics averaged over every minibatch.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut ActorCritic,
    adam: &mut Adam,
    ctx: &SizingContext,
    samples: &[PpoSample],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    if samples.is_empty() {
        return Err(Error::Update("empty batch".into()));
    }
    let actor_tensors = policy.actor.named_tensors().len();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut mean = PpoStats::default();
    let mut count = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let batch: Vec<&PpoSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (stats, mut grads) = ppo_loss(policy, ctx, &batch, cfg)?;
            // Actor and critic share no weights; each is clipped on its own.
            let (actor, critic) = grads.split_at_mut(actor_tensors);
            clip_grad_norm(actor, cfg.max_grad_norm);
            clip_grad_norm(critic, cfg.max_grad_norm);
            adam.step(policy.tensors_mut(), &grads);
            mean.actor_loss += stats.actor_loss;
            mean.value_loss += stats.value_loss;
            mean.entropy += stats.entropy;
            mean.total_loss += stats.total_loss;
            mean.clip_fraction += stats.clip_fraction;
            mean.max_ratio_delta = mean.max_ratio_delta.max(stats.max_ratio_delta);
            count += 1.0;
        }
    }
    mean.actor_loss /= count;
    mean.value_loss /= count;
    mean.entropy /= count;
    mean.total_loss /= count;
    mean.clip_fraction /= count;
    Ok(mean)
}
