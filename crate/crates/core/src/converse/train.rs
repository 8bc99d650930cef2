//! Per-turn losses, batch gradients with in-batch semantic negatives, and the
//! imitation / generation training loops.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::input::ConverseInput;
use super::model::{ConverseModel, Mode};
use crate::error::{DicrError, Result};
use crate::nn::{Adam, Gradients, Tape, Var};

/// Which losses a training stage minimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Bag-of-words relevancy plus the semantic discriminator loss.
    Imitation,
    /// KL + BOW + BCE + NLL.
    Generation,
}

/// Tape handles of one turn's losses.
#[derive(Debug, Clone, Copy)]
pub struct TurnLosses {
    pub kl: Option<Var>,
    pub bow: Var,
    pub nll: Option<Var>,
    /// `o_S,P` and `o_U` for the batch-level discriminator loss.
    pub aggregate: Var,
    pub statement: Option<Var>,
    /// Sum of the per-turn terms.
    pub local: Var,
}

pub fn turn_losses(
    model: &ConverseModel,
    t: &mut Tape,
    input: &ConverseInput,
    objective: Objective,
) -> Result<TurnLosses> {
    if input.paths.is_empty() {
        return Err(DicrError::config("training turn has no candidate paths"));
    }
    let enc = model.encode_turn(t, input, Mode::Train)?;
    let o_c = enc.context.summary;
    let paths: Vec<Var> = enc.paths.iter().map(|p| p.summary).collect();
    let w = model.path_weights(t, o_c, enc.response, &paths)?;
    let post = w.posterior.expect("training mode has a posterior");
    let bow = model.bow_loss(t, post, &paths, &input.response);
    let aggregate = model.semantic_aggregate(t, o_c, &paths)?;
    match objective {
        Objective::Imitation => Ok(TurnLosses {
            kl: None,
            bow,
            nll: None,
            aggregate,
            statement: enc.statement,
            local: bow,
        }),
        Objective::Generation => {
            let kl = model.kl_loss(t, &w)?;
            let o_s = enc.statement.unwrap_or(aggregate);
            let h0 = model.merge_state(t, o_s, o_c);
            let dc = model.decode_context(t, &enc, input, Some(post));
            let nll = model.nll_loss(t, &dc, h0, &input.target)?;
            let local = t.sum_scalars(&[kl, bow, nll]);
            Ok(TurnLosses {
                kl: Some(kl),
                bow,
                nll: Some(nll),
                aggregate,
                statement: enc.statement,
                local,
            })
        }
    }
}

/// `−(1/(|P|+|N|)) (Σ_P log I(x, y) + Σ_N log(1 − I(x̃, y)))`.
pub fn mim_loss(
    model: &ConverseModel,
    t: &mut Tape,
    positives: &[(Var, Var)],
    negatives: &[(Var, Var)],
) -> Result<Var> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(DicrError::Precondition(
            "semantic discriminator loss needs a positive and a negative pair".into(),
        ));
    }
    let mut terms = Vec::with_capacity(positives.len() + negatives.len());
    for &(x, y) in positives {
        let s = model.mim_score(t, x, y)?;
        terms.push(t.log(s));
    }
    for &(x, y) in negatives {
        let s = model.mim_score(t, x, y)?;
        let s = t.one_minus(s);
        terms.push(t.log(s));
    }
    let n = terms.len() as f64;
    let s = t.sum_scalars(&terms);
    Ok(t.scale(s, -1.0 / n))
}

/// Negative partner for each position: a random derangement, so no turn is
/// paired with its own aggregation.
pub fn negative_pairing<R: rand::Rng>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(DicrError::Precondition(
            "negative sampling needs at least two turns in the batch".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut partner = vec![0; n];
    for k in 0..n {
        partner[order[k]] = order[(k + 1) % n];
    }
    Ok(partner)
}

/// Batch-mean loss components; `total` is their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub kl: f64,
    pub bow: f64,
    pub bce: f64,
    pub nll: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn add_scaled(&mut self, o: &LossBreakdown, k: f64) {
        self.kl += k * o.kl;
        self.bow += k * o.bow;
        self.bce += k * o.bce;
        self.nll += k * o.nll;
        self.total += k * o.total;
    }
}

/// Gradients of `mean(local terms) + BCE` over a batch.
///
/// Turns are taped independently (in parallel); the discriminator loss runs
/// on a separate tape over copies of their aggregation and statement vectors,
/// and the gradients it sends to those copies are seeded back into each turn.
pub fn batch_gradients(
    model: &ConverseModel,
    batch: &[&ConverseInput],
    objective: Objective,
    partner: &[usize],
) -> Result<(Gradients, LossBreakdown)> {
    if batch.is_empty() {
        return Err(DicrError::Precondition("empty batch".into()));
    }
    let b = batch.len() as f64;
    let store = &model.store;
    let tapes: Vec<(Tape, TurnLosses)> = batch
        .par_iter()
        .map(|input| {
            let mut t = Tape::new(store);
            let l = turn_losses(model, &mut t, input, objective)?;
            Ok((t, l))
        })
        .collect::<Result<_>>()?;

    let mut out = LossBreakdown::default();
    for (t, l) in &tapes {
        out.kl += l.kl.map_or(0.0, |v| t.scalar(v)) / b;
        out.bow += t.scalar(l.bow) / b;
        out.nll += l.nll.map_or(0.0, |v| t.scalar(v)) / b;
    }

    // Turns with a statement take part in the discriminator loss.
    let with_u: Vec<usize> = (0..tapes.len())
        .filter(|&i| tapes[i].1.statement.is_some())
        .collect();
    let mut seeds_back: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; tapes.len()];
    let mut grads = Gradients::zeros_like(store);
    if with_u.len() >= 2 {
        let mut bt = Tape::new(store);
        let mut xs = Vec::with_capacity(tapes.len());
        let mut ys = Vec::with_capacity(tapes.len());
        for (t, l) in &tapes {
            xs.push(bt.input(t.value(l.aggregate).to_vec()));
            ys.push(l.statement.map(|u| bt.input(t.value(u).to_vec())));
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for &i in &with_u {
            let y = ys[i].expect("filtered on statement");
            pos.push((xs[i], y));
            let mut j = partner[i];
            // Partners without a statement still provide an aggregation.
            if j == i {
                j = (i + 1) % tapes.len();
            }
            neg.push((xs[j], y));
        }
        let loss = mim_loss(model, &mut bt, &pos, &neg)?;
        out.bce = bt.scalar(loss);
        let inputs: Vec<Var> = xs
            .iter()
            .copied()
            .chain(ys.iter().flatten().copied())
            .collect();
        let (g, input_grads) = bt.backward_with_inputs(&[(loss, vec![1.0])], &inputs);
        grads.accumulate(&g);
        let n = tapes.len();
        let mut k = n;
        for (i, y) in ys.iter().enumerate() {
            let gy = if y.is_some() {
                k += 1;
                input_grads[k - 1].clone()
            } else {
                Vec::new()
            };
            seeds_back[i] = Some((input_grads[i].clone(), gy));
        }
    }

    let per_turn: Vec<Gradients> = tapes
        .par_iter()
        .zip(seeds_back.par_iter())
        .map(|((t, l), extra)| {
            let mut seeds = vec![(l.local, vec![1.0 / b])];
            if let Some((gx, gy)) = extra {
                seeds.push((l.aggregate, gx.clone()));
                if let Some(u) = l.statement {
                    seeds.push((u, gy.clone()));
                }
            }
            t.backward_seeded(&seeds)
        })
        .collect();
    for g in &per_turn {
        grads.accumulate(g);
    }
    out.total = out.kl + out.bow + out.bce + out.nll;
    Ok((grads, out))
}

/// Optimisation settings for the conversation stages.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverseTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for ConverseTrainConfig {
    fn default() -> Self {
        ConverseTrainConfig {
            epochs: 10,
            batch_size: 32,
            lr: 1e-4,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// Shuffled batches; a trailing single turn joins the previous batch so every
/// batch can draw an in-batch negative.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut batches: Vec<Vec<usize>> = order
        .chunks(batch_size.max(2))
        .map(<[usize]>::to_vec)
        .collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    batches
}

/// One epoch over `inputs`; returns the turn-weighted mean components.
pub fn train_epoch(
    model: &mut ConverseModel,
    opt: &mut Adam,
    inputs: &[ConverseInput],
    objective: Objective,
    cfg: &ConverseTrainConfig,
    epoch: usize,
) -> Result<LossBreakdown> {
    if inputs.is_empty() {
        return Err(DicrError::config("no conversation turns to train on"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    rng.set_stream(epoch as u64);
    let mut mean = LossBreakdown::default();
    for idx in make_batches(inputs.len(), cfg.batch_size, cfg.seed, epoch) {
        let batch: Vec<&ConverseInput> = idx.iter().map(|&i| &inputs[i]).collect();
        let partner = if batch.len() >= 2 {
            negative_pairing(batch.len(), &mut rng)?
        } else {
            vec![0]
        };
        let (grads, parts) = batch_gradients(model, &batch, objective, &partner)?;
        if !grads.all_finite() {
            return Err(DicrError::Numeric(
                "non-finite conversation gradient".into(),
            ));
        }
        opt.step(&mut model.store, &grads);
        mean.add_scaled(&parts, batch.len() as f64 / inputs.len() as f64);
    }
    Ok(mean)
}

/// Trains for `cfg.epochs`, calling `on_epoch` after each epoch.
pub fn train_converse<F>(
    model: &mut ConverseModel,
    inputs: &[ConverseInput],
    objective: Objective,
    cfg: &ConverseTrainConfig,
    mut on_epoch: F,
) -> Result<Vec<LossBreakdown>>
where
    F: FnMut(usize, &LossBreakdown, &ConverseModel) -> Result<()>,
{
    let mut opt = Adam::new(&model.store, cfg.lr).with_clip(cfg.clip_norm);
    let mut out = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let parts = train_epoch(model, &mut opt, inputs, objective, cfg, epoch)?;
        log::info!(
            "{objective:?} epoch {epoch}: kl {:.4} bow {:.4} bce {:.4} nll {:.4} total {:.4}",
            parts.kl,
            parts.bow,
            parts.bce,
            parts.nll,
            parts.total
        );
        on_epoch(epoch, &parts, model)?;
        out.push(parts);
    }
    Ok(out)
}
