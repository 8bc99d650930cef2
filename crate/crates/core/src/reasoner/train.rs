//! Adversarial actor-critic training of the reasoner.
//!
//! Per step `t` of a sampled episode the objective is
//! `−Σ_a π(a|s_t) Q̂(s_t, a) − λ H(π(·|s_t)) + (Q(s_t, a_t) − G_t)²`, where
//! `Q̂` and `G_t = R_t + E_{a∼π} Q̂(s_{t+1}, a)` are computed beforehand and
//! held fixed (`G_t = R_t` at the final step). The discriminator adds
//! `−log(1 − D(s_t, a_t)) − log D(s^K_t, a^K_t)` with the gold segment of the
//! same step (the last one once the agent outlives the gold path).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::action::Action;
use super::nets::PolicyNetworks;
use super::reward::{aggregate_reward, path_reward, terminal_reward, RewardBundle, RewardWeights};
use super::rollout::{rank_items, ReasoningEnv, RecExample, RolloutMode, StepRecord};
use crate::error::{DicrError, Result};
use crate::kg::{EntityId, ReasonPath, RelationId};
use crate::nn::{Adam, Gradients, Tape, Var};

/// Rewards supplied by the conversation side during joint training.
pub trait BridgeRewards: Sync {
    /// Knowledge reward for a finished path of training example `index`.
    fn knowledge(&self, index: usize, path: &ReasonPath) -> f64;
    /// Semantic reward for the hop `head -relation-> tail` taken in example `index`.
    fn semantic(&self, index: usize, head: EntityId, relation: RelationId, tail: EntityId) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_len: usize,
    pub cap: usize,
    pub entropy_weight: f64,
    pub discount: f64,
    pub weights: RewardWeights,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for RecConfig {
    fn default() -> Self {
        RecConfig {
            epochs: 20,
            batch_size: 32,
            lr: 1e-4,
            max_len: 3,
            cap: 250,
            entropy_weight: 0.01,
            discount: 1.0,
            weights: RewardWeights::default(),
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// Detached quantities the actor-critic objective is built around.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTargets {
    /// `Q̂(s_t, ·)` over the candidates of every step.
    pub q_values: Vec<Vec<f64>>,
    /// Bellman targets `G_t`.
    pub returns: Vec<f64>,
}

pub fn compute_targets(
    nets: &PolicyNetworks,
    steps: &[StepRecord],
    rewards: &[f64],
    discount: f64,
) -> Result<EpisodeTargets> {
    if steps.is_empty() || steps.len() != rewards.len() {
        return Err(DicrError::Precondition(
            "episode must be non-empty with one reward per step".into(),
        ));
    }
    let q_values = steps
        .iter()
        .map(|s| nets.q_values(&s.state, &s.space))
        .collect::<Result<Vec<_>>>()?;
    let mut returns = Vec::with_capacity(steps.len());
    for t in 0..steps.len() {
        let next = if t + 1 < steps.len() {
            let s = &steps[t + 1];
            s.probs
                .iter()
                .zip(&q_values[t + 1])
                .map(|(p, q)| p * q)
                .sum()
        } else {
            0.0
        };
        returns.push(rewards[t] + discount * next);
    }
    if q_values
        .iter()
        .flatten()
        .chain(&returns)
        .any(|v| !v.is_finite())
    {
        return Err(DicrError::Numeric("non-finite critic value".into()));
    }
    Ok(EpisodeTargets { q_values, returns })
}

/// Actor-critic objective of one episode on `t`.
pub fn actor_critic_loss(
    t: &mut Tape,
    env: &ReasoningEnv,
    steps: &[StepRecord],
    targets: &EpisodeTargets,
    entropy_weight: f64,
) -> Var {
    let mut terms = Vec::with_capacity(steps.len() * 2);
    for (k, step) in steps.iter().enumerate() {
        let s = t.constant(step.state.clone());
        let logits = env.nets.actor_logits(t, s, &step.space, env.emb);
        let probs = t.softmax(logits);
        let q_hat = t.constant(targets.q_values[k].clone());
        let expected = t.dot(probs, q_hat);
        terms.push(t.neg(expected));
        if entropy_weight != 0.0 {
            let logp = t.log_softmax(logits);
            let plogp = t.dot(probs, logp);
            terms.push(t.scale(plogp, entropy_weight));
        }
        let q = env.nets.critic_values(t, s, &step.space);
        let q_t = t.pick(q, step.chosen);
        let err = t.affine(q_t, 1.0, -targets.returns[k]);
        terms.push(t.mul(err, err));
    }
    t.sum_scalars(&terms)
}

/// Discriminator objective summed over paired fake and gold segments.
pub fn discriminator_loss(
    t: &mut Tape,
    nets: &PolicyNetworks,
    fake: &[(Vec<f64>, Action)],
    real: &[(Vec<f64>, Action)],
) -> Var {
    let mut terms = Vec::with_capacity(fake.len() * 2);
    for (k, (s, a)) in fake.iter().enumerate() {
        let (rs, ra) = &real[k.min(real.len() - 1)];
        let sv = t.constant(s.clone());
        let d_fake = nets.disc_score(t, sv, a);
        let not_fake = t.one_minus(d_fake);
        let l1 = t.log(not_fake);
        let rv = t.constant(rs.clone());
        let d_real = nets.disc_score(t, rv, ra);
        let l2 = t.log(d_real);
        terms.push(t.neg(l1));
        terms.push(t.neg(l2));
    }
    t.sum_scalars(&terms)
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeOutcome {
    pub reward: f64,
    pub terminal: f64,
    pub disc_loss: f64,
    pub mean_abs_reward: f64,
}

/// Per-step aggregate rewards of a finished rollout.
pub fn step_rewards(
    env: &ReasoningEnv,
    ex: &RecExample,
    index: usize,
    path: &ReasonPath,
    steps: &[StepRecord],
    weights: RewardWeights,
    bridge: Option<&dyn BridgeRewards>,
) -> Result<Vec<f64>> {
    let last = steps.len() - 1;
    let mut out = Vec::with_capacity(steps.len());
    let mut prefix = ReasonPath::start(path.origin());
    for (t, step) in steps.iter().enumerate() {
        let a = step.action();
        let d = env.nets.disc(&step.state, &a)?;
        let mut b = RewardBundle {
            r_terminal: if t == last {
                terminal_reward(path, &ex.gold_items)
            } else {
                0.0
            },
            r_path: path_reward(d),
            r_knowledge: 0.0,
            r_semantic: 0.0,
            weights,
        };
        if let Some(br) = bridge {
            if t == last {
                b.r_knowledge = br.knowledge(index, path);
            }
            if let Some(r) = a.relation {
                b.r_semantic = br.semantic(index, prefix.last(), r, a.entity);
            }
        }
        out.push(aggregate_reward(
            &b,
            path.len(),
            env.max_len,
            bridge.is_some(),
        )?);
        if let Some(r) = a.relation {
            prefix = prefix.extend(r, a.entity, 0.0);
        }
    }
    Ok(out)
}

/// Samples one episode and returns its gradient and statistics.
pub fn episode_gradients(
    env: &ReasoningEnv,
    ex: &RecExample,
    index: usize,
    cfg: &RecConfig,
    bridge: Option<&dyn BridgeRewards>,
    rng: &mut ChaCha8Rng,
) -> Result<(Gradients, EpisodeOutcome)> {
    let gold = ex
        .gold_path
        .as_ref()
        .ok_or_else(|| DicrError::Precondition("episode needs a gold path".into()))?;
    let roll = env.rollout(ex, RolloutMode::Sample, rng)?;
    let rewards = step_rewards(env, ex, index, &roll.path, &roll.steps, cfg.weights, bridge)?;
    let targets = compute_targets(env.nets, &roll.steps, &rewards, cfg.discount)?;
    let real = env.gold_segments(&ex.preference, gold);
    let fake: Vec<(Vec<f64>, Action)> = roll
        .steps
        .iter()
        .map(|s| (s.state.clone(), s.action()))
        .collect();
    let mut t = Tape::new(&env.nets.store);
    let ac = actor_critic_loss(&mut t, env, &roll.steps, &targets, cfg.entropy_weight);
    let dl = discriminator_loss(&mut t, env.nets, &fake, &real);
    let total = t.add(ac, dl);
    if !t.scalar(total).is_finite() {
        return Err(DicrError::Numeric("non-finite reasoner loss".into()));
    }
    let grads = t.backward(total);
    let n = rewards.len() as f64;
    Ok((
        grads,
        EpisodeOutcome {
            reward: rewards.iter().sum(),
            terminal: terminal_reward(&roll.path, &ex.gold_items),
            disc_loss: t.scalar(dl) / n,
            mean_abs_reward: rewards.iter().map(|r| r.abs()).sum::<f64>() / n,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecEpochStats {
    pub epoch: usize,
    /// Mean summed aggregate reward per episode.
    pub reward: f64,
    pub terminal: f64,
    pub disc_loss: f64,
    pub recall1: f64,
}

pub fn curves_csv(stats: &[RecEpochStats]) -> String {
    let mut out = String::from("epoch,reward,disc_loss,recall1\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.epoch, s.reward, s.disc_loss, s.recall1
        ));
    }
    out
}

pub fn episode_rng(seed: u64, epoch: usize, position: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | position as u64);
    rng
}

/// Greedy Recall@1 over examples with gold items.
pub fn greedy_recall1(env: &ReasoningEnv, examples: &[RecExample]) -> Result<f64> {
    let scored: Vec<f64> = examples
        .par_iter()
        .filter(|e| !e.gold_items.is_empty())
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let r = env.rollout(e, RolloutMode::Greedy, &mut rng)?;
            let items = rank_items(std::slice::from_ref(&r.path));
            Ok(if items.first().is_some_and(|i| e.gold_items.contains(i)) {
                1.0
            } else {
                0.0
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(if scored.is_empty() {
        0.0
    } else {
        scored.iter().sum::<f64>() / scored.len() as f64
    })
}

/// Discriminator scores of gold segments (`true`) and of one uniformly drawn
/// non-gold action from each gold state (`false`).
pub fn segment_scores(
    env: &ReasoningEnv,
    examples: &[RecExample],
    seed: u64,
) -> Result<Vec<(f64, bool)>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for ex in examples {
        let Some(gold) = &ex.gold_path else { continue };
        let mut prefix = ReasonPath::start(gold.origin());
        for (state, action) in env.gold_segments(&ex.preference, gold) {
            let space = env.space(&ex.preference, &prefix)?;
            out.push((env.nets.disc(&state, &action)?, true));
            let others: Vec<&Action> = space.actions.iter().filter(|a| **a != action).collect();
            if !others.is_empty() {
                let fake = others[rng.gen_range(0..others.len())];
                out.push((env.nets.disc(&state, fake)?, false));
            }
            if let Some(r) = action.relation {
                prefix = prefix.extend(r, action.entity, 0.0);
            }
        }
    }
    Ok(out)
}

/// Fraction of segments on the correct side of `threshold`.
pub fn threshold_accuracy(scores: &[(f64, bool)], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let correct = scores
        .iter()
        .filter(|(s, real)| (*s > threshold) == *real)
        .count();
    correct as f64 / scores.len() as f64
}

/// Decision threshold maximising accuracy on `scores` (midpoints between
/// consecutive distinct scores; the smallest best threshold wins).
pub fn fit_threshold(scores: &[(f64, bool)]) -> f64 {
    let mut xs: Vec<f64> = scores.iter().map(|s| s.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut best = (threshold_accuracy(scores, 0.5), 0.5);
    for w in xs.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let acc = threshold_accuracy(scores, t);
        if acc > best.0 {
            best = (acc, t);
        }
    }
    best.1
}

/// One optimisation step over a batch; examples run in parallel, gradients
/// are summed in batch order.
pub fn train_batch(
    nets: &mut PolicyNetworks,
    opt: &mut Adam,
    env_parts: (&crate::kg::KnowledgeGraph, &crate::kg::EmbeddingTable),
    batch: &[(usize, &RecExample)],
    cfg: &RecConfig,
    epoch: usize,
    bridge: Option<&dyn BridgeRewards>,
) -> Result<Vec<EpisodeOutcome>> {
    let (kg, emb) = env_parts;
    let results: Vec<Result<(Gradients, EpisodeOutcome)>> = {
        let env = ReasoningEnv {
            nets,
            kg,
            emb,
            cap: cfg.cap,
            max_len: cfg.max_len,
        };
        batch
            .par_iter()
            .map(|(idx, ex)| {
                let mut rng = episode_rng(cfg.seed, epoch, *idx);
                episode_gradients(&env, ex, *idx, cfg, bridge, &mut rng)
            })
            .collect()
    };
    let mut total = Gradients::zeros_like(&nets.store);
    let mut outcomes = Vec::with_capacity(batch.len());
    for r in results {
        let (g, o) = r?;
        total.accumulate(&g);
        outcomes.push(o);
    }
    if bridge.is_some() {
        let mean_abs =
            outcomes.iter().map(|o| o.mean_abs_reward).sum::<f64>() / outcomes.len() as f64;
        if mean_abs > 1e3 {
            return Err(DicrError::Numeric(format!(
                "joint training diverged: mean |reward| {mean_abs:.3e} exceeds 1e3"
            )));
        }
    }
    total.scale(1.0 / batch.len() as f64);
    if !total.all_finite() {
        return Err(DicrError::Numeric("non-finite reasoner gradient".into()));
    }
    opt.step(&mut nets.store, &total);
    Ok(outcomes)
}

/// Runs one epoch over `train` (indices refer to positions in `train`).
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    nets: &mut PolicyNetworks,
    opt: &mut Adam,
    kg: &crate::kg::KnowledgeGraph,
    emb: &crate::kg::EmbeddingTable,
    train: &[RecExample],
    cfg: &RecConfig,
    epoch: usize,
    bridge: Option<&dyn BridgeRewards>,
) -> Result<(f64, f64, f64)> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..train.len())
        .filter(|i| train[*i].gold_path.is_some())
        .collect();
    if order.is_empty() {
        return Err(DicrError::config("no training example has a gold path"));
    }
    order.shuffle(&mut episode_rng(cfg.seed, epoch, usize::MAX >> 32));
    let (mut reward, mut terminal, mut disc, mut n) = (0.0, 0.0, 0.0, 0usize);
    for chunk in order.chunks(cfg.batch_size.max(1)) {
        let batch: Vec<(usize, &RecExample)> = chunk.iter().map(|i| (*i, &train[*i])).collect();
        for o in train_batch(nets, opt, (kg, emb), &batch, cfg, epoch, bridge)? {
            reward += o.reward;
            terminal += o.terminal;
            disc += o.disc_loss;
            n += 1;
        }
    }
    let n = n as f64;
    Ok((reward / n, terminal / n, disc / n))
}

/// Trains from scratch-initialised or pre-loaded networks; `on_epoch` sees
/// the networks after every epoch (e.g. to checkpoint them).
#[allow(clippy::too_many_arguments)]
pub fn train_rec(
    nets: &mut PolicyNetworks,
    kg: &crate::kg::KnowledgeGraph,
    emb: &crate::kg::EmbeddingTable,
    train: &[RecExample],
    valid: &[RecExample],
    cfg: &RecConfig,
    mut on_epoch: impl FnMut(&RecEpochStats, &PolicyNetworks) -> Result<()>,
) -> Result<Vec<RecEpochStats>> {
    cfg.weights.validate()?;
    let mut opt = Adam::new(&nets.store, cfg.lr).with_clip(cfg.clip_norm);
    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let (reward, terminal, disc_loss) =
            train_epoch(nets, &mut opt, kg, emb, train, cfg, epoch, None)?;
        let env = ReasoningEnv {
            nets,
            kg,
            emb,
            cap: cfg.cap,
            max_len: cfg.max_len,
        };
        let recall1 = greedy_recall1(&env, valid)?;
        let s = RecEpochStats {
            epoch,
            reward,
            terminal,
            disc_loss,
            recall1,
        };
        log::info!(
            "rec epoch {epoch}: reward {reward:.4} terminal {terminal:.3} disc {disc_loss:.4} recall@1 {recall1:.3}"
        );
        on_epoch(&s, nets)?;
        stats.push(s);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::EmbeddingTable;
    use crate::nn::gradcheck;
    use crate::reasoner::fixture;

    fn setup() -> (crate::kg::KnowledgeGraph, EmbeddingTable, PolicyNetworks) {
        let kg = fixture::graph(5, 12, 3);
        let emb = fixture::embeddings(&kg, 4, 6);
        let nets = fixture::nets(&emb, 7);
        (kg, emb, nets)
    }

    fn episode(env: &ReasoningEnv) -> (RecExample, Vec<StepRecord>) {
        let ex = RecExample {
            start: EntityId(0),
            preference: env.emb.entity_vec(EntityId(0)),
            gold_items: vec![EntityId(3)],
            gold_path: None,
        };
        // Pick the first sampled episode with at least two steps.
        for seed in 0..100 {
            let r = env
                .rollout(&ex, RolloutMode::Sample, &mut episode_rng(seed, 0, 0))
                .unwrap();
            if r.steps.len() >= 2 {
                return (ex, r.steps);
            }
        }
        panic!("no multi-step episode");
    }

    #[test]
    fn terminal_return_is_reward() {
        let (kg, emb, nets) = setup();
        let env = ReasoningEnv {
            nets: &nets,
            kg: &kg,
            emb: &emb,
            cap: 250,
            max_len: 3,
        };
        let (_, steps) = episode(&env);
        let rewards: Vec<f64> = (0..steps.len()).map(|i| i as f64 + 0.5).collect();
        let tg = compute_targets(&nets, &steps, &rewards, 1.0).unwrap();
        assert_eq!(*tg.returns.last().unwrap(), *rewards.last().unwrap());
        let exp_next: f64 = steps[1]
            .probs
            .iter()
            .zip(&tg.q_values[1])
            .map(|(p, q)| p * q)
            .sum();
        assert!((tg.returns[0] - (rewards[0] + exp_next)).abs() < 1e-12);
    }

    #[test]
    fn critic_matching_target_has_zero_error() {
        let (kg, emb, nets) = setup();
        let env = ReasoningEnv {
            nets: &nets,
            kg: &kg,
            emb: &emb,
            cap: 250,
            max_len: 3,
        };
        let (_, steps) = episode(&env);
        let last = &steps[steps.len() - 1..];
        let q = nets.q_values(&last[0].state, &last[0].space).unwrap();
        let targets = EpisodeTargets {
            q_values: vec![vec![0.0; q.len()]],
            returns: vec![q[last[0].chosen]],
        };
        let mut t = Tape::new(&nets.store);
        let l = actor_critic_loss(&mut t, &env, last, &targets, 0.0);
        assert!(t.scalar(l).abs() < 1e-12);
    }

    #[test]
    fn actor_critic_gradients_match_finite_differences() {
        let (kg, emb, mut nets) = setup();
        let (steps, targets) = {
            let env = ReasoningEnv {
                nets: &nets,
                kg: &kg,
                emb: &emb,
                cap: 250,
                max_len: 3,
            };
            let (_, steps) = episode(&env);
            let rewards = vec![0.3; steps.len()];
            let tg = compute_targets(&nets, &steps, &rewards, 1.0).unwrap();
            (steps, tg)
        };
        let grads = {
            let env = ReasoningEnv {
                nets: &nets,
                kg: &kg,
                emb: &emb,
                cap: 250,
                max_len: 3,
            };
            let mut t = Tape::new(&nets.store);
            let l = actor_critic_loss(&mut t, &env, &steps, &targets, 0.01);
            t.backward(l)
        };
        let ids: Vec<_> = nets
            .actor_params()
            .into_iter()
            .chain(nets.critic_params())
            .collect();
        let shell = nets.clone();
        let res = gradcheck::check(&mut nets.store, &ids, &grads, 1e-3, 1e-6, |store| {
            let mut n = shell.clone();
            n.store = store.clone();
            let env = ReasoningEnv {
                nets: &n,
                kg: &kg,
                emb: &emb,
                cap: 250,
                max_len: 3,
            };
            let mut t = Tape::new(&n.store);
            let l = actor_critic_loss(&mut t, &env, &steps, &targets, 0.01);
            t.scalar(l)
        });
        assert!(res.max_rel_err < 1e-4, "{res:?}");
    }

    #[test]
    fn discriminator_gradients_match_finite_differences() {
        let (kg, emb, mut nets) = setup();
        let env_nets = nets.clone();
        let env = ReasoningEnv {
            nets: &env_nets,
            kg: &kg,
            emb: &emb,
            cap: 250,
            max_len: 3,
        };
        let (ex, steps) = episode(&env);
        let fake: Vec<_> = steps
            .iter()
            .map(|s| (s.state.clone(), s.action()))
            .collect();
        let gold = ReasonPath::from_hops(
            ex.start,
            &[(fake[0].1.relation.unwrap_or(RelationId(0)), EntityId(1))],
        );
        let real = env.gold_segments(&ex.preference, &gold);
        let grads = {
            let mut t = Tape::new(&nets.store);
            let l = discriminator_loss(&mut t, &nets, &fake, &real);
            t.backward(l)
        };
        let ids = nets.disc_params();
        let shell = nets.clone();
        let res = gradcheck::check(&mut nets.store, &ids, &grads, 1e-3, 1e-6, |store| {
            let mut n = shell.clone();
            n.store = store.clone();
            let mut t = Tape::new(&n.store);
            let l = discriminator_loss(&mut t, &n, &fake, &real);
            t.scalar(l)
        });
        assert!(res.max_rel_err < 1e-4, "{res:?}");
    }

    #[test]
    fn disc_loss_on_tape_matches_formula() {
        let (kg, emb, nets) = setup();
        let env = ReasoningEnv {
            nets: &nets,
            kg: &kg,
            emb: &emb,
            cap: 250,
            max_len: 3,
        };
        let (_, steps) = episode(&env);
        let fake = vec![(steps[0].state.clone(), steps[0].action())];
        let real = vec![(steps[1].state.clone(), steps[1].action())];
        let mut t = Tape::new(&nets.store);
        let l = discriminator_loss(&mut t, &nets, &fake, &real);
        let want = super::super::reward::disc_loss(
            nets.disc(&fake[0].0, &fake[0].1).unwrap(),
            nets.disc(&real[0].0, &real[0].1).unwrap(),
        );
        assert!((t.scalar(l) - want).abs() < 1e-12);
    }
}
