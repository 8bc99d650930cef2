//! Walking the graph with the current policy.

use rand::Rng;

use super::action::{action_space, Action, ActionSpace};
use super::nets::PolicyNetworks;
use super::state::encode_state;
use crate::corpus::TrainingExample;
use crate::error::Result;
use crate::kg::{user_preference, EmbeddingTable, EntityId, KnowledgeGraph, ReasonPath};

/// What the reasoner needs from one training example.
#[derive(Debug, Clone, PartialEq)]
pub struct RecExample {
    pub start: EntityId,
    pub preference: Vec<f64>,
    pub gold_items: Vec<EntityId>,
    pub gold_path: Option<ReasonPath>,
}

impl RecExample {
    /// `None` when the context mentions no entity to start from.
    pub fn from_training(ex: &TrainingExample, emb: &EmbeddingTable) -> Result<Option<Self>> {
        let Some(start) = ex.start_entity() else {
            return Ok(None);
        };
        let pref = user_preference(&ex.context_entities, emb)?;
        Ok(Some(RecExample {
            start,
            preference: pref.vector,
            gold_items: ex.gold_items.clone(),
            gold_path: ex.gold_path.as_ref().map(|g| g.path.clone()),
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub state: Vec<f64>,
    pub space: ActionSpace,
    pub chosen: usize,
    pub probs: Vec<f64>,
}

impl StepRecord {
    pub fn action(&self) -> Action {
        self.space.actions[self.chosen]
    }
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub path: ReasonPath,
    pub steps: Vec<StepRecord>,
}

/// Frozen references shared by rollouts and beam search.
#[derive(Clone, Copy)]
pub struct ReasoningEnv<'a> {
    pub nets: &'a PolicyNetworks,
    pub kg: &'a KnowledgeGraph,
    pub emb: &'a EmbeddingTable,
    pub cap: usize,
    pub max_len: usize,
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl<'a> ReasoningEnv<'a> {
    pub fn state(&self, preference: &[f64], path: &ReasonPath) -> Vec<f64> {
        encode_state(preference, path, self.nets.cfg.history, self.emb)
    }

    pub fn space(&self, preference: &[f64], path: &ReasonPath) -> Result<ActionSpace> {
        action_space(self.kg, path, self.cap, preference, self.emb)
    }

    pub fn rollout<R: Rng>(
        &self,
        ex: &RecExample,
        mode: RolloutMode,
        rng: &mut R,
    ) -> Result<Rollout> {
        let mut path = ReasonPath::start(ex.start);
        let mut steps = Vec::new();
        while !path.terminal {
            let state = self.state(&ex.preference, &path);
            let space = self.space(&ex.preference, &path)?;
            let probs = self.nets.policy(&state, &space, self.emb)?;
            let chosen = match mode {
                RolloutMode::Greedy => argmax(&probs),
                RolloutMode::Sample => sample(&probs, rng),
            };
            let a = space.actions[chosen];
            match a.relation {
                None => {
                    path.terminal = true;
                    path.score += probs[chosen].ln();
                }
                Some(r) => {
                    path = path.extend(r, a.entity, probs[chosen].ln());
                    if path.len() >= self.max_len {
                        path.terminal = true;
                    }
                }
            }
            steps.push(StepRecord {
                state,
                space,
                chosen,
                probs,
            });
        }
        Ok(Rollout { path, steps })
    }

    /// Gold `(state, action)` segments; a path shorter than the maximum
    /// length ends with its terminating self-loop.
    pub fn gold_segments(&self, preference: &[f64], gold: &ReasonPath) -> Vec<(Vec<f64>, Action)> {
        let mut out = Vec::new();
        let mut prefix = ReasonPath::start(gold.origin());
        for (_, r, e) in gold.hops() {
            out.push((self.state(preference, &prefix), Action::edge(r, e)));
            prefix = prefix.extend(r, e, 0.0);
        }
        if gold.len() < self.max_len {
            out.push((
                self.state(preference, &prefix),
                Action::self_loop(prefix.last()),
            ));
        }
        out
    }
}

/// Final entities of paths with at least one hop, first occurrence kept.
pub fn rank_items(paths: &[ReasonPath]) -> Vec<EntityId> {
    let mut out: Vec<EntityId> = Vec::new();
    for p in paths {
        if !p.is_empty() && !out.contains(&p.last()) {
            out.push(p.last());
        }
    }
    out
}
