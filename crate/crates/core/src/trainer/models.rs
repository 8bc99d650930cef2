//! Trained components bundled together, their checkpoint form, and the turn
//! sets the stages train and evaluate on.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Stage, TrainConfig};
use super::data::DataSet;
use crate::checkpoint::Checkpoint;
use crate::converse::{prepare_input, ConverseInput, ConverseModel};
use crate::corpus::{build_examples, tokenize_path, ExampleConfig, TrainingExample, WordVocab};
use crate::error::{DicrError, Result};
use crate::kg::{EmbeddingTable, KnowledgeGraph, ReasonPath};
use crate::nn::ParamStore;
use crate::reasoner::{PolicyNetworks, ReasoningEnv, RecExample};

const EMB_SECTION: &str = "embeddings";
const POLICY_SECTION: &str = "policy";
const CONVERSE_SECTION: &str = "converse";

#[derive(Serialize, Deserialize)]
struct Meta {
    config: String,
    vocab: Option<String>,
}

/// Everything a checkpoint holds. The conversation side is absent after the
/// recommendation stage.
#[derive(Debug, Clone)]
pub struct Models {
    pub cfg: TrainConfig,
    pub emb: EmbeddingTable,
    pub policy: PolicyNetworks,
    pub converse: Option<(ConverseModel, WordVocab)>,
}

fn emb_store(emb: &EmbeddingTable) -> ParamStore {
    let mut s = ParamStore::new();
    s.insert("entities", emb.entities.clone());
    s.insert("relations", emb.relations.clone());
    s
}

impl Models {
    pub fn env<'a>(&'a self, kg: &'a KnowledgeGraph) -> ReasoningEnv<'a> {
        ReasoningEnv {
            nets: &self.policy,
            kg,
            emb: &self.emb,
            cap: self.cfg.cap,
            max_len: self.cfg.max_len,
        }
    }

    pub fn converse(&self) -> Result<(&ConverseModel, &WordVocab)> {
        self.converse
            .as_ref()
            .map(|(m, v)| (m, v))
            .ok_or_else(|| DicrError::Precondition("checkpoint has no conversation model".into()))
    }

    pub fn to_checkpoint(&self, stage: Stage) -> Result<Checkpoint> {
        let meta = Meta {
            config: self.cfg.to_text(),
            vocab: self.converse.as_ref().map(|(_, v)| v.to_text()),
        };
        let mut ck = Checkpoint::new(stage.as_str(), &serde_json::to_string(&meta)?)
            .with_section(EMB_SECTION, &emb_store(&self.emb))
            .with_section(POLICY_SECTION, &self.policy.store);
        if let Some((m, _)) = &self.converse {
            ck = ck.with_section(CONVERSE_SECTION, &m.store);
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: Meta = serde_json::from_str(&ck.meta)?;
        let mut cfg = TrainConfig::default();
        cfg.apply_text(&meta.config)?;
        let section = |name: &str| {
            ck.section(name)
                .ok_or_else(|| DicrError::Checkpoint(format!("missing `{name}` section")))
        };
        let es = section(EMB_SECTION)?;
        let tensor = |name: &str| {
            es.id(name)
                .map(|id| es.get(id).clone())
                .ok_or_else(|| DicrError::Checkpoint(format!("missing embedding table `{name}`")))
        };
        let entities = tensor("entities")?;
        let emb = EmbeddingTable {
            dim: entities.cols,
            entities,
            relations: tensor("relations")?,
        };
        // Parameters are overwritten below, so the initialisation seed is irrelevant.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut policy = PolicyNetworks::new(cfg.policy(), &emb, &mut rng)?;
        policy.store.load_from(section(POLICY_SECTION)?)?;
        let converse = match (&meta.vocab, ck.section(CONVERSE_SECTION)) {
            (Some(text), Some(store)) => {
                let vocab = WordVocab::parse(text)?;
                let mut m = ConverseModel::new(cfg.converse(), vocab.len(), &mut rng)?;
                m.store.load_from(store)?;
                Some((m, vocab))
            }
            (None, None) => None,
            _ => {
                return Err(DicrError::Checkpoint(
                    "conversation parameters without a vocabulary".into(),
                ))
            }
        };
        Ok(Models {
            cfg,
            emb,
            policy,
            converse,
        })
    }

    pub fn save(&self, stage: Stage, path: &Path) -> Result<()> {
        self.to_checkpoint(stage)?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Recommendation turns of one split, aligned with their reasoner view.
#[derive(Debug, Clone)]
pub struct TurnSet {
    pub examples: Vec<TrainingExample>,
    pub rec: Vec<RecExample>,
}

impl TurnSet {
    /// Turns that recommend something and mention an entity to start from;
    /// `require_gold` additionally keeps only turns with a gold path.
    pub fn build(
        data: &DataSet,
        cfg: &TrainConfig,
        emb: &EmbeddingTable,
        split: &str,
        require_gold: bool,
    ) -> Result<Self> {
        let ex_cfg = ExampleConfig {
            context_turns: cfg.context_turns,
            max_path_len: cfg.max_len,
        };
        let mut examples = Vec::new();
        let mut rec = Vec::new();
        for ex in build_examples(data.split(split)?, &data.kg, &data.templates, &ex_cfg) {
            if !ex.is_recommendation() || (require_gold && ex.gold_path.is_none()) {
                continue;
            }
            if let Some(r) = RecExample::from_training(&ex, emb)? {
                examples.push(ex);
                rec.push(r);
            }
        }
        Ok(TurnSet { examples, rec })
    }

    pub fn len(&self) -> usize {
        self.rec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rec.is_empty()
    }
}

/// Full beam per turn (the ranking list), searched in parallel.
pub fn beams(
    env: &ReasoningEnv,
    turns: &[RecExample],
    width: usize,
) -> Result<Vec<Vec<ReasonPath>>> {
    turns
        .par_iter()
        .map(|ex| env.beam_search(ex.start, &ex.preference, width, width))
        .collect()
}

/// The first `n` paths with at least one hop; they are what the generator sees.
pub fn generation_paths(beam: &[ReasonPath], n: usize) -> Vec<ReasonPath> {
    beam.iter()
        .filter(|p| !p.is_empty())
        .take(n)
        .cloned()
        .collect()
}

/// Vocabulary over the training turns' context and response text.
pub fn build_vocab(data: &DataSet, cfg: &TrainConfig) -> Result<WordVocab> {
    let ex_cfg = ExampleConfig {
        context_turns: cfg.context_turns,
        max_path_len: cfg.max_len,
    };
    let examples = build_examples(data.split("train")?, &data.kg, &data.templates, &ex_cfg);
    Ok(WordVocab::build(
        examples
            .iter()
            .flat_map(|e| [e.context.as_slice(), e.response.as_slice()]),
        cfg.min_freq,
    ))
}

/// Generator inputs for training turns. A turn whose beam has no usable
/// path falls back to its gold path so it still has a candidate.
pub fn training_inputs(
    data: &DataSet,
    cfg: &TrainConfig,
    vocab: &WordVocab,
    turns: &TurnSet,
    paths: &[Vec<ReasonPath>],
) -> Vec<ConverseInput> {
    turns
        .examples
        .iter()
        .zip(paths)
        .map(|(ex, ps)| {
            let gold = ex.gold_path.as_ref();
            let mut tokens: Vec<Vec<String>> = ps
                .iter()
                .map(|p| tokenize_path(p, &data.kg, &data.templates))
                .collect();
            if tokens.is_empty() {
                if let Some(g) = gold {
                    tokens.push(g.statement.clone());
                }
            }
            prepare_input(
                vocab,
                &ex.context,
                Some(&ex.response),
                gold.map(|g| g.statement.as_slice()),
                &tokens,
                cfg.max_context,
            )
        })
        .collect()
}
