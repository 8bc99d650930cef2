//! Test-time pipeline: beam the paths, generate a response, link its entities
//! and score everything.

use rayon::prelude::*;

use super::data::DataSet;
use super::models::{beams, generation_paths, Models, TurnSet};
use crate::converse::{generate, prepare_input, Decoding};
use crate::corpus::tokenize_path;
use crate::error::{DicrError, Result};
use crate::eval::{EvalRecord, MetricsReport};
use crate::kg::{EntityId, EntityLinker, Mention};
use crate::reasoner::rank_items;

/// Ranking depth used for Recall@K regardless of the generator's path count.
pub const RANK_DEPTH: usize = 25;

pub fn linked_entities(mentions: &[Mention]) -> Vec<EntityId> {
    let mut out: Vec<EntityId> = Vec::new();
    for m in mentions {
        if !out.contains(&m.entity) {
            out.push(m.entity);
        }
    }
    out
}

/// One record per recommendation turn of `split`, generating from the top
/// `n_paths` beam paths.
pub fn eval_records(
    models: &Models,
    data: &DataSet,
    split: &str,
    n_paths: usize,
) -> Result<Vec<EvalRecord>> {
    if n_paths == 0 {
        return Err(DicrError::config("n_paths must be positive"));
    }
    let (model, vocab) = models.converse()?;
    let turns = TurnSet::build(data, &models.cfg, &models.emb, split, false)?;
    if turns.is_empty() {
        return Err(DicrError::Precondition(format!(
            "split `{split}` has no recommendation turns"
        )));
    }
    let env = models.env(&data.kg);
    let width = models.cfg.beam_width.max(RANK_DEPTH).max(n_paths);
    let all = beams(&env, &turns.rec, width)?;
    let linker = EntityLinker::new(&data.kg, data.aliases.as_ref());
    turns
        .examples
        .par_iter()
        .zip(&all)
        .map(|(ex, beam)| {
            let paths = generation_paths(beam, n_paths);
            let tokens: Vec<Vec<String>> = paths
                .iter()
                .map(|p| tokenize_path(p, &data.kg, &data.templates))
                .collect();
            let input = prepare_input(
                vocab,
                &ex.context,
                None,
                None,
                &tokens,
                models.cfg.max_context,
            );
            let out = generate(
                model,
                vocab,
                &input,
                Decoding::Greedy,
                models.cfg.max_response,
            )?;
            Ok(EvalRecord {
                context_entities: ex.context_entities.clone(),
                gold_response: ex.response.clone(),
                gold_items: ex.gold_items.clone(),
                gold_entities: ex.response_entities.clone(),
                generated_entities: linked_entities(&linker.link(&out.tokens)),
                generated: out.tokens,
                candidate_paths: paths,
                ranked_items: rank_items(&beam[..beam.len().min(RANK_DEPTH)]),
            })
        })
        .collect()
}

pub fn evaluate(
    models: &Models,
    data: &DataSet,
    split: &str,
    n_paths: usize,
) -> Result<MetricsReport> {
    let records = eval_records(models, data, split, n_paths)?;
    MetricsReport::compute(&records, &data.kg, n_paths)
}

/// One report per path count, all from the same trained models.
pub fn sweep(
    models: &Models,
    data: &DataSet,
    split: &str,
    counts: &[usize],
) -> Result<Vec<MetricsReport>> {
    counts
        .iter()
        .map(|&n| evaluate(models, data, split, n))
        .collect()
}
