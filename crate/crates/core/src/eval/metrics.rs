//! Recommendation, generation and explainability metrics over evaluation records.

use std::collections::{HashMap, HashSet};

use crate::kg::{EntityId, KnowledgeGraph, ReasonPath};

/// Everything the metrics need about one evaluated turn.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub context_entities: Vec<EntityId>,
    pub gold_response: Vec<String>,
    pub gold_items: Vec<EntityId>,
    /// Entities linked in the gold response.
    pub gold_entities: Vec<EntityId>,
    pub generated: Vec<String>,
    /// Entities linked in the generated response.
    pub generated_entities: Vec<EntityId>,
    pub candidate_paths: Vec<ReasonPath>,
    /// Deduplicated item ranking from the reasoner.
    pub ranked_items: Vec<EntityId>,
}

/// `Some(1.0)` iff a gold item is among the first `k`; `None` without gold items.
pub fn recall_at_k(ranked: &[EntityId], gold: &[EntityId], k: usize) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    let hit = ranked.iter().take(k).any(|e| gold.contains(e));
    Some(if hit { 1.0 } else { 0.0 })
}

/// Mean recall over records with gold items; `(mean, skipped)`.
pub fn mean_recall(records: &[EvalRecord], k: usize) -> (f64, usize) {
    let scores: Vec<f64> = records
        .iter()
        .filter_map(|r| recall_at_k(&r.ranked_items, &r.gold_items, k))
        .collect();
    let skipped = records.len() - scores.len();
    if scores.is_empty() {
        return (0.0, skipped);
    }
    (scores.iter().sum::<f64>() / scores.len() as f64, skipped)
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> Vec<Vec<&str>> {
    if tokens.len() < n || n == 0 {
        return Vec::new();
    }
    tokens
        .windows(n)
        .map(|w| w.iter().map(AsRef::as_ref).collect())
        .collect()
}

/// Added to a zero clipped count of order ≥ 2.
pub const BLEU_SMOOTHING: f64 = 1e-9;

/// Corpus-level BLEU-`n`: uniform geometric mean of clipped n-gram
/// precisions of orders `1..=n` times the brevity penalty. No unigram
/// overlap at all scores exactly 0; orders with no candidate n-grams are
/// skipped so a one-token exact match still scores 1.
pub fn bleu_corpus<S: AsRef<str>>(pairs: &[(&[S], &[S])], n: usize) -> f64 {
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    for (cand, reference) in pairs {
        cand_len += cand.len();
        ref_len += reference.len();
        for order in 1..=n {
            let mut ref_counts: HashMap<Vec<&str>, usize> = HashMap::new();
            for g in ngrams(reference, order) {
                *ref_counts.entry(g).or_default() += 1;
            }
            let mut cand_counts: HashMap<Vec<&str>, usize> = HashMap::new();
            for g in ngrams(cand, order) {
                *cand_counts.entry(g).or_default() += 1;
            }
            for (g, c) in &cand_counts {
                matched[order - 1] += (*c).min(ref_counts.get(g).copied().unwrap_or(0));
                total[order - 1] += c;
            }
        }
    }
    if cand_len == 0 || matched[0] == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for order in 0..n {
        if total[order] == 0 {
            continue;
        }
        let m = if matched[order] == 0 {
            BLEU_SMOOTHING
        } else {
            matched[order] as f64
        };
        log_sum += (m / total[order] as f64).ln();
        orders += 1;
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    bp * (log_sum / orders as f64).exp()
}

pub fn bleu<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> f64 {
    bleu_corpus(&[(candidate, reference)], n)
}

/// Distinct n-grams over all n-grams of all responses.
pub fn distinct_n<S: AsRef<str>>(responses: &[Vec<S>], n: usize) -> f64 {
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for r in responses {
        for g in ngrams(r, n) {
            total += 1;
            seen.insert(g);
        }
    }
    if total == 0 {
        return 0.0;
    }
    seen.len() as f64 / total as f64
}

/// Set-level F1; two empty sets agree perfectly.
pub fn knowledge_f1(generated: &[EntityId], gold: &[EntityId]) -> f64 {
    let g: HashSet<_> = generated.iter().collect();
    let r: HashSet<_> = gold.iter().collect();
    if g.is_empty() && r.is_empty() {
        return 1.0;
    }
    let common = g.intersection(&r).count() as f64;
    if common == 0.0 {
        return 0.0;
    }
    let p = common / g.len() as f64;
    let rc = common / r.len() as f64;
    2.0 * p * rc / (p + rc)
}

/// Whether the generated text mentions any gold item (case-folded substring
/// match on item labels).
pub fn mentions_item(generated: &[String], items: &[EntityId], kg: &KnowledgeGraph) -> bool {
    let text = generated.join(" ").to_lowercase();
    items
        .iter()
        .any(|e| text.contains(&kg.entity_label(*e).to_lowercase()))
}

/// Fraction of records with gold items whose response mentions one; `None`
/// when no record has gold items.
pub fn hit_rate(records: &[EvalRecord], kg: &KnowledgeGraph) -> Option<f64> {
    let with_gold: Vec<&EvalRecord> = records
        .iter()
        .filter(|r| !r.gold_items.is_empty())
        .collect();
    if with_gold.is_empty() {
        return None;
    }
    let hits = with_gold
        .iter()
        .filter(|r| mentions_item(&r.generated, &r.gold_items, kg))
        .count();
    Some(hits as f64 / with_gold.len() as f64)
}

/// Where a linked pair must be found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Any knowledge-graph triplet.
    Graph,
    /// A hop of a candidate path.
    Paths,
}

/// Which entity pairs count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locus {
    /// Context entity with response entity.
    Inter,
    /// Two response entities.
    Inner,
}

fn pairs(r: &EvalRecord, locus: Locus) -> Vec<(EntityId, EntityId)> {
    let resp: Vec<EntityId> = {
        let mut v = r.generated_entities.clone();
        v.sort_unstable();
        v.dedup();
        v
    };
    match locus {
        Locus::Inter => r
            .context_entities
            .iter()
            .flat_map(|c| resp.iter().map(move |e| (*c, *e)))
            .filter(|(a, b)| a != b)
            .collect(),
        Locus::Inner => {
            let mut out = Vec::new();
            for i in 0..resp.len() {
                for j in i + 1..resp.len() {
                    out.push((resp[i], resp[j]));
                }
            }
            out
        }
    }
}

fn linked(a: EntityId, b: EntityId, r: &EvalRecord, kg: &KnowledgeGraph, scope: Scope) -> bool {
    match scope {
        Scope::Graph => kg.connected(a, b),
        Scope::Paths => r.candidate_paths.iter().any(|p| {
            p.hops()
                .any(|(h, _, t)| (h == a && t == b) || (h == b && t == a))
        }),
    }
}

/// Fraction of records (with a non-empty generated response) having at
/// least one qualifying linked pair.
pub fn explainability(
    records: &[EvalRecord],
    kg: &KnowledgeGraph,
    scope: Scope,
    locus: Locus,
) -> f64 {
    let considered: Vec<&EvalRecord> = records.iter().filter(|r| !r.generated.is_empty()).collect();
    if considered.is_empty() {
        return 0.0;
    }
    let ok = considered
        .iter()
        .filter(|r| {
            pairs(r, locus)
                .into_iter()
                .any(|(a, b)| linked(a, b, r, kg, scope))
        })
        .count();
    ok as f64 / considered.len() as f64
}
