//! Metric reports: `key: value` lines followed by a JSON block with the
//! same fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{
    bleu_corpus, distinct_n, explainability, hit_rate, knowledge_f1, mean_recall, EvalRecord,
    Locus, Scope,
};
use crate::error::{DicrError, Result};
use crate::kg::KnowledgeGraph;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
const JSON_MARKER: &str = "--- json ---";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub recall_at_1: f64,
    pub recall_at_10: f64,
    pub recall_at_25: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub dist1: f64,
    pub dist2: f64,
    pub f1: f64,
    /// `None` when no evaluated turn carries a gold item.
    pub hit: Option<f64>,
    pub g_inter: f64,
    pub g_inner: f64,
    pub p_inter: f64,
    pub p_inner: f64,
    pub n_examples: usize,
    /// Candidate paths handed to the generator.
    pub n_paths: usize,
}

impl MetricsReport {
    pub fn compute(records: &[EvalRecord], kg: &KnowledgeGraph, n_paths: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(DicrError::Precondition("no records to evaluate".into()));
        }
        let pairs: Vec<(&[String], &[String])> = records
            .iter()
            .map(|r| (r.generated.as_slice(), r.gold_response.as_slice()))
            .collect();
        let generated: Vec<Vec<String>> = records.iter().map(|r| r.generated.clone()).collect();
        let f1 = records
            .iter()
            .map(|r| knowledge_f1(&r.generated_entities, &r.gold_entities))
            .sum::<f64>()
            / records.len() as f64;
        Ok(MetricsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            recall_at_1: mean_recall(records, 1).0,
            recall_at_10: mean_recall(records, 10).0,
            recall_at_25: mean_recall(records, 25).0,
            bleu1: bleu_corpus(&pairs, 1),
            bleu2: bleu_corpus(&pairs, 2),
            dist1: distinct_n(&generated, 1),
            dist2: distinct_n(&generated, 2),
            f1,
            hit: hit_rate(records, kg),
            g_inter: explainability(records, kg, Scope::Graph, Locus::Inter),
            g_inner: explainability(records, kg, Scope::Graph, Locus::Inner),
            p_inter: explainability(records, kg, Scope::Paths, Locus::Inter),
            p_inner: explainability(records, kg, Scope::Paths, Locus::Inner),
            n_examples: records.len(),
            n_paths,
        })
    }

    /// `(name, value)` for every metric in field order; a missing hit is NaN.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("recall_at_1", self.recall_at_1),
            ("recall_at_10", self.recall_at_10),
            ("recall_at_25", self.recall_at_25),
            ("bleu1", self.bleu1),
            ("bleu2", self.bleu2),
            ("dist1", self.dist1),
            ("dist2", self.dist2),
            ("f1", self.f1),
            ("hit", self.hit.unwrap_or(f64::NAN)),
            ("g_inter", self.g_inter),
            ("g_inner", self.g_inner),
            ("p_inter", self.p_inter),
            ("p_inner", self.p_inner),
        ]
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = format!("schema_version: {}\n", self.schema_version);
        for (k, v) in self.metrics() {
            if k == "hit" && self.hit.is_none() {
                out.push_str("hit: null\n");
            } else {
                out.push_str(&format!("{k}: {v:.6}\n"));
            }
        }
        out.push_str(&format!(
            "n_examples: {}\nn_paths: {}\n",
            self.n_examples, self.n_paths
        ));
        out.push_str(JSON_MARKER);
        out.push('\n');
        out.push_str(&serde_json::to_string_pretty(self)?);
        out.push('\n');
        Ok(out)
    }

    /// Reads the JSON block; the text lines are for people.
    pub fn parse(text: &str) -> Result<Self> {
        let (_, json) = text
            .split_once(JSON_MARKER)
            .ok_or_else(|| DicrError::Parse {
                line: 0,
                msg: "report has no JSON block".into(),
            })?;
        let value: serde_json::Value = serde_json::from_str(json.trim())?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64);
        if version != Some(u64::from(REPORT_SCHEMA_VERSION)) {
            return Err(DicrError::Version(format!(
                "report schema version {version:?}, expected {REPORT_SCHEMA_VERSION}"
            )));
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| DicrError::path(dir, e))?;
        }
        std::fs::write(path, self.to_text()?).map_err(|e| DicrError::path(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DicrError::path(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricsReport {
        MetricsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            recall_at_1: 0.25,
            recall_at_10: 0.5,
            recall_at_25: 0.75,
            bleu1: 0.4,
            bleu2: 0.3,
            dist1: 0.2,
            dist2: 0.1,
            f1: 0.6,
            hit: Some(0.7),
            g_inter: 0.8,
            g_inner: 0.9,
            p_inter: 0.65,
            p_inner: 0.55,
            n_examples: 12,
            n_paths: 10,
        }
    }

    #[test]
    fn round_trips_through_text() {
        let r = sample();
        assert_eq!(MetricsReport::parse(&r.to_text().unwrap()).unwrap(), r);
        let none = MetricsReport {
            hit: None,
            ..sample()
        };
        let text = none.to_text().unwrap();
        assert!(text.contains("hit: null"));
        assert_eq!(MetricsReport::parse(&text).unwrap(), none);
    }

    #[test]
    fn text_keys_match_fields() {
        let text = sample().to_text().unwrap();
        let keys: Vec<&str> = text
            .lines()
            .take_while(|l| *l != JSON_MARKER)
            .map(|l| l.split(": ").next().unwrap())
            .collect();
        let json: serde_json::Value = serde_json::to_value(sample()).unwrap();
        let mut fields: Vec<&str> = json
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        let mut k = keys.clone();
        k.sort_unstable();
        fields.sort_unstable();
        assert_eq!(k, fields);
    }

    #[test]
    fn other_schema_version_is_rejected() {
        let text = sample()
            .to_text()
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(
            MetricsReport::parse(&text),
            Err(DicrError::Version(_))
        ));
    }
}
