//! Beam search over reasoning paths.
//!
//! Finished paths stay in the beam and compete with expansions of the
//! unfinished ones; the search stops once every kept path is finished.

use std::cmp::Ordering;

use super::rollout::ReasoningEnv;
use crate::error::Result;
use crate::kg::{EntityId, ReasonPath};

fn by_score(a: &ReasonPath, b: &ReasonPath) -> Ordering {
    b.score.total_cmp(&a.score)
}

impl<'a> ReasoningEnv<'a> {
    /// Up to `n_paths` distinct paths sorted by cumulative log-probability.
    pub fn beam_search(
        &self,
        start: EntityId,
        preference: &[f64],
        width: usize,
        n_paths: usize,
    ) -> Result<Vec<ReasonPath>> {
        let width = width.max(1);
        let mut beam = vec![ReasonPath::start(start)];
        while beam.iter().any(|p| !p.terminal) {
            let mut pool = Vec::new();
            for p in &beam {
                if p.terminal {
                    pool.push(p.clone());
                    continue;
                }
                let state = self.state(preference, p);
                let space = self.space(preference, p)?;
                let probs = self.nets.policy(&state, &space, self.emb)?;
                for (a, prob) in space.actions.iter().zip(&probs) {
                    let lp = prob.ln();
                    let next = match a.relation {
                        None => {
                            let mut q = p.clone();
                            q.score += lp;
                            q.terminal = true;
                            q
                        }
                        Some(r) => {
                            let mut q = p.extend(r, a.entity, lp);
                            q.terminal = q.len() >= self.max_len;
                            q
                        }
                    };
                    pool.push(next);
                }
            }
            // Stable sort keeps expansion order on ties, matching greedy argmax.
            pool.sort_by(by_score);
            pool.truncate(width);
            beam = pool;
        }
        let mut out: Vec<ReasonPath> = Vec::new();
        for p in beam {
            if !out.iter().any(|q| q.same_route(&p)) {
                out.push(p);
            }
            if out.len() == n_paths {
                break;
            }
        }
        Ok(out)
    }
}
