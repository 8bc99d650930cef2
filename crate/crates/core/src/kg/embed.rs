//! Translational entity/relation embeddings trained with a margin-ranking loss.
//!
//! A triplet `(h, r, t)` is scored by the L2 distance `‖h + r − t‖`; each true
//! triplet is contrasted with one corruption that replaces the head or the
//! tail (probability 0.5 each) by a uniformly drawn entity.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{EntityId, KnowledgeGraph, RelationId, Triplet};
use crate::error::{DicrError, Result};
use crate::nn::params::{read_f64s, read_u32, read_u64};
use crate::nn::Tensor;

pub const EMBEDDING_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DEMB";

/// Entity and relation vectors of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub entities: Tensor,
    pub relations: Tensor,
}

impl EmbeddingTable {
    pub fn zeros(num_entities: usize, num_relations: usize, dim: usize) -> Self {
        EmbeddingTable {
            dim,
            entities: Tensor::zeros(num_entities, dim),
            relations: Tensor::zeros(num_relations, dim),
        }
    }

    /// Entity row, or the zero vector for entities outside the table.
    pub fn entity_vec(&self, e: EntityId) -> Vec<f64> {
        if e.0 < self.entities.rows {
            self.entities.row(e.0).to_vec()
        } else {
            vec![0.0; self.dim]
        }
    }

    pub fn relation_vec(&self, r: RelationId) -> Vec<f64> {
        if r.0 < self.relations.rows {
            self.relations.row(r.0).to_vec()
        } else {
            vec![0.0; self.dim]
        }
    }

    /// `‖h + r − t‖₂`.
    pub fn distance(&self, t: Triplet) -> f64 {
        let h = self.entities.row(t.head.0);
        let r = self.relations.row(t.relation.0);
        let tl = self.entities.row(t.tail.0);
        (0..self.dim)
            .map(|k| {
                let d = h[k] + r[k] - tl[k];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.entities.data.iter().all(|v| v.is_finite())
            && self.relations.data.iter().all(|v| v.is_finite())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&EMBEDDING_FORMAT_VERSION.to_le_bytes())?;
        for n in [self.dim, self.entities.rows, self.relations.rows] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in self.entities.data.iter().chain(&self.relations.data) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(DicrError::Checkpoint("not an embedding checkpoint".into()));
        }
        let version = read_u32(r)?;
        if version != EMBEDDING_FORMAT_VERSION {
            return Err(DicrError::Version(format!(
                "embedding format version {version}, expected {EMBEDDING_FORMAT_VERSION}"
            )));
        }
        let dim = read_u64(r)? as usize;
        let ne = read_u64(r)? as usize;
        let nr = read_u64(r)? as usize;
        let entities = Tensor::from_vec(ne, dim, read_f64s(r, ne * dim)?);
        let relations = Tensor::from_vec(nr, dim, read_f64s(r, nr * dim)?);
        Ok(EmbeddingTable {
            dim,
            entities,
            relations,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| DicrError::path(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| DicrError::path(path, e))?;
        Self::read_from(&mut bytes.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct TransEConfig {
    pub dim: usize,
    pub epochs: usize,
    pub margin: f64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TransEConfig {
    fn default() -> Self {
        TransEConfig {
            dim: 128,
            epochs: 100,
            margin: 1.0,
            lr: 0.01,
            seed: 0,
        }
    }
}

/// Trained table plus the mean margin loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainedEmbeddings {
    pub table: EmbeddingTable,
    pub epoch_losses: Vec<f64>,
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Trains translational embeddings with SGD over shuffled triplets.
pub fn train_embeddings(kg: &KnowledgeGraph, cfg: &TransEConfig) -> Result<TrainedEmbeddings> {
    if cfg.dim < 2 {
        return Err(DicrError::config(format!(
            "embedding dimension must be at least 2, got {}",
            cfg.dim
        )));
    }
    if cfg.epochs == 0 || cfg.margin <= 0.0 || cfg.lr <= 0.0 {
        return Err(DicrError::config(
            "epochs, margin and learning rate must be positive",
        ));
    }
    if kg.num_triplets() == 0 || kg.num_entities() < 2 {
        return Err(DicrError::config("cannot embed an empty knowledge graph"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let bound = 6.0 / (d as f64).sqrt();
    let mut ent = Tensor::from_vec(
        kg.num_entities(),
        d,
        (0..kg.num_entities() * d)
            .map(|_| rng.gen_range(-bound..bound))
            .collect(),
    );
    let mut rel = Tensor::from_vec(
        kg.num_relations(),
        d,
        (0..kg.num_relations() * d)
            .map(|_| rng.gen_range(-bound..bound))
            .collect(),
    );
    for r in 0..rel.rows {
        normalize(rel.row_mut(r));
    }
    let mut order: Vec<Triplet> = kg.triplets().to_vec();
    let n_ent = kg.num_entities();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut diff_pos = vec![0.0; d];
    let mut diff_neg = vec![0.0; d];
    for _ in 0..cfg.epochs {
        for e in 0..ent.rows {
            normalize(ent.row_mut(e));
        }
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &pos in &order {
            let mut neg = pos;
            // Resample until the corruption differs from the true triplet.
            for _ in 0..16 {
                let e = EntityId(rng.gen_range(0..n_ent));
                if rng.gen_bool(0.5) {
                    neg.head = e;
                } else {
                    neg.tail = e;
                }
                if !kg.contains(neg.head, neg.relation, neg.tail) {
                    break;
                }
                neg = pos;
            }
            if neg == pos {
                continue;
            }
            let dp = residual(&ent, &rel, pos, &mut diff_pos);
            let dn = residual(&ent, &rel, neg, &mut diff_neg);
            let loss = cfg.margin + dp - dn;
            if loss <= 0.0 {
                continue;
            }
            total += loss;
            let sp = if dp > 1e-12 { 1.0 / dp } else { 0.0 };
            let sn = if dn > 1e-12 { 1.0 / dn } else { 0.0 };
            for k in 0..d {
                // d‖x‖/dx = x/‖x‖ with x = h + r − t
                let gp = cfg.lr * diff_pos[k] * sp;
                let gn = cfg.lr * diff_neg[k] * sn;
                ent.row_mut(pos.head.0)[k] -= gp;
                ent.row_mut(pos.tail.0)[k] += gp;
                rel.row_mut(pos.relation.0)[k] -= gp - gn;
                ent.row_mut(neg.head.0)[k] += gn;
                ent.row_mut(neg.tail.0)[k] -= gn;
            }
        }
        epoch_losses.push(total / order.len() as f64);
    }
    let table = EmbeddingTable {
        dim: d,
        entities: ent,
        relations: rel,
    };
    if !table.all_finite() {
        return Err(DicrError::Numeric(
            "non-finite embedding after training".into(),
        ));
    }
    Ok(TrainedEmbeddings {
        table,
        epoch_losses,
    })
}

fn residual(ent: &Tensor, rel: &Tensor, t: Triplet, out: &mut [f64]) -> f64 {
    let h = ent.row(t.head.0);
    let r = rel.row(t.relation.0);
    let tl = ent.row(t.tail.0);
    let mut s = 0.0;
    for k in 0..out.len() {
        out[k] = h[k] + r[k] - tl[k];
        s += out[k] * out[k];
    }
    s.sqrt()
}
