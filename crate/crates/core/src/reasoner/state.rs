//! State encoding `u ⊕ e_{t−H} ⊕ r_{t−H+1} ⊕ … ⊕ e_{t−1} ⊕ r_t ⊕ e_t`.

use crate::kg::{EmbeddingTable, ReasonPath};

pub fn state_dim(history: usize, dim: usize) -> usize {
    (2 * history + 2) * dim
}

/// Encodes the walk so far; history slots before `e_0` are zero.
pub fn encode_state(
    preference: &[f64],
    path: &ReasonPath,
    history: usize,
    emb: &EmbeddingTable,
) -> Vec<f64> {
    let d = emb.dim;
    assert_eq!(preference.len(), d, "preference width");
    let mut out = Vec::with_capacity(state_dim(history, d));
    out.extend_from_slice(preference);
    let t = path.len();
    for j in (1..=history).rev() {
        if t >= j {
            out.extend(emb.entity_vec(path.entities[t - j]));
            out.extend(emb.relation_vec(path.relations[t - j]));
        } else {
            out.extend(std::iter::repeat_n(0.0, 2 * d));
        }
    }
    out.extend(emb.entity_vec(path.last()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId, RelationId};
    use crate::nn::Tensor;

    fn table() -> EmbeddingTable {
        EmbeddingTable {
            dim: 2,
            entities: Tensor::from_vec(2, 2, vec![0.0, 1.0, 2.0, 2.0]),
            relations: Tensor::from_vec(1, 2, vec![1.0, 1.0]),
        }
    }

    #[test]
    fn hand_vectors() {
        let p = ReasonPath::from_hops(EntityId(0), &[(RelationId(0), EntityId(1))]);
        assert_eq!(
            encode_state(&[1.0, 0.0], &p, 1, &table()),
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0]
        );
    }

    #[test]
    fn start_state_is_padded() {
        let p = ReasonPath::start(EntityId(1));
        let s = encode_state(&[1.0, 0.0], &p, 1, &table());
        assert_eq!(s, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 2.0]);
        assert_eq!(state_dim(1, 128), 512);
        let p2 = ReasonPath::from_hops(EntityId(0), &[(RelationId(0), EntityId(1))]);
        assert_eq!(
            encode_state(&[0.0, 0.0], &p2, 2, &table()).len(),
            state_dim(2, 2)
        );
    }
}
