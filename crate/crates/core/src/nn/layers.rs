//! Affine layers, gated recurrent cells, bidirectional encoders and additive attention.

use rand::Rng;

use super::params::{Init, ParamId, ParamStore};
use super::tape::{Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let w = store.add(&format!("{name}.w"), out_dim, in_dim, Init::Xavier, rng);
        let b = bias.then(|| store.add(&format!("{name}.b"), out_dim, 1, Init::Zeros, rng));
        Linear {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let w = t.param(self.w);
        let y = t.matvec(w, x);
        match self.b {
            Some(b) => {
                let bv = t.param(b);
                t.add(y, bv)
            }
            None => y,
        }
    }
}

/// Gated recurrent unit with gate order (reset, update, candidate).
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b_x: ParamId,
    pub b_h: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let a = 1.0 / (hidden as f64).sqrt();
        GruCell {
            w_x: store.add(
                &format!("{name}.w_x"),
                3 * hidden,
                input,
                Init::Uniform(a),
                rng,
            ),
            w_h: store.add(
                &format!("{name}.w_h"),
                3 * hidden,
                hidden,
                Init::Uniform(a),
                rng,
            ),
            b_x: store.add(&format!("{name}.b_x"), 3 * hidden, 1, Init::Zeros, rng),
            b_h: store.add(&format!("{name}.b_h"), 3 * hidden, 1, Init::Zeros, rng),
            input,
            hidden,
        }
    }

    /// Input-side pre-activations `W_x x + b_x`; reusable across time steps.
    pub fn input_gates(&self, t: &mut Tape, x: Var) -> Var {
        let w = t.param(self.w_x);
        let b = t.param(self.b_x);
        let gx = t.matvec(w, x);
        t.add(gx, b)
    }

    pub fn step_with_gates(&self, t: &mut Tape, gx: Var, h: Var) -> Var {
        let n = self.hidden;
        let w = t.param(self.w_h);
        let b = t.param(self.b_h);
        let gh = t.matvec(w, h);
        let gh = t.add(gh, b);
        let xr = t.slice(gx, 0, n);
        let hr = t.slice(gh, 0, n);
        let r = t.add(xr, hr);
        let r = t.sigmoid(r);
        let xz = t.slice(gx, n, n);
        let hz = t.slice(gh, n, n);
        let z = t.add(xz, hz);
        let z = t.sigmoid(z);
        let xn = t.slice(gx, 2 * n, n);
        let hn = t.slice(gh, 2 * n, n);
        let rn = t.mul(r, hn);
        let cand = t.add(xn, rn);
        let cand = t.tanh(cand);
        // h' = cand + z ⊙ (h - cand)
        let diff = t.sub(h, cand);
        let zd = t.mul(z, diff);
        t.add(cand, zd)
    }

    pub fn step(&self, t: &mut Tape, x: Var, h: Var) -> Var {
        let gx = self.input_gates(t, x);
        self.step_with_gates(t, gx, h)
    }
}

/// Output of a bidirectional encoder.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// Per-token states `[h_fwd ; h_bwd]` of the top layer.
    pub states: Vec<Var>,
    /// `[h_N^fwd ; h_1^bwd]` of the top layer.
    pub summary: Var,
}

/// Stacked bidirectional GRU.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub layers: Vec<(GruCell, GruCell)>,
    pub hidden: usize,
}

impl BiGru {
    /// `hidden` is the width of one direction; states are `2 * hidden` wide.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..layers.max(1))
            .map(|l| {
                let inp = if l == 0 { input } else { 2 * hidden };
                (
                    GruCell::new(store, &format!("{name}.l{l}.fwd"), inp, hidden, rng),
                    GruCell::new(store, &format!("{name}.l{l}.bwd"), inp, hidden, rng),
                )
            })
            .collect();
        BiGru { layers, hidden }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn forward(&self, t: &mut Tape, inputs: &[Var]) -> Encoded {
        assert!(!inputs.is_empty(), "encoder input must be non-empty");
        let n = inputs.len();
        let mut xs = inputs.to_vec();
        let mut summary = None;
        for (fwd, bwd) in &self.layers {
            let zero = t.constant(vec![0.0; self.hidden]);
            let mut hf = Vec::with_capacity(n);
            let mut h = zero;
            for x in &xs {
                h = fwd.step(t, *x, h);
                hf.push(h);
            }
            let mut hb = vec![zero; n];
            let mut h = zero;
            for i in (0..n).rev() {
                h = bwd.step(t, xs[i], h);
                hb[i] = h;
            }
            xs = (0..n).map(|i| t.concat(&[hf[i], hb[i]])).collect();
            summary = Some(t.concat(&[hf[n - 1], hb[0]]));
        }
        Encoded {
            states: xs,
            summary: summary.expect("at least one layer"),
        }
    }
}

/// Additive (concat-score) attention: `score_j = vᵀ tanh(W_k k_j + W_q q + b)`.
#[derive(Debug, Clone, Copy)]
pub struct AdditiveAttention {
    pub w_key: ParamId,
    pub w_query: ParamId,
    pub bias: ParamId,
    pub v: ParamId,
    pub key_dim: usize,
    pub query_dim: usize,
}

/// Keys prepared once per sequence for repeated attention queries.
#[derive(Debug, Clone, Copy)]
pub struct AttentionKeys {
    pub keys: Var,
    pub projected: Var,
    pub len: usize,
}

impl AdditiveAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        key_dim: usize,
        query_dim: usize,
        attn_dim: usize,
        rng: &mut R,
    ) -> Self {
        AdditiveAttention {
            w_key: store.add(
                &format!("{name}.w_key"),
                attn_dim,
                key_dim,
                Init::Xavier,
                rng,
            ),
            w_query: store.add(
                &format!("{name}.w_query"),
                attn_dim,
                query_dim,
                Init::Xavier,
                rng,
            ),
            bias: store.add(&format!("{name}.b"), attn_dim, 1, Init::Zeros, rng),
            v: store.add(&format!("{name}.v"), attn_dim, 1, Init::Xavier, rng),
            key_dim,
            query_dim,
        }
    }

    pub fn prepare(&self, t: &mut Tape, keys: &[Var]) -> AttentionKeys {
        let w = t.param(self.w_key);
        let projected: Vec<Var> = keys.iter().map(|k| t.matvec(w, *k)).collect();
        AttentionKeys {
            keys: t.stack_rows(keys),
            projected: t.stack_rows(&projected),
            len: keys.len(),
        }
    }

    /// Returns `(weights, weighted sum of keys)`.
    pub fn attend(&self, t: &mut Tape, keys: &AttentionKeys, query: Var) -> (Var, Var) {
        let wq = t.param(self.w_query);
        let b = t.param(self.bias);
        let q = t.matvec(wq, query);
        let q = t.add(q, b);
        let e = t.add_rows(keys.projected, q);
        let e = t.tanh(e);
        let v = t.param(self.v);
        let scores = t.matvec(e, v);
        let weights = t.softmax(scores);
        let ctx = t.vecmat(weights, keys.keys);
        (weights, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Tensor;
    use crate::nn::tape::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gru_zero_parameters_stay_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let enc = BiGru::new(&mut store, "enc", 3, 2, 1, &mut rng);
        for id in 0..store.len() {
            store.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut t = Tape::new(&store);
        let xs: Vec<Var> = (0..4)
            .map(|i| t.constant(vec![i as f64, 1.0, -2.0]))
            .collect();
        let out = enc.forward(&mut t, &xs);
        for s in out.states {
            assert!(t.value(s).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn gru_cell_matches_hand_recurrence() {
        // Hidden 2, input 1; hand-unrolled for two steps.
        let mut store = ParamStore::new();
        let w_x = store.insert(
            "w_x",
            Tensor::from_vec(6, 1, vec![0.5, -0.3, 0.2, 0.1, 0.7, -0.4]),
        );
        let w_h = store.insert(
            "w_h",
            Tensor::from_vec(
                6,
                2,
                vec![
                    0.1, 0.2, -0.1, 0.3, 0.2, -0.2, 0.05, 0.1, 0.3, -0.3, 0.2, 0.4,
                ],
            ),
        );
        let b_x = store.insert(
            "b_x",
            Tensor::from_vec(6, 1, vec![0.0, 0.1, 0.0, -0.1, 0.05, 0.0]),
        );
        let b_h = store.insert(
            "b_h",
            Tensor::from_vec(6, 1, vec![0.02, 0.0, 0.0, 0.0, 0.0, 0.1]),
        );
        let cell = GruCell {
            w_x,
            w_h,
            b_x,
            b_h,
            input: 1,
            hidden: 2,
        };
        let hand = |x: f64, h: [f64; 2]| -> [f64; 2] {
            let wx = &store.get(w_x).data;
            let wh = &store.get(w_h).data;
            let bx = &store.get(b_x).data;
            let bh = &store.get(b_h).data;
            let gx: Vec<f64> = (0..6).map(|i| wx[i] * x + bx[i]).collect();
            let gh: Vec<f64> = (0..6)
                .map(|i| wh[2 * i] * h[0] + wh[2 * i + 1] * h[1] + bh[i])
                .collect();
            let mut out = [0.0; 2];
            for k in 0..2 {
                let r = sigmoid(gx[k] + gh[k]);
                let z = sigmoid(gx[2 + k] + gh[2 + k]);
                let n = (gx[4 + k] + r * gh[4 + k]).tanh();
                out[k] = (1.0 - z) * n + z * h[k];
            }
            out
        };
        let h1 = hand(1.5, [0.0, 0.0]);
        let h2 = hand(-0.7, h1);
        let mut t = Tape::new(&store);
        let h0 = t.constant(vec![0.0, 0.0]);
        let x1 = t.constant(vec![1.5]);
        let x2 = t.constant(vec![-0.7]);
        let a = cell.step(&mut t, x1, h0);
        let b = cell.step(&mut t, x2, a);
        for (got, want) in t.value(b).iter().zip(h2) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn single_token_summary_concatenates_both_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let enc = BiGru::new(&mut store, "enc", 2, 3, 1, &mut rng);
        let mut t = Tape::new(&store);
        let x = t.constant(vec![0.3, -0.2]);
        let out = enc.forward(&mut t, &[x]);
        assert_eq!(out.states.len(), 1);
        assert_eq!(t.value(out.states[0]), t.value(out.summary));
    }

    #[test]
    fn attention_over_identical_keys_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let att = AdditiveAttention::new(&mut store, "att", 3, 2, 4, &mut rng);
        let mut t = Tape::new(&store);
        let k = t.constant(vec![0.1, 0.2, 0.3]);
        let q = t.constant(vec![1.0, -1.0]);
        let keys = att.prepare(&mut t, &[k, k, k]);
        let (w, ctx) = att.attend(&mut t, &keys, q);
        for v in t.value(w) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        for (a, b) in t.value(ctx).iter().zip([0.1, 0.2, 0.3]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
