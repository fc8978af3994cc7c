use super::params::{AttnIds, Bound};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Additive score offset for disallowed positions; `exp` of it underflows to 0.
pub const MASK_BIAS: f64 = -1e9;

/// Which keys each query may attend to, per batch element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    pub batch: usize,
    pub len_q: usize,
    pub len_k: usize,
    /// `[batch, len_q, len_k]`, `true` where attention is allowed.
    pub allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn full(batch: usize, len_q: usize, len_k: usize) -> Self {
        AttentionMask { batch, len_q, len_k, allowed: vec![true; batch * len_q * len_k] }
    }

    /// Blocks keys flagged as padding in `key_pad` (`[batch, len_k]`).
    pub fn key_padding(len_q: usize, len_k: usize, key_pad: &[bool]) -> Self {
        let batch = key_pad.len() / len_k;
        let mut allowed = Vec::with_capacity(batch * len_q * len_k);
        for b in 0..batch {
            for _ in 0..len_q {
                allowed.extend(key_pad[b * len_k..(b + 1) * len_k].iter().map(|p| !p));
            }
        }
        AttentionMask { batch, len_q, len_k, allowed }
    }

    /// Key padding plus a ban on attending to later positions.
    pub fn causal(len: usize, key_pad: &[bool]) -> Self {
        let mut m = Self::key_padding(len, len, key_pad);
        for b in 0..m.batch {
            for i in 0..len {
                for j in i + 1..len {
                    m.allowed[(b * len + i) * len + j] = false;
                }
            }
        }
        m
    }

    fn bias(&self, n_heads: usize) -> Tensor {
        let per = self.len_q * self.len_k;
        let mut data = Vec::with_capacity(self.batch * n_heads * per);
        for b in 0..self.batch {
            let slab = &self.allowed[b * per..(b + 1) * per];
            for _ in 0..n_heads {
                data.extend(slab.iter().map(|&ok| if ok { 0.0 } else { MASK_BIAS }));
            }
        }
        Tensor::new(&[self.batch * n_heads, self.len_q, self.len_k], data)
            .expect("mask dimensions are positive")
    }
}

/// Output rows plus the `[batch·heads, len_q, len_k]` attention weights.
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Var,
}

pub(crate) fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

/// Scaled dot-product attention over `n_heads` heads.
///
/// `query` is `[batch·len_q, d_model]`; `key` and `value` are
/// `[batch·len_k, d_model]`. Per head the weights are
/// `softmax(QKᵀ/√d_head + mask_bias)`, the head outputs are concatenated and
/// passed through the output projection.
pub(crate) fn multi_head_attention(
    tape: &mut Tape,
    params: &Bound,
    ids: &AttnIds,
    query: Var,
    key: Var,
    value: Var,
    mask: &AttentionMask,
    n_heads: usize,
) -> Result<AttentionOutput> {
    let (sq, sk) = (tape.shape(query).to_vec(), tape.shape(key).to_vec());
    let (b, tq, tk) = (mask.batch, mask.len_q, mask.len_k);
    if sq.len() != 2 || sk.len() != 2 || sq[0] != b * tq || sk[0] != b * tk || tape.shape(value) != sk.as_slice() {
        return Err(Error::shape("multi_head_attention", &sq, &sk));
    }
    let d = sq[1];
    if d % n_heads != 0 || sk[1] != d {
        return Err(Error::shape("multi_head_attention", &sq, &sk));
    }
    let dh = d / n_heads;

    let q = linear(tape, query, params.get(ids.wq), params.get(ids.bq))?;
    let k = linear(tape, key, params.get(ids.wk), params.get(ids.bk))?;
    let v = linear(tape, value, params.get(ids.wv), params.get(ids.bv))?;

    let split = |tape: &mut Tape, x: Var, t: usize| -> Result<Var> {
        let x = tape.reshape(x, &[b, t, n_heads, dh])?;
        let x = tape.swap_axes12(x)?;
        tape.reshape(x, &[b * n_heads, t, dh])
    };
    let qh = split(tape, q, tq)?;
    let kh = split(tape, k, tk)?;
    let vh = split(tape, v, tk)?;

    let scores = tape.batch_matmul(qh, kh, true)?;
    let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
    let bias = tape.constant(mask.bias(n_heads));
    let scores = tape.add(scores, bias)?;
    let weights = tape.softmax(scores, 2)?;

    let ctx = tape.batch_matmul(weights, vh, false)?;
    let ctx = tape.reshape(ctx, &[b, n_heads, tq, dh])?;
    let ctx = tape.swap_axes12(ctx)?;
    let ctx = tape.reshape(ctx, &[b * tq, d])?;
    let output = linear(tape, ctx, params.get(ids.wo), params.get(ids.bo))?;
    Ok(AttentionOutput { output, weights })
}

#[cfg(test)]
mod tests {
    use super::super::params::AttnIds;
    use super::*;

    fn identity_attn(tape: &mut Tape, d: usize) -> (Bound, AttnIds) {
        let eye = Tensor::from_fn(&[d, d], |i| if i / d == i % d { 1.0 } else { 0.0 });
        let zero = Tensor::zeros(&[d]);
        let mut vars = Vec::new();
        for _ in 0..4 {
            vars.push(tape.constant(eye.clone()));
            vars.push(tape.constant(zero.clone()));
        }
        let ids = AttnIds { wq: 0, bq: 1, wk: 2, bk: 3, wv: 4, bv: 5, wo: 6, bo: 7 };
        (Bound { vars }, ids)
    }

    #[test]
    fn single_position_returns_value_row() {
        let mut tape = Tape::new();
        let (bound, ids) = identity_attn(&mut tape, 4);
        let x = tape.constant(Tensor::new(&[1, 4], vec![0.5, -1.0, 2.0, 3.0]).unwrap());
        let out = multi_head_attention(&mut tape, &bound, &ids, x, x, x, &AttentionMask::full(1, 1, 1), 2).unwrap();
        assert_eq!(tape.value(out.output).data(), &[0.5, -1.0, 2.0, 3.0]);
    }

    #[test]
    fn causal_first_row_attends_only_to_itself() {
        let mut tape = Tape::new();
        let (bound, ids) = identity_attn(&mut tape, 2);
        let x = tape.constant(Tensor::from_fn(&[3, 2], |i| i as f64 * 0.7 - 1.0));
        let mask = AttentionMask::causal(3, &[false; 3]);
        let out = multi_head_attention(&mut tape, &bound, &ids, x, x, x, &mask, 1).unwrap();
        let w = tape.value(out.weights).data();
        assert_eq!(w[0], 1.0);
        assert!(w[1] < 1e-12 && w[2] < 1e-12);
        assert!(w[5] < 1e-12);
    }

    #[test]
    fn two_token_identity_instance_matches_hand_softmax() {
        // x0 = (1, 0), x1 = (0, 2), d = 2, one head.
        let mut tape = Tape::new();
        let (bound, ids) = identity_attn(&mut tape, 2);
        let x = tape.constant(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 2.0]).unwrap());
        let out = multi_head_attention(&mut tape, &bound, &ids, x, x, x, &AttentionMask::full(1, 2, 2), 1).unwrap();
        let s = 2f64.sqrt();
        // Row 0 scores: (1, 0)/√2; row 1 scores: (0, 4)/√2.
        let w00 = 1.0 / (1.0 + (-1.0 / s).exp());
        let w11 = 1.0 / (1.0 + (-4.0 / s).exp());
        let want = [w00, 2.0 * (1.0 - w00), 1.0 - w11, 2.0 * w11];
        for (got, want) in tape.value(out.output).data().iter().zip(want) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut tape = Tape::new();
        let (bound, ids) = identity_attn(&mut tape, 2);
        let x = tape.constant(Tensor::zeros(&[3, 2]));
        let r = multi_head_attention(&mut tape, &bound, &ids, x, x, x, &AttentionMask::full(1, 2, 2), 1);
        assert!(r.is_err());
    }
}
