//! Decoder forward pass with the activation cache consumed by
//! [`backward`](super::backward).

use crate::error::{Error, Result};
use crate::mask::FeatureMap;
use crate::scalar::Scalar;

use super::linalg::Mat;
use super::{LayerNorm, TopoNetParams, TopoSample};

/// Layer-norm variance epsilon.
pub(crate) const LN_EPS: f64 = 1e-5;

#[inline]
pub(crate) fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// Per-block activations kept for the backward pass. Residual inputs
/// need no caching: their gradients are pure pass-throughs.
pub(crate) struct BlockCache<S> {
    pub xhat1: Mat<S>,
    pub istd1: Vec<S>,
    pub a_hat: Mat<S>,
    pub q: Mat<S>,
    pub k: Mat<S>,
    pub v: Mat<S>,
    /// One `k x k` attention matrix per head.
    pub attn: Vec<Mat<S>>,
    pub ctx: Mat<S>,
    pub xhat2: Mat<S>,
    pub istd2: Vec<S>,
    pub b_hat: Mat<S>,
    pub a1: Mat<S>,
}

pub(crate) struct Cache<S> {
    pub x: Mat<S>,
    pub blocks: Vec<BlockCache<S>>,
    pub h_final: Mat<S>,
}

/// Forward result. `probs` is index-aligned with the sample's slots;
/// invalid slots receive the network's input-free prior
/// `sigmoid(head bias)` and never participate in the computation.
/// `logits[i]` belongs to slot `valid_idx[i]`.
pub struct TopoOutput<S> {
    pub probs: Vec<S>,
    pub logits: Vec<S>,
    pub valid_idx: Vec<usize>,
    pub(crate) cache: Cache<S>,
}

/// Normalize each row of `h`: returns `(gamma * xhat + beta, xhat,
/// 1/std)` with the biased variance over the model dimension.
pub(crate) fn layer_norm_rows<S: Scalar>(
    h: &Mat<S>,
    ln: &LayerNorm<S>,
) -> (Mat<S>, Mat<S>, Vec<S>) {
    let (rows, cols) = (h.rows(), h.cols());
    let mut out = Mat::zeros(rows, cols);
    let mut xhat = Mat::zeros(rows, cols);
    let mut istd = vec![S::zero(); rows];
    let inv_d = S::one() / S::of(cols as f64);
    for r in 0..rows {
        let row = h.row(r);
        let mean = row.iter().copied().sum::<S>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() * inv_d;
        let inv = S::one() / (var + S::of(LN_EPS)).sqrt();
        istd[r] = inv;
        for c in 0..cols {
            let xh = (row[c] - mean) * inv;
            xhat.set(r, c, xh);
            out.set(r, c, ln.gamma[c] * xh + ln.beta[c]);
        }
    }
    (out, xhat, istd)
}

fn softmax_row_in_place<S: Scalar>(row: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Build the compacted per-slot input matrix: row `i` is
/// `concat(F(source), F(target_i), (target_i - source) / r_nbr)` for
/// the `i`-th valid slot.
pub(crate) fn featurize<S: Scalar>(
    params: &TopoNetParams<S>,
    fmap: &FeatureMap<S>,
    sample: &TopoSample<S>,
) -> Result<(Mat<S>, Vec<usize>)> {
    let cfg = &params.cfg;
    if fmap.channels() != cfg.d_feat {
        return Err(Error::Shape(format!(
            "feature map has {} channels, decoder expects {}",
            fmap.channels(),
            cfg.d_feat
        )));
    }
    if sample.targets.len() != sample.valid.len() || sample.targets.len() != sample.labels.len() {
        return Err(Error::Shape("sample slot arrays disagree".into()));
    }
    let valid_idx: Vec<usize> =
        (0..sample.targets.len()).filter(|&i| sample.valid[i]).collect();
    let mut src_feat = vec![S::zero(); cfg.d_feat];
    if !valid_idx.is_empty() {
        fmap.sample_into(sample.source, &mut src_feat)?;
    }
    let r_nbr = S::of(cfg.r_nbr);
    let mut x = Mat::zeros(valid_idx.len(), cfg.input_dim());
    let mut tgt_feat = vec![S::zero(); cfg.d_feat];
    for (row, &slot) in valid_idx.iter().enumerate() {
        let tgt = sample.targets[slot];
        fmap.sample_into(tgt, &mut tgt_feat)?;
        let out = x.row_mut(row);
        out[..cfg.d_feat].copy_from_slice(&src_feat);
        out[cfg.d_feat..2 * cfg.d_feat].copy_from_slice(&tgt_feat);
        out[2 * cfg.d_feat] = (tgt.x - sample.source.x) / r_nbr;
        out[2 * cfg.d_feat + 1] = (tgt.y - sample.source.y) / r_nbr;
    }
    Ok((x, valid_idx))
}

/// Run the decoder on one sample. See [`TopoOutput`] for the contract
/// on valid versus padding slots.
pub fn forward<S: Scalar>(
    params: &TopoNetParams<S>,
    fmap: &FeatureMap<S>,
    sample: &TopoSample<S>,
) -> Result<TopoOutput<S>> {
    params.cfg.validate()?;
    let (x, valid_idx) = featurize(params, fmap, sample)?;
    let cfg = &params.cfg;
    let k_slots = valid_idx.len();
    let (n_heads, dh) = (cfg.n_heads, cfg.head_dim());
    let scale = S::one() / S::of((dh as f64).sqrt());

    let mut h = x.matmul(&params.in_proj.w);
    h.add_row_bias(&params.in_proj.b);

    let mut blocks = Vec::with_capacity(params.blocks.len());
    for bp in &params.blocks {
        let (a_hat, xhat1, istd1) = layer_norm_rows(&h, &bp.ln1);
        let mut q = a_hat.matmul(&bp.wq.w);
        q.add_row_bias(&bp.wq.b);
        let mut key = a_hat.matmul(&bp.wk.w);
        key.add_row_bias(&bp.wk.b);
        let mut v = a_hat.matmul(&bp.wv.w);
        v.add_row_bias(&bp.wv.b);

        let mut attn = Vec::with_capacity(n_heads);
        let mut ctx = Mat::zeros(k_slots, cfg.d_model);
        for head in 0..n_heads {
            let lo = head * dh;
            let mut scores = Mat::zeros(k_slots, k_slots);
            for i in 0..k_slots {
                let qi = &q.row(i)[lo..lo + dh];
                for j in 0..k_slots {
                    let kj = &key.row(j)[lo..lo + dh];
                    let dot: S = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum();
                    scores.set(i, j, dot * scale);
                }
            }
            for i in 0..k_slots {
                softmax_row_in_place(scores.row_mut(i));
            }
            for i in 0..k_slots {
                for j in 0..k_slots {
                    let w = scores.get(i, j);
                    let vj = &v.row(j)[lo..lo + dh];
                    let ci = &mut ctx.row_mut(i)[lo..lo + dh];
                    for (c, &vv) in ci.iter_mut().zip(vj) {
                        *c += w * vv;
                    }
                }
            }
            attn.push(scores);
        }
        let mut attn_out = ctx.matmul(&bp.wo.w);
        attn_out.add_row_bias(&bp.wo.b);
        let mut h_mid = h;
        h_mid.add_assign(&attn_out);

        let (b_hat, xhat2, istd2) = layer_norm_rows(&h_mid, &bp.ln2);
        let mut z1 = b_hat.matmul(&bp.w1.w);
        z1.add_row_bias(&bp.w1.b);
        let mut a1 = z1;
        for vv in a1.data_mut() {
            if *vv < S::zero() {
                *vv = S::zero();
            }
        }
        let mut z2 = a1.matmul(&bp.w2.w);
        z2.add_row_bias(&bp.w2.b);
        let mut h_out = h_mid;
        h_out.add_assign(&z2);

        blocks.push(BlockCache {
            xhat1,
            istd1,
            a_hat,
            q,
            k: key,
            v,
            attn,
            ctx,
            xhat2,
            istd2,
            b_hat,
            a1,
        });
        h = h_out;
    }

    let mut logits = Vec::with_capacity(k_slots);
    for i in 0..k_slots {
        let dot: S =
            h.row(i).iter().zip(params.head.w.data()).map(|(&a, &b)| a * b).sum();
        logits.push(dot + params.head.b[0]);
    }
    let prior = sigmoid(params.head.b[0]);
    let mut probs = vec![prior; sample.targets.len()];
    for (slot_pos, &slot) in valid_idx.iter().enumerate() {
        probs[slot] = sigmoid(logits[slot_pos]);
    }
    Ok(TopoOutput { probs, logits, valid_idx, cache: Cache { x, blocks, h_final: h } })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::toponet::TopoNetConfig;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn test_cfg() -> TopoNetConfig {
        TopoNetConfig { d_feat: 4, d_model: 8, n_heads: 2, n_blocks: 2, ffn_mult: 4, r_nbr: 16.0 }
    }

    pub(crate) fn test_fmap(seed: u64) -> FeatureMap<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..4 * 4 * 4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        FeatureMap::new(4, 4, 4, 8, data).unwrap()
    }

    pub(crate) fn test_sample(seed: u64, slots: usize) -> TopoSample<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let source = Point::new(rng.random::<f64>() * 24.0 + 4.0, rng.random::<f64>() * 24.0 + 4.0);
        let targets: Vec<Point<f64>> = (0..slots)
            .map(|_| {
                Point::new(
                    (source.x + rng.random::<f64>() * 12.0 - 6.0).clamp(0.0, 31.0),
                    (source.y + rng.random::<f64>() * 12.0 - 6.0).clamp(0.0, 31.0),
                )
            })
            .collect();
        let valid = (0..slots).map(|i| i % 3 != 2).collect();
        let labels = (0..slots).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        TopoSample { source, targets, valid, labels }
    }

    #[test]
    fn output_is_aligned_and_in_unit_interval() {
        let params = TopoNetParams::init(test_cfg(), 1).unwrap();
        let fmap = test_fmap(2);
        let sample = test_sample(3, 7);
        let out = forward(&params, &fmap, &sample).unwrap();
        assert_eq!(out.probs.len(), 7);
        assert_eq!(out.valid_idx, vec![0, 1, 3, 4, 6]);
        assert_eq!(out.logits.len(), 5);
        assert!(out.probs.iter().all(|p| *p > 0.0 && *p < 1.0));
        for (pos, &slot) in out.valid_idx.iter().enumerate() {
            assert_eq!(out.probs[slot], sigmoid(out.logits[pos]));
        }
    }

    #[test]
    fn padding_slots_cannot_influence_valid_outputs() {
        let params = TopoNetParams::init(test_cfg(), 5).unwrap();
        let fmap = test_fmap(6);
        let mut sample = test_sample(7, 6);
        sample.valid = vec![true; 6];
        let base = forward(&params, &fmap, &sample).unwrap();

        // Turn two slots into padding and scramble their contents; the
        // surviving slots' probabilities must be bit-identical.
        let mut padded = sample.clone();
        padded.valid[1] = false;
        padded.valid[4] = false;
        padded.targets[1] = Point::new(f64::NAN, f64::NAN);
        padded.targets[4] = Point::new(31.0, 0.0);
        padded.labels[1] = 1.0;
        let compact = TopoSample {
            source: sample.source,
            targets: vec![sample.targets[0], sample.targets[2], sample.targets[3], sample.targets[5]],
            valid: vec![true; 4],
            labels: vec![sample.labels[0], sample.labels[2], sample.labels[3], sample.labels[5]],
        };
        let padded_out = forward(&params, &fmap, &padded).unwrap();
        let compact_out = forward(&params, &fmap, &compact).unwrap();
        assert_eq!(padded_out.logits, compact_out.logits);
        for (&a, &b) in [0usize, 2, 3, 5].iter().zip([0usize, 1, 2, 3].iter()) {
            assert_eq!(padded_out.probs[a], compact_out.probs[b]);
        }
        assert!((0..6).any(|i| base.probs[i] != padded_out.probs[i]));
        // Padding slots report the input-free prior.
        assert_eq!(padded_out.probs[1], sigmoid(params.head.b[0]));
    }

    #[test]
    fn slot_order_permutes_outputs_equivariantly() {
        let params = TopoNetParams::init(test_cfg(), 11).unwrap();
        let fmap = test_fmap(12);
        let mut sample = test_sample(13, 5);
        sample.valid = vec![true; 5];
        let base = forward(&params, &fmap, &sample).unwrap();
        let perm = [3usize, 0, 4, 2, 1];
        let permuted = TopoSample {
            source: sample.source,
            targets: perm.iter().map(|&i| sample.targets[i]).collect(),
            valid: vec![true; 5],
            labels: perm.iter().map(|&i| sample.labels[i]).collect(),
        };
        let out = forward(&params, &fmap, &permuted).unwrap();
        for (new_pos, &old_pos) in perm.iter().enumerate() {
            assert_relative_eq!(out.probs[new_pos], base.probs[old_pos], epsilon = 1e-12);
        }
    }

    #[test]
    fn all_padding_sample_yields_prior_only() {
        let params = TopoNetParams::init(test_cfg(), 1).unwrap();
        let fmap = test_fmap(2);
        let mut sample = test_sample(3, 4);
        sample.valid = vec![false; 4];
        // Even unsampleable coordinates are fine: padding is never touched.
        sample.targets[0] = Point::new(-100.0, -100.0);
        sample.source = Point::new(f64::NAN, f64::NAN);
        let out = forward(&params, &fmap, &sample).unwrap();
        assert!(out.logits.is_empty());
        assert!(out.probs.iter().all(|&p| p == sigmoid(params.head.b[0])));
    }

    #[test]
    fn channel_mismatch_is_a_shape_error() {
        let params = TopoNetParams::init(test_cfg(), 1).unwrap();
        let bad = FeatureMap::<f64>::new(4, 4, 3, 8, vec![0.0; 48]).unwrap();
        let sample = test_sample(3, 4);
        assert!(matches!(forward(&params, &bad, &sample), Err(Error::Shape(_))));
    }

    #[test]
    fn offsets_are_normalized_by_r_nbr() {
        let params = TopoNetParams::<f64>::init(test_cfg(), 1).unwrap();
        let fmap = test_fmap(2);
        let sample = TopoSample {
            source: Point::new(10.0, 10.0),
            targets: vec![Point::new(18.0, 6.0)],
            valid: vec![true],
            labels: vec![1.0],
        };
        let (x, _) = featurize(&params, &fmap, &sample).unwrap();
        assert_relative_eq!(x.get(0, 8), 0.5, epsilon = 1e-15);
        assert_relative_eq!(x.get(0, 9), -0.25, epsilon = 1e-15);
    }
}
