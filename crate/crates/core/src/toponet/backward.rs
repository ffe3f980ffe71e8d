//! Reverse-mode gradients for the decoder. Mirrors
//! [`forward`](super::forward::forward) step by step in reverse; every
//! formula here is pinned by the central-difference tests below.

use crate::scalar::Scalar;

use super::forward::Cache;
use super::linalg::Mat;
use super::TopoNetParams;

/// `dL/dx` for a layer norm given `dL/dxhat`, using the cached
/// normalized values and inverse standard deviations.
fn layer_norm_backward<S: Scalar>(dxhat: &Mat<S>, xhat: &Mat<S>, istd: &[S]) -> Mat<S> {
    let (rows, cols) = (dxhat.rows(), dxhat.cols());
    let mut dx = Mat::zeros(rows, cols);
    let inv_d = S::one() / S::of(cols as f64);
    for r in 0..rows {
        let dxh = dxhat.row(r);
        let xh = xhat.row(r);
        let mean_dxh = dxh.iter().copied().sum::<S>() * inv_d;
        let mean_dxh_xh = dxh.iter().zip(xh).map(|(&a, &b)| a * b).sum::<S>() * inv_d;
        let out = dx.row_mut(r);
        for c in 0..cols {
            out[c] = istd[r] * (dxh[c] - mean_dxh - xh[c] * mean_dxh_xh);
        }
    }
    dx
}

/// Accumulate `dL/d(all parameters)` for one sample given
/// `dL/dlogits` over the compacted valid slots. Input featurization is
/// parameter-free, so nothing propagates into the feature map.
pub(crate) fn backward<S: Scalar>(
    params: &TopoNetParams<S>,
    cache: &Cache<S>,
    dlogits: &[S],
) -> TopoNetParams<S> {
    let cfg = &params.cfg;
    let k_slots = cache.h_final.rows();
    assert_eq!(dlogits.len(), k_slots, "dlogits must cover the valid slots");
    let d = cfg.d_model;
    let (n_heads, dh_dim) = (cfg.n_heads, cfg.head_dim());
    let scale = S::one() / S::of((dh_dim as f64).sqrt());
    let mut g = params.zeros_like();

    // Head: logit_i = h_i . w + b.
    let mut dh = Mat::zeros(k_slots, d);
    for i in 0..k_slots {
        let dz = dlogits[i];
        g.head.b[0] += dz;
        for c in 0..d {
            g.head.w.add_assign_at(c, 0, dz * cache.h_final.get(i, c));
            dh.set(i, c, dz * params.head.w.get(c, 0));
        }
    }

    for (bi, (bp, bc)) in params.blocks.iter().zip(cache.blocks.iter()).enumerate().rev() {
        let gb = &mut g.blocks[bi];

        // h_out = h_mid + z2, z2 = relu(z1) W2 + b2, z1 = b_hat W1 + b1.
        let dz2 = &dh;
        gb.w2.w.add_assign(&bc.a1.matmul_t_self(dz2));
        for (acc, v) in gb.w2.b.iter_mut().zip(dz2.col_sum()) {
            *acc += v;
        }
        let da1 = dz2.matmul_t_rhs(&bp.w2.w);
        let mut dz1 = da1;
        for (v, &a) in dz1.data_mut().iter_mut().zip(bc.a1.data()) {
            if a <= S::zero() {
                *v = S::zero();
            }
        }
        gb.w1.w.add_assign(&bc.b_hat.matmul_t_self(&dz1));
        for (acc, v) in gb.w1.b.iter_mut().zip(dz1.col_sum()) {
            *acc += v;
        }
        let db_hat = dz1.matmul_t_rhs(&bp.w1.w);

        // b_hat = gamma2 * xhat2 + beta2.
        let mut dxhat2 = Mat::zeros(k_slots, d);
        for r in 0..k_slots {
            for c in 0..d {
                let dbh = db_hat.get(r, c);
                gb.ln2.gamma[c] += dbh * bc.xhat2.get(r, c);
                gb.ln2.beta[c] += dbh;
                dxhat2.set(r, c, dbh * bp.ln2.gamma[c]);
            }
        }
        let mut dh_mid = layer_norm_backward(&dxhat2, &bc.xhat2, &bc.istd2);
        dh_mid.add_assign(&dh); // residual path h_out = h_mid + z2

        // h_mid = h_in + attn_out, attn_out = ctx Wo + bo.
        let dattn_out = &dh_mid;
        gb.wo.w.add_assign(&bc.ctx.matmul_t_self(dattn_out));
        for (acc, v) in gb.wo.b.iter_mut().zip(dattn_out.col_sum()) {
            *acc += v;
        }
        let dctx = dattn_out.matmul_t_rhs(&bp.wo.w);

        let mut dq = Mat::zeros(k_slots, d);
        let mut dk = Mat::zeros(k_slots, d);
        let mut dv = Mat::zeros(k_slots, d);
        for head in 0..n_heads {
            let lo = head * dh_dim;
            let attn = &bc.attn[head];
            for i in 0..k_slots {
                let dctx_i = &dctx.row(i)[lo..lo + dh_dim];
                // dL/dattn_ij and the softmax Jacobian within row i.
                let mut dattn_row = vec![S::zero(); k_slots];
                let mut row_dot = S::zero();
                for j in 0..k_slots {
                    let vj = &bc.v.row(j)[lo..lo + dh_dim];
                    let da: S = dctx_i.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                    dattn_row[j] = da;
                    row_dot += attn.get(i, j) * da;
                }
                for j in 0..k_slots {
                    let a_ij = attn.get(i, j);
                    let ds = a_ij * (dattn_row[j] - row_dot) * scale;
                    // scores_ij = scale * q_i . k_j
                    let kj = &bc.k.row(j)[lo..lo + dh_dim];
                    let qi = &bc.q.row(i)[lo..lo + dh_dim];
                    {
                        let dq_i = &mut dq.row_mut(i)[lo..lo + dh_dim];
                        for (dqv, &kv) in dq_i.iter_mut().zip(kj) {
                            *dqv += ds * kv;
                        }
                    }
                    {
                        let dk_j = &mut dk.row_mut(j)[lo..lo + dh_dim];
                        for (dkv, &qv) in dk_j.iter_mut().zip(qi) {
                            *dkv += ds * qv;
                        }
                    }
                    let dv_j = &mut dv.row_mut(j)[lo..lo + dh_dim];
                    for (dvv, &dc) in dv_j.iter_mut().zip(dctx_i) {
                        *dvv += a_ij * dc;
                    }
                }
            }
        }

        gb.wq.w.add_assign(&bc.a_hat.matmul_t_self(&dq));
        for (acc, v) in gb.wq.b.iter_mut().zip(dq.col_sum()) {
            *acc += v;
        }
        gb.wk.w.add_assign(&bc.a_hat.matmul_t_self(&dk));
        for (acc, v) in gb.wk.b.iter_mut().zip(dk.col_sum()) {
            *acc += v;
        }
        gb.wv.w.add_assign(&bc.a_hat.matmul_t_self(&dv));
        for (acc, v) in gb.wv.b.iter_mut().zip(dv.col_sum()) {
            *acc += v;
        }
        let mut da_hat = dq.matmul_t_rhs(&bp.wq.w);
        da_hat.add_assign(&dk.matmul_t_rhs(&bp.wk.w));
        da_hat.add_assign(&dv.matmul_t_rhs(&bp.wv.w));

        // a_hat = gamma1 * xhat1 + beta1.
        let mut dxhat1 = Mat::zeros(k_slots, d);
        for r in 0..k_slots {
            for c in 0..d {
                let dah = da_hat.get(r, c);
                gb.ln1.gamma[c] += dah * bc.xhat1.get(r, c);
                gb.ln1.beta[c] += dah;
                dxhat1.set(r, c, dah * bp.ln1.gamma[c]);
            }
        }
        let mut dh_in = layer_norm_backward(&dxhat1, &bc.xhat1, &bc.istd1);
        dh_in.add_assign(&dh_mid); // residual path h_mid = h_in + attn_out
        dh = dh_in;
    }

    // h0 = x W_in + b_in.
    g.in_proj.w.add_assign(&cache.x.matmul_t_self(&dh));
    for (acc, v) in g.in_proj.b.iter_mut().zip(dh.col_sum()) {
        *acc += v;
    }
    g
}

#[cfg(test)]
mod tests {
    use rayon::prelude::*;

    use crate::toponet::forward::tests::{test_cfg, test_fmap, test_sample};
    use crate::toponet::loss::loss_and_grads;
    use crate::toponet::TopoNetParams;

    /// Central-difference check over every parameter: the analytic
    /// gradient of the clamped-BCE loss must match (f64, h = 1e-4,
    /// relative error under 1e-3 with an absolute floor of 1e-6 in the
    /// denominator).
    #[test]
    fn gradients_match_central_differences() {
        let params = TopoNetParams::<f64>::init(test_cfg(), 42).unwrap();
        let fmap = test_fmap(43);
        let sample = test_sample(44, 8);
        assert!(sample.valid_count() >= 4, "test sample must exercise attention");

        let (loss, grads) = loss_and_grads(&params, &fmap, &sample).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        let analytic = grads.flatten();
        let flat = params.flatten();
        let h = 1e-4;

        let max_rel = (0..flat.len())
            .into_par_iter()
            .map(|i| {
                let eval = |delta: f64| {
                    let mut p = params.clone();
                    let mut f = flat.clone();
                    f[i] += delta;
                    p.assign(&f).unwrap();
                    let out = crate::toponet::forward(&p, &fmap, &sample).unwrap();
                    crate::toponet::bce_loss(&out, &sample).unwrap()
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
                (analytic[i] - numeric).abs() / denom
            })
            .reduce(|| 0.0f64, f64::max);
        assert!(max_rel < 1e-3, "max relative gradient error {max_rel}");
    }

    #[test]
    fn empty_sample_has_zero_loss_and_zero_gradients() {
        let params = TopoNetParams::<f64>::init(test_cfg(), 1).unwrap();
        let fmap = test_fmap(2);
        let mut sample = test_sample(3, 4);
        sample.valid = vec![false; 4];
        let (loss, grads) = loss_and_grads(&params, &fmap, &sample).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_slot_gradients_also_match() {
        // One valid slot exercises the k = 1 softmax (attention weight
        // exactly 1) and its degenerate Jacobian.
        let params = TopoNetParams::<f64>::init(test_cfg(), 9).unwrap();
        let fmap = test_fmap(10);
        let mut sample = test_sample(11, 3);
        sample.valid = vec![false, true, false];
        let (_, grads) = loss_and_grads(&params, &fmap, &sample).unwrap();
        let analytic = grads.flatten();
        let flat = params.flatten();
        let h = 1e-4;
        let max_rel = (0..flat.len())
            .into_par_iter()
            .map(|i| {
                let eval = |delta: f64| {
                    let mut p = params.clone();
                    let mut f = flat.clone();
                    f[i] += delta;
                    p.assign(&f).unwrap();
                    let out = crate::toponet::forward(&p, &fmap, &sample).unwrap();
                    crate::toponet::bce_loss(&out, &sample).unwrap()
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
                (analytic[i] - numeric).abs() / denom
            })
            .reduce(|| 0.0f64, f64::max);
        assert!(max_rel < 1e-3, "max relative gradient error {max_rel}");
    }
}
