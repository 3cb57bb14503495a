//! Forward pass with activation caching and the matching hand-written
//! backward pass.
//!
//! Position `t` only ever reads positions `<= t`, so logits at `t` are
//! bitwise invariant to later tokens. VRT ids embed and score through the
//! projected patch features; base ids use the embedding table and output
//! projection. Softmax normalization always spans the full vocabulary.

use alloc::vec;
use alloc::vec::Vec;

use super::{ModelConfig, ModelError, PatchFeatures, Tensors, ToyModel, RMS_EPS};
use crate::num;

/// Per-position logits over the total vocabulary, row-major `[seq_len, vocab]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub seq_len: usize,
    pub vocab: usize,
    pub data: Vec<f64>,
}

impl Logits {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.vocab..(t + 1) * self.vocab]
    }
}

/// y = W x with W `[out, in]` row-major.
fn matvec(w: &[f64], x: &[f64], out_dim: usize, in_dim: usize, out: &mut [f64]) {
    for o in 0..out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = 0.0;
        for i in 0..in_dim {
            acc += row[i] * x[i];
        }
        out[o] = acc;
    }
}

/// dW += dy ⊗ x
fn matvec_bwd_w(dw: &mut [f64], dy: &[f64], x: &[f64], out_dim: usize, in_dim: usize) {
    for o in 0..out_dim {
        let row = &mut dw[o * in_dim..(o + 1) * in_dim];
        let g = dy[o];
        for i in 0..in_dim {
            row[i] += g * x[i];
        }
    }
}

/// dx += Wᵀ dy
fn matvec_bwd_x(dx: &mut [f64], dy: &[f64], w: &[f64], out_dim: usize, in_dim: usize) {
    for o in 0..out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let g = dy[o];
        for i in 0..in_dim {
            dx[i] += g * row[i];
        }
    }
}

/// Normalizes `x` by its root mean square; returns the inverse RMS.
fn rmsnorm(x: &[f64], out: &mut [f64]) -> f64 {
    let n = x.len() as f64;
    let ms = x.iter().map(|v| v * v).sum::<f64>() / n;
    let ri = 1.0 / num::sqrt(ms + RMS_EPS);
    for (o, v) in out.iter_mut().zip(x) {
        *o = v * ri;
    }
    ri
}

/// dx += rmsnorm backward for dy at the stored (x, inverse rms).
fn rmsnorm_bwd(dx: &mut [f64], dy: &[f64], x: &[f64], ri: f64) {
    let n = x.len() as f64;
    let dot: f64 = dy.iter().zip(x).map(|(a, b)| a * b).sum();
    let k = ri * ri * ri / n * dot;
    for i in 0..x.len() {
        dx[i] += ri * dy[i] - k * x[i];
    }
}

/// Cached activations for one layer, all `[T, D]` unless noted.
pub(crate) struct LayerCache {
    x_in: Vec<f64>,
    xn_attn: Vec<f64>,
    ri_attn: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention probabilities `[heads, T, T]`, zero above the diagonal.
    probs: Vec<f64>,
    /// Concatenated head outputs before the output matrix.
    ho: Vec<f64>,
    x_mid: Vec<f64>,
    xn_mlp: Vec<f64>,
    ri_mlp: Vec<f64>,
    /// FFN hidden activation (tanh) `[T, F]`.
    h1a: Vec<f64>,
    x_out: Vec<f64>,
}

/// Full forward trace for one sequence.
pub(crate) struct ForwardCache {
    token_ids: Vec<u32>,
    /// Projected patch features `[vrt_capacity, D]`.
    vrt_emb: Vec<f64>,
    x0: Vec<f64>,
    layers: Vec<LayerCache>,
    xn_final: Vec<f64>,
    ri_final: Vec<f64>,
    /// Final hidden states after the output gain.
    y: Vec<f64>,
    pub(crate) logits: Logits,
}

fn check_inputs(
    config: &ModelConfig,
    token_ids: &[u32],
    features: &PatchFeatures,
) -> Result<(), ModelError> {
    if token_ids.len() > config.max_seq_len {
        return Err(ModelError::SequenceTooLong {
            len: token_ids.len(),
            max: config.max_seq_len,
        });
    }
    let total = config.total_vocab() as u32;
    if let Some(id) = token_ids.iter().find(|id| **id >= total) {
        return Err(ModelError::TokenIdOutOfRange { id: *id, total });
    }
    if features.count() != config.vrt_capacity || features.dim() != config.feature_dim {
        return Err(ModelError::FeatureShape {
            expected_count: config.vrt_capacity,
            expected_dim: config.feature_dim,
            got_count: features.count(),
            got_dim: features.dim(),
        });
    }
    Ok(())
}

impl ToyModel {
    /// Causal forward pass; logits cover the total vocabulary at every
    /// position.
    pub fn forward(
        &self,
        token_ids: &[u32],
        features: &PatchFeatures,
    ) -> Result<Logits, ModelError> {
        Ok(self.forward_cached(token_ids, features)?.logits)
    }

    pub(crate) fn forward_cached(
        &self,
        token_ids: &[u32],
        features: &PatchFeatures,
    ) -> Result<ForwardCache, ModelError> {
        check_inputs(&self.config, token_ids, features)?;
        let cfg = &self.config;
        let p = &self.params;
        let t_len = token_ids.len();
        let d = cfg.embed_dim;
        let f = cfg.ffn_dim();
        let heads = cfg.heads;
        let hd = cfg.head_dim();
        let vb = cfg.base_vocab_size;
        let vv = cfg.vrt_capacity;
        let scale = 1.0 / num::sqrt(hd as f64);

        // VRT embeddings: e_i = P f_i, shared by the input path and the
        // dynamic output head.
        let mut vrt_emb = vec![0.0; vv * d];
        for i in 0..vv {
            matvec(
                &p.patch_proj,
                features.row(i),
                d,
                cfg.feature_dim,
                &mut vrt_emb[i * d..(i + 1) * d],
            );
        }

        let mut x0 = vec![0.0; t_len * d];
        for (t, id) in token_ids.iter().enumerate() {
            let id = *id as usize;
            let emb = if id < vb {
                &p.tok_emb[id * d..(id + 1) * d]
            } else {
                let i = id - vb;
                &vrt_emb[i * d..(i + 1) * d]
            };
            let pos = &p.pos_emb[t * d..(t + 1) * d];
            let row = &mut x0[t * d..(t + 1) * d];
            for j in 0..d {
                row[j] = emb[j] + pos[j];
            }
        }

        let mut x = x0.clone();
        let mut layers = Vec::with_capacity(cfg.layers);
        for layer in &p.layers {
            let x_in = x.clone();
            let mut xn_attn = vec![0.0; t_len * d];
            let mut ri_attn = vec![0.0; t_len];
            for t in 0..t_len {
                ri_attn[t] = rmsnorm(&x_in[t * d..(t + 1) * d], &mut xn_attn[t * d..(t + 1) * d]);
            }

            let mut q = vec![0.0; t_len * d];
            let mut k = vec![0.0; t_len * d];
            let mut v = vec![0.0; t_len * d];
            for t in 0..t_len {
                let a = &xn_attn[t * d..(t + 1) * d];
                matvec(&layer.wq, a, d, d, &mut q[t * d..(t + 1) * d]);
                matvec(&layer.wk, a, d, d, &mut k[t * d..(t + 1) * d]);
                matvec(&layer.wv, a, d, d, &mut v[t * d..(t + 1) * d]);
            }

            let mut probs = vec![0.0; heads * t_len * t_len];
            let mut ho = vec![0.0; t_len * d];
            for h in 0..heads {
                let off = h * hd;
                for t in 0..t_len {
                    let qs = &q[t * d + off..t * d + off + hd];
                    // Causal scores over u <= t, softmaxed in place.
                    let row = &mut probs[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                    let mut max = f64::NEG_INFINITY;
                    for (u, slot) in row.iter_mut().enumerate() {
                        let ks = &k[u * d + off..u * d + off + hd];
                        let mut dot = 0.0;
                        for j in 0..hd {
                            dot += qs[j] * ks[j];
                        }
                        *slot = dot * scale;
                        if *slot > max {
                            max = *slot;
                        }
                    }
                    let mut sum = 0.0;
                    for slot in row.iter_mut() {
                        *slot = num::exp(*slot - max);
                        sum += *slot;
                    }
                    for slot in row.iter_mut() {
                        *slot /= sum;
                    }
                    let out = &mut ho[t * d + off..t * d + off + hd];
                    for (u, pr) in row.iter().enumerate() {
                        let vs = &v[u * d + off..u * d + off + hd];
                        for j in 0..hd {
                            out[j] += pr * vs[j];
                        }
                    }
                }
            }

            let mut x_mid = vec![0.0; t_len * d];
            let mut attn = vec![0.0; d];
            for t in 0..t_len {
                matvec(&layer.wo, &ho[t * d..(t + 1) * d], d, d, &mut attn);
                for j in 0..d {
                    x_mid[t * d + j] = x_in[t * d + j] + attn[j];
                }
            }

            let mut xn_mlp = vec![0.0; t_len * d];
            let mut ri_mlp = vec![0.0; t_len];
            for t in 0..t_len {
                ri_mlp[t] = rmsnorm(&x_mid[t * d..(t + 1) * d], &mut xn_mlp[t * d..(t + 1) * d]);
            }
            let mut h1 = vec![0.0; f];
            let mut h1a = vec![0.0; t_len * f];
            let mut x_out = vec![0.0; t_len * d];
            let mut mlp = vec![0.0; d];
            for t in 0..t_len {
                matvec(&layer.w1, &xn_mlp[t * d..(t + 1) * d], f, d, &mut h1);
                for j in 0..f {
                    h1a[t * f + j] = num::tanh(h1[j]);
                }
                matvec(&layer.w2, &h1a[t * f..(t + 1) * f], d, f, &mut mlp);
                for j in 0..d {
                    x_out[t * d + j] = x_mid[t * d + j] + mlp[j];
                }
            }
            x = x_out.clone();

            layers.push(LayerCache {
                x_in,
                xn_attn,
                ri_attn,
                q,
                k,
                v,
                probs,
                ho,
                x_mid,
                xn_mlp,
                ri_mlp,
                h1a,
                x_out,
            });
        }

        let mut xn_final = vec![0.0; t_len * d];
        let mut ri_final = vec![0.0; t_len];
        let mut y = vec![0.0; t_len * d];
        for t in 0..t_len {
            ri_final[t] = rmsnorm(&x[t * d..(t + 1) * d], &mut xn_final[t * d..(t + 1) * d]);
            for j in 0..d {
                y[t * d + j] = p.out_gain[j] * xn_final[t * d + j];
            }
        }

        let vocab = cfg.total_vocab();
        let mut logits = vec![0.0; t_len * vocab];
        for t in 0..t_len {
            let yt = &y[t * d..(t + 1) * d];
            let row = &mut logits[t * vocab..(t + 1) * vocab];
            matvec(&p.out_proj, yt, vb, d, &mut row[..vb]);
            for i in 0..vv {
                let e = &vrt_emb[i * d..(i + 1) * d];
                let mut dot = 0.0;
                for j in 0..d {
                    dot += yt[j] * e[j];
                }
                row[vb + i] = dot;
            }
        }

        Ok(ForwardCache {
            token_ids: token_ids.to_vec(),
            vrt_emb,
            x0,
            layers,
            xn_final,
            ri_final,
            y,
            logits: Logits {
                seq_len: t_len,
                vocab,
                data: logits,
            },
        })
    }

    /// Accumulates parameter gradients for an upstream `d_logits`
    /// (`[T, vocab]`, same layout as the cached logits) into `grads`.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        d_logits: &[f64],
        grads: &mut Tensors,
        features: &PatchFeatures,
    ) {
        let cfg = &self.config;
        let p = &self.params;
        let t_len = cache.token_ids.len();
        let d = cfg.embed_dim;
        let f = cfg.ffn_dim();
        let heads = cfg.heads;
        let hd = cfg.head_dim();
        let vb = cfg.base_vocab_size;
        let vv = cfg.vrt_capacity;
        let vocab = cfg.total_vocab();
        let scale = 1.0 / num::sqrt(hd as f64);
        debug_assert_eq!(d_logits.len(), t_len * vocab);

        // Gradients flowing into the projected VRT embeddings, merged from
        // the output head here and the input path below.
        let mut d_vrt_emb = vec![0.0; vv * d];

        // Output head and final norm.
        let mut dx = vec![0.0; t_len * d];
        for t in 0..t_len {
            let dl = &d_logits[t * vocab..(t + 1) * vocab];
            let yt = &cache.y[t * d..(t + 1) * d];
            let mut dy = vec![0.0; d];
            matvec_bwd_w(&mut grads.out_proj, &dl[..vb], yt, vb, d);
            matvec_bwd_x(&mut dy, &dl[..vb], &p.out_proj, vb, d);
            for i in 0..vv {
                let g = dl[vb + i];
                if g != 0.0 {
                    let e = &cache.vrt_emb[i * d..(i + 1) * d];
                    let de = &mut d_vrt_emb[i * d..(i + 1) * d];
                    for j in 0..d {
                        dy[j] += g * e[j];
                        de[j] += g * yt[j];
                    }
                }
            }
            // y = gain ⊙ xn_final
            let xn = &cache.xn_final[t * d..(t + 1) * d];
            let mut dxn = vec![0.0; d];
            for j in 0..d {
                grads.out_gain[j] += dy[j] * xn[j];
                dxn[j] = dy[j] * p.out_gain[j];
            }
            let x_last = if cfg.layers > 0 {
                &cache.layers[cfg.layers - 1].x_out[t * d..(t + 1) * d]
            } else {
                &cache.x0[t * d..(t + 1) * d]
            };
            rmsnorm_bwd(&mut dx[t * d..(t + 1) * d], &dxn, x_last, cache.ri_final[t]);
        }

        for (l, layer) in p.layers.iter().enumerate().rev() {
            let lc = &cache.layers[l];
            let gl = &mut grads.layers[l];

            // MLP block; the residual passes dx through unchanged.
            let mut d_xmid = dx.clone();
            for t in 0..t_len {
                let dout = &dx[t * d..(t + 1) * d];
                let h1a = &lc.h1a[t * f..(t + 1) * f];
                let mut dh1a = vec![0.0; f];
                matvec_bwd_w(&mut gl.w2, dout, h1a, d, f);
                matvec_bwd_x(&mut dh1a, dout, &layer.w2, d, f);
                for j in 0..f {
                    dh1a[j] *= 1.0 - h1a[j] * h1a[j];
                }
                let xn = &lc.xn_mlp[t * d..(t + 1) * d];
                let mut dxn = vec![0.0; d];
                matvec_bwd_w(&mut gl.w1, &dh1a, xn, f, d);
                matvec_bwd_x(&mut dxn, &dh1a, &layer.w1, f, d);
                rmsnorm_bwd(
                    &mut d_xmid[t * d..(t + 1) * d],
                    &dxn,
                    &lc.x_mid[t * d..(t + 1) * d],
                    lc.ri_mlp[t],
                );
            }

            // Attention block.
            let mut dx_in = d_xmid.clone();
            let mut dho = vec![0.0; t_len * d];
            for t in 0..t_len {
                let dout = &d_xmid[t * d..(t + 1) * d];
                matvec_bwd_w(&mut gl.wo, dout, &lc.ho[t * d..(t + 1) * d], d, d);
                matvec_bwd_x(&mut dho[t * d..(t + 1) * d], dout, &layer.wo, d, d);
            }

            let mut dq = vec![0.0; t_len * d];
            let mut dk = vec![0.0; t_len * d];
            let mut dv = vec![0.0; t_len * d];
            for h in 0..heads {
                let off = h * hd;
                for t in 0..t_len {
                    let probs = &lc.probs[(h * t_len + t) * t_len..(h * t_len + t) * t_len + t + 1];
                    let dho_t = &dho[t * d + off..t * d + off + hd];
                    // dv[u] += p[t,u] * dho_t ; dp[t,u] = dho_t . v[u]
                    let mut dp = vec![0.0; t + 1];
                    for (u, pr) in probs.iter().enumerate() {
                        let vs = v_slice(&lc.v, u, d, off, hd);
                        let dvs = &mut dv[u * d + off..u * d + off + hd];
                        let mut dot = 0.0;
                        for j in 0..hd {
                            dvs[j] += pr * dho_t[j];
                            dot += dho_t[j] * vs[j];
                        }
                        dp[u] = dot;
                    }
                    // Softmax backward.
                    let inner: f64 = probs.iter().zip(&dp).map(|(a, b)| a * b).sum();
                    let qs = &lc.q[t * d + off..t * d + off + hd];
                    let dqs = &mut dq[t * d + off..t * d + off + hd];
                    for (u, pr) in probs.iter().enumerate() {
                        let ds = pr * (dp[u] - inner) * scale;
                        if ds != 0.0 {
                            let ks = &lc.k[u * d + off..u * d + off + hd];
                            let dks = &mut dk[u * d + off..u * d + off + hd];
                            for j in 0..hd {
                                dqs[j] += ds * ks[j];
                                dks[j] += ds * qs[j];
                            }
                        }
                    }
                }
            }

            for t in 0..t_len {
                let a = &lc.xn_attn[t * d..(t + 1) * d];
                let mut da = vec![0.0; d];
                matvec_bwd_w(&mut gl.wq, &dq[t * d..(t + 1) * d], a, d, d);
                matvec_bwd_x(&mut da, &dq[t * d..(t + 1) * d], &layer.wq, d, d);
                matvec_bwd_w(&mut gl.wk, &dk[t * d..(t + 1) * d], a, d, d);
                matvec_bwd_x(&mut da, &dk[t * d..(t + 1) * d], &layer.wk, d, d);
                matvec_bwd_w(&mut gl.wv, &dv[t * d..(t + 1) * d], a, d, d);
                matvec_bwd_x(&mut da, &dv[t * d..(t + 1) * d], &layer.wv, d, d);
                rmsnorm_bwd(
                    &mut dx_in[t * d..(t + 1) * d],
                    &da,
                    &lc.x_in[t * d..(t + 1) * d],
                    lc.ri_attn[t],
                );
            }
            dx = dx_in;
        }

        // Embedding gradients.
        for (t, id) in cache.token_ids.iter().enumerate() {
            let id = *id as usize;
            let g = &dx[t * d..(t + 1) * d];
            for (slot, gj) in grads.pos_emb[t * d..(t + 1) * d].iter_mut().zip(g) {
                *slot += gj;
            }
            if id < vb {
                let row = &mut grads.tok_emb[id * d..(id + 1) * d];
                for j in 0..d {
                    row[j] += g[j];
                }
            } else {
                let de = &mut d_vrt_emb[(id - vb) * d..(id - vb + 1) * d];
                for j in 0..d {
                    de[j] += g[j];
                }
            }
        }

        // Chain the merged VRT-embedding gradient through the projection.
        for i in 0..vv {
            let de = &d_vrt_emb[i * d..(i + 1) * d];
            matvec_bwd_w(&mut grads.patch_proj, de, features.row(i), d, cfg.feature_dim);
        }
    }
}

#[inline]
fn v_slice(v: &[f64], u: usize, d: usize, off: usize, hd: usize) -> &[f64] {
    &v[u * d + off..u * d + off + hd]
}

/// Free-function alias for the forward pass.
pub fn forward(
    model: &ToyModel,
    token_ids: &[u32],
    features: &PatchFeatures,
) -> Result<Logits, ModelError> {
    model.forward(token_ids, features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn cfg() -> ModelConfig {
        ModelConfig {
            embed_dim: 16,
            layers: 2,
            heads: 4,
            max_seq_len: 24,
            base_vocab_size: 19,
            vrt_capacity: 9,
            feature_dim: 6,
            seed: 5,
            text_loss_weight: 1.0,
            vrt_loss_weight: 1.0,
        }
    }

    fn feats(seed: u64) -> PatchFeatures {
        PatchFeatures::synthetic("img", seed, 9, 6)
    }

    #[test]
    fn single_token_logit_shape() {
        let model = ToyModel::init(cfg()).unwrap();
        let logits = model.forward(&[0], &feats(1)).unwrap();
        assert_eq!((logits.seq_len, logits.vocab), (1, 19 + 9));
    }

    #[test]
    fn causality_permuting_future_tokens() {
        let model = ToyModel::init(cfg()).unwrap();
        let f = feats(2);
        let a = model.forward(&[3, 5, 7, 11, 2], &f).unwrap();
        let b = model.forward(&[3, 5, 7, 2, 11], &f).unwrap();
        for t in 0..3 {
            assert_eq!(a.row(t), b.row(t), "position {t} saw a future change");
        }
        assert_ne!(a.row(4), b.row(4));
    }

    #[test]
    fn zero_features_make_all_vrt_logits_equal() {
        let model = ToyModel::init(cfg()).unwrap();
        let zeros = PatchFeatures::zeros(9, 6);
        let logits = model.forward(&[1, 4, 6], &zeros).unwrap();
        for t in 0..3 {
            let row = logits.row(t);
            let first = row[19];
            for i in 0..9 {
                assert_eq!(row[19 + i], first);
            }
        }
    }

    #[test]
    fn input_checks() {
        let model = ToyModel::init(cfg()).unwrap();
        let f = feats(3);
        assert!(matches!(
            model.forward(&[0; 25], &f),
            Err(ModelError::SequenceTooLong { .. })
        ));
        assert!(matches!(
            model.forward(&[28], &f),
            Err(ModelError::TokenIdOutOfRange { id: 28, .. })
        ));
        let bad = PatchFeatures::zeros(8, 6);
        assert!(matches!(
            model.forward(&[0], &bad),
            Err(ModelError::FeatureShape { .. })
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let model = ToyModel::init(cfg()).unwrap();
        let f = feats(4);
        let a = model.forward(&[1, 2, 3], &f).unwrap();
        let b = model.forward(&[1, 2, 3], &f).unwrap();
        assert_eq!(a, b);
    }
}
