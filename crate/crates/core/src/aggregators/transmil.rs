//! Light transformer aggregator: exact multi-head self-attention over the
//! instances plus a learned class token, no positional encoding, class-token
//! readout into the shared head. Dropping positional information makes the
//! output a pure set function of the bag.

use super::head::append_mlp_head;
use super::TrainableModel;
use crate::data::EmbeddingBag;
use crate::nn::{Dim, Graph, Matrix, NodeId, ParamInit, ParamTensor};
use crate::{Error, Result};

pub const TRANSMIL_MODEL_DIM: usize = 256;
pub const TRANSMIL_LAYERS: usize = 2;
pub const TRANSMIL_HEADS: usize = 4;

#[derive(Clone, Debug)]
pub struct TransmilLiteModel {
    pub d: usize,
    pub classes: usize,
    /// Token width after the input projection.
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    graph: Graph,
    probs: NodeId,
    embedding: NodeId,
    params: Vec<ParamTensor>,
}

impl TransmilLiteModel {
    pub fn new(d: usize, classes: usize, seed: u64) -> Result<Self> {
        Self::with_dims(
            d,
            classes,
            TRANSMIL_MODEL_DIM,
            TRANSMIL_LAYERS,
            TRANSMIL_HEADS,
            seed,
        )
    }

    pub fn with_dims(
        d: usize,
        classes: usize,
        model_dim: usize,
        layers: usize,
        heads: usize,
        seed: u64,
    ) -> Result<Self> {
        if heads == 0 || model_dim % heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {model_dim} must be a positive multiple of heads {heads}"
            )));
        }
        let head_dim = model_dim / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let mut g = Graph::new("transmil-lite");
        let x = g.input(Dim::Bag(0), Dim::Fixed(d));
        // one-hot row selecting the class token after concat
        let selector = g.input(Dim::Fixed(1), Dim::Bag(1));

        let wp = g.param("proj_w", d, model_dim, ParamInit::Xavier);
        let bp = g.param("proj_b", 1, model_dim, ParamInit::Zero);
        let proj = g.matmul(x, wp)?;
        let proj = g.bias_add(proj, bp)?;

        let cls = g.param("cls_token", 1, model_dim, ParamInit::Xavier);
        let mut tokens = g.concat_rows(cls, proj)?; // (N+1) x m

        for layer in 0..layers {
            let ln1_g = g.param(format!("enc{layer}_ln1_gamma"), 1, model_dim, ParamInit::One);
            let ln1_b = g.param(format!("enc{layer}_ln1_beta"), 1, model_dim, ParamInit::Zero);
            let normed = g.layer_norm(tokens, ln1_g, ln1_b)?;

            let mut attn_out: Option<NodeId> = None;
            for h in 0..heads {
                let wq = g.param(format!("enc{layer}_h{h}_wq"), model_dim, head_dim, ParamInit::Xavier);
                let wk = g.param(format!("enc{layer}_h{h}_wk"), model_dim, head_dim, ParamInit::Xavier);
                let wv = g.param(format!("enc{layer}_h{h}_wv"), model_dim, head_dim, ParamInit::Xavier);
                let wo = g.param(format!("enc{layer}_h{h}_wo"), head_dim, model_dim, ParamInit::Xavier);
                let q = g.matmul(normed, wq)?;
                let k = g.matmul(normed, wk)?;
                let v = g.matmul(normed, wv)?;
                let scores = g.matmul_t(q, k, false, true)?; // (N+1) x (N+1)
                let scores = g.scale(scores, scale)?;
                let attn = g.row_softmax(scores)?;
                let ctx = g.matmul(attn, v)?; // (N+1) x head_dim
                let out = g.matmul(ctx, wo)?; // (N+1) x m
                attn_out = Some(match attn_out {
                    None => out,
                    Some(acc) => g.add(acc, out)?,
                });
            }
            tokens = g.add(tokens, attn_out.expect("heads >= 1"))?;

            let ln2_g = g.param(format!("enc{layer}_ln2_gamma"), 1, model_dim, ParamInit::One);
            let ln2_b = g.param(format!("enc{layer}_ln2_beta"), 1, model_dim, ParamInit::Zero);
            let normed = g.layer_norm(tokens, ln2_g, ln2_b)?;
            let wf1 = g.param(format!("enc{layer}_ff_w1"), model_dim, 2 * model_dim, ParamInit::Xavier);
            let bf1 = g.param(format!("enc{layer}_ff_b1"), 1, 2 * model_dim, ParamInit::Zero);
            let wf2 = g.param(format!("enc{layer}_ff_w2"), 2 * model_dim, model_dim, ParamInit::Xavier);
            let bf2 = g.param(format!("enc{layer}_ff_b2"), 1, model_dim, ParamInit::Zero);
            let ff = g.matmul(normed, wf1)?;
            let ff = g.bias_add(ff, bf1)?;
            let ff = g.tanh(ff)?;
            let ff = g.matmul(ff, wf2)?;
            let ff = g.bias_add(ff, bf2)?;
            tokens = g.add(tokens, ff)?;
        }

        let lnf_g = g.param("final_ln_gamma", 1, model_dim, ParamInit::One);
        let lnf_b = g.param("final_ln_beta", 1, model_dim, ParamInit::Zero);
        let tokens = g.layer_norm(tokens, lnf_g, lnf_b)?;
        let embedding = g.matmul(selector, tokens)?; // 1 x m class-token readout
        let probs = append_mlp_head(&mut g, embedding, model_dim, classes)?;

        let params = crate::nn::init_params(&g, seed);
        Ok(TransmilLiteModel {
            d,
            classes,
            model_dim,
            layers,
            heads,
            graph: g,
            probs,
            embedding,
            params,
        })
    }

    /// Class-token embedding after all encoder layers.
    pub fn embed(&self, bag: &EmbeddingBag) -> Result<Vec<f32>> {
        let param_refs: Vec<&Matrix> = self.params.iter().map(|p| &p.value).collect();
        let tape = crate::nn::forward(&self.graph, &param_refs, &self.inputs_for(bag))?;
        Ok(tape.value(self.embedding).row(0).to_vec())
    }
}

fn class_token_selector(n: usize) -> Matrix {
    let mut sel = Matrix::zeros(1, n + 1);
    sel.set(0, 0, 1.0);
    sel
}

impl TrainableModel for TransmilLiteModel {
    fn graph(&self) -> &Graph {
        &self.graph
    }
    fn probs_node(&self) -> NodeId {
        self.probs
    }
    fn params(&self) -> &[ParamTensor] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }
    fn inputs_for(&self, bag: &EmbeddingBag) -> Vec<Matrix> {
        vec![bag.matrix().clone(), class_token_selector(bag.n())]
    }
    fn classes(&self) -> usize {
        self.classes
    }
    fn input_dim(&self) -> usize {
        self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregators::predict_probs;

    fn bag(rows: Vec<Vec<f32>>) -> EmbeddingBag {
        EmbeddingBag::new("t", Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn permutation_invariant_output() {
        let model = TransmilLiteModel::with_dims(3, 2, 8, 2, 2, 21).unwrap();
        let b = bag(vec![
            vec![1.0, 0.2, -1.0],
            vec![0.0, 1.5, 0.5],
            vec![-2.0, 0.7, 2.5],
            vec![0.3, -0.3, 0.9],
        ]);
        let p = bag(vec![
            vec![0.3, -0.3, 0.9],
            vec![0.0, 1.5, 0.5],
            vec![1.0, 0.2, -1.0],
            vec![-2.0, 0.7, 2.5],
        ]);
        let probs_b = predict_probs(&model, &b).unwrap();
        let probs_p = predict_probs(&model, &p).unwrap();
        for (x, y) in probs_b.iter().zip(&probs_p) {
            assert!((x - y).abs() < 1e-6, "{probs_b:?} vs {probs_p:?}");
        }
        let e_b = model.embed(&b).unwrap();
        let e_p = model.embed(&p).unwrap();
        for (x, y) in e_b.iter().zip(&e_p) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_layers_ignore_the_bag() {
        let model = TransmilLiteModel::with_dims(3, 2, 8, 0, 1, 5).unwrap();
        let b1 = bag(vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 1.0]]);
        let b2 = bag(vec![vec![9.0, -9.0, 4.5]]);
        let e1 = model.embed(&b1).unwrap();
        let e2 = model.embed(&b2).unwrap();
        assert_eq!(e1, e2, "class token readout must not depend on the bag at L=0");
    }

    #[test]
    fn single_head_single_layer_matches_manual_attention() {
        // N=2, m=4, H=1, L=1 with hand-set parameters, mirrored by a direct
        // scalar computation of the same architecture.
        let d = 2;
        let m = 4;
        let mut model = TransmilLiteModel::with_dims(d, 2, m, 1, 1, 77).unwrap();

        // deterministic small values, distinct per parameter
        let mut stamp = |p: &mut Matrix, mul: f64| {
            let cols = p.cols();
            for r in 0..p.rows() {
                for c in 0..cols {
                    let v = ((r * cols + c) as f64 * 0.13 - 0.2) * mul;
                    p.set(r, c, v as f32);
                }
            }
        };
        // params in declaration order:
        // proj_w, proj_b, cls_token, ln1_g, ln1_b, wq, wk, wv, wo,
        // ln2_g, ln2_b, ff_w1, ff_b1, ff_w2, ff_b2, final_ln_g, final_ln_b,
        // head_w1, head_b1, head_w2, head_b2
        let muls = [
            0.7, 0.3, 0.9, 0.0, 0.0, 0.8, 0.6, 0.5, 0.4, 0.0, 0.0, 0.35, 0.15, 0.3, 0.1, 0.0,
            0.0, 0.0, 0.0, 0.0, 0.0,
        ];
        // normalization scales stay at 1 (init One), shifts at 0; the head is
        // irrelevant because we compare the embedding.
        for (i, &mul) in muls.iter().enumerate() {
            if mul != 0.0 {
                let mut value = model.params()[i].value.clone();
                stamp(&mut value, mul);
                model.params_mut()[i].value = value;
            }
        }

        let rows = [[0.5f64, -0.2], [0.1, 0.8]];
        let b = bag(rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect());
        let got = model.embed(&b).unwrap();

        // scalar mirror in f64
        let getm = |i: usize| -> Vec<Vec<f64>> {
            let p = &model.params()[i].value;
            (0..p.rows())
                .map(|r| p.row(r).iter().map(|&v| v as f64).collect())
                .collect()
        };
        let matvec = |mat: &Vec<Vec<f64>>, x: &Vec<f64>| -> Vec<f64> {
            let cols = mat[0].len();
            let mut out = vec![0.0; cols];
            for (xi, mrow) in x.iter().zip(mat) {
                for c in 0..cols {
                    out[c] += xi * mrow[c];
                }
            }
            out
        };
        let layer_norm = |x: &Vec<f64>| -> Vec<f64> {
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + 1e-5).sqrt();
            x.iter().map(|v| (v - mean) * inv).collect()
        };

        let proj_w = getm(0);
        let proj_b = getm(1)[0].clone();
        let cls = getm(2)[0].clone();
        let wq = getm(5);
        let wk = getm(6);
        let wv = getm(7);
        let wo = getm(8);
        let ff_w1 = getm(11);
        let ff_b1 = getm(12)[0].clone();
        let ff_w2 = getm(13);
        let ff_b2 = getm(14)[0].clone();

        let mut tokens: Vec<Vec<f64>> = vec![cls];
        for r in &rows {
            let x = vec![r[0], r[1]];
            let mut t = matvec(&proj_w, &x);
            for (ti, bi) in t.iter_mut().zip(&proj_b) {
                *ti += bi;
            }
            tokens.push(t);
        }

        let normed: Vec<Vec<f64>> = tokens.iter().map(layer_norm).collect();
        let q: Vec<Vec<f64>> = normed.iter().map(|t| matvec(&wq, t)).collect();
        let k: Vec<Vec<f64>> = normed.iter().map(|t| matvec(&wk, t)).collect();
        let v: Vec<Vec<f64>> = normed.iter().map(|t| matvec(&wv, t)).collect();
        let scale = 1.0 / (m as f64).sqrt();
        let mut attn_out = vec![vec![0.0f64; m]; tokens.len()];
        for i in 0..tokens.len() {
            let logits: Vec<f64> = (0..tokens.len())
                .map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() * scale)
                .collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let total: f64 = exps.iter().sum();
            let mut ctx = vec![0.0f64; m];
            for (j, e) in exps.iter().enumerate() {
                let a = e / total;
                for (c, vv) in ctx.iter_mut().zip(&v[j]) {
                    *c += a * vv;
                }
            }
            attn_out[i] = matvec(&wo, &ctx);
        }
        for (t, a) in tokens.iter_mut().zip(&attn_out) {
            for (ti, ai) in t.iter_mut().zip(a) {
                *ti += ai;
            }
        }
        for t in tokens.iter_mut() {
            let normed = layer_norm(t);
            let mut h = matvec(&ff_w1, &normed);
            for (hi, bi) in h.iter_mut().zip(&ff_b1) {
                *hi = (*hi + bi).tanh();
            }
            let mut ff = matvec(&ff_w2, &h);
            for (fi, bi) in ff.iter_mut().zip(&ff_b2) {
                *fi += bi;
            }
            for (ti, fi) in t.iter_mut().zip(&ff) {
                *ti += fi;
            }
        }
        let want = layer_norm(&tokens[0]);

        for (g, w) in got.iter().zip(&want) {
            assert!((*g as f64 - w).abs() < 5e-6, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn model_dim_must_divide_by_heads() {
        assert!(TransmilLiteModel::with_dims(4, 2, 10, 1, 4, 0).is_err());
    }
}
