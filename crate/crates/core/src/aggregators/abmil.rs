//! Gated attention pooling: per-instance weights
//! `a_n ∝ exp(w' (tanh(V' x_n) ⊙ sigmoid(U' x_n)))` normalized over the
//! bag, with the slide embedding `Z = Σ a_n x_n`.

use super::head::append_mlp_head;
use super::TrainableModel;
use crate::data::EmbeddingBag;
use crate::nn::{forward, Dim, Graph, Matrix, NodeId, ParamInit, ParamTensor};
use crate::Result;

pub const ABMIL_HIDDEN: usize = 128;

#[derive(Clone, Debug)]
pub struct AbmilModel {
    pub d: usize,
    pub classes: usize,
    /// Attention hidden width.
    pub hidden: usize,
    graph: Graph,
    probs: NodeId,
    attn: NodeId,
    embedding: NodeId,
    params: Vec<ParamTensor>,
}

impl AbmilModel {
    pub fn new(d: usize, classes: usize, seed: u64) -> Result<Self> {
        Self::with_hidden(d, classes, ABMIL_HIDDEN, seed)
    }

    pub fn with_hidden(d: usize, classes: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut graph = Graph::new("abmil");
        let x = graph.input(Dim::Bag(0), Dim::Fixed(d));
        let v = graph.param("attn_v", d, hidden, ParamInit::Xavier);
        let u = graph.param("attn_u", d, hidden, ParamInit::Xavier);
        let w = graph.param("attn_w", hidden, 1, ParamInit::Xavier);
        let hv = graph.matmul(x, v)?;
        let hv = graph.tanh(hv)?;
        let hu = graph.matmul(x, u)?;
        let hu = graph.sigmoid(hu)?;
        let gate = graph.mul(hv, hu)?; // N x hidden
        let logits = graph.matmul_t(w, gate, true, true)?; // 1 x N
        let attn = graph.row_softmax(logits)?;
        let z = graph.matmul(attn, x)?; // 1 x d
        let probs = append_mlp_head(&mut graph, z, d, classes)?;
        let params = crate::nn::init_params(&graph, seed);
        Ok(AbmilModel {
            d,
            classes,
            hidden,
            graph,
            probs,
            attn,
            embedding: z,
            params,
        })
    }

    /// Attention-weighted embedding and the per-instance attention weights
    /// (non-negative, summing to 1 over the bag).
    pub fn attend(&self, bag: &EmbeddingBag) -> Result<(Vec<f32>, Vec<f32>)> {
        let param_refs: Vec<&Matrix> = self.params.iter().map(|p| &p.value).collect();
        let tape = forward(&self.graph, &param_refs, &self.inputs_for(bag))?;
        let z = tape.value(self.embedding).row(0).to_vec();
        let attention = tape.value(self.attn).row(0).to_vec();
        Ok((z, attention))
    }
}

impl TrainableModel for AbmilModel {
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
        vec![bag.matrix().clone()]
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
    use crate::aggregators::bgap::bgap;

    fn bag(rows: Vec<Vec<f32>>) -> EmbeddingBag {
        EmbeddingBag::new("t", Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn singleton_bag_gets_full_attention() {
        let model = AbmilModel::with_hidden(3, 2, 4, 9).unwrap();
        let b = bag(vec![vec![0.4, -1.0, 2.0]]);
        let (z, a) = model.attend(&b).unwrap();
        assert_eq!(a, vec![1.0]);
        for (zi, xi) in z.iter().zip([0.4, -1.0, 2.0]) {
            assert!((zi - xi).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_attention_vector_reduces_to_bgap() {
        let mut model = AbmilModel::with_hidden(3, 2, 4, 9).unwrap();
        // w = 0 makes every attention logit equal -> uniform weights
        model.params_mut()[2].value.fill(0.0);
        let b = bag(vec![
            vec![1.0, 0.0, -1.0],
            vec![3.0, 1.0, 0.5],
            vec![-2.0, 4.0, 2.5],
        ]);
        let (z, a) = model.attend(&b).unwrap();
        for &ai in &a {
            assert!((ai - 1.0 / 3.0).abs() < 1e-6);
        }
        for (zi, gi) in z.iter().zip(bgap(&b)) {
            assert!((zi - gi).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_sums_to_one_and_is_permutation_invariant() {
        let model = AbmilModel::with_hidden(3, 2, 8, 123).unwrap();
        let b = bag(vec![
            vec![1.0, 0.2, -1.0],
            vec![0.0, 1.5, 0.5],
            vec![-2.0, 0.7, 2.5],
            vec![0.9, -0.4, 0.1],
        ]);
        let (z, a) = model.attend(&b).unwrap();
        let sum: f64 = a.iter().map(|&v| v as f64).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(a.iter().all(|&v| v >= 0.0));

        let perm = bag(vec![
            vec![0.9, -0.4, 0.1],
            vec![-2.0, 0.7, 2.5],
            vec![1.0, 0.2, -1.0],
            vec![0.0, 1.5, 0.5],
        ]);
        let (zp, ap) = model.attend(&perm).unwrap();
        for (x, y) in z.iter().zip(&zp) {
            assert!((x - y).abs() < 1e-6);
        }
        // weights follow their instances under the permutation
        assert!((a[0] - ap[2]).abs() < 1e-6);
        assert!((a[3] - ap[0]).abs() < 1e-6);
    }

    #[test]
    fn hand_set_params_match_scalar_evaluation() {
        // N=3, d=2, hidden=2: independent scalar evaluation of the gated
        // attention formula.
        let mut model = AbmilModel::with_hidden(2, 2, 2, 0).unwrap();
        let vm = Matrix::from_vec(2, 2, vec![0.5, -0.3, 0.8, 0.2]).unwrap();
        let um = Matrix::from_vec(2, 2, vec![-0.1, 0.4, 0.6, -0.7]).unwrap();
        let wm = Matrix::from_vec(2, 1, vec![1.2, -0.9]).unwrap();
        model.params_mut()[0].value = vm.clone();
        model.params_mut()[1].value = um.clone();
        model.params_mut()[2].value = wm.clone();

        let rows = [[0.3f64, -0.6], [1.1, 0.4], [-0.5, 0.9]];
        let b = bag(rows
            .iter()
            .map(|r| r.iter().map(|&v| v as f32).collect())
            .collect());

        let mut logits = [0.0f64; 3];
        for (n, row) in rows.iter().enumerate() {
            let mut gate = [0.0f64; 2];
            for h in 0..2 {
                let pre_v = row[0] * vm.get(0, h) as f64 + row[1] * vm.get(1, h) as f64;
                let pre_u = row[0] * um.get(0, h) as f64 + row[1] * um.get(1, h) as f64;
                gate[h] = pre_v.tanh() * (1.0 / (1.0 + (-pre_u).exp()));
            }
            logits[n] = gate[0] * wm.get(0, 0) as f64 + gate[1] * wm.get(1, 0) as f64;
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let total: f64 = exps.iter().sum();
        let want_a: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let mut want_z = [0.0f64; 2];
        for (n, row) in rows.iter().enumerate() {
            want_z[0] += want_a[n] * row[0];
            want_z[1] += want_a[n] * row[1];
        }

        let (z, a) = model.attend(&b).unwrap();
        for (got, want) in a.iter().zip(&want_a) {
            assert!((*got as f64 - want).abs() < 1e-6, "attention {a:?} vs {want_a:?}");
        }
        for (got, want) in z.iter().zip(&want_z) {
            assert!((*got as f64 - want).abs() < 1e-6, "embedding {z:?} vs {want_z:?}");
        }
    }
}
