//! Batch global average pooling: the unweighted mean of instance rows as
//! the slide embedding, plus its trainable classifier.

use super::head::append_mlp_head;
use super::TrainableModel;
use crate::data::EmbeddingBag;
use crate::nn::{Dim, Graph, Matrix, NodeId, ParamTensor};
use crate::Result;

/// Coordinate-wise mean over the bag's rows, accumulated in 64-bit.
/// `EmbeddingBag` guarantees at least one instance, so this cannot divide
/// by zero; empty bags are rejected at construction.
pub fn bgap(bag: &EmbeddingBag) -> Vec<f32> {
    let m = bag.matrix();
    let mut acc = vec![0.0f64; m.cols()];
    for r in 0..m.rows() {
        for (a, &v) in acc.iter_mut().zip(m.row(r)) {
            *a += v as f64;
        }
    }
    let inv = 1.0 / m.rows() as f64;
    acc.into_iter().map(|v| (v * inv) as f32).collect()
}

/// Mean pooling followed by the shared classifier head.
#[derive(Clone, Debug)]
pub struct BgapHead {
    pub d: usize,
    pub classes: usize,
    graph: Graph,
    probs: NodeId,
    params: Vec<ParamTensor>,
}

impl BgapHead {
    pub fn new(d: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut graph = Graph::new("bgap");
        let x = graph.input(Dim::Bag(0), Dim::Fixed(d));
        let z = graph.mean_rows(x)?;
        let probs = append_mlp_head(&mut graph, z, d, classes)?;
        let params = crate::nn::init_params(&graph, seed);
        Ok(BgapHead {
            d,
            classes,
            graph,
            probs,
            params,
        })
    }
}

impl TrainableModel for BgapHead {
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

    fn bag(rows: Vec<Vec<f32>>) -> EmbeddingBag {
        EmbeddingBag::new("t", Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn single_row_is_identity() {
        let b = bag(vec![vec![1.5, -2.0, 0.25]]);
        assert_eq!(bgap(&b), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn two_unit_rows_average() {
        let b = bag(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(bgap(&b), vec![0.5, 0.5]);
    }

    #[test]
    fn permutation_invariant() {
        let b = bag(vec![
            vec![1.0, 2.0, 3.0],
            vec![-4.0, 5.0, 0.5],
            vec![7.0, -8.0, 9.0],
        ]);
        let p = bag(vec![
            vec![7.0, -8.0, 9.0],
            vec![1.0, 2.0, 3.0],
            vec![-4.0, 5.0, 0.5],
        ]);
        assert_eq!(bgap(&b), bgap(&p));
    }
}
