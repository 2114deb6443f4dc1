//! Shared softmax classifier head: one tanh hidden layer of width 128.

use crate::nn::{forward, Dim, Graph, Matrix, NodeId, ParamInit, ParamTensor};
use crate::{Error, Result};

pub const MLP_HIDDEN: usize = 128;

/// Append the classifier head to a graph, returning the softmax output
/// node. The input node must be `1 x in_dim`.
pub(crate) fn append_mlp_head(
    g: &mut Graph,
    input: NodeId,
    in_dim: usize,
    classes: usize,
) -> Result<NodeId> {
    if classes < 2 {
        return Err(Error::Config(format!(
            "classifier needs at least 2 classes, got {classes}"
        )));
    }
    let w1 = g.param("head_w1", in_dim, MLP_HIDDEN, ParamInit::Xavier);
    let b1 = g.param("head_b1", 1, MLP_HIDDEN, ParamInit::Zero);
    let w2 = g.param("head_w2", MLP_HIDDEN, classes, ParamInit::Xavier);
    let b2 = g.param("head_b2", 1, classes, ParamInit::Zero);
    let h = g.matmul(input, w1)?;
    let h = g.bias_add(h, b1)?;
    let h = g.tanh(h)?;
    let logits = g.matmul(h, w2)?;
    let logits = g.bias_add(logits, b2)?;
    g.row_softmax(logits)
}

/// Standalone classifier over a fixed-size embedding.
#[derive(Clone, Debug)]
pub struct MlpHead {
    pub in_dim: usize,
    pub classes: usize,
    graph: Graph,
    probs: NodeId,
    params: Vec<ParamTensor>,
}

impl MlpHead {
    pub fn new(in_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut graph = Graph::new("mlp-head");
        let input = graph.input(Dim::Fixed(1), Dim::Fixed(in_dim));
        let probs = append_mlp_head(&mut graph, input, in_dim, classes)?;
        let params = crate::nn::init_params(&graph, seed);
        Ok(MlpHead {
            in_dim,
            classes,
            graph,
            probs,
            params,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn probs_node(&self) -> NodeId {
        self.probs
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        crate::nn::total_param_count(&self.params)
    }

    /// Softmax class scores for one embedding.
    pub fn classify(&self, embedding: &[f32]) -> Result<Vec<f32>> {
        if embedding.len() != self.in_dim {
            return Err(Error::Shape(format!(
                "embedding has {} dims, head expects {}",
                embedding.len(),
                self.in_dim
            )));
        }
        let input = Matrix::from_vec(1, self.in_dim, embedding.to_vec())?;
        let param_refs: Vec<&Matrix> = self.params.iter().map(|p| &p.value).collect();
        let tape = forward(&self.graph, &param_refs, &[input])?;
        Ok(tape.value(self.probs).row(0).to_vec())
    }
}
