//! Trainable parameter storage and seeded initialization.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, ParamInit};
use super::mat::{Mat, Matrix, Real};

/// A named parameter with its gradient buffer. Value and gradient always
/// share a shape.
#[derive(Clone, Debug)]
pub struct ParamTensor {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        ParamTensor {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn len(&self) -> usize {
        self.value.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Materialize parameters for a graph's declarations, in declaration order,
/// from a single seeded generator. Weight matrices draw uniform values in
/// `±sqrt(6 / (fan_in + fan_out))`; biases start at zero and normalization
/// scales at one.
pub fn init_params(graph: &Graph, seed: u64) -> Vec<ParamTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    graph
        .param_decls()
        .iter()
        .map(|decl| {
            let mut value = Matrix::zeros(decl.rows, decl.cols);
            match decl.init {
                ParamInit::Xavier => {
                    let limit = (6.0 / (decl.rows + decl.cols) as f64).sqrt();
                    for v in value.data_mut() {
                        *v = rng.gen_range(-limit..limit) as f32;
                    }
                }
                ParamInit::Zero => {}
                ParamInit::One => value.fill(1.0),
            }
            ParamTensor::new(decl.name.clone(), value)
        })
        .collect()
}

/// Total trainable scalar count.
pub fn total_param_count(params: &[ParamTensor]) -> usize {
    params.iter().map(ParamTensor::len).sum()
}

/// Borrow parameter values in a given precision for graph execution.
pub fn values_as<T: Real>(params: &[ParamTensor]) -> Vec<Mat<T>> {
    params.iter().map(|p| p.value.convert::<T>()).collect()
}

/// Overwrite gradient buffers with freshly computed gradients.
pub fn write_grads(params: &mut [ParamTensor], grads: Vec<Matrix>) {
    debug_assert_eq!(params.len(), grads.len());
    for (p, g) in params.iter_mut().zip(grads) {
        p.grad = g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Dim;

    #[test]
    fn init_is_deterministic_and_respects_kinds() {
        let mut g = Graph::new("t");
        let _w = g.param("w", 4, 8, ParamInit::Xavier);
        let _b = g.param("b", 1, 8, ParamInit::Zero);
        let _gamma = g.param("gamma", 1, 8, ParamInit::One);
        let _x = g.input(Dim::Fixed(1), Dim::Fixed(4));

        let a = init_params(&g, 7);
        let b = init_params(&g, 7);
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.value.data(), pb.value.data());
        }
        let limit = (6.0 / 12.0f64).sqrt() as f32;
        assert!(a[0].value.data().iter().all(|v| v.abs() < limit));
        assert!(a[1].value.data().iter().all(|&v| v == 0.0));
        assert!(a[2].value.data().iter().all(|&v| v == 1.0));

        let c = init_params(&g, 8);
        assert_ne!(a[0].value.data(), c[0].value.data());
    }
}
