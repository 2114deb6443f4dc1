//! The four slide-level prediction strategies plus the shared classifier
//! head: mean pooling (BGAP), gated attention (ABMIL), a light transformer
//! (TransMIL-lite), and non-trainable nearest-prototype matching
//! (MI-SimpleShot).

mod abmil;
mod bgap;
mod head;
mod model_io;
mod simpleshot;
mod transmil;

pub use abmil::{AbmilModel, ABMIL_HIDDEN};
pub use bgap::{bgap, BgapHead};
pub use head::{MlpHead, MLP_HIDDEN};
pub use model_io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use simpleshot::{cosine_similarity, fit_prototypes, simpleshot_predict, Prototypes};
pub use transmil::{TransmilLiteModel, TRANSMIL_HEADS, TRANSMIL_LAYERS, TRANSMIL_MODEL_DIM};

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingBag;
use crate::nn::{forward, Graph, Matrix, NodeId, ParamTensor};
use crate::{Error, Result};

/// Aggregation strategy selector, named after the reported methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    SimpleShot,
    Bgap,
    Abmil,
    Transmil,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 4] = [
        AggregatorKind::SimpleShot,
        AggregatorKind::Bgap,
        AggregatorKind::Abmil,
        AggregatorKind::Transmil,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::SimpleShot => "simpleshot",
            AggregatorKind::Bgap => "bgap",
            AggregatorKind::Abmil => "abmil",
            AggregatorKind::Transmil => "transmil",
        }
    }
}

impl std::str::FromStr for AggregatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simpleshot" => Ok(AggregatorKind::SimpleShot),
            "bgap" => Ok(AggregatorKind::Bgap),
            "abmil" => Ok(AggregatorKind::Abmil),
            "transmil" => Ok(AggregatorKind::Transmil),
            other => Err(Error::Config(format!(
                "unknown aggregator '{other}' (expected simpleshot|bgap|abmil|transmil)"
            ))),
        }
    }
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Shared surface of the gradient-trained aggregators: a static graph whose
/// output node is a `1 x S` softmax row.
pub trait TrainableModel {
    fn graph(&self) -> &Graph;
    fn probs_node(&self) -> NodeId;
    fn params(&self) -> &[ParamTensor];
    fn params_mut(&mut self) -> &mut [ParamTensor];
    /// Graph inputs for one bag (the bag matrix, plus any constant inputs
    /// the architecture needs).
    fn inputs_for(&self, bag: &EmbeddingBag) -> Vec<Matrix>;
    fn classes(&self) -> usize;
    fn input_dim(&self) -> usize;
}

/// Softmax class scores for one bag.
pub fn predict_probs<M: TrainableModel + ?Sized>(model: &M, bag: &EmbeddingBag) -> Result<Vec<f32>> {
    if bag.d() != model.input_dim() {
        return Err(Error::Shape(format!(
            "bag d={} but model expects d={}",
            bag.d(),
            model.input_dim()
        )));
    }
    let param_refs: Vec<&Matrix> = model.params().iter().map(|p| &p.value).collect();
    let tape = forward(model.graph(), &param_refs, &model.inputs_for(bag))?;
    Ok(tape.value(model.probs_node()).row(0).to_vec())
}

/// Argmax with ties broken toward the lowest class index.
pub fn argmax_class(scores: &[f32]) -> usize {
    let mut best = 0;
    let mut best_score = f32::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    best
}

/// A trained aggregator of any kind.
#[derive(Clone, Debug)]
pub enum AggregatorModel {
    Bgap(BgapHead),
    Abmil(AbmilModel),
    Transmil(TransmilLiteModel),
    SimpleShot(Prototypes),
}

impl AggregatorModel {
    pub fn kind(&self) -> AggregatorKind {
        match self {
            AggregatorModel::Bgap(_) => AggregatorKind::Bgap,
            AggregatorModel::Abmil(_) => AggregatorKind::Abmil,
            AggregatorModel::Transmil(_) => AggregatorKind::Transmil,
            AggregatorModel::SimpleShot(_) => AggregatorKind::SimpleShot,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            AggregatorModel::Bgap(m) => m.classes,
            AggregatorModel::Abmil(m) => m.classes,
            AggregatorModel::Transmil(m) => m.classes,
            AggregatorModel::SimpleShot(p) => p.classes(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            AggregatorModel::Bgap(m) => m.d,
            AggregatorModel::Abmil(m) => m.d,
            AggregatorModel::Transmil(m) => m.d,
            AggregatorModel::SimpleShot(p) => p.d(),
        }
    }

    /// Predicted class index for one bag.
    pub fn predict(&self, bag: &EmbeddingBag) -> Result<usize> {
        match self {
            AggregatorModel::Bgap(m) => Ok(argmax_class(&predict_probs(m, bag)?)),
            AggregatorModel::Abmil(m) => Ok(argmax_class(&predict_probs(m, bag)?)),
            AggregatorModel::Transmil(m) => Ok(argmax_class(&predict_probs(m, bag)?)),
            AggregatorModel::SimpleShot(p) => simpleshot_predict(bag, p),
        }
    }

    /// Total trainable scalar count; prototypes are non-trainable and
    /// report zero.
    pub fn param_count(&self) -> usize {
        match self {
            AggregatorModel::Bgap(m) => crate::nn::total_param_count(m.params()),
            AggregatorModel::Abmil(m) => crate::nn::total_param_count(m.params()),
            AggregatorModel::Transmil(m) => crate::nn::total_param_count(m.params()),
            AggregatorModel::SimpleShot(_) => 0,
        }
    }
}
