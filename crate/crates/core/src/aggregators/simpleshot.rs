//! Nearest-prototype classification: class prototypes are means over all
//! instance rows pooled across a class's training bags; queries match by
//! cosine similarity of their mean-pooled embedding.

use super::bgap::bgap;
use crate::data::EmbeddingBag;
use crate::nn::Matrix;
use crate::{Error, Result};

/// Non-trainable class prototypes, one row per class.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    matrix: Matrix,
    /// Whether rows were L2-normalized after fitting. Cosine matching is
    /// scale-invariant, so this never changes predictions; it is a storage
    /// convention carried through serialization.
    pub normalized: bool,
}

impl Prototypes {
    pub fn classes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn d(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub(crate) fn from_parts(matrix: Matrix, normalized: bool) -> Self {
        Prototypes { matrix, normalized }
    }

    pub fn prototype(&self, class: usize) -> &[f32] {
        self.matrix.row(class)
    }
}

/// Pooled-instance class means. Every class in `0..classes` must appear in
/// the training items.
pub fn fit_prototypes(items: &[(&EmbeddingBag, usize)], classes: usize) -> Result<Prototypes> {
    if classes < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    let d = items
        .first()
        .map(|(bag, _)| bag.d())
        .ok_or_else(|| Error::Config("empty training set".into()))?;
    let mut sums = vec![vec![0.0f64; d]; classes];
    let mut counts = vec![0u64; classes];
    for (bag, label) in items {
        if *label >= classes {
            return Err(Error::Config(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        if bag.d() != d {
            return Err(Error::Shape(format!(
                "bag '{}' has d={}, expected {d}",
                bag.slide_id,
                bag.d()
            )));
        }
        let m = bag.matrix();
        for r in 0..m.rows() {
            for (s, &v) in sums[*label].iter_mut().zip(m.row(r)) {
                *s += v as f64;
            }
        }
        counts[*label] += m.rows() as u64;
    }
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::Config(format!(
                "class {class} has no training bags; cannot fit a prototype"
            )));
        }
    }
    let mut matrix = Matrix::zeros(classes, d);
    for (class, sum) in sums.iter().enumerate() {
        let inv = 1.0 / counts[class] as f64;
        for (j, &s) in sum.iter().enumerate() {
            matrix.set(class, j, (s * inv) as f32);
        }
    }
    Ok(Prototypes {
        matrix,
        normalized: false,
    })
}

/// Cosine similarity with 64-bit accumulation; zero-norm operands score 0.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += x as f64 * x as f64;
        nb += y as f64 * y as f64;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Argmax over class cosine similarities between the bag's mean-pooled
/// embedding and each prototype; ties break to the lowest class index.
pub fn simpleshot_predict(bag: &EmbeddingBag, prototypes: &Prototypes) -> Result<usize> {
    if bag.d() != prototypes.d() {
        return Err(Error::Shape(format!(
            "bag d={} vs prototype d={}",
            bag.d(),
            prototypes.d()
        )));
    }
    let query = bgap(bag);
    let mut best = 0usize;
    let mut best_sim = f64::NEG_INFINITY;
    for class in 0..prototypes.classes() {
        let sim = cosine_similarity(&query, prototypes.prototype(class));
        if sim > best_sim {
            best_sim = sim;
            best = class;
        }
    }
    Ok(best)
}
