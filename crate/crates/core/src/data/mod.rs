//! Dataset ingestion: manifests, bag files, stratified splits, and the
//! synthetic generator.

mod bag;
mod manifest;
mod split;
mod synth;

pub use bag::{read_bag, write_bag, EmbeddingBag, BAG_MAGIC, BAG_VERSION};
pub use manifest::{load_manifest, write_manifest, Manifest, SlideRecord, MANIFEST_HEADER};
pub use split::{stratified_kfold, FoldPlan};
pub use synth::{class_centroids, synth_dataset, SynthSpec};

use std::path::Path;

use crate::{Error, Result};

/// A manifest with every bag resident in memory.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub classes: Vec<String>,
    pub slides: Vec<LoadedSlide>,
    /// Shared embedding dimension.
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct LoadedSlide {
    pub record: SlideRecord,
    pub bag: EmbeddingBag,
}

impl LoadedDataset {
    /// Read every bag named by the manifest, resolving relative paths
    /// against `base_dir`. Enforces a single embedding dimension across the
    /// dataset.
    pub fn load(manifest: &Manifest, base_dir: &Path) -> Result<Self> {
        let mut slides = Vec::with_capacity(manifest.records.len());
        let mut dim: Option<usize> = None;
        for record in &manifest.records {
            let path = manifest.resolve_bag_path(base_dir, record);
            let mut bag = read_bag(&path)?;
            bag.slide_id = record.slide_id.clone();
            match dim {
                None => dim = Some(bag.d()),
                Some(d) if d != bag.d() => {
                    return Err(Error::Format(format!(
                        "bag '{}' has d={}, but the dataset uses d={d}",
                        record.slide_id,
                        bag.d()
                    )));
                }
                _ => {}
            }
            slides.push(LoadedSlide {
                record: record.clone(),
                bag,
            });
        }
        let dim = dim.ok_or_else(|| Error::Config("manifest has no slides".into()))?;
        Ok(LoadedDataset {
            classes: manifest.classes.clone(),
            slides,
            dim,
        })
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// `(bag, label)` views for a set of record indices.
    pub fn items(&self, indices: &[usize]) -> Vec<(&EmbeddingBag, usize)> {
        indices
            .iter()
            .map(|&i| (&self.slides[i].bag, self.slides[i].record.label))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    #[test]
    fn load_dataset_rejects_mixed_dims() {
        let dir = tempfile::tempdir().unwrap();
        let b1 = EmbeddingBag::new("s1", Matrix::from_vec(2, 3, vec![0.0; 6]).unwrap()).unwrap();
        let b2 = EmbeddingBag::new("s2", Matrix::from_vec(2, 4, vec![0.0; 8]).unwrap()).unwrap();
        write_bag(&b1, &dir.path().join("s1.bag")).unwrap();
        write_bag(&b2, &dir.path().join("s2.bag")).unwrap();
        let manifest = Manifest {
            classes: vec!["a".into(), "b".into()],
            records: vec![
                SlideRecord {
                    slide_id: "s1".into(),
                    label: 0,
                    center: "HCUV".into(),
                    bag_path: "s1.bag".into(),
                },
                SlideRecord {
                    slide_id: "s2".into(),
                    label: 1,
                    center: "HUSC".into(),
                    bag_path: "s2.bag".into(),
                },
            ],
        };
        let err = LoadedDataset::load(&manifest, dir.path()).unwrap_err();
        assert!(err.to_string().contains("d="), "{err}");
    }

    #[test]
    fn missing_bag_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = Manifest {
            classes: vec!["a".into(), "b".into()],
            records: vec![SlideRecord {
                slide_id: "s1".into(),
                label: 0,
                center: "HCUV".into(),
                bag_path: "nowhere.bag".into(),
            }],
        };
        let err = LoadedDataset::load(&manifest, dir.path()).unwrap_err();
        assert!(err.to_string().contains("nowhere.bag"), "{err}");
    }
}
