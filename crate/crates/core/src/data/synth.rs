//! Synthetic dataset generator.
//!
//! Stands in for the private slide collection so every downstream property
//! is testable. Each class gets a seeded-random centroid; a bag of class
//! `s` mixes `ceil(rho * N)` salient instances drawn around that centroid
//! with background instances from a noise distribution shared across
//! classes. Salient rows come first, so tests can identify them by index;
//! aggregators are permutation-invariant, so the ordering carries no signal
//! a model could exploit.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bag::{write_bag, EmbeddingBag};
use super::manifest::{write_manifest, Manifest, SlideRecord};
use crate::nn::Matrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Number of classes (>= 2).
    pub classes: usize,
    pub slides_per_class: usize,
    /// Embedding dimension.
    pub dim: usize,
    /// Instances per bag, drawn uniformly from this inclusive range.
    pub instances_min: usize,
    pub instances_max: usize,
    /// Fraction of instances carrying class signal, in (0, 1].
    pub salient_fraction: f64,
    /// Noise around the class centroid for salient instances.
    pub within_noise: f64,
    /// Noise of the shared background distribution.
    pub background_noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.slides_per_class == 0 {
            return Err(Error::Config("slides_per_class must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.instances_min == 0 || self.instances_min > self.instances_max {
            return Err(Error::Config(format!(
                "invalid instance range {}..={}",
                self.instances_min, self.instances_max
            )));
        }
        if !(self.salient_fraction > 0.0 && self.salient_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "salient_fraction must be in (0, 1], got {}",
                self.salient_fraction
            )));
        }
        if self.within_noise < 0.0 || self.background_noise < 0.0 {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }

    pub fn class_name(index: usize) -> String {
        format!("c{index:02}")
    }

    /// Salient rows occupy the front of each bag.
    pub fn salient_count(&self, n: usize) -> usize {
        (self.salient_fraction * n as f64).ceil() as usize
    }
}

/// Class centroids drawn from the spec's seed, one `dim`-vector per class.
pub fn class_centroids(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.classes)
        .map(|_| {
            (0..spec.dim)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect()
        })
        .collect()
}

/// Generate bags under `out_dir/bags/` plus `out_dir/manifest.csv`, and
/// return the manifest (bag paths relative to `out_dir`). Byte-identical
/// output for identical specs.
pub fn synth_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let bags_dir = out_dir.join("bags");
    std::fs::create_dir_all(&bags_dir).map_err(|e| Error::io(&bags_dir, e))?;

    let centroids = class_centroids(spec);
    // a separate stream for instance noise keeps centroids stable across
    // spec changes that only affect bag contents
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut normal = |rng: &mut ChaCha8Rng| -> f64 {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    };

    let classes: Vec<String> = (0..spec.classes).map(SynthSpec::class_name).collect();
    let mut records = Vec::with_capacity(spec.classes * spec.slides_per_class);

    for (label, centroid) in centroids.iter().enumerate() {
        for i in 0..spec.slides_per_class {
            let n = rng.gen_range(spec.instances_min..=spec.instances_max);
            let n_salient = spec.salient_count(n);
            let mut values = Vec::with_capacity(n * spec.dim);
            for row in 0..n {
                if row < n_salient {
                    for &mu in centroid {
                        values.push((mu + spec.within_noise * normal(&mut rng)) as f32);
                    }
                } else {
                    for _ in 0..spec.dim {
                        values.push((spec.background_noise * normal(&mut rng)) as f32);
                    }
                }
            }
            let slide_id = format!("{}_{i:03}", classes[label]);
            let bag = EmbeddingBag::new(
                slide_id.clone(),
                Matrix::from_vec(n, spec.dim, values)?,
            )?;
            let rel_path = Path::new("bags").join(format!("{slide_id}.bag"));
            write_bag(&bag, &out_dir.join(&rel_path))?;
            records.push(SlideRecord {
                slide_id,
                label,
                center: if i % 2 == 0 { "HCUV".into() } else { "HUSC".into() },
                bag_path: rel_path,
            });
        }
    }

    let manifest = Manifest { classes, records };
    write_manifest(&manifest, &out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
