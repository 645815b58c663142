//! Paired-image datasets with exactly known mutual information.
//!
//! Each sample draws a discrete latent `z`, then renders `x` and `y` from it
//! deterministically up to pixel noise, so `I(x; y)` equals the entropy of the
//! shared part of `z`.

mod cache;
mod glyph;
mod omniglot;
mod shapes;

pub use cache::{load_dataset, save_dataset, CacheHeader, FORMAT_VERSION};
pub use glyph::{generate_glyph_pairs, render_glyph, GlyphDatasetSpec, Layout};
pub use omniglot::{load_omniglot, AlphabetEntry};
pub use shapes::{generate_shapes_pairs, render_shapes_scene, ShapesDatasetSpec, SHAPES_FACTORS};

use crate::error::{Error, Result};
use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Either dataset family, as stored in cache headers and sweep configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DatasetSpec {
    Glyph(GlyphDatasetSpec),
    Shapes(ShapesDatasetSpec),
}

impl DatasetSpec {
    pub fn generate(&self) -> Result<PairDataset> {
        match self {
            DatasetSpec::Glyph(s) => generate_glyph_pairs(s),
            DatasetSpec::Shapes(s) => generate_shapes_pairs(s),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            DatasetSpec::Glyph(s) => s.seed,
            DatasetSpec::Shapes(s) => s.seed,
        }
    }

    pub fn n_samples(&self) -> usize {
        match self {
            DatasetSpec::Glyph(s) => s.n_samples,
            DatasetSpec::Shapes(s) => s.n_samples,
        }
    }
}

/// Mutual information `I(x; y)` of a dataset spec in nats.
pub fn mi_of_spec(spec: &DatasetSpec) -> f64 {
    match spec {
        DatasetSpec::Glyph(s) => glyph_mi(&s.alphabet_sizes),
        DatasetSpec::Shapes(s) => s.shared_cardinalities().iter().map(|&c| (c as f64).ln()).sum(),
    }
}

/// `Σ ln lᵢ` over alphabet sizes.
pub fn glyph_mi(alphabet_sizes: &[usize]) -> f64 {
    alphabet_sizes.iter().map(|&l| (l as f64).ln()).sum()
}

/// Paired observations with their latent labels.
///
/// Images are flattened one sample per row in `(h, w, c)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pub x: Array2<f32>,
    pub y: Array2<f32>,
    pub z: Array2<u32>,
    pub image_shape: [usize; 3],
    pub mi_certificate: f64,
    pub factor_cardinalities: Vec<usize>,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn n_factors(&self) -> usize {
        self.factor_cardinalities.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.nrows();
        if self.y.nrows() != n || self.z.nrows() != n {
            return Err(Error::Shape("x, y and z have different sample counts".into()));
        }
        if self.x.ncols() != self.input_dim() || self.y.ncols() != self.input_dim() {
            return Err(Error::Shape("image rows do not match image_shape".into()));
        }
        if self.z.ncols() != self.n_factors() {
            return Err(Error::Shape("z columns do not match factor count".into()));
        }
        for row in self.z.rows() {
            for (&v, &c) in row.iter().zip(&self.factor_cardinalities) {
                if v as usize >= c {
                    return Err(Error::InvalidSpec(format!("label {v} outside [0, {c})")));
                }
            }
        }
        if self.x.iter().chain(self.y.iter()).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidSpec("pixel outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Rows of `x` as `f64`, for feeding the encoders.
    pub fn x_rows(&self, idx: &[usize]) -> Array2<f64> {
        gather(self.x.view(), idx)
    }

    pub fn y_rows(&self, idx: &[usize]) -> Array2<f64> {
        gather(self.y.view(), idx)
    }

    /// First `n` samples.
    pub fn truncated(&self, n: usize) -> PairDataset {
        let n = n.min(self.len());
        PairDataset {
            x: self.x.slice(s![..n, ..]).to_owned(),
            y: self.y.slice(s![..n, ..]).to_owned(),
            z: self.z.slice(s![..n, ..]).to_owned(),
            ..self.clone()
        }
    }

    /// Breaks the pairing by permuting `y`; the certificate becomes 0.
    pub fn with_shuffled_pairs(&self, seed: u64) -> PairDataset {
        let mut perm: Vec<usize> = (0..self.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let y = gather(self.y.view(), &perm).mapv(|v| v as f32);
        PairDataset { y, mi_certificate: 0.0, ..self.clone() }
    }
}

fn gather(a: ArrayView2<f32>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), a.ncols()));
    for (mut o, &i) in out.rows_mut().into_iter().zip(idx) {
        o.iter_mut().zip(a.row(i)).for_each(|(d, &s)| *d = s as f64);
    }
    out
}

/// SplitMix64 finalizer; derives independent stream seeds from tuples.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}
