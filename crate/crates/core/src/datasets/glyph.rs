//! Procedural stand-in for Omniglot characters and the multi-character
//! spatial/stacked pair datasets built from them.

use super::{glyph_mi, mix_seed, PairDataset};
use crate::error::{Error, Result};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Characters tiled in an `(m, n)` grid of cells, one channel.
    Spatial,
    /// One character per channel of a single cell.
    Stacked,
}

fn default_cell_px() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphDatasetSpec {
    pub layout: Layout,
    pub alphabet_sizes: Vec<usize>,
    /// `(rows, cols)` of the spatial grid; ignored for stacked layouts.
    #[serde(default)]
    pub grid: Option<(usize, usize)>,
    #[serde(default = "default_cell_px")]
    pub cell_px: usize,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub jitter: f64,
}

impl GlyphDatasetSpec {
    pub fn stacked(alphabet_sizes: Vec<usize>, n_samples: usize, cell_px: usize, seed: u64) -> Self {
        Self { layout: Layout::Stacked, alphabet_sizes, grid: None, cell_px, n_samples, seed, jitter: 0.0 }
    }

    pub fn spatial(alphabet_sizes: Vec<usize>, grid: (usize, usize), n_samples: usize, seed: u64) -> Self {
        Self {
            layout: Layout::Spatial,
            alphabet_sizes,
            grid: Some(grid),
            cell_px: default_cell_px(),
            n_samples,
            seed,
            jitter: 0.0,
        }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet_sizes.is_empty() {
            return Err(Error::InvalidSpec("at least one alphabet is required".into()));
        }
        if self.alphabet_sizes.contains(&0) {
            return Err(Error::InvalidSpec("alphabet sizes must be positive".into()));
        }
        if self.cell_px < 4 {
            return Err(Error::InvalidSpec("cell_px must be at least 4".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidSpec("n_samples must be positive".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidSpec("jitter must be a nonnegative real".into()));
        }
        if self.layout == Layout::Spatial {
            let (m, n) = self.grid.unwrap_or((1, self.alphabet_sizes.len()));
            if m * n != self.alphabet_sizes.len() {
                return Err(Error::InvalidSpec(format!(
                    "grid {m}x{n} holds {} cells but {} alphabets were given",
                    m * n,
                    self.alphabet_sizes.len()
                )));
            }
        }
        Ok(())
    }

    /// `(h, w, c)` of one image.
    pub fn image_shape(&self) -> [usize; 3] {
        let c = self.cell_px;
        match self.layout {
            Layout::Stacked => [c, c, self.alphabet_sizes.len()],
            Layout::Spatial => {
                let (m, n) = self.grid.unwrap_or((1, self.alphabet_sizes.len()));
                [c * m, c * n, 1]
            }
        }
    }

    pub fn mi(&self) -> f64 {
        glyph_mi(&self.alphabet_sizes)
    }
}

#[derive(Clone, Copy)]
struct Stroke {
    p0: (f64, f64),
    p1: (f64, f64),
    p2: (f64, f64),
}

impl Stroke {
    fn at(&self, t: f64) -> (f64, f64) {
        let u = 1.0 - t;
        (
            u * u * self.p0.0 + 2.0 * u * t * self.p1.0 + t * t * self.p2.0,
            u * u * self.p0.1 + 2.0 * u * t * self.p1.1 + t * t * self.p2.1,
        )
    }
}

fn glyph_strokes(alphabet_id: usize, char_id: usize) -> Vec<Stroke> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[0x6c79_7068, alphabet_id as u64, char_id as u64]));
    let n = rng.random_range(2..=4);
    let pt = |rng: &mut ChaCha8Rng| (rng.random_range(0.12..0.88), rng.random_range(0.12..0.88));
    (0..n)
        .map(|_| Stroke { p0: pt(&mut rng), p1: pt(&mut rng), p2: pt(&mut rng) })
        .collect()
}

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn base_pattern(alphabet_id: usize, char_id: usize, cell_px: usize) -> Array2<f64> {
    const SEGMENTS: usize = 24;
    let strokes = glyph_strokes(alphabet_id, char_id);
    let scale = cell_px as f64;
    let half_width = (0.05 * scale).max(0.55);
    let polylines: Vec<Vec<(f64, f64)>> = strokes
        .iter()
        .map(|s| {
            (0..=SEGMENTS)
                .map(|k| {
                    let (x, y) = s.at(k as f64 / SEGMENTS as f64);
                    (x * scale, y * scale)
                })
                .collect()
        })
        .collect();
    Array2::from_shape_fn((cell_px, cell_px), |(r, c)| {
        let p = (c as f64 + 0.5, r as f64 + 0.5);
        let d = polylines
            .iter()
            .flat_map(|pl| pl.windows(2).map(move |w| seg_dist(p, w[0], w[1])))
            .fold(f64::INFINITY, f64::min);
        (half_width + 0.5 - d).clamp(0.0, 1.0)
    })
}

/// Renders character `char_id` of alphabet `alphabet_id` into a
/// `(cell_px, cell_px, 1)` image.
///
/// The stroke pattern depends only on `(alphabet_id, char_id)`; uniform noise
/// in `[-jitter, jitter]` seeded by `jitter_seed` is added and pixels are
/// clamped to `[0, 1]`.
pub fn render_glyph(
    alphabet_id: usize,
    alphabet_size: usize,
    char_id: usize,
    cell_px: usize,
    jitter_seed: u64,
    jitter: f64,
) -> Result<Array3<f32>> {
    if char_id >= alphabet_size {
        return Err(Error::CharOutOfRange { char_id, size: alphabet_size });
    }
    let base = base_pattern(alphabet_id, char_id, cell_px);
    let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
    Ok(Array3::from_shape_fn((cell_px, cell_px, 1), |(r, c, _)| {
        let noise = if jitter > 0.0 { rng.random_range(-jitter..=jitter) } else { 0.0 };
        (base[[r, c]] + noise).clamp(0.0, 1.0) as f32
    }))
}

/// Draws `z` uniformly over all character combinations; `x` shows character
/// `zᵢ` of alphabet `i`, `y` shows `(zᵢ + 1) mod lᵢ`.
pub fn generate_glyph_pairs(spec: &GlyphDatasetSpec) -> Result<PairDataset> {
    spec.validate()?;
    let k = spec.alphabet_sizes.len();
    let shape = spec.image_shape();
    let dim: usize = shape.iter().product();
    let cell = spec.cell_px;
    let mut x = Array2::<f32>::zeros((spec.n_samples, dim));
    let mut y = Array2::<f32>::zeros((spec.n_samples, dim));
    let mut z = Array2::<u32>::zeros((spec.n_samples, k));
    let mut label_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, 0x7a]));
    let bases: Vec<Vec<Array2<f64>>> = spec
        .alphabet_sizes
        .iter()
        .enumerate()
        .map(|(a, &l)| (0..l).map(|c| base_pattern(a, c, cell)).collect())
        .collect();

    for i in 0..spec.n_samples {
        for (slot, &l) in spec.alphabet_sizes.iter().enumerate() {
            let zi = label_rng.random_range(0..l);
            z[[i, slot]] = zi as u32;
            for (side, ch, out) in [(0u64, zi, &mut x), (1u64, (zi + 1) % l, &mut y)] {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, i as u64, side, slot as u64]));
                let base = &bases[slot][ch];
                for r in 0..cell {
                    for c in 0..cell {
                        let noise = if spec.jitter > 0.0 { rng.random_range(-spec.jitter..=spec.jitter) } else { 0.0 };
                        let v = (base[[r, c]] + noise).clamp(0.0, 1.0) as f32;
                        out[[i, pixel_index(spec, shape, slot, r, c)]] = v;
                    }
                }
            }
        }
    }

    Ok(PairDataset {
        x,
        y,
        z,
        image_shape: shape,
        mi_certificate: spec.mi(),
        factor_cardinalities: spec.alphabet_sizes.clone(),
    })
}

fn pixel_index(spec: &GlyphDatasetSpec, shape: [usize; 3], slot: usize, r: usize, c: usize) -> usize {
    let [_, w, ch] = shape;
    match spec.layout {
        Layout::Stacked => (r * w + c) * ch + slot,
        Layout::Spatial => {
            let cols = spec.grid.map_or(spec.alphabet_sizes.len(), |g| g.1);
            let (gr, gc) = (slot / cols, slot % cols);
            (gr * spec.cell_px + r) * w + gc * spec.cell_px + c
        }
    }
}
