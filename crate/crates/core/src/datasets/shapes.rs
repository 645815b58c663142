//! Two-view scenes with six discrete factors: object hue, wall hue, floor
//! hue, shape, size and view. Pairs share the first five factors and are
//! rendered at the two extreme views.

use super::{mix_seed, PairDataset};
use crate::error::{Error, Result};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Cardinalities of (object hue, wall hue, floor hue, shape, size, view).
pub const SHAPES_FACTORS: [usize; 6] = [10, 10, 10, 4, 6, 15];

const VIEW_X: usize = 0;
const VIEW_Y: usize = 14;

fn default_factors() -> Vec<usize> {
    SHAPES_FACTORS.to_vec()
}

fn default_image_px() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapesDatasetSpec {
    #[serde(default = "default_factors")]
    pub factor_cardinalities: Vec<usize>,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default = "default_image_px")]
    pub image_px: usize,
}

impl Default for ShapesDatasetSpec {
    fn default() -> Self {
        Self { factor_cardinalities: default_factors(), n_samples: 1024, seed: 0, image_px: 32 }
    }
}

impl ShapesDatasetSpec {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.factor_cardinalities != SHAPES_FACTORS {
            return Err(Error::InvalidSpec(format!(
                "factor cardinalities are fixed at {SHAPES_FACTORS:?}, got {:?}",
                self.factor_cardinalities
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidSpec("n_samples must be positive".into()));
        }
        if self.image_px < 8 {
            return Err(Error::InvalidSpec("image_px must be at least 8".into()));
        }
        Ok(())
    }

    /// Cardinalities of the factors shared by both views.
    pub fn shared_cardinalities(&self) -> &[usize] {
        &self.factor_cardinalities[..5]
    }

    /// Entropy of all six factors, `ln 360000`.
    pub fn total_entropy(&self) -> f64 {
        self.factor_cardinalities.iter().map(|&c| (c as f64).ln()).sum()
    }
}

fn hue_rgb(index: usize, count: usize) -> [f64; 3] {
    let h = index as f64 / count as f64 * 6.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    // Keep colours away from pure black/white so hues stay distinct under shading.
    [0.15 + 0.8 * r, 0.15 + 0.8 * g, 0.15 + 0.8 * b]
}

fn inside_shape(shape: usize, dx: f64, dy: f64, radius: f64) -> bool {
    match shape {
        0 => dx.abs() <= radius && dy.abs() <= radius,
        1 => dx * dx + dy * dy <= radius * radius,
        2 => dy <= radius && dy >= -radius && dx.abs() <= (dy + radius) * 0.5,
        _ => dx.abs() + dy.abs() <= radius,
    }
}

/// Renders one scene as an `(image_px, image_px, 3)` RGB image.
///
/// `factors` is `[object hue, wall hue, floor hue, shape, size, view]`.
pub fn render_shapes_scene(factors: [usize; 6], image_px: usize) -> Result<Array3<f32>> {
    for (i, (&f, &c)) in factors.iter().zip(&SHAPES_FACTORS).enumerate() {
        if f >= c {
            return Err(Error::InvalidSpec(format!("factor {i} value {f} outside [0, {c})")));
        }
    }
    let [obj, wall, floor, shape, size, view] = factors;
    let px = image_px as f64;
    let t = view as f64 / (SHAPES_FACTORS[5] - 1) as f64 - 0.5;
    let shift = t * 0.3 * px;
    let shear = t * 0.4;
    let horizon = 0.62 * px;
    let radius = (0.10 + 0.03 * size as f64) * px;
    let (cx, cy) = (0.5 * px + shift, horizon - 0.05 * px);
    let (obj_c, wall_c, floor_c) = (hue_rgb(obj, 10), hue_rgb(wall, 10), hue_rgb(floor, 10));

    let mut img = Array3::<f32>::zeros((image_px, image_px, 3));
    let mut pixels = Array2::from_elem((image_px, image_px), [0.0f64; 3]);
    for ((r, c), p) in pixels.indexed_iter_mut() {
        let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
        let boundary = horizon + shear * (x - 0.5 * px);
        *p = if inside_shape(shape, x - cx, y - cy, radius) {
            obj_c
        } else if y < boundary {
            // Slight vertical gradient on the wall.
            let k = 0.85 + 0.15 * y / px;
            [wall_c[0] * k, wall_c[1] * k, wall_c[2] * k]
        } else {
            floor_c
        };
    }
    for ((r, c), p) in pixels.indexed_iter() {
        for ch in 0..3 {
            img[[r, c, ch]] = p[ch].clamp(0.0, 1.0) as f32;
        }
    }
    Ok(img)
}

/// `x` at view 0 and `y` at view 14 of a uniformly drawn configuration of
/// the five shared factors.
pub fn generate_shapes_pairs(spec: &ShapesDatasetSpec) -> Result<PairDataset> {
    spec.validate()?;
    let px = spec.image_px;
    let dim = px * px * 3;
    let mut x = Array2::<f32>::zeros((spec.n_samples, dim));
    let mut y = Array2::<f32>::zeros((spec.n_samples, dim));
    let mut z = Array2::<u32>::zeros((spec.n_samples, 5));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, 0x5348]));
    for i in 0..spec.n_samples {
        let mut f = [0usize; 6];
        for (k, &c) in SHAPES_FACTORS[..5].iter().enumerate() {
            f[k] = rng.random_range(0..c);
            z[[i, k]] = f[k] as u32;
        }
        f[5] = VIEW_X;
        let xi = render_shapes_scene(f, px)?;
        f[5] = VIEW_Y;
        let yi = render_shapes_scene(f, px)?;
        x.row_mut(i).iter_mut().zip(xi.iter()).for_each(|(d, s)| *d = *s);
        y.row_mut(i).iter_mut().zip(yi.iter()).for_each(|(d, s)| *d = *s);
    }
    Ok(PairDataset {
        x,
        y,
        z,
        image_shape: [px, px, 3],
        mi_certificate: spec.shared_cardinalities().iter().map(|&c| (c as f64).ln()).sum(),
        factor_cardinalities: spec.shared_cardinalities().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_and_certificate() {
        let s = ShapesDatasetSpec::default();
        assert!((s.total_entropy() - 360000f64.ln()).abs() < 1e-12);
        assert!((s.total_entropy() - 12.79386).abs() < 1e-4);
        let d = generate_shapes_pairs(&ShapesDatasetSpec::new(8, 1)).unwrap();
        assert!((d.mi_certificate - 10.0858).abs() < 1e-4);
        d.validate().unwrap();
        assert_eq!(d.z.ncols(), 5);
    }

    #[test]
    fn views_differ_but_rerender_identically() {
        let f = [3, 7, 1, 2, 5, VIEW_X];
        let a = render_shapes_scene(f, 32).unwrap();
        let b = render_shapes_scene(f, 32).unwrap();
        assert_eq!(a, b);
        let mut g = f;
        g[5] = VIEW_Y;
        assert_ne!(a, render_shapes_scene(g, 32).unwrap());
    }

    #[test]
    fn every_factor_changes_the_image() {
        let base = [1, 2, 3, 1, 2, VIEW_X];
        let img = render_shapes_scene(base, 32).unwrap();
        for k in 0..6 {
            let mut f = base;
            f[k] = (f[k] + 1) % SHAPES_FACTORS[k];
            assert_ne!(img, render_shapes_scene(f, 32).unwrap(), "factor {k}");
        }
    }

    #[test]
    fn factor_cardinalities_are_fixed() {
        let mut s = ShapesDatasetSpec::default();
        s.factor_cardinalities[0] = 9;
        assert!(generate_shapes_pairs(&s).is_err());
    }
}
