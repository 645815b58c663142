//! Encoders and the critic built on top of them.
//!
//! The critic factors through two encoders, `f(x, y) = ⟨φ(x), ψ(y)⟩` or
//! `φ(x)ᵀ W ψ(y)`, so the learned representations can be probed directly.

use crate::autodiff::{ConvGeom, Graph, Tensor, Var};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Mlp,
    Conv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Softplus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    SeparableDot,
    Bilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    X,
    Y,
}

const CONV_KERNEL: usize = 3;
const CONV_STRIDE: usize = 2;
const CONV_PAD: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub arch: Arch,
    /// `(h, w, c)` of one input image.
    pub input_shape: [usize; 3],
    /// Hidden layer widths (mlp) or per-block output channels (conv).
    pub hidden_widths: Vec<usize>,
    pub repr_dim: usize,
    pub activation: Activation,
    /// Project representations onto the unit sphere.
    #[serde(default)]
    pub unit_norm: bool,
}

impl EncoderConfig {
    /// Two hidden layers of width 256, 64-dimensional output.
    pub fn mlp(input_shape: [usize; 3]) -> Self {
        Self {
            arch: Arch::Mlp,
            input_shape,
            hidden_widths: vec![256, 256],
            repr_dim: 64,
            activation: Activation::Relu,
            unit_norm: false,
        }
    }

    /// Four stride-2 3×3 convolution blocks followed by a linear head.
    pub fn conv(input_shape: [usize; 3]) -> Self {
        Self {
            arch: Arch::Conv,
            input_shape,
            hidden_widths: vec![32, 64, 64, 64],
            repr_dim: 64,
            activation: Activation::Relu,
            unit_norm: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn validate(&self, n_factors: usize) -> Result<()> {
        if self.input_shape.contains(&0) {
            return Err(Error::Config("input_shape entries must be positive".into()));
        }
        if self.repr_dim == 0 || self.repr_dim < n_factors {
            return Err(Error::Config(format!(
                "repr_dim {} must be at least the number of probed factors ({n_factors})",
                self.repr_dim
            )));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Parameter shapes in storage order: `(weight, bias)` per layer.
    fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        match self.arch {
            Arch::Mlp => {
                let mut fan_in = self.input_dim();
                for &w in self.hidden_widths.iter().chain(std::iter::once(&self.repr_dim)) {
                    shapes.push((fan_in, w));
                    shapes.push((1, w));
                    fan_in = w;
                }
            }
            Arch::Conv => {
                for g in self.conv_geoms(1) {
                    let out_c = self.hidden_widths[shapes.len() / 2];
                    shapes.push((g.patch_len(), out_c));
                    shapes.push((1, out_c));
                }
                shapes.push((self.conv_flat_dim(), self.repr_dim));
                shapes.push((1, self.repr_dim));
            }
        }
        shapes
    }

    fn conv_geoms(&self, batch: usize) -> Vec<ConvGeom> {
        let [mut h, mut w, mut c] = self.input_shape;
        self.hidden_widths
            .iter()
            .map(|&out_c| {
                let g = ConvGeom { batch, in_h: h, in_w: w, in_c: c, kernel: CONV_KERNEL, stride: CONV_STRIDE, pad: CONV_PAD };
                (h, w, c) = (g.out_h(), g.out_w(), out_c);
                g
            })
            .collect()
    }

    fn conv_flat_dim(&self) -> usize {
        match (self.conv_geoms(1).last(), self.hidden_widths.last()) {
            (Some(g), Some(&c)) => g.out_h() * g.out_w() * c,
            _ => self.input_dim(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: Vec<Tensor>,
}

impl Encoder {
    pub fn new(config: EncoderConfig, rng: &mut impl Rng) -> Self {
        let gain = match config.activation {
            Activation::Tanh => 1.0,
            Activation::Relu | Activation::Softplus => 2.0,
        };
        let shapes = config.param_shapes();
        let last = shapes.len() - 2;
        let params = shapes
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                if r == 1 {
                    Tensor::zeros((r, c))
                } else {
                    // The output layer gets unit gain so scores start O(1).
                    let g = if i == last { 1.0 } else { gain };
                    let bound = (3.0 * g / r as f64).sqrt();
                    Tensor::from_shape_fn((r, c), |_| rng.random_range(-bound..bound))
                }
            })
            .collect();
        Self { config, params }
    }

    /// Zeroes the output layer, so every representation is the zero vector.
    pub fn zero_head(&mut self) {
        let n = self.params.len();
        self.params[n - 2].fill(0.0);
        self.params[n - 1].fill(0.0);
    }

    fn activate(&self, g: &mut Graph, h: Var) -> Var {
        match self.config.activation {
            Activation::Relu => g.relu(h),
            Activation::Tanh => g.tanh(h),
            Activation::Softplus => g.softplus(h),
        }
    }

    /// Builds the forward pass for a batch `x` of shape `(n, input_dim)`.
    pub fn forward(&self, g: &mut Graph, params: &[Var], x: Var) -> Var {
        let n = g.value(x).nrows();
        let mut h = x;
        let mut p = params.chunks(2);
        if self.config.arch == Arch::Conv {
            for (geom, out_c) in self.config.conv_geoms(n).into_iter().zip(&self.config.hidden_widths) {
                let wb = p.next().expect("conv params");
                let cols = g.im2col(h, geom);
                let y = g.matmul(cols, wb[0]);
                let y = g.add_row(y, wb[1]);
                let y = self.activate(g, y);
                h = g.reshape(y, (n, geom.out_h() * geom.out_w() * out_c));
            }
        }
        let dense: Vec<&[Var]> = p.collect();
        for (i, wb) in dense.iter().enumerate() {
            let y = g.matmul(h, wb[0]);
            h = g.add_row(y, wb[1]);
            if i + 1 < dense.len() {
                h = self.activate(g, h);
            }
        }
        if self.config.unit_norm {
            let d = g.value(h).ncols();
            let sq = g.mul(h, h);
            let ss = g.sum_cols(sq);
            let ss = g.add_scalar(ss, 1e-12);
            let inv = g.powf(ss, -0.5);
            let inv = g.broadcast_cols(inv, d);
            h = g.mul(h, inv);
        }
        h
    }
}

/// Learned parameters of both encoders and the coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticState {
    pub encoder_x: Encoder,
    pub encoder_y: Encoder,
    pub coupling: Coupling,
    /// `W` of the bilinear coupling, `(d, d)`.
    pub bilinear: Option<Tensor>,
}

impl CriticState {
    pub fn new(config_x: EncoderConfig, config_y: EncoderConfig, coupling: Coupling, seed: u64) -> Result<Self> {
        if config_x.repr_dim != config_y.repr_dim {
            return Err(Error::Config("both encoders need the same repr_dim".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config_x.repr_dim;
        let encoder_x = Encoder::new(config_x, &mut rng);
        let encoder_y = Encoder::new(config_y, &mut rng);
        let bilinear = (coupling == Coupling::Bilinear).then(|| Tensor::eye(d));
        Ok(Self { encoder_x, encoder_y, coupling, bilinear })
    }

    /// Same architecture on both sides with the separable inner-product critic.
    pub fn symmetric(config: EncoderConfig, seed: u64) -> Result<Self> {
        Self::new(config.clone(), config, Coupling::SeparableDot, seed)
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.encoder_x.params.iter().chain(&self.encoder_y.params).chain(self.bilinear.as_ref()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.encoder_x
            .params
            .iter_mut()
            .chain(self.encoder_y.params.iter_mut())
            .chain(self.bilinear.as_mut())
            .collect()
    }

    pub fn n_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Order-sensitive hash of every parameter bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.parameters() {
            for v in p.iter() {
                h = (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Registers every parameter as a leaf of `g`.
    pub fn bind<'a>(&'a self, g: &mut Graph) -> BoundCritic<'a> {
        let vars = self.parameters().into_iter().map(|p| g.leaf(p.clone())).collect();
        BoundCritic { state: self, vars }
    }
}

/// A [`CriticState`] whose parameters live on a graph.
pub struct BoundCritic<'a> {
    state: &'a CriticState,
    vars: Vec<Var>,
}

impl BoundCritic<'_> {
    pub fn params(&self) -> &[Var] {
        &self.vars
    }

    pub fn encode(&self, g: &mut Graph, side: Side, x: Var) -> Var {
        let nx = self.state.encoder_x.params.len();
        let ny = self.state.encoder_y.params.len();
        match side {
            Side::X => self.state.encoder_x.forward(g, &self.vars[..nx], x),
            Side::Y => self.state.encoder_y.forward(g, &self.vars[nx..nx + ny], x),
        }
    }

    fn coupled_x(&self, g: &mut Graph, zx: Var) -> Var {
        match self.state.coupling {
            Coupling::SeparableDot => zx,
            Coupling::Bilinear => {
                let w = *self.vars.last().expect("bilinear weight");
                g.matmul(zx, w)
            }
        }
    }

    /// `S_ij = f(x_i, y_j)`, shape `(n, n)`.
    pub fn score_matrix(&self, g: &mut Graph, zx: Var, zy: Var) -> Var {
        let a = self.coupled_x(g, zx);
        g.matmul_nt(a, zy)
    }
}

/// A scalar score function on paired inputs.
pub trait Critic {
    /// `f(x_i, y_i)` for every row, shape `(n, 1)`.
    fn pair_scores(&self, g: &mut Graph, x: Var, y: Var) -> Var;
}

impl Critic for BoundCritic<'_> {
    fn pair_scores(&self, g: &mut Graph, x: Var, y: Var) -> Var {
        let zx = self.encode(g, Side::X, x);
        let zy = self.encode(g, Side::Y, y);
        let a = self.coupled_x(g, zx);
        let prod = g.mul(a, zy);
        g.sum_cols(prod)
    }
}

fn check_batch(state: &CriticState, side: Side, batch: &Tensor) -> Result<()> {
    let cfg = match side {
        Side::X => &state.encoder_x.config,
        Side::Y => &state.encoder_y.config,
    };
    if batch.ncols() != cfg.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} features, encoder expects {:?} = {}",
            batch.ncols(),
            cfg.input_shape,
            cfg.input_dim()
        )));
    }
    Ok(())
}

/// Representations `(K, d)` of a batch of flattened observations.
pub fn encode(state: &CriticState, side: Side, batch: &Tensor) -> Result<Tensor> {
    check_batch(state, side, batch)?;
    let mut g = Graph::new();
    let bound = state.bind(&mut g);
    let x = g.leaf(batch.clone());
    let z = bound.encode(&mut g, side, x);
    let out = g.value(z).clone();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder produced a non-finite representation".into()));
    }
    Ok(out)
}

/// Encodes in chunks to bound graph memory.
pub fn encode_chunked(state: &CriticState, side: Side, batch: &Tensor, chunk: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros((batch.nrows(), state.encoder_x.config.repr_dim));
    let chunk = chunk.max(1);
    for start in (0..batch.nrows()).step_by(chunk) {
        let end = (start + chunk).min(batch.nrows());
        let part = encode(state, side, &batch.slice(ndarray::s![start..end, ..]).to_owned())?;
        out.slice_mut(ndarray::s![start..end, ..]).assign(&part);
    }
    Ok(out)
}

/// Critic scores between every pair of rows of `zx` and `zy`.
pub fn score_matrix(state: &CriticState, zx: &Tensor, zy: &Tensor) -> Result<Tensor> {
    if zx.ncols() != zy.ncols() {
        return Err(Error::Shape(format!("repr dims differ: {} vs {}", zx.ncols(), zy.ncols())));
    }
    Ok(match (&state.coupling, &state.bilinear) {
        (Coupling::Bilinear, Some(w)) => zx.dot(w).dot(&zy.t()),
        _ => zx.dot(&zy.t()),
    })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"WDMCKPT1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    encoder_x: EncoderConfig,
    encoder_y: EncoderConfig,
    coupling: Coupling,
    param_shapes: Vec<(usize, usize)>,
}

/// Writes the configs as a JSON header followed by little-endian `f64` parameters.
pub fn save_checkpoint(path: impl AsRef<Path>, state: &CriticState) -> Result<()> {
    let header = CheckpointHeader {
        format_version: 1,
        encoder_x: state.encoder_x.config.clone(),
        encoder_y: state.encoder_y.config.clone(),
        coupling: state.coupling,
        param_shapes: state.parameters().iter().map(|p| p.dim()).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for p in state.parameters() {
        for v in p.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CriticState> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    let mut state = CriticState::new(header.encoder_x, header.encoder_y, header.coupling, 0)?;
    let shapes: Vec<(usize, usize)> = state.parameters().iter().map(|p| p.dim()).collect();
    if shapes != header.param_shapes {
        return Err(Error::Format("parameter shapes do not match the encoder configs".into()));
    }
    let mut buf = [0u8; 8];
    for p in state.parameters_mut() {
        for v in p.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
    }
    Ok(state)
}
