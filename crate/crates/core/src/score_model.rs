//! Class- and time-conditional score models.
//!
//! [`ScoreFunction`] is the interface the likelihood and classifier code
//! consumes: a score `s(x, t, y) ≈ ∇ₓ log p_t(x | y)` together with its
//! input Jacobian–vector products. [`MlpScoreNet`] is the trainable model; it
//! carries its own reverse-mode parameter gradient so training needs no
//! autodiff framework.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sde::SdeSpec;

/// A conditional score `s(x, t, y)` with input derivatives.
pub trait ScoreFunction: Send + Sync {
    fn input_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn evaluate(&self, x: &[f64], t: f64, y: usize) -> Result<Vec<f64>>;

    /// `(∂s/∂x)·v`.
    fn input_jvp(&self, x: &[f64], t: f64, y: usize, v: &[f64]) -> Result<Vec<f64>>;

    /// `vᵀ·(∂s/∂x)`.
    fn input_vjp(&self, x: &[f64], t: f64, y: usize, v: &[f64]) -> Result<Vec<f64>>;

    /// Score together with one JVP per direction. Implementations that can
    /// share the forward pass should override this.
    fn evaluate_with_jvps(
        &self,
        x: &[f64],
        t: f64,
        y: usize,
        dirs: &[Vec<f64>],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let s = self.evaluate(x, t, y)?;
        let jvps = dirs
            .iter()
            .map(|v| self.input_jvp(x, t, y, v))
            .collect::<Result<Vec<_>>>()?;
        Ok((s, jvps))
    }
}

pub(crate) fn check_label(y: usize, num_classes: usize) -> Result<()> {
    if y < num_classes {
        Ok(())
    } else {
        Err(Error::LabelOutOfRange {
            label: y,
            num_classes,
        })
    }
}

pub(crate) fn check_dim(v: &[f64], expected: usize) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected,
            got: v.len(),
        })
    }
}

/// Architecture hyperparameters of [`MlpScoreNet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    /// Number of random Fourier frequencies; the time embedding has twice
    /// as many features (sine and cosine).
    pub fourier_features: usize,
    pub fourier_scale: f64,
    pub class_embed_dim: usize,
    pub hidden_width: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            fourier_features: 32,
            fourier_scale: 30.0,
            class_embed_dim: 64,
            hidden_width: 128,
        }
    }
}

/// Offsets of each parameter block inside the flat parameter vector.
///
/// Canonical order: class embedding table (`num_classes × class_embed_dim`),
/// first hidden weight (`hidden × in`) and bias, second hidden weight
/// (`hidden × hidden`) and bias, output weight (`input_dim × hidden`) and
/// bias. Matrices are row-major with one row per output unit.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Layout {
    dim: usize,
    in_width: usize,
    hidden: usize,
    embed: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    total: usize,
}

impl Layout {
    fn new(cfg: &MlpConfig, dim: usize, num_classes: usize) -> Self {
        let in_width = dim + 2 * cfg.fourier_features + cfg.class_embed_dim;
        let h = cfg.hidden_width;
        let embed = 0;
        let w1 = embed + num_classes * cfg.class_embed_dim;
        let b1 = w1 + h * in_width;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + dim * h;
        let total = b3 + dim;
        Layout {
            dim,
            in_width,
            hidden: h,
            embed,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            total,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
fn silu_prime(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// `out = W·inp + b` for a row-major `W`.
fn affine(w: &[f64], b: &[f64], inp: &[f64], out: &mut [f64]) {
    let n = inp.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        *o = b[i] + row.iter().zip(inp).map(|(a, x)| a * x).sum::<f64>();
    }
}

/// `out = W[:, ..inp.len()]·inp` for a row-major `W` with `stride` columns.
fn matvec_prefix(w: &[f64], stride: usize, inp: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * stride..i * stride + inp.len()];
        *o = row.iter().zip(inp).map(|(a, x)| a * x).sum();
    }
}

/// `out = Wᵀ·g` for a row-major `W` with `out.len()` columns.
fn matvec_t(w: &[f64], g: &[f64], out: &mut [f64]) {
    let n = out.len();
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, gi) in g.iter().enumerate() {
        if *gi == 0.0 {
            continue;
        }
        let row = &w[i * n..(i + 1) * n];
        for (o, a) in out.iter_mut().zip(row) {
            *o += gi * a;
        }
    }
}

/// Intermediate activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// The score `s(x, t, y)`.
    pub score: Vec<f64>,
    y: usize,
    in_scale: f64,
    out_scale: f64,
    input: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
}

/// Small conditional score network for vector data.
///
/// The network input is the concatenation of the rescaled point
/// `x / √(α(t)² + σ(t)²)`, a frozen Gaussian Fourier embedding of `t`
/// (`sin 2πωt`, `cos 2πωt`) and a learned class embedding. Two SiLU layers
/// feed a linear head whose output is divided by the kernel std `σ(t)`, so the
/// model predicts the scaled score `σ(t)·s`, which is `O(1)` at every time.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpScoreNet {
    config: MlpConfig,
    sde: SdeSpec,
    num_classes: usize,
    seed: u64,
    freqs: Vec<f64>,
    params: Vec<f64>,
    layout: Layout,
}

impl MlpScoreNet {
    /// Initializes a network: fan-in scaled uniform hidden weights and
    /// biases, standard-normal class embeddings, Fourier frequencies drawn
    /// from `N(0, scale²)` and a zero output head.
    pub fn new(
        input_dim: usize,
        num_classes: usize,
        sde: SdeSpec,
        config: MlpConfig,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be >= 1".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be >= 1".into()));
        }
        if config.fourier_features == 0 || config.hidden_width == 0 {
            return Err(Error::InvalidConfig(
                "fourier_features and hidden_width must be >= 1".into(),
            ));
        }
        if config.fourier_scale.is_nan() || config.fourier_scale <= 0.0 {
            return Err(Error::InvalidConfig("fourier_scale must be > 0".into()));
        }
        sde.validate()?;
        let layout = Layout::new(&config, input_dim, num_classes);
        let mut rng = rng_from_seed(seed);

        let freq_dist = Normal::new(0.0, config.fourier_scale).expect("positive scale");
        let freqs: Vec<f64> = (0..config.fourier_features)
            .map(|_| freq_dist.sample(&mut rng))
            .collect();

        let mut params = vec![0.0; layout.total];
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        for p in &mut params[layout.embed..layout.w1] {
            *p = std_normal.sample(&mut rng);
        }
        let mut fill_uniform = |range: std::ops::Range<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for p in &mut params[range] {
                *p = rng.sample(dist);
            }
        };
        fill_uniform(layout.w1..layout.b1, layout.in_width);
        fill_uniform(layout.b1..layout.w2, layout.in_width);
        fill_uniform(layout.w2..layout.b2, layout.hidden);
        fill_uniform(layout.b2..layout.w3, layout.hidden);

        Ok(MlpScoreNet {
            config,
            sde,
            num_classes,
            seed,
            freqs,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn sde(&self) -> &SdeSpec {
        &self.sde
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fourier_frequencies(&self) -> &[f64] {
        &self.freqs
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(params, self.layout.total)?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Names of the parameter blocks in canonical order, with shapes.
    pub fn param_order(&self) -> Vec<String> {
        let l = &self.layout;
        vec![
            format!("class_embedding[{}x{}]", self.num_classes, self.config.class_embed_dim),
            format!("hidden1.weight[{}x{}]", l.hidden, l.in_width),
            format!("hidden1.bias[{}]", l.hidden),
            format!("hidden2.weight[{}x{}]", l.hidden, l.hidden),
            format!("hidden2.bias[{}]", l.hidden),
            format!("output.weight[{}x{}]", l.dim, l.hidden),
            format!("output.bias[{}]", l.dim),
        ]
    }

    fn check_inputs(&self, x: &[f64], t: f64, y: usize) -> Result<()> {
        check_dim(x, self.layout.dim)?;
        check_label(y, self.num_classes)?;
        self.sde.check_model_time(t)
    }

    fn scales(&self, t: f64) -> (f64, f64) {
        let a = self.sde.mean_coeff(t);
        let s = self.sde.marginal_std(t);
        (1.0 / (a * a + s * s).sqrt(), 1.0 / s)
    }

    /// Full forward pass, keeping activations for [`MlpScoreNet::backward`].
    pub fn forward(&self, x: &[f64], t: f64, y: usize) -> Result<Forward> {
        self.check_inputs(x, t, y)?;
        Ok(self.forward_unchecked(x, t, y))
    }

    fn forward_unchecked(&self, x: &[f64], t: f64, y: usize) -> Forward {
        let l = &self.layout;
        let p = &self.params;
        let (in_scale, out_scale) = self.scales(t);
        let e = self.config.class_embed_dim;
        let k = self.freqs.len();

        let mut input = Vec::with_capacity(l.in_width);
        input.extend(x.iter().map(|v| v * in_scale));
        for w in &self.freqs {
            input.push((2.0 * PI * w * t).sin());
        }
        for w in &self.freqs {
            input.push((2.0 * PI * w * t).cos());
        }
        input.extend_from_slice(&p[l.embed + y * e..l.embed + (y + 1) * e]);
        debug_assert_eq!(input.len(), l.dim + 2 * k + e);

        let mut z1 = vec![0.0; l.hidden];
        affine(&p[l.w1..l.b1], &p[l.b1..l.w2], &input, &mut z1);
        let h1: Vec<f64> = z1.iter().map(|&z| silu(z)).collect();
        let mut z2 = vec![0.0; l.hidden];
        affine(&p[l.w2..l.b2], &p[l.b2..l.w3], &h1, &mut z2);
        let h2: Vec<f64> = z2.iter().map(|&z| silu(z)).collect();
        let mut out = vec![0.0; l.dim];
        affine(&p[l.w3..l.b3], &p[l.b3..l.total], &h2, &mut out);
        out.iter_mut().for_each(|o| *o *= out_scale);

        Forward {
            score: out,
            y,
            in_scale,
            out_scale,
            input,
            z1,
            h1,
            z2,
            h2,
        }
    }

    /// Accumulates `adjointᵀ·∂s/∂θ` into `grad`, where `adjoint = ∂L/∂s` for
    /// the forward pass `fwd`. Returns `adjointᵀ·∂s/∂x`.
    pub fn backward(&self, fwd: &Forward, adjoint: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let l = &self.layout;
        let p = &self.params;
        assert_eq!(adjoint.len(), l.dim, "adjoint dimension");
        assert_eq!(grad.len(), l.total, "gradient buffer length");

        let g_out: Vec<f64> = adjoint.iter().map(|a| a * fwd.out_scale).collect();
        for (i, go) in g_out.iter().enumerate() {
            let row = &mut grad[l.w3 + i * l.hidden..l.w3 + (i + 1) * l.hidden];
            for (g, h) in row.iter_mut().zip(&fwd.h2) {
                *g += go * h;
            }
            grad[l.b3 + i] += go;
        }

        let mut g_z2 = vec![0.0; l.hidden];
        matvec_t(&p[l.w3..l.b3], &g_out, &mut g_z2);
        for (g, z) in g_z2.iter_mut().zip(&fwd.z2) {
            *g *= silu_prime(*z);
        }
        for (i, gz) in g_z2.iter().enumerate() {
            let row = &mut grad[l.w2 + i * l.hidden..l.w2 + (i + 1) * l.hidden];
            for (g, h) in row.iter_mut().zip(&fwd.h1) {
                *g += gz * h;
            }
            grad[l.b2 + i] += gz;
        }

        let mut g_z1 = vec![0.0; l.hidden];
        matvec_t(&p[l.w2..l.b2], &g_z2, &mut g_z1);
        for (g, z) in g_z1.iter_mut().zip(&fwd.z1) {
            *g *= silu_prime(*z);
        }
        for (i, gz) in g_z1.iter().enumerate() {
            let row = &mut grad[l.w1 + i * l.in_width..l.w1 + (i + 1) * l.in_width];
            for (g, u) in row.iter_mut().zip(&fwd.input) {
                *g += gz * u;
            }
            grad[l.b1 + i] += gz;
        }

        let mut g_in = vec![0.0; l.in_width];
        matvec_t(&p[l.w1..l.b1], &g_z1, &mut g_in);
        let e = self.config.class_embed_dim;
        let off = l.dim + 2 * self.freqs.len();
        let emb = &mut grad[l.embed + fwd.y * e..l.embed + (fwd.y + 1) * e];
        for (g, gi) in emb.iter_mut().zip(&g_in[off..]) {
            *g += gi;
        }
        g_in[..l.dim].iter().map(|g| g * fwd.in_scale).collect()
    }

    /// Gradient of a scalar loss with respect to θ given `adjoint = ∂L/∂s`.
    pub fn param_grad(&self, fwd: &Forward, adjoint: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.layout.total];
        self.backward(fwd, adjoint, &mut grad);
        grad
    }

    fn jvp_from(&self, fwd: &Forward, v: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let p = &self.params;
        let scaled: Vec<f64> = v.iter().map(|vi| vi * fwd.in_scale).collect();
        let mut dz1 = vec![0.0; l.hidden];
        matvec_prefix(&p[l.w1..l.b1], l.in_width, &scaled, &mut dz1);
        for (d, z) in dz1.iter_mut().zip(&fwd.z1) {
            *d *= silu_prime(*z);
        }
        let mut dz2 = vec![0.0; l.hidden];
        matvec_prefix(&p[l.w2..l.b2], l.hidden, &dz1, &mut dz2);
        for (d, z) in dz2.iter_mut().zip(&fwd.z2) {
            *d *= silu_prime(*z);
        }
        let mut out = vec![0.0; l.dim];
        matvec_prefix(&p[l.w3..l.b3], l.hidden, &dz2, &mut out);
        out.iter_mut().for_each(|o| *o *= fwd.out_scale);
        out
    }

    /// Writes the checkpoint file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let header = CheckpointHeader {
            architecture: Architecture {
                kind: "mlp".into(),
                input_dim: self.layout.dim,
                num_classes: self.num_classes,
                fourier_features: self.config.fourier_features,
                fourier_scale: self.config.fourier_scale,
                class_embed_dim: self.config.class_embed_dim,
                hidden_width: self.config.hidden_width,
                hidden_layers: 2,
                activation: "silu".into(),
            },
            sde: self.sde,
            num_classes: self.num_classes,
            seed: self.seed,
            fourier_frequencies: self.freqs.clone(),
            param_count: self.layout.total,
            param_order: self.param_order(),
        };
        let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a checkpoint written by [`MlpScoreNet::save`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut cur = crate::data::ByteCursor::new(bytes, path);
        let magic = cur.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                path: path.into(),
                expected: "SGCK",
            });
        }
        let version = cur.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.into(),
                version,
            });
        }
        let len = cur.u64("header length")?;
        let len = usize::try_from(len).map_err(|_| Error::DimensionOverflow {
            path: path.into(),
            detail: format!("header length {len}"),
        })?;
        let header: CheckpointHeader = serde_json::from_slice(cur.take(len, "header")?)
            .map_err(|e| Error::Format {
                path: path.into(),
                detail: format!("checkpoint header: {e}"),
            })?;
        let arch = &header.architecture;
        if arch.kind != "mlp" || arch.hidden_layers != 2 || arch.activation != "silu" {
            return Err(Error::Format {
                path: path.into(),
                detail: format!("unsupported architecture {:?}", arch),
            });
        }
        let config = MlpConfig {
            fourier_features: arch.fourier_features,
            fourier_scale: arch.fourier_scale,
            class_embed_dim: arch.class_embed_dim,
            hidden_width: arch.hidden_width,
        };
        let mut net = MlpScoreNet::new(
            arch.input_dim,
            header.num_classes,
            header.sde,
            config,
            header.seed,
        )
        .map_err(|e| Error::Format {
            path: path.into(),
            detail: e.to_string(),
        })?;
        if header.fourier_frequencies.len() != config.fourier_features
            || header.param_count != net.layout.total
        {
            return Err(Error::Format {
                path: path.into(),
                detail: "header sizes disagree with architecture".into(),
            });
        }
        net.freqs = header.fourier_frequencies;
        for p in net.params.iter_mut() {
            *p = cur.f64("parameters")?;
        }
        if !cur.is_empty() {
            return Err(Error::Format {
                path: path.into(),
                detail: "trailing bytes after parameters".into(),
            });
        }
        Ok(net)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SGCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Architecture {
    kind: String,
    input_dim: usize,
    num_classes: usize,
    fourier_features: usize,
    fourier_scale: f64,
    class_embed_dim: usize,
    hidden_width: usize,
    hidden_layers: usize,
    activation: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    architecture: Architecture,
    sde: SdeSpec,
    num_classes: usize,
    seed: u64,
    fourier_frequencies: Vec<f64>,
    param_count: usize,
    param_order: Vec<String>,
}

impl ScoreFunction for MlpScoreNet {
    fn input_dim(&self) -> usize {
        self.layout.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn evaluate(&self, x: &[f64], t: f64, y: usize) -> Result<Vec<f64>> {
        Ok(self.forward(x, t, y)?.score)
    }

    fn input_jvp(&self, x: &[f64], t: f64, y: usize, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(v, self.layout.dim)?;
        let fwd = self.forward(x, t, y)?;
        Ok(self.jvp_from(&fwd, v))
    }

    fn input_vjp(&self, x: &[f64], t: f64, y: usize, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(v, self.layout.dim)?;
        let fwd = self.forward(x, t, y)?;
        let mut scratch = vec![0.0; self.layout.total];
        Ok(self.backward(&fwd, v, &mut scratch))
    }

    fn evaluate_with_jvps(
        &self,
        x: &[f64],
        t: f64,
        y: usize,
        dirs: &[Vec<f64>],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        for v in dirs {
            check_dim(v, self.layout.dim)?;
        }
        let fwd = self.forward(x, t, y)?;
        let jvps = dirs.iter().map(|v| self.jvp_from(&fwd, v)).collect();
        Ok((fwd.score, jvps))
    }
}

/// Affine score `s(x) = A·x + b`, independent of time and class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScore {
    dim: usize,
    num_classes: usize,
    matrix: Vec<f64>,
    offset: Vec<f64>,
}

impl LinearScore {
    /// `matrix` is row-major `dim × dim`.
    pub fn new(matrix: Vec<f64>, offset: Vec<f64>, num_classes: usize) -> Result<Self> {
        let dim = offset.len();
        check_dim(&matrix, dim * dim)?;
        Ok(LinearScore {
            dim,
            num_classes,
            matrix,
            offset,
        })
    }

    /// The identically zero score.
    pub fn zero(dim: usize, num_classes: usize) -> Self {
        LinearScore {
            dim,
            num_classes,
            matrix: vec![0.0; dim * dim],
            offset: vec![0.0; dim],
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.matrix[i * self.dim + i]).sum()
    }

    fn check(&self, x: &[f64], y: usize) -> Result<()> {
        check_dim(x, self.dim)?;
        check_label(y, self.num_classes)
    }
}

impl ScoreFunction for LinearScore {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn evaluate(&self, x: &[f64], _t: f64, y: usize) -> Result<Vec<f64>> {
        self.check(x, y)?;
        let mut out = vec![0.0; self.dim];
        affine(&self.matrix, &self.offset, x, &mut out);
        Ok(out)
    }

    fn input_jvp(&self, x: &[f64], _t: f64, y: usize, v: &[f64]) -> Result<Vec<f64>> {
        self.check(x, y)?;
        check_dim(v, self.dim)?;
        let mut out = vec![0.0; self.dim];
        matvec_prefix(&self.matrix, self.dim, v, &mut out);
        Ok(out)
    }

    fn input_vjp(&self, x: &[f64], _t: f64, y: usize, v: &[f64]) -> Result<Vec<f64>> {
        self.check(x, y)?;
        check_dim(v, self.dim)?;
        let mut out = vec![0.0; self.dim];
        matvec_t(&self.matrix, v, &mut out);
        Ok(out)
    }
}
