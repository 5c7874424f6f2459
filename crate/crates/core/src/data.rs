//! Labeled datasets, synthetic generators with analytic ground truth, and the
//! Gaussian score oracle.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::score_model::{check_dim, check_label, ScoreFunction};
use crate::sde::{SdeFamily, SdeSpec};

/// Per-class Gaussian parameters with diagonal covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassGaussians {
    pub means: Vec<Vec<f64>>,
    /// Diagonal of each class covariance.
    pub variances: Vec<Vec<f64>>,
}

impl ClassGaussians {
    pub fn new(means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Empty("class means"));
        }
        if means.len() != variances.len() {
            return Err(Error::InvalidConfig(format!(
                "{} class means but {} covariances",
                means.len(),
                variances.len()
            )));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::InvalidConfig("zero-dimensional means".into()));
        }
        for (m, v) in means.iter().zip(&variances) {
            check_dim(m, d)?;
            check_dim(v, d)?;
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("class mean".into()));
            }
            if v.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidConfig(
                    "degenerate covariance: variances must be positive and finite".into(),
                ));
            }
        }
        Ok(ClassGaussians { means, variances })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    /// `log N(x; m_y, Σ_y)`.
    pub fn log_density(&self, x: &[f64], y: usize) -> f64 {
        diag_gauss_logpdf(x, &self.means[y], &self.variances[y], 1.0, 0.0)
    }

    /// Bayes decision under a uniform class prior, ties to the smaller label.
    pub fn bayes_predict(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_lp = f64::NEG_INFINITY;
        for y in 0..self.num_classes() {
            let lp = self.log_density(x, y);
            if lp > best_lp {
                best = y;
                best_lp = lp;
            }
        }
        best
    }
}

/// `log N(x; a·m, a²·Σ + s²·I)` for diagonal `Σ`.
fn diag_gauss_logpdf(x: &[f64], mean: &[f64], var: &[f64], a: f64, s2: f64) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((xi, mi), vi)| {
            let v = a * a * vi + s2;
            let r = xi - a * mi;
            -0.5 * ((2.0 * PI * v).ln() + r * r / v)
        })
        .sum()
}

/// Features and integer labels.
///
/// Features are stored row-major, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
    pub name: String,
    /// Generating distribution, when the dataset is synthetic Gaussian data.
    pub gaussian: Option<ClassGaussians>,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        num_classes: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("feature dimension must be >= 1".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be >= 1".into()));
        }
        check_dim(&features, labels.len() * dim)?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_classes,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(LabeledDataset {
            features,
            labels,
            dim,
            num_classes,
            name: name.into(),
            gaussian: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Subset with the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            features,
            labels,
            dim: self.dim,
            num_classes: self.num_classes,
            name: self.name.clone(),
            gaussian: self.gaussian.clone(),
        }
    }
}

/// Balanced two-class sample from `N(means[c], diag(variances))`.
pub fn gen_two_gaussians(
    n_per_class: usize,
    means: [Vec<f64>; 2],
    variances: Vec<f64>,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidConfig("n_per_class must be >= 1".into()));
    }
    let params = ClassGaussians::new(means.to_vec(), vec![variances.clone(), variances])?;
    let d = params.dim();
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Vec::with_capacity(2 * n_per_class * d);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for c in 0..2 {
        for _ in 0..n_per_class {
            for j in 0..d {
                let z: f64 = normal.sample(&mut rng);
                features.push(params.means[c][j] + params.variances[c][j].sqrt() * z);
            }
            labels.push(c);
        }
    }
    let mut ds = LabeledDataset::new(features, labels, d, 2, "two-gaussians")?;
    ds.gaussian = Some(params);
    Ok(ds)
}

/// Two interleaved half circles of radius 1 plus isotropic Gaussian noise.
///
/// Class 0 lies on the upper arc centred at `(0, 0)`, class 1 on the lower
/// arc centred at `(1, 0.5)`. Arc angles are evenly spaced on `[0, π]`.
pub fn gen_two_moons(n_per_class: usize, noise_std: f64, seed: u64) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidConfig("n_per_class must be >= 1".into()));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidConfig("noise_std must be >= 0".into()));
    }
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Vec::with_capacity(4 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    let angle = |i: usize| {
        if n_per_class == 1 {
            0.0
        } else {
            PI * i as f64 / (n_per_class - 1) as f64
        }
    };
    for c in 0..2 {
        for i in 0..n_per_class {
            let th = angle(i);
            let (x, y) = if c == 0 {
                (th.cos(), th.sin())
            } else {
                (1.0 - th.cos(), 0.5 - th.sin())
            };
            let nx: f64 = normal.sample(&mut rng);
            let ny: f64 = normal.sample(&mut rng);
            features.push(x + noise_std * nx);
            features.push(y + noise_std * ny);
            labels.push(c);
        }
    }
    LabeledDataset::new(features, labels, 2, 2, "two-moons")
}

/// Stratified split: within each class, `round(fraction·n_c)` randomly chosen
/// samples go to the second (test) part. Both parts keep the original order.
pub fn split(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!(
            "split fraction {fraction} outside [0, 1)"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut in_test = vec![false; ds.len()];
    for c in 0..ds.num_classes() {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let k = (fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..k] {
            in_test[i] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| in_test[i]);
    Ok((ds.select(&train), ds.select(&test)))
}

/// Exact score of the perturbed marginals of per-class Gaussian data.
///
/// For VP and sub-VP the class marginal at time `t` is
/// `N(α(t)·m_y, α(t)²·Σ_y + σ(t)²·I)`; for VE it is `N(m_y, Σ_y + σ(t)²·I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticGaussianScore {
    params: ClassGaussians,
    sde: SdeSpec,
}

impl AnalyticGaussianScore {
    pub fn new(params: ClassGaussians, sde: SdeSpec) -> Result<Self> {
        sde.validate()?;
        Ok(AnalyticGaussianScore { params, sde })
    }

    /// Standard normal data in `dim` dimensions, a single class.
    pub fn standard_normal(dim: usize, sde: SdeSpec) -> Result<Self> {
        Self::new(
            ClassGaussians::new(vec![vec![0.0; dim]], vec![vec![1.0; dim]])?,
            sde,
        )
    }

    pub fn params(&self) -> &ClassGaussians {
        &self.params
    }

    pub fn sde(&self) -> &SdeSpec {
        &self.sde
    }

    fn kernel(&self, t: f64) -> (f64, f64) {
        let a = match self.sde.family {
            SdeFamily::Ve => 1.0,
            _ => self.sde.mean_coeff(t),
        };
        let s = self.sde.marginal_std(t);
        (a, s * s)
    }

    /// Log-density of the class-`y` marginal at time `t`.
    pub fn marginal_log_density(&self, x: &[f64], t: f64, y: usize) -> Result<f64> {
        self.check(x, t, y)?;
        let (a, s2) = self.kernel(t);
        Ok(diag_gauss_logpdf(
            x,
            &self.params.means[y],
            &self.params.variances[y],
            a,
            s2,
        ))
    }

    fn check(&self, x: &[f64], t: f64, y: usize) -> Result<()> {
        check_dim(x, self.params.dim())?;
        check_label(y, self.params.num_classes())?;
        self.sde.check_model_time(t)
    }
}

impl ScoreFunction for AnalyticGaussianScore {
    fn input_dim(&self) -> usize {
        self.params.dim()
    }

    fn num_classes(&self) -> usize {
        self.params.num_classes()
    }

    fn evaluate(&self, x: &[f64], t: f64, y: usize) -> Result<Vec<f64>> {
        self.check(x, t, y)?;
        let (a, s2) = self.kernel(t);
        let m = &self.params.means[y];
        let v = &self.params.variances[y];
        Ok((0..x.len())
            .map(|j| -(x[j] - a * m[j]) / (a * a * v[j] + s2))
            .collect())
    }

    fn input_jvp(&self, x: &[f64], t: f64, y: usize, dir: &[f64]) -> Result<Vec<f64>> {
        self.check(x, t, y)?;
        check_dim(dir, x.len())?;
        let (a, s2) = self.kernel(t);
        let v = &self.params.variances[y];
        Ok((0..x.len()).map(|j| -dir[j] / (a * a * v[j] + s2)).collect())
    }

    fn input_vjp(&self, x: &[f64], t: f64, y: usize, dir: &[f64]) -> Result<Vec<f64>> {
        // The Jacobian is diagonal, hence symmetric.
        self.input_jvp(x, t, y, dir)
    }
}

/// Bounds-checked little-endian reader over an in-memory file.
pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        ByteCursor { bytes, pos: 0, path }
    }

    pub(crate) fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Truncated {
                path: self.path.into(),
                what,
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.remaining() == 0
    }
}

const TENSOR_MAGIC: &[u8; 4] = b"SGCT";
const TENSOR_VERSION: u32 = 1;

/// Writes the binary tensor format: magic `SGCT`, version `u32 = 1`, `N` and
/// `D` as `u64`, `num_classes` as `u32`, `N·D` row-major `f64` features and
/// `N` `u32` labels, all little-endian.
pub fn write_tensor_file(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(TENSOR_MAGIC).map_err(io)?;
    w.write_all(&TENSOR_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(ds.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(ds.dim() as u64).to_le_bytes()).map_err(io)?;
    let classes = u32::try_from(ds.num_classes())
        .map_err(|_| Error::InvalidConfig("too many classes for the tensor format".into()))?;
    w.write_all(&classes.to_le_bytes()).map_err(io)?;
    for v in ds.features() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for &l in ds.labels() {
        w.write_all(&(l as u32).to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_tensor(&bytes, path)
}

fn parse_tensor(bytes: &[u8], path: &Path) -> Result<LabeledDataset> {
    let mut cur = ByteCursor::new(bytes, path);
    if cur.take(4, "magic")? != TENSOR_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: "SGCT",
        });
    }
    let version = cur.u32("version")?;
    if version != TENSOR_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.into(),
            version,
        });
    }
    let n = cur.u64("sample count")?;
    let d = cur.u64("feature dimension")?;
    let classes = cur.u32("class count")? as usize;
    let overflow = |detail: String| Error::DimensionOverflow {
        path: path.into(),
        detail,
    };
    let n = usize::try_from(n).map_err(|_| overflow(format!("N = {n}")))?;
    let d = usize::try_from(d).map_err(|_| overflow(format!("D = {d}")))?;
    let cells = n
        .checked_mul(d)
        .ok_or_else(|| overflow(format!("N·D = {n}·{d}")))?;
    let payload = cells
        .checked_mul(8)
        .and_then(|b| b.checked_add(n.checked_mul(4)?))
        .ok_or_else(|| overflow(format!("payload of N·D = {n}·{d}")))?;
    if payload > cur.remaining() {
        return Err(Error::Truncated {
            path: path.into(),
            what: "payload",
        });
    }
    let mut features = Vec::with_capacity(cells);
    for _ in 0..cells {
        features.push(cur.f64("features")?);
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(cur.u32("labels")? as usize);
    }
    if !cur.is_empty() {
        return Err(Error::Format {
            path: path.into(),
            detail: "trailing bytes after labels".into(),
        });
    }
    let name = dataset_name(path);
    LabeledDataset::new(features, labels, d, classes, name).map_err(|e| Error::Format {
        path: path.into(),
        detail: e.to_string(),
    })
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// CSV with header `f0,...,f{D−1},label`.
pub fn write_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, label) in ds.rows() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the CSV format. The class count is `num_classes` when given and
/// `max(label) + 1` otherwise.
pub fn read_csv(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let fmt = |detail: String| Error::Format {
        path: path.into(),
        detail,
    };
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = (0..d)
        .map(|j| format!("f{j}"))
        .chain(["label".to_string()])
        .collect();
    if d == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(fmt(format!("expected header f0,...,f{{D-1}},label, got {header:?}")));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for j in 0..d {
            let v: f64 = rec[j]
                .trim()
                .parse()
                .map_err(|e| fmt(format!("row {i}, column f{j}: {e}")))?;
            features.push(v);
        }
        let l: usize = rec[d]
            .trim()
            .parse()
            .map_err(|e| fmt(format!("row {i}, label: {e}")))?;
        labels.push(l);
    }
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    LabeledDataset::new(features, labels, d, classes, dataset_name(path))
        .map_err(|e| fmt(e.to_string()))
}

/// Reads a dataset, choosing the format by extension (`.csv` or binary).
pub fn read_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset not found"),
        ));
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_csv(path, None),
        _ => read_tensor_file(path),
    }
}

pub fn write_dataset(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path: PathBuf = path.as_ref().into();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => write_csv(ds, &path),
        _ => write_tensor_file(ds, &path),
    }
}
