//! Conditional denoising score matching.
//!
//! Each training pair is perturbed through the forward kernel,
//! `x(t) = μ(t) + σ(t)·z` with `t ~ U(eps, 1)` and `z ~ N(0, I)`, and the
//! model is regressed onto the kernel score `(μ − x(t))/σ² = −z/σ`. With the
//! weighting `λ(t) = σ(t)²` each summand becomes `½‖σ·s + z‖²`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{split, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, substream_seed, Rng};
use crate::score_model::{MlpConfig, MlpScoreNet, ScoreFunction};
use crate::sde::SdeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Multiplicative learning-rate decay applied on a validation plateau.
    pub scheduler_gamma: f64,
    /// Epochs without validation improvement before the rate decays.
    pub scheduler_patience: usize,
    /// Epochs without validation improvement before training stops.
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            lr: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            scheduler_gamma: 0.25,
            scheduler_patience: 10,
            early_stop_patience: 25,
            max_epochs: 500,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return err("lr must be > 0");
        }
        if !(self.scheduler_gamma > 0.0 && self.scheduler_gamma < 1.0) {
            return err("scheduler_gamma must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return err("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return err("val_fraction must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return err("Adam betas must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return err("adam_eps must be > 0");
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One perturbed training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub t: f64,
    pub std: f64,
    pub xt: Vec<f64>,
    /// `∇ log q(x(t) | x(0)) = (μ − x(t))/σ²`.
    pub target: Vec<f64>,
}

/// Perturbs `x0` at time `t` with the given standard-normal draw `z`.
pub fn perturb(spec: &SdeSpec, x0: &[f64], t: f64, z: &[f64]) -> Result<Perturbation> {
    let m = spec.marginal(x0, t)?;
    let xt: Vec<f64> = m.mean.iter().zip(z).map(|(mu, zi)| mu + m.std * zi).collect();
    let var = m.std * m.std;
    let target = m
        .mean
        .iter()
        .zip(&xt)
        .map(|(mu, x)| (mu - x) / var)
        .collect();
    Ok(Perturbation {
        t,
        std: m.std,
        xt,
        target,
    })
}

/// Draws `t ~ U(eps, 1)` and `z ~ N(0, I)` and perturbs `x0`.
pub fn sample_perturbation(spec: &SdeSpec, x0: &[f64], rng: &mut Rng) -> Result<Perturbation> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training input".into()));
    }
    let t = rng.random_range(spec.eps..spec.t_end());
    let z: Vec<f64> = (0..x0.len()).map(|_| rng.sample(StandardNormal)).collect();
    perturb(spec, x0, t, &z)
}

/// Weighted DSM loss `(1/2N)·Σ σᵢ²‖s(xᵢ(t), tᵢ, yᵢ) − targetᵢ‖²` on fixed
/// perturbations.
pub fn dsm_loss_on<S: ScoreFunction + ?Sized>(
    net: &S,
    labels: &[usize],
    perts: &[Perturbation],
) -> Result<f64> {
    if perts.is_empty() {
        return Err(Error::Empty("DSM batch"));
    }
    let mut total = 0.0;
    for (p, &y) in perts.iter().zip(labels) {
        let s = net.evaluate(&p.xt, p.t, y)?;
        let sq: f64 = s.iter().zip(&p.target).map(|(a, b)| (a - b) * (a - b)).sum();
        total += p.std * p.std * sq;
    }
    Ok(total / (2.0 * perts.len() as f64))
}

/// DSM loss on a batch of `(x0, y)` pairs with freshly drawn perturbations.
pub fn dsm_loss<S: ScoreFunction + ?Sized>(
    net: &S,
    batch: &[(&[f64], usize)],
    spec: &SdeSpec,
    rng: &mut Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("DSM batch"));
    }
    let perts = batch
        .iter()
        .map(|(x, _)| sample_perturbation(spec, x, rng))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = batch.iter().map(|(_, y)| *y).collect();
    dsm_loss_on(net, &labels, &perts)
}

/// Loss and parameter gradient on fixed perturbations.
pub fn dsm_loss_and_grad(
    net: &MlpScoreNet,
    labels: &[usize],
    perts: &[Perturbation],
) -> Result<(f64, Vec<f64>)> {
    if perts.is_empty() {
        return Err(Error::Empty("DSM batch"));
    }
    let n = perts.len() as f64;
    let mut grad = vec![0.0; net.param_count()];
    let mut total = 0.0;
    let mut adjoint = vec![0.0; net.input_dim()];
    for (p, &y) in perts.iter().zip(labels) {
        let fwd = net.forward(&p.xt, p.t, y)?;
        let w = p.std * p.std;
        let mut sq = 0.0;
        for ((a, s), tg) in adjoint.iter_mut().zip(&fwd.score).zip(&p.target) {
            let r = s - tg;
            sq += r * r;
            *a = w * r / n;
        }
        total += w * sq;
        net.backward(&fwd, &adjoint, &mut grad);
    }
    Ok((total / (2.0 * n), grad))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Validation loss of the initialized network.
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    /// 0 when no epoch improved on the initialized network.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub param_count: usize,
    pub warnings: Vec<String>,
}

impl TrainReport {
    /// CSV with columns `epoch,train_loss,val_loss,lr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:?},{:?},{:?}\n",
                e.epoch, e.train_loss, e.val_loss, e.lr
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Network at the best validation epoch.
    pub net: MlpScoreNet,
    pub report: TrainReport,
}

/// Perturbation draws per validation sample.
const VAL_DRAWS: usize = 4;

/// Train/validation split used by [`train`].
pub fn validation_split(
    dataset: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(LabeledDataset, LabeledDataset)> {
    split(dataset, config.val_fraction, substream_seed(config.seed, "split"))
}

/// Fixed perturbations of every sample, used for a noise-free validation
/// signal across epochs.
pub fn fixed_perturbations(
    spec: &SdeSpec,
    data: &LabeledDataset,
    draws: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<Perturbation>)> {
    let mut rng = rng_from_seed(seed);
    let mut labels = Vec::with_capacity(data.len() * draws);
    let mut perts = Vec::with_capacity(data.len() * draws);
    for (x, y) in data.rows() {
        for _ in 0..draws {
            perts.push(sample_perturbation(spec, x, &mut rng)?);
            labels.push(y);
        }
    }
    Ok((labels, perts))
}

/// Validation loss exactly as [`train`] computes it for `config`.
pub fn validation_loss<S: ScoreFunction + ?Sized>(
    net: &S,
    dataset: &LabeledDataset,
    spec: &SdeSpec,
    config: &TrainConfig,
) -> Result<f64> {
    let (train_part, val_part) = validation_split(dataset, config)?;
    let monitor = if val_part.is_empty() { &train_part } else { &val_part };
    let (labels, perts) =
        fixed_perturbations(spec, monitor, VAL_DRAWS, substream_seed(config.seed, "val"))?;
    dsm_loss_on(net, &labels, &perts)
}

/// Trains an [`MlpScoreNet`] with mini-batch Adam on the DSM loss.
///
/// The learning rate is multiplied by `scheduler_gamma` whenever the
/// validation loss has not improved for `scheduler_patience` epochs, and
/// training stops after `early_stop_patience` epochs without improvement.
/// The returned network carries the parameters of the best validation epoch.
pub fn train(
    dataset: &LabeledDataset,
    spec: &SdeSpec,
    mlp: &MlpConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let (train_part, val_part) = validation_split(dataset, config)?;
    let mut warnings = Vec::new();
    for (c, &n) in train_part.class_counts().iter().enumerate() {
        if n == 0 {
            warnings.push(format!("class {c} is absent from the training split"));
        }
    }
    let monitor = if val_part.is_empty() {
        warnings.push("empty validation split; monitoring training-set loss".into());
        &train_part
    } else {
        &val_part
    };
    let (val_labels, val_perts) =
        fixed_perturbations(spec, monitor, VAL_DRAWS, substream_seed(config.seed, "val"))?;

    let mut net = MlpScoreNet::new(
        dataset.dim(),
        dataset.num_classes(),
        *spec,
        *mlp,
        substream_seed(config.seed, "init"),
    )?;
    let mut adam = Adam::new(
        net.param_count(),
        config.lr,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    );
    let mut rng = rng_from_seed(substream_seed(config.seed, "train"));

    let initial_val_loss = dsm_loss_on(&net, &val_labels, &val_perts)?;
    let mut best_val = initial_val_loss;
    let mut best_params = net.params().to_vec();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut since_decay = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    let mut order: Vec<usize> = (0..train_part.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut labels = Vec::with_capacity(chunk.len());
            let mut perts = Vec::with_capacity(chunk.len());
            for &i in chunk {
                perts.push(sample_perturbation(spec, train_part.row(i), &mut rng)?);
                labels.push(train_part.labels()[i]);
            }
            let (loss, grad) = dsm_loss_and_grad(&net, &labels, &perts)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            adam.step(net.params_mut(), &grad);
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = loss_sum / seen.max(1) as f64;
        let val_loss = dsm_loss_on(&net, &val_labels, &val_perts)?;
        epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr: adam.lr,
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_params.copy_from_slice(net.params());
            best_epoch = epoch;
            since_best = 0;
            since_decay = 0;
        } else {
            since_best += 1;
            since_decay += 1;
            if since_decay >= config.scheduler_patience {
                adam.lr *= config.scheduler_gamma;
                since_decay = 0;
            }
            if since_best >= config.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }

    net.set_params(&best_params)?;
    Ok(TrainOutcome {
        report: TrainReport {
            epochs,
            initial_val_loss,
            best_val_loss: best_val,
            best_epoch,
            stopped_early,
            param_count: net.param_count(),
            warnings,
        },
        net,
    })
}
