use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::vae::Vae;
use super::{normalize_input, normalize_target, CodecConfig, CodecError, LossTerms};
use crate::remap::{Dataset, Pair};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Run the finite-difference gradient check before the first update.
    pub grad_check: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 16,
            epochs: 20,
            seed: 0,
            grad_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: &'static str,
    pub terms: LossTerms<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `(parameter index, analytic, numeric, relative error)`.
    pub entries: Vec<(usize, f64, f64, f64)>,
}

impl GradCheck {
    pub const TOLERANCE: f64 = 1e-3;

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.3).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < Self::TOLERANCE
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub vae: Vae<T>,
    pub log: Vec<EpochLog>,
    pub grad_check: Option<GradCheck>,
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64, n: usize) -> Self {
        Self {
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let c1 = T::one() - self.beta1.powi(self.t);
        let c2 = T::one() - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (T::one() - self.beta1) * g;
            *v = self.beta2 * *v + (T::one() - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// A pair ready for the network: normalized raw input, normalized target, mask.
#[derive(Debug, Clone)]
pub(crate) struct Prepared<T> {
    pub input: Vec<T>,
    pub target: Vec<T>,
    pub valid: Vec<bool>,
}

impl<T: Real> Prepared<T> {
    fn from_pair(pair: &Pair) -> Option<Self> {
        let (target, valid) = normalize_target(&pair.vxl);
        if !valid.iter().any(|&v| v) {
            return None;
        }
        Some(Self {
            input: normalize_input(&pair.raw),
            target,
            valid,
        })
    }

    fn cast<U: Real>(&self) -> Prepared<U> {
        Prepared {
            input: self.input.iter().map(|v| v.cast()).collect(),
            target: self.target.iter().map(|v| v.cast()).collect(),
            valid: self.valid.clone(),
        }
    }
}

fn prepare<'a, T: Real>(pairs: impl Iterator<Item = &'a Pair>) -> Vec<Prepared<T>> {
    pairs.filter_map(Prepared::from_pair).collect()
}

/// Mean loss over `samples`; `eps[i] = None` evaluates sample `i` at `z = mu`.
fn batch_loss<T: Real>(
    vae: &Vae<T>,
    samples: &[Prepared<T>],
    eps: &[Option<Vec<T>>],
    beta_norm: T,
) -> Result<LossTerms<T>, CodecError> {
    let mut acc = LossTerms::<T>::default();
    for (s, e) in samples.iter().zip(eps) {
        let trace = vae.forward(&s.input, e.as_deref());
        let l = vae.trace_loss(&trace, &s.target, &s.valid, beta_norm)?;
        acc.total += l.total;
        acc.recon += l.recon;
        acc.kl += l.kl;
    }
    let n = T::from_usize_lossy(samples.len().max(1));
    Ok(LossTerms {
        total: acc.total / n,
        recon: acc.recon / n,
        kl: acc.kl / n,
    })
}

/// Mean loss and its gradient over a batch.
fn batch_loss_grad<T: Real>(
    vae: &Vae<T>,
    samples: &[&Prepared<T>],
    eps: &[Vec<T>],
    beta_norm: T,
    grad: &mut [T],
) -> Result<LossTerms<T>, CodecError> {
    grad.fill(T::zero());
    let scale = T::one() / T::from_usize_lossy(samples.len());
    let mut acc = LossTerms::<T>::default();
    for (s, e) in samples.iter().zip(eps) {
        let trace = vae.forward(&s.input, Some(e));
        let l = vae.trace_loss(&trace, &s.target, &s.valid, beta_norm)?;
        acc.total += l.total * scale;
        acc.recon += l.recon * scale;
        acc.kl += l.kl * scale;
        vae.backward(&trace, &s.target, &s.valid, beta_norm, scale, grad);
    }
    Ok(acc)
}

/// Mean `(L, L_recon, L_KL)` over the pairs at `z = mu`. Pairs whose target has
/// no valid pixel are skipped.
pub fn evaluate<'a, T: Real>(
    vae: &Vae<T>,
    pairs: impl IntoIterator<Item = &'a Pair>,
) -> Result<LossTerms<f64>, CodecError> {
    let samples = prepare::<T>(pairs.into_iter());
    if samples.is_empty() {
        return Err(CodecError::EmptyDataset);
    }
    let eps = vec![None; samples.len()];
    Ok(batch_loss(vae, &samples, &eps, T::lit(vae.config.beta_norm()))?.cast())
}

/// Compares analytic and central-difference gradients of the mean batch loss
/// on `checks` randomly chosen parameters, in `f64`.
pub fn gradient_check<'a, T: Real, R: Rng + ?Sized>(
    vae: &Vae<T>,
    pairs: impl IntoIterator<Item = &'a Pair>,
    checks: usize,
    rng: &mut R,
) -> Result<GradCheck, CodecError> {
    let samples = prepare::<f64>(pairs.into_iter());
    if samples.is_empty() {
        return Err(CodecError::EmptyDataset);
    }
    check_micro_batch(vae, &samples, checks, rng)
}

fn non_finite<T: Real>(
    epoch: usize,
    step: usize,
    terms: &LossTerms<T>,
    vae: &Vae<T>,
    grad: &[T],
) -> CodecError {
    let max_abs = |v: &[T]| v.iter().map(|x| x.as_f64().abs()).fold(0.0, f64::max);
    CodecError::NonFiniteLoss {
        epoch,
        step,
        detail: format!(
            "L={} L_recon={} L_KL={} max|param|={} max|grad|={}",
            terms.total,
            terms.recon,
            terms.kl,
            max_abs(&vae.params),
            max_abs(grad)
        ),
    }
}

const GRAD_CHECK_STREAM: u64 = 0x6772_6164_6368_6b00;

/// Trains a fresh model on the dataset's train split.
///
/// The log holds one `train` row per epoch (and a `test` row when the test
/// split is non-empty); epoch 0 evaluates the initial parameters.
pub fn train<T: Real>(
    dataset: &Dataset,
    config: CodecConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome<T>, CodecError> {
    if opts.batch_size == 0 || !(opts.learning_rate > 0.0) {
        return Err(CodecError::InvalidConfig(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let train_set = prepare::<T>(dataset.train_pairs());
    if train_set.is_empty() {
        return Err(CodecError::EmptyDataset);
    }
    let test_set = prepare::<T>(dataset.test_pairs());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut vae = Vae::<T>::init(config, &mut rng);
    let beta_norm = T::lit(vae.config.beta_norm());

    let grad_check = if opts.grad_check {
        let mut check_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ GRAD_CHECK_STREAM);
        let micro: Vec<Prepared<f64>> = train_set.iter().take(2).map(Prepared::cast).collect();
        Some(check_micro_batch(&vae, &micro, 10, &mut check_rng)?)
    } else {
        None
    };

    let mut log = Vec::with_capacity(2 * (opts.epochs + 1));
    let mut record = |epoch: usize, vae: &Vae<T>| -> Result<(), CodecError> {
        for (split, set) in [("train", &train_set), ("test", &test_set)] {
            if set.is_empty() {
                continue;
            }
            let eps = vec![None; set.len()];
            let terms = batch_loss(vae, set, &eps, beta_norm)?.cast::<f64>();
            if !terms.is_finite() {
                return Err(non_finite(epoch, 0, &terms.cast::<T>(), vae, &[]));
            }
            log.push(EpochLog { epoch, split, terms });
        }
        Ok(())
    };
    record(0, &vae)?;

    let n = vae.latent_dim();
    let mut adam = Adam::<T>::new(opts.learning_rate, vae.params.len());
    let mut grad = vec![T::zero(); vae.params.len()];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(opts.batch_size).enumerate() {
            let batch: Vec<&Prepared<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let eps: Vec<Vec<T>> = batch
                .iter()
                .map(|_| {
                    (0..n)
                        .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
                        .collect()
                })
                .collect();
            let terms = batch_loss_grad(&vae, &batch, &eps, beta_norm, &mut grad)?;
            if !terms.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(non_finite(epoch, step, &terms, &vae, &grad));
            }
            adam.step(&mut vae.params, &grad);
        }
        record(epoch, &vae)?;
    }
    Ok(TrainOutcome {
        vae,
        log,
        grad_check,
    })
}

fn check_micro_batch<T: Real, R: Rng + ?Sized>(
    vae: &Vae<T>,
    micro: &[Prepared<f64>],
    checks: usize,
    rng: &mut R,
) -> Result<GradCheck, CodecError> {
    let mut model = vae.cast::<f64>();
    let n = model.latent_dim();
    let eps: Vec<Vec<f64>> = micro
        .iter()
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let beta_norm = model.config.beta_norm();
    let refs: Vec<&Prepared<f64>> = micro.iter().collect();
    let mut grad = vec![0.0; model.params.len()];
    batch_loss_grad(&model, &refs, &eps, beta_norm, &mut grad)?;
    let eps_opt: Vec<Option<Vec<f64>>> = eps.into_iter().map(Some).collect();
    let mut entries = Vec::with_capacity(checks);
    for _ in 0..checks {
        let idx = rng.random_range(0..model.params.len());
        let orig = model.params[idx];
        let h = 1e-6 * orig.abs().max(1.0);
        model.params[idx] = orig + h;
        let up = batch_loss(&model, micro, &eps_opt, beta_norm)?.total;
        model.params[idx] = orig - h;
        let down = batch_loss(&model, micro, &eps_opt, beta_norm)?.total;
        model.params[idx] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grad[idx];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        entries.push((idx, analytic, numeric, rel));
    }
    Ok(GradCheck { entries })
}
