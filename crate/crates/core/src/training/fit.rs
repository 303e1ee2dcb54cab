use rand::seq::SliceRandom;

use super::adam::{adam_step, AdamState};
use super::tape::{flatten_params, unflatten_params, CascadeGrads, GradTape};
use super::{loss_kspace, loss_kspace_grad};
use crate::data::{Dataset, KSpace};
use crate::error::{Error, Result};
use crate::par;
use crate::unroll::{cascade_forward, CascadeConfig, CascadeParams, ReconProblem};

/// One training pair: the undersampled problem and its fully sampled target.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub problem: ReconProblem,
    pub truth: KSpace,
}

/// Undersamples every record and calibrates its kernel.
pub fn prepare_samples(dataset: &Dataset, kw: usize, tikhonov: f64) -> Result<Vec<TrainSample>> {
    par::map(&dataset.records, |r| {
        Ok(TrainSample {
            problem: ReconProblem::from_full(&r.full, &r.mask, kw, tikhonov)?,
            truth: r.full.clone(),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub lr: f64,
    /// Learning-rate factor applied once per epoch.
    pub decay: f64,
    pub cascade: CascadeConfig,
    pub kw: usize,
    pub tikhonov: f64,
    /// Train only `mu` and `lambda2`; attention parameters, `lambda1`, and
    /// `gamma` stay at their initial values.
    pub freeze_attention: bool,
    /// Keep every `lambda2` at its initial value.
    pub freeze_glp: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch: 1,
            seed: 0,
            lr: 1e-4,
            decay: 0.99,
            cascade: CascadeConfig::default(),
            kw: 5,
            tikhonov: 1e-3,
            freeze_attention: false,
            freeze_glp: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument("epochs and batch must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.decay > 0.0) {
            return Err(Error::InvalidArgument("need lr >= 0 and decay > 0".into()));
        }
        self.cascade.validate()
    }
}

/// One optimizer step as logged.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    /// Mean batch loss before the update.
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: CascadeParams,
    /// Parameters at the end of the epoch with the lowest mean loss.
    pub best: CascadeParams,
    pub best_epoch: usize,
    /// Mean loss of the initial parameters over the whole training set.
    pub initial_loss: f64,
    /// Mean step loss per epoch.
    pub history: Vec<f64>,
    pub steps: Vec<StepLog>,
}

/// Loss and parameter gradient for one sample.
pub fn loss_and_grad(sample: &TrainSample, params: &CascadeParams) -> Result<(f64, CascadeGrads)> {
    let tape = GradTape::record(&sample.problem, params)?;
    let loss = loss_kspace(tape.output(), &sample.truth)?;
    let g = loss_kspace_grad(tape.output(), &sample.truth)?;
    Ok((loss, tape.backward(params, &g)?))
}

/// Mean loss of `params` over `samples`.
pub fn mean_loss(samples: &[TrainSample], params: &CascadeParams) -> Result<f64> {
    let losses = par::map(samples, |s| loss_kspace(&cascade_forward(&s.problem, params)?, &s.truth));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / samples.len() as f64)
}

/// Trains a freshly initialized cascade.
pub fn fit(config: &TrainConfig, samples: &[TrainSample]) -> Result<FitResult> {
    let (n1, n2, nc) = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?
        .truth
        .dims();
    let params = CascadeParams::init(&config.cascade, n1, n2, nc, config.seed)?;
    fit_from(config, samples, params)
}

/// Trains `params` with ADAM over shuffled mini-batches.
pub fn fit_from(config: &TrainConfig, samples: &[TrainSample], mut params: CascadeParams) -> Result<FitResult> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    for s in samples {
        s.truth.check_same_shape(&s.problem.y)?;
        if let Some(d) = params.dims() {
            if d != s.truth.dims() {
                return Err(Error::InvalidArgument("sample shape does not match the cascade".into()));
            }
        }
    }
    let initial_loss = mean_loss(samples, &params)?;
    let mut flat = flatten_params(&params);
    let mut adam = AdamState::new(flat.len(), config.lr, config.decay);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut steps = Vec::new();
    let mut best = (f64::INFINITY, params.clone(), 0);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut rng = crate::rng::stream(config.seed, &format!("train/shuffle/{epoch}"));
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(config.batch) {
            let results = par::map(batch, |&i| loss_and_grad(&samples[i], &params));
            let mut loss = 0.0;
            let mut grads = CascadeGrads::zeros_like(&params);
            for r in results {
                let (l, g) = r?;
                loss += l;
                grads.accumulate(&g)?;
            }
            let inv = 1.0 / batch.len() as f64;
            grads.scale(inv);
            loss *= inv;
            if config.freeze_attention {
                grads.freeze_attention();
            }
            if config.freeze_glp {
                grads.freeze_glp();
            }
            steps.push(StepLog {
                epoch,
                step,
                loss,
                lr: adam.lr(epoch),
            });
            adam_step(&mut adam, &mut flat, &grads.flatten(), epoch)?;
            unflatten_params(&mut params, &flat)?;
            epoch_total += loss * batch.len() as f64;
            step += 1;
        }
        let mean = epoch_total / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("training loss in epoch {epoch}")));
        }
        history.push(mean);
        if mean < best.0 {
            best = (mean, params.clone(), epoch);
        }
    }
    Ok(FitResult {
        params,
        best: best.1,
        best_epoch: best.2,
        initial_loss,
        history,
        steps,
    })
}
