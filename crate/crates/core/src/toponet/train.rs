//! Adam trainer over teacher-forcing samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mask::FeatureMap;
use crate::scalar::Scalar;

use super::loss::loss_and_grads;
use super::{TopoNetParams, TopoSample};

/// Optimization settings. The learning rate is constant; batches are
/// drawn uniformly with replacement from the training set, seeded for
/// exact reproducibility.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            steps: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Contract(format!("lr = {} must be positive", self.lr)));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Contract(format!("{name} = {beta} outside [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Contract("eps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Contract("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One training example: a sample plus the feature map of the window it
/// was built in.
#[derive(Clone, Copy)]
pub struct TrainItem<'a, S: Scalar> {
    pub fmap: &'a FeatureMap<S>,
    pub sample: &'a TopoSample<S>,
}

/// Adam state wrapped around the parameters. Callers drive it batch by
/// batch (see [`train_topo_net`] for the plain loop), which keeps the
/// optimizer state alive across evaluation pauses.
pub struct Trainer<S: Scalar> {
    params: TopoNetParams<S>,
    m: Vec<S>,
    v: Vec<S>,
    t: u64,
    cfg: TrainConfig,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(params: TopoNetParams<S>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let n = params.num_params();
        Ok(Trainer { params, m: vec![S::zero(); n], v: vec![S::zero(); n], t: 0, cfg })
    }

    pub fn params(&self) -> &TopoNetParams<S> {
        &self.params
    }

    pub fn into_params(self) -> TopoNetParams<S> {
        self.params
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One Adam update on the given batch. The batch loss is the mean
    /// of the per-sample losses (each itself a mean over its valid
    /// slots). A non-finite loss or gradient aborts with `E_NUMERIC`
    /// before touching the parameters.
    pub fn step(&mut self, batch: &[TrainItem<'_, S>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Contract("training batch is empty".into()));
        }
        let results: Vec<(S, TopoNetParams<S>)> = batch
            .par_iter()
            .map(|item| loss_and_grads(&self.params, item.fmap, item.sample))
            .collect::<Result<Vec<_>>>()?;

        let inv_b = S::one() / S::of(batch.len() as f64);
        let mut loss = S::zero();
        let mut grad = vec![S::zero(); self.params.num_params()];
        for (l, g) in &results {
            loss += *l;
            for (acc, &gv) in grad.iter_mut().zip(g.flatten().iter()) {
                *acc += gv;
            }
        }
        loss *= inv_b;
        for g in grad.iter_mut() {
            *g *= inv_b;
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite loss or gradient at step {}",
                self.t + 1
            )));
        }

        self.t += 1;
        let b1 = S::of(self.cfg.beta1);
        let b2 = S::of(self.cfg.beta2);
        let one = S::one();
        let bc1 = S::of(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = S::of(1.0 - self.cfg.beta2.powi(self.t as i32));
        let lr = S::of(self.cfg.lr);
        let eps = S::of(self.cfg.eps);
        let mut theta = self.params.flatten();
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        self.params.assign(&theta)?;
        Ok(loss.to_f64_lossy())
    }
}

/// Run `cfg.steps` Adam steps over uniformly drawn batches and return
/// the final parameters plus the per-step loss curve. Identical inputs
/// and seed give bit-identical results.
pub fn train_topo_net<S: Scalar>(
    params: TopoNetParams<S>,
    items: &[TrainItem<'_, S>],
    cfg: &TrainConfig,
) -> Result<(TopoNetParams<S>, Vec<f64>)> {
    if items.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let mut trainer = Trainer::new(params, cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let batch: Vec<TrainItem<'_, S>> =
            (0..cfg.batch_size).map(|_| items[rng.random_range(0..items.len())]).collect();
        losses.push(trainer.step(&batch)?);
    }
    Ok((trainer.into_params(), losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::toponet::forward::tests::{test_cfg, test_fmap};
    use crate::toponet::forward;

    /// Offset-separable toy task: targets east of the source connect,
    /// targets west do not. Learnable from the normalized offset alone.
    fn toy_dataset(count: usize) -> Vec<TopoSample<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..count)
            .map(|_| {
                let source =
                    Point::new(rng.random_range(8.0..24.0), rng.random_range(8.0..24.0));
                let slots = rng.random_range(3..8usize);
                let mut targets = Vec::new();
                let mut labels = Vec::new();
                for _ in 0..slots {
                    let dx: f64 = rng.random_range(-7.0..7.0);
                    let dy: f64 = rng.random_range(-7.0..7.0);
                    targets.push(Point::new(
                        (source.x + dx).clamp(0.0, 31.0),
                        (source.y + dy).clamp(0.0, 31.0),
                    ));
                    labels.push(if dx > 0.0 { 1.0 } else { 0.0 });
                }
                TopoSample { source, targets, valid: vec![true; slots], labels }
            })
            .collect()
    }

    #[test]
    fn training_learns_a_separable_rule() {
        let fmap = test_fmap(50);
        let samples = toy_dataset(40);
        let items: Vec<TrainItem<'_, f64>> =
            samples.iter().map(|sample| TrainItem { fmap: &fmap, sample }).collect();
        let params = TopoNetParams::init(test_cfg(), 7).unwrap();
        let cfg = TrainConfig { lr: 3e-3, steps: 250, batch_size: 8, seed: 1, ..TrainConfig::default() };
        let (trained, losses) = train_topo_net(params, &items, &cfg).unwrap();
        let head: f64 = losses[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = losses[losses.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(tail < 0.5 * head, "loss did not drop: head {head}, tail {tail}");
        assert!(tail < 0.3, "final loss too high: {tail}");

        // The trained net classifies a fresh sample by offset sign.
        let sample = TopoSample {
            source: Point::new(16.0, 16.0),
            targets: vec![Point::new(22.0, 16.0), Point::new(10.0, 16.0)],
            valid: vec![true, true],
            labels: vec![1.0, 0.0],
        };
        let out = forward(&trained, &fmap, &sample).unwrap();
        assert!(out.probs[0] > 0.6, "east target scored {}", out.probs[0]);
        assert!(out.probs[1] < 0.4, "west target scored {}", out.probs[1]);
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let fmap = test_fmap(60);
        let samples = toy_dataset(10);
        let items: Vec<TrainItem<'_, f64>> =
            samples.iter().map(|sample| TrainItem { fmap: &fmap, sample }).collect();
        let cfg = TrainConfig { steps: 30, batch_size: 4, seed: 5, ..TrainConfig::default() };
        let run = |seed: u64| {
            let cfg = TrainConfig { seed, ..cfg.clone() };
            let params = TopoNetParams::init(test_cfg(), 7).unwrap();
            train_topo_net(params, &items, &cfg).unwrap()
        };
        let (p1, l1) = run(5);
        let (p2, l2) = run(5);
        let (p3, l3) = run(6);
        assert_eq!(p1, p2);
        assert_eq!(l1, l2);
        assert!(l1 != l3 || p1 != p3);
    }

    #[test]
    fn non_finite_parameters_abort_with_numeric_error() {
        let fmap = test_fmap(60);
        let samples = toy_dataset(4);
        let items: Vec<TrainItem<'_, f64>> =
            samples.iter().map(|sample| TrainItem { fmap: &fmap, sample }).collect();
        let mut params = TopoNetParams::init(test_cfg(), 7).unwrap();
        let mut flat = params.flatten();
        flat[0] = f64::NAN;
        params.assign(&flat).unwrap();
        let mut trainer = Trainer::new(params, TrainConfig::default()).unwrap();
        match trainer.step(&items) {
            Err(Error::Numeric(_)) => {}
            other => panic!("expected E_NUMERIC, got {other:?}"),
        }
    }

    #[test]
    fn empty_inputs_are_contract_errors() {
        let params = TopoNetParams::<f64>::init(test_cfg(), 7).unwrap();
        assert!(matches!(
            train_topo_net(params.clone(), &[], &TrainConfig::default()),
            Err(Error::Contract(_))
        ));
        let mut trainer = Trainer::new(params, TrainConfig::default()).unwrap();
        assert!(matches!(trainer.step(&[]), Err(Error::Contract(_))));
        let bad = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
