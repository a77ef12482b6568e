//! Sequential ensemble training: dense initialization, an exploration
//! phase, then `M` exploitation phases separated by mean perturbations.
//! The converged learner at the end of each phase is snapshotted.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{augment_batch, AugmentParams, Dataset, Normalization};
use crate::error::{Error, Result};
use crate::layers::{GateMode, LayerKind, PriorConfig};
use crate::model::{Network, NetworkSpec, NoiseStreams};
use crate::numeric::{streams, DenseMatrix, RngStream};
use crate::objective::{elbo_gradient, elbo_loss, ElboConfig};
use crate::optim::SgdMomentum;
use crate::schedule::{PhaseEvent, PhasePlan};
use crate::snapshot::{Snapshot, SnapshotHeader};
use crate::sparsity::sparsity_report;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    DenseBnn,
    SebaysFreeze,
    SebaysNoFreeze,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] = [TrainMode::DenseBnn, TrainMode::SebaysFreeze, TrainMode::SebaysNoFreeze];

    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::DenseBnn => "dense-bnn",
            TrainMode::SebaysFreeze => "sebays-freeze",
            TrainMode::SebaysNoFreeze => "sebays-no-freeze",
        }
    }

    pub fn gated(&self) -> bool {
        *self != TrainMode::DenseBnn
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TrainMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown training mode `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub sigma: f64,
    pub gamma: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { sigma: 1e-4, gamma: 0.99 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub plan: PhasePlan,
    pub rho: f64,
    pub mode: TrainMode,
    pub sigma_reset: f64,
    pub init: InitConfig,
    /// Set from the run configuration's top-level seed.
    #[serde(skip)]
    pub seed: u64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub temperature: f64,
    /// Gates with `γ` below this are pruned (sparsity accounting, freezing).
    pub prune_threshold: f64,
    /// Freeze mode only: keep sampling gates from the fixed `γ` instead of
    /// applying the deterministic mask.
    pub freeze_sampled: bool,
    /// Pad-crop-flip augmentation of image inputs.
    pub augment: bool,
    /// Prediction checkpoint period in exploitation epochs; 0 disables.
    pub trajectory_every: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            plan: PhasePlan::default(),
            rho: 3.0,
            mode: TrainMode::SebaysFreeze,
            sigma_reset: 1e-6,
            init: InitConfig::default(),
            seed: 0,
            batch_size: 128,
            momentum: 0.9,
            weight_decay: 0.0,
            temperature: 0.5,
            prune_threshold: 0.5,
            freeze_sampled: false,
            augment: false,
            trajectory_every: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::config("trainer.rho", "must be non-negative"));
        }
        if !(self.sigma_reset > 0.0 && self.sigma_reset.is_finite()) {
            return Err(Error::config("trainer.sigma_reset", "must be positive"));
        }
        if !(self.init.sigma > 0.0 && self.init.sigma.is_finite()) {
            return Err(Error::config("trainer.init.sigma", "must be positive"));
        }
        if !(self.init.gamma > 0.5 && self.init.gamma < 1.0) {
            return Err(Error::config("trainer.init.gamma", "must lie in (0.5, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("trainer.batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("trainer.momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("trainer.weight_decay", "must be non-negative"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::config("trainer.temperature", "must be positive"));
        }
        if !(self.prune_threshold > 0.0 && self.prune_threshold < 1.0) {
            return Err(Error::config("trainer.prune_threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Checks that the network's layer kinds agree with the mode.
    pub fn check_spec(&self, spec: &NetworkSpec) -> Result<()> {
        match (self.mode.gated(), spec.has_gates()) {
            (false, true) => Err(Error::config("network.layers", "dense-bnn mode takes Gaussian layers only")),
            (true, false) => Err(Error::config("network.layers", format!("{} mode needs at least one spike-slab layer", self.mode))),
            _ => Ok(()),
        }
    }
}

/// Fan-in scaled zero-mean means (`N(0, 2/fan_in)` for weights, zero for
/// biases), every σ set to `init.sigma`, every γ to `init.gamma`.
pub fn initialize(net: &mut Network, init: &InitConfig, rng: &mut RngStream) {
    for l in &mut net.layers {
        let std = (2.0 / l.topology.unit_fan_in() as f64).sqrt();
        for m in l.weights.mu_mut() {
            *m = std * rng.standard_normal();
        }
        l.bias.mu_mut().iter_mut().for_each(|m| *m = 0.0);
        l.weights.set_sigma_all(init.sigma);
        l.bias.set_sigma_all(init.sigma);
        if let Some(g) = &mut l.gate {
            g.set_gamma_all(init.gamma);
            g.set_mask(None);
        }
    }
}

/// Sign stream used for the perturbation that follows learner `learner`.
pub fn perturbation_stream(seed: u64, learner: usize) -> RngStream {
    RngStream::new(seed, streams::derive(streams::PERTURB_SIGNS, learner as u64, 0))
}

/// `μ ← μ + s·(ρσ)` for every weight and bias mean with an independent
/// uniform sign `s`, then every σ set to `sigma_reset`. Gates are untouched.
pub fn perturb(net: &mut Network, rho: f64, sigma_reset: f64, signs: &mut RngStream) {
    for l in &mut net.layers {
        for t in [&mut l.weights, &mut l.bias] {
            let step: Vec<f64> = t.sigma().iter().map(|s| rho * s).collect();
            for (m, d) in t.mu_mut().iter_mut().zip(step) {
                *m += signs.sign() * d;
            }
            t.set_sigma_all(sigma_reset);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-example negative ELBO over the epoch.
    pub loss: f64,
    /// Network KL at the end of the epoch.
    pub kl: f64,
    /// Mean per-example NLL over the epoch.
    pub nll: f64,
    pub remaining_param_ratio: f64,
    pub remaining_flop_ratio: f64,
}

pub const EPOCH_LOG_HEADER: &str = "epoch,lr,loss,kl,nll,remaining_param_ratio,remaining_flop_ratio";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.epoch, self.lr, self.loss, self.kl, self.nll, self.remaining_param_ratio, self.remaining_flop_ratio
        )
    }
}

/// Test-set predictions saved periodically during exploitation.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub id: usize,
    pub epoch: usize,
    pub probs: DenseMatrix,
}

/// Hooks called during [`train`]. Every method defaults to a no-op.
pub trait TrainObserver {
    fn on_epoch_end(&mut self, _net: &Network, _log: &EpochLog) -> Result<()> {
        Ok(())
    }
    fn on_snapshot(&mut self, _snap: &Snapshot) -> Result<()> {
        Ok(())
    }
    /// Called after the perturbation following learner `learner`.
    fn on_perturbed(&mut self, _learner: usize, _before: &Network, _after: &Network) -> Result<()> {
        Ok(())
    }
    fn on_checkpoint(&mut self, _cp: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<EpochLog>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_network: Network,
}

pub struct TrainInputs<'a> {
    pub spec: NetworkSpec,
    pub prior: PriorConfig,
    /// Raw (unnormalized) training split.
    pub train: &'a Dataset,
    pub normalization: Option<Normalization>,
    /// Raw inputs for prediction checkpoints.
    pub trajectory_inputs: Option<&'a DenseMatrix>,
}

fn normalized(m: DenseMatrix, norm: &Option<Normalization>, ds: &Dataset) -> Result<DenseMatrix> {
    let mut m = m;
    if let Some(n) = norm {
        n.apply_matrix(&mut m, ds.image)?;
    }
    Ok(m)
}

pub fn train(cfg: &TrainerConfig, inputs: TrainInputs<'_>, obs: &mut dyn TrainObserver) -> Result<TrainRun> {
    cfg.validate()?;
    cfg.check_spec(&inputs.spec)?;
    let ds = inputs.train;
    if ds.is_empty() {
        return Err(Error::EmptyInput("train"));
    }
    if ds.classes > inputs.spec.classes {
        return Err(Error::config("network.classes", format!("dataset has {} classes", ds.classes)));
    }
    if cfg.augment && ds.image.is_none() {
        return Err(Error::config("trainer.augment", "augmentation needs an image dataset"));
    }
    let plan = &cfg.plan;
    let seed = cfg.seed;

    let mut net = Network::new(inputs.spec.clone(), inputs.prior, cfg.temperature)?;
    initialize(&mut net, &cfg.init, &mut RngStream::new(seed, streams::INIT));
    let mut opt = SgdMomentum::new(cfg.momentum, cfg.weight_decay);
    let mut noise = NoiseStreams::new(seed);
    let elbo = ElboConfig { dataset_size: ds.len() };
    let traj = match inputs.trajectory_inputs {
        Some(x) if cfg.trajectory_every > 0 => Some(normalized(x.clone(), &inputs.normalization, ds)?),
        _ => None,
    };

    let mut run = TrainRun {
        snapshots: Vec::new(),
        log: Vec::new(),
        checkpoints: Vec::new(),
        final_network: net.clone(),
    };
    let mut learn_gates = true;
    let mut phase_start = plan.t0;
    if plan.t0 == 0 {
        learn_gates = enter_exploitation(cfg, &mut net);
    }

    for epoch in 0..plan.total_epochs() {
        let lr = plan.lr_at(epoch)?;
        let mode = if net.gates_frozen() { GateMode::FrozenMask } else { GateMode::Hard };
        let mut order: Vec<usize> = (0..ds.len()).collect();
        RngStream::new(seed, streams::derive(streams::DATA_ORDER, epoch as u64, 0)).shuffle(&mut order);

        let (mut loss_sum, mut nll_sum) = (0.0, 0.0);
        for (step, ids) in order.chunks(cfg.batch_size).enumerate() {
            let mut x = ds.features.select_rows(ids);
            if cfg.augment {
                x = augment_batch(&x, ids, ds.image, seed, epoch, AugmentParams::default())?;
            }
            let x = normalized(x, &inputs.normalization, ds)?;
            let y: Vec<usize> = ids.iter().map(|&i| ds.labels[i]).collect();
            let (terms, cache) = elbo_loss(&mut net, &x, &y, &mut noise, &elbo, mode)?;
            if !terms.loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    detail: format!("loss {}", terms.loss),
                });
            }
            loss_sum += terms.loss;
            nll_sum += terms.nll;
            let mut grads = elbo_gradient(&net, &cache, &terms, &y, learn_gates && net.has_gates())?;
            grads.scale(1.0 / ids.len() as f64);
            opt.step(&mut net, &grads, lr).map_err(|e| match e {
                Error::NonFinite(what) => Error::Divergence { epoch, step, detail: what },
                e => e,
            })?;
        }

        let sp = sparsity_report(&net, cfg.prune_threshold);
        let log = EpochLog {
            epoch,
            lr,
            loss: loss_sum / ds.len() as f64,
            kl: net.kl(),
            nll: nll_sum / ds.len() as f64,
            remaining_param_ratio: sp.remaining_param_ratio,
            remaining_flop_ratio: sp.remaining_flop_ratio,
        };
        obs.on_epoch_end(&net, &log)?;
        run.log.push(log);

        if epoch + 1 == plan.t0 {
            learn_gates = enter_exploitation(cfg, &mut net);
        }

        if let (Some(x), true) = (&traj, epoch >= plan.t0) {
            if (epoch + 1 - plan.t0) % cfg.trajectory_every == 0 {
                let id = run.checkpoints.len();
                let probs = net.predict(x, &mut NoiseStreams::for_eval(seed, 1_000_000 + id as u64))?;
                let cp = Checkpoint { id, epoch, probs };
                obs.on_checkpoint(&cp)?;
                run.checkpoints.push(cp);
            }
        }

        match plan.event_at(epoch) {
            PhaseEvent::None => {}
            event => {
                let learner = run.snapshots.len() + 1;
                let snap = Snapshot {
                    header: SnapshotHeader {
                        learner,
                        mode: cfg.mode.name().to_string(),
                        epoch_start: phase_start,
                        epoch_end: epoch,
                        final_lr: lr,
                        temperature: cfg.temperature,
                        spec: inputs.spec.clone(),
                        prior: inputs.prior,
                        normalization: inputs.normalization.clone(),
                    },
                    network: net.clone(),
                };
                obs.on_snapshot(&snap)?;
                run.snapshots.push(snap);
                if event == PhaseEvent::PerturbAndSnapshot {
                    let before = net.clone();
                    perturb(&mut net, cfg.rho, cfg.sigma_reset, &mut perturbation_stream(seed, learner));
                    opt.reset();
                    obs.on_perturbed(learner, &before, &net)?;
                }
                phase_start = epoch + 1;
            }
        }
    }
    run.final_network = net;
    Ok(run)
}

/// Switches gate handling at the end of exploration. Returns whether gate
/// logits keep learning.
fn enter_exploitation(cfg: &TrainerConfig, net: &mut Network) -> bool {
    match cfg.mode {
        TrainMode::DenseBnn => false,
        TrainMode::SebaysNoFreeze => true,
        TrainMode::SebaysFreeze => {
            if !cfg.freeze_sampled {
                net.freeze_gates(cfg.prune_threshold);
            }
            false
        }
    }
}

/// Hidden-layer kind for a mode.
pub fn hidden_kind(mode: TrainMode) -> LayerKind {
    if mode.gated() {
        LayerKind::SpikeSlab
    } else {
        LayerKind::Gaussian
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::two_moons;
    use crate::schedule::Schedule;

    fn spec(mode: TrainMode) -> NetworkSpec {
        NetworkSpec::mlp(2, &[8], 2, hidden_kind(mode), LayerKind::Gaussian)
    }

    fn tiny_cfg(mode: TrainMode) -> TrainerConfig {
        TrainerConfig {
            plan: PhasePlan {
                t0: 4,
                t_ex: 2,
                m: 3,
                schedule: Schedule::Stepwise,
                ..PhasePlan::default()
            },
            mode,
            batch_size: 16,
            seed: 5,
            ..TrainerConfig::default()
        }
    }

    fn run(cfg: &TrainerConfig) -> TrainRun {
        let ds = two_moons(64, 0.1, &mut RngStream::new(1, streams::DATA_GEN)).unwrap();
        train(
            cfg,
            TrainInputs {
                spec: spec(cfg.mode),
                prior: PriorConfig::default(),
                train: &ds,
                normalization: None,
                trajectory_inputs: Some(&ds.features),
            },
            &mut (),
        )
        .unwrap()
    }

    #[test]
    fn init_values_exact() {
        let mut net = Network::new(spec(TrainMode::SebaysFreeze), PriorConfig::default(), 0.5).unwrap();
        initialize(&mut net, &InitConfig::default(), &mut RngStream::new(0, streams::INIT));
        let l = &net.layers[0];
        assert!(l.gate.as_ref().unwrap().gammas().iter().all(|&g| g == 0.99));
        assert!(l.weights.sigma().iter().all(|&s| s == 1e-4));
        let mut other = Network::new(spec(TrainMode::SebaysFreeze), PriorConfig::default(), 0.5).unwrap();
        initialize(&mut other, &InitConfig::default(), &mut RngStream::new(0, streams::INIT));
        assert_eq!(net, other);
    }

    #[test]
    fn perturb_formula() {
        let mut net = Network::new(NetworkSpec::mlp(1, &[], 1, LayerKind::Gaussian, LayerKind::Gaussian), PriorConfig::default(), 0.5).unwrap();
        net.layers[0].weights.mu_mut()[0] = 1.0;
        net.layers[0].weights.set_sigma_all(0.1);
        let mut signs = RngStream::new(0, 0);
        let s = signs.clone().sign();
        perturb(&mut net, 3.0, 1e-6, &mut signs);
        assert_eq!(net.layers[0].weights.mu()[0], 1.0 + s * (3.0 * 0.1));
        assert!((net.layers[0].weights.mu()[0] - (1.0 + s * 0.3)).abs() < 1e-15);
        assert_eq!(net.layers[0].weights.sigma()[0], 1e-6);

        let before = net.layers[0].weights.mu().to_vec();
        perturb(&mut net, 0.0, 1e-6, &mut signs);
        assert_eq!(net.layers[0].weights.mu(), &before[..]);
    }

    #[test]
    fn minimal_plan_one_snapshot() {
        let mut cfg = tiny_cfg(TrainMode::DenseBnn);
        cfg.plan = PhasePlan {
            t0: 0,
            t_ex: 2,
            m: 1,
            ..PhasePlan::default()
        };
        struct Count(usize);
        impl TrainObserver for Count {
            fn on_perturbed(&mut self, _: usize, _: &Network, _: &Network) -> Result<()> {
                self.0 += 1;
                Ok(())
            }
        }
        let ds = two_moons(8, 0.1, &mut RngStream::new(1, 0)).unwrap();
        let mut c = Count(0);
        let r = train(
            &cfg,
            TrainInputs {
                spec: spec(cfg.mode),
                prior: PriorConfig::default(),
                train: &ds,
                normalization: None,
                trajectory_inputs: None,
            },
            &mut c,
        )
        .unwrap();
        assert_eq!(r.snapshots.len(), 1);
        assert_eq!(c.0, 0);
    }

    #[test]
    fn freeze_keeps_gates_fixed() {
        let cfg = tiny_cfg(TrainMode::SebaysFreeze);
        struct Gammas(Vec<(usize, Vec<Vec<f64>>)>);
        impl TrainObserver for Gammas {
            fn on_epoch_end(&mut self, net: &Network, log: &EpochLog) -> Result<()> {
                self.0.push((log.epoch, net.gammas()));
                Ok(())
            }
        }
        let ds = two_moons(64, 0.1, &mut RngStream::new(1, 0)).unwrap();
        let mut g = Gammas(Vec::new());
        let r = train(
            &cfg,
            TrainInputs {
                spec: spec(cfg.mode),
                prior: PriorConfig::default(),
                train: &ds,
                normalization: None,
                trajectory_inputs: None,
            },
            &mut g,
        )
        .unwrap();
        let after: Vec<_> = g.0.iter().filter(|(e, _)| *e >= cfg.plan.t0 - 1).map(|(_, v)| v.clone()).collect();
        assert!(after.windows(2).all(|w| w[0] == w[1]));
        let masks: Vec<_> = r.snapshots.iter().map(|s| s.network.layers[0].gate.as_ref().unwrap().mask().unwrap().to_vec()).collect();
        assert!(masks.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn deterministic_and_counts() {
        let cfg = TrainerConfig {
            trajectory_every: 1,
            ..tiny_cfg(TrainMode::SebaysNoFreeze)
        };
        let a = run(&cfg);
        let b = run(&cfg);
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.log, b.log);
        assert_eq!(a.snapshots.len(), 3);
        assert_eq!(a.log.len(), cfg.plan.total_epochs());
        assert_eq!(a.checkpoints.len(), cfg.plan.m * cfg.plan.t_ex);
        for cp in &a.checkpoints {
            for row in cp.probs.iter_rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mode_and_spec_must_agree() {
        let cfg = tiny_cfg(TrainMode::DenseBnn);
        assert!(cfg.check_spec(&spec(TrainMode::SebaysFreeze)).is_err());
        assert!(tiny_cfg(TrainMode::SebaysFreeze).check_spec(&spec(TrainMode::DenseBnn)).is_err());
    }
}
