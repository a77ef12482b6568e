//! Training timeline: an exploration phase of `t0` epochs at a constant high
//! learning rate followed by `m` exploitation phases of `t_ex` epochs, each
//! under one of four cyclic schedules. Learning rates change only at epoch
//! boundaries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Stepwise,
    Cosine,
    LinearFge,
    #[serde(rename = "linear-1")]
    Linear1,
}

impl Schedule {
    pub const ALL: [Schedule; 4] = [Schedule::Stepwise, Schedule::Cosine, Schedule::LinearFge, Schedule::Linear1];

    pub fn name(&self) -> &'static str {
        match self {
            Schedule::Stepwise => "stepwise",
            Schedule::Cosine => "cosine",
            Schedule::LinearFge => "linear-fge",
            Schedule::Linear1 => "linear-1",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Schedule::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown schedule `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhasePlan {
    pub t0: usize,
    pub t_ex: usize,
    pub m: usize,
    pub lr_high: f64,
    pub lr_mid: f64,
    pub lr_low: f64,
    pub schedule: Schedule,
}

impl Default for PhasePlan {
    fn default() -> Self {
        Self {
            t0: 150,
            t_ex: 100,
            m: 3,
            lr_high: 0.1,
            lr_mid: 0.01,
            lr_low: 0.001,
            schedule: Schedule::Stepwise,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseEvent {
    None,
    /// Snapshot the learner, then perturb the means for the next phase.
    PerturbAndSnapshot,
    /// Snapshot the last learner; training ends.
    SnapshotFinal,
}

/// Position of an epoch within the plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Exploration,
    /// Exploitation phase `index` (0-based), `epoch` epochs into it.
    Exploitation { index: usize, epoch: usize },
}

impl PhasePlan {
    pub fn total_epochs(&self) -> usize {
        self.t0 + self.m * self.t_ex
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("trainer.plan.m", "must be at least 1"));
        }
        if self.t_ex == 0 || self.t_ex % 2 != 0 {
            return Err(Error::config("trainer.plan.t_ex", "must be positive and even"));
        }
        for (k, v) in [("lr_high", self.lr_high), ("lr_mid", self.lr_mid), ("lr_low", self.lr_low)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("trainer.plan.{k}"), "must be positive"));
            }
        }
        if !(self.lr_high >= self.lr_mid && self.lr_mid >= self.lr_low) {
            return Err(Error::config("trainer.plan", "requires lr_high >= lr_mid >= lr_low"));
        }
        Ok(())
    }

    pub fn phase_of(&self, epoch: usize) -> Phase {
        if epoch < self.t0 {
            Phase::Exploration
        } else {
            let e = epoch - self.t0;
            Phase::Exploitation {
                index: e / self.t_ex,
                epoch: e % self.t_ex,
            }
        }
    }

    /// Learning rate for 0-based `epoch`.
    ///
    /// Within exploitation epoch `e ∈ [0, t_ex)`, with `h = t_ex/2`:
    /// - stepwise: `lr_mid` for `e < h`, else `lr_low`;
    /// - cosine: `lr_low + ½(lr_mid − lr_low)(1 + cos(π e / t_ex))`;
    /// - linear-fge: piecewise linear through `(0, start)`, `(h, lr_mid)`,
    ///   `(t_ex − 1, lr_low)`, where `start` is `lr_high` in the first phase
    ///   and `lr_low` afterwards;
    /// - linear-1: linear from `lr_mid` at `e = 0` to `lr_low` at `e = t_ex − 1`.
    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs() {
            return Err(Error::InvalidArgument(format!(
                "epoch {epoch} outside plan of {} epochs",
                self.total_epochs()
            )));
        }
        let (index, e) = match self.phase_of(epoch) {
            Phase::Exploration => return Ok(self.lr_high),
            Phase::Exploitation { index, epoch } => (index, epoch),
        };
        let t_ex = self.t_ex;
        let half = t_ex / 2;
        let (hi, mid, lo) = (self.lr_high, self.lr_mid, self.lr_low);
        // endpoints are returned exactly
        let lerp = |a: f64, b: f64, num: usize, den: usize| {
            if num == den {
                b
            } else {
                a + (b - a) * (num as f64 / den as f64)
            }
        };
        Ok(match self.schedule {
            Schedule::Stepwise => {
                if e < half {
                    mid
                } else {
                    lo
                }
            }
            Schedule::Cosine => lo + 0.5 * (mid - lo) * (1.0 + (std::f64::consts::PI * e as f64 / t_ex as f64).cos()),
            Schedule::LinearFge => {
                let start = if index == 0 { hi } else { lo };
                if e < half {
                    lerp(start, mid, e, half)
                } else if t_ex - 1 == half {
                    lo
                } else {
                    lerp(mid, lo, e - half, t_ex - 1 - half)
                }
            }
            Schedule::Linear1 => lerp(mid, lo, e, t_ex - 1),
        })
    }

    /// Event at the end of 0-based `epoch`.
    pub fn event_at(&self, epoch: usize) -> PhaseEvent {
        let done = epoch + 1;
        if done <= self.t0 || done > self.total_epochs() || (done - self.t0) % self.t_ex != 0 {
            return PhaseEvent::None;
        }
        if done == self.total_epochs() {
            PhaseEvent::SnapshotFinal
        } else {
            PhaseEvent::PerturbAndSnapshot
        }
    }

    /// Completed-epoch counts at which snapshots are taken.
    pub fn snapshot_epochs(&self) -> Vec<usize> {
        (1..=self.m).map(|k| self.t0 + k * self.t_ex).collect()
    }

    pub fn lr_table(&self) -> Result<Vec<f64>> {
        (0..self.total_epochs()).map(|e| self.lr_at(e)).collect()
    }
}

/// `schedule,epoch,lr` rows for every schedule (or just `only`).
pub fn schedule_csv(plan: &PhasePlan, only: Option<Schedule>) -> Result<String> {
    let mut out = String::from("schedule,epoch,lr\n");
    let list: Vec<Schedule> = match only {
        Some(s) => vec![s],
        None => Schedule::ALL.to_vec(),
    };
    for s in list {
        let p = PhasePlan { schedule: s, ..*plan };
        for (e, lr) in p.lr_table()?.into_iter().enumerate() {
            out.push_str(&format!("{s},{e},{lr:e}\n"));
        }
    }
    Ok(out)
}
