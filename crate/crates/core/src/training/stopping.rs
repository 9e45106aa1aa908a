use serde::{Deserialize, Serialize};

use crate::nn::Module;

/// Validation-loss patience rule: the counter grows while
/// `curr >= prev * factor` and resets otherwise; training stops once the counter
/// reaches `patience`. `prev` is always the previous epoch's loss.
pub fn early_stop_check(prev: f64, curr: f64, counter: usize, factor: f64, patience: usize) -> (usize, bool) {
    let counter = if curr >= prev * factor { counter + 1 } else { 0 };
    (counter, counter >= patience)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopPolicy {
    /// Compare with the previous epoch.
    #[default]
    PreviousEpoch,
    /// Compare with the best loss seen so far.
    BestSoFar,
}

/// Stateful wrapper around [`early_stop_check`].
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    policy: StopPolicy,
    factor: f64,
    patience: usize,
    reference: f64,
    counter: usize,
}

impl EarlyStopper {
    pub fn new(policy: StopPolicy, factor: f64, patience: usize) -> Self {
        EarlyStopper {
            policy,
            factor,
            patience,
            reference: f64::INFINITY,
            counter: 0,
        }
    }

    pub fn counter(&self) -> usize {
        self.counter
    }

    /// Feeds one epoch's validation loss; true means stop.
    pub fn update(&mut self, curr: f64) -> bool {
        let (counter, stop) = early_stop_check(self.reference, curr, self.counter, self.factor, self.patience);
        self.counter = counter;
        self.reference = match self.policy {
            StopPolicy::PreviousEpoch => curr,
            StopPolicy::BestSoFar => self.reference.min(curr),
        };
        stop
    }
}

/// True when the largest absolute accumulated gradient is below `floor`.
pub fn gradient_floor_check(m: &dyn Module, floor: f64) -> bool {
    grad_inf_norm(m) < floor
}

pub fn grad_inf_norm(m: &dyn Module) -> f64 {
    m.parameters()
        .iter()
        .flat_map(|p| p.grad.data().iter())
        .fold(0.0, |acc: f64, g| acc.max(g.abs()))
}
