use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Re-planning times with linearly growing intervals: the `k`-th interval
/// (counting from zero) lasts `base + increment * k` steps. The first plan
/// is due at step 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchSchedule {
    base: u64,
    increment: u64,
    switches: u64,
    next_switch: u64,
}

impl SwitchSchedule {
    pub fn new(base: u64, increment: u64) -> Result<Self> {
        if base == 0 {
            return Err(Error::param("switch_base", "must be positive"));
        }
        if increment == 0 {
            return Err(Error::param("switch_increment", "must be positive"));
        }
        Ok(SwitchSchedule {
            base,
            increment,
            switches: 0,
            next_switch: 0,
        })
    }

    /// Length of the `k`-th interval.
    pub fn interval(&self, k: u64) -> u64 {
        self.base + self.increment * k
    }

    pub fn next_switch(&self) -> u64 {
        self.next_switch
    }

    pub fn switches(&self) -> u64 {
        self.switches
    }

    /// Whether a switch is due at step `t`; fires it if so.
    pub fn poll(&mut self, t: u64) -> bool {
        if t < self.next_switch {
            return false;
        }
        self.next_switch = t + self.interval(self.switches);
        self.switches += 1;
        true
    }
}

/// Robbins-Monro step sizes `η_k = η₀ / (1 + k)^ρ` with `ρ ∈ (0.5, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeSchedule {
    initial: f64,
    decay: f64,
}

impl StepSizeSchedule {
    pub fn new(initial: f64, decay: f64) -> Result<Self> {
        if !(initial > 0.0 && initial.is_finite()) {
            return Err(Error::param(
                "step0",
                format!("must be positive, got {initial}"),
            ));
        }
        if !(decay > 0.5 && decay <= 1.0) {
            return Err(Error::param(
                "step_decay",
                format!("must lie in (0.5, 1], got {decay}"),
            ));
        }
        Ok(StepSizeSchedule { initial, decay })
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    #[inline]
    pub fn rate(&self, k: u64) -> f64 {
        self.initial / (1.0 + k as f64).powf(self.decay)
    }
}

/// Which counter indexes the step size of a sparse update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepClock {
    /// `k` counts every update the agent has made.
    #[default]
    Global,
    /// `k` counts earlier updates of the same table entry.
    Entry,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervals_grow_linearly() {
        let mut sched = SwitchSchedule::new(10, 10).unwrap();
        let fired: Vec<u64> = (0..200).filter(|&t| sched.poll(t)).collect();
        assert_eq!(fired, vec![0, 10, 30, 60, 100, 150]);
        for (k, w) in fired.windows(2).enumerate() {
            assert_eq!(w[1] - w[0], 10 + 10 * k as u64);
        }
    }

    #[test]
    fn fires_exactly_at_next_switch() {
        let mut sched = SwitchSchedule::new(3, 2).unwrap();
        assert!(sched.poll(0));
        assert_eq!(sched.next_switch(), 3);
        assert!(!sched.poll(2));
        assert!(sched.poll(3));
        assert_eq!(sched.next_switch(), 8);
    }

    #[test]
    fn rejects_zero_parameters() {
        assert!(SwitchSchedule::new(0, 1).is_err());
        assert!(SwitchSchedule::new(1, 0).is_err());
        assert!(StepSizeSchedule::new(0.0, 0.6).is_err());
        assert!(StepSizeSchedule::new(0.1, 0.5).is_err());
        assert!(StepSizeSchedule::new(0.1, 1.1).is_err());
    }

    #[test]
    fn step_sizes_satisfy_robbins_monro_trend() {
        let sched = StepSizeSchedule::new(1.0, 0.6).unwrap();
        assert_eq!(sched.rate(0), 1.0);
        // Partial sums of η diverge like k^0.4; of η² converge (ρ > 0.5).
        let sum = |n: u64, p: i32| (0..n).map(|k| sched.rate(k).powi(p)).sum::<f64>();
        assert!(sum(1_000_000, 1) > 10.0 * sum(1_000, 1) / 2.0);
        let tail_sq = sum(1_000_000, 2) - sum(100_000, 2);
        assert!(tail_sq < 1.0);
    }
}
