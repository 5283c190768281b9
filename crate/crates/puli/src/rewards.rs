//! Learning-to-intervene rewards: each epoch's validation metrics are scored
//! as deltas against the best value seen in previous epochs, then mixed by λ.
//!
//! The ledger appends the new metric only after computing the reward, so the
//! historical best is always strictly over earlier epochs.

use std::fmt::Write as _;

use thiserror::Error;

pub const DEFAULT_LAMBDA: f64 = 0.6;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("{metric} history is empty; run initialization first")]
    EmptyHistory { metric: &'static str },
    #[error("{metric} value {value} outside [0, 1]")]
    OutOfRange { metric: &'static str, value: f64 },
    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
}

/// Per-run history of Observer accuracy (z) and Presenter ROUGE-1 (l), with
/// running maxima used as reward baselines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricLedger {
    z_history: Vec<f64>,
    l_history: Vec<f64>,
}

fn check_unit(metric: &'static str, value: f64) -> Result<(), RewardError> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(RewardError::OutOfRange { metric, value });
    }
    Ok(())
}

impl MetricLedger {
    /// Initializes the ledger with the pretraining metrics z⁰ and l⁰.
    pub fn init(z0: f64, l0: f64) -> Result<Self, RewardError> {
        check_unit("z", z0)?;
        check_unit("l", l0)?;
        Ok(MetricLedger {
            z_history: vec![z0],
            l_history: vec![l0],
        })
    }

    pub fn z_history(&self) -> &[f64] {
        &self.z_history
    }

    pub fn l_history(&self) -> &[f64] {
        &self.l_history
    }

    pub fn epochs_recorded(&self) -> usize {
        self.z_history.len()
    }

    /// Timing reward: z_T minus the best previous validation accuracy. The
    /// new value is appended after the reward is computed.
    pub fn r_when(&mut self, z_t: f64) -> Result<f64, RewardError> {
        check_unit("z", z_t)?;
        let best = self
            .z_history
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if best.is_infinite() {
            return Err(RewardError::EmptyHistory { metric: "z" });
        }
        self.z_history.push(z_t);
        Ok(z_t - best)
    }

    /// Content reward: l_T minus the best previous validation ROUGE-1.
    pub fn r_how(&mut self, l_t: f64) -> Result<f64, RewardError> {
        check_unit("l", l_t)?;
        let best = self
            .l_history
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if best.is_infinite() {
            return Err(RewardError::EmptyHistory { metric: "l" });
        }
        self.l_history.push(l_t);
        Ok(l_t - best)
    }
}

/// r_total = λ·r_when + (1−λ)·r_how.
pub fn r_total(r_when: f64, r_how: f64, lambda: f64) -> Result<f64, RewardError> {
    if !(0.0..=1.0).contains(&lambda) || lambda.is_nan() {
        return Err(RewardError::LambdaOutOfRange(lambda));
    }
    Ok(lambda * r_when + (1.0 - lambda) * r_how)
}

/// One line of the per-run metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLogLine {
    pub epoch: usize,
    pub z: f64,
    pub l: f64,
    pub r_when: f64,
    pub r_how: f64,
    pub r_total: f64,
}

impl MetricsLogLine {
    pub fn render(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch, self.z, self.l, self.r_when, self.r_how, self.r_total
        )
    }
}

/// Renders the append-only metrics log: a header then one line per epoch.
pub fn render_metrics_log(lines: &[MetricsLogLine]) -> String {
    let mut out = String::from("epoch\tz\tl\tr_when\tr_how\tr_total\n");
    for line in lines {
        let _ = writeln!(out, "{}", line.render());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_when_direct_subtraction() {
        let mut ledger = MetricLedger::init(0.5, 0.5).unwrap();
        let r = ledger.r_when(0.6).unwrap();
        assert!((r - 0.10).abs() < 1e-12);
    }

    #[test]
    fn r_when_against_running_max() {
        // history [0.5, 0.6], z = 0.55 → −0.05
        let mut ledger = MetricLedger::init(0.5, 0.5).unwrap();
        ledger.r_when(0.6).unwrap();
        let r = ledger.r_when(0.55).unwrap();
        assert!((r + 0.05).abs() < 1e-12);
    }

    #[test]
    fn r_when_at_current_max_is_zero() {
        let mut ledger = MetricLedger::init(0.7, 0.5).unwrap();
        assert_eq!(ledger.r_when(0.7).unwrap(), 0.0);
    }

    #[test]
    fn replay_of_recorded_sequence() {
        // z = [0.5, 0.6, 0.55, 0.7] → r_when = [+0.10, −0.05, +0.10]
        let mut ledger = MetricLedger::init(0.5, 0.0).unwrap();
        let rewards: Vec<f64> = [0.6, 0.55, 0.7]
            .iter()
            .map(|&z| ledger.r_when(z).unwrap())
            .collect();
        let expected = [0.10, -0.05, 0.10];
        for (r, e) in rewards.iter().zip(&expected) {
            assert!((r - e).abs() < 1e-12, "{r} vs {e}");
        }
        assert_eq!(ledger.z_history(), &[0.5, 0.6, 0.55, 0.7]);
    }

    #[test]
    fn running_max_is_non_decreasing() {
        let mut ledger = MetricLedger::init(0.4, 0.4).unwrap();
        let mut prev_max = f64::NEG_INFINITY;
        for z in [0.5, 0.3, 0.8, 0.2, 0.9] {
            ledger.r_when(z).unwrap();
            let max = ledger
                .z_history()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(max >= prev_max);
            prev_max = max;
        }
    }

    #[test]
    fn r_total_hand_applied() {
        let r = r_total(0.1, 0.05, 0.6).unwrap();
        assert!((r - 0.08).abs() < 1e-12);
    }

    #[test]
    fn lambda_extremes_select_one_component() {
        assert_eq!(r_total(0.3, -0.9, 1.0).unwrap(), 0.3);
        assert_eq!(r_total(0.3, -0.9, 0.0).unwrap(), -0.9);
    }

    #[test]
    fn lambda_out_of_range_errors() {
        assert_eq!(
            r_total(0.1, 0.1, 1.5).unwrap_err(),
            RewardError::LambdaOutOfRange(1.5)
        );
    }

    #[test]
    fn metric_out_of_range_errors() {
        assert!(MetricLedger::init(1.2, 0.5).is_err());
        let mut ledger = MetricLedger::init(0.5, 0.5).unwrap();
        assert!(ledger.r_when(-0.1).is_err());
        // failed pushes do not extend history
        assert_eq!(ledger.z_history().len(), 1);
    }

    #[test]
    fn r_how_mirrors_r_when_over_l() {
        let mut ledger = MetricLedger::init(0.0, 0.5).unwrap();
        assert!((ledger.r_how(0.6).unwrap() - 0.10).abs() < 1e-12);
        assert!((ledger.r_how(0.55).unwrap() + 0.05).abs() < 1e-12);
    }

    #[test]
    fn metrics_log_renders_one_line_per_epoch() {
        let lines = vec![
            MetricsLogLine {
                epoch: 0,
                z: 0.5,
                l: 0.25,
                r_when: 0.0,
                r_how: 0.0,
                r_total: 0.0,
            },
            MetricsLogLine {
                epoch: 1,
                z: 0.625,
                l: 0.25,
                r_when: 0.125,
                r_how: 0.0,
                r_total: 0.075,
            },
        ];
        let log = render_metrics_log(&lines);
        assert_eq!(log.lines().count(), 3);
        assert!(log.contains("1\t0.625\t0.25\t0.125\t0\t0.075"));
    }
}
