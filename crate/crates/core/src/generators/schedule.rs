//! Linear-β noise schedule and the closed-form forward process.

use ndarray::{Array, Dimension};
use serde::{Deserialize, Serialize};

use super::GenerateError;

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_BETA_START: f64 = 1e-4;
/// Chosen so that ᾱ at the last step is below 0.05/1.05 (SNR < 0.05) with
/// 100 steps. An end value of 0.02 leaves ᾱ ≈ 0.36 there.
pub const DEFAULT_BETA_END: f64 = 0.07;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self, GenerateError> {
        if steps == 0 || !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(GenerateError::Invalid(format!(
                "schedule needs steps > 0 and 0 < β_start ≤ β_end < 1, got {steps}, {beta_start}, {beta_end}"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|t| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * t as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(NoiseSchedule { betas, alpha_bars })
    }

    pub fn from_config(cfg: &ScheduleConfig) -> Result<Self, GenerateError> {
        NoiseSchedule::linear(cfg.steps, cfg.beta_start, cfg.beta_end)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn snr(&self, t: usize) -> f64 {
        self.alpha_bars[t] / (1.0 - self.alpha_bars[t])
    }

    fn check(&self, t: usize) -> Result<(), GenerateError> {
        if t >= self.steps() {
            return Err(GenerateError::Invalid(format!("step {t} out of range 0..{}", self.steps())));
        }
        Ok(())
    }

    /// `x_t = √ᾱ_t · x0 + √(1 − ᾱ_t) · noise`.
    pub fn forward<D: Dimension>(&self, x0: &Array<f64, D>, t: usize, noise: &Array<f64, D>) -> Result<Array<f64, D>, GenerateError> {
        self.check(t)?;
        if x0.shape() != noise.shape() {
            return Err(GenerateError::Shape("x0 and noise differ in shape".into()));
        }
        let a = self.alpha_bars[t].sqrt();
        let s = (1.0 - self.alpha_bars[t]).sqrt();
        Ok(x0 * a + noise * s)
    }

    /// Variance of the reverse-step posterior q(x_{t-1} | x_t, x_0).
    pub fn posterior_variance(&self, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.betas[t] * (1.0 - self.alpha_bars[t - 1]) / (1.0 - self.alpha_bars[t])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_weight() {
        let s = NoiseSchedule::from_config(&ScheduleConfig::default()).unwrap();
        let x0 = array![1.0, -2.0];
        let xt = s.forward(&x0, 0, &array![0.0, 0.0]).unwrap();
        assert!((xt[0] - (1.0f64 - 1e-4).sqrt()).abs() < 1e-15);
        assert!((xt[1] + 2.0 * (1.0f64 - 1e-4).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn alpha_bar_decreases_and_snr_is_small_at_end() {
        let s = NoiseSchedule::from_config(&ScheduleConfig::default()).unwrap();
        let mut direct = 1.0;
        for t in 0..s.steps() {
            direct *= 1.0 - s.betas[t];
            assert!((direct - s.alpha_bars[t]).abs() < 1e-15);
            if t > 0 {
                assert!(s.alpha_bars[t] < s.alpha_bars[t - 1]);
            }
        }
        assert!(s.snr(s.steps() - 1) < 0.05);
    }

    #[test]
    fn shallow_schedule_keeps_signal() {
        let s = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
        let snr = s.snr(99);
        assert!(snr > 0.5 && snr < 0.6, "{snr}");
    }

    #[test]
    fn out_of_range_step_errors() {
        let s = NoiseSchedule::linear(10, 1e-4, 0.02).unwrap();
        assert!(s.forward(&array![0.0], 10, &array![0.0]).is_err());
    }
}
