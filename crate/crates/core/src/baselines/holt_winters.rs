//! Additive Holt-Winters with a 24-tick season.

use serde::{Deserialize, Serialize};

use super::BaselineError;

pub const SEASON: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl HwWeights {
    fn validate(&self) -> Result<(), BaselineError> {
        for (n, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w > 0.0 && w < 1.0) {
                return Err(BaselineError::InvalidHyperparams(format!("{n} = {w} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoltWintersFit {
    pub weights: HwWeights,
    pub level: f64,
    pub trend: f64,
    /// Seasonal component by phase `t mod 24` of the history index.
    pub season: Vec<f64>,
    pub history_len: usize,
    /// One-step-ahead in-sample RMSE over ticks `24..n`.
    pub rmse: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn run(y: &[f64], w: HwWeights) -> HoltWintersFit {
    let l0 = mean(&y[..SEASON]);
    let mut level = l0;
    let mut trend = (mean(&y[SEASON..2 * SEASON]) - l0) / SEASON as f64;
    let mut season: Vec<f64> = y[..SEASON].iter().map(|v| v - l0).collect();
    let mut sse = 0.0;
    for (t, &obs) in y.iter().enumerate().skip(SEASON) {
        let s = season[t % SEASON];
        let e = obs - (level + trend + s);
        sse += e * e;
        let new_level = w.alpha * (obs - s) + (1.0 - w.alpha) * (level + trend);
        trend = w.beta * (new_level - level) + (1.0 - w.beta) * trend;
        season[t % SEASON] = w.gamma * (obs - new_level) + (1.0 - w.gamma) * s;
        level = new_level;
    }
    HoltWintersFit {
        weights: w,
        level,
        trend,
        season,
        history_len: y.len(),
        rmse: (sse / (y.len() - SEASON) as f64).sqrt(),
    }
}

pub(crate) fn fit(y: &[f64], weights: &Option<HwWeights>) -> Result<HoltWintersFit, BaselineError> {
    if let Some(w) = weights {
        w.validate()?;
        return Ok(run(y, *w));
    }
    let grid: Vec<f64> = (1..=19).map(|i| i as f64 * 0.05).collect();
    let mut best: Option<HoltWintersFit> = None;
    for &alpha in &grid {
        for &beta in &grid {
            for &gamma in &grid {
                let f = run(y, HwWeights { alpha, beta, gamma });
                if best.as_ref().is_none_or(|b| f.rmse < b.rmse) {
                    best = Some(f);
                }
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}

impl HoltWintersFit {
    pub(crate) fn predict(&self, horizon: usize) -> Vec<f64> {
        let last = self.history_len - 1;
        (1..=horizon)
            .map(|h| self.level + h as f64 * self.trend + self.season[(last + h) % SEASON])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_series_is_reproduced_for_any_weights() {
        let shape = |t: usize| 34.0 + 2.0 * ((t % SEASON) as f64 * std::f64::consts::TAU / 24.0).sin();
        let y: Vec<f64> = (0..96).map(shape).collect();
        for w in [None, Some(HwWeights { alpha: 0.9, beta: 0.4, gamma: 0.05 })] {
            let f = fit(&y, &w).unwrap();
            assert!(f.rmse < 1e-12);
            for (h, v) in f.predict(48).iter().enumerate() {
                assert!((v - shape(96 + h)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rising_series_extrapolates_upward() {
        let y: Vec<f64> = (0..96).map(|t| 30.0 + 0.05 * t as f64 + ((t % SEASON) as f64 * 0.26).sin()).collect();
        let f = fit(&y, &None).unwrap();
        assert!(f.trend > 0.0);
        let p = f.predict(48);
        assert!(p[47] > p[23]);
    }

    #[test]
    fn fixed_weights_are_validated() {
        let y = vec![34.0; 48];
        assert!(fit(&y, &Some(HwWeights { alpha: 1.0, beta: 0.1, gamma: 0.1 })).is_err());
        let f = fit(&y, &Some(HwWeights { alpha: 0.5, beta: 0.1, gamma: 0.1 })).unwrap();
        assert_eq!(f.predict(5), vec![34.0; 5]);
        assert_eq!(f.rmse, 0.0);
    }

    #[test]
    fn grid_is_deterministic() {
        let y: Vec<f64> = (0..72).map(|t| 34.0 + ((t * 7919) % 13) as f64 * 0.1).collect();
        assert_eq!(fit(&y, &None).unwrap(), fit(&y, &None).unwrap());
    }
}
