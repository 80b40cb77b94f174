//! Autoregressive model with exogenous input, fitted by least squares.
//!
//! ```text
//! y[t] = c + Σ_{i=1..q} a_i y[t−i] + Σ_{j=0..r−1} b_j u[t−j]
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::BaselineError;

/// Largest `q` and `r` scanned by automatic order selection.
pub const ARX_MAX_ORDER: usize = 6;
/// Ridge penalty used when the design matrix is rank-deficient.
pub const RIDGE_PENALTY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArxOrder {
    /// Autoregressive lags `1..=q`.
    pub q: usize,
    /// Exogenous lags `0..r`.
    pub r: usize,
}

impl ArxOrder {
    fn max_lag(&self) -> usize {
        self.q.max(self.r.saturating_sub(1))
    }

    fn num_params(&self) -> usize {
        1 + self.q + self.r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxFit {
    pub order: ArxOrder,
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub exog: Vec<f64>,
    /// In-sample residuals over the estimation rows.
    pub residuals: Vec<f64>,
    /// `n ln(RSS/n) + 2k` over the estimation rows.
    pub aic: f64,
    pub ridge_fallback: bool,
    /// Trailing history needed to start the recursion.
    pub y_tail: Vec<f64>,
    pub ext_tail: Vec<f64>,
}

pub(crate) fn min_history(order: &Option<ArxOrder>) -> usize {
    match order {
        Some(o) => o.max_lag() + o.num_params() + 1,
        None => ARX_MAX_ORDER + ArxOrder { q: ARX_MAX_ORDER, r: ARX_MAX_ORDER }.num_params() + 1,
    }
}

/// `n ln(RSS/n) + 2k`, with RSS floored so exact fits stay finite.
pub(crate) fn order_aic(rss: f64, n: usize, k: usize) -> f64 {
    let n = n as f64;
    n * (rss.max(1e-300) / n).ln() + 2.0 * k as f64
}

struct Solved {
    beta: Vec<f64>,
    residuals: Vec<f64>,
    ridge: bool,
}

fn solve(y: &[f64], u: &[f64], order: ArxOrder, t0: usize) -> Solved {
    let rows = y.len() - t0;
    let k = order.num_params();
    let x = DMatrix::from_fn(rows, k, |i, j| {
        let t = t0 + i;
        match j {
            0 => 1.0,
            j if j <= order.q => y[t - j],
            j => u[t - (j - 1 - order.q)],
        }
    });
    let target = DVector::from_iterator(rows, y[t0..].iter().copied());

    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * rows.max(k) as f64;
    let (beta, ridge) = if svd.rank(tol) == k {
        (svd.solve(&target, tol).expect("U and V were computed"), false)
    } else {
        let mut a = x.transpose() * &x;
        for d in 0..k {
            a[(d, d)] += RIDGE_PENALTY;
        }
        let b = x.transpose() * &target;
        let beta = a
            .cholesky()
            .map(|c| c.solve(&b))
            .unwrap_or_else(|| DVector::zeros(k));
        (beta, true)
    };
    let residuals = (&target - &x * &beta).iter().copied().collect();
    Solved {
        beta: beta.iter().copied().collect(),
        residuals,
        ridge,
    }
}

fn finish(y: &[f64], u: &[f64], order: ArxOrder, s: Solved) -> ArxFit {
    let rss: f64 = s.residuals.iter().map(|r| r * r).sum();
    let tail = ARX_MAX_ORDER.max(order.max_lag());
    ArxFit {
        order,
        intercept: s.beta[0],
        ar: s.beta[1..=order.q].to_vec(),
        exog: s.beta[1 + order.q..].to_vec(),
        aic: order_aic(rss, s.residuals.len(), order.num_params()),
        residuals: s.residuals,
        ridge_fallback: s.ridge,
        y_tail: y[y.len().saturating_sub(tail)..].to_vec(),
        ext_tail: u[u.len().saturating_sub(tail)..].to_vec(),
    }
}

pub(crate) fn fit(y: &[f64], u: &[f64], order: &Option<ArxOrder>) -> Result<ArxFit, BaselineError> {
    match order {
        Some(o) => {
            if o.q > ARX_MAX_ORDER * 4 || o.r > ARX_MAX_ORDER * 4 {
                return Err(BaselineError::InvalidHyperparams(format!("ARX order {o:?} too large")));
            }
            let t0 = o.max_lag();
            Ok(finish(y, u, *o, solve(y, u, *o, t0)))
        }
        None => {
            // one common estimation sample so the AICs are comparable
            let t0 = ARX_MAX_ORDER;
            let mut best: Option<ArxFit> = None;
            for q in 1..=ARX_MAX_ORDER {
                for r in 1..=ARX_MAX_ORDER {
                    let o = ArxOrder { q, r };
                    let fit = finish(y, u, o, solve(y, u, o, t0));
                    if best.as_ref().is_none_or(|b| fit.aic < b.aic) {
                        best = Some(fit);
                    }
                }
            }
            Ok(best.expect("scan is non-empty"))
        }
    }
}

impl ArxFit {
    /// Recursive forecast, feeding predictions back as lags.
    pub(crate) fn predict(&self, horizon: usize, future_ext: &[f64]) -> Vec<f64> {
        let mut y = self.y_tail.clone();
        let mut u = self.ext_tail.clone();
        let base = y.len();
        let ubase = u.len();
        for h in 0..horizon {
            u.push(future_ext.get(h).copied().unwrap_or(0.0));
            let t = base + h;
            let tu = ubase + h;
            let mut v = self.intercept;
            for (i, a) in self.ar.iter().enumerate() {
                v += a * y[t - 1 - i];
            }
            for (j, b) in self.exog.iter().enumerate() {
                v += b * u[tu - j];
            }
            y.push(v);
        }
        y.split_off(base)
    }
}
