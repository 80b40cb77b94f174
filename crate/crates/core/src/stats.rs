//! Summary of fitted cooling/heating strengths.
//!
//! Points with both strengths below [`WEAK_STRENGTH`] fall in the weak
//! region; points with `s_h > s_c` lie above the diagonal of the
//! `s_c`–`s_h` plane, where heating is the easier of the two.

use serde::{Deserialize, Serialize};

use crate::fitting::{Degeneracy, FitResult};

pub const WEAK_STRENGTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthSummary {
    /// Fits used; degenerate ones are excluded.
    pub n: usize,
    pub excluded_degenerate: usize,
    pub fraction_weak: f64,
    pub fraction_heating_stronger: f64,
    pub median_s_c: f64,
    pub median_s_h: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

/// `None` when no non-degenerate fit is available.
pub fn strength_summary(fits: &[FitResult]) -> Option<StrengthSummary> {
    let used: Vec<&FitResult> = fits.iter().filter(|f| f.degenerate == Degeneracy::None).collect();
    if used.is_empty() {
        return None;
    }
    let n = used.len() as f64;
    let frac = |pred: &dyn Fn(&FitResult) -> bool| used.iter().filter(|f| pred(f)).count() as f64 / n;
    Some(StrengthSummary {
        n: used.len(),
        excluded_degenerate: fits.len() - used.len(),
        fraction_weak: frac(&|f| f.params.s_c < WEAK_STRENGTH && f.params.s_h < WEAK_STRENGTH),
        fraction_heating_stronger: frac(&|f| f.params.s_h > f.params.s_c),
        median_s_c: median(used.iter().map(|f| f.params.s_c).collect()),
        median_s_h: median(used.iter().map(|f| f.params.s_h).collect()),
    })
}
