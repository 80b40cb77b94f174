//! Box-constrained Levenberg-Marquardt over the three model parameters.
//!
//! The iterate lives in internal coordinates where strengths are replaced
//! by the steady-state gain `g = 1/(2 + s)`; the model response is close to
//! linear in `g`, so Gauss-Newton steps stay accurate across the whole
//! strength range. Derivatives are taken by central differences in the
//! natural units and mapped through the chain rule.

use nalgebra::{Matrix3, Vector3};

use crate::model::{HiveParams, ModelConfig, Propagator, RangeTrack, SignConvention};

use super::SearchSpace;

pub const FD_STEP: f64 = 1e-4;
pub const MAX_ITERATIONS: usize = 200;
pub const REL_TOLERANCE: f64 = 1e-6;

/// Least-squares problem for one tick range.
pub(crate) struct Problem<'a> {
    pub track: &'a RangeTrack,
    pub config: &'a ModelConfig,
    pub space: &'a SearchSpace,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Solution {
    pub params: HiveParams,
    pub sse: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
enum Coord {
    /// `u = 1/(2 + s)`
    Gain,
    Identity,
}

impl Coord {
    fn to_internal(self, x: f64) -> f64 {
        match self {
            Coord::Gain => 1.0 / (2.0 + x),
            Coord::Identity => x,
        }
    }

    fn to_natural(self, u: f64) -> f64 {
        match self {
            Coord::Gain => 1.0 / u - 2.0,
            Coord::Identity => u,
        }
    }

    /// dx/du at internal coordinate `u`.
    fn jacobian(self, u: f64) -> f64 {
        match self {
            Coord::Gain => -1.0 / (u * u),
            Coord::Identity => 1.0,
        }
    }

    fn bounds(self, lo: f64, hi: f64) -> (f64, f64) {
        let (a, b) = (self.to_internal(lo), self.to_internal(hi));
        (a.min(b), a.max(b))
    }
}

impl Problem<'_> {
    fn coords(&self) -> [Coord; 3] {
        match self.config.sign_convention {
            // 1/(2 - s) is singular inside the box under the literal sign
            SignConvention::PaperLiteral => [Coord::Identity; 3],
            SignConvention::Stabilized => [Coord::Gain, Coord::Gain, Coord::Identity],
        }
    }

    fn natural_bounds(&self) -> [(f64, f64); 3] {
        [self.space.s_c_range, self.space.s_h_range, self.space.theta_ideal_range]
    }

    /// Residuals `observed − predicted`; `false` if the integration diverged.
    pub(crate) fn residuals(&self, x: &[f64; 3], out: &mut Vec<f64>) -> bool {
        out.clear();
        let params = HiveParams::new(x[0], x[1], x[2]);
        let prop = Propagator::new(&params, self.config, 1.0);
        let core = &self.track.core;
        self.track
            .simulate(&params, &prop, |i, pred| {
                if let (Some(p), Some(c)) = (pred, core[i]) {
                    out.push(c - p);
                }
            })
            .is_ok()
    }

    fn cost(&self, x: &[f64; 3], buf: &mut Vec<f64>) -> f64 {
        if self.residuals(x, buf) {
            buf.iter().map(|r| r * r).sum()
        } else {
            f64::INFINITY
        }
    }

    pub(crate) fn solve(&self, seed: &HiveParams) -> Solution {
        let coords = self.coords();
        let nb = self.natural_bounds();
        let ub: [(f64, f64); 3] = std::array::from_fn(|j| coords[j].bounds(nb[j].0, nb[j].1));
        let clamp_u = |u: [f64; 3]| -> [f64; 3] { std::array::from_fn(|j| u[j].clamp(ub[j].0, ub[j].1)) };
        let natural = |u: &[f64; 3]| -> [f64; 3] {
            std::array::from_fn(|j| coords[j].to_natural(u[j]).clamp(nb[j].0, nb[j].1))
        };

        let seed_x = [seed.s_c, seed.s_h, seed.theta_ideal];
        let mut u = clamp_u(std::array::from_fn(|j| coords[j].to_internal(seed_x[j])));
        let mut x = natural(&u);

        let mut r = Vec::new();
        let mut scratch = Vec::new();
        let mut cost = self.cost(&x, &mut r);
        let mut lambda = 1e-3;
        let mut need_jacobian = true;
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        let mut iterations = 0;

        if cost.is_finite() {
            while iterations < MAX_ITERATIONS && cost > 0.0 {
                iterations += 1;
                if need_jacobian {
                    let Some((a, g)) = self.normal_equations(&x, &u, &coords, &r) else {
                        break;
                    };
                    jtj = a;
                    jtr = g;
                    need_jacobian = false;
                }
                let max_diag = (0..3).map(|j| jtj[(j, j)]).fold(0.0, f64::max);
                if max_diag <= 0.0 {
                    break;
                }
                let mut lhs = jtj;
                for j in 0..3 {
                    lhs[(j, j)] += lambda * jtj[(j, j)].max(1e-9 * max_diag);
                }
                let Some(delta) = lhs.lu().solve(&(-jtr)) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial_u = clamp_u([u[0] + delta[0], u[1] + delta[1], u[2] + delta[2]]);
                if trial_u == u {
                    lambda *= 10.0;
                    if lambda > 1e12 {
                        break;
                    }
                    continue;
                }
                let trial_x = natural(&trial_u);
                let trial_cost = self.cost(&trial_x, &mut scratch);
                if trial_cost < cost {
                    let rel = (cost.sqrt() - trial_cost.sqrt()) / cost.sqrt();
                    u = trial_u;
                    x = trial_x;
                    cost = trial_cost;
                    std::mem::swap(&mut r, &mut scratch);
                    lambda = (lambda * 0.1).max(1e-12);
                    need_jacobian = true;
                    if rel < REL_TOLERANCE || cost.sqrt() < 1e-13 {
                        break;
                    }
                } else {
                    lambda *= 10.0;
                    if lambda > 1e12 {
                        break;
                    }
                }
            }
        }

        Solution {
            params: HiveParams::new(x[0], x[1], x[2]),
            sse: cost,
            iterations,
        }
    }

    /// `JᵀJ` and `Jᵀr` in internal coordinates.
    fn normal_equations(
        &self,
        x: &[f64; 3],
        u: &[f64; 3],
        coords: &[Coord; 3],
        r: &[f64],
    ) -> Option<(Matrix3<f64>, Vector3<f64>)> {
        let mut cols: [Vec<f64>; 3] = Default::default();
        let mut plus = Vec::with_capacity(r.len());
        let mut minus = Vec::with_capacity(r.len());
        for j in 0..3 {
            let mut xp = *x;
            let mut xm = *x;
            xp[j] += FD_STEP;
            xm[j] -= FD_STEP;
            if !self.residuals(&xp, &mut plus) || !self.residuals(&xm, &mut minus) {
                return None;
            }
            let chain = coords[j].jacobian(u[j]);
            // residual = observed − predicted, so the Jacobian of the residual
            // is the finite difference of the residual vectors themselves
            cols[j] = plus
                .iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * FD_STEP) * chain)
                .collect();
        }
        let mut a = Matrix3::zeros();
        let mut g = Vector3::zeros();
        for i in 0..3 {
            for k in i..3 {
                let v: f64 = cols[i].iter().zip(&cols[k]).map(|(p, q)| p * q).sum();
                a[(i, k)] = v;
                a[(k, i)] = v;
            }
            g[i] = cols[i].iter().zip(r).map(|(p, q)| p * q).sum();
        }
        Some((a, g))
    }
}
