//! Closed-form scalar and group thresholding operators.
//!
//! `group_hard_threshold` is the map applied at every block update of the
//! descent solvers. `psi` / `psi_prox` implement the sparsity-inducing
//! penalty of the continuous node relaxations (a reverse-Huber / l2-norm
//! hybrid) and its proximal operator, both radial in the group norm.

use ndarray::Array1;

use crate::{Error, Result};

/// Parameters of the block hard-thresholding map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    /// Group-l0 weight.
    pub lambda0: f64,
    /// Effective l2-norm weight for this group (`lambda1 * w_g`).
    pub lambda1: f64,
    /// Per-group step constant `Lhat_g` (strictly above the group Lipschitz
    /// constant).
    pub lhat: f64,
}

/// Block hard-thresholding operator.
///
/// Returns `(z / ||z||) (||z|| - lambda1 / lhat)` when
/// `||z|| > sqrt(2 lambda0 / lhat) + lambda1 / lhat`, and zero otherwise.
/// An exact tie keeps the group at zero, preserving sparsity.
pub fn group_hard_threshold(z: &Array1<f64>, params: &ThresholdParams) -> Array1<f64> {
    let norm = z.dot(z).sqrt();
    let cutoff = (2.0 * params.lambda0 / params.lhat).sqrt() + params.lambda1 / params.lhat;
    if norm > cutoff {
        let scale = (norm - params.lambda1 / params.lhat) / norm;
        z * scale
    } else {
        Array1::zeros(z.len())
    }
}

/// Reverse Huber function: `|t|` for `|t| <= 1`, `(t^2 + 1) / 2` beyond.
pub fn reverse_huber(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        a
    } else {
        (t * t + 1.0) / 2.0
    }
}

/// Parameters of the relaxation penalty for one group.
///
/// The penalty takes one of two regimes depending on whether the ridge is
/// strong enough relative to the Big-M bound:
/// reverse-Huber (`sqrt(lambda0/lambda2) <= big_m`) or purely linear in the
/// group norm. `lambda2 = 0` always selects the linear regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiParams {
    pub lambda0: f64,
    /// Effective l2-norm weight for this group (`lambda1 * w_g`).
    pub lambda1_w: f64,
    pub lambda2: f64,
    pub big_m: f64,
}

impl PsiParams {
    pub fn new(lambda0: f64, lambda1_w: f64, lambda2: f64, big_m: f64) -> Result<Self> {
        if lambda2 == 0.0 && !big_m.is_finite() {
            return Err(Error::InvalidConfig(
                "lambda2 = 0 with an infinite Big-M leaves the relaxation penalty empty; \
                 provide a finite Big-M bound"
                    .into(),
            ));
        }
        if !(big_m > 0.0) {
            return Err(Error::InvalidConfig(format!("big_m must be positive, got {big_m}")));
        }
        Ok(Self {
            lambda0,
            lambda1_w,
            lambda2,
            big_m,
        })
    }

    /// True when the reverse-Huber branch applies.
    pub fn is_huber_regime(&self) -> bool {
        // lambda2 = 0 makes the threshold infinite, forcing the linear branch.
        self.lambda2 > 0.0 && (self.lambda0 / self.lambda2).sqrt() <= self.big_m
    }

    /// Slope of the penalty at the origin; the entry threshold for the
    /// active-set optimality check.
    pub fn origin_slope(&self) -> f64 {
        if self.is_huber_regime() {
            2.0 * (self.lambda0 * self.lambda2).sqrt() + self.lambda1_w
        } else {
            self.lambda0 / self.big_m + self.lambda1_w + self.lambda2 * self.big_m
        }
    }

    /// Radial penalty profile at a given group norm (no bound check).
    fn profile(&self, r: f64) -> f64 {
        if self.is_huber_regime() {
            2.0 * self.lambda0 * reverse_huber((self.lambda2 / self.lambda0).sqrt() * r)
                + self.lambda1_w * r
        } else {
            self.origin_slope() * r
        }
    }
}

/// Relaxation penalty at a group norm.
///
/// Errors when the norm exceeds the Big-M bound beyond a 1e-9 tolerance.
pub fn psi(norm: f64, params: &PsiParams) -> Result<f64> {
    if norm > params.big_m + 1e-9 {
        return Err(Error::ContractViolation(format!(
            "psi evaluated at norm {norm} beyond the bound {}",
            params.big_m
        )));
    }
    Ok(params.profile(norm))
}

/// Proximal operator of `psi` plus the `||theta|| <= big_m` ball constraint:
/// `argmin_{||theta|| <= M} (1/(2 step)) ||theta - v||^2 + psi(||theta||)`.
///
/// The solution is radial, so it reduces to a one-dimensional convex problem
/// solved in closed form per linear/quadratic piece.
pub fn psi_prox(v: &Array1<f64>, step: f64, params: &PsiParams) -> Array1<f64> {
    debug_assert!(step > 0.0);
    let t = v.dot(v).sqrt();
    if t == 0.0 {
        return Array1::zeros(v.len());
    }
    let r = psi_prox_radius(t, step, params);
    if r == 0.0 {
        Array1::zeros(v.len())
    } else {
        v * (r / t)
    }
}

/// The 1-D radius problem behind [`psi_prox`].
pub(crate) fn psi_prox_radius(t: f64, step: f64, params: &PsiParams) -> f64 {
    let m = params.big_m;
    if !params.is_huber_regime() {
        // Plain scaled-norm prox followed by the ball projection.
        return (t - step * params.origin_slope()).max(0.0).min(m);
    }
    let rho0 = (params.lambda0 / params.lambda2).sqrt();
    let c_hub = 2.0 * (params.lambda0 * params.lambda2).sqrt() + params.lambda1_w;
    let half_inv_step = 0.5 / step;
    let objective = |r: f64| half_inv_step * (r - t) * (r - t) + params.profile(r);

    let mut best_r = 0.0;
    let mut best_val = objective(0.0);
    let consider = |r: f64, best_r: &mut f64, best_val: &mut f64| {
        let val = objective(r);
        if val < *best_val {
            *best_val = val;
            *best_r = r;
        }
    };
    // Interior stationary point of the linear piece.
    let r_lin = t - step * c_hub;
    if r_lin > 0.0 && r_lin <= rho0 {
        consider(r_lin, &mut best_r, &mut best_val);
    }
    // Interior stationary point of the quadratic piece.
    let r_quad = (t - step * params.lambda1_w) / (1.0 + 2.0 * step * params.lambda2);
    if r_quad >= rho0 && r_quad <= m {
        consider(r_quad, &mut best_r, &mut best_val);
    }
    // Breakpoints.
    if rho0 <= m {
        consider(rho0, &mut best_r, &mut best_val);
    }
    consider(m, &mut best_r, &mut best_val);
    best_r
}

/// Fixed-one penalty for groups whose selector is pinned to one:
/// `lambda1_w ||theta|| + lambda2 ||theta||^2`.
pub fn psi_tilde(norm: f64, lambda1_w: f64, lambda2: f64) -> f64 {
    lambda1_w * norm + lambda2 * norm * norm
}

/// Proximal operator of [`psi_tilde`] plus the `||theta|| <= big_m` ball.
pub fn psi_tilde_prox(v: &Array1<f64>, step: f64, lambda1_w: f64, lambda2: f64, big_m: f64) -> Array1<f64> {
    let t = v.dot(v).sqrt();
    if t == 0.0 {
        return Array1::zeros(v.len());
    }
    let r = ((t - step * lambda1_w) / (1.0 + 2.0 * step * lambda2))
        .max(0.0)
        .min(big_m);
    if r == 0.0 {
        Array1::zeros(v.len())
    } else {
        v * (r / t)
    }
}
