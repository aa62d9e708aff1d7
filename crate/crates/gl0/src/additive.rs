//! Sparse additive models: per-covariate B-spline expansions with roughness
//! penalties, assembled into the quadratic group-selection core.
//!
//! Each covariate j gets a clamped B-spline basis `B_j` (one group of
//! coefficients) and a curvature Gram matrix `Omega_j` with entries
//! `int N_i''(u) N_k''(u) du`. Two assemblies are supported:
//!
//! - `Squared`: roughness enters as `lambda sum_j gamma_j' Omega_j gamma_j`,
//!   folded into the least-squares design by augmenting it with scaled
//!   Cholesky rows, leaving a plain group-L0 problem.
//! - `Norm`: roughness enters as `lambda sum_j ||R_j gamma_j||` with
//!   `R_j' R_j = Omega_j`; the change of variables `theta_j = R_j gamma_j`
//!   turns it into the weighted l2,1 penalty of the core problem.
//!
//! Basis columns are mean-centered and an unpenalized intercept is carried
//! separately, the usual identifiability convention.

use ndarray::{Array1, Array2};

use crate::linalg;
use crate::model::{GroupPartition, Penalty, QuadObjective};
use crate::{Error, Result};

/// Interior-knot placement rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnotPlacement {
    /// Equispaced over the observed range.
    Equispaced,
    /// At equispaced quantiles of the observed values.
    Quantile,
}

/// Clamped B-spline basis for one covariate, evaluated at the data.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    pub degree: usize,
    /// Interior knot locations (strictly increasing).
    pub interior_knots: Vec<f64>,
    /// Full clamped knot vector.
    knots: Vec<f64>,
    /// n x d evaluation of the basis at the training points.
    pub matrix: Array2<f64>,
    pub x_min: f64,
    pub x_max: f64,
}

impl SplineBasis {
    /// Number of basis functions: interior knots + degree + 1.
    pub fn dim(&self) -> usize {
        self.interior_knots.len() + self.degree + 1
    }

    /// Evaluates all basis functions at a point (clamped to the training
    /// range).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let xc = x.clamp(self.x_min, self.x_max);
        all_basis_deriv(&self.knots, self.degree, xc, 0)
    }

    fn eval_second_deriv(&self, x: f64) -> Vec<f64> {
        all_basis_deriv(&self.knots, self.degree, x, 2)
    }
}

/// Builds the basis for one covariate column with equispaced interior knots.
pub fn build_basis(x_col: &Array1<f64>, degree: usize, num_knots: usize) -> Result<SplineBasis> {
    build_basis_with(x_col, degree, num_knots, KnotPlacement::Equispaced)
}

/// As [`build_basis`] with an explicit knot-placement rule.
pub fn build_basis_with(
    x_col: &Array1<f64>,
    degree: usize,
    num_knots: usize,
    placement: KnotPlacement,
) -> Result<SplineBasis> {
    if degree < 1 {
        return Err(Error::InvalidConfig("spline degree must be at least 1".into()));
    }
    if x_col.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("covariate contains non-finite values".into()));
    }
    let x_min = x_col.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_max = x_col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = x_max - x_min;
    if !(range > 1e-12 * x_max.abs().max(1.0)) {
        return Err(Error::InvalidInput(
            "covariate is (numerically) constant; knots would collapse".into(),
        ));
    }
    let interior: Vec<f64> = match placement {
        KnotPlacement::Equispaced => (1..=num_knots)
            .map(|i| x_min + range * i as f64 / (num_knots + 1) as f64)
            .collect(),
        KnotPlacement::Quantile => {
            let mut sorted: Vec<f64> = x_col.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (1..=num_knots)
                .map(|i| {
                    let frac = i as f64 / (num_knots + 1) as f64;
                    let pos = frac * (sorted.len() - 1) as f64;
                    let lo = pos.floor() as usize;
                    let w = pos - lo as f64;
                    if lo + 1 < sorted.len() {
                        sorted[lo] * (1.0 - w) + sorted[lo + 1] * w
                    } else {
                        sorted[lo]
                    }
                })
                .collect()
        }
    };
    if interior.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "interior knots collapsed (too many knots for the data spread)".into(),
        ));
    }
    let mut knots = Vec::with_capacity(2 * (degree + 1) + num_knots);
    knots.extend(std::iter::repeat(x_min).take(degree + 1));
    knots.extend(interior.iter().copied());
    knots.extend(std::iter::repeat(x_max).take(degree + 1));

    let d = num_knots + degree + 1;
    let mut matrix = Array2::<f64>::zeros((x_col.len(), d));
    for (i, &x) in x_col.iter().enumerate() {
        let vals = all_basis_deriv(&knots, degree, x, 0);
        for (j, v) in vals.into_iter().enumerate() {
            matrix[[i, j]] = v;
        }
    }
    Ok(SplineBasis {
        degree,
        interior_knots: interior,
        knots,
        matrix,
        x_min,
        x_max,
    })
}

/// Values of the `order`-th derivative of every degree-`degree` B-spline on
/// the clamped knot vector at `x`. Zero-length knot spans are skipped per
/// the usual 0/0 = 0 convention.
fn all_basis_deriv(knots: &[f64], degree: usize, x: f64, order: usize) -> Vec<f64> {
    let count = knots.len() - degree - 1;
    if order == 0 {
        // Degree-0 indicators, then the triangular raise to `degree`.
        let m = knots.len();
        let last = knots[m - 1];
        let mut b: Vec<f64> = (0..m - 1)
            .map(|j| {
                let in_span = if knots[j + 1] >= last {
                    // Close the final span on the right.
                    x >= knots[j] && x <= knots[j + 1] && knots[j] < knots[j + 1]
                } else {
                    x >= knots[j] && x < knots[j + 1]
                };
                if in_span {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        for k in 1..=degree {
            let mut next = vec![0.0; m - k - 1];
            for (j, slot) in next.iter_mut().enumerate() {
                let d1 = knots[j + k] - knots[j];
                let d2 = knots[j + k + 1] - knots[j + 1];
                let left = if d1 > 0.0 {
                    (x - knots[j]) / d1 * b[j]
                } else {
                    0.0
                };
                let right = if d2 > 0.0 {
                    (knots[j + k + 1] - x) / d2 * b[j + 1]
                } else {
                    0.0
                };
                *slot = left + right;
            }
            b = next;
        }
        return b;
    }
    if order > degree {
        return vec![0.0; count];
    }
    // B^(r)_{j,k} = k [ B^(r-1)_{j,k-1} / (t_{j+k} - t_j)
    //                 - B^(r-1)_{j+1,k-1} / (t_{j+k+1} - t_{j+1}) ].
    let lower = all_basis_deriv(knots, degree - 1, x, order - 1);
    let k = degree;
    (0..count)
        .map(|j| {
            let d1 = knots[j + k] - knots[j];
            let d2 = knots[j + k + 1] - knots[j + 1];
            let left = if d1 > 0.0 { lower[j] / d1 } else { 0.0 };
            let right = if d2 > 0.0 { lower[j + 1] / d2 } else { 0.0 };
            k as f64 * (left - right)
        })
        .collect()
}

/// Curvature Gram matrix of one basis, with the stabilizing jitter used to
/// make it positive-definite (the roughness seminorm annihilates linear
/// functions).
#[derive(Debug, Clone)]
pub struct RoughnessPenalty {
    /// `omega[i][k] = int N_i''(u) N_k''(u) du` over the training range.
    pub omega: Array2<f64>,
    /// Trace-scaled ridge added wherever positive-definiteness is needed.
    pub jitter: f64,
}

impl RoughnessPenalty {
    /// `omega + jitter * I`.
    pub fn stabilized(&self) -> Array2<f64> {
        let mut m = self.omega.clone();
        for i in 0..m.nrows() {
            m[[i, i]] += self.jitter;
        }
        m
    }
}

/// Exact curvature Gram matrix via per-interval Gauss-Legendre quadrature
/// (the integrand is piecewise polynomial of degree 2(degree-2), so the rule
/// is exact).
pub fn build_penalty(basis: &SplineBasis) -> Result<RoughnessPenalty> {
    if basis.degree < 2 {
        return Err(Error::InvalidConfig(
            "roughness penalty needs degree >= 2 (second derivatives)".into(),
        ));
    }
    let d = basis.dim();
    let mut omega = Array2::<f64>::zeros((d, d));
    let n_gl = basis.degree.max(2);
    let (nodes, weights) = linalg::gauss_legendre(n_gl);
    let knots = &basis.knots;
    for span in 0..knots.len() - 1 {
        let (a, b) = (knots[span], knots[span + 1]);
        if !(b > a) {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (t, &w) in nodes.iter().zip(&weights) {
            let x = mid + half * t;
            let dd = basis.eval_second_deriv(x);
            let scale = w * half;
            for i in 0..d {
                if dd[i] == 0.0 {
                    continue;
                }
                for k in i..d {
                    let v = scale * dd[i] * dd[k];
                    omega[[i, k]] += v;
                    if k != i {
                        omega[[k, i]] += v;
                    }
                }
            }
        }
    }
    let trace: f64 = (0..d).map(|i| omega[[i, i]]).sum();
    let jitter = 1e-8 * trace / d as f64;
    Ok(RoughnessPenalty { omega, jitter })
}

/// Which additive formulation the problem encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdditiveForm {
    /// Squared roughness `lambda sum_j gamma_j' Omega_j gamma_j`.
    Squared,
    /// Roughness seminorm `lambda sum_j ||R_j gamma_j||_2`.
    Norm,
}

/// Assembled additive-model problem over the stacked spline coefficients,
/// ready for the heuristic and exact solvers.
#[derive(Debug, Clone)]
pub struct AdditiveProblem {
    pub objective: QuadObjective,
    pub partition: GroupPartition,
    pub penalty: Penalty,
    pub form: AdditiveForm,
    pub bases: Vec<SplineBasis>,
    /// Column means subtracted from each basis block.
    col_means: Vec<Array1<f64>>,
    /// Unpenalized intercept (the response mean).
    pub intercept: f64,
    /// Upper-triangular factors `R_j` with `R_j' R_j = Omega_j + jitter`
    /// (the coefficient transform of the norm form).
    transforms: Option<Vec<Array2<f64>>>,
}

/// Assembles the additive problem from prebuilt bases and penalties.
pub fn assemble_additive(
    bases: Vec<SplineBasis>,
    penalties: &[RoughnessPenalty],
    y: &Array1<f64>,
    lambda0: f64,
    lambda_smooth: f64,
    form: AdditiveForm,
) -> Result<AdditiveProblem> {
    if bases.is_empty() {
        return Err(Error::InvalidInput("no covariates".into()));
    }
    if bases.len() != penalties.len() {
        return Err(Error::DimensionMismatch {
            name: "penalties",
            expected: bases.len(),
            actual: penalties.len(),
        });
    }
    let n = y.len();
    for (j, b) in bases.iter().enumerate() {
        if b.matrix.nrows() != n {
            return Err(Error::DimensionMismatch {
                name: "basis rows",
                expected: n,
                actual: b.matrix.nrows(),
            });
        }
        if b.dim() != penalties[j].omega.nrows() {
            return Err(Error::DimensionMismatch {
                name: "omega",
                expected: b.dim(),
                actual: penalties[j].omega.nrows(),
            });
        }
    }

    let q = bases.len();
    let dims: Vec<usize> = bases.iter().map(|b| b.dim()).collect();
    let p: usize = dims.iter().sum();
    let intercept = y.sum() / n as f64;
    let y_c = y - intercept;

    // Center each basis block.
    let mut col_means = Vec::with_capacity(q);
    let mut centered: Vec<Array2<f64>> = Vec::with_capacity(q);
    for b in &bases {
        let means = b.matrix.mean_axis(ndarray::Axis(0)).unwrap();
        let mut m = b.matrix.clone();
        for mut row in m.rows_mut() {
            row -= &means;
        }
        col_means.push(means);
        centered.push(m);
    }

    // Cholesky factors of the stabilized curvature matrices.
    let mut factors: Vec<Array2<f64>> = Vec::with_capacity(q);
    for (j, pen_j) in penalties.iter().enumerate() {
        let l = linalg::cholesky(&pen_j.stabilized()).ok_or_else(|| {
            Error::InvalidInput(format!(
                "curvature matrix of covariate {j} is not positive-definite even after jitter"
            ))
        })?;
        factors.push(l.t().to_owned());
    }

    let groups: Vec<Vec<usize>> = {
        let mut out = Vec::with_capacity(q);
        let mut off = 0;
        for &d in &dims {
            out.push((off..off + d).collect());
            off += d;
        }
        out
    };
    let partition = GroupPartition::new(groups, p)?;

    match form {
        AdditiveForm::Squared => {
            // Augment the design with sqrt(lambda) R_j rows so the roughness
            // quadratic folds into the least-squares objective.
            let mut x = Array2::<f64>::zeros((n + p, p));
            let mut yy = Array1::<f64>::zeros(n + p);
            yy.slice_mut(ndarray::s![..n]).assign(&y_c);
            let root = lambda_smooth.sqrt();
            let mut off = 0;
            for j in 0..q {
                let d = dims[j];
                x.slice_mut(ndarray::s![..n, off..off + d])
                    .assign(&centered[j]);
                for r in 0..d {
                    for c in 0..d {
                        x[[n + off + r, off + c]] = root * factors[j][[r, c]];
                    }
                }
                off += d;
            }
            let objective = QuadObjective::implicit(x, yy)?;
            let penalty = Penalty::new(lambda0, 0.0, 0.0, q);
            Ok(AdditiveProblem {
                objective,
                partition,
                penalty,
                form,
                bases,
                col_means,
                intercept,
                transforms: None,
            })
        }
        AdditiveForm::Norm => {
            // theta_j = R_j gamma_j; design columns become B_j R_j^{-1} and
            // the roughness seminorm becomes lambda ||theta_j||.
            let mut x = Array2::<f64>::zeros((n, p));
            let mut off = 0;
            for j in 0..q {
                let d = dims[j];
                // Solve R_j' ... no: columns of B R^{-1} come from back
                // substitution with the upper-triangular R_j per column.
                let transformed = right_solve_upper(&centered[j], &factors[j]);
                x.slice_mut(ndarray::s![.., off..off + d]).assign(&transformed);
                off += d;
            }
            let objective = QuadObjective::implicit(x, y_c)?;
            let penalty = Penalty::new(lambda0, lambda_smooth, 0.0, q);
            Ok(AdditiveProblem {
                objective,
                partition,
                penalty,
                form,
                bases,
                col_means,
                intercept,
                transforms: Some(factors),
            })
        }
    }
}

/// Convenience assembly straight from an n x q covariate matrix.
pub fn assemble_from_data(
    x: &Array2<f64>,
    y: &Array1<f64>,
    degree: usize,
    num_knots: usize,
    lambda0: f64,
    lambda_smooth: f64,
    form: AdditiveForm,
) -> Result<AdditiveProblem> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            name: "y",
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let mut bases = Vec::with_capacity(x.ncols());
    let mut penalties = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let col = x.column(j).to_owned();
        let basis = build_basis(&col, degree, num_knots)
            .map_err(|e| Error::InvalidInput(format!("covariate {j}: {e}")))?;
        penalties.push(build_penalty(&basis)
            .map_err(|e| Error::InvalidInput(format!("covariate {j}: {e}")))?);
        bases.push(basis);
    }
    assemble_additive(bases, &penalties, y, lambda0, lambda_smooth, form)
}

/// `B * R^{-1}` for upper-triangular `R`, column block at a time.
fn right_solve_upper(b: &Array2<f64>, r: &Array2<f64>) -> Array2<f64> {
    // Solve Z R = B for Z row-wise: R' z' = b' per row; forward substitution
    // on the transpose of the upper factor.
    let (n, d) = (b.nrows(), b.ncols());
    let mut z = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for c in 0..d {
            let mut s = b[[i, c]];
            for k in 0..c {
                s -= z[[i, k]] * r[[k, c]];
            }
            z[[i, c]] = s / r[[c, c]];
        }
    }
    z
}

impl AdditiveProblem {
    /// Spline coefficients `gamma` from solver coordinates `theta`
    /// (identity in the squared form).
    pub fn gamma_from_theta(&self, theta: &Array1<f64>) -> Array1<f64> {
        match &self.transforms {
            None => theta.clone(),
            Some(factors) => {
                let mut gamma = Array1::<f64>::zeros(theta.len());
                for (j, r) in factors.iter().enumerate() {
                    let idxs = self.partition.group(j);
                    let d = idxs.len();
                    // Back substitution: R gamma_j = theta_j.
                    for row in (0..d).rev() {
                        let mut s = theta[idxs[row]];
                        for k in row + 1..d {
                            s -= r[[row, k]] * gamma[idxs[k]];
                        }
                        gamma[idxs[row]] = s / r[[row, row]];
                    }
                }
                gamma
            }
        }
    }

    /// Solver coordinates from spline coefficients.
    pub fn theta_from_gamma(&self, gamma: &Array1<f64>) -> Array1<f64> {
        match &self.transforms {
            None => gamma.clone(),
            Some(factors) => {
                let mut theta = Array1::<f64>::zeros(gamma.len());
                for (j, r) in factors.iter().enumerate() {
                    let idxs = self.partition.group(j);
                    let d = idxs.len();
                    for row in 0..d {
                        let mut s = 0.0;
                        for k in row..d {
                            s += r[[row, k]] * gamma[idxs[k]];
                        }
                        theta[idxs[row]] = s;
                    }
                }
                theta
            }
        }
    }

    /// Fitted values at new covariate rows: intercept plus the centered
    /// component contributions. Points outside a training range are clamped
    /// (and counted in the log).
    pub fn predict(&self, gamma: &Array1<f64>, x_new: &Array2<f64>) -> Result<Array1<f64>> {
        if x_new.ncols() != self.bases.len() {
            return Err(Error::DimensionMismatch {
                name: "x_new columns",
                expected: self.bases.len(),
                actual: x_new.ncols(),
            });
        }
        if gamma.len() != self.partition.p() {
            return Err(Error::DimensionMismatch {
                name: "gamma",
                expected: self.partition.p(),
                actual: gamma.len(),
            });
        }
        let mut out = Array1::from_elem(x_new.nrows(), self.intercept);
        let mut extrapolated = 0usize;
        for i in 0..x_new.nrows() {
            for (j, basis) in self.bases.iter().enumerate() {
                let xv = x_new[[i, j]];
                if xv < basis.x_min || xv > basis.x_max {
                    extrapolated += 1;
                }
                let vals = basis.eval(xv);
                let idxs = self.partition.group(j);
                for (t, &col) in idxs.iter().enumerate() {
                    out[i] += (vals[t] - self.col_means[j][t]) * gamma[col];
                }
            }
        }
        if extrapolated > 0 {
            log::warn!("{extrapolated} covariate values outside the training range were clamped");
        }
        Ok(out)
    }

    /// Centered fitted component of covariate `j` at the given values, for
    /// plotting.
    pub fn component_values(&self, gamma: &Array1<f64>, j: usize, x_col: &Array1<f64>) -> Array1<f64> {
        let basis = &self.bases[j];
        let idxs = self.partition.group(j);
        Array1::from_shape_fn(x_col.len(), |i| {
            let vals = basis.eval(x_col[i]);
            idxs.iter()
                .enumerate()
                .map(|(t, &col)| (vals[t] - self.col_means[j][t]) * gamma[col])
                .sum()
        })
    }
}

/// Evaluates fitted values for an assembled problem at new points
/// (free-function form of [`AdditiveProblem::predict`]).
pub fn predict_additive(
    problem: &AdditiveProblem,
    gamma: &Array1<f64>,
    x_new: &Array2<f64>,
) -> Result<Array1<f64>> {
    problem.predict(gamma, x_new)
}
