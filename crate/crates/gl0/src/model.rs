//! Problem data model: group structure, penalty parameters, quadratic
//! objectives, and the gradient/Lipschitz services every solver builds on.

use ndarray::{Array1, Array2};

use crate::linalg;
use crate::{Error, Result};

/// Disjoint partition of the `p` feature indices into `q` groups.
///
/// Group indices are zero-based everywhere, matching the on-disk group-file
/// format (one line per group, space-delimited zero-based column indices).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    p: usize,
}

impl GroupPartition {
    /// Builds a partition, checking that the groups are non-empty, pairwise
    /// disjoint, and cover exactly `{0, ..., p-1}`.
    pub fn new(groups: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidInput("partition needs at least one group".into()));
        }
        let mut seen = vec![false; p];
        let mut count = 0usize;
        for (g, idxs) in groups.iter().enumerate() {
            if idxs.is_empty() {
                return Err(Error::InvalidInput(format!("group {g} is empty")));
            }
            for &j in idxs {
                if j >= p {
                    return Err(Error::InvalidInput(format!(
                        "group {g} references feature {j}, but p = {p}"
                    )));
                }
                if seen[j] {
                    return Err(Error::InvalidInput(format!(
                        "feature {j} appears in more than one group"
                    )));
                }
                seen[j] = true;
                count += 1;
            }
        }
        if count != p {
            return Err(Error::InvalidInput(format!(
                "groups cover {count} of {p} features"
            )));
        }
        Ok(Self { groups, p })
    }

    /// Partition of `q` contiguous groups of equal size `t` (p = q * t).
    pub fn contiguous(q: usize, t: usize) -> Result<Self> {
        let groups = (0..q).map(|g| (g * t..(g + 1) * t).collect()).collect();
        Self::new(groups, q * t)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.groups.len()
    }

    /// Feature indices of group `g`.
    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// l2 norm of the coefficients of group `g`.
    pub fn group_norm(&self, theta: &Array1<f64>, g: usize) -> f64 {
        self.groups[g]
            .iter()
            .map(|&j| theta[j] * theta[j])
            .sum::<f64>()
            .sqrt()
    }

    /// Sorted indices of groups with any nonzero coefficient.
    pub fn support(&self, theta: &Array1<f64>) -> Vec<usize> {
        (0..self.q())
            .filter(|&g| self.groups[g].iter().any(|&j| theta[j] != 0.0))
            .collect()
    }

    /// Number of nonzero groups.
    pub fn group_l0(&self, theta: &Array1<f64>) -> usize {
        self.support(theta).len()
    }
}

/// Regularization parameters of the group-L0 objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    /// Weight on the number of nonzero groups.
    pub lambda0: f64,
    /// Weight on the (weighted) sum of group l2 norms.
    pub lambda1: f64,
    /// Ridge weight. Always applied on top of the smooth objective; callers
    /// who fold a ridge into an explicit `W` must pass 0 here.
    pub lambda2: f64,
    /// Per-group multipliers on the l2 term. `sqrt(T_g)` realizes the
    /// group-size-adjusted penalty used for large-group problems.
    pub weights: Vec<f64>,
    /// Upper bound `M` on every group norm in the mixed-integer formulation;
    /// `f64::INFINITY` disables it for the heuristic solvers.
    pub big_m: f64,
}

impl Penalty {
    /// Penalty with unit group weights and no Big-M bound.
    pub fn new(lambda0: f64, lambda1: f64, lambda2: f64, q: usize) -> Self {
        Self {
            lambda0,
            lambda1,
            lambda2,
            weights: vec![1.0; q],
            big_m: f64::INFINITY,
        }
    }

    pub fn with_big_m(mut self, big_m: f64) -> Self {
        self.big_m = big_m;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }

    /// Group weights set to `sqrt(T_g)`.
    pub fn with_sqrt_size_weights(mut self, part: &GroupPartition) -> Self {
        self.weights = part.groups().iter().map(|g| (g.len() as f64).sqrt()).collect();
        self
    }

    pub fn validate(&self, part: &GroupPartition) -> Result<()> {
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(self.big_m > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "big_m must be positive (possibly infinite), got {}",
                self.big_m
            )));
        }
        if self.weights.len() != part.q() {
            return Err(Error::DimensionMismatch {
                name: "penalty.weights",
                expected: part.q(),
                actual: self.weights.len(),
            });
        }
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("group weights must be positive".into()));
        }
        Ok(())
    }

    /// The non-smooth penalty `lambda0 G(theta) + lambda1 sum_g w_g ||theta_g||`.
    pub fn omega(&self, theta: &Array1<f64>, part: &GroupPartition) -> f64 {
        let mut total = 0.0;
        for g in 0..part.q() {
            let norm = part.group_norm(theta, g);
            if norm > 0.0 {
                total += self.lambda0 + self.lambda1 * self.weights[g] * norm;
            }
        }
        total
    }
}

/// Smooth quadratic loss, either as raw regression data or as an explicit
/// quadratic form.
#[derive(Debug, Clone)]
pub enum QuadObjective {
    /// `l(theta) = ||y - X theta||^2`. `W = X'X` is never materialized.
    Implicit { x: Array2<f64>, y: Array1<f64> },
    /// `l(theta) = theta' W theta + <b, theta> + constant` with `W` PSD.
    Explicit {
        w: Array2<f64>,
        b: Array1<f64>,
        constant: f64,
    },
}

impl QuadObjective {
    pub fn implicit(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                name: "y",
                expected: x.nrows(),
                actual: y.len(),
            });
        }
        Ok(Self::Implicit { x, y })
    }

    pub fn explicit(w: Array2<f64>, b: Array1<f64>, constant: f64) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::InvalidInput("W must be square".into()));
        }
        if b.len() != w.nrows() {
            return Err(Error::DimensionMismatch {
                name: "b",
                expected: w.nrows(),
                actual: b.len(),
            });
        }
        Ok(Self::Explicit { w, b, constant })
    }

    /// Number of features.
    pub fn p(&self) -> usize {
        match self {
            Self::Implicit { x, .. } => x.ncols(),
            Self::Explicit { w, .. } => w.nrows(),
        }
    }

    /// Smooth loss value including an extra ridge `ridge * ||theta||^2`.
    pub fn smooth_value(&self, theta: &Array1<f64>, ridge: f64) -> f64 {
        let base = match self {
            Self::Implicit { x, y } => {
                let r = y - &x.dot(theta);
                r.dot(&r)
            }
            Self::Explicit { w, b, constant } => theta.dot(&w.dot(theta)) + b.dot(theta) + constant,
        };
        if ridge > 0.0 {
            base + ridge * theta.dot(theta)
        } else {
            base
        }
    }

    /// Full gradient `2 W theta + b + 2 ridge theta`.
    pub fn gradient(&self, theta: &Array1<f64>, ridge: f64) -> Array1<f64> {
        let mut grad = match self {
            Self::Implicit { x, y } => {
                let r = &x.dot(theta) - y;
                2.0 * x.t().dot(&r)
            }
            Self::Explicit { w, b, .. } => 2.0 * w.dot(theta) + b,
        };
        if ridge > 0.0 {
            grad.scaled_add(2.0 * ridge, theta);
        }
        grad
    }

    /// The linear coefficient `b` of the smooth part (gradient at the origin).
    pub fn linear_term(&self) -> Array1<f64> {
        match self {
            Self::Implicit { x, y } => -2.0 * x.t().dot(y),
            Self::Explicit { b, .. } => b.clone(),
        }
    }

    /// Gram submatrix `W[G_g, G_g]`, materialized only at group size.
    pub fn group_gram(&self, idxs: &[usize]) -> Array2<f64> {
        let t = idxs.len();
        let mut gram = Array2::<f64>::zeros((t, t));
        match self {
            Self::Implicit { x, .. } => {
                for (a, &ja) in idxs.iter().enumerate() {
                    let ca = x.column(ja);
                    for (bb, &jb) in idxs.iter().enumerate().skip(a) {
                        let v = ca.dot(&x.column(jb));
                        gram[[a, bb]] = v;
                        gram[[bb, a]] = v;
                    }
                }
            }
            Self::Explicit { w, .. } => {
                for (a, &ja) in idxs.iter().enumerate() {
                    for (bb, &jb) in idxs.iter().enumerate() {
                        gram[[a, bb]] = w[[ja, jb]];
                    }
                }
            }
        }
        gram
    }

    fn check_theta(&self, theta: &Array1<f64>) -> Result<()> {
        if theta.len() != self.p() {
            return Err(Error::DimensionMismatch {
                name: "theta",
                expected: self.p(),
                actual: theta.len(),
            });
        }
        Ok(())
    }
}

/// Evaluates the full objective
/// `l(theta) + lambda2 ||theta||^2 + lambda0 G(theta) + lambda1 sum_g w_g ||theta_g||`.
pub fn evaluate_objective(
    theta: &Array1<f64>,
    obj: &QuadObjective,
    pen: &Penalty,
    part: &GroupPartition,
) -> Result<f64> {
    obj.check_theta(theta)?;
    if part.p() != obj.p() {
        return Err(Error::DimensionMismatch {
            name: "partition.p",
            expected: obj.p(),
            actual: part.p(),
        });
    }
    pen.validate(part)?;
    Ok(obj.smooth_value(theta, pen.lambda2) + pen.omega(theta, part))
}

/// Sub-vector of the smooth gradient on group `g`;
/// `ridge` folds an extra `2 ridge theta_g` in.
pub fn group_gradient(
    theta: &Array1<f64>,
    g: usize,
    obj: &QuadObjective,
    part: &GroupPartition,
    ridge: f64,
) -> Result<Array1<f64>> {
    obj.check_theta(theta)?;
    if g >= part.q() {
        return Err(Error::InvalidInput(format!("group index {g} out of range")));
    }
    let mut engine = GradEngine::new(obj, theta);
    Ok(engine.group_gradient(part.group(g), theta, ridge))
}

/// Group-wise Lipschitz constant `L_g = 2 sigma_max(W[G_g, G_g]) + 2 ridge`.
pub fn group_lipschitz(g: usize, obj: &QuadObjective, part: &GroupPartition, ridge: f64) -> f64 {
    let gram = obj.group_gram(part.group(g));
    2.0 * linalg::sym_max_eigenvalue(&gram) + 2.0 * ridge
}

/// All group Lipschitz constants.
pub fn group_lipschitz_all(obj: &QuadObjective, part: &GroupPartition, ridge: f64) -> Vec<f64> {
    (0..part.q())
        .map(|g| group_lipschitz(g, obj, part, ridge))
        .collect()
}

/// Global Lipschitz constant `L = 2 sigma_max(W) + 2 ridge`, computed through
/// matrix-vector products only.
pub fn global_lipschitz(obj: &QuadObjective, ridge: f64) -> f64 {
    let p = obj.p();
    let sigma = match obj {
        QuadObjective::Implicit { x, .. } => linalg::power_iteration(p, |v| x.t().dot(&x.dot(v))),
        QuadObjective::Explicit { w, .. } => linalg::sym_max_eigenvalue(w),
    };
    2.0 * sigma + 2.0 * ridge
}

/// Incremental gradient engine used by the iterative solvers.
///
/// For the implicit form it maintains the residual `y - X theta`; for the
/// explicit form it maintains `W theta`. Either way a group update costs
/// O(n * T_g) instead of a full matrix-vector product.
#[derive(Debug, Clone)]
pub(crate) struct GradEngine<'a> {
    obj: &'a QuadObjective,
    /// `y - X theta` (implicit) or `W theta` (explicit).
    state: Array1<f64>,
}

impl<'a> GradEngine<'a> {
    pub fn new(obj: &'a QuadObjective, theta: &Array1<f64>) -> Self {
        let state = match obj {
            QuadObjective::Implicit { x, y } => y - &x.dot(theta),
            QuadObjective::Explicit { w, .. } => w.dot(theta),
        };
        Self { obj, state }
    }

    /// Recomputes the cached state from scratch (used once per cycle to stop
    /// incremental-update drift).
    pub fn refresh(&mut self, theta: &Array1<f64>) {
        self.state = match self.obj {
            QuadObjective::Implicit { x, y } => y - &x.dot(theta),
            QuadObjective::Explicit { w, .. } => w.dot(theta),
        };
    }

    /// Gradient of the smooth loss restricted to the given feature indices.
    pub fn group_gradient(&mut self, idxs: &[usize], theta: &Array1<f64>, ridge: f64) -> Array1<f64> {
        let mut g = Array1::<f64>::zeros(idxs.len());
        match self.obj {
            QuadObjective::Implicit { x, .. } => {
                for (t, &j) in idxs.iter().enumerate() {
                    g[t] = -2.0 * x.column(j).dot(&self.state);
                }
            }
            QuadObjective::Explicit { b, .. } => {
                for (t, &j) in idxs.iter().enumerate() {
                    g[t] = 2.0 * self.state[j] + b[j];
                }
            }
        }
        if ridge != 0.0 {
            for (t, &j) in idxs.iter().enumerate() {
                g[t] += 2.0 * ridge * theta[j];
            }
        }
        g
    }

    /// Applies `theta[idxs] = new_vals`, updating the cached state.
    /// `old_vals` must be the previous coefficients at `idxs`.
    pub fn update_group(&mut self, idxs: &[usize], old_vals: &Array1<f64>, new_vals: &Array1<f64>) {
        match self.obj {
            QuadObjective::Implicit { x, .. } => {
                for (t, &j) in idxs.iter().enumerate() {
                    let d = new_vals[t] - old_vals[t];
                    if d != 0.0 {
                        self.state.scaled_add(-d, &x.column(j));
                    }
                }
            }
            QuadObjective::Explicit { w, .. } => {
                for (t, &j) in idxs.iter().enumerate() {
                    let d = new_vals[t] - old_vals[t];
                    if d != 0.0 {
                        self.state.scaled_add(d, &w.column(j));
                    }
                }
            }
        }
    }

    /// Smooth loss value from the cached state.
    pub fn smooth_value(&self, theta: &Array1<f64>, ridge: f64) -> f64 {
        let base = match self.obj {
            QuadObjective::Implicit { .. } => self.state.dot(&self.state),
            QuadObjective::Explicit { b, constant, .. } => {
                theta.dot(&self.state) + b.dot(theta) + constant
            }
        };
        if ridge > 0.0 {
            base + ridge * theta.dot(theta)
        } else {
            base
        }
    }

}

/// How a solver run terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SolveStatus {
    Converged,
    /// Iteration cap hit; the iterate is still a valid feasible point.
    MaxIterations,
}

/// Run diagnostics attached to every solution.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SolveMeta {
    pub solver: &'static str,
    pub iterations: usize,
    pub wall_time_secs: f64,
    pub status: SolveStatus,
}

/// A fitted coefficient vector with its group support and objective value.
#[derive(Debug, Clone)]
pub struct Solution {
    pub theta: Array1<f64>,
    /// Sorted indices of nonzero groups.
    pub support: Vec<usize>,
    /// Objective value, consistent with [`evaluate_objective`].
    pub objective: f64,
    /// Per-group l2 norms.
    pub group_norms: Vec<f64>,
    pub meta: SolveMeta,
}

impl Solution {
    pub fn from_theta(
        theta: Array1<f64>,
        obj: &QuadObjective,
        pen: &Penalty,
        part: &GroupPartition,
        meta: SolveMeta,
    ) -> Result<Self> {
        let objective = evaluate_objective(&theta, obj, pen, part)?;
        let support = part.support(&theta);
        let group_norms = (0..part.q()).map(|g| part.group_norm(&theta, g)).collect();
        Ok(Self {
            theta,
            support,
            objective,
            group_norms,
            meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        p: usize,
    ) -> (Array2<f64>, Array1<f64>) {
        let x = Array2::from_shape_fn((n, p), |_| rng.gen::<f64>() * 2.0 - 1.0);
        let y = Array1::from_shape_fn(n, |_| rng.gen::<f64>() * 2.0 - 1.0);
        (x, y)
    }

    #[test]
    fn zero_theta_leaves_squared_norm_of_y() {
        let x = array![[0.3, -1.2], [0.7, 0.4]];
        let y = array![1.0, 2.0];
        let obj = QuadObjective::implicit(x, y).unwrap();
        let part = GroupPartition::new(vec![vec![0, 1]], 2).unwrap();
        let pen = Penalty::new(0.0, 0.0, 0.0, 1);
        let theta = Array1::zeros(2);
        let v = evaluate_objective(&theta, &obj, &pen, &part).unwrap();
        assert_abs_diff_eq!(v, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn penalty_terms_add_up() {
        // One group, theta = (3, 4): G = 1, group norm 5.
        let x = Array2::zeros((2, 2));
        let y = Array1::zeros(2);
        let obj = QuadObjective::implicit(x, y).unwrap();
        let part = GroupPartition::new(vec![vec![0, 1]], 2).unwrap();
        let pen = Penalty::new(1.0, 2.0, 0.0, 1);
        let theta = array![3.0, 4.0];
        let v = evaluate_objective(&theta, &obj, &pen, &part).unwrap();
        assert_abs_diff_eq!(v, 11.0, epsilon = 1e-12);
    }

    #[test]
    fn implicit_explicit_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (x, y) = random_instance(&mut rng, 5, 8);
        let w = x.t().dot(&x);
        let b = -2.0 * x.t().dot(&y);
        let c = y.dot(&y);
        let implicit = QuadObjective::implicit(x, y).unwrap();
        let explicit = QuadObjective::explicit(w, b, c).unwrap();
        let part = GroupPartition::contiguous(4, 2).unwrap();
        let pen = Penalty::new(0.7, 0.3, 0.0, 4);
        for _ in 0..20 {
            let theta = Array1::from_shape_fn(8, |_| rng.gen::<f64>() * 2.0 - 1.0);
            let vi = evaluate_objective(&theta, &implicit, &pen, &part).unwrap();
            let ve = evaluate_objective(&theta, &explicit, &pen, &part).unwrap();
            assert!((vi - ve).abs() <= 1e-10 * vi.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_at_origin_is_linear_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = random_instance(&mut rng, 6, 4);
        let obj = QuadObjective::implicit(x.clone(), y.clone()).unwrap();
        let part = GroupPartition::contiguous(2, 2).unwrap();
        let theta = Array1::zeros(4);
        let g0 = group_gradient(&theta, 0, &obj, &part, 0.0).unwrap();
        let b = -2.0 * x.t().dot(&y);
        for t in 0..2 {
            assert_abs_diff_eq!(g0[t], b[t], epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_vanishes_at_least_squares_optimum() {
        let x = array![[1.0]];
        let y = array![1.0];
        let obj = QuadObjective::implicit(x, y).unwrap();
        let part = GroupPartition::new(vec![vec![0]], 1).unwrap();
        let g = group_gradient(&array![1.0], 0, &obj, &part, 0.0).unwrap();
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, y) = random_instance(&mut rng, 7, 6);
        let obj = QuadObjective::implicit(x, y).unwrap();
        let part = GroupPartition::contiguous(3, 2).unwrap();
        let ridge = 0.4;
        let theta = Array1::from_shape_fn(6, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let h = 1e-6;
        for g in 0..3 {
            let grad = group_gradient(&theta, g, &obj, &part, ridge).unwrap();
            for (t, &j) in part.group(g).iter().enumerate() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[j] += h;
                tm[j] -= h;
                let fd =
                    (obj.smooth_value(&tp, ridge) - obj.smooth_value(&tm, ridge)) / (2.0 * h);
                assert!((grad[t] - fd).abs() < 1e-5, "fd mismatch: {} vs {}", grad[t], fd);
            }
        }
    }

    #[test]
    fn lipschitz_of_unit_column_is_two() {
        let x = array![[1.0], [0.0]];
        let y = array![0.0, 0.0];
        let obj = QuadObjective::implicit(x, y).unwrap();
        let part = GroupPartition::new(vec![vec![0]], 1).unwrap();
        assert_abs_diff_eq!(group_lipschitz(0, &obj, &part, 0.0), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn lipschitz_of_identity_gram_is_two() {
        let w = Array2::eye(3);
        let obj = QuadObjective::explicit(w, Array1::zeros(3), 0.0).unwrap();
        let part = GroupPartition::new(vec![vec![0, 1, 2]], 3).unwrap();
        assert_abs_diff_eq!(group_lipschitz(0, &obj, &part, 0.0), 2.0, epsilon = 1e-10);
    }

    /// Full symmetric eigendecomposition by power iteration with Hotelling
    /// deflation; written independently of the production Jacobi routine.
    fn eig_oracle_max(a: &Array2<f64>) -> f64 {
        let n = a.nrows();
        let mut m = a.clone();
        let mut best = 0.0_f64;
        for _ in 0..n {
            let mut v = Array1::from_shape_fn(n, |i| ((i + 1) as f64).sin() + 0.5);
            let norm = v.dot(&v).sqrt();
            v /= norm;
            let mut lam = 0.0;
            for _ in 0..50_000 {
                let w = m.dot(&v);
                let nw = w.dot(&w).sqrt();
                if nw < 1e-300 {
                    lam = 0.0;
                    break;
                }
                let newlam = v.dot(&w);
                v = w / nw;
                if (newlam - lam).abs() < 1e-14 * newlam.abs().max(1e-30) {
                    lam = newlam;
                    break;
                }
                lam = newlam;
            }
            best = best.max(lam);
            // Deflate the found eigenpair.
            let outer = Array2::from_shape_fn((n, n), |(i, j)| v[i] * v[j]);
            m = &m - &(outer * lam);
        }
        best
    }

    #[test]
    fn group_lipschitz_matches_eigendecomposition_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let (x, y) = random_instance(&mut rng, 9, 4);
            let obj = QuadObjective::implicit(x.clone(), y).unwrap();
            let part = GroupPartition::new(vec![vec![0, 1, 2, 3]], 4).unwrap();
            let ours = group_lipschitz(0, &obj, &part, 0.0);
            let gram = x.t().dot(&x);
            let oracle = 2.0 * eig_oracle_max(&gram);
            assert!(
                (ours - oracle).abs() <= 1e-6 * oracle.max(1e-12),
                "{ours} vs {oracle}"
            );
        }
    }

    #[test]
    fn group_gradient_is_group_lipschitz() {
        // || grad_g l(theta) - grad_g l(theta') || <= L_g ||theta_g - theta'_g||
        // for pairs differing only on group g.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = random_instance(&mut rng, 10, 6);
        let obj = QuadObjective::implicit(x, y).unwrap();
        let part = GroupPartition::contiguous(2, 3).unwrap();
        for g in 0..2 {
            let lg = group_lipschitz(g, &obj, &part, 0.0);
            for _ in 0..50 {
                let theta = Array1::from_shape_fn(6, |_| rng.gen::<f64>() * 4.0 - 2.0);
                let mut theta2 = theta.clone();
                for &j in part.group(g) {
                    theta2[j] = rng.gen::<f64>() * 4.0 - 2.0;
                }
                let g1 = group_gradient(&theta, g, &obj, &part, 0.0).unwrap();
                let g2 = group_gradient(&theta2, g, &obj, &part, 0.0).unwrap();
                let dg = (&g1 - &g2).dot(&(&g1 - &g2)).sqrt();
                let dt: f64 = part
                    .group(g)
                    .iter()
                    .map(|&j| (theta[j] - theta2[j]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(dg <= lg * dt + 1e-9, "{dg} > {lg} * {dt}");
            }
        }
    }

    #[test]
    fn objective_invariant_under_group_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (x, y) = random_instance(&mut rng, 6, 6);
        let obj = QuadObjective::implicit(x, y).unwrap();
        let theta = Array1::from_shape_fn(6, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let part1 = GroupPartition::new(vec![vec![0, 1], vec![2, 3], vec![4, 5]], 6).unwrap();
        let part2 = GroupPartition::new(vec![vec![4, 5], vec![0, 1], vec![2, 3]], 6).unwrap();
        let pen = Penalty::new(0.5, 0.25, 0.1, 3);
        let v1 = evaluate_objective(&theta, &obj, &pen, &part1).unwrap();
        let v2 = evaluate_objective(&theta, &obj, &pen, &part2).unwrap();
        assert_abs_diff_eq!(v1, v2, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported_by_name() {
        let x = Array2::zeros((2, 3));
        let y = Array1::zeros(2);
        let obj = QuadObjective::implicit(x, y).unwrap();
        let part = GroupPartition::contiguous(1, 3).unwrap();
        let pen = Penalty::new(1.0, 0.0, 0.0, 1);
        let err = evaluate_objective(&Array1::zeros(4), &obj, &pen, &part).unwrap_err();
        assert!(err.to_string().contains("theta"));
    }

    #[test]
    fn grad_engine_incremental_updates_match_fresh() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (x, y) = random_instance(&mut rng, 8, 6);
        let obj = QuadObjective::implicit(x, y).unwrap();
        let part = GroupPartition::contiguous(3, 2).unwrap();
        let mut theta = Array1::from_shape_fn(6, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let mut engine = GradEngine::new(&obj, &theta);
        for step in 0..30 {
            let g = step % 3;
            let idxs = part.group(g);
            let old = Array1::from_iter(idxs.iter().map(|&j| theta[j]));
            let new = Array1::from_shape_fn(idxs.len(), |_| rng.gen::<f64>() * 2.0 - 1.0);
            for (t, &j) in idxs.iter().enumerate() {
                theta[j] = new[t];
            }
            engine.update_group(idxs, &old, &new);
            let fresh = GradEngine::new(&obj, &theta);
            let a = engine.group_gradient(part.group((g + 1) % 3), &theta, 0.3);
            let b = fresh.clone().group_gradient(part.group((g + 1) % 3), &theta, 0.3);
            for t in 0..a.len() {
                assert_abs_diff_eq!(a[t], b[t], epsilon = 1e-9);
            }
            assert_abs_diff_eq!(
                engine.smooth_value(&theta, 0.0),
                fresh.smooth_value(&theta, 0.0),
                epsilon = 1e-9
            );
        }
    }
}
