//! Convex node relaxations for the exact solver.
//!
//! Each branch-and-bound node relaxes the remaining binary selectors to
//! [0, 1]; eliminating the selector and perspective variables turns the node
//! subproblem into a regularized least-squares problem whose per-group
//! penalty is [`crate::prox::psi`] for free groups and
//! [`crate::prox::psi_tilde`] for groups pinned to one. This module solves
//! that problem with an active-set strategy, certifies a lower bound through
//! a closed-form Fenchel dual, and recovers the relaxed selector values used
//! for branching.

use ndarray::{Array1, Array2};

use crate::model::{group_lipschitz_all, GradEngine, GroupPartition, Penalty, QuadObjective};
use crate::prox::{psi, psi_prox, psi_tilde, psi_tilde_prox, PsiParams};
use crate::{Error, Result};

/// Branching decisions in effect at a node: selectors pinned to zero or one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeConstraints {
    fixed_zero: Vec<usize>,
    fixed_one: Vec<usize>,
}

impl NodeConstraints {
    pub fn root() -> Self {
        Self::default()
    }

    pub fn new(mut fixed_zero: Vec<usize>, mut fixed_one: Vec<usize>) -> Result<Self> {
        fixed_zero.sort_unstable();
        fixed_zero.dedup();
        fixed_one.sort_unstable();
        fixed_one.dedup();
        if fixed_zero.iter().any(|g| fixed_one.binary_search(g).is_ok()) {
            return Err(Error::InvalidInput(
                "a group cannot be pinned to both zero and one".into(),
            ));
        }
        Ok(Self {
            fixed_zero,
            fixed_one,
        })
    }

    pub fn fixed_zero(&self) -> &[usize] {
        &self.fixed_zero
    }

    pub fn fixed_one(&self) -> &[usize] {
        &self.fixed_one
    }

    pub fn is_zero(&self, g: usize) -> bool {
        self.fixed_zero.binary_search(&g).is_ok()
    }

    pub fn is_one(&self, g: usize) -> bool {
        self.fixed_one.binary_search(&g).is_ok()
    }

    /// Child with `g` additionally pinned to zero.
    pub fn branch_zero(&self, g: usize) -> Self {
        let mut c = self.clone();
        if let Err(pos) = c.fixed_zero.binary_search(&g) {
            c.fixed_zero.insert(pos, g);
        }
        c
    }

    /// Child with `g` additionally pinned to one.
    pub fn branch_one(&self, g: usize) -> Self {
        let mut c = self.clone();
        if let Err(pos) = c.fixed_one.binary_search(&g) {
            c.fixed_one.insert(pos, g);
        }
        c
    }
}

/// Solver knobs for the node relaxation.
#[derive(Debug, Clone)]
pub struct RelaxOptions {
    /// A zero group joins the active set when its optimality violation
    /// exceeds this.
    pub violation_tol: f64,
    /// Fixed-point residual target of the restricted block-descent solve.
    pub restricted_tol: f64,
    /// Pass cap for one restricted solve.
    pub restricted_max_iters: usize,
    /// At most this many violating groups join the active set per round,
    /// largest violations first.
    pub violation_batch: usize,
    /// Selector values within this distance of 0 or 1 count as integral.
    pub epsilon_int: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            violation_tol: 1e-7,
            restricted_tol: 1e-9,
            restricted_max_iters: 50_000,
            violation_batch: 10,
            epsilon_int: 1e-6,
        }
    }
}

/// Solved node relaxation.
#[derive(Debug, Clone)]
pub struct RelaxSolution {
    pub theta: Array1<f64>,
    /// Relaxed selector value per group, in [0, 1].
    pub z: Vec<f64>,
    /// Node objective at `theta`, including the fixed-one constant.
    pub primal: f64,
    /// Certified lower bound on the node optimum.
    pub dual_bound: f64,
    /// Free groups with selector value strictly between 0 and 1.
    pub fractional: Vec<usize>,
    /// Final active set.
    pub active_set: Vec<usize>,
    /// Active-set augmentation rounds used.
    pub rounds: usize,
    /// False when an iteration cap was hit; the dual bound is still valid.
    pub converged: bool,
}

fn psi_params_for(pen: &Penalty, g: usize) -> Result<PsiParams> {
    PsiParams::new(
        pen.lambda0,
        pen.lambda1 * pen.weights[g],
        pen.lambda2,
        pen.big_m,
    )
}

/// Reusable relaxation solver: holds the problem data and per-group step
/// constants so branch-and-bound nodes share the setup work.
pub struct NodeSolver<'a> {
    obj: &'a QuadObjective,
    part: &'a GroupPartition,
    pen: Penalty,
    /// Ridge folded into the smooth part instead of the penalty; nonzero
    /// only for the plain Big-M relaxation.
    smooth_ridge: f64,
    lhats: Vec<f64>,
    pub opts: RelaxOptions,
}

impl<'a> NodeSolver<'a> {
    pub fn new(
        obj: &'a QuadObjective,
        part: &'a GroupPartition,
        pen: &Penalty,
        opts: RelaxOptions,
    ) -> Result<Self> {
        pen.validate(part)?;
        if pen.lambda2 == 0.0 && !pen.big_m.is_finite() {
            return Err(Error::InvalidConfig(
                "node relaxations need a finite Big-M bound when lambda2 = 0".into(),
            ));
        }
        Self::build(obj, part, pen.clone(), 0.0, opts)
    }

    /// Solver for the relaxation of the plain Big-M formulation: the ridge
    /// stays in the smooth objective and every free-group penalty is the
    /// linear slope `lambda0 / M + lambda1 w_g`.
    pub fn new_big_m(
        obj: &'a QuadObjective,
        part: &'a GroupPartition,
        pen: &Penalty,
        opts: RelaxOptions,
    ) -> Result<Self> {
        pen.validate(part)?;
        if !pen.big_m.is_finite() {
            return Err(Error::InvalidConfig(
                "the Big-M relaxation needs a finite bound".into(),
            ));
        }
        let bigm_pen = Penalty {
            lambda2: 0.0,
            ..pen.clone()
        };
        Self::build(obj, part, bigm_pen, pen.lambda2, opts)
    }

    fn build(
        obj: &'a QuadObjective,
        part: &'a GroupPartition,
        pen: Penalty,
        smooth_ridge: f64,
        opts: RelaxOptions,
    ) -> Result<Self> {
        if part.p() != obj.p() {
            return Err(Error::DimensionMismatch {
                name: "partition.p",
                expected: obj.p(),
                actual: part.p(),
            });
        }
        let lhats = group_lipschitz_all(obj, part, smooth_ridge)
            .into_iter()
            .map(|l| 1.05 * l + 1e-12)
            .collect();
        Ok(Self {
            obj,
            part,
            pen,
            smooth_ridge,
            lhats,
            opts,
        })
    }

    pub fn penalty(&self) -> &Penalty {
        &self.pen
    }

    fn group_penalty_value(&self, node: &NodeConstraints, g: usize, norm: f64) -> Result<f64> {
        if node.is_zero(g) {
            return Ok(0.0);
        }
        if node.is_one(g) {
            return Ok(psi_tilde(
                norm,
                self.pen.lambda1 * self.pen.weights[g],
                self.pen.lambda2,
            ));
        }
        psi(norm, &psi_params_for(&self.pen, g)?)
    }

    /// Penalty slope at the origin for a non-pinned-zero group; the entry
    /// threshold of the optimality check.
    fn origin_slope(&self, node: &NodeConstraints, g: usize) -> Result<f64> {
        if node.is_one(g) {
            Ok(self.pen.lambda1 * self.pen.weights[g])
        } else {
            Ok(psi_params_for(&self.pen, g)?.origin_slope())
        }
    }

    /// Node objective at a feasible `theta` (includes the fixed-one
    /// `lambda0` constant).
    pub fn node_objective(&self, node: &NodeConstraints, theta: &Array1<f64>) -> Result<f64> {
        let mut val = self.obj.smooth_value(theta, self.smooth_ridge);
        for g in 0..self.part.q() {
            val += self.group_penalty_value(node, g, self.part.group_norm(theta, g))?;
        }
        Ok(val + self.pen.lambda0 * node.fixed_one().len() as f64)
    }

    /// Block proximal descent on the groups in `active`, other groups frozen.
    /// Returns the achieved fixed-point residual.
    pub fn solve_restricted(
        &self,
        node: &NodeConstraints,
        active: &[usize],
        theta: &mut Array1<f64>,
    ) -> Result<f64> {
        for &g in active {
            if node.is_zero(g) {
                return Err(Error::ContractViolation(format!(
                    "group {g} is pinned to zero but appears in the active set"
                )));
            }
        }
        let mut engine = GradEngine::new(self.obj, theta);
        let mut residual = f64::INFINITY;
        for pass in 0..self.opts.restricted_max_iters {
            let mut max_resid = 0.0_f64;
            for &g in active {
                let idxs = self.part.group(g);
                let lhat = self.lhats[g];
                let step = 1.0 / lhat;
                let old = Array1::from_iter(idxs.iter().map(|&j| theta[j]));
                let grad = engine.group_gradient(idxs, theta, self.smooth_ridge);
                let v = &old - &(grad * step);
                let new = if node.is_one(g) {
                    psi_tilde_prox(
                        &v,
                        step,
                        self.pen.lambda1 * self.pen.weights[g],
                        self.pen.lambda2,
                        self.pen.big_m,
                    )
                } else {
                    psi_prox(&v, step, &psi_params_for(&self.pen, g)?)
                };
                let moved: f64 = old
                    .iter()
                    .zip(new.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                max_resid = max_resid.max(lhat * moved);
                if moved > 0.0 {
                    engine.update_group(idxs, &old, &new);
                    for (t, &j) in idxs.iter().enumerate() {
                        theta[j] = new[t];
                    }
                }
            }
            residual = max_resid;
            if max_resid <= self.opts.restricted_tol {
                break;
            }
            if pass % 64 == 63 {
                engine.refresh(theta);
            }
        }
        Ok(residual)
    }

    /// Optimality violation of an inactive (zero) group: the amount by which
    /// the gradient norm exceeds the penalty's origin slope. Positive means
    /// the group must enter the active set.
    pub fn check_violation(
        &self,
        theta: &Array1<f64>,
        g: usize,
        node: &NodeConstraints,
    ) -> Result<f64> {
        if node.is_zero(g) {
            return Ok(f64::NEG_INFINITY);
        }
        let mut engine = GradEngine::new(self.obj, theta);
        let grad = engine.group_gradient(self.part.group(g), theta, self.smooth_ridge);
        Ok(grad.dot(&grad).sqrt() - self.origin_slope(node, g)?)
    }

    /// Full active-set solve of the node relaxation.
    pub fn solve(
        &self,
        node: &NodeConstraints,
        init_active: &[usize],
        warm_theta: Option<&Array1<f64>>,
    ) -> Result<RelaxSolution> {
        let q = self.part.q();
        let mut active: Vec<usize> = init_active
            .iter()
            .copied()
            .chain(node.fixed_one().iter().copied())
            .filter(|&g| g < q && !node.is_zero(g))
            .collect();
        active.sort_unstable();
        active.dedup();

        let mut theta = match warm_theta {
            Some(t) => {
                let mut t = t.clone();
                // Zero out anything outside the active set so the frozen
                // coordinates are consistent with the restricted solve.
                for g in 0..q {
                    if active.binary_search(&g).is_err() {
                        for &j in self.part.group(g) {
                            t[j] = 0.0;
                        }
                    }
                }
                t
            }
            None => Array1::zeros(self.part.p()),
        };

        let mut rounds = 0usize;
        let mut converged = false;
        // Every round adds at least one group, so q + 1 rounds suffice.
        while rounds <= q {
            rounds += 1;
            self.solve_restricted(node, &active, &mut theta)?;
            let mut engine = GradEngine::new(self.obj, &theta);
            let mut violations: Vec<(f64, usize)> = Vec::new();
            for g in 0..q {
                if node.is_zero(g) || active.binary_search(&g).is_ok() {
                    continue;
                }
                let grad = engine.group_gradient(self.part.group(g), &theta, self.smooth_ridge);
                let viol = grad.dot(&grad).sqrt() - self.origin_slope(node, g)?;
                if viol > self.opts.violation_tol {
                    violations.push((viol, g));
                }
            }
            if violations.is_empty() {
                converged = true;
                break;
            }
            violations.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            for (_, g) in violations.into_iter().take(self.opts.violation_batch) {
                let pos = active.binary_search(&g).unwrap_err();
                active.insert(pos, g);
            }
        }

        let primal = self.node_objective(node, &theta)?;
        let dual = self.dual_bound(&theta, node)?;
        let z = self.recover_z(&theta, node);
        let fractional: Vec<usize> = (0..q)
            .filter(|&g| {
                !node.is_zero(g)
                    && !node.is_one(g)
                    && z[g] > self.opts.epsilon_int
                    && z[g] < 1.0 - self.opts.epsilon_int
            })
            .collect();
        Ok(RelaxSolution {
            theta,
            z,
            primal,
            dual_bound: dual.min(primal),
            fractional,
            active_set: active,
            rounds,
            converged,
        })
    }

    /// Relaxed selector value per group recovered from the coefficients.
    pub fn recover_z(&self, theta: &Array1<f64>, node: &NodeConstraints) -> Vec<f64> {
        (0..self.part.q())
            .map(|g| {
                if node.is_zero(g) {
                    0.0
                } else if node.is_one(g) {
                    1.0
                } else {
                    let norm = self.part.group_norm(theta, g);
                    let params = psi_params_for(&self.pen, g).expect("validated at build");
                    let z = if params.is_huber_regime() {
                        ((self.pen.lambda2 / self.pen.lambda0).sqrt() * norm).min(1.0)
                    } else {
                        norm / self.pen.big_m
                    };
                    z.clamp(0.0, 1.0)
                }
            })
            .collect()
    }

    /// Certified lower bound on the node relaxation optimum via a Fenchel
    /// dual candidate built from the residual at `theta`.
    ///
    /// The candidate `nu = 2 rho (y - X theta)` is scaled so that every
    /// purely linear group penalty (linear-regime free groups; fixed-one
    /// groups without ridge) satisfies its dual constraint
    /// `||X_g' nu|| <= c_g`, making those conjugate terms vanish; the
    /// remaining conjugates are evaluated in closed form.
    pub fn dual_bound(&self, theta: &Array1<f64>, node: &NodeConstraints) -> Result<f64> {
        let view = self.least_squares_view()?;
        let residual = &*view.y - &view.x.dot(theta);
        let two_r = 2.0 * &residual;
        let q = self.part.q();

        // ||X_g' (2r)|| per group, skipping pinned-to-zero groups.
        let mut u = vec![0.0_f64; q];
        for g in 0..q {
            if node.is_zero(g) {
                continue;
            }
            u[g] = self
                .part
                .group(g)
                .iter()
                .map(|&j| {
                    let v = view.x.column(j).dot(&two_r);
                    v * v
                })
                .sum::<f64>()
                .sqrt();
        }

        let mut rho = 1.0_f64;
        for g in 0..q {
            if node.is_zero(g) {
                continue;
            }
            let linear_slope = if node.is_one(g) {
                if self.pen.lambda2 == 0.0 {
                    Some(self.pen.lambda1 * self.pen.weights[g])
                } else {
                    None
                }
            } else {
                let params = psi_params_for(&self.pen, g)?;
                if params.is_huber_regime() {
                    None
                } else {
                    Some(params.origin_slope())
                }
            };
            if let Some(c) = linear_slope {
                if u[g] > c && c > 0.0 {
                    rho = rho.min(c / u[g]);
                }
            }
        }

        let mut value = rho * two_r.dot(&*view.y) - rho * rho * residual.dot(&residual);
        for g in 0..q {
            if node.is_zero(g) {
                continue;
            }
            value -= self.conjugate(node, g, rho * u[g])?;
        }
        Ok(value + self.pen.lambda0 * node.fixed_one().len() as f64 + view.offset)
    }

    /// Convex conjugate of the group penalty (plus its norm cap), evaluated
    /// at a dual norm `u`.
    fn conjugate(&self, node: &NodeConstraints, g: usize, u: f64) -> Result<f64> {
        let m = self.pen.big_m;
        let l1w = self.pen.lambda1 * self.pen.weights[g];
        let l2 = self.pen.lambda2;
        if node.is_one(g) {
            // psi_tilde = l1w ||t|| + l2 ||t||^2 on the M-ball.
            if u <= l1w {
                return Ok(0.0);
            }
            if l2 > 0.0 && u <= l1w + 2.0 * l2 * m {
                return Ok((u - l1w) * (u - l1w) / (4.0 * l2));
            }
            return Ok(if m.is_finite() {
                m * (u - l1w - l2 * m)
            } else {
                f64::INFINITY
            });
        }
        let params = psi_params_for(&self.pen, g)?;
        if params.is_huber_regime() {
            let c_hub = params.origin_slope();
            if u <= c_hub {
                Ok(0.0)
            } else if u <= l1w + 2.0 * l2 * m {
                Ok((u - l1w) * (u - l1w) / (4.0 * l2) - self.pen.lambda0)
            } else {
                Ok(m * (u - l1w - l2 * m) - self.pen.lambda0)
            }
        } else {
            let c = params.origin_slope();
            Ok(m * (u - c).max(0.0))
        }
    }

    fn least_squares_view(&self) -> Result<LeastSquaresView<'_>> {
        match self.obj {
            QuadObjective::Implicit { x, y } => {
                if self.smooth_ridge > 0.0 {
                    // Fold the ridge into the design: extra sqrt(ridge) * I rows.
                    let (n, p) = (x.nrows(), x.ncols());
                    let mut xa = Array2::<f64>::zeros((n + p, p));
                    xa.slice_mut(ndarray::s![..n, ..]).assign(x);
                    let root = self.smooth_ridge.sqrt();
                    for j in 0..p {
                        xa[[n + j, j]] = root;
                    }
                    let mut ya = Array1::<f64>::zeros(n + p);
                    ya.slice_mut(ndarray::s![..n]).assign(y);
                    Ok(LeastSquaresView {
                        x: std::borrow::Cow::Owned(xa),
                        y: std::borrow::Cow::Owned(ya),
                        offset: 0.0,
                    })
                } else {
                    Ok(LeastSquaresView {
                        x: std::borrow::Cow::Borrowed(x),
                        y: std::borrow::Cow::Borrowed(y),
                        offset: 0.0,
                    })
                }
            }
            QuadObjective::Explicit { w, b, constant } => {
                // Factor W + ridge I = V diag(d) V' and rebuild an equivalent
                // least-squares pair; fails when b has a component outside
                // the range of W (no least-squares representation exists).
                let p = w.nrows();
                let mut wr = w.clone();
                for j in 0..p {
                    wr[[j, j]] += self.smooth_ridge;
                }
                let (d, v) = crate::linalg::sym_eigen(&wr);
                let dmax = d.iter().cloned().fold(0.0_f64, f64::max);
                let cut = 1e-12 * dmax.max(1e-300);
                let half_b = -0.5 * b;
                let vt_halfb = v.t().dot(&half_b);
                let mut x = Array2::<f64>::zeros((p, p));
                let mut y = Array1::<f64>::zeros(p);
                for i in 0..p {
                    if d[i] > cut {
                        let root = d[i].sqrt();
                        for j in 0..p {
                            x[[i, j]] = root * v[[j, i]];
                        }
                        y[i] = vt_halfb[i] / root;
                    } else if vt_halfb[i].abs() > 1e-8 * half_b.dot(&half_b).sqrt().max(1e-300) {
                        return Err(Error::InvalidInput(
                            "explicit objective has a linear term outside the range of W; \
                             no least-squares form exists for the dual bound"
                                .into(),
                        ));
                    }
                }
                let offset = constant - y.dot(&y);
                Ok(LeastSquaresView {
                    x: std::borrow::Cow::Owned(x),
                    y: std::borrow::Cow::Owned(y),
                    offset,
                })
            }
        }
    }
}

struct LeastSquaresView<'a> {
    x: std::borrow::Cow<'a, Array2<f64>>,
    y: std::borrow::Cow<'a, Array1<f64>>,
    offset: f64,
}

/// One-call wrapper over [`NodeSolver::solve`] for the perspective
/// relaxation.
pub fn solve_relaxation(
    obj: &QuadObjective,
    part: &GroupPartition,
    pen: &Penalty,
    node: &NodeConstraints,
    init_active: &[usize],
    opts: RelaxOptions,
) -> Result<RelaxSolution> {
    NodeSolver::new(obj, part, pen, opts)?.solve(node, init_active, None)
}

/// One-call wrapper for the plain Big-M relaxation (ridge kept in the smooth
/// part, linear group penalties).
pub fn solve_bigm_relaxation(
    obj: &QuadObjective,
    part: &GroupPartition,
    pen: &Penalty,
    node: &NodeConstraints,
    init_active: &[usize],
    opts: RelaxOptions,
) -> Result<RelaxSolution> {
    NodeSolver::new_big_m(obj, part, pen, opts)?.solve(node, init_active, None)
}
