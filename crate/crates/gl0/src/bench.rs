//! Synthetic benchmark instances, support-recovery metrics, regularization
//! paths, and tuning rules (validation MSE and the BIC-style model-size
//! selector).
//!
//! Generation is reproducible down to the bit: one ChaCha20 generator per
//! array (design, coefficients, noise) on separate streams of the same seed,
//! so regenerating one array never shifts the others.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::heuristics::{bcd_fit, local_search_fit, pgd_constrained, BcdConfig, SwapConfig};
use crate::model::{GroupPartition, Penalty, QuadObjective, Solution};
use crate::{Error, Result};

/// Which synthetic design family to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ExampleKind {
    /// Group representatives with exponentially decaying cross-group
    /// correlation `rho^|i-j|` and strong within-group correlation.
    One,
    /// Rows drawn with constant pairwise correlation `rho`.
    Two,
}

/// Specification of a synthetic instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub example: ExampleKind,
    pub n: usize,
    pub q: usize,
    pub group_size: usize,
    pub k_star: usize,
    pub rho: f64,
    pub snr: f64,
    pub seed: u64,
    /// Within-group pairwise correlation target (example 1 only).
    pub within_group_corr: f64,
}

impl SynthSpec {
    pub fn p(&self) -> usize {
        self.q * self.group_size
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.q == 0 || self.group_size == 0 {
            return Err(Error::InvalidConfig("n, q, group_size must be positive".into()));
        }
        if self.k_star == 0 || self.k_star > self.q {
            return Err(Error::InvalidConfig(format!(
                "k_star = {} must be in 1..={}",
                self.k_star, self.q
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho = {} must be in [0, 1)", self.rho)));
        }
        if !(self.snr > 0.0) {
            return Err(Error::InvalidConfig("snr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.within_group_corr) && self.within_group_corr != 0.0 {
            return Err(Error::InvalidConfig(
                "within_group_corr must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Generated instance.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub beta_star: Array1<f64>,
    pub partition: GroupPartition,
    /// Noise variance realized from the requested SNR.
    pub sigma2: f64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a synthetic instance. Identical specs produce bit-identical data.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let (n, q, t) = (spec.n, spec.q, spec.group_size);
    let p = spec.p();
    let mut x_rng = stream_rng(spec.seed, 0);
    let mut beta_rng = stream_rng(spec.seed, 1);
    let mut noise_rng = stream_rng(spec.seed, 2);

    let mut x = Array2::<f64>::zeros((n, p));
    match spec.example {
        ExampleKind::One => {
            // AR(1) group representatives across groups, per observation.
            let mut reps = Array2::<f64>::zeros((n, q));
            let decay = spec.rho;
            let fresh = (1.0 - decay * decay).sqrt();
            for i in 0..n {
                for g in 0..q {
                    let z: f64 = x_rng.sample(StandardNormal);
                    reps[[i, g]] = if g == 0 {
                        z
                    } else {
                        decay * reps[[i, g - 1]] + fresh * z
                    };
                }
            }
            let c = spec.within_group_corr;
            let (root_c, root_noise) = (c.sqrt(), (1.0 - c).sqrt());
            for g in 0..q {
                for jt in 0..t {
                    let j = g * t + jt;
                    for i in 0..n {
                        let e: f64 = x_rng.sample(StandardNormal);
                        x[[i, j]] = root_c * reps[[i, g]] + root_noise * e;
                    }
                }
            }
        }
        ExampleKind::Two => {
            // Constant-correlation rows: sqrt(1-rho) z + sqrt(rho) w 1.
            let (root_shared, root_own) = (spec.rho.sqrt(), (1.0 - spec.rho).sqrt());
            for i in 0..n {
                let shared: f64 = x_rng.sample(StandardNormal);
                for j in 0..p {
                    let z: f64 = x_rng.sample(StandardNormal);
                    x[[i, j]] = root_own * z + root_shared * shared;
                }
            }
        }
    }
    // Standardize every column to unit l2 norm.
    for j in 0..p {
        let norm = x.column(j).dot(&x.column(j)).sqrt();
        if norm > 0.0 {
            x.column_mut(j).mapv_inplace(|v| v / norm);
        }
    }

    // Nonzero groups equally spaced; coefficients standard Gaussian.
    let mut beta = Array1::<f64>::zeros(p);
    for i in 0..spec.k_star {
        let g = i * q / spec.k_star;
        for jt in 0..t {
            beta[g * t + jt] = beta_rng.sample(StandardNormal);
        }
    }

    let signal = x.dot(&beta);
    let mean = signal.sum() / n as f64;
    let var_signal = signal.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
    let sigma2 = var_signal / spec.snr;
    let sigma = sigma2.sqrt();
    let y = Array1::from_shape_fn(n, |i| {
        let e: f64 = noise_rng.sample(StandardNormal);
        signal[i] + sigma * e
    });

    Ok(SynthData {
        x,
        y,
        beta_star: beta,
        partition: GroupPartition::contiguous(q, t)?,
        sigma2,
    })
}

/// Support-recovery and prediction metrics against a known truth.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    /// Harmonic mean of precision and recall; zero when nothing true was
    /// recovered.
    pub f1: f64,
    /// `(1/n) ||X beta_hat - X beta_star||^2`.
    pub test_mse: f64,
    pub support_size: usize,
    /// `||beta_hat - beta_star||_inf`.
    pub est_sup_norm: f64,
}

pub fn compute_metrics(
    beta_hat: &Array1<f64>,
    beta_star: &Array1<f64>,
    x: &Array2<f64>,
    part: &GroupPartition,
) -> Result<Metrics> {
    if beta_hat.len() != part.p() || beta_star.len() != part.p() || x.ncols() != part.p() {
        return Err(Error::DimensionMismatch {
            name: "beta",
            expected: part.p(),
            actual: beta_hat.len(),
        });
    }
    let est = part.support(beta_hat);
    let truth = part.support(beta_star);
    let tp = est.iter().filter(|g| truth.contains(g)).count();
    let fp = est.len() - tp;
    let k_star = truth.len();
    let f1 = if tp == 0 {
        0.0
    } else {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / k_star as f64;
        2.0 * precision * recall / (precision + recall)
    };
    let diff = beta_hat - beta_star;
    let resid = x.dot(&diff);
    let test_mse = resid.dot(&resid) / x.nrows() as f64;
    let est_sup_norm = diff.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(Metrics {
        tp,
        fp,
        f1,
        test_mse,
        support_size: est.len(),
        est_sup_norm,
    })
}

/// Which heuristic fits each path point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathSolver {
    Bcd,
    LocalSearch { m: usize },
}

/// One fitted point of a regularization path.
#[derive(Debug, Clone)]
pub struct PathPoint {
    pub lambda0: f64,
    pub solution: Solution,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub points: Vec<PathPoint>,
}

/// Fits a decreasing `lambda0` path, warm-starting each point from the
/// previous solution when `cross_warm` is set.
pub fn fit_path(
    obj: &QuadObjective,
    part: &GroupPartition,
    pen_template: &Penalty,
    lambda0_grid: &[f64],
    solver: PathSolver,
    cross_warm: bool,
    cfg: &BcdConfig,
) -> Result<PathResult> {
    if lambda0_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig(
            "lambda0 grid must be strictly decreasing".into(),
        ));
    }
    // The step constants depend only on the design and the ridge; share them
    // across the whole path.
    let mut base_cfg = cfg.clone();
    if !base_cfg.uniform_step && base_cfg.lhats.is_none() {
        base_cfg.lhats = Some(std::sync::Arc::new(crate::heuristics::step_constants(
            obj,
            part,
            pen_template,
            cfg,
        )));
    }
    let mut points = Vec::with_capacity(lambda0_grid.len());
    let mut warm: Option<Array1<f64>> = None;
    for &lambda0 in lambda0_grid {
        let pen = Penalty {
            lambda0,
            ..pen_template.clone()
        };
        let mut point_cfg = base_cfg.clone();
        if cross_warm {
            point_cfg.init = warm.clone();
        }
        let solution = match solver {
            PathSolver::Bcd => bcd_fit(obj, part, &pen, &point_cfg)?,
            PathSolver::LocalSearch { m } => {
                local_search_fit(obj, part, &pen, &SwapConfig::new(m), &point_cfg)?
            }
        };
        warm = Some(solution.theta.clone());
        points.push(PathPoint { lambda0, solution });
    }
    Ok(PathResult { points })
}

/// Cardinality path: for each `k = 1..=k_max` runs the constrained proximal
/// gradient, initialized from the `lambda0`-path solution whose support size
/// is closest to `k` (the recommended post-processing of a penalized path).
pub fn fit_cardinality_path(
    obj: &QuadObjective,
    part: &GroupPartition,
    pen: &Penalty,
    k_max: usize,
    base_path: Option<&PathResult>,
    cfg: &BcdConfig,
) -> Result<Vec<(usize, Solution)>> {
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut point_cfg = cfg.clone();
        if let Some(path) = base_path {
            let init = path
                .points
                .iter()
                .min_by_key(|pt| {
                    let size = pt.solution.support.len();
                    (size.abs_diff(k), size)
                })
                .map(|pt| pt.solution.theta.clone());
            point_cfg.init = init;
        }
        out.push((k, pgd_constrained(obj, part, pen, k, &point_cfg)?));
    }
    Ok(out)
}

/// BIC-style model-size selection:
/// `argmin_k ||y - X beta_k||^2 + a k (T_check + ln(q / k))`,
/// ties toward the smaller `k`. `a` defaults to twice the residual variance
/// of the largest-`k` fit.
pub fn select_k_bic(
    path: &[(usize, Array1<f64>)],
    x: &Array2<f64>,
    y: &Array1<f64>,
    a_coeff: Option<f64>,
    t_check: usize,
    q: usize,
) -> Result<usize> {
    if path.is_empty() {
        return Err(Error::InvalidInput("empty cardinality path".into()));
    }
    let rss = |beta: &Array1<f64>| {
        let r = y - &x.dot(beta);
        r.dot(&r)
    };
    let a = match a_coeff {
        Some(a) => a,
        None => {
            let (_, beta) = path
                .iter()
                .max_by_key(|(k, _)| *k)
                .expect("non-empty path");
            2.0 * rss(beta) / x.nrows() as f64
        }
    };
    let mut best_k = path[0].0;
    let mut best_val = f64::INFINITY;
    for (k, beta) in path {
        let crit = rss(beta) + a * *k as f64 * (t_check as f64 + (q as f64 / *k as f64).ln());
        if crit < best_val - 1e-12 || (crit <= best_val + 1e-12 && *k < best_k) {
            best_val = crit;
            best_k = *k;
        }
    }
    Ok(best_k)
}

/// Fits a path on the training split and returns the point minimizing the
/// validation MSE (ties broken toward the sparser model).
pub fn tune_validation(
    x_train: &Array2<f64>,
    y_train: &Array1<f64>,
    x_val: &Array2<f64>,
    y_val: &Array1<f64>,
    part: &GroupPartition,
    pen_template: &Penalty,
    lambda0_grid: &[f64],
    solver: PathSolver,
    cfg: &BcdConfig,
) -> Result<(PathPoint, f64)> {
    let obj = QuadObjective::implicit(x_train.clone(), y_train.clone())?;
    let path = fit_path(&obj, part, pen_template, lambda0_grid, solver, true, cfg)?;
    let mut best: Option<(PathPoint, f64)> = None;
    for point in path.points {
        let r = y_val - &x_val.dot(&point.solution.theta);
        let mse = r.dot(&r) / y_val.len() as f64;
        let replace = match &best {
            None => true,
            Some((bp, bm)) => {
                mse < bm - 1e-12
                    || ((mse - bm).abs() <= 1e-12
                        && point.solution.support.len() < bp.solution.support.len())
            }
        };
        if replace {
            best = Some((point, mse));
        }
    }
    best.ok_or_else(|| Error::InvalidInput("empty lambda0 grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heuristics::{lambda0_grid, lambda0_max};
    use approx::assert_abs_diff_eq;

    fn base_spec() -> SynthSpec {
        SynthSpec {
            example: ExampleKind::Two,
            n: 2000,
            q: 5,
            group_size: 2,
            k_star: 2,
            rho: 0.0,
            snr: 10.0,
            seed: 42,
            within_group_corr: 0.9,
        }
    }

    fn column_correlation(x: &Array2<f64>, a: usize, b: usize) -> f64 {
        let n = x.nrows() as f64;
        let ca = x.column(a);
        let cb = x.column(b);
        let ma = ca.sum() / n;
        let mb = cb.sum() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for i in 0..x.nrows() {
            cov += (ca[i] - ma) * (cb[i] - mb);
            va += (ca[i] - ma) * (ca[i] - ma);
            vb += (cb[i] - mb) * (cb[i] - mb);
        }
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn rho_zero_gives_uncorrelated_columns() {
        let data = generate(&base_spec()).unwrap();
        let p = base_spec().p();
        let mut total = 0.0;
        let mut count = 0;
        for a in 0..p {
            for b in (a + 1)..p {
                total += column_correlation(&data.x, a, b);
                count += 1;
            }
        }
        assert!((total / count as f64).abs() < 0.02);
    }

    #[test]
    fn snr_is_realized_by_construction() {
        let data = generate(&base_spec()).unwrap();
        let signal = data.x.dot(&data.beta_star);
        let mean = signal.sum() / signal.len() as f64;
        let var = signal.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            / signal.len() as f64;
        let ratio = var / data.sigma2;
        assert!((9.5..=10.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn example_one_within_group_correlation() {
        let spec = SynthSpec {
            example: ExampleKind::One,
            rho: 0.5,
            ..base_spec()
        };
        let data = generate(&spec).unwrap();
        let mut total = 0.0;
        let mut count = 0;
        for g in 0..spec.q {
            let idxs = data.partition.group(g);
            for a in 0..idxs.len() {
                for b in (a + 1)..idxs.len() {
                    total += column_correlation(&data.x, idxs[a], idxs[b]);
                    count += 1;
                }
            }
        }
        let mean = total / count as f64;
        assert!((0.85..=0.95).contains(&mean), "within-group corr {mean}");
    }

    #[test]
    fn generation_is_bit_identical() {
        let a = generate(&base_spec()).unwrap();
        let b = generate(&base_spec()).unwrap();
        for (u, v) in a.x.iter().zip(b.x.iter()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
        for (u, v) in a.y.iter().zip(b.y.iter()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
        // A different seed changes the data.
        let c = generate(&SynthSpec {
            seed: 43,
            ..base_spec()
        })
        .unwrap();
        assert!(a.x.iter().zip(c.x.iter()).any(|(u, v)| u != v));
    }

    #[test]
    fn nonzero_groups_are_equally_spaced() {
        let spec = SynthSpec {
            q: 10,
            k_star: 5,
            n: 50,
            ..base_spec()
        };
        let data = generate(&spec).unwrap();
        let support = data.partition.support(&data.beta_star);
        assert_eq!(support, vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn metrics_on_exact_recovery() {
        let data = generate(&base_spec()).unwrap();
        let m = compute_metrics(&data.beta_star, &data.beta_star, &data.x, &data.partition)
            .unwrap();
        assert_eq!(m.tp, 2);
        assert_eq!(m.fp, 0);
        assert_abs_diff_eq!(m.f1, 1.0);
        assert_abs_diff_eq!(m.test_mse, 0.0);
        assert_abs_diff_eq!(m.est_sup_norm, 0.0);
    }

    #[test]
    fn metrics_on_zero_estimate() {
        let data = generate(&base_spec()).unwrap();
        let zero = Array1::zeros(base_spec().p());
        let m = compute_metrics(&zero, &data.beta_star, &data.x, &data.partition).unwrap();
        assert_eq!(m.tp, 0);
        assert_abs_diff_eq!(m.f1, 0.0);
        let signal = data.x.dot(&data.beta_star);
        assert_abs_diff_eq!(
            m.test_mse,
            signal.dot(&signal) / data.x.nrows() as f64,
            epsilon = 1e-12
        );
    }

    #[test]
    fn metrics_half_correct_support() {
        // k_star = 2 true groups; estimate hits one true and one false.
        let spec = SynthSpec {
            q: 4,
            k_star: 2,
            n: 30,
            ..base_spec()
        };
        let data = generate(&spec).unwrap();
        let truth = data.partition.support(&data.beta_star);
        let wrong = (0..4).find(|g| !truth.contains(g)).unwrap();
        let mut est = Array1::zeros(spec.p());
        for &j in data.partition.group(truth[0]) {
            est[j] = 1.0;
        }
        for &j in data.partition.group(wrong) {
            est[j] = 1.0;
        }
        let m = compute_metrics(&est, &data.beta_star, &data.x, &data.partition).unwrap();
        assert_eq!(m.tp, 1);
        assert_eq!(m.fp, 1);
        assert_abs_diff_eq!(m.f1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn metrics_invariant_under_group_relabeling() {
        let data = generate(&base_spec()).unwrap();
        let mut est = data.beta_star.clone();
        for &j in data.partition.group(0) {
            est[j] = 0.0;
        }
        let m1 = compute_metrics(&est, &data.beta_star, &data.x, &data.partition).unwrap();
        // Relabel by reversing the group order (same index sets).
        let reversed: Vec<Vec<usize>> = data
            .partition
            .groups()
            .iter()
            .rev()
            .cloned()
            .collect();
        let part2 = GroupPartition::new(reversed, base_spec().p()).unwrap();
        let m2 = compute_metrics(&est, &data.beta_star, &data.x, &part2).unwrap();
        assert_eq!(m1.tp, m2.tp);
        assert_eq!(m1.fp, m2.fp);
        assert_abs_diff_eq!(m1.f1, m2.f1);
    }

    #[test]
    fn single_point_grid_at_lambda_max_gives_zero() {
        let data = generate(&base_spec()).unwrap();
        let obj = QuadObjective::implicit(data.x.clone(), data.y.clone()).unwrap();
        let pen = Penalty::new(1.0, 0.0, 0.0, 5);
        let cfg = BcdConfig::default();
        let lmax = lambda0_max(&obj, &data.partition, &pen, &cfg);
        let path = fit_path(
            &obj,
            &data.partition,
            &pen,
            &[lmax * 1.000001],
            PathSolver::Bcd,
            true,
            &cfg,
        )
        .unwrap();
        assert_eq!(path.points.len(), 1);
        assert!(path.points[0].solution.support.is_empty());
    }

    #[test]
    fn path_objectives_respect_solver_strength() {
        // Cold-started at every point, local search can only improve on BCD.
        let spec = SynthSpec {
            n: 60,
            q: 6,
            group_size: 2,
            k_star: 2,
            ..base_spec()
        };
        let data = generate(&spec).unwrap();
        let obj = QuadObjective::implicit(data.x.clone(), data.y.clone()).unwrap();
        let pen = Penalty::new(1.0, 0.0, 0.0, 6);
        let cfg = BcdConfig::default();
        let lmax = lambda0_max(&obj, &data.partition, &pen, &cfg);
        let grid = lambda0_grid(lmax, 12);
        let bcd_path = fit_path(&obj, &data.partition, &pen, &grid, PathSolver::Bcd, false, &cfg)
            .unwrap();
        let ls_path = fit_path(
            &obj,
            &data.partition,
            &pen,
            &grid,
            PathSolver::LocalSearch { m: 1 },
            false,
            &cfg,
        )
        .unwrap();
        for (b, l) in bcd_path.points.iter().zip(ls_path.points.iter()) {
            assert!(
                l.solution.objective <= b.solution.objective + 1e-10,
                "at lambda0 {}: ls {} > bcd {}",
                b.lambda0,
                l.solution.objective,
                b.solution.objective
            );
        }
    }

    #[test]
    fn path_rejects_non_decreasing_grid() {
        let data = generate(&base_spec()).unwrap();
        let obj = QuadObjective::implicit(data.x.clone(), data.y.clone()).unwrap();
        let pen = Penalty::new(1.0, 0.0, 0.0, 5);
        assert!(fit_path(
            &obj,
            &data.partition,
            &pen,
            &[0.1, 0.1],
            PathSolver::Bcd,
            true,
            &BcdConfig::default()
        )
        .is_err());
    }

    #[test]
    fn bic_prefers_smaller_among_exact_fits_and_kmax_at_zero_penalty() {
        // Noiseless response spanned exactly at k_star.
        let spec = SynthSpec {
            n: 80,
            q: 6,
            group_size: 2,
            k_star: 2,
            snr: 1e12,
            ..base_spec()
        };
        let data = generate(&spec).unwrap();
        let obj = QuadObjective::implicit(data.x.clone(), data.y.clone()).unwrap();
        let pen = Penalty::new(0.0, 0.0, 0.0, 6);
        let cards = fit_cardinality_path(
            &obj,
            &data.partition,
            &pen,
            6,
            None,
            &BcdConfig::default(),
        )
        .unwrap();
        let path: Vec<(usize, Array1<f64>)> = cards
            .iter()
            .map(|(k, s)| (*k, s.theta.clone()))
            .collect();
        let k_hat = select_k_bic(&path, &data.x, &data.y, None, 2, 6).unwrap();
        assert!(k_hat <= 2, "k_hat = {k_hat}");

        // Zero penalty coefficient on noisy data: the residual sum strictly
        // decreases in k, so the pure fit picks the largest k.
        let noisy = generate(&SynthSpec { snr: 2.0, ..spec }).unwrap();
        let noisy_obj = QuadObjective::implicit(noisy.x.clone(), noisy.y.clone()).unwrap();
        let noisy_cards = fit_cardinality_path(
            &noisy_obj,
            &noisy.partition,
            &pen,
            6,
            None,
            &BcdConfig::default(),
        )
        .unwrap();
        let noisy_path: Vec<(usize, Array1<f64>)> = noisy_cards
            .iter()
            .map(|(k, s)| (*k, s.theta.clone()))
            .collect();
        let k_pure = select_k_bic(&noisy_path, &noisy.x, &noisy.y, Some(0.0), 2, 6).unwrap();
        assert_eq!(k_pure, 6);
    }

    #[test]
    fn validation_tuning_beats_zero_model_and_matches_recomputation() {
        let spec = SynthSpec {
            n: 120,
            q: 6,
            group_size: 2,
            k_star: 2,
            seed: 7,
            ..base_spec()
        };
        let train = generate(&spec).unwrap();
        let val = generate(&SynthSpec { seed: 8, ..spec }).unwrap();
        let pen = Penalty::new(1.0, 0.0, 0.0, 6);
        let cfg = BcdConfig::default();
        let obj = QuadObjective::implicit(train.x.clone(), train.y.clone()).unwrap();
        let lmax = lambda0_max(&obj, &train.partition, &pen, &cfg);
        let grid = lambda0_grid(lmax, 20);
        let (best, best_mse) = tune_validation(
            &train.x,
            &train.y,
            &val.x,
            &val.y,
            &train.partition,
            &pen,
            &grid,
            PathSolver::Bcd,
            &cfg,
        )
        .unwrap();
        let zero_mse = val.y.dot(&val.y) / val.y.len() as f64;
        assert!(best_mse <= zero_mse + 1e-12);
        // Recomputation oracle: refit the path and re-evaluate every point.
        let path = fit_path(&obj, &train.partition, &pen, &grid, PathSolver::Bcd, true, &cfg)
            .unwrap();
        let oracle = path
            .points
            .iter()
            .map(|pt| {
                let r = &val.y - &val.x.dot(&pt.solution.theta);
                r.dot(&r) / val.y.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(best_mse, oracle, epsilon = 1e-12);
        assert!(best.solution.support.len() <= 6);
    }
}
