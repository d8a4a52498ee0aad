//! Deterministic-seeded Brownian paths, Stratonovich (Heun) and Itô
//! (Euler–Maruyama) integration, Stratonovich→Itô conversion, and ensemble
//! Monte Carlo with fixed-order statistics.
//!
//! Randomness is counter-based: every increment is a pure function of
//! (seed, step, component), and path seeds are substreams of the master
//! seed, so ensembles are bit-identical regardless of execution order or
//! worker count.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::geometry::VectorFieldFn;
use crate::{Error, Result};

/// Uniform time grid on [t0, t_final] with N steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_final > t0) {
            return Err(Error::InvalidArgument(format!(
                "need t_final > t0 and steps ≥ 1, got [{t0}, {t_final}] with {steps}"
            )));
        }
        Ok(Self { t0, t_final, steps })
    }

    pub fn h(&self) -> f64 {
        (self.t_final - self.t0) / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h()
    }
}

/// Which stochastic calculus the drift refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calculus {
    Stratonovich,
    Ito,
}

type DriftFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// SDE dq = drift dt + Σ_j Y_j ∘/· dW^j with k autonomous diffusion fields.
#[derive(Clone)]
pub struct SdeProblem {
    pub dim: usize,
    drift: DriftFn,
    pub diffusion_fields: Vec<VectorFieldFn>,
    pub calculus: Calculus,
}

impl SdeProblem {
    pub fn new(
        dim: usize,
        drift: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        diffusion_fields: Vec<VectorFieldFn>,
        calculus: Calculus,
    ) -> Self {
        Self {
            dim,
            drift: Arc::new(drift),
            diffusion_fields,
            calculus,
        }
    }

    pub fn drift(&self, t: f64, q: &DVector<f64>) -> DVector<f64> {
        (self.drift)(t, q)
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion_fields.len()
    }
}

impl std::fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SdeProblem(dim={}, k={}, {:?})",
            self.dim,
            self.noise_dim(),
            self.calculus
        )
    }
}

/// One integrated trajectory. `states` holds everything up to the last
/// finite state; `exploded_at` records the step at which the state left
/// the floating-point range, mirroring a finite explosion time.
#[derive(Debug, Clone)]
pub struct Path {
    pub grid: TimeGrid,
    pub states: Vec<DVector<f64>>,
    pub exploded_at: Option<usize>,
    pub path_seed: u64,
}

impl Path {
    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("path has at least the initial state")
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub paths: Vec<Path>,
    pub master_seed: u64,
}

const GOLDEN: u64 = 0x9E3779B97F4A7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Seed of path `index` inside the master stream.
pub fn substream(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed ^ mix64((index + 1).wrapping_mul(GOLDEN)))
}

/// Standard normal draw for a (seed, counter) pair: splitmix64 output fed
/// through the inverse normal CDF.
fn normal_draw(seed: u64, counter: u64, std_normal: &Normal) -> f64 {
    let state = seed.wrapping_add((counter + 1).wrapping_mul(GOLDEN));
    let z = mix64(state);
    // 53-bit mantissa, shifted to the open interval (0, 1)
    let u = ((z >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    std_normal.inverse_cdf(u)
}

/// N×k matrix of i.i.d. Normal(0, h) Brownian increments, bit-reproducible
/// for identical (seed, grid, k).
pub fn brownian_increments(seed: u64, grid: &TimeGrid, k: usize) -> DMatrix<f64> {
    let std_normal = Normal::standard();
    let sqrt_h = grid.h().sqrt();
    DMatrix::from_fn(grid.steps, k, |step, comp| {
        sqrt_h * normal_draw(seed, (step * k + comp) as u64, &std_normal)
    })
}

/// Stratonovich→Itô correction ½ Σ_j (DY_j)(q)·Y_j(q), by central-difference
/// Jacobian-vector products. Itô drift = Stratonovich drift + correction.
pub fn strat_to_ito_correction(problem: &SdeProblem, _t: f64, q: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(problem.dim);
    for y in &problem.diffusion_fields {
        let yq = y.eval(q);
        let scale = 1.0 + yq.norm();
        let h = 1e-6 / scale * (1.0 + q.norm());
        if yq.norm() == 0.0 {
            continue;
        }
        let jvp = (y.eval(&(q + h * &yq)) - y.eval(&(q - h * &yq))) / (2.0 * h);
        out += 0.5 * jvp;
    }
    out
}

/// Integrate one path with the given increments (shape N×k).
///
/// Stratonovich uses the Heun predictor–corrector (trapezoid on drift and
/// diffusion, weak order 1, order 2 on noise-free problems); Itô uses
/// Euler–Maruyama. A non-finite state truncates the path and sets the
/// explosion flag instead of aborting.
pub fn integrate(
    problem: &SdeProblem,
    grid: &TimeGrid,
    initial: &DVector<f64>,
    increments: &DMatrix<f64>,
    path_seed: u64,
) -> Result<Path> {
    let k = problem.noise_dim();
    if increments.nrows() != grid.steps || increments.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "increments are {}×{}, expected {}×{k}",
            increments.nrows(),
            increments.ncols(),
            grid.steps
        )));
    }
    if initial.len() != problem.dim {
        return Err(Error::DimensionMismatch(
            "initial condition dimension mismatch".into(),
        ));
    }
    let h = grid.h();
    let mut states = Vec::with_capacity(grid.steps + 1);
    states.push(initial.clone());
    let mut q = initial.clone();
    let mut exploded_at = None;
    for step in 0..grid.steps {
        let t = grid.time(step);
        let next = match problem.calculus {
            Calculus::Ito => {
                let mut next = &q + h * problem.drift(t, &q);
                for (j, y) in problem.diffusion_fields.iter().enumerate() {
                    next += increments[(step, j)] * y.eval(&q);
                }
                next
            }
            Calculus::Stratonovich => {
                // predictor
                let mut pred = &q + h * problem.drift(t, &q);
                let y_at_q: Vec<DVector<f64>> = problem
                    .diffusion_fields
                    .iter()
                    .map(|y| y.eval(&q))
                    .collect();
                for (j, yq) in y_at_q.iter().enumerate() {
                    pred += increments[(step, j)] * yq;
                }
                // corrector (trapezoid)
                let mut next =
                    &q + 0.5 * h * (problem.drift(t, &q) + problem.drift(t + h, &pred));
                for (j, y) in problem.diffusion_fields.iter().enumerate() {
                    next += 0.5 * increments[(step, j)] * (&y_at_q[j] + y.eval(&pred));
                }
                next
            }
        };
        if next.iter().any(|x| !x.is_finite()) {
            exploded_at = Some(step + 1);
            break;
        }
        states.push(next.clone());
        q = next;
    }
    Ok(Path {
        grid: *grid,
        states,
        exploded_at,
        path_seed,
    })
}

/// P independent paths from substreams of the master seed. Results are
/// independent of execution order and worker count.
pub fn ensemble_run(
    problem: &SdeProblem,
    grid: &TimeGrid,
    initial: &DVector<f64>,
    master_seed: u64,
    path_count: usize,
) -> Result<Ensemble> {
    if path_count == 0 {
        return Err(Error::InvalidArgument("path count must be ≥ 1".into()));
    }
    let paths: Result<Vec<Path>> = (0..path_count)
        .into_par_iter()
        .map(|p| {
            let seed = substream(master_seed, p as u64);
            let increments = brownian_increments(seed, grid, problem.noise_dim());
            integrate(problem, grid, initial, &increments, seed)
        })
        .collect();
    Ok(Ensemble {
        paths: paths?,
        master_seed,
    })
}

/// Deterministic pairwise summation (fixed reduction order).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1..=8 => values.iter().sum(),
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Per-time mean and standard error of an observable over an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatPoint {
    pub mean: f64,
    pub stderr: f64,
    /// paths still alive (not exploded) at this time index
    pub count: usize,
}

pub fn ensemble_stats(
    ensemble: &Ensemble,
    observable: impl Fn(&DVector<f64>) -> f64,
) -> Vec<StatPoint> {
    let horizon = ensemble
        .paths
        .iter()
        .map(|p| p.states.len())
        .max()
        .unwrap_or(0);
    let mut out = Vec::with_capacity(horizon);
    let mut buf: Vec<f64> = Vec::with_capacity(ensemble.paths.len());
    for i in 0..horizon {
        buf.clear();
        for p in &ensemble.paths {
            if let Some(state) = p.states.get(i) {
                buf.push(observable(state));
            }
        }
        let count = buf.len();
        if count == 0 {
            out.push(StatPoint {
                mean: f64::NAN,
                stderr: f64::NAN,
                count: 0,
            });
            continue;
        }
        let mean = pairwise_sum(&buf) / count as f64;
        let sq: Vec<f64> = buf.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if count > 1 {
            pairwise_sum(&sq) / (count - 1) as f64
        } else {
            0.0
        };
        out.push(StatPoint {
            mean,
            stderr: (var / count as f64).sqrt(),
            count,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn increments_are_bit_reproducible() {
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let a = brownian_increments(42, &grid, 3);
        let b = brownian_increments(42, &grid, 3);
        assert_eq!(a, b);
        let c = brownian_increments(43, &grid, 3);
        assert_ne!(a, c);
    }

    #[test]
    fn increments_have_law_n0h() {
        let grid = TimeGrid::new(0.0, 10_000.0, 1_000_000).unwrap();
        let h = grid.h();
        assert!((h - 0.01).abs() < 1e-15);
        let inc = brownian_increments(7, &grid, 1);
        let n = inc.nrows() as f64;
        let mean = inc.iter().sum::<f64>() / n;
        assert!(
            mean.abs() < 4.0 * (h / n).sqrt(),
            "mean {mean} outside CLT bound"
        );
        let var = inc.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!((0.0099..=0.0101).contains(&var), "variance {var}");
    }

    #[test]
    fn conversion_correction_linear_field() {
        // 1-D X(x) = x: correction = x/2
        let problem = SdeProblem::new(
            1,
            |_, _| dv(&[0.0]),
            vec![VectorFieldFn::new(|q| dv(&[q[0]]))],
            Calculus::Stratonovich,
        );
        let c = strat_to_ito_correction(&problem, 0.0, &dv(&[1.7]));
        assert!((c[0] - 0.85).abs() < 1e-6);
    }

    #[test]
    fn conversion_correction_constant_fields_vanishes() {
        let problem = SdeProblem::new(
            2,
            |_, _| dv(&[0.0, 0.0]),
            vec![
                VectorFieldFn::constant(dv(&[1.0, 2.0])),
                VectorFieldFn::constant(dv(&[0.0, -1.0])),
            ],
            Calculus::Stratonovich,
        );
        let c = strat_to_ito_correction(&problem, 0.0, &dv(&[0.3, 0.4]));
        assert!(c.norm() < 1e-9);
    }

    #[test]
    fn zero_fields_give_constant_path() {
        let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let problem = SdeProblem::new(
            2,
            |_, _| dv(&[0.0, 0.0]),
            vec![VectorFieldFn::constant(dv(&[0.0, 0.0]))],
            Calculus::Stratonovich,
        );
        let inc = brownian_increments(1, &grid, 1);
        let path = integrate(&problem, &grid, &dv(&[1.0, -2.0]), &inc, 1).unwrap();
        assert!(path.exploded_at.is_none());
        for s in &path.states {
            assert_eq!(s, &dv(&[1.0, -2.0]));
        }
    }

    #[test]
    fn pure_linear_drift_is_exact_for_euler() {
        let grid = TimeGrid::new(0.0, 2.0, 200).unwrap();
        let problem = SdeProblem::new(1, |_, _| dv(&[0.7]), vec![], Calculus::Ito);
        let inc = DMatrix::zeros(200, 0);
        let path = integrate(&problem, &grid, &dv(&[0.1]), &inc, 0).unwrap();
        assert!((path.terminal()[0] - (0.1 + 0.7 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn heun_is_second_order_on_noise_free_problems() {
        // q' = cos(t)·q, exact q(T) = q0·e^{sin T}
        let run = |steps: usize| {
            let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
            let problem = SdeProblem::new(
                1,
                |t: f64, q: &DVector<f64>| dv(&[t.cos() * q[0]]),
                vec![],
                Calculus::Stratonovich,
            );
            let inc = DMatrix::zeros(steps, 0);
            let path = integrate(&problem, &grid, &dv(&[1.0]), &inc, 0).unwrap();
            (path.terminal()[0] - 1f64.sin().exp()).abs()
        };
        let e1 = run(100);
        let e2 = run(200);
        let ratio = e1 / e2;
        assert!(
            (2.8..=5.2).contains(&ratio),
            "expected ≈4 error reduction, got {ratio}"
        );
    }

    #[test]
    fn explosion_is_truncated_and_flagged() {
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        // super-linear drift blows up fast from x0 = 3 at this step size
        let problem = SdeProblem::new(
            1,
            |_, q: &DVector<f64>| dv(&[q[0].powi(3).exp()]),
            vec![],
            Calculus::Ito,
        );
        let inc = DMatrix::zeros(100, 0);
        let path = integrate(&problem, &grid, &dv(&[3.0]), &inc, 0).unwrap();
        assert!(path.exploded_at.is_some());
        assert!(path.states.len() < 101);
        assert!(path.states.iter().all(|s| s[0].is_finite()));
    }

    #[test]
    fn ensemble_single_path_matches_direct_integrate() {
        let grid = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let problem = SdeProblem::new(
            1,
            |_, _| dv(&[0.1]),
            vec![VectorFieldFn::new(|q| dv(&[0.5 * q[0]]))],
            Calculus::Stratonovich,
        );
        let ens = ensemble_run(&problem, &grid, &dv(&[1.0]), 99, 1).unwrap();
        let seed = substream(99, 0);
        let inc = brownian_increments(seed, &grid, 1);
        let direct = integrate(&problem, &grid, &dv(&[1.0]), &inc, seed).unwrap();
        assert_eq!(ens.paths[0].states, direct.states);
    }

    #[test]
    fn pure_brownian_ensemble_mean_is_small() {
        let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let problem = SdeProblem::new(
            1,
            |_, _| dv(&[0.0]),
            vec![VectorFieldFn::constant(dv(&[1.0]))],
            Calculus::Ito,
        );
        let p = 10_000;
        let ens = ensemble_run(&problem, &grid, &dv(&[0.0]), 2_024, p).unwrap();
        let stats = ensemble_stats(&ens, |s| s[0]);
        let last = stats.last().unwrap();
        assert_eq!(last.count, p);
        assert!(last.mean.abs() < 4.0 / (p as f64).sqrt());
        // constant observable has zero spread
        let const_stats = ensemble_stats(&ens, |_| 3.25);
        assert_eq!(const_stats[0].mean, 3.25);
        assert_eq!(const_stats[0].stderr, 0.0);
    }

    #[test]
    fn ensembles_are_identical_across_worker_counts() {
        let grid = TimeGrid::new(0.0, 1.0, 32).unwrap();
        let problem = SdeProblem::new(
            1,
            |_, _| dv(&[0.05]),
            vec![VectorFieldFn::new(|q| dv(&[0.3 * q[0] + 0.1]))],
            Calculus::Stratonovich,
        );
        let run_with_threads = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| ensemble_run(&problem, &grid, &dv(&[1.0]), 5, 64).unwrap())
        };
        let a = run_with_threads(1);
        let b = run_with_threads(2);
        for (pa, pb) in a.paths.iter().zip(b.paths.iter()) {
            assert_eq!(pa.states, pb.states);
        }
    }

    #[test]
    fn geometric_bm_weak_error_shrinks_linearly() {
        // dX = μX dt + σX dW, E[X_1] = e^μ
        let mu = 1.5;
        let sigma = 0.2;
        let weak_error = |steps: usize| {
            let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
            let problem = SdeProblem::new(
                1,
                move |_, q: &DVector<f64>| dv(&[mu * q[0]]),
                vec![VectorFieldFn::new(move |q| dv(&[sigma * q[0]]))],
                Calculus::Ito,
            );
            let ens = ensemble_run(&problem, &grid, &dv(&[1.0]), 11, 20_000).unwrap();
            let stats = ensemble_stats(&ens, |s| s[0]);
            (stats.last().unwrap().mean - mu.exp()).abs()
        };
        let e16 = weak_error(16);
        let e64 = weak_error(64);
        let ratio = e16 / e64;
        assert!(
            (2.0..=8.0).contains(&ratio),
            "weak error should drop ≈4× from h=1/16 to h=1/64, got {ratio}"
        );
    }

    #[test]
    fn strat_heun_vs_converted_ito_em_contract_on_shared_noise() {
        // δX = X δW (Stratonovich) vs dX = ½X dt + X dW (Itô), identical
        // increments; the terminal gap contracts when h halves
        let run = |steps: usize, seed: u64| {
            let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
            let strat = SdeProblem::new(
                1,
                |_, _| dv(&[0.0]),
                vec![VectorFieldFn::new(|q| dv(&[q[0]]))],
                Calculus::Stratonovich,
            );
            let ito = SdeProblem::new(
                1,
                |_, q: &DVector<f64>| dv(&[0.5 * q[0]]),
                vec![VectorFieldFn::new(|q| dv(&[q[0]]))],
                Calculus::Ito,
            );
            let mut sup = 0.0f64;
            for p in 0..64 {
                let pseed = substream(seed, p);
                let inc = brownian_increments(pseed, &grid, 1);
                let a = integrate(&strat, &grid, &dv(&[1.0]), &inc, pseed).unwrap();
                let b = integrate(&ito, &grid, &dv(&[1.0]), &inc, pseed).unwrap();
                sup = sup.max((a.terminal()[0] - b.terminal()[0]).abs());
            }
            sup
        };
        // the sup statistic fluctuates with the noise realization (the
        // dominant Heun-vs-EM gap term is the mean-zero ΔW²−h one), so the
        // stream is pinned; the in-law agreement test below carries the
        // distributional content
        let d1 = run(256, 123);
        let d2 = run(512, 123);
        let ratio = d1 / d2;
        assert!(
            (1.4..=2.6).contains(&ratio),
            "sup difference should halve (±30%) under h halving, got {ratio}"
        );
        // and the gap itself is small
        assert!(d2 < 0.5, "terminal gap {d2}");
    }

    #[test]
    fn conversion_round_trip_matches_in_law() {
        // Stratonovich problem integrated with Heun vs its Itô conversion
        // integrated with EM: terminal means agree within 4 combined
        // standard errors.
        let strat = SdeProblem::new(
            1,
            |_, _| dv(&[0.1]),
            vec![VectorFieldFn::new(|q| dv(&[0.4 * q[0]]))],
            Calculus::Stratonovich,
        );
        let strat_c = strat.clone();
        let ito = SdeProblem::new(
            1,
            move |t, q: &DVector<f64>| {
                strat_c.drift(t, q) + strat_to_ito_correction(&strat_c, t, q)
            },
            strat.diffusion_fields.clone(),
            Calculus::Ito,
        );
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let p = 20_000;
        let ea = ensemble_run(&strat, &grid, &dv(&[1.0]), 123, p).unwrap();
        let eb = ensemble_run(&ito, &grid, &dv(&[1.0]), 456, p).unwrap();
        let sa = ensemble_stats(&ea, |s| s[0]);
        let sb = ensemble_stats(&eb, |s| s[0]);
        let (a, b) = (sa.last().unwrap(), sb.last().unwrap());
        let tol = 4.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!(
            (a.mean - b.mean).abs() < tol,
            "means {} vs {} beyond {tol}",
            a.mean,
            b.mean
        );
    }

    #[test]
    fn pairwise_sum_matches_naive_on_smooth_data() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
    }
}
