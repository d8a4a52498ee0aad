//! Two-wheeled robot: Q = S¹×S¹×SE(2) with chart (ψ¹, ψ², x, y, θ).
//!
//! The wheels are oriented so the robot goes forward when the wheels go
//! backward. Constraints are the kernel of an SE(2) connection form; the
//! shape space is the wheel torus. The drift vector of the reduced
//! diffusion has the closed form
//!     b = l m₀ R³ (J_w(4c²J_w + 2mc²R² + 2J₀R²) + mJ₀R⁴)⁻¹ (∂ψ¹ + ∂ψ²),
//! which vanishes exactly when the center of mass sits on the wheel axis
//! (l = 0).

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chaplygin::{drift_b, ChaplyginSplit};
use crate::constraints::{Distribution, MechanicalSystem};
use crate::geometry::{orthonormalize, MetricField, VectorFieldFn, DEFAULT_FD_STEP};
use crate::sde::{Calculus, SdeProblem, TimeGrid};
use crate::{Error, Result};

/// Masses, inertias and geometry of the robot, plus the per-wheel noise
/// intensities D₁, D₂ of the planning experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotParams {
    /// body mass without wheels (kg)
    pub m0: f64,
    /// mass of each wheel (kg)
    pub m_w: f64,
    /// wheel moment of inertia
    pub j_w: f64,
    /// body moment of inertia about the vertical axis
    pub j_0: f64,
    /// center-of-mass offset from the wheel axis midpoint (m)
    pub l: f64,
    /// half axle width (m)
    pub c: f64,
    /// wheel radius (m)
    pub r: f64,
    /// wheel noise intensities (planning experiment)
    pub d1: f64,
    pub d2: f64,
}

impl Default for RobotParams {
    /// Non-paper desk-scale defaults; the paper fixes only the planning
    /// figure's ρ, D₁, D₂, R, c.
    fn default() -> Self {
        Self {
            m0: 1.0,
            m_w: 0.25,
            j_w: 0.1,
            j_0: 0.5,
            l: 0.2,
            c: 0.1,
            r: 0.3,
            d1: 1.0,
            d2: 1.0,
        }
    }
}

impl RobotParams {
    /// total mass m = m₀ + 2m_w
    pub fn m(&self) -> f64 {
        self.m0 + 2.0 * self.m_w
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.m0, self.m_w, self.j_w, self.j_0, self.c, self.r];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument(
                "robot masses, inertias, c and R must be positive".into(),
            ));
        }
        if !(self.l >= 0.0) || !(self.d1 >= 0.0) || !(self.d2 >= 0.0) {
            return Err(Error::InvalidArgument(
                "robot l, D1, D2 must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// ξ₁ = ∂ψ¹ − (R/2)(cosθ ∂x + sinθ ∂y + (1/c) ∂θ)
    pub fn xi1(&self, q: &DVector<f64>) -> DVector<f64> {
        let (r, c) = (self.r, self.c);
        let theta = q[4];
        DVector::from_row_slice(&[
            1.0,
            0.0,
            -0.5 * r * theta.cos(),
            -0.5 * r * theta.sin(),
            -0.5 * r / c,
        ])
    }

    /// ξ₂ = ∂ψ² − (R/2)(cosθ ∂x + sinθ ∂y − (1/c) ∂θ)
    pub fn xi2(&self, q: &DVector<f64>) -> DVector<f64> {
        let (r, c) = (self.r, self.c);
        let theta = q[4];
        DVector::from_row_slice(&[
            0.0,
            1.0,
            -0.5 * r * theta.cos(),
            -0.5 * r * theta.sin(),
            0.5 * r / c,
        ])
    }

    pub fn metric_at(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (s, c) = q[4].sin_cos();
        let m = self.m();
        let ml = self.m0 * self.l;
        let mut g = DMatrix::zeros(5, 5);
        g[(0, 0)] = self.j_w;
        g[(1, 1)] = self.j_w;
        g[(2, 2)] = m;
        g[(3, 3)] = m;
        g[(4, 4)] = self.j_0;
        g[(2, 4)] = -ml * s;
        g[(4, 2)] = -ml * s;
        g[(3, 4)] = ml * c;
        g[(4, 3)] = ml * c;
        g
    }

    /// Connection form 𝒜 (rows: x-translation, y-translation, rotation).
    pub fn connection_at(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (x, y, theta) = (q[2], q[3], q[4]);
        let (s, c) = theta.sin_cos();
        let half_r = 0.5 * self.r;
        let half_rc = 0.5 * self.r / self.c;
        DMatrix::from_row_slice(
            3,
            5,
            &[
                half_r * c + y * half_rc,
                half_r * c - y * half_rc,
                1.0,
                0.0,
                y,
                half_r * s - x * half_rc,
                half_r * s + x * half_rc,
                0.0,
                1.0,
                -x,
                half_rc,
                -half_rc,
                0.0,
                0.0,
                1.0,
            ],
        )
    }
}

/// Assemble the robot as a constrained mechanical system together with its
/// Chaplygin split (shape = wheel angles, group = SE(2)).
pub fn robot_system(params: &RobotParams) -> Result<(Arc<MechanicalSystem>, ChaplyginSplit)> {
    params.validate()?;
    let p = *params;
    let metric = MetricField::new(5, move |q| p.metric_at(q));
    let dist = Distribution::new(2, move |q| p.connection_at(q));
    let system = Arc::new(MechanicalSystem {
        name: "two-wheeled-robot".into(),
        dim: 5,
        metric,
        distribution: Some(dist),
        seed_basis: Some(Arc::new(move |q: &DVector<f64>| {
            let mut seed = DMatrix::zeros(5, 2);
            seed.set_column(0, &p.xi1(q));
            seed.set_column(1, &p.xi2(q));
            seed
        })),
        periodic: vec![true, true, false, false, true],
        fd_step: DEFAULT_FD_STEP,
    });
    let generators = vec![
        VectorFieldFn::constant(DVector::from_row_slice(&[0.0, 0.0, 1.0, 0.0, 0.0])),
        VectorFieldFn::constant(DVector::from_row_slice(&[0.0, 0.0, 0.0, 1.0, 0.0])),
        VectorFieldFn::new(|q: &DVector<f64>| {
            DVector::from_row_slice(&[0.0, 0.0, -q[3], q[2], 1.0])
        }),
    ];
    let split = ChaplyginSplit::new(
        Arc::clone(&system),
        vec![0, 1],
        vec![2, 3, 4],
        move |q: &DVector<f64>| p.connection_at(q),
        generators,
    )?;
    Ok((system, split))
}

/// Closed-form drift vector b = s·(∂ψ¹ + ∂ψ²), returned as its two shape
/// components.
pub fn robot_drift_closed_form(params: &RobotParams) -> [f64; 2] {
    let (m, j_w, j_0, r, c) = (params.m(), params.j_w, params.j_0, params.r, params.c);
    let denom = j_w * (4.0 * c * c * j_w + 2.0 * m * c * c * r * r + 2.0 * j_0 * r * r)
        + m * j_0 * r.powi(4);
    let s = params.l * params.m0 * r.powi(3) / denom;
    [s, s]
}

/// ½ hl^𝒜(b)(q) with the closed-form b: the ODE whose integral curve is
/// the expected motion of the zero-initial-velocity perturbed robot. The
/// opposing ∂θ parts of ξ₁, ξ₂ cancel, so the mean heading is constant.
pub fn robot_mean_motion_ode(params: &RobotParams, q: &DVector<f64>) -> DVector<f64> {
    let b = robot_drift_closed_form(params);
    0.5 * (b[0] * params.xi1(q) + b[1] * params.xi2(q))
}

/// Reduced metric of the robot: constant over the wheel torus.
fn robot_mu0(params: &RobotParams) -> DMatrix<f64> {
    let q = DVector::zeros(5);
    let g = params.metric_at(&q);
    let xi1 = params.xi1(&q);
    let xi2 = params.xi2(&q);
    let n = (&g * &xi1).dot(&xi1);
    let p = (&g * &xi1).dot(&xi2);
    let n2 = (&g * &xi2).dot(&xi2);
    DMatrix::from_row_slice(2, 2, &[n, p, p, n2])
}

/// Constrained-Brownian-motion SDE of §-style zero-velocity kinematics:
/// δq = (σ²/2) hl(b) δt + σ Σ_a u_a^h δW^a (Stratonovich).
///
/// The frame coefficients come from Gram-Schmidt of the (constant) reduced
/// metric and the drift scalar from the numeric β pipeline, both computed
/// once at assembly; the per-step fields are closed-form in θ.
pub fn robot_cbm_problem(params: &RobotParams, sigma: f64) -> Result<SdeProblem> {
    params.validate()?;
    let (_system, split) = robot_system(params)?;
    let mu0 = robot_mu0(params);
    let frame = orthonormalize(&DMatrix::identity(2, 2), &mu0)?;
    // pipeline drift; constant over M (checked in tests against (e:b-rob))
    let b = drift_b(&split, &DVector::zeros(2))?;
    let p = *params;
    let drift_coeff = 0.5 * sigma * sigma;
    let bvec = b.clone();
    let drift = move |_t: f64, q: &DVector<f64>| {
        drift_coeff * (bvec[0] * p.xi1(q) + bvec[1] * p.xi2(q))
    };
    let diffusion: Vec<VectorFieldFn> = (0..2)
        .map(|a| {
            let c0 = frame[(0, a)];
            let c1 = frame[(1, a)];
            VectorFieldFn::new(move |q| sigma * (c0 * p.xi1(q) + c1 * p.xi2(q)))
        })
        .collect();
    Ok(SdeProblem::new(5, drift, diffusion, Calculus::Stratonovich))
}

/// Piecewise control for driving the nominal circle: wheel-speed profile
/// λ(t) and heading θ(t), with the acceleration/braking switch at
/// t₁ = √(π/2) and total time T = 3π/2 + t₁.
#[derive(Debug, Clone, Copy)]
pub struct RobotControl {
    /// circle radius (m)
    pub rho: f64,
    pub t1: f64,
    pub t_total: f64,
    /// κ = (D₂ − D₁)R²/(8c)
    pub kappa: f64,
}

impl RobotControl {
    pub fn new(rho: f64, params: &RobotParams) -> Result<Self> {
        if !(rho >= 0.0) {
            return Err(Error::InvalidArgument("rho must be ≥ 0".into()));
        }
        let t1 = (PI / 2.0).sqrt();
        Ok(Self {
            rho,
            t1,
            t_total: 1.5 * PI + t1,
            kappa: (params.d2 - params.d1) * params.r * params.r / (8.0 * params.c),
        })
    }

    /// λ(t) = 2t before t₁, 2(t−T)/(t₁−T) after. The two branches do not
    /// match at t₁ (the printed profile carries a small jump there); θ(t)
    /// is continuous.
    pub fn lambda(&self, t: f64) -> f64 {
        self.lambda_branch(t, t < self.t1)
    }

    /// One-sided λ: the quadrature integrates each smooth branch with its
    /// own limit at the breakpoint.
    pub fn lambda_branch(&self, t: f64, accelerating: bool) -> f64 {
        if accelerating {
            2.0 * t
        } else {
            2.0 * (t - self.t_total) / (self.t1 - self.t_total)
        }
    }

    /// Heading θ(t) with θ(0) = π/2, θ(t₁) = π, θ(T) = 5π/2.
    pub fn theta(&self, t: f64) -> f64 {
        if t < self.t1 {
            t * t + PI / 2.0
        } else {
            (t - self.t_total).powi(2) / (self.t1 - self.t_total) + 2.5 * PI
        }
    }
}

/// Planned mean path of the noisy robot.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub times: Vec<f64>,
    /// perturbed mean (E[x_t], E[y_t])
    pub mean: Vec<(f64, f64)>,
    /// deterministic reference (κ = 0 formulas)
    pub nominal: Vec<(f64, f64)>,
    /// true before the acceleration/braking switch t₁
    pub accelerating: Vec<bool>,
}

use crate::quadrature::cumulative_simpson;

/// Mean trajectory (E[x_t], E[y_t]) of the circle-following robot with
/// noisy wheels, as displacement integrals from the start point (ρ, 0):
///
///   E[x_t] = κ∫₀ᵗ e^{κs} cos θ(s) ds + ρ∫₀ᵗ λ(s) e^{κs} sin θ(s) ds
///   E[y_t] = −κ∫₀ᵗ e^{κs} sin θ(s) ds + ρ∫₀ᵗ λ(s) e^{κs} cos θ(s) ds
///
/// `paper_literal` moves the exponential out of the integrand as the
/// factor e^{κt} (the printed reading). Quadrature is composite Simpson
/// split at the control breakpoint t₁, so each branch is smooth.
pub fn robot_plan_mean(
    params: &RobotParams,
    control: &RobotControl,
    grid: &TimeGrid,
    paper_literal: bool,
) -> Result<PlanResult> {
    params.validate()?;
    if grid.t0 != 0.0 || (grid.t_final - control.t_total).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "planning grid must cover [0, T] = [0, {}]",
            control.t_total
        )));
    }
    let n_total = grid.steps.max(8);
    let frac = control.t1 / control.t_total;
    // each branch gets its own even subdivision (Simpson pairs)
    let n1 = ((n_total as f64 * frac / 2.0).round() as usize).max(1) * 2;
    let n2 = ((n_total as f64 * (1.0 - frac) / 2.0).round() as usize).max(1) * 2;

    let kappa = control.kappa;
    let rho = control.rho;
    let branch = |t_start: f64, t_end: f64, n: usize, kap: f64, accelerating: bool| {
        let h = (t_end - t_start) / n as f64;
        let times: Vec<f64> = (0..=n).map(|i| t_start + i as f64 * h).collect();
        // integrands: κ-weighted cos/sin and ρλ-weighted sin/cos, with the
        // one-sided λ of this branch
        let fx: Vec<f64> = times
            .iter()
            .map(|&t| {
                let e = if paper_literal { 1.0 } else { (kap * t).exp() };
                kap * e * control.theta(t).cos()
                    + rho * control.lambda_branch(t, accelerating) * e * control.theta(t).sin()
            })
            .collect();
        let fy: Vec<f64> = times
            .iter()
            .map(|&t| {
                let e = if paper_literal { 1.0 } else { (kap * t).exp() };
                -kap * e * control.theta(t).sin()
                    + rho * control.lambda_branch(t, accelerating) * e * control.theta(t).cos()
            })
            .collect();
        (times, cumulative_simpson(&fx, h), cumulative_simpson(&fy, h))
    };

    let assemble = |kap: f64| {
        let (t_a, ix_a, iy_a) = branch(0.0, control.t1, n1, kap, true);
        let (t_b, ix_b, iy_b) = branch(control.t1, control.t_total, n2, kap, false);
        let mut times = Vec::with_capacity(n1 + n2 + 1);
        let mut xs = Vec::with_capacity(n1 + n2 + 1);
        let mut ys = Vec::with_capacity(n1 + n2 + 1);
        let (x1, y1) = (ix_a[n1], iy_a[n1]);
        for i in 0..=n1 {
            times.push(t_a[i]);
            xs.push(ix_a[i]);
            ys.push(iy_a[i]);
        }
        for i in 1..=n2 {
            times.push(t_b[i]);
            xs.push(x1 + ix_b[i]);
            ys.push(y1 + iy_b[i]);
        }
        if paper_literal {
            for (i, t) in times.iter().enumerate() {
                let e = (kap * t).exp();
                xs[i] *= e;
                ys[i] *= e;
            }
        }
        (times, xs, ys)
    };

    let (times, mx, my) = assemble(kappa);
    let (_, nx, ny) = assemble(0.0);

    let mean = mx
        .iter()
        .zip(my.iter())
        .map(|(&x, &y)| (rho + x, y))
        .collect();
    let nominal = nx
        .iter()
        .zip(ny.iter())
        .map(|(&x, &y)| (rho + x, y))
        .collect();
    let accelerating = times.iter().map(|&t| t <= control.t1).collect();
    Ok(PlanResult {
        times,
        mean,
        nominal,
        accelerating,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaplygin::{beta_at, curvature, horizontal_lift, momentum_pairing, reduced_metric};
    use crate::constraints::adapted_frame;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn probe_points() -> Vec<DVector<f64>> {
        (0..6)
            .map(|i| {
                let t = i as f64;
                dv(&[0.3 * t, -0.2 * t, 0.1 * t, 0.4 - 0.1 * t, 0.7 * t])
            })
            .collect()
    }

    #[test]
    fn connection_annihilates_xi_and_reproduces_generators() {
        let params = RobotParams::default();
        for q in probe_points() {
            let a = params.connection_at(&q);
            assert!((&a * params.xi1(&q)).abs().max() < 1e-10);
            assert!((&a * params.xi2(&q)).abs().max() < 1e-10);
            // 𝒜(ξ_Q) = ξ for the SE(2) basis
            let gens = [
                dv(&[0.0, 0.0, 1.0, 0.0, 0.0]),
                dv(&[0.0, 0.0, 0.0, 1.0, 0.0]),
                dv(&[0.0, 0.0, -q[3], q[2], 1.0]),
            ];
            for (k, gen) in gens.iter().enumerate() {
                let out = &a * gen;
                for i in 0..3 {
                    let expect = if i == k { 1.0 } else { 0.0 };
                    assert!((out[i] - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn metric_pairings_of_xi_are_constant() {
        let params = RobotParams::default();
        let mut first: Option<(f64, f64, f64)> = None;
        for q in probe_points() {
            let g = params.metric_at(&q);
            let x1 = params.xi1(&q);
            let x2 = params.xi2(&q);
            let n = (&g * &x1).dot(&x1);
            let p = (&g * &x1).dot(&x2);
            let n2 = (&g * &x2).dot(&x2);
            match first {
                None => first = Some((n, p, n2)),
                Some((a, b, c)) => {
                    assert!((n - a).abs() < 1e-12);
                    assert!((p - b).abs() < 1e-12);
                    assert!((n2 - c).abs() < 1e-12);
                    assert!((n - n2).abs() < 1e-12, "μ(ξ₁,ξ₁) = μ(ξ₂,ξ₂)");
                }
            }
        }
    }

    #[test]
    fn adapted_frame_matches_printed_normalizers() {
        let params = RobotParams::default();
        let (system, _) = robot_system(&params).unwrap();
        let (m, j_w, j_0, r, c) = (params.m(), params.j_w, params.j_0, params.r, params.c);
        let n = j_w + m * r * r / 4.0 + j_0 * r * r / (4.0 * c * c);
        let u2_norm = (j_w * (j_w + m * r * r / 2.0 + j_0 * r * r / (2.0 * c * c))
            + m * j_0 * r.powi(4) / (4.0 * c * c))
            / n;
        let w = (m * r * r / 4.0 - j_0 * r * r / (4.0 * c * c)) / n;
        for q in probe_points() {
            let frame = adapted_frame(&system, &q, None).unwrap();
            let u1 = frame.tangent_cols.column(0);
            let u2 = frame.tangent_cols.column(1);
            // u₁ = n^{-1/2} ξ₁ in shape components: (n^{-1/2}, 0)
            assert!((u1[0] - n.powf(-0.5)).abs() < 1e-10);
            assert!(u1[1].abs() < 1e-12);
            // u₂ shape components: u₂ = u2_norm^{-1/2} (−w, 1)
            assert!((u2[1] - u2_norm.powf(-0.5)).abs() < 1e-10);
            assert!((u2[0] + w * u2_norm.powf(-0.5)).abs() < 1e-10);
        }
    }

    #[test]
    fn orthonormalize_reduced_metric_reproduces_u1() {
        let params = RobotParams::default();
        let mu0 = robot_mu0(&params);
        let frame = orthonormalize(&DMatrix::identity(2, 2), &mu0).unwrap();
        let n = params.j_w
            + params.m() * params.r * params.r / 4.0
            + params.j_0 * params.r * params.r / (4.0 * params.c * params.c);
        assert!((frame[(0, 0)] - n.powf(-0.5)).abs() < 1e-12);
        assert!(frame[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn horizontal_lift_of_wheel_axes_gives_xi() {
        let params = RobotParams::default();
        let (_, split) = robot_system(&params).unwrap();
        for q in probe_points() {
            let lift1 = horizontal_lift(&split, &q, &dv(&[1.0, 0.0])).unwrap();
            assert!((lift1 - params.xi1(&q)).abs().max() < 1e-10);
            let lift2 = horizontal_lift(&split, &q, &dv(&[0.0, 1.0])).unwrap();
            assert!((lift2 - params.xi2(&q)).abs().max() < 1e-10);
            let zero = horizontal_lift(&split, &q, &dv(&[0.0, 0.0])).unwrap();
            assert!(zero.norm() < 1e-12);
        }
    }

    #[test]
    fn reduced_metric_is_constant_and_group_independent() {
        let params = RobotParams::default();
        let (_, split) = robot_system(&params).unwrap();
        let m0a = reduced_metric(&split, &dv(&[0.0, 0.0])).unwrap();
        let m0b = reduced_metric(&split, &dv(&[2.1, -0.7])).unwrap();
        assert!((&m0a - &m0b).abs().max() < 1e-10);
        let n = params.j_w
            + params.m() * params.r * params.r / 4.0
            + params.j_0 * params.r * params.r / (4.0 * params.c * params.c);
        assert!((m0a[(0, 0)] - n).abs() < 1e-10);
    }

    #[test]
    fn momentum_pairing_with_rotation_generator_at_origin() {
        let params = RobotParams::default();
        let (system, split) = robot_system(&params).unwrap();
        let q = dv(&[0.0, 0.0, 0.0, 0.0, 0.0]);
        let frame = adapted_frame(&system, &q, None).unwrap();
        let u1 = frame.tangent_cols.column(0).clone_owned();
        // at x = y = 0 the rotation generator is ∂θ
        let pairing = momentum_pairing(&split, &q, &u1, &dv(&[0.0, 0.0, 1.0]));
        let g = params.metric_at(&q);
        let dtheta = dv(&[0.0, 0.0, 0.0, 0.0, 1.0]);
        let expect = (&g * &dtheta).dot(&u1);
        assert!((pairing - expect).abs() < 1e-12);
    }

    #[test]
    fn curvature_momentum_pairing_matches_paper_value() {
        // ⟨J(v¹ξ₁ + v²ξ₂), Curv(∂ψ¹, ∂ψ²)⟩ = m₀ l R³/(4c²) (v² − v¹)
        let params = RobotParams::default();
        let (_, split) = robot_system(&params).unwrap();
        let kappa0 = params.m0 * params.l * params.r.powi(3) / (4.0 * params.c * params.c);
        for q in probe_points() {
            let curv = curvature(
                &split,
                &q,
                &dv(&[1.0, 0.0, 0.0, 0.0, 0.0]),
                &dv(&[0.0, 1.0, 0.0, 0.0, 0.0]),
            )
            .unwrap();
            for (v1, v2) in [(1.0, 0.0), (0.0, 1.0), (0.6, -1.3)] {
                let v = v1 * params.xi1(&q) + v2 * params.xi2(&q);
                let pairing = momentum_pairing(&split, &q, &v, &curv);
                let expect = kappa0 * (v2 - v1);
                assert!(
                    (pairing - expect).abs() < 1e-6 * (1.0 + expect.abs()),
                    "pairing {pairing} vs {expect} at q = {q:?}"
                );
            }
        }
    }

    #[test]
    fn beta_vanishes_for_centered_mass() {
        let params = RobotParams {
            l: 0.0,
            ..RobotParams::default()
        };
        let (_, split) = robot_system(&params).unwrap();
        let beta = beta_at(&split, &dv(&[0.4, 1.1])).unwrap();
        assert!(beta.abs().max() < 1e-9);
    }

    #[test]
    fn drift_pipeline_matches_closed_form_at_defaults() {
        let params = RobotParams::default();
        let (_, split) = robot_system(&params).unwrap();
        let b = crate::chaplygin::drift_b(&split, &dv(&[0.0, 0.0])).unwrap();
        let closed = robot_drift_closed_form(&params);
        for i in 0..2 {
            let rel = (b[i] - closed[i]).abs() / closed[i].abs();
            assert!(rel < 1e-6, "component {i}: {} vs {}", b[i], closed[i]);
        }
        // the rejected reading m²c²R² of the printed "m2c²R²" does not match
        let m = params.m();
        let wrong_denom = params.j_w
            * (4.0 * params.c * params.c * params.j_w
                + m * m * params.c * params.c * params.r * params.r
                + 2.0 * params.j_0 * params.r * params.r)
            + m * params.j_0 * params.r.powi(4);
        let wrong = params.l * params.m0 * params.r.powi(3) / wrong_denom;
        assert!((b[0] - wrong).abs() / wrong.abs() > 1e-3);
    }

    #[test]
    fn closed_form_drift_is_linear_in_l_and_vanishes_at_zero() {
        let mut params = RobotParams::default();
        params.l = 0.0;
        assert_eq!(robot_drift_closed_form(&params), [0.0, 0.0]);
        params.l = 0.15;
        let b1 = robot_drift_closed_form(&params);
        params.l = 0.30;
        let b2 = robot_drift_closed_form(&params);
        assert!((b2[0] / b1[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mean_motion_ode_structure() {
        let params = RobotParams::default();
        let b = robot_drift_closed_form(&params);
        let q = dv(&[0.0, 0.0, 0.0, 0.0, 0.0]);
        let rhs = robot_mean_motion_ode(&params, &q);
        // shape components are ½b each
        assert!((rhs[0] - 0.5 * b[0]).abs() < 1e-15);
        assert!((rhs[1] - 0.5 * b[1]).abs() < 1e-15);
        // at θ=0 the group part is −(R/2)(b¹+b²)(1, 0, ·) with the ∂θ
        // parts of ξ₁, ξ₂ cancelling
        assert!((rhs[2] + 0.5 * params.r * 0.5 * (b[0] + b[1])).abs() < 1e-15);
        assert!(rhs[3].abs() < 1e-15);
        assert!(rhs[4].abs() < 1e-15);
        // l = 0: the cart stays put on average
        let still = RobotParams {
            l: 0.0,
            ..params
        };
        assert!(robot_mean_motion_ode(&still, &q).norm() == 0.0);
    }

    #[test]
    fn flat_derivative_part_of_generator_vanishes() {
        // Σ_a (Du_a)u_a = 0: apply the second-order part to coordinates
        let params = RobotParams::default();
        let problem = robot_cbm_problem(&params, 1.0).unwrap();
        for q in probe_points() {
            let mut sum = DVector::zeros(5);
            for y in &problem.diffusion_fields {
                let yq = y.eval(&q);
                let h = 1e-6;
                let jvp = (y.eval(&(&q + h * &yq)) - y.eval(&(&q - h * &yq))) / (2.0 * h);
                sum += jvp;
            }
            assert!(sum.abs().max() < 1e-6, "Σ(Du)u = {sum:?}");
        }
    }

    #[test]
    fn cbm_drift_is_half_lifted_b() {
        // σ = 1: the assembled drift must equal ½ hl(b) with the
        // closed-form b (nonzero for l ≠ 0, zero for l = 0)
        let params = RobotParams::default();
        let problem = robot_cbm_problem(&params, 1.0).unwrap();
        for q in probe_points() {
            let drift = problem.drift(0.0, &q);
            let expect = robot_mean_motion_ode(&params, &q);
            assert!(
                (&drift - &expect).abs().max() < 1e-7,
                "drift {drift:?} vs ½hl(b) {expect:?}"
            );
        }
        let centered = RobotParams {
            l: 0.0,
            ..params
        };
        let problem0 = robot_cbm_problem(&centered, 1.0).unwrap();
        for q in probe_points() {
            assert!(problem0.drift(0.0, &q).abs().max() < 1e-9);
        }
    }

    #[test]
    fn control_profile_values() {
        let params = RobotParams {
            d1: 1.2,
            d2: 0.8,
            r: 0.3,
            c: 0.1,
            ..RobotParams::default()
        };
        let control = RobotControl::new(1.0, &params).unwrap();
        assert!((control.kappa + 0.045).abs() < 1e-12);
        assert!((control.theta(0.0) - PI / 2.0).abs() < 1e-14);
        assert!((control.theta(control.t1) - PI).abs() < 1e-12);
        assert!((control.theta(control.t_total) - 2.5 * PI).abs() < 1e-12);
        // λ branches as printed: 2t before t₁, value 2 just after
        assert!((control.lambda(control.t1 - 1e-9) - 2.0 * control.t1).abs() < 1e-6);
        assert!((control.lambda(control.t1 + 1e-9) - 2.0).abs() < 1e-6);
        assert!(control.lambda(0.0) == 0.0);
        assert!(control.lambda(control.t_total).abs() < 1e-12);
    }

    #[test]
    fn plan_closes_circle_without_noise_asymmetry() {
        let params = RobotParams {
            d1: 1.0,
            d2: 1.0,
            r: 0.3,
            c: 0.1,
            ..RobotParams::default()
        };
        let control = RobotControl::new(1.0, &params).unwrap();
        assert_eq!(control.kappa, 0.0);
        let grid = TimeGrid::new(0.0, control.t_total, 10_000).unwrap();
        let plan = robot_plan_mean(&params, &control, &grid, false).unwrap();
        let (xt, yt) = *plan.mean.last().unwrap();
        assert!(
            ((xt - 1.0).powi(2) + yt.powi(2)).sqrt() < 1e-6,
            "terminal ({xt}, {yt}) should close at (ρ, 0)"
        );
        // nominal coincides with the mean when κ = 0
        for (m, n) in plan.mean.iter().zip(plan.nominal.iter()) {
            assert!((m.0 - n.0).abs() < 1e-12 && (m.1 - n.1).abs() < 1e-12);
        }
    }

    #[test]
    fn plan_with_paper_caption_parameters_misses_the_start() {
        let params = RobotParams {
            d1: 1.2,
            d2: 0.8,
            r: 0.3,
            c: 0.1,
            ..RobotParams::default()
        };
        let control = RobotControl::new(1.0, &params).unwrap();
        let grid = TimeGrid::new(0.0, control.t_total, 10_000).unwrap();
        for literal in [false, true] {
            let plan = robot_plan_mean(&params, &control, &grid, literal).unwrap();
            let (xt, yt) = *plan.mean.last().unwrap();
            let gap = ((xt - 1.0).powi(2) + yt.powi(2)).sqrt();
            assert!(gap > 0.05, "terminal gap {gap} (literal={literal})");
            // the deterministic reference still closes
            let (nx, ny) = *plan.nominal.last().unwrap();
            assert!(((nx - 1.0).powi(2) + ny.powi(2)).sqrt() < 1e-6);
        }
    }
}
