//! Non-holonomic structure: constraint distributions, adapted orthonormal
//! frames, the non-holonomic connection and the drift + diffusion fields of
//! constrained Brownian motion.
//!
//! The generator assembled here is ½σ²Σ[(Πu_a)(Πu_a) − Π∇^μ_{u_a}u_a] in a
//! frame adapted to 𝒟 ⊕ 𝒟^⊥; the first-order part measured in the
//! non-holonomic connection vanishes by construction, which
//! `martingale_defect` exposes as a self-check.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::geometry::{
    self, covariant_derivative, inner, orthonormalize, project_onto_distribution, ConfigPoint,
    MetricField, VectorFieldFn,
};
use crate::{Error, Result};

type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Constraint distribution 𝒟 ⊂ TQ given as the kernel of (n−r) one-forms
/// (the rows of the returned matrix).
#[derive(Clone)]
pub struct Distribution {
    /// dim 𝒟 = r
    pub rank: usize,
    forms: MatrixFn,
}

impl Distribution {
    pub fn new(
        rank: usize,
        forms: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            rank,
            forms: Arc::new(forms),
        }
    }

    pub fn forms(&self, q: &DVector<f64>) -> DMatrix<f64> {
        (self.forms)(q)
    }
}

impl std::fmt::Debug for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Distribution(rank={})", self.rank)
    }
}

/// A mechanical system in one global chart: metric, optional constraint
/// distribution, optional smooth seed basis for 𝒟 (used to build frames
/// that vary smoothly with q, which finite differences need).
#[derive(Clone)]
pub struct MechanicalSystem {
    pub name: String,
    pub dim: usize,
    pub metric: MetricField,
    pub distribution: Option<Distribution>,
    pub seed_basis: Option<MatrixFn>,
    pub periodic: Vec<bool>,
    pub fd_step: f64,
}

impl std::fmt::Debug for MechanicalSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MechanicalSystem({}, dim={})", self.name, self.dim)
    }
}

impl MechanicalSystem {
    pub fn unconstrained(name: &str, metric: MetricField) -> Self {
        let dim = metric.dim;
        Self {
            name: name.into(),
            dim,
            metric,
            distribution: None,
            seed_basis: None,
            periodic: vec![false; dim],
            fd_step: geometry::DEFAULT_FD_STEP,
        }
    }

    /// dim 𝒟
    pub fn dist_rank(&self) -> usize {
        self.distribution
            .as_ref()
            .map(|d| d.rank)
            .unwrap_or(self.dim)
    }
}

/// μ-orthonormal frame adapted to 𝒟_q ⊕ 𝒟^⊥_q.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    pub base: ConfigPoint,
    /// n×r, spans 𝒟_q
    pub tangent_cols: DMatrix<f64>,
    /// n×(n−r), spans 𝒟^⊥_q
    pub normal_cols: DMatrix<f64>,
}

/// Drift and diffusion fields of constrained Brownian motion.
///
/// Immutable once assembled; share freely across simulation workers.
#[derive(Debug, Clone)]
pub struct CbmFields {
    pub sigma: f64,
    /// σ·u_a for the adapted tangent frame (u_a)
    pub diffusion_fields: Vec<VectorFieldFn>,
    /// −(σ²/2) Σ_a Π∇^μ_{u_a}u_a
    pub drift_field: VectorFieldFn,
}

/// Euclidean orthogonal projector onto ker A (A full row rank).
fn kernel_projector(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.ncols();
    let aat = a * a.transpose();
    let chol = Cholesky::new(aat).ok_or_else(|| {
        Error::RankDrop("constraint rows are numerically dependent".into())
    })?;
    let sol = chol.solve(&a.clone()); // (AAᵀ)⁻¹ A
    Ok(DMatrix::identity(n, n) - a.transpose() * sol)
}

/// Pick `count` numerically independent columns from `candidates` by pivoted
/// Gram-Schmidt on Euclidean norms. Ties break toward the lower index, so
/// the outcome is deterministic.
fn pivoted_select(candidates: &DMatrix<f64>, count: usize) -> Result<DMatrix<f64>> {
    let n = candidates.nrows();
    let mut work: Vec<DVector<f64>> = (0..candidates.ncols())
        .map(|j| candidates.column(j).clone_owned())
        .collect();
    let mut picked: Vec<usize> = Vec::with_capacity(count);
    for _ in 0..count {
        let (best, norm) = work
            .iter()
            .enumerate()
            .filter(|(j, _)| !picked.contains(j))
            .map(|(j, c)| (j, c.norm()))
            .fold((usize::MAX, -1.0), |acc, (j, nn)| {
                if nn > acc.1 + 1e-15 {
                    (j, nn)
                } else {
                    acc
                }
            });
        if norm < 1e-9 {
            return Err(Error::RankDrop(format!(
                "only {} independent directions found, need {count}",
                picked.len()
            )));
        }
        let e = work[best].clone() / norm;
        picked.push(best);
        for c in work.iter_mut() {
            let proj = c.dot(&e);
            *c -= proj * &e;
        }
    }
    let mut out = DMatrix::zeros(n, count);
    for (k, j) in picked.iter().enumerate() {
        out.set_column(k, &candidates.column(*j));
    }
    Ok(out)
}

/// Build the μ-orthonormal frame adapted to 𝒟_q ⊕ 𝒟^⊥_q.
///
/// The kernel basis comes from `seed_basis` (projected onto ker A, then
/// Gram-Schmidt) when given, otherwise from a pivoted, deterministic
/// completion of the Euclidean kernel projector. The normal block completes
/// the μ-orthogonal complement from pivoted projections of the standard
/// basis.
pub fn adapted_frame(
    system: &MechanicalSystem,
    q: &DVector<f64>,
    seed_basis: Option<&DMatrix<f64>>,
) -> Result<AdaptedFrame> {
    let n = system.dim;
    let (g, _) = system.metric.eval_spd(q)?;
    let r = system.dist_rank();

    let tangent_cols = match &system.distribution {
        None => orthonormalize(&DMatrix::identity(n, n), &g)?,
        Some(dist) => {
            let a = dist.forms(q);
            if a.shape() != (n - r, n) {
                return Err(Error::DimensionMismatch(format!(
                    "constraint matrix is {}×{}, expected {}×{n}",
                    a.nrows(),
                    a.ncols(),
                    n - r
                )));
            }
            let proj = kernel_projector(&a)?;
            let seed_owned;
            let seed: Option<&DMatrix<f64>> = match seed_basis {
                Some(s) => Some(s),
                None => match &system.seed_basis {
                    Some(f) => {
                        seed_owned = f(q);
                        Some(&seed_owned)
                    }
                    None => None,
                },
            };
            let kernel = match seed {
                // a supplied seed keeps its column order (first frame vector
                // stays parallel to the first seed vector)
                Some(s) => {
                    if s.nrows() != n || s.ncols() != r {
                        return Err(Error::DimensionMismatch(format!(
                            "seed basis is {}×{}, expected {n}×{r}",
                            s.nrows(),
                            s.ncols()
                        )));
                    }
                    &proj * s
                }
                None => pivoted_select(&proj, r)?,
            };
            // the kernel basis must actually annihilate A
            let defect = (&a * &kernel).abs().max();
            if defect > 1e-8 {
                return Err(Error::RankDrop(format!(
                    "kernel residual {defect:.3e}; constraint rank dropped"
                )));
            }
            orthonormalize(&kernel, &g)?
        }
    };

    let normal_cols = if r == n {
        DMatrix::zeros(n, 0)
    } else {
        // μ-orthogonal complement: project the standard basis, drop the r
        // most dependent columns, orthonormalize
        let mut candidates = DMatrix::zeros(n, n);
        for i in 0..n {
            let e = DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 });
            let pe = project_onto_distribution(&g, &e, &tangent_cols)?;
            candidates.set_column(i, &(e - pe));
        }
        let picked = pivoted_select(&candidates, n - r)?;
        orthonormalize(&picked, &g)?
    };

    Ok(AdaptedFrame {
        base: ConfigPoint::new(q.clone(), system.periodic.clone())?,
        tangent_cols,
        normal_cols,
    })
}

/// Tangent frame at q as smooth vector fields (one per column).
pub fn tangent_frame_fields(system: &Arc<MechanicalSystem>) -> Vec<VectorFieldFn> {
    let r = system.dist_rank();
    (0..r)
        .map(|a| {
            let sys = Arc::clone(system);
            VectorFieldFn::new(move |q| match adapted_frame(&sys, q, None) {
                Ok(frame) => frame.tangent_cols.column(a).clone_owned(),
                Err(_) => DVector::from_element(sys.dim, f64::NAN),
            })
        })
        .collect()
}

/// Non-holonomic covariant derivative ∇^nh_X Y = Π∇^μ_X Y for Y a section
/// of 𝒟 (checked at q).
pub fn nh_covariant(
    system: &MechanicalSystem,
    x: &VectorFieldFn,
    y: &VectorFieldFn,
    q: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (g, _) = system.metric.eval_spd(q)?;
    let frame = adapted_frame(system, q, None)?;
    let yq = y.eval(q);
    let py = project_onto_distribution(&g, &yq, &frame.tangent_cols)?;
    let scale = 1.0 + yq.norm();
    if (&yq - &py).norm() > 1e-8 * scale {
        return Err(Error::NotInDistribution(format!(
            "normal component {:.3e}",
            (&yq - &py).norm()
        )));
    }
    let full = covariant_derivative(&system.metric, x, y, q, system.fd_step)?;
    project_onto_distribution(&g, &full, &frame.tangent_cols)
}

/// Π∇^μ_{u_a}u_a summed over the adapted tangent frame.
fn projected_frame_laplacian_drift(
    system: &Arc<MechanicalSystem>,
    q: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (g, _) = system.metric.eval_spd(q)?;
    let frame = adapted_frame(system, q, None)?;
    let fields = tangent_frame_fields(system);
    let mut sum = DVector::zeros(system.dim);
    for u in &fields {
        let du = covariant_derivative(&system.metric, u, u, q, system.fd_step)?;
        sum += project_onto_distribution(&g, &du, &frame.tangent_cols)?;
    }
    Ok(sum)
}

/// Assemble the drift and diffusion fields of constrained Brownian motion
/// at field strength σ: diffusion σu_a, drift −(σ²/2)ΣΠ∇^μ_{u_a}u_a.
pub fn cbm_fields(system: &Arc<MechanicalSystem>, sigma: f64) -> Result<CbmFields> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("sigma must be ≥ 0".into()));
    }
    let frame_fields = tangent_frame_fields(system);
    let diffusion_fields: Vec<VectorFieldFn> = frame_fields
        .iter()
        .map(|f| {
            let f = f.clone();
            VectorFieldFn::new(move |q| sigma * f.eval(q))
        })
        .collect();
    let sys = Arc::clone(system);
    let drift_field = VectorFieldFn::new(move |q| {
        match projected_frame_laplacian_drift(&sys, q) {
            Ok(sum) => -0.5 * sigma * sigma * sum,
            Err(_) => DVector::from_element(sys.dim, f64::NAN),
        }
    });
    Ok(CbmFields {
        sigma,
        diffusion_fields,
        drift_field,
    })
}

/// μ-norm of the first-order generator part measured in ∇^nh:
/// ‖drift + (σ²/2)Σ∇^nh_{u_a}u_a‖_μ. Zero by construction for fields from
/// `cbm_fields`; the explicit-fields variant exists for negative controls.
pub fn martingale_defect_of(
    fields: &CbmFields,
    system: &Arc<MechanicalSystem>,
    q: &DVector<f64>,
) -> Result<f64> {
    let (g, _) = system.metric.eval_spd(q)?;
    let correction = projected_frame_laplacian_drift(system, q)?;
    let v = fields.drift_field.eval(q) + 0.5 * fields.sigma * fields.sigma * correction;
    Ok(inner(&g, &v, &v).sqrt())
}

pub fn martingale_defect(
    system: &Arc<MechanicalSystem>,
    sigma: f64,
    q: &DVector<f64>,
) -> Result<f64> {
    let fields = cbm_fields(system, sigma)?;
    martingale_defect_of(&fields, system, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn flat_unconstrained(n: usize) -> Arc<MechanicalSystem> {
        Arc::new(MechanicalSystem::unconstrained(
            "flat",
            MetricField::euclidean(n),
        ))
    }

    #[test]
    fn trivial_constraints_give_identity_frame() {
        let sys = flat_unconstrained(3);
        let frame = adapted_frame(&sys, &dv(&[0.0, 1.0, -2.0]), None).unwrap();
        assert!((&frame.tangent_cols - DMatrix::identity(3, 3)).abs().max() < 1e-12);
        assert_eq!(frame.normal_cols.ncols(), 0);
    }

    /// x-y plane constrained by dy − q¹ dx = 0 in 3-D: a simple
    /// non-integrable-looking test distribution.
    fn tilted_plane_system() -> Arc<MechanicalSystem> {
        let metric = MetricField::euclidean(3);
        let dist = Distribution::new(2, |q| {
            DMatrix::from_row_slice(1, 3, &[-q[0], 1.0, 0.3])
        });
        let mut sys = MechanicalSystem::unconstrained("tilted", metric);
        sys.distribution = Some(dist);
        Arc::new(sys)
    }

    #[test]
    fn adapted_frame_annihilates_constraints_and_is_orthonormal() {
        let sys = tilted_plane_system();
        for k in 0..20 {
            let t = k as f64 * 0.37 - 2.0;
            let q = dv(&[t, 0.5 * t, -t]);
            let frame = adapted_frame(&sys, &q, None).unwrap();
            let a = sys.distribution.as_ref().unwrap().forms(&q);
            assert!((&a * &frame.tangent_cols).abs().max() < 1e-10);
            let g = sys.metric.eval(&q);
            let cross = frame.tangent_cols.transpose() * &g * &frame.normal_cols;
            assert!(cross.abs().max() < 1e-10);
            let gram_t = frame.tangent_cols.transpose() * &g * &frame.tangent_cols;
            assert!((gram_t - DMatrix::identity(2, 2)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn adapted_frame_detects_rank_drop() {
        let metric = MetricField::euclidean(2);
        let dist = Distribution::new(1, |_q| DMatrix::from_row_slice(1, 2, &[0.0, 0.0]));
        let mut sys = MechanicalSystem::unconstrained("degenerate", metric);
        sys.distribution = Some(dist);
        let err = adapted_frame(&Arc::new(sys), &dv(&[0.0, 0.0]), None).unwrap_err();
        assert!(matches!(err, Error::RankDrop(_)));
    }

    #[test]
    fn nh_covariant_constant_field_unconstrained_flat_is_zero() {
        let sys = flat_unconstrained(2);
        let x = VectorFieldFn::constant(dv(&[1.0, 1.0]));
        let y = VectorFieldFn::constant(dv(&[0.5, -0.5]));
        let d = nh_covariant(&sys, &x, &y, &dv(&[0.2, 0.3])).unwrap();
        assert!(d.norm() < 1e-9);
    }

    #[test]
    fn nh_covariant_rejects_fields_outside_distribution() {
        let sys = tilted_plane_system();
        let q = dv(&[1.0, 0.0, 0.0]);
        // (0,1,0) is not in ker(−q¹ dx + dy + 0.3 dz) at q¹=1
        let y = VectorFieldFn::constant(dv(&[0.0, 1.0, 0.0]));
        let x = VectorFieldFn::constant(dv(&[1.0, 1.0, 0.0]));
        assert!(matches!(
            nh_covariant(&sys, &x, &y, &q),
            Err(Error::NotInDistribution(_))
        ));
    }

    #[test]
    fn cbm_fields_unconstrained_flat_is_scaled_standard_basis() {
        let sys = flat_unconstrained(3);
        let fields = cbm_fields(&sys, 0.7).unwrap();
        let q = dv(&[1.0, -1.0, 0.5]);
        for (a, f) in fields.diffusion_fields.iter().enumerate() {
            let v = f.eval(&q);
            for i in 0..3 {
                let expect = if i == a { 0.7 } else { 0.0 };
                assert!((v[i] - expect).abs() < 1e-12);
            }
        }
        assert!(fields.drift_field.eval(&q).norm() < 1e-9);
    }

    #[test]
    fn diffusion_fields_lie_in_distribution() {
        let sys = tilted_plane_system();
        let fields = cbm_fields(&sys, 1.3).unwrap();
        for k in 0..10 {
            let q = dv(&[0.3 * k as f64, -0.1, 0.2]);
            let a = sys.distribution.as_ref().unwrap().forms(&q);
            for f in &fields.diffusion_fields {
                assert!((&a * f.eval(&q)).abs().max() < 1e-9);
            }
        }
    }

    #[test]
    fn martingale_defect_vanishes_by_construction() {
        let sys = tilted_plane_system();
        for k in 0..5 {
            let q = dv(&[0.4 * k as f64 - 1.0, 0.3, 0.1]);
            let d = martingale_defect(&sys, 1.1, &q).unwrap();
            assert!(d < 1e-9, "defect {d:.3e}");
        }
    }

    #[test]
    fn martingale_defect_detects_injected_drift() {
        let sys = tilted_plane_system();
        let sigma = 1.0;
        let mut fields = cbm_fields(&sys, sigma).unwrap();
        // negative control: inject +u₁ into the drift
        let u1 = fields.diffusion_fields[0].clone();
        let base = fields.drift_field.clone();
        fields.drift_field = VectorFieldFn::new(move |q| base.eval(q) + u1.eval(q));
        let q = dv(&[0.5, 0.2, -0.3]);
        let d = martingale_defect_of(&fields, &sys, &q).unwrap();
        assert!(d > 0.1, "defect {d:.3e} should see the injected field");
    }

    #[test]
    fn generator_agrees_for_two_seed_bases() {
        // Σ u_a(u_a f) − Σ (Π∇_{u_a}u_a) f is frame independent
        let sys = tilted_plane_system();
        let q = dv(&[0.4, -0.2, 0.6]);
        let f = |q: &DVector<f64>| (q[0] * q[1]).sin() + q[2] * q[2] * q[0];
        let h = 1e-4;

        let apply_generator = |seed: &DMatrix<f64>| -> f64 {
            let sys2 = {
                let mut s = (*sys).clone();
                let seed = seed.clone();
                s.seed_basis = Some(Arc::new(move |_q: &DVector<f64>| seed.clone()));
                Arc::new(s)
            };
            let fields = tangent_frame_fields(&sys2);
            let gq = sys2.metric.eval(&q);
            let frame = adapted_frame(&sys2, &q, None).unwrap();
            let mut acc = 0.0;
            for u in &fields {
                // u(u f) by nested central differences
                let df_along = |p: &DVector<f64>| {
                    let up = u.eval(p);
                    (f(&(p + h * &up)) - f(&(p - h * &up))) / (2.0 * h)
                };
                let uq = u.eval(&q);
                acc += (df_along(&(&q + h * &uq)) - df_along(&(&q - h * &uq))) / (2.0 * h);
                let du = covariant_derivative(&sys2.metric, u, u, &q, sys2.fd_step).unwrap();
                let pdu = project_onto_distribution(&gq, &du, &frame.tangent_cols).unwrap();
                acc -= (f(&(&q + h * &pdu)) - f(&(&q - h * &pdu))) / (2.0 * h);
            }
            acc
        };

        let seed_a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.4, 1.0, 0.0, 0.5]);
        let seed_b = DMatrix::from_row_slice(3, 2, &[0.2, 1.0, 1.0, -0.5, 0.1, 0.2]);
        let ga = apply_generator(&seed_a);
        let gb = apply_generator(&seed_b);
        assert!(
            (ga - gb).abs() < 1e-6,
            "generator differs between frames: {ga} vs {gb}"
        );
    }
}
