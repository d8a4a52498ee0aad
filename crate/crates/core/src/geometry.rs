//! Chart-based Riemannian primitives.
//!
//! Everything works numerically through user-supplied smooth field
//! callbacks in a single global chart: metric evaluation, Gram-Schmidt
//! orthonormalization in a metric, orthogonal projection onto a
//! distribution, Christoffel symbols, covariant derivatives and Lie
//! brackets via central differences.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Default central-difference step. Trigonometric metrics give ~1e-9
/// defects in double precision at this step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Condition-number ceiling on the Gram matrix before inputs count as
/// dependent.
pub const GRAM_COND_LIMIT: f64 = 1e12;

/// Point of the configuration space in chart coordinates.
///
/// Periodic coordinates are reduced to [0, 2π) only when serializing,
/// never mid-computation, so finite-difference stencils see no jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigPoint {
    pub coords: DVector<f64>,
    pub periodic: Vec<bool>,
}

impl ConfigPoint {
    pub fn new(coords: DVector<f64>, periodic: Vec<bool>) -> Result<Self> {
        if coords.len() != periodic.len() || coords.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "coords len {} vs periodic mask len {}",
                coords.len(),
                periodic.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(Self { coords, periodic })
    }

    pub fn from_slice(coords: &[f64], periodic: &[bool]) -> Result<Self> {
        Self::new(DVector::from_row_slice(coords), periodic.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Coordinates with the periodic entries reduced to [0, 2π).
    pub fn reduced_coords(&self) -> DVector<f64> {
        let mut out = self.coords.clone();
        for (i, p) in self.periodic.iter().enumerate() {
            if *p {
                out[i] = out[i].rem_euclid(TAU);
            }
        }
        out
    }
}

/// Smooth vector field given as a chart callback q ↦ ℝⁿ.
#[derive(Clone)]
pub struct VectorFieldFn {
    f: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
}

impl VectorFieldFn {
    pub fn new(f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }

    pub fn constant(v: DVector<f64>) -> Self {
        Self::new(move |_| v.clone())
    }

    pub fn eval(&self, q: &DVector<f64>) -> DVector<f64> {
        (self.f)(q)
    }
}

impl std::fmt::Debug for VectorFieldFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("VectorFieldFn")
    }
}

type MetricFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ChristoffelFn = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Riemannian metric as a chart callback q ↦ SPD n×n matrix.
///
/// An analytic Christoffel callback may be registered per system and takes
/// precedence over the finite-difference symbols.
#[derive(Clone)]
pub struct MetricField {
    pub dim: usize,
    eval: MetricFn,
    christoffel_analytic: Option<ChristoffelFn>,
}

impl MetricField {
    pub fn new(
        dim: usize,
        eval: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            eval: Arc::new(eval),
            christoffel_analytic: None,
        }
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(dim, move |_| DMatrix::identity(dim, dim))
    }

    pub fn with_analytic_christoffel(
        mut self,
        gamma: impl Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.christoffel_analytic = Some(Arc::new(gamma));
        self
    }

    pub fn eval(&self, q: &DVector<f64>) -> DMatrix<f64> {
        (self.eval)(q)
    }

    /// Metric at q, checked symmetric and SPD.
    pub fn eval_spd(&self, q: &DVector<f64>) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
        let g = self.eval(q);
        let asym = (&g - g.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(Error::NotSpd(format!("asymmetry {asym:.3e}")));
        }
        let chol = Cholesky::new(g.clone())
            .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?;
        Ok((g, chol))
    }
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MetricField(dim={})", self.dim)
    }
}

/// k tangent vectors at a base point, stored as matrix columns.
#[derive(Debug, Clone)]
pub struct Frame {
    pub base: ConfigPoint,
    pub columns: DMatrix<f64>,
}

/// μ-inner product of two vectors.
pub fn inner(metric: &DMatrix<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    (metric * w).dot(v)
}

/// Classical Gram-Schmidt in the metric `g`, columns in input order, with a
/// second re-orthogonalization pass (twice is enough for the mild
/// conditioning here, k ≤ 5).
///
/// The first output column stays parallel to the first input column.
pub fn orthonormalize(vectors: &DMatrix<f64>, metric: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = vectors.shape();
    if metric.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "vectors are {n}×{k}, metric is {}×{}",
            metric.nrows(),
            metric.ncols()
        )));
    }
    if Cholesky::new(metric.clone()).is_none() {
        return Err(Error::NotSpd("metric Cholesky failed".into()));
    }
    let gram = vectors.transpose() * metric * vectors;
    let eig = gram.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmin > 0.0) || lmax / lmin > GRAM_COND_LIMIT {
        return Err(Error::DegenerateInput(format!(
            "Gram condition number {:.3e}",
            if lmin > 0.0 { lmax / lmin } else { f64::INFINITY }
        )));
    }

    let mut q = vectors.clone();
    for _pass in 0..2 {
        for j in 0..k {
            let mut col = q.column(j).clone_owned();
            for i in 0..j {
                let qi = q.column(i).clone_owned();
                let proj = inner(metric, &col, &qi);
                col -= proj * &qi;
            }
            let norm = inner(metric, &col, &col).sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::DegenerateInput(format!(
                    "column {j} vanished during orthonormalization"
                )));
            }
            col /= norm;
            q.set_column(j, &col);
        }
    }
    Ok(q)
}

/// Orthogonal projection Πv = Σ_a μ(v, u_a) u_a onto the span of a
/// μ-orthonormal frame.
pub fn project_onto_distribution(
    metric: &DMatrix<f64>,
    v: &DVector<f64>,
    frame_cols: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let n = metric.nrows();
    if v.len() != n || frame_cols.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "projection: metric {n}×{n}, v len {}, frame rows {}",
            v.len(),
            frame_cols.nrows()
        )));
    }
    let mut out = DVector::zeros(n);
    for a in 0..frame_cols.ncols() {
        let ua = frame_cols.column(a).clone_owned();
        out += inner(metric, v, &ua) * ua;
    }
    Ok(out)
}

/// Christoffel symbols Γ^i_{jk} of the Levi-Civita connection,
/// `result[i][(j,k)]`, from central differences of the metric.
pub fn christoffel(
    metric: &MetricField,
    q: &DVector<f64>,
    fd_step: f64,
) -> Result<Vec<DMatrix<f64>>> {
    if let Some(gamma) = &metric.christoffel_analytic {
        return Ok(gamma(q));
    }
    if !(fd_step > 0.0) {
        return Err(Error::InvalidArgument("fd_step must be positive".into()));
    }
    let n = metric.dim;
    let (g, chol) = metric.eval_spd(q)?;
    // dg[l] = ∂_l g
    let mut dg = Vec::with_capacity(n);
    for l in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[l] += fd_step;
        qm[l] -= fd_step;
        let (gp, _) = metric.eval_spd(&qp)?;
        let (gm, _) = metric.eval_spd(&qm)?;
        dg.push((gp - gm) / (2.0 * fd_step));
    }
    let _ = g;
    let mut out = vec![DMatrix::zeros(n, n); n];
    // Γ^i_{jk} = ½ g^{il} (∂_j g_{lk} + ∂_k g_{lj} − ∂_l g_{jk})
    for j in 0..n {
        for k in j..n {
            let mut rhs = DVector::zeros(n);
            for l in 0..n {
                rhs[l] = 0.5 * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)]);
            }
            let gamma_jk = chol.solve(&rhs);
            for i in 0..n {
                out[i][(j, k)] = gamma_jk[i];
                out[i][(k, j)] = gamma_jk[i];
            }
        }
    }
    Ok(out)
}

/// Jacobian ∂Y^i/∂q^j of a vector field by central differences.
pub fn fd_jacobian(field: &VectorFieldFn, q: &DVector<f64>, fd_step: f64) -> DMatrix<f64> {
    let probe = field.eval(q);
    let n = q.len();
    let m = probe.len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[j] += fd_step;
        qm[j] -= fd_step;
        let col = (field.eval(&qp) - field.eval(&qm)) / (2.0 * fd_step);
        jac.set_column(j, &col);
    }
    jac
}

/// Levi-Civita covariant derivative (∇_X Y)(q) =
/// X^j ∂_j Y^i + Γ^i_{jk} X^j Y^k.
pub fn covariant_derivative(
    metric: &MetricField,
    x: &VectorFieldFn,
    y: &VectorFieldFn,
    q: &DVector<f64>,
    fd_step: f64,
) -> Result<DVector<f64>> {
    let n = metric.dim;
    let xq = x.eval(q);
    let yq = y.eval(q);
    if xq.len() != n || yq.len() != n {
        return Err(Error::DimensionMismatch(
            "field dimension does not match metric".into(),
        ));
    }
    let dy = fd_jacobian(y, q, fd_step);
    let mut out = &dy * &xq;
    let gamma = christoffel(metric, q, fd_step)?;
    for i in 0..n {
        out[i] += (&gamma[i] * &yq).dot(&xq);
    }
    Ok(out)
}

/// Lie bracket [X,Y]^i = X^j ∂_j Y^i − Y^j ∂_j X^i by central differences.
pub fn lie_bracket(
    x: &VectorFieldFn,
    y: &VectorFieldFn,
    q: &DVector<f64>,
    fd_step: f64,
) -> DVector<f64> {
    let xq = x.eval(q);
    let yq = y.eval(q);
    let dy = fd_jacobian(y, q, fd_step);
    let dx = fd_jacobian(x, q, fd_step);
    &dy * &xq - &dx * &yq
}
