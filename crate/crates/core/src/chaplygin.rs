//! Chaplygin reduction: horizontal lifts, the reduced metric on the shape
//! space, curvature–momentum pairing, the drift one-form β and drift vector
//! b = μ₀⁻¹β, and the preserved-measure / time-reversibility verdict.
//!
//! β in a μ₀-orthonormal frame (u_i) on the shape space M reads
//!     β(x)(u_x) = Σ_i ⟨ J(hl u_i), Curv^𝒜(hl u_x, hl u_i) ⟩,
//! with the curvature of the connection evaluated as 𝒜 applied to the
//! bracket of horizontal lifts. The reduced generator is ½Δ^{μ₀} + ½b; the
//! deterministic system has a preserved measure iff β is exact, iff the
//! reduced diffusion is symmetric (time-reversible when an equilibrium
//! distribution exists).

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::constraints::MechanicalSystem;
use crate::geometry::{inner, lie_bracket, orthonormalize, VectorFieldFn};
use crate::{Error, Result};

type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Principal-bundle data of a G-Chaplygin system in one chart: which
/// coordinates span the shape space M = Q/G, which span the group, the
/// connection one-form 𝒜 (rows are 𝔤-components) and the infinitesimal
/// generators of a 𝔤-basis.
#[derive(Clone)]
pub struct ChaplyginSplit {
    pub system: Arc<MechanicalSystem>,
    pub shape_idx: Vec<usize>,
    pub group_idx: Vec<usize>,
    connection: MatrixFn,
    pub generators: Vec<VectorFieldFn>,
}

impl std::fmt::Debug for ChaplyginSplit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ChaplyginSplit(shape={:?}, group={:?})",
            self.shape_idx, self.group_idx
        )
    }
}

impl ChaplyginSplit {
    /// Build and validate: the connection must reproduce the generators,
    /// 𝒜(ξ_Q) = ξ, at a handful of probe points.
    pub fn new(
        system: Arc<MechanicalSystem>,
        shape_idx: Vec<usize>,
        group_idx: Vec<usize>,
        connection: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        generators: Vec<VectorFieldFn>,
    ) -> Result<Self> {
        let n = system.dim;
        if shape_idx.len() + group_idx.len() != n {
            return Err(Error::DimensionMismatch(
                "shape and group indices must partition the chart".into(),
            ));
        }
        let split = Self {
            system,
            shape_idx,
            group_idx,
            connection: Arc::new(connection),
            generators,
        };
        let g = split.group_dim();
        for probe in 0..3 {
            let q = DVector::from_fn(n, |i, _| 0.2 + 0.31 * (i as f64) + 0.17 * (probe as f64));
            let a = split.connection_at(&q);
            if a.shape() != (g, n) {
                return Err(Error::DimensionMismatch(format!(
                    "connection form is {}×{}, expected {g}×{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            for (k, gen) in split.generators.iter().enumerate() {
                let reproduced = &a * gen.eval(&q);
                let mut expect = DVector::zeros(g);
                expect[k] = 1.0;
                if (reproduced - expect).abs().max() > 1e-9 {
                    return Err(Error::NotInvariant(format!(
                        "connection does not reproduce generator {k}"
                    )));
                }
            }
        }
        Ok(split)
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_idx.len()
    }

    pub fn group_dim(&self) -> usize {
        self.group_idx.len()
    }

    pub fn connection_at(&self, q: &DVector<f64>) -> DMatrix<f64> {
        (self.connection)(q)
    }

    /// Chart point with the given shape coordinates and group fill values.
    pub fn embed(&self, x: &DVector<f64>, group_fill: &[f64]) -> DVector<f64> {
        let mut q = DVector::zeros(self.system.dim);
        for (k, &i) in self.shape_idx.iter().enumerate() {
            q[i] = x[k];
        }
        for (k, &i) in self.group_idx.iter().enumerate() {
            q[i] = group_fill[k];
        }
        q
    }

    /// Shape components of a chart vector (T_qπ in coordinates).
    pub fn project_shape(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.shape_dim(), |k, _| v[self.shape_idx[k]])
    }

    /// Fundamental vector field ξ_Q(q) of a Lie-algebra vector ξ.
    pub fn generator_at(&self, q: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.system.dim);
        for (k, gen) in self.generators.iter().enumerate() {
            out += xi[k] * gen.eval(q);
        }
        out
    }

    /// Deterministic secondary group fill used by invariance checks.
    fn alternate_fill(&self) -> Vec<f64> {
        (0..self.group_dim())
            .map(|k| 0.37 + 0.53 * k as f64)
            .collect()
    }
}

/// Unique w ∈ T_qQ with 𝒜(q)w = 0 whose shape components equal `v_shape`.
pub fn horizontal_lift(
    split: &ChaplyginSplit,
    q: &DVector<f64>,
    v_shape: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = split.system.dim;
    let m = split.shape_dim();
    let g = split.group_dim();
    if v_shape.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "shape velocity has length {}, expected {m}",
            v_shape.len()
        )));
    }
    let a = split.connection_at(q);
    let mut lhs = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for row in 0..g {
        for col in 0..n {
            lhs[(row, col)] = a[(row, col)];
        }
    }
    for (k, &i) in split.shape_idx.iter().enumerate() {
        lhs[(g + k, i)] = 1.0;
        rhs[g + k] = v_shape[k];
    }
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::RankDrop("horizontal lift system is singular".into()))
}

/// Horizontal lifts of the shape coordinate fields ∂_a as an n×m matrix.
fn lift_matrix(split: &ChaplyginSplit, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m = split.shape_dim();
    let n = split.system.dim;
    let mut h = DMatrix::zeros(n, m);
    for a in 0..m {
        let mut e = DVector::zeros(m);
        e[a] = 1.0;
        h.set_column(a, &horizontal_lift(split, q, &e)?);
    }
    Ok(h)
}

/// Horizontal lift of a constant shape coordinate field as a vector field
/// on Q (needed to take brackets).
fn lifted_coordinate_field(split: &ChaplyginSplit, axis: usize) -> VectorFieldFn {
    let split = split.clone();
    VectorFieldFn::new(move |q| {
        let m = split.shape_dim();
        let mut e = DVector::zeros(m);
        e[axis] = 1.0;
        horizontal_lift(&split, q, &e)
            .unwrap_or_else(|_| DVector::from_element(split.system.dim, f64::NAN))
    })
}

/// Reduced metric (μ₀)_{ab} = μ(hl ∂_a, hl ∂_b) at any lift of x; checked
/// to be independent of the choice of lift.
pub fn reduced_metric(split: &ChaplyginSplit, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let g0 = reduced_metric_at_fill(split, x, &vec![0.0; split.group_dim()])?;
    let g1 = reduced_metric_at_fill(split, x, &split.alternate_fill())?;
    let scale = 1.0 + g0.abs().max();
    if (&g0 - &g1).abs().max() > 1e-9 * scale {
        return Err(Error::NotInvariant(format!(
            "reduced metric depends on the group coordinates: Δ = {:.3e}",
            (&g0 - &g1).abs().max()
        )));
    }
    Ok(g0)
}

fn reduced_metric_at_fill(
    split: &ChaplyginSplit,
    x: &DVector<f64>,
    fill: &[f64],
) -> Result<DMatrix<f64>> {
    let q = split.embed(x, fill);
    let (g, _) = split.system.metric.eval_spd(&q)?;
    let h = lift_matrix(split, &q)?;
    Ok(h.transpose() * g * h)
}

/// Momentum pairing ⟨J_G(v_q), ξ⟩ = μ(q)(v, ξ_Q(q)).
pub fn momentum_pairing(
    split: &ChaplyginSplit,
    q: &DVector<f64>,
    v: &DVector<f64>,
    xi: &DVector<f64>,
) -> f64 {
    let g = split.system.metric.eval(q);
    let zeta = split.generator_at(q, xi);
    inner(&g, v, &zeta)
}

/// Curvature table K_{ab} = 𝒜([hl ∂_a, hl ∂_b])(q) ∈ 𝔤 over shape-axis
/// pairs, antisymmetrized.
fn curvature_table(split: &ChaplyginSplit, q: &DVector<f64>) -> Result<Vec<Vec<DVector<f64>>>> {
    let m = split.shape_dim();
    let g = split.group_dim();
    let a = split.connection_at(q);
    let fields: Vec<VectorFieldFn> = (0..m).map(|i| lifted_coordinate_field(split, i)).collect();
    let mut table = vec![vec![DVector::zeros(g); m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let bracket = lie_bracket(&fields[i], &fields[j], q, split.system.fd_step);
            if bracket.iter().any(|x| !x.is_finite()) {
                return Err(Error::RankDrop(
                    "horizontal lift failed inside curvature stencil".into(),
                ));
            }
            let k = &a * bracket;
            table[i][j] = k.clone();
            table[j][i] = -k;
        }
    }
    Ok(table)
}

/// Curvature Curv^𝒜(X, Y) ∈ 𝔤 of the connection, for X, Y given in chart
/// components (only their shape parts enter; vertical arguments give 0).
pub fn curvature(
    split: &ChaplyginSplit,
    q: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let table = curvature_table(split, q)?;
    let xs = split.project_shape(x);
    let ys = split.project_shape(y);
    let m = split.shape_dim();
    let mut out = DVector::zeros(split.group_dim());
    for a in 0..m {
        for b in 0..m {
            if a != b {
                out += xs[a] * ys[b] * &table[a][b];
            }
        }
    }
    Ok(out)
}

/// β components in shape coordinates at one designated lift, without the
/// invariance cross-checks. `frame_rotation` optionally replaces the
/// μ₀-orthonormal frame U by U·O for a Euclidean-orthogonal O.
fn beta_at_fill(
    split: &ChaplyginSplit,
    x: &DVector<f64>,
    fill: &[f64],
    frame_rotation: Option<&DMatrix<f64>>,
) -> Result<DVector<f64>> {
    let m = split.shape_dim();
    let q = split.embed(x, fill);
    let (gq, _) = split.system.metric.eval_spd(&q)?;
    let h = lift_matrix(split, &q)?;
    let mu0 = h.transpose() * &gq * &h;
    let mut frame = orthonormalize(&DMatrix::identity(m, m), &mu0)?;
    if let Some(o) = frame_rotation {
        frame *= o;
    }
    let table = curvature_table(split, &q)?;
    let mut beta = DVector::zeros(m);
    for i in 0..m {
        let ui = frame.column(i).clone_owned();
        let hl_ui = &h * &ui;
        for b in 0..m {
            // Curv(hl ∂_b, hl u_i) = Σ_a u_i^a K_{ba}
            let mut curv = DVector::zeros(split.group_dim());
            for a in 0..m {
                if a != b {
                    curv += ui[a] * &table[b][a];
                }
            }
            let zeta = split.generator_at(&q, &curv);
            beta[b] += inner(&gq, &hl_ui, &zeta);
        }
    }
    Ok(beta)
}

/// Drift one-form β at a shape point, cross-checked for independence of
/// the lift and of the orthonormal frame.
pub fn beta_at(split: &ChaplyginSplit, x: &DVector<f64>) -> Result<DVector<f64>> {
    let m = split.shape_dim();
    let zero_fill = vec![0.0; split.group_dim()];
    let b0 = beta_at_fill(split, x, &zero_fill, None)?;
    let b1 = beta_at_fill(split, x, &split.alternate_fill(), None)?;
    let scale = 1.0 + b0.abs().max();
    if (&b0 - &b1).abs().max() > 1e-8 * scale {
        return Err(Error::NotInvariant(format!(
            "β depends on the lift: Δ = {:.3e}",
            (&b0 - &b1).abs().max()
        )));
    }
    if m >= 2 {
        // rotate the frame in the (0,1) plane; β is a frame-sum invariant
        let mut rot = DMatrix::identity(m, m);
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        rot[(0, 0)] = c;
        rot[(0, 1)] = -s;
        rot[(1, 0)] = s;
        rot[(1, 1)] = c;
        let b2 = beta_at_fill(split, x, &zero_fill, Some(&rot))?;
        if (&b0 - &b2).abs().max() > 1e-8 * scale {
            return Err(Error::NotInvariant(format!(
                "β depends on the frame: Δ = {:.3e}",
                (&b0 - &b2).abs().max()
            )));
        }
    }
    Ok(b0)
}

/// Drift vector b = μ₀⁻¹ β at a shape point.
pub fn drift_b(split: &ChaplyginSplit, x: &DVector<f64>) -> Result<DVector<f64>> {
    let beta = beta_at(split, x)?;
    solve_mu0(split, x, &beta)
}

fn solve_mu0(split: &ChaplyginSplit, x: &DVector<f64>, beta: &DVector<f64>) -> Result<DVector<f64>> {
    let mu0 = reduced_metric(split, x)?;
    let chol = Cholesky::new(mu0).ok_or_else(|| Error::NotSpd("reduced metric".into()))?;
    Ok(chol.solve(beta))
}

/// Dual-route drift: b = Σ_a (∇^{μ₀}_{u_a}u_a − ∇^M_{u_a}u_a) computed
/// entirely through covariant derivatives, independent of the curvature
/// route. Kept public as the second leg of the consistency check.
pub fn drift_b_connection_route(split: &ChaplyginSplit, x: &DVector<f64>) -> Result<DVector<f64>> {
    use crate::constraints::adapted_frame;
    use crate::geometry::{covariant_derivative, project_onto_distribution, MetricField};

    let m = split.shape_dim();
    let split_c = split.clone();
    let mu0_field = MetricField::new(m, move |xx| {
        reduced_metric_at_fill(&split_c, xx, &vec![0.0; split_c.group_dim()])
            .unwrap_or_else(|_| DMatrix::from_element(m, m, f64::NAN))
    });

    // the frame as smooth fields on M (Gram-Schmidt of coordinate fields)
    let frame_field = |col: usize| {
        let split = split.clone();
        VectorFieldFn::new(move |xx: &DVector<f64>| {
            let mu = reduced_metric_at_fill(&split, xx, &vec![0.0; split.group_dim()])
                .unwrap_or_else(|_| DMatrix::from_element(xx.len(), xx.len(), f64::NAN));
            match orthonormalize(&DMatrix::identity(xx.len(), xx.len()), &mu) {
                Ok(f) => f.column(col).clone_owned(),
                Err(_) => DVector::from_element(xx.len(), f64::NAN),
            }
        })
    };

    let q = split.embed(x, &vec![0.0; split.group_dim()]);
    let (gq, _) = split.system.metric.eval_spd(&q)?;
    let qframe = adapted_frame(&split.system, &q, None)?;

    let mut b = DVector::zeros(m);
    let fd = split.system.fd_step;
    for a in 0..m {
        let ua = frame_field(a);
        // ∇^{μ₀}_{u_a}u_a on (M, μ₀)
        let nabla_m0 = covariant_derivative(&mu0_field, &ua, &ua, x, fd)?;
        // ∇^M_{u_a}u_a = Tπ(Π ∇^μ_{hl u_a} hl u_a)
        let split2 = split.clone();
        let ua2 = ua.clone();
        let lifted = VectorFieldFn::new(move |qq: &DVector<f64>| {
            let xx = split2.project_shape(qq);
            let v = ua2.eval(&xx);
            horizontal_lift(&split2, qq, &v)
                .unwrap_or_else(|_| DVector::from_element(qq.len(), f64::NAN))
        });
        let nabla_q = covariant_derivative(&split.system.metric, &lifted, &lifted, &q, fd)?;
        let projected = project_onto_distribution(&gq, &nabla_q, &qframe.tangent_cols)?;
        b += nabla_m0 - split.project_shape(&projected);
    }
    Ok(b)
}

/// Preserved-measure verdict for the reduced system.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureVerdict {
    /// β = dF: preserved measure with density N = e^F; reduced diffusion
    /// symmetric, hence time-reversible when an equilibrium exists.
    Exact,
    /// dβ ≈ 0 but some period over a generating loop is non-zero: no
    /// smooth preserved measure, diffusion not time-reversible.
    ClosedNotExact,
    NotClosed,
}

impl std::fmt::Display for MeasureVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeasureVerdict::Exact => write!(f, "EXACT"),
            MeasureVerdict::ClosedNotExact => write!(f, "CLOSED_NOT_EXACT"),
            MeasureVerdict::NotClosed => write!(f, "NOT_CLOSED"),
        }
    }
}

/// Sampled drift data over a shape-space grid plus the measure verdict.
#[derive(Debug, Clone)]
pub struct MeasureReport {
    pub resolution: usize,
    pub shape_dim: usize,
    /// row-major grid nodes, spacing 2π/resolution per axis
    pub points: Vec<DVector<f64>>,
    pub beta: Vec<DVector<f64>>,
    pub b: Vec<DVector<f64>>,
    /// max_{a<b} |(dβ)_{ab}| per node
    pub dbeta_norm: Vec<f64>,
    /// ∮β over each generating torus loop
    pub periods: Vec<f64>,
    pub verdict: MeasureVerdict,
    /// potential F per node when verdict is EXACT (β = dF, density e^F)
    pub potential: Option<Vec<f64>>,
}

/// Closedness threshold relative to the sampled β scale.
fn closed_tol(beta_scale: f64) -> f64 {
    (1e-5 * beta_scale).max(1e-7)
}

fn grid_points(m: usize, k: usize) -> Vec<DVector<f64>> {
    let h = TAU / k as f64;
    let total = k.pow(m as u32);
    let mut pts = Vec::with_capacity(total);
    for flat in 0..total {
        let mut idx = flat;
        let mut x = DVector::zeros(m);
        for a in (0..m).rev() {
            x[a] = (idx % k) as f64 * h;
            idx /= k;
        }
        pts.push(x);
    }
    pts
}

fn flat_index(idx: &[usize], k: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * k + i)
}

/// Sample β over the k^m torus grid; returns (β values, max |dβ| per node,
/// global max |dβ|, global max |β|).
fn sample_grid(
    beta_fn: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    m: usize,
    k: usize,
) -> Result<(Vec<DVector<f64>>, Vec<f64>, f64, f64)> {
    let pts = grid_points(m, k);
    let mut values = Vec::with_capacity(pts.len());
    for p in &pts {
        values.push(beta_fn(p)?);
    }
    let h = TAU / k as f64;
    let mut dnorm = vec![0.0f64; pts.len()];
    let mut idx = vec![0usize; m];
    let mut beta_max = 0.0f64;
    for v in &values {
        beta_max = beta_max.max(v.abs().max());
    }
    let mut dmax = 0.0f64;
    for flat in 0..pts.len() {
        // decode flat index
        let mut rem = flat;
        for a in (0..m).rev() {
            idx[a] = rem % k;
            rem /= k;
        }
        let mut local = 0.0f64;
        for a in 0..m {
            for b in (a + 1)..m {
                // ∂_a β_b − ∂_b β_a with periodic wrap-around
                let mut ip = idx.clone();
                let mut im = idx.clone();
                ip[a] = (idx[a] + 1) % k;
                im[a] = (idx[a] + k - 1) % k;
                let da_bb = (values[flat_index(&ip, k)][b] - values[flat_index(&im, k)][b])
                    / (2.0 * h);
                let mut jp = idx.clone();
                let mut jm = idx.clone();
                jp[b] = (idx[b] + 1) % k;
                jm[b] = (idx[b] + k - 1) % k;
                let db_ba = (values[flat_index(&jp, k)][a] - values[flat_index(&jm, k)][a])
                    / (2.0 * h);
                local = local.max((da_bb - db_ba).abs());
            }
        }
        dnorm[flat] = local;
        dmax = dmax.max(local);
    }
    Ok((values, dnorm, dmax, beta_max))
}

/// Decide exactness of a one-form sampled on the m-torus.
///
/// Closedness is judged by FD-antisymmetrized derivatives at resolutions k
/// and 2k (GridTooCoarse when they disagree by more than 50%); exactness
/// additionally requires vanishing periods over the declared generating
/// loops (composite trapezoid, spectrally accurate for periodic
/// integrands). When exact, the potential F is line-integrated from the
/// origin along axis-aligned grid paths.
pub fn measure_test_with(
    beta_fn: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    mu0_fn: Option<&dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>>>,
    m: usize,
    resolution: usize,
    loops: &[usize],
) -> Result<MeasureReport> {
    if resolution < 4 {
        return Err(Error::InvalidArgument("grid resolution must be ≥ 4".into()));
    }
    let k = resolution;
    let (values, dnorm, dmax_k, beta_max) = sample_grid(beta_fn, m, k)?;
    let (_, _, dmax_2k, beta_max_2) = sample_grid(beta_fn, m, 2 * k)?;
    let scale = beta_max.max(beta_max_2);

    let floor = 1e-9 * (1.0 + scale);
    if dmax_k.max(dmax_2k) > floor {
        let spread = (dmax_k - dmax_2k).abs() / dmax_k.max(dmax_2k);
        if spread > 0.5 {
            return Err(Error::GridTooCoarse(format!(
                "max|dβ| moves from {dmax_k:.3e} (k={k}) to {dmax_2k:.3e} (k={})",
                2 * k
            )));
        }
    }

    let tol = closed_tol(scale);
    let closed = dmax_k <= tol && dmax_2k <= tol;

    // periods over the generating loops through the origin
    let h = TAU / k as f64;
    let mut periods = Vec::with_capacity(loops.len());
    for &axis in loops {
        if axis >= m {
            return Err(Error::InvalidArgument(format!("loop axis {axis} out of range")));
        }
        let mut acc = 0.0;
        for i in 0..k {
            let mut idx = vec![0usize; m];
            idx[axis] = i;
            acc += values[flat_index(&idx, k)][axis] * h;
        }
        periods.push(acc);
    }

    let verdict = if !closed {
        MeasureVerdict::NotClosed
    } else if periods.iter().all(|p| p.abs() < 1e-6 * TAU) {
        MeasureVerdict::Exact
    } else {
        MeasureVerdict::ClosedNotExact
    };

    // potential by cumulative Simpson along axis-aligned grid paths:
    // 0 → x₁ along axis 0, then axis 1 at fixed x₁, ...
    let potential = if verdict == MeasureVerdict::Exact {
        let pts = grid_points(m, k);
        let mut f = vec![0.0f64; pts.len()];
        let mut idx = vec![0usize; m];
        for flat in 0..pts.len() {
            let mut rem = flat;
            for a in (0..m).rev() {
                idx[a] = rem % k;
                rem /= k;
            }
            let mut acc = 0.0;
            let mut cursor = vec![0usize; m];
            for a in 0..m {
                if idx[a] > 0 {
                    let samples: Vec<f64> = (0..=idx[a])
                        .map(|step| {
                            let mut node = cursor.clone();
                            node[a] = step;
                            values[flat_index(&node, k)][a]
                        })
                        .collect();
                    acc += *crate::quadrature::cumulative_simpson(&samples, h)
                        .last()
                        .unwrap();
                }
                cursor[a] = idx[a];
            }
            f[flat] = acc;
        }
        Some(f)
    } else {
        None
    };

    let pts = grid_points(m, k);
    let b = match mu0_fn {
        Some(mf) => {
            let mut out = Vec::with_capacity(pts.len());
            for (p, beta) in pts.iter().zip(values.iter()) {
                let mu0 = mf(p)?;
                let chol =
                    Cholesky::new(mu0).ok_or_else(|| Error::NotSpd("reduced metric".into()))?;
                out.push(chol.solve(beta));
            }
            out
        }
        None => values.clone(),
    };

    Ok(MeasureReport {
        resolution: k,
        shape_dim: m,
        points: pts,
        beta: values,
        b,
        dbeta_norm: dnorm,
        periods,
        verdict,
        potential,
    })
}

/// Measure test for a Chaplygin split: β sampled through the curvature
/// pipeline (spot-checked for lift/frame invariance at three nodes), b by
/// the reduced-metric solve.
pub fn measure_test(
    split: &ChaplyginSplit,
    resolution: usize,
    loops: &[usize],
) -> Result<MeasureReport> {
    let m = split.shape_dim();
    // invariance spot checks (the full checked route at every grid node
    // would triple the cost for no extra information)
    for probe in 0..3 {
        let x = DVector::from_fn(m, |a, _| 0.4 + 1.1 * a as f64 + 0.7 * probe as f64);
        beta_at(split, &x)?;
    }
    let zero_fill = vec![0.0; split.group_dim()];
    let split_b = split.clone();
    let fill_b = zero_fill.clone();
    let beta_fn = move |x: &DVector<f64>| beta_at_fill(&split_b, x, &fill_b, None);
    let split_m = split.clone();
    let mu0_fn = move |x: &DVector<f64>| reduced_metric_at_fill(&split_m, x, &zero_fill);
    measure_test_with(&beta_fn, Some(&mu0_fn), m, resolution, loops)
}
