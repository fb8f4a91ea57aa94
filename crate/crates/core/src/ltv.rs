//! Finite-horizon linear time-varying models and their lifted
//! block-operator form.
//!
//! A system is a sequence of `(A_t, B_t, C_t)` triples over a horizon of
//! `T` steps. Lifting stacks trajectories into single vectors and turns
//! the dynamics into block matrices acting on them: the state equation
//! becomes `x = ZA·x + ZB·u + w`, with `w` holding the initial condition
//! in its first block followed by the process noise, and the measurement
//! equation becomes `y = C·x + e`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Problem dimensions shared by every lifted object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    /// Number of time steps `T`.
    pub horizon: usize,
    /// State dimension per step.
    pub state: usize,
    /// Input dimension per step.
    pub input: usize,
    /// Measurement dimension per step.
    pub meas: usize,
}

impl Dims {
    pub fn state_total(&self) -> usize {
        self.state * self.horizon
    }

    pub fn input_total(&self) -> usize {
        self.input * self.horizon
    }

    pub fn meas_total(&self) -> usize {
        self.meas * self.horizon
    }

    /// Rows of the stacked `[x; u]` trajectory vector.
    pub fn traj_total(&self) -> usize {
        self.state_total() + self.input_total()
    }

    /// Rows of the stacked `[w; e]` noise vector.
    pub fn noise_total(&self) -> usize {
        self.state_total() + self.meas_total()
    }
}

/// A partially observed discrete-time LTV system over a finite horizon.
///
/// Immutable after construction; all sequences have length `T` and every
/// matrix matches the declared dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct LtvSystem {
    dims: Dims,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
}

impl LtvSystem {
    /// Builds a system from matrix sequences, validating shapes and
    /// finiteness. The horizon is the common sequence length.
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>, c: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() || a.len() != c.len() {
            return Err(Error::DimensionMismatch {
                what: "system matrix sequences",
                expected: "equal nonzero lengths".into(),
                got: format!("|A|={}, |B|={}, |C|={}", a.len(), b.len(), c.len()),
            });
        }
        let horizon = a.len();
        let state = a[0].nrows();
        let input = b[0].ncols();
        let meas = c[0].nrows();
        if state == 0 || input == 0 || meas == 0 {
            return Err(Error::DimensionMismatch {
                what: "system dimensions",
                expected: "positive state/input/measurement dimensions".into(),
                got: format!("d_x={state}, d_u={input}, d_y={meas}"),
            });
        }
        for t in 0..horizon {
            let ok = a[t].shape() == (state, state)
                && b[t].shape() == (state, input)
                && c[t].shape() == (meas, state);
            if !ok {
                return Err(Error::DimensionMismatch {
                    what: "system matrices",
                    expected: format!(
                        "A_t {state}x{state}, B_t {state}x{input}, C_t {meas}x{state}"
                    ),
                    got: format!(
                        "t={t}: A {:?}, B {:?}, C {:?}",
                        a[t].shape(),
                        b[t].shape(),
                        c[t].shape()
                    ),
                });
            }
            if !(linalg::all_finite(&a[t])
                && linalg::all_finite(&b[t])
                && linalg::all_finite(&c[t]))
            {
                return Err(Error::NonFiniteEntry {
                    what: "system matrices",
                });
            }
        }
        let dims = Dims {
            horizon,
            state,
            input,
            meas,
        };
        Ok(Self { dims, a, b, c })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn horizon(&self) -> usize {
        self.dims.horizon
    }

    pub fn a(&self, t: usize) -> &DMatrix<f64> {
        &self.a[t]
    }

    pub fn b(&self, t: usize) -> &DMatrix<f64> {
        &self.b[t]
    }

    pub fn c(&self, t: usize) -> &DMatrix<f64> {
        &self.c[t]
    }
}

/// The three-state synthetic benchmark system. `rho` scales the state
/// matrix and equals its spectral radius; the two-row measurement matrix
/// alternates between the selector of state coordinates (1,2) at even
/// steps and coordinates (2,3) at odd steps (0-based time).
pub fn build_synthetic_system(rho: f64, horizon: usize) -> Result<LtvSystem> {
    if horizon < 2 {
        return Err(Error::InvalidHorizon {
            min: 2,
            got: horizon,
        });
    }
    if !rho.is_finite() {
        return Err(Error::NonFiniteEntry {
            what: "spectral scale",
        });
    }
    let a_base = DMatrix::from_row_slice(3, 3, &[0.7, 0.2, 0.0, 0.3, 0.7, -0.1, 0.0, -0.2, 0.8]);
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 2.0, 0.3, 1.5, 0.5]);
    let c_even = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let c_odd = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let a_seq = vec![&a_base * rho; horizon];
    let b_seq = vec![b; horizon];
    let c_seq = (0..horizon)
        .map(|t| {
            if t % 2 == 0 {
                c_even.clone()
            } else {
                c_odd.clone()
            }
        })
        .collect();
    LtvSystem::new(a_seq, b_seq, c_seq)
}

/// The hovering-quadrotor benchmark: double-integrator position/velocity
/// dynamics with roll, pitch, and thrust inputs. GPS position fixes
/// arrive every third step (t = 0, 3, 6, ...); all other steps measure
/// velocity.
pub fn build_quadrotor_system(horizon: usize) -> Result<LtvSystem> {
    if horizon < 2 {
        return Err(Error::InvalidHorizon {
            min: 2,
            got: horizon,
        });
    }
    let mut a = DMatrix::identity(6, 6);
    a[(0, 3)] = 0.1;
    a[(1, 4)] = 0.1;
    a[(2, 5)] = 0.1;
    let mut b = DMatrix::zeros(6, 3);
    b[(0, 0)] = -4.91 / 100.0;
    b[(1, 1)] = 4.91 / 100.0;
    b[(2, 2)] = 1.0 / 200.0;
    b[(3, 0)] = -98.1 / 100.0;
    b[(4, 1)] = 98.1 / 100.0;
    b[(5, 2)] = 1.0 / 10.0;
    let mut c_gps = DMatrix::zeros(3, 6);
    let mut c_imu = DMatrix::zeros(3, 6);
    for i in 0..3 {
        c_gps[(i, i)] = 1.0;
        c_imu[(i, i + 3)] = 1.0;
    }
    let a_seq = vec![a; horizon];
    let b_seq = vec![b; horizon];
    let c_seq = (0..horizon)
        .map(|t| {
            if t % 3 == 0 {
                c_gps.clone()
            } else {
                c_imu.clone()
            }
        })
        .collect();
    LtvSystem::new(a_seq, b_seq, c_seq)
}

/// Lifted block-operator form of an [`LtvSystem`].
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedSystem {
    dims: Dims,
    cal_a: DMatrix<f64>,
    cal_b: DMatrix<f64>,
    cal_c: DMatrix<f64>,
    za: DMatrix<f64>,
    zb: DMatrix<f64>,
}

impl LiftedSystem {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// blkdiag(A_0, ..., A_{T-2}, 0).
    pub fn cal_a(&self) -> &DMatrix<f64> {
        &self.cal_a
    }

    /// blkdiag(B_0, ..., B_{T-2}, 0).
    pub fn cal_b(&self) -> &DMatrix<f64> {
        &self.cal_b
    }

    /// blkdiag(C_0, ..., C_{T-1}).
    pub fn cal_c(&self) -> &DMatrix<f64> {
        &self.cal_c
    }

    /// The downshifted state operator Z·A (strictly block-lower).
    pub fn za(&self) -> &DMatrix<f64> {
        &self.za
    }

    /// The downshifted input operator Z·B (strictly block-lower).
    pub fn zb(&self) -> &DMatrix<f64> {
        &self.zb
    }

    /// `I - ZA`, the unit block-lower operator mapping states to
    /// noise-plus-input excitations.
    pub fn i_minus_za(&self) -> DMatrix<f64> {
        DMatrix::identity(self.za.nrows(), self.za.ncols()) - &self.za
    }
}

/// Builds the lifted operators of a system.
pub fn lift(system: &LtvSystem) -> LiftedSystem {
    let dims = system.dims();
    let (t_len, dx, du, dy) = (dims.horizon, dims.state, dims.input, dims.meas);
    let nx = dims.state_total();
    let nu = dims.input_total();
    let ny = dims.meas_total();

    let mut cal_a = DMatrix::zeros(nx, nx);
    let mut cal_b = DMatrix::zeros(nx, nu);
    let mut cal_c = DMatrix::zeros(ny, nx);
    // The last diagonal block of calA and calB stays zero: the dynamics
    // at step T-1 produce no state inside the horizon.
    for t in 0..t_len.saturating_sub(1) {
        cal_a
            .view_mut((t * dx, t * dx), (dx, dx))
            .copy_from(system.a(t));
        cal_b
            .view_mut((t * dx, t * du), (dx, du))
            .copy_from(system.b(t));
    }
    for t in 0..t_len {
        cal_c
            .view_mut((t * dy, t * dx), (dy, dx))
            .copy_from(system.c(t));
    }

    let mut za = DMatrix::zeros(nx, nx);
    let mut zb = DMatrix::zeros(nx, nu);
    for t in 0..t_len.saturating_sub(1) {
        za.view_mut(((t + 1) * dx, t * dx), (dx, dx))
            .copy_from(system.a(t));
        zb.view_mut(((t + 1) * dx, t * du), (dx, du))
            .copy_from(system.b(t));
    }

    LiftedSystem {
        dims,
        cal_a,
        cal_b,
        cal_c,
        za,
        zb,
    }
}

/// Lifted quadratic cost `x'Qx + u'Ru` with its block-diagonal operator
/// `D = blkdiag(Q, R)` and symmetric PSD square root.
#[derive(Clone, Debug)]
pub struct CostOperator {
    dims: Dims,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    d_sqrt: DMatrix<f64>,
}

impl CostOperator {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Lifted state weight (d_x·T square).
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Lifted input weight (d_u·T square).
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// blkdiag(Q, R).
    pub fn d(&self) -> DMatrix<f64> {
        let n = self.q.nrows() + self.r.nrows();
        let mut d = DMatrix::zeros(n, n);
        d.view_mut((0, 0), self.q.shape()).copy_from(&self.q);
        d.view_mut(self.q.shape(), self.r.shape())
            .copy_from(&self.r);
        d
    }

    /// Symmetric PSD square root of `D`.
    pub fn d_sqrt(&self) -> &DMatrix<f64> {
        &self.d_sqrt
    }

    /// Quadratic form value `x'Qx + u'Ru`.
    pub fn evaluate(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * x)[(0, 0)] + (u.transpose() * &self.r * u)[(0, 0)]
    }
}

/// Builds a [`CostOperator`] from per-step or already-lifted weights.
///
/// A `d_x`-square `q_step` is tiled `T` times along the diagonal (same
/// for `r_step`); full `d_x·T`-square inputs are taken as lifted weights
/// directly. Asymmetric inputs are symmetrized. The state weight must be
/// PSD and the input weight PD after lifting.
pub fn build_cost(
    q_step: &DMatrix<f64>,
    r_step: &DMatrix<f64>,
    dims: Dims,
) -> Result<CostOperator> {
    let q = tile_weight(q_step, dims.state, dims.horizon, "state weight")?;
    let r = tile_weight(r_step, dims.input, dims.horizon, "input weight")?;

    let q = linalg::symmetrize(&q);
    let r = linalg::symmetrize(&r);

    let q_min = linalg::min_eigenvalue(&q);
    let q_scale = linalg::max_eigenvalue(&q).abs().max(1.0);
    if q_min < -1e-10 * q_scale {
        return Err(Error::IndefiniteStateWeight { min_eig: q_min });
    }
    let r_min = linalg::min_eigenvalue(&r);
    if r_min <= 0.0 {
        return Err(Error::IndefiniteWeight { min_eig: r_min });
    }

    let n = q.nrows() + r.nrows();
    let mut d = DMatrix::zeros(n, n);
    d.view_mut((0, 0), q.shape()).copy_from(&q);
    d.view_mut(q.shape(), r.shape()).copy_from(&r);
    let d_sqrt = linalg::psd_sqrt(&d, 1e-10 * q_scale.max(linalg::max_eigenvalue(&r)))
        .map_err(|min_eig| Error::IndefiniteStateWeight { min_eig })?;

    Ok(CostOperator { dims, q, r, d_sqrt })
}

fn tile_weight(
    step: &DMatrix<f64>,
    per_step: usize,
    horizon: usize,
    what: &'static str,
) -> Result<DMatrix<f64>> {
    if !linalg::all_finite(step) {
        return Err(Error::NonFiniteEntry {
            what: "cost weight",
        });
    }
    let lifted = per_step * horizon;
    if step.shape() == (lifted, lifted) {
        return Ok(step.clone());
    }
    if step.shape() == (per_step, per_step) {
        let mut out = DMatrix::zeros(lifted, lifted);
        for t in 0..horizon {
            out.view_mut((t * per_step, t * per_step), (per_step, per_step))
                .copy_from(step);
        }
        return Ok(out);
    }
    Err(Error::DimensionMismatch {
        what,
        expected: format!("{per_step}x{per_step} per-step or {lifted}x{lifted} lifted"),
        got: format!("{:?}", step.shape()),
    })
}

/// A polytope `{ v : matrix·v ≤ offset }`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl Polytope {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != offset.len() {
            return Err(Error::DimensionMismatch {
                what: "polytope",
                expected: format!("{} offsets", matrix.nrows()),
                got: format!("{}", offset.len()),
            });
        }
        if !linalg::all_finite(&matrix) || !offset.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteEntry { what: "polytope" });
        }
        Ok(Self { matrix, offset })
    }

    /// Whether `v` satisfies every row within `tol`.
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        let vals = &self.matrix * v;
        vals.iter()
            .zip(self.offset.iter())
            .all(|(lhs, rhs)| *lhs <= *rhs + tol)
    }
}

/// Compact polytopic bounds on the stacked process and measurement noise
/// vectors. When built from boxes, the per-coordinate bound vectors are
/// kept so that support functions and sampling can use them directly.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseBounds {
    pub process: Polytope,
    pub measurement: Polytope,
    /// Per-coordinate bounds of the process box (length d_x·T), if the
    /// process polytope is exactly the symmetric box `±process_box`.
    pub process_box: Option<DVector<f64>>,
    /// Per-coordinate bounds of the measurement box (length d_y·T).
    pub measurement_box: Option<DVector<f64>>,
}

impl NoiseBounds {
    /// Both boxes, or an error when the bounds were not built from boxes.
    pub fn boxes(&self) -> Result<(&DVector<f64>, &DVector<f64>)> {
        match (&self.process_box, &self.measurement_box) {
            (Some(w), Some(e)) => Ok((w, e)),
            _ => Err(Error::UnsupportedBounds),
        }
    }
}

/// Builds symmetric box bounds `|w_i| ≤ bw`, `|e_i| ≤ be`, tiled over the
/// horizon. The first block of the process box bounds the initial
/// condition, which travels in the first block of the lifted noise.
pub fn build_box_bounds(bw: &DVector<f64>, be: &DVector<f64>, dims: Dims) -> Result<NoiseBounds> {
    let w_box = tile_box(bw, dims.state, dims.horizon)?;
    let e_box = tile_box(be, dims.meas, dims.horizon)?;
    let process = box_polytope(&w_box);
    let measurement = box_polytope(&e_box);
    Ok(NoiseBounds {
        process,
        measurement,
        process_box: Some(w_box),
        measurement_box: Some(e_box),
    })
}

/// Uniform box bounds with a single scalar per noise channel.
pub fn uniform_box_bounds(bw: f64, be: f64, dims: Dims) -> Result<NoiseBounds> {
    build_box_bounds(
        &DVector::from_element(dims.state, bw),
        &DVector::from_element(dims.meas, be),
        dims,
    )
}

fn tile_box(per_step: &DVector<f64>, dim: usize, horizon: usize) -> Result<DVector<f64>> {
    let full = dim * horizon;
    let tiled = if per_step.len() == full {
        per_step.clone()
    } else if per_step.len() == dim {
        DVector::from_fn(full, |i, _| per_step[i % dim])
    } else {
        return Err(Error::DimensionMismatch {
            what: "box bounds",
            expected: format!("{dim} per-step or {full} stacked entries"),
            got: format!("{}", per_step.len()),
        });
    };
    for &v in tiled.iter() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidBound { got: v });
        }
    }
    Ok(tiled)
}

fn box_polytope(bounds: &DVector<f64>) -> Polytope {
    let n = bounds.len();
    let mut matrix = DMatrix::zeros(2 * n, n);
    let mut offset = DVector::zeros(2 * n);
    for i in 0..n {
        matrix[(i, i)] = 1.0;
        matrix[(n + i, i)] = -1.0;
        offset[i] = bounds[i];
        offset[n + i] = bounds[i];
    }
    Polytope { matrix, offset }
}

/// Polytopic safety constraints `H·[x; u] ≤ h` that must hold for every
/// admissible noise realization.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetySpec {
    pub matrix: DMatrix<f64>,
    pub bound: DVector<f64>,
}

impl SafetySpec {
    pub fn new(matrix: DMatrix<f64>, bound: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != bound.len() {
            return Err(Error::DimensionMismatch {
                what: "safety constraints",
                expected: format!("{} bounds", matrix.nrows()),
                got: format!("{}", bound.len()),
            });
        }
        if !linalg::all_finite(&matrix) || !bound.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteEntry {
                what: "safety constraints",
            });
        }
        Ok(Self { matrix, bound })
    }

    /// Symmetric per-coordinate boxes `|x_t| ≤ x_bound`, `|u_t| ≤ u_bound`
    /// tiled over the horizon, as rows over the stacked `[x; u]` vector.
    pub fn state_input_box(
        x_bound: &DVector<f64>,
        u_bound: &DVector<f64>,
        dims: Dims,
    ) -> Result<Self> {
        if x_bound.len() != dims.state || u_bound.len() != dims.input {
            return Err(Error::DimensionMismatch {
                what: "safety box",
                expected: format!("{} state / {} input bounds", dims.state, dims.input),
                got: format!("{} / {}", x_bound.len(), u_bound.len()),
            });
        }
        let nx = dims.state_total();
        let nu = dims.input_total();
        let rows = 2 * (nx + nu);
        let mut matrix = DMatrix::zeros(rows, nx + nu);
        let mut bound = DVector::zeros(rows);
        for i in 0..nx {
            matrix[(i, i)] = 1.0;
            matrix[(nx + i, i)] = -1.0;
            bound[i] = x_bound[i % dims.state];
            bound[nx + i] = x_bound[i % dims.state];
        }
        for i in 0..nu {
            matrix[(2 * nx + i, nx + i)] = 1.0;
            matrix[(2 * nx + nu + i, nx + i)] = -1.0;
            bound[2 * nx + i] = u_bound[i % dims.input];
            bound[2 * nx + nu + i] = u_bound[i % dims.input];
        }
        Self::new(matrix, bound)
    }

    /// A spec with no rows: every trajectory is safe.
    pub fn unconstrained(dims: Dims) -> Self {
        Self {
            matrix: DMatrix::zeros(0, dims.traj_total()),
            bound: DVector::zeros(0),
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }
}
