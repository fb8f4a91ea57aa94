//! Closed-loop response algebra for output-feedback controllers.
//!
//! A block-lower-triangular gain operator `K` maps stacked measurements
//! to stacked inputs, `u = K·y`. Its closed loop is captured by the four
//! response blocks mapping noise to trajectories,
//!
//! ```text
//! [x; u] = [P_xw  P_xe; P_uw  P_ue] · [w; e]
//! ```
//!
//! and the correspondence goes both ways: the response of a causal gain
//! is causal and lies in an affine subspace, and any causal response in
//! that subspace comes from exactly one causal gain. This module builds
//! responses from gains, recovers gains from responses, and measures how
//! far a candidate response is from the subspace and from causality.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ltv::{Dims, LiftedSystem};

/// Normalized tolerance for structural zeros in validated inputs.
const STRUCTURAL_TOL: f64 = 1e-9;

/// Block-lower-triangular output-feedback gains `K` (d_u·T × d_y·T).
#[derive(Clone, Debug, PartialEq)]
pub struct ControlGains {
    dims: Dims,
    k: DMatrix<f64>,
}

impl ControlGains {
    /// Validates shape, finiteness, and block-lower-triangularity.
    pub fn new(k: DMatrix<f64>, dims: Dims) -> Result<Self> {
        let expected = (dims.input_total(), dims.meas_total());
        if k.shape() != expected {
            return Err(Error::DimensionMismatch {
                what: "control gains",
                expected: format!("{:?}", expected),
                got: format!("{:?}", k.shape()),
            });
        }
        if !linalg::all_finite(&k) {
            return Err(Error::NonFiniteEntry {
                what: "control gains",
            });
        }
        let scale = 1.0 + linalg::max_abs(&k);
        let violation = linalg::upper_block_max_abs(&k, dims.input, dims.meas);
        if violation > STRUCTURAL_TOL * scale {
            return Err(Error::InvalidResponse {
                reason: format!("gains are not block-lower-triangular (violation {violation:.3e})"),
            });
        }
        let mut k = k;
        linalg::zero_upper_blocks(&mut k, dims.input, dims.meas);
        Ok(Self { dims, k })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            k: DMatrix::zeros(dims.input_total(), dims.meas_total()),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// The gain block `K_{t,k}` applied to measurement `k` at time `t`.
    pub fn block(&self, t: usize, k: usize) -> DMatrix<f64> {
        self.k
            .view(
                (t * self.dims.input, k * self.dims.meas),
                (self.dims.input, self.dims.meas),
            )
            .clone_owned()
    }
}

/// The four closed-loop response blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMatrix {
    dims: Dims,
    pub pxw: DMatrix<f64>,
    pub pxe: DMatrix<f64>,
    pub puw: DMatrix<f64>,
    pub pue: DMatrix<f64>,
}

impl ResponseMatrix {
    /// Validates shapes, block-lower-triangularity of every block, and
    /// that the diagonal blocks of `P_xw` are identity within `1e-6`.
    pub fn new(
        pxw: DMatrix<f64>,
        pxe: DMatrix<f64>,
        puw: DMatrix<f64>,
        pue: DMatrix<f64>,
        dims: Dims,
    ) -> Result<Self> {
        let candidate = Self {
            dims,
            pxw,
            pxe,
            puw,
            pue,
        };
        candidate.check_shapes()?;
        let scale = 1.0 + candidate.max_abs();
        let causality = causality_violation(&candidate);
        if causality > STRUCTURAL_TOL * scale {
            return Err(Error::InvalidResponse {
                reason: format!("response is not causal (violation {causality:.3e})"),
            });
        }
        let diag_dev = candidate.pxw_diag_deviation();
        if diag_dev > 1e-6 {
            return Err(Error::InvalidResponse {
                reason: format!("P_xw diagonal blocks deviate from identity by {diag_dev:.3e}"),
            });
        }
        Ok(candidate)
    }

    /// Builds without validating; for construction sites that guarantee
    /// the invariants structurally.
    pub(crate) fn from_parts_unchecked(
        pxw: DMatrix<f64>,
        pxe: DMatrix<f64>,
        puw: DMatrix<f64>,
        pue: DMatrix<f64>,
        dims: Dims,
    ) -> Self {
        Self {
            dims,
            pxw,
            pxe,
            puw,
            pue,
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let d = self.dims;
        let shapes = [
            ("P_xw", self.pxw.shape(), (d.state_total(), d.state_total())),
            ("P_xe", self.pxe.shape(), (d.state_total(), d.meas_total())),
            ("P_uw", self.puw.shape(), (d.input_total(), d.state_total())),
            ("P_ue", self.pue.shape(), (d.input_total(), d.meas_total())),
        ];
        for (name, got, expected) in shapes {
            if got != expected {
                return Err(Error::DimensionMismatch {
                    what: "response matrix",
                    expected: format!("{name} {expected:?}"),
                    got: format!("{got:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.pxw)
            .max(linalg::max_abs(&self.pxe))
            .max(linalg::max_abs(&self.puw))
            .max(linalg::max_abs(&self.pue))
    }

    /// Max deviation of `P_xw`'s diagonal blocks from identity.
    pub fn pxw_diag_deviation(&self) -> f64 {
        let dx = self.dims.state;
        let mut worst = 0.0f64;
        for t in 0..self.dims.horizon {
            for i in 0..dx {
                for j in 0..dx {
                    let v = self.pxw[(t * dx + i, t * dx + j)];
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((v - target).abs());
                }
            }
        }
        worst
    }

    /// The full stacked operator `[P_xw P_xe; P_uw P_ue]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let d = self.dims;
        let mut full = DMatrix::zeros(d.traj_total(), d.noise_total());
        full.view_mut((0, 0), self.pxw.shape()).copy_from(&self.pxw);
        full.view_mut((0, d.state_total()), self.pxe.shape())
            .copy_from(&self.pxe);
        full.view_mut((d.state_total(), 0), self.puw.shape())
            .copy_from(&self.puw);
        full.view_mut((d.state_total(), d.state_total()), self.pue.shape())
            .copy_from(&self.pue);
        full
    }
}

/// Closed-loop response of a causal gain operator.
///
/// `P_xw` is obtained by forward block substitution against the unit
/// block-lower-triangular operator `I - ZA - ZB·K·C`, which is always
/// invertible.
pub fn response_from_gains(lifted: &LiftedSystem, gains: &ControlGains) -> ResponseMatrix {
    let dims = lifted.dims();
    let dx = dims.state;
    let nx = dims.state_total();

    let kc = gains.matrix() * lifted.cal_c();
    let zbk = lifted.zb() * gains.matrix();
    // I - ZA - ZB·K·C, unit block-lower-triangular.
    let mut op = DMatrix::identity(nx, nx);
    op -= lifted.za();
    op -= lifted.zb() * &kc;

    let pxw = linalg::unit_block_lower_solve(&op, &DMatrix::identity(nx, nx), dx);
    let pxe = &pxw * &zbk;
    let puw = &kc * &pxw;
    let pue = &kc * &pxe + gains.matrix();

    ResponseMatrix::from_parts_unchecked(pxw, pxe, puw, pue, dims)
}

/// Recovers the unique causal gain of a valid response,
/// `K = P_ue - P_uw·P_xw⁻¹·P_xe`.
pub fn gains_from_response(phi: &ResponseMatrix) -> Result<ControlGains> {
    let dims = phi.dims();
    let diag_dev = phi.pxw_diag_deviation();
    if diag_dev > 1e-6 {
        return Err(Error::InvalidResponse {
            reason: format!("P_xw diagonal blocks deviate from identity by {diag_dev:.3e}"),
        });
    }
    let inv_pxw_pxe = block_lower_solve(&phi.pxw, &phi.pxe, dims.state)?;
    let k = &phi.pue - &phi.puw * inv_pxw_pxe;
    ControlGains::new(k, dims)
}

/// Residuals of the two affine-subspace conditions:
/// `r1 = [I-ZA, -ZB]·P - [I, 0]` and `r2 = P·[I-ZA; -C] - [I; 0]`.
pub fn affine_residuals(
    lifted: &LiftedSystem,
    phi: &ResponseMatrix,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let dims = lifted.dims();
    let i_za = lifted.i_minus_za();
    let nx = dims.state_total();

    let mut r1 = DMatrix::zeros(nx, dims.noise_total());
    let r1w = &i_za * &phi.pxw - lifted.zb() * &phi.puw - DMatrix::identity(nx, nx);
    let r1e = &i_za * &phi.pxe - lifted.zb() * &phi.pue;
    r1.view_mut((0, 0), r1w.shape()).copy_from(&r1w);
    r1.view_mut((0, nx), r1e.shape()).copy_from(&r1e);

    let mut r2 = DMatrix::zeros(dims.traj_total(), nx);
    let r2x = &phi.pxw * &i_za - &phi.pxe * lifted.cal_c() - DMatrix::identity(nx, nx);
    let r2u = &phi.puw * &i_za - &phi.pue * lifted.cal_c();
    r2.view_mut((0, 0), r2x.shape()).copy_from(&r2x);
    r2.view_mut((nx, 0), r2u.shape()).copy_from(&r2u);

    (r1, r2)
}

/// Max absolute entry strictly above the block diagonal across all four
/// response blocks; zero iff the response is causal.
pub fn causality_violation(phi: &ResponseMatrix) -> f64 {
    let d = phi.dims();
    linalg::upper_block_max_abs(&phi.pxw, d.state, d.state)
        .max(linalg::upper_block_max_abs(&phi.pxe, d.state, d.meas))
        .max(linalg::upper_block_max_abs(&phi.puw, d.input, d.state))
        .max(linalg::upper_block_max_abs(&phi.pue, d.input, d.meas))
}

/// Trajectories predicted by a response for one noise realization:
/// `x = P_xw·w + P_xe·e`, `u = P_uw·w + P_ue·e`.
pub fn apply_response(
    phi: &ResponseMatrix,
    w: &DVector<f64>,
    e: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = phi.dims();
    if w.len() != d.state_total() || e.len() != d.meas_total() {
        return Err(Error::DimensionMismatch {
            what: "noise realization",
            expected: format!("w {} / e {}", d.state_total(), d.meas_total()),
            got: format!("w {} / e {}", w.len(), e.len()),
        });
    }
    let x = &phi.pxw * w + &phi.pxe * e;
    let u = &phi.puw * w + &phi.pue * e;
    Ok((x, u))
}

/// Forward block substitution for `L·X = B` where `L` is
/// block-lower-triangular with invertible diagonal blocks of size
/// `block`.
fn block_lower_solve(l: &DMatrix<f64>, b: &DMatrix<f64>, block: usize) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let nb = n / block;
    let mut x = b.clone_owned();
    for bi in 0..nb {
        for bj in 0..bi {
            let lblk = l.view((bi * block, bj * block), (block, block));
            let xblk = x.view((bj * block, 0), (block, x.ncols())).clone_owned();
            let update = lblk * xblk;
            let mut target = x.view_mut((bi * block, 0), (block, b.ncols()));
            target -= update;
        }
        let diag = l
            .view((bi * block, bi * block), (block, block))
            .clone_owned();
        let lu = diag.lu();
        let rhs = x.view((bi * block, 0), (block, b.ncols())).clone_owned();
        let solved = lu.solve(&rhs).ok_or_else(|| Error::InvalidResponse {
            reason: format!("singular diagonal block {bi} in P_xw"),
        })?;
        x.view_mut((bi * block, 0), (block, b.ncols()))
            .copy_from(&solved);
    }
    Ok(x)
}
