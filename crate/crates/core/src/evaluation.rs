//! Noise generation, closed-loop simulation, and performance metrics.
//!
//! Stochastic noise families are parameterized by the per-coordinate box
//! bound `b` so that every family is mean-zero and respects the bound
//! after clipping. The adversarial generator scales the top eigenvector
//! of a controller's regret matrix to the largest admissible magnitude.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Gamma, Normal, Poisson, Uniform, Weibull};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ltv::{CostOperator, LtvSystem, NoiseBounds, SafetySpec};
use crate::sls::{ControlGains, ResponseMatrix};

/// Noise families used in the benchmark sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    Gaussian,
    Uniform,
    Gamma,
    Exponential,
    Bernoulli,
    Weibull,
    Poisson,
    /// Adversarial noise aimed at the controller under test.
    WorstCase,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 8] = [
        NoiseKind::Gaussian,
        NoiseKind::Uniform,
        NoiseKind::Gamma,
        NoiseKind::Exponential,
        NoiseKind::Bernoulli,
        NoiseKind::Weibull,
        NoiseKind::Poisson,
        NoiseKind::WorstCase,
    ];

    /// The stochastic families (everything except the adversarial one).
    pub const STOCHASTIC: [NoiseKind; 7] = [
        NoiseKind::Gaussian,
        NoiseKind::Uniform,
        NoiseKind::Gamma,
        NoiseKind::Exponential,
        NoiseKind::Bernoulli,
        NoiseKind::Weibull,
        NoiseKind::Poisson,
    ];
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Uniform => "uniform",
            NoiseKind::Gamma => "gamma",
            NoiseKind::Exponential => "exponential",
            NoiseKind::Bernoulli => "bernoulli",
            NoiseKind::Weibull => "weibull",
            NoiseKind::Poisson => "poisson",
            NoiseKind::WorstCase => "worst-case",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "uniform" => Ok(NoiseKind::Uniform),
            "gamma" => Ok(NoiseKind::Gamma),
            "exponential" => Ok(NoiseKind::Exponential),
            "bernoulli" => Ok(NoiseKind::Bernoulli),
            "weibull" => Ok(NoiseKind::Weibull),
            "poisson" => Ok(NoiseKind::Poisson),
            "worst-case" | "worst_case" | "adversarial" => Ok(NoiseKind::WorstCase),
            other => Err(Error::InvalidNoiseModel(format!(
                "unknown noise kind `{other}`"
            ))),
        }
    }
}

/// Family parameters, expressed relative to the per-coordinate bound `b`.
///
/// Defaults keep every family mean-zero and inside the box after a final
/// clip: Gaussian sigma `b/3`; Gamma(shape 2, scale `b/4`) minus its
/// mean; Exponential(rate `2/b`) minus its mean; Bernoulli on `{-b, b}`;
/// Weibull(shape 1.5, scale `b/2`) minus its mean; Poisson(rate 1)
/// scaled by `b/3` and centered.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    pub gaussian_sigma_ratio: f64,
    pub gamma_shape: f64,
    pub gamma_scale_ratio: f64,
    pub exponential_rate_over_bound: f64,
    pub bernoulli_p: f64,
    pub weibull_shape: f64,
    pub weibull_scale_ratio: f64,
    pub poisson_rate: f64,
    pub poisson_scale_ratio: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            gaussian_sigma_ratio: 1.0 / 3.0,
            gamma_shape: 2.0,
            gamma_scale_ratio: 0.25,
            exponential_rate_over_bound: 2.0,
            bernoulli_p: 0.5,
            weibull_shape: 1.5,
            weibull_scale_ratio: 0.5,
            poisson_rate: 1.0,
            poisson_scale_ratio: 1.0 / 3.0,
        }
    }
}

impl NoiseParams {
    fn validate(&self, kind: NoiseKind) -> Result<()> {
        let ok = match kind {
            NoiseKind::Gaussian => self.gaussian_sigma_ratio > 0.0,
            NoiseKind::Gamma => self.gamma_shape > 0.0 && self.gamma_scale_ratio > 0.0,
            NoiseKind::Exponential => self.exponential_rate_over_bound > 0.0,
            NoiseKind::Bernoulli => (0.0..=1.0).contains(&self.bernoulli_p),
            NoiseKind::Weibull => self.weibull_shape > 0.0 && self.weibull_scale_ratio > 0.0,
            NoiseKind::Poisson => self.poisson_rate > 0.0 && self.poisson_scale_ratio > 0.0,
            NoiseKind::Uniform | NoiseKind::WorstCase => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidNoiseModel(format!(
                "parameters invalid for {kind}"
            )))
        }
    }
}

/// A noise family with its parameters and RNG seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub params: NoiseParams,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        Self {
            kind,
            params: NoiseParams::default(),
            seed,
        }
    }
}

/// One realization of the stacked process and measurement noise.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRealization {
    pub w: DVector<f64>,
    pub e: DVector<f64>,
    pub model: NoiseModel,
}

impl NoiseRealization {
    /// Validates membership of `(w, e)` in the bounds within `1e-12`.
    pub fn new(
        w: DVector<f64>,
        e: DVector<f64>,
        model: NoiseModel,
        bounds: &NoiseBounds,
    ) -> Result<Self> {
        if !bounds.process.contains(&w, 1e-12) || !bounds.measurement.contains(&e, 1e-12) {
            return Err(Error::InvalidNoiseModel(
                "realization violates the noise bounds".into(),
            ));
        }
        Ok(Self { w, e, model })
    }
}

/// Result of simulating one closed-loop trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub cost: f64,
    /// `min_i (h_i - (H[x;u])_i)`; infinite when there are no rows.
    pub safety_margin: f64,
}

/// Radius of the smallest origin-centered ball containing the product of
/// the two boxes: the norm of the stacked corner.
pub fn circumscribed_radius(bounds: &NoiseBounds) -> Result<f64> {
    let (bw, be) = bounds.boxes()?;
    let mut sq = 0.0;
    for v in bw.iter() {
        sq += v * v;
    }
    for v in be.iter() {
        sq += v * v;
    }
    Ok(sq.sqrt())
}

/// Draws one realization: each coordinate i.i.d. from the family scaled
/// by its box bound, then clipped to the box. Deterministic given the
/// model seed.
pub fn sample_noise(model: &NoiseModel, bounds: &NoiseBounds) -> Result<NoiseRealization> {
    model.params.validate(model.kind)?;
    if model.kind == NoiseKind::WorstCase {
        return Err(Error::InvalidNoiseModel(
            "worst-case noise requires a response matrix; use worst_case_noise".into(),
        ));
    }
    let (bw, be) = bounds.boxes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let w = DVector::from_fn(bw.len(), |i, _| draw_coord(model, bw[i], &mut rng));
    let e = DVector::from_fn(be.len(), |i, _| draw_coord(model, be[i], &mut rng));
    Ok(NoiseRealization {
        w,
        e,
        model: *model,
    })
}

fn draw_coord(model: &NoiseModel, bound: f64, rng: &mut ChaCha8Rng) -> f64 {
    let p = &model.params;
    let raw = match model.kind {
        NoiseKind::Gaussian => {
            let sigma = bound * p.gaussian_sigma_ratio;
            Normal::new(0.0, sigma).expect("sigma > 0").sample(rng)
        }
        NoiseKind::Uniform => Uniform::new_inclusive(-bound, bound)
            .expect("bound > 0")
            .sample(rng),
        NoiseKind::Gamma => {
            let scale = bound * p.gamma_scale_ratio;
            let mean = p.gamma_shape * scale;
            Gamma::new(p.gamma_shape, scale)
                .expect("valid gamma")
                .sample(rng)
                - mean
        }
        NoiseKind::Exponential => {
            let rate = p.exponential_rate_over_bound / bound;
            let mean = 1.0 / rate;
            Exp::new(rate).expect("rate > 0").sample(rng) - mean
        }
        NoiseKind::Bernoulli => {
            if Bernoulli::new(p.bernoulli_p).expect("valid p").sample(rng) {
                bound
            } else {
                -bound
            }
        }
        NoiseKind::Weibull => {
            let scale = bound * p.weibull_scale_ratio;
            let mean = scale * gamma_fn(1.0 + 1.0 / p.weibull_shape);
            Weibull::new(scale, p.weibull_shape)
                .expect("valid weibull")
                .sample(rng)
                - mean
        }
        NoiseKind::Poisson => {
            let draw: f64 = Poisson::new(p.poisson_rate).expect("rate > 0").sample(rng);
            bound * p.poisson_scale_ratio * (draw - p.poisson_rate)
        }
        NoiseKind::WorstCase => unreachable!("rejected above"),
    };
    raw.clamp(-bound, bound)
}

/// Adversarial noise for the controller with response `phi`: the top
/// eigenvector of its regret matrix, scaled to the largest magnitude
/// admissible in both the circumscribed ball and the boxes. Returns the
/// realization together with the regret it realizes.
pub fn worst_case_noise(
    phi: &ResponseMatrix,
    cost: &CostOperator,
    clairvoyant_gram: &DMatrix<f64>,
    bounds: &NoiseBounds,
) -> Result<(NoiseRealization, f64)> {
    let dims = phi.dims();
    let m = regret_matrix(phi, cost, clairvoyant_gram);
    let (lam, v) = linalg::max_eigenpair(&m);
    let model = NoiseModel::new(NoiseKind::WorstCase, 0);
    let (bw, be) = bounds.boxes()?;
    if lam <= 0.0 {
        return Ok((
            NoiseRealization {
                w: DVector::zeros(dims.state_total()),
                e: DVector::zeros(dims.meas_total()),
                model,
            },
            0.0,
        ));
    }
    let r = circumscribed_radius(bounds)?;
    let mut scale = r;
    for (i, vi) in v.iter().enumerate() {
        let b = if i < bw.len() {
            bw[i]
        } else {
            be[i - bw.len()]
        };
        if vi.abs() > 1e-14 {
            scale = scale.min(b / vi.abs());
        }
    }
    let scaled = &v * scale;
    let w = scaled.rows(0, dims.state_total()).into_owned();
    let e = scaled
        .rows(dims.state_total(), dims.meas_total())
        .into_owned();
    let realized = scale * scale * lam;
    Ok((NoiseRealization { w, e, model }, realized))
}

/// The regret matrix `P' D P - blkdiag(Mc, 0)` of a response, where `Mc`
/// is the clairvoyant cost Gram over the process-noise block.
pub fn regret_matrix(
    phi: &ResponseMatrix,
    cost: &CostOperator,
    clairvoyant_gram: &DMatrix<f64>,
) -> DMatrix<f64> {
    let dims = phi.dims();
    let stacked = phi.stacked();
    let dphi = cost.d_sqrt() * &stacked;
    let mut m = dphi.transpose() * dphi;
    let nx = dims.state_total();
    let mut wblock = m.view_mut((0, 0), (nx, nx));
    wblock -= clairvoyant_gram;
    m
}

/// Simulates the closed loop step by step. The initial state is the
/// first block of `w`; the cost is the lifted quadratic form; the margin
/// is evaluated against the safety rows.
pub fn rollout(
    system: &LtvSystem,
    gains: &ControlGains,
    noise: &NoiseRealization,
    safety: &SafetySpec,
    cost: &CostOperator,
) -> Result<RolloutResult> {
    let dims = system.dims();
    if noise.w.len() != dims.state_total() || noise.e.len() != dims.meas_total() {
        return Err(Error::DimensionMismatch {
            what: "noise realization",
            expected: format!("w {} / e {}", dims.state_total(), dims.meas_total()),
            got: format!("w {} / e {}", noise.w.len(), noise.e.len()),
        });
    }
    let (dx, du, dy) = (dims.state, dims.input, dims.meas);
    let mut x = DVector::zeros(dims.state_total());
    let mut u = DVector::zeros(dims.input_total());
    let mut y = DVector::zeros(dims.meas_total());

    x.rows_mut(0, dx).copy_from(&noise.w.rows(0, dx));
    for t in 0..dims.horizon {
        let xt = x.rows(t * dx, dx).clone_owned();
        let yt = system.c(t) * &xt + noise.e.rows(t * dy, dy);
        y.rows_mut(t * dy, dy).copy_from(&yt);
        let mut ut = DVector::zeros(du);
        for k in 0..=t {
            ut += gains.block(t, k) * y.rows(k * dy, dy);
        }
        u.rows_mut(t * du, du).copy_from(&ut);
        if t + 1 < dims.horizon {
            let next = system.a(t) * &xt + system.b(t) * &ut + noise.w.rows((t + 1) * dx, dx);
            x.rows_mut((t + 1) * dx, dx).copy_from(&next);
        }
    }

    let cost_value = cost.evaluate(&x, &u);
    let safety_margin = margin(safety, &x, &u);
    Ok(RolloutResult {
        x,
        u,
        y,
        cost: cost_value,
        safety_margin,
    })
}

fn margin(safety: &SafetySpec, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    if safety.rows() == 0 {
        return f64::INFINITY;
    }
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    let vals = &safety.matrix * z;
    vals.iter()
        .zip(safety.bound.iter())
        .map(|(lhs, rhs)| rhs - lhs)
        .fold(f64::INFINITY, f64::min)
}

/// The quadratic cost of given stacked trajectories.
pub fn evaluate_cost(x: &DVector<f64>, u: &DVector<f64>, cost: &CostOperator) -> Result<f64> {
    if x.len() != cost.q().nrows() || u.len() != cost.r().nrows() {
        return Err(Error::DimensionMismatch {
            what: "trajectories",
            expected: format!("x {} / u {}", cost.q().nrows(), cost.r().nrows()),
            got: format!("x {} / u {}", x.len(), u.len()),
        });
    }
    Ok(cost.evaluate(x, u))
}

/// Dynamic regret of a realized cost: the clairvoyant optimum for the
/// same noise is `w' Mc w` since the clairvoyant response has zero
/// measurement-noise columns.
pub fn evaluate_regret(
    realized_cost: f64,
    w: &DVector<f64>,
    clairvoyant_gram: &DMatrix<f64>,
) -> f64 {
    realized_cost - (w.transpose() * clairvoyant_gram * w)[(0, 0)]
}

/// Analytic worst-case regret over the ball of radius `r`:
/// `r² · max(0, λ_max(P'DP - blkdiag(Mc, 0)))`.
pub fn worst_case_regret_value(
    phi: &ResponseMatrix,
    cost: &CostOperator,
    clairvoyant_gram: &DMatrix<f64>,
    r: f64,
) -> f64 {
    let m = regret_matrix(phi, cost, clairvoyant_gram);
    r * r * linalg::max_eigenvalue(&m).max(0.0)
}

/// Exact robust safety margins for box bounds: for each row of `H·P`,
/// the support function of the box is the bound-weighted L1 norm of the
/// row, and the margin is `h_i` minus that value. All margins
/// nonnegative iff the response is safe for every admissible noise.
pub fn verify_safety_exact(
    phi: &ResponseMatrix,
    safety: &SafetySpec,
    bounds: &NoiseBounds,
) -> Result<DVector<f64>> {
    let (bw, be) = bounds.boxes()?;
    let stacked = phi.stacked();
    if safety.matrix.ncols() != stacked.nrows() {
        return Err(Error::DimensionMismatch {
            what: "safety rows",
            expected: format!("{} columns", stacked.nrows()),
            got: format!("{}", safety.matrix.ncols()),
        });
    }
    let g = &safety.matrix * stacked;
    let mut margins = DVector::zeros(safety.rows());
    for i in 0..safety.rows() {
        let mut support = 0.0;
        for j in 0..g.ncols() {
            let b = if j < bw.len() {
                bw[j]
            } else {
                be[j - bw.len()]
            };
            support += g[(i, j)].abs() * b;
        }
        margins[i] = safety.bound[i] - support;
    }
    Ok(margins)
}

/// Gamma function via the Lanczos approximation (g = 7, n = 9), accurate
/// to ~1e-13 on the positive axis used here.
fn gamma_fn(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}
