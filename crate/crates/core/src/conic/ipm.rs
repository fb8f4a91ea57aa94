//! Structured interior-point backend for equality-free programs
//!
//! ```text
//! min  c'y + ½ y'H y
//! s.t. S_b(y) = F0_b + Σ_i y_i F_{b,i} ∈ K_b
//! ```
//!
//! with `K_b` either the nonnegative orthant (all scalar inequality rows
//! collected into one block) or a PSD cone. The method is a standard
//! Nesterov-Todd-scaled Mehrotra predictor-corrector on the KKT system
//!
//! ```text
//! S = F0 + A(y),   A*(X) = c + Hy,   X S = μ I,
//! ```
//!
//! whose Schur complement `M_ij = Σ_b tr(F_i W F_j W)` is assembled
//! densely. The controller syntheses produce PSD coefficient matrices of
//! rank two (symmetrized outer products), which the assembly detects and
//! exploits: with `W = G Gᵀ`, the trace reduces to squared dot products
//! of back-transformed factor vectors, so one Gram product replaces the
//! generic quartic-cost assembly.

use nalgebra::{DMatrix, DVector};

use super::clarabel_backend::pin_blas_single_thread;
use super::{ConicProgram, ConicSolution, Residuals, SolveStatus};

const MAX_ITER: usize = 120;

/// Coefficient of one variable inside one PSD block.
enum PsdCoeff {
    /// `F = Σ_s sigma_s · u_s u_sᵀ` with few terms.
    Factored(Vec<(f64, DVector<f64>)>),
    /// Upper-triangle triplets `(r, c, v)` with `r ≤ c`, read
    /// symmetrically.
    Dense(Vec<(usize, usize, f64)>),
}

struct PsdBlock {
    n: usize,
    f0: DMatrix<f64>,
    /// (global variable index, coefficient matrix)
    vars: Vec<(usize, PsdCoeff)>,
}

struct LpBlock {
    f0: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

struct Problem {
    k: usize,
    grad: Vec<f64>,
    hess: Vec<(usize, usize, f64)>,
    offset: f64,
    lp: LpBlock,
    psd: Vec<PsdBlock>,
}

/// Per-iteration NT scaling state of one PSD block.
struct PsdScaling {
    g: DMatrix<f64>,
    ginv: DMatrix<f64>,
    /// Spectrum of the scaled variable `V` (diagonal in this frame).
    lam: DVector<f64>,
    s_inv: DMatrix<f64>,
}

pub(super) fn solve(prog: &ConicProgram, tol: f64) -> ConicSolution {
    pin_blas_single_thread();
    if prog.has_equalities() {
        return ConicSolution::failure(SolveStatus::NumericalFailure);
    }
    let t0 = std::time::Instant::now();
    let problem = match build_problem(prog) {
        Ok(p) => p,
        Err(status) => return ConicSolution::failure(status),
    };
    if std::env::var_os("SLSREG_IPM_TRACE").is_some() {
        eprintln!(
            "ipm build: {:.2}s (k={}, lp={}, psd={:?})",
            t0.elapsed().as_secs_f64(),
            problem.k,
            problem.lp.f0.len(),
            problem.psd.iter().map(|b| b.n).collect::<Vec<_>>()
        );
    }
    run(prog, &problem, tol)
}

fn build_problem(prog: &ConicProgram) -> Result<Problem, SolveStatus> {
    let k = prog.num_scalars();
    let (hess, grad, offset) = prog.quadratic_objective();

    let mut lp_f0 = Vec::new();
    let mut lp_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for (_, m) in prog.inequality_exprs() {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let e = m.entry(i, j);
                if e.terms.is_empty() {
                    // Constant row: either trivially true or infeasible.
                    if e.constant < -1e-12 {
                        return Err(SolveStatus::Infeasible);
                    }
                    continue;
                }
                // Equilibrate each row.
                let scale = 1.0
                    / e.constant
                        .abs()
                        .max(e.terms.iter().map(|(_, c)| c.abs()).fold(0.0, f64::max))
                        .max(1e-12);
                lp_f0.push(e.constant * scale);
                lp_rows.push(
                    e.terms
                        .iter()
                        .filter(|&&(_, c)| c != 0.0)
                        .map(|&(i0, c)| (i0, c * scale))
                        .collect(),
                );
            }
        }
    }

    // One round of bound propagation over the scalar rows: singleton
    // rows imply variable bounds; a row whose best achievable value
    // under those bounds is negative certifies infeasibility.
    let mut lb = vec![f64::NEG_INFINITY; k];
    let mut ub = vec![f64::INFINITY; k];
    for (row, &f0) in lp_rows.iter().zip(lp_f0.iter()) {
        if row.len() == 1 {
            let (v, a) = row[0];
            if a > 0.0 {
                lb[v] = lb[v].max(-f0 / a);
            } else if a < 0.0 {
                ub[v] = ub[v].min(-f0 / a);
            }
        }
    }
    for (row, &f0) in lp_rows.iter().zip(lp_f0.iter()) {
        let mut best = f0;
        for &(v, a) in row {
            let contrib = if a > 0.0 { a * ub[v] } else { a * lb[v] };
            best += contrib;
            if best.is_infinite() && best > 0.0 {
                break;
            }
        }
        if best.is_finite() && best < -1e-9 {
            return Err(SolveStatus::Infeasible);
        }
    }

    let mut psd = Vec::new();
    for (_, m) in prog.psd_exprs() {
        let n = m.rows();
        let mut f0 = DMatrix::zeros(n, n);
        let mut triplets: std::collections::HashMap<usize, Vec<(usize, usize, f64)>> =
            std::collections::HashMap::new();
        let mut scale = 1.0f64;
        for r in 0..n {
            for c in r..n {
                let e = m.entry(r, c);
                f0[(r, c)] = e.constant;
                f0[(c, r)] = e.constant;
                scale = scale.max(e.constant.abs());
                for &(idx, v) in &e.terms {
                    triplets.entry(idx).or_default().push((r, c, v));
                    scale = scale.max(v.abs());
                }
            }
        }
        let scale = 1.0 / scale;
        f0 *= scale;
        let mut vars: Vec<(usize, PsdCoeff)> = triplets
            .into_iter()
            .map(|(idx, mut tri)| {
                for t in tri.iter_mut() {
                    t.2 *= scale;
                }
                (idx, classify_coeff(tri, n))
            })
            .collect();
        vars.sort_unstable_by_key(|(idx, _)| *idx);
        psd.push(PsdBlock { n, f0, vars });
    }

    Ok(Problem {
        k,
        grad,
        hess,
        offset,
        lp: LpBlock {
            f0: lp_f0,
            rows: lp_rows,
        },
        psd,
    })
}

/// Detects low-rank structure of a sparse symmetric coefficient matrix
/// by an eigendecomposition restricted to its support. Falls back to the
/// triplet form when the rank exceeds 4 or reconstruction is inexact.
fn classify_coeff(triplets: Vec<(usize, usize, f64)>, n: usize) -> PsdCoeff {
    let mut support: Vec<usize> = triplets.iter().flat_map(|&(r, c, _)| [r, c]).collect();
    support.sort_unstable();
    support.dedup();
    let s = support.len();
    if s == 0 {
        return PsdCoeff::Dense(triplets);
    }
    if s > 600 {
        return PsdCoeff::Dense(triplets);
    }
    let pos: std::collections::HashMap<usize, usize> =
        support.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let mut compact = DMatrix::zeros(s, s);
    for &(r, c, v) in &triplets {
        let (ri, ci) = (pos[&r], pos[&c]);
        compact[(ri, ci)] = v;
        compact[(ci, ri)] = v;
    }
    let eig = compact.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_abs == 0.0 {
        return PsdCoeff::Dense(triplets);
    }
    let idx: Vec<usize> = (0..s)
        .filter(|&i| eig.eigenvalues[i].abs() > 1e-12 * max_abs)
        .collect();
    if idx.len() > 4 {
        return PsdCoeff::Dense(triplets);
    }
    let mut factors = Vec::with_capacity(idx.len());
    for &i in &idx {
        let lam = eig.eigenvalues[i];
        let mut u = DVector::zeros(n);
        for (si, &row) in support.iter().enumerate() {
            u[row] = eig.eigenvectors[(si, i)];
        }
        factors.push((lam, u));
    }
    // Verify the reconstruction before trusting the factors.
    let mut worst = 0.0f64;
    for &(r, c, v) in &triplets {
        let mut acc = 0.0;
        for (lam, u) in &factors {
            acc += lam * u[r] * u[c];
        }
        worst = worst.max((acc - v).abs());
    }
    if worst > 1e-10 * max_abs.max(1.0) {
        return PsdCoeff::Dense(triplets);
    }
    PsdCoeff::Factored(factors)
}

fn coeff_dot(coeff: &PsdCoeff, y: &DMatrix<f64>) -> f64 {
    match coeff {
        PsdCoeff::Factored(factors) => factors
            .iter()
            .map(|(lam, u)| {
                let yu = y * u;
                lam * u.dot(&yu)
            })
            .sum(),
        PsdCoeff::Dense(triplets) => {
            let mut acc = 0.0;
            for &(r, c, v) in triplets {
                acc += if r == c {
                    v * y[(r, c)]
                } else {
                    2.0 * v * y[(r, c)]
                };
            }
            acc
        }
    }
}

fn coeff_add_scaled(coeff: &PsdCoeff, alpha: f64, out: &mut DMatrix<f64>) {
    if alpha == 0.0 {
        return;
    }
    match coeff {
        PsdCoeff::Factored(factors) => {
            for (lam, u) in factors {
                let w = alpha * lam;
                // out += w * u u'
                let n = u.len();
                for c in 0..n {
                    let uc = u[c];
                    if uc == 0.0 {
                        continue;
                    }
                    let wc = w * uc;
                    for r in 0..n {
                        out[(r, c)] += wc * u[r];
                    }
                }
            }
        }
        PsdCoeff::Dense(triplets) => {
            for &(r, c, v) in triplets {
                out[(r, c)] += alpha * v;
                if r != c {
                    out[(c, r)] += alpha * v;
                }
            }
        }
    }
}

fn sym_eigen(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let eig = m.clone().symmetric_eigen();
    (eig.eigenvectors, eig.eigenvalues)
}

fn min_eig_sym(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

struct Iterate {
    y: Vec<f64>,
    lp_x: Vec<f64>,
    lp_s: Vec<f64>,
    psd_x: Vec<DMatrix<f64>>,
    psd_s: Vec<DMatrix<f64>>,
}

struct Direction {
    dy: Vec<f64>,
    lp_dx: Vec<f64>,
    lp_ds: Vec<f64>,
    psd_dx: Vec<DMatrix<f64>>,
    psd_ds: Vec<DMatrix<f64>>,
}

fn run(prog: &ConicProgram, p: &Problem, tol: f64) -> ConicSolution {
    let k = p.k;
    let m_lp = p.lp.f0.len();
    let degree: f64 = m_lp as f64 + p.psd.iter().map(|b| b.n as f64).sum::<f64>();
    if degree == 0.0 {
        return solve_unconstrained(prog, p);
    }
    let gap_tol = (10.0 * tol).max(1e-9);

    // Initial iterate: y = 0, S and X proportional to identity at a
    // scale matched to the data.
    let mut it = Iterate {
        y: vec![0.0; k],
        lp_x: vec![0.0; m_lp],
        lp_s: vec![0.0; m_lp],
        psd_x: Vec::new(),
        psd_s: Vec::new(),
    };
    let grad_scale = p.grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for r in 0..m_lp {
        it.lp_s[r] = (2.0 * p.lp.f0[r].abs()).max(10.0);
        it.lp_x[r] = (1.0 + grad_scale).max(10.0);
    }
    for b in &p.psd {
        let f0_scale = b.f0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let s_scale = (2.0 * f0_scale).max(10.0).max((b.n as f64).sqrt());
        let x_scale = (1.0 + grad_scale).max(10.0).max((b.n as f64).sqrt());
        it.psd_s.push(DMatrix::identity(b.n, b.n) * s_scale);
        it.psd_x.push(DMatrix::identity(b.n, b.n) * x_scale);
    }

    let mut m_buf = vec![0.0f64; k * k];
    let mut best_metric = f64::INFINITY;
    let mut stall = 0usize;

    for iter in 0..MAX_ITER {
        // Residuals.
        let (r_s_lp, r_s_psd) = dual_residuals(p, &it);
        let r_y = stationarity_residual(p, &it);

        let gap = complementarity_gap(p, &it);
        let mu = gap / degree;
        let pobj = objective(p, &it.y);
        let rel_gap = gap / (1.0 + pobj.abs());
        let feas_s = r_s_lp.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(
            r_s_psd
                .iter()
                .map(|m| m.iter().fold(0.0f64, |a, v| a.max(v.abs())))
                .fold(0.0, f64::max),
        );
        let feas_y = r_y.iter().fold(0.0f64, |a, v| a.max(v.abs())) / (1.0 + grad_scale);

        let metric = rel_gap.max(feas_s).max(feas_y);
        if std::env::var_os("SLSREG_IPM_TRACE").is_some() {
            eprintln!(
                "ipm iter {iter:3}  mu={mu:9.2e}  gap={rel_gap:9.2e}  feas_s={feas_s:9.2e}  feas_y={feas_y:9.2e}  pobj={pobj:12.5e}"
            );
        }
        if metric < best_metric * 0.999 {
            best_metric = metric;
            stall = 0;
        } else {
            stall += 1;
        }

        if feas_s <= tol && feas_y <= (100.0 * tol).max(1e-7) && rel_gap <= gap_tol {
            return finish(prog, p, &it, SolveStatus::Optimal, feas_y, iter);
        }

        // Divergence-based infeasibility and unboundedness flags.
        let x_norm = it.lp_x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(
            it.psd_x
                .iter()
                .map(|m| m.iter().fold(0.0f64, |a, v| a.max(v.abs())))
                .fold(0.0, f64::max),
        );
        let y_norm = it.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if x_norm > 1e11 {
            // The multiplier side is a Farkas ray: no strictly feasible
            // S(y) exists.
            return ConicSolution::failure(SolveStatus::Infeasible);
        }
        if y_norm > 1e11 {
            return ConicSolution::failure(SolveStatus::Unbounded);
        }
        if stall > 20 {
            let status = if metric <= 1e3 * tol.max(1e-8) {
                SolveStatus::Optimal
            } else {
                SolveStatus::NumericalFailure
            };
            return finish(prog, p, &it, status, feas_y, iter);
        }

        // NT scalings; breakdown near the boundary ends the run with a
        // proximity-based classification of the current iterate.
        let near_opt_status = || {
            if metric <= 1e3 * tol.max(1e-8) {
                SolveStatus::Optimal
            } else {
                SolveStatus::NumericalFailure
            }
        };
        let lp_w2: Vec<f64> = (0..m_lp).map(|r| it.lp_x[r] / it.lp_s[r]).collect();
        let mut scalings = Vec::with_capacity(p.psd.len());
        let mut broke_down = false;
        for bi in 0..p.psd.len() {
            match nt_scaling(&it.psd_x[bi], &it.psd_s[bi]) {
                Some(sc) => scalings.push(sc),
                None => {
                    broke_down = true;
                    break;
                }
            }
        }
        if !broke_down {
            assemble_schur(p, &lp_w2, &scalings, &mut m_buf);
            broke_down = !cholesky_in_place(&mut m_buf, k);
        }
        if broke_down {
            return finish(prog, p, &it, near_opt_status(), feas_y, iter);
        }

        // Predictor (affine direction).
        let rc_lp_aff: Vec<f64> = (0..m_lp).map(|r| -it.lp_x[r]).collect();
        let rc_psd_aff: Vec<DMatrix<f64>> = it.psd_x.iter().map(|x| -x.clone()).collect();
        let aff = solve_direction(
            p,
            &lp_w2,
            &scalings,
            &m_buf,
            &r_s_lp,
            &r_s_psd,
            &r_y,
            &rc_lp_aff,
            &rc_psd_aff,
        );

        let (ax, asx) = max_steps(p, &it, &aff, &scalings);
        let gap_aff = affine_gap(p, &it, &aff, ax, asx);
        let mu_aff = gap_aff / degree;
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-10, 1.0);

        // Corrector.
        let mut rc_lp = Vec::with_capacity(m_lp);
        for r in 0..m_lp {
            rc_lp.push(
                sigma * mu / it.lp_s[r] - it.lp_x[r] - aff.lp_dx[r] * aff.lp_ds[r] / it.lp_s[r],
            );
        }
        let mut rc_psd = Vec::with_capacity(p.psd.len());
        for (bi, _) in p.psd.iter().enumerate() {
            let sc = &scalings[bi];
            // Scaled affine directions in the frame where V is diagonal.
            let dxh = &sc.ginv * &aff.psd_dx[bi] * sc.ginv.transpose();
            let dsh = sc.g.transpose() * &aff.psd_ds[bi] * &sc.g;
            let prod = &dxh * &dsh;
            let n = prod.nrows();
            let mut u = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let sym = 0.5 * (prod[(i, j)] + prod[(j, i)]);
                    u[(i, j)] = 2.0 * sym / (sc.lam[i] + sc.lam[j]);
                }
            }
            let corr = &sc.g * u * sc.g.transpose();
            let rc = &sc.s_inv * (sigma * mu) - &it.psd_x[bi] - corr;
            // Symmetrize against accumulated round-off.
            rc_psd.push(0.5 * (&rc + rc.transpose()));
        }
        let dir = solve_direction(
            p, &lp_w2, &scalings, &m_buf, &r_s_lp, &r_s_psd, &r_y, &rc_lp, &rc_psd,
        );

        let (mut axc, mut asc) = max_steps(p, &it, &dir, &scalings);
        let tau = if rel_gap < 1e-4 { 0.995 } else { 0.98 };
        axc = (tau * axc).min(1.0);
        asc = (tau * asc).min(1.0);

        // Update.
        for i in 0..k {
            it.y[i] += asc * dir.dy[i];
        }
        for r in 0..m_lp {
            it.lp_x[r] += axc * dir.lp_dx[r];
            it.lp_s[r] += asc * dir.lp_ds[r];
        }
        for bi in 0..p.psd.len() {
            it.psd_x[bi] += &dir.psd_dx[bi] * axc;
            it.psd_s[bi] += &dir.psd_ds[bi] * asc;
            let sym_x = 0.5 * (&it.psd_x[bi] + it.psd_x[bi].transpose());
            let sym_s = 0.5 * (&it.psd_s[bi] + it.psd_s[bi].transpose());
            it.psd_x[bi] = sym_x;
            it.psd_s[bi] = sym_s;
        }
    }

    // Iteration cap: report optimal only when genuinely close.
    let (r_s_lp, r_s_psd) = dual_residuals(p, &it);
    let r_y = stationarity_residual(p, &it);
    let gap = complementarity_gap(p, &it);
    let pobj = objective(p, &it.y);
    let feas_s = r_s_lp.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(
        r_s_psd
            .iter()
            .map(|m| m.iter().fold(0.0f64, |a, v| a.max(v.abs())))
            .fold(0.0, f64::max),
    );
    let feas_y = r_y.iter().fold(0.0f64, |a, v| a.max(v.abs())) / (1.0 + grad_scale);
    let status = if feas_s <= 1e3 * tol && gap / (1.0 + pobj.abs()) <= 1e3 * gap_tol {
        SolveStatus::Optimal
    } else {
        SolveStatus::NumericalFailure
    };
    finish(prog, p, &it, status, feas_y, MAX_ITER)
}

/// A program with no cone constraints is an unconstrained QP: solve the
/// normal equations, or flag unboundedness when the quadratic part
/// cannot hold the gradient.
fn solve_unconstrained(prog: &ConicProgram, p: &Problem) -> ConicSolution {
    let k = p.k;
    if p.hess.is_empty() {
        return ConicSolution::failure(if p.grad.iter().all(|&g| g == 0.0) {
            SolveStatus::Optimal
        } else {
            SolveStatus::Unbounded
        });
    }
    let mut h = vec![0.0f64; k * k];
    for &(i, j, v) in &p.hess {
        h[j * k + i] += v;
        if i != j {
            h[i * k + j] += v;
        }
    }
    if !cholesky_in_place(&mut h, k) {
        return ConicSolution::failure(SolveStatus::NumericalFailure);
    }
    let mut y: Vec<f64> = p.grad.iter().map(|g| -g).collect();
    chol_solve(&h, k, &mut y);
    if y.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
        return ConicSolution::failure(SolveStatus::Unbounded);
    }
    let mut resid = 0.0f64;
    {
        // ‖Hy + c‖ relative check against escalated regularization.
        let mut hy = p.grad.clone();
        for &(i, j, v) in &p.hess {
            hy[i] += v * y[j];
            if i != j {
                hy[j] += v * y[i];
            }
        }
        for v in &hy {
            resid = resid.max(v.abs());
        }
    }
    ConicSolution {
        status: SolveStatus::Optimal,
        values: prog.extract_values(&y),
        objective_value: objective(p, &y),
        residuals: Residuals {
            primal: 0.0,
            dual: resid,
        },
        iterations: 1,
    }
}

fn objective(p: &Problem, y: &[f64]) -> f64 {
    let mut v = p.offset;
    for (g, yi) in p.grad.iter().zip(y.iter()) {
        v += g * yi;
    }
    for &(i, j, h) in &p.hess {
        v += 0.5 * h * y[i] * y[j] * if i == j { 1.0 } else { 2.0 };
    }
    v
}

/// `R_S = F0 + A(y) - S` per block.
fn dual_residuals(p: &Problem, it: &Iterate) -> (Vec<f64>, Vec<DMatrix<f64>>) {
    let mut lp = Vec::with_capacity(p.lp.f0.len());
    for r in 0..p.lp.f0.len() {
        let mut v = p.lp.f0[r];
        for &(i, c) in &p.lp.rows[r] {
            v += c * it.y[i];
        }
        lp.push(v - it.lp_s[r]);
    }
    let mut psd = Vec::with_capacity(p.psd.len());
    for (bi, b) in p.psd.iter().enumerate() {
        let mut m = b.f0.clone();
        for (idx, coeff) in &b.vars {
            coeff_add_scaled(coeff, it.y[*idx], &mut m);
        }
        m -= &it.psd_s[bi];
        psd.push(m);
    }
    (lp, psd)
}

/// `r_y = A*(X) - c - Hy`.
fn stationarity_residual(p: &Problem, it: &Iterate) -> Vec<f64> {
    let mut r = vec![0.0; p.k];
    for (ri, g) in r.iter_mut().zip(p.grad.iter()) {
        *ri -= g;
    }
    for &(i, j, h) in &p.hess {
        r[i] -= h * it.y[j];
        if i != j {
            r[j] -= h * it.y[i];
        }
    }
    for (ri, row) in p.lp.rows.iter().enumerate() {
        let x = it.lp_x[ri];
        for &(i, c) in row {
            r[i] += c * x;
        }
    }
    for (bi, b) in p.psd.iter().enumerate() {
        for (idx, coeff) in &b.vars {
            r[*idx] += coeff_dot(coeff, &it.psd_x[bi]);
        }
    }
    r
}

fn complementarity_gap(p: &Problem, it: &Iterate) -> f64 {
    let mut gap = 0.0;
    for r in 0..p.lp.f0.len() {
        gap += it.lp_x[r] * it.lp_s[r];
    }
    for bi in 0..p.psd.len() {
        gap += it.psd_x[bi]
            .iter()
            .zip(it.psd_s[bi].iter())
            .map(|(a, b)| a * b)
            .sum::<f64>();
    }
    gap
}

/// NT scaling of one PSD pair: factor `X = Lx Lxᵀ`, eigendecompose
/// `Lxᵀ S Lx = Q D Qᵀ`, then `G = Lx Q D^{-1/4}` satisfies
/// `G Gᵀ S G Gᵀ = X` and both scaled variables equal `V = D^{1/2}`.
fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<PsdScaling> {
    let n = x.nrows();
    let lx_mat = x.clone().cholesky()?.l();
    let inner = lx_mat.transpose() * s * &lx_mat;
    let (q, d) = sym_eigen(&(0.5 * (&inner + inner.transpose())));
    if d.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let mut g = &lx_mat * &q;
    for c in 0..n {
        let sc = d[c].powf(-0.25);
        for r in 0..n {
            g[(r, c)] *= sc;
        }
    }
    // G^{-1} = D^{1/4} Qᵀ Lx^{-1}, from the triangular solve Lx·Z = I.
    let lx_inv = lx_mat.solve_lower_triangular(&DMatrix::identity(n, n))?;
    let mut ginv = q.transpose() * lx_inv;
    for r in 0..n {
        let sc = d[r].powf(0.25);
        for c in 0..n {
            ginv[(r, c)] *= sc;
        }
    }
    let id_err = (&g * &ginv - DMatrix::identity(n, n))
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if id_err > 1e-6 {
        return None;
    }
    let lam = DVector::from_fn(n, |i, _| d[i].sqrt());
    // S^{-1} = G V^{-1} Gᵀ
    let mut gv = g.clone();
    for c in 0..n {
        let sc = 1.0 / lam[c];
        for r in 0..n {
            gv[(r, c)] *= sc;
        }
    }
    let s_inv = &gv * g.transpose();
    Some(PsdScaling {
        g,
        ginv,
        lam,
        s_inv,
    })
}

/// Dense Schur matrix `M = H + Σ_lp w² a aᵀ + Σ_psd tr(F_i W F_j W)`,
/// stored column-major.
fn assemble_schur(p: &Problem, lp_w2: &[f64], scalings: &[PsdScaling], m: &mut [f64]) {
    let k = p.k;
    m.fill(0.0);
    for &(i, j, h) in &p.hess {
        m[j * k + i] += h;
        if i != j {
            m[i * k + j] += h;
        }
    }
    for (ri, row) in p.lp.rows.iter().enumerate() {
        let w2 = lp_w2[ri];
        for a_idx in 0..row.len() {
            let (ia, va) = row[a_idx];
            let wa = w2 * va;
            for &(ib, vb) in &row[a_idx..] {
                m[ib * k + ia] += wa * vb;
                if ia != ib {
                    m[ia * k + ib] += wa * vb;
                }
            }
        }
    }
    for (bi, b) in p.psd.iter().enumerate() {
        let sc = &scalings[bi];
        let n = b.n;
        // Back-transform factor vectors once; Gram entries give the
        // factored-factored trace terms.
        let mut factor_owner: Vec<(usize, f64)> = Vec::new(); // (var position, sigma)
        let mut stack_cols: Vec<DVector<f64>> = Vec::new();
        let mut dense_vars: Vec<usize> = Vec::new();
        for (pos, (_, coeff)) in b.vars.iter().enumerate() {
            match coeff {
                PsdCoeff::Factored(factors) => {
                    for (lam, u) in factors {
                        factor_owner.push((pos, *lam));
                        stack_cols.push(sc.g.transpose() * u);
                    }
                }
                PsdCoeff::Dense(_) => dense_vars.push(pos),
            }
        }
        let nf = stack_cols.len();
        if nf > 0 {
            let mut stack = DMatrix::zeros(n, nf);
            for (c, col) in stack_cols.iter().enumerate() {
                stack.column_mut(c).copy_from(col);
            }
            let gram = stack.transpose() * &stack;
            for a in 0..nf {
                let (pa, sa) = factor_owner[a];
                let ia = b.vars[pa].0;
                for c in a..nf {
                    let (pc, scg) = factor_owner[c];
                    let ic = b.vars[pc].0;
                    let v = sa * scg * gram[(a, c)] * gram[(a, c)];
                    let (lo, hi) = if ia <= ic { (ia, ic) } else { (ic, ia) };
                    m[hi * k + lo] += v;
                    if lo != hi {
                        m[lo * k + hi] += v;
                    } else if a != c {
                        // Same variable, two factor pairs: the (a,c) and
                        // (c,a) products both contribute.
                        m[hi * k + lo] += v;
                    }
                }
            }
            // Cross terms factored x factored with a != c already
            //双-counted above via symmetry handling.
        }
        // Dense variables: sandwich and trace against every coefficient.
        let w_full = if dense_vars.is_empty() {
            None
        } else {
            Some(&sc.g * sc.g.transpose())
        };
        for &pd in &dense_vars {
            let (global_d, coeff_d) = &b.vars[pd];
            let mut fd = DMatrix::zeros(n, n);
            coeff_add_scaled(coeff_d, 1.0, &mut fd);
            let w = w_full.as_ref().expect("dense vars present");
            let wfw = w * fd * w;
            for (global_j, coeff_j) in &b.vars {
                let v = coeff_dot(coeff_j, &wfw);
                let (lo, hi) = if global_j <= global_d {
                    (*global_j, *global_d)
                } else {
                    (*global_d, *global_j)
                };
                // Dense-dense pairs appear twice (once per dense var);
                // halve the duplicate.
                let is_dense_pair = b
                    .vars
                    .iter()
                    .find(|(g, _)| g == global_j)
                    .map(|(_, c)| matches!(c, PsdCoeff::Dense(_)))
                    .unwrap_or(false);
                let v = if is_dense_pair && global_j != global_d {
                    0.5 * v
                } else {
                    v
                };
                m[hi * k + lo] += v;
                if lo != hi {
                    m[lo * k + hi] += v;
                }
            }
        }
    }
}

/// In-place lower Cholesky with escalating diagonal regularization.
fn cholesky_in_place(m: &mut [f64], k: usize) -> bool {
    let mut max_diag = 0.0f64;
    for i in 0..k {
        max_diag = max_diag.max(m[i * k + i].abs());
    }
    let backup = m.to_vec();
    let mut reg = 0.0;
    for attempt in 0..4 {
        if attempt > 0 {
            reg = if reg == 0.0 {
                1e-12 * (1.0 + max_diag)
            } else {
                reg * 1e3
            };
            m.copy_from_slice(&backup);
            for i in 0..k {
                m[i * k + i] += reg;
            }
        }
        let mut info = 0;
        unsafe {
            lapack::dpotrf(b'L', k as i32, m, k as i32, &mut info);
        }
        if info == 0 {
            return true;
        }
    }
    false
}

fn chol_solve(m: &[f64], k: usize, rhs: &mut [f64]) {
    let mut info = 0;
    unsafe {
        lapack::dpotrs(b'L', k as i32, 1, m, k as i32, rhs, k as i32, &mut info);
    }
    debug_assert_eq!(info, 0);
}

/// Solves for one direction given the factored Schur matrix and the
/// complementarity right-hand sides.
#[allow(clippy::too_many_arguments)]
fn solve_direction(
    p: &Problem,
    lp_w2: &[f64],
    scalings: &[PsdScaling],
    m_chol: &[f64],
    r_s_lp: &[f64],
    r_s_psd: &[DMatrix<f64>],
    r_y: &[f64],
    rc_lp: &[f64],
    rc_psd: &[DMatrix<f64>],
) -> Direction {
    let k = p.k;
    // rhs = A*(Rc) - A*(W R_S W) + r_y
    let mut rhs = r_y.to_vec();
    for (ri, row) in p.lp.rows.iter().enumerate() {
        let scal = rc_lp[ri] - lp_w2[ri] * r_s_lp[ri];
        for &(i, c) in row {
            rhs[i] += c * scal;
        }
    }
    let mut w_rs_w = Vec::with_capacity(p.psd.len());
    for (bi, b) in p.psd.iter().enumerate() {
        let sc = &scalings[bi];
        let w = &sc.g * sc.g.transpose();
        let wrw = &w * &r_s_psd[bi] * &w;
        for (idx, coeff) in &b.vars {
            rhs[*idx] += coeff_dot(coeff, &rc_psd[bi]) - coeff_dot(coeff, &wrw);
        }
        w_rs_w.push((w, wrw));
    }
    chol_solve(m_chol, k, &mut rhs);
    let dy = rhs;

    // Back substitution: ΔS = A(Δy) + R_S; ΔX = Rc - W ΔS W.
    let mut lp_ds = Vec::with_capacity(p.lp.f0.len());
    let mut lp_dx = Vec::with_capacity(p.lp.f0.len());
    for (ri, row) in p.lp.rows.iter().enumerate() {
        let mut ds = r_s_lp[ri];
        for &(i, c) in row {
            ds += c * dy[i];
        }
        lp_ds.push(ds);
        lp_dx.push(rc_lp[ri] - lp_w2[ri] * ds);
    }
    let mut psd_ds = Vec::with_capacity(p.psd.len());
    let mut psd_dx = Vec::with_capacity(p.psd.len());
    for (bi, b) in p.psd.iter().enumerate() {
        let mut ds = r_s_psd[bi].clone();
        for (idx, coeff) in &b.vars {
            coeff_add_scaled(coeff, dy[*idx], &mut ds);
        }
        let (w, _) = &w_rs_w[bi];
        let wdsw = w * &ds * w;
        let dx = &rc_psd[bi] - 0.5 * (&wdsw + wdsw.transpose());
        psd_ds.push(ds);
        psd_dx.push(dx);
    }
    Direction {
        dy,
        lp_dx,
        lp_ds,
        psd_dx,
        psd_ds,
    }
}

/// Largest steps keeping X and S in the cone interior, computed in the
/// scaled frame where both variables share the diagonal spectrum.
fn max_steps(p: &Problem, it: &Iterate, dir: &Direction, scalings: &[PsdScaling]) -> (f64, f64) {
    let mut ax = f64::INFINITY;
    let mut asx = f64::INFINITY;
    for r in 0..p.lp.f0.len() {
        if dir.lp_dx[r] < 0.0 {
            ax = ax.min(-it.lp_x[r] / dir.lp_dx[r]);
        }
        if dir.lp_ds[r] < 0.0 {
            asx = asx.min(-it.lp_s[r] / dir.lp_ds[r]);
        }
    }
    for (bi, _) in p.psd.iter().enumerate() {
        let sc = &scalings[bi];
        let dxh = &sc.ginv * &dir.psd_dx[bi] * sc.ginv.transpose();
        let dsh = sc.g.transpose() * &dir.psd_ds[bi] * &sc.g;
        let scale_frame = |mh: &DMatrix<f64>| {
            let n = mh.nrows();
            let mut out = mh.clone();
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] /= (sc.lam[i] * sc.lam[j]).sqrt();
                }
            }
            0.5 * (&out + out.transpose())
        };
        let ex = min_eig_sym(&scale_frame(&dxh));
        if ex < 0.0 {
            ax = ax.min(-1.0 / ex);
        }
        let es = min_eig_sym(&scale_frame(&dsh));
        if es < 0.0 {
            asx = asx.min(-1.0 / es);
        }
    }
    (ax.min(1.0), asx.min(1.0))
}

fn affine_gap(p: &Problem, it: &Iterate, aff: &Direction, ax: f64, asx: f64) -> f64 {
    let mut gap = 0.0;
    for r in 0..p.lp.f0.len() {
        gap += (it.lp_x[r] + ax * aff.lp_dx[r]) * (it.lp_s[r] + asx * aff.lp_ds[r]);
    }
    for bi in 0..p.psd.len() {
        let x = &it.psd_x[bi] + &aff.psd_dx[bi] * ax;
        let s = &it.psd_s[bi] + &aff.psd_ds[bi] * asx;
        gap += x.iter().zip(s.iter()).map(|(a, b)| a * b).sum::<f64>();
    }
    gap.max(0.0)
}

fn finish(
    prog: &ConicProgram,
    p: &Problem,
    it: &Iterate,
    status: SolveStatus,
    dual_residual: f64,
    iterations: usize,
) -> ConicSolution {
    if status != SolveStatus::Optimal {
        let mut sol = ConicSolution::failure(status);
        sol.iterations = iterations;
        return sol;
    }
    let values = prog.extract_values(&it.y);
    ConicSolution {
        status,
        values,
        objective_value: objective(p, &it.y),
        residuals: Residuals {
            primal: 0.0,
            dual: dual_residual,
        },
        iterations,
    }
}
