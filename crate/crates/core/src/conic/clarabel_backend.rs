//! Bridge from [`ConicProgram`](super::ConicProgram) to the Clarabel
//! interior-point solver: equalities map to the zero cone, elementwise
//! inequalities to the nonnegative cone, and PSD constraints to the
//! scaled-triangle PSD cone. Sum-of-squares objective terms become the
//! quadratic cost term.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, PSDTriangleConeT, SolverStatus, SupportedConeT,
};

use super::{ConicProgram, ConicSolution, Residuals, SolveStatus};

/// OpenBLAS spins worker threads per core by default, which both hurts
/// determinism of timings and fights with job-level parallelism; pin the
/// BLAS used by every solver path to one thread.
pub(crate) fn pin_blas_single_thread() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| unsafe {
        extern "C" {
            fn openblas_set_num_threads(n: i32);
        }
        openblas_set_num_threads(1);
    });
}

struct TripletAccumulator {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl TripletAccumulator {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }

    fn into_csc(self, nrows: usize, ncols: usize) -> CscMatrix<f64> {
        let nnz = self.vals.len();
        let mut order: Vec<usize> = (0..nnz).collect();
        order.sort_unstable_by_key(|&k| (self.cols[k], self.rows[k]));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(nnz);
        let mut nzval = Vec::with_capacity(nnz);
        for &k in &order {
            colptr[self.cols[k] + 1] += 1;
            rowval.push(self.rows[k]);
            nzval.push(self.vals[k]);
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix::new(nrows, ncols, colptr, rowval, nzval)
    }
}

pub(super) fn solve(prog: &ConicProgram, tol: f64) -> ConicSolution {
    pin_blas_single_thread();
    let n = prog.num_scalars();

    // Quadratic objective: ½ y'Hy + q'y; the constant offset is folded
    // back in when the objective is re-evaluated on the solution.
    let (h_triplets, q, _offset) = prog.quadratic_objective();
    let mut p_acc = TripletAccumulator::new();
    for (i, j, v) in h_triplets {
        p_acc.push(i, j, v);
    }
    let p = p_acc.into_csc(n, n);

    // Constraint rows: zero cone (equalities), nonnegative cone
    // (inequalities), then one PSD triangle cone per PSD constraint.
    let mut a_acc = TripletAccumulator::new();
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0usize;

    let mut eq_rows = 0usize;
    for (_, m) in prog.equality_exprs() {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let e = m.entry(i, j);
                if e.is_zero() {
                    continue;
                }
                // a'x = -const
                for &(idx, c) in &e.terms {
                    a_acc.push(row, idx, c);
                }
                b.push(-e.constant);
                row += 1;
                eq_rows += 1;
            }
        }
    }
    if eq_rows > 0 {
        cones.push(SupportedConeT::ZeroConeT(eq_rows));
    }

    let mut ineq_rows = 0usize;
    for (_, m) in prog.inequality_exprs() {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let e = m.entry(i, j);
                // s = b - Ax = expr >= 0
                for &(idx, c) in &e.terms {
                    a_acc.push(row, idx, -c);
                }
                b.push(e.constant);
                row += 1;
                ineq_rows += 1;
            }
        }
    }
    if ineq_rows > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(ineq_rows));
    }

    let sq2 = std::f64::consts::SQRT_2;
    for (_, m) in prog.psd_exprs() {
        let dim = m.rows();
        // svec in column-major upper-triangle order, off-diagonals
        // scaled by sqrt(2), matching the backend convention.
        for col in 0..dim {
            for r in 0..=col {
                let e = m.entry(r, col);
                let scale = if r == col { 1.0 } else { sq2 };
                for &(idx, c) in &e.terms {
                    a_acc.push(row, idx, -scale * c);
                }
                b.push(scale * e.constant);
                row += 1;
            }
        }
        cones.push(PSDTriangleConeT(dim));
    }

    let a = a_acc.into_csc(row, n);
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_feas(tol)
        .tol_gap_abs(10.0 * tol)
        .tol_gap_rel(10.0 * tol)
        .max_iter(200)
        .build()
        .expect("static settings are valid");

    let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
        Ok(s) => s,
        Err(_) => return ConicSolution::failure(SolveStatus::NumericalFailure),
    };
    solver.solve();

    let status = match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };

    if status != SolveStatus::Optimal {
        return ConicSolution {
            status,
            values: Default::default(),
            objective_value: f64::NAN,
            residuals: Residuals {
                primal: solver.info.res_primal,
                dual: solver.info.res_dual,
            },
            iterations: solver.info.iterations as usize,
        };
    }

    let x = solver.solution.x.clone();
    ConicSolution {
        status,
        values: prog.extract_values(&x),
        objective_value: prog.objective_at(&x),
        residuals: Residuals {
            primal: solver.info.res_primal,
            dual: solver.info.res_dual,
        },
        iterations: solver.info.iterations as usize,
    }
}
