//! A minimal solver-agnostic model of the conic programs built here:
//! named matrix/scalar variables, an affine objective plus optional
//! sum-of-squares terms, and equality / elementwise-inequality / PSD
//! constraint families.
//!
//! Two backends implement the solve contract: a general interior-point
//! backend (Clarabel) that accepts every program, and a structured
//! interior-point method for equality-free programs whose PSD
//! coefficients are low-rank, which is what the controller syntheses
//! produce at scale. `solve` picks automatically; `solve_with` pins a
//! backend.

mod clarabel_backend;
mod ipm;

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Handle to a declared variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarRef(usize);

/// Structure of a declared variable. Lower-block-triangular structure
/// pins every entry strictly above the block diagonal to zero by
/// variable elimination: pinned entries are not decision scalars.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarStructure {
    Scalar,
    Free {
        rows: usize,
        cols: usize,
    },
    LowerBlockTriangular {
        rows: usize,
        cols: usize,
        block_rows: usize,
        block_cols: usize,
    },
}

#[derive(Clone, Debug)]
struct VarInfo {
    name: String,
    structure: VarStructure,
    offset: usize,
    len: usize,
}

impl VarInfo {
    fn shape(&self) -> (usize, usize) {
        match self.structure {
            VarStructure::Scalar => (1, 1),
            VarStructure::Free { rows, cols } => (rows, cols),
            VarStructure::LowerBlockTriangular { rows, cols, .. } => (rows, cols),
        }
    }

    /// Scalar index of entry (i, j) inside this variable, if it is free.
    fn entry_index(&self, i: usize, j: usize) -> Option<usize> {
        match self.structure {
            VarStructure::Scalar => {
                debug_assert!(i == 0 && j == 0);
                Some(self.offset)
            }
            VarStructure::Free { cols, .. } => Some(self.offset + i * cols + j),
            VarStructure::LowerBlockTriangular {
                cols,
                block_rows,
                block_cols,
                ..
            } => {
                if j / block_cols > i / block_rows {
                    return None;
                }
                // Count free entries in row-major order up to (i, j).
                let full_rows_free: usize = (0..i)
                    .map(|r| {
                        let max_block = r / block_rows;
                        cols.min((max_block + 1) * block_cols)
                    })
                    .sum();
                Some(self.offset + full_rows_free + j)
            }
        }
    }

    fn free_len(&self) -> usize {
        match self.structure {
            VarStructure::Scalar => 1,
            VarStructure::Free { rows, cols } => rows * cols,
            VarStructure::LowerBlockTriangular {
                rows,
                cols,
                block_rows,
                block_cols,
            } => (0..rows)
                .map(|r| cols.min((r / block_rows + 1) * block_cols))
                .sum(),
        }
    }
}

/// A sparse affine expression `constant + Σ coeff·x[idx]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn variable(idx: usize) -> Self {
        Self {
            terms: vec![(idx, 1.0)],
            constant: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.iter().all(|(_, c)| *c == 0.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.constant += other.constant;
        out.terms.extend_from_slice(&other.terms);
        out.normalize();
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn add_term(&mut self, idx: usize, coeff: f64) {
        self.terms.push((idx, coeff));
    }

    /// Merge duplicate indices and drop exact zeros.
    pub fn normalize(&mut self) {
        if self.terms.len() > 1 {
            self.terms.sort_unstable_by_key(|&(i, _)| i);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
            for &(i, c) in &self.terms {
                match merged.last_mut() {
                    Some((j, acc)) if *j == i => *acc += c,
                    _ => merged.push((i, c)),
                }
            }
            self.terms = merged;
        }
        self.terms.retain(|&(_, c)| c != 0.0);
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }
}

/// A dense matrix of affine expressions.
#[derive(Clone, Debug)]
pub struct MatExpr {
    rows: usize,
    cols: usize,
    entries: Vec<LinExpr>,
}

impl MatExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![LinExpr::default(); rows * cols],
        }
    }

    pub fn from_const(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.entries[i * m.ncols() + j].constant = m[(i, j)];
            }
        }
        out
    }

    pub fn identity(n: usize) -> Self {
        Self::from_const(&DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &LinExpr {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut LinExpr {
        &mut self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: LinExpr) {
        self.entries[i * self.cols + j] = e;
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.entry(i, j).clone());
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.entries.iter_mut().zip(other.entries.iter()) {
            *a = a.add(b);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.entries.iter_mut().zip(other.entries.iter()) {
            *a = a.sub(b);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for e in out.entries.iter_mut() {
            *e = e.scale(s);
        }
        out
    }

    /// Left-multiply by a constant matrix: `C · self`.
    pub fn mul_const_left(&self, c: &DMatrix<f64>) -> Self {
        assert_eq!(c.ncols(), self.rows);
        let mut out = Self::zeros(c.nrows(), self.cols);
        for i in 0..c.nrows() {
            for k in 0..self.rows {
                let coeff = c[(i, k)];
                if coeff == 0.0 {
                    continue;
                }
                for j in 0..self.cols {
                    let src = self.entry(k, j);
                    if src.is_zero() {
                        continue;
                    }
                    let dst = out.entry_mut(i, j);
                    dst.constant += coeff * src.constant;
                    for &(idx, c0) in &src.terms {
                        dst.add_term(idx, coeff * c0);
                    }
                }
            }
        }
        for e in out.entries.iter_mut() {
            e.normalize();
        }
        out
    }

    /// Right-multiply by a constant matrix: `self · C`.
    pub fn mul_const_right(&self, c: &DMatrix<f64>) -> Self {
        assert_eq!(self.cols, c.nrows());
        let mut out = Self::zeros(self.rows, c.ncols());
        for i in 0..self.rows {
            for k in 0..self.cols {
                let src = self.entry(i, k);
                if src.is_zero() {
                    continue;
                }
                for j in 0..c.ncols() {
                    let coeff = c[(k, j)];
                    if coeff == 0.0 {
                        continue;
                    }
                    let dst = out.entry_mut(i, j);
                    dst.constant += coeff * src.constant;
                    for &(idx, c0) in &src.terms {
                        dst.add_term(idx, coeff * c0);
                    }
                }
            }
        }
        for e in out.entries.iter_mut() {
            e.normalize();
        }
        out
    }

    /// Stack `[[a, b], [c, d]]` into one matrix expression.
    pub fn block2x2(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        assert_eq!(a.rows, b.rows);
        assert_eq!(c.rows, d.rows);
        assert_eq!(a.cols, c.cols);
        assert_eq!(b.cols, d.cols);
        let mut out = Self::zeros(a.rows + c.rows, a.cols + b.cols);
        for i in 0..a.rows {
            for j in 0..a.cols {
                out.set(i, j, a.entry(i, j).clone());
            }
            for j in 0..b.cols {
                out.set(i, a.cols + j, b.entry(i, j).clone());
            }
        }
        for i in 0..c.rows {
            for j in 0..c.cols {
                out.set(a.rows + i, j, c.entry(i, j).clone());
            }
            for j in 0..d.cols {
                out.set(a.rows + i, c.cols + j, d.entry(i, j).clone());
            }
        }
        out
    }

    /// Max normalized asymmetry between entries (i, j) and (j, i).
    fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let a = self.entry(i, j);
                let b = self.entry(j, i);
                let diff = a.sub(b);
                let scale = 1.0
                    + a.constant.abs()
                    + b.constant.abs()
                    + a.terms.iter().map(|(_, c)| c.abs()).sum::<f64>()
                    + b.terms.iter().map(|(_, c)| c.abs()).sum::<f64>();
                let dev = diff.constant.abs().max(
                    diff.terms
                        .iter()
                        .map(|(_, c)| c.abs())
                        .fold(0.0f64, f64::max),
                );
                worst = worst.max(dev / scale);
            }
        }
        worst
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).evaluate(x))
    }
}

/// Solver outcome, returned as data rather than an error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

/// Primal/dual residual measures of a returned solution. The primal
/// measure is recomputed from the returned point against the program.
#[derive(Clone, Copy, Debug, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
}

/// Result of solving a [`ConicProgram`].
#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub values: HashMap<String, DMatrix<f64>>,
    pub objective_value: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn value(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.values.get(name)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.values.get(name).map(|m| m[(0, 0)])
    }

    pub(crate) fn failure(reason: SolveStatus) -> Self {
        Self {
            status: reason,
            values: HashMap::new(),
            objective_value: f64::NAN,
            residuals: Residuals::default(),
            iterations: 0,
        }
    }
}

/// Backend selector for [`ConicProgram::solve_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// General conic backend; accepts every program.
    Clarabel,
    /// Structured interior point for equality-free programs.
    StructuredIpm,
}

/// A conic program under construction.
#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    vars: Vec<VarInfo>,
    names: HashMap<String, usize>,
    n_scalars: usize,
    objective: LinExpr,
    squares: Vec<LinExpr>,
    equalities: Vec<(String, MatExpr)>,
    inequalities: Vec<(String, MatExpr)>,
    psd: Vec<(String, MatExpr)>,
}

/// Default feasibility tolerance handed to backends.
pub const DEFAULT_TOL: f64 = 1e-8;

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a variable; names must be unique.
    pub fn add_variable(&mut self, name: &str, structure: VarStructure) -> Result<VarRef> {
        if self.names.contains_key(name) {
            return Err(Error::DuplicateVariable(name.to_string()));
        }
        let info = VarInfo {
            name: name.to_string(),
            structure,
            offset: self.n_scalars,
            len: 0,
        };
        let len = info.free_len();
        let mut info = info;
        info.len = len;
        self.n_scalars += len;
        let idx = self.vars.len();
        self.names.insert(name.to_string(), idx);
        self.vars.push(info);
        Ok(VarRef(idx))
    }

    pub fn var(&self, name: &str) -> Result<VarRef> {
        self.names
            .get(name)
            .map(|&i| VarRef(i))
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Number of free decision scalars behind a variable.
    pub fn free_len(&self, var: VarRef) -> usize {
        self.vars[var.0].len
    }

    /// Total number of decision scalars in the program.
    pub fn num_scalars(&self) -> usize {
        self.n_scalars
    }

    pub fn has_equalities(&self) -> bool {
        !self.equalities.is_empty()
    }

    /// Affine expression of one entry; pinned entries are the constant 0.
    pub fn entry(&self, var: VarRef, i: usize, j: usize) -> LinExpr {
        let info = &self.vars[var.0];
        let (r, c) = info.shape();
        assert!(i < r && j < c, "entry ({i},{j}) out of bounds for {r}x{c}");
        match info.entry_index(i, j) {
            Some(idx) => LinExpr::variable(idx),
            None => LinExpr::constant(0.0),
        }
    }

    /// The whole variable as a matrix expression.
    pub fn var_expr(&self, var: VarRef) -> MatExpr {
        let (r, c) = self.vars[var.0].shape();
        let mut out = MatExpr::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                out.set(i, j, self.entry(var, i, j));
            }
        }
        out
    }

    pub fn scalar_expr(&self, var: VarRef) -> LinExpr {
        self.entry(var, 0, 0)
    }

    /// Sets the affine part of the objective (minimized).
    pub fn set_objective(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    /// Adds `expr²` to the objective.
    pub fn add_objective_square(&mut self, mut expr: LinExpr) {
        expr.normalize();
        self.squares.push(expr);
    }

    /// Adds `‖expr‖_F²` to the objective.
    pub fn add_objective_frobenius(&mut self, expr: &MatExpr) {
        for i in 0..expr.rows() {
            for j in 0..expr.cols() {
                let e = expr.entry(i, j).clone();
                if !e.is_zero() {
                    self.add_objective_square(e);
                }
            }
        }
    }

    /// Constrains every entry of `expr` to equal zero.
    pub fn add_equality(&mut self, label: &str, expr: MatExpr) {
        self.equalities.push((label.to_string(), expr));
    }

    /// Constrains every entry of `expr` to be nonnegative.
    pub fn add_inequality(&mut self, label: &str, expr: MatExpr) {
        self.inequalities.push((label.to_string(), expr));
    }

    /// Constrains the symmetric matrix expression to be PSD. The
    /// expression must be structurally symmetric.
    pub fn add_psd(&mut self, label: &str, expr: MatExpr) -> Result<()> {
        if expr.rows() != expr.cols() {
            return Err(Error::DimensionMismatch {
                what: "psd constraint",
                expected: "square matrix expression".into(),
                got: format!("{}x{}", expr.rows(), expr.cols()),
            });
        }
        let asym = expr.asymmetry();
        if asym > 1e-9 {
            return Err(Error::SolverFailure(format!(
                "psd constraint `{label}` is not structurally symmetric (asymmetry {asym:.3e})"
            )));
        }
        self.psd.push((label.to_string(), expr));
        Ok(())
    }

    pub(crate) fn equality_exprs(&self) -> &[(String, MatExpr)] {
        &self.equalities
    }

    pub(crate) fn inequality_exprs(&self) -> &[(String, MatExpr)] {
        &self.inequalities
    }

    pub(crate) fn psd_exprs(&self) -> &[(String, MatExpr)] {
        &self.psd
    }

    /// Effective quadratic objective pieces: Hessian triplets `2·Σ a aᵀ`
    /// (upper triangle), effective gradient, and constant offset, so that
    /// the objective is `½ yᵀHy + c_eff·y + offset`.
    ///
    /// The Hessian is accumulated densely over the compact set of scalar
    /// indices that actually appear in square terms, which keeps the
    /// assembly linear-algebra-shaped instead of hash-bound.
    pub(crate) fn quadratic_objective(&self) -> (Vec<(usize, usize, f64)>, Vec<f64>, f64) {
        let mut q = vec![0.0; self.n_scalars];
        let mut offset = self.objective.constant;
        for &(i, c) in &self.objective.terms {
            q[i] += c;
        }
        // Compact index set across all squares.
        let mut involved: Vec<usize> = self
            .squares
            .iter()
            .flat_map(|sq| sq.terms.iter().map(|&(i, _)| i))
            .collect();
        involved.sort_unstable();
        involved.dedup();
        let mut compact = HashMap::with_capacity(involved.len());
        for (ci, &gi) in involved.iter().enumerate() {
            compact.insert(gi, ci);
        }
        let nc = involved.len();
        let mut dense = vec![0.0f64; nc * nc];
        let mut local: Vec<(usize, f64)> = Vec::new();
        for sq in &self.squares {
            offset += sq.constant * sq.constant;
            local.clear();
            for &(i, ci) in &sq.terms {
                q[i] += 2.0 * sq.constant * ci;
                local.push((compact[&i], ci));
            }
            for (a, &(ia, va)) in local.iter().enumerate() {
                for &(ib, vb) in &local[a..] {
                    let (lo, hi) = if ia <= ib { (ia, ib) } else { (ib, ia) };
                    dense[lo * nc + hi] += 2.0 * va * vb;
                }
            }
        }
        let mut triplets = Vec::new();
        for lo in 0..nc {
            for hi in lo..nc {
                let v = dense[lo * nc + hi];
                if v != 0.0 {
                    triplets.push((involved[lo], involved[hi], v));
                }
            }
        }
        (triplets, q, offset)
    }

    /// Objective value at a scalar assignment.
    pub(crate) fn objective_at(&self, x: &[f64]) -> f64 {
        let mut v = self.objective.evaluate(x);
        for sq in &self.squares {
            let s = sq.evaluate(x);
            v += s * s;
        }
        v
    }

    /// Worst violation of each constraint family at a scalar assignment:
    /// `(max |equality|, max(0, -min inequality), max(0, -min psd eig))`.
    pub fn violations(&self, x: &[f64]) -> (f64, f64, f64) {
        let mut eq = 0.0f64;
        for (_, m) in &self.equalities {
            for e in m.entries.iter() {
                eq = eq.max(e.evaluate(x).abs());
            }
        }
        let mut ineq = 0.0f64;
        for (_, m) in &self.inequalities {
            for e in m.entries.iter() {
                ineq = ineq.max(-e.evaluate(x));
            }
        }
        let mut psd = 0.0f64;
        for (_, m) in &self.psd {
            let val = m.evaluate(x);
            psd = psd.max(-crate::linalg::min_eigenvalue(&val));
        }
        (eq, ineq.max(0.0), psd.max(0.0))
    }

    /// Reconstructs named full matrices from a scalar assignment.
    pub(crate) fn extract_values(&self, x: &[f64]) -> HashMap<String, DMatrix<f64>> {
        let mut out = HashMap::new();
        for (vi, info) in self.vars.iter().enumerate() {
            let (r, c) = info.shape();
            let mut m = DMatrix::zeros(r, c);
            for i in 0..r {
                for j in 0..c {
                    if let Some(idx) = info.entry_index(i, j) {
                        m[(i, j)] = x[idx];
                    }
                }
            }
            let _ = vi;
            out.insert(info.name.clone(), m);
        }
        out
    }

    /// Solves with an automatically selected backend: the structured IPM
    /// when the program has no equality constraints, Clarabel otherwise.
    pub fn solve(&self, tol: f64) -> ConicSolution {
        if self.equalities.is_empty() && !(self.inequalities.is_empty() && self.psd.is_empty()) {
            self.solve_with(Backend::StructuredIpm, tol)
        } else {
            self.solve_with(Backend::Clarabel, tol)
        }
    }

    pub fn solve_with(&self, backend: Backend, tol: f64) -> ConicSolution {
        let mut solution = match backend {
            Backend::Clarabel => clarabel_backend::solve(self, tol),
            Backend::StructuredIpm => ipm::solve(self, tol),
        };
        if solution.status == SolveStatus::Optimal {
            // Post-hoc primal violation against the program itself.
            let x = self.flatten_values(&solution.values);
            let (eq, ineq, psd) = self.violations(&x);
            solution.residuals.primal = solution.residuals.primal.max(eq.max(ineq).max(psd));
        }
        solution
    }

    fn flatten_values(&self, values: &HashMap<String, DMatrix<f64>>) -> Vec<f64> {
        let mut x = vec![0.0; self.n_scalars];
        for info in &self.vars {
            if let Some(m) = values.get(&info.name) {
                let (r, c) = info.shape();
                for i in 0..r {
                    for j in 0..c {
                        if let Some(idx) = info.entry_index(i, j) {
                            x[idx] = m[(i, j)];
                        }
                    }
                }
            }
        }
        x
    }

    /// Writes the program in a sparse triplet text format, one constraint
    /// per section. Entries are `row col (const <v> | var <idx> <coeff>)`
    /// lines; variables are listed with their scalar offsets up front.
    pub fn dump<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "conic-program scalars={}", self.n_scalars)?;
        for info in &self.vars {
            let (r, c) = info.shape();
            writeln!(
                out,
                "var {} shape={}x{} structure={:?} offset={} len={}",
                info.name, r, c, info.structure, info.offset, info.len
            )?;
        }
        writeln!(out, "[objective]")?;
        writeln!(out, "0 0 const {:.17e}", self.objective.constant)?;
        for &(i, c) in &self.objective.terms {
            writeln!(out, "0 0 var {i} {c:.17e}")?;
        }
        for (k, sq) in self.squares.iter().enumerate() {
            writeln!(out, "[objective-square {k}]")?;
            writeln!(out, "0 0 const {:.17e}", sq.constant)?;
            for &(i, c) in &sq.terms {
                writeln!(out, "0 0 var {i} {c:.17e}")?;
            }
        }
        let families = [
            ("equality", &self.equalities),
            ("inequality", &self.inequalities),
            ("psd", &self.psd),
        ];
        for (family, cons) in families {
            for (label, m) in cons.iter() {
                writeln!(
                    out,
                    "[{family} {label}] rows={} cols={}",
                    m.rows(),
                    m.cols()
                )?;
                for i in 0..m.rows() {
                    for j in 0..m.cols() {
                        let e = m.entry(i, j);
                        if e.constant != 0.0 {
                            writeln!(out, "{i} {j} const {:.17e}", e.constant)?;
                        }
                        for &(idx, c) in &e.terms {
                            writeln!(out, "{i} {j} var {idx} {c:.17e}")?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_block_triangular_free_count() {
        // 6x6 with 3x3 blocks over a 2-step grid: blocks (0,0), (1,0),
        // (1,1) are free, 3 blocks x 9 entries.
        let mut prog = ConicProgram::new();
        let v = prog
            .add_variable(
                "Phi_xw",
                VarStructure::LowerBlockTriangular {
                    rows: 6,
                    cols: 6,
                    block_rows: 3,
                    block_cols: 3,
                },
            )
            .unwrap();
        assert_eq!(prog.free_len(v), 27);
        // Pinned upper entries are the constant zero.
        assert!(prog.entry(v, 0, 3).is_zero());
        assert!(!prog.entry(v, 3, 0).is_zero());
    }

    #[test]
    fn scalar_variable_has_one_free_entry() {
        let mut prog = ConicProgram::new();
        let v = prog.add_variable("lambda", VarStructure::Scalar).unwrap();
        assert_eq!(prog.free_len(v), 1);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut prog = ConicProgram::new();
        prog.add_variable("lambda", VarStructure::Scalar).unwrap();
        assert!(matches!(
            prog.add_variable("lambda", VarStructure::Scalar),
            Err(Error::DuplicateVariable(_))
        ));
    }

    #[test]
    fn entry_indices_are_dense_and_unique() {
        let mut prog = ConicProgram::new();
        let v = prog
            .add_variable(
                "K",
                VarStructure::LowerBlockTriangular {
                    rows: 4,
                    cols: 6,
                    block_rows: 2,
                    block_cols: 3,
                },
            )
            .unwrap();
        let mut seen = std::collections::HashSet::new();
        let mut count = 0;
        for i in 0..4 {
            for j in 0..6 {
                let e = prog.entry(v, i, j);
                if let Some(&(idx, _)) = e.terms.first() {
                    assert!(seen.insert(idx));
                    count += 1;
                }
            }
        }
        assert_eq!(count, prog.free_len(v));
        assert_eq!(count, 3 * 6); // blocks (0,0), (1,0), (1,1)
    }

    #[test]
    fn asymmetric_psd_rejected() {
        let mut prog = ConicProgram::new();
        let v = prog
            .add_variable("X", VarStructure::Free { rows: 2, cols: 2 })
            .unwrap();
        let expr = prog.var_expr(v);
        assert!(prog.add_psd("asym", expr).is_err());
    }

    #[test]
    fn symmetric_psd_accepted() {
        let mut prog = ConicProgram::new();
        let lam = prog.add_variable("lambda", VarStructure::Scalar).unwrap();
        let mut expr = MatExpr::from_const(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let l = prog.scalar_expr(lam);
        expr.set(0, 0, l.clone());
        expr.set(1, 1, l);
        prog.add_psd("lmi", expr).unwrap();
    }

    #[test]
    fn quadratic_objective_assembly() {
        // (1 + 2 x0)^2 + x1 -> H = [[8,0],[0,0]], c_eff = [4, 1], offset 1.
        let mut prog = ConicProgram::new();
        let x0 = prog.add_variable("x0", VarStructure::Scalar).unwrap();
        let x1 = prog.add_variable("x1", VarStructure::Scalar).unwrap();
        let mut sq = prog.scalar_expr(x0).scale(2.0);
        sq.constant = 1.0;
        prog.add_objective_square(sq);
        prog.set_objective(prog.scalar_expr(x1));
        let (h, q, offset) = prog.quadratic_objective();
        assert_eq!(h, vec![(0, 0, 8.0)]);
        assert_eq!(q, vec![4.0, 1.0]);
        assert_eq!(offset, 1.0);
        assert_eq!(prog.objective_at(&[1.0, 2.0]), (1.0f64 + 2.0).powi(2) + 2.0);
    }

    #[test]
    fn scalar_lmi_bound_on_both_backends() {
        // min lambda s.t. [[lambda, 1], [1, lambda]] >= 0 has optimum 1.
        let mut prog = ConicProgram::new();
        let lam = prog.add_variable("lambda", VarStructure::Scalar).unwrap();
        let mut lmi = MatExpr::from_const(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        lmi.set(0, 0, prog.scalar_expr(lam));
        lmi.set(1, 1, prog.scalar_expr(lam));
        prog.add_psd("lmi", lmi).unwrap();
        prog.set_objective(prog.scalar_expr(lam));
        for backend in [Backend::StructuredIpm, Backend::Clarabel] {
            let sol = prog.solve_with(backend, 1e-9);
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!((sol.scalar("lambda").unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn trace_minimization_over_identity_shift() {
        // min tr(X) s.t. X >= I (3x3) has optimum 3. X is kept
        // symmetric by optimizing its lower triangle.
        let mut prog = ConicProgram::new();
        let x = prog
            .add_variable(
                "X",
                VarStructure::LowerBlockTriangular {
                    rows: 3,
                    cols: 3,
                    block_rows: 1,
                    block_cols: 1,
                },
            )
            .unwrap();
        let lower = prog.var_expr(x);
        let sym = lower.add(&lower.transpose());
        let mut sym_half = sym.scale(0.5);
        for i in 0..3 {
            // Diagonal entries appear once in the lower triangle.
            sym_half.set(i, i, prog.entry(x, i, i));
        }
        prog.add_psd("dominates-identity", sym_half.sub(&MatExpr::identity(3)))
            .unwrap();
        let mut trace = LinExpr::default();
        for i in 0..3 {
            trace = trace.add(&prog.entry(x, i, i));
        }
        prog.set_objective(trace);
        for backend in [Backend::StructuredIpm, Backend::Clarabel] {
            let sol = prog.solve_with(backend, 1e-9);
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!(
                (sol.objective_value - 3.0).abs() < 1e-5,
                "objective {} on {backend:?}",
                sol.objective_value
            );
        }
    }

    #[test]
    fn dump_round_trips_entry_counts() {
        let mut prog = ConicProgram::new();
        let lam = prog.add_variable("lambda", VarStructure::Scalar).unwrap();
        prog.set_objective(prog.scalar_expr(lam));
        let mut lmi = MatExpr::from_const(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        lmi.set(0, 0, prog.scalar_expr(lam));
        lmi.set(1, 1, prog.scalar_expr(lam));
        prog.add_psd("lmi", lmi).unwrap();
        let mut buf = Vec::new();
        prog.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("[psd lmi] rows=2 cols=2"));
        assert!(text.contains("var lambda"));
    }
}
