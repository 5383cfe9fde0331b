//! Convex quadratic programming:
//!
//! ```text
//! minimize    1/2 x'Hx + f'x
//! subject to  l <= Ax <= u
//! ```
//!
//! solved by operator splitting (ADMM) on a Ruiz-equilibrated copy of the
//! problem, followed by an active-set polish. Results carry primal and dual
//! KKT residuals measured on the original data.

mod admm;
pub mod skyline;
pub mod sparse;

use std::fmt;
use std::io::Write;

use thiserror::Error;

pub use admm::solve_qp;
pub use sparse::{norm_inf, CooMatrix, CsrMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("H is not symmetric")]
    NotSymmetric,
    #[error("row {row}: lower bound {l} exceeds upper bound {u}")]
    InvalidBounds { row: usize, l: f64, u: f64 },
    #[error("non-finite problem data: {0}")]
    NonFinite(&'static str),
    #[error("invalid setting: {0}")]
    Setting(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    h: CsrMatrix,
    f: Vec<f64>,
    a: CsrMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
}

impl QuadraticProgram {
    /// `h` must hold the full symmetric matrix (both triangles). Bounds may be
    /// infinite.
    pub fn new(
        h: CooMatrix,
        f: Vec<f64>,
        a: CooMatrix,
        l: Vec<f64>,
        u: Vec<f64>,
    ) -> Result<Self, QpError> {
        let n = f.len();
        if h.nrows() != n || h.ncols() != n {
            return Err(QpError::Dimension(format!(
                "H is {}x{} but f has {n} entries",
                h.nrows(),
                h.ncols()
            )));
        }
        if a.ncols() != n {
            return Err(QpError::Dimension(format!(
                "A has {} columns but there are {n} variables",
                a.ncols()
            )));
        }
        let m = a.nrows();
        if l.len() != m || u.len() != m {
            return Err(QpError::Dimension(format!(
                "A has {m} rows but bounds have {} and {} entries",
                l.len(),
                u.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("f"));
        }
        if h.triplets().chain(a.triplets()).any(|(_, _, v)| !v.is_finite()) {
            return Err(QpError::NonFinite("matrix entries"));
        }
        for (row, (&lo, &hi)) in l.iter().zip(&u).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(QpError::InvalidBounds { row, l: lo, u: hi });
            }
        }
        let h = h.to_csr();
        if !h.is_symmetric(1e-12) {
            return Err(QpError::NotSymmetric);
        }
        Ok(Self {
            h,
            f,
            a: a.to_csr(),
            l,
            u,
        })
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.f.len()
    }

    /// Number of constraint rows.
    pub fn m(&self) -> usize {
        self.l.len()
    }

    pub fn h(&self) -> &CsrMatrix {
        &self.h
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn lower(&self) -> &[f64] {
        &self.l
    }

    pub fn upper(&self) -> &[f64] {
        &self.u
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let hx = self.h.mul(x);
        x.iter()
            .zip(&hx)
            .zip(&self.f)
            .map(|((xi, hxi), fi)| 0.5 * xi * hxi + fi * xi)
            .sum()
    }

    /// Plain-text sparse triplet dump for cross-checking with other solvers.
    ///
    /// One header line `qp <n> <m>`, then `H i j v`, `f i v`, `A i j v`,
    /// `l i v` and `u i v` lines with zero-based indices. Infinite bounds are
    /// written as `inf` / `-inf`.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "qp {} {}", self.n(), self.m())?;
        for i in 0..self.h.nrows() {
            let (cols, vals) = self.h.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "H {i} {c} {v:e}")?;
            }
        }
        for (i, v) in self.f.iter().enumerate() {
            writeln!(w, "f {i} {v:e}")?;
        }
        for i in 0..self.a.nrows() {
            let (cols, vals) = self.a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "A {i} {c} {v:e}")?;
            }
        }
        for (i, v) in self.l.iter().enumerate() {
            writeln!(w, "l {i} {v:e}")?;
        }
        for (i, v) in self.u.iter().enumerate() {
            writeln!(w, "u {i} {v:e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIter,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Solved => "solved",
            QpStatus::MaxIter => "max_iter",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

impl fmt::Display for QpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers: positive on active upper bounds, negative on active
    /// lower bounds.
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
    /// For `Infeasible`: a direction `d` with `A'd ~ 0` and
    /// `u'max(d,0) + l'min(d,0) < 0`.
    pub certificate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Iterations between step-size reviews.
    pub adaptive_interval: usize,
    /// Residual ratio that triggers a step-size change.
    pub adaptive_ratio: f64,
    pub scaling_iters: usize,
    pub check_interval: usize,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_infeasible: 1e-6,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_interval: 50,
            adaptive_ratio: 10.0,
            scaling_iters: 10,
            check_interval: 5,
            polish: true,
        }
    }
}

impl QpSettings {
    pub fn with_tolerances(eps_abs: f64, eps_rel: f64, max_iter: usize) -> Self {
        Self {
            eps_abs,
            eps_rel,
            max_iter,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), QpError> {
        let positive = [
            ("eps_abs", self.eps_abs >= 0.0),
            ("eps_rel", self.eps_rel >= 0.0),
            ("eps_abs + eps_rel", self.eps_abs + self.eps_rel > 0.0),
            ("eps_infeasible", self.eps_infeasible > 0.0),
            ("rho", self.rho > 0.0),
            ("sigma", self.sigma > 0.0),
            ("alpha", self.alpha > 0.0 && self.alpha < 2.0),
            ("adaptive_ratio", self.adaptive_ratio > 1.0),
            ("check_interval", self.check_interval > 0),
        ];
        match positive.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(QpError::Setting(format!("{name} out of range"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `||clip(Ax, l, u) - Ax||_inf`
    pub primal: f64,
    /// `||Hx + f + A'y||_inf`
    pub dual: f64,
}

pub fn check_kkt(qp: &QuadraticProgram, x: &[f64], y: &[f64]) -> Result<KktResiduals, QpError> {
    if x.len() != qp.n() || y.len() != qp.m() {
        return Err(QpError::Dimension(format!(
            "expected x of {} and y of {} entries, got {} and {}",
            qp.n(),
            qp.m(),
            x.len(),
            y.len()
        )));
    }
    let ax = qp.a.mul(x);
    let primal = ax
        .iter()
        .zip(qp.l.iter().zip(&qp.u))
        .fold(0.0f64, |m, (&v, (&lo, &hi))| m.max((v.clamp(lo, hi) - v).abs()));
    let mut grad = qp.h.mul(x);
    for (g, fi) in grad.iter_mut().zip(&qp.f) {
        *g += fi;
    }
    for i in 0..qp.m() {
        let (cols, vals) = qp.a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            grad[c] += v * y[i];
        }
    }
    Ok(KktResiduals {
        primal,
        dual: norm_inf(&grad),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_bound_qp() -> QuadraticProgram {
        // min x^2 s.t. x >= 1
        QuadraticProgram::new(
            CooMatrix::from_dense(&[vec![2.0]]),
            vec![0.0],
            CooMatrix::identity(1),
            vec![1.0],
            vec![f64::INFINITY],
        )
        .unwrap()
    }

    fn unconstrained_qp() -> QuadraticProgram {
        QuadraticProgram::new(
            CooMatrix::identity(2),
            vec![-1.0, -2.0],
            CooMatrix::new(0, 2),
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn kkt_at_optimum_of_active_bound() {
        let r = check_kkt(&scalar_bound_qp(), &[1.0], &[-2.0]).unwrap();
        assert!(r.primal <= 1e-9 && r.dual <= 1e-9);
    }

    #[test]
    fn kkt_perturbed_stationary_point() {
        let qp = unconstrained_qp();
        let r = check_kkt(&qp, &[1.1, 2.0], &[]).unwrap();
        assert_eq!(r.primal, 0.0);
        assert!((r.dual - 0.1).abs() < 1e-12);
        let r = check_kkt(&qp, &[1.0, 2.0], &[]).unwrap();
        assert_eq!((r.primal, r.dual), (0.0, 0.0));
    }

    #[test]
    fn kkt_dimension_checked() {
        assert!(check_kkt(&unconstrained_qp(), &[1.0], &[]).is_err());
    }

    #[test]
    fn construction_errors() {
        let h = CooMatrix::identity(2);
        assert!(matches!(
            QuadraticProgram::new(h.clone(), vec![0.0], CooMatrix::new(0, 2), vec![], vec![]),
            Err(QpError::Dimension(_))
        ));
        assert!(matches!(
            QuadraticProgram::new(h.clone(), vec![0.0; 2], CooMatrix::new(1, 3), vec![0.0], vec![0.0]),
            Err(QpError::Dimension(_))
        ));
        assert!(matches!(
            QuadraticProgram::new(h.clone(), vec![0.0; 2], CooMatrix::identity(2), vec![1.0, 0.0], vec![0.0, 0.0]),
            Err(QpError::InvalidBounds { row: 0, .. })
        ));
        let asym = CooMatrix::from_dense(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        assert!(matches!(
            QuadraticProgram::new(asym, vec![0.0; 2], CooMatrix::new(0, 2), vec![], vec![]),
            Err(QpError::NotSymmetric)
        ));
        assert!(matches!(
            QuadraticProgram::new(h, vec![f64::NAN, 0.0], CooMatrix::new(0, 2), vec![], vec![]),
            Err(QpError::NonFinite(_))
        ));
    }

    #[test]
    fn triplet_dump_format() {
        let mut buf = Vec::new();
        scalar_bound_qp().write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "qp 1 1\nH 0 0 2e0\nf 0 0e0\nA 0 0 1e0\nl 0 1e0\nu 0 inf\n");
    }
}
