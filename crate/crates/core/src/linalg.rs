use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal on the first factorization attempt.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor together with the diagonal jitter it needed.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    /// Factorizes `matrix + jitter * I`, starting at `JITTER_START * scale`
    /// and escalating by 10x up to `JITTER_MAX * scale`.
    pub fn new(matrix: &DMatrix<f64>, scale: f64) -> Result<Self> {
        let mut rel = JITTER_START;
        loop {
            let jitter = rel * scale;
            let mut m = matrix.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            if let Some(factor) = Cholesky::new(m) {
                return Ok(Self { factor, jitter });
            }
            rel *= 10.0;
            if rel > JITTER_MAX * (1.0 + 1e-9) {
                let min_diag = (0..matrix.nrows())
                    .map(|i| matrix[(i, i)])
                    .fold(f64::INFINITY, f64::min);
                return Err(Error::NumericalFailure(format!(
                    "{n}x{n} matrix not positive definite with jitter up to {:.1e} (min diagonal {min_diag:.3e})",
                    JITTER_MAX * scale,
                    n = matrix.nrows()
                )));
            }
        }
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.factor.l()
    }

    /// `L^{-1} b`
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `L^{-T} b`
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor
            .l_dirty()
            .tr_solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `A^{-1} b`
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(b)
    }

    pub fn log_det(&self) -> f64 {
        let l = self.factor.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.factor.inverse()
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
