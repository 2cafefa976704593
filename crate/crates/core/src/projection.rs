//! Projection onto the intersection of an affine set `{x : Ax = b}` with a
//! lower-bounded box `{x ≥ l}`, via Dykstra's alternating scheme.
//!
//! Projection onto the affine set is exact through a cached factorization of
//! `A Aᵀ`; the box projection is a clamp. Because the affine set is an
//! affine subspace its Dykstra increment can be dropped, so only the box
//! keeps one. The returned iterate is always box-exact with the affine
//! residual below the requested tolerance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub(crate) struct AffineBoxProjector {
    a: DMatrix<f64>,
    b: DVector<f64>,
    lower: DVector<f64>,
    solver: GramSolver,
}

enum GramSolver {
    Chol(Cholesky<f64, Dyn>),
    Svd(nalgebra::SVD<f64, Dyn, Dyn>),
}

/// Warm-startable Dykstra state: last iterate and box increment.
#[derive(Clone)]
pub(crate) struct DykstraState {
    pub x: DVector<f64>,
    pub q: DVector<f64>,
}

impl AffineBoxProjector {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, lower: DVector<f64>) -> Self {
        let gram = &a * a.transpose();
        let solver = match gram.clone().cholesky() {
            Some(c) => GramSolver::Chol(c),
            // Redundant constraint rows: fall back to a pseudo-inverse solve.
            None => GramSolver::Svd(gram.svd(true, true)),
        };
        AffineBoxProjector { a, b, lower, solver }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn gram_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.solver {
            GramSolver::Chol(c) => c.solve(rhs),
            GramSolver::Svd(svd) => svd.solve(rhs, 1e-12).expect("svd solve"),
        }
    }

    /// Euclidean projection onto `{Ax = b}`.
    pub fn project_affine(&self, x: &DVector<f64>) -> DVector<f64> {
        let residual = &self.b - &self.a * x;
        x + self.a.transpose() * self.gram_solve(&residual)
    }

    pub fn clamp(&self, x: &mut DVector<f64>) {
        for (v, l) in x.iter_mut().zip(self.lower.iter()) {
            if *v < *l {
                *v = *l;
            }
        }
    }

    /// `‖Ax − b‖∞`.
    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b).amax()
    }

    /// Dykstra projection of `z` onto the intersection. Returns a box-exact
    /// point with affine residual ≤ `tol`, or `None` when the residual
    /// stalls above the tolerance (empty intersection or cap too small).
    pub fn project_intersection(
        &self,
        z: &DVector<f64>,
        tol: f64,
        max_iter: usize,
        warm: Option<&mut DykstraState>,
    ) -> Option<DVector<f64>> {
        let mut x = z.clone();
        let mut q = DVector::zeros(self.dim());
        if let Some(state) = &warm {
            q = state.q.clone();
        }
        let mut best = f64::INFINITY;
        let mut best_iter = 0usize;
        const STALL_WINDOW: usize = 2000;
        for k in 0..max_iter {
            let y = self.project_affine(&x);
            let w = y + &q;
            let mut xn = w.clone();
            self.clamp(&mut xn);
            q = w - &xn;
            x = xn;
            let res = self.residual(&x);
            if res <= tol {
                if let Some(state) = warm {
                    state.x = x.clone();
                    state.q = q;
                }
                return Some(x);
            }
            if res < best * (1.0 - 1e-9) {
                best = res;
                best_iter = k;
            } else if k - best_iter > STALL_WINDOW {
                return None;
            }
        }
        None
    }
}
