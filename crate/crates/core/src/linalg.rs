//! Small dense SPD geometry: the Gram-type matrix `V` with a synchronized
//! inverse, Mahalanobis norms, and projection onto the Euclidean ball in the
//! `V`-norm.
//!
//! Dimensions here are small (tens), so everything is dense and the inverse
//! is kept explicitly. Rank-one updates go through Sherman–Morrison; the
//! inverse is rebuilt from a Cholesky factorization every
//! [`REFRESH_INTERVAL`] updates to keep drift bounded over long horizons.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Feature / parameter vector.
pub type Vector = DVector<f64>;

/// Number of rank-one updates between full inverse recomputations.
pub const REFRESH_INTERVAL: usize = 512;

/// Default relative tolerance for [`SpdState::project_onto_ball`].
pub const DEFAULT_PROJECTION_TOL: f64 = 1e-10;

const MAX_BRACKET_DOUBLINGS: usize = 200;
const MAX_BISECTION_STEPS: usize = 500;
const RADICAND_SLACK: f64 = 1e-12;

/// Which matrix defines a Mahalanobis norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// `sqrt(x' V x)`
    Primal,
    /// `sqrt(x' V^-1 x)`
    Inverse,
}

/// Symmetric positive definite matrix together with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdState {
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    floor: f64,
    since_refresh: usize,
}

impl SpdState {
    /// `V = lambda * I_d`.
    pub fn new(lambda: f64, dim: usize) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(Self {
            v: DMatrix::from_diagonal_element(dim, dim, lambda),
            v_inv: DMatrix::from_diagonal_element(dim, dim, 1.0 / lambda),
            floor: lambda,
            since_refresh: 0,
        })
    }

    /// Wrap an SPD matrix whose eigenvalues are known to stay above `floor`.
    pub fn from_matrix(v: DMatrix<f64>, floor: f64) -> Result<Self> {
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::invalid(format!(
                "floor must be positive, got {floor}"
            )));
        }
        if !v.is_square() || v.nrows() == 0 {
            return Err(Error::invalid("matrix must be square and nonempty"));
        }
        let d = v.nrows();
        let mut state = Self {
            v,
            v_inv: DMatrix::zeros(d, d),
            floor,
            since_refresh: 0,
        };
        state.refresh_inverse()?;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    /// The initialization floor `lambda`; all eigenvalues of `V` stay above it.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "dimension mismatch: state is {}, vector is {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// `V <- V + weight * x x'`, with the inverse updated by Sherman–Morrison.
    pub fn rank_one_update(&mut self, x: &Vector, weight: f64) -> Result<()> {
        self.check_dim(x)?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::invalid(format!(
                "weight must be positive, got {weight}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entry in update vector"));
        }
        if x.iter().all(|&v| v == 0.0) {
            return Ok(());
        }

        let d = self.dim();
        let u = &self.v_inv * x;
        let denom = 1.0 + weight * x.dot(&u);
        if !(denom.is_finite() && denom > 0.0) {
            return Err(Error::numeric(format!("rank-one denominator {denom}")));
        }
        let scale = weight / denom;
        // Fill upper triangles and mirror so both matrices stay exactly symmetric.
        for i in 0..d {
            for j in i..d {
                let dv = weight * x[i] * x[j];
                let di = scale * u[i] * u[j];
                self.v[(i, j)] += dv;
                self.v_inv[(i, j)] -= di;
                if i != j {
                    self.v[(j, i)] = self.v[(i, j)];
                    self.v_inv[(j, i)] = self.v_inv[(i, j)];
                }
            }
        }
        if self.v_inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite entry after rank-one update"));
        }

        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh_inverse()?;
        }
        Ok(())
    }

    /// Recompute the inverse from a Cholesky factorization of `V`.
    pub fn refresh_inverse(&mut self) -> Result<()> {
        let chol = self
            .v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numeric("V lost positive definiteness"))?;
        let mut inv = chol.inverse();
        let d = self.dim();
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = avg;
                inv[(j, i)] = avg;
            }
        }
        self.v_inv = inv;
        self.since_refresh = 0;
        Ok(())
    }

    /// Largest absolute entry of `V * V^-1 - I`.
    pub fn sync_error(&self) -> f64 {
        let d = self.dim();
        let prod = &self.v * &self.v_inv;
        (prod - DMatrix::<f64>::identity(d, d)).amax()
    }

    /// `x' A x` for the chosen metric, clamped at zero within a small slack.
    pub fn quad_form(&self, x: &Vector, metric: Metric) -> Result<f64> {
        self.check_dim(x)?;
        let a = match metric {
            Metric::Primal => &self.v,
            Metric::Inverse => &self.v_inv,
        };
        let q = (a * x).dot(x);
        if q.is_nan() || q < -RADICAND_SLACK {
            return Err(Error::numeric(format!("negative quadratic form {q}")));
        }
        Ok(q.max(0.0))
    }

    pub fn norm(&self, x: &Vector, metric: Metric) -> Result<f64> {
        self.quad_form(x, metric).map(f64::sqrt)
    }

    /// `argmin_{||theta||_2 <= radius} ||theta - theta_tilde||_V`.
    pub fn project_onto_ball(&self, theta_tilde: &Vector, radius: f64, tol: f64) -> Result<Vector> {
        self.project_onto_ball_with_multiplier(theta_tilde, radius, tol)
            .map(|(theta, _)| theta)
    }

    /// Projection plus the Lagrange multiplier `mu` of the norm constraint.
    ///
    /// Outside the ball the minimizer is `theta(mu) = (V + mu I)^-1 V theta_tilde`
    /// with `||theta(mu)||_2 = radius`. `||theta(mu)||_2` is strictly decreasing
    /// in `mu`, so `mu` is located by bracketing and bisection.
    pub fn project_onto_ball_with_multiplier(
        &self,
        theta_tilde: &Vector,
        radius: f64,
        tol: f64,
    ) -> Result<(Vector, f64)> {
        self.check_dim(theta_tilde)?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!(
                "radius must be positive, got {radius}"
            )));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        if theta_tilde.norm() <= radius {
            return Ok((theta_tilde.clone(), 0.0));
        }

        let rhs = &self.v * theta_tilde;
        let target = tol * radius;

        let mut lo = 0.0;
        let mut hi = self.floor;
        let mut theta_hi = self.shifted_solve(&rhs, hi)?;
        let mut doublings = 0;
        while theta_hi.norm() >= radius {
            if doublings == MAX_BRACKET_DOUBLINGS {
                return Err(Error::numeric("projection bracket did not close"));
            }
            lo = hi;
            hi *= 2.0;
            theta_hi = self.shifted_solve(&rhs, hi)?;
            doublings += 1;
        }
        if (theta_hi.norm() - radius).abs() <= target {
            return Ok((theta_hi, hi));
        }

        for _ in 0..MAX_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let theta = self.shifted_solve(&rhs, mid)?;
            let n = theta.norm();
            if (n - radius).abs() <= target {
                return Ok((theta, mid));
            }
            if n > radius {
                lo = mid;
            } else {
                hi = mid;
                theta_hi = theta;
            }
        }
        // Interval collapsed at machine precision; the upper end is feasible.
        Ok((theta_hi, hi))
    }

    fn shifted_solve(&self, rhs: &Vector, mu: f64) -> Result<Vector> {
        let d = self.dim();
        let shifted = &self.v + DMatrix::<f64>::from_diagonal_element(d, d, mu);
        let chol = shifted
            .cholesky()
            .ok_or_else(|| Error::numeric(format!("V + {mu} I is not positive definite")))?;
        Ok(chol.solve(rhs))
    }
}
