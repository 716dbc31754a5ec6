//! Background geometry of the circle-sphere product `S^1(L) x S^{n-1}(1)`
//! and pointwise conformal-change computations for circle-dependent factors.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid};

/// Product manifold `S^1(L) x S^{n-1}(1)` with its derived conformal
/// constants. Values are immutable after construction.
#[derive(Debug, Clone, Serialize)]
pub struct Manifold {
    n: u32,
    circle_len: f64,
    scalar_curvature: f64,
    conformal_const: f64,
    crit_exponent: f64,
    sphere_vol: f64,
    total_vol: f64,
}

impl Manifold {
    /// Builds the product manifold; rejects `n < 3` or `L <= 0`.
    pub fn product(n: u32, circle_len: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::domain(format!("dimension must be >= 3, got {n}")));
        }
        if circle_len <= 0.0 || circle_len.is_nan() || !circle_len.is_finite() {
            return Err(Error::domain(format!(
                "circle length must be positive, got {circle_len}"
            )));
        }
        let nf = f64::from(n);
        let sphere_vol = unit_sphere_volume(n - 1);
        Ok(Manifold {
            n,
            circle_len,
            // the circle factor is flat; the unit (n-1)-sphere contributes
            // (n-1)(n-2)
            scalar_curvature: (nf - 1.0) * (nf - 2.0),
            conformal_const: 4.0 * (nf - 1.0) / (nf - 2.0),
            crit_exponent: 2.0 * nf / (nf - 2.0),
            sphere_vol,
            total_vol: 2.0 * std::f64::consts::PI * circle_len * sphere_vol,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn circle_len(&self) -> f64 {
        self.circle_len
    }

    /// Background scalar curvature `R_g = (n-1)(n-2)`.
    pub fn scalar_curvature(&self) -> f64 {
        self.scalar_curvature
    }

    /// Conformal constant `c_n = 4(n-1)/(n-2)`.
    pub fn conformal_const(&self) -> f64 {
        self.conformal_const
    }

    /// Critical Sobolev exponent `2* = 2n/(n-2)`.
    pub fn crit_exponent(&self) -> f64 {
        self.crit_exponent
    }

    /// Volume of the unit sphere factor.
    pub fn sphere_vol(&self) -> f64 {
        self.sphere_vol
    }

    /// Total volume `2 pi L * omega_{n-1}`.
    pub fn total_vol(&self) -> f64 {
        self.total_vol
    }

    /// Circle length at which the constant critical point acquires a
    /// two-dimensional kernel: the first circle mode `mu = (k/L)^2`, `k = 1`,
    /// solves `c_n mu = (2* - 2) R_g` at `L = 1/sqrt(n-2)`.
    pub fn critical_length(&self) -> f64 {
        1.0 / f64::from(self.n - 2).sqrt()
    }

    /// Collocation grid carrying this manifold's circle length and sphere
    /// volume.
    pub fn grid(&self, n_nodes: usize) -> Result<Arc<Grid>> {
        Grid::new(n_nodes, self.circle_len, self.sphere_vol)
    }

    /// Checks a conformal factor for strict positivity at the nodes.
    pub fn require_positive(&self, u: &Field) -> Result<()> {
        if let Some((j, v)) = u.first_nonpositive_node() {
            return Err(Error::domain(format!(
                "conformal factor must be positive: value {v:.6e} at node {j} (theta = {:.6})",
                u.grid().node(j)
            )));
        }
        Ok(())
    }

    /// Scalar curvature of the conformal metric with factor `u`:
    /// `u^{1-2*} (-c_n u'' + R_g u)`, evaluated at the collocation nodes.
    pub fn conformal_scalar_curvature(&self, u: &Field) -> Result<Field> {
        self.require_positive(u)?;
        let lu = self.conformal_laplacian(u);
        lu.zip(u, |l, uv| uv.powf(1.0 - self.crit_exponent) * l)
    }

    /// Conformal Laplacian of the product background applied to a
    /// circle-dependent function: `L_g psi = -c_n psi'' + R_g psi`.
    pub fn conformal_laplacian(&self, psi: &Field) -> Field {
        psi.second_derivative()
            .scale(-self.conformal_const)
            .add(&psi.scale(self.scalar_curvature))
            .expect("same grid")
    }
}

/// Volume of the unit `k`-sphere, `2 pi^{(k+1)/2} / Gamma((k+1)/2)`, from the
/// closed-form half-integer Gamma values.
pub fn unit_sphere_volume(k: u32) -> f64 {
    let half = f64::from(k + 1) / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma_half_integer(k + 1)
}

/// `Gamma(m/2)` for integer `m >= 1` by upward recursion from `Gamma(1/2)` or
/// `Gamma(1)`.
fn gamma_half_integer(m: u32) -> f64 {
    let even = m.is_multiple_of(2);
    let mut x = if even {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut arg = if even { 1.0 } else { 0.5 };
    while arg + 1.0 <= f64::from(m) / 2.0 + 1e-9 {
        x *= arg;
        arg += 1.0;
    }
    x
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifoldSummary {
    pub n: u32,
    pub circle_len: f64,
    pub scalar_curvature: f64,
    pub conformal_const: f64,
    pub crit_exponent: f64,
    pub total_vol: f64,
    pub critical_length: f64,
}

impl From<&Manifold> for ManifoldSummary {
    fn from(m: &Manifold) -> Self {
        ManifoldSummary {
            n: m.n,
            circle_len: m.circle_len,
            scalar_curvature: m.scalar_curvature,
            conformal_const: m.conformal_const,
            crit_exponent: m.crit_exponent,
            total_vol: m.total_vol,
            critical_length: m.critical_length(),
        }
    }
}
