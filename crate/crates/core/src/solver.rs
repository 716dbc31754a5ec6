//! Minimizers and critical points of the constrained energy, and the
//! eigenvalue sweep across the bifurcation in the circle length.
//!
//! Minimization is projected gradient descent with Armijo backtracking and
//! volume renormalization after every step, finished by a bordered Newton
//! polish on the Euler-Lagrange residual. The Newton solver treats the
//! multiplier as the dependent functional `lambda = Q(u)` and borders the
//! linearization with the volume constraint.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::energy::{
    el_residual, gradient, normalize_volume, orthogonal_tangent_project, volume_integral,
    yamabe_energy,
};
use crate::error::{Error, Result};
use crate::hessian::{hessian_eigenvalues, hessian_matrix};
use crate::manifold::Manifold;
use crate::spectral::Field;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Descent stops once the gradient `L^2` norm falls below this.
    pub grad_tol: f64,
    /// Descent hands over to Newton once the gradient norm falls below this.
    pub polish_trigger: f64,
    pub max_iter: usize,
    pub armijo_c1: f64,
    pub max_halvings: usize,
    /// Newton stops once the residual sup-norm falls below this.
    pub newton_tol: f64,
    /// Residual level accepted as converged when Newton stagnates at the
    /// spectral roundoff floor (the second derivative amplifies coefficient
    /// noise by the squared mode cutoff).
    pub newton_floor: f64,
    pub newton_max_iter: usize,
    /// Required sup-norm of the Euler-Lagrange residual of a returned point.
    pub residual_tol: f64,
    pub kernel_tol: f64,
    pub polish: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            grad_tol: 1e-9,
            polish_trigger: 1e-3,
            max_iter: 20_000,
            armijo_c1: 1e-4,
            max_halvings: 60,
            newton_tol: 1e-12,
            newton_floor: 5e-11,
            newton_max_iter: 200,
            residual_tol: 1e-8,
            kernel_tol: 1e-7,
            polish: true,
        }
    }
}

/// Branch tag of a critical point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Constant,
    Nonconstant,
}

/// Verified critical point on the constraint manifold.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub u: Field,
    pub q: f64,
    pub el_residual_sup: f64,
    pub negative_count: usize,
    pub kernel_dim: usize,
    pub branch: Branch,
    pub iterations: usize,
}

impl CriticalPoint {
    pub fn summary(&self) -> CriticalPointSummary {
        CriticalPointSummary {
            q: self.q,
            lambda: self.q,
            el_residual_sup: self.el_residual_sup,
            negative_count: self.negative_count,
            kernel_dim: self.kernel_dim,
            branch: self.branch,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointSummary {
    pub q: f64,
    pub lambda: f64,
    pub el_residual_sup: f64,
    pub negative_count: usize,
    pub kernel_dim: usize,
    pub branch: Branch,
    pub iterations: usize,
}

fn classify_branch(u: &Field) -> Branch {
    if u.variation() < 1e-7 * u.mean().abs().max(1e-300) {
        Branch::Constant
    } else {
        Branch::Nonconstant
    }
}

fn finish(
    man: &Manifold,
    u: Field,
    opts: &SolveOptions,
    iterations: usize,
) -> Result<CriticalPoint> {
    // exact volume renormalization; the quotient is scale invariant
    let u = normalize_volume(man, &u)?;
    let residual = el_residual(man, &u)?.sup_norm();
    if residual > opts.residual_tol {
        return Err(Error::numerical(format!(
            "solver stalled: residual sup {residual:.3e} above tolerance {:.3e} \
             after {iterations} iterations",
            opts.residual_tol
        )));
    }
    let (_, kernel_dim, negative_count) = hessian_eigenvalues(man, &u, opts.kernel_tol)?;
    Ok(CriticalPoint {
        q: yamabe_energy(man, &u)?,
        branch: classify_branch(&u),
        el_residual_sup: residual,
        negative_count,
        kernel_dim,
        iterations,
        u,
    })
}

/// Projected gradient descent with Armijo backtracking, renormalizing onto
/// the constraint manifold after every step, followed by a Newton polish.
pub fn minimize(man: &Manifold, u0: &Field, opts: &SolveOptions) -> Result<CriticalPoint> {
    man.require_positive(u0)?;
    let (u, iters) = descend(man, u0, opts)?;
    if opts.polish {
        if let Ok((polished, extra)) = newton_polish(man, &u, opts) {
            return finish(man, polished, opts, iters + extra);
        }
        // polish can fail near a degenerate point; fall back to plain
        // descent at the tight tolerance
        let mut tight = opts.clone();
        tight.polish = false;
        tight.max_iter = opts.max_iter.saturating_sub(iters);
        let (fallback, more) = descend(man, &u, &tight)?;
        return finish(man, fallback, opts, iters + more);
    }
    finish(man, u, opts, iters)
}

fn descend(man: &Manifold, u0: &Field, opts: &SolveOptions) -> Result<(Field, usize)> {
    let mut u = normalize_volume(man, u0)?;
    let mut q = yamabe_energy(man, &u)?;
    let mut step: f64 = 0.5;
    let target = if opts.polish {
        opts.polish_trigger.max(opts.grad_tol)
    } else {
        opts.grad_tol
    };

    let mut iters = 0;
    loop {
        let g = gradient(man, &u)?;
        let gn2 = g.l2_inner(&g)?;
        if gn2.sqrt() <= target {
            return Ok((u, iters));
        }
        if iters >= opts.max_iter {
            return Err(Error::numerical(format!(
                "descent did not converge in {} iterations (gradient norm {:.3e})",
                opts.max_iter,
                gn2.sqrt()
            )));
        }
        // Sobolev-preconditioned direction: the raw gradient limits the
        // stable step to O(1/k_max^2); dividing each mode by twice the
        // principal-part symbol makes the step mesh-independent. The
        // preconditioner is positive, so descent is preserved.
        let d = orthogonal_tangent_project(
            man,
            &u,
            &g.spectral_multiplier(|k| {
                0.5 / (man.conformal_const() * k * k + man.scalar_curvature())
            }),
        )?;
        let gd = g.l2_inner(&d)?;

        // Armijo backtracking; positivity loss also halves the step
        let mut alpha: f64 = (step * 2.0).min(1.0);
        let mut halvings = 0;
        loop {
            // once the certified decrease falls under the float resolution
            // of the energy, further progress is unmeasurable
            if opts.armijo_c1 * alpha * gd < 20.0 * f64::EPSILON * q.abs() {
                return Ok((u, iters));
            }
            let trial = u.add_scaled(&[(-alpha, &d)])?;
            if trial.min_value() > 0.0 {
                let trial = normalize_volume(man, &trial)?;
                let q_trial = yamabe_energy(man, &trial)?;
                if q_trial <= q - opts.armijo_c1 * alpha * gd {
                    u = trial;
                    q = q_trial;
                    step = alpha;
                    break;
                }
            }
            alpha *= 0.5;
            halvings += 1;
            if halvings > opts.max_halvings {
                return Err(Error::numerical(format!(
                    "line search failed at iteration {iters}: no acceptable step \
                     (gradient norm {:.3e}, target {target:.3e}, q {q:.12})",
                    gn2.sqrt()
                )));
            }
        }
        iters += 1;
    }
}

/// Damped bordered Newton iterations on the residual; returns the improved
/// point and the number of iterations used.
fn newton_polish(man: &Manifold, u0: &Field, opts: &SolveOptions) -> Result<(Field, usize)> {
    let n = u0.len();
    let w = u0.grid().node_weight();
    let ps = man.crit_exponent();
    // achievable residual floor: the spectral second derivative amplifies
    // coefficient roundoff by the squared mode cutoff
    let cutoff = u0.grid().mode_cutoff() as f64 / u0.grid().circle_len();
    let floor = opts
        .newton_floor
        .max(6.0 * man.conformal_const() * cutoff * cutoff * f64::EPSILON * u0.sup_norm());
    let mut u = u0.clone();
    let mut best: Option<(Field, f64)> = None;
    let mut since_best = 0usize;

    for it in 0..opts.newton_max_iter {
        let r = el_residual(man, &u)?;
        let vol_defect = volume_integral(man, &u) - 1.0;
        let res = r.sup_norm().max(vol_defect.abs());
        if res < opts.newton_tol {
            return Ok((u, it));
        }
        if best.as_ref().is_none_or(|(_, b)| res < *b) {
            best = Some((u.clone(), res));
            since_best = 0;
        } else {
            since_best += 1;
        }
        // stagnation: no new best for several iterations. Convergence is
        // quadratic at nondegenerate roots but only linear (rate 2/3) along
        // nearly-flat directions, so the window has to allow a few
        // non-improving bounces near the roundoff floor.
        if since_best >= 4 {
            let (bu, br) = best.expect("tracked above");
            if br < floor {
                return Ok((bu, it));
            }
            return Err(Error::numerical(format!(
                "Newton stalled at residual {br:.3e}"
            )));
        }

        let q = yamabe_energy(man, &u)?;
        let z = u.powf(ps - 1.0);
        // bordered linearization: d r[h] = A h - 2 <r,h> u^{2*-1},
        // last column carries the multiplier, last row the volume constraint
        let mut m = DMatrix::zeros(n + 1, n + 1);
        let a = hessian_matrix(man, &u, q);
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] = a[(i, j)] - 2.0 * w * z.values()[i] * r.values()[j];
            }
        }
        for i in 0..n {
            m[(i, n)] = z.values()[i];
            m[(n, i)] = ps * w * z.values()[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -r.values()[i];
        }
        rhs[n] = -vol_defect;
        let lu = m.lu();
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::numerical("singular Newton linearization".to_string()))?;
        if !sol.iter().all(|x| x.is_finite()) {
            return Err(Error::numerical(
                "Newton step is not finite (singular linearization)".to_string(),
            ));
        }
        let h = Field::from_values(u.grid().clone(), sol.as_slice()[..n].to_vec())?;

        // damp the step until the iterate stays positive
        let mut scale = 1.0;
        let mut halvings = 0;
        loop {
            let trial = u.add_scaled(&[(scale, &h)])?;
            if trial.min_value() > 0.0 {
                u = trial;
                break;
            }
            scale *= 0.5;
            halvings += 1;
            if halvings > opts.max_halvings {
                return Err(Error::numerical(
                    "Newton step loses positivity even after maximal damping".to_string(),
                ));
            }
        }
    }
    Err(Error::numerical(format!(
        "Newton did not reach tolerance {:.1e} in {} iterations",
        opts.newton_tol, opts.newton_max_iter
    )))
}

/// Newton solver for critical points. Errors out when the linearization at
/// the start point is singular (nontrivial kernel within the kernel
/// tolerance); the finite-dimensional reduction handles that regime.
pub fn newton_critical_point(
    man: &Manifold,
    u0: &Field,
    opts: &SolveOptions,
) -> Result<CriticalPoint> {
    man.require_positive(u0)?;
    let u0 = normalize_volume(man, u0)?;
    let (_, kernel_dim, _) = hessian_eigenvalues(man, &u0, opts.kernel_tol)?;
    if kernel_dim > 0 {
        return Err(Error::numerical(format!(
            "singular linearization: the second variation has a {kernel_dim}-dimensional \
             kernel; use the finite-dimensional reduction at this base point"
        )));
    }
    let (u, iters) = newton_polish(man, &u0, opts)?;
    finish(man, u, opts, iters)
}

/// One row of the eigenvalue sweep.
#[derive(Debug, Clone, Serialize)]
pub struct BifurcationRow {
    pub circle_len: f64,
    pub eig_smallest: f64,
    pub eig_second: f64,
    pub q_constant: f64,
    pub q_nonconstant: Option<f64>,
    pub note: Option<String>,
}

/// Eigenvalue sweep across a range of circle lengths, with a perturbed
/// descent at each length probing for a nonconstant branch.
#[derive(Debug, Clone, Serialize)]
pub struct BifurcationDiagram {
    pub rows: Vec<BifurcationRow>,
    /// Zero crossing of the smallest constant-base eigenvalue, by linear
    /// interpolation between sweep points.
    pub crossing: Option<f64>,
}

pub fn continuation(
    n: u32,
    l_range: (f64, f64),
    steps: usize,
    grid_n: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<BifurcationDiagram> {
    if steps < 2 {
        return Err(Error::domain(
            "continuation needs at least 2 steps".to_string(),
        ));
    }
    if l_range.0 <= 0.0 || l_range.0.is_nan() || l_range.1 <= l_range.0 {
        return Err(Error::domain(format!(
            "invalid circle length range [{}, {}]",
            l_range.0, l_range.1
        )));
    }
    let mut rows = Vec::with_capacity(steps);
    for step in 0..steps {
        let l = l_range.0 + (l_range.1 - l_range.0) * step as f64 / (steps - 1) as f64;
        let man = Manifold::product(n, l)?;
        let grid = man.grid(grid_n)?;
        let v = normalize_volume(&man, &Field::constant(grid.clone(), 1.0))?;
        let (eigs, _, _) = hessian_eigenvalues(&man, &v, opts.kernel_tol)?;
        let q_constant = yamabe_energy(&man, &v)?;

        // perturbed descent seeded by the first circle mode with a random
        // phase, deterministic per sweep step
        let mut rng: rand_chacha::ChaCha8Rng = rand::SeedableRng::seed_from_u64(
            seed.wrapping_add((step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let phase: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let seed_field = Field::from_fn(grid, |t| 1.0 + 0.1 * (t / l - phase).cos());
        let (q_nonconstant, note) = match minimize(&man, &seed_field, opts) {
            Ok(cp) if cp.branch == Branch::Nonconstant && cp.q < q_constant - 1e-8 => {
                (Some(cp.q), None)
            }
            Ok(_) => (None, None),
            Err(e) => (None, Some(format!("branch search failed: {e}"))),
        };
        rows.push(BifurcationRow {
            circle_len: l,
            eig_smallest: eigs[0],
            eig_second: eigs[1],
            q_constant,
            q_nonconstant,
            note,
        });
    }
    let crossing = rows.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        if a.eig_smallest > 0.0 && b.eig_smallest <= 0.0 {
            let t = a.eig_smallest / (a.eig_smallest - b.eig_smallest);
            Some(a.circle_len + t * (b.circle_len - a.circle_len))
        } else {
            None
        }
    });
    Ok(BifurcationDiagram { rows, crossing })
}
