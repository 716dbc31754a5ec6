//! Finite-dimensional reduction at a degenerate critical point: the graph
//! map from the kernel into its complement, the reduced energy, its
//! homogeneous Taylor expansion, and the positivity test of the leading
//! term.
//!
//! The graph map is computed by Newton iteration on the discretized
//! constrained system. Unknowns are the coefficients of `u - v - phi` over
//! an `L^2`-orthonormal basis of the kernel complement (the non-kernel
//! tangent eigenfields plus the completion direction along `v^{2*-1}`);
//! equations are the vanishing of the residual against the non-kernel
//! tangent basis plus the exact volume constraint. The kernel component of
//! the lift therefore equals `phi` exactly and the lifted point satisfies
//! the volume constraint to solver precision.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::energy::{el_residual, volume_integral, yamabe_energy};
use crate::error::{Error, Result};
use crate::hessian::{hessian_operator, Spectrum};
use crate::manifold::Manifold;
use crate::spectral::Field;

/// Homogeneous polynomial on `R^l` in the dense monomial basis.
#[derive(Debug, Clone, Serialize)]
pub struct HomogeneousPoly {
    pub degree: usize,
    pub dim: usize,
    /// Exponent multi-indices, lexicographic; one per coefficient.
    pub exponents: Vec<Vec<u32>>,
    pub coeffs: Vec<f64>,
}

impl HomogeneousPoly {
    pub fn zeros(dim: usize, degree: usize) -> Self {
        let exponents = multi_indices(dim, degree);
        let coeffs = vec![0.0; exponents.len()];
        HomogeneousPoly {
            degree,
            dim,
            exponents,
            coeffs,
        }
    }

    /// `|x|^degree` for even degrees: expansion of `(sum x_i^2)^{degree/2}`.
    pub fn radial(dim: usize, degree: usize) -> Self {
        assert!(
            degree.is_multiple_of(2),
            "radial polynomial needs an even degree"
        );
        let mut p = HomogeneousPoly::zeros(dim, degree);
        let half = degree / 2;
        // multinomial expansion of (x_1^2 + ... + x_l^2)^half
        let mut stack = vec![(vec![0u32; dim], 0usize, half)];
        while let Some((exp, i, rem)) = stack.pop() {
            if i == dim {
                if rem == 0 {
                    // multinomial coefficient half! / prod (e_i/2)!
                    let mut numer = 1.0;
                    for k in 1..=half {
                        numer *= k as f64;
                    }
                    let mut denom = 1.0;
                    for &e in &exp {
                        for k in 1..=(e / 2) {
                            denom *= k as f64;
                        }
                    }
                    let idx = p
                        .exponents
                        .iter()
                        .position(|e| *e == exp)
                        .expect("index present");
                    p.coeffs[idx] = numer / denom;
                }
                continue;
            }
            for take in 0..=rem {
                let mut e = exp.clone();
                e[i] = 2 * take as u32;
                stack.push((e, i + 1, rem - take));
            }
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(&self.coeffs)
            .map(|(e, c)| c * monomial(x, e))
            .sum()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (e, c) in self.exponents.iter().zip(&self.coeffs) {
            for (i, gi) in g.iter_mut().enumerate() {
                if e[i] > 0 {
                    let mut e2 = e.clone();
                    e2[i] -= 1;
                    *gi += c * f64::from(e[i]) * monomial(x, &e2);
                }
            }
        }
        g
    }

    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

fn monomial(x: &[f64], e: &[u32]) -> f64 {
    x.iter()
        .zip(e)
        .map(|(&xi, &ei)| xi.powi(ei as i32))
        .product()
}

/// All multi-indices of total degree `degree` in `dim` variables,
/// lexicographic.
pub fn multi_indices(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(dim: usize, degree: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if dim == 1 {
            prefix.push(degree);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for d in (0..=degree).rev() {
            prefix.push(d);
            rec(dim - 1, degree - d, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, degree as u32, &mut Vec::new(), &mut out);
    out
}

/// Polynomial model of the reduced energy around its critical point:
/// `q(x) - q(0) = sum_j q_j(x)` over the fitted homogeneous parts.
#[derive(Debug, Clone, Serialize)]
pub struct KernelPolynomial {
    pub dim: usize,
    pub parts: Vec<HomogeneousPoly>,
}

impl KernelPolynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.parts.iter().map(|p| p.eval(x)).sum()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for p in &self.parts {
            for (gi, pi) in g.iter_mut().zip(p.grad(x)) {
                *gi += pi;
            }
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct GraphNewtonOptions {
    /// Euclidean norm of the discrete residual vector at which the
    /// iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Trust radius in the kernel coordinates.
    pub radius: f64,
}

impl Default for GraphNewtonOptions {
    fn default() -> Self {
        GraphNewtonOptions {
            tol: 2.5e-11,
            max_iter: 30,
            max_halvings: 40,
            radius: 0.1,
        }
    }
}

/// A lifted point `v + phi + F(phi)` on the constraint manifold.
#[derive(Debug, Clone)]
pub struct Lift {
    pub u: Field,
    /// The graph part `F(phi)`, orthogonal to the kernel.
    pub graph_part: Field,
    /// `L^2` norm of the kernel-complement tangential part of the gradient
    /// field at the lift.
    pub coker_residual: f64,
    pub newton_iters: usize,
}

/// Reduction data at a degenerate critical point: kernel basis, kernel
/// complement, and the Newton solver for the graph map.
pub struct ReductionContext {
    man: Manifold,
    base: Field,
    q0: f64,
    kernel: Vec<Field>,
    coker: Vec<Field>,
    coker_mat: DMatrix<f64>,
    completion: Field,
    opts: GraphNewtonOptions,
}

impl ReductionContext {
    /// `v` must be a critical point (residual sup below 1e-8) with its
    /// spectrum computed at the same grid.
    pub fn new(
        man: &Manifold,
        v: &Field,
        spectrum: &Spectrum,
        opts: GraphNewtonOptions,
    ) -> Result<Self> {
        man.require_positive(v)?;
        let resid = el_residual(man, v)?.sup_norm();
        if resid > 1e-8 {
            return Err(Error::domain(format!(
                "reduction base must be critical: residual sup {resid:.3e}"
            )));
        }
        let kernel = spectrum.kernel_fields();
        let coker: Vec<Field> = spectrum
            .eigenfields()
            .iter()
            .enumerate()
            .filter(|(i, _)| !spectrum.kernel_indices().contains(i))
            .map(|(_, f)| f.clone())
            .collect();
        let n = v.len();
        let mut coker_mat = DMatrix::zeros(n, coker.len());
        for (j, f) in coker.iter().enumerate() {
            for i in 0..n {
                coker_mat[(i, j)] = f.values()[i];
            }
        }
        let z = v.powf(man.crit_exponent() - 1.0);
        let completion = z.scale(1.0 / z.l2_norm());
        Ok(ReductionContext {
            man: man.clone(),
            base: v.clone(),
            q0: yamabe_energy(man, v)?,
            kernel,
            coker,
            coker_mat,
            completion,
            opts,
        })
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel.len()
    }

    pub fn kernel(&self) -> &[Field] {
        &self.kernel
    }

    pub fn coker(&self) -> &[Field] {
        &self.coker
    }

    pub fn base(&self) -> &Field {
        &self.base
    }

    pub fn manifold(&self) -> &Manifold {
        &self.man
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn options(&self) -> &GraphNewtonOptions {
        &self.opts
    }

    /// Kernel coordinates of a field: `<f, e_i>` over the kernel basis.
    pub fn kernel_coords(&self, f: &Field) -> Result<Vec<f64>> {
        self.kernel.iter().map(|e| e.l2_inner(f)).collect()
    }

    fn residual_vector(&self, u: &Field) -> Result<(DVector<f64>, Field)> {
        let r = el_residual(&self.man, u)?;
        let m = self.coker.len();
        let mut res = DVector::zeros(m + 1);
        for (j, b) in self.coker.iter().enumerate() {
            res[j] = r.l2_inner(b)?;
        }
        res[m] = volume_integral(&self.man, u) - 1.0;
        Ok((res, r))
    }

    /// Solves the graph map at kernel coordinates `x`: returns the lift
    /// `v + phi + F(phi)` with `phi = sum x_i e_i`, satisfying the volume
    /// constraint and annihilating the kernel-complement tangential part of
    /// the gradient.
    pub fn lift(&self, x: &[f64]) -> Result<Lift> {
        if x.len() != self.kernel.len() {
            return Err(Error::domain(format!(
                "kernel coordinate count {} does not match kernel dimension {}",
                x.len(),
                self.kernel.len()
            )));
        }
        let xnorm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if xnorm > self.opts.radius * (1.0 + 1e-9) {
            return Err(Error::domain(format!(
                "kernel coordinates |x| = {xnorm:.3} outside the trust radius {}",
                self.opts.radius
            )));
        }
        let terms: Vec<(f64, &Field)> = x.iter().copied().zip(self.kernel.iter()).collect();
        let phi_added = self.base.add_scaled(&terms)?;
        let mut u = phi_added.clone();
        if u.min_value() <= 0.0 {
            return Err(Error::domain(
                "lift start point loses positivity; reduce |x|".to_string(),
            ));
        }

        let n = u.len();
        let m = self.coker.len();
        let ps = self.man.crit_exponent();
        let mut best: Option<(Field, f64)> = None;
        let mut res_prev = f64::INFINITY;
        let mut iters = 0;
        loop {
            let (res, r) = self.residual_vector(&u)?;
            let rn = res.norm();
            if rn < self.opts.tol {
                break;
            }
            if best.as_ref().is_none_or(|(_, b)| rn < *b) {
                best = Some((u.clone(), rn));
            }
            if iters >= self.opts.max_iter || (iters > 3 && rn > 0.9 * res_prev) {
                // stagnation just above tolerance is the roundoff floor of
                // the spectral residual; accept the best iterate there
                let (bu, br) = best.expect("tracked above");
                if br < 4.0 * self.opts.tol {
                    u = bu;
                    break;
                }
                return Err(Error::numerical(format!(
                    "graph-map Newton did not converge (residual {br:.3e} after {iters} \
                     iterations); try smaller |x|"
                )));
            }
            res_prev = rn;

            let q_u = yamabe_energy(&self.man, &u)?;
            let z_u = u.powf(ps - 1.0);
            // directions: coker basis then the completion
            let mut jac = DMatrix::zeros(m + 1, m + 1);
            let mut images = DMatrix::zeros(n, m + 1);
            for j in 0..=m {
                let h = if j < m {
                    &self.coker[j]
                } else {
                    &self.completion
                };
                let rh = r.l2_inner(h)?;
                let dr = hessian_operator(&self.man, &u, q_u, h).sub(&z_u.scale(2.0 * rh))?;
                for i in 0..n {
                    images[(i, j)] = dr.values()[i];
                }
                jac[(m, j)] = ps * z_u.l2_inner(h)?;
            }
            // rows: inner products of the residual derivative with the coker
            let w = u.grid().node_weight();
            let block = self.coker_mat.transpose() * &images;
            for j in 0..=m {
                for i in 0..m {
                    jac[(i, j)] = w * block[(i, j)];
                }
            }

            let step = jac
                .lu()
                .solve(&(-res))
                .ok_or_else(|| Error::numerical("singular graph-map Jacobian".to_string()))?;

            // move along the kernel complement, damped for positivity
            let mut dir_vals = vec![0.0; n];
            for j in 0..m {
                let c = step[j];
                for (dv, bv) in dir_vals.iter_mut().zip(self.coker[j].values()) {
                    *dv += c * bv;
                }
            }
            for (dv, cv) in dir_vals.iter_mut().zip(self.completion.values()) {
                *dv += step[m] * cv;
            }
            let dir = Field::from_values(u.grid().clone(), dir_vals)?;
            let mut scale = 1.0;
            let mut halvings = 0;
            loop {
                // re-truncation keeps the iterate band-limited; without it
                // the second derivative amplifies coefficient noise by the
                // squared cutoff and floors the achievable residual
                let trial = u
                    .add_scaled(&[(scale, &dir)])?
                    .band_limit(u.grid().len() / 3);
                if trial.min_value() > 0.0 {
                    u = trial;
                    break;
                }
                scale *= 0.5;
                halvings += 1;
                if halvings > self.opts.max_halvings {
                    return Err(Error::numerical(
                        "lift loses positivity under maximal damping; reduce |x|".to_string(),
                    ));
                }
            }
            iters += 1;
        }

        let (res, _) = self.residual_vector(&u)?;
        // gradient field is twice the residual; its coker-tangential part
        // has L^2 norm |2 res| over the orthonormal basis
        let coker_residual = 2.0 * res.rows(0, m).iter().map(|a| a * a).sum::<f64>().sqrt();
        let neg_terms: Vec<(f64, &Field)> = x
            .iter()
            .copied()
            .zip(self.kernel.iter())
            .map(|(c, e)| (-c, e))
            .collect();
        let graph_part = u.sub(&self.base)?.add_scaled(&neg_terms)?;
        Ok(Lift {
            u,
            graph_part,
            coker_residual,
            newton_iters: iters,
        })
    }

    /// Reduced energy `q(x) = Q(v + phi + F(phi))`.
    pub fn reduced_energy(&self, x: &[f64]) -> Result<f64> {
        yamabe_energy(&self.man, &self.lift(x)?.u)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AdamsSimonVerdict {
    pub holds: bool,
    pub max_value: f64,
    pub maximizer: Vec<f64>,
    pub noise_floor: f64,
}

/// Fitted polynomial model of the reduced energy.
#[derive(Debug, Clone, Serialize)]
pub struct ReducedModel {
    pub q0: f64,
    pub kernel_dim: usize,
    /// Homogeneous parts by degree (2..=j_max); empty when nondegenerate.
    pub parts: Vec<HomogeneousPoly>,
    pub coeff_norms: Vec<(usize, f64)>,
    /// Order of integrability: smallest degree with coefficient norm above
    /// the tolerance; `None` when all fitted degrees vanish (integrable) or
    /// when the kernel is trivial.
    pub order: Option<usize>,
    /// Present when a second candidate order sits near the noise floor.
    pub order_interval: Option<(usize, usize)>,
    pub adams_simon: Option<AdamsSimonVerdict>,
    pub coeff_tol: f64,
    pub fit_rms: f64,
    pub fit_cond: f64,
    pub radii: Vec<f64>,
}

impl ReducedModel {
    pub fn nondegenerate(q0: f64) -> Self {
        ReducedModel {
            q0,
            kernel_dim: 0,
            parts: Vec::new(),
            coeff_norms: Vec::new(),
            order: None,
            order_interval: None,
            adams_simon: None,
            coeff_tol: 0.0,
            fit_rms: 0.0,
            fit_cond: 1.0,
            radii: Vec::new(),
        }
    }

    pub fn polynomial(&self) -> KernelPolynomial {
        KernelPolynomial {
            dim: self.kernel_dim,
            parts: self.parts.clone(),
        }
    }

    /// The fitted part of a given degree.
    pub fn part(&self, degree: usize) -> Option<&HomogeneousPoly> {
        self.parts.iter().find(|p| p.degree == degree)
    }
}

#[derive(Debug, Clone)]
pub struct TaylorOptions {
    pub radii: Vec<f64>,
    pub j_max: usize,
    /// Directions sampled per radius (evenly spaced angles when the kernel
    /// is two-dimensional, seeded random unit vectors otherwise).
    pub directions_per_radius: usize,
    pub coeff_tol: f64,
    pub max_condition: f64,
    pub seed: u64,
}

impl Default for TaylorOptions {
    fn default() -> Self {
        TaylorOptions {
            radii: vec![0.02, 0.03, 0.045, 0.0675, 0.1],
            j_max: 6,
            directions_per_radius: 24,
            coeff_tol: 1e-6,
            max_condition: 1e10,
            seed: 0,
        }
    }
}

fn unit_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|a| {
                let ang = 2.0 * std::f64::consts::PI * a as f64 / count as f64 + 0.1;
                vec![ang.cos(), ang.sin()]
            })
            .collect(),
        _ => {
            let mut rng: rand_chacha::ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let mut v: Vec<f64> = (0..dim)
                        .map(|_| {
                            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                            let u2: f64 = rng.gen_range(0.0..1.0);
                            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                        })
                        .collect();
                    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    for a in &mut v {
                        *a /= n;
                    }
                    v
                })
                .collect()
        }
    }
}

/// Fits the homogeneous Taylor parts of the reduced energy (degrees
/// `2..=j_max`) by least squares over concentric spheres, identifies the
/// order of integrability, and runs the positivity test on the leading
/// part.
pub fn taylor_of_q(ctx: &ReductionContext, opts: &TaylorOptions) -> Result<ReducedModel> {
    if ctx.kernel_dim() == 0 {
        return Ok(ReducedModel::nondegenerate(ctx.q0()));
    }
    let dim = ctx.kernel_dim();
    let degrees: Vec<usize> = (2..=opts.j_max).collect();
    let index_sets: Vec<Vec<Vec<u32>>> = degrees.iter().map(|&d| multi_indices(dim, d)).collect();
    let n_coeffs: usize = index_sets.iter().map(Vec::len).sum();
    let dirs = unit_directions(dim, opts.directions_per_radius, opts.seed);
    let n_samples = opts.radii.len() * dirs.len();
    if n_samples < 3 * n_coeffs {
        return Err(Error::domain(format!(
            "need at least {} samples for {} coefficients, got {}",
            3 * n_coeffs,
            n_coeffs,
            n_samples
        )));
    }

    let mut design = DMatrix::zeros(n_samples, n_coeffs);
    let mut rhs = DVector::zeros(n_samples);
    let mut row = 0;
    for &radius in &opts.radii {
        for dir in &dirs {
            let x: Vec<f64> = dir.iter().map(|d| d * radius).collect();
            rhs[row] = ctx.reduced_energy(&x)? - ctx.q0();
            let mut col = 0;
            for set in &index_sets {
                for e in set {
                    design[(row, col)] = monomial(&x, e);
                    col += 1;
                }
            }
            row += 1;
        }
    }

    // column scaling for conditioning; coefficients are unscaled afterwards
    let mut col_norms = vec![0.0f64; n_coeffs];
    for (c, norm) in col_norms.iter_mut().enumerate() {
        *norm = design.column(c).norm().max(1e-300);
    }
    for (c, norm) in col_norms.iter().enumerate() {
        let mut col = design.column_mut(c);
        col /= *norm;
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = smax / smin.max(1e-300);
    if cond > opts.max_condition {
        return Err(Error::numerical(format!(
            "Taylor fit is ill-conditioned (condition {cond:.3e}); use different radii"
        )));
    }
    let scaled_coeffs = svd
        .solve(&rhs, 1e-14 * smax)
        .map_err(|e| Error::numerical(format!("least squares solve failed: {e}")))?;
    let residual = (&design * &scaled_coeffs) - &rhs;
    let fit_rms = residual.norm() / (n_samples as f64).sqrt();

    let mut parts = Vec::new();
    let mut col = 0;
    for (set, &degree) in index_sets.iter().zip(&degrees) {
        let mut p = HomogeneousPoly::zeros(dim, degree);
        for (k, _) in set.iter().enumerate() {
            p.coeffs[k] = scaled_coeffs[col] / col_norms[col];
            col += 1;
        }
        parts.push(p);
    }

    let coeff_norms: Vec<(usize, f64)> = parts.iter().map(|p| (p.degree, p.coeff_norm())).collect();
    let order = coeff_norms
        .iter()
        .find(|(_, n)| *n > opts.coeff_tol)
        .map(|(d, _)| *d);
    // ambiguity: a lower degree hovering just below the tolerance
    let order_interval = order.and_then(|p| {
        coeff_norms
            .iter()
            .find(|(d, n)| *d < p && *n > opts.coeff_tol / 3.0)
            .map(|(d, _)| (*d, p))
    });

    let min_radius = opts.radii.iter().copied().fold(f64::INFINITY, f64::min);
    let adams_simon = order.map(|p| {
        let part = parts.iter().find(|q| q.degree == p).expect("order fitted");
        let noise_floor = 10.0 * fit_rms / min_radius.powi(p as i32);
        let (max_value, maximizer) = maximize_on_sphere(part, opts.seed);
        AdamsSimonVerdict {
            holds: max_value > noise_floor,
            max_value,
            maximizer,
            noise_floor,
        }
    });

    Ok(ReducedModel {
        q0: ctx.q0(),
        kernel_dim: dim,
        parts,
        coeff_norms,
        order,
        order_interval,
        adams_simon,
        coeff_tol: opts.coeff_tol,
        fit_rms,
        fit_cond: cond,
        radii: opts.radii.clone(),
    })
}

/// Maximizes a homogeneous polynomial over the unit sphere by dense
/// sampling followed by projected gradient ascent.
pub fn maximize_on_sphere(p: &HomogeneousPoly, seed: u64) -> (f64, Vec<f64>) {
    let samples = if p.dim == 1 { 2 } else { 512 * p.dim };
    let dirs = unit_directions(p.dim, samples, seed.wrapping_add(1));
    let mut best_x = dirs[0].clone();
    let mut best = f64::NEG_INFINITY;
    for d in &dirs {
        let v = p.eval(d);
        if v > best {
            best = v;
            best_x = d.clone();
        }
    }
    if p.dim == 1 {
        return (best, best_x);
    }
    // projected ascent with backtracking
    let mut step = 0.1;
    for _ in 0..200 {
        let g = p.grad(&best_x);
        let gx: f64 = g.iter().zip(&best_x).map(|(a, b)| a * b).sum();
        let tang: Vec<f64> = g.iter().zip(&best_x).map(|(gi, xi)| gi - gx * xi).collect();
        let tn = tang.iter().map(|a| a * a).sum::<f64>().sqrt();
        if tn < 1e-14 {
            break;
        }
        let mut improved = false;
        while step > 1e-12 {
            let mut trial: Vec<f64> = best_x
                .iter()
                .zip(&tang)
                .map(|(x, t)| x + step * t)
                .collect();
            let n = trial.iter().map(|a| a * a).sum::<f64>().sqrt();
            for t in &mut trial {
                *t /= n;
            }
            let v = p.eval(&trial);
            if v > best {
                best = v;
                best_x = trial;
                improved = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (best, best_x)
}

/// Positivity test of the leading homogeneous part on the unit sphere.
pub fn check_adams_simon(model: &ReducedModel) -> (bool, Option<Vec<f64>>) {
    match &model.adams_simon {
        Some(v) => (v.holds, v.holds.then(|| v.maximizer.clone())),
        None => (false, None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrability {
    Nondegenerate,
    Integrable,
    Nonintegrable,
}

/// Classification per the reduced energy: trivial kernel is nondegenerate,
/// a locally constant reduced energy (all fitted parts below tolerance) is
/// integrable, anything else is nonintegrable.
pub fn classify_integrability(model: &ReducedModel, tol: f64) -> Integrability {
    if model.kernel_dim == 0 {
        return Integrability::Nondegenerate;
    }
    if model.coeff_norms.iter().all(|(_, n)| *n <= tol) {
        Integrability::Integrable
    } else {
        Integrability::Nonintegrable
    }
}
