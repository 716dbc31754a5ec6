//! Constrained second variation of the energy: operator application, dense
//! spectrum on the tangent space, and kernel extraction.
//!
//! At a base point `v` on the constraint manifold the operator is
//! `A = -c_n d^2/dtheta^2 + R_g - (2*-1) Q(v) v^{2*-2}`, sandwiched between
//! tangent projections. All returned quantities follow the half convention:
//! they represent one half of the second variation of the quotient.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::energy::{orthogonal_tangent_project, tangent_project, yamabe_energy};
use crate::error::{Error, Result};
use crate::manifold::Manifold;
use crate::spectral::Field;

/// The unprojected operator `A phi` at base `v`.
pub(crate) fn hessian_operator(man: &Manifold, v: &Field, q_v: f64, phi: &Field) -> Field {
    let pot = v.powf(man.crit_exponent() - 2.0);
    man.conformal_laplacian(phi)
        .sub(
            &pot.pointwise_mul(phi)
                .expect("same grid")
                .scale((man.crit_exponent() - 1.0) * q_v),
        )
        .expect("same grid")
}

/// Dense node-space matrix of `A` at base `v` (used by the Newton solvers).
pub(crate) fn hessian_matrix(man: &Manifold, v: &Field, q_v: f64) -> DMatrix<f64> {
    let n = v.len();
    let grid = v.grid();
    let mut m = grid.d2_matrix().scale(-man.conformal_const());
    let pot = v.powf(man.crit_exponent() - 2.0);
    for j in 0..n {
        m[(j, j)] += man.scalar_curvature() - (man.crit_exponent() - 1.0) * q_v * pot.values()[j];
    }
    m
}

/// Half second variation applied to a direction: tangent-project the input,
/// apply `A`, and project the result back onto the tangent space (the
/// orthogonal projection, so that the operator is symmetric there and
/// `<H phi, eta>` reproduces the second-variation form for tangent fields).
pub fn hessian_apply(man: &Manifold, v: &Field, phi: &Field) -> Result<Field> {
    man.require_positive(v)?;
    let q_v = yamabe_energy(man, v)?;
    let pt = tangent_project(man, v, phi)?;
    let a = hessian_operator(man, v, q_v, &pt);
    orthogonal_tangent_project(man, v, &a)
}

/// Eigendecomposition of the constrained second variation at `v`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenfields: Vec<Field>,
    kernel_indices: Vec<usize>,
    negative_count: usize,
    lambda1_w12: f64,
    kernel_tol: f64,
}

impl Spectrum {
    /// Eigenvalues in ascending order (`L^2` pairing, half convention).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `L^2`-orthonormal eigenfields in the tangent space at the base.
    pub fn eigenfields(&self) -> &[Field] {
        &self.eigenfields
    }

    pub fn kernel_indices(&self) -> &[usize] {
        &self.kernel_indices
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel_indices.len()
    }

    pub fn kernel_fields(&self) -> Vec<Field> {
        self.kernel_indices
            .iter()
            .map(|&i| self.eigenfields[i].clone())
            .collect()
    }

    pub fn negative_count(&self) -> usize {
        self.negative_count
    }

    /// Smallest nonzero eigenvalue of the full second variation paired
    /// against the `W^{1,2}` inner product; this is the coercivity constant
    /// entering the local stability estimate.
    pub fn lambda1_w12(&self) -> f64 {
        self.lambda1_w12
    }

    /// Smallest eigenvalue above the kernel tolerance (`L^2` pairing).
    pub fn lambda1_l2(&self) -> f64 {
        let scale = self.spectral_radius();
        self.eigenvalues
            .iter()
            .copied()
            .filter(|l| l.abs() > self.kernel_tol * scale)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()))
    }

    pub fn kernel_tol(&self) -> f64 {
        self.kernel_tol
    }

    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            kernel_dim: self.kernel_dim(),
            negative_count: self.negative_count,
            lambda1_l2: self.lambda1_l2(),
            lambda1_w12: self.lambda1_w12,
            kernel_tol: self.kernel_tol,
            eigenvalues: self.eigenvalues.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub kernel_dim: usize,
    pub negative_count: usize,
    pub lambda1_l2: f64,
    pub lambda1_w12: f64,
    pub kernel_tol: f64,
    pub eigenvalues: Vec<f64>,
}

/// `L^2`-orthonormal basis of the discrete tangent space at `v` (the
/// annihilator of `v^{2*-1}`), via a Householder reflector in the weighted
/// node coordinates.
pub(crate) fn tangent_basis(man: &Manifold, v: &Field) -> Vec<Field> {
    let grid = v.grid();
    let n = grid.len();
    let w = grid.node_weight();
    let sqrt_w = w.sqrt();
    let z = v.powf(man.crit_exponent() - 1.0);
    let mut zh: Vec<f64> = z.values().iter().map(|&x| x * sqrt_w).collect();
    let zn = zh.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut zh {
        *x /= zn;
    }
    // reflector v = (zhat + e1)/|..| maps zhat to -e1 (zhat_1 > 0 since the
    // base is positive); columns 2..N of I - 2 v v^T are orthonormal and
    // perpendicular to zhat
    let mut hv = zh.clone();
    hv[0] += 1.0;
    let hn = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut hv {
        *x /= hn;
    }
    (1..n)
        .map(|j| {
            let mut col = vec![0.0; n];
            for (i, c) in col.iter_mut().enumerate() {
                *c = -2.0 * hv[i] * hv[j];
            }
            col[j] += 1.0;
            // back to node values: undo the sqrt(w) scaling
            for c in &mut col {
                *c /= sqrt_w;
            }
            Field::from_values(grid.clone(), col).expect("length matches")
        })
        .collect()
}

fn sorted_symmetric_eigen(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dim = m.nrows();
    let sym = (&m + m.transpose()).scale(0.5);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or_else(|| {
        Error::numerical("symmetric eigendecomposition did not converge".to_string())
    })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("eigenvalues are finite")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &eig.eigenvectors.column(old));
    }
    Ok((values, vectors))
}

fn assemble_tangent_matrix(
    man: &Manifold,
    v: &Field,
) -> Result<(Vec<Field>, Vec<Field>, DMatrix<f64>)> {
    let q_v = yamabe_energy(man, v)?;
    let basis = tangent_basis(man, v);
    let dim = basis.len();
    let images: Vec<Field> = basis
        .iter()
        .map(|b| hessian_operator(man, v, q_v, b))
        .collect();
    let mut m = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            m[(i, j)] = images[j].l2_inner(&basis[i]).expect("same grid");
        }
    }
    Ok((basis, images, m))
}

fn count_kernel_negative(eigenvalues: &[f64], kernel_tol: f64) -> (usize, usize) {
    let radius = eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let kernel = eigenvalues
        .iter()
        .filter(|l| l.abs() < kernel_tol * radius)
        .count();
    let negative = eigenvalues
        .iter()
        .filter(|l| **l < -kernel_tol * radius)
        .count();
    (kernel, negative)
}

/// Eigenvalues only (ascending) with kernel and negative counts; much
/// cheaper than the full spectrum when eigenfields are not needed.
pub fn hessian_eigenvalues(
    man: &Manifold,
    v: &Field,
    kernel_tol: f64,
) -> Result<(Vec<f64>, usize, usize)> {
    man.require_positive(v)?;
    let (_, _, m) = assemble_tangent_matrix(man, v)?;
    let sym = (&m + m.transpose()).scale(0.5);
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let (kernel, negative) = count_kernel_negative(&eigenvalues, kernel_tol);
    Ok((eigenvalues, kernel, negative))
}

/// Full spectrum of the constrained second variation at `v`, restricted to
/// the tangent space. The kernel is the set of eigenvalues with modulus
/// below `kernel_tol` times the spectral radius.
pub fn hessian_spectrum(man: &Manifold, v: &Field, kernel_tol: f64) -> Result<Spectrum> {
    man.require_positive(v)?;
    if kernel_tol <= 0.0 || kernel_tol.is_nan() {
        return Err(Error::domain(
            "kernel tolerance must be positive".to_string(),
        ));
    }
    let (basis, images, m) = assemble_tangent_matrix(man, v)?;
    let dim = basis.len();
    let (eigenvalues, vectors) = sorted_symmetric_eigen(m)?;

    let eigenfields: Vec<Field> = (0..dim)
        .map(|k| {
            let col = vectors.column(k);
            let mut values = vec![0.0; v.len()];
            for (j, b) in basis.iter().enumerate() {
                let c = col[j];
                for (val, bv) in values.iter_mut().zip(b.values()) {
                    *val += c * bv;
                }
            }
            Field::from_values(v.grid().clone(), values).expect("length matches")
        })
        .collect();

    let radius = eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let kernel_indices: Vec<usize> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| l.abs() < kernel_tol * radius)
        .map(|(i, _)| i)
        .collect();
    let negative_count = eigenvalues
        .iter()
        .filter(|l| **l < -kernel_tol * radius)
        .count();

    // W12-generalized spectrum of the full second variation (factor 2):
    // solve 2 M x = lambda G x with G the W12 Gram of the tangent basis
    let derivs: Vec<Field> = basis.iter().map(Field::derivative).collect();
    let mut gram = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        for i in j..dim {
            let g = derivs[j].l2_inner(&derivs[i]).expect("same grid")
                + basis[j].l2_inner(&basis[i]).expect("same grid");
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let chol = Cholesky::new(gram).ok_or_else(|| {
        Error::numerical("tangent W12 Gram matrix is not positive definite".to_string())
    })?;
    let mut m2 = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            m2[(i, j)] = 2.0 * images[j].l2_inner(&basis[i]).expect("same grid");
        }
    }
    let l = chol.l();
    let x = l
        .clone()
        .solve_lower_triangular(&m2)
        .ok_or_else(|| Error::numerical("triangular solve failed".to_string()))?;
    let b = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::numerical("triangular solve failed".to_string()))?
        .transpose();
    let (gen_vals, _) = sorted_symmetric_eigen(b)?;
    let gen_radius = gen_vals.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let lambda1_w12 = gen_vals
        .iter()
        .copied()
        .filter(|l| l.abs() > kernel_tol * gen_radius)
        .fold(f64::INFINITY, f64::min);

    Ok(Spectrum {
        eigenvalues,
        eigenfields,
        kernel_indices,
        negative_count,
        lambda1_w12,
        kernel_tol,
    })
}

/// Closed-form constant-base eigenvalue of the circle mode `k`:
/// `c_n (k/L)^2 + R_g - (2*-1) R_g`.
pub fn constant_base_mode_value(man: &Manifold, k: u32) -> f64 {
    let mu = (f64::from(k) / man.circle_len()).powi(2);
    man.conformal_const() * mu + man.scalar_curvature()
        - (man.crit_exponent() - 1.0) * man.scalar_curvature()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::normalize_volume;
    use crate::spectral::Field;
    use rand::SeedableRng;

    fn constant_base(n: u32, l: f64, nn: usize) -> (Manifold, Field) {
        let man = Manifold::product(n, l).unwrap();
        let grid = man.grid(nn).unwrap();
        let v = normalize_volume(&man, &Field::constant(grid, 1.0)).unwrap();
        (man, v)
    }

    #[test]
    fn eigenvalues_match_mode_formula() {
        for l in [0.8, 1.0, 1.2] {
            let (man, v) = constant_base(3, l, 128);
            let spec = hessian_spectrum(&man, &v, 1e-7).unwrap();
            // analytic: each k = 1..N/2-1 appears twice (cos & sin)
            let mut analytic: Vec<f64> = Vec::new();
            for k in 1..64u32 {
                let val = constant_base_mode_value(&man, k);
                analytic.push(val);
                analytic.push(val);
            }
            analytic.push(constant_base_mode_value(&man, 64));
            analytic.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (i, (got, want)) in spec.eigenvalues().iter().zip(&analytic).enumerate() {
                assert!(
                    (got - want).abs() < 1e-8 * want.abs().max(1.0),
                    "L={l} idx {i}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn kernel_structure_across_the_critical_length() {
        let (man, v) = constant_base(3, 0.8, 128);
        let spec = hessian_spectrum(&man, &v, 1e-7).unwrap();
        assert_eq!(spec.kernel_dim(), 0);
        assert_eq!(spec.negative_count(), 0);
        assert!(spec.eigenvalues()[0] > 0.0);

        let (man, v) = constant_base(3, 1.0, 128);
        let spec = hessian_spectrum(&man, &v, 1e-7).unwrap();
        assert_eq!(spec.kernel_dim(), 2);
        assert_eq!(spec.negative_count(), 0);
        // kernel is spanned by the first circle modes
        for f in spec.kernel_fields() {
            let c1 = f.coeff(1).norm();
            let rest: f64 = (2..=8).map(|k| f.coeff(k).norm()).sum();
            assert!(
                c1 > 1e-3 && rest < 1e-8 * c1,
                "kernel field not a first mode"
            );
        }

        let (man, v) = constant_base(3, 1.2, 128);
        let spec = hessian_spectrum(&man, &v, 1e-7).unwrap();
        assert_eq!(spec.kernel_dim(), 0);
        assert_eq!(spec.negative_count(), 2);
    }

    #[test]
    fn kernel_mode_is_annihilated_at_critical_length() {
        let (man, v) = constant_base(3, 1.0, 64);
        let phi = Field::from_fn(v.grid().clone(), |t| t.cos());
        let h = hessian_apply(&man, &v, &phi).unwrap();
        assert!(h.sup_norm() < 1e-10 * phi.sup_norm());
    }

    #[test]
    fn operator_is_symmetric_on_tangent_fields() {
        let man = Manifold::product(3, 1.1).unwrap();
        let grid = man.grid(64).unwrap();
        let v = normalize_volume(
            &man,
            &Field::from_fn(grid.clone(), |t| 1.0 + 0.25 * (t / 1.1).cos()),
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let phi = orthogonal_tangent_project(
            &man,
            &v,
            &Field::random_lowpass(grid.clone(), &mut rng, 10, 0.5),
        )
        .unwrap();
        let eta =
            orthogonal_tangent_project(&man, &v, &Field::random_lowpass(grid, &mut rng, 10, 0.5))
                .unwrap();
        let a = hessian_apply(&man, &v, &phi)
            .unwrap()
            .l2_inner(&eta)
            .unwrap();
        let b = hessian_apply(&man, &v, &eta)
            .unwrap()
            .l2_inner(&phi)
            .unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn matches_second_central_difference_of_energy() {
        let man = Manifold::product(3, 0.9).unwrap();
        let grid = man.grid(64).unwrap();
        let v = normalize_volume(
            &man,
            &Field::from_fn(grid.clone(), |t| 1.0 + 0.2 * (t / 0.9).cos()),
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let phi =
            orthogonal_tangent_project(&man, &v, &Field::random_lowpass(grid, &mut rng, 6, 1.0))
                .unwrap();
        let q0 = yamabe_energy(&man, &v).unwrap();
        let form = 2.0
            * hessian_apply(&man, &v, &phi)
                .unwrap()
                .l2_inner(&phi)
                .unwrap();
        let mut errs = Vec::new();
        for h in [1e-3, 1e-4] {
            let qp = yamabe_energy(&man, &v.add_scaled(&[(h, &phi)]).unwrap()).unwrap();
            let qm = yamabe_energy(&man, &v.add_scaled(&[(-h, &phi)]).unwrap()).unwrap();
            let fd = (qp - 2.0 * q0 + qm) / (h * h);
            errs.push((fd - form).abs());
        }
        assert!(errs[0] < 1e-3 * form.abs().max(1.0), "errs {errs:?}");
        assert!(errs[1] < errs[0] / 10.0 || errs[1] < 1e-7, "errs {errs:?}");
    }

    #[test]
    fn constant_base_cross_check_formula() {
        // at a constant base the operator reduces to
        // (4/(n-2)) * (-(n-1) phi'' - R_g phi) on tangent fields
        let (man, v) = constant_base(3, 0.85, 64);
        let phi = Field::from_fn(v.grid().clone(), |t| (2.0 * t / 0.85).cos());
        let got = hessian_apply(&man, &v, &phi).unwrap();
        let nf = 3.0;
        let expected = phi
            .second_derivative()
            .scale(-(nf - 1.0))
            .sub(&phi.scale(man.scalar_curvature()))
            .unwrap()
            .scale(4.0 / (nf - 2.0));
        let err = got.sub(&expected).unwrap().sup_norm();
        assert!(err < 1e-10 * expected.sup_norm(), "err {err}");
    }

    #[test]
    fn spectrum_invariant_under_base_rotation() {
        let man = Manifold::product(3, 1.05).unwrap();
        let grid = man.grid(64).unwrap();
        let v = normalize_volume(
            &man,
            &Field::from_fn(grid, |t| 1.0 + 0.2 * (t / 1.05).cos()),
        )
        .unwrap();
        let s1 = hessian_spectrum(&man, &v, 1e-7).unwrap();
        let s2 = hessian_spectrum(&man, &v.rotate(0.61), 1e-7).unwrap();
        for (a, b) in s1.eigenvalues().iter().zip(s2.eigenvalues()) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn eigenfields_are_tangent_and_orthonormal() {
        let (man, v) = constant_base(3, 1.0, 64);
        let spec = hessian_spectrum(&man, &v, 1e-7).unwrap();
        let z = v.powf(man.crit_exponent() - 1.0);
        for (i, e) in spec.eigenfields().iter().enumerate().take(8) {
            assert!(z.l2_inner(e).unwrap().abs() < 1e-10);
            for (j, f) in spec.eigenfields().iter().enumerate().take(8) {
                let ip = e.l2_inner(f).unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-9);
            }
        }
        // operator diagonalizes: <H e_i, e_j> = lambda_i delta_ij
        for (i, e) in spec.eigenfields().iter().enumerate().take(5) {
            let he = hessian_apply(&man, &v, e).unwrap();
            for (j, f) in spec.eigenfields().iter().enumerate().take(5) {
                let got = he.l2_inner(f).unwrap();
                let expected = if i == j { spec.eigenvalues()[i] } else { 0.0 };
                assert!(
                    (got - expected).abs() < 1e-9 * spec.spectral_radius(),
                    "i={i} j={j}"
                );
            }
        }
    }

    #[test]
    fn w12_coercivity_constant_at_the_degenerate_length() {
        // minimum over k != 1 of 2(c_n (k/L)^2 - (2*-2) R_g) / (1 + (k/L)^2)
        // at n=3, L=1 is attained at k=2: 2*24/5 = 9.6
        let (man, v) = constant_base(3, 1.0, 128);
        let spec = hessian_spectrum(&man, &v, 1e-7).unwrap();
        assert!(
            (spec.lambda1_w12() - 9.6).abs() < 1e-8,
            "{}",
            spec.lambda1_w12()
        );
    }
}
