//! The constrained Yamabe energy: quotient, Euler-Lagrange residual,
//! tangent projections, gradient, and the conformally invariant distances.
//!
//! Throughout, the constraint manifold consists of the positive conformal
//! factors with unit `2*`-volume, and its tangent space at `v` is the
//! annihilator of `v^{2*-1}` in the `L^2` pairing.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifold::Manifold;
use crate::spectral::Field;

/// Yamabe quotient `(int c_n |u'|^2 + R_g u^2) / (int u^{2*})^{2/2*}`.
pub fn yamabe_energy(man: &Manifold, u: &Field) -> Result<f64> {
    man.require_positive(u)?;
    let num = energy_numerator(man, u);
    let den = u.powf(man.crit_exponent()).integrate();
    Ok(num / den.powf(2.0 / man.crit_exponent()))
}

/// Dirichlet part `int c_n |u'|^2 + R_g u^2`; equals the quotient when `u`
/// has unit `2*`-volume.
pub fn energy_numerator(man: &Manifold, u: &Field) -> f64 {
    let du = u.derivative();
    man.conformal_const() * du.l2_inner(&du).expect("same grid")
        + man.scalar_curvature() * u.l2_inner(u).expect("same grid")
}

/// `L^{2*}` volume `int u^{2*}` of a positive factor.
pub fn volume_integral(man: &Manifold, u: &Field) -> f64 {
    u.powf(man.crit_exponent()).integrate()
}

/// Rescales a positive factor onto the unit-volume constraint manifold.
pub fn normalize_volume(man: &Manifold, u: &Field) -> Result<Field> {
    man.require_positive(u)?;
    let norm = volume_integral(man, u).powf(1.0 / man.crit_exponent());
    Ok(u.scale(1.0 / norm))
}

/// Projection onto the tangent space at `v`: `phi - (int v^{2*-1} phi) v`.
///
/// This is the projection along `v` used by the second-variation formula;
/// it maps into the tangent space because `v` has unit volume.
pub fn tangent_project(man: &Manifold, v: &Field, phi: &Field) -> Result<Field> {
    let z = v.powf(man.crit_exponent() - 1.0);
    let c = z.l2_inner(phi)?;
    phi.sub(&v.scale(c))
}

/// `L^2`-orthogonal projection onto the tangent space at `v` (subtracts the
/// component along `v^{2*-1}`). This is the projection that turns the
/// residual into the Riesz representative of the constrained first
/// variation.
pub fn orthogonal_tangent_project(man: &Manifold, v: &Field, phi: &Field) -> Result<Field> {
    let z = v.powf(man.crit_exponent() - 1.0);
    let c = z.l2_inner(phi)? / z.l2_inner(&z)?;
    phi.sub(&z.scale(c))
}

/// Euler-Lagrange residual `-c_n u'' + R_g u - lambda u^{2*-1}` with
/// `lambda = Q(u)`; vanishes exactly at critical points on the constraint
/// manifold.
pub fn el_residual(man: &Manifold, u: &Field) -> Result<Field> {
    man.require_positive(u)?;
    let q = yamabe_energy(man, u)?;
    let lu = man.conformal_laplacian(u);
    lu.sub(&u.powf(man.crit_exponent() - 1.0).scale(q))
}

/// Constrained gradient at `u`: twice the `L^2`-orthogonal tangent
/// projection of the Euler-Lagrange residual. For tangent directions `phi`
/// the pairing `<gradient, phi>` equals the derivative of the quotient along
/// `u + t phi`.
pub fn gradient(man: &Manifold, u: &Field) -> Result<Field> {
    let r = el_residual(man, u)?;
    Ok(orthogonal_tangent_project(man, u, &r)?.scale(2.0))
}

/// Conformally invariant distance between the metrics with factors `u`, `v`:
/// `(int |u-v|^{2*})^{1/2*}` over the background volume element.
pub fn conformal_distance(man: &Manifold, u: &Field, v: &Field) -> Result<f64> {
    u.same_grid(v)?;
    let d = u.sub(v)?.abs_powf(man.crit_exponent()).integrate();
    Ok(d.powf(1.0 / man.crit_exponent()))
}

/// Energy distance `(int c_n |(u-v)'|^2 + Y (u-v)^2)^{1/2}`; defined for
/// `Y >= 0` over a unit-volume minimizing representative (caller's
/// responsibility, recorded in reports).
pub fn conformal_distance_star(man: &Manifold, u: &Field, v: &Field, y: f64) -> Result<f64> {
    if y < 0.0 {
        return Err(Error::domain(format!(
            "the energy distance is defined only for nonnegative Yamabe constants, got {y}"
        )));
    }
    let d = u.sub(v)?;
    let dd = d.derivative();
    let sq = man.conformal_const() * dd.l2_inner(&dd)? + y * d.l2_inner(&d)?;
    if sq < -1e-12 * (1.0 + y) {
        return Err(Error::numerical(format!(
            "energy distance form is not positive semidefinite: {sq}"
        )));
    }
    Ok(sq.max(0.0).sqrt())
}

/// Conformal Laplacian expressed in the representative with factor `phi`
/// (metric `phi^{4/(n-2)} g`), acting on circle-dependent `psi`:
/// `-c_n phi^{-2*} (phi^2 psi')' + R_phi psi` with `R_phi` the scalar
/// curvature of the conformal metric. Satisfies the covariance law
/// `L_phi psi = phi^{1-2*} L_g(phi psi)`.
pub fn conformal_laplacian_in_representative(
    man: &Manifold,
    phi: &Field,
    psi: &Field,
) -> Result<Field> {
    man.require_positive(phi)?;
    psi.same_grid(phi)?;
    let r_phi = man.conformal_scalar_curvature(phi)?;
    let flux = phi.pointwise_mul(phi)?.pointwise_mul(&psi.derivative())?;
    let div = flux.derivative();
    let ps = man.crit_exponent();
    let lap_term = div.zip(phi, |d, p| -man.conformal_const() * p.powf(-ps) * d)?;
    lap_term.add(&r_phi.pointwise_mul(psi)?)
}

/// `int f dvol` in the representative with factor `phi`
/// (`dvol_phi = phi^{2*} dvol_g`).
pub fn integrate_in_representative(man: &Manifold, phi: &Field, f: &Field) -> Result<f64> {
    Ok(f.pointwise_mul(&phi.powf(man.crit_exponent()))?.integrate())
}

/// Normalized distance to a finite set of unit-volume minimizers, reduced
/// over the circle rotations of each minimizer:
/// `min_v min_s ||u - rot_s v||_{W^{1,2}} / ||u||_{W^{1,2}}`.
pub fn distance_to_set(man: &Manifold, u: &Field, minimizers: &[Field]) -> Result<f64> {
    if minimizers.is_empty() {
        return Err(Error::domain(
            "distance requires a nonempty minimizer set".to_string(),
        ));
    }
    let _ = man;
    let u_norm = u.w12_norm();
    let mut best = f64::INFINITY;
    for v in minimizers {
        u.same_grid(v)?;
        let d = rotation_reduced_w12_distance(u, v);
        if d < best {
            best = d;
        }
    }
    Ok(best / u_norm)
}

/// `min_s ||u - rot_s v||_{W^{1,2}}`, by phase alignment of the first
/// nonzero mode of `v` followed by golden-section refinement of the
/// correlation.
fn rotation_reduced_w12_distance(u: &Field, v: &Field) -> f64 {
    let grid = u.grid();
    let l = grid.circle_len();

    // W12 cross-correlation as a function of the shift, from the mode
    // coefficients: C(s) = volfac * sum_k (1 + (k/L)^2) u_k conj(v_k) e^{iks/L}
    let volfac = grid.node_weight() * grid.len() as f64;
    let half = grid.len() / 2;
    let mut terms: Vec<(f64, rustfft::num_complex::Complex<f64>)> = Vec::new();
    for k in 0..=half as i64 {
        let w = k as f64 / l;
        let mut prod = u.coeff(k) * v.coeff(k).conj();
        if k > 0 && (k as usize) < half {
            prod *= 2.0; // conjugate mode pairs
        }
        terms.push((w, (1.0 + w * w) * prod * volfac));
    }
    let corr = |s: f64| -> f64 {
        terms
            .iter()
            .map(|&(w, c)| (c * rustfft::num_complex::Complex::from_polar(1.0, w * s)).re)
            .sum()
    };

    // first nonzero mode of v fixes the phase up to k-fold ambiguity
    let tol = 1e-12 * v.sup_norm().max(1.0);
    let k0 = (1..=half as i64).find(|&k| v.coeff(k).norm() > tol);
    let candidates: Vec<f64> = match k0 {
        None => vec![0.0], // v is constant; rotations act trivially
        Some(k0) => {
            let base = (v.coeff(k0).arg() - u.coeff(k0).arg()) * l / k0 as f64;
            (0..k0)
                .map(|m| base + 2.0 * std::f64::consts::PI * l * m as f64 / k0 as f64)
                .collect()
        }
    };
    let mut s_best = 0.0;
    let mut c_best = f64::NEG_INFINITY;
    for s in candidates {
        let c = corr(s);
        if c > c_best {
            c_best = c;
            s_best = s;
        }
    }
    // golden-section refinement of the correlation maximum
    let spacing = 2.0 * std::f64::consts::PI * l / grid.len() as f64;
    let (mut a, mut b) = (s_best - spacing, s_best + spacing);
    let gr = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..40 {
        let x1 = b - gr * (b - a);
        let x2 = a + gr * (b - a);
        if corr(x1) > corr(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    // the correlation is flat at the optimum, so the section stalls at the
    // square root of the float noise; a parabolic step with a step size
    // above the noise zone recovers the shift to near machine precision
    let mut s = 0.5 * (a + b);
    let h = 1e-4 * l;
    for _ in 0..2 {
        let (cm, c0, cp) = (corr(s - h), corr(s), corr(s + h));
        let denom = cp - 2.0 * c0 + cm;
        if denom < 0.0 {
            s -= 0.5 * h * (cp - cm) / denom;
        }
    }
    // measure on the difference field: no cancellation of large terms
    u.sub(&v.rotate(s)).expect("same grid").w12_norm()
}

/// Scalar report of the energy state of a factor relative to a reference
/// level. Serializes flat as `{q, lambda, deficit, el_residual_sup}`.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub q: f64,
    pub lambda: f64,
    pub deficit: f64,
    pub el_residual_sup: f64,
}

impl EnergyReport {
    /// `y_ref` is the reference minimum used for the deficit. On the
    /// unit-volume manifold the multiplier equals the quotient.
    pub fn new(man: &Manifold, u: &Field, y_ref: f64) -> Result<Self> {
        let q = yamabe_energy(man, u)?;
        let vol = volume_integral(man, u);
        let lambda = q * vol.powf((2.0 - man.crit_exponent()) / man.crit_exponent());
        let r = el_residual(man, u)?;
        Ok(EnergyReport {
            q,
            lambda,
            deficit: q - y_ref,
            el_residual_sup: r.sup_norm(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Field;
    use proptest::prelude::*;
    use rand::SeedableRng;

    const PI: f64 = std::f64::consts::PI;

    fn setup(n: u32, l: f64, nn: usize) -> (Manifold, std::sync::Arc<crate::spectral::Grid>) {
        let man = Manifold::product(n, l).unwrap();
        let grid = man.grid(nn).unwrap();
        (man, grid)
    }

    #[test]
    fn constant_energy_closed_form() {
        // Q of the constant element is R_g vol^{2/n}
        let (man, grid) = setup(3, 1.0, 64);
        let v = normalize_volume(&man, &Field::constant(grid, 1.0)).unwrap();
        let q = yamabe_energy(&man, &v).unwrap();
        let expected = 2.0 * (8.0 * PI * PI).powf(2.0 / 3.0);
        assert!((q - expected).abs() < 1e-12 * expected, "{q} vs {expected}");
    }

    #[test]
    fn energy_matches_oversampled_quadrature_oracle() {
        let (man, grid) = setup(3, 1.0, 64);
        let u = Field::from_fn(grid, |t| 1.0 + 0.1 * t.cos());
        let q = yamabe_energy(&man, &u).unwrap();

        // independent oracle: closed-form integrands on a fine trapezoid grid
        let fine = 1 << 15;
        let h = 2.0 * PI / fine as f64;
        let omega = man.sphere_vol();
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..fine {
            let t = j as f64 * h;
            let u_t = 1.0 + 0.1 * t.cos();
            let du_t = -0.1 * t.sin();
            num += man.conformal_const() * du_t * du_t + man.scalar_curvature() * u_t * u_t;
            den += u_t.powi(6);
        }
        num *= h * omega;
        den *= h * omega;
        let oracle = num / den.powf(1.0 / 3.0);
        assert!((q - oracle).abs() < 1e-10 * oracle, "{q} vs {oracle}");
    }

    #[test]
    fn normalize_constant() {
        let (man, grid) = setup(3, 1.0, 32);
        let v = normalize_volume(&man, &Field::constant(grid, 2.0)).unwrap();
        let expected = (8.0 * PI * PI).powf(-1.0 / 6.0);
        for &x in v.values() {
            assert!((x - expected).abs() < 1e-14 * expected);
        }
    }

    #[test]
    fn normalize_is_idempotent_and_unit_volume() {
        let (man, grid) = setup(3, 0.9, 64);
        let u = Field::from_fn(grid, |t| 1.0 + 0.4 * t.cos());
        let v = normalize_volume(&man, &u).unwrap();
        assert!((volume_integral(&man, &v) - 1.0).abs() < 1e-12);
        let again = normalize_volume(&man, &v).unwrap();
        assert!(again.sub(&v).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn tangent_project_kills_base_and_fixes_tangents() {
        let (man, grid) = setup(3, 1.0, 64);
        let v =
            normalize_volume(&man, &Field::from_fn(grid.clone(), |t| 1.0 + 0.2 * t.cos())).unwrap();
        // projecting the base point gives zero
        let pv = tangent_project(&man, &v, &v).unwrap();
        assert!(pv.sup_norm() < 1e-12);
        // tangent fields are fixed, double application is idempotent
        let raw = Field::from_fn(grid, |t| (2.0 * t).sin() + 0.3);
        let p1 = tangent_project(&man, &v, &raw).unwrap();
        let z = v.powf(man.crit_exponent() - 1.0);
        assert!(z.l2_inner(&p1).unwrap().abs() < 1e-12);
        let p2 = tangent_project(&man, &v, &p1).unwrap();
        assert!(p2.sub(&p1).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn residual_of_constant_vanishes() {
        let (man, grid) = setup(3, 1.0, 64);
        let v = normalize_volume(&man, &Field::constant(grid, 1.0)).unwrap();
        assert!(el_residual(&man, &v).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn residual_matches_finite_difference_oracle() {
        // u = normalized 1 + 0.5 cos(theta): compare the Laplacian term with
        // high-resolution central differences of the closed form
        let (man, grid) = setup(3, 1.0, 64);
        let raw = Field::from_fn(grid.clone(), |t| 1.0 + 0.5 * t.cos());
        let u = normalize_volume(&man, &raw).unwrap();
        let c = u.values()[0] / raw.values()[0]; // normalization constant
        let q = yamabe_energy(&man, &u).unwrap();
        let r = el_residual(&man, &u).unwrap();

        let h = 2.0 * PI / (1 << 12) as f64;
        let uf = |t: f64| c * (1.0 + 0.5 * t.cos());
        for j in (0..grid.len()).step_by(7) {
            let t = grid.node(j);
            let upp = (-uf(t + 2.0 * h) + 16.0 * uf(t + h) - 30.0 * uf(t) + 16.0 * uf(t - h)
                - uf(t - 2.0 * h))
                / (12.0 * h * h);
            let oracle =
                -man.conformal_const() * upp + man.scalar_curvature() * uf(t) - q * uf(t).powf(5.0);
            assert!(
                (r.values()[j] - oracle).abs() < 1e-8 * r.sup_norm().max(1.0),
                "node {j}"
            );
        }
    }

    #[test]
    fn gradient_is_tangent_and_matches_central_differences() {
        let (man, grid) = setup(3, 1.0, 64);
        let u = normalize_volume(
            &man,
            &Field::from_fn(grid.clone(), |t| {
                1.0 + 0.3 * t.cos() + 0.1 * (2.0 * t).sin()
            }),
        )
        .unwrap();
        let g = gradient(&man, &u).unwrap();
        let z = u.powf(man.crit_exponent() - 1.0);
        assert!(z.l2_inner(&g).unwrap().abs() < 1e-12 * g.sup_norm().max(1.0));

        // volume-preserving path: the quotient is scale invariant, so the
        // straight path measures the same derivative
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let raw = Field::random_lowpass(grid, &mut rng, 8, 1.0);
        let phi = orthogonal_tangent_project(&man, &u, &raw).unwrap();
        let mut errs = Vec::new();
        for h in [1e-3, 1e-4] {
            let qp = yamabe_energy(&man, &u.add_scaled(&[(h, &phi)]).unwrap()).unwrap();
            let qm = yamabe_energy(&man, &u.add_scaled(&[(-h, &phi)]).unwrap()).unwrap();
            let fd = (qp - qm) / (2.0 * h);
            errs.push((g.l2_inner(&phi).unwrap() - fd).abs());
        }
        // the residual error is the FD truncation itself: O(h^2) ratio ~ 100
        let ratio = errs[0] / errs[1].max(1e-300);
        assert!(
            (30.0..300.0).contains(&ratio) || errs[1] < 1e-10,
            "errs {errs:?} ratio {ratio}"
        );
    }

    #[test]
    fn conformal_distance_basics() {
        let (man, grid) = setup(3, 1.0, 64);
        let a = Field::constant(grid.clone(), 1.2);
        let b = Field::constant(grid.clone(), 0.7);
        assert_eq!(conformal_distance(&man, &a, &a).unwrap(), 0.0);
        let d = conformal_distance(&man, &a, &b).unwrap();
        let expected = 0.5 * man.total_vol().powf(1.0 / 6.0);
        assert!((d - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn conformal_distance_invariant_under_representative_change() {
        let (man, grid) = setup(3, 1.0, 64);
        let u = Field::from_fn(grid.clone(), |t| 1.0 + 0.2 * t.cos());
        let v = Field::from_fn(grid.clone(), |t| 1.1 + 0.1 * (2.0 * t).sin());
        let phi = Field::from_fn(grid, |t| 1.0 + 0.15 * (3.0 * t).cos());
        let d = conformal_distance(&man, &u, &v).unwrap();
        // in the representative with factor phi the factors become u/phi,
        // v/phi and the volume element picks up phi^{2*}
        let uh = u.zip(&phi, |a, b| a / b).unwrap();
        let vh = v.zip(&phi, |a, b| a / b).unwrap();
        let integrand = uh
            .sub(&vh)
            .unwrap()
            .abs_powf(man.crit_exponent())
            .pointwise_mul(&phi.powf(man.crit_exponent()))
            .unwrap();
        let dhat = integrand.integrate().powf(1.0 / man.crit_exponent());
        assert!((d - dhat).abs() < 1e-10 * d, "{d} vs {dhat}");
    }

    #[test]
    fn distance_star_rejects_negative_reference() {
        let (man, grid) = setup(3, 1.0, 32);
        let a = Field::constant(grid.clone(), 1.0);
        let b = Field::constant(grid, 0.9);
        assert!(conformal_distance_star(&man, &a, &b, -1.0).is_err());
        assert_eq!(conformal_distance_star(&man, &a, &a, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn distance_to_set_member_and_rotation() {
        let (man, grid) = setup(3, 1.2, 128);
        let v = normalize_volume(
            &man,
            &Field::from_fn(grid.clone(), |t| 1.0 + 0.3 * (t / 1.2).cos()),
        )
        .unwrap();
        let mins = vec![v.clone()];
        assert!(distance_to_set(&man, &v, &mins).unwrap() < 1e-12);
        // a rotated copy of a nonconstant minimizer is recognized
        let rot = v.rotate(0.83);
        assert!(distance_to_set(&man, &rot, &mins).unwrap() < 1e-8);
        assert!(distance_to_set(&man, &rot, &[]).is_err());
    }

    #[test]
    fn lambda_equals_q_on_constraint_manifold() {
        let (man, grid) = setup(4, 0.8, 64);
        let u =
            normalize_volume(&man, &Field::from_fn(grid, |t| 1.0 + 0.2 * (t / 0.8).cos())).unwrap();
        let rep = EnergyReport::new(&man, &u, 0.0).unwrap();
        assert!((rep.lambda - rep.q).abs() < 1e-12 * rep.q.abs());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scale_invariance(seed in 0u64..200, c in prop::sample::select(vec![0.5f64, 2.0, 10.0])) {
            let (man, grid) = setup(3, 1.0, 64);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u = Field::random_lowpass(grid.clone(), &mut rng, 6, 1.0)
                .scale(0.2)
                .add(&Field::constant(grid, 1.0))
                .unwrap();
            prop_assume!(u.min_value() > 0.05);
            let q1 = yamabe_energy(&man, &u).unwrap();
            let q2 = yamabe_energy(&man, &u.scale(c)).unwrap();
            prop_assert!((q1 - q2).abs() < 1e-12 * q1.abs());
        }

        #[test]
        fn rotation_equivariance(seed in 0u64..200) {
            let (man, grid) = setup(3, 0.9, 64);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(5));
            let u = Field::random_lowpass(grid.clone(), &mut rng, 6, 1.0)
                .scale(0.2)
                .add(&Field::constant(grid, 1.0))
                .unwrap();
            prop_assume!(u.min_value() > 0.05);
            let q1 = yamabe_energy(&man, &u).unwrap();
            let q2 = yamabe_energy(&man, &u.rotate(1.234)).unwrap();
            prop_assert!((q1 - q2).abs() < 1e-12 * q1.abs());
        }
    }
}
