//! Deficit-versus-distance experiments: sampling around verified
//! minimizers, power-law exponent fits, the superquadratic family along the
//! kernel maximizer, and a brute-force growth-exponent check on the reduced
//! polynomial.

use rand::Rng;
use serde::Serialize;

use crate::energy::{distance_to_set, el_residual, normalize_volume, yamabe_energy};
use crate::error::{Error, Result};
use crate::hessian::Spectrum;
use crate::manifold::Manifold;
use crate::reduction::{KernelPolynomial, ReducedModel, ReductionContext};
use crate::spectral::Field;

/// One measured sample.
#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub label: String,
    pub radius: f64,
    pub distance: f64,
    pub deficit: f64,
}

/// Perturbation direction families for the sampling experiment.
#[derive(Debug, Clone)]
pub enum Direction {
    /// Random phase in the softest non-kernel eigenpair plus a small random
    /// admixture of the next eigenfields. Keeps the quadratic constants of
    /// the ensemble comparable, which is what a clean pooled power-law fit
    /// needs.
    LowModeRandom { count: usize, tail: f64 },
    /// Fully random band-limited tangent directions.
    RandomTangent { count: usize, max_mode: usize },
    /// A single eigenfield of the second variation.
    Eigenfield { index: usize },
    /// Ray through the reduced kernel along a unit coordinate vector,
    /// realized by the graph-map lift.
    KernelLift { dir: Vec<f64> },
}

fn verify_minimizers(man: &Manifold, minimizers: &[Field]) -> Result<f64> {
    if minimizers.is_empty() {
        return Err(Error::domain(
            "sampling requires a nonempty verified minimizer set".to_string(),
        ));
    }
    let mut y_ref = f64::INFINITY;
    for (i, v) in minimizers.iter().enumerate() {
        let resid = el_residual(man, v)?.sup_norm();
        if resid > 1e-8 {
            return Err(Error::domain(format!(
                "minimizer {i} is not verified: residual sup {resid:.3e}"
            )));
        }
        y_ref = y_ref.min(yamabe_energy(man, v)?);
    }
    Ok(y_ref)
}

fn realized_directions<R: Rng>(
    man: &Manifold,
    v: &Field,
    spectrum: &Spectrum,
    directions: &[Direction],
    rng: &mut R,
) -> Result<Vec<(String, Field)>> {
    let mut out = Vec::new();
    let non_kernel: Vec<&Field> = spectrum
        .eigenfields()
        .iter()
        .enumerate()
        .filter(|(i, _)| !spectrum.kernel_indices().contains(i))
        .map(|(_, f)| f)
        .collect();
    for d in directions {
        match d {
            Direction::LowModeRandom { count, tail } => {
                if non_kernel.len() < 8 {
                    return Err(Error::domain(
                        "not enough eigenfields for the low-mode ensemble".to_string(),
                    ));
                }
                for k in 0..*count {
                    let phase: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                    let mut f = non_kernel[0]
                        .scale(phase.cos())
                        .add(&non_kernel[1].scale(phase.sin()))?;
                    let mut tail_field = Field::constant(v.grid().clone(), 0.0);
                    for nk in non_kernel.iter().take(8).skip(2) {
                        let a: f64 = rng.gen_range(-1.0..1.0);
                        tail_field = tail_field.add(&nk.scale(a))?;
                    }
                    let tn = tail_field.l2_norm();
                    if tn > 0.0 {
                        f = f.add(&tail_field.scale(*tail / tn))?;
                    }
                    let f = f.scale(1.0 / f.l2_norm());
                    out.push((format!("lowmode-{k}"), f));
                }
            }
            Direction::RandomTangent { count, max_mode } => {
                for k in 0..*count {
                    let raw = Field::random_lowpass(v.grid().clone(), rng, *max_mode, 1.0);
                    let f = crate::energy::orthogonal_tangent_project(man, v, &raw)?;
                    let f = f.scale(1.0 / f.l2_norm());
                    out.push((format!("random-{k}"), f));
                }
            }
            Direction::Eigenfield { index } => {
                let f = spectrum
                    .eigenfields()
                    .get(*index)
                    .ok_or_else(|| Error::domain(format!("eigenfield index {index} out of range")))?
                    .clone();
                out.push((format!("eigen-{index}"), f));
            }
            Direction::KernelLift { .. } => {}
        }
    }
    Ok(out)
}

/// Produces `(distance, deficit)` samples for each direction and radius.
/// Directions that lose positivity at a radius are skipped with a warning.
#[allow(clippy::too_many_arguments)]
pub fn sample_deficit_distance<R: Rng>(
    man: &Manifold,
    v: &Field,
    spectrum: &Spectrum,
    ctx: Option<&ReductionContext>,
    minimizers: &[Field],
    directions: &[Direction],
    radii: &[f64],
    rng: &mut R,
) -> Result<(Vec<Sample>, Vec<String>)> {
    let y_ref = verify_minimizers(man, minimizers)?;
    let realized = realized_directions(man, v, spectrum, directions, rng)?;
    let mut samples = Vec::new();
    let mut warnings = Vec::new();

    for (label, f) in &realized {
        for &t in radii {
            let trial = v.add_scaled(&[(t, f)])?;
            if trial.min_value() <= 0.0 {
                warnings.push(format!(
                    "{label}: positivity lost at radius {t:.3e}, skipped"
                ));
                continue;
            }
            let u = normalize_volume(man, &trial)?;
            let deficit = yamabe_energy(man, &u)? - y_ref;
            let distance = distance_to_set(man, &u, minimizers)?;
            samples.push(Sample {
                label: label.clone(),
                radius: t,
                distance,
                deficit,
            });
        }
    }

    for d in directions {
        if let Direction::KernelLift { dir } = d {
            let ctx = ctx.ok_or_else(|| {
                Error::domain("kernel-lift directions need a reduction context".to_string())
            })?;
            let norm = dir.iter().map(|a| a * a).sum::<f64>().sqrt();
            for &t in radii {
                let x: Vec<f64> = dir.iter().map(|a| a * t / norm).collect();
                match ctx.lift(&x) {
                    Ok(lift) => {
                        let deficit = yamabe_energy(man, &lift.u)? - y_ref;
                        let distance = distance_to_set(man, &lift.u, minimizers)?;
                        samples.push(Sample {
                            label: "kernel-lift".to_string(),
                            radius: t,
                            distance,
                            deficit,
                        });
                    }
                    Err(e) => warnings.push(format!("kernel lift at t={t:.3e} failed: {e}")),
                }
            }
        }
    }
    Ok((samples, warnings))
}

/// Power-law fit of deficit against distance in log-log coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityFit {
    pub slope: f64,
    pub gamma_hat: f64,
    pub c_hat: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub samples_used: usize,
    pub deficit_floor: f64,
}

/// Least-squares slope of `log(deficit)` against `log(distance)` over the
/// samples whose radius lies in the window. Samples with deficits at the
/// floating-point noise floor are excluded.
pub fn fit_exponent(samples: &[Sample], window: (f64, f64), q_scale: f64) -> Result<StabilityFit> {
    let floor = 10.0 * f64::EPSILON * q_scale.abs().max(1.0);
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| {
            s.radius >= window.0 * (1.0 - 1e-12)
                && s.radius <= window.1 * (1.0 + 1e-12)
                && s.deficit > floor
                && s.distance > 0.0
        })
        .map(|s| (s.distance.ln(), s.deficit.ln()))
        .collect();
    if pts.len() < 8 {
        return Err(Error::numerical(format!(
            "exponent fit needs at least 8 usable samples, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (slope * p.0 + intercept);
            e * e
        })
        .sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    Ok(StabilityFit {
        slope,
        gamma_hat: slope - 2.0,
        c_hat: intercept.exp(),
        r2: 1.0 - ss_res / ss_tot.max(1e-300),
        window,
        samples_used: pts.len(),
        deficit_floor: floor,
    })
}

/// One point of the family along the positivity maximizer.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyPoint {
    pub t: f64,
    /// Unnormalized `W^{1,2}` distance of the lift from the base.
    pub distance: f64,
    pub deficit: f64,
    pub dist_over_t: f64,
    /// `deficit / distance^{2+gamma}` for each requested gamma.
    pub ratios: Vec<f64>,
}

/// Builds the family `u_t = v + t vhat + F(t vhat)` along the unit
/// maximizer of the leading reduced part and records deficit, distance, and
/// the superquadratic ratios.
pub fn superquadratic_family(
    ctx: &ReductionContext,
    model: &ReducedModel,
    t_values: &[f64],
    gammas: &[f64],
) -> Result<Vec<FamilyPoint>> {
    let verdict = model.adams_simon.as_ref().ok_or_else(|| {
        Error::domain("superquadratic family needs a fitted nonintegrable model".to_string())
    })?;
    if !verdict.holds {
        return Err(Error::domain(
            "the leading reduced part has no positive maximum on the sphere".to_string(),
        ));
    }
    let vhat = &verdict.maximizer;
    let mut out = Vec::new();
    for &t in t_values {
        let x: Vec<f64> = vhat.iter().map(|a| a * t).collect();
        let lift = ctx.lift(&x)?;
        let deficit = yamabe_energy(ctx.manifold(), &lift.u)? - ctx.q0();
        let distance = lift.u.sub(ctx.base())?.w12_norm();
        let ratios = gammas
            .iter()
            .map(|g| {
                if distance > 0.0 {
                    deficit / distance.powf(2.0 + g)
                } else {
                    0.0
                }
            })
            .collect();
        out.push(FamilyPoint {
            t,
            distance,
            deficit,
            dist_over_t: if t > 0.0 { distance / t } else { f64::NAN },
            ratios,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct LojaResult {
    pub c_star: f64,
    pub gamma_star: f64,
    pub exponent: f64,
    pub grid_points: usize,
    pub critical_points: usize,
}

/// Brute-force growth exponent of a polynomial near its critical set: over
/// a dense lattice in the ball of the given radius, finds the
/// grid-approximate critical points, bins `log |q - q(0)|` against the log
/// distance to the nearest one, and fits the lower envelope. Returns the
/// envelope constant and the exponent written as `2 + gamma_star`.
pub fn lojasiewicz_check(
    poly: &KernelPolynomial,
    radius: f64,
    density: usize,
    grad_tol_rel: f64,
) -> Result<LojaResult> {
    if poly.dim == 0 || poly.dim > 4 {
        return Err(Error::domain(format!(
            "growth check supports kernel dimensions 1..=4, got {}",
            poly.dim
        )));
    }
    if radius <= 0.0 || radius.is_nan() || density < 9 {
        return Err(Error::domain(
            "growth check needs a positive radius and density >= 9".to_string(),
        ));
    }
    let density = if density.is_multiple_of(2) {
        density + 1
    } else {
        density
    };
    let total = (density as f64).powi(poly.dim as i32);
    if total > 2e6 {
        return Err(Error::domain(format!(
            "lattice would have {total:.0} points; reduce the density"
        )));
    }

    // lattice over the cube, pruned to the ball; the origin is a lattice
    // point because the density is odd
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; poly.dim];
    loop {
        let x: Vec<f64> = idx
            .iter()
            .map(|&i| -radius + 2.0 * radius * i as f64 / (density - 1) as f64)
            .collect();
        if x.iter().map(|a| a * a).sum::<f64>() <= radius * radius * (1.0 + 1e-12) {
            pts.push(x);
        }
        let mut carry = 0;
        loop {
            idx[carry] += 1;
            if idx[carry] < density {
                break;
            }
            idx[carry] = 0;
            carry += 1;
            if carry == poly.dim {
                break;
            }
        }
        if carry == poly.dim {
            break;
        }
    }

    let grads: Vec<f64> = pts
        .iter()
        .map(|x| poly.grad(x).iter().map(|a| a * a).sum::<f64>().sqrt())
        .collect();
    let max_grad = grads.iter().fold(0.0f64, |m, &g| m.max(g));
    let tol = grad_tol_rel * max_grad.max(1e-300);
    let crit: Vec<&Vec<f64>> = pts
        .iter()
        .zip(&grads)
        .filter(|(_, &g)| g <= tol)
        .map(|(x, _)| x)
        .collect();
    if crit.is_empty() {
        return Err(Error::numerical(
            "no grid-approximate critical points found (the origin should qualify)".to_string(),
        ));
    }

    let q0 = poly.eval(&vec![0.0; poly.dim]);
    let scale = pts
        .iter()
        .map(|x| (poly.eval(x) - q0).abs())
        .fold(0.0f64, f64::max);
    let floor = 1e-13 * scale.max(1e-300);
    let mut logs: Vec<(f64, f64)> = Vec::new();
    for (x, g) in pts.iter().zip(&grads) {
        if *g <= tol {
            continue;
        }
        let val = (poly.eval(x) - q0).abs();
        if val <= floor {
            continue;
        }
        let dist = crit
            .iter()
            .map(|c| {
                x.iter()
                    .zip(c.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        if dist > 0.0 {
            logs.push((dist.ln(), val.ln()));
        }
    }
    if logs.len() < 24 {
        return Err(Error::numerical(
            "too few usable lattice points for the envelope fit".to_string(),
        ));
    }

    // lower envelope: minimum per log-distance bin, then least squares
    let zmin = logs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let zmax = logs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let nbins = 12;
    let mut mins: Vec<Option<(f64, f64)>> = vec![None; nbins];
    for &(z, y) in &logs {
        let b = (((z - zmin) / (zmax - zmin + 1e-15)) * nbins as f64) as usize;
        let b = b.min(nbins - 1);
        match mins[b] {
            Some((_, ymin)) if ymin <= y => {}
            _ => mins[b] = Some((z, y)),
        }
    }
    let env: Vec<(f64, f64)> = mins.into_iter().flatten().collect();
    if env.len() < 4 {
        return Err(Error::numerical(
            "envelope has too few bins for a slope".to_string(),
        ));
    }
    let n = env.len() as f64;
    let mx = env.iter().map(|p| p.0).sum::<f64>() / n;
    let my = env.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = env.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = env.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let c_star = (my - exponent * mx).exp();
    Ok(LojaResult {
        c_star,
        gamma_star: exponent - 2.0,
        exponent,
        grid_points: pts.len(),
        critical_points: crit.len(),
    })
}

/// Terms of the local deficit decomposition at a lift: total deficit
/// `Q(u) - Y`, the coercive part `I = Q(u) - Q(u_L)`, the reduced part
/// `II = Q(u_L) - Y`, and the coercivity lower bound for `I`.
#[derive(Debug, Clone, Serialize)]
pub struct DeficitDecomposition {
    pub total: f64,
    pub term_i: f64,
    pub term_ii: f64,
    pub perp_w12_sq: f64,
    pub coercivity_bound: f64,
}

/// Splits the deficit of `u` through its reduced projection
/// `u_L = v + pi_K(u - v) + F(pi_K(u - v))`, with the bound
/// `I >= (1/4) lambda_1 ||u - u_L||^2_{W^{1,2}}` using the `W^{1,2}`-paired
/// eigenvalue of the full second variation.
pub fn decompose_deficit(
    ctx: &ReductionContext,
    u: &Field,
    y_ref: f64,
    lambda1_w12: f64,
) -> Result<DeficitDecomposition> {
    let xk = ctx.kernel_coords(&u.sub(ctx.base())?)?;
    let lift = ctx.lift(&xk)?;
    let q_u = yamabe_energy(ctx.manifold(), u)?;
    let q_l = yamabe_energy(ctx.manifold(), &lift.u)?;
    let perp = u.sub(&lift.u)?;
    let nsq = perp.w12_inner(&perp)?;
    Ok(DeficitDecomposition {
        total: q_u - y_ref,
        term_i: q_u - q_l,
        term_ii: q_l - y_ref,
        perp_w12_sq: nsq,
        coercivity_bound: 0.25 * lambda1_w12 * nsq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::HomogeneousPoly;

    fn synthetic_samples(exponent: f64) -> Vec<Sample> {
        (0..20)
            .map(|i| {
                let d = 1e-3 * 1.4f64.powi(i);
                Sample {
                    label: "syn".to_string(),
                    radius: d,
                    distance: d,
                    deficit: 3.0 * d.powf(exponent),
                }
            })
            .collect()
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        for expo in [2.0, 4.0] {
            let fit = fit_exponent(&synthetic_samples(expo), (1e-3, 1.0), 1.0).unwrap();
            assert!((fit.slope - expo).abs() < 0.01, "slope {}", fit.slope);
            assert!((fit.c_hat - 3.0).abs() < 0.05);
            assert!(fit.r2 > 0.9999);
        }
    }

    #[test]
    fn fit_requires_enough_samples() {
        let few: Vec<Sample> = synthetic_samples(2.0).into_iter().take(5).collect();
        assert!(fit_exponent(&few, (1e-3, 1.0), 1.0).is_err());
    }

    #[test]
    fn growth_exponent_of_radial_monomials() {
        for (deg, expect_gamma) in [(2usize, 0.0f64), (4, 2.0)] {
            let poly = KernelPolynomial {
                dim: 2,
                parts: vec![HomogeneousPoly::radial(2, deg)],
            };
            let res = lojasiewicz_check(&poly, 0.5, 81, 1e-9).unwrap();
            assert!(
                (res.exponent - deg as f64).abs() < 0.05,
                "degree {deg}: exponent {}",
                res.exponent
            );
            assert!((res.gamma_star - expect_gamma).abs() < 0.05);
            assert!((res.c_star - 1.0).abs() < 0.05, "c {}", res.c_star);
            assert_eq!(res.critical_points, 1);
        }
    }

    #[test]
    fn growth_exponent_sees_anisotropic_minimum_direction() {
        // q = x^4 + 4 y^4: envelope constant is the weakest direction's
        let mut p = HomogeneousPoly::zeros(2, 4);
        for (k, e) in p.exponents.clone().iter().enumerate() {
            if e == &vec![4, 0] {
                p.coeffs[k] = 1.0;
            }
            if e == &vec![0, 4] {
                p.coeffs[k] = 4.0;
            }
        }
        let poly = KernelPolynomial {
            dim: 2,
            parts: vec![p],
        };
        // binning near the origin is angularly coarse; the exponent carries
        // a small downward bias
        let res = lojasiewicz_check(&poly, 0.5, 101, 1e-9).unwrap();
        assert!(
            (res.exponent - 4.0).abs() < 0.2,
            "exponent {}",
            res.exponent
        );
        assert!(res.c_star < 1.6, "envelope constant {}", res.c_star);
    }

    #[test]
    fn growth_check_rejects_flat_polynomial() {
        let poly = KernelPolynomial {
            dim: 2,
            parts: vec![HomogeneousPoly::zeros(2, 2)],
        };
        assert!(lojasiewicz_check(&poly, 0.5, 41, 1e-9).is_err());
    }

    #[test]
    fn minimizer_verification_is_enforced() {
        let man = Manifold::product(3, 0.8).unwrap();
        let grid = man.grid(64).unwrap();
        let not_critical =
            normalize_volume(&man, &Field::from_fn(grid, |t| 1.0 + 0.3 * (t / 0.8).cos())).unwrap();
        let err = verify_minimizers(&man, &[not_critical]).unwrap_err();
        assert!(err.to_string().contains("not verified"));
    }
}
