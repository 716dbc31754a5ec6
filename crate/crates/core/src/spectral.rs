//! Periodic spectral calculus on the circle factor: collocation grids,
//! trigonometric differentiation, quadrature, and rotations.
//!
//! A [`Field`] is a real function of the circle coordinate sampled at `N`
//! equispaced nodes, stored together with its trigonometric coefficients.
//! Integrals over the product manifold reduce to circle quadrature times the
//! (constant) volume of the sphere factor, which the grid carries as a
//! weight.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Collocation grid on a circle of circumference `2*pi*circle_len`, weighted
/// by the volume of the sphere factor so that `integrate` returns integrals
/// over the whole product manifold.
pub struct Grid {
    n_nodes: usize,
    circle_len: f64,
    sphere_vol: f64,
    node_weight: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    d2_matrix: OnceLock<DMatrix<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("n_nodes", &self.n_nodes)
            .field("circle_len", &self.circle_len)
            .field("sphere_vol", &self.sphere_vol)
            .finish()
    }
}

impl Grid {
    /// `n_nodes` must be even and at least 8; `circle_len` is the circle
    /// radius parameter `L` (circumference `2*pi*L`); `sphere_vol` is the
    /// total volume of the orthogonal factor.
    pub fn new(n_nodes: usize, circle_len: f64, sphere_vol: f64) -> Result<Arc<Self>> {
        if n_nodes < 8 || !n_nodes.is_multiple_of(2) {
            return Err(Error::domain(format!(
                "grid size must be even and >= 8, got {n_nodes}"
            )));
        }
        if circle_len.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || sphere_vol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
        {
            return Err(Error::domain(
                "circle length and sphere volume must be positive".to_string(),
            ));
        }
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Grid {
            n_nodes,
            circle_len,
            sphere_vol,
            node_weight: sphere_vol * 2.0 * std::f64::consts::PI * circle_len / n_nodes as f64,
            fft: planner.plan_fft_forward(n_nodes),
            ifft: planner.plan_fft_inverse(n_nodes),
            d2_matrix: OnceLock::new(),
        }))
    }

    pub fn len(&self) -> usize {
        self.n_nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn circle_len(&self) -> f64 {
        self.circle_len
    }

    pub fn sphere_vol(&self) -> f64 {
        self.sphere_vol
    }

    /// Quadrature weight of a single node (uniform; the periodic trapezoid
    /// rule is spectrally accurate).
    pub fn node_weight(&self) -> f64 {
        self.node_weight
    }

    /// Arclength coordinate of node `j`.
    pub fn node(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.circle_len * j as f64 / self.n_nodes as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes).map(|j| self.node(j)).collect()
    }

    /// Highest resolved wavenumber.
    pub fn mode_cutoff(&self) -> usize {
        self.n_nodes / 2
    }

    /// Signed wavenumber of coefficient slot `idx`.
    fn wavenumber(&self, idx: usize) -> i64 {
        if idx <= self.n_nodes / 2 {
            idx as i64
        } else {
            idx as i64 - self.n_nodes as i64
        }
    }

    pub fn same_layout(&self, other: &Grid) -> bool {
        self.n_nodes == other.n_nodes
            && self.circle_len == other.circle_len
            && self.sphere_vol == other.sphere_vol
    }

    /// Dense second-derivative matrix in node space (assembled once).
    pub(crate) fn d2_matrix(self: &Arc<Self>) -> &DMatrix<f64> {
        self.d2_matrix.get_or_init(|| {
            let n = self.n_nodes;
            let mut m = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                let col = Field::from_values(self.clone(), e)
                    .unwrap()
                    .second_derivative();
                for i in 0..n {
                    m[(i, j)] = col.values()[i];
                }
            }
            m
        })
    }
}

/// Real function of the circle coordinate: node values plus cached
/// trigonometric coefficients (`values_j = sum_k coeffs_k e^{2 pi i jk/N}`).
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
    coeffs: Vec<Complex<f64>>,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("n", &self.values.len())
            .field("sup", &self.sup_norm())
            .finish()
    }
}

impl Field {
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        grid.fft.process(&mut buf);
        let n = grid.len() as f64;
        for c in &mut buf {
            *c /= n;
        }
        Ok(Field {
            grid,
            values,
            coeffs: buf,
        })
    }

    fn from_coeffs(grid: Arc<Grid>, coeffs: Vec<Complex<f64>>) -> Self {
        let mut buf = coeffs.clone();
        grid.ifft.process(&mut buf);
        let values = buf.iter().map(|c| c.re).collect();
        Field {
            grid,
            values,
            coeffs,
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|j| f(grid.node(j))).collect();
        Field::from_values(grid, values).expect("length matches by construction")
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        Field::from_values(grid.clone(), vec![c; grid.len()]).expect("length matches")
    }

    /// Random band-limited field: modes `1..=max_mode` with Gaussian
    /// amplitudes damped by `k^{-decay}`.
    pub fn random_lowpass<R: Rng>(
        grid: Arc<Grid>,
        rng: &mut R,
        max_mode: usize,
        decay: f64,
    ) -> Self {
        let max_mode = max_mode.min(grid.mode_cutoff() - 1);
        let l = grid.circle_len();
        let mut modes = Vec::new();
        for k in 1..=max_mode {
            let a: f64 = rng.sample(rand_distr_standard());
            let b: f64 = rng.sample(rand_distr_standard());
            let damp = (k as f64).powf(-decay);
            modes.push((k as f64 / l, a * damp, b * damp));
        }
        Field::from_fn(grid, |theta| {
            modes
                .iter()
                .map(|&(w, a, b)| a * (w * theta).cos() + b * (w * theta).sin())
                .sum()
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coeffs(&self) -> &[Complex<f64>] {
        &self.coeffs
    }

    /// Coefficient of the signed wavenumber `k` (`|k| <= N/2`).
    pub fn coeff(&self, k: i64) -> Complex<f64> {
        let n = self.grid.len() as i64;
        let idx = k.rem_euclid(n) as usize;
        self.coeffs[idx]
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_layout(&other.grid) {
            Ok(())
        } else {
            Err(Error::domain("fields live on different grids".to_string()))
        }
    }

    pub fn integrate(&self) -> f64 {
        self.grid.node_weight() * self.values.iter().sum::<f64>()
    }

    pub fn l2_inner(&self, other: &Field) -> Result<f64> {
        self.same_grid(other)?;
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(self.grid.node_weight() * dot)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).expect("same grid").max(0.0).sqrt()
    }

    /// Returns the pair `(L2, W12)` of inner products
    /// `(int f g, int f'g' + f g)`.
    pub fn inner_products(&self, other: &Field) -> Result<(f64, f64)> {
        let l2 = self.l2_inner(other)?;
        let dd = self.derivative().l2_inner(&other.derivative())?;
        Ok((l2, dd + l2))
    }

    pub fn w12_inner(&self, other: &Field) -> Result<f64> {
        Ok(self.inner_products(other)?.1)
    }

    pub fn w12_norm(&self) -> f64 {
        self.w12_inner(self).expect("same grid").max(0.0).sqrt()
    }

    /// Spectral derivative in the circle variable (exact on resolved modes;
    /// the Nyquist mode has no odd counterpart and differentiates to zero).
    pub fn derivative(&self) -> Field {
        let n = self.grid.len();
        let l = self.grid.circle_len();
        let mut coeffs = self.coeffs.clone();
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = self.grid.wavenumber(idx);
            if idx == n / 2 {
                *c = Complex::new(0.0, 0.0);
            } else {
                *c *= Complex::new(0.0, k as f64 / l);
            }
        }
        Field::from_coeffs(self.grid.clone(), coeffs)
    }

    pub fn second_derivative(&self) -> Field {
        let l = self.grid.circle_len();
        let mut coeffs = self.coeffs.clone();
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = self.grid.wavenumber(idx) as f64 / l;
            *c *= -k * k;
        }
        Field::from_coeffs(self.grid.clone(), coeffs)
    }

    /// Zeroes all modes with `|k| > max_mode`.
    pub fn band_limit(&self, max_mode: usize) -> Field {
        let n = self.grid.len();
        let mut coeffs = self.coeffs.clone();
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = if idx <= n / 2 { idx } else { n - idx };
            if k > max_mode {
                *c = Complex::new(0.0, 0.0);
            }
        }
        Field::from_coeffs(self.grid.clone(), coeffs)
    }

    /// Applies a real Fourier multiplier `m(k/L)` to every mode.
    pub fn spectral_multiplier(&self, m: impl Fn(f64) -> f64) -> Field {
        let l = self.grid.circle_len();
        let mut coeffs = self.coeffs.clone();
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = self.grid.wavenumber(idx) as f64 / l;
            *c *= m(k);
        }
        Field::from_coeffs(self.grid.clone(), coeffs)
    }

    /// Rotation by arclength `s`: `(rot_s f)(theta) = f(theta - s)`.
    pub fn rotate(&self, s: f64) -> Field {
        let n = self.grid.len();
        let l = self.grid.circle_len();
        let mut coeffs = self.coeffs.clone();
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = self.grid.wavenumber(idx) as f64 / l;
            if idx == n / 2 {
                // Nyquist has no sine partner; scale keeps the field real.
                *c *= (k * s).cos();
            } else {
                *c *= Complex::from_polar(1.0, -k * s);
            }
        }
        Field::from_coeffs(self.grid.clone(), coeffs)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Field::from_values(self.grid.clone(), values).expect("same grid")
    }

    pub fn zip(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field::from_values(self.grid.clone(), values)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn pointwise_mul(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a * b)
    }

    /// Pointwise power at the collocation nodes. Caller guarantees the base
    /// is in the domain of `powf` (positivity for non-integer exponents).
    pub fn powf(&self, p: f64) -> Field {
        self.map(|v| v.powf(p))
    }

    pub fn abs_powf(&self, p: f64) -> Field {
        self.map(|v| v.abs().powf(p))
    }

    /// `self + sum_i c_i f_i`.
    pub fn add_scaled(&self, terms: &[(f64, &Field)]) -> Result<Field> {
        let mut values = self.values.clone();
        for (c, f) in terms {
            self.same_grid(f)?;
            for (v, fv) in values.iter_mut().zip(f.values()) {
                *v += c * fv;
            }
        }
        Field::from_values(self.grid.clone(), values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Index and value of the first node where the field is not strictly
    /// positive, if any.
    pub fn first_nonpositive_node(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .enumerate()
            .find(|(_, &v)| v <= 0.0)
            .map(|(j, &v)| (j, v))
    }

    /// Sup-norm distance to the constant with the same mean.
    pub fn variation(&self) -> f64 {
        let m = self.mean();
        self.values
            .iter()
            .fold(0.0f64, |acc, v| acc.max((v - m).abs()))
    }
}

// rand 0.8 splits StandardNormal into rand_distr; sampling via Box-Muller on
// the uniform keeps the dependency list short.
struct BoxMuller;

impl rand::distributions::Distribution<f64> for BoxMuller {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

fn rand_distr_standard() -> BoxMuller {
    BoxMuller
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize, l: f64) -> Arc<Grid> {
        Grid::new(n, l, 4.0 * std::f64::consts::PI).unwrap()
    }

    #[test]
    fn derivative_exact_on_pure_modes() {
        let g = grid(64, 1.5);
        for k in 1..=4i64 {
            let f = Field::from_fn(g.clone(), |t| (k as f64 * t / 1.5).cos());
            let df = f.derivative();
            let expected = Field::from_fn(g.clone(), |t| {
                -(k as f64 / 1.5) * (k as f64 * t / 1.5).sin()
            });
            let err = df.sub(&expected).unwrap().sup_norm();
            assert!(err < 1e-12, "mode {k}: err {err}");
        }
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = grid(32, 0.7);
        assert!(Field::constant(g, 3.25).derivative().sup_norm() < 1e-13);
    }

    #[test]
    fn derivative_matches_analytic_on_trig_polynomial() {
        // random trig polynomial of degree <= N/4 against its hand-built
        // derivative, both evaluated from the closed forms
        let g = grid(64, 2.0);
        let modes: Vec<(f64, f64, f64)> = (1..=16)
            .map(|k| {
                let k = k as f64 / 2.0;
                (k, (0.3 * k).sin(), (0.7 * k).cos())
            })
            .collect();
        let f = Field::from_fn(g.clone(), |t| {
            modes
                .iter()
                .map(|&(w, a, b)| a * (w * t).cos() + b * (w * t).sin())
                .sum()
        });
        let dfa = Field::from_fn(g.clone(), |t| {
            modes
                .iter()
                .map(|&(w, a, b)| -a * w * (w * t).sin() + b * w * (w * t).cos())
                .sum()
        });
        let err = f.derivative().sub(&dfa).unwrap().sup_norm();
        assert!(err < 1e-12 * dfa.sup_norm().max(1.0), "err {err}");
    }

    #[test]
    fn integrate_constant_gives_total_volume() {
        // n = 3, L = 1: vol = 2 pi * 4 pi = 8 pi^2
        let g = grid(32, 1.0);
        let v = Field::constant(g, 1.0).integrate();
        let expected = 8.0 * std::f64::consts::PI.powi(2);
        assert!((v - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn integrate_full_period_cosine_vanishes() {
        let g = grid(64, 1.0);
        let v = Field::from_fn(g, |t| t.cos()).integrate();
        assert!(v.abs() < 1e-11);
    }

    #[test]
    fn integrate_cosine_squared_half_volume() {
        let g = grid(64, 1.3);
        let v = Field::from_fn(g.clone(), |t| (t / 1.3).cos().powi(2)).integrate();
        let expected = std::f64::consts::PI * 1.3 * g.sphere_vol();
        assert!((v - expected).abs() < 1e-11 * expected);
    }

    #[test]
    fn inner_products_on_constants() {
        let g = grid(32, 1.0);
        let one = Field::constant(g, 1.0);
        let (l2, w12) = one.inner_products(&one).unwrap();
        let vol = 8.0 * std::f64::consts::PI.powi(2);
        assert!((l2 - vol).abs() < 1e-12 * vol);
        assert!((w12 - vol).abs() < 1e-12 * vol);
    }

    #[test]
    fn inner_products_orthogonal_modes() {
        let g = grid(64, 1.0);
        let c = Field::from_fn(g.clone(), |t| t.cos());
        let s = Field::from_fn(g, |t| t.sin());
        let (l2, w12) = c.inner_products(&s).unwrap();
        assert!(l2.abs() < 1e-11 && w12.abs() < 1e-11);
    }

    #[test]
    fn w12_mode_identity() {
        // f = cos(theta/L): W12 = (1 + 1/L^2) * pi L * omega
        let l = 0.8;
        let g = grid(64, l);
        let f = Field::from_fn(g.clone(), |t| (t / l).cos());
        let (_, w12) = f.inner_products(&f).unwrap();
        let expected = (1.0 + 1.0 / (l * l)) * std::f64::consts::PI * l * g.sphere_vol();
        assert!((w12 - expected).abs() < 1e-11 * expected);
    }

    #[test]
    fn rotation_shifts_nodes() {
        let g = grid(64, 1.0);
        let f = Field::from_fn(g.clone(), |t| (2.0 * t).cos() + 0.3 * t.sin());
        let s = g.node(5);
        let rf = f.rotate(s);
        for j in 0..g.len() {
            let expected = f.values()[(j + g.len() - 5) % g.len()];
            assert!((rf.values()[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_rejects_odd_or_tiny_sizes() {
        assert!(Grid::new(7, 1.0, 1.0).is_err());
        assert!(Grid::new(4, 1.0, 1.0).is_err());
        assert!(Grid::new(16, -1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn derivative_integrates_to_zero(seed in 0u64..500) {
            use rand::SeedableRng;
            let g = grid(64, 1.1);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = Field::random_lowpass(g, &mut rng, 20, 0.5);
            prop_assert!(f.derivative().integrate().abs() < 1e-12 * f.sup_norm().max(1.0));
        }

        #[test]
        fn integration_by_parts(seed in 0u64..500) {
            use rand::SeedableRng;
            let g = grid(64, 0.9);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(77));
            let f = Field::random_lowpass(g.clone(), &mut rng, 12, 0.5);
            let h = Field::random_lowpass(g, &mut rng, 12, 0.5);
            let lhs = f.derivative().l2_inner(&h).unwrap();
            let rhs = -f.l2_inner(&h.derivative()).unwrap();
            let scale = lhs.abs().max(rhs.abs()).max(1e-6);
            prop_assert!((lhs - rhs).abs() < 1e-10 * scale);
        }

        #[test]
        fn parseval_consistency(seed in 0u64..500) {
            use rand::SeedableRng;
            let g = grid(128, 1.4);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
            let f = Field::random_lowpass(g.clone(), &mut rng, 30, 0.3);
            let h = Field::random_lowpass(g.clone(), &mut rng, 30, 0.3);
            let node_space = f.l2_inner(&h).unwrap();
            let vol_factor = g.node_weight() * g.len() as f64;
            let coeff_space: f64 = f
                .coeffs()
                .iter()
                .zip(h.coeffs())
                .map(|(a, b)| (a * b.conj()).re)
                .sum::<f64>()
                * vol_factor;
            let scale = node_space.abs().max(coeff_space.abs()).max(1e-8);
            prop_assert!((node_space - coeff_space).abs() < 1e-10 * scale);
        }

        #[test]
        fn roundtrip_values_coeffs(seed in 0u64..300) {
            use rand::SeedableRng;
            let g = grid(64, 1.0);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(991));
            let f = Field::random_lowpass(g.clone(), &mut rng, 30, 0.2);
            // reconstruct values from the cached coefficients by direct sum
            for j in (0..g.len()).step_by(17) {
                let mut v = 0.0;
                for (idx, c) in f.coeffs().iter().enumerate() {
                    let k = if idx <= g.len() / 2 { idx as f64 } else { idx as f64 - g.len() as f64 };
                    let ang = 2.0 * std::f64::consts::PI * (j as f64) * k / g.len() as f64;
                    v += (c * Complex::from_polar(1.0, ang)).re;
                }
                prop_assert!((v - f.values()[j]).abs() < 1e-12 * f.sup_norm().max(1.0));
            }
        }
    }
}
