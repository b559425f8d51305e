//! Controller gain synthesis through the modified algebraic Riccati
//! inequality, and Schur-stability tests for `A − λ B K` blocks.

use crate::error::{PlatoonError, Result};
use crate::graph::{Spectrum, Topology};
use crate::linalg::{eigen_extremes, Matrix, Scalar};
use crate::plant::PlantModel;

/// Row-vector feedback gain `K = [k_p, k_v]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gain<T> {
    pub kp: T,
    pub kv: T,
}

impl<T: Scalar> Gain<T> {
    pub fn new(kp: T, kv: T) -> Self {
        Self { kp, kv }
    }

    pub fn as_matrix(&self) -> Matrix<T> {
        Matrix::from_rows(&[[self.kp, self.kv]])
    }

    /// `K · q`.
    pub fn apply(&self, q: [T; 2]) -> T {
        self.kp * q[0] + self.kv * q[1]
    }

    pub fn is_finite(&self) -> bool {
        self.kp.is_finite() && self.kv.is_finite()
    }
}

/// Result of a gain synthesis run.
#[derive(Debug, Clone, PartialEq)]
pub struct GainDesign<T> {
    pub xi: T,
    pub p: Matrix<T>,
    pub w: Matrix<T>,
    pub gain: Gain<T>,
    pub lambda_bar_2: T,
    pub lambda_bar_np1: T,
    pub iterations: usize,
}

/// Riccati fixed-point solution.
#[derive(Debug, Clone, PartialEq)]
pub struct MariSolution<T> {
    pub p: Matrix<T>,
    pub w: Matrix<T>,
    pub iterations: usize,
}

/// `T̂k_p < k_v < 2/(T̂λ_max) + T̂k_p/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurWindow<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> SchurWindow<T> {
    pub fn contains(&self, kv: T) -> bool {
        self.lower > T::zero() && self.lower < kv && kv < self.upper
    }

    pub fn is_empty(&self) -> bool {
        self.lower >= self.upper
    }
}

/// Eigenvalue magnitudes of a 2x2 matrix.
fn eigen_magnitudes_2x2<T: Scalar>(a: &Matrix<T>) -> Result<[T; 2]> {
    if a.rows() != 2 || a.cols() != 2 {
        return Err(PlatoonError::Dimension(format!("expected 2x2 state matrix, got {}x{}", a.rows(), a.cols())));
    }
    let tr = a.trace();
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    Ok(quadratic_root_magnitudes(-tr, det))
}

/// Magnitudes of the roots of `z² + b z + c`.
///
/// Complex pairs share the magnitude `√c`; real roots use the cancellation-free
/// form `q = −(b + sign(b)√disc)/2`, roots `q` and `c/q`.
pub fn quadratic_root_magnitudes<T: Scalar>(b: T, c: T) -> [T; 2] {
    let two = T::lit(2.0);
    let disc = b * b - T::lit(4.0) * c;
    if disc < T::zero() {
        let m = c.abs().sqrt();
        return [m, m];
    }
    let sign = if b >= T::zero() { T::one() } else { -T::one() };
    let q = -(b + sign * disc.sqrt()) / two;
    if q == T::zero() {
        return [T::zero(), T::zero()];
    }
    [q.abs(), (c / q).abs()]
}

/// Unstable-eigenvalue threshold: magnitudes at or above `1 − 1e−12` count.
const UNSTABLE_MARGIN: f64 = 1e-12;

/// Upper end of the admissible `ξ⁻¹` interval, `(1+r)/(1−r)` with `r = λ̄₂/λ̄_{N+1}`.
pub fn xi_upper_bound<T: Scalar>(lambda_bar_2: T, lambda_bar_np1: T) -> T {
    let r = lambda_bar_2 / lambda_bar_np1;
    (T::one() + r) / (T::one() - r)
}

/// Interval `(lo, hi)` that `ξ⁻¹` must lie in.
pub fn xi_window<T: Scalar>(a: &Matrix<T>, lambda_bar_2: T, lambda_bar_np1: T) -> Result<(T, T)> {
    if !(lambda_bar_2 > T::zero() && lambda_bar_2 < lambda_bar_np1) {
        return Err(PlatoonError::InvalidParameter(format!(
            "need 0 < λ̄₂ < λ̄_(N+1), got {lambda_bar_2} and {lambda_bar_np1}"
        )));
    }
    let threshold = T::one() - T::lit(UNSTABLE_MARGIN);
    let lo = eigen_magnitudes_2x2(a)?.into_iter().filter(|&m| m >= threshold).fold(T::one(), |acc, m| acc * m);
    let hi = xi_upper_bound(lambda_bar_2, lambda_bar_np1);
    if lo >= hi {
        return Err(PlatoonError::EmptyWindow { lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() });
    }
    Ok((lo, hi))
}

fn bpb<T: Scalar>(p: &Matrix<T>, b: &Matrix<T>) -> T {
    (&(&b.transpose() * p) * b)[(0, 0)]
}

/// `P − AᵀPA + (1−ξ²)·AᵀPB BᵀPA / BᵀPB`.
pub fn mari_residual<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, xi: T, p: &Matrix<T>) -> Result<Matrix<T>> {
    let denom = bpb(p, b);
    if !(denom > T::zero()) {
        return Err(PlatoonError::NonPositiveGainDenominator(denom.to_f64_lossy()));
    }
    let at = a.transpose();
    let atp = &at * p;
    let atpa = &atp * a;
    let atpb = &atp * b;
    let outer = (&atpb * &atpb.transpose()).scale((T::one() - xi * xi) / denom);
    Ok(&(p - &atpa) + &outer)
}

/// Solves the modified Riccati inequality by the fixed-point iteration
/// `P ← AᵀPA − (1−ξ²)·AᵀPB BᵀPA/(BᵀPB) + W₀` from `P₀ = I`.
pub fn solve_mari<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    xi: T,
    seed_residual: &Matrix<T>,
    tol: T,
    max_iter: usize,
) -> Result<MariSolution<T>> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n || b.cols() != 1 || seed_residual.rows() != n || !seed_residual.is_square() {
        return Err(PlatoonError::Dimension("MARI expects square A, column B and matching W₀".into()));
    }
    let (w_min, _) = eigen_extremes(seed_residual)?;
    if !(w_min > T::zero()) {
        return Err(PlatoonError::InvalidParameter("seed residual must be positive definite".into()));
    }
    let at = a.transpose();
    let weight = T::one() - xi * xi;
    let mut p = Matrix::identity(n);
    let mut last_delta = T::infinity();
    for iter in 1..=max_iter {
        let denom = bpb(&p, b);
        if !(denom > T::zero()) {
            return Err(PlatoonError::NonPositiveGainDenominator(denom.to_f64_lossy()));
        }
        let atp = &at * &p;
        let atpb = &atp * b;
        let correction = (&atpb * &atpb.transpose()).scale(weight / denom);
        let mut next = &(&(&atp * a) - &correction) + seed_residual;
        // keep the iterate exactly symmetric
        next = (&next + &next.transpose()).scale(T::lit(0.5));
        if !next.is_finite() {
            return Err(PlatoonError::RiccatiNoConvergence { iterations: iter, last_delta: f64::INFINITY });
        }
        last_delta = next.max_abs_diff(&p);
        let scale = next.as_slice().iter().fold(T::one(), |m, x| m.max(x.abs()));
        p = next;
        if last_delta <= tol * scale {
            let w = mari_residual(a, b, xi, &p)?;
            let w = (&w + &w.transpose()).scale(T::lit(0.5));
            let (p_min, _) = eigen_extremes(&p)?;
            let (w_min, _) = eigen_extremes(&w)?;
            if !(p_min > T::zero()) || !(w_min > T::zero()) {
                return Err(PlatoonError::ResidualNotPositiveDefinite(w_min.min(p_min).to_f64_lossy()));
            }
            return Ok(MariSolution { p, w, iterations: iter });
        }
    }
    Err(PlatoonError::RiccatiNoConvergence { iterations: max_iter, last_delta: last_delta.to_f64_lossy() })
}

/// Window `((1−ξ)(λ̄₂+λ̄_{N+1})/2, (1+ξ)(λ̄₂+λ̄_{N+1})/2)` for the eigenvalues of `H`.
pub fn lambda_window<T: Scalar>(xi: T, lambda_bar_2: T, lambda_bar_np1: T) -> (T, T) {
    let mid = (lambda_bar_2 + lambda_bar_np1) / T::lit(2.0);
    ((T::one() - xi) * mid, (T::one() + xi) * mid)
}

/// `K = 2/(λ̄₂+λ̄_{N+1}) · BᵀPA / (BᵀPB)`.
pub fn design_gain<T: Scalar>(
    p: &Matrix<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
    lambda_bar_2: T,
    lambda_bar_np1: T,
) -> Result<Gain<T>> {
    let denom = bpb(p, b);
    if !(denom > T::zero()) {
        return Err(PlatoonError::NonPositiveGainDenominator(denom.to_f64_lossy()));
    }
    let row = &(&b.transpose() * p) * a;
    if row.cols() != 2 {
        return Err(PlatoonError::Dimension("gain design expects a two-state plant".into()));
    }
    let c = T::lit(2.0) / (lambda_bar_2 + lambda_bar_np1) / denom;
    Ok(Gain::new(row[(0, 0)] * c, row[(0, 1)] * c))
}

pub fn schur_window<T: Scalar>(sample_time: T, kp: T, lambda_max: T) -> SchurWindow<T> {
    let lower = sample_time * kp;
    let upper = T::lit(2.0) / (sample_time * lambda_max) + sample_time * kp / T::lit(2.0);
    SchurWindow { lower, upper }
}

/// Spectral radius of `blockdiag(A − λ_l B K)` from the per-block quadratic
/// `Z² + (λT̂k_v − 2)Z + λT̂²k_p − λT̂k_v + 1`.
pub fn closed_loop_spectral_radius<T: Scalar>(sample_time: T, gain: Gain<T>, spectrum: &Spectrum<T>) -> T {
    spectrum.eigenvalues.iter().map(|&lambda| block_spectral_radius(sample_time, gain, lambda)).fold(T::zero(), T::max)
}

/// Larger root magnitude of a single `A − λBK` block.
pub fn block_spectral_radius<T: Scalar>(sample_time: T, gain: Gain<T>, lambda: T) -> T {
    let t = sample_time;
    let b = lambda * t * gain.kv - T::lit(2.0);
    let c = lambda * t * t * gain.kp - lambda * t * gain.kv + T::one();
    let [r1, r2] = quadratic_root_magnitudes(b, c);
    r1.max(r2)
}

/// Default seed residual `W₀ = I`.
pub fn default_seed<T: Scalar>() -> Matrix<T> {
    Matrix::identity(2)
}

pub const DEFAULT_MARI_TOL: f64 = 1e-13;
pub const DEFAULT_MARI_MAX_ITER: usize = 1_000_000;

impl<T: Scalar> GainDesign<T> {
    /// Runs the full synthesis for a plant and topology.
    pub fn synthesize(
        plant: &PlantModel<T>,
        topology: &Topology,
        xi: T,
        seed_residual: &Matrix<T>,
        tol: T,
        max_iter: usize,
    ) -> Result<Self> {
        if !(xi > T::zero() && xi < T::one()) {
            return Err(PlatoonError::InvalidParameter(format!("ξ must lie in (0, 1), got {xi}")));
        }
        let ext = topology.extended_spectrum::<T>()?;
        let lambda_bar_2 =
            ext.second().ok_or_else(|| PlatoonError::InvalidTopology("need at least one follower".into()))?;
        let lambda_bar_np1 = ext.max();
        let (a, b) = (plant.a(), plant.b());
        let sol = solve_mari(&a, &b, xi, seed_residual, tol, max_iter)?;
        let gain = design_gain(&sol.p, &a, &b, lambda_bar_2, lambda_bar_np1)?;
        Ok(Self { xi, p: sol.p, w: sol.w, gain, lambda_bar_2, lambda_bar_np1, iterations: sol.iterations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MatrixTag;

    fn plant() -> PlantModel<f64> {
        PlantModel::with_uniform_gap(0.2, 20.0, 6).unwrap()
    }

    #[test]
    fn double_integrator_unstable_product_is_one() {
        let bd = Topology::builtin("BD").unwrap().extended_spectrum::<f64>().unwrap();
        let (lo, hi) = xi_window(&plant().a(), bd.eigenvalues[1], bd.max()).unwrap();
        assert_eq!(lo, 1.0);
        let r = bd.eigenvalues[1] / bd.max();
        assert!((hi - (1.0 + r) / (1.0 - r)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_ratio_gives_unit_upper_bound() {
        assert_eq!(xi_upper_bound(0.0, 3.0), 1.0);
        assert!(matches!(xi_window(&plant().a(), 1e-18, 3.0), Err(PlatoonError::EmptyWindow { .. })));
        assert!(xi_window(&plant().a(), 0.0, 3.0).is_err());
    }

    #[test]
    fn mari_residual_reproduces_seed() {
        let m = plant();
        let sol = solve_mari(&m.a(), &m.b(), 0.9, &default_seed(), 1e-13, 100_000).unwrap();
        assert!(sol.w.max_abs_diff(&Matrix::identity(2)) < 1e-8);
        assert!(sol.p.asymmetry() == 0.0);
        let (pmin, _) = eigen_extremes(&sol.p).unwrap();
        assert!(pmin > 0.0);
    }

    #[test]
    fn mari_near_unit_xi_still_converges() {
        let m = plant();
        let sol = solve_mari(&m.a(), &m.b(), 0.999, &default_seed(), 1e-12, 1_000_000).unwrap();
        assert!(mari_residual(&m.a(), &m.b(), 0.999, &sol.p).unwrap().max_abs_diff(&sol.w) < 1e-8);
    }

    #[test]
    fn mari_errors() {
        let m = plant();
        assert!(matches!(
            solve_mari(&m.a(), &m.b(), 0.9, &default_seed(), 1e-13, 3),
            Err(PlatoonError::RiccatiNoConvergence { .. })
        ));
        let not_spd = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]);
        assert!(solve_mari(&m.a(), &m.b(), 0.9, &not_spd, 1e-13, 10).is_err());
    }

    #[test]
    fn lambda_window_values() {
        // λ̄₂ + λ̄₇ = 4 for the 7-node path, so the window is ((1−ξ)·2, (1+ξ)·2)
        let (lo, hi) = lambda_window(0.97f64, 0.198_062_264, 3.801_937_736);
        assert!((lo - 0.06).abs() < 1e-9 && (hi - 3.94).abs() < 1e-9);
        let (lo, _) = lambda_window(0.98f64, 0.198_062_264, 3.801_937_736);
        assert!((lo - 0.04).abs() < 1e-9);
        let (lo, hi) = lambda_window(0.0f64, 1.0, 3.0);
        assert_eq!((lo, hi), (2.0, 2.0));
    }

    #[test]
    fn identity_p_gain() {
        let m = PlantModel::<f64>::new(1.0, vec![0.0]).unwrap();
        let k = design_gain(&Matrix::identity(2), &m.a(), &m.b(), 1.0, 3.0).unwrap();
        assert_eq!(k, Gain::new(0.0, 0.5));
        let zero = Matrix::zeros(2, 2);
        assert!(matches!(
            design_gain(&zero, &m.a(), &m.b(), 1.0, 3.0),
            Err(PlatoonError::NonPositiveGainDenominator(_))
        ));
    }

    #[test]
    fn reported_schur_windows() {
        let w = schur_window(0.2f64, 0.1259, 3.77);
        assert!((w.lower - 0.025).abs() < 1e-3);
        assert!((w.upper - 2.67).abs() < 1e-2);
        assert!(w.contains(2.5252));
        assert!(!w.contains(3.25));
        let sw = Topology::builtin("Switched").unwrap().h_spectrum::<f64>().unwrap();
        let w2 = schur_window(0.2, 0.1259, sw.max());
        assert!((w2.upper - 3.85).abs() < 2e-2);
        assert!(w2.contains(3.25));
        let w0 = schur_window(0.2f64, 0.0, 3.77);
        assert_eq!(w0.lower, 0.0);
        assert!((w0.upper - 2.0 / (0.2 * 3.77)).abs() < 1e-15);
    }

    #[test]
    fn zero_gain_is_marginal() {
        let s = Spectrum { eigenvalues: vec![0.5, 1.0, 2.0], tag: MatrixTag::H };
        assert_eq!(closed_loop_spectral_radius(0.2, Gain::new(0.0, 0.0), &s), 1.0);
    }

    #[test]
    fn stability_flip_on_bd() {
        let bd = Topology::builtin("BD").unwrap().h_spectrum::<f64>().unwrap();
        assert!(closed_loop_spectral_radius(0.2, Gain::new(0.1259, 2.5252), &bd) < 1.0);
        assert!(closed_loop_spectral_radius(0.2, Gain::new(0.1259, 3.25), &bd) >= 1.0);
    }

    #[test]
    fn synthesized_gain_sits_in_window() {
        let m = plant();
        let bd = Topology::builtin("BD").unwrap();
        let d = GainDesign::synthesize(&m, &bd, 0.99, &default_seed(), 1e-13, 1_000_000).unwrap();
        let h = bd.h_spectrum::<f64>().unwrap();
        let w = schur_window(0.2, d.gain.kp, h.max());
        assert!(w.contains(d.gain.kv), "{:?} outside {:?}", d.gain, w);
        assert!(closed_loop_spectral_radius(0.2, d.gain, &h) < 1.0);
        // close to the published gain [0.1259, 2.5252]
        assert!((d.gain.kp - 0.1259).abs() < 2e-3 && (d.gain.kv - 2.5252).abs() < 2e-3);
    }

    #[test]
    fn generic_over_f32() {
        let m = PlantModel::<f32>::with_uniform_gap(0.2, 20.0, 6).unwrap();
        let bd = Topology::builtin("BD").unwrap().h_spectrum::<f32>().unwrap();
        assert!(closed_loop_spectral_radius(0.2f32, Gain::new(0.1259, 2.5252), &bd) < 1.0);
        let w = schur_window(m.sample_time(), 0.1259f32, bd.max());
        assert!((w.upper - 2.67).abs() < 1e-2);
    }
}
