//! Secure-consensus certificates for the static and dynamic schemes and the
//! mitigation topology selection.

use crate::error::{PlatoonError, Result};
use crate::gain::{schur_window, SchurWindow};
use crate::graph::Topology;
use crate::linalg::{eigen_extremes, Matrix, Scalar};
use crate::trigger::{threshold_coefficient, DynamicTriggerParams, SConstants, StaticTriggerParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants<T> {
    pub alpha_tilde: T,
    pub gamma_tilde: T,
    pub alpha1: T,
    pub big_gamma_tilde: T,
}

/// `[(1−∂)(s₁−βs₂)(λ_N⁻¹−√σ)⁻² + λ_min(W₂)] / λ_max(P)` without sign checks.
fn rate_expression<T: Scalar>(
    s: SConstants<T>,
    beta: T,
    partial: T,
    w2: &Matrix<T>,
    lambda_n_h: T,
    p: &Matrix<T>,
) -> Result<T> {
    let gap = s.s1 - beta * s.s2;
    if !(gap > T::zero()) {
        return Err(PlatoonError::CertificateInvalid(format!("s1 − β·s2 = {gap} is not positive")));
    }
    let sigma = if partial == T::zero() { T::zero() } else { threshold_coefficient(partial, beta, s) };
    let inner = T::one() / lambda_n_h - sigma.sqrt();
    if !(inner > T::zero()) {
        return Err(PlatoonError::CertificateInvalid(format!("1/λ_N(H) − √σ = {inner} is not positive")));
    }
    let (w2_min, _) = eigen_extremes(w2)?;
    let (_, p_max) = eigen_extremes(p)?;
    if !(p_max > T::zero()) {
        return Err(PlatoonError::CertificateInvalid("P is not positive definite".into()));
    }
    Ok(((T::one() - partial) * gap / (inner * inner) + w2_min) / p_max)
}

/// Nominal decay rate `α̃`.
pub fn alpha_tilde<T: Scalar>(
    s: SConstants<T>,
    beta: T,
    partial: T,
    w2: &Matrix<T>,
    lambda_n_h: T,
    p: &Matrix<T>,
) -> Result<T> {
    let a = rate_expression(s, beta, partial, w2, lambda_n_h, p)?;
    if !(a > T::zero()) {
        return Err(PlatoonError::CertificateInvalid(format!("α̃ = {a} is not positive")));
    }
    Ok(a)
}

/// Per-step Lyapunov values with attacked-mode flags, for the empirical `γ̃`.
#[derive(Debug, Clone, Copy)]
pub struct LyapunovTrace<'a, T> {
    pub values: &'a [T],
    pub attacked: &'a [bool],
}

/// How `γ̃` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaSource {
    Formula,
    Empirical,
}

/// Attacked-mode rate `γ̃`: the negated rate expression on attacked
/// constants, or `max ln(V(t+1)/V(t))` over attacked steps when the formula
/// has no real value.
pub fn gamma_tilde<T: Scalar>(
    s_att: SConstants<T>,
    beta: T,
    partial: T,
    w2_att: &Matrix<T>,
    lambda_n_h: T,
    p: &Matrix<T>,
    fallback: Option<LyapunovTrace<'_, T>>,
) -> Result<(T, GammaSource)> {
    match rate_expression(s_att, beta, partial, w2_att, lambda_n_h, p) {
        Ok(r) => Ok((-r, GammaSource::Formula)),
        Err(PlatoonError::CertificateInvalid(why)) => {
            let tr = fallback.ok_or_else(|| {
                PlatoonError::CertificateInvalid(format!(
                    "attacked-mode formula unavailable ({why}) and no trace supplied"
                ))
            })?;
            empirical_growth(tr)
                .map(|g| (g, GammaSource::Empirical))
                .ok_or_else(|| PlatoonError::CertificateInvalid("trace has no attacked step with positive V".into()))
        }
        Err(e) => Err(e),
    }
}

/// Largest one-step log growth of `V` over attacked steps.
pub fn empirical_growth<T: Scalar>(tr: LyapunovTrace<'_, T>) -> Option<T> {
    tr.values
        .windows(2)
        .zip(tr.attacked)
        .filter(|(v, &att)| att && v[0] > T::zero() && v[1] > T::zero())
        .map(|(v, _)| (v[1] / v[0]).ln())
        .reduce(T::max)
}

/// Outcome of a budget inequality `τ₀ + Δ*f₀ < rate/(rate + γ̃)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate<T> {
    pub holds: bool,
    pub lhs: T,
    pub rhs: T,
    /// `rhs − lhs`.
    pub margin: T,
}

pub fn theorem1_certificate<T: Scalar>(
    tau0: T,
    delta_star: T,
    f0: T,
    alpha_t: T,
    gamma_t: T,
) -> Result<Certificate<T>> {
    if !(alpha_t > T::zero()) {
        return Err(PlatoonError::CertificateInvalid(format!("decay rate {alpha_t} is not positive")));
    }
    let denom = alpha_t + gamma_t;
    if !(denom > T::zero()) {
        return Err(PlatoonError::NonPositiveDenominator(denom.to_f64_lossy()));
    }
    let lhs = tau0 + delta_star * f0;
    let rhs = alpha_t / denom;
    Ok(Certificate { holds: lhs < rhs, lhs, rhs, margin: rhs - lhs })
}

/// Same inequality with `Γ̃` as the decay rate.
pub fn theorem2_certificate<T: Scalar>(
    tau0: T,
    delta_star: T,
    f0: T,
    big_gamma_t: T,
    gamma_t: T,
) -> Result<Certificate<T>> {
    theorem1_certificate(tau0, delta_star, f0, big_gamma_t, gamma_t)
}

/// Dynamic-scheme rate and parameter feasibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Params<T> {
    /// `ρ − (s₂/β + s₃ − ϑ)/θ`.
    pub alpha1: T,
    /// `min(α̃, α₁)`.
    pub big_gamma_tilde: T,
    /// `s₂/β + s₃ > ϑ`.
    pub eq61: bool,
    /// `ϑ − θρ > s₂/β + s₃`, as printed.
    pub eq62_printed: bool,
    /// `ϑ − θρ < s₂/β + s₃`.
    pub eq62_reversed: bool,
    /// `eq61` holds and `Γ̃ > 0`.
    pub feasible: bool,
}

pub fn theorem2_params<T: Scalar>(
    sp: &StaticTriggerParams<T>,
    dp: &DynamicTriggerParams<T>,
    alpha_t: T,
) -> Theorem2Params<T> {
    let load = sp.s2 / sp.beta + sp.s3;
    let alpha1 = dp.rho - (load - dp.vartheta) / dp.theta;
    let big_gamma_tilde = alpha_t.min(alpha1);
    let eq61 = load > dp.vartheta;
    let lhs62 = dp.vartheta - dp.theta * dp.rho;
    Theorem2Params {
        alpha1,
        big_gamma_tilde,
        eq61,
        eq62_printed: lhs62 > load,
        eq62_reversed: lhs62 < load,
        feasible: eq61 && big_gamma_tilde > T::zero(),
    }
}

/// Chosen mitigation topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Mitigation<T> {
    pub index: usize,
    pub lambda_max: T,
    pub window: SchurWindow<T>,
}

/// Leader-connected candidate with the smallest `λ_max(H)` whose stability
/// window strictly contains `attacked_kv`; ties keep list order.
pub fn select_mitigation_topology<T: Scalar>(
    candidates: &[Topology],
    sample_time: T,
    kp: T,
    attacked_kv: T,
) -> Result<Option<Mitigation<T>>> {
    let mut best: Option<Mitigation<T>> = None;
    for (index, topo) in candidates.iter().enumerate() {
        if !topo.is_leader_connected() {
            continue;
        }
        let lambda_max = topo.h_spectrum::<T>()?.max();
        let window = schur_window(sample_time, kp, lambda_max);
        if !window.contains(attacked_kv) {
            continue;
        }
        if best.as_ref().is_none_or(|b| lambda_max < b.lambda_max) {
            best = Some(Mitigation { index, lambda_max, window });
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(s1: f64, s2: f64, s3: f64) -> SConstants<f64> {
        SConstants { s1, s2, s3 }
    }

    #[test]
    fn theorem1_reference_arithmetic() {
        let c = theorem1_certificate(0.12f64, 0.4, 0.05, 0.0782, 0.3414).unwrap();
        assert!((c.rhs - 0.1864).abs() < 5e-4);
        assert!(c.holds);
        assert!((c.margin - 0.0464).abs() < 5e-4);
        assert!(!theorem1_certificate(0.999, 0.0, 0.05, 0.0782, 0.3414).unwrap().holds);
        let free = theorem1_certificate(0.99, 0.0, 0.05, 0.0782, 0.0).unwrap();
        assert_eq!(free.rhs, 1.0);
        assert!(free.holds);
        assert!(theorem1_certificate(0.1, 0.0, 0.05, 0.1, -0.2).is_err());
        assert!(theorem1_certificate(0.1, 0.0, 0.05, 0.0, 0.2).is_err());
    }

    #[test]
    fn theorem2_reference_arithmetic() {
        let c = theorem2_certificate(0.12f64, 0.8, 0.05, 0.0750, 0.3414).unwrap();
        assert!((c.rhs - 0.1801).abs() < 5e-4);
        assert!(c.holds);
    }

    #[test]
    fn alpha_limit() {
        let w2 = Matrix::from_diagonal(&[0.3, 0.7]);
        let p = Matrix::from_diagonal(&[2.0, 5.0]);
        let a = alpha_tilde(s(0.4, 1e-12, 1e-12), 1.0, 0.0, &w2, 2.0, &p).unwrap();
        assert!((a - (0.4 * 4.0 + 0.3) / 5.0).abs() < 1e-9);
        assert!(alpha_tilde(s(0.4, 1.0, 1.0), 1.0, 0.01, &w2, 2.0, &p).is_err());
    }

    #[test]
    fn gamma_symmetry_and_fallback() {
        let w2 = Matrix::identity(2);
        let p = Matrix::from_diagonal(&[3.0, 4.0]);
        let nominal = s(0.5, 0.1, 0.2);
        let a = alpha_tilde(nominal, 1.0, 0.01, &w2, 3.0, &p).unwrap();
        let (g, src) = gamma_tilde(nominal, 1.0, 0.01, &w2, 3.0, &p, None).unwrap();
        assert_eq!(src, GammaSource::Formula);
        assert_eq!(g, -a);

        let broken = s(0.5, 2.0, 0.2);
        assert!(gamma_tilde(broken, 1.0, 0.01, &w2, 3.0, &p, None).is_err());
        let v = [1.0, 2.0, 2.5, 1.0];
        let flags = [true, true, false];
        let tr = LyapunovTrace { values: &v, attacked: &flags };
        let (g, src) = gamma_tilde(broken, 1.0, 0.01, &w2, 3.0, &p, Some(tr)).unwrap();
        assert_eq!(src, GammaSource::Empirical);
        assert!((g - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn theorem2_limits() {
        let sp = StaticTriggerParams {
            partial: 0.01f64,
            beta: 1.0,
            w1_fraction: 0.5,
            s1: 1.0,
            s2: 0.1,
            s3: 0.2,
            sigma: 0.0,
        };
        let dp = DynamicTriggerParams::new(0.1, 0.6, 1e12, 20.0).unwrap();
        let t2 = theorem2_params(&sp, &dp, 0.5);
        assert!((t2.alpha1 - 0.1).abs() < 1e-9);
        assert_eq!(t2.big_gamma_tilde, t2.alpha1);
        assert!(!t2.eq61);
        assert!(!t2.feasible);
        assert!(t2.eq62_reversed && !t2.eq62_printed);
    }

    #[test]
    fn mitigation_selection() {
        let bd = Topology::builtin("BD").unwrap();
        let sw = Topology::builtin("Switched").unwrap();
        let m = select_mitigation_topology(&[bd.clone(), sw.clone()], 0.2f64, 0.1259, 3.25).unwrap().unwrap();
        assert_eq!(m.index, 1);
        assert!((m.window.upper - 3.85).abs() < 0.02);
        assert!(select_mitigation_topology(std::slice::from_ref(&bd), 0.2, 0.1259, 3.25).unwrap().is_none());
        assert!(select_mitigation_topology(&[bd.clone(), sw.clone()], 0.2, 0.1259, 0.01).unwrap().is_none());
        let tie = select_mitigation_topology(&[sw.clone(), sw], 0.2, 0.1259, 3.25).unwrap().unwrap();
        assert_eq!(tie.index, 0);
        let unpinned = Topology::new(6, &[(0, 3), (1, 4), (2, 5)], &[false; 6]).unwrap();
        assert!(select_mitigation_topology(&[unpinned], 0.2, 0.1259, 1.0).unwrap().is_none());
    }
}
