//! Event-triggered broadcasting: static threshold rule and the dynamic rule
//! with an internal variable `μᵢ`.
//!
//! All states handled here live in the leader-relative frame
//! `δᵢ = xᵢ − x₀ − ∇ᵢ,₀`; in that frame the leader's own entry is the origin.

use crate::error::{PlatoonError, Result};
use crate::gain::Gain;
use crate::graph::Topology;
use crate::linalg::{eigen_extremes, max_singular_value, Matrix, Scalar};
use crate::plant::VehicleState;

fn norm_sq<T: Scalar>(v: [T; 2]) -> T {
    v[0] * v[0] + v[1] * v[1]
}

/// Last broadcast state and trigger step of every follower.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastTable<T> {
    entries: Vec<VehicleState<T>>,
    last_trigger: Vec<Option<usize>>,
}

impl<T: Scalar> BroadcastTable<T> {
    /// Table whose entries are the initial states, with no trigger recorded yet.
    pub fn new(initial: &[VehicleState<T>]) -> Self {
        Self { entries: initial.to_vec(), last_trigger: vec![None; initial.len()] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn broadcast(&self, i: usize) -> VehicleState<T> {
        self.entries[i]
    }

    pub fn last_trigger(&self, i: usize) -> Option<usize> {
        self.last_trigger[i]
    }

    /// Records a broadcast of `state` by vehicle `i` at `step`.
    pub fn record(&mut self, i: usize, state: VehicleState<T>, step: usize) {
        self.entries[i] = state;
        self.last_trigger[i] = Some(step);
    }
}

/// `q̂ᵢ = Σ_{j∈Nᵢ}(x̂ⱼ − x̂ᵢ) + mᵢ(x₀ − x̂ᵢ)`.
pub fn combined_measurement<T: Scalar>(
    i: usize,
    table: &BroadcastTable<T>,
    topology: &Topology,
    leader: VehicleState<T>,
) -> [T; 2] {
    let own = table.broadcast(i);
    let mut q = topology.neighbors(i).fold(VehicleState::zero(), |acc, j| acc + (table.broadcast(j) - own));
    if topology.is_pinned(i) {
        q = q + (leader - own);
    }
    q.as_array()
}

/// `eᵢ = x̂ᵢ − xᵢ`.
pub fn measurement_error<T: Scalar>(i: usize, table: &BroadcastTable<T>, x_true: VehicleState<T>) -> [T; 2] {
    (table.broadcast(i) - x_true).as_array()
}

/// Scalars `s₁, s₂, s₃` that shape the static threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SConstants<T> {
    pub s1: T,
    pub s2: T,
    pub s3: T,
}

/// Computes `s₁ = λ_min(W₁)·λ_min(H⁻²)` and `s₂`, `s₃` as largest singular
/// values of the assembled `2N×2N` Kronecker expressions.
pub fn compute_s_constants<T: Scalar>(
    h: &Matrix<T>,
    p: &Matrix<T>,
    a: &Matrix<T>,
    b: &Matrix<T>,
    gain: Gain<T>,
    w1: &Matrix<T>,
) -> Result<SConstants<T>> {
    let n = h.rows();
    let h_inv = h.inverse()?;
    let h_inv_sq = &h_inv * &h_inv;
    let h_inv_sq = (&h_inv_sq + &h_inv_sq.transpose()).scale(T::lit(0.5));
    let (w1_min, _) = eigen_extremes(w1)?;
    let (hinv2_min, _) = eigen_extremes(&h_inv_sq)?;
    let s1 = (w1_min * hinv2_min).max(T::zero());

    let eye = Matrix::identity(n);
    let bk = b * &gain.as_matrix();
    let i_bk = eye.kron(&bk);
    let h_bk = h.kron(&bk);
    let i_p = eye.kron(p);
    let closed = &eye.kron(a) - &h_bk;

    let m2 = &(&(&i_bk.transpose() * &i_p) * &closed) - &h_inv.kron(w1);
    let s2 = max_singular_value(&m2)?.max(T::zero());

    let two_a = eye.kron(&a.scale(T::lit(2.0)));
    let m3 = &(&(&h_bk.transpose() * &i_p) * &(&two_a - &h_bk)) - &eye.kron(w1);
    let s3 = max_singular_value(&m3)?.max(T::zero());

    Ok(SConstants { s1, s2, s3 })
}

/// Static threshold parameters; `sigma = ∂(s₁−s₂β)/((s₂+s₃β)β⁻¹)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticTriggerParams<T> {
    pub partial: T,
    pub beta: T,
    pub w1_fraction: T,
    pub s1: T,
    pub s2: T,
    pub s3: T,
    pub sigma: T,
}

pub const DEFAULT_PARTIAL: f64 = 0.01;
pub const DEFAULT_W1_FRACTION: f64 = 0.5;

/// Threshold coefficient `∂(s₁−s₂β)β/(s₂+s₃β)`.
pub fn threshold_coefficient<T: Scalar>(partial: T, beta: T, s: SConstants<T>) -> T {
    partial * (s.s1 - s.s2 * beta) * beta / (s.s2 + s.s3 * beta)
}

impl<T: Scalar> StaticTriggerParams<T> {
    /// Validates `0 < ∂ < 1`, `0 < β < s₁/s₂` and derives `sigma`.
    /// `beta = None` picks the midpoint `s₁/(2 s₂)`.
    pub fn new(partial: T, beta: Option<T>, w1_fraction: T, s: SConstants<T>) -> Result<Self> {
        if !(partial > T::zero() && partial < T::one()) {
            return Err(PlatoonError::InvalidParameter(format!("∂ must lie in (0, 1), got {partial}")));
        }
        if !(w1_fraction > T::zero() && w1_fraction < T::one()) {
            return Err(PlatoonError::InvalidParameter(format!("w1_fraction must lie in (0, 1), got {w1_fraction}")));
        }
        if !(s.s1 > T::zero()) {
            return Err(PlatoonError::InvalidParameter(format!("s1 must be positive, got {}", s.s1)));
        }
        let beta = match beta {
            Some(b) => b,
            None if s.s2 > T::zero() => T::lit(0.5) * s.s1 / s.s2,
            None => T::one(),
        };
        if !(beta > T::zero()) || s.s1 - s.s2 * beta <= T::zero() {
            return Err(PlatoonError::InvalidParameter(format!(
                "β = {beta} outside (0, s1/s2) with s1 = {}, s2 = {}",
                s.s1, s.s2
            )));
        }
        let sigma = threshold_coefficient(partial, beta, s);
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(PlatoonError::InvalidParameter(format!("threshold coefficient {sigma} is not positive")));
        }
        Ok(Self { partial, beta, w1_fraction, s1: s.s1, s2: s.s2, s3: s.s3, sigma })
    }

    pub fn s_constants(&self) -> SConstants<T> {
        SConstants { s1: self.s1, s2: self.s2, s3: self.s3 }
    }

    /// Same `∂`, `β`, W split on a new set of s-constants (topology switch).
    /// A default `β` is re-centred when `explicit_beta` is false.
    pub fn rederive(&self, s: SConstants<T>, explicit_beta: bool) -> Result<Self> {
        Self::new(self.partial, explicit_beta.then_some(self.beta), self.w1_fraction, s)
    }
}

/// Dynamic rule parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicTriggerParams<T> {
    pub rho: T,
    pub vartheta: T,
    pub theta: T,
    pub mu0: T,
}

impl<T: Scalar> DynamicTriggerParams<T> {
    /// Checks `θ > (1−ϑ)/ρ`, `ϑ + ρ < 1`, `ϑ < θρ` and `μ₀ > 0`.
    pub fn new(rho: T, vartheta: T, theta: T, mu0: T) -> Result<Self> {
        let bad = |msg: String| Err(PlatoonError::InvalidParameter(msg));
        if !(rho > T::zero() && rho < T::one()) || !(vartheta > T::zero() && vartheta < T::one()) {
            return bad(format!("ρ = {rho} and ϑ = {vartheta} must lie in (0, 1)"));
        }
        if !(theta > (T::one() - vartheta) / rho) {
            return bad(format!("θ = {theta} must exceed (1−ϑ)/ρ = {}", (T::one() - vartheta) / rho));
        }
        if !(vartheta + rho < T::one()) {
            return bad(format!("ϑ + ρ = {} must be below 1", vartheta + rho));
        }
        if !(vartheta < theta * rho) {
            return bad(format!("ϑ = {vartheta} must be below θρ = {}", theta * rho));
        }
        if !(mu0 > T::zero()) {
            return bad(format!("μ₀ must be positive, got {mu0}"));
        }
        Ok(Self { rho, vartheta, theta, mu0 })
    }
}

/// Which triggering law a run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriggerScheme<T> {
    Static,
    Dynamic(DynamicTriggerParams<T>),
}

impl<T> TriggerScheme<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Static => "static",
            Self::Dynamic(_) => "dynamic",
        }
    }
}

/// Fires when `‖e‖² ≥ σ‖q̂‖²` and there is something new to send (`e ≠ 0`).
pub fn static_should_trigger<T: Scalar>(e: [T; 2], q_hat: [T; 2], p: &StaticTriggerParams<T>) -> bool {
    let ee = norm_sq(e);
    ee > T::zero() && ee >= p.sigma * norm_sq(q_hat)
}

/// Fires when `θ(‖e‖² − σ‖q̂‖²) > μ`.
pub fn dynamic_should_trigger<T: Scalar>(
    e: [T; 2],
    q_hat: [T; 2],
    mu: T,
    sp: &StaticTriggerParams<T>,
    dp: &DynamicTriggerParams<T>,
) -> bool {
    dp.theta * (norm_sq(e) - sp.sigma * norm_sq(q_hat)) > mu
}

/// `μ' = (1−ρ)μ + ϑ(σ‖q̂‖² − ‖e‖²)`.
pub fn update_mu<T: Scalar>(
    mu: T,
    e: [T; 2],
    q_hat: [T; 2],
    sp: &StaticTriggerParams<T>,
    dp: &DynamicTriggerParams<T>,
) -> T {
    (T::one() - dp.rho) * mu + dp.vartheta * (sp.sigma * norm_sq(q_hat) - norm_sq(e))
}
