//! Discrete-time double-integrator vehicle model.

use crate::error::{PlatoonError, Result};
use crate::linalg::{Matrix, Scalar};

/// Position (m) and velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState<T> {
    pub position: T,
    pub velocity: T,
}

impl<T: Scalar> VehicleState<T> {
    pub fn new(position: T, velocity: T) -> Self {
        Self { position, velocity }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn as_array(&self) -> [T; 2] {
        [self.position, self.velocity]
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite()
    }

    pub fn norm_sq(&self) -> T {
        self.position * self.position + self.velocity * self.velocity
    }
}

impl<T: Scalar> std::ops::Add for VehicleState<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.position + o.position, self.velocity + o.velocity)
    }
}

impl<T: Scalar> std::ops::Sub for VehicleState<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.position - o.position, self.velocity - o.velocity)
    }
}

impl<T: Scalar> std::ops::Mul<T> for VehicleState<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.position * s, self.velocity * s)
    }
}

/// `x(t+1) = A x(t) + B u(t)` with `A = [[1, T], [0, 1]]`, `B = [0, T]ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel<T> {
    sample_time: T,
    /// Desired offset of follower `i` from the leader, `∇ᵢ,₀` (m).
    spacing: Vec<T>,
}

impl<T: Scalar> PlantModel<T> {
    pub fn new(sample_time: T, spacing: Vec<T>) -> Result<Self> {
        if !(sample_time > T::zero()) || !sample_time.is_finite() {
            return Err(PlatoonError::InvalidParameter(format!("sample time must be positive, got {sample_time}")));
        }
        if spacing.iter().any(|s| !s.is_finite()) {
            return Err(PlatoonError::NonFinite("spacing offsets"));
        }
        Ok(Self { sample_time, spacing })
    }

    /// Uniform inter-vehicle gap: follower `i` (1-based) sits `gap·i` behind the leader.
    pub fn with_uniform_gap(sample_time: T, gap: T, n_followers: usize) -> Result<Self> {
        let spacing = (1..=n_followers).map(|i| -gap * T::lit(i as f64)).collect();
        Self::new(sample_time, spacing)
    }

    pub fn sample_time(&self) -> T {
        self.sample_time
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn a(&self) -> Matrix<T> {
        Matrix::from_rows(&[[T::one(), self.sample_time], [T::zero(), T::one()]])
    }

    pub fn b(&self) -> Matrix<T> {
        Matrix::from_rows(&[[T::zero()], [self.sample_time]])
    }

    pub fn step_follower(&self, x: VehicleState<T>, u: T) -> Result<VehicleState<T>> {
        if !x.is_finite() || !u.is_finite() {
            return Err(PlatoonError::NonFinite("follower step input"));
        }
        Ok(VehicleState::new(x.position + self.sample_time * x.velocity, x.velocity + self.sample_time * u))
    }

    pub fn step_leader(&self, x0: VehicleState<T>) -> VehicleState<T> {
        VehicleState::new(x0.position + self.sample_time * x0.velocity, x0.velocity)
    }
}

/// Removes the desired offset so that consensus reduces to equal states.
pub fn shifted_state<T: Scalar>(x: VehicleState<T>, offset: T) -> VehicleState<T> {
    VehicleState::new(x.position - offset, x.velocity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant() -> PlantModel<f64> {
        PlantModel::with_uniform_gap(0.2, 20.0, 6).unwrap()
    }

    #[test]
    fn follower_steps() {
        let m = plant();
        assert_eq!(m.step_follower(VehicleState::new(0.0, 1.0), 0.0).unwrap(), VehicleState::new(0.2, 1.0));
        assert_eq!(m.step_follower(VehicleState::new(0.0, 0.0), 1.0).unwrap(), VehicleState::new(0.0, 0.2));
        // A x + B u evaluated by hand: (65 + 0.2·10, 10 + 0.2·(-0.5))
        let next = m.step_follower(VehicleState::new(65.0, 10.0), -0.5).unwrap();
        assert!((next.position - 67.0).abs() < 1e-12 && (next.velocity - 9.9).abs() < 1e-12);
        assert!(m.step_follower(VehicleState::new(f64::NAN, 0.0), 0.0).is_err());
        assert!(m.step_follower(VehicleState::new(0.0, 0.0), f64::INFINITY).is_err());
    }

    #[test]
    fn follower_step_matches_matrix_form() {
        let m = plant();
        let (a, b) = (m.a(), m.b());
        let x = [65.0, 10.0];
        let ax = a.mul_vec(&x);
        let bu = b.mul_vec(&[-0.5]);
        let next = m.step_follower(VehicleState::new(65.0, 10.0), -0.5).unwrap();
        assert!((next.position - (ax[0] + bu[0])).abs() < 1e-12);
        assert!((next.velocity - (ax[1] + bu[1])).abs() < 1e-12);
    }

    #[test]
    fn leader_steps() {
        let m = plant();
        let next = m.step_leader(VehicleState::new(100.0, 12.0));
        assert!((next.position - 102.4).abs() < 1e-12 && next.velocity == 12.0);
        assert_eq!(m.step_leader(VehicleState::zero()), VehicleState::zero());
        let mut x = VehicleState::new(100.0, 12.0);
        for _ in 0..500 {
            x = m.step_leader(x);
        }
        assert!((x.position - 1300.0).abs() < 1e-9);
        assert_eq!(x.velocity, 12.0);
    }

    #[test]
    fn offsets() {
        assert_eq!(shifted_state(VehicleState::new(20.0, 5.0), 20.0), VehicleState::new(0.0, 5.0));
        assert_eq!(shifted_state(VehicleState::new(3.0, 5.0), 0.0), VehicleState::new(3.0, 5.0));
        assert_eq!(plant().spacing(), &[-20.0, -40.0, -60.0, -80.0, -100.0, -120.0]);
    }

    #[test]
    fn rejects_bad_sample_time() {
        assert!(PlantModel::<f64>::new(0.0, vec![]).is_err());
        assert!(PlantModel::<f64>::new(0.2, vec![f64::NAN]).is_err());
    }
}
