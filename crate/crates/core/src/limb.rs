//! Forward dynamics of one planar two-joint limb driven by three tendons.
//!
//! Joint 0 is the proximal joint (hip/shoulder), joint 1 the distal joint
//! (knee/elbow). Angles are counter-clockwise positive, which is flexion for
//! both joints. The limb frame `x` axis points along gravity, so the limb
//! hangs straight down at `q = (0, 0)`.
//!
//! The equations of motion are the standard manipulator form
//!
//! ```text
//! I(q) q̈ + C(q, q̇) q̇ + B q̇ + g(q) = T,      T = M(q) F₀ a
//! ```
//!
//! integrated with a fixed-step classical Runge-Kutta scheme followed by an
//! inelastic hard stop at each joint limit.

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::DynamicsError;

pub type Vec2 = Vector2<f64>;

/// Largest physics step accepted by [`step`].
pub const MAX_DT: f64 = 2e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimbParams {
    /// Link lengths (m).
    pub link_lengths: [f64; 2],
    /// Link masses (kg).
    pub link_masses: [f64; 2],
    /// Distance of each link's centre of mass from its proximal joint (m).
    pub link_com_offsets: [f64; 2],
    /// Rotational inertia of each link about its centre of mass (kg·m²).
    pub link_inertias: [f64; 2],
    /// Viscous joint damping, diagonal of `B` (N·m·s/rad).
    pub damping: [f64; 2],
    /// Moment arms, rows are joints and columns are tendons M0, M1, M2 (m).
    pub moment_arms: [[f64; 3]; 2],
    /// Maximum tendon force, diagonal of `F₀` (N).
    pub max_forces: [f64; 3],
    /// Per-joint `[min, max]` angle (rad).
    pub joint_limits: [[f64; 2]; 2],
    /// Gravitational acceleration (m/s²); 0 disables gravity.
    pub gravity: f64,
}

impl Default for LimbParams {
    fn default() -> Self {
        default_limb_params()
    }
}

/// Canonical parameters of a small 3D-printed limb.
///
/// Tendon routing: M0 extends the proximal joint and flexes the distal one,
/// M1 only flexes the proximal joint, M2 extends both.
pub fn default_limb_params() -> LimbParams {
    let length = 0.10;
    let mass = 0.08;
    let arm = 0.015;
    LimbParams {
        link_lengths: [length; 2],
        link_masses: [mass; 2],
        link_com_offsets: [length / 2.0; 2],
        link_inertias: [mass * length * length / 12.0; 2],
        damping: [0.01; 2],
        moment_arms: [[-arm, arm, -arm], [arm, 0.0, -arm]],
        max_forces: [20.0; 3],
        joint_limits: [
            [-std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_2],
            [0.0, 2.4],
        ],
        gravity: 9.81,
    }
}

impl LimbParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("link_lengths", &self.link_lengths[..]),
            ("link_masses", &self.link_masses[..]),
            ("link_com_offsets", &self.link_com_offsets[..]),
            ("link_inertias", &self.link_inertias[..]),
            ("max_forces", &self.max_forces[..]),
        ];
        for (name, values) in positive {
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(format!("{name} must be finite and strictly positive, got {v}"));
            }
        }
        if let Some(v) = self.damping.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(format!("damping must be finite and non-negative, got {v}"));
        }
        for (j, [lo, hi]) in self.joint_limits.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(format!("joint_limits[{j}] must satisfy min < max, got [{lo}, {hi}]"));
            }
        }
        if self.moment_arms.iter().flatten().any(|m| !m.is_finite()) {
            return Err("moment_arms must be finite".into());
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(format!("gravity must be finite and non-negative, got {}", self.gravity));
        }
        Ok(())
    }

    /// Parameters of the same limb mounted mirror-image.
    ///
    /// Reflection across the gravity axis negates joint angles, so tendon
    /// torques flip sign and the joint limits are reflected.
    pub fn mirrored(&self) -> LimbParams {
        let mut out = self.clone();
        for row in out.moment_arms.iter_mut() {
            for m in row.iter_mut() {
                *m = -*m;
            }
        }
        for lim in out.joint_limits.iter_mut() {
            *lim = [-lim[1], -lim[0]];
        }
        out
    }

    /// Moment-arm matrix at configuration `q`. Constant for this limb.
    pub fn moment_arm_matrix(&self, _q: &Vec2) -> Matrix2x3<f64> {
        let m = &self.moment_arms;
        Matrix2x3::new(m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2])
    }

    /// Sign pattern of the moment arms (−1, 0 or +1 per entry).
    pub fn sign_structure(&self) -> [[f64; 3]; 2] {
        let mut s = [[0.0; 3]; 2];
        for (row, src) in s.iter_mut().zip(&self.moment_arms) {
            for (v, m) in row.iter_mut().zip(src) {
                *v = if *m > 0.0 {
                    1.0
                } else if *m < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        s
    }

    pub fn within_limits(&self, q: &Vec2) -> bool {
        (0..2).all(|j| q[j] >= self.joint_limits[j][0] && q[j] <= self.joint_limits[j][1])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LimbState {
    pub q: Vec2,
    pub dq: Vec2,
    pub ddq: Vec2,
}

impl LimbState {
    pub fn at_rest(q: Vec2) -> Self {
        LimbState {
            q,
            dq: Vec2::zeros(),
            ddq: Vec2::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.dq.iter()).chain(self.ddq.iter()).all(|v| v.is_finite())
    }

    /// `(q₀, q₁, q̇₀, q̇₁, q̈₀, q̈₁)`, the input layout of the inverse map.
    pub fn features(&self) -> [f64; 6] {
        [self.q[0], self.q[1], self.dq[0], self.dq[1], self.ddq[0], self.ddq[1]]
    }
}

/// Three tendon activations, each clamped into `[0, 1]` on construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActivationVector([f64; 3]);

impl ActivationVector {
    pub const ZERO: ActivationVector = ActivationVector([0.0; 3]);

    /// Clamps each component into `[0, 1]`. NaN becomes 0.
    pub fn new(a: [f64; 3]) -> Self {
        ActivationVector(a.map(clamp_unit))
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::from(self.0)
    }
}

impl From<[f64; 3]> for ActivationVector {
    fn from(a: [f64; 3]) -> Self {
        ActivationVector::new(a)
    }
}

pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Joint torques `M(q) F₀ a` (N·m).
pub fn torque_from_activations(params: &LimbParams, state: &LimbState, a: &ActivationVector) -> Vec2 {
    let m = params.moment_arm_matrix(&state.q);
    let a = a.as_array();
    let mut t = Vec2::zeros();
    for j in 0..2 {
        for k in 0..3 {
            t[j] += m[(j, k)] * (params.max_forces[k] * a[k]);
        }
    }
    t
}

/// Joint-space inertia matrix `I(q)`.
pub fn inertia_matrix(params: &LimbParams, q: &Vec2) -> Matrix2<f64> {
    let [m1, m2] = params.link_masses;
    let [l1, _] = params.link_lengths;
    let [c1, c2] = params.link_com_offsets;
    let [i1, i2] = params.link_inertias;
    let cos2 = q[1].cos();
    let d22 = i2 + m2 * c2 * c2;
    let d12 = d22 + m2 * l1 * c2 * cos2;
    let d11 = i1 + m1 * c1 * c1 + i2 + m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * cos2);
    Matrix2::new(d11, d12, d12, d22)
}

/// Coriolis and centripetal torques `C(q, q̇) q̇`.
pub fn coriolis_torque(params: &LimbParams, q: &Vec2, dq: &Vec2) -> Vec2 {
    let h = params.link_masses[1] * params.link_lengths[0] * params.link_com_offsets[1] * q[1].sin();
    Vec2::new(
        -h * (2.0 * dq[0] * dq[1] + dq[1] * dq[1]),
        h * dq[0] * dq[0],
    )
}

/// Gravity torques `g(q) = ∂V/∂q`.
pub fn gravity_torque(params: &LimbParams, q: &Vec2) -> Vec2 {
    let [m1, m2] = params.link_masses;
    let [l1, _] = params.link_lengths;
    let [c1, c2] = params.link_com_offsets;
    let g = params.gravity;
    let s1 = q[0].sin();
    let s12 = (q[0] + q[1]).sin();
    let distal = m2 * g * c2 * s12;
    Vec2::new(m1 * g * c1 * s1 + m2 * g * l1 * s1 + distal, distal)
}

/// Joint accelerations for the given state and joint torques.
pub fn forward_dynamics(params: &LimbParams, state: &LimbState, torque: &Vec2) -> Vec2 {
    let inertia = inertia_matrix(params, &state.q);
    let damping = Vec2::new(params.damping[0] * state.dq[0], params.damping[1] * state.dq[1]);
    let rhs = torque - coriolis_torque(params, &state.q, &state.dq) - damping - gravity_torque(params, &state.q);
    let det = inertia[(0, 0)] * inertia[(1, 1)] - inertia[(0, 1)] * inertia[(1, 0)];
    // a NaN determinant comes from a non-finite state, which `step` reports
    assert!(
        !(det <= 0.0),
        "singular inertia matrix (det = {det}); limb parameters are misconfigured"
    );
    Vec2::new(
        (inertia[(1, 1)] * rhs[0] - inertia[(0, 1)] * rhs[1]) / det,
        (inertia[(0, 0)] * rhs[1] - inertia[(1, 0)] * rhs[0]) / det,
    )
}

/// Advances the limb by `dt` seconds under constant activation.
///
/// Any joint that ends the step outside its limits is clamped to the limit
/// with its velocity zeroed. The returned `ddq` is the acceleration of the
/// last dynamics evaluation.
pub fn step(params: &LimbParams, state: &LimbState, a: &ActivationVector, dt: f64) -> Result<LimbState, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(DynamicsError::InvalidTimestep(dt));
    }
    let torque = torque_from_activations(params, state, a);
    let deriv = |q: Vec2, dq: Vec2| {
        let s = LimbState { q, dq, ddq: Vec2::zeros() };
        forward_dynamics(params, &s, &torque)
    };

    let (q0, v0) = (state.q, state.dq);
    let a1 = deriv(q0, v0);
    let (q1, v1) = (q0 + v0 * (dt / 2.0), v0 + a1 * (dt / 2.0));
    let a2 = deriv(q1, v1);
    let (q2, v2) = (q0 + v1 * (dt / 2.0), v0 + a2 * (dt / 2.0));
    let a3 = deriv(q2, v2);
    let (q3, v3) = (q0 + v2 * dt, v0 + a3 * dt);
    let a4 = deriv(q3, v3);

    let mut q = q0 + (v0 + v1 * 2.0 + v2 * 2.0 + v3) * (dt / 6.0);
    let mut dq = v0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    let ddq = a4;

    let next = LimbState { q, dq, ddq };
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite {
            q: [q[0], q[1]],
            dq: [dq[0], dq[1]],
            ddq: [ddq[0], ddq[1]],
        });
    }

    for j in 0..2 {
        let [lo, hi] = params.joint_limits[j];
        if q[j] < lo {
            q[j] = lo;
            dq[j] = 0.0;
        } else if q[j] > hi {
            q[j] = hi;
            dq[j] = 0.0;
        }
    }
    Ok(LimbState { q, dq, ddq })
}

/// Planar forward kinematics of the limb tip in the limb frame (m).
pub fn endpoint_position(params: &LimbParams, q: &Vec2) -> Vec2 {
    let [l1, l2] = params.link_lengths;
    let q12 = q[0] + q[1];
    Vec2::new(l1 * q[0].cos() + l2 * q12.cos(), l1 * q[0].sin() + l2 * q12.sin())
}

pub fn kinetic_energy(params: &LimbParams, q: &Vec2, dq: &Vec2) -> f64 {
    0.5 * dq.dot(&(inertia_matrix(params, q) * dq))
}

/// Gravitational potential, zero when both centres of mass sit on the pivot
/// height.
pub fn potential_energy(params: &LimbParams, q: &Vec2) -> f64 {
    let [m1, m2] = params.link_masses;
    let [l1, _] = params.link_lengths;
    let [c1, c2] = params.link_com_offsets;
    let x1 = c1 * q[0].cos();
    let x2 = l1 * q[0].cos() + c2 * (q[0] + q[1]).cos();
    -params.gravity * (m1 * x1 + m2 * x2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn mid_state() -> LimbState {
        LimbState::at_rest(Vec2::new(0.1, 1.2))
    }

    #[test]
    fn tendon_sign_structure_follows_routing() {
        let s = default_limb_params().sign_structure();
        // columns M0, M1, M2 as (proximal, distal)
        assert_eq!((s[0][0], s[1][0]), (-1.0, 1.0));
        assert_eq!((s[0][1], s[1][1]), (1.0, 0.0));
        assert_eq!((s[0][2], s[1][2]), (-1.0, -1.0));
    }

    #[test]
    fn default_params_are_valid() {
        default_limb_params().validate().unwrap();
        let mut p = default_limb_params();
        p.link_masses[1] = 0.0;
        assert!(p.validate().unwrap_err().contains("link_masses"));
        let mut p = default_limb_params();
        p.joint_limits[1] = [1.0, 1.0];
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_activation_gives_zero_torque() {
        let t = torque_from_activations(&default_limb_params(), &mid_state(), &ActivationVector::ZERO);
        assert_eq!(t, Vec2::zeros());
    }

    #[test]
    fn mono_articular_tendon_only_flexes_proximal() {
        let p = default_limb_params();
        let t = torque_from_activations(&p, &mid_state(), &ActivationVector::new([0.0, 1.0, 0.0]));
        assert_eq!(t[0], p.moment_arms[0][1] * p.max_forces[1]);
        assert!(t[0] > 0.0);
        assert_eq!(t[1], 0.0);
    }

    #[test]
    fn activation_is_clamped() {
        let a = ActivationVector::new([1.7, -0.2, f64::NAN]);
        assert_eq!(a.as_array(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn equilibrium_without_torque_or_gravity() {
        let mut p = default_limb_params();
        p.gravity = 0.0;
        let ddq = forward_dynamics(&p, &mid_state(), &Vec2::zeros());
        assert_eq!(ddq, Vec2::zeros());
    }

    #[test]
    fn step_is_fixed_point_at_rest_without_gravity() {
        let mut p = default_limb_params();
        p.gravity = 0.0;
        let s = mid_state();
        let next = step(&p, &s, &ActivationVector::ZERO, 1e-3).unwrap();
        assert_eq!(next.q, s.q);
        assert_eq!(next.dq, s.dq);
    }

    #[test]
    fn hard_stop_clamps_and_zeroes_velocity() {
        let p = default_limb_params();
        let mut s = LimbState::at_rest(Vec2::new(p.joint_limits[0][1] - 1e-4, 1.2));
        s.dq[0] = 5.0;
        let next = step(&p, &s, &ActivationVector::new([0.0, 1.0, 0.0]), 1e-3).unwrap();
        assert_eq!(next.q[0], p.joint_limits[0][1]);
        assert_eq!(next.dq[0], 0.0);
    }

    #[test]
    fn rejects_oversized_timestep() {
        let p = default_limb_params();
        assert!(matches!(
            step(&p, &mid_state(), &ActivationVector::ZERO, 5e-3),
            Err(DynamicsError::InvalidTimestep(_))
        ));
        assert!(step(&p, &mid_state(), &ActivationVector::ZERO, 0.0).is_err());
    }

    #[test]
    fn non_finite_state_is_reported() {
        let p = default_limb_params();
        let mut s = mid_state();
        s.dq[0] = f64::INFINITY;
        let err = step(&p, &s, &ActivationVector::ZERO, 1e-3).unwrap_err();
        assert!(matches!(err, DynamicsError::NonFinite { .. }));
    }

    #[test]
    fn endpoint_of_simple_configurations() {
        let p = default_limb_params();
        let reach = p.link_lengths[0] + p.link_lengths[1];
        let e = endpoint_position(&p, &Vec2::new(0.0, 0.0));
        assert_eq!(e, Vec2::new(reach, 0.0));
        let e = endpoint_position(&p, &Vec2::new(FRAC_PI_2, 0.0));
        assert!(e[0].abs() < 1e-15);
        assert!((e[1] - reach).abs() < 1e-15);
    }

    #[test]
    fn endpoint_matches_complex_exponential_chain() {
        let p = default_limb_params();
        let q = Vec2::new(FRAC_PI_4, FRAC_PI_4);
        // z = l1·e^{iq0} + l2·e^{i(q0+q1)}
        let (l1, l2) = (p.link_lengths[0], p.link_lengths[1]);
        let (re1, im1) = (l1 * q[0].cos(), l1 * q[0].sin());
        let rot = (q[1].cos(), q[1].sin());
        let unit0 = (q[0].cos(), q[0].sin());
        let seg2 = (l2 * (unit0.0 * rot.0 - unit0.1 * rot.1), l2 * (unit0.0 * rot.1 + unit0.1 * rot.0));
        let e = endpoint_position(&p, &q);
        assert!((e[0] - (re1 + seg2.0)).abs() < 1e-15);
        assert!((e[1] - (im1 + seg2.1)).abs() < 1e-15);
        // tip at (l1/√2, l1/√2 + l2)
        assert!((e[1] - (l1 / 2f64.sqrt() + l2)).abs() < 1e-15);
    }

    #[test]
    fn inertia_matches_closed_form_at_reference_angles() {
        let p = default_limb_params();
        // m = 0.08, l = 0.1, c = 0.05, I = m l²/12
        let (m, l, c) = (0.08_f64, 0.1_f64, 0.05_f64);
        let i = m * l * l / 12.0;
        let straight = inertia_matrix(&p, &Vec2::new(0.3, 0.0));
        let d11 = 2.0 * i + m * c * c + m * (l * l + c * c + 2.0 * l * c);
        let d12 = i + m * c * c + m * l * c;
        let d22 = i + m * c * c;
        assert!((straight[(0, 0)] - d11).abs() < 1e-15);
        assert!((straight[(0, 1)] - d12).abs() < 1e-15);
        assert!((straight[(1, 1)] - d22).abs() < 1e-15);
        let bent = inertia_matrix(&p, &Vec2::new(-0.7, FRAC_PI_2));
        assert!((bent[(0, 0)] - (2.0 * i + m * c * c + m * (l * l + c * c))).abs() < 1e-15);
        assert!((bent[(0, 1)] - (i + m * c * c)).abs() < 1e-15);
        assert!((bent[(1, 1)] - d22).abs() < 1e-15);
        // numbers: d11 straight = 2·6.667e-5 + 2e-4 + 0.08·0.0225
        assert!((straight[(0, 0)] - 2.1333333333333334e-3).abs() < 1e-15);
    }

    #[test]
    fn mirrored_params_flip_signs_and_limits() {
        let p = default_limb_params();
        let m = p.mirrored();
        assert_eq!(m.moment_arms[0][1], -p.moment_arms[0][1]);
        assert_eq!(m.joint_limits[1], [-2.4, 0.0]);
        assert_eq!(m.mirrored(), p);
    }
}
