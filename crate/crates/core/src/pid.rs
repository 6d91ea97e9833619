//! Cascaded position/attitude PID.
//!
//! The outer loop turns position error into desired accelerations, inverts
//! them (small-angle, yaw-rotated) into roll/pitch setpoints and a
//! feed-forward collective thrust. The inner loop tracks the attitude
//! setpoints with torque commands. Both loops use derivative-on-measurement,
//! so a setpoint jump never kicks the output.
//!
//! The PID output is the control reference `u_r` that the NMPC tracks and the
//! control it starts from.

use crate::model::{idx, ControlInput, QuadParams, QuadState};
use crate::rti::ControlBounds;
use libm::{cos, sin};

/// Roll/pitch setpoints are clamped to this magnitude [rad].
pub const MAX_TILT_SETPOINT: f64 = 0.35;

/// Position and yaw to reach.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Target {
    pub position: [f64; 3],
    pub yaw: f64,
}

impl Target {
    pub fn new(p: f64, q: f64, r: f64, yaw: f64) -> Self {
        Target {
            position: [p, q, r],
            yaw,
        }
    }

    /// The target as a state at rest.
    pub fn as_state(&self) -> QuadState {
        QuadState::at_rest(
            self.position[0],
            self.position[1],
            self.position[2],
            self.yaw,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidGains {
    pub pos_kp: [f64; 3],
    pub pos_ki: [f64; 3],
    pub pos_kd: [f64; 3],
    pub att_kp: [f64; 3],
    pub att_ki: [f64; 3],
    pub att_kd: [f64; 3],
    /// Anti-windup clamp on the position integrators [m·s].
    pub pos_integrator_limit: [f64; 3],
    /// Anti-windup clamp on the attitude integrators [rad·s].
    pub att_integrator_limit: [f64; 3],
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains {
            pos_kp: [0.25, 0.25, 1.0],
            pos_ki: [0.0, 0.0, 0.2],
            pos_kd: [0.7, 0.7, 1.4],
            att_kp: [0.3, 0.3, 0.3],
            att_ki: [0.0; 3],
            att_kd: [0.25, 0.25, 0.25],
            pos_integrator_limit: [1.0; 3],
            att_integrator_limit: [0.5; 3],
        }
    }
}

impl PidGains {
    pub const ZERO: PidGains = PidGains {
        pos_kp: [0.0; 3],
        pos_ki: [0.0; 3],
        pos_kd: [0.0; 3],
        att_kp: [0.0; 3],
        att_ki: [0.0; 3],
        att_kd: [0.0; 3],
        pos_integrator_limit: [1.0; 3],
        att_integrator_limit: [1.0; 3],
    };

    /// Gains must be finite and nonnegative, integrator limits positive.
    pub fn is_valid(&self) -> bool {
        let gains = [
            self.pos_kp,
            self.pos_ki,
            self.pos_kd,
            self.att_kp,
            self.att_ki,
            self.att_kd,
        ];
        let gains_ok = gains.iter().flatten().all(|g| g.is_finite() && *g >= 0.0);
        let limits_ok = self
            .pos_integrator_limit
            .iter()
            .chain(&self.att_integrator_limit)
            .all(|l| l.is_finite() && *l > 0.0);
        gains_ok && limits_ok
    }
}

/// Reference state and control for one horizon node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReferencePoint {
    pub x_ref: QuadState,
    pub u_ref: ControlInput,
}

/// Output of the outer loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttitudeSetpoint {
    pub phi: f64,
    pub theta: f64,
    pub thrust: f64,
}

/// Cascaded PID with integrator state. One instance per control loop.
#[derive(Clone, Debug)]
pub struct CascadedPid {
    pub gains: PidGains,
    pub bounds: ControlBounds,
    pos_integral: [f64; 3],
    att_integral: [f64; 3],
}

impl CascadedPid {
    pub fn new(gains: PidGains, bounds: ControlBounds) -> Self {
        CascadedPid {
            gains,
            bounds,
            pos_integral: [0.0; 3],
            att_integral: [0.0; 3],
        }
    }

    pub fn reset(&mut self) {
        self.pos_integral = [0.0; 3];
        self.att_integral = [0.0; 3];
    }

    pub fn position_integral(&self) -> [f64; 3] {
        self.pos_integral
    }

    pub fn attitude_integral(&self) -> [f64; 3] {
        self.att_integral
    }

    /// Outer loop: position error to roll/pitch setpoints and feed-forward
    /// thrust.
    pub fn position_loop(
        &mut self,
        x: &QuadState,
        target: &Target,
        p: &QuadParams,
        dt: f64,
    ) -> AttitudeSetpoint {
        let g = &self.gains;
        let pos = x.position();
        let vel = x.velocity();
        let mut acc = [0.0; 3];
        for i in 0..3 {
            let e = target.position[i] - pos[i];
            let lim = g.pos_integrator_limit[i];
            self.pos_integral[i] = (self.pos_integral[i] + e * dt).clamp(-lim, lim);
            acc[i] = g.pos_kp[i] * e + g.pos_ki[i] * self.pos_integral[i] - g.pos_kd[i] * vel[i];
        }
        let [ax, ay, az] = acc;

        let s = &x.0;
        let tilt = cos(s[idx::PHI]) * cos(s[idx::THETA]);
        let thrust = p.mass * (p.gravity + az) / tilt;
        let thrust = clamp_finite(thrust, self.bounds.lower.0[0], self.bounds.upper.0[0]);

        let (spsi, cpsi) = (sin(s[idx::PSI]), cos(s[idx::PSI]));
        let phi =
            ((ax * spsi - ay * cpsi) / p.gravity).clamp(-MAX_TILT_SETPOINT, MAX_TILT_SETPOINT);
        let theta =
            ((ax * cpsi + ay * spsi) / p.gravity).clamp(-MAX_TILT_SETPOINT, MAX_TILT_SETPOINT);
        AttitudeSetpoint { phi, theta, thrust }
    }

    /// Inner loop: attitude error to body torques `(u2, u3, u4)`.
    pub fn attitude_loop(&mut self, x: &QuadState, setpoint: [f64; 3], dt: f64) -> [f64; 3] {
        let g = &self.gains;
        let ang = x.angles();
        let rates = x.angle_rates();
        let mut tau = [0.0; 3];
        for i in 0..3 {
            let e = setpoint[i] - ang[i];
            let lim = g.att_integrator_limit[i];
            self.att_integral[i] = (self.att_integral[i] + e * dt).clamp(-lim, lim);
            let raw = g.att_kp[i] * e + g.att_ki[i] * self.att_integral[i] - g.att_kd[i] * rates[i];
            tau[i] = clamp_finite(raw, self.bounds.lower.0[i + 1], self.bounds.upper.0[i + 1]);
        }
        tau
    }

    /// Runs both loops once and returns the PID control.
    pub fn control(
        &mut self,
        x: &QuadState,
        target: &Target,
        p: &QuadParams,
        dt: f64,
    ) -> ControlInput {
        let sp = self.position_loop(x, target, p, dt);
        let [u2, u3, u4] = self.attitude_loop(x, [sp.phi, sp.theta, target.yaw], dt);
        ControlInput::new(sp.thrust, u2, u3, u4)
    }

    /// Runs both loops once and fills every node of `out` with the target (as
    /// a rest state) and the resulting control reference. `out` holds `N + 1`
    /// nodes for a horizon of `N` intervals.
    pub fn build_reference(
        &mut self,
        x: &QuadState,
        target: &Target,
        p: &QuadParams,
        dt: f64,
        out: &mut [ReferencePoint],
    ) -> ControlInput {
        let u_ref = self.control(x, target, p, dt);
        let point = ReferencePoint {
            x_ref: target.as_state(),
            u_ref,
        };
        out.fill(point);
        u_ref
    }
}

/// Clamp that maps NaN to the lower bound, so saturation is total.
fn clamp_finite(v: f64, lo: f64, hi: f64) -> f64 {
    if v.is_nan() {
        lo
    } else {
        v.clamp(lo, hi)
    }
}

/// Builds a target-at-rest reference of `horizon + 1` nodes with the given
/// control, mainly for tests and initialization.
pub fn constant_reference(target: &Target, u_ref: ControlInput, out: &mut [ReferencePoint]) {
    out.fill(ReferencePoint {
        x_ref: target.as_state(),
        u_ref,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pid(gains: PidGains) -> CascadedPid {
        CascadedPid::new(gains, ControlBounds::default())
    }

    #[test]
    fn at_target_gives_hover() {
        let p = QuadParams::default();
        let mut c = pid(PidGains::default());
        let t = Target::new(1.0, 2.0, 3.0, 0.0);
        let sp = c.position_loop(&t.as_state(), &t, &p, 0.01);
        assert_eq!(sp.phi, 0.0);
        assert_eq!(sp.theta, 0.0);
        assert_eq!(sp.thrust, p.hover_thrust());
        assert!((sp.thrust - 20.6991).abs() < 1e-12);
    }

    #[test]
    fn climb_thrust_single_term() {
        let p = QuadParams::default();
        let mut gains = PidGains::ZERO;
        gains.pos_kp[2] = 2.0;
        let mut c = pid(gains);
        let x = QuadState::at_rest(0.0, 0.0, 0.0, 0.0);
        let sp = c.position_loop(&x, &Target::new(0.0, 0.0, 1.0, 0.0), &p, 0.01);
        assert!((sp.thrust - 24.9191).abs() < 1e-12);
    }

    #[test]
    fn forward_error_pitches_forward() {
        let p = QuadParams::default();
        let mut c = pid(PidGains::default());
        let x = QuadState::at_rest(0.0, 0.0, 1.0, 0.0);
        let sp = c.position_loop(&x, &Target::new(1.0, 0.0, 1.0, 0.0), &p, 0.01);
        assert!(sp.theta > 0.0);
        assert_eq!(sp.phi, 0.0);
    }

    #[test]
    fn attitude_loop_zero_and_clamped() {
        let mut c = pid(PidGains::default());
        assert_eq!(c.attitude_loop(&QuadState::ZERO, [0.0; 3], 0.01), [0.0; 3]);

        let mut gains = PidGains::ZERO;
        gains.att_kp[0] = 2.0;
        let mut c = pid(gains);
        let tau = c.attitude_loop(&QuadState::ZERO, [0.1, 0.0, 0.0], 0.01);
        assert_eq!(tau, [0.1, 0.0, 0.0]);
    }

    #[test]
    fn reference_length_and_hover_value() {
        let p = QuadParams::default();
        let mut c = pid(PidGains::default());
        let t = Target::new(0.0, 0.0, 1.0, 0.0);
        let mut refs = vec![ReferencePoint::default(); 2];
        c.build_reference(&t.as_state(), &t, &p, 0.01, &mut refs);
        assert_eq!(refs.len(), 2);
        for r in &refs {
            assert_eq!(r.u_ref, p.hover_input());
            assert_eq!(r.x_ref, t.as_state());
        }
    }

    #[test]
    fn zero_gains_give_hover_reference() {
        let p = QuadParams::default();
        let mut c = pid(PidGains::ZERO);
        let x = QuadState([3.0, -1.0, 0.2, 0.0, 0.0, 0.3, 1.0, 2.0, 0.0, 0.5, -0.2, 0.1]);
        let u = c.control(&x, &Target::new(5.0, 5.0, 5.0, 0.0), &p, 0.01);
        assert_eq!(u, p.hover_input());
    }

    #[test]
    fn gain_validation() {
        assert!(PidGains::default().is_valid());
        let mut g = PidGains::default();
        g.att_kd[1] = -0.1;
        assert!(!g.is_valid());
        let mut g = PidGains::default();
        g.pos_integrator_limit[0] = 0.0;
        assert!(!g.is_valid());
    }
}
