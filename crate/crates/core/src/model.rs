//! Quadrotor rigid-body model in Euler angles, classical RK4 discretization,
//! and the exact Jacobians of the discrete step.
//!
//! State ordering is `[p, q, r, phi, theta, psi, dp, dq, dr, dphi, dtheta, dpsi]`
//! (position, Euler angles, and their time derivatives); control ordering is
//! `[u1, u2, u3, u4]` (collective thrust in N, then roll/pitch/yaw torques in
//! N·m). Angular accelerations are written directly on the Euler-angle rates,
//! with the gyroscopic cross terms, exactly as in the planar-rate model used
//! for the controller; no quaternion reformulation is attempted.

use libm::{cos, sin};

/// State dimension.
pub const NX: usize = 12;
/// Control dimension.
pub const NU: usize = 4;

/// Index names into [`QuadState`].
pub mod idx {
    pub const P: usize = 0;
    pub const Q: usize = 1;
    pub const R: usize = 2;
    pub const PHI: usize = 3;
    pub const THETA: usize = 4;
    pub const PSI: usize = 5;
    pub const DP: usize = 6;
    pub const DQ: usize = 7;
    pub const DR: usize = 8;
    pub const DPHI: usize = 9;
    pub const DTHETA: usize = 10;
    pub const DPSI: usize = 11;
}

/// Pose, attitude and their rates. Angles are stored unwrapped.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuadState(pub [f64; NX]);

impl QuadState {
    pub const ZERO: QuadState = QuadState([0.0; NX]);

    /// Rest state at the given position and yaw.
    pub fn at_rest(p: f64, q: f64, r: f64, psi: f64) -> Self {
        let mut x = [0.0; NX];
        x[idx::P] = p;
        x[idx::Q] = q;
        x[idx::R] = r;
        x[idx::PSI] = psi;
        QuadState(x)
    }

    pub fn position(&self) -> [f64; 3] {
        [self.0[idx::P], self.0[idx::Q], self.0[idx::R]]
    }

    pub fn angles(&self) -> [f64; 3] {
        [self.0[idx::PHI], self.0[idx::THETA], self.0[idx::PSI]]
    }

    pub fn velocity(&self) -> [f64; 3] {
        [self.0[idx::DP], self.0[idx::DQ], self.0[idx::DR]]
    }

    pub fn angle_rates(&self) -> [f64; 3] {
        [self.0[idx::DPHI], self.0[idx::DTHETA], self.0[idx::DPSI]]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Collective thrust `u1` [N] and body torques `u2..u4` [N·m].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlInput(pub [f64; NU]);

impl ControlInput {
    pub fn new(u1: f64, u2: f64, u3: f64, u4: f64) -> Self {
        ControlInput([u1, u2, u3, u4])
    }

    pub fn thrust(&self) -> f64 {
        self.0[0]
    }

    pub fn torques(&self) -> [f64; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Physical parameters. Inertias are in kg·m².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadParams {
    pub mass: f64,
    pub arm_length: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    pub gravity: f64,
}

impl Default for QuadParams {
    /// The 2.11 kg custom frame. Inertias in kg·m².
    fn default() -> Self {
        QuadParams {
            mass: 2.11,
            arm_length: 0.159,
            ixx: 0.0785,
            iyy: 0.0785,
            izz: 0.105,
            gravity: 9.81,
        }
    }
}

/// Parameter invariant violations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamError {
    NonPositive(&'static str),
}

impl core::fmt::Display for ParamError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ParamError::NonPositive(name) => write!(f, "parameter `{name}` must be finite and > 0"),
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let fields = [
            ("mass", self.mass),
            ("arm_length", self.arm_length),
            ("ixx", self.ixx),
            ("iyy", self.iyy),
            ("izz", self.izz),
            ("gravity", self.gravity),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(ParamError::NonPositive(name));
            }
        }
        Ok(())
    }

    /// `m * g`, the collective thrust that holds hover. The dynamics subtract
    /// exactly this product, so hover is an exact fixed point.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn hover_input(&self) -> ControlInput {
        ControlInput::new(self.hover_thrust(), 0.0, 0.0, 0.0)
    }
}

/// Jacobians of one discrete step: `a[i][j] = d x+_i / d x_j`,
/// `b[i][j] = d x+_i / d u_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateJacobians {
    pub a: [[f64; NX]; NX],
    pub b: [[f64; NU]; NX],
}

impl Default for StateJacobians {
    fn default() -> Self {
        StateJacobians {
            a: [[0.0; NX]; NX],
            b: [[0.0; NU]; NX],
        }
    }
}

impl StateJacobians {
    pub fn is_finite(&self) -> bool {
        self.a.iter().flatten().all(|v| v.is_finite())
            && self.b.iter().flatten().all(|v| v.is_finite())
    }
}

/// Time derivative of the state under constant control.
pub fn continuous_dynamics(x: &QuadState, u: &ControlInput, p: &QuadParams) -> [f64; NX] {
    let s = &x.0;
    let (sphi, cphi) = (sin(s[idx::PHI]), cos(s[idx::PHI]));
    let (sth, cth) = (sin(s[idx::THETA]), cos(s[idx::THETA]));
    let (spsi, cpsi) = (sin(s[idx::PSI]), cos(s[idx::PSI]));
    let u1 = u.0[0];
    let m = p.mass;
    let (dphi, dth, dpsi) = (s[idx::DPHI], s[idx::DTHETA], s[idx::DPSI]);

    let mut d = [0.0; NX];
    d[..6].copy_from_slice(&s[6..]);
    d[idx::DP] = (spsi * sphi + cpsi * sth * cphi) * u1 / m;
    d[idx::DQ] = (spsi * sth * cphi - cpsi * sphi) * u1 / m;
    d[idx::DR] = (cth * cphi * u1 - m * p.gravity) / m;
    d[idx::DPHI] = (dth * dpsi * (p.iyy - p.izz) + u.0[1]) / p.ixx;
    d[idx::DTHETA] = (dpsi * dphi * (p.izz - p.ixx) + u.0[2]) / p.iyy;
    d[idx::DPSI] = (dphi * dth * (p.ixx - p.iyy) + u.0[3]) / p.izz;
    d
}

/// Nonzero blocks of the continuous Jacobian. Everything not stored here is
/// either the kinematic identity (position/angle rows pick the rate columns)
/// or zero.
struct Linearization {
    /// d(ddp, ddq, ddr) / d(phi, theta, psi)
    attitude: [[f64; 3]; 3],
    /// d(ddp, ddq, ddr) / d u1
    thrust_dir: [f64; 3],
    /// d(ddphi, ddtheta, ddpsi) / d(dphi, dtheta, dpsi)
    gyro: [[f64; 3]; 3],
    /// 1 / (ixx, iyy, izz)
    inv_inertia: [f64; 3],
}

fn linearize(x: &QuadState, u: &ControlInput, p: &QuadParams) -> Linearization {
    let s = &x.0;
    let (sphi, cphi) = (sin(s[idx::PHI]), cos(s[idx::PHI]));
    let (sth, cth) = (sin(s[idx::THETA]), cos(s[idx::THETA]));
    let (spsi, cpsi) = (sin(s[idx::PSI]), cos(s[idx::PSI]));
    let m = p.mass;
    let a = u.0[0] / m;
    let (dphi, dth, dpsi) = (s[idx::DPHI], s[idx::DTHETA], s[idx::DPSI]);
    let kx = (p.iyy - p.izz) / p.ixx;
    let ky = (p.izz - p.ixx) / p.iyy;
    let kz = (p.ixx - p.iyy) / p.izz;
    Linearization {
        attitude: [
            [
                (spsi * cphi - cpsi * sth * sphi) * a,
                cpsi * cth * cphi * a,
                (cpsi * sphi - spsi * sth * cphi) * a,
            ],
            [
                (-spsi * sth * sphi - cpsi * cphi) * a,
                spsi * cth * cphi * a,
                (cpsi * sth * cphi + spsi * sphi) * a,
            ],
            [-cth * sphi * a, -sth * cphi * a, 0.0],
        ],
        thrust_dir: [
            (spsi * sphi + cpsi * sth * cphi) / m,
            (spsi * sth * cphi - cpsi * sphi) / m,
            cth * cphi / m,
        ],
        gyro: [
            [0.0, dpsi * kx, dth * kx],
            [dpsi * ky, 0.0, dphi * ky],
            [dth * kz, dphi * kz, 0.0],
        ],
        inv_inertia: [1.0 / p.ixx, 1.0 / p.iyy, 1.0 / p.izz],
    }
}

/// Tangent matrix: derivative of a state w.r.t. the step's initial state
/// (first `NX` columns) and control (last `NU` columns).
const NT: usize = NX + NU;
type Tangent = [[f64; NT]; NX];

/// `out = F_x * t + F_u * [0 | I]`, exploiting the block sparsity of `F_x`.
fn tangent_derivative(lin: &Linearization, t: &Tangent, out: &mut Tangent) {
    out[..6].copy_from_slice(&t[6..]);
    for r in 0..3 {
        let row_a = &lin.attitude[r];
        let row_g = &lin.gyro[r];
        for c in 0..NT {
            out[6 + r][c] = row_a[0] * t[3][c] + row_a[1] * t[4][c] + row_a[2] * t[5][c];
            out[9 + r][c] = row_g[0] * t[9][c] + row_g[1] * t[10][c] + row_g[2] * t[11][c];
        }
        out[6 + r][NX] += lin.thrust_dir[r];
        out[9 + r][NX + 1 + r] += lin.inv_inertia[r];
    }
}

#[inline]
fn offset(x: &[f64; NX], k: &[f64; NX], c: f64) -> QuadState {
    let mut y = [0.0; NX];
    for i in 0..NX {
        y[i] = x[i] + c * k[i];
    }
    QuadState(y)
}

#[inline]
fn combine(
    x: &[f64; NX],
    k1: &[f64; NX],
    k2: &[f64; NX],
    k3: &[f64; NX],
    k4: &[f64; NX],
    h6: f64,
) -> [f64; NX] {
    let mut y = [0.0; NX];
    for i in 0..NX {
        y[i] = x[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    y
}

fn rk4_substep(x: &QuadState, u: &ControlInput, p: &QuadParams, h: f64) -> QuadState {
    let half = 0.5 * h;
    let k1 = continuous_dynamics(x, u, p);
    let k2 = continuous_dynamics(&offset(&x.0, &k1, half), u, p);
    let k3 = continuous_dynamics(&offset(&x.0, &k2, half), u, p);
    let k4 = continuous_dynamics(&offset(&x.0, &k3, h), u, p);
    QuadState(combine(&x.0, &k1, &k2, &k3, &k4, h / 6.0))
}

/// Classical RK4 over `dt`, split into `substeps` equal sub-intervals, with
/// the control held constant.
pub fn rk4_step(
    x: &QuadState,
    u: &ControlInput,
    p: &QuadParams,
    dt: f64,
    substeps: usize,
) -> QuadState {
    debug_assert!(substeps >= 1);
    let h = dt / substeps as f64;
    let mut y = *x;
    for _ in 0..substeps {
        y = rk4_substep(&y, u, p, h);
    }
    y
}

/// [`rk4_step`] plus the exact Jacobians of the discrete map, obtained by
/// carrying the variational equations through every RK4 stage. The returned
/// state is bitwise identical to [`rk4_step`].
pub fn rk4_step_with_sensitivities(
    x: &QuadState,
    u: &ControlInput,
    p: &QuadParams,
    dt: f64,
    substeps: usize,
    jac: &mut StateJacobians,
) -> QuadState {
    debug_assert!(substeps >= 1);
    let h = dt / substeps as f64;
    let half = 0.5 * h;
    let h6 = h / 6.0;

    let mut t: Tangent = [[0.0; NT]; NX];
    for (i, row) in t.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut y = *x;
    let mut kt: [Tangent; 4] = [[[0.0; NT]; NX]; 4];
    let mut stage_t: Tangent = [[0.0; NT]; NX];

    for _ in 0..substeps {
        // stage 1
        let k1 = continuous_dynamics(&y, u, p);
        tangent_derivative(&linearize(&y, u, p), &t, &mut kt[0]);
        // stage 2
        let x2 = offset(&y.0, &k1, half);
        tangent_offset(&t, &kt[0], half, &mut stage_t);
        let k2 = continuous_dynamics(&x2, u, p);
        tangent_derivative(&linearize(&x2, u, p), &stage_t, &mut kt[1]);
        // stage 3
        let x3 = offset(&y.0, &k2, half);
        tangent_offset(&t, &kt[1], half, &mut stage_t);
        let k3 = continuous_dynamics(&x3, u, p);
        tangent_derivative(&linearize(&x3, u, p), &stage_t, &mut kt[2]);
        // stage 4
        let x4 = offset(&y.0, &k3, h);
        tangent_offset(&t, &kt[2], h, &mut stage_t);
        let k4 = continuous_dynamics(&x4, u, p);
        tangent_derivative(&linearize(&x4, u, p), &stage_t, &mut kt[3]);

        y = QuadState(combine(&y.0, &k1, &k2, &k3, &k4, h6));
        for i in 0..NX {
            for c in 0..NT {
                t[i][c] += h6 * (kt[0][i][c] + 2.0 * kt[1][i][c] + 2.0 * kt[2][i][c] + kt[3][i][c]);
            }
        }
    }

    for i in 0..NX {
        jac.a[i].copy_from_slice(&t[i][..NX]);
        jac.b[i].copy_from_slice(&t[i][NX..]);
    }
    y
}

fn tangent_offset(t: &Tangent, k: &Tangent, c: f64, out: &mut Tangent) {
    for i in 0..NX {
        for j in 0..NT {
            out[i][j] = t[i][j] + c * k[i][j];
        }
    }
}

/// A discrete-time prediction model usable by the shooting discretization.
pub trait ShootingModel {
    fn step(&self, x: &QuadState, u: &ControlInput, dt: f64, substeps: usize) -> QuadState;

    fn step_with_sensitivities(
        &self,
        x: &QuadState,
        u: &ControlInput,
        dt: f64,
        substeps: usize,
        jac: &mut StateJacobians,
    ) -> QuadState;
}

/// The quadrotor integrated with RK4.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuadModel {
    pub params: QuadParams,
}

impl QuadModel {
    pub fn new(params: QuadParams) -> Self {
        QuadModel { params }
    }
}

impl ShootingModel for QuadModel {
    fn step(&self, x: &QuadState, u: &ControlInput, dt: f64, substeps: usize) -> QuadState {
        rk4_step(x, u, &self.params, dt, substeps)
    }

    fn step_with_sensitivities(
        &self,
        x: &QuadState,
        u: &ControlInput,
        dt: f64,
        substeps: usize,
        jac: &mut StateJacobians,
    ) -> QuadState {
        rk4_step_with_sensitivities(x, u, &self.params, dt, substeps, jac)
    }
}

/// Four decoupled double integrators laid out in the quadrotor state vector:
/// `u1..u4` accelerate `p, q, r, phi`; `theta` and `psi` drift at constant
/// rate. Linear, with an exact zero-order-hold discretization, so the
/// shooting machinery can be checked against closed-form LQ solutions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleIntegrator;

impl DoubleIntegrator {
    pub fn matrices(dt: f64) -> StateJacobians {
        let mut j = StateJacobians::default();
        for i in 0..NX {
            j.a[i][i] = 1.0;
        }
        for i in 0..6 {
            j.a[i][i + 6] = dt;
        }
        for c in 0..NU {
            j.b[c][c] = 0.5 * dt * dt;
            j.b[c + 6][c] = dt;
        }
        j
    }
}

impl ShootingModel for DoubleIntegrator {
    fn step(&self, x: &QuadState, u: &ControlInput, dt: f64, _substeps: usize) -> QuadState {
        let m = Self::matrices(dt);
        let mut y = [0.0; NX];
        for i in 0..NX {
            let mut s = 0.0;
            for j in 0..NX {
                s += m.a[i][j] * x.0[j];
            }
            for j in 0..NU {
                s += m.b[i][j] * u.0[j];
            }
            y[i] = s;
        }
        QuadState(y)
    }

    fn step_with_sensitivities(
        &self,
        x: &QuadState,
        u: &ControlInput,
        dt: f64,
        substeps: usize,
        jac: &mut StateJacobians,
    ) -> QuadState {
        *jac = Self::matrices(dt);
        self.step(x, u, dt, substeps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hover_state() -> QuadState {
        QuadState::at_rest(0.0, 0.0, 1.0, 0.0)
    }

    #[test]
    fn hover_is_an_equilibrium() {
        let p = QuadParams::default();
        let u = p.hover_input();
        assert!((u.0[0] - 20.6991).abs() < 1e-12);
        let d = continuous_dynamics(&hover_state(), &u, &p);
        assert_eq!(d, [0.0; NX]);
    }

    #[test]
    fn free_fall_derivative() {
        let p = QuadParams::default();
        let d = continuous_dynamics(&QuadState::ZERO, &ControlInput::default(), &p);
        let mut expect = [0.0; NX];
        expect[idx::DR] = -9.81;
        assert_eq!(d, expect);
    }

    #[test]
    fn yaw_torque_derivative() {
        let p = QuadParams::default();
        let d = continuous_dynamics(&QuadState::ZERO, &ControlInput::new(0.0, 0.0, 0.0, 0.1), &p);
        assert!((d[idx::DPSI] - 0.952_380_952_380_952_4).abs() < 1e-12);
        for (i, v) in d.iter().enumerate() {
            if i != idx::DPSI && i != idx::DR {
                assert_eq!(*v, 0.0, "entry {i}");
            }
        }
    }

    #[test]
    fn rk4_hover_fixed_point_is_bitwise() {
        let p = QuadParams::default();
        let x = hover_state();
        for &dt in &[1e-3, 0.05, 0.1, 0.2] {
            for substeps in 1..6 {
                assert_eq!(rk4_step(&x, &p.hover_input(), &p, dt, substeps), x);
            }
        }
    }

    #[test]
    fn rk4_free_fall_is_exact() {
        let p = QuadParams::default();
        let x = QuadState::at_rest(0.0, 0.0, 0.15, 0.0);
        let y = rk4_step(&x, &ControlInput::default(), &p, 0.1, 1);
        assert!((y.0[idx::R] - 0.100_95).abs() < 1e-14);
        assert!((y.0[idx::DR] + 0.981).abs() < 1e-14);
    }

    #[test]
    fn sensitivity_state_matches_plain_step() {
        let p = QuadParams::default();
        let x = QuadState([
            0.1, -0.2, 0.3, 0.2, -0.1, 0.4, 0.5, -0.3, 0.2, 0.3, -0.6, 0.1,
        ]);
        let u = ControlInput::new(21.0, 0.05, -0.03, 0.02);
        let mut jac = StateJacobians::default();
        for substeps in 1..5 {
            let y1 = rk4_step(&x, &u, &p, 0.05, substeps);
            let y2 = rk4_step_with_sensitivities(&x, &u, &p, 0.05, substeps, &mut jac);
            assert_eq!(y1, y2);
        }
    }

    #[test]
    fn double_integrator_matches_kinematics() {
        let x = QuadState::at_rest(1.0, 0.0, 0.0, 0.0);
        let y = DoubleIntegrator.step(&x, &ControlInput::new(2.0, 0.0, 0.0, 0.0), 0.5, 1);
        assert!((y.0[idx::P] - 1.25).abs() < 1e-15);
        assert!((y.0[idx::DP] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(QuadParams::default().validate().is_ok());
        let bad = QuadParams {
            izz: 0.0,
            ..QuadParams::default()
        };
        assert_eq!(bad.validate(), Err(ParamError::NonPositive("izz")));
    }
}
