//! Collective thrust and body torques to per-motor PWM.
//!
//! Body frame: x forward, y left, z up. Each motor `i` carries three signs:
//! its roll lever (`+1` on the left side), its pitch lever (`+1` behind the
//! center of mass) and its yaw reaction (`+1` for the motors whose drag
//! torque is positive about z). The forward map is
//!
//! ```text
//! [U1, U2 / l', U3 / l', U4 / c_t]' = M f,   M = [1; roll; pitch; yaw]
//! ```
//!
//! with `l' = l * arm_factor` the lever arm per axis (`l / sqrt(2)` for an X
//! frame) and `c_t` the drag-torque-to-thrust ratio. Thrust maps to PWM
//! through a linear calibration and is clamped to the ESC range.

use crate::model::{ControlInput, QuadParams};

/// Four ESC pulse widths [µs].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PwmCommand(pub [f64; 4]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixerConfig {
    pub roll_signs: [f64; 4],
    pub pitch_signs: [f64; 4],
    pub yaw_signs: [f64; 4],
    /// Per-axis lever arm as a fraction of the arm length.
    pub arm_factor: f64,
    /// Drag torque per newton of thrust [m].
    pub yaw_coefficient: f64,
    /// PWM per newton of motor thrust [µs/N].
    pub pwm_slope: f64,
    /// PWM at zero thrust [µs].
    pub pwm_offset: f64,
    pub pwm_min: f64,
    pub pwm_max: f64,
}

impl Default for MixerConfig {
    /// X frame. Motor order: front-right, rear-left, front-left, rear-right.
    fn default() -> Self {
        MixerConfig {
            roll_signs: [-1.0, 1.0, 1.0, -1.0],
            pitch_signs: [-1.0, 1.0, -1.0, 1.0],
            yaw_signs: [1.0, 1.0, -1.0, -1.0],
            arm_factor: core::f64::consts::FRAC_1_SQRT_2,
            yaw_coefficient: 0.012,
            pwm_slope: 115.0,
            pwm_offset: 1000.0,
            pwm_min: 1000.0,
            pwm_max: 2000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixerError {
    /// The sign layout does not give an invertible allocation.
    SingularLayout,
    InvalidCalibration,
}

impl core::fmt::Display for MixerError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MixerError::SingularLayout => {
                f.write_str("motor sign layout gives a singular mixing matrix")
            }
            MixerError::InvalidCalibration => f.write_str(
                "mixer calibration needs slope > 0, positive lever arm and pwm_min < pwm_max",
            ),
        }
    }
}

/// Mixer with the inverse allocation precomputed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mixer {
    cfg: MixerConfig,
    lever: f64,
    forward: [[f64; 4]; 4],
    inverse: [[f64; 4]; 4],
}

impl Mixer {
    pub fn new(cfg: MixerConfig, params: &QuadParams) -> Result<Self, MixerError> {
        let ok = cfg.pwm_slope.is_finite()
            && cfg.pwm_slope > 0.0
            && cfg.arm_factor > 0.0
            && cfg.yaw_coefficient > 0.0
            && cfg.pwm_offset.is_finite()
            && cfg.pwm_min < cfg.pwm_max;
        if !ok {
            return Err(MixerError::InvalidCalibration);
        }
        let forward = [[1.0; 4], cfg.roll_signs, cfg.pitch_signs, cfg.yaw_signs];
        let inverse = invert4(&forward).ok_or(MixerError::SingularLayout)?;
        Ok(Mixer {
            cfg,
            lever: params.arm_length * cfg.arm_factor,
            forward,
            inverse,
        })
    }

    pub fn config(&self) -> &MixerConfig {
        &self.cfg
    }

    /// Unclamped per-motor thrusts [N].
    pub fn motor_thrusts(&self, u: &ControlInput) -> [f64; 4] {
        let v = [
            u.0[0],
            u.0[1] / self.lever,
            u.0[2] / self.lever,
            u.0[3] / self.cfg.yaw_coefficient,
        ];
        let mut f = [0.0; 4];
        for (i, fi) in f.iter_mut().enumerate() {
            *fi = (0..4).map(|j| self.inverse[i][j] * v[j]).sum();
        }
        f
    }

    /// Collective thrust and torques produced by the given motor thrusts.
    pub fn forward(&self, thrusts: &[f64; 4]) -> ControlInput {
        let mut v = [0.0; 4];
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = (0..4).map(|j| self.forward[i][j] * thrusts[j]).sum();
        }
        ControlInput::new(
            v[0],
            v[1] * self.lever,
            v[2] * self.lever,
            v[3] * self.cfg.yaw_coefficient,
        )
    }

    pub fn mix(&self, u: &ControlInput) -> PwmCommand {
        let f = self.motor_thrusts(u);
        let c = &self.cfg;
        let mut pwm = [0.0; 4];
        for i in 0..4 {
            let raw = c.pwm_offset + c.pwm_slope * f[i];
            pwm[i] = if raw.is_nan() {
                c.pwm_min
            } else {
                raw.clamp(c.pwm_min, c.pwm_max)
            };
        }
        PwmCommand(pwm)
    }

    /// Thrust each motor delivers for a PWM command (inverse calibration).
    pub fn thrusts_from_pwm(&self, pwm: &PwmCommand) -> [f64; 4] {
        let mut f = [0.0; 4];
        for i in 0..4 {
            f[i] = (pwm.0[i] - self.cfg.pwm_offset) / self.cfg.pwm_slope;
        }
        f
    }

    /// Control actually applied to the airframe by a PWM command.
    pub fn unmix(&self, pwm: &PwmCommand) -> ControlInput {
        self.forward(&self.thrusts_from_pwm(pwm))
    }
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert4(m: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut a = *m;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..4 {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..4 {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for j in 0..4 {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixer() -> Mixer {
        Mixer::new(MixerConfig::default(), &QuadParams::default()).unwrap()
    }

    #[test]
    fn hover_is_symmetric() {
        let p = QuadParams::default();
        let m = mixer();
        let f = m.motor_thrusts(&p.hover_input());
        for fi in f {
            assert!((fi - 5.174_775).abs() < 1e-12);
        }
        let pwm = m.mix(&p.hover_input());
        assert!(pwm.0.iter().all(|&v| (v - pwm.0[0]).abs() < 1e-9));
    }

    #[test]
    fn positive_roll_raises_left_pair() {
        let m = mixer();
        let u = ControlInput::new(20.6991, 0.05, 0.0, 0.0);
        let pwm = m.mix(&u);
        // left: rear-left (1), front-left (2); right: front-right (0), rear-right (3)
        assert!(pwm.0[1] > pwm.0[0] && pwm.0[1] > pwm.0[3]);
        assert!(pwm.0[2] > pwm.0[0] && pwm.0[2] > pwm.0[3]);
        let total: f64 = m.motor_thrusts(&u).iter().sum();
        assert!((total - 20.6991).abs() < 1e-12);
    }

    #[test]
    fn saturates_without_panicking() {
        let m = mixer();
        assert_eq!(m.mix(&ControlInput::new(1e6, 0.0, 0.0, 0.0)).0, [2000.0; 4]);
        assert_eq!(
            m.mix(&ControlInput::new(-5.0, 0.0, 0.0, 0.0)).0,
            [1000.0; 4]
        );
        assert_eq!(
            m.mix(&ControlInput::new(f64::NAN, 0.0, 0.0, 0.0)).0,
            [1000.0; 4]
        );
    }

    #[test]
    fn unmix_inverts_mix_inside_range() {
        let m = mixer();
        let u = ControlInput::new(21.3, -0.04, 0.07, 0.01);
        let back = m.unmix(&m.mix(&u));
        for i in 0..4 {
            assert!((back.0[i] - u.0[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_layout_is_rejected() {
        let cfg = MixerConfig {
            yaw_signs: [-1.0, 1.0, 1.0, -1.0],
            ..MixerConfig::default()
        };
        assert_eq!(
            Mixer::new(cfg, &QuadParams::default()),
            Err(MixerError::SingularLayout)
        );
    }
}
