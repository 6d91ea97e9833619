//! Scenario files.
//!
//! A scenario is a TOML document with the sections `[scenario]`, `[ocp]`,
//! `[pid]`, `[params]`, `[mixer]` and `[fault]`. Every key has a default, so
//! an empty file describes the step scenario with the default tuning. Unknown
//! keys are rejected. The key schema is documented in `docs/config.md`.

use crate::sim::{ControllerKind, FaultWindow, ScenarioConfig};
use nmpcm_core::{
    ControlBounds, ControlInput, MixerConfig, OcpConfig, PidGains, QuadParams, QuadState, Target,
    NU, NX,
};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub ocp: OcpSection,
    #[serde(default)]
    pub pid: PidSection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub mixer: MixerSection,
    #[serde(default)]
    pub fault: FaultSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub name: Option<String>,
    /// `"nmpcm"` or `"cascaded_pid"`.
    pub controller: String,
    pub duration: f64,
    pub control_rate: f64,
    pub plant_substep: f64,
    pub initial_state: [f64; NX],
    pub target_position: [f64; 3],
    pub target_yaw: f64,
    pub seed: u64,
    pub sensor_noise_std: f64,
    pub plant_mass_scale: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let mut initial_state = [0.0; NX];
        initial_state[2] = 0.15;
        ScenarioSection {
            name: None,
            controller: "nmpcm".into(),
            duration: 20.0,
            control_rate: 100.0,
            plant_substep: 0.001,
            initial_state,
            target_position: [5.0, 5.0, 5.0],
            target_yaw: 0.0,
            seed: 0,
            sensor_noise_std: 0.0,
            plant_mass_scale: 1.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcpSection {
    pub horizon: usize,
    pub dt: f64,
    pub substeps: usize,
    pub w_state: [f64; NX],
    pub w_control: [f64; NU],
    pub w_terminal: [f64; NX],
    pub u_min: [f64; NU],
    pub u_max: [f64; NU],
    pub x_min: [f64; NX],
    pub x_max: [f64; NX],
    pub regularization: f64,
    pub slack_penalty: f64,
}

impl Default for OcpSection {
    fn default() -> Self {
        let d = OcpConfig::default();
        OcpSection {
            horizon: d.horizon,
            dt: d.dt,
            substeps: d.substeps,
            w_state: d.w_state,
            w_control: d.w_control,
            w_terminal: d.w_terminal,
            u_min: d.u_bounds.lower.0,
            u_max: d.u_bounds.upper.0,
            x_min: d.x_min,
            x_max: d.x_max,
            regularization: d.regularization,
            slack_penalty: d.slack_penalty,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidSection {
    pub pos_kp: [f64; 3],
    pub pos_ki: [f64; 3],
    pub pos_kd: [f64; 3],
    pub att_kp: [f64; 3],
    pub att_ki: [f64; 3],
    pub att_kd: [f64; 3],
    pub pos_integrator_limit: [f64; 3],
    pub att_integrator_limit: [f64; 3],
}

impl Default for PidSection {
    fn default() -> Self {
        let g = PidGains::default();
        PidSection {
            pos_kp: g.pos_kp,
            pos_ki: g.pos_ki,
            pos_kd: g.pos_kd,
            att_kp: g.att_kp,
            att_ki: g.att_ki,
            att_kd: g.att_kd,
            pos_integrator_limit: g.pos_integrator_limit,
            att_integrator_limit: g.att_integrator_limit,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSection {
    pub mass: f64,
    pub arm_length: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    pub gravity: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        let p = QuadParams::default();
        ParamsSection {
            mass: p.mass,
            arm_length: p.arm_length,
            ixx: p.ixx,
            iyy: p.iyy,
            izz: p.izz,
            gravity: p.gravity,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixerSection {
    pub roll_signs: [f64; 4],
    pub pitch_signs: [f64; 4],
    pub yaw_signs: [f64; 4],
    pub arm_factor: f64,
    pub yaw_coefficient: f64,
    pub pwm_slope: f64,
    pub pwm_offset: f64,
    pub pwm_min: f64,
    pub pwm_max: f64,
}

impl Default for MixerSection {
    fn default() -> Self {
        let m = MixerConfig::default();
        MixerSection {
            roll_signs: m.roll_signs,
            pitch_signs: m.pitch_signs,
            yaw_signs: m.yaw_signs,
            arm_factor: m.arm_factor,
            yaw_coefficient: m.yaw_coefficient,
            pwm_slope: m.pwm_slope,
            pwm_offset: m.pwm_offset,
            pwm_min: m.pwm_min,
            pwm_max: m.pwm_max,
        }
    }
}

/// Forces the NMPC to report a QP failure for a time window.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultSection {
    pub qp_failure_start: Option<f64>,
    pub qp_failure_duration: f64,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Validated scenario. `default_name` is used when the file has no
    /// `scenario.name`.
    pub fn into_scenario(self, default_name: &str) -> Result<ScenarioConfig, ConfigError> {
        let s = self.scenario;
        let controller = match s.controller.as_str() {
            "nmpcm" => ControllerKind::Nmpcm,
            "cascaded_pid" => ControllerKind::CascadedPidOnly,
            other => {
                return Err(invalid(format!(
                    "scenario.controller must be \"nmpcm\" or \"cascaded_pid\", got {other:?}"
                )))
            }
        };
        let o = self.ocp;
        let ocp = OcpConfig {
            horizon: o.horizon,
            dt: o.dt,
            substeps: o.substeps,
            w_state: o.w_state,
            w_control: o.w_control,
            w_terminal: o.w_terminal,
            u_bounds: ControlBounds {
                lower: ControlInput(o.u_min),
                upper: ControlInput(o.u_max),
            },
            x_min: o.x_min,
            x_max: o.x_max,
            regularization: o.regularization,
            slack_penalty: o.slack_penalty,
        };
        let p = self.pid;
        let gains = PidGains {
            pos_kp: p.pos_kp,
            pos_ki: p.pos_ki,
            pos_kd: p.pos_kd,
            att_kp: p.att_kp,
            att_ki: p.att_ki,
            att_kd: p.att_kd,
            pos_integrator_limit: p.pos_integrator_limit,
            att_integrator_limit: p.att_integrator_limit,
        };
        let q = self.params;
        let params = QuadParams {
            mass: q.mass,
            arm_length: q.arm_length,
            ixx: q.ixx,
            iyy: q.iyy,
            izz: q.izz,
            gravity: q.gravity,
        };
        let m = self.mixer;
        let mixer = MixerConfig {
            roll_signs: m.roll_signs,
            pitch_signs: m.pitch_signs,
            yaw_signs: m.yaw_signs,
            arm_factor: m.arm_factor,
            yaw_coefficient: m.yaw_coefficient,
            pwm_slope: m.pwm_slope,
            pwm_offset: m.pwm_offset,
            pwm_min: m.pwm_min,
            pwm_max: m.pwm_max,
        };
        let qp_fault = match self.fault.qp_failure_start {
            Some(start) => Some(FaultWindow {
                start,
                duration: self.fault.qp_failure_duration,
            }),
            None => None,
        };
        let [tp, tq, tr] = s.target_position;
        let cfg = ScenarioConfig {
            name: s.name.unwrap_or_else(|| default_name.to_string()),
            initial_state: QuadState(s.initial_state),
            target: Target::new(tp, tq, tr, s.target_yaw),
            duration: s.duration,
            control_rate: s.control_rate,
            plant_substep: s.plant_substep,
            controller,
            ocp,
            gains,
            params,
            mixer,
            seed: s.seed,
            sensor_noise_std: s.sensor_noise_std,
            plant_mass_scale: s.plant_mass_scale,
            qp_fault,
        };
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }
}

/// Reads, parses and validates a scenario file. The file stem names the
/// scenario unless the file sets `scenario.name`.
pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario");
    ScenarioFile::parse(&text)?.into_scenario(stem)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_step_scenario() {
        let cfg = ScenarioFile::parse("").unwrap().into_scenario("x").unwrap();
        assert_eq!(cfg.name, "x");
        assert_eq!(cfg.target.position, [5.0, 5.0, 5.0]);
        assert_eq!(cfg.initial_state.position(), [0.0, 0.0, 0.15]);
        assert_eq!(cfg.ocp, OcpConfig::default());
        assert_eq!(cfg.gains, PidGains::default());
        assert_eq!(cfg.ticks(), 2000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioFile::parse("[ocp]\nw_sate = [1.0]\n").unwrap_err();
        assert!(err.to_string().contains("w_sate"), "{err}");
        assert!(ScenarioFile::parse("[ocpp]\n").is_err());
    }

    #[test]
    fn infinite_state_bounds_parse() {
        let text = "[ocp]\nx_min = [-inf, -inf, 0.0, -inf, -inf, -inf, -inf, -inf, -inf, -inf, -inf, -inf]\n";
        let cfg = ScenarioFile::parse(text)
            .unwrap()
            .into_scenario("x")
            .unwrap();
        assert_eq!(cfg.ocp.x_min[2], 0.0);
        assert_eq!(cfg.ocp.x_min[0], f64::NEG_INFINITY);
    }

    #[test]
    fn invariant_violations_are_reported() {
        for text in [
            "[scenario]\nduration = 0.0\n",
            "[scenario]\ncontroller = \"lqr\"\n",
            "[scenario]\nplant_substep = 0.5\n",
            "[ocp]\nhorizon = 0\n",
            "[params]\nmass = -1.0\n",
            "[pid]\npos_kp = [1.0, -1.0, 1.0]\n",
            "[mixer]\npwm_slope = 0.0\n",
        ] {
            let r = ScenarioFile::parse(text).unwrap().into_scenario("x");
            assert!(matches!(r, Err(ConfigError::Invalid(_))), "{text}");
        }
    }
}
