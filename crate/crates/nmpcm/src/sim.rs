//! Closed-loop simulation: reference, controller, mixer, plant.
//!
//! The plant is the same rigid-body model the controller predicts with,
//! integrated with RK4 at a finer step. The control is held over each control
//! period after the round trip through the mixer and the PWM calibration, so
//! actuator clamping reaches the plant.

use nmpcm_core::model::{idx, rk4_step};
use nmpcm_core::{
    CascadedPid, ControlInput, Mixer, MixerConfig, Nmpc, OcpConfig, PidGains, QpStatus, QuadModel,
    QuadParams, QuadState, ReferencePoint, RtiError, SimTrace, Target, TraceRecord,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;
use std::time::Instant;

/// Runs abort when `|phi|` or `|theta|` exceeds this [rad].
pub const SAFETY_TILT: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    Nmpcm,
    CascadedPidOnly,
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerKind::Nmpcm => "nmpcm",
            ControllerKind::CascadedPidOnly => "cascaded_pid",
        })
    }
}

/// Time window `[start, start + duration)` in which every QP solve is
/// reported as failed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultWindow {
    pub start: f64,
    pub duration: f64,
}

impl FaultWindow {
    fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub initial_state: QuadState,
    pub target: Target,
    pub duration: f64,
    /// Controller rate [Hz].
    pub control_rate: f64,
    /// Largest plant integration step [s].
    pub plant_substep: f64,
    pub controller: ControllerKind,
    pub ocp: OcpConfig,
    pub gains: PidGains,
    /// Parameters of the prediction model.
    pub params: QuadParams,
    pub mixer: MixerConfig,
    pub seed: u64,
    /// Standard deviation of the Gaussian noise added to every measured state
    /// component. Zero disables noise.
    pub sensor_noise_std: f64,
    /// Plant mass relative to the model mass.
    pub plant_mass_scale: f64,
    pub qp_fault: Option<FaultWindow>,
}

impl ScenarioConfig {
    /// `[0, 0, 0.15]` to `[5, 5, 5]` in 20 s at 100 Hz with the default tuning.
    pub fn paper_step() -> Self {
        ScenarioConfig {
            name: "paper_step".into(),
            initial_state: QuadState::at_rest(0.0, 0.0, 0.15, 0.0),
            target: Target::new(5.0, 5.0, 5.0, 0.0),
            duration: 20.0,
            control_rate: 100.0,
            plant_substep: 0.001,
            controller: ControllerKind::Nmpcm,
            ocp: OcpConfig::default(),
            gains: PidGains::default(),
            params: QuadParams::default(),
            mixer: MixerConfig::default(),
            seed: 0,
            sensor_noise_std: 0.0,
            plant_mass_scale: 1.0,
            qp_fault: None,
        }
    }

    /// Hover at `[0, 0, 1]` for 10 s.
    pub fn hover() -> Self {
        let at = QuadState::at_rest(0.0, 0.0, 1.0, 0.0);
        ScenarioConfig {
            name: "hover".into(),
            initial_state: at,
            target: Target::new(0.0, 0.0, 1.0, 0.0),
            duration: 10.0,
            ..Self::paper_step()
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.control_rate
    }

    /// Number of control ticks.
    pub fn ticks(&self) -> usize {
        (self.duration * self.control_rate).round() as usize
    }

    /// Plant RK4 steps per control period.
    pub fn plant_steps(&self) -> usize {
        ((self.period() / self.plant_substep) - 1e-9)
            .ceil()
            .max(1.0) as usize
    }

    pub fn plant_params(&self) -> QuadParams {
        QuadParams {
            mass: self.params.mass * self.plant_mass_scale,
            ..self.params
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.duration) {
            return Err("scenario.duration must be > 0".into());
        }
        if !pos(self.control_rate) {
            return Err("scenario.control_rate must be > 0".into());
        }
        if !pos(self.plant_substep) || self.plant_substep > self.period() * (1.0 + 1e-12) {
            return Err("scenario.plant_substep must be in (0, 1/control_rate]".into());
        }
        if self.ticks() == 0 {
            return Err("scenario.duration is shorter than one control period".into());
        }
        if !self.initial_state.is_finite()
            || !self.target.position.iter().all(|v| v.is_finite())
            || !self.target.yaw.is_finite()
        {
            return Err("initial state and target must be finite".into());
        }
        if !(self.sensor_noise_std.is_finite() && self.sensor_noise_std >= 0.0) {
            return Err("scenario.sensor_noise_std must be >= 0".into());
        }
        if !pos(self.plant_mass_scale) {
            return Err("scenario.plant_mass_scale must be > 0".into());
        }
        if let Some(f) = self.qp_fault {
            if !(f.start.is_finite() && f.duration.is_finite() && f.duration >= 0.0) {
                return Err("fault window must be finite with duration >= 0".into());
            }
        }
        self.ocp.validate().map_err(|e| e.to_string())?;
        if !self.gains.is_valid() {
            return Err("pid gains must be >= 0 with positive integrator limits".into());
        }
        self.params.validate().map_err(|e| e.to_string())?;
        self.plant_params().validate().map_err(|e| e.to_string())?;
        Mixer::new(self.mixer, &self.params).map_err(|e| e.to_string())?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AbortReason {
    Tilt { phi: f64, theta: f64 },
    NonFinite,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::Tilt { phi, theta } => write!(
                f,
                "attitude out of envelope (phi {phi:.3}, theta {theta:.3} rad)"
            ),
            AbortReason::NonFinite => f.write_str("non-finite state"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    /// The trace holds every tick recorded before the abort.
    #[error("safety abort at tick {tick}: {reason}")]
    SafetyAbort {
        tick: usize,
        reason: AbortReason,
        trace: Box<SimTrace>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn check_envelope(x: &QuadState) -> Option<AbortReason> {
    if !x.is_finite() {
        return Some(AbortReason::NonFinite);
    }
    let (phi, theta) = (x.0[idx::PHI], x.0[idx::THETA]);
    if phi.abs() > SAFETY_TILT || theta.abs() > SAFETY_TILT {
        return Some(AbortReason::Tilt { phi, theta });
    }
    None
}

fn micros(a: Instant, b: Instant) -> f64 {
    (b - a).as_secs_f64() * 1e6
}

/// Closed loop advanced one control tick at a time.
pub struct Simulator {
    cfg: ScenarioConfig,
    plant: QuadParams,
    plant_steps: usize,
    mixer: Mixer,
    pid: CascadedPid,
    nmpc: Option<Nmpc<QuadModel>>,
    refs: Vec<ReferencePoint>,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    x: QuadState,
    tick: usize,
    /// Time since the NMPC guess was last shifted by one shooting interval.
    since_shift: f64,
}

impl Simulator {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate().map_err(SimError::Config)?;
        let mixer =
            Mixer::new(cfg.mixer, &cfg.params).map_err(|e| SimError::Config(e.to_string()))?;
        let nmpc = match cfg.controller {
            ControllerKind::Nmpcm => Some(
                Nmpc::new(QuadModel::new(cfg.params), cfg.ocp)
                    .map_err(|e| SimError::Config(e.to_string()))?,
            ),
            ControllerKind::CascadedPidOnly => None,
        };
        let noise = if cfg.sensor_noise_std > 0.0 {
            Some(
                Normal::new(0.0, cfg.sensor_noise_std)
                    .map_err(|e| SimError::Config(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Simulator {
            cfg: cfg.clone(),
            plant: cfg.plant_params(),
            plant_steps: cfg.plant_steps(),
            mixer,
            pid: CascadedPid::new(cfg.gains, cfg.ocp.u_bounds),
            nmpc,
            refs: vec![ReferencePoint::default(); cfg.ocp.horizon + 1],
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            noise,
            x: cfg.initial_state,
            tick: 0,
            since_shift: 0.0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// True plant state.
    pub fn state(&self) -> &QuadState {
        &self.x
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn is_done(&self) -> bool {
        self.tick >= self.cfg.ticks()
    }

    /// The NMPC controller, absent in PID-only mode.
    pub fn nmpc(&self) -> Option<&Nmpc<QuadModel>> {
        self.nmpc.as_ref()
    }

    /// Runs one control tick and integrates the plant over one period.
    /// Returns the record of the tick and, if the new plant state left the
    /// safety envelope, the reason.
    pub fn step(&mut self) -> (TraceRecord, Option<AbortReason>) {
        let cfg = &self.cfg;
        let period = cfg.period();
        let t = self.tick as f64 * period;
        let mut measured = self.x;
        if let Some(dist) = &self.noise {
            for v in measured.0.iter_mut() {
                *v += dist.sample(&mut self.rng);
            }
        }
        let u_ref =
            self.pid
                .build_reference(&measured, &cfg.target, &cfg.params, period, &mut self.refs);

        let mut rec = TraceRecord {
            t,
            state: self.x,
            u_ref,
            ..TraceRecord::default()
        };
        let u = match self.nmpc.as_mut() {
            None => u_ref,
            Some(ctrl) => {
                if !ctrl.is_initialized() {
                    ctrl.initialize(&measured, &u_ref);
                    self.since_shift = 0.0;
                }
                let t0 = Instant::now();
                let prepared = ctrl.prepare(&self.refs);
                let t1 = Instant::now();
                let result = match prepared {
                    Err(e) => Err(e),
                    Ok(()) if cfg.qp_fault.is_some_and(|f| f.contains(t)) => {
                        Err(RtiError::QpFailure(QpStatus::MaxIter))
                    }
                    Ok(()) => ctrl.feedback(&measured),
                };
                let t2 = Instant::now();
                rec.prepare_us = micros(t0, t1);
                rec.feedback_us = micros(t1, t2);
                rec.qp_iterations = ctrl.last_iterations();
                match result {
                    Ok(u) => {
                        self.since_shift += period;
                        if self.since_shift >= ctrl.config().dt * (1.0 - 1e-9) {
                            ctrl.shift();
                            self.since_shift = 0.0;
                        }
                        u
                    }
                    Err(_) => {
                        rec.fallback = true;
                        ctrl.invalidate();
                        u_ref
                    }
                }
            }
        };
        let pwm = self.mixer.mix(&u);
        let applied: ControlInput = self.mixer.unmix(&pwm);
        rec.control = u;
        rec.pwm = pwm;

        self.x = rk4_step(&self.x, &applied, &self.plant, period, self.plant_steps);
        self.tick += 1;
        (rec, check_envelope(&self.x))
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimTrace, SimError> {
    let mut sim = Simulator::new(cfg)?;
    let mut trace = SimTrace::with_capacity(cfg.period(), cfg.ticks());
    while !sim.is_done() {
        let tick = sim.tick();
        let (rec, abort) = sim.step();
        trace.push(rec);
        if let Some(reason) = abort {
            return Err(SimError::SafetyAbort {
                tick,
                reason,
                trace: Box::new(trace),
            });
        }
    }
    Ok(trace)
}
