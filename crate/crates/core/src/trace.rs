//! Closed-loop history, one record per control tick.

use crate::mixer::PwmCommand;
use crate::model::{ControlInput, QuadState};
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TraceRecord {
    /// Tick start time [s].
    pub t: f64,
    /// Plant state at the tick start.
    pub state: QuadState,
    /// Control computed by the controller (before mixing).
    pub control: ControlInput,
    pub pwm: PwmCommand,
    /// Cascaded-PID reference for this tick.
    pub u_ref: ControlInput,
    pub qp_iterations: usize,
    pub prepare_us: f64,
    pub feedback_us: f64,
    /// The NMPC failed and the PID control was applied instead.
    pub fallback: bool,
}

impl TraceRecord {
    pub fn cycle_us(&self) -> f64 {
        self.prepare_us + self.feedback_us
    }
}

/// Records at a uniform tick spacing `dt`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub records: Vec<TraceRecord>,
}

impl SimTrace {
    pub fn with_capacity(dt: f64, ticks: usize) -> Self {
        SimTrace {
            dt,
            records: Vec::with_capacity(ticks),
        }
    }

    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Prepare + feedback time of every tick [µs].
    pub fn cycle_times_us(&self) -> Vec<f64> {
        self.records.iter().map(TraceRecord::cycle_us).collect()
    }
}
