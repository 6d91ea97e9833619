//! Tracking metrics of a closed-loop trace.
//!
//! Integrals use the left rectangle rule at tick resolution. The headline
//! `ise/itse/iae/itae` fields integrate the Euclidean position error norm;
//! the per-axis fields integrate the absolute error of each axis.
//! Settling is the first time after which the error norm stays within 5% of
//! its initial value. Overshoot is the largest excursion past the target,
//! along the commanded direction, over all axes with a commanded change, in
//! percent of that change.

use crate::pid::Target;
use crate::trace::SimTrace;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorIntegrals {
    pub ise: f64,
    pub itse: f64,
    pub iae: f64,
    pub itae: f64,
}

impl ErrorIntegrals {
    fn accumulate(&mut self, t: f64, e: f64, dt: f64) {
        let e = e.abs();
        self.ise += e * e * dt;
        self.itse += t * e * e * dt;
        self.iae += e * dt;
        self.itae += t * e * dt;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveTimeStats {
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl SolveTimeStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return SolveTimeStats::default();
        }
        let mut s: Vec<f64> = samples.to_vec();
        s.sort_by(f64::total_cmp);
        SolveTimeStats {
            median: percentile_sorted(&s, 0.5),
            p95: percentile_sorted(&s, 0.95),
            p99: percentile_sorted(&s, 0.99),
            max: s[s.len() - 1],
        }
    }
}

/// Linear interpolation between order statistics; `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let pos = q.clamp(0.0, 1.0) * (len - 1) as f64;
            let lo = pos as usize;
            let hi = (lo + 1).min(len - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsReport {
    /// Integrals of the position error norm.
    pub ise: f64,
    pub itse: f64,
    pub iae: f64,
    pub itae: f64,
    /// Integrals of `|p - p*|`, `|q - q*|`, `|r - r*|`.
    pub per_axis: [ErrorIntegrals; 3],
    /// `None` when the error never settles inside the band.
    pub settling_time_5pct: Option<f64>,
    pub overshoot_pct: f64,
    /// Per-channel maximum of `|u|`.
    pub u_max: [f64; 4],
    pub solve_time_us: SolveTimeStats,
    pub duration: f64,
}

impl MetricsReport {
    pub fn settled(&self) -> bool {
        self.settling_time_5pct.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricsError {
    EmptyTrace,
    NonUniformTicks { index: usize },
}

impl core::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricsError::EmptyTrace => f.write_str("trace has no records"),
            MetricsError::NonUniformTicks { index } => {
                write!(f, "tick spacing changes at record {index}")
            }
        }
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    libm::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

pub fn compute(trace: &SimTrace, target: &Target) -> Result<MetricsReport, MetricsError> {
    let recs = &trace.records;
    if recs.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let dt = trace.dt;
    if !(dt > 0.0) {
        return Err(MetricsError::NonUniformTicks { index: 0 });
    }
    for (k, w) in recs.windows(2).enumerate() {
        let step = w[1].t - w[0].t;
        if (step - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(MetricsError::NonUniformTicks { index: k + 1 });
        }
    }

    let error = |pos: [f64; 3]| {
        [
            pos[0] - target.position[0],
            pos[1] - target.position[1],
            pos[2] - target.position[2],
        ]
    };

    let mut report = MetricsReport::default();
    let mut norm_int = ErrorIntegrals::default();
    for r in recs {
        let e = error(r.state.position());
        norm_int.accumulate(r.t, norm3(e), dt);
        for a in 0..3 {
            report.per_axis[a].accumulate(r.t, e[a], dt);
        }
        for c in 0..4 {
            report.u_max[c] = report.u_max[c].max(r.control.0[c].abs());
        }
    }
    report.ise = norm_int.ise;
    report.itse = norm_int.itse;
    report.iae = norm_int.iae;
    report.itae = norm_int.itae;

    let e0 = norm3(error(recs[0].state.position()));
    let band = 0.05 * e0;
    let last_out = recs
        .iter()
        .rposition(|r| norm3(error(r.state.position())) > band);
    report.settling_time_5pct = match last_out {
        None => Some(recs[0].t),
        Some(k) if k + 1 < recs.len() => Some(recs[k + 1].t),
        Some(_) => None,
    };

    let start = recs[0].state.position();
    let mut overshoot = 0.0_f64;
    for a in 0..3 {
        let change = target.position[a] - start[a];
        if change.abs() <= 1e-9 {
            continue;
        }
        let dir = change.signum();
        let peak = recs
            .iter()
            .map(|r| dir * (r.state.position()[a] - target.position[a]))
            .fold(f64::NEG_INFINITY, f64::max);
        overshoot = overshoot.max(peak.max(0.0) / change.abs() * 100.0);
    }
    report.overshoot_pct = overshoot;

    let times: Vec<f64> = trace.cycle_times_us();
    report.solve_time_us = SolveTimeStats::from_samples(&times);
    report.duration = recs.len() as f64 * dt;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QuadState;
    use crate::trace::TraceRecord;

    /// Trace whose position error along p follows `e(t)`, target at origin.
    fn trace_from(dt: f64, duration: f64, e: impl Fn(f64) -> f64) -> SimTrace {
        let n = (duration / dt).round() as usize;
        let mut tr = SimTrace::with_capacity(dt, n);
        for k in 0..n {
            let t = k as f64 * dt;
            tr.push(TraceRecord {
                t,
                state: QuadState::at_rest(e(t), 0.0, 0.0, 0.0),
                ..TraceRecord::default()
            });
        }
        tr
    }

    #[test]
    fn constant_error_integrals() {
        let dt = 1e-3;
        let tr = trace_from(dt, 1.0, |_| 1.0);
        let m = compute(&tr, &Target::default()).unwrap();
        assert!((m.ise - 1.0).abs() < 1e-9);
        assert!((m.iae - 1.0).abs() < 1e-9);
        assert!((m.itse - 0.5).abs() <= dt);
        assert!((m.itae - 0.5).abs() <= dt);
    }

    #[test]
    fn exponential_settling_time() {
        let dt = 1e-3;
        let tr = trace_from(dt, 10.0, |t| libm::exp(-t));
        let m = compute(&tr, &Target::default()).unwrap();
        let ts = m.settling_time_5pct.unwrap();
        assert!((ts - libm::log(20.0)).abs() <= dt, "{ts}");
    }

    #[test]
    fn monotone_response_has_no_overshoot() {
        // position rises from -1 toward the target at 0
        let tr = trace_from(1e-2, 5.0, |t| -libm::exp(-2.0 * t));
        let m = compute(&tr, &Target::default()).unwrap();
        assert_eq!(m.overshoot_pct, 0.0);
    }

    #[test]
    fn overshoot_is_relative_to_commanded_change() {
        // start at -2, peak 0.5 past the target
        let tr = trace_from(1e-2, 10.0, |t| {
            if t < 1.0 {
                -2.0
            } else if t < 2.0 {
                0.5
            } else {
                0.0
            }
        });
        let m = compute(&tr, &Target::default()).unwrap();
        assert!((m.overshoot_pct - 25.0).abs() < 1e-12);
    }

    #[test]
    fn unsettled_trace_is_flagged() {
        let tr = trace_from(1e-2, 1.0, |_| 1.0 + 0.0);
        let mut tr2 = tr.clone();
        tr2.records.last_mut().unwrap().state.0[0] = 2.0;
        assert_eq!(
            compute(&tr2, &Target::default())
                .unwrap()
                .settling_time_5pct,
            None
        );
    }

    #[test]
    fn errors() {
        assert_eq!(
            compute(&SimTrace::default(), &Target::default()),
            Err(MetricsError::EmptyTrace)
        );
        let mut tr = trace_from(0.01, 0.1, |_| 1.0);
        tr.records[3].t += 0.003;
        assert_eq!(
            compute(&tr, &Target::default()),
            Err(MetricsError::NonUniformTicks { index: 3 })
        );
    }

    #[test]
    fn percentiles() {
        let s = SolveTimeStats::from_samples(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.max, 4.0);
    }
}
