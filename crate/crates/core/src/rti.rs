//! Multiple-shooting Gauss-Newton real-time iteration.
//!
//! Each control tick runs one SQP step split in two phases:
//!
//! * **prepare** integrates every shooting interval from the current guess,
//!   records the exact step Jacobians `A_k, B_k` and the defects
//!   `d_k = f(s_k, u_k) - s_{k+1}`, and condenses the node states out through
//!   `dx_{k+1} = A_k dx_k + B_k du_k + d_k`. The initial deviation `dx_0` is
//!   kept as a parameter, so everything except a matrix-vector product and
//!   the QP solve happens before the measurement is known.
//! * **feedback** plugs in the measured state, solves the condensed QP over
//!   the control corrections and applies them to the guess.
//!
//! Cost, with `W_k = diag(w_state)` on nodes `1..N` and `diag(w_terminal)`
//! added on node `N`:
//!
//! ```text
//! sum_{k=1..N} |x_k - xr_k|^2_{W_k} + sum_{k=0..N-1} |u_k - ur_k|^2_{diag(w_control)}
//! ```
//!
//! The node-0 state term is constant (it is the measurement) and is left out.
//! The QP Hessian is the Gauss-Newton `J' W J` of these residuals plus a small
//! multiple of the identity.

use crate::model::{ControlInput, QuadState, ShootingModel, StateJacobians, NU, NX};
use crate::pid::ReferencePoint;
use crate::qp::{ConstraintStatus, QpError, QpProblem, QpSolver, QpStatus, WarmStart};
use alloc::vec;
use alloc::vec::Vec;

/// Elementwise control limits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlBounds {
    pub lower: ControlInput,
    pub upper: ControlInput,
}

impl Default for ControlBounds {
    /// Collective thrust in [17.5, 25] N, each torque in [-0.1, 0.1] N·m.
    fn default() -> Self {
        ControlBounds {
            lower: ControlInput::new(17.5, -0.1, -0.1, -0.1),
            upper: ControlInput::new(25.0, 0.1, 0.1, 0.1),
        }
    }
}

impl ControlBounds {
    pub fn clamp(&self, u: &ControlInput) -> ControlInput {
        let mut out = *u;
        for i in 0..NU {
            out.0[i] = out.0[i].max(self.lower.0[i]).min(self.upper.0[i]);
        }
        out
    }

    pub fn contains(&self, u: &ControlInput, tol: f64) -> bool {
        (0..NU).all(|i| u.0[i] >= self.lower.0[i] - tol && u.0[i] <= self.upper.0[i] + tol)
    }
}

/// Optimal control problem setup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OcpConfig {
    /// Number of shooting intervals `N`.
    pub horizon: usize,
    /// Shooting interval length [s].
    pub dt: f64,
    /// RK4 sub-intervals per shooting interval.
    pub substeps: usize,
    /// Stage state weights (diagonal).
    pub w_state: [f64; NX],
    /// Control deviation weights (diagonal).
    pub w_control: [f64; NU],
    /// Terminal state weights (diagonal).
    pub w_terminal: [f64; NX],
    pub u_bounds: ControlBounds,
    /// Optional state limits; `-inf`/`+inf` disables a side.
    pub x_min: [f64; NX],
    pub x_max: [f64; NX],
    /// Added to the QP Hessian diagonal.
    pub regularization: f64,
    /// Weight of the single slack that softens every finite state limit.
    pub slack_penalty: f64,
}

pub const DEFAULT_W_STATE: [f64; NX] = [
    20.0, 20.0, 40.0, 50.0, 50.0, 50.0, 4.0, 4.0, 6.0, 10.0, 10.0, 10.0,
];
pub const DEFAULT_W_CONTROL: [f64; NU] = [0.05, 10.0, 10.0, 10.0];

impl Default for OcpConfig {
    fn default() -> Self {
        let mut w_terminal = DEFAULT_W_STATE;
        for w in &mut w_terminal {
            *w *= 2.0;
        }
        OcpConfig {
            horizon: 10,
            dt: 0.05,
            substeps: 5,
            w_state: DEFAULT_W_STATE,
            w_control: DEFAULT_W_CONTROL,
            w_terminal,
            u_bounds: ControlBounds::default(),
            x_min: [f64::NEG_INFINITY; NX],
            x_max: [f64::INFINITY; NX],
            regularization: 1e-9,
            slack_penalty: 1e4,
        }
    }
}

impl OcpConfig {
    pub fn validate(&self) -> Result<(), RtiError> {
        if self.horizon < 1 {
            return Err(RtiError::InvalidConfig("horizon must be >= 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(RtiError::InvalidConfig("dt must be > 0"));
        }
        if self.substeps < 1 {
            return Err(RtiError::InvalidConfig("substeps must be >= 1"));
        }
        let weights = self
            .w_state
            .iter()
            .chain(&self.w_control)
            .chain(&self.w_terminal);
        if !weights.clone().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(RtiError::InvalidConfig("weights must be finite and >= 0"));
        }
        for i in 0..NU {
            let (lo, hi) = (self.u_bounds.lower.0[i], self.u_bounds.upper.0[i]);
            if !(lo.is_finite() || lo == f64::NEG_INFINITY)
                || !(hi.is_finite() || hi == f64::INFINITY)
                || !(lo < hi)
            {
                return Err(RtiError::InvalidConfig("control bounds need u_min < u_max"));
            }
        }
        for i in 0..NX {
            if self.x_min[i].is_nan() || self.x_max[i].is_nan() || self.x_min[i] > self.x_max[i] {
                return Err(RtiError::InvalidConfig("state bounds need x_min <= x_max"));
            }
            if self.x_min[i] == f64::INFINITY || self.x_max[i] == f64::NEG_INFINITY {
                return Err(RtiError::InvalidConfig("state bounds point the wrong way"));
            }
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return Err(RtiError::InvalidConfig("regularization must be >= 0"));
        }
        if !(self.slack_penalty.is_finite() && self.slack_penalty > 0.0) {
            return Err(RtiError::InvalidConfig("slack penalty must be > 0"));
        }
        Ok(())
    }

    /// `(component, is_lower)` for every finite state limit.
    fn state_rows(&self) -> Vec<(usize, bool)> {
        let mut rows = Vec::new();
        for i in 0..NX {
            if self.x_min[i].is_finite() {
                rows.push((i, true));
            }
            if self.x_max[i].is_finite() {
                rows.push((i, false));
            }
        }
        rows
    }

    fn node_weight(&self, k: usize) -> [f64; NX] {
        let mut w = self.w_state;
        if k == self.horizon {
            for i in 0..NX {
                w[i] += self.w_terminal[i];
            }
        }
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RtiError {
    InvalidConfig(&'static str),
    DimensionMismatch,
    NotPrepared,
    /// A step Jacobian or defect at shooting node `node` was not finite.
    NonFiniteLinearization {
        node: usize,
    },
    /// The QP ended with a status other than solved.
    QpFailure(QpStatus),
    Qp(QpError),
}

impl core::fmt::Display for RtiError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RtiError::InvalidConfig(msg) => write!(f, "invalid OCP configuration: {msg}"),
            RtiError::DimensionMismatch => {
                f.write_str("guess, references and workspace disagree on the horizon")
            }
            RtiError::NotPrepared => f.write_str("feedback called before prepare"),
            RtiError::NonFiniteLinearization { node } => {
                write!(f, "non-finite linearization at shooting node {node}")
            }
            RtiError::QpFailure(status) => write!(f, "QP failed: {status:?}"),
            RtiError::Qp(e) => write!(f, "QP rejected: {e}"),
        }
    }
}

impl From<QpError> for RtiError {
    fn from(e: QpError) -> Self {
        RtiError::Qp(e)
    }
}

/// Shooting node states and interval controls.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryGuess {
    pub states: Vec<QuadState>,
    pub controls: Vec<ControlInput>,
}

impl TrajectoryGuess {
    /// Every node at `x`, every control at `u`.
    pub fn constant(horizon: usize, x: QuadState, u: ControlInput) -> Self {
        TrajectoryGuess {
            states: vec![x; horizon + 1],
            controls: vec![u; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn reset(&mut self, x: QuadState, u: ControlInput) {
        self.states.fill(x);
        self.controls.fill(u);
    }

    /// Drops the first node, duplicates the last control and re-integrates
    /// the last node from its predecessor.
    pub fn shift<M: ShootingModel>(&mut self, model: &M, cfg: &OcpConfig) {
        let n = self.controls.len();
        self.states.copy_within(1.., 0);
        self.controls.copy_within(1.., 0);
        self.states[n] = model.step(
            &self.states[n - 1],
            &self.controls[n - 1],
            cfg.dt,
            cfg.substeps,
        );
    }

    pub fn footprint_bytes(&self) -> usize {
        self.states.capacity() * core::mem::size_of::<QuadState>()
            + self.controls.capacity() * core::mem::size_of::<ControlInput>()
            + core::mem::size_of::<Self>()
    }
}

type Block = [[f64; NU]; NX];

/// Preallocated storage for one RTI controller.
#[derive(Clone, Debug)]
pub struct RtiWorkspace {
    horizon: usize,
    n_var: usize,
    has_slack: bool,
    state_rows: Vec<(usize, bool)>,
    jac: Vec<StateJacobians>,
    defects: Vec<[f64; NX]>,
    /// Affine offset of the condensed node deviation (defect accumulation).
    offsets: Vec<[f64; NX]>,
    /// `d x_k / d x_0` of the linearized dynamics.
    phi: Vec<[[f64; NX]; NX]>,
    /// `d x_k / d u_j` for `k = 1..=N`, `j < k`, stored at `(k - 1) * N + j`.
    gamma: Vec<Block>,
    /// Gradient at `dx_0 = 0`.
    g0: Vec<f64>,
    /// Gradient sensitivity to `dx_0`, one row per QP variable.
    gx: Vec<[f64; NX]>,
    dx: Vec<[f64; NX]>,
    qp: QpProblem,
    solver: QpSolver,
    prepared: bool,
    last_iterations: usize,
}

impl RtiWorkspace {
    pub fn new(cfg: &OcpConfig) -> Result<Self, RtiError> {
        cfg.validate()?;
        let n = cfg.horizon;
        let state_rows = cfg.state_rows();
        let has_slack = !state_rows.is_empty();
        let n_var = NU * n + usize::from(has_slack);
        let m = state_rows.len() * n;
        let mut qp = QpProblem::with_capacity(n_var, m);
        qp.resize(n_var, m)?;
        Ok(RtiWorkspace {
            horizon: n,
            n_var,
            has_slack,
            state_rows,
            jac: vec![StateJacobians::default(); n],
            defects: vec![[0.0; NX]; n],
            offsets: vec![[0.0; NX]; n + 1],
            phi: vec![[[0.0; NX]; NX]; n + 1],
            gamma: vec![[[0.0; NU]; NX]; n * n],
            g0: vec![0.0; n_var],
            gx: vec![[0.0; NX]; n_var],
            dx: vec![[0.0; NX]; n + 1],
            qp,
            solver: QpSolver::new(n_var, m),
            prepared: false,
            last_iterations: 0,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn qp(&self) -> &QpProblem {
        &self.qp
    }

    pub fn solver(&self) -> &QpSolver {
        &self.solver
    }

    pub fn jacobians(&self) -> &[StateJacobians] {
        &self.jac
    }

    pub fn defects(&self) -> &[[f64; NX]] {
        &self.defects
    }

    /// Gradient of the condensed QP at `dx_0 = 0`.
    pub fn base_gradient(&self) -> &[f64] {
        &self.g0
    }

    /// Active-set iterations of the last feedback solve.
    pub fn last_iterations(&self) -> usize {
        self.last_iterations
    }

    /// Bytes held by every buffer of the workspace, including the QP and its
    /// solver. Depends on the configuration only.
    pub fn footprint_bytes(&self) -> usize {
        use core::mem::size_of;
        size_of::<Self>()
            + self.state_rows.capacity() * size_of::<(usize, bool)>()
            + self.jac.capacity() * size_of::<StateJacobians>()
            + (self.defects.capacity()
                + self.offsets.capacity()
                + self.dx.capacity()
                + self.gx.capacity())
                * size_of::<[f64; NX]>()
            + self.phi.capacity() * size_of::<[[f64; NX]; NX]>()
            + self.gamma.capacity() * size_of::<Block>()
            + self.g0.capacity() * size_of::<f64>()
            + self.qp.footprint_bytes()
            + self.solver.footprint_bytes()
    }

    #[inline]
    fn gamma_at(&self, k: usize, j: usize) -> &Block {
        &self.gamma[(k - 1) * self.horizon + j]
    }

    /// Preparation phase: linearize along `guess` and condense.
    pub fn prepare<M: ShootingModel>(
        &mut self,
        model: &M,
        cfg: &OcpConfig,
        guess: &TrajectoryGuess,
        refs: &[ReferencePoint],
    ) -> Result<(), RtiError> {
        let n = self.horizon;
        if guess.states.len() != n + 1
            || guess.controls.len() != n
            || refs.len() != n + 1
            || cfg.horizon != n
        {
            return Err(RtiError::DimensionMismatch);
        }
        self.prepared = false;

        for k in 0..n {
            let pred = model.step_with_sensitivities(
                &guess.states[k],
                &guess.controls[k],
                cfg.dt,
                cfg.substeps,
                &mut self.jac[k],
            );
            let next = &guess.states[k + 1].0;
            for i in 0..NX {
                self.defects[k][i] = pred.0[i] - next[i];
            }
            if !self.jac[k].is_finite() || !self.defects[k].iter().all(|v| v.is_finite()) {
                return Err(RtiError::NonFiniteLinearization { node: k });
            }
        }

        // Forward recursions: offsets, state transition, prediction blocks.
        self.offsets[0] = [0.0; NX];
        self.phi[0] = identity();
        for k in 0..n {
            let a = &self.jac[k].a;
            let mut c = self.defects[k];
            mat_vec_add(a, &self.offsets[k], &mut c);
            self.offsets[k + 1] = c;
            self.phi[k + 1] = mat_mul_12(a, &self.phi[k]);
        }
        for k in 1..=n {
            for j in 0..k {
                let blk = if j == k - 1 {
                    self.jac[k - 1].b
                } else {
                    mat_mul_block(&self.jac[k - 1].a, self.gamma_at(k - 1, j))
                };
                self.gamma[(k - 1) * n + j] = blk;
            }
        }

        let nv = self.n_var;
        let h = self.qp.h_mut();
        h.fill(0.0);
        self.g0.fill(0.0);
        for row in self.gx.iter_mut() {
            *row = [0.0; NX];
        }

        for k in 1..=n {
            let w = cfg.node_weight(k);
            let mut err = [0.0; NX];
            for i in 0..NX {
                err[i] = w[i] * (guess.states[k].0[i] + self.offsets[k][i] - refs[k].x_ref.0[i]);
            }
            // W_k Phi_k
            let mut wphi = self.phi[k];
            for (i, row) in wphi.iter_mut().enumerate() {
                for v in row.iter_mut() {
                    *v *= w[i];
                }
            }
            for j in 0..k {
                let gj = self.gamma[(k - 1) * n + j];
                let mut wg = gj;
                for (i, row) in wg.iter_mut().enumerate() {
                    for v in row.iter_mut() {
                        *v *= w[i];
                    }
                }
                for c in 0..NU {
                    let col = NU * j + c;
                    let mut s = 0.0;
                    for i in 0..NX {
                        s += gj[i][c] * err[i];
                    }
                    self.g0[col] += s;
                    for q in 0..NX {
                        let mut s = 0.0;
                        for i in 0..NX {
                            s += gj[i][c] * wphi[i][q];
                        }
                        self.gx[col][q] += s;
                    }
                }
                // H[i][j] += Gamma_{k,i}' W_k Gamma_{k,j} for j <= i < k
                for bi in j..k {
                    let gi = &self.gamma[(k - 1) * n + bi];
                    for r in 0..NU {
                        let row = NU * bi + r;
                        for c in 0..NU {
                            let col = NU * j + c;
                            let mut s = 0.0;
                            for i in 0..NX {
                                s += gi[i][r] * wg[i][c];
                            }
                            self.qp.h_mut()[row * nv + col] += s;
                        }
                    }
                }
            }
        }
        let h = self.qp.h_mut();
        for j in 0..n {
            for c in 0..NU {
                let d = NU * j + c;
                h[d * nv + d] += cfg.w_control[c];
                self.g0[d] += cfg.w_control[c] * (guess.controls[j].0[c] - refs[j].u_ref.0[c]);
            }
        }
        if self.has_slack {
            let s = nv - 1;
            h[s * nv + s] = cfg.slack_penalty;
            self.g0[s] = cfg.slack_penalty;
        }
        for d in 0..nv {
            h[d * nv + d] += cfg.regularization;
        }
        for r in 0..nv {
            for c in (r + 1)..nv {
                h[r * nv + c] = h[c * nv + r];
            }
        }

        // Control corrections keep u within bounds; the slack is nonnegative.
        for j in 0..n {
            for c in 0..NU {
                let d = NU * j + c;
                self.qp.lb_mut()[d] = cfg.u_bounds.lower.0[c] - guess.controls[j].0[c];
                self.qp.ub_mut()[d] = cfg.u_bounds.upper.0[c] - guess.controls[j].0[c];
            }
        }
        if self.has_slack {
            self.qp.lb_mut()[nv - 1] = 0.0;
            self.qp.ub_mut()[nv - 1] = f64::INFINITY;
        }

        // State limit rows: coefficients now, right-hand sides at feedback.
        let rpn = self.state_rows.len();
        if rpn > 0 {
            let cmat = self.qp.c_mut();
            cmat.fill(0.0);
            for k in 1..=n {
                for (r, &(comp, lower)) in self.state_rows.iter().enumerate() {
                    let row = (k - 1) * rpn + r;
                    let base = row * nv;
                    for j in 0..k {
                        let blk = &self.gamma[(k - 1) * n + j];
                        for c in 0..NU {
                            cmat[base + NU * j + c] = blk[comp][c];
                        }
                    }
                    cmat[base + nv - 1] = if lower { 1.0 } else { -1.0 };
                }
            }
        }

        self.prepared = true;
        Ok(())
    }

    /// Feedback phase: solve for the corrections at the measured state,
    /// update `guess` and return the first control.
    pub fn feedback(
        &mut self,
        cfg: &OcpConfig,
        x_measured: &QuadState,
        guess: &mut TrajectoryGuess,
    ) -> Result<ControlInput, RtiError> {
        if !self.prepared {
            return Err(RtiError::NotPrepared);
        }
        let n = self.horizon;
        if guess.states.len() != n + 1 || guess.controls.len() != n {
            return Err(RtiError::DimensionMismatch);
        }
        let mut dx0 = [0.0; NX];
        for i in 0..NX {
            dx0[i] = x_measured.0[i] - guess.states[0].0[i];
        }

        let nv = self.n_var;
        {
            let g = self.qp.g_mut();
            for d in 0..nv {
                let mut s = self.g0[d];
                for q in 0..NX {
                    s += self.gx[d][q] * dx0[q];
                }
                g[d] = s;
            }
        }
        let rpn = self.state_rows.len();
        if rpn > 0 {
            for k in 1..=n {
                let mut xk = guess.states[k].0;
                for i in 0..NX {
                    xk[i] += self.offsets[k][i];
                }
                mat_vec_add(&self.phi[k], &dx0, &mut xk);
                for (r, &(comp, lower)) in self.state_rows.iter().enumerate() {
                    let row = (k - 1) * rpn + r;
                    if lower {
                        self.qp.c_lb_mut()[row] = cfg.x_min[comp] - xk[comp];
                        self.qp.c_ub_mut()[row] = f64::INFINITY;
                    } else {
                        self.qp.c_lb_mut()[row] = f64::NEG_INFINITY;
                        self.qp.c_ub_mut()[row] = cfg.x_max[comp] - xk[comp];
                    }
                }
            }
        }

        let sol = self.solver.solve(&self.qp, WarmStart::Previous)?;
        self.last_iterations = sol.iterations;
        if sol.status != QpStatus::Solved {
            return Err(RtiError::QpFailure(sol.status));
        }
        let du = &sol.x_opt;

        for j in 0..n {
            for c in 0..NU {
                guess.controls[j].0[c] += du[NU * j + c];
            }
        }
        self.dx[0] = dx0;
        guess.states[0] = *x_measured;
        for k in 0..n {
            let mut next = self.defects[k];
            mat_vec_add(&self.jac[k].a, &self.dx[k], &mut next);
            for i in 0..NX {
                for c in 0..NU {
                    next[i] += self.jac[k].b[i][c] * du[NU * k + c];
                }
            }
            self.dx[k + 1] = next;
            for i in 0..NX {
                guess.states[k + 1].0[i] += next[i];
            }
        }
        self.prepared = false;
        Ok(cfg.u_bounds.clamp(&guess.controls[0]))
    }

    /// Moves the carried QP working set one node forward to match a shifted
    /// guess. The last node keeps its own status.
    pub fn shift_working_set(&mut self) {
        let n = self.horizon;
        let rpn = self.state_rows.len();
        let nv = self.n_var;
        let ws = self.solver.working_set_mut();
        if ws.len() != nv + rpn * n {
            return;
        }
        ws.copy_within(NU..NU * n, 0);
        if rpn > 0 {
            ws.copy_within(nv + rpn..nv + rpn * n, nv);
        }
    }

    pub fn clear_working_set(&mut self) {
        self.solver.clear_working_set();
    }

    /// Copy of the carried working set for inspection.
    pub fn working_set(&self) -> &[ConstraintStatus] {
        self.solver.working_set()
    }
}

fn identity() -> [[f64; NX]; NX] {
    let mut m = [[0.0; NX]; NX];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// `y += a x`
fn mat_vec_add(a: &[[f64; NX]; NX], x: &[f64; NX], y: &mut [f64; NX]) {
    for i in 0..NX {
        let mut s = 0.0;
        for j in 0..NX {
            s += a[i][j] * x[j];
        }
        y[i] += s;
    }
}

fn mat_mul_12(a: &[[f64; NX]; NX], b: &[[f64; NX]; NX]) -> [[f64; NX]; NX] {
    let mut c = [[0.0; NX]; NX];
    for i in 0..NX {
        for k in 0..NX {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..NX {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

fn mat_mul_block(a: &[[f64; NX]; NX], b: &Block) -> Block {
    let mut c = [[0.0; NU]; NX];
    for i in 0..NX {
        for k in 0..NX {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..NU {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// Tracking cost of rolling `controls` out of `x0` with the nonlinear model.
pub fn ocp_cost<M: ShootingModel>(
    model: &M,
    cfg: &OcpConfig,
    x0: &QuadState,
    controls: &[ControlInput],
    refs: &[ReferencePoint],
) -> f64 {
    let mut x = *x0;
    let mut cost = 0.0;
    for (k, u) in controls.iter().enumerate() {
        for c in 0..NU {
            let e = u.0[c] - refs[k].u_ref.0[c];
            cost += cfg.w_control[c] * e * e;
        }
        x = model.step(&x, u, cfg.dt, cfg.substeps);
        let w = cfg.node_weight(k + 1);
        for i in 0..NX {
            let e = x.0[i] - refs[k + 1].x_ref.0[i];
            cost += w[i] * e * e;
        }
    }
    cost
}

/// A complete RTI controller: model, configuration, workspace and guess.
#[derive(Clone, Debug)]
pub struct Nmpc<M: ShootingModel> {
    pub model: M,
    cfg: OcpConfig,
    ws: RtiWorkspace,
    guess: TrajectoryGuess,
    initialized: bool,
}

impl<M: ShootingModel> Nmpc<M> {
    pub fn new(model: M, cfg: OcpConfig) -> Result<Self, RtiError> {
        let ws = RtiWorkspace::new(&cfg)?;
        let guess =
            TrajectoryGuess::constant(cfg.horizon, QuadState::ZERO, ControlInput::default());
        Ok(Nmpc {
            model,
            cfg,
            ws,
            guess,
            initialized: false,
        })
    }

    pub fn config(&self) -> &OcpConfig {
        &self.cfg
    }

    pub fn guess(&self) -> &TrajectoryGuess {
        &self.guess
    }

    pub fn workspace(&self) -> &RtiWorkspace {
        &self.ws
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Seeds the guess: every node at `x`, every control at `u_ref`.
    pub fn initialize(&mut self, x: &QuadState, u_ref: &ControlInput) {
        self.guess.reset(*x, *u_ref);
        self.ws.clear_working_set();
        self.initialized = true;
    }

    pub fn invalidate(&mut self) {
        self.initialized = false;
    }

    pub fn prepare(&mut self, refs: &[ReferencePoint]) -> Result<(), RtiError> {
        self.ws.prepare(&self.model, &self.cfg, &self.guess, refs)
    }

    pub fn feedback(&mut self, x: &QuadState) -> Result<ControlInput, RtiError> {
        self.ws.feedback(&self.cfg, x, &mut self.guess)
    }

    pub fn shift(&mut self) {
        self.guess.shift(&self.model, &self.cfg);
        self.ws.shift_working_set();
    }

    pub fn last_iterations(&self) -> usize {
        self.ws.last_iterations()
    }

    pub fn footprint_bytes(&self) -> usize {
        self.ws.footprint_bytes() + self.guess.footprint_bytes()
    }
}
