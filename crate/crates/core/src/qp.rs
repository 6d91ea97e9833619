//! Dense convex QP with box and general two-sided linear constraints:
//!
//! ```text
//! minimize    1/2 x' H x + g' x
//! subject to  lb <= x <= ub
//!             c_lb <= C x <= c_ub
//! ```
//!
//! `H` must be positive definite. The solver is a dual active-set method in
//! the Goldfarb-Idnani family: it starts from the minimizer of the problem
//! restricted to a (possibly warm-started) working set, keeps the multipliers
//! of the working set nonnegative, and adds the most violated constraint until
//! the iterate is primal feasible. Active bounds are eliminated by fixing the
//! variable; active general rows are handled with a Schur complement on the
//! Cholesky factor of the free block of `H`.
//!
//! All storage is allocated by [`QpSolver::new`] and [`QpProblem::with_capacity`].
//! Solving never allocates.
//!
//! Constraint ids: `0..n` are the variable bounds, `n..n+m` the rows of `C`.

use crate::linalg::{backward_subst, cholesky_in_place, cholesky_solve, dot, forward_subst};
use alloc::vec;
use alloc::vec::Vec;

/// Relative stationarity tolerance used by [`QpSolution::kkt_residual`] checks.
pub const STATIONARITY_TOL: f64 = 1e-8;
/// Primal feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Ratio-test tolerance on multiplier decrease rates.
const RATIO_TOL: f64 = 1e-12;
/// A constraint counts as violated below this slack.
const VIOLATION_TOL: f64 = 1e-10;
/// Warm-start multipliers below `-DUAL_TOL` are dropped.
const DUAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ConstraintStatus {
    #[default]
    Inactive,
    AtLower,
    AtUpper,
}

impl ConstraintStatus {
    fn sign(self) -> f64 {
        match self {
            ConstraintStatus::AtLower => 1.0,
            ConstraintStatus::AtUpper => -1.0,
            ConstraintStatus::Inactive => 0.0,
        }
    }

    pub fn is_active(self) -> bool {
        self != ConstraintStatus::Inactive
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QpStatus {
    #[default]
    Solved,
    MaxIter,
    Infeasible,
}

/// Problems the solver refuses to start on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpError {
    CapacityExceeded { n: usize, m: usize },
    InvertedBounds { id: usize },
    NotPositiveDefinite,
    NonFinite,
}

impl core::fmt::Display for QpError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            QpError::CapacityExceeded { n, m } => {
                write!(f, "problem size n={n}, m={m} exceeds solver capacity")
            }
            QpError::InvertedBounds { id } => {
                write!(f, "constraint {id} has lower bound above upper bound")
            }
            QpError::NotPositiveDefinite => f.write_str("hessian is not positive definite"),
            QpError::NonFinite => f.write_str("problem data contains NaN or infinite entries"),
        }
    }
}

/// Where the next solve starts from.
#[derive(Clone, Copy, Debug)]
pub enum WarmStart<'a> {
    /// Empty working set.
    Cold,
    /// The working set left by the previous solve on this solver.
    Previous,
    /// An explicit working set of length `n + m`.
    Given(&'a [ConstraintStatus]),
}

/// Problem data with fixed capacity.
#[derive(Clone, Debug)]
pub struct QpProblem {
    n: usize,
    m: usize,
    cap_n: usize,
    cap_m: usize,
    h: Vec<f64>,
    g: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    c: Vec<f64>,
    c_lb: Vec<f64>,
    c_ub: Vec<f64>,
}

impl QpProblem {
    /// Storage for up to `cap_n` variables and `cap_m` general rows. The
    /// active size starts at the full capacity with `H = 0`, `g = 0`,
    /// infinite bounds and `C = 0`.
    pub fn with_capacity(cap_n: usize, cap_m: usize) -> Self {
        QpProblem {
            n: cap_n,
            m: cap_m,
            cap_n,
            cap_m,
            h: vec![0.0; cap_n * cap_n],
            g: vec![0.0; cap_n],
            lb: vec![f64::NEG_INFINITY; cap_n],
            ub: vec![f64::INFINITY; cap_n],
            c: vec![0.0; cap_m * cap_n],
            c_lb: vec![f64::NEG_INFINITY; cap_m],
            c_ub: vec![f64::INFINITY; cap_m],
        }
    }

    pub fn new(n: usize, m: usize) -> Self {
        Self::with_capacity(n, m)
    }

    /// Changes the active dimensions and resets all data to the defaults of
    /// [`QpProblem::with_capacity`].
    pub fn resize(&mut self, n: usize, m: usize) -> Result<(), QpError> {
        if n > self.cap_n || m > self.cap_m {
            return Err(QpError::CapacityExceeded { n, m });
        }
        self.n = n;
        self.m = m;
        self.h[..n * n].fill(0.0);
        self.g[..n].fill(0.0);
        self.lb[..n].fill(f64::NEG_INFINITY);
        self.ub[..n].fill(f64::INFINITY);
        self.c[..m * n].fill(0.0);
        self.c_lb[..m].fill(f64::NEG_INFINITY);
        self.c_ub[..m].fill(f64::INFINITY);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn capacity(&self) -> (usize, usize) {
        (self.cap_n, self.cap_m)
    }

    /// Bytes held by the problem buffers.
    pub fn footprint_bytes(&self) -> usize {
        let floats = self.h.len()
            + self.g.len()
            + self.lb.len()
            + self.ub.len()
            + self.c.len()
            + self.c_lb.len()
            + self.c_ub.len();
        floats * core::mem::size_of::<f64>() + core::mem::size_of::<Self>()
    }

    /// Row-major `n x n` Hessian.
    pub fn h(&self) -> &[f64] {
        &self.h[..self.n * self.n]
    }

    pub fn h_mut(&mut self) -> &mut [f64] {
        let n = self.n;
        &mut self.h[..n * n]
    }

    pub fn g(&self) -> &[f64] {
        &self.g[..self.n]
    }

    pub fn g_mut(&mut self) -> &mut [f64] {
        let n = self.n;
        &mut self.g[..n]
    }

    pub fn lb(&self) -> &[f64] {
        &self.lb[..self.n]
    }

    pub fn lb_mut(&mut self) -> &mut [f64] {
        let n = self.n;
        &mut self.lb[..n]
    }

    pub fn ub(&self) -> &[f64] {
        &self.ub[..self.n]
    }

    pub fn ub_mut(&mut self) -> &mut [f64] {
        let n = self.n;
        &mut self.ub[..n]
    }

    /// Row-major `m x n` constraint matrix.
    pub fn c(&self) -> &[f64] {
        &self.c[..self.m * self.n]
    }

    pub fn c_mut(&mut self) -> &mut [f64] {
        let len = self.m * self.n;
        &mut self.c[..len]
    }

    pub fn c_lb(&self) -> &[f64] {
        &self.c_lb[..self.m]
    }

    pub fn c_lb_mut(&mut self) -> &mut [f64] {
        let m = self.m;
        &mut self.c_lb[..m]
    }

    pub fn c_ub(&self) -> &[f64] {
        &self.c_ub[..self.m]
    }

    pub fn c_ub_mut(&mut self) -> &mut [f64] {
        let m = self.m;
        &mut self.c_ub[..m]
    }

    #[inline]
    pub fn h_at(&self, i: usize, j: usize) -> f64 {
        self.h[i * self.n + j]
    }

    /// Row `k` of `C`.
    #[inline]
    pub fn c_row(&self, k: usize) -> &[f64] {
        &self.c[k * self.n..(k + 1) * self.n]
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut f = 0.0;
        for i in 0..n {
            let hx = dot(&self.h[i * n..(i + 1) * n], x);
            f += x[i] * (0.5 * hx + self.g[i]);
        }
        f
    }

    /// Checks finiteness of `H`, `g`, `C` and the ordering of every bound pair.
    pub fn validate(&self) -> Result<(), QpError> {
        if !(self
            .h()
            .iter()
            .chain(self.g())
            .chain(self.c())
            .all(|v| v.is_finite()))
        {
            return Err(QpError::NonFinite);
        }
        for i in 0..self.n {
            let (l, u) = (self.lb[i], self.ub[i]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(QpError::NonFinite);
            }
            if l > u {
                return Err(QpError::InvertedBounds { id: i });
            }
        }
        for k in 0..self.m {
            let (l, u) = (self.c_lb[k], self.c_ub[k]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(QpError::NonFinite);
            }
            if l > u {
                return Err(QpError::InvertedBounds { id: self.n + k });
            }
        }
        Ok(())
    }

    /// Value of the bound of constraint `id` on `side` (which must be active).
    fn bound(&self, id: usize, side: ConstraintStatus) -> f64 {
        let (lo, hi) = if id < self.n {
            (self.lb[id], self.ub[id])
        } else {
            (self.c_lb[id - self.n], self.c_ub[id - self.n])
        };
        match side {
            ConstraintStatus::AtLower => lo,
            _ => hi,
        }
    }
}

/// KKT residuals of a returned solution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResidual {
    /// `||H x + g + y_box + C' y_gen||_inf / (1 + ||g||_inf)`
    pub stationarity: f64,
    /// Largest bound violation.
    pub primal: f64,
    /// Largest `|y_i| * slack_i` over all constraints.
    pub complementarity: f64,
    /// Largest multiplier of the wrong sign (lower <= 0, upper >= 0).
    pub dual_sign: f64,
}

#[derive(Clone, Debug, Default)]
pub struct QpSolution {
    pub x_opt: Vec<f64>,
    /// Status of each constraint, bounds first, then the rows of `C`.
    pub active_set: Vec<ConstraintStatus>,
    /// Multipliers in the convention `H x + g + y_box + C' y_gen = 0`:
    /// nonnegative at upper bounds, nonpositive at lower bounds.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub status: QpStatus,
}

impl QpSolution {
    pub fn kkt_residual(&self, prob: &QpProblem) -> KktResidual {
        let (n, m) = (prob.n(), prob.m());
        let x = &self.x_opt[..n];
        let y = &self.multipliers[..n + m];
        let mut r = KktResidual::default();
        let gnorm = prob.g().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for i in 0..n {
            let mut s = dot(&prob.h()[i * n..(i + 1) * n], x) + prob.g()[i] + y[i];
            for k in 0..m {
                s += prob.c_row(k)[i] * y[n + k];
            }
            r.stationarity = r.stationarity.max(s.abs());
        }
        r.stationarity /= 1.0 + gnorm;
        for id in 0..n + m {
            let (v, lo, hi) = if id < n {
                (x[id], prob.lb()[id], prob.ub()[id])
            } else {
                let k = id - n;
                (dot(prob.c_row(k), x), prob.c_lb()[k], prob.c_ub()[k])
            };
            r.primal = r.primal.max(lo - v).max(v - hi);
            let yi = y[id];
            let slack = if yi > 0.0 {
                hi - v
            } else if yi < 0.0 {
                v - lo
            } else {
                0.0
            };
            if slack.is_finite() {
                r.complementarity = r.complementarity.max((yi * slack).abs());
            } else if yi != 0.0 {
                r.complementarity = f64::INFINITY;
            }
            match self.active_set[id] {
                ConstraintStatus::AtLower => r.dual_sign = r.dual_sign.max(yi),
                ConstraintStatus::AtUpper => r.dual_sign = r.dual_sign.max(-yi),
                ConstraintStatus::Inactive => r.dual_sign = r.dual_sign.max(yi.abs()),
            }
        }
        r.primal = r.primal.max(0.0);
        r
    }
}

/// Result of a factorization attempt.
enum Factor {
    Ok,
    Hessian,
    /// Position in the general working list whose row is numerically
    /// dependent on the rows before it (or on the fixed variables).
    DependentRow(usize),
}

/// Active-set solver with preallocated workspace.
#[derive(Clone, Debug)]
pub struct QpSolver {
    cap_n: usize,
    cap_m: usize,
    n: usize,
    m: usize,
    status: Vec<ConstraintStatus>,
    /// Multipliers of the working set in the `normal' x >= b` orientation.
    lambda: Vec<f64>,
    free: Vec<usize>,
    nf: usize,
    free_pos: Vec<usize>,
    general: Vec<usize>,
    ng: usize,
    l_ff: Vec<f64>,
    y_cols: Vec<f64>,
    s_chol: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
    rho: Vec<f64>,
    tmp_f: Vec<f64>,
    tmp_g: Vec<f64>,
    cx: Vec<f64>,
    solution: QpSolution,
    max_iter_factor: usize,
}

impl QpSolver {
    pub fn new(cap_n: usize, cap_m: usize) -> Self {
        let nm = cap_n + cap_m;
        let kmax = cap_m.min(cap_n);
        QpSolver {
            cap_n,
            cap_m,
            n: 0,
            m: 0,
            status: vec![ConstraintStatus::Inactive; nm],
            lambda: vec![0.0; nm],
            free: vec![0; cap_n],
            nf: 0,
            free_pos: vec![usize::MAX; cap_n],
            general: vec![0; kmax],
            ng: 0,
            l_ff: vec![0.0; cap_n * cap_n],
            y_cols: vec![0.0; kmax * cap_n],
            s_chol: vec![0.0; kmax * kmax],
            x: vec![0.0; cap_n],
            z: vec![0.0; cap_n],
            rho: vec![0.0; nm],
            tmp_f: vec![0.0; cap_n],
            tmp_g: vec![0.0; kmax.max(1)],
            cx: vec![0.0; cap_m],
            solution: QpSolution {
                x_opt: vec![0.0; cap_n],
                active_set: vec![ConstraintStatus::Inactive; nm],
                multipliers: vec![0.0; nm],
                iterations: 0,
                status: QpStatus::Solved,
            },
            max_iter_factor: 20,
        }
    }

    pub fn capacity(&self) -> (usize, usize) {
        (self.cap_n, self.cap_m)
    }

    /// Bytes held by the solver workspace.
    pub fn footprint_bytes(&self) -> usize {
        let f = core::mem::size_of::<f64>();
        let u = core::mem::size_of::<usize>();
        let s = core::mem::size_of::<ConstraintStatus>();
        let floats = self.lambda.len()
            + self.l_ff.len()
            + self.y_cols.len()
            + self.s_chol.len()
            + self.x.len()
            + self.z.len()
            + self.rho.len()
            + self.tmp_f.len()
            + self.tmp_g.len()
            + self.cx.len()
            + self.solution.x_opt.len()
            + self.solution.multipliers.len();
        let usizes = self.free.len() + self.free_pos.len() + self.general.len();
        let statuses = self.status.len() + self.solution.active_set.len();
        floats * f + usizes * u + statuses * s + core::mem::size_of::<Self>()
    }

    pub fn solution(&self) -> &QpSolution {
        &self.solution
    }

    /// Working set carried into the next [`WarmStart::Previous`] solve.
    pub fn working_set(&self) -> &[ConstraintStatus] {
        &self.status[..self.n + self.m]
    }

    /// Mutable access to the carried working set, e.g. to shift it along a
    /// receding horizon. Entries that are inconsistent with the next problem
    /// (infinite bound) are ignored at warm start.
    pub fn working_set_mut(&mut self) -> &mut [ConstraintStatus] {
        let len = self.n + self.m;
        &mut self.status[..len]
    }

    pub fn clear_working_set(&mut self) {
        self.status.fill(ConstraintStatus::Inactive);
    }

    pub fn solve(&mut self, prob: &QpProblem, warm: WarmStart<'_>) -> Result<&QpSolution, QpError> {
        let (n, m) = (prob.n(), prob.m());
        if n > self.cap_n || m > self.cap_m {
            return Err(QpError::CapacityExceeded { n, m });
        }
        prob.validate()?;

        match warm {
            WarmStart::Cold => self.status.fill(ConstraintStatus::Inactive),
            WarmStart::Previous => {
                if self.n != n || self.m != m {
                    self.status.fill(ConstraintStatus::Inactive);
                }
            }
            WarmStart::Given(ws) => {
                self.status.fill(ConstraintStatus::Inactive);
                if ws.len() == n + m {
                    self.status[..n + m].copy_from_slice(ws);
                }
            }
        }
        self.n = n;
        self.m = m;
        self.lambda[..n + m].fill(0.0);
        // Drop entries whose bound is infinite.
        for id in 0..n + m {
            let st = self.status[id];
            if st.is_active() && !prob.bound(id, st).is_finite() {
                self.status[id] = ConstraintStatus::Inactive;
            }
        }

        let status = self.run(prob)?;
        self.write_solution(prob, status);
        Ok(&self.solution)
    }

    fn run(&mut self, prob: &QpProblem) -> Result<QpStatus, QpError> {
        let (n, m) = (prob.n(), prob.m());
        let max_iter = self.max_iter_factor * (n + m).max(1);
        let mut iterations = 0usize;

        // Establish a dual feasible start: minimizer over the working set with
        // nonnegative multipliers.
        self.rebuild_general_list(prob);
        loop {
            match self.factor(prob) {
                Factor::Ok => {}
                Factor::Hessian => return Err(QpError::NotPositiveDefinite),
                Factor::DependentRow(pos) => {
                    let id = n + self.general[pos];
                    self.status[id] = ConstraintStatus::Inactive;
                    self.rebuild_general_list(prob);
                    continue;
                }
            }
            self.solve_eqp(prob);
            let mut worst = -DUAL_TOL;
            let mut drop = None;
            for id in 0..n + m {
                if self.status[id].is_active() && self.lambda[id] < worst {
                    worst = self.lambda[id];
                    drop = Some(id);
                }
            }
            match drop {
                Some(id) => {
                    self.status[id] = ConstraintStatus::Inactive;
                    self.lambda[id] = 0.0;
                    if id >= n {
                        self.rebuild_general_list(prob);
                    }
                    iterations += 1;
                }
                None => break,
            }
        }
        for id in 0..n + m {
            if self.status[id].is_active() {
                self.lambda[id] = self.lambda[id].max(0.0);
            }
        }

        let hmax = (0..n)
            .map(|i| prob.h_at(i, i))
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);

        while let Some((p, side, mut slack)) = self.most_violated(prob) {
            self.status[p] = ConstraintStatus::Inactive;
            let sigma = side.sign();
            let mut lambda_p = 0.0;
            loop {
                if iterations >= max_iter {
                    self.solution.iterations = iterations;
                    return Ok(QpStatus::MaxIter);
                }
                self.direction(prob, p, sigma);
                let nz = self.normal_dot_z(prob, p, sigma);
                let nn = self.normal_norm_sq(prob, p);
                let t_primal = if nz > 1e-13 * nn / hmax {
                    -slack / nz
                } else {
                    f64::INFINITY
                };

                let mut t_dual = f64::INFINITY;
                let mut drop = None;
                for id in 0..n + m {
                    if self.status[id].is_active() && self.rho[id] < -RATIO_TOL {
                        let t = self.lambda[id] / -self.rho[id];
                        if t < t_dual {
                            t_dual = t;
                            drop = Some(id);
                        }
                    }
                }

                if t_primal == f64::INFINITY && t_dual == f64::INFINITY {
                    self.solution.iterations = iterations;
                    return Ok(QpStatus::Infeasible);
                }

                let t = t_primal.min(t_dual);
                if t_primal.is_finite() {
                    for i in 0..n {
                        self.x[i] += t * self.z[i];
                    }
                }
                for id in 0..n + m {
                    if self.status[id].is_active() {
                        self.lambda[id] = (self.lambda[id] + t * self.rho[id]).max(0.0);
                    }
                }
                lambda_p += t;
                iterations += 1;

                if t_dual < t_primal {
                    let j = drop.expect("dual step without blocking constraint");
                    self.status[j] = ConstraintStatus::Inactive;
                    self.lambda[j] = 0.0;
                    if t_primal.is_finite() {
                        slack += t * nz;
                    }
                    if j >= n {
                        self.rebuild_general_list(prob);
                    }
                    match self.factor(prob) {
                        Factor::Ok => {}
                        Factor::Hessian => return Err(QpError::NotPositiveDefinite),
                        Factor::DependentRow(_) => {
                            self.solution.iterations = iterations;
                            return Ok(QpStatus::MaxIter);
                        }
                    }
                } else {
                    self.status[p] = side;
                    self.lambda[p] = lambda_p;
                    if p < n {
                        self.x[p] = prob.bound(p, side);
                    } else {
                        self.rebuild_general_list(prob);
                    }
                    match self.factor(prob) {
                        Factor::Ok => {}
                        Factor::Hessian => return Err(QpError::NotPositiveDefinite),
                        Factor::DependentRow(_) => {
                            self.solution.iterations = iterations;
                            return Ok(QpStatus::MaxIter);
                        }
                    }
                    break;
                }
            }
        }

        // Polish on the final working set.
        self.solve_eqp(prob);
        self.solution.iterations = iterations;
        Ok(QpStatus::Solved)
    }

    fn write_solution(&mut self, prob: &QpProblem, status: QpStatus) {
        let (n, m) = (prob.n(), prob.m());
        let sol = &mut self.solution;
        sol.status = status;
        // Resizing within the reserved capacity never reallocates.
        sol.x_opt.resize(n, 0.0);
        sol.active_set.resize(n + m, ConstraintStatus::Inactive);
        sol.multipliers.resize(n + m, 0.0);
        sol.x_opt.copy_from_slice(&self.x[..n]);
        sol.active_set.copy_from_slice(&self.status[..n + m]);
        for id in 0..n + m {
            let st = self.status[id];
            sol.multipliers[id] = if st.is_active() {
                -st.sign() * self.lambda[id]
            } else {
                0.0
            };
        }
    }

    fn rebuild_general_list(&mut self, prob: &QpProblem) {
        let n = prob.n();
        self.ng = 0;
        for k in 0..prob.m() {
            if self.status[n + k].is_active() && self.ng < self.general.len() {
                self.general[self.ng] = k;
                self.ng += 1;
            } else if self.status[n + k].is_active() {
                self.status[n + k] = ConstraintStatus::Inactive;
            }
        }
    }

    /// Factors the free block of `H` and the Schur complement of the active
    /// general rows.
    fn factor(&mut self, prob: &QpProblem) -> Factor {
        let n = prob.n();
        self.nf = 0;
        for i in 0..n {
            if self.status[i].is_active() {
                self.free_pos[i] = usize::MAX;
            } else {
                self.free_pos[i] = self.nf;
                self.free[self.nf] = i;
                self.nf += 1;
            }
        }
        let nf = self.nf;
        let mut hmax = 0.0_f64;
        for a in 0..nf {
            let i = self.free[a];
            for b in 0..=a {
                self.l_ff[a * nf + b] = prob.h_at(i, self.free[b]);
            }
            hmax = hmax.max(self.l_ff[a * nf + a].abs());
        }
        if !cholesky_in_place(
            &mut self.l_ff[..nf * nf],
            nf,
            1e-14 * hmax.max(f64::MIN_POSITIVE),
        ) {
            return Factor::Hessian;
        }

        let ng = self.ng;
        for k in 0..ng {
            let row = prob.c_row(self.general[k]);
            let sigma = self.status[n + self.general[k]].sign();
            let col = &mut self.y_cols[k * self.cap_n..k * self.cap_n + nf];
            for a in 0..nf {
                col[a] = sigma * row[self.free[a]];
            }
            forward_subst(&self.l_ff[..nf * nf], nf, col);
        }
        for a in 0..ng {
            for b in 0..=a {
                let ya = &self.y_cols[a * self.cap_n..a * self.cap_n + nf];
                let yb = &self.y_cols[b * self.cap_n..b * self.cap_n + nf];
                self.s_chol[a * ng + b] = dot(ya, yb);
            }
        }
        // Incremental Cholesky so a dependent row can be identified.
        for j in 0..ng {
            let diag = self.s_chol[j * ng + j];
            let mut d = diag;
            for k in 0..j {
                let l = self.s_chol[j * ng + k];
                d -= l * l;
            }
            if !(d > 1e-12 * diag.max(f64::MIN_POSITIVE)) || diag <= 0.0 {
                return Factor::DependentRow(j);
            }
            let d = libm::sqrt(d);
            self.s_chol[j * ng + j] = d;
            for i in (j + 1)..ng {
                let mut s = self.s_chol[i * ng + j];
                for k in 0..j {
                    s -= self.s_chol[i * ng + k] * self.s_chol[j * ng + k];
                }
                self.s_chol[i * ng + j] = s / d;
            }
        }
        Factor::Ok
    }

    /// Minimizer over the working set, with its multipliers.
    fn solve_eqp(&mut self, prob: &QpProblem) {
        let n = prob.n();
        let (nf, ng) = (self.nf, self.ng);
        for i in 0..n {
            let st = self.status[i];
            if st.is_active() {
                self.x[i] = prob.bound(i, st);
            }
        }
        // r_F = -g_F - H_FB x_B
        for a in 0..nf {
            let i = self.free[a];
            let mut r = -prob.g()[i];
            for j in 0..n {
                if self.status[j].is_active() {
                    r -= prob.h_at(i, j) * self.x[j];
                }
            }
            self.tmp_f[a] = r;
        }
        forward_subst(&self.l_ff[..nf * nf], nf, &mut self.tmp_f[..nf]);
        // S lambda_G = b~ - Y' r~
        for k in 0..ng {
            let gk = self.general[k];
            let id = n + gk;
            let st = self.status[id];
            let sigma = st.sign();
            let row = prob.c_row(gk);
            let mut b = sigma * prob.bound(id, st);
            for j in 0..n {
                if self.status[j].is_active() {
                    b -= sigma * row[j] * self.x[j];
                }
            }
            let y = &self.y_cols[k * self.cap_n..k * self.cap_n + nf];
            self.tmp_g[k] = b - dot(y, &self.tmp_f[..nf]);
        }
        cholesky_solve(&self.s_chol[..ng * ng], ng, &mut self.tmp_g[..ng]);
        for k in 0..ng {
            self.lambda[n + self.general[k]] = self.tmp_g[k];
        }
        // x_F = L^-T (r~ + Y lambda_G)
        for k in 0..ng {
            let lk = self.tmp_g[k];
            let y = &self.y_cols[k * self.cap_n..k * self.cap_n + nf];
            for a in 0..nf {
                self.tmp_f[a] += lk * y[a];
            }
        }
        backward_subst(&self.l_ff[..nf * nf], nf, &mut self.tmp_f[..nf]);
        for a in 0..nf {
            self.x[self.free[a]] = self.tmp_f[a];
        }
        // Bound multipliers from the fixed rows.
        for i in 0..n {
            let st = self.status[i];
            if !st.is_active() {
                continue;
            }
            let mut s = dot(&prob.h()[i * n..(i + 1) * n], &self.x[..n]) + prob.g()[i];
            for k in 0..ng {
                let gk = self.general[k];
                let sg = self.status[n + gk].sign();
                s -= self.lambda[n + gk] * sg * prob.c_row(gk)[i];
            }
            self.lambda[i] = st.sign() * s;
        }
    }

    /// Primal direction `z` and multiplier rates `rho` for raising the
    /// multiplier of constraint `p` (normal `sigma * a_p`).
    fn direction(&mut self, prob: &QpProblem, p: usize, sigma: f64) {
        let n = prob.n();
        let (nf, ng) = (self.nf, self.ng);
        // v_F
        if p < n {
            self.tmp_f[..nf].fill(0.0);
            self.tmp_f[self.free_pos[p]] = sigma;
        } else {
            let row = prob.c_row(p - n);
            for a in 0..nf {
                self.tmp_f[a] = sigma * row[self.free[a]];
            }
        }
        forward_subst(&self.l_ff[..nf * nf], nf, &mut self.tmp_f[..nf]);
        for k in 0..ng {
            let y = &self.y_cols[k * self.cap_n..k * self.cap_n + nf];
            self.tmp_g[k] = -dot(y, &self.tmp_f[..nf]);
        }
        cholesky_solve(&self.s_chol[..ng * ng], ng, &mut self.tmp_g[..ng]);
        for k in 0..ng {
            let rk = self.tmp_g[k];
            let y = &self.y_cols[k * self.cap_n..k * self.cap_n + nf];
            for a in 0..nf {
                self.tmp_f[a] += rk * y[a];
            }
        }
        backward_subst(&self.l_ff[..nf * nf], nf, &mut self.tmp_f[..nf]);
        self.z[..n].fill(0.0);
        for a in 0..nf {
            self.z[self.free[a]] = self.tmp_f[a];
        }
        self.rho[..n + prob.m()].fill(0.0);
        for k in 0..ng {
            self.rho[n + self.general[k]] = self.tmp_g[k];
        }
        for i in 0..n {
            let st = self.status[i];
            if !st.is_active() {
                continue;
            }
            let mut s = 0.0;
            for a in 0..nf {
                s += prob.h_at(i, self.free[a]) * self.tmp_f[a];
            }
            for k in 0..ng {
                let gk = self.general[k];
                let sg = self.status[n + gk].sign();
                s -= self.tmp_g[k] * sg * prob.c_row(gk)[i];
            }
            if p >= n {
                s -= sigma * prob.c_row(p - n)[i];
            }
            self.rho[i] = st.sign() * s;
        }
    }

    fn normal_dot_z(&self, prob: &QpProblem, p: usize, sigma: f64) -> f64 {
        let n = prob.n();
        if p < n {
            sigma * self.z[p]
        } else {
            sigma * dot(prob.c_row(p - n), &self.z[..n])
        }
    }

    fn normal_norm_sq(&self, prob: &QpProblem, p: usize) -> f64 {
        let n = prob.n();
        if p < n {
            1.0
        } else {
            let r = prob.c_row(p - n);
            dot(r, r)
        }
    }

    /// Most violated inactive constraint as `(id, side, slack)`, smallest id
    /// on ties.
    fn most_violated(&mut self, prob: &QpProblem) -> Option<(usize, ConstraintStatus, f64)> {
        let (n, m) = (prob.n(), prob.m());
        let mut best: Option<(usize, ConstraintStatus, f64)> = None;
        let mut consider = |id: usize, side: ConstraintStatus, slack: f64, bound: f64| {
            let tol = VIOLATION_TOL.max(1e-14 * bound.abs());
            if slack < -tol && best.is_none_or(|(_, _, s)| slack < s) {
                best = Some((id, side, slack));
            }
        };
        for i in 0..n {
            if self.status[i].is_active() {
                continue;
            }
            let (lo, hi) = (prob.lb()[i], prob.ub()[i]);
            if lo.is_finite() {
                consider(i, ConstraintStatus::AtLower, self.x[i] - lo, lo);
            }
            if hi.is_finite() {
                consider(i, ConstraintStatus::AtUpper, hi - self.x[i], hi);
            }
        }
        for k in 0..m {
            self.cx[k] = dot(prob.c_row(k), &self.x[..n]);
        }
        for k in 0..m {
            if self.status[n + k].is_active() {
                continue;
            }
            let (lo, hi) = (prob.c_lb()[k], prob.c_ub()[k]);
            if lo.is_finite() {
                consider(n + k, ConstraintStatus::AtLower, self.cx[k] - lo, lo);
            }
            if hi.is_finite() {
                consider(n + k, ConstraintStatus::AtUpper, hi - self.cx[k], hi);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_problem(h: &[f64], g: &[f64], lb: &[f64], ub: &[f64]) -> QpProblem {
        let n = g.len();
        let mut p = QpProblem::new(n, 0);
        p.h_mut().copy_from_slice(h);
        p.g_mut().copy_from_slice(g);
        p.lb_mut().copy_from_slice(lb);
        p.ub_mut().copy_from_slice(ub);
        p
    }

    #[test]
    fn unconstrained_minimizer() {
        let p = box_problem(&[1.0, 0.0, 0.0, 1.0], &[1.0, -2.0], &[-10.0; 2], &[10.0; 2]);
        let mut s = QpSolver::new(2, 0);
        let sol = s.solve(&p, WarmStart::Cold).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x_opt[0] + 1.0).abs() < 1e-14);
        assert!((sol.x_opt[1] - 2.0).abs() < 1e-14);
        assert!(sol.active_set.iter().all(|s| !s.is_active()));
    }

    #[test]
    fn clipped_scalar() {
        let p = box_problem(&[1.0], &[-3.0], &[-1.0], &[1.0]);
        let mut s = QpSolver::new(1, 0);
        let sol = s.solve(&p, WarmStart::Cold).unwrap();
        assert_eq!(sol.x_opt[0], 1.0);
        assert_eq!(sol.active_set[0], ConstraintStatus::AtUpper);
        assert!((sol.multipliers[0] - 2.0).abs() < 1e-14);
        let r = sol.kkt_residual(&p);
        assert!(r.stationarity < 1e-14 && r.dual_sign == 0.0);
    }

    #[test]
    fn general_row_active() {
        // min 1/2|x|^2 - x1 - x2  s.t.  x1 + x2 <= 1
        let mut p = QpProblem::new(2, 1);
        p.h_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        p.g_mut().copy_from_slice(&[-1.0, -1.0]);
        p.c_mut().copy_from_slice(&[1.0, 1.0]);
        p.c_ub_mut()[0] = 1.0;
        let mut s = QpSolver::new(2, 1);
        let sol = s.solve(&p, WarmStart::Cold).unwrap();
        assert!((sol.x_opt[0] - 0.5).abs() < 1e-14 && (sol.x_opt[1] - 0.5).abs() < 1e-14);
        assert_eq!(sol.active_set[2], ConstraintStatus::AtUpper);
        assert!((sol.multipliers[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn infeasible_rows_are_reported() {
        // x <= -1 through C, x >= 0 through the box
        let mut p = QpProblem::new(1, 1);
        p.h_mut()[0] = 1.0;
        p.lb_mut()[0] = 0.0;
        p.ub_mut()[0] = 5.0;
        p.c_mut()[0] = 1.0;
        p.c_ub_mut()[0] = -1.0;
        let mut s = QpSolver::new(1, 1);
        assert_eq!(
            s.solve(&p, WarmStart::Cold).unwrap().status,
            QpStatus::Infeasible
        );
    }

    #[test]
    fn warm_resolve_takes_no_iterations() {
        let p = box_problem(&[2.0, 0.5, 0.5, 1.0], &[-8.0, 3.0], &[-1.0; 2], &[1.0; 2]);
        let mut s = QpSolver::new(2, 0);
        let cold = s.solve(&p, WarmStart::Cold).unwrap().clone();
        assert!(cold.iterations > 0);
        let warm = s.solve(&p, WarmStart::Previous).unwrap();
        assert!(warm.iterations <= 1);
        assert_eq!(warm.x_opt, cold.x_opt);
    }

    #[test]
    fn input_errors() {
        let mut s = QpSolver::new(2, 0);
        let p = QpProblem::new(3, 0);
        assert_eq!(
            s.solve(&p, WarmStart::Cold).unwrap_err(),
            QpError::CapacityExceeded { n: 3, m: 0 }
        );
        let mut p = box_problem(&[1.0, 0.0, 0.0, 1.0], &[0.0; 2], &[1.0, 0.0], &[0.0; 2]);
        assert_eq!(
            s.solve(&p, WarmStart::Cold).unwrap_err(),
            QpError::InvertedBounds { id: 0 }
        );
        p.lb_mut()[0] = 0.0;
        p.g_mut()[1] = f64::NAN;
        assert_eq!(
            s.solve(&p, WarmStart::Cold).unwrap_err(),
            QpError::NonFinite
        );
        p.g_mut()[1] = 0.0;
        p.h_mut()[3] = -1.0;
        assert_eq!(
            s.solve(&p, WarmStart::Cold).unwrap_err(),
            QpError::NotPositiveDefinite
        );
    }
}
