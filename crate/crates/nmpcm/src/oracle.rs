//! Reference QP solutions by active-set enumeration, and a seeded generator
//! of random feasible problems.
//!
//! Working sets grow one constraint at a time. If the equality-constrained
//! minimizer of a set `W` violates some constraints, the optimum of the
//! problem with `W` held at equality has at least one of those violated sides
//! active, so only violated sides are branched on. Adding a constraint can
//! only raise the equality-constrained minimum, so sets are expanded in
//! increasing objective order and the first feasible minimizer reached is the
//! global one.
//!
//! Each equality-constrained subproblem is solved in range-space form,
//! `x = x_u + H^-1 A' mu` with `(A H^-1 A') mu = b - A x_u`, from a dense
//! inverse of `H` computed once per problem.

use nalgebra::{DMatrix, DVector};
use nmpcm_core::{ConstraintStatus, QpProblem, QpSolution, QpSolver, WarmStart};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

/// Feasibility slack accepted for a candidate point.
const FEAS_TOL: f64 = 1e-9;
/// Working sets whose reduced matrix has a relative pivot below this are
/// treated as linearly dependent.
const DEPENDENCE_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub active: Vec<(usize, ConstraintStatus)>,
    /// Working sets whose subproblem was solved.
    pub visited: usize,
}

type Side = (usize, ConstraintStatus);

struct Node {
    objective: f64,
    set: Vec<Side>,
    /// Constraint values `N x` at the subproblem minimizer.
    values: DVector<f64>,
    mu: DVector<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Reversed so the max-heap pops the smallest objective.
    fn cmp(&self, other: &Self) -> Ordering {
        other.objective.total_cmp(&self.objective)
    }
}

struct Enumerator<'a> {
    prob: &'a QpProblem,
    hinv: DMatrix<f64>,
    /// Unconstrained minimizer and its objective.
    x_u: DVector<f64>,
    f_u: f64,
    /// All constraint normals as rows: identity then `C`.
    normals: DMatrix<f64>,
    /// `N H^-1 N'`.
    gram: DMatrix<f64>,
    /// `N x_u`.
    values_u: DVector<f64>,
    visited: usize,
}

impl Enumerator<'_> {
    fn bound(&self, (id, side): Side) -> f64 {
        let n = self.prob.n();
        let (lo, hi) = if id < n {
            (self.prob.lb()[id], self.prob.ub()[id])
        } else {
            (self.prob.c_lb()[id - n], self.prob.c_ub()[id - n])
        };
        if side == ConstraintStatus::AtLower {
            lo
        } else {
            hi
        }
    }

    /// Subproblem with every member of `set` at equality; `None` when the
    /// rows are dependent.
    fn solve(&mut self, set: Vec<Side>) -> Option<Node> {
        let k = set.len();
        let mut s = DMatrix::zeros(k, k);
        let mut r = DVector::zeros(k);
        for (a, &ca) in set.iter().enumerate() {
            for (b, &cb) in set.iter().enumerate() {
                s[(a, b)] = self.gram[(ca.0, cb.0)];
            }
            r[a] = self.bound(ca) - self.values_u[ca.0];
        }
        let scale = (0..k).map(|i| s[(i, i)]).fold(0.0_f64, f64::max);
        let chol = s.clone().cholesky()?;
        let l = chol.l_dirty();
        if (0..k).any(|i| l[(i, i)] * l[(i, i)] <= DEPENDENCE_TOL * scale) {
            return None;
        }
        let mu = chol.solve(&r);
        self.visited += 1;
        let mut values = self.values_u.clone();
        for (a, &ca) in set.iter().enumerate() {
            values.axpy(mu[a], &self.gram.column(ca.0), 1.0);
        }
        let objective = self.f_u + 0.5 * mu.dot(&(&s * &mu));
        Some(Node {
            objective,
            set,
            values,
            mu,
        })
    }

    fn violated(&self, node: &Node) -> Vec<Side> {
        let tol = |b: f64| FEAS_TOL * (1.0 + b.abs());
        let mut out = Vec::new();
        for id in 0..self.normals.nrows() {
            let v = node.values[id];
            let lo = self.bound((id, ConstraintStatus::AtLower));
            let hi = self.bound((id, ConstraintStatus::AtUpper));
            if v < lo - tol(lo) {
                out.push((id, ConstraintStatus::AtLower));
            } else if v > hi + tol(hi) {
                out.push((id, ConstraintStatus::AtUpper));
            }
        }
        out
    }

    fn point(&self, node: &Node) -> Vec<f64> {
        let mut x = self.x_u.clone();
        for (a, &(id, _)) in node.set.iter().enumerate() {
            let col = &self.hinv * self.normals.row(id).transpose();
            x.axpy(node.mu[a], &col, 1.0);
        }
        x.iter().copied().collect()
    }
}

/// Global minimizer of `prob`, or `None` when no working set yields a
/// feasible point or `H` is not positive definite.
pub fn enumerate(prob: &QpProblem) -> Option<OracleSolution> {
    let (n, m) = (prob.n(), prob.m());
    let h = DMatrix::from_row_slice(n, n, prob.h());
    let g = DVector::from_column_slice(prob.g());
    let hinv = h.clone().cholesky()?.inverse();
    let x_u = -(&hinv * &g);
    let f_u = 0.5 * g.dot(&x_u);
    let mut normals = DMatrix::zeros(n + m, n);
    for i in 0..n {
        normals[(i, i)] = 1.0;
    }
    for k in 0..m {
        for (j, v) in prob.c_row(k).iter().enumerate() {
            normals[(n + k, j)] = *v;
        }
    }
    let gram = &normals * &hinv * normals.transpose();
    let values_u = &normals * &x_u;
    let mut e = Enumerator {
        prob,
        hinv,
        x_u,
        f_u,
        normals,
        gram,
        values_u,
        visited: 0,
    };

    let mut seen: HashSet<Vec<Side>> = HashSet::new();
    let mut heap = BinaryHeap::new();
    heap.push(e.solve(Vec::new())?);
    while let Some(node) = heap.pop() {
        let violated = e.violated(&node);
        if violated.is_empty() {
            return Some(OracleSolution {
                x: e.point(&node),
                objective: node.objective,
                active: node.set,
                visited: e.visited,
            });
        }
        if node.set.len() == n {
            continue;
        }
        for c in violated {
            let mut set = node.set.clone();
            set.push(c);
            set.sort_by_key(|&(id, side)| (id, side as u8));
            if seen.insert(set.clone()) {
                if let Some(child) = e.solve(set) {
                    heap.push(child);
                }
            }
        }
    }
    None
}

/// Random strictly convex QP with `x = 0` strictly feasible:
/// `H = M'M + I`, Gaussian `g` and `C`, bounds on both sides of zero. Some
/// bounds are left one-sided.
pub fn random_qp(rng: &mut impl Rng, n: usize, m: usize) -> QpProblem {
    let mut p = QpProblem::new(n, m);
    let mat: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let h = p.h_mut();
    for i in 0..n {
        for j in 0..n {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for k in 0..n {
                s += mat[k * n + i] * mat[k * n + j];
            }
            h[i * n + j] = s;
        }
    }
    for v in p.g_mut() {
        *v = 5.0 * rng.sample::<f64, _>(StandardNormal);
    }
    for i in 0..n {
        p.lb_mut()[i] = -rng.random_range(0.2..2.0);
        p.ub_mut()[i] = rng.random_range(0.2..2.0);
        if rng.random_bool(0.15) {
            p.lb_mut()[i] = f64::NEG_INFINITY;
        }
    }
    for v in p.c_mut() {
        *v = rng.sample(StandardNormal);
    }
    for k in 0..m {
        p.c_lb_mut()[k] = -rng.random_range(0.2..2.0);
        p.c_ub_mut()[k] = rng.random_range(0.2..2.0);
        match rng.random_range(0..4) {
            0 => p.c_lb_mut()[k] = f64::NEG_INFINITY,
            1 => p.c_ub_mut()[k] = f64::INFINITY,
            _ => {}
        }
    }
    p
}

/// Outcome of comparing the solver with the oracle on one problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    /// `max_i |x_i - x*_i|`.
    pub x_error: f64,
    pub stationarity: f64,
    pub primal: f64,
    pub iterations: usize,
    pub solved: bool,
}

impl Comparison {
    pub fn passes(&self, x_tol: f64, kkt_tol: f64) -> bool {
        self.solved && self.x_error <= x_tol && self.stationarity <= kkt_tol && self.primal <= 1e-9
    }
}

pub fn compare(solver: &mut QpSolver, prob: &QpProblem) -> Comparison {
    let reference = enumerate(prob);
    let sol: &QpSolution = match solver.solve(prob, WarmStart::Cold) {
        Ok(s) => s,
        Err(_) => {
            return Comparison {
                x_error: f64::INFINITY,
                stationarity: f64::INFINITY,
                primal: f64::INFINITY,
                iterations: 0,
                solved: false,
            }
        }
    };
    let kkt = sol.kkt_residual(prob);
    let x_error = match &reference {
        Some(r) => {
            r.x.iter()
                .zip(&sol.x_opt)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        }
        None => f64::INFINITY,
    };
    Comparison {
        x_error,
        stationarity: kkt.stationarity,
        primal: kkt.primal,
        iterations: sol.iterations,
        solved: sol.status == nmpcm_core::QpStatus::Solved,
    }
}

/// Summary of a seeded batch of oracle comparisons.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub count: usize,
    pub passed: usize,
    pub max_x_error: f64,
    pub max_stationarity: f64,
    pub max_iterations: usize,
}

impl BenchReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.count
    }
}

pub const X_TOL: f64 = 1e-7;
pub const KKT_TOL: f64 = 1e-8;

/// Draws `count` problems from `seed`, each with a uniformly drawn size up to
/// `n` variables and `m` general rows, and compares each with the oracle.
pub fn bench(count: usize, n: usize, m: usize, seed: u64) -> BenchReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solver = QpSolver::new(n, m);
    let mut rep = BenchReport {
        count,
        ..BenchReport::default()
    };
    for _ in 0..count {
        let ni = rng.random_range(1..=n.max(1));
        let mi = rng.random_range(0..=m);
        let prob = random_qp(&mut rng, ni, mi);
        let c = compare(&mut solver, &prob);
        if c.passes(X_TOL, KKT_TOL) {
            rep.passed += 1;
        }
        rep.max_x_error = rep.max_x_error.max(c.x_error);
        rep.max_stationarity = rep.max_stationarity.max(c.stationarity);
        rep.max_iterations = rep.max_iterations.max(c.iterations);
    }
    rep
}
