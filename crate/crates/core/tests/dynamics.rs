#![allow(clippy::needless_range_loop)]

use nmpcm_core::model::{continuous_dynamics, idx, rk4_step, rk4_step_with_sensitivities};
use nmpcm_core::{ControlBounds, ControlInput, QuadParams, QuadState, StateJacobians, NU, NX};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-6;

fn random_sample(rng: &mut impl Rng) -> (QuadState, ControlInput) {
    let mut x = [0.0; NX];
    for v in &mut x[0..3] {
        *v = rng.random_range(-5.0..5.0);
    }
    for v in &mut x[3..6] {
        *v = rng.random_range(-0.3..0.3);
    }
    for v in &mut x[6..12] {
        *v = rng.random_range(-1.0..1.0);
    }
    let b = ControlBounds::default();
    let mut u = [0.0; NU];
    for (c, v) in u.iter_mut().enumerate() {
        *v = rng.random_range(b.lower.0[c]..b.upper.0[c]);
    }
    (QuadState(x), ControlInput(u))
}

/// Central differences of `rk4_step`, columns `0..12` for the state and
/// `12..16` for the control.
fn fd_jacobian(
    x: &QuadState,
    u: &ControlInput,
    p: &QuadParams,
    dt: f64,
    substeps: usize,
) -> [[f64; NX + NU]; NX] {
    let mut j = [[0.0; NX + NU]; NX];
    for c in 0..NX + NU {
        let (mut xp, mut xm, mut up, mut um) = (*x, *x, *u, *u);
        if c < NX {
            xp.0[c] += FD_STEP;
            xm.0[c] -= FD_STEP;
        } else {
            up.0[c - NX] += FD_STEP;
            um.0[c - NX] -= FD_STEP;
        }
        let fp = rk4_step(&xp, &up, p, dt, substeps);
        let fm = rk4_step(&xm, &um, p, dt, substeps);
        for i in 0..NX {
            j[i][c] = (fp.0[i] - fm.0[i]) / (2.0 * FD_STEP);
        }
    }
    j
}

fn entry(jac: &StateJacobians, i: usize, c: usize) -> f64 {
    if c < NX {
        jac.a[i][c]
    } else {
        jac.b[i][c - NX]
    }
}

#[test]
fn sensitivities_match_finite_differences() {
    let p = QuadParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut jac = StateJacobians::default();
    let mut worst = 0.0_f64;
    for sample in 0..1000 {
        let (x, u) = random_sample(&mut rng);
        rk4_step_with_sensitivities(&x, &u, &p, 0.05, 5, &mut jac);
        let fd = fd_jacobian(&x, &u, &p, 0.05, 5);
        for i in 0..NX {
            for c in 0..NX + NU {
                let (a, b) = (entry(&jac, i, c), fd[i][c]);
                let err = (a - b).abs();
                let ok = err <= 1e-7 || err <= 1e-4 * b.abs();
                assert!(
                    ok,
                    "sample {sample} entry ({i}, {c}): variational {a}, fd {b}"
                );
                worst = worst.max(err.min(err / b.abs().max(1e-300)));
            }
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn vanishing_step_gives_identity() {
    let p = QuadParams::default();
    let (x, u) = random_sample(&mut ChaCha8Rng::seed_from_u64(5));
    let mut jac = StateJacobians::default();
    rk4_step_with_sensitivities(&x, &u, &p, 1e-12, 1, &mut jac);
    for i in 0..NX {
        for j in 0..NX {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((jac.a[i][j] - expect).abs() <= 1e-9);
        }
        for c in 0..NU {
            assert!(jac.b[i][c].abs() <= 1e-9);
        }
    }
}

#[test]
fn hover_thrust_to_climb_rate() {
    let p = QuadParams::default();
    let x = QuadState::at_rest(0.0, 0.0, 1.0, 0.0);
    let mut jac = StateJacobians::default();
    rk4_step_with_sensitivities(&x, &p.hover_input(), &p, 0.05, 5, &mut jac);
    let b = jac.b[idx::DR][0];
    assert!((b - 0.023_696_7).abs() <= 0.01 * 0.023_696_7, "{b}");
    let fd = fd_jacobian(&x, &p.hover_input(), &p, 0.05, 5)[idx::DR][NX];
    assert!((b - fd).abs() < 1e-8);
}

#[test]
fn rk4_is_fourth_order() {
    let p = QuadParams::default();
    let x = QuadState([
        0.3, -0.2, 1.0, 0.25, -0.2, 0.4, 1.0, -0.5, 0.3, 0.8, -0.6, 0.5,
    ]);
    let u = ControlInput::new(23.0, 0.08, -0.06, 0.05);
    let dt = 0.5;
    let reference = rk4_step(&x, &u, &p, dt, 1024);
    let err = |s: usize| {
        let y = rk4_step(&x, &u, &p, dt, s);
        (0..NX)
            .map(|i| (y.0[i] - reference.0[i]).abs())
            .fold(0.0, f64::max)
    };
    let ratios: Vec<f64> = [2, 4, 8].iter().map(|&s| err(s) / err(2 * s)).collect();
    for r in &ratios {
        assert!((12.0..20.0).contains(r), "{ratios:?}");
    }
}

#[test]
fn hover_is_fixed_for_any_step() {
    let p = QuadParams::default();
    let x = QuadState::at_rest(1.0, -2.0, 3.0, 0.7);
    for dt in [1e-4, 0.01, 0.05, 0.1, 0.2] {
        for s in [1, 3, 5] {
            assert_eq!(rk4_step(&x, &p.hover_input(), &p, dt, s), x);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn step_composition_is_bitwise(seed in any::<u64>(), k in 1usize..8, dt in 0.001f64..0.2) {
        let p = QuadParams::default();
        let (x, u) = random_sample(&mut ChaCha8Rng::seed_from_u64(seed));
        let whole = rk4_step(&x, &u, &p, dt, 2 * k);
        let halves = rk4_step(&rk4_step(&x, &u, &p, dt / 2.0, k), &u, &p, dt / 2.0, k);
        prop_assert_eq!(whole, halves);
    }

    #[test]
    fn translational_acceleration_is_bounded(seed in any::<u64>(), phi in -3.2f64..3.2, theta in -3.2f64..3.2, psi in -3.2f64..3.2) {
        let p = QuadParams::default();
        let (mut x, u) = random_sample(&mut ChaCha8Rng::seed_from_u64(seed));
        x.0[idx::PHI] = phi;
        x.0[idx::THETA] = theta;
        x.0[idx::PSI] = psi;
        let d = continuous_dynamics(&x, &u, &p);
        let acc = (d[idx::DP].powi(2) + d[idx::DQ].powi(2) + d[idx::DR].powi(2)).sqrt();
        let bound = ControlBounds::default().upper.0[0] / p.mass + p.gravity;
        prop_assert!(acc <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn sensitivity_state_matches_plain_step(seed in any::<u64>(), s in 1usize..6) {
        let p = QuadParams::default();
        let (x, u) = random_sample(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut jac = StateJacobians::default();
        let y = rk4_step_with_sensitivities(&x, &u, &p, 0.05, s, &mut jac);
        prop_assert_eq!(y, rk4_step(&x, &u, &p, 0.05, s));
        prop_assert!(jac.is_finite());
    }
}

#[test]
fn free_fall_conserves_energy() {
    let p = QuadParams::default();
    let mut x = QuadState::at_rest(0.0, 0.0, 100.0, 0.3);
    x.0[idx::DP] = 2.0;
    x.0[idx::DQ] = -1.0;
    x.0[idx::DR] = 3.0;
    let energy = |s: &QuadState| {
        let v2 = s.0[idx::DP].powi(2) + s.0[idx::DQ].powi(2) + s.0[idx::DR].powi(2);
        0.5 * p.mass * v2 + p.mass * p.gravity * s.0[idx::R]
    };
    let e0 = energy(&x);
    let zero = ControlInput::default();
    for _ in 0..5000 {
        x = rk4_step(&x, &zero, &p, 1e-3, 1);
        assert!((energy(&x) - e0).abs() <= 1e-8 * e0.abs());
    }
}
