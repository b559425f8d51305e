#![allow(dead_code)]

use platoon_core::attack::{random_schedule, verify_budget, AttackBudget, AttackInterval, AttackSchedule};
use platoon_core::gain::{quadratic_root_magnitudes, Gain};
use platoon_core::linalg::Matrix;
use platoon_core::plant::VehicleState;
use platoon_core::scenario::bundled;
use platoon_core::sim::{self, Scenario, Trace};
use platoon_core::trigger::{
    dynamic_should_trigger, static_should_trigger, DynamicTriggerParams, SConstants, StaticTriggerParams,
};
use platoon_core::{Resolved, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config(name: &str) -> ScenarioConfig {
    ScenarioConfig::parse(bundled(name).expect("bundled scenario")).expect("bundled scenario parses")
}

pub fn resolve(name: &str) -> Resolved {
    config(name).resolve().expect("bundled scenario resolves")
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> Matrix<f64> {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-5.0..5.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Number of eigenvalues below `x`, from the signs of the `LDLᵀ` pivots of `A − xI`.
fn count_below(a: &Matrix<f64>, x: f64) -> usize {
    let n = a.rows();
    let mut l = vec![vec![0.0; n]; n];
    let mut d = vec![0.0; n];
    let mut negatives = 0;
    for j in 0..n {
        let mut dj = a[(j, j)] - x;
        for k in 0..j {
            dj -= l[j][k] * l[j][k] * d[k];
        }
        if dj == 0.0 {
            dj = -f64::EPSILON * (1.0 + x.abs());
        }
        d[j] = dj;
        if dj < 0.0 {
            negatives += 1;
        }
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[i][k] * l[j][k] * d[k];
            }
            l[i][j] = s / dj;
        }
    }
    negatives
}

/// Ascending eigenvalues by Sylvester-inertia bisection.
pub fn inertia_eigenvalues(a: &Matrix<f64>) -> Vec<f64> {
    let n = a.rows();
    let radius = (0..n).map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-radius, radius);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(a, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-14 * radius {
                    break;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// Static and dynamic decisions are unchanged when `e`, `q̂` scale by `c`
/// and `μ` by `c²`.
pub fn trigger_scale_invariant(
    e: [f64; 2],
    q: [f64; 2],
    c: f64,
    mu: f64,
    sp: &StaticTriggerParams<f64>,
    dp: &DynamicTriggerParams<f64>,
) -> bool {
    let s = |v: [f64; 2]| [v[0] * c, v[1] * c];
    static_should_trigger(e, q, sp) == static_should_trigger(s(e), s(q), sp)
        && dynamic_should_trigger(e, q, mu, sp, dp) == dynamic_should_trigger(s(e), s(q), mu * c * c, sp, dp)
}

/// Recorded control inputs only change at the vehicle's own trigger steps.
pub fn control_held(tr: &Trace) -> bool {
    tr.rows.windows(2).all(|w| (0..tr.n_followers).all(|i| w[1].triggered[i] || w[0].u[i] == w[1].u[i]))
}

pub fn mu_positive(tr: &Trace) -> bool {
    tr.rows.iter().all(|r| r.mu.iter().all(|&m| m > 0.0))
}

/// A schedule accepted under `b` stays accepted when every budget constant grows.
pub fn budget_monotone(s: &AttackSchedule, b: &AttackBudget, grow: [f64; 4], horizon: usize) -> bool {
    let bigger = AttackBudget {
        zeta0: b.zeta0 + grow[0],
        tau0: (b.tau0 + grow[1]).min(0.999),
        big_f0: b.big_f0 + grow[2],
        f0: b.f0 + grow[3],
    };
    let small = verify_budget(s, b, horizon, 0.2);
    let large = verify_budget(s, &bigger, horizon, 0.2);
    !small.ok() || large.ok()
}

pub fn random_schedule_plain<R: Rng>(rng: &mut R, horizon: usize) -> AttackSchedule {
    let mut t = rng.gen_range(0..20);
    let mut ivs = Vec::new();
    while t < horizon {
        let d = rng.gen_range(1..15);
        ivs.push(AttackInterval { start: t, duration: d });
        t += d + rng.gen_range(1..60);
    }
    AttackSchedule::new(ivs, 0.58, vec![true; 6]).unwrap()
}

/// Copy of a resolved scenario with jittered follower states and a fresh
/// budget-compliant random attack schedule.
pub fn randomized(base: &Resolved, seed: u64, horizon: usize) -> Scenario {
    let mut sc = base.scenario.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in sc.followers.iter_mut() {
        *x = VehicleState::new(x.position + rng.gen_range(-5.0..5.0), x.velocity + rng.gen_range(-2.0..2.0));
    }
    let budget = base.budget.expect("scenario has a budget");
    let t = sc.plant.sample_time();
    let targets = sc.attack.targets().to_vec();
    sc.attack = random_schedule(seed, &budget, sc.attack.g_tilde_v(), targets, horizon, t).unwrap();
    sc.horizon = horizon;
    sc
}

pub fn csv_bytes(sc: &Scenario) -> Vec<u8> {
    let tr = sim::run(sc).unwrap();
    let mut out = Vec::new();
    sim::write_csv(&tr, &mut out).unwrap();
    out
}
/// Steps `t` at which some follower holds a gain sampled during an attack.
pub fn corrupted_steps(tr: &Trace) -> Vec<bool> {
    let mut holding = vec![false; tr.n_followers];
    tr.rows
        .iter()
        .map(|r| {
            for ((h, &fired), &attacked) in holding.iter_mut().zip(&r.triggered).zip(&r.attacked) {
                if fired {
                    *h = attacked;
                }
            }
            holding.iter().any(|&h| h)
        })
        .collect()
}

/// Worst ratio `V(t) / (e^{−α(t−T_k)} V(T_k))` over clean segments; at most 1 when
/// the envelope holds. A segment `[a, b]` of clean inputs also bounds `V(b+1)`.
pub fn envelope_ratio(tr: &Trace, alpha: f64) -> f64 {
    let bad = corrupted_steps(tr);
    let v: Vec<f64> = tr.rows.iter().map(|r| r.lyapunov).collect();
    let mut worst: f64 = 0.0;
    let mut t = 0;
    while t < v.len() {
        if bad[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < v.len() && !bad[t] {
            t += 1;
        }
        let end = t.min(v.len() - 1);
        if v[start] == 0.0 {
            continue;
        }
        for k in start..=end {
            let bound = (-alpha * (k - start) as f64).exp() * v[start];
            worst = worst.max(v[k] / bound);
        }
    }
    worst
}

pub fn to_nalgebra(m: &Matrix<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

/// Sorted eigenvalue moduli of `I⊗A − H⊗BK`, assembled densely.
pub fn closed_loop_moduli_oracle(h: &Matrix<f64>, t: f64, gain: Gain<f64>) -> Vec<f64> {
    let n = h.rows();
    let a = nalgebra::Matrix2::new(1.0, t, 0.0, 1.0);
    let bk = nalgebra::Matrix2::new(0.0, 0.0, t * gain.kp, t * gain.kv);
    let m = nalgebra::DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let (i, j) = (r / 2, c / 2);
        let eye = if i == j { a[(r % 2, c % 2)] } else { 0.0 };
        eye - h[(i, j)] * bk[(r % 2, c % 2)]
    });
    let mut moduli = dense_moduli(m);
    moduli.sort_by(f64::total_cmp);
    moduli
}

/// Eigenvalue moduli via a real Schur form. Francis iterations occasionally
/// stall, so the transpose and random orthogonal similarities are tried too;
/// none of them changes the spectrum.
fn dense_moduli(m: nalgebra::DMatrix<f64>) -> Vec<f64> {
    let schur = |m: nalgebra::DMatrix<f64>| nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 10_000);
    let n = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut candidates = vec![m.clone(), m.transpose()];
    for _ in 0..8 {
        let q = nalgebra::DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        candidates.push(q.transpose() * &m * q);
    }
    let s = candidates.into_iter().find_map(schur).expect("some Schur iteration converges");
    s.complex_eigenvalues().iter().map(|z| z.norm()).collect()
}

/// Sorted root moduli from the per-eigenvalue quadratics.
pub fn closed_loop_moduli_analytic(spectrum: &[f64], t: f64, gain: Gain<f64>) -> Vec<f64> {
    let mut moduli: Vec<f64> = spectrum
        .iter()
        .flat_map(|&l| quadratic_root_magnitudes(l * t * gain.kv - 2.0, l * t * t * gain.kp - l * t * gain.kv + 1.0))
        .collect();
    moduli.sort_by(f64::total_cmp);
    moduli
}

fn sym_extremes(m: &Matrix<f64>) -> (f64, f64) {
    let e = nalgebra::SymmetricEigen::new(to_nalgebra(m)).eigenvalues;
    (e.min(), e.max())
}

/// Decay rate retyped from the definition, with eigenvalues from nalgebra.
pub fn alpha_oracle(
    s: SConstants<f64>,
    beta: f64,
    partial: f64,
    w2: &Matrix<f64>,
    h: &Matrix<f64>,
    p: &Matrix<f64>,
) -> f64 {
    let (_, lambda_n) = sym_extremes(h);
    let sigma = partial * (s.s1 - s.s2 * beta) * beta / (s.s2 + s.s3 * beta);
    let denom = (1.0 / lambda_n - sigma.sqrt()).powi(2);
    ((1.0 - partial) * (s.s1 - beta * s.s2) / denom + sym_extremes(w2).0) / sym_extremes(p).1
}

/// `s₁, s₂, s₃` from nalgebra SVDs and eigenvalues.
pub fn s_constants_oracle(
    h: &Matrix<f64>,
    p: &Matrix<f64>,
    t: f64,
    gain: Gain<f64>,
    w1: &Matrix<f64>,
) -> SConstants<f64> {
    let n = h.rows();
    let h = to_nalgebra(h);
    let h_inv = h.clone().try_inverse().expect("H invertible");
    let eye = nalgebra::DMatrix::<f64>::identity(n, n);
    let a = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]);
    let bk = nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 0.0, t * gain.kp, t * gain.kv]);
    let (p, w1) = (to_nalgebra(p), to_nalgebra(w1));

    let w1_min = nalgebra::SymmetricEigen::new(w1.clone()).eigenvalues.min();
    let hinv2_min = nalgebra::SymmetricEigen::new(&h_inv * &h_inv).eigenvalues.min();
    let i_bk = eye.kronecker(&bk);
    let h_bk = h.kronecker(&bk);
    let i_p = eye.kronecker(&p);
    let closed = eye.kronecker(&a) - &h_bk;
    let m2 = i_bk.transpose() * &i_p * closed - h_inv.kronecker(&w1);
    let m3 = h_bk.transpose() * &i_p * (eye.kronecker(&(&a * 2.0)) - &h_bk) - eye.kronecker(&w1);
    let top = |m: nalgebra::DMatrix<f64>| m.singular_values().max();
    SConstants { s1: (w1_min * hinv2_min).max(0.0), s2: top(m2), s3: top(m3) }
}
