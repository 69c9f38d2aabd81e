use super::*;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Environment, UserGeometry};

fn cfg(k: usize, b: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.phy.num_embb_users = k;
    c.phy.num_urllc_users = 1;
    c.phy.num_rbs = b;
    c
}

/// Slot whose gains give the listed SNRs at full power.
fn slot_from_snr(c: &ScenarioConfig, embb: Array2<f64>, urllc: Array2<f64>) -> SlotState {
    let noise = c.phy.noise_power_w();
    SlotState {
        embb_gain: embb * (noise / c.phy.max_power_w),
        urllc_gain: urllc * (noise / c.phy.urllc_power_w()),
        arrivals: 0,
        slot_index: 7,
    }
}

fn opts() -> AscentOptions {
    AscentOptions { max_iterations: 2000, tolerance: 1e-9 }
}

fn random_slot(c: &ScenarioConfig, t: u64) -> SlotState {
    let env = Environment::new(c, &UserGeometry::random(c)).unwrap();
    env.sample_slot(t)
}

#[test]
fn single_user_takes_every_rb() {
    let c = cfg(1, 4);
    let slot = random_slot(&c, 0);
    let prob = SaaProblem::new(&slot, &c).unwrap();
    let mut x = vec![0.3; 4];
    let p = vec![c.phy.max_power_w / 4.0; 4];
    solve_rb_allocation(&prob, &mut x, &p, &[0.0; 4], opts());
    assert!(x.iter().all(|&v| (v - 1.0).abs() < 1e-9), "{x:?}");
}

#[test]
fn dominant_user_takes_single_rb() {
    let c = cfg(2, 1);
    let slot = slot_from_snr(&c, ndarray::array![[1e8], [1e2]], ndarray::array![[1e3]]);
    let prob = SaaProblem::new(&slot, &c).unwrap();
    let p = vec![c.phy.max_power_w / 2.0; 2];
    // Precondition: user 0 has the larger rate in every sample.
    let r0 = prob.sample_rates(&[1.0, 0.0], &p, &[0.0]);
    let r1 = prob.sample_rates(&[0.0, 1.0], &p, &[0.0]);
    assert!(r0.iter().zip(&r1).all(|(a, b)| a > b));
    let mut x = vec![0.5, 0.5];
    solve_rb_allocation(&prob, &mut x, &p, &[0.0], opts());
    assert!((x[0] - 1.0).abs() < 1e-9 && x[1].abs() < 1e-9, "{x:?}");
}

#[test]
fn rb_allocation_matches_grid_search() {
    let c = cfg(2, 2);
    let slot = slot_from_snr(&c, ndarray::array![[30.0, 80.0], [60.0, 20.0]], ndarray::array![[100.0, 100.0]]);
    let prob = SaaProblem::new(&slot, &c).unwrap();
    let p = vec![c.phy.max_power_w / 4.0; 4];
    let w = [0.2, 0.0];
    let mut x = vec![0.5; 4];
    solve_rb_allocation(&prob, &mut x, &p, &w, opts());
    let got = prob.value(&x, &p, &w);
    // The objective is nondecreasing in x, so the grid covers sum_k x = 1.
    let mut best = f64::NEG_INFINITY;
    for i in 0..=100 {
        for j in 0..=100 {
            let (a, bb) = (i as f64 / 100.0, j as f64 / 100.0);
            best = best.max(prob.value(&[a, bb, 1.0 - a, 1.0 - bb], &p, &w));
        }
    }
    assert!(got >= best * (1.0 - 1e-3), "{got} vs {best}");
}

#[test]
fn single_link_uses_full_power() {
    let c = cfg(1, 1);
    let slot = slot_from_snr(&c, ndarray::array![[50.0]], ndarray::array![[10.0]]);
    let prob = SaaProblem::new(&slot, &c).unwrap();
    let mut p = vec![0.1];
    solve_power_allocation(&prob, &[1.0], &mut p, &[0.0], opts());
    assert!((p[0] - c.phy.max_power_w).abs() < 1e-9 * c.phy.max_power_w, "{p:?}");
}

#[test]
fn symmetric_links_split_power_equally() {
    let mut c = cfg(1, 2);
    c.optimizer.saa_fading = SaaFading::PerUser;
    let slot = slot_from_snr(&c, ndarray::array![[40.0, 40.0]], ndarray::array![[10.0, 10.0]]);
    let prob = SaaProblem::new(&slot, &c).unwrap();
    let mut p = vec![c.phy.max_power_w * 0.9, c.phy.max_power_w * 0.05];
    solve_power_allocation(&prob, &[1.0, 1.0], &mut p, &[0.0, 0.0], opts());
    let share = p[0] / (p[0] + p[1]);
    assert!((share - 0.5).abs() < 1e-4, "{p:?}");
}

#[test]
fn power_allocation_matches_grid_search() {
    let c = cfg(1, 2);
    let slot = slot_from_snr(&c, ndarray::array![[5.0, 200.0]], ndarray::array![[10.0, 10.0]]);
    let prob = SaaProblem::new(&slot, &c).unwrap();
    let pm = c.phy.max_power_w;
    let mut p = vec![pm / 2.0; 2];
    let w = [0.1, 0.3];
    solve_power_allocation(&prob, &[1.0, 1.0], &mut p, &w, opts());
    let got = prob.value(&[1.0, 1.0], &p, &w);
    let mut best = f64::NEG_INFINITY;
    for i in 0..=1000 {
        for j in 0..=(1000 - i) {
            let q = [i as f64 / 1000.0 * pm, j as f64 / 1000.0 * pm];
            best = best.max(prob.value(&[1.0, 1.0], &q, &w));
        }
    }
    assert!(got >= best * (1.0 - 1e-3), "{got} vs {best}");
    assert!(p.iter().sum::<f64>() <= pm * (1.0 + 1e-12));
}

#[test]
fn weights_vanish_without_traffic() {
    let mut c = cfg(2, 3);
    c.traffic.arrival_rate = 0.0;
    let slot = random_slot(&c, 3);
    let prob = SaaProblem::new(&slot, &c).unwrap();
    let x = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    let p = vec![c.phy.max_power_w / 3.0; 6];
    let mut w = vec![0.5; 3];
    let (feasible, _) = solve_urllc_weights(&prob, &x, &p, &mut w, opts());
    assert!(feasible);
    assert!(w.iter().all(|&v| v.abs() < 1e-12), "{w:?}");
}

#[test]
fn weights_saturate_at_boundary_requirement() {
    let c = cfg(1, 2);
    let slot = slot_from_snr(&c, ndarray::array![[40.0, 40.0]], ndarray::array![[50.0, 70.0]]);
    let mut prob = SaaProblem::new(&slot, &c).unwrap();
    prob.required = prob.urllc_cap.iter().sum();
    let p = vec![c.phy.max_power_w / 2.0; 2];
    let mut w = vec![0.0; 2];
    let (feasible, _) = solve_urllc_weights(&prob, &[1.0, 1.0], &p, &mut w, opts());
    assert!(feasible);
    assert!(w.iter().all(|&v| (v - 1.0).abs() < 1e-9), "{w:?}");

    prob.required *= 1.01;
    let mut w = vec![0.0; 2];
    let (feasible, _) = solve_urllc_weights(&prob, &[1.0, 1.0], &p, &mut w, opts());
    assert!(!feasible);
    assert_eq!(w, vec![1.0, 1.0]);
}

#[test]
fn weights_match_grid_search() {
    let c = cfg(2, 2);
    let slot = slot_from_snr(&c, ndarray::array![[30.0, 300.0], [90.0, 20.0]], ndarray::array![[40.0, 200.0]]);
    let mut prob = SaaProblem::new(&slot, &c).unwrap();
    prob.required = 0.4 * prob.urllc_cap.iter().sum::<f64>();
    let x = [1.0, 0.0, 0.0, 1.0];
    let p = vec![c.phy.max_power_w / 2.0, 0.0, 0.0, c.phy.max_power_w / 2.0];
    let mut w = vec![0.0; 2];
    solve_urllc_weights(&prob, &x, &p, &mut w, opts());
    let got = prob.value(&x, &p, &w);
    assert!(prob.urllc_planned(&w) >= prob.required * (1.0 - 1e-9));
    let mut best = f64::NEG_INFINITY;
    for i in 0..=100 {
        for j in 0..=100 {
            let ww = [i as f64 / 100.0, j as f64 / 100.0];
            if prob.urllc_planned(&ww) >= prob.required {
                best = best.max(prob.value(&x, &p, &ww));
            }
        }
    }
    assert!(got >= best * (1.0 - 1e-3), "{got} vs {best}");
}

#[test]
fn minislot_flooring() {
    assert_eq!(weights_to_minislots(0.0, 7), 0);
    assert_eq!(weights_to_minislots(1.0, 7), 7);
    assert_eq!(weights_to_minislots(0.5, 7), 3);
    assert_eq!(weights_to_minislots(1.0 - 1e-16, 7), 7);
    assert_eq!(weights_to_minislots(0.1428, 7), 0);
}

#[test]
fn rounding_examples() {
    let r = round_rb_allocation(&[1.0, 0.0, 0.0, 1.0], 2, 2, 0.5);
    assert_eq!(r.x, vec![1.0, 0.0, 0.0, 1.0]);
    assert_eq!(r.delta, 0.0);
    // One RB, two users at (0.7, 0.6): both pass the threshold.
    let r = round_rb_allocation(&[0.7, 0.6], 2, 1, 0.5);
    assert_eq!(r.x, vec![1.0, 0.0]);
    assert_eq!(r.threshold_delta, 1.0);
    assert_eq!(r.delta, 0.0);
    // Ties go to the lowest index; empty RBs still get an owner.
    let r = round_rb_allocation(&[0.3, 0.3, 0.3], 3, 1, 0.5);
    assert_eq!(r.x, vec![1.0, 0.0, 0.0]);
}

#[test]
fn rounding_never_overallocates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let (k, b) = (rng.random_range(1..6), rng.random_range(1..6));
        let mut x: Vec<f64> = (0..k * b).map(|_| rng.random()).collect();
        projection::rb_columns(&mut x, k, b);
        let eta = rng.random();
        let r = round_rb_allocation(&x, k, b, eta);
        for j in 0..b {
            let s: f64 = (0..k).map(|i| r.x[i * b + j]).sum();
            assert!(s <= 1.0);
        }
        assert_eq!(r.delta, 0.0);
    }
}

#[test]
fn infinite_epsilon_runs_one_iteration() {
    let mut c = cfg(3, 5);
    c.optimizer.epsilon = f64::INFINITY;
    let (_, rep) = run_drra(&random_slot(&c, 1), &c).unwrap();
    assert_eq!(rep.iterations, 1);
    assert!(rep.converged);
}

#[test]
fn returned_allocation_is_feasible() {
    let mut c = cfg(4, 10);
    c.traffic.arrival_rate = 0.5;
    for t in 0..5 {
        let slot = random_slot(&c, t);
        let (a, rep) = run_drra(&slot, &c).unwrap();
        for b in 0..10 {
            let s: f64 = a.x.column(b).sum();
            assert!((s - 1.0).abs() < 1e-12);
            for k in 0..4 {
                assert!(a.z[[k, b]] <= 7);
                if a.x[[k, b]] == 0.0 {
                    assert_eq!(a.z[[k, b]], 0);
                    assert_eq!(a.p[[k, b]], 0.0);
                }
            }
        }
        assert!(a.p.sum() <= c.phy.max_power_w * (1.0 + 1e-9));
        assert!(a.p.iter().all(|&v| v >= 0.0));
        assert!(rep.integrality_gap <= 1.0 + 1e-9);
        assert!(rep.objective_trace.windows(2).all(|w| w[1] >= w[0] - 1e-6 * w[0].abs()));
        // The URLLC rate itself is not guaranteed after flooring.
        assert!(rep.feasible_urllc);
    }
}

#[test]
fn report_is_one_json_line() {
    let c = cfg(2, 3);
    let (_, rep) = run_drra(&random_slot(&c, 0), &c).unwrap();
    let line = rep.to_json_line();
    assert!(!line.contains('\n'));
    let back: SolveReport = serde_json::from_str(&line).unwrap();
    assert_eq!(back.iterations, rep.iterations);
}

/// Random feasible point of the relaxed problem.
fn random_point(rng: &mut ChaCha8Rng, prob: &SaaProblem) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = prob.k * prob.b;
    let mut x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    projection::rb_columns(&mut x, prob.k, prob.b);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() / n as f64 * 1.5).collect();
    projection::capped_simplex(&mut q, 1.0);
    let p = q.iter().map(|v| v * prob.max_power + 1e-3 * prob.max_power / n as f64).collect();
    let w = (0..prob.b).map(|_| rng.random_range(0.05..0.95)).collect();
    (x, p, w)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn gradients_match_finite_differences() {
    let c = cfg(3, 4);
    let prob = SaaProblem::new(&random_slot(&c, 2), &c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (x, p, w) = random_point(&mut rng, &prob);
        let gx = prob.grad_x(&x, &p, &w);
        let gp = prob.grad_p(&x, &p, &w);
        let gw = prob.grad_w(&x, &p, &w);
        for j in 0..x.len() {
            let h = 1e-6;
            let (mut a, mut b) = (x.clone(), x.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (prob.value(&a, &p, &w) - prob.value(&b, &p, &w)) / (2.0 * h);
            assert!(rel_err(gx[j], fd) <= 1e-4, "x {j}: {} vs {fd}", gx[j]);
            let h = 1e-6 * prob.max_power;
            let (mut a, mut b) = (p.clone(), p.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (prob.value(&x, &a, &w) - prob.value(&x, &b, &w)) / (2.0 * h);
            assert!(rel_err(gp[j] * prob.max_power, fd * prob.max_power) <= 1e-4, "p {j}: {} vs {fd}", gp[j]);
        }
        for j in 0..w.len() {
            let h = 1e-6;
            let (mut a, mut b) = (w.clone(), w.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (prob.value(&x, &p, &a) - prob.value(&x, &p, &b)) / (2.0 * h);
            assert!(rel_err(gw[j], fd) <= 1e-4, "w {j}: {} vs {fd}", gw[j]);
        }
    }
}

#[test]
fn subproblems_are_midpoint_concave() {
    let c = cfg(3, 4);
    let prob = SaaProblem::new(&random_slot(&c, 4), &c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect::<Vec<_>>();
    for _ in 0..100 {
        let (x1, p1, w1) = random_point(&mut rng, &prob);
        let (x2, p2, w2) = random_point(&mut rng, &prob);
        let slack = 1e-8;
        let xm = mid(&x1, &x2);
        let f = |x: &[f64]| prob.value(x, &p1, &w1);
        assert!(f(&xm) >= 0.5 * (f(&x1) + f(&x2)) - slack * f(&xm).abs());
        let pm = mid(&p1, &p2);
        let f = |p: &[f64]| prob.value(&x1, p, &w1);
        assert!(f(&pm) >= 0.5 * (f(&p1) + f(&p2)) - slack * f(&pm).abs());
        let wm = mid(&w1, &w2);
        let f = |w: &[f64]| prob.value(&x1, &p1, w);
        assert!(f(&wm) >= 0.5 * (f(&w1) + f(&w2)) - slack * f(&wm).abs());
    }
}
