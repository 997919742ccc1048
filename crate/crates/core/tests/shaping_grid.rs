use rpt::shaping::{estimate_safe_steps, lambda_lower_bound, verify_separation};

const GAMMAS: [f64; 3] = [0.5, 0.9, 0.99];
const ETAS: [f64; 3] = [0.5, 0.9, 0.99];

fn p0s(eta: f64) -> [f64; 3] {
    [0.0, 0.3, eta / 2.0]
}

fn geometric_sum(gamma: f64, from: usize, to: usize) -> f64 {
    (from..to).map(|k| gamma.powi(k as i32)).sum()
}

#[test]
fn bound_separates_across_the_grid() {
    for gamma in GAMMAS {
        for h in 2..=50 {
            for eta in ETAS {
                for p0 in p0s(eta) {
                    let bound = lambda_lower_bound(gamma, h, eta, p0, 0.0, 1.0).unwrap();
                    assert!(
                        verify_separation(gamma, h, eta, p0, 0.0, 1.0, 1.001 * bound),
                        "gamma {gamma} H {h} eta {eta} p0 {p0}"
                    );
                }
            }
        }
    }
}

#[test]
fn zero_multiplier_never_separates() {
    for gamma in GAMMAS {
        for h in [2, 10, 50] {
            assert!(!verify_separation(gamma, h, 0.9, 0.0, 0.0, 1.0, 0.0));
        }
    }
}

#[test]
fn closed_form_matches_term_by_term_sum() {
    for gamma in GAMMAS {
        for h in 2..=50 {
            for eta in ETAS {
                for p0 in p0s(eta) {
                    let t = estimate_safe_steps(eta, p0, h).unwrap();
                    let closed = (1.0 - gamma.powi(h as i32)) / (1.0 - gamma);
                    let summed = geometric_sum(gamma, 0, h);
                    assert!(((closed - summed) / summed).abs() <= 1e-12);

                    let oracle = summed / (eta * geometric_sum(gamma, t, h));
                    let got = lambda_lower_bound(gamma, h, eta, p0, 0.0, 1.0).unwrap();
                    assert!(((got - oracle) / oracle).abs() <= 1e-9, "gamma {gamma} H {h} eta {eta} p0 {p0}");
                }
            }
        }
    }
}

#[test]
fn bound_scales_with_reward_range() {
    let unit = lambda_lower_bound(0.9, 20, 0.9, 0.0, 0.0, 1.0).unwrap();
    let wide = lambda_lower_bound(0.9, 20, 0.9, 0.0, -3.0, 2.0).unwrap();
    assert!((wide - 5.0 * unit).abs() <= 1e-12 * wide);
}

#[test]
fn bound_does_not_grow_with_eta_at_fixed_safe_steps() {
    let etas: Vec<f64> = (50..=99).map(|k| k as f64 / 100.0).collect();
    let mut compared = 0;
    for gamma in GAMMAS {
        for h in 2..=50 {
            for pair in etas.windows(2) {
                let (lo, hi) = (pair[0], pair[1]);
                if estimate_safe_steps(lo, 0.0, h).unwrap() != estimate_safe_steps(hi, 0.0, h).unwrap() {
                    continue;
                }
                let a = lambda_lower_bound(gamma, h, lo, 0.0, 0.0, 1.0).unwrap();
                let b = lambda_lower_bound(gamma, h, hi, 0.0, 0.0, 1.0).unwrap();
                assert!(b <= a * (1.0 + 1e-12), "gamma {gamma} H {h} eta {lo} -> {hi}: {a} -> {b}");
                compared += 1;
            }
        }
    }
    assert!(compared > 1000);
}

#[test]
fn reference_value() {
    let got = lambda_lower_bound(0.99, 10, 0.9, 0.0, 0.0, 1.0).unwrap();
    assert!((got - 11.63).abs() <= 0.01, "{got}");
}
