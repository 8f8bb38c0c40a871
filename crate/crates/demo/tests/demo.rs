use catgrad_demo::{beta_curve, expectations, gumbel_histogram};

const THETA: [f64; 4] = [0.5, -0.3, 1.2, 0.0];

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn expectations_match_references() {
    let r = expectations(&THETA, 7, 0.25).unwrap();
    assert_eq!(r.exact.len(), 4);
    assert!(close(&r.st, &r.first_order, 1e-12));
    assert!(close(&r.reinmax, &r.second_order, 1e-12));
    assert!(close(&r.rk2_centered, &r.rk2_reference, 1e-12));
    assert!(!close(&r.rk2, &r.rk2_reference, 1e-6));
}

#[test]
fn beta_curve_vanishes_at_half_only() {
    let c = beta_curve(&THETA, 7, 0.0, 1.0, 4).unwrap();
    assert_eq!(c.beta, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert!(c.gap[2] < 1e-12);
    assert!(c.gap[0] > 1e-6 && c.gap[4] > 1e-6);
    // linear in |2β − 1|
    assert!((c.gap[0] - 2.0 * c.gap[1]).abs() < 1e-12);
    assert!(c.gap_centered.iter().all(|g| *g < 1e-12));
}

#[test]
fn gumbel_histogram_agrees_with_softmax() {
    let h = gumbel_histogram(&THETA, 2, 20_000, 3).unwrap();
    assert_eq!(h.violations, 0);
    for ((a, b), p) in h.one_stage.iter().zip(&h.two_stage).zip(&h.probs) {
        let se = (p * (1.0 - p) / 20_000.0).sqrt();
        assert!((a - p).abs() < 5.0 * se && (b - p).abs() < 5.0 * se);
    }
    assert!(h.counts.iter().sum::<u64>() <= 20_000);
    assert_eq!(h.edges.len(), h.counts.len() + 1);
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(expectations(&[1.0], 0, 0.5).is_err());
    assert!(expectations(&THETA, 0, f64::NAN).is_err());
    assert!(beta_curve(&THETA, 0, 1.0, 0.0, 10).is_err());
    assert!(gumbel_histogram(&THETA, 4, 10, 0).is_err());
    assert!(gumbel_histogram(&THETA, 0, 0, 0).is_err());
}
