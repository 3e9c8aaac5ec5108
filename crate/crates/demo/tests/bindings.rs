use lagctrl_demo::{adjoint_slice_impl, gram_prediction, gram_prediction_impl, kernel_curve, kernel_curve_impl};

#[test]
fn kernel_curve_starts_at_zero_with_unit_slope() {
    let k = kernel_curve_impl(1, 1.3, 1.0, 101);
    assert_eq!(k.len(), 202);
    assert_eq!((k[0], k[1]), (0.0, 0.0));
    assert!((k[3] / k[2] - 1.0).abs() < 0.02);
}

#[test]
fn slice_vanishes_at_walls_and_outside_window() {
    let s = adjoint_slice_impl(0.3, 1.3, 2.0, 1.0, 1.5, 2.5, 0.1, 65).unwrap();
    assert_eq!(s.len(), 4 * 65);
    assert_eq!(s[1], 0.0);
    assert!(s[4 * 64 + 1].abs() < 1e-12);
    for q in s.chunks(4) {
        if q[0] < 1.5 || q[0] > 2.5 {
            assert_eq!(q[2], 0.0);
            assert_eq!(q[3], 0.0);
        }
    }
    assert!(adjoint_slice_impl(4.0, 1.3, 2.0, 1.0, 1.5, 2.5, 0.1, 8).is_err());
}

#[test]
fn prediction_solves_the_gram_system() {
    let out = gram_prediction_impl(&[0.3, 0.6], &[0.301, 0.5995], 1.3, 2.0, 1.5, 2.5, 0.1).unwrap();
    assert_eq!(out.len(), 4 + 2 + 2);
    let (g, eps) = (&out[..4], &out[6..]);
    assert!((g[0] * eps[0] + g[1] * eps[1] - 1e-3).abs() < 1e-12);
    assert!((g[2] * eps[0] + g[3] * eps[1] + 5e-4).abs() < 1e-12);
    assert!(gram_prediction_impl(&[0.3], &[0.3, 0.4], 1.3, 2.0, 1.5, 2.5, 0.1).is_err());
}

#[test]
fn exported_wrappers_agree_with_the_implementations() {
    assert_eq!(kernel_curve(3, 1.3, 2.0, 17), kernel_curve_impl(3, 1.3, 2.0, 17));
    let (a, b) = ([0.3, 0.6], [0.301, 0.5995]);
    assert_eq!(
        gram_prediction(&a, &b, 1.3, 2.0, 1.5, 2.5, 0.1).ok().unwrap(),
        gram_prediction_impl(&a, &b, 1.3, 2.0, 1.5, 2.5, 0.1).unwrap()
    );
}
