//! Module-level checks through the public API against hand-derived values
//! for the prototype `p = [1, 1]` and the Euclidean case `p = [2]`.

use std::f64::consts::PI;

use harnack_core::constants::{kernel_choice, run_pipeline, PipelineInput};
use harnack_core::covariance::CovariancePoly;
use harnack_core::fields::{make_field, validate_field, FieldKind, FieldSpec, Hypothesis, Modulus};
use harnack_core::geometry::{unit_ball_measure, unit_ball_measure_with, Cylinder, NamedCylinders};
use harnack_core::kernels::KernelParams;
use harnack_core::potentials::strip_potential;
use harnack_core::verify::{run_suite, Suite, VerifyContext, VerifyOptions};
use harnack_core::{BlockStructure, Error, Exec, Point};
use nalgebra::DMatrix;

fn proto() -> BlockStructure {
    BlockStructure::prototype()
}

fn h1_input(big_lambda: f64) -> PipelineInput {
    PipelineInput { structure: proto(), hypothesis: Hypothesis::H1, lambda: 1.0, big_lambda, modulus: None }
}

#[test]
fn prototype_dimensions() {
    let st = proto();
    assert_eq!((st.dim(), st.n(), st.q()), (2, 1, 4));
    let st = BlockStructure::new(vec![2, 1, 1], vec![DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), DMatrix::identity(1, 1)])
        .unwrap();
    assert_eq!((st.dim(), st.n(), st.q()), (4, 2, 2 + 3 + 5));
}

#[test]
fn bad_structures_are_rejected() {
    assert_eq!(BlockStructure::new(vec![], vec![]).unwrap_err(), Error::EmptyStructure);
    assert!(matches!(BlockStructure::new(vec![1, 2], vec![DMatrix::zeros(1, 2)]), Err(Error::BadBlockSizes(_))));
    assert!(matches!(
        BlockStructure::new(vec![2, 1], vec![DMatrix::zeros(2, 1)]),
        Err(Error::RankDeficient { .. })
    ));
    assert!(matches!(st_dilate_zero(), Err(Error::NonPositiveDilation(_))));
}

fn st_dilate_zero() -> harnack_core::Result<Point> {
    proto().dilate(0.0, &Point::origin(2))
}

#[test]
fn euclidean_ball_has_area_pi() {
    let st = BlockStructure::new(vec![2], vec![]).unwrap();
    let m = unit_ball_measure_with(&st, 400_000, 3, Exec::default());
    assert!((m.value - PI).abs() < 0.01, "{m:?}");
    assert!(m.std_error < 0.005);
}

#[test]
fn prototype_ball_has_area_one() {
    // int_{-1}^{1} 2 (1 - |x_1|)^3 dx_1 = 1
    let m = unit_ball_measure(&proto());
    assert!((m.value - 1.0).abs() < 0.01, "{m:?}");
}

#[test]
fn cylinder_measure_scales_with_q_plus_2() {
    let st = proto();
    let c = Cylinder::new(Point::new(vec![0.3, -0.2], 1.0), 0.5, -0.25, 0.0).unwrap();
    assert!((c.measure(&st, 1.0) - 0.5f64.powi(4) * 0.25).abs() < 1e-15);
}

#[test]
fn named_cylinders_are_nested_in_time() {
    let nc = NamedCylinders::new(&Point::origin(2), 2.0, 10.0, 1.0, 0.3).unwrap();
    let br2 = 0.3 * 4.0;
    assert_eq!((nc.q1.t1, nc.q1.t2), (-br2, 0.0));
    assert_eq!((nc.q3.t1, nc.q3.t2), (-br2, -0.5 * br2));
    assert!(nc.q_minus.t2 <= nc.q_plus.t1);
    assert_eq!(nc.q2.r, 2.0);
}

#[test]
fn strip_potential_matches_closed_form() {
    // int Gamma_{s,1}(x, u) dx = 4 pi sqrt(det C(1)) u^{(1-s) Q / 2}, det C(1) = 1/12
    let st = proto();
    let mass = 4.0 * PI / 12f64.sqrt();
    for (s, z_t, w) in [(1.0, 0.0, 0.5), (1.2, -0.1, 0.3), (1.4, 0.0, 1.0)] {
        let kp = KernelParams::new(s, 1.0, CovariancePoly::identity(&st)).unwrap();
        let z = Point::new(vec![0.4, -0.7], z_t);
        let got = strip_potential(&kp, -w, 0.0, &z, 1e-10).unwrap();
        let a = 1.0 + (1.0 - s) * 2.0;
        let exact = mass * ((z_t + w).powf(a)) / a;
        assert!((got - exact).abs() <= 1e-7 * exact, "s = {s}: {got} vs {exact}");
    }
}

#[test]
fn kernel_choice_respects_hypotheses() {
    let h1 = kernel_choice(Hypothesis::H1, 1.0, 1.2, 4.0).unwrap();
    assert!(h1.s >= 1.0 && h1.s < 1.5 && h1.beta > 0.0);
    assert!(matches!(kernel_choice(Hypothesis::H1, 1.0, 1.6, 4.0), Err(Error::H1Violated { .. })));
    let h2 = kernel_choice(Hypothesis::H2, 1.0, 1.6, 4.0).unwrap();
    assert_eq!(h2.s0, Some(0.25));
}

#[test]
fn pipeline_prototype_values() {
    let c = run_pipeline(&h1_input(1.2)).unwrap();
    assert!(c.invariants_hold);
    // sigma_0 = min |cos| + |sin|^{1/3} = 1 on the unit circle
    assert!((c.sigma_0 - 1.0).abs() < 1e-6);
    assert!(c.sigma_bar > 1.0);
    assert!(c.b_b > 0.0 && c.b_b <= 1.0);
    assert!(c.k > c.k_1);
    assert!(c.mu_upper > c.mu_lower);
    assert!(c.ln_eta < 0.0 && c.ln_c_harnack > 0.0);
    // values that underflow are reported as absent, their logs survive
    assert!(c.eta.is_none() && c.ln_eta.is_finite());
    assert!(c.c_harnack.is_none() && c.ln_c_harnack.is_finite());
    assert!(!c.near_h1_threshold);
}

#[test]
fn pipeline_rejects_h1_violation_and_requires_h2_modulus() {
    assert!(matches!(run_pipeline(&h1_input(1.6)), Err(Error::H1Violated { .. })));
    let mut inp = h1_input(1.6);
    inp.hypothesis = Hypothesis::H2;
    assert!(run_pipeline(&inp).is_err());
    inp.modulus = Some(Modulus::Lipschitz(0.5));
    let c = run_pipeline(&inp).unwrap();
    assert_eq!(c.s_0, Some(0.25));
    assert!(c.r_0.unwrap() > 0.0);
}

#[test]
fn every_field_kind_stays_in_its_band() {
    let st = proto();
    let region = Cylinder::new(Point::origin(2), 2.0, -1.0, 0.0).unwrap();
    for kind in [
        FieldKind::Constant,
        FieldKind::Checkerboard,
        FieldKind::SmoothOscillatory,
        FieldKind::HolderOscillatory,
        FieldKind::PiecewiseRandom,
    ] {
        let f = make_field(&FieldSpec::new(kind, 1.0, 1.3).with_seed(5), &st, None).unwrap();
        let rep = validate_field(&f, &region, 2000, 7, Exec::default());
        assert!(rep.passes(1e-12), "{kind:?}: {rep:?}");
    }
    let err = make_field(&FieldSpec::new(FieldKind::Checkerboard, 1.0, 1.2), &st, Some(Hypothesis::H2));
    assert!(err.is_err());
}

#[test]
fn verify_suites_pass_and_adversarial_geometry_fails() {
    let st = proto();
    let constants = run_pipeline(&h1_input(1.2)).unwrap();
    let ctx = VerifyContext { structure: st, constants, field: None };
    let opts = VerifyOptions { samples: 1000, ..Default::default() };
    for suite in [Suite::Group, Suite::Covariance, Suite::Geometry] {
        let rep = run_suite(&ctx, suite, &opts).unwrap();
        assert!(rep.passed, "{rep:?}");
    }
    let adv = VerifyOptions { adversarial: true, ..opts };
    let rep = run_suite(&ctx, Suite::Geometry, &adv).unwrap();
    assert!(!rep.passed);
    assert!(rep.checks.iter().any(|c| c.violations > 0));
}

#[test]
fn suite_names_round_trip() {
    for s in Suite::ALL {
        assert_eq!(Suite::parse(s.name()), Some(s));
    }
    assert_eq!(Suite::parse("nope"), None);
}
