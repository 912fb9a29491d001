use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use pesin_lab::dynamics::{builtin, flow, liouville_check, tangent_flow, IntegratorOptions};
use pesin_lab::poincare::{linear_poincare, linear_poincare_from_frame, normal_frame};
use proptest::prelude::*;

fn opts() -> IntegratorOptions {
    IntegratorOptions::with_tolerance(1e-11)
}

fn unit_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 3)
}

fn scaled(field: &str, u: &[f64]) -> Vec<f64> {
    let f = builtin(field).unwrap();
    let d = f.domain();
    u.iter()
        .enumerate()
        .map(|(i, v)| d.lower[i] + v * (d.upper[i] - d.lower[i]))
        .collect()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cocycle_law(u in unit_point(), s in 0.1..2.0f64, t in 0.1..2.0f64,
                   name in prop::sample::select(vec!["abc", "cat_suspension3"])) {
        let f = builtin(name).unwrap();
        let x = scaled(name, &u);
        let a = tangent_flow(f.as_ref(), &x, s, &opts()).unwrap();
        let b = tangent_flow(f.as_ref(), &a.end, t, &opts()).unwrap();
        let ab = tangent_flow(f.as_ref(), &x, s + t, &opts()).unwrap();
        let composed = &b.matrix * &a.matrix;
        prop_assert!(max_abs(&(composed - &ab.matrix)) < 1e-6 * (1.0 + max_abs(&ab.matrix)));
    }

    #[test]
    fn reversibility(u in unit_point(), t in 0.1..5.0f64,
                     name in prop::sample::select(vec!["abc", "cat_suspension3", "constant3"])) {
        let f = builtin(name).unwrap();
        let x = f.domain().canonical(&scaled(name, &u));
        let y = flow(f.as_ref(), &x, t, &opts()).unwrap().position;
        let back = flow(f.as_ref(), &y, -t, &opts()).unwrap().position;
        let gap = f.domain().displacement(&x, &back);
        prop_assert!(gap.iter().all(|g| g.abs() < 1e-7), "gap {gap:?}");
    }

    #[test]
    fn flow_direction_is_invariant(u in unit_point(), t in 0.1..3.0f64) {
        let f = builtin("abc").unwrap();
        let x = scaled("abc", &u);
        let seg = tangent_flow(f.as_ref(), &x, t, &opts()).unwrap();
        let moved = &seg.matrix * f.eval(&x);
        prop_assert!((moved - f.eval(&seg.end)).norm() < 1e-7);
    }

    #[test]
    fn determinant_is_one(u in unit_point(), t in 0.5..20.0f64,
                          name in prop::sample::select(vec!["abc", "cat_suspension3"])) {
        let f = builtin(name).unwrap();
        let x = scaled(name, &u);
        prop_assert!(liouville_check(f.as_ref(), &x, t, &opts()).unwrap() < 1e-6);
    }

    #[test]
    fn poincare_singular_values_frame_independent(u in unit_point(), theta in 0.0..6.3f64, t in 0.5..3.0f64) {
        let f = builtin("abc").unwrap();
        let x = f.domain().canonical(&scaled("abc", &u));
        let frame = normal_frame(f.as_ref(), &x).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let rotated = &frame.vectors * r;
        let a = linear_poincare(f.as_ref(), &x, t, &opts()).unwrap().singular_values();
        let b = linear_poincare_from_frame(f.as_ref(), &x, t, &rotated, &opts())
            .unwrap()
            .singular_values();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-8 * (1.0 + p.abs()));
        }
    }
}

#[test]
fn compressible_determinant_follows_divergence_integral() {
    let text = r#"{
        "name": "stretch", "kind": "polynomial", "dim": 3, "divergence_free": false,
        "coefficients": [[[[1, 0, 0], 0.3]], [[[0, 0, 0], 1.0]], []],
        "domain": {"lower": [-10, -10, -10], "upper": [10, 10, 10], "periodic": [false, false, false]}
    }"#;
    let spec = pesin_lab::dynamics::system_file::SystemSpec::from_json(text).unwrap();
    let sys = spec.load().unwrap();
    let f = sys.field;
    let seg = tangent_flow(f.as_ref(), &[0.5, 0.0, 0.0], 2.0, &opts()).unwrap();
    assert_abs_diff_eq!(seg.divergence_integral, 0.6, epsilon = 1e-9);
    assert_abs_diff_eq!(seg.matrix.determinant(), 0.6f64.exp(), epsilon = 1e-8);
    assert!(liouville_check(f.as_ref(), &[0.5, 0.0, 0.0], 2.0, &opts()).unwrap() < 1e-8);
}

#[test]
fn cat_suspension_cocycle_is_cat_power() {
    let f = builtin("cat_suspension3").unwrap();
    let seg = tangent_flow(f.as_ref(), &[0.3, 0.4, 0.2], 2.0, &opts()).unwrap();
    let expected = DMatrix::from_row_slice(3, 3, &[5.0, 3.0, 0.0, 3.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
    assert!(max_abs(&(seg.matrix - expected)) < 1e-8);
}

#[test]
fn normal_frame_is_orthonormal_and_normal() {
    let f = builtin("abc").unwrap();
    let x = [1.0, 2.0, 3.0];
    let frame = normal_frame(f.as_ref(), &x).unwrap();
    let v = &frame.vectors;
    let gram = v.transpose() * v;
    assert!(max_abs(&(gram - DMatrix::identity(2, 2))) < 1e-12);
    let u: DVector<f64> = f.eval(&x);
    assert!((v.transpose() * u).norm() < 1e-12);
}
