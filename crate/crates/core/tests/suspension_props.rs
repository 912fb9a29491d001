use std::sync::Arc;

use pesin_lab::sampling::substream;
use pesin_lab::suspension::{
    base_from_name, expansivity_probe, lift_measure_sample, suspend, BaseMap, Ceiling,
    SuspensionPoint, ToralAutomorphism, Translation,
};
use pesin_lab::Error;
use proptest::prelude::*;

fn cat_cosine() -> pesin_lab::suspension::SuspensionSystem {
    suspend(
        Arc::new(ToralAutomorphism::cat()),
        Ceiling::cosine(1.0, 0.4).unwrap(),
    )
    .unwrap()
}

fn close(
    sys: &pesin_lab::suspension::SuspensionSystem,
    p: &SuspensionPoint,
    q: &SuspensionPoint,
) -> bool {
    sys.base.distance(&p.base_point, &q.base_point) < 1e-9 && (p.height - q.height).abs() < 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evolve_is_a_flow(x in 0.0..1.0f64, y in 0.0..1.0f64, u in 0.0..1.0f64,
                        s in -3.0..3.0f64, t in -3.0..3.0f64) {
        let sys = cat_cosine();
        let h = sys.ceiling.eval(&[x, y]);
        let p = SuspensionPoint { base_point: vec![x, y], height: u * h };
        let a = sys.evolve(&sys.evolve(&p, s).unwrap(), t).unwrap();
        let b = sys.evolve(&p, s + t).unwrap();
        prop_assert!(close(&sys, &a, &b), "{a:?} vs {b:?}");
    }

    #[test]
    fn height_stays_under_ceiling(x in 0.0..1.0f64, y in 0.0..1.0f64, s in -10.0..10.0f64) {
        let sys = cat_cosine();
        let p = SuspensionPoint { base_point: vec![x, y], height: 0.0 };
        let q = sys.evolve(&p, s).unwrap();
        prop_assert!(q.height >= 0.0 && q.height < sys.ceiling.eval(&q.base_point));
    }

    #[test]
    fn cat_inverse_undoes_apply(x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let cat = ToralAutomorphism::cat();
        let back = cat.inverse(&cat.apply(&[x, y])).unwrap();
        prop_assert!(cat.distance(&back, &[x, y]) < 1e-12);
    }
}

#[test]
fn constant_ceiling_integral_is_exact() {
    let sys = suspend(Arc::new(ToralAutomorphism::cat()), Ceiling::constant(2.0)).unwrap();
    assert!((sys.integral - 2.0).abs() < 1e-12);
    assert!((sys.abramov_check(1.0) - 0.5).abs() < 1e-12);
}

#[test]
fn lifted_measure_heights_are_under_ceiling_and_reproducible() {
    let sys = cat_cosine();
    let a = lift_measure_sample(&sys, 5, 500);
    let b = lift_measure_sample(&sys, 5, 500);
    assert_eq!(a, b);
    assert!(a.iter().all(|p| p.height < sys.ceiling.eval(&p.base_point)));
}

#[test]
fn lifted_heights_are_uniform_for_constant_ceiling() {
    let sys = suspend(Arc::new(ToralAutomorphism::cat()), Ceiling::constant(1.0)).unwrap();
    let pts = lift_measure_sample(&sys, 11, 20000);
    let mean: f64 = pts.iter().map(|p| p.height).sum::<f64>() / pts.len() as f64;
    assert!((mean - 0.5).abs() < 0.01, "mean height {mean}");
}

#[test]
fn negative_time_on_noninvertible_base_fails() {
    let doubling = Arc::new(ToralAutomorphism::new("doubling", [[2, 0], [0, 2]]).unwrap());
    let sys = suspend(doubling, Ceiling::constant(1.0)).unwrap();
    assert!(!sys.is_flow());
    let p = SuspensionPoint {
        base_point: vec![0.3, 0.3],
        height: 0.2,
    };
    assert!(matches!(sys.evolve(&p, -1.0), Err(Error::NotInvertible)));
}

#[test]
fn nonpositive_ceilings_are_rejected() {
    let base: Arc<dyn BaseMap> = Arc::new(Translation::identity(2));
    assert!(suspend(base.clone(), Ceiling::constant(0.0)).is_err());
    assert!(suspend(base, Ceiling::constant(-1.0)).is_err());
    assert!(Ceiling::cosine(1.0, -0.1).is_err());
}

#[test]
fn expansivity_separates_cat_but_not_rotation() {
    let cat = base_from_name("cat").unwrap();
    let rot = base_from_name("rotation").unwrap();
    let e = expansivity_probe(cat.as_ref(), 0.1, 100, 50, 3).unwrap();
    let r = expansivity_probe(rot.as_ref(), 0.1, 100, 50, 3).unwrap();
    assert!(e.fraction > 0.99, "{e:?}");
    assert!(r.fraction < 0.01, "{r:?}");
}

#[test]
fn invariant_sampler_is_seeded() {
    let cat = ToralAutomorphism::cat();
    let a = cat.sample_invariant(&mut substream(1, 0));
    let b = cat.sample_invariant(&mut substream(1, 0));
    let c = cat.sample_invariant(&mut substream(1, 1));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
