//! Property tests for the library's structural invariants: transform
//! identities, measurement invariances, projection laws, and the
//! solver's observable-residual identity.

use num_complex::Complex64;
use phaseret::grid::{autocorrelation, convolve, dft, invert_image, translate, Dims, Image, IndexVector};
use phaseret::measure::{measure, pad_support, support_of, Associate};
use phaseret::project::{project_l1ball, project_torus, ConstraintSet};
use phaseret::solve::{hybrid_step, random_torus_start, residual};
use proptest::prelude::*;

/// Random even-sided dims with |J| small enough for exhaustive checks.
fn arb_dims() -> impl Strategy<Value = Dims> {
    prop_oneof![
        (2usize..=6).prop_map(|h| Dims::new(&[2 * h]).unwrap()),
        ((2usize..=4), (2usize..=4)).prop_map(|(a, b)| Dims::new(&[2 * a, 2 * b]).unwrap()),
    ]
}

fn arb_image() -> impl Strategy<Value = Image> {
    arb_dims().prop_flat_map(|dims| {
        let total = dims.total();
        proptest::collection::vec(-1.0f64..1.0, total)
            .prop_map(move |data| Image::new(dims.clone(), data).unwrap())
    })
}

fn arb_nonneg_image() -> impl Strategy<Value = Image> {
    arb_dims().prop_flat_map(|dims| {
        let total = dims.total();
        proptest::collection::vec(0.0f64..1.0, total)
            .prop_map(move |data| Image::new(dims.clone(), data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// ‖f̂‖₂² = |J|·‖f‖₂² for the unscaled forward transform.
    #[test]
    fn plancherel(f in arb_image()) {
        let s = dft(&f);
        let lhs: f64 = s.data().iter().map(|z| z.norm_sqr()).sum();
        let rhs = f.dims().total() as f64 * f.norm2() * f.norm2();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
    }

    /// Magnitude data is blind to translations and inversion.
    #[test]
    fn measurement_invariant_under_associates(
        f in arb_image(),
        shift in proptest::collection::vec(-5i64..=5, 1..=2),
        inverted in any::<bool>(),
    ) {
        let d = f.dims().d();
        let v = IndexVector(shift.into_iter().cycle().take(d).collect());
        let assoc = Associate { v, inverted };
        let g = phaseret::measure::apply_associate(&f, &assoc);
        let (a, b) = (measure(&f), measure(&g));
        prop_assert!(a.dist2(&b) <= 1e-10 * a.norm2().max(1.0));
    }

    /// autocorrelation(F) = F ∗ F̌ — the quantity the data determines.
    #[test]
    fn autocorrelation_is_self_convolution(f in arb_image()) {
        let auto = autocorrelation(&f);
        let conv = convolve(&f, &invert_image(&f)).unwrap();
        prop_assert!(auto.dist2(&conv) <= 1e-9 * auto.norm2().max(1.0));
    }

    /// p-padding is monotone in p, contains the input, and is the
    /// identity at p = 0.
    #[test]
    fn pad_support_monotone(f in arb_image(), p in 0usize..3) {
        let mask = support_of(&f, 0.5);
        let p0 = pad_support(&mask, 0);
        prop_assert_eq!(p0.bits(), mask.bits());
        let a = pad_support(&mask, p);
        let b = pad_support(&mask, p + 1);
        prop_assert!(b.contains(&a));
        prop_assert!(a.contains(&mask));
    }

    /// P_A is idempotent, lands on the torus, and is closer to F than
    /// any other sampled torus point.
    #[test]
    fn torus_projection_laws(f in arb_image(), g in arb_image()) {
        prop_assume!(f.dims() == g.dims());
        let target = measure(&g);
        prop_assume!(target.max() > 1e-6);
        let pf = project_torus(&target, &f).unwrap();
        prop_assert!(measure(&pf).dist2(&target) <= 1e-9 * target.norm2());
        let twice = project_torus(&target, &pf).unwrap();
        prop_assert!(pf.dist2(&twice) <= 1e-9 * pf.norm2().max(1.0));
        // proximity against an arbitrary torus point
        let other = project_torus(&target, &g).unwrap();
        prop_assert!(f.dist2(&pf) <= f.dist2(&other) + 1e-9);
    }

    /// The hybrid map's residual is exactly its step norm, and the
    /// data-space misfit of the reconstruction is bounded by √|J|·E.
    #[test]
    fn hybrid_residual_identities(truth in arb_nonneg_image(), seed in 0u64..1000) {
        prop_assume!(truth.max_abs() > 1e-3);
        let a = measure(&truth);
        let constraint = ConstraintSet::Support(support_of(&truth, 1e-12));
        let mut f = random_torus_start(&a, seed).unwrap();
        let sqrt_j = (truth.dims().total() as f64).sqrt();
        for _ in 0..5 {
            let e = residual(&a, &constraint, &f).unwrap();
            let (next, step) = hybrid_step(&a, &constraint, &f).unwrap();
            prop_assert!((next.dist2(&f) - step).abs() <= 1e-10 * step.max(1.0));
            prop_assert!((e - step).abs() <= 1e-10 * step.max(1.0));
            let recon = constraint.project(&f);
            prop_assert!(measure(&recon).dist2(&a) <= sqrt_j * e + 1e-9);
            f = next;
        }
    }

    /// For non-negative images the zero-frequency magnitude equals the
    /// ℓ1 norm, and no point of the torus has smaller ℓ1 norm.
    #[test]
    fn l1_minimality_on_torus(f in arb_nonneg_image(), g in arb_image()) {
        prop_assume!(f.dims() == g.dims());
        prop_assume!(f.norm1() > 1e-6);
        let s = dft(&f);
        let zero_mode = s.data()[0];
        prop_assert!((zero_mode - Complex64::new(f.norm1(), 0.0)).norm() <= 1e-10 * f.norm1());
        let a = measure(&f);
        let on_torus = project_torus(&a, &g).unwrap();
        prop_assert!(on_torus.norm1() + 1e-9 * f.norm1().max(1.0) >= f.norm1());
    }

    /// ℓ1-ball projection: feasible, idempotent, and a proximity map
    /// (no sampled feasible point is closer).
    #[test]
    fn l1ball_projection_laws(f in arb_image(), radius in 0.1f64..3.0, g in arb_image()) {
        prop_assume!(f.dims() == g.dims());
        let p = project_l1ball(radius, &f);
        prop_assert!(p.norm1() <= radius + 1e-9);
        let twice = project_l1ball(radius, &p);
        prop_assert!(p.dist2(&twice) <= 1e-9);
        let other = project_l1ball(radius, &g);
        prop_assert!(f.dist2(&p) <= f.dist2(&other) + 1e-9);
    }

    /// Translation acts periodically and invertibly.
    #[test]
    fn translation_group_action(
        f in arb_image(),
        shift in proptest::collection::vec(-6i64..=6, 1..=2),
    ) {
        let d = f.dims().d();
        let v = IndexVector(shift.into_iter().cycle().take(d).collect());
        let back = IndexVector(v.0.iter().map(|&x| -x).collect());
        let round = translate(&translate(&f, &v), &back);
        prop_assert!(round.dist2(&f) <= 1e-12);
    }

    /// PRIMG rasters round-trip bit-exactly.
    #[test]
    fn raster_round_trip(f in arb_image()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.primg");
        phaseret::io::write_image(&path, &f).unwrap();
        let back = phaseret::io::read_image(&path).unwrap();
        prop_assert_eq!(back.dims(), f.dims());
        for (a, b) in back.data().iter().zip(f.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
