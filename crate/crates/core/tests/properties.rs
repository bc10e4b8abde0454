use brw_core::engine::TopK;
use brw_core::oracle::{GridDistribution, GridOptions, Window};
use brw_core::stats::{exceedance_count, ks_two_sample, Ecdf};
use brw_core::{OffspringKind, OffspringLaw, StepLaw};
use proptest::prelude::*;

fn atoms() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 2..6).prop_map(|w| {
        let t: f64 = w.iter().sum();
        w.into_iter().map(|x| x / t).collect()
    })
}

proptest! {
    #[test]
    fn ks_invariant_under_increasing_maps(
        a in prop::collection::vec(-50.0f64..50.0, 1..60),
        b in prop::collection::vec(-50.0f64..50.0, 1..60),
    ) {
        let d = ks_two_sample(&a, &b).unwrap();
        let f = |x: &f64| x.exp() * 3.0 + x;
        let (fa, fb): (Vec<f64>, Vec<f64>) = (a.iter().map(f).collect(), b.iter().map(f).collect());
        prop_assert_eq!(d, ks_two_sample(&fa, &fb).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn convolution_conserves_mass_and_keeps_brackets_monotone(
        mass in atoms(),
        n in 1u32..5,
        half in prop::option::of(0.5f64..4.0),
    ) {
        let g = GridDistribution::from_atoms(-1.0, 0.5, mass).unwrap();
        let w = half.map(Window::symmetric);
        let c = g.convolve_power(n, w, GridOptions::default()).unwrap();
        prop_assert!((c.total_mass() - 1.0).abs() <= 1e-12);
        prop_assert!(c.mass().iter().all(|&p| p >= 0.0));
        let mut prev = c.tail_prob(-20.0);
        for i in -79..80 {
            let b = c.tail_prob(i as f64 * 0.25);
            prop_assert!(b.lower <= b.upper);
            prop_assert!(b.lower <= prev.lower && b.upper <= prev.upper);
            prev = b;
        }
    }

    #[test]
    fn topk_keeps_the_largest(xs in prop::collection::vec(-1e6f64..1e6, 0..200), k in 1usize..20) {
        let mut t = TopK::new(k);
        for &x in &xs {
            t.offer(x);
        }
        let mut want = xs.clone();
        want.sort_by(|a, b| b.total_cmp(a));
        want.truncate(k);
        prop_assert_eq!(t.to_sorted_desc(), want);
    }

    #[test]
    fn ecdf_quantile_monotone_and_bracketed(xs in prop::collection::vec(-10.0f64..10.0, 1..100), p in 0.0f64..1.0, dp in 0.0f64..0.5) {
        let e = Ecdf::new(&xs).unwrap();
        let (q, q2) = (e.quantile(p), e.quantile((p + dp).min(1.0)));
        let s = e.sorted();
        prop_assert!(s[0] <= q && q <= q2 && q2 <= s[s.len() - 1]);
        // linear interpolation between neighbouring order statistics
        let pos = p * (s.len() - 1) as f64;
        prop_assert!(s[pos.floor() as usize] <= q && q <= s[pos.ceil() as usize]);
        prop_assert!(e.eval(q2) >= e.eval(q));
    }

    #[test]
    fn step_survival_symmetric_and_monotone(r in 0.2f64..0.99, x in 0.0f64..200.0, dx in 0.0f64..5.0) {
        let s = StepLaw::symmetric_weibull(r).unwrap();
        prop_assert!(s.survival(x + dx) <= s.survival(x));
        prop_assert!((s.survival(-x) - (1.0 - s.survival(x))).abs() <= 1e-15);
        prop_assert!((s.cdf(x) + s.survival(x) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn extinction_probability_is_a_fixed_point(p0 in 0.0f64..0.45, p1 in 0.0f64..0.3) {
        let rest = 1.0 - p0 - p1;
        let law = OffspringLaw::new(OffspringKind::Custom { pmf: vec![(0, p0), (1, p1), (3, rest)] }).unwrap();
        let q = law.q();
        prop_assert!((law.pgf(q) - q).abs() <= 1e-10);
        prop_assert!((0.0..1.0).contains(&q));
    }

    #[test]
    fn curve_equal_to_trajectory_never_exceeded(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let traj: Vec<Option<f64>> = v.iter().copied().map(Some).collect();
        let e = exceedance_count(&traj, &v).unwrap();
        prop_assert!(e.above.is_empty());
        prop_assert!(e.below.is_empty());
    }
}
