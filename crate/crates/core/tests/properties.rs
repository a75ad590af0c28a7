use proptest::prelude::*;

use rarebayes::bernstein::{BernsteinApprox, GammaCertificate};
use rarebayes::bounds::{remark3pp_threshold, theorem2_constants};
use rarebayes::posterior::{bracket, mean_dirichlet, mean_mixture, mean_quadrature, Counts};
use rarebayes::priors::{eval_density, ConditionPPrior, DirichletMixturePrior, Prior, SimplexPoint, TildePi};
use rarebayes::quadrature::QuadratureSpec;
use rarebayes::simulate::rng::stream;
use rarebayes::simulate::sample_counts;
use rarebayes::simulate::wilson::{wilson_interval, Z95};

fn sine_prior() -> Prior {
    let tilde = TildePi::Sine { offset: 2.0, amplitude: 1.0, frequency: 1.0 };
    Prior::ConditionP(ConditionPPrior::new(vec![1.0, 1.0], tilde).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplex_points_are_normalized(raw in prop::collection::vec(0.0f64..10.0, 2..6)) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let p = SimplexPoint::new(raw.iter().map(|x| x / total).collect()).unwrap();
        let s: f64 = p.coords().iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
        prop_assert!(p.coords().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn dirichlet_tilde_pi_is_constant(
        alpha in prop::collection::vec(0.3f64..4.0, 3),
        a in 0.05f64..0.9, b in 0.05f64..0.9,
    ) {
        prop_assume!(a + b < 0.95);
        let prior = Prior::dirichlet(alpha.clone()).unwrap();
        let ratio = |p: &[f64]| {
            let pt = SimplexPoint::new(p.to_vec()).unwrap();
            let kernel: f64 = p.iter().zip(&alpha).map(|(x, a)| x.powf(a - 1.0)).product();
            eval_density(&prior, &pt).unwrap().value / kernel
        };
        let r1 = ratio(&[a, b, 1.0 - a - b]);
        let r2 = ratio(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        prop_assert!((r1 - r2).abs() <= 1e-10 * r2.abs());
    }

    #[test]
    fn bernstein_partition_of_unity(m in 0u32..40, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
        let h = BernsteinApprox::fit_fn(3, m, |_| 1.0).unwrap();
        prop_assert!((h.eval(&[a, b, 1.0 - a - b]) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn dirichlet_means_sum_to_one_and_sit_in_bracket(
        alpha in prop::collection::vec(0.2f64..5.0, 2..5),
        tallies in prop::collection::vec(0u64..40, 4),
    ) {
        let k = alpha.len();
        let counts = Counts::new(tallies[..k].to_vec()).unwrap();
        let cert = GammaCertificate::dirichlet_exact(&alpha, 0.2);
        let mut total = 0.0;
        for side in 0..k {
            let m = mean_dirichlet(&alpha, &counts, side).unwrap();
            let br = bracket(&cert, &counts, side).unwrap();
            prop_assert!(br.lower > 0.0);
            prop_assert!(br.contains(m, 1e-15));
            total += m;
        }
        prop_assert!((total - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn mixture_means_sum_to_one(
        w in 0.05f64..0.95,
        t1 in prop::collection::vec(1.0f64..3.0, 2),
        t2 in prop::collection::vec(1.0f64..3.0, 2),
        x in 0u64..50, y in 0u64..50,
    ) {
        let prior = DirichletMixturePrior::new(vec![w, 1.0 - w], vec![t1, t2], None).unwrap();
        let counts = Counts::binary(x, y);
        let s = mean_mixture(&prior, &counts, 0).unwrap() + mean_mixture(&prior, &counts, 1).unwrap();
        prop_assert!((s - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn quadrature_agrees_with_closed_form(
        a in 0.3f64..4.0, b in 0.3f64..4.0, x in 0u64..60, y in 0u64..60,
    ) {
        let prior = Prior::ConditionP(ConditionPPrior::new(vec![a, b], TildePi::Constant(1.0)).unwrap());
        let counts = Counts::binary(x, y);
        let q = mean_quadrature(&prior, &counts, 0, &QuadratureSpec::default()).unwrap();
        let exact = mean_dirichlet(&[a, b], &counts, 0).unwrap();
        prop_assert!((q.mean - exact).abs() <= 1e-9, "{} vs {}", q.mean, exact);
    }

    #[test]
    fn sine_prior_means_sum_to_one(x in 0u64..80, y in 0u64..80) {
        let prior = sine_prior();
        let counts = Counts::binary(x, y);
        let spec = QuadratureSpec::default();
        let s = mean_quadrature(&prior, &counts, 0, &spec).unwrap().mean
            + mean_quadrature(&prior, &counts, 1, &spec).unwrap().mean;
        prop_assert!((s - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn two_outcome_means_increase_with_count(n in 1u64..80) {
        let spec = QuadratureSpec::default();
        let prior = sine_prior();
        let mut last_q = 0.0;
        let mut last_d = 0.0;
        for x in 0..=n {
            let counts = Counts::binary(x, n - x);
            let q = mean_quadrature(&prior, &counts, 0, &spec).unwrap().mean;
            let d = mean_dirichlet(&[0.5, 2.0], &counts, 0).unwrap();
            prop_assert!(q >= last_q && d >= last_d);
            last_q = q;
            last_d = d;
        }
    }

    #[test]
    fn wilson_interval_brackets_estimate(s in 0u64..500, extra in 0u64..500) {
        let n = s + extra;
        prop_assume!(n > 0);
        let (lo, hi) = wilson_interval(s, n, Z95);
        let phat = s as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= phat && phat <= hi && hi <= 1.0);
    }

    #[test]
    fn samples_are_deterministic_and_complete(seed in any::<u64>(), n in 0u64..5000, p1 in 0.0f64..1.0) {
        let p = SimplexPoint::new(vec![p1 / 2.0, p1 / 2.0, 1.0 - p1]).unwrap();
        let a = sample_counts(&p, n, &mut stream(seed, 3, 9));
        let b = sample_counts(&p, n, &mut stream(seed, 3, 9));
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.n(), n);
    }

    #[test]
    fn single_die_threshold_is_monotone(e1 in 0.01f64..0.99, e2 in 0.01f64..0.99, g1 in 1.0f64..50.0, g2 in 1.0f64..50.0) {
        let (elo, ehi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (glo, ghi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        prop_assert!(remark3pp_threshold(ehi, glo).unwrap().n <= remark3pp_threshold(elo, glo).unwrap().n);
        prop_assert!(remark3pp_threshold(elo, glo).unwrap().n <= remark3pp_threshold(elo, ghi).unwrap().n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn chain_constants_satisfy_their_inequalities(
        c in 0.5f64..3.0, delta in 0.2f64..0.9, eta in 0.05f64..0.9, eps in 0.05f64..0.5,
    ) {
        let cert = GammaCertificate::dirichlet_exact(&[1.0, 1.0], 0.05);
        let t = theorem2_constants(c, delta, eta, eps, &cert).unwrap();
        prop_assert!(t.verify().is_ok());
        prop_assert!(t.feasibility_margin >= 1e-9);
        prop_assert!(t.n >= t.n1 && t.n >= t.n2);
    }
}
