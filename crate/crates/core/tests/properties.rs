use proptest::prelude::*;

use revlab::cli::report::num;
use revlab::kam::{diophantine_check, rotation_number, verify_certificate, AnnulusChart, DiophantineOutcome};
use revlab::system::{rigid_rotation, twist_std, InvolutionId};
use revlab::Point;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn twist_family_is_reversible(k in 0.0..1.0f64, eps in 0.0..0.1f64, u in 0.0..1.0f64, v in 0.0..1.0f64) {
        let sys = twist_std(k, eps, 0.23).unwrap();
        let (lo, hi) = sys.sample_box;
        let p = Point::new(lo.x + u * (hi.x - lo.x), lo.y + v * (hi.y - lo.y));
        prop_assume!(sys.domain.contains(p));
        let g = sys.involution(InvolutionId::G);
        let h = sys.involution(InvolutionId::FG);
        prop_assert!(sys.distance(g.apply(g.apply(p).unwrap()).unwrap(), p) < 1e-12);
        prop_assert!(sys.distance(h.apply(h.apply(p).unwrap()).unwrap(), p) < 1e-12);
        let fgfg = sys.step(g.apply(sys.step(g.apply(p).unwrap()).unwrap()).unwrap()).unwrap();
        prop_assert!(sys.distance(fgfg, p) < 1e-12);
    }

    #[test]
    fn rigid_rotation_number_is_angle_over_two_pi(psi in 0.05..2.8f64, r in 0.1..0.9f64) {
        let sys = rigid_rotation(psi);
        let chart = AnnulusChart::polar(Point::new(0.0, 0.0), 1.0);
        let est = rotation_number(&sys, &chart, Point::new(r, 0.0), 4000).unwrap();
        prop_assert!((est.psi0 - psi / std::f64::consts::TAU).abs() < 1e-10, "{} vs {}", est.psi0, psi);
    }

    #[test]
    fn diophantine_certificates_verify(psi0 in 0.001..0.999f64) {
        match diophantine_check(psi0, 1.0, 2000).unwrap() {
            DiophantineOutcome::Certificate(c) => {
                prop_assert!(verify_certificate(&c));
                let d1 = (psi0 - psi0.round()).abs();
                prop_assert!(c.k_constant <= d1 + 1e-15);
                prop_assert!(c.k_constant > 0.0);
            }
            DiophantineOutcome::Refusal { k, .. } => prop_assert!(k <= 2000),
        }
    }

    #[test]
    fn csv_numbers_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}
