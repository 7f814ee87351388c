use std::f64::consts::FRAC_PI_2;

use onsager_core::branch::{h, OrderParameterModel};
use onsager_core::kernel::{assemble, KernelSpec};
use onsager_core::solver::{potential, solve, SolverConfig};
use onsager_core::space::{bl_distance, build_space, entropy, AxisSpec, Density, DiscreteSpace};
use proptest::prelude::*;

fn torus() -> DiscreteSpace {
    build_space(&[AxisSpec::circle(6), AxisSpec::interval(0.0, 1.0, 4)]).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..10.0f64], n).prop_filter("some mass", |v| v.iter().any(|x| *x > 0.0))
}

fn rhombus_space() -> DiscreteSpace {
    build_space(&[AxisSpec::interval(0.0, FRAC_PI_2, 24)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_is_nonnegative(v in values(24)) {
        let s = torus();
        let f = Density::normalized(&s, v).unwrap();
        prop_assert!(entropy(&s, &f).unwrap() >= -1e-15);
    }

    #[test]
    fn bl_is_a_metric_bounded_by_total_variation(a in values(24), b in values(24), c in values(24)) {
        let s = torus();
        let (f, g, k) = (
            Density::normalized(&s, a).unwrap(),
            Density::normalized(&s, b).unwrap(),
            Density::normalized(&s, c).unwrap(),
        );
        let fg = bl_distance(&s, &f, &g).unwrap();
        prop_assert!((fg - bl_distance(&s, &g, &f).unwrap()).abs() < 1e-12);
        prop_assert!(bl_distance(&s, &f, &f).unwrap().abs() < 1e-12);
        prop_assert!(fg <= bl_distance(&s, &f, &k).unwrap() + bl_distance(&s, &k, &g).unwrap() + 1e-12);
        let tv: f64 = (0..s.len()).map(|i| (f[i] - g[i]).abs() * s.weight(i)).sum();
        prop_assert!(fg <= tv + 1e-12);
    }

    #[test]
    fn h_is_odd(a in -1.0..1.0f64, b in 0.0..2000.0f64) {
        let m = OrderParameterModel::two_rods_with_resolution(64).unwrap();
        prop_assert_eq!(h(&m, -a, b).unwrap(), -h(&m, a, b).unwrap());
    }

    #[test]
    fn rhombus_potential_is_bounded_and_lipschitz(v in values(24)) {
        let s = rhombus_space();
        let k = assemble(&KernelSpec::RhombusSymdiff, &s).unwrap();
        let f = Density::normalized(&s, v).unwrap();
        let u = potential(&k, &s, &f).unwrap();
        for i in 0..s.len() {
            prop_assert!(u[i] >= 0.0 && u[i] <= k.sup_norm() + 1e-12);
            // the symmetric difference area is a metric, so U moves by at most k(p, p')
            for j in 0..s.len() {
                prop_assert!((u[i] - u[j]).abs() <= k.entry(i, j) + 1e-12);
            }
        }
    }

    #[test]
    fn accepted_steps_never_raise_the_energy(v in values(24), b in 0.5..100.0f64, damping in 0.2..1.0f64) {
        let s = rhombus_space();
        let k = assemble(&KernelSpec::RhombusSymdiff, &s).unwrap();
        let init = Density::normalized(&s, v).unwrap();
        let cfg = SolverConfig { damping, max_iterations: 200, ..Default::default() };
        let st = solve(&k, &s, &cfg, b, &init).unwrap();
        for w in st.trace.windows(2) {
            prop_assert!(w[1].energy <= w[0].energy + 1e-12 * w[0].energy.abs().max(1.0));
        }
    }
}
