use phplate::actuation::{controller_setpoints, Actuation, ActuatorParams, EquilibriumParams};
use phplate::config::{parse_config, Mode, RunConfig};
use phplate::controller::{
    controller_dissipation, controller_rhs, hc_gradient, ControllerParams, ControllerState,
};
use phplate::grid::{BoundaryConditions, Edge, EdgeProfile, Field, Grid, MultiIndex, PlateParams};
use phplate::plate::{PlantState, Plate};
use phplate::simulate::System;
use proptest::prelude::*;

fn field(g: &Grid, v: &[f64]) -> Field {
    Field::from_flat(g, v).unwrap()
}

fn small_plate() -> Plate {
    let params = PlateParams::default();
    let g = Grid::for_plate(&params, 13, 11).unwrap();
    Plate::new(g, params, BoundaryConditions::plate()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partial_is_linear(
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        f in prop::collection::vec(-1.0..1.0f64, 13 * 11),
        h in prop::collection::vec(-1.0..1.0f64, 13 * 11),
        d1 in 0usize..=2,
        d2 in 0usize..=2,
    ) {
        let g = Grid::new(13, 11, 1.0, 0.8).unwrap();
        let (f, h) = (field(&g, &f), field(&g, &h));
        let combo = Field::from_array(f.values() * a + &(h.values() * b)).unwrap();
        let idx = MultiIndex::new(d1, d2);
        let lhs = g.partial_interior(&combo, idx).unwrap();
        let pf = g.partial_interior(&f, idx).unwrap();
        let ph = g.partial_interior(&h, idx).unwrap();
        let scale = 1.0 / (g.dz1().powi(d1 as i32) * g.dz2().powi(d2 as i32));
        for ((l, x), y) in lhs.values.iter().zip(pf.values.iter()).zip(ph.values.iter()) {
            prop_assert!((l - (a * x + b * y)).abs() <= 1e-13 * scale * 16.0);
        }
    }

    #[test]
    fn energy_is_nonnegative(
        w in prop::collection::vec(-1.0..1.0f64, 13 * 11),
        p in prop::collection::vec(-1.0..1.0f64, 13 * 11),
    ) {
        let pl = small_plate();
        let g = *pl.grid();
        let s = PlantState { w: field(&g, &w), p: field(&g, &p) };
        prop_assert!(pl.potential_energy(&s.w) >= 0.0);
        prop_assert!(pl.total_energy(&s) >= pl.kinetic_energy(&s.p));
    }

    #[test]
    fn potential_energy_is_quadratic(
        w in prop::collection::vec(-1.0..1.0f64, 13 * 11),
        v in prop::collection::vec(-1.0..1.0f64, 13 * 11),
    ) {
        // V(w + v) = V(w) + ∇V(w)·v + V(v) for a quadratic form.
        let pl = small_plate();
        let g = *pl.grid();
        let sum: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + b).collect();
        let grad = pl.energy_gradient(&w);
        let dot: f64 = grad.iter().zip(&v).map(|(a, b)| a * b).sum();
        let lhs = pl.potential_energy(&field(&g, &sum));
        let rhs = pl.potential_energy(&field(&g, &w)) + dot + pl.potential_energy(&field(&g, &v));
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn domain_integral_of_density_is_energy(
        w in prop::collection::vec(-1.0..1.0f64, 13 * 11),
        p in prop::collection::vec(-1.0..1.0f64, 13 * 11),
    ) {
        let pl = small_plate();
        let g = *pl.grid();
        let s = PlantState { w: field(&g, &w), p: field(&g, &p) };
        let h = pl.total_energy(&s);
        let i = g.integrate_domain(&pl.hamiltonian_density(&s));
        prop_assert!((h - i).abs() <= 1e-12 * h.max(1.0));
    }

    #[test]
    fn controller_block_dissipates(
        x in prop::array::uniform4(-2.0..2.0f64),
    ) {
        let p = ControllerParams::default();
        let s = ControllerState { xc: x };
        let g = hc_gradient(&s, &p);
        let xd = controller_rhs(&s, [0.0, 0.0], &p);
        let rate: f64 = g.iter().zip(&xd).map(|(a, b)| a * b).sum();
        prop_assert!(rate <= 1e-12);
        prop_assert!((rate - controller_dissipation(&s, &p)).abs() <= 1e-10 * rate.abs().max(1.0));
    }

    #[test]
    fn setpoints_are_linear_in_target(
        a in -2.0..2.0f64,
        d in prop::collection::vec(-1.0..1.0f64, 21),
        e in prop::collection::vec(-1.0..1.0f64, 21),
    ) {
        let g = Grid::new(21, 21, 1.0, 1.0).unwrap();
        let act = Actuation::sample(&g, &ActuatorParams::default(), &EquilibriumParams::default()).unwrap();
        let lam = (&act.lambda_bottom, &act.lambda_top);
        let prof = |v: &[f64], edge| EdgeProfile::new(&g, edge, v.to_vec()).unwrap();
        let (d1, d2) = (prof(&d, Edge::Bottom), prof(&d, Edge::Top));
        let (e1, e2) = (prof(&e, Edge::Bottom), prof(&e, Edge::Top));
        let mix: Vec<f64> = d.iter().zip(&e).map(|(x, y)| a * x + y).collect();
        let (m1, m2) = (prof(&mix, Edge::Bottom), prof(&mix, Edge::Top));
        let sd = controller_setpoints(&g, lam, (&d1, &d2));
        let se = controller_setpoints(&g, lam, (&e1, &e2));
        let sm = controller_setpoints(&g, lam, (&m1, &m2));
        prop_assert!((sm.0 - (a * sd.0 + se.0)).abs() <= 1e-11);
        prop_assert!((sm.1 - (a * sd.1 + se.1)).abs() <= 1e-11);
    }

    #[test]
    fn config_text_round_trips(
        nu in 0.0..0.49f64,
        psi in 0.1..5.0f64,
        dt in 1e-4..1e-2f64,
        k1 in 1.0..5000.0f64,
        n in 3usize..8,
        mode in prop::sample::select(vec![Mode::OpenLoop, Mode::Controlled, Mode::ControlledObserver]),
    ) {
        let mut cfg = RunConfig { mode, n1: 4 * n + 1, ..RunConfig::default() };
        cfg.plate.nu = nu;
        cfg.actuator.psi = psi;
        cfg.sim.dt = dt;
        cfg.observer.k1 = k1;
        prop_assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn assembled_operator_matches_modules(seed in any::<u64>(), t in 0.0..5.0f64) {
        use rand::{Rng, SeedableRng};
        let mut cfg = RunConfig { mode: Mode::ControlledObserver, n1: 13, n2: 13, ..RunConfig::default() };
        cfg.input.amplitude = [0.3, 0.1];
        let sys = System::new(&cfg).unwrap();
        let l = sys.layout();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..l.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for k in 0..l.n {
            if sys.plate.dirichlet_mask()[k] {
                for off in [l.w(), l.p(), l.w_hat(), l.p_hat()] {
                    x[off + k] = 0.0;
                }
            }
        }
        let a = sys.rhs(t, &x);
        let b = sys.modular_rhs(t, &x).unwrap();
        let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-12 * scale);
        }
    }
}
