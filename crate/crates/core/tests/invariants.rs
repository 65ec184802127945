use std::sync::Arc;

use logbound::analysis::{ground_level, limit_profile};
use logbound::functional::{energy_total, ProblemSpec};
use logbound::grid::{Field, Grid, GridMode};
use logbound::penalty::Region;
use logbound::potential::{parse_potential, Potential};
use logbound::solve::{cutoff, nehari_scale, ProblemTemplate};
use proptest::prelude::*;

fn spec(a: f64) -> ProblemSpec {
    ProblemTemplate {
        potential: Potential::constant(a),
        k: None,
        omega: Region::ball(1.0),
        r0: 3.0,
        kappa: 0.0,
        gauge_shift: None,
        dim: 1,
        mode: GridMode::Full,
        n: 257,
        half_width: None,
        r_weight: None,
    }
    .build(0.25)
    .unwrap()
}

fn bumps(spec: &ProblemSpec, params: &[(f64, f64, f64)]) -> Field {
    Field::from_fn(spec.grid().clone(), |y| {
        params.iter().map(|&(c, w, a)| a * (-(y[0] - c).powi(2) / (2.0 * w * w)).exp()).sum()
    })
}

fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x1".to_string()),
        (-5i32..6).prop_map(|k| format!("{}", k as f64 / 2.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            inner.clone().prop_map(|a| format!("-{a}")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.prop_map(|a| format!("exp(-({a})^2)")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_expressions_reparse(src in expr(), x in -2.0f64..2.0) {
        let e = parse_potential(&src).unwrap();
        let back = parse_potential(&e.to_string()).unwrap();
        let (a, b) = (e.eval(&[x]).unwrap(), back.eval(&[x]).unwrap());
        prop_assert!(a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0), "{src}: {a} vs {b}");
    }

    #[test]
    fn energy_ignores_sign(params in prop::collection::vec((-3.0f64..3.0, 0.5f64..2.0, -2.0f64..2.0), 1..4)) {
        let s = spec(0.5);
        let u = bumps(&s, &params);
        let e = energy_total(&u, &s);
        let scale = e.abs().max(1.0);
        prop_assert!((energy_total(&u.scaled(-1.0), &s) - e).abs() <= 1e-12 * scale);
    }

    #[test]
    fn nehari_point_maximizes_the_ray(params in prop::collection::vec((-2.0f64..2.0, 0.6f64..2.0, 0.1f64..2.0), 1..3), a in -1.0f64..1.0) {
        let s = spec(a);
        let u = bumps(&s, &params);
        let (_, p) = nehari_scale(&u, &s).unwrap();
        let top = energy_total(&p, &s);
        prop_assert!(top > 0.0);
        for f in [0.9, 0.99, 1.01, 1.1] {
            prop_assert!(energy_total(&p.scaled(f), &s) <= top * (1.0 + 1e-12));
        }
    }

    #[test]
    fn level_scales_with_the_potential(a in -3.0f64..3.0, d in 0.0f64..2.0, dim in 1usize..4) {
        let m = ground_level(a, 1.0, dim);
        prop_assert!((ground_level(a + d, 1.0, dim) / m - d.exp()).abs() <= 1e-12 * d.exp());
        let p = limit_profile(a, 1.0, dim).unwrap();
        prop_assert!(p.ray_energy(1.0) >= p.ray_energy(1.0 + d / 4.0 + 1e-3));
        prop_assert!(p.ray_energy(1.0) >= p.ray_energy(1.0 / (1.0 + d)));
    }

    #[test]
    fn cutoff_is_a_monotone_switch(r in 0.0f64..3.0, h in 0.0f64..0.5) {
        let c = cutoff(r);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!(cutoff(r + h) <= c);
        prop_assert!((cutoff(r + h) - c).abs() <= 4.0 * h + 1e-12);
    }

    #[test]
    fn csv_round_trip(vals in prop::collection::vec(-1e3f64..1e3, 33)) {
        let g = Arc::new(Grid::new(1, GridMode::Full, 4.0, 33).unwrap());
        let mut f = Field::from_values(g.clone(), vals).unwrap();
        f.enforce_dirichlet();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = Field::read_csv(g, buf.as_slice()).unwrap();
        prop_assert_eq!(back.values(), f.values());
    }
}
