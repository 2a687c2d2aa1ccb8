use leastgrad::calculus::LinkSelection;
use leastgrad::pharmonic::*;
use leastgrad::space::*;
use leastgrad::NodeSet;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn grid(shape: Shape, h: f64) -> (Space, Region) {
    build_grid(&shape, h, &MeasureWeights::Uniform, &GridOptions::default()).unwrap()
}

fn field(s: &Space, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    (0..s.len()).map(|i| f(s.pos(i))).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn radial_step(s: &Space) -> Vec<f64> {
    field(s, |p| if p[0].hypot(p[1]) < 0.75 { 0.0 } else { 1.0 })
}

#[test]
fn affine_data_is_reproduced_from_a_cold_start() {
    for shape in [Shape::Square { s: 1.0 }, Shape::Disk { r: 1.0 }] {
        let (s, r) = grid(shape, 1.0 / 32.0);
        let f = field(&s, |p| 0.4 * p[0] - 1.3 * p[1]);
        let zero = vec![0.0; s.len()];
        for p in [1.1, 1.5, 2.0, 3.0] {
            let sol = solve_p_on(&s, r.omega(), &f, &SolverConfig::with_p(p), Some(&zero)).unwrap();
            assert!(sup_diff(&sol.values, &f) <= 1e-6, "p = {p}");
        }
    }
}

#[test]
fn constant_data_gives_constant_solution() {
    let (s, r) = grid(Shape::Disk { r: 1.0 }, 1.0 / 16.0);
    let f = vec![0.7; s.len()];
    let sol = solve_p_dirichlet(&s, &r, &f, &SolverConfig::with_p(1.5)).unwrap();
    assert!(sup_diff(&sol.values, &f) == 0.0);
    assert_eq!(sol.report.energy, 0.0);
}

#[test]
fn two_harmonic_annulus_matches_log_profile() {
    // the staircase boundary costs O(h) in sup norm; 1/128 keeps it below 2%
    let (s, r) = grid(Shape::Annulus { a: 0.5, b: 1.0 }, 1.0 / 128.0);
    let f = radial_step(&s);
    let sol = solve_p_dirichlet(&s, &r, &f, &SolverConfig::with_p(2.0)).unwrap();
    let err = r
        .omega()
        .iter()
        .map(|i| {
            let rr = s.pos(i)[0].hypot(s.pos(i)[1]);
            (sol.values[i] - (rr / 0.5).ln() / 2f64.ln()).abs()
        })
        .fold(0.0, f64::max);
    assert!(err <= 0.02, "sup error {err}");
}

#[test]
fn energy_normalisation() {
    let (s, r) = grid(Shape::Square { s: 1.0 }, 1.0 / 32.0);
    let x = field(&s, |p| p[0]);
    let cells = LinkSelection::Cells(r.omega());
    assert!((energy(&s, &x, 2.0, cells) - 1.0).abs() <= 0.02);
    assert_eq!(energy(&s, &vec![3.0; s.len()], 2.0, cells), 0.0);

    let (s, r) = grid(Shape::Disk { r: 1.0 }, 1.0 / 32.0);
    let x = field(&s, |p| p[0]);
    let cells = LinkSelection::Cells(r.omega());
    let e1 = energy(&s, &x, 1.0, cells);
    assert!((e1 / PI - 1.0).abs() <= 0.02, "E_1 = {e1}");
    let tv = leastgrad::calculus::total_variation(&s, &x, cells, leastgrad::calculus::DensityRule::Average, None);
    assert!((e1 - tv).abs() <= 1e-12 * tv);
}

#[test]
fn rejects_bad_inputs() {
    let (s, r) = grid(Shape::Disk { r: 1.0 }, 1.0 / 8.0);
    let f = vec![0.0; s.len()];
    assert!(solve_p_dirichlet(&s, &r, &f, &SolverConfig::with_p(1.0)).is_err());
    assert!(solve_p_on(&s, &NodeSet::full(s.len()), &f, &SolverConfig::with_p(2.0), None).is_err());
    let mut bad = f.clone();
    bad[0] = f64::NAN;
    assert!(solve_p_dirichlet(&s, &r, &bad, &SolverConfig::with_p(2.0)).is_err());
    let cfg = SolverConfig::default();
    assert!(continuation_p_to_1(&s, &r, &f, &[1.1, 1.5], &cfg).is_err());
    assert!(continuation_p_to_1(&s, &r, &f, &[2.5, 1.5], &cfg).is_err());
    assert!(continuation_p_to_1(&s, &r, &f, &[], &cfg).is_err());
}

#[test]
fn different_initialisations_agree() {
    let (s, r) = grid(Shape::Disk { r: 1.0 }, 1.0 / 24.0);
    let f = radial_step(&s);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise: Vec<f64> = (0..s.len()).map(|_| rng.gen::<f64>()).collect();
    for p in [1.5, 2.0, 3.0] {
        let cfg = SolverConfig::with_p(p);
        let a = solve_p_on(&s, r.omega(), &f, &cfg, None).unwrap();
        let b = solve_p_on(&s, r.omega(), &f, &cfg, Some(&noise)).unwrap();
        assert!(sup_diff(&a.values, &b.values) <= 10.0 * cfg.residual_tol, "p = {p}");
    }
}

#[test]
fn smoothed_energy_never_increases_within_a_stage() {
    let (s, r) = grid(Shape::Annulus { a: 0.5, b: 1.0 }, 1.0 / 32.0);
    let f = radial_step(&s);
    let sol = solve_p_dirichlet(&s, &r, &f, &SolverConfig::with_p(1.2)).unwrap();
    for w in sol.log.windows(2) {
        if w[0].epsilon == w[1].epsilon {
            assert!(w[1].energy <= w[0].energy * (1.0 + 1e-13), "{:?}", w);
        }
    }
}

#[test]
fn annulus_continuation_jumps_at_the_inner_circle() {
    let (s, r) = grid(Shape::Annulus { a: 0.5, b: 1.0 }, 1.0 / 48.0);
    let f = radial_step(&s);
    let c = continuation_p_to_1(&s, &r, &f, &DEFAULT_P_SCHEDULE, &SolverConfig::default()).unwrap();
    assert_eq!(c.p_sequence, DEFAULT_P_SCHEDULE.to_vec());
    assert_eq!(c.fields.len(), DEFAULT_P_SCHEDULE.len());
    let u = c.limit_field();
    for i in r.omega().iter() {
        if s.pos(i)[0].hypot(s.pos(i)[1]) > 0.55 {
            assert!(u[i] >= 0.95, "u = {} at {:?}", u[i], s.pos(i));
        }
    }
    for (k, field) in c.fields.iter().enumerate() {
        assert!(field.iter().all(|&v| (-1e-9..=1.0 + 1e-9).contains(&v)), "step {k}");
    }
    assert!(c.steps.iter().all(|st| st.holder_ok));
    assert!(c.l1_deltas().iter().all(|d| d.is_finite()));
    assert_eq!(c.energy_trace().len(), c.steps.len());
}

#[test]
fn disk_continuation_keeps_affine_data() {
    let (s, r) = grid(Shape::Disk { r: 1.0 }, 1.0 / 32.0);
    let f = field(&s, |p| p[0]);
    let c = continuation_p_to_1(&s, &r, &f, &[1.5, 1.2, 1.1, 1.05, 1.02], &SolverConfig::default()).unwrap();
    for u in &c.fields {
        assert!(sup_diff(u, &f) <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn comparison_principle(seed in any::<u64>(), p in 1.2f64..2.5) {
        let (s, r) = grid(Shape::Disk { r: 1.0 }, 1.0 / 12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = f.iter().map(|v| v + rng.gen_range(0.0..0.5)).collect();
        let cfg = SolverConfig::with_p(p);
        let uf = solve_p_dirichlet(&s, &r, &f, &cfg).unwrap();
        let ug = solve_p_dirichlet(&s, &r, &g, &cfg).unwrap();
        for i in 0..s.len() {
            prop_assert!(uf.values[i] <= ug.values[i] + 1e-9);
        }
        let (lo, hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(uf.values.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
    }

    #[test]
    fn holder_bridge_on_random_data(seed in any::<u64>()) {
        let (s, r) = grid(Shape::Square { s: 1.0 }, 1.0 / 12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = continuation_p_to_1(&s, &r, &f, &[1.5, 1.25, 1.1], &SolverConfig::default()).unwrap();
        prop_assert!(c.steps.iter().all(|st| st.holder_ok));
    }
}
