use leastgrad::dirichlet::*;
use leastgrad::pharmonic::{continuation_p_to_1, solve_p_on, SolverConfig, DEFAULT_P_SCHEDULE};
use leastgrad::space::*;
use leastgrad::Error;
use std::f64::consts::PI;

fn grid(shape: Shape, h: f64, w: MeasureWeights) -> (Space, Region) {
    build_grid(&shape, h, &w, &GridOptions::default()).unwrap()
}

fn field(s: &Space, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    (0..s.len()).map(|i| f(s.pos(i))).collect()
}

fn radius(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

/// 0 inside the middle radius 0.75 of the annulus, 1 outside.
fn annulus_step(s: &Space) -> Vec<f64> {
    field(s, |p| if radius(p) < 0.75 { 0.0 } else { 1.0 })
}

fn l1(s: &Space, r: &Region, a: &[f64], b: &[f64]) -> f64 {
    r.omega().iter().map(|i| s.measure(i) * (a[i] - b[i]).abs()).sum()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

const H: f64 = 1.0 / 64.0;

#[test]
fn linear_data_on_the_disk() {
    let (s, r) = grid(Shape::Disk { r: 1.0 }, H, MeasureWeights::Uniform);
    let x = field(&s, |p| p[0]);
    let cfg = DirichletConfig::default();
    let t = solve_problem_t(&s, &r, &x, &cfg).unwrap();
    assert!(rel(t.report.energy, PI) <= 0.05, "{}", t.report.energy);
    assert!(l1(&s, &r, &t.values, &x) <= 0.05 * PI);
    // x itself is admissible, so the minimum cannot exceed its energy
    assert!(t.report.energy <= energy_t(&s, &r, &x, &x) * (1.0 + 1e-12));
    assert!((energy_t(&s, &r, &t.values, &x) - t.report.energy).abs() <= 1e-9 * t.report.energy);
    assert!(trace_jump_energy(&s, &r, &t.values, &x) <= 0.05 * PI);

    let b = solve_problem_b(&s, &r, &x, &cfg).unwrap();
    assert!(rel(b.report.energy, t.report.energy) <= 0.02);
}

#[test]
fn annulus_jump_sits_on_the_inner_circle() {
    let (s, r) = grid(Shape::Annulus { a: 0.5, b: 1.0 }, H, MeasureWeights::Uniform);
    let f = annulus_step(&s);
    let t = solve_problem_t(&s, &r, &f, &DirichletConfig::default()).unwrap();
    assert!(rel(t.report.energy, PI) <= 0.05, "{}", t.report.energy);
    for i in r.omega().iter().filter(|&i| radius(s.pos(i)) > 0.55) {
        assert!(t.values[i] >= 0.95);
    }
    // radial oracle: a jump of 1 across the circle of radius ρ costs 2πρ, cheapest at ρ = a
    let candidates: Vec<f64> = (0..=50).map(|k| 2.0 * PI * (0.5 + 0.01 * k as f64)).collect();
    assert_eq!(candidates.iter().cloned().fold(f64::INFINITY, f64::min), PI);
    let one = vec![1.0; s.len()];
    assert!(rel(trace_jump_energy(&s, &r, &one, &f), PI) <= 0.05);
    assert_eq!(trace_jump_energy(&s, &r, &f, &f), 0.0);
}

#[test]
fn weighted_annulus_prefers_the_cheap_side_in_b() {
    let (s, r) = grid(Shape::Annulus { a: 0.5, b: 1.0 }, H, MeasureWeights::TwoPhase { inside: 1.0, outside: 0.5 });
    let f = annulus_step(&s);
    let cfg = DirichletConfig::default();
    let b = solve_problem_b(&s, &r, &f, &cfg).unwrap();
    let t = solve_problem_t(&s, &r, &f, &cfg).unwrap();
    // candidates: v ≡ 1 (jump at the inner circle) and v ≡ 0 (jump at the outer one)
    let (zero, one) = (vec![0.0; s.len()], vec![1.0; s.len()]);
    let best_b = energy_b(&s, &r, &one, &f).min(energy_b(&s, &r, &zero, &f));
    let best_t = energy_t(&s, &r, &one, &f).min(energy_t(&s, &r, &zero, &f));
    assert!(b.report.energy <= best_b * (1.0 + 1e-9) && rel(b.report.energy, best_b) <= 0.05);
    assert!(t.report.energy <= best_t * (1.0 + 1e-9) && rel(t.report.energy, best_t) <= 0.05);
    assert!(rel(b.report.energy, 0.5 * PI) <= 0.05, "{}", b.report.energy);
    assert!(rel(t.report.energy, PI) <= 0.05, "{}", t.report.energy);
}

#[test]
fn constant_data_costs_nothing() {
    let (s, r) = grid(Shape::Annulus { a: 0.5, b: 1.0 }, 1.0 / 32.0, MeasureWeights::TwoPhase { inside: 1.0, outside: 0.5 });
    let c = vec![-0.7; s.len()];
    for variant in [Variant::B, Variant::T] {
        let sol = solve_problem(&s, &r, &c, variant, &DirichletConfig::default()).unwrap();
        assert_eq!(sol.report.energy, 0.0);
        assert!(sol.values.iter().all(|&v| v == -0.7));
        let p = inner_approximation_pipeline(&s, &r, &c, &default_widths(1.0 / 32.0), &DEFAULT_PIPELINE_P, &DirichletConfig::default()).unwrap();
        assert!(p.stages.iter().all(|st| st.energy.abs() <= 1e-9));
    }
}

#[test]
fn backends_agree() {
    let (s, r) = grid(Shape::Disk { r: 1.0 }, 1.0 / 16.0, MeasureWeights::TwoPhase { inside: 1.0, outside: 0.5 });
    let x = field(&s, |p| p[0] - 0.3 * p[1]);
    let cfg = DirichletConfig::default();
    for variant in [Variant::B, Variant::T] {
        let c = compare_backends(&s, &r, &x, variant, &cfg).unwrap();
        assert!(c.agree, "{variant:?}: {}", c.relative_difference);
        assert!(c.first_order.report.relative_gap <= cfg.tolerances.gap_tol);
    }
}

#[test]
fn continuation_limit_solves_t_on_the_disk() {
    let (s, r) = grid(Shape::Disk { r: 1.0 }, 1.0 / 32.0, MeasureWeights::Uniform);
    let x = field(&s, |p| p[0]);
    let cont = continuation_p_to_1(&s, &r, &x, &DEFAULT_P_SCHEDULE, &SolverConfig::default()).unwrap();
    let direct = solve_problem_t(&s, &r, &x, &DirichletConfig::default()).unwrap();
    let e = energy_t(&s, &r, cont.limit_field(), &x);
    assert!(rel(e, direct.report.energy) <= 0.03);
    assert!(l1(&s, &r, cont.limit_field(), &direct.values) <= 0.05 * PI);

    let opts = VerifyOptions { trials: 200, adversarial: true, ..VerifyOptions::default() };
    let rep = verify_least_gradient(&s, &r, cont.limit_field(), &opts).unwrap();
    assert!(rep.worst_delta >= -1e-6, "{}", rep.worst_delta);
    assert!(rep.adversarial_improvement.unwrap() <= rep.slack);
    assert!(rep.passed);
}

#[test]
fn wiggly_cut_is_rejected() {
    let h = 1.0 / 16.0;
    let (s, r) = grid(Shape::Disk { r: 1.0 }, h, MeasureWeights::Uniform);
    let u = field(&s, |p| if p[1] > 0.2 * (6.0 * p[0]).sin() { 1.0 } else { 0.0 });
    let opts = VerifyOptions { trials: 50, adversarial: true, ..VerifyOptions::default() };
    let rep = verify_least_gradient(&s, &r, &u, &opts).unwrap();
    assert!(!rep.passed);
    let gain = rep.adversarial_improvement.unwrap();
    assert!(gain >= 0.05, "{gain}");
    // the returned field really has lower variation
    let better = rep.adversarial_field.unwrap();
    assert!((domain_tv(&s, &r, &u) - domain_tv(&s, &r, &better) - gain).abs() <= 1e-9);
}

#[test]
fn zero_perturbation_and_test_classes() {
    let (s, r) = grid(Shape::SlitDisk { slits: vec![[[-1.0, 0.0], [0.0, 0.0]]] }, 1.0 / 16.0, MeasureWeights::Uniform);
    let u = field(&s, |p| p[0] * p[1]);
    assert_eq!(perturbation_delta(&s, &r, &u, &vec![0.0; s.len()]), 0.0);
    let rep = verify_least_gradient(&s, &r, &u, &VerifyOptions { trials: 0, ..VerifyOptions::default() }).unwrap();
    assert_eq!(rep.worst_delta, 0.0);
    for class in [TestClass::CompactSupport, TestClass::ZeroTrace, TestClass::WeakZeroTrace] {
        let sup = perturbation_support(&s, &r, class);
        let hop = hops_to_complement(&s, &r);
        assert!(sup.iter().all(|i| hop[i] >= 1 && r.is_omega(i)));
    }
    let (s, r) = grid(Shape::Disk { r: 0.05 }, 1.0 / 32.0, MeasureWeights::Uniform);
    let u = vec![0.0; s.len()];
    assert!(matches!(verify_least_gradient(&s, &r, &u, &VerifyOptions::default()), Err(Error::EmptyRegion(_))));
}

#[test]
fn outer_pipeline_matches_direct_b() {
    let h = 1.0 / 32.0;
    let (s, r) = grid(Shape::Disk { r: 1.0 }, h, MeasureWeights::TwoPhase { inside: 1.0, outside: 0.5 });
    let x = field(&s, |p| p[0]);
    let cfg = DirichletConfig::default();
    let direct = solve_problem_b(&s, &r, &x, &cfg).unwrap();
    let pipe = outer_approximation_pipeline(&s, &r, &x, &default_widths(h), &DEFAULT_PIPELINE_P, &cfg).unwrap();
    assert_eq!(pipe.variant, Variant::B);
    assert_eq!(pipe.stages.len(), 3);
    assert!(pipe.stages.windows(2).all(|w| w[0].nodes > w[1].nodes));
    assert!(rel(pipe.energy, direct.report.energy) <= 0.03, "{} vs {}", pipe.energy, direct.report.energy);
}

#[test]
fn inner_pipeline_on_the_annulus() {
    let h = 1.0 / 128.0;
    let (s, r) = grid(Shape::Annulus { a: 0.5, b: 1.0 }, h, MeasureWeights::Uniform);
    let f = annulus_step(&s);
    let pipe = inner_approximation_pipeline(&s, &r, &f, &default_widths(h), &DEFAULT_PIPELINE_P, &DirichletConfig::default()).unwrap();
    assert_eq!(pipe.variant, Variant::T);
    assert!(rel(pipe.energy, PI) <= 0.05, "{:?}", pipe.stages);
}

#[test]
fn affine_data_passes_through_every_stage() {
    let h = 1.0 / 32.0;
    let (s, r) = grid(Shape::Square { s: 1.0 }, h, MeasureWeights::Uniform);
    let f = field(&s, |p| 0.4 * p[0] - 1.1 * p[1]);
    let cfg = DirichletConfig::default();
    for pipe in [
        outer_approximation_pipeline(&s, &r, &f, &default_widths(h), &DEFAULT_PIPELINE_P, &cfg).unwrap(),
        inner_approximation_pipeline(&s, &r, &f, &default_widths(h), &DEFAULT_PIPELINE_P, &cfg).unwrap(),
    ] {
        for it in &pipe.iterates {
            assert!(it.iter().zip(&f).all(|(a, b)| (a - b).abs() <= 1e-6));
        }
        let target = energy(&s, &r, &f, &f, pipe.variant);
        assert!(pipe.stages.iter().all(|st| (st.energy - target).abs() <= 1e-6 * target));
    }
}

#[test]
fn single_stage_pipeline_is_plain_continuation() {
    let h = 1.0 / 32.0;
    let (s, r) = grid(Shape::Disk { r: 1.0 }, h, MeasureWeights::TwoPhase { inside: 1.0, outside: 0.5 });
    let f = field(&s, |p| (2.0 * p[0]).sin() + p[1]);
    let cfg = DirichletConfig::default();
    let w = 4.0 * h;
    let pipe = outer_approximation_pipeline(&s, &r, &f, &[w], &[1.1], &cfg).unwrap();
    let free = r.omega().union(&r.collar(w));
    let plain = solve_p_on(&s, &free, &f, &SolverConfig { p: 1.1, ..cfg.p_solver.clone() }, None).unwrap();
    assert_eq!(pipe.values, plain.values);
}

#[test]
fn schedules_are_validated() {
    let h = 1.0 / 32.0;
    let (s, r) = grid(Shape::Disk { r: 1.0 }, h, MeasureWeights::Uniform);
    let f = field(&s, |p| p[0]);
    let cfg = DirichletConfig::default();
    let run = |w: &[f64], p: &[f64]| outer_approximation_pipeline(&s, &r, &f, w, p, &cfg);
    assert!(run(&[], &[]).is_err());
    assert!(run(&[8.0 * h, 4.0 * h], &[1.2]).is_err());
    assert!(run(&[4.0 * h, 8.0 * h], &[1.2, 1.1]).is_err());
    assert!(run(&[8.0 * h, 4.0 * h], &[1.1, 1.2]).is_err());
    assert!(run(&[8.0 * h], &[2.5]).is_err());
    assert!(matches!(run(&[8.0 * h, h], &[1.2, 1.1]), Err(Error::BelowResolution { .. })));
    let bad = vec![f64::NAN; s.len()];
    assert!(solve_problem_t(&s, &r, &bad, &cfg).is_err());
    assert!(solve_problem_t(&s, &r, &f[..10], &cfg).is_err());
}
