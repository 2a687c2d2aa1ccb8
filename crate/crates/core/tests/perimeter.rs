use leastgrad::cut::Backend;
use leastgrad::perimeter::*;
use leastgrad::space::*;
use leastgrad::NodeSet;
use proptest::prelude::*;
use std::f64::consts::PI;

const H: f64 = 1.0 / 64.0;

fn grid(shape: Shape, h: f64, w: MeasureWeights) -> (Space, Region) {
    build_grid(&shape, h, &w, &GridOptions::default()).unwrap()
}

fn weighted_disk(h: f64) -> (Space, Region) {
    grid(Shape::Disk { r: 1.0 }, h, MeasureWeights::TwoPhase { inside: 1.0, outside: 0.5 })
}

fn unit_disk_nodes(s: &Space) -> NodeSet {
    NodeSet::from_fn(s.len(), |i| s.pos(i)[0].hypot(s.pos(i)[1]) < 1.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn disk_perimeter_is_its_circumference() {
    let (s, r) = grid(Shape::Disk { r: 1.0 }, H, MeasureWeights::Uniform);
    let all = NodeSet::full(s.len());
    let sol = PerimeterSolver::default();
    let p = perimeter_relaxed(&s, r.omega(), &all, 1e-2, &sol).unwrap();
    assert!(rel(p.value, 2.0 * PI) <= 0.05, "{}", p.value);
    let q = inner_perimeter(&s, &r, &all, 1e-2, &sol).unwrap();
    assert!(rel(q.value, p.value) <= 0.02);
    // the minimizer is the indicator itself: cut length plus no fidelity
    let chi: Vec<f64> = (0..s.len()).map(|i| if r.is_omega(i) { 1.0 } else { 0.0 }).collect();
    assert_eq!(p.minimizer, chi);
}

#[test]
fn weighted_disk_separates_the_two_perimeters() {
    let (s, r) = weighted_disk(H);
    let c = comparability(&s, &r, &NodeSet::full(s.len()), &DEFAULT_TAUS, &PerimeterSolver::default()).unwrap();
    assert!(rel(c.relaxed, PI) <= 0.05, "{c:?}");
    assert!(rel(c.inner, 2.0 * PI) <= 0.05, "{c:?}");
    assert!(rel(c.ratio, 2.0) <= 0.1);
    assert!(c.relaxed <= c.inner);
}

#[test]
fn slit_is_invisible_to_the_relaxed_perimeter() {
    let (s, r) = grid(Shape::SlitDisk { slits: vec![[[-1.0, 0.0], [0.0, 0.0]]] }, H, MeasureWeights::Uniform);
    let disk = unit_disk_nodes(&s);
    let c = comparability(&s, &r, &disk, &DEFAULT_TAUS, &PerimeterSolver::default()).unwrap();
    assert!(c.relaxed <= 0.05 * 2.0 * PI, "{c:?}");
    // both faces of a unit slit
    assert!((c.inner - 2.0).abs() <= 0.5, "{c:?}");
}

#[test]
fn kappa_sweep_climbs_to_the_inner_perimeter() {
    let (s, r) = weighted_disk(H);
    let kappas: Vec<f64> = (0..7).map(|k| 2f64.powi(k)).collect();
    let sw = kappa_sweep(&s, &r, &kappas, 1e-2, &PerimeterSolver::default()).unwrap();
    // κ = 1 is the weighted relaxed perimeter; κ = 2 already restores unit outside density
    assert!(rel(sw.values[0].1, PI) <= 0.05);
    for w in sw.values.windows(2) {
        assert!(w[1].1 >= w[0].1 - 1e-6 * w[0].1);
    }
    assert!(rel(sw.values.last().unwrap().1, sw.inner) <= 0.05);
    assert!(kappa_sweep(&s, &r, &[2.0, 1.0], 1e-2, &PerimeterSolver::default()).is_err());

    let (s, r) = grid(Shape::Disk { r: 1.0 }, H, MeasureWeights::Uniform);
    let sw = kappa_sweep(&s, &r, &[1.0], 1e-2, &PerimeterSolver::default()).unwrap();
    assert!(rel(sw.values[0].1, 2.0 * PI) <= 0.05);
}

#[test]
fn circle_contents() {
    let h = 1.0 / 256.0;
    let (s, _) = grid(Shape::Disk { r: 1.0 }, h, MeasureWeights::Uniform);
    let band = NodeSet::from_fn(s.len(), |i| (s.pos(i)[0].hypot(s.pos(i)[1]) - 1.0).abs() <= 0.25 * h);
    let rr = 8.0 * h;
    let m = minkowski_content(&s, &band, &[rr]).unwrap();
    assert!(rel(m.liminf, 2.0 * PI) <= 0.05, "{}", m.liminf);
    assert!(minkowski_content(&s, &band, &[h]).is_err());
    assert_eq!(minkowski_content(&s, &NodeSet::empty(s.len()), &[rr]).unwrap().liminf, 0.0);

    let hs = hausdorff_content(&s, &band, rr).unwrap();
    // best cover by balls centred on the circle: each covers an arc of angle 4·asin(R/2)
    let balls = (2.0 * PI / (4.0 * (rr / 2.0).asin())).ceil();
    let oracle = balls * PI * rr * rr / rr;
    assert!(hs >= 0.9 * oracle && hs <= 2.0 * oracle, "{hs} vs {oracle}");
    assert!((PI..=8.0 * PI).contains(&hs));
    assert_eq!(hausdorff_content(&s, &NodeSet::empty(s.len()), rr).unwrap(), 0.0);
}

#[test]
fn local_density_ratios() {
    let sol = PerimeterSolver::default();
    let (s, r) = grid(Shape::Disk { r: 1.0 }, H, MeasureWeights::Uniform);
    let all = NodeSet::full(s.len());
    let th = density_theta_estimate(&s, r.omega(), &all, 1e-2, 8.0 * H, &sol).unwrap();
    assert!(!th.values.is_empty());
    assert!((th.min - 1.0).abs() <= 0.15 && (th.max - 1.0).abs() <= 0.15, "{} {}", th.min, th.max);

    let (s, r) = weighted_disk(H);
    let th = density_theta_estimate(&s, r.omega(), &all, 1e-2, 8.0 * H, &sol).unwrap();
    assert!((th.min - 0.5).abs() <= 0.1 && (th.max - 0.5).abs() <= 0.1, "{} {}", th.min, th.max);
}

#[test]
fn nslit_sets_are_free_inside_and_costly_outside() {
    let h = 1.0 / 64.0;
    let sol = PerimeterSolver::default();
    let (d, _) = grid(Shape::Disk { r: 1.0 }, h, MeasureWeights::Uniform);
    let all = NodeSet::full(d.len());
    let mut outside = Vec::new();
    for n in [2, 4] {
        let (s, r) = grid(Shape::NSlitDisk { n }, h, MeasureWeights::Uniform);
        let e = NodeSet::from_fn(s.len(), |i| r.is_omega(i) && in_nslit_sectors(n, s.pos(i)));
        let inside = tau_sweep(&DEFAULT_TAUS, |t| perimeter_relaxed(&s, &e, r.omega(), t, &sol)).unwrap();
        assert!(inside.value <= 0.05, "{}", inside.value);
        let ed = NodeSet::from_fn(d.len(), |i| unit_disk_nodes(&d).contains(i) && in_nslit_sectors(n, d.pos(i)));
        outside.push(tau_sweep(&DEFAULT_TAUS, |t| perimeter_relaxed(&d, &ed, &all, t, &sol)).unwrap().value);
    }
    // sectors (0, π/2) and (3π/4, 7π/8): two radii plus an arc each
    let exact = [2.0 + PI / 2.0, 4.0 + PI / 2.0 + PI / 8.0];
    for (v, e) in outside.iter().zip(exact) {
        assert!(rel(*v, e) <= 0.05, "{v} vs {e}");
    }
}

#[test]
fn measure_properties_on_a_coarse_weighted_disk() {
    let (s, r) = weighted_disk(1.0 / 32.0);
    let rep = radon_property_suite(&s, &r, 7, 4, 1e-2, RadonTolerances::default(), &PerimeterSolver::default()).unwrap();
    assert_eq!(rep.exterior_only_value, 0.0);
    for t in &rep.trials {
        assert!(t.passed, "{t:?}");
    }
    assert!(rep.passed);
    assert!(radon_property_suite(&s, &r, 7, 0, 1e-2, RadonTolerances::default(), &PerimeterSolver::default()).is_err());
}

#[test]
fn backends_agree_on_small_instances() {
    let (s, r) = weighted_disk(1.0 / 16.0);
    let all = NodeSet::full(s.len());
    let cut = PerimeterSolver::default();
    let fo = PerimeterSolver::with_backend(Backend::FirstOrder);
    let gap = fo.options.gap_tol;
    for tau in [1e-1, 1e-2] {
        let a = perimeter_relaxed(&s, r.omega(), &all, tau, &cut).unwrap();
        let b = perimeter_relaxed(&s, r.omega(), &all, tau, &fo).unwrap();
        assert!(rel(b.value, a.value) <= 2.0 * gap, "{} vs {}", a.value, b.value);
        assert!(b.residual <= gap);
        let a = inner_perimeter(&s, &r, &all, tau, &cut).unwrap();
        let b = inner_perimeter(&s, &r, &all, tau, &fo).unwrap();
        assert!(rel(b.value, a.value) <= 2.0 * gap, "{} vs {}", a.value, b.value);
    }
}

fn random_set(s: &Space, cx: f64, cy: f64, rad: f64) -> NodeSet {
    NodeSet::from_fn(s.len(), |i| (s.pos(i)[0] - cx).hypot(s.pos(i)[1] - cy) < rad)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn relaxed_never_exceeds_inner(r1 in 0.2f64..1.0, cx in -0.5f64..0.5, cy in -0.5f64..0.5) {
        let (s, r) = weighted_disk(1.0 / 16.0);
        let u = random_set(&s, cx, cy, r1);
        let sol = PerimeterSolver::default();
        let p = perimeter_relaxed(&s, r.omega(), &u, 1e-2, &sol).unwrap().value;
        let q = inner_perimeter(&s, &r, &u, 1e-2, &sol).unwrap().value;
        prop_assert!(p <= q + 1e-9 * q.max(1.0));
    }

    #[test]
    fn perimeter_of_a_union_is_subadditive(a in (-0.6f64..0.6, -0.6f64..0.6, 0.1f64..0.6), b in (-0.6f64..0.6, -0.6f64..0.6, 0.1f64..0.6)) {
        let (s, _) = grid(Shape::Disk { r: 1.0 }, 1.0 / 16.0, MeasureWeights::Uniform);
        let all = NodeSet::full(s.len());
        let (e1, e2) = (random_set(&s, a.0, a.1, a.2), random_set(&s, b.0, b.1, b.2));
        let sol = PerimeterSolver::default();
        // max(v₁, v₂) of the two minimizers is admissible for the union
        let p = |e: &NodeSet| perimeter_relaxed(&s, e, &all, 1e-3, &sol).unwrap().value;
        prop_assert!(p(&e1.union(&e2)) <= p(&e1) + p(&e2) + 1e-9);
    }
}
