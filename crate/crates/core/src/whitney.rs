//! Whitney-type coverings of a domain, the subordinate partition of unity and
//! the discrete convolution built from them, with measured Lipschitz bounds.
//!
//! Radii follow `r_j = min(dist(x_j, X \ U) / 40, R)`. Dilations `kB_j` are
//! node sets (nodes strictly within `k·r_j` of the center), so two dilated
//! balls intersect when they share a node.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::index::BucketIndex;
use crate::nodeset::NodeSet;
use crate::space::Space;

/// Dilation factor used for the overlap count and the comparability check.
pub const OVERLAP_DILATION: f64 = 10.0;
/// Dilation factor of the balls the convolution averages over.
pub const AVERAGE_DILATION: f64 = 5.0;
/// Divisor of the distance to the complement in the radius rule.
pub const RADIUS_DIVISOR: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ball {
    pub center: usize,
    pub r: f64,
    /// Nodes at distance `< r` from the center, ascending.
    pub members: Vec<usize>,
}

impl Ball {
    /// Node set of the dilation `factor·B`.
    pub fn dilation(&self, space: &Space, factor: f64) -> Vec<usize> {
        space.ball_at(space.pos(self.center), factor * self.r)
    }
}

/// A radius clamped to restore `r_j ≤ 2 r_k` for intersecting 10-dilations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Repair {
    pub ball: usize,
    pub against: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Covering {
    pub balls: Vec<Ball>,
    pub scale: f64,
    /// Largest number of 10-dilations meeting a single 10-dilation (itself included).
    pub overlap_count: usize,
    pub repairs: Vec<Repair>,
    #[serde(skip)]
    domain: NodeSet,
}

impl Covering {
    pub fn domain(&self) -> &NodeSet {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }
}

/// Greedy Whitney cover of `u` at scale `r_max`.
///
/// Centers are taken farthest-first: among uncovered nodes the one farthest
/// from the complement (ties to the smaller id) becomes the next center.
pub fn whitney_cover(space: &Space, u: &NodeSet, r_max: f64) -> Result<Covering> {
    let h = space.resolution();
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(invalid("cover scale must be positive"));
    }
    if r_max < 4.0 * h {
        return Err(Error::BelowResolution { radius: r_max, min: 4.0 * h });
    }
    if u.universe() != space.len() {
        return Err(invalid("domain does not match the space"));
    }
    if u.is_empty() {
        return Err(Error::EmptyRegion("cover domain".into()));
    }
    let rest = u.complement();
    if rest.is_empty() {
        return Err(Error::EmptyRegion("complement of the cover domain".into()));
    }
    let dist = space.distance_to(&rest);

    let mut order: Vec<usize> = u.iter().collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    let mut covered = vec![false; space.len()];
    let mut centers = Vec::new();
    let mut radii = Vec::new();
    for &i in &order {
        if covered[i] {
            continue;
        }
        let r = (dist[i] / RADIUS_DIVISOR).min(r_max);
        space.for_each_in_ball(space.pos(i), r, |k, _| covered[k] = true);
        centers.push(i);
        radii.push(r);
    }

    let mut repairs = Vec::new();
    let overlap_count = loop {
        let (overlap, found) = comparability_pass(space, &centers, &radii, &dist);
        if found.is_empty() {
            break overlap;
        }
        for rep in found {
            if rep.to < radii[rep.ball] {
                radii[rep.ball] = rep.to;
                repairs.push(rep);
            }
        }
    };

    let balls: Vec<Ball> = centers
        .iter()
        .zip(&radii)
        .map(|(&c, &r)| Ball { center: c, r, members: space.ball_at(space.pos(c), r) })
        .collect();
    if !repairs.is_empty() {
        let mut hit = vec![false; space.len()];
        for b in &balls {
            for &m in &b.members {
                hit[m] = true;
            }
        }
        if let Some(i) = u.iter().find(|&i| !hit[i]) {
            return Err(Error::UncoveredNode(i));
        }
    }
    Ok(Covering { balls, scale: r_max, overlap_count, repairs, domain: u.clone() })
}

/// Whether the node-set dilations `B(p, a)` and `B(q, b)` share a node.
fn dilations_meet(space: &Space, p: [f64; 2], a: f64, q: [f64; 2], b: f64) -> bool {
    let d = (p[0] - q[0]).hypot(p[1] - q[1]);
    if d >= a + b {
        return false;
    }
    // each center is a node of its own dilation
    if d < a || d < b {
        return true;
    }
    // shared nodes lie in the lens, a box of depth w = a + b − d along the
    // axis and half-length `chord` across it; sweep it with small disks
    let (ux, uy) = ((q[0] - p[0]) / d, (q[1] - p[1]) / d);
    let t = (a * a - b * b + d * d) / (2.0 * d);
    let chord = (a * a - t * t).max(0.0).sqrt();
    let w = a + b - d;
    let mid = 0.5 * (d - b + a);
    let step = w.max(space.resolution());
    let rad = (0.25 * (w * w + step * step)).sqrt() * (1.0 + 1e-12);
    let n = (chord / step).ceil() as i64;
    let (a2, b2) = (a * a, b * b);
    let inside = |y: [f64; 2]| (y[0] - p[0]).powi(2) + (y[1] - p[1]).powi(2) < a2 && (y[0] - q[0]).powi(2) + (y[1] - q[1]).powi(2) < b2;
    let centre = [p[0] + ux * mid, p[1] + uy * mid];
    if space.nearest_node(centre).is_some_and(|k| inside(space.pos(k))) {
        return true;
    }
    let mut hit = false;
    for s in -n..=n {
        let off = s as f64 * step;
        let z = [p[0] + ux * mid - uy * off, p[1] + uy * mid + ux * off];
        space.for_each_in_ball(z, rad, |k, _| {
            hit = hit || inside(space.pos(k));
        });
        if hit {
            break;
        }
    }
    hit
}

/// One sweep over intersecting 10-dilations: the overlap count and the radii
/// that break `r_j ≤ 2 r_k`.
fn comparability_pass(space: &Space, centers: &[usize], radii: &[f64], dist: &[f64]) -> (usize, Vec<Repair>) {
    let pts: Vec<[f64; 2]> = (0..space.len()).map(|i| space.pos(i)).collect();
    let mut slot = vec![usize::MAX; space.len()];
    for (j, &c) in centers.iter().enumerate() {
        slot[c] = j;
    }
    let cell = BucketIndex::auto_cell(&pts, centers, space.resolution());
    let idx = BucketIndex::new(&pts, centers, cell);
    let r_top = radii.iter().copied().fold(0.0, f64::max);
    let m = OVERLAP_DILATION;

    let mut count = vec![1usize; centers.len()];
    let mut found: Vec<Repair> = Vec::new();
    for (k, &ck) in centers.iter().enumerate() {
        // r_j ≤ dist(x_j)/40 ≤ (dist(x_k) + D)/40 bounds how far a partner can sit
        let reach_rule = (m * radii[k] + m * dist[ck] / RADIUS_DIVISOR) / (1.0 - m / RADIUS_DIVISOR);
        let reach = (m * (radii[k] + r_top)).min(reach_rule) * (1.0 + 1e-12) + 1e-12;
        idx.for_each_within(pts[ck], reach, |cj, _| {
            let j = slot[cj];
            if j <= k || !dilations_meet(space, pts[ck], m * radii[k], pts[cj], m * radii[j]) {
                return;
            }
            count[k] += 1;
            count[j] += 1;
            for (x, y) in [(j, k), (k, j)] {
                if radii[x] > 2.0 * radii[y] {
                    found.push(Repair { ball: x, against: y, from: radii[x], to: 2.0 * radii[y] });
                }
            }
        });
    }
    let overlap = count.into_iter().max().unwrap_or(0);
    (overlap, found)
}

#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    /// Per node, the `(ball, φ_ball(node))` pairs with positive weight, sorted by ball.
    pub weights: Vec<Vec<(usize, f64)>>,
    /// Largest difference quotient of each φ_j over links inside the domain.
    pub lipschitz_per_ball: Vec<f64>,
    /// max_j Lip(φ_j)·r_j.
    pub scaled_lipschitz: f64,
}

impl PartitionOfUnity {
    pub fn weight(&self, ball: usize, node: usize) -> f64 {
        self.weights[node].iter().find(|&&(j, _)| j == ball).map_or(0.0, |&(_, w)| w)
    }

    /// Largest |Σ_j φ_j(x) − 1| over the nodes of `domain`.
    pub fn sum_error(&self, domain: &NodeSet) -> f64 {
        domain
            .iter()
            .map(|i| (self.weights[i].iter().map(|&(_, w)| w).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Normalised tents `ψ_j(x) = max(0, 1 − dist(x, B_j)/r_j)`, supported in `2B_j`.
pub fn partition_of_unity(space: &Space, cover: &Covering) -> Result<PartitionOfUnity> {
    let dom = cover.domain();
    if dom.universe() != space.len() {
        return Err(invalid("cover does not belong to this space"));
    }
    let mut weights: Vec<Vec<(usize, f64)>> = vec![Vec::new(); space.len()];
    for (j, b) in cover.balls.iter().enumerate() {
        space.for_each_in_ball(space.pos(b.center), 2.0 * b.r, |k, d2| {
            if dom.contains(k) {
                let gap = (d2.sqrt() - b.r).max(0.0);
                let psi = 1.0 - gap / b.r;
                if psi > 0.0 {
                    weights[k].push((j, psi));
                }
            }
        });
    }
    for i in dom.iter() {
        let list = &mut weights[i];
        list.sort_unstable_by_key(|&(j, _)| j);
        let total: f64 = list.iter().map(|&(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::UncoveredNode(i));
        }
        for e in list.iter_mut() {
            e.1 /= total;
        }
    }

    let mut lip = vec![0.0f64; cover.len()];
    for l in space.links() {
        if !(dom.contains(l.a) && dom.contains(l.b)) {
            continue;
        }
        merge_lists(&weights[l.a], &weights[l.b], |j, wa, wb| {
            lip[j] = lip[j].max((wa - wb).abs() / l.len);
        });
    }
    let scaled = lip.iter().zip(&cover.balls).map(|(&c, b)| c * b.r).fold(0.0, f64::max);
    Ok(PartitionOfUnity { weights, lipschitz_per_ball: lip, scaled_lipschitz: scaled })
}

/// Walk two ball-sorted weight lists together, treating missing entries as 0.
fn merge_lists(a: &[(usize, f64)], b: &[(usize, f64)], mut f: impl FnMut(usize, f64, f64)) {
    let (mut i, mut k) = (0, 0);
    while i < a.len() || k < b.len() {
        match (a.get(i), b.get(k)) {
            (Some(&(ja, wa)), Some(&(jb, wb))) if ja == jb => {
                f(ja, wa, wb);
                i += 1;
                k += 1;
            }
            (Some(&(ja, wa)), Some(&(jb, _))) if ja < jb => {
                f(ja, wa, 0.0);
                i += 1;
            }
            (Some(&(ja, wa)), None) => {
                f(ja, wa, 0.0);
                i += 1;
            }
            (_, Some(&(jb, wb))) => {
                f(jb, 0.0, wb);
                k += 1;
            }
            (None, None) => unreachable!(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Convolution {
    /// `v` on the domain; nodes outside it keep the input values.
    pub values: Vec<f64>,
    /// μ-average of `u` over each `5B_j`.
    pub averages: Vec<f64>,
    /// Balls whose 5-dilation reaches past the bounding box of the space.
    pub clipped: Vec<usize>,
}

/// `v(x) = Σ_j u_{5B_j} φ_j(x)` on the domain of the cover.
pub fn discrete_convolution(space: &Space, u: &[f64], cover: &Covering, pou: &PartitionOfUnity) -> Result<Convolution> {
    if u.len() != space.len() {
        return Err(invalid("field length does not match the space"));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(invalid("field has non-finite values"));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for i in 0..space.len() {
        let p = space.pos(i);
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let pad = 0.5 * space.resolution();

    let mut averages = Vec::with_capacity(cover.len());
    let mut clipped = Vec::new();
    for (j, b) in cover.balls.iter().enumerate() {
        let c = space.pos(b.center);
        let rr = AVERAGE_DILATION * b.r;
        if (0..2).any(|d| c[d] - rr < lo[d] - pad || c[d] + rr > hi[d] + pad) {
            clipped.push(j);
        }
        let (mut mass, mut sum) = (0.0, 0.0);
        space.for_each_in_ball(c, rr, |k, _| {
            mass += space.measure(k);
            sum += space.measure(k) * u[k];
        });
        averages.push(if mass > 0.0 { sum / mass } else { u[b.center] });
    }
    let mut values = u.to_vec();
    for i in cover.domain().iter() {
        values[i] = pou.weights[i].iter().map(|&(j, w)| w * averages[j]).sum();
    }
    Ok(Convolution { values, averages, clipped })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DcBounds {
    /// Smallest C with Lip v ≤ C·Σ_j χ_{B_j} TV(u, 10B_j)/μ(B_j) at every node.
    pub lip_constant: f64,
    /// Node where `lip_constant` is attained.
    pub worst_node: Option<usize>,
    /// ∫_U Lip v dμ.
    pub integral_lip: f64,
    /// TV(u, U).
    pub tv: f64,
    /// Smallest C' with ∫_U Lip v dμ ≤ C'·TV(u, U); 0 when both sides vanish.
    pub integral_constant: f64,
    /// ‖v − u‖ in L¹(U).
    pub l1_error: f64,
    pub clipped: usize,
}

/// Evaluate both sides of the Lipschitz and total-variation bounds for the
/// convolution of `u`.
///
/// Variation measures of node sets give every node half of each incident
/// link, so `TV(u, A) = Σ_{x∈A} ½ Σ_{l∋x} c_l ρ_l |Δ_l u|`.
pub fn verify_dc_bounds(space: &Space, u: &[f64], cover: &Covering, pou: &PartitionOfUnity) -> Result<DcBounds> {
    let conv = discrete_convolution(space, u, cover, pou)?;
    let v = &conv.values;
    let dom = cover.domain();

    let scale = dom.iter().map(|i| v[i].abs()).fold(0.0, f64::max);
    let mut cell_tv = vec![0.0; space.len()];
    let mut lip = vec![0.0f64; space.len()];
    for l in space.links() {
        let rho = 0.5 * (space.density(l.a) + space.density(l.b));
        let t = 0.5 * l.crofton * rho * (u[l.a] - u[l.b]).abs();
        cell_tv[l.a] += t;
        cell_tv[l.b] += t;
        if dom.contains(l.a) && dom.contains(l.b) {
            let dv = (v[l.a] - v[l.b]).abs();
            // differences at rounding level of the convolution count as zero
            let q = if dv <= 64.0 * f64::EPSILON * scale { 0.0 } else { dv / l.len };
            lip[l.a] = lip[l.a].max(q);
            lip[l.b] = lip[l.b].max(q);
        }
    }

    let mut rhs = vec![0.0; space.len()];
    for b in &cover.balls {
        let mut tv = 0.0;
        space.for_each_in_ball(space.pos(b.center), OVERLAP_DILATION * b.r, |k, _| tv += cell_tv[k]);
        let mass: f64 = b.members.iter().map(|&k| space.measure(k)).sum();
        let share = tv / mass;
        for &k in &b.members {
            rhs[k] += share;
        }
    }

    let mut lip_constant = 0.0;
    let mut worst_node = None;
    let (mut integral_lip, mut tv, mut l1_error) = (0.0, 0.0, 0.0);
    for i in dom.iter() {
        let ratio = if lip[i] == 0.0 {
            0.0
        } else if rhs[i] > 0.0 {
            lip[i] / rhs[i]
        } else {
            f64::INFINITY
        };
        if ratio > lip_constant {
            lip_constant = ratio;
            worst_node = Some(i);
        }
        integral_lip += space.measure(i) * lip[i];
        tv += cell_tv[i];
        l1_error += space.measure(i) * (v[i] - u[i]).abs();
    }
    let integral_constant = if integral_lip == 0.0 {
        0.0
    } else if tv > 0.0 {
        integral_lip / tv
    } else {
        f64::INFINITY
    };
    Ok(DcBounds { lip_constant, worst_node, integral_lip, tv, integral_constant, l1_error, clipped: conv.clipped.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_grid, GridOptions, MeasureWeights, Shape};

    #[test]
    fn merge_visits_union() {
        let a = [(0, 0.5), (2, 0.5)];
        let b = [(1, 0.25), (2, 0.75)];
        let mut seen = Vec::new();
        merge_lists(&a, &b, |j, x, y| seen.push((j, x, y)));
        assert_eq!(seen, vec![(0, 0.5, 0.0), (1, 0.0, 0.25), (2, 0.5, 0.75)]);
    }

    #[test]
    fn meeting_dilations_share_a_node() {
        let (s, _) = build_grid(&Shape::Square { s: 1.0 }, 1.0 / 16.0, &MeasureWeights::Uniform, &GridOptions::default()).unwrap();
        let h = 1.0 / 16.0;
        let p = s.pos(s.nearest_node([0.0, 0.0]).unwrap());
        for (gap, a, b) in [(3.0 * h, 1.6 * h, 1.6 * h), (2.5 * h, 1.1 * h, 1.2 * h), (0.9 * h, 0.5 * h, 0.5 * h)] {
            let q = [p[0] + gap, p[1]];
            let brute = s.ball_at(p, a).iter().any(|&k| {
                let y = s.pos(k);
                (y[0] - q[0]).hypot(y[1] - q[1]) < b
            });
            assert_eq!(dilations_meet(&s, p, a, q, b), brute);
        }
    }

    fn hand_cover(s: &Space, dom: &NodeSet, balls: &[(usize, f64)]) -> Covering {
        let balls = balls.iter().map(|&(c, r)| Ball { center: c, r, members: s.ball_at(s.pos(c), r) }).collect();
        Covering { balls, scale: 1.0, overlap_count: 1, repairs: Vec::new(), domain: dom.clone() }
    }

    #[test]
    fn single_ball_gives_unit_weight() {
        let (s, _) = build_grid(&Shape::Square { s: 1.0 }, 1.0 / 16.0, &MeasureWeights::Uniform, &GridOptions::default()).unwrap();
        let c = s.nearest_node([0.03, 0.03]).unwrap();
        let b = s.ball(c, 0.2).unwrap();
        let cover = hand_cover(&s, &b, &[(c, 0.2)]);
        let pou = partition_of_unity(&s, &cover).unwrap();
        assert!(b.iter().all(|i| pou.weights[i] == vec![(0, 1.0)]));
    }

    #[test]
    fn overlapping_balls_split_the_midpoint() {
        let (s, _) = build_grid(&Shape::Square { s: 1.0 }, 1.0 / 16.0, &MeasureWeights::Uniform, &GridOptions::default()).unwrap();
        let h = 1.0 / 16.0;
        let a = s.nearest_node([-2.0 * h + 0.01, 0.03]).unwrap();
        let b = s.nearest_node([2.0 * h + 0.01, 0.03]).unwrap();
        let mid = s.nearest_node([0.01, 0.03]).unwrap();
        let dom = s.ball(a, 3.5 * h).unwrap().union(&s.ball(b, 3.5 * h).unwrap());
        let mut cover = hand_cover(&s, &dom, &[(a, 1.5 * h), (b, 1.5 * h)]);
        assert!(matches!(partition_of_unity(&s, &cover), Err(Error::UncoveredNode(_))));
        cover = hand_cover(&s, &dom, &[(a, 3.0 * h), (b, 3.0 * h)]);
        let pou = partition_of_unity(&s, &cover).unwrap();
        let (wa, wb) = (pou.weight(0, mid), pou.weight(1, mid));
        assert!(wa > 0.0 && wa < 1.0 && wb > 0.0 && wb < 1.0);
        assert!((wa + wb - 1.0).abs() <= 1e-15);
        assert!(pou.sum_error(&dom) <= 1e-12);
    }
}
