//! Discrete calculus on a space: edge total variation, gradient densities,
//! coarea utilities, interior traces and approximate limits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nodeset::NodeSet;
use crate::space::{Link, Region, Space};

/// How a link's density factor is formed from its endpoint densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DensityRule {
    Average,
    /// Cheaper endpoint across a class boundary (all links when no region is given).
    MinSide,
    /// Domain endpoint across the domain boundary, average elsewhere.
    InteriorSide,
}

/// Density factor of a link under `rule`.
pub fn link_density(space: &Space, region: Option<&Region>, l: &Link, rule: DensityRule) -> f64 {
    let (ra, rb) = (space.density(l.a), space.density(l.b));
    let avg = 0.5 * (ra + rb);
    match (rule, region) {
        (DensityRule::Average, _) => avg,
        (DensityRule::MinSide, None) => ra.min(rb),
        (DensityRule::MinSide, Some(r)) => {
            if r.class(l.a) == r.class(l.b) {
                avg
            } else {
                ra.min(rb)
            }
        }
        (DensityRule::InteriorSide, None) => avg,
        (DensityRule::InteriorSide, Some(r)) => match (r.is_omega(l.a), r.is_omega(l.b)) {
            (true, false) => ra,
            (false, true) => rb,
            _ => avg,
        },
    }
}

/// Which links a total variation is summed over.
#[derive(Debug, Clone, Copy)]
pub enum LinkSelection<'a> {
    All,
    /// Links with both endpoints in the set.
    Within(&'a NodeSet),
    /// Links with at least one endpoint in the set.
    Touching(&'a NodeSet),
    Explicit(&'a [usize]),
    /// Links inside the set count fully, links leaving it count half, as if
    /// each node owned half of every incident link.
    Cells(&'a NodeSet),
}

/// Selected link ids with their weight share.
pub fn selected_links(space: &Space, sel: LinkSelection<'_>) -> Vec<(usize, f64)> {
    let links = space.links();
    let all = 0..links.len();
    match sel {
        LinkSelection::All => all.map(|k| (k, 1.0)).collect(),
        LinkSelection::Within(s) => all.filter(|&k| s.contains(links[k].a) && s.contains(links[k].b)).map(|k| (k, 1.0)).collect(),
        LinkSelection::Touching(s) => all.filter(|&k| s.contains(links[k].a) || s.contains(links[k].b)).map(|k| (k, 1.0)).collect(),
        LinkSelection::Explicit(ids) => ids.iter().map(|&k| (k, 1.0)).collect(),
        LinkSelection::Cells(s) => all
            .filter_map(|k| match (s.contains(links[k].a), s.contains(links[k].b)) {
                (true, true) => Some((k, 1.0)),
                (false, false) => None,
                _ => Some((k, 0.5)),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvReport {
    pub value: f64,
    pub links: usize,
    /// Set when the selection contained no links.
    pub empty: bool,
}

/// Σ c·ρ·|u_a − u_b| over the selected links.
pub fn total_variation_report(
    space: &Space,
    u: &[f64],
    sel: LinkSelection<'_>,
    rule: DensityRule,
    region: Option<&Region>,
) -> TvReport {
    let ids = selected_links(space, sel);
    let links = space.links();
    let value = ids
        .iter()
        .map(|&(k, share)| {
            let l = &links[k];
            share * l.crofton * link_density(space, region, l, rule) * (u[l.a] - u[l.b]).abs()
        })
        .sum();
    TvReport { value, links: ids.len(), empty: ids.is_empty() }
}

pub fn total_variation(space: &Space, u: &[f64], sel: LinkSelection<'_>, rule: DensityRule, region: Option<&Region>) -> f64 {
    total_variation_report(space, u, sel, rule, region).value
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum GradientFlavor {
    /// Crofton-weighted edge differences per unit measure.
    EdgeTv,
    /// Norm of the least-squares affine gradient over the stencil.
    NodeIsotropic,
}

#[derive(Debug, Clone)]
pub struct GradientField {
    pub values: Vec<f64>,
    /// Nodes without enough neighbours for the requested flavor (value 0).
    pub isolated: NodeSet,
}

pub fn gradient_magnitude(space: &Space, u: &[f64], flavor: GradientFlavor) -> GradientField {
    let n = space.len();
    let links = space.links();
    let mut values = vec![0.0; n];
    let mut isolated = NodeSet::empty(n);
    for (i, out) in values.iter_mut().enumerate() {
        let inc = space.incident(i);
        if inc.is_empty() {
            isolated.insert(i);
            continue;
        }
        match flavor {
            GradientFlavor::EdgeTv => {
                let s: f64 = inc
                    .iter()
                    .map(|&k| {
                        let l = &links[k];
                        0.5 * l.crofton * link_density(space, None, l, DensityRule::Average) * (u[l.a] - u[l.b]).abs()
                    })
                    .sum();
                *out = s / space.measure(i);
            }
            GradientFlavor::NodeIsotropic => {
                let p = space.pos(i);
                let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for &k in inc {
                    let j = links[k].other(i);
                    let q = space.pos(j);
                    let (dx, dy, du) = (q[0] - p[0], q[1] - p[1], u[j] - u[i]);
                    a11 += dx * dx;
                    a12 += dx * dy;
                    a22 += dy * dy;
                    b1 += dx * du;
                    b2 += dy * du;
                }
                let det = a11 * a22 - a12 * a12;
                if det.abs() <= 1e-14 * (a11 * a22).max(f64::MIN_POSITIVE) {
                    isolated.insert(i);
                    continue;
                }
                let gx = (a22 * b1 - a12 * b2) / det;
                let gy = (a11 * b2 - a12 * b1) / det;
                *out = gx.hypot(gy);
            }
        }
    }
    GradientField { values, isolated }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoareaProfile {
    pub thresholds: Vec<f64>,
    /// Perimeter of `{u > t}` for each threshold.
    pub perimeters: Vec<f64>,
    pub integral: f64,
}

fn superlevel(u: &[f64], t: f64) -> Vec<f64> {
    u.iter().map(|&v| if v > t { 1.0 } else { 0.0 }).collect()
}

/// Perimeters of superlevel sets at the given thresholds and their midpoint-rule integral.
pub fn coarea_profile(
    space: &Space,
    u: &[f64],
    sel: LinkSelection<'_>,
    rule: DensityRule,
    region: Option<&Region>,
    thresholds: &[f64],
) -> Result<CoareaProfile> {
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("thresholds must be strictly increasing"));
    }
    let perimeters: Vec<f64> = thresholds
        .iter()
        .map(|&t| total_variation(space, &superlevel(u, t), sel, rule, region))
        .collect();
    let m = thresholds.len();
    let mut integral = 0.0;
    if m >= 2 {
        for k in 0..m {
            let lo = if k == 0 { thresholds[0] - 0.5 * (thresholds[1] - thresholds[0]) } else { 0.5 * (thresholds[k - 1] + thresholds[k]) };
            let hi = if k + 1 == m {
                thresholds[m - 1] + 0.5 * (thresholds[m - 1] - thresholds[m - 2])
            } else {
                0.5 * (thresholds[k] + thresholds[k + 1])
            };
            integral += perimeters[k] * (hi - lo);
        }
    }
    Ok(CoareaProfile { thresholds: thresholds.to_vec(), perimeters, integral })
}

/// Coarea integral over every distinct value of `u`, which reproduces the
/// edge total variation exactly: Σ_k P({u > v_k})·(v_{k+1} − v_k).
pub fn coarea_exact(space: &Space, u: &[f64], sel: LinkSelection<'_>, rule: DensityRule, region: Option<&Region>) -> CoareaProfile {
    let mut vals: Vec<f64> = u.to_vec();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let ids = selected_links(space, sel);
    let links = space.links();
    // accumulate each link's weight on the value interval it straddles
    let mut diff = vec![0.0; vals.len() + 1];
    for &(k, share) in &ids {
        let l = &links[k];
        let (lo, hi) = if u[l.a] <= u[l.b] { (u[l.a], u[l.b]) } else { (u[l.b], u[l.a]) };
        if lo == hi {
            continue;
        }
        let w = share * l.crofton * link_density(space, region, l, rule);
        let a = vals.partition_point(|&v| v < lo);
        let b = vals.partition_point(|&v| v < hi);
        diff[a] += w;
        diff[b] -= w;
    }
    let m = vals.len().saturating_sub(1);
    let mut perimeters = Vec::with_capacity(m);
    let mut run = 0.0;
    let mut integral = 0.0;
    for k in 0..m {
        run += diff[k];
        // the running sum of ± weights can drift below zero by rounding
        let p = run.max(0.0);
        perimeters.push(p);
        integral += p * (vals[k + 1] - vals[k]);
    }
    CoareaProfile { thresholds: vals[..m].to_vec(), perimeters, integral }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEstimate {
    /// `(r, average of u over B(x,r) ∩ Ω)` for every radius with interior mass.
    pub averages: Vec<(f64, f64)>,
    /// Linear extrapolation to `r = 0` from the last two radii.
    pub value: f64,
    pub converged: bool,
}

/// Interior trace of `u` at a boundary node from μ-averages over shrinking balls.
pub fn interior_trace(space: &Space, region: &Region, u: &[f64], x: usize, radii: &[f64], trace_tol: f64) -> Result<TraceEstimate> {
    if x >= space.len() {
        return Err(Error::UnknownNode(x));
    }
    let min = 2.0 * space.resolution();
    if let Some(&r) = radii.iter().find(|&&r| r < min * (1.0 - 1e-12)) {
        return Err(Error::BelowResolution { radius: r, min });
    }
    if radii.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(invalid("trace radii must be strictly decreasing"));
    }
    let touches = region.interface_links().iter().any(|&k| {
        let l = space.links()[k];
        l.a == x || l.b == x
    });
    if !touches {
        return Err(invalid(format!("node {x} is not adjacent to the domain boundary")));
    }
    let mut averages = Vec::new();
    for &r in radii {
        let (mut m, mut s) = (0.0, 0.0);
        space.for_each_in_ball(space.pos(x), r, |k, _| {
            if region.is_omega(k) {
                m += space.measure(k);
                s += space.measure(k) * u[k];
            }
        });
        if m > 0.0 {
            averages.push((r, s / m));
        }
    }
    let Some(&(r2, a2)) = averages.last() else {
        return Err(Error::NoInteriorMass(x));
    };
    let (value, converged) = match averages.len() {
        1 => (a2, false),
        k => {
            let (r1, a1) = averages[k - 2];
            (a2 - r2 * (a1 - a2) / (r1 - r2), (a1 - a2).abs() < trace_tol)
        }
    };
    Ok(TraceEstimate { averages, value, converged })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxLimits {
    pub lower: f64,
    pub upper: f64,
    pub radius: f64,
    pub jump: bool,
}

/// Lower and upper approximate limits of `u` at node `x`, read off as
/// μ-weighted θ-quantiles over the smallest resolved ball.
pub fn approx_limits(space: &Space, u: &[f64], x: usize, radii: &[f64], theta: f64, jump_tol: f64) -> Result<ApproxLimits> {
    if x >= space.len() {
        return Err(Error::UnknownNode(x));
    }
    let min = 2.0 * space.resolution();
    let r = radii
        .iter()
        .copied()
        .filter(|&r| r >= min * (1.0 - 1e-12))
        .fold(f64::INFINITY, f64::min);
    if !r.is_finite() {
        return Err(Error::BelowResolution { radius: radii.iter().copied().fold(0.0, f64::max), min });
    }
    let mut vals: Vec<(f64, f64)> = Vec::new();
    space.for_each_in_ball(space.pos(x), r, |k, _| vals.push((u[k], space.measure(k))));
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = vals.iter().map(|v| v.1).sum();
    let mut acc = 0.0;
    let mut lower = vals[vals.len() - 1].0;
    for &(v, m) in &vals {
        acc += m;
        if acc >= theta * total {
            lower = v;
            break;
        }
    }
    acc = 0.0;
    let mut upper = vals[0].0;
    for &(v, m) in vals.iter().rev() {
        acc += m;
        if acc >= theta * total {
            upper = v;
            break;
        }
    }
    Ok(ApproxLimits { lower, upper, radius: r, jump: upper - lower > jump_tol })
}

/// Spread `max u − min u`, zero for empty input.
pub fn range(u: &[f64]) -> f64 {
    let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_grid, GridOptions, MeasureWeights, Shape};

    fn square(h: f64) -> (Space, Region) {
        build_grid(&Shape::Square { s: 1.0 }, h, &MeasureWeights::Uniform, &GridOptions::default()).unwrap()
    }

    #[test]
    fn affine_isotropic_gradient_is_exact() {
        let (s, r) = square(1.0 / 16.0);
        let u: Vec<f64> = s.nodes().iter().map(|n| 3.0 * n.pos[0] + 4.0 * n.pos[1]).collect();
        let g = gradient_magnitude(&s, &u, GradientFlavor::NodeIsotropic);
        for i in r.omega().iter() {
            assert!((g.values[i] - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_has_zero_gradient_and_variation() {
        let (s, _) = square(1.0 / 8.0);
        let u = vec![2.5; s.len()];
        for f in [GradientFlavor::EdgeTv, GradientFlavor::NodeIsotropic] {
            assert!(gradient_magnitude(&s, &u, f).values.iter().all(|&g| g == 0.0));
        }
        assert_eq!(total_variation(&s, &u, LinkSelection::All, DensityRule::Average, None), 0.0);
    }

    #[test]
    fn empty_selection_is_flagged() {
        let (s, _) = square(1.0 / 8.0);
        let u = vec![0.0; s.len()];
        let none = NodeSet::empty(s.len());
        let rep = total_variation_report(&s, &u, LinkSelection::Within(&none), DensityRule::Average, None);
        assert!(rep.empty);
        assert_eq!(rep.value, 0.0);
    }

    #[test]
    fn three_valued_coarea_is_exact() {
        let (s, _) = square(1.0 / 16.0);
        let u: Vec<f64> = s.nodes().iter().map(|n| if n.pos[0] < -0.2 { 0.0 } else if n.pos[1] < 0.1 { 0.5 } else { 1.0 }).collect();
        let tv = total_variation(&s, &u, LinkSelection::All, DensityRule::Average, None);
        let c = coarea_exact(&s, &u, LinkSelection::All, DensityRule::Average, None);
        assert_eq!(c.thresholds, vec![0.0, 0.5]);
        assert!((c.integral - tv).abs() <= 1e-12 * tv);
    }

    #[test]
    fn unsorted_thresholds_rejected() {
        let (s, _) = square(0.25);
        let u = vec![0.0; s.len()];
        assert!(coarea_profile(&s, &u, LinkSelection::All, DensityRule::Average, None, &[0.5, 0.1]).is_err());
    }
}
