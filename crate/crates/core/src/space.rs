//! Weighted planar graphs standing in for metric measure spaces, plus the
//! grid builder for the shipped shapes and the node classification of a domain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::index::BucketIndex;
use crate::nodeset::NodeSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub pos: [f64; 2],
    /// Lebesgue area represented by the node (h² on grids).
    pub area: f64,
    pub density: f64,
}

impl Node {
    #[inline]
    pub fn measure(&self) -> f64 {
        self.area * self.density
    }
}

/// An undirected graph edge. `witness` is set when the segment between the
/// endpoints crosses a slit: the edge is then routed through that null node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub len: f64,
    pub crofton: f64,
    pub witness: Option<usize>,
}

/// The unit all energies are summed over. An edge without a witness is one
/// link; an edge with a witness `w` becomes the two links `i–w` and `w–j`,
/// each carrying the full Crofton weight and half the length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub len: f64,
    pub crofton: f64,
    pub edge: usize,
}

impl Link {
    #[inline]
    pub fn other(&self, i: usize) -> usize {
        if self.a == i {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil {
    /// 16-neighbour lattice stencil with Cauchy–Crofton weights.
    Grid16,
    /// Arbitrary adjacency read from the edge list.
    Graph,
}

#[derive(Debug, Clone)]
pub struct Space {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    links: Vec<Link>,
    adj_start: Vec<usize>,
    adj: Vec<usize>,
    stencil: Stencil,
    h: Option<f64>,
    index: BucketIndex,
}

/// Half of the lattice stencil; the other half is the negated directions.
pub const STENCIL16: [(i64, i64); 8] = [(1, 0), (2, 1), (1, 1), (1, 2), (0, 1), (-1, 2), (-1, 1), (-2, 1)];

/// Angular share of each stencil direction, sorted by angle.
fn stencil_angles() -> [f64; 8] {
    let theta: Vec<f64> = STENCIL16.iter().map(|&(x, y)| (y as f64).atan2(x as f64)).collect();
    let mut out = [0.0; 8];
    for k in 0..8 {
        let prev = if k == 0 { theta[7] - PI } else { theta[k - 1] };
        let next = if k == 7 { theta[0] + PI } else { theta[k + 1] };
        out[k] = 0.5 * (next - prev);
    }
    out
}

/// Cauchy–Crofton weight of a lattice edge with offset `(dx, dy)` at spacing `h`.
pub fn crofton_weight(h: f64, k: usize) -> f64 {
    let (dx, dy) = STENCIL16[k];
    let dphi = stencil_angles()[k];
    h * dphi / (2.0 * ((dx * dx + dy * dy) as f64).sqrt())
}

impl Space {
    /// Assemble a space from explicit nodes and edges, checking the invariants.
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>, stencil: Stencil, h: Option<f64>) -> Result<Self> {
        let n = nodes.len();
        for (k, nd) in nodes.iter().enumerate() {
            if !(nd.area > 0.0 && nd.density > 0.0 && nd.area.is_finite() && nd.density.is_finite()) {
                return Err(invalid(format!("node {k} has non-positive area or density")));
            }
            if !(nd.pos[0].is_finite() && nd.pos[1].is_finite()) {
                return Err(invalid(format!("node {k} has a non-finite position")));
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for (k, e) in edges.iter().enumerate() {
            if e.i >= n || e.j >= n {
                return Err(Error::UnknownNode(e.i.max(e.j)));
            }
            if e.i == e.j {
                return Err(invalid(format!("edge {k} is a self-loop")));
            }
            if !(e.len > 0.0 && e.crofton > 0.0 && e.len.is_finite() && e.crofton.is_finite()) {
                return Err(invalid(format!("edge {k} has non-positive length or weight")));
            }
            if !seen.insert((e.i.min(e.j), e.i.max(e.j))) {
                return Err(invalid(format!("edge {k} duplicates the pair ({}, {})", e.i, e.j)));
            }
            if let Some(w) = e.witness {
                if w >= n || w == e.i || w == e.j {
                    return Err(invalid(format!("edge {k} has an invalid witness")));
                }
            }
        }
        let mut links = Vec::with_capacity(edges.len());
        for (k, e) in edges.iter().enumerate() {
            match e.witness {
                None => links.push(Link { a: e.i, b: e.j, len: e.len, crofton: e.crofton, edge: k }),
                Some(w) => {
                    links.push(Link { a: e.i, b: w, len: 0.5 * e.len, crofton: e.crofton, edge: k });
                    links.push(Link { a: w, b: e.j, len: 0.5 * e.len, crofton: e.crofton, edge: k });
                }
            }
        }
        let mut deg = vec![0usize; n + 1];
        for l in &links {
            deg[l.a + 1] += 1;
            deg[l.b + 1] += 1;
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let mut fill = deg.clone();
        let mut adj = vec![0usize; 2 * links.len()];
        for (k, l) in links.iter().enumerate() {
            adj[fill[l.a]] = k;
            fill[l.a] += 1;
            adj[fill[l.b]] = k;
            fill[l.b] += 1;
        }
        let pts: Vec<[f64; 2]> = nodes.iter().map(|nd| nd.pos).collect();
        let ids: Vec<usize> = (0..n).collect();
        let cell = match h {
            Some(h) => 2.0 * h,
            None => BucketIndex::auto_cell(&pts, &ids, 1e-9),
        };
        let index = BucketIndex::new(&pts, &ids, cell);
        Ok(Self { nodes, edges, links, adj_start: deg, adj, stencil, h, index })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    /// Grid spacing, if the space is a lattice.
    pub fn h(&self) -> Option<f64> {
        self.h
    }

    /// Smallest length the space resolves: the grid spacing or the shortest edge.
    pub fn resolution(&self) -> f64 {
        self.h.unwrap_or_else(|| self.edges.iter().map(|e| e.len).fold(f64::INFINITY, f64::min))
    }

    #[inline]
    pub fn pos(&self, i: usize) -> [f64; 2] {
        self.nodes[i].pos
    }

    #[inline]
    pub fn measure(&self, i: usize) -> f64 {
        self.nodes[i].measure()
    }

    #[inline]
    pub fn density(&self, i: usize) -> f64 {
        self.nodes[i].density
    }

    /// Link ids incident to node `i`.
    #[inline]
    pub fn incident(&self, i: usize) -> &[usize] {
        &self.adj[self.adj_start[i]..self.adj_start[i + 1]]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.len()).map(|i| self.incident(i).len()).max().unwrap_or(0)
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let (p, q) = (self.pos(i), self.pos(j));
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    pub fn measure_of(&self, set: &NodeSet) -> f64 {
        set.iter().map(|i| self.measure(i)).sum()
    }

    pub fn total_measure(&self) -> f64 {
        self.nodes.iter().map(Node::measure).sum()
    }

    /// Nodes at distance strictly less than `r` from node `center`.
    pub fn ball(&self, center: usize, r: f64) -> Result<NodeSet> {
        if center >= self.len() {
            return Err(Error::UnknownNode(center));
        }
        if !(r > 0.0) {
            return Err(invalid("ball radius must be positive"));
        }
        Ok(NodeSet::from_indices(self.len(), self.index.within(self.pos(center), r)))
    }

    /// Node ids within distance `< r` of an arbitrary point, ascending.
    pub fn ball_at(&self, p: [f64; 2], r: f64) -> Vec<usize> {
        self.index.within(p, r)
    }

    pub fn for_each_in_ball(&self, p: [f64; 2], r: f64, f: impl FnMut(usize, f64)) {
        self.index.for_each_within(p, r, f)
    }

    pub fn nearest_node(&self, p: [f64; 2]) -> Option<usize> {
        self.index.nearest(p).map(|(k, _)| k)
    }

    /// Distance from every node to the nearest member of `set` (infinite if the set is empty).
    pub fn distance_to(&self, set: &NodeSet) -> Vec<f64> {
        let ids: Vec<usize> = set.iter().collect();
        if ids.is_empty() {
            return vec![f64::INFINITY; self.len()];
        }
        let pts: Vec<[f64; 2]> = self.nodes.iter().map(|nd| nd.pos).collect();
        let cell = BucketIndex::auto_cell(&pts, &ids, self.resolution());
        let idx = BucketIndex::new(&pts, &ids, cell);
        (0..self.len())
            .map(|i| if set.contains(i) { 0.0 } else { idx.nearest(pts[i]).map_or(f64::INFINITY, |(_, d)| d) })
            .collect()
    }

    /// A copy of the space with new node densities (measures follow as area × density).
    pub fn with_densities(&self, densities: &[f64]) -> Result<Self> {
        if densities.len() != self.len() {
            return Err(invalid("density vector length does not match the node count"));
        }
        if densities.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(invalid("densities must be positive and finite"));
        }
        let mut out = self.clone();
        for (nd, &d) in out.nodes.iter_mut().zip(densities) {
            nd.density = d;
        }
        Ok(out)
    }

    /// Empirical doubling constant: the largest `μ(B(x,2r))/μ(B(x,r))` over the
    /// sampled centres and radii.
    pub fn doubling_constant(&self, centers: &[usize], radii: &[f64]) -> f64 {
        let mut worst: f64 = 1.0;
        for &c in centers {
            for &r in radii {
                let (mut small, mut big) = (0.0, 0.0);
                self.for_each_in_ball(self.pos(c), 2.0 * r, |k, d2| {
                    big += self.measure(k);
                    if d2 < r * r {
                        small += self.measure(k);
                    }
                });
                if small > 0.0 {
                    worst = worst.max(big / small);
                }
            }
        }
        worst
    }
}

/// Domain shapes the grid builder knows about. All are centred at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Shape {
    Disk { r: f64 },
    Annulus { a: f64, b: f64 },
    Square { s: f64 },
    /// Unit disk with straight slits given as segment endpoints.
    SlitDisk { slits: Vec<[[f64; 2]; 2]> },
    /// Unit disk with `n` radial slits at angles `θ_k = Σ_{j≤k} π/2^j`.
    NSlitDisk { n: usize },
}

/// Angles of the radial slits of `Shape::NSlitDisk`: θ₀ = 0, θ_k = θ_{k−1} + π/2^k.
pub fn nslit_angles(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut t = 0.0;
    for k in 0..n {
        if k > 0 {
            t += PI / 2f64.powi(k as i32);
        }
        out.push(t);
    }
    out
}

/// Whether a point lies in the sector union `E_N` carved out by the first `n` slit angles.
pub fn in_nslit_sectors(n: usize, p: [f64; 2]) -> bool {
    let th = nslit_angles(n);
    let mut arg = p[1].atan2(p[0]);
    if arg < 0.0 {
        arg += 2.0 * PI;
    }
    (0..n / 2).any(|k| th[2 * k] < arg && arg < th[2 * k + 1])
}

impl Shape {
    pub fn validate(&self, h: f64) -> Result<()> {
        let bad = |m: String| Err(Error::DegenerateShape(m));
        match *self {
            Shape::Disk { r } if !(r > 0.0) => bad(format!("disk radius {r} must be positive")),
            Shape::Annulus { a, b } if !(a >= 0.0 && a < b) => bad(format!("annulus needs 0 <= a < b, got a={a}, b={b}")),
            Shape::Square { s } if !(s > 0.0) => bad(format!("square side {s} must be positive")),
            Shape::SlitDisk { ref slits } => {
                for s in slits {
                    for p in s {
                        if p[0].hypot(p[1]) > 1.0 + 1e-12 {
                            return bad(format!("slit endpoint ({}, {}) lies outside the unit disk", p[0], p[1]));
                        }
                    }
                }
                Ok(())
            }
            Shape::NSlitDisk { n } => {
                if n == 0 {
                    return bad("slit count must be at least 1".into());
                }
                let gap = PI / 2f64.powi(n as i32 - 1);
                if gap < 2.0 * h {
                    return bad(format!("{n} slits need an angular gap {gap:.3e} below the resolution 2h = {:.3e}", 2.0 * h));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Half-width of the smallest origin-centred square containing the shape.
    pub fn extent(&self) -> f64 {
        match *self {
            Shape::Disk { r } => r,
            Shape::Annulus { b, .. } => b,
            Shape::Square { s } => 0.5 * s,
            Shape::SlitDisk { .. } | Shape::NSlitDisk { .. } => 1.0,
        }
    }

    /// Whether a point belongs to the open shape, slits included.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let r = p[0].hypot(p[1]);
        match *self {
            Shape::Disk { r: rad } => r < rad,
            Shape::Annulus { a, b } => a < r && r < b,
            Shape::Square { s } => p[0].abs() < 0.5 * s && p[1].abs() < 0.5 * s,
            Shape::SlitDisk { .. } | Shape::NSlitDisk { .. } => r < 1.0,
        }
    }

    pub fn slits(&self) -> Vec<[[f64; 2]; 2]> {
        match self {
            Shape::SlitDisk { slits } => slits.clone(),
            Shape::NSlitDisk { n } => nslit_angles(*n).into_iter().map(|t| [[0.0, 0.0], [t.cos(), t.sin()]]).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "camelCase")]
pub enum MeasureWeights {
    Uniform,
    /// Density `inside` on the domain and `outside` on its exterior.
    TwoPhase { inside: f64, outside: f64 },
    /// One density per grid node, in node order.
    Custom { densities: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    /// Density assigned to slit nodes.
    pub null_density: f64,
    /// Padding of the bounding box beyond the shape: `pad_cells·h + pad_frac·extent`.
    pub pad_cells: usize,
    pub pad_frac: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { null_density: 1e-9, pad_cells: 12, pad_frac: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeClass {
    Omega,
    Exterior,
    Null,
}

/// Classification of the nodes of a space with respect to a domain.
#[derive(Debug, Clone)]
pub struct Region {
    class: Vec<NodeClass>,
    omega: NodeSet,
    exterior: NodeSet,
    null: NodeSet,
    interface: Vec<usize>,
    dist_to_omega: Vec<f64>,
    dist_to_rest: Vec<f64>,
}

impl Region {
    pub fn new(space: &Space, class: Vec<NodeClass>) -> Result<Self> {
        if class.len() != space.len() {
            return Err(invalid("class vector length does not match the node count"));
        }
        let n = class.len();
        let omega = NodeSet::from_fn(n, |i| class[i] == NodeClass::Omega);
        let exterior = NodeSet::from_fn(n, |i| class[i] == NodeClass::Exterior);
        let null = NodeSet::from_fn(n, |i| class[i] == NodeClass::Null);
        let interface = space
            .links()
            .iter()
            .enumerate()
            .filter(|(_, l)| class[l.a] != class[l.b])
            .map(|(k, _)| k)
            .collect();
        let dist_to_omega = space.distance_to(&omega);
        let dist_to_rest = space.distance_to(&omega.complement());
        Ok(Self { class, omega, exterior, null, interface, dist_to_omega, dist_to_rest })
    }

    #[inline]
    pub fn class(&self, i: usize) -> NodeClass {
        self.class[i]
    }

    #[inline]
    pub fn is_omega(&self, i: usize) -> bool {
        self.class[i] == NodeClass::Omega
    }

    pub fn omega(&self) -> &NodeSet {
        &self.omega
    }

    pub fn exterior(&self) -> &NodeSet {
        &self.exterior
    }

    pub fn null(&self) -> &NodeSet {
        &self.null
    }

    /// Link ids whose endpoints lie in different classes.
    pub fn interface_links(&self) -> &[usize] {
        &self.interface
    }

    /// Non-domain nodes within distance `w` of the domain.
    pub fn collar(&self, w: f64) -> NodeSet {
        NodeSet::from_fn(self.class.len(), |i| !self.is_omega(i) && self.dist_to_omega[i] <= w)
    }

    /// Domain nodes within distance `w` of a non-domain node.
    pub fn inner_collar(&self, w: f64) -> NodeSet {
        NodeSet::from_fn(self.class.len(), |i| self.is_omega(i) && self.dist_to_rest[i] <= w)
    }

    /// Distance from each node to the nearest domain node.
    pub fn distance_to_omega(&self) -> &[f64] {
        &self.dist_to_omega
    }

    /// Distance from each node to the nearest non-domain node.
    pub fn distance_to_complement(&self) -> &[f64] {
        &self.dist_to_rest
    }

    /// Domain nodes adjacent to a non-domain node.
    pub fn boundary_nodes(&self, space: &Space) -> NodeSet {
        let mut s = NodeSet::empty(self.class.len());
        for &k in &self.interface {
            let l = space.links()[k];
            for v in [l.a, l.b] {
                if self.is_omega(v) {
                    s.insert(v);
                }
            }
        }
        s
    }
}

fn seg_dist(p: [f64; 2], s: &[[f64; 2]; 2]) -> f64 {
    let (a, b) = (s[0], s[1]);
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Intersection point of segments `p0p1` and `s`, if they cross.
fn seg_cross(p0: [f64; 2], p1: [f64; 2], s: &[[f64; 2]; 2]) -> Option<[f64; 2]> {
    let r = [p1[0] - p0[0], p1[1] - p0[1]];
    let q = [s[1][0] - s[0][0], s[1][1] - s[0][1]];
    let den = r[0] * q[1] - r[1] * q[0];
    if den.abs() < 1e-300 {
        return None;
    }
    let w = [s[0][0] - p0[0], s[0][1] - p0[1]];
    let t = (w[0] * q[1] - w[1] * q[0]) / den;
    let u = (w[0] * r[1] - w[1] * r[0]) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| [p0[0] + t * r[0], p0[1] + t * r[1]])
}

/// Lattice discretization of `shape` at spacing `h` with the 16-neighbour Crofton stencil.
///
/// Nodes sit at cell centres of a square lattice symmetric about the origin.
/// Nodes outside the shape are exterior; nodes within `h/2` of a slit are null
/// with density `opts.null_density`; the rest form the domain.
pub fn build_grid(shape: &Shape, h: f64, weights: &MeasureWeights, opts: &GridOptions) -> Result<(Space, Region)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("grid spacing must be positive, got {h}")));
    }
    if !(opts.null_density > 0.0) {
        return Err(invalid("null density must be positive"));
    }
    shape.validate(h)?;
    let extent = shape.extent();
    let half = extent + opts.pad_cells as f64 * h + opts.pad_frac * extent;
    // an even side keeps nodes off the axes, so the lattice is cell-centred at the origin
    let side = 2 * (half / h).ceil() as usize;
    if side > 20_000 {
        return Err(invalid(format!("grid of {side}² nodes is too large")));
    }
    let x0 = -0.5 * side as f64 * h;
    let n = side * side;
    let slits = shape.slits();
    let tol = 0.5 * h * (1.0 + 1e-9);

    let mut class = Vec::with_capacity(n);
    let mut slit_dist = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    for iy in 0..side {
        for ix in 0..side {
            let p = [x0 + (ix as f64 + 0.5) * h, x0 + (iy as f64 + 0.5) * h];
            let sd = slits.iter().map(|s| seg_dist(p, s)).fold(f64::INFINITY, f64::min);
            let c = if !shape.contains(p) {
                NodeClass::Exterior
            } else if sd <= tol {
                NodeClass::Null
            } else {
                NodeClass::Omega
            };
            class.push(c);
            slit_dist.push(sd);
            nodes.push(Node { pos: p, area: h * h, density: 1.0 });
        }
    }
    match weights {
        MeasureWeights::Uniform => {}
        MeasureWeights::TwoPhase { inside, outside } => {
            if !(*inside > 0.0 && *outside > 0.0) {
                return Err(invalid("two-phase densities must be positive"));
            }
            for (nd, c) in nodes.iter_mut().zip(&class) {
                nd.density = if *c == NodeClass::Exterior { *outside } else { *inside };
            }
        }
        MeasureWeights::Custom { densities } => {
            if densities.len() != n {
                return Err(invalid(format!("custom densities have {} entries for {n} nodes", densities.len())));
            }
            if densities.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
                return Err(invalid("custom densities must be positive and finite"));
            }
            for (nd, &d) in nodes.iter_mut().zip(densities) {
                nd.density = d;
            }
        }
    }
    for (nd, c) in nodes.iter_mut().zip(&class) {
        if *c == NodeClass::Null {
            nd.density = opts.null_density;
        }
    }

    let null_ids: Vec<usize> = (0..n).filter(|&i| class[i] == NodeClass::Null).collect();
    let pts: Vec<[f64; 2]> = nodes.iter().map(|nd| nd.pos).collect();
    let null_index = BucketIndex::new(&pts, &null_ids, 2.0 * h);

    let weights16: Vec<f64> = (0..8).map(|k| crofton_weight(h, k)).collect();
    let mut edges = Vec::with_capacity(8 * n);
    for iy in 0..side as i64 {
        for ix in 0..side as i64 {
            let i = iy as usize * side + ix as usize;
            for (k, &(dx, dy)) in STENCIL16.iter().enumerate() {
                let (jx, jy) = (ix + dx, iy + dy);
                if jx < 0 || jy < 0 || jx >= side as i64 || jy >= side as i64 {
                    continue;
                }
                let j = jy as usize * side + jx as usize;
                let len = h * ((dx * dx + dy * dy) as f64).sqrt();
                let mut witness = None;
                if !slits.is_empty()
                    && class[i] != NodeClass::Null
                    && class[j] != NodeClass::Null
                    && slit_dist[i].min(slit_dist[j]) <= len
                {
                    let hit = slits.iter().find_map(|s| seg_cross(pts[i], pts[j], s));
                    if let Some(x) = hit {
                        witness = null_index.nearest(x).map(|(w, _)| w);
                    }
                }
                edges.push(Edge { i, j, len, crofton: weights16[k], witness });
            }
        }
    }
    let space = Space::from_parts(nodes, edges, Stencil::Grid16, Some(h))?;
    let region = Region::new(&space, class)?;
    Ok((space, region))
}

/// Per-node ball densities and the induced measure-theoretic classification.
#[derive(Debug, Clone)]
pub struct BoundaryClasses {
    /// Nodes of density above `1 − θ`.
    pub interior: NodeSet,
    /// Nodes of density below `θ`.
    pub exterior: NodeSet,
    /// The remaining nodes, a discrete stand-in for the measure-theoretic boundary.
    pub boundary: NodeSet,
    pub density: Vec<f64>,
}

/// Classify nodes by the density `μ(B(x,r) ∩ E)/μ(B(x,r))`.
pub fn classify_boundary(space: &Space, e: &NodeSet, r: f64, theta: f64) -> Result<BoundaryClasses> {
    let min = 2.0 * space.resolution();
    if r < min * (1.0 - 1e-12) {
        return Err(Error::BelowResolution { radius: r, min });
    }
    if !(theta > 0.0 && theta < 0.5) {
        return Err(invalid(format!("density threshold {theta} must lie in (0, 1/2)")));
    }
    let n = space.len();
    let mut density = vec![0.0; n];
    for (x, d) in density.iter_mut().enumerate() {
        let (mut inside, mut total) = (0.0, 0.0);
        space.for_each_in_ball(space.pos(x), r, |k, _| {
            let m = space.measure(k);
            total += m;
            if e.contains(k) {
                inside += m;
            }
        });
        *d = if total > 0.0 { inside / total } else { 0.0 };
    }
    let interior = NodeSet::from_fn(n, |i| density[i] > 1.0 - theta);
    let exterior = NodeSet::from_fn(n, |i| density[i] < theta);
    let boundary = NodeSet::from_fn(n, |i| !interior.contains(i) && !exterior.contains(i));
    Ok(BoundaryClasses { interior, exterior, boundary, density })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_angles_partition_half_turn() {
        let a = stencil_angles();
        assert!((a.iter().sum::<f64>() - PI).abs() < 1e-12);
        // the diagonal owns the gap between the two knight moves around it
        let knight = (1.0f64).atan2(2.0);
        assert!((a[2] - (PI / 4.0 - knight)).abs() < 1e-12);
    }

    #[test]
    fn grid_measure_is_area_times_density() {
        let (s, _) = build_grid(
            &Shape::Disk { r: 0.5 },
            0.05,
            &MeasureWeights::TwoPhase { inside: 1.0, outside: 0.3 },
            &GridOptions::default(),
        )
        .unwrap();
        for nd in s.nodes() {
            assert_eq!(nd.measure(), 0.05 * 0.05 * nd.density);
        }
        assert!(s.max_degree() <= 16);
    }

    #[test]
    fn annulus_rejects_inverted_radii() {
        let err = build_grid(&Shape::Annulus { a: 1.0, b: 0.5 }, 0.1, &MeasureWeights::Uniform, &GridOptions::default());
        assert!(matches!(err, Err(Error::DegenerateShape(_))));
    }

    #[test]
    fn nslit_rejects_unresolved_count() {
        let err = build_grid(&Shape::NSlitDisk { n: 12 }, 1.0 / 64.0, &MeasureWeights::Uniform, &GridOptions::default());
        assert!(matches!(err, Err(Error::DegenerateShape(_))));
    }

    #[test]
    fn crossing_edges_route_through_null_nodes() {
        let shape = Shape::SlitDisk { slits: vec![[[-0.7, -0.7], [0.7, 0.7]]] };
        let (s, r) = build_grid(&shape, 1.0 / 16.0, &MeasureWeights::Uniform, &GridOptions::default()).unwrap();
        let crossing: Vec<_> = s.edges().iter().filter(|e| e.witness.is_some()).collect();
        assert!(!crossing.is_empty());
        for e in crossing {
            assert_eq!(r.class(e.witness.unwrap()), NodeClass::Null);
        }
        // no domain-to-domain link crosses the slit
        for l in s.links() {
            if r.is_omega(l.a) && r.is_omega(l.b) {
                let (p, q) = (s.pos(l.a), s.pos(l.b));
                assert!(seg_cross(p, q, &[[-0.7, -0.7], [0.7, 0.7]]).is_none());
            }
        }
    }

    #[test]
    fn nslit_sectors_follow_angles() {
        let th = nslit_angles(4);
        assert_eq!(th.len(), 4);
        assert!((th[1] - PI / 2.0).abs() < 1e-15);
        assert!((th[3] - 7.0 * PI / 8.0).abs() < 1e-15);
        assert!(in_nslit_sectors(4, [0.5, 0.5]));
        assert!(!in_nslit_sectors(4, [-0.5, 0.1]));
        assert!(in_nslit_sectors(4, [(0.8 * PI).cos(), (0.8 * PI).sin()]));
    }
}
