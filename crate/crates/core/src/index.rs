//! Uniform bucket grid over planar points for ball and nearest-point queries.

#[derive(Debug, Clone)]
pub struct BucketIndex {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<usize>,
    items: Vec<usize>,
    pts: Vec<[f64; 2]>,
}

impl BucketIndex {
    /// Index the points `pts[k]` for `k in ids`; `cell` is the bucket width.
    pub fn new(pts: &[[f64; 2]], ids: &[usize], cell: f64) -> Self {
        let cell = if cell.is_finite() && cell > 0.0 { cell } else { 1.0 };
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &k in ids {
            for d in 0..2 {
                lo[d] = lo[d].min(pts[k][d]);
                hi[d] = hi[d].max(pts[k][d]);
            }
        }
        if ids.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).max(1);
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize + 1).max(1);
        let mut counts = vec![0usize; nx * ny + 1];
        let bucket = |p: [f64; 2]| -> usize {
            let bx = (((p[0] - lo[0]) / cell) as usize).min(nx - 1);
            let by = (((p[1] - lo[1]) / cell) as usize).min(ny - 1);
            by * nx + bx
        };
        for &k in ids {
            counts[bucket(pts[k]) + 1] += 1;
        }
        for b in 0..nx * ny {
            counts[b + 1] += counts[b];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; ids.len()];
        for &k in ids {
            let b = bucket(pts[k]);
            items[fill[b]] = k;
            fill[b] += 1;
        }
        Self { origin: lo, cell, nx, ny, starts: counts, items, pts: pts.to_vec() }
    }

    /// Bucket width chosen so that buckets hold a handful of points on average.
    pub fn auto_cell(pts: &[[f64; 2]], ids: &[usize], floor: f64) -> f64 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &k in ids {
            for d in 0..2 {
                lo[d] = lo[d].min(pts[k][d]);
                hi[d] = hi[d].max(pts[k][d]);
            }
        }
        if ids.len() < 2 {
            return floor.max(1e-12);
        }
        // nearly collinear sets would otherwise get a huge number of empty buckets
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(span * span / ids.len() as f64).max(floor * floor);
        (2.0 * (area / ids.len() as f64).sqrt()).max(floor)
    }

    fn cell_range(&self, c: f64, r: f64, o: f64, n: usize) -> (usize, usize) {
        let a = ((c - r - o) / self.cell).floor();
        let b = ((c + r - o) / self.cell).floor();
        let a = a.max(0.0) as usize;
        let b = if b < 0.0 { return (1, 0) } else { (b as usize).min(n - 1) };
        (a, b)
    }

    /// All indexed points at distance strictly less than `r` from `p`, in ascending id order.
    pub fn within(&self, p: [f64; 2], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(p, r, |k, _| out.push(k));
        out.sort_unstable();
        out
    }

    /// Visit indexed points with distance strictly less than `r`, passing the squared distance.
    pub fn for_each_within(&self, p: [f64; 2], r: f64, mut f: impl FnMut(usize, f64)) {
        if self.items.is_empty() {
            return;
        }
        let (x0, x1) = self.cell_range(p[0], r, self.origin[0], self.nx);
        let (y0, y1) = self.cell_range(p[1], r, self.origin[1], self.ny);
        if x0 > x1 || y0 > y1 {
            return;
        }
        let r2 = r * r;
        for by in y0..=y1 {
            for bx in x0..=x1 {
                let b = by * self.nx + bx;
                for &k in &self.items[self.starts[b]..self.starts[b + 1]] {
                    let q = self.pts[k];
                    let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                    if d2 < r2 {
                        f(k, d2);
                    }
                }
            }
        }
    }

    /// Nearest indexed point to `p` and its distance; ties go to the smaller id.
    pub fn nearest(&self, p: [f64; 2]) -> Option<(usize, f64)> {
        if self.items.is_empty() {
            return None;
        }
        let fx = ((p[0] - self.origin[0]) / self.cell).floor();
        let fy = ((p[1] - self.origin[1]) / self.cell).floor();
        let cx = fx.clamp(0.0, (self.nx - 1) as f64) as i64;
        let cy = fy.clamp(0.0, (self.ny - 1) as f64) as i64;
        // Chebyshev distance from p to its (clamped) home bucket; every point is at least this far
        let outside = {
            let bx0 = self.origin[0] + cx as f64 * self.cell;
            let by0 = self.origin[1] + cy as f64 * self.cell;
            let dx = (bx0 - p[0]).max(p[0] - bx0 - self.cell).max(0.0);
            let dy = (by0 - p[1]).max(p[1] - by0 - self.cell).max(0.0);
            dx.max(dy)
        };
        let mut best: Option<(usize, f64)> = None;
        let max_ring = self.nx.max(self.ny) as i64;
        for ring in 0..=max_ring {
            if let Some((_, d2)) = best {
                let reach = outside.max((ring - 1).max(0) as f64 * self.cell);
                if reach * reach > d2 {
                    break;
                }
            }
            for by in (cy - ring)..=(cy + ring) {
                if by < 0 || by >= self.ny as i64 {
                    continue;
                }
                let edge_row = by == cy - ring || by == cy + ring;
                let step = if edge_row { 1 } else { (2 * ring).max(1) as usize };
                let mut bx = cx - ring;
                while bx <= cx + ring {
                    if bx >= 0 && bx < self.nx as i64 {
                        let b = by as usize * self.nx + bx as usize;
                        for &k in &self.items[self.starts[b]..self.starts[b + 1]] {
                            let q = self.pts[k];
                            let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                            let better = match best {
                                None => true,
                                Some((bk, bd)) => d2 < bd || (d2 == bd && k < bk),
                            };
                            if better {
                                best = Some((k, d2));
                            }
                        }
                    }
                    bx += step as i64;
                }
            }
        }
        best.map(|(k, d2)| (k, d2.sqrt()))
    }
}
