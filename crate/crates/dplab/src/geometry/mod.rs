//! Random inclusion processes: samplers, exact shape predicates,
//! rasterization to indicator grids, and separation statistics.

mod raster;
mod unionfind;

pub use raster::{rasterize, IndicatorGrid, Provenance, RasterRule};
pub(crate) use raster::splat_shape;
pub use unionfind::{OffsetUnionFind, UnionFind};

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Disc in 2-D, symmetric interval in 1-D.
    Disc { center: [f64; 2], radius: f64 },
    /// Segment dilated by `width` (stadium).
    Capsule { a: [f64; 2], b: [f64; 2], width: f64 },
    /// Edge-connected set of unit lattice cells `[i,i+1) x [j,j+1)`.
    CellCluster { cells: Vec<[i64; 2]> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Inclusion {
    pub id: usize,
    #[serde(flatten)]
    pub shape: Shape,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryModel {
    PeriodicLattice,
    HardDiscsRsa,
    PoissonHalfGap,
    ChessPercolation,
    Manual,
}

/// Explicit list of disjoint inclusions on a periodic cell (or bounded box).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InclusionSet {
    pub model: GeometryModel,
    pub seed: u64,
    pub period: f64,
    pub dim: usize,
    /// Periodic identification of the fundamental cell; bounded-box mode
    /// wraps nothing.
    pub periodic: bool,
    pub inclusions: Vec<Inclusion>,
    /// RSA sampler stopped on its rejection budget before reaching the target.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub saturated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusLaw {
    Fixed(f64),
    Uniform(f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationRow {
    pub id: usize,
    /// nearest-neighbor shape distance
    pub rho: f64,
    pub diameter: f64,
    /// rho/diameter capped at 1
    pub nu: f64,
    /// rho/width capped at 1, capsules only
    pub mu: Option<f64>,
    /// distance to the box boundary, bounded mode only
    pub boundary_dist: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    pub alpha: f64,
    pub rows: Vec<SeparationRow>,
    /// normalized moment sum (1/P^d) * sum nu_n^(-alpha); infinite on tangency
    pub moment: f64,
    pub tangency: bool,
}

// ---------------------------------------------------------------------------
// exact shape predicates

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn seg_point_dist2(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let den = dot(ab, ab);
    let t = if den == 0.0 { 0.0 } else { (dot(sub(p, a), ab) / den).clamp(0.0, 1.0) };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    let d = sub(p, q);
    dot(d, d)
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    (o1 * o2 < 0.0) && (o3 * o4 < 0.0)
}

fn seg_seg_dist(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    seg_point_dist2(a, b, c)
        .min(seg_point_dist2(a, b, d))
        .min(seg_point_dist2(c, d, a))
        .min(seg_point_dist2(c, d, b))
        .sqrt()
}

fn rect_point_dist(lo: [f64; 2], hi: [f64; 2], p: [f64; 2]) -> f64 {
    let dx = (lo[0] - p[0]).max(p[0] - hi[0]).max(0.0);
    let dy = (lo[1] - p[1]).max(p[1] - hi[1]).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

fn rect_rect_dist(lo1: [f64; 2], hi1: [f64; 2], lo2: [f64; 2], hi2: [f64; 2]) -> f64 {
    let dx = (lo1[0] - hi2[0]).max(lo2[0] - hi1[0]).max(0.0);
    let dy = (lo1[1] - hi2[1]).max(lo2[1] - hi1[1]).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

fn rect_seg_dist(lo: [f64; 2], hi: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let inside = |p: [f64; 2]| p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1];
    if inside(a) || inside(b) {
        return 0.0;
    }
    let c00 = [lo[0], lo[1]];
    let c10 = [hi[0], lo[1]];
    let c01 = [lo[0], hi[1]];
    let c11 = [hi[0], hi[1]];
    seg_seg_dist(a, b, c00, c10)
        .min(seg_seg_dist(a, b, c10, c11))
        .min(seg_seg_dist(a, b, c11, c01))
        .min(seg_seg_dist(a, b, c01, c00))
}

impl Shape {
    /// Axis-aligned bounding box (unwrapped coordinates).
    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            Shape::Disc { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Shape::Capsule { a, b, width } => (
                [a[0].min(b[0]) - width, a[1].min(b[1]) - width],
                [a[0].max(b[0]) + width, a[1].max(b[1]) + width],
            ),
            Shape::CellCluster { cells } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for c in cells {
                    lo[0] = lo[0].min(c[0] as f64);
                    lo[1] = lo[1].min(c[1] as f64);
                    hi[0] = hi[0].max(c[0] as f64 + 1.0);
                    hi[1] = hi[1].max(c[1] as f64 + 1.0);
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Shape::Disc { radius, .. } => 2.0 * radius,
            Shape::Capsule { a, b, width } => {
                let d = sub(*b, *a);
                dot(d, d).sqrt() + 2.0 * width
            }
            Shape::CellCluster { cells } => {
                let mut best = 0.0f64;
                for p in cells {
                    for q in cells {
                        let dx = (p[0] - q[0]).abs() as f64 + 1.0;
                        let dy = (p[1] - q[1]).abs() as f64 + 1.0;
                        best = best.max(dx * dx + dy * dy);
                    }
                }
                best.sqrt()
            }
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Disc { center, radius } => {
                let d = sub(p, *center);
                dot(d, d) < radius * radius
            }
            Shape::Capsule { a, b, width } => seg_point_dist2(*a, *b, p) < width * width,
            Shape::CellCluster { cells } => {
                let ci = p[0].floor() as i64;
                let cj = p[1].floor() as i64;
                cells.iter().any(|c| c[0] == ci && c[1] == cj)
            }
        }
    }

    /// Euclidean distance between shape boundaries (negative on overlap,
    /// clamped for rectangles which report 0 on contact).
    pub fn distance(&self, other: &Shape) -> f64 {
        use Shape::*;
        match (self, other) {
            (Disc { center: c1, radius: r1 }, Disc { center: c2, radius: r2 }) => {
                let d = sub(*c1, *c2);
                dot(d, d).sqrt() - r1 - r2
            }
            (Disc { center, radius }, Capsule { a, b, width })
            | (Capsule { a, b, width }, Disc { center, radius }) => {
                seg_point_dist2(*a, *b, *center).sqrt() - radius - width
            }
            (Capsule { a: a1, b: b1, width: w1 }, Capsule { a: a2, b: b2, width: w2 }) => {
                seg_seg_dist(*a1, *b1, *a2, *b2) - w1 - w2
            }
            (Disc { center, radius }, CellCluster { cells })
            | (CellCluster { cells }, Disc { center, radius }) => {
                cells
                    .iter()
                    .map(|c| {
                        rect_point_dist(
                            [c[0] as f64, c[1] as f64],
                            [c[0] as f64 + 1.0, c[1] as f64 + 1.0],
                            *center,
                        )
                    })
                    .fold(f64::INFINITY, f64::min)
                    - radius
            }
            (Capsule { a, b, width }, CellCluster { cells })
            | (CellCluster { cells }, Capsule { a, b, width }) => {
                cells
                    .iter()
                    .map(|c| {
                        rect_seg_dist(
                            [c[0] as f64, c[1] as f64],
                            [c[0] as f64 + 1.0, c[1] as f64 + 1.0],
                            *a,
                            *b,
                        )
                    })
                    .fold(f64::INFINITY, f64::min)
                    - width
            }
            (CellCluster { cells: cs1 }, CellCluster { cells: cs2 }) => {
                let mut best = f64::INFINITY;
                for p in cs1 {
                    let lo1 = [p[0] as f64, p[1] as f64];
                    let hi1 = [lo1[0] + 1.0, lo1[1] + 1.0];
                    for q in cs2 {
                        let lo2 = [q[0] as f64, q[1] as f64];
                        let hi2 = [lo2[0] + 1.0, lo2[1] + 1.0];
                        best = best.min(rect_rect_dist(lo1, hi1, lo2, hi2));
                    }
                }
                best
            }
        }
    }

    fn translated(&self, t: [f64; 2]) -> Shape {
        match self {
            Shape::Disc { center, radius } => {
                Shape::Disc { center: [center[0] + t[0], center[1] + t[1]], radius: *radius }
            }
            Shape::Capsule { a, b, width } => Shape::Capsule {
                a: [a[0] + t[0], a[1] + t[1]],
                b: [b[0] + t[0], b[1] + t[1]],
                width: *width,
            },
            // lattice clusters only translate by integers
            Shape::CellCluster { cells } => Shape::CellCluster {
                cells: cells.iter().map(|c| [c[0] + t[0] as i64, c[1] + t[1] as i64]).collect(),
            },
        }
    }
}

impl InclusionSet {
    /// Minimal distance between two inclusions under the set's metric
    /// (periodic minimum-image or plain Euclidean).
    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        let a = &self.inclusions[i].shape;
        let b = &self.inclusions[j].shape;
        if !self.periodic {
            return a.distance(b);
        }
        let p = self.period;
        let shifts: &[f64] = &[-p, 0.0, p];
        let mut best = f64::INFINITY;
        let ys: &[f64] = if self.dim == 2 { shifts } else { &[0.0] };
        for &sx in shifts {
            for &sy in ys {
                best = best.min(a.distance(&b.translated([sx, sy])));
            }
        }
        best
    }

    /// Pairwise open-disjointness and fits-in-cell checks.
    pub fn check_invariants(&self) -> Result<()> {
        for inc in &self.inclusions {
            let (lo, hi) = inc.shape.bbox();
            for ax in 0..self.dim {
                if hi[ax] - lo[ax] > self.period + 1e-12 {
                    return Err(Error::Geometry(format!(
                        "inclusion {} does not fit in the fundamental cell",
                        inc.id
                    )));
                }
            }
            let degenerate = match &inc.shape {
                Shape::Disc { radius, .. } => *radius <= 0.0,
                Shape::Capsule { width, .. } => *width <= 0.0,
                Shape::CellCluster { cells } => cells.is_empty(),
            };
            if degenerate {
                return Err(Error::Geometry(format!("inclusion {} degenerate", inc.id)));
            }
            if let Shape::CellCluster { cells } = &inc.shape {
                if !cluster_edge_connected(cells) {
                    return Err(Error::Geometry(format!(
                        "cluster {} is not edge-connected",
                        inc.id
                    )));
                }
            }
        }
        for i in 0..self.inclusions.len() {
            for j in (i + 1)..self.inclusions.len() {
                let d = self.pair_distance(i, j);
                if d < -1e-12 {
                    return Err(Error::Geometry(format!(
                        "inclusions {} and {} overlap (distance {d:.3e})",
                        self.inclusions[i].id, self.inclusions[j].id
                    )));
                }
            }
        }
        Ok(())
    }
}

fn cluster_edge_connected(cells: &[[i64; 2]]) -> bool {
    if cells.is_empty() {
        return false;
    }
    let set: std::collections::HashSet<[i64; 2]> = cells.iter().copied().collect();
    let mut seen = std::collections::HashSet::from([cells[0]]);
    let mut queue = std::collections::VecDeque::from([cells[0]]);
    while let Some(c) = queue.pop_front() {
        for d in [[1i64, 0], [-1, 0], [0, 1], [0, -1]] {
            let nb = [c[0] + d[0], c[1] + d[1]];
            if set.contains(&nb) && seen.insert(nb) {
                queue.push_back(nb);
            }
        }
    }
    seen.len() == set.len()
}

// ---------------------------------------------------------------------------
// samplers

/// One disc per fundamental cell, centered. Deterministic.
pub fn sample_periodic_lattice(radius: f64, period: f64) -> Result<InclusionSet> {
    if !(radius > 0.0) || !(period > 0.0) {
        return Err(Error::Geometry("radius and period must be positive".into()));
    }
    if radius >= period / 2.0 {
        return Err(Error::Geometry(format!(
            "disc of radius {radius} overlaps its periodic images at period {period}"
        )));
    }
    let set = InclusionSet {
        model: GeometryModel::PeriodicLattice,
        seed: 0,
        period,
        dim: 2,
        periodic: true,
        inclusions: vec![Inclusion {
            id: 0,
            shape: Shape::Disc { center: [period / 2.0, period / 2.0], radius },
        }],
        saturated: false,
        warnings: Vec::new(),
    };
    set.check_invariants()?;
    Ok(set)
}

/// 1-D variant: a centered interval, stored as a disc with the y coordinate
/// unused.
pub fn sample_interval_lattice(radius: f64, period: f64) -> Result<InclusionSet> {
    if !(radius > 0.0) || radius >= period / 2.0 {
        return Err(Error::Geometry("interval radius must lie in (0, period/2)".into()));
    }
    Ok(InclusionSet {
        model: GeometryModel::PeriodicLattice,
        seed: 0,
        period,
        dim: 1,
        periodic: true,
        inclusions: vec![Inclusion {
            id: 0,
            shape: Shape::Disc { center: [period / 2.0, 0.0], radius },
        }],
        saturated: false,
        warnings: Vec::new(),
    })
}

fn torus_point_dist(a: [f64; 2], b: [f64; 2], period: f64, dim: usize) -> f64 {
    let mut s = 0.0;
    for ax in 0..dim {
        let mut d = (a[ax] - b[ax]).abs() % period;
        if d > period / 2.0 {
            d = period - d;
        }
        s += d * d;
    }
    s.sqrt()
}

/// Random sequential adsorption of discs: uniform candidate centers, accepted
/// iff the gap to every placed disc is at least `margin * max(r_new, r_old)`.
/// Stops at `round(intensity * period^2)` discs or after a rejection budget of
/// 64x the target, returning a saturation flag in the latter case.
pub fn sample_hard_discs_rsa(
    intensity: f64,
    radius_law: RadiusLaw,
    separation_margin: f64,
    period: f64,
    seed: u64,
) -> Result<InclusionSet> {
    if separation_margin < 0.0 || period <= 0.0 || intensity < 0.0 {
        return Err(Error::Geometry("rsa parameters out of range".into()));
    }
    let (rmin, rmax) = match radius_law {
        RadiusLaw::Fixed(r) => (r, r),
        RadiusLaw::Uniform(a, b) => (a.min(b), a.max(b)),
    };
    if rmin <= 0.0 {
        return Err(Error::Geometry("radii must be positive".into()));
    }
    if 2.0 * rmax >= period {
        return Err(Error::Geometry("disc diameter exceeds the fundamental cell".into()));
    }
    let target = (intensity * period * period).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<([f64; 2], f64)> = Vec::with_capacity(target);
    let budget = 64 * target.max(1);
    let mut rejections = 0usize;
    while placed.len() < target && rejections < budget {
        let c = [rng.gen_range(0.0..period), rng.gen_range(0.0..period)];
        let r = match radius_law {
            RadiusLaw::Fixed(r) => r,
            RadiusLaw::Uniform(a, b) => rng.gen_range(a.min(b)..=a.max(b)),
        };
        let ok = placed.iter().all(|&(pc, pr)| {
            let gap = torus_point_dist(c, pc, period, 2) - r - pr;
            gap >= separation_margin * r.max(pr)
        });
        if ok {
            placed.push((c, r));
        } else {
            rejections += 1;
        }
    }
    let saturated = placed.len() < target;
    let inclusions = placed
        .into_iter()
        .enumerate()
        .map(|(id, (center, radius))| Inclusion { id, shape: Shape::Disc { center, radius } })
        .collect();
    let set = InclusionSet {
        model: GeometryModel::HardDiscsRsa,
        seed,
        period,
        dim: 2,
        periodic: true,
        inclusions,
        saturated,
        warnings: Vec::new(),
    };
    set.check_invariants()?;
    Ok(set)
}

/// Poisson points on the torus; each disc radius is exactly half the nearest
/// point distance, so closed discs may touch but open discs stay disjoint.
pub fn sample_poisson_halfgap(intensity: f64, period: f64, seed: u64) -> Result<InclusionSet> {
    if intensity <= 0.0 || period <= 0.0 {
        return Err(Error::Geometry("intensity and period must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = intensity * period * period;
    // Knuth inversion; adequate for desk-scale intensities.
    let limit = (-lambda).exp();
    let mut count = 0usize;
    let mut p = 1.0;
    loop {
        p *= rng.gen::<f64>();
        if p <= limit {
            break;
        }
        count += 1;
    }
    if count < 2 {
        return Err(Error::Geometry(format!(
            "poisson sample produced {count} point(s); radii undefined"
        )));
    }
    let points: Vec<[f64; 2]> =
        (0..count).map(|_| [rng.gen_range(0.0..period), rng.gen_range(0.0..period)]).collect();
    let inclusions = points
        .iter()
        .enumerate()
        .map(|(id, &c)| {
            let nearest = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != id)
                .map(|(_, &q)| torus_point_dist(c, q, period, 2))
                .fold(f64::INFINITY, f64::min);
            Inclusion { id, shape: Shape::Disc { center: c, radius: nearest / 2.0 } }
        })
        .collect();
    let set = InclusionSet {
        model: GeometryModel::PoissonHalfGap,
        seed,
        period,
        dim: 2,
        periodic: true,
        inclusions,
        saturated: false,
        warnings: Vec::new(),
    };
    set.check_invariants()?;
    Ok(set)
}

/// Unit squares independently black with probability `mu`; the inclusion set
/// is the complement of the largest torus-wrapping white cluster, labeled
/// into edge-connected cell clusters.
pub fn sample_chess_percolation(mu: f64, lattice_size: usize, seed: u64) -> Result<InclusionSet> {
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::Geometry(format!("mu must lie in [0,1), got {mu}")));
    }
    if lattice_size < 2 {
        return Err(Error::Geometry("lattice_size must be at least 2".into()));
    }
    let mut warnings = Vec::new();
    if mu >= 0.41 {
        warnings.push(format!(
            "mu={mu} is at or above the approximate site threshold 0.41; black clusters may percolate"
        ));
    }
    let m = lattice_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let black: Vec<bool> = (0..m * m).map(|_| rng.gen::<f64>() < mu).collect();
    let idx = |i: usize, j: usize| i + m * j;

    // white clusters with wrap detection
    let mut uf = OffsetUnionFind::new(m * m);
    for j in 0..m {
        for i in 0..m {
            let c = idx(i, j);
            if black[c] {
                continue;
            }
            let right = idx((i + 1) % m, j);
            if !black[right] {
                uf.union(c, right, [1, 0]);
            }
            let up = idx(i, (j + 1) % m);
            if !black[up] {
                uf.union(c, up, [0, 1]);
            }
        }
    }
    let mut sizes: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for c in 0..m * m {
        if !black[c] {
            let (root, _) = uf.find(c);
            *sizes.entry(root).or_insert(0) += 1;
        }
    }
    // the spanning proxy for the infinite white cluster: largest wrapping one
    let mut best: Option<(usize, usize)> = None;
    let roots: Vec<usize> = sizes.keys().copied().collect();
    for root in roots {
        if uf.wraps(root) {
            let s = sizes[&root];
            if best.map_or(true, |(_, bs)| s > bs) {
                best = Some((root, s));
            }
        }
    }
    let (white_root, _) = best.ok_or_else(|| {
        Error::Geometry("no spanning white cluster found; resample with another seed".into())
    })?;

    // F = all cells outside the spanning white cluster
    let in_f: Vec<bool> = (0..m * m)
        .map(|c| {
            if black[c] {
                true
            } else {
                let (root, _) = uf.find(c);
                root != white_root
            }
        })
        .collect();

    // label F into edge-connected components and unwrap each one
    let mut comp = UnionFind::new(m * m);
    for j in 0..m {
        for i in 0..m {
            let c = idx(i, j);
            if !in_f[c] {
                continue;
            }
            let right = idx((i + 1) % m, j);
            if in_f[right] {
                comp.union(c, right);
            }
            let up = idx(i, (j + 1) % m);
            if in_f[up] {
                comp.union(c, up);
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> =
        std::collections::BTreeMap::new();
    for c in 0..m * m {
        if in_f[c] {
            clusters.entry(comp.find(c)).or_default().push(c);
        }
    }

    let mut inclusions = Vec::with_capacity(clusters.len());
    for (id, (_, cells)) in clusters.into_iter().enumerate() {
        // breadth-first unwrap with consistency check
        let mut coord: std::collections::HashMap<usize, [i64; 2]> = std::collections::HashMap::new();
        let start = cells[0];
        let (si, sj) = (start % m, start / m);
        coord.insert(start, [si as i64, sj as i64]);
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            let base = coord[&c];
            let (i, j) = (c % m, c / m);
            let nbs = [
                (idx((i + 1) % m, j), [1i64, 0]),
                (idx((i + m - 1) % m, j), [-1, 0]),
                (idx(i, (j + 1) % m), [0, 1]),
                (idx(i, (j + m - 1) % m), [0, -1]),
            ];
            for (nb, d) in nbs {
                if !in_f[nb] || comp.find(nb) != comp.find(start) {
                    continue;
                }
                let cand = [base[0] + d[0], base[1] + d[1]];
                match coord.get(&nb) {
                    None => {
                        coord.insert(nb, cand);
                        queue.push_back(nb);
                    }
                    Some(&prev) => {
                        if prev != cand {
                            return Err(Error::Geometry(
                                "inclusion cluster wraps the torus; resample".into(),
                            ));
                        }
                    }
                }
            }
        }
        let cluster_cells: Vec<[i64; 2]> = cells.iter().map(|c| coord[c]).collect();
        inclusions.push(Inclusion { id, shape: Shape::CellCluster { cells: cluster_cells } });
    }

    Ok(InclusionSet {
        model: GeometryModel::ChessPercolation,
        seed,
        period: m as f64,
        dim: 2,
        periodic: true,
        inclusions,
        saturated: false,
        warnings,
    })
}

/// Exact pairwise separation statistics and the normalized moment sum.
pub fn separation_moments(set: &InclusionSet, alpha: f64) -> Result<SeparationReport> {
    let n = set.inclusions.len();
    if n < 2 {
        return Err(Error::Geometry(format!(
            "separation statistics need at least 2 inclusions, got {n}"
        )));
    }
    let mut rows = Vec::with_capacity(n);
    let mut moment = 0.0f64;
    let mut tangency = false;
    for i in 0..n {
        let mut rho = f64::INFINITY;
        for j in 0..n {
            if i != j {
                rho = rho.min(set.pair_distance(i, j));
            }
        }
        let rho = rho.max(0.0);
        let inc = &set.inclusions[i];
        let diameter = inc.shape.diameter();
        let nu = (rho / diameter).min(1.0);
        let mu = match &inc.shape {
            Shape::Capsule { width, .. } => Some((rho / width).min(1.0)),
            _ => None,
        };
        let boundary_dist = if set.periodic {
            None
        } else {
            let (lo, hi) = inc.shape.bbox();
            let mut d = f64::INFINITY;
            for ax in 0..set.dim {
                d = d.min(lo[ax]).min(set.period - hi[ax]);
            }
            Some(d.max(0.0))
        };
        if nu == 0.0 {
            tangency = true;
            moment = f64::INFINITY;
        } else if moment.is_finite() {
            moment += nu.powf(-alpha);
        }
        rows.push(SeparationRow { id: inc.id, rho, diameter, nu, mu, boundary_dist });
    }
    if moment.is_finite() {
        moment /= set.period.powi(set.dim as i32);
    }
    Ok(SeparationReport { alpha, rows, moment, tangency })
}
