//! Rasterization of inclusion sets to binary indicator grids.

use super::{GeometryModel, InclusionSet, Shape, UnionFind};
use crate::error::{Error, Result};
use crate::mesh::Grid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterRule {
    CenterSample,
    /// 4x4 subsamples per cell; in if at least half are inside.
    AreaThreshold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub model: GeometryModel,
    pub seed: u64,
}

/// Cell-wise 0/1 indicator of the inclusion set. The indicator stays binary:
/// the coefficient it produces is two-valued by construction.
#[derive(Debug, Clone)]
pub struct IndicatorGrid {
    pub grid: Grid,
    pub cells: Vec<bool>,
    pub provenance: Option<Provenance>,
}

impl IndicatorGrid {
    pub fn empty(grid: Grid) -> IndicatorGrid {
        IndicatorGrid { grid, cells: vec![false; grid.cells()], provenance: None }
    }

    pub fn volume_fraction(&self) -> f64 {
        self.cells.iter().filter(|&&b| b).count() as f64 / self.grid.cells() as f64
    }

    /// Face-connected components of the complement (periodic identification
    /// on torus grids).
    pub fn complement_components(&self) -> usize {
        let grid = self.grid;
        let mut uf = UnionFind::new(grid.cells());
        for c in 0..grid.cells() {
            if self.cells[c] {
                continue;
            }
            for axis in 0..grid.dim {
                if let Some(nb) = grid.neighbor(c, axis, 1) {
                    if !self.cells[nb] {
                        uf.union(c, nb);
                    }
                }
            }
        }
        let mut roots = std::collections::HashSet::new();
        for c in 0..grid.cells() {
            if !self.cells[c] {
                roots.insert(uf.find(c));
            }
        }
        roots.len()
    }

    /// Block replication by an integer factor per axis.
    pub fn upsample(&self, factor: usize) -> IndicatorGrid {
        assert!(factor >= 1);
        let g = self.grid;
        let fine = Grid::new(g.n * factor, g.dim, g.extent, g.torus);
        let mut cells = vec![false; fine.cells()];
        for c in 0..fine.cells() {
            let (i, j) = fine.coords(c);
            let coarse = if g.dim == 2 {
                g.index(i / factor, j / factor)
            } else {
                g.index(i / factor, 0)
            };
            cells[c] = self.cells[coarse];
        }
        IndicatorGrid { grid: fine, cells, provenance: self.provenance.clone() }
    }

    /// Tile a periodic indicator `times` per axis onto a larger torus of the
    /// same cell size.
    pub fn tile(&self, times: usize) -> IndicatorGrid {
        assert!(self.grid.torus);
        let g = self.grid;
        let fine = Grid::new(g.n * times, g.dim, g.extent * times as f64, g.torus);
        let mut cells = vec![false; fine.cells()];
        for c in 0..fine.cells() {
            let (i, j) = fine.coords(c);
            cells[c] = self.cells[g.index(i % g.n, if g.dim == 2 { j % g.n } else { 0 })];
        }
        IndicatorGrid { grid: fine, cells, provenance: self.provenance.clone() }
    }
}

/// Accumulate subsample hit counts of one shape into `counts`. The shape is
/// evaluated at `p -> (p - translate) / scale` so callers can place scaled
/// copies without rebuilding shapes.
pub(crate) fn splat_shape(
    grid: Grid,
    shape: &Shape,
    translate: [f64; 2],
    scale: f64,
    samples_per_axis: usize,
    counts: &mut [u8],
) {
    let h = grid.h();
    let (lo, hi) = shape.bbox();
    let lo = [lo[0] * scale + translate[0], lo[1] * scale + translate[1]];
    let hi = [hi[0] * scale + translate[0], hi[1] * scale + translate[1]];
    let n = grid.n as i64;
    // clamp to the grid: the caller enumerates periodic shifts, so each
    // placed copy must only touch the cells it actually covers
    let i0 = (lo[0] / h).floor().max(0.0) as i64;
    let i1 = ((hi[0] / h).floor() as i64).min(n - 1);
    let (j0, j1) = if grid.dim == 2 {
        ((lo[1] / h).floor().max(0.0) as i64, ((hi[1] / h).floor() as i64).min(n - 1))
    } else {
        (0, 0)
    };
    let s = samples_per_axis;
    for jj in j0..=j1 {
        let j = jj as usize;
        for ii in i0..=i1 {
            let i = ii as usize;
            let c = grid.index(i, j);
            let mut hits = 0u8;
            for sj in 0..(if grid.dim == 2 { s } else { 1 }) {
                for si in 0..s {
                    let px = (ii as f64 + (si as f64 + 0.5) / s as f64) * h;
                    let py = if grid.dim == 2 {
                        (jj as f64 + (sj as f64 + 0.5) / s as f64) * h
                    } else {
                        0.0
                    };
                    let q = [(px - translate[0]) / scale, (py - translate[1]) / scale];
                    if shape.contains(q) {
                        hits += 1;
                    }
                }
            }
            counts[c] = counts[c].saturating_add(hits);
        }
    }
}

/// Rasterize to a binary indicator. Checks the complement-connectivity and
/// nontriviality invariants and fails hard on violation.
pub fn rasterize(set: &InclusionSet, resolution: usize, rule: RasterRule) -> Result<IndicatorGrid> {
    if resolution < 4 {
        return Err(Error::Config(format!("raster resolution must be >= 4, got {resolution}")));
    }
    let grid = Grid::new(resolution, set.dim, set.period, set.periodic);
    let samples = match rule {
        RasterRule::CenterSample => 1,
        RasterRule::AreaThreshold => 4,
    };
    let total = if set.dim == 2 { samples * samples } else { samples };
    let threshold = match rule {
        RasterRule::CenterSample => 1,
        RasterRule::AreaThreshold => (total as u8).div_ceil(2),
    };
    let mut counts = vec![0u8; grid.cells()];
    for inc in &set.inclusions {
        if set.periodic {
            // place every periodic image whose bbox meets the fundamental cell
            let (lo, hi) = inc.shape.bbox();
            let p = set.period;
            let k0 = (-(hi[0] / p).floor()) as i64 - 1;
            let k1 = (-(lo[0] / p).floor()) as i64 + 1;
            let (l0, l1) = if set.dim == 2 {
                ((-(hi[1] / p).floor()) as i64 - 1, (-(lo[1] / p).floor()) as i64 + 1)
            } else {
                (0, 0)
            };
            for ky in l0..=l1 {
                for kx in k0..=k1 {
                    splat_shape(
                        grid,
                        &inc.shape,
                        [kx as f64 * p, ky as f64 * p],
                        1.0,
                        samples,
                        &mut counts,
                    );
                }
            }
        } else {
            splat_shape(grid, &inc.shape, [0.0, 0.0], 1.0, samples, &mut counts);
        }
    }
    let cells: Vec<bool> = counts.iter().map(|&c| c >= threshold).collect();
    let chi = IndicatorGrid {
        grid,
        cells,
        provenance: Some(Provenance { model: set.model, seed: set.seed }),
    };
    if chi.volume_fraction() >= 1.0 {
        return Err(Error::Geometry("indicator covers the whole cell".into()));
    }
    let comps = chi.complement_components();
    if comps != 1 {
        return Err(Error::Connectivity { components: comps });
    }
    Ok(chi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{self, Inclusion};

    #[test]
    fn empty_set_rasterizes_to_zero() {
        let set = InclusionSet {
            model: GeometryModel::Manual,
            seed: 0,
            period: 1.0,
            dim: 2,
            periodic: true,
            inclusions: vec![],
            saturated: false,
            warnings: Vec::new(),
        };
        let chi = rasterize(&set, 16, RasterRule::AreaThreshold).unwrap();
        assert_eq!(chi.volume_fraction(), 0.0);
    }

    #[test]
    fn resolution_floor_enforced() {
        let set = geometry::sample_periodic_lattice(0.25, 1.0).unwrap();
        assert!(rasterize(&set, 3, RasterRule::CenterSample).is_err());
    }

    #[test]
    fn disc_fraction_within_perimeter_band() {
        // centered disc r=0.25: fraction within 2*perimeter*h of pi/16
        let set = geometry::sample_periodic_lattice(0.25, 1.0).unwrap();
        let n = 512;
        let chi = rasterize(&set, n, RasterRule::AreaThreshold).unwrap();
        let exact = std::f64::consts::PI / 16.0;
        let band = 2.0 * (std::f64::consts::PI / 2.0) / n as f64;
        assert!(
            (chi.volume_fraction() - exact).abs() <= band,
            "fraction {} vs {} (band {})",
            chi.volume_fraction(),
            exact,
            band
        );
    }

    #[test]
    fn lattice_aligned_cluster_is_exact_copy() {
        let set = InclusionSet {
            model: GeometryModel::Manual,
            seed: 0,
            period: 4.0,
            dim: 2,
            periodic: true,
            inclusions: vec![Inclusion {
                id: 0,
                shape: Shape::CellCluster { cells: vec![[1, 1], [2, 1], [1, 2], [2, 2]] },
            }],
            saturated: false,
            warnings: Vec::new(),
        };
        for n in [4usize, 8, 16] {
            let chi = rasterize(&set, n, RasterRule::AreaThreshold).unwrap();
            let per = n / 4;
            for c in 0..chi.grid.cells() {
                let (i, j) = chi.grid.coords(c);
                let expect = (i / per == 1 || i / per == 2) && (j / per == 1 || j / per == 2);
                assert_eq!(chi.cells[c], expect, "cell ({i},{j}) at n={n}");
            }
        }
    }

    #[test]
    fn refinement_keeps_interior_cells() {
        // interior monotonicity: a cell strictly inside the disc stays set
        // when the resolution doubles.
        let set = geometry::sample_periodic_lattice(0.25, 1.0).unwrap();
        let a = rasterize(&set, 64, RasterRule::AreaThreshold).unwrap();
        let b = rasterize(&set, 128, RasterRule::AreaThreshold).unwrap();
        let h = a.grid.h();
        for c in 0..a.grid.cells() {
            let (i, j) = a.grid.coords(c);
            let corners = [
                [i as f64 * h, j as f64 * h],
                [(i + 1) as f64 * h, j as f64 * h],
                [i as f64 * h, (j + 1) as f64 * h],
                [(i + 1) as f64 * h, (j + 1) as f64 * h],
            ];
            let strictly_inside = corners.iter().all(|&p| {
                let dx = p[0] - 0.5;
                let dy = p[1] - 0.5;
                (dx * dx + dy * dy).sqrt() < 0.25 - 1e-9
            });
            if strictly_inside {
                assert!(a.cells[c]);
                for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    assert!(b.cells[b.grid.index(2 * i + di, 2 * j + dj)]);
                }
            }
        }
    }

    #[test]
    fn wrapped_inclusion_rasterizes_on_both_sides() {
        // disc centered at the origin corner wraps to all four corners
        let set = InclusionSet {
            model: GeometryModel::Manual,
            seed: 0,
            period: 1.0,
            dim: 2,
            periodic: true,
            inclusions: vec![Inclusion {
                id: 0,
                shape: Shape::Disc { center: [0.0, 0.0], radius: 0.2 },
            }],
            saturated: false,
            warnings: Vec::new(),
        };
        let chi = rasterize(&set, 32, RasterRule::CenterSample).unwrap();
        let g = chi.grid;
        assert!(chi.cells[g.index(0, 0)]);
        assert!(chi.cells[g.index(31, 31)]);
        assert!(chi.cells[g.index(0, 31)]);
        assert!(chi.cells[g.index(31, 0)]);
        let expect = std::f64::consts::PI * 0.04;
        assert!((chi.volume_fraction() - expect).abs() < 0.02);
    }

    #[test]
    fn deterministic_raster_bytes() {
        let set = geometry::sample_hard_discs_rsa(
            30.0,
            geometry::RadiusLaw::Uniform(0.02, 0.08),
            0.5,
            1.0,
            1,
        )
        .unwrap();
        let a = rasterize(&set, 128, RasterRule::AreaThreshold).unwrap();
        let b = rasterize(&set, 128, RasterRule::AreaThreshold).unwrap();
        assert_eq!(a.cells, b.cells);
    }
}
