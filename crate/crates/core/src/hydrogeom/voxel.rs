//! Uniform voxel images of deformed bodies: occupancy, the fluid-free hold
//! below the waterline, and the injectivity diagnostic.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{depths, element_points, facet_points, positive_part};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::mesh::{DeformationField, ReferenceMesh};

/// Geometry of a uniform grid of cubic cells. Cell `i` along axis `k` has
/// center `origin[k] + (i + 1/2) cell`; the flat index runs fastest along the
/// first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<const D: usize> {
    pub origin: Vector<D>,
    pub cell: f64,
    pub dims: [usize; D],
}

impl<const D: usize> GridSpec<D> {
    /// Grid with `res` cells along the longest axis of the union of the given
    /// boxes, padded on every side by the larger of 5% of the longest extent
    /// and 1.5 cells.
    pub fn enclosing(boxes: &[(Vector<D>, Vector<D>)], res: usize) -> Result<Self> {
        if res < 8 {
            return Err(Error::GridResolution(format!(
                "grid_res {res} is below the minimum of 8"
            )));
        }
        let mut lo = Vector::<D>::repeat(f64::INFINITY);
        let mut hi = Vector::<D>::repeat(f64::NEG_INFINITY);
        for (a, b) in boxes {
            lo = lo.inf(a);
            hi = hi.sup(b);
        }
        let ext = hi - lo;
        let longest = ext.max();
        if !(longest > 0.0) || !longest.is_finite() {
            return Err(Error::InvalidParameter("degenerate bounding box".into()));
        }
        let cell = (1.1 * longest / res as f64).max(longest / (res - 3) as f64);
        let center = (lo + hi) * 0.5;
        let mut dims = [0usize; D];
        let mut origin = Vector::<D>::zeros();
        let pad = 0.5 * (cell * res as f64 - longest);
        for k in 0..D {
            dims[k] = (((ext[k] + 2.0 * pad) / cell).ceil() as usize).max(1);
            origin[k] = center[k] - 0.5 * dims[k] as f64 * cell;
        }
        Ok(Self { origin, cell, dims })
    }

    /// Shifts the grid down by less than a cell, adding one layer on top, so
    /// that the horizontal plane `x_v = level` runs along cell faces.
    pub fn aligned_to(mut self, level: f64) -> Self {
        let v = D - 1;
        let off = self.origin[v] - level;
        let shift = off - (off / self.cell).floor() * self.cell;
        self.origin[v] -= shift;
        self.dims[v] += 1;
        self
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell.powi(D as i32)
    }

    pub fn unravel(&self, mut idx: usize) -> [usize; D] {
        let mut out = [0; D];
        for (o, &n) in out.iter_mut().zip(&self.dims) {
            *o = idx % n;
            idx /= n;
        }
        out
    }

    pub fn ravel(&self, ijk: &[usize; D]) -> usize {
        let mut idx = 0;
        for k in (0..D).rev() {
            idx = idx * self.dims[k] + ijk[k];
        }
        idx
    }

    pub fn center(&self, idx: usize) -> Vector<D> {
        let ijk = self.unravel(idx);
        Vector::<D>::from_fn(|k, _| self.origin[k] + (ijk[k] as f64 + 0.5) * self.cell)
    }

    /// Cell containing `p`, if inside the grid.
    pub fn locate(&self, p: &Vector<D>) -> Option<usize> {
        let mut ijk = [0; D];
        for k in 0..D {
            let t = ((p[k] - self.origin[k]) / self.cell).floor();
            if !(t >= 0.0 && t < self.dims[k] as f64) {
                return None;
            }
            ijk[k] = t as usize;
        }
        Some(self.ravel(&ijk))
    }

    /// Whether the box `[lo, hi]` inflated by one cell lies strictly inside.
    fn contains_with_margin(&self, lo: &Vector<D>, hi: &Vector<D>) -> bool {
        (0..D).all(|k| {
            lo[k] - self.cell > self.origin[k] && hi[k] + self.cell < self.origin[k] + self.dims[k] as f64 * self.cell
        })
    }

    fn neighbors(&self, idx: usize, out: &mut Vec<usize>) {
        out.clear();
        let ijk = self.unravel(idx);
        for k in 0..D {
            if ijk[k] > 0 {
                let mut n = ijk;
                n[k] -= 1;
                out.push(self.ravel(&n));
            }
            if ijk[k] + 1 < self.dims[k] {
                let mut n = ijk;
                n[k] += 1;
                out.push(self.ravel(&n));
            }
        }
    }

    fn on_boundary(&self, idx: usize) -> bool {
        let ijk = self.unravel(idx);
        (0..D).any(|k| ijk[k] == 0 || ijk[k] + 1 == self.dims[k])
    }

    fn index_range(&self, lo: f64, hi: f64, k: usize) -> Option<(usize, usize)> {
        let a = ((lo - self.origin[k]) / self.cell - 0.5).ceil().max(0.0);
        let b = ((hi - self.origin[k]) / self.cell - 0.5)
            .floor()
            .min(self.dims[k] as f64 - 1.0);
        (a <= b).then_some((a as usize, b as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum CellLabel {
    Body = 0,
    Fluid = 1,
    Cavity = 2,
    Air = 3,
}

#[derive(Debug, Clone)]
pub struct VoxelGrid<const D: usize> {
    spec: GridSpec<D>,
    labels: Vec<CellLabel>,
}

impl<const D: usize> VoxelGrid<D> {
    pub fn spec(&self) -> &GridSpec<D> {
        &self.spec
    }

    pub fn labels(&self) -> &[CellLabel] {
        &self.labels
    }

    pub fn count(&self, label: CellLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Marks every cell whose center lies in some deformed simplex.
fn rasterize<const D: usize>(spec: &GridSpec<D>, mesh: &ReferenceMesh<D>, y: &[Vector<D>]) -> Vec<bool> {
    let mut body = vec![false; spec.len()];
    for e in 0..mesh.element_count() {
        let (pts, _) = element_points(mesh, y, e);
        let mut ds = Matrix::<D>::zeros();
        for k in 0..D {
            ds.set_column(k, &(pts[k + 1] - pts[0]));
        }
        let Some(inv) = linalg::inverse(&ds) else { continue };
        let mut lo = pts[0];
        let mut hi = pts[0];
        for p in &pts[1..=D] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let mut range = [(0usize, 0usize); D];
        let mut empty = false;
        for k in 0..D {
            match spec.index_range(lo[k], hi[k], k) {
                Some(r) => range[k] = r,
                None => empty = true,
            }
        }
        if empty {
            continue;
        }
        let mut ijk: [usize; D] = std::array::from_fn(|k| range[k].0);
        'cells: loop {
            let c = Vector::<D>::from_fn(|k, _| spec.origin[k] + (ijk[k] as f64 + 0.5) * spec.cell);
            let lam = inv * (c - pts[0]);
            let tol = -1e-12;
            if lam.iter().all(|&l| l >= tol) && 1.0 - lam.sum() >= tol {
                body[spec.ravel(&ijk)] = true;
            }
            for k in 0..D {
                if ijk[k] < range[k].1 {
                    ijk[k] += 1;
                    continue 'cells;
                }
                ijk[k] = range[k].0;
            }
            break;
        }
    }
    body
}

/// Labels cells as body, fluid (reachable from the grid boundary below the
/// waterline), cavity (below the waterline but unreachable) or air.
fn label_cells<const D: usize>(spec: &GridSpec<D>, body: &[bool], h: f64) -> Vec<CellLabel> {
    let below: Vec<bool> = (0..spec.len()).map(|i| spec.center(i)[D - 1] < h).collect();
    let mut labels: Vec<CellLabel> = (0..spec.len())
        .map(|i| {
            if body[i] {
                CellLabel::Body
            } else if below[i] {
                CellLabel::Cavity
            } else {
                CellLabel::Air
            }
        })
        .collect();
    let mut queue = VecDeque::new();
    for (i, label) in labels.iter_mut().enumerate() {
        if *label == CellLabel::Cavity && spec.on_boundary(i) {
            *label = CellLabel::Fluid;
            queue.push_back(i);
        }
    }
    let mut nb = Vec::with_capacity(2 * D);
    while let Some(i) = queue.pop_front() {
        spec.neighbors(i, &mut nb);
        for &n in &nb {
            if labels[n] == CellLabel::Cavity {
                labels[n] = CellLabel::Fluid;
                queue.push_back(n);
            }
        }
    }
    labels
}

/// Voxel estimate of the image measure `|y(Omega)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageVolume {
    pub volume: f64,
    pub error_bound: f64,
    pub cell: f64,
}

pub fn image_volume<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    grid_res: usize,
) -> Result<ImageVolume> {
    let spec = GridSpec::enclosing(&[y.bounding_box()], grid_res)?;
    let body = rasterize(&spec, mesh, y.positions());
    let count = body.iter().filter(|&&b| b).count();
    let area: f64 = (0..mesh.facet_count())
        .map(|f| linalg::facet_area_normal(&facet_points(mesh, y.positions(), f)[..D]).norm())
        .sum();
    Ok(ImageVolume {
        volume: count as f64 * spec.cell_volume(),
        error_bound: 0.5 * area * (D as f64).sqrt() * spec.cell,
        cell: spec.cell,
    })
}

/// Outcome of comparing `integral of det grad y` with `|y(Omega)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnCheck {
    pub satisfied: bool,
    /// `|y(Omega)| - integral of det grad y`.
    pub slack: f64,
    pub image_volume: f64,
    pub jacobian_integral: f64,
    pub error_bound: f64,
}

pub fn ciarlet_necas_check<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    grid_res: usize,
) -> Result<CnCheck> {
    let img = image_volume(mesh, y, grid_res)?;
    let jac = crate::mesh::deformed_volume(mesh, y);
    let slack = img.volume - jac;
    Ok(CnCheck {
        satisfied: slack >= -img.error_bound,
        slack,
        image_volume: img.volume,
        jacobian_integral: jac,
        error_bound: img.error_bound,
    })
}

/// Bounded components of `{x_v <= h}` outside the deformed body, on a grid.
#[derive(Debug, Clone)]
pub struct CavitySet<const D: usize> {
    grid: VoxelGrid<D>,
    h: f64,
    volume: f64,
    depth_integral: f64,
}

impl<const D: usize> CavitySet<D> {
    pub fn grid(&self) -> &VoxelGrid<D> {
        &self.grid
    }

    pub fn spec(&self) -> &GridSpec<D> {
        &self.grid.spec
    }

    pub fn waterline(&self) -> f64 {
        self.h
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// `sum over cavity cells of (h - center_v)^+ * cell volume`.
    pub fn depth_integral(&self) -> f64 {
        self.depth_integral
    }

    pub fn is_empty(&self) -> bool {
        self.volume == 0.0
    }

    pub fn cell_count(&self) -> usize {
        self.grid.count(CellLabel::Cavity)
    }

    pub fn label_at(&self, p: &Vector<D>) -> Option<CellLabel> {
        self.grid.spec.locate(p).map(|i| self.grid.labels[i])
    }
}

/// Cavity set on a grid fitted to the deformed body.
pub fn cavity_set<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    h: f64,
    grid_res: usize,
) -> Result<CavitySet<D>> {
    let spec = GridSpec::enclosing(&[y.bounding_box()], grid_res)?.aligned_to(h);
    cavity_set_on_grid(&spec, mesh, y, h)
}

/// Cavity set on a prescribed grid, so that sets of different states can be
/// compared cell by cell. Fails when a wall below the waterline is thinner
/// than two cells, since the flood fill could leak through it.
pub fn cavity_set_on_grid<const D: usize>(
    spec: &GridSpec<D>,
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    h: f64,
) -> Result<CavitySet<D>> {
    let (lo, hi) = y.bounding_box();
    if !spec.contains_with_margin(&lo, &hi) {
        return Err(Error::GridMismatch(
            "grid does not enclose the deformed body with a one-cell margin".into(),
        ));
    }
    if let Some(t) = min_wall_thickness(mesh, y, h) {
        if t < 2.0 * spec.cell {
            return Err(Error::GridResolution(format!(
                "wall thickness {t:.3e} below the waterline is less than two cells ({:.3e}); increase grid_res",
                2.0 * spec.cell
            )));
        }
    }
    Ok(cavity_set_unchecked(spec, mesh, y.positions(), h))
}

pub(crate) fn cavity_set_unchecked<const D: usize>(
    spec: &GridSpec<D>,
    mesh: &ReferenceMesh<D>,
    y: &[Vector<D>],
    h: f64,
) -> CavitySet<D> {
    let body = rasterize(spec, mesh, y);
    let labels = label_cells(spec, &body, h);
    let cv = spec.cell_volume();
    let mut count = 0usize;
    let mut depth = linalg::Accumulator::default();
    for (i, l) in labels.iter().enumerate() {
        if *l == CellLabel::Cavity {
            count += 1;
            depth.add((h - spec.center(i)[D - 1]).max(0.0) * cv);
        }
    }
    CavitySet {
        grid: VoxelGrid {
            spec: spec.clone(),
            labels,
        },
        h,
        volume: count as f64 * cv,
        depth_integral: depth.value(),
    }
}

/// `|D_a xor D_b|` for two cavity sets on the same grid.
pub fn symmetric_difference_volume<const D: usize>(a: &CavitySet<D>, b: &CavitySet<D>) -> Result<f64> {
    if a.grid.spec != b.grid.spec {
        return Err(Error::GridMismatch("cavity sets live on different grids".into()));
    }
    let n = a
        .grid
        .labels
        .iter()
        .zip(&b.grid.labels)
        .filter(|(x, y)| (**x == CellLabel::Cavity) != (**y == CellLabel::Cavity))
        .count();
    Ok(n as f64 * a.grid.spec.cell_volume())
}

/// Distance along `dir` from `o` to the facet `pts`, if hit.
fn ray_hit<const D: usize>(o: &Vector<D>, dir: &Vector<D>, pts: &[Vector<D>]) -> Option<f64> {
    // solve o + t dir = p0 + sum_k s_k (p_k - p0)
    let mut m = Matrix::<D>::zeros();
    m.set_column(0, &(-dir));
    for k in 1..D {
        m.set_column(k, &(pts[k] - pts[0]));
    }
    let sol = linalg::inverse(&m)? * (o - pts[0]);
    let t = sol[0];
    let s: f64 = (1..D).map(|k| sol[k]).sum();
    let inside = (1..D).all(|k| sol[k] >= -1e-12) && s <= 1.0 + 1e-12;
    inside.then_some(t)
}

/// Smallest distance from a boundary facet below the waterline to the
/// opposite boundary, measured along the inward normal through the facet
/// centroid. `None` when no facet lies below the waterline.
pub fn min_wall_thickness<const D: usize>(mesh: &ReferenceMesh<D>, y: &DeformationField<D>, h: f64) -> Option<f64> {
    let y = y.positions();
    let facets: Vec<[Vector<D>; 3]> = (0..mesh.facet_count()).map(|f| facet_points(mesh, y, f)).collect();
    let mut best: Option<f64> = None;
    for (f, pts) in facets.iter().enumerate() {
        if pts[..D].iter().all(|p| p[D - 1] >= h) {
            continue;
        }
        let n = linalg::facet_area_normal(&pts[..D]);
        let len = n.norm();
        if len == 0.0 {
            continue;
        }
        let dir = -n / len;
        let c: Vector<D> = pts[..D].iter().sum::<Vector<D>>() / D as f64;
        let scale = pts[..D].iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
        for (g, other) in facets.iter().enumerate() {
            if g == f {
                continue;
            }
            if let Some(t) = ray_hit(&c, &dir, &other[..D]) {
                if t > 1e-9 * scale {
                    best = Some(best.map_or(t, |b| b.min(t)));
                }
            }
        }
    }
    best
}

/// Classifies boundary facets with a part below the waterline as wet
/// (`true`) or dry (`false`, bordering the cavity). The test point sits just
/// outside the submerged part of the facet, below the waterline.
pub fn classify_wet_facets<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    cavity: &CavitySet<D>,
) -> Vec<bool> {
    let h = cavity.h;
    let cell = cavity.grid.spec.cell;
    let y = y.positions();
    (0..mesh.facet_count())
        .map(|f| {
            let pts = facet_points(mesh, y, f);
            let phi = depths(&pts[..D], h);
            let pieces = positive_part(&phi[..D]);
            let frac = super::fraction(&pieces);
            if pieces.is_empty() || frac <= 0.0 {
                return true;
            }
            let c = Vector::<D>::from_fn(|k, _| {
                let vals: Vec<f64> = pts[..D].iter().map(|p| p[k]).collect();
                super::affine_mean(&pieces, &vals) / frac
            });
            let n = linalg::facet_area_normal(&pts[..D]);
            let Some(nhat) = n.try_normalize(0.0) else { return true };
            for k in [1.0, 1.5, 2.0, 3.0] {
                let mut p = c + nhat * (k * cell);
                p[D - 1] = p[D - 1].min(h - 0.5 * cell);
                match cavity.label_at(&p) {
                    None => return true,
                    Some(CellLabel::Body) => continue,
                    Some(CellLabel::Cavity) => return false,
                    Some(_) => return true,
                }
            }
            true
        })
        .collect()
}
