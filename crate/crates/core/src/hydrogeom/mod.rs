//! Geometry of deformed configurations relative to the fluid: clipped
//! volumes and hydrostatic integrals, surface pressure forces, voxel images
//! and cavity sets.

mod clip;
mod voxel;

pub(crate) use voxel::cavity_set_unchecked;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Accumulator, Vector};
use crate::mesh::{DeformationField, ReferenceMesh};

pub(crate) use clip::{affine_mean, depth_moments, fraction, indicator_moments, positive_part, product_mean};
pub use voxel::{
    cavity_set, cavity_set_on_grid, ciarlet_necas_check, classify_wet_facets, image_volume, min_wall_thickness,
    symmetric_difference_volume, CavitySet, CellLabel, CnCheck, GridSpec, ImageVolume, VoxelGrid,
};

/// Bounded reservoir `S x [-M, inf)` holding the fluid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reservoir {
    #[serde(rename = "S_area", alias = "s_area")]
    pub s_area: f64,
    #[serde(rename = "M", alias = "m")]
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidEnvironment {
    pub rho_f: f64,
    pub g: f64,
    #[serde(default)]
    pub h: f64,
    #[serde(default)]
    pub reservoir: Option<Reservoir>,
}

impl FluidEnvironment {
    pub fn new(rho_f: f64, g: f64) -> Self {
        Self {
            rho_f,
            g,
            h: 0.0,
            reservoir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_f > 0.0) || !(self.g > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter("fluid: rho_f and g must be positive".into()));
        }
        if let Some(r) = &self.reservoir {
            if !(r.s_area > 0.0) || !(r.m > 0.0) {
                return Err(Error::InvalidParameter(
                    "reservoir: S_area and M must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Specific weight `g rho_f`.
    pub fn weight(&self) -> f64 {
        self.g * self.rho_f
    }
}

pub(crate) fn element_points<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &[Vector<D>],
    e: usize,
) -> ([Vector<D>; 4], usize) {
    let mut pts = [Vector::<D>::zeros(); 4];
    for (k, &n) in mesh.element(e).iter().enumerate() {
        pts[k] = y[n];
    }
    (pts, D + 1)
}

/// Depth below the waterline, `h - x_v`, at each point.
pub(crate) fn depths<const D: usize>(pts: &[Vector<D>], h: f64) -> [f64; 4] {
    let mut phi = [0.0; 4];
    for (k, p) in pts.iter().enumerate() {
        phi[k] = h - p[D - 1];
    }
    phi
}

fn deformed_volume_checked<const D: usize>(pts: &[Vector<D>], e: usize) -> Result<f64> {
    let v = linalg::simplex_volume(pts);
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvertedElement {
            element: e,
            jacobian: v,
        })
    }
}

/// Volume of the deformed body below the waterline, `|y(Omega) n {x_v <= h}|`,
/// counted with multiplicity.
pub fn submerged_volume<const D: usize>(mesh: &ReferenceMesh<D>, y: &DeformationField<D>, h: f64) -> Result<f64> {
    let mut acc = Accumulator::default();
    for e in 0..mesh.element_count() {
        let (pts, m) = element_points(mesh, y.positions(), e);
        let vol = deformed_volume_checked(&pts[..m], e)?;
        let phi = depths(&pts[..m], h);
        let pieces = positive_part(&phi[..m]);
        if !pieces.is_empty() {
            acc.add(vol * fraction(&pieces));
        }
    }
    Ok(acc.value())
}

/// `integral over y(Omega) of g rho_f (x_v - h)^- dx`, evaluated by clipping
/// the deformed simplices in physical space.
pub fn hydrostatic_integral<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    fluid: &FluidEnvironment,
    h: f64,
) -> Result<f64> {
    let mut acc = Accumulator::default();
    for e in 0..mesh.element_count() {
        let (pts, m) = element_points(mesh, y.positions(), e);
        deformed_volume_checked(&pts[..m], e)?;
        let phi = depths(&pts[..m], h);
        for piece in positive_part(&phi[..m]) {
            let corners: Vec<Vector<D>> = piece.lam[..m]
                .iter()
                .map(|row| (0..m).map(|i| pts[i] * row[i]).sum())
                .collect();
            let vol = linalg::simplex_volume(&corners).abs() * piece.weight.signum();
            let mean_depth = corners.iter().map(|c| h - c[D - 1]).sum::<f64>() / m as f64;
            acc.add(vol * mean_depth);
        }
    }
    Ok(fluid.weight() * acc.value())
}

/// Same integral as [`hydrostatic_integral`], pulled back to the reference
/// configuration: `integral over Omega of g rho_f (y_v - h)^- J dX`.
pub fn hydrostatic_integral_lagrangian<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    fluid: &FluidEnvironment,
    h: f64,
) -> Result<f64> {
    let mut acc = Accumulator::default();
    for e in 0..mesh.element_count() {
        let (value, _) =
            element_hydro(mesh, y.positions(), e, h, fluid.weight(), false, false).ok_or(Error::InvertedElement {
                element: e,
                jacobian: linalg::det(&crate::mesh::deformation_gradient(mesh, y.positions(), e)),
            })?;
        acc.add(value);
    }
    Ok(acc.value())
}

/// Hydrostatic energy of one element and, on request, its gradient with
/// respect to the element's vertices. `None` for inverted elements. With
/// `unit_jacobian` the pullback is taken with `J = 1`, which agrees with the
/// physical integral on volume-preserving states.
pub(crate) fn element_hydro<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &[Vector<D>],
    e: usize,
    h: f64,
    weight: f64,
    with_grad: bool,
    unit_jacobian: bool,
) -> Option<(f64, [Vector<D>; 4])> {
    let mut grad = [Vector::<D>::zeros(); 4];
    let (pts, m) = element_points(mesh, y, e);
    let phi = depths(&pts[..m], h);
    let f = crate::mesh::deformation_gradient(mesh, y, e);
    let j = linalg::det(&f);
    if !(j > 0.0) {
        return None;
    }
    let pieces = positive_part(&phi[..m]);
    if pieces.is_empty() {
        return Some((0.0, grad));
    }
    let vol = mesh.volume(e);
    let mean = affine_mean(&pieces, &phi[..m]);
    if with_grad {
        let ind = indicator_moments(&pieces, m);
        let ev = linalg::vertical::<D>();
        if unit_jacobian {
            for (a, g) in grad.iter_mut().enumerate().take(m) {
                *g = ev * (-ind[a] * weight * vol);
            }
        } else {
            let cof = linalg::cofactor(&f);
            for (a, ga) in mesh.shape_gradients(e).iter().enumerate() {
                grad[a] = (cof * ga * mean - ev * (j * ind[a])) * (weight * vol);
            }
        }
    }
    let jf = if unit_jacobian { 1.0 } else { j };
    Some((weight * vol * jf * mean, grad))
}

/// Vertices of boundary facet `f` in the deformed configuration.
pub(crate) fn facet_points<const D: usize>(mesh: &ReferenceMesh<D>, y: &[Vector<D>], f: usize) -> [Vector<D>; 3] {
    let mut pts = [Vector::<D>::zeros(); 3];
    for (k, &n) in mesh.facet(f).iter().enumerate() {
        pts[k] = y[n];
    }
    pts
}

/// Nodal pressure forces `-integral of g rho_f (x_v - h)^- lambda_a n da` on
/// one deformed facet, `n` the outward unit normal.
pub fn facet_pressure_forces<const D: usize>(pts: &[Vector<D>], h: f64, weight: f64) -> [Vector<D>; 3] {
    let mut out = [Vector::<D>::zeros(); 3];
    let phi = depths(pts, h);
    let pieces = positive_part(&phi[..D]);
    if pieces.is_empty() {
        return out;
    }
    let n = linalg::facet_area_normal(pts);
    let dm = depth_moments(&pieces, &phi[..D]);
    for a in 0..D {
        out[a] = -n * (weight * dm[a]);
    }
    out
}

/// Derivatives of the vertical component of the facet area normal with
/// respect to the facet vertices.
fn vertical_area_gradient<const D: usize>(pts: &[Vector<D>]) -> [Vector<D>; 3] {
    let mut g = [Vector::<D>::zeros(); 3];
    match D {
        2 => {
            g[0][0] = 1.0;
            g[1][0] = -1.0;
        }
        3 => {
            for i in 0..3 {
                let (next, prev) = (pts[(i + 1) % 3], pts[(i + 2) % 3]);
                g[i][0] = 0.5 * (next[1] - prev[1]);
                g[i][1] = 0.5 * (prev[0] - next[0]);
            }
        }
        _ => unreachable!(),
    }
    g
}

/// Contribution of a dry facet to the volume of the fluid-free hold, and to
/// its hydrostatic potential, through the divergence theorem:
/// `vol = integral of (x_v - h)^- n_v da` and
/// `pot = (1/2) integral of ((x_v - h)^-)^2 n_v da`. Returns
/// `(vol, pot, d pot / d x_a)`.
pub(crate) fn dry_facet_terms<const D: usize>(pts: &[Vector<D>], h: f64) -> (f64, f64, [Vector<D>; 3]) {
    let mut grad = [Vector::<D>::zeros(); 3];
    let phi = depths(pts, h);
    let pieces = positive_part(&phi[..D]);
    if pieces.is_empty() {
        return (0.0, 0.0, grad);
    }
    let nv = linalg::facet_area_normal(pts)[D - 1];
    let m1 = affine_mean(&pieces, &phi[..D]);
    let m2 = product_mean(&pieces, &phi[..D], &phi[..D]);
    let dm = depth_moments(&pieces, &phi[..D]);
    let dn = vertical_area_gradient(pts);
    let ev = linalg::vertical::<D>();
    for a in 0..D {
        grad[a] = dn[a] * (0.5 * m2) - ev * (nv * dm[a]);
    }
    (nv * m1, 0.5 * nv * m2, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_primitive, Primitive};
    use crate::Matrix;

    fn cube() -> ReferenceMesh<3> {
        build_primitive::<3>(&Primitive::cube(1.0, 2, Some([-0.5, -0.5, -0.5]))).unwrap()
    }

    #[test]
    fn symmetric_clip_and_depth_integral() {
        let m = cube();
        let y = DeformationField::identity(&m);
        assert!((submerged_volume(&m, &y, 0.0).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(submerged_volume(&m, &y.translated_vertically(1.0), 0.0).unwrap(), 0.0);
        let col = y.translated_vertically(-0.5);
        let fluid = FluidEnvironment::new(1.0, 1.0);
        assert!((hydrostatic_integral(&m, &col, &fluid, 0.0).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(
            hydrostatic_integral(&m, &y.translated_vertically(2.0), &fluid, 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn eulerian_equals_lagrangian() {
        let m = cube();
        let a = Matrix::<3>::new(1.1, 0.2, -0.1, 0.05, 0.9, 0.3, -0.2, 0.1, 1.2);
        let y = DeformationField::from_map(&m, |x| a * x + Vector::<3>::new(0.3, -0.1, 0.05));
        let fluid = FluidEnvironment::new(2.0, 3.0);
        let e = hydrostatic_integral(&m, &y, &fluid, 0.1).unwrap();
        let l = hydrostatic_integral_lagrangian(&m, &y, &fluid, 0.1).unwrap();
        assert!((e - l).abs() <= 1e-12 * e.abs());
    }

    #[test]
    fn inverted_element_is_an_error() {
        let m = cube();
        let y = DeformationField::from_map(&m, |x| Vector::<3>::new(-x[0], x[1], x[2]));
        assert!(matches!(
            submerged_volume(&m, &y, 0.0),
            Err(Error::InvertedElement { .. })
        ));
    }

    #[test]
    fn dry_facet_gradient_matches_differences() {
        let pts = [
            Vector::<3>::new(0.1, 0.0, -0.3),
            Vector::<3>::new(1.0, 0.2, 0.2),
            Vector::<3>::new(0.3, 0.9, -0.6),
        ];
        let (_, _, g) = dry_facet_terms(&pts, 0.0);
        let eps = 1e-6;
        for a in 0..3 {
            for k in 0..3 {
                let mut p = pts;
                p[a][k] += eps;
                let up = dry_facet_terms(&p, 0.0).1;
                p[a][k] -= 2.0 * eps;
                let dn = dry_facet_terms(&p, 0.0).1;
                assert!(((up - dn) / (2.0 * eps) - g[a][k]).abs() < 1e-8);
            }
        }
    }
}
