//! Simplicial reference configurations and kinematics of deformed states.

mod json;
mod primitive;

pub use json::MeshJson;
pub use primitive::{build_primitive, Primitive};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{self, det, Accumulator, Matrix, Vector};

pub const DEFAULT_REGION: &str = "body";

/// Reference configuration: a conforming mesh of positively oriented
/// simplices with outward oriented boundary facets.
#[derive(Debug, Clone)]
pub struct ReferenceMesh<const D: usize> {
    nodes: Vec<Vector<D>>,
    elements: Vec<usize>,
    facets: Vec<usize>,
    regions: Vec<String>,
    volumes: Vec<f64>,
    dm_inv: Vec<Matrix<D>>,
    shape_grads: Vec<Vector<D>>,
    lumped: Vec<f64>,
    facet_areas: Vec<f64>,
    total_volume: f64,
}

impl<const D: usize> ReferenceMesh<D> {
    /// Builds and validates a mesh. When `boundary` is given it must list
    /// exactly the facets owned by a single element; facets are re-oriented
    /// outward regardless of the order given.
    pub fn new(
        nodes: Vec<Vector<D>>,
        elements: Vec<Vec<usize>>,
        boundary: Option<Vec<Vec<usize>>>,
        regions: Option<Vec<String>>,
    ) -> Result<Self> {
        if D != 2 && D != 3 {
            return Err(Error::InvalidMesh(format!("unsupported dimension {D}")));
        }
        if elements.is_empty() {
            return Err(Error::InvalidMesh("mesh has no elements".into()));
        }
        if nodes.iter().any(|x| x.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite node coordinate".into()));
        }
        let mut flat = Vec::with_capacity(elements.len() * (D + 1));
        for (e, el) in elements.iter().enumerate() {
            if el.len() != D + 1 {
                return Err(Error::InvalidMesh(format!(
                    "element {e} has {} nodes, expected {}",
                    el.len(),
                    D + 1
                )));
            }
            for (k, &n) in el.iter().enumerate() {
                if n >= nodes.len() {
                    return Err(Error::InvalidMesh(format!("element {e} references node {n}")));
                }
                if el[..k].contains(&n) {
                    return Err(Error::InvalidMesh(format!("element {e} repeats node {n}")));
                }
            }
            flat.extend_from_slice(el);
        }
        let regions = match regions {
            Some(r) if r.len() != elements.len() => {
                return Err(Error::InvalidMesh(format!(
                    "{} region tags for {} elements",
                    r.len(),
                    elements.len()
                )))
            }
            Some(r) => r,
            None => vec![DEFAULT_REGION.to_string(); elements.len()],
        };

        let n_el = elements.len();
        let mut volumes = Vec::with_capacity(n_el);
        let mut dm_inv = Vec::with_capacity(n_el);
        let mut shape_grads = Vec::with_capacity(n_el * (D + 1));
        let mut lumped = vec![0.0; nodes.len()];
        for e in 0..n_el {
            let el = &flat[e * (D + 1)..(e + 1) * (D + 1)];
            let mut dm = Matrix::<D>::zeros();
            for k in 0..D {
                dm.set_column(k, &(nodes[el[k + 1]] - nodes[el[0]]));
            }
            let vol = det(&dm) / linalg::factorial(D);
            if !(vol > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "element {e} has non-positive reference volume {vol:e}"
                )));
            }
            let edge = (0..D).map(|k| dm.column(k).norm()).fold(0.0, f64::max);
            if vol <= 1e-12 * edge.powi(D as i32) {
                return Err(Error::InvalidMesh(format!(
                    "element {e} is degenerate (volume {vol:e})"
                )));
            }
            let inv = linalg::inverse(&dm).expect("positive volume implies invertible");
            let inv_t = inv.transpose();
            let mut g0 = Vector::<D>::zeros();
            let mut grads = [Vector::<D>::zeros(); 4];
            for k in 0..D {
                let g = inv_t.column(k).into_owned();
                grads[k + 1] = g;
                g0 -= g;
            }
            grads[0] = g0;
            shape_grads.extend_from_slice(&grads[..D + 1]);
            for &n in el {
                lumped[n] += vol / (D + 1) as f64;
            }
            volumes.push(vol);
            dm_inv.push(inv);
        }
        let total_volume = volumes.iter().copied().collect::<Accumulator>().value();

        let facets = boundary_facets::<D>(&nodes, &flat)?;
        let facets = match boundary {
            None => facets,
            Some(given) => match_boundary::<D>(facets, &given)?,
        };
        let facet_areas = facets
            .chunks(D)
            .map(|f| {
                let pts: Vec<Vector<D>> = f.iter().map(|&i| nodes[i]).collect();
                linalg::facet_area_normal(&pts).norm()
            })
            .collect();

        Ok(Self {
            nodes,
            elements: flat,
            facets,
            regions,
            volumes,
            dm_inv,
            shape_grads,
            lumped,
            facet_areas,
            total_volume,
        })
    }

    pub fn dim(&self) -> usize {
        D
    }

    pub fn nodes(&self) -> &[Vector<D>] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.volumes.len()
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e * (D + 1)..(e + 1) * (D + 1)]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.elements.chunks(D + 1)
    }

    pub fn facet_count(&self) -> usize {
        self.facet_areas.len()
    }

    pub fn facet(&self, f: usize) -> &[usize] {
        &self.facets[f * D..(f + 1) * D]
    }

    pub fn facets(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.facets.chunks(D)
    }

    /// Reference measure of each boundary facet.
    pub fn facet_area(&self, f: usize) -> f64 {
        self.facet_areas[f]
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    pub fn total_volume(&self) -> f64 {
        self.total_volume
    }

    /// Gradients of the barycentric shape functions of element `e` with
    /// respect to reference coordinates.
    pub fn shape_gradients(&self, e: usize) -> &[Vector<D>] {
        &self.shape_grads[e * (D + 1)..(e + 1) * (D + 1)]
    }

    /// Lumped (row-sum) nodal volumes; they sum to the total volume.
    pub fn lumped_volumes(&self) -> &[f64] {
        &self.lumped
    }

    pub fn region(&self, e: usize) -> &str {
        &self.regions[e]
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn region_volume(&self, tag: &str) -> f64 {
        (0..self.element_count())
            .filter(|&e| self.regions[e] == tag)
            .map(|e| self.volumes[e])
            .collect::<Accumulator>()
            .value()
    }

    /// Tags every element whose reference centroid lies in the closed box.
    pub fn tag_box(&mut self, tag: &str, min: &Vector<D>, max: &Vector<D>) -> usize {
        let mut count = 0;
        for e in 0..self.element_count() {
            let c = self.reference_centroid(e);
            if (0..D).all(|k| c[k] >= min[k] && c[k] <= max[k]) {
                self.regions[e] = tag.to_string();
                count += 1;
            }
        }
        count
    }

    pub fn reference_centroid(&self, e: usize) -> Vector<D> {
        self.element(e).iter().map(|&n| self.nodes[n]).sum::<Vector<D>>() / (D + 1) as f64
    }

    /// Nodes that belong to at least one boundary facet, sorted.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut on = vec![false; self.node_count()];
        for &n in &self.facets {
            on[n] = true;
        }
        (0..self.node_count()).filter(|&n| on[n]).collect()
    }

    /// Disjoint union of two meshes (nodes of `other` are appended).
    pub fn merge(&self, other: &Self) -> Result<Self> {
        let offset = self.node_count();
        let mut nodes = self.nodes.clone();
        nodes.extend_from_slice(&other.nodes);
        let mut elements: Vec<Vec<usize>> = self.elements().map(<[usize]>::to_vec).collect();
        elements.extend(other.elements().map(|el| el.iter().map(|&n| n + offset).collect()));
        let mut regions = self.regions.clone();
        regions.extend_from_slice(&other.regions);
        Self::new(nodes, elements, None, Some(regions))
    }

    pub(crate) fn dm_inv(&self, e: usize) -> &Matrix<D> {
        &self.dm_inv[e]
    }
}

/// Computes outward oriented boundary facets of a simplicial mesh.
fn boundary_facets<const D: usize>(nodes: &[Vector<D>], elements: &[usize]) -> Result<Vec<usize>> {
    let mut seen: HashMap<Vec<usize>, (usize, Vec<usize>)> = HashMap::new();
    let mut order = Vec::new();
    for el in elements.chunks(D + 1) {
        for skip in 0..=D {
            let mut facet: Vec<usize> = el
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != skip)
                .map(|(_, &n)| n)
                .collect();
            let pts: Vec<Vector<D>> = facet.iter().map(|&i| nodes[i]).collect();
            let normal = linalg::facet_area_normal(&pts);
            if normal.dot(&(nodes[el[skip]] - pts[0])) > 0.0 {
                facet.swap(0, 1);
            }
            let mut key = facet.clone();
            key.sort_unstable();
            let entry = seen.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                (0, facet)
            });
            entry.0 += 1;
        }
    }
    let mut out = Vec::new();
    for key in order {
        let (count, facet) = &seen[&key];
        match count {
            1 => out.extend_from_slice(facet),
            2 => {}
            _ => {
                return Err(Error::InvalidMesh(format!(
                    "facet {key:?} is shared by {count} elements"
                )))
            }
        }
    }
    Ok(out)
}

fn match_boundary<const D: usize>(computed: Vec<usize>, given: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut by_key: HashMap<Vec<usize>, &[usize]> = HashMap::new();
    for f in computed.chunks(D) {
        let mut key = f.to_vec();
        key.sort_unstable();
        by_key.insert(key, f);
    }
    if given.len() != by_key.len() {
        return Err(Error::InvalidMesh(format!(
            "boundary lists {} facets but the topological boundary has {}",
            given.len(),
            by_key.len()
        )));
    }
    let mut out = Vec::with_capacity(computed.len());
    for (i, f) in given.iter().enumerate() {
        let mut key = f.clone();
        key.sort_unstable();
        let facet = by_key
            .get(&key)
            .ok_or_else(|| Error::InvalidMesh(format!("boundary facet {i} {f:?} is not on the boundary")))?;
        out.extend_from_slice(facet);
    }
    Ok(out)
}

/// Nodal positions of a deformed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField<const D: usize> {
    positions: Vec<Vector<D>>,
}

impl<const D: usize> DeformationField<D> {
    pub fn new(mesh: &ReferenceMesh<D>, positions: Vec<Vector<D>>) -> Result<Self> {
        if positions.len() != mesh.node_count() {
            return Err(Error::InvalidParameter(format!(
                "deformation has {} nodes, mesh has {}",
                positions.len(),
                mesh.node_count()
            )));
        }
        if positions.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidParameter("non-finite deformation coordinate".into()));
        }
        Ok(Self { positions })
    }

    pub fn identity(mesh: &ReferenceMesh<D>) -> Self {
        Self {
            positions: mesh.nodes().to_vec(),
        }
    }

    pub fn from_map(mesh: &ReferenceMesh<D>, f: impl Fn(&Vector<D>) -> Vector<D>) -> Self {
        Self {
            positions: mesh.nodes().iter().map(f).collect(),
        }
    }

    pub fn positions(&self) -> &[Vector<D>] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [Vector<D>] {
        &mut self.positions
    }

    pub fn into_positions(self) -> Vec<Vector<D>> {
        self.positions
    }

    pub fn translated(&self, c: &Vector<D>) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p + c).collect(),
        }
    }

    pub fn translated_vertically(&self, t: f64) -> Self {
        self.translated(&(linalg::vertical::<D>() * t))
    }

    pub(crate) fn from_positions_unchecked(positions: Vec<Vector<D>>) -> Self {
        Self { positions }
    }

    /// Smallest and largest vertical node coordinate.
    pub fn vertical_range(&self) -> (f64, f64) {
        self.positions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[D - 1]), hi.max(p[D - 1]))
            })
    }

    pub fn bounding_box(&self) -> (Vector<D>, Vector<D>) {
        let mut lo = Vector::<D>::repeat(f64::INFINITY);
        let mut hi = Vector::<D>::repeat(f64::NEG_INFINITY);
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

/// Per-element deformation gradient with its determinant and cofactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementKinematics<const D: usize> {
    pub f: Matrix<D>,
    pub j: f64,
    pub cof: Matrix<D>,
}

impl<const D: usize> ElementKinematics<D> {
    pub fn from_gradient(f: Matrix<D>) -> Self {
        Self {
            f,
            j: det(&f),
            cof: linalg::cofactor(&f),
        }
    }
}

pub fn deformation_gradient<const D: usize>(mesh: &ReferenceMesh<D>, y: &[Vector<D>], e: usize) -> Matrix<D> {
    let el = mesh.element(e);
    let mut ds = Matrix::<D>::zeros();
    for k in 0..D {
        ds.set_column(k, &(y[el[k + 1]] - y[el[0]]));
    }
    ds * mesh.dm_inv(e)
}

/// Kinematics of element `e`. Inverted elements are reported through
/// `j <= 0`, not rejected.
pub fn element_kinematics<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    e: usize,
) -> Result<ElementKinematics<D>> {
    if e >= mesh.element_count() {
        return Err(Error::InvalidParameter(format!("element id {e} out of range")));
    }
    Ok(ElementKinematics::from_gradient(deformation_gradient(
        mesh,
        y.positions(),
        e,
    )))
}

/// Volume-weighted mean of the deformation over the reference domain.
pub fn barycenter<const D: usize>(mesh: &ReferenceMesh<D>, y: &DeformationField<D>) -> Vector<D> {
    let mut acc = [Accumulator::default(); 3];
    for e in 0..mesh.element_count() {
        let c: Vector<D> = mesh.element(e).iter().map(|&n| y.positions[n]).sum::<Vector<D>>() / (D + 1) as f64;
        for k in 0..D {
            acc[k].add(mesh.volume(e) * c[k]);
        }
    }
    Vector::<D>::from_fn(|k, _| acc[k].value() / mesh.total_volume())
}

/// Largest distance between two deformed nodes.
pub fn diameter<const D: usize>(y: &DeformationField<D>) -> f64 {
    let p = &y.positions;
    let mut best = 0.0f64;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            best = best.max((p[i] - p[j]).norm_squared());
        }
    }
    best.sqrt()
}

/// Deformed volume counted with multiplicity, `sum_e J_e |T_e|`.
pub fn deformed_volume<const D: usize>(mesh: &ReferenceMesh<D>, y: &DeformationField<D>) -> f64 {
    (0..mesh.element_count())
        .map(|e| det(&deformation_gradient(mesh, y.positions(), e)) * mesh.volume(e))
        .collect::<Accumulator>()
        .value()
}

/// Mean Jacobian over the reference domain.
pub fn mean_jacobian<const D: usize>(mesh: &ReferenceMesh<D>, y: &DeformationField<D>) -> f64 {
    deformed_volume(mesh, y) / mesh.total_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloatClass {
    Floating,
    BarelyFloating,
    FullyImmersed,
    NotImmersed,
}

impl std::fmt::Display for FloatClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FloatClass::Floating => "floating",
            FloatClass::BarelyFloating => "barely_floating",
            FloatClass::FullyImmersed => "fully_immersed",
            FloatClass::NotImmersed => "not_immersed",
        };
        f.write_str(s)
    }
}

/// Relative width of the band around the waterline treated as "at" it.
pub const WATERLINE_TOL: f64 = 1e-9;

pub fn float_classify<const D: usize>(y: &DeformationField<D>, h: f64) -> FloatClass {
    let tol = WATERLINE_TOL * diameter(y);
    let (lo, hi) = y.vertical_range();
    if (hi - h).abs() <= tol {
        FloatClass::BarelyFloating
    } else if hi <= h - tol {
        FloatClass::FullyImmersed
    } else if lo >= h {
        FloatClass::NotImmersed
    } else {
        FloatClass::Floating
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;

    fn unit_cube(res: usize) -> ReferenceMesh<3> {
        build_primitive::<3>(&Primitive::cube(1.0, res, Some([-0.5, -0.5, -0.5]))).unwrap()
    }

    #[test]
    fn box_volumes_are_exact() {
        let m = build_primitive::<3>(&Primitive::cube(1.0, 1, None)).unwrap();
        assert_eq!(m.element_count(), 6);
        assert!((m.total_volume() - 1.0).abs() < 1e-15);
        let sq = build_primitive::<2>(&Primitive::cube(1.0, 2, None)).unwrap();
        assert_eq!(sq.element_count(), 8);
        assert!((sq.total_volume() - 1.0).abs() < 1e-15);
        let sum: f64 = (0..m.element_count()).map(|e| m.volume(e)).sum();
        assert!((sum - m.total_volume()).abs() <= 1e-12 * m.total_volume());
    }

    #[test]
    fn boundary_facets_face_outward() {
        let m = unit_cube(3);
        // 6 faces, 3x3 squares each, 2 triangles per square
        assert_eq!(m.facet_count(), 6 * 9 * 2);
        let area: f64 = (0..m.facet_count()).map(|f| m.facet_area(f)).sum();
        assert!((area - 6.0).abs() < 1e-12);
        for f in m.facets() {
            let pts: Vec<Vector<3>> = f.iter().map(|&i| m.nodes()[i]).collect();
            let n = linalg::facet_area_normal(&pts);
            let c = (pts[0] + pts[1] + pts[2]) / 3.0;
            assert!(n.dot(&c) > 0.0, "facet normal points inward");
        }
    }

    #[test]
    fn rejects_inverted_and_wrong_boundary() {
        let nodes = vec![
            Vector::<2>::new(0.0, 0.0),
            Vector::<2>::new(1.0, 0.0),
            Vector::<2>::new(0.0, 1.0),
        ];
        let bad = ReferenceMesh::<2>::new(nodes.clone(), vec![vec![0, 2, 1]], None, None);
        assert!(matches!(bad, Err(Error::InvalidMesh(_))));
        let short = ReferenceMesh::<2>::new(nodes.clone(), vec![vec![0, 1, 2]], Some(vec![vec![0, 1]]), None);
        assert!(short.is_err());
        let ok = ReferenceMesh::<2>::new(
            nodes,
            vec![vec![0, 1, 2]],
            Some(vec![vec![1, 0], vec![2, 1], vec![0, 2]]),
            None,
        )
        .unwrap();
        // given order is kept but orientation is made outward
        assert_eq!(ok.facet(0), &[0, 1]);
    }

    #[test]
    fn kinematics_of_scaling() {
        let m = unit_cube(1);
        let y = DeformationField::from_map(&m, |x| x * 2.0);
        for e in 0..m.element_count() {
            let k = element_kinematics(&m, &y, e).unwrap();
            assert!((k.f - Matrix::<3>::identity() * 2.0).norm() < 1e-14);
            assert!((k.j - 8.0).abs() < 1e-13);
            assert!((k.cof - Matrix::<3>::identity() * 4.0).norm() < 1e-13);
        }
        assert!(element_kinematics(&m, &y, 99).is_err());
    }

    #[test]
    fn classification_examples() {
        let m = build_primitive::<3>(&Primitive::cube(1.0, 2, Some([-1.0, -1.0, -1.0]))).unwrap();
        let y = DeformationField::identity(&m);
        assert_eq!(float_classify(&y, 0.0), FloatClass::BarelyFloating);
        assert_eq!(
            float_classify(&y.translated_vertically(-1.0), 0.0),
            FloatClass::FullyImmersed
        );
        assert_eq!(float_classify(&y.translated_vertically(0.5), 0.0), FloatClass::Floating);
        assert_eq!(
            float_classify(&y.translated_vertically(1.0), 0.0),
            FloatClass::NotImmersed
        );
    }

    #[test]
    fn barycenter_of_centered_cube() {
        let m = unit_cube(2);
        let y = DeformationField::identity(&m);
        assert!(barycenter(&m, &y).norm() < 1e-15);
        let shifted = y.translated(&Vector::<3>::new(0.0, 0.0, 5.0));
        assert!((barycenter(&m, &shifted) - Vector::<3>::new(0.0, 0.0, 5.0)).norm() < 1e-14);
        assert!((diameter(&y) - 3f64.sqrt()).abs() < 1e-14);
    }
}
