use serde::{Deserialize, Serialize};

use super::ReferenceMesh;
use crate::error::{Error, Result};
use crate::linalg::{simplex_volume, Vector};

/// Parametric reference geometries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    /// Axis-aligned box `origin + [0, size]`, `res` cells per axis, each cell
    /// split into `D!` simplices sharing its main diagonal.
    Box {
        size: Vec<f64>,
        res: Vec<usize>,
        #[serde(default)]
        origin: Option<Vec<f64>>,
    },
    /// Ball obtained by radially projecting a `res^D` box onto the sphere.
    Ball {
        radius: f64,
        res: usize,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Lower half of a spherical shell (an upright cup) with its rim circle
    /// centered at `center`.
    OpenShell {
        inner_radius: f64,
        thickness: f64,
        res: usize,
        #[serde(default = "default_layers")]
        layers: usize,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

fn default_layers() -> usize {
    2
}

impl Primitive {
    pub fn cube(side: f64, res: usize, origin: Option<[f64; 3]>) -> Self {
        Primitive::Box {
            size: vec![side; 3],
            res: vec![res; 3],
            origin: origin.map(|o| o.to_vec()),
        }
    }
}

fn vec_param<const D: usize>(name: &str, v: &Option<Vec<f64>>) -> Result<Vector<D>> {
    match v {
        None => Ok(Vector::<D>::zeros()),
        Some(v) if v.len() >= D => Ok(Vector::<D>::from_fn(|k, _| v[k])),
        Some(v) => Err(Error::InvalidParameter(format!(
            "{name} has {} components, expected {D}",
            v.len()
        ))),
    }
}

pub fn build_primitive<const D: usize>(kind: &Primitive) -> Result<ReferenceMesh<D>> {
    match kind {
        Primitive::Box { size, res, origin } => {
            if size.len() < D || res.len() < D {
                return Err(Error::InvalidParameter(format!("box needs {D} sizes and resolutions")));
            }
            let size = Vector::<D>::from_fn(|k, _| size[k]);
            let res: [usize; 3] = std::array::from_fn(|k| if k < D { res[k] } else { 1 });
            let origin = vec_param::<D>("origin", origin)?;
            if size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
                return Err(Error::InvalidParameter("box size must be positive".into()));
            }
            if res[..D].contains(&0) {
                return Err(Error::InvalidParameter("resolution must be at least 1".into()));
            }
            let (nodes, elements) = lattice::<D>(res, [false; 3], |idx| {
                Vector::<D>::from_fn(|k, _| origin[k] + size[k] * idx[k] as f64 / res[k] as f64)
            });
            ReferenceMesh::new(nodes, elements, None, None)
        }
        Primitive::Ball { radius, res, center } => {
            if !(*radius > 0.0) || *res == 0 {
                return Err(Error::InvalidParameter(
                    "ball needs positive radius and resolution".into(),
                ));
            }
            let center = vec_param::<D>("center", center)?;
            let n = 2 * res;
            let (nodes, elements) = lattice::<D>([n; 3], [true; 3], |idx| {
                let p = Vector::<D>::from_fn(|k, _| -1.0 + 2.0 * idx[k] as f64 / n as f64);
                let l2 = p.norm();
                let linf = p.amax();
                let q = if l2 > 0.0 { p * (linf / l2) } else { p };
                center + q * *radius
            });
            let elements = orient(&nodes, elements)?;
            ReferenceMesh::new(nodes, elements, None, None)
        }
        Primitive::OpenShell {
            inner_radius,
            thickness,
            res,
            layers,
            center,
        } => {
            if !(*inner_radius > 0.0) || !(*thickness > 0.0) || *res == 0 || *layers == 0 {
                return Err(Error::InvalidParameter(
                    "open shell needs positive radius, thickness and resolution".into(),
                ));
            }
            let center = vec_param::<D>("center", center)?;
            let n = 2 * res;
            let mut dims = [n; 3];
            dims[D - 1] = *layers;
            let (r0, t) = (*inner_radius, *thickness);
            let mut mirror = [true; 3];
            mirror[D - 1] = false;
            let (nodes, elements) = lattice::<D>(dims, mirror, |idx| {
                let radial = r0 + t * idx[D - 1] as f64 / *layers as f64;
                let dir = shell_direction::<D>(&std::array::from_fn(|k| -1.0 + 2.0 * idx[k] as f64 / n as f64));
                center + dir * radial
            });
            let (nodes, elements) = weld(nodes, elements, 1e-12 * (r0 + t));
            let elements = orient(&nodes, elements)?;
            ReferenceMesh::new(nodes, elements, None, None)
        }
    }
}

/// Unit direction on the lower half-sphere for parameters in `[-1, 1]^{D-1}`.
fn shell_direction<const D: usize>(param: &[f64; 3]) -> Vector<D> {
    let mut dir = Vector::<D>::zeros();
    if D == 2 {
        let theta = param[0] * std::f64::consts::FRAC_PI_2;
        dir[0] = theta.sin();
        dir[1] = -theta.cos();
    } else {
        let (a, b) = (param[0], param[1]);
        let l2 = (a * a + b * b).sqrt();
        let linf = a.abs().max(b.abs());
        if l2 == 0.0 {
            dir[2] = -1.0;
        } else {
            // square -> disk -> hemisphere
            let s = linf;
            let theta = s * std::f64::consts::FRAC_PI_2;
            dir[0] = theta.sin() * a / l2;
            dir[1] = theta.sin() * b / l2;
            dir[2] = -theta.cos();
        }
    }
    dir
}

/// Structured lattice with `dims[k]` cells per axis, each cell split into
/// simplices along its main diagonal (Kuhn subdivision, conforming). Along
/// axes with `mirror` set the pattern is reflected in the lower half, so
/// every cell's diagonal starts at the corner nearest the lattice center.
fn lattice<const D: usize>(
    dims: [usize; 3],
    mirror: [bool; 3],
    place: impl Fn(&[usize; 3]) -> Vector<D>,
) -> (Vec<Vector<D>>, Vec<Vec<usize>>) {
    let stride: [usize; 3] = [1, dims[0] + 1, (dims[0] + 1) * (dims[1] + 1)];
    let counts: [usize; 3] = std::array::from_fn(|k| if k < D { dims[k] + 1 } else { 1 });
    let mut nodes = Vec::new();
    for k in 0..counts[2] {
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                nodes.push(place(&[i, j, k]));
            }
        }
    }
    let perms: Vec<Vec<usize>> = if D == 2 {
        vec![vec![0, 1], vec![1, 0]]
    } else {
        vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ]
    };
    let cells: [usize; 3] = std::array::from_fn(|k| if k < D { dims[k] } else { 1 });
    let mut elements = Vec::new();
    for k in 0..cells[2] {
        for j in 0..cells[1] {
            for i in 0..cells[0] {
                let cell = [i, j, k];
                let flip: [bool; 3] = std::array::from_fn(|a| a < D && mirror[a] && 2 * cell[a] < dims[a]);
                let base: usize = (0..3).map(|a| (cell[a] + flip[a] as usize) * stride[a]).sum();
                let flips = flip.iter().filter(|&&f| f).count();
                for perm in &perms {
                    let mut el = vec![base];
                    let mut cur = base;
                    for &axis in perm {
                        if flip[axis] {
                            cur -= stride[axis];
                        } else {
                            cur += stride[axis];
                        }
                        el.push(cur);
                    }
                    if odd(perm) != (flips % 2 == 1) {
                        el.swap(0, 1);
                    }
                    elements.push(el);
                }
            }
        }
    }
    (nodes, elements)
}

fn odd(perm: &[usize]) -> bool {
    let mut inversions = 0;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 1
}

/// Merges coincident nodes (the shell lattice collapses at its pole in 2D
/// parametrizations and along seams) and drops elements that degenerate.
fn weld<const D: usize>(
    nodes: Vec<Vector<D>>,
    elements: Vec<Vec<usize>>,
    tol: f64,
) -> (Vec<Vector<D>>, Vec<Vec<usize>>) {
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut kept: Vec<Vector<D>> = Vec::new();
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| nodes[a][0].total_cmp(&nodes[b][0]));
    for (pos, &i) in order.iter().enumerate() {
        if remap[i] != usize::MAX {
            continue;
        }
        remap[i] = kept.len();
        for &j in &order[pos + 1..] {
            if nodes[j][0] - nodes[i][0] > tol {
                break;
            }
            if remap[j] == usize::MAX && (nodes[j] - nodes[i]).norm() <= tol {
                remap[j] = kept.len();
            }
        }
        kept.push(nodes[i]);
    }
    let elements = elements
        .into_iter()
        .map(|el| el.into_iter().map(|n| remap[n]).collect::<Vec<_>>())
        .filter(|el: &Vec<usize>| (1..el.len()).all(|k| !el[..k].contains(&el[k])))
        .collect();
    (kept, elements)
}

/// Makes every element positively oriented. Mixed signs mean the mapping
/// folded the lattice.
fn orient<const D: usize>(nodes: &[Vector<D>], mut elements: Vec<Vec<usize>>) -> Result<Vec<Vec<usize>>> {
    let signs: Vec<f64> = elements
        .iter()
        .map(|el| simplex_volume(&el.iter().map(|&n| nodes[n]).collect::<Vec<_>>()))
        .collect();
    let negative = signs.iter().filter(|&&v| v < 0.0).count();
    if signs.contains(&0.0) || (negative != 0 && negative != signs.len()) {
        return Err(Error::InvalidMesh(
            "primitive mapping folded or collapsed an element".into(),
        ));
    }
    if negative == signs.len() {
        for el in &mut elements {
            el.swap(0, 1);
        }
    }
    Ok(elements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{barycenter, DeformationField};

    #[test]
    fn open_shell_volume_close_to_half_shell() {
        let m = build_primitive::<3>(&Primitive::OpenShell {
            inner_radius: 0.5,
            thickness: 0.1,
            res: 6,
            layers: 2,
            center: None,
        })
        .unwrap();
        let exact = 2.0 * std::f64::consts::PI / 3.0 * (0.6f64.powi(3) - 0.5f64.powi(3));
        let rel = (m.total_volume() - exact).abs() / exact;
        assert!(rel < 0.05, "relative volume error {rel}");
        // rim at the center height, cup hangs below
        let (lo, hi) = DeformationField::identity(&m).vertical_range();
        assert!((hi - 0.0).abs() < 1e-12 && (lo + 0.6).abs() < 1e-12);
    }

    #[test]
    fn open_shell_2d_is_half_annulus() {
        let m = build_primitive::<2>(&Primitive::OpenShell {
            inner_radius: 0.5,
            thickness: 0.1,
            res: 8,
            layers: 2,
            center: None,
        })
        .unwrap();
        let exact = std::f64::consts::PI / 2.0 * (0.36 - 0.25);
        assert!((m.total_volume() - exact).abs() / exact < 0.01);
    }

    #[test]
    fn ball_is_centered_and_close_to_round() {
        let m = build_primitive::<3>(&Primitive::Ball {
            radius: 1.0,
            res: 3,
            center: Some(vec![0.0, 0.0, 2.0]),
        })
        .unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((m.total_volume() - exact).abs() / exact < 0.1);
        let c = barycenter(&m, &DeformationField::identity(&m));
        assert!((c - Vector::<3>::new(0.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(build_primitive::<3>(&Primitive::cube(1.0, 0, None)).is_err());
        assert!(build_primitive::<3>(&Primitive::cube(0.0, 1, None)).is_err());
        assert!(build_primitive::<2>(&Primitive::Ball {
            radius: -1.0,
            res: 2,
            center: None
        })
        .is_err());
    }
}
