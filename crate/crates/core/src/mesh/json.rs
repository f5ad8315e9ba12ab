use serde::{Deserialize, Serialize};

use super::ReferenceMesh;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// On-disk mesh document with zero-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshJson {
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub elements: Vec<Vec<usize>>,
    #[serde(default)]
    pub boundary: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub regions: Option<Vec<String>>,
}

impl MeshJson {
    pub fn into_mesh<const D: usize>(self) -> Result<ReferenceMesh<D>> {
        if self.dim != D {
            return Err(Error::InvalidMesh(format!(
                "mesh document has dim {}, expected {D}",
                self.dim
            )));
        }
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if n.len() == D {
                    Ok(Vector::<D>::from_fn(|k, _| n[k]))
                } else {
                    Err(Error::InvalidMesh(format!("node {i} has {} coordinates", n.len())))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        ReferenceMesh::new(nodes, self.elements, self.boundary, self.regions)
    }
}

impl<const D: usize> From<&ReferenceMesh<D>> for MeshJson {
    fn from(mesh: &ReferenceMesh<D>) -> Self {
        MeshJson {
            dim: D,
            nodes: mesh.nodes().iter().map(|x| x.iter().copied().collect()).collect(),
            elements: mesh.elements().map(<[usize]>::to_vec).collect(),
            boundary: Some(mesh.facets().map(<[usize]>::to_vec).collect()),
            regions: Some(mesh.regions().to_vec()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_primitive, Primitive};

    #[test]
    fn json_round_trip_preserves_mesh() {
        let mut m = build_primitive::<3>(&Primitive::cube(1.0, 2, None)).unwrap();
        m.tag_box("ballast", &Vector::<3>::zeros(), &Vector::<3>::new(1.0, 1.0, 0.5));
        let text = serde_json::to_string(&MeshJson::from(&m)).unwrap();
        let back: MeshJson = serde_json::from_str(&text).unwrap();
        let m2 = back.into_mesh::<3>().unwrap();
        assert_eq!(m2.nodes(), m.nodes());
        assert_eq!(m2.regions(), m.regions());
        assert_eq!(m2.facets().collect::<Vec<_>>(), m.facets().collect::<Vec<_>>());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = build_primitive::<2>(&Primitive::cube(1.0, 1, None)).unwrap();
        let doc = MeshJson::from(&m);
        assert!(doc.into_mesh::<3>().is_err());
    }
}
