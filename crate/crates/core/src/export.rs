//! File formats: JSON with round-trip floats, VTK legacy ASCII and CSV.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::Result;
use crate::hydrogeom::VoxelGrid;
use crate::mesh::{DeformationField, ReferenceMesh};
use crate::optimize::TraceRow;

/// Pretty JSON formatter writing every float with 17 significant digits.
struct Exact<'a>(PrettyFormatter<'a>);

impl Formatter for Exact<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as indented JSON with round-trip exact floats.
pub fn to_json_exact<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Exact(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Deformed mesh as a VTK legacy unstructured grid with the element
/// Jacobian and region index as cell data. 2D meshes are embedded in `z = 0`.
pub fn vtk_unstructured<const D: usize>(mesh: &ReferenceMesh<D>, y: &DeformationField<D>) -> String {
    let mut s = String::new();
    let n = mesh.node_count();
    let ne = mesh.element_count();
    s.push_str("# vtk DataFile Version 3.0\ndeformed configuration\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {n} double");
    for p in y.positions() {
        let z = if D == 3 { p[2] } else { 0.0 };
        let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", p[0], p[1], z);
    }
    let _ = writeln!(s, "CELLS {ne} {}", ne * (D + 2));
    for el in mesh.elements() {
        let _ = write!(s, "{}", D + 1);
        for &i in el {
            let _ = write!(s, " {i}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {ne}");
    let ty = if D == 3 { 10 } else { 5 };
    for _ in 0..ne {
        let _ = writeln!(s, "{ty}");
    }
    let _ = writeln!(s, "CELL_DATA {ne}\nSCALARS J double 1\nLOOKUP_TABLE default");
    for e in 0..ne {
        let f = crate::mesh::deformation_gradient(mesh, y.positions(), e);
        let _ = writeln!(s, "{:.16e}", crate::linalg::det(&f));
    }
    let mut tags: Vec<&str> = mesh.regions().iter().map(String::as_str).collect();
    tags.sort_unstable();
    tags.dedup();
    s.push_str("SCALARS region int 1\nLOOKUP_TABLE default\n");
    for e in 0..ne {
        let id = tags.binary_search(&mesh.region(e)).unwrap_or(0);
        let _ = writeln!(s, "{id}");
    }
    s
}

/// Voxel labels (0 body, 1 fluid, 2 cavity, 3 air) as VTK structured points.
pub fn vtk_structured_points<const D: usize>(grid: &VoxelGrid<D>) -> String {
    let spec = grid.spec();
    let mut dims = [1usize; 3];
    let mut origin = [0.0; 3];
    for k in 0..D {
        dims[k] = spec.dims[k];
        origin[k] = spec.origin[k] + 0.5 * spec.cell;
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nvoxel labels\nASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2]);
    let _ = writeln!(s, "ORIGIN {:.16e} {:.16e} {:.16e}", origin[0], origin[1], origin[2]);
    let _ = writeln!(s, "SPACING {0:.16e} {0:.16e} {0:.16e}", spec.cell);
    let _ = writeln!(
        s,
        "POINT_DATA {}\nSCALARS label unsigned_char 1\nLOOKUP_TABLE default",
        spec.len()
    );
    for chunk in grid.labels().chunks(dims[0]) {
        let line: Vec<String> = chunk.iter().map(|l| (*l as u8).to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub const TRACE_HEADER: &str = "iter,total,elastic,hydro,gravity,anchor,penalty,grad_norm";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        let e = &r.energy;
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.iter, e.total, e.elastic, e.hydrostatic, e.gravity, e.anchor, e.penalty, r.grad_norm
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_primitive, Primitive};

    #[test]
    fn floats_round_trip() {
        let v = serde_json::json!({"a": 0.1, "b": [1.0 / 3.0, -2.5e-300], "c": 7});
        let bytes = to_json_exact(&v).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("1.0000000000000001e-1"));
        let back: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn vtk_counts() {
        let m = build_primitive::<2>(&Primitive::Box {
            size: vec![1.0, 1.0],
            res: vec![2, 2],
            origin: None,
        })
        .unwrap();
        let s = vtk_unstructured(&m, &DeformationField::identity(&m));
        assert!(s.contains("POINTS 9 double"));
        assert!(s.contains("CELLS 8 32"));
        assert_eq!(s.lines().filter(|l| *l == "5").count(), 8);
    }
}
