//! Checks of equilibrium identities on arbitrary states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{Problem, Terms, Variant};
use crate::error::{Error, Result};
use crate::hydrogeom::{self, depths, element_hydro, element_points, facet_points, positive_part, FluidEnvironment};
use crate::linalg::{Accumulator, Vector};
use crate::material::{DensityModel, MaterialParams};
use crate::mesh::{self, DeformationField, ReferenceMesh};
use crate::optimize::Constraints;

/// Hydrostatic surface forces `-g rho_f (y_v - h)^- cof F N` integrated over
/// each boundary facet, and their nodal assembly.
#[derive(Debug, Clone)]
pub struct BoundaryTraction<const D: usize> {
    pub facet_forces: Vec<Vector<D>>,
    pub nodal: Vec<Vector<D>>,
}

impl<const D: usize> BoundaryTraction<D> {
    pub fn compute(mesh: &ReferenceMesh<D>, y: &DeformationField<D>, weight: f64, h: f64) -> Self {
        let mut nodal = vec![Vector::<D>::zeros(); mesh.node_count()];
        let mut facet_forces = Vec::with_capacity(mesh.facet_count());
        for f in 0..mesh.facet_count() {
            let pts = facet_points(mesh, y.positions(), f);
            let forces = hydrogeom::facet_pressure_forces(&pts[..D], h, weight);
            let mut total = Vector::<D>::zeros();
            for (a, &n) in mesh.facet(f).iter().enumerate() {
                nodal[n] += forces[a];
                total += forces[a];
            }
            facet_forces.push(total);
        }
        Self { facet_forces, nodal }
    }

    pub fn resultant(&self) -> Vector<D> {
        self.facet_forces.iter().sum()
    }
}

/// Weight of the solid, `g integral rho_s dX`, with wet/dry densities split
/// at the waterline.
pub fn solid_weight<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    density: &DensityModel,
    g: f64,
    h: f64,
) -> f64 {
    let mut acc = Accumulator::default();
    for e in 0..mesh.element_count() {
        let vol = mesh.volume(e);
        match density {
            DensityModel::WetDry { rho_wet, rho_dry } => {
                let (pts, m) = element_points(mesh, y.positions(), e);
                let phi = depths(&pts[..m], h);
                let wet = hydrogeom::fraction(&positive_part(&phi[..m]));
                acc.add(vol * (rho_dry + (rho_wet - rho_dry) * wet));
            }
            other => acc.add(vol * other.region_density(mesh.region(e))),
        }
    }
    g * acc.value()
}

/// Net upward force `g rho_f (V_sub + |D|) - weight`; positive means the
/// body is pushed up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchimedesResidual {
    pub residual: f64,
    /// Residual divided by `g rho_f |Omega|`.
    pub normalized: f64,
    pub submerged_volume: f64,
}

pub fn archimedes_check<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    density: &DensityModel,
    fluid: &FluidEnvironment,
    h: f64,
    cavity_volume: Option<f64>,
) -> Result<ArchimedesResidual> {
    let v = hydrogeom::submerged_volume(mesh, y, h)?;
    let residual = fluid.weight() * (v + cavity_volume.unwrap_or(0.0)) - solid_weight(mesh, y, density, fluid.g, h);
    Ok(ArchimedesResidual {
        residual,
        normalized: residual / (fluid.weight() * mesh.total_volume()),
        submerged_volume: v,
    })
}

/// `rho_f mean J - rho_s` (mass-averaged solid density) and its sign.
pub fn buoyancy_condition<const D: usize>(
    mesh: &ReferenceMesh<D>,
    y: &DeformationField<D>,
    density: &DensityModel,
    fluid: &FluidEnvironment,
) -> (i8, f64) {
    let rho_s = solid_weight(mesh, y, density, 1.0, fluid.h) / mesh.total_volume();
    let v = fluid.rho_f * mesh::mean_jacobian(mesh, y) - rho_s;
    let sign = if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    };
    (sign, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElResidual {
    /// Norm of the projected energy gradient (free directions only).
    pub interior: f64,
    /// Norm over unconstrained boundary nodes of the non-fluid nodal forces
    /// minus the hydrostatic traction.
    pub traction_mismatch: f64,
}

pub fn el_residual<const D: usize>(
    problem: &Problem<'_, D>,
    y: &DeformationField<D>,
    constraints: &Constraints<D>,
) -> ElResidual {
    let mut g = problem.gradient(y);
    constraints.restrict(&mut g, y.positions(), -1.0);
    let interior = g.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();

    let dry = problem.clone().with_terms(Terms {
        fluid: false,
        ..problem.terms
    });
    let mut inner = dry.gradient(y);
    if problem.material.is_incompressible() && problem.terms.fluid {
        // The volume-preserving hydrostatic term acts as a body force; the
        // difference to the surface form is a pressure field carried by the
        // incompressibility constraint, so it is counted as internal force.
        let w = problem.fluid.weight();
        for e in 0..problem.mesh.element_count() {
            let (Some((_, gl)), Some((_, ge))) = (
                element_hydro(problem.mesh, y.positions(), e, problem.h, w, true, true),
                element_hydro(problem.mesh, y.positions(), e, problem.h, w, true, false),
            ) else {
                continue;
            };
            for (a, &n) in problem.mesh.element(e).iter().enumerate() {
                inner[n] += gl[a] - ge[a];
            }
        }
    }
    if let Some(dry) = problem.dry_facets().filter(|_| problem.terms.fluid) {
        // The hold is open to the air: the dry-facet correction cancels the
        // pressure there, so it is counted with the non-fluid forces.
        let w = problem.fluid.weight();
        for f in (0..problem.mesh.facet_count()).filter(|&f| dry[f]) {
            let pts = facet_points(problem.mesh, y.positions(), f);
            let (_, _, dp) = hydrogeom::dry_facet_terms(&pts[..D], problem.h);
            for (a, &n) in problem.mesh.facet(f).iter().enumerate() {
                inner[n] += dp[a] * w;
            }
        }
    }
    constraints.restrict(&mut inner, y.positions(), -1.0);
    let traction = BoundaryTraction::compute(problem.mesh, y, problem.fluid.weight(), problem.h);
    let fixed: Vec<usize> = constraints.fixed.iter().map(|(n, _)| *n).collect();
    let mismatch = problem
        .mesh
        .boundary_nodes()
        .into_iter()
        .filter(|n| !fixed.contains(n))
        .map(|n| (inner[n] - traction.nodal[n]).norm_squared())
        .sum::<f64>()
        .sqrt();
    ElResidual {
        interior,
        traction_mismatch: mismatch,
    }
}

/// Worst relative error between the analytic directional derivative and
/// central differences along `n_directions` random unit directions, with
/// step `1e-6` times the diameter. Near equilibrium the derivative itself
/// vanishes, so the error is measured against at least the solid weight
/// per square root of the node count.
pub fn fd_gradient_check<const D: usize>(
    problem: &Problem<'_, D>,
    y: &DeformationField<D>,
    n_directions: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = problem.gradient(y);
    let eps = 1e-6 * mesh::diameter(y);
    let gnorm = g.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    let force_scale = problem.solid_weight().abs() / (g.len() as f64).sqrt();
    let mut worst = 0.0f64;
    for _ in 0..n_directions {
        let mut d: Vec<Vector<D>> = (0..g.len())
            .map(|_| Vector::<D>::from_fn(|_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let len = d.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        d.iter_mut().for_each(|v| *v /= len);
        let at = |t: f64| {
            let p: Vec<Vector<D>> = y.positions().iter().zip(&d).map(|(a, b)| a + b * t).collect();
            problem.evaluate(&p, None).total
        };
        let fd = (at(eps) - at(-eps)) / (2.0 * eps);
        let an: f64 = g.iter().zip(&d).map(|(a, b)| a.dot(b)).sum();
        let denom = an
            .abs()
            .max(fd.abs())
            .max(1e-8 * gnorm)
            .max(force_scale)
            .max(f64::MIN_POSITIVE);
        worst = worst.max((fd - an).abs() / denom);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbarCheck {
    pub alpha: f64,
    pub energy: f64,
    pub closed_form: f64,
    pub relative_error: f64,
    pub pass: bool,
}

/// Evaluates the split energy at the translated identity whose top touches
/// the waterline and compares with
/// `psi(1)|Omega| + g (rho_s - rho_f)(X_v + alpha)|Omega| + g rho_f h |Omega|`.
pub fn ebar_check<const D: usize>(
    mesh: &ReferenceMesh<D>,
    material: &MaterialParams,
    fluid: &FluidEnvironment,
    density: &DensityModel,
) -> Result<EbarCheck> {
    let DensityModel::Homogeneous { rho_s } = *density else {
        return Err(Error::InvalidParameter("ebar check needs a homogeneous density".into()));
    };
    let id = DeformationField::identity(mesh);
    let (_, top) = id.vertical_range();
    let alpha = fluid.h - top;
    let y = id.translated_vertically(alpha);
    let problem = Problem::new(
        mesh,
        material.clone(),
        density.clone(),
        fluid.clone(),
        Variant::Specific,
    )?;
    let energy = problem.total_energy(&y);
    let omega = mesh.total_volume();
    let xbar = mesh::barycenter(mesh, &id)[D - 1];
    let psi1 = material.volumetric(1.0, D, false).0;
    let closed_form = [
        psi1 * omega,
        fluid.g * (rho_s - fluid.rho_f) * (xbar + alpha) * omega,
        fluid.weight() * fluid.h * omega,
    ]
    .into_iter()
    .collect::<Accumulator>()
    .value();
    let scale = energy
        .abs()
        .max(closed_form.abs())
        .max(fluid.weight() * omega * mesh::diameter(&y) * 1e-300);
    let relative_error = if scale > 0.0 {
        (energy - closed_form).abs() / scale
    } else {
        0.0
    };
    Ok(EbarCheck {
        alpha,
        energy,
        closed_form,
        relative_error,
        pass: relative_error <= 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_primitive, Primitive};

    fn cube() -> ReferenceMesh<3> {
        build_primitive::<3>(&Primitive::cube(1.0, 2, Some([-0.5, -0.5, -0.5]))).unwrap()
    }

    #[test]
    fn rigid_cube_archimedes() {
        let m = cube();
        let fluid = FluidEnvironment::new(1.0, 1.0);
        let rho = DensityModel::Homogeneous { rho_s: 0.5 };
        let at = |depth: f64| {
            let y = DeformationField::identity(&m).translated_vertically(0.5 - depth);
            archimedes_check(&m, &y, &rho, &fluid, 0.0, None).unwrap().residual
        };
        assert!(at(0.5).abs() < 1e-14);
        assert!((at(0.3) - (0.3 - 0.5)).abs() < 1e-14);
    }

    #[test]
    fn buoyancy_signs() {
        let m = cube();
        let fluid = FluidEnvironment::new(1000.0, 9.81);
        let y = DeformationField::identity(&m);
        let light = DensityModel::Homogeneous { rho_s: 900.0 };
        assert_eq!(buoyancy_condition(&m, &y, &light, &fluid).0, 1);
        let same = DensityModel::Homogeneous { rho_s: 1000.0 };
        assert_eq!(buoyancy_condition(&m, &y, &same, &fluid).0, 0);
        let squeezed = DeformationField::from_map(&m, |x| x * 0.8f64.cbrt());
        let (s, v) = buoyancy_condition(&m, &squeezed, &light, &fluid);
        assert_eq!(s, -1);
        assert!((v + 100.0).abs() < 1e-9);
    }

    #[test]
    fn traction_vanishes_above_water() {
        let m = cube();
        let y = DeformationField::identity(&m).translated_vertically(2.0);
        let t = BoundaryTraction::compute(&m, &y, 1.0, 0.0);
        assert!(t.facet_forces.iter().all(|f| f.norm() == 0.0));
    }

    #[test]
    fn ebar_closed_form() {
        let m = build_primitive::<3>(&Primitive::cube(1.0, 2, None)).unwrap();
        let r = ebar_check(
            &m,
            &MaterialParams::compressible(1.0, 2.0, 1.0),
            &FluidEnvironment::new(1.0, 9.81),
            &DensityModel::Homogeneous { rho_s: 0.6 },
        )
        .unwrap();
        assert!((r.alpha + 1.0).abs() < 1e-15);
        assert!(r.pass, "{r:?}");
    }
}
