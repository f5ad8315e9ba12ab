//! Total-energy variants and their gradients with respect to nodal positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydrogeom::{
    self, affine_mean, cavity_set_unchecked, classify_wet_facets, depths, dry_facet_terms, element_hydro,
    element_points, facet_points, indicator_moments, positive_part, FluidEnvironment, GridSpec,
};
use crate::linalg::{self, Accumulator, Vector};
use crate::material::{DensityModel, MaterialParams, BALLAST};
use crate::mesh::{deformation_gradient, DeformationField, ReferenceMesh};
use crate::optimize::Constraints;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Elastic, hydrostatic and gravitational energy.
    #[default]
    Standard,
    /// As `Standard`, with the compression barrier booked as a penalty.
    Specific,
    /// Hull/ballast body: stored energy on the hull only.
    Submarine,
    /// Waterline `h` set by the reservoir.
    Reservoir,
    /// Fluid-free hold below the waterline counts as displaced fluid.
    Ship,
}

/// Anchoring model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnchorKind {
    None,
    Clamped,
    ElasticBoundary { c3: f64, r: f64 },
    SlackCable { c3: f64, r: f64, lambda: f64 },
    Inextensible { lambda: f64 },
}

/// Axis-aligned selection box in reference coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Anchor model, the anchored part of the boundary (boundary nodes, or
/// boundary facets with all nodes, inside `select`) and the target map
/// `y_D(X) = X + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub model: AnchorKind,
    pub select: SelectBox,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
}

/// Anchor resolved against a mesh.
#[derive(Debug, Clone)]
pub struct ResolvedAnchor<const D: usize> {
    pub kind: AnchorKind,
    pub nodes: Vec<usize>,
    pub targets: Vec<Vector<D>>,
    /// Vertex-rule quadrature weights on the anchored facets.
    pub weights: Vec<f64>,
    pub measure: f64,
}

fn to_vector<const D: usize>(v: &[f64], what: &str) -> Result<Vector<D>> {
    if v.len() != D || v.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "anchor {what} must have {D} finite entries"
        )));
    }
    Ok(Vector::<D>::from_fn(|k, _| v[k]))
}

impl AnchorSpec {
    pub fn resolve<const D: usize>(&self, mesh: &ReferenceMesh<D>) -> Result<ResolvedAnchor<D>> {
        let lo: Vector<D> = to_vector(&self.select.min, "select.min")?;
        let hi: Vector<D> = to_vector(&self.select.max, "select.max")?;
        let offset: Vector<D> = match &self.offset {
            Some(o) => to_vector(o, "offset")?,
            None => Vector::<D>::zeros(),
        };
        let inside = |n: usize| {
            let x = mesh.nodes()[n];
            (0..D).all(|k| x[k] >= lo[k] && x[k] <= hi[k])
        };
        let mut weight = vec![0.0; mesh.node_count()];
        let mut measure = 0.0;
        for f in 0..mesh.facet_count() {
            if mesh.facet(f).iter().all(|&n| inside(n)) {
                let a = mesh.facet_area(f);
                measure += a;
                for &n in mesh.facet(f) {
                    weight[n] += a / D as f64;
                }
            }
        }
        let (nodes, weights): (Vec<usize>, Vec<f64>) = match self.model {
            AnchorKind::None => (Vec::new(), Vec::new()),
            AnchorKind::Clamped | AnchorKind::Inextensible { .. } => {
                let nodes: Vec<usize> = mesh.boundary_nodes().into_iter().filter(|&n| inside(n)).collect();
                let w = nodes.iter().map(|&n| weight[n]).collect();
                (nodes, w)
            }
            AnchorKind::ElasticBoundary { .. } | AnchorKind::SlackCable { .. } => (0..mesh.node_count())
                .filter(|&n| weight[n] > 0.0)
                .map(|n| (n, weight[n]))
                .unzip(),
        };
        match self.model {
            AnchorKind::None => {}
            AnchorKind::Clamped => {}
            AnchorKind::Inextensible { lambda } => {
                if !(lambda >= 0.0) {
                    return Err(Error::InvalidParameter("anchor: lambda must be non-negative".into()));
                }
            }
            AnchorKind::ElasticBoundary { c3, r } | AnchorKind::SlackCable { c3, r, .. } => {
                if !(r > 1.0) {
                    return Err(Error::InvalidParameter("anchor: r must exceed 1".into()));
                }
                if !(c3 >= 0.0) {
                    return Err(Error::InvalidParameter("anchor: c3 must be non-negative".into()));
                }
                if let AnchorKind::SlackCable { lambda, .. } = self.model {
                    if !(lambda >= 0.0) {
                        return Err(Error::InvalidParameter("anchor: lambda must be non-negative".into()));
                    }
                }
            }
        }
        if self.model != AnchorKind::None && nodes.is_empty() {
            return Err(Error::InvalidParameter(
                "anchor selection contains no boundary nodes".into(),
            ));
        }
        let targets = nodes.iter().map(|&n| mesh.nodes()[n] + offset).collect();
        Ok(ResolvedAnchor {
            kind: self.model.clone(),
            nodes,
            targets,
            weights,
            measure,
        })
    }
}

impl<const D: usize> ResolvedAnchor<D> {
    /// Boundary energy `c3 sum_n w_n g(|y_n - y_D,n|)` and its gradient.
    fn energy(&self, y: &[Vector<D>], grad: Option<&mut [Vector<D>]>) -> f64 {
        let (c3, r, lambda) = match self.kind {
            AnchorKind::ElasticBoundary { c3, r } => (c3, r, None),
            AnchorKind::SlackCable { c3, r, lambda } => (c3, r, Some(lambda)),
            _ => return 0.0,
        };
        let mut acc = Accumulator::default();
        let mut grad = grad;
        for (k, &n) in self.nodes.iter().enumerate() {
            let d = y[n] - self.targets[k];
            let len = d.norm();
            let mut v = len.powf(r);
            let mut active = true;
            if let Some(l) = lambda {
                v -= l.powf(r);
                if v <= 0.0 {
                    v = 0.0;
                    active = false;
                }
            }
            acc.add(c3 * self.weights[k] * v);
            if let Some(g) = grad.as_deref_mut() {
                if active && len > 0.0 {
                    g[n] += d * (c3 * self.weights[k] * r * len.powf(r - 2.0));
                }
            }
        }
        acc.value()
    }

    /// Largest distance of an anchored node from its target.
    pub fn max_elongation(&self, y: &[Vector<D>]) -> f64 {
        self.nodes
            .iter()
            .zip(&self.targets)
            .map(|(&n, t)| (y[n] - t).norm())
            .fold(0.0, f64::max)
    }
}

/// Energy split into its parts; `total` is their compensated sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    pub hydrostatic: f64,
    pub gravity: f64,
    pub anchor: f64,
    pub penalty: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn finish(mut self) -> Self {
        self.total = [self.elastic, self.hydrostatic, self.gravity, self.anchor, self.penalty]
            .into_iter()
            .collect::<Accumulator>()
            .value();
        self
    }

    fn infinite() -> Self {
        Self {
            total: f64::INFINITY,
            ..Self::default()
        }
    }
}

/// Which parts of the energy are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub elastic: bool,
    pub fluid: bool,
    pub gravity: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Self {
            elastic: true,
            fluid: true,
            gravity: true,
        }
    }
}

/// Frozen wet/dry classification of the boundary for the ship energy.
#[derive(Debug, Clone)]
struct ShipState<const D: usize> {
    cell: f64,
    wet: Vec<bool>,
    at: Vec<Vector<D>>,
}

/// A fully specified energy functional on a fixed mesh.
#[derive(Debug, Clone)]
pub struct Problem<'a, const D: usize> {
    pub mesh: &'a ReferenceMesh<D>,
    pub material: MaterialParams,
    pub density: DensityModel,
    pub fluid: FluidEnvironment,
    pub anchor: Option<ResolvedAnchor<D>>,
    pub variant: Variant,
    /// Waterline height.
    pub h: f64,
    /// Mean-Jacobian floor `tau` and penalty weight.
    pub mean_j_floor: Option<(f64, f64)>,
    pub terms: Terms,
    /// Grid resolution for the ship classification.
    pub grid_res: usize,
    ship: Option<ShipState<D>>,
}

impl<'a, const D: usize> Problem<'a, D> {
    pub fn new(
        mesh: &'a ReferenceMesh<D>,
        material: MaterialParams,
        density: DensityModel,
        fluid: FluidEnvironment,
        variant: Variant,
    ) -> Result<Self> {
        material.validate(D)?;
        density.validate()?;
        fluid.validate()?;
        if let DensityModel::HullBallast { rho_b: None, .. } = density {
            return Err(Error::InvalidParameter("ballast density must be resolved first".into()));
        }
        let h = fluid.h;
        Ok(Self {
            mesh,
            material,
            density,
            fluid,
            anchor: None,
            variant,
            h,
            mean_j_floor: None,
            terms: Terms::default(),
            grid_res: if D == 3 { 96 } else { 512 },
            ship: None,
        })
    }

    pub fn with_anchor(mut self, spec: &AnchorSpec) -> Result<Self> {
        let a = spec.resolve(self.mesh)?;
        self.anchor = (a.kind != AnchorKind::None).then_some(a);
        Ok(self)
    }

    pub fn with_terms(mut self, terms: Terms) -> Self {
        self.terms = terms;
        self
    }

    /// Hard constraints implied by the anchor.
    pub fn constraints(&self) -> Constraints<D> {
        let mut c = Constraints::default();
        if let Some(a) = &self.anchor {
            match a.kind {
                AnchorKind::Clamped => {
                    c.fixed = a.nodes.iter().copied().zip(a.targets.iter().copied()).collect();
                }
                AnchorKind::Inextensible { lambda } => {
                    c.ball = a.nodes.iter().zip(&a.targets).map(|(&n, t)| (n, *t, lambda)).collect();
                }
                _ => {}
            }
        }
        c
    }

    /// Element density; wet/dry models report the dry value.
    fn element_density(&self, e: usize) -> f64 {
        self.density.region_density(self.mesh.region(e))
    }

    /// Refreshes the ship classification for state `y` if it is missing or
    /// `y` has moved by more than half a cell since the last refresh. Returns
    /// whether the wet/dry classification changed.
    pub fn refresh_ship(&mut self, y: &[Vector<D>], force: bool) -> Result<bool> {
        if self.variant != Variant::Ship {
            return Ok(false);
        }
        if !force {
            if let Some(s) = &self.ship {
                let moved = s.at.iter().zip(y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                if moved <= 0.5 * s.cell {
                    return Ok(false);
                }
            }
        }
        let field = DeformationField::from_positions_unchecked(y.to_vec());
        let spec = GridSpec::enclosing(&[field.bounding_box()], self.grid_res)?.aligned_to(self.h);
        if let Some(t) = hydrogeom::min_wall_thickness(self.mesh, &field, self.h) {
            if t < 2.0 * spec.cell {
                return Err(Error::GridResolution(format!(
                    "wall thickness {t:.3e} is less than two cells ({:.3e}); increase grid_res",
                    2.0 * spec.cell
                )));
            }
        }
        let cav = cavity_set_unchecked(&spec, self.mesh, y, self.h);
        let wet = classify_wet_facets(self.mesh, &field, &cav);
        let changed = self.ship.as_ref().is_none_or(|s| s.wet != wet);
        self.ship = Some(ShipState {
            cell: spec.cell,
            wet,
            at: y.to_vec(),
        });
        Ok(changed)
    }

    /// Dry-facet flags of the current ship classification.
    pub fn dry_facets(&self) -> Option<Vec<bool>> {
        self.ship.as_ref().map(|s| s.wet.iter().map(|w| !w).collect())
    }

    /// Volume of the hold enclosed by the dry facets and the waterplane.
    pub fn enclosed_hold_volume(&self, y: &[Vector<D>]) -> f64 {
        let Some(s) = &self.ship else { return 0.0 };
        (0..self.mesh.facet_count())
            .filter(|&f| !s.wet[f])
            .map(|f| dry_facet_terms(&facet_points(self.mesh, y, f)[..D], self.h).0)
            .collect::<Accumulator>()
            .value()
    }

    /// Energy parts at `y`, and the gradient when `grad` is given (it is
    /// overwritten). The total is `+inf` on inverted states.
    pub fn evaluate(&self, y: &[Vector<D>], mut grad: Option<&mut [Vector<D>]>) -> EnergyBreakdown {
        let mesh = self.mesh;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = Vector::<D>::zeros());
        }
        let mut elastic = Accumulator::default();
        let mut hydro = Accumulator::default();
        let mut gravity = Accumulator::default();
        let mut penalty = Accumulator::default();
        let weight = self.fluid.weight();
        // Incompressible bodies use the volume-preserving form of the
        // hydrostatic term, so the penalty is not fighting the pressure.
        let unit_j = self.material.is_incompressible();
        let g = self.fluid.g;
        let ev = linalg::vertical::<D>();
        let barrier_as_penalty = self.variant == Variant::Specific;
        let mut jbar = Accumulator::default();
        let mut local = [Vector::<D>::zeros(); 4];

        for e in 0..mesh.element_count() {
            let el = mesh.element(e);
            let vol = mesh.volume(e);
            let grads = mesh.shape_gradients(e);
            let f = deformation_gradient(mesh, y, e);
            let j = linalg::det(&f);
            if !(j > 0.0) {
                return EnergyBreakdown::infinite();
            }
            let cof = linalg::cofactor(&f);
            local.iter_mut().for_each(|v| *v = Vector::<D>::zeros());
            jbar.add(j * vol);

            let hull = !(self.variant == Variant::Submarine && mesh.region(e) == BALLAST);
            if self.terms.elastic && hull {
                let (w, p) = self.material.density_and_stress(&f, j, &cof, !barrier_as_penalty);
                if !w.is_finite() {
                    return EnergyBreakdown::infinite();
                }
                elastic.add(vol * w);
                if grad.is_some() {
                    for a in 0..=D {
                        local[a] += p * grads[a] * vol;
                    }
                }
            }
            if self.terms.elastic {
                let mut dpen = 0.0;
                if self.material.is_incompressible() {
                    let (v, d) = self.material.incompressibility_penalty(j);
                    penalty.add(vol * v);
                    dpen += d;
                }
                if barrier_as_penalty && self.material.c1 > 0.0 {
                    let (v, d) = self.material.barrier(j);
                    if !v.is_finite() {
                        return EnergyBreakdown::infinite();
                    }
                    penalty.add(vol * self.material.c1 * v);
                    dpen += self.material.c1 * d;
                }
                if grad.is_some() && dpen != 0.0 {
                    for a in 0..=D {
                        local[a] += cof * grads[a] * (vol * dpen);
                    }
                }
            }
            if self.terms.fluid {
                let (v, gh) = element_hydro(mesh, y, e, self.h, weight, grad.is_some(), unit_j)
                    .expect("orientation checked above");
                hydro.add(v);
                for a in 0..=D {
                    local[a] += gh[a];
                }
            }
            if self.terms.gravity {
                let (pts, m) = element_points(mesh, y, e);
                let mean_v = pts[..m].iter().map(|p| p[D - 1]).sum::<f64>() / m as f64;
                match self.density {
                    DensityModel::WetDry { rho_wet, rho_dry } => {
                        let phi = depths(&pts[..m], self.h);
                        let pieces = positive_part(&phi[..m]);
                        let below = affine_mean(&pieces, &phi[..m]);
                        gravity.add(g * vol * (rho_dry * mean_v + (rho_dry - rho_wet) * below));
                        if grad.is_some() {
                            let ind = indicator_moments(&pieces, m);
                            for a in 0..=D {
                                local[a] += ev * (g * vol * (rho_dry / m as f64 - (rho_dry - rho_wet) * ind[a]));
                            }
                        }
                    }
                    _ => {
                        let rho = self.element_density(e);
                        gravity.add(g * rho * vol * mean_v);
                        if grad.is_some() {
                            for l in local.iter_mut().take(D + 1) {
                                *l += ev * (g * rho * vol / m as f64);
                            }
                        }
                    }
                }
            }
            if let Some(gr) = grad.as_deref_mut() {
                for (a, &n) in el.iter().enumerate() {
                    gr[n] += local[a];
                }
            }
        }

        if self.terms.fluid && self.variant == Variant::Ship {
            if let Some(s) = &self.ship {
                for f in 0..mesh.facet_count() {
                    if s.wet[f] {
                        continue;
                    }
                    let pts = facet_points(mesh, y, f);
                    let (_, pot, dp) = dry_facet_terms(&pts[..D], self.h);
                    hydro.add(weight * pot);
                    if let Some(gr) = grad.as_deref_mut() {
                        for (a, &n) in mesh.facet(f).iter().enumerate() {
                            gr[n] += dp[a] * weight;
                        }
                    }
                }
            }
        }

        if let Some((tau, w)) = self.mean_j_floor {
            let omega = mesh.total_volume();
            let deficit = tau - jbar.value() / omega;
            if deficit > 0.0 {
                penalty.add(w * omega * deficit * deficit);
                if let Some(gr) = grad.as_deref_mut() {
                    let c = -2.0 * w * deficit;
                    for e in 0..mesh.element_count() {
                        let cof = linalg::cofactor(&deformation_gradient(mesh, y, e));
                        let grads = mesh.shape_gradients(e);
                        for (a, &n) in mesh.element(e).iter().enumerate() {
                            gr[n] += cof * grads[a] * (c * mesh.volume(e));
                        }
                    }
                }
            }
        }

        let anchor = match &self.anchor {
            Some(a) => a.energy(y, grad),
            None => 0.0,
        };

        EnergyBreakdown {
            elastic: elastic.value(),
            hydrostatic: hydro.value(),
            gravity: gravity.value(),
            anchor,
            penalty: penalty.value(),
            total: 0.0,
        }
        .finish()
    }

    pub fn breakdown(&self, y: &DeformationField<D>) -> EnergyBreakdown {
        self.evaluate(y.positions(), None)
    }

    pub fn total_energy(&self, y: &DeformationField<D>) -> f64 {
        self.evaluate(y.positions(), None).total
    }

    pub fn gradient(&self, y: &DeformationField<D>) -> Vec<Vector<D>> {
        let mut g = vec![Vector::<D>::zeros(); y.positions().len()];
        self.evaluate(y.positions(), Some(&mut g));
        g
    }

    /// Derivative of the energy along a uniform vertical translation.
    pub fn vertical_derivative(&self, y: &DeformationField<D>) -> f64 {
        self.gradient(y).iter().map(|g| g[D - 1]).sum()
    }

    /// Solid weight `g integral rho_s dX` (wet/dry models use the dry density).
    pub fn solid_weight(&self) -> f64 {
        let mesh = self.mesh;
        self.fluid.g
            * (0..mesh.element_count())
                .map(|e| self.element_density(e) * mesh.volume(e))
                .collect::<Accumulator>()
                .value()
    }
}

/// `sum_e |T_e| W(F_e)`, `+inf` if some element is inverted.
pub fn elastic_energy<const D: usize>(
    mesh: &ReferenceMesh<D>,
    material: &MaterialParams,
    y: &DeformationField<D>,
) -> f64 {
    let mut acc = Accumulator::default();
    for e in 0..mesh.element_count() {
        let f = deformation_gradient(mesh, y.positions(), e);
        let j = linalg::det(&f);
        if !(j > 0.0) {
            return f64::INFINITY;
        }
        acc.add(mesh.volume(e) * material.density_and_stress(&f, j, &linalg::cofactor(&f), true).0);
    }
    acc.value()
}

/// Gravitational potential of the solid relative to the level `x_v = 0`,
/// with the wet/dry split at waterline `h`.
pub fn gravity_energy<const D: usize>(
    mesh: &ReferenceMesh<D>,
    density: &DensityModel,
    y: &DeformationField<D>,
    g: f64,
    h: f64,
) -> f64 {
    let mut acc = Accumulator::default();
    for e in 0..mesh.element_count() {
        let (pts, m) = element_points(mesh, y.positions(), e);
        let mean_v = pts[..m].iter().map(|p| p[D - 1]).sum::<f64>() / m as f64;
        let vol = mesh.volume(e);
        match density {
            DensityModel::WetDry { rho_wet, rho_dry } => {
                let phi = depths(&pts[..m], h);
                let below = affine_mean(&positive_part(&phi[..m]), &phi[..m]);
                acc.add(g * vol * (rho_dry * mean_v + (rho_dry - rho_wet) * below));
            }
            other => acc.add(g * vol * other.region_density(mesh.region(e)) * mean_v),
        }
    }
    acc.value()
}

/// Boundary-anchoring energy; clamped and inextensible anchors are
/// constraints and contribute nothing.
pub fn anchor_energy<const D: usize>(anchor: &ResolvedAnchor<D>, y: &DeformationField<D>) -> f64 {
    anchor.energy(y.positions(), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_primitive, Primitive};
    use crate::Matrix;

    fn cube() -> ReferenceMesh<3> {
        build_primitive::<3>(&Primitive::cube(1.0, 2, Some([-0.5, -0.5, -0.5]))).unwrap()
    }

    fn problem(mesh: &ReferenceMesh<3>) -> Problem<'_, 3> {
        Problem::new(
            mesh,
            MaterialParams::compressible(1.0, 0.5, 1.0),
            DensityModel::Homogeneous { rho_s: 0.7 },
            FluidEnvironment::new(1.0, 9.81),
            Variant::Standard,
        )
        .unwrap()
    }

    #[test]
    fn elastic_energy_of_rigid_motions_vanishes() {
        let m = cube();
        let mat = MaterialParams::compressible(1.0, 0.5, 1.0);
        assert_eq!(elastic_energy(&m, &mat, &DeformationField::identity(&m)), 0.0);
        let q = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner();
        let y = DeformationField::from_map(&m, |x| q * x + Vector::<3>::new(1.0, 2.0, 3.0));
        assert!(elastic_energy(&m, &mat, &y) < 1e-12);
        let y = DeformationField::from_map(&m, |x| x * 1.1);
        let w = mat.energy_density(&(Matrix::<3>::identity() * 1.1)).unwrap();
        assert!((elastic_energy(&m, &mat, &y) - w).abs() < 1e-12 * w);
    }

    #[test]
    fn gravity_translation_and_wet_dry_identity() {
        let m = cube();
        let y = DeformationField::identity(&m);
        let hom = DensityModel::Homogeneous { rho_s: 2.0 };
        assert!(gravity_energy(&m, &hom, &y, 3.0, 0.0).abs() < 1e-14);
        let up = gravity_energy(&m, &hom, &y.translated_vertically(1.0), 3.0, 0.0);
        assert!((up - 6.0).abs() < 1e-13);
        let wd = DensityModel::WetDry {
            rho_wet: 2.0,
            rho_dry: 2.0,
        };
        let z = y.translated_vertically(0.2);
        assert!((gravity_energy(&m, &wd, &z, 3.0, 0.0) - gravity_energy(&m, &hom, &z, 3.0, 0.0)).abs() < 1e-13);
    }

    #[test]
    fn breakdown_total_is_sum() {
        let m = cube();
        let p = problem(&m);
        let y = DeformationField::from_map(&m, |x| x * 1.05 + Vector::<3>::new(0.0, 0.0, -0.1));
        let b = p.breakdown(&y);
        let s = b.elastic + b.hydrostatic + b.gravity + b.anchor + b.penalty;
        assert!((b.total - s).abs() <= 1e-12 * s.abs());
    }

    #[test]
    fn gravity_gradient_is_lumped_weight() {
        let m = cube();
        let p = problem(&m).with_terms(Terms {
            elastic: false,
            fluid: false,
            gravity: true,
        });
        let g = p.gradient(&DeformationField::identity(&m));
        for (gi, l) in g.iter().zip(m.lumped_volumes()) {
            assert!((gi[2] - 9.81 * 0.7 * l).abs() < 1e-14);
            assert_eq!(gi[0], 0.0);
        }
    }

    #[test]
    fn anchor_constant_offset() {
        let m = cube();
        let spec = AnchorSpec {
            model: AnchorKind::ElasticBoundary { c3: 2.0, r: 3.0 },
            select: SelectBox {
                min: vec![-1.0, -1.0, -0.6],
                max: vec![1.0, 1.0, -0.4],
            },
            offset: None,
        };
        let a = spec.resolve(&m).unwrap();
        assert!((a.measure - 1.0).abs() < 1e-14);
        let y = DeformationField::identity(&m);
        assert_eq!(anchor_energy(&a, &y), 0.0);
        let d = 0.1;
        let e = anchor_energy(&a, &y.translated(&Vector::<3>::new(d, 0.0, 0.0)));
        assert!((e - 2.0 * d.powi(3)).abs() < 1e-15);
        let slack = AnchorSpec {
            model: AnchorKind::SlackCable {
                c3: 2.0,
                r: 3.0,
                lambda: 0.2,
            },
            ..spec
        }
        .resolve(&m)
        .unwrap();
        assert_eq!(
            anchor_energy(&slack, &y.translated(&Vector::<3>::new(d, 0.0, 0.0))),
            0.0
        );
        let bad = AnchorSpec {
            model: AnchorKind::ElasticBoundary { c3: 1.0, r: 1.0 },
            ..slack_spec()
        };
        assert!(bad.resolve(&m).is_err());
    }

    fn slack_spec() -> AnchorSpec {
        AnchorSpec {
            model: AnchorKind::None,
            select: SelectBox {
                min: vec![-1.0; 3],
                max: vec![1.0; 3],
            },
            offset: None,
        }
    }

    #[test]
    fn convex_ship_equals_standard() {
        let m = cube();
        let y = DeformationField::identity(&m).translated_vertically(-0.2);
        let std = problem(&m);
        let mut ship = problem(&m);
        ship.variant = Variant::Ship;
        ship.grid_res = 32;
        ship.refresh_ship(y.positions(), true).unwrap();
        assert!(ship.dry_facets().unwrap().iter().all(|d| !d));
        assert_eq!(std.total_energy(&y), ship.total_energy(&y));
    }
}
