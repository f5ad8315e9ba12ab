//! Descent methods with Armijo backtracking, hard anchor constraints,
//! penalty continuation and detection of unbounded descent.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyBreakdown, Problem, Variant};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::mesh::{self, DeformationField, FloatClass};

/// Energy functional seen by the solver.
pub trait Objective<const D: usize> {
    /// Energy parts at `y`; writes the gradient when requested. Inadmissible
    /// states have an infinite total.
    fn evaluate(&self, y: &[Vector<D>], grad: Option<&mut [Vector<D>]>) -> EnergyBreakdown;

    /// Positive nodal weights used to precondition the gradient.
    fn metric(&self) -> &[f64];

    /// Called after every accepted step; returns `true` if the functional
    /// changed (cached approximations are then discarded).
    fn prepare(&mut self, _y: &[Vector<D>]) -> Result<bool> {
        Ok(false)
    }

    fn set_penalty_weight(&mut self, _w: f64) {}

    /// Whether the trajectory from `start` to `y` witnesses unbounded descent.
    fn sinking(&self, _start: &[Vector<D>], _y: &[Vector<D>], _k: f64) -> bool {
        false
    }

    fn mean_j_floor_active(&self, _y: &[Vector<D>]) -> bool {
        false
    }
}

/// Nodes held at prescribed positions and nodes confined to balls.
#[derive(Debug, Clone)]
pub struct Constraints<const D: usize> {
    pub fixed: Vec<(usize, Vector<D>)>,
    pub ball: Vec<(usize, Vector<D>, f64)>,
}

impl<const D: usize> Default for Constraints<D> {
    fn default() -> Self {
        Self {
            fixed: Vec::new(),
            ball: Vec::new(),
        }
    }
}

impl<const D: usize> Constraints<D> {
    /// Moves every constrained node to the nearest admissible position.
    pub fn project(&self, y: &mut [Vector<D>]) {
        for (n, t) in &self.fixed {
            y[*n] = *t;
        }
        for (n, c, r) in &self.ball {
            let d = y[*n] - c;
            let len = d.norm();
            if len > *r {
                y[*n] = c + d * (*r / len);
            }
        }
    }

    fn active_ball(&self, y: &[Vector<D>]) -> Vec<usize> {
        self.ball
            .iter()
            .filter(|(n, c, r)| (y[*n] - c).norm() >= r * (1.0 - 1e-12))
            .map(|(n, _, _)| *n)
            .collect()
    }

    /// Removes the components of a descent-type vector `v = -g` (or of `g`
    /// itself, with `sign = -1`) that point out of the admissible set.
    pub(crate) fn restrict(&self, v: &mut [Vector<D>], y: &[Vector<D>], sign: f64) {
        for (n, _) in &self.fixed {
            v[*n] = Vector::<D>::zeros();
        }
        for (n, c, r) in &self.ball {
            let d = y[*n] - c;
            let len = d.norm();
            if len >= r * (1.0 - 1e-12) && len > 0.0 {
                let nrm = d / len;
                let out = sign * v[*n].dot(&nrm);
                if out > 0.0 {
                    v[*n] -= nrm * (sign * out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Lbfgs,
    GradientDescent,
}

fn d_max_iters() -> usize {
    5000
}
fn d_grad_tol() -> f64 {
    1e-7
}
fn d_initial_step() -> f64 {
    0.05
}
fn d_backtrack() -> f64 {
    0.5
}
fn d_armijo() -> f64 {
    1e-4
}
fn d_max_backtracks() -> usize {
    60
}
fn d_sink() -> f64 {
    5.0
}
fn d_memory() -> usize {
    12
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    /// Threshold on the Euclidean norm of the projected nodal gradient.
    #[serde(default = "d_grad_tol")]
    pub grad_tol: f64,
    /// Largest nodal displacement of a first step, relative to the diameter.
    #[serde(default = "d_initial_step")]
    pub initial_step: f64,
    #[serde(default = "d_backtrack")]
    pub backtrack: f64,
    #[serde(default = "d_armijo")]
    pub armijo: f64,
    #[serde(default = "d_max_backtracks")]
    pub max_backtracks: usize,
    /// Depth, in body diameters below the waterline, at which a sinking body
    /// is declared to descend without bound.
    #[serde(default = "d_sink")]
    pub sink_depth_factor: f64,
    #[serde(default)]
    pub penalty_schedule: Vec<f64>,
    #[serde(default)]
    pub mean_j_floor: Option<f64>,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "d_memory")]
    pub lbfgs_memory: usize,
    #[serde(default = "d_true")]
    pub detect_unbounded: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: d_max_iters(),
            grad_tol: d_grad_tol(),
            initial_step: d_initial_step(),
            backtrack: d_backtrack(),
            armijo: d_armijo(),
            max_backtracks: d_max_backtracks(),
            sink_depth_factor: d_sink(),
            penalty_schedule: Vec::new(),
            mean_j_floor: None,
            method: Method::Lbfgs,
            lbfgs_memory: d_memory(),
            detect_unbounded: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("solver: {m}")));
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return bad("armijo must lie in (0, 1/2)");
        }
        if !(self.sink_depth_factor >= 2.0) {
            return bad("sink_depth_factor must be at least 2");
        }
        if !(self.initial_step > 0.0) {
            return bad("initial_step must be positive");
        }
        if self.penalty_schedule.iter().any(|w| !(*w >= 0.0)) {
            return bad("penalty weights must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    UnboundedDescent,
    MaxIters,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Converged => "Converged",
            SolveStatus::UnboundedDescent => "UnboundedDescent",
            SolveStatus::MaxIters => "MaxIters",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: EnergyBreakdown,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult<const D: usize> {
    pub y: DeformationField<D>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub grad_norm: f64,
    pub energy: EnergyBreakdown,
    pub mean_j_floor_active: bool,
    pub active_ball_nodes: Vec<usize>,
    pub trace: Vec<TraceRow>,
}

fn dot<const D: usize>(a: &[Vector<D>], b: &[Vector<D>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn norm<const D: usize>(a: &[Vector<D>]) -> f64 {
    dot(a, a).sqrt()
}

struct Pair<const D: usize> {
    s: Vec<Vector<D>>,
    y: Vec<Vector<D>>,
    rho: f64,
}

/// `-H g` by the two-loop recursion with `H0 = gamma M^{-1}`.
fn lbfgs_direction<const D: usize>(g: &[Vector<D>], mem: &VecDeque<Pair<D>>, metric: &[f64]) -> Vec<Vector<D>> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for p in mem.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= yi * a;
        }
        alphas.push(a);
    }
    let gamma = match mem.back() {
        Some(p) => {
            let yhy: f64 = p.y.iter().zip(metric).map(|(v, m)| v.norm_squared() / m).sum();
            dot(&p.s, &p.y) / yhy
        }
        None => 1.0,
    };
    for (qi, m) in q.iter_mut().zip(metric) {
        *qi *= gamma / m;
    }
    for (p, a) in mem.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += si * (a - b);
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `obj` from `y0` under `constraints`, running one stage per
/// entry of the penalty schedule (warm started).
pub fn minimize<const D: usize, O: Objective<D>>(
    obj: &mut O,
    y0: Vec<Vector<D>>,
    opts: &SolveOptions,
    constraints: &Constraints<D>,
) -> Result<SolveResult<D>> {
    opts.validate()?;
    let mut y = y0;
    constraints.project(&mut y);
    let stages: Vec<Option<f64>> = if opts.penalty_schedule.is_empty() {
        vec![None]
    } else {
        opts.penalty_schedule.iter().map(|&w| Some(w)).collect()
    };
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut last = None;
    for w in stages {
        if let Some(w) = w {
            obj.set_penalty_weight(w);
        }
        let (status, gnorm) = run_stage(obj, &mut y, opts, constraints, &mut iterations, &mut trace)?;
        last = Some((status, gnorm));
        if status == SolveStatus::UnboundedDescent {
            break;
        }
    }
    let (status, grad_norm) = last.expect("at least one stage");
    let energy = obj.evaluate(&y, None);
    Ok(SolveResult {
        mean_j_floor_active: obj.mean_j_floor_active(&y),
        active_ball_nodes: constraints.active_ball(&y),
        y: DeformationField::from_positions_unchecked(y),
        status,
        iterations,
        grad_norm,
        energy,
        trace,
    })
}

fn run_stage<const D: usize, O: Objective<D>>(
    obj: &mut O,
    y: &mut Vec<Vector<D>>,
    opts: &SolveOptions,
    constraints: &Constraints<D>,
    iterations: &mut usize,
    trace: &mut Vec<TraceRow>,
) -> Result<(SolveStatus, f64)> {
    let n = y.len();
    obj.prepare(y)?;
    let start = y.clone();
    let mut g = vec![Vector::<D>::zeros(); n];
    let mut e = obj.evaluate(y, Some(&mut g));
    if !e.total.is_finite() {
        return Err(Error::Infeasible(
            "initial state has infinite energy (inverted element)".into(),
        ));
    }
    let mut mem: VecDeque<Pair<D>> = VecDeque::new();
    let mut gt = vec![Vector::<D>::zeros(); n];
    let diam = match mesh::diameter(&DeformationField::from_positions_unchecked(y.clone())) {
        d if d > 0.0 => d,
        _ => 1.0,
    };
    loop {
        let mut gp = g.clone();
        constraints.restrict(&mut gp, y, -1.0);
        let gnorm = norm(&gp);
        trace.push(TraceRow {
            iter: *iterations,
            energy: e,
            grad_norm: gnorm,
        });
        if gnorm <= opts.grad_tol {
            return Ok((SolveStatus::Converged, gnorm));
        }
        if *iterations >= opts.max_iters {
            return Ok((SolveStatus::MaxIters, gnorm));
        }
        *iterations += 1;

        let metric = obj.metric();
        let mut dir = match opts.method {
            Method::Lbfgs if !mem.is_empty() => lbfgs_direction(&gp, &mem, metric),
            _ => gp.iter().zip(metric).map(|(v, m)| -v / *m).collect(),
        };
        constraints.restrict(&mut dir, y, 1.0);
        if dot(&dir, &gp) >= 0.0 {
            mem.clear();
            dir = gp.iter().zip(metric).map(|(v, m)| -v / *m).collect();
            constraints.restrict(&mut dir, y, 1.0);
        }
        let dmax = dir.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut alpha = if mem.is_empty() {
            (opts.initial_step * diam / dmax).min(1.0)
        } else {
            1.0
        };

        let trial_at = |alpha: f64| {
            let mut t: Vec<Vector<D>> = y.iter().zip(&dir).map(|(p, d)| p + d * alpha).collect();
            constraints.project(&mut t);
            t
        };
        // Round-off level of the energy; near a minimizer the Armijo test
        // cannot be resolved below it and the slope test takes over.
        let noise = 1e-10
            * [e.elastic, e.hydrostatic, e.gravity, e.anchor, e.penalty]
                .iter()
                .map(|v| v.abs())
                .sum::<f64>();
        let mut accepted = None;
        for bt in 0..=opts.max_backtracks {
            let t = trial_at(alpha);
            let et = obj.evaluate(&t, Some(&mut gt));
            let disp: Vec<Vector<D>> = t.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
            let lin = dot(&g, &disp);
            if et.total.is_finite() && lin < 0.0 {
                let armijo = et.total <= e.total + opts.armijo * lin;
                let slope = dot(&gt, &disp);
                let approx =
                    et.total <= e.total + noise && slope >= 0.9 * lin && slope <= -(1.0 - 2.0 * opts.armijo) * lin;
                if armijo || approx {
                    accepted = Some((t, et, bt, lin));
                    break;
                }
            }
            alpha *= opts.backtrack;
        }
        let Some((mut t, mut et, bt, lin)) = accepted else {
            if !mem.is_empty() {
                mem.clear();
                continue;
            }
            return Err(Error::LineSearch {
                iteration: *iterations,
                backtracks: opts.max_backtracks,
                grad_norm: gnorm,
            });
        };
        if bt == 0 && e.total - et.total >= -0.9 * lin {
            let mut g2 = vec![Vector::<D>::zeros(); n];
            for _ in 0..20 {
                alpha *= 2.0;
                let t2 = trial_at(alpha);
                let e2 = obj.evaluate(&t2, Some(&mut g2));
                let lin2: f64 = t2
                    .iter()
                    .zip(y.iter())
                    .zip(&g)
                    .map(|((a, b), gi)| (a - b).dot(gi))
                    .sum();
                if e2.total.is_finite() && e2.total < et.total && e2.total <= e.total + opts.armijo * lin2 {
                    t = t2;
                    et = e2;
                    std::mem::swap(&mut gt, &mut g2);
                } else {
                    break;
                }
            }
        }

        let s: Vec<Vector<D>> = t.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
        let mut gtp = gt.clone();
        constraints.restrict(&mut gtp, &t, -1.0);
        let yv: Vec<Vector<D>> = gtp.iter().zip(&gp).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if opts.method == Method::Lbfgs && sy > 1e-12 * norm(&s) * norm(&yv) && sy > 0.0 {
            if mem.len() == opts.lbfgs_memory {
                mem.pop_front();
            }
            mem.push_back(Pair {
                s,
                y: yv,
                rho: 1.0 / sy,
            });
        }
        *y = t;
        e = et;
        std::mem::swap(&mut g, &mut gt);

        if obj.prepare(y)? {
            mem.clear();
            e = obj.evaluate(y, Some(&mut g));
        }
        if opts.detect_unbounded && obj.sinking(&start, y, opts.sink_depth_factor) {
            let mut gp = g.clone();
            constraints.restrict(&mut gp, y, -1.0);
            let gnorm = norm(&gp);
            trace.push(TraceRow {
                iter: *iterations,
                energy: e,
                grad_norm: gnorm,
            });
            return Ok((SolveStatus::UnboundedDescent, gnorm));
        }
    }
}

/// Witnesses unbounded descent along a trajectory: the last state is fully
/// immersed, lowering it further still decreases the energy (the weight
/// exceeds the buoyancy `g rho_f |Omega| mean J`, plus the hold for ships),
/// and its barycenter has dropped below `h - k diam`.
pub fn detect_unbounded<const D: usize>(problem: &Problem<'_, D>, trajectory: &[&[Vector<D>]], k: f64) -> bool {
    let (Some(first), Some(last)) = (trajectory.first(), trajectory.last()) else {
        return false;
    };
    if trajectory.len() < 2 {
        return false;
    }
    let mesh = problem.mesh;
    let y = DeformationField::from_positions_unchecked(last.to_vec());
    if mesh::float_classify(&y, problem.h) != FloatClass::FullyImmersed {
        return false;
    }
    let omega = mesh.total_volume();
    let weight = problem.fluid.weight();
    let mut buoyancy = weight * mesh::deformed_volume(mesh, &y);
    if problem.variant == Variant::Ship {
        buoyancy += weight * problem.enclosed_hold_volume(last);
    }
    if problem.solid_weight() - buoyancy <= 1e-8 * weight * omega {
        return false;
    }
    let bar = mesh::barycenter(mesh, &y)[D - 1];
    let bar0 = mesh::barycenter(mesh, &DeformationField::from_positions_unchecked(first.to_vec()))[D - 1];
    bar < bar0 && bar < problem.h - k * mesh::diameter(&y)
}

impl<const D: usize> Objective<D> for Problem<'_, D> {
    fn evaluate(&self, y: &[Vector<D>], grad: Option<&mut [Vector<D>]>) -> EnergyBreakdown {
        Problem::evaluate(self, y, grad)
    }

    fn metric(&self) -> &[f64] {
        self.mesh.lumped_volumes()
    }

    fn prepare(&mut self, y: &[Vector<D>]) -> Result<bool> {
        self.refresh_ship(y, false)
    }

    fn set_penalty_weight(&mut self, w: f64) {
        if self.material.is_incompressible() {
            self.material.kappa = w;
        }
        if let Some((_, weight)) = &mut self.mean_j_floor {
            *weight = w;
        }
    }

    fn sinking(&self, start: &[Vector<D>], y: &[Vector<D>], k: f64) -> bool {
        detect_unbounded(self, &[start, y], k)
    }

    fn mean_j_floor_active(&self, y: &[Vector<D>]) -> bool {
        match self.mean_j_floor {
            Some((tau, _)) => {
                mesh::mean_jacobian(self.mesh, &DeformationField::from_positions_unchecked(y.to_vec())) <= tau
            }
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        m: Vec<f64>,
    }

    impl Objective<2> for Quadratic {
        fn evaluate(&self, y: &[Vector<2>], grad: Option<&mut [Vector<2>]>) -> EnergyBreakdown {
            let mut total = 0.0;
            for (k, p) in y.iter().enumerate() {
                let c = (k + 1) as f64;
                total += 0.5 * c * (p - Vector::<2>::new(1.0, -1.0)).norm_squared();
            }
            if let Some(g) = grad {
                for (k, p) in y.iter().enumerate() {
                    g[k] = (p - Vector::<2>::new(1.0, -1.0)) * (k + 1) as f64;
                }
            }
            EnergyBreakdown {
                elastic: total,
                total,
                ..Default::default()
            }
        }

        fn metric(&self) -> &[f64] {
            &self.m
        }
    }

    #[test]
    fn minimizes_a_quadratic_with_both_methods() {
        for method in [Method::Lbfgs, Method::GradientDescent] {
            let mut q = Quadratic { m: vec![1.0; 5] };
            let opts = SolveOptions {
                method,
                grad_tol: 1e-10,
                initial_step: 1.0,
                ..Default::default()
            };
            let y0 = (0..5).map(|k| Vector::<2>::new(k as f64, 0.5)).collect();
            let r = minimize(&mut q, y0, &opts, &Constraints::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Converged);
            assert!(r.grad_norm <= 1e-10);
            for w in r.trace.windows(2) {
                assert!(w[1].energy.total <= w[0].energy.total);
            }
        }
    }

    #[test]
    fn constraints_hold() {
        let mut q = Quadratic { m: vec![1.0; 3] };
        let c = Constraints {
            fixed: vec![(0, Vector::<2>::new(0.0, 0.0))],
            ball: vec![(1, Vector::<2>::new(0.0, 0.0), 0.5)],
        };
        let y0 = vec![Vector::<2>::zeros(); 3];
        let r = minimize(&mut q, y0, &SolveOptions::default(), &c).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        let y = r.y.positions();
        assert_eq!(y[0], Vector::<2>::zeros());
        assert!(((y[1]).norm() - 0.5).abs() < 1e-9);
        assert_eq!(r.active_ball_nodes, vec![1]);
        let mut twice = y.to_vec();
        c.project(&mut twice);
        assert_eq!(twice, y);
    }

    #[test]
    fn rejects_bad_options() {
        let o = SolveOptions {
            backtrack: 1.0,
            ..Default::default()
        };
        assert!(o.validate().is_err());
        let o = SolveOptions {
            sink_depth_factor: 1.0,
            ..Default::default()
        };
        assert!(o.validate().is_err());
    }
}
