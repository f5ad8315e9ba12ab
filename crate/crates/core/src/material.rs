//! Stored-energy densities and solid density models.
//!
//! The implemented family is
//!
//! ```text
//! W(F) = a (|F|^p - d^{p/2}) - gamma (J - 1) + c1 beta(J) + b (J - 1)^2,
//! beta(J) = (J - tau)^{-s} - (1 - tau)^{-s} + s (1 - tau)^{-s-1} (J - 1),
//! gamma = a p d^{p/2 - 1},
//! ```
//!
//! with `J = det F` and `tau = 0` unless a shifted barrier is requested.
//! Every summand is convex in `F` or in `J`, `W` depends on `F` only through
//! `|F|` and `det F`, and `W(I) = DW(I) = 0`. Since `|F|^p >= d^{p/2} J^{p/d}`
//! and `p > d`, the first two terms together are non-negative, so `W >= 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaterialMode {
    #[default]
    Compressible,
    #[serde(alias = "incompressible_penalty")]
    Incompressible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    pub a: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub mode: MaterialMode,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub tau_shift: Option<f64>,
}

fn default_p() -> f64 {
    4.0
}

fn default_s() -> f64 {
    2.0
}

impl MaterialParams {
    pub fn compressible(a: f64, c1: f64, b: f64) -> Self {
        Self {
            a,
            p: default_p(),
            c1,
            s: default_s(),
            b,
            mode: MaterialMode::Compressible,
            kappa: 0.0,
            tau_shift: None,
        }
    }

    pub fn incompressible(a: f64, c1: f64, b: f64, kappa: f64) -> Self {
        Self {
            mode: MaterialMode::Incompressible,
            kappa,
            ..Self::compressible(a, c1, b)
        }
    }

    /// Checks the parameter ranges for spatial dimension `dim` and that the
    /// reference state is energy free.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("material: {msg}")));
        if !(self.a > 0.0) {
            return bad("a must be positive");
        }
        if !(self.p > dim as f64) {
            return bad("p must exceed the dimension");
        }
        if !(self.c1 >= 0.0) || !(self.b >= 0.0) {
            return bad("c1 and b must be non-negative");
        }
        if !(self.s > 0.0) {
            return bad("s must be positive");
        }
        if !(self.kappa >= 0.0) {
            return bad("kappa must be non-negative");
        }
        if let Some(t) = self.tau_shift {
            if !(0.0..1.0).contains(&t) {
                return bad("tau_shift must lie in [0, 1)");
            }
        }
        let w0 = self.iso_value(dim as f64, dim as f64) + self.volumetric(1.0, dim, true).0;
        if w0.abs() > 1e-12 * self.a.max(self.c1).max(self.b) {
            return bad("W(I) does not vanish");
        }
        Ok(())
    }

    fn gamma(&self, d: usize) -> f64 {
        let d = d as f64;
        self.a * self.p * d.powf(0.5 * self.p - 1.0)
    }

    fn iso_value(&self, norm_sq: f64, d: f64) -> f64 {
        self.a * (norm_sq.powf(0.5 * self.p) - d.powf(0.5 * self.p))
    }

    /// Normalized compression barrier and its derivative; `+inf` at or below
    /// the barrier location.
    pub fn barrier(&self, j: f64) -> (f64, f64) {
        let tau = self.tau_shift.unwrap_or(0.0);
        if !(j > tau) {
            return (f64::INFINITY, f64::NEG_INFINITY);
        }
        let s = self.s;
        let r = 1.0 - tau;
        let v = (j - tau).powf(-s) - r.powf(-s) + s * r.powf(-s - 1.0) * (j - 1.0);
        let dv = -s * (j - tau).powf(-s - 1.0) + s * r.powf(-s - 1.0);
        (v, dv)
    }

    /// Volumetric part `psi(J)` of `W` and `psi'(J)`. With
    /// `with_barrier = false` the `c1` term is left out (it is then assembled
    /// separately, as in the split energy).
    pub fn volumetric(&self, j: f64, dim: usize, with_barrier: bool) -> (f64, f64) {
        if !(j > 0.0) {
            return (f64::INFINITY, f64::NEG_INFINITY);
        }
        let g = self.gamma(dim);
        let mut v = -g * (j - 1.0) + self.b * (j - 1.0) * (j - 1.0);
        let mut dv = -g + 2.0 * self.b * (j - 1.0);
        if with_barrier && self.c1 > 0.0 {
            let (bv, bd) = self.barrier(j);
            v += self.c1 * bv;
            dv += self.c1 * bd;
        }
        (v, dv)
    }

    /// Energy density and first Piola-Kirchhoff stress from precomputed
    /// kinematics. Returns `+inf` energy for `J <= 0`.
    pub fn density_and_stress<const D: usize>(
        &self,
        f: &Matrix<D>,
        j: f64,
        cof: &Matrix<D>,
        with_barrier: bool,
    ) -> (f64, Matrix<D>) {
        let (vol, dvol) = self.volumetric(j, D, with_barrier);
        if !vol.is_finite() {
            return (f64::INFINITY, Matrix::<D>::zeros());
        }
        let nsq = f.norm_squared();
        let w = self.iso_value(nsq, D as f64) + vol;
        let p_iso = f * (self.a * self.p * nsq.powf(0.5 * self.p - 1.0));
        (w, p_iso + cof * dvol)
    }

    pub fn energy_density<const D: usize>(&self, f: &Matrix<D>) -> Result<f64> {
        check_finite(f)?;
        let j = linalg::det(f);
        Ok(self.density_and_stress(f, j, &linalg::cofactor(f), true).0)
    }

    /// First Piola-Kirchhoff stress `P = DW(F)`.
    pub fn stress<const D: usize>(&self, f: &Matrix<D>) -> Result<Matrix<D>> {
        check_finite(f)?;
        let j = linalg::det(f);
        if !(j > 0.0) {
            return Err(Error::InvalidParameter(format!("stress of singular F (det = {j:e})")));
        }
        Ok(self.density_and_stress(f, j, &linalg::cofactor(f), true).1)
    }

    /// `kappa (J - 1)^2` and its derivative in `J`.
    pub fn incompressibility_penalty(&self, j: f64) -> (f64, f64) {
        (self.kappa * (j - 1.0) * (j - 1.0), 2.0 * self.kappa * (j - 1.0))
    }

    pub fn is_incompressible(&self) -> bool {
        self.mode == MaterialMode::Incompressible
    }

    /// Constant `C` with `W(F) >= (a/2)|F|^p + c1 J^{-s} - C` for all `F`
    /// with positive determinant (unshifted barrier).
    pub fn coercivity_constant(&self, dim: usize) -> f64 {
        let d = dim as f64;
        let q = self.p / d;
        let dp = d.powf(0.5 * self.p);
        let g = self.gamma(dim);
        // min over J of (a/2) d^{p/2} J^q - g J
        let j_star = 2f64.powf(1.0 / (q - 1.0));
        let phi = 0.5 * self.a * dp * j_star.powf(q) - g * j_star;
        -phi + self.a * dp - g + self.c1 * (self.s + 1.0)
    }
}

fn check_finite<const D: usize>(f: &Matrix<D>) -> Result<()> {
    if f.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter("non-finite deformation gradient".into()))
    }
}

pub const HULL: &str = "hull";
pub const BALLAST: &str = "ballast";

/// Referential density of the solid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityModel {
    Homogeneous {
        rho_s: f64,
    },
    /// Elements tagged `ballast` carry `rho_b`, all others `rho_h`. A missing
    /// `rho_b` is filled in by the neutral-trim computation.
    HullBallast {
        rho_h: f64,
        #[serde(default)]
        rho_b: Option<f64>,
    },
    /// Porous solid: `rho_wet` below the waterline, `rho_dry` above.
    WetDry {
        rho_wet: f64,
        rho_dry: f64,
    },
}

impl DensityModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DensityModel::Homogeneous { rho_s } => *rho_s > 0.0,
            DensityModel::HullBallast { rho_h, rho_b } => *rho_h > 0.0 && rho_b.is_none_or(|b| b >= 0.0),
            DensityModel::WetDry { rho_wet, rho_dry } => *rho_wet > 0.0 && *rho_dry > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("density model {self:?} out of range")))
        }
    }

    /// Density of an element with the given region tag (wet/dry models
    /// report the dry value).
    pub fn region_density(&self, tag: &str) -> f64 {
        match self {
            DensityModel::Homogeneous { rho_s } => *rho_s,
            DensityModel::HullBallast { rho_h, rho_b } => {
                if tag == BALLAST {
                    rho_b.unwrap_or(0.0)
                } else {
                    *rho_h
                }
            }
            DensityModel::WetDry { rho_dry, .. } => *rho_dry,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat() -> MaterialParams {
        MaterialParams::compressible(1.0, 0.5, 2.0)
    }

    fn random_f(rng: &mut ChaCha8Rng) -> Matrix<3> {
        loop {
            let f = Matrix::<3>::identity() + Matrix::<3>::from_fn(|_, _| rng.gen_range(-0.4..0.4));
            if linalg::det(&f) > 0.2 {
                return f;
            }
        }
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix<3> {
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), rng.gen_range(0.0..std::f64::consts::TAU)).into_inner()
    }

    #[test]
    fn identity_is_energy_and_stress_free() {
        let m = mat();
        m.validate(3).unwrap();
        assert_eq!(m.energy_density(&Matrix::<3>::identity()).unwrap(), 0.0);
        assert!(m.stress(&Matrix::<3>::identity()).unwrap().norm() < 1e-14);
        assert!(m.stress(&Matrix::<2>::identity()).unwrap().norm() < 1e-14);
    }

    #[test]
    fn barrier_blows_up_under_compression() {
        let m = mat();
        let mut prev = 0.0;
        for k in 1..=6 {
            let t = 10f64.powi(-k);
            let f = Matrix::<3>::from_diagonal(&Vector3::new(t, 1.0, 1.0));
            let w = m.energy_density(&f).unwrap();
            assert!(w > prev);
            assert!(w >= m.c1 * t.powf(-m.s) - m.coercivity_constant(3));
            prev = w;
        }
        assert_eq!(m.energy_density(&(-Matrix::<3>::identity())).unwrap(), f64::INFINITY);
    }

    #[test]
    fn stress_matches_finite_differences() {
        let m = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let f = random_f(&mut rng);
            let h = Matrix::<3>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let eps = 1e-6;
            let fd =
                (m.energy_density(&(f + h * eps)).unwrap() - m.energy_density(&(f - h * eps)).unwrap()) / (2.0 * eps);
            let an = m.stress(&f).unwrap().component_mul(&h).sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "fd {fd} vs {an}");
        }
    }

    #[test]
    fn frame_indifference_and_isotropy() {
        let m = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let f = random_f(&mut rng);
            let q = random_rotation(&mut rng);
            let w = m.energy_density(&f).unwrap();
            assert!((m.energy_density(&(q * f)).unwrap() - w).abs() <= 1e-12 * w.max(1.0));
            assert!((m.energy_density(&(f * q)).unwrap() - w).abs() <= 1e-12 * w.max(1.0));
            let p = m.stress(&f).unwrap();
            assert!((m.stress(&(q * f)).unwrap() - q * p).norm() <= 1e-10 * p.norm().max(1.0));
        }
    }

    #[test]
    fn non_negative_and_coercive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [
            mat(),
            MaterialParams::compressible(2.0, 0.0, 0.0),
            MaterialParams::compressible(0.3, 4.0, 0.0),
        ] {
            let c = m.coercivity_constant(3);
            for _ in 0..500 {
                let f = Matrix::<3>::from_fn(|_, _| rng.gen_range(-3.0..3.0));
                let j = linalg::det(&f);
                if j <= 0.0 {
                    continue;
                }
                let w = m.energy_density(&f).unwrap();
                assert!(w >= -1e-12, "W = {w}");
                let floor = 0.5 * m.a * f.norm().powf(m.p) + m.c1 * j.powf(-m.s) - c;
                assert!(w >= floor - 1e-9 * w.abs().max(1.0));
            }
        }
    }

    #[test]
    fn penalty_values() {
        let m = MaterialParams::incompressible(1.0, 0.0, 0.0, 10.0);
        assert_eq!(m.incompressibility_penalty(1.0).0, 0.0);
        assert_eq!(m.incompressibility_penalty(2.0).0, 10.0);
    }

    #[test]
    fn shifted_barrier_is_normalized() {
        let m = MaterialParams {
            tau_shift: Some(0.5),
            ..mat()
        };
        m.validate(3).unwrap();
        let (v, d) = m.barrier(1.0);
        assert!(v.abs() < 1e-14 && d.abs() < 1e-14);
        assert_eq!(m.barrier(0.5).0, f64::INFINITY);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MaterialParams::compressible(0.0, 1.0, 1.0).validate(3).is_err());
        let low_p = MaterialParams { p: 3.0, ..mat() };
        assert!(low_p.validate(3).is_err());
        assert!(low_p.validate(2).is_ok());
        assert!(mat().energy_density(&Matrix::<3>::from_element(f64::NAN)).is_err());
    }
}
