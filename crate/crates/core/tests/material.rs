use floatelast::{MaterialParams, Matrix};
use proptest::prelude::*;

fn matrix(v: &[f64]) -> Matrix<3> {
    Matrix::<3>::identity() + Matrix::<3>::from_row_slice(v)
}

fn rotation(axis: [f64; 3], angle: f64) -> Matrix<3> {
    let a = nalgebra::Vector3::from(axis);
    let a = if a.norm() > 1e-6 {
        a.normalize()
    } else {
        nalgebra::Vector3::z()
    };
    *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(a), angle).matrix()
}

fn materials() -> [MaterialParams; 2] {
    [
        MaterialParams::compressible(1.3, 0.7, 2.1),
        MaterialParams::incompressible(4.0, 1.0, 0.5, 1e3),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_non_negative_and_frame_indifferent(
        v in prop::collection::vec(-0.5f64..0.5, 9),
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in -3.1f64..3.1,
    ) {
        let f = matrix(&v);
        prop_assume!(f.determinant() > 0.05);
        let q = rotation(axis, angle);
        for m in materials() {
            let w = m.energy_density(&f).unwrap();
            let wq = m.energy_density(&(q * f)).unwrap();
            prop_assert!(w >= -1e-14);
            prop_assert!((w - wq).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    #[test]
    fn stress_is_frame_covariant(
        v in prop::collection::vec(-0.5f64..0.5, 9),
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in -3.1f64..3.1,
    ) {
        let f = matrix(&v);
        prop_assume!(f.determinant() > 0.05);
        let q = rotation(axis, angle);
        for m in materials() {
            let p = m.stress(&f).unwrap();
            let pq = m.stress(&(q * f)).unwrap();
            prop_assert!((pq - q * p).norm() <= 1e-10 * p.norm().max(1.0));
        }
    }

    #[test]
    fn stress_matches_central_differences(
        v in prop::collection::vec(-0.4f64..0.4, 9),
        h in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let f = matrix(&v);
        prop_assume!(f.determinant() > 0.2);
        let dir = Matrix::<3>::from_row_slice(&h);
        let t = 1e-6;
        for m in materials() {
            let an = m.stress(&f).unwrap().dot(&dir);
            let fd = (m.energy_density(&(f + dir * t)).unwrap() - m.energy_density(&(f - dir * t)).unwrap()) / (2.0 * t);
            prop_assert!((an - fd).abs() <= 1e-6 * an.abs().max(1.0), "{} vs {}", an, fd);
        }
    }
}

#[test]
fn compression_blows_up_monotonically() {
    let m = MaterialParams::compressible(1.0, 1.0, 1.0);
    let mut last = m.energy_density(&Matrix::<3>::identity()).unwrap();
    for k in 1..=6 {
        let t = 10f64.powi(-k);
        let w = m
            .energy_density(&Matrix::<3>::from_diagonal(&nalgebra::Vector3::new(t, 1.0, 1.0)))
            .unwrap();
        assert!(w > last, "W not increasing at t = {t}");
        last = w;
    }
    assert!(last > 1e5);
}
