//! Exact clipping of a simplex against the zero set of an affine function.
//!
//! Pieces are described in barycentric coordinates of the parent simplex, so
//! the same routine serves reference and deformed elements as well as
//! boundary facets. The positive part `{phi > 0}` is returned as a signed
//! combination of simplices: either the pieces themselves, or the whole
//! simplex minus the pieces of the negative part, whichever needs fewer
//! cuts.

use arrayvec::ArrayVec;

use crate::linalg;

/// One signed sub-simplex. Row `k` of `lam` holds the barycentric coordinates
/// of its `k`-th vertex; `weight` is its signed volume fraction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Piece {
    pub lam: [[f64; 4]; 4],
    pub weight: f64,
}

pub(crate) type Pieces = ArrayVec<Piece, 4>;

fn unit(i: usize) -> [f64; 4] {
    let mut r = [0.0; 4];
    r[i] = 1.0;
    r
}

fn cut(phi: &[f64], i: usize, j: usize) -> [f64; 4] {
    let t = phi[i] / (phi[i] - phi[j]);
    let mut r = [0.0; 4];
    r[i] = 1.0 - t;
    r[j] = t;
    r
}

fn piece(rows: &[[f64; 4]], n: usize, sign: f64) -> Piece {
    let mut lam = [[0.0; 4]; 4];
    lam[..=n].copy_from_slice(&rows[..=n]);
    let weight = sign * linalg::det_small(lam, n + 1).abs();
    Piece { lam, weight }
}

/// Pieces of the side `inside` (given by vertex membership) when that side
/// holds at most half of the vertices.
fn minority(phi: &[f64], inside: &[usize], outside: &[usize], sign: f64, out: &mut Pieces) {
    let n = phi.len() - 1;
    match inside.len() {
        1 => {
            let a = inside[0];
            let mut rows: ArrayVec<[f64; 4], 4> = ArrayVec::new();
            rows.push(unit(a));
            for &b in outside {
                rows.push(cut(phi, a, b));
            }
            out.push(piece(&rows, n, sign));
        }
        2 => {
            debug_assert_eq!(n, 3);
            let (p0, p1) = (inside[0], inside[1]);
            let (q0, q1) = (outside[0], outside[1]);
            let a = [unit(p0), cut(phi, p0, q0), cut(phi, p0, q1)];
            let b = [unit(p1), cut(phi, p1, q0), cut(phi, p1, q1)];
            out.push(piece(&[a[0], a[1], a[2], b[0]], n, sign));
            out.push(piece(&[a[1], a[2], b[0], b[1]], n, sign));
            out.push(piece(&[a[2], b[0], b[1], b[2]], n, sign));
        }
        _ => unreachable!("minority side has at most two vertices"),
    }
}

/// Signed pieces of `{phi > 0}` for an affine `phi` with vertex values
/// `phi` on a simplex with `phi.len()` vertices (1 to 4).
pub(crate) fn positive_part(phi: &[f64]) -> Pieces {
    let n = phi.len() - 1;
    let mut pos: ArrayVec<usize, 4> = ArrayVec::new();
    let mut neg: ArrayVec<usize, 4> = ArrayVec::new();
    for (i, &v) in phi.iter().enumerate() {
        if v > 0.0 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    let mut out = Pieces::new();
    if pos.is_empty() {
        return out;
    }
    let whole = || {
        let rows: ArrayVec<[f64; 4], 4> = (0..=n).map(unit).collect();
        piece(&rows, n, 1.0)
    };
    if neg.is_empty() {
        out.push(whole());
    } else if pos.len() <= neg.len() {
        minority(phi, &pos, &neg, 1.0, &mut out);
    } else {
        out.push(whole());
        minority(phi, &neg, &pos, -1.0, &mut out);
    }
    out
}

/// Volume fraction of `{phi > 0}`.
pub(crate) fn fraction(pieces: &Pieces) -> f64 {
    pieces.iter().map(|p| p.weight).sum()
}

fn at(lam: &[f64; 4], vals: &[f64]) -> f64 {
    vals.iter().zip(lam).map(|(v, l)| v * l).sum()
}

/// `(1/|S|) * integral of f over {phi > 0}` for affine `f` with vertex
/// values `f`.
pub(crate) fn affine_mean(pieces: &Pieces, f: &[f64]) -> f64 {
    let m = f.len();
    pieces
        .iter()
        .map(|p| p.weight * p.lam[..m].iter().map(|r| at(r, f)).sum::<f64>() / m as f64)
        .sum()
}

/// `(1/|S|) * integral of lambda_a over {phi > 0}` for every vertex `a`.
pub(crate) fn indicator_moments(pieces: &Pieces, m: usize) -> [f64; 4] {
    let mut out = [0.0; 4];
    for p in pieces {
        for r in &p.lam[..m] {
            for a in 0..m {
                out[a] += p.weight * r[a] / m as f64;
            }
        }
    }
    out
}

/// `(1/|S|) * integral of f g over {phi > 0}` for affine `f`, `g`.
pub(crate) fn product_mean(pieces: &Pieces, f: &[f64], g: &[f64]) -> f64 {
    let m = f.len();
    let denom = (m * (m + 1)) as f64;
    pieces
        .iter()
        .map(|p| {
            let fv: ArrayVec<f64, 4> = p.lam[..m].iter().map(|r| at(r, f)).collect();
            let gv: ArrayVec<f64, 4> = p.lam[..m].iter().map(|r| at(r, g)).collect();
            let sf: f64 = fv.iter().sum();
            let sg: f64 = gv.iter().sum();
            let sfg: f64 = fv.iter().zip(&gv).map(|(a, b)| a * b).sum();
            p.weight * (sf * sg + sfg) / denom
        })
        .sum()
}

/// `(1/|S|) * integral of phi * lambda_a over {phi > 0}` for every vertex.
pub(crate) fn depth_moments(pieces: &Pieces, phi: &[f64]) -> [f64; 4] {
    let m = phi.len();
    let mut out = [0.0; 4];
    for (a, o) in out.iter_mut().enumerate().take(m) {
        let mut e = [0.0; 4];
        e[a] = 1.0;
        *o = product_mean(pieces, phi, &e[..m]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Divided-difference formula for the mean of `(phi)_+^k` over a simplex
    /// with distinct vertex values.
    fn power_mean_oracle(phi: &[f64], k: u32) -> f64 {
        let n = phi.len() - 1;
        let mut s = 0.0;
        for i in 0..phi.len() {
            let mut den = 1.0;
            for j in 0..phi.len() {
                if j != i {
                    den *= phi[i] - phi[j];
                }
            }
            s += phi[i].max(0.0).powi(k as i32 + n as i32) / den;
        }
        s * linalg::factorial(k as usize) * linalg::factorial(n) / linalg::factorial(k as usize + n)
    }

    #[test]
    fn matches_divided_differences() {
        let cases: &[&[f64]] = &[
            &[0.3, -0.7],
            &[0.3, -0.2, -0.5],
            &[0.3, 0.1, -0.5],
            &[0.9, -0.2, -0.4, -0.7],
            &[0.9, 0.2, -0.4, -0.7],
            &[0.9, 0.2, 0.4, -0.7],
            &[-0.9, 0.25, 0.45, 0.7],
        ];
        for phi in cases {
            let p = positive_part(phi);
            assert!((fraction(&p) - power_mean_oracle(phi, 0)).abs() < 1e-14, "{phi:?}");
            assert!(
                (affine_mean(&p, phi) - power_mean_oracle(phi, 1)).abs() < 1e-14,
                "{phi:?}"
            );
            assert!(
                (product_mean(&p, phi, phi) - power_mean_oracle(phi, 2)).abs() < 1e-14,
                "{phi:?}"
            );
        }
    }

    #[test]
    fn trivial_sides() {
        assert!(positive_part(&[-1.0, -2.0, 0.0]).is_empty());
        let all = positive_part(&[1.0, 2.0, 3.0, 4.0]);
        assert!((fraction(&all) - 1.0).abs() < 1e-15);
        let m = indicator_moments(&all, 4);
        assert!(m.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn moments_sum_to_fraction() {
        let phi = [0.5, 0.1, -0.3, -0.6];
        let p = positive_part(&phi);
        let m = indicator_moments(&p, 4);
        assert!((m.iter().sum::<f64>() - fraction(&p)).abs() < 1e-15);
        let d = depth_moments(&p, &phi);
        assert!((d.iter().sum::<f64>() - affine_mean(&p, &phi)).abs() < 1e-15);
    }
}
