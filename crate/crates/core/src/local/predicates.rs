//! Adaptive exact orientation and in-circle signs.
//!
//! The determinant is first evaluated in floating point; when its magnitude is
//! below the forward error bound the sign is recomputed exactly on the
//! integer images of the inputs.

use std::cmp::Ordering;

use num_bigint::BigInt;

const EPS: f64 = f64::EPSILON / 2.0;
const ORIENT_BOUND: f64 = (3.0 + 16.0 * EPS) * EPS;
const INCIRCLE_BOUND: f64 = (10.0 + 96.0 * EPS) * EPS;

/// `(mantissa, exponent)` with `x = mantissa * 2^exponent`.
fn decompose(x: f64) -> (i64, i32) {
    if x == 0.0 {
        return (0, 0);
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 0 { 1 } else { -1 };
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1 << 52) - 1)) as i64;
    let (m, e) = if exp == 0 { (frac, -1074) } else { (frac | (1 << 52), exp - 1075) };
    (sign * m, e)
}

/// Exact integer images of `xs`, all scaled by the same power of two.
fn to_integers<const N: usize>(xs: [f64; N]) -> [BigInt; N] {
    let parts = xs.map(decompose);
    let emin = parts.iter().filter(|p| p.0 != 0).map(|p| p.1).min().unwrap_or(0);
    parts.map(|(m, e)| BigInt::from(m) << (e - emin) as usize)
}

fn orient_exact(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> Ordering {
    let [ax, ay, bx, by, cx, cy] = to_integers([a[0], a[1], b[0], b[1], c[0], c[1]]);
    let det = (&bx - &ax) * (&cy - &ay) - (&by - &ay) * (&cx - &ax);
    det.sign().cmp(&num_bigint::Sign::NoSign)
}

fn incircle_exact(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2], d: &[f64; 2]) -> Ordering {
    let [ax, ay, bx, by, cx, cy, dx, dy] = to_integers([a[0], a[1], b[0], b[1], c[0], c[1], d[0], d[1]]);
    let (adx, ady) = (&ax - &dx, &ay - &dy);
    let (bdx, bdy) = (&bx - &dx, &by - &dy);
    let (cdx, cdy) = (&cx - &dx, &cy - &dy);
    let alift = &adx * &adx + &ady * &ady;
    let blift = &bdx * &bdx + &bdy * &bdy;
    let clift = &cdx * &cdx + &cdy * &cdy;
    let det = alift * (&bdx * &cdy - &cdx * &bdy) + blift * (&cdx * &ady - &adx * &cdy)
        + clift * (&adx * &bdy - &bdx * &ady);
    det.sign().cmp(&num_bigint::Sign::NoSign)
}

/// Sign of the orientation of `(a, b, c)`; `Greater` when counter-clockwise.
pub fn orient_sign(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> Ordering {
    let l = (b[0] - a[0]) * (c[1] - a[1]);
    let r = (b[1] - a[1]) * (c[0] - a[0]);
    let det = l - r;
    let bound = ORIENT_BOUND * (l.abs() + r.abs());
    if det > bound {
        Ordering::Greater
    } else if -det > bound {
        Ordering::Less
    } else {
        orient_exact(a, b, c)
    }
}

/// Sign of the in-circle determinant; `Greater` when `d` lies strictly inside
/// the circumcircle of the counter-clockwise triangle `(a, b, c)`.
pub fn incircle_sign(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2], d: &[f64; 2]) -> Ordering {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let alift = adx * adx + ady * ady;
    let blift = bdx * bdx + bdy * bdy;
    let clift = cdx * cdx + cdy * cdy;
    let det = alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) + clift * (adx * bdy - bdx * ady);
    let permanent = alift * ((bdx * cdy).abs() + (cdx * bdy).abs())
        + blift * ((cdx * ady).abs() + (adx * cdy).abs())
        + clift * ((adx * bdy).abs() + (bdx * ady).abs());
    let bound = INCIRCLE_BOUND * permanent;
    if det > bound {
        Ordering::Greater
    } else if -det > bound {
        Ordering::Less
    } else {
        incircle_exact(a, b, c, d)
    }
}
