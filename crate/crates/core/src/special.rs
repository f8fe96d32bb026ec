//! Special functions needed by the kernels and the junction model.
//!
//! Fresnel integrals follow the classic split between a power series for
//! small arguments and a continued fraction (modified Lentz) for the
//! complementary error function form at large arguments. Integer-order
//! Bessel functions use Miller's backward recurrence normalised with
//! `J0 + 2 Σ J_2k = 1`.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 200;
const SERIES_LIMIT: f64 = 1.5;

/// Fresnel cosine and sine integrals `(C(u), S(u))` with the `πx²/2`
/// convention. Odd in `u`.
pub fn fresnel(u: f64) -> (f64, f64) {
    if u.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    let ax = u.abs();
    if ax == 0.0 {
        return (0.0, 0.0);
    }
    if ax.is_infinite() {
        return (0.5f64.copysign(u), 0.5f64.copysign(u));
    }
    let (c, s) = if ax < SERIES_LIMIT {
        fresnel_series(ax)
    } else {
        fresnel_continued_fraction(ax)
    };
    (c.copysign(u), s.copysign(u))
}

fn fresnel_series(ax: f64) -> (f64, f64) {
    // C = Σ (-1)^k (π/2)^{2k} x^{4k+1} / ((2k)! (4k+1))
    // S = Σ (-1)^k (π/2)^{2k+1} x^{4k+3} / ((2k+1)! (4k+3))
    let fact = FRAC_PI_2 * ax * ax;
    let mut term = ax;
    let mut c = ax;
    let mut s = 0.0;
    let mut sign_c = 1.0;
    let mut sign_s = 1.0;
    for k in 1..MAX_ITER {
        term *= fact / k as f64;
        let n = (2 * k + 1) as f64;
        if k % 2 == 1 {
            s += sign_s * term / n;
            sign_s = -sign_s;
            if term / n < EPS * s.abs() {
                break;
            }
        } else {
            sign_c = -sign_c;
            c += sign_c * term / n;
            if term / n < EPS * c.abs() {
                break;
            }
        }
    }
    (c, s)
}

fn fresnel_continued_fraction(ax: f64) -> (f64, f64) {
    let pix2 = PI * ax * ax;
    let tiny = 1e-300;
    let mut b = Complex64::new(1.0, -pix2);
    let mut cc = Complex64::new(1.0 / tiny, 0.0);
    let mut d = b.inv();
    let mut h = d;
    let mut n = -1.0;
    for _ in 2..MAX_ITER {
        n += 2.0;
        let a = -n * (n + 1.0);
        b += 4.0;
        d = (d * a + b).inv();
        cc = b + cc.inv() * a;
        let del = cc * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < EPS {
            break;
        }
    }
    h *= Complex64::new(ax, -ax);
    let phase = Complex64::new((0.5 * pix2).cos(), (0.5 * pix2).sin());
    let cs = Complex64::new(0.5, 0.5) * (Complex64::new(1.0, 0.0) - phase * h);
    (cs.re, cs.im)
}

/// Bessel functions of the first kind `J_0(z) ..= J_nmax(z)` for real `z`.
///
/// Negative orders follow from `J_{-n} = (-1)^n J_n`.
pub fn bessel_j_orders(z: f64, nmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let sign = if z < 0.0 { -1.0 } else { 1.0 };
    let x = z.abs();
    let top = nmax.max(x.ceil() as usize);
    let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut j_next = 0.0;
    let mut j_cur = 1e-300;
    let mut norm = 0.0;
    let rescale = 1e250;
    for k in (1..=start).rev() {
        let j_prev = 2.0 * k as f64 / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        // j_cur now holds J_{k-1}
        let order = k - 1;
        if order <= nmax {
            out[order] = j_cur;
        }
        if order % 2 == 0 && order > 0 {
            norm += 2.0 * j_cur;
        }
        if j_cur.abs() > rescale {
            j_cur /= rescale;
            j_next /= rescale;
            norm /= rescale;
            for v in out.iter_mut() {
                *v /= rescale;
            }
        }
    }
    norm += j_cur;
    for (n, v) in out.iter_mut().enumerate() {
        *v /= norm;
        if sign < 0.0 && n % 2 == 1 {
            *v = -*v;
        }
    }
    out
}

/// `J_n(z)` for any integer order.
pub fn bessel_j(n: i64, z: f64) -> f64 {
    let m = n.unsigned_abs() as usize;
    let v = bessel_j_orders(z, m)[m];
    if n < 0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

/// `x·coth(x)`, finite and even, equal to 1 at the origin.
pub fn x_coth_x(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-4 {
        1.0 + ax * ax / 3.0
    } else if ax > 20.0 {
        ax
    } else {
        ax / ax.tanh()
    }
}
