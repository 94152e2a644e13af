//! Compensated dot products and small dense helpers.

use crate::C64;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// `Σ aᵢbᵢ` in twice-working precision (Ogita–Rump–Oishi `Dot2`).
pub fn dot2(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for (a, b) in pairs {
        let (p, ep) = two_prod(a, b);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
    }
    s + c
}

/// Bilinear (unconjugated) product `Σ aᵢbᵢ` on `ℂ^m`, compensated.
pub fn cdot(a: &[C64], b: &[C64]) -> C64 {
    let re = dot2(a.iter().zip(b).flat_map(|(x, y)| [(x.re, y.re), (-x.im, y.im)]));
    let im = dot2(a.iter().zip(b).flat_map(|(x, y)| [(x.re, y.im), (x.im, y.re)]));
    C64::new(re, im)
}
