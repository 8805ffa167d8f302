//! Local cubic interpolation over subcarrier ordinals.

use num_complex::Complex64;

/// Value at `x` from the known samples `(xs[i], ys[i])`, `xs` strictly
/// increasing. Inside the known hull this is the Lagrange cubic through the
/// four known points closest to `x` (two on each side where available), so
/// samples of any cubic polynomial are reproduced exactly. Outside the hull
/// the nearest known value is returned.
pub fn cubic_at(xs: &[usize], ys: &[Complex64], x: usize) -> Complex64 {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty(), "need at least one known sample");
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    if let Ok(i) = xs.binary_search(&x) {
        return ys[i];
    }
    if xs.len() < 4 {
        return linear_at(xs, ys, x);
    }
    // First known index to the right of x.
    let right = xs.partition_point(|&k| k < x);
    let start = right.saturating_sub(2).min(xs.len() - 4);
    let window = start..start + 4;
    let xf = x as f64;
    let mut acc = Complex64::default();
    for i in window.clone() {
        let mut weight = 1.0;
        for j in window.clone() {
            if i != j {
                weight *= (xf - xs[j] as f64) / (xs[i] as f64 - xs[j] as f64);
            }
        }
        acc += ys[i] * weight;
    }
    acc
}

fn linear_at(xs: &[usize], ys: &[Complex64], x: usize) -> Complex64 {
    let right = xs.partition_point(|&k| k < x);
    let (x0, x1) = (xs[right - 1] as f64, xs[right] as f64);
    let t = (x as f64 - x0) / (x1 - x0);
    ys[right - 1] * (1.0 - t) + ys[right] * t
}
