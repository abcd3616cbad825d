//! Scalar root bracketing and extremum search on periodic functions.

use std::f64::consts::TAU;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Bisection on a bracket with `f(lo)` and `f(hi)` of opposite sign.
pub(crate) fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All sign changes of a `2 pi`-periodic `f` on `[0, 2 pi)`, located on an
/// `n`-point grid and refined by bisection. Returned in increasing order,
/// wrapped to `[0, 2 pi)`.
pub(crate) fn periodic_roots(f: &impl Fn(f64) -> f64, n: usize, tol: f64) -> Vec<f64> {
    let xs: Vec<f64> = (0..=n).map(|i| TAU * i as f64 / n as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 0..n {
        let (y0, y1) = (ys[i], ys[i + 1]);
        if y0 == 0.0 {
            roots.push(xs[i]);
        } else if (y0 < 0.0) != (y1 < 0.0) && y1 != 0.0 {
            roots.push(bisect(f, xs[i], xs[i + 1], tol));
        }
    }
    let mut roots: Vec<f64> = roots.into_iter().map(|r| if r >= TAU { r - TAU } else { r }).collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 10.0 * tol);
    roots
}

/// Golden-section minimisation of a unimodal `f` on `[lo, hi]`.
pub(crate) fn golden_min(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Global minimum and maximum of a `2 pi`-periodic `f`: best grid point,
/// then golden section over the neighbouring cells.
pub(crate) fn periodic_extrema(f: &impl Fn(f64) -> f64, n: usize) -> ((f64, f64), (f64, f64)) {
    let h = TAU / n as f64;
    let ys: Vec<f64> = (0..n).map(|i| f(h * i as f64)).collect();
    let imin = (0..n).min_by(|&a, &b| ys[a].total_cmp(&ys[b])).expect("n > 0");
    let imax = (0..n).max_by(|&a, &b| ys[a].total_cmp(&ys[b])).expect("n > 0");
    let centre = |i: usize| h * i as f64;
    let min = golden_min(f, centre(imin) - h, centre(imin) + h, 1e-12);
    let max = golden_min(&|x| -f(x), centre(imax) - h, centre(imax) + h, 1e-12);
    let min = if min.1 <= ys[imin] { min } else { (centre(imin), ys[imin]) };
    let max = if -max.1 >= ys[imax] {
        (max.0, -max.1)
    } else {
        (centre(imax), ys[imax])
    };
    (min, max)
}
