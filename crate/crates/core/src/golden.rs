//! Bounded one-dimensional maximization by golden-section search.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes `f` over the closed interval `[lo, hi]`.
///
/// The bracket is shrunk until narrower than `tol`; the best interior probe is
/// then compared with both endpoints, so monotone objectives land exactly on
/// the boundary. Ties always go to the smaller argument, which makes a flat
/// objective return `lo`.
pub fn maximize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    debug_assert!(lo <= hi);
    if hi - lo <= tol {
        return pick(&f, &[lo, hi]);
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = score(&f, c);
    let mut fd = score(&f, d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = score(&f, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = score(&f, d);
        }
    }
    let inner = if fc >= fd { c } else { d };
    pick(&f, &[lo, inner, hi])
}

// NaN never wins a comparison.
fn score<F: Fn(f64) -> f64>(f: &F, x: f64) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn pick<F: Fn(f64) -> f64>(f: &F, xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = sorted[0];
    let mut best_v = score(f, best);
    for &x in &sorted[1..] {
        let v = score(f, x);
        if v > best_v {
            best = x;
            best_v = v;
        }
    }
    best
}
