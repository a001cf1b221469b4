//! Bracketed scalar root finding.

/// Illinois variant of regula falsi on a bracket `[lo, hi]` with
/// `f(lo) * f(hi) <= 0`. Returns the end of the final bracket on the side of
/// `hi`'s sign, so the sign convention of the caller is kept.
pub(crate) fn illinois(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    max_iter: usize,
) -> f64 {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    let mut side = 0i8;
    for _ in 0..max_iter {
        let width = (hi - lo).abs();
        if width <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) || width == 0.0 {
            break;
        }
        let mut x = (lo * fhi - hi * flo) / (fhi - flo);
        if !(x > lo.min(hi) && x < lo.max(hi)) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx > 0.0) == (fhi > 0.0) {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        } else {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        }
    }
    hi
}
