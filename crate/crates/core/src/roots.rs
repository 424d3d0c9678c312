//! Scalar root bracketing and refinement.

/// A bracketed interval `[lo, hi]` with function values of opposite sign
/// (or an exact zero at one end).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

/// Sample `f` on `n` uniformly spaced points of `[lo, hi]` and return every
/// sign-change bracket. Non-finite samples break brackets instead of
/// creating them. Exact zeros at a grid node produce a degenerate bracket
/// `lo == hi`.
pub fn scan_brackets<F>(f: F, lo: f64, hi: f64, n: usize) -> Vec<Bracket>
where
    F: Fn(f64) -> f64,
{
    let n = n.max(2);
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for i in 0..n {
        if vs[i] == 0.0 {
            out.push(Bracket { lo: xs[i], hi: xs[i], f_lo: 0.0, f_hi: 0.0 });
            continue;
        }
        if i + 1 < n {
            let (a, b) = (vs[i], vs[i + 1]);
            if a.is_finite() && b.is_finite() && b != 0.0 && (a < 0.0) != (b < 0.0) {
                out.push(Bracket { lo: xs[i], hi: xs[i + 1], f_lo: a, f_hi: b });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootOutcome {
    pub root: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Final bracket width.
    pub width: f64,
}

/// Bisection refinement to absolute width `xtol`.
///
/// Returns `None` when the bracket is not a sign change or the function
/// turns non-finite inside it.
pub fn bisect<F>(f: F, mut br: Bracket, xtol: f64, max_iter: usize) -> Option<RootOutcome>
where
    F: Fn(f64) -> f64,
{
    if br.lo == br.hi {
        return Some(RootOutcome { root: br.lo, residual: br.f_lo, iterations: 0, width: 0.0 });
    }
    if (br.f_lo < 0.0) == (br.f_hi < 0.0) {
        return None;
    }
    let mut it = 0;
    while (br.hi - br.lo).abs() > xtol && it < max_iter {
        let mid = 0.5 * (br.lo + br.hi);
        if mid == br.lo || mid == br.hi {
            break;
        }
        let fm = f(mid);
        if !fm.is_finite() {
            return None;
        }
        if fm == 0.0 {
            return Some(RootOutcome { root: mid, residual: 0.0, iterations: it + 1, width: 0.0 });
        }
        if (fm < 0.0) == (br.f_lo < 0.0) {
            br.lo = mid;
            br.f_lo = fm;
        } else {
            br.hi = mid;
            br.f_hi = fm;
        }
        it += 1;
    }
    let (root, residual) = if br.f_lo.abs() <= br.f_hi.abs() { (br.lo, br.f_lo) } else { (br.hi, br.f_hi) };
    Some(RootOutcome { root, residual, iterations: it, width: (br.hi - br.lo).abs() })
}

/// Brent's method on a sign-change bracket.
pub fn brent<F>(f: F, br: Bracket, xtol: f64, max_iter: usize) -> Option<RootOutcome>
where
    F: Fn(f64) -> f64,
{
    if br.lo == br.hi {
        return Some(RootOutcome { root: br.lo, residual: br.f_lo, iterations: 0, width: 0.0 });
    }
    let (mut a, mut b) = (br.lo, br.hi);
    let (mut fa, mut fb) = (br.f_lo, br.f_hi);
    if (fa < 0.0) == (fb < 0.0) {
        return None;
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut mflag = true;
    for it in 0..max_iter {
        if fb == 0.0 || (b - a).abs() <= xtol {
            return Some(RootOutcome { root: b, residual: fb, iterations: it, width: (b - a).abs() });
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc)) + b * fa * fc / ((fb - fa) * (fb - fc)) + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let between = if lo < b { s > lo && s < b } else { s > b && s < lo };
        let cond = !between
            || (mflag && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!mflag && (s - b).abs() >= (c - d).abs() / 2.0)
            || (mflag && (b - c).abs() < xtol)
            || (!mflag && (c - d).abs() < xtol);
        if cond {
            s = 0.5 * (a + b);
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s);
        if !fs.is_finite() {
            return None;
        }
        d = c;
        c = b;
        fc = fb;
        if (fa < 0.0) != (fs < 0.0) {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Some(RootOutcome { root: b, residual: fb, iterations: max_iter, width: (b - a).abs() })
}

/// Bisection on an integer-valued detector: given `x_in` where
/// `detector(x_in) == want_in` and `x_out` where it differs, shrink the pair
/// until `|x_in - x_out| <= xtol`. Returns the final `(x_in, x_out)`.
pub fn bisect_detector<F, T>(detector: F, mut x_in: f64, mut x_out: f64, want_in: &T, xtol: f64, max_iter: usize) -> (f64, f64)
where
    F: Fn(f64) -> T,
    T: PartialEq,
{
    for _ in 0..max_iter {
        if (x_in - x_out).abs() <= xtol {
            break;
        }
        let mid = 0.5 * (x_in + x_out);
        if mid == x_in || mid == x_out {
            break;
        }
        if detector(mid) == *want_in {
            x_in = mid;
        } else {
            x_out = mid;
        }
    }
    (x_in, x_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brackets_and_bisection_find_cubic_roots() {
        let f = |x: f64| (x - 0.2) * (x + 0.5) * (x - 1.1);
        let brs = scan_brackets(f, -1.0, 2.0, 301);
        let roots: Vec<f64> = brs.iter().map(|b| bisect(f, *b, 1e-14, 200).unwrap().root).collect();
        assert_eq!(roots.len(), 3);
        for (r, want) in roots.iter().zip([-0.5, 0.2, 1.1]) {
            assert!((r - want).abs() < 1e-12, "{r} vs {want}");
        }
    }

    #[test]
    fn brent_matches_bisection() {
        let f = |x: f64| x.cos() - x;
        let br = scan_brackets(f, 0.0, 1.0, 3)[0];
        let a = brent(f, br, 1e-15, 200).unwrap().root;
        let b = bisect(f, br, 1e-15, 200).unwrap().root;
        assert!((a - b).abs() < 1e-14);
        assert!((a - 0.739_085_133_215_160_6).abs() < 1e-14);
    }

    #[test]
    fn non_finite_samples_do_not_bracket() {
        let f = |x: f64| if x > 0.5 { f64::NAN } else { x - 0.7 };
        assert!(scan_brackets(f, 0.0, 1.0, 11).is_empty());
    }

    #[test]
    fn detector_bisection_converges_to_jump() {
        let (a, b) = bisect_detector(|x| (x > 0.3) as u8, 1.0, 0.0, &1u8, 1e-12, 100);
        assert!((a - 0.3).abs() < 1e-11 && (b - 0.3).abs() < 1e-11);
    }
}
