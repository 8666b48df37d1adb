//! Scalar bracketing root finders.

/// Brent's method on `[a, b]` with `f(a) = fa`, `f(b) = fb` of opposite sign.
///
/// Stops when the bracket is narrower than `xtol` or `|f| <= ftol`.
pub fn brent<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, fa: f64, fb: f64, xtol: f64, ftol: f64) -> f64 {
    let mut g = |x: f64| Ok::<f64, std::convert::Infallible>(f(x));
    match try_brent(&mut g, a, b, fa, fb, xtol, ftol) {
        Ok(r) => r.0,
        Err(e) => match e {},
    }
}

/// Brent's method for a function that may fail inside the bracket. Returns
/// the best abscissa found and its function value.
pub fn try_brent<E, F: FnMut(f64) -> Result<f64, E>>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    xtol: f64,
    ftol: f64,
) -> Result<(f64, f64), E> {
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa == 0.0 {
        return Ok((a, fa));
    }
    if fb == 0.0 {
        return Ok((b, fb));
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut mflag = true;
    for _ in 0..200 {
        if fb.abs() <= ftol || (b - a).abs() <= xtol {
            return Ok((b, fb));
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc)) + b * fa * fc / ((fb - fa) * (fb - fc)) + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let between = if lo < b { s > lo && s < b } else { s > b && s < lo };
        let bisect = !between
            || (mflag && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!mflag && (s - b).abs() >= (c - d).abs() / 2.0)
            || (mflag && (b - c).abs() < xtol)
            || (!mflag && (c - d).abs() < xtol);
        if bisect {
            s = 0.5 * (a + b);
        }
        mflag = bisect;
        if s == a || s == b {
            // Bracket has collapsed to adjacent floats.
            return Ok((b, fb));
        }
        let fs = f(s)?;
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
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
    Ok((b, fb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let mut f = |x: f64| x * x * x - 2.0;
        let r = brent(&mut f, 0.0, 2.0, -2.0, 6.0, 1e-15, 0.0);
        assert!((r - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn endpoint_root() {
        let mut f = |x: f64| x;
        assert_eq!(brent(&mut f, 0.0, 1.0, 0.0, 1.0, 1e-15, 0.0), 0.0);
    }
}
