//! Roots of real polynomials (Aberth–Ehrlich with Newton polishing).

use num_complex::Complex64;

/// Horner evaluation; coefficients highest degree first.
pub fn eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn eval_with_derivative(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All complex roots of the polynomial with real coefficients given highest
/// degree first. Exact zero trailing coefficients are deflated as exact zero
/// roots so that multiple roots at the origin come out exact.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let first = coeffs.iter().position(|&c| c != 0.0).unwrap_or(coeffs.len());
    let mut c: Vec<f64> = coeffs[first..].to_vec();
    let mut out = Vec::new();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
        out.push(Complex64::new(0.0, 0.0));
    }
    let deg = c.len().saturating_sub(1);
    match deg {
        0 => {}
        1 => out.push(Complex64::new(-c[1] / c[0], 0.0)),
        2 => {
            let (a, b, cc) = (c[0], c[1], c[2]);
            let disc = b * b - 4.0 * a * cc;
            if disc >= 0.0 {
                // Stable form avoids cancellation.
                let q = -0.5 * (b + b.signum() * disc.sqrt());
                let q = if q == 0.0 { -0.5 * disc.sqrt() } else { q };
                let r1 = q / a;
                let r2 = if q != 0.0 { cc / q } else { -r1 };
                out.push(Complex64::new(r1, 0.0));
                out.push(Complex64::new(r2, 0.0));
            } else {
                let re = -b / (2.0 * a);
                let im = (-disc).sqrt() / (2.0 * a);
                out.push(Complex64::new(re, im));
                out.push(Complex64::new(re, -im));
            }
        }
        _ => out.extend(aberth(&c)),
    }
    out
}

fn aberth(c: &[f64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let lead = c[0];
    let monic: Vec<f64> = c.iter().map(|v| v / lead).collect();
    // Cauchy bound on root magnitude.
    let radius = 1.0 + monic[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(0.5 * radius, 0.4 + std::f64::consts::TAU * k as f64 / n as f64))
        .collect();
    for _ in 0..1000 {
        let mut max_step: f64 = 0.0;
        for k in 0..n {
            let (p, dp) = eval_with_derivative(&monic, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| {
                    let d = z[k] - z[j];
                    if d.norm() == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(1.0, 0.0) / d
                    }
                })
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[k] -= step;
                max_step = max_step.max(step.norm() / (1.0 + z[k].norm()));
            }
        }
        if max_step < 1e-16 {
            break;
        }
    }
    for zk in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = eval_with_derivative(&monic, *zk);
            if dp.norm() == 0.0 {
                break;
            }
            let next = *zk - p / dp;
            if eval(&monic, next).norm() < p.norm() {
                *zk = next;
            } else {
                break;
            }
        }
        // Real polynomial: snap negligible imaginary parts of real roots.
        if zk.im.abs() <= 1e-13 * (1.0 + zk.re.abs()) {
            zk.im = 0.0;
        }
    }
    z
}
