//! Small dense polynomial helpers (ascending coefficient order).

use nalgebra::DMatrix;

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, v)| *v * i as f64).collect()
}

/// Roots of a polynomial as `(re, im)` pairs, via companion-matrix eigenvalues.
///
/// Leading coefficients below `1e-14` of the largest magnitude are dropped.
pub fn roots(c: &[f64]) -> Vec<(f64, f64)> {
    let max = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Vec::new();
    }
    let mut deg = c.len() - 1;
    while deg > 0 && c[deg].abs() <= 1e-14 * max {
        deg -= 1;
    }
    match deg {
        0 => Vec::new(),
        1 => vec![(-c[0] / c[1], 0.0)],
        _ => {
            let lead = c[deg];
            let mut comp = DMatrix::<f64>::zeros(deg, deg);
            for i in 1..deg {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..deg {
                comp[(i, deg - 1)] = -c[i] / lead;
            }
            comp.complex_eigenvalues()
                .iter()
                .map(|z| (z.re, z.im))
                .collect()
        }
    }
}

/// Real roots, polished with a few Newton steps and sorted.
pub fn real_roots(c: &[f64], imag_tol: f64) -> Vec<f64> {
    let d = derivative(c);
    let mut out: Vec<f64> = roots(c)
        .into_iter()
        .filter(|(re, im)| im.abs() <= imag_tol * (1.0 + re.abs()))
        .map(|(mut x, _)| {
            for _ in 0..4 {
                let fx = eval(c, x);
                let dx = eval(&d, x);
                if dx == 0.0 || !dx.is_finite() {
                    break;
                }
                let next = x - fx / dx;
                if !next.is_finite() || eval(c, next).abs() > fx.abs() {
                    break;
                }
                x = next;
            }
            x
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}
