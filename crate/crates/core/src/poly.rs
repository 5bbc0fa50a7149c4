//! Small dense polynomials with complex coefficients, highest power first.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;

/// Horner evaluation of `c[0] x^n + ... + c[n]`.
pub fn eval(c: &[C64], x: C64) -> C64 {
    c.iter().fold(C64::new(0.0, 0.0), |acc, &a| acc * x + a)
}

/// Horner evaluation returning the value and first derivative.
pub fn eval_with_derivative(c: &[C64], x: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &a in c {
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp)
}

pub fn derivative(c: &[C64]) -> Vec<C64> {
    let n = c.len().saturating_sub(1);
    c.iter().take(n).enumerate().map(|(k, &a)| a * (n - k) as f64).collect()
}

pub fn from_real(c: &[f64]) -> Vec<C64> {
    c.iter().map(|&a| C64::new(a, 0.0)).collect()
}

/// Roots of a polynomial with nonzero leading coefficient, from the
/// eigenvalues of its companion matrix followed by Newton polishing.
pub fn roots(c: &[C64]) -> Option<Vec<C64>> {
    let n = c.len().checked_sub(1)?;
    if n == 0 || c[0].norm() == 0.0 {
        return None;
    }
    let lead = c[0];
    let mut comp = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -c[j + 1] / lead;
    }
    for i in 1..n {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    let eig = comp.schur().eigenvalues()?;
    let mut out: Vec<C64> = eig.iter().map(|&r| polish(c, r)).collect();
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Some(out)
}

/// A few Newton steps, kept only while they reduce the residual.
pub fn polish(c: &[C64], mut r: C64) -> C64 {
    let mut res = eval(c, r).norm();
    for _ in 0..3 {
        let (p, dp) = eval_with_derivative(c, r);
        if dp.norm() == 0.0 {
            break;
        }
        let cand = r - p / dp;
        let cand_res = eval(c, cand).norm();
        if cand_res < res {
            r = cand;
            res = cand_res;
        } else {
            break;
        }
    }
    r
}

/// Smallest pairwise distance between roots.
pub fn min_separation(r: &[C64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..r.len() {
        for j in i + 1..r.len() {
            best = best.min((r[i] - r[j]).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_roots() {
        let c = from_real(&[1.0, 0.0, 1.0]);
        let r = roots(&c).unwrap();
        assert!((r[0] - C64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((r[1] - C64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn quartic_from_known_roots() {
        let known = [C64::new(1.0, 2.0), C64::new(-0.5, 0.1), C64::new(3.0, -1.0), C64::new(0.2, 0.0)];
        let mut c = vec![C64::new(1.0, 0.0)];
        for &z in &known {
            let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
            for (k, &a) in c.iter().enumerate() {
                next[k] += a;
                next[k + 1] -= a * z;
            }
            c = next;
        }
        let r = roots(&c).unwrap();
        for z in known {
            assert!(r.iter().any(|x| (x - z).norm() < 1e-12), "missing root {z}");
        }
    }

    #[test]
    fn derivative_and_eval() {
        let c = from_real(&[2.0, -3.0, 0.0, 5.0]);
        let d = derivative(&c);
        assert_eq!(d, from_real(&[6.0, -6.0, 0.0]));
        let x = C64::new(0.3, -0.7);
        let (p, dp) = eval_with_derivative(&c, x);
        assert!((p - eval(&c, x)).norm() < 1e-15);
        assert!((dp - eval(&d, x)).norm() < 1e-15);
    }
}
