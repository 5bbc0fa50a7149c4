//! Independent oracles and parameter draws shared by the integration tests.
//! Everything here is built directly from the raw parameters.

#![allow(dead_code)]

use hybrid_osc::model::{OscillatorParams, SystemParams};
use nalgebra::{DMatrix, DVector, Matrix4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (r.random_range(lo.ln()..hi.ln())).exp()
}

/// Ranges for a random coupled system, as `(lo, hi)` log-uniform intervals.
#[derive(Clone, Copy)]
pub struct Ranges {
    pub mass: (f64, f64),
    pub omega: (f64, f64),
    pub gamma: (f64, f64),
    pub lambda: (f64, f64),
    pub diffusion: (f64, f64),
}

pub fn draw(r: &mut ChaCha8Rng, g: Ranges) -> SystemParams {
    let m1 = log_uniform(r, g.mass.0, g.mass.1);
    let m2 = log_uniform(r, g.mass.0, g.mass.1);
    let w1 = log_uniform(r, g.omega.0, g.omega.1);
    let w2 = log_uniform(r, g.omega.0, g.omega.1);
    let gamma = log_uniform(r, g.gamma.0, g.gamma.1);
    let lambda = log_uniform(r, g.lambda.0, g.lambda.1);
    let d1 = log_uniform(r, g.diffusion.0, g.diffusion.1);
    let d2 = log_uniform(r, g.diffusion.0, g.diffusion.1);
    SystemParams::new(
        OscillatorParams::new(m1, m1 * w1 * w1, gamma * m1, d1).unwrap(),
        OscillatorParams::new(m2, m2 * w2 * w2, 0.0, d2).unwrap(),
        lambda,
    )
    .unwrap()
}

/// Drift matrix of `dz = -theta z dt + sigma dW` in `(q1, p1, q2, p2)` order.
pub fn theta(p: &SystemParams) -> Matrix4<f64> {
    let (m1, m2, l) = (p.osc1.mass, p.osc2.mass, p.coupling);
    let (k1, k2, a) = (p.osc1.spring_constant, p.osc2.spring_constant, p.osc1.damping);
    Matrix4::new(
        0.0, -1.0 / m1, 0.0, 0.0,
        k1 + l, a / m1, -l, 0.0,
        0.0, 0.0, 0.0, -1.0 / m2,
        -l, 0.0, k2 + l, 0.0,
    )
}

pub fn noise(p: &SystemParams) -> Matrix4<f64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(0.0, p.osc1.diffusion, 0.0, p.osc2.diffusion))
}

/// `theta C + C theta^T = Q` by a dense Kronecker solve.
pub fn lyapunov(theta: &Matrix4<f64>, q: &Matrix4<f64>) -> Matrix4<f64> {
    let mut k = DMatrix::<f64>::zeros(16, 16);
    for i in 0..4 {
        for j in 0..4 {
            for l in 0..4 {
                // row (i, j) of vec(C), column-major index i + 4 j
                k[(i + 4 * j, l + 4 * j)] += theta[(i, l)];
                k[(i + 4 * j, i + 4 * l)] += theta[(j, l)];
            }
        }
    }
    let rhs = DVector::from_iterator(16, (0..16).map(|n| q[(n % 4, n / 4)]));
    let lu = k.clone().lu();
    let mut x = lu.solve(&rhs).expect("nonsingular");
    for _ in 0..6 {
        let r = DVector::from_iterator(16, (0..16).map(|i| {
            exact_dot((0..16).map(|j| (k[(i, j)], -x[j])).chain(std::iter::once((rhs[i], 1.0))))
        }));
        x += lu.solve(&r).expect("nonsingular");
    }
    Matrix4::from_fn(|i, j| x[i + 4 * j])
}

/// Sum of products accumulated with error-free transformations.
fn exact_dot(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut hi, mut lo) = (0.0_f64, 0.0_f64);
    for (a, b) in terms {
        let p = a * b;
        let pe = a.mul_add(b, -p);
        let s = hi + p;
        let z = s - hi;
        lo += (hi - (s - z)) + (p - z) + pe;
        hi = s;
    }
    hi + lo
}

pub fn steady_covariance(p: &SystemParams) -> Matrix4<f64> {
    lyapunov(&theta(p), &noise(p))
}

/// `max |a_ij - b_ij| / sqrt(b_ii b_jj)`.
pub fn scaled_dev(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    let mut w: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            w = w.max((a[(i, j)] - b[(i, j)]).abs() / (b[(i, i)] * b[(j, j)]).sqrt());
        }
    }
    w
}

/// Characteristic polynomial `det(x I - m)` by Faddeev-LeVerrier, highest power first.
pub fn char_poly(m: &Matrix4<f64>) -> [f64; 5] {
    let mut c = [1.0, 0.0, 0.0, 0.0, 0.0];
    let mut mk = Matrix4::<f64>::zeros();
    for k in 1..=4 {
        mk = m * mk + Matrix4::identity() * c[k - 1];
        c[k] = -(m * mk).trace() / k as f64;
    }
    c
}

/// Roots of a real polynomial by Durand-Kerner iteration.
pub fn durand_kerner(c: &[f64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let a: Vec<f64> = c.iter().map(|x| x / c[0]).collect();
    let bound = 1.0 + a[1..].iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32) * bound).collect();
    let eval = |x: Complex64| a.iter().fold(Complex64::new(0.0, 0.0), |acc, &ak| acc * x + ak);
    for _ in 0..2000 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    den *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / den;
            z[i] -= step;
            moved = moved.max(step.norm() / z[i].norm().max(1e-300));
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

/// Eigenvalues of `theta` via its characteristic polynomial.
pub fn eigenvalues(p: &SystemParams) -> Vec<Complex64> {
    durand_kerner(&char_poly(&theta(p)))
}

/// Covariance of `exp(-H/T)` from the Hessian of the Hamiltonian.
pub fn gibbs(p: &SystemParams, t: f64) -> Matrix4<f64> {
    let (m1, m2, l) = (p.osc1.mass, p.osc2.mass, p.coupling);
    let (k1, k2) = (p.osc1.spring_constant, p.osc2.spring_constant);
    let h = Matrix4::new(
        k1 + l, 0.0, -l, 0.0,
        0.0, 1.0 / m1, 0.0, 0.0,
        -l, 0.0, k2 + l, 0.0,
        0.0, 0.0, 0.0, 1.0 / m2,
    );
    h.try_inverse().expect("positive definite") * t
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
