//! Stationary covariance of the OU process: Kronecker Lyapunov solve, the
//! closed-form second moments, and RK4 evolution of mean and covariance.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::error::{Error, Result};
use crate::model::{DriftNoise, SystemParams, P1, P2, Q1, Q2, STATE_LABELS};
use crate::stability::eigenvalues;

/// Symmetric PSD tolerance on eigenvalues, relative to the largest entry.
pub const PSD_TOL: f64 = 1e-10;
/// Symmetry tolerance, relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Equal-time second moments in `(q1, p1, q2, p2)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix(Matrix4<f64>);

impl CovarianceMatrix {
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("covariance", "entries must be finite"));
        }
        Ok(Self(m))
    }

    pub fn zeros() -> Self {
        Self(Matrix4::zeros())
    }

    pub fn from_diagonal(d: [f64; 4]) -> Self {
        Self(Matrix4::from_diagonal(&Vector4::from(d)))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix4<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self) -> f64 {
        self.0.amax()
    }

    /// `max |C - C^T|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let s = self.scale();
        if s == 0.0 {
            return 0.0;
        }
        (self.0 - self.0.transpose()).amax() / s
    }

    pub fn is_symmetric(&self) -> bool {
        self.asymmetry() <= SYMMETRY_TOL
    }

    /// Smallest eigenvalue of the symmetric part.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (self.0 + self.0.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -PSD_TOL * self.scale()
    }

    /// Largest entrywise deviation scaled by this matrix's own standard
    /// deviations, `max |A_ij - B_ij| / sqrt(A_ii A_jj)`. Entries with a zero
    /// variance fall back to the largest entry as scale.
    pub fn scaled_deviation(&self, other: &CovarianceMatrix) -> f64 {
        let fallback = self.scale().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let s = (self.0[(i, i)] * self.0[(j, j)]).sqrt();
                let s = if s > 0.0 { s } else { fallback };
                worst = worst.max((self.0[(i, j)] - other.0[(i, j)]).abs() / s);
            }
        }
        worst
    }
}

impl Serialize for CovarianceMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("CovarianceMatrix", 2)?;
        st.serialize_field("order", &STATE_LABELS)?;
        st.serialize_field("matrix", &self.to_rows())?;
        st.end()
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Dot product evaluated as if in twice the working precision.
pub(crate) fn dot2(terms: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut p = 0.0;
    let mut s = 0.0;
    for (x, y) in terms {
        let (h, r) = two_prod(x, y);
        let (np, q) = two_sum(p, h);
        p = np;
        s += q + r;
    }
    p + s
}

/// `Q - (A X + X A^T)` with compensated accumulation.
fn lyapunov_residual(a: &Matrix4<f64>, x: &Matrix4<f64>, q: &Matrix4<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| {
        let terms = (0..4)
            .map(move |k| (a[(i, k)], x[(k, j)]))
            .chain((0..4).map(move |k| (x[(i, k)], a[(j, k)])))
            .chain(std::iter::once((q[(i, j)], -1.0)));
        -dot2(terms)
    })
}

fn kronecker_sum(a: &Matrix4<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(16, 16, |r, c| {
        let (i, j) = (r % 4, r / 4);
        let (k, l) = (c % 4, c / 4);
        let mut v = 0.0;
        if j == l {
            v += a[(i, k)];
        }
        if i == k {
            v += a[(j, l)];
        }
        v
    })
}

fn vec4x4(m: &Matrix4<f64>) -> DVector<f64> {
    DVector::from_iterator(16, m.iter().copied())
}

fn unvec(v: &DVector<f64>) -> Matrix4<f64> {
    Matrix4::from_iterator(v.iter().copied())
}

/// Solves `A X + X A^T = Q` for any `A` whose eigenvalues have no pair
/// summing to zero. LU on the 16x16 Kronecker system followed by iterative
/// refinement with a compensated residual. Errors when the final residual
/// exceeds `1e-10 |Q| + 64 eps |A| |X|`.
pub fn solve_continuous_lyapunov(a: &Matrix4<f64>, q: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    if a.iter().chain(q.iter()).any(|v| !v.is_finite()) {
        return Err(Error::param("theta", "entries must be finite"));
    }
    let lu = kronecker_sum(a).lu();
    let u = lu.u();
    let pivots = u.diagonal().map(f64::abs);
    let (pmin, pmax) = (pivots.min(), pivots.max());
    if pmax == 0.0 || pmin <= 16.0 * f64::EPSILON * pmax {
        return Err(Error::SingularSystem { pivot: pmin });
    }
    let mut x = lu.solve(&vec4x4(q)).ok_or(Error::SingularSystem { pivot: pmin })?;
    let mut xm = unvec(&x);
    for _ in 0..8 {
        let r = lyapunov_residual(a, &xm, q);
        let dx = lu.solve(&vec4x4(&r)).ok_or(Error::SingularSystem { pivot: pmin })?;
        x += &dx;
        xm = unvec(&x);
        if dx.amax() <= f64::EPSILON * x.amax() {
            break;
        }
    }
    let residual = lyapunov_residual(a, &xm, q).amax();
    // Residual attainable with X rounded to f64.
    let floor = 64.0 * f64::EPSILON * a.amax() * xm.amax();
    if residual > 1e-10 * q.amax() + floor {
        return Err(Error::SingularSystem { pivot: pmin });
    }
    Ok(xm)
}

/// Stationary covariance `C` with `theta C + C theta^T = sigma sigma^T`.
pub fn solve_lyapunov(dn: &DriftNoise) -> Result<CovarianceMatrix> {
    let ev = eigenvalues(&dn.theta);
    let min_re = ev.iter().map(|e| e.re).fold(f64::INFINITY, f64::min);
    let max_abs = ev.iter().map(|e| e.norm()).fold(0.0, f64::max);
    if min_re <= 8.0 * f64::EPSILON * max_abs {
        return Err(Error::NotStable { min_real_part: min_re });
    }
    CovarianceMatrix::new(solve_continuous_lyapunov(&dn.theta, &dn.noise_covariance())?)
}

/// Relative Lyapunov residual `max|theta C + C theta^T - Q| / max|Q|`.
pub fn lyapunov_residual_norm(dn: &DriftNoise, c: &CovarianceMatrix) -> f64 {
    let q = dn.noise_covariance();
    let r = lyapunov_residual(&dn.theta, c.matrix(), &q).amax();
    if q.amax() == 0.0 {
        r
    } else {
        r / q.amax()
    }
}

/// The closed-form stationary second moments of the coupled system.
pub fn closed_form_covariances(params: &SystemParams) -> Result<CovarianceMatrix> {
    params.validate()?;
    let l = params.coupling;
    if l == 0.0 {
        return Err(Error::CouplingZero);
    }
    let g = params.gamma1();
    if g <= 0.0 {
        return Err(Error::NotStable { min_real_part: 0.0 });
    }
    let (m1, m2) = (params.osc1.mass, params.osc2.mass);
    let (d1, d2) = (params.osc1.diffusion, params.osc2.diffusion);
    let (w1s, w2s) = (params.osc1.omega_sq(), params.osc2.omega_sq());
    let den = w2s * l / m1 + w1s * (w2s + l / m2);
    if den <= 0.0 {
        return Err(Error::NotStable { min_real_part: 0.0 });
    }
    let shift = w1s - w2s + l / m1 - l / m2;
    let h = 1.0 / (2.0 * g);

    let p1p1 = h * (d1 + m1 / m2 * d2);
    let p2p2 = h * (d2 * (1.0 + m1 * m2 / (l * l) * (shift * shift + g * g * (w2s + l / m2))) + m2 / m1 * d1);
    let q1q1 = h * (d1 * (l / m2 + w2s) + m1 / m2 * d2 * (l / m1 + w1s)) / (m1 * m1 * den);
    let q2q2 = h / (m2 * m2 * den)
        * (m2 / m1 * d1 * (w1s + l / m1)
            + d2 * m1 * m2 / (l * l)
                * ((w1s + l / m1).powi(3) + den * (w2s - 2.0 * w1s + l / m2 - 2.0 * l / m1 + g * g)));
    let p1p2 = h * d2 * m1 / l * shift;
    let q1p2 = -d2 / (2.0 * l);
    let q2p1 = d2 / (2.0 * l) * m1 / m2;
    let q1q2 = h / (m1 * m2)
        * (d1 * l / m1 + d2 * m1 / l * ((w1s + l / m1).powi(2) - w2s * l / m1 - w1s * (w2s + l / m2)))
        / den;

    let mut c = Matrix4::zeros();
    let mut set = |i: usize, j: usize, v: f64| {
        c[(i, j)] = v;
        c[(j, i)] = v;
    };
    set(P1, P1, p1p1);
    set(P2, P2, p2p2);
    set(Q1, Q1, q1q1);
    set(Q2, Q2, q2q2);
    set(P1, P2, p1p2);
    set(Q1, P2, q1p2);
    set(Q2, P1, q2p1);
    set(Q1, Q2, q1q2);
    CovarianceMatrix::new(c)
}

/// Options for [`evolve_moments`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EvolveOptions {
    /// Maximum RK4 step. Defaults to `0.5 / max|eigenvalue of theta|`.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentState {
    pub t: f64,
    pub mean: Vector4<f64>,
    pub cov: CovarianceMatrix,
}

/// Double-double number `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn renorm(s: f64, e: f64) -> Self {
        let hi = s + e;
        Dd { hi, lo: e - (hi - s) }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        Dd::renorm(s, e + self.lo + o.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn div_int(self, k: f64) -> Dd {
        let q = self.hi / k;
        let (p, pe) = two_prod(q, k);
        Dd::renorm(q, (self.hi - p - pe + self.lo) / k)
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Dense square matrix of double-doubles, row-major.
#[derive(Debug, Clone)]
struct DdMat {
    n: usize,
    v: Vec<Dd>,
}

impl DdMat {
    fn zeros(n: usize) -> Self {
        Self { n, v: vec![Dd::ZERO; n * n] }
    }

    fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.v[i * n + i] = Dd::ONE;
        }
        m
    }

    fn add(&self, o: &Self) -> Self {
        Self { n: self.n, v: self.v.iter().zip(&o.v).map(|(a, b)| a.add(*b)).collect() }
    }

    fn map(&self, f: impl Fn(Dd) -> Dd) -> Self {
        Self { n: self.n, v: self.v.iter().map(|&a| f(a)).collect() }
    }

    fn mul(&self, o: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.v[i * n + k];
                if a.hi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let b = o.v[k * n + j];
                    if b.hi != 0.0 {
                        out.v[i * n + j] = out.v[i * n + j].add(a.mul(b));
                    }
                }
            }
        }
        out
    }

    fn mul_vec(&self, x: &[Dd]) -> Vec<Dd> {
        let n = self.n;
        (0..n).map(|i| (0..n).fold(Dd::ZERO, |acc, k| acc.add(self.v[i * n + k].mul(x[k])))).collect()
    }
}

fn add_vec(a: &[Dd], b: &[Dd]) -> Vec<Dd> {
    a.iter().zip(b).map(|(x, y)| x.add(*y)).collect()
}

/// One RK4 step of `y' = M y + b` written as `y -> y + A y + c`, in
/// double-double arithmetic.
struct AffineIncrement {
    a: DdMat,
    c: Vec<Dd>,
}

impl AffineIncrement {
    fn rk4(m: &DdMat, b: &[Dd], h: f64) -> Self {
        let n = m.n;
        let x = m.map(|e| e.mul(Dd::from(h)));
        let id = DdMat::identity(n);
        // T = I + X/2 (I + X/3 (I + X/4)); A = X T; c = h T b
        let inner = id.add(&x.map(|e| e.div_int(4.0)));
        let inner = id.add(&x.mul(&inner).map(|e| e.div_int(3.0)));
        let t = id.add(&x.mul(&inner).map(|e| e.div_int(2.0)));
        let a = x.mul(&t);
        let c = t.mul_vec(b).into_iter().map(|e| e.mul(Dd::from(h))).collect();
        Self { a, c }
    }

    fn identity(n: usize) -> Self {
        Self { a: DdMat::zeros(n), c: vec![Dd::ZERO; n] }
    }

    /// `self` followed by `next`.
    fn then(&self, next: &Self) -> Self {
        let a = self.a.add(&next.a).add(&next.a.mul(&self.a));
        let c = add_vec(&add_vec(&self.c, &next.c), &next.a.mul_vec(&self.c));
        Self { a, c }
    }

    fn power(&self, mut n: u64) -> Self {
        let mut result = Self::identity(self.a.n);
        let mut base = Self { a: self.a.clone(), c: self.c.clone() };
        while n > 0 {
            if n & 1 == 1 {
                result = result.then(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.then(&base);
            }
        }
        result
    }

    fn apply(&self, y: &[Dd]) -> Vec<Dd> {
        add_vec(&add_vec(y, &self.a.mul_vec(y)), &self.c)
    }
}

/// `-(I (x) theta + theta (x) I)` acting on column-major `vec(C)`, exact.
fn moment_generator(theta: &Matrix4<f64>) -> DdMat {
    let mut m = DdMat::zeros(16);
    for r in 0..16 {
        let (i, j) = (r % 4, r / 4);
        for c in 0..16 {
            let (k, l) = (c % 4, c / 4);
            let mut v = Dd::ZERO;
            if j == l {
                v = v.add(Dd::from(-theta[(i, k)]));
            }
            if i == k {
                v = v.add(Dd::from(-theta[(j, l)]));
            }
            m.v[r * 16 + c] = v;
        }
    }
    m
}

/// Integrates `dC/dt = -theta C - C theta^T + sigma sigma^T` and
/// `dmu/dt = -theta mu` from `t = 0`, returning the state at each grid time.
///
/// Each grid interval is split into equal RK4 steps no longer than the
/// configured step; the repeated step is applied by binary powering.
pub fn evolve_moments(
    dn: &DriftNoise,
    c0: &CovarianceMatrix,
    mean0: &Vector4<f64>,
    t_grid: &[f64],
    opts: EvolveOptions,
) -> Result<Vec<MomentState>> {
    if !c0.is_symmetric() {
        return Err(Error::param("C0", "must be symmetric"));
    }
    let ev = eigenvalues(&dn.theta);
    let rho = ev.iter().map(|e| e.norm()).fold(0.0, f64::max);
    let h_max = match opts.step {
        Some(h) if !(h > 0.0 && h.is_finite()) => {
            return Err(Error::param("step", format!("must be positive and finite, got {h}")));
        }
        Some(h) => h,
        None if rho > 0.0 => 0.5 / rho,
        None => 1.0,
    };
    if h_max * rho > 1.0 {
        return Err(Error::StepSize { ratio: h_max * rho });
    }
    let mut prev = 0.0;
    for &t in t_grid {
        if !(t.is_finite() && t >= prev) {
            return Err(Error::param("t_grid", "must be finite, non-negative and non-decreasing"));
        }
        prev = t;
    }

    let theta = &dn.theta;
    let cov_m = moment_generator(theta);
    let cov_b: Vec<Dd> = dn.noise_covariance().iter().map(|&v| Dd::from(v)).collect();
    let mut mean_m = DdMat::zeros(4);
    for i in 0..4 {
        for j in 0..4 {
            mean_m.v[i * 4 + j] = Dd::from(-theta[(i, j)]);
        }
    }
    let mean_b = vec![Dd::ZERO; 4];

    let mut cov: Vec<Dd> = c0.matrix().iter().map(|&v| Dd::from(v)).collect();
    let mut mean: Vec<Dd> = mean0.iter().map(|&v| Dd::from(v)).collect();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        let span = target - t;
        if span > 0.0 {
            let n = (span / h_max).ceil().max(1.0);
            let h = span / n;
            let n = n as u64;
            cov = AffineIncrement::rk4(&cov_m, &cov_b, h).power(n).apply(&cov);
            mean = AffineIncrement::rk4(&mean_m, &mean_b, h).power(n).apply(&mean);
            t = target;
        }
        let c = Matrix4::from_iterator(cov.iter().map(|d| d.value()));
        out.push(MomentState {
            t: target,
            mean: Vector4::from_iterator(mean.iter().map(|d| d.value())),
            cov: CovarianceMatrix::new((c + c.transpose()) * 0.5)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_drift_noise, OscillatorParams};
    use nalgebra::Matrix2;

    fn fig1() -> SystemParams {
        SystemParams::natural_units(0.05, 1.0, 1.0).unwrap()
    }

    #[test]
    fn single_damped_oscillator() {
        let a = Matrix2::new(0.0, -1.0, 1.0, 1.0);
        let mut big = Matrix4::identity();
        big.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
        let mut q = Matrix4::identity();
        q[(0, 0)] = 0.0;
        let x = solve_continuous_lyapunov(&big, &q).unwrap();
        assert!((x[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((x[(1, 1)] - 0.5).abs() < 1e-14);
        assert!(x[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn momentum_variance_fixed_point() {
        let c = solve_lyapunov(&assemble_drift_noise(&fig1()).unwrap()).unwrap();
        assert!((c.get(P1, P1) - 1.0).abs() < 1e-12);
        assert!(c.is_symmetric());
        assert!(c.is_psd());
    }

    #[test]
    fn closed_form_matches_solver() {
        for p in [
            fig1(),
            SystemParams::new(
                OscillatorParams::new(1.3, 0.8, 0.7, 1.1).unwrap(),
                OscillatorParams::new(0.9, 1.2, 0.0, 0.6).unwrap(),
                0.3,
            )
            .unwrap(),
        ] {
            let dn = assemble_drift_noise(&p).unwrap();
            let a = solve_lyapunov(&dn).unwrap();
            let b = closed_form_covariances(&p).unwrap();
            assert!(a.scaled_deviation(&b) < 1e-12, "{}", a.scaled_deviation(&b));
            assert!(lyapunov_residual_norm(&dn, &a) < 1e-13);
        }
    }

    #[test]
    fn identical_q1q2_loses_inverse_coupling_part() {
        let p = SystemParams::identical(1.4, 0.9, 0.6, 0.8, 2.0, 0.2).unwrap();
        let c = closed_form_covariances(&p).unwrap();
        let (m, w2, g, l, d1, d2) = (1.4, 0.81, 0.6, 0.2, 0.8, 2.0);
        let expected = (l / m) * (d1 + d2) / (2.0 * g * m * m * (w2 * l / m + w2 * (w2 + l / m)));
        assert!((c.get(Q1, Q2) - expected).abs() < 1e-14 * expected.abs().max(1.0));
    }

    #[test]
    fn no_d2_no_cross_terms() {
        let p = SystemParams::natural_units(0.2, 1.0, 0.0).unwrap();
        let c = closed_form_covariances(&p).unwrap();
        assert_eq!(c.get(P1, P2), 0.0);
        assert_eq!(c.get(Q1, P2), 0.0);
        assert_eq!(c.get(Q2, P1), 0.0);
    }

    #[test]
    fn zero_coupling_errors() {
        let p = SystemParams::natural_units(0.0, 1.0, 1.0).unwrap();
        assert_eq!(closed_form_covariances(&p), Err(Error::CouplingZero));
        assert!(matches!(
            solve_lyapunov(&assemble_drift_noise(&p).unwrap()),
            Err(Error::NotStable { .. })
        ));
    }

    #[test]
    fn evolve_stays_at_fixed_point() {
        let dn = assemble_drift_noise(&fig1()).unwrap();
        let c = solve_lyapunov(&dn).unwrap();
        let out = evolve_moments(&dn, &c, &Vector4::zeros(), &[1.0, 10.0, 100.0], EvolveOptions::default()).unwrap();
        for s in out {
            assert!(c.scaled_deviation(&s.cov) < 1e-9);
        }
    }

    #[test]
    fn evolve_converges_from_zero() {
        let dn = assemble_drift_noise(&fig1()).unwrap();
        let c = solve_lyapunov(&dn).unwrap();
        let min_re = eigenvalues(&dn.theta).iter().map(|e| e.re).fold(f64::INFINITY, f64::min);
        let out = evolve_moments(
            &dn,
            &CovarianceMatrix::zeros(),
            &Vector4::new(1.0, 0.0, 0.0, 0.0),
            &[50.0 / min_re],
            EvolveOptions::default(),
        )
        .unwrap();
        assert!(c.scaled_deviation(&out[0].cov) < 1e-8);
        assert!(out[0].mean.amax() < 1e-12);
    }

    #[test]
    fn evolve_rejects_large_steps() {
        let dn = assemble_drift_noise(&fig1()).unwrap();
        let r = evolve_moments(&dn, &CovarianceMatrix::zeros(), &Vector4::zeros(), &[1.0], EvolveOptions { step: Some(5.0) });
        assert!(matches!(r, Err(Error::StepSize { .. })));
    }
}
