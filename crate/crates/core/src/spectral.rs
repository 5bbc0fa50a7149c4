//! Frequency-domain Green's functions, the poles of `D(omega)`, and the
//! time-domain two-point and response functions.
//!
//! Fields are ordered `(q1, r1, q2, r2)` where `r_i` is the response field
//! conjugate to `q_i`. Time-domain functions use
//! `G(t) = (1/2pi) Int G(omega) exp(+i omega t) d omega`, under which
//! `G^i_j(t) = E[q_i(tau) q_j(tau + t)]` and response functions vanish for `t > 0`.

use std::io::Write;

use nalgebra::Matrix4;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::poly::{self, C64};
use crate::stability::drift_eigenvalues;

/// Relative pole separation below which residues are refused.
pub const DEGENERATE_TOL: f64 = 1e-9;
/// Relative `|D(omega)|` below which a real frequency is treated as a pole.
pub const POLE_ON_AXIS_TOL: f64 = 1e-12;

const I: C64 = C64::new(0.0, 1.0);

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Polynomials in `omega` (highest power first) for the pieces of `G^{-1}`.
struct Pieces {
    /// `A = m1 w^2 - i alpha w - k1 - lambda`
    a: [C64; 3],
    /// `A* = m1 w^2 + i alpha w - k1 - lambda`
    a_conj: [C64; 3],
    /// `B = m2 w^2 - k2 - lambda`
    b: [C64; 3],
    /// `D = A B - lambda^2`
    d: Vec<C64>,
    /// `D*`: `D` with conjugated coefficients
    d_conj: Vec<C64>,
}

fn polymul(p: &[C64], q: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); p.len() + q.len() - 1];
    for (i, &x) in p.iter().enumerate() {
        for (j, &y) in q.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn polyadd(p: &[C64], q: &[C64]) -> Vec<C64> {
    let n = p.len().max(q.len());
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (k, &x) in p.iter().enumerate() {
        out[n - p.len() + k] += x;
    }
    for (k, &x) in q.iter().enumerate() {
        out[n - q.len() + k] += x;
    }
    out
}

fn polyscale(p: &[C64], s: C64) -> Vec<C64> {
    p.iter().map(|&x| x * s).collect()
}

impl Pieces {
    fn new(p: &SystemParams) -> Self {
        let (m1, m2, l) = (p.osc1.mass, p.osc2.mass, p.coupling);
        let k1 = p.osc1.spring_constant + l;
        let k2 = p.osc2.spring_constant + l;
        let al = p.osc1.damping;
        let a = [c(m1), C64::new(0.0, -al), c(-k1)];
        let a_conj = [c(m1), C64::new(0.0, al), c(-k1)];
        let b = [c(m2), c(0.0), c(-k2)];
        let d = polyadd(&polymul(&a, &b), &[c(-l * l)]);
        let d_conj = d.iter().map(|z| z.conj()).collect();
        Self { a, a_conj, b, d, d_conj }
    }
}

/// Denominator `D(omega)` coefficients, highest power first.
pub fn denominator(params: &SystemParams) -> Vec<C64> {
    Pieces::new(params).d
}

/// Denominator `D(omega)*` (coefficients conjugated, `omega` untouched).
pub fn denominator_conj(params: &SystemParams) -> Vec<C64> {
    Pieces::new(params).d_conj
}

/// The MSR kernel `G^{-1}(omega)`.
pub fn greens_inverse(params: &SystemParams, omega: f64) -> Matrix4<C64> {
    let pc = Pieces::new(params);
    let w = c(omega);
    let a = poly::eval(&pc.a, w);
    let ac = poly::eval(&pc.a_conj, w);
    let b = poly::eval(&pc.b, w);
    let l = c(params.coupling);
    let z = c(0.0);
    let (d1, d2) = (c(params.osc1.diffusion), c(params.osc2.diffusion));
    #[rustfmt::skip]
    let m = Matrix4::new(
        z,  ac,  z, l,
        a,  -d1, l, z,
        z,  l,   z, b,
        l,  z,   b, -d2,
    );
    m
}

/// `G(omega)` evaluated from its closed-form entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreensFrequency {
    pub omega: f64,
    /// Full matrix in field order, `matrix[(j, i)] = G^i_j`.
    pub matrix: Matrix4<C64>,
    pub d: C64,
    pub d_conj: C64,
}

impl GreensFrequency {
    pub fn g11(&self) -> f64 {
        self.matrix[(0, 0)].re
    }
    pub fn g22(&self) -> f64 {
        self.matrix[(2, 2)].re
    }
    pub fn g12(&self) -> C64 {
        self.matrix[(2, 0)]
    }
    pub fn g21(&self) -> C64 {
        self.matrix[(0, 2)]
    }
    /// `G^1_{r1}`, retarded partner of `q1`.
    pub fn r11(&self) -> C64 {
        self.matrix[(1, 0)]
    }
    pub fn r22(&self) -> C64 {
        self.matrix[(3, 2)]
    }
    pub fn r21(&self) -> C64 {
        self.matrix[(1, 2)]
    }
}

pub fn greens(params: &SystemParams, omega: f64) -> Result<GreensFrequency> {
    params.validate()?;
    let pc = Pieces::new(params);
    let w = c(omega);
    let a = poly::eval(&pc.a, w);
    let ac = poly::eval(&pc.a_conj, w);
    let b = poly::eval(&pc.b, w);
    let d = poly::eval(&pc.d, w);
    let dc = poly::eval(&pc.d_conj, w);
    let l = params.coupling;
    let scale = (a.norm() * b.norm()).max(l * l).max(f64::MIN_POSITIVE);
    if d.norm() <= POLE_ON_AXIS_TOL * scale {
        return Err(Error::PoleOnAxis { omega, magnitude: d.norm() });
    }
    let (d1, d2) = (params.osc1.diffusion, params.osc2.diffusion);
    let dd = d * dc;
    let lc = c(l);
    let g11 = (b * b * d1 + l * l * d2) / dd;
    let g22 = (a * ac * d2 + l * l * d1) / dd;
    let g12 = -lc * (b * d1 + a * d2) / dd;
    let g21 = -lc * (b * d1 + ac * d2) / dd;
    let z = c(0.0);
    #[rustfmt::skip]
    let matrix = Matrix4::new(
        g11,         b / d,  g21,       -lc / d,
        b / dc,      z,      -lc / dc,  z,
        g12,         -lc / d, g22,      a / d,
        -lc / dc,    z,      ac / dc,   z,
    );
    Ok(GreensFrequency { omega, matrix, d, d_conj: dc })
}

/// The two first-quadrant roots of `D(omega)`. Their reflections `-Omega*`
/// complete the roots of `D`; conjugates give the roots of `D*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoleSet {
    /// Pole continuing the damped oscillator (larger imaginary part).
    pub omega1: C64,
    /// Pole continuing the frictionless oscillator.
    pub omega2: C64,
}

impl PoleSet {
    pub fn omega_tilde(&self) -> [f64; 2] {
        [self.omega1.re, self.omega2.re]
    }

    pub fn gamma_tilde(&self) -> [f64; 2] {
        [self.omega1.im, self.omega2.im]
    }

    /// `[Omega1, Omega2, -Omega1*, -Omega2*]`, the roots of `D`.
    pub fn roots_of_d(&self) -> [C64; 4] {
        [self.omega1, self.omega2, -self.omega1.conj(), -self.omega2.conj()]
    }

    /// Conjugates of [`PoleSet::roots_of_d`], the roots of `D*`.
    pub fn roots_of_d_conj(&self) -> [C64; 4] {
        self.roots_of_d().map(|z| z.conj())
    }

    /// Largest `|D(r)| / |D'(r)|` over the roots of `D` and `D*`, i.e. the
    /// Newton distance of each listed pole from a true root.
    pub fn max_root_error(&self, params: &SystemParams) -> f64 {
        let pc = Pieces::new(params);
        let err = |coef: &[C64], r: C64| {
            let (p, dp) = poly::eval_with_derivative(coef, r);
            p.norm() / dp.norm().max(f64::MIN_POSITIVE)
        };
        let a = self.roots_of_d().iter().map(|&r| err(&pc.d, r)).fold(0.0, f64::max);
        let b = self.roots_of_d_conj().iter().map(|&r| err(&pc.d_conj, r)).fold(0.0, f64::max);
        a.max(b)
    }
}

fn require_damped_coupled(params: &SystemParams) -> Result<()> {
    params.validate()?;
    if params.coupling == 0.0 {
        return Err(Error::CouplingZero);
    }
    if params.gamma1() <= 0.0 {
        return Err(Error::NotStable { min_real_part: 0.0 });
    }
    Ok(())
}

/// All four roots of `D(omega)`, checked to lie strictly in the upper half plane.
fn roots_d(params: &SystemParams) -> Result<Vec<C64>> {
    let pc = Pieces::new(params);
    let roots = poly::roots(&pc.d).ok_or_else(|| Error::ClassificationFailure("root solve failed".into()))?;
    let scale = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let min_im = roots.iter().map(|r| r.im).fold(f64::INFINITY, f64::min);
    if min_im <= 8.0 * f64::EPSILON * scale {
        return Err(Error::NotStable { min_real_part: min_im });
    }
    Ok(roots)
}

/// Exact poles from the companion matrix of `D(omega)`.
pub fn find_poles(params: &SystemParams) -> Result<PoleSet> {
    require_damped_coupled(params)?;
    let roots = roots_d(params)?;
    let scale = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let tol = 1e-10 * scale;
    let mut right: Vec<C64> = roots.iter().copied().filter(|r| r.re > tol).collect();
    let left = roots.iter().filter(|r| r.re < -tol).count();
    if right.len() != 2 || left != 2 {
        return Err(Error::ClassificationFailure(format!(
            "expected two roots in each upper quadrant, got {} right and {} left (roots {:?})",
            right.len(),
            left,
            roots
        )));
    }
    right.sort_by(|a, b| b.im.total_cmp(&a.im));
    let all: Vec<C64> = roots.iter().copied().chain(roots.iter().map(|r| r.conj())).collect();
    let sep = poly::min_separation(&all);
    if sep < DEGENERATE_TOL * scale {
        return Err(Error::DegeneratePoles { separation: sep });
    }
    let set = PoleSet { omega1: right[0], omega2: right[1] };
    let err = set.max_root_error(params);
    if err > 1e-9 * scale {
        return Err(Error::ClassificationFailure(format!("roots are not reflection symmetric (error {err:e})")));
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PerturbativeOrder {
    First,
    Second,
}

/// Poles expanded in the coupling around the uncoupled values
/// `Omega1 = sqrt(w1^2 - g^2/4) + i g/2`, `Omega2 = w2`.
pub fn perturbative_poles(params: &SystemParams, order: PerturbativeOrder) -> Result<PoleSet> {
    params.validate()?;
    let (m1, m2, l) = (params.osc1.mass, params.osc2.mass, params.coupling);
    let (w1s, w2s) = (params.osc1.omega_sq(), params.osc2.omega_sq());
    let g = params.gamma1();
    let w2 = w2s.sqrt();
    let nu_sq = w1s - g * g / 4.0;
    if nu_sq <= 0.0 {
        return Err(Error::OverdampedUnsupported { omega1: w1s.sqrt(), half_gamma: g / 2.0 });
    }
    if w2 <= 0.0 {
        return Err(Error::param("k2", "perturbative poles need w2 > 0"));
    }
    let nu = nu_sq.sqrt();
    let x = (w1s - w2s).powi(2) + g * g * w2s;
    let (dw1, dg1, dw2, dg2) = match order {
        PerturbativeOrder::First => (l / (2.0 * m1 * nu), 0.0, l / (2.0 * m2 * w2), 0.0),
        PerturbativeOrder::Second => {
            let dw1 = l / (2.0 * m1 * nu)
                * (1.0 + l / (m2 * x) * (w1s - w2s - g * g / 2.0 - m2 / (4.0 * m1) * x / nu_sq));
            let dg = l * l * g / (2.0 * m1 * m2 * x);
            let dw2 = l / (2.0 * m2 * w2) * (1.0 - l / (m1 * x) * (m1 / (4.0 * m2) * x / w2s + w1s - w2s));
            (dw1, -dg, dw2, dg)
        }
    };
    Ok(PoleSet { omega1: C64::new(nu + dw1, g / 2.0 + dg1), omega2: C64::new(w2 + dw2, dg2) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CorrelatorPair {
    /// `E[q1(tau) q1(tau+t)]`
    Q1Q1,
    /// `E[q2(tau) q2(tau+t)]`
    Q2Q2,
    /// `E[q1(tau) q2(tau+t)]`
    Q1Q2,
    /// Response of `q1` to a kick on `p1`
    Q1R1,
    /// Response of `q2` to a kick on `p2`
    Q2R2,
    /// Response of `q2` to a kick on `p1`
    Q2R1,
}

impl CorrelatorPair {
    pub const ALL: [CorrelatorPair; 6] = [Self::Q1Q1, Self::Q2Q2, Self::Q1Q2, Self::Q1R1, Self::Q2R2, Self::Q2R1];
    pub const SYMMETRIC: [CorrelatorPair; 3] = [Self::Q1Q1, Self::Q2Q2, Self::Q1Q2];

    pub fn label(&self) -> &'static str {
        match self {
            Self::Q1Q1 => "q1q1",
            Self::Q2Q2 => "q2q2",
            Self::Q1Q2 => "q1q2",
            Self::Q1R1 => "q1r1",
            Self::Q2R2 => "q2r2",
            Self::Q2R1 => "q2r1",
        }
    }

    pub fn is_response(&self) -> bool {
        matches!(self, Self::Q1R1 | Self::Q2R2 | Self::Q2R1)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.label() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CorrelatorMethod {
    ExactResidue,
    SmallLambda,
    Fft,
}

impl CorrelatorMethod {
    pub fn label(&self) -> &'static str {
        match self {
            Self::ExactResidue => "exact",
            Self::SmallLambda => "small_lambda",
            Self::Fft => "fft",
        }
    }
}

/// Two-point functions sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelatorTable {
    pub times: Vec<f64>,
    pub pairs: Vec<CorrelatorPair>,
    /// `values[k][n]` is pair `pairs[k]` at `times[n]`.
    pub values: Vec<Vec<f64>>,
    pub method: CorrelatorMethod,
}

impl CorrelatorTable {
    pub fn get(&self, pair: CorrelatorPair) -> Option<&[f64]> {
        self.pairs.iter().position(|&p| p == pair).map(|k| self.values[k].as_slice())
    }

    /// Long-format CSV with columns `t, pair, value, method`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Config(format!("csv output: {e}"));
        wr.write_record(["t", "pair", "value", "method"]).map_err(io)?;
        for (k, pair) in self.pairs.iter().enumerate() {
            for (n, &t) in self.times.iter().enumerate() {
                wr.write_record([
                    format!("{t:.16e}"),
                    pair.label().to_string(),
                    format!("{:.16e}", self.values[k][n]),
                    self.method.label().to_string(),
                ])
                .map_err(io)?;
            }
        }
        wr.flush().map_err(|e| Error::Config(format!("csv output: {e}")))?;
        Ok(())
    }
}

/// Residue expansion `sum_r w_r exp(i r t)` on each side of `t = 0`.
struct Residues {
    positive: Vec<(C64, C64)>,
    negative: Vec<(C64, C64)>,
}

impl Residues {
    fn eval(&self, t: f64) -> f64 {
        let terms = if t >= 0.0 { &self.positive } else { &self.negative };
        terms.iter().map(|&(r, w)| (w * (I * r * t).exp()).re).sum()
    }
}

fn symmetric_residues(num: &[C64], pc: &Pieces, roots: &[C64]) -> Residues {
    let dd = poly::derivative(&pc.d);
    let ddc = poly::derivative(&pc.d_conj);
    let positive = roots
        .iter()
        .map(|&r| (r, I * poly::eval(num, r) / (poly::eval(&dd, r) * poly::eval(&pc.d_conj, r))))
        .collect();
    let negative = roots
        .iter()
        .map(|r| r.conj())
        .map(|r| (r, -I * poly::eval(num, r) / (poly::eval(&pc.d, r) * poly::eval(&ddc, r))))
        .collect();
    Residues { positive, negative }
}

fn response_residues(num: &[C64], pc: &Pieces, roots: &[C64]) -> Residues {
    let ddc = poly::derivative(&pc.d_conj);
    let negative = roots
        .iter()
        .map(|r| r.conj())
        .map(|r| (r, -I * poly::eval(num, r) / poly::eval(&ddc, r)))
        .collect();
    Residues { positive: Vec::new(), negative }
}

fn numerator(params: &SystemParams, pc: &Pieces, pair: CorrelatorPair) -> Vec<C64> {
    let l = params.coupling;
    let (d1, d2) = (params.osc1.diffusion, params.osc2.diffusion);
    match pair {
        CorrelatorPair::Q1Q1 => polyadd(&polyscale(&polymul(&pc.b, &pc.b), c(d1)), &[c(l * l * d2)]),
        CorrelatorPair::Q2Q2 => polyadd(&polyscale(&polymul(&pc.a, &pc.a_conj), c(d2)), &[c(l * l * d1)]),
        CorrelatorPair::Q1Q2 => polyscale(&polyadd(&polyscale(&pc.b, c(d1)), &polyscale(&pc.a, c(d2))), c(-l)),
        CorrelatorPair::Q1R1 => pc.b.to_vec(),
        CorrelatorPair::Q2R2 => pc.a_conj.to_vec(),
        CorrelatorPair::Q2R1 => vec![c(-l)],
    }
}

/// Time-domain correlators by summing residues at the exact poles.
pub fn correlators_exact(params: &SystemParams, t_grid: &[f64]) -> Result<CorrelatorTable> {
    require_damped_coupled(params)?;
    let roots = roots_d(params)?;
    let scale = roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let all: Vec<C64> = roots.iter().copied().chain(roots.iter().map(|r| r.conj())).collect();
    let sep = poly::min_separation(&all);
    if sep < DEGENERATE_TOL * scale {
        return Err(Error::DegeneratePoles { separation: sep });
    }
    let pc = Pieces::new(params);
    let pairs = CorrelatorPair::ALL.to_vec();
    let values = pairs
        .iter()
        .map(|&pair| {
            let num = numerator(params, &pc, pair);
            let res = if pair.is_response() {
                response_residues(&num, &pc, &roots)
            } else {
                symmetric_residues(&num, &pc, &roots)
            };
            t_grid.par_iter().map(|&t| if pair.is_response() && t >= 0.0 { 0.0 } else { res.eval(t) }).collect()
        })
        .collect();
    Ok(CorrelatorTable { times: t_grid.to_vec(), pairs, values, method: CorrelatorMethod::ExactResidue })
}

/// Leading small-coupling correlators. With `identical` the single-frequency
/// forms for `m1 = m2`, `w1 = w2` are used; otherwise the general forms.
pub fn correlators_small_lambda(params: &SystemParams, t_grid: &[f64], identical: bool) -> Result<CorrelatorTable> {
    params.validate()?;
    let l = params.coupling;
    if l == 0.0 {
        return Err(Error::CouplingZero);
    }
    let (m1, m2) = (params.osc1.mass, params.osc2.mass);
    let (w1s, w2s) = (params.osc1.omega_sq(), params.osc2.omega_sq());
    let (w1, w2) = (w1s.sqrt(), w2s.sqrt());
    let (d1, d2) = (params.osc1.diffusion, params.osc2.diffusion);
    let g = params.gamma1();
    if g <= 0.0 {
        return Err(Error::NotStable { min_real_part: 0.0 });
    }
    let nu_sq = w1s - g * g / 4.0;
    if nu_sq <= 0.0 {
        return Err(Error::OverdampedUnsupported { omega1: w1, half_gamma: g / 2.0 });
    }
    if identical && !params.is_identical() {
        return Err(Error::NotIdentical { m1, m2, w1, w2 });
    }
    let nu = nu_sq.sqrt();
    let damped = |t: f64| {
        let a = t.abs();
        (-g / 2.0 * a).exp() * ((nu * a).cos() + g / (2.0 * nu) * (nu * a).sin())
    };
    let resp1 = |t: f64| if t < 0.0 { (g / 2.0 * t).exp() * (nu * t).sin() / (m1 * nu) } else { 0.0 };
    let resp2 = |t: f64| if t < 0.0 { (w2 * t).sin() / (m2 * w2) } else { 0.0 };

    type Curve<'a> = Box<dyn Fn(f64) -> f64 + Sync + 'a>;
    let (g11, g22, g12): (Curve<'_>, Curve<'_>, Curve<'_>) =
        if identical {
            let (m, w) = (m2, w2);
            (
                Box::new(move |t: f64| (d1 * damped(t) + d2 * (w * t.abs()).cos()) / (2.0 * g * w * w * m * m)),
                Box::new(move |t: f64| d2 / 2.0 * g / (l * l) * (w * t.abs()).cos()),
                Box::new(move |t: f64| -d2 / (2.0 * l * w * m) * (w * t).sin()),
            )
        } else {
            let x = (w1s - w2s).powi(2) + g * g * w2s;
            (
                Box::new(move |t: f64| {
                    (d1 / (m1 * m1 * w1s) * damped(t) + d2 / (m1 * m2 * w2s) * (w2 * t.abs()).cos()) / (2.0 * g)
                }),
                Box::new(move |t: f64| d2 / (2.0 * g * w2s) * m1 / m2 * x / (l * l) * (w2 * t.abs()).cos()),
                Box::new(move |t: f64| {
                    d2 / (2.0 * m2 * w2 * l) * (-(w2 * t).sin() - (w2s - w1s) / (g * w2) * (w2 * t).cos())
                }),
            )
        };
    let pairs = CorrelatorPair::ALL.to_vec();
    let values = pairs
        .iter()
        .map(|pair| {
            t_grid
                .iter()
                .map(|&t| match pair {
                    CorrelatorPair::Q1Q1 => g11(t),
                    CorrelatorPair::Q2Q2 => g22(t),
                    CorrelatorPair::Q1Q2 => g12(t),
                    CorrelatorPair::Q1R1 => resp1(t),
                    CorrelatorPair::Q2R2 => resp2(t),
                    CorrelatorPair::Q2R1 => 0.0,
                })
                .collect()
        })
        .collect();
    Ok(CorrelatorTable { times: t_grid.to_vec(), pairs, values, method: CorrelatorMethod::SmallLambda })
}

/// Settings for [`correlators_fft`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FftOptions {
    /// Frequency cutoff as a multiple of the largest pole modulus.
    pub cutoff_factor: f64,
    /// Number of slowest decay times the period must cover beyond `t_max`.
    pub decay_times: f64,
    /// Largest allowed transform length.
    pub max_len: usize,
}

impl Default for FftOptions {
    fn default() -> Self {
        Self { cutoff_factor: 16.0, decay_times: 18.0, max_len: 1 << 24 }
    }
}

/// Symmetric correlators on `|t| <= t_max` by direct quadrature of
/// `G(omega)` with an FFT. The `omega^-4` tails of the diagonal entries are
/// subtracted analytically before transforming.
pub fn correlators_fft(params: &SystemParams, t_max: f64, opts: FftOptions) -> Result<CorrelatorTable> {
    require_damped_coupled(params)?;
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::param("t_max", "must be finite and non-negative"));
    }
    let ev = drift_eigenvalues(params)?;
    let rate = ev.iter().map(|e| e.re).fold(f64::INFINITY, f64::min);
    let spread = ev.iter().map(|e| e.norm()).fold(0.0, f64::max);
    if rate <= 0.0 {
        return Err(Error::NotStable { min_real_part: rate });
    }
    let w_cut = opts.cutoff_factor * spread;
    let period = 2.0 * t_max + opts.decay_times / rate;
    let n = ((w_cut * period / std::f64::consts::PI).ceil() as usize).next_power_of_two().max(64);
    if n > opts.max_len {
        return Err(Error::Config(format!("FFT length {n} exceeds the limit {}", opts.max_len)));
    }
    let dw = 2.0 * w_cut / n as f64;
    let w_cut = n as f64 * dw / 2.0;

    let (m1, m2) = (params.osc1.mass, params.osc2.mass);
    let (d1, d2) = (params.osc1.diffusion, params.osc2.diffusion);
    let a = spread;
    let tail = |w: f64| 1.0 / (w * w + a * a).powi(2);
    let tail_t = |t: f64| (1.0 + a * t.abs()) * (-a * t.abs()).exp() / (4.0 * a.powi(3));
    let (c11, c22) = (d1 / (m1 * m1), d2 / (m2 * m2));

    let pc = Pieces::new(params);
    let l = params.coupling;
    let mut diag = vec![C64::new(0.0, 0.0); n];
    let mut cross = vec![C64::new(0.0, 0.0); n];
    diag.par_iter_mut().zip(cross.par_iter_mut()).enumerate().for_each(|(k, (dg, cr))| {
        let w = -w_cut + k as f64 * dw;
        let wc = c(w);
        let av = poly::eval(&pc.a, wc);
        let bv = poly::eval(&pc.b, wc);
        let dd = (av * bv - l * l).norm_sqr();
        let g11 = (bv.norm_sqr() * d1 + l * l * d2) / dd - c11 * tail(w);
        let g22 = (av.norm_sqr() * d2 + l * l * d1) / dd - c22 * tail(w);
        *dg = C64::new(g11, g22);
        *cr = -(bv * d1 + av * d2) * l / dd;
    });
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(n);
    fft.process(&mut diag);
    fft.process(&mut cross);

    let norm = dw / (2.0 * std::f64::consts::PI);
    let dt = std::f64::consts::PI / w_cut;
    let jmax = (t_max / dt).floor() as usize;
    let mut idx: Vec<(f64, usize)> = (1..=jmax).rev().map(|j| (-(j as f64) * dt, n - j)).collect();
    idx.extend((0..=jmax).map(|j| (j as f64 * dt, j)));
    let sign = |j: usize| if j.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut times = Vec::with_capacity(idx.len());
    let mut v11 = Vec::with_capacity(idx.len());
    let mut v22 = Vec::with_capacity(idx.len());
    let mut v12 = Vec::with_capacity(idx.len());
    for &(t, j) in &idx {
        let s = sign(j) * norm;
        times.push(t);
        v11.push(diag[j].re * s + c11 * tail_t(t));
        v22.push(diag[j].im * s + c22 * tail_t(t));
        v12.push(cross[j].re * s);
    }
    Ok(CorrelatorTable {
        times,
        pairs: CorrelatorPair::SYMMETRIC.to_vec(),
        values: vec![v11, v22, v12],
        method: CorrelatorMethod::Fft,
    })
}

/// Ratio of position spreads `sigma1/sigma2 = sqrt(G11(0)/G22(0))` at
/// leading order in the coupling; for identical oscillators this is
/// `(lambda/(g m w)) sqrt(1 + D1/D2)`.
pub fn sigma_ratio(params: &SystemParams) -> Result<f64> {
    params.validate()?;
    let l = params.coupling;
    if l == 0.0 {
        return Err(Error::CouplingZero);
    }
    let (d1, d2) = (params.osc1.diffusion, params.osc2.diffusion);
    if d2 <= 0.0 {
        return Err(Error::param("D2", "sigma ratio needs D2 > 0"));
    }
    let g = params.gamma1();
    if g <= 0.0 {
        return Err(Error::NotStable { min_real_part: 0.0 });
    }
    let (m1, m2) = (params.osc1.mass, params.osc2.mass);
    if params.is_identical() {
        let w = params.osc2.omega();
        return Ok(l / (g * m2 * w) * (1.0 + d1 / d2).sqrt());
    }
    let (w1s, w2s) = (params.osc1.omega_sq(), params.osc2.omega_sq());
    let x = (w1s - w2s).powi(2) + g * g * w2s;
    let g11 = (d1 / (m1 * m1 * w1s) + d2 / (m1 * m2 * w2s)) / (2.0 * g);
    let g22 = d2 * m1 * x / (2.0 * g * w2s * m2 * l * l);
    Ok((g11 / g22).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum InformationRoute {
    #[default]
    SmallLambda,
    Exact,
}

/// Normalised correlation `r_ij(t) = G^i_j(t) / sqrt(G^i_i(0) G^j_j(0))`.
pub fn correlation_coefficient(params: &SystemParams, pair: CorrelatorPair, t: f64, route: InformationRoute) -> Result<f64> {
    if pair.is_response() {
        return Err(Error::param("pair", "mutual information needs a position pair"));
    }
    let table = match route {
        InformationRoute::SmallLambda => correlators_small_lambda(params, &[0.0, t], params.is_identical())?,
        InformationRoute::Exact => correlators_exact(params, &[0.0, t])?,
    };
    let g11 = table.get(CorrelatorPair::Q1Q1).expect("present")[0];
    let g22 = table.get(CorrelatorPair::Q2Q2).expect("present")[0];
    let (num, den) = match pair {
        CorrelatorPair::Q1Q1 => (table.get(pair).expect("present")[1], g11),
        CorrelatorPair::Q2Q2 => (table.get(pair).expect("present")[1], g22),
        _ => (table.get(pair).expect("present")[1], (g11 * g22).sqrt()),
    };
    if den <= 0.0 {
        return Err(Error::param("diffusion", "zero variance, correlation undefined"));
    }
    Ok(num / den)
}

/// Gaussian mutual information `-1/2 log(1 - r^2)` in nats.
pub fn mutual_information(params: &SystemParams, pair: CorrelatorPair, t: f64, route: InformationRoute) -> Result<f64> {
    let r = correlation_coefficient(params, pair, t, route)?;
    information_from_correlation(r)
}

pub fn information_from_correlation(r: f64) -> Result<f64> {
    if !(r.abs() < 1.0 - 1e-12) {
        return Err(Error::PerfectCorrelation { r });
    }
    Ok(-0.5 * (-r * r).ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_drift_noise, OscillatorParams, P1, P2, Q1, Q2};
    use crate::steadystate::{closed_form_covariances, solve_lyapunov};

    fn general() -> SystemParams {
        SystemParams::new(
            OscillatorParams::new(1.3, 0.8, 0.7, 1.1).unwrap(),
            OscillatorParams::new(0.9, 1.2, 0.0, 0.6).unwrap(),
            0.3,
        )
        .unwrap()
    }

    fn fig1() -> SystemParams {
        SystemParams::natural_units(0.05, 1.0, 1.0).unwrap()
    }

    fn expm(m: &Matrix4<f64>) -> Matrix4<f64> {
        let norm = m.abs().max();
        let s = (norm.log2().ceil().max(0.0) as i32) + 4;
        let a = m / 2f64.powi(s);
        let mut term = Matrix4::identity();
        let mut out = Matrix4::identity();
        for k in 1..30 {
            term = term * a / k as f64;
            out += term;
        }
        for _ in 0..s {
            out = out * out;
        }
        out
    }

    #[test]
    fn closed_form_matches_numeric_inverse() {
        for p in [general(), fig1()] {
            for w in [-2.3, -0.4, 0.0, 0.77, 1.0, 5.0] {
                let g = greens(&p, w).unwrap().matrix;
                let inv = greens_inverse(&p, w).try_inverse().unwrap();
                let scale = inv.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for (x, y) in g.iter().zip(inv.iter()) {
                    assert!((x - y).norm() < 1e-10 * scale, "w={w}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn inverse_static_entry() {
        let p = general();
        assert_eq!(greens_inverse(&p, 0.0)[(0, 1)], c(-0.8 - 0.3));
    }

    #[test]
    fn decoupled_static_limit() {
        let o1 = OscillatorParams::new(1.0, 2.0, 1.0, 3.0).unwrap();
        let o2 = OscillatorParams::new(1.0, 1.5, 0.0, 1.0).unwrap();
        let p = SystemParams::new(o1, o2, 0.0).unwrap();
        let g = greens(&p, 0.0).unwrap();
        assert!((g.g11() - 3.0 / 4.0).abs() < 1e-14);
    }

    #[test]
    fn poles_are_drift_eigenvalues_rotated() {
        let p = general();
        let poles = find_poles(&p).unwrap();
        let ev = drift_eigenvalues(&p).unwrap();
        for r in poles.roots_of_d() {
            assert!(ev.iter().any(|e| (I * e - r).norm() < 1e-10));
        }
        assert!(poles.max_root_error(&p) < 1e-12);
    }

    #[test]
    fn identical_second_order_damping_shift() {
        let p = fig1();
        let pert = perturbative_poles(&p, PerturbativeOrder::Second).unwrap();
        assert!((pert.omega2.im - 0.00125).abs() < 1e-15);
        assert!((pert.omega1.im - (0.5 - 0.00125)).abs() < 1e-15);
        let first = perturbative_poles(&p, PerturbativeOrder::First).unwrap();
        assert!((first.omega2.re - 1.025).abs() < 1e-15);
        let exact = find_poles(&p).unwrap();
        assert!((exact.omega2.im - 0.00125).abs() < 0.05f64.powi(3));
    }

    #[test]
    fn overdamped_perturbation_refused() {
        let p = SystemParams::identical(1.0, 1.0, 3.0, 1.0, 1.0, 0.1).unwrap();
        assert!(matches!(perturbative_poles(&p, PerturbativeOrder::First), Err(Error::OverdampedUnsupported { .. })));
        assert!(correlators_exact(&p, &[0.0, 1.0]).is_ok());
    }

    #[test]
    fn exact_correlators_match_matrix_exponential() {
        let p = general();
        let dn = assemble_drift_noise(&p).unwrap();
        let c = solve_lyapunov(&dn).unwrap().into_inner();
        let ts = [-3.1, -0.7, 0.0, 0.4, 2.5];
        let tab = correlators_exact(&p, &ts).unwrap();
        for (n, &t) in ts.iter().enumerate() {
            let ct = if t >= 0.0 { c * expm(&(-dn.theta.transpose() * t)) } else { expm(&(dn.theta * t)) * c };
            let prop = expm(&(dn.theta * t.min(0.0)));
            let check = |pair, v: f64| {
                let got = tab.get(pair).unwrap()[n];
                assert!((got - v).abs() < 1e-10 * c.amax(), "{pair:?} t={t}: {got} vs {v}");
            };
            check(CorrelatorPair::Q1Q1, ct[(Q1, Q1)]);
            check(CorrelatorPair::Q2Q2, ct[(Q2, Q2)]);
            check(CorrelatorPair::Q1Q2, ct[(Q1, Q2)]);
            let resp = |i: usize, j: usize| if t < 0.0 { -prop[(i, j)] } else { 0.0 };
            check(CorrelatorPair::Q1R1, resp(Q1, P1));
            check(CorrelatorPair::Q2R2, resp(Q2, P2));
            check(CorrelatorPair::Q2R1, resp(Q2, P1));
        }
    }

    #[test]
    fn equal_time_exact_matches_closed_form() {
        let p = general();
        let tab = correlators_exact(&p, &[0.0]).unwrap();
        let cf = closed_form_covariances(&p).unwrap();
        assert!((tab.get(CorrelatorPair::Q1Q1).unwrap()[0] - cf.get(Q1, Q1)).abs() < 1e-12);
        assert!((tab.get(CorrelatorPair::Q2Q2).unwrap()[0] - cf.get(Q2, Q2)).abs() < 1e-12);
        assert!((tab.get(CorrelatorPair::Q1Q2).unwrap()[0] - cf.get(Q1, Q2)).abs() < 1e-12);
    }

    #[test]
    fn fft_matches_residues() {
        let p = general();
        let fft = correlators_fft(&p, 5.0, FftOptions::default()).unwrap();
        let exact = correlators_exact(&p, &fft.times).unwrap();
        for pair in CorrelatorPair::SYMMETRIC {
            let (a, b) = (fft.get(pair).unwrap(), exact.get(pair).unwrap());
            let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(err < 1e-6 * scale, "{pair:?}: {err}");
        }
    }

    #[test]
    fn small_lambda_general_reduces_to_identical() {
        let p = SystemParams::identical(1.3, 0.9, 0.7, 0.4, 1.2, 0.02).unwrap();
        let ts = [-2.0, 0.0, 0.5, 3.0];
        let a = correlators_small_lambda(&p, &ts, true).unwrap();
        let b = correlators_small_lambda(&p, &ts, false).unwrap();
        for (x, y) in a.values.iter().flatten().zip(b.values.iter().flatten()) {
            assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
        }
        let g = a.get(CorrelatorPair::Q2Q2).unwrap()[1];
        assert!((g - 1.2 * 0.7 / (2.0 * 0.02f64.powi(2))).abs() < 1e-9);
        assert_eq!(a.get(CorrelatorPair::Q1Q2).unwrap()[1], 0.0);
    }

    #[test]
    fn small_lambda_requires_identical_flag_consistency() {
        assert!(matches!(correlators_small_lambda(&general(), &[0.0], true), Err(Error::NotIdentical { .. })));
        let p = SystemParams::natural_units(0.0, 1.0, 1.0).unwrap();
        assert_eq!(correlators_small_lambda(&p, &[0.0], true), Err(Error::CouplingZero));
    }

    #[test]
    fn sigma_ratio_values() {
        let r = sigma_ratio(&fig1()).unwrap();
        assert!((r - 0.05 * 2f64.sqrt()).abs() < 1e-15);
        let p = SystemParams::natural_units(0.05, 0.0, 1.0).unwrap();
        assert!((sigma_ratio(&p).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn information_zero_and_perfect() {
        let p = fig1();
        let t = std::f64::consts::FRAC_PI_2;
        let i = mutual_information(&p, CorrelatorPair::Q2Q2, t, InformationRoute::SmallLambda).unwrap();
        assert!(i.abs() < 1e-12);
        assert!(matches!(
            mutual_information(&p, CorrelatorPair::Q2Q2, 0.0, InformationRoute::SmallLambda),
            Err(Error::PerfectCorrelation { .. })
        ));
        assert!(mutual_information(&p, CorrelatorPair::Q1Q1, 3.0, InformationRoute::Exact).unwrap() > 0.0);
    }
}
