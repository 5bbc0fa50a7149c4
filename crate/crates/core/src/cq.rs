//! Classical-quantum layer. A damped classical oscillator with diffusion `D`
//! is coupled to a quantum oscillator whose decoherence saturates the
//! trade-off `4 D D0 = 1`. For harmonic potentials the symmetrised hybrid
//! moments are those of the classical system with `D1 = D` and
//! `D2 = D0 lambda^2 hbar^2`.

use nalgebra::{Matrix2, Matrix4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{assemble_drift_noise, OscillatorParams, SystemParams, P1, P2, Q1, Q2};
use crate::steadystate::{closed_form_covariances, solve_lyapunov, CovarianceMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CQParams {
    /// Classical oscillator `(m_C, k_C, alpha, D)`.
    pub classical: OscillatorParams,
    pub quantum_mass: f64,
    pub quantum_spring_constant: f64,
    pub coupling: f64,
    /// Decoherence strength `D0`.
    pub decoherence: f64,
    /// Reduced Planck constant; natural units by default.
    pub hbar: f64,
}

impl CQParams {
    /// Saturated trade-off, `D0 = 1/(4D)`, with `hbar = 1`.
    pub fn new(classical: OscillatorParams, quantum_mass: f64, quantum_spring_constant: f64, coupling: f64) -> Result<Self> {
        classical.validate()?;
        let d = classical.diffusion;
        let p = Self {
            classical,
            quantum_mass,
            quantum_spring_constant,
            coupling,
            decoherence: if d > 0.0 { 1.0 / (4.0 * d) } else { f64::INFINITY },
            hbar: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Identical masses and frequencies `m`, `omega`; damping rate `gamma`.
    pub fn identical(m: f64, omega: f64, gamma: f64, diffusion: f64, coupling: f64) -> Result<Self> {
        Self::new(OscillatorParams::from_rates(m, omega, gamma, diffusion)?, m, m * omega * omega, coupling)
    }

    /// Explicit decoherence strength; must satisfy `4 D D0 >= 1`.
    pub fn with_decoherence(mut self, d0: f64) -> Result<Self> {
        let product = 4.0 * self.classical.diffusion * d0;
        if !(product >= 1.0) {
            return Err(Error::TradeoffViolation { product });
        }
        self.decoherence = d0;
        Ok(self)
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::param("hbar", "must be positive and finite"));
        }
        self.hbar = hbar;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.classical.validate()?;
        OscillatorParams::new(self.quantum_mass, self.quantum_spring_constant, 0.0, 0.0)?;
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(Error::param("lambda", "must be finite and >= 0"));
        }
        if self.coupling > 0.0 && self.classical.diffusion <= 0.0 {
            return Err(Error::param("D", "coupling requires D > 0 by the decoherence-diffusion trade-off"));
        }
        let product = 4.0 * self.classical.diffusion * self.decoherence;
        if self.coupling > 0.0 && !(product >= 1.0 - 1e-12) {
            return Err(Error::TradeoffViolation { product });
        }
        Ok(())
    }

    pub fn tradeoff_product(&self) -> f64 {
        4.0 * self.classical.diffusion * self.decoherence
    }

    pub fn quantum_omega(&self) -> f64 {
        (self.quantum_spring_constant / self.quantum_mass).sqrt()
    }

    /// Effective classical temperature `T_C = D / (2 alpha)`.
    pub fn temperature(&self) -> f64 {
        self.classical.diffusion / (2.0 * self.classical.damping)
    }

    /// Induced diffusion of the quantum momentum, `D0 lambda^2 hbar^2`.
    pub fn quantum_diffusion(&self) -> f64 {
        if self.coupling == 0.0 {
            return 0.0;
        }
        self.decoherence * self.coupling * self.coupling * self.hbar * self.hbar
    }

    fn is_identical(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        close(self.classical.mass, self.quantum_mass)
            && close(self.classical.spring_constant, self.quantum_spring_constant)
    }
}

/// The classical two-oscillator system whose symmetrised moments equal the hybrid ones.
pub fn map_to_classical(cq: &CQParams) -> Result<SystemParams> {
    cq.validate()?;
    SystemParams::new(
        cq.classical,
        OscillatorParams::new(cq.quantum_mass, cq.quantum_spring_constant, 0.0, cq.quantum_diffusion())?,
        cq.coupling,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Occupation {
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "T_C")]
    pub t_c: f64,
}

/// Leading-order occupation `N = (w/(2 T_C) + 2 T_C/w - 1) / 2` of the
/// quantum oscillator (`hbar = 1` units of `w`), with `T_C = D/(2 alpha)`.
pub fn occupation_number(cq: &CQParams) -> Result<Occupation> {
    cq.validate()?;
    if cq.classical.damping <= 0.0 {
        return Err(Error::param("alpha", "effective temperature needs alpha > 0"));
    }
    let t_c = cq.temperature();
    let w = cq.quantum_omega() * cq.hbar;
    Ok(Occupation { n: 0.5 * (w / (2.0 * t_c) + 2.0 * t_c / w - 1.0), t_c })
}

/// Occupation read off the exact mapped steady state,
/// `N = (<P^2>/(m w) + m w <Q^2>) / (2 hbar) - 1/2`.
pub fn keldysh_occupation(cq: &CQParams) -> Result<f64> {
    let c = hybrid_equal_time(cq)?;
    let (m, w) = (cq.quantum_mass, cq.quantum_omega());
    Ok((c.pp / (m * w) + m * w * c.qq) / (2.0 * cq.hbar) - 0.5)
}

/// Leading-order hybrid correlators for identical oscillators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridCorrelators {
    pub times: Vec<f64>,
    /// `<<q(0) q(t)>>`
    pub qq: Vec<f64>,
    /// Keldysh function `<<Q+(0) Q+(t)>>`
    pub keldysh: Vec<f64>,
    /// `<<q(0) q~(t)>>`, supported on `t < 0`
    pub classical_response: Vec<f64>,
    /// Imaginary part of `<<Q+(0) Q-(t)>>`, supported on `t < 0`
    pub quantum_response_imag: Vec<f64>,
}

impl HybridCorrelators {
    /// `<<Q-(0) Q-(t)>>`, identically zero.
    pub fn minus_minus(&self) -> Vec<f64> {
        vec![0.0; self.times.len()]
    }
}

pub fn hybrid_correlators(cq: &CQParams, t_grid: &[f64]) -> Result<HybridCorrelators> {
    cq.validate()?;
    let (m, w) = (cq.quantum_mass, cq.quantum_omega());
    if !cq.is_identical() {
        return Err(Error::NotIdentical { m1: cq.classical.mass, m2: m, w1: cq.classical.omega(), w2: w });
    }
    let g = cq.classical.gamma();
    let d = cq.classical.diffusion;
    if g <= 0.0 || d <= 0.0 {
        return Err(Error::param("alpha", "hybrid correlators need alpha > 0 and D > 0"));
    }
    let nu_sq = w * w - g * g / 4.0;
    if nu_sq <= 0.0 {
        return Err(Error::OverdampedUnsupported { omega1: w, half_gamma: g / 2.0 });
    }
    let nu = nu_sq.sqrt();
    let h2 = cq.hbar * cq.hbar;
    let scale = 1.0 / (2.0 * g * w * w * m * m);
    let mut out = HybridCorrelators {
        times: t_grid.to_vec(),
        qq: Vec::with_capacity(t_grid.len()),
        keldysh: Vec::with_capacity(t_grid.len()),
        classical_response: Vec::with_capacity(t_grid.len()),
        quantum_response_imag: Vec::with_capacity(t_grid.len()),
    };
    for &t in t_grid {
        let a = t.abs();
        let damped = (-g / 2.0 * a).exp() * ((nu * a).cos() + g / (2.0 * nu) * (nu * a).sin());
        out.qq.push(scale * d * damped);
        out.keldysh.push((g * h2 / (8.0 * d) + d * scale) * (w * a).cos());
        out.classical_response.push(if t < 0.0 { (g / 2.0 * t).exp() * (nu * t).sin() / (m * nu) } else { 0.0 });
        out.quantum_response_imag.push(if t < 0.0 { -(w * t).sin() / (m * w) } else { 0.0 });
    }
    Ok(out)
}

/// Equal-time symmetrised hybrid moments. Lower case is the classical
/// oscillator, upper case the quantum one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HybridEqualTime {
    /// `<<p^2>>`
    pub p2: f64,
    /// `<<P^2>>`
    #[serde(rename = "P2")]
    pub pp: f64,
    /// `<<q^2>>`
    pub q2: f64,
    /// `<<Q^2>>`
    #[serde(rename = "Q2")]
    pub qq: f64,
    /// `<<q Q>>`
    #[serde(rename = "qQ")]
    pub q_q: f64,
    /// `<<P q>>`
    #[serde(rename = "Pq")]
    pub pq: f64,
    /// `<<p Q>>`
    #[serde(rename = "pQ")]
    pub p_q: f64,
    /// `<<p P>>`
    #[serde(rename = "pP")]
    pub p_p: f64,
}

impl HybridEqualTime {
    fn from_covariance(c: &CovarianceMatrix) -> Self {
        Self {
            p2: c.get(P1, P1),
            pp: c.get(P2, P2),
            q2: c.get(Q1, Q1),
            qq: c.get(Q2, Q2),
            q_q: c.get(Q1, Q2),
            pq: c.get(Q1, P2),
            p_q: c.get(P1, Q2),
            p_p: c.get(P1, P2),
        }
    }

    /// The moments as a covariance in `(q, p, Q, P)` order.
    pub fn to_covariance(&self) -> CovarianceMatrix {
        let mut m = Matrix4::zeros();
        let mut set = |i: usize, j: usize, v: f64| {
            m[(i, j)] = v;
            m[(j, i)] = v;
        };
        set(Q1, Q1, self.q2);
        set(P1, P1, self.p2);
        set(Q2, Q2, self.qq);
        set(P2, P2, self.pp);
        set(Q1, Q2, self.q_q);
        set(Q1, P2, self.pq);
        set(P1, Q2, self.p_q);
        set(P1, P2, self.p_p);
        CovarianceMatrix::new(m).expect("finite moments")
    }
}

pub fn hybrid_equal_time(cq: &CQParams) -> Result<HybridEqualTime> {
    let p = map_to_classical(cq)?;
    Ok(HybridEqualTime::from_covariance(&closed_form_covariances(&p)?))
}

/// Same moments from the Lyapunov solve of the mapped system.
pub fn hybrid_equal_time_lyapunov(cq: &CQParams) -> Result<HybridEqualTime> {
    let p = map_to_classical(cq)?;
    Ok(HybridEqualTime::from_covariance(&solve_lyapunov(&assemble_drift_noise(&p)?)?))
}

/// High-temperature covariances of the hybrid state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HighTemperatureMoments {
    pub p2: f64,
    #[serde(rename = "P2")]
    pub pp: f64,
    pub q2: f64,
    #[serde(rename = "Q2")]
    pub qq: f64,
    #[serde(rename = "qQ")]
    pub q_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalReport {
    #[serde(rename = "T_C")]
    pub t_c: f64,
    pub high_temperature: HighTemperatureMoments,
    /// Classical Gibbs covariance at `beta = 1/T_C`.
    pub gibbs: CovarianceMatrix,
    pub hybrid: CovarianceMatrix,
    /// `max |hybrid_ij - gibbs_ij| / sqrt(gibbs_ii gibbs_jj)`.
    pub gibbs_deviation: f64,
    /// Same metric against the high-temperature forms (zeros where none are given).
    pub high_temperature_deviation: f64,
}

pub fn high_temperature_moments(cq: &CQParams) -> Result<HighTemperatureMoments> {
    cq.validate()?;
    if cq.coupling == 0.0 {
        return Err(Error::CouplingZero);
    }
    let t = cq.temperature();
    let (mc, mq, l) = (cq.classical.mass, cq.quantum_mass, cq.coupling);
    let (wc2, wq2) = (cq.classical.omega_sq(), cq.quantum_omega().powi(2));
    Ok(HighTemperatureMoments {
        p2: mc * t,
        pp: mq * t,
        q2: t / mc / (wq2 * (l / mc) / (l / mq + wq2) + wc2),
        qq: t / mq / (wc2 * (l / mq) / (l / mc + wc2) + wq2),
        q_q: t / mq / (wq2 + mc * wc2 / l * (wq2 + l / mq)),
    })
}

/// Covariance of `exp(-H / T)` for the coupled quadratic Hamiltonian.
pub fn gibbs_covariance(params: &SystemParams, temperature: f64) -> Result<CovarianceMatrix> {
    let (m1, m2, l) = (params.osc1.mass, params.osc2.mass, params.coupling);
    let k = Matrix2::new(params.osc1.spring_constant + l, -l, -l, params.osc2.spring_constant + l);
    let kinv = k.try_inverse().ok_or(Error::SingularSystem { pivot: k.determinant() })?;
    let mut c = Matrix4::zeros();
    c[(Q1, Q1)] = temperature * kinv[(0, 0)];
    c[(Q1, Q2)] = temperature * kinv[(0, 1)];
    c[(Q2, Q1)] = temperature * kinv[(1, 0)];
    c[(Q2, Q2)] = temperature * kinv[(1, 1)];
    c[(P1, P1)] = m1 * temperature;
    c[(P2, P2)] = m2 * temperature;
    CovarianceMatrix::new(c)
}

pub fn thermal_limit(cq: &CQParams) -> Result<ThermalReport> {
    let p = map_to_classical(cq)?;
    let t_c = cq.temperature();
    let high = high_temperature_moments(cq)?;
    let gibbs = gibbs_covariance(&p, t_c)?;
    let hybrid = hybrid_equal_time(cq)?.to_covariance();
    let mut ht = Matrix4::zeros();
    ht[(Q1, Q1)] = high.q2;
    ht[(P1, P1)] = high.p2;
    ht[(Q2, Q2)] = high.qq;
    ht[(P2, P2)] = high.pp;
    ht[(Q1, Q2)] = high.q_q;
    ht[(Q2, Q1)] = high.q_q;
    let ht = CovarianceMatrix::new(ht)?;
    Ok(ThermalReport {
        t_c,
        high_temperature: high,
        gibbs,
        hybrid,
        gibbs_deviation: gibbs.scaled_deviation(&hybrid),
        high_temperature_deviation: ht.scaled_deviation(&hybrid),
    })
}
