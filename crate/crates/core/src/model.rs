//! Parameter types and the Ornstein-Uhlenbeck form of the coupled system.
//!
//! The state vector is always ordered `(q1, p1, q2, p2)`. Oscillator 1 is
//! damped, oscillator 2 is frictionless, and the two are coupled through the
//! potential `lambda (q1 - q2)^2 / 2`. All quantities are SI; the diffusion
//! constants carry units of N^2 s, following from unit white noise
//! `<xi(t) xi(t')> = delta(t - t')`.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels for the state ordering used by every module.
pub const STATE_LABELS: [&str; 4] = ["q1", "p1", "q2", "p2"];

pub const Q1: usize = 0;
pub const P1: usize = 1;
pub const Q2: usize = 2;
pub const P2: usize = 3;

/// A single oscillator: mass `m` (kg), spring constant `kappa` (N/m),
/// friction `alpha` (kg/s) and diffusion `D` (N^2 s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub mass: f64,
    pub spring_constant: f64,
    pub damping: f64,
    pub diffusion: f64,
}

impl OscillatorParams {
    pub fn new(mass: f64, spring_constant: f64, damping: f64, diffusion: f64) -> Result<Self> {
        let osc = Self { mass, spring_constant, damping, diffusion };
        osc.validate()?;
        Ok(osc)
    }

    /// Oscillator specified by natural frequency and damping rate instead of
    /// spring constant and friction.
    pub fn from_rates(mass: f64, omega: f64, gamma: f64, diffusion: f64) -> Result<Self> {
        Self::new(mass, mass * omega * omega, mass * gamma, diffusion)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("mass", self.mass)?;
        check_finite("spring_constant", self.spring_constant)?;
        check_finite("damping", self.damping)?;
        check_finite("diffusion", self.diffusion)?;
        if self.mass <= 0.0 {
            return Err(Error::param("mass", format!("must be > 0, got {}", self.mass)));
        }
        for (name, v) in [
            ("spring_constant", self.spring_constant),
            ("damping", self.damping),
            ("diffusion", self.diffusion),
        ] {
            if v < 0.0 {
                return Err(Error::param(name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Natural frequency `sqrt(kappa / m)` in 1/s.
    pub fn omega(&self) -> f64 {
        (self.spring_constant / self.mass).sqrt()
    }

    pub fn omega_sq(&self) -> f64 {
        self.spring_constant / self.mass
    }

    /// Damping rate `alpha / m` in 1/s.
    pub fn gamma(&self) -> f64 {
        self.damping / self.mass
    }
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {v}")))
    }
}

/// The two-oscillator system. Serialized with the flat keys
/// `m1, k1, alpha, D1, m2, k2, D2, lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlatParams", into = "FlatParams")]
pub struct SystemParams {
    pub osc1: OscillatorParams,
    pub osc2: OscillatorParams,
    pub coupling: f64,
}

impl SystemParams {
    pub fn new(osc1: OscillatorParams, osc2: OscillatorParams, coupling: f64) -> Result<Self> {
        let p = Self { osc1, osc2, coupling };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.osc1.validate()?;
        self.osc2.validate()?;
        check_finite("lambda", self.coupling)?;
        if self.coupling < 0.0 {
            return Err(Error::param("lambda", format!("must be >= 0, got {}", self.coupling)));
        }
        if self.osc2.damping != 0.0 {
            return Err(Error::param("alpha2", "oscillator 2 must be undamped"));
        }
        if self.osc1.spring_constant == 0.0 || self.osc2.spring_constant == 0.0 {
            log::debug!("zero spring constant: steady state decided by the stability check");
        }
        Ok(())
    }

    /// Identical oscillators `m1 = m2 = m`, `w1 = w2 = omega`, with damping rate
    /// `gamma` on oscillator 1.
    pub fn identical(m: f64, omega: f64, gamma: f64, d1: f64, d2: f64, lambda: f64) -> Result<Self> {
        Self::new(
            OscillatorParams::from_rates(m, omega, gamma, d1)?,
            OscillatorParams::from_rates(m, omega, 0.0, d2)?,
            lambda,
        )
    }

    /// `m = omega = gamma = 1` for both oscillators (the sample-trajectory preset).
    pub fn natural_units(lambda: f64, d1: f64, d2: f64) -> Result<Self> {
        Self::identical(1.0, 1.0, 1.0, d1, d2, lambda)
    }

    pub fn gamma1(&self) -> f64 {
        self.osc1.gamma()
    }

    /// True when masses and frequencies agree to a relative `1e-12`.
    pub fn is_identical(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        close(self.osc1.mass, self.osc2.mass) && close(self.osc1.omega_sq(), self.osc2.omega_sq())
    }

    /// Hessian of `H = p1^2/2m1 + p2^2/2m2 + k1 q1^2/2 + k2 q2^2/2 + lambda (q1-q2)^2/2`.
    pub fn hamiltonian_matrix(&self) -> Matrix4<f64> {
        let (m1, m2, l) = (self.osc1.mass, self.osc2.mass, self.coupling);
        let (k1, k2) = (self.osc1.spring_constant, self.osc2.spring_constant);
        #[rustfmt::skip]
        let h = Matrix4::new(
            k1 + l, 0.0,      -l,     0.0,
            0.0,    1.0 / m1, 0.0,    0.0,
            -l,     0.0,      k2 + l, 0.0,
            0.0,    0.0,      0.0,    1.0 / m2,
        );
        h
    }

    pub fn energy(&self, z: &Vector4<f64>) -> f64 {
        0.5 * z.dot(&(self.hamiltonian_matrix() * z))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub(crate) struct FlatParams {
    m1: f64,
    k1: f64,
    alpha: f64,
    #[serde(rename = "D1")]
    d1: f64,
    m2: f64,
    k2: f64,
    #[serde(rename = "D2")]
    d2: f64,
    lambda: f64,
}

impl TryFrom<FlatParams> for SystemParams {
    type Error = Error;

    fn try_from(f: FlatParams) -> Result<Self> {
        SystemParams::new(
            OscillatorParams::new(f.m1, f.k1, f.alpha, f.d1)?,
            OscillatorParams::new(f.m2, f.k2, 0.0, f.d2)?,
            f.lambda,
        )
    }
}

impl From<SystemParams> for FlatParams {
    fn from(p: SystemParams) -> Self {
        FlatParams {
            m1: p.osc1.mass,
            k1: p.osc1.spring_constant,
            alpha: p.osc1.damping,
            d1: p.osc1.diffusion,
            m2: p.osc2.mass,
            k2: p.osc2.spring_constant,
            d2: p.osc2.diffusion,
            lambda: p.coupling,
        }
    }
}

/// Drift `theta` and noise `sigma` of `dz = -theta z dt + sigma dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftNoise {
    pub theta: Matrix4<f64>,
    pub sigma: Matrix4<f64>,
    /// Hessian of the conservative energy, used for energy diagnostics.
    pub hamiltonian: Matrix4<f64>,
}

impl DriftNoise {
    pub const STATE_ORDER: [&'static str; 4] = STATE_LABELS;

    /// `sigma sigma^T`.
    pub fn noise_covariance(&self) -> Matrix4<f64> {
        self.sigma * self.sigma.transpose()
    }

    pub fn energy(&self, z: &Vector4<f64>) -> f64 {
        0.5 * z.dot(&(self.hamiltonian * z))
    }
}

pub fn assemble_drift_noise(params: &SystemParams) -> Result<DriftNoise> {
    params.validate()?;
    let (o1, o2, l) = (&params.osc1, &params.osc2, params.coupling);
    #[rustfmt::skip]
    let theta = Matrix4::new(
        0.0,                      -1.0 / o1.mass,       0.0,                      0.0,
        o1.spring_constant + l,   o1.damping / o1.mass, -l,                       0.0,
        0.0,                      0.0,                  0.0,                      -1.0 / o2.mass,
        -l,                       0.0,                  o2.spring_constant + l,   0.0,
    );
    let sigma = Matrix4::from_diagonal(&Vector4::new(
        0.0,
        o1.diffusion.sqrt(),
        0.0,
        o2.diffusion.sqrt(),
    ));
    Ok(DriftNoise { theta, sigma, hamiltonian: params.hamiltonian_matrix() })
}

/// Monic characteristic quartic of `theta`, highest power first:
/// `[1, -g1, w1^2 + w2^2 + l/m1 + l/m2, -g1 (w2^2 + l/m2), w1^2 w2^2 + w2^2 l/m1 + w1^2 l/m2]`.
pub fn characteristic_polynomial(params: &SystemParams) -> [f64; 5] {
    let (m1, m2, l) = (params.osc1.mass, params.osc2.mass, params.coupling);
    let (w1s, w2s) = (params.osc1.omega_sq(), params.osc2.omega_sq());
    let g = params.gamma1();
    [
        1.0,
        -g,
        w1s + w2s + l / m1 + l / m2,
        -g * (w2s + l / m2),
        w1s * w2s + w2s * l / m1 + w1s * l / m2,
    ]
}
