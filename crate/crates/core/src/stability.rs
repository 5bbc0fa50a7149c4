//! Steady-state existence: Routh-Hurwitz conditions on the characteristic
//! quartic, cross-checked against a dense eigenvalue solve of the drift.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::Serialize;

use crate::model::{assemble_drift_noise, characteristic_polynomial, SystemParams};
use crate::error::Result;

/// Individual Routh-Hurwitz quantities for `P(-theta) = theta^4 + a1 theta^3 + a2 theta^2 + a3 theta + a4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HurwitzDetail {
    /// `[1, a1, a2, a3, a4]`, all required positive.
    pub coefficients: [f64; 5],
    /// `a1 a2 - a3 = gamma1 (w1^2 + lambda/m1)`.
    pub delta2: f64,
    /// `a1 a2 a3 - a3^2 - a1^2 a4 = gamma1^2 lambda^2 / (m1 m2)`.
    pub delta3: f64,
    /// `(w2^2 + lambda/m2)^2 + lambda^2/m2^2`.
    pub reduced1: f64,
    /// `lambda^2 / m2^2`.
    pub reduced2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// Eigenvalues of the drift matrix, sorted by real part.
    pub eigenvalues: [Complex64; 4],
    pub min_real_part: f64,
    pub routh_hurwitz_pass: bool,
    /// `Some("marginal")` when the conditions fail; parameters are
    /// non-negative so failure always means a zero real part.
    pub reason: Option<String>,
    pub criteria: HurwitzDetail,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.routh_hurwitz_pass
    }
}

/// Eigenvalues of a real 4x4 matrix, sorted by real part then imaginary part.
pub fn eigenvalues(m: &Matrix4<f64>) -> [Complex64; 4] {
    let ev = m.complex_eigenvalues();
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (o, e) in out.iter_mut().zip(ev.iter()) {
        *o = *e;
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    out
}

pub fn drift_eigenvalues(params: &SystemParams) -> Result<[Complex64; 4]> {
    Ok(eigenvalues(&assemble_drift_noise(params)?.theta))
}

pub fn hurwitz_detail(params: &SystemParams) -> HurwitzDetail {
    let c = characteristic_polynomial(params);
    let (m1, m2, l) = (params.osc1.mass, params.osc2.mass, params.coupling);
    let g = params.gamma1();
    let w2s = params.osc2.omega_sq();
    HurwitzDetail {
        coefficients: [c[0], -c[1], c[2], -c[3], c[4]],
        delta2: g * (params.osc1.omega_sq() + l / m1),
        delta3: g * g * l * l / (m1 * m2),
        reduced1: (w2s + l / m2).powi(2) + (l / m2).powi(2),
        reduced2: (l / m2).powi(2),
    }
}

pub fn routh_hurwitz(params: &SystemParams) -> Result<StabilityReport> {
    let eigenvalues = drift_eigenvalues(params)?;
    let criteria = hurwitz_detail(params);
    let pass = criteria.coefficients.iter().all(|&a| a > 0.0)
        && criteria.delta2 > 0.0
        && criteria.delta3 > 0.0
        && criteria.reduced1 > 0.0
        && criteria.reduced2 > 0.0;
    let min_real_part = eigenvalues.iter().map(|e| e.re).fold(f64::INFINITY, f64::min);
    Ok(StabilityReport {
        eigenvalues,
        min_real_part,
        routh_hurwitz_pass: pass,
        reason: (!pass).then(|| "marginal".to_string()),
        criteria,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OscillatorParams;

    #[test]
    fn coupled_damped_passes() {
        let p = SystemParams::natural_units(0.05, 1.0, 1.0).unwrap();
        let r = routh_hurwitz(&p).unwrap();
        assert!(r.routh_hurwitz_pass);
        assert!(r.min_real_part > 0.0);
        assert!(r.reason.is_none());
        assert!((r.criteria.delta3 - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn undamped_block_is_marginal() {
        let p = SystemParams::natural_units(0.0, 1.0, 1.0).unwrap();
        let r = routh_hurwitz(&p).unwrap();
        assert!(!r.routh_hurwitz_pass);
        assert_eq!(r.reason.as_deref(), Some("marginal"));
        let imag: Vec<_> = r.eigenvalues.iter().filter(|e| e.re.abs() < 1e-12).collect();
        assert_eq!(imag.len(), 2);
        for e in imag {
            assert!((e.im.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uncoupled_damped_block_eigenvalues() {
        let o1 = OscillatorParams::from_rates(1.0, 2.0, 1.0, 1.0).unwrap();
        let o2 = OscillatorParams::from_rates(1.0, 1.5, 0.0, 1.0).unwrap();
        let p = SystemParams::new(o1, o2, 0.0).unwrap();
        let r = routh_hurwitz(&p).unwrap();
        assert!(!r.routh_hurwitz_pass);
        let root = Complex64::new(1.0 - 16.0, 0.0).sqrt() * 0.5;
        for target in [Complex64::new(0.5, 0.0) + root, Complex64::new(0.5, 0.0) - root] {
            assert!(r.eigenvalues.iter().any(|e| (e - target).norm() < 1e-12));
        }
    }

    #[test]
    fn undamped_coupled_is_marginal() {
        let p = SystemParams::identical(1.0, 1.0, 0.0, 1.0, 1.0, 0.3).unwrap();
        let r = routh_hurwitz(&p).unwrap();
        assert!(!r.routh_hurwitz_pass);
        assert!(r.min_real_part.abs() < 1e-12);
    }

    #[test]
    fn quartic_roots_are_eigenvalues() {
        let p = SystemParams::new(
            OscillatorParams::new(1.3, 0.8, 0.7, 1.0).unwrap(),
            OscillatorParams::new(0.9, 1.2, 0.0, 1.0).unwrap(),
            0.3,
        )
        .unwrap();
        let c = crate::poly::from_real(&characteristic_polynomial(&p));
        let roots = crate::poly::roots(&c).unwrap();
        let ev = drift_eigenvalues(&p).unwrap();
        for e in ev {
            assert!(roots.iter().any(|r| (r - e).norm() < 1e-10 * e.norm()));
        }
    }
}
