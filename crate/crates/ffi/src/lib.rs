//! C ABI for `hybrid-osc`.
//!
//! Every entry point returns an [`HoStatus`]. On failure a message is stored
//! per thread and read with [`ho_last_error_message`]. Matrices are 4x4,
//! row-major, in `(q1, p1, q2, p2)` order. Handles are opaque and released
//! with their `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hybrid_osc::cq::{self, CQParams};
use hybrid_osc::model::{assemble_drift_noise, DriftNoise, OscillatorParams, SystemParams};
use hybrid_osc::nalgebra::{Matrix4, Vector4};
use hybrid_osc::sde::{self, EnsembleStats, InitialCondition, SimConfig};
use hybrid_osc::spectral::{self, CorrelatorPair, FftOptions, InformationRoute, PerturbativeOrder, PoleSet};
use hybrid_osc::stability;
use hybrid_osc::steadystate::{self, CovarianceMatrix, EvolveOptions};
use hybrid_osc::Error;

/// Result code of every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    NotStable = 3,
    SingularSystem = 4,
    CouplingZero = 5,
    PoleOnAxis = 6,
    DegeneratePoles = 7,
    ClassificationFailure = 8,
    OverdampedUnsupported = 9,
    NotIdentical = 10,
    PerfectCorrelation = 11,
    TradeoffViolation = 12,
    StepSize = 13,
    Config = 14,
    BufferTooSmall = 15,
    Panic = 99,
}

impl From<&Error> for HoStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter { .. } => HoStatus::InvalidParameter,
            Error::NotStable { .. } => HoStatus::NotStable,
            Error::SingularSystem { .. } => HoStatus::SingularSystem,
            Error::CouplingZero => HoStatus::CouplingZero,
            Error::PoleOnAxis { .. } => HoStatus::PoleOnAxis,
            Error::DegeneratePoles { .. } => HoStatus::DegeneratePoles,
            Error::ClassificationFailure(_) => HoStatus::ClassificationFailure,
            Error::OverdampedUnsupported { .. } => HoStatus::OverdampedUnsupported,
            Error::NotIdentical { .. } => HoStatus::NotIdentical,
            Error::PerfectCorrelation { .. } => HoStatus::PerfectCorrelation,
            Error::TradeoffViolation { .. } => HoStatus::TradeoffViolation,
            Error::StepSize { .. } => HoStatus::StepSize,
            Error::Config(_) => HoStatus::Config,
        }
    }
}

/// Two-point function selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoPair {
    Q1Q1 = 0,
    Q2Q2 = 1,
    Q1Q2 = 2,
    Q1R1 = 3,
    Q2R2 = 4,
    Q2R1 = 5,
}

impl From<HoPair> for CorrelatorPair {
    fn from(p: HoPair) -> Self {
        match p {
            HoPair::Q1Q1 => CorrelatorPair::Q1Q1,
            HoPair::Q2Q2 => CorrelatorPair::Q2Q2,
            HoPair::Q1Q2 => CorrelatorPair::Q1Q2,
            HoPair::Q1R1 => CorrelatorPair::Q1R1,
            HoPair::Q2R2 => CorrelatorPair::Q2R2,
            HoPair::Q2R1 => CorrelatorPair::Q2R1,
        }
    }
}

/// Correlator evaluation route on a caller-supplied grid.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoMethod {
    Exact = 0,
    SmallLambda = 1,
}

/// Route for the correlation coefficient behind the mutual information.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoRoute {
    SmallLambda = 0,
    Exact = 1,
}

/// Order of the perturbative pole expansion.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoOrder {
    First = 1,
    Second = 2,
}

/// Coupled classical system `(m, k, alpha, D)` per oscillator and `lambda`.
pub struct HoSystem {
    params: SystemParams,
    dn: DriftNoise,
}

/// Classical-quantum parameter set.
pub struct HoCq {
    params: CQParams,
}

/// Ensemble statistics from a simulation.
pub struct HoEnsemble {
    stats: EnsembleStats,
}

/// Stability summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HoStability {
    pub min_real_part: f64,
    pub routh_hurwitz_pass: bool,
    pub eigen_re: [f64; 4],
    pub eigen_im: [f64; 4],
}

/// Complex pole pair `omega1`, `omega2`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HoPoles {
    pub omega1_re: f64,
    pub omega1_im: f64,
    pub omega2_re: f64,
    pub omega2_im: f64,
}

/// Simulation settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HoSimOptions {
    pub dt: f64,
    pub t_final: f64,
    pub n_trajectories: u64,
    pub seed: u64,
    /// Steps between recorded rows; the final step is always recorded.
    pub stride: u64,
    /// Start from the stationary Gaussian instead of the origin.
    pub stationary: bool,
}

/// One recorded ensemble row.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HoEnsembleRow {
    pub t: f64,
    pub mean: [f64; 4],
    pub cov: [f64; 16],
    pub energy: f64,
    pub energy_stderr: f64,
}

/// Occupation `N` and temperature `T_C`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HoOccupation {
    pub n: f64,
    pub t_c: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(HoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(HoStatus::from(&e), e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> HoStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HoStatus::Ok,
        Ok(Err(Failure(s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {m}"));
            HoStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(HoStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn refer<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn slice<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

fn write_matrix(m: &Matrix4<f64>, dst: &mut [f64]) {
    for i in 0..4 {
        for j in 0..4 {
            dst[4 * i + j] = m[(i, j)];
        }
    }
}

fn read_matrix(src: &[f64]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| src[4 * i + j])
}

fn poles_out(p: &PoleSet) -> HoPoles {
    HoPoles { omega1_re: p.omega1.re, omega1_im: p.omega1.im, omega2_re: p.omega2.re, omega2_im: p.omega2.im }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ho_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static NUL-terminated library version.
#[no_mangle]
pub extern "C" fn ho_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a coupled system. Oscillator 2 is frictionless.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ho_system_new(
    m1: f64,
    k1: f64,
    alpha: f64,
    d1: f64,
    m2: f64,
    k2: f64,
    d2: f64,
    lambda: f64,
    out_system: *mut *mut HoSystem,
) -> HoStatus {
    guard(|| {
        let slot = out(out_system, "out_system")?;
        *slot = ptr::null_mut();
        let params = SystemParams::new(
            OscillatorParams::new(m1, k1, alpha, d1)?,
            OscillatorParams::new(m2, k2, 0.0, d2)?,
            lambda,
        )?;
        let dn = assemble_drift_noise(&params)?;
        *slot = Box::into_raw(Box::new(HoSystem { params, dn }));
        Ok(())
    })
}

/// Releases a system handle. Null is ignored.
///
/// # Safety
/// `system` must come from [`ho_system_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ho_system_free(system: *mut HoSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Drift matrix `theta` of `dz = -theta z dt + sigma dW`.
///
/// # Safety
/// `system` must be a live handle and `out_theta` must hold 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn ho_drift_matrix(system: *const HoSystem, out_theta: *mut f64) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        write_matrix(&s.dn.theta, slice_mut(out_theta, 16, "out_theta")?);
        Ok(())
    })
}

/// Eigenvalues and Routh-Hurwitz verdict of the drift matrix.
///
/// # Safety
/// `system` must be a live handle and `out_report` valid.
#[no_mangle]
pub unsafe extern "C" fn ho_stability(system: *const HoSystem, out_report: *mut HoStability) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let dst = out(out_report, "out_report")?;
        let r = stability::routh_hurwitz(&s.params)?;
        *dst = HoStability {
            min_real_part: r.min_real_part,
            routh_hurwitz_pass: r.routh_hurwitz_pass,
            eigen_re: r.eigenvalues.map(|z| z.re),
            eigen_im: r.eigenvalues.map(|z| z.im),
        };
        Ok(())
    })
}

/// Stationary covariance from the Lyapunov equation.
///
/// # Safety
/// `system` must be a live handle and `out_cov` must hold 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn ho_steady_covariance(system: *const HoSystem, out_cov: *mut f64) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let dst = slice_mut(out_cov, 16, "out_cov")?;
        write_matrix(steadystate::solve_lyapunov(&s.dn)?.matrix(), dst);
        Ok(())
    })
}

/// Stationary covariance from the closed-form expressions.
///
/// # Safety
/// `system` must be a live handle and `out_cov` must hold 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn ho_closed_form_covariance(system: *const HoSystem, out_cov: *mut f64) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let dst = slice_mut(out_cov, 16, "out_cov")?;
        write_matrix(steadystate::closed_form_covariances(&s.params)?.matrix(), dst);
        Ok(())
    })
}

/// Mean and covariance at time `t` from `(mean0, cov0)` at `t = 0`.
///
/// # Safety
/// `system` must be a live handle; `cov0`/`out_cov` hold 16 doubles and
/// `mean0`/`out_mean` hold 4.
#[no_mangle]
pub unsafe extern "C" fn ho_evolve_moments(
    system: *const HoSystem,
    cov0: *const f64,
    mean0: *const f64,
    t: f64,
    out_cov: *mut f64,
    out_mean: *mut f64,
) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let c0 = CovarianceMatrix::new(read_matrix(slice(cov0, 16, "cov0")?))?;
        let m0 = Vector4::from_column_slice(slice(mean0, 4, "mean0")?);
        let cov_dst = slice_mut(out_cov, 16, "out_cov")?;
        let mean_dst = slice_mut(out_mean, 4, "out_mean")?;
        let states = steadystate::evolve_moments(&s.dn, &c0, &m0, &[t], EvolveOptions::default())?;
        let last = states.last().ok_or_else(|| Failure(HoStatus::InvalidParameter, "empty time grid".into()))?;
        write_matrix(last.cov.matrix(), cov_dst);
        mean_dst.copy_from_slice(last.mean.as_slice());
        Ok(())
    })
}

/// Rate of change of the mean conservative energy for a covariance.
///
/// # Safety
/// `system` must be a live handle and `cov` must hold 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn ho_energy_drift(system: *const HoSystem, cov: *const f64, out_rate: *mut f64) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let c = CovarianceMatrix::new(read_matrix(slice(cov, 16, "cov")?))?;
        *out(out_rate, "out_rate")? = sde::energy_drift(&s.params, &c);
        Ok(())
    })
}

/// Exact complex poles of the response functions.
///
/// # Safety
/// `system` must be a live handle and `out_poles` valid.
#[no_mangle]
pub unsafe extern "C" fn ho_poles(system: *const HoSystem, out_poles: *mut HoPoles) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let dst = out(out_poles, "out_poles")?;
        *dst = poles_out(&spectral::find_poles(&s.params)?);
        Ok(())
    })
}

/// Poles expanded to first or second order in the coupling.
///
/// # Safety
/// `system` must be a live handle and `out_poles` valid.
#[no_mangle]
pub unsafe extern "C" fn ho_perturbative_poles(system: *const HoSystem, order: HoOrder, out_poles: *mut HoPoles) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let dst = out(out_poles, "out_poles")?;
        let order = match order {
            HoOrder::First => PerturbativeOrder::First,
            HoOrder::Second => PerturbativeOrder::Second,
        };
        *dst = poles_out(&spectral::perturbative_poles(&s.params, order)?);
        Ok(())
    })
}

/// One correlator on a caller-supplied time grid.
///
/// # Safety
/// `system` must be a live handle; `times` and `out_values` hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ho_correlator(
    system: *const HoSystem,
    method: HoMethod,
    pair: HoPair,
    times: *const f64,
    n: usize,
    out_values: *mut f64,
) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let grid = slice(times, n, "times")?;
        let dst = slice_mut(out_values, n, "out_values")?;
        let table = match method {
            HoMethod::Exact => spectral::correlators_exact(&s.params, grid)?,
            HoMethod::SmallLambda => spectral::correlators_small_lambda(&s.params, grid, s.params.is_identical())?,
        };
        let v = table
            .get(pair.into())
            .ok_or_else(|| Failure(HoStatus::InvalidParameter, format!("pair {pair:?} not produced by this method")))?;
        dst.copy_from_slice(v);
        Ok(())
    })
}

/// A symmetric correlator on `|t| <= t_max` by FFT quadrature. The grid is
/// chosen by the library; `out_len` receives its length. Returns
/// `BufferTooSmall` with `out_len` set when `capacity` is insufficient.
///
/// # Safety
/// `system` must be a live handle; `out_times` and `out_values` hold
/// `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ho_correlator_fft(
    system: *const HoSystem,
    pair: HoPair,
    t_max: f64,
    out_times: *mut f64,
    out_values: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let len = out(out_len, "out_len")?;
        let table = spectral::correlators_fft(&s.params, t_max, FftOptions::default())?;
        let v = table
            .get(pair.into())
            .ok_or_else(|| Failure(HoStatus::InvalidParameter, format!("pair {pair:?} not produced by the FFT route")))?;
        *len = v.len();
        if capacity < v.len() {
            return Err(Failure(HoStatus::BufferTooSmall, format!("need {} entries, capacity {capacity}", v.len())));
        }
        slice_mut(out_times, v.len(), "out_times")?.copy_from_slice(&table.times);
        slice_mut(out_values, v.len(), "out_values")?.copy_from_slice(v);
        Ok(())
    })
}

/// Mutual information of a position pair at lag `t`.
///
/// # Safety
/// `system` must be a live handle and `out_value` valid.
#[no_mangle]
pub unsafe extern "C" fn ho_mutual_information(
    system: *const HoSystem,
    pair: HoPair,
    t: f64,
    route: HoRoute,
    out_value: *mut f64,
) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let dst = out(out_value, "out_value")?;
        let route = match route {
            HoRoute::SmallLambda => InformationRoute::SmallLambda,
            HoRoute::Exact => InformationRoute::Exact,
        };
        *dst = spectral::mutual_information(&s.params, pair.into(), t, route)?;
        Ok(())
    })
}

/// Leading-order ratio of position spreads `sigma1/sigma2`.
///
/// # Safety
/// `system` must be a live handle and `out_value` valid.
#[no_mangle]
pub unsafe extern "C" fn ho_sigma_ratio(system: *const HoSystem, out_value: *mut f64) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        *out(out_value, "out_value")? = spectral::sigma_ratio(&s.params)?;
        Ok(())
    })
}

/// Default simulation settings.
#[no_mangle]
pub extern "C" fn ho_sim_options_default() -> HoSimOptions {
    HoSimOptions { dt: 5e-4, t_final: 10.0, n_trajectories: 1000, seed: 42, stride: 1000, stationary: false }
}

/// Runs an Euler-Maruyama ensemble and stores its statistics.
///
/// # Safety
/// `system` must be a live handle, `options` valid and `out_ensemble` a
/// valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ho_simulate(
    system: *const HoSystem,
    options: *const HoSimOptions,
    out_ensemble: *mut *mut HoEnsemble,
) -> HoStatus {
    guard(|| {
        let s = refer(system, "system")?;
        let o = refer(options, "options")?;
        let slot = out(out_ensemble, "out_ensemble")?;
        *slot = ptr::null_mut();
        let count = |v: u64, name: &'static str| {
            usize::try_from(v).map_err(|_| Failure(HoStatus::InvalidParameter, format!("`{name}` out of range")))
        };
        let initial = if o.stationary {
            InitialCondition::Gaussian { mean: Vector4::zeros(), cov: steadystate::solve_lyapunov(&s.dn)? }
        } else {
            InitialCondition::Point(Vector4::zeros())
        };
        let cfg = SimConfig::new(o.dt, o.t_final, count(o.n_trajectories, "n_trajectories")?, o.seed)
            .with_stride(count(o.stride, "stride")?)
            .with_initial(initial);
        let stats = sde::simulate_ensemble(&s.dn, &cfg)?;
        *slot = Box::into_raw(Box::new(HoEnsemble { stats }));
        Ok(())
    })
}

/// Number of recorded rows.
///
/// # Safety
/// `ensemble` must be a live handle and `out_len` valid.
#[no_mangle]
pub unsafe extern "C" fn ho_ensemble_len(ensemble: *const HoEnsemble, out_len: *mut usize) -> HoStatus {
    guard(|| {
        let e = refer(ensemble, "ensemble")?;
        *out(out_len, "out_len")? = e.stats.rows.len();
        Ok(())
    })
}

/// Recorded row `index`.
///
/// # Safety
/// `ensemble` must be a live handle and `out_row` valid.
#[no_mangle]
pub unsafe extern "C" fn ho_ensemble_row(ensemble: *const HoEnsemble, index: usize, out_row: *mut HoEnsembleRow) -> HoStatus {
    guard(|| {
        let e = refer(ensemble, "ensemble")?;
        let dst = out(out_row, "out_row")?;
        let r = e.stats.rows.get(index).ok_or_else(|| {
            Failure(HoStatus::InvalidParameter, format!("row {index} out of range ({} rows)", e.stats.rows.len()))
        })?;
        let mut cov = [0.0; 16];
        write_matrix(r.cov.matrix(), &mut cov);
        *dst = HoEnsembleRow { t: r.t, mean: r.mean, cov, energy: r.energy, energy_stderr: r.energy_stderr };
        Ok(())
    })
}

/// Releases an ensemble handle. Null is ignored.
///
/// # Safety
/// `ensemble` must come from [`ho_simulate`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ho_ensemble_free(ensemble: *mut HoEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Builds a classical-quantum parameter set. A non-positive `d0` selects
/// the saturated trade-off `D0 = 1/(4D)`.
///
/// # Safety
/// `out_cq` must be a valid handle slot.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ho_cq_new(
    m_c: f64,
    k_c: f64,
    alpha: f64,
    d: f64,
    m_q: f64,
    k_q: f64,
    lambda: f64,
    d0: f64,
    hbar: f64,
    out_cq: *mut *mut HoCq,
) -> HoStatus {
    guard(|| {
        let slot = out(out_cq, "out_cq")?;
        *slot = ptr::null_mut();
        let mut params = CQParams::new(OscillatorParams::new(m_c, k_c, alpha, d)?, m_q, k_q, lambda)?.with_hbar(hbar)?;
        if d0 > 0.0 {
            params = params.with_decoherence(d0)?;
        }
        *slot = Box::into_raw(Box::new(HoCq { params }));
        Ok(())
    })
}

/// Releases a classical-quantum handle. Null is ignored.
///
/// # Safety
/// `cq` must come from [`ho_cq_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ho_cq_free(cq: *mut HoCq) {
    if !cq.is_null() {
        drop(Box::from_raw(cq));
    }
}

/// Classical system equivalent to the hybrid one, as a new handle.
///
/// # Safety
/// `cq` must be a live handle and `out_system` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ho_cq_map_to_classical(cq: *const HoCq, out_system: *mut *mut HoSystem) -> HoStatus {
    guard(|| {
        let c = refer(cq, "cq")?;
        let slot = out(out_system, "out_system")?;
        *slot = ptr::null_mut();
        let params = cq::map_to_classical(&c.params)?;
        let dn = assemble_drift_noise(&params)?;
        *slot = Box::into_raw(Box::new(HoSystem { params, dn }));
        Ok(())
    })
}

/// Occupation number and temperature of the quantum oscillator.
///
/// # Safety
/// `cq` must be a live handle and `out_occupation` valid.
#[no_mangle]
pub unsafe extern "C" fn ho_cq_occupation(cq: *const HoCq, out_occupation: *mut HoOccupation) -> HoStatus {
    guard(|| {
        let c = refer(cq, "cq")?;
        let dst = out(out_occupation, "out_occupation")?;
        let o = cq::occupation_number(&c.params)?;
        *dst = HoOccupation { n: o.n, t_c: o.t_c };
        Ok(())
    })
}

/// Occupation from the stationary second moments of the quantum oscillator.
///
/// # Safety
/// `cq` must be a live handle and `out_value` valid.
#[no_mangle]
pub unsafe extern "C" fn ho_cq_keldysh_occupation(cq: *const HoCq, out_value: *mut f64) -> HoStatus {
    guard(|| {
        let c = refer(cq, "cq")?;
        *out(out_value, "out_value")? = cq::keldysh_occupation(&c.params)?;
        Ok(())
    })
}

/// Equal-time hybrid covariance in `(q, p, Q, P)` order.
///
/// # Safety
/// `cq` must be a live handle and `out_cov` must hold 16 doubles.
#[no_mangle]
pub unsafe extern "C" fn ho_cq_equal_time(cq: *const HoCq, out_cov: *mut f64) -> HoStatus {
    guard(|| {
        let c = refer(cq, "cq")?;
        let dst = slice_mut(out_cov, 16, "out_cov")?;
        write_matrix(cq::hybrid_equal_time(&c.params)?.to_covariance().matrix(), dst);
        Ok(())
    })
}

/// Hybrid two-point functions for identical underdamped oscillators on a
/// time grid. Each output holds `n` doubles: `<<q q>>`, the Keldysh
/// function, the classical response and the imaginary quantum response.
///
/// # Safety
/// `cq` must be a live handle; `times` and every output hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ho_cq_correlators(
    cq: *const HoCq,
    times: *const f64,
    n: usize,
    out_qq: *mut f64,
    out_keldysh: *mut f64,
    out_classical_response: *mut f64,
    out_quantum_response_imag: *mut f64,
) -> HoStatus {
    guard(|| {
        let c = refer(cq, "cq")?;
        let grid = slice(times, n, "times")?;
        let qq = slice_mut(out_qq, n, "out_qq")?;
        let k = slice_mut(out_keldysh, n, "out_keldysh")?;
        let cr = slice_mut(out_classical_response, n, "out_classical_response")?;
        let qr = slice_mut(out_quantum_response_imag, n, "out_quantum_response_imag")?;
        let h = cq::hybrid_correlators(&c.params, grid)?;
        qq.copy_from_slice(&h.qq);
        k.copy_from_slice(&h.keldysh);
        cr.copy_from_slice(&h.classical_response);
        qr.copy_from_slice(&h.quantum_response_imag);
        Ok(())
    })
}

/// Deviation of the hybrid stationary state from the classical Gibbs state
/// at `T_C`, in the scaled covariance metric.
///
/// # Safety
/// `cq` must be a live handle and `out_value` valid.
#[no_mangle]
pub unsafe extern "C" fn ho_cq_gibbs_deviation(cq: *const HoCq, out_value: *mut f64) -> HoStatus {
    guard(|| {
        let c = refer(cq, "cq")?;
        *out(out_value, "out_value")? = cq::thermal_limit(&c.params)?.gibbs_deviation;
        Ok(())
    })
}
