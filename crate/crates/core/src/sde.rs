//! Euler-Maruyama ensembles of the OU system with streaming moment statistics.
//!
//! Trajectory `i` draws from `ChaCha8Rng` seeded with the run seed on stream
//! `i`, and trajectories are grouped into fixed chunks whose accumulators are
//! merged in chunk order. Results are therefore bitwise identical for any
//! thread count.

use std::io::Write;

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DriftNoise, SystemParams, P1, STATE_LABELS};
use crate::stability::eigenvalues;
use crate::steadystate::CovarianceMatrix;

/// `dt * max|eigenvalue|` above which a warning is logged.
pub const STEP_WARN_RATIO: f64 = 0.1;
/// `dt * max|eigenvalue|` above which the run is refused.
pub const STEP_ERROR_RATIO: f64 = 1.0;
/// Trajectories per accumulation chunk.
pub const CHUNK: usize = 128;

const NFEAT: usize = 15;
const PAIRS: [(usize, usize); 10] =
    [(0, 0), (1, 1), (2, 2), (3, 3), (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Point(Vector4<f64>),
    Gaussian { mean: Vector4<f64>, cov: CovarianceMatrix },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    pub initial: InitialCondition,
    /// Steps between recorded rows; the final step is always recorded.
    pub output_stride: usize,
}

impl SimConfig {
    pub fn new(dt: f64, t_final: f64, n_trajectories: usize, seed: u64) -> Self {
        Self {
            dt,
            t_final,
            n_trajectories,
            seed,
            initial: InitialCondition::Point(Vector4::zeros()),
            output_stride: 1,
        }
    }

    pub fn with_initial(mut self, initial: InitialCondition) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.output_stride = stride;
        self
    }

    /// Record only the initial and final states.
    pub fn endpoints_only(mut self) -> Self {
        self.output_stride = usize::MAX;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// Step indices at which rows are recorded.
    pub fn record_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut out: Vec<usize> = (0..=n).step_by(self.output_stride.max(1).min(n.max(1))).collect();
        if out.last() != Some(&n) {
            out.push(n);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive and finite, got {}", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::param("t_final", format!("must be positive and finite, got {}", self.t_final)));
        }
        if self.n_trajectories == 0 {
            return Err(Error::param("n_trajectories", "must be at least 1"));
        }
        if self.output_stride == 0 {
            return Err(Error::param("output_stride", "must be at least 1"));
        }
        if let InitialCondition::Gaussian { mean, cov } = &self.initial {
            if mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("initial_mean", "must be finite"));
            }
            if !cov.is_symmetric() || !cov.is_psd() {
                return Err(Error::param("initial_cov", "must be symmetric positive semidefinite"));
            }
        }
        if let InitialCondition::Point(z) = &self.initial {
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("initial_state", "must be finite"));
            }
        }
        Ok(())
    }
}

/// Checks `dt * max|eigenvalue of theta|`, returning the ratio.
pub fn check_step(dn: &DriftNoise, dt: f64) -> Result<f64> {
    let rho = eigenvalues(&dn.theta).iter().map(|e| e.norm()).fold(0.0, f64::max);
    let ratio = dt * rho;
    if ratio > STEP_ERROR_RATIO {
        return Err(Error::StepSize { ratio });
    }
    if ratio > STEP_WARN_RATIO {
        log::warn!("dt * max|theta| = {ratio:.3} exceeds the recommended {STEP_WARN_RATIO}");
    }
    Ok(ratio)
}

/// Statistics at one recorded time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleRow {
    pub t: f64,
    pub n: usize,
    pub mean: [f64; 4],
    pub mean_stderr: [f64; 4],
    /// Unbiased sample covariance.
    pub cov: CovarianceMatrix,
    pub cov_stderr: [[f64; 4]; 4],
    pub energy: f64,
    pub energy_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub rows: Vec<EnsembleRow>,
    /// Trajectories dropped after reaching a non-finite state.
    pub aborted: Vec<usize>,
}

impl EnsembleStats {
    pub fn last(&self) -> &EnsembleRow {
        self.rows.last().expect("at least one row")
    }

    pub fn csv_header() -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        let names = value_names();
        cols.extend(names.iter().cloned());
        cols.extend(names.iter().map(|n| format!("{n}_stderr")));
        cols
    }

    /// One row per recorded time, floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Config(format!("csv output: {e}"));
        wr.write_record(Self::csv_header()).map_err(io)?;
        for row in &self.rows {
            let (vals, errs) = row_values(row);
            let rec = std::iter::once(row.t).chain(vals).chain(errs).map(|v| format!("{v:.16e}"));
            wr.write_record(rec).map_err(io)?;
        }
        wr.flush().map_err(|e| Error::Config(format!("csv output: {e}")))?;
        Ok(())
    }
}

fn value_names() -> Vec<String> {
    let mut out: Vec<String> = STATE_LABELS.iter().map(|s| format!("mean_{s}")).collect();
    for &(i, j) in &PAIRS {
        if i == j {
            out.push(format!("var_{}", STATE_LABELS[i]));
        } else {
            out.push(format!("cov_{}{}", STATE_LABELS[i], STATE_LABELS[j]));
        }
    }
    out.push("energy".into());
    out
}

fn row_values(row: &EnsembleRow) -> (Vec<f64>, Vec<f64>) {
    let mut v: Vec<f64> = row.mean.to_vec();
    let mut e: Vec<f64> = row.mean_stderr.to_vec();
    for &(i, j) in &PAIRS {
        v.push(row.cov.get(i, j));
        e.push(row.cov_stderr[i][j]);
    }
    v.push(row.energy);
    e.push(row.energy_stderr);
    (v, e)
}

/// Streaming mean and co-moment matrix (Welford, merged with Chan's formula).
#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    mean: [f64; NFEAT],
    m2: [[f64; NFEAT]; NFEAT],
}

impl Moments {
    fn new() -> Self {
        Self { n: 0, mean: [0.0; NFEAT], m2: [[0.0; NFEAT]; NFEAT] }
    }

    fn push(&mut self, x: &[f64; NFEAT]) {
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        let mut d = [0.0; NFEAT];
        for k in 0..NFEAT {
            d[k] = x[k] - self.mean[k];
            self.mean[k] += d[k] * inv;
        }
        for a in 0..NFEAT {
            let da = x[a] - self.mean[a];
            for b in 0..=a {
                self.m2[a][b] += da * d[b];
            }
        }
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = o.clone();
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let mut d = [0.0; NFEAT];
        for k in 0..NFEAT {
            d[k] = o.mean[k] - self.mean[k];
            self.mean[k] += d[k] * nb / n;
        }
        let f = na * nb / n;
        for a in 0..NFEAT {
            for b in 0..=a {
                self.m2[a][b] += o.m2[a][b] + d[a] * d[b] * f;
            }
        }
        self.n += o.n;
    }

    fn cov(&self, a: usize, b: usize) -> f64 {
        let (a, b) = if a >= b { (a, b) } else { (b, a) };
        if self.n < 2 {
            return 0.0;
        }
        self.m2[a][b] / (self.n - 1) as f64
    }

    fn row(&self, t: f64) -> EnsembleRow {
        let n = self.n.max(1) as f64;
        let mut mean = [0.0; 4];
        let mut mean_stderr = [0.0; 4];
        for k in 0..4 {
            mean[k] = self.mean[k];
            mean_stderr[k] = (self.cov(k, k) / n).sqrt();
        }
        let mut cov = Matrix4::zeros();
        let mut cov_stderr = [[0.0; 4]; 4];
        for (p, &(i, j)) in PAIRS.iter().enumerate() {
            let c = self.cov(i, j);
            cov[(i, j)] = c;
            cov[(j, i)] = c;
            // delta method on mean(z_i z_j) - mean(z_i) mean(z_j)
            let mut g = [0.0; NFEAT];
            g[4 + p] = 1.0;
            g[i] -= self.mean[j];
            g[j] -= self.mean[i];
            let mut var = 0.0;
            for a in 0..NFEAT {
                for b in 0..NFEAT {
                    var += g[a] * g[b] * self.cov(a, b);
                }
            }
            let se = (var.max(0.0) / n).sqrt();
            cov_stderr[i][j] = se;
            cov_stderr[j][i] = se;
        }
        EnsembleRow {
            t,
            n: self.n,
            mean,
            mean_stderr,
            cov: CovarianceMatrix::new(cov).unwrap_or_else(|_| CovarianceMatrix::zeros()),
            cov_stderr,
            energy: self.mean[NFEAT - 1],
            energy_stderr: (self.cov(NFEAT - 1, NFEAT - 1) / n).sqrt(),
        }
    }
}

fn features(z: &[f64; 4], h: &Matrix4<f64>) -> [f64; NFEAT] {
    let mut x = [0.0; NFEAT];
    x[..4].copy_from_slice(z);
    for (p, &(i, j)) in PAIRS.iter().enumerate() {
        x[4 + p] = z[i] * z[j];
    }
    let zv = Vector4::from(*z);
    x[NFEAT - 1] = 0.5 * zv.dot(&(h * zv));
    x
}

/// Precomputed one-step map `z -> B z + sum_k col_k eta_k`.
struct Stepper {
    b: [[f64; 4]; 4],
    noise: Vec<[f64; 4]>,
}

impl Stepper {
    fn new(dn: &DriftNoise, dt: f64) -> Self {
        let mut b = [[0.0; 4]; 4];
        for (i, row) in b.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { 1.0 } else { 0.0 } - dn.theta[(i, j)] * dt;
            }
        }
        let sq = dt.sqrt();
        let noise = (0..4)
            .filter(|&k| (0..4).any(|i| dn.sigma[(i, k)] != 0.0))
            .map(|k| [dn.sigma[(0, k)] * sq, dn.sigma[(1, k)] * sq, dn.sigma[(2, k)] * sq, dn.sigma[(3, k)] * sq])
            .collect();
        Self { b, noise }
    }

    #[inline]
    fn step(&self, z: &mut [f64; 4], rng: &mut ChaCha8Rng) {
        let b = &self.b;
        let mut next = [0.0; 4];
        for i in 0..4 {
            next[i] = b[i][0] * z[0] + b[i][1] * z[1] + b[i][2] * z[2] + b[i][3] * z[3];
        }
        for col in &self.noise {
            let eta: f64 = StandardNormal.sample(rng);
            for i in 0..4 {
                next[i] += col[i] * eta;
            }
        }
        *z = next;
    }
}

fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn initial_state(init: &InitialCondition, factor: &Matrix4<f64>, rng: &mut ChaCha8Rng) -> [f64; 4] {
    match init {
        InitialCondition::Point(z) => [z[0], z[1], z[2], z[3]],
        InitialCondition::Gaussian { mean, .. } => {
            let eta = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
            let z = mean + factor * eta;
            [z[0], z[1], z[2], z[3]]
        }
    }
}

/// `L` with `L L^T = C` for a PSD `C`, from its eigen-decomposition.
fn psd_factor(init: &InitialCondition) -> Matrix4<f64> {
    match init {
        InitialCondition::Point(_) => Matrix4::zeros(),
        InitialCondition::Gaussian { cov, .. } => {
            let sym = (cov.matrix() + cov.matrix().transpose()) * 0.5;
            let eig = sym.symmetric_eigen();
            let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            eig.eigenvectors * Matrix4::from_diagonal(&d)
        }
    }
}

/// Runs one trajectory, calling `record(row, z)` at each recorded step.
/// Returns false if the state became non-finite.
fn run_trajectory(
    stepper: &Stepper,
    cfg: &SimConfig,
    factor: &Matrix4<f64>,
    record_steps: &[usize],
    index: usize,
    mut record: impl FnMut(usize, &[f64; 4]),
) -> bool {
    let mut rng = trajectory_rng(cfg.seed, index);
    let mut z = initial_state(&cfg.initial, factor, &mut rng);
    let mut step = 0;
    for (row, &target) in record_steps.iter().enumerate() {
        while step < target {
            stepper.step(&mut z, &mut rng);
            step += 1;
        }
        if z.iter().any(|v| !v.is_finite()) {
            return false;
        }
        record(row, &z);
    }
    true
}

fn prepare(dn: &DriftNoise, cfg: &SimConfig) -> Result<(Stepper, Matrix4<f64>, Vec<usize>)> {
    cfg.validate()?;
    check_step(dn, cfg.dt)?;
    Ok((Stepper::new(dn, cfg.dt), psd_factor(&cfg.initial), cfg.record_steps()))
}

/// Ensemble statistics over `cfg.n_trajectories` Euler-Maruyama paths.
pub fn simulate_ensemble(dn: &DriftNoise, cfg: &SimConfig) -> Result<EnsembleStats> {
    let (stepper, factor, steps) = prepare(dn, cfg)?;
    let n_rows = steps.len();
    let n_chunks = cfg.n_trajectories.div_ceil(CHUNK);
    let batch = (rayon::current_num_threads() * 2).max(1);

    let run_chunk = |c: usize| {
        let mut acc = vec![Moments::new(); n_rows];
        let mut aborted = Vec::new();
        let end = ((c + 1) * CHUNK).min(cfg.n_trajectories);
        for index in c * CHUNK..end {
            let mut local = Vec::with_capacity(n_rows);
            let ok = run_trajectory(&stepper, cfg, &factor, &steps, index, |_, z| {
                local.push(features(z, &dn.hamiltonian));
            });
            for (row, x) in local.iter().enumerate() {
                acc[row].push(x);
            }
            if !ok {
                log::warn!("trajectory {index} reached a non-finite state and was dropped");
                aborted.push(index);
            }
        }
        (acc, aborted)
    };

    let mut total = vec![Moments::new(); n_rows];
    let mut aborted = Vec::new();
    let mut start = 0;
    while start < n_chunks {
        let end = (start + batch).min(n_chunks);
        let parts: Vec<_> = (start..end).into_par_iter().map(run_chunk).collect();
        for (acc, ab) in parts {
            for (t, a) in total.iter_mut().zip(acc.iter()) {
                t.merge(a);
            }
            aborted.extend(ab);
        }
        start = end;
    }

    let rows = steps.iter().zip(total.iter()).map(|(&s, m)| m.row(s as f64 * cfg.dt)).collect();
    Ok(EnsembleStats { rows, aborted })
}

/// A single reproducible path, recorded at the configured stride.
pub fn sample_trajectory(dn: &DriftNoise, cfg: &SimConfig, index: usize) -> Result<Vec<(f64, Vector4<f64>)>> {
    let (stepper, factor, steps) = prepare(dn, cfg)?;
    let mut out = Vec::with_capacity(steps.len());
    let ok = run_trajectory(&stepper, cfg, &factor, &steps, index, |row, z| {
        out.push((steps[row] as f64 * cfg.dt, Vector4::from(*z)));
    });
    if !ok {
        return Err(Error::Config(format!("trajectory {index} reached a non-finite state")));
    }
    Ok(out)
}

/// Ito rate of change of the mean energy, `-(alpha/m1^2) Var(p1) + D1/(2 m1) + D2/(2 m2)`.
pub fn energy_drift(params: &SystemParams, cov: &CovarianceMatrix) -> f64 {
    let (o1, o2) = (&params.osc1, &params.osc2);
    -(o1.damping / (o1.mass * o1.mass)) * cov.get(P1, P1)
        + o1.diffusion / (2.0 * o1.mass)
        + o2.diffusion / (2.0 * o2.mass)
}
