//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{draw, Ranges};
use hybrid_osc::cq::{self, CQParams};
use hybrid_osc::model::{assemble_drift_noise, OscillatorParams, SystemParams, P1, Q1, Q2};
use hybrid_osc::sde::{self, EnsembleStats, InitialCondition, SimConfig};
use hybrid_osc::spectral::{self, CorrelatorPair, FftOptions, InformationRoute, PerturbativeOrder};
use hybrid_osc::stability;
use hybrid_osc::steadystate::{self, CovarianceMatrix, EvolveOptions};
use nalgebra::Vector4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fig1() -> SystemParams {
    SystemParams::identical(1.0, 1.0, 1.0, 1.0, 1.0, 0.05).unwrap()
}

fn criterion_1() -> Outcome {
    let mut r = common::rng(1);
    let g = Ranges { mass: (1e-2, 1e2), omega: (1e-2, 1e2), gamma: (1e-3, 1e2), lambda: (1e-4, 1e2), diffusion: (0.1, 10.0) };
    let (mut outside, mut band) = (0usize, 0usize);
    let n = 10_000;
    for _ in 0..n {
        let p = draw(&mut r, g);
        let rh = stability::routh_hurwitz(&p).unwrap().routh_hurwitz_pass;
        let min_re = common::eigenvalues(&p).iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let direct = min_re > 1e-12;
        if rh != direct {
            if min_re.abs() < 1e-9 {
                band += 1;
            } else {
                outside += 1;
            }
        }
    }
    outcome(outside == 0, format!("{n} draws, {outside} disagreements outside the marginal band, {band} inside"))
}

fn criterion_2() -> Outcome {
    let mut r = common::rng(2);
    let g = Ranges { mass: (0.2, 5.0), omega: (0.2, 5.0), gamma: (0.05, 5.0), lambda: (1e-3, 10.0), diffusion: (0.1, 10.0) };
    let (mut cf_ly, mut ev_ly): (f64, f64) = (0.0, 0.0);
    let n = 1000;
    for _ in 0..n {
        let p = draw(&mut r, g);
        let dn = assemble_drift_noise(&p).unwrap();
        let ly = steadystate::solve_lyapunov(&dn).unwrap();
        let cf = steadystate::closed_form_covariances(&p).unwrap();
        let min_re = stability::routh_hurwitz(&p).unwrap().min_real_part;
        let late = steadystate::evolve_moments(&dn, &CovarianceMatrix::zeros(), &Vector4::zeros(), &[50.0 / min_re], EvolveOptions::default()).unwrap();
        cf_ly = cf_ly.max(ly.scaled_deviation(&cf));
        ev_ly = ev_ly.max(ly.scaled_deviation(&late[0].cov));
    }
    let worst = cf_ly.max(ev_ly);
    outcome(worst <= 1e-8, format!("{n} draws, closed form vs Lyapunov {cf_ly:.2e}, late-time moments vs Lyapunov {ev_ly:.2e} (tol 1e-8)"))
}

/// Ensemble of criterion 3, reused by criterion 10.
fn fig1_ensemble() -> &'static (EnsembleStats, CovarianceMatrix, Duration) {
    static CELL: OnceLock<(EnsembleStats, CovarianceMatrix, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = fig1();
        let dn = assemble_drift_noise(&p).unwrap();
        let oracle = CovarianceMatrix::new(common::steady_covariance(&p)).unwrap();
        let start = Instant::now();
        let cfg = SimConfig::new(5e-4, 50.0, 10_000, 42)
            .with_initial(InitialCondition::Gaussian { mean: Vector4::zeros(), cov: oracle })
            .endpoints_only();
        let stats = sde::simulate_ensemble(&dn, &cfg).unwrap();
        (stats, oracle, start.elapsed())
    })
}

fn criterion_3() -> Outcome {
    let (stats, oracle, elapsed) = fig1_ensemble();
    let row = stats.last();
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in i..4 {
            worst = worst.max((row.cov.get(i, j) - oracle.get(i, j)).abs() / row.cov_stderr[i][j]);
        }
    }
    let p1 = (row.cov.get(P1, P1) - 1.0).abs() / row.cov_stderr[P1][P1];
    let pass = worst <= 3.0 && p1 <= 3.0 && stats.aborted.is_empty() && elapsed.as_secs_f64() < 300.0;
    outcome(
        pass,
        format!(
            "t = {}, n = {}, worst second moment {worst:.2} SE, Var(p1) = {:.4} at {p1:.2} SE from 1.0, {:.1} s",
            row.t,
            row.n,
            row.cov.get(P1, P1),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut r = common::rng(4);
    let g = Ranges { mass: (0.8, 1.25), omega: (0.8, 1.25), gamma: (0.5, 2.0), lambda: (1e-2, 1.0), diffusion: (0.5, 2.0) };
    let (mut eq, mut fft): (f64, f64) = (0.0, 0.0);
    let n = 100;
    for _ in 0..n {
        let p = draw(&mut r, g);
        let c = common::steady_covariance(&p);
        let t0 = spectral::correlators_exact(&p, &[0.0]).unwrap();
        let s = |i: usize, j: usize| (c[(i, i)] * c[(j, j)]).sqrt();
        for (pair, i, j) in [(CorrelatorPair::Q1Q1, Q1, Q1), (CorrelatorPair::Q2Q2, Q2, Q2), (CorrelatorPair::Q1Q2, Q1, Q2)] {
            eq = eq.max((t0.get(pair).unwrap()[0] - c[(i, j)]).abs() / s(i, j));
        }
        let f = spectral::correlators_fft(&p, 20.0, FftOptions::default()).unwrap();
        let e = spectral::correlators_exact(&p, &f.times).unwrap();
        for &pair in &f.pairs {
            let sc = match pair {
                CorrelatorPair::Q1Q1 => s(Q1, Q1),
                CorrelatorPair::Q2Q2 => s(Q2, Q2),
                _ => s(Q1, Q2),
            };
            for (a, b) in f.get(pair).unwrap().iter().zip(e.get(pair).unwrap()) {
                fft = fft.max((a - b).abs() / sc);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        eq <= 1e-8 && fft <= 1e-6 && secs < 60.0,
        format!("{n} draws, equal-time vs Lyapunov {eq:.2e} (tol 1e-8), FFT vs residues {fft:.2e} on |t| <= 20 (tol 1e-6), {secs:.1} s"),
    )
}

fn criterion_5() -> Outcome {
    let lambdas: Vec<f64> = (0..=8).map(|k| 0.01 * 10f64.powf(k as f64 / 8.0)).collect();
    let mut errs = Vec::new();
    for &l in &lambdas {
        let p = SystemParams::identical(1.0, 1.0, 1.0, 1.0, 1.0, l).unwrap();
        let ex = spectral::find_poles(&p).unwrap();
        let pt = spectral::perturbative_poles(&p, PerturbativeOrder::Second).unwrap();
        errs.push((pt.omega1 - ex.omega1).norm().max((pt.omega2 - ex.omega2).norm()));
    }
    let lx: Vec<f64> = lambdas.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|x| x.ln()).collect();
    let s = common::slope(&lx, &ly);
    let l = 0.05;
    let p = SystemParams::identical(1.0, 1.0, 1.0, 1.0, 1.0, l).unwrap();
    let pt = spectral::perturbative_poles(&p, PerturbativeOrder::Second).unwrap();
    let ex = spectral::find_poles(&p).unwrap();
    let shift = pt.omega2.im;
    let gap = (ex.omega2.im - 1.25e-3).abs();
    let pass = (s - 3.0).abs() <= 0.2 && (shift - 1.25e-3).abs() < 1e-15 && gap <= l * l * l;
    outcome(pass, format!("log-log slope {s:.3} (3.0 +- 0.2), dgamma2 = {shift:.6e}, |exact - 1.25e-3| = {gap:.2e} <= lambda^3 = {:.2e}", l * l * l))
}

fn criterion_6() -> Outcome {
    let l = 0.01;
    let p = SystemParams::identical(1.0, 1.0, 1.0, 1.0, 1.0, l).unwrap();
    let exact = spectral::correlators_exact(&p, &[0.0]).unwrap().get(CorrelatorPair::Q2Q2).unwrap()[0];
    let printed = 1.0 * 1.0 / (2.0 * l * l);
    let rel = (printed - exact).abs() / exact;
    let small = spectral::correlators_small_lambda(&p, &[0.0], true).unwrap();
    let direct = (small.get(CorrelatorPair::Q1Q1).unwrap()[0] / small.get(CorrelatorPair::Q2Q2).unwrap()[0]).sqrt();
    let ratio = spectral::sigma_ratio(&p).unwrap();
    let consistency = (ratio - direct).abs() / direct;
    let g22_small = small.get(CorrelatorPair::Q2Q2).unwrap()[0];
    let pass = rel <= 0.05 && consistency <= 1e-12 && (g22_small - printed).abs() <= 1e-12 * printed;
    outcome(pass, format!("G22(0) leading order {printed:.6e} vs residues {exact:.6e} ({:.3}%), sigma ratio consistency {consistency:.1e}", 100.0 * rel))
}

fn criterion_7() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    // N at T_C = w/2
    let w = 1.3;
    let half = CQParams::new(OscillatorParams::new(1.0, 1.0, 1.0 / w, 1.0).unwrap(), 1.0, w * w, 0.1).unwrap();
    let n_half = cq::occupation_number(&half).unwrap();
    pass &= n_half.n == 0.5 && (n_half.t_c - w / 2.0).abs() < 1e-15;
    notes.push(format!("N(T_C = w/2) = {}", n_half.n));
    let mut min_n = f64::INFINITY;
    for k in 0..200 {
        let d = 10f64.powf(-3.0 + 6.0 * k as f64 / 199.0);
        let c = CQParams::new(OscillatorParams::new(1.0, 1.0, 1.0, d).unwrap(), 1.0, w * w, 0.1).unwrap();
        min_n = min_n.min(cq::occupation_number(&c).unwrap().n);
    }
    pass &= min_n >= 0.5;
    notes.push(format!("min N over T_C sweep {min_n:.6}"));
    let mut r = common::rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let mc = common::log_uniform(&mut r, 0.2, 5.0);
        let mq = common::log_uniform(&mut r, 0.2, 5.0);
        let c = CQParams::new(
            OscillatorParams::new(mc, mc * common::log_uniform(&mut r, 0.1, 10.0), mc * common::log_uniform(&mut r, 0.05, 5.0), common::log_uniform(&mut r, 0.1, 100.0)).unwrap(),
            mq,
            mq * common::log_uniform(&mut r, 0.1, 10.0),
            common::log_uniform(&mut r, 1e-2, 10.0),
        )
        .unwrap();
        let mapped = cq::map_to_classical(&c).unwrap();
        let oracle = common::steady_covariance(&mapped);
        let got = cq::hybrid_equal_time(&c).unwrap().to_covariance();
        worst = worst.max(common::scaled_dev(got.matrix(), &oracle));
    }
    pass &= worst <= 1e-9;
    notes.push(format!("equal-time vs mapped Lyapunov {worst:.2e}"));
    let tiny = CQParams::identical(1.0, 1.0, 1.0, 1.0, 1e-8).unwrap();
    let h = cq::hybrid_correlators(&tiny, &[-5.0, -1.0, 0.0, 1.0, 5.0]).unwrap();
    let finite = h.qq.iter().chain(&h.keldysh).chain(&h.classical_response).chain(&h.quantum_response_imag).all(|v| v.is_finite());
    let eq_tiny = cq::hybrid_equal_time(&tiny).unwrap();
    let finite = finite && [eq_tiny.p2, eq_tiny.pp, eq_tiny.q2, eq_tiny.qq, eq_tiny.q_q, eq_tiny.pq, eq_tiny.p_q, eq_tiny.p_p].iter().all(|v| v.is_finite());
    pass &= finite;
    notes.push(format!("finite at lambda = 1e-8: {finite}"));
    outcome(pass, notes.join(", "))
}

fn criterion_8() -> Outcome {
    let mut devs = Vec::new();
    for d in [10.0, 1e2, 1e3, 1e4] {
        let c = CQParams::identical(1.0, 1.0, 1.0, d, 0.1).unwrap();
        let mapped = cq::map_to_classical(&c).unwrap();
        let g = common::gibbs(&mapped, d / 2.0);
        let h = cq::hybrid_equal_time(&c).unwrap().to_covariance();
        devs.push(common::scaled_dev(h.matrix(), &g));
    }
    let monotone = devs.windows(2).all(|w| w[1] < w[0]);
    let pass = monotone && devs[3] < 1e-2;
    outcome(pass, format!("deviation from Gibbs at D = 10..1e4: {}", devs.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>().join(", ")))
}

fn criterion_9() -> Outcome {
    let w = 1.0;
    let p = SystemParams::identical(1.0, w, 1.0, 0.1, 1.0, 0.01).unwrap();
    let mut zero: f64 = 0.0;
    for k in 0..20 {
        let t = (PI / 2.0 + k as f64 * PI) / w;
        zero = zero.max(spectral::mutual_information(&p, CorrelatorPair::Q2Q2, t, InformationRoute::SmallLambda).unwrap());
    }
    let ratio = 1.0 + 0.1;
    let envelope = |t: f64| -0.5 * (1.0 - (w * t).cos().powi(2) / (ratio * ratio)).ln();
    let mut peak_rel: f64 = 0.0;
    for k in 4..13 {
        let t = k as f64 * PI / w;
        if t <= 10.0 {
            continue;
        }
        let i = spectral::mutual_information(&p, CorrelatorPair::Q1Q1, t, InformationRoute::SmallLambda).unwrap();
        peak_rel = peak_rel.max((i - envelope(t)).abs() / envelope(t));
    }
    let peak = envelope(0.0);
    let mut pointwise: f64 = 0.0;
    for k in 0..=600 {
        let t = 10.0 + 30.0 * k as f64 / 600.0;
        let i = spectral::mutual_information(&p, CorrelatorPair::Q1Q1, t, InformationRoute::SmallLambda).unwrap();
        pointwise = pointwise.max((i - envelope(t)).abs() / peak);
    }
    let pass = zero <= 1e-12 && peak_rel <= 0.01 && pointwise <= 0.01;
    outcome(pass, format!("max I22 at zeros {zero:.1e}, I11 vs envelope at peaks {:.3}%, pointwise {:.3}% of peak", 100.0 * peak_rel, 100.0 * pointwise))
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let (stats, _, _) = fig1_ensemble();
    let p = fig1();
    let row = stats.last();
    let drift = sde::energy_drift(&p, &row.cov);
    let se = p.osc1.damping / p.osc1.mass.powi(2) * row.cov_stderr[P1][P1];
    let z_drift = drift.abs() / se;

    let free = SystemParams::new(OscillatorParams::new(1.0, 1.0, 0.0, 0.0).unwrap(), OscillatorParams::new(1.0, 1.0, 0.0, 1.0).unwrap(), 0.0).unwrap();
    let dn = assemble_drift_noise(&free).unwrap();
    let cfg = SimConfig::new(5e-4, 10.0, 10_000, 10).with_stride(2000);
    let run = sde::simulate_ensemble(&dn, &cfg).unwrap();
    let end = run.last();
    let rate = end.energy / end.t;
    let rate_se = end.energy_stderr / end.t;
    let want = free.osc2.diffusion / (2.0 * free.osc2.mass);
    let z_rate = (rate - want).abs() / rate_se;
    let ts: Vec<f64> = run.rows.iter().map(|r| r.t).collect();
    let es: Vec<f64> = run.rows.iter().map(|r| r.energy).collect();
    let fitted = common::slope(&ts, &es);
    let secs = start.elapsed().as_secs_f64();
    let pass = z_drift <= 3.0 && z_rate <= 3.0 && secs < 60.0;
    outcome(
        pass,
        format!(
            "energy drift on ensemble {drift:.3e} ({z_drift:.2} SE), free heating rate {rate:.4} vs D2/(2 m2) = {want} ({z_rate:.2} SE), fitted slope {fitted:.4}, {secs:.1} s"
        ),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, f) in criteria {
        let name = format!("criterion_{k}");
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(o) => {
                println!("{} criterion {k}: {} [{secs:.2} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                if !o.pass {
                    failed += 1;
                }
            }
            Err(e) => {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
                println!("FAIL criterion {k}: panicked: {msg} [{secs:.2} s]");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
