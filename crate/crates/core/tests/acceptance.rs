//! Acceptance criteria, one line each.
//!
//! Runs without the libtest harness so every verdict is printed even when
//! output capture is on. Exits non-zero if any hard criterion fails; the
//! timing criterion is enforced only when its ordering is stable across
//! repeated measurements.

mod common;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use svdkf::arrays::{mwgs, qr_triangularize, svd_array_update_with_left, PreArray};
use svdkf::bench::{default_deltas, monte_carlo, run_once, sweep, RunConfig};
use svdkf::filters::loglik::{conventional_terms, svd_terms};
use svdkf::filters::{loglik_svd, CovarianceRepr, Filter, FilterKind, StepReport};
use svdkf::metrics::{ErrorReport, MRE_ZERO_FLOOR};
use svdkf::model::{example1, example2, simulate, InitialState};

const EQUIV_TOL: f64 = 1e-8;
const FORM_TOL: f64 = 1e-9;
const LOGLIK_TOL: f64 = 1e-9;
const IDENTITY_TOL: f64 = 1e-12;
const KERNEL_TOL: f64 = 1e-10;

struct Verdict {
    id: &'static str,
    pass: bool,
    hard: bool,
    detail: String,
}

fn verdict(id: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, pass, hard: true, detail }
}

/// All five filters give the same error statistics on the satellite model.
fn equivalence() -> Verdict {
    let start = Instant::now();
    let config = RunConfig::new(example1(), FilterKind::ALL.to_vec(), 100, 100, 20_160_401);
    let mut worst = 0.0_f64;
    let mut outcomes = Vec::new();
    for j in 0..config.runs {
        let o = run_once(&config, j).expect("run");
        let truth = [o.trajectory.states.clone()];
        let base = ErrorReport::from_runs(&truth, &[o.filters[0].estimates.clone()], None, MRE_ZERO_FLOOR).unwrap();
        for f in &o.filters[1..] {
            let r = ErrorReport::from_runs(&truth, std::slice::from_ref(&f.estimates), None, MRE_ZERO_FLOOR).unwrap();
            for (a, b) in r.rmse.iter().zip(&base.rmse) {
                worst = worst.max(common::rel_scalar(*a, *b));
            }
            for (a, b) in r.mre_percent.iter().zip(&base.mre_percent) {
                if let (Some(a), Some(b)) = (a, b) {
                    worst = worst.max(common::rel_scalar(*a, *b));
                } else {
                    worst = worst.max(if a.is_some() == b.is_some() { 0.0 } else { f64::INFINITY });
                }
            }
        }
        outcomes.push(o);
    }
    let report = svdkf::bench::summarize(&config, &outcomes).unwrap();
    for s in &report.filters[1..] {
        for (a, b) in s.errors.rmse.iter().zip(&report.filters[0].errors.rmse) {
            worst = worst.max(common::rel_scalar(*a, *b));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let rmse: Vec<String> = report.filters[0].errors.rmse.iter().map(|v| format!("{v:.4}")).collect();
    verdict(
        "1 equivalence",
        worst <= EQUIV_TOL && secs < 30.0,
        format!("max relative spread {worst:.1e} (≤ {EQUIV_TOL:.0e}), {secs:.1}s (< 30s), RMSE [{}]", rmse.join(", ")),
    )
}

/// Satellite RMSE of the first component against the published magnitude.
fn magnitude() -> Verdict {
    let base = RunConfig::new(example1(), vec![FilterKind::Kf], 500, 100, 1);
    let fixed = monte_carlo(&base.clone().with_initial_state(InitialState::Mean)).unwrap();
    let sampled = monte_carlo(&base).unwrap();
    let x1 = fixed.filters[0].errors.rmse[0];
    let x1_sampled = sampled.filters[0].errors.rmse[0];
    // average posterior standard deviation of x1: the floor for any unbiased filter
    let floor = optimal_rmse_x1();
    verdict(
        "2 magnitude",
        (0.52..=0.64).contains(&x1),
        format!(
            "RMSE_x1 = {x1:.4} with x0 = mean, {x1_sampled:.4} with sampled x0; target [0.52, 0.64]; \
             predicted optimum {floor:.4}"
        ),
    )
}

fn optimal_rmse_x1() -> f64 {
    let model = example1();
    let mut p = model.pi0.clone();
    let mut acc = 0.0;
    for k in 1..=100 {
        let prior = common::oracle_prior(&model, k, &p);
        let gain = common::oracle_gain_prior(&prior, &model.h, &model.r);
        p = common::oracle_posterior_standard(&prior, &gain, &model.h);
        acc += p[(0, 0)];
    }
    (acc / 100.0).sqrt()
}

/// Failure pattern of the ill-conditioning sweep.
fn robustness() -> (Verdict, u64) {
    let config = RunConfig::new(example2(0.1).unwrap(), FilterKind::ALL.to_vec(), 50, 100, 1)
        .with_initial_state(InitialState::Mean);
    let report = sweep(&default_deltas(), &config).unwrap();
    let first = |k| report.first_failure(k);

    let kf_ok = first(FilterKind::Kf).is_some_and(|d| d >= 1e-8);
    let svd_srkf = first(FilterKind::SvdSrkf);
    let svd_kf = first(FilterKind::SvdKf);
    let order_ok = match (svd_srkf, svd_kf) {
        (Some(a), Some(b)) => a >= b,
        (Some(_), None) => true,
        _ => false,
    };
    let window_ok = svd_srkf.is_some_and(|d| (1e-11 * 0.99..=1e-9 * 1.01).contains(&d));
    let mut worst = 0.0_f64;
    let mut robust_ok = true;
    for kind in [FilterKind::Srkf, FilterKind::Udkf, FilterKind::SvdKf] {
        for c in report.row(kind) {
            robust_ok &= c.is_finite();
            worst = worst.max(c.rmse_norm);
        }
    }
    let bounded = worst <= 0.15;

    // the new SVD filter's reciprocal counter over the whole sweep
    let mut reciprocals = 0;
    for &delta in &report.deltas {
        let cfg = RunConfig { model: example2(delta).unwrap(), filters: vec![FilterKind::SvdKf], runs: 3, ..config.clone() };
        reciprocals += monte_carlo(&cfg).unwrap().filters[0].diagonal_reciprocals;
    }

    let fmt = |d: Option<f64>| d.map_or("never".to_string(), |d| format!("{d:e}"));
    (
        verdict(
            "3 robustness",
            kf_ok && order_ok && window_ok && robust_ok && bounded,
            format!(
                "kf breaks at {} (a: {}), svd-srkf at {} vs svd-kf {} (b: {}), srkf/udkf/svd-kf finite: {}, max ‖RMSE‖₂ {worst:.4} (c: {})",
                fmt(first(FilterKind::Kf)),
                kf_ok,
                fmt(svd_srkf),
                fmt(svd_kf),
                order_ok && window_ok,
                robust_ok,
                robust_ok && bounded,
            ),
        ),
        reciprocals,
    )
}

fn svd_reports(model: &svdkf::model::StateSpaceModel, traj: &svdkf::model::Trajectory) -> Vec<StepReport> {
    let mut f = Filter::new(FilterKind::SvdKf, model).unwrap();
    (1..=traj.horizon()).map(|k| f.step(model, k, &DVector::zeros(0), &traj.measurement(k)).unwrap()).collect()
}

/// Innovation-form log-likelihood, conventional vs SVD.
fn loglik_identity() -> Verdict {
    let mut rng = common::rng(17);
    let (mut worst, mut worst_det, mut worst_quad) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..100 {
        let model = common::random_model(&mut rng, 5, 3);
        let horizon = 1 + (i * 7) % 30;
        let traj = simulate(&model, horizon, None, 1000 + i as u64).unwrap();
        let conventional = common::oracle_loglik(&common::oracle_filter(&model, &traj.measurements));
        let reports = svd_reports(&model, &traj);
        let svd = loglik_svd(&reports).unwrap();
        worst = worst.max(common::rel_scalar(svd, conventional));
        for r in &reports {
            let CovarianceRepr::Svd { d_sqrt, .. } = &r.innovation_cov else { unreachable!() };
            let re = r.innovation_cov.reconstruct();
            let e_bar = r.normalized_innovation.as_ref().unwrap();
            let (ld1, q1) = conventional_terms(&re, &r.innovation).unwrap();
            let (ld2, q2) = svd_terms(d_sqrt, e_bar).unwrap();
            worst_det = worst_det.max(common::rel_scalar(ld2.exp(), ld1.exp()));
            worst_quad = worst_quad.max(common::rel_scalar(q2, q1));
        }
    }
    verdict(
        "4 loglik identity",
        worst <= LOGLIK_TOL && worst_det <= IDENTITY_TOL && worst_quad <= IDENTITY_TOL,
        format!(
            "|ΔL|/|L| {worst:.1e} (≤ {LOGLIK_TOL:.0e}), det {worst_det:.1e}, quadratic form {worst_quad:.1e} (≤ {IDENTITY_TOL:.0e})"
        ),
    )
}

/// Single-step covariance, gain and form identities on random instances.
fn single_steps() -> Verdict {
    let mut rng = common::rng(5);
    let (mut filters, mut forms, mut gains) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let model = common::random_model(&mut rng, 6, 3);
        let z = common::gaussian_vector(&mut rng, model.measurement_dim());
        let prior = common::oracle_prior(&model, 1, &model.pi0);
        let (h, r) = (&model.h, &model.r);
        let k8 = common::oracle_gain_prior(&prior, h, r);
        let eq7 = common::oracle_posterior_standard(&prior, &k8, h);
        let eq9 = common::oracle_posterior_information(&prior, h, r);
        let eq11 = common::oracle_posterior_joseph(&prior, &k8, h, r);
        forms = forms.max(common::rel(&eq7, &eq9)).max(common::rel(&eq11, &eq9)).max(common::rel(&eq7, &eq11));
        gains = gains.max(common::rel(&common::oracle_gain_posterior(&eq9, h, r), &k8));
        for kind in FilterKind::ALL {
            let mut f = Filter::new(kind, &model).unwrap();
            f.step(&model, 1, &DVector::zeros(0), &z).unwrap();
            filters = filters.max(common::rel(&f.state().covariance(), &eq7));
        }
    }
    verdict(
        "5 single-step oracles",
        filters <= EQUIV_TOL && forms <= FORM_TOL && gains <= FORM_TOL,
        format!("filters vs standard form {filters:.1e} (≤ {EQUIV_TOL:.0e}), covariance forms {forms:.1e}, gain forms {gains:.1e} (≤ {FORM_TOL:.0e})"),
    )
}

/// Gram reconstruction and orthogonality of the array kernels.
fn kernels() -> Verdict {
    let mut rng = common::rng(11);
    let (mut svd, mut orth, mut qr, mut ud) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..1000 {
        let cols = 1 + i % 6;
        let rows = cols + (i / 6) % 5;
        let a = common::gaussian_matrix(&mut rng, rows, cols);
        let gram = a.transpose() * &a;

        let post = svd_array_update_with_left(PreArray::new(a.clone()).unwrap()).unwrap();
        svd = svd.max(common::rel(&post.gram(), &gram));
        let id = DMatrix::<f64>::identity(cols, cols);
        orth = orth.max((post.v.transpose() * &post.v - &id).norm());
        let w = post.w.as_ref().unwrap();
        orth = orth.max((w.transpose() * w - &id).norm());

        let r = qr_triangularize(PreArray::new(a.clone()).unwrap()).unwrap();
        qr = qr.max(common::rel(&(r.transpose() * &r), &gram));

        let b = common::gaussian_matrix(&mut rng, cols, rows);
        let weights = DVector::from_fn(rows, |j, _| 0.05 + (j as f64 * 0.37).fract() * 3.0);
        let target = &b * DMatrix::from_diagonal(&weights) * b.transpose();
        ud = ud.max(common::rel(&mwgs(&b, &weights).unwrap().reconstruct(), &target));
    }
    verdict(
        "6 array kernels",
        svd <= KERNEL_TOL && orth <= KERNEL_TOL && qr <= KERNEL_TOL && ud <= KERNEL_TOL,
        format!("SVD {svd:.1e}, orthogonality {orth:.1e}, QR {qr:.1e}, MWGS {ud:.1e} (≤ {KERNEL_TOL:.0e})"),
    )
}

fn no_inversion(sweep_reciprocals: u64) -> Verdict {
    let config = RunConfig::new(example1(), vec![FilterKind::SvdSrkf, FilterKind::SvdKf], 20, 100, 3);
    let report = monte_carlo(&config).unwrap();
    let old = report.filters[0].diagonal_reciprocals;
    let new = report.filters[1].diagonal_reciprocals;
    verdict(
        "7 no-inversion audit",
        new == 0 && sweep_reciprocals == 0 && old > 0,
        format!("svd-kf reciprocals: {new} on the satellite model, {sweep_reciprocals} over the sweep; svd-srkf took {old}"),
    )
}

/// Mean per-run cost ordering; hard only if the ordering is the same in every repetition.
fn timing() -> Verdict {
    let config = RunConfig::new(example1(), vec![FilterKind::Kf, FilterKind::SvdSrkf, FilterKind::SvdKf], 300, 100, 1)
        .with_timing(true);
    let mut outcomes = Vec::new();
    let mut samples = Vec::new();
    for _ in 0..3 {
        let r = monte_carlo(&config).unwrap();
        let t: Vec<f64> = r.filters.iter().map(|s| s.mean_seconds).collect();
        outcomes.push(t[0] < t[1] && t[1] < t[2]);
        samples.push(format!("kf {:.2e} / svd-srkf {:.2e} / svd-kf {:.2e}", t[0], t[1], t[2]));
    }
    let stable = outcomes.iter().all(|o| *o == outcomes[0]);
    let pass = outcomes.iter().all(|o| *o);
    Verdict {
        id: "8 timing order",
        pass,
        hard: stable,
        detail: format!(
            "{}; {}",
            if stable { "stable" } else { "unstable, report only" },
            samples.join("; ")
        ),
    }
}

fn main() {
    let mut verdicts = vec![equivalence(), magnitude()];
    let (robust, reciprocals) = robustness();
    verdicts.push(robust);
    verdicts.push(loglik_identity());
    verdicts.push(single_steps());
    verdicts.push(kernels());
    verdicts.push(no_inversion(reciprocals));
    verdicts.push(timing());

    let mut failed = 0;
    for v in &verdicts {
        let status = match (v.pass, v.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SOFT",
        };
        println!("[{status}] criterion {}: {}", v.id, v.detail);
        if !v.pass && v.hard {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", verdicts.iter().filter(|v| v.pass).count(), verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
