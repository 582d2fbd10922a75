//! The twelve acceptance criteria at full size. Each test prints one
//! `criterion N ... PASS|FAIL` line to stderr, uncaptured, so the verdicts
//! show up in the plain `cargo test` log.

use std::io::Write;

use balnet_core::experiments::{
    row_covariance_suite, rotated_variance_suite, mean_ratio_passed, norm_ensemble, oracle_consistency, rank_one_suite,
    route_equivalence, run_ensemble, selfavg_sweep, slope_passed, spectrum_run, single_realization_cdf, variance_report,
    w_ensemble, BLOCK_VARIANCE_REL, IDENTITY_TOL, KS_LIMIT, QQ_LIMIT, RADIUS_FACTOR, SPECTRUM_MATCH_TOL,
    W_VARIANCE_REL, Z_LIMIT,
};
use balnet_core::stats::{variance, wn_gaussian_test, wn_mean_test};
use balnet_core::{
    Complex64, Harness, InitialCondition, IntegratorOptions, ModelParams, NoiseLaw, NoiseWeights, TimeGrid,
    TrialSeed,
};

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    let line = format!(
        "criterion {id:>2} {name:<28} {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn scenario(n: usize) -> (ModelParams, InitialCondition) {
    (
        ModelParams::new(n, 0.5, 2.0, 1.0, 1.0, 0.0).unwrap(),
        InitialCondition::homogeneous(1.0, -1.0, NoiseLaw::gaussian(0.25).unwrap()).unwrap(),
    )
}

fn sampler_params() -> ModelParams {
    ModelParams::new(50, 0.4, 2.0, 1.0, 1.0, 0.0).unwrap()
}

#[test]
fn criterion_01_row_covariance() {
    let start = std::time::Instant::now();
    let r = row_covariance_suite(&sampler_params(), 100_000, 101, &Harness::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = r.checks.iter().max_by(|a, b| a.z.abs().total_cmp(&b.z.abs())).unwrap();
    verdict(
        1,
        "row covariance",
        r.passed() && secs < 60.0,
        format!(
            "pairs={} max|z|={:.3} at ({},{}) limit={Z_LIMIT} runtime={secs:.1}s",
            r.checks.len(),
            r.max_abs_z(),
            worst.j,
            worst.l
        ),
    );
}

#[test]
fn criterion_02_route_equivalence() {
    let r = route_equivalence(&sampler_params(), 100_000, 202, &Harness::default()).unwrap();
    verdict(
        2,
        "route equivalence",
        r.passed(),
        format!(
            "statistics={} max|z|={:.3} limit={Z_LIMIT} max row sum={:.2e}",
            r.checks.len() + r.independence.len(),
            r.max_abs_z(),
            r.max_row_sum
        ),
    );
}

#[test]
fn criterion_03_rotated_variances() {
    let r = rotated_variance_suite(&sampler_params(), 100_000, 303, &Harness::default()).unwrap();
    let cases: Vec<String> = r
        .case_means()
        .iter()
        .map(|(k, obs, want)| format!("{k:?} {obs:.5}/{want:.5}"))
        .collect();
    let z = r
        .columns
        .iter()
        .map(|c| &c.1)
        .chain(&r.cross)
        .map(|c| c.z.abs())
        .fold(0.0, f64::max);
    verdict(
        3,
        "rotated variances",
        r.passed(),
        format!(
            "[{}] max|z|={z:.3} |first column|<={:.1e}",
            cases.join(", "),
            r.first_column_max
        ),
    );
}

#[test]
fn criterion_04_rank_one_identities() {
    let cases = rank_one_suite(&sampler_params(), &[8, 32, 64], &[0.5, 1.0, 2.0], 404).unwrap();
    let worst = cases.iter().map(|c| c.report.max_deviation()).fold(0.0, f64::max);
    verdict(
        4,
        "rank-one identities",
        worst <= IDENTITY_TOL,
        format!("cases={} max deviation={worst:.2e} tol={IDENTITY_TOL:e}", cases.len()),
    );
}

#[test]
fn criterion_05_single_realization_cdf() {
    let (p, ic) = scenario(1000);
    let start = std::time::Instant::now();
    let r = single_realization_cdf(&p, &ic, &[0.5, 1.0, 2.0], TrialSeed::new(505, 0), &IntegratorOptions::default(), 2).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ks: Vec<String> = r.snapshots.iter().map(|s| format!("t={} ks={:.4}", s.t, s.ks)).collect();
    verdict(
        5,
        "single-realization cdf",
        r.passed() && secs < 300.0,
        format!("{} limit={KS_LIMIT} runtime={secs:.1}s", ks.join(" ")),
    );
}

#[test]
fn criterion_06_block_variance_growth() {
    let (p, ic) = scenario(500);
    let grid = TimeGrid::new(vec![0.0, 0.5, 1.0, 1.5, 2.0]).unwrap();
    let s = run_ensemble(
        &p,
        &ic,
        &grid,
        100,
        |t| TrialSeed::new(606, t),
        Complex64::i(),
        &IntegratorOptions::default(),
        &Harness::default(),
    )
    .unwrap();
    let r = variance_report(&s, &p, &ic).unwrap();
    let rows: Vec<String> = r
        .rows
        .iter()
        .map(|row| format!("t={} I={:.4} E={:.4} want={:.4}", row.t, row.excess_i, row.excess_e, row.spread))
        .collect();
    verdict(
        6,
        "block variance growth",
        r.variance_passed(),
        format!(
            "{} max rel={:.4} limit={BLOCK_VARIANCE_REL}",
            rows.join("; "),
            r.max_relative_error()
        ),
    );
}

#[test]
fn criterion_07_self_averaging() {
    let (p, ic) = scenario(100);
    let fit = selfavg_sweep(
        &p,
        &ic,
        &[100, 200, 400, 800],
        200,
        1.0,
        Complex64::i(),
        707,
        &IntegratorOptions::default(),
        &Harness::default(),
    )
    .unwrap();
    let vars: Vec<String> = fit.variances.iter().map(|v| format!("{v:.3e}")).collect();
    verdict(
        7,
        "self-averaging slope",
        slope_passed(&fit),
        format!(
            "slope={:.4} (se {:.4}) variances=[{}] range=[-1.4,-0.6]",
            fit.fit.slope,
            fit.fit.slope_se,
            vars.join(", ")
        ),
    );
}

#[test]
fn criterion_08_divergent_mean() {
    let p = ModelParams::new(1000, 0.5, 2.0, 1.0, 1.0, 0.0).unwrap();
    let ic = InitialCondition::homogeneous(0.0, 1.0, NoiseLaw::gaussian(0.25).unwrap()).unwrap();
    let s = w_ensemble(&p, &ic, 1.0, 500, 808, &IntegratorOptions::default(), &Harness::default()).unwrap();
    let r = wn_mean_test(&s.w_samples, &p, &ic, 1.0).unwrap();
    verdict(
        8,
        "divergent mean",
        mean_ratio_passed(r.ratio),
        format!(
            "mean={:.4} (se {:.4}) predicted={:.4} ratio={:.4} range=[0.9,1.1]",
            r.sample_mean, r.standard_error, r.predicted, r.ratio
        ),
    );
}

#[test]
fn criterion_09_balanced_gaussian() {
    let p = ModelParams::new(1000, 0.25, 2.0, 1.0, 1.0, 0.0).unwrap();
    let ic =
        InitialCondition::new(0.0, 0.0, NoiseLaw::gaussian(0.5).unwrap(), NoiseLaw::gaussian(0.1).unwrap()).unwrap();
    let s = w_ensemble(&p, &ic, 1.0, 500, 909, &IntegratorOptions::default(), &Harness::default()).unwrap();
    let r = wn_gaussian_test(&s.w_samples, &p, &ic, 1.0).unwrap();
    let rel_swapped = r.relative_error(NoiseWeights::Swapped);
    let rel_mixture = r.relative_error(NoiseWeights::Mixture);
    let rel = |want: f64| (r.sample_variance - want).abs() / want;
    let better = if rel_swapped <= rel_mixture { "swapped (1-f, f)" } else { "mixture (f, 1-f)" };
    let var_proj = variance(&s.m_projection);
    verdict(
        9,
        "balanced gaussian",
        rel_swapped <= W_VARIANCE_REL && r.qq_deviation <= QQ_LIMIT,
        format!(
            "var w={:.4} target={:.4} rel={:.4} limit={W_VARIANCE_REL}; mixture target={:.4} rel={:.4}; \
             better weights: {better}; qq={:.4} limit={QQ_LIMIT}; \
             integrated-kernel variance {:.4} (rel {:.4}) / mixture {:.4} (rel {:.4}); \
             var (x(1),m)={:.4} (rel to target {:.4})",
            r.sample_variance,
            r.variance_swapped,
            rel_swapped,
            r.variance_mixture,
            rel_mixture,
            r.qq_deviation,
            r.integral_swapped,
            rel(r.integral_swapped),
            r.integral_mixture,
            rel(r.integral_mixture),
            var_proj,
            (var_proj - r.variance_swapped).abs() / r.variance_swapped,
        ),
    );
}

#[test]
fn criterion_10_norm_bound() {
    let (p, _) = scenario(500);
    let r = norm_ensemble(&p, 100, 1010, &Harness::default()).unwrap();
    let max = r.norms.iter().copied().fold(0.0, f64::max);
    verdict(
        10,
        "norm bound",
        r.passed(),
        format!(
            "violations={}/{} max norm={max:.4} threshold={:.4}",
            r.violations,
            r.norms.len(),
            r.threshold
        ),
    );
}

#[test]
fn criterion_11_oracle_consistency() {
    let r = oracle_consistency(1.3).unwrap();
    verdict(
        11,
        "oracle consistency",
        r.series_passed() && r.double_integral_passed(),
        format!(
            "series vs bessel rel={:.2e} (tol 1e-12); |iint R0 - A t^2 - sigma_tilde|={:.3e} (tol 1e-6); \
             |iint R0 - sigma_tilde|={:.3e}",
            r.series_vs_bessel, r.double_integral_minus_at2, r.double_integral
        ),
    );
}

#[test]
fn criterion_12_spectrum() {
    let (p, _) = scenario(200);
    let shifted = spectrum_run(&p, TrialSeed::new(1212, 0), false).unwrap();
    let hom = ModelParams::new(1000, 0.5, 1.0, 1.0, 1.0, 0.0).unwrap();
    let big = spectrum_run(&hom, TrialSeed::new(1212, 1), false).unwrap();
    let limit = RADIUS_FACTOR * hom.norm_bound();
    verdict(
        12,
        "spectrum",
        shifted.shift_mismatch <= SPECTRUM_MATCH_TOL && big.spectral_radius <= limit,
        format!(
            "n=200 mismatch={:.2e} tol={SPECTRUM_MATCH_TOL:e}; n=1000 radius={:.4} limit={limit:.4}",
            shifted.shift_mismatch, big.spectral_radius
        ),
    );
}
