use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use balnet_core::experiments::{
    self, row_covariance_suite, rotated_variance_suite, mean_ratio_passed, route_equivalence, run_ensemble,
    selfavg_sweep, slope_passed, spectrum_run, stability_sweep, single_realization_cdf, variance_report, ZCheck,
    BLOCK_VARIANCE_REL, KS_LIMIT, QQ_LIMIT, W_VARIANCE_REL,
};
use balnet_core::io::{Cell, CsvWriter};
use balnet_core::matrix::{sample_projection, sample_unconstrained, sample_via_basis};
use balnet_core::rng::sweep_trial_id;
use balnet_core::stats::{wn_tests, WnReport};
use balnet_core::theory::{stability_report, VarianceSeries};
use balnet_core::{build_basis, Complex64, Harness, IntegratorOptions, NoiseWeights, TrialSeed};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Files written so far, relative to the output directory.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn csv(&mut self, name: &str, header: &[&str]) -> Result<CsvWriter<BufWriter<File>>, CliError> {
        let f = self.create(name)?;
        Ok(CsvWriter::new(f, header)?)
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut f = self.create(name)?;
        serde_json::to_writer_pretty(&mut f, value).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }
}

pub struct Outcome {
    pub passed: bool,
    /// Which trial streams of `master_seed` were consumed.
    pub seeds: Vec<Value>,
    pub summary: String,
}

fn streams(label: &str, sweep: Option<u32>, trials: u64) -> Value {
    json!({ "label": label, "sweep": sweep, "trials": [0, trials] })
}

fn options(cfg: &ExperimentConfig) -> Result<IntegratorOptions, CliError> {
    Ok(IntegratorOptions {
        tol: cfg.get("tol")?,
        ..IntegratorOptions::default()
    })
}

fn write_checks(w: &mut CsvWriter<BufWriter<File>>, suite: &str, checks: &[ZCheck]) -> Result<(), CliError> {
    for c in checks {
        w.row(&[
            Cell::S(suite),
            Cell::S(c.statistic),
            Cell::U(c.j as u64),
            Cell::U(c.l as u64),
            Cell::F(c.observed),
            Cell::F(c.expected),
            Cell::F(c.standard_error),
            Cell::F(c.z),
        ])?;
    }
    Ok(())
}

pub fn verify_lemma1(cfg: &ExperimentConfig, h: &Harness, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = cfg.params()?;
    let seed: u64 = cfg.get("master_seed")?;
    let rows: u64 = cfg.get("rows")?;
    let route_trials: u64 = cfg.get("route_trials")?;
    let rotated_trials: u64 = cfg.get("rotated_trials")?;
    let cov = row_covariance_suite(&p, rows, seed, h)?;
    let route = route_equivalence(&p, route_trials, seed, h)?;
    let rotated = rotated_variance_suite(&p, rotated_trials, seed, h)?;
    let rotated_checks: Vec<ZCheck> = rotated.columns.iter().map(|c| c.1.clone()).chain(rotated.cross.clone()).collect();

    let mut w = out.csv(
        "cov_report.csv",
        &["suite", "statistic", "j", "l", "observed", "expected", "standard_error", "z"],
    )?;
    write_checks(&mut w, "covariance", &cov.checks)?;
    write_checks(&mut w, "routes", &route.checks)?;
    write_checks(&mut w, "routes", &route.independence)?;
    write_checks(&mut w, "rotated", &rotated_checks)?;
    w.finish()?;

    let first_failure = cov
        .checks
        .iter()
        .chain(&route.checks)
        .chain(&route.independence)
        .chain(&rotated_checks)
        .find(|c| !c.passed());
    let passed = first_failure.is_none() && rotated.passed();
    let summary = match first_failure {
        Some(c) => format!(
            "FAIL: {} ({}, {}) observed {} expected {} z = {:.3}",
            c.statistic, c.j, c.l, c.observed, c.expected, c.z
        ),
        None if !passed => format!("FAIL: rotated first column reaches {:.3e}", rotated.first_column_max),
        None => format!(
            "PASS: max |z| covariance {:.3}, routes {:.3}",
            cov.max_abs_z(),
            route.max_abs_z()
        ),
    };
    Ok(Outcome {
        passed,
        seeds: vec![
            streams("covariance rows (row 0 of each trial)", None, rows),
            streams("projection route / rotated", None, route_trials.max(rotated_trials)),
            streams("basis route", Some(1), route_trials),
        ],
        summary,
    })
}

pub fn theorem1(cfg: &ExperimentConfig, h: &Harness, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = cfg.params()?;
    let ic = cfg.initial()?;
    let grid = cfg.grid()?;
    let seed: u64 = cfg.get("master_seed")?;
    let trials = cfg.n_trials()?;
    let opts = options(cfg)?;
    let single = single_realization_cdf(
        &p,
        &ic,
        grid.times(),
        TrialSeed::new(seed, sweep_trial_id(0, 0)),
        &opts,
        cfg.get("lambda_points")?,
    )?;
    let mut w = out.csv("cdf_compare.csv", &["t", "lambda", "empirical", "oracle"])?;
    for r in &single.cdf_rows {
        w.row(&[Cell::F(r.t), Cell::F(r.lambda), Cell::F(r.empirical), Cell::F(r.oracle)])?;
    }
    w.finish()?;

    let summary = run_ensemble(
        &p,
        &ic,
        &grid,
        trials,
        |t| TrialSeed::new(seed, sweep_trial_id(1, t as u32)),
        Complex64::i(),
        &opts,
        h,
    )?;
    let report = variance_report(&summary, &p, &ic)?;
    let mut w = out.csv(
        "variance_compare.csv",
        &["t", "sigma_tilde", "excess_var_i", "excess_var_e", "rel_err_i", "rel_err_e", "ks_single"],
    )?;
    for (row, snap) in report.rows.iter().zip(single.snapshots.iter().skip(1)) {
        let (ri, re) = row.relative_errors();
        w.row(&[
            Cell::F(row.t),
            Cell::F(row.spread),
            Cell::F(row.excess_i),
            Cell::F(row.excess_e),
            Cell::F(ri),
            Cell::F(re),
            Cell::F(snap.ks),
        ])?;
    }
    w.finish()?;
    let ks_ok = single.max_ks() <= KS_LIMIT;
    let var_ok = report.variance_passed();
    Ok(Outcome {
        passed: ks_ok && var_ok,
        seeds: vec![streams("single realization", Some(0), 1), streams("variance ensemble", Some(1), trials)],
        summary: format!(
            "{}: max KS {:.4} (limit {KS_LIMIT}), max variance rel err {:.4} (limit {BLOCK_VARIANCE_REL})",
            if ks_ok && var_ok { "PASS" } else { "FAIL" },
            single.max_ks(),
            report.max_relative_error()
        ),
    })
}

pub fn theorem2(cfg: &ExperimentConfig, h: &Harness, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = cfg.params()?;
    let ic = cfg.initial()?;
    let seed: u64 = cfg.get("master_seed")?;
    let trials = cfg.n_trials()?;
    let t: f64 = cfg.get("t_max")?;
    let weights = cfg.weights()?;
    let s = experiments::w_ensemble(&p, &ic, t, trials, seed, &options(cfg)?, h)?;
    let mut w = out.csv("wn.csv", &["trial", "w", "x_dot_m"])?;
    for (k, (wv, proj)) in s.w_samples.iter().zip(&s.m_projection).enumerate() {
        w.row(&[Cell::U(k as u64), Cell::F(*wv), Cell::F(*proj)])?;
    }
    w.finish()?;
    let report = wn_tests(&s.w_samples, &p, &ic, t)?;
    let (passed, summary) = match &report {
        WnReport::Divergent(r) => (
            mean_ratio_passed(r.ratio),
            format!("mean ratio {:.4} (range [0.9, 1.1])", r.ratio),
        ),
        WnReport::Gaussian(r) => {
            let rel = r.relative_error(weights);
            let want = match weights {
                NoiseWeights::Swapped => r.variance_swapped,
                NoiseWeights::Mixture => r.variance_mixture,
            };
            (
                rel <= W_VARIANCE_REL && r.qq_deviation <= QQ_LIMIT,
                format!(
                    "variance {:.4} vs {want:.4} rel {rel:.4} (limit {W_VARIANCE_REL}), qq {:.4} (limit {QQ_LIMIT})",
                    r.sample_variance, r.qq_deviation
                ),
            )
        }
    };
    out.json(
        "wn_report.json",
        &json!({ "passed": passed, "weights": cfg.raw("weights"), "report": report }),
    )?;
    Ok(Outcome {
        passed,
        seeds: vec![streams("w ensemble", None, trials)],
        summary: format!("{}: {summary}", if passed { "PASS" } else { "FAIL" }),
    })
}

pub fn selfavg(cfg: &ExperimentConfig, h: &Harness, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = cfg.params()?;
    let ic = cfg.initial()?;
    let sizes: Vec<usize> = cfg.list("n_list")?;
    let trials = cfg.n_trials()?;
    let fit = selfavg_sweep(
        &p,
        &ic,
        &sizes,
        trials,
        cfg.get("t_max")?,
        cfg.z()?,
        cfg.get("master_seed")?,
        &options(cfg)?,
        h,
    )?;
    let mut w = out.csv("selfavg.csv", &["n", "variance", "slope", "slope_se"])?;
    for (n, v) in fit.sizes.iter().zip(&fit.variances) {
        w.row(&[Cell::U(*n as u64), Cell::F(*v), Cell::F(fit.fit.slope), Cell::F(fit.fit.slope_se)])?;
    }
    w.finish()?;
    let passed = slope_passed(&fit);
    Ok(Outcome {
        passed,
        seeds: (0..sizes.len() as u32)
            .map(|k| streams(&format!("n = {}", sizes[k as usize]), Some(k), trials))
            .collect(),
        summary: format!(
            "{}: slope {:.4} (range [-1.4, -0.6])",
            if passed { "PASS" } else { "FAIL" },
            fit.fit.slope
        ),
    })
}

pub fn spectrum(cfg: &ExperimentConfig, _h: &Harness, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = cfg.params()?;
    let seed = TrialSeed::new(cfg.get("master_seed")?, 0);
    let r = spectrum_run(&p, seed, cfg.get("unconstrained")?)?;
    let mut w = out.csv("spectrum.csv", &["matrix", "index", "re", "im"])?;
    let mut emit = |name: &str, ev: &[Complex64]| -> Result<(), CliError> {
        for (k, z) in ev.iter().enumerate() {
            w.row(&[Cell::S(name), Cell::U(k as u64), Cell::F(z.re), Cell::F(z.im)])?;
        }
        Ok(())
    };
    emit("coupling", &r.coupling)?;
    emit("shifted", &r.shifted)?;
    if let Some(u) = &r.unconstrained {
        emit("unconstrained", u)?;
    }
    w.finish()?;
    let mut summary = format!(
        "radius {:.4}, norm estimate {:.4}, 2L = {:.4}, shift mismatch {:.2e}",
        r.spectral_radius,
        r.norm_estimate,
        2.0 * p.norm_bound(),
        r.shift_mismatch
    );
    if let Some(u) = r.unconstrained_radius {
        summary.push_str(&format!(", unconstrained radius {u:.4}"));
    }
    Ok(Outcome {
        passed: true,
        seeds: vec![streams("spectrum draw", None, 1)],
        summary,
    })
}

pub fn stability(cfg: &ExperimentConfig, _h: &Harness, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = cfg.params()?;
    let ic = cfg.initial()?;
    let grid = cfg.grid()?;
    let kappas: Vec<f64> = cfg.list("kappas")?;
    let t_max: f64 = cfg.get("t_max")?;
    let rows = stability_sweep(
        &p,
        &ic,
        &kappas,
        &grid,
        TrialSeed::new(cfg.get("master_seed")?, 0),
        &options(cfg)?,
    )?;
    let series = VarianceSeries::for_model(&p, &ic)?;
    let mut w = out.csv(
        "stability.csv",
        &["kappa", "t", "max_abs_x", "coherent", "coherent_predicted", "decay_oracle"],
    )?;
    for r in &rows {
        w.row(&[
            Cell::F(r.kappa),
            Cell::F(r.t),
            Cell::F(r.max_abs),
            Cell::F(r.coherent),
            Cell::F(r.coherent_predicted),
            Cell::F((-2.0 * r.kappa * r.t).exp() * series.value(r.t)?),
        ])?;
    }
    w.finish()?;
    let points: usize = cfg.get("stability_points")?;
    let reports = kappas
        .iter()
        .map(|&k| stability_report(&p.with_coupling(p.a, k)?, t_max, points))
        .collect::<Result<Vec<_>, _>>()?;
    let brief: Vec<Value> = reports
        .iter()
        .map(|r| json!({ "kappa": r.kappa, "eventually_decreasing": r.eventually_decreasing }))
        .collect();
    let first = &reports.first().ok_or_else(|| CliError::Usage("kappas is empty".into()))?;
    out.json(
        "stability_report.json",
        &json!({
            "sigma_star": first.sigma_star,
            "t_max": t_max,
            "critical_kappa": first.critical_kappa,
            "threshold_sigma_star": first.threshold_sigma_star,
            "threshold_sqrt_sigma_star": first.threshold_sqrt_sigma_star,
            "closer_to_sqrt": first.closer_to_sqrt,
            "kappas": brief,
        }),
    )?;
    Ok(Outcome {
        passed: true,
        seeds: vec![streams("stability trajectory", None, 1)],
        summary: format!(
            "critical kappa {:.4} on [0, {t_max}] (candidates sigma_* = {:.4}, sqrt = {:.4})",
            first.critical_kappa, first.threshold_sigma_star, first.threshold_sqrt_sigma_star
        ),
    })
}

pub fn dump_matrix(cfg: &ExperimentConfig, _h: &Harness, out: &mut Outputs) -> Result<Outcome, CliError> {
    let p = cfg.params()?;
    let seed = TrialSeed::new(cfg.get("master_seed")?, 0);
    let route = cfg.raw("route");
    let w = match route {
        "projection" => sample_projection(&p, seed),
        "basis" => sample_via_basis(&p, &build_basis(&p)?, seed)?,
        "unconstrained" => sample_unconstrained(&p, seed),
        other => return Err(CliError::Usage(format!("unknown route `{other}`"))),
    };
    let mut f = out.create("matrix.csv")?;
    w.write_csv(&mut f)?;
    f.flush()?;
    Ok(Outcome {
        passed: true,
        seeds: vec![streams("matrix draw", None, 1)],
        summary: format!("{route} draw, n = {}, max row sum {:.2e}", p.n, w.max_row_sum()),
    })
}
