//! Subcommand pipelines: every run resolves its config, writes a manifest,
//! and emits CSV files into `<output_dir>/<run_id>/`.

use crate::config::Resolved;
use crate::dynamics;
use crate::energy::{self, expectation_bound};
use crate::error::{Error, Result};
use crate::experiments::{self, Metric};
use crate::output::{cell, cell_bool, Csv};
use crate::schedules::check_condition_ct;
use crate::tikhonov::{self, DEFAULT_PATH_TOL};
use std::path::{Path, PathBuf};

pub fn run_dir(res: &Resolved) -> PathBuf {
    Path::new(&res.manifest.output_dir).join(&res.manifest.run_id)
}

fn write_manifest(res: &Resolved, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = toml::to_string_pretty(&res.manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    std::fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

fn integrate_single(res: &Resolved) -> Result<dynamics::Trajectory> {
    let traj = dynamics::integrate(
        &res.spec,
        &res.init,
        res.t_end,
        res.h,
        res.seed,
        &res.checkpoints,
    );
    if let Some(fail) = traj.abort {
        return Err(Error::NonFiniteState {
            t: fail.t,
            step: fail.step,
        });
    }
    Ok(traj)
}

/// `simulate`: one trajectory, checkpoint states to `trajectories.csv`.
pub fn simulate(res: &Resolved) -> Result<()> {
    let dir = run_dir(res);
    write_manifest(res, &dir)?;
    let traj = integrate_single(res)?;
    let dim = res.spec.dim();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..dim).map(|i| format!("x_{i}")));
    header.extend((0..dim).map(|i| format!("y_{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header_refs);
    for s in &traj.states {
        let mut row = vec![cell(s.t)];
        row.extend(s.x.iter().map(|&v| cell(v)));
        row.extend(s.y.iter().map(|&v| cell(v)));
        csv.row(&row);
    }
    csv.write(&dir.join("trajectories.csv"))
}

/// `ensemble`: per-checkpoint means and standard errors of every metric to
/// `metrics.csv`, plus the expectation-bound comparison to `bound.csv`.
pub fn ensemble(res: &Resolved) -> Result<()> {
    let dir = run_dir(res);
    write_manifest(res, &dir)?;
    let result = experiments::run_ensemble(
        &res.spec,
        &res.damping,
        res.t1,
        &res.init,
        res.t_end,
        res.h,
        res.n_paths,
        res.seed,
        &res.checkpoints,
    )?;

    let mut csv = Csv::new(&[
        "t",
        "f_gap_mean",
        "f_gap_se",
        "dist_sq_mean",
        "dist_sq_se",
        "y_norm_mean",
        "y_norm_se",
        "energy_mean",
        "energy_se",
    ]);
    let stats: Vec<(Vec<f64>, Vec<f64>)> =
        Metric::ALL.iter().map(|&m| result.mean_se(m)).collect();
    for (k, &t) in result.checkpoints.iter().enumerate() {
        let mut row = vec![cell(t)];
        for (means, ses) in &stats {
            row.push(cell(means[k]));
            row.push(cell(ses[k]));
        }
        csv.row(&row);
    }
    csv.write(&dir.join("metrics.csv"))?;

    write_bound_csv(res, &result, &dir)
}

fn write_bound_csv(
    res: &Resolved,
    result: &experiments::EnsembleResult,
    dir: &Path,
) -> Result<()> {
    let xstar_norm = res
        .problem
        .min_norm_minimizer()
        .map(|x| x.norm())
        .ok_or_else(|| {
            Error::InvalidParam("expectation bound needs a known minimum-norm minimizer".into())
        })?;
    let (means, _) = result.mean_se(Metric::Energy);
    let anchor = result
        .checkpoints
        .iter()
        .position(|&t| t >= res.t1)
        .ok_or_else(|| Error::WindowTooSmall("no checkpoint past t1".into()))?;
    let e_t1 = means[anchor];
    let t1 = result.checkpoints[anchor];

    let kept: Vec<usize> = (anchor..result.checkpoints.len()).collect();
    let bounds: Vec<f64> = kept
        .iter()
        .map(|&k| {
            expectation_bound(
                xstar_norm,
                &res.damping,
                &res.eps,
                &res.sigma,
                t1,
                result.checkpoints[k],
                e_t1,
                res.strong_bound,
                res.sigma_horizon,
            )
            .value
        })
        .collect();

    let (mean_all, se_all) = result.mean_se(Metric::Energy);
    let mut csv = Csv::new(&["t", "mean_energy", "se", "bound", "ok"]);
    for (j, &k) in kept.iter().enumerate() {
        let ok = mean_all[k] <= bounds[j] + 3.0 * se_all[k];
        csv.row(&[
            cell(result.checkpoints[k]),
            cell(mean_all[k]),
            cell(se_all[k]),
            cell(bounds[j]),
            cell_bool(ok),
        ]);
    }
    csv.write(&dir.join("bound.csv"))
}

/// `rates`: fits the decay exponents of the mean metrics (single path when
/// `n_paths = 1`) and writes `ratefit.csv`. With `assert_pass`, a failed fit
/// is an error (CLI exit 3).
pub fn rates(res: &Resolved, assert_pass: bool) -> Result<()> {
    let dir = run_dir(res);
    write_manifest(res, &dir)?;
    let result = experiments::run_ensemble(
        &res.spec,
        &res.damping,
        res.t1,
        &res.init,
        res.t_end,
        res.h,
        res.n_paths,
        res.seed,
        &res.checkpoints,
    )?;
    let r = res
        .eps
        .power_r()
        .ok_or_else(|| Error::UnsupportedSchedule("rate fits need the power schedule".into()))?;

    let metrics: Vec<(Metric, f64)> = {
        let e = &res.manifest.experiment;
        let mut v = vec![
            (Metric::FGap, e.slack_f_gap),
            (Metric::DistSq, e.slack_dist_sq),
        ];
        if !res.spec.kind.is_first_order() {
            v.push((Metric::YNorm, e.slack_y_norm));
        }
        v
    };

    let mut csv = Csv::new(&[
        "metric",
        "window_lo",
        "window_hi",
        "slope",
        "intercept",
        "r_squared",
        "expected",
        "slack",
        "pass",
        "floored",
        "n_points",
    ]);
    let mut all_pass = true;
    for (metric, slack) in metrics {
        let (means, _) = result.mean_se(metric);
        let fit = experiments::fit_rate(
            &result.checkpoints,
            &means,
            metric,
            res.fit_window,
            experiments::expected_slope(metric, r),
            slack,
        )?;
        all_pass &= fit.pass;
        csv.row(&[
            metric.label().to_string(),
            cell(fit.window.0),
            cell(fit.window.1),
            cell(fit.slope),
            cell(fit.intercept),
            cell(fit.r_squared),
            cell(fit.expected_slope),
            cell(fit.slack),
            cell_bool(fit.pass),
            cell_bool(fit.floored),
            fit.n_points.to_string(),
        ]);
    }
    csv.write(&dir.join("ratefit.csv"))?;
    if assert_pass && !all_pass {
        return Err(Error::CheckFailed(
            "a fitted slope exceeded its expected decay rate".into(),
        ));
    }
    Ok(())
}

/// `energy`: Lyapunov diagnostics along one trajectory to `energy.csv`.
pub fn energy_cmd(res: &Resolved) -> Result<()> {
    let dir = run_dir(res);
    write_manifest(res, &dir)?;
    let traj = integrate_single(res)?;
    let cps = energy::trajectory_energies(
        &res.problem,
        &res.damping,
        &res.eps,
        res.t1,
        &traj,
        DEFAULT_PATH_TOL,
    )?;
    let xstar_norm = res.problem.min_norm_minimizer().map(|x| x.norm());
    let r = res.eps.power_r().unwrap_or(1.0);
    let anchor = cps.iter().find(|c| c.report.t >= res.t1);
    let (anchor_t, anchor_e) = anchor
        .map(|c| (c.report.t, c.report.energy))
        .unwrap_or((res.t1, f64::NAN));

    let mut csv = Csv::new(&[
        "t",
        "energy",
        "phi_gap",
        "v_norm_sq",
        "gamma",
        "g",
        "bound_weak",
        "bound_strong",
        "t_pow_e",
    ]);
    for c in &cps {
        let t = c.report.t;
        let (bw, bs) = match (xstar_norm, t >= anchor_t) {
            (Some(xs), true) => {
                let w = expectation_bound(
                    xs,
                    &res.damping,
                    &res.eps,
                    &res.sigma,
                    anchor_t,
                    t,
                    anchor_e,
                    false,
                    res.sigma_horizon,
                );
                let s = expectation_bound(
                    xs,
                    &res.damping,
                    &res.eps,
                    &res.sigma,
                    anchor_t,
                    t,
                    anchor_e,
                    true,
                    res.sigma_horizon,
                );
                (cell(w.value), cell(s.value))
            }
            _ => (String::new(), String::new()),
        };
        csv.row(&[
            cell(t),
            cell(c.report.energy),
            cell(c.report.phi_gap),
            cell(c.report.v_norm_sq),
            cell(c.report.gamma),
            cell(c.report.g_val),
            bw,
            bs,
            cell(t.powf(0.5 * (r + 2.0)) * c.report.energy),
        ]);
    }
    csv.write(&dir.join("energy.csv"))
}

/// `path`: the regularization path over the checkpoint grid to `path.csv`.
pub fn path_cmd(res: &Resolved) -> Result<()> {
    let dir = run_dir(res);
    write_manifest(res, &dir)?;
    let dim = res.problem.dim();
    let mut header: Vec<String> = vec!["t".into(), "eps".into()];
    header.extend((0..dim).map(|i| format!("x_eps_{i}")));
    header.push("norm_x_eps".into());
    header.push("residual".into());
    header.push("fd_bound".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header_refs);

    let mut warm = None;
    for &t in &res.checkpoints {
        let pt = tikhonov::solve_at_time(&res.problem, &res.eps, t, warm.as_ref(), DEFAULT_PATH_TOL)?;
        if !pt.converged {
            return Err(Error::SolverFailure(format!(
                "path solve at t = {t} stalled at residual {}",
                pt.residual
            )));
        }
        let rate = -res.eps.deriv(t) / res.eps.eval(t);
        let bound = rate * pt.x.norm();
        let mut row = vec![cell(t), cell(pt.eps)];
        row.extend(pt.x.iter().map(|&v| cell(v)));
        row.push(cell(pt.x.norm()));
        row.push(cell(pt.residual));
        row.push(cell(bound));
        csv.row(&row);
        warm = Some(pt.x);
    }
    csv.write(&dir.join("path.csv"))
}

/// `check-params`: feasibility summary and the margin table, as CSV on
/// stdout.
pub fn check_params(res: &Resolved) -> Result<String> {
    let mut out = String::new();
    let w = crate::schedules::lambda_window(
        res.damping.delta,
        res.damping.a,
        res.damping.c,
    );
    out.push_str("quantity,value\n");
    out.push_str(&format!("lambda_window_lo,{}\n", cell(w.lo)));
    out.push_str(&format!("lambda_window_hi,{}\n", cell(w.hi)));
    out.push_str(&format!("lambda_window_feasible,{}\n", cell_bool(w.feasible)));
    out.push_str(&format!("lambda,{}\n", cell(res.damping.lambda)));
    out.push_str(&format!("t1,{}\n", cell(res.t1)));
    out.push('\n');
    out.push_str("t,inv_sqrt_deriv,ct_bound,margin,satisfied\n");
    for &t in &res.checkpoints {
        let chk = check_condition_ct(&res.eps, &res.damping, t);
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            cell(t),
            cell(res.eps.inv_sqrt_deriv(t)),
            cell(res.damping.ct_bound()),
            cell(chk.margin),
            cell_bool(chk.satisfied)
        ));
    }
    Ok(out)
}

/// `compare`: baselines on identical noise, to `baselines.csv` and stdout.
pub fn compare(res: &Resolved) -> Result<String> {
    let dir = run_dir(res);
    write_manifest(res, &dir)?;
    let rows = experiments::compare_baselines(
        &res.problem,
        &res.eps,
        &res.damping,
        &res.sigma,
        &res.init,
        res.t_end,
        res.h,
        res.seed,
        &res.checkpoints,
        res.fit_window,
    );
    let mut csv = Csv::new(&["kind", "f_gap_end", "fitted_slope"]);
    let mut pretty = String::from("kind,f_gap_end,fitted_slope\n");
    for row in &rows {
        let slope = row.slope.map(cell).unwrap_or_default();
        csv.row(&[row.kind.to_string(), cell(row.f_gap_end), slope.clone()]);
        pretty.push_str(&format!("{},{},{}\n", row.kind, cell(row.f_gap_end), slope));
    }
    csv.write(&dir.join("baselines.csv"))?;
    Ok(pretty)
}
