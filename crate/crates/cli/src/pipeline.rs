//! The four scenario pipelines. Each returns its artifacts in memory so that
//! nothing is written when a run fails before completion.

use std::sync::Arc;

use glued_core::analysis::{
    bilipschitz_pairs, dwell_violations, estimate_bilipschitz, estimate_dwell_function,
    estimate_glued_lipschitz, BilipschitzOptions, BoundaryDistance, DwellEstimate,
    GluedLipschitzOptions, LipschitzEstimate, RegionSampler,
};
use glued_core::hybrid::simulate_hybrid;
use glued_core::io::{
    write_dwell_csv, write_execution_csv, write_glued_csv, write_observer_csv, write_tracking_csv,
};
use glued_core::models::{ExampleBundle, ObserverSetup};
use glued_core::observer::{
    estimation_error_report, graphical_closeness, reconstruct_estimate,
    run_ekf_observer, run_output_injection_observer, ClosenessReport, ErrorReport, ExecutionOutput,
    ObserverRun,
};
use glued_core::sampling::{sample_points, seeded_rng};
use glued_core::tracking::{glued_error_continuity, simulate_closed_loop, ContinuityReport, TrackingRun};
use glued_core::{HybridExecution, InputSignal, SimParams, Vector, ZeroInput};
use serde::Serialize;

use crate::config::{Mode, ScenarioConfig};
use crate::error::{CliError, CliResult};

/// One emitted file, relative to the run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<CheckOutcome>,
    pub notes: Vec<String>,
}

impl PipelineOutput {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn check(&mut self, name: &str, pass: bool) {
        self.checks.push(CheckOutcome {
            name: name.to_string(),
            pass,
        });
    }

    fn csv<F>(&mut self, name: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> glued_core::Result<()>,
    {
        let mut bytes = Vec::new();
        f(&mut bytes).map_err(CliError::pipeline(format!("writing {name}")))?;
        self.artifacts.push(Artifact {
            name: name.to_string(),
            bytes,
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Pipeline {
            context: format!("serializing {name}"),
            source: glued_core::Error::InvalidParameter(e.to_string()),
        })?;
        bytes.push(b'\n');
        self.artifacts.push(Artifact {
            name: name.to_string(),
            bytes,
        });
        Ok(())
    }
}

/// Resolved simulation settings of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub x0: Vector,
    pub params: SimParams,
}

pub fn resolve(cfg: &ScenarioConfig, bundle: &ExampleBundle) -> CliResult<Resolved> {
    let x0 = match &cfg.sim.x0 {
        Some(v) if v.len() == bundle.sys.n => Vector::from_column_slice(v),
        Some(v) => {
            return Err(CliError::Config(format!(
                "sim.x0 has {} entries, {} needs {}",
                v.len(),
                bundle.id,
                bundle.sys.n
            )))
        }
        None => bundle.defaults.x0.clone(),
    };
    let params = SimParams {
        t_end: cfg.sim.horizon.unwrap_or(bundle.defaults.horizon),
        step: cfg.sim.step.unwrap_or(bundle.defaults.step),
        ..SimParams::default()
    };
    if !params.t_end.is_finite() || params.step >= params.t_end {
        return Err(CliError::Config("sim.step must be smaller than the horizon".into()));
    }
    Ok(Resolved { x0, params })
}

/// Checks that `mode` is available on the bundle.
pub fn check_mode(mode: Mode, bundle: &ExampleBundle) -> CliResult<()> {
    let missing = match mode {
        Mode::Estimate => bundle.observer.is_none().then_some("an observer"),
        Mode::Track => bundle.tracking.is_none().then_some("a tracking controller"),
        Mode::Certify => None,
        Mode::Analyze => bundle.inv_set.parameterization.is_none().then_some("a parameterized invariant set"),
    };
    match missing {
        Some(what) => Err(CliError::Config(format!(
            "mode {} needs {what}, which {} does not have",
            mode.as_str(),
            bundle.id
        ))),
        None => Ok(()),
    }
}

pub fn run_pipeline(cfg: &ScenarioConfig, bundle: &ExampleBundle) -> CliResult<PipelineOutput> {
    check_mode(cfg.mode, bundle)?;
    let resolved = resolve(cfg, bundle)?;
    match cfg.mode {
        Mode::Estimate => estimate(cfg, bundle, &resolved),
        Mode::Track => track(cfg, bundle, &resolved),
        Mode::Certify => certify(cfg, bundle),
        Mode::Analyze => analyze(cfg, bundle, &resolved),
    }
}

/// Input driving the open-loop trajectories of a bundle: the reference input
/// for controlled plants, zero otherwise.
fn open_loop_input(bundle: &ExampleBundle) -> Arc<dyn InputSignal> {
    match &bundle.tracking {
        Some(t) => t.reference.u_r.clone(),
        None => Arc::new(ZeroInput(bundle.sys.p)),
    }
}

/// Initial states for dwell estimation: `x0`, the corners of every chart of
/// the invariant set, and `n` random draws. A further `n` draws are held out.
fn dwell_initial_states(
    bundle: &ExampleBundle,
    x0: &Vector,
    n: usize,
    seed: u64,
) -> CliResult<(Vec<Vector>, Vec<Vector>)> {
    let set = bundle
        .inv_set
        .parameterization
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("{} has no parameterized invariant set", bundle.id)))?;
    let mut est = vec![x0.clone()];
    for chart in &set.charts {
        let d = chart.dim();
        for mask in 0..(1usize << d) {
            let s: Vec<f64> = (0..d)
                .map(|i| if mask >> i & 1 == 1 { chart.upper[i] } else { chart.lower[i] })
                .collect();
            est.push(chart.eval(&Vector::from_vec(s)));
        }
    }
    let mut rng = seeded_rng(seed);
    est.extend(sample_points(set, n, &mut rng));
    let held = sample_points(set, n, &mut rng);
    Ok((est, held))
}

fn simulate_all(bundle: &ExampleBundle, states: &[Vector], params: &SimParams) -> CliResult<Vec<HybridExecution>> {
    let input = open_loop_input(bundle);
    states
        .iter()
        .map(|x0| {
            simulate_hybrid(&bundle.sys, x0, input.as_ref(), params)
                .map_err(CliError::pipeline(format!("simulating {} from {:?}", bundle.id, x0.as_slice())))
        })
        .collect()
}

/// Dwell estimate from open-loop trajectories started in the invariant set,
/// with the held-out violation count.
fn dwell_from_invariant_set(
    cfg: &ScenarioConfig,
    bundle: &ExampleBundle,
    resolved: &Resolved,
) -> CliResult<(DwellEstimate, usize)> {
    let (est_x0, held_x0) = dwell_initial_states(bundle, &resolved.x0, cfg.checks.dwell_trajectories, cfg.seed)?;
    let est_runs = simulate_all(bundle, &est_x0, &resolved.params)?;
    let held_runs = simulate_all(bundle, &held_x0, &resolved.params)?;
    let dwell = estimate_dwell_function(&bundle.sys, &bundle.sampler.jump, &est_runs, &cfg.checks.dwell_grid)
        .map_err(CliError::pipeline("dwell estimation"))?;
    let violations = dwell_violations(&bundle.sys, &bundle.sampler.jump, &dwell, &held_runs)
        .map_err(CliError::pipeline("dwell replay"))?;
    Ok((dwell, violations.len()))
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub model_id: String,
    pub observer: &'static str,
    pub jump_times: Vec<f64>,
    pub dwell_alpha: f64,
    pub error: ErrorReport,
    pub closeness: ClosenessReport,
    pub estimate_in_invariant_set: bool,
    pub max_projection_distance: f64,
}

/// Plant, observer and reconstruction on a common grid.
pub fn observer_run(bundle: &ExampleBundle, resolved: &Resolved) -> CliResult<(HybridExecution, ObserverRun)> {
    let setup = bundle
        .observer
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("{} has no observer", bundle.id)))?;
    let h = bundle
        .sys
        .output_map
        .clone()
        .ok_or_else(|| CliError::Config(format!("{} has no output", bundle.id)))?;
    let params = &resolved.params;
    let exec = simulate_hybrid(&bundle.sys, &resolved.x0, &ZeroInput(bundle.sys.p), params)
        .map_err(CliError::pipeline("plant simulation"))?;
    let y = ExecutionOutput::new(&exec, h, bundle.sys.q);
    let raw = match setup {
        ObserverSetup::OutputInjection { observer, zeta_hat0 } => {
            run_output_injection_observer(observer, &y, zeta_hat0, params.t_end, params.step)
        }
        ObserverSetup::Ekf { config, zeta_hat0 } => {
            run_ekf_observer(&bundle.glued, &y, zeta_hat0, config, params.t_end, params.step)
        }
    }
    .map_err(CliError::pipeline("observer"))?;
    let recon = reconstruct_estimate(&bundle.glued, &raw.states).map_err(CliError::pipeline("reconstruction"))?;
    let run = ObserverRun::assemble(&exec, &bundle.gm, &raw, recon);
    Ok((exec, run))
}

fn estimate(cfg: &ScenarioConfig, bundle: &ExampleBundle, resolved: &Resolved) -> CliResult<PipelineOutput> {
    let (exec, run) = observer_run(bundle, resolved)?;
    let (dwell, _) = dwell_from_invariant_set(cfg, bundle, resolved)?;
    let eps = cfg.checks.epsilon;
    let alpha = dwell.alpha(eps);
    let jumps = exec.jump_times();
    let error = estimation_error_report(&run.times, &run.errors(), &jumps, alpha, eps);
    let closeness = graphical_closeness(
        &run.times,
        &run.x,
        &run.x_hat,
        cfg.checks.closeness_epsilon,
        cfg.checks.closeness_window,
    );
    let in_e = run.x_hat.iter().all(|x| bundle.inv_set.contains(x));
    let max_proj = run
        .zeta_hat
        .iter()
        .zip(&run.zeta_bar)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let report = EstimateReport {
        model_id: bundle.id.clone(),
        observer: match bundle.observer {
            Some(ObserverSetup::Ekf { .. }) => "ekf",
            _ => "output_injection",
        },
        jump_times: jumps,
        dwell_alpha: alpha,
        error,
        closeness,
        estimate_in_invariant_set: in_e,
        max_projection_distance: max_proj,
    };
    let mut out = PipelineOutput::default();
    if report.observer == "ekf" {
        out.notes.push("an extended Kalman filter stands in for the high-gain observer".into());
    }
    out.check("windowed_error", report.error.pass);
    out.check("graphical_closeness", report.closeness.pass);
    out.check("estimate_in_invariant_set", in_e);
    out.csv("execution.csv", |w| write_execution_csv(&exec, w))?;
    out.artifacts.push(glued_trace(bundle, &exec)?);
    out.csv("observer.csv", |w| write_observer_csv(&run, w))?;
    out.csv("dwell.csv", |w| write_dwell_csv(&dwell, w))?;
    out.json("estimate_report.json", &report)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackReport {
    pub model_id: String,
    pub plant_jump_times: Vec<f64>,
    pub reference_jump_times: Vec<f64>,
    pub dwell_alpha: f64,
    pub error: ErrorReport,
    pub continuity: ContinuityReport,
    pub final_glued_error: f64,
}

pub fn tracking_run(bundle: &ExampleBundle, resolved: &Resolved) -> CliResult<TrackingRun> {
    let tr = bundle
        .tracking
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("{} has no tracking controller", bundle.id)))?;
    simulate_closed_loop(&bundle.sys, &tr.controller, &tr.reference, &resolved.x0, &resolved.params)
        .map_err(CliError::pipeline("closed-loop simulation"))
}

fn track(cfg: &ScenarioConfig, bundle: &ExampleBundle, resolved: &Resolved) -> CliResult<PipelineOutput> {
    let run = tracking_run(bundle, resolved)?;
    let reference = &bundle.tracking.as_ref().expect("checked by check_mode").reference;
    // Windows come from the two trajectories being compared.
    let dwell = estimate_dwell_function(
        &bundle.sys,
        &bundle.sampler.jump,
        &[run.exec.clone(), reference.exec.clone()],
        &cfg.checks.dwell_grid,
    )
    .map_err(CliError::pipeline("dwell estimation"))?;
    let eps = cfg.checks.epsilon;
    let alpha = dwell.alpha(eps);
    let plant_jumps = run.exec.jump_times();
    let reference_jumps: Vec<f64> = reference
        .jump_times()
        .into_iter()
        .filter(|&t| t <= resolved.params.t_end)
        .collect();
    let mut centers = plant_jumps.clone();
    centers.extend(&reference_jumps);
    centers.sort_by(f64::total_cmp);
    let error = estimation_error_report(&run.times, &run.state_err, &centers, alpha, eps);
    let continuity = glued_error_continuity(&run);
    let report = TrackReport {
        model_id: bundle.id.clone(),
        plant_jump_times: plant_jumps,
        reference_jump_times: reference_jumps,
        dwell_alpha: alpha,
        error,
        continuity,
        final_glued_error: run.glued_err.last().copied().unwrap_or(f64::NAN),
    };
    let mut out = PipelineOutput::default();
    out.check("windowed_error", report.error.pass);
    out.check("glued_error_continuity", report.continuity.pass);
    out.csv("execution.csv", |w| write_execution_csv(&run.exec, w))?;
    out.csv("tracking.csv", |w| write_tracking_csv(&run, w))?;
    out.csv("dwell.csv", |w| write_dwell_csv(&dwell, w))?;
    out.json("track_report.json", &report)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub model_id: String,
    pub validation: glued_core::models::ValidationSummary,
    pub f_psi_lipschitz: LipschitzEstimate,
    pub h_psi_lipschitz: Option<LipschitzEstimate>,
}

fn certify(cfg: &ScenarioConfig, bundle: &ExampleBundle) -> CliResult<PipelineOutput> {
    let (f_est, h_est) = estimate_glued_lipschitz(
        &bundle.sys,
        &bundle.glued,
        GluedLipschitzOptions {
            n_pairs: cfg.checks.lipschitz_pairs,
            seed: cfg.seed,
        },
    )
    .map_err(CliError::pipeline("glued Lipschitz estimation"))?;
    let mut out = PipelineOutput::default();
    out.check("validation", bundle.validation.pass());
    out.check("f_psi_lipschitz_finite", f_est.constant.is_finite());
    if let Some(h) = &h_est {
        out.check("h_psi_lipschitz_finite", h.constant.is_finite());
    }
    if !f_est.within_hypothesis {
        out.notes
            .push("glued dimension differs from the flow-set dimension; Lipschitz estimates are outside the hypothesis".into());
    }
    let report = CertifyReport {
        model_id: bundle.id.clone(),
        validation: bundle.validation.clone(),
        f_psi_lipschitz: f_est,
        h_psi_lipschitz: h_est,
    };
    out.json("certify_report.json", &report)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub model_id: String,
    pub jump_margin: f64,
    pub bilipschitz: LipschitzEstimate,
    /// Fresh pairs with `|x - y| > 1.1 L |psi(x) - psi(y)|`.
    pub fresh_pairs: usize,
    pub fresh_violations: usize,
    pub dwell: DwellEstimate,
    pub dwell_monotone: bool,
    pub held_out_violations: usize,
}

/// `E` without the open `margin`-neighbourhood of the jump set.
pub fn region_away_from_jumps(bundle: &ExampleBundle, margin: f64) -> CliResult<RegionSampler> {
    let set = bundle
        .inv_set
        .parameterization
        .clone()
        .ok_or_else(|| CliError::Config(format!("{} has no parameterized invariant set", bundle.id)))?;
    let bd = Arc::new(BoundaryDistance::new(&bundle.sys, &bundle.sampler.jump).map_err(CliError::pipeline("jump-set distance"))?);
    let member = bundle.inv_set.membership.clone();
    Ok(RegionSampler::new(set, Arc::new(move |x: &Vector| member(x) && bd.to_jump_set(x) >= margin)))
}

fn analyze(cfg: &ScenarioConfig, bundle: &ExampleBundle, resolved: &Resolved) -> CliResult<PipelineOutput> {
    let margin = cfg.checks.jump_margin;
    let region = region_away_from_jumps(bundle, margin)?;
    let opts = BilipschitzOptions {
        n_pairs: cfg.checks.lipschitz_pairs,
        seed: cfg.seed,
        refine: true,
    };
    let bilip = estimate_bilipschitz(&bundle.gm, &region, opts).map_err(CliError::pipeline("bi-Lipschitz estimation"))?;
    let fresh = bilipschitz_pairs(&region, cfg.checks.lipschitz_pairs, cfg.seed ^ 0xf7e5, None)
        .map_err(CliError::pipeline("fresh pairs"))?;
    let fresh_violations = fresh
        .iter()
        .filter(|(x, y)| (x - y).norm() > 1.1 * bilip.constant * (bundle.gm.apply(x) - bundle.gm.apply(y)).norm())
        .count();
    let (dwell, held_out) = dwell_from_invariant_set(cfg, bundle, resolved)?;
    let monotone = dwell.alpha_values.windows(2).all(|w| w[0] <= w[1]);
    let report = AnalyzeReport {
        model_id: bundle.id.clone(),
        jump_margin: margin,
        bilipschitz: bilip,
        fresh_pairs: fresh.len(),
        fresh_violations,
        dwell,
        dwell_monotone: monotone,
        held_out_violations: held_out,
    };
    let mut out = PipelineOutput::default();
    out.check("bilipschitz_finite", report.bilipschitz.constant.is_finite());
    out.check("bilipschitz_fresh_pairs", fresh_violations == 0);
    out.check("dwell_monotone", monotone);
    out.check("dwell_held_out", held_out == 0);
    out.csv("dwell.csv", |w| write_dwell_csv(&report.dwell, w))?;
    out.json("analyze_report.json", &report)?;
    Ok(out)
}

/// The plant samples pushed through the gluing map.
pub fn glued_trace(bundle: &ExampleBundle, exec: &HybridExecution) -> CliResult<Artifact> {
    let samples = exec.flow_samples();
    let times: Vec<f64> = samples.iter().map(|(t, _)| *t).collect();
    let zeta: Vec<Vector> = samples.iter().map(|(_, x)| bundle.gm.apply(x)).collect();
    let mut bytes = Vec::new();
    write_glued_csv(&times, &zeta, &mut bytes).map_err(CliError::pipeline("writing glued.csv"))?;
    Ok(Artifact {
        name: "glued.csv".into(),
        bytes,
    })
}
