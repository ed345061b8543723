use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use viraldyn::equilibria::{all_equilibria, interior_equilibrium};
use viraldyn::integrator::Event;
use viraldyn::{
    classify_equilibrium, derived_thresholds, fit, integrate, synthesize_observations,
    DerivedThresholds, EquilibriumKind, FitSpec, ModelParams, ModelVariant, ObservationSet,
    StabilityReport, State, SummaryMetrics, Trajectory,
};

use crate::config::{RunConfig, SweepGrid};
use crate::output::{c_exp, sci, write_json, write_trajectory_csv};

/// Caps the number of concurrent sweep runs.
pub const WORKERS_ENV: &str = "VIRALDYN_WORKERS";

pub const SWEEP_SUMMARY_HEADER: &str =
    "value,peak_v,t_peak_v,min_t,target_loss_fraction,peak_a,classification";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Equilibria,
    Stability,
    Fit,
    Sweep,
}

/// Runs `cmd`, writing its artifacts into `out`. Returns the files written.
pub fn execute(cmd: Command, cfg: &RunConfig, out: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cmd {
        Command::Simulate => simulate(cfg, out),
        Command::Equilibria => equilibria(cfg, out),
        Command::Stability => stability(cfg, out),
        Command::Fit => run_fit(cfg, out, seed),
        Command::Sweep => sweep(cfg, out, workers_from_env()?),
    }
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    variant: ModelVariant,
    params: &'a ModelParams,
    init: &'a State,
    thresholds: DerivedThresholds,
    summary: &'a SummaryMetrics,
    events: &'a [Event],
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let traj = integrate(&cfg.params, cfg.variant, &cfg.init, &cfg.integration)?;
    let csv = out.join("trajectory.csv");
    write_trajectory_csv(&traj, &csv)?;
    let json = out.join("summary.json");
    write_json(
        &SimulationSummary {
            variant: cfg.variant,
            params: &cfg.params,
            init: &cfg.init,
            thresholds: derived_thresholds(&cfg.params),
            summary: &traj.summary,
            events: &traj.events,
        },
        &json,
    )?;
    Ok(vec![csv, json])
}

#[derive(Serialize)]
struct EquilibriumEntry {
    kind: EquilibriumKind,
    admissible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    state: Option<State>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

#[derive(Serialize)]
struct EquilibriaReport {
    params: ModelParams,
    thresholds: DerivedThresholds,
    equilibria: Vec<EquilibriumEntry>,
}

fn equilibria(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let entries = all_equilibria(&cfg.params)
        .into_iter()
        .map(|(kind, r)| match r {
            Ok(e) => EquilibriumEntry {
                kind,
                admissible: true,
                state: Some(e.state),
                residual: Some(e.residual),
                reason: None,
            },
            Err(err) => EquilibriumEntry {
                kind,
                admissible: false,
                state: None,
                residual: None,
                reason: Some(err.to_string()),
            },
        })
        .collect();
    let path = out.join("equilibria.json");
    write_json(
        &EquilibriaReport {
            params: cfg.params,
            thresholds: derived_thresholds(&cfg.params),
            equilibria: entries,
        },
        &path,
    )?;
    Ok(vec![path])
}

#[derive(Serialize)]
struct StabilityEntry {
    kind: EquilibriumKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<StabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
}

fn stability(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    if cfg.variant == ModelVariant::Latent {
        anyhow::bail!("stability analysis is only available for the basic model");
    }
    let mut entries = Vec::new();
    for (kind, r) in all_equilibria(&cfg.params) {
        let entry = match r.and_then(|e| classify_equilibrium(&cfg.params, &e)) {
            Ok(report) => StabilityEntry {
                kind,
                report: Some(report),
                reason: None,
            },
            Err(err) => StabilityEntry {
                kind,
                report: None,
                reason: Some(err.to_string()),
            },
        };
        entries.push(entry);
    }
    let path = out.join("stability.json");
    write_json(&entries, &path)?;
    Ok(vec![path])
}

#[derive(Serialize)]
struct FitReport<'a> {
    seed: u64,
    n_obs: usize,
    free: &'a [String],
    bounds: &'a std::collections::BTreeMap<String, (f64, f64)>,
    #[serde(flatten)]
    result: &'a viraldyn::FitResult,
}

fn observations_csv(obs: &ObservationSet) -> String {
    let mut rows: Vec<(f64, Option<f64>, Option<f64>)> =
        obs.v_obs.iter().map(|&(t, v)| (t, Some(v), None)).collect();
    if let Some(a_obs) = &obs.a_obs {
        for &(t, a) in a_obs {
            match rows.iter_mut().find(|r| r.0 == t && r.2.is_none()) {
                Some(r) => r.2 = Some(a),
                None => rows.push((t, None, Some(a))),
            }
        }
        rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    }
    let cell = |v: Option<f64>| v.map(sci).unwrap_or_default();
    let mut out = String::from(if obs.a_obs.is_some() {
        "t,V,A\n"
    } else {
        "t,V\n"
    });
    for (t, v, a) in rows {
        let _ = write!(out, "{},{}", sci(t), cell(v));
        if obs.a_obs.is_some() {
            let _ = write!(out, ",{}", cell(a));
        }
        out.push('\n');
    }
    out
}

fn run_fit(cfg: &RunConfig, out: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    let f = &cfg.fit;
    let obs = match (&f.data, &f.synthetic) {
        (Some(path), _) => {
            let path = cfg.base_dir.join(path);
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading observations {}", path.display()))?;
            ObservationSet::from_csv(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        (None, synthetic) => {
            let s = synthetic.clone().unwrap_or(crate::config::SyntheticData {
                days: 21,
                noise_sd_log10: 0.0,
                with_antibody: false,
            });
            let times: Vec<f64> = (0..=s.days).map(f64::from).collect();
            synthesize_observations(
                &cfg.params,
                cfg.variant,
                &cfg.init,
                &times,
                s.noise_sd_log10,
                s.with_antibody,
                seed,
            )?
        }
    };

    let free: Vec<&str> = f.free.iter().map(String::as_str).collect();
    let mut spec = FitSpec::around(cfg.params, cfg.init, &free, f.decades)?;
    spec.bounds.extend(f.bounds.clone());
    spec.n_starts = f.n_starts;
    spec.max_evals = f.max_evals;
    spec.weight = f.weight;
    spec.variant = cfg.variant;
    spec.integration = cfg.integration;
    let result = fit(&obs, &spec, seed)?;

    let t_last = obs
        .v_obs
        .iter()
        .map(|o| o.0)
        .fold(cfg.integration.t_span.1, f64::max);
    let opts = cfg.integration.with_span(cfg.integration.t_span.0, t_last);
    let traj = integrate(&result.params, cfg.variant, &result.init, &opts)?;

    let json = out.join("fit.json");
    write_json(
        &FitReport {
            seed,
            n_obs: obs.len(),
            free: &spec.free,
            bounds: &spec.bounds,
            result: &result,
        },
        &json,
    )?;
    let csv = out.join("fit_trajectory.csv");
    write_trajectory_csv(&traj, &csv)?;
    let obs_csv = out.join("observations.csv");
    std::fs::write(&obs_csv, observations_csv(&obs))?;
    Ok(vec![json, csv, obs_csv])
}

/// Worker cap from `VIRALDYN_WORKERS`, defaulting to the available cores.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("{WORKERS_ENV}={v:?} is not a positive integer"))?;
            anyhow::ensure!(n > 0, "{WORKERS_ENV} must be at least 1");
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// One row of the sweep summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: SummaryMetrics,
    /// Classification of the interior (no-ADE or ADE) equilibrium, or
    /// `NotAdmissible` when it does not exist.
    pub classification: String,
}

pub fn sweep_file_name(axis: &str, value: f64) -> String {
    format!("sweep_{axis}_{}.csv", c_exp(value, 3))
}

/// Runs one grid point: its trajectory and summary row.
pub fn sweep_point(cfg: &RunConfig, axis: &str, value: f64) -> Result<(Trajectory, SweepRow)> {
    let mut p = cfg.params;
    p.set(axis, value);
    let mut init = cfg.init;
    // T(0) follows Λ/μ unless the config pinned it.
    if matches!(axis, "lambda" | "mu") && init.target == cfg.params.lambda / cfg.params.mu {
        init.target = p.lambda / p.mu;
    }
    let traj = integrate(&p, cfg.variant, &init, &cfg.integration)
        .with_context(|| format!("{axis} = {value}"))?;
    let classification = match interior_equilibrium(&p).and_then(|e| classify_equilibrium(&p, &e)) {
        Ok(r) => format!("{:?}", r.classification),
        Err(_) => "NotAdmissible".to_string(),
    };
    let row = SweepRow {
        value,
        summary: traj.summary,
        classification,
    };
    Ok((traj, row))
}

pub fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_SUMMARY_HEADER}\n");
    for r in rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            sci(r.value),
            sci(s.peak_v),
            sci(s.t_peak_v),
            sci(s.min_t),
            sci(s.target_loss_fraction),
            sci(s.peak_a),
            r.classification
        );
    }
    out
}

/// Runs the grid on at most `workers` threads; each worker writes its own
/// trajectory file and the summary is written once all have finished.
pub fn run_sweep(
    cfg: &RunConfig,
    grid: &SweepGrid,
    out: &Path,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.clamp(1, grid.values.len().max(1)))
        .build()?;
    pool.install(|| {
        grid.values
            .par_iter()
            .map(|&v| {
                let (traj, row) = sweep_point(cfg, &grid.axis, v)?;
                write_trajectory_csv(&traj, &out.join(sweep_file_name(&grid.axis, v)))?;
                Ok(row)
            })
            .collect()
    })
}

fn sweep(cfg: &RunConfig, out: &Path, workers: usize) -> Result<Vec<PathBuf>> {
    let rows = run_sweep(cfg, &cfg.sweep, out, workers)?;
    let mut files: Vec<PathBuf> = cfg
        .sweep
        .values
        .iter()
        .map(|&v| out.join(sweep_file_name(&cfg.sweep.axis, v)))
        .collect();
    let summary = out.join("sweep_summary.csv");
    std::fs::write(&summary, sweep_summary_csv(&rows))?;
    files.push(summary);
    Ok(files)
}
