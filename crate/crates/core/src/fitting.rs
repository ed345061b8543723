//! Calibration of model parameters to viral-load (and optionally antibody)
//! time series by log-space least squares.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{integrate_at, IntegrationOptions};
use crate::model::{ModelParams, ModelVariant, State};
use crate::nelder_mead::{minimize, NelderMeadOptions};

/// Detection floor applied to both model and observed viral loads.
pub const DEFAULT_DETECTION_FLOOR: f64 = 1.0;

/// Names accepted in [`FitSpec::free`] besides the model parameters.
pub const INITIAL_CONDITION_NAMES: [&str; 3] = ["I0", "V0", "A0"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    /// `(t, V)` pairs, days and copies/ml.
    pub v_obs: Vec<(f64, f64)>,
    /// Optional `(t, A)` pairs.
    #[serde(default)]
    pub a_obs: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_floor")]
    pub detection_floor: f64,
}

fn sort_by_time(obs: &mut [(f64, f64)]) {
    obs.sort_by(|x, y| x.0.total_cmp(&y.0));
}

fn default_floor() -> f64 {
    DEFAULT_DETECTION_FLOOR
}

impl ObservationSet {
    /// Observations are stored sorted by time.
    pub fn new(mut v_obs: Vec<(f64, f64)>) -> Self {
        sort_by_time(&mut v_obs);
        ObservationSet {
            v_obs,
            a_obs: None,
            detection_floor: DEFAULT_DETECTION_FLOOR,
        }
    }

    pub fn len(&self) -> usize {
        self.v_obs.len() + self.a_obs.as_ref().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidObservations(m));
        if self.v_obs.is_empty() {
            return bad("no viral-load observations".into());
        }
        if !(self.detection_floor > 0.0) {
            return bad(format!(
                "detection floor must be positive, got {}",
                self.detection_floor
            ));
        }
        let series = std::iter::once(("V", &self.v_obs)).chain(self.a_obs.iter().map(|a| ("A", a)));
        for (name, obs) in series {
            if let Some(&(t, v)) = obs
                .iter()
                .find(|(t, v)| !(t.is_finite() && v.is_finite() && *t >= 0.0 && *v >= 0.0))
            {
                return bad(format!(
                    "{name} observation ({t}, {v}) must be finite and non-negative"
                ));
            }
        }
        Ok(())
    }

    /// Parses CSV with header `t,V` or `t,V,A`. Empty `A` cells are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::InvalidObservations(e.to_string()))?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        let has_a = match cols.as_slice() {
            ["t", "V"] => false,
            ["t", "V", "A"] => true,
            _ => {
                return Err(Error::InvalidObservations(format!(
                    "expected header `t,V[,A]`, got `{}`",
                    cols.join(",")
                )))
            }
        };
        let parse = |s: &str, line: u64| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidObservations(format!("line {line}: cannot parse `{s}`")))
        };
        let mut v_obs = Vec::new();
        let mut a_obs = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::InvalidObservations(e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let t = parse(&rec[0], line)?;
            if !rec[1].is_empty() {
                v_obs.push((t, parse(&rec[1], line)?));
            }
            if has_a && rec.len() > 2 && !rec[2].is_empty() {
                a_obs.push((t, parse(&rec[2], line)?));
            }
        }
        sort_by_time(&mut v_obs);
        sort_by_time(&mut a_obs);
        let set = ObservationSet {
            v_obs,
            a_obs: has_a.then_some(a_obs),
            detection_floor: DEFAULT_DETECTION_FLOOR,
        };
        set.validate()?;
        Ok(set)
    }
}

/// What to fit and within which log₁₀ bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    /// Parameter names and/or `I0`, `V0`, `A0`.
    pub free: Vec<String>,
    /// `(lo, hi)` of log₁₀ value for every free name.
    pub bounds: BTreeMap<String, (f64, f64)>,
    /// Values of everything not free; also the starting model.
    #[serde(default)]
    pub fixed: ModelParams,
    /// Initial state; `T(0)` is always reset to `Λ/μ`.
    #[serde(default = "default_init")]
    pub init: State,
    /// Weight of the antibody term.
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    #[serde(default)]
    pub variant: ModelVariant,
    #[serde(default)]
    pub integration: IntegrationOptions,
}

fn default_init() -> State {
    State::baseline_initial(&ModelParams::baseline())
}
fn default_weight() -> f64 {
    1.0
}
fn default_starts() -> usize {
    8
}
fn default_max_evals() -> usize {
    2000
}

impl FitSpec {
    /// Free names with bounds of `±decades` around their values in `fixed`/`init`.
    pub fn around(fixed: ModelParams, init: State, free: &[&str], decades: f64) -> Result<Self> {
        let mut spec = FitSpec {
            free: free.iter().map(|s| s.to_string()).collect(),
            bounds: BTreeMap::new(),
            fixed,
            init,
            weight: 1.0,
            n_starts: default_starts(),
            max_evals: default_max_evals(),
            variant: ModelVariant::Basic,
            integration: IntegrationOptions::default(),
        };
        for name in free {
            let v = spec
                .value(name)
                .ok_or_else(|| Error::InvalidFitSpec(format!("unknown parameter `{name}`")))?;
            if !(v > 0.0) {
                return Err(Error::InvalidFitSpec(format!(
                    "`{name}` must be positive to bound it in log space"
                )));
            }
            let c = v.log10();
            spec.bounds
                .insert(name.to_string(), (c - decades, c + decades));
        }
        Ok(spec)
    }

    fn value(&self, name: &str) -> Option<f64> {
        match name {
            "I0" => Some(self.init.infected),
            "V0" => Some(self.init.virus),
            "A0" => Some(self.init.antibody),
            "eta" => self.fixed.eta,
            _ => self.fixed.get(name),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidFitSpec(m));
        if self.n_starts == 0 {
            return bad("n_starts must be at least 1".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &self.free {
            if !seen.insert(name) {
                return bad(format!("`{name}` listed twice"));
            }
            if self.value(name).is_none() && name != "eta" {
                return bad(format!("unknown parameter `{name}`"));
            }
            let Some(&(lo, hi)) = self.bounds.get(name) else {
                return bad(format!("missing bounds for `{name}`"));
            };
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!(
                    "bounds for `{name}` must be finite with lo < hi, got ({lo}, {hi})"
                ));
            }
        }
        if let Some(extra) = self.bounds.keys().find(|k| !self.free.contains(k)) {
            return bad(format!("bounds given for non-free `{extra}`"));
        }
        Ok(())
    }

    /// Model and initial state at a point in log₁₀ space.
    fn realize(&self, x: &[f64]) -> (ModelParams, State) {
        let mut p = self.fixed;
        let mut init = self.init;
        for (name, &lx) in self.free.iter().zip(x) {
            let v = 10f64.powf(lx);
            match name.as_str() {
                "I0" => init.infected = v,
                "V0" => init.virus = v,
                "A0" => init.antibody = v,
                _ => {
                    p.set(name, v);
                }
            }
        }
        init.target = p.lambda / p.mu;
        init.t = 0.0;
        if self.variant == ModelVariant::Latent && init.latent.is_none() {
            init.latent = Some(0.0);
        }
        (p, init)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub init: State,
    pub loss: f64,
    pub n_evals: usize,
    pub converged: bool,
    /// Best loss after each simplex iteration of the winning start.
    pub trace: Vec<f64>,
    /// Index of the winning start.
    pub best_start: usize,
}

fn log_floor(v: f64, floor: f64) -> f64 {
    v.max(floor).log10()
}

/// Sum of squared log₁₀ residuals; `+∞` when the model cannot be integrated.
pub fn loss(
    p: &ModelParams,
    variant: ModelVariant,
    init: &State,
    obs: &ObservationSet,
    weight: f64,
    opts: &IntegrationOptions,
) -> Result<f64> {
    obs.validate()?;
    let mut times: Vec<f64> = obs
        .v_obs
        .iter()
        .chain(obs.a_obs.iter().flatten())
        .map(|&(t, _)| t)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let sim_opts = IntegrationOptions {
        t_span: (0.0, times.last().copied().unwrap_or(0.0).max(1e-9)),
        ..*opts
    };
    let states = match integrate_at(p, variant, init, &times, &sim_opts) {
        Ok((s, _)) => s,
        Err(_) => return Ok(f64::INFINITY),
    };
    let at = |t: f64| -> &State {
        let i = times.partition_point(|&x| x < t);
        &states[i]
    };

    let floor = obs.detection_floor;
    let mut total = 0.0;
    for &(t, v) in &obs.v_obs {
        let r = log_floor(at(t).virus, floor) - log_floor(v, floor);
        total += r * r;
    }
    if let Some(a_obs) = &obs.a_obs {
        for &(t, a) in a_obs {
            let r = log_floor(at(t).antibody, floor) - log_floor(a, floor);
            total += weight * r * r;
        }
    }
    Ok(total)
}

/// Model viral loads (and antibodies, when `with_antibody`) at `times`,
/// perturbed by independent log-normal noise with standard deviation
/// `noise_sd_log10` in log₁₀ units.
pub fn synthesize_observations(
    p: &ModelParams,
    variant: ModelVariant,
    init: &State,
    times: &[f64],
    noise_sd_log10: f64,
    with_antibody: bool,
    seed: u64,
) -> Result<ObservationSet> {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let opts = IntegrationOptions {
        t_span: (0.0, sorted.last().copied().unwrap_or(0.0).max(1e-9)),
        ..IntegrationOptions::default()
    };
    let (states, _) = integrate_at(p, variant, init, &sorted, &opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sd_log10.max(0.0))
        .map_err(|e| Error::InvalidObservations(e.to_string()))?;
    let mut noisy = |x: f64| {
        if noise_sd_log10 > 0.0 {
            x * 10f64.powf(normal.sample(&mut rng))
        } else {
            x
        }
    };
    let v_obs = states.iter().map(|s| (s.t, noisy(s.virus))).collect();
    let a_obs = with_antibody.then(|| states.iter().map(|s| (s.t, noisy(s.antibody))).collect());
    Ok(ObservationSet {
        v_obs,
        a_obs,
        detection_floor: DEFAULT_DETECTION_FLOOR,
    })
}

/// Latin-hypercube starting points in the unit cube mapped onto `bounds`.
fn latin_hypercube(rng: &mut ChaCha8Rng, n: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let dims = lo.len();
    let mut points = vec![vec![0.0; dims]; n];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (point, s) in points.iter_mut().zip(strata) {
            let u: f64 = rng.random();
            point[d] = lo[d] + (s as f64 + u) / n as f64 * (hi[d] - lo[d]);
        }
    }
    points
}

/// Multi-start Nelder–Mead in log₁₀ parameter space. Deterministic given
/// `(obs, spec, seed)`.
pub fn fit(obs: &ObservationSet, spec: &FitSpec, seed: u64) -> Result<FitResult> {
    obs.validate()?;
    spec.validate()?;
    let lo: Vec<f64> = spec.free.iter().map(|n| spec.bounds[n].0).collect();
    let hi: Vec<f64> = spec.free.iter().map(|n| spec.bounds[n].1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = latin_hypercube(&mut rng, spec.n_starts, &lo, &hi);

    let nm = NelderMeadOptions {
        max_evals: spec.max_evals,
        ..Default::default()
    };
    let objective = |x: &[f64]| {
        let (p, init) = spec.realize(x);
        loss(&p, spec.variant, &init, obs, spec.weight, &spec.integration).unwrap_or(f64::INFINITY)
    };

    let runs: Vec<_> = starts
        .par_iter()
        .map(|x0| minimize(objective, x0, &lo, &hi, &nm))
        .collect();
    let n_evals = runs.iter().map(|r| r.evals).sum();
    let (best_start, best) = runs
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.f.is_finite())
        .min_by(|(i, a), (j, b)| a.f.total_cmp(&b.f).then(i.cmp(j)))
        .ok_or(Error::FitFailed)?;

    let (params, init) = spec.realize(&best.x);
    // Fewer data than unknowns leaves the fit underdetermined.
    let identifiable = obs.len() >= spec.free.len().max(1);
    Ok(FitResult {
        params,
        init,
        loss: best.f,
        n_evals,
        converged: best.converged && identifiable,
        trace: best.trace,
        best_start,
    })
}
