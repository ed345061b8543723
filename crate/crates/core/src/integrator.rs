//! Adaptive Dormand–Prince 5(4) integration of the basic and latent models,
//! with an optional viral-extinction event and trajectory summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{basic_into, latent_into, validate_params, ModelParams, ModelVariant, State};

/// Step control and output settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationOptions {
    /// `(start, end)` in days.
    pub t_span: (f64, f64),
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step the controller may take (days).
    pub max_step: f64,
    /// When set, `V` falling below this level (copies/ml) clears the
    /// infection: `V`, `I` and `L` are zeroed and integration continues.
    pub extinction_threshold: Option<f64>,
    /// Spacing of emitted samples (days).
    pub dense_output_dt: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            t_span: (0.0, 30.0),
            rel_tol: 1e-8,
            abs_tol: 1e-8,
            max_step: 1.0,
            extinction_threshold: None,
            dense_output_dt: 0.05,
        }
    }
}

/// Default clearance level when extinction is switched on.
pub const DEFAULT_EXTINCTION_THRESHOLD: f64 = 1.0;

impl IntegrationOptions {
    pub fn with_span(self, start: f64, end: f64) -> Self {
        IntegrationOptions {
            t_span: (start, end),
            ..self
        }
    }

    pub fn with_tolerances(self, rel_tol: f64, abs_tol: f64) -> Self {
        IntegrationOptions {
            rel_tol,
            abs_tol,
            ..self
        }
    }

    pub fn with_extinction(self, threshold: f64) -> Self {
        IntegrationOptions {
            extinction_threshold: Some(threshold),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (t0, t1) = self.t_span;
        let bad = |m: String| Err(Error::InvalidOptions(m));
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return bad(format!("t_span must satisfy start < end, got ({t0}, {t1})"));
        }
        if !(1e-12..=1e-2).contains(&self.rel_tol) {
            return bad(format!(
                "rel_tol must lie in [1e-12, 1e-2], got {}",
                self.rel_tol
            ));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad(format!("abs_tol must be positive, got {}", self.abs_tol));
        }
        if !(self.max_step > 0.0) {
            return bad(format!("max_step must be positive, got {}", self.max_step));
        }
        if !(self.dense_output_dt > 0.0 && self.dense_output_dt.is_finite()) {
            return bad(format!(
                "dense_output_dt must be positive, got {}",
                self.dense_output_dt
            ));
        }
        if let Some(th) = self.extinction_threshold {
            if !(th > 0.0 && th.is_finite()) {
                return bad(format!("extinction_threshold must be positive, got {th}"));
            }
        }
        Ok(())
    }

    /// Sample grid `t0, t0 + dt, …`, always ending exactly at `t1`.
    pub fn sample_times(&self) -> Vec<f64> {
        let (t0, t1) = self.t_span;
        let dt = self.dense_output_dt;
        let n = ((t1 - t0) / dt + 1e-9).floor() as usize;
        let mut times: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * dt).collect();
        let last = *times.last().unwrap();
        if (t1 - last).abs() <= 1e-9 * dt {
            *times.last_mut().unwrap() = t1;
        } else {
            times.push(t1);
        }
        times
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Extinction,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EventKind::Extinction => f.write_str("Extinction"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

/// Extremes of a sampled trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryMetrics {
    pub peak_v: f64,
    pub t_peak_v: f64,
    pub min_t: f64,
    pub t_min_t: f64,
    /// `1 − min_t / T(0)`, clamped to `[0, 1]`.
    pub target_loss_fraction: f64,
    pub peak_a: f64,
    pub final_state: State,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub variant: ModelVariant,
    pub points: Vec<State>,
    pub events: Vec<Event>,
    pub summary: SummaryMetrics,
}

impl Trajectory {
    pub fn new(variant: ModelVariant, points: Vec<State>, events: Vec<Event>) -> Self {
        let summary = summary_metrics(&points);
        Trajectory {
            variant,
            points,
            events,
            summary,
        }
    }
}

/// Integrates from `init` over `opts.t_span`, emitting states every
/// `opts.dense_output_dt`.
pub fn integrate(
    p: &ModelParams,
    variant: ModelVariant,
    init: &State,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let (points, events) = integrate_at(p, variant, init, &opts.sample_times(), opts)?;
    Ok(Trajectory::new(variant, points, events))
}

/// Integrates from `init` (at `opts.t_span.0`) to the last of `times` and
/// returns the interpolated state at each requested time. `times` must be
/// non-decreasing and not precede the start.
pub fn integrate_at(
    p: &ModelParams,
    variant: ModelVariant,
    init: &State,
    times: &[f64],
    opts: &IntegrationOptions,
) -> Result<(Vec<State>, Vec<Event>)> {
    validate_params(p, variant)?.into_result()?;
    init.validate(variant)?;
    let t0 = opts.t_span.0;
    let t_end = times.last().copied().unwrap_or(t0).max(opts.t_span.1);
    IntegrationOptions {
        t_span: (t0, t_end),
        ..*opts
    }
    .validate()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidOptions(
            "sample times must be non-decreasing and start at or after t_span.0".into(),
        ));
    }

    let y0 = State { t: t0, ..*init }.to_vec();
    let (virus_idx, cleared): (usize, &[usize]) = match variant {
        ModelVariant::Basic => (2, &[1, 2]),
        ModelVariant::Latent => (3, &[1, 2, 3]),
    };
    let eta = p.eta.unwrap_or(0.0);
    let params = *p;
    let rhs = move |y: &[f64], dy: &mut [f64]| match variant {
        ModelVariant::Basic => basic_into(&params, y, dy),
        ModelVariant::Latent => latent_into(&params, eta, y, dy),
    };
    let extinction = opts.extinction_threshold.map(|threshold| Extinction {
        threshold,
        virus_idx,
        cleared,
    });

    let mut solver = Dopri5::new(rhs, y0, t0, opts);
    let out = solver.run(
        times.last().copied().unwrap_or(t0).max(t0),
        times,
        extinction,
    )?;
    let states = out
        .samples
        .into_iter()
        .map(|(t, y)| State::from_slice(t, &y))
        .collect();
    Ok((states, out.events))
}

struct Extinction<'a> {
    threshold: f64,
    virus_idx: usize,
    cleared: &'a [usize],
}

struct RunOutput {
    samples: Vec<(f64, Vec<f64>)>,
    events: Vec<Event>,
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the stage
// nodes are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

struct Dopri5<F> {
    rhs: F,
    y: Vec<f64>,
    t: f64,
    rtol: f64,
    atol: f64,
    max_step: f64,
    k: [Vec<f64>; 7],
    cont: [Vec<f64>; 5],
}

impl<F: Fn(&[f64], &mut [f64])> Dopri5<F> {
    fn new(rhs: F, y0: Vec<f64>, t0: f64, opts: &IntegrationOptions) -> Self {
        let n = y0.len();
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        rhs(&y0, &mut k[0]);
        Dopri5 {
            rhs,
            y: y0,
            t: t0,
            rtol: opts.rel_tol,
            atol: opts.abs_tol,
            max_step: opts.max_step,
            k,
            cont: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.atol + self.rtol * a.abs().max(b.abs())
    }

    fn initial_step(&self, span: f64) -> f64 {
        let n = self.y.len() as f64;
        let sc: Vec<f64> = self.y.iter().map(|&v| self.scale(v, v)).collect();
        let norm =
            |v: &[f64]| (v.iter().zip(&sc).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / n).sqrt();
        let d0 = norm(&self.y);
        let d1 = norm(&self.k[0]);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let h0 = h0.min(span).min(self.max_step);
        let y1: Vec<f64> = self
            .y
            .iter()
            .zip(&self.k[0])
            .map(|(y, f)| y + h0 * f)
            .collect();
        let mut f1 = vec![0.0; self.y.len()];
        (self.rhs)(&y1, &mut f1);
        let diff: Vec<f64> = f1.iter().zip(&self.k[0]).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(self.max_step)
    }

    /// Interpolated state at fraction `theta` of the last accepted step.
    fn dense(&self, theta: f64, out: &mut [f64]) {
        let s1 = 1.0 - theta;
        for (i, o) in out.iter_mut().enumerate() {
            let c = &self.cont;
            *o = c[0][i] + theta * (c[1][i] + s1 * (c[2][i] + theta * (c[3][i] + s1 * c[4][i])));
        }
    }

    fn run(
        &mut self,
        t_end: f64,
        times: &[f64],
        extinction: Option<Extinction<'_>>,
    ) -> Result<RunOutput> {
        let n = self.y.len();
        let mut samples = Vec::with_capacity(times.len());
        let mut events = Vec::new();
        let mut next = 0;

        // Requested samples at the start time.
        while next < times.len() && times[next] <= self.t {
            samples.push((times[next], self.y.clone()));
            next += 1;
        }

        // Only a downward crossing counts, so a run starting below the
        // threshold is left alone until V first rises above it.
        let mut armed = extinction
            .as_ref()
            .is_some_and(|ext| self.y[ext.virus_idx] >= ext.threshold);

        if self.t >= t_end {
            return Ok(RunOutput { samples, events });
        }

        let mut h = self.initial_step(t_end - self.t);
        let mut y_new = vec![0.0; n];
        let mut y_stage = vec![0.0; n];
        let mut err = vec![0.0; n];
        let mut last_rejected = false;

        while self.t < t_end {
            let remaining = t_end - self.t;
            let h_min = 16.0 * f64::EPSILON * self.t.abs().max(1.0);
            h = h.min(self.max_step).min(remaining);
            if remaining - h < h_min {
                h = remaining;
            }
            if h < h_min {
                return Err(Error::StepUnderflow { t: self.t, h });
            }

            self.stages(h, &mut y_stage, &mut y_new, &mut err);

            if y_new.iter().any(|v| !v.is_finite()) {
                h *= 0.25;
                last_rejected = true;
                if h < h_min {
                    return Err(Error::NonFiniteState { t: self.t });
                }
                continue;
            }

            let err_norm = (err
                .iter()
                .zip(self.y.iter().zip(&y_new))
                .map(|(e, (a, b))| (e / self.scale(*a, *b)).powi(2))
                .sum::<f64>()
                / n as f64)
                .sqrt();

            if err_norm > 1.0 {
                let fac = (SAFETY * err_norm.powf(-0.2)).max(FAC_MIN);
                h *= fac;
                last_rejected = true;
                continue;
            }

            // Tiny negative excursions are clamped; larger ones reject the step.
            if y_new.iter().any(|&v| v < -self.atol) {
                h *= 0.5;
                last_rejected = true;
                continue;
            }

            #[allow(clippy::needless_range_loop)]
            for i in 0..n {
                let ydiff = y_new[i] - self.y[i];
                let bspl = h * self.k[0][i] - ydiff;
                self.cont[0][i] = self.y[i];
                self.cont[1][i] = ydiff;
                self.cont[2][i] = bspl;
                self.cont[3][i] = ydiff - h * self.k[6][i] - bspl;
                self.cont[4][i] = h
                    * (D1 * self.k[0][i]
                        + D3 * self.k[2][i]
                        + D4 * self.k[3][i]
                        + D5 * self.k[4][i]
                        + D6 * self.k[5][i]
                        + D7 * self.k[6][i]);
            }

            // Extinction crossing inside this step?
            let mut step_end_theta = 1.0;
            let mut fired = false;
            if let (Some(ext), true) = (&extinction, armed) {
                if y_new[ext.virus_idx] < ext.threshold {
                    step_end_theta = self.locate_crossing(ext, &mut y_stage);
                    fired = true;
                }
            }
            let t_step_end = if fired {
                self.t + step_end_theta * h
            } else {
                self.t + h
            };

            while next < times.len() && times[next] <= t_step_end {
                let theta = ((times[next] - self.t) / h).clamp(0.0, 1.0);
                let mut out = vec![0.0; n];
                if theta >= 1.0 && !fired {
                    out.copy_from_slice(&y_new);
                } else {
                    self.dense(theta, &mut out);
                }
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
                samples.push((times[next], out));
                next += 1;
            }

            if fired {
                let ext = extinction.as_ref().unwrap();
                self.dense(step_end_theta, &mut y_stage);
                self.y.copy_from_slice(&y_stage);
                for v in self.y.iter_mut() {
                    *v = v.max(0.0);
                }
                self.t = t_step_end;
                self.clear(ext);
                events.push(Event {
                    t: self.t,
                    kind: EventKind::Extinction,
                });
                armed = false;
                last_rejected = false;
                continue;
            }

            let mut clamped = false;
            for v in y_new.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                    clamped = true;
                }
            }
            self.t = if remaining - h <= h_min {
                t_end
            } else {
                self.t + h
            };
            self.y.copy_from_slice(&y_new);
            if clamped {
                (self.rhs)(&self.y, &mut self.k[0]);
            } else {
                let (first, rest) = self.k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
            }
            if let Some(ext) = &extinction {
                armed |= self.y[ext.virus_idx] >= ext.threshold;
            }

            let mut fac = if err_norm == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err_norm.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        }

        while next < times.len() {
            samples.push((times[next], self.y.clone()));
            next += 1;
        }
        Ok(RunOutput { samples, events })
    }

    fn clear(&mut self, ext: &Extinction<'_>) {
        for &i in ext.cleared {
            self.y[i] = 0.0;
        }
        (self.rhs)(&self.y, &mut self.k[0]);
    }

    /// Bisection on the dense output for the first `V = threshold` crossing.
    fn locate_crossing(&self, ext: &Extinction<'_>, buf: &mut [f64]) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            self.dense(mid, buf);
            if buf[ext.virus_idx] < ext.threshold {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Computes all stages for step `h`, the 5th-order solution and the
    /// embedded error estimate. Leaves `f(y_new)` in `k[6]`.
    fn stages(&mut self, h: f64, ys: &mut [f64], y_new: &mut [f64], err: &mut [f64]) {
        let n = self.y.len();
        let y = &self.y;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;

        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        (self.rhs)(ys, k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        (self.rhs)(ys, k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        (self.rhs)(ys, k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        (self.rhs)(ys, k5);
        for i in 0..n {
            ys[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        (self.rhs)(ys, k6);
        for i in 0..n {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        (self.rhs)(y_new, k7);
        for i in 0..n {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
    }
}

/// Vertex of the parabola through three points, if it lies strictly inside
/// the bracket.
fn parabolic_vertex(t: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let d01 = (y[1] - y[0]) / (t[1] - t[0]);
    let d12 = (y[2] - y[1]) / (t[2] - t[1]);
    let curv = (d12 - d01) / (t[2] - t[0]);
    if !curv.is_finite() || curv == 0.0 {
        return None;
    }
    // y(s) = y1 + slope (s - t1) + curv (s - t1)^2 with the centred slope.
    let slope = d01 + curv * (t[1] - t[0]);
    let ts = t[1] - slope / (2.0 * curv);
    if !(ts > t[0] && ts < t[2]) {
        return None;
    }
    let ys = y[1] + slope * (ts - t[1]) + curv * (ts - t[1]).powi(2);
    Some((ts, ys))
}

fn refined_extreme(points: &[State], value: impl Fn(&State) -> f64, maximize: bool) -> (f64, f64) {
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let mut best = 0;
    for (i, s) in points.iter().enumerate() {
        if better(value(s), value(&points[best])) {
            best = i;
        }
    }
    let (tb, yb) = (points[best].t, value(&points[best]));
    if best == 0 || best + 1 == points.len() {
        return (tb, yb);
    }
    let tt = [points[best - 1].t, tb, points[best + 1].t];
    let yy = [value(&points[best - 1]), yb, value(&points[best + 1])];
    match parabolic_vertex(tt, yy) {
        Some((ts, ys)) if !better(yb, ys) => (ts, ys),
        _ => (tb, yb),
    }
}

/// Peak viral load, target-cell minimum and antibody peak, refined by a
/// parabola through the three samples around each extremum.
///
/// An empty slice yields all-zero metrics.
pub fn summary_metrics(points: &[State]) -> SummaryMetrics {
    let Some(first) = points.first() else {
        return SummaryMetrics {
            peak_v: 0.0,
            t_peak_v: 0.0,
            min_t: 0.0,
            t_min_t: 0.0,
            target_loss_fraction: 0.0,
            peak_a: 0.0,
            final_state: State {
                t: 0.0,
                target: 0.0,
                infected: 0.0,
                virus: 0.0,
                antibody: 0.0,
                latent: None,
            },
        };
    };
    let (t_peak_v, peak_v) = refined_extreme(points, |s| s.virus, true);
    let (t_min_t, min_t) = refined_extreme(points, |s| s.target, false);
    let (_, peak_a) = refined_extreme(points, |s| s.antibody, true);
    let target_loss_fraction = if first.target > 0.0 {
        (1.0 - min_t / first.target).clamp(0.0, 1.0)
    } else {
        0.0
    };
    SummaryMetrics {
        peak_v,
        t_peak_v,
        min_t,
        t_min_t,
        target_loss_fraction,
        peak_a,
        final_state: *points.last().unwrap(),
    }
}
