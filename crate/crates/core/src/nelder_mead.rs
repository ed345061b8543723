//! Box-constrained Nelder–Mead simplex search.
//!
//! Trial points are projected onto the box. When the simplex collapses before
//! the evaluation budget is spent, the search restarts around the best vertex
//! until a restart stops improving.

pub(crate) struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Converged when `f_max − f_min` over the simplex drops below this.
    pub f_spread_tol: f64,
    /// ...and the simplex diameter, per box width, drops below this.
    pub x_spread_tol: f64,
    pub max_evals: usize,
    /// Initial edge length as a fraction of each box width.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            f_spread_tol: 1e-10,
            x_spread_tol: 1e-8,
            max_evals: 2000,
            initial_step: 0.1,
        }
    }
}

pub(crate) struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub trace: Vec<f64>,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Non-finite objective values are treated as `+∞`.
pub(crate) fn minimize(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut best_x = x0.to_vec();
    project(&mut best_x, lo, hi);
    let mut best_f = eval(&best_x, &mut evals);
    let mut trace = vec![best_f];
    let mut converged = false;

    while evals < opts.max_evals {
        let start_f = best_f;
        let (x, fx, conv) = run_simplex(
            &mut eval, &best_x, best_f, lo, hi, opts, &mut evals, &mut trace,
        );
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        converged = conv;
        if !conv || start_f - best_f <= opts.f_spread_tol {
            break;
        }
    }

    // Zero-dimensional problems never enter the simplex loop.
    if n == 0 {
        converged = true;
    }

    NelderMeadResult {
        x: best_x,
        f: best_f,
        evals,
        converged,
        trace,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_simplex(
    eval: &mut impl FnMut(&[f64], &mut usize) -> f64,
    x0: &[f64],
    f0: f64,
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
    evals: &mut usize,
    trace: &mut Vec<f64>,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    if n == 0 {
        return (x0.to_vec(), f0, true);
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = opts.initial_step * (hi[i] - lo[i]);
        x[i] = if x[i] + step <= hi[i] {
            x[i] + step
        } else {
            x[i] - step
        };
        let fx = eval(&x, evals);
        simplex.push((x, fx));
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].1);
        let spread = simplex[n].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .zip(lo.iter().zip(hi))
                    .map(|((v, b), (l, h))| (v - b).abs() / (h - l))
            })
            .fold(0.0, f64::max);
        if spread.is_finite() && spread < opts.f_spread_tol && diameter < opts.x_spread_tol {
            let (x, f) = simplex.swap_remove(0);
            return (x, f, true);
        }
        if *evals >= opts.max_evals {
            let (x, f) = simplex.swap_remove(0);
            return (x, f, false);
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            project(&mut x, lo, hi);
            x
        };

        let xr = along(opts.reflection);
        let fr = eval(&xr, evals);
        if fr < simplex[0].1 {
            let xe = along(opts.reflection * opts.expansion);
            let fe = eval(&xe, evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(opts.reflection * opts.contraction);
            let fc = eval(&xc, evals);
            (xc, fc)
        } else {
            let xc = along(-opts.contraction);
            let fc = eval(&xc, evals);
            (xc, fc)
        };
        if fc < worst.1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }

        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut x: Vec<f64> = best
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + opts.shrink * (v - b))
                .collect();
            project(&mut x, lo, hi);
            let fx = eval(&x, evals);
            *vertex = (x, fx);
        }
    }
}
