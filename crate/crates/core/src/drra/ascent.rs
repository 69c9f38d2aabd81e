//! Projected gradient ascent with Barzilai-Borwein steps and Armijo
//! backtracking.

/// Stopping rules of one subproblem solve.
#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub max_iterations: usize,
    /// Bound on the projected-gradient residual, relative to `max(|f|, 1)`.
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentStats {
    pub iterations: usize,
    pub converged: bool,
    pub value: f64,
}

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// Maximize `f` over the set behind `project`, starting from the feasible
/// point `x`, which is overwritten with the result. `f` returns the value
/// and writes the gradient into its second argument.
pub fn maximize<F, P>(x: &mut [f64], mut f: F, project: P, opts: AscentOptions) -> AscentStats
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = f(x, &mut g);
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut step = {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax > 0.0 { 1.0 / gmax } else { 1.0 }
    };

    let residual = |x: &[f64], g: &[f64], fx: f64, buf: &mut [f64]| -> f64 {
        let scale = fx.abs().max(1.0);
        for i in 0..x.len() {
            buf[i] = x[i] + g[i] / scale;
        }
        project(buf);
        x.iter().zip(buf.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    };

    let mut buf = vec![0.0; n];
    for it in 0..opts.max_iterations {
        if residual(x, &g, fx, &mut buf) <= opts.tolerance {
            return AscentStats { iterations: it, converged: true, value: fx };
        }
        let mut accepted = false;
        let mut alpha = step;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                trial[i] = x[i] + alpha * g[i];
            }
            project(&mut trial);
            let lin: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            if lin <= 0.0 {
                break;
            }
            let ft = f(&trial, &mut g_trial);
            if ft >= fx + ARMIJO_C * lin {
                accepted = true;
                // Barzilai-Borwein step for the next iteration.
                let mut ss = 0.0;
                let mut sy = 0.0;
                for i in 0..n {
                    let s = trial[i] - x[i];
                    let y = g[i] - g_trial[i];
                    ss += s * s;
                    sy += s * y;
                }
                step = if sy > 0.0 { (ss / sy).clamp(1e-12 * alpha, 1e6 * alpha.max(step)) } else { alpha * 2.0 };
                x.copy_from_slice(&trial);
                g.copy_from_slice(&g_trial);
                fx = ft;
                break;
            }
            alpha *= SHRINK;
        }
        if !accepted {
            // No ascent direction survives the projection at working
            // precision: a stationary point up to round-off.
            let res = residual(x, &g, fx, &mut buf);
            return AscentStats { iterations: it + 1, converged: res <= opts.tolerance.sqrt(), value: fx };
        }
    }
    let converged = residual(x, &g, fx, &mut buf) <= opts.tolerance;
    AscentStats { iterations: opts.max_iterations, converged, value: fx }
}
