//! Minimizers used by the likelihood fits: a BFGS quasi-Newton method with
//! backtracking line search for smooth objectives, and Nelder–Mead for the
//! non-smooth ones. Infeasible points are signalled by returning `+inf`.

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Convergence when the max-norm of the gradient drops below this.
    pub grad_tol: f64,
    /// Convergence when the relative decrease of the objective stalls below this.
    pub f_tol: f64,
    /// Cap on the length of the first trial step along a search direction.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 500,
            grad_tol: 1e-8,
            f_tol: 1e-15,
            max_step: 1.0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f` where `f(x)` returns the value and gradient.
pub fn bfgs<F>(mut f: F, x0: &[f64], opts: BfgsOptions) -> OptimResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return OptimResult {
            x,
            value: fx,
            grad_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }
    let mut h = identity(n);
    let mut stalled = 0;
    for iter in 0..opts.max_iter {
        let gnorm = max_abs(&g);
        if gnorm < opts.grad_tol {
            return OptimResult {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                converged: true,
            };
        }
        let mut d = matvec(&h, &g);
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 || !slope.is_finite() {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let dnorm = dot(&d, &d).sqrt();
        let mut step = if dnorm > opts.max_step { opts.max_step / dnorm } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // Line search failed: if the gradient is already small relative to
            // the objective we are at numerical precision.
            return OptimResult {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                converged: gnorm < opts.grad_tol * 1e3,
            };
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if iter == 0 {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v *= scale));
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        let rel = (fx - fn_).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if rel < opts.f_tol {
            stalled += 1;
            if stalled >= 3 {
                return OptimResult {
                    grad_norm: max_abs(&g),
                    x,
                    value: fx,
                    iterations: iter + 1,
                    converged: true,
                };
            }
        } else {
            stalled = 0;
        }
    }
    OptimResult {
        grad_norm: max_abs(&g),
        x,
        value: fx,
        iterations: opts.max_iter,
        converged: false,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy = matvec(h, y);
    let yhy = dot(y, &hy);
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Symmetric Hessian by central differences of an analytic gradient.
pub fn hessian_from_gradient<G>(mut grad: G, x: &[f64], rel_step: f64) -> Vec<Vec<f64>>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut hess = vec![vec![0.0; n]; n];
    for j in 0..n {
        let h = rel_step * x[j].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let gp = grad(&xp);
        let gm = grad(&xm);
        for i in 0..n {
            hess[i][j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (hess[i][j] + hess[j][i]);
            hess[i][j] = avg;
            hess[j][i] = avg;
        }
    }
    hess
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    /// Initial simplex edge relative to each coordinate (absolute when the coordinate is 0).
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 20_000,
            f_tol: 1e-12,
            x_tol: 1e-10,
            initial_step: 0.1,
        }
    }
}

/// Adaptive Nelder–Mead (Gao–Han coefficients).
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: NelderMeadOptions) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = f(x0);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = if x[i] != 0.0 { opts.initial_step * x[i].abs() } else { opts.initial_step };
        x[i] += step;
        let mut fx = f(&x);
        if !fx.is_finite() {
            x[i] = x0[i] - step;
            fx = f(&x);
        }
        simplex.push((x, fx));
    }
    let mut evals = n + 1;
    let mut iterations = 0;
    let cmp = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    while evals < opts.max_evals {
        iterations += 1;
        simplex.sort_by(cmp);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = (worst - best).abs();
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            .fold(0.0f64, f64::max);
        if worst.is_finite() && spread <= opts.f_tol * best.abs().max(1e-300) + opts.f_tol && size <= opts.x_tol {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let worst_x = simplex[n].0.clone();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst_x).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xr = along(alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(alpha * gamma);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(alpha * rho);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let xs: Vec<f64> = x_best.iter().zip(&item.0).map(|(b, v)| b + sigma * (v - b)).collect();
                    let fs = f(&xs);
                    *item = (xs, fs);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(cmp);
    let (x, value) = simplex.swap_remove(0);
    OptimResult {
        x,
        value,
        grad_norm: f64::NAN,
        iterations,
        converged: evals < opts.max_evals,
    }
}
