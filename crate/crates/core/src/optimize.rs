//! Bound-constrained nonlinear least squares and cubic curve smoothing.
//!
//! [`trf_least_squares`] is a trust-region-reflective solver in the style of
//! Branch, Coleman and Li: the problem is rescaled with the Coleman-Li
//! scaling vector so that bounds act like a barrier, the trust-region
//! subproblem on the scaled problem is solved by dogleg, and steps that leave
//! the feasible box are either truncated, reflected off the first bound hit,
//! or replaced by a scaled steepest-descent step, whichever predicts the
//! lowest cost. All iterates stay strictly inside the box.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Residual vector `r(x)`; the objective is `0.5 * |r(x)|^2`.
pub struct LeastSquaresProblem<F> {
    pub residual: F,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub initial: Vec<f64>,
}

impl<F> LeastSquaresProblem<F>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    /// Unbounded problem.
    pub fn new(residual: F, initial: Vec<f64>) -> Self {
        let n = initial.len();
        Self {
            residual,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            initial,
        }
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.initial.len();
        if n == 0 {
            return Err(Error::EmptyInput("parameter vector"));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Input(format!(
                "bounds have lengths {}/{} but there are {n} parameters",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for i in 0..n {
            let (lo, hi, x) = (self.lower[i], self.upper[i], self.initial[i]);
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Input(format!("bounds [{lo}, {hi}] for parameter {i}")));
            }
            if lo == hi {
                return Err(Error::Input(format!("bounds for parameter {i} have zero width")));
            }
            if !x.is_finite() || x < lo || x > hi {
                return Err(Error::Input(format!(
                    "initial value {x} of parameter {i} is outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrfOptions {
    pub max_iterations: usize,
    /// Maximum residual evaluations, Jacobian columns included.
    pub max_evaluations: usize,
    /// Stop when the scaled gradient `|v * g|_inf` drops below this.
    pub gradient_tolerance: f64,
    /// Stop when `|dx| < tol * (tol + |x|)`.
    pub step_tolerance: f64,
    /// Stop when the relative cost reduction of a good step drops below this.
    pub cost_tolerance: f64,
    /// Relative forward-difference step.
    pub diff_step: f64,
}

impl Default for TrfOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            max_evaluations: 10_000,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-12,
            cost_tolerance: 1e-15,
            diff_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxIterations,
    Stalled,
}

impl FitStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxIterations => "max-iterations",
            FitStatus::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveBound {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub iteration: usize,
    pub cost: f64,
    pub parameters: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub parameters: Vec<f64>,
    pub residuals: Vec<f64>,
    pub residual_norm: f64,
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: FitStatus,
    pub active: Vec<ActiveBound>,
    pub history: Vec<Iterate>,
}

impl FitResult {
    pub fn any_active(&self) -> bool {
        self.active.iter().any(|a| *a != ActiveBound::Free)
    }

    /// Writes `iteration,cost,param_0..param_k`.
    pub fn write_history_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let k = self.parameters.len();
        write!(out, "iteration,cost")?;
        for i in 0..k {
            write!(out, ",param_{i}")?;
        }
        writeln!(out)?;
        for it in &self.history {
            write!(out, "{},{:?}", it.iteration, it.cost)?;
            for p in &it.parameters {
                write!(out, ",{p:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn evaluate<F: Fn(&[f64]) -> Vec<f64>>(residual: &F, x: &[f64]) -> Result<DVector<f64>> {
    let r = residual(x);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation { params: x.to_vec() });
    }
    Ok(DVector::from_vec(r))
}

/// Forward-difference Jacobian with relative step `h` and no bounds.
pub fn finite_difference_jacobian<F>(residual: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let f0 = evaluate(&residual, x)?;
    finite_difference_jacobian_bounded(
        &residual,
        x,
        &f0,
        h,
        &vec![f64::NEG_INFINITY; n],
        &vec![f64::INFINITY; n],
    )
}

/// Forward differences around `x`, flipping a column's step backwards when
/// the forward probe would leave the box.
pub fn finite_difference_jacobian_bounded<F>(
    residual: &F,
    x: &[f64],
    f0: &DVector<f64>,
    h: f64,
    lower: &[f64],
    upper: &[f64],
) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = f0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let mut step = h * x[j].abs().max(1.0);
        if x[j] + step > upper[j] {
            step = -step;
        }
        // guards against cancellation in x + step
        let xj = x[j] + step;
        if xj < lower[j] {
            return Err(Error::Input(format!(
                "parameter {j} has no room for a difference step inside [{}, {}]",
                lower[j], upper[j]
            )));
        }
        let actual = xj - x[j];
        probe[j] = xj;
        let fj = evaluate(residual, &probe)?;
        if fj.len() != m {
            return Err(Error::Input(format!(
                "residual length changed from {m} to {}",
                fj.len()
            )));
        }
        for i in 0..m {
            jac[(i, j)] = (fj[i] - f0[i]) / actual;
        }
        probe[j] = x[j];
    }
    Ok(jac)
}

/// Coleman-Li scaling vector and its derivative sign.
fn cl_scaling(x: &DVector<f64>, g: &DVector<f64>, lb: &[f64], ub: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let n = x.len();
    let mut v = DVector::from_element(n, 1.0);
    let mut dv = DVector::zeros(n);
    for i in 0..n {
        if g[i] < 0.0 && ub[i].is_finite() {
            v[i] = ub[i] - x[i];
            dv[i] = -1.0;
        } else if g[i] > 0.0 && lb[i].is_finite() {
            v[i] = x[i] - lb[i];
            dv[i] = 1.0;
        }
    }
    (v, dv)
}

fn make_strictly_feasible(x: &mut DVector<f64>, lb: &[f64], ub: &[f64], rstep: f64) {
    for i in 0..x.len() {
        if rstep == 0.0 {
            if x[i] <= lb[i] {
                x[i] = lb[i].next_up();
            } else if x[i] >= ub[i] {
                x[i] = ub[i].next_down();
            }
        } else {
            if x[i] <= lb[i] {
                x[i] = lb[i] + rstep * lb[i].abs().max(1.0);
            } else if x[i] >= ub[i] {
                x[i] = ub[i] - rstep * ub[i].abs().max(1.0);
            }
            if !(x[i] > lb[i] && x[i] < ub[i]) {
                x[i] = 0.5 * (lb[i] + ub[i]);
            }
        }
    }
}

fn in_bounds(x: &DVector<f64>, lb: &[f64], ub: &[f64]) -> bool {
    x.iter().enumerate().all(|(i, &v)| v >= lb[i] && v <= ub[i])
}

/// Smallest step along `s` to reach a bound, and which components hit it.
fn step_size_to_bound(x: &DVector<f64>, s: &DVector<f64>, lb: &[f64], ub: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len();
    let mut steps = vec![f64::INFINITY; n];
    for i in 0..n {
        if s[i] != 0.0 {
            steps[i] = ((lb[i] - x[i]) / s[i]).max((ub[i] - x[i]) / s[i]);
        }
    }
    let min_step = steps.iter().cloned().fold(f64::INFINITY, f64::min);
    let hits = (0..n)
        .map(|i| if steps[i] == min_step { s[i].signum() } else { 0.0 })
        .collect();
    (min_step, hits)
}

/// Parameters `t` where `|x + t s| = delta`, smaller root first.
fn intersect_trust_region(x: &DVector<f64>, s: &DVector<f64>, delta: f64) -> (f64, f64) {
    let a = s.dot(s);
    let b = x.dot(s);
    let c = x.dot(x) - delta * delta;
    let d = (b * b - a * c).max(0.0).sqrt();
    let q = -(b + d.copysign(b));
    let t1 = q / a;
    let t2 = if q != 0.0 { c / q } else { -t1 };
    if t1 < t2 {
        (t1, t2)
    } else {
        (t2, t1)
    }
}

/// Scaled quadratic model `0.5 s'(J'J + diag)s + g's` restricted to the line
/// `s0 + t s`, returned as coefficients `(a, b, c)` of `a t^2 + b t + c`.
fn quadratic_1d(
    jac: &DMatrix<f64>,
    g: &DVector<f64>,
    diag: &DVector<f64>,
    s: &DVector<f64>,
    s0: Option<&DVector<f64>>,
) -> (f64, f64, f64) {
    let v = jac * s;
    let a = 0.5 * (v.dot(&v) + s.component_mul(diag).dot(s));
    let mut b = g.dot(s);
    let mut c = 0.0;
    if let Some(s0) = s0 {
        let u = jac * s0;
        b += u.dot(&v) + s0.component_mul(diag).dot(s);
        c = 0.5 * (u.dot(&u) + s0.component_mul(diag).dot(s0)) + g.dot(s0);
    }
    (a, b, c)
}

fn minimize_quadratic_1d(a: f64, b: f64, lo: f64, hi: f64, c: f64) -> (f64, f64) {
    let mut candidates = vec![lo, hi];
    if a != 0.0 {
        let extremum = -0.5 * b / a;
        if lo < extremum && extremum < hi {
            candidates.push(extremum);
        }
    }
    candidates
        .into_iter()
        .map(|t| (t, t * (a * t + b) + c))
        .fold((lo, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn model_value(jac: &DMatrix<f64>, g: &DVector<f64>, diag: &DVector<f64>, s: &DVector<f64>) -> f64 {
    let (a, b, _) = quadratic_1d(jac, g, diag, s, None);
    a + b
}

/// Dogleg step for `min 0.5|A p + f|^2` with `|p| <= delta`, given the
/// Gauss-Newton point and the gradient `A'f`.
fn dogleg(gauss_newton: &DVector<f64>, grad: &DVector<f64>, aug_jac: &DMatrix<f64>, delta: f64) -> DVector<f64> {
    if gauss_newton.norm() <= delta {
        return gauss_newton.clone();
    }
    let g_norm = grad.norm();
    if g_norm == 0.0 {
        return gauss_newton * (delta / gauss_newton.norm());
    }
    let ag = aug_jac * grad;
    let curvature = ag.dot(&ag);
    let cauchy = if curvature > 0.0 {
        grad * (-(g_norm * g_norm) / curvature)
    } else {
        grad * (-delta / g_norm)
    };
    if cauchy.norm() >= delta {
        return grad * (-delta / g_norm);
    }
    let diff = gauss_newton - &cauchy;
    let (_, t) = intersect_trust_region(&cauchy, &diff, delta);
    cauchy + diff * t.clamp(0.0, 1.0)
}

struct StepContext<'a> {
    x: &'a DVector<f64>,
    jac_h: &'a DMatrix<f64>,
    diag_h: &'a DVector<f64>,
    g_h: &'a DVector<f64>,
    d: &'a DVector<f64>,
    delta: f64,
    lb: &'a [f64],
    ub: &'a [f64],
    theta: f64,
}

/// Picks among the truncated, reflected and steepest-descent steps.
/// Returns `(step, scaled step, predicted reduction)`.
fn select_step(ctx: &StepContext<'_>, mut p: DVector<f64>, mut p_h: DVector<f64>) -> (DVector<f64>, DVector<f64>, f64) {
    let StepContext {
        x,
        jac_h,
        diag_h,
        g_h,
        d,
        delta,
        lb,
        ub,
        theta,
    } = *ctx;

    if in_bounds(&(x + &p), lb, ub) {
        let value = model_value(jac_h, g_h, diag_h, &p_h);
        return (p, p_h, -value);
    }

    let (p_stride, hits) = step_size_to_bound(x, &p, lb, ub);
    let mut r_h = p_h.clone();
    for (i, h) in hits.iter().enumerate() {
        if *h != 0.0 {
            r_h[i] = -r_h[i];
        }
    }
    let r = d.component_mul(&r_h);

    p *= p_stride;
    p_h *= p_stride;
    let x_on_bound = x + &p;

    let (_, to_tr) = intersect_trust_region(&p_h, &r_h, delta);
    let (to_bound, _) = step_size_to_bound(&x_on_bound, &r, lb, ub);
    let r_stride = to_bound.min(to_tr);
    let (r_lo, r_hi) = if r_stride > 0.0 {
        let lo = (1.0 - theta) * p_stride / r_stride;
        let hi = if r_stride == to_bound { theta * to_bound } else { to_tr };
        (lo, hi)
    } else {
        (0.0, -1.0)
    };

    let (reflected, reflected_h, r_value) = if r_lo <= r_hi {
        let (a, b, c) = quadratic_1d(jac_h, g_h, diag_h, &r_h, Some(&p_h));
        let (t, value) = minimize_quadratic_1d(a, b, r_lo, r_hi, c);
        let step_h = &p_h + &r_h * t;
        let step = d.component_mul(&step_h);
        (step, step_h, value)
    } else {
        (p.clone(), p_h.clone(), f64::INFINITY)
    };

    p *= theta;
    p_h *= theta;
    let p_value = model_value(jac_h, g_h, diag_h, &p_h);

    let ag_h = -g_h;
    let ag = d.component_mul(&ag_h);
    let ag_norm = ag_h.norm();
    let (ag_step, ag_step_h, ag_value) = if ag_norm > 0.0 {
        let to_tr = delta / ag_norm;
        let (to_bound, _) = step_size_to_bound(x, &ag, lb, ub);
        let stride = if to_bound < to_tr { theta * to_bound } else { to_tr };
        let (a, b, _) = quadratic_1d(jac_h, g_h, diag_h, &ag_h, None);
        let (t, value) = minimize_quadratic_1d(a, b, 0.0, stride, 0.0);
        (ag * t, ag_h * t, value)
    } else {
        (ag, ag_h, f64::INFINITY)
    };

    if p_value < r_value && p_value < ag_value {
        (p, p_h, -p_value)
    } else if r_value < p_value && r_value < ag_value {
        (reflected, reflected_h, -r_value)
    } else {
        (ag_step, ag_step_h, -ag_value)
    }
}

fn classify_active(x: &[f64], lb: &[f64], ub: &[f64]) -> Vec<ActiveBound> {
    const TOL: f64 = 1e-6;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            if lb[i].is_finite() && v - lb[i] <= TOL * lb[i].abs().max(1.0) {
                ActiveBound::Lower
            } else if ub[i].is_finite() && ub[i] - v <= TOL * ub[i].abs().max(1.0) {
                ActiveBound::Upper
            } else {
                ActiveBound::Free
            }
        })
        .collect()
}

/// Minimizes `0.5 |r(x)|^2` subject to `lower <= x <= upper`.
pub fn trf_least_squares<F>(problem: &LeastSquaresProblem<F>, opts: &TrfOptions) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    problem.validate()?;
    let lb = problem.lower.as_slice();
    let ub = problem.upper.as_slice();
    let n = problem.initial.len();
    let residual = &problem.residual;

    let mut x = DVector::from_column_slice(&problem.initial);
    make_strictly_feasible(&mut x, lb, ub, 1e-10);

    let mut f = evaluate(residual, x.as_slice())?;
    let m = f.len();
    if m == 0 {
        return Err(Error::EmptyInput("residual vector"));
    }
    let mut evaluations = 1;
    let mut jac = finite_difference_jacobian_bounded(residual, x.as_slice(), &f, opts.diff_step, lb, ub)?;
    evaluations += n;
    let mut cost = 0.5 * f.dot(&f);

    let mut history = vec![Iterate {
        iteration: 0,
        cost,
        parameters: x.as_slice().to_vec(),
    }];

    let g0 = jac.transpose() * &f;
    let (v0, _) = cl_scaling(&x, &g0, lb, ub);
    let mut delta = x.component_div(&v0.map(f64::sqrt)).norm();
    if delta == 0.0 || !delta.is_finite() {
        delta = 1.0;
    }

    let mut iterations = 0;
    let status = loop {
        let g = jac.transpose() * &f;
        let (v, dv) = cl_scaling(&x, &g, lb, ub);
        let g_norm = g.component_mul(&v).amax();
        if g_norm < opts.gradient_tolerance {
            break FitStatus::Converged;
        }
        if iterations >= opts.max_iterations {
            break FitStatus::MaxIterations;
        }
        if evaluations >= opts.max_evaluations {
            break FitStatus::Stalled;
        }

        let d = v.map(f64::sqrt);
        let diag_h = g.component_mul(&dv);
        let g_h = d.component_mul(&g);
        let jac_h = &jac * DMatrix::from_diagonal(&d);

        let mut aug = DMatrix::zeros(m + n, n);
        aug.view_mut((0, 0), (m, n)).copy_from(&jac_h);
        for i in 0..n {
            aug[(m + i, i)] = diag_h[i].max(0.0).sqrt();
        }
        let mut f_aug = DVector::zeros(m + n);
        f_aug.rows_mut(0, m).copy_from(&f);
        let gauss_newton = -aug
            .clone()
            .svd(true, true)
            .solve(&f_aug, 1e-14)
            .map_err(|e| Error::Input(e.to_string()))?;

        let theta = (1.0 - g_norm).max(0.995);
        let ctx_base = (theta, &jac_h, &diag_h, &g_h, &d);

        let mut accepted: Option<(DVector<f64>, DVector<f64>, f64)> = None;
        let mut terminate: Option<FitStatus> = None;
        let mut inner = 0;
        while accepted.is_none() && terminate.is_none() {
            if evaluations >= opts.max_evaluations || inner > 100 {
                terminate = Some(FitStatus::Stalled);
                break;
            }
            inner += 1;

            let p_h = dogleg(&gauss_newton, &g_h, &aug, delta);
            let p = d.component_mul(&p_h);
            let ctx = StepContext {
                x: &x,
                jac_h: ctx_base.1,
                diag_h: ctx_base.2,
                g_h: ctx_base.3,
                d: ctx_base.4,
                delta,
                lb,
                ub,
                theta: ctx_base.0,
            };
            let (step, step_h, predicted) = select_step(&ctx, p, p_h);
            let mut x_new = &x + &step;
            make_strictly_feasible(&mut x_new, lb, ub, 0.0);
            let f_new = evaluate(residual, x_new.as_slice())?;
            evaluations += 1;

            let step_h_norm = step_h.norm();
            let cost_new = 0.5 * f_new.dot(&f_new);
            let actual = cost - cost_new;

            let ratio = if predicted > 0.0 {
                actual / predicted
            } else if predicted == actual {
                1.0
            } else {
                0.0
            };
            let old_delta = delta;
            if ratio < 0.25 {
                delta = 0.25 * step_h_norm;
            } else if ratio > 0.75 && step_h_norm > 0.95 * old_delta {
                delta *= 2.0;
            }

            let step_norm = (&x_new - &x).norm();
            let ftol_hit = actual.abs() < opts.cost_tolerance * cost && ratio > 0.25;
            let xtol_hit = step_norm < opts.step_tolerance * (opts.step_tolerance + x.norm());
            if ftol_hit || xtol_hit {
                terminate = Some(FitStatus::Converged);
            }
            if actual > 0.0 {
                accepted = Some((x_new, f_new, cost_new));
            } else if delta == 0.0 {
                terminate = Some(FitStatus::Stalled);
            }
        }

        if let Some((x_new, f_new, cost_new)) = accepted {
            x = x_new;
            f = f_new;
            cost = cost_new;
            iterations += 1;
            history.push(Iterate {
                iteration: iterations,
                cost,
                parameters: x.as_slice().to_vec(),
            });
            if terminate.is_none() {
                jac = finite_difference_jacobian_bounded(residual, x.as_slice(), &f, opts.diff_step, lb, ub)?;
                evaluations += n;
            }
        }
        if let Some(status) = terminate {
            break status;
        }
    };

    let parameters = x.as_slice().to_vec();
    Ok(FitResult {
        active: classify_active(&parameters, lb, ub),
        residual_norm: f.norm(),
        residuals: f.as_slice().to_vec(),
        parameters,
        cost,
        iterations,
        evaluations,
        status,
        history,
    })
}

/// Least-squares cubic `a0 + a1 x + a2 x^2 + a3 x^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicFit {
    pub coefficients: [f64; 4],
}

impl CubicFit {
    pub fn new(coefficients: [f64; 4]) -> Self {
        Self { coefficients }
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_cubic(self, x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let [_, a1, a2, a3] = self.coefficients;
        a1 + x * (2.0 * a2 + x * 3.0 * a3)
    }

    /// Antiderivative vanishing at zero.
    pub fn integral(&self, x: f64) -> f64 {
        let [a0, a1, a2, a3] = self.coefficients;
        x * (a0 + x * (a1 / 2.0 + x * (a2 / 3.0 + x * a3 / 4.0)))
    }
}

pub fn eval_cubic(fit: &CubicFit, x: f64) -> f64 {
    let [a0, a1, a2, a3] = fit.coefficients;
    a0 + x * (a1 + x * (a2 + x * a3))
}

pub fn cubic_polyfit(points: &[(f64, f64)]) -> Result<CubicFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: points.len(),
        });
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::Input("non-finite sample in cubic fit".into()));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 4 {
        return Err(Error::Degenerate(format!(
            "cubic fit needs 4 distinct abscissae, got {}",
            xs.len()
        )));
    }

    // Vandermonde on x / scale keeps the columns comparable in magnitude.
    let scale = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let vander = DMatrix::from_fn(points.len(), 4, |i, j| (points[i].0 / scale).powi(j as i32));
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let qr = vander.qr();
    let qty = qr.q().transpose() * y;
    let coeffs = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Degenerate("rank-deficient cubic design matrix".into()))?;
    let mut out = [0.0; 4];
    for (k, c) in out.iter_mut().enumerate() {
        *c = coeffs[k] / scale.powi(k as i32);
    }
    Ok(CubicFit::new(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn solve(problem: &LeastSquaresProblem<impl Fn(&[f64]) -> Vec<f64>>) -> FitResult {
        trf_least_squares(problem, &TrfOptions::default()).unwrap()
    }

    #[test]
    fn interior_minimum() {
        let p = LeastSquaresProblem::new(|x: &[f64]| vec![x[0] - 3.0], vec![0.0]).with_bounds(vec![0.0], vec![10.0]);
        let r = solve(&p);
        assert!((r.parameters[0] - 3.0).abs() < 1e-6, "{:?}", r.parameters);
        assert_eq!(r.status, FitStatus::Converged);
        assert_eq!(r.active, vec![ActiveBound::Free]);
    }

    #[test]
    fn minimum_clipped_at_bound() {
        let p = LeastSquaresProblem::new(|x: &[f64]| vec![x[0] - 3.0], vec![1.0]).with_bounds(vec![0.0], vec![2.0]);
        let r = solve(&p);
        assert!((r.parameters[0] - 2.0).abs() < 1e-6);
        assert!(r.parameters[0] <= 2.0);
        assert_eq!(r.active, vec![ActiveBound::Upper]);
    }

    #[test]
    fn rosenbrock() {
        let p = LeastSquaresProblem::new(
            |x: &[f64]| vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]],
            vec![-1.2, 1.0],
        )
        .with_bounds(vec![-5.0, -5.0], vec![5.0, 5.0]);
        let r = solve(&p);
        assert!((r.parameters[0] - 1.0).abs() < 1e-6, "{:?}", r.parameters);
        assert!((r.parameters[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cost_history_non_increasing_and_feasible() {
        let lb = vec![-0.5, -5.0];
        let ub = vec![0.8, 5.0];
        let p = LeastSquaresProblem::new(
            |x: &[f64]| vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]],
            vec![-1.2 * 0.4, 1.0],
        )
        .with_bounds(lb.clone(), ub.clone());
        let r = solve(&p);
        for w in r.history.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
        for it in &r.history {
            for (i, v) in it.parameters.iter().enumerate() {
                assert!(*v >= lb[i] && *v <= ub[i]);
            }
        }
        assert!((r.parameters[0] - 0.8).abs() < 1e-6);
        assert_eq!(r.active[0], ActiveBound::Upper);
    }

    #[test]
    fn infeasible_initial_guess_rejected() {
        let p = LeastSquaresProblem::new(|x: &[f64]| vec![x[0]], vec![5.0]).with_bounds(vec![0.0], vec![1.0]);
        assert!(matches!(
            trf_least_squares(&p, &TrfOptions::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn non_finite_residual_reports_parameters() {
        let p = LeastSquaresProblem::new(|x: &[f64]| vec![x[0].ln()], vec![-1.0]);
        match trf_least_squares(&p, &TrfOptions::default()) {
            Err(Error::Evaluation { params }) => assert_eq!(params, vec![-1.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn already_optimal_takes_no_iterations() {
        let p = LeastSquaresProblem::new(|x: &[f64]| vec![x[0] - 1.0, 2.0 * (x[1] + 1.0)], vec![1.0, -1.0]);
        let r = solve(&p);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.residual_norm, 0.0);
    }

    #[test]
    fn jacobian_of_linear_map() {
        let a = [[1.0, 2.0, -1.0], [0.5, -3.0, 4.0]];
        let b = [1.0, -2.0];
        let res = |x: &[f64]| {
            (0..2)
                .map(|i| a[i][0] * x[0] + a[i][1] * x[1] + a[i][2] * x[2] - b[i])
                .collect::<Vec<_>>()
        };
        let j = finite_difference_jacobian(res, &[0.3, -1.0, 2.0], 1e-6).unwrap();
        for i in 0..2 {
            for k in 0..3 {
                assert!((j[(i, k)] - a[i][k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn jacobian_of_square_and_sine() {
        let j = finite_difference_jacobian(|x: &[f64]| vec![x[0] * x[0]], &[2.0], 1e-6).unwrap();
        assert!((j[(0, 0)] - 4.0).abs() < 1e-5);
        let j = finite_difference_jacobian(|x: &[f64]| vec![x[0].sin()], &[0.0], 1e-6).unwrap();
        assert!((j[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn jacobian_step_flips_at_upper_bound() {
        let x = [1.0];
        let f0 = DVector::from_vec(vec![1.0]);
        let seen = std::cell::RefCell::new(Vec::new());
        let res = |p: &[f64]| {
            seen.borrow_mut().push(p[0]);
            vec![p[0] * p[0]]
        };
        let j = finite_difference_jacobian_bounded(&res, &x, &f0, 1e-6, &[0.0], &[1.0]).unwrap();
        assert!(seen.borrow().iter().all(|v| *v <= 1.0));
        assert!((j[(0, 0)] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn cubic_exact_recovery() {
        let pts: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let x = i as f64 * 0.7 - 1.0;
                (x, 2.0 * x.powi(3) - x + 1.0)
            })
            .collect();
        let fit = cubic_polyfit(&pts).unwrap();
        let expected = [1.0, -1.0, 0.0, 2.0];
        for k in 0..4 {
            assert!(
                (fit.coefficients[k] - expected[k]).abs() < 1e-9,
                "{:?}",
                fit.coefficients
            );
        }
        for (x, y) in pts {
            assert!((fit.eval(x) - y).abs() < 1e-9);
        }
    }

    #[test]
    fn cubic_interpolates_four_points() {
        let pts = [(0.0, 1.0), (1.0, -2.0), (2.5, 0.5), (4.0, 3.0)];
        let fit = cubic_polyfit(&pts).unwrap();
        for (x, y) in pts {
            assert!((fit.eval(x) - y).abs() < 1e-10);
        }
    }

    #[test]
    fn cubic_rejects_degenerate_abscissae() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (1.0, 2.5), (2.0, 3.0), (2.0, 0.0)];
        assert!(matches!(cubic_polyfit(&pts), Err(Error::Degenerate(_))));
        assert!(matches!(cubic_polyfit(&pts[..3]), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn eval_cubic_examples() {
        assert_eq!(eval_cubic(&CubicFit::new([1.0, 0.0, 0.0, 0.0]), 5.0), 1.0);
        assert_eq!(eval_cubic(&CubicFit::new([0.0, 1.0, 0.0, 0.0]), 5.0), 5.0);
        assert_eq!(eval_cubic(&CubicFit::new([1.0, -1.0, 0.0, 2.0]), 2.0), 15.0);
    }

    #[test]
    fn cubic_integral_and_derivative() {
        let c = CubicFit::new([1.0, -1.0, 0.5, 2.0]);
        let h = 1e-6;
        assert_relative_eq!(
            c.derivative(1.3),
            (c.eval(1.3 + h) - c.eval(1.3 - h)) / (2.0 * h),
            max_relative = 1e-7
        );
        assert_relative_eq!(
            (c.integral(1.3 + h) - c.integral(1.3 - h)) / (2.0 * h),
            c.eval(1.3),
            max_relative = 1e-7
        );
    }

    #[test]
    fn history_csv_header() {
        let p = LeastSquaresProblem::new(|x: &[f64]| vec![x[0] - 3.0, x[1]], vec![0.0, 1.0]);
        let r = solve(&p);
        let mut buf = Vec::new();
        r.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,cost,param_0,param_1\n0,"));
        assert_eq!(text.lines().count(), r.history.len() + 1);
    }
}
