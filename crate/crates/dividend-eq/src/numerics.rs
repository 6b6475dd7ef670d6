//! Deterministic scalar root finding, a damped two-dimensional Newton
//! iteration, and a small dense linear solver. Everything here is pure and
//! re-entrant; two calls with identical inputs produce bitwise-identical
//! outputs.

use thiserror::Error;

/// Default residual tolerance for the root finders.
pub const DEFAULT_TOL_F: f64 = 1e-10;
/// Default bracket-width tolerance for the bracketed solver.
pub const DEFAULT_TOL_X: f64 = 1e-12;
/// Default iteration cap for the root finders.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Smallest damping factor tried by the Newton line search (2^-20).
const DAMPING_FLOOR: f64 = 1.0 / (1 << 20) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RootError {
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("bracketed solve did not converge within {max_iter} iterations (last x = {last_x})")]
    MaxIterExceeded { max_iter: usize, last_x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum NewtonError {
    #[error("Jacobian is numerically singular at ({x}, {y})")]
    SingularJacobian { x: f64, y: f64 },
    #[error("Newton iteration did not converge within {max_iter} iterations (residual {residual})")]
    MaxIterExceeded { max_iter: usize, residual: f64 },
    #[error("iterate ({x}, {y}) left the admissible domain")]
    Diverged { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LinearError {
    #[error("matrix is numerically singular (pivot {pivot} at column {col})")]
    Singular { pivot: f64, col: usize },
}

/// A continuous function with a sign change on `[lo, hi]`.
pub struct BracketedRootProblem<F: Fn(f64) -> f64> {
    pub f: F,
    pub lo: f64,
    pub hi: f64,
    pub tol_x: f64,
    pub tol_f: f64,
    pub max_iter: usize,
}

impl<F: Fn(f64) -> f64> BracketedRootProblem<F> {
    pub fn new(f: F, lo: f64, hi: f64) -> Self {
        BracketedRootProblem {
            f,
            lo,
            hi,
            tol_x: DEFAULT_TOL_X,
            tol_f: DEFAULT_TOL_F,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Brent-style bracketed root finding: bisection with inverse-quadratic and
/// secant acceleration. Succeeds once `|f| <= tol_f` or the bracket width
/// drops below `tol_x`.
pub fn solve_bracketed<F: Fn(f64) -> f64>(p: &BracketedRootProblem<F>) -> Result<f64, RootError> {
    let f = &p.f;
    let mut a = p.lo;
    let mut b = p.hi;
    let mut fa = f(a);
    let mut fb = f(b);

    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa * fb <= 0.0) {
        // covers same-sign endpoints and NaN evaluations
        return Err(RootError::NoSignChange {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..p.max_iter {
        if (fb > 0.0 && fc > 0.0) || (fb < 0.0 && fc < 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * p.tol_x;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= p.tol_f {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, falling back to secant
            let s = fb / fa;
            let (mut pp, mut q);
            if a == c {
                pp = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                q = fa / fc;
                let r = fb / fc;
                pp = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
                q = (q - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if pp > 0.0 {
                q = -q;
            }
            pp = pp.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * pp < min1.min(min2) {
                e = d;
                d = pp / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += if xm > 0.0 { tol1 } else { -tol1 };
        }
        fb = f(b);
        if fb == 0.0 {
            return Ok(b);
        }
    }
    Err(RootError::MaxIterExceeded {
        max_iter: p.max_iter,
        last_x: b,
    })
}

/// A two-dimensional residual system with a starting point and an admissible
/// domain. Steps leaving the domain are damped back; the iteration fails with
/// [`NewtonError::Diverged`] if no admissible damped step exists.
pub struct Newton2dProblem<F, D>
where
    F: Fn(f64, f64) -> (f64, f64),
    D: Fn(f64, f64) -> bool,
{
    pub f: F,
    pub start: (f64, f64),
    pub within_domain: D,
    pub tol_f: f64,
    pub max_iter: usize,
}

impl<F> Newton2dProblem<F, fn(f64, f64) -> bool>
where
    F: Fn(f64, f64) -> (f64, f64),
{
    pub fn new(f: F, start: (f64, f64)) -> Self {
        Newton2dProblem {
            f,
            start,
            within_domain: |_, _| true,
            tol_f: DEFAULT_TOL_F,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl<F, D> Newton2dProblem<F, D>
where
    F: Fn(f64, f64) -> (f64, f64),
    D: Fn(f64, f64) -> bool,
{
    pub fn with_domain<D2: Fn(f64, f64) -> bool>(self, within: D2) -> Newton2dProblem<F, D2> {
        Newton2dProblem {
            f: self.f,
            start: self.start,
            within_domain: within,
            tol_f: self.tol_f,
            max_iter: self.max_iter,
        }
    }
}

fn norm_inf2(v: (f64, f64)) -> f64 {
    v.0.abs().max(v.1.abs())
}

/// Damped Newton iteration for a 2x2 system. The Jacobian is approximated by
/// central finite differences with step `max(1e-7, 1e-7 |x|)` per component;
/// the step length is halved (down to 2^-20) until the residual norm
/// decreases and the iterate stays inside the admissible domain.
pub fn solve_newton2d<F, D>(p: &Newton2dProblem<F, D>) -> Result<(f64, f64), NewtonError>
where
    F: Fn(f64, f64) -> (f64, f64),
    D: Fn(f64, f64) -> bool,
{
    let f = &p.f;
    let (mut x, mut y) = p.start;
    if !(p.within_domain)(x, y) {
        return Err(NewtonError::Diverged { x, y });
    }
    let mut res = f(x, y);
    let mut res_norm = norm_inf2(res);

    for _ in 0..p.max_iter {
        if res_norm <= p.tol_f {
            return Ok((x, y));
        }

        let hx = 1e-7_f64.max(1e-7 * x.abs());
        let hy = 1e-7_f64.max(1e-7 * y.abs());
        let fxp = f(x + hx, y);
        let fxm = f(x - hx, y);
        let fyp = f(x, y + hy);
        let fym = f(x, y - hy);
        let j00 = (fxp.0 - fxm.0) / (2.0 * hx);
        let j10 = (fxp.1 - fxm.1) / (2.0 * hx);
        let j01 = (fyp.0 - fym.0) / (2.0 * hy);
        let j11 = (fyp.1 - fym.1) / (2.0 * hy);

        let det = j00 * j11 - j01 * j10;
        let scale = j00.abs().max(j01.abs()).max(j10.abs()).max(j11.abs());
        if !det.is_finite() || det.abs() <= 1e-14 * scale * scale {
            return Err(NewtonError::SingularJacobian { x, y });
        }
        let dx = -(res.0 * j11 - res.1 * j01) / det;
        let dy = -(j00 * res.1 - j10 * res.0) / det;

        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= DAMPING_FLOOR {
            let xt = x + lambda * dx;
            let yt = y + lambda * dy;
            if (p.within_domain)(xt, yt) {
                let rt = f(xt, yt);
                let nt = norm_inf2(rt);
                if nt.is_finite() && nt < res_norm {
                    x = xt;
                    y = yt;
                    res = rt;
                    res_norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // a full step that leaves the domain and cannot be damped back
            let xt = x + dx;
            let yt = y + dy;
            if !(p.within_domain)(xt, yt) {
                return Err(NewtonError::Diverged { x: xt, y: yt });
            }
            return Err(NewtonError::MaxIterExceeded {
                max_iter: p.max_iter,
                residual: res_norm,
            });
        }
    }
    if res_norm <= p.tol_f {
        return Ok((x, y));
    }
    Err(NewtonError::MaxIterExceeded {
        max_iter: p.max_iter,
        residual: res_norm,
    })
}

const MAX_DENSE: usize = 8;

/// Solves `A x = b` for `n <= 8` by LU with partial pivoting. Rows and
/// columns are equilibrated by their max magnitudes before factorization
/// (the smooth-fit systems mix exponential terms of very different scales)
/// and one step of iterative refinement is applied.
pub fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>, LinearError> {
    assert!(n > 0 && n <= MAX_DENSE, "solve_dense handles n <= 8");
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);

    // equilibration scales
    let mut row_scale = [1.0_f64; MAX_DENSE];
    for i in 0..n {
        let m = (0..n).map(|j| a[i * n + j].abs()).fold(0.0, f64::max);
        if m == 0.0 || !m.is_finite() {
            return Err(LinearError::Singular { pivot: m, col: i });
        }
        row_scale[i] = 1.0 / m;
    }
    let mut col_scale = [1.0_f64; MAX_DENSE];
    for j in 0..n {
        let m = (0..n)
            .map(|i| (a[i * n + j] * row_scale[i]).abs())
            .fold(0.0, f64::max);
        if m == 0.0 || !m.is_finite() {
            return Err(LinearError::Singular { pivot: m, col: j });
        }
        col_scale[j] = 1.0 / m;
    }

    // scaled copy, factored in place
    let mut lu = [0.0_f64; MAX_DENSE * MAX_DENSE];
    for i in 0..n {
        for j in 0..n {
            lu[i * n + j] = a[i * n + j] * row_scale[i] * col_scale[j];
        }
    }
    let mut perm = [0usize; MAX_DENSE];
    for (i, p) in perm.iter_mut().enumerate().take(n) {
        *p = i;
    }
    for k in 0..n {
        let mut pivot_row = k;
        let mut pivot_val = lu[perm[k] * n + k].abs();
        for r in (k + 1)..n {
            let v = lu[perm[r] * n + k].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val < 1e-14 {
            return Err(LinearError::Singular {
                pivot: pivot_val,
                col: k,
            });
        }
        perm.swap(k, pivot_row);
        let pk = perm[k];
        for r in (k + 1)..n {
            let pr = perm[r];
            let m = lu[pr * n + k] / lu[pk * n + k];
            lu[pr * n + k] = m;
            for j in (k + 1)..n {
                lu[pr * n + j] -= m * lu[pk * n + j];
            }
        }
    }

    let substitute = |rhs: &[f64]| -> [f64; MAX_DENSE] {
        let mut y = [0.0_f64; MAX_DENSE];
        for k in 0..n {
            let mut s = rhs[perm[k]];
            for j in 0..k {
                s -= lu[perm[k] * n + j] * y[j];
            }
            y[k] = s;
        }
        for k in (0..n).rev() {
            let mut s = y[k];
            for j in (k + 1)..n {
                s -= lu[perm[k] * n + j] * y[j];
            }
            y[k] = s / lu[perm[k] * n + k];
        }
        y
    };

    // solve on the scaled system, then undo the column scaling
    let mut rb = [0.0_f64; MAX_DENSE];
    for i in 0..n {
        rb[i] = b[i] * row_scale[i];
    }
    let ys = substitute(&rb[..n]);
    let mut x = vec![0.0_f64; n];
    for j in 0..n {
        x[j] = ys[j] * col_scale[j];
    }

    // one step of iterative refinement on the original system
    let mut residual = [0.0_f64; MAX_DENSE];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..n {
            s -= a[i * n + j] * x[j];
        }
        residual[i] = s * row_scale[i];
    }
    let dy = substitute(&residual[..n]);
    for j in 0..n {
        x[j] += dy[j] * col_scale[j];
    }

    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn bracketed_finds_sqrt_two() {
        let p = BracketedRootProblem::new(|x| x * x - 2.0, 1.0, 2.0);
        let root = solve_bracketed(&p).unwrap();
        assert!((root - std::f64::consts::SQRT_2).abs() < 1e-10);
        assert!((root * root - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn bracketed_finds_identity_root() {
        let p = BracketedRootProblem::new(|x| x, -1.0, 1.0);
        let root = solve_bracketed(&p).unwrap();
        assert!(root.abs() < 1e-10);
    }

    #[test]
    fn bracketed_rejects_missing_sign_change() {
        let p = BracketedRootProblem::new(|x| x * x + 1.0, -1.0, 1.0);
        assert!(matches!(
            solve_bracketed(&p),
            Err(RootError::NoSignChange { .. })
        ));
    }

    #[test]
    fn bracketed_accepts_root_at_endpoint() {
        let p = BracketedRootProblem::new(|x| x - 1.0, 1.0, 2.0);
        assert_eq!(solve_bracketed(&p).unwrap(), 1.0);
    }

    #[test]
    fn bracketed_residual_bound_holds_on_success() {
        // assorted transcendental brackets; verify the reported residual
        let cases: Vec<(fn(f64) -> f64, f64, f64)> = vec![
            (|x| 4.0 * x.cos() - x.exp(), -1.5, 6.0),
            (|x| x.recip() + x.ln() - 100.0, 0.001, 100.0),
            (|x| x.powi(20) - 1.0, -0.5, 5.0),
            (|x| x.exp().exp() - 1.0f64.exp().exp(), 0.5, 3.5),
        ];
        for (f, lo, hi) in cases {
            let p = BracketedRootProblem::new(f, lo, hi);
            let root = solve_bracketed(&p).unwrap();
            assert!(root >= lo && root <= hi);
            // either the residual tolerance or the bracket tolerance fired;
            // for these smooth functions both imply a tiny residual
            assert!(f(root).abs() < 1e-8, "residual too large for root {root}");
        }
    }

    #[test]
    fn bracketed_is_deterministic() {
        let run = || {
            let p = BracketedRootProblem::new(|x: f64| x.sin() - 0.42, 0.0, 1.5);
            solve_bracketed(&p).unwrap()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn newton_solves_affine_system() {
        let p = Newton2dProblem::new(|a, b| (a - 1.0, b - 2.0), (0.0, 0.0));
        let (a, b) = solve_newton2d(&p).unwrap();
        assert!((a - 1.0).abs() < 1e-9 && (b - 2.0).abs() < 1e-9);
    }

    #[test]
    fn newton_solves_quadratic_system() {
        let p = Newton2dProblem::new(|a, b| (a * a - b, b - 4.0), (1.0, 1.0));
        let (a, b) = solve_newton2d(&p).unwrap();
        assert!((a - 2.0).abs() < 1e-8 && (b - 4.0).abs() < 1e-8);
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        let p = Newton2dProblem::new(|a, b| (a + b, a + b), (1.0, 1.0));
        assert!(matches!(
            solve_newton2d(&p),
            Err(NewtonError::SingularJacobian { .. })
        ));
    }

    #[test]
    fn newton_respects_domain() {
        let p = Newton2dProblem::new(|a, b| (a + 5.0, b + 5.0), (1.0, 1.0))
            .with_domain(|a, b| a > 0.0 && b > 0.0);
        assert!(matches!(
            solve_newton2d(&p),
            Err(NewtonError::Diverged { .. }) | Err(NewtonError::MaxIterExceeded { .. })
        ));
    }

    #[test]
    fn dense_identity_returns_rhs() {
        let a = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let b = [3.0, -1.0, 7.5];
        let x = solve_dense(&a, &b, 3).unwrap();
        assert_eq!(x, vec![3.0, -1.0, 7.5]);
    }

    #[test]
    fn dense_diagonal_system() {
        let a = [2.0, 0.0, 0.0, 4.0];
        let b = [2.0, 8.0];
        let x = solve_dense(&a, &b, 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn dense_rejects_singular_matrix() {
        let a = [1.0, 2.0, 2.0, 4.0];
        let b = [1.0, 2.0];
        assert!(matches!(
            solve_dense(&a, &b, 2),
            Err(LinearError::Singular { .. })
        ));
    }

    #[test]
    fn dense_backward_error_on_random_systems() {
        // 1000 random well-conditioned 5x5 systems
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = 5;
            let mut a = vec![0.0; n * n];
            for (i, entry) in a.iter_mut().enumerate() {
                *entry = rng.random_range(-1.0..1.0);
                if i % (n + 1) == 0 {
                    *entry += 4.0; // diagonally dominant, hence well-conditioned
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = solve_dense(&a, &b, n).unwrap();
            let b_norm = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                let mut r = b[i];
                for j in 0..n {
                    r -= a[i * n + j] * x[j];
                }
                assert!(
                    r.abs() <= 1e-12 * b_norm.max(f64::MIN_POSITIVE),
                    "residual {r} exceeds bound"
                );
            }
        }
    }

    #[test]
    fn dense_handles_badly_scaled_rows() {
        // rows spanning 12 orders of magnitude
        let a = [1e9, 2e9, 3e-6, 4e-6];
        let b = [3e9, 7e-6];
        let x = solve_dense(&a, &b, 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9);
        assert!((x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dense_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(11);
        let a: Vec<f64> = (0..25)
            .map(|i| rng.random_range(-1.0..1.0) + if i % 6 == 0 { 3.0 } else { 0.0 })
            .collect();
        let b: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x1 = solve_dense(&a, &b, 5).unwrap();
        let x2 = solve_dense(&a, &b, 5).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
}
