//! Closed-form KALE estimation with RKHS energies.
//!
//! When the energy family is a ball in a Gaussian-kernel RKHS, the inner
//! maximization collapses by the representer theorem: the optimal energy is
//! `ĥ = α μ̂_P + Σ_i β_i k(Y_i, ·) + c` with `α* = −1/λ` and `c` given in
//! closed form, leaving a concave dual in `β` alone,
//!
//! ```text
//! L(β) = −ln(𝟙ᵀ S(β)) − (λ/2) βᵀKβ,    S(β) = exp(m/λ − Kβ),
//! ```
//!
//! solved by damped Newton iterations
//! `β ← β − γ (λI + E(β)K)⁻¹ (λβ − S̃(β))` with `S̃ = S/𝟙ᵀS` and
//! `E = diag(S̃) − S̃S̃ᵀ` (the kernel matrix cancels from the solve, which
//! keeps the linear systems well conditioned).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::linalg::{cholesky, lu_solve};
use crate::math;
use crate::tensor::Tensor;

/// The reduced problem data: Gaussian-kernel Gram blocks of a two-sample
/// KALE instance. `k` is the `M×M` base-side kernel matrix, `m_vec` holds
/// `m_i = μ̂_P(Y_i) = (1/N)Σ_n k(X_n, Y_i)`, and `mu_sq = ‖μ̂_P‖²` is the
/// all-pairs data-side kernel mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsKaleProblem {
    pub x: Tensor,
    pub y: Tensor,
    pub sigma: f64,
    pub lambda: f64,
    pub k: Tensor,
    pub m_vec: Vec<f64>,
    pub mu_sq: f64,
}

/// Solution of the dual problem, with the representer coefficients of
/// `ĥ = α* μ̂_P + Σ β_i k(Y_i,·) + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct RkhsSolution {
    /// Always `−1/λ` when produced by [`newton_solve`].
    pub alpha_star: f64,
    pub beta: Vec<f64>,
    /// Closed-form constant `ln(𝟙ᵀ exp(m/λ − Kβ)) − ln M` at the final `β`
    /// (`M` = number of base rows).
    pub c: f64,
    /// Dual objective `L(β)` at the final `β`.
    pub objective: f64,
    /// Newton iterations actually performed.
    pub iters: usize,
    /// Final residual `‖λβ − S̃(β)‖`.
    pub residual: f64,
    /// Residual norm before each iteration (for monotonicity diagnostics).
    pub residual_trace: Vec<f64>,
}

/// `k(a, b) = exp(−‖a−b‖² / 2σ²)`.
pub fn gaussian_kernel(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d2: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(u, v)| {
            let d = u - v;
            d * d
        })
        .sum();
    math::exp(-d2 / (2.0 * sigma * sigma))
}

/// Median pairwise Euclidean distance between rows (the usual bandwidth
/// heuristic). Falls back to 1 when every pair coincides.
pub fn median_heuristic(y: &Tensor) -> f64 {
    let n = y.rows();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = y
                .row_slice(i)
                .iter()
                .zip(y.row_slice(j))
                .map(|(u, v)| {
                    let t = u - v;
                    t * t
                })
                .sum();
            d.push(math::sqrt(d2));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let med = math::median(&d);
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Builds the reduced problem from raw samples. Validates the kernel matrix
/// by a jittered Cholesky factorization (jitter `1e-10·tr(K)/M`).
pub fn build_problem(
    x: &Tensor,
    y: &Tensor,
    bandwidth: f64,
    lambda: f64,
) -> Result<RkhsKaleProblem, CoreError> {
    if x.rows() < 2 || y.rows() < 2 {
        return Err(CoreError::InvalidConfig {
            what: String::from("build_problem: need at least 2 rows on each side"),
        });
    }
    if !(bandwidth > 0.0) || !(lambda > 0.0) {
        return Err(CoreError::InvalidConfig {
            what: String::from("build_problem: bandwidth and lambda must be positive"),
        });
    }
    if x.cols() != y.cols() {
        return Err(CoreError::ShapeMismatch {
            op: "build_problem",
            expected: (x.rows(), x.cols()),
            got: (y.rows(), y.cols()),
        });
    }
    let n = x.rows();
    let m = y.rows();
    let mut k = Tensor::zeros(m, m);
    for i in 0..m {
        k.set(i, i, 1.0);
        for j in (i + 1)..m {
            let v = gaussian_kernel(y.row_slice(i), y.row_slice(j), bandwidth);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    let mut m_vec = vec![0.0; m];
    for (i, mi) in m_vec.iter_mut().enumerate() {
        let mut acc = 0.0;
        for a in 0..n {
            acc += gaussian_kernel(x.row_slice(a), y.row_slice(i), bandwidth);
        }
        *mi = acc / n as f64;
        debug_assert!(*mi > 0.0 && *mi <= 1.0);
    }
    let mut mu_sq = 0.0;
    for a in 0..n {
        mu_sq += 1.0; // diagonal contribution k(X_a, X_a)
        for b in (a + 1)..n {
            mu_sq += 2.0 * gaussian_kernel(x.row_slice(a), x.row_slice(b), bandwidth);
        }
    }
    mu_sq /= (n * n) as f64;

    // PSD check: Cholesky must succeed after the jitter.
    let trace: f64 = (0..m).map(|i| k.get(i, i)).sum();
    let jitter = 1e-10 * trace / m as f64;
    let mut kj = k.clone();
    for i in 0..m {
        kj.set(i, i, kj.get(i, i) + jitter);
    }
    cholesky(&kj)?;

    Ok(RkhsKaleProblem {
        x: x.clone(),
        y: y.clone(),
        sigma: bandwidth,
        lambda,
        k,
        m_vec,
        mu_sq,
    })
}

fn kv(k: &Tensor, b: &[f64]) -> Vec<f64> {
    let m = k.rows();
    let mut out = vec![0.0; m];
    for i in 0..m {
        let row = k.row_slice(i);
        out[i] = row.iter().zip(b).map(|(a, c)| a * c).sum();
    }
    out
}

/// Exponent vector `g = m/λ − Kβ`.
fn exponent(p: &RkhsKaleProblem, beta: &[f64]) -> Vec<f64> {
    let kb = kv(&p.k, beta);
    p.m_vec
        .iter()
        .zip(&kb)
        .map(|(mi, ki)| mi / p.lambda - ki)
        .collect()
}

/// Normalized weights `S̃(β) = softmax(g)`.
fn s_tilde(g: &[f64]) -> Vec<f64> {
    let lse = math::logsumexp(g);
    g.iter().map(|v| math::exp(v - lse)).collect()
}

/// The concave dual `L(β) = −ln(𝟙ᵀ S(β)) − (λ/2) βᵀKβ`, evaluated with a
/// stabilized logsumexp over `m/λ − Kβ`.
pub fn dual_objective(p: &RkhsKaleProblem, beta: &[f64]) -> f64 {
    assert_eq!(beta.len(), p.k.rows(), "dual_objective: beta length");
    let g = exponent(p, beta);
    let lse = math::logsumexp(&g);
    let kb = kv(&p.k, beta);
    let quad: f64 = beta.iter().zip(&kb).map(|(a, b)| a * b).sum();
    -lse - 0.5 * p.lambda * quad
}

/// One damped Newton update `β ← β − γ(λI + EK)⁻¹(λβ − S̃)`, with step
/// halving until the dual objective does not decrease. Returns the new `β`
/// and the residual norm `‖λβ − S̃‖` *before* the step. `iter_index` labels
/// linear-solve failures.
pub fn newton_step(
    p: &RkhsKaleProblem,
    beta: &[f64],
    gamma: f64,
    iter_index: usize,
) -> Result<(Vec<f64>, f64), CoreError> {
    let m = p.k.rows();
    let g = exponent(p, beta);
    let st = s_tilde(&g);
    let resid: Vec<f64> = beta
        .iter()
        .zip(&st)
        .map(|(b, s)| p.lambda * b - s)
        .collect();
    let rn = math::l2_norm(&resid);

    // A = λI + E(β)K assembled as diag(S̃)K − S̃(S̃ᵀK), all O(M²).
    let stk = {
        let mut out = vec![0.0; m];
        for (i, si) in st.iter().enumerate() {
            let row = p.k.row_slice(i);
            for (o, kij) in out.iter_mut().zip(row) {
                *o += si * kij;
            }
        }
        out
    };
    let mut a = Tensor::zeros(m, m);
    for i in 0..m {
        let krow = p.k.row_slice(i);
        let arow = a.row_slice_mut(i);
        for j in 0..m {
            arow[j] = st[i] * (krow[j] - stk[j]);
        }
        arow[i] += p.lambda;
    }
    let d = lu_solve(a, &resid).map_err(|_| CoreError::Diverged {
        what: "rkhs newton linear solve",
        step: iter_index,
    })?;

    let l0 = dual_objective(p, beta);
    let mut step = gamma;
    loop {
        let cand: Vec<f64> = beta.iter().zip(&d).map(|(b, di)| b - step * di).collect();
        let l1 = dual_objective(p, &cand);
        if l1 >= l0 - 1e-15 * (1.0 + math::abs(l0)) || step < 1e-8 {
            return Ok((cand, rn));
        }
        step *= 0.5;
    }
}

/// Runs damped Newton from `β = 0` until `‖λβ − S̃(β)‖ ≤ tol` or `max_iters`.
pub fn newton_solve(
    p: &RkhsKaleProblem,
    gamma: f64,
    max_iters: usize,
    tol: f64,
) -> Result<RkhsSolution, CoreError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(CoreError::InvalidConfig {
            what: String::from("newton_solve: damping must be in (0, 1]"),
        });
    }
    if !(tol > 0.0) {
        return Err(CoreError::InvalidConfig {
            what: String::from("newton_solve: tol must be positive"),
        });
    }
    let m = p.k.rows();
    let mut beta = vec![0.0; m];
    let mut trace = Vec::new();
    let mut iters = 0;
    for it in 1..=max_iters {
        let g = exponent(p, &beta);
        let st = s_tilde(&g);
        let rn = math::l2_norm(
            &beta
                .iter()
                .zip(&st)
                .map(|(b, s)| p.lambda * b - s)
                .collect::<Vec<f64>>(),
        );
        trace.push(rn);
        if rn <= tol {
            break;
        }
        let (next, _) = newton_step(p, &beta, gamma, it)?;
        beta = next;
        iters = it;
    }
    let g = exponent(p, &beta);
    let st = s_tilde(&g);
    let residual = math::l2_norm(
        &beta
            .iter()
            .zip(&st)
            .map(|(b, s)| p.lambda * b - s)
            .collect::<Vec<f64>>(),
    );
    let c = math::logsumexp(&g) - math::ln(m as f64);
    let objective = dual_objective(p, &beta);
    Ok(RkhsSolution {
        alpha_star: -1.0 / p.lambda,
        beta,
        c,
        objective,
        iters,
        residual,
        residual_trace: trace,
    })
}

/// The unpenalized empirical objective
/// `F̂(ĥ) = −mean_X ĥ − mean_Y exp(−ĥ) + 1` at the representer solution
/// (using the solution's `α`, `β`, `c` exactly as given).
pub fn rkhs_kale_value(sol: &RkhsSolution, p: &RkhsKaleProblem) -> f64 {
    let m = p.k.rows() as f64;
    let bm: f64 = sol.beta.iter().zip(&p.m_vec).map(|(b, mi)| b * mi).sum();
    let mean_h_x = sol.alpha_star * p.mu_sq + bm + sol.c;
    let kb = kv(&p.k, &sol.beta);
    let mut mean_exp = 0.0;
    for i in 0..p.k.rows() {
        let h_y = sol.alpha_star * p.m_vec[i] + kb[i] + sol.c;
        mean_exp += math::exp(-h_y);
    }
    mean_exp /= m;
    -mean_h_x - mean_exp + 1.0
}

/// Evaluates the representer energy `ĥ` at arbitrary points.
pub fn evaluate_energy(p: &RkhsKaleProblem, sol: &RkhsSolution, pts: &Tensor) -> Vec<f64> {
    assert_eq!(pts.cols(), p.x.cols(), "evaluate_energy: dim mismatch");
    let n = p.x.rows();
    (0..pts.rows())
        .map(|t| {
            let row = pts.row_slice(t);
            let mut mu = 0.0;
            for a in 0..n {
                mu += gaussian_kernel(p.x.row_slice(a), row, p.sigma);
            }
            mu /= n as f64;
            let mut kb = 0.0;
            for (j, bj) in sol.beta.iter().enumerate() {
                kb += bj * gaussian_kernel(p.y.row_slice(j), row, p.sigma);
            }
            sol.alpha_star * mu + kb + sol.c
        })
        .collect()
}

/// `F̂(ĥ)` on held-out sample sets (for validation-based tuning).
pub fn value_on(
    p: &RkhsKaleProblem,
    sol: &RkhsSolution,
    x_eval: &Tensor,
    y_eval: &Tensor,
) -> f64 {
    let hx = evaluate_energy(p, sol, x_eval);
    let hy = evaluate_energy(p, sol, y_eval);
    let me: f64 = hy.iter().map(|h| math::exp(-h)).sum::<f64>() / hy.len() as f64;
    -math::mean(&hx) - me + 1.0
}

/// One cell of the convergence-rate experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCell {
    pub n: usize,
    pub seed: u64,
    pub lambda: f64,
    pub value: f64,
    pub kl_true: f64,
    pub abs_error: f64,
}

/// Convergence-rate experiment: for each `N` in the grid, sets `λ = 1/√N`,
/// solves the two-sample problem per seed, and returns the least-squares
/// slope of `ln(median |value − KL|)` against `ln N`, plus every cell.
///
/// The samplers receive `(n, seed)` and must return `n` rows; they are
/// responsible for making the two sides independent per seed.
pub fn rate_experiment<F, G>(
    mut p_sampler: F,
    mut b_sampler: G,
    n_grid: &[usize],
    seeds: &[u64],
    bandwidth: f64,
    kl_true: f64,
) -> Result<(f64, Vec<RateCell>), CoreError>
where
    F: FnMut(usize, u64) -> Tensor,
    G: FnMut(usize, u64) -> Tensor,
{
    if n_grid.len() < 4 {
        return Err(CoreError::InvalidConfig {
            what: String::from("rate_experiment: need at least 4 grid points"),
        });
    }
    if !n_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(CoreError::InvalidConfig {
            what: String::from("rate_experiment: grid must be strictly increasing"),
        });
    }
    if seeds.len() < 10 {
        return Err(CoreError::InvalidConfig {
            what: String::from("rate_experiment: need at least 10 seeds"),
        });
    }
    let mut cells = Vec::with_capacity(n_grid.len() * seeds.len());
    let mut ln_n = Vec::with_capacity(n_grid.len());
    let mut ln_err = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let lambda = 1.0 / math::sqrt(n as f64);
        let mut errs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let x = p_sampler(n, seed);
            let y = b_sampler(n, seed);
            let problem = build_problem(&x, &y, bandwidth, lambda)?;
            let sol = newton_solve(&problem, 1.0, 100, 1e-10)?;
            let value = rkhs_kale_value(&sol, &problem);
            let abs_error = math::abs(value - kl_true);
            errs.push(abs_error);
            cells.push(RateCell {
                n,
                seed,
                lambda,
                value,
                kl_true,
                abs_error,
            });
        }
        ln_n.push(math::ln(n as f64));
        ln_err.push(math::ln(math::median(&errs)));
    }
    let ubar = math::mean(&ln_n);
    let vbar = math::mean(&ln_err);
    let mut num = 0.0;
    let mut den = 0.0;
    for (u, v) in ln_n.iter().zip(&ln_err) {
        num += (u - ubar) * (v - vbar);
        den += (u - ubar) * (u - ubar);
    }
    Ok((num / den, cells))
}
