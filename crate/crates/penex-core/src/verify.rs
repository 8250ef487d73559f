//! Independent numeric oracles for the theory behind the workbench: the
//! closed-form population minimizer and a numeric twin, the
//! confidence-penalty inconsistency probe, the margin-bound check, the
//! optimal-penalty grid oracle, and the weak-learner direction search.
//!
//! Every oracle recomputes its target quantity from first principles
//! (root finding, grid search, dense direction sampling) rather than
//! reusing the formulas it is meant to test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::losses::{self, ex_loss, sum_exp_mean};
use crate::model::{ModelSpec, Parameters, forward_graph, forward_slices};
use crate::tape::Tape;

/// Two-sided 99% normal quantile used for the binomial slack.
pub const WALD_Z_99: f64 = 2.5758293035489004;

/// Log-spaced grid used by the optimal-penalty oracle.
pub const RHO_GRID_POINTS: usize = 10_000;
pub const RHO_GRID_LO: f64 = 1e-8;
pub const RHO_GRID_HI: f64 = 1e4;

/// Random unit directions sampled by the weak-learner search.
pub const DEFAULT_DIRECTION_SAMPLES: usize = 100_000;

/// Top-ranked random directions that seed the local refinement.
const REFINE_STARTS: usize = 10;

/// Iterates below this are treated as diverging to −∞.
const NEWTON_FLOOR: f64 = -300.0;

fn check_simplex(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(CoreError::Parameter("empty probability vector".into()));
    }
    if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(CoreError::Parameter("probabilities must lie in [0, 1]".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CoreError::Parameter(format!("probabilities sum to {total}, expected 1")));
    }
    Ok(())
}

/// Per-class population minimizer `f*(y) = ln(α·P(y)/ρ)/(1+α)`; classes
/// with zero probability map to −∞.
pub fn fisher_closed_form(probs: &[f64], alpha: f64, rho: f64) -> Result<Vec<f64>> {
    check_simplex(probs)?;
    if !(alpha > 0.0) || !(rho > 0.0) {
        return Err(CoreError::Parameter(format!(
            "alpha and rho must be positive, got alpha={alpha}, rho={rho}"
        )));
    }
    Ok(probs
        .iter()
        .map(|&p| {
            if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                (alpha * p / rho).ln() / (1.0 + alpha)
            }
        })
        .collect())
}

/// Value of the conditional objective `Σ_y P(y)·e^{−α·f(y)} + ρ·Σ_j e^{f(j)}`.
pub fn conditional_penex(probs: &[f64], f: &[f64], alpha: f64, rho: f64) -> f64 {
    let data_term: f64 = probs
        .iter()
        .zip(f)
        .map(|(&p, &fy)| if p == 0.0 { 0.0 } else { p * (-alpha * fy).exp() })
        .sum();
    let penalty: f64 = f.iter().map(|&fj| fj.exp()).sum();
    data_term + rho * penalty
}

/// Minimizes the conditional objective coordinate-wise by damped Newton.
/// Coordinates whose iterate escapes below the floor while the derivative
/// stays positive are reported as −∞. Fails when the iteration cap of 10⁴
/// is exhausted, which the strict convexity of the objective rules out
/// short of a bug.
pub fn fisher_numeric(probs: &[f64], alpha: f64, rho: f64, tol: f64) -> Result<Vec<f64>> {
    check_simplex(probs)?;
    if !(alpha > 0.0) || !(rho > 0.0) || !(tol > 0.0) {
        return Err(CoreError::Parameter(format!(
            "alpha, rho, tol must be positive, got {alpha}, {rho}, {tol}"
        )));
    }
    let coord_tol = tol / (probs.len() as f64).sqrt();
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        let phi = |t: f64| -> f64 {
            let data = if p == 0.0 { 0.0 } else { p * (-alpha * t).exp() };
            data + rho * t.exp()
        };
        let dphi = |t: f64| -> f64 {
            let data = if p == 0.0 { 0.0 } else { -alpha * p * (-alpha * t).exp() };
            data + rho * t.exp()
        };
        let ddphi = |t: f64| -> f64 {
            let data = if p == 0.0 { 0.0 } else { alpha * alpha * p * (-alpha * t).exp() };
            data + rho * t.exp()
        };
        let mut t = 0.0f64;
        let mut converged = false;
        for _ in 0..10_000 {
            let g = dphi(t);
            // A vanishing gradient alone does not mean a minimum: for a
            // zero-probability coordinate the gradient ρ·eᵗ decays while
            // the Newton step stays at 1. The step is also the remaining
            // position error, so it carries the accuracy requirement.
            if g.abs() < coord_tol && (g / ddphi(t)).abs() < coord_tol {
                converged = true;
                break;
            }
            if t < NEWTON_FLOOR && g > 0.0 {
                // The derivative never crossed zero: the coordinate has no
                // finite minimizer.
                t = f64::NEG_INFINITY;
                converged = true;
                break;
            }
            let mut step = g / ddphi(t);
            let value = phi(t);
            // The slack keeps rounding noise in φ from rejecting genuine
            // progress once the step shrinks below value resolution.
            let accept_level = value + value.abs() * 1e-14;
            let mut attempts = 0;
            while phi(t - step) > accept_level && attempts < 60 {
                step /= 2.0;
                attempts += 1;
            }
            t -= step;
        }
        if !converged {
            return Err(CoreError::Contract(format!(
                "oracle failure: coordinate with probability {p} did not converge"
            )));
        }
        out.push(t);
    }
    Ok(out)
}

/// `H(P‖P̂) − λ·H(P̂)` on the simplex interior.
pub fn conf_penalty_objective(probs: &[f64], phat: &[f64], lambda: f64) -> f64 {
    let kl: f64 = probs
        .iter()
        .zip(phat)
        .map(|(&p, &q)| if p == 0.0 { 0.0 } else { p * (p / q).ln() })
        .sum();
    let entropy: f64 = -phat.iter().map(|&q| if q == 0.0 { 0.0 } else { q * q.ln() }).sum::<f64>();
    kl - lambda * entropy
}

/// Minimizes `H(P‖P̂) − λ·H(P̂)` over the simplex by solving the
/// stationarity condition `−P(y)/p + λ(1+ln p) + λ′ = 0` per coordinate
/// (the left side is strictly increasing in p) inside a bisection on the
/// multiplier λ′ that restores Σp = 1.
pub fn conf_penalty_minimizer(probs: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_simplex(probs)?;
    if lambda < 0.0 {
        return Err(CoreError::Parameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(probs.to_vec());
    }

    let root = |py: f64, multiplier: f64| -> f64 {
        let g = |p: f64| -py / p + lambda * (1.0 + p.ln()) + multiplier;
        let mut lo = 1e-300;
        let mut hi = 1.0;
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) / 2.0
    };
    let excess = |multiplier: f64| -> f64 {
        probs.iter().map(|&p| root(p, multiplier)).sum::<f64>() - 1.0
    };

    let mut lo = -1e3;
    let mut hi = 1e3;
    while excess(lo) < 0.0 {
        lo *= 2.0;
    }
    while excess(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let multiplier = (lo + hi) / 2.0;
    let mut phat: Vec<f64> = probs.iter().map(|&p| root(p, multiplier)).collect();
    let total: f64 = phat.iter().sum();
    for q in &mut phat {
        *q /= total;
    }
    Ok(phat)
}

/// Right side of the margin bound:
/// `e^{γα/(α+1)}·ρ^{−α/(α+1)}·penex_value`.
pub fn theorem_rhs(gamma: f64, alpha: f64, rho: f64, penex_value: f64) -> f64 {
    (gamma * alpha / (alpha + 1.0)).exp() * rho.powf(-alpha / (alpha + 1.0)) * penex_value
}

/// Empirical margin-tail frequencies against the bound, with a binomial
/// 99% slack on the frequency side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub gamma_grid: Vec<f64>,
    pub empirical_freq: Vec<f64>,
    pub bound_rhs: Vec<f64>,
    pub slack: Vec<f64>,
    pub penex_value: f64,
    pub alpha: f64,
    pub rho: f64,
    pub n: usize,
    pub holds: Vec<bool>,
}

impl BoundCheck {
    pub fn all_hold(&self) -> bool {
        self.holds.iter().all(|&h| h)
    }
}

/// Evaluates the margin bound for a model on a dataset: the frequency of
/// raw-logit margins at or below each γ must not exceed the bound computed
/// from the empirical penalized-loss value at (α, ρ).
pub fn check_margin_bound(
    model: &ModelSpec,
    params: &Parameters<f64>,
    data: &Dataset,
    alpha: f64,
    rho: f64,
    gamma_grid: &[f64],
) -> Result<BoundCheck> {
    if !(alpha > 0.0) || !(rho > 0.0) {
        return Err(CoreError::Parameter(format!(
            "alpha and rho must be positive, got alpha={alpha}, rho={rho}"
        )));
    }
    if data.is_empty() {
        return Err(CoreError::Contract("cannot check the bound on an empty dataset".into()));
    }
    let n = data.len();
    let k = model.num_classes;
    let logits = forward_slices(model, params, &data.features, n)?;
    let margins = losses::margin(&logits, k, &data.labels)?;

    let mut ex = 0.0;
    let mut se = 0.0;
    for (row, &y) in logits.chunks_exact(k).zip(&data.labels) {
        ex += (-alpha * row[y]).exp();
        se += row.iter().map(|&v| v.exp()).sum::<f64>();
    }
    let penex_value = ex / n as f64 + rho * (se / n as f64);

    let mut empirical_freq = Vec::with_capacity(gamma_grid.len());
    let mut bound_rhs = Vec::with_capacity(gamma_grid.len());
    let mut slack = Vec::with_capacity(gamma_grid.len());
    let mut holds = Vec::with_capacity(gamma_grid.len());
    for &gamma in gamma_grid {
        let freq =
            margins.iter().filter(|&&m| m <= gamma).count() as f64 / n as f64;
        let rhs = theorem_rhs(gamma, alpha, rho, penex_value);
        let half_width = WALD_Z_99 * (freq * (1.0 - freq) / n as f64).sqrt();
        empirical_freq.push(freq);
        bound_rhs.push(rhs);
        slack.push(half_width);
        holds.push(freq <= rhs + half_width);
    }
    Ok(BoundCheck {
        gamma_grid: gamma_grid.to_vec(),
        empirical_freq,
        bound_rhs,
        slack,
        penex_value,
        alpha,
        rho,
        n,
        holds,
    })
}

/// Minimizes the bound right side over ρ by a 10⁴-point log grid followed
/// by golden-section refinement; the minimizer is γ-independent.
pub fn optimal_rho_grid(ex_mean: f64, se_mean: f64, alpha: f64, gamma: f64) -> Result<f64> {
    if !(ex_mean > 0.0) || !(se_mean > 0.0) || !(alpha > 0.0) {
        return Err(CoreError::Parameter(format!(
            "ex, se, alpha must be positive, got {ex_mean}, {se_mean}, {alpha}"
        )));
    }
    let rhs_log = |u: f64| -> f64 {
        let rho = u.exp();
        theorem_rhs(gamma, alpha, rho, ex_mean + rho * se_mean)
    };
    let (lo, hi) = (RHO_GRID_LO.ln(), RHO_GRID_HI.ln());
    let step = (hi - lo) / (RHO_GRID_POINTS - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..RHO_GRID_POINTS {
        let v = rhs_log(lo + i as f64 * step);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    // The right side is strictly convex in ln ρ, so the bracket around the
    // grid argmin contains the unique minimizer.
    let mut a = lo + best_i.saturating_sub(1) as f64 * step;
    let mut b = lo + (best_i + 1).min(RHO_GRID_POINTS - 1) as f64 * step;
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (rhs_log(c), rhs_log(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = rhs_log(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = rhs_log(d);
        }
        if b - a < 1e-13 {
            break;
        }
    }
    Ok(((a + b) / 2.0).exp())
}

/// One entry of the weak-learner direction series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub eta: f64,
    /// Cosine between the search minimizer and the negative penalized
    /// gradient at the best-matching penalty weight.
    pub cosine: f64,
    /// The penalty weight maximizing that cosine.
    pub rho_hat: f64,
    /// Exponential-loss value attained by the search minimizer.
    pub search_ex: f64,
    /// Set when the search found no feasible direction or the gradient
    /// was degenerate; never a failure by itself.
    pub inconclusive: bool,
}

/// Flattens parameters in the fixed tensor order.
fn flatten_params(params: &Parameters<f64>) -> Vec<f64> {
    params
        .layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
        .collect()
}

/// Exponential-loss and SumExp means of a linear model at flat parameters.
fn linear_ex_se(theta: &[f64], data: &Dataset, k: usize, alpha: f64) -> (f64, f64) {
    let d = data.num_features;
    let (w, b) = theta.split_at(d * k);
    let n = data.len();
    let mut ex = 0.0;
    let mut se = 0.0;
    for i in 0..n {
        let x = data.row(i);
        let mut true_logit = 0.0;
        let mut sum_exp = 0.0;
        for j in 0..k {
            let mut logit = b[j];
            for (p, &xp) in x.iter().enumerate() {
                logit += xp * w[p * k + j];
            }
            sum_exp += logit.exp();
            if j == data.labels[i] {
                true_logit = logit;
            }
        }
        ex += (-alpha * true_logit).exp();
        se += sum_exp;
    }
    (ex / n as f64, se / n as f64)
}

/// Exact gradients of the exponential-loss mean and the SumExp mean at the
/// current parameters, flattened in tensor order.
fn loss_gradients(
    model: &ModelSpec,
    params: &Parameters<f64>,
    data: &Dataset,
    alpha: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let grad_of = |penalty: bool| -> Result<Vec<f64>> {
        let tape = Tape::new();
        let (logits, leaves) =
            forward_graph(model, params, &tape, &data.features, data.len(), None)?;
        let loss = if penalty {
            sum_exp_mean(&logits)?
        } else {
            ex_loss(&logits, &data.labels, alpha)?
        };
        loss.backward()?;
        let mut flat = Vec::new();
        for leaf in &leaves {
            flat.extend(leaf.grad().ok_or_else(|| {
                CoreError::Contract("parameter leaf missing its gradient".into())
            })?);
        }
        Ok(flat)
    };
    Ok((grad_of(false)?, grad_of(true)?))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Component of `g` tangent to the unit sphere at `dir` (assumes ‖dir‖ = 1).
fn sphere_tangent(g: &[f64], dir: &[f64]) -> Vec<f64> {
    let radial = dot(g, dir);
    g.iter().zip(dir).map(|(&gi, &di)| gi - radial * di).collect()
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    dot / (norm(u) * norm(v))
}

/// Cosine between `dir` and `−(g_ex + ρ·g_se)`, maximized over ρ ≥ 0 by a
/// dense log grid with golden-section refinement.
fn best_rho_cosine(dir: &[f64], g_ex: &[f64], g_se: &[f64]) -> (f64, f64) {
    let cos_at = |rho: f64| -> f64 {
        let combined: Vec<f64> =
            g_ex.iter().zip(g_se).map(|(&a, &b)| -(a + rho * b)).collect();
        cosine(dir, &combined)
    };
    let mut best_rho = 0.0;
    let mut best_cos = cos_at(0.0);
    let points = 1601;
    let (lo, hi) = ((1e-8f64).ln(), (1e8f64).ln());
    let step = (hi - lo) / (points - 1) as f64;
    let mut best_i: Option<usize> = None;
    for i in 0..points {
        let rho = (lo + i as f64 * step).exp();
        let c = cos_at(rho);
        if c > best_cos {
            best_cos = c;
            best_rho = rho;
            best_i = Some(i);
        }
    }
    if let Some(i) = best_i {
        let mut a = lo + i.saturating_sub(1) as f64 * step;
        let mut b = lo + (i + 1).min(points - 1) as f64 * step;
        let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut fc, mut fd) = (cos_at(c.exp()), cos_at(d.exp()));
        for _ in 0..100 {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = cos_at(c.exp());
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = cos_at(d.exp());
            }
        }
        let rho = ((a + b) / 2.0).exp();
        let cos_refined = cos_at(rho);
        if cos_refined > best_cos {
            best_cos = cos_refined;
            best_rho = rho;
        }
    }
    (best_cos, best_rho)
}

/// For each step size η, approximately minimizes the exponential loss of
/// the perturbed model `θ + η·Δ` over unit directions Δ whose SumExp does
/// not exceed the current value, by dense random sampling plus projected
/// local descent, and reports the cosine of the minimizer against the
/// negative penalized gradient.
pub fn check_weak_learner_direction(
    model: &ModelSpec,
    params: &Parameters<f64>,
    data: &Dataset,
    alpha: f64,
    eta_list: &[f64],
    seed: u64,
    samples: usize,
) -> Result<Vec<DirectionCheck>> {
    if !model.hidden_dims.is_empty() {
        return Err(CoreError::Parameter(
            "the direction oracle only handles linear models".into(),
        ));
    }
    if model.param_count() > 50 {
        return Err(CoreError::Parameter(format!(
            "dense direction search is limited to 50 parameters, got {}",
            model.param_count()
        )));
    }
    if eta_list.is_empty() || eta_list.windows(2).any(|w| w[1] >= w[0]) || eta_list[0] <= 0.0 {
        return Err(CoreError::Parameter(
            "eta_list must be positive and strictly decreasing".into(),
        ));
    }
    if data.is_empty() {
        return Err(CoreError::Contract("empty dataset".into()));
    }

    let k = model.num_classes;
    let theta = flatten_params(params);
    let dim = theta.len();
    let (_, se0) = linear_ex_se(&theta, data, k, alpha);
    let (g_ex, g_se) = loss_gradients(model, params, data, alpha)?;
    let degenerate = norm(&g_ex) < 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };

    let mut out = Vec::with_capacity(eta_list.len());
    for &eta in eta_list {
        if degenerate {
            out.push(DirectionCheck {
                eta,
                cosine: 0.0,
                rho_hat: 0.0,
                search_ex: f64::NAN,
                inconclusive: true,
            });
            continue;
        }
        let mut directions: Vec<f64> = Vec::with_capacity(samples * dim);
        for _ in 0..samples * dim {
            directions.push(normal());
        }
        let eval = |dir: &[f64]| -> Option<f64> {
            let perturbed: Vec<f64> =
                theta.iter().zip(dir).map(|(&t, &d)| t + eta * d).collect();
            let (ex, se) = linear_ex_se(&perturbed, data, k, alpha);
            (ex.is_finite() && se.is_finite() && se <= se0).then_some(ex)
        };
        // Deterministic reduction: candidates are ranked by (value, index).
        let mut scored: Vec<(f64, usize)> = (0..samples)
            .into_par_iter()
            .filter_map(|i| {
                let raw = &directions[i * dim..(i + 1) * dim];
                let len = norm(raw);
                if len == 0.0 {
                    return None;
                }
                let dir: Vec<f64> = raw.iter().map(|&v| v / len).collect();
                eval(&dir).map(|ex| (ex, i))
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        // Multi-start pool: the best feasible random directions plus
        // penalized-gradient candidates over a ladder of penalty weights.
        // The perturbed objective still picks the winner among them.
        let mut starts: Vec<Vec<f64>> = Vec::new();
        for &(_, i) in scored.iter().take(REFINE_STARTS) {
            let raw = &directions[i * dim..(i + 1) * dim];
            let len = norm(raw);
            starts.push(raw.iter().map(|&v| v / len).collect());
        }
        for j in 0..=16 {
            let rho = if j == 0 { 0.0 } else { 1e-4 * 10f64.powf(0.375 * (j - 1) as f64) };
            let raw: Vec<f64> =
                g_ex.iter().zip(&g_se).map(|(&a, &b)| -(a + rho * b)).collect();
            let len = norm(&raw);
            if len > 1e-12 {
                starts.push(raw.iter().map(|&v| v / len).collect());
            }
        }

        let mut best: Option<(f64, Vec<f64>)> = None;
        for start in starts {
            let Some(start_ex) = eval(&start) else { continue };
            let (ex, dir) = refine_direction(
                &theta, model, data, alpha, eta, start, start_ex, &eval,
            )?;
            if best.as_ref().is_none_or(|(b, _)| ex < *b) {
                best = Some((ex, dir));
            }
        }

        let Some((best_ex, dir)) = best else {
            out.push(DirectionCheck {
                eta,
                cosine: 0.0,
                rho_hat: 0.0,
                search_ex: f64::NAN,
                inconclusive: true,
            });
            continue;
        };

        let (cos, rho_hat) = best_rho_cosine(&dir, &g_ex, &g_se);
        out.push(DirectionCheck {
            eta,
            cosine: cos,
            rho_hat,
            search_ex: best_ex,
            inconclusive: false,
        });
    }
    Ok(out)
}

/// Descends the perturbed exponential loss over unit directions, holding the
/// SumExp-nonincrease constraint. Steps move along the sphere tangent of the
/// loss gradient; when a step lands infeasible, the tangent is re-projected
/// off the constraint gradient so the iterate slides along the boundary
/// instead of stalling against it.
fn refine_direction(
    theta: &[f64],
    model: &ModelSpec,
    data: &Dataset,
    alpha: f64,
    eta: f64,
    start: Vec<f64>,
    start_ex: f64,
    eval: &dyn Fn(&[f64]) -> Option<f64>,
) -> Result<(f64, Vec<f64>)> {
    let mut dir = start;
    let mut best_ex = start_ex;
    let mut step = 0.25;
    for _ in 0..500 {
        let perturbed_params = unflatten_linear(theta, &dir, eta, model);
        let (g_loss, g_constraint) =
            loss_gradients(model, &perturbed_params, data, alpha)?;
        let tangent = sphere_tangent(&g_loss, &dir);
        let t_len = norm(&tangent);
        if t_len < 1e-14 {
            break;
        }
        let descent: Vec<f64> = tangent.iter().map(|&v| -v / t_len).collect();

        let accepted = {
            let try_move = |v: &[f64]| -> Option<(f64, Vec<f64>)> {
                let mut candidate: Vec<f64> =
                    dir.iter().zip(v).map(|(&d, &w)| d + step * w).collect();
                let len = norm(&candidate);
                if len == 0.0 {
                    return None;
                }
                for c in &mut candidate {
                    *c /= len;
                }
                match eval(&candidate) {
                    Some(ex) if ex < best_ex => Some((ex, candidate)),
                    _ => None,
                }
            };

            let mut accepted = try_move(&descent);
            if accepted.is_none() {
                // Boundary slide: drop the descent component that pushes the
                // constraint value up, then retry at the same step size.
                let c_tangent = sphere_tangent(&g_constraint, &dir);
                let c_len = norm(&c_tangent);
                if c_len > 1e-14 {
                    let c_hat: Vec<f64> =
                        c_tangent.iter().map(|&v| v / c_len).collect();
                    let along = dot(&descent, &c_hat);
                    if along > 0.0 {
                        let slide: Vec<f64> = descent
                            .iter()
                            .zip(&c_hat)
                            .map(|(&v, &c)| v - along * c)
                            .collect();
                        if norm(&slide) > 1e-12 {
                            accepted = try_move(&slide);
                        }
                    }
                }
            }
            accepted
        };

        match accepted {
            Some((ex, candidate)) => {
                best_ex = ex;
                dir = candidate;
                step = (step * 1.3).min(1.0);
            }
            None => {
                step *= 0.5;
                if step < 1e-10 {
                    break;
                }
            }
        }
    }
    Ok((best_ex, dir))
}

/// Rebuilds linear-model parameters from flat values perturbed along `dir`.
fn unflatten_linear(
    theta: &[f64],
    dir: &[f64],
    eta: f64,
    model: &ModelSpec,
) -> Parameters<f64> {
    let d = model.input_dim;
    let k = model.num_classes;
    let perturbed: Vec<f64> = theta.iter().zip(dir).map(|(&t, &v)| t + eta * v).collect();
    let (w, b) = perturbed.split_at(d * k);
    Parameters {
        layers: vec![crate::model::Layer {
            weight: w.to_vec(),
            bias: b.to_vec(),
            in_dim: d,
            out_dim: k,
        }],
    }
}

/// Central-difference gradient of a scalar function of the parameters,
/// probed one coordinate at a time with half-width `h`, flattened in the
/// fixed tensor order.
pub fn fd_gradient<F>(params: &Parameters<f64>, h: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&Parameters<f64>) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(CoreError::Parameter(format!("h must be positive, got {h}")));
    }
    fn coord_mut(p: &mut Parameters<f64>, layer: usize, i: usize) -> &mut f64 {
        let wlen = p.layers[layer].weight.len();
        if i < wlen {
            &mut p.layers[layer].weight[i]
        } else {
            &mut p.layers[layer].bias[i - wlen]
        }
    }

    let mut probe = params.clone();
    let mut out = Vec::new();
    for layer in 0..probe.layers.len() {
        let len = probe.layers[layer].weight.len() + probe.layers[layer].bias.len();
        for i in 0..len {
            let original = *coord_mut(&mut probe, layer, i);
            *coord_mut(&mut probe, layer, i) = original + h;
            let plus = f(&probe)?;
            *coord_mut(&mut probe, layer, i) = original - h;
            let minus = f(&probe)?;
            *coord_mut(&mut probe, layer, i) = original;
            out.push((plus - minus) / (2.0 * h));
        }
    }
    Ok(out)
}

/// Seeded random simplexes with every entry at least `min_entry`.
pub fn random_simplexes(count: usize, k: usize, min_entry: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        let simplex: Vec<f64> = raw.iter().map(|&v| v / total).collect();
        if simplex.iter().all(|&p| p >= min_entry) {
            out.push(simplex);
        }
    }
    out
}
