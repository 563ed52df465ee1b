//! Log-barrier interior-point solver for the TAP program.
//!
//! Each pool is solved on its own with all four trade variables free:
//! `(a_in, a_out, b_in, b_out) >= 0` subject to
//! `(a + gamma*a_in - a_out) * (b + gamma*b_in - b_out) >= a * b`.
//! Variables are scaled by the matching reserve and the objective by the pool
//! TVL, so every pool is solved in the same units regardless of magnitude.
//! The product constraint is handled in its equivalent concave form
//! `ln(u) + ln(v) >= 0` with `u, v` the scaled post-trade reserves.
//!
//! Box bounds keep the fee-free case (where `a_in = a_out = t` is a flat
//! direction) well posed. Any optimum can be netted to a single-direction
//! trade whose input is at most `(1 + w_out / w_in) / gamma` in scaled units,
//! so bounds of twice that never cut off the optimum.

use chrono::NaiveDate;
use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::amm;
use crate::arbitrage::{check_live, DeadPoolPolicy, PlanEntry, TradePlan};
use crate::error::{Error, Result};
use crate::market::{Direction, Pool, PriceBook, TokenGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierConfig {
    /// Newton step budget per pool, summed over all barrier stages.
    pub max_iterations: usize,
    pub mu_start: f64,
    pub mu_end: f64,
    /// Barrier weight is divided by this after each stage.
    pub mu_factor: f64,
    /// Stage ends once half the squared Newton decrement drops below this.
    pub grad_tol: f64,
    pub dead_pools: DeadPoolPolicy,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5_000,
            mu_start: 1.0,
            mu_end: 1e-9,
            mu_factor: 10.0,
            grad_tol: 1e-10,
            dead_pools: DeadPoolPolicy::Skip,
        }
    }
}

/// Raw barrier output for one pool, in token units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSolution {
    pub a_in: f64,
    pub a_out: f64,
    pub b_in: f64,
    pub b_out: f64,
    /// Objective at the raw barrier point, before netting.
    pub objective_usd: f64,
    pub newton_steps: usize,
}

/// The pool subproblem in coordinates `z = (du, a_out, dv, b_out)` where
/// `du = gamma*a_in - a_out` and `dv = gamma*b_in - b_out` are the scaled net
/// reserve changes. This is a linear change of variables, so Newton steps are
/// unchanged in exact arithmetic; in floating point it keeps the product
/// constraint free of cancellation when `a_in` and `a_out` are both large.
struct Problem {
    gamma: f64,
    /// Objective coefficients in `z` coordinates.
    cost: Vector4<f64>,
    /// Upper bounds on `(a_in, a_out, b_in, b_out)`, scaled.
    upper: Vector4<f64>,
}

impl Problem {
    fn new(gamma: f64, w_a: f64, w_b: f64) -> Self {
        // c.y with y = (a_in, a_out, b_in, b_out) rewritten in z.
        let fee_drag = 1.0 / gamma - 1.0;
        Self {
            gamma,
            cost: Vector4::new(-w_a / gamma, -w_a * fee_drag, -w_b / gamma, -w_b * fee_drag),
            upper: Vector4::new(
                2.0 * (1.0 + w_b / w_a) / gamma,
                2.0,
                2.0 * (1.0 + w_a / w_b) / gamma,
                2.0,
            ),
        }
    }

    /// Original variables `(a_in, a_out, b_in, b_out)`.
    fn original(&self, z: &Vector4<f64>) -> Vector4<f64> {
        Vector4::new((z[0] + z[1]) / self.gamma, z[1], (z[2] + z[3]) / self.gamma, z[3])
    }

    /// Gradient of original variable `i` with respect to `z`.
    fn row(&self, i: usize) -> Vector4<f64> {
        let g = 1.0 / self.gamma;
        match i {
            0 => Vector4::new(g, g, 0.0, 0.0),
            1 => Vector4::new(0.0, 1.0, 0.0, 0.0),
            2 => Vector4::new(0.0, 0.0, g, g),
            _ => Vector4::new(0.0, 0.0, 0.0, 1.0),
        }
    }

    fn slack(&self, z: &Vector4<f64>) -> Option<f64> {
        if !(z[0] > -1.0 && z[2] > -1.0) {
            return None;
        }
        let h = z[0].ln_1p() + z[2].ln_1p();
        if !(h > 0.0) {
            return None;
        }
        let y = self.original(z);
        for i in 0..4 {
            if !(y[i] > 0.0 && y[i] < self.upper[i]) {
                return None;
            }
        }
        Some(h)
    }

    /// Barrier objective `-c.y / mu - ln h - sum ln y - sum ln(U - y)`.
    fn value(&self, z: &Vector4<f64>, mu: f64) -> Option<f64> {
        let h = self.slack(z)?;
        let y = self.original(z);
        let mut f = -self.cost.dot(z) / mu - h.ln();
        for i in 0..4 {
            f -= y[i].ln() + (self.upper[i] - y[i]).ln();
        }
        Some(f)
    }

    fn gradient_hessian(&self, z: &Vector4<f64>, mu: f64) -> (Vector4<f64>, Matrix4<f64>) {
        let h = self.slack(z).expect("iterate is strictly feasible");
        let (u, v) = (1.0 + z[0], 1.0 + z[2]);
        let grad_h = Vector4::new(1.0 / u, 0.0, 1.0 / v, 0.0);

        let mut grad = -self.cost / mu - grad_h / h;
        let mut hess = grad_h * grad_h.transpose() / (h * h);
        hess[(0, 0)] += 1.0 / (u * u * h);
        hess[(2, 2)] += 1.0 / (v * v * h);

        let y = self.original(z);
        for i in 0..4 {
            let row = self.row(i);
            let outer = row * row.transpose();
            let lo = y[i];
            let hi = self.upper[i] - y[i];
            grad += row * (-1.0 / lo + 1.0 / hi);
            hess += outer * (1.0 / (lo * lo) + 1.0 / (hi * hi));
        }
        (grad, hess)
    }
}

/// Newton step with symmetric diagonal scaling, which keeps Cholesky stable
/// when the barrier terms span many orders of magnitude.
fn newton_direction(grad: &Vector4<f64>, hess: &Matrix4<f64>) -> Option<Vector4<f64>> {
    let scale = Vector4::from_fn(|i, _| 1.0 / hess[(i, i)].sqrt());
    let scaled = Matrix4::from_fn(|i, j| hess[(i, j)] * scale[i] * scale[j]);
    let rhs = -grad.component_mul(&scale);
    let z = match scaled.cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => scaled.lu().solve(&rhs)?,
    };
    let dir = z.component_mul(&scale);
    dir.iter().all(|x| x.is_finite()).then_some(dir)
}

/// Solves one pool's subproblem by the barrier method.
pub fn solve_pool(pool: &Pool, price_a: f64, price_b: f64, config: &BarrierConfig) -> Result<PoolSolution> {
    if !pool.is_live() {
        return Err(Error::DeadPool {
            pool_id: pool.pool_id.clone(),
        });
    }
    let gamma = pool.gamma();
    let value_a = pool.reserve_a * price_a;
    let value_b = pool.reserve_b * price_b;
    let tvl = value_a + value_b;
    let (w_a, w_b) = (value_a / tvl, value_b / tvl);
    let problem = Problem::new(gamma, w_a, w_b);

    // Strictly feasible start: small round trips that leave both reserves up.
    let eps = 1e-3;
    let mut z = Vector4::from_element(0.5 * gamma * eps);
    debug_assert!(problem.slack(&z).is_some());

    let failure = |steps: usize, mu: f64, decrement: f64| Error::SolverFailure {
        pool_id: pool.pool_id.clone(),
        iterations: steps,
        mu,
        decrement,
    };

    let mut mu = config.mu_start;
    let mut steps = 0usize;
    loop {
        // Centering by damped Newton.
        loop {
            let (grad, hess) = problem.gradient_hessian(&z, mu);
            let dir = newton_direction(&grad, &hess).ok_or_else(|| failure(steps, mu, f64::NAN))?;
            let decrement_sq = -grad.dot(&dir);
            if decrement_sq / 2.0 <= config.grad_tol {
                break;
            }
            if steps >= config.max_iterations {
                return Err(failure(steps, mu, decrement_sq.sqrt()));
            }
            steps += 1;

            let f0 = problem.value(&z, mu).expect("feasible");
            let mut t = 1.0;
            let accepted = loop {
                let trial = z + dir * t;
                if let Some(f1) = problem.value(&trial, mu) {
                    if f1 <= f0 - 0.25 * t * decrement_sq {
                        break Some((trial, f1));
                    }
                }
                t *= 0.5;
                if t < 1e-20 {
                    break None;
                }
            };
            match accepted {
                // Progress below rounding of the barrier value: z is as
                // central as f64 allows at this mu.
                Some((_, f1)) if f0 - f1 <= 1e-13 * f0.abs().max(1.0) && decrement_sq < 1e-2 => break,
                Some((next, _)) => z = next,
                None if decrement_sq < 1e-2 => break,
                None => return Err(failure(steps, mu, decrement_sq.sqrt())),
            }
        }
        if mu <= config.mu_end {
            break;
        }
        mu = (mu / config.mu_factor).max(config.mu_end);
    }

    let objective_usd = tvl * problem.cost.dot(&z);
    let y = problem.original(&z);
    Ok(PoolSolution {
        a_in: y[0] * pool.reserve_a,
        a_out: y[1] * pool.reserve_a,
        b_in: y[2] * pool.reserve_b,
        b_out: y[3] * pool.reserve_b,
        objective_usd,
        newton_steps: steps,
    })
}

/// Nets the four raw variables into one directional trade and pays out the
/// full constant-product output for the netted input. Falls back to the idle
/// entry when the netted trade does not beat doing nothing.
pub fn canonicalize(pool: &Pool, solution: &PoolSolution, price_a: f64, price_b: f64) -> PlanEntry {
    let gamma = pool.gamma();
    let net_a = gamma * solution.a_in - solution.a_out;
    let net_b = gamma * solution.b_in - solution.b_out;
    let (direction, amount_in) = if net_a > 0.0 && net_b < 0.0 {
        (Direction::SellA, net_a / gamma)
    } else if net_b > 0.0 && net_a < 0.0 {
        (Direction::SellB, net_b / gamma)
    } else {
        return PlanEntry::idle(&pool.pool_id);
    };
    let (reserve_in, reserve_out) = pool.reserves_for(direction);
    let amount_out = amm::output_amount(reserve_in, reserve_out, gamma, amount_in);
    let (price_in, price_out) = match direction {
        Direction::SellA => (price_a, price_b),
        Direction::SellB => (price_b, price_a),
    };
    let profit_usd = amount_out * price_out - amount_in * price_in;
    if !(profit_usd > 0.0) {
        return PlanEntry::idle(&pool.pool_id);
    }
    PlanEntry {
        pool_id: pool.pool_id.clone(),
        direction: Some(direction),
        amount_in,
        amount_out,
        profit_usd,
    }
}

/// Numeric TAP solve, canonicalized to at most one direction per pool.
pub fn solve_tap_numeric(
    graph: &TokenGraph,
    prices: &PriceBook,
    date: NaiveDate,
    config: &BarrierConfig,
) -> Result<TradePlan> {
    let mut entries = Vec::with_capacity(graph.pools().len());
    let mut skipped = Vec::new();
    for pool in graph.pools() {
        let price_a = prices.get(&pool.token_a, date)?;
        let price_b = prices.get(&pool.token_b, date)?;
        if !check_live(pool, config.dead_pools)? {
            skipped.push(pool.pool_id.clone());
            entries.push(PlanEntry::idle(&pool.pool_id));
            continue;
        }
        let solution = solve_pool(pool, price_a, price_b, config)?;
        entries.push(canonicalize(pool, &solution, price_a, price_b));
    }
    Ok(TradePlan::from_entries(date, entries, skipped))
}
