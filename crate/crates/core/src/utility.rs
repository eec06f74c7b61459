//! The analytic layer: parametric performance and cost curves, the population
//! model behind `D_others(d)`, utility functions for both mechanisms with
//! their first and second derivatives, the sufficiency condition for maximal
//! contribution, and a one-dimensional optimizer for best contributions.
//!
//! Utility of contributing `d` is `gamma_u * p(d + D_others) - alpha * c(d)`.
//! Under the vanilla mechanism `D_others` is a constant; under the incentive
//! mechanism the ranking makes it a non-decreasing function of `d`, which is
//! where the extra marginal term comes from.

use crate::error::{Error, Result};
use crate::synthdata::SizeDistribution;
use crate::validate::{
    in_unit_interval_half_open, negative_finite, non_negative_finite, positive_finite,
};

/// Number of grid intervals used by [`optimal_contribution`].
pub const GRID_POINTS: usize = 10_000;

/// Performance as a function of total training data behind a model:
/// `p(D) = gamma_f * max(0, 1 - theta * D^beta_g)`, with `p(0) = 0`.
///
/// A power-law generalization error with exponent `beta_g` in `{-0.5, -1}`;
/// `gamma_f` is the multiplicative quality loss of federated aggregation
/// versus centralized training. Monotone non-decreasing, concave on its
/// positive-value region, mapping into `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceModel {
    pub theta: f64,
    pub beta_g: f64,
    pub gamma_f: f64,
}

impl PerformanceModel {
    pub fn new(theta: f64, beta_g: f64) -> Result<Self> {
        let m = PerformanceModel {
            theta,
            beta_g,
            gamma_f: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_degeneration(mut self, gamma_f: f64) -> Result<Self> {
        self.gamma_f = gamma_f;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !positive_finite(self.theta) {
            return Err(Error::InvalidParameter(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        if !negative_finite(self.beta_g) {
            return Err(Error::InvalidParameter(format!(
                "beta_g must be negative, got {}",
                self.beta_g
            )));
        }
        if !in_unit_interval_half_open(self.gamma_f) {
            return Err(Error::InvalidParameter(format!(
                "gamma_f must be in (0, 1], got {}",
                self.gamma_f
            )));
        }
        Ok(())
    }

    /// Below this data total the raw curve is negative and `p` clamps to 0.
    pub fn clamp_boundary(&self) -> f64 {
        self.theta.powf(-1.0 / self.beta_g)
    }

    pub fn value(&self, d_total: f64) -> f64 {
        if d_total <= 0.0 {
            return 0.0;
        }
        let raw = 1.0 - self.theta * d_total.powf(self.beta_g);
        self.gamma_f * raw.max(0.0)
    }

    /// `p'`; taken as 0 inside the clamped region.
    pub fn deriv(&self, d_total: f64) -> f64 {
        if d_total <= self.clamp_boundary() {
            return 0.0;
        }
        -self.gamma_f * self.theta * self.beta_g * d_total.powf(self.beta_g - 1.0)
    }

    /// `p''`; 0 inside the clamped region, negative outside.
    pub fn second_deriv(&self, d_total: f64) -> f64 {
        if d_total <= self.clamp_boundary() {
            return 0.0;
        }
        -self.gamma_f
            * self.theta
            * self.beta_g
            * (self.beta_g - 1.0)
            * d_total.powf(self.beta_g - 2.0)
    }
}

/// Participation cost `c(d) = a1 * d + a2 * d^2`; convex, non-decreasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub linear: f64,
    pub quadratic: f64,
}

impl CostModel {
    pub fn new(linear: f64, quadratic: f64) -> Result<Self> {
        let m = CostModel { linear, quadratic };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !non_negative_finite(self.linear) || !non_negative_finite(self.quadratic) {
            return Err(Error::InvalidParameter(format!(
                "cost coefficients must be non-negative, got a1 = {}, a2 = {}",
                self.linear, self.quadratic
            )));
        }
        Ok(())
    }

    pub fn value(&self, d: f64) -> f64 {
        self.linear * d + self.quadratic * d * d
    }

    pub fn deriv(&self, d: f64) -> f64 {
        self.linear + 2.0 * self.quadratic * d
    }

    pub fn second_deriv(&self) -> f64 {
        2.0 * self.quadratic
    }
}

/// Population of clients whose sizes follow a distribution; models the data
/// total behind the models a contributor of size `d` is aggregated with.
///
/// Under the ranking mechanism, rank order equals size order, so the expected
/// other-data total of a client contributing `d` is
/// `D_others(d) = (n - 1) * integral_0^d x f(x) dx` for density `f`. Explicit
/// populations use the exact finite step sum instead.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    pub n: usize,
    pub dist: SizeDistribution,
}

impl PopulationModel {
    pub fn new(n: usize, dist: SizeDistribution) -> Result<Self> {
        let m = PopulationModel { n, dist };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "population needs at least 2 clients, got {}",
                self.n
            )));
        }
        self.dist.validate()?;
        if let SizeDistribution::Explicit(sizes) = &self.dist
            && sizes.len() != self.n - 1
        {
            return Err(Error::InvalidParameter(format!(
                "explicit population lists the other clients: expected {} sizes, got {}",
                self.n - 1,
                sizes.len()
            )));
        }
        Ok(())
    }

    /// Expected data total of the strictly-lower-ranked clients.
    ///
    /// Monotone non-decreasing with `D_others(0) = 0`, saturating at
    /// `(n - 1) * mean`. Closed forms per distribution; explicit populations
    /// return the step sum of sizes at or below `d`.
    pub fn d_others(&self, d: f64) -> f64 {
        let others = (self.n - 1) as f64;
        if d <= 0.0 {
            return 0.0;
        }
        match &self.dist {
            SizeDistribution::Uniform { d_max } => {
                let x = d.min(*d_max);
                others * x * x / (2.0 * d_max)
            }
            SizeDistribution::Pareto { shape, scale } => {
                if d < *scale {
                    0.0
                } else {
                    others * (shape * scale / (shape - 1.0)) * (1.0 - (scale / d).powf(shape - 1.0))
                }
            }
            SizeDistribution::Exponential { rate } => {
                others * (1.0 - (-rate * d).exp() * (1.0 + rate * d)) / rate
            }
            SizeDistribution::Explicit(sizes) => sizes
                .iter()
                .filter(|&&s| s as f64 <= d)
                .map(|&s| s as f64)
                .sum(),
        }
    }

    /// First and second derivative of [`PopulationModel::d_others`].
    ///
    /// Closed forms per distribution: `first = (n-1) * d * f(d)` and
    /// `second = (n-1) * (f(d) + d * f'(d))`. Explicit populations fall back
    /// to central differences of the piecewise-linear smoothing of the step
    /// sum with `h = support / 10^4`; within `h` of a jump, the one-sided
    /// difference away from the jump is used.
    pub fn d_others_deriv(&self, d: f64) -> (f64, f64) {
        let others = (self.n - 1) as f64;
        match &self.dist {
            SizeDistribution::Uniform { d_max } => {
                if d < 0.0 || d > *d_max {
                    (0.0, 0.0)
                } else {
                    (others * d / d_max, others / d_max)
                }
            }
            SizeDistribution::Pareto { shape, scale } => {
                if d < *scale {
                    (0.0, 0.0)
                } else {
                    // f(x) = a x_m^a / x^(a+1); d f'(d) = -(a+1) f(d),
                    // so f + d f' = -a f(d)
                    let density = shape * scale.powf(*shape) / d.powf(shape + 1.0);
                    (others * d * density, others * (-shape) * density)
                }
            }
            SizeDistribution::Exponential { rate } => {
                if d < 0.0 {
                    (0.0, 0.0)
                } else {
                    let density = rate * (-rate * d).exp();
                    (others * d * density, others * density * (1.0 - rate * d))
                }
            }
            SizeDistribution::Explicit(sizes) => self.explicit_deriv(sizes, d),
        }
    }

    fn explicit_deriv(&self, sizes: &[u64], d: f64) -> (f64, f64) {
        let mut knots: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
        knots.sort_by(|a, b| a.partial_cmp(b).expect("finite sizes"));
        knots.dedup();
        let support = knots.last().copied().unwrap_or(0.0);
        if support == 0.0 {
            return (0.0, 0.0);
        }
        let h = support / 1e4;
        let smooth = |x: f64| self.smoothed_step(sizes, &knots, x);
        let near_knot = knots.iter().any(|&k| (d - k).abs() < h);
        if near_knot {
            // one-sided differences away from the discontinuity
            let first = if knots.iter().any(|&k| k > d - h && k <= d) {
                (smooth(d + h) - smooth(d)) / h
            } else {
                (smooth(d) - smooth(d - h)) / h
            };
            (first.max(0.0), 0.0)
        } else {
            let first = (smooth(d + h) - smooth(d - h)) / (2.0 * h);
            let second = (smooth(d + h) - 2.0 * smooth(d) + smooth(d - h)) / (h * h);
            (first.max(0.0), second)
        }
    }

    /// Piecewise-linear interpolation of the cumulative step sum through the
    /// knots `(0, 0), (s_k, sum_{s_j <= s_k} s_j)`; constant beyond the last.
    fn smoothed_step(&self, sizes: &[u64], knots: &[f64], x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let cum_at = |k: f64| -> f64 {
            sizes
                .iter()
                .filter(|&&s| (s as f64) <= k)
                .map(|&s| s as f64)
                .sum()
        };
        let mut prev_x = 0.0;
        let mut prev_y = 0.0;
        for &k in knots {
            let y = cum_at(k);
            if x <= k {
                return prev_y + (y - prev_y) * (x - prev_x) / (k - prev_x);
            }
            prev_x = k;
            prev_y = y;
        }
        prev_y
    }
}

/// Which mechanism's utility is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilityMode {
    /// One shared global model; the other clients' data total is a constant.
    Vanilla,
    /// Ranked aggregation; `D_others` responds to the own contribution.
    Incentive,
}

/// Full parameterization of a client's utility.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityParams {
    /// Performance weight (`> 0`).
    pub gamma_u: f64,
    /// Cost weight (`>= 0`).
    pub alpha: f64,
    pub performance: PerformanceModel,
    pub cost: CostModel,
    pub population: PopulationModel,
    /// Contribution cap `d^t` (`> 0`).
    pub cap: f64,
}

impl UtilityParams {
    pub fn validate(&self) -> Result<()> {
        if !positive_finite(self.gamma_u) {
            return Err(Error::InvalidParameter(format!(
                "gamma_u must be positive and finite, got {}",
                self.gamma_u
            )));
        }
        if !non_negative_finite(self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be non-negative and finite, got {}",
                self.alpha
            )));
        }
        if !positive_finite(self.cap) {
            return Err(Error::InvalidParameter(format!(
                "cap must be positive, got {}",
                self.cap
            )));
        }
        self.performance.validate()?;
        self.cost.validate()?;
        self.population.validate()
    }

    fn check_domain(&self, d: f64) -> Result<()> {
        if !(non_negative_finite(d) && d <= self.cap) {
            return Err(Error::InvalidParameter(format!(
                "contribution {d} outside [0, {}]",
                self.cap
            )));
        }
        Ok(())
    }
}

/// Utility under the vanilla mechanism with a fixed other-data total.
pub fn utility_vanilla(d: f64, params: &UtilityParams, d_fixed: f64) -> Result<f64> {
    params.check_domain(d)?;
    Ok(
        params.gamma_u * params.performance.value(d + d_fixed)
            - params.alpha * params.cost.value(d),
    )
}

/// Utility under the incentive mechanism, where `D_others` follows `d`.
pub fn utility_incentive(d: f64, params: &UtilityParams) -> Result<f64> {
    params.check_domain(d)?;
    Ok(utility_incentive_unchecked(d, params))
}

fn utility_incentive_unchecked(d: f64, params: &UtilityParams) -> f64 {
    params.gamma_u * params.performance.value(d + params.population.d_others(d))
        - params.alpha * params.cost.value(d)
}

/// Analytic first derivative of the utility at an interior point.
///
/// Incentive mode is the chain rule
/// `gamma_u * p'(d + D(d)) * (1 + D'(d)) - alpha * c'(d)`; vanilla mode drops
/// the `D'` term while evaluating `p'` at the same data total.
pub fn utility_deriv(d: f64, params: &UtilityParams, mode: UtilityMode) -> f64 {
    let d_others = params.population.d_others(d);
    let p_prime = params.performance.deriv(d + d_others);
    let c_prime = params.cost.deriv(d);
    match mode {
        UtilityMode::Vanilla => params.gamma_u * p_prime - params.alpha * c_prime,
        UtilityMode::Incentive => {
            let (d_prime, _) = params.population.d_others_deriv(d);
            params.gamma_u * p_prime * (1.0 + d_prime) - params.alpha * c_prime
        }
    }
}

/// Analytic second derivative of the utility at an interior point:
/// `gamma_u * p'' * (1 + D')^2 + gamma_u * p' * D'' - alpha * c''` for the
/// incentive mechanism; the chain terms drop out for vanilla.
pub fn utility_second_deriv(d: f64, params: &UtilityParams, mode: UtilityMode) -> f64 {
    let d_others = params.population.d_others(d);
    let total = d + d_others;
    let c_second = params.cost.second_deriv();
    match mode {
        UtilityMode::Vanilla => {
            params.gamma_u * params.performance.second_deriv(total) - params.alpha * c_second
        }
        UtilityMode::Incentive => {
            let (d_prime, d_second) = params.population.d_others_deriv(d);
            params.gamma_u * params.performance.second_deriv(total) * (1.0 + d_prime).powi(2)
                + params.gamma_u * params.performance.deriv(total) * d_second
                - params.alpha * c_second
        }
    }
}

/// Outcome of the sufficiency condition for maximal contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SufficiencyCheck {
    pub holds: bool,
    /// `D_others'(cap)`.
    pub lhs: f64,
    /// `((alpha / gamma_u) * c'(cap) - p'(cap + D_others(cap))) / p'(...)`.
    pub rhs: f64,
}

/// Evaluates, at `d = cap`, whether the marginal ranking benefit is large
/// enough that utility is still rising there — the condition under which
/// every client contributes its maximum.
pub fn check_eq_large(params: &UtilityParams) -> Result<SufficiencyCheck> {
    params.validate()?;
    let cap = params.cap;
    let p_prime = params
        .performance
        .deriv(cap + params.population.d_others(cap));
    if p_prime == 0.0 {
        return Err(Error::DegenerateSaturation { at: cap });
    }
    let (lhs, _) = params.population.d_others_deriv(cap);
    let rhs = ((params.alpha / params.gamma_u) * params.cost.deriv(cap) - p_prime) / p_prime;
    Ok(SufficiencyCheck {
        holds: lhs > rhs,
        lhs,
        rhs,
    })
}

/// Numerically verified concavity: the analytic second derivative sampled on
/// a dense grid over `[0, cap]`. Returns the maximum value seen and whether
/// it stays non-positive (within floating-point noise).
pub fn concavity_on_grid(params: &UtilityParams, mode: UtilityMode, grid: usize) -> (bool, f64) {
    let mut max = f64::NEG_INFINITY;
    for i in 0..=grid {
        let d = params.cap * i as f64 / grid as f64;
        let v = utility_second_deriv(d, params, mode);
        if v > max {
            max = v;
        }
    }
    (max <= 1e-12, max)
}

/// Dense grid scan (leftmost maximizer on ties) followed by golden-section
/// refinement of the winning bracket. The refined point is only used when it
/// strictly improves on the grid value, so exact ties keep the leftmost
/// grid point.
fn grid_golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    debug_assert!(hi > lo);
    let step = (hi - lo) / GRID_POINTS as f64;
    let x_at = |i: usize| lo + step * i as f64;
    let mut best_i = 0usize;
    let mut best_v = f(lo);
    for i in 1..=GRID_POINTS {
        let v = f(x_at(i));
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = x_at(best_i.saturating_sub(1));
    let mut b = x_at((best_i + 1).min(GRID_POINTS));
    // golden-section search for the maximum inside [a, b]
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let tol = ((hi - lo) * 1e-12).max(1e-12);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x_ref = 0.5 * (a + b);
    let v_ref = f(x_ref);
    if v_ref > best_v {
        (x_ref, v_ref)
    } else {
        (x_at(best_i), best_v)
    }
}

/// Maximizes the mode's utility over `[0, cap]`.
///
/// - `Incentive`: maximizes [`utility_incentive`]; `d_fixed` is ignored.
/// - `Vanilla` with `d_fixed = Some(v)`: maximizes [`utility_vanilla`] at
///   that constant other-data total.
/// - `Vanilla` with `d_fixed = None`: finds the self-consistent optimum
///   `d*` satisfying `d* = argmax_d u(d, D_others(d*))`, by bisection on the
///   (non-increasing) fixed-point map.
pub fn optimal_contribution(
    params: &UtilityParams,
    mode: UtilityMode,
    d_fixed: Option<f64>,
) -> f64 {
    match (mode, d_fixed) {
        (UtilityMode::Incentive, _) => {
            grid_golden_max(|d| utility_incentive_unchecked(d, params), 0.0, params.cap).0
        }
        (UtilityMode::Vanilla, Some(fixed)) => {
            grid_golden_max(
                |d| {
                    params.gamma_u * params.performance.value(d + fixed)
                        - params.alpha * params.cost.value(d)
                },
                0.0,
                params.cap,
            )
            .0
        }
        (UtilityMode::Vanilla, None) => vanilla_self_consistent(params),
    }
}

fn vanilla_best_at(params: &UtilityParams, d_fixed: f64) -> f64 {
    grid_golden_max(
        |d| {
            params.gamma_u * params.performance.value(d + d_fixed)
                - params.alpha * params.cost.value(d)
        },
        0.0,
        params.cap,
    )
    .0
}

fn vanilla_self_consistent(params: &UtilityParams) -> f64 {
    let respond = |d: f64| vanilla_best_at(params, params.population.d_others(d));
    if respond(params.cap) >= params.cap {
        return params.cap;
    }
    // h(d) = respond(d) - d is non-increasing, h(0) >= 0, h(cap) < 0
    let mut lo = 0.0;
    let mut hi = params.cap;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if respond(mid) >= mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    respond(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base_params() -> UtilityParams {
        UtilityParams {
            gamma_u: 1.0,
            alpha: 1.0,
            performance: PerformanceModel::new(1.0, -0.5).unwrap(),
            cost: CostModel::new(1e-4, 0.0).unwrap(),
            population: PopulationModel::new(
                11,
                SizeDistribution::Pareto {
                    shape: 2.0,
                    scale: 10.0,
                },
            )
            .unwrap(),
            cap: 200.0,
        }
    }

    #[test]
    fn perf_closed_forms() {
        let p = PerformanceModel::new(1.0, -0.5).unwrap();
        assert!((p.value(4.0) - 0.5).abs() < 1e-15);
        assert_eq!(p.value(0.0), 0.0);
        let p = PerformanceModel::new(1.0, -1.0).unwrap();
        assert!((p.value(10.0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn perf_monotone_and_bounded() {
        let p = PerformanceModel::new(1.5, -0.5)
            .unwrap()
            .with_degeneration(0.8)
            .unwrap();
        let mut last = -1.0;
        for i in 0..500 {
            let v = p.value(i as f64 * 2.0);
            assert!(v >= last);
            assert!((0.0..1.0).contains(&v));
            last = v;
        }
    }

    #[test]
    fn cost_closed_forms() {
        let c = CostModel::new(1.0, 0.0).unwrap();
        assert_eq!(c.value(0.0), 0.0);
        assert_eq!(c.value(7.0), 7.0);
        let c = CostModel::new(0.0, 1e-4).unwrap();
        assert!((c.value(100.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn d_others_uniform_closed_form() {
        let pop = PopulationModel::new(11, SizeDistribution::Uniform { d_max: 100.0 }).unwrap();
        assert!((pop.d_others(100.0) - 500.0).abs() < 1e-12);
        assert_eq!(pop.d_others(0.0), 0.0);
        // saturation beyond the support
        assert!((pop.d_others(250.0) - 500.0).abs() < 1e-12);
        let (first, second) = pop.d_others_deriv(40.0);
        assert!((first - 10.0 * 40.0 / 100.0).abs() < 1e-12);
        assert!((second - 10.0 / 100.0).abs() < 1e-12);
    }

    #[test]
    fn d_others_pareto_closed_form_and_derivs() {
        let pop = PopulationModel::new(
            11,
            SizeDistribution::Pareto {
                shape: 2.0,
                scale: 10.0,
            },
        )
        .unwrap();
        assert!((pop.d_others(50.0) - 160.0).abs() < 1e-12);
        assert_eq!(pop.d_others(5.0), 0.0);
        let (first, second) = pop.d_others_deriv(20.0);
        assert!((first - 5.0).abs() < 1e-12, "first = {first}");
        assert!((second + 0.5).abs() < 1e-12, "second = {second}");
    }

    /// Composite Simpson quadrature, the independent oracle for the
    /// closed-form integrals.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let n = panels * 2;
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(a + h * i as f64);
        }
        sum * h / 3.0
    }

    #[test]
    fn d_others_matches_quadrature() {
        // Pareto: (n-1) * int_{x_m}^{d} x * a x_m^a x^{-(a+1)} dx
        let pop = PopulationModel::new(
            11,
            SizeDistribution::Pareto {
                shape: 2.0,
                scale: 10.0,
            },
        )
        .unwrap();
        let density = |x: f64| 2.0 * 100.0 / x.powi(3);
        let by_quadrature = 10.0 * simpson(|x| x * density(x), 10.0, 50.0, 20_000);
        assert!((pop.d_others(50.0) - by_quadrature).abs() < 1e-6);

        // Exponential
        let pop = PopulationModel::new(6, SizeDistribution::Exponential { rate: 0.02 }).unwrap();
        let density = |x: f64| 0.02 * (-0.02 * x).exp();
        let by_quadrature = 5.0 * simpson(|x| x * density(x), 0.0, 80.0, 20_000);
        assert!((pop.d_others(80.0) - by_quadrature).abs() < 1e-6);
    }

    #[test]
    fn d_others_deriv_matches_finite_differences() {
        let pops = [
            PopulationModel::new(
                11,
                SizeDistribution::Pareto {
                    shape: 2.0,
                    scale: 10.0,
                },
            )
            .unwrap(),
            PopulationModel::new(11, SizeDistribution::Uniform { d_max: 300.0 }).unwrap(),
            PopulationModel::new(11, SizeDistribution::Exponential { rate: 0.01 }).unwrap(),
        ];
        for pop in &pops {
            for &d in &[25.0, 60.0, 120.0, 250.0] {
                let h = 1e-4 * d;
                let fd_first = (pop.d_others(d + h) - pop.d_others(d - h)) / (2.0 * h);
                let fd_second =
                    (pop.d_others(d + h) - 2.0 * pop.d_others(d) + pop.d_others(d - h)) / (h * h);
                let (first, second) = pop.d_others_deriv(d);
                assert!((first - fd_first).abs() < 1e-5 * first.abs().max(1.0));
                assert!(
                    (second - fd_second).abs() < 1e-3 * second.abs().max(1e-3),
                    "{pop:?} at {d}: {second} vs {fd_second}"
                );
            }
        }
    }

    #[test]
    fn explicit_population_step_sum() {
        let pop = PopulationModel::new(4, SizeDistribution::Explicit(vec![30, 50, 70])).unwrap();
        assert_eq!(pop.d_others(0.0), 0.0);
        assert_eq!(pop.d_others(29.0), 0.0);
        assert_eq!(pop.d_others(30.0), 30.0);
        assert_eq!(pop.d_others(60.0), 80.0);
        assert_eq!(pop.d_others(1000.0), 150.0);
        let (first, _) = pop.d_others_deriv(40.0);
        assert!(first >= 0.0);
    }

    #[test]
    fn utility_trivial_shapes() {
        let mut params = base_params();
        params.alpha = 0.0;
        let mut last_v = f64::NEG_INFINITY;
        let mut last_i = f64::NEG_INFINITY;
        for i in 0..=100 {
            let d = params.cap * i as f64 / 100.0;
            let v = utility_vanilla(d, &params, 50.0).unwrap();
            let u = utility_incentive(d, &params).unwrap();
            assert!(v >= last_v - 1e-12);
            assert!(u >= last_i - 1e-12);
            last_v = v;
            last_i = u;
        }

        // gamma_u cannot be zero by contract, but alpha-dominant utility is
        // maximized at zero
        let mut params = base_params();
        params.gamma_u = 1e-12;
        params.alpha = 1.0;
        params.cost = CostModel::new(0.1, 0.0).unwrap();
        let d_opt = optimal_contribution(&params, UtilityMode::Incentive, None);
        assert!(d_opt < params.cap / GRID_POINTS as f64 + 1e-9);
    }

    #[test]
    fn utility_rejects_out_of_range() {
        let params = base_params();
        assert!(utility_incentive(-1.0, &params).is_err());
        assert!(utility_incentive(params.cap + 1.0, &params).is_err());
    }

    #[test]
    fn incentive_dominates_vanilla_at_larger_d_others() {
        let params = base_params();
        for i in 0..=50 {
            let d = params.cap * i as f64 / 50.0;
            let fixed = params.population.d_others(0.0);
            let inc = utility_incentive(d, &params).unwrap();
            let van = utility_vanilla(d, &params, fixed).unwrap();
            assert!(inc >= van - 1e-12);
        }
    }

    /// Random interior evaluation points, kept clear of the population
    /// density discontinuity (the Pareto scale here), where one-sided
    /// derivatives make a central difference meaningless.
    fn interior_points(params: &UtilityParams, count: usize, seed: u64) -> Vec<f64> {
        use crate::rng::{TAG_SWEEP, derive_rng};
        use rand::Rng;
        let mut rng = derive_rng(seed, &[TAG_SWEEP]);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let d = rng.random_range(0.05 * params.cap..0.95 * params.cap);
            let kink = match params.population.dist {
                SizeDistribution::Pareto { scale, .. } => Some(scale),
                SizeDistribution::Uniform { d_max } => Some(d_max),
                _ => None,
            };
            if kink.is_some_and(|k| (d - k).abs() < 1.0) {
                continue;
            }
            out.push(d);
        }
        out
    }

    #[test]
    fn deriv_matches_finite_differences() {
        let params = base_params();
        let h = 5e-3;
        for d in interior_points(&params, 100, 1) {
            // incentive: differentiate utility_incentive directly
            let fd = (utility_incentive(d + h, &params).unwrap()
                - utility_incentive(d - h, &params).unwrap())
                / (2.0 * h);
            let analytic = utility_deriv(d, &params, UtilityMode::Incentive);
            let scale = analytic.abs().max(fd.abs()).max(1e-9);
            assert!(
                (analytic - fd).abs() / scale < 1e-5,
                "d = {d}: {analytic} vs {fd}"
            );

            // vanilla: differentiate at the frozen data total
            let fixed = params.population.d_others(d);
            let fdv = (utility_vanilla(d + h, &params, fixed).unwrap()
                - utility_vanilla(d - h, &params, fixed).unwrap())
                / (2.0 * h);
            let analytic_v = utility_deriv(d, &params, UtilityMode::Vanilla);
            let scale = analytic_v.abs().max(fdv.abs()).max(1e-9);
            assert!((analytic_v - fdv).abs() / scale < 1e-5);
        }
    }

    #[test]
    fn second_deriv_matches_finite_differences() {
        let params = base_params();
        let h = 1e-2;
        for d in interior_points(&params, 100, 2) {
            let u = |x: f64| utility_incentive(x, &params).unwrap();
            let fd = (u(d + h) - 2.0 * u(d) + u(d - h)) / (h * h);
            let analytic = utility_second_deriv(d, &params, UtilityMode::Incentive);
            let scale = analytic.abs().max(fd.abs()).max(1e-9);
            assert!(
                (analytic - fd).abs() / scale < 1e-3,
                "d = {d}: {analytic} vs {fd}"
            );
        }
    }

    #[test]
    fn incentive_minus_vanilla_deriv_is_ranking_term() {
        let params = base_params();
        for i in 1..20 {
            let d = params.cap * i as f64 / 20.0;
            let diff = utility_deriv(d, &params, UtilityMode::Incentive)
                - utility_deriv(d, &params, UtilityMode::Vanilla);
            let (d_prime, _) = params.population.d_others_deriv(d);
            let expected = params.gamma_u
                * params.performance.deriv(d + params.population.d_others(d))
                * d_prime;
            assert!((diff - expected).abs() < 1e-12);
            assert!(diff >= 0.0);
        }
    }

    #[test]
    fn second_deriv_signs() {
        let params = base_params();
        for i in 0..=100 {
            let d = params.cap * i as f64 / 100.0;
            assert!(utility_second_deriv(d, &params, UtilityMode::Vanilla) <= 0.0);
            // Pareto population is concave, so every term is non-positive
            assert!(utility_second_deriv(d, &params, UtilityMode::Incentive) <= 1e-12);
        }
    }

    #[test]
    fn sufficiency_check_trivial_cases() {
        let mut params = base_params();
        params.alpha = 0.0;
        let check = check_eq_large(&params).unwrap();
        assert!(check.holds);
        assert!((check.rhs + 1.0).abs() < 1e-12);

        let mut params = base_params();
        params.cost = CostModel::new(0.0, 0.0).unwrap();
        let check = check_eq_large(&params).unwrap();
        assert!(check.holds);
    }

    #[test]
    fn sufficiency_boundary_reduces_to_ranking_response_sign() {
        // pick a1 so that gamma_u * p'(cap + D(cap)) = alpha * c'(cap);
        // then rhs = 0 and the check holds exactly when D'(cap) > 0
        let mut params = base_params();
        let p_prime = params
            .performance
            .deriv(params.cap + params.population.d_others(params.cap));
        params.cost = CostModel::new(params.gamma_u * p_prime / params.alpha, 0.0).unwrap();
        let check = check_eq_large(&params).unwrap();
        assert!(check.rhs.abs() < 1e-12, "rhs = {}", check.rhs);
        let (d_prime, _) = params.population.d_others_deriv(params.cap);
        assert_eq!(check.holds, d_prime > 0.0);
        assert!(check.holds);
    }

    #[test]
    fn vanilla_deriv_positive_without_cost_beyond_clamp() {
        let mut params = base_params();
        params.alpha = 0.0;
        let boundary = params.performance.clamp_boundary();
        for i in 1..=100 {
            let d = params.cap * i as f64 / 100.0;
            if d + params.population.d_others(d) <= boundary {
                continue;
            }
            assert!(
                utility_deriv(d, &params, UtilityMode::Vanilla) > 0.0,
                "d = {d}"
            );
        }
    }

    #[test]
    fn sufficiency_check_degenerate_saturation() {
        let mut params = base_params();
        // theta = 2, beta = -0.5 clamps below D = 4; a cap of 1 with a
        // population contributing nothing below its scale stays clamped
        params.performance = PerformanceModel::new(2.0, -0.5).unwrap();
        params.cap = 1.0;
        assert!(matches!(
            check_eq_large(&params),
            Err(Error::DegenerateSaturation { .. })
        ));
    }

    #[test]
    fn sufficiency_holds_and_grid_optimum_is_cap() {
        let mut params = base_params();
        params.cost = CostModel::new(1e-6, 0.0).unwrap();
        let check = check_eq_large(&params).unwrap();
        assert!(check.holds, "lhs = {}, rhs = {}", check.lhs, check.rhs);
        let d_opt = optimal_contribution(&params, UtilityMode::Incentive, None);
        assert!(
            (d_opt - params.cap).abs() <= params.cap / GRID_POINTS as f64,
            "d_opt = {d_opt}"
        );
    }

    #[test]
    fn optimal_contribution_alpha_zero_is_cap() {
        let mut params = base_params();
        params.alpha = 0.0;
        let step = params.cap / GRID_POINTS as f64;
        let inc = optimal_contribution(&params, UtilityMode::Incentive, None);
        let van = optimal_contribution(&params, UtilityMode::Vanilla, Some(100.0));
        assert!((inc - params.cap).abs() <= step);
        assert!((van - params.cap).abs() <= step);
    }

    #[test]
    fn optimal_contribution_matches_stationary_point_oracle() {
        // stationary point of p(d + 100) - 1e-4 d with theta 1, beta -0.5:
        // 0.5 (d + 100)^(-1.5) = 1e-4
        let params = UtilityParams {
            gamma_u: 1.0,
            alpha: 1.0,
            performance: PerformanceModel::new(1.0, -0.5).unwrap(),
            cost: CostModel::new(1e-4, 0.0).unwrap(),
            population: PopulationModel::new(11, SizeDistribution::Uniform { d_max: 10_000.0 })
                .unwrap(),
            cap: 10_000.0,
        };
        // independent bisection oracle on the stationarity condition
        let g = |d: f64| 0.5 * (d + 100.0).powf(-1.5) - 1e-4;
        let (mut lo, mut hi) = (0.0, 10_000.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((oracle - 192.4).abs() < 0.5, "oracle = {oracle}");
        let d_opt = optimal_contribution(&params, UtilityMode::Vanilla, Some(100.0));
        assert!(
            (d_opt - oracle).abs() < 0.5,
            "grid = {d_opt}, oracle = {oracle}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Ranking can only help: the marginal other-data response is
        /// non-negative for every supported population.
        #[test]
        fn d_others_deriv_nonnegative(
            d in 0.1f64..1000.0,
            n in 2usize..40,
            kind in 0usize..3,
            a in 1.1f64..4.0,
            scale in 1.0f64..50.0,
        ) {
            let dist = match kind {
                0 => SizeDistribution::Uniform { d_max: scale * 20.0 },
                1 => SizeDistribution::Pareto { shape: a, scale },
                _ => SizeDistribution::Exponential { rate: 1.0 / scale },
            };
            let pop = PopulationModel::new(n, dist).unwrap();
            let (first, _) = pop.d_others_deriv(d);
            prop_assert!(first >= 0.0);
        }

        /// D_others is monotone non-decreasing in d.
        #[test]
        fn d_others_monotone(
            d1 in 0.0f64..500.0,
            delta in 0.0f64..500.0,
            n in 2usize..40,
            kind in 0usize..3,
        ) {
            let dist = match kind {
                0 => SizeDistribution::Uniform { d_max: 400.0 },
                1 => SizeDistribution::Pareto { shape: 2.0, scale: 10.0 },
                _ => SizeDistribution::Exponential { rate: 0.01 },
            };
            let pop = PopulationModel::new(n, dist).unwrap();
            prop_assert!(pop.d_others(d1 + delta) >= pop.d_others(d1) - 1e-12);
        }
    }

    #[test]
    fn theorem1_mini_sweep() {
        use crate::rng::{TAG_SWEEP, derive_rng};
        use rand::Rng;
        let mut rng = derive_rng(2024, &[TAG_SWEEP]);
        let step = 500.0 / GRID_POINTS as f64;
        for draw in 0..25 {
            let beta = if rng.random::<bool>() { -0.5 } else { -1.0 };
            let dist = if rng.random::<bool>() {
                SizeDistribution::Uniform { d_max: 1000.0 }
            } else {
                SizeDistribution::Pareto {
                    shape: 2.0,
                    scale: 10.0,
                }
            };
            let params = UtilityParams {
                gamma_u: rng.random_range(0.5..2.0),
                alpha: rng.random_range(0.5..2.0),
                performance: PerformanceModel::new(rng.random_range(0.5..2.0), beta).unwrap(),
                cost: CostModel::new(rng.random_range(0.0..1e-2), rng.random_range(0.0..1e-5))
                    .unwrap(),
                population: PopulationModel::new(50, dist).unwrap(),
                cap: 500.0,
            };
            let d_vanilla = optimal_contribution(&params, UtilityMode::Vanilla, None);
            let d_incentive = optimal_contribution(&params, UtilityMode::Incentive, None);
            assert!(
                d_incentive >= d_vanilla - step,
                "draw {draw}: incentive {d_incentive} < vanilla {d_vanilla}"
            );
        }
    }
}
