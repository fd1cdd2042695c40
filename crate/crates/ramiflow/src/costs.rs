//! Transportation-cost families and derived quantities.
//!
//! A transportation cost is a function `τ : [0,∞) → [0,∞)` with `τ(0)=0`,
//! `τ(w)>0` for `w>0`, nondecreasing, subadditive and lower semicontinuous.
//! `τ(w)` is the price per unit length of moving an amount of mass `w`
//! together. Every [`TransportCost`] in this crate belongs to a parameterized
//! family; construction validates the parameters and samples the
//! monotonicity/subadditivity axioms on a logarithmic grid.
//!
//! Besides evaluation the module provides
//!
//! * [`TransportCost::lambda_tau`] — the largest `λ` with `τ(w) ≥ λw` on
//!   `[0,m]`, computed as `inf { τ(w)/w : w ∈ (m/2, m] }`;
//! * [`TransportCost::marginal_cost`] — `r^τ(w) = τ(w)/w`, extended to `w=0`
//!   by the (possibly infinite) limit `τ'(0)`;
//! * [`TransportCost::check_admissible`] — whether a concave majorant `β` of
//!   `τ` makes the series `Σ_k 2^{(n−1)k} β(2^{−nk})` converge, which is the
//!   growth condition guaranteeing finite-cost networks in dimension `n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extreal::ExtReal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid cost parameter: {0}")]
    InvalidParameter(String),
    #[error("cost axiom violated: {0}")]
    AxiomViolation(String),
}

/// Cost family tag with parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// `τ(w) = a·w`, classical optimal transport.
    Wasserstein { a: f64 },
    /// `τ(w) = w^α` with `α ∈ (0,1)`, branched transport.
    Branched { alpha: f64 },
    /// `τ(w) = min(a·w, w + eps)` with `a > 1`, urban planning.
    Urban { a: f64, eps: f64 },
    /// `τ(0) = 0`, `τ(w) = 1` for `w > 0`; a Steiner-tree-like cost.
    Discrete,
    /// `τ(w) = height·⌈w/delta⌉`. The default `height = delta` gives the
    /// staircase pinned under the diagonal; `height = 1` gives the plain
    /// rounding-up cost `⌈w/delta⌉`.
    Step { delta: f64, height: f64 },
    /// Piecewise-linear concave envelope through the given sample points
    /// and the origin.
    Tabulated { points: Vec<(f64, f64)> },
}

/// A transportation cost: a family plus mass/output rescaling factors.
///
/// `eval(w) = output_scale · family(mass_scale · w)`. Both factors default to
/// one; mass rescaling of a transport problem produces costs with
/// `mass_scale = m`, `output_scale = 1/m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportCost {
    family: Family,
    mass_scale: f64,
    output_scale: f64,
}

/// Outcome of the admissibility test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Admissibility {
    Admissible,
    NotAdmissible,
    /// No verdict: either no concave majorant is derivable or the series
    /// ratios fall in the numerically ambiguous band near one.
    Unknown,
}

/// Series and integral evidence for the admissibility verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub verdict: Admissibility,
    /// Terms `2^{(n−1)k} β(2^{−nk})` for `k = 1..=cutoff`.
    pub terms: Vec<f64>,
    /// Partial sums of the terms.
    pub partial_sums: Vec<f64>,
    /// Geometric bound on the series tail beyond the cutoff, when convergent.
    pub tail_bound: Option<f64>,
    /// Truncated value of `∫₀¹ β(w)/w^{2−1/n} dw`.
    pub integral_estimate: f64,
    pub integral_diverges: bool,
}

impl AdmissibilityReport {
    /// Upper bound for the full series `S^β(n)` when convergent.
    pub fn series_bound(&self) -> Option<f64> {
        let last = *self.partial_sums.last()?;
        self.tail_bound.map(|t| last + t)
    }
}

impl TransportCost {
    fn from_family(family: Family) -> Result<Self, CostError> {
        let cost = TransportCost {
            family,
            mass_scale: 1.0,
            output_scale: 1.0,
        };
        cost.validate()?;
        Ok(cost)
    }

    pub fn wasserstein(a: f64) -> Result<Self, CostError> {
        Self::from_family(Family::Wasserstein { a })
    }

    pub fn branched(alpha: f64) -> Result<Self, CostError> {
        Self::from_family(Family::Branched { alpha })
    }

    pub fn urban(a: f64, eps: f64) -> Result<Self, CostError> {
        Self::from_family(Family::Urban { a, eps })
    }

    pub fn discrete() -> Self {
        Self::from_family(Family::Discrete).expect("discrete cost is parameter-free")
    }

    pub fn step(delta: f64) -> Result<Self, CostError> {
        Self::from_family(Family::Step {
            delta,
            height: delta,
        })
    }

    /// Step cost with an explicit jump height, e.g. `height = 1` for
    /// `τ(w) = ⌈w/delta⌉`.
    pub fn step_with_height(delta: f64, height: f64) -> Result<Self, CostError> {
        Self::from_family(Family::Step { delta, height })
    }

    /// Builds the piecewise-linear upper concave envelope of the sample
    /// points (with the origin prepended) and uses it as the cost.
    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self, CostError> {
        let hull = concave_envelope(samples)?;
        Self::from_family(Family::Tabulated { points: hull })
    }

    pub(crate) fn from_parts(
        family: Family,
        mass_scale: f64,
        output_scale: f64,
    ) -> Result<Self, CostError> {
        let cost = TransportCost {
            family,
            mass_scale,
            output_scale,
        };
        cost.validate()?;
        Ok(cost)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn mass_scale(&self) -> f64 {
        self.mass_scale
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    /// The cost with mass rescaled by `m` and values by `1/m`, so that a
    /// problem with total mass `m` becomes an equivalent unit-mass problem.
    pub fn mass_rescaled(&self, m: f64) -> Result<Self, CostError> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(CostError::InvalidParameter(format!(
                "mass factor must be positive and finite, got {m}"
            )));
        }
        Self::from_parts(
            self.family.clone(),
            self.mass_scale * m,
            self.output_scale / m,
        )
    }

    fn validate(&self) -> Result<(), CostError> {
        if !(self.mass_scale > 0.0 && self.mass_scale.is_finite()) {
            return Err(CostError::InvalidParameter("mass_scale".into()));
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(CostError::InvalidParameter("output_scale".into()));
        }
        match &self.family {
            Family::Wasserstein { a } => {
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(CostError::InvalidParameter(format!(
                        "wasserstein slope a must be positive, got {a}"
                    )));
                }
            }
            Family::Branched { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(CostError::InvalidParameter(format!(
                        "branched exponent must lie in (0,1), got {alpha}"
                    )));
                }
            }
            Family::Urban { a, eps } => {
                if !(*a > 1.0 && a.is_finite()) {
                    return Err(CostError::InvalidParameter(format!(
                        "urban slope a must exceed 1, got {a}"
                    )));
                }
                if !(*eps > 0.0 && eps.is_finite()) {
                    return Err(CostError::InvalidParameter(format!(
                        "urban eps must be positive, got {eps}"
                    )));
                }
            }
            Family::Discrete => {}
            Family::Step { delta, height } => {
                if !(*delta > 0.0 && delta.is_finite()) {
                    return Err(CostError::InvalidParameter(format!(
                        "step delta must be positive, got {delta}"
                    )));
                }
                if !(*height > 0.0 && height.is_finite()) {
                    return Err(CostError::InvalidParameter(format!(
                        "step height must be positive, got {height}"
                    )));
                }
            }
            Family::Tabulated { points } => {
                validate_envelope(points)?;
            }
        }
        self.sampled_axiom_check()
    }

    /// Spot checks of monotonicity and subadditivity on a logarithmic grid.
    fn sampled_axiom_check(&self) -> Result<(), CostError> {
        let grid = log_grid(256);
        let mut prev = 0.0_f64;
        for &w in &grid {
            let v = self.eval(w);
            if v <= 0.0 {
                return Err(CostError::AxiomViolation(format!(
                    "tau({w}) = {v} is not positive"
                )));
            }
            if v < prev - 1e-12 * prev.abs().max(1.0) {
                return Err(CostError::AxiomViolation(format!(
                    "tau is decreasing near w = {w}"
                )));
            }
            prev = v;
        }
        for &u in grid.iter().step_by(4) {
            for &v in grid.iter().step_by(4) {
                let lhs = self.eval(u + v);
                let rhs = self.eval(u) + self.eval(v);
                if lhs > rhs + 1e-12 * rhs.max(1.0) {
                    return Err(CostError::AxiomViolation(format!(
                        "subadditivity fails at ({u}, {v})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `τ(w)`. Panics on negative `w`; use [`TransportCost::try_eval`] for a
    /// checked variant.
    pub fn eval(&self, w: f64) -> f64 {
        assert!(w >= 0.0, "transport cost evaluated at negative mass {w}");
        if w == 0.0 {
            return 0.0;
        }
        self.output_scale * family_eval(&self.family, self.mass_scale * w)
    }

    pub fn try_eval(&self, w: f64) -> Result<f64, CostError> {
        if w.is_nan() || w < 0.0 {
            return Err(CostError::Domain(format!(
                "mass must be nonnegative, got {w}"
            )));
        }
        Ok(self.eval(w))
    }

    /// Whether the family is concave (as a function on `[0,∞)`).
    pub fn is_concave(&self) -> bool {
        !matches!(self.family, Family::Step { .. })
    }

    /// `λ^τ(m) = inf { τ(w)/w : w ∈ (m/2, m] }`, the best constant with
    /// `τ(w) ≥ λ^τ(m)·w` for all `w ∈ [0, m]`.
    pub fn lambda_tau(&self, m: f64) -> f64 {
        assert!(m > 0.0, "lambda_tau needs a positive mass, got {m}");
        if self.is_concave() {
            // Concavity makes τ(w)/w nonincreasing, so the infimum sits at m.
            return self.eval(m) / m;
        }
        // Step family: the ratio is decreasing between jumps, so it is
        // minimized at jump right-endpoints inside (m/2, m] or at m.
        let Family::Step { delta, .. } = self.family else {
            unreachable!()
        };
        let delta_eff = delta / self.mass_scale;
        let mut best = self.eval(m) / m;
        let mut k = (m / 2.0 / delta_eff).floor() as i64;
        if k < 1 {
            k = 1;
        }
        loop {
            let w = k as f64 * delta_eff;
            if w > m {
                break;
            }
            if w > m / 2.0 {
                best = best.min(self.eval(w) / w);
            }
            k += 1;
        }
        best
    }

    /// Marginal cost per particle `r^τ(w)`: `τ(w)/w` for `w > 0` and the
    /// limit `τ'(0)` (possibly +∞) at `w = 0`.
    pub fn marginal_cost(&self, w: f64) -> ExtReal {
        assert!(w >= 0.0);
        if w > 0.0 {
            return ExtReal::finite(self.eval(w) / w);
        }
        let scale = self.output_scale * self.mass_scale;
        match &self.family {
            Family::Wasserstein { a } => ExtReal::finite(scale * a),
            Family::Branched { .. } => ExtReal::Infinite,
            Family::Urban { a, .. } => ExtReal::finite(scale * a),
            Family::Discrete => ExtReal::Infinite,
            Family::Step { .. } => ExtReal::Infinite,
            Family::Tabulated { points } => {
                let (w1, t1) = points[0];
                ExtReal::finite(scale * t1 / w1)
            }
        }
    }

    /// A supergradient of `τ` at `w > 0` (right derivative at kinks).
    /// Only meaningful for concave families.
    pub fn supergradient(&self, w: f64) -> f64 {
        assert!(w > 0.0, "supergradient queried at w = {w}");
        let wm = self.mass_scale * w;
        let scale = self.output_scale * self.mass_scale;
        match &self.family {
            Family::Wasserstein { a } => scale * a,
            Family::Branched { alpha } => scale * alpha * wm.powf(alpha - 1.0),
            Family::Urban { a, eps } => {
                let kink = eps / (a - 1.0);
                if wm < kink {
                    scale * a
                } else {
                    scale
                }
            }
            Family::Discrete => 0.0,
            Family::Step { .. } => 0.0,
            Family::Tabulated { points } => scale * envelope_right_slope(points, wm),
        }
    }

    /// Evaluates a concave majorant `β ≥ τ` (for concave families `β = τ`;
    /// for the step family `β(w) = (height/delta)·w + height`).
    pub fn concave_majorant(&self, w: f64) -> f64 {
        assert!(w >= 0.0);
        match &self.family {
            Family::Step { delta, height } => {
                if w == 0.0 {
                    0.0
                } else {
                    self.output_scale * (height / delta * (self.mass_scale * w) + height)
                }
            }
            _ => self.eval(w),
        }
    }

    /// Series and integral admissibility test in dimension `n`, using
    /// `cutoff` series terms.
    pub fn check_admissible(&self, n: usize, cutoff: usize) -> AdmissibilityReport {
        assert!(n >= 1 && cutoff >= 4);
        let mut terms = Vec::with_capacity(cutoff);
        let mut partial_sums = Vec::with_capacity(cutoff);
        let mut acc = 0.0;
        for k in 1..=cutoff {
            let t = series_term(self, n, k as i32);
            acc += t;
            terms.push(t);
            partial_sums.push(acc);
        }

        // Geometric-tail certificate from the last few term ratios.
        let probe = &terms[cutoff.saturating_sub(8)..];
        let mut ratios = Vec::new();
        for pair in probe.windows(2) {
            if pair[0] > 0.0 {
                ratios.push(pair[1] / pair[0]);
            }
        }
        let rho_max = ratios.iter().cloned().fold(0.0_f64, f64::max);
        let (series_verdict, tail_bound) = if terms.last().copied().unwrap_or(0.0) == 0.0 {
            (Admissibility::Admissible, Some(0.0))
        } else if rho_max <= 1.0 - 1e-6 {
            let tail = terms.last().unwrap() * rho_max / (1.0 - rho_max);
            (Admissibility::Admissible, Some(tail))
        } else if ratios.iter().all(|r| *r >= 1.0 - 1e-9) {
            (Admissibility::NotAdmissible, None)
        } else {
            (Admissibility::Unknown, None)
        };

        let (integral_estimate, integral_diverges) = integral_test(self, n);

        let verdict = match series_verdict {
            Admissibility::Unknown => Admissibility::Unknown,
            v => {
                debug_assert_eq!(
                    matches!(v, Admissibility::Admissible),
                    !integral_diverges,
                    "series and integral admissibility tests disagree"
                );
                v
            }
        };

        AdmissibilityReport {
            verdict,
            terms,
            partial_sums,
            tail_bound,
            integral_estimate,
            integral_diverges,
        }
    }
}

fn family_eval(family: &Family, w: f64) -> f64 {
    match family {
        Family::Wasserstein { a } => a * w,
        Family::Branched { alpha } => w.powf(*alpha),
        Family::Urban { a, eps } => (a * w).min(w + eps),
        Family::Discrete => 1.0,
        Family::Step { delta, height } => height * (w / delta).ceil(),
        Family::Tabulated { points } => envelope_eval(points, w),
    }
}

/// `2^{(n−1)k} β(2^{−nk})`.
fn series_term(cost: &TransportCost, n: usize, k: i32) -> f64 {
    let arg = (2.0f64).powi(-(n as i32) * k);
    (2.0f64).powi((n as i32 - 1) * k) * cost.concave_majorant(arg)
}

/// Blockwise evaluation of `∫₀¹ β(w)/w^{2−1/n} dw` after `w = e^{−u}`,
/// classifying convergence by the decay of unit blocks in `u`.
fn integral_test(cost: &TransportCost, n: usize) -> (f64, bool) {
    let power = 1.0 - 1.0 / n as f64;
    let integrand = |u: f64| cost.concave_majorant((-u).exp()) * (power * u).exp();
    let blocks = 60usize;
    let mut values = Vec::with_capacity(blocks);
    let mut total = 0.0;
    for j in 0..blocks {
        let mut block = 0.0;
        let steps = 16;
        let h = 1.0 / steps as f64;
        // Composite Simpson on [j, j+1].
        for s in 0..steps {
            let a = j as f64 + s as f64 * h;
            block += h / 6.0 * (integrand(a) + 4.0 * integrand(a + h / 2.0) + integrand(a + h));
        }
        total += block;
        values.push(block);
    }
    let tail = &values[blocks - 8..];
    let mut diverges = false;
    for pair in tail.windows(2) {
        if pair[0] > 0.0 && pair[1] / pair[0] >= 1.0 - 1e-6 {
            diverges = true;
        }
    }
    (total, diverges)
}

fn log_grid(count: usize) -> Vec<f64> {
    // Logarithmic grid on (0, 2]: from 2^{-24} up to 2.
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            2.0 * (2.0f64).powf(-24.0 * (1.0 - t))
        })
        .collect()
}

/// Upper concave hull of the samples together with the origin; returns the
/// interior breakpoints (origin excluded), sorted by mass.
fn concave_envelope(samples: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, CostError> {
    let mut pts: Vec<(f64, f64)> = samples.to_vec();
    for &(w, t) in &pts {
        if !(w.is_finite() && t.is_finite()) || w < 0.0 || t < 0.0 {
            return Err(CostError::InvalidParameter(format!(
                "tabulated sample ({w}, {t}) out of range"
            )));
        }
    }
    pts.retain(|&(w, _)| w > 0.0);
    if pts.is_empty() {
        return Err(CostError::InvalidParameter(
            "tabulated cost needs at least one positive-mass sample".into(),
        ));
    }
    pts.push((0.0, 0.0));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| a.0 == b.0 && {
        // Keep the larger value at duplicated masses.
        b.1 = b.1.max(a.1);
        true
    });
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    debug_assert_eq!(hull[0], (0.0, 0.0));
    hull.remove(0);
    Ok(hull)
}

fn validate_envelope(points: &[(f64, f64)]) -> Result<(), CostError> {
    if points.is_empty() {
        return Err(CostError::InvalidParameter("empty tabulated cost".into()));
    }
    let mut prev = (0.0, 0.0);
    let mut prev_slope = f64::INFINITY;
    for &(w, t) in points {
        if w <= prev.0 || t < prev.1 {
            return Err(CostError::AxiomViolation(
                "tabulated breakpoints must be strictly increasing and nondecreasing in value"
                    .into(),
            ));
        }
        let slope = (t - prev.1) / (w - prev.0);
        if slope > prev_slope + 1e-12 {
            return Err(CostError::AxiomViolation(
                "tabulated cost is not concave".into(),
            ));
        }
        if slope < 0.0 {
            return Err(CostError::AxiomViolation(
                "tabulated cost is decreasing".into(),
            ));
        }
        prev_slope = slope;
        prev = (w, t);
    }
    if points[0].1 <= 0.0 {
        return Err(CostError::AxiomViolation(
            "tabulated cost must be positive for positive mass".into(),
        ));
    }
    Ok(())
}

fn envelope_eval(points: &[(f64, f64)], w: f64) -> f64 {
    let mut prev = (0.0, 0.0);
    for &(bw, bt) in points {
        if w <= bw {
            let t = (w - prev.0) / (bw - prev.0);
            return prev.1 + t * (bt - prev.1);
        }
        prev = (bw, bt);
    }
    // Extend the final slope beyond the last breakpoint.
    let n = points.len();
    let slope = if n >= 2 {
        let a = points[n - 2];
        let b = points[n - 1];
        (b.1 - a.1) / (b.0 - a.0)
    } else {
        points[0].1 / points[0].0
    };
    points[n - 1].1 + slope * (w - points[n - 1].0)
}

fn envelope_right_slope(points: &[(f64, f64)], w: f64) -> f64 {
    let mut prev = (0.0, 0.0);
    for &(bw, bt) in points {
        if w < bw {
            return (bt - prev.1) / (bw - prev.0);
        }
        prev = (bw, bt);
    }
    let n = points.len();
    if n >= 2 {
        let a = points[n - 2];
        let b = points[n - 1];
        (b.1 - a.1) / (b.0 - a.0)
    } else {
        points[0].1 / points[0].0
    }
}
