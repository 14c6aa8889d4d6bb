//! Reaction nonlinearities h and data f.
//!
//! A [`NonlinearitySpec`] describes a continuous h on `[0, inf)` that is
//! positive, finite outside the origin, dominated by `c * s^(-gamma)` near
//! zero, and has a finite limit at infinity. A [`DatumSpec`] describes the
//! nonnegative right-hand-side weight f. Both come with truncated versions
//! `h_p = min(h, 1/(p-1))` and `f_p = min(f, 1/(p-1))` used by the inner
//! solver, and with a sample-based validator for the growth and tail
//! assumptions.

use crate::error::{Error, Result};
use crate::mesh::{RadialMesh, ScalarField};

/// Value of h at a point: finite, or the explicit blow-up flag at s = 0.
///
/// The flag is deliberate: downstream code must branch on it instead of
/// relying on a large sentinel value that would overflow before capping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HValue {
    Finite(f64),
    Infinite,
}

impl HValue {
    pub fn is_infinite(&self) -> bool {
        matches!(self, HValue::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            HValue::Finite(v) => Some(*v),
            HValue::Infinite => None,
        }
    }

    /// `min(value, cap)`; the infinite flag caps exactly at `cap`.
    pub fn capped(&self, cap: f64) -> f64 {
        match self {
            HValue::Finite(v) => v.min(cap),
            HValue::Infinite => cap,
        }
    }
}

/// Closed-form families for h.
#[derive(Debug, Clone, PartialEq)]
pub enum HFamily {
    /// `h(s) = c * s^(-gamma)`; constant `c` when `gamma = 0`, blows up at
    /// zero otherwise.
    Power { c: f64, gamma: f64 },
    /// `h(s) = c * (1 + s)^(-gamma)`: bounded, `h(0) = c`.
    Bounded { c: f64, gamma: f64 },
    /// Linear ramp hitting its first zero at `s_tilde`:
    /// `h(s) = c * max(0, 1 - s/s_tilde)`.
    Vanishing { c: f64, s_tilde: f64 },
    /// Bounded below: `h(s) = m + decay * exp(-s)`, floor `m > 0`.
    Floored { m: f64, decay: f64 },
    /// Piecewise-linear interpolation of `(s, h)` samples, held constant
    /// below the first and beyond the last sample.
    Tabulated { samples: Vec<(f64, f64)> },
}

/// Description of the reaction term h.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    family: HFamily,
    /// Growth-bound constant of the near-zero domination `h <= c s^(-gamma)`.
    c: f64,
    /// Radius on which the growth bound is declared.
    s1: f64,
    gamma: f64,
    h_at_zero: HValue,
    h_at_infinity: f64,
    s_tilde: Option<f64>,
    m_floor: Option<f64>,
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

impl NonlinearitySpec {
    pub fn power(c: f64, gamma: f64, s1: f64) -> Result<Self> {
        require_positive("c", c)?;
        require_positive("s1", s1)?;
        if gamma < 0.0 {
            return Err(Error::Parameter(format!("gamma must be >= 0, got {gamma}")));
        }
        let h_at_zero = if gamma > 0.0 { HValue::Infinite } else { HValue::Finite(c) };
        let h_at_infinity = if gamma > 0.0 { 0.0 } else { c };
        Ok(Self {
            family: HFamily::Power { c, gamma },
            c,
            s1,
            gamma,
            h_at_zero,
            h_at_infinity,
            s_tilde: None,
            m_floor: None,
        })
    }

    pub fn bounded(c: f64, gamma: f64, s1: f64) -> Result<Self> {
        require_positive("c", c)?;
        require_positive("s1", s1)?;
        if gamma < 0.0 {
            return Err(Error::Parameter(format!("gamma must be >= 0, got {gamma}")));
        }
        let h_at_infinity = if gamma > 0.0 { 0.0 } else { c };
        Ok(Self {
            family: HFamily::Bounded { c, gamma },
            c,
            s1,
            gamma,
            h_at_zero: HValue::Finite(c),
            h_at_infinity,
            s_tilde: None,
            m_floor: None,
        })
    }

    pub fn vanishing(c: f64, s_tilde: f64, s1: f64) -> Result<Self> {
        require_positive("c", c)?;
        require_positive("s_tilde", s_tilde)?;
        require_positive("s1", s1)?;
        Ok(Self {
            family: HFamily::Vanishing { c, s_tilde },
            c,
            s1,
            gamma: 0.0,
            h_at_zero: HValue::Finite(c),
            h_at_infinity: 0.0,
            s_tilde: Some(s_tilde),
            m_floor: None,
        })
    }

    pub fn floored(m: f64, decay: f64, s1: f64) -> Result<Self> {
        require_positive("m", m)?;
        require_positive("decay", decay)?;
        require_positive("s1", s1)?;
        Ok(Self {
            family: HFamily::Floored { m, decay },
            // the growth bound holds with gamma = 0 and constant m + decay
            c: m + decay,
            s1,
            gamma: 0.0,
            h_at_zero: HValue::Finite(m + decay),
            h_at_infinity: m,
            s_tilde: None,
            m_floor: Some(m),
        })
    }

    /// Tabulated h. The growth parameters `c`, `gamma` and the radius `s1`
    /// cannot be inferred from samples and are required inputs.
    pub fn tabulated(samples: Vec<(f64, f64)>, c: f64, gamma: f64, s1: f64) -> Result<Self> {
        require_positive("c", c)?;
        require_positive("s1", s1)?;
        if gamma < 0.0 {
            return Err(Error::Parameter(format!("gamma must be >= 0, got {gamma}")));
        }
        check_table(&samples)?;
        if samples[0].1 == 0.0 {
            return Err(Error::Validation(
                "tabulated h has h(0) = 0; h(0) must be nonzero".into(),
            ));
        }
        if samples.iter().any(|&(_, v)| v < 0.0) {
            return Err(Error::Validation("tabulated h has negative samples".into()));
        }
        let h_at_zero = HValue::Finite(samples[0].1);
        let h_at_infinity = samples.last().unwrap().1;
        // first exact zero in the table, if any
        let s_tilde = samples.iter().find(|&&(_, v)| v == 0.0).map(|&(s, _)| s);
        Ok(Self {
            family: HFamily::Tabulated { samples },
            c,
            s1,
            gamma,
            h_at_zero,
            h_at_infinity,
            s_tilde,
            m_floor: None,
        })
    }

    /// Parse a two-column table and build a tabulated spec from it.
    pub fn tabulated_from_text(text: &str, c: f64, gamma: f64, s1: f64) -> Result<Self> {
        Self::tabulated(parse_table(text)?, c, gamma, s1)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn s1(&self) -> f64 {
        self.s1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h_at_zero(&self) -> HValue {
        self.h_at_zero
    }

    pub fn h_at_infinity(&self) -> f64 {
        self.h_at_infinity
    }

    pub fn s_tilde(&self) -> Option<f64> {
        self.s_tilde
    }

    pub fn m_floor(&self) -> Option<f64> {
        self.m_floor
    }

    pub fn family(&self) -> &HFamily {
        &self.family
    }

    /// `sigma = max(1, gamma)`, the exponent that makes truncation powers
    /// globally controlled.
    pub fn sigma(&self) -> f64 {
        self.gamma.max(1.0)
    }

    /// Evaluate h at `s >= 0`. The blow-up flag is returned only at `s = 0`
    /// and only when h blows up there.
    pub fn eval_h(&self, s: f64) -> Result<HValue> {
        if s < 0.0 || s.is_nan() {
            return Err(Error::Domain(format!("h is defined on s >= 0, got {s}")));
        }
        if s == 0.0 {
            return Ok(self.h_at_zero);
        }
        let v = match &self.family {
            HFamily::Power { c, gamma } => c * s.powf(-gamma),
            HFamily::Bounded { c, gamma } => c * (1.0 + s).powf(-gamma),
            HFamily::Vanishing { c, s_tilde } => c * (1.0 - s / s_tilde).max(0.0),
            HFamily::Floored { m, decay } => m + decay * (-s).exp(),
            HFamily::Tabulated { samples } => interp_table(samples, s),
        };
        Ok(HValue::Finite(v))
    }

    /// Finite evaluation for strictly positive arguments; panics on s <= 0
    /// blow-up in debug builds, caps at infinity flag never escapes.
    pub(crate) fn eval_h_finite(&self, s: f64) -> f64 {
        match self.eval_h(s) {
            Ok(HValue::Finite(v)) => v,
            Ok(HValue::Infinite) => f64::INFINITY,
            Err(_) => f64::NAN,
        }
    }

    /// Truncated reaction `h_p = min(h, 1/(p-1))`. When the family has a
    /// first zero `s_tilde`, the variant that cuts to 0 beyond `s_tilde` is
    /// returned instead.
    pub fn truncate_h(&self, p: f64) -> Result<TruncatedH<'_>> {
        check_p(p)?;
        Ok(TruncatedH {
            spec: self,
            cap: 1.0 / (p - 1.0),
            cut: self.s_tilde,
        })
    }

    /// Sample-based check of the declared assumptions: the growth bound on
    /// `(0, s1]`, positivity before a declared first zero, and the tail
    /// limit heuristic.
    pub fn validate(&self, sample_grid: &[f64]) -> Result<ValidationReport> {
        if sample_grid.is_empty() {
            return Err(Error::Parameter("validate: empty sample grid".into()));
        }
        let mut growth_violations = Vec::new();
        let mut positivity_violations = Vec::new();
        for &s in sample_grid {
            if !(s > 0.0) {
                return Err(Error::Parameter(format!(
                    "validate: sample grid must be positive, got {s}"
                )));
            }
            let hv = self.eval_h_finite(s);
            if s <= self.s1 {
                let bound = self.c * s.powf(-self.gamma);
                if hv > bound * (1.0 + 1e-12) {
                    growth_violations.push(GrowthViolation { s, value: hv, bound });
                }
            }
            if let Some(st) = self.s_tilde {
                if s < st && hv <= 0.0 {
                    positivity_violations.push(s);
                }
            }
        }
        // Tail heuristic: last three samples of the (geometric) grid.
        let n = sample_grid.len();
        let tail: Vec<f64> = sample_grid[n.saturating_sub(3)..]
            .iter()
            .map(|&s| self.eval_h_finite(s))
            .collect();
        let tail_estimate = tail.iter().sum::<f64>() / tail.len() as f64;
        let spread = tail.iter().cloned().fold(f64::MIN, f64::max)
            - tail.iter().cloned().fold(f64::MAX, f64::min);
        let tail_relative_spread = if tail_estimate.abs() > 0.0 {
            spread / tail_estimate.abs()
        } else if spread == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let tail_settled = tail_relative_spread < 1e-3;
        Ok(ValidationReport {
            growth_violations,
            positivity_violations,
            tail_estimate,
            tail_relative_spread,
            tail_settled,
            declared_h_at_infinity: self.h_at_infinity,
            tail_deviation: (tail_estimate - self.h_at_infinity).abs(),
        })
    }
}

/// One sampled failure of the growth bound `h(s) <= c s^(-gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthViolation {
    pub s: f64,
    pub value: f64,
    pub bound: f64,
}

/// Outcome of [`NonlinearitySpec::validate`].
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub growth_violations: Vec<GrowthViolation>,
    pub positivity_violations: Vec<f64>,
    pub tail_estimate: f64,
    pub tail_relative_spread: f64,
    /// Whether the last three samples agree to relative spread < 1e-3. Slowly
    /// decaying tails (e.g. power laws on a geometric grid) legitimately do
    /// not settle; the declared limit is an assumption, not a measurement.
    pub tail_settled: bool,
    pub declared_h_at_infinity: f64,
    pub tail_deviation: f64,
}

impl ValidationReport {
    /// No sampled growth or positivity violations.
    pub fn is_clean(&self) -> bool {
        self.growth_violations.is_empty() && self.positivity_violations.is_empty()
    }
}

/// The truncated reaction `h_p`.
#[derive(Debug, Clone)]
pub struct TruncatedH<'a> {
    spec: &'a NonlinearitySpec,
    cap: f64,
    cut: Option<f64>,
}

impl TruncatedH<'_> {
    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// `h_p(s)`. Negative arguments clamp to 0 (the solver keeps its
    /// iterates nonnegative; this makes the callable total).
    pub fn eval(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        if let Some(st) = self.cut {
            if s > st {
                return 0.0;
            }
        }
        match self.spec.eval_h(s) {
            Ok(v) => v.capped(self.cap),
            Err(_) => unreachable!("s clamped nonnegative"),
        }
    }

    /// Exact antiderivative `int_0^s h_p(t) dt` (extended linearly below
    /// zero). Concave whenever h is nonincreasing, which makes the coupled
    /// reaction energy convex.
    pub fn integral(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.eval(0.0) * s;
        }
        let upto = match self.cut {
            Some(st) => s.min(st),
            None => s,
        };
        let cap = self.cap;
        match self.spec.family() {
            HFamily::Power { c, gamma } => {
                if *gamma == 0.0 {
                    return c.min(cap) * upto;
                }
                // h >= cap exactly on (0, a]
                let a = (c / cap).powf(1.0 / gamma).min(upto);
                cap * a + power_primitive(*c, *gamma, a, upto)
            }
            HFamily::Bounded { c, gamma } => {
                if *gamma == 0.0 {
                    return c.min(cap) * upto;
                }
                if *c <= cap {
                    // no capped region; shift the power primitive by 1
                    return power_primitive(*c, *gamma, 1.0, 1.0 + upto);
                }
                let a = ((c / cap).powf(1.0 / gamma) - 1.0).clamp(0.0, upto);
                cap * a + power_primitive(*c, *gamma, 1.0 + a, 1.0 + upto)
            }
            HFamily::Vanishing { c, s_tilde } => {
                let a = if *c > cap { s_tilde * (1.0 - cap / c) } else { 0.0 }.min(upto);
                let ramp = |t: f64| c * (t - t * t / (2.0 * s_tilde));
                let hi = upto.min(*s_tilde);
                cap * a + (ramp(hi) - ramp(a)).max(0.0)
            }
            HFamily::Floored { m, decay } => {
                if cap <= *m {
                    return cap * upto;
                }
                let a = if m + decay > cap { (decay / (cap - m)).ln().max(0.0) } else { 0.0 }
                    .min(upto);
                let prim = |t: f64| m * t + decay * (1.0 - (-t).exp());
                cap * a + prim(upto) - prim(a)
            }
            HFamily::Tabulated { samples } => tabulated_capped_integral(samples, cap, upto),
        }
    }
}

/// `int_a^b c t^(-gamma) dt` for `0 < a <= b`.
fn power_primitive(c: f64, gamma: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if (gamma - 1.0).abs() < 1e-12 {
        c * (b / a).ln()
    } else {
        c / (1.0 - gamma) * (b.powf(1.0 - gamma) - a.powf(1.0 - gamma))
    }
}

/// Exact integral of `min(piecewise-linear table, cap)` over `[0, upto]`,
/// with the table's constant extension on both sides.
fn tabulated_capped_integral(samples: &[(f64, f64)], cap: f64, upto: f64) -> f64 {
    let seg = |x0: f64, x1: f64, y0: f64, y1: f64| -> f64 {
        // integral of min(linear, cap) over [x0, x1]
        if x1 <= x0 {
            return 0.0;
        }
        let (lo, hi) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
        if hi <= cap {
            return 0.5 * (y0 + y1) * (x1 - x0);
        }
        if lo >= cap {
            return cap * (x1 - x0);
        }
        // one crossing at xc
        let xc = x0 + (cap - y0) / (y1 - y0) * (x1 - x0);
        if y0 < cap {
            0.5 * (y0 + cap) * (xc - x0) + cap * (x1 - xc)
        } else {
            cap * (xc - x0) + 0.5 * (cap + y1) * (x1 - xc)
        }
    };
    let first = samples[0];
    let last = *samples.last().unwrap();
    let mut total = first.1.min(cap) * upto.min(first.0);
    if upto <= first.0 {
        return total;
    }
    for w in samples.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if upto <= x0 {
            break;
        }
        let hi = upto.min(x1);
        // clip the segment to [x0, hi]
        let yh = if hi == x1 { y1 } else { y0 + (y1 - y0) * (hi - x0) / (x1 - x0) };
        total += seg(x0, hi, y0, yh);
    }
    if upto > last.0 {
        total += last.1.min(cap) * (upto - last.0);
    }
    total
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::Parameter(format!("p must lie in (1, 2), got {p}")));
    }
    Ok(())
}

/// Closed-form families for the datum f.
#[derive(Debug, Clone, PartialEq)]
pub enum FFamily {
    /// `f(r) = (N-1) r^(-q)` on the whole ball.
    RadialPower { q: f64 },
    /// `f = N/rho` on `r <= rho`, 0 outside.
    FlatBall { rho: f64 },
    /// `f(r) = (N-1) r^(-q)` on `r <= rho`, 0 outside.
    RadialPowerBall { q: f64, rho: f64 },
    /// Piecewise-linear interpolation of `(r, f)` samples.
    Tabulated { samples: Vec<(f64, f64)> },
}

/// Description of the nonnegative datum f, with a global scale factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DatumSpec {
    family: FFamily,
    scale: f64,
}

impl DatumSpec {
    pub fn radial_power(q: f64, scale: f64) -> Result<Self> {
        require_positive("scale", scale)?;
        if q <= 1.0 {
            return Err(Error::Parameter(format!("q must exceed 1, got {q}")));
        }
        Ok(Self { family: FFamily::RadialPower { q }, scale })
    }

    pub fn flat_ball(rho: f64, scale: f64) -> Result<Self> {
        require_positive("scale", scale)?;
        require_positive("rho", rho)?;
        Ok(Self { family: FFamily::FlatBall { rho }, scale })
    }

    pub fn radial_power_ball(q: f64, rho: f64, scale: f64) -> Result<Self> {
        require_positive("scale", scale)?;
        require_positive("rho", rho)?;
        if q <= 1.0 {
            return Err(Error::Parameter(format!("q must exceed 1, got {q}")));
        }
        Ok(Self { family: FFamily::RadialPowerBall { q, rho }, scale })
    }

    pub fn tabulated(samples: Vec<(f64, f64)>, scale: f64) -> Result<Self> {
        require_positive("scale", scale)?;
        check_table(&samples)?;
        if samples.iter().any(|&(_, v)| v < 0.0) {
            return Err(Error::Validation("tabulated f has negative samples".into()));
        }
        Ok(Self { family: FFamily::Tabulated { samples }, scale })
    }

    pub fn tabulated_from_text(text: &str, scale: f64) -> Result<Self> {
        Self::tabulated(parse_table(text)?, scale)
    }

    pub fn family(&self) -> &FFamily {
        &self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Check the mesh-dependent parameter ranges: `q` in `(1, N)` and
    /// `rho` in `(0, R)`.
    pub fn validate_for(&self, n_dim: u32, radius: f64) -> Result<()> {
        let n = n_dim as f64;
        match &self.family {
            FFamily::RadialPower { q } => {
                if !(*q > 1.0 && *q < n) {
                    return Err(Error::Parameter(format!(
                        "radial-power datum requires 1 < q < N; got q = {q}, N = {n_dim}"
                    )));
                }
            }
            FFamily::RadialPowerBall { q, rho } => {
                if !(*q > 1.0 && *q < n) {
                    return Err(Error::Parameter(format!(
                        "radial-power-ball datum requires 1 < q < N; got q = {q}, N = {n_dim}"
                    )));
                }
                if !(*rho < radius) {
                    return Err(Error::Parameter(format!(
                        "radial-power-ball datum requires rho < R; got rho = {rho}, R = {radius}"
                    )));
                }
            }
            FFamily::FlatBall { rho } => {
                if !(*rho < radius) {
                    return Err(Error::Parameter(format!(
                        "flat-ball datum requires rho < R; got rho = {rho}, R = {radius}"
                    )));
                }
            }
            FFamily::Tabulated { .. } => {}
        }
        Ok(())
    }

    /// Pointwise value; may be `+inf` at `r = 0` for the power families.
    pub fn eval(&self, r: f64, n_dim: u32) -> f64 {
        debug_assert!(r >= 0.0);
        let n = n_dim as f64;
        let base = match &self.family {
            FFamily::RadialPower { q } => {
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    (n - 1.0) * r.powf(-q)
                }
            }
            FFamily::FlatBall { rho } => {
                if r <= *rho {
                    n / rho
                } else {
                    0.0
                }
            }
            FFamily::RadialPowerBall { q, rho } => {
                if r > *rho {
                    0.0
                } else if r == 0.0 {
                    f64::INFINITY
                } else {
                    (n - 1.0) * r.powf(-q)
                }
            }
            FFamily::Tabulated { samples } => interp_table(samples, r),
        };
        self.scale * base
    }

    /// Raw nodal samples on a mesh (no truncation; the origin node may be
    /// `+inf`).
    pub fn eval_on(&self, mesh: &RadialMesh) -> ScalarField {
        ScalarField::from_fn(mesh, |r| self.eval(r, mesh.n_dim()))
    }

    /// Truncated nodal datum `f_p = min(f, 1/(p-1))`; the origin node takes
    /// the capped value when f blows up there.
    pub fn truncate_f(&self, p: f64, mesh: &RadialMesh) -> Result<ScalarField> {
        check_p(p)?;
        self.validate_for(mesh.n_dim(), mesh.radius())?;
        let cap = 1.0 / (p - 1.0);
        Ok(ScalarField::from_fn(mesh, |r| self.eval(r, mesh.n_dim()).min(cap)))
    }
}

fn check_table(samples: &[(f64, f64)]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Parameter("table must not be empty".into()));
    }
    for w in samples.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Validation(format!(
                "table first column must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
    }
    Ok(())
}

fn interp_table(samples: &[(f64, f64)], x: f64) -> f64 {
    let first = samples[0];
    let last = *samples.last().unwrap();
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let hi = samples.partition_point(|&(s, _)| s < x);
    let (x0, y0) = samples[hi - 1];
    let (x1, y1) = samples[hi];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Parse a two-column plain-text table: one `(s, value)` pair per line,
/// whitespace separated, strictly increasing first column. Blank lines and
/// `#` comments are skipped.
pub fn parse_table(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<f64> {
            tok.ok_or_else(|| {
                Error::Validation(format!("table line {}: expected two columns", lineno + 1))
            })?
            .parse::<f64>()
            .map_err(|e| Error::Validation(format!("table line {}: {e}", lineno + 1)))
        };
        let s = parse(cols.next())?;
        let v = parse(cols.next())?;
        if cols.next().is_some() {
            return Err(Error::Validation(format!(
                "table line {}: expected exactly two columns",
                lineno + 1
            )));
        }
        out.push((s, v));
    }
    check_table(&out)?;
    Ok(out)
}

/// Geometric grid of `n` points from `from` to `to` (both positive).
pub fn geometric_grid(from: f64, to: f64, n: usize) -> Vec<f64> {
    assert!(from > 0.0 && to > from && n >= 2);
    let ratio = (to / from).powf(1.0 / (n - 1) as f64);
    let mut g: Vec<f64> = (0..n).map(|i| from * ratio.powi(i as i32)).collect();
    g[n - 1] = to;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Grading, RadialMesh};

    #[test]
    fn eval_power_family() {
        let h = NonlinearitySpec::power(1.0, 1.0, 1.0).unwrap();
        assert_eq!(h.eval_h(2.0).unwrap(), HValue::Finite(0.5));
        assert_eq!(h.eval_h(0.0).unwrap(), HValue::Infinite);
        assert!(h.eval_h(-1.0).is_err());
    }

    #[test]
    fn eval_vanishing_family() {
        let h = NonlinearitySpec::vanishing(1.0, 1.0, 0.5).unwrap();
        assert_eq!(h.eval_h(1.0).unwrap(), HValue::Finite(0.0));
        assert_eq!(h.eval_h(2.0).unwrap(), HValue::Finite(0.0));
        assert_eq!(h.eval_h(0.0).unwrap(), HValue::Finite(1.0));
    }

    #[test]
    fn truncation_caps() {
        let h = NonlinearitySpec::power(1.0, 1.0, 1.0).unwrap();
        let hp = h.truncate_h(1.5).unwrap();
        assert_eq!(hp.cap(), 2.0);
        assert_eq!(hp.eval(0.1), 2.0); // min(10, 2)
        assert_eq!(hp.eval(1.0), 1.0); // below the cap
        assert!(h.truncate_h(2.0).is_err());
        assert!(h.truncate_h(1.0).is_err());
    }

    #[test]
    fn truncation_vanishing_cut() {
        let h = NonlinearitySpec::vanishing(3.0, 1.0, 0.5).unwrap();
        for p in [1.1, 1.5, 1.9] {
            let hp = h.truncate_h(p).unwrap();
            assert_eq!(hp.eval(2.0), 0.0);
        }
    }

    #[test]
    fn truncation_monotone_in_p() {
        let h = NonlinearitySpec::power(2.0, 1.5, 1.0).unwrap();
        let lo = h.truncate_h(1.2).unwrap();
        let hi = h.truncate_h(1.8).unwrap();
        for i in 0..200 {
            let s = i as f64 * 0.05;
            assert!(lo.eval(s) >= hi.eval(s));
            let cap = hi.cap();
            let hv = h.eval_h(s).unwrap();
            assert!(hi.eval(s) <= hv.capped(cap) + 1e-15);
        }
    }

    #[test]
    fn sigma_rule() {
        assert_eq!(NonlinearitySpec::power(1.0, 0.5, 1.0).unwrap().sigma(), 1.0);
        assert_eq!(NonlinearitySpec::power(1.0, 1.0, 1.0).unwrap().sigma(), 1.0);
        assert_eq!(NonlinearitySpec::power(1.0, 3.0, 1.0).unwrap().sigma(), 3.0);
    }

    #[test]
    fn datum_truncation_values() {
        let mesh = RadialMesh::assemble(3, 1.0, 20, Grading::Uniform).unwrap();
        let f = DatumSpec::radial_power(2.0, 1.0).unwrap();
        // (N-1) r^-q = 2 * 100 = 200 at r = 0.1, capped at 2
        let fp = f.truncate_f(1.5, &mesh).unwrap();
        let i = mesh.nodes().iter().position(|&r| (r - 0.1).abs() < 1e-12).unwrap();
        assert!((fp[i] - 2.0).abs() < 1e-12);

        let mesh2 = RadialMesh::assemble(2, 1.0, 16, Grading::Uniform).unwrap();
        let g = DatumSpec::flat_ball(0.5, 1.0).unwrap();
        let gp = g.truncate_f(1.9, &mesh2).unwrap();
        let j = mesh2.nodes().iter().position(|&r| (r - 0.25).abs() < 1e-12).unwrap();
        assert!((gp[j] - 10.0 / 9.0).abs() < 1e-12);

        // cap above the range leaves f unchanged
        let raw = g.eval_on(&mesh2);
        let gp2 = g.truncate_f(1.01, &mesh2).unwrap();
        for i in 0..raw.len() {
            assert_eq!(raw[i], gp2[i]);
        }
    }

    #[test]
    fn datum_range_checks() {
        let mesh = RadialMesh::assemble(2, 1.0, 16, Grading::Uniform).unwrap();
        let f = DatumSpec::radial_power(2.5, 1.0).unwrap(); // q >= N for N = 2
        assert!(f.truncate_f(1.5, &mesh).is_err());
        assert!(DatumSpec::flat_ball(1.5, 1.0).unwrap().validate_for(2, 1.0).is_err());
    }

    #[test]
    fn validate_power_clean() {
        let h = NonlinearitySpec::power(1.0, 1.0, 1.0).unwrap();
        let grid = geometric_grid(0.01, 50.0, 200);
        let report = h.validate(&grid).unwrap();
        assert!(report.is_clean());
    }

    #[test]
    fn validate_reports_growth_violation() {
        // one sample of 2/s at s = 0.5 against the declared bound 1/s
        let h = NonlinearitySpec::tabulated(
            vec![(0.25, 8.0), (0.5, 4.0), (1.0, 1.0), (10.0, 0.1)],
            1.0,
            1.0,
            1.0,
        )
        .unwrap();
        let report = h.validate(&[0.5, 1.0, 10.0]).unwrap();
        assert_eq!(report.growth_violations.len(), 1);
        assert_eq!(report.growth_violations[0].s, 0.5);
        assert!(!report.is_clean());
    }

    #[test]
    fn validate_floored_tail() {
        let h = NonlinearitySpec::floored(0.3, 1.0, 1.0).unwrap();
        let grid = geometric_grid(0.1, 60.0, 120);
        let report = h.validate(&grid).unwrap();
        assert!(report.tail_estimate >= 0.3);
        assert!(report.tail_settled);
        assert!(report.tail_deviation < 1e-12);
    }

    #[test]
    fn validate_empty_grid_rejected() {
        let h = NonlinearitySpec::power(1.0, 1.0, 1.0).unwrap();
        assert!(h.validate(&[]).is_err());
    }

    #[test]
    fn table_parsing() {
        let t = parse_table("# comment\n0.5 2.0\n1.0 1.0\n\n2.0 0.5\n").unwrap();
        assert_eq!(t, vec![(0.5, 2.0), (1.0, 1.0), (2.0, 0.5)]);
        assert!(parse_table("1.0 1.0\n0.5 2.0\n").is_err());
        assert!(parse_table("1.0\n").is_err());
    }

    #[test]
    fn tabulated_rejects_zero_at_origin() {
        assert!(NonlinearitySpec::tabulated(vec![(0.1, 0.0), (1.0, 1.0)], 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn specs_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<NonlinearitySpec>();
        assert_send_sync::<DatumSpec>();
    }

    #[test]
    fn oscillating_tail_reported_unsettled() {
        // no limit at infinity: the report flags it, nothing else handles it
        let grid = geometric_grid(0.5, 200.0, 120);
        let samples: Vec<(f64, f64)> =
            grid.iter().map(|&s| (s, 1.5 + (0.7 * s).sin())).collect();
        let h = NonlinearitySpec::tabulated(samples, 3.0, 0.0, 1.0).unwrap();
        let report = h.validate(&grid).unwrap();
        assert!(!report.tail_settled);
        assert!(report.tail_relative_spread > 1e-3);
    }

    #[test]
    fn truncated_integral_matches_quadrature() {
        let specs = vec![
            NonlinearitySpec::power(1.0, 1.0, 1.0).unwrap(),
            NonlinearitySpec::power(2.0, 0.5, 1.0).unwrap(),
            NonlinearitySpec::power(1.5, 2.0, 1.0).unwrap(),
            NonlinearitySpec::power(3.0, 0.0, 1.0).unwrap(),
            NonlinearitySpec::bounded(5.0, 1.5, 1.0).unwrap(),
            NonlinearitySpec::bounded(0.5, 0.0, 1.0).unwrap(),
            NonlinearitySpec::vanishing(6.0, 1.2, 0.5).unwrap(),
            NonlinearitySpec::floored(2.0, 3.0, 1.0).unwrap(),
            NonlinearitySpec::tabulated(
                vec![(0.1, 8.0), (0.5, 2.0), (1.0, 3.5), (2.0, 0.5), (4.0, 0.5)],
                10.0,
                1.0,
                1.0,
            )
            .unwrap(),
        ];
        for spec in &specs {
            for p in [1.2, 1.7] {
                let hp = spec.truncate_h(p).unwrap();
                for s in [0.05, 0.4, 1.0, 2.5, 6.0] {
                    // midpoint oracle; h_p is bounded so this converges cleanly
                    let n = 200_000;
                    let dt = s / n as f64;
                    let quad: f64 =
                        (0..n).map(|i| hp.eval((i as f64 + 0.5) * dt) * dt).sum();
                    let exact = hp.integral(s);
                    assert!(
                        (exact - quad).abs() <= 1e-6 * quad.abs().max(1.0),
                        "family {:?} p={p} s={s}: exact {exact} vs quad {quad}",
                        spec.family()
                    );
                }
                // derivative consistency away from kinks
                for s in [0.3, 0.8, 1.7] {
                    let d = 1e-6;
                    let fd = (hp.integral(s + d) - hp.integral(s - d)) / (2.0 * d);
                    assert!((fd - hp.eval(s)).abs() < 1e-4 * (1.0 + hp.eval(s)));
                }
            }
        }
    }
}
