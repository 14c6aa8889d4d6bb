//! Decreasing majorant envelope and the test-function transform.
//!
//! From samples of the reaction term (cut at its supremum beyond `s1`) we
//! build three tables in sequence: a smoothed band approximation `h1` pinned
//! inside `[h, h + 2 e^(-s)]`, its least nonincreasing majorant `h2` (the
//! running maximum from the right), and the strictly decreasing envelope
//! `hbar = h2 + e^(-s)`. On top of the envelope sits the increasing
//! transform `Phi` (power below `s1`, monotone cubic bridge on `[s1, s2]`,
//! reciprocal envelope beyond) and its fractional-derivative integral
//! `Gamma_p(s) = int_0^s Phi'(t)^(1/p) dt`, the quantity whose gradient
//! stays bounded uniformly in p.

use crate::error::{Error, Result};
use crate::nonlinearity::{geometric_grid, NonlinearitySpec};
use std::io::Write;

/// Number of points in the default sample grid.
const DEFAULT_GRID_POINTS: usize = 400;
/// Upper end of the default grid; exp(-50) ~ 2e-22, so the additive tail
/// term is negligible there.
const DEFAULT_GRID_END: f64 = 50.0;
/// Moving-average stencil width used by the envelope builder.
const BUILD_WINDOW: usize = 5;
/// Midpoint panels per transform segment in the Gamma_p quadrature.
const GAMMA_PANELS: usize = 64;

/// Default sample grid for a spec: geometric from `s1 / 10` to 50.
pub fn default_grid(s1: f64) -> Vec<f64> {
    let lo = (s1 / 10.0).min(DEFAULT_GRID_END / 2.0);
    geometric_grid(lo, DEFAULT_GRID_END.max(lo * 10.0), DEFAULT_GRID_POINTS)
}

/// The three envelope stages sampled on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeTable {
    grid: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    hbar: Vec<f64>,
}

impl EnvelopeTable {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn h1_values(&self) -> &[f64] {
        &self.h1
    }

    pub fn h2_values(&self) -> &[f64] {
        &self.h2
    }

    pub fn hbar_values(&self) -> &[f64] {
        &self.hbar
    }

    /// Envelope value by linear interpolation, held constant outside the
    /// grid.
    pub fn hbar_at(&self, s: f64) -> f64 {
        interp(&self.grid, &self.hbar, s)
    }

    /// Two-column `(s, hbar)` text table.
    pub fn write_table(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (s, v) in self.grid.iter().zip(self.hbar.iter()) {
            writeln!(w, "{s:.17e} {v:.17e}")?;
        }
        Ok(())
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= *xs.last().unwrap() {
        return *ys.last().unwrap();
    }
    let hi = xs.partition_point(|&v| v < x);
    let (x0, x1) = (xs[hi - 1], xs[hi]);
    let (y0, y1) = (ys[hi - 1], ys[hi]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Moving-average smoothing of `h + e^(-s)` clamped back into the band
/// `[h, h + 2 e^(-s)]` pointwise. A window of width 1 is the identity
/// stencil and returns `h + e^(-s)` exactly.
pub fn smooth_band(h_samples: &[f64], grid: &[f64], window: usize) -> Result<Vec<f64>> {
    if h_samples.len() != grid.len() {
        return Err(Error::Parameter("smooth_band: samples and grid lengths differ".into()));
    }
    if window == 0 || window % 2 == 0 {
        return Err(Error::Parameter(format!(
            "smooth_band: window must be odd and positive, got {window}"
        )));
    }
    if grid.len() < window {
        return Err(Error::Parameter(format!(
            "smooth_band: grid of {} points is shorter than the {window}-point stencil",
            grid.len()
        )));
    }
    let raised: Vec<f64> =
        h_samples.iter().zip(grid.iter()).map(|(&h, &s)| h + (-s).exp()).collect();
    let hw = window / 2;
    let n = grid.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(hw);
        let hi = (i + hw + 1).min(n);
        let mean = raised[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        let band_lo = h_samples[i];
        let band_hi = h_samples[i] + 2.0 * (-grid[i]).exp();
        out.push(mean.clamp(band_lo, band_hi));
    }
    Ok(out)
}

/// Least nonincreasing majorant of a sample table: the running maximum from
/// the right.
pub fn rising_sun(h1_samples: &[f64]) -> Result<Vec<f64>> {
    if h1_samples.is_empty() {
        return Err(Error::Parameter("rising_sun: empty table".into()));
    }
    let mut out = h1_samples.to_vec();
    for i in (0..out.len() - 1).rev() {
        out[i] = out[i].max(out[i + 1]);
    }
    Ok(out)
}

/// Build the full envelope for a spec on a sample grid. The input to the
/// band stage is the cut function `min(h, l)` with `l` the sampled supremum
/// of h on `[s1, inf)`, so only the near-zero singularity is removed.
pub fn build_hbar(spec: &NonlinearitySpec, grid: &[f64]) -> Result<EnvelopeTable> {
    if grid.len() < BUILD_WINDOW {
        return Err(Error::Parameter("build_hbar: grid too short".into()));
    }
    for w in grid.windows(2) {
        if !(w[0] > 0.0 && w[1] > w[0]) {
            return Err(Error::Parameter(
                "build_hbar: grid must be positive and strictly increasing".into(),
            ));
        }
    }
    let s1 = spec.s1();
    if *grid.last().unwrap() <= s1 {
        return Err(Error::Parameter("build_hbar: grid must extend beyond s1".into()));
    }
    let h: Vec<f64> = grid.iter().map(|&s| spec.eval_h_finite(s)).collect();
    let cut_level = grid
        .iter()
        .zip(h.iter())
        .filter(|(&s, _)| s >= s1)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let g: Vec<f64> = h.iter().map(|&v| v.min(cut_level)).collect();
    let h1 = smooth_band(&g, grid, BUILD_WINDOW)?;
    let h2 = rising_sun(&h1)?;
    let hbar: Vec<f64> =
        h2.iter().zip(grid.iter()).map(|(&v, &s)| v + (-s).exp()).collect();
    Ok(EnvelopeTable { grid: grid.to_vec(), h1, h2, hbar })
}

/// Smallest grid point beyond `max(1, s1)` where the envelope drops below
/// `s1^(-sigma)`.
pub fn choose_s2(env: &EnvelopeTable, s1: f64, sigma: f64) -> Result<f64> {
    let threshold = s1.powf(-sigma);
    let floor = s1.max(1.0);
    let mut min_hbar = f64::INFINITY;
    for (&s, &v) in env.grid.iter().zip(env.hbar.iter()) {
        if s > floor {
            if v < threshold {
                return Ok(s);
            }
            min_hbar = min_hbar.min(v);
        }
    }
    Err(Error::EnvelopeTooLarge { threshold, min_hbar })
}

/// Monotone cubic Hermite segment on `[x0, x1]`.
#[derive(Debug, Clone, PartialEq)]
struct HermiteBridge {
    x0: f64,
    x1: f64,
    v0: f64,
    v1: f64,
    d0: f64,
    d1: f64,
}

impl HermiteBridge {
    /// Endpoint slopes are limited by the Fritsch-Carlson condition so the
    /// cubic is monotone on the segment.
    fn fitted(x0: f64, x1: f64, v0: f64, v1: f64, mut d0: f64, mut d1: f64) -> Self {
        let delta = (v1 - v0) / (x1 - x0);
        d0 = d0.max(0.0);
        d1 = d1.max(0.0);
        if delta > 0.0 {
            let a = d0 / delta;
            let b = d1 / delta;
            let r = (a * a + b * b).sqrt();
            if r > 3.0 {
                d0 *= 3.0 / r;
                d1 *= 3.0 / r;
            }
        }
        Self { x0, x1, v0, v1, d0, d1 }
    }

    fn value(&self, s: f64) -> f64 {
        let h = self.x1 - self.x0;
        let t = (s - self.x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        self.v0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + self.d0 * h * (t3 - 2.0 * t2 + t)
            + self.v1 * (-2.0 * t3 + 3.0 * t2)
            + self.d1 * h * (t3 - t2)
    }

    fn derivative(&self, s: f64) -> f64 {
        let h = self.x1 - self.x0;
        let t = (s - self.x0) / h;
        let t2 = t * t;
        (self.v0 * (6.0 * t2 - 6.0 * t) / h)
            + self.d0 * (3.0 * t2 - 4.0 * t + 1.0)
            + (self.v1 * (-6.0 * t2 + 6.0 * t) / h)
            + self.d1 * (3.0 * t2 - 2.0 * t)
    }
}

/// The increasing transform `Phi` with its envelope and the preprocessed
/// slope cache for evaluating `Phi'` on the reciprocal tail.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTriple {
    s1: f64,
    s2: f64,
    sigma: f64,
    bridge: HermiteBridge,
    env: EnvelopeTable,
    /// Index of `s2` in the envelope grid.
    s2_idx: usize,
    /// Per-cell slopes of the envelope table (quadrature cache for the
    /// reciprocal tail of `Phi'`).
    cell_slopes: Vec<f64>,
}

/// Assemble `Phi` from a chosen `s2` and a built envelope.
pub fn build_phi(s1: f64, s2: f64, sigma: f64, env: EnvelopeTable) -> Result<PhiTriple> {
    if sigma < 1.0 {
        return Err(Error::Parameter(format!("sigma must be >= 1, got {sigma}")));
    }
    let s2_idx = env
        .grid
        .iter()
        .position(|&s| s == s2)
        .ok_or_else(|| Error::Parameter("build_phi: s2 must be a grid point".into()))?;
    let v0 = s1.powf(sigma);
    let v1 = 1.0 / env.hbar[s2_idx];
    if v0 >= v1 {
        return Err(Error::Parameter(format!(
            "build_phi: s1^sigma = {v0:.6e} must stay below 1/hbar(s2) = {v1:.6e}"
        )));
    }
    let d0 = sigma * s1.powf(sigma - 1.0);
    // one-sided slope of 1/hbar at s2 from the right table cell
    let d1 = if s2_idx + 1 < env.grid.len() {
        let dh = (env.hbar[s2_idx + 1] - env.hbar[s2_idx])
            / (env.grid[s2_idx + 1] - env.grid[s2_idx]);
        -dh / (env.hbar[s2_idx] * env.hbar[s2_idx])
    } else {
        let dh = (env.hbar[s2_idx] - env.hbar[s2_idx - 1])
            / (env.grid[s2_idx] - env.grid[s2_idx - 1]);
        -dh / (env.hbar[s2_idx] * env.hbar[s2_idx])
    };
    let bridge = HermiteBridge::fitted(s1, s2, v0, v1, d0, d1);
    let cell_slopes: Vec<f64> = env
        .grid
        .windows(2)
        .zip(env.hbar.windows(2))
        .map(|(g, h)| (h[1] - h[0]) / (g[1] - g[0]))
        .collect();
    Ok(PhiTriple { s1, s2, sigma, bridge, env, s2_idx, cell_slopes })
}

impl PhiTriple {
    /// Full pipeline with the default grid: envelope, bridge point, transform.
    pub fn for_spec(spec: &NonlinearitySpec) -> Result<Self> {
        let grid = default_grid(spec.s1());
        let env = build_hbar(spec, &grid)?;
        let s2 = choose_s2(&env, spec.s1(), spec.sigma())?;
        build_phi(spec.s1(), s2, spec.sigma(), env)
    }

    pub fn s1(&self) -> f64 {
        self.s1
    }

    pub fn s2(&self) -> f64 {
        self.s2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn envelope(&self) -> &EnvelopeTable {
        &self.env
    }

    pub fn phi(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        if s < self.s1 {
            s.powf(self.sigma)
        } else if s <= self.s2 {
            self.bridge.value(s)
        } else {
            1.0 / self.env.hbar_at(s)
        }
    }

    /// Derivative of the transform; zero beyond the grid end where the
    /// envelope is held constant.
    pub fn phi_prime(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        if s < self.s1 {
            self.sigma * s.powf(self.sigma - 1.0)
        } else if s <= self.s2 {
            self.bridge.derivative(s).max(0.0)
        } else {
            let grid = &self.env.grid;
            if s >= *grid.last().unwrap() {
                return 0.0;
            }
            let hi = grid.partition_point(|&v| v < s).max(self.s2_idx + 1);
            let slope = self.cell_slopes[hi - 1];
            let hb = self.env.hbar_at(s);
            (-slope / (hb * hb)).max(0.0)
        }
    }

    /// `Gamma_p(s) = int_0^s Phi'(t)^(1/p) dt`.
    ///
    /// The power-law piece below `s1` is integrated exactly (the endpoint
    /// singularity of `Phi'^(1/p)` at t = 0 is integrable); the bridge and
    /// tail pieces use composite midpoint quadrature.
    pub fn gamma_p(&self, p: f64, s: f64) -> Result<f64> {
        if !(p > 1.0 && p < 2.0) {
            return Err(Error::Parameter(format!("gamma_p: p must lie in (1, 2), got {p}")));
        }
        if s < 0.0 {
            return Err(Error::Domain(format!("gamma_p: s must be >= 0, got {s}")));
        }
        Ok(self.gamma_p_with_panels(p, s, GAMMA_PANELS))
    }

    /// Quadrature with an explicit panel count (exposed for refinement
    /// studies in tests).
    pub fn gamma_p_with_panels(&self, p: f64, s: f64, panels: usize) -> f64 {
        let sigma = self.sigma;
        let head = s.min(self.s1);
        // exact: int_0^x (sigma t^(sigma-1))^(1/p) dt
        let expo = (sigma - 1.0 + p) / p;
        let mut total = sigma.powf(1.0 / p) * (p / (sigma - 1.0 + p)) * head.powf(expo);
        if s > self.s1 {
            let hi = s.min(self.s2);
            total += self.midpoint(p, self.s1, hi, panels);
        }
        if s > self.s2 {
            total += self.midpoint(p, self.s2, s, panels);
        }
        total
    }

    fn midpoint(&self, p: f64, a: f64, b: f64, panels: usize) -> f64 {
        if b <= a {
            return 0.0;
        }
        let h = (b - a) / panels as f64;
        let mut sum = 0.0;
        for i in 0..panels {
            let t = a + (i as f64 + 0.5) * h;
            sum += self.phi_prime(t).powf(1.0 / p);
        }
        sum * h
    }

    /// Two-column `(s, Phi(s))` text table on the envelope grid.
    pub fn write_table(&self, w: &mut impl Write) -> std::io::Result<()> {
        for &s in &self.env.grid {
            writeln!(w, "{s:.17e} {:.17e}", self.phi(s))?;
        }
        Ok(())
    }
}
