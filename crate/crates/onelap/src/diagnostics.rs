//! Discrete residual forms of everything the limit theory constrains: the
//! flux field z, the pairing identity between z and truncation gradients,
//! the divergence equation, the boundary flux, the uniform-in-p norm
//! estimates, and the regime classifier for continuation traces.

use crate::envelope::PhiTriple;
use crate::error::{Error, Result};
use crate::mesh::{FaceField, RadialMesh, ScalarField};
use crate::nonlinearity::{DatumSpec, NonlinearitySpec};
use crate::truncations::t_k;

/// Default truncation levels for the estimate suite, spanning below and
/// above the plateau values of the closed-form examples.
pub const DEFAULT_K_LIST: [f64; 4] = [0.5, 1.0, 2.0, 5.0];

/// Regularized flux per face: `z_f = (|Du|^2 + eps^2)^((p-2)/2) Du`.
pub fn vector_field(mesh: &RadialMesh, p: f64, u: &ScalarField, eps: f64) -> FaceField {
    let mut z = Vec::with_capacity(mesh.cells());
    for f in 0..mesh.cells() {
        let du = (u[f + 1] - u[f]) / mesh.cell_width(f);
        z.push((du * du + eps * eps).powf((p - 2.0) / 2.0) * du);
    }
    FaceField::new(mesh, z).expect("face count matches")
}

/// Per-face pairing defect `(|D T_k u| - z . D T_k u) r_f^(N-1)`.
///
/// Nonnegative up to roundoff whenever the sup of |z| stays below 1; the
/// check rejects fields that violate the bound by more than `z_tol`.
pub fn pairing_defect_per_face(
    mesh: &RadialMesh,
    z: &FaceField,
    u: &ScalarField,
    k: f64,
    z_tol: f64,
) -> Result<FaceField> {
    let sup = z.sup_abs();
    if sup > 1.0 + z_tol {
        return Err(Error::Certificate(format!(
            "pairing defect needs sup|z| <= 1 + {z_tol:.3e}, got {sup:.6e}"
        )));
    }
    let mut out = Vec::with_capacity(mesh.cells());
    for f in 0..mesh.cells() {
        let du = t_k(u[f + 1], k) - t_k(u[f], k);
        out.push((du.abs() - z[f] * du) * mesh.face_weights()[f]);
    }
    FaceField::new(mesh, out)
}

/// Total pairing defect over the mesh.
pub fn pairing_defect(
    mesh: &RadialMesh,
    z: &FaceField,
    u: &ScalarField,
    k: f64,
    z_tol: f64,
) -> Result<f64> {
    Ok(pairing_defect_per_face(mesh, z, u, k, z_tol)?.iter().sum())
}

/// Weighted total variation of the truncated field:
/// `sum_f |D T_k v| r_f^(N-1)` (the face width cancels against the measure).
pub fn weighted_tv(mesh: &RadialMesh, v: &ScalarField, k: f64) -> f64 {
    (0..mesh.cells())
        .map(|f| (t_k(v[f + 1], k) - t_k(v[f], k)).abs() * mesh.face_weights()[f])
        .sum()
}

/// Weighted L1 distance of two truncated nodal fields.
pub fn weighted_l1_tk_distance(mesh: &RadialMesh, a: &ScalarField, b: &ScalarField, k: f64) -> f64 {
    mesh.node_weights()
        .iter()
        .enumerate()
        .map(|(i, &w)| w * (t_k(a[i], k) - t_k(b[i], k)).abs())
        .sum()
}

/// Nodal divergence residual report.
#[derive(Debug, Clone)]
pub struct DivergenceReport {
    /// Residual per node; NaN where the node was excluded (ends, interface
    /// neighborhoods, masked dead-core nodes).
    pub nodal: Vec<f64>,
    /// Max of |residual| / (1 + |rhs|) over charged nodes.
    pub max_rel_residual: f64,
    /// Nodes excluded because they sit on or straddle an interface.
    pub interface_excluded: Vec<usize>,
    /// Nodes masked by the dead-core rule (u below threshold with h blowing
    /// up at zero).
    pub masked: Vec<usize>,
    /// Dead-core threshold that was applied.
    pub threshold: f64,
}

/// Residual of `-(1/r^(N-1)) d(r^(N-1) z)/dr = h(u) f` at interior nodes,
/// using the face differences of the flux. Nodes where `u` falls below the
/// dead-core threshold while h blows up at zero are masked (the equation is
/// only charged where the solution is positive); `interfaces` lists radii
/// whose neighborhoods carry the measure part and are excluded from the max.
pub fn divergence_residual(
    mesh: &RadialMesh,
    z: &FaceField,
    spec: &NonlinearitySpec,
    f: &DatumSpec,
    u: &ScalarField,
    interfaces: &[f64],
    deadcore_eps: Option<f64>,
) -> DivergenceReport {
    let m = mesh.cells();
    let nodes = mesh.nodes();
    let n_i32 = mesh.n_dim() as i32;
    let threshold = deadcore_eps.unwrap_or(1e-3 * u.max_finite().max(0.0));
    let w_flux: Vec<f64> = (0..m).map(|fi| mesh.face_weights()[fi] * z[fi]).collect();
    let mut nodal = vec![f64::NAN; nodes.len()];
    let mut interface_excluded = Vec::new();
    let mut masked = Vec::new();
    let mut max_rel = 0.0f64;
    for i in 1..m {
        let r = nodes[i];
        let near_interface = interfaces
            .iter()
            .any(|&rho| (r - rho).abs() < 0.51 * (mesh.cell_width(i - 1) + mesh.cell_width(i)));
        if near_interface {
            interface_excluded.push(i);
            continue;
        }
        if spec.h_at_zero().is_infinite() && u[i] <= threshold {
            masked.push(i);
            continue;
        }
        let dr = mesh.faces()[i] - mesh.faces()[i - 1];
        let lhs = -(w_flux[i] - w_flux[i - 1]) / (dr * r.powi(n_i32 - 1));
        let f_i = f.eval(r, mesh.n_dim());
        let rhs = if f_i == 0.0 { 0.0 } else { spec.eval_h_finite(u[i]) * f_i };
        let res = lhs - rhs;
        nodal[i] = res;
        max_rel = max_rel.max(res.abs() / (1.0 + rhs.abs()));
    }
    DivergenceReport { nodal, max_rel_residual: max_rel, interface_excluded, masked, threshold }
}

/// Discrete normal trace at r = R: the flux read from the last face with
/// linear extrapolation (the outward normal is +e_r, so this is the signed
/// boundary value of z).
pub fn boundary_flux(mesh: &RadialMesh, z: &FaceField) -> f64 {
    let m = mesh.cells();
    let (ra, rb) = (mesh.faces()[m - 2], mesh.faces()[m - 1]);
    let (za, zb) = (z[m - 2], z[m - 1]);
    zb + (zb - za) * (mesh.radius() - rb) / (rb - ra)
}

/// Summation-by-parts defect of the discrete Green identity
/// `sum_i v_i (div z)_i vol_i + sum_f z_f (Dv)_f r_f^(N-1) dr - v_M z_R R^(N-1)`.
///
/// With the nodal divergence defined through face-flux differences this
/// telescopes exactly; the return value is pure roundoff for any fields.
pub fn green_defect(mesh: &RadialMesh, z: &FaceField, v: &ScalarField, z_boundary: f64) -> f64 {
    let m = mesh.cells();
    let n_i32 = mesh.n_dim() as i32;
    let w_r = mesh.radius().powi(n_i32 - 1) * z_boundary;
    let flux = |f: usize| -> f64 {
        if f == m {
            w_r
        } else {
            mesh.face_weights()[f] * z[f]
        }
    };
    let mut total = 0.0;
    // node 0 sees only its right face (zero flux through the origin)
    total += v[0] * flux(0);
    for i in 1..=m {
        total += v[i] * (flux(i) - flux(i - 1));
    }
    for f in 0..m {
        total += (v[f + 1] - v[f]) * flux(f);
    }
    total -= v[m] * w_r;
    total
}

/// One local truncation norm over a subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTkNorm {
    pub lo: f64,
    pub hi: f64,
    pub k: f64,
    pub value: f64,
}

/// The uniform-in-p quantities: the transform-gradient norm, the global
/// truncation-power norms, the local plain truncation norms, their
/// p-independent total-variation versions, and the explicit a-priori bound
/// the transform norm is compared against.
#[derive(Debug, Clone)]
pub struct EstimateSuite {
    /// Discrete `int |grad Gamma_p(u)|^p`; `None` when the transform could
    /// not be built (envelope never small enough).
    pub gamma_p_norm: Option<f64>,
    /// Weighted TV of `Gamma_p(u)` plus its boundary trace term.
    pub bv_gamma_norm: Option<f64>,
    /// `(k, int |grad T_k^((sigma-1+p)/p)(u)|^p)` per truncation level.
    pub tk_power_norms: Vec<(f64, f64)>,
    /// Weighted TV of the same powers (p-independent form).
    pub bv_tk_power_norms: Vec<(f64, f64)>,
    /// Plain truncation norms restricted to subdomains.
    pub local_tk_norms: Vec<LocalTkNorm>,
    /// Explicit a-priori bound on the transform norm assembled from the
    /// datum integrals over the level regions of u.
    pub lemma_bound: Option<f64>,
}

fn face_grad_norm_p(mesh: &RadialMesh, v: &[f64], p: f64) -> f64 {
    (0..mesh.cells())
        .map(|f| {
            let dr = mesh.cell_width(f);
            let du = (v[f + 1] - v[f]) / dr;
            du.abs().powf(p) * mesh.face_weights()[f] * dr
        })
        .sum()
}

fn face_tv(mesh: &RadialMesh, v: &[f64]) -> f64 {
    (0..mesh.cells())
        .map(|f| (v[f + 1] - v[f]).abs() * mesh.face_weights()[f])
        .sum()
}

/// Assemble the estimate suite for one continuation step.
#[allow(clippy::too_many_arguments)]
pub fn estimate_suite(
    mesh: &RadialMesh,
    p: f64,
    u: &ScalarField,
    phi: Option<&PhiTriple>,
    k_list: &[f64],
    subdomains: &[(f64, f64)],
    spec: &NonlinearitySpec,
    f: &DatumSpec,
) -> Result<EstimateSuite> {
    let sigma = spec.sigma();
    let n_nodes = mesh.node_count();
    let n_i32 = mesh.n_dim() as i32;

    let (gamma_p_norm, bv_gamma_norm, lemma_bound) = match phi {
        Some(phi) => {
            let mut gamma_vals = Vec::with_capacity(n_nodes);
            for i in 0..n_nodes {
                gamma_vals.push(phi.gamma_p(p, u[i])?);
            }
            let norm = face_grad_norm_p(mesh, &gamma_vals, p);
            let trace = gamma_vals[n_nodes - 1].abs() * mesh.radius().powi(n_i32 - 1);
            let bv = face_tv(mesh, &gamma_vals) + trace;

            // Explicit bound: the tested identity pays c * max(1,s1)^(sigma-gamma)
            // on {u <= s1}, max h * Phi(s2) on the bridge region, and 1 beyond.
            let (s1, s2) = (phi.s1(), phi.s2());
            let mut f1 = 0.0;
            let mut f2 = 0.0;
            let mut f3 = 0.0;
            for i in 0..n_nodes {
                let w = mesh.node_weights()[i];
                let fv = f.eval(mesh.nodes()[i], mesh.n_dim());
                if !fv.is_finite() {
                    continue;
                }
                if u[i] <= s1 {
                    f1 += w * fv;
                } else if u[i] < s2 {
                    f2 += w * fv;
                } else {
                    f3 += w * fv;
                }
            }
            let samples = 256;
            let max_h_bridge = (0..=samples)
                .map(|j| s1 + (s2 - s1) * j as f64 / samples as f64)
                .map(|s| spec.eval_h_finite(s))
                .fold(0.0f64, f64::max);
            let head = spec.c() * s1.max(1.0).powf(sigma - spec.gamma());
            let bound = head * f1 + max_h_bridge * phi.phi(s2) * f2 + f3;
            (Some(norm), Some(bv), Some(bound))
        }
        None => (None, None, None),
    };

    let alpha = (sigma - 1.0 + p) / p;
    let mut tk_power_norms = Vec::with_capacity(k_list.len());
    let mut bv_tk_power_norms = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let vals: Vec<f64> = (0..n_nodes).map(|i| t_k(u[i].max(0.0), k).powf(alpha)).collect();
        tk_power_norms.push((k, face_grad_norm_p(mesh, &vals, p)));
        bv_tk_power_norms.push((k, face_tv(mesh, &vals)));
    }

    let mut local_tk_norms = Vec::new();
    for &(lo, hi) in subdomains {
        for &k in k_list {
            let vals: Vec<f64> = (0..n_nodes).map(|i| t_k(u[i], k)).collect();
            let value: f64 = (0..mesh.cells())
                .filter(|&fidx| {
                    let rf = mesh.faces()[fidx];
                    rf >= lo && rf <= hi
                })
                .map(|fidx| {
                    let dr = mesh.cell_width(fidx);
                    let du = (vals[fidx + 1] - vals[fidx]) / dr;
                    du.abs().powf(p) * mesh.face_weights()[fidx] * dr
                })
                .sum();
            local_tk_norms.push(LocalTkNorm { lo, hi, k, value });
        }
    }

    Ok(EstimateSuite {
        gamma_p_norm,
        bv_gamma_norm,
        tk_power_norms,
        bv_tk_power_norms,
        local_tk_norms,
        lemma_bound,
    })
}

/// How a continuation run behaved as p approached 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Converging,
    Blowup,
    Deadcore,
    Mixed,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Converging => "converging",
            Regime::Blowup => "blowup",
            Regime::Deadcore => "deadcore",
            Regime::Mixed => "mixed",
        }
    }
}

/// Thresholds for the regime classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeThresholds {
    /// Blow-up: the sup must grow by at least this factor across each of the
    /// last two steps.
    pub growth_factor: f64,
    /// Dead-core level as a fraction of each profile's sup.
    pub deadcore_eps_rel: f64,
    /// Minimal volume fraction of the dead region.
    pub area_frac: f64,
    /// Maximal relative change of the dead fraction between the last steps.
    pub deadcore_stability: f64,
    /// Converging: relative weighted-L1 change of T_k(u) below this.
    pub trend_tol: f64,
    /// Truncation level used by the trend check.
    pub trend_k: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            growth_factor: 2.0,
            deadcore_eps_rel: 1e-3,
            area_frac: 0.05,
            deadcore_stability: 0.25,
            trend_tol: 0.2,
            trend_k: 5.0,
        }
    }
}

fn dead_fraction(mesh: &RadialMesh, u: &ScalarField, eps: f64) -> f64 {
    let dead: f64 = mesh
        .node_weights()
        .iter()
        .enumerate()
        .filter(|(i, _)| u[*i] < eps)
        .map(|(_, &w)| w)
        .sum();
    dead / mesh.total_weight()
}

/// Classify a continuation run from its per-p profiles (ordered by
/// decreasing p). Blow-up is checked first, then dead core, then the
/// converging trend; anything else is mixed.
pub fn blowup_detector(
    mesh: &RadialMesh,
    profiles: &[&ScalarField],
    thresholds: &RegimeThresholds,
) -> Result<Regime> {
    let n = profiles.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "regime classification needs at least 3 completed steps, got {n}"
        )));
    }
    let sups: Vec<f64> = profiles.iter().map(|u| u.max_finite()).collect();
    let tiny = 1e-300;
    let g1 = sups[n - 2] / sups[n - 3].max(tiny);
    let g2 = sups[n - 1] / sups[n - 2].max(tiny);
    if g1 >= thresholds.growth_factor && g2 >= thresholds.growth_factor {
        return Ok(Regime::Blowup);
    }

    let frac_prev = dead_fraction(mesh, profiles[n - 2], thresholds.deadcore_eps_rel * sups[n - 2]);
    let frac_last = dead_fraction(mesh, profiles[n - 1], thresholds.deadcore_eps_rel * sups[n - 1]);
    let stable = (frac_last - frac_prev).abs()
        <= thresholds.deadcore_stability * frac_last.max(frac_prev).max(tiny);
    if frac_last > thresholds.area_frac && stable {
        return Ok(Regime::Deadcore);
    }

    let k = thresholds.trend_k;
    // Collapse to the zero solution is convergence the relative trend
    // cannot see (both iterates shrink together); call it once the
    // truncated mass is negligible against the saturated mass k |Omega|.
    let mass_last: f64 = mesh
        .node_weights()
        .iter()
        .enumerate()
        .map(|(i, &w)| w * t_k(profiles[n - 1][i], k).abs())
        .sum();
    if mass_last <= 1e-6 * k * mesh.total_weight() {
        return Ok(Regime::Converging);
    }
    let change = weighted_l1_tk_distance(mesh, profiles[n - 1], profiles[n - 2], k);
    let scale = mesh
        .node_weights()
        .iter()
        .enumerate()
        .map(|(i, &w)| w * t_k(profiles[n - 2][i], k).abs())
        .sum::<f64>()
        .max(tiny);
    if change / scale <= thresholds.trend_tol {
        return Ok(Regime::Converging);
    }
    Ok(Regime::Mixed)
}
