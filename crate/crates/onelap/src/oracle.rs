//! Closed-form radial solutions and certificates. These are the ground
//! truth the solver and the diagnostics are checked against: power profiles
//! with saturated flux, a flat core over a compactly supported datum, the
//! non-uniqueness pair sharing one vector field, the gamma-to-zero
//! degeneration, and the radial dual-norm certificate.

use crate::diagnostics::{boundary_flux, pairing_defect_per_face};
use crate::error::{Error, Result};
use crate::mesh::{FaceField, RadialMesh, ScalarField};
use crate::nonlinearity::{DatumSpec, NonlinearitySpec};
use std::io::Write;

/// Which branch of the boundary condition a solution satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryBranch {
    /// The truncated trace vanishes at r = R.
    TraceZero,
    /// The normal flux saturates: z(R) = -1.
    FluxMinusOne,
    /// The flux does not saturate and the trace is positive; the boundary
    /// condition holds through the weak trace of the truncated product,
    /// which has no pointwise discrete analogue. Recorded as a flag only.
    WeakTraceFlag,
}

impl BoundaryBranch {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryBranch::TraceZero => "trace-zero",
            BoundaryBranch::FluxMinusOne => "flux-minus-one",
            BoundaryBranch::WeakTraceFlag => "weak-trace-flag",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ProfileKind {
    /// `u = r^((1-q)/gamma)`, `z = -1`.
    Power { q: f64, gamma: f64 },
    /// `u = 1` on `(0, rho]`, 0 outside; `z = -r/rho` inside,
    /// `-(rho/r)^(N-1)` outside.
    FlatCore { rho: f64 },
    /// `u = r^(1-q)` on `(0, rho]`, constant `rho^(1-q)` outside.
    PlateauTail { q: f64, rho: f64 },
    /// `u = r^(1-q)` on `(0, rho]`, 0 outside.
    VanishingTail { q: f64, rho: f64 },
}

/// A closed-form radial solution paired with its vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSolution {
    kind: ProfileKind,
    n_dim: u32,
    radius: f64,
    z_scale: f64,
    boundary: BoundaryBranch,
    interfaces: Vec<f64>,
}

fn check_geometry(n_dim: u32, radius: f64) -> Result<()> {
    if n_dim < 2 {
        return Err(Error::Parameter(format!(
            "radial examples need dimension N >= 2, got {n_dim}"
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
    }
    Ok(())
}

fn check_q(q: f64, n_dim: u32) -> Result<()> {
    if !(q > 1.0 && q < n_dim as f64) {
        return Err(Error::Parameter(format!(
            "exponent must satisfy 1 < q < N; got q = {q}, N = {n_dim}"
        )));
    }
    Ok(())
}

/// Power-datum solution: `u(r) = r^((1-q)/gamma)` with saturated flux
/// `z = -1`, solving the radial equation with `f = (N-1) r^(-q)` and
/// `h(s) = s^(-gamma)` identically.
pub fn example_power(n_dim: u32, q: f64, gamma: f64, radius: f64) -> Result<RadialSolution> {
    check_geometry(n_dim, radius)?;
    check_q(q, n_dim)?;
    if !(gamma > 0.0) {
        return Err(Error::Parameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok(RadialSolution {
        kind: ProfileKind::Power { q, gamma },
        n_dim,
        radius,
        z_scale: 1.0,
        boundary: BoundaryBranch::FluxMinusOne,
        interfaces: Vec::new(),
    })
}

/// The data that the power solution solves: `h(s) = s^(-gamma)`,
/// `f = (N-1) r^(-q)`.
pub fn example_power_data(q: f64, gamma: f64) -> Result<(NonlinearitySpec, DatumSpec)> {
    Ok((NonlinearitySpec::power(1.0, gamma, 1.0)?, DatumSpec::radial_power(q, 1.0)?))
}

/// Flat-core solution over the compactly supported datum `f = N/rho` on
/// `r <= rho`: `u = 1` inside, dead outside.
pub fn example_flat(n_dim: u32, rho: f64, radius: f64) -> Result<RadialSolution> {
    check_geometry(n_dim, radius)?;
    if !(rho > 0.0 && rho < radius) {
        return Err(Error::Parameter(format!(
            "flat example requires 0 < rho < R; got rho = {rho}, R = {radius}"
        )));
    }
    Ok(RadialSolution {
        kind: ProfileKind::FlatCore { rho },
        n_dim,
        radius,
        z_scale: 1.0,
        boundary: BoundaryBranch::TraceZero,
        interfaces: vec![rho],
    })
}

/// Data for the flat-core solution (`gamma = 1`).
pub fn example_flat_data(rho: f64) -> Result<(NonlinearitySpec, DatumSpec)> {
    Ok((NonlinearitySpec::power(1.0, 1.0, 1.0)?, DatumSpec::flat_ball(rho, 1.0)?))
}

/// The non-uniqueness pair (`gamma = 1`): over a power datum supported in
/// `r <= rho`, both the plateau continuation and the vanishing continuation
/// solve the problem with the same vector field.
pub fn example_nonunique(
    n_dim: u32,
    q: f64,
    rho: f64,
    radius: f64,
) -> Result<(RadialSolution, RadialSolution)> {
    check_geometry(n_dim, radius)?;
    check_q(q, n_dim)?;
    if !(rho > 0.0 && rho < radius) {
        return Err(Error::Parameter(format!(
            "nonunique example requires 0 < rho < R; got rho = {rho}, R = {radius}"
        )));
    }
    let u = RadialSolution {
        kind: ProfileKind::PlateauTail { q, rho },
        n_dim,
        radius,
        z_scale: 1.0,
        boundary: BoundaryBranch::WeakTraceFlag,
        interfaces: vec![rho],
    };
    let v = RadialSolution {
        kind: ProfileKind::VanishingTail { q, rho },
        n_dim,
        radius,
        z_scale: 1.0,
        boundary: BoundaryBranch::TraceZero,
        interfaces: vec![rho],
    };
    Ok((u, v))
}

/// Data for the non-uniqueness pair (`gamma = 1`).
pub fn example_nonunique_data(q: f64, rho: f64) -> Result<(NonlinearitySpec, DatumSpec)> {
    Ok((NonlinearitySpec::power(1.0, 1.0, 1.0)?, DatumSpec::radial_power_ball(q, rho, 1.0)?))
}

impl RadialSolution {
    pub fn n_dim(&self) -> u32 {
        self.n_dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn boundary(&self) -> BoundaryBranch {
        self.boundary
    }

    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    /// Profile value; `+inf` at r = 0 for the unbounded profiles.
    pub fn u(&self, r: f64) -> f64 {
        match &self.kind {
            ProfileKind::Power { q, gamma } => r.powf((1.0 - q) / gamma),
            ProfileKind::FlatCore { rho } => {
                if r <= *rho {
                    1.0
                } else {
                    0.0
                }
            }
            ProfileKind::PlateauTail { q, rho } => {
                if r <= *rho {
                    r.powf(1.0 - q)
                } else {
                    rho.powf(1.0 - q)
                }
            }
            ProfileKind::VanishingTail { q, rho } => {
                if r <= *rho {
                    r.powf(1.0 - q)
                } else {
                    0.0
                }
            }
        }
    }

    /// Radial component of the vector field.
    pub fn z_radial(&self, r: f64) -> f64 {
        let n = self.n_dim as i32;
        let base = match &self.kind {
            ProfileKind::Power { .. } => -1.0,
            ProfileKind::FlatCore { rho } => {
                if r <= *rho {
                    -r / rho
                } else {
                    -(rho / r).powi(n - 1)
                }
            }
            ProfileKind::PlateauTail { rho, .. } | ProfileKind::VanishingTail { rho, .. } => {
                if r <= *rho {
                    -1.0
                } else {
                    -(rho / r).powi(n - 1)
                }
            }
        };
        self.z_scale * base
    }

    /// Scale the vector field (for perturbation studies); the sup bound
    /// |z| <= 1 must survive.
    pub fn scale_z(&mut self, factor: f64) -> Result<()> {
        if !(factor.abs() <= 1.0) {
            return Err(Error::Parameter(format!(
                "z scaling must keep |z| <= 1, got factor {factor}"
            )));
        }
        self.z_scale *= factor;
        Ok(())
    }

    pub fn u_on(&self, mesh: &RadialMesh) -> ScalarField {
        ScalarField::from_fn(mesh, |r| self.u(r))
    }

    pub fn z_on_faces(&self, mesh: &RadialMesh) -> FaceField {
        FaceField::from_fn(mesh, |r| self.z_radial(r))
    }

    /// CSV rows `r,u,z_radial`.
    pub fn write_csv(&self, mesh: &RadialMesh, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "r,u,z_radial")?;
        for &r in mesh.nodes() {
            writeln!(w, "{r:.16e},{:.16e},{:.16e}", self.u(r), self.z_radial(r))?;
        }
        Ok(())
    }
}

/// Report of [`residual_check`].
#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// `(node index, r, residual)` at every charged node.
    pub residuals: Vec<(usize, f64, f64)>,
    /// Max of |residual| / (1 + |rhs|) over charged nodes.
    pub max_rel_residual: f64,
    /// Total pairing defect at the requested truncation level.
    pub pairing_defect: f64,
    /// Largest per-face defect.
    pub max_face_defect: f64,
    pub boundary: BoundaryBranch,
    /// Discrete flux at r = R (extrapolated from the last faces).
    pub boundary_flux: f64,
    /// Interface nodes excluded from the residual max.
    pub excluded_nodes: Vec<usize>,
}

/// Check a closed-form solution against its data on a mesh: (a) nodal
/// residual of the radial divergence equation via quadratic-exact
/// three-point stencils (one-sided next to interfaces, the interface node
/// itself excluded), (b) the pairing defect per face, (c) the boundary
/// branch and the discrete flux at R.
pub fn residual_check(
    sol: &RadialSolution,
    spec: &NonlinearitySpec,
    f: &DatumSpec,
    mesh: &RadialMesh,
    k: f64,
) -> Result<ResidualReport> {
    if mesh.n_dim() != sol.n_dim || (mesh.radius() - sol.radius).abs() > 1e-12 {
        return Err(Error::Parameter(
            "residual_check: mesh geometry does not match the solution".into(),
        ));
    }
    f.validate_for(mesh.n_dim(), mesh.radius())?;
    let nodes = mesh.nodes();
    let m = mesh.cells();
    let n_i32 = mesh.n_dim() as i32;
    // nodal weighted flux W = r^(N-1) z(r)
    let w_flux: Vec<f64> =
        nodes.iter().map(|&r| r.powi(n_i32 - 1) * sol.z_radial(r)).collect();

    let crosses = |a: f64, b: f64| -> bool {
        sol.interfaces.iter().any(|&rho| (a - rho) * (b - rho) < 0.0)
    };
    let on_interface = |i: usize| -> bool {
        let width = if i == 0 {
            mesh.cell_width(0)
        } else if i == m {
            mesh.cell_width(m - 1)
        } else {
            0.5 * (mesh.cell_width(i - 1) + mesh.cell_width(i))
        };
        sol.interfaces.iter().any(|&rho| (nodes[i] - rho).abs() < 0.5 * width)
    };

    // three-point Lagrange derivative, exact for quadratics on any spacing
    let deriv3 = |i0: usize, i1: usize, i2: usize, at: usize| -> f64 {
        let (x0, x1, x2) = (nodes[i0], nodes[i1], nodes[i2]);
        let (y0, y1, y2) = (w_flux[i0], w_flux[i1], w_flux[i2]);
        let x = nodes[at];
        y0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };

    let mut residuals = Vec::new();
    let mut excluded = Vec::new();
    let mut max_rel = 0.0f64;
    for i in 1..m {
        if on_interface(i) {
            excluded.push(i);
            continue;
        }
        let r = nodes[i];
        let centered_ok = !crosses(nodes[i - 1], nodes[i + 1]);
        let dw = if centered_ok {
            deriv3(i - 1, i, i + 1, i)
        } else if !crosses(nodes[i.saturating_sub(2)], nodes[i]) && i >= 2 {
            deriv3(i - 2, i - 1, i, i)
        } else if i + 2 <= m && !crosses(nodes[i], nodes[i + 2]) {
            deriv3(i, i + 1, i + 2, i)
        } else {
            excluded.push(i);
            continue;
        };
        let lhs = -dw / r.powi(n_i32 - 1);
        let f_i = f.eval(r, mesh.n_dim());
        let u_i = sol.u(r);
        let rhs = if f_i == 0.0 {
            0.0
        } else {
            match spec.eval_h(u_i)? {
                crate::nonlinearity::HValue::Finite(h) => h * f_i,
                crate::nonlinearity::HValue::Infinite => {
                    // charged only where the solution is positive
                    excluded.push(i);
                    continue;
                }
            }
        };
        let res = lhs - rhs;
        residuals.push((i, r, res));
        max_rel = max_rel.max(res.abs() / (1.0 + rhs.abs()));
    }

    let u = sol.u_on(mesh);
    let z = sol.z_on_faces(mesh);
    let defects = pairing_defect_per_face(mesh, &z, &u, k, 1e-9)?;
    let pairing_total: f64 = defects.iter().sum();
    let max_face = defects.iter().cloned().fold(0.0f64, f64::max);
    let flux_r = boundary_flux(mesh, &z);

    Ok(ResidualReport {
        residuals,
        max_rel_residual: max_rel,
        pairing_defect: pairing_total,
        max_face_defect: max_face,
        boundary: sol.boundary,
        boundary_flux: flux_r,
        excluded_nodes: excluded,
    })
}

/// Profiles of the power solution along a decreasing sequence of gamma,
/// exhibiting interior blow-up and exterior vanishing around r = 1.
#[derive(Debug, Clone)]
pub struct DegenerationProfiles {
    pub gammas: Vec<f64>,
    /// One nodal profile per gamma, on the mesh the profiles were built on.
    pub profiles: Vec<ScalarField>,
    nodes: Vec<f64>,
}

/// Evaluate `u_gamma(r) = r^((1-q)/gamma)` on the mesh for each gamma.
/// Requires R > 1 so both the blow-up and the vanishing zones are visible.
pub fn gamma_to_zero_profile(
    q: f64,
    mesh: &RadialMesh,
    gammas: &[f64],
) -> Result<DegenerationProfiles> {
    if !(mesh.radius() > 1.0) {
        return Err(Error::Parameter(format!(
            "degeneration study requires R > 1, got R = {}",
            mesh.radius()
        )));
    }
    if !(q > 1.0) {
        return Err(Error::Parameter(format!("q must exceed 1, got {q}")));
    }
    if gammas.is_empty() || gammas.windows(2).any(|w| w[1] >= w[0]) || gammas[0] <= 0.0 {
        return Err(Error::Parameter("gamma sequence must be positive and decreasing".into()));
    }
    let profiles = gammas
        .iter()
        .map(|&g| ScalarField::from_fn(mesh, |r| r.powf((1.0 - q) / g)))
        .collect();
    Ok(DegenerationProfiles {
        gammas: gammas.to_vec(),
        profiles,
        nodes: mesh.nodes().to_vec(),
    })
}

/// Outcome of the degeneration thresholds.
#[derive(Debug, Clone, Copy)]
pub struct DegenerationReport {
    /// For the smallest gamma: u >= 1/tol on every node r <= 1 - tol.
    pub inner_blowup: bool,
    /// For the smallest gamma: u <= tol on every node r >= 1 + tol.
    pub outer_vanishing: bool,
    /// Profiles steepen monotonically in the sequence at every checked node.
    pub monotone_trend: bool,
}

impl DegenerationReport {
    pub fn holds(&self) -> bool {
        self.inner_blowup && self.outer_vanishing && self.monotone_trend
    }
}

impl DegenerationProfiles {
    /// Check the inner-blowup / outer-vanishing thresholds at tolerance
    /// `tol` on the last (smallest-gamma) profile, and the pointwise trend
    /// across the sequence.
    pub fn check(&self, tol: f64) -> DegenerationReport {
        let last = &self.profiles[self.profiles.len() - 1];
        let mut inner = true;
        let mut outer = true;
        for (i, &r) in self.nodes.iter().enumerate() {
            if r > 0.0 && r <= 1.0 - tol && !(last[i] >= 1.0 / tol) {
                inner = false;
            }
            if r >= 1.0 + tol && !(last[i] <= tol) {
                outer = false;
            }
        }
        let mut monotone = true;
        for w in 0..self.profiles.len() - 1 {
            let (a, b) = (&self.profiles[w], &self.profiles[w + 1]);
            for (i, &r) in self.nodes.iter().enumerate() {
                if r > 0.0 && r < 1.0 && b[i] < a[i] - 1e-12 {
                    monotone = false;
                }
                if r > 1.0 && b[i] > a[i] + 1e-12 {
                    monotone = false;
                }
            }
        }
        DegenerationReport { inner_blowup: inner, outer_vanishing: outer, monotone_trend: monotone }
    }
}

/// Radial dual-norm certificate: `sup_{r > 0} G(r) / r^(N-1)` with
/// `G(r) = int_0^r g(t) t^(N-1) dt` accumulated by the trapezoid rule on the
/// weighted integrand. When g blows up at the origin the weighted integrand
/// at r = 0 is filled by linear extrapolation from the first two interior
/// nodes (the integrable-singularity convention).
pub fn radial_dual_norm(g: &ScalarField, mesh: &RadialMesh) -> f64 {
    let nodes = mesh.nodes();
    let n_i32 = mesh.n_dim() as i32;
    let mut w: Vec<f64> =
        nodes.iter().zip(g.iter()).map(|(&r, &v)| v * r.powi(n_i32 - 1)).collect();
    if !w[0].is_finite() {
        let (r1, r2) = (nodes[1], nodes[2]);
        let extrap = w[1] - (w[2] - w[1]) * r1 / (r2 - r1);
        w[0] = extrap.max(0.0);
    }
    let mut acc = 0.0;
    let mut sup = 0.0f64;
    for i in 1..nodes.len() {
        acc += 0.5 * (w[i] + w[i - 1]) * (nodes[i] - nodes[i - 1]);
        sup = sup.max(acc / nodes[i].powi(n_i32 - 1));
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::weighted_tv;
    use crate::mesh::Grading;

    fn mesh(n: u32, m: usize) -> RadialMesh {
        RadialMesh::assemble(n, 1.0, m, Grading::Uniform).unwrap()
    }

    #[test]
    fn power_profile_values() {
        let sol = example_power(3, 2.0, 1.0, 1.0).unwrap();
        assert!((sol.u(0.5) - 2.0).abs() < 1e-15);
        // (N-1)/r - f h(u) = 4 - (2/0.25) * 0.5 = 0
        let f = 2.0 / 0.25f64;
        let lhs = 2.0 / 0.5;
        assert_eq!(lhs - f * sol.u(0.5).powf(-1.0), 0.0);
        let flat = example_power(2, 1.5, 0.5, 1.0).unwrap();
        assert_eq!(flat.u(1.0), 1.0);
        assert!(example_power(2, 2.5, 1.0, 1.0).is_err());
        assert!(example_power(1, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn power_tends_to_one_as_q_drops() {
        let sol = example_power(2, 1.0 + 1e-6, 1.0, 1.0).unwrap();
        for r in [0.05, 0.3, 0.9] {
            assert!((sol.u(r) - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn power_residual_to_roundoff() {
        for (n, q, gamma) in [(2, 1.5, 1.0), (3, 2.5, 0.5), (3, 1.1, 2.0)] {
            let sol = example_power(n, q, gamma, 1.0).unwrap();
            let (spec, f) = example_power_data(q, gamma).unwrap();
            let mesh = mesh(n, 128);
            let rep = residual_check(&sol, &spec, &f, &mesh, 2.0).unwrap();
            assert!(
                rep.max_rel_residual < 1e-10,
                "residual {} for N={n} q={q} gamma={gamma}",
                rep.max_rel_residual
            );
            assert!(rep.pairing_defect.abs() < 1e-12);
            assert_eq!(rep.boundary_flux, -1.0);
            assert_eq!(rep.boundary, BoundaryBranch::FluxMinusOne);
        }
    }

    #[test]
    fn flat_core_values() {
        let sol = example_flat(2, 0.5, 1.0).unwrap();
        assert_eq!(sol.z_radial(0.25), -0.5);
        assert_eq!(sol.z_radial(0.5), -1.0); // saturated at the interface
        assert_eq!(sol.z_radial(1.0), -0.5); // -(rho/R)^(N-1)
        assert_eq!(sol.boundary(), BoundaryBranch::TraceZero);
        assert!(example_flat(2, 1.5, 1.0).is_err());
    }

    #[test]
    fn flat_core_divergence_identity() {
        // N=2: the weighted flux is quadratic inside and constant outside,
        // so the stencils are exact on both sides.
        let sol = example_flat(2, 0.5, 1.0).unwrap();
        let (spec, f) = example_flat_data(0.5).unwrap();
        let mesh = RadialMesh::assemble(2, 1.0, 129, Grading::Uniform).unwrap();
        let rep = residual_check(&sol, &spec, &f, &mesh, 2.0).unwrap();
        assert!(rep.max_rel_residual < 1e-12, "residual {}", rep.max_rel_residual);
        // interface sits on a face: the jump pairs with a saturated flux
        assert!(rep.max_face_defect < 1e-12, "face defect {}", rep.max_face_defect);
    }

    #[test]
    fn nonunique_pair_shares_field() {
        let (u, v) = example_nonunique(2, 1.5, 0.5, 1.0).unwrap();
        let rho_pow = 0.5f64.powf(-0.5);
        assert!((u.u(0.5) - rho_pow).abs() < 1e-15);
        assert!((v.u(0.5) - rho_pow).abs() < 1e-15);
        assert!((u.u(1.0) - rho_pow).abs() < 1e-15);
        assert_eq!(v.u(1.0), 0.0);
        assert_eq!(u.boundary(), BoundaryBranch::WeakTraceFlag);
        assert_eq!(v.boundary(), BoundaryBranch::TraceZero);
        for r in [0.2, 0.5, 0.7, 1.0] {
            assert_eq!(u.z_radial(r), v.z_radial(r));
        }

        let (spec, f) = example_nonunique_data(1.5, 0.5).unwrap();
        let mesh = RadialMesh::assemble(2, 1.0, 129, Grading::Uniform).unwrap();
        for sol in [&u, &v] {
            let rep = residual_check(sol, &spec, &f, &mesh, 2.0).unwrap();
            assert!(rep.max_rel_residual < 1e-10, "residual {}", rep.max_rel_residual);
            assert!(rep.max_face_defect < 1e-12);
        }
    }

    #[test]
    fn perturbed_field_defect_is_linear() {
        let mut sol = example_power(2, 1.5, 1.0, 1.0).unwrap();
        sol.scale_z(0.9).unwrap();
        let (spec, f) = example_power_data(1.5, 1.0).unwrap();
        let mesh = mesh(2, 128);
        let k = 2.0;
        let rep = residual_check(&sol, &spec, &f, &mesh, k).unwrap();
        let tv = weighted_tv(&mesh, &sol.u_on(&mesh), k);
        assert!((rep.pairing_defect - 0.1 * tv).abs() < 1e-12 * tv.max(1.0));
        assert!(sol.scale_z(1.5).is_err());
    }

    #[test]
    fn degeneration_values() {
        let mesh = RadialMesh::assemble(2, 2.0, 200, Grading::Uniform).unwrap();
        let prof = gamma_to_zero_profile(1.5, &mesh, &[0.2, 0.1, 0.01]).unwrap();
        let i_one = mesh.nodes().iter().position(|&r| (r - 1.0).abs() < 1e-12).unwrap();
        for p in &prof.profiles {
            assert!((p[i_one] - 1.0).abs() < 1e-12);
        }
        let last = &prof.profiles[2];
        let i09 = mesh.nodes().iter().position(|&r| (r - 0.9).abs() < 1e-9).unwrap();
        let i11 = mesh.nodes().iter().position(|&r| (r - 1.1).abs() < 1e-9).unwrap();
        assert!((last[i09] - 0.9f64.powf(-50.0)).abs() / 0.9f64.powf(-50.0) < 1e-12);
        assert!((last[i11] - 1.1f64.powf(-50.0)).abs() / 1.1f64.powf(-50.0) < 1e-12);
        assert!((0.9f64.powf(-50.0) - 194.0).abs() < 0.1);
        assert!((1.1f64.powf(-50.0) - 0.00852).abs() < 1e-4);

        let small = RadialMesh::assemble(2, 1.0, 16, Grading::Uniform).unwrap();
        assert!(gamma_to_zero_profile(1.5, &small, &[0.1]).is_err());
    }

    #[test]
    fn dual_norm_saturation_and_scaling() {
        for n in [2u32, 3] {
            let m = mesh(n, 256);
            let g = ScalarField::from_fn(&m, |r| {
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    (n as f64 - 1.0) / r
                }
            });
            let norm = radial_dual_norm(&g, &m);
            assert!((norm - 1.0).abs() < 1e-9, "N={n}: norm = {norm}");
        }
        let m2 = mesh(2, 128);
        assert_eq!(radial_dual_norm(&ScalarField::zeros(&m2), &m2), 0.0);
        let c = 3.0;
        let g = ScalarField::constant(&m2, c);
        let norm = radial_dual_norm(&g, &m2);
        assert!((norm - c * 1.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_power_tv_is_mesh_stable() {
        let sol = example_power(2, 1.5, 2.0, 1.0).unwrap();
        let sigma = 2.0;
        let k = 2.0f64;
        let tv_on = |m: usize| {
            let mesh = mesh(2, m);
            let u = sol.u_on(&mesh);
            let mut vals = ScalarField::zeros(&mesh);
            for i in 0..mesh.node_count() {
                vals[i] = crate::truncations::t_k(u[i], k).powf(sigma);
            }
            // level above the powered range: the inner clamp is the identity
            weighted_tv(&mesh, &vals, k.powf(sigma) + 1.0)
        };
        let coarse = tv_on(128);
        let fine = tv_on(256);
        assert!(coarse.is_finite() && fine.is_finite());
        assert!((coarse / fine - 1.0).abs() < 0.02, "TV ratio {}", coarse / fine);
    }
}
