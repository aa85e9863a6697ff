//! Residual operators for the coupled five-field system.
//!
//! All residual formulas are generic over [`Scalar`] so the same code
//! produces plain `f64` residual values (sampling, verification) and
//! tape-backed adjoint seeds (training).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derivkit::{Jet2, Scalar};
use crate::network::FieldState;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("coefficient {name}(T) = {value} is not positive at T = {t}")]
    NonPositiveCoefficient { name: &'static str, value: f64, t: f64 },
    #[error("gauge residual over an empty point set")]
    EmptyGauge,
    #[error("gauge weights/values length mismatch: {n_values} values, {n_weights} weights")]
    GaugeLengthMismatch { n_values: usize, n_weights: usize },
    #[error("interface residual requested off the interface: |g| = {g_abs:.3e}")]
    PointOffInterface { g_abs: f64 },
}

/// Which side of the interface a point lies on. `g >= 0` is `Plus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

/// Constant coefficient triple for one subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffSet {
    pub nu: f64,
    pub alpha: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Constant,
    LinearInT,
    Piecewise,
}

/// Coefficient law: constant, affine in temperature, or piecewise constant
/// across the interface. `resolve` flattens it to per-side constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientLaw {
    pub kind: LawKind,
    pub minus: CoeffSet,
    /// Only meaningful for `Piecewise`; mirrors `minus` otherwise.
    pub plus: CoeffSet,
    /// Slopes for `LinearInT`: nu(T) = nu0 (1 + beta_nu T).
    pub beta_nu: f64,
    pub beta_alpha: f64,
    pub rho: f64,
}

impl CoefficientLaw {
    pub fn constant(nu: f64, alpha: f64, sigma: f64, rho: f64) -> Self {
        let c = CoeffSet { nu, alpha, sigma };
        CoefficientLaw { kind: LawKind::Constant, minus: c, plus: c, beta_nu: 0.0, beta_alpha: 0.0, rho }
    }

    pub fn linear_in_t(nu0: f64, alpha0: f64, sigma: f64, rho: f64, beta_nu: f64, beta_alpha: f64) -> Self {
        let c = CoeffSet { nu: nu0, alpha: alpha0, sigma };
        CoefficientLaw { kind: LawKind::LinearInT, minus: c, plus: c, beta_nu, beta_alpha, rho }
    }

    pub fn piecewise(minus: CoeffSet, plus: CoeffSet, rho: f64) -> Self {
        CoefficientLaw { kind: LawKind::Piecewise, minus, plus, beta_nu: 0.0, beta_alpha: 0.0, rho }
    }

    /// Flatten to the constants in effect on one side of the interface.
    pub fn resolve(&self, side: Side) -> ResolvedLaw {
        let c = match (self.kind, side) {
            (LawKind::Piecewise, Side::Plus) => self.plus,
            _ => self.minus,
        };
        ResolvedLaw {
            nu0: c.nu,
            alpha0: c.alpha,
            sigma: c.sigma,
            beta_nu: self.beta_nu,
            beta_alpha: self.beta_alpha,
            rho: self.rho,
        }
    }
}

/// Per-side coefficient constants; nu(T) = nu0 (1 + beta_nu T), same for alpha.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedLaw {
    pub nu0: f64,
    pub alpha0: f64,
    pub sigma: f64,
    pub beta_nu: f64,
    pub beta_alpha: f64,
    pub rho: f64,
}

impl ResolvedLaw {
    pub fn nu_at(&self, t: f64) -> f64 {
        self.nu0 * (1.0 + self.beta_nu * t)
    }

    pub fn alpha_at(&self, t: f64) -> f64 {
        self.alpha0 * (1.0 + self.beta_alpha * t)
    }
}

/// Electric body force f_e = gamma (1 + beta_e T) (-grad phi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyForceParams {
    pub gamma: f64,
    pub beta_e: f64,
}

/// Interface Gamma = { g = 0 } with g(x, y) = a x + b y + c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl InterfaceSpec {
    pub fn g(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }

    pub fn side(&self, x: f64, y: f64) -> Side {
        if self.g(x, y) < 0.0 { Side::Minus } else { Side::Plus }
    }

    /// Unit normal pointing from the minus into the plus subdomain.
    pub fn unit_normal(&self) -> [f64; 2] {
        let len = (self.a * self.a + self.b * self.b).sqrt();
        [self.a / len, self.b / len]
    }
}

/// Strong-form residuals in channel order (continuity, x-momentum,
/// y-momentum, potential, temperature).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualVector {
    pub continuity: f64,
    pub momentum_x: f64,
    pub momentum_y: f64,
    pub potential: f64,
    pub temperature: f64,
}

impl ResidualVector {
    pub fn as_array(&self) -> [f64; 5] {
        [self.continuity, self.momentum_x, self.momentum_y, self.potential, self.temperature]
    }
}

/// All five operator terms before source subtraction. The variable-coefficient
/// diffusion is expanded: div(nu grad u) = nu'(T) grad T . grad u + nu(T) lap u,
/// which only needs the five jet slots (no mixed second derivative).
pub fn operator_terms<S: Scalar>(
    s: &FieldState<S>,
    law: &ResolvedLaw,
    bf: &BodyForceParams,
) -> [S; 5] {
    let (u, v, p, phi, t) = (s.u, s.v, s.p, s.phi, s.temp);

    let r_c = u.dx + v.dy;

    let nu_p = law.nu0 * law.beta_nu;
    let alpha_p = law.alpha0 * law.beta_alpha;
    let nu = t.val * nu_p + law.nu0;
    let alpha = t.val * alpha_p + law.alpha0;
    // -f_e = gamma (1 + beta_e T) grad phi
    let fe_scale = (t.val * bf.beta_e + 1.0) * bf.gamma;

    let r_u = (u.val * u.dx + v.val * u.dy) * law.rho + p.dx
        - (t.dx * u.dx + t.dy * u.dy) * nu_p
        - nu * (u.dxx + u.dyy)
        + fe_scale * phi.dx;
    let r_v = (u.val * v.dx + v.val * v.dy) * law.rho + p.dy
        - (t.dx * v.dx + t.dy * v.dy) * nu_p
        - nu * (v.dxx + v.dyy)
        + fe_scale * phi.dy;

    let r_phi = (phi.dxx + phi.dyy) * (-law.sigma);

    let r_t = u.val * t.dx + v.val * t.dy
        - (t.dx * t.dx + t.dy * t.dy) * alpha_p
        - alpha * (t.dxx + t.dyy);

    [r_c, r_u, r_v, r_phi, r_t]
}

fn check_positive(law: &ResolvedLaw, t: f64) -> Result<(), PhysicsError> {
    let nu = law.nu_at(t);
    if nu <= 0.0 {
        return Err(PhysicsError::NonPositiveCoefficient { name: "nu", value: nu, t });
    }
    let alpha = law.alpha_at(t);
    if alpha <= 0.0 {
        return Err(PhysicsError::NonPositiveCoefficient { name: "alpha", value: alpha, t });
    }
    Ok(())
}

pub fn continuity_residual(s: &FieldState<f64>) -> f64 {
    s.u.dx + s.v.dy
}

pub fn momentum_residual(
    s: &FieldState<f64>,
    law: &ResolvedLaw,
    bf: &BodyForceParams,
    source: [f64; 2],
) -> Result<(f64, f64), PhysicsError> {
    check_positive(law, s.temp.val)?;
    let terms = operator_terms(s, law, bf);
    Ok((terms[1] - source[0], terms[2] - source[1]))
}

pub fn potential_residual(s: &FieldState<f64>, law: &ResolvedLaw, source: f64) -> f64 {
    -law.sigma * (s.phi.dxx + s.phi.dyy) - source
}

pub fn temperature_residual(
    s: &FieldState<f64>,
    law: &ResolvedLaw,
    source: f64,
) -> Result<f64, PhysicsError> {
    check_positive(law, s.temp.val)?;
    let terms = operator_terms(s, law, &BodyForceParams { gamma: 0.0, beta_e: 0.0 });
    Ok(terms[4] - source)
}

/// Full strong-form residual with sources subtracted. `sources` uses the
/// channel order of [`ResidualVector`]; the continuity entry is ignored
/// (that equation is source-free).
pub fn full_operator(
    s: &FieldState<f64>,
    law: &ResolvedLaw,
    bf: &BodyForceParams,
    sources: [f64; 5],
) -> Result<ResidualVector, PhysicsError> {
    check_positive(law, s.temp.val)?;
    let terms = operator_terms(s, law, bf);
    Ok(ResidualVector {
        continuity: terms[0],
        momentum_x: terms[1] - sources[1],
        momentum_y: terms[2] - sources[2],
        potential: terms[3] - sources[3],
        temperature: terms[4] - sources[4],
    })
}

/// Euclidean norm of the five residual channels; drives adaptive sampling.
pub fn residual_indicator(r: &ResidualVector) -> f64 {
    let a = r.as_array();
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Masked Dirichlet mismatches, in field order. Only fields with
/// `mask[i] == true` contribute an entry.
pub fn boundary_residual(s: &FieldState<f64>, data: [f64; 5], mask: [bool; 5]) -> Vec<f64> {
    let vals = [s.u.val, s.v.val, s.p.val, s.phi.val, s.temp.val];
    vals.iter()
        .zip(data.iter())
        .zip(mask.iter())
        .filter(|&(_, &m)| m)
        .map(|((&v, &d), _)| v - d)
        .collect()
}

/// Weighted-mean pressure gauge residual. Weights must sum to 1 for the
/// residual to be the quadrature mean; this function just takes the dot
/// product in the given order.
pub fn gauge_residual(p_values: &[f64], weights: &[f64]) -> Result<f64, PhysicsError> {
    if p_values.is_empty() {
        return Err(PhysicsError::EmptyGauge);
    }
    if p_values.len() != weights.len() {
        return Err(PhysicsError::GaugeLengthMismatch {
            n_values: p_values.len(),
            n_weights: weights.len(),
        });
    }
    Ok(p_values.iter().zip(weights).map(|(p, w)| p * w).sum())
}

/// Flux-jump channels across the interface: normal diffusive fluxes of
/// u, v, T, phi on the plus side minus the minus side, minus the prescribed
/// jumps (same order). Generic so it can seed the tape.
pub fn interface_flux_terms<S: Scalar>(
    s_minus: &FieldState<S>,
    s_plus: &FieldState<S>,
    normal: [f64; 2],
    law_minus: &ResolvedLaw,
    law_plus: &ResolvedLaw,
) -> [S; 4] {
    let [nx, ny] = normal;
    let flux = |f_m: Jet2<S>, f_p: Jet2<S>, k_m: f64, k_p: f64| {
        (f_p.dx * nx + f_p.dy * ny) * k_p - (f_m.dx * nx + f_m.dy * ny) * k_m
    };
    // Piecewise coefficients are constant per side; evaluate at the side's T
    // value anyway so temperature-dependent laws stay well-defined here.
    let nu_m = law_minus.nu_at(s_minus.temp.val.value());
    let nu_p = law_plus.nu_at(s_plus.temp.val.value());
    let alpha_m = law_minus.alpha_at(s_minus.temp.val.value());
    let alpha_p = law_plus.alpha_at(s_plus.temp.val.value());
    [
        flux(s_minus.u, s_plus.u, nu_m, nu_p),
        flux(s_minus.v, s_plus.v, nu_m, nu_p),
        flux(s_minus.temp, s_plus.temp, alpha_m, alpha_p),
        flux(s_minus.phi, s_plus.phi, law_minus.sigma, law_plus.sigma),
    ]
}

/// Nine interface residual channels at a point on Gamma: five value jumps
/// (u, v, p, phi, T) followed by four flux jumps minus the prescribed data
/// (order: nu grad u . n, nu grad v . n, alpha grad T . n, sigma grad phi . n).
///
/// A single network makes the value jumps structurally zero when both states
/// come from the same forward pass; they are kept so the residual is complete
/// for any pair of side states.
pub fn interface_residual(
    s_minus: &FieldState<f64>,
    s_plus: &FieldState<f64>,
    spec: &InterfaceSpec,
    law_minus: &ResolvedLaw,
    law_plus: &ResolvedLaw,
    prescribed: [f64; 4],
    at: [f64; 2],
) -> Result<[f64; 9], PhysicsError> {
    let g = spec.g(at[0], at[1]);
    if g.abs() >= 1e-12 {
        return Err(PhysicsError::PointOffInterface { g_abs: g.abs() });
    }
    let mut out = [0.0; 9];
    let vm = [s_minus.u.val, s_minus.v.val, s_minus.p.val, s_minus.phi.val, s_minus.temp.val];
    let vp = [s_plus.u.val, s_plus.v.val, s_plus.p.val, s_plus.phi.val, s_plus.temp.val];
    for i in 0..5 {
        out[i] = vp[i] - vm[i];
    }
    let flux = interface_flux_terms(s_minus, s_plus, spec.unit_normal(), law_minus, law_plus);
    for i in 0..4 {
        out[5 + i] = flux[i] - prescribed[i];
    }
    Ok(out)
}
