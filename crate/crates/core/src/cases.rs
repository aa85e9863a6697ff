//! Benchmark case definitions and the shared manufactured reference solution.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derivkit::Jet2;
use crate::network::{FieldState, FIELD_NAMES};
use crate::physics::{
    operator_terms, BodyForceParams, CoeffSet, CoefficientLaw, InterfaceSpec, LawKind, Side,
};

pub const GRID_N: usize = 101;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("unknown case id {0}; valid ids are 1..=4")]
    UnknownCase(u8),
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Smooth reference fields used by every case:
/// u = sin(pi x) cos(pi y), v = -cos(pi x) sin(pi y), p = cos(pi x) cos(pi y),
/// phi = sin(pi x) sin(pi y), T = x^2 + y^2.
/// The velocity pair is divergence-free by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManufacturedSolution;

impl ManufacturedSolution {
    /// Exact fields with all five jet slots populated.
    pub fn eval(&self, x: f64, y: f64) -> FieldState<f64> {
        use std::f64::consts::PI;
        let jx = Jet2::var_x(x);
        let jy = Jet2::var_y(y);
        let sx = (jx * PI).sin();
        let cx = (jx * PI).cos();
        let sy = (jy * PI).sin();
        let cy = (jy * PI).cos();
        FieldState {
            u: sx * cy,
            v: -(cx * sy),
            p: cx * cy,
            phi: sx * sy,
            temp: jx.square() + jy.square(),
        }
    }

    /// Exact field values only, in channel order (u, v, p, phi, T).
    pub fn values(&self, x: f64, y: f64) -> [f64; 5] {
        let s = self.eval(x, y);
        [s.u.val, s.v.val, s.p.val, s.phi.val, s.temp.val]
    }
}

/// Optional overrides for the frozen case constants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaseOverrides {
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    pub beta_e: Option<f64>,
    pub beta_nu: Option<f64>,
    pub beta_alpha: Option<f64>,
    pub nu_plus: Option<f64>,
    pub alpha_plus: Option<f64>,
    pub sigma_plus: Option<f64>,
}

/// Everything needed to pose one benchmark case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: u8,
    pub law: CoefficientLaw,
    pub body_force: BodyForceParams,
    /// Which fields get Dirichlet data on the outer boundary (u, v, p, phi, T).
    pub boundary_mask: [bool; 5],
    /// Whether the zero-mean pressure gauge constraint is active.
    pub gauge_active: bool,
    pub interface: Option<InterfaceSpec>,
    pub reference: ManufacturedSolution,
    pub grid_n: usize,
}

pub fn build_case(id: u8, overrides: Option<&CaseOverrides>) -> Result<CaseSpec, CaseError> {
    let ov = overrides.copied().unwrap_or_default();
    let nu = ov.nu.unwrap_or(0.05);
    let alpha = ov.alpha.unwrap_or(0.05);
    let sigma = ov.sigma.unwrap_or(1.0);
    let rho = ov.rho.unwrap_or(1.0);
    let body_force = BodyForceParams {
        gamma: ov.gamma.unwrap_or(1.0),
        beta_e: ov.beta_e.unwrap_or(0.1),
    };

    let mut spec = CaseSpec {
        id,
        law: CoefficientLaw::constant(nu, alpha, sigma, rho),
        body_force,
        boundary_mask: [true; 5],
        gauge_active: false,
        interface: None,
        reference: ManufacturedSolution,
        grid_n: GRID_N,
    };
    match id {
        1 => {}
        2 => {
            // Pressure leaves the Dirichlet set; the gauge pins its mean.
            spec.boundary_mask[2] = false;
            spec.gauge_active = true;
        }
        3 => {
            spec.law = CoefficientLaw::linear_in_t(
                nu,
                alpha,
                sigma,
                rho,
                ov.beta_nu.unwrap_or(0.5),
                ov.beta_alpha.unwrap_or(0.5),
            );
        }
        4 => {
            let minus = CoeffSet { nu, alpha, sigma };
            let plus = CoeffSet {
                nu: ov.nu_plus.unwrap_or(0.1),
                alpha: ov.alpha_plus.unwrap_or(0.1),
                sigma: ov.sigma_plus.unwrap_or(2.0),
            };
            spec.law = CoefficientLaw::piecewise(minus, plus, rho);
            spec.interface = Some(InterfaceSpec { a: 1.0, b: 0.4, c: -0.7 });
        }
        other => return Err(CaseError::UnknownCase(other)),
    }
    validate(&spec)?;
    Ok(spec)
}

fn validate(spec: &CaseSpec) -> Result<(), CaseError> {
    let bad = |msg: String| Err(CaseError::InvalidOverride(msg));
    for (name, v) in [
        ("nu", spec.law.minus.nu),
        ("alpha", spec.law.minus.alpha),
        ("sigma", spec.law.minus.sigma),
        ("nu_plus", spec.law.plus.nu),
        ("alpha_plus", spec.law.plus.alpha),
        ("sigma_plus", spec.law.plus.sigma),
        ("rho", spec.law.rho),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return bad(format!("{name} must be positive and finite, got {v}"));
        }
    }
    if spec.law.kind == LawKind::LinearInT {
        // T ranges over [0, 2] on the unit square; the law must stay positive.
        for (name, beta) in [("beta_nu", spec.law.beta_nu), ("beta_alpha", spec.law.beta_alpha)] {
            if !beta.is_finite() || 1.0 + 2.0 * beta <= 0.0 {
                return bad(format!("{name} = {beta} makes the coefficient non-positive on [0,2]"));
            }
        }
    }
    Ok(())
}

impl CaseSpec {
    /// Coefficient constants in effect at a point (interface-aware).
    pub fn law_at(&self, x: f64, y: f64) -> crate::physics::ResolvedLaw {
        let side = match &self.interface {
            Some(iface) => iface.side(x, y),
            None => Side::Minus,
        };
        self.law.resolve(side)
    }

    /// Manufactured sources, computed by applying the operator to the exact
    /// jets so that the reference solves the posed system identically.
    /// The continuity entry is fixed at 0 (exact velocities are solenoidal).
    pub fn source_at(&self, x: f64, y: f64) -> [f64; 5] {
        let exact = self.reference.eval(x, y);
        let mut s = operator_terms(&exact, &self.law_at(x, y), &self.body_force);
        s[0] = 0.0;
        s
    }

    /// Strong-form residual of a predicted state at a point, with this
    /// case's law, body force, and manufactured sources.
    pub fn full_operator_at(
        &self,
        s: &FieldState<f64>,
        x: f64,
        y: f64,
    ) -> Result<crate::physics::ResidualVector, crate::physics::PhysicsError> {
        crate::physics::full_operator(s, &self.law_at(x, y), &self.body_force, self.source_at(x, y))
    }

    /// Dirichlet data on the outer boundary: exact field values.
    pub fn boundary_data(&self, x: f64, y: f64) -> [f64; 5] {
        self.reference.values(x, y)
    }

    /// Prescribed interface flux jumps, derived from the smooth reference:
    /// J_f = (k_plus - k_minus) grad f . n for each diffusive flux channel
    /// (order: u, v, T, phi). Zero when the case has no interface.
    pub fn interface_jumps(&self, x: f64, y: f64) -> [f64; 4] {
        let Some(iface) = &self.interface else { return [0.0; 4] };
        let [nx, ny] = iface.unit_normal();
        let e = self.reference.eval(x, y);
        let t = e.temp.val;
        let lm = self.law.resolve(Side::Minus);
        let lp = self.law.resolve(Side::Plus);
        let grad_n = |f: Jet2<f64>| f.dx * nx + f.dy * ny;
        [
            (lp.nu_at(t) - lm.nu_at(t)) * grad_n(e.u),
            (lp.nu_at(t) - lm.nu_at(t)) * grad_n(e.v),
            (lp.alpha_at(t) - lm.alpha_at(t)) * grad_n(e.temp),
            (lp.sigma - lm.sigma) * grad_n(e.phi),
        ]
    }

    /// Uniform grid nodes over the closed unit square, row-major with y
    /// varying fastest: index = ix * grid_n + iy.
    pub fn grid_points(&self) -> Vec<[f64; 2]> {
        let n = self.grid_n;
        let h = 1.0 / (n - 1) as f64;
        let mut pts = Vec::with_capacity(n * n);
        for ix in 0..n {
            for iy in 0..n {
                pts.push([ix as f64 * h, iy as f64 * h]);
            }
        }
        pts
    }

    /// Reference field values on the evaluation grid, one vector per field
    /// in channel order (u, v, p, phi, T), each in grid layout order.
    pub fn reference_grid(&self) -> [Vec<f64>; 5] {
        let pts = self.grid_points();
        let mut out: [Vec<f64>; 5] = std::array::from_fn(|_| Vec::with_capacity(pts.len()));
        for &[x, y] in &pts {
            let vals = self.reference.values(x, y);
            for (col, v) in out.iter_mut().zip(vals) {
                col.push(v);
            }
        }
        out
    }

    /// JSON document describing the case: coefficients, masks, grid metadata.
    pub fn export_json(&self, path: &Path) -> Result<(), CaseError> {
        let doc = serde_json::json!({
            "schema": "case-definition/1",
            "case": self,
            "grid": {
                "n": self.grid_n,
                "domain": [[0.0, 1.0], [0.0, 1.0]],
                "layout": "row-major, y fastest",
            },
            "fields": FIELD_NAMES,
        });
        fs::write(path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    /// One CSV per field with header `x,y,value`; values use the shortest
    /// round-trip decimal form so reading them back is bit-exact.
    pub fn export_reference_grids(&self, dir: &Path) -> Result<(), CaseError> {
        fs::create_dir_all(dir)?;
        let pts = self.grid_points();
        let grids = self.reference_grid();
        for (name, grid) in FIELD_NAMES.iter().zip(&grids) {
            let path = dir.join(format!("case{}_reference_{}.csv", self.id, name));
            let mut f = std::io::BufWriter::new(fs::File::create(path)?);
            writeln!(f, "x,y,value")?;
            for (&[x, y], v) in pts.iter().zip(grid) {
                writeln!(f, "{x},{y},{v}")?;
            }
        }
        Ok(())
    }
}
