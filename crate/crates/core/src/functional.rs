//! The penalized energy `Γ_ε`, its gradient and the recovery residual.
//!
//! With `Ṽ`, `V̄`, `f_ε`, `F_ε` from [`crate::penalty`] and the optional
//! weight `w_R(y) = [(|y| − R/ε)⁺]²`,
//!
//! ```text
//! Γ_ε(u) = ½∫|∇u|² + ½∫(Ṽ + w_R)u² + Ψ_ε(u) − ∫K F_ε(εy, u)
//! ```
//!
//! All potentials here are gauge shifted (`V + cK`).

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{neumaier, Field, Grid, GridError, GridMode};
use crate::penalty::{s_log_s2, NodeTables, PenaltyConfig, PenaltyError};
use crate::potential::{Potential, PotentialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub type Result<T> = std::result::Result<T, FunctionalError>;

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    potential: Potential,
    k: Option<Potential>,
    cfg: PenaltyConfig,
    grid: Arc<Grid>,
    r_weight: Option<f64>,
    tables: NodeTables,
    weight_r: Vec<f64>,
}

impl ProblemSpec {
    pub fn new(
        potential: Potential,
        k: Option<Potential>,
        cfg: PenaltyConfig,
        grid: Arc<Grid>,
        r_weight: Option<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        let need = potential
            .dimension_required()
            .max(k.as_ref().map_or(0, Potential::dimension_required));
        if need > grid.dim() {
            return Err(FunctionalError::Invalid(format!(
                "potential references x{need} but the grid has dimension {}",
                grid.dim()
            )));
        }
        let l_min = 2.0 * cfg.r0 / cfg.eps;
        if grid.half_width() < l_min * (1.0 - 1e-12) {
            return Err(FunctionalError::Invalid(format!(
                "grid half-width {} does not resolve the truncation region (need ≥ 2R0/ε = {l_min})",
                grid.half_width()
            )));
        }
        if let Some(r) = r_weight {
            if !(r >= cfg.r0) || !r.is_finite() {
                return Err(FunctionalError::Invalid(format!("R-weight radius {r} must be ≥ R0 = {}", cfg.r0)));
            }
        }
        let tables = NodeTables::build(&grid, &cfg, |x| coefficients(&potential, k.as_ref(), x))?;
        let mut y = vec![0.0; grid.dim()];
        for idx in 0..grid.len() {
            if tables.k[idx] <= 0.0 {
                grid.node(idx, &mut y);
                return Err(FunctionalError::Invalid(format!(
                    "K = {} is not positive at y = {y:?}",
                    tables.k[idx]
                )));
            }
            let r = grid.radius(idx) * cfg.eps;
            if r < cfg.r0 && tables.v[idx] < 1.0 - 1e-12 {
                grid.node(idx, &mut y);
                return Err(PenaltyError::Gauge {
                    x: y.iter().map(|c| c * cfg.eps).collect(),
                    value: tables.v[idx],
                }
                .into());
            }
        }
        let weight_r = (0..grid.len())
            .map(|idx| match r_weight {
                Some(r) => (grid.radius(idx) - r / cfg.eps).max(0.0).powi(2),
                None => 0.0,
            })
            .collect();
        Ok(Self { potential, k, cfg, grid, r_weight, tables, weight_r })
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn k(&self) -> Option<&Potential> {
        self.k.as_ref()
    }

    pub fn cfg(&self) -> &PenaltyConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn r_weight(&self) -> Option<f64> {
        self.r_weight
    }

    pub fn tables(&self) -> &NodeTables {
        &self.tables
    }

    /// `[(|y| − R/ε)⁺]²` per node (zero without an R-weight).
    pub fn weight_r(&self) -> &[f64] {
        &self.weight_r
    }

    /// Unshifted `(V, K)` at an original-coordinate point.
    pub fn coefficients(&self, x: &[f64]) -> std::result::Result<(f64, f64), PotentialError> {
        coefficients(&self.potential, self.k.as_ref(), x)
    }

    /// `Ṽ + w_R` per node.
    pub fn quadratic_coefficient(&self) -> Vec<f64> {
        self.tables.v_tilde.iter().zip(&self.weight_r).map(|(a, b)| a + b).collect()
    }

    /// Same problem on another grid.
    pub fn with_grid(&self, grid: Arc<Grid>) -> Result<Self> {
        Self::new(self.potential.clone(), self.k.clone(), self.cfg.clone(), grid, self.r_weight)
    }

    fn check(&self, u: &Field) -> Result<()> {
        if !Arc::ptr_eq(u.grid(), &self.grid) && **u.grid() != *self.grid {
            return Err(FunctionalError::Invalid("field lives on a different grid".into()));
        }
        Ok(())
    }
}

/// `(V, K)` where an explicit `K` overrides the one carried by `V`.
pub fn coefficients(
    v: &Potential,
    k: Option<&Potential>,
    x: &[f64],
) -> std::result::Result<(f64, f64), PotentialError> {
    let (vv, kk) = v.eval_pair(x)?;
    match k {
        Some(k) => Ok((vv, k.eval(x)?)),
        None => Ok((vv, kk)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub psi: f64,
    pub nonlinear: f64,
    pub total: f64,
    pub h_eps_norm: f64,
    pub residual_original: f64,
}

impl EnergyBreakdown {
    /// Every energy term multiplied by `factor`, norms by `√factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kinetic: self.kinetic * factor,
            potential: self.potential * factor,
            psi: self.psi * factor,
            nonlinear: self.nonlinear * factor,
            total: self.total * factor,
            h_eps_norm: self.h_eps_norm * factor.sqrt(),
            residual_original: self.residual_original,
        }
    }
}

pub fn energy(u: &Field, spec: &ProblemSpec) -> Result<EnergyBreakdown> {
    spec.check(u)?;
    let g = &spec.grid;
    let t = &spec.tables;
    let vals = u.values();
    let kinetic = 0.5 * u.dirichlet_energy();
    let w = g.weights();
    let potential = 0.5
        * neumaier((0..vals.len()).map(|k| w[k] * (t.v_tilde[k] + spec.weight_r[k]) * vals[k] * vals[k]));
    let psi = t.psi(g, vals);
    let nonlinear = -neumaier((0..vals.len()).map(|k| w[k] * t.k[k] * t.F(k, vals[k])));
    let total = kinetic + potential + psi + nonlinear;
    let h_eps_norm = (2.0 * (kinetic + potential)).max(0.0).sqrt();
    let residual_original = residual_original(u, spec)?;
    Ok(EnergyBreakdown { kinetic, potential, psi, nonlinear, total, h_eps_norm, residual_original })
}

/// `Γ_ε(u)` alone.
pub fn energy_total(u: &Field, spec: &ProblemSpec) -> f64 {
    let t = &spec.tables;
    let vals = u.values();
    let w = spec.grid.weights();
    let lap = spec.grid.laplacian_values(vals);
    neumaier((0..vals.len()).map(|k| {
        let uk = vals[k];
        w[k] * (0.5 * uk * (-lap[k] + (t.v_tilde[k] + spec.weight_r[k]) * uk) + t.psi_density(k, uk)
            - t.k[k] * t.F(k, uk))
    }))
}

/// Node-wise `−Δu + (Ṽ + w_R)u + V̄(½η|u|u + η̂u) − K f_ε(u)`; zero on the boundary.
pub fn gradient(u: &Field, spec: &ProblemSpec) -> Result<Field> {
    spec.check(u)?;
    let t = &spec.tables;
    let g = &spec.grid;
    let vals = u.values();
    let mut out = g.laplacian_values(vals);
    for k in 0..out.len() {
        out[k] = if g.is_boundary(k) {
            0.0
        } else {
            let uk = vals[k];
            -out[k] + (t.v_tilde[k] + spec.weight_r[k]) * uk + t.psi_prime_density(k, uk) - t.k[k] * t.f(k, uk)
        };
    }
    Ok(Field::from_values(g.clone(), out)?)
}

pub fn h_eps_norm(u: &Field, spec: &ProblemSpec) -> Result<f64> {
    spec.check(u)?;
    let w = spec.grid.weights();
    let vals = u.values();
    let q = neumaier(
        (0..vals.len()).map(|k| w[k] * (spec.tables.v_tilde[k] + spec.weight_r[k]) * vals[k] * vals[k]),
    );
    Ok((u.dirichlet_energy() + q).max(0.0).sqrt())
}

/// Relative L² residual of the unpenalized equation `−Δu + Vu = K u log u²`.
pub fn residual_original(u: &Field, spec: &ProblemSpec) -> Result<f64> {
    spec.check(u)?;
    let g = &spec.grid;
    let t = &spec.tables;
    let vals = u.values();
    let lap = g.laplacian_values(vals);
    let r: Vec<f64> = (0..vals.len())
        .map(|k| if g.is_boundary(k) { 0.0 } else { -lap[k] + t.v[k] * vals[k] - t.k[k] * s_log_s2(vals[k]) })
        .collect();
    let un = g.dot(vals, vals).sqrt();
    if un == 0.0 {
        return Ok(0.0);
    }
    Ok(g.dot(&r, &r).sqrt() / un)
}

/// Relative L² norm of the penalized residual.
pub fn residual_penalized(u: &Field, spec: &ProblemSpec) -> Result<f64> {
    let gr = gradient(u, spec)?;
    let un = u.norm_l2();
    Ok(if un == 0.0 { 0.0 } else { gr.norm_l2() / un })
}

/// Convenience constructor for tests and examples: radial or full grid with
/// half-width `max(2R₀/ε, l_min)`.
pub fn default_grid(dim: usize, mode: GridMode, cfg: &PenaltyConfig, l_min: f64, n: usize) -> Result<Arc<Grid>> {
    let l = (2.0 * cfg.r0 / cfg.eps).max(l_min);
    Ok(Arc::new(Grid::new(dim, mode, l, n)?))
}
