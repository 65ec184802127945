//! Truncation and cutoff objects for the penalized problem.
//!
//! `y` denotes rescaled coordinates and `x = εy` original ones. The cutoff
//! kernels depend on `t` only through `s = t/φ(y)`, which is how they are
//! evaluated: `η(y,t) = η₁(s)/φ` and `η̂(y,t) = η̂₁(s)`.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Field, Grid};
use crate::potential::{Potential, PotentialError};

pub const INV_E: f64 = 1.0 / E;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PenaltyError {
    #[error("invalid penalty configuration: {0}")]
    Invalid(String),
    #[error("gauge-shifted potential is {value} < 1 at x = {x:?} inside B(0, R0)")]
    Gauge { x: Vec<f64>, value: f64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// The concentration domain, in original coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Region {
    Ball {
        radius: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    pub fn ball(radius: f64) -> Self {
        Region::Ball { radius, center: Vec::new() }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball { radius, center } => {
                let d2: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let d = c - center.get(i).copied().unwrap_or(0.0);
                        d * d
                    })
                    .sum();
                d2 < radius * radius
            }
            Region::Box { lo, hi } => x.iter().enumerate().all(|(i, c)| {
                let l = lo.get(i).copied().unwrap_or(f64::NEG_INFINITY);
                let h = hi.get(i).copied().unwrap_or(f64::INFINITY);
                *c > l && *c < h
            }),
        }
    }

    /// `sup_{x∈Ω} |x|`.
    pub fn circumradius(&self) -> f64 {
        match self {
            Region::Ball { radius, center } => center.iter().map(|c| c * c).sum::<f64>().sqrt() + radius,
            Region::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l.abs().max(h.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    fn validate(&self) -> Result<(), PenaltyError> {
        match self {
            Region::Ball { radius, center } => {
                if !(*radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
                    return Err(PenaltyError::Invalid(format!("bad ball radius {radius} or center {center:?}")));
                }
            }
            Region::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(PenaltyError::Invalid("box bounds must be non-empty and of equal length".into()));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
                    return Err(PenaltyError::Invalid(format!("degenerate box {lo:?}..{hi:?}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub eps: f64,
    pub r0: f64,
    pub omega: Region,
    #[serde(default)]
    pub kappa: f64,
    /// Gauge shift `c`: the solver works with `V + cK`.
    #[serde(default)]
    pub gauge_shift: f64,
}

impl PenaltyConfig {
    pub fn new(eps: f64, r0: f64, omega: Region, kappa: f64, gauge_shift: f64) -> Result<Self, PenaltyError> {
        let cfg = Self { eps, r0, omega, kappa, gauge_shift };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PenaltyError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(PenaltyError::Invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(PenaltyError::Invalid(format!("R0 must be positive, got {}", self.r0)));
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(PenaltyError::Invalid(format!("kappa must lie in [0, 1), got {}", self.kappa)));
        }
        if !self.gauge_shift.is_finite() {
            return Err(PenaltyError::Invalid("gauge shift must be finite".into()));
        }
        self.omega.validate()?;
        if self.omega.circumradius() > 0.5 * self.r0 {
            return Err(PenaltyError::Invalid(format!(
                "domain (circumradius {}) is not contained in B(0, R0/2) = B(0, {})",
                self.omega.circumradius(),
                0.5 * self.r0
            )));
        }
        Ok(())
    }

    /// `φ_ε(y) = exp{−ε^{1−κ}|y|^{2−κ}}`, clamped below at the smallest normal float.
    pub fn phi(&self, y: &[f64]) -> f64 {
        let r = y.iter().map(|c| c * c).sum::<f64>().sqrt();
        self.phi_at_radius(r)
    }

    pub fn phi_at_radius(&self, r: f64) -> f64 {
        let e = if self.kappa == 0.0 {
            self.eps * r * r
        } else {
            self.eps.powf(1.0 - self.kappa) * r.powf(2.0 - self.kappa)
        };
        (-e).exp().max(f64::MIN_POSITIVE)
    }

    pub fn eta(&self, y: &[f64], t: f64) -> f64 {
        eta(self.phi(y), t)
    }

    pub fn eta_hat(&self, y: &[f64], t: f64) -> f64 {
        eta_hat(self.phi(y), t)
    }

    /// `Ṽ(x)` from the gauge-shifted potential value `v` at original point `x`.
    pub fn v_tilde_value(&self, x: &[f64], v: f64) -> f64 {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r < self.r0 {
            v
        } else {
            let floor = if self.kappa == 0.0 { r * r } else { r.powf(2.0 - 2.0 * self.kappa) };
            v.max(floor)
        }
    }

    /// `Ṽ(x)` for the gauge-shifted potential `V + cK`.
    pub fn v_tilde(&self, x: &[f64], pot: &Potential) -> Result<f64, PenaltyError> {
        let (v, k) = pot.eval_pair(x)?;
        Ok(self.v_tilde_value(x, v + self.gauge_shift * k))
    }

    /// `V̄ = V − Ṽ ≤ 0` for the gauge-shifted potential.
    pub fn v_bar(&self, x: &[f64], pot: &Potential) -> Result<f64, PenaltyError> {
        let (v, k) = pot.eval_pair(x)?;
        let v = v + self.gauge_shift * k;
        Ok(v - self.v_tilde_value(x, v))
    }

    pub fn in_omega(&self, x: &[f64]) -> bool {
        self.omega.contains(x)
    }

    pub fn f_eps(&self, x: &[f64], s: f64) -> f64 {
        if self.in_omega(x) {
            s_log_s2(s)
        } else {
            g(s)
        }
    }

    #[allow(non_snake_case)]
    pub fn F_eps(&self, x: &[f64], s: f64) -> f64 {
        if self.in_omega(x) {
            log_primitive(s)
        } else {
            G(s)
        }
    }
}

/// `s log s²` with `0·log 0 = 0`.
#[inline]
pub fn s_log_s2(s: f64) -> f64 {
    let s2 = s * s;
    if s2 == 0.0 {
        0.0
    } else {
        s * s2.ln()
    }
}

/// `½(s² log s² − s²)`.
#[inline]
pub fn log_primitive(s: f64) -> f64 {
    let s2 = s * s;
    if s2 == 0.0 {
        0.0
    } else {
        0.5 * (s2 * s2.ln() - s2)
    }
}

/// Truncated nonlinearity.
#[inline]
pub fn g(s: f64) -> f64 {
    if s.abs() <= INV_E {
        s_log_s2(s)
    } else {
        -2.0 * INV_E * s.signum()
    }
}

/// Primitive of [`g`] with `G(0) = 0`.
#[allow(non_snake_case)]
#[inline]
pub fn G(s: f64) -> f64 {
    if s.abs() <= INV_E {
        log_primitive(s)
    } else {
        -2.0 * INV_E * s.abs() + 0.5 * INV_E * INV_E
    }
}

/// Unit kernel `η₁(s)`, i.e. `η` at `φ = 1`.
#[inline]
pub fn eta_unit(s: f64) -> f64 {
    if s <= 1.0 || s >= 5.0 {
        0.0
    } else if s <= 2.0 {
        -0.25 * (s - 1.0).powi(2)
    } else if s <= 4.0 {
        0.25 * (s - 3.0).powi(2) - 0.5
    } else {
        -0.25 * (s - 5.0).powi(2)
    }
}

/// `∂_s η₁`.
#[inline]
pub fn eta_unit_prime(s: f64) -> f64 {
    if s <= 1.0 || s >= 5.0 {
        0.0
    } else if s <= 2.0 {
        -0.5 * (s - 1.0)
    } else if s <= 4.0 {
        0.5 * (s - 3.0)
    } else {
        -0.5 * (s - 5.0)
    }
}

/// `η̂₁(s) = 1 + ∫₀ˢ η₁`.
#[inline]
pub fn eta_hat_unit(s: f64) -> f64 {
    let v = if s <= 1.0 {
        1.0
    } else if s <= 2.0 {
        1.0 - (s - 1.0).powi(3) / 12.0
    } else if s <= 4.0 {
        11.0 / 12.0 + ((s - 3.0).powi(3) + 1.0) / 12.0 - 0.5 * (s - 2.0)
    } else if s < 5.0 {
        1.0 / 12.0 - ((s - 5.0).powi(3) + 1.0) / 12.0
    } else {
        0.0
    };
    v.clamp(0.0, 1.0)
}

pub fn eta(phi: f64, t: f64) -> f64 {
    eta_unit(t / phi) / phi
}

pub fn eta_hat(phi: f64, t: f64) -> f64 {
    eta_hat_unit(t / phi)
}

/// `∂_t η`.
pub fn eta_t(phi: f64, t: f64) -> f64 {
    eta_unit_prime(t / phi) / (phi * phi)
}

/// Node-wise tables of everything the penalized functional needs.
#[derive(Debug, Clone)]
pub struct NodeTables {
    /// Gauge-shifted `V(εy)`.
    pub v: Vec<f64>,
    pub k: Vec<f64>,
    pub v_tilde: Vec<f64>,
    pub v_bar: Vec<f64>,
    pub phi: Vec<f64>,
    pub in_omega: Vec<bool>,
}

impl NodeTables {
    /// Evaluates `(V, K)` at every node through `coeffs`, which receives
    /// original coordinates.
    pub fn build(
        grid: &Grid,
        cfg: &PenaltyConfig,
        mut coeffs: impl FnMut(&[f64]) -> Result<(f64, f64), PotentialError>,
    ) -> Result<Self, PenaltyError> {
        let n = grid.len();
        let mut t = NodeTables {
            v: Vec::with_capacity(n),
            k: Vec::with_capacity(n),
            v_tilde: Vec::with_capacity(n),
            v_bar: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            in_omega: Vec::with_capacity(n),
        };
        let mut y = vec![0.0; grid.dim()];
        let mut x = vec![0.0; grid.dim()];
        for idx in 0..n {
            grid.node(idx, &mut y);
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = cfg.eps * yi;
            }
            let (v, k) = coeffs(&x)?;
            let v = v + cfg.gauge_shift * k;
            let vt = cfg.v_tilde_value(&x, v);
            t.v.push(v);
            t.k.push(k);
            t.v_tilde.push(vt);
            t.v_bar.push(v - vt);
            t.phi.push(cfg.phi(&y));
            t.in_omega.push(cfg.in_omega(&x));
        }
        Ok(t)
    }

    pub fn for_potential(grid: &Grid, cfg: &PenaltyConfig, pot: &Potential) -> Result<Self, PenaltyError> {
        Self::build(grid, cfg, |x| pot.eval_pair(x))
    }

    /// `½ V̄ η̂(|u|) u²` at node `k`.
    #[inline]
    pub fn psi_density(&self, k: usize, u: f64) -> f64 {
        let vb = self.v_bar[k];
        if vb == 0.0 || u == 0.0 {
            return 0.0;
        }
        0.5 * vb * eta_hat(self.phi[k], u.abs()) * u * u
    }

    /// `V̄ (½ η(|u|)|u|u + η̂(|u|)u)` at node `k`.
    #[inline]
    pub fn psi_prime_density(&self, k: usize, u: f64) -> f64 {
        let vb = self.v_bar[k];
        if vb == 0.0 || u == 0.0 {
            return 0.0;
        }
        let s = u.abs() / self.phi[k];
        vb * u * (0.5 * eta_unit(s) * s + eta_hat_unit(s))
    }

    #[inline]
    pub fn f(&self, k: usize, u: f64) -> f64 {
        if self.in_omega[k] {
            s_log_s2(u)
        } else {
            g(u)
        }
    }

    #[inline]
    #[allow(non_snake_case)]
    pub fn F(&self, k: usize, u: f64) -> f64 {
        if self.in_omega[k] {
            log_primitive(u)
        } else {
            G(u)
        }
    }

    pub fn psi(&self, grid: &Grid, u: &[f64]) -> f64 {
        crate::grid::neumaier(
            grid.weights().iter().zip(u).enumerate().map(|(k, (w, &uk))| w * self.psi_density(k, uk)),
        )
    }

    pub fn psi_prime_apply(&self, grid: &Grid, u: &[f64], v: &[f64]) -> f64 {
        crate::grid::neumaier(
            grid.weights()
                .iter()
                .zip(u.iter().zip(v))
                .enumerate()
                .map(|(k, (w, (&uk, &vk)))| w * self.psi_prime_density(k, uk) * vk),
        )
    }
}

/// `Ψ_ε(u) = ½∫ V̄ η̂(|u|) u²`.
pub fn psi(u: &Field, cfg: &PenaltyConfig, pot: &Potential) -> Result<f64, PenaltyError> {
    let t = NodeTables::for_potential(u.grid(), cfg, pot)?;
    Ok(t.psi(u.grid(), u.values()))
}

/// `Ψ_ε'(u) v`.
pub fn psi_prime_apply(u: &Field, v: &Field, cfg: &PenaltyConfig, pot: &Potential) -> Result<f64, PenaltyError> {
    let t = NodeTables::for_potential(u.grid(), cfg, pot)?;
    Ok(t.psi_prime_apply(u.grid(), u.values(), v.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridMode;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn cfg(eps: f64, kappa: f64) -> PenaltyConfig {
        PenaltyConfig::new(eps, 3.0, Region::ball(1.0), kappa, 0.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(PenaltyConfig::new(0.1, 2.0, Region::ball(1.0), 0.0, 0.0).is_ok());
        assert!(PenaltyConfig::new(0.1, 1.9, Region::ball(1.0), 0.0, 0.0).is_err());
        assert!(PenaltyConfig::new(0.0, 3.0, Region::ball(1.0), 0.0, 0.0).is_err());
        assert!(PenaltyConfig::new(0.1, 3.0, Region::ball(1.0), 1.0, 0.0).is_err());
        let b = Region::Box { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0] };
        assert_relative_eq!(b.circumradius(), 2f64.sqrt());
        assert!(PenaltyConfig::new(0.1, 2.0, b.clone(), 0.0, 0.0).is_err());
        assert!(PenaltyConfig::new(0.1, 3.0, b, 0.0, 0.0).is_ok());
        assert!(PenaltyConfig::new(0.1, 3.0, Region::Box { lo: vec![1.0], hi: vec![0.0] }, 0.0, 0.0).is_err());
    }

    #[test]
    fn phi_values() {
        assert_eq!(cfg(0.3, 0.0).phi(&[0.0, 0.0]), 1.0);
        assert_relative_eq!(cfg(0.01, 0.0).phi(&[10.0]), (-1.0f64).exp(), max_relative = 1e-14);
        let p = cfg(0.04, 0.5).phi(&[100.0]);
        assert_relative_eq!(p, (-200.0f64).exp(), max_relative = 1e-12);
        assert_eq!(cfg(0.5, 0.0).phi(&[1e3]), f64::MIN_POSITIVE);
    }

    #[test]
    fn eta_values() {
        assert_eq!(eta(1.0, 0.5), 0.0);
        assert_eq!(eta_hat(1.0, 0.5), 1.0);
        assert_eq!(eta(1.0, 2.0), -0.25);
        assert_eq!(eta(1.0, 3.0), -0.5);
        assert_relative_eq!(eta_hat(1.0, 2.0), 11.0 / 12.0, max_relative = 1e-15);
        assert_eq!(eta_hat(1.0, 5.0), 0.0);
        assert_relative_eq!(eta_hat(1.0, 4.0), 1.0 / 12.0, max_relative = 1e-14);
        // branch integrals from a fine midpoint rule
        let n = 200_000;
        let h = 5.0 / n as f64;
        let mut acc = 1.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) * h;
            acc += h * eta_unit(t);
            let exact = eta_hat_unit((i + 1) as f64 * h);
            assert!((acc - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn eta_continuity_at_branch_points() {
        for &phi in &[1.0, 0.3, 1e-3] {
            for &b in &[1.0, 2.0, 4.0, 5.0] {
                let t = b * phi;
                let d = 1e-9 * phi;
                assert!((eta(phi, t - d) - eta(phi, t + d)).abs() * phi < 1e-8);
                let lhs = eta_unit_prime(b - 1e-12);
                let rhs = eta_unit_prime(b + 1e-12);
                assert!((lhs - rhs).abs() < 1e-11, "{b}");
                assert!((eta_unit(b - 1e-13) - eta_unit(b + 1e-13)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn g_and_primitive() {
        assert_eq!(g(0.0), 0.0);
        assert_eq!(G(0.0), 0.0);
        assert_relative_eq!(g(5.0), -2.0 / E);
        assert_relative_eq!(g(INV_E), -2.0 * INV_E, max_relative = 1e-15);
        assert_relative_eq!(g(INV_E * (1.0 + 1e-15)), -2.0 * INV_E, max_relative = 1e-14);
        assert_relative_eq!(G(INV_E), -1.5 * INV_E * INV_E, max_relative = 1e-14);
        assert_relative_eq!(G(INV_E * (1.0 + 1e-15)), -1.5 * INV_E * INV_E, max_relative = 1e-13);
        assert_relative_eq!(G(-INV_E), -0.203_003, max_relative = 1e-5);
    }

    #[test]
    fn v_tilde_and_f() {
        let c = cfg(0.1, 0.0);
        let harm = Potential::from(crate::potential::BuiltinPotential::HarmonicRepulsive);
        let x = [2.0 * c.r0, 0.0];
        assert_relative_eq!(c.v_tilde(&x, &harm).unwrap(), 4.0 * c.r0 * c.r0);
        assert_relative_eq!(c.v_bar(&x, &harm).unwrap(), -8.0 * c.r0 * c.r0);
        assert_eq!(c.v_bar(&[0.5 * c.r0, 1.0], &harm).unwrap(), 0.0);
        let konst = Potential::constant(2.0);
        assert_eq!(c.v_tilde(&[5.0], &konst).unwrap(), 25.0);
        assert_eq!(c.v_tilde(&[0.1], &konst).unwrap(), 2.0);

        assert_eq!(c.f_eps(&[0.0], 1.0), 0.0);
        assert_eq!(c.F_eps(&[0.0], 1.0), -0.5);
        assert_relative_eq!(c.f_eps(&[1.5], 1.0), -2.0 * INV_E);
        assert_relative_eq!(c.F_eps(&[1.5], 1.0), -2.0 * INV_E + 0.5 * INV_E * INV_E);
        assert_eq!(c.f_eps(&[1.5], 0.0), 0.0);
        assert_eq!(c.F_eps(&[0.2], 0.0), 0.0);
    }

    fn far_grid() -> Arc<Grid> {
        Arc::new(Grid::new(1, GridMode::Full, 80.0, 801).unwrap())
    }

    #[test]
    fn psi_vanishes_in_documented_cases() {
        let g = far_grid();
        let c = cfg(0.1, 0.0);
        let harm = Potential::from(crate::potential::BuiltinPotential::HarmonicRepulsive);
        // support inside B(0, R0/ε) = B(0, 30)
        let inside = Field::from_fn(g.clone(), |y| if y[0].abs() < 29.0 { 1.0 + y[0].sin() } else { 0.0 });
        assert_eq!(psi(&inside, &c, &harm).unwrap(), 0.0);
        let v = Field::from_fn(g.clone(), |y| y[0].cos());
        assert_eq!(psi_prime_apply(&inside, &v, &c, &harm).unwrap(), 0.0);
        // |u| ≥ 5φ everywhere
        let big = Field::from_fn(g.clone(), |y| 5.0 * c.phi(y) + 0.01);
        assert_eq!(psi(&big, &c, &harm).unwrap(), 0.0);
        assert_eq!(psi_prime_apply(&big, &v, &c, &harm).unwrap(), 0.0);
        // small tails give Ψ < 0
        let small = Field::from_fn(g.clone(), |y| 0.5 * c.phi(y));
        assert!(psi(&small, &c, &harm).unwrap() < 0.0);
    }

    #[test]
    fn psi_prime_matches_central_difference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = Arc::new(Grid::new(1, GridMode::Full, 40.0, 401).unwrap());
        let c = PenaltyConfig::new(0.25, 3.0, Region::ball(1.0), 0.0, 0.0).unwrap();
        let harm = Potential::from(crate::potential::BuiltinPotential::HarmonicRepulsive);
        let t = NodeTables::for_potential(&g, &c, &harm).unwrap();
        for _ in 0..20 {
            let u: Vec<f64> = (0..g.len()).map(|k| rng.gen_range(-6.0..6.0) * t.phi[k]).collect();
            let v: Vec<f64> = (0..g.len()).map(|k| rng.gen_range(-1.0..1.0) * t.phi[k]).collect();
            let exact = t.psi_prime_apply(&g, &u, &v);
            let fd = |h: f64| {
                let up: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + h * b).collect();
                let um: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - h * b).collect();
                (t.psi(&g, &up) - t.psi(&g, &um)) / (2.0 * h)
            };
            let e1 = (fd(1e-2) - exact).abs();
            let e2 = (fd(5e-3) - exact).abs();
            assert!(e2 <= 1e-10 * exact.abs().max(1e-300) + 0.3 * e1 + 1e-300, "{e1} {e2} {exact}");
        }
    }

    fn eps_kappa() -> impl Strategy<Value = (f64, f64)> {
        (prop::sample::select(vec![0.5, 0.25, 0.1, 0.05]), prop::sample::select(vec![0.0, 0.5]))
    }

    proptest! {
        #[test]
        fn cutoff_bounds((eps, kappa) in eps_kappa(), r in 0.0f64..20.0, s in -10.0f64..10.0, frac in 0.0f64..6.0) {
            let c = cfg(eps, kappa);
            let phi = c.phi_at_radius(r);
            prop_assume!(phi > 1e-100);
            // sample s on the scale of φ as well as O(1)
            for s in [s, frac * phi * s.signum()] {
                let t = s.abs();
                let tol = 1e-12;
                prop_assert!(eta_hat(phi, t) * s * s <= 25.0 * phi * phi * (1.0 + tol) + f64::MIN_POSITIVE);
                prop_assert!((eta(phi, t) * s.powi(3)).abs() <= 125.0 * phi * phi * (1.0 + tol));
                prop_assert!(eta_hat(phi, t) * t <= 5.0 * phi * (1.0 + tol));
                prop_assert!((eta(phi, t) * s * s).abs() <= 25.0 * phi * (1.0 + tol));
                prop_assert!((eta_t(phi, t) * s.powi(3)).abs() <= 125.0 * phi * (1.0 + tol));
                prop_assert!((0.0..=1.0).contains(&eta_hat(phi, t)));
                prop_assert!(eta_t(phi, t).abs() <= 0.5 / (phi * phi) * (1.0 + tol));
            }
        }

        #[test]
        fn truncated_nonlinearity(s in -5.0f64..5.0) {
            prop_assert_eq!(g(-s), -g(s));
            prop_assert_eq!(G(-s), G(s));
            if s > 0.0 {
                prop_assert!(g(s) <= s_log_s2(s) + 1e-15);
                prop_assert!(g(s) >= -2.0 * INV_E - 1e-15 && g(s) <= 0.0);
            }
            let neg_part = (-s * s_log_s2(s)).max(0.0);
            prop_assert!(G(s) <= 0.0);
            prop_assert!(G(s) >= -0.5 * neg_part - 2.0 * s * s - 1e-15);
            let q = g(s) * s - 2.0 * G(s);
            if s.abs() <= INV_E {
                prop_assert_eq!(g(s), s_log_s2(s));
                prop_assert!((G(s) - log_primitive(s)).abs() == 0.0);
                prop_assert!((q - s * s).abs() <= 1e-15);
            } else {
                prop_assert!(q >= -1e-15 && q <= s * s + 1e-15);
            }
        }

        #[test]
        fn g_is_derivative_of_primitive(s in -3.0f64..3.0) {
            let h = 1e-5;
            prop_assume!(s.abs() > 1e-3);
            let fd = (G(s + h) - G(s - h)) / (2.0 * h);
            prop_assert!((fd - g(s)).abs() < 1e-6 * (1.0 + g(s).abs()) + 1e-8);
        }

        #[test]
        fn eta_hat_derivative(phi in 1e-3f64..1.0, s in 0.01f64..5.5) {
            let t = s * phi;
            let h1 = 1e-3 * phi;
            let fd = |h: f64| (eta_hat(phi, t + h) - eta_hat(phi, t - h)) / (2.0 * h);
            let exact = eta(phi, t);
            let e1 = (fd(h1) - exact).abs();
            // C¹ kernel: second order away from branch points, first order across them
            prop_assert!(e1 * phi <= 1e-6 + 1e-12 / phi);
        }
    }
}
