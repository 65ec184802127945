//! Closed-form limit objects and solution diagnostics.
//!
//! The autonomous problem `−Δv + av = b v log v²` has the explicit positive
//! solution
//!
//! ```text
//! U_{a,b}(y) = e^{a/(2b)} e^{N/2} e^{−b|y|²/2}
//! ```
//!
//! with energy `m(a,b) = ½ e^{a/b} b^{1−N/2} |U|₂²` and `|U|₂² = e^N π^{N/2}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functional::ProblemSpec;
use crate::grid::{neumaier, Field, Grid, GridMode};
use crate::potential::{Potential, PotentialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("annulus contains {nodes} usable nodes, need at least {MIN_FIT_NODES}")]
    EmptyAnnulus { nodes: usize },
    #[error("no mass inside the barycenter window")]
    ZeroMass,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

pub const MIN_FIT_NODES: usize = 20;

/// `|U|₂² = e^N π^{N/2}`.
pub fn u_norm_sq(dim: usize) -> f64 {
    let n = dim as f64;
    n.exp() * PI.powf(0.5 * n)
}

/// `m(a, b) = ½ e^{a/b} b^{1−N/2} |U|₂²`.
pub fn ground_level(a: f64, b: f64, dim: usize) -> f64 {
    0.5 * (a / b).exp() * b.powf(1.0 - 0.5 * dim as f64) * u_norm_sq(dim)
}

/// `P = K^{1−N/2} e^{V/K}`.
pub fn concentration_function(v: f64, k: f64, dim: usize) -> f64 {
    k.powf(1.0 - 0.5 * dim as f64) * (v / k).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitProfile {
    pub a: f64,
    pub b: f64,
    pub dim: usize,
    pub level: f64,
}

pub fn limit_profile(a: f64, b: f64, dim: usize) -> Result<LimitProfile> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(AnalysisError::Invalid(format!("b must be positive, got {b}")));
    }
    if dim == 0 || !a.is_finite() {
        return Err(AnalysisError::Invalid(format!("need finite a and N ≥ 1, got a = {a}, N = {dim}")));
    }
    Ok(LimitProfile { a, b, dim, level: ground_level(a, b, dim) })
}

impl LimitProfile {
    pub fn amplitude(&self) -> f64 {
        (0.5 * self.a / self.b + 0.5 * self.dim as f64).exp()
    }

    /// `U_{a,b}(y)` for `y` relative to the profile center.
    pub fn value(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().map(|c| c * c).sum();
        self.value_at_radius_sq(r2)
    }

    pub fn value_at_radius_sq(&self, r2: f64) -> f64 {
        (0.5 * self.a / self.b + 0.5 * self.dim as f64 - 0.5 * self.b * r2).exp()
    }

    /// Profile centered at rescaled `center` sampled on `grid` (radial grids
    /// ignore the center).
    pub fn sample(&self, grid: &std::sync::Arc<Grid>, center: &[f64]) -> Field {
        let radial = grid.mode() == GridMode::Radial;
        Field::from_fn(grid.clone(), |y| {
            let r2: f64 = if radial {
                y[0] * y[0]
            } else {
                y.iter().enumerate().map(|(i, c)| (c - center.get(i).copied().unwrap_or(0.0)).powi(2)).sum()
            };
            self.value_at_radius_sq(r2)
        })
    }

    /// `I_{a,b}(tU_{a,b}) = t²(1 − log t²) m(a,b)`.
    pub fn ray_energy(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        t * t * (1.0 - (t * t).ln()) * self.level
    }
}

/// Quadrature of `I_{a,b}(u) = ½∫|∇u|² + (a+b)u² − b u² log u²`.
pub fn autonomous_energy(u: &Field, a: f64, b: f64) -> f64 {
    let g = u.grid();
    let v = u.values();
    let kin = 0.5 * u.dirichlet_energy();
    let rest = neumaier(g.weights().iter().zip(v).map(|(w, &s)| {
        let s2 = s * s;
        let l = if s2 == 0.0 { 0.0 } else { s2 * s2.ln() };
        w * 0.5 * ((a + b) * s2 - b * l)
    }));
    kin + rest
}

/// Automatic gauge shift `c = max(0, max_{B(0,R₀)} (1 − V)/K)`, sampled on
/// the grid nodes (original coordinates `εy`).
pub fn auto_gauge_shift(
    grid: &Grid,
    eps: f64,
    r0: f64,
    potential: &Potential,
    k: Option<&Potential>,
) -> Result<f64> {
    let mut y = vec![0.0; grid.dim()];
    let mut c = 0.0f64;
    for idx in 0..grid.len() {
        if grid.radius(idx) * eps > r0 {
            continue;
        }
        grid.node(idx, &mut y);
        let x: Vec<f64> = y.iter().map(|v| v * eps).collect();
        let (v, kk) = crate::functional::coefficients(potential, k, &x)?;
        if kk <= 0.0 {
            return Err(AnalysisError::Invalid(format!("K = {kk} is not positive at x = {x:?}")));
        }
        c = c.max((1.0 - v) / kk);
    }
    Ok(c)
}

/// `e^{−c/2}`: multiplies a solution of the shifted problem back to one of
/// the original problem.
pub fn unshift_factor(c: f64) -> f64 {
    (-0.5 * c).exp()
}

/// `(V + cK, e^{−c/2})`. Only `K ≡ 1` potentials shift by a constant, so the
/// shifted potential is returned as a closure over the original.
pub fn gauge_shift<'a>(
    potential: &'a Potential,
    k: Option<&'a Potential>,
    c: f64,
) -> (impl Fn(&[f64]) -> std::result::Result<f64, PotentialError> + 'a, f64) {
    let shifted = move |x: &[f64]| {
        let (v, kk) = crate::functional::coefficients(potential, k, x)?;
        Ok(v + c * kk)
    };
    (shifted, unshift_factor(c))
}

/// Quadratically refined argmax of `u`, in original coordinates.
///
/// Ties resolve to the first node in index order, which is lexicographic in
/// `(y1, .., yN)`.
pub fn locate_concentration(u: &Field, spec: &ProblemSpec) -> Vec<f64> {
    locate_concentration_rescaled(u).iter().map(|c| c * spec.cfg().eps).collect()
}

pub fn locate_concentration_rescaled(u: &Field) -> Vec<f64> {
    let g = u.grid();
    let v = u.values();
    let mut best = 0;
    for k in 1..v.len() {
        if v[k] > v[best] {
            best = k;
        }
    }
    let mut y = g.node_vec(best);
    let h = g.spacing();
    let refine = |um: f64, u0: f64, up: f64| {
        let d = um - 2.0 * u0 + up;
        if d < 0.0 {
            (0.5 * h * (um - up) / d).clamp(-0.5 * h, 0.5 * h)
        } else {
            0.0
        }
    };
    match g.mode() {
        GridMode::Radial => {
            if best > 0 && best + 1 < v.len() {
                y[0] = (y[0] + refine(v[best - 1], v[best], v[best + 1])).max(0.0);
            }
        }
        GridMode::Full => {
            let idx = g.multi_index(best);
            let n = g.points_per_axis();
            for a in 0..g.dim() {
                if idx[a] == 0 || idx[a] + 1 >= n {
                    continue;
                }
                let s = g.stride(a);
                y[a] += refine(v[best - s], v[best], v[best + s]);
            }
        }
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Coefficient of `dist^{2−κ}` in rescaled units.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `slope / ε^{2−κ}`: the coefficient against original-coordinate distance.
    pub slope_original: f64,
    pub exponent: f64,
    pub annulus: (f64, f64),
    pub nodes: usize,
    /// `(dist, log u)` samples used by the fit.
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

/// Least-squares fit of `log u` against `dist^{2−κ}` over nodes with
/// `r1 ≤ |y − y_c| ≤ r2` (rescaled units), excluding the outer 10% of the
/// grid.
pub fn decay_fit(u: &Field, center: &[f64], annulus: (f64, f64), kappa: f64, eps: f64) -> Result<DecayFit> {
    let (r1, r2) = annulus;
    if !(r1 >= 0.0 && r2 > r1) {
        return Err(AnalysisError::Invalid(format!("bad annulus ({r1}, {r2})")));
    }
    let g = u.grid();
    let yc: Vec<f64> = center.iter().map(|c| c / eps).collect();
    let cut = 0.9 * g.half_width();
    let exponent = 2.0 - kappa;
    let mut samples = Vec::new();
    let mut y = vec![0.0; g.dim()];
    for (k, &val) in u.values().iter().enumerate() {
        if !(val > 0.0) {
            continue;
        }
        g.node(k, &mut y);
        if y.iter().any(|c| c.abs() > cut) {
            continue;
        }
        let d = match g.mode() {
            GridMode::Radial => (y[0] - yc.first().copied().unwrap_or(0.0)).abs(),
            GridMode::Full => y
                .iter()
                .enumerate()
                .map(|(i, c)| (c - yc.get(i).copied().unwrap_or(0.0)).powi(2))
                .sum::<f64>()
                .sqrt(),
        };
        if d >= r1 && d <= r2 {
            samples.push((d, val.ln()));
        }
    }
    if samples.len() < MIN_FIT_NODES {
        return Err(AnalysisError::EmptyAnnulus { nodes: samples.len() });
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|(d, _)| d.powf(exponent)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = samples.iter().map(|(_, l)| l).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&samples).map(|(x, (_, l))| (x - mx) * (l - my)).sum();
    let syy: f64 = samples.iter().map(|(_, l)| (l - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::Invalid("annulus samples a single distance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&samples)
        .map(|(x, (_, l))| (l - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy <= n * (1e-12 * (1.0 + my.abs())).powi(2) { 1.0 } else { 1.0 - ss_res / syy };
    Ok(DecayFit {
        slope,
        intercept,
        r2,
        slope_original: slope / eps.powf(exponent),
        exponent,
        annulus,
        nodes: samples.len(),
        samples,
    })
}

/// `‖u − U_{a,b}(· − y*)‖_{H¹}` with `y*` the concentration point of `u`.
pub fn profile_distance(u: &Field, profile: &LimitProfile) -> f64 {
    let center = locate_concentration_rescaled(u);
    let p = profile.sample(u.grid(), &center);
    let w = u.axpy(-1.0, &p);
    (w.dirichlet_energy() + w.dot(&w)).max(0.0).sqrt()
}

/// Barycenter window in original coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Window {
    All,
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Window {
    fn contains(&self, x: &[f64]) -> bool {
        match self {
            Window::All => true,
            Window::Ball { center, radius } => {
                x.iter()
                    .enumerate()
                    .map(|(i, c)| (c - center.get(i).copied().unwrap_or(0.0)).powi(2))
                    .sum::<f64>()
                    <= radius * radius
            }
            Window::Box { lo, hi } => x.iter().enumerate().all(|(i, c)| {
                *c >= lo.get(i).copied().unwrap_or(f64::NEG_INFINITY) && *c <= hi.get(i).copied().unwrap_or(f64::INFINITY)
            }),
        }
    }
}

/// `∫_W εy |u|^p / ∫ |u|^p`, in original coordinates. Radial fields have
/// their barycenter at the origin.
pub fn barycenter(u: &Field, eps: f64, p: f64, window: &Window) -> Result<Vec<f64>> {
    let g = u.grid();
    let dim = g.dim();
    let crit = if dim <= 2 { f64::INFINITY } else { 2.0 * dim as f64 / (dim as f64 - 2.0) };
    if !(p > 2.0 && p < crit) {
        return Err(AnalysisError::Invalid(format!("p = {p} outside (2, {crit})")));
    }
    let w = g.weights();
    let v = u.values();
    let total = neumaier(v.iter().zip(w).map(|(s, wk)| wk * s.abs().powf(p)));
    if !(total > 0.0) {
        return Err(AnalysisError::ZeroMass);
    }
    let mut y = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    let mut inside = 0.0;
    let mut moments = vec![Vec::new(); dim];
    for k in 0..v.len() {
        g.node(k, &mut y);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = eps * yi;
        }
        if !window.contains(&x) {
            continue;
        }
        let m = w[k] * v[k].abs().powf(p);
        inside += m;
        if g.mode() == GridMode::Full {
            for a in 0..dim {
                moments[a].push(m * x[a]);
            }
        }
    }
    if !(inside > 0.0) {
        return Err(AnalysisError::ZeroMass);
    }
    if g.mode() == GridMode::Radial {
        return Ok(vec![0.0; dim]);
    }
    Ok(moments.into_iter().map(|m| neumaier(m) / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;
    use std::sync::Arc;

    fn grid(dim: usize, mode: GridMode, l: f64, n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(dim, mode, l, n).unwrap())
    }

    #[test]
    fn closed_form_levels() {
        let p = limit_profile(0.0, 1.0, 1).unwrap();
        assert_relative_eq!(p.level, 0.5 * E * PI.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(p.level, 2.40901, max_relative = 1e-5);
        assert_relative_eq!(p.value(&[0.0]), E.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(limit_profile(0.0, 1.0, 2).unwrap().value(&[0.0, 0.0]), E, max_relative = 1e-15);
        for (a, b, n) in [(1.0, 2.0, 1), (-0.5, 0.5, 2), (2.0, 3.0, 3)] {
            let m = ground_level(a, b, n);
            assert_relative_eq!(m, 0.5 * concentration_function(a, b, n) * u_norm_sq(n), max_relative = 1e-14);
        }
        assert!(limit_profile(0.0, 0.0, 1).is_err());
        assert_relative_eq!(ground_level(1.0, 1.0, 3) / ground_level(0.0, 1.0, 3), E, max_relative = 1e-14);
    }

    #[test]
    fn level_identity_on_fine_grids() {
        for a in [-1.0, 0.0, 1.0] {
            for b in [0.5, 1.0, 2.0] {
                let p = limit_profile(a, b, 1).unwrap();
                let g = grid(1, GridMode::Full, 14.0, 20001);
                let u = p.sample(&g, &[0.0]);
                let e = autonomous_energy(&u, a, b);
                assert!((e / p.level - 1.0).abs() < 1e-6, "{a} {b}: {e} {}", p.level);
            }
        }
    }

    #[test]
    fn profile_residual_vanishes_with_h() {
        let p = limit_profile(0.7, 1.6, 1).unwrap();
        let res = |n: usize| {
            let g = grid(1, GridMode::Full, 10.0, n);
            let u = p.sample(&g, &[0.0]);
            let lap = u.laplacian();
            let r: Vec<f64> = (0..g.len())
                .map(|k| {
                    if g.is_boundary(k) {
                        return 0.0;
                    }
                    let s = u.values()[k];
                    -lap.values()[k] + p.a * s - p.b * crate::penalty::s_log_s2(s)
                })
                .collect();
            g.dot(&r, &r).sqrt()
        };
        let (r1, r2) = (res(401), res(801));
        assert!(r1 / r2 > 3.8, "{r1} {r2}");
    }

    #[test]
    fn ray_profile_and_max() {
        let p = limit_profile(0.5, 1.0, 1).unwrap();
        let g = grid(1, GridMode::Full, 14.0, 20001);
        let u = p.sample(&g, &[0.0]);
        for t in [0.5, 1.0, 2.0] {
            let num = autonomous_energy(&u.scaled(t), p.a, 1.0);
            assert!((num / p.ray_energy(t) - 1.0).abs() < 1e-6);
        }
        let scan: Vec<f64> = (0..=200).map(|i| 0.99 + 1e-4 * i as f64).collect();
        let best = scan
            .iter()
            .copied()
            .max_by(|a, b| autonomous_energy(&u.scaled(*a), p.a, 1.0).total_cmp(&autonomous_energy(&u.scaled(*b), p.a, 1.0)))
            .unwrap();
        assert!((best - 1.0).abs() <= 1e-4, "{best}");
        assert_relative_eq!(p.ray_energy(1.0), p.level, max_relative = 1e-15);
    }

    #[test]
    fn monotone_in_a() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=100 {
            let a = -3.0 + 0.06 * i as f64;
            let m = ground_level(a, 1.0, 2);
            assert!(m > prev);
            prev = m;
        }
    }

    #[test]
    fn gauge_rules() {
        let g = grid(1, GridMode::Full, 60.0, 601);
        for a in [-1.0, 0.0, 0.5, 2.0] {
            let c = auto_gauge_shift(&g, 0.1, 3.0, &Potential::constant(a), None).unwrap();
            assert_eq!(c, (1.0f64 - a).max(0.0));
        }
        let harm = Potential::from(crate::potential::BuiltinPotential::HarmonicRepulsive);
        let c = auto_gauge_shift(&g, 0.1, 3.0, &harm, None).unwrap();
        assert!((c - 10.0).abs() < 1e-9, "{c}");
        // e^{−1/2} U₁ = U₀
        let u1 = limit_profile(1.0, 1.0, 1).unwrap();
        let u0 = limit_profile(0.0, 1.0, 1).unwrap();
        assert_relative_eq!(unshift_factor(1.0) * u1.value(&[0.3]), u0.value(&[0.3]), max_relative = 1e-15);
        let konst = Potential::constant(0.3);
        let (shifted, f) = gauge_shift(&konst, None, 0.0);
        assert_eq!(f, 1.0);
        assert_eq!(shifted(&[1.0]).unwrap(), 0.3);
    }

    #[test]
    fn concentration_point() {
        let g = grid(2, GridMode::Full, 6.0, 121);
        let p = limit_profile(0.0, 1.0, 2).unwrap();
        let y0 = [0.537, -1.211];
        let u = p.sample(&g, &y0);
        let y = locate_concentration_rescaled(&u);
        let h = g.spacing();
        assert!((y[0] - y0[0]).abs() <= h * h && (y[1] - y0[1]).abs() <= h * h, "{y:?}");
        // two equal maxima: first in index order wins
        let g1 = grid(1, GridMode::Full, 4.0, 81);
        let twin = Field::from_fn(g1.clone(), |y| (-(y[0].abs() - 2.0).powi(2)).exp());
        let y = locate_concentration_rescaled(&twin);
        assert!((y[0] + 2.0).abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn decay_fits() {
        let g = grid(2, GridMode::Full, 8.0, 161);
        let p = limit_profile(0.0, 1.0, 2).unwrap();
        let u = p.sample(&g, &[0.0, 0.0]);
        let fit = decay_fit(&u, &[0.0, 0.0], (2.0, 4.0), 0.0, 0.5).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.01 && fit.r2 > 0.9999);
        assert_relative_eq!(fit.slope_original, fit.slope / 0.25);

        let flat = Field::from_fn(g.clone(), |_| 0.3);
        let fit = decay_fit(&flat, &[0.0, 0.0], (2.0, 4.0), 0.0, 0.5).unwrap();
        assert!(fit.slope.abs() < 1e-12 && fit.r2 == 1.0, "{fit:?}");
        assert!(matches!(
            decay_fit(&flat, &[0.0, 0.0], (2.0, 2.0001), 0.0, 0.5),
            Err(AnalysisError::EmptyAnnulus { .. })
        ));
        // outer 10% is excluded
        let flat1 = Field::from_fn(grid(1, GridMode::Full, 8.0, 161), |_| 0.3);
        assert!(matches!(
            decay_fit(&flat1, &[0.0], (7.5, 11.0), 0.0, 0.5),
            Err(AnalysisError::EmptyAnnulus { nodes: 0 })
        ));

        let eps: f64 = 0.25;
        let alpha = (1.0 + (1.0 - 4.0 * eps * eps).sqrt()) / 4.0;
        let g1 = grid(1, GridMode::Full, 24.0, 4096);
        let ex = Field::from_fn(g1, |y| (alpha * (1.0 - y[0] * y[0])).exp());
        let fit = decay_fit(&ex, &[0.0], (2.0, 4.0), 0.0, eps).unwrap();
        let target = -(1.0 + 0.75f64.sqrt()) / 4.0 / (eps * eps);
        assert!((fit.slope_original / target - 1.0).abs() < 0.02);
    }

    #[test]
    fn profile_distances() {
        let g = grid(1, GridMode::Full, 12.0, 1201);
        let p = limit_profile(1.0, 1.0, 1).unwrap();
        let u = p.sample(&g, &[0.8]);
        assert!(profile_distance(&u, &p) < 1e-12);
        let two = u.scaled(2.0);
        let norm = (u.dirichlet_energy() + u.dot(&u)).sqrt();
        assert!((profile_distance(&two, &p) - norm).abs() < 1e-9 * norm);
    }

    #[test]
    fn barycenters() {
        let g = grid(2, GridMode::Full, 8.0, 161);
        let p = limit_profile(0.0, 1.0, 2).unwrap();
        let y0 = [1.5, -0.5];
        let eps = 0.2;
        let u = p.sample(&g, &y0);
        let b = barycenter(&u, eps, 3.0, &Window::All).unwrap();
        let h2 = g.spacing().powi(2);
        assert!((b[0] - eps * y0[0]).abs() <= h2 && (b[1] - eps * y0[1]).abs() <= h2, "{b:?}");
        let far = Window::Ball { center: vec![10.0, 10.0], radius: 0.1 };
        assert_eq!(barycenter(&u.scaled(0.0), eps, 3.0, &Window::All), Err(AnalysisError::ZeroMass));
        assert_eq!(barycenter(&u, eps, 3.0, &far), Err(AnalysisError::ZeroMass));
        // a window covering the right half shifts the centroid right of the
        // half-mass-weighted center
        let c = eps * y0[0];
        let half = Window::Box { lo: vec![c, -10.0], hi: vec![10.0, 10.0] };
        let bh = barycenter(&u, eps, 3.0, &half).unwrap();
        let oracle = {
            let v = u.values();
            let w = g.weights();
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..v.len() {
                let y = g.node_vec(k);
                let m = w[k] * v[k].abs().powi(3);
                den += m;
                if eps * y[0] >= c {
                    num += m * eps * y[0];
                }
            }
            num / den
        };
        assert!((bh[0] - oracle).abs() < 1e-12);
        assert!(barycenter(&u, eps, 2.0, &Window::All).is_err());
    }
}
