//! Critical points of `Γ_ε`.
//!
//! The solver descends on the Nehari set: every trial iterate is made
//! nonnegative, scaled along its ray to the maximizer of `t ↦ Γ_ε(tu)`, and
//! accepted under an Armijo test on `Γ_ε`. Search directions are gradients
//! preconditioned by `(−Δ + Ṽ + w_R + K(−log u² − 2)⁺)⁻¹`.

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, barycenter, locate_concentration, AnalysisError, Window};
use crate::functional::{
    self, energy, energy_total, gradient, h_eps_norm, EnergyBreakdown, FunctionalError, ProblemSpec,
};
use crate::grid::{neumaier, Field, Grid, GridError, GridMode, Shift};
use crate::penalty::{PenaltyConfig, Region};
use crate::potential::{grad_potential, Potential, PotentialError};

#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error("no sign change of t ↦ Γ'(tu)(tu) on the scan range; trace {trace:?}")]
    NoBracket { trace: Vec<(f64, f64)> },
    #[error("iterate collapsed to ‖u‖_ε = {norm:e} below the Nehari floor ε² = {floor:e}")]
    TrivialCollapse { norm: f64, floor: f64 },
    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64, report: Box<SolveReport> },
    #[error("mountain-pass endpoint has Γ = {value} ≥ −2")]
    BadEndpoint { value: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("snapshot: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SolveError>;

/// Initial guess.
#[derive(Debug, Clone)]
pub enum Seed {
    /// `A exp(−|y − x_c/ε|²/(2w²))` for the original problem: `x_c` in
    /// original coordinates, `w` in rescaled units, and the amplitude carried
    /// into the gauge-shifted problem as `e^{c/2}A`.
    Gaussian { center: Vec<f64>, width: f64, amplitude: f64 },
    /// Values for the gauge-shifted problem, resampled onto the problem grid.
    Field(Field),
}

impl Default for Seed {
    fn default() -> Self {
        Seed::Gaussian { center: Vec::new(), width: 1.0, amplitude: 1.0 }
    }
}

impl Seed {
    pub fn realize(&self, spec: &ProblemSpec) -> Field {
        let grid = spec.grid().clone();
        match self {
            Seed::Gaussian { center, width, amplitude } => {
                let eps = spec.cfg().eps;
                let radial = grid.mode() == GridMode::Radial;
                let inv = 1.0 / (2.0 * width * width);
                let amplitude = amplitude / analysis::unshift_factor(spec.cfg().gauge_shift);
                Field::from_fn(grid, |y| {
                    let r2: f64 = if radial {
                        y[0] * y[0]
                    } else {
                        y.iter()
                            .enumerate()
                            .map(|(i, c)| (c - center.get(i).copied().unwrap_or(0.0) / eps).powi(2))
                            .sum()
                    };
                    amplitude * (-r2 * inv).exp()
                })
            }
            Seed::Field(f) => {
                if Arc::ptr_eq(f.grid(), &grid) || **f.grid() == *grid {
                    Field::from_values(grid, f.values().to_vec()).unwrap_or_else(|_| f.clone())
                } else {
                    Field::from_fn(grid, |y| f.sample(y))
                }
            }
        }
    }
}

/// Reflection symmetry `u(−y) = u(y)` handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    /// Enforce evenness when both the seed and the problem are even.
    #[default]
    Auto,
    Even,
    None,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Backtracking factor in `(0, 1)`.
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub initial_step: f64,
    pub positivity: bool,
    pub symmetry: Symmetry,
    pub seed: Seed,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub snapshot_every: Option<usize>,
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-8,
            max_iters: 20_000,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            initial_step: 1.0,
            positivity: true,
            symmetry: Symmetry::Auto,
            seed: Seed::default(),
            cg_tol: 1e-10,
            cg_max_iter: 5000,
            snapshot_every: None,
            snapshot_dir: None,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(SolveError::Invalid(format!("tolerance must be positive, got {}", self.tol_residual)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(SolveError::Invalid(format!("backtracking factor must lie in (0,1), got {}", self.backtrack)));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) || !(self.initial_step > 0.0) {
            return Err(SolveError::Invalid("Armijo constant must lie in (0,1) and the step be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// Solution of the gauge-shifted problem on the problem grid.
    #[serde(skip_serializing)]
    pub u: Field,
    pub gauge_shift: f64,
    /// Energy of the shifted problem.
    pub energy_shifted: EnergyBreakdown,
    /// Energy of the original problem, `e^{−c}` times the shifted one.
    pub energy: EnergyBreakdown,
    /// Attained critical level in original units.
    pub d_est: f64,
    pub residual_pen: f64,
    pub residual_orig: f64,
    /// `|Γ'(u)u| / ‖u‖_ε²`.
    pub nehari_residual: f64,
    pub x_eps: Vec<f64>,
    pub t_history: Vec<f64>,
    pub iterations: usize,
    /// Accepted steps that passed only the round-off acceptance test.
    pub noise_floor_steps: usize,
    pub penalization_active: bool,
    pub nehari_norm_floor_ok: bool,
    pub converged: bool,
}

impl SolveReport {
    /// `e^{−c/2} u`: the solution of the original equation.
    pub fn unshifted(&self) -> Field {
        self.u.scaled(analysis::unshift_factor(self.gauge_shift))
    }
}

/// Everything that varies with the ray parameter of `t ↦ Γ(tu)`.
struct Ray<'a> {
    spec: &'a ProblemSpec,
    u: &'a [f64],
    quad: f64,
}

impl<'a> Ray<'a> {
    fn new(u: &'a Field, spec: &'a ProblemSpec) -> Self {
        let vals = u.values();
        let q = spec.quadratic_coefficient();
        let w = spec.grid().weights();
        let quad = u.dirichlet_energy() + neumaier((0..vals.len()).map(|k| w[k] * q[k] * vals[k] * vals[k]));
        Self { spec, u: vals, quad }
    }

    /// `Γ'(tu)(tu)/t²`.
    fn slope(&self, t: f64) -> f64 {
        let tb = self.spec.tables();
        let w = self.spec.grid().weights();
        let rest = neumaier((0..self.u.len()).map(|k| {
            let s = t * self.u[k];
            if s == 0.0 {
                return 0.0;
            }
            w[k] * self.u[k] * (tb.psi_prime_density(k, s) - tb.k[k] * tb.f(k, s))
        }));
        self.quad + rest / t
    }

    /// `Γ(tu)`.
    fn value(&self, t: f64) -> f64 {
        let tb = self.spec.tables();
        let w = self.spec.grid().weights();
        0.5 * t * t * self.quad
            + neumaier((0..self.u.len()).map(|k| {
                let s = t * self.u[k];
                w[k] * (tb.psi_density(k, s) - tb.k[k] * tb.F(k, s))
            }))
    }
}

/// Scales `u` onto the Nehari set: the root of `t ↦ Γ'(tu)(tu)` where
/// `Γ(tu)` is largest among all sign changes found on a geometric scan of
/// `[10⁻³, 10³]`.
pub fn nehari_scale(u: &Field, spec: &ProblemSpec) -> Result<(f64, Field)> {
    if u.values().iter().all(|&v| v == 0.0) {
        return Err(SolveError::NoBracket { trace: Vec::new() });
    }
    let ray = Ray::new(u, spec);
    let mut trace: Vec<(f64, f64)> = Vec::new();
    let mut t = 1e-3;
    while t <= 1.1e3 {
        trace.push((t, ray.slope(t)));
        t *= 2.0;
    }
    // very large fields: extend the scan downwards until the slope is positive
    while trace[0].1 <= 0.0 && trace[0].0 > 1e-12 {
        let t = trace[0].0 / 2.0;
        trace.insert(0, (t, ray.slope(t)));
    }
    let mut best: Option<(f64, f64)> = None;
    for win in trace.windows(2) {
        let ((t0, f0), (t1, f1)) = (win[0], win[1]);
        if !(f0 > 0.0 && f1 <= 0.0) {
            continue;
        }
        let root = if f1 == 0.0 { t1 } else { illinois(|s| ray.slope(s.exp()), t0.ln(), t1.ln(), f0, f1).exp() };
        let val = ray.value(root);
        if best.map_or(true, |(_, v)| val > v) {
            best = Some((root, val));
        }
    }
    match best {
        Some((t, _)) => Ok((t, u.scaled(t))),
        None => Err(SolveError::NoBracket { trace }),
    }
}

/// Illinois false position on a bracket with `f(a) > 0 ≥ f(b)`.
fn illinois(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> f64 {
    let mut side = 0i8;
    for _ in 0..200 {
        let c = if fa != fb { (a * fb - b * fa) / (fb - fa) } else { 0.5 * (a + b) };
        let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = f(c);
        if fc == 0.0 {
            return c;
        }
        if (fc > 0.0) == (fa > 0.0) {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() <= 4.0 * f64::EPSILON * (1.0 + a.abs().max(b.abs())) {
            break;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

/// `Γ'(u)u / ‖u‖_ε²`.
pub fn nehari_residual(u: &Field, spec: &ProblemSpec) -> Result<f64> {
    let n = h_eps_norm(u, spec)?;
    if n == 0.0 {
        return Ok(0.0);
    }
    Ok(gradient(u, spec)?.dot(u) / (n * n))
}


fn even_values(g: &Grid, v: &[f64]) -> bool {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (0..v.len()).all(|k| (v[k] - v[g.mirror(k)]).abs() <= 1e-14 * scale)
}

/// Whether every coefficient of `Γ_ε` is invariant under `y ↦ −y`.
pub fn problem_is_even(spec: &ProblemSpec) -> bool {
    let g = spec.grid();
    let t = spec.tables();
    even_values(g, &spec.quadratic_coefficient())
        && even_values(g, &t.k)
        && even_values(g, &t.v_bar)
        && even_values(g, &t.phi)
        && (0..g.len()).all(|k| t.in_omega[k] == t.in_omega[g.mirror(k)])
}

fn symmetrize(u: &mut Field) {
    let g = u.grid().clone();
    let v = u.values_mut();
    for k in 0..v.len() {
        let m = g.mirror(k);
        if m > k {
            let avg = 0.5 * (v[k] + v[m]);
            v[k] = avg;
            v[m] = avg;
        }
    }
}

fn preconditioner_shift(u: &Field, spec: &ProblemSpec) -> Shift {
    let q = spec.quadratic_coefficient();
    let k = &spec.tables().k;
    Shift::Field(
        u.values()
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let s2 = (s * s).max(f64::MIN_POSITIVE);
                (q[i] + k[i] * (-s2.ln() - 2.0).max(0.0)).max(1.0)
            })
            .collect(),
    )
}

/// Round-off scale of `Γ_ε(u)`: a small multiple of the sum of the absolute
/// values of its terms.
fn energy_noise(u: &Field, spec: &ProblemSpec) -> Result<f64> {
    let e = energy(u, spec)?;
    Ok(NOISE_FACTOR * (e.kinetic.abs() + e.potential.abs() + e.psi.abs() + e.nonlinear.abs()))
}

const NOISE_FACTOR: f64 = 1e-12;

fn penalization_active(u: &Field, spec: &ProblemSpec, residual_orig: f64, tol: f64) -> bool {
    let t = spec.tables();
    let cap = (-1.0f64).exp();
    let tails_ok = u
        .values()
        .iter()
        .enumerate()
        .all(|(k, &s)| t.in_omega[k] || s.abs() <= t.phi[k].min(cap));
    !(tails_ok && residual_orig <= tol)
}

fn finish(
    u: Field,
    spec: &ProblemSpec,
    opts: &SolveOptions,
    t_history: Vec<f64>,
    iterations: usize,
    noise_floor_steps: usize,
    converged: bool,
) -> Result<SolveReport> {
    let c = spec.cfg().gauge_shift;
    let e = energy(&u, spec)?;
    let residual_pen = functional::residual_penalized(&u, spec)?;
    let residual_orig = e.residual_original;
    let eps = spec.cfg().eps;
    Ok(SolveReport {
        gauge_shift: c,
        energy_shifted: e,
        energy: e.scaled((-c).exp()),
        d_est: e.total * (-c).exp(),
        residual_pen,
        residual_orig,
        nehari_residual: nehari_residual(&u, spec)?,
        x_eps: locate_concentration(&u, spec),
        t_history,
        iterations,
        noise_floor_steps,
        penalization_active: penalization_active(&u, spec, residual_orig, opts.tol_residual),
        nehari_norm_floor_ok: e.h_eps_norm >= eps * eps,
        converged,
        u,
    })
}

fn snapshot(u: &Field, opts: &SolveOptions, it: usize) -> Result<()> {
    if let (Some(every), Some(dir)) = (opts.snapshot_every, opts.snapshot_dir.as_ref()) {
        if every > 0 && it % every == 0 {
            let path = dir.join(format!("iter_{it:06}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| SolveError::Io(format!("{}: {e}", path.display())))?;
            u.write_csv(std::io::BufWriter::new(file)).map_err(|e| SolveError::Io(e.to_string()))?;
        }
    }
    Ok(())
}

/// Nehari-constrained preconditioned descent from `opts.seed`.
pub fn solve_critical(spec: &ProblemSpec, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let eps = spec.cfg().eps;
    let floor = eps * eps;
    let mut u0 = opts.seed.realize(spec);
    if opts.positivity {
        u0 = u0.abs();
    }
    let n0 = h_eps_norm(&u0, spec)?;
    if n0 < floor {
        return Err(SolveError::TrivialCollapse { norm: n0, floor });
    }
    let symmetric = match opts.symmetry {
        Symmetry::Auto => even_values(u0.grid(), u0.values()) && problem_is_even(spec),
        Symmetry::Even => true,
        Symmetry::None => false,
    };
    if symmetric {
        symmetrize(&mut u0);
    }
    let (t0, mut u) = nehari_scale(&u0, spec)?;
    let mut t_history = vec![t0];
    let mut e = energy_total(&u, spec);
    let mut step = opts.initial_step;
    let mut noise_steps = 0;
    let mut it = 0;
    loop {
        let norm = h_eps_norm(&u, spec)?;
        if norm < floor {
            return Err(SolveError::TrivialCollapse { norm, floor });
        }
        let g = gradient(&u, spec)?;
        let un = u.norm_l2();
        let res = g.norm_l2() / un;
        snapshot(&u, opts, it)?;
        if res <= opts.tol_residual {
            return finish(u, spec, opts, t_history, it, noise_steps, true);
        }
        if it >= opts.max_iters {
            let report = finish(u, spec, opts, t_history, it, noise_steps, false)?;
            return Err(SolveError::NoConvergence { iterations: it, residual: res, report: Box::new(report) });
        }
        let shift = preconditioner_shift(&u, spec);
        let d = Field::from_values(
            spec.grid().clone(),
            spec.grid().solve_shifted(g.values(), &shift, opts.cg_tol, opts.cg_max_iter)?,
        )?;
        let slope = g.dot(&d);
        let noise = energy_noise(&u, spec)?;
        let mut alpha = (2.0 * step).min(opts.initial_step);
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let mut w = u.axpy(-alpha, &d);
            if opts.positivity {
                w = w.abs();
            }
            if symmetric {
                symmetrize(&mut w);
            }
            if h_eps_norm(&w, spec)? >= floor {
                if let Ok((t, cand)) = nehari_scale(&w, spec) {
                    let ec = energy_total(&cand, spec);
                    if ec <= e - opts.armijo * alpha * slope {
                        accepted = Some((t, cand, ec, false));
                        break;
                    }
                    if ec <= e + noise {
                        let rc = gradient(&cand, spec)?.norm_l2() / cand.norm_l2();
                        if rc < res {
                            accepted = Some((t, cand, ec, true));
                            break;
                        }
                    }
                }
            }
            alpha *= opts.backtrack;
        }
        match accepted {
            Some((t, cand, ec, noisy)) => {
                u = cand;
                e = ec;
                step = alpha;
                t_history.push(t);
                if noisy {
                    noise_steps += 1;
                }
            }
            None => {
                let report = finish(u, spec, opts, t_history, it, noise_steps, false)?;
                return Err(SolveError::NoConvergence { iterations: it, residual: res, report: Box::new(report) });
            }
        }
        it += 1;
    }
}

/// Everything needed to build a [`ProblemSpec`] for a given `ε`.
#[derive(Debug, Clone)]
pub struct ProblemTemplate {
    pub potential: Potential,
    pub k: Option<Potential>,
    pub omega: Region,
    pub r0: f64,
    pub kappa: f64,
    /// Fixed gauge shift; `None` picks `max(0, max_{B(0,R₀)}(1 − V)/K)`.
    pub gauge_shift: Option<f64>,
    pub dim: usize,
    pub mode: GridMode,
    pub n: usize,
    /// Rescaled half-width; `None` uses `max(2R₀/ε, 12)`.
    pub half_width: Option<f64>,
    pub r_weight: Option<f64>,
}

impl ProblemTemplate {
    pub fn auto_half_width(&self, eps: f64) -> f64 {
        (2.0 * self.r0 / eps).max(12.0)
    }

    pub fn build(&self, eps: f64) -> Result<ProblemSpec> {
        let l = self.half_width.unwrap_or_else(|| self.auto_half_width(eps));
        let grid = Arc::new(Grid::new(self.dim, self.mode, l, self.n)?);
        let c = match self.gauge_shift {
            Some(c) => c,
            None => analysis::auto_gauge_shift(&grid, eps, self.r0, &self.potential, self.k.as_ref())?,
        };
        let cfg = PenaltyConfig::new(eps, self.r0, self.omega.clone(), self.kappa, c)
            .map_err(FunctionalError::from)?;
        Ok(ProblemSpec::new(self.potential.clone(), self.k.clone(), cfg, grid, self.r_weight)?)
    }
}

#[derive(Debug)]
pub struct SweepEntry {
    pub eps: f64,
    pub result: Result<SolveReport>,
}

/// Solves for each `ε` in descending order. With `warm_start` each solve is
/// seeded by the previous solution, held fixed in rescaled coordinates about
/// its concentration point; otherwise entries run in parallel from
/// `opts.seed`.
pub fn continuation_sweep(
    template: &ProblemTemplate,
    eps_list: &[f64],
    opts: &SolveOptions,
    warm_start: bool,
) -> Result<Vec<SweepEntry>> {
    if eps_list.is_empty() {
        return Err(SolveError::Invalid("empty ε list".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(SolveError::Invalid(format!("ε list must be positive and strictly descending: {eps_list:?}")));
    }
    if !warm_start {
        return Ok(eps_list
            .par_iter()
            .map(|&eps| SweepEntry { eps, result: template.build(eps).and_then(|s| solve_critical(&s, opts)) })
            .collect());
    }
    let mut out = Vec::with_capacity(eps_list.len());
    let mut prev: Option<(f64, SolveReport)> = None;
    for &eps in eps_list {
        let result = template.build(eps).and_then(|spec| {
            let mut o = opts.clone();
            if let Some((eps_prev, rep)) = &prev {
                o.seed = Seed::Field(recenter(rep, *eps_prev, &spec));
            }
            solve_critical(&spec, &o)
        });
        if let Ok(rep) = &result {
            prev = Some((eps, rep.clone()));
        }
        out.push(SweepEntry { eps, result });
    }
    Ok(out)
}

/// Previous solution re-expressed on the new grid, keeping its profile fixed
/// in rescaled coordinates relative to the concentration point.
fn recenter(prev: &SolveReport, eps_prev: f64, spec: &ProblemSpec) -> Field {
    let eps = spec.cfg().eps;
    let amp = (0.5 * (spec.cfg().gauge_shift - prev.gauge_shift)).exp();
    let shift: Vec<f64> = prev.x_eps.iter().map(|x| x / eps_prev - x / eps).collect();
    let radial = spec.grid().mode() == GridMode::Radial;
    Field::from_fn(spec.grid().clone(), |y| {
        if radial {
            amp * prev.u.sample(y)
        } else {
            let z: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
            amp * prev.u.sample(&z)
        }
    })
}

#[derive(Debug, Clone)]
pub struct MountainPassOptions {
    /// Nehari descent steps applied to the peak of the path.
    pub iterations: usize,
    /// Extra evaluations per path segment when taking the maximum.
    pub subsamples: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for MountainPassOptions {
    fn default() -> Self {
        Self { iterations: 300, subsamples: 3, cg_tol: 1e-10, cg_max_iter: 5000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MountainPassEstimate {
    /// Upper estimate of `d_ε` for the shifted problem.
    pub level: f64,
    /// Same in original units (`e^{−c}` times `level`).
    pub level_original: f64,
    /// Maximum along the initial straight segment.
    pub initial_max: f64,
    pub endpoint_energy: f64,
    /// Descent steps actually taken on the peak.
    pub iterations: usize,
}

/// Smooth bump `exp(−1/(1 − |y|²))` supported in the unit ball.
pub fn bump(grid: &Arc<Grid>) -> Field {
    Field::from_fn(grid.clone(), |y| {
        let r2: f64 = if grid.mode() == GridMode::Radial { y[0] * y[0] } else { y.iter().map(|c| c * c).sum() };
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
}

/// Upper estimate of the mountain-pass level over paths from 0 to `t_max ω`,
/// `ω` the built-in bump and `t_max` the last of the increasing `path_seeds`.
///
/// The initial path is the segment sampled at `path_seeds`. Relaxation moves
/// its peak by Nehari-constrained descent to some `w`; the relaxed path runs
/// along the ray `s ↦ s w` until `Γ(Tw) ≤ Γ(t_max ω)` and then straight to
/// `t_max ω`. Both paths are evaluated explicitly and the smaller maximum is
/// returned.
pub fn mountain_pass_level(
    spec: &ProblemSpec,
    path_seeds: &[f64],
    opts: &MountainPassOptions,
) -> Result<MountainPassEstimate> {
    if path_seeds.is_empty() || path_seeds.windows(2).any(|w| !(w[1] > w[0])) || !(path_seeds[0] > 0.0) {
        return Err(SolveError::Invalid(format!("path seeds must be positive and increasing: {path_seeds:?}")));
    }
    let omega = bump(spec.grid());
    let t_max = *path_seeds.last().expect("non-empty");
    let end = omega.scaled(t_max);
    let endpoint_energy = energy_total(&end, spec);
    if endpoint_energy >= -2.0 {
        return Err(SolveError::BadEndpoint { value: endpoint_energy });
    }
    let segment: Vec<Field> = std::iter::once(Field::zeros(spec.grid().clone()))
        .chain(path_seeds.iter().map(|&t| omega.scaled(t)))
        .collect();
    let initial_max = path_max(&segment, spec, opts.subsamples);
    let c = spec.cfg().gauge_shift;
    if opts.iterations == 0 {
        return Ok(MountainPassEstimate {
            level: initial_max,
            level_original: initial_max * (-c).exp(),
            initial_max,
            endpoint_energy,
            iterations: 0,
        });
    }
    let solve_opts = SolveOptions {
        max_iters: opts.iterations,
        tol_residual: 1e-12,
        seed: Seed::Field(omega),
        cg_tol: opts.cg_tol,
        cg_max_iter: opts.cg_max_iter,
        ..Default::default()
    };
    let (peak, iterations) = match solve_critical(spec, &solve_opts) {
        Ok(r) => (r.u, r.iterations),
        Err(SolveError::NoConvergence { report, .. }) => (report.u, report.iterations),
        Err(e) => return Err(e),
    };
    let mut t_far = 2.0;
    while energy_total(&peak.scaled(t_far), spec) > endpoint_energy {
        t_far *= 2.0;
        if t_far > 1e6 {
            return Err(SolveError::Invalid("relaxed ray never reaches the endpoint level".into()));
        }
    }
    let m = path_seeds.len().max(8);
    let mut path: Vec<Field> = (0..=m).map(|i| peak.scaled(t_far * i as f64 / m as f64)).collect();
    path.push(peak.clone());
    path.sort_by(|a, b| a.sup_norm().total_cmp(&b.sup_norm()));
    let far = peak.scaled(t_far);
    path.extend((1..=m).map(|i| {
        let s = i as f64 / m as f64;
        far.scaled(1.0 - s).axpy(s, &end)
    }));
    let relaxed = path_max(&path, spec, opts.subsamples);
    let level = relaxed.min(initial_max);
    Ok(MountainPassEstimate { level, level_original: level * (-c).exp(), initial_max, endpoint_energy, iterations })
}

fn path_max(path: &[Field], spec: &ProblemSpec, subsamples: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..path.len() {
        best = best.max(energy_total(&path[i], spec));
        if i + 1 < path.len() {
            for j in 1..=subsamples {
                let s = j as f64 / (subsamples + 1) as f64;
                let p = path[i].scaled(1.0 - s).axpy(s, &path[i + 1]);
                best = best.max(energy_total(&p, spec));
            }
        }
    }
    best
}

/// C∞ radial cutoff: 1 on `r ≤ ½`, 0 on `r ≥ 1`, slope at most 4.
pub fn cutoff(r: f64) -> f64 {
    let h = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let s = 2.0 * (1.0 - r);
    let a = h(s);
    let b = h(1.0 - s);
    if a + b == 0.0 {
        return if r <= 0.5 { 1.0 } else { 0.0 };
    }
    a / (a + b)
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleReport {
    pub report: SolveReport,
    /// `Γ(t(y)ψ(y))` per seed point, shifted units.
    pub seed_levels: Vec<f64>,
    pub chosen: usize,
    pub grad_v_norm: f64,
    pub v_at_x: f64,
    pub barycenter: Vec<f64>,
}

/// `ψ(y) = ζ(ε^{1/3}(· − y/ε)) U_{V(y),K(y)}(· − y/ε)` on the problem grid.
pub fn saddle_seed(spec: &ProblemSpec, point: &[f64]) -> Result<Field> {
    let eps = spec.cfg().eps;
    let (v, k) = spec.coefficients(point)?;
    let v = v + spec.cfg().gauge_shift * k;
    let profile = analysis::limit_profile(v, k, spec.grid().dim())?;
    let center: Vec<f64> = point.iter().map(|x| x / eps).collect();
    let scale = eps.powf(1.0 / 3.0);
    let radial = spec.grid().mode() == GridMode::Radial;
    Ok(Field::from_fn(spec.grid().clone(), |y| {
        let r2: f64 = if radial {
            y[0] * y[0]
        } else {
            y.iter().enumerate().map(|(i, c)| (c - center.get(i).copied().unwrap_or(0.0)).powi(2)).sum()
        };
        cutoff(scale * r2.sqrt()) * profile.value_at_radius_sq(r2)
    }))
}

/// Finite-family min-max: projects each seed `ψ(y)` onto the Nehari set,
/// picks the one with the largest energy (first index on ties within 10⁻⁹
/// relative) and descends from it.
pub fn saddle_minmax(spec: &ProblemSpec, seed_points: &[Vec<f64>], opts: &SolveOptions) -> Result<SaddleReport> {
    if seed_points.is_empty() {
        return Err(SolveError::Invalid("no seed points".into()));
    }
    let projected: Vec<(f64, Field)> = seed_points
        .par_iter()
        .map(|p| {
            let psi = saddle_seed(spec, p)?;
            let (_, w) = nehari_scale(&psi, spec)?;
            Ok((energy_total(&w, spec), w))
        })
        .collect::<Result<_>>()?;
    let seed_levels: Vec<f64> = projected.iter().map(|(e, _)| *e).collect();
    let mut chosen = 0;
    for (i, &e) in seed_levels.iter().enumerate() {
        if e > seed_levels[chosen] + 1e-9 * seed_levels[chosen].abs() {
            chosen = i;
        }
    }
    let mut o = opts.clone();
    o.seed = Seed::Field(projected[chosen].1.clone());
    let report = solve_critical(spec, &o)?;
    let x = &report.x_eps;
    let grad = grad_potential(spec.potential(), x, 1e-5)?;
    let grad_v_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let (v_at_x, _) = spec.coefficients(x)?;
    let n = spec.grid().dim() as f64;
    let p = if n <= 2.0 { 3.0 } else { 2.0 + (2.0 / (n - 2.0)).min(1.0) };
    let barycenter = barycenter(&report.u, spec.cfg().eps, p, &Window::All)?;
    Ok(SaddleReport { report, seed_levels, chosen, grad_v_norm, v_at_x, barycenter })
}
