//! Discretization of rescaled space `y = x/ε`.
//!
//! Full mode is a tensor grid on `[-L, L]^N` (N ≤ 3) with trapezoidal
//! weights. Radial mode samples `r ∈ [0, L]` and uses finite-volume weights
//! `|S^{N-1}| ∫ r^{N-1} dr` over each cell, which makes the conservative
//! radial Laplacian self-adjoint in the weighted inner product and gives the
//! origin the symmetric limit `N u''(0)`.
//!
//! Every field obeys homogeneous Dirichlet conditions: boundary nodes are
//! treated as zero by every operator here.

use std::io::{self, BufRead, Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("shift must be at least 1 pointwise, found {0}")]
    BadShift(f64),
    #[error("field dump: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    Full,
    Radial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    mode: GridMode,
    half_width: f64,
    n: usize,
    h: f64,
    weights: Vec<f64>,
    boundary: Vec<bool>,
}

/// Surface area of the unit sphere in R^N.
pub fn sphere_area(dim: usize) -> f64 {
    // Γ(N/2) by recursion from Γ(1/2) or Γ(1)
    let (mut g, mut x) = if dim % 2 == 0 { (1.0, 1.0) } else { (std::f64::consts::PI.sqrt(), 0.5) };
    while x < dim as f64 / 2.0 - 1e-12 {
        g *= x;
        x += 1.0;
    }
    2.0 * std::f64::consts::PI.powf(dim as f64 / 2.0) / g
}

impl Grid {
    pub fn new(dim: usize, mode: GridMode, half_width: f64, n: usize) -> Result<Self, GridError> {
        if dim == 0 {
            return Err(GridError::Invalid("dimension must be at least 1".into()));
        }
        if mode == GridMode::Full && dim > 3 {
            return Err(GridError::Invalid(format!("full mode supports N ≤ 3, got {dim}")));
        }
        if n < 16 {
            return Err(GridError::Invalid(format!("need at least 16 points per axis, got {n}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(GridError::Invalid(format!("half-width must be positive, got {half_width}")));
        }
        let (h, weights, boundary) = match mode {
            GridMode::Full => {
                let h = 2.0 * half_width / (n - 1) as f64;
                let total = n.pow(dim as u32);
                let mut weights = vec![0.0; total];
                let mut boundary = vec![false; total];
                let mut idx = vec![0usize; dim];
                for k in 0..total {
                    let mut rem = k;
                    for a in (0..dim).rev() {
                        idx[a] = rem % n;
                        rem /= n;
                    }
                    let mut w = 1.0;
                    let mut on_boundary = false;
                    for &i in &idx {
                        if i == 0 || i == n - 1 {
                            w *= 0.5 * h;
                            on_boundary = true;
                        } else {
                            w *= h;
                        }
                    }
                    weights[k] = w;
                    boundary[k] = on_boundary;
                }
                (h, weights, boundary)
            }
            GridMode::Radial => {
                let h = half_width / (n - 1) as f64;
                let s = sphere_area(dim) / dim as f64;
                let nd = dim as i32;
                let weights = (0..n)
                    .map(|i| {
                        let r = i as f64 * h;
                        let lo = if i == 0 { 0.0 } else { r - 0.5 * h };
                        let hi = if i == n - 1 { half_width } else { r + 0.5 * h };
                        s * (hi.powi(nd) - lo.powi(nd))
                    })
                    .collect();
                let mut boundary = vec![false; n];
                boundary[n - 1] = true;
                (h, weights, boundary)
            }
        };
        Ok(Self { dim, mode, half_width, n, h, weights, boundary })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Points per axis.
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary[k]
    }

    /// Coordinate of axis node `i` (full mode); symmetric about 0 bit-for-bit.
    #[inline]
    fn axis(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.n - 1) as f64) * self.h
    }

    /// Rescaled coordinates of node `k`. Radial nodes are reported on the
    /// positive x1 axis.
    pub fn node(&self, k: usize, out: &mut [f64]) {
        match self.mode {
            GridMode::Full => {
                let mut rem = k;
                for a in (0..self.dim).rev() {
                    out[a] = self.axis(rem % self.n);
                    rem /= self.n;
                }
            }
            GridMode::Radial => {
                out.iter_mut().for_each(|c| *c = 0.0);
                out[0] = k as f64 * self.h;
            }
        }
    }

    pub fn node_vec(&self, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.node(k, &mut v);
        v
    }

    /// `|y|` at node `k`.
    pub fn radius(&self, k: usize) -> f64 {
        match self.mode {
            GridMode::Radial => k as f64 * self.h,
            GridMode::Full => {
                let mut rem = k;
                let mut s = 0.0;
                for _ in 0..self.dim {
                    let c = self.axis(rem % self.n);
                    s += c * c;
                    rem /= self.n;
                }
                s.sqrt()
            }
        }
    }

    /// Multi-index of node `k` (full mode), axis 1 slowest.
    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        let mut rem = k;
        for a in (0..self.dim).rev() {
            idx[a] = rem % self.n;
            rem /= self.n;
        }
        idx
    }

    /// Index of the node at `−y` (radial nodes are their own mirror).
    pub fn mirror(&self, k: usize) -> usize {
        match self.mode {
            GridMode::Full => self.len() - 1 - k,
            GridMode::Radial => k,
        }
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dim - 1 - axis) as u32)
    }

    /// Discrete Laplacian; zero at boundary nodes.
    pub fn laplacian_values(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        let val = |k: usize| if self.boundary[k] { 0.0 } else { u[k] };
        let ih2 = 1.0 / (self.h * self.h);
        match self.mode {
            GridMode::Full => {
                let strides: Vec<usize> = (0..self.dim).map(|a| self.stride(a)).collect();
                for k in 0..u.len() {
                    if self.boundary[k] {
                        continue;
                    }
                    let c = u[k];
                    let mut acc = 0.0;
                    for &s in &strides {
                        acc += (val(k - s) + val(k + s)) - 2.0 * c;
                    }
                    out[k] = acc * ih2;
                }
            }
            GridMode::Radial => {
                let area = sphere_area(self.dim);
                let nd = self.dim as i32 - 1;
                let mut flux_lo = 0.0;
                for i in 0..self.n - 1 {
                    let r_hi = (i as f64 + 0.5) * self.h;
                    let flux_hi = area * r_hi.powi(nd) * (val(i + 1) - val(i)) / self.h;
                    out[i] = (flux_hi - flux_lo) / self.weights[i];
                    flux_lo = flux_hi;
                }
            }
        }
        out
    }

    /// Diagonal of `-Δ`.
    fn neg_laplacian_diag(&self) -> Vec<f64> {
        let ih2 = 1.0 / (self.h * self.h);
        match self.mode {
            GridMode::Full => (0..self.len())
                .map(|k| if self.boundary[k] { 0.0 } else { 2.0 * self.dim as f64 * ih2 })
                .collect(),
            GridMode::Radial => {
                let area = sphere_area(self.dim);
                let nd = self.dim as i32 - 1;
                (0..self.n)
                    .map(|i| {
                        if self.boundary[i] {
                            return 0.0;
                        }
                        let hi = area * ((i as f64 + 0.5) * self.h).powi(nd) / self.h;
                        let lo = if i == 0 { 0.0 } else { area * ((i as f64 - 0.5) * self.h).powi(nd) / self.h };
                        (hi + lo) / self.weights[i]
                    })
                    .collect()
            }
        }
    }

    /// Quadrature `Σ w_k f_k` with compensated summation in node order.
    pub fn integrate_values(&self, f: &[f64]) -> f64 {
        neumaier(self.weights.iter().zip(f).map(|(w, v)| w * v))
    }

    /// Weighted inner product `Σ w_k a_k b_k`.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        neumaier(self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y))
    }

    /// Applies `(-Δ + shift)` to `w`.
    pub fn apply_shifted(&self, w: &[f64], shift: &Shift) -> Vec<f64> {
        let mut out = self.laplacian_values(w);
        for k in 0..out.len() {
            out[k] = if self.boundary[k] { 0.0 } else { -out[k] + shift.at(k) * w[k] };
        }
        out
    }

    /// Solves `(-Δ + shift) w = rhs` by preconditioned conjugate gradients in
    /// the quadrature-weighted inner product. One-dimensional operators
    /// (1-D full, radial) are preconditioned by an exact tridiagonal solve,
    /// higher-dimensional ones by the diagonal.
    pub fn solve_shifted(
        &self,
        rhs: &[f64],
        shift: &Shift,
        tol: f64,
        max_iter: usize,
    ) -> Result<Vec<f64>, GridError> {
        let nn = self.len();
        for k in 0..nn {
            if !self.boundary[k] && shift.at(k) < 1.0 {
                return Err(GridError::BadShift(shift.at(k)));
            }
        }
        let mut b: Vec<f64> = rhs.to_vec();
        for k in 0..nn {
            if self.boundary[k] {
                b[k] = 0.0;
            }
        }
        let bnorm = self.dot(&b, &b).sqrt();
        let mut x = vec![0.0; nn];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let diag: Vec<f64> = self
            .neg_laplacian_diag()
            .iter()
            .enumerate()
            .map(|(k, d)| d + shift.at(k))
            .collect();
        let tri = if self.dim == 1 || self.mode == GridMode::Radial {
            Some(self.tridiagonal(shift))
        } else {
            None
        };
        let precond = |r: &[f64]| -> Vec<f64> {
            match &tri {
                Some(t) => t.solve(r, &self.boundary),
                None => r
                    .iter()
                    .zip(&diag)
                    .enumerate()
                    .map(|(k, (ri, d))| if self.boundary[k] { 0.0 } else { ri / d })
                    .collect(),
            }
        };
        let mut r = b.clone();
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = self.dot(&r, &z);
        let mut res = 1.0;
        for it in 0..max_iter {
            let ap = self.apply_shifted(&p, shift);
            let pap = self.dot(&p, &ap);
            if pap <= 0.0 {
                return Err(GridError::NoConvergence { iterations: it, residual: res });
            }
            let alpha = rz / pap;
            for k in 0..nn {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            res = self.dot(&r, &r).sqrt() / bnorm;
            if res <= tol {
                return Ok(x);
            }
            z = precond(&r);
            let rz_new = self.dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..nn {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(GridError::NoConvergence { iterations: max_iter, residual: res })
    }

    fn tridiagonal(&self, shift: &Shift) -> Tridiagonal {
        let nn = self.len();
        let mut lower = vec![0.0; nn];
        let mut diag = vec![1.0; nn];
        let mut upper = vec![0.0; nn];
        let ih2 = 1.0 / (self.h * self.h);
        match self.mode {
            GridMode::Full => {
                for k in 1..nn - 1 {
                    lower[k] = -ih2;
                    upper[k] = -ih2;
                    diag[k] = 2.0 * ih2 + shift.at(k);
                }
            }
            GridMode::Radial => {
                let area = sphere_area(self.dim);
                let nd = self.dim as i32 - 1;
                for i in 0..nn - 1 {
                    let hi = area * ((i as f64 + 0.5) * self.h).powi(nd) / self.h;
                    let lo = if i == 0 { 0.0 } else { area * ((i as f64 - 0.5) * self.h).powi(nd) / self.h };
                    let w = self.weights[i];
                    lower[i] = -lo / w;
                    upper[i] = -hi / w;
                    diag[i] = (hi + lo) / w + shift.at(i);
                }
            }
        }
        Tridiagonal { lower, diag, upper }
    }
}

/// Shift term of `(-Δ + shift)`.
#[derive(Debug, Clone)]
pub enum Shift {
    Constant(f64),
    Field(Vec<f64>),
}

impl Shift {
    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        match self {
            Shift::Constant(c) => *c,
            Shift::Field(v) => v[k],
        }
    }
}

struct Tridiagonal {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    /// Thomas algorithm on the interior block; boundary unknowns are zero.
    fn solve(&self, rhs: &[f64], boundary: &[bool]) -> Vec<f64> {
        let n = rhs.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut prev_c = 0.0;
        let mut prev_d = 0.0;
        for i in 0..n {
            if boundary[i] {
                c[i] = 0.0;
                d[i] = 0.0;
                prev_c = 0.0;
                prev_d = 0.0;
                continue;
            }
            let denom = self.diag[i] - self.lower[i] * prev_c;
            c[i] = self.upper[i] / denom;
            d[i] = (rhs[i] - self.lower[i] * prev_d) / denom;
            prev_c = c[i];
            prev_d = d[i];
        }
        let mut next = 0.0;
        for i in (0..n).rev() {
            if boundary[i] {
                x[i] = 0.0;
                next = 0.0;
                continue;
            }
            x[i] = d[i] - c[i] * next;
            next = x[i];
        }
        x
    }
}

pub(crate) fn neumaier<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A real field sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Builds a field from a closure of the rescaled coordinates; boundary
    /// nodes are set to zero.
    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut y = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|k| {
                if grid.is_boundary(k) {
                    0.0
                } else {
                    grid.node(k, &mut y);
                    f(&y)
                }
            })
            .collect();
        Self { grid, values }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Invalid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(GridError::Invalid(format!("non-finite field value {v}")));
        }
        let mut f = Self { grid, values };
        f.enforce_dirichlet();
        Ok(f)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn enforce_dirichlet(&mut self) {
        for k in 0..self.values.len() {
            if self.grid.is_boundary(k) {
                self.values[k] = 0.0;
            }
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, t: f64) -> Field {
        self.map(|v| t * v)
    }

    pub fn abs(&self) -> Field {
        self.map(f64::abs)
    }

    /// `self + t·other`.
    pub fn axpy(&self, t: f64, other: &Field) -> Field {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + t * b).collect();
        Field { grid: self.grid.clone(), values }
    }

    pub fn laplacian(&self) -> Field {
        Field { grid: self.grid.clone(), values: self.grid.laplacian_values(&self.values) }
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate_values(&self.values)
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.grid.dot(&self.values, &other.values)
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫|∇u|²` evaluated as `-∫ u Δu`.
    pub fn dirichlet_energy(&self) -> f64 {
        -self.grid.dot(&self.values, &self.grid.laplacian_values(&self.values))
    }

    /// Multilinear interpolation at a rescaled point (linear in `r` for
    /// radial grids); zero outside the grid.
    pub fn sample(&self, y: &[f64]) -> f64 {
        let g = &self.grid;
        match g.mode() {
            GridMode::Radial => {
                let r = y.iter().map(|c| c * c).sum::<f64>().sqrt();
                let s = r / g.spacing();
                let i = s.floor() as usize;
                if i + 1 >= g.points_per_axis() {
                    return 0.0;
                }
                let t = s - i as f64;
                (1.0 - t) * self.values[i] + t * self.values[i + 1]
            }
            GridMode::Full => {
                let n = g.points_per_axis();
                let mut base = Vec::with_capacity(g.dim());
                let mut frac = Vec::with_capacity(g.dim());
                for &c in y.iter().take(g.dim()) {
                    let s = (c + g.half_width()) / g.spacing();
                    if !(s >= 0.0) || s >= (n - 1) as f64 {
                        return 0.0;
                    }
                    let i = s.floor() as usize;
                    base.push(i);
                    frac.push(s - i as f64);
                }
                let mut acc = 0.0;
                for corner in 0..(1usize << g.dim()) {
                    let mut w = 1.0;
                    let mut k = 0;
                    for a in 0..g.dim() {
                        let bit = (corner >> a) & 1;
                        w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                        k += (base[a] + bit) * g.stride(a);
                    }
                    if w != 0.0 {
                        acc += w * self.values[k];
                    }
                }
                acc
            }
        }
    }

    /// CSV dump: `y1,..,yN,value` (full) or `r,value` (radial).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let g = &self.grid;
        match g.mode() {
            GridMode::Radial => writeln!(w, "r,value")?,
            GridMode::Full => {
                let cols: Vec<String> = (1..=g.dim()).map(|a| format!("y{a}")).collect();
                writeln!(w, "{},value", cols.join(","))?;
            }
        }
        let mut y = vec![0.0; g.dim()];
        for k in 0..g.len() {
            g.node(k, &mut y);
            match g.mode() {
                GridMode::Radial => write!(w, "{:?}", y[0])?,
                GridMode::Full => {
                    for (a, c) in y.iter().enumerate() {
                        if a > 0 {
                            w.write_all(b",")?;
                        }
                        write!(w, "{c:?}")?;
                    }
                }
            }
            writeln!(w, ",{:?}", self.values[k])?;
        }
        Ok(())
    }

    /// Reads a CSV dump written by [`Field::write_csv`] onto `grid`.
    pub fn read_csv<R: BufRead>(grid: Arc<Grid>, r: R) -> Result<Field, GridError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| GridError::Format("empty file".into()))?
            .map_err(|e| GridError::Format(e.to_string()))?;
        let ncols = header.split(',').count();
        let expected = match grid.mode() {
            GridMode::Radial => 2,
            GridMode::Full => grid.dim() + 1,
        };
        if ncols != expected {
            return Err(GridError::Format(format!("expected {expected} columns, header `{header}`")));
        }
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line.map_err(|e| GridError::Format(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let last = line
                .rsplit(',')
                .next()
                .ok_or_else(|| GridError::Format(format!("bad row `{line}`")))?;
            values.push(
                last.trim()
                    .parse::<f64>()
                    .map_err(|e| GridError::Format(format!("bad value `{last}`: {e}")))?,
            );
        }
        Field::from_values(grid, values)
    }

    /// Binary dump: little-endian f64 header `[N, mode, n, L]` (mode 0 = full,
    /// 1 = radial) followed by the node values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        let g = &self.grid;
        let mode = match g.mode() {
            GridMode::Full => 0.0,
            GridMode::Radial => 1.0,
        };
        for v in [g.dim() as f64, mode, g.points_per_axis() as f64, g.half_width()] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Field, GridError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| GridError::Format(e.to_string()))?;
        if buf.len() % 8 != 0 || buf.len() < 32 {
            return Err(GridError::Format("truncated binary dump".into()));
        }
        let vals: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mode = match vals[1] as i64 {
            0 => GridMode::Full,
            1 => GridMode::Radial,
            m => return Err(GridError::Format(format!("unknown mode tag {m}"))),
        };
        let grid = Arc::new(Grid::new(vals[0] as usize, mode, vals[3], vals[2] as usize)?);
        Field::from_values(grid, vals[4..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(dim: usize, mode: GridMode, l: f64, n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(dim, mode, l, n).unwrap())
    }

    fn random_field(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Field {
        Field::from_fn(g.clone(), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(1, GridMode::Full, 1.0, 15).is_err());
        assert!(Grid::new(4, GridMode::Full, 1.0, 16).is_err());
        assert!(Grid::new(4, GridMode::Radial, 1.0, 16).is_ok());
        assert!(Grid::new(1, GridMode::Full, 0.0, 16).is_err());
        assert!(Grid::new(0, GridMode::Radial, 1.0, 16).is_err());
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_measure() {
        for dim in 1..=3 {
            let g = grid(dim, GridMode::Full, 2.5, 17);
            let one = Field::from_values(g.clone(), vec![1.0; g.len()]);
            // from_values zeroes the boundary, integrate the raw weights instead
            let total: f64 = g.weights().iter().sum();
            assert!((total - 5f64.powi(dim as i32)).abs() < 1e-12 * 5f64.powi(dim as i32));
            assert!(one.is_ok());
            assert!(g.weights().iter().all(|&w| w > 0.0));
        }
        for dim in 1..=4 {
            let g = grid(dim, GridMode::Radial, 3.0, 40);
            let total: f64 = g.weights().iter().sum();
            let ball = sphere_area(dim) / dim as f64 * 3f64.powi(dim as i32);
            assert!((total - ball).abs() < 1e-12 * ball);
            assert!(g.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn node_coordinates_are_symmetric() {
        let g = grid(1, GridMode::Full, 7.3, 101);
        for k in 0..g.len() {
            let a = g.node_vec(k)[0];
            let b = g.node_vec(g.len() - 1 - k)[0];
            assert_eq!(a, -b);
        }
        assert_eq!(g.node_vec(0)[0], -7.3);
        let g2 = grid(2, GridMode::Full, 1.0, 16);
        assert_eq!(g2.multi_index(17), vec![1, 1]);
    }

    #[test]
    fn laplacian_of_zero_and_gaussians() {
        let g = grid(1, GridMode::Full, 10.0, 4001);
        assert!(Field::zeros(g.clone()).laplacian().values().iter().all(|&v| v == 0.0));
        let u = Field::from_fn(g.clone(), |y| (-0.5 * y[0] * y[0]).exp());
        let lap = u.laplacian();
        let mid = (g.len() - 1) / 2;
        assert!((lap.values()[mid] / u.values()[mid] + 1.0).abs() < 1e-4);

        let gr = grid(3, GridMode::Radial, 10.0, 1001);
        let u = Field::from_fn(gr.clone(), |y| (-0.5 * y[0] * y[0]).exp());
        let lap = u.laplacian();
        assert!((lap.values()[0] + 3.0 * u.values()[0]).abs() < 1e-3);
        // away from the origin: Δu = (r² − N) u
        let k = 300;
        let r = gr.node_vec(k)[0];
        assert!((lap.values()[k] - (r * r - 3.0) * u.values()[k]).abs() < 1e-4);
    }

    #[test]
    fn gaussian_integrals() {
        use std::f64::consts::PI;
        let g = grid(1, GridMode::Full, 8.0, 1601);
        let f = Field::from_fn(g.clone(), |y| (-y[0] * y[0]).exp());
        assert!((f.integrate() - PI.sqrt()).abs() < 1e-8);
        let gr = grid(2, GridMode::Radial, 8.0, 8001);
        let f = Field::from_fn(gr, |y| (-y[0] * y[0]).exp());
        assert!((f.integrate() - PI).abs() < 1e-6, "{}", f.integrate() - PI);
    }

    #[test]
    fn summation_by_parts_and_negativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (dim, mode, n) in [
            (1, GridMode::Full, 64),
            (2, GridMode::Full, 20),
            (3, GridMode::Full, 16),
            (1, GridMode::Radial, 64),
            (2, GridMode::Radial, 64),
            (5, GridMode::Radial, 64),
        ] {
            let g = grid(dim, mode, 3.0, n);
            for _ in 0..10 {
                let u = random_field(&g, &mut rng);
                let v = random_field(&g, &mut rng);
                let a = u.dot(&v.laplacian());
                let b = v.dot(&u.laplacian());
                let scale = u.dot(&u.laplacian()).abs().max(v.dot(&v.laplacian()).abs());
                assert!((a - b).abs() <= 1e-12 * scale, "{dim} {mode:?}: {a} vs {b}");
                assert!(u.dot(&u.laplacian()) <= 0.0);
            }
        }
    }

    #[test]
    fn quadrature_order() {
        // smooth compactly supported bump
        let bump = |y: &[f64]| {
            let r2: f64 = y.iter().map(|c| c * c).sum();
            if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() * (1.0 + y[0]) } else { 0.0 }
        };
        let reference = {
            let g = grid(2, GridMode::Full, 1.5, 801);
            Field::from_fn(g, bump).integrate()
        };
        let e1 = (Field::from_fn(grid(2, GridMode::Full, 1.5, 25), bump).integrate() - reference).abs();
        let e2 = (Field::from_fn(grid(2, GridMode::Full, 1.5, 49), bump).integrate() - reference).abs();
        assert!(e1 / e2 >= 3.5, "{e1} {e2}");

        let radial_exact = {
            let g = grid(3, GridMode::Radial, 1.5, 20001);
            Field::from_fn(g, |y| bump(&[y[0], 0.0])).integrate()
        };
        let r1 = (Field::from_fn(grid(3, GridMode::Radial, 1.5, 41), |y| bump(&[y[0], 0.0])).integrate() - radial_exact).abs();
        let r2 = (Field::from_fn(grid(3, GridMode::Radial, 1.5, 81), |y| bump(&[y[0], 0.0])).integrate() - radial_exact).abs();
        assert!(r1 / r2 >= 3.5, "{r1} {r2}");
    }

    #[test]
    fn shifted_solve_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (dim, mode, n) in [
            (1, GridMode::Full, 200),
            (2, GridMode::Full, 40),
            (3, GridMode::Radial, 200),
        ] {
            let g = grid(dim, mode, 5.0, n);
            let zero = g.solve_shifted(&vec![0.0; g.len()], &Shift::Constant(1.0), 1e-12, 100).unwrap();
            assert!(zero.iter().all(|&v| v == 0.0));
            let w = random_field(&g, &mut rng);
            let shift = Shift::Field((0..g.len()).map(|_| rng.gen_range(1.0..50.0)).collect());
            for s in [Shift::Constant(1.0), shift] {
                let rhs = g.apply_shifted(w.values(), &s);
                let sol = g.solve_shifted(&rhs, &s, 1e-12, 5000).unwrap();
                let err = sol.iter().zip(w.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-8, "{dim} {mode:?}: {err}");
            }
        }
    }

    #[test]
    fn shifted_solve_reports_failure() {
        let g = grid(2, GridMode::Full, 5.0, 40);
        let rhs = vec![1.0; g.len()];
        assert!(matches!(
            g.solve_shifted(&rhs, &Shift::Constant(1.0), 1e-14, 2),
            Err(GridError::NoConvergence { iterations: 2, .. })
        ));
        assert!(matches!(
            g.solve_shifted(&rhs, &Shift::Constant(0.5), 1e-8, 100),
            Err(GridError::BadShift(_))
        ));
    }

    #[test]
    fn interpolation_and_dumps() {
        let g = grid(2, GridMode::Full, 2.0, 21);
        let f = Field::from_fn(g.clone(), |y| 1.0 + 2.0 * y[0] - y[1]);
        // bilinear interpolation reproduces affine functions in the interior
        assert!((f.sample(&[0.33, -0.41]) - (1.0 + 0.66 + 0.41)).abs() < 1e-12);
        assert_eq!(f.sample(&[5.0, 0.0]), 0.0);

        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        let back = Field::read_csv(g.clone(), io::Cursor::new(csv)).unwrap();
        assert_eq!(back, f);

        let mut bin = Vec::new();
        f.write_binary(&mut bin).unwrap();
        let back = Field::read_binary(io::Cursor::new(bin)).unwrap();
        assert_eq!(back, f);

        let gr = grid(3, GridMode::Radial, 2.0, 21);
        let f = Field::from_fn(gr.clone(), |y| 4.0 - y[0]);
        assert!((f.sample(&[0.3, 0.4, 0.0]) - 3.5).abs() < 1e-12);
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv.clone()).unwrap().starts_with("r,value\n"));
        assert_eq!(Field::read_csv(gr, io::Cursor::new(csv)).unwrap(), f);
    }
}
