//! `report.json` and `sweep.csv`.

use std::io::Write;

use logbound::analysis::{decay_fit, limit_profile, profile_distance, DecayFit};
use logbound::functional::{EnergyBreakdown, ProblemSpec};
use logbound::solve::{MountainPassEstimate, SaddleReport, SolveReport};
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::CliError;

/// Decay fit and limit-profile comparison of a solution of the original
/// equation.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub decay: Option<DecayFit>,
    pub decay_error: Option<String>,
    pub profile_a: f64,
    pub profile_b: f64,
    pub profile_distance: f64,
}

pub fn diagnostics(report: &SolveReport, spec: &ProblemSpec, cfg: &RunConfig) -> Result<Diagnostics, CliError> {
    let u = report.unshifted();
    let eps = spec.cfg().eps;
    let (decay, decay_error) = match decay_fit(&u, &report.x_eps, cfg.raw.annulus, spec.cfg().kappa, eps) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let (a, b) = spec.coefficients(&report.x_eps).map_err(|e| CliError::Config(e.to_string()))?;
    let profile = limit_profile(a, b, spec.grid().dim()).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Diagnostics { decay, decay_error, profile_a: a, profile_b: b, profile_distance: profile_distance(&u, &profile) })
}

#[derive(Debug, Serialize)]
pub struct Residuals {
    pub penalized: f64,
    pub original: f64,
    pub nehari: f64,
}

#[derive(Debug, Serialize)]
pub struct DecaySummary {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
    pub slope_original: Option<f64>,
    pub exponent: f64,
    pub annulus: (f64, f64),
    pub nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ProfileSummary {
    pub a: f64,
    pub b: f64,
    pub distance: f64,
}

#[derive(Debug, Serialize)]
pub struct Flags {
    pub penalization_active: bool,
    pub nehari_floor: bool,
    pub converged: bool,
}

#[derive(Debug, Serialize)]
pub struct Resolved {
    pub eps: f64,
    pub r0: f64,
    pub half_width: f64,
    pub points_per_axis: usize,
    pub dim: usize,
    pub gauge_shift: f64,
}

#[derive(Debug, Serialize)]
pub struct SaddleSummary {
    /// Original units.
    pub seed_levels: Vec<f64>,
    pub chosen: usize,
    pub grad_v_norm: f64,
    pub v_at_x: f64,
    pub barycenter: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub config_echo: Value,
    pub resolved: Resolved,
    pub status: &'static str,
    /// Original units.
    pub energy: EnergyBreakdown,
    pub energy_shifted: EnergyBreakdown,
    pub d_est: f64,
    pub residuals: Residuals,
    pub x_eps: Vec<f64>,
    pub decay: DecaySummary,
    pub profile: ProfileSummary,
    pub flags: Flags,
    pub iterations: usize,
    pub t_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mountain_pass: Option<MountainPassEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saddle: Option<SaddleSummary>,
}

impl RunReport {
    pub fn new(
        cfg: &RunConfig,
        spec: &ProblemSpec,
        eps: f64,
        r: &SolveReport,
        diag: Diagnostics,
        mountain_pass: Option<MountainPassEstimate>,
        saddle: Option<SaddleReport>,
    ) -> Self {
        let g = spec.grid();
        let status = if !r.converged {
            "no_convergence"
        } else if r.penalization_active {
            "penalization_active"
        } else {
            "ok"
        };
        let exponent = 2.0 - spec.cfg().kappa;
        let decay = match &diag.decay {
            Some(f) => DecaySummary {
                slope: Some(f.slope),
                intercept: Some(f.intercept),
                r2: Some(f.r2),
                slope_original: Some(f.slope_original),
                exponent,
                annulus: f.annulus,
                nodes: f.nodes,
                error: None,
            },
            None => DecaySummary {
                slope: None,
                intercept: None,
                r2: None,
                slope_original: None,
                exponent,
                annulus: cfg.raw.annulus,
                nodes: 0,
                error: diag.decay_error.clone(),
            },
        };
        Self {
            config_echo: cfg.echo.clone(),
            resolved: Resolved {
                eps,
                r0: spec.cfg().r0,
                half_width: g.half_width(),
                points_per_axis: g.points_per_axis(),
                dim: g.dim(),
                gauge_shift: r.gauge_shift,
            },
            status,
            energy: r.energy,
            energy_shifted: r.energy_shifted,
            d_est: r.d_est,
            residuals: Residuals { penalized: r.residual_pen, original: r.residual_orig, nehari: r.nehari_residual },
            x_eps: r.x_eps.clone(),
            decay,
            profile: ProfileSummary { a: diag.profile_a, b: diag.profile_b, distance: diag.profile_distance },
            flags: Flags {
                penalization_active: r.penalization_active,
                nehari_floor: r.nehari_norm_floor_ok,
                converged: r.converged,
            },
            iterations: r.iterations,
            t_history: r.t_history.clone(),
            mountain_pass,
            saddle: saddle.map(|s| SaddleSummary {
                seed_levels: s.seed_levels.iter().map(|l| l * (-r.gauge_shift).exp()).collect(),
                chosen: s.chosen,
                grad_v_norm: s.grad_v_norm,
                v_at_x: s.v_at_x,
                barycenter: s.barycenter,
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub eps: f64,
    pub d_eps: f64,
    pub x_eps: Vec<f64>,
    pub decay_slope: f64,
    pub profile_dist: f64,
    pub penalization_active: Option<bool>,
    pub status: String,
}

impl SweepRow {
    pub fn from_report(eps: f64, r: &SolveReport, diag: &Diagnostics, status: &str) -> Self {
        Self {
            eps,
            d_eps: r.d_est,
            x_eps: r.x_eps.clone(),
            decay_slope: diag.decay.as_ref().map_or(f64::NAN, |f| f.slope),
            profile_dist: diag.profile_distance,
            penalization_active: Some(r.penalization_active),
            status: status.to_string(),
        }
    }

    pub fn failed(eps: f64, dim: usize, message: String) -> Self {
        Self {
            eps,
            d_eps: f64::NAN,
            x_eps: vec![f64::NAN; dim],
            decay_slope: f64::NAN,
            profile_dist: f64::NAN,
            penalization_active: None,
            status: format!("error: {}", message.replace([',', '\n'], ";")),
        }
    }
}

/// Header `eps,d_eps,x_eps,decay_slope,profile_dist,penalization_active,status`
/// with `x_eps` expanded to `x_eps_1,..,x_eps_N` when `N > 1`.
pub fn sweep_header(dim: usize) -> String {
    let x = if dim == 1 {
        "x_eps".to_string()
    } else {
        (1..=dim).map(|i| format!("x_eps_{i}")).collect::<Vec<_>>().join(",")
    };
    format!("eps,d_eps,{x},decay_slope,profile_dist,penalization_active,status")
}

pub fn write_sweep_csv<W: Write>(w: &mut W, dim: usize, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{}", sweep_header(dim))?;
    for r in rows {
        let x: Vec<String> = r.x_eps.iter().map(|v| format!("{v:?}")).collect();
        let pen = r.penalization_active.map_or(String::new(), |p| p.to_string());
        writeln!(
            w,
            "{:?},{:?},{},{:?},{:?},{},{}",
            r.eps,
            r.d_eps,
            x.join(","),
            r.decay_slope,
            r.profile_dist,
            pen,
            r.status
        )?;
    }
    Ok(())
}

/// Parsed `sweep.csv` row, for round trips and downstream checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub eps: f64,
    pub d_eps: f64,
    pub x_eps: Vec<f64>,
    pub decay_slope: f64,
    pub profile_dist: f64,
    pub penalization_active: Option<bool>,
    pub status: String,
}

pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRecord>, CliError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| CliError::Io("empty sweep.csv".into()))?;
    let cols = header.split(',').count();
    let dim = cols - 6;
    let bad = |l: &str| CliError::Io(format!("bad sweep row `{l}`"));
    let num = |s: &str, l: &str| s.parse::<f64>().map_err(|_| bad(l));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.splitn(cols, ',').collect();
            if f.len() != cols {
                return Err(bad(l));
            }
            Ok(SweepRecord {
                eps: num(f[0], l)?,
                d_eps: num(f[1], l)?,
                x_eps: f[2..2 + dim].iter().map(|s| num(s, l)).collect::<Result<_, _>>()?,
                decay_slope: num(f[2 + dim], l)?,
                profile_dist: num(f[3 + dim], l)?,
                penalization_active: match f[4 + dim] {
                    "" => None,
                    s => Some(s.parse().map_err(|_| bad(l))?),
                },
                status: f[5 + dim].to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_round_trip() {
        assert_eq!(sweep_header(1), "eps,d_eps,x_eps,decay_slope,profile_dist,penalization_active,status");
        assert!(sweep_header(2).contains("x_eps_1,x_eps_2,decay_slope"));
        let rows = vec![
            SweepRow {
                eps: 0.5,
                d_eps: 6.25,
                x_eps: vec![-0.1, 0.2],
                decay_slope: -0.5,
                profile_dist: 1e-3,
                penalization_active: Some(false),
                status: "ok".into(),
            },
            SweepRow::failed(0.25, 2, "no bracket, t".into()),
        ];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, 2, &rows).unwrap();
        let back = read_sweep_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].x_eps, vec![-0.1, 0.2]);
        assert_eq!(back[0].penalization_active, Some(false));
        assert!(back[1].d_eps.is_nan() && back[1].penalization_active.is_none());
        assert!(back[1].status.starts_with("error"));
    }
}
