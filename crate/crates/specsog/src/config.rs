//! Flat "key = value" configuration files mirroring the plan parameters.
//!
//! Lines starting with '#' are comments; unknown keys are errors. Every key
//! is optional: missing values fall back to tolerance-driven selection.

use crate::error::{Error, Result};
use crate::long_range::LongMode;
use crate::params::{PlanOptions, SolverPlan};
use crate::windows::WindowKind;
use std::path::Path;

/// Runtime settings that ride along with the plan options.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub plan: PlanOptions,
    pub threads: usize,
    pub neutrality_tol: f64,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            plan: PlanOptions::default(),
            threads: 0,
            neutrality_tol: crate::geometry::DEFAULT_NEUTRALITY_TOL,
            deterministic: true,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_named(&text, &path.display().to_string())
    }

    pub fn from_str_named(text: &str, name: &str) -> Result<Self> {
        let mut config = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
                path: name.into(),
                line: lineno,
                message: "expected 'key = value'".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            config.apply(key, value).map_err(|e| Error::Parse {
                path: name.into(),
                line: lineno,
                message: format!("{e}"),
            })?;
        }
        Ok(config)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let f = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("cannot parse number '{v}'")))
        };
        let u = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("cannot parse integer '{v}'")))
        };
        let bool_of = |v: &str| -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(Error::InvalidParameter(format!("cannot parse bool '{other}'"))),
            }
        };
        let p = &mut self.plan;
        match key {
            "eps" => p.eps = f(value)?,
            "window" => p.window_kind = WindowKind::parse(value)?,
            "long_window" => p.long_window_kind = WindowKind::parse(value)?,
            "nu" => p.poly_degree = u(value)?,
            "c_rat" => p.c_rat = f(value)?,
            "r_cut" => p.r_cut = Some(f(value)?),
            "r_cut_tuning" => p.r_cut_tuning = f(value)?,
            "b" => p.node_ratio = Some(f(value)?),
            "m_gaussians" => p.truncation = Some(u(value)?),
            "eta" => p.eta = Some(f(value)?),
            "lambda_z" => p.lambda_z = Some(f(value)?),
            "grid_x" => set_count(&mut p.counts, 0, u(value)?),
            "grid_y" => set_count(&mut p.counts, 1, u(value)?),
            "grid_z" => set_count(&mut p.counts, 2, u(value)?),
            "support" => p.support = Some(u(value)?),
            "shape" => p.shape = Some(f(value)?),
            "long_grid_x" => set_count2(&mut p.long_counts, 0, u(value)?),
            "long_grid_y" => set_count2(&mut p.long_counts, 1, u(value)?),
            "long_support" => p.long_support = Some(u(value)?),
            "long_shape" => p.long_shape = Some(f(value)?),
            "p_cheb" => p.cheb_degree = Some(u(value)?),
            "q_taylor" => p.taylor_order = Some(u(value)?),
            "q_max" => p.taylor_max = u(value)?,
            "long_mode" => {
                p.long_mode = match value {
                    "auto" => None,
                    other => Some(LongMode::parse(other)?),
                }
            }
            "near_table" => p.near_table = bool_of(value)?,
            "assumption_factor" => p.assumption_factor = f(value)?,
            "threads" => self.threads = u(value)?,
            "neutrality_tol" => self.neutrality_tol = f(value)?,
            "deterministic" => self.deterministic = bool_of(value)?,
            other => {
                return Err(Error::InvalidParameter(format!("unknown key '{other}'")));
            }
        }
        Ok(())
    }
}

fn set_count(counts: &mut Option<[usize; 3]>, axis: usize, value: usize) {
    let mut c = counts.unwrap_or([0, 0, 0]);
    c[axis] = value;
    // unset axes inherit the last set value so single-key configs work
    for v in c.iter_mut() {
        if *v == 0 {
            *v = value;
        }
    }
    *counts = Some(c);
}

fn set_count2(counts: &mut Option<[usize; 2]>, axis: usize, value: usize) {
    let mut c = counts.unwrap_or([0, 0]);
    c[axis] = value;
    for v in c.iter_mut() {
        if *v == 0 {
            *v = value;
        }
    }
    *counts = Some(c);
}

/// Serialize a resolved plan so that re-reading it reproduces the plan
/// exactly (all selection decisions are pinned).
pub fn plan_to_config(plan: &SolverPlan, run: &RunConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    let g = |x: f64| format!("{x:.17e}");
    kv("eps", g(plan.eps));
    kv("window", plan.window_kind.name().into());
    kv("long_window", plan.long_window_kind.name().into());
    kv("nu", plan.poly_degree.to_string());
    kv("c_rat", g(plan.c_rat));
    kv("b", g(plan.decomp.b));
    kv("r_cut", g(plan.decomp.r_cut));
    kv("m_gaussians", plan.decomp.truncation.to_string());
    kv("eta", g(plan.eta));
    if let Some(mid) = &plan.mid {
        kv("lambda_z", g(mid.grid.lambda_z));
        kv("grid_x", mid.grid.counts[0].to_string());
        kv("grid_y", mid.grid.counts[1].to_string());
        kv("grid_z", mid.grid.counts[2].to_string());
        kv("support", mid.windows[0].support_points.to_string());
        kv("shape", g(mid.windows[0].shape));
    }
    if let Some(long) = &plan.long {
        kv("p_cheb", long.cheb_degree.to_string());
        kv("long_mode", long.mode.name().into());
        if long.mode == crate::long_range::LongMode::Fft {
            kv("q_taylor", long.taylor_order.to_string());
            kv("long_grid_x", long.counts[0].to_string());
            kv("long_grid_y", long.counts[1].to_string());
        }
    }
    kv("near_table", plan.near_table.is_some().to_string());
    kv("threads", run.threads.to_string());
    kv("neutrality_tol", g(run.neutrality_tol));
    kv("deterministic", run.deterministic.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::select_parameters;

    #[test]
    fn parse_round_trip_reproduces_plan() {
        let mut run = RunConfig::default();
        run.plan.eps = 1e-6;
        let plan = select_parameters(500, [10.0, 10.0, 5.0], &run.plan).unwrap();
        let text = plan_to_config(&plan, &run);
        let parsed = RunConfig::from_str_named(&text, "inline").unwrap();
        let plan2 = select_parameters(500, [10.0, 10.0, 5.0], &parsed.plan).unwrap();
        assert_eq!(plan.decomp.b.to_bits(), plan2.decomp.b.to_bits());
        assert_eq!(plan.decomp.r_cut.to_bits(), plan2.decomp.r_cut.to_bits());
        assert_eq!(plan.decomp.truncation, plan2.decomp.truncation);
        assert_eq!(plan.split_index, plan2.split_index);
        assert_eq!(plan.mid_counts(), plan2.mid_counts());
        assert_eq!(plan.support(), plan2.support());
        assert_eq!(
            plan.long.as_ref().map(|l| (l.mode, l.cheb_degree, l.counts)),
            plan2.long.as_ref().map(|l| (l.mode, l.cheb_degree, l.counts))
        );
    }

    #[test]
    fn unknown_key_is_an_error_with_line() {
        let err = RunConfig::from_str_named("eps = 1e-3\nwhatever = 7\n", "cfg").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("cfg:2"), "{msg}");
        assert!(msg.contains("whatever"), "{msg}");
    }

    #[test]
    fn comments_and_blank_lines_ok() {
        let cfg = RunConfig::from_str_named(
            "# a comment\n\neps = 1e-9\n  # indented comment\nwindow = kb\n",
            "cfg",
        )
        .unwrap();
        assert_eq!(cfg.plan.eps, 1e-9);
        assert_eq!(cfg.plan.window_kind, WindowKind::KaiserBessel);
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = RunConfig::from_str_named("eps 1e-3\n", "cfg").unwrap_err();
        assert!(format!("{err}").contains("cfg:1"));
    }
}
