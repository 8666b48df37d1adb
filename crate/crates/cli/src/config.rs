//! `key=value` run configuration. The file named by `HETEROKINK_CONFIG` sets
//! defaults; command-line flags override it.

use std::collections::BTreeMap;
use std::path::Path;

use heterokink::bvp::BvpConfig;
use heterokink::shoot::ShootConfig;

pub const ENV_VAR: &str = "HETEROKINK_CONFIG";

/// Every recognised key with its default, in the order `config --show`
/// prints them.
pub const KEYS: &[(&str, &str)] = &[
    ("shoot.eps_offset", "1e-6"),
    ("shoot.threshold", "1.5"),
    ("shoot.a_min", "0.55"),
    ("shoot.a_max", "0.9999"),
    ("shoot.a_step", "1e-3"),
    ("shoot.refine_below", "0.05"),
    ("shoot.bisect_tol", "1e-12"),
    ("shoot.accept_tol", "1e-8"),
    ("shoot.x_max", "600"),
    ("integrate.rtol", "1e-10"),
    ("integrate.atol", "1e-12"),
    ("integrate.h_init", "1e-3"),
    ("integrate.h_max", "1"),
    ("integrate.max_steps", "1000000"),
    ("bvp.tol", "1e-9"),
    ("bvp.newton_tol", "1e-10"),
    ("bvp.max_newton", "40"),
    ("bvp.max_nodes", "10000"),
    ("bvp.min_damping", "9.5367431640625e-7"),
    ("bvp.max_refinements", "40"),
    ("trace.steps", "10"),
    ("trace.window", "0.05"),
    ("fit.delta_min", "0"),
    ("fit.delta_max", "inf"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub shoot: ShootConfig,
    pub bvp: BvpConfig,
    pub trace_steps: usize,
    /// Half-width of the `A` window searched when re-locating a stored row.
    pub trace_window: f64,
    pub fit_delta_min: f64,
    pub fit_delta_max: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            shoot: ShootConfig::default(),
            bvp: BvpConfig::default(),
            trace_steps: 0,
            trace_window: 0.0,
            fit_delta_min: 0.0,
            fit_delta_max: 0.0,
        };
        for (k, v) in KEYS {
            c.set(k, v).expect("built-in defaults parse");
        }
        c
    }
}

fn real(key: &str, v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("{key}: '{v}' is not a number"))
}

fn count(key: &str, v: &str) -> Result<usize, String> {
    v.parse::<usize>().map_err(|_| format!("{key}: '{v}' is not a non-negative integer"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let s = &mut self.shoot;
        let b = &mut self.bvp;
        match key {
            "shoot.eps_offset" => s.eps_offset = real(key, v)?,
            "shoot.threshold" => s.threshold = real(key, v)?,
            "shoot.a_min" => s.a_min = real(key, v)?,
            "shoot.a_max" => s.a_max = real(key, v)?,
            "shoot.a_step" => s.a_step = real(key, v)?,
            "shoot.refine_below" => s.refine_below = real(key, v)?,
            "shoot.bisect_tol" => s.bisect_tol = real(key, v)?,
            "shoot.accept_tol" => s.accept_tol = real(key, v)?,
            "shoot.x_max" => s.x_max = real(key, v)?,
            "integrate.rtol" => s.integrator.rtol = real(key, v)?,
            "integrate.atol" => s.integrator.atol = real(key, v)?,
            "integrate.h_init" => s.integrator.h_init = real(key, v)?,
            "integrate.h_max" => s.integrator.h_max = real(key, v)?,
            "integrate.max_steps" => s.integrator.max_steps = count(key, v)?,
            "bvp.tol" => b.tol = real(key, v)?,
            "bvp.newton_tol" => b.newton_tol = real(key, v)?,
            "bvp.max_newton" => b.max_newton = count(key, v)?,
            "bvp.max_nodes" => b.max_nodes = count(key, v)?,
            "bvp.min_damping" => b.min_damping = real(key, v)?,
            "bvp.max_refinements" => b.max_refinements = count(key, v)?,
            "trace.steps" => self.trace_steps = count(key, v)?,
            "trace.window" => self.trace_window = real(key, v)?,
            "fit.delta_min" => self.fit_delta_min = real(key, v)?,
            "fit.delta_max" => self.fit_delta_max = real(key, v)?,
            _ => return Err(format!("unknown configuration key '{key}'")),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("{origin}:{}: expected key=value", i + 1))?;
            self.set(k.trim(), v.trim()).map_err(|e| format!("{origin}:{}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut c = RunConfig::default();
        c.apply_text(&text, &path.display().to_string())?;
        Ok(c)
    }

    /// Defaults overlaid with the file named by [`ENV_VAR`], if set.
    pub fn load() -> Result<Self, String> {
        match std::env::var_os(ENV_VAR) {
            Some(p) if !p.is_empty() => Self::from_file(Path::new(&p)),
            _ => Ok(RunConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.shoot.validate().map_err(|e| e.to_string())?;
        self.bvp.validate().map_err(|e| e.to_string())?;
        if self.trace_steps < 2 {
            return Err("trace.steps must be at least 2".into());
        }
        if !(self.trace_window > 0.0) {
            return Err("trace.window must be positive".into());
        }
        if !(self.fit_delta_min >= 0.0 && self.fit_delta_min <= self.fit_delta_max) {
            return Err("fit range must satisfy 0 <= delta_min <= delta_max".into());
        }
        Ok(())
    }

    /// Current values as `key=value` lines.
    pub fn dump(&self) -> String {
        let s = &self.shoot;
        let b = &self.bvp;
        let vals: BTreeMap<&str, String> = [
            ("shoot.eps_offset", s.eps_offset.to_string()),
            ("shoot.threshold", s.threshold.to_string()),
            ("shoot.a_min", s.a_min.to_string()),
            ("shoot.a_max", s.a_max.to_string()),
            ("shoot.a_step", s.a_step.to_string()),
            ("shoot.refine_below", s.refine_below.to_string()),
            ("shoot.bisect_tol", s.bisect_tol.to_string()),
            ("shoot.accept_tol", s.accept_tol.to_string()),
            ("shoot.x_max", s.x_max.to_string()),
            ("integrate.rtol", s.integrator.rtol.to_string()),
            ("integrate.atol", s.integrator.atol.to_string()),
            ("integrate.h_init", s.integrator.h_init.to_string()),
            ("integrate.h_max", s.integrator.h_max.to_string()),
            ("integrate.max_steps", s.integrator.max_steps.to_string()),
            ("bvp.tol", b.tol.to_string()),
            ("bvp.newton_tol", b.newton_tol.to_string()),
            ("bvp.max_newton", b.max_newton.to_string()),
            ("bvp.max_nodes", b.max_nodes.to_string()),
            ("bvp.min_damping", b.min_damping.to_string()),
            ("bvp.max_refinements", b.max_refinements.to_string()),
            ("trace.steps", self.trace_steps.to_string()),
            ("trace.window", self.trace_window.to_string()),
            ("fit.delta_min", self.fit_delta_min.to_string()),
            ("fit.delta_max", self.fit_delta_max.to_string()),
        ]
        .into_iter()
        .collect();
        KEYS.iter().map(|(k, _)| format!("{k}={}\n", vals[k])).collect()
    }
}
