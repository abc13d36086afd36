//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, lists are comma
//! separated and a single value is repeated to the length the chain needs.
//! Later assignments of a key replace earlier ones, so command-line
//! overrides are simply appended. Unset keys keep the four-site defaults of
//! [`SimulationSpec::desk_scale`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{Frame, SimulationSpec, SteadyMethod, Waveform};
use crate::sweep::{ModelSelection, SweepSettings};

/// Where an assignment came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    File {
        path: String,
        line: usize,
    },
    /// The n-th (1-based) command-line override.
    Override(usize),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Override(n) => write!(f, "--set #{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Problem {
    pub origin: Option<Origin>,
    pub message: String,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.origin {
            Some(o) => write!(f, "{o}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub problems: Vec<Problem>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.problems.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl ConfigError {
    fn single(origin: Option<Origin>, message: impl Into<String>) -> Self {
        Self {
            problems: vec![Problem {
                origin,
                message: message.into(),
            }],
        }
    }
}

pub const KEYS: &[&str] = &[
    "n_sites",
    "hopping",
    "onsite_base",
    "onsite_ratio",
    "dephasing",
    "thermal",
    "amplitude",
    "amplitude_ratio",
    "angular_frequency",
    "waveform",
    "gamma_source",
    "gamma_drain",
    "n_source",
    "n_drain",
    "rel_tol",
    "abs_tol",
    "max_step",
    "fixed_step",
    "frame",
    "steady_state_rel_change",
    "steady_method",
    "max_periods",
    "min_periods",
    "samples_per_period",
    "broadening",
    "horizon",
    "sample_interval",
    "sweep.ratio_min",
    "sweep.ratio_max",
    "sweep.points",
    "sweep.gammas",
    "sweep.models",
];

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    key: String,
    value: String,
    origin: Origin,
}

/// Unresolved assignments in the order they were given.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: Vec<Entry>,
    overrides: usize,
}

fn split_assignment(text: &str) -> Option<(String, String)> {
    let (key, value) = text.split_once('=')?;
    let key = key.trim();
    if key.is_empty() {
        return None;
    }
    Some((key.to_string(), value.trim().to_string()))
}

impl RawConfig {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        let mut problems = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let origin = Origin::File {
                path: path.to_string(),
                line: i + 1,
            };
            match split_assignment(content) {
                Some((key, value)) => raw.entries.push(Entry { key, value, origin }),
                None => problems.push(Problem {
                    origin: Some(origin),
                    message: format!("expected `key = value`, found `{content}`"),
                }),
            }
        }
        if problems.is_empty() {
            Ok(raw)
        } else {
            Err(ConfigError { problems })
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::single(
                None,
                format!("cannot read config file {}: {e}", path.display()),
            )
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Appends a `key=value` override.
    pub fn push_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        self.overrides += 1;
        let origin = Origin::Override(self.overrides);
        let (key, value) = split_assignment(assignment).ok_or_else(|| {
            ConfigError::single(
                Some(origin.clone()),
                format!("expected `key=value`, found `{assignment}`"),
            )
        })?;
        self.entries.push(Entry { key, value, origin });
        Ok(())
    }

    fn latest(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn resolve(&self) -> Result<Config, ConfigError> {
        let mut r = Resolver {
            raw: self,
            problems: Vec::new(),
        };
        for e in &self.entries {
            if !KEYS.contains(&e.key.as_str()) {
                r.problems.push(Problem {
                    origin: Some(e.origin.clone()),
                    message: format!("unknown key `{}`", e.key),
                });
            }
        }

        let mut spec = SimulationSpec::desk_scale(0.0);
        let n = r.scalar("n_sites").unwrap_or(spec.chain.n_sites);
        spec.chain.n_sites = n;
        let bonds = n.saturating_sub(1);
        spec.drive.angular_frequency = r
            .scalar("angular_frequency")
            .unwrap_or(spec.drive.angular_frequency);
        let omega = spec.drive.angular_frequency;

        let hopping = r
            .list("hopping")
            .unwrap_or_else(|| vec![spec.chain.hopping[0]]);
        spec.chain.hopping = broadcast(hopping, bonds);
        spec.chain.dephasing = broadcast(r.list("dephasing").unwrap_or_else(|| vec![0.0]), n);
        spec.chain.thermal = broadcast(r.list("thermal").unwrap_or_else(|| vec![0.0]), bonds);
        if let Some(v) = r.scalar("onsite_base") {
            spec.chain.onsite_base = v;
        }
        if let Some(ratio) = r.scalar::<f64>("onsite_ratio") {
            r.exclusive("onsite_ratio", "onsite_base");
            spec.chain.onsite_base = ratio * omega;
        }
        if let Some(v) = r.scalar("amplitude") {
            spec.drive.amplitude = v;
        }
        if let Some(ratio) = r.scalar::<f64>("amplitude_ratio") {
            r.exclusive("amplitude_ratio", "amplitude");
            spec.drive.amplitude = ratio * omega;
        }
        if let Some(w) = r.scalar("waveform") {
            spec.drive.waveform = w;
        }

        let b = &mut spec.baths;
        b.gamma_source = r.scalar("gamma_source").unwrap_or(b.gamma_source);
        b.gamma_drain = r.scalar("gamma_drain").unwrap_or(b.gamma_drain);
        b.n_source = r.scalar("n_source").unwrap_or(b.n_source);
        b.n_drain = r.scalar("n_drain").unwrap_or(b.n_drain);

        let s = &mut spec.integrator;
        s.rel_tol = r.scalar("rel_tol").unwrap_or(s.rel_tol);
        s.abs_tol = r.scalar("abs_tol").unwrap_or(s.abs_tol);
        s.max_step = r.scalar("max_step").or(s.max_step);
        s.fixed_step = r.scalar("fixed_step").or(s.fixed_step);
        s.frame = r.scalar("frame").unwrap_or(s.frame);
        s.steady_state_rel_change = r
            .scalar("steady_state_rel_change")
            .unwrap_or(s.steady_state_rel_change);
        s.steady_method = r.scalar("steady_method").unwrap_or(s.steady_method);
        s.max_periods = r.scalar("max_periods").unwrap_or(s.max_periods);
        s.min_periods = r.scalar("min_periods").unwrap_or(s.min_periods);
        s.samples_per_period = r
            .scalar("samples_per_period")
            .unwrap_or(s.samples_per_period);

        let period = spec.drive.period();
        let defaults = SweepSettings::default();
        let sweep = SweepSettings {
            ratio_min: r.scalar("sweep.ratio_min"),
            ratio_max: r.scalar("sweep.ratio_max"),
            points: r.scalar("sweep.points").unwrap_or(defaults.points),
            gammas: r.list("sweep.gammas").unwrap_or(defaults.gammas),
            models: r.scalar("sweep.models").unwrap_or(defaults.models),
        };
        let config = Config {
            spec,
            broadening: r.scalar("broadening"),
            horizon: r.scalar("horizon").unwrap_or(20.0 * period),
            sample_interval: r.scalar("sample_interval").unwrap_or(period / 16.0),
            sweep,
        };
        if r.problems.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError {
                problems: r.problems,
            })
        }
    }
}

fn broadcast(values: Vec<f64>, len: usize) -> Vec<f64> {
    if values.len() == 1 {
        vec![values[0]; len]
    } else {
        values
    }
}

struct Resolver<'a> {
    raw: &'a RawConfig,
    problems: Vec<Problem>,
}

impl Resolver<'_> {
    fn scalar<V: ConfigValue>(&mut self, key: &str) -> Option<V> {
        let e = self.raw.latest(key)?;
        match V::parse_value(&e.value) {
            Ok(v) => Some(v),
            Err(msg) => {
                self.problems.push(Problem {
                    origin: Some(e.origin.clone()),
                    message: format!("`{key}`: {msg}"),
                });
                None
            }
        }
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let e = self.raw.latest(key)?;
        let mut out = Vec::new();
        if e.value.is_empty() {
            return Some(out);
        }
        for item in e.value.split(',') {
            match f64::parse_value(item.trim()) {
                Ok(v) => out.push(v),
                Err(msg) => {
                    self.problems.push(Problem {
                        origin: Some(e.origin.clone()),
                        message: format!("`{key}`: {msg}"),
                    });
                    return None;
                }
            }
        }
        Some(out)
    }

    fn exclusive(&mut self, key: &str, other: &str) {
        if let (Some(a), Some(_)) = (self.raw.latest(key), self.raw.latest(other)) {
            self.problems.push(Problem {
                origin: Some(a.origin.clone()),
                message: format!("`{key}` and `{other}` set the same quantity; give only one"),
            });
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(text: &str) -> Result<Self, String>;
}

impl ConfigValue for f64 {
    fn parse_value(text: &str) -> Result<Self, String> {
        f64::from_str(text).map_err(|_| format!("`{text}` is not a number"))
    }
}

impl ConfigValue for usize {
    fn parse_value(text: &str) -> Result<Self, String> {
        usize::from_str(text).map_err(|_| format!("`{text}` is not a non-negative integer"))
    }
}

impl ConfigValue for Waveform {
    fn parse_value(text: &str) -> Result<Self, String> {
        match text {
            "cosine" => Ok(Waveform::Cosine),
            "square_coupling" => Ok(Waveform::SquareCoupling),
            _ => Err(format!("`{text}` is not one of cosine, square_coupling")),
        }
    }
}

impl ConfigValue for Frame {
    fn parse_value(text: &str) -> Result<Self, String> {
        match text {
            "lab" => Ok(Frame::Lab),
            "rotating" => Ok(Frame::Rotating),
            _ => Err(format!("`{text}` is not one of lab, rotating")),
        }
    }
}

impl ConfigValue for SteadyMethod {
    fn parse_value(text: &str) -> Result<Self, String> {
        match text {
            "floquet" => Ok(SteadyMethod::Floquet),
            "stepping" => Ok(SteadyMethod::Stepping),
            _ => Err(format!("`{text}` is not one of floquet, stepping")),
        }
    }
}

impl ConfigValue for ModelSelection {
    fn parse_value(text: &str) -> Result<Self, String> {
        match text {
            "quantum" => Ok(ModelSelection::Quantum),
            "classical" => Ok(ModelSelection::Classical),
            "both" => Ok(ModelSelection::Both),
            _ => Err(format!("`{text}` is not one of quantum, classical, both")),
        }
    }
}

/// Everything a config file can set.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub spec: SimulationSpec,
    /// Classical rate broadening; `None` uses the per-bond default.
    pub broadening: Option<f64>,
    /// Trajectory length for `simulate`, seconds.
    pub horizon: f64,
    pub sample_interval: f64,
    pub sweep: SweepSettings,
}

impl Default for Config {
    fn default() -> Self {
        RawConfig::default().resolve().expect("defaults are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_broadcasts() {
        let text =
            "# chain\nn_sites = 3\nhopping = 2e7 # all bonds\ndephasing = 1,2,3\nframe=lab\n";
        let cfg = RawConfig::parse(text, "a.cfg").unwrap().resolve().unwrap();
        assert_eq!(cfg.spec.chain.hopping, vec![2e7, 2e7]);
        assert_eq!(cfg.spec.chain.dephasing, vec![1.0, 2.0, 3.0]);
        assert_eq!(cfg.spec.chain.thermal, vec![0.0, 0.0]);
        assert_eq!(cfg.spec.integrator.frame, Frame::Lab);
    }

    #[test]
    fn reports_every_problem_with_its_line() {
        let text = "n_sites = 3\nbogus = 1\nhopping = x\nnot an assignment\n";
        let err = RawConfig::parse(text, "b.cfg").unwrap_err();
        assert_eq!(
            err.problems[0].origin,
            Some(Origin::File {
                path: "b.cfg".into(),
                line: 4
            })
        );
        let err = RawConfig::parse("n_sites = 3\nbogus = 1\nhopping = x\n", "b.cfg")
            .unwrap()
            .resolve()
            .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("b.cfg:2: unknown key `bogus`"), "{text}");
        assert!(text.contains("b.cfg:3: `hopping`"), "{text}");
    }

    #[test]
    fn overrides_win() {
        let mut raw = RawConfig::parse("amplitude_ratio = 3\n", "c.cfg").unwrap();
        raw.push_override("amplitude_ratio=5").unwrap();
        let cfg = raw.resolve().unwrap();
        assert_eq!(
            cfg.spec.drive.amplitude,
            5.0 * cfg.spec.drive.angular_frequency
        );
        assert!(raw.push_override("nonsense").is_err());
    }
}
