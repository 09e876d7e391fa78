//! `key = value` scenario files.
//!
//! ```text
//! # the cat is put to sleep by the mechanism
//! version = cat1
//! t_half = 1.0
//! mech_duration = 0.2
//! ```
//!
//! Keys: `name`, `version`, `lambda`, `t_half`, `mech_duration`,
//! `internal_duration`, `obs_look_time`, `obs_pi`, `ordering`. Only `version`
//! and one of `lambda`/`t_half` are required; everything else falls back to
//! the built-in defaults.

use std::f64::consts::LN_2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scenarios::{
    build, Ordering, ScenarioError, ScenarioSpec, Version, DEFAULT_INTERNAL_DURATION,
    DEFAULT_MECH_DURATION, DEFAULT_OBS_LOOK_TIME, DEFAULT_OBS_PI,
};

const KEYS: [&str; 9] = [
    "name",
    "version",
    "lambda",
    "t_half",
    "mech_duration",
    "internal_duration",
    "obs_look_time",
    "obs_pi",
    "ordering",
];

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("lambda = {lambda} and t_half = {t_half} disagree")]
    Conflict { lambda: f64, t_half: f64 },
    #[error("{0}")]
    Missing(String),
    #[error(transparent)]
    Invalid(#[from] ScenarioError),
}

impl ParseError {
    pub fn is_io(&self) -> bool {
        matches!(self, ParseError::Io { .. })
    }
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

pub fn parse_scenario_file(path: &Path) -> Result<ScenarioSpec, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario_str(&text)
}

fn number(line: usize, key: &str, value: &str) -> Result<f64, ParseError> {
    let x: f64 = value
        .parse()
        .map_err(|_| syntax(line, format!("{key}: {value:?} is not a number")))?;
    if !x.is_finite() {
        return Err(syntax(line, format!("{key} must be finite")));
    }
    Ok(x)
}

/// Parses the file text and checks the result the same way the builders do.
pub fn parse_scenario_str(text: &str) -> Result<ScenarioSpec, ParseError> {
    let mut seen: Vec<(&str, usize, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| syntax(line, format!("expected `key = value`, got {content:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(syntax(line, format!("unknown key {key:?}")));
        }
        if value.is_empty() {
            return Err(syntax(line, format!("{key} has no value")));
        }
        if let Some((_, first, _)) = seen.iter().find(|(k, _, _)| *k == key) {
            return Err(syntax(line, format!("{key} already set on line {first}")));
        }
        seen.push((key, line, value));
    }
    let get = |key: &str| {
        seen.iter()
            .find(|(k, _, _)| *k == key)
            .map(|&(_, l, v)| (l, v))
    };

    let (vline, vtext) =
        get("version").ok_or_else(|| ParseError::Missing("version is required".into()))?;
    let version: Version = vtext
        .parse()
        .map_err(|e: ScenarioError| syntax(vline, e.to_string()))?;

    let lambda = match (get("lambda"), get("t_half")) {
        (None, None) => {
            return Err(ParseError::Missing(
                "one of lambda or t_half is required".into(),
            ))
        }
        (Some((l, v)), None) => number(l, "lambda", v)?,
        (None, Some((l, v))) => LN_2 / number(l, "t_half", v)?,
        (Some((l1, v1)), Some((l2, v2))) => {
            let lambda = number(l1, "lambda", v1)?;
            let t_half = number(l2, "t_half", v2)?;
            if ((lambda * t_half - LN_2) / LN_2).abs() > 1e-9 {
                return Err(ParseError::Conflict { lambda, t_half });
            }
            lambda
        }
    };

    let observed = version.has_observer();
    let natural = version == Version::Cat2Natural;
    for key in ["obs_look_time", "obs_pi"] {
        if let (Some((l, _)), false) = (get(key), observed) {
            return Err(syntax(l, format!("{key} needs a version with an observer")));
        }
    }
    for key in ["ordering", "internal_duration"] {
        if let (Some((l, _)), false) = (get(key), natural) {
            return Err(syntax(l, format!("{key} only applies to cat2-natural")));
        }
    }
    let opt = |key: &str| -> Result<Option<f64>, ParseError> {
        get(key).map(|(l, v)| number(l, key, v)).transpose()
    };
    let (obs_look_time, obs_pi) = match (opt("obs_look_time")?, opt("obs_pi")?) {
        (Some(a), Some(b)) => (Some(a), Some(b)),
        (None, None) if observed => (Some(DEFAULT_OBS_LOOK_TIME), Some(DEFAULT_OBS_PI)),
        (None, None) => (None, None),
        (Some(_), None) => {
            return Err(ParseError::Missing(
                "obs_look_time is set but obs_pi is missing".into(),
            ))
        }
        (None, Some(_)) => {
            return Err(ParseError::Missing(
                "obs_pi is set but obs_look_time is missing".into(),
            ))
        }
    };
    let ordering = match get("ordering") {
        Some((l, v)) => Some(
            v.parse::<Ordering>()
                .map_err(|e: ScenarioError| syntax(l, e.to_string()))?,
        ),
        None if natural => {
            return Err(ParseError::Missing("cat2-natural needs an ordering".into()))
        }
        None => None,
    };
    let name = match (get("name"), ordering) {
        (Some((_, v)), _) => v.to_string(),
        (None, Some(o)) => format!("{}/{}", version.as_str(), o.as_str()),
        (None, None) => version.as_str().to_string(),
    };
    let spec = ScenarioSpec {
        name,
        version,
        lambda: Some(lambda),
        mech_duration: opt("mech_duration")?.unwrap_or(DEFAULT_MECH_DURATION),
        internal_duration: opt("internal_duration")?.unwrap_or(DEFAULT_INTERNAL_DURATION),
        obs_look_time,
        obs_pi,
        ordering,
    };
    spec.check()?;
    Ok(spec)
}

/// Parses and builds, so that `validate` accepts exactly what the builders accept.
pub fn validate_scenario_str(text: &str) -> Result<ScenarioSpec, ParseError> {
    let spec = parse_scenario_str(text)?;
    build(&spec)?;
    Ok(spec)
}

/// File text that parses back to `spec`.
pub fn render_scenario(spec: &ScenarioSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "name = {}", spec.name);
    let _ = writeln!(out, "version = {}", spec.version);
    if let Some(lambda) = spec.lambda {
        let _ = writeln!(out, "lambda = {lambda:?}");
    }
    let _ = writeln!(out, "mech_duration = {:?}", spec.mech_duration);
    if spec.version == Version::Cat2Natural {
        let _ = writeln!(out, "internal_duration = {:?}", spec.internal_duration);
    }
    if let (Some(look), Some(pi)) = (spec.obs_look_time, spec.obs_pi) {
        let _ = writeln!(out, "obs_look_time = {look:?}");
        let _ = writeln!(out, "obs_pi = {pi:?}");
    }
    if let Some(o) = spec.ordering {
        let _ = writeln!(out, "ordering = {}", o.as_str());
    }
    out
}
