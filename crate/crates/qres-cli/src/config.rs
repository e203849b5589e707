//! Flat `key = value` configuration files: strings, numbers, booleans, and
//! one-dimensional numeric arrays, one assignment per line, `#` comments.
//! Values from repeatable `--set KEY=VALUE` flags are applied after the file
//! so they win. Unknown keys are rejected by name when the typed config is
//! built, so typos never silently fall back to defaults.

use qres_core::edm::{default_delta_omegas, EdmConfig, ImperfectionModel};
use qres_core::scan::{ScanConfig, ScanMode};
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{key}: {reason}")]
    Validation { key: String, reason: String },
    /// Fit non-convergence or data too thin to fit; exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Parse { .. } | CliError::Validation { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Str(String),
    /// Integers stay exact so 64-bit seeds survive.
    Int(i64),
    Num(f64),
    Bool(bool),
    Arr(Vec<f64>),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Str(_) => "string",
            Value::Int(_) => "integer",
            Value::Num(_) => "number",
            Value::Bool(_) => "boolean",
            Value::Arr(_) => "array",
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Num(v) => Some(*v),
            _ => None,
        }
    }
}

/// Strips an unquoted `#` comment.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_value(raw: &str) -> Result<Value, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err("missing value".into());
    }
    if let Some(rest) = raw.strip_prefix('"') {
        let Some(end) = rest.find('"') else {
            return Err("unterminated string".into());
        };
        if !rest[end + 1..].trim().is_empty() {
            return Err(format!("trailing characters after string: '{}'", &rest[end + 1..]));
        }
        return Ok(Value::Str(rest[..end].to_string()));
    }
    if raw == "true" {
        return Ok(Value::Bool(true));
    }
    if raw == "false" {
        return Ok(Value::Bool(false));
    }
    if let Some(body) = raw.strip_prefix('[') {
        let Some(body) = body.strip_suffix(']') else {
            return Err("unterminated array".into());
        };
        let body = body.trim();
        if body.is_empty() {
            return Ok(Value::Arr(Vec::new()));
        }
        let mut items = Vec::new();
        for piece in body.split(',') {
            let piece = piece.trim();
            items.push(
                piece
                    .parse::<f64>()
                    .map_err(|_| format!("array element '{piece}' is not a number"))?,
            );
        }
        return Ok(Value::Arr(items));
    }
    if raw.bytes().all(|b| b.is_ascii_digit() || b == b'-' || b == b'+')
        && raw.bytes().any(|b| b.is_ascii_digit())
    {
        if let Ok(v) = raw.parse::<i64>() {
            return Ok(Value::Int(v));
        }
    }
    raw.parse::<f64>()
        .map(Value::Num)
        .map_err(|_| format!("'{raw}' is not a string, number, boolean, or array"))
}

fn valid_key(key: &str) -> bool {
    let mut chars = key.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses file text into a key-value map; duplicate keys are an error so a
/// config never silently shadows itself.
pub fn parse_text(text: &str) -> Result<BTreeMap<String, Value>, CliError> {
    let mut map = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw_line).trim();
        if body.is_empty() {
            continue;
        }
        let err = |reason: String| CliError::Parse { line, reason };
        let Some(eq) = body.find('=') else {
            return Err(err("expected 'key = value'".into()));
        };
        let key = body[..eq].trim();
        if !valid_key(key) {
            return Err(err(format!("invalid key '{key}'")));
        }
        let value = parse_value(&body[eq + 1..]).map_err(err)?;
        if map.insert(key.to_string(), value).is_some() {
            return Err(CliError::Parse {
                line,
                reason: format!("duplicate key '{key}'"),
            });
        }
    }
    Ok(map)
}

/// Applies `KEY=VALUE` override strings on top of file values.
pub fn apply_overrides(
    map: &mut BTreeMap<String, Value>,
    sets: &[String],
) -> Result<(), CliError> {
    for set in sets {
        let Some(eq) = set.find('=') else {
            return Err(CliError::Validation {
                key: set.clone(),
                reason: "override must look like KEY=VALUE".into(),
            });
        };
        let key = set[..eq].trim();
        if !valid_key(key) {
            return Err(CliError::Validation {
                key: key.to_string(),
                reason: "invalid override key".into(),
            });
        }
        let value = parse_value(&set[eq + 1..]).map_err(|reason| CliError::Validation {
            key: key.to_string(),
            reason,
        })?;
        map.insert(key.to_string(), value);
    }
    Ok(())
}

/// Takes typed values out of the map; `finish` rejects whatever is left.
struct KeyReader {
    map: BTreeMap<String, Value>,
}

impl KeyReader {
    fn new(map: BTreeMap<String, Value>) -> Self {
        KeyReader { map }
    }

    fn bad(key: &str, reason: String) -> CliError {
        CliError::Validation {
            key: key.to_string(),
            reason,
        }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn req_f64(&mut self, key: &str) -> Result<f64, CliError> {
        match self.take(key) {
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Self::bad(key, format!("expected a number, got {}", v.type_name()))),
            None => Err(Self::bad(key, "required key missing".into())),
        }
    }

    fn opt_f64(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.take(key) {
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Self::bad(key, format!("expected a number, got {}", v.type_name()))),
            None => Ok(default),
        }
    }

    fn maybe_f64(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        match self.take(key) {
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| Self::bad(key, format!("expected a number, got {}", v.type_name()))),
            None => Ok(None),
        }
    }

    fn req_usize(&mut self, key: &str) -> Result<usize, CliError> {
        match self.take(key) {
            Some(Value::Int(v)) if v >= 0 => Ok(v as usize),
            Some(v) => Err(Self::bad(
                key,
                format!("expected a non-negative integer, got {}", v.type_name()),
            )),
            None => Err(Self::bad(key, "required key missing".into())),
        }
    }

    fn opt_u64(&mut self, key: &str, default: u64) -> Result<u64, CliError> {
        match self.take(key) {
            Some(Value::Int(v)) if v >= 0 => Ok(v as u64),
            Some(v) => Err(Self::bad(
                key,
                format!("expected a non-negative integer, got {}", v.type_name()),
            )),
            None => Ok(default),
        }
    }

    fn req_str(&mut self, key: &str) -> Result<String, CliError> {
        match self.take(key) {
            Some(Value::Str(s)) => Ok(s),
            Some(v) => Err(Self::bad(
                key,
                format!("expected a quoted string, got {}", v.type_name()),
            )),
            None => Err(Self::bad(key, "required key missing".into())),
        }
    }

    fn opt_arr(&mut self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.take(key) {
            Some(Value::Arr(v)) => Ok(Some(v)),
            Some(v) => Err(Self::bad(
                key,
                format!("expected an array like [a, b], got {}", v.type_name()),
            )),
            None => Ok(None),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        match self.map.into_iter().next() {
            Some((key, _)) => Err(Self::bad(&key, "unknown key".into())),
            None => Ok(()),
        }
    }
}

/// Builds a frequency-scan configuration. Required keys: `mode`,
/// `omega_bar0`, `drive_strength`, `duration`, `pulse_area`, `omega_min`,
/// `omega_max`, `steps`; `tau` is required for the separated-pulse mode;
/// `epsilon` defaults to 0.
pub fn scan_config_from(map: BTreeMap<String, Value>) -> Result<ScanConfig, CliError> {
    let mut r = KeyReader::new(map);
    let mode = match r.req_str("mode")?.as_str() {
        "rabi" => ScanMode::Rabi,
        "ramsey" => ScanMode::Ramsey,
        other => {
            return Err(KeyReader::bad(
                "mode",
                format!("expected \"rabi\" or \"ramsey\", got \"{other}\""),
            ))
        }
    };
    let config = ScanConfig {
        mode,
        omega_bar0: r.req_f64("omega_bar0")?,
        drive_strength: r.req_f64("drive_strength")?,
        t_or_t: r.req_f64("duration")?,
        tau: r.maybe_f64("tau")?,
        pulse_area: r.req_f64("pulse_area")?,
        omega_min: r.req_f64("omega_min")?,
        omega_max: r.req_f64("omega_max")?,
        steps: r.req_usize("steps")?,
        epsilon: r.opt_f64("epsilon", 0.0)?,
    };
    r.finish()?;
    config.validate().map_err(|e| match e {
        qres_core::scan::ScanError::InvalidConfig { field, reason } => CliError::Validation {
            // The file key for the pulse/free duration is `duration`.
            key: if field == "t_or_t" { "duration".into() } else { field.to_string() },
            reason,
        },
        other => CliError::Validation {
            key: "config".into(),
            reason: other.to_string(),
        },
    })?;
    Ok(config)
}

/// Builds a counting-run configuration. Required keys: `d_n`, `e_field`,
/// `t_free`, `tau`, `n_bar`, `cycles_per_run`, `p_i`, `eps_f`. Optional:
/// `omega_bar0` (1.0), `omega2_tau` (pi/2), `delta_omega_list` (the six
/// standard working points), `field_pattern` (six parallel then six
/// antiparallel), `seed` (0).
pub fn edm_config_from(map: BTreeMap<String, Value>) -> Result<EdmConfig, CliError> {
    let mut r = KeyReader::new(map);
    let t_free = r.req_f64("t_free")?;
    let field_pattern = match r.opt_arr("field_pattern")? {
        Some(raw) => {
            let mut pattern = Vec::with_capacity(raw.len());
            for v in raw {
                if v == 1.0 || v == -1.0 {
                    pattern.push(v as i8);
                } else {
                    return Err(KeyReader::bad(
                        "field_pattern",
                        format!("entries must be 1 or -1, got {v}"),
                    ));
                }
            }
            pattern
        }
        None => EdmConfig::default_field_pattern(),
    };
    let imperfection = ImperfectionModel::new(r.req_f64("p_i")?, r.req_f64("eps_f")?)
        .map_err(edm_error_to_cli)?;
    let config = EdmConfig {
        omega_bar0: r.opt_f64("omega_bar0", 1.0)?,
        d_n: r.req_f64("d_n")?,
        e_field: r.req_f64("e_field")?,
        omega2_tau: r.opt_f64("omega2_tau", FRAC_PI_2)?,
        t_free,
        tau: r.req_f64("tau")?,
        delta_omega_list: r
            .opt_arr("delta_omega_list")?
            .unwrap_or_else(|| default_delta_omegas(t_free)),
        field_pattern,
        n_bar: r.req_f64("n_bar")?,
        cycles_per_run: r.req_usize("cycles_per_run")?,
        seed: r.opt_u64("seed", 0)?,
        imperfection,
    };
    r.finish()?;
    config.validate().map_err(edm_error_to_cli)?;
    Ok(config)
}

fn edm_error_to_cli(e: qres_core::edm::EdmError) -> CliError {
    match e {
        qres_core::edm::EdmError::InvalidConfig { field, reason } => CliError::Validation {
            key: field.to_string(),
            reason,
        },
        other => CliError::Validation {
            key: "config".into(),
            reason: other.to_string(),
        },
    }
}
