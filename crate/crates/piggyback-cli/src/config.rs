//! Line-oriented `key = value` configuration files.
//!
//! `#` starts a comment (whole line or trailing), blank lines are skipped,
//! keys and values are trimmed. Command-line flags override file entries.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: missing '=' in {text:?}")]
    MissingEquals { line: usize, text: String },
    #[error("line {line}: empty key")]
    EmptyKey { line: usize },
    #[error("unknown key {key:?}")]
    UnknownKey { key: String },
    #[error("bad value for {key}: {value:?}")]
    BadValue { key: String, value: String },
}

/// Parse into ordered (key, value) pairs without schema validation.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ConfigError::MissingEquals {
            line,
            text: content.to_string(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::EmptyKey { line });
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Typed view of the recognized keys; unset fields fall back to scenario
/// defaults.
#[derive(Debug, Default, Clone)]
pub struct FileOptions {
    pub scenario: Option<String>,
    pub reps: Option<u64>,
    pub iters: Option<u64>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub out: Option<String>,
    pub emit: Option<String>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub ratio: Option<f64>,
    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    pub packet_kind: Option<String>,
    pub budget: Option<u64>,
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl FileOptions {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut options = FileOptions::default();
        for (key, value) in parse_config(text)? {
            match key.as_str() {
                "scenario" => options.scenario = Some(value),
                "reps" => options.reps = Some(parse_as(&key, &value)?),
                "iters" => options.iters = Some(parse_as(&key, &value)?),
                "seed" => options.seed = Some(parse_as(&key, &value)?),
                "mode" => options.mode = Some(value),
                "out" => options.out = Some(value),
                "emit" => options.emit = Some(value),
                "n" => options.n = Some(parse_as(&key, &value)?),
                "p" => options.p = Some(parse_as(&key, &value)?),
                "ratio" => options.ratio = Some(parse_as(&key, &value)?),
                "theta" => options.theta = Some(parse_as(&key, &value)?),
                "lambda" => options.lambda = Some(parse_as(&key, &value)?),
                "packet_kind" => options.packet_kind = Some(value),
                "budget" => options.budget = Some(parse_as(&key, &value)?),
                _ => return Err(ConfigError::UnknownKey { key }),
            }
        }
        Ok(options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let text = "# experiment\nscenario = ridge\n\nreps = 5 # five of them\n";
        let options = FileOptions::from_text(text).unwrap();
        assert_eq!(options.scenario.as_deref(), Some("ridge"));
        assert_eq!(options.reps, Some(5));
    }

    #[test]
    fn missing_equals_rejected() {
        assert!(matches!(
            parse_config("scenario ridge"),
            Err(ConfigError::MissingEquals { line: 1, .. })
        ));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            FileOptions::from_text("fps = 60"),
            Err(ConfigError::UnknownKey { .. })
        ));
    }

    #[test]
    fn bad_value_rejected() {
        assert!(matches!(
            FileOptions::from_text("reps = many"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn empty_key_rejected() {
        assert!(matches!(
            parse_config(" = 3"),
            Err(ConfigError::EmptyKey { .. })
        ));
    }
}
