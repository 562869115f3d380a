//! Config files: flat `key = value` lines grouped under optional `[check]`
//! sections, or the same structure as a JSON object.

use polymer_core::harness::{Check, ExperimentConfig};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    Syntax { path: String, line: usize, column: usize, message: String },
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub line: usize,
    /// Column of the value, 1-based.
    pub column: usize,
}

/// Settings for every check, then per-check overrides.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    pub path: String,
    pub global: Vec<Setting>,
    pub sections: Vec<(Check, Vec<Setting>)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: name.clone(), source })?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            parse_json(&name, &text)
        } else {
            parse_ini(&name, &text)
        }
    }

    /// Apply global settings, then those of the matching section.
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<(), ConfigError> {
        let check = config.check;
        let section = self.sections.iter().filter(|(c, _)| *c == check).flat_map(|(_, s)| s);
        for s in self.global.iter().chain(section) {
            config.apply_setting(&s.key, &s.value).map_err(|e| ConfigError::Syntax {
                path: self.path.clone(),
                line: s.line,
                column: s.column,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }
}

fn syntax(path: &str, line: usize, column: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Syntax { path: path.into(), line, column, message: message.into() }
}

fn section_check(path: &str, line: usize, column: usize, name: &str) -> Result<Check, ConfigError> {
    Check::from_name(name).ok_or_else(|| {
        let known: Vec<&str> = Check::ALL.iter().map(|c| c.name()).collect();
        syntax(path, line, column, format!("unknown section [{name}], expected one of {}", known.join(", ")))
    })
}

pub fn parse_ini(path: &str, text: &str) -> Result<ConfigFile, ConfigError> {
    let mut file = ConfigFile { path: path.into(), ..Default::default() };
    let mut current: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| syntax(path, line, indent + trimmed.len() + 1, "expected ']' to close the section name"))?
                .trim();
            let check = section_check(path, line, indent + 2, name)?;
            file.sections.push((check, Vec::new()));
            current = Some(file.sections.len() - 1);
            continue;
        }
        let eq = content
            .find('=')
            .ok_or_else(|| syntax(path, line, indent + 1, "expected `key = value`"))?;
        let key = content[..eq].trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(syntax(path, line, indent + 1, format!("invalid key {key:?}")));
        }
        let after = &content[eq + 1..];
        let value = after.trim();
        if value.is_empty() {
            return Err(syntax(path, line, eq + 2, format!("missing value for {key}")));
        }
        let column = eq + 2 + (after.len() - after.trim_start().len());
        let setting = Setting { key: key.into(), value: value.into(), line, column };
        match current {
            Some(i) => file.sections[i].1.push(setting),
            None => file.global.push(setting),
        }
    }
    Ok(file)
}

fn json_value(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        serde_json::Value::Array(items) => {
            items.iter().map(json_value).collect::<Option<Vec<_>>>().map(|parts| parts.join(","))
        }
        _ => None,
    }
}

/// Top-level scalars are global; nested objects are sections keyed by check
/// name. Positions are not tracked inside JSON, so value errors report line 1.
pub fn parse_json(path: &str, text: &str) -> Result<ConfigFile, ConfigError> {
    let root: serde_json::Value =
        serde_json::from_str(text).map_err(|e| syntax(path, e.line(), e.column(), e.to_string()))?;
    let obj = root.as_object().ok_or_else(|| syntax(path, 1, 1, "expected a JSON object"))?;
    let mut file = ConfigFile { path: path.into(), ..Default::default() };
    let setting = |key: &str, v: &serde_json::Value| -> Result<Setting, ConfigError> {
        let value = json_value(v).ok_or_else(|| syntax(path, 1, 1, format!("{key}: unsupported value {v}")))?;
        Ok(Setting { key: key.into(), value, line: 1, column: 1 })
    };
    for (key, v) in obj {
        if let Some(inner) = v.as_object() {
            let check = section_check(path, 1, 1, key)?;
            let list = inner.iter().map(|(k, v)| setting(k, v)).collect::<Result<_, _>>()?;
            file.sections.push((check, list));
        } else {
            file.global.push(setting(key, v)?);
        }
    }
    Ok(file)
}
