//! Plain-text experiment configuration: `[section]` headers over `key = value`
//! lines, `#` comments, errors with line numbers.
//!
//! Value grammars used by the harness:
//! - domain:   `square` | `square:side=1` | `disk` | `disk:radius=1`
//!             | `cusp:s=1.4` | `mushroom:count=3`
//! - battery:  `gaussian:10` | `smooth:50` | `balls:20` | `mixed:50`
//! - exponent: `const:1.0` | `linear:axis=0,scale=0.1,offset=1.0`
//!             | `smooth:base=1.0,amp=0.1,waves=2`

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn get_str(&self, key: &str, default: &str) -> String {
        self.get(key).map(|e| e.value.clone()).unwrap_or_else(|| default.to_string())
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e.value.parse::<f64>().map_err(|_| Error::Config {
                line: e.line,
                msg: format!("key {key:?}: expected a number, got {:?}", e.value),
            }),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e.value.parse::<usize>().map_err(|_| Error::Config {
                line: e.line,
                msg: format!("key {key:?}: expected an integer, got {:?}", e.value),
            }),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e.value.parse::<u64>().map_err(|_| Error::Config {
                line: e.line,
                msg: format!("key {key:?}: expected an integer, got {:?}", e.value),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Config {
    pub sections: Vec<Section>,
}

impl Config {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }
}

/// Parse the sectioned key-value format; diagnostics carry line numbers.
pub fn parse_config(text: &str) -> Result<Config> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or(Error::Config {
                line: line_no,
                msg: "unterminated section header (missing ']')".into(),
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::Config { line: line_no, msg: "empty section name".into() });
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("duplicate section {name:?}"),
                });
            }
            sections.push(Section { name: name.to_string(), line: line_no, entries: Vec::new() });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(Error::Config {
            line: line_no,
            msg: format!("expected 'key = value', got {line:?}"),
        })?;
        let section = sections.last_mut().ok_or(Error::Config {
            line: line_no,
            msg: "key-value line before any [section] header".into(),
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config { line: line_no, msg: "empty key".into() });
        }
        if section.entries.iter().any(|e| e.key == key) {
            return Err(Error::Config {
                line: line_no,
                msg: format!("duplicate key {key:?} in section {:?}", section.name),
            });
        }
        section.entries.push(Entry { key, value: value.trim().to_string(), line: line_no });
    }
    Ok(Config { sections })
}

pub fn load_config(path: &std::path::Path) -> Result<Config> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// A `name:k1=v1,k2=v2` or `name:count` spec string.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecString {
    pub name: String,
    pub bare: Option<String>,
    pub params: Vec<(String, String)>,
}

pub fn parse_spec(s: &str) -> Result<SpecString> {
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n.trim(), Some(r.trim())),
        None => (s.trim(), None),
    };
    if name.is_empty() {
        return Err(Error::invalid("spec", format!("empty name in {s:?}")));
    }
    let mut params = Vec::new();
    let mut bare = None;
    if let Some(rest) = rest {
        for part in rest.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            match part.split_once('=') {
                Some((k, v)) => params.push((k.trim().to_string(), v.trim().to_string())),
                None => bare = Some(part.to_string()),
            }
        }
    }
    Ok(SpecString { name: name.to_string(), bare, params })
}

impl SpecString {
    pub fn param_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.params.iter().find(|(k, _)| k == key) {
            None => Ok(default),
            Some((_, v)) => v
                .parse::<f64>()
                .map_err(|_| Error::invalid("spec", format!("{key}={v:?} is not a number"))),
        }
    }

    pub fn param_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.params.iter().find(|(k, _)| k == key) {
            None => Ok(default),
            Some((_, v)) => v
                .parse::<usize>()
                .map_err(|_| Error::invalid("spec", format!("{key}={v:?} is not an integer"))),
        }
    }

    pub fn bare_usize(&self, default: usize) -> Result<usize> {
        match &self.bare {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| Error::invalid("spec", format!("{v:?} is not an integer"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = parse_config(
            "# top comment\n[decay]\nexperiment = exponential-decay\nresolution = 256 # inline\n\n[weak]\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.sections.len(), 2);
        let s = cfg.section("decay").unwrap();
        assert_eq!(s.get_str("experiment", ""), "exponential-decay");
        assert_eq!(s.get_usize("resolution", 0).unwrap(), 256);
        assert_eq!(cfg.section("weak").unwrap().get_u64("seed", 0).unwrap(), 7);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("[a]\nbad line\n").unwrap_err();
        match err {
            Error::Config { line, .. } => assert_eq!(line, 2),
            other => panic!("wrong error {other}"),
        }
        let err = parse_config("x = 1\n").unwrap_err();
        match err {
            Error::Config { line, .. } => assert_eq!(line, 1),
            other => panic!("wrong error {other}"),
        }
        let err = parse_config("[a]\nk = 1\nk = 2\n").unwrap_err();
        match err {
            Error::Config { line, .. } => assert_eq!(line, 3),
            other => panic!("wrong error {other}"),
        }
    }

    #[test]
    fn spec_strings() {
        let s = parse_spec("gaussian:10").unwrap();
        assert_eq!(s.name, "gaussian");
        assert_eq!(s.bare_usize(0).unwrap(), 10);
        let s = parse_spec("cusp:s=1.4").unwrap();
        assert_eq!(s.param_f64("s", 0.0).unwrap(), 1.4);
        let s = parse_spec("const:1.5").unwrap();
        assert_eq!(s.bare, Some("1.5".into()));
    }
}
