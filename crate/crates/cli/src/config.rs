//! Strict INI-style project configuration.
//!
//! ```text
//! [optics]
//! wavelength = 854nm
//!
//! [assembly.graded_index]
//! length = 492um
//! ```
//!
//! Every physical quantity carries a unit suffix. Unknown sections and keys
//! are rejected by name; duplicate keys are an error.

use std::fmt;

use ffpc_core::units::{parse_quantity, Dimension};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Quantity(Dimension),
    Integer,
    Flag,
    Word(&'static [&'static str]),
}

use Dimension::{Dimensionless as D, Frequency as F, InverseLength as I, Length as L};
use Kind::{Flag, Integer, Quantity as Q, Word};

const SCHEMA: &[(&str, &[(&str, Kind)])] = &[
    ("optics", &[("wavelength", Q(L))]),
    (
        "assembly",
        &[
            ("facet_roc", Q(L)),
            ("splice_mfd_scale", Q(D)),
            ("include_facet_lensing", Flag),
        ],
    ),
    (
        "assembly.single_mode",
        &[("length", Q(L)), ("mode_field_radius", Q(L)), ("index", Q(D))],
    ),
    (
        "assembly.graded_index",
        &[("length", Q(L)), ("n0", Q(D)), ("g", Q(I)), ("core_radius", Q(L))],
    ),
    (
        "assembly.multimode_spacer",
        &[("length", Q(L)), ("index", Q(D)), ("core_radius", Q(L))],
    ),
    (
        "cavity",
        &[
            ("length", Q(L)),
            ("r1", Q(L)),
            ("r2", Q(L)),
            ("aperture1", Q(L)),
            ("aperture2", Q(L)),
            ("t1", Q(D)),
            ("t2", Q(D)),
            ("loss1", Q(D)),
            ("loss2", Q(D)),
        ],
    ),
    (
        "input",
        &[
            ("source", Word(&["assembly", "single_mode", "beam"])),
            ("waist_radius", Q(L)),
            ("waist_position", Q(L)),
        ],
    ),
    ("target", &[("waist_radius", Q(L)), ("waist_position", Q(L))]),
    (
        "design",
        &[("grin_min", Q(L)), ("grin_max", Q(L)), ("mm_min", Q(L)), ("mm_max", Q(L))],
    ),
    ("decomposition", &[("n_max", Integer)]),
    (
        "scan",
        &[
            ("span", Q(F)),
            ("samples", Integer),
            ("sideband_frequency", Q(F)),
            ("sideband_fraction", Q(D)),
            ("noise_rms", Q(D)),
            ("scan_stretch", Q(D)),
            ("double_sided", Flag),
            ("seed", Integer),
            ("finesse_tolerance", Q(D)),
        ],
    ),
    (
        "sweep",
        &[("start", Q(L)), ("stop", Q(L)), ("step", Q(L)), ("double_sided", Flag)],
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn missing(section: &str, key: &str) -> Self {
        Self {
            line: None,
            message: format!("missing required key `{key}` in [{section}]"),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: Vec<Entry>,
}

fn kind_of(section: &str, key: &str) -> Option<Kind> {
    SCHEMA
        .iter()
        .find(|(s, _)| *s == section)
        .and_then(|(_, keys)| keys.iter().find(|(k, _)| *k == key))
        .map(|(_, kind)| *kind)
}

fn strip_comment(line: &str) -> &str {
    let cut = line.find(['#', ';']).unwrap_or(line.len());
    line[..cut].trim()
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<Entry> = Vec::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = strip_comment(raw);
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line, format!("unterminated section header `{body}`")))?
                    .trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(ConfigError::at(line, format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, got `{body}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section
                .as_deref()
                .ok_or_else(|| ConfigError::at(line, format!("key `{key}` appears before any section")))?;
            let kind = kind_of(sec, key).ok_or_else(|| ConfigError::at(line, format!("unknown key `{key}` in [{sec}]")))?;
            if let Some(prev) = entries.iter().find(|e| e.section == sec && e.key == key) {
                return Err(ConfigError::at(
                    line,
                    format!("duplicate key `{key}` in [{sec}] (first set on line {})", prev.line),
                ));
            }
            check_value(kind, value).map_err(|m| ConfigError::at(line, format!("`{key}` in [{sec}]: {m}")))?;
            entries.push(Entry {
                section: sec.to_string(),
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        Ok(Self { entries })
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        debug_assert!(kind_of(section, key).is_some(), "{section}.{key} not in schema");
        self.entries.iter().find(|e| e.section == section && e.key == key)
    }

    pub fn quantity(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        let Some(Q(dim)) = kind_of(section, key) else {
            unreachable!("{section}.{key} is not a quantity");
        };
        parse_quantity(&e.value, dim)
            .map(Some)
            .map_err(|err| ConfigError::at(e.line, err.to_string()))
    }

    pub fn require(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.quantity(section, key)?.ok_or_else(|| ConfigError::missing(section, key))
    }

    pub fn quantity_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.quantity(section, key)?.unwrap_or(default))
    }

    pub fn integer(&self, section: &str, key: &str) -> Result<Option<u64>, ConfigError> {
        self.entry(section, key)
            .map(|e| e.value.parse::<u64>().map_err(|_| ConfigError::at(e.line, "not an integer")))
            .transpose()
    }

    pub fn flag(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        Ok(self.entry(section, key).map(|e| e.value == "true"))
    }

    pub fn word(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    /// Replaces or adds a value, e.g. a seed given on the command line.
    pub fn set(&mut self, section: &str, key: &str, value: String) -> Result<(), ConfigError> {
        let kind = kind_of(section, key).ok_or_else(|| ConfigError {
            line: None,
            message: format!("unknown key `{key}` in [{section}]"),
        })?;
        check_value(kind, &value).map_err(|message| ConfigError { line: None, message })?;
        match self.entries.iter_mut().find(|e| e.section == section && e.key == key) {
            Some(e) => e.value = value,
            None => self.entries.push(Entry {
                section: section.to_string(),
                key: key.to_string(),
                value,
                line: 0,
            }),
        }
        Ok(())
    }

    /// Canonical text in schema order; parsing it gives back an equal configuration.
    pub fn render(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (section, keys) in SCHEMA {
            let present: Vec<&Entry> = keys
                .iter()
                .filter_map(|(k, _)| self.entries.iter().find(|e| e.section == *section && e.key == *k))
                .collect();
            if present.is_empty() {
                continue;
            }
            out.push(format!("[{section}]"));
            out.extend(present.iter().map(|e| format!("{} = {}", e.key, e.value)));
        }
        out
    }
}

fn check_value(kind: Kind, value: &str) -> Result<(), String> {
    match kind {
        Q(dim) => parse_quantity(value, dim).map(|_| ()).map_err(|e| e.to_string()),
        Integer => value.parse::<u64>().map(|_| ()).map_err(|_| format!("`{value}` is not a non-negative integer")),
        Flag => match value {
            "true" | "false" => Ok(()),
            _ => Err(format!("`{value}` is not `true` or `false`")),
        },
        Word(options) => {
            if options.contains(&value) {
                Ok(())
            } else {
                Err(format!("`{value}` is not one of {}", options.join(", ")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_units_and_comments() {
        let c = Config::parse("# run\n[optics]\nwavelength = 854nm ; laser\n\n[cavity]\nlength=426um\nt1 = 50ppm\n").unwrap();
        assert!((c.require("optics", "wavelength").unwrap() - 854e-9).abs() < 1e-20);
        assert!((c.require("cavity", "t1").unwrap() - 50e-6).abs() < 1e-18);
        assert_eq!(c.quantity("cavity", "r1").unwrap(), None);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = Config::parse("[cavity]\nlenght = 426um\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("lenght"), "{}", e.message);
        let e = Config::parse("[cavities]\n").unwrap_err();
        assert!(e.message.contains("cavities"));
    }

    #[test]
    fn unit_suffix_is_mandatory() {
        let e = Config::parse("[cavity]\nlength = 426\n").unwrap_err();
        assert!(e.message.contains("unit"), "{}", e.message);
        assert!(Config::parse("[cavity]\nlength = 426Hz\n").is_err());
    }

    #[test]
    fn duplicates_and_orphans_are_rejected() {
        assert!(Config::parse("[cavity]\nr1 = 1um\nr1 = 2um\n").is_err());
        assert!(Config::parse("r1 = 1um\n").is_err());
        assert!(Config::parse("[scan]\ndouble_sided = yes\n").is_err());
        assert!(Config::parse("[input]\nsource = laser\n").is_err());
    }

    #[test]
    fn render_round_trips() {
        let text = "[scan]\nseed = 3\n[optics]\nwavelength = 854nm\n[input]\nsource = beam\n";
        let mut c = Config::parse(text).unwrap();
        c.set("scan", "seed", "9".into()).unwrap();
        let rendered = c.render().join("\n");
        assert!(rendered.starts_with("[optics]"));
        let back = Config::parse(&rendered).unwrap();
        assert_eq!(back.integer("scan", "seed").unwrap(), Some(9));
        assert_eq!(back.render(), c.render());
    }
}
