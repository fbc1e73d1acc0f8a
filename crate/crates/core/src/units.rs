//! Physical constants and unit-suffixed quantity parsing.
//!
//! Everything inside the library is SI (meters, hertz). Text interfaces carry
//! explicit suffixes such as `8.1um`, `854nm`, `20ppm` or `3.8/mm`.

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub const MICRON: f64 = 1e-6;
pub const NANOMETER: f64 = 1e-9;

/// Dimension a quantity string is expected to carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Frequency,
    InverseLength,
    Dimensionless,
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Length => "length",
            Dimension::Frequency => "frequency",
            Dimension::InverseLength => "inverse length",
            Dimension::Dimensionless => "dimensionless",
        }
    }

    fn scale(self, suffix: &str) -> Option<f64> {
        let s = match self {
            Dimension::Length => match suffix {
                "m" => 1.0,
                "mm" => 1e-3,
                "um" | "µm" | "μm" => 1e-6,
                "nm" => 1e-9,
                _ => return None,
            },
            Dimension::Frequency => match suffix {
                "Hz" => 1.0,
                "kHz" => 1e3,
                "MHz" => 1e6,
                "GHz" => 1e9,
                "THz" => 1e12,
                _ => return None,
            },
            Dimension::InverseLength => match suffix {
                "1/m" | "/m" => 1.0,
                "1/mm" | "/mm" => 1e3,
                "1/um" | "/um" => 1e6,
                _ => return None,
            },
            Dimension::Dimensionless => match suffix {
                "" => 1.0,
                "%" => 1e-2,
                "ppm" => 1e-6,
                _ => return None,
            },
        };
        Some(s)
    }
}

/// Parses `text` as a number followed by a unit suffix of dimension `dim`.
///
/// Lengths, frequencies and inverse lengths require a suffix; a bare number is
/// only accepted for dimensionless values.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && text[i + 1..]
                        .chars()
                        .next()
                        .is_some_and(|n| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (number, suffix) = text.split_at(split);
    let value: f64 = number
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("`{text}` is not a number with a unit")))?;
    let suffix = suffix.trim();
    let scale = dim.scale(suffix).ok_or_else(|| {
        if suffix.is_empty() {
            Error::InvalidParameter(format!(
                "`{text}` is missing a {} unit suffix",
                dim.name()
            ))
        } else {
            Error::InvalidParameter(format!(
                "`{suffix}` is not a {} unit (in `{text}`)",
                dim.name()
            ))
        }
    })?;
    if !value.is_finite() {
        return Err(Error::InvalidParameter(format!("`{text}` is not finite")));
    }
    Ok(value * scale)
}

/// Formats a length in micrometers with the `um` suffix.
pub fn fmt_um(meters: f64) -> String {
    format!("{}um", meters / MICRON)
}

pub fn fmt_nm(meters: f64) -> String {
    format!("{}nm", meters / NANOMETER)
}
