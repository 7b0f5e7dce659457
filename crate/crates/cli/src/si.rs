//! Numbers with optional SI multiplier suffixes: `1m`, `250u`, `250µ`, `20k`, `1M`.

use std::fmt;

use serde::de::{self, Deserialize, Deserializer, Visitor};

pub fn parse_si(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (digits, scale) = match t.chars().last() {
        Some('m') => (&t[..t.len() - 1], 1e-3),
        Some('u') => (&t[..t.len() - 1], 1e-6),
        Some('µ') => (&t[..t.len() - 'µ'.len_utf8()], 1e-6),
        Some('k') => (&t[..t.len() - 1], 1e3),
        Some('M') => (&t[..t.len() - 1], 1e6),
        _ => (t, 1.0),
    };
    let value: f64 = digits
        .parse()
        .map_err(|_| format!("`{text}` is not a number (suffixes m, u, µ, k, M allowed)"))?;
    if !value.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(value * scale)
}

/// A scenario-file number: TOML integer, float, or suffixed string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Si(pub f64);

impl<'de> Deserialize<'de> for Si {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct SiVisitor;

        impl Visitor<'_> for SiVisitor {
            type Value = Si;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, optionally as a string with an m/u/µ/k/M suffix")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Si, E> {
                Ok(Si(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Si, E> {
                Ok(Si(v as f64))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Si, E> {
                if v.is_finite() {
                    Ok(Si(v))
                } else {
                    Err(E::custom(format!("{v} is not finite")))
                }
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Si, E> {
                parse_si(v).map(Si).map_err(E::custom)
            }
        }

        d.deserialize_any(SiVisitor)
    }
}
