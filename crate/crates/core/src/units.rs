//! Units and per-resolution tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per decimal gigabyte.
pub const GB: f64 = 1e9;

pub fn bytes_to_gb(bytes: u64) -> f64 {
    bytes as f64 / GB
}

/// Converts gigabytes to whole bytes, rounding to nearest.
pub fn gb_to_bytes(gb: f64) -> u64 {
    (gb * GB).round() as u64
}

/// Target video resolution of a generation request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Resolution {
    #[serde(rename = "720p")]
    P720,
    #[serde(rename = "1080p")]
    P1080,
    #[serde(rename = "2k")]
    K2,
}

impl Resolution {
    pub const ALL: [Resolution; 3] = [Resolution::P720, Resolution::P1080, Resolution::K2];

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::P720 => "720p",
            Resolution::P1080 => "1080p",
            Resolution::K2 => "2k",
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "720p" => Ok(Resolution::P720),
            "1080p" => Ok(Resolution::P1080),
            "2k" => Ok(Resolution::K2),
            other => Err(Error::InvalidInput(format!(
                "unknown resolution {other:?} (expected 720p, 1080p or 2k)"
            ))),
        }
    }
}

/// One value per [`Resolution`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerResolution<T> {
    #[serde(rename = "720p")]
    pub p720: T,
    #[serde(rename = "1080p")]
    pub p1080: T,
    #[serde(rename = "2k")]
    pub k2: T,
}

impl<T: Copy> PerResolution<T> {
    pub const fn uniform(value: T) -> Self {
        PerResolution {
            p720: value,
            p1080: value,
            k2: value,
        }
    }

    pub fn get(&self, res: Resolution) -> T {
        match res {
            Resolution::P720 => self.p720,
            Resolution::P1080 => self.p1080,
            Resolution::K2 => self.k2,
        }
    }

    pub fn set(&mut self, res: Resolution, value: T) {
        match res {
            Resolution::P720 => self.p720 = value,
            Resolution::P1080 => self.p1080 = value,
            Resolution::K2 => self.k2 = value,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Resolution, T)> + '_ {
        Resolution::ALL.into_iter().map(move |r| (r, self.get(r)))
    }
}

/// Size of one cached latent: 0.016 GB at 720p, 0.04 GB at 1080p, 0.07 GB at 2k.
pub const DEFAULT_LATENT_BYTES: PerResolution<u64> = PerResolution {
    p720: 16_000_000,
    p1080: 40_000_000,
    k2: 70_000_000,
};

/// Parses a decimal size such as `10`, `0.08GB`, `50TB` or `16MB` into bytes.
///
/// A bare number is read as gigabytes. Scientific notation is accepted.
pub fn parse_size(input: &str) -> Result<f64> {
    let s = input.trim();
    let upper = s.to_ascii_uppercase();
    let (number, scale) = [("TB", 1e12), ("GB", 1e9), ("MB", 1e6), ("KB", 1e3), ("B", 1.0)]
        .iter()
        .find_map(|(suffix, scale)| upper.strip_suffix(suffix).map(|n| (n.trim(), *scale)))
        .unwrap_or((upper.as_str(), GB));
    let value: f64 = number
        .parse()
        .map_err(|_| Error::InvalidInput(format!("cannot parse size {input:?}")))?;
    if !value.is_finite() || value < 0.0 {
        return Err(Error::InvalidInput(format!(
            "size must be finite and nonnegative, got {input:?}"
        )));
    }
    Ok(value * scale)
}
