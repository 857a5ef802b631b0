use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evening hours that carry the daily load peak.
pub const DEFAULT_PEAK_HOURS: [u8; 6] = [18, 19, 20, 21, 22, 23];

/// A named set of settlement hours (1..=24).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Regime {
    pub name: String,
    pub hours: BTreeSet<u8>,
}

impl Regime {
    pub fn new(name: impl Into<String>, hours: impl IntoIterator<Item = u8>) -> Result<Self> {
        let hours: BTreeSet<u8> = hours.into_iter().collect();
        if hours.is_empty() {
            return Err(Error::InvalidInput("regime has no hours".into()));
        }
        if let Some(h) = hours.iter().find(|h| !(1..=24).contains(*h)) {
            return Err(Error::InvalidInput(format!("regime hour {h} is outside 1..=24")));
        }
        Ok(Self { name: name.into(), hours })
    }

    pub fn peak() -> Self {
        Self::with_peak_hours(&DEFAULT_PEAK_HOURS.into_iter().collect()).0
    }

    pub fn offpeak() -> Self {
        Self::with_peak_hours(&DEFAULT_PEAK_HOURS.into_iter().collect()).1
    }

    /// Splits the day into a peak regime and its complement.
    pub fn with_peak_hours(peak: &BTreeSet<u8>) -> (Self, Self) {
        let off = (1..=24).filter(|h| !peak.contains(h)).collect();
        (
            Self { name: "peak".into(), hours: peak.clone() },
            Self { name: "offpeak".into(), hours: off },
        )
    }

    pub fn contains(&self, hour: u8) -> bool {
        self.hours.contains(&hour)
    }
}

impl FromStr for Regime {
    type Err = Error;

    /// Accepts `peak`, `offpeak` or `custom:<h1>,<h2>,...` (ranges like
    /// `18-23` are allowed inside the list).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak" => Ok(Self::peak()),
            "offpeak" | "off-peak" => Ok(Self::offpeak()),
            _ => {
                let list = s.strip_prefix("custom:").ok_or_else(|| {
                    Error::InvalidInput(format!("unknown regime `{s}` (peak|offpeak|custom:<hours>)"))
                })?;
                let mut hours = Vec::new();
                for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    let parse = |t: &str| {
                        t.trim()
                            .parse::<u8>()
                            .map_err(|_| Error::InvalidInput(format!("bad hour `{t}` in `{s}`")))
                    };
                    match part.split_once('-') {
                        Some((a, b)) => hours.extend(parse(a)?..=parse(b)?),
                        None => hours.push(parse(part)?),
                    }
                }
                Self::new(s, hours)
            }
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_and_offpeak_partition_the_day() {
        let (p, o) = (Regime::peak(), Regime::offpeak());
        assert_eq!(p.hours.len() + o.hours.len(), 24);
        assert!(p.hours.is_disjoint(&o.hours));
    }

    #[test]
    fn parses_custom_lists() {
        let r: Regime = "custom:1,3,18-20".parse().unwrap();
        assert_eq!(r.hours.into_iter().collect::<Vec<_>>(), vec![1, 3, 18, 19, 20]);
        assert!("custom:".parse::<Regime>().is_err());
        assert!("custom:0".parse::<Regime>().is_err());
        assert!("noon".parse::<Regime>().is_err());
    }
}
