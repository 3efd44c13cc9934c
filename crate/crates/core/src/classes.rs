//! Label vocabulary shared by the dataset, the classifier and reports.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectClass {
    Scratch,
    ParticleContamination,
    EdgeCrack,
    CenterCluster,
    LocalCluster,
    RingPattern,
    RandomDefects,
    NearFullWafer,
    NoDefect,
}

pub const NUM_CLASSES: usize = 9;

impl DefectClass {
    /// Classifier output order.
    pub const ALL: [DefectClass; NUM_CLASSES] = [
        DefectClass::Scratch,
        DefectClass::ParticleContamination,
        DefectClass::EdgeCrack,
        DefectClass::CenterCluster,
        DefectClass::LocalCluster,
        DefectClass::RingPattern,
        DefectClass::RandomDefects,
        DefectClass::NearFullWafer,
        DefectClass::NoDefect,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DefectClass::Scratch => "scratch",
            DefectClass::ParticleContamination => "particle_contamination",
            DefectClass::EdgeCrack => "edge_crack",
            DefectClass::CenterCluster => "center_cluster",
            DefectClass::LocalCluster => "local_cluster",
            DefectClass::RingPattern => "ring_pattern",
            DefectClass::RandomDefects => "random_defects",
            DefectClass::NearFullWafer => "near_full_wafer",
            DefectClass::NoDefect => "no_defect",
        }
    }

    /// Human-readable form used in narratives.
    pub fn display_name(self) -> &'static str {
        match self {
            DefectClass::Scratch => "scratch",
            DefectClass::ParticleContamination => "particle contamination",
            DefectClass::EdgeCrack => "edge crack",
            DefectClass::CenterCluster => "center cluster",
            DefectClass::LocalCluster => "local cluster",
            DefectClass::RingPattern => "ring pattern",
            DefectClass::RandomDefects => "random defects",
            DefectClass::NearFullWafer => "near-full wafer failure",
            DefectClass::NoDefect => "no defect",
        }
    }
}

impl fmt::Display for DefectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown defect class {0:?}")]
pub struct UnknownClass(pub String);

impl FromStr for DefectClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownClass(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Critical,
    Major,
    Minor,
    None,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::Critical, Severity::Major, Severity::Minor, Severity::None];

    pub fn name(self) -> &'static str {
        match self {
            Severity::Critical => "CRITICAL",
            Severity::Major => "MAJOR",
            Severity::Minor => "MINOR",
            Severity::None => "NONE",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown severity {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    #[default]
    WaferMap,
    Sem,
    Optical,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Synthetic,
    Wm811k,
    Mixedwm38,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for (i, c) in DefectClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(c.name().parse::<DefectClass>().unwrap(), *c);
            let json = serde_json::to_string(c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.name()));
        }
        assert!("donut".parse::<DefectClass>().is_err());
        assert_eq!(serde_json::to_string(&Severity::None).unwrap(), "\"NONE\"");
    }
}
