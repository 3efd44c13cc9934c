//! Mechanism correlation and recipe advisory tables.

use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexMap;
use serde::Deserialize;
use thiserror::Error;

use crate::classes::DefectClass;

pub const DEFAULT_CORRELATION: &str = include_str!("../../data/correlation.toml");
pub const DEFAULT_RECIPES: &str = include_str!("../../data/recipes.toml");

/// The single entry emitted when no action is needed.
pub const NO_ACTION_KEY: &str = "action";
pub const NO_ACTION_VALUE: &str = "none — continue standard monitoring";

pub const WILDCARD: &str = "*";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mechanism {
    pub key: String,
    pub summary: String,
    #[serde(default)]
    pub channels: Vec<String>,
    #[serde(default)]
    pub alarms: Vec<u32>,
    #[serde(default)]
    pub priors: BTreeMap<DefectClass, f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationTable {
    #[serde(rename = "mechanism")]
    pub mechanisms: Vec<Mechanism>,
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, TableError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| TableError::Parse {
        path: e.path().to_string(),
        message: e.inner().message().to_string(),
    })
}

fn read(path: &Path) -> Result<String, TableError> {
    std::fs::read_to_string(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl CorrelationTable {
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let t: CorrelationTable = parse(text)?;
        let mut seen = std::collections::HashSet::new();
        for m in &t.mechanisms {
            if !seen.insert(m.key.as_str()) {
                return Err(TableError::Invalid(format!("duplicate mechanism {:?}", m.key)));
            }
            if let Some((c, p)) = m.priors.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
                return Err(TableError::Invalid(format!(
                    "{}: prior for {c} is {p}, outside [0, 1]",
                    m.key
                )));
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        Self::parse(&read(path)?)
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CORRELATION).expect("bundled correlation table is valid")
    }

    pub fn get(&self, key: &str) -> Option<&Mechanism> {
        self.mechanisms.iter().find(|m| m.key == key)
    }

    pub fn prior(&self, key: &str, class: DefectClass) -> f64 {
        self.get(key).and_then(|m| m.priors.get(&class)).copied().unwrap_or(0.0)
    }

    /// Mechanisms with a positive prior for `class`, highest prior first.
    pub fn candidates(&self, class: DefectClass) -> Vec<&Mechanism> {
        let mut v: Vec<&Mechanism> = self
            .mechanisms
            .iter()
            .filter(|m| m.priors.get(&class).is_some_and(|p| *p > 0.0))
            .collect();
        v.sort_by(|a, b| {
            b.priors[&class]
                .total_cmp(&a.priors[&class])
                .then_with(|| a.key.cmp(&b.key))
        });
        v
    }

    pub fn by_channel(&self, channel: &str) -> impl Iterator<Item = &Mechanism> {
        let channel = channel.to_string();
        self.mechanisms.iter().filter(move |m| m.channels.contains(&channel))
    }

    pub fn by_alarm(&self, alarm_id: u32) -> impl Iterator<Item = &Mechanism> {
        self.mechanisms.iter().filter(move |m| m.alarms.contains(&alarm_id))
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub class: String,
    pub mechanism: String,
    pub actions: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeTable {
    #[serde(rename = "recipe")]
    pub recipes: Vec<Recipe>,
}

impl RecipeTable {
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let t: RecipeTable = parse(text)?;
        for r in &t.recipes {
            if r.class != WILDCARD && r.class.parse::<DefectClass>().is_err() {
                return Err(TableError::Invalid(format!("unknown class {:?}", r.class)));
            }
            if !(3..=5).contains(&r.actions.len()) {
                return Err(TableError::Invalid(format!(
                    "recipe ({}, {}) has {} actions, expected 3 to 5",
                    r.class,
                    r.mechanism,
                    r.actions.len()
                )));
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, TableError> {
        Self::parse(&read(path)?)
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_RECIPES).expect("bundled recipe table is valid")
    }

    /// Most specific recipe for the pair; see the table header for order.
    pub fn lookup(&self, class: Option<DefectClass>, mechanism: &str) -> Option<&Recipe> {
        let class = class.map_or(WILDCARD, |c| c.name());
        let find = |c: &str, m: &str| self.recipes.iter().find(|r| r.class == c && r.mechanism == m);
        find(class, mechanism)
            .or_else(|| find(WILDCARD, mechanism))
            .or_else(|| find(class, WILDCARD))
            .or_else(|| find(WILDCARD, WILDCARD))
    }

    pub fn actions(&self, class: Option<DefectClass>, mechanism: &str) -> IndexMap<String, String> {
        self.lookup(class, mechanism)
            .map(|r| r.actions.iter().cloned().collect())
            .unwrap_or_default()
    }
}
