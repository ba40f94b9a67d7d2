//! Region metadata and the bundled registry of Russian federal subjects.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Constitutional status of a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionStatus {
    Ordinary,
    Republic,
    AutonomousOkrug,
    AutonomousOblast,
    FederalCity,
}

impl RegionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionStatus::Ordinary => "ordinary",
            RegionStatus::Republic => "republic",
            RegionStatus::AutonomousOkrug => "autonomous_okrug",
            RegionStatus::AutonomousOblast => "autonomous_oblast",
            RegionStatus::FederalCity => "federal_city",
        }
    }
}

impl fmt::Display for RegionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ordinary" => RegionStatus::Ordinary,
            "republic" => RegionStatus::Republic,
            "autonomous_okrug" => RegionStatus::AutonomousOkrug,
            "autonomous_oblast" => RegionStatus::AutonomousOblast,
            "federal_city" => RegionStatus::FederalCity,
            other => return Err(format!("unknown region status `{other}`")),
        })
    }
}

/// Geographic grouping codes used in the regional table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GeoTag {
    /// North Caucasus.
    NC,
    /// Republic with an Islamic title nation.
    I,
    /// European prairie or forest-steppe.
    Pr,
    /// European forest zone.
    For,
    /// European tundra.
    T,
    /// West Siberia.
    WS,
    /// East Siberia and the Far East.
    East,
}

impl GeoTag {
    pub fn as_str(self) -> &'static str {
        match self {
            GeoTag::NC => "NC",
            GeoTag::I => "I",
            GeoTag::Pr => "Pr",
            GeoTag::For => "For",
            GeoTag::T => "T",
            GeoTag::WS => "WS",
            GeoTag::East => "East",
        }
    }
}

impl FromStr for GeoTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "NC" => GeoTag::NC,
            "I" => GeoTag::I,
            "Pr" => GeoTag::Pr,
            "For" => GeoTag::For,
            "T" => GeoTag::T,
            "WS" => GeoTag::WS,
            "East" => GeoTag::East,
            other => return Err(format!("unknown geo tag `{other}`")),
        })
    }
}

/// Metadata for one region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionInfo {
    pub region_id: String,
    pub name: String,
    pub status: RegionStatus,
    pub exceptional: bool,
    /// Zero or more geographic codes; serialized as a `;`-separated list in CSV.
    pub geo_tags: Vec<GeoTag>,
}

impl RegionInfo {
    /// A region with no metadata beyond its id, as used for inferred registries.
    pub fn ordinary(region_id: impl Into<String>) -> Self {
        let region_id = region_id.into();
        RegionInfo {
            name: region_id.clone(),
            region_id,
            status: RegionStatus::Ordinary,
            exceptional: false,
            geo_tags: Vec::new(),
        }
    }

    pub(crate) fn geo_field(&self) -> String {
        self.geo_tags
            .iter()
            .map(|t| t.as_str())
            .collect::<Vec<_>>()
            .join(";")
    }
}

pub type Registry = BTreeMap<String, RegionInfo>;

/// Regions added to the exceptional set when the "exceptional plus" grouping
/// is requested. They are republics with extreme results that the bundled
/// registry deliberately does not flag as exceptional.
pub const EXCEPTIONAL_PLUS_EXTRA: &[&str] = &["mordovia"];

const BUNDLED_REGIONS: &str = include_str!("../../data/regions_ru.csv");

/// The bundled registry of the 83 federal subjects (2011), keyed by slug.
///
/// Exactly nine republics carry the `exceptional` flag; see
/// [`EXCEPTIONAL_PLUS_EXTRA`] for the separately tracked addition.
pub fn default_registry() -> Registry {
    super::io::parse_registry(BUNDLED_REGIONS.as_bytes())
        .expect("bundled region registry is well formed")
}

/// Region ids of the exceptional set, optionally widened by
/// [`EXCEPTIONAL_PLUS_EXTRA`] (when those ids are present in `registry`).
pub fn exceptional_set(registry: &Registry, plus: bool) -> std::collections::BTreeSet<String> {
    let mut set: std::collections::BTreeSet<String> = registry
        .values()
        .filter(|r| r.exceptional)
        .map(|r| r.region_id.clone())
        .collect();
    if plus {
        for id in EXCEPTIONAL_PLUS_EXTRA {
            if registry.contains_key(*id) {
                set.insert((*id).to_string());
            }
        }
    }
    set
}

pub(crate) fn parse_exceptional_flag(raw: &str) -> Result<bool, String> {
    match raw {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("exceptional must be 0 or 1, got `{other}`")),
    }
}

pub(crate) fn parse_geo_tags(raw: &str) -> Result<Vec<GeoTag>, String> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(GeoTag::from_str)
        .collect()
}
