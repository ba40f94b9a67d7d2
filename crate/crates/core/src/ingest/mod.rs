//! Precinct records, region metadata, validation and record selection.

mod io;
mod registry;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mixture::SizeMeasure;

pub use io::{
    parse_dataset, parse_dataset_inferring_regions, parse_dataset_with, parse_registry,
    write_dataset, write_registry, UnknownRegions,
};
pub use registry::{
    default_registry, exceptional_set, GeoTag, RegionInfo, RegionStatus, Registry,
    EXCEPTIONAL_PLUS_EXTRA,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("header: {0}")]
    Header(String),
    #[error("line {line}: {detail}")]
    Malformed { line: u64, detail: String },
    #[error("line {line}: duplicate station_id `{station_id}`")]
    DuplicateStation { line: u64, station_id: String },
    #[error("line {line}: unknown region_id `{region_id}`")]
    UnknownRegion { line: u64, region_id: String },
    #[error("duplicate region_id `{0}` in registry")]
    DuplicateRegion(String),
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
}

/// Counts reported by one voting station.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecinctRecord {
    pub station_id: String,
    pub region_id: String,
    pub registered: u64,
    pub ballots_cast: u64,
    pub valid_ballots: u64,
    /// Votes per party, aligned with [`Dataset::parties`].
    pub votes: Vec<u64>,
}

impl PrecinctRecord {
    pub fn total_votes(&self) -> u64 {
        self.votes.iter().sum()
    }

    pub fn denominator(&self, denom: ShareDenominator) -> u64 {
        match denom {
            ShareDenominator::BallotsCast => self.ballots_cast,
            ShareDenominator::ValidBallots => self.valid_ballots,
        }
    }

    /// `ballots_cast / registered`, or `None` for an empty roll.
    pub fn turnout(&self) -> Option<f64> {
        (self.registered > 0).then(|| self.ballots_cast as f64 / self.registered as f64)
    }

    pub fn share(&self, party: usize, denom: ShareDenominator) -> Option<f64> {
        let d = self.denominator(denom);
        (d > 0).then(|| self.votes[party] as f64 / d as f64)
    }
}

/// An immutable, internally consistent collection of station records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<PrecinctRecord>,
    regions: Registry,
    parties: Vec<String>,
}

impl Dataset {
    /// Checks unique station ids, resolvable regions, unique parties and that
    /// every vote vector has one entry per party.
    pub fn new(
        records: Vec<PrecinctRecord>,
        regions: Registry,
        parties: Vec<String>,
    ) -> Result<Self, IngestError> {
        let mut unique = HashSet::new();
        for p in &parties {
            if !unique.insert(p.as_str()) {
                return Err(IngestError::Inconsistent(format!("party `{p}` listed twice")));
            }
        }
        let mut ids = HashSet::new();
        for r in &records {
            if !ids.insert(r.station_id.as_str()) {
                return Err(IngestError::Inconsistent(format!(
                    "duplicate station_id `{}`",
                    r.station_id
                )));
            }
            if !regions.contains_key(&r.region_id) {
                return Err(IngestError::Inconsistent(format!(
                    "station `{}` has unknown region_id `{}`",
                    r.station_id, r.region_id
                )));
            }
            if r.votes.len() != parties.len() {
                return Err(IngestError::Inconsistent(format!(
                    "station `{}` has {} vote counts for {} parties",
                    r.station_id,
                    r.votes.len(),
                    parties.len()
                )));
            }
        }
        Ok(Dataset {
            records,
            regions,
            parties,
        })
    }

    pub fn records(&self) -> &[PrecinctRecord] {
        &self.records
    }

    pub fn regions(&self) -> &Registry {
        &self.regions
    }

    pub fn parties(&self) -> &[String] {
        &self.parties
    }

    pub fn party_index(&self, party: &str) -> Option<usize> {
        self.parties.iter().position(|p| p == party)
    }

    pub fn region(&self, record: &PrecinctRecord) -> &RegionInfo {
        &self.regions[&record.region_id]
    }

    /// A dataset with the same regions and parties but different records.
    pub fn with_records(&self, records: Vec<PrecinctRecord>) -> Result<Self, IngestError> {
        Dataset::new(records, self.regions.clone(), self.parties.clone())
    }

    pub fn into_parts(self) -> (Vec<PrecinctRecord>, Registry, Vec<String>) {
        (self.records, self.regions, self.parties)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    #[serde(rename = "V_ZERO_REGISTERED")]
    ZeroRegistered,
    #[serde(rename = "V_CAST_GT_REG")]
    CastGtReg,
    #[serde(rename = "V_VALID_GT_CAST")]
    ValidGtCast,
    #[serde(rename = "V_VOTES_GT_VALID")]
    VotesGtValid,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::ZeroRegistered => "V_ZERO_REGISTERED",
            ViolationCode::CastGtReg => "V_CAST_GT_REG",
            ViolationCode::ValidGtCast => "V_VALID_GT_CAST",
            ViolationCode::VotesGtValid => "V_VOTES_GT_VALID",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub station_id: String,
    pub code: ViolationCode,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub counts: BTreeMap<ViolationCode, usize>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn flagged_stations(&self) -> HashSet<&str> {
        self.violations.iter().map(|v| v.station_id.as_str()).collect()
    }
}

/// Check every record invariant. Violations are listed in record order; a
/// record can carry several codes.
pub fn validate(ds: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    for r in ds.records() {
        let votes = r.total_votes();
        let checks = [
            (
                r.registered == 0,
                ViolationCode::ZeroRegistered,
                "registered is 0".to_string(),
            ),
            (
                r.ballots_cast > r.registered,
                ViolationCode::CastGtReg,
                format!("ballots_cast {} > registered {}", r.ballots_cast, r.registered),
            ),
            (
                r.valid_ballots > r.ballots_cast,
                ViolationCode::ValidGtCast,
                format!("valid_ballots {} > ballots_cast {}", r.valid_ballots, r.ballots_cast),
            ),
            (
                votes > r.valid_ballots,
                ViolationCode::VotesGtValid,
                format!("sum of votes {votes} > valid_ballots {}", r.valid_ballots),
            ),
        ];
        for (hit, code, detail) in checks {
            if hit {
                *report.counts.entry(code).or_default() += 1;
                report.violations.push(Violation {
                    station_id: r.station_id.clone(),
                    code,
                    detail,
                });
            }
        }
    }
    report
}

/// Empirical distribution of station sizes (registered electors), one unit
/// of mass per record.
pub fn station_size_distribution(ds: &Dataset) -> SizeMeasure {
    let mut mu = SizeMeasure::new();
    for r in ds.records() {
        mu.add(r.registered, 1.0);
    }
    mu
}

/// Denominator of a party share.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareDenominator {
    #[default]
    BallotsCast,
    ValidBallots,
}

/// What to do with records that fail validation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlaggedPolicy {
    #[default]
    Exclude,
    Include,
}

/// Which regions take part in an analysis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionFilter {
    #[default]
    All,
    ExcludeExceptional,
    /// Exceptional regions plus [`EXCEPTIONAL_PLUS_EXTRA`].
    ExcludeExceptionalPlus,
    Only(BTreeSet<String>),
    Exclude(BTreeSet<String>),
}

impl RegionFilter {
    pub fn admits(&self, region: &RegionInfo) -> bool {
        let id = region.region_id.as_str();
        match self {
            RegionFilter::All => true,
            RegionFilter::ExcludeExceptional => !region.exceptional,
            RegionFilter::ExcludeExceptionalPlus => {
                !region.exceptional && !EXCEPTIONAL_PLUS_EXTRA.contains(&id)
            }
            RegionFilter::Only(set) => set.contains(id),
            RegionFilter::Exclude(set) => !set.contains(id),
        }
    }
}

/// Stations and weight removed for one reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub stations: u64,
    pub weight: f64,
}

impl Tally {
    fn add(&mut self, weight: f64) {
        self.stations += 1;
        self.weight += weight;
    }
}

/// Why a record was left out of an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exclusion {
    ValidationFlagged,
    RegionFiltered,
    BelowMinSize,
    ZeroDenominator,
}

/// Exclusion counters. Every record lands in at most one counter, checked in
/// field order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub validation_flagged: Tally,
    pub region_filtered: Tally,
    pub below_min_size: Tally,
    pub zero_denominator: Tally,
}

impl Excluded {
    pub fn record(&mut self, why: Exclusion, weight: f64) {
        match why {
            Exclusion::ValidationFlagged => self.validation_flagged.add(weight),
            Exclusion::RegionFiltered => self.region_filtered.add(weight),
            Exclusion::BelowMinSize => self.below_min_size.add(weight),
            Exclusion::ZeroDenominator => self.zero_denominator.add(weight),
        }
    }

    pub fn stations(&self) -> u64 {
        self.validation_flagged.stations
            + self.region_filtered.stations
            + self.below_min_size.stations
            + self.zero_denominator.stations
    }

    pub fn weight(&self) -> f64 {
        self.validation_flagged.weight
            + self.region_filtered.weight
            + self.below_min_size.weight
            + self.zero_denominator.weight
    }
}

/// Record filters shared by the histogram, cloud and bound analyses.
pub(crate) struct Selector<'a> {
    ds: &'a Dataset,
    flagged: HashSet<String>,
    region_filter: &'a RegionFilter,
    min_station_size: u64,
}

impl<'a> Selector<'a> {
    pub(crate) fn new(
        ds: &'a Dataset,
        flagged_policy: FlaggedPolicy,
        region_filter: &'a RegionFilter,
        min_station_size: u64,
    ) -> Self {
        let flagged = match flagged_policy {
            FlaggedPolicy::Exclude => validate(ds)
                .violations
                .into_iter()
                .map(|v| v.station_id)
                .collect(),
            FlaggedPolicy::Include => HashSet::new(),
        };
        Selector {
            ds,
            flagged,
            region_filter,
            min_station_size,
        }
    }

    /// `denominator` is the divisor the analysis needs; zero excludes the record.
    pub(crate) fn classify(&self, r: &PrecinctRecord, denominator: u64) -> Option<Exclusion> {
        if self.flagged.contains(&r.station_id) {
            Some(Exclusion::ValidationFlagged)
        } else if !self.region_filter.admits(self.ds.region(r)) {
            Some(Exclusion::RegionFiltered)
        } else if r.registered < self.min_station_size {
            Some(Exclusion::BelowMinSize)
        } else if r.registered == 0 || denominator == 0 {
            Some(Exclusion::ZeroDenominator)
        } else {
            None
        }
    }
}
