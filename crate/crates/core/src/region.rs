//! Per-region aggregation and subset decomposition.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{Dataset, RegionStatus};

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("unknown party `{0}`")]
    UnknownParty(String),
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("no valid ballots outside the region set")]
    EmptyComplement,
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub region_id: String,
    pub name: String,
    pub status: RegionStatus,
    pub geo_tag: String,
    pub stations: u64,
    pub electors: u64,
    pub ballots_cast: u64,
    pub valid_ballots: u64,
    pub party: String,
    pub party_votes: u64,
    /// Party votes over valid ballots.
    pub party_share: Option<f64>,
    /// Ballots cast over electors.
    pub turnout: Option<f64>,
    /// Party votes over electors.
    pub share_of_electors: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Exact per-region totals for every region that has stations, ordered by
/// descending party share; regions without a share come last and ties go by
/// region id. A region with no ballots cast reports turnout 0.
pub fn summarize_regions(ds: &Dataset, party: &str) -> Result<Vec<RegionSummary>, RegionError> {
    let pi = ds
        .party_index(party)
        .ok_or_else(|| RegionError::UnknownParty(party.to_string()))?;
    let mut acc: BTreeMap<&str, [u64; 5]> = BTreeMap::new();
    for r in ds.records() {
        let t = acc.entry(r.region_id.as_str()).or_default();
        t[0] += 1;
        t[1] += r.registered;
        t[2] += r.ballots_cast;
        t[3] += r.valid_ballots;
        t[4] += r.votes[pi];
    }
    let mut out: Vec<RegionSummary> = acc
        .into_iter()
        .map(|(id, [stations, electors, cast, valid, votes])| {
            let info = &ds.regions()[id];
            RegionSummary {
                region_id: id.to_string(),
                name: info.name.clone(),
                status: info.status,
                geo_tag: info.geo_field(),
                stations,
                electors,
                ballots_cast: cast,
                valid_ballots: valid,
                party: party.to_string(),
                party_votes: votes,
                party_share: ratio(votes, valid),
                turnout: if cast == 0 { Some(0.0) } else { ratio(cast, electors) },
                share_of_electors: ratio(votes, electors),
            }
        })
        .collect();
    out.sort_by(|a, b| match (a.party_share, b.party_share) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.region_id.cmp(&b.region_id)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.region_id.cmp(&b.region_id),
    });
    Ok(out)
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{:.1}", v * 100.0)).unwrap_or_default()
}

/// Region report CSV with percentages and electors (in millions) to one
/// decimal place.
pub fn region_report_csv(summaries: &[RegionSummary]) -> Result<String, RegionError> {
    let err = |e: csv::Error| RegionError::Csv(e.to_string());
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "region_id",
        "name",
        "electors_millions",
        "party_share_pct",
        "turnout_pct",
        "share_of_electors_pct",
        "status",
        "geo_tag",
    ])
    .map_err(err)?;
    for s in summaries {
        wtr.write_record([
            s.region_id.clone(),
            s.name.clone(),
            format!("{:.1}", s.electors as f64 / 1e6),
            pct(s.party_share),
            pct(s.turnout),
            pct(s.share_of_electors),
            s.status.as_str().to_string(),
            s.geo_tag.clone(),
        ])
        .map_err(err)?;
    }
    let bytes = wtr.into_inner().map_err(|e| RegionError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub party: String,
    pub region_set: BTreeSet<String>,
    pub total_votes: u64,
    pub subset_votes: u64,
    pub subset_fraction: f64,
    /// Party votes over valid ballots, whole dataset.
    pub overall_share: f64,
    /// Party votes over valid ballots outside the region set.
    pub share_excluding_subset: f64,
    pub relative_loss: f64,
}

/// Split a party's result into the contribution of `region_set` and the
/// result of the remaining regions.
pub fn decompose(
    ds: &Dataset,
    party: &str,
    region_set: &BTreeSet<String>,
) -> Result<Decomposition, RegionError> {
    let pi = ds
        .party_index(party)
        .ok_or_else(|| RegionError::UnknownParty(party.to_string()))?;
    if let Some(id) = region_set.iter().find(|id| !ds.regions().contains_key(*id)) {
        return Err(RegionError::UnknownRegion(id.clone()));
    }
    let (mut votes, mut valid, mut sub_votes, mut sub_valid) = (0u64, 0u64, 0u64, 0u64);
    for r in ds.records() {
        votes += r.votes[pi];
        valid += r.valid_ballots;
        if region_set.contains(&r.region_id) {
            sub_votes += r.votes[pi];
            sub_valid += r.valid_ballots;
        }
    }
    if valid == sub_valid {
        return Err(RegionError::EmptyComplement);
    }
    let overall = votes as f64 / valid as f64;
    let excluding = (votes - sub_votes) as f64 / (valid - sub_valid) as f64;
    Ok(Decomposition {
        party: party.to_string(),
        region_set: region_set.clone(),
        total_votes: votes,
        subset_votes: sub_votes,
        subset_fraction: ratio(sub_votes, votes).unwrap_or(0.0),
        overall_share: overall,
        share_excluding_subset: excluding,
        relative_loss: if overall > 0.0 { (overall - excluding) / overall } else { 0.0 },
    })
}
