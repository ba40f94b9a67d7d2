#![allow(dead_code)]

use std::path::Path;

use precinct_forensics::ingest::{default_registry, Dataset, PrecinctRecord, RegionInfo, Registry};
use precinct_forensics::synth::{HonestModel, PartySupport, RegionModel, SizeDist, UnitDist};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
pub struct TableRow {
    pub region_id: String,
    pub electors_millions: f64,
    pub share_pct: f64,
    pub turnout_pct: f64,
    pub share_of_electors_pct: f64,
}

pub fn table(name: &str) -> Vec<TableRow> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    csv::Reader::from_path(path)
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

/// One region-level station per table row: electors from the millions
/// column, ballots from turnout, party votes from share, every ballot valid.
pub fn table_dataset(rows: &[TableRow]) -> Dataset {
    let records = rows
        .iter()
        .map(|r| {
            let registered = (r.electors_millions * 1e6).round() as u64;
            let cast = (registered as f64 * r.turnout_pct / 100.0).round() as u64;
            let ur = (cast as f64 * r.share_pct / 100.0).round() as u64;
            PrecinctRecord {
                station_id: r.region_id.clone(),
                region_id: r.region_id.clone(),
                registered,
                ballots_cast: cast,
                valid_ballots: cast,
                votes: vec![ur],
            }
        })
        .collect();
    Dataset::new(records, default_registry(), vec!["UR".into()]).unwrap()
}

pub fn addendum() -> Vec<TableRow> {
    table("addendum1.csv")
}

/// Heterogeneous honest model used by the dent controls: log-uniform
/// station sizes on [10, 3000], turnout Beta(0.6, 20), UR Beta(0.5, 10) and
/// KPRF Beta(0.2, 20).
pub fn dent_model(stations: u64) -> HonestModel {
    HonestModel {
        parties: vec!["UR".into(), "KPRF".into()],
        regions: vec![RegionModel {
            region_id: "synthetic".into(),
            name: None,
            status: None,
            exceptional: false,
            station_count: stations,
            size: SizeDist::LogUniform { lo: 10, hi: 3000 },
            turnout: UnitDist::Beta {
                mean: 0.6,
                concentration: 20.0,
            },
            support: vec![
                PartySupport {
                    share: UnitDist::Beta {
                        mean: 0.5,
                        concentration: 10.0,
                    },
                    turnout_slope: 0.0,
                },
                PartySupport {
                    share: UnitDist::Beta {
                        mean: 0.2,
                        concentration: 20.0,
                    },
                    turnout_slope: 0.0,
                },
            ],
        }],
    }
}

/// Tighter honest model used by the cloud-tilt controls; `ur_slope` turns
/// on the correlated-honest link for UR.
pub fn tilt_model(stations: u64, ur_slope: f64) -> HonestModel {
    let beta = |mean| UnitDist::Beta {
        mean,
        concentration: 50.0,
    };
    HonestModel {
        parties: vec!["UR".into(), "KPRF".into()],
        regions: vec![RegionModel {
            region_id: "synthetic".into(),
            name: None,
            status: None,
            exceptional: false,
            station_count: stations,
            size: SizeDist::LogUniform { lo: 10, hi: 3000 },
            turnout: beta(0.5),
            support: vec![
                PartySupport {
                    share: beta(0.4),
                    turnout_slope: ur_slope,
                },
                PartySupport {
                    share: beta(0.2),
                    turnout_slope: 0.0,
                },
            ],
        }],
    }
}

pub const REGIONS: [&str; 3] = ["north", "south", "east"];

pub fn small_registry() -> Registry {
    let mut reg: Registry = REGIONS
        .iter()
        .map(|id| (id.to_string(), RegionInfo::ordinary(*id)))
        .collect();
    reg.get_mut("east").unwrap().exceptional = true;
    reg
}

type RawRow = (u64, f64, f64, Vec<f64>, usize);

fn build(rows: Vec<RawRow>, parties: usize, clean: bool) -> Dataset {
    let records = rows
        .into_iter()
        .enumerate()
        .map(|(i, (reg, a, b, w, ri))| {
            let registered = if clean { reg.max(1) } else { reg };
            let (cast, valid, votes) = if clean {
                let cast = (registered as f64 * a).round() as u64;
                let valid = (cast as f64 * b).round() as u64;
                let sum: f64 = w.iter().sum::<f64>().max(1.0);
                let votes = w.iter().map(|x| (valid as f64 * x / sum).floor() as u64).collect();
                (cast, valid, votes)
            } else {
                // arbitrary, possibly inconsistent counts
                let scale = |x: f64| (x * 4000.0) as u64;
                (scale(a), scale(b), w.iter().map(|&x| scale(x)).collect())
            };
            PrecinctRecord {
                station_id: format!("s{i:04}"),
                region_id: REGIONS[ri].to_string(),
                registered,
                ballots_cast: cast,
                valid_ballots: valid,
                votes,
            }
        })
        .collect();
    let names = ["UR", "KPRF", "LDPR"][..parties].iter().map(|s| s.to_string()).collect();
    Dataset::new(records, small_registry(), names).unwrap()
}

fn arb(max_stations: usize, clean: bool) -> impl Strategy<Value = Dataset> {
    (1usize..=3).prop_flat_map(move |np| {
        prop::collection::vec(
            (
                0u64..3000,
                0.0..=1.0f64,
                0.0..=1.0f64,
                prop::collection::vec(0.0..1.0f64, np),
                0usize..REGIONS.len(),
            ),
            0..max_stations,
        )
        .prop_map(move |rows| build(rows, np, clean))
    })
}

/// Datasets whose records all satisfy the count invariants.
pub fn arb_dataset(max_stations: usize) -> impl Strategy<Value = Dataset> {
    arb(max_stations, true)
}

/// Datasets with arbitrary counts, including ones `validate` flags.
pub fn arb_dirty_dataset(max_stations: usize) -> impl Strategy<Value = Dataset> {
    arb(max_stations, false)
}
