//! CSV reading and writing for precinct tables and region registries.

use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};

use super::registry::{parse_exceptional_flag, parse_geo_tags, RegionInfo, Registry};
use super::{Dataset, IngestError, PrecinctRecord};

const FIXED_COLUMNS: [&str; 5] = [
    "station_id",
    "region_id",
    "registered",
    "ballots_cast",
    "valid_ballots",
];
const VOTE_PREFIX: &str = "votes_";
const REGISTRY_COLUMNS: [&str; 5] = ["region_id", "name", "status", "exceptional", "geo_tag"];

/// How region ids that are missing from the registry are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownRegions {
    Reject,
    /// Register them as ordinary regions named after their id.
    Infer,
}

/// Parse a precinct CSV against a region registry.
///
/// Unknown region ids are an error; use [`parse_dataset_inferring_regions`]
/// when no registry is available.
pub fn parse_dataset<R: Read>(source: R, registry: &Registry) -> Result<Dataset, IngestError> {
    parse_dataset_with(source, registry, UnknownRegions::Reject)
}

/// Parse a precinct CSV, registering every region id it mentions that is not
/// in `registry` as an ordinary region.
pub fn parse_dataset_inferring_regions<R: Read>(
    source: R,
    registry: &Registry,
) -> Result<Dataset, IngestError> {
    parse_dataset_with(source, registry, UnknownRegions::Infer)
}

pub fn parse_dataset_with<R: Read>(
    source: R,
    registry: &Registry,
    unknown: UnknownRegions,
) -> Result<Dataset, IngestError> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    let parties = parse_header(&headers)?;
    let width = FIXED_COLUMNS.len() + parties.len();

    let mut regions = registry.clone();
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    let mut row = StringRecord::new();
    while rdr.read_record(&mut row)? {
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != width {
            return Err(IngestError::Malformed {
                line,
                detail: format!("expected {width} columns, found {}", row.len()),
            });
        }
        let count = |i: usize| -> Result<u64, IngestError> {
            row[i].parse::<u64>().map_err(|_| IngestError::Malformed {
                line,
                detail: format!("column `{}`: `{}` is not a count", &headers[i], &row[i]),
            })
        };
        let station_id = row[0].to_string();
        let region_id = row[1].to_string();
        if station_id.is_empty() {
            return Err(IngestError::Malformed {
                line,
                detail: "empty station_id".into(),
            });
        }
        if !regions.contains_key(&region_id) {
            match unknown {
                UnknownRegions::Reject => {
                    return Err(IngestError::UnknownRegion { line, region_id });
                }
                UnknownRegions::Infer => {
                    regions.insert(region_id.clone(), RegionInfo::ordinary(region_id.clone()));
                }
            }
        }
        if !seen.insert(station_id.clone()) {
            return Err(IngestError::DuplicateStation { line, station_id });
        }
        let votes = (FIXED_COLUMNS.len()..width)
            .map(count)
            .collect::<Result<Vec<_>, _>>()?;
        records.push(PrecinctRecord {
            station_id,
            region_id,
            registered: count(2)?,
            ballots_cast: count(3)?,
            valid_ballots: count(4)?,
            votes,
        });
    }
    Dataset::new(records, regions, parties)
}

fn parse_header(headers: &StringRecord) -> Result<Vec<String>, IngestError> {
    if headers.len() < FIXED_COLUMNS.len() {
        return Err(IngestError::Header(format!(
            "expected at least {} columns, found {}",
            FIXED_COLUMNS.len(),
            headers.len()
        )));
    }
    for (i, want) in FIXED_COLUMNS.iter().enumerate() {
        if &headers[i] != *want {
            return Err(IngestError::Header(format!(
                "column {} must be `{want}`, found `{}`",
                i + 1,
                &headers[i]
            )));
        }
    }
    let mut parties = Vec::new();
    let mut unique = BTreeSet::new();
    for h in headers.iter().skip(FIXED_COLUMNS.len()) {
        let party = h
            .strip_prefix(VOTE_PREFIX)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| IngestError::Header(format!("vote column `{h}` lacks the `votes_` prefix")))?;
        if !unique.insert(party.to_string()) {
            return Err(IngestError::Header(format!("party `{party}` appears twice")));
        }
        parties.push(party.to_string());
    }
    Ok(parties)
}

/// Write a dataset in the precinct CSV schema, records in dataset order.
pub fn write_dataset<W: Write>(ds: &Dataset, sink: W) -> Result<(), IngestError> {
    let mut wtr = WriterBuilder::new().from_writer(sink);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(ds.parties().iter().map(|p| format!("{VOTE_PREFIX}{p}")));
    wtr.write_record(&header)?;
    for r in ds.records() {
        let mut row = vec![
            r.station_id.clone(),
            r.region_id.clone(),
            r.registered.to_string(),
            r.ballots_cast.to_string(),
            r.valid_ballots.to_string(),
        ];
        row.extend(r.votes.iter().map(u64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parse a region registry CSV (`region_id,name,status,exceptional,geo_tag`).
pub fn parse_registry<R: Read>(source: R) -> Result<Registry, IngestError> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(REGISTRY_COLUMNS.iter().copied()) {
        return Err(IngestError::Header(format!(
            "registry header must be `{}`",
            REGISTRY_COLUMNS.join(",")
        )));
    }
    let mut out = Registry::new();
    let mut row = StringRecord::new();
    while rdr.read_record(&mut row)? {
        let line = row.position().map_or(0, |p| p.line());
        let bad = |detail: String| IngestError::Malformed { line, detail };
        if row.len() != REGISTRY_COLUMNS.len() {
            return Err(bad(format!(
                "expected {} columns, found {}",
                REGISTRY_COLUMNS.len(),
                row.len()
            )));
        }
        let info = RegionInfo {
            region_id: row[0].to_string(),
            name: row[1].to_string(),
            status: row[2].parse().map_err(bad)?,
            exceptional: parse_exceptional_flag(&row[3]).map_err(bad)?,
            geo_tags: parse_geo_tags(&row[4]).map_err(bad)?,
        };
        if info.region_id.is_empty() {
            return Err(bad("empty region_id".into()));
        }
        if out.contains_key(&info.region_id) {
            return Err(IngestError::DuplicateRegion(info.region_id));
        }
        out.insert(info.region_id.clone(), info);
    }
    Ok(out)
}

/// Write a registry CSV, rows ordered by region id.
pub fn write_registry<W: Write>(registry: &Registry, sink: W) -> Result<(), IngestError> {
    let mut wtr = WriterBuilder::new().from_writer(sink);
    wtr.write_record(REGISTRY_COLUMNS)?;
    for r in registry.values() {
        wtr.write_record([
            r.region_id.as_str(),
            r.name.as_str(),
            r.status.as_str(),
            if r.exceptional { "1" } else { "0" },
            r.geo_field().as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::registry::RegionStatus;

    fn registry() -> Registry {
        ["r1", "r2"]
            .into_iter()
            .map(|id| (id.to_string(), RegionInfo::ordinary(id)))
            .collect()
    }

    const HEADER: &str = "station_id,region_id,registered,ballots_cast,valid_ballots,votes_UR,votes_CPRF\n";

    #[test]
    fn header_only_file_gives_empty_dataset() {
        let ds = parse_dataset(HEADER.as_bytes(), &registry()).unwrap();
        assert!(ds.records().is_empty());
        assert_eq!(ds.parties(), ["UR", "CPRF"]);
    }

    #[test]
    fn two_row_fixture_is_read_exactly() {
        let src = "station_id,region_id,registered,ballots_cast,valid_ballots,votes_UR\n\
                   A,r1,200,100,98,50\n\
                   B,r2,300,240,240,120\n";
        let ds = parse_dataset(src.as_bytes(), &registry()).unwrap();
        let recs = ds.records();
        assert_eq!(recs.len(), 2);
        assert_eq!(
            recs[0],
            PrecinctRecord {
                station_id: "A".into(),
                region_id: "r1".into(),
                registered: 200,
                ballots_cast: 100,
                valid_ballots: 98,
                votes: vec![50],
            }
        );
        assert_eq!((recs[1].registered, recs[1].ballots_cast, recs[1].valid_ballots), (300, 240, 240));
        assert_eq!(recs[1].votes, vec![120]);
    }

    #[test]
    fn wrong_column_count_names_the_line() {
        let src = format!("{HEADER}A,r1,10,5,5,3,1\nB,r1,10,5,5,3\n");
        match parse_dataset(src.as_bytes(), &registry()) {
            Err(IngestError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_integer_count_is_rejected() {
        let src = format!("{HEADER}A,r1,10,5,5,3.5,1\n");
        match parse_dataset(src.as_bytes(), &registry()) {
            Err(IngestError::Malformed { line, detail }) => {
                assert_eq!(line, 2);
                assert!(detail.contains("votes_UR"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let neg = format!("{HEADER}A,r1,-10,5,5,3,1\n");
        assert!(parse_dataset(neg.as_bytes(), &registry()).is_err());
    }

    #[test]
    fn duplicate_station_is_rejected() {
        let src = format!("{HEADER}A,r1,10,5,5,3,1\nA,r2,10,5,5,3,1\n");
        assert!(matches!(
            parse_dataset(src.as_bytes(), &registry()),
            Err(IngestError::DuplicateStation { line: 3, .. })
        ));
    }

    #[test]
    fn unknown_region_names_the_id() {
        let src = format!("{HEADER}A,nowhere,10,5,5,3,1\n");
        let err = parse_dataset(src.as_bytes(), &registry()).unwrap_err();
        assert!(err.to_string().contains("nowhere"));
        let ds = parse_dataset_inferring_regions(src.as_bytes(), &registry()).unwrap();
        assert_eq!(ds.regions()["nowhere"].status, RegionStatus::Ordinary);
    }

    #[test]
    fn bad_headers() {
        let reg = registry();
        assert!(parse_dataset("station,region\n".as_bytes(), &reg).is_err());
        assert!(parse_dataset(
            "station_id,region_id,registered,ballots_cast,valid_ballots,UR\n".as_bytes(),
            &reg
        )
        .is_err());
        assert!(parse_dataset(
            "station_id,region_id,registered,ballots_cast,valid_ballots,votes_UR,votes_UR\n".as_bytes(),
            &reg
        )
        .is_err());
        assert!(parse_dataset("".as_bytes(), &reg).is_err());
    }

    #[test]
    fn registry_round_trip() {
        let reg = crate::ingest::default_registry();
        let mut buf = Vec::new();
        write_registry(&reg, &mut buf).unwrap();
        assert_eq!(parse_registry(buf.as_slice()).unwrap(), reg);
    }

    #[test]
    fn registry_rejects_bad_rows() {
        let hdr = "region_id,name,status,exceptional,geo_tag\n";
        assert!(parse_registry(format!("{hdr}a,A,kingdom,0,\n").as_bytes()).is_err());
        assert!(parse_registry(format!("{hdr}a,A,republic,yes,\n").as_bytes()).is_err());
        assert!(parse_registry(format!("{hdr}a,A,republic,1,\na,B,ordinary,0,\n").as_bytes()).is_err());
        let ok = parse_registry(format!("{hdr}a,A,republic,1,NC;I\n").as_bytes()).unwrap();
        assert!(ok["a"].exceptional);
    }
}
