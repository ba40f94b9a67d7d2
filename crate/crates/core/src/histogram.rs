//! Station-voting diagrams and turnout distributions.
//!
//! Bin edges are exact rationals. Bins are half-open `[lo, hi)` except the
//! last, which is closed at 1; a value on an interior edge belongs to the bin
//! on its right. A station's share is the exact ratio of two counts, so bin
//! membership never depends on floating-point rounding.

use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{
    Dataset, Excluded, FlaggedPolicy, RegionFilter, Selector, ShareDenominator,
};

const MAX_DENOMINATOR: i128 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum HistogramError {
    #[error("unknown party `{0}`")]
    UnknownParty(String),
    #[error("bin width {0} must lie in (0, 1]")]
    BadWidth(f64),
    #[error("{0} is not a fraction with denominator at most 1000000")]
    NotAFraction(f64),
    #[error("bin width {0} yields fewer than 2 bins")]
    TooFewBins(f64),
    #[error("weight mode `party_votes` needs a party axis")]
    PartyVotesWithoutParty,
    #[error("histograms are not aligned: {0}")]
    Misaligned(String),
}

pub type Q = Ratio<i128>;

/// Best rational approximation of `x` with denominator at most 10^6, if it
/// matches `x` to within a few ulps.
pub fn exact_fraction(x: f64) -> Option<Q> {
    if !x.is_finite() {
        return None;
    }
    let tol = 4.0 * f64::EPSILON * x.abs().max(1.0);
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x.abs();
    for _ in 0..64 {
        let a = r.floor();
        if a > 1e15 {
            return None;
        }
        let a = a as i128;
        let (h2, k2) = (a * h1 + h0, a * k1 + k0);
        if k2 > MAX_DENOMINATOR {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - x.abs()).abs() <= tol {
            let q = Q::new(h1, k1);
            return Some(if x < 0.0 { -q } else { q });
        }
        let frac = r - r.floor();
        if frac <= 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn floor_div(num: i128, den: i128) -> i128 {
    num.div_euclid(den)
}

/// Where bin edges sit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Edges at `0, w, 2w, ...`.
    #[default]
    LeftEdgesAtZero,
    /// Edges at `f - w/2 + k w`, so that `f` is a bin centre. Partial bins
    /// appear at either end of `[0, 1]` as needed.
    CenteredOn(f64),
}

/// Exact bin layout over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    width: Q,
    /// Edge offset reduced into `[0, width)`.
    offset: Q,
    first: i128,
    count: usize,
}

impl Binning {
    pub fn new(bin_width: f64, alignment: Alignment) -> Result<Self, HistogramError> {
        if !(bin_width > 0.0 && bin_width <= 1.0) {
            return Err(HistogramError::BadWidth(bin_width));
        }
        let width = exact_fraction(bin_width).ok_or(HistogramError::NotAFraction(bin_width))?;
        let shift = match alignment {
            Alignment::LeftEdgesAtZero => Q::from_integer(0),
            Alignment::CenteredOn(f) => {
                exact_fraction(f).ok_or(HistogramError::NotAFraction(f))? - width / 2
            }
        };
        let offset = shift - (shift / width).floor() * width;
        let raw = |x: Q| ((x - offset) / width).floor().to_integer();
        let first = raw(Q::from_integer(0));
        let mut last = raw(Q::from_integer(1));
        if ((Q::from_integer(1) - offset) / width).is_integer() {
            last -= 1;
        }
        let count = (last - first + 1) as usize;
        if count < 2 {
            return Err(HistogramError::TooFewBins(bin_width));
        }
        Ok(Binning {
            width,
            offset,
            first,
            count,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn width(&self) -> Q {
        self.width
    }

    fn raw_edge(&self, r: i128) -> Q {
        self.offset + self.width * r
    }

    /// Lower edge of bin `k`, clipped to 0.
    pub fn lo(&self, k: usize) -> Q {
        self.raw_edge(self.first + k as i128).max(Q::from_integer(0))
    }

    /// Upper edge of bin `k`, clipped to 1.
    pub fn hi(&self, k: usize) -> Q {
        self.raw_edge(self.first + k as i128 + 1).min(Q::from_integer(1))
    }

    pub fn edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> = (0..self.count).map(|k| to_f64(self.lo(k))).collect();
        e.push(1.0);
        e
    }

    pub fn is_full(&self, k: usize) -> bool {
        self.hi(k) - self.lo(k) == self.width
    }

    /// Bin holding `num / den`, clamped into range. `den` must be positive.
    pub fn index_of(&self, num: u64, den: u64) -> usize {
        let (on, od) = (*self.offset.numer(), *self.offset.denom());
        let (wn, wd) = (*self.width.numer(), *self.width.denom());
        let (a, b) = (num as i128, den as i128);
        let exact = a
            .checked_mul(od)
            .zip(on.checked_mul(b))
            .and_then(|(x, y)| x.checked_sub(y))
            .and_then(|d| d.checked_mul(wd))
            .zip(b.checked_mul(od).and_then(|d| d.checked_mul(wn)));
        let raw = match exact {
            Some((n, d)) => floor_div(n, d),
            None => ((num as f64 / den as f64 - to_f64(self.offset)) / to_f64(self.width)).floor()
                as i128,
        };
        (raw - self.first).clamp(0, self.count as i128 - 1) as usize
    }

    /// Bin whose exact centre is `f`, if `f` is the centre of a full bin.
    pub fn center_index(&self, f: Q) -> Option<usize> {
        let pos = (f - self.offset) / self.width - Q::new(1, 2);
        if !pos.is_integer() {
            return None;
        }
        let k = pos.to_integer() - self.first;
        (0..self.count as i128)
            .contains(&k)
            .then_some(k as usize)
            .filter(|&k| self.is_full(k))
    }
}

pub(crate) fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Stations,
    Electors,
    PartyVotes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_width: f64,
    pub weight_mode: WeightMode,
    pub min_station_size: u64,
    pub share_denominator: ShareDenominator,
    pub region_filter: RegionFilter,
    pub alignment: Alignment,
    pub flagged_policy: FlaggedPolicy,
}

impl HistogramSpec {
    /// Station weighting, no filters, left-aligned edges.
    pub fn new(bin_width: f64) -> Self {
        HistogramSpec {
            bin_width,
            weight_mode: WeightMode::Stations,
            min_station_size: 0,
            share_denominator: ShareDenominator::BallotsCast,
            region_filter: RegionFilter::All,
            alignment: Alignment::LeftEdgesAtZero,
            flagged_policy: FlaggedPolicy::Exclude,
        }
    }

    pub fn weighted(mut self, mode: WeightMode) -> Self {
        self.weight_mode = mode;
        self
    }

    pub fn min_size(mut self, n: u64) -> Self {
        self.min_station_size = n;
        self
    }

    pub fn centered_on(mut self, f: f64) -> Self {
        self.alignment = Alignment::CenteredOn(f);
        self
    }

    pub fn regions(mut self, filter: RegionFilter) -> Self {
        self.region_filter = filter;
        self
    }

    pub fn denominator(mut self, d: ShareDenominator) -> Self {
        self.share_denominator = d;
        self
    }

    pub fn binning(&self) -> Result<Binning, HistogramError> {
        Binning::new(self.bin_width, self.alignment)
    }
}

/// What the histogram's x axis measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Axis {
    Share { party: String },
    Turnout,
    Coinflip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub spec: HistogramSpec,
    pub axis: Axis,
    pub edges: Vec<f64>,
    pub weights: Vec<f64>,
    pub excluded: Excluded,
}

#[derive(Serialize)]
struct BinRow {
    lo: f64,
    hi: f64,
    weight: f64,
}

#[derive(Serialize)]
struct HistogramJson<'a> {
    spec: &'a HistogramSpec,
    axis: &'a Axis,
    bins: Vec<BinRow>,
    excluded: &'a Excluded,
}

impl Serialize for Histogram {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        HistogramJson {
            spec: &self.spec,
            axis: &self.axis,
            bins: self.bins().map(|(lo, hi, weight)| BinRow { lo, hi, weight }).collect(),
            excluded: &self.excluded,
        }
        .serialize(s)
    }
}

impl Histogram {
    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, &w)| (self.edges[k], self.edges[k + 1], w))
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| (e[0] + e[1]) / 2.0).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lo,hi,weight\n");
        for (lo, hi, w) in self.bins() {
            let _ = writeln!(out, "{lo},{hi},{w}");
        }
        out
    }

    /// Merge into bins `factor` times wider under the same alignment.
    ///
    /// Fails unless every coarse edge is also an edge of this histogram.
    pub fn coarsen(&self, factor: u32) -> Result<Histogram, HistogramError> {
        let fine = self.spec.binning()?;
        let mut spec = self.spec.clone();
        spec.bin_width = to_f64(fine.width() * factor as i128);
        let coarse = spec.binning()?;
        let mut weights = vec![0.0; coarse.len()];
        for k in 0..fine.len() {
            let lo = fine.lo(k);
            let c = coarse.index_of_q(lo);
            if coarse.lo(c) > lo || coarse.hi(c) < fine.hi(k) {
                return Err(HistogramError::Misaligned(format!(
                    "fine bin [{}, {}) straddles a coarse edge",
                    to_f64(lo),
                    to_f64(fine.hi(k))
                )));
            }
            weights[c] += self.weights[k];
        }
        Ok(Histogram {
            spec,
            axis: self.axis.clone(),
            edges: coarse.edges(),
            weights,
            excluded: self.excluded,
        })
    }
}

impl Binning {
    fn index_of_q(&self, x: Q) -> usize {
        let raw = ((x - self.offset) / self.width).floor().to_integer();
        (raw - self.first).clamp(0, self.count as i128 - 1) as usize
    }
}

/// Histogram of a party's station shares.
///
/// Shares above 1, possible only for records that fail validation under
/// [`FlaggedPolicy::Include`], land in the last bin.
pub fn station_voting_histogram(
    ds: &Dataset,
    party: &str,
    spec: &HistogramSpec,
) -> Result<Histogram, HistogramError> {
    let pi = ds
        .party_index(party)
        .ok_or_else(|| HistogramError::UnknownParty(party.to_string()))?;
    let binning = spec.binning()?;
    let selector = Selector::new(ds, spec.flagged_policy, &spec.region_filter, spec.min_station_size);
    let mut weights = vec![0.0; binning.len()];
    let mut excluded = Excluded::default();
    for r in ds.records() {
        let w = match spec.weight_mode {
            WeightMode::Stations => 1.0,
            WeightMode::Electors => r.registered as f64,
            WeightMode::PartyVotes => r.votes[pi] as f64,
        };
        let den = r.denominator(spec.share_denominator);
        match selector.classify(r, den) {
            Some(why) => excluded.record(why, w),
            None => weights[binning.index_of(r.votes[pi], den)] += w,
        }
    }
    Ok(Histogram {
        spec: spec.clone(),
        axis: Axis::Share {
            party: party.to_string(),
        },
        edges: binning.edges(),
        weights,
        excluded,
    })
}

/// Histogram of station turnouts `ballots_cast / registered`.
pub fn turnout_histogram(ds: &Dataset, spec: &HistogramSpec) -> Result<Histogram, HistogramError> {
    if spec.weight_mode == WeightMode::PartyVotes {
        return Err(HistogramError::PartyVotesWithoutParty);
    }
    let binning = spec.binning()?;
    let selector = Selector::new(ds, spec.flagged_policy, &spec.region_filter, spec.min_station_size);
    let mut weights = vec![0.0; binning.len()];
    let mut excluded = Excluded::default();
    for r in ds.records() {
        let w = match spec.weight_mode {
            WeightMode::Electors => r.registered as f64,
            _ => 1.0,
        };
        match selector.classify(r, r.registered) {
            Some(why) => excluded.record(why, w),
            None => weights[binning.index_of(r.ballots_cast, r.registered)] += w,
        }
    }
    Ok(Histogram {
        spec: spec.clone(),
        axis: Axis::Turnout,
        edges: binning.edges(),
        weights,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{PrecinctRecord, RegionInfo, Registry};

    fn station(id: &str, reg: u64, cast: u64, ur: u64) -> PrecinctRecord {
        PrecinctRecord {
            station_id: id.into(),
            region_id: "r".into(),
            registered: reg,
            ballots_cast: cast,
            valid_ballots: cast,
            votes: vec![ur, cast - ur],
        }
    }

    fn dataset(records: Vec<PrecinctRecord>) -> Dataset {
        let regions: Registry = [("r".to_string(), RegionInfo::ordinary("r"))].into();
        Dataset::new(records, regions, vec!["UR".into(), "KPRF".into()]).unwrap()
    }

    fn nonzero(h: &Histogram) -> Vec<(f64, f64, f64)> {
        h.bins().filter(|b| b.2 != 0.0).collect()
    }

    #[test]
    fn fraction_recovery() {
        assert_eq!(exact_fraction(0.005), Some(Q::new(1, 200)));
        assert_eq!(exact_fraction(0.0005), Some(Q::new(1, 2000)));
        assert_eq!(exact_fraction(0.65), Some(Q::new(13, 20)));
        assert_eq!(exact_fraction(2.0 / 3.0), Some(Q::new(2, 3)));
        assert_eq!(exact_fraction(-0.25), Some(Q::new(-1, 4)));
        assert_eq!(exact_fraction(std::f64::consts::PI), None);
    }

    #[test]
    fn left_aligned_layout() {
        let b = Binning::new(0.05, Alignment::LeftEdgesAtZero).unwrap();
        assert_eq!(b.len(), 20);
        let b = Binning::new(0.03, Alignment::LeftEdgesAtZero).unwrap();
        assert_eq!(b.len(), 34);
        assert_eq!(b.hi(33), Q::from_integer(1));
        assert!(!b.is_full(33));
        assert!(matches!(Binning::new(1.0, Alignment::LeftEdgesAtZero), Err(HistogramError::TooFewBins(_))));
        assert!(Binning::new(0.0, Alignment::LeftEdgesAtZero).is_err());
    }

    #[test]
    fn centered_layout() {
        let b = Binning::new(0.005, Alignment::CenteredOn(0.65)).unwrap();
        assert_eq!(b.len(), 201);
        assert_eq!(b.lo(1), Q::new(1, 400));
        assert!(!b.is_full(0) && !b.is_full(200));
        let k = b.center_index(Q::new(13, 20)).unwrap();
        assert_eq!((b.lo(k), b.hi(k)), (Q::new(1295, 2000), Q::new(1305, 2000)));
        assert_eq!(b.center_index(Q::new(651, 1000)), None);
        assert_eq!(b.center_index(Q::from_integer(0)), None);
    }

    #[test]
    fn edge_values_go_right_and_one_is_closed() {
        let b = Binning::new(0.05, Alignment::LeftEdgesAtZero).unwrap();
        assert_eq!(b.index_of(1, 20), 1);
        assert_eq!(b.index_of(1, 1), 19);
        assert_eq!(b.index_of(0, 7), 0);
        assert_eq!(b.index_of(999_999, 1_000_000), 19);
    }

    #[test]
    fn single_share_placement() {
        let h = station_voting_histogram(&dataset(vec![station("a", 400, 200, 100)]), "UR", &HistogramSpec::new(0.005))
            .unwrap();
        assert_eq!(nonzero(&h), [(0.5, 0.505, 1.0)]);
    }

    #[test]
    fn toy_shares() {
        let ds = dataset(vec![
            station("a", 200, 100, 20),
            station("b", 200, 100, 21),
            station("c", 200, 100, 70),
        ]);
        let h = station_voting_histogram(&ds, "UR", &HistogramSpec::new(0.05)).unwrap();
        assert_eq!(h.weights.len(), h.edges.len() - 1);
        assert_eq!(nonzero(&h), [(0.2, 0.25, 2.0), (0.7, 0.75, 1.0)]);
    }

    #[test]
    fn station_totals_agree_across_parties() {
        let ds = dataset(vec![
            station("a", 200, 100, 20),
            station("b", 300, 150, 90),
            station("c", 100, 80, 79),
            station("d", 50, 40, 0),
        ]);
        for party in ["UR", "KPRF"] {
            assert_eq!(
                station_voting_histogram(&ds, party, &HistogramSpec::new(0.005)).unwrap().total_weight(),
                4.0
            );
        }
    }

    #[test]
    fn weight_modes() {
        let ds = dataset(vec![station("a", 200, 100, 20), station("b", 300, 150, 90)]);
        let el = station_voting_histogram(&ds, "UR", &HistogramSpec::new(0.1).weighted(WeightMode::Electors))
            .unwrap();
        assert_eq!(el.total_weight(), 500.0);
        let pv = station_voting_histogram(&ds, "UR", &HistogramSpec::new(0.1).weighted(WeightMode::PartyVotes))
            .unwrap();
        assert_eq!(pv.total_weight(), 110.0);
        assert_eq!(
            station_voting_histogram(&ds, "LDPR", &HistogramSpec::new(0.1)),
            Err(HistogramError::UnknownParty("LDPR".into()))
        );
    }

    #[test]
    fn turnout_boundaries() {
        let full = turnout_histogram(&dataset(vec![station("a", 100, 100, 1)]), &HistogramSpec::new(0.05))
            .unwrap();
        assert_eq!(nonzero(&full), [(0.95, 1.0, 1.0)]);
        let zero = turnout_histogram(&dataset(vec![station("a", 100, 0, 0)]), &HistogramSpec::new(0.05))
            .unwrap();
        assert_eq!(nonzero(&zero), [(0.0, 0.05, 1.0)]);
        let toy = turnout_histogram(
            &dataset(vec![
                station("a", 100, 50, 1),
                station("b", 100, 52, 1),
                station("c", 100, 99, 1),
            ]),
            &HistogramSpec::new(0.05),
        )
        .unwrap();
        assert_eq!(nonzero(&toy), [(0.5, 0.55, 2.0), (0.95, 1.0, 1.0)]);
        assert!(turnout_histogram(&dataset(vec![]), &HistogramSpec::new(0.05).weighted(WeightMode::PartyVotes))
            .is_err());
    }

    #[test]
    fn exclusions_account_for_every_record() {
        let ds = dataset(vec![
            station("small", 10, 5, 2),
            station("empty", 100, 0, 0),
            station("ok", 200, 100, 50),
            PrecinctRecord {
                votes: vec![90, 20],
                ..station("bad", 100, 100, 50)
            },
        ]);
        let spec = HistogramSpec::new(0.1).min_size(50).weighted(WeightMode::Electors);
        let h = station_voting_histogram(&ds, "UR", &spec).unwrap();
        assert_eq!(h.excluded.validation_flagged.stations, 1);
        assert_eq!(h.excluded.below_min_size.stations, 1);
        assert_eq!(h.excluded.zero_denominator.stations, 1);
        assert_eq!(h.total_weight() + h.excluded.weight(), 410.0);
    }

    #[test]
    fn coarsening_matches_direct_binning() {
        let ds = dataset(vec![
            station("a", 200, 100, 20),
            station("b", 300, 150, 90),
            station("c", 100, 80, 79),
            station("d", 50, 40, 0),
        ]);
        let fine = station_voting_histogram(&ds, "UR", &HistogramSpec::new(0.01)).unwrap();
        let direct = station_voting_histogram(&ds, "UR", &HistogramSpec::new(0.05)).unwrap();
        let merged = fine.coarsen(5).unwrap();
        assert_eq!(merged.edges, direct.edges);
        assert_eq!(merged.weights, direct.weights);
    }

    #[test]
    fn json_shape() {
        let h = station_voting_histogram(&dataset(vec![station("a", 400, 200, 100)]), "UR", &HistogramSpec::new(0.5))
            .unwrap();
        let v = serde_json::to_value(&h).unwrap();
        assert_eq!(v["bins"][1]["lo"], 0.5);
        assert_eq!(v["bins"][1]["weight"], 1.0);
        assert_eq!(v["spec"]["weight_mode"], "stations");
        assert_eq!(v["excluded"]["zero_denominator"]["stations"], 0);
        assert_eq!(h.to_csv(), "lo,hi,weight\n0,0.5,0\n0.5,1,1\n");
    }
}
