//! Rational-fraction artifacts and dents.
//!
//! A station with `l` ballots can only report shares `k/l`. Small stations
//! therefore pile mass onto fractions with small denominators, which is
//! visible as sharp teeth in fine histograms ([`coinflip_histogram`]). Genuine
//! dents are excesses at round fractions that survive once those artifacts
//! are controlled ([`detect_dents`]); their total excess in a vote-weighted
//! histogram bounds the manipulated vote mass from below
//! ([`falsification_lower_bound`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Bound, RangeBounds};

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::histogram::{
    exact_fraction, to_f64, Axis, Histogram, HistogramError, HistogramSpec, WeightMode, Q,
};
use crate::ingest::{Dataset, Excluded, Exclusion, Selector};
use crate::mixture::SizeMeasure;
use crate::rng::{keyed_rng, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum RationalError {
    #[error("max_denominator must be at least 1")]
    ZeroDenominator,
    #[error("interval is empty or outside [0, 1]")]
    EmptyInterval,
    #[error("{0} is not a fraction with denominator at most 1000000")]
    NotAFraction(f64),
    #[error("station size must be at least 1")]
    ZeroSize,
    #[error("p = {0} is outside [0, 1]")]
    BadP(f64),
    #[error("invalid p model: {0}")]
    BadModel(String),
    #[error("size measure is empty")]
    EmptySizes,
    #[error("a sampled p model needs at least one trial")]
    NoTrials,
    #[error("candidate {0} is not the centre of a full bin; use centred alignment")]
    NotACenter(f64),
    #[error("candidates {0} and {1} fall in the same or adjacent bins")]
    Adjacent(f64, f64),
    #[error("no candidates")]
    NoCandidates,
    #[error("report is for {found}, expected {expected}")]
    Mismatch { expected: String, found: String },
    #[error(transparent)]
    Histogram(#[from] HistogramError),
}

/// A fraction serialised as `{"f": "k/l", "value": k/l as decimal}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(pub Q);

impl Fraction {
    pub fn value(self) -> f64 {
        to_f64(self.0)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_fraction(&s).map_err(serde::de::Error::custom)
    }
}

/// Parse `k/l` or a decimal into an exact fraction.
pub fn parse_fraction(s: &str) -> Result<Fraction, String> {
    let s = s.trim();
    if let Some((k, l)) = s.split_once('/') {
        let k: i128 = k.trim().parse().map_err(|_| format!("bad numerator in `{s}`"))?;
        let l: i128 = l.trim().parse().map_err(|_| format!("bad denominator in `{s}`"))?;
        if l <= 0 {
            return Err(format!("denominator must be positive in `{s}`"));
        }
        return Ok(Fraction(Q::new(k, l)));
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a fraction"))?;
    exact_fraction(x)
        .map(Fraction)
        .ok_or_else(|| format!("`{s}` is not a fraction with a small denominator"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionEntry {
    pub f: Fraction,
    pub value: f64,
    pub multiplicity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionCatalog {
    pub max_denominator: u64,
    pub lo: f64,
    pub hi: f64,
    pub entries: Vec<FractionEntry>,
}

impl FractionCatalog {
    pub fn multiplicity(&self, f: Q) -> u64 {
        self.entries
            .binary_search_by(|e| e.f.0.cmp(&f))
            .map_or(0, |i| self.entries[i].multiplicity)
    }
}

fn bound_q(b: Bound<&f64>) -> Result<Bound<Q>, RationalError> {
    let conv = |x: f64| exact_fraction(x).ok_or(RationalError::NotAFraction(x));
    Ok(match b {
        Bound::Included(&x) => Bound::Included(conv(x)?),
        Bound::Excluded(&x) => Bound::Excluded(conv(x)?),
        Bound::Unbounded => Bound::Unbounded,
    })
}

/// Every distinct value `k/l` with `1 <= l <= max_denominator` inside
/// `interval`, with the number of pairs `(k, l)` that produce it.
///
/// Unbounded ends default to 0 and 1.
pub fn enumerate_fractions(
    max_denominator: u64,
    interval: impl RangeBounds<f64>,
) -> Result<FractionCatalog, RationalError> {
    if max_denominator == 0 {
        return Err(RationalError::ZeroDenominator);
    }
    let zero = Q::from_integer(0);
    let one = Q::from_integer(1);
    let lo = match bound_q(interval.start_bound())? {
        Bound::Unbounded => Bound::Included(zero),
        b => b,
    };
    let hi = match bound_q(interval.end_bound())? {
        Bound::Unbounded => Bound::Included(one),
        b => b,
    };
    let (lo_v, hi_v) = match (lo, hi) {
        (Bound::Included(a) | Bound::Excluded(a), Bound::Included(b) | Bound::Excluded(b)) => (a, b),
        _ => unreachable!(),
    };
    let empty = lo_v > hi_v
        || (lo_v == hi_v && !matches!((lo, hi), (Bound::Included(_), Bound::Included(_))))
        || lo_v > one
        || hi_v < zero;
    if empty {
        return Err(RationalError::EmptyInterval);
    }
    let contains = |q: Q| (lo, hi).contains(&q) && q >= zero && q <= one;

    let mut counts: BTreeMap<Q, u64> = BTreeMap::new();
    for l in 1..=max_denominator as i128 {
        let k_lo = (lo_v.max(zero) * l).floor().to_integer();
        let k_hi = (hi_v.min(one) * l).ceil().to_integer();
        for k in k_lo..=k_hi {
            let q = Q::new(k, l);
            if contains(q) {
                *counts.entry(q).or_insert(0) += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(RationalError::EmptyInterval);
    }
    Ok(FractionCatalog {
        max_denominator,
        lo: to_f64(lo_v),
        hi: to_f64(hi_v),
        entries: counts
            .into_iter()
            .map(|(q, m)| FractionEntry {
                f: Fraction(q),
                value: to_f64(q),
                multiplicity: m,
            })
            .collect(),
    })
}

/// Law of the share `k/n` for `k ~ Binomial(n, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoinflipLaw {
    pub n: u64,
    /// `probs[k] = P(K = k)`.
    pub probs: Vec<f64>,
}

impl CoinflipLaw {
    /// `(share, probability)` for every share with nonzero probability.
    pub fn support(&self) -> Vec<(Q, f64)> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &pr)| pr > 0.0)
            .map(|(k, &pr)| (Q::new(k as i128, self.n as i128), pr))
            .collect()
    }
}

/// Exact binomial probabilities, computed by the ratio recurrence outward
/// from the mode and normalised.
pub fn coinflip_distribution(n: u64, p: f64) -> Result<CoinflipLaw, RationalError> {
    if n == 0 {
        return Err(RationalError::ZeroSize);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(RationalError::BadP(p));
    }
    let len = n as usize + 1;
    let mut probs = vec![0.0; len];
    if p == 0.0 || p == 1.0 {
        probs[if p == 0.0 { 0 } else { n as usize }] = 1.0;
        return Ok(CoinflipLaw { n, probs });
    }
    let mode = (((n + 1) as f64 * p).floor() as usize).min(n as usize);
    let odds = p / (1.0 - p);
    let nf = n as f64;
    probs[mode] = 1.0;
    for k in mode + 1..len {
        probs[k] = probs[k - 1] * (nf - k as f64 + 1.0) / k as f64 * odds;
    }
    for k in (0..mode).rev() {
        probs[k] = probs[k + 1] * (k as f64 + 1.0) / (nf - k as f64) / odds;
    }
    let total: f64 = probs.iter().sum();
    for pr in &mut probs {
        *pr /= total;
    }
    Ok(CoinflipLaw { n, probs })
}

/// How each station's voting probability is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PModel {
    Constant { p: f64 },
    Beta { mean: f64, concentration: f64 },
    Uniform { lo: f64, hi: f64 },
}

enum PSampler {
    Beta(Beta<f64>),
    Uniform(f64, f64),
}

impl PModel {
    fn sampler(&self) -> Result<Option<PSampler>, RationalError> {
        match *self {
            PModel::Constant { p } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(None)
                } else {
                    Err(RationalError::BadP(p))
                }
            }
            PModel::Beta {
                mean,
                concentration,
            } => {
                if !(mean > 0.0 && mean < 1.0 && concentration > 0.0 && concentration.is_finite()) {
                    return Err(RationalError::BadModel(format!(
                        "beta needs mean in (0, 1) and positive concentration, got {mean}, {concentration}"
                    )));
                }
                Beta::new(mean * concentration, (1.0 - mean) * concentration)
                    .map(|b| Some(PSampler::Beta(b)))
                    .map_err(|e| RationalError::BadModel(e.to_string()))
            }
            PModel::Uniform { lo, hi } => {
                if 0.0 <= lo && lo <= hi && hi <= 1.0 {
                    Ok(Some(PSampler::Uniform(lo, hi)))
                } else {
                    Err(RationalError::BadModel(format!(
                        "uniform needs 0 <= lo <= hi <= 1, got {lo}, {hi}"
                    )))
                }
            }
        }
    }
}

/// Histogram of shares produced by coin-flip voting at stations whose sizes
/// follow `sizes`; the total weight equals the mass of the admitted sizes.
///
/// A constant `p` is mixed exactly. Other models are sampled: in each trial
/// every size atom, taken in ascending order, draws its own `p` and a
/// binomial count from a stream keyed by `(seed, trial, atom index)`, and
/// contributes `weight / trials`. Sizes below `spec.min_station_size` are
/// excluded; `spec.weight_mode` is ignored.
pub fn coinflip_histogram(
    sizes: &SizeMeasure,
    p_model: &PModel,
    spec: &HistogramSpec,
    trials: u32,
    seed: u64,
) -> Result<Histogram, RationalError> {
    if sizes.is_empty() {
        return Err(RationalError::EmptySizes);
    }
    let sampler = p_model.sampler()?;
    if sampler.is_some() && trials == 0 {
        return Err(RationalError::NoTrials);
    }
    let binning = spec.binning()?;
    let mut weights = vec![0.0; binning.len()];
    let mut excluded = Excluded::default();
    let mut admitted = Vec::new();
    for (&n, &w) in sizes.atoms() {
        if n < spec.min_station_size {
            excluded.record(Exclusion::BelowMinSize, w);
        } else if n == 0 {
            excluded.record(Exclusion::ZeroDenominator, w);
        } else {
            admitted.push((n, w));
        }
    }
    match (sampler, p_model) {
        (None, PModel::Constant { p }) => {
            for &(n, w) in &admitted {
                let law = coinflip_distribution(n, *p)?;
                for (k, pr) in law.probs.iter().enumerate() {
                    if *pr > 0.0 {
                        weights[binning.index_of(k as u64, n)] += w * pr;
                    }
                }
            }
        }
        (Some(sampler), _) => {
            for t in 0..trials {
                for (i, &(n, w)) in admitted.iter().enumerate() {
                    let mut rng = keyed_rng(seed, Stream::Coinflip, t as u64, i as u64);
                    let p = match &sampler {
                        PSampler::Beta(b) => b.sample(&mut rng),
                        PSampler::Uniform(lo, hi) => lo + (hi - lo) * rng.random::<f64>(),
                    };
                    let k = Binomial::new(n, p.clamp(0.0, 1.0))
                        .expect("p is clamped into [0, 1]")
                        .sample(&mut rng);
                    weights[binning.index_of(k, n)] += w / trials as f64;
                }
            }
        }
        (None, _) => unreachable!("only a constant model has no sampler"),
    }
    Ok(Histogram {
        spec: spec.clone(),
        axis: Axis::Coinflip,
        edges: binning.edges(),
        weights,
        excluded,
    })
}

/// Multiples of 1/20 from 1/2 to 19/20.
pub fn default_candidates() -> Vec<f64> {
    (10..20).map(|k| k as f64 / 20.0).collect()
}

pub const DEFAULT_Z_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DentCandidate {
    pub f: Fraction,
    pub value: f64,
    pub observed: f64,
    pub baseline: f64,
    pub excess: f64,
    pub z: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DentReport {
    pub party: Option<String>,
    pub histogram_spec: HistogramSpec,
    pub z_threshold: f64,
    /// Variance inflation of bin counts relative to Poisson; 1 for station
    /// weighting.
    pub threshold_scale: f64,
    /// Effective threshold `z_threshold * sqrt(threshold_scale)`.
    pub threshold: f64,
    pub candidates: Vec<DentCandidate>,
    pub notes: Vec<String>,
}

impl DentReport {
    pub fn flagged(&self) -> Vec<Fraction> {
        self.candidates.iter().filter(|c| c.flagged).map(|c| c.f).collect()
    }
}

/// Compare each candidate bin with the linear interpolation between the
/// nearest non-candidate bins on either side.
pub fn detect_dents(
    h: &Histogram,
    candidates: &[f64],
    z_threshold: f64,
) -> Result<DentReport, RationalError> {
    detect_dents_scaled(h, candidates, z_threshold, 1.0)
}

/// [`detect_dents`] with the threshold multiplied by `sqrt(scale)`, for bin
/// counts that are sums of unequal station weights (see
/// [`significance_scale`]).
pub fn detect_dents_scaled(
    h: &Histogram,
    candidates: &[f64],
    z_threshold: f64,
    scale: f64,
) -> Result<DentReport, RationalError> {
    if candidates.is_empty() {
        return Err(RationalError::NoCandidates);
    }
    let binning = h.spec.binning()?;
    let mut located: Vec<(usize, Q, f64)> = Vec::with_capacity(candidates.len());
    for &f in candidates {
        let q = exact_fraction(f).ok_or(RationalError::NotAFraction(f))?;
        let k = binning.center_index(q).ok_or(RationalError::NotACenter(f))?;
        located.push((k, q, f));
    }
    let mut by_bin = located.clone();
    by_bin.sort_by_key(|c| c.0);
    for pair in by_bin.windows(2) {
        if pair[1].0 - pair[0].0 < 2 {
            return Err(RationalError::Adjacent(pair[0].2, pair[1].2));
        }
    }
    let taken: BTreeSet<usize> = located.iter().map(|c| c.0).collect();
    let threshold = z_threshold * scale.sqrt();
    let w = &h.weights;

    let mut out = Vec::with_capacity(located.len());
    for &(k, q, _) in &located {
        let left = (0..k).rev().find(|j| !taken.contains(j));
        let right = (k + 1..w.len()).find(|j| !taken.contains(j));
        let baseline = match (left, right) {
            (Some(a), Some(b)) => w[a] + (w[b] - w[a]) * (k - a) as f64 / (b - a) as f64,
            (Some(a), None) => w[a],
            (None, Some(b)) => w[b],
            (None, None) => 0.0,
        };
        let observed = w[k];
        let excess = observed - baseline;
        let z = excess / baseline.max(1.0).sqrt();
        out.push(DentCandidate {
            f: Fraction(q),
            value: to_f64(q),
            observed,
            baseline,
            excess,
            z,
            flagged: z >= threshold && excess > 0.0,
        });
    }

    let mut notes = Vec::new();
    for (q, name) in [(Q::new(1, 2), "1/2"), (Q::new(3, 5), "3/5")] {
        if located.iter().any(|c| c.1 == q) {
            notes.push(format!(
                "{name} has many small-denominator representations; its dent is expected to \
                 fade with min_station_size > 0 and party_votes weighting"
            ));
        }
    }
    Ok(DentReport {
        party: match &h.axis {
            Axis::Share { party } => Some(party.clone()),
            _ => None,
        },
        histogram_spec: h.spec.clone(),
        z_threshold,
        threshold_scale: scale,
        threshold,
        candidates: out,
        notes,
    })
}

fn station_weight(mode: WeightMode, registered: u64, votes: u64) -> f64 {
    match mode {
        WeightMode::Stations => 1.0,
        WeightMode::Electors => registered as f64,
        WeightMode::PartyVotes => votes as f64,
    }
}

/// `sum w^2 / sum w` over the stations a share histogram would include.
///
/// A bin count that sums independent station weights has variance close to
/// this factor times its mean, so it rescales the Poisson threshold. It is
/// exactly 1 for station weighting.
pub fn significance_scale(
    ds: &Dataset,
    party: &str,
    spec: &HistogramSpec,
) -> Result<f64, RationalError> {
    let pi = ds
        .party_index(party)
        .ok_or_else(|| HistogramError::UnknownParty(party.to_string()))?;
    let sel = Selector::new(ds, spec.flagged_policy, &spec.region_filter, spec.min_station_size);
    let (mut s1, mut s2) = (0.0, 0.0);
    for r in ds.records() {
        if sel.classify(r, r.denominator(spec.share_denominator)).is_none() {
            let w = station_weight(spec.weight_mode, r.registered, r.votes[pi]);
            s1 += w;
            s2 += w * w;
        }
    }
    Ok(if s1 > 0.0 { s2 / s1 } else { 1.0 })
}

/// Share of the party's votes (over the report's included stations) that
/// sits in flagged dents above their baselines.
pub fn falsification_lower_bound(
    ds: &Dataset,
    party: &str,
    report: &DentReport,
) -> Result<f64, RationalError> {
    if report.party.as_deref() != Some(party) {
        return Err(RationalError::Mismatch {
            expected: format!("party {party}"),
            found: format!("party {}", report.party.as_deref().unwrap_or("<none>")),
        });
    }
    let spec = &report.histogram_spec;
    if spec.weight_mode != WeightMode::PartyVotes {
        return Err(RationalError::Mismatch {
            expected: "party_votes weighting".into(),
            found: format!("{:?} weighting", spec.weight_mode),
        });
    }
    let pi = ds
        .party_index(party)
        .ok_or_else(|| HistogramError::UnknownParty(party.to_string()))?;
    let sel = Selector::new(ds, spec.flagged_policy, &spec.region_filter, spec.min_station_size);
    let total: u64 = ds
        .records()
        .iter()
        .filter(|r| sel.classify(r, r.denominator(spec.share_denominator)).is_none())
        .map(|r| r.votes[pi])
        .sum();
    let excess: f64 = report
        .candidates
        .iter()
        .filter(|c| c.flagged)
        .map(|c| c.excess)
        .sum();
    if total == 0 {
        return Ok(0.0);
    }
    Ok((excess / total as f64).max(0.0))
}
