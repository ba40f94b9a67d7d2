//! Synthetic elections with known ground truth.
//!
//! [`generate`] draws honest precinct data from a [`HonestModel`];
//! [`inject`] applies a [`FraudInjector`] and reports exactly which stations
//! it changed. All randomness is keyed by `(seed, region, station)`, so the
//! output does not depend on generation order.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::histogram::{exact_fraction, Q};
use crate::ingest::{Dataset, IngestError, PrecinctRecord, RegionInfo, RegionStatus, Registry};
use crate::rng::{key, keyed_rng, Stream};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid model: {0}")]
    Model(String),
    #[error("invalid injector: {0}")]
    Injector(String),
    #[error("unknown party `{0}`")]
    UnknownParty(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Distribution of registered electors per station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeDist {
    Constant { n: u64 },
    /// `exp(U(ln lo, ln hi))`, rounded.
    LogUniform { lo: u64, hi: u64 },
    UniformInt { lo: u64, hi: u64 },
}

/// Distribution over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnitDist {
    Constant { value: f64 },
    Beta { mean: f64, concentration: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl UnitDist {
    fn check(&self, what: &str) -> Result<(), SynthError> {
        let ok = match *self {
            UnitDist::Constant { value } => (0.0..=1.0).contains(&value),
            UnitDist::Beta {
                mean,
                concentration,
            } => mean > 0.0 && mean < 1.0 && concentration > 0.0 && concentration.is_finite(),
            UnitDist::Uniform { lo, hi } => 0.0 <= lo && lo <= hi && hi <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SynthError::Model(format!("{what}: {self:?} is out of range")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            UnitDist::Constant { value } => value,
            UnitDist::Beta { mean, .. } => mean,
            UnitDist::Uniform { lo, hi } => (lo + hi) / 2.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            UnitDist::Constant { value } => value,
            UnitDist::Beta {
                mean,
                concentration,
            } => Beta::new(mean * concentration, (1.0 - mean) * concentration)
                .expect("checked parameters")
                .sample(rng),
            UnitDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

/// Support for one party in one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartySupport {
    pub share: UnitDist,
    /// Correlated-honest link: the sampled share is shifted by
    /// `turnout_slope * (turnout - mean turnout)` and clamped to `[0, 1]`.
    #[serde(default)]
    pub turnout_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionModel {
    pub region_id: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub status: Option<RegionStatus>,
    #[serde(default)]
    pub exceptional: bool,
    pub station_count: u64,
    pub size: SizeDist,
    pub turnout: UnitDist,
    /// One entry per model party, in order.
    pub support: Vec<PartySupport>,
}

impl RegionModel {
    /// Log-uniform sizes on `[10, 3000]`, turnout `Beta(0.6, 20)` and party
    /// shares `Beta(mean, 20)`.
    pub fn heterogeneous(region_id: &str, station_count: u64, party_means: &[f64]) -> Self {
        RegionModel {
            region_id: region_id.to_string(),
            name: None,
            status: None,
            exceptional: false,
            station_count,
            size: SizeDist::LogUniform { lo: 10, hi: 3000 },
            turnout: UnitDist::Beta {
                mean: 0.6,
                concentration: 20.0,
            },
            support: party_means
                .iter()
                .map(|&mean| PartySupport {
                    share: UnitDist::Beta {
                        mean,
                        concentration: 20.0,
                    },
                    turnout_slope: 0.0,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonestModel {
    pub parties: Vec<String>,
    pub regions: Vec<RegionModel>,
}

impl HonestModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Model(m));
        if self.parties.is_empty() {
            return bad("at least one party is required".into());
        }
        if self.parties.iter().collect::<BTreeSet<_>>().len() != self.parties.len() {
            return bad("party names must be unique".into());
        }
        let mut ids = BTreeSet::new();
        for r in &self.regions {
            if r.region_id.is_empty() || !ids.insert(r.region_id.as_str()) {
                return bad(format!("region id `{}` is empty or repeated", r.region_id));
            }
            match r.size {
                SizeDist::Constant { .. } => {}
                SizeDist::LogUniform { lo, hi } | SizeDist::UniformInt { lo, hi } => {
                    if lo == 0 || lo > hi {
                        return bad(format!("region {}: size bounds need 1 <= lo <= hi", r.region_id));
                    }
                }
            }
            r.turnout.check(&format!("region {} turnout", r.region_id))?;
            if r.support.len() != self.parties.len() {
                return bad(format!(
                    "region {} has {} support entries for {} parties",
                    r.region_id,
                    r.support.len(),
                    self.parties.len()
                ));
            }
            for (s, p) in r.support.iter().zip(&self.parties) {
                s.share.check(&format!("region {} party {p}", r.region_id))?;
                if !s.turnout_slope.is_finite() {
                    return bad(format!("region {} party {p}: slope is not finite", r.region_id));
                }
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> Registry {
        self.regions
            .iter()
            .map(|r| {
                let info = RegionInfo {
                    region_id: r.region_id.clone(),
                    name: r.name.clone().unwrap_or_else(|| r.region_id.clone()),
                    status: r.status.unwrap_or(RegionStatus::Ordinary),
                    exceptional: r.exceptional,
                    geo_tags: Vec::new(),
                };
                (r.region_id.clone(), info)
            })
            .collect()
    }
}

fn sample_size(dist: SizeDist, rng: &mut ChaCha8Rng) -> u64 {
    match dist {
        SizeDist::Constant { n } => n,
        SizeDist::LogUniform { lo, hi } => {
            let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
            let x = (a + (b - a) * rng.random::<f64>()).exp().round() as u64;
            x.clamp(lo, hi)
        }
        SizeDist::UniformInt { lo, hi } => rng.random_range(lo..=hi),
    }
}

/// Split `total` in proportion to `weights` by largest remainder. Ties in
/// the fractional parts go to the lower index.
pub fn largest_remainder(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
        out[i] += 1;
    }
    out
}

/// Exact integer version of [`largest_remainder`].
fn largest_remainder_exact(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let q: Vec<u128> = weights.iter().map(|&w| w as u128 * total as u128).collect();
    let mut out: Vec<u64> = q.iter().map(|x| (x / sum) as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (q[b] % sum).cmp(&(q[a] % sum)).then(a.cmp(&b)));
    for &i in order.iter().take((total - assigned) as usize) {
        out[i] += 1;
    }
    out
}

/// Draw an honest dataset. Ballots cast are `round(turnout * registered)`,
/// all of them valid; party votes split the ballots by largest remainder
/// with the unsupported share as an extra bucket. Sampled shares summing to
/// more than 1 are rescaled to sum to 1.
pub fn generate(model: &HonestModel, seed: u64) -> Result<Dataset, SynthError> {
    model.validate()?;
    let mut records = Vec::new();
    for (ri, region) in model.regions.iter().enumerate() {
        let mean_turnout = region.turnout.mean();
        for si in 0..region.station_count {
            let mut rng = keyed_rng(seed, Stream::Generate, ri as u64, si);
            let registered = sample_size(region.size, &mut rng);
            let turnout = region.turnout.sample(&mut rng);
            let cast = (turnout * registered as f64).round() as u64;
            let mut shares: Vec<f64> = region
                .support
                .iter()
                .map(|s| {
                    let base = s.share.sample(&mut rng);
                    (base + s.turnout_slope * (turnout - mean_turnout)).clamp(0.0, 1.0)
                })
                .collect();
            let sum: f64 = shares.iter().sum();
            if sum > 1.0 {
                shares.iter_mut().for_each(|s| *s /= sum);
            }
            shares.push((1.0 - shares.iter().sum::<f64>()).max(0.0));
            let mut votes = largest_remainder(cast, &shares);
            votes.pop();
            records.push(PrecinctRecord {
                station_id: format!("{}-{si:06}", region.region_id),
                region_id: region.region_id.clone(),
                registered,
                ballots_cast: cast,
                valid_ballots: cast,
                votes,
            });
        }
    }
    Ok(Dataset::new(records, model.registry(), model.parties.clone())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FraudInjector {
    /// Add `floor(rate * registered)` ballots for `party`, capped at the
    /// number of electors who did not vote.
    BallotStuffing {
        rate: f64,
        affected: f64,
        party: String,
    },
    /// Raise the party's share to the nearest target at or above it.
    ResultDrawing {
        targets: Vec<f64>,
        affected: f64,
        party: String,
    },
}

impl FraudInjector {
    pub fn party(&self) -> &str {
        match self {
            FraudInjector::BallotStuffing { party, .. } | FraudInjector::ResultDrawing { party, .. } => {
                party
            }
        }
    }

    pub fn affected(&self) -> f64 {
        match self {
            FraudInjector::BallotStuffing { affected, .. }
            | FraudInjector::ResultDrawing { affected, .. } => *affected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedStation {
    pub station_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub modified: Vec<String>,
    pub injector: FraudInjector,
    pub skipped: Vec<SkippedStation>,
}

/// Indices of the `round(affected * n)` stations chosen by a seeded
/// shuffle, in dataset order.
pub fn affected_stations(n: usize, affected: f64, seed: u64) -> Vec<usize> {
    let m = ((affected * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (key(seed, Stream::InjectSelect, i as u64, 0), i));
    let mut chosen = order[..m].to_vec();
    chosen.sort_unstable();
    chosen
}

enum Outcome {
    Changed(PrecinctRecord),
    Unchanged,
    Skipped(&'static str),
}

fn stuff(r: &PrecinctRecord, pi: usize, rate: f64) -> Outcome {
    let wanted = (rate * r.registered as f64).floor() as u64;
    if wanted == 0 {
        return Outcome::Unchanged;
    }
    let add = wanted.min(r.registered.saturating_sub(r.ballots_cast));
    if add == 0 {
        return Outcome::Skipped("no electors left to stuff");
    }
    let mut out = r.clone();
    out.ballots_cast += add;
    out.valid_ballots += add;
    out.votes[pi] += add;
    Outcome::Changed(out)
}

fn draw(r: &PrecinctRecord, pi: usize, targets: &[Q]) -> Outcome {
    let cast = r.ballots_cast as i128;
    if cast == 0 {
        return Outcome::Skipped("no ballots cast");
    }
    let share = Q::new(r.votes[pi] as i128, cast);
    let Some(&t) = targets.iter().find(|&&t| t >= share) else {
        return Outcome::Skipped("share above every target");
    };
    let (num, den) = (*t.numer(), *t.denom());
    let new_votes = ((2 * num * cast + den) / (2 * den)) as u64;
    let add = new_votes - r.votes[pi];
    if add == 0 {
        return Outcome::Unchanged;
    }
    if new_votes > r.valid_ballots {
        return Outcome::Skipped("target exceeds valid ballots");
    }
    let others: Vec<u64> = r
        .votes
        .iter()
        .enumerate()
        .map(|(i, &v)| if i == pi { 0 } else { v })
        .collect();
    let other_total: u64 = others.iter().sum();
    let cut = add.min(other_total);
    let scaled = largest_remainder_exact(other_total - cut, &others);
    let mut out = r.clone();
    for (i, v) in out.votes.iter_mut().enumerate() {
        *v = if i == pi { new_votes } else { scaled[i] };
    }
    Outcome::Changed(out)
}

/// Apply `injector` to a seeded selection of stations.
///
/// Drawing rounds the party's votes half up to `target * ballots_cast` and
/// removes the added votes from the other parties proportionally; when
/// they hold too few, the rest comes out of the ballots not assigned to any
/// listed party. Stations already on a target are left alone.
pub fn inject(
    ds: &Dataset,
    injector: &FraudInjector,
    seed: u64,
) -> Result<(Dataset, Manifest), SynthError> {
    let pi = ds
        .party_index(injector.party())
        .ok_or_else(|| SynthError::UnknownParty(injector.party().to_string()))?;
    let affected = injector.affected();
    if !(0.0..=1.0).contains(&affected) {
        return Err(SynthError::Injector(format!("affected {affected} is outside [0, 1]")));
    }
    let targets: Vec<Q> = match injector {
        FraudInjector::BallotStuffing { rate, .. } => {
            if !(0.0..=1.0).contains(rate) {
                return Err(SynthError::Injector(format!("rate {rate} is outside [0, 1]")));
            }
            Vec::new()
        }
        FraudInjector::ResultDrawing { targets, .. } => {
            let mut qs = Vec::with_capacity(targets.len());
            for &t in targets {
                let q = exact_fraction(t)
                    .filter(|q| *q > Q::from_integer(0) && *q <= Q::from_integer(1))
                    .ok_or_else(|| SynthError::Injector(format!("target {t} is not a fraction in (0, 1]")))?;
                qs.push(q);
            }
            if qs.is_empty() {
                return Err(SynthError::Injector("no drawing targets".into()));
            }
            qs.sort();
            qs.dedup();
            qs
        }
    };

    let mut records = ds.records().to_vec();
    let mut manifest = Manifest {
        modified: Vec::new(),
        injector: injector.clone(),
        skipped: Vec::new(),
    };
    for i in affected_stations(records.len(), affected, seed) {
        let outcome = match injector {
            FraudInjector::BallotStuffing { rate, .. } => stuff(&records[i], pi, *rate),
            FraudInjector::ResultDrawing { .. } => draw(&records[i], pi, &targets),
        };
        match outcome {
            Outcome::Changed(r) => {
                manifest.modified.push(r.station_id.clone());
                records[i] = r;
            }
            Outcome::Unchanged => {}
            Outcome::Skipped(reason) => manifest.skipped.push(SkippedStation {
                station_id: records[i].station_id.clone(),
                reason: reason.to_string(),
            }),
        }
    }
    Ok((ds.with_records(records)?, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::validate;

    fn one_station_model(size: u64, turnout: f64, share: f64) -> HonestModel {
        HonestModel {
            parties: vec!["UR".into()],
            regions: vec![RegionModel {
                region_id: "r".into(),
                name: None,
                status: None,
                exceptional: false,
                station_count: 1,
                size: SizeDist::Constant { n: size },
                turnout: UnitDist::Constant { value: turnout },
                support: vec![PartySupport {
                    share: UnitDist::Constant { value: share },
                    turnout_slope: 0.0,
                }],
            }],
        }
    }

    fn toy(reg: u64, cast: u64, votes: Vec<u64>) -> Dataset {
        let regions: Registry = [("r".to_string(), RegionInfo::ordinary("r"))].into();
        let parties = (0..votes.len()).map(|i| ["UR", "KPRF", "LDPR"][i].to_string()).collect();
        Dataset::new(
            vec![PrecinctRecord {
                station_id: "s".into(),
                region_id: "r".into(),
                registered: reg,
                ballots_cast: cast,
                valid_ballots: cast,
                votes,
            }],
            regions,
            parties,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_station() {
        let ds = generate(&one_station_model(100, 1.0, 0.5), 1).unwrap();
        let r = &ds.records()[0];
        assert_eq!((r.registered, r.ballots_cast, r.valid_ballots, r.votes.clone()), (100, 100, 100, vec![50]));
        assert_eq!(r.station_id, "r-000000");
    }

    #[test]
    fn same_seed_same_bytes() {
        let model = HonestModel {
            parties: vec!["UR".into(), "KPRF".into()],
            regions: vec![
                RegionModel::heterogeneous("a", 200, &[0.4, 0.2]),
                RegionModel::heterogeneous("b", 100, &[0.6, 0.1]),
            ],
        };
        let a = generate(&model, 5).unwrap();
        let b = generate(&model, 5).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        crate::ingest::write_dataset(&a, &mut x).unwrap();
        crate::ingest::write_dataset(&b, &mut y).unwrap();
        assert_eq!(x, y);
        assert_ne!(a, generate(&model, 6).unwrap());
        assert!(validate(&a).is_clean());
    }

    #[test]
    fn model_json_round_trip() {
        let model = HonestModel {
            parties: vec!["UR".into()],
            regions: vec![RegionModel::heterogeneous("a", 3, &[0.5])],
        };
        let json = serde_json::to_string(&model).unwrap();
        assert_eq!(serde_json::from_str::<HonestModel>(&json).unwrap(), model);
        let bad = HonestModel {
            parties: vec!["UR".into(), "KPRF".into()],
            ..model
        };
        assert!(generate(&bad, 0).is_err());
    }

    #[test]
    fn remainder_allocation_is_exact() {
        assert_eq!(largest_remainder(10, &[1.0, 1.0, 1.0]), [4, 3, 3]);
        assert_eq!(largest_remainder(7, &[0.5, 0.5]), [4, 3]);
        assert_eq!(largest_remainder_exact(5, &[3, 3, 0]), [3, 2, 0]);
    }

    #[test]
    fn zero_rate_stuffing_is_identity() {
        let ds = toy(1000, 500, vec![200, 100]);
        let inj = FraudInjector::BallotStuffing {
            rate: 0.0,
            affected: 1.0,
            party: "UR".into(),
        };
        let (out, m) = inject(&ds, &inj, 3).unwrap();
        assert_eq!(out, ds);
        assert!(m.modified.is_empty() && m.skipped.is_empty());
    }

    #[test]
    fn stuffing_example() {
        let ds = toy(1000, 500, vec![200, 100]);
        let inj = FraudInjector::BallotStuffing {
            rate: 0.2,
            affected: 1.0,
            party: "UR".into(),
        };
        let (out, m) = inject(&ds, &inj, 3).unwrap();
        let r = &out.records()[0];
        assert_eq!((r.ballots_cast, r.votes[0]), (700, 400));
        assert_eq!(m.modified, ["s"]);
        let full = toy(100, 100, vec![50, 50]);
        let (same, m) = inject(&full, &inj, 3).unwrap();
        assert_eq!(same, full);
        assert_eq!(m.skipped.len(), 1);
    }

    #[test]
    fn drawing_example() {
        let ds = toy(1000, 1000, vec![610, 300, 50]);
        let inj = FraudInjector::ResultDrawing {
            targets: vec![0.65],
            affected: 1.0,
            party: "UR".into(),
        };
        let (out, m) = inject(&ds, &inj, 3).unwrap();
        let r = &out.records()[0];
        assert_eq!(r.votes[0], 650);
        assert!(r.votes[1] < 300 && r.votes[2] < 50);
        assert_eq!(r.votes.iter().sum::<u64>(), 960);
        assert!(validate(&out).is_clean());
        assert_eq!(m.modified, ["s"]);
    }

    #[test]
    fn drawing_skips() {
        let inj = FraudInjector::ResultDrawing {
            targets: vec![0.65],
            affected: 1.0,
            party: "UR".into(),
        };
        let (_, m) = inject(&toy(100, 100, vec![70, 30]), &inj, 0).unwrap();
        assert_eq!(m.skipped[0].reason, "share above every target");
        let (_, m) = inject(&toy(100, 0, vec![0, 0]), &inj, 0).unwrap();
        assert_eq!(m.skipped[0].reason, "no ballots cast");
        let (same, m) = inject(&toy(100, 100, vec![65, 35]), &inj, 0).unwrap();
        assert!(m.modified.is_empty() && m.skipped.is_empty());
        assert_eq!(same.records()[0].votes, [65, 35]);
    }

    #[test]
    fn selection_size_and_order() {
        let s = affected_stations(1000, 0.05, 9);
        assert_eq!(s.len(), 50);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, affected_stations(1000, 0.05, 9));
        assert!(affected_stations(10, 0.0, 9).is_empty());
    }

    #[test]
    fn injector_argument_checks() {
        let ds = toy(1000, 500, vec![200, 100]);
        for inj in [
            FraudInjector::BallotStuffing { rate: 0.1, affected: 1.5, party: "UR".into() },
            FraudInjector::BallotStuffing { rate: 0.1, affected: 0.5, party: "X".into() },
            FraudInjector::ResultDrawing { targets: vec![], affected: 0.5, party: "UR".into() },
            FraudInjector::ResultDrawing { targets: vec![0.0], affected: 0.5, party: "UR".into() },
        ] {
            assert!(inject(&ds, &inj, 0).is_err(), "{inj:?}");
        }
    }
}
