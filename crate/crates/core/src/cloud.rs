//! Turnout/share clouds and their compressed image.
//!
//! Each station is a point `(x, y)` with `x` its turnout and `y` the party's
//! share. The compressed cloud maps it to `(u, v) = (x, x y)`; with ballots
//! cast as the share denominator `v` is the party's votes over registered
//! electors, and every point lies in the triangle `0 <= v <= u <= 1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Dataset, Excluded, Exclusion, FlaggedPolicy, RegionFilter, Selector, ShareDenominator};

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("unknown party `{0}`")]
    UnknownParty(String),
    #[error("no points")]
    NoPoints,
    #[error("cell {0} must lie in (0, 0.25]")]
    BadCell(f64),
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("modes share x = {0}; the slope is vertical")]
    VerticalSlope(f64),
    #[error("association needs at least 3 stations, found {0}")]
    TooFewStations(usize),
    #[error("{0} has zero variance; association is undefined")]
    ZeroVariance(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressedPoint {
    pub u: f64,
    pub v: f64,
    pub weight: f64,
}

/// Anything that can be placed on the unit square with a weight.
pub trait PlanePoint {
    fn coords(&self) -> (f64, f64);
    fn weight(&self) -> f64;
}

impl PlanePoint for CloudPoint {
    fn coords(&self) -> (f64, f64) {
        (self.x, self.y)
    }
    fn weight(&self) -> f64 {
        self.weight
    }
}

impl PlanePoint for CompressedPoint {
    fn coords(&self) -> (f64, f64) {
        (self.u, self.v)
    }
    fn weight(&self) -> f64 {
        self.weight
    }
}

impl PlanePoint for (f64, f64) {
    fn coords(&self) -> (f64, f64) {
        *self
    }
    fn weight(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointWeight {
    #[default]
    Unit,
    Electors,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CloudOptions {
    pub denominator: ShareDenominator,
    pub weight: PointWeight,
    pub flagged_policy: FlaggedPolicy,
    pub region_filter: RegionFilter,
    pub min_station_size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cloud {
    pub party: String,
    pub denominator: ShareDenominator,
    pub station_ids: Vec<String>,
    pub points: Vec<CloudPoint>,
    pub excluded: Excluded,
}

impl Cloud {
    pub fn compressed(&self) -> Vec<CompressedPoint> {
        compress(&self.points)
    }

    /// `station_id,x,y,weight`, plus `u,v` when `with_compressed` is set.
    pub fn to_csv(&self, with_compressed: bool) -> String {
        let mut out = String::from("station_id,x,y,weight");
        out.push_str(if with_compressed { ",u,v\n" } else { "\n" });
        for (id, p) in self.station_ids.iter().zip(&self.points) {
            let _ = write!(out, "{id},{},{},{}", p.x, p.y, p.weight);
            if with_compressed {
                let c = compress_one(p);
                let _ = write!(out, ",{},{}", c.u, c.v);
            }
            out.push('\n');
        }
        out
    }
}

/// One point per included station. Stations with an empty roll or a zero
/// share denominator are counted under `zero_denominator`; a share above 1,
/// possible only for records failing validation, is counted under
/// `validation_flagged`.
pub fn build_cloud(ds: &Dataset, party: &str, opts: &CloudOptions) -> Result<Cloud, CloudError> {
    let pi = ds
        .party_index(party)
        .ok_or_else(|| CloudError::UnknownParty(party.to_string()))?;
    let sel = Selector::new(ds, opts.flagged_policy, &opts.region_filter, opts.min_station_size);
    let mut cloud = Cloud {
        party: party.to_string(),
        denominator: opts.denominator,
        station_ids: Vec::new(),
        points: Vec::new(),
        excluded: Excluded::default(),
    };
    for r in ds.records() {
        let weight = match opts.weight {
            PointWeight::Unit => 1.0,
            PointWeight::Electors => r.registered as f64,
        };
        let den = r.denominator(opts.denominator);
        if let Some(why) = sel.classify(r, den) {
            cloud.excluded.record(why, weight);
            continue;
        }
        let x = r.ballots_cast as f64 / r.registered as f64;
        let y = r.votes[pi] as f64 / den as f64;
        if x > 1.0 || y > 1.0 {
            cloud.excluded.record(Exclusion::ValidationFlagged, weight);
            continue;
        }
        cloud.station_ids.push(r.station_id.clone());
        cloud.points.push(CloudPoint { x, y, weight });
    }
    Ok(cloud)
}

fn compress_one(p: &CloudPoint) -> CompressedPoint {
    CompressedPoint {
        u: p.x,
        v: p.x * p.y,
        weight: p.weight,
    }
}

pub fn compress(points: &[CloudPoint]) -> Vec<CompressedPoint> {
    points.iter().map(compress_one).collect()
}

/// A local maximum of the cell histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEstimate {
    /// Cell centre, or the given coordinates for [`ModeEstimate::at`].
    pub x: f64,
    pub y: f64,
    /// Weight per unit area, normalised so the histogram integrates to 1.
    pub density: f64,
    pub cell: Option<(usize, usize)>,
}

impl ModeEstimate {
    /// A mode placed by hand, e.g. read off a published figure.
    pub fn at(x: f64, y: f64) -> Self {
        ModeEstimate {
            x,
            y,
            density: 0.0,
            cell: None,
        }
    }
}

/// Up to `top_k` strict 8-neighbourhood maxima of a square-cell histogram
/// over the unit square, by descending density and then by lower cell
/// corner (x first).
pub fn estimate_modes<P: PlanePoint>(
    points: &[P],
    cell: f64,
    top_k: usize,
) -> Result<Vec<ModeEstimate>, CloudError> {
    if !(cell > 0.0 && cell <= 0.25) {
        return Err(CloudError::BadCell(cell));
    }
    if top_k == 0 {
        return Err(CloudError::ZeroTopK);
    }
    if points.is_empty() {
        return Err(CloudError::NoPoints);
    }
    let n = (1.0 / cell - 1e-9).ceil() as usize;
    let index = |t: f64| ((t / cell + 1e-9).floor().max(0.0) as usize).min(n - 1);
    let mut grid = vec![0.0; n * n];
    let mut total = 0.0;
    for p in points {
        let (x, y) = p.coords();
        grid[index(x) * n + index(y)] += p.weight();
        total += p.weight();
    }
    if total <= 0.0 {
        return Err(CloudError::NoPoints);
    }

    let mut modes = Vec::new();
    for ix in 0..n {
        for iy in 0..n {
            let w = grid[ix * n + iy];
            if w <= 0.0 {
                continue;
            }
            let mut peak = true;
            'scan: for dx in -1i64..=1 {
                for dy in -1i64..=1 {
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    if (dx, dy) == (0, 0) || jx < 0 || jy < 0 || jx >= n as i64 || jy >= n as i64 {
                        continue;
                    }
                    if grid[jx as usize * n + jy as usize] >= w {
                        peak = false;
                        break 'scan;
                    }
                }
            }
            if peak {
                modes.push(ModeEstimate {
                    x: (ix as f64 + 0.5) * cell,
                    y: (iy as f64 + 0.5) * cell,
                    density: w / (total * cell * cell),
                    cell: Some((ix, iy)),
                });
            }
        }
    }
    modes.sort_by(|a, b| {
        b.density
            .total_cmp(&a.density)
            .then_with(|| a.cell.cmp(&b.cell))
    });
    modes.truncate(top_k);
    Ok(modes)
}

/// Signed slope `(y2 - y1) / (x2 - x1)`.
pub fn slope_between_modes(m1: &ModeEstimate, m2: &ModeEstimate) -> Result<f64, CloudError> {
    if m1.x == m2.x {
        return Err(CloudError::VerticalSlope(m1.x));
    }
    Ok((m2.y - m1.y) / (m2.x - m1.x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Association {
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub n: usize,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, CloudError> {
    let n = xs.len();
    if n < 3 {
        return Err(CloudError::TooFewStations(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(CloudError::ZeroVariance("turnout"));
    }
    if syy == 0.0 {
        return Err(CloudError::ZeroVariance("share"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, CloudError> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Unweighted Pearson and Spearman correlation between station turnout and
/// party share (denominator ballots cast).
pub fn turnout_share_association(ds: &Dataset, party: &str) -> Result<Association, CloudError> {
    let cloud = build_cloud(ds, party, &CloudOptions::default())?;
    let xs: Vec<f64> = cloud.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = cloud.points.iter().map(|p| p.y).collect();
    Ok(Association {
        pearson_r: pearson(&xs, &ys)?,
        spearman_rho: spearman(&xs, &ys)?,
        n: xs.len(),
    })
}
