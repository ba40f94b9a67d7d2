//! Reference values checked against independent computations.

mod common;

use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use precinct_forensics::histogram::{station_voting_histogram, HistogramSpec};
use precinct_forensics::ingest::{exceptional_set, validate};
use precinct_forensics::mixture::{gaussian_sum_modes, mixture_moments, GaussianComponent, SizeMeasure};
use precinct_forensics::rational::{coinflip_distribution, coinflip_histogram, PModel};
use precinct_forensics::region::{decompose, summarize_regions};
use precinct_forensics::synth::{generate, HonestModel, RegionModel};
use statrs::distribution::{Binomial, Discrete};

fn inconsistent_rows(rows: &[common::TableRow]) -> BTreeSet<String> {
    rows.iter()
        .filter(|r| (r.share_pct * r.turnout_pct / 100.0 - r.share_of_electors_pct).abs() > 0.15)
        .map(|r| r.region_id.clone())
        .collect()
}

#[test]
fn printed_product_column_has_four_slips() {
    let expected: BTreeSet<String> = ["chuvashia", "kursk", "north_osetia", "orenburg"].map(String::from).into();
    assert_eq!(inconsistent_rows(&common::addendum()), expected);
}

#[test]
fn exceptional_table_variant() {
    let table = common::table("exceptional_table.csv");
    assert_eq!(inconsistent_rows(&table), BTreeSet::from(["daghestan", "karachaevo_circassian"].map(String::from)));
    let addendum = common::addendum();
    let differing: BTreeSet<&str> = table
        .iter()
        .filter(|t| {
            let a = addendum.iter().find(|a| a.region_id == t.region_id).unwrap();
            (a.electors_millions, a.share_pct, a.turnout_pct, a.share_of_electors_pct)
                != (t.electors_millions, t.share_pct, t.turnout_pct, t.share_of_electors_pct)
        })
        .map(|t| t.region_id.as_str())
        .collect();
    assert_eq!(differing, BTreeSet::from(["bashkortostan", "daghestan", "karachaevo_circassian", "north_osetia", "tatarstan", "tyva"]));
}

#[test]
fn decomposition_is_robust_to_table_variant() {
    let table = common::table("exceptional_table.csv");
    let rows: Vec<_> = common::addendum()
        .into_iter()
        .map(|a| table.iter().find(|t| t.region_id == a.region_id).cloned().unwrap_or(a))
        .collect();
    let ds = common::table_dataset(&rows);
    let d = decompose(&ds, "UR", &exceptional_set(ds.regions(), true)).unwrap();
    assert_abs_diff_eq!(d.total_votes as f64 / 1e6, 32.4, epsilon = 0.2);
    assert_abs_diff_eq!(d.subset_votes as f64 / 1e6, 7.3, epsilon = 0.2);
    assert_abs_diff_eq!(d.subset_fraction, 0.225, epsilon = 0.01);
    assert_abs_diff_eq!(d.share_excluding_subset, 0.443, epsilon = 0.005);
}

#[test]
fn table_regions_reproduce_their_rows() {
    let ds = common::table_dataset(&common::addendum());
    let s = summarize_regions(&ds, "UR").unwrap();
    let row = |id: &str| s.iter().find(|r| r.region_id == id).unwrap();
    assert_eq!(s[0].region_id, "chechenia");
    assert_abs_diff_eq!(row("chechenia").share_of_electors.unwrap(), 0.990, epsilon = 5e-4);
    assert_abs_diff_eq!(row("mordovia").share_of_electors.unwrap(), 0.863, epsilon = 5e-4);
    // the national product check, votes/electors = turnout * share
    let (votes, electors, cast) = s.iter().fold((0, 0, 0), |(v, e, c), r| {
        (v + r.party_votes, e + r.electors, c + r.ballots_cast)
    });
    let product = (cast as f64 / electors as f64) * (votes as f64 / cast as f64);
    assert_abs_diff_eq!(product, votes as f64 / electors as f64, epsilon = 1e-15);
}

#[test]
fn coinflip_law_matches_statrs_binomial() {
    for (n, p) in [(1, 0.5), (4, 0.5), (37, 0.13), (1000, 0.5), (2500, 0.61), (10_000, 0.9)] {
        let law = coinflip_distribution(n, p).unwrap();
        let oracle = Binomial::new(p, n).unwrap();
        for (k, &pr) in law.probs.iter().enumerate() {
            let want = oracle.pmf(k as u64);
            assert!((pr - want).abs() <= 1e-12 + 1e-9 * want, "n={n} p={p} k={k}: {pr} vs {want}");
        }
    }
}

#[test]
fn exact_histogram_matches_binomial_per_bin() {
    let spec = HistogramSpec::new(0.0005);
    let h = coinflip_histogram(&SizeMeasure::single(1000), &PModel::Constant { p: 0.5 }, &spec, 1, 0).unwrap();
    let oracle = Binomial::new(0.5, 1000).unwrap();
    let mut expected = vec![0.0; h.weights.len()];
    for k in 0..=1000u64 {
        // k/1000 sits exactly on edge 2k, and interior edges belong to the right bin
        let bin = (2 * k as usize).min(expected.len() - 1);
        expected[bin] += oracle.pmf(k);
    }
    for (i, (a, b)) in h.weights.iter().zip(&expected).enumerate() {
        assert!((a - b).abs() <= 1e-12, "bin {i}: {a} vs {b}");
    }
}

#[test]
fn two_point_kurtosis_from_closed_form() {
    let (s1, s2) = (0.25 / 100.0, 0.25 / 400.0);
    let e2 = 0.5 * (s1 + s2);
    let e4 = 0.5 * (s1 * s1 + s2 * s2);
    let closed = 3.0 * e4 / (e2 * e2) - 3.0;
    assert_abs_diff_eq!(closed, 1.08, epsilon = 1e-12);
    let mu = SizeMeasure::from_atoms([(100, 0.5), (400, 0.5)]).unwrap();
    assert_abs_diff_eq!(mixture_moments(&mu, 0.5).unwrap().excess_kurtosis, closed, epsilon = 1e-12);
}

#[test]
fn two_support_regions_give_a_bimodal_histogram() {
    let model = HonestModel {
        parties: vec!["UR".into(), "KPRF".into()],
        regions: vec![
            RegionModel::heterogeneous("low", 4000, &[0.3, 0.2]),
            RegionModel::heterogeneous("high", 4000, &[0.7, 0.1]),
        ],
    };
    let ds = generate(&model, 11).unwrap();
    assert!(validate(&ds).is_clean());
    let h = station_voting_histogram(&ds, "UR", &HistogramSpec::new(0.01)).unwrap();
    // Gaussian kernel smoothing: one component per occupied bin
    let kernel: Vec<GaussianComponent> = h
        .centers()
        .into_iter()
        .zip(&h.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(mean, &weight)| GaussianComponent { weight, mean, sigma: 0.03 })
        .collect();
    let scan = gaussian_sum_modes(&kernel, 0.001).unwrap();
    assert_eq!(scan.mode_count(), 2, "modes at {:?}", scan.modes);
    assert!((scan.modes[0] - 0.3).abs() < 0.05 && (scan.modes[1] - 0.7).abs() < 0.05, "{:?}", scan.modes);
}
