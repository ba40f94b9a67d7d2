mod args;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use precinct_forensics::cloud::{
    build_cloud, estimate_modes, slope_between_modes, CloudOptions, ModeEstimate,
};
use precinct_forensics::histogram::{
    station_voting_histogram, turnout_histogram, Histogram, HistogramSpec, WeightMode,
};
use precinct_forensics::ingest::{
    default_registry, exceptional_set, parse_dataset, parse_dataset_inferring_regions,
    parse_registry, station_size_distribution, validate, write_dataset, write_registry, Dataset,
    FlaggedPolicy, RegionFilter,
};
use precinct_forensics::mixture::{
    kolmogorov_distance_to_gaussian, mixture_density, mixture_moments, SizeMeasure,
};
use precinct_forensics::rational::{
    coinflip_histogram, default_candidates, detect_dents_scaled, falsification_lower_bound,
    significance_scale, DentReport, PModel,
};
use precinct_forensics::region::{decompose, region_report_csv, summarize_regions};
use precinct_forensics::svg::{line_chart, scatter, Axes, TickFormat};
use precinct_forensics::synth::{generate, inject, FraudInjector, HonestModel};
use serde::Serialize;
use thiserror::Error;

use args::{Binned, Cli, Command, Format, Input, Selection, Sizes};

#[derive(Debug, Error)]
enum CliError {
    /// Arguments that parse but make no sense together.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 1,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type Result<T> = std::result::Result<T, CliError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load(input: &Input) -> Result<Dataset> {
    load_paths(&input.input, input.regions.as_deref())
}

fn load_paths(input: &Path, regions: Option<&Path>) -> Result<Dataset> {
    let source = open(input)?;
    match regions {
        Some(reg) => {
            let registry = parse_registry(open(reg)?).map_err(data)?;
            parse_dataset(source, &registry)
        }
        None => parse_dataset_inferring_regions(source, &default_registry()),
    }
    .map_err(|e| data(format!("{}: {e}", input.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, body: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, body).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => io::stdout().write_all(body).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialise");
    s.push('\n');
    s.into_bytes()
}

fn region_filter(sel: &Selection) -> RegionFilter {
    if sel.exclude_exceptional {
        RegionFilter::ExcludeExceptional
    } else {
        RegionFilter::All
    }
}

fn flagged_policy(sel: &Selection) -> FlaggedPolicy {
    if sel.include_flagged {
        FlaggedPolicy::Include
    } else {
        FlaggedPolicy::Exclude
    }
}

fn hist_spec(bins: &Binned, weight: WeightMode, sel: &Selection) -> HistogramSpec {
    let mut spec = HistogramSpec::new(bins.bin_width)
        .weighted(weight)
        .min_size(sel.min_size)
        .denominator(sel.denominator.into())
        .regions(region_filter(sel));
    spec.flagged_policy = flagged_policy(sel);
    if let Some(c) = bins.center {
        spec = spec.centered_on(c);
    }
    spec
}

fn cloud_options(weight: args::PointWeightArg, sel: &Selection) -> CloudOptions {
    CloudOptions {
        denominator: sel.denominator.into(),
        weight: weight.into(),
        flagged_policy: flagged_policy(sel),
        region_filter: region_filter(sel),
        min_station_size: sel.min_size,
    }
}

fn unit_axes(x_label: &str, y_label: &str, y_range: (f64, f64)) -> Axes {
    Axes {
        x_label: x_label.into(),
        y_label: y_label.into(),
        x_range: (0.0, 1.0),
        y_range,
        x_ticks: TickFormat::Percent,
        y_ticks: TickFormat::Plain,
    }
}

fn histogram_output(h: &Histogram, format: Format, x_label: &str) -> Vec<u8> {
    match format {
        Format::Json => json(h),
        Format::Csv => h.to_csv().into_bytes(),
        Format::Svg => {
            let pts: Vec<(f64, f64)> = h.centers().into_iter().zip(h.weights.iter().copied()).collect();
            let top = h.weights.iter().copied().fold(0.0, f64::max);
            let y_max = if top > 0.0 { top * 1.05 } else { 1.0 };
            line_chart(&[(x_label, pts)], unit_axes(x_label, "weight", (0.0, y_max))).into_bytes()
        }
    }
}

fn parse_sizes(sizes: &Sizes) -> Result<SizeMeasure> {
    if let Some(path) = &sizes.input {
        return Ok(station_size_distribution(&load_paths(path, sizes.regions.as_deref())?));
    }
    let spec = sizes
        .sizes
        .as_deref()
        .ok_or_else(|| usage("one of --sizes or --input is required"))?;
    let bad = || usage(format!("cannot parse --sizes `{spec}`"));
    if let Some((lo, hi)) = spec.split_once('-') {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok(SizeMeasure::uniform(lo..=hi));
    }
    let atoms = spec
        .split(',')
        .map(|atom| {
            let (n, w) = atom.split_once(':').unwrap_or((atom, "1"));
            Ok((n.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?))
        })
        .collect::<Result<Vec<(u64, f64)>>>()?;
    SizeMeasure::from_atoms(atoms).map_err(|e| usage(e.to_string()))
}

fn dent_report(
    ds: &Dataset,
    party: &str,
    spec: &HistogramSpec,
    candidates: &Option<Vec<f64>>,
    z: f64,
) -> Result<DentReport> {
    let h = station_voting_histogram(ds, party, spec).map_err(data)?;
    let scale = significance_scale(ds, party, spec).map_err(data)?;
    let cands = candidates.clone().unwrap_or_else(default_candidates);
    let mut report = detect_dents_scaled(&h, &cands, z, scale).map_err(data)?;
    report.party = Some(party.to_string());
    Ok(report)
}

#[derive(Serialize)]
struct ModesOut {
    party: String,
    compressed: bool,
    cell: f64,
    modes: Vec<ModeEstimate>,
    /// Between the two densest modes, when there are two.
    slope: Option<f64>,
}

#[derive(Serialize)]
struct BoundOut {
    party: String,
    lower_bound: f64,
    report: DentReport,
}

#[derive(Serialize)]
struct MixtureOut {
    p: f64,
    sizes: SizeMeasure,
    mean: f64,
    variance: f64,
    excess_kurtosis: f64,
    kolmogorov_distance: f64,
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate(a) => {
            let ds = load(&a.input)?;
            let report = validate(&ds);
            emit(&a.output.output, &json(&report))?;
            return Ok(if report.is_clean() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            });
        }
        Command::Hist(a) => {
            let ds = load(&a.input)?;
            let spec = hist_spec(&a.bins, a.weight.into(), &a.selection);
            let h = station_voting_histogram(&ds, &a.party, &spec).map_err(data)?;
            emit(&a.output.output, &histogram_output(&h, a.format, &format!("{} share", a.party)))?;
        }
        Command::TurnoutHist(a) => {
            if a.weight == args::Weight::PartyVotes {
                return Err(usage("turnout-hist has no party; use --weight stations or electors"));
            }
            let ds = load(&a.input)?;
            let spec = hist_spec(&a.bins, a.weight.into(), &a.selection);
            let h = turnout_histogram(&ds, &spec).map_err(data)?;
            emit(&a.output.output, &histogram_output(&h, a.format, "turnout"))?;
        }
        Command::Cloud(a) => cloud_command(a, false)?,
        Command::Compress(a) => cloud_command(a, true)?,
        Command::Modes(a) => {
            let ds = load(&a.input)?;
            let cloud = build_cloud(&ds, &a.party, &cloud_options(a.weight, &a.selection)).map_err(data)?;
            let modes = if a.compressed {
                estimate_modes(&cloud.compressed(), a.cell, a.top_k)
            } else {
                estimate_modes(&cloud.points, a.cell, a.top_k)
            }
            .map_err(data)?;
            let slope = match modes.as_slice() {
                [m1, m2, ..] if m1.x != m2.x => Some(slope_between_modes(m1, m2).map_err(data)?),
                _ => None,
            };
            let out = ModesOut {
                party: a.party,
                compressed: a.compressed,
                cell: a.cell,
                modes,
                slope,
            };
            emit(&a.output.output, &json(&out))?;
        }
        Command::Dents(a) => {
            let ds = load(&a.input)?;
            let bins = Binned {
                bin_width: a.bin_width,
                center: Some(a.center),
            };
            let spec = hist_spec(&bins, a.weight.into(), &a.selection);
            let report = dent_report(&ds, &a.party, &spec, &a.candidates, a.z_threshold)?;
            emit(&a.output.output, &json(&report))?;
        }
        Command::Bound(a) => {
            let ds = load(&a.input)?;
            let bins = Binned {
                bin_width: a.bin_width,
                center: Some(a.center),
            };
            let spec = hist_spec(&bins, WeightMode::PartyVotes, &a.selection);
            let report = dent_report(&ds, &a.party, &spec, &a.candidates, a.z_threshold)?;
            let lower_bound = falsification_lower_bound(&ds, &a.party, &report).map_err(data)?;
            let out = BoundOut {
                party: a.party,
                lower_bound,
                report,
            };
            emit(&a.output.output, &json(&out))?;
        }
        Command::Coinflip(a) => {
            let sizes = parse_sizes(&a.sizes)?;
            let model = match a.p_concentration {
                None => PModel::Constant { p: a.p },
                Some(concentration) => PModel::Beta {
                    mean: a.p,
                    concentration,
                },
            };
            let mut spec = HistogramSpec::new(a.bins.bin_width).min_size(a.min_size);
            if let Some(c) = a.bins.center {
                spec = spec.centered_on(c);
            }
            let h = coinflip_histogram(&sizes, &model, &spec, a.trials, a.seed).map_err(|e| usage(e.to_string()))?;
            emit(&a.output.output, &histogram_output(&h, a.format, "share"))?;
        }
        Command::Mixture(a) => {
            let sizes = parse_sizes(&a.sizes)?;
            let m = mixture_moments(&sizes, a.p).map_err(|e| usage(e.to_string()))?;
            let body = match a.format {
                Format::Json => json(&MixtureOut {
                    p: a.p,
                    kolmogorov_distance: kolmogorov_distance_to_gaussian(&sizes, a.p)
                        .map_err(|e| usage(e.to_string()))?,
                    sizes: sizes.normalized(),
                    mean: m.mean,
                    variance: m.variance,
                    excess_kurtosis: m.excess_kurtosis,
                }),
                Format::Csv => {
                    let mut out = String::from("x,mixture,gaussian\n");
                    for (x, f, g) in density_curves(&sizes, a.p, m.variance)? {
                        out.push_str(&format!("{x},{f},{g}\n"));
                    }
                    out.into_bytes()
                }
                Format::Svg => {
                    let curves = density_curves(&sizes, a.p, m.variance)?;
                    let top = curves.iter().map(|c| c.1.max(c.2)).fold(0.0, f64::max);
                    let mix = curves.iter().map(|c| (c.0, c.1)).collect();
                    let gauss = curves.iter().map(|c| (c.0, c.2)).collect();
                    let mut axes = unit_axes("share", "density", (0.0, top * 1.05));
                    axes.x_range = (curves[0].0, curves[curves.len() - 1].0);
                    line_chart(&[("mixture", mix), ("gaussian", gauss)], axes).into_bytes()
                }
            };
            emit(&a.output.output, &body)?;
        }
        Command::RegionReport(a) => {
            let ds = load(&a.input)?;
            let s = summarize_regions(&ds, &a.party).map_err(data)?;
            let body = match a.format {
                Format::Csv => region_report_csv(&s).map_err(data)?.into_bytes(),
                Format::Json => json(&s),
                Format::Svg => return Err(usage("region-report writes csv or json")),
            };
            emit(&a.output.output, &body)?;
        }
        Command::Decompose(a) => {
            let ds = load(&a.input)?;
            let set: BTreeSet<String> = match a.region_set {
                Some(ids) => ids.into_iter().collect(),
                None => exceptional_set(ds.regions(), true),
            };
            let d = decompose(&ds, &a.party, &set).map_err(data)?;
            emit(&a.output.output, &json(&d))?;
        }
        Command::Generate(a) => {
            let model: HonestModel = read_json(&a.config)?;
            let ds = generate(&model, a.seed).map_err(|e| usage(e.to_string()))?;
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf).map_err(data)?;
            emit(&a.output.output, &buf)?;
            if let Some(path) = a.registry_output {
                let mut reg = Vec::new();
                write_registry(&model.registry(), &mut reg).map_err(data)?;
                emit(&Some(path), &reg)?;
            }
        }
        Command::Inject(a) => {
            let ds = load(&a.input)?;
            let injector: FraudInjector = read_json(&a.config)?;
            let (out, manifest) = inject(&ds, &injector, a.seed).map_err(|e| usage(e.to_string()))?;
            let mut buf = Vec::new();
            write_dataset(&out, &mut buf).map_err(data)?;
            emit(&a.output.output, &buf)?;
            if let Some(path) = a.manifest {
                emit(&Some(path), &json(&manifest))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// `(x, mixture density, matched Gaussian density)` over `p +- 6 sigma`.
fn density_curves(sizes: &SizeMeasure, p: f64, variance: f64) -> Result<Vec<(f64, f64, f64)>> {
    let sd = variance.sqrt();
    let (lo, hi) = (p - 6.0 * sd, p + 6.0 * sd);
    (0..=400)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 400.0;
            let f = mixture_density(sizes, p, x).map_err(|e| usage(e.to_string()))?;
            let z = (x - p) / sd;
            let g = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            Ok((x, f, g))
        })
        .collect()
}

fn cloud_command(a: args::CloudArgs, compressed: bool) -> Result<()> {
    let ds = load(&a.input)?;
    let cloud = build_cloud(&ds, &a.party, &cloud_options(a.weight, &a.selection)).map_err(data)?;
    let body = match (a.format, compressed) {
        (Format::Csv, false) => cloud.to_csv(false).into_bytes(),
        (Format::Csv, true) => {
            let mut out = String::from("station_id,u,v,weight\n");
            for (id, p) in cloud.station_ids.iter().zip(cloud.compressed()) {
                out.push_str(&format!("{id},{},{},{}\n", p.u, p.v, p.weight));
            }
            out.into_bytes()
        }
        (Format::Json, false) => json(&cloud),
        (Format::Json, true) => json(&serde_json::json!({
            "party": cloud.party,
            "denominator": cloud.denominator,
            "station_ids": cloud.station_ids,
            "points": cloud.compressed(),
            "excluded": cloud.excluded,
        })),
        (Format::Svg, _) => {
            let pts: Vec<(f64, f64)> = if compressed {
                cloud.compressed().iter().map(|p| (p.u, p.v)).collect()
            } else {
                cloud.points.iter().map(|p| (p.x, p.y)).collect()
            };
            let y_label = if compressed {
                format!("{} share of electors", a.party)
            } else {
                format!("{} share", a.party)
            };
            let mut axes = unit_axes("turnout", &y_label, (0.0, 1.0));
            axes.y_ticks = TickFormat::Percent;
            scatter(&pts, axes, !a.unequal_scales).into_bytes()
        }
    };
    emit(&a.output.output, &body)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
