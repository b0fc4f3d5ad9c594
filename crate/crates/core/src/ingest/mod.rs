//! Raw tables -> binned tensors.
//!
//! Crime, taxi and POI exports are read row by row. Rows that cannot be
//! placed (unknown category or region, malformed or out-of-span timestamp)
//! are counted in an [`IngestReport`] and never abort ingestion.

mod cache;
mod normalize;
mod window;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RegionGraph;

pub use cache::{read_cache, write_cache, TensorCache};
pub use normalize::NormalizationSpec;
pub use window::{build_windows, SampleWindow, WindowConfig, WindowReport};

/// Number of external features: taxi inflow, taxi outflow, ten POI classes.
pub const FEATURE_COUNT: usize = 12;
pub const TAXI_INFLOW: usize = 0;
pub const TAXI_OUTFLOW: usize = 1;

pub const POI_CATEGORIES: [&str; 10] = [
    "food",
    "residence",
    "travel",
    "arts_entertainment",
    "outdoors_recreation",
    "education",
    "nightlife",
    "professional",
    "shops",
    "event",
];

pub const DEFAULT_CRIME_CATEGORIES: [&str; 4] = ["theft", "criminal_damage", "battery", "narcotics"];

pub fn feature_names() -> Vec<String> {
    let mut names = vec!["taxi_inflow".to_string(), "taxi_outflow".to_string()];
    names.extend(POI_CATEGORIES.iter().map(|s| format!("poi_{s}")));
    names
}

/// Case- and punctuation-insensitive key: "CRIMINAL DAMAGE" and
/// "criminal_damage" compare equal, as do "Arts & Entertainment" and
/// "arts_entertainment".
pub fn category_key(name: &str) -> String {
    name.to_lowercase()
        .replace(" and ", " ")
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect()
}

/// Half-open binning of a calendar span into steps of `step_hours`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub origin: NaiveDateTime,
    pub step_hours: u32,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(start: NaiveDateTime, end: NaiveDateTime, step_hours: u32) -> Result<Self> {
        if step_hours == 0 || 24 % step_hours != 0 {
            return Err(Error::Config(format!("step length {step_hours}h must divide 24")));
        }
        let hours = (end - start).num_hours();
        if end <= start || (end - start).num_seconds() % 3600 != 0 || hours % step_hours as i64 != 0 {
            return Err(Error::Config(format!(
                "span {start} .. {end} is not a whole number of {step_hours}h steps"
            )));
        }
        Ok(Self {
            origin: start,
            step_hours,
            steps: (hours / step_hours as i64) as usize,
        })
    }

    /// Grid covering whole days `[first, last_exclusive)`.
    pub fn days(first: NaiveDate, last_exclusive: NaiveDate, step_hours: u32) -> Result<Self> {
        Self::new(
            first.and_hms_opt(0, 0, 0).expect("midnight"),
            last_exclusive.and_hms_opt(0, 0, 0).expect("midnight"),
            step_hours,
        )
    }

    pub fn end(&self) -> NaiveDateTime {
        self.origin + chrono::Duration::hours(self.step_hours as i64 * self.steps as i64)
    }

    /// 0-based bin, or `None` outside the span.
    pub fn bin(&self, ts: NaiveDateTime) -> Option<usize> {
        if ts < self.origin {
            return None;
        }
        let secs = (ts - self.origin).num_seconds();
        let bin = (secs / (self.step_hours as i64 * 3600)) as usize;
        (bin < self.steps).then_some(bin)
    }

    /// Start of 0-based bin `bin`.
    pub fn bin_start(&self, bin: usize) -> NaiveDateTime {
        self.origin + chrono::Duration::hours(self.step_hours as i64 * bin as i64)
    }

    pub fn steps_per_day(&self) -> usize {
        (24 / self.step_hours) as usize
    }
}

pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 5] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%m/%d/%Y %I:%M:%S %p",
    ];
    let raw = raw.trim();
    FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
}

impl IngestReport {
    fn reject(&mut self, reason: &str) {
        *self.rejected.entry(reason.to_string()).or_default() += 1;
    }

    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    pub fn merge(&mut self, other: &IngestReport) {
        self.accepted += other.accepted;
        for (k, v) in &other.rejected {
            *self.rejected.entry(k.clone()).or_default() += v;
        }
    }
}

/// Crime counts indexed `[category][region][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrimeTensor {
    pub categories: Vec<String>,
    pub regions: usize,
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl CrimeTensor {
    pub fn zeros(categories: Vec<String>, regions: usize, grid: TimeGrid) -> Self {
        let len = categories.len() * regions * grid.steps;
        Self {
            categories,
            regions,
            grid,
            values: vec![0.0; len],
        }
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    #[inline]
    pub fn offset(&self, k: usize, i: usize, bin: usize) -> usize {
        (k * self.regions + i) * self.grid.steps + bin
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, bin: usize) -> f64 {
        self.values[self.offset(k, i, bin)]
    }

    /// Series of one (category, region) pair over all bins.
    pub fn series(&self, k: usize, i: usize) -> &[f64] {
        let start = self.offset(k, i, 0);
        &self.values[start..start + self.grid.steps]
    }

    pub fn category_index(&self, name: &str) -> Result<usize> {
        let key = category_key(name);
        self.categories
            .iter()
            .position(|c| category_key(c) == key)
            .ok_or_else(|| Error::Config(format!("unknown crime category {name:?}")))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// External features indexed `[feature][region][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub regions: usize,
    pub steps: usize,
    pub values: Vec<f64>,
}

impl FeatureTensor {
    pub fn zeros(regions: usize, steps: usize) -> Self {
        Self {
            regions,
            steps,
            values: vec![0.0; FEATURE_COUNT * regions * steps],
        }
    }

    #[inline]
    pub fn offset(&self, j: usize, i: usize, bin: usize) -> usize {
        (j * self.regions + i) * self.steps + bin
    }

    #[inline]
    pub fn get(&self, j: usize, i: usize, bin: usize) -> f64 {
        self.values[self.offset(j, i, bin)]
    }

    /// All `J` features of region `i` at `bin`.
    pub fn at(&self, i: usize, bin: usize) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|j| self.get(j, i, bin))
    }

    pub fn plane_total(&self, j: usize) -> f64 {
        let start = self.offset(j, 0, 0);
        self.values[start..start + self.regions * self.steps].iter().sum()
    }
}

fn region_of(graph: &RegionGraph, raw: &str) -> Option<usize> {
    let raw = raw.trim();
    // Portal exports sometimes carry "32.0".
    let id = raw.parse::<u32>().ok().or_else(|| {
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0 && *v >= 0.0)
            .map(|v| v as u32)
    })?;
    graph.index_of(id).ok()
}

/// Bins crime rows `(timestamp, category, region-id)`.
pub fn ingest_crimes<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    categories: &[String],
    graph: &RegionGraph,
    grid: TimeGrid,
) -> (CrimeTensor, IngestReport) {
    let keys: Vec<String> = categories.iter().map(|c| category_key(c)).collect();
    let mut tensor = CrimeTensor::zeros(categories.to_vec(), graph.len(), grid);
    let mut report = IngestReport::default();
    for (ts, cat, region) in rows {
        let Some(ts) = parse_timestamp(ts) else {
            report.reject("malformed_timestamp");
            continue;
        };
        let key = category_key(cat);
        let Some(k) = keys.iter().position(|c| *c == key) else {
            report.reject("unknown_category");
            continue;
        };
        let Some(i) = region_of(graph, region) else {
            report.reject("unknown_region");
            continue;
        };
        let Some(bin) = grid.bin(ts) else {
            report.reject("out_of_span");
            continue;
        };
        let at = tensor.offset(k, i, bin);
        tensor.values[at] += 1.0;
        report.accepted += 1;
    }
    (tensor, report)
}

/// Adds taxi trips `(pickup ts, dropoff ts, pickup region, dropoff region)`
/// into the inflow/outflow planes. Trips are attributed to the pickup and
/// dropoff bins only.
pub fn ingest_taxi<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a str, &'a str, &'a str)>,
    graph: &RegionGraph,
    grid: TimeGrid,
    features: &mut FeatureTensor,
) -> IngestReport {
    let mut report = IngestReport::default();
    for (pickup_ts, dropoff_ts, pickup, dropoff) in rows {
        if pickup.trim().is_empty() || dropoff.trim().is_empty() {
            report.reject("missing_region");
            continue;
        }
        let (Some(pts), Some(dts)) = (parse_timestamp(pickup_ts), parse_timestamp(dropoff_ts)) else {
            report.reject("malformed_timestamp");
            continue;
        };
        let (Some(pi), Some(di)) = (region_of(graph, pickup), region_of(graph, dropoff)) else {
            report.reject("unknown_region");
            continue;
        };
        let (Some(pb), Some(db)) = (grid.bin(pts), grid.bin(dts)) else {
            report.reject("out_of_span");
            continue;
        };
        let out = features.offset(TAXI_OUTFLOW, pi, pb);
        features.values[out] += 1.0;
        let inn = features.offset(TAXI_INFLOW, di, db);
        features.values[inn] += 1.0;
        report.accepted += 1;
    }
    report
}

/// Adds POI rows `(region-id, poi-category)`; counts are replicated over
/// every bin.
pub fn ingest_poi<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a str)>,
    graph: &RegionGraph,
    features: &mut FeatureTensor,
) -> IngestReport {
    let keys: Vec<String> = POI_CATEGORIES.iter().map(|c| category_key(c)).collect();
    let mut counts = vec![0.0; POI_CATEGORIES.len() * graph.len()];
    let mut report = IngestReport::default();
    for (region, cat) in rows {
        let Some(c) = keys.iter().position(|k| *k == category_key(cat)) else {
            report.reject("unknown_category");
            continue;
        };
        let Some(i) = region_of(graph, region) else {
            report.reject("unknown_region");
            continue;
        };
        counts[c * graph.len() + i] += 1.0;
        report.accepted += 1;
    }
    for c in 0..POI_CATEGORIES.len() {
        for i in 0..graph.len() {
            let v = counts[c * graph.len() + i];
            let start = features.offset(2 + c, i, 0);
            features.values[start..start + features.steps]
                .iter_mut()
                .for_each(|x| *x += v);
        }
    }
    report
}

fn read_records(path: &Path, columns: &[&str]) -> Result<(Vec<Vec<String>>, IngestReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records_from(file, columns)
}

fn read_records_from(reader: impl Read, columns: &[&str]) -> Result<(Vec<Vec<String>>, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let positions: Vec<usize> = columns
        .iter()
        .map(|col| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(col))
                .ok_or_else(|| Error::Format {
                    what: "csv header",
                    detail: format!("missing column {col:?}"),
                })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut report = IngestReport::default();
    for record in rdr.records() {
        match record {
            Ok(rec) if positions.iter().all(|&p| p < rec.len()) => {
                rows.push(positions.iter().map(|&p| rec[p].to_string()).collect());
            }
            _ => report.reject("malformed_row"),
        }
    }
    Ok((rows, report))
}

/// Reads a crime CSV with columns `timestamp,category,community_area`.
pub fn read_crime_csv(
    path: impl AsRef<Path>,
    categories: &[String],
    graph: &RegionGraph,
    grid: TimeGrid,
) -> Result<(CrimeTensor, IngestReport)> {
    let (rows, mut report) = read_records(path.as_ref(), &["timestamp", "category", "community_area"])?;
    let (tensor, r) = ingest_crimes(
        rows.iter().map(|r| (r[0].as_str(), r[1].as_str(), r[2].as_str())),
        categories,
        graph,
        grid,
    );
    report.merge(&r);
    Ok((tensor, report))
}

/// Reads a taxi CSV with columns
/// `pickup_ts,dropoff_ts,pickup_area,dropoff_area`.
pub fn read_taxi_csv(
    path: impl AsRef<Path>,
    graph: &RegionGraph,
    grid: TimeGrid,
    features: &mut FeatureTensor,
) -> Result<IngestReport> {
    let (rows, mut report) = read_records(
        path.as_ref(),
        &["pickup_ts", "dropoff_ts", "pickup_area", "dropoff_area"],
    )?;
    let r = ingest_taxi(
        rows.iter()
            .map(|r| (r[0].as_str(), r[1].as_str(), r[2].as_str(), r[3].as_str())),
        graph,
        grid,
        features,
    );
    report.merge(&r);
    Ok(report)
}

/// Reads a POI CSV with columns `community_area,poi_category`.
pub fn read_poi_csv(path: impl AsRef<Path>, graph: &RegionGraph, features: &mut FeatureTensor) -> Result<IngestReport> {
    let (rows, mut report) = read_records(path.as_ref(), &["community_area", "poi_category"])?;
    let r = ingest_poi(rows.iter().map(|r| (r[0].as_str(), r[1].as_str())), graph, features);
    report.merge(&r);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: u32) -> RegionGraph {
        let parents = (0..n).map(|i| (i, i / 2)).collect();
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        RegionGraph::build(&edges, &parents).unwrap()
    }

    fn grid(days: u64) -> TimeGrid {
        let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        TimeGrid::days(start, start + chrono::Days::new(days), 4).unwrap()
    }

    #[test]
    fn grid_rejects_bad_step() {
        let start = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        assert!(TimeGrid::days(start, start + chrono::Days::new(1), 5).is_err());
        assert_eq!(grid(1).steps, 6);
    }

    #[test]
    fn one_row_after_origin_lands_in_bin_zero() {
        let g = graph(2);
        let (t, rep) = ingest_crimes([("2019-01-01T01:00:00", "theft", "0")], &["theft".into()], &g, grid(1));
        assert_eq!(t.get(0, 0, 0), 1.0);
        assert_eq!(rep.accepted, 1);
    }

    #[test]
    fn bins_are_half_open() {
        let g = graph(1);
        let (t, _) = ingest_crimes(
            [
                ("2019-01-01 04:00:00", "THEFT", "0"),
                ("2019-01-01 03:59:59", "Theft", "0"),
            ],
            &["theft".into()],
            &g,
            grid(1),
        );
        assert_eq!(t.get(0, 0, 0), 1.0);
        assert_eq!(t.get(0, 0, 1), 1.0);
    }

    #[test]
    fn empty_input_gives_zero_tensor() {
        let g = graph(3);
        let cats = vec!["theft".to_string(), "battery".to_string()];
        let (t, rep) = ingest_crimes(std::iter::empty(), &cats, &g, grid(2));
        assert_eq!(t.values.len(), 2 * 3 * 12);
        assert!(t.values.iter().all(|&v| v == 0.0));
        assert_eq!(rep, IngestReport::default());
    }

    #[test]
    fn bad_rows_are_reported_not_fatal() {
        let g = graph(2);
        let rows = [
            ("2019-01-01T01:00:00", "theft", "0"),
            ("yesterday", "theft", "0"),
            ("2019-01-01T01:00:00", "arson", "0"),
            ("2019-01-01T01:00:00", "theft", "9"),
            ("2020-01-01T01:00:00", "theft", "1"),
        ];
        let (t, rep) = ingest_crimes(rows, &["theft".into()], &g, grid(1));
        assert_eq!(rep.accepted, 1);
        assert_eq!(rep.rejected_total(), 4);
        assert_eq!(rep.rejected["malformed_timestamp"], 1);
        assert_eq!(rep.rejected["unknown_category"], 1);
        assert_eq!(rep.rejected["unknown_region"], 1);
        assert_eq!(rep.rejected["out_of_span"], 1);
        assert_eq!(t.total(), 1.0);
    }

    #[test]
    fn single_taxi_trip() {
        let g = graph(2);
        let gr = grid(1);
        let mut f = FeatureTensor::zeros(2, gr.steps);
        let rep = ingest_taxi(
            [("2019-01-01T12:10:00", "2019-01-01T12:40:00", "0", "1")],
            &g,
            gr,
            &mut f,
        );
        assert_eq!(rep.accepted, 1);
        assert_eq!(f.get(TAXI_OUTFLOW, 0, 3), 1.0);
        assert_eq!(f.get(TAXI_INFLOW, 1, 3), 1.0);
        assert_eq!(f.plane_total(TAXI_INFLOW), 1.0);
    }

    #[test]
    fn round_trip_taxi_hits_both_planes_of_same_region() {
        let g = graph(2);
        let gr = grid(1);
        let mut f = FeatureTensor::zeros(2, gr.steps);
        ingest_taxi(
            [("2019-01-01T00:10:00", "2019-01-01T00:20:00", "0", "0")],
            &g,
            gr,
            &mut f,
        );
        assert_eq!(f.get(TAXI_OUTFLOW, 0, 0), 1.0);
        assert_eq!(f.get(TAXI_INFLOW, 0, 0), 1.0);
    }

    #[test]
    fn trip_spanning_bins_splits_by_endpoint() {
        let g = graph(2);
        let gr = grid(1);
        let mut f = FeatureTensor::zeros(2, gr.steps);
        // pickup 03:30 -> bin 0, dropoff 09:15 -> bin floor(9.25 / 4) = 2
        ingest_taxi(
            [("2019-01-01T03:30:00", "2019-01-01T09:15:00", "1", "0")],
            &g,
            gr,
            &mut f,
        );
        let expected_pickup = (3.5f64 / 4.0).floor() as usize;
        let expected_dropoff = (9.25f64 / 4.0).floor() as usize;
        assert_eq!(f.get(TAXI_OUTFLOW, 1, expected_pickup), 1.0);
        assert_eq!(f.get(TAXI_INFLOW, 0, expected_dropoff), 1.0);
        assert_eq!(f.get(TAXI_INFLOW, 0, 1), 0.0);
    }

    #[test]
    fn taxi_missing_region_rejected() {
        let g = graph(2);
        let gr = grid(1);
        let mut f = FeatureTensor::zeros(2, gr.steps);
        let rep = ingest_taxi(
            [("2019-01-01T00:10:00", "2019-01-01T00:20:00", "", "0")],
            &g,
            gr,
            &mut f,
        );
        assert_eq!(rep.rejected["missing_region"], 1);
        assert_eq!(f.plane_total(TAXI_OUTFLOW), 0.0);
    }

    #[test]
    fn poi_replicated_over_time() {
        let g = graph(6);
        let mut f = FeatureTensor::zeros(6, 12);
        let rep = ingest_poi(
            [
                ("5", "food"),
                ("5", "Food"),
                ("5", "FOOD"),
                ("1", "Arts & Entertainment"),
                ("1", "casino"),
            ],
            &g,
            &mut f,
        );
        assert_eq!(rep.accepted, 4);
        assert_eq!(rep.rejected["unknown_category"], 1);
        assert!((0..12).all(|t| f.get(2, 5, t) == 3.0));
        assert!((0..12).all(|t| f.get(5, 1, t) == 1.0));
    }

    #[test]
    fn poi_empty_input_zero_planes() {
        let g = graph(2);
        let mut f = FeatureTensor::zeros(2, 6);
        ingest_poi(std::iter::empty(), &g, &mut f);
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn category_keys_normalize() {
        assert_eq!(category_key("CRIMINAL DAMAGE"), category_key("criminal_damage"));
        assert_eq!(
            category_key("Outdoors & Recreation"),
            category_key("outdoors_recreation")
        );
        assert_eq!(
            category_key("Arts and Entertainment"),
            category_key("arts_entertainment")
        );
    }

    #[test]
    fn csv_reader_counts_short_rows() {
        let data = "timestamp,category,community_area\n2019-01-01T01:00:00,theft,0\nbroken\n";
        let (rows, rep) = read_records_from(data.as_bytes(), &["timestamp", "category", "community_area"]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rep.rejected["malformed_row"], 1);
    }

    #[test]
    fn csv_reader_requires_columns() {
        let data = "ts,category\n";
        assert!(read_records_from(data.as_bytes(), &["timestamp"]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bin_counts_conserve_accepted_rows(
                hours in proptest::collection::vec((0u32..48, 0u32..60, 0u32..4), 0..60)
            ) {
                let g = graph(3);
                let gr = grid(2);
                let stamps: Vec<(String, String)> = hours
                    .iter()
                    .map(|&(h, m, r)| (
                        format!("2019-01-{:02}T{:02}:{:02}:00", 1 + h / 24, h % 24, m),
                        r.to_string(),
                    ))
                    .collect();
                let (t, rep) = ingest_crimes(
                    stamps.iter().map(|(ts, r)| (ts.as_str(), "theft", r.as_str())),
                    &["theft".into()],
                    &g,
                    gr,
                );
                prop_assert_eq!(t.total(), rep.accepted as f64);
                prop_assert_eq!(rep.accepted + rep.rejected_total(), hours.len());
            }
        }
    }
}
