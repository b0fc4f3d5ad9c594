//! Synthetic city with planted structure.
//!
//! Regions form clusters of four: one hub and three quiet regions (any
//! remainder joins the last cluster). Each cluster is one parent district.
//! Hubs follow a weekly and daily cycle; a quiet region copies its hub's
//! previous-step count minus a fixed offset, so the hub is the one
//! informative neighbor of every quiet region and each hub is its own.
//! Taxi inflow anticipates the next step's crime cycle (the informative
//! feature); outflow and POI counts are noise.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::ingest::{
    CrimeTensor, FeatureTensor, TimeGrid, DEFAULT_CRIME_CATEGORIES, POI_CATEGORIES, TAXI_INFLOW, TAXI_OUTFLOW,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub regions: usize,
    pub categories: usize,
    pub months: u32,
    pub year: i32,
    pub step_hours: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            regions: 8,
            categories: 2,
            months: 12,
            year: 2019,
            step_hours: 4,
        }
    }
}

/// Weekday multipliers, Monday first.
const WEEKDAY: [f64; 7] = [0.55, 0.75, 0.9, 1.0, 1.25, 1.7, 1.35];
const HUB_BASE: [f64; 4] = [5.0, 4.0, 3.5, 3.0];
const HUB_NOISE: f64 = 1.5;
/// Quiet regions alternate between this offset and one more.
const QUIET_OFFSET: f64 = 5.0;
const POI_MAX: u32 = 3;
const QUIET_NOISE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trip {
    pub pickup_bin: usize,
    pub dropoff_bin: usize,
    pub pickup: usize,
    pub dropoff: usize,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub config: SynthConfig,
    pub graph: RegionGraph,
    pub crimes: CrimeTensor,
    pub features: FeatureTensor,
    /// Dense index of each region's informative neighbor.
    pub informative: Vec<usize>,
    pub hubs: Vec<usize>,
    pub trips: Vec<Trip>,
    /// `poi[i][c]` counts.
    pub poi: Vec<[u32; POI_CATEGORIES.len()]>,
}

fn cluster_layout(n: usize) -> Vec<Vec<usize>> {
    let clusters = n / 4;
    let mut out: Vec<Vec<usize>> = (0..clusters).map(|c| (4 * c..4 * c + 4).collect()).collect();
    out.last_mut().expect("n >= 4").extend(4 * clusters..n);
    out
}

/// Expected hub count at `bin` for category `k`.
pub fn hub_mean(grid: &TimeGrid, bin: usize, k: usize) -> f64 {
    use chrono::Datelike;
    let start = grid.bin_start(bin);
    let hour = start.time().hour_f64() + grid.step_hours as f64 / 2.0;
    let weekday = start.weekday().num_days_from_monday() as usize;
    let daily = 1.0 + 0.6 * (2.0 * PI * (hour - 10.0) / 24.0).sin();
    HUB_BASE[k % HUB_BASE.len()] * WEEKDAY[weekday] * daily
}

trait HourF64 {
    fn hour_f64(&self) -> f64;
}

impl HourF64 for chrono::NaiveTime {
    fn hour_f64(&self) -> f64 {
        use chrono::Timelike;
        self.hour() as f64 + self.minute() as f64 / 60.0
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.regions < 4 {
        return Err(Error::Config("synthetic city needs at least 4 regions".into()));
    }
    if cfg.categories == 0 || cfg.categories > DEFAULT_CRIME_CATEGORIES.len() {
        return Err(Error::Config(format!(
            "synthetic categories must lie in 1..={}",
            DEFAULT_CRIME_CATEGORIES.len()
        )));
    }
    let first = NaiveDate::from_ymd_opt(cfg.year, 1, 1).ok_or_else(|| Error::Config("bad year".into()))?;
    let last = first
        .checked_add_months(chrono::Months::new(cfg.months))
        .ok_or_else(|| Error::Config("bad month count".into()))?;
    let grid = TimeGrid::days(first, last, cfg.step_hours)?;
    let n = cfg.regions;
    let clusters = cluster_layout(n);

    let mut parents = BTreeMap::new();
    let mut edges = Vec::new();
    let mut informative = vec![0; n];
    let mut hubs = Vec::new();
    for (c, members) in clusters.iter().enumerate() {
        let hub = members[0];
        hubs.push(hub);
        let quiets = &members[1..];
        for &m in members {
            parents.insert(m as u32, c as u32);
            informative[m] = hub;
        }
        for &q in quiets {
            edges.push((hub as u32, q as u32));
        }
        if quiets.len() > 1 {
            for w in 0..quiets.len() {
                let (a, b) = (quiets[w], quiets[(w + 1) % quiets.len()]);
                if a != b && !(quiets.len() == 2 && w == 1) {
                    edges.push((a as u32, b as u32));
                }
            }
        }
        if c + 1 < clusters.len() {
            edges.push((members[1] as u32, clusters[c + 1][2] as u32));
        }
    }
    let graph = RegionGraph::build(&edges, &parents)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hub_noise = Normal::new(0.0, HUB_NOISE).expect("valid sd");
    let quiet_noise = Normal::new(0.0, QUIET_NOISE).expect("valid sd");
    let categories: Vec<String> = DEFAULT_CRIME_CATEGORIES[..cfg.categories]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut crimes = CrimeTensor::zeros(categories, n, grid);
    let steps = grid.steps;
    for k in 0..cfg.categories {
        for members in &clusters {
            let hub = members[0];
            let offsets: Vec<f64> = (1..members.len()).map(|q| QUIET_OFFSET + (q % 2) as f64).collect();
            for b in 0..steps {
                let v = (hub_mean(&grid, b, k) + hub_noise.sample(&mut rng)).max(0.0).round();
                let at = crimes.offset(k, hub, b);
                crimes.values[at] = v;
            }
            for (q, &m) in members[1..].iter().enumerate() {
                for b in 0..steps {
                    let prev = if b == 0 { 0.0 } else { crimes.get(k, hub, b - 1) };
                    let v = (prev - offsets[q] + quiet_noise.sample(&mut rng)).round().max(0.0);
                    let at = crimes.offset(k, m, b);
                    crimes.values[at] = v;
                }
            }
        }
    }

    let mut features = FeatureTensor::zeros(n, steps);
    let mut trips = Vec::new();
    for b in 0..steps {
        let ahead = hub_mean(&grid, (b + 1).min(steps - 1), 0) / HUB_BASE[0];
        for i in 0..n {
            let inflow = (1.0 + 2.0 * ahead + rng.random_range(-0.5..0.5)).round().max(0.0) as usize;
            for _ in 0..inflow {
                let pickup = rng.random_range(0..n);
                trips.push(Trip {
                    pickup_bin: b,
                    dropoff_bin: b,
                    pickup,
                    dropoff: i,
                });
            }
        }
    }
    for t in &trips {
        let o = features.offset(TAXI_OUTFLOW, t.pickup, t.pickup_bin);
        features.values[o] += 1.0;
        let o = features.offset(TAXI_INFLOW, t.dropoff, t.dropoff_bin);
        features.values[o] += 1.0;
    }
    let mut poi = Vec::with_capacity(n);
    for i in 0..n {
        let counts: [u32; POI_CATEGORIES.len()] = std::array::from_fn(|_| rng.random_range(0..POI_MAX));
        for (c, &v) in counts.iter().enumerate() {
            let start = features.offset(2 + c, i, 0);
            features.values[start..start + steps]
                .iter_mut()
                .for_each(|x| *x = v as f64);
        }
        poi.push(counts);
    }

    Ok(SynthData {
        config: cfg.clone(),
        graph,
        crimes,
        features,
        informative,
        hubs,
        trips,
        poi,
    })
}

/// Sample autocorrelation of `xs` at `lag`.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if lag >= n {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = (0..n - lag).map(|t| (xs[t] - mean) * (xs[t + lag] - mean)).sum();
    cov / var
}

/// Files written by [`write_csvs`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthFiles {
    pub crimes: PathBuf,
    pub taxi: PathBuf,
    pub poi: PathBuf,
    pub graph: PathBuf,
    pub informative: PathBuf,
}

const TS: &str = "%Y-%m-%dT%H:%M:%S";

/// Writes the crime, taxi and POI CSVs plus the graph file and the
/// informative-neighbor table into `dir`.
pub fn write_csvs(data: &SynthData, dir: &Path) -> Result<SynthFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SynthFiles {
        crimes: dir.join("crimes.csv"),
        taxi: dir.join("taxi.csv"),
        poi: dir.join("poi.csv"),
        graph: dir.join("city.graph"),
        informative: dir.join("informative.csv"),
    };
    let grid = data.crimes.grid;
    let g = &data.graph;
    let step_minutes = grid.step_hours as i64 * 60;

    let mut w = csv::Writer::from_path(&files.crimes)?;
    w.write_record(["timestamp", "category", "community_area"])?;
    for (k, name) in data.crimes.categories.iter().enumerate() {
        for i in 0..g.len() {
            for b in 0..grid.steps {
                let count = data.crimes.get(k, i, b) as i64;
                for c in 0..count {
                    let ts = grid.bin_start(b) + Duration::minutes((7 * c + 3) % step_minutes);
                    w.write_record([ts.format(TS).to_string(), name.clone(), g.id_of(i).to_string()])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(&files.crimes, e))?;

    let mut w = csv::Writer::from_path(&files.taxi)?;
    w.write_record(["pickup_ts", "dropoff_ts", "pickup_area", "dropoff_area"])?;
    for t in &data.trips {
        let pickup = grid.bin_start(t.pickup_bin) + Duration::minutes(step_minutes / 6);
        let dropoff = grid.bin_start(t.dropoff_bin) + Duration::minutes(step_minutes / 2);
        w.write_record([
            pickup.format(TS).to_string(),
            dropoff.format(TS).to_string(),
            g.id_of(t.pickup).to_string(),
            g.id_of(t.dropoff).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&files.taxi, e))?;

    let mut w = csv::Writer::from_path(&files.poi)?;
    w.write_record(["community_area", "poi_category"])?;
    for (i, counts) in data.poi.iter().enumerate() {
        for (c, &v) in counts.iter().enumerate() {
            for _ in 0..v {
                w.write_record([g.id_of(i).to_string(), POI_CATEGORIES[c].to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&files.poi, e))?;

    std::fs::write(&files.graph, g.to_text()).map_err(|e| Error::io(&files.graph, e))?;

    let mut w = csv::Writer::from_path(&files.informative)?;
    w.write_record(["community_area", "informative_neighbor", "hub"])?;
    for i in 0..g.len() {
        w.write_record([
            g.id_of(i).to_string(),
            g.id_of(data.informative[i]).to_string(),
            (data.hubs.contains(&i) as u8).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&files.informative, e))?;
    Ok(files)
}

/// Reads an informative-neighbor table back as dense indices.
pub fn read_informative(path: &Path, graph: &RegionGraph) -> Result<Vec<usize>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = vec![usize::MAX; graph.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |s: &str| -> Result<usize> {
            let id: u32 = s.trim().parse().map_err(|_| Error::Format {
                what: "informative table",
                detail: format!("bad id {s:?}"),
            })?;
            graph.index_of(id)
        };
        out[parse(&rec[0])?] = parse(&rec[1])?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{read_crime_csv, read_poi_csv, read_taxi_csv};

    fn small() -> SynthConfig {
        SynthConfig {
            regions: 6,
            months: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn layout_and_graph() {
        let d = generate(&SynthConfig::default()).unwrap();
        assert_eq!(d.graph.len(), 8);
        assert_eq!(d.graph.parent_count(), 2);
        assert!(d.graph.is_connected());
        assert_eq!(d.hubs, vec![0, 4]);
        for i in 0..8 {
            let hub = d.informative[i];
            assert!(d.graph.neighborhood_of(i).contains(&hub));
        }
        assert_eq!(d.crimes.steps(), 365 * 6);
    }

    #[test]
    fn remainder_joins_last_cluster() {
        let d = generate(&small()).unwrap();
        assert_eq!(d.hubs, vec![0]);
        assert!(d.informative.iter().all(|&h| h == 0));
        assert!(generate(&SynthConfig { regions: 3, ..small() }).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.crimes, b.crimes);
        assert_eq!(a.features, b.features);
        let c = generate(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.crimes, c.crimes);
    }

    #[test]
    fn weekly_period_recoverable() {
        let d = generate(&SynthConfig::default()).unwrap();
        let m = d.crimes.grid.steps_per_day();
        for &hub in &d.hubs {
            let xs = d.crimes.series(0, hub);
            let weekly = autocorrelation(xs, 7 * m);
            for day in 1..7 {
                assert!(weekly > autocorrelation(xs, day * m), "hub {hub} lag {day}d");
            }
        }
    }

    #[test]
    fn quiet_regions_track_hub() {
        let d = generate(&SynthConfig::default()).unwrap();
        let hub = d.crimes.series(0, 0);
        let quiet = d.crimes.series(0, 1);
        let shifted: Vec<f64> = hub[..hub.len() - 1].to_vec();
        let lagged = &quiet[1..];
        let mean_abs = shifted
            .iter()
            .zip(lagged)
            .map(|(h, q)| (h - QUIET_OFFSET - 1.0).max(0.0) - q)
            .map(f64::abs)
            .sum::<f64>()
            / lagged.len() as f64;
        assert!(mean_abs < 0.2, "{mean_abs}");
    }

    #[test]
    fn csv_round_trip_through_ingest() {
        let d = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_csvs(&d, dir.path()).unwrap();
        let graph = RegionGraph::load(&files.graph).unwrap();
        assert_eq!(graph, d.graph);
        let grid = d.crimes.grid;
        let (crimes, report) = read_crime_csv(&files.crimes, &d.crimes.categories, &graph, grid).unwrap();
        assert_eq!(report.rejected_total(), 0);
        assert_eq!(crimes, d.crimes);
        let mut features = FeatureTensor::zeros(graph.len(), grid.steps);
        read_taxi_csv(&files.taxi, &graph, grid, &mut features).unwrap();
        read_poi_csv(&files.poi, &graph, &mut features).unwrap();
        assert_eq!(features, d.features);
        assert_eq!(read_informative(&files.informative, &graph).unwrap(), d.informative);
    }
}
