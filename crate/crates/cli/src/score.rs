//! `score`: station, flood-extent and forecast scores of an experiment directory.
//!
//! Metric names in `scores.csv`:
//!
//! - `rmse@<station>`, `maae@<station>`, `nse@<station>`, `n_obs@<station>` with time `event`
//! - `csi`, `f1`, `kappa` with the overpass time in seconds
//! - `forecast_rmse@<lead>s` with time `event`, over all stations
//!
//! Undefined scores are written as `NA`.

use std::collections::BTreeMap;
use std::path::Path;

use floodlab::enkf::ForecastRow;
use floodlab::io::{read_ascii_grid, read_bias, read_forecast, read_station_series, write_ascii_grid, write_scores, AsciiGrid, ScoreRow};
use floodlab::metrics::{contingency, csi, f_beta, kappa, maae, nse, rmse, ContingencyClass, KappaMode, SeriesPair};

use crate::experiment::{mask_file, FileEntry, RunManifest};
use crate::observations::{grid_to_mask, load_observations};
use crate::CliError;

const LEGEND: &str = "contingency/legend.csv";

fn write_legend(dir: &Path) -> Result<(), CliError> {
    let mut s = String::from("code,class,rgb\n");
    for code in 0..=4 {
        let c = ContingencyClass::from_code(code).expect("known code");
        let [r, g, b] = c.color();
        s.push_str(&format!("{code},{},#{r:02x}{g:02x}{b:02x}\n", c.label()));
    }
    let path = dir.join(LEGEND);
    std::fs::write(&path, s).map_err(|e| CliError::io(&path, e))
}

fn forecast_rows(dir: &Path) -> Result<Vec<ForecastRow>, CliError> {
    let cycles = dir.join("cycles");
    if !cycles.exists() {
        return Ok(Vec::new());
    }
    let mut names: Vec<_> = std::fs::read_dir(&cycles)
        .map_err(|e| CliError::io(&cycles, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(&cycles, e))?;
    names.sort();
    let mut rows = Vec::new();
    for d in names {
        rows.extend(read_forecast(&d.join("forecast.csv"))?);
    }
    Ok(rows)
}

/// Score `dir` against `observations` (default: the bundle it was run with).
pub fn score_experiment(dir: &Path, observations: Option<&Path>) -> Result<Vec<ScoreRow>, CliError> {
    let mut manifest = RunManifest::load(dir)?;
    let cfg = &manifest.config;
    let obs_path = observations.unwrap_or(&cfg.observations).to_path_buf();
    let obs = load_observations(&obs_path)?;
    let name = manifest.experiment.clone();

    let mut missing = Vec::new();
    let stations_path = dir.join("stations.csv");
    let bias_path = dir.join("bias.csv");
    if !stations_path.exists() {
        missing.push(stations_path.display().to_string());
    }
    if cfg.bias_correction && !bias_path.exists() {
        missing.push(bias_path.display().to_string());
    }
    if !missing.is_empty() {
        return Err(CliError::runtime(format!("missing artifacts: {}", missing.join(", "))));
    }
    let series = read_station_series(&stations_path)?;
    let bias = if cfg.bias_correction { read_bias(&bias_path)? } else { BTreeMap::new() };
    let offset = |station: &str| bias.get(station).copied().unwrap_or(0.0);
    let [from, to] = cfg.score_window.unwrap_or([obs.manifest.event_start, obs.manifest.event_end]);
    let mut rows = Vec::new();

    // station scores over the event
    for (station, ts) in &series {
        let (mut m, mut o) = (Vec::new(), Vec::new());
        for r in obs.gauges.iter().filter(|r| &r.station == station && r.t >= from && r.t <= to) {
            if let Some(z) = ts.interp(r.t) {
                m.push(z + offset(station));
                o.push(r.value);
            }
        }
        let pair = SeriesPair::from_values(&m, &o)?;
        rows.push(ScoreRow::new(&name, "event", format!("rmse@{station}"), rmse(&pair).ok()));
        rows.push(ScoreRow::new(&name, "event", format!("maae@{station}"), maae(&pair).ok()));
        rows.push(ScoreRow::new(&name, "event", format!("nse@{station}"), nse(&pair).ok()));
        rows.push(ScoreRow::new(&name, "event", format!("n_obs@{station}"), Some(m.len() as f64)));
    }

    // extent scores at every overpass the model covers
    let span = series.values().filter_map(|ts| Some((*ts.t.first()?, *ts.t.last()?))).next();
    let cdir = dir.join("contingency");
    if cdir.exists() {
        std::fs::remove_dir_all(&cdir).map_err(|e| CliError::io(&cdir, e))?;
    }
    std::fs::create_dir_all(&cdir).map_err(|e| CliError::io(&cdir, e))?;
    write_legend(dir)?;
    for (t, obs_mask) in &obs.extents {
        let time = format!("{t}");
        let covered = span.is_some_and(|(a, b)| *t >= a && *t <= b);
        let path = dir.join(mask_file(*t));
        let scores = if covered {
            if !path.exists() {
                missing.push(path.display().to_string());
                continue;
            }
            let raster = read_ascii_grid(&path)?;
            let (counts, classes) = contingency(&grid_to_mask(&raster), obs_mask, None)?;
            let codes = classes.iter().map(|c| f64::from(c.code())).collect();
            let out = AsciiGrid { values: codes, ..raster };
            write_ascii_grid(&cdir.join(format!("contingency_{t}.asc")), &out)?;
            [csi(&counts), f_beta(&counts, 1.0), kappa(&counts, KappaMode::Paper)]
        } else {
            [None; 3]
        };
        for (metric, v) in ["csi", "f1", "kappa"].into_iter().zip(scores) {
            rows.push(ScoreRow::new(&name, time.clone(), metric, v));
        }
    }
    if !missing.is_empty() {
        return Err(CliError::runtime(format!("missing artifacts: {}", missing.join(", "))));
    }

    // forecast error by lead
    let lookup: BTreeMap<(&str, u64), f64> = obs
        .gauges
        .iter()
        .filter(|r| r.t >= from && r.t <= to)
        .map(|r| ((r.station.as_str(), r.t.to_bits()), r.value))
        .collect();
    let mut by_lead: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in forecast_rows(dir)? {
        let e = by_lead.entry(r.lead_s.to_bits()).or_insert((r.lead_s, Vec::new(), Vec::new()));
        if let Some(&o) = lookup.get(&(r.station.as_str(), r.t.to_bits())) {
            e.1.push(r.z_mean + offset(&r.station));
            e.2.push(o);
        }
    }
    let mut leads: Vec<_> = by_lead.into_values().collect();
    leads.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (lead, m, o) in leads {
        let pair = SeriesPair::from_values(&m, &o)?;
        rows.push(ScoreRow::new(&name, "event", format!("forecast_rmse@{lead}s"), rmse(&pair).ok()));
    }

    write_scores(&dir.join("scores.csv"), &rows)?;
    manifest.scored_against =
        Some(FileEntry { path: obs_path.display().to_string(), sha256: floodlab::io::file_sha256(&obs_path)?, role: None });
    manifest.save(dir)?;
    Ok(rows)
}

/// Value of one metric at one time, if present and defined.
pub fn lookup(rows: &[ScoreRow], time: &str, metric: &str) -> Option<f64> {
    rows.iter().find(|r| r.time == time && r.metric == metric).and_then(ScoreRow::number)
}
