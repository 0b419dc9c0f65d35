use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ensure_parent, IoError};
use crate::enkf::{BiasTable, ForecastRow, ObsRecord, StationSeries, TimeSeries};
use crate::swe::{Hydrograph, RatingCurve};
use crate::uncertainty::{ControlVector, CONTROL_NAMES};

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.to_path_buf(), source }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

/// Like `write_rows` but emits the header even when there are no rows.
fn write_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), IoError> {
    ensure_parent(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

#[derive(Serialize, Deserialize)]
struct QRow {
    t_s: f64,
    q_m3s: f64,
}

#[derive(Serialize, Deserialize)]
struct StageRow {
    stage_m: f64,
    q_m3s: f64,
}

pub fn write_hydrograph(path: &Path, q: &Hydrograph) -> Result<(), IoError> {
    write_rows(path, q.samples().map(|(t_s, q_m3s)| QRow { t_s, q_m3s }))
}

pub fn read_hydrograph(path: &Path) -> Result<Hydrograph, IoError> {
    let rows: Vec<QRow> = read_rows(path)?;
    Hydrograph::new(rows.into_iter().map(|r| (r.t_s, r.q_m3s)).collect())
        .map_err(|e| IoError::Parse { path: path.to_path_buf(), msg: e.to_string() })
}

pub fn write_rating_curve(path: &Path, rc: &RatingCurve) -> Result<(), IoError> {
    write_rows(path, rc.samples().map(|(stage_m, q_m3s)| StageRow { stage_m, q_m3s }))
}

pub fn read_rating_curve(path: &Path) -> Result<RatingCurve, IoError> {
    let rows: Vec<StageRow> = read_rows(path)?;
    RatingCurve::new(rows.into_iter().map(|r| (r.stage_m, r.q_m3s)).collect())
        .map_err(|e| IoError::Parse { path: path.to_path_buf(), msg: e.to_string() })
}

#[derive(Serialize, Deserialize)]
struct GaugeRow {
    station: String,
    t_s: f64,
    value_m: f64,
}

pub fn write_gauges(path: &Path, records: &[ObsRecord]) -> Result<(), IoError> {
    let rows: Vec<GaugeRow> = records
        .iter()
        .map(|r| GaugeRow { station: r.station.clone(), t_s: r.t, value_m: r.value })
        .collect();
    write_with_header(path, &["station", "t_s", "value_m"], &rows)
}

pub fn read_gauges(path: &Path) -> Result<Vec<ObsRecord>, IoError> {
    let rows: Vec<GaugeRow> = read_rows(path)?;
    Ok(rows.into_iter().map(|r| ObsRecord { station: r.station, t: r.t_s, value: r.value_m }).collect())
}

#[derive(Serialize, Deserialize)]
struct BiasRow {
    station: String,
    bias_m: f64,
}

pub fn write_bias(path: &Path, bias: &BiasTable) -> Result<(), IoError> {
    write_rows(path, bias.iter().map(|(s, &b)| BiasRow { station: s.clone(), bias_m: b }))
}

pub fn read_bias(path: &Path) -> Result<BiasTable, IoError> {
    let rows: Vec<BiasRow> = read_rows(path)?;
    Ok(rows.into_iter().map(|r| (r.station, r.bias_m)).collect())
}

#[derive(Serialize, Deserialize)]
struct SeriesRow {
    station: String,
    t_s: f64,
    z_m: f64,
}

pub fn write_station_series(path: &Path, series: &StationSeries) -> Result<(), IoError> {
    let rows: Vec<SeriesRow> = series
        .iter()
        .flat_map(|(name, ts)| {
            ts.t.iter().zip(&ts.z).map(move |(&t_s, &z_m)| SeriesRow { station: name.clone(), t_s, z_m })
        })
        .collect();
    write_with_header(path, &["station", "t_s", "z_m"], &rows)
}

pub fn read_station_series(path: &Path) -> Result<StationSeries, IoError> {
    let rows: Vec<SeriesRow> = read_rows(path)?;
    let mut out = StationSeries::new();
    for r in rows {
        let ts: &mut TimeSeries = out.entry(r.station).or_default();
        ts.t.push(r.t_s);
        ts.z.push(r.z_m);
    }
    Ok(out)
}

/// One ensemble member's controls at one cycle stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRow {
    pub cycle: usize,
    /// `forecast` or `analysis`.
    pub stage: String,
    pub member: usize,
    pub ks0: f64,
    pub ks1: f64,
    pub ks2: f64,
    pub ks3: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ControlRow {
    pub fn new(cycle: usize, stage: &str, member: usize, x: &ControlVector) -> Self {
        Self { cycle, stage: stage.into(), member, ks0: x.ks0, ks1: x.ks1, ks2: x.ks2, ks3: x.ks3, a: x.a, b: x.b, c: x.c }
    }

    pub fn control(&self) -> ControlVector {
        ControlVector { ks0: self.ks0, ks1: self.ks1, ks2: self.ks2, ks3: self.ks3, a: self.a, b: self.b, c: self.c }
    }
}

pub fn write_controls(path: &Path, rows: &[ControlRow]) -> Result<(), IoError> {
    write_rows(path, rows)
}

pub fn read_controls(path: &Path) -> Result<Vec<ControlRow>, IoError> {
    read_rows(path)
}

#[derive(Serialize)]
struct InnovationRow<'a> {
    cycle: usize,
    station: &'a str,
    t_s: f64,
    obs_m: f64,
    sigma_m: f64,
    yf_mean_m: f64,
    innovation_m: f64,
}

/// Per-record observation, error, forecast-mean equivalent and innovation.
pub fn write_innovations(
    path: &Path,
    cycle: usize,
    obs: &[ObsRecord],
    sigma: &[f64],
    yf: &DMatrix<f64>,
) -> Result<(), IoError> {
    let n_e = yf.ncols().max(1) as f64;
    let rows: Vec<InnovationRow> = obs
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let mean = yf.row(k).sum() / n_e;
            InnovationRow {
                cycle,
                station: &r.station,
                t_s: r.t,
                obs_m: r.value,
                sigma_m: sigma[k],
                yf_mean_m: mean,
                innovation_m: r.value - mean,
            }
        })
        .collect();
    write_with_header(path, &["cycle", "station", "t_s", "obs_m", "sigma_m", "yf_mean_m", "innovation_m"], &rows)
}

#[derive(Serialize)]
struct GainRow<'a> {
    cycle: usize,
    control: &'a str,
    obs_index: usize,
    station: &'a str,
    t_s: f64,
    gain: f64,
}

/// Kalman gain in long format, one row per (control, observation).
pub fn write_gain(path: &Path, cycle: usize, gain: &DMatrix<f64>, obs: &[ObsRecord]) -> Result<(), IoError> {
    let mut rows = Vec::with_capacity(gain.len());
    for (i, name) in CONTROL_NAMES.iter().enumerate().take(gain.nrows()) {
        for (k, r) in obs.iter().enumerate().take(gain.ncols()) {
            rows.push(GainRow { cycle, control: name, obs_index: k, station: &r.station, t_s: r.t, gain: gain[(i, k)] });
        }
    }
    write_with_header(path, &["cycle", "control", "obs_index", "station", "t_s", "gain"], &rows)
}

#[derive(Serialize, Deserialize)]
struct ForecastCsv {
    station: String,
    lead_s: f64,
    t: f64,
    z_mean: f64,
    z_std: f64,
}

pub fn write_forecast(path: &Path, rows: &[ForecastRow]) -> Result<(), IoError> {
    let rows: Vec<ForecastCsv> = rows
        .iter()
        .map(|r| ForecastCsv { station: r.station.clone(), lead_s: r.lead_s, t: r.t, z_mean: r.z_mean, z_std: r.z_std })
        .collect();
    write_with_header(path, &["station", "lead_s", "t", "z_mean", "z_std"], &rows)
}

pub fn read_forecast(path: &Path) -> Result<Vec<ForecastRow>, IoError> {
    let rows: Vec<ForecastCsv> = read_rows(path)?;
    Ok(rows
        .into_iter()
        .map(|r| ForecastRow { station: r.station, lead_s: r.lead_s, t: r.t, z_mean: r.z_mean, z_std: r.z_std })
        .collect())
}

/// One score; `value` is `NA` when the score is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub experiment: String,
    /// Evaluation time in seconds, or `event` for whole-event scores.
    pub time: String,
    pub metric: String,
    pub value: String,
}

impl ScoreRow {
    pub fn new(experiment: &str, time: impl Into<String>, metric: impl Into<String>, value: Option<f64>) -> Self {
        Self {
            experiment: experiment.into(),
            time: time.into(),
            metric: metric.into(),
            value: crate::metrics::format_score(value),
        }
    }

    pub fn number(&self) -> Option<f64> {
        self.value.parse().ok()
    }
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<(), IoError> {
    write_with_header(path, &["experiment", "time", "metric", "value"], rows)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>, IoError> {
    read_rows(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hydrograph_and_rating_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let q = Hydrograph::new(vec![(0.0, 1.0 / 3.0), (900.0, 2.5), (1800.0, 1e-9)]).unwrap();
        let p = dir.path().join("q.csv");
        write_hydrograph(&p, &q).unwrap();
        assert_eq!(read_hydrograph(&p).unwrap(), q);
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("t_s,q_m3s\n"));

        let rc = RatingCurve::new(vec![(0.0, 0.0), (2.0, 100.0)]).unwrap();
        let p = dir.path().join("rc.csv");
        write_rating_curve(&p, &rc).unwrap();
        assert_eq!(read_rating_curve(&p).unwrap(), rc);
    }

    #[test]
    fn gauges_bias_series_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![
            ObsRecord { station: "a".into(), t: 0.0, value: 1.25 },
            ObsRecord { station: "b".into(), t: 900.0, value: -0.1 },
        ];
        let p = dir.path().join("g.csv");
        write_gauges(&p, &recs).unwrap();
        assert_eq!(read_gauges(&p).unwrap(), recs);
        write_gauges(&p, &[]).unwrap();
        assert!(read_gauges(&p).unwrap().is_empty());

        let bias: BiasTable = [("a".to_string(), 0.72), ("b".to_string(), -0.23)].into();
        let p = dir.path().join("bias.csv");
        write_bias(&p, &bias).unwrap();
        assert_eq!(read_bias(&p).unwrap(), bias);

        let series: StationSeries = [("a".to_string(), TimeSeries::new(vec![0.0, 1.0], vec![0.1, 0.2]))].into();
        let p = dir.path().join("s.csv");
        write_station_series(&p, &series).unwrap();
        assert_eq!(read_station_series(&p).unwrap(), series);
    }

    #[test]
    fn scores_keep_na() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            ScoreRow::new("FR1", "event", "rmse@a", Some(0.5)),
            ScoreRow::new("FR1", "3600", "csi", None),
        ];
        let p = dir.path().join("scores.csv");
        write_scores(&p, &rows).unwrap();
        let back = read_scores(&p).unwrap();
        assert_eq!(back, rows);
        assert_eq!(back[1].value, "NA");
        assert_eq!(back[1].number(), None);
        assert_eq!(back[0].number(), Some(0.5));
    }

    #[test]
    fn controls_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let x = ControlVector::default();
        let rows = vec![ControlRow::new(1, "forecast", 0, &x), ControlRow::new(1, "analysis", 0, &x)];
        let p = dir.path().join("c.csv");
        write_controls(&p, &rows).unwrap();
        let back = read_controls(&p).unwrap();
        assert_eq!(back, rows);
        assert_eq!(back[0].control(), x);
    }
}
