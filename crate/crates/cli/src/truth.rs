//! `truth`: build a twin, run the hidden truth and emit its observations.
//!
//! Output layout:
//!
//! - `scenario/`: the scenario manifest and assets a DA run may read
//! - `observations/`: gauges, extent masks and `observations.toml`
//! - `truth/`: the generating controls and offsets, kept apart so no
//!   experiment input can refer to them

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use floodlab::io::{save_scenario, write_station_series};
use floodlab::twinlab::{build_truth, extent_observations, generate_gauge_obs, TwinScenario};
use floodlab::uncertainty::CONTROL_NAMES;
use serde::Serialize;

use crate::observations::{write_observations, ObservationSpec};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct TruthPaths {
    pub scenario: PathBuf,
    pub observations: PathBuf,
    pub truth_dir: PathBuf,
}

#[derive(Serialize)]
struct HiddenTruth {
    seed: u64,
    obs_noise: f64,
    flip_prob: f64,
    exclusion_fraction: f64,
    control: BTreeMap<&'static str, f64>,
    bias: BTreeMap<String, f64>,
}

pub fn generate_truth(tw: &TwinScenario, out: &Path) -> Result<TruthPaths, CliError> {
    let scenario = save_scenario(&out.join("scenario"), "twin", &tw.scenario)?;
    let truth = build_truth(tw)?;
    let gauges = generate_gauge_obs(&truth.stations, &tw.sampling_times(), tw.obs_noise, &tw.truth_bias, tw.seed);
    let extents = extent_observations(tw, &truth)?;
    let spec = ObservationSpec {
        provenance: format!("synthetic twin, seed {}", tw.seed),
        event_start: tw.scenario.initial.t,
        event_end: tw.event_end,
        sampling_dt: tw.sampling_dt,
        warmup: tw.warmup,
        gauges: &gauges.records,
        extents: &extents,
    };
    let observations = write_observations(&out.join("observations"), &spec, &tw.scenario.grid)?;

    let truth_dir = out.join("truth");
    write_station_series(&truth_dir.join("stations.csv"), &truth.stations)?;
    let hidden = HiddenTruth {
        seed: tw.seed,
        obs_noise: tw.obs_noise,
        flip_prob: tw.degradation.flip_prob,
        exclusion_fraction: tw.degradation.exclusion_fraction,
        control: CONTROL_NAMES.into_iter().zip(tw.truth_control.to_array()).collect(),
        bias: tw.truth_bias.clone(),
    };
    let path = truth_dir.join("truth.toml");
    let text = toml::to_string_pretty(&hidden).map_err(CliError::runtime)?;
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(TruthPaths { scenario, observations, truth_dir })
}
