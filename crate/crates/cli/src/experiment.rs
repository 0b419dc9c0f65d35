//! `run` and `diagnose-bias`.
//!
//! Experiment output tree:
//!
//! ```text
//! manifest.json                 config echo, seeds, input and output hashes
//! stations.csv                  model (ensemble-mean) levels, no bias added
//! stations_std.csv              ensemble spread (da)
//! bias.csv                      offsets used (bias_correction = true)
//! masks/mask_<t>.asc            model flood mask at each overpass
//! contingency/                  per-overpass contingency rasters and legend.txt
//! cycles/cycle_NNN/             controls, sampling_sigma, innovations, gain,
//!                               forecast and restarts/ (da)
//! scores.csv
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use floodlab::enkf::{
    estimate_bias, propagate, run_assimilation, station_series, AssimilationRun, BiasTable, CycleWindow, DaContext,
    EnkfConfig, StationSeries,
};
use floodlab::io::{
    file_sha256, load_scenario, read_bias, read_station_series, write_ascii_grid, write_bias, write_controls,
    write_forecast, write_gain, write_innovations, write_restart, write_station_series, ControlRow,
};
use floodlab::metrics::{rasterize_flood_mask, FloodMask, WET_THRESHOLD};
use floodlab::seeding;
use floodlab::twinlab::warm_start;
use floodlab::uncertainty::CONTROL_NAMES;
use floodlab::Scenario;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode};
use crate::observations::{load_observations, mask_to_grid, Observations};
use crate::score::score_experiment;
use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's seed.
    pub seed: Option<u64>,
    /// Worker threads for ensemble members; 0 lets the pool decide.
    pub jobs: usize,
    /// Overrides the config's output directory.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    /// Labels of the random streams derived from the master seed.
    pub streams: Vec<String>,
}

/// `manifest.json` of an experiment directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub inputs: Vec<FileEntry>,
    /// Observation bundle the scores were computed against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scored_against: Option<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

pub const MANIFEST: &str = "manifest.json";

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
    }

    /// Re-hash every file under `dir` and write the manifest.
    pub fn save(&mut self, dir: &Path) -> Result<(), CliError> {
        self.outputs = list_outputs(dir)?;
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self).map_err(CliError::runtime)? + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

fn list_outputs(dir: &Path) -> Result<Vec<FileEntry>, CliError> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> Result<(), CliError> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::io(dir, e))?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out)?;
            } else if p != root.join(MANIFEST) {
                let rel = p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
                out.push(FileEntry { path: rel, sha256: file_sha256(&p)?, role: None });
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

fn input(path: &Path, role: &str) -> Result<FileEntry, CliError> {
    Ok(FileEntry { path: path.display().to_string(), sha256: file_sha256(path)?, role: Some(role.into()) })
}

/// Start from an empty directory; a previous run (recognised by its
/// manifest) is replaced, anything else is refused.
fn prepare_output(dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        let empty = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?.next().is_none();
        if !empty {
            if !dir.join(MANIFEST).exists() {
                return Err(CliError::Config(format!(
                    "output: {} is not empty and holds no previous run",
                    dir.display()
                )));
            }
            std::fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn mask_file(t: f64) -> String {
    format!("masks/mask_{t}.asc")
}

struct Outcome {
    stations: StationSeries,
    spread: Option<StationSeries>,
    masks: Vec<(f64, FloodMask)>,
    da: Option<AssimilationRun>,
}

fn free_run(scenario: &Scenario, obs: &Observations, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let control = cfg.prior().mean;
    let start = warm_start(scenario, &control, obs.manifest.warmup)?;
    let overpasses = obs.overpass_times();
    let mut outputs = obs.sampling_times();
    outputs.extend(&overpasses);
    let traj = propagate(scenario, &control, &start, obs.manifest.event_end, &outputs)?;
    let masks = overpasses
        .iter()
        .map(|&t| (t, rasterize_flood_mask(traj.state_at(t).expect("saved overpass"), &scenario.grid, WET_THRESHOLD)))
        .collect();
    Ok(Outcome { stations: station_series(&traj, &scenario.grid), spread: None, masks, da: None })
}

fn assimilate(
    scenario: &Scenario,
    obs: &Observations,
    cfg: &ExperimentConfig,
    seed: u64,
    bias: Option<&BiasTable>,
) -> Result<Outcome, CliError> {
    let e = cfg.enkf.as_ref().expect("validated da config");
    let t0 = obs.manifest.event_start;
    let mut windows = CycleWindow::schedule(t0 + e.spinup, obs.manifest.event_end, e.window, e.t_shift, e.spinup)?;
    if let Some(n) = e.max_cycles {
        windows.truncate(n);
    }
    let enkf = EnkfConfig {
        n_e: e.n_e,
        tau: e.tau,
        lambda1: e.lambda1,
        lambda2: e.lambda2,
        bias_mode: bias.is_some(),
        seed,
        forecast_leads: e.forecast_leads.clone(),
        ..EnkfConfig::default()
    };
    let gauges = obs.gauge_set(e.tau)?.with_bias(bias.cloned().unwrap_or_default());
    let prior = cfg.prior();
    let ctx = DaContext { scenario, prior: &prior, obs: &gauges, config: &enkf };
    let overpasses = obs.overpass_times();
    let run = run_assimilation(&ctx, &windows, &scenario.initial, &overpasses, |_, _| Ok(()))?;
    let (mean, std) = run.reanalysis();
    let masks = overpasses
        .iter()
        .filter_map(|&t| run.snapshot(t, &overpasses).map(|s| (t, rasterize_flood_mask(s, &scenario.grid, WET_THRESHOLD))))
        .collect();
    Ok(Outcome { stations: mean, spread: Some(std), masks, da: Some(run) })
}

fn write_cycles(dir: &Path, run: &AssimilationRun, scenario: &Scenario) -> Result<(), CliError> {
    for (out, rows) in run.cycles.iter().zip(&run.forecasts) {
        let rec = &out.record;
        let c = rec.cycle;
        let cdir = dir.join(format!("cycles/cycle_{c:03}"));
        let mut controls: Vec<ControlRow> =
            rec.forecast.members.iter().enumerate().map(|(i, x)| ControlRow::new(c, "forecast", i, x)).collect();
        controls.extend(rec.analysis.iter().enumerate().map(|(i, x)| ControlRow::new(c, "analysis", i, x)));
        write_controls(&cdir.join("controls.csv"), &controls)?;

        let path = cdir.join("sampling_sigma.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        let mut put = |rec: [String; 2]| w.write_record(&rec).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())));
        put(["control".into(), "sigma".into()])?;
        for (name, s) in CONTROL_NAMES.iter().zip(rec.forecast.sampling_sigma) {
            put([name.to_string(), s.to_string()])?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;

        write_innovations(&cdir.join("innovations.csv"), c, &rec.obs, &rec.obs_sigma, &rec.yf)?;
        write_gain(&cdir.join("gain.csv"), c, &rec.gain, &rec.obs)?;
        write_forecast(&cdir.join("forecast.csv"), rows)?;
        for (i, state) in out.next_restarts.iter().enumerate() {
            write_restart(&cdir.join(format!("restarts/member_{i:03}.restart")), state, &scenario.grid)?;
        }
    }
    Ok(())
}

/// Execute one experiment end to end and score it.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let dir = opts
        .output
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::Config("output: no output directory in config or on the command line".into()))?;

    let (scenario, _) = load_scenario(&cfg.scenario)?;
    let obs = load_observations(&cfg.observations)?;
    if scenario.initial.t != obs.manifest.event_start {
        return Err(CliError::runtime(format!(
            "scenario starts at {} s but observations at {} s",
            scenario.initial.t, obs.manifest.event_start
        )));
    }
    let bias = cfg.bias_file.as_deref().map(read_bias).transpose()?;

    let mut inputs = vec![input(&cfg.scenario, "scenario")?];
    inputs.extend(obs.files.iter().map(|(p, h)| FileEntry {
        path: p.display().to_string(),
        sha256: h.clone(),
        role: Some("observations".into()),
    }));
    if let Some(p) = &cfg.bias_file {
        inputs.push(input(p, "bias")?);
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build().map_err(CliError::runtime)?;
    let outcome = pool.install(|| match cfg.mode {
        Mode::FreeRun => free_run(&scenario, &obs, cfg),
        Mode::Da => assimilate(&scenario, &obs, cfg, seed, bias.as_ref()),
    })?;

    prepare_output(&dir)?;
    write_station_series(&dir.join("stations.csv"), &outcome.stations)?;
    if let Some(s) = &outcome.spread {
        write_station_series(&dir.join("stations_std.csv"), s)?;
    }
    if let Some(b) = &bias {
        write_bias(&dir.join("bias.csv"), b)?;
    }
    for (t, m) in &outcome.masks {
        write_ascii_grid(&dir.join(mask_file(*t)), &mask_to_grid(m, &scenario.grid))?;
    }
    if let Some(run) = &outcome.da {
        write_cycles(&dir, run, &scenario)?;
    }

    let streams = match cfg.mode {
        Mode::FreeRun => vec![],
        Mode::Da => vec![seeding::PRIOR, seeding::RESAMPLE, seeding::OBS_PERTURBATION],
    };
    let mut manifest = RunManifest {
        experiment: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.echo(),
        seeds: Seeds { master: seed, streams: streams.into_iter().map(String::from).collect() },
        inputs,
        scored_against: None,
        outputs: vec![],
    };
    manifest.save(&dir)?;
    score_experiment(&dir, None)?;
    RunManifest::load(&dir)
}

/// Per-station `mean(obs - model)` of a free run over `[t0, t1]`; writes `output`.
pub fn diagnose_bias(
    free_run_dir: &Path,
    observations: &Path,
    window: (f64, f64),
    output: &Path,
) -> Result<BTreeMap<String, f64>, CliError> {
    let manifest = RunManifest::load(free_run_dir)?;
    if manifest.config.mode != Mode::FreeRun {
        return Err(CliError::Config(format!("{}: bias is diagnosed from a free run", free_run_dir.display())));
    }
    let series = read_station_series(&free_run_dir.join("stations.csv"))?;
    let obs = load_observations(observations)?;
    let bias = estimate_bias(&series, &obs.gauge_set(0.0)?, window)?;
    write_bias(output, &bias)?;
    Ok(bias)
}
