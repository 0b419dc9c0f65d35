use floodlab::enkf::{estimate_bias, station_series};
use floodlab::io::{load_scenario, read_ascii_grid, save_scenario, IoError};
use floodlab::twinlab::{
    build_truth, default_twin, generate_gauge_obs, peak_time, simulate_event, EventShape,
};
use floodlab::uncertainty::ControlPrior;

#[test]
fn scenario_manifest_roundtrip() {
    let tw = default_twin(EventShape::SinglePeak, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = save_scenario(dir.path(), "twin", &tw.scenario).unwrap();
    let (back, manifest) = load_scenario(&path).unwrap();
    assert_eq!(back, tw.scenario);
    assert_eq!(manifest.stations.len(), 3);
    let bathy = read_ascii_grid(&dir.path().join(&manifest.grid.bathymetry.path)).unwrap();
    assert_eq!(bathy.values, tw.scenario.grid.z_b);
}

#[test]
fn tampered_asset_is_rejected() {
    let tw = default_twin(EventShape::SinglePeak, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = save_scenario(dir.path(), "twin", &tw.scenario).unwrap();
    let q = dir.path().join("hydrograph.csv");
    let mut text = std::fs::read_to_string(&q).unwrap();
    text.push_str("9999999,1\n");
    std::fs::write(&q, text).unwrap();
    assert!(matches!(load_scenario(&path), Err(IoError::HashMismatch { .. })));
}

#[test]
fn truth_with_prior_means_is_the_free_run() {
    let mut tw = default_twin(EventShape::SinglePeak, 2).unwrap();
    tw.truth_control = ControlPrior::default().mean;
    let truth = build_truth(&tw).unwrap();
    let free = simulate_event(&tw, &ControlPrior::default().mean).unwrap();
    assert_eq!(truth, free);
}

#[test]
fn truth_is_reproducible() {
    let tw = default_twin(EventShape::SinglePeak, 3).unwrap();
    assert_eq!(build_truth(&tw).unwrap(), build_truth(&tw).unwrap());
}

fn local_maxima(z: &[f64], min_rise: f64) -> usize {
    // count peaks that stand out by `min_rise` from the preceding trough
    let mut count = 0;
    let mut trough = z[0];
    let mut rising = true;
    let mut top = z[0];
    for &v in &z[1..] {
        if rising {
            if v > top {
                top = v;
            } else if top - v > min_rise && top - trough > min_rise {
                count += 1;
                rising = false;
                trough = v;
            }
        } else if v < trough {
            trough = v;
        } else if v - trough > min_rise {
            rising = true;
            top = v;
        }
    }
    count
}

#[test]
fn double_peak_event_shows_two_maxima() {
    let tw = default_twin(EventShape::DoublePeak, 1).unwrap();
    let truth = build_truth(&tw).unwrap();
    for (name, ts) in &truth.stations {
        assert_eq!(local_maxima(&ts.z, 0.2), 2, "station {name}");
    }
    let single = default_twin(EventShape::SinglePeak, 1).unwrap();
    let truth = build_truth(&single).unwrap();
    assert_eq!(local_maxima(&truth.stations["midstream"].z, 0.2), 1);
}

#[test]
fn perfect_model_bias_recovery() {
    let tw = default_twin(EventShape::SinglePeak, 4).unwrap();
    let truth = build_truth(&tw).unwrap();
    let obs = generate_gauge_obs(&truth.stations, &tw.sampling_times(), 0.0, &tw.truth_bias, tw.seed);
    let bias = estimate_bias(&truth.stations, &obs, (0.0, 86_400.0)).unwrap();
    for (name, expected) in &tw.truth_bias {
        assert!((bias[name] - expected).abs() <= 1e-9, "{name}: {}", bias[name]);
    }
}

#[test]
fn peak_lies_inside_the_event() {
    let tw = default_twin(EventShape::SinglePeak, 1).unwrap();
    let truth = build_truth(&tw).unwrap();
    let t = peak_time(&truth.stations, "midstream").unwrap();
    assert!(t > 86_400.0 && t < tw.event_end);
    // station series are the surface at the gauge cells
    let again = station_series(&truth.trajectory, &tw.scenario.grid);
    assert_eq!(again, truth.stations);
}
