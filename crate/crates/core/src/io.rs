//! Config files, result CSVs, the run manifest and impulse-response dumps.
//!
//! The config file is TOML-style `key = value` with typed lists. Every key
//! is optional; omitted keys keep the built-in defaults. Unknown keys are
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{ReceiverTemplate, ScenarioConfig, SweepResult, TrialResult, TrialScene};
use crate::geometry::{ApConfig, Face, Room, Vec3};
use crate::noise::NoiseModel;
use crate::noma::{InterferenceMode, LadderDirection};

pub const TRIALS_CSV: &str = "trials.csv";
pub const FIG3_CSV: &str = "fig3.csv";
pub const FIG4_CSV: &str = "fig4.csv";
pub const MANIFEST: &str = "manifest.toml";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const CIR_DIR: &str = "cir";

pub const TRIALS_HEADER: [&str; 7] = ["alpha", "n_users", "trial", "user_id", "sinr", "rate_bps", "ber"];
pub const FIG3_HEADER: [&str; 4] = ["alpha", "n_users", "mean_sum_rate_bps", "std_sum_rate_bps"];
pub const FIG4_HEADER: [&str; 4] = ["alpha", "n_users", "mean_ber", "std_ber"];

/// On-disk config schema. Field names are the config keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub room_length: Option<f64>,
    pub room_width: Option<f64>,
    pub room_height: Option<f64>,
    pub reflectivity_walls: Option<f64>,
    pub reflectivity_ceiling: Option<f64>,
    pub reflectivity_floor: Option<f64>,
    pub ap_positions: Option<Vec<[f64; 3]>>,
    pub ap_power_w: Option<f64>,
    pub beam_divergence_rad: Option<f64>,
    pub quantum_efficiency: Option<f64>,
    pub rx_area_m2: Option<f64>,
    pub rx_fov_deg: Option<f64>,
    pub responsivity: Option<f64>,
    pub rx_height: Option<f64>,
    pub time_bin_s: Option<f64>,
    pub reflections: Option<u8>,
    pub element_side_first: Option<f64>,
    pub element_side_second: Option<f64>,
    pub reflecting_faces: Option<Vec<Face>>,
    pub los_grid: Option<usize>,
    pub footprint_grid: Option<usize>,
    pub alpha: Option<Vec<f64>>,
    pub users: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub n_symbols: Option<u64>,
    pub interference_mode: Option<InterferenceMode>,
    pub ladder_direction: Option<LadderDirection>,
    pub background_current_a: Option<f64>,
    pub temperature_k: Option<f64>,
    pub load_resistance_ohm: Option<f64>,
    pub bandwidth_hz: Option<f64>,
}

impl ConfigFile {
    /// Overlay the present keys onto `base`.
    pub fn apply(&self, base: &ScenarioConfig) -> Result<ScenarioConfig> {
        let mut c = base.clone();
        let room = &mut c.room;
        set(&mut room.length, self.room_length);
        set(&mut room.width, self.room_width);
        set(&mut room.height, self.room_height);
        set(&mut room.reflectivity_walls, self.reflectivity_walls);
        set(&mut room.reflectivity_ceiling, self.reflectivity_ceiling);
        set(&mut room.reflectivity_floor, self.reflectivity_floor);

        let template = c.aps.first().copied().unwrap_or(ApConfig {
            position: Vec3::ZERO,
            peak_power: 1e-3,
            beam_divergence: 2.1e-3,
            quantum_efficiency: 1.0,
        });
        if let Some(ps) = &self.ap_positions {
            c.aps = ps
                .iter()
                .map(|&p| ApConfig {
                    position: p.into(),
                    ..template
                })
                .collect();
        }
        for ap in &mut c.aps {
            set(&mut ap.peak_power, self.ap_power_w);
            set(&mut ap.beam_divergence, self.beam_divergence_rad);
            set(&mut ap.quantum_efficiency, self.quantum_efficiency);
        }
        let rx = &mut c.receiver;
        set(&mut rx.area, self.rx_area_m2);
        set(&mut rx.fov_deg, self.rx_fov_deg);
        set(&mut rx.responsivity, self.responsivity);
        set(&mut c.rx_height, self.rx_height);
        set(&mut c.channel.bin_duration, self.time_bin_s);
        set(&mut c.channel.reflections, self.reflections);
        set(&mut c.element_side_first, self.element_side_first);
        set(&mut c.element_side_second, self.element_side_second);
        if let Some(f) = &self.reflecting_faces {
            c.reflecting_faces = f.clone();
        }
        set(&mut c.channel.los_grid, self.los_grid);
        set(&mut c.channel.footprint_grid, self.footprint_grid);
        if let Some(a) = &self.alpha {
            c.alphas = a.clone();
        }
        if let Some(u) = &self.users {
            c.user_counts = u.clone();
        }
        set(&mut c.trials, self.trials);
        set(&mut c.master_seed, self.seed);
        set(&mut c.n_symbols, self.n_symbols);
        set(&mut c.interference_mode, self.interference_mode);
        set(&mut c.ladder_direction, self.ladder_direction);
        let n = &mut c.noise;
        set(&mut n.background_current, self.background_current_a);
        set(&mut n.temperature, self.temperature_k);
        set(&mut n.load_resistance, self.load_resistance_ohm);
        set(&mut n.bandwidth, self.bandwidth_hz);
        Ok(c)
    }

    /// Every key filled from a complete config.
    pub fn snapshot(c: &ScenarioConfig) -> Result<Self> {
        let first = c
            .aps
            .first()
            .ok_or_else(|| Error::config_key("ap_positions", "no access points"))?;
        if c.aps.iter().any(|a| {
            a.peak_power != first.peak_power
                || a.beam_divergence != first.beam_divergence
                || a.quantum_efficiency != first.quantum_efficiency
        }) {
            return Err(Error::config_key(
                "ap_positions",
                "per-AP power, divergence and efficiency differ; the file format holds one value",
            ));
        }
        let Room {
            length,
            width,
            height,
            reflectivity_walls,
            reflectivity_ceiling,
            reflectivity_floor,
        } = c.room;
        let ReceiverTemplate {
            area,
            fov_deg,
            responsivity,
        } = c.receiver;
        let NoiseModel {
            background_current,
            temperature,
            load_resistance,
            bandwidth,
        } = c.noise;
        Ok(ConfigFile {
            room_length: Some(length),
            room_width: Some(width),
            room_height: Some(height),
            reflectivity_walls: Some(reflectivity_walls),
            reflectivity_ceiling: Some(reflectivity_ceiling),
            reflectivity_floor: Some(reflectivity_floor),
            ap_positions: Some(c.aps.iter().map(|a| a.position.into()).collect()),
            ap_power_w: Some(first.peak_power),
            beam_divergence_rad: Some(first.beam_divergence),
            quantum_efficiency: Some(first.quantum_efficiency),
            rx_area_m2: Some(area),
            rx_fov_deg: Some(fov_deg),
            responsivity: Some(responsivity),
            rx_height: Some(c.rx_height),
            time_bin_s: Some(c.channel.bin_duration),
            reflections: Some(c.channel.reflections),
            element_side_first: Some(c.element_side_first),
            element_side_second: Some(c.element_side_second),
            reflecting_faces: Some(c.reflecting_faces.clone()),
            los_grid: Some(c.channel.los_grid),
            footprint_grid: Some(c.channel.footprint_grid),
            alpha: Some(c.alphas.clone()),
            users: Some(c.user_counts.clone()),
            trials: Some(c.trials),
            seed: Some(c.master_seed),
            n_symbols: Some(c.n_symbols),
            interference_mode: Some(c.interference_mode),
            ladder_direction: Some(c.ladder_direction),
            background_current_a: Some(background_current),
            temperature_k: Some(temperature),
            load_resistance_ohm: Some(load_resistance),
            bandwidth_hz: Some(bandwidth),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }
}

fn set<T: Copy>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

/// 1-based line of the first `key = ...` assignment in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
        .map(|i| i + 1)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parse a config text on top of the built-in defaults and validate it.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        let key = e
            .message()
            .split('`')
            .nth(1)
            .filter(|k| key_line(text, k).is_some())
            .map(str::to_string);
        Error::Config {
            key,
            line,
            message: e.message().trim().to_string(),
        }
    })?;
    let config = file.apply(&ScenarioConfig::default())?;
    config.validate().map_err(|e| locate(e, text))?;
    Ok(config)
}

/// Attach the config-file line to a keyed config error.
fn locate(err: Error, text: &str) -> Error {
    match err {
        Error::Config {
            key: Some(key),
            line: None,
            message,
        } => {
            let line = key_line(text, &key);
            Error::Config {
                key: Some(key),
                line,
                message,
            }
        }
        other => other,
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Numbers in shortest round-trip scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub master_seed: u64,
    pub started: String,
    pub finished: String,
    pub workers: usize,
    /// Emitted files, relative to the output directory.
    pub files: Vec<String>,
    pub config: ConfigFile,
}

impl RunManifest {
    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let c = self.config.apply(&ScenarioConfig::default())?;
        c.validate()?;
        Ok(c)
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<RunManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Data(format!("{}: {}", path.display(), e.message())))
}

/// Run metadata recorded alongside the results.
#[derive(Debug, Clone)]
pub struct RunInfo {
    pub started: String,
    pub finished: String,
    pub workers: usize,
    /// Impulse-response dumps already written, relative to the output dir.
    pub extra_files: Vec<String>,
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Data(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Data(format!("csv: {e}")))
}

pub fn trials_csv(trials: &[TrialResult]) -> Result<Vec<u8>> {
    let rows = trials.iter().flat_map(|t| {
        t.users.iter().map(move |u| {
            vec![
                fmt_num(t.alpha),
                t.n_users.to_string(),
                t.trial.to_string(),
                u.id.to_string(),
                fmt_num(u.sinr),
                fmt_num(u.rate),
                fmt_num(u.ber),
            ]
        })
    });
    csv_bytes(&TRIALS_HEADER, rows)
}

pub fn fig3_csv(sweep: &SweepResult) -> Result<Vec<u8>> {
    let rows = sweep.cells.iter().map(|c| {
        vec![
            fmt_num(c.alpha),
            c.n_users.to_string(),
            fmt_num(c.mean_sum_rate),
            fmt_num(c.std_sum_rate),
        ]
    });
    csv_bytes(&FIG3_HEADER, rows)
}

pub fn fig4_csv(sweep: &SweepResult) -> Result<Vec<u8>> {
    let rows = sweep.cells.iter().map(|c| {
        vec![
            fmt_num(c.alpha),
            c.n_users.to_string(),
            fmt_num(c.mean_ber),
            fmt_num(c.std_ber),
        ]
    });
    csv_bytes(&FIG4_HEADER, rows)
}

/// Write all result files into `out_dir`. Files are staged under temporary
/// names and renamed at the end; on failure every staged or renamed file
/// is removed.
pub fn write_results(
    sweep: &SweepResult,
    trials: &[TrialResult],
    config: &ScenarioConfig,
    info: &RunInfo,
    out_dir: impl AsRef<Path>,
) -> Result<RunManifest> {
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let snapshot = ConfigFile::snapshot(config)?;
    let mut files = vec![
        TRIALS_CSV.to_string(),
        FIG3_CSV.to_string(),
        FIG4_CSV.to_string(),
        CONFIG_SNAPSHOT.to_string(),
    ];
    files.extend(info.extra_files.iter().cloned());
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.master_seed,
        started: info.started.clone(),
        finished: info.finished.clone(),
        workers: info.workers,
        files,
        config: snapshot.clone(),
    };
    let manifest_text = toml::to_string(&manifest).map_err(|e| Error::Data(format!("manifest: {e}")))?;
    let contents: Vec<(&str, Vec<u8>)> = vec![
        (TRIALS_CSV, trials_csv(trials)?),
        (FIG3_CSV, fig3_csv(sweep)?),
        (FIG4_CSV, fig4_csv(sweep)?),
        (CONFIG_SNAPSHOT, snapshot.to_toml()?.into_bytes()),
        (MANIFEST, manifest_text.into_bytes()),
    ];

    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let cleanup = |paths: &[(PathBuf, PathBuf)], renamed: usize| {
        for (k, (tmp, dst)) in paths.iter().enumerate() {
            let _ = fs::remove_file(if k < renamed { dst } else { tmp });
        }
    };
    for (name, bytes) in &contents {
        let dst = out.join(name);
        let tmp = out.join(format!(".{name}.partial"));
        if let Err(e) = fs::write(&tmp, bytes) {
            cleanup(&staged, 0);
            let _ = fs::remove_file(&tmp);
            return Err(Error::io(&tmp, e));
        }
        staged.push((tmp, dst));
    }
    for (k, (tmp, dst)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, dst) {
            cleanup(&staged, k);
            return Err(Error::io(dst, e));
        }
    }
    Ok(manifest)
}

/// Relative path of the impulse-response dump for one (AP, user) pair.
pub fn cir_file_name(n_users: usize, trial: usize, ap: usize, user: usize) -> String {
    format!("{CIR_DIR}/n{n_users}_t{trial}_ap{ap}_user{user}.txt")
}

/// Write every AP-to-user impulse response of a scene. Returns the
/// relative file names.
pub fn write_cir_dump(out_dir: &Path, n_users: usize, trial: usize, scene: &TrialScene) -> Result<Vec<String>> {
    let Some(cirs) = &scene.cirs else {
        return Ok(Vec::new());
    };
    let dir = out_dir.join(CIR_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut names = Vec::new();
    for (l, row) in cirs.iter().enumerate() {
        for (j, cir) in row.iter().enumerate() {
            let name = cir_file_name(n_users, trial, l, j);
            let path = out_dir.join(&name);
            fs::write(&path, cir.to_dump_string()).map_err(|e| Error::io(&path, e))?;
            names.push(name);
        }
    }
    Ok(names)
}
