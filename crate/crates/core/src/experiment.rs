//! Randomized multiuser scenarios and the α × user-count sweep.
//!
//! User positions for trial `t` at `n` users come from a substream keyed by
//! `(seed, n, t)` only, so every α value sees the same geometry. The symbol
//! stream for the BER estimate is keyed the same way.

use rand::Rng;
use rayon::prelude::*;

use crate::ber::{simulate_ber, BerSettings};
use crate::channel::{beam_cirs, los_gain, BeamState, ChannelSettings, Cir, ReflectionGrids};
use crate::error::{Error, Result};
use crate::geometry::{discretize_faces, ApConfig, Face, ReceiverConfig, Room, Vec3};
use crate::noise::{noise_variance, NoiseModel};
use crate::noma::{associate, rate, sinr, Association, GainMatrix, InterferenceMode, LadderDirection, NomaAllocation};
use crate::rng::{substream, TAG_POSITIONS, TAG_SYMBOLS};

/// Attempts at drawing a servable set of positions before giving up.
const MAX_REGENERATIONS: u64 = 1000;

/// Receiver parameters shared by every user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverTemplate {
    pub area: f64,
    /// Field-of-view half-angle in degrees.
    pub fov_deg: f64,
    pub responsivity: f64,
}

impl Default for ReceiverTemplate {
    fn default() -> Self {
        ReceiverTemplate {
            area: 1e-4,
            fov_deg: 90.0,
            responsivity: 0.5,
        }
    }
}

impl ReceiverTemplate {
    pub fn at(&self, position: Vec3) -> ReceiverConfig {
        ReceiverConfig {
            position,
            normal: Vec3::Z,
            area: self.area,
            fov_half_angle: self.fov_deg.to_radians(),
            responsivity: self.responsivity,
        }
    }
}

/// Ceiling access-point grid: two rows of four along the room length.
pub fn default_ap_positions() -> Vec<Vec3> {
    [
        (1.0, 1.0),
        (1.0, 3.0),
        (1.0, 5.0),
        (1.0, 7.0),
        (3.0, 1.0),
        (3.0, 3.0),
        (3.0, 5.0),
        (3.0, 7.0),
    ]
    .iter()
    .map(|&(across, along)| Vec3::new(along, across, 3.0))
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub room: Room,
    pub aps: Vec<ApConfig>,
    pub receiver: ReceiverTemplate,
    pub alphas: Vec<f64>,
    pub user_counts: Vec<usize>,
    pub trials: usize,
    pub rx_height: f64,
    pub master_seed: u64,
    pub element_side_first: f64,
    pub element_side_second: f64,
    /// Faces tiled into reflecting elements; spill on other faces is lost.
    pub reflecting_faces: Vec<Face>,
    pub channel: ChannelSettings,
    pub interference_mode: InterferenceMode,
    pub ladder_direction: LadderDirection,
    pub noise: NoiseModel,
    pub n_symbols: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let aps = default_ap_positions()
            .into_iter()
            .map(|p| ApConfig {
                position: p,
                peak_power: 1e-3,
                beam_divergence: 2.1e-3,
                quantum_efficiency: 1.0,
            })
            .collect();
        ScenarioConfig {
            room: Room::default(),
            aps,
            receiver: ReceiverTemplate::default(),
            alphas: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            user_counts: (4..=10).collect(),
            trials: 100,
            rx_height: 1.0,
            master_seed: 1,
            element_side_first: 0.05,
            element_side_second: 0.20,
            reflecting_faces: Face::ALL.to_vec(),
            channel: ChannelSettings::default(),
            interference_mode: InterferenceMode::Full,
            ladder_direction: LadderDirection::WeakFirst,
            noise: NoiseModel::default(),
            n_symbols: 100_000,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        if self.aps.is_empty() {
            return Err(Error::config_key("ap_positions", "at least one access point required"));
        }
        for ap in &self.aps {
            ap.validate()?;
            if !self.room.contains(ap.position) {
                return Err(Error::config_key(
                    "ap_positions",
                    format!("access point {:?} lies outside the room", ap.position),
                ));
            }
        }
        self.receiver.at(Vec3::ZERO).validate()?;
        if self.alphas.is_empty() {
            return Err(Error::config_key("alpha", "at least one value required"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(Error::config_key(
                "alpha",
                format!("values must lie in (0, 1], got {a}"),
            ));
        }
        if self.user_counts.is_empty() || self.user_counts.contains(&0) {
            return Err(Error::config_key("users", "user counts must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::config_key("trials", "must be >= 1"));
        }
        if !(self.rx_height > 0.0 && self.rx_height < self.room.height) {
            return Err(Error::config_key(
                "rx_height",
                format!("must lie in (0, {}), got {}", self.room.height, self.rx_height),
            ));
        }
        let min_dim = self.room.length.min(self.room.width).min(self.room.height);
        for (key, side) in [
            ("element_side_first", self.element_side_first),
            ("element_side_second", self.element_side_second),
        ] {
            if !(side > 0.0 && side <= min_dim) {
                return Err(Error::config_key(
                    key,
                    format!("must lie in (0, {min_dim}], got {side}"),
                ));
            }
        }
        let mut faces = self.reflecting_faces.clone();
        faces.sort();
        faces.dedup();
        if faces.len() != self.reflecting_faces.len() {
            return Err(Error::config_key("reflecting_faces", "faces must not repeat"));
        }
        if !(self.channel.bin_duration.is_finite() && self.channel.bin_duration > 0.0) {
            return Err(Error::config_key("time_bin_s", "must be > 0"));
        }
        if self.channel.reflections > 2 {
            return Err(Error::config_key("reflections", "must be 0, 1 or 2"));
        }
        if self.channel.los_grid == 0 || self.channel.footprint_grid == 0 {
            return Err(Error::config_key("los_grid", "integration grids must be >= 1"));
        }
        self.noise.validate()?;
        if self.n_symbols == 0 {
            return Err(Error::config_key("n_symbols", "must be >= 1"));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::config_key("seed", "must fit in a signed 64-bit integer"));
        }
        Ok(())
    }
}

/// `n` receivers at uniform positions over the floor plan at `rx_height`.
pub fn generate_users<R: Rng>(
    n: usize,
    room: &Room,
    rx_height: f64,
    template: &ReceiverTemplate,
    rng: &mut R,
) -> Result<Vec<ReceiverConfig>> {
    if !(rx_height > 0.0 && rx_height < room.height) {
        return Err(Error::config_key(
            "rx_height",
            format!("must lie in (0, {}), got {rx_height}", room.height),
        ));
    }
    let mut open_unit = || loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    };
    Ok((0..n)
        .map(|_| {
            let x = open_unit() * room.length;
            let y = open_unit() * room.width;
            template.at(Vec3::new(x, y, rx_height))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserResult {
    pub id: usize,
    pub serving_ap: usize,
    /// 1 = decoded first.
    pub decode_rank: usize,
    pub sinr: f64,
    pub rate: f64,
    pub ber: f64,
    pub bit_errors: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub alpha: f64,
    pub n_users: usize,
    pub trial: usize,
    pub users: Vec<UserResult>,
    pub sum_rate: f64,
    pub mean_ber: f64,
    /// Position draws discarded because some user was unservable.
    pub regenerations: u64,
}

/// Per-trial channel state, independent of α.
#[derive(Debug, Clone)]
pub struct TrialScene {
    pub receivers: Vec<ReceiverConfig>,
    pub association: Association,
    pub gains: GainMatrix,
    /// `[ap][user]` impulse responses normalized to AP peak power, when kept.
    pub cirs: Option<Vec<Vec<Cir>>>,
    pub regenerations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub alpha: f64,
    pub n_users: usize,
    pub trials: usize,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    pub mean_ber: f64,
    pub std_ber: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    /// Cells in α-major order, then user count, as listed in the config.
    pub cells: Vec<CellStats>,
}

impl SweepResult {
    pub fn cell(&self, alpha: f64, n_users: usize) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.alpha == alpha && c.n_users == n_users)
    }
}

/// Mean and sample standard deviation, summed in order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn cell_stats(alpha: f64, n_users: usize, trials: &[TrialResult]) -> CellStats {
    let rates: Vec<f64> = trials.iter().map(|t| t.sum_rate).collect();
    let bers: Vec<f64> = trials.iter().map(|t| t.mean_ber).collect();
    let (mean_sum_rate, std_sum_rate) = mean_std(&rates);
    let (mean_ber, std_ber) = mean_std(&bers);
    CellStats {
        alpha,
        n_users,
        trials: trials.len(),
        mean_sum_rate,
        std_sum_rate,
        mean_ber,
        std_ber,
    }
}

/// Aggregate and per-trial results of one (α, n) cell.
type Cell = (CellStats, Vec<TrialResult>);

/// A validated scenario with its reflection grids built once.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: ScenarioConfig,
    grids: ReflectionGrids,
}

impl Simulator {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let grids = ReflectionGrids {
            first: discretize_faces(&config.room, config.element_side_first, &config.reflecting_faces)?,
            second: discretize_faces(&config.room, config.element_side_second, &config.reflecting_faces)?,
        };
        Ok(Simulator { config, grids })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn grids(&self) -> &ReflectionGrids {
        &self.grids
    }

    /// Positions used by trial `t` at `n` users on the given draw attempt.
    /// Positions are drawn in sequence from a stream keyed by trial and
    /// attempt only, so the n-user set of a trial is a prefix of every
    /// larger set of the same trial.
    pub fn user_positions(&self, n: usize, trial: usize, attempt: u64) -> Result<Vec<ReceiverConfig>> {
        let mut rng = substream(self.config.master_seed, &[TAG_POSITIONS, trial as u64, attempt]);
        generate_users(
            n,
            &self.config.room,
            self.config.rx_height,
            &self.config.receiver,
            &mut rng,
        )
    }

    /// Gain of a full-power beam from each AP aimed at each receiver.
    pub fn candidate_gains(&self, receivers: &[ReceiverConfig]) -> Result<GainMatrix> {
        let mut g = GainMatrix::zeros(self.config.aps.len(), receivers.len());
        for (l, ap) in self.config.aps.iter().enumerate() {
            for (j, rx) in receivers.iter().enumerate() {
                let beam = BeamState::new(*ap, rx.position, 1.0)?;
                g.set(l, j, los_gain(&beam, rx, self.config.channel.los_grid).value());
            }
        }
        Ok(g)
    }

    /// Channel state for a given set of receivers: association, beams and
    /// the AP-to-user gains including reflections.
    pub fn scene_for(&self, receivers: Vec<ReceiverConfig>, keep_cirs: bool) -> Result<TrialScene> {
        let candidates = self.candidate_gains(&receivers)?;
        let association = associate(&candidates)?;
        let cfg = &self.config;
        let n_users = receivers.len();
        let mut gains = GainMatrix::zeros(cfg.aps.len(), n_users);
        let mut cirs: Vec<Vec<Cir>> = Vec::new();
        for (l, ap) in cfg.aps.iter().enumerate() {
            let members = &association.members[l];
            let mut ap_cirs = vec![Cir::new(cfg.channel.bin_duration)?; n_users];
            if !members.is_empty() {
                let fraction = 1.0 / members.len() as f64;
                for &target in members {
                    let beam = BeamState::new(*ap, receivers[target].position, fraction)?;
                    let per_rx = beam_cirs(&beam, &cfg.room, &self.grids, &receivers, &cfg.channel)?;
                    for (acc, cir) in ap_cirs.iter_mut().zip(&per_rx) {
                        acc.accumulate(cir, fraction)?;
                    }
                }
            }
            for (j, cir) in ap_cirs.iter().enumerate() {
                gains.set(l, j, cir.dc_gain().value().clamp(0.0, 1.0));
            }
            if keep_cirs {
                cirs.push(ap_cirs);
            }
        }
        Ok(TrialScene {
            receivers,
            association,
            gains,
            cirs: keep_cirs.then_some(cirs),
            regenerations: 0,
        })
    }

    /// Draw positions for `(n, trial)` and build the scene, redrawing when a
    /// user cannot be served.
    pub fn scene(&self, n: usize, trial: usize, keep_cirs: bool) -> Result<TrialScene> {
        for attempt in 0..MAX_REGENERATIONS {
            let receivers = self.user_positions(n, trial, attempt)?;
            match self.scene_for(receivers, keep_cirs) {
                Ok(mut scene) => {
                    scene.regenerations = attempt;
                    return Ok(scene);
                }
                Err(Error::UnservableUsers(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Parameter(format!(
            "no servable user placement found for n = {n}, trial {trial} after {MAX_REGENERATIONS} draws"
        )))
    }

    fn symbol_seed(&self, n: usize, trial: usize) -> u64 {
        substream(self.config.master_seed, &[TAG_SYMBOLS, n as u64, trial as u64]).random()
    }

    /// NOMA allocation, rates and BER for one α on a built scene.
    pub fn evaluate(&self, scene: &TrialScene, alpha: f64, trial: usize) -> Result<TrialResult> {
        let cfg = &self.config;
        let n_users = scene.receivers.len();
        let csi = scene.gains.csi_sums();
        let alloc = NomaAllocation::build(&scene.association, &csi, alpha, &cfg.aps, cfg.ladder_direction)?;
        let responsivity = cfg.receiver.responsivity;
        let variances = (0..n_users)
            .map(|j| {
                let mut p_rx = 0.0;
                for (l, ap) in alloc.aps.iter().enumerate() {
                    p_rx += ap.intensity * scene.gains.get(l, j)?;
                }
                noise_variance(&cfg.noise, responsivity, p_rx)
            })
            .collect::<Result<Vec<_>>>()?;
        let ber_settings = BerSettings {
            mode: cfg.interference_mode,
            ..BerSettings::new(cfg.n_symbols, self.symbol_seed(n_users, trial))
        };
        let bers = simulate_ber(&alloc, &scene.gains, &variances, responsivity, &ber_settings)?;
        let users = (0..n_users)
            .map(|j| {
                let s = sinr(
                    j,
                    &alloc,
                    &scene.gains,
                    variances[j],
                    responsivity,
                    cfg.interference_mode,
                )?;
                Ok(UserResult {
                    id: j,
                    serving_ap: alloc.serving[j],
                    decode_rank: alloc.rank[j] + 1,
                    sinr: s,
                    rate: rate(s, cfg.noise.bandwidth),
                    ber: bers[j].ber,
                    bit_errors: bers[j].errors,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sum_rate = users.iter().map(|u| u.rate).sum();
        let mean_ber = users.iter().map(|u| u.ber).sum::<f64>() / n_users as f64;
        Ok(TrialResult {
            alpha,
            n_users,
            trial,
            users,
            sum_rate,
            mean_ber,
            regenerations: scene.regenerations,
        })
    }

    pub fn run_trial(&self, alpha: f64, n_users: usize, trial: usize) -> Result<TrialResult> {
        let scene = self.scene(n_users, trial, false)?;
        self.evaluate(&scene, alpha, trial)
    }

    /// Full sweep on a pool of `workers` threads. `progress` sees each cell
    /// as it completes; `on_scene` sees every built scene (with impulse
    /// responses when `keep_cirs` is set).
    pub fn run_sweep<P, S>(
        &self,
        workers: usize,
        keep_cirs: bool,
        mut progress: P,
        on_scene: S,
    ) -> Result<(SweepResult, Vec<TrialResult>)>
    where
        P: FnMut(&CellStats) + Send,
        S: Fn(usize, usize, &TrialScene) -> Result<()> + Sync,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
        let cfg = &self.config;
        // results[a][n] holds the trials of one cell
        let mut results: Vec<Vec<Option<Cell>>> = vec![vec![None; cfg.user_counts.len()]; cfg.alphas.len()];
        pool.install(|| -> Result<()> {
            for (ni, &n) in cfg.user_counts.iter().enumerate() {
                let scenes = (0..cfg.trials)
                    .into_par_iter()
                    .map(|t| {
                        let scene = self.scene(n, t, keep_cirs)?;
                        on_scene(n, t, &scene)?;
                        Ok(scene)
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (ai, &alpha) in cfg.alphas.iter().enumerate() {
                    let trials = scenes
                        .par_iter()
                        .enumerate()
                        .map(|(t, s)| self.evaluate(s, alpha, t))
                        .collect::<Result<Vec<_>>>()?;
                    let stats = cell_stats(alpha, n, &trials);
                    progress(&stats);
                    results[ai][ni] = Some((stats, trials));
                }
            }
            Ok(())
        })?;
        let mut sweep = SweepResult::default();
        let mut all = Vec::with_capacity(cfg.alphas.len() * cfg.user_counts.len() * cfg.trials);
        for row in results {
            for (stats, trials) in row.into_iter().flatten() {
                sweep.cells.push(stats);
                all.extend(trials);
            }
        }
        Ok((sweep, all))
    }
}
