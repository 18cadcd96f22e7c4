//! Bit error rate under superposed on-off keying with successive
//! interference cancellation.
//!
//! Every user carries one OOK bit per symbol slot; each AP emits the sum of
//! its users' amplitudes for the bits that are on. A receiver walks its AP's
//! decoding order: at each stage it picks the nearest point of the composite
//! constellation still left, keeps that point's bit for the current stage,
//! subtracts the decided contribution and moves on until it reaches its own
//! bit. Decisions, not the true bits, are subtracted.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noma::{GainMatrix, InterferenceMode, NomaAllocation};
use crate::rng::{substream, TAG_SYMBOLS};

/// Composite-constellation size limit, as a number of superposed users.
pub const MAX_USERS_PER_AP: usize = 20;

const Z95: f64 = 1.959_963_984_540_054;

/// Gaussian tail probability `Q(x) = ½·erfc(x/√2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Gaussian-approximation BER `Q(√SINR)`.
pub fn analytic_ber(sinr: f64) -> f64 {
    q_function(sinr.max(0.0).sqrt())
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    if errors == 0 {
        return (0.0, Z95 * Z95 / (n + Z95 * Z95));
    }
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerEstimate {
    pub user: usize,
    pub errors: u64,
    pub symbols: u64,
    pub ber: f64,
    pub ci95_halfwidth: f64,
}

impl BerEstimate {
    pub fn new(user: usize, errors: u64, symbols: u64) -> Self {
        let (lo, hi) = wilson_interval(errors, symbols);
        BerEstimate {
            user,
            errors,
            symbols,
            ber: errors as f64 / symbols as f64,
            ci95_halfwidth: (hi - lo) / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerSettings {
    pub n_symbols: u64,
    pub seed: u64,
    pub mode: InterferenceMode,
    /// Subtract the true bits instead of the decisions. Test use only.
    pub genie_sic: bool,
    pub block_size: u64,
}

impl BerSettings {
    pub fn new(n_symbols: u64, seed: u64) -> Self {
        BerSettings {
            n_symbols,
            seed,
            mode: InterferenceMode::Full,
            genie_sic: false,
            block_size: 8192,
        }
    }
}

/// Sorted composite constellation for one SIC stage with the value of the
/// stage bit attached to each point. Exactly coincident points are merged.
#[derive(Debug, Clone)]
struct Stage {
    points: Vec<f64>,
    has_zero: Vec<bool>,
}

impl Stage {
    fn build(amps: &[f64]) -> Self {
        let m = amps.len();
        let mut raw: Vec<(f64, bool)> = (0..1usize << m)
            .map(|mask| {
                let mut v = 0.0;
                for (k, &a) in amps.iter().enumerate() {
                    if mask >> k & 1 == 1 {
                        v += a;
                    }
                }
                (v, mask & 1 == 0)
            })
            .collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<f64> = Vec::with_capacity(raw.len());
        let mut has_zero: Vec<bool> = Vec::with_capacity(raw.len());
        for (v, zero) in raw {
            if points.last() == Some(&v) {
                *has_zero.last_mut().unwrap() |= zero;
            } else {
                points.push(v);
                has_zero.push(zero);
            }
        }
        Stage { points, has_zero }
    }

    /// Bit of the nearest point; ties resolve to 0.
    fn decide(&self, y: f64) -> bool {
        let i = self.points.partition_point(|&p| p < y);
        let right = (i < self.points.len()).then(|| (self.points[i] - y, i));
        let left = (i > 0).then(|| (y - self.points[i - 1], i - 1));
        let zero = match (left, right) {
            (Some((dl, il)), Some((dr, ir))) => {
                if dl < dr {
                    self.has_zero[il]
                } else if dr < dl {
                    self.has_zero[ir]
                } else {
                    self.has_zero[il] || self.has_zero[ir]
                }
            }
            (Some((_, k)), None) | (None, Some((_, k))) => self.has_zero[k],
            (None, None) => true,
        };
        !zero
    }
}

struct UserDecoder {
    ap: usize,
    rank: usize,
    /// Received current amplitude per rank of the serving AP.
    own: Vec<f64>,
    stages: Vec<Stage>,
    /// `(ap, R·H)` for other active APs.
    leak: Vec<(usize, f64)>,
    sigma: f64,
}

/// Monte Carlo BER of every user over `n_symbols` symbol slots.
pub fn simulate_ber(
    alloc: &NomaAllocation,
    gains: &GainMatrix,
    noise_variances: &[f64],
    responsivity: f64,
    settings: &BerSettings,
) -> Result<Vec<BerEstimate>> {
    if settings.n_symbols == 0 {
        return Err(Error::Parameter("n_symbols must be >= 1".into()));
    }
    let n_users = alloc.n_users();
    if noise_variances.len() != n_users {
        return Err(Error::Data("one noise variance per user required".into()));
    }
    let decoders = (0..n_users)
        .map(|j| {
            let l = alloc.serving[j];
            let ap = &alloc.aps[l];
            if ap.order.len() > MAX_USERS_PER_AP {
                return Err(Error::Parameter(format!(
                    "AP {l} serves {} users; at most {MAX_USERS_PER_AP} supported",
                    ap.order.len()
                )));
            }
            let coef = responsivity * gains.get(l, j)?;
            let own: Vec<f64> = ap.amplitudes.iter().map(|a| a * coef).collect();
            let rank = alloc.rank[j];
            let stages = (0..=rank).map(|s| Stage::build(&own[s..])).collect();
            let mut leak = Vec::new();
            if settings.mode == InterferenceMode::Full {
                for (other, other_ap) in alloc.aps.iter().enumerate() {
                    let g = gains.get(other, j)?;
                    if other != l && other_ap.intensity > 0.0 && g > 0.0 {
                        leak.push((other, responsivity * g));
                    }
                }
            }
            let var = noise_variances[j];
            if !(var >= 0.0 && var.is_finite()) {
                return Err(Error::Parameter(format!("noise variance must be >= 0, got {var}")));
            }
            Ok(UserDecoder {
                ap: l,
                rank,
                own,
                stages,
                leak,
                sigma: var.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let block = settings.block_size.max(1);
    let n_blocks = settings.n_symbols.div_ceil(block);
    let counts = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let len = block.min(settings.n_symbols - b * block);
            simulate_block(alloc, &decoders, settings, b, len)
        })
        .reduce(
            || vec![0u64; n_users],
            |mut acc, c| {
                for (a, x) in acc.iter_mut().zip(c) {
                    *a += x;
                }
                acc
            },
        );
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(j, e)| BerEstimate::new(j, e, settings.n_symbols))
        .collect())
}

fn simulate_block(
    alloc: &NomaAllocation,
    decoders: &[UserDecoder],
    settings: &BerSettings,
    block: u64,
    len: u64,
) -> Vec<u64> {
    let n_users = decoders.len();
    let mut rng = substream(settings.seed, &[TAG_SYMBOLS, block]);
    let mut bits = vec![false; n_users];
    let mut emitted = vec![0.0; alloc.aps.len()];
    let mut errors = vec![0u64; n_users];
    for _ in 0..len {
        for b in bits.iter_mut() {
            *b = rng.random::<bool>();
        }
        for (z, ap) in emitted.iter_mut().zip(&alloc.aps) {
            *z = ap
                .order
                .iter()
                .zip(&ap.amplitudes)
                .filter(|(&u, _)| bits[u])
                .map(|(_, a)| a)
                .sum();
        }
        for (j, dec) in decoders.iter().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            let order = &alloc.aps[dec.ap].order;
            let mut y = 0.0;
            for (&u, &a) in order.iter().zip(&dec.own) {
                if bits[u] {
                    y += a;
                }
            }
            for &(l, c) in &dec.leak {
                y += c * emitted[l];
            }
            y += dec.sigma * noise;
            for s in 0..dec.rank {
                let sent = if settings.genie_sic {
                    bits[order[s]]
                } else {
                    dec.stages[s].decide(y)
                };
                if sent {
                    y -= dec.own[s];
                }
            }
            if dec.stages[dec.rank].decide(y) != bits[j] {
                errors[j] += 1;
            }
        }
    }
    errors
}
