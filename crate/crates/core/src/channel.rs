//! Channel impulse responses from a steered Gaussian beam to a receiver:
//! line of sight, plus first- and second-order diffuse reflections off the
//! discretized room surfaces.
//!
//! A beam travels from its access point toward an aim point and stops at the
//! first thing it meets: a detector aperture or a room surface. The power
//! landing on a surface is found by tracing a fan of rays whose weights are
//! exact Gaussian cell probabilities, then binned onto the element grid.
//! Each lit element re-radiates from the power-weighted centroid of the spot
//! it received.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{cos_angle, ApConfig, ElementGrid, Face, ReceiverConfig, Room, Vec3};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Time-binned channel impulse response. Bin `k` of `bins` covers delays
/// `[(offset + k)·dt, (offset + k + 1)·dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    bin_duration: f64,
    offset: usize,
    bins: Vec<f64>,
}

impl Cir {
    pub fn new(bin_duration: f64) -> Result<Self> {
        if !(bin_duration.is_finite() && bin_duration > 0.0) {
            return Err(Error::config_key(
                "time_bin_s",
                format!("bin duration must be > 0, got {bin_duration}"),
            ));
        }
        Ok(Cir {
            bin_duration,
            offset: 0,
            bins: Vec::new(),
        })
    }

    /// Build from explicit bins starting at absolute bin `offset`.
    pub fn from_bins(bin_duration: f64, offset: usize, bins: Vec<f64>) -> Result<Self> {
        let mut cir = Cir::new(bin_duration)?;
        if bins.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::Data("impulse response bins must be finite and >= 0".into()));
        }
        cir.offset = offset;
        cir.bins = bins;
        Ok(cir)
    }

    pub fn bin_duration(&self) -> f64 {
        self.bin_duration
    }

    pub fn start_delay(&self) -> f64 {
        self.offset as f64 * self.bin_duration
    }

    /// Absolute index of the first stored bin.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    /// Absolute index of the first bin holding non-zero power.
    pub fn first_occupied_bin(&self) -> Option<usize> {
        self.bins.iter().position(|&b| b > 0.0).map(|k| k + self.offset)
    }

    pub fn bin_index(&self, delay: f64) -> usize {
        (delay / self.bin_duration).floor().max(0.0) as usize
    }

    /// Add `gain` arriving after `delay` seconds.
    pub fn add(&mut self, delay: f64, gain: f64) {
        if gain == 0.0 {
            return;
        }
        debug_assert!(gain > 0.0 && gain.is_finite());
        let idx = self.bin_index(delay);
        self.ensure(idx);
        self.bins[idx - self.offset] += gain;
    }

    fn ensure(&mut self, idx: usize) {
        if self.bins.is_empty() {
            self.offset = idx;
            self.bins.push(0.0);
        } else if idx < self.offset {
            let grow = self.offset - idx;
            let mut bins = vec![0.0; grow];
            bins.append(&mut self.bins);
            self.bins = bins;
            self.offset = idx;
        } else if idx >= self.offset + self.bins.len() {
            self.bins.resize(idx - self.offset + 1, 0.0);
        }
    }

    /// Bin-wise `self += scale·other`.
    pub fn accumulate(&mut self, other: &Cir, scale: f64) -> Result<()> {
        if self.bin_duration != other.bin_duration {
            return Err(Error::config(format!(
                "mismatched bin durations {} and {}",
                self.bin_duration, other.bin_duration
            )));
        }
        if other.bins.is_empty() || scale == 0.0 {
            return Ok(());
        }
        self.ensure(other.offset);
        self.ensure(other.offset + other.bins.len() - 1);
        for (k, &b) in other.bins.iter().enumerate() {
            self.bins[other.offset + k - self.offset] += scale * b;
        }
        Ok(())
    }

    pub fn dc_gain(&self) -> ChannelGain {
        ChannelGain(self.bins.iter().sum())
    }

    /// Text dump: a header line naming the fields, a line with
    /// `bin_duration_s start_delay_s n_bins`, then one gain per line.
    pub fn to_dump_string(&self) -> String {
        let mut s = String::with_capacity(24 * (self.bins.len() + 2));
        s.push_str("# bin_duration_s start_delay_s n_bins\n");
        s.push_str(&format!(
            "{:e} {:e} {}\n",
            self.bin_duration,
            self.start_delay(),
            self.bins.len()
        ));
        for b in &self.bins {
            s.push_str(&format!("{b:e}\n"));
        }
        s
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Data("empty CIR dump".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Data(format!("malformed CIR header `{header}`")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Data(format!("`{s}`: {e}")));
        let dt = parse(fields[0])?;
        let start = parse(fields[1])?;
        let n: usize = fields[2]
            .parse()
            .map_err(|e| Error::Data(format!("`{}`: {e}", fields[2])))?;
        let bins = lines.map(|l| parse(l.trim())).collect::<Result<Vec<_>>>()?;
        if bins.len() != n {
            return Err(Error::Data(format!("expected {n} bins, found {}", bins.len())));
        }
        Cir::from_bins(dt, (start / dt).round() as usize, bins)
    }
}

/// DC channel gain `H`, the fraction of transmitted optical power captured.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct ChannelGain(pub f64);

impl ChannelGain {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// One steered beam of an access point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamState {
    pub source: ApConfig,
    pub aim_point: Vec3,
    pub power_fraction: f64,
}

impl BeamState {
    pub fn new(source: ApConfig, aim_point: Vec3, power_fraction: f64) -> Result<Self> {
        if !(power_fraction > 0.0 && power_fraction <= 1.0) {
            return Err(Error::Parameter(format!(
                "beam power fraction must lie in (0, 1], got {power_fraction}"
            )));
        }
        if (aim_point - source.position).normalized().is_none() {
            return Err(Error::Geometry("beam aim point coincides with its source".into()));
        }
        Ok(BeamState {
            source,
            aim_point,
            power_fraction,
        })
    }

    pub fn power(&self) -> f64 {
        self.power_fraction * self.source.peak_power
    }

    pub fn axis(&self) -> Vec3 {
        (self.aim_point - self.source.position)
            .normalized()
            .expect("validated at construction")
    }

    /// 1/e² beam radius at axial distance `d`.
    pub fn radius_at(&self, d: f64) -> f64 {
        d * self.source.beam_divergence
    }

    /// Axial distance and squared transverse distance of `p` from the axis.
    fn axial(&self, p: Vec3) -> (f64, f64) {
        let rel = p - self.source.position;
        let d = rel.dot(self.axis());
        (d, (rel.norm_squared() - d * d).max(0.0))
    }
}

/// Irradiance (W/m² on the transverse plane) of a Gaussian beam whose 1/e²
/// half-angle equals the beam divergence.
pub fn beam_intensity(beam: &BeamState, point: Vec3) -> f64 {
    let (d, r2) = beam.axial(point);
    if d <= 0.0 {
        return 0.0;
    }
    let w = beam.radius_at(d);
    2.0 * beam.power() / (PI * w * w) * (-2.0 * r2 / (w * w)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSettings {
    pub bin_duration: f64,
    /// Highest reflection order included (0, 1 or 2).
    pub reflections: u8,
    /// Sub-grid side count for integrating the beam over a detector.
    pub los_grid: usize,
    /// Ray fan side count used to trace the beam spot onto surfaces.
    pub footprint_grid: usize,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        ChannelSettings {
            bin_duration: 1e-11,
            reflections: 2,
            los_grid: 64,
            footprint_grid: 64,
        }
    }
}

/// Fraction of the beam power collected by the detector, integrating the
/// Gaussian irradiance times the incidence cosine over the square aperture
/// with an `n × n` midpoint rule.
pub fn los_gain(beam: &BeamState, rx: &ReceiverConfig, n: usize) -> ChannelGain {
    let src = beam.source.position;
    let (d, r2) = beam.axial(rx.position);
    if d <= 0.0 {
        return ChannelGain(0.0);
    }
    let half = rx.half_side();
    let reach = 6.0 * beam.radius_at(d + 2.0 * half) + 2.0 * half;
    if r2 > reach * reach {
        return ChannelGain(0.0);
    }
    let cos_fov = rx.fov_half_angle.cos();
    let (u, v) = rx.aperture_axes();
    let n = n.max(1);
    let step = 2.0 * half / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let a = -half + (i as f64 + 0.5) * step;
        let mut row = 0.0;
        for j in 0..n {
            let b = -half + (j as f64 + 0.5) * step;
            let p = rx.position + u * a + v * b;
            let to_src = src - p;
            let cos_in = rx.normal.dot(to_src) / to_src.norm();
            if cos_in <= 0.0 || cos_in < cos_fov {
                continue;
            }
            row += beam_intensity(beam, p) * cos_in;
        }
        sum += row;
    }
    ChannelGain((sum * step * step / beam.power()).clamp(0.0, 1.0))
}

/// Single-bin impulse response of the line-of-sight path.
pub fn los_cir(beam: &BeamState, rx: &ReceiverConfig, settings: &ChannelSettings) -> Result<Cir> {
    let mut cir = Cir::new(settings.bin_duration)?;
    let h = los_gain(beam, rx, settings.los_grid).value();
    cir.add(beam.source.position.distance(rx.position) / SPEED_OF_LIGHT, h);
    Ok(cir)
}

/// One ray of the traced beam spot where it meets a room surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landing {
    pub point: Vec3,
    pub face: Face,
    /// Fraction of the beam power carried by this ray.
    pub weight: f64,
}

/// Trace the beam into the room. Rays that cross any of the `blockers`
/// apertures before reaching a wall are absorbed there and do not land.
/// Sub-rays per axis for footprint cells cut by a detector edge.
const SPLIT: usize = 16;

pub fn trace_footprint(beam: &BeamState, room: &Room, blockers: &[ReceiverConfig], n: usize) -> Vec<Landing> {
    let src = beam.source.position;
    let axis = beam.axis();
    let (u, v) = axis.orthonormal_basis();
    let d_ref = beam.aim_point.distance(src);
    let sigma = beam.radius_at(d_ref) / 2.0;
    let span = 8.0 * sigma;
    let n = n.max(1);
    let step = 2.0 * span / n as f64;
    let cdf: Vec<f64> = (0..=n).map(|k| normal_cdf((-span + k as f64 * step) / sigma)).collect();
    let cell: Vec<f64> = cdf.windows(2).map(|w| w[1] - w[0]).collect();
    // blockers that can possibly intersect the fan
    let near: Vec<&ReceiverConfig> = blockers
        .iter()
        .filter(|rx| {
            let (d, r2) = beam.axial(rx.position);
            let reach = 10.0 * beam.radius_at(d.abs()) + 2.0 * rx.half_side();
            d > 0.0 && r2 <= reach * reach
        })
        .collect();

    let ray = |a: f64, b: f64| -> Option<(Vec3, f64, Face)> {
        let dir = (beam.aim_point + u * a + v * b - src).normalized()?;
        let (t, face) = exit_room(room, src, dir)?;
        Some((dir, t, face))
    };
    let blocked = |dir: Vec3, t: f64| near.iter().any(|rx| rx.blocks_ray(src, dir, t));
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let a0 = -span + i as f64 * step;
        for j in 0..n {
            let weight = cell[i] * cell[j];
            if weight == 0.0 {
                continue;
            }
            let b0 = -span + j as f64 * step;
            let (a, b) = (a0 + 0.5 * step, b0 + 0.5 * step);
            let Some((dir, t, face)) = ray(a, b) else {
                continue;
            };
            // cells cut by a detector edge are split into sub-rays
            let straddles = !near.is_empty() && {
                let corners = [(a0, b0), (a0 + step, b0), (a0, b0 + step), (a0 + step, b0 + step)];
                let hit = blocked(dir, t);
                corners
                    .iter()
                    .any(|&(ca, cb)| ray(ca, cb).map_or(hit, |(d, tt, _)| blocked(d, tt)) != hit)
            };
            if !straddles {
                if !blocked(dir, t) {
                    out.push(Landing {
                        point: clamp_to_room(room, src + dir * t),
                        face,
                        weight,
                    });
                }
                continue;
            }
            let sub = SPLIT;
            let sstep = step / sub as f64;
            let sub_cdf = |lo: f64| -> Vec<f64> {
                let c: Vec<f64> = (0..=sub).map(|k| normal_cdf((lo + k as f64 * sstep) / sigma)).collect();
                c.windows(2).map(|w| w[1] - w[0]).collect()
            };
            let (wa, wb) = (sub_cdf(a0), sub_cdf(b0));
            for (p, wap) in wa.iter().enumerate() {
                for (q, wbq) in wb.iter().enumerate() {
                    let sa = a0 + (p as f64 + 0.5) * sstep;
                    let sb = b0 + (q as f64 + 0.5) * sstep;
                    let Some((d, tt, f)) = ray(sa, sb) else {
                        continue;
                    };
                    if !blocked(d, tt) {
                        out.push(Landing {
                            point: clamp_to_room(room, src + d * tt),
                            face: f,
                            weight: wap * wbq,
                        });
                    }
                }
            }
        }
    }
    out
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn clamp_to_room(room: &Room, p: Vec3) -> Vec3 {
    Vec3::new(
        p.x.clamp(0.0, room.length),
        p.y.clamp(0.0, room.width),
        p.z.clamp(0.0, room.height),
    )
}

/// Parameter and face where a ray from inside the room leaves it.
fn exit_room(room: &Room, origin: Vec3, dir: Vec3) -> Option<(f64, Face)> {
    let mut best: Option<(f64, Face)> = None;
    let mut consider = |t: f64, face: Face| {
        if t > 1e-12 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, face));
        }
    };
    if dir.x > 0.0 {
        consider((room.length - origin.x) / dir.x, Face::WallXMax);
    } else if dir.x < 0.0 {
        consider(-origin.x / dir.x, Face::WallXMin);
    }
    if dir.y > 0.0 {
        consider((room.width - origin.y) / dir.y, Face::WallYMax);
    } else if dir.y < 0.0 {
        consider(-origin.y / dir.y, Face::WallYMin);
    }
    if dir.z > 0.0 {
        consider((room.height - origin.z) / dir.z, Face::Ceiling);
    } else if dir.z < 0.0 {
        consider(-origin.z / dir.z, Face::Floor);
    }
    best
}

/// Beam power deposited on one element, as a fraction of the beam power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LitElement {
    pub index: usize,
    pub fraction: f64,
    /// Power-weighted centroid of the spot on this element.
    pub centroid: Vec3,
}

/// Bin traced rays onto the elements of `grid`, in element index order.
pub fn deposit(landings: &[Landing], grid: &ElementGrid) -> Vec<LitElement> {
    let mut acc: BTreeMap<usize, (f64, Vec3)> = BTreeMap::new();
    for l in landings {
        if let Some(idx) = grid.locate(l.point) {
            let entry = acc.entry(idx).or_insert((0.0, Vec3::ZERO));
            entry.0 += l.weight;
            entry.1 += l.point * l.weight;
        }
    }
    acc.into_iter()
        .filter(|(_, (w, _))| *w > 0.0)
        .map(|(index, (w, p))| LitElement {
            index,
            fraction: w,
            centroid: p * (1.0 / w),
        })
        .collect()
}

/// Lambertian radiance factor `ρ·cosφ/π` from an emitting element toward `to`.
fn lambertian(from: Vec3, normal: Vec3, reflectivity: f64, to: Vec3) -> f64 {
    if reflectivity == 0.0 {
        return 0.0;
    }
    match cos_angle(from, to, normal) {
        Ok(c) => reflectivity * c / PI,
        Err(_) => 0.0,
    }
}

/// Single-bounce response: each lit element re-radiates its share of the
/// beam toward the receiver.
pub fn first_order_cir(
    beam: &BeamState,
    lit: &[LitElement],
    grid: &ElementGrid,
    rx: &ReceiverConfig,
    bin_duration: f64,
) -> Result<Cir> {
    let mut cir = Cir::new(bin_duration)?;
    let src = beam.source.position;
    for l in lit {
        let e = &grid.elements[l.index];
        let capture = rx.capture(l.centroid);
        if capture == 0.0 {
            continue;
        }
        let g = l.fraction * lambertian(l.centroid, e.normal, e.reflectivity, rx.position) * capture;
        let delay = (src.distance(l.centroid) + l.centroid.distance(rx.position)) / SPEED_OF_LIGHT;
        cir.add(delay, g);
    }
    Ok(cir)
}

/// Two-bounce response: lit element → every other element → receiver.
pub fn second_order_cir(
    beam: &BeamState,
    lit: &[LitElement],
    grid: &ElementGrid,
    rx: &ReceiverConfig,
    bin_duration: f64,
) -> Result<Cir> {
    let mut cir = Cir::new(bin_duration)?;
    let src = beam.source.position;
    for l in lit {
        let e1 = &grid.elements[l.index];
        if e1.reflectivity == 0.0 {
            continue;
        }
        let leg1 = src.distance(l.centroid);
        for (k, e2) in grid.elements.iter().enumerate() {
            if k == l.index || e2.reflectivity == 0.0 {
                continue;
            }
            let d12 = l.centroid.distance(e2.center);
            if d12 == 0.0 {
                continue;
            }
            let out1 = lambertian(l.centroid, e1.normal, e1.reflectivity, e2.center);
            if out1 == 0.0 {
                continue;
            }
            let cos2 = cos_angle(e2.center, l.centroid, e2.normal).unwrap_or(0.0);
            if cos2 == 0.0 {
                continue;
            }
            let capture = rx.capture(e2.center);
            if capture == 0.0 {
                continue;
            }
            let p2 = l.fraction * out1 * e2.area * cos2 / (d12 * d12);
            let g = p2 * lambertian(e2.center, e2.normal, e2.reflectivity, rx.position) * capture;
            let delay = (leg1 + d12 + e2.center.distance(rx.position)) / SPEED_OF_LIGHT;
            cir.add(delay, g);
        }
    }
    Ok(cir)
}

/// Bin-wise sum of the line-of-sight and reflection responses.
pub fn total_cir(los: &Cir, first: &Cir, second: &Cir) -> Result<Cir> {
    let mut total = Cir::new(los.bin_duration)?;
    total.accumulate(los, 1.0)?;
    total.accumulate(first, 1.0)?;
    total.accumulate(second, 1.0)?;
    Ok(total)
}

pub fn dc_gain(cir: &Cir) -> ChannelGain {
    cir.dc_gain()
}

/// Element grids used for the reflection orders.
#[derive(Debug, Clone)]
pub struct ReflectionGrids {
    pub first: ElementGrid,
    pub second: ElementGrid,
}

/// Impulse response of `beam` at every receiver, normalized to the beam's
/// own power. All receivers shadow the beam.
pub fn beam_cirs(
    beam: &BeamState,
    room: &Room,
    grids: &ReflectionGrids,
    receivers: &[ReceiverConfig],
    settings: &ChannelSettings,
) -> Result<Vec<Cir>> {
    if settings.reflections > 2 {
        return Err(Error::config_key(
            "reflections",
            format!("must be 0, 1 or 2, got {}", settings.reflections),
        ));
    }
    let (lit1, lit2) = if settings.reflections > 0 {
        let landings = trace_footprint(beam, room, receivers, settings.footprint_grid);
        let lit1 = deposit(&landings, &grids.first);
        let lit2 = if settings.reflections > 1 {
            deposit(&landings, &grids.second)
        } else {
            Vec::new()
        };
        (lit1, lit2)
    } else {
        (Vec::new(), Vec::new())
    };
    receivers
        .iter()
        .map(|rx| {
            let mut cir = los_cir(beam, rx, settings)?;
            if settings.reflections > 0 {
                cir.accumulate(
                    &first_order_cir(beam, &lit1, &grids.first, rx, settings.bin_duration)?,
                    1.0,
                )?;
            }
            if settings.reflections > 1 {
                cir.accumulate(
                    &second_order_cir(beam, &lit2, &grids.second, rx, settings.bin_duration)?,
                    1.0,
                )?;
            }
            Ok(cir)
        })
        .collect()
}
