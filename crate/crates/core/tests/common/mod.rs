#![allow(dead_code)]

use owc_noma::channel::{deposit, first_order_cir, trace_footprint, BeamState};
use owc_noma::geometry::{discretize, ApConfig, ReceiverConfig, Room, Vec3};

pub fn ap_at(p: Vec3) -> ApConfig {
    ApConfig::new(p, 1e-3, 2.1e-3, 1.0).unwrap()
}

pub fn rx_up(p: Vec3) -> ReceiverConfig {
    ReceiverConfig {
        position: p,
        normal: Vec3::Z,
        area: 1e-4,
        fov_half_angle: std::f64::consts::FRAC_PI_2,
        responsivity: 0.5,
    }
}

/// A beam that lands on the far wall, seen by a low upward-facing detector
/// in front of it. Receivers at desk height never see the floor spill, so
/// reflection checks use this scene.
pub fn probe_scene() -> (ApConfig, Vec3, ReceiverConfig) {
    (
        ap_at(Vec3::new(1.0, 1.0, 3.0)),
        Vec3::new(7.0, 3.0, 1.0),
        rx_up(Vec3::new(7.0, 2.0, 0.25)),
    )
}

/// Upper tail of the standard normal by Simpson integration of the density.
pub fn gauss_tail(x: f64) -> f64 {
    let hi = x + 40.0;
    let n = 200_000;
    let h = (hi - x) / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(x) + pdf(hi);
    for k in 1..n {
        let t = x + k as f64 * h;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * pdf(t);
    }
    s * h / 3.0
}

/// Dense midpoint integration of the Gaussian spot over the aperture, written
/// out from the beam formula without touching the simulator's beam code.
pub fn dense_los_oracle(src: Vec3, rx_center: Vec3, divergence: f64, n: usize) -> f64 {
    let half = 0.005;
    let h = 2.0 * half / n as f64;
    // beam aimed straight down at the receiver center
    let d = src.z - rx_center.z;
    let w = d * divergence;
    let mut sum = 0.0;
    for i in 0..n {
        let x = -half + (i as f64 + 0.5) * h;
        for j in 0..n {
            let y = -half + (j as f64 + 0.5) * h;
            let r2 = x * x + y * y;
            let irr = 2.0 / (std::f64::consts::PI * w * w) * (-2.0 * r2 / (w * w)).exp();
            let cos = d / (r2 + d * d).sqrt();
            sum += irr * cos;
        }
    }
    sum * h * h
}

/// First-order gain of the probe scene with elements of the given side.
pub fn probe_first_order(side: f64) -> f64 {
    let room = Room::default();
    let (ap, aim, rx) = probe_scene();
    let beam = BeamState::new(ap, aim, 1.0).unwrap();
    let grid = discretize(&room, side).unwrap();
    let lit = deposit(&trace_footprint(&beam, &room, &[rx], 64), &grid);
    first_order_cir(&beam, &lit, &grid, &rx, 1e-11)
        .unwrap()
        .dc_gain()
        .value()
}
