mod common;

use approx::assert_relative_eq;
use common::{ap_at, dense_los_oracle, probe_first_order, probe_scene, rx_up};
use owc_noma::channel::{
    beam_cirs, deposit, first_order_cir, los_gain, second_order_cir, trace_footprint, BeamState, ChannelSettings,
    ReflectionGrids,
};
use owc_noma::geometry::{discretize, Room, Vec3};

#[test]
fn los_gain_matches_dense_grid_oracle() {
    let src = Vec3::new(1.0, 1.0, 3.0);
    let rx = rx_up(Vec3::new(1.0, 1.0, 1.0));
    let beam = BeamState::new(ap_at(src), rx.position, 1.0).unwrap();
    let h = los_gain(&beam, &rx, ChannelSettings::default().los_grid).value();
    let oracle = dense_los_oracle(src, rx.position, 2.1e-3, 2000);
    assert_relative_eq!(h, oracle, max_relative = 0.01);
    // separable erf form of the same integral, ignoring the cosine
    let s = 0.005 * 2f64.sqrt() / (2.0 * 2.1e-3);
    let erf = 1.0 - libm_free_erfc(s);
    assert_relative_eq!(oracle, erf * erf, max_relative = 1e-4);
}

/// erfc via Simpson integration, kept apart from the crate's special functions.
fn libm_free_erfc(x: f64) -> f64 {
    2.0 * common::gauss_tail(x * 2f64.sqrt())
}

#[test]
fn first_order_gain_converges_with_element_size() {
    let fine = probe_first_order(0.0125);
    let mid = probe_first_order(0.05);
    let coarse = probe_first_order(0.20);
    assert!(mid > 0.0);
    assert_relative_eq!(mid, fine, max_relative = 0.05);
    assert_relative_eq!(coarse, mid, max_relative = 0.05);
}

#[test]
fn second_order_is_weaker_than_first() {
    let room = Room::default();
    let (ap, aim, rx) = probe_scene();
    let beam = BeamState::new(ap, aim, 1.0).unwrap();
    let landings = trace_footprint(&beam, &room, &[rx], 64);
    let g1 = discretize(&room, 0.05).unwrap();
    let g2 = discretize(&room, 0.20).unwrap();
    let h1 = first_order_cir(&beam, &deposit(&landings, &g1), &g1, &rx, 1e-11)
        .unwrap()
        .dc_gain()
        .value();
    let h2 = second_order_cir(&beam, &deposit(&landings, &g2), &g2, &rx, 1e-11)
        .unwrap()
        .dc_gain()
        .value();
    assert!(h2 > 0.0);
    assert!(h2 < h1, "second {h2} first {h1}");
}

#[test]
fn dc_gain_does_not_depend_on_bin_width() {
    let room = Room::default();
    let grids = ReflectionGrids {
        first: discretize(&room, 0.2).unwrap(),
        second: discretize(&room, 0.4).unwrap(),
    };
    let (ap, aim, rx) = probe_scene();
    let beam = BeamState::new(ap, aim, 1.0).unwrap();
    let base = ChannelSettings::default();
    let halved = ChannelSettings {
        bin_duration: base.bin_duration / 2.0,
        ..base
    };
    let a = beam_cirs(&beam, &room, &grids, &[rx], &base).unwrap();
    let b = beam_cirs(&beam, &room, &grids, &[rx], &halved).unwrap();
    assert!(a[0].dc_gain().value() > 0.0);
    assert_relative_eq!(a[0].dc_gain().value(), b[0].dc_gain().value(), max_relative = 1e-12);
    assert!(b[0].bins().len() >= a[0].bins().len());
}

#[test]
fn element_counts_follow_exact_tiling() {
    // integer tiling in centimetres: each face contributes ceil(a/s)·ceil(b/s)
    let dims_cm = [800u64, 400, 300];
    let faces = [(0, 1), (0, 1), (0, 2), (0, 2), (1, 2), (1, 2)];
    for (side_m, side_cm) in [(0.05, 5u64), (0.20, 20)] {
        let expect: u64 = faces
            .iter()
            .map(|&(a, b)| dims_cm[a].div_ceil(side_cm) * dims_cm[b].div_ceil(side_cm))
            .sum();
        let grid = discretize(&Room::default(), side_m).unwrap();
        assert_eq!(grid.len() as u64, expect);
    }
    assert_eq!(discretize(&Room::default(), 0.05).unwrap().len(), 54_400);
    assert_eq!(discretize(&Room::default(), 0.20).unwrap().len(), 3_400);
}

#[test]
fn desk_height_receivers_see_no_floor_spill() {
    let room = Room::default();
    let grids = ReflectionGrids {
        first: discretize(&room, 0.2).unwrap(),
        second: discretize(&room, 0.4).unwrap(),
    };
    let rx = rx_up(Vec3::new(3.0, 1.0, 1.0));
    let beam = BeamState::new(ap_at(Vec3::new(3.0, 1.0, 3.0)), rx.position, 1.0).unwrap();
    let los_only = ChannelSettings {
        reflections: 0,
        ..ChannelSettings::default()
    };
    let one = ChannelSettings {
        reflections: 1,
        ..ChannelSettings::default()
    };
    let h0 = beam_cirs(&beam, &room, &grids, &[rx], &los_only).unwrap()[0]
        .dc_gain()
        .value();
    let h1 = beam_cirs(&beam, &room, &grids, &[rx], &one).unwrap()[0]
        .dc_gain()
        .value();
    assert_eq!(h0, h1);
}
