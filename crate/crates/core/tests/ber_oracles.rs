mod common;

use common::{ap_at, gauss_tail};
use owc_noma::ber::{simulate_ber, wilson_interval, BerSettings};
use owc_noma::experiment::{generate_users, ReceiverTemplate};
use owc_noma::geometry::{Room, Vec3};
use owc_noma::noma::{associate, GainMatrix, LadderDirection, NomaAllocation};
use owc_noma::rng::substream;

fn allocation(rows: Vec<Vec<f64>>, alpha: f64) -> (NomaAllocation, GainMatrix) {
    let gains = GainMatrix::from_rows(rows).unwrap();
    let aps: Vec<_> = (0..gains.n_aps())
        .map(|l| ap_at(Vec3::new(1.0 + 2.0 * l as f64, 1.0, 3.0)))
        .collect();
    let assoc = associate(&gains).unwrap();
    let alloc = NomaAllocation::build(&assoc, &gains.csi_sums(), alpha, &aps, LadderDirection::WeakFirst).unwrap();
    (alloc, gains)
}

#[test]
fn single_user_matches_two_point_detection() {
    // OOK levels {0, A}: the midpoint threshold errs with probability Q(A / 2σ)
    let g = 0.8;
    let (alloc, gains) = allocation(vec![vec![g]], 0.5);
    let amp = 0.5 * g * 1e-3;
    for (k, x) in [0.6, 1.5, 2.5, 3.5].into_iter().enumerate() {
        let sigma = amp / (2.0 * x);
        let expect = gauss_tail(x);
        assert!((1e-4..=0.3).contains(&expect));
        let est = simulate_ber(
            &alloc,
            &gains,
            &[sigma * sigma],
            0.5,
            &BerSettings::new(200_000, 40 + k as u64),
        )
        .unwrap()
        .remove(0);
        assert!(
            (est.ber - expect).abs() <= 3.0 * est.ci95_halfwidth,
            "x={x}: ber {} expect {expect} ± {}",
            est.ber,
            est.ci95_halfwidth
        );
    }
}

#[test]
fn noiseless_distinct_constellations_decode_perfectly() {
    // three users on AP 0, two on AP 1, no cross coupling
    let rows = vec![vec![0.9, 0.5, 0.2, 0.0, 0.0], vec![0.0, 0.0, 0.0, 0.7, 0.3]];
    let (alloc, gains) = allocation(rows, 0.5);
    let est = simulate_ber(&alloc, &gains, &[0.0; 5], 0.5, &BerSettings::new(100_000, 3)).unwrap();
    for e in est {
        assert_eq!(e.errors, 0, "user {}", e.user);
        assert_eq!(e.symbols, 100_000);
    }
}

#[test]
fn less_noise_never_hurts() {
    let rows = vec![vec![0.9, 0.6, 0.3]];
    let (alloc, gains) = allocation(rows, 0.4);
    let amp = 0.5 * 0.3 * alloc.aps[0].amplitudes[0];
    let mut prev: Option<Vec<(u64, u64)>> = None;
    // noise standard deviation shrinks at each step
    for scale in [0.5, 1.0, 2.0, 4.0] {
        let s2 = (amp / scale).powi(2);
        let est = simulate_ber(&alloc, &gains, &[s2; 3], 0.5, &BerSettings::new(100_000, 9)).unwrap();
        let now: Vec<(u64, u64)> = est.iter().map(|e| (e.errors, e.symbols)).collect();
        if let Some(p) = &prev {
            for ((e_new, n), (e_old, _)) in now.iter().zip(p) {
                // a rise beyond three standard deviations of the old count fails
                let slack = 3.0 * (*e_old as f64).max(1.0).sqrt();
                assert!(*e_new as f64 <= *e_old as f64 + slack, "{e_new} vs {e_old} of {n}");
            }
        }
        prev = Some(now);
    }
}

#[test]
fn wilson_interval_covers_binomial_truth() {
    // coverage of the 95% interval over many seeded binomial draws
    use rand::Rng;
    let mut rng = substream(11, &[]);
    let (p, n) = (0.03, 2_000u64);
    let mut covered = 0;
    for _ in 0..2_000 {
        let k = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
        let (lo, hi) = wilson_interval(k, n);
        if lo <= p && p <= hi {
            covered += 1;
        }
    }
    let rate = covered as f64 / 2_000.0;
    assert!((0.93..=0.97).contains(&rate), "{rate}");
}

#[test]
fn user_positions_are_uniform_over_floor_plan() {
    let room = Room::default();
    let n = 100_000;
    let users = generate_users(n, &room, 1.0, &ReceiverTemplate::default(), &mut substream(2, &[7])).unwrap();
    let (mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0);
    for u in &users {
        let p = u.position;
        sx += p.x;
        sy += p.y;
        sxx += p.x * p.x;
        syy += p.y * p.y;
    }
    let nf = n as f64;
    let (mx, my) = (sx / nf, sy / nf);
    let (vx, vy) = (sxx / nf - mx * mx, syy / nf - my * my);
    // standard error of the mean is L/sqrt(12 n); allow four of them
    assert!((mx - 4.0).abs() < 4.0 * 8.0 / (12.0 * nf).sqrt());
    assert!((my - 2.0).abs() < 4.0 * 4.0 / (12.0 * nf).sqrt());
    assert!((vx / (64.0 / 12.0) - 1.0).abs() < 0.02);
    assert!((vy / (16.0 / 12.0) - 1.0).abs() < 0.02);
}
