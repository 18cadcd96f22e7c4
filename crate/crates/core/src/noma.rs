//! Power-domain NOMA: user association, SIC decoding order, the geometric
//! power ladder under the peak-intensity constraint, SINR and rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ApConfig;

/// Which end of the decoding order receives the largest power share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderDirection {
    /// Rank 1 (weakest channel, decoded first) gets the most power.
    #[default]
    WeakFirst,
    /// Rank 1 gets the least power.
    StrongFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceMode {
    /// Only co-served users interfere.
    Intra,
    /// Co-served users plus leakage from every other active access point.
    #[default]
    Full,
}

/// Dense `[ap][user]` matrix of DC channel gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    n_aps: usize,
    n_users: usize,
    data: Vec<f64>,
}

impl GainMatrix {
    pub fn zeros(n_aps: usize, n_users: usize) -> Self {
        GainMatrix {
            n_aps,
            n_users,
            data: vec![0.0; n_aps * n_users],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_aps = rows.len();
        let n_users = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_users) {
            return Err(Error::Data("ragged gain matrix".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::Data("channel gains must be finite and >= 0".into()));
        }
        Ok(GainMatrix { n_aps, n_users, data })
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn get(&self, ap: usize, user: usize) -> Result<f64> {
        if ap >= self.n_aps || user >= self.n_users {
            return Err(Error::Data(format!("no gain entry for AP {ap}, user {user}")));
        }
        Ok(self.data[ap * self.n_users + user])
    }

    pub fn set(&mut self, ap: usize, user: usize, value: f64) {
        self.data[ap * self.n_users + user] = value;
    }

    /// Sum of a user's gains over all access points.
    pub fn csi_sum(&self, user: usize) -> f64 {
        (0..self.n_aps).map(|l| self.data[l * self.n_users + user]).sum()
    }

    pub fn csi_sums(&self) -> Vec<f64> {
        (0..self.n_users).map(|j| self.csi_sum(j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    /// Serving AP per user.
    pub serving: Vec<usize>,
    /// Users served by each AP, ascending by id.
    pub members: Vec<Vec<usize>>,
}

/// Assign each user to the AP offering the largest aimed-beam gain. Ties go
/// to the lowest AP index.
pub fn associate(candidates: &GainMatrix) -> Result<Association> {
    let n_aps = candidates.n_aps();
    let mut serving = Vec::with_capacity(candidates.n_users());
    let mut unservable = Vec::new();
    for j in 0..candidates.n_users() {
        let mut best: Option<(usize, f64)> = None;
        for l in 0..n_aps {
            let g = candidates.get(l, j)?;
            if g > 0.0 && best.is_none_or(|(_, bg)| g > bg) {
                best = Some((l, g));
            }
        }
        match best {
            Some((l, _)) => serving.push(l),
            None => {
                unservable.push(j);
                serving.push(usize::MAX);
            }
        }
    }
    if !unservable.is_empty() {
        return Err(Error::UnservableUsers(unservable));
    }
    let mut members = vec![Vec::new(); n_aps];
    for (j, &l) in serving.iter().enumerate() {
        members[l].push(j);
    }
    Ok(Association { serving, members })
}

/// SIC decoding order of the users in `members`: ascending CSI sum (weakest
/// first), ties by user id.
pub fn decoding_order(members: &[usize], csi_sums: &[f64]) -> Vec<usize> {
    let mut order = members.to_vec();
    order.sort_by(|&a, &b| csi_sums[a].total_cmp(&csi_sums[b]).then(a.cmp(&b)));
    order
}

/// Power ladder of one access point.
#[derive(Debug, Clone, PartialEq)]
pub struct ApAllocation {
    /// User ids in decoding order (rank 1 first).
    pub order: Vec<usize>,
    /// Electrical power `P` per rank, watts.
    pub powers: Vec<f64>,
    /// Optical amplitude `η·√P` per rank, watts.
    pub amplitudes: Vec<f64>,
    /// Peak transmit intensity `Σ η·√P`, watts.
    pub intensity: f64,
}

impl ApAllocation {
    pub fn idle() -> Self {
        ApAllocation {
            order: Vec::new(),
            powers: Vec::new(),
            amplitudes: Vec::new(),
            intensity: 0.0,
        }
    }
}

/// Geometric ladder `P_{k+1} = α·P_k` over the decoding order, scaled so the
/// AP's peak intensity `Σ η√P_k` equals its configured peak power.
pub fn allocate_power(order: &[usize], alpha: f64, ap: &ApConfig, direction: LadderDirection) -> Result<ApAllocation> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!(
            "power allocation factor must lie in (0, 1], got {alpha}"
        )));
    }
    if order.is_empty() {
        return Err(Error::Parameter("cannot allocate power to an empty user set".into()));
    }
    let n = order.len();
    let mut weights = Vec::with_capacity(n);
    let mut w = 1.0;
    for _ in 0..n {
        weights.push(w);
        w *= alpha;
    }
    if direction == LadderDirection::StrongFirst {
        weights.reverse();
    }
    let eta = ap.quantum_efficiency;
    let root_sum: f64 = weights.iter().map(|w| w.sqrt()).sum();
    let root_scale = ap.peak_power / (eta * root_sum);
    let scale = root_scale * root_scale;
    let powers: Vec<f64> = weights.iter().map(|w| scale * w).collect();
    let amplitudes: Vec<f64> = powers.iter().map(|p| eta * p.sqrt()).collect();
    let intensity = amplitudes.iter().sum();
    Ok(ApAllocation {
        order: order.to_vec(),
        powers,
        amplitudes,
        intensity,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NomaAllocation {
    pub aps: Vec<ApAllocation>,
    pub serving: Vec<usize>,
    /// Zero-based position of each user in its AP's decoding order.
    pub rank: Vec<usize>,
}

impl NomaAllocation {
    /// Order and allocate every AP's users.
    pub fn build(
        association: &Association,
        csi_sums: &[f64],
        alpha: f64,
        aps: &[ApConfig],
        direction: LadderDirection,
    ) -> Result<Self> {
        if association.members.len() != aps.len() {
            return Err(Error::Data("association does not match AP list".into()));
        }
        let mut rank = vec![0; association.serving.len()];
        let mut allocs = Vec::with_capacity(aps.len());
        for (members, ap) in association.members.iter().zip(aps) {
            if members.is_empty() {
                allocs.push(ApAllocation::idle());
                continue;
            }
            let order = decoding_order(members, csi_sums);
            for (k, &j) in order.iter().enumerate() {
                rank[j] = k;
            }
            allocs.push(allocate_power(&order, alpha, ap, direction)?);
        }
        Ok(NomaAllocation {
            aps: allocs,
            serving: association.serving.clone(),
            rank,
        })
    }

    pub fn n_users(&self) -> usize {
        self.serving.len()
    }
}

/// SINR of `user` with SIC: signals decoded before it are cancelled, those
/// decoded after it remain as interference.
pub fn sinr(
    user: usize,
    alloc: &NomaAllocation,
    gains: &GainMatrix,
    noise_variance: f64,
    responsivity: f64,
    mode: InterferenceMode,
) -> Result<f64> {
    let l = *alloc
        .serving
        .get(user)
        .ok_or_else(|| Error::Data(format!("user {user} has no serving AP")))?;
    let ap = &alloc.aps[l];
    let k = alloc.rank[user];
    let h = gains.get(l, user)?;
    let current = |amp: f64, gain: f64| {
        let i = amp * responsivity * gain;
        i * i
    };
    let signal = current(ap.amplitudes[k], h);
    let mut interference: f64 = ap.amplitudes[k + 1..].iter().map(|&a| current(a, h)).sum();
    if mode == InterferenceMode::Full {
        for (other, other_ap) in alloc.aps.iter().enumerate() {
            if other != l && other_ap.intensity > 0.0 {
                interference += current(other_ap.intensity, gains.get(other, user)?);
            }
        }
    }
    let denom = noise_variance + interference;
    Ok(if denom > 0.0 {
        signal / denom
    } else if signal > 0.0 {
        f64::INFINITY
    } else {
        0.0
    })
}

/// Achievable rate `½·B·log2(1 + SINR)` in bits/s.
pub fn rate(sinr: f64, bandwidth: f64) -> f64 {
    0.5 * bandwidth * (1.0 + sinr.max(0.0)).log2()
}

pub fn sum_rate(rates: &[f64]) -> f64 {
    rates.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use approx::assert_relative_eq;

    fn ap(peak: f64, eta: f64) -> ApConfig {
        ApConfig::new(Vec3::new(1.0, 1.0, 3.0), peak, 2.1e-3, eta).unwrap()
    }

    #[test]
    fn associate_picks_dominant_ap_and_breaks_ties_low() {
        let g = GainMatrix::from_rows(vec![vec![0.1, 0.5, 0.0], vec![0.2, 0.5, 0.0], vec![0.9, 0.1, 0.3]]).unwrap();
        let a = associate(&g).unwrap();
        assert_eq!(a.serving, vec![2, 0, 2]);
        assert_eq!(a.members, vec![vec![1], vec![], vec![0, 2]]);
    }

    #[test]
    fn associate_reports_unservable_users() {
        let g = GainMatrix::from_rows(vec![vec![0.1, 0.0, 0.0], vec![0.2, 0.0, 0.4]]).unwrap();
        match associate(&g) {
            Err(Error::UnservableUsers(ids)) => assert_eq!(ids, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decoding_order_cases() {
        let sums = [0.5e-6, 0.2e-6];
        assert_eq!(decoding_order(&[0, 1], &sums), vec![1, 0]);
        assert_eq!(decoding_order(&[2, 0, 1], &[1.0, 1.0, 1.0]), vec![0, 1, 2]);
        let scaled: Vec<f64> = sums.iter().map(|s| s * 37.5).collect();
        assert_eq!(decoding_order(&[0, 1], &scaled), decoding_order(&[0, 1], &sums));
    }

    #[test]
    fn ladder_shares() {
        let a = allocate_power(&[0, 1, 2], 0.5, &ap(1e-3, 1.0), LadderDirection::WeakFirst).unwrap();
        let total: f64 = a.powers.iter().sum();
        assert_relative_eq!(a.powers[0] / total, 4.0 / 7.0, max_relative = 1e-12);
        assert_relative_eq!(a.powers[1] / total, 2.0 / 7.0, max_relative = 1e-12);
        assert_relative_eq!(a.powers[2] / total, 1.0 / 7.0, max_relative = 1e-12);
        assert_relative_eq!(a.intensity, 1e-3, max_relative = 1e-12);

        let eq = allocate_power(&[0, 1, 2, 3], 1.0, &ap(1e-3, 0.8), LadderDirection::WeakFirst).unwrap();
        assert!(eq.powers.iter().all(|&p| p == eq.powers[0]));

        let rev = allocate_power(&[0, 1, 2], 0.5, &ap(1e-3, 1.0), LadderDirection::StrongFirst).unwrap();
        assert_relative_eq!(rev.powers[2] / rev.powers[0], 4.0, max_relative = 1e-12);
    }

    #[test]
    fn two_user_scale_matches_root_finder() {
        // bisection on f(s) = √s + √(0.25·s) − 1e-3
        let f = |s: f64| s.sqrt() + (0.25 * s).sqrt() - 1e-3;
        let (mut lo, mut hi) = (0.0f64, 1e-5f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let a = allocate_power(&[0, 1], 0.25, &ap(1e-3, 1.0), LadderDirection::WeakFirst).unwrap();
        assert_relative_eq!(a.powers[0], 0.5 * (lo + hi), max_relative = 1e-12);
        assert_relative_eq!(a.powers[0], (1e-3f64 / 1.5).powi(2), max_relative = 1e-12);
    }

    #[test]
    fn ladder_rejects_bad_alpha() {
        let a = ap(1e-3, 1.0);
        assert!(allocate_power(&[0], 0.0, &a, LadderDirection::WeakFirst).is_err());
        assert!(allocate_power(&[0], 1.5, &a, LadderDirection::WeakFirst).is_err());
        assert!(allocate_power(&[0], -0.2, &a, LadderDirection::WeakFirst).is_err());
        assert!(allocate_power(&[], 0.5, &a, LadderDirection::WeakFirst).is_err());
    }

    fn single_ap_alloc(gains: Vec<f64>, alpha: f64) -> (NomaAllocation, GainMatrix) {
        let g = GainMatrix::from_rows(vec![gains]).unwrap();
        let assoc = associate(&g).unwrap();
        let alloc = NomaAllocation::build(
            &assoc,
            &g.csi_sums(),
            alpha,
            &[ap(1e-3, 1.0)],
            LadderDirection::WeakFirst,
        )
        .unwrap();
        (alloc, g)
    }

    #[test]
    fn sinr_single_user() {
        let (alloc, g) = single_ap_alloc(vec![0.8], 0.4);
        let s = sinr(0, &alloc, &g, 1e-12, 0.5, InterferenceMode::Full).unwrap();
        let expect = (1e-3f64 * 0.5 * 0.8).powi(2) / 1e-12;
        assert_relative_eq!(s, expect, max_relative = 1e-12);
        let s_inf = sinr(0, &alloc, &g, 1e300, 0.5, InterferenceMode::Full).unwrap();
        assert!(s_inf < 1e-200);
    }

    #[test]
    fn sinr_three_users_term_by_term() {
        let (alloc, g) = single_ap_alloc(vec![0.3, 0.1, 0.2], 0.5);
        // order by gain: user 1 (0.1), user 2 (0.2), user 0 (0.3)
        assert_eq!(alloc.aps[0].order, vec![1, 2, 0]);
        let p = &alloc.aps[0].powers;
        let (r, sigma2) = (0.5, 2e-12);
        let term = |pw: f64, h: f64| pw * (r * h) * (r * h);
        let s1 = term(p[0], 0.1) / (sigma2 + term(p[1], 0.1) + term(p[2], 0.1));
        let s2 = term(p[1], 0.2) / (sigma2 + term(p[2], 0.2));
        let s0 = term(p[2], 0.3) / sigma2;
        for (u, e) in [(1, s1), (2, s2), (0, s0)] {
            let got = sinr(u, &alloc, &g, sigma2, r, InterferenceMode::Intra).unwrap();
            assert_relative_eq!(got, e, max_relative = 1e-12);
        }
    }

    #[test]
    fn sinr_full_mode_adds_leakage() {
        let g = GainMatrix::from_rows(vec![vec![0.5, 1e-3], vec![1e-3, 0.4]]).unwrap();
        let assoc = associate(&g).unwrap();
        let aps = [ap(1e-3, 1.0), ap(1e-3, 1.0)];
        let alloc = NomaAllocation::build(&assoc, &g.csi_sums(), 0.4, &aps, LadderDirection::WeakFirst).unwrap();
        let intra = sinr(0, &alloc, &g, 1e-12, 0.5, InterferenceMode::Intra).unwrap();
        let full = sinr(0, &alloc, &g, 1e-12, 0.5, InterferenceMode::Full).unwrap();
        let leak = (1e-3 * 0.5 * 1e-3f64).powi(2);
        assert_relative_eq!(full, intra * 1e-12 / (1e-12 + leak), max_relative = 1e-12);
    }

    #[test]
    fn missing_gain_is_data_error() {
        let (alloc, _) = single_ap_alloc(vec![0.3, 0.2], 0.5);
        let short = GainMatrix::from_rows(vec![vec![0.3]]).unwrap();
        assert!(matches!(
            sinr(1, &alloc, &short, 1e-12, 0.5, InterferenceMode::Intra),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn rate_spot_values() {
        assert_eq!(rate(0.0, 10e9), 0.0);
        assert_relative_eq!(rate(3.0, 10e9), 1.0e10, max_relative = 1e-15);
        assert_eq!(sum_rate(&[1.0, 2.5, 3.0]), 6.5);
    }
}
