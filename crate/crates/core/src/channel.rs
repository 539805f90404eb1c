//! Node geometry and line-of-sight channel construction.
//!
//! Every gain has magnitude `d^(-mu/2)` and a per-link phase offset. All
//! quantities are in linear units: meters, watts, and plain power ratios.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Physical and algorithmic parameters of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_users: usize,
    pub n_destinations: usize,
    pub n_eavesdroppers: usize,
    /// Side of the square deployment area, meters.
    pub area_side: f64,
    /// Transmit power available in one TDMA slot, watts.
    pub slot_power: f64,
    /// Receiver noise variance, watts.
    pub noise_power: f64,
    /// Target SNR of the intra-coalition broadcast, linear.
    pub exchange_snr: f64,
    pub pathloss_exp: f64,
    pub rng_seed: u64,
    /// Gram matrices with a larger condition number are treated as singular.
    pub singular_threshold: f64,
    /// Relative residual accepted when verifying a beamforming solution.
    pub numeric_tol: f64,
    /// Sweep limit for merge-and-split; hitting it is a bug signal.
    pub max_sweeps: usize,
    /// Largest coalition whose set partitions are enumerated for splitting.
    pub split_size_cap: usize,
    /// Largest number of coalition subsets examined by the stability checker.
    pub subset_cap: u64,
    /// Largest network for exhaustive strong-stability search.
    pub dc_size_cap: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_users: 15,
            n_destinations: 2,
            n_eavesdroppers: 2,
            area_side: 2500.0,
            slot_power: 0.01,
            noise_power: dbm_to_watts(-90.0),
            exchange_snr: db_to_linear(10.0),
            pathloss_exp: 3.0,
            rng_seed: 0,
            singular_threshold: 1e12,
            numeric_tol: 1e-6,
            max_sweeps: 10_000,
            split_size_cap: 12,
            subset_cap: 1 << 20,
            dc_size_cap: 12,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        fn bad(key: &str, reason: &str) -> Error {
            Error::Config { key: key.to_string(), reason: reason.to_string() }
        }
        let positive = [
            ("area_side", self.area_side),
            ("slot_power", self.slot_power),
            ("noise_power", self.noise_power),
            ("exchange_snr", self.exchange_snr),
            ("singular_threshold", self.singular_threshold),
            ("numeric_tol", self.numeric_tol),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(key, "must be finite and strictly positive"));
            }
        }
        if self.n_users == 0 {
            return Err(bad("n_users", "must be at least 1"));
        }
        if self.n_destinations == 0 {
            return Err(bad("n_destinations", "must be at least 1"));
        }
        if self.n_eavesdroppers < 2 {
            return Err(bad("n_eavesdroppers", "must be at least 2"));
        }
        if !(self.pathloss_exp.is_finite() && self.pathloss_exp >= 2.0) {
            return Err(bad("pathloss_exp", "must be at least 2"));
        }
        if self.split_size_cap > 24 {
            return Err(bad("split_size_cap", "must be at most 24"));
        }
        if self.max_sweeps == 0 {
            return Err(bad("max_sweeps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_counts(mut self, users: usize, destinations: usize, eavesdroppers: usize) -> Self {
        self.n_users = users;
        self.n_destinations = destinations;
        self.n_eavesdroppers = eavesdroppers;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Line-of-sight gain `d^(-mu/2) e^(j phase)` between two points.
pub fn channel_gain(a: Point, b: Point, pathloss_exp: f64, phase: f64) -> Result<Complex64> {
    let d = a.distance(&b);
    if d == 0.0 {
        return Err(Error::CoincidentNodes(format!("({}, {}) and ({}, {})", a.x, a.y, b.x, b.y)));
    }
    Ok(Complex64::from_polar(d.powf(-pathloss_exp / 2.0), phase))
}

/// Distance at which the exchange power `nu0 sigma^2 d^mu` uses the whole slot budget.
pub fn max_exchange_distance(cfg: &SimConfig) -> f64 {
    (cfg.slot_power / (cfg.exchange_snr * cfg.noise_power)).powf(1.0 / cfg.pathloss_exp)
}

/// Node positions and the user to destination assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub user_pos: Vec<Point>,
    pub dest_pos: Vec<Point>,
    pub eve_pos: Vec<Point>,
    pub assignment: Vec<usize>,
}

impl Deployment {
    /// Builds a deployment where each user is served by its closest destination.
    pub fn with_nearest_assignment(user_pos: Vec<Point>, dest_pos: Vec<Point>, eve_pos: Vec<Point>) -> Self {
        let assignment = nearest_assignment(&user_pos, &dest_pos);
        Deployment { user_pos, dest_pos, eve_pos, assignment }
    }

    pub fn reassign_nearest(&mut self) {
        self.assignment = nearest_assignment(&self.user_pos, &self.dest_pos);
    }

    pub fn n_users(&self) -> usize {
        self.user_pos.len()
    }
}

/// Ties go to the lowest destination index.
pub fn nearest_assignment(users: &[Point], dests: &[Point]) -> Vec<usize> {
    users
        .iter()
        .map(|u| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (m, d) in dests.iter().enumerate() {
                let dist = u.distance(d);
                if dist < best_d {
                    best_d = dist;
                    best = m;
                }
            }
            best
        })
        .collect()
}

/// Tabulated channel gains for one deployment. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    n_users: usize,
    n_destinations: usize,
    n_eavesdroppers: usize,
    assignment: Vec<usize>,
    user_pos: Vec<Point>,
    h: Vec<Complex64>,
    g: Vec<Complex64>,
    // inter-user path gain 1/d^mu; diagonal is +inf
    q: Vec<f64>,
    dist: Vec<f64>,
    h_phases: Vec<f64>,
    g_phases: Vec<f64>,
}

impl ChannelState {
    /// Draws one phase per user-destination link (row-major), then one per
    /// user-eavesdropper link, so the same rng state always yields the same table.
    pub fn build<R: Rng + ?Sized>(dep: &Deployment, cfg: &SimConfig, rng: &mut R) -> Result<Self> {
        let n = dep.user_pos.len();
        let m = dep.dest_pos.len();
        let k = dep.eve_pos.len();
        if dep.assignment.len() != n {
            return Err(Error::InvalidPartition(format!(
                "assignment has {} entries for {} users",
                dep.assignment.len(),
                n
            )));
        }
        if let Some(&bad) = dep.assignment.iter().find(|&&a| a >= m) {
            return Err(Error::Config {
                key: "assignment".into(),
                reason: format!("destination index {bad} out of range"),
            });
        }
        let mu = cfg.pathloss_exp;

        let mut h_phases = Vec::with_capacity(n * m);
        let mut h = Vec::with_capacity(n * m);
        for (i, u) in dep.user_pos.iter().enumerate() {
            for (j, d) in dep.dest_pos.iter().enumerate() {
                let phase = rng.random::<f64>() * TAU;
                let gain = channel_gain(*u, *d, mu, phase)
                    .map_err(|_| Error::CoincidentNodes(format!("user {i} and destination {j}")))?;
                h_phases.push(phase);
                h.push(gain);
            }
        }
        let mut g_phases = Vec::with_capacity(n * k);
        let mut g = Vec::with_capacity(n * k);
        for (i, u) in dep.user_pos.iter().enumerate() {
            for (j, e) in dep.eve_pos.iter().enumerate() {
                let phase = rng.random::<f64>() * TAU;
                let gain = channel_gain(*u, *e, mu, phase)
                    .map_err(|_| Error::CoincidentNodes(format!("user {i} and eavesdropper {j}")))?;
                g_phases.push(phase);
                g.push(gain);
            }
        }
        let mut dist = vec![0.0; n * n];
        let mut q = vec![f64::INFINITY; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d = dep.user_pos[i].distance(&dep.user_pos[j]);
                    dist[i * n + j] = d;
                    q[i * n + j] = d.powf(-mu);
                }
            }
        }
        Ok(ChannelState {
            n_users: n,
            n_destinations: m,
            n_eavesdroppers: k,
            assignment: dep.assignment.clone(),
            user_pos: dep.user_pos.clone(),
            h,
            g,
            q,
            dist,
            h_phases,
            g_phases,
        })
    }

    /// Builds a channel table directly from gains, bypassing geometry.
    ///
    /// `h[i][m]`, `g[i][k]`, and the symmetric inter-user distance matrix
    /// `user_dist[i][j]` are taken as given. User positions are unknown and
    /// reported as the origin.
    pub fn from_gains(
        h: Vec<Vec<Complex64>>,
        g: Vec<Vec<Complex64>>,
        user_dist: Vec<Vec<f64>>,
        assignment: Vec<usize>,
        pathloss_exp: f64,
    ) -> Result<Self> {
        let n = h.len();
        let m = h.first().map_or(0, Vec::len);
        let k = g.first().map_or(0, Vec::len);
        let shape_ok = g.len() == n
            && assignment.len() == n
            && user_dist.len() == n
            && h.iter().all(|r| r.len() == m)
            && g.iter().all(|r| r.len() == k)
            && user_dist.iter().all(|r| r.len() == n)
            && assignment.iter().all(|&a| a < m);
        if !shape_ok {
            return Err(Error::Config { key: "gains".into(), reason: "inconsistent table shapes".into() });
        }
        let mut dist = vec![0.0; n * n];
        let mut q = vec![f64::INFINITY; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    dist[i * n + j] = user_dist[i][j];
                    q[i * n + j] = user_dist[i][j].powf(-pathloss_exp);
                }
            }
        }
        Ok(ChannelState {
            n_users: n,
            n_destinations: m,
            n_eavesdroppers: k,
            assignment,
            user_pos: vec![Point::new(0.0, 0.0); n],
            h_phases: h.iter().flatten().map(|z| z.arg()).collect(),
            g_phases: g.iter().flatten().map(|z| z.arg()).collect(),
            h: h.into_iter().flatten().collect(),
            g: g.into_iter().flatten().collect(),
            q,
            dist,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_destinations(&self) -> usize {
        self.n_destinations
    }

    pub fn n_eavesdroppers(&self) -> usize {
        self.n_eavesdroppers
    }

    /// Destination index serving `user`.
    pub fn destination(&self, user: usize) -> usize {
        self.assignment[user]
    }

    pub fn user_position(&self, user: usize) -> Point {
        self.user_pos[user]
    }

    pub fn h(&self, user: usize, dest: usize) -> Complex64 {
        self.h[user * self.n_destinations + dest]
    }

    pub fn g(&self, user: usize, eve: usize) -> Complex64 {
        self.g[user * self.n_eavesdroppers + eve]
    }

    pub fn q(&self, a: usize, b: usize) -> f64 {
        self.q[a * self.n_users + b]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n_users + b]
    }

    pub fn h_phase(&self, user: usize, dest: usize) -> f64 {
        self.h_phases[user * self.n_destinations + dest]
    }

    pub fn g_phase(&self, user: usize, eve: usize) -> f64 {
        self.g_phases[user * self.n_eavesdroppers + eve]
    }

    /// Largest pairwise distance among `members`; zero for fewer than two.
    pub fn diameter(&self, members: &[usize]) -> f64 {
        let mut best = 0.0f64;
        for (idx, &a) in members.iter().enumerate() {
            for &b in &members[idx + 1..] {
                best = best.max(self.distance(a, b));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn gain_unit_distance() {
        let g = channel_gain(Point::new(0.0, 0.0), Point::new(1.0, 0.0), 3.0, 0.0).unwrap();
        assert_eq!(g, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn gain_phase_flip() {
        let g = channel_gain(Point::new(0.0, 0.0), Point::new(100.0, 0.0), 2.0, PI).unwrap();
        assert!(close(g.re, -0.01, 1e-12));
        assert!(g.im.abs() < 1e-15);
    }

    #[test]
    fn gain_quarter_turn() {
        let g = channel_gain(Point::new(0.0, 0.0), Point::new(0.0, 1000.0), 3.0, FRAC_PI_2).unwrap();
        assert!(close(g.norm(), 10f64.powf(-4.5), 1e-12));
        assert!(g.re.abs() < 1e-12 * g.norm());
    }

    #[test]
    fn gain_coincident_is_error() {
        let p = Point::new(3.0, 4.0);
        assert!(matches!(channel_gain(p, p, 3.0, 0.0), Err(Error::CoincidentNodes(_))));
    }

    #[test]
    fn section_five_discovery_radius() {
        let cfg = SimConfig { slot_power: 0.01, exchange_snr: 10.0, noise_power: 1e-12, ..SimConfig::default() };
        assert!(close(max_exchange_distance(&cfg), 1000.0, 1e-9));
    }

    #[test]
    fn unit_ratio_radius() {
        for mu in [2.0, 3.0, 4.5] {
            let cfg = SimConfig {
                slot_power: 1e-11,
                exchange_snr: 10.0,
                noise_power: 1e-12,
                pathloss_exp: mu,
                ..SimConfig::default()
            };
            assert!(close(max_exchange_distance(&cfg), 1.0, 1e-12));
        }
    }

    #[test]
    fn radius_square_law() {
        let cfg = SimConfig {
            slot_power: 0.01,
            exchange_snr: 10.0,
            noise_power: 1e-12,
            pathloss_exp: 2.0,
            ..SimConfig::default()
        };
        let d = max_exchange_distance(&cfg);
        assert!(close(d, 10f64.powf(4.5), 1e-9));
        // bisection on nu0 sigma^2 d^mu = P
        let f = |d: f64| cfg.exchange_snr * cfg.noise_power * d.powf(cfg.pathloss_exp) - cfg.slot_power;
        let (mut lo, mut hi) = (1.0, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert!(close(d, 0.5 * (lo + hi), 1e-9));
        assert!((d - 31622.8).abs() < 0.05);
    }

    #[test]
    fn default_units() {
        let cfg = SimConfig::default();
        assert!(close(cfg.noise_power, 1e-12, 1e-12));
        assert!(close(cfg.exchange_snr, 10.0, 1e-12));
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_rejects_single_eavesdropper() {
        let cfg = SimConfig { n_eavesdroppers: 1, ..SimConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config { key, .. }) if key == "n_eavesdroppers"));
        let cfg = SimConfig { pathloss_exp: 1.5, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { noise_power: 0.0, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
    }

    fn two_user_dep() -> Deployment {
        Deployment::with_nearest_assignment(
            vec![Point::new(0.0, 0.0), Point::new(500.0, 0.0)],
            vec![Point::new(1000.0, 0.0)],
            vec![Point::new(0.0, 800.0), Point::new(0.0, -900.0)],
        )
    }

    #[test]
    fn channel_state_magnitudes() {
        let cfg = SimConfig::default();
        let ch = ChannelState::build(&two_user_dep(), &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(close(ch.h(0, 0).norm(), 10f64.powf(-4.5), 1e-12));
        assert!(close(ch.q(0, 1), 8e-9, 1e-12));
        assert_eq!(ch.q(0, 1), ch.q(1, 0));
        assert!(ch.q(0, 0).is_infinite());
        assert!(close(ch.g(1, 0).norm(), (500f64.hypot(800.0)).powf(-1.5), 1e-12));
    }

    #[test]
    fn channel_state_deterministic() {
        let cfg = SimConfig::default();
        let a = ChannelState::build(&two_user_dep(), &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = ChannelState::build(&two_user_dep(), &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let c = ChannelState::build(&two_user_dep(), &cfg, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_ne!(a.h_phase(0, 0), c.h_phase(0, 0));
    }

    #[test]
    fn coincident_user_and_eavesdropper() {
        let dep = Deployment::with_nearest_assignment(
            vec![Point::new(10.0, 10.0)],
            vec![Point::new(1000.0, 0.0)],
            vec![Point::new(10.0, 10.0), Point::new(0.0, 50.0)],
        );
        let err = ChannelState::build(&dep, &SimConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::CoincidentNodes(_))));
    }

    #[test]
    fn nearest_assignment_ties_lowest() {
        let a = nearest_assignment(&[Point::new(0.0, 0.0)], &[Point::new(1.0, 0.0), Point::new(-1.0, 0.0)]);
        assert_eq!(a, vec![0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn magnitude_ignores_phase(x in 1.0f64..3000.0, y in -3000.0f64..3000.0, mu in 2.0f64..5.0, phase in -10.0f64..10.0) {
                let a = Point::new(0.0, 0.0);
                let b = Point::new(x, y);
                let g = channel_gain(a, b, mu, phase).unwrap();
                let d = a.distance(&b);
                prop_assert!((g.norm() - d.powf(-mu / 2.0)).abs() <= 1e-12 * d.powf(-mu / 2.0));
            }

            #[test]
            fn radius_monotone(p in 1e-4f64..1.0, nu in 1.0f64..100.0, s in 1e-14f64..1e-10, f in 1.01f64..3.0) {
                let base = SimConfig { slot_power: p, exchange_snr: nu, noise_power: s, ..SimConfig::default() };
                let d = max_exchange_distance(&base);
                let more_power = SimConfig { slot_power: p * f, ..base.clone() };
                let more_snr = SimConfig { exchange_snr: nu * f, ..base.clone() };
                let more_noise = SimConfig { noise_power: s * f, ..base.clone() };
                prop_assert!(max_exchange_distance(&more_power) > d);
                prop_assert!(max_exchange_distance(&more_snr) < d);
                prop_assert!(max_exchange_distance(&more_noise) < d);
                let spent = base.exchange_snr * base.noise_power * d.powf(base.pathloss_exp);
                prop_assert!((spent - p).abs() <= 1e-9 * p);
            }
        }
    }
}
