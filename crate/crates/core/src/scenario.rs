//! Experiment orchestration: random drops, Monte Carlo sweeps over the
//! network size, and mobility traces with periodic re-formation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{ChannelState, Deployment, Point, SimConfig};
use crate::error::{Error, Result};
use crate::game::{FormationTrace, Game, Partition, RoundOutcome, SweepOrder};
use crate::secrecy::{noncoop_secrecy_capacity, Payoff};

/// Uniform drop of all nodes on the square; users go to their closest destination.
pub fn random_deployment<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Deployment {
    let side = cfg.area_side;
    let mut placed: Vec<Point> = Vec::with_capacity(cfg.n_users + cfg.n_destinations + cfg.n_eavesdroppers);
    let mut draw = |rng: &mut R| loop {
        let p = Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side);
        if !placed.contains(&p) {
            placed.push(p);
            return p;
        }
    };
    let user_pos: Vec<Point> = (0..cfg.n_users).map(|_| draw(rng)).collect();
    let dest_pos: Vec<Point> = (0..cfg.n_destinations).map(|_| draw(rng)).collect();
    let eve_pos: Vec<Point> = (0..cfg.n_eavesdroppers).map(|_| draw(rng)).collect();
    Deployment::with_nearest_assignment(user_pos, dest_pos, eve_pos)
}

/// Deployment and channel table for the drop seeded by `cfg.rng_seed`.
pub fn draw_instance(cfg: &SimConfig) -> Result<(Deployment, ChannelState)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let dep = random_deployment(cfg, &mut rng);
    let ch = ChannelState::build(&dep, cfg, &mut rng)?;
    Ok((dep, ch))
}

/// Realized utility in bits/s/Hz; a slot with no usable power carries nothing.
pub fn utility(p: Payoff) -> f64 {
    p.finite().unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub n_users: usize,
    pub drop_index: usize,
    pub seed: u64,
    pub avg_coop_utility: f64,
    pub avg_noncoop_utility: f64,
    /// `None` when the non-cooperative average is zero.
    pub improvement_pct: Option<f64>,
    /// `size_histogram[s]` counts coalitions of size `s`.
    pub size_histogram: Vec<usize>,
    pub sweeps: usize,
}

impl MetricsRecord {
    pub fn is_grand_coalition(&self) -> bool {
        self.n_users > 1 && self.size_histogram.get(self.n_users).copied() == Some(1)
    }
}

/// Full output of one drop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropOutcome {
    pub deployment: Deployment,
    pub round: RoundOutcome,
    pub noncoop: Vec<f64>,
    pub metrics: MetricsRecord,
}

pub fn improvement_pct(coop: f64, noncoop: f64) -> Option<f64> {
    (noncoop > 0.0).then(|| 100.0 * (coop - noncoop) / noncoop)
}

fn histogram(p: &Partition) -> Vec<usize> {
    let mut hist = vec![0; p.n_users() + 1];
    for s in p.sizes() {
        hist[s] += 1;
    }
    hist
}

/// One drop from the all-singleton partition.
pub fn simulate_drop(cfg: &SimConfig, drop_index: usize, order: SweepOrder) -> Result<DropOutcome> {
    let (deployment, ch) = draw_instance(cfg)?;
    let game = Game::new(&ch, cfg);
    let round = game.run_round(&Partition::singletons(ch.n_users()), order)?;
    let noncoop: Vec<f64> = (0..ch.n_users()).map(|u| noncoop_secrecy_capacity(u, &ch, cfg)).collect();
    let n = ch.n_users() as f64;
    let avg_coop = round.payoffs.iter().map(|&p| utility(p)).sum::<f64>() / n;
    let avg_noncoop = noncoop.iter().sum::<f64>() / n;
    let metrics = MetricsRecord {
        n_users: ch.n_users(),
        drop_index,
        seed: cfg.rng_seed,
        avg_coop_utility: avg_coop,
        avg_noncoop_utility: avg_noncoop,
        improvement_pct: improvement_pct(avg_coop, avg_noncoop),
        size_histogram: histogram(&round.partition),
        sweeps: round.trace.sweeps,
    };
    Ok(DropOutcome { deployment, round, noncoop, metrics })
}

pub fn run_simulation(cfg: &SimConfig) -> Result<MetricsRecord> {
    Ok(simulate_drop(cfg, 0, SweepOrder::Ascending)?.metrics)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of drop `drop` at network size `n` under base seed `base`.
pub fn drop_seed(base: u64, n: usize, drop: usize) -> u64 {
    splitmix64(base ^ splitmix64(((n as u64) << 32) | drop as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub n_users: usize,
    pub drops: usize,
    pub mean_coop: f64,
    pub stderr_coop: f64,
    pub mean_noncoop: f64,
    pub stderr_noncoop: f64,
    /// Relative gain of the mean cooperative utility over the mean non-cooperative one.
    pub improvement_pct: Option<f64>,
    pub grand_coalitions: usize,
    pub records: Vec<MetricsRecord>,
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Fresh seeded drops for every network size. Drops run in parallel; results
/// are reduced in drop order, so output does not depend on scheduling.
pub fn sweep(cfg: &SimConfig, n_values: &[usize], drops_per_n: usize) -> Result<Vec<SweepPoint>> {
    if drops_per_n == 0 {
        return Err(Error::Config { key: "drops".into(), reason: "must be at least 1".into() });
    }
    cfg.validate()?;
    let mut out = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let records: Vec<MetricsRecord> = (0..drops_per_n)
            .into_par_iter()
            .map(|d| {
                let drop_cfg = cfg
                    .clone()
                    .with_counts(n, cfg.n_destinations, cfg.n_eavesdroppers)
                    .with_seed(drop_seed(cfg.rng_seed, n, d));
                simulate_drop(&drop_cfg, d, SweepOrder::Ascending).map(|o| o.metrics)
            })
            .collect::<Result<_>>()?;
        let coop: Vec<f64> = records.iter().map(|r| r.avg_coop_utility).collect();
        let noncoop: Vec<f64> = records.iter().map(|r| r.avg_noncoop_utility).collect();
        let (mean_coop, stderr_coop) = mean_stderr(&coop);
        let (mean_noncoop, stderr_noncoop) = mean_stderr(&noncoop);
        out.push(SweepPoint {
            n_users: n,
            drops: drops_per_n,
            mean_coop,
            stderr_coop,
            mean_noncoop,
            stderr_noncoop,
            improvement_pct: improvement_pct(mean_coop, mean_noncoop),
            grand_coalitions: records.iter().filter(|r| r.is_grand_coalition()).count(),
            records,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    User,
    Dest,
    Eve,
}

/// Piecewise-linear user trajectories. Users without waypoints stay put.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MobilityTrace {
    pub waypoints: BTreeMap<usize, Vec<(f64, Point)>>,
    /// Seconds between re-formation instants.
    pub period: f64,
    /// Fixed positions overriding the base deployment before the walk starts.
    pub placements: Vec<(NodeKind, usize, Point)>,
}

impl MobilityTrace {
    pub fn new(waypoints: BTreeMap<usize, Vec<(f64, Point)>>, period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidTrace("period must be positive".into()));
        }
        for (user, pts) in &waypoints {
            if pts.is_empty() {
                return Err(Error::InvalidTrace(format!("user {user} has no waypoints")));
            }
            if pts.windows(2).any(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater)) {
                return Err(Error::InvalidTrace(format!("waypoint times for user {user} are not strictly increasing")));
            }
        }
        Ok(MobilityTrace { waypoints, period, placements: Vec::new() })
    }

    /// Straight-line walk of `user` from `from` to `to` over `[0, duration]`.
    pub fn straight_line(user: usize, from: Point, to: Point, duration: f64, period: f64) -> Result<Self> {
        let mut w = BTreeMap::new();
        w.insert(user, vec![(0.0, from), (duration, to)]);
        MobilityTrace::new(w, period)
    }

    /// Parses `period = <s>`, `<user> <time> <x> <y>` waypoint lines and
    /// `place user|dest|eve <index> <x> <y>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut period = None;
        let mut placements = Vec::new();
        let mut waypoints: BTreeMap<usize, Vec<(f64, Point)>> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::InvalidTrace(format!("line {}: {what}", lineno + 1));
            if let Some((key, value)) = line.split_once('=') {
                if key.trim() != "period" {
                    return Err(bad(&format!("unknown key '{}'", key.trim())));
                }
                period = Some(value.trim().parse::<f64>().map_err(|_| bad("period is not a number"))?);
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "place" {
                if fields.len() != 5 {
                    return Err(bad("expected 'place <kind> <index> <x> <y>'"));
                }
                let kind = match fields[1] {
                    "user" => NodeKind::User,
                    "dest" => NodeKind::Dest,
                    "eve" => NodeKind::Eve,
                    other => return Err(bad(&format!("unknown node kind '{other}'"))),
                };
                let idx = fields[2].parse::<usize>().map_err(|_| bad("index is not an integer"))?;
                let x = fields[3].parse::<f64>().map_err(|_| bad("x is not a number"))?;
                let y = fields[4].parse::<f64>().map_err(|_| bad("y is not a number"))?;
                placements.push((kind, idx, Point::new(x, y)));
                continue;
            }
            if fields.len() != 4 {
                return Err(bad("expected '<user> <time> <x> <y>'"));
            }
            let user = fields[0].parse::<usize>().map_err(|_| bad("user is not an index"))?;
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("time and position must be numbers"))?;
            waypoints.entry(user).or_default().push((nums[0], Point::new(nums[1], nums[2])));
        }
        let period = period.ok_or_else(|| Error::InvalidTrace("missing 'period'".into()))?;
        Ok(MobilityTrace { placements, ..MobilityTrace::new(waypoints, period)? })
    }

    pub fn start(&self) -> f64 {
        self.waypoints.values().map(|w| w[0].0).fold(f64::INFINITY, f64::min)
    }

    pub fn end(&self) -> f64 {
        self.waypoints.values().map(|w| w[w.len() - 1].0).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Re-formation instants from the first to the last waypoint time.
    pub fn instants(&self) -> Vec<f64> {
        if self.waypoints.is_empty() {
            return vec![0.0];
        }
        let (start, end) = (self.start(), self.end());
        let steps = ((end - start) / self.period + 1e-9).floor() as usize;
        (0..=steps).map(|i| start + i as f64 * self.period).collect()
    }

    /// Interpolated position, clamped to the first and last waypoints.
    pub fn position(&self, user: usize, t: f64) -> Option<Point> {
        let pts = self.waypoints.get(&user)?;
        if t <= pts[0].0 {
            return Some(pts[0].1);
        }
        for w in pts.windows(2) {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            if t <= t1 {
                let a = (t - t0) / (t1 - t0);
                return Some(Point::new(p0.x + a * (p1.x - p0.x), p0.y + a * (p1.y - p0.y)));
            }
        }
        Some(pts[pts.len() - 1].1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MobilitySnapshot {
    pub time: f64,
    pub positions: Vec<Point>,
    pub partition: Partition,
    pub payoffs: Vec<Payoff>,
    pub trace: FormationTrace,
}

/// Re-runs formation at every instant of `trace`, each time starting from the
/// previous partition. Phase offsets are redrawn from `cfg.rng_seed` in the same
/// order at each instant, so a link keeps its phase while its endpoints move.
pub fn run_mobility(cfg: &SimConfig, base: &Deployment, trace: &MobilityTrace) -> Result<Vec<MobilitySnapshot>> {
    cfg.validate()?;
    if let Some(&u) = trace.waypoints.keys().find(|&&u| u >= base.n_users()) {
        return Err(Error::InvalidTrace(format!("user {u} is not in the deployment")));
    }
    let mut base = base.clone();
    for &(kind, idx, p) in &trace.placements {
        let nodes = match kind {
            NodeKind::User => &mut base.user_pos,
            NodeKind::Dest => &mut base.dest_pos,
            NodeKind::Eve => &mut base.eve_pos,
        };
        match nodes.get_mut(idx) {
            Some(slot) => *slot = p,
            None => return Err(Error::InvalidTrace(format!("no {kind:?} with index {idx}").to_lowercase())),
        }
    }
    let side = cfg.area_side;
    let outside = |p: &Point| p.x < 0.0 || p.y < 0.0 || p.x > side || p.y > side;
    if trace.placements.iter().any(|(_, _, p)| outside(p)) {
        return Err(Error::InvalidTrace("placement outside the deployment area".into()));
    }
    for pts in trace.waypoints.values() {
        if pts.iter().any(|(_, p)| outside(p)) {
            return Err(Error::InvalidTrace("waypoint outside the deployment area".into()));
        }
    }
    let mut partition = Partition::singletons(base.n_users());
    let mut out = Vec::new();
    for t in trace.instants() {
        let mut dep = base.clone();
        for u in 0..dep.n_users() {
            if let Some(p) = trace.position(u, t) {
                dep.user_pos[u] = p;
            }
        }
        dep.reassign_nearest();
        let ch = ChannelState::build(&dep, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.rng_seed))?;
        let game = Game::new(&ch, cfg);
        let round = game.run_round(&partition, SweepOrder::Ascending)?;
        partition = round.partition.clone();
        out.push(MobilitySnapshot {
            time: t,
            positions: dep.user_pos.clone(),
            partition: round.partition,
            payoffs: round.payoffs,
            trace: round.trace,
        });
    }
    Ok(out)
}
