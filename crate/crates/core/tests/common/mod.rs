#![allow(dead_code)]

use num_complex::Complex64;
use physec::channel::{ChannelState, Deployment, Point, SimConfig};
use physec::secrecy::Coalition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A coalition of `size` users scattered within 300 m of each other, with
/// destinations and eavesdroppers anywhere in the area. Returns the
/// configuration, channel, the whole-network coalition and a slot owner.
pub fn clustered_instance(seed: u64, k: usize, size: usize) -> (SimConfig, ChannelState, Coalition, usize) {
    let cfg = SimConfig::default().with_counts(size, 2, k).with_seed(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = Point::new(rng.random_range(500.0..2000.0), rng.random_range(500.0..2000.0));
    let users: Vec<Point> = (0..size)
        .map(|_| {
            let r = 150.0 * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            Point::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect();
    let mut anywhere = |n: usize| -> Vec<Point> {
        (0..n).map(|_| Point::new(rng.random_range(0.0..2500.0), rng.random_range(0.0..2500.0))).collect()
    };
    let dests = anywhere(2);
    let eves = anywhere(k);
    let dep = Deployment::with_nearest_assignment(users, dests, eves);
    let ch = ChannelState::build(&dep, &cfg, &mut rng).expect("distinct points");
    let owner = rng.random_range(0..size);
    let s = Coalition::new((0..size).collect()).unwrap();
    (cfg, ch, s, owner)
}

/// Largest `|h^T w|^2` over `w` with `|w|^2 = power` that nulls every
/// eavesdropper: `power * |P h*|^2`, where `P` projects onto the orthogonal
/// complement of the conjugated eavesdropper channels. Built by modified
/// Gram-Schmidt on plain vectors.
pub fn nullspace_gain(h: &[Complex64], eves: &[Vec<Complex64>], power: f64) -> f64 {
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for g in eves {
        let mut v: Vec<Complex64> = g.iter().map(|x| x.conj()).collect();
        for q in &basis {
            let c = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
        let n = dot(&v, &v).re.sqrt();
        for vi in &mut v {
            *vi /= n;
        }
        basis.push(v);
    }
    let mut u: Vec<Complex64> = h.iter().map(|x| x.conj()).collect();
    for q in &basis {
        let c = dot(q, &u);
        for (ui, qi) in u.iter_mut().zip(q) {
            *ui -= c * qi;
        }
    }
    power * dot(&u, &u).re
}

/// Rows of the instance as plain vectors: gains toward `owner`'s destination,
/// then toward each eavesdropper.
pub fn rows(owner: usize, s: &Coalition, ch: &ChannelState) -> (Vec<Complex64>, Vec<Vec<Complex64>>) {
    let d = ch.destination(owner);
    let h = s.members().iter().map(|&j| ch.h(j, d)).collect();
    let g = (0..ch.n_eavesdroppers()).map(|k| s.members().iter().map(|&j| ch.g(j, k)).collect()).collect();
    (h, g)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Three-user huddle near destination 0 with a two-user group further east.
/// User 2 walks from the huddle to the group over 1310 s; formation reruns
/// every 20 s.
pub fn walk_away_scenario() -> (SimConfig, Deployment, physec::scenario::MobilityTrace) {
    let users = vec![
        Point::new(600.0, 1000.0),
        Point::new(640.0, 1010.0),
        Point::new(610.0, 1045.0),
        Point::new(1900.0, 1000.0),
        Point::new(1940.0, 1040.0),
    ];
    let dests = vec![Point::new(1100.0, 1000.0), Point::new(2400.0, 1000.0)];
    let eves = vec![Point::new(600.0, 1150.0), Point::new(1900.0, 1150.0)];
    let dep = Deployment::with_nearest_assignment(users, dests, eves);
    let cfg = SimConfig::default().with_counts(5, 2, 2).with_seed(11);
    let trace = physec::scenario::MobilityTrace::straight_line(
        2,
        Point::new(610.0, 1045.0),
        Point::new(1920.0, 1100.0),
        1310.0,
        20.0,
    )
    .unwrap();
    (cfg, dep, trace)
}

pub const WALK_TRACE_FILE: &str = "\
# user 2 leaves its huddle and joins the group near (1900, 1000)
period = 20
place user 0 600 1000
place user 1 640 1010
place user 2 610 1045
place user 3 1900 1000
place user 4 1940 1040
place dest 0 1100 1000
place dest 1 2400 1000
place eve 0 600 1150
place eve 1 1900 1150
2 0 610 1045
2 1310 1920 1100
";
