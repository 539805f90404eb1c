//! Per-coalition physics: secrecy capacities, exchange costs, nulling
//! beamformers and the coalition value.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::channel::{ChannelState, SimConfig};
use crate::error::{Error, Result};

/// A non-empty sorted set of user ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Coalition(Vec<usize>);

impl Coalition {
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidCoalition("empty coalition".into()));
        }
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidCoalition(format!("duplicate members in {members:?}")));
        }
        Ok(Coalition(members))
    }

    pub fn singleton(user: usize) -> Self {
        Coalition(vec![user])
    }

    /// Builds from members already known to be sorted and unique.
    pub(crate) fn from_sorted(members: Vec<usize>) -> Self {
        debug_assert!(!members.is_empty());
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        Coalition(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.0.len() == 1
    }

    pub fn contains(&self, user: usize) -> bool {
        self.0.binary_search(&user).is_ok()
    }

    pub fn lowest(&self) -> usize {
        self.0[0]
    }

    pub fn union(&self, other: &Coalition) -> Coalition {
        let mut m = Vec::with_capacity(self.len() + other.len());
        m.extend_from_slice(&self.0);
        m.extend_from_slice(&other.0);
        m.sort_unstable();
        m.dedup();
        Coalition(m)
    }

    pub fn is_subset_of(&self, other: &Coalition) -> bool {
        self.0.iter().all(|&u| other.contains(u))
    }

    pub fn is_disjoint(&self, other: &Coalition) -> bool {
        self.0.iter().all(|&u| !other.contains(u))
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (idx, m) in self.0.iter().enumerate() {
            if idx > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

/// `true` when a coalition of `size` users can null `eavesdroppers` eavesdroppers
/// or is a lone user.
pub fn admissible_size(size: usize, eavesdroppers: usize) -> bool {
    size == 1 || size > eavesdroppers
}

/// Individual payoff in bits/s/Hz, or the infeasibility sentinel.
///
/// `NegInfinity` orders below every finite value and equals itself.
#[derive(Debug, Clone, Copy)]
pub enum Payoff {
    NegInfinity,
    Finite(f64),
}

impl Payoff {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Payoff::Finite(v) => Some(*v),
            Payoff::NegInfinity => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Payoff::Finite(_))
    }
}

impl PartialEq for Payoff {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Payoff {}

impl PartialOrd for Payoff {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Payoff {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Payoff::NegInfinity, Payoff::NegInfinity) => Ordering::Equal,
            (Payoff::NegInfinity, Payoff::Finite(_)) => Ordering::Less,
            (Payoff::Finite(_), Payoff::NegInfinity) => Ordering::Greater,
            (Payoff::Finite(a), Payoff::Finite(b)) => a.total_cmp(b),
        }
    }
}

impl fmt::Display for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::NegInfinity => write!(f, "-inf"),
            Payoff::Finite(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for Payoff {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Payoff::NegInfinity => s.serialize_str("-inf"),
            Payoff::Finite(v) => s.serialize_f64(*v),
        }
    }
}

/// Intermediate terms of a member's cooperative payoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueBreakdown {
    /// Cooperative secrecy capacity `v_i(S)`; zero when infeasible.
    pub gain: f64,
    /// Leakage during the exchange broadcast, `c_i(S)`.
    pub cost: f64,
    /// Power left for the beamformed data phase, `P_i^S`.
    pub data_power: f64,
    /// Power spent on the exchange broadcast.
    pub exchange_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberPayoff {
    pub user: usize,
    pub payoff: Payoff,
    pub breakdown: ValueBreakdown,
}

/// The unique payoff vector a coalition can deliver to its members.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffVector {
    pub coalition: Coalition,
    pub members: Vec<MemberPayoff>,
}

impl PayoffVector {
    pub fn get(&self, user: usize) -> Option<Payoff> {
        self.members.iter().find(|m| m.user == user).map(|m| m.payoff)
    }

    pub fn payoffs(&self) -> impl Iterator<Item = Payoff> + '_ {
        self.members.iter().map(|m| m.payoff)
    }

    pub fn has_neg_infinity(&self) -> bool {
        self.members.iter().any(|m| !m.payoff.is_finite())
    }

    /// All members get the sentinel; used for sizes that cannot null the eavesdroppers.
    pub fn infeasible(coalition: &Coalition) -> Self {
        PayoffVector {
            coalition: coalition.clone(),
            members: coalition
                .members()
                .iter()
                .map(|&user| MemberPayoff {
                    user,
                    payoff: Payoff::NegInfinity,
                    breakdown: ValueBreakdown { gain: 0.0, cost: 0.0, data_power: 0.0, exchange_power: 0.0 },
                })
                .collect(),
        }
    }
}

fn shannon(snr: f64) -> f64 {
    (1.0 + snr).log2()
}

/// Direct-transmission secrecy capacity with the whole slot and full power.
pub fn noncoop_secrecy_capacity(user: usize, ch: &ChannelState, cfg: &SimConfig) -> f64 {
    let p = cfg.slot_power;
    let s2 = cfg.noise_power;
    let dest = shannon(p * ch.h(user, ch.destination(user)).norm_sqr() / s2);
    let eve = (0..ch.n_eavesdroppers()).map(|k| shannon(p * ch.g(user, k).norm_sqr() / s2)).fold(0.0, f64::max);
    (dest - eve).max(0.0)
}

fn check_member(user: usize, s: &Coalition) -> Result<()> {
    if s.contains(user) {
        Ok(())
    } else {
        Err(Error::NotAMember { user, coalition: s.members().to_vec() })
    }
}

/// Member of `s` farthest from `user`; `None` for a singleton.
pub fn farthest_member(user: usize, s: &Coalition, ch: &ChannelState) -> Option<usize> {
    s.members()
        .iter()
        .copied()
        .filter(|&j| j != user)
        .max_by(|&a, &b| ch.distance(user, a).total_cmp(&ch.distance(user, b)))
}

/// Power for broadcasting to the farthest partner at the exchange SNR target.
pub fn exchange_power(user: usize, s: &Coalition, ch: &ChannelState, cfg: &SimConfig) -> Result<f64> {
    check_member(user, s)?;
    Ok(match farthest_member(user, s, ch) {
        None => 0.0,
        Some(far) => cfg.exchange_snr * cfg.noise_power / ch.q(user, far),
    })
}

pub fn remaining_power(user: usize, s: &Coalition, ch: &ChannelState, cfg: &SimConfig) -> Result<f64> {
    Ok((cfg.slot_power - exchange_power(user, s, ch, cfg)?).max(0.0))
}

/// Secrecy capacity leaked to the best eavesdropper during the exchange broadcast.
pub fn exchange_leakage_cost(user: usize, s: &Coalition, ch: &ChannelState, cfg: &SimConfig) -> Result<f64> {
    let p_bar = exchange_power(user, s, ch, cfg)?;
    if p_bar == 0.0 {
        return Ok(0.0);
    }
    Ok(leakage_from_power(user, p_bar, ch, cfg))
}

pub(crate) fn leakage_from_power(user: usize, p_bar: f64, ch: &ChannelState, cfg: &SimConfig) -> f64 {
    (0..ch.n_eavesdroppers())
        .map(|k| 0.5 * shannon(p_bar * ch.g(user, k).norm_sqr() / cfg.noise_power))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    /// One weight per coalition member, in member order.
    pub weights: Vec<Complex64>,
    /// Amplitude delivered to the slot owner's destination.
    pub beta: f64,
    pub data_power: f64,
    /// Condition number of the Gram matrix `G G^H`.
    pub gram_condition: f64,
    pub feasible: bool,
}

impl BeamformingSolution {
    fn infeasible(n: usize, data_power: f64, gram_condition: f64) -> Self {
        BeamformingSolution {
            weights: vec![Complex64::new(0.0, 0.0); n],
            beta: 0.0,
            data_power,
            gram_condition,
            feasible: false,
        }
    }
}

/// Stacked channel matrix for `owner`'s slot: row 0 holds every member's gain
/// toward the owner's destination, row `k + 1` the gains toward eavesdropper `k`.
pub fn channel_matrix(owner: usize, s: &Coalition, ch: &ChannelState) -> DMatrix<Complex64> {
    let k = ch.n_eavesdroppers();
    let dest = ch.destination(owner);
    DMatrix::from_fn(k + 1, s.len(), |r, c| {
        let j = s.members()[c];
        if r == 0 {
            ch.h(j, dest)
        } else {
            ch.g(j, r - 1)
        }
    })
}

/// Nulling beamformer `w = beta G^H (G G^H)^-1 e` for the slot owned by `owner`.
///
/// Evaluated through a thin QR factorisation `G^H = Q R`, for which
/// `(G G^H)^-1 e = R^-1 R^-H e`, so `w = beta Q y` with `R^H y = e` and
/// `beta^2 = P / |y|^2`. The Gram matrix is never inverted explicitly.
pub fn beamforming_weights(
    owner: usize,
    s: &Coalition,
    ch: &ChannelState,
    cfg: &SimConfig,
) -> Result<BeamformingSolution> {
    check_member(owner, s)?;
    let k = ch.n_eavesdroppers();
    if s.len() <= k {
        return Err(Error::CoalitionTooSmall { size: s.len(), eavesdroppers: k });
    }
    let data_power = remaining_power(owner, s, ch, cfg)?;
    let g = channel_matrix(owner, s, ch);

    let sv = g.singular_values();
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &v| (hi.max(v), lo.min(v)));
    let cond = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    // NaN condition numbers count as singular
    let well_conditioned = cond <= cfg.singular_threshold;
    if !well_conditioned || data_power <= 0.0 {
        return Ok(BeamformingSolution::infeasible(s.len(), data_power, cond));
    }

    let qr = g.adjoint().qr();
    let q = qr.q();
    let r = qr.r();
    let mut e = DVector::<Complex64>::zeros(k + 1);
    e[0] = Complex64::new(1.0, 0.0);
    let Some(y) = r.adjoint().solve_lower_triangular(&e) else {
        return Ok(BeamformingSolution::infeasible(s.len(), data_power, cond));
    };
    let y_norm = y.norm();
    let beta = data_power.sqrt() / y_norm;
    let w = (&q * &y) * Complex64::new(beta, 0.0);

    // G w must equal beta e
    let mut target = DVector::<Complex64>::zeros(k + 1);
    target[0] = Complex64::new(beta, 0.0);
    let residual = (&g * &w - target).norm();
    let verified = residual <= cfg.numeric_tol * g.norm() * w.norm();
    if !verified {
        return Ok(BeamformingSolution::infeasible(s.len(), data_power, cond));
    }

    Ok(BeamformingSolution {
        weights: w.iter().copied().collect(),
        beta,
        data_power,
        gram_condition: cond,
        feasible: true,
    })
}

/// `0.5 log2(1 + beta^2 / sigma^2)`.
pub fn capacity_from_beta(beta: f64, noise_power: f64) -> f64 {
    0.5 * shannon(beta * beta / noise_power)
}

/// Half-slot capacity `0.5 log2(1 + w^H R w / sigma^2)` with `R = h h^H` built from
/// the members' gains toward the owner's destination.
pub fn capacity_from_weights(
    owner: usize,
    s: &Coalition,
    weights: &[Complex64],
    ch: &ChannelState,
    cfg: &SimConfig,
) -> f64 {
    let dest = ch.destination(owner);
    let received: Complex64 = s.members().iter().zip(weights).map(|(&j, w)| ch.h(j, dest) * w).sum();
    0.5 * shannon(received.norm_sqr() / cfg.noise_power)
}

/// Cooperative secrecy capacity of `owner`'s slot; `None` when no nulling
/// beamformer exists.
pub fn coop_secrecy_capacity(owner: usize, s: &Coalition, ch: &ChannelState, cfg: &SimConfig) -> Result<Option<f64>> {
    let sol = beamforming_weights(owner, s, ch, cfg)?;
    if !sol.feasible {
        return Ok(None);
    }
    Ok(Some(capacity_from_weights(owner, s, &sol.weights, ch, cfg)))
}

/// Per-member payoff vector of coalition `s`.
///
/// A lone user transmits directly. In a larger coalition each member's payoff
/// is its beamformed capacity minus its exchange leakage, clamped at zero, or
/// the sentinel when its slot has no power left or no nulling solution exists.
pub fn coalition_value(s: &Coalition, ch: &ChannelState, cfg: &SimConfig) -> Result<PayoffVector> {
    let k = ch.n_eavesdroppers();
    if !admissible_size(s.len(), k) {
        return Err(Error::InadmissibleSize { size: s.len(), eavesdroppers: k });
    }
    if s.is_singleton() {
        let user = s.lowest();
        let c = noncoop_secrecy_capacity(user, ch, cfg);
        return Ok(PayoffVector {
            coalition: s.clone(),
            members: vec![MemberPayoff {
                user,
                payoff: Payoff::Finite(c),
                breakdown: ValueBreakdown { gain: c, cost: 0.0, data_power: cfg.slot_power, exchange_power: 0.0 },
            }],
        });
    }
    let mut members = Vec::with_capacity(s.len());
    for &user in s.members() {
        let p_bar = exchange_power(user, s, ch, cfg)?;
        let data_power = (cfg.slot_power - p_bar).max(0.0);
        let cost = leakage_from_power(user, p_bar, ch, cfg);
        let mut breakdown = ValueBreakdown { gain: 0.0, cost, data_power, exchange_power: p_bar };
        let payoff = if data_power <= 0.0 {
            Payoff::NegInfinity
        } else {
            let sol = beamforming_weights(user, s, ch, cfg)?;
            if sol.feasible {
                let gain = capacity_from_weights(user, s, &sol.weights, ch, cfg);
                breakdown.gain = gain;
                Payoff::Finite((gain - cost).max(0.0))
            } else {
                Payoff::NegInfinity
            }
        };
        members.push(MemberPayoff { user, payoff, breakdown });
    }
    Ok(PayoffVector { coalition: s.clone(), members })
}
