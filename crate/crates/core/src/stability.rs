//! Partition stability: the merge/split (`D_hp`) conditions for any partition,
//! and an exhaustive search for the strongly stable (`D_c`) partition on small
//! networks.

use std::ops::ControlFlow;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Game, Partition};
use crate::partitions::visit_admissible;
use crate::secrecy::{admissible_size, Coalition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Some coalition prefers one of its admissible splits.
    Split,
    /// Some set of coalitions prefers to merge.
    Merge,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub condition: Condition,
    /// Coalitions of the partition that would defect.
    pub from: Vec<Coalition>,
    /// What they would form instead.
    pub to: Vec<Coalition>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub dhp_stable: bool,
    pub violation: Option<Violation>,
    pub dc_partition: Option<Partition>,
    pub algorithm_matches_dc: Option<bool>,
}

/// Checks that no coalition of `p` prefers a split and no merge-feasible set
/// of coalitions prefers its union. Returns the first witness otherwise.
///
/// Unions are limited to sets of coalitions whose combined diameter stays
/// below the exchange radius and whose size is admissible; any other union
/// leaves someone with the sentinel payoff and cannot be preferred.
pub fn is_dhp_stable(game: &Game<'_>, p: &Partition) -> Result<StabilityReport> {
    let k = game.n_eavesdroppers();
    if let Some(c) = p.coalitions().iter().find(|c| !admissible_size(c.len(), k)) {
        return Err(Error::InvalidPartition(format!("coalition {c} has an inadmissible size")));
    }
    for t in p.coalitions() {
        if let Some(split) = game.preferred_splits(t)?.into_iter().next() {
            return Ok(unstable(Violation { condition: Condition::Split, from: vec![t.clone()], to: split }));
        }
    }

    let coalitions = p.coalitions();
    let r = coalitions.len();
    let compatible: Vec<Vec<bool>> = (0..r)
        .map(|a| (0..r).map(|b| a != b && game.within_reach(&[&coalitions[a], &coalitions[b]])).collect())
        .collect();
    let mut examined = 0u64;
    let mut witness: Option<Violation> = None;
    let mut chosen: Vec<usize> = Vec::new();

    struct Search<'s, 'g> {
        game: &'s Game<'g>,
        coalitions: &'s [Coalition],
        compatible: &'s [Vec<bool>],
        cap: u64,
        k: usize,
    }

    fn extend(
        s: &Search<'_, '_>,
        start: usize,
        size: usize,
        chosen: &mut Vec<usize>,
        examined: &mut u64,
        witness: &mut Option<Violation>,
    ) -> Result<()> {
        for next in start..s.coalitions.len() {
            if witness.is_some() {
                return Ok(());
            }
            if !chosen.iter().all(|&c| s.compatible[c][next]) {
                continue;
            }
            chosen.push(next);
            let new_size = size + s.coalitions[next].len();
            if chosen.len() >= 2 {
                *examined += 1;
                if *examined > s.cap {
                    return Err(Error::TooLarge(format!("more than {} coalition subsets", s.cap)));
                }
                if new_size > s.k {
                    let parts: Vec<Coalition> = chosen.iter().map(|&c| s.coalitions[c].clone()).collect();
                    let union = parts.iter().skip(1).fold(parts[0].clone(), |acc, c| acc.union(c));
                    if s.game.prefers(std::slice::from_ref(&union), &parts)? {
                        *witness = Some(Violation { condition: Condition::Merge, from: parts, to: vec![union] });
                        chosen.pop();
                        return Ok(());
                    }
                }
            }
            extend(s, next + 1, new_size, chosen, examined, witness)?;
            chosen.pop();
        }
        Ok(())
    }

    let search = Search { game, coalitions, compatible: &compatible, cap: game.config().subset_cap, k };
    extend(&search, 0, 0, &mut chosen, &mut examined, &mut witness)?;
    Ok(match witness {
        Some(v) => unstable(v),
        None => StabilityReport { dhp_stable: true, violation: None, dc_partition: None, algorithm_matches_dc: None },
    })
}

fn unstable(v: Violation) -> StabilityReport {
    StabilityReport { dhp_stable: false, violation: Some(v), dc_partition: None, algorithm_matches_dc: None }
}

fn check_dc_size(game: &Game<'_>) -> Result<usize> {
    let n = game.channel().n_users();
    let cap = game.config().dc_size_cap.min(20);
    if n > cap {
        return Err(Error::TooLarge(format!("{n} users exceeds the exhaustive search cap of {cap}")));
    }
    Ok(n)
}

/// `true` when `u` is preferred to every admissible split of it.
fn union_beats_all_splits(game: &Game<'_>, u: &Coalition) -> Result<bool> {
    let mut result = Ok(true);
    let _ = visit_admissible(u.members(), game.n_eavesdroppers(), |blocks| {
        if blocks.len() < 2 {
            return ControlFlow::Continue(());
        }
        let parts: Vec<Coalition> =
            blocks.iter().map(|b| Coalition::new(b.clone()).expect("non-empty block")).collect();
        match game.prefers(std::slice::from_ref(u), &parts) {
            Ok(true) => ControlFlow::Continue(()),
            Ok(false) => {
                result = Ok(false);
                ControlFlow::Break(())
            }
            Err(e) => {
                result = Err(e);
                ControlFlow::Break(())
            }
        }
    });
    result
}

/// Every admissible partition meeting both strong-stability conditions:
///
/// 1. inside each block, every admissible sub-coalition is preferred to each
///    of its own admissible splits;
/// 2. every admissible coalition not contained in a single block prefers
///    (Pareto) its projection onto the partition to staying together.
///
/// Sub-coalitions whose size cannot null the eavesdroppers never form, so the
/// first condition ranges over admissible collections rather than pairs.
pub fn dc_stable_partitions(game: &Game<'_>) -> Result<Vec<Partition>> {
    let n = check_dc_size(game)?;
    let k = game.n_eavesdroppers();

    let mut coalitions: Vec<Coalition> = Vec::new();
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size > k {
            coalitions.push(Coalition::new((0..n).filter(|i| mask >> i & 1 == 1).collect())?);
        }
    }
    let mut strong_union = std::collections::HashMap::new();
    for c in &coalitions {
        strong_union.insert(c.clone(), union_beats_all_splits(game, c)?);
    }

    let users: Vec<usize> = (0..n).collect();
    let mut found = Vec::new();
    let mut failure: Option<Error> = None;
    let _ = visit_admissible(&users, k, |blocks| {
        let parts: Vec<Coalition> =
            blocks.iter().map(|b| Coalition::new(b.clone()).expect("non-empty block")).collect();
        let outcome = (|| -> Result<bool> {
            // condition 1
            for block in parts.iter().filter(|b| b.len() > k) {
                for c in coalitions.iter().filter(|c| c.is_subset_of(block)) {
                    if !strong_union[c] {
                        return Ok(false);
                    }
                }
            }
            // condition 2
            for g in &coalitions {
                if parts.iter().any(|b| g.is_subset_of(b)) {
                    continue;
                }
                let projection: Vec<Coalition> = parts
                    .iter()
                    .filter_map(|b| {
                        let common: Vec<usize> = g.members().iter().copied().filter(|&u| b.contains(u)).collect();
                        (!common.is_empty()).then(|| Coalition::new(common).expect("non-empty"))
                    })
                    .collect();
                if !game.prefers(&projection, std::slice::from_ref(g))? {
                    return Ok(false);
                }
            }
            Ok(true)
        })();
        match outcome {
            Ok(true) => {
                found.push(Partition::new(parts, n).expect("enumerated partitions are valid"));
                ControlFlow::Continue(())
            }
            Ok(false) => ControlFlow::Continue(()),
            Err(e) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(found),
    }
}

/// The strongly stable partition, if the network has one.
pub fn find_dc_stable(game: &Game<'_>) -> Result<Option<Partition>> {
    Ok(dc_stable_partitions(game)?.into_iter().next())
}

/// A coalition's value set holds exactly one payoff vector: evaluating it
/// twice yields the same vector, sentinel entries included.
pub fn is_singleton_value_set(game: &Game<'_>, s: &Coalition) -> Result<bool> {
    if !game.is_admissible(s) {
        return Err(Error::InadmissibleSize { size: s.len(), eavesdroppers: game.n_eavesdroppers() });
    }
    let first = crate::secrecy::coalition_value(s, game.channel(), game.config())?;
    let second = crate::secrecy::coalition_value(s, game.channel(), game.config())?;
    Ok(first == second && first.members.len() == s.len())
}

/// Stability report for `p`, plus the strong-stability comparison when the
/// network is small enough for exhaustive search.
pub fn stability_report(game: &Game<'_>, p: &Partition, with_dc: bool) -> Result<StabilityReport> {
    let mut report = is_dhp_stable(game, p)?;
    if with_dc && game.channel().n_users() <= game.config().dc_size_cap {
        let dc = find_dc_stable(game)?;
        report.algorithm_matches_dc = dc.as_ref().map(|d| d == p);
        report.dc_partition = dc;
    }
    Ok(report)
}
