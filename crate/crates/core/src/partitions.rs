//! Set-partition enumeration over restricted growth strings, limited to
//! partitions whose blocks all have an admissible size (1 or more than `k`).

use std::ops::ControlFlow;

use crate::secrecy::{admissible_size, Coalition};

/// Visits every partition of `items` whose blocks are all admissible for `k`
/// eavesdroppers. Blocks are passed in order of their lowest element, each
/// block sorted ascending (for sorted `items`).
///
/// Branches that can no longer reach admissible block sizes are pruned: a
/// block of size 2..=k still needs `k + 1 - size` more elements.
pub fn visit_admissible<F>(items: &[usize], k: usize, mut visit: F) -> ControlFlow<()>
where
    F: FnMut(&[Vec<usize>]) -> ControlFlow<()>,
{
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    recurse(items, 0, k, &mut blocks, &mut visit)
}

fn deficit(blocks: &[Vec<usize>], k: usize) -> usize {
    blocks.iter().map(|b| if b.len() >= 2 && b.len() <= k { k + 1 - b.len() } else { 0 }).sum()
}

fn recurse<F>(items: &[usize], idx: usize, k: usize, blocks: &mut Vec<Vec<usize>>, visit: &mut F) -> ControlFlow<()>
where
    F: FnMut(&[Vec<usize>]) -> ControlFlow<()>,
{
    let remaining = items.len() - idx;
    if deficit(blocks, k) > remaining {
        return ControlFlow::Continue(());
    }
    if idx == items.len() {
        debug_assert!(blocks.iter().all(|b| admissible_size(b.len(), k)));
        return visit(blocks);
    }
    let item = items[idx];
    for b in 0..blocks.len() {
        blocks[b].push(item);
        let flow = recurse(items, idx + 1, k, blocks, visit);
        blocks[b].pop();
        flow?;
    }
    blocks.push(vec![item]);
    let flow = recurse(items, idx + 1, k, blocks, visit);
    blocks.pop();
    flow
}

/// All admissible partitions of `items` with at least `min_blocks` blocks, sorted
/// by block count and then lexicographically by their block lists.
pub fn admissible_partitions(items: &[usize], k: usize, min_blocks: usize) -> Vec<Vec<Coalition>> {
    let mut sorted = items.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<Vec<Coalition>> = Vec::new();
    let _ = visit_admissible(&sorted, k, |blocks| {
        if blocks.len() >= min_blocks {
            out.push(blocks.iter().map(|b| Coalition::from_sorted(b.clone())).collect());
        }
        ControlFlow::Continue(())
    });
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}
