use std::collections::{BTreeSet, HashSet};

use super::{AddrRange, DecodingNet, Name, NetError, NodeId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Accepts,
    TranslatesTo(Vec<Name>),
    Undecodable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolveResult {
    /// Every branch ended in an accepting node; the set of accepting names.
    Accepted(BTreeSet<Name>),
    /// First dead-end name, in dest-list order.
    Undecodable(Name),
    /// The cycle, starting at the first repeated name.
    Loop(Vec<Name>),
}

impl ResolveResult {
    pub fn accepted(&self) -> Option<&BTreeSet<Name>> {
        match self {
            ResolveResult::Accepted(set) => Some(set),
            _ => None,
        }
    }

    /// The single accepting name, if resolution is unambiguous.
    pub fn unique(&self) -> Option<Name> {
        match self.accepted() {
            Some(set) if set.len() == 1 => set.iter().next().copied(),
            _ => None,
        }
    }
}

/// One decoding step at `n`. Accept takes priority over translate when a net
/// allows the two to overlap.
pub fn decode_step(net: &DecodingNet, n: Name) -> Result<StepResult, NetError> {
    let spec = net.node(n.node)?;
    if spec.accepts(n.addr) {
        return Ok(StepResult::Accepts);
    }
    Ok(match spec.entry_for(n.addr) {
        Some(entry) => StepResult::TranslatesTo(entry.images(n.addr).collect()),
        None => StepResult::Undecodable,
    })
}

/// Follows translations from `start` across all branches.
///
/// Branches are explored depth first in dest-list order. The first
/// non-accepting outcome wins; otherwise the union of accepting names is
/// returned.
pub fn resolve(net: &DecodingNet, start: Name) -> Result<ResolveResult, NetError> {
    let mut accepted = BTreeSet::new();
    let mut path: Vec<Name> = Vec::new();
    let mut on_path: HashSet<Name> = HashSet::new();
    let mut stack: Vec<(Vec<Name>, usize)> = Vec::new();
    let mut pending = Some(start);

    loop {
        if let Some(n) = pending.take() {
            if on_path.contains(&n) {
                let first = path.iter().position(|p| *p == n).unwrap_or(0);
                return Ok(ResolveResult::Loop(path[first..].to_vec()));
            }
            match decode_step(net, n)? {
                StepResult::Accepts => {
                    accepted.insert(n);
                }
                StepResult::Undecodable => return Ok(ResolveResult::Undecodable(n)),
                StepResult::TranslatesTo(images) => {
                    path.push(n);
                    on_path.insert(n);
                    stack.push((images, 0));
                }
            }
        }
        let Some((images, next)) = stack.last_mut() else { break };
        if *next < images.len() {
            pending = Some(images[*next]);
            *next += 1;
        } else {
            stack.pop();
            if let Some(done) = path.pop() {
                on_path.remove(&done);
            }
        }
    }
    Ok(ResolveResult::Accepted(accepted))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceOutcome {
    /// Bytes accepted starting at this name.
    Accepted(Name),
    /// Bytes not decodable; the dead-end name of the first byte.
    Undecodable(Name),
    /// Bytes that revisit a name already on their translation path.
    Loop(Name),
}

/// Outcome for bytes `[offset, offset + len)` of the queried range along one
/// branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangePiece {
    pub offset: u64,
    pub len: u64,
    pub outcome: PieceOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RangeResolution {
    pub pieces: Vec<RangePiece>,
}

impl RangeResolution {
    /// Accepted pieces as `(offset, start name, len)`.
    pub fn accepted(&self) -> impl Iterator<Item = (u64, Name, u64)> + '_ {
        self.pieces.iter().filter_map(|p| match p.outcome {
            PieceOutcome::Accepted(n) => Some((p.offset, n, p.len)),
            _ => None,
        })
    }

    pub fn all_accepted(&self) -> bool {
        self.pieces.iter().all(|p| matches!(p.outcome, PieceOutcome::Accepted(_)))
    }

    pub fn has_loop(&self) -> bool {
        self.pieces.iter().any(|p| matches!(p.outcome, PieceOutcome::Loop(_)))
    }
}

struct Work {
    node: NodeId,
    local: u64,
    offset: u64,
    len: u64,
    /// (node, local - offset) pairs already on this branch's path.
    path: Vec<(NodeId, i128)>,
}

/// Resolves every byte of `[start, start + size)` at once, splitting the range
/// wherever accept ranges or translate entries split it.
pub fn resolve_range(net: &DecodingNet, start: Name, size: u64) -> Result<RangeResolution, NetError> {
    let range = AddrRange::new(start.addr, size)?;
    let mut out = RangeResolution::default();
    let mut work = vec![Work {
        node: start.node,
        local: range.base(),
        offset: 0,
        len: size,
        path: Vec::new(),
    }];

    while let Some(w) = work.pop() {
        let key = (w.node, w.local as i128 - w.offset as i128);
        if w.path.contains(&key) {
            out.pieces.push(RangePiece {
                offset: w.offset,
                len: w.len,
                outcome: PieceOutcome::Loop(Name::new(w.node, w.local)),
            });
            continue;
        }
        let spec = net.node(w.node)?;
        let end = w.local + w.len;
        let mut cursor = w.local;
        // Collected in address order, pushed in reverse so the stack pops
        // them in order.
        let mut children = Vec::new();
        while cursor < end {
            let offset = w.offset + (cursor - w.local);
            let here = Name::new(w.node, cursor);
            if let Some(acc) = spec.accept.iter().find(|r| r.contains(cursor)) {
                let seg_end = acc.end().min(end);
                out.pieces.push(RangePiece {
                    offset,
                    len: seg_end - cursor,
                    outcome: PieceOutcome::Accepted(here),
                });
                cursor = seg_end;
                continue;
            }
            // Next accept start bounds any translate or undecodable segment.
            let next_accept = spec
                .accept
                .iter()
                .map(|r| r.base())
                .filter(|&b| b > cursor)
                .min()
                .unwrap_or(u64::MAX);
            if let Some(entry) = spec.entry_for(cursor) {
                let seg_end = entry.src.end().min(end).min(next_accept);
                let mut path = w.path.clone();
                path.push(key);
                for dest in entry.images(cursor) {
                    children.push(Work {
                        node: dest.node,
                        local: dest.addr,
                        offset,
                        len: seg_end - cursor,
                        path: path.clone(),
                    });
                }
                cursor = seg_end;
            } else {
                let next_entry = spec
                    .translate
                    .iter()
                    .map(|e| e.src.base())
                    .filter(|&b| b > cursor)
                    .min()
                    .unwrap_or(u64::MAX);
                let seg_end = end.min(next_accept).min(next_entry);
                out.pieces.push(RangePiece {
                    offset,
                    len: seg_end - cursor,
                    outcome: PieceOutcome::Undecodable(here),
                });
                cursor = seg_end;
            }
        }
        work.extend(children.into_iter().rev());
    }
    out.pieces.sort_by_key(|p| p.offset);
    Ok(out)
}

/// Smallest name in `node` whose resolution accepts at `target`, found by
/// walking translate entries backwards from `target`.
pub fn preimage(net: &DecodingNet, node: NodeId, target: Name) -> Result<Option<Name>, NetError> {
    if node == target.node {
        return Ok(Some(target));
    }
    let mut seen = HashSet::from([target]);
    let mut frontier = vec![target];
    let mut found = BTreeSet::new();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for cur in frontier {
            for (&id, spec) in &net.nodes {
                for e in &spec.translate {
                    for d in &e.dests {
                        if d.node != cur.node || cur.addr < d.addr || cur.addr - d.addr >= e.src.size() {
                            continue;
                        }
                        let pre = Name::new(id, e.src.base() + (cur.addr - d.addr));
                        if !seen.insert(pre) {
                            continue;
                        }
                        if id == node {
                            found.insert(pre);
                        } else {
                            next.push(pre);
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    for cand in found {
        if let ResolveResult::Accepted(set) = resolve(net, cand)? {
            if set.contains(&target) {
                return Ok(Some(cand));
            }
        }
    }
    Ok(None)
}
