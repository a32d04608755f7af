//! Mapping database: every capability in canonical order.
//!
//! The index is a persistent AVL tree. Each node carries the largest end
//! address in its subtree, which turns it into an interval tree for the
//! overlap and containment queries. Updates copy the root-to-leaf path, so
//! cloning a database is O(1) and old snapshots stay valid.

use std::cmp::Ordering;
use std::sync::Arc;

use thiserror::Error;

use super::cap::{canonical_cmp, is_descendant, Capability};
use crate::net::Name;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MdbError {
    #[error("capability is not in the mapping database")]
    NotInMdb,
}

type Link = Option<Arc<Node>>;

#[derive(Debug)]
struct Node {
    cap: Capability,
    left: Link,
    right: Link,
    height: u32,
    len: usize,
    max_end: u128,
}

fn height(l: &Link) -> u32 {
    l.as_ref().map_or(0, |n| n.height)
}

fn len(l: &Link) -> usize {
    l.as_ref().map_or(0, |n| n.len)
}

fn max_end(l: &Link) -> u128 {
    l.as_ref().map_or(0, |n| n.max_end)
}

fn mk(cap: Capability, left: Link, right: Link) -> Arc<Node> {
    Arc::new(Node {
        height: 1 + height(&left).max(height(&right)),
        len: 1 + len(&left) + len(&right),
        max_end: cap.lin_end().max(max_end(&left)).max(max_end(&right)),
        cap,
        left,
        right,
    })
}

fn balance(cap: Capability, left: Link, right: Link) -> Arc<Node> {
    let (hl, hr) = (height(&left), height(&right));
    if hl > hr + 1 {
        let l = left.expect("left-heavy node has a left child");
        if height(&l.left) >= height(&l.right) {
            mk(l.cap, l.left.clone(), Some(mk(cap, l.right.clone(), right)))
        } else {
            let lr = l.right.clone().expect("inner grandchild");
            mk(
                lr.cap,
                Some(mk(l.cap, l.left.clone(), lr.left.clone())),
                Some(mk(cap, lr.right.clone(), right)),
            )
        }
    } else if hr > hl + 1 {
        let r = right.expect("right-heavy node has a right child");
        if height(&r.right) >= height(&r.left) {
            mk(r.cap, Some(mk(cap, left, r.left.clone())), r.right.clone())
        } else {
            let rl = r.left.clone().expect("inner grandchild");
            mk(
                rl.cap,
                Some(mk(cap, left, rl.left.clone())),
                Some(mk(r.cap, rl.right.clone(), r.right.clone())),
            )
        }
    } else {
        mk(cap, left, right)
    }
}

fn insert(link: &Link, cap: Capability) -> Arc<Node> {
    match link {
        None => mk(cap, None, None),
        Some(n) => match canonical_cmp(&cap, &n.cap) {
            Ordering::Less => balance(n.cap, Some(insert(&n.left, cap)), n.right.clone()),
            Ordering::Greater => balance(n.cap, n.left.clone(), Some(insert(&n.right, cap))),
            Ordering::Equal => mk(cap, n.left.clone(), n.right.clone()),
        },
    }
}

fn pop_min(n: &Arc<Node>) -> (Capability, Link) {
    match &n.left {
        None => (n.cap, n.right.clone()),
        Some(l) => {
            let (min, rest) = pop_min(l);
            (min, Some(balance(n.cap, rest, n.right.clone())))
        }
    }
}

/// `None` when `cap` is absent.
fn remove(link: &Link, cap: &Capability) -> Option<Link> {
    let n = link.as_ref()?;
    Some(match canonical_cmp(cap, &n.cap) {
        Ordering::Less => Some(balance(n.cap, remove(&n.left, cap)?, n.right.clone())),
        Ordering::Greater => Some(balance(n.cap, n.left.clone(), remove(&n.right, cap)?)),
        Ordering::Equal => match (&n.left, &n.right) {
            (None, r) => r.clone(),
            (l, None) => l.clone(),
            (l, Some(r)) => {
                let (min, rest) = pop_min(r);
                Some(balance(min, l.clone(), rest))
            }
        },
    })
}

#[derive(Debug, Clone, Default)]
pub struct Mdb {
    root: Link,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdbQuery {
    Descendants(Capability),
    Ancestors(Capability),
    /// Capabilities sharing at least one byte with the range.
    Overlap(Name, u64),
    /// Capabilities whose range contains the whole range.
    Contains(Name, u64),
    /// Capabilities lying entirely inside the range.
    Inner(Name, u64),
}

fn lin(n: Name) -> u128 {
    (u128::from(n.node.0) << crate::net::ADDR_BITS) | u128::from(n.addr)
}

impl Mdb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        len(&self.root)
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    /// Tree height; zero when empty.
    pub fn depth(&self) -> u32 {
        height(&self.root)
    }

    pub fn insert(&mut self, cap: Capability) {
        self.root = Some(insert(&self.root, cap));
    }

    pub fn remove(&mut self, cap: &Capability) -> bool {
        match remove(&self.root, cap) {
            Some(root) => {
                self.root = root;
                true
            }
            None => false,
        }
    }

    pub fn contains(&self, cap: &Capability) -> bool {
        let mut cur = &self.root;
        while let Some(n) = cur {
            match canonical_cmp(cap, &n.cap) {
                Ordering::Less => cur = &n.left,
                Ordering::Greater => cur = &n.right,
                Ordering::Equal => return true,
            }
        }
        false
    }

    /// All capabilities in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = &Capability> {
        let mut out = Vec::with_capacity(self.len());
        fn walk<'a>(l: &'a Link, out: &mut Vec<&'a Capability>) {
            if let Some(n) = l {
                walk(&n.left, out);
                out.push(&n.cap);
                walk(&n.right, out);
            }
        }
        walk(&self.root, &mut out);
        out.into_iter()
    }

    /// Capabilities strictly after `from` in canonical order whose base lies
    /// below `end`, in order.
    fn successors_below(&self, from: &Capability, end: u128) -> Vec<Capability> {
        fn walk(l: &Link, from: &Capability, end: u128, out: &mut Vec<Capability>) {
            let Some(n) = l else { return };
            let after = canonical_cmp(&n.cap, from) == Ordering::Greater;
            if after {
                walk(&n.left, from, end, out);
            }
            if n.cap.lin_base() >= end {
                return;
            }
            if after {
                out.push(n.cap);
            }
            walk(&n.right, from, end, out);
        }
        let mut out = Vec::new();
        walk(&self.root, from, end, &mut out);
        out
    }

    /// Capabilities with `base < hi` and `end > lo`, filtered by `keep`.
    fn overlapping(&self, lo: u128, hi: u128, keep: &dyn Fn(&Capability) -> bool) -> Vec<Capability> {
        fn walk(
            l: &Link,
            lo: u128,
            hi: u128,
            keep: &dyn Fn(&Capability) -> bool,
            out: &mut Vec<Capability>,
        ) {
            let Some(n) = l else { return };
            if n.max_end <= lo {
                return;
            }
            walk(&n.left, lo, hi, keep, out);
            if n.cap.lin_base() >= hi {
                return;
            }
            if n.cap.lin_end() > lo && keep(&n.cap) {
                out.push(n.cap);
            }
            walk(&n.right, lo, hi, keep, out);
        }
        let mut out = Vec::new();
        walk(&self.root, lo, hi, keep, &mut out);
        out
    }

    pub fn query(&self, q: MdbQuery) -> Result<Vec<Capability>, MdbError> {
        Ok(match q {
            MdbQuery::Descendants(c) => {
                if !self.contains(&c) {
                    return Err(MdbError::NotInMdb);
                }
                self.successors_below(&c, c.lin_end())
                    .into_iter()
                    .filter(|d| is_descendant(&c, d))
                    .collect()
            }
            MdbQuery::Ancestors(c) => {
                if !self.contains(&c) {
                    return Err(MdbError::NotInMdb);
                }
                let (lo, hi) = (c.lin_base(), c.lin_end());
                // Containing caps start at or before `lo`; restrict the scan
                // to bases in [node start, lo].
                self.overlapping(lo, lo + 1, &|a| a.lin_end() >= hi && is_descendant(a, &c))
            }
            MdbQuery::Overlap(base, size) => {
                let lo = lin(base);
                self.overlapping(lo, lo + u128::from(size), &|_| true)
            }
            MdbQuery::Contains(base, size) => {
                let lo = lin(base);
                let hi = lo + u128::from(size);
                self.overlapping(lo, lo + 1, &|a| a.lin_end() >= hi && a.base.node == base.node)
            }
            MdbQuery::Inner(base, size) => {
                let lo = lin(base);
                let hi = lo + u128::from(size);
                self.overlapping(lo, hi, &|a| a.lin_base() >= lo && a.lin_end() <= hi)
            }
        })
    }
}
