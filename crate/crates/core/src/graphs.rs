//! Labeled graph families over white (root) and black vertices.
//!
//! Graphs are stored as bitmasks over the lexicographically ordered
//! vertex pairs (0,1), (0,2), …, (n−2,n−1) of vertex positions. Families
//! are enumerated by brute force over all edge subsets in increasing
//! bitmask order, which is the deterministic stream order.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default cap on the number of vertices.
pub const DEFAULT_CAP: usize = 7;

/// Family selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Connected graphs; vertex colours are ignored.
    Connected,
    /// Spanning trees; vertex colours are ignored.
    Tree,
    /// Acyclic graphs in which every component holds exactly one white vertex.
    Forest,
    /// Every black vertex has a path to some white vertex.
    RootedZ,
    /// RootedZ with exactly two white vertices and no edge between them.
    ZCross,
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "connected" => Ok(Self::Connected),
            "tree" => Ok(Self::Tree),
            "forest" => Ok(Self::Forest),
            "rootedz" | "z" => Ok(Self::RootedZ),
            "zcross" => Ok(Self::ZCross),
            _ => Err(Error::Configuration(format!("unknown graph family '{s}'"))),
        }
    }
}

/// Disjoint white and black label sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexSplit {
    pub white: Vec<usize>,
    pub black: Vec<usize>,
}

impl VertexSplit {
    pub fn new(mut white: Vec<usize>, mut black: Vec<usize>) -> Result<Self> {
        white.sort_unstable();
        black.sort_unstable();
        white.dedup();
        black.dedup();
        if white.is_empty() && black.is_empty() {
            return Err(Error::Domain("vertex split is empty".into()));
        }
        if white.iter().any(|w| black.binary_search(w).is_ok()) {
            return Err(Error::Domain("white and black labels overlap".into()));
        }
        Ok(Self { white, black })
    }

    /// Labels 1..=n_white white, the next n_black black.
    pub fn sized(n_white: usize, n_black: usize) -> Result<Self> {
        Self::new(
            (1..=n_white).collect(),
            (n_white + 1..=n_white + n_black).collect(),
        )
    }

    /// All labels in increasing order; positions index into this list.
    pub fn labels(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.white.iter().chain(&self.black).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn len(&self) -> usize {
        self.white.len() + self.black.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bitmask of white positions.
    pub fn white_mask(&self) -> u32 {
        self.labels()
            .iter()
            .enumerate()
            .filter(|(_, l)| self.white.binary_search(l).is_ok())
            .fold(0, |m, (p, _)| m | (1 << p))
    }
}

/// A graph on a vertex split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledGraph {
    pub vertices: VertexSplit,
    /// Sorted label pairs (i, j) with i < j.
    pub edges: Vec<(usize, usize)>,
}

impl LabeledGraph {
    fn from_mask(split: &VertexSplit, labels: &[usize], pairs: &[(usize, usize)], mask: u32) -> Self {
        let edges = pairs
            .iter()
            .enumerate()
            .filter(|(e, _)| mask >> e & 1 == 1)
            .map(|(_, &(a, b))| (labels[a], labels[b]))
            .collect();
        Self {
            vertices: split.clone(),
            edges,
        }
    }

    /// Edge bitmask over vertex positions, or None if an edge is invalid.
    fn to_mask(&self) -> Option<u32> {
        let labels = self.vertices.labels();
        let n = labels.len();
        let pos = |l: usize| labels.binary_search(&l).ok();
        let mut mask = 0u32;
        for &(i, j) in &self.edges {
            let (a, b) = (pos(i)?, pos(j)?);
            if a == b {
                return None;
            }
            let (a, b) = (a.min(b), a.max(b));
            let bit = 1u32 << pair_slot(n, a, b);
            if mask & bit != 0 {
                return None;
            }
            mask |= bit;
        }
        Some(mask)
    }
}

impl fmt::Display for LabeledGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let edges = self
            .edges
            .iter()
            .map(|(a, b)| format!("{a}-{b}"))
            .collect::<Vec<_>>()
            .join(",");
        write!(
            f,
            "white={};black={};edges={}",
            list(&self.vertices.white),
            list(&self.vertices.black),
            edges
        )
    }
}

/// Lexicographic list of position pairs for n vertices.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            out.push((a, b));
        }
    }
    out
}

/// Index of pair (a, b), a < b, in [`pairs`].
#[inline]
pub fn pair_slot(n: usize, a: usize, b: usize) -> usize {
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

fn adjacency(n: usize, pairs: &[(usize, usize)], mask: u32) -> [u32; 32] {
    let mut adj = [0u32; 32];
    let mut m = mask;
    while m != 0 {
        let e = m.trailing_zeros() as usize;
        m &= m - 1;
        let (a, b) = pairs[e];
        adj[a] |= 1 << b;
        adj[b] |= 1 << a;
    }
    let _ = n;
    adj
}

/// Component containing `start`, as a vertex bitmask.
fn component(adj: &[u32; 32], start: usize) -> u32 {
    let mut seen = 1u32 << start;
    let mut frontier = seen;
    while frontier != 0 {
        let v = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let new = adj[v] & !seen;
        seen |= new;
        frontier |= new;
    }
    seen
}

/// Membership test on positional bitmasks.
pub fn is_member_mask(kind: FamilyKind, n: usize, white: u32, pairs: &[(usize, usize)], mask: u32) -> bool {
    if n == 0 {
        return false;
    }
    let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let edges = mask.count_ones() as usize;
    match kind {
        FamilyKind::Tree => {
            edges + 1 == n && component(&adjacency(n, pairs, mask), 0) == all
        }
        FamilyKind::Connected => component(&adjacency(n, pairs, mask), 0) == all,
        FamilyKind::Forest => {
            let roots = white.count_ones() as usize;
            if roots == 0 || edges + roots != n {
                return false;
            }
            // n − roots edges and every component holds one root: then the
            // components are exactly the trees of the roots.
            let adj = adjacency(n, pairs, mask);
            let mut covered = 0u32;
            let mut w = white;
            while w != 0 {
                let r = w.trailing_zeros() as usize;
                w &= w - 1;
                let c = component(&adj, r);
                if (c & white).count_ones() != 1 {
                    return false;
                }
                covered |= c;
            }
            covered == all
        }
        FamilyKind::RootedZ | FamilyKind::ZCross => {
            if white == 0 {
                return false;
            }
            if kind == FamilyKind::ZCross {
                if white.count_ones() != 2 {
                    return false;
                }
                let a = white.trailing_zeros() as usize;
                let b = 31 - white.leading_zeros() as usize;
                if mask >> pair_slot(n, a, b) & 1 == 1 {
                    return false;
                }
            }
            let adj = adjacency(n, pairs, mask);
            let mut covered = 0u32;
            let mut w = white;
            while w != 0 {
                let r = w.trailing_zeros() as usize;
                w &= w - 1;
                if covered >> r & 1 == 0 {
                    covered |= component(&adj, r);
                }
            }
            covered == all
        }
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap || n > 8 {
        let e = n * n.saturating_sub(1) / 2;
        return Err(Error::SizeCap {
            size: n,
            cap,
            estimate: 1u64.checked_shl(e as u32).unwrap_or(u64::MAX),
        });
    }
    Ok(())
}

fn check_kind(kind: FamilyKind, white: u32) -> Result<()> {
    if kind == FamilyKind::ZCross && white.count_ones() != 2 {
        return Err(Error::Domain("ZCross needs exactly two white vertices".into()));
    }
    Ok(())
}

/// All member edge masks for n positions with the given white mask, in
/// increasing order.
pub fn member_masks(kind: FamilyKind, n: usize, white: u32) -> Result<Vec<u32>> {
    check_cap(n, 8)?;
    check_kind(kind, white)?;
    let ps = pairs(n);
    let total = 1u64 << ps.len();
    Ok((0..total)
        .map(|m| m as u32)
        .filter(|&m| is_member_mask(kind, n, white, &ps, m))
        .collect())
}

type MaskKey = (FamilyKind, usize, u32);

/// As `member_masks`, memoized for the lifetime of the process.
pub fn member_masks_cached(kind: FamilyKind, n: usize, white: u32) -> Result<Arc<Vec<u32>>> {
    static CACHE: OnceLock<Mutex<HashMap<MaskKey, Arc<Vec<u32>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(m) = cache.lock().unwrap().get(&(kind, n, white)) {
        return Ok(m.clone());
    }
    let masks = Arc::new(member_masks(kind, n, white)?);
    cache.lock().unwrap().insert((kind, n, white), masks.clone());
    Ok(masks)
}

/// Streams the family members in increasing edge-bitmask order.
pub fn enumerate(kind: FamilyKind, split: &VertexSplit) -> Result<impl Iterator<Item = LabeledGraph>> {
    enumerate_with_cap(kind, split, DEFAULT_CAP)
}

pub fn enumerate_with_cap(
    kind: FamilyKind,
    split: &VertexSplit,
    cap: usize,
) -> Result<impl Iterator<Item = LabeledGraph>> {
    let n = split.len();
    check_cap(n, cap)?;
    let white = split.white_mask();
    check_kind(kind, white)?;
    let labels = split.labels();
    let ps = pairs(n);
    let split = split.clone();
    let total = 1u64 << ps.len();
    Ok((0..total).filter_map(move |m| {
        let m = m as u32;
        is_member_mask(kind, n, white, &ps, m).then(|| LabeledGraph::from_mask(&split, &labels, &ps, m))
    }))
}

/// Family size; equals the length of the [`enumerate`] stream.
pub fn count(kind: FamilyKind, n_white: usize, n_black: usize) -> Result<u64> {
    let split = VertexSplit::sized(n_white, n_black)?;
    count_split(kind, &split, DEFAULT_CAP)
}

pub fn count_split(kind: FamilyKind, split: &VertexSplit, cap: usize) -> Result<u64> {
    let n = split.len();
    check_cap(n, cap)?;
    let white = split.white_mask();
    check_kind(kind, white)?;
    let ps = pairs(n);
    let total = 1u64 << ps.len();
    Ok((0..total)
        .filter(|&m| is_member_mask(kind, n, white, &ps, m as u32))
        .count() as u64)
}

/// Membership verdict; graphs with invalid edges are never members.
pub fn is_member(g: &LabeledGraph, kind: FamilyKind) -> bool {
    let n = g.vertices.len();
    if n == 0 || n > 8 {
        return false;
    }
    let Some(mask) = g.to_mask() else {
        return false;
    };
    is_member_mask(kind, n, g.vertices.white_mask(), &pairs(n), mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(white: &[usize], black: &[usize], edges: &[(usize, usize)]) -> LabeledGraph {
        LabeledGraph {
            vertices: VertexSplit::new(white.to_vec(), black.to_vec()).unwrap(),
            edges: edges.to_vec(),
        }
    }

    #[test]
    fn pair_slots_are_lexicographic() {
        for n in 2..8 {
            for (k, &(a, b)) in pairs(n).iter().enumerate() {
                assert_eq!(pair_slot(n, a, b), k);
            }
        }
    }

    #[test]
    fn spec_counts() {
        assert_eq!(count(FamilyKind::Connected, 3, 0).unwrap(), 4);
        assert_eq!(count(FamilyKind::Tree, 3, 0).unwrap(), 3);
        assert_eq!(count(FamilyKind::RootedZ, 2, 1).unwrap(), 6);
        assert_eq!(count(FamilyKind::Tree, 4, 0).unwrap(), 16);
        assert_eq!(count(FamilyKind::Connected, 4, 0).unwrap(), 38);
        assert_eq!(count(FamilyKind::ZCross, 2, 0).unwrap(), 1);
    }

    #[test]
    fn membership_examples() {
        assert!(is_member(&graph(&[1], &[2, 3], &[(1, 2), (2, 3)]), FamilyKind::Tree));
        assert!(!is_member(
            &graph(&[1], &[2, 3], &[(1, 2), (2, 3), (1, 3)]),
            FamilyKind::Tree
        ));
        assert!(is_member(&graph(&[1, 2], &[3], &[(1, 3)]), FamilyKind::Forest));
        assert!(!is_member(&graph(&[1], &[2], &[(1, 2), (1, 2)]), FamilyKind::Tree));
        assert!(!is_member(&graph(&[1], &[2], &[(1, 5)]), FamilyKind::Tree));
    }

    #[test]
    fn stream_length_matches_count() {
        let split = VertexSplit::sized(2, 3).unwrap();
        for kind in [
            FamilyKind::Connected,
            FamilyKind::Tree,
            FamilyKind::Forest,
            FamilyKind::RootedZ,
            FamilyKind::ZCross,
        ] {
            let n = enumerate(kind, &split).unwrap().count() as u64;
            assert_eq!(n, count_split(kind, &split, DEFAULT_CAP).unwrap());
        }
    }

    #[test]
    fn cap_is_enforced() {
        let split = VertexSplit::sized(1, 7).unwrap();
        assert!(matches!(
            enumerate(FamilyKind::Tree, &split).err(),
            Some(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn zcross_three_vertices_by_hand() {
        let split = VertexSplit::sized(2, 1).unwrap();
        let got: Vec<String> = enumerate(FamilyKind::ZCross, &split)
            .unwrap()
            .map(|g| g.to_string())
            .collect();
        assert_eq!(
            got,
            vec![
                "white=1,2;black=3;edges=1-3",
                "white=1,2;black=3;edges=2-3",
                "white=1,2;black=3;edges=1-3,2-3",
            ]
        );
    }
}
