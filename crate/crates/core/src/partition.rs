//! Partitions of `[n]`, their edge-ensemble view, and exhaustive enumeration.
//!
//! Internally every index is 0-based. The text form used in files is 1-based:
//! blocks separated by `|`, members by `,`, e.g. `1,2|3`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest `n` for which [`all_partitions`] and exact MAP enumeration run.
/// Bell(13) is about 27.6 million.
pub const ENUMERATION_GUARD: usize = 13;

/// Number of unordered pairs over `n` items.
#[inline]
pub fn n_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of the unordered pair `{i, j}` (`i != j`) in upper-triangle order.
#[inline]
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i != j && i < n && j < n);
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// Iterates `(i, j)` with `i < j` in the same order as [`pair_index`].
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// A clustering of `[n]` into disjoint non-empty blocks, kept in canonical
/// form: members ascend within a block and blocks are ordered by their
/// smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Canonicalizes a raw block list, checking that it is a partition of `[n]`.
    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPartition("n must be at least 1".into()));
        }
        let mut seen = vec![false; n];
        let mut blocks = blocks;
        for block in &mut blocks {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &x in block.iter() {
                if x >= n {
                    return Err(Error::InvalidPartition(format!(
                        "index {} outside [1, {}]",
                        x + 1,
                        n
                    )));
                }
                if seen[x] {
                    return Err(Error::InvalidPartition(format!("index {} appears twice", x + 1)));
                }
                seen[x] = true;
            }
            block.sort_unstable();
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!(
                "index {} is not covered",
                missing + 1
            )));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(Partition { n, blocks })
    }

    /// Builds a partition from per-item labels; equal labels share a block.
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        assert!(n > 0, "labels must be non-empty");
        let mut slot_of_label: Vec<(usize, usize)> = Vec::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (i, &label) in labels.iter().enumerate() {
            match slot_of_label.iter().find(|(l, _)| *l == label) {
                Some(&(_, slot)) => blocks[slot].push(i),
                None => {
                    slot_of_label.push((label, blocks.len()));
                    blocks.push(vec![i]);
                }
            }
        }
        // Blocks are discovered in order of their smallest member, and members
        // are pushed in ascending order, so this is already canonical.
        Partition { n, blocks }
    }

    pub fn singletons(n: usize) -> Self {
        assert!(n > 0);
        Partition {
            n,
            blocks: (0..n).map(|i| vec![i]).collect(),
        }
    }

    pub fn single_block(n: usize) -> Self {
        assert!(n > 0);
        Partition {
            n,
            blocks: vec![(0..n).collect()],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block index of every item (the restricted-growth string).
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n];
        for (b, block) in self.blocks.iter().enumerate() {
            for &x in block {
                labels[x] = b;
            }
        }
        labels
    }

    pub fn same_block(&self, i: usize, j: usize) -> bool {
        self.blocks.iter().any(|b| b.contains(&i) && b.contains(&j))
    }

    /// Splits block `block` into `part` and the remaining members.
    pub(crate) fn split_block(&self, block: usize, part: &[usize]) -> Partition {
        let rest: Vec<usize> = self.blocks[block]
            .iter()
            .copied()
            .filter(|x| !part.contains(x))
            .collect();
        debug_assert!(!rest.is_empty() && !part.is_empty());
        let mut blocks: Vec<Vec<usize>> = self
            .blocks
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != block)
            .map(|(_, v)| v.clone())
            .collect();
        let mut part = part.to_vec();
        part.sort_unstable();
        blocks.push(part);
        blocks.push(rest);
        blocks.sort_unstable_by_key(|b| b[0]);
        Partition { n: self.n, blocks }
    }

    /// Merges blocks `a` and `b`.
    pub(crate) fn merge_blocks(&self, a: usize, b: usize) -> Partition {
        debug_assert!(a != b);
        let mut merged: Vec<usize> = self.blocks[a]
            .iter()
            .chain(self.blocks[b].iter())
            .copied()
            .collect();
        merged.sort_unstable();
        let mut blocks: Vec<Vec<usize>> = self
            .blocks
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != a && *i != b)
            .map(|(_, v)| v.clone())
            .collect();
        blocks.push(merged);
        blocks.sort_unstable_by_key(|b| b[0]);
        Partition { n: self.n, blocks }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (b, block) in self.blocks.iter().enumerate() {
            if b > 0 {
                f.write_str("|")?;
            }
            for (k, x) in block.iter().enumerate() {
                if k > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", x + 1)?;
            }
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = Error;

    /// Parses the 1-based text form; `n` is the largest index mentioned.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Parse("empty partition string".into()));
        }
        let mut blocks = Vec::new();
        for block in s.split('|') {
            let mut members = Vec::new();
            for tok in block.split(',') {
                let tok = tok.trim();
                let v: usize = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad member {tok:?} in {s:?}")))?;
                if v == 0 {
                    return Err(Error::Parse("partition members are 1-based".into()));
                }
                members.push(v - 1);
            }
            blocks.push(members);
        }
        let n = blocks.iter().flatten().max().map_or(0, |m| m + 1);
        Partition::from_blocks(n, blocks)
    }
}

/// Canonicalizes a raw block list of 0-based indices.
pub fn canonicalize(n: usize, blocks: Vec<Vec<usize>>) -> Result<Partition> {
    Partition::from_blocks(n, blocks)
}

/// Symmetric boolean indicators over unordered pairs, stored once per pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeEnsemble {
    n: usize,
    edges: Vec<bool>,
}

impl EdgeEnsemble {
    pub fn empty(n: usize) -> Self {
        EdgeEnsemble {
            n,
            edges: vec![false; n_pairs(n)],
        }
    }

    /// Builds from a pair-ordered bit vector (see [`pair_index`]).
    pub fn from_bits(n: usize, edges: Vec<bool>) -> Self {
        assert_eq!(edges.len(), n_pairs(n));
        EdgeEnsemble { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        i != j && self.edges[pair_index(i, j, self.n)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        assert!(i != j, "no self-loops in an edge ensemble");
        let idx = pair_index(i, j, self.n);
        self.edges[idx] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }
}

/// Edge `{i, j}` is set iff `i` and `j` share a block.
pub fn partition_to_ensemble(p: &Partition) -> EdgeEnsemble {
    let mut c = EdgeEnsemble::empty(p.n());
    for block in p.blocks() {
        for (a, &i) in block.iter().enumerate() {
            for &j in &block[a + 1..] {
                c.set(i, j, true);
            }
        }
    }
    c
}

/// Connected components of the graph whose edges are the set pairs.
pub fn ensemble_to_partition(c: &EdgeEnsemble) -> Partition {
    let n = c.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, j) in pairs(n) {
        if c.get(i, j) {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    Partition::from_labels(&labels)
}

/// True iff every triple satisfies `C_ij = C_jk = 1 => C_ik = 1`, i.e. the
/// graph is a disjoint union of cliques.
pub fn is_valid_clustering(c: &EdgeEnsemble) -> bool {
    let n = c.n();
    for j in 0..n {
        for i in 0..n {
            if i == j || !c.get(i, j) {
                continue;
            }
            for k in i + 1..n {
                if k != j && c.get(j, k) && !c.get(i, k) {
                    return false;
                }
            }
        }
    }
    true
}

/// Streams every partition of `[n]` as a restricted-growth string, in
/// lexicographic order.
#[derive(Debug, Clone)]
pub struct RgsIter {
    labels: Vec<usize>,
    // prefix_max[i] = max(labels[0..=i])
    prefix_max: Vec<usize>,
    started: bool,
    done: bool,
}

impl RgsIter {
    pub fn new(n: usize) -> Self {
        RgsIter {
            labels: vec![0; n],
            prefix_max: vec![0; n],
            started: false,
            done: n == 0,
        }
    }

    /// Advances and returns the current labels, or `None` when exhausted.
    pub fn next_labels(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.labels);
        }
        let n = self.labels.len();
        let mut i = n;
        while i > 1 {
            i -= 1;
            if self.labels[i] <= self.prefix_max[i - 1] {
                self.labels[i] += 1;
                self.prefix_max[i] = self.prefix_max[i - 1].max(self.labels[i]);
                for k in i + 1..n {
                    self.labels[k] = 0;
                    self.prefix_max[k] = self.prefix_max[i];
                }
                return Some(&self.labels);
            }
        }
        self.done = true;
        None
    }
}

/// All `Bell(n)` partitions of `[n]` in restricted-growth-string order.
pub fn all_partitions(n: usize) -> Result<Vec<Partition>> {
    if n == 0 {
        return Err(Error::contract("n must be at least 1"));
    }
    if n > ENUMERATION_GUARD {
        return Err(Error::Capacity(format!(
            "cannot enumerate partitions of {n} items (limit {ENUMERATION_GUARD}); use MCMC"
        )));
    }
    let mut out = Vec::with_capacity(bell_number(n) as usize);
    let mut it = RgsIter::new(n);
    while let Some(labels) = it.next_labels() {
        out.push(Partition::from_labels(labels));
    }
    Ok(out)
}

/// Bell number via the Bell triangle.
pub fn bell_number(n: usize) -> u128 {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

/// A sequence of clusterings indexed by (1-based) time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTimeline {
    steps: Vec<(usize, Partition)>,
}

impl ClusterTimeline {
    pub fn new(steps: Vec<(usize, Partition)>) -> Result<Self> {
        if let Some((_, first)) = steps.first() {
            let n = first.n();
            for w in steps.windows(2) {
                if w[1].0 <= w[0].0 {
                    return Err(Error::contract(format!(
                        "timeline indices must strictly increase ({} then {})",
                        w[0].0, w[1].0
                    )));
                }
            }
            if steps.iter().any(|(_, p)| p.n() != n) {
                return Err(Error::contract("timeline partitions disagree on n"));
            }
        }
        Ok(ClusterTimeline { steps })
    }

    pub fn steps(&self) -> &[(usize, Partition)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n(&self) -> Option<usize> {
        self.steps.first().map(|(_, p)| p.n())
    }

    pub fn get(&self, time: usize) -> Option<&Partition> {
        self.steps
            .binary_search_by_key(&time, |(t, _)| *t)
            .ok()
            .map(|i| &self.steps[i].1)
    }

    /// Restricts to `lo..=hi`.
    pub fn slice(&self, lo: usize, hi: usize) -> ClusterTimeline {
        ClusterTimeline {
            steps: self
                .steps
                .iter()
                .filter(|(t, _)| *t >= lo && *t <= hi)
                .cloned()
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Partition {
        s.parse().unwrap()
    }

    #[test]
    fn ensemble_of_single_block_sets_every_pair() {
        let c = partition_to_ensemble(&Partition::single_block(3));
        assert_eq!(c.bits(), &[true, true, true]);
        let c = partition_to_ensemble(&Partition::singletons(3));
        assert_eq!(c.edge_count(), 0);
        let c = partition_to_ensemble(&p("1,2|3"));
        assert!(c.get(0, 1) && !c.get(0, 2) && !c.get(1, 2));
    }

    #[test]
    fn connected_components_merge_open_triangle() {
        let mut c = EdgeEnsemble::empty(3);
        c.set(0, 1, true);
        c.set(0, 2, true);
        assert_eq!(ensemble_to_partition(&c), Partition::single_block(3));
        assert!(!is_valid_clustering(&c));

        assert_eq!(
            ensemble_to_partition(&EdgeEnsemble::empty(4)),
            Partition::singletons(4)
        );
        let mut c = EdgeEnsemble::empty(3);
        c.set(1, 0, true);
        assert_eq!(ensemble_to_partition(&c), p("1,2|3"));
    }

    #[test]
    fn validity_examples() {
        let mut c = EdgeEnsemble::empty(3);
        c.set(0, 1, true);
        c.set(1, 2, true);
        assert!(!is_valid_clustering(&c));
        let mut c = EdgeEnsemble::empty(4);
        c.set(0, 1, true);
        c.set(2, 3, true);
        assert!(is_valid_clustering(&c));
    }

    #[test]
    fn enumeration_counts_and_order() {
        let parts = all_partitions(3).unwrap();
        let text: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
        assert_eq!(text, ["1,2,3", "1,2|3", "1,3|2", "1|2,3", "1|2|3"]);
        assert_eq!(all_partitions(1).unwrap(), vec![Partition::singletons(1)]);
        assert_eq!(all_partitions(4).unwrap().len(), 15);
        assert!(all_partitions(14).unwrap_err().is_capacity());
    }

    #[test]
    fn bell_triangle_values() {
        let expected = [1u128, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975];
        for (n, &b) in expected.iter().enumerate() {
            assert_eq!(bell_number(n), b);
        }
        assert_eq!(bell_number(13), 27_644_437);
    }

    #[test]
    fn canonicalize_examples() {
        let q = canonicalize(3, vec![vec![2], vec![1, 0]]).unwrap();
        assert_eq!(q.blocks(), &[vec![0, 1], vec![2]]);
        let again = canonicalize(3, q.blocks().to_vec()).unwrap();
        assert_eq!(again, q);
        let q = canonicalize(4, vec![vec![1, 3], vec![0, 2]]).unwrap();
        assert_eq!(q.to_string(), "1,3|2,4");
    }

    #[test]
    fn canonicalize_rejects_bad_blocks() {
        assert!(canonicalize(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(canonicalize(3, vec![vec![0, 1]]).is_err());
        assert!(canonicalize(3, vec![vec![0, 1, 2], vec![]]).is_err());
        assert!(canonicalize(2, vec![vec![0, 1, 2]]).is_err());
    }

    #[test]
    fn text_form_round_trips() {
        for q in all_partitions(5).unwrap() {
            assert_eq!(q.to_string().parse::<Partition>().unwrap(), q);
        }
        assert!("1,,2".parse::<Partition>().is_err());
        assert!("0,1".parse::<Partition>().is_err());
    }

    #[test]
    fn pair_index_is_dense() {
        let n = 7;
        for (k, (i, j)) in pairs(n).enumerate() {
            assert_eq!(pair_index(i, j, n), k);
            assert_eq!(pair_index(j, i, n), k);
        }
    }

    #[test]
    fn split_and_merge_stay_canonical() {
        let q = p("1,2,4|3");
        let s = q.split_block(0, &[3]);
        assert_eq!(s.to_string(), "1,2|3|4");
        let m = s.merge_blocks(1, 2);
        assert_eq!(m.to_string(), "1,2|3,4");
    }

    #[test]
    fn timeline_requires_increasing_times() {
        let a = Partition::singletons(2);
        assert!(ClusterTimeline::new(vec![(2, a.clone()), (2, a.clone())]).is_err());
        assert!(ClusterTimeline::new(vec![(1, a.clone()), (3, Partition::singletons(3))]).is_err());
        let t = ClusterTimeline::new(vec![(1, a.clone()), (4, a.clone())]).unwrap();
        assert_eq!(t.get(4), Some(&a));
        assert_eq!(t.get(2), None);
    }
}
