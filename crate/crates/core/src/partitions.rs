//! Set partitions of the coordinate indices `{1..d}`.
//!
//! A [`Partition`] is an independence hypothesis: the density factorizes into
//! the product of the marginals of its blocks. Indices are stored 0-based and
//! serialized 1-based (`[[1,2],[3]]`).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`enumerate_all`]; B(12) = 4 213 597.
pub const MAX_ENUMERATION_DIM: usize = 12;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    dim: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition from 0-based blocks, validating and canonicalizing.
    pub fn new(dim: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPartition("dimension must be positive".into()));
        }
        let mut seen = vec![false; dim];
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &j in block {
                if j >= dim {
                    return Err(Error::InvalidPartition(format!(
                        "block {} contains index {} outside 1..={dim}",
                        fmt_block(block),
                        j + 1
                    )));
                }
                if seen[j] {
                    return Err(Error::InvalidPartition(format!(
                        "block {} repeats index {}",
                        fmt_block(block),
                        j + 1
                    )));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("index {} is not covered", j + 1)));
        }
        Ok(Self::canonical(dim, blocks))
    }

    /// Builds a partition from 1-based blocks as they appear in files.
    pub fn from_one_based(dim: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut zero = Vec::with_capacity(blocks.len());
        for block in blocks {
            let mut b = Vec::with_capacity(block.len());
            for &j in block {
                if j == 0 {
                    return Err(Error::InvalidPartition(format!(
                        "block {:?} contains index 0; indices are 1-based",
                        block
                    )));
                }
                b.push(j - 1);
            }
            zero.push(b);
        }
        Self::new(dim, zero)
    }

    fn canonical(dim: usize, mut blocks: Vec<Vec<usize>>) -> Self {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Self { dim, blocks }
    }

    /// `{{1..d}}`, the hypothesis "no structure".
    pub fn trivial(dim: usize) -> Self {
        Self { dim, blocks: vec![(0..dim).collect()] }
    }

    /// `{{1},{2},...,{d}}`, full independence.
    pub fn singletons(dim: usize) -> Self {
        Self { dim, blocks: (0..dim).map(|j| vec![j]).collect() }
    }

    /// Builds the partition encoded by a restricted-growth string.
    fn from_rgs(rgs: &[usize]) -> Self {
        let k = rgs.iter().copied().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); k];
        for (j, &b) in rgs.iter().enumerate() {
            blocks[b].push(j);
        }
        // RGS labels blocks in order of first appearance, which is already canonical.
        Self { dim: rgs.len(), blocks }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn max_block_size(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_trivial(&self) -> bool {
        self.blocks.len() == 1
    }

    /// Block index for every coordinate.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for (b, block) in self.blocks.iter().enumerate() {
            for &j in block {
                out[j] = b;
            }
        }
        out
    }

    /// 1-based copy of the blocks, as serialized.
    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| b.iter().map(|j| j + 1).collect()).collect()
    }

    fn check_dims(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }
}

fn fmt_block(block: &[usize]) -> String {
    let inner: Vec<String> = block.iter().map(|j| (j + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner: Vec<String> = self.blocks.iter().map(|b| fmt_block(b)).collect();
        write!(f, "{{{}}}", inner.join(","))
    }
}

impl fmt::Debug for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let blocks = Vec::<Vec<usize>>::deserialize(deserializer)?;
        let dim = blocks.iter().map(Vec::len).sum();
        Partition::from_one_based(dim, &blocks).map_err(serde::de::Error::custom)
    }
}

/// The meet `P ⋄ Q`: all nonempty pairwise block intersections.
pub fn diamond(p: &Partition, q: &Partition) -> Result<Partition> {
    p.check_dims(q)?;
    let ql = q.labels();
    let mut blocks = Vec::new();
    for block in &p.blocks {
        // Splitting each block of P by the labels of Q keeps the intersections sorted.
        let mut parts: Vec<(usize, Vec<usize>)> = Vec::new();
        for &j in block {
            match parts.iter_mut().find(|(l, _)| *l == ql[j]) {
                Some((_, v)) => v.push(j),
                None => parts.push((ql[j], vec![j])),
            }
        }
        blocks.extend(parts.into_iter().map(|(_, v)| v));
    }
    Ok(Partition::canonical(p.dim, blocks))
}

/// True iff every block of `p` lies inside some block of `q`.
pub fn refines(p: &Partition, q: &Partition) -> Result<bool> {
    p.check_dims(q)?;
    let ql = q.labels();
    Ok(p.blocks.iter().all(|b| b.iter().all(|&j| ql[j] == ql[b[0]])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionFamily {
    dim: usize,
    members: Vec<Partition>,
    max_block_size: Option<usize>,
}

impl PartitionFamily {
    /// Builds a family from explicit members; the trivial partition is always added.
    pub fn from_members(dim: usize, members: Vec<Partition>) -> Result<Self> {
        Self::assemble(dim, members, None)
    }

    fn assemble(dim: usize, members: Vec<Partition>, max_block_size: Option<usize>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for p in members {
            if p.dim != dim {
                return Err(Error::DimensionMismatch { left: dim, right: p.dim });
            }
            set.insert(p);
        }
        set.insert(Partition::trivial(dim));
        let mut members: Vec<Partition> = set.into_iter().collect();
        members.sort_by(family_order);
        Ok(Self { dim, members, max_block_size })
    }

    /// Default family: every partition for `d ≤ 4`, otherwise singletons and the trivial partition.
    pub fn default_for(dim: usize) -> Result<Self> {
        if dim <= 4 {
            enumerate_all(dim)
        } else {
            Self::from_members(dim, vec![Partition::singletons(dim)])
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn members(&self) -> &[Partition] {
        &self.members
    }

    pub fn max_block_size(&self) -> Option<usize> {
        self.max_block_size
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, p: &Partition) -> bool {
        self.members.contains(p)
    }
}

/// Family order: trivial partition first, then by block count, then lexicographic.
fn family_order(a: &Partition, b: &Partition) -> std::cmp::Ordering {
    a.blocks.len().cmp(&b.blocks.len()).then_with(|| a.blocks.cmp(&b.blocks))
}

fn check_enumeration_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_ENUMERATION_DIM {
        return Err(Error::DimensionOutOfRange { dim, max: MAX_ENUMERATION_DIM });
    }
    Ok(())
}

/// Visits every restricted-growth string of length `dim` whose blocks have size ≤ `cap`.
fn for_each_rgs(dim: usize, cap: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(
        pos: usize,
        rgs: &mut Vec<usize>,
        sizes: &mut Vec<usize>,
        cap: usize,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if pos == rgs.len() {
            visit(rgs);
            return;
        }
        let k = sizes.len();
        for b in 0..=k {
            if b == k {
                sizes.push(0);
            }
            if sizes[b] < cap {
                sizes[b] += 1;
                rgs[pos] = b;
                rec(pos + 1, rgs, sizes, cap, visit);
                sizes[b] -= 1;
            }
            if b == k {
                sizes.pop();
            }
        }
    }
    let mut rgs = vec![0; dim];
    let mut sizes = Vec::with_capacity(dim);
    rec(0, &mut rgs, &mut sizes, cap, &mut visit);
}

/// All set partitions of `{1..dim}` (Bell-number many).
pub fn enumerate_all(dim: usize) -> Result<PartitionFamily> {
    check_enumeration_dim(dim)?;
    let mut members = Vec::new();
    for_each_rgs(dim, dim, |rgs| members.push(Partition::from_rgs(rgs)));
    members.sort_by(family_order);
    Ok(PartitionFamily { dim, members, max_block_size: None })
}

/// Partitions whose blocks all have size ≤ `max_block`, plus the trivial partition and `extra`.
pub fn restricted_family(dim: usize, max_block: usize, extra: &[Partition]) -> Result<PartitionFamily> {
    check_enumeration_dim(dim)?;
    if max_block == 0 || max_block > dim {
        return Err(Error::InvalidArgument(format!(
            "max block size {max_block} must lie in 1..={dim}"
        )));
    }
    let mut members = Vec::new();
    for_each_rgs(dim, max_block, |rgs| members.push(Partition::from_rgs(rgs)));
    for p in extra {
        if p.dim != dim {
            return Err(Error::InvalidPartition(format!(
                "extra partition {p} has dimension {} but the family has dimension {dim}",
                p.dim
            )));
        }
        members.push(p.clone());
    }
    let cap = if extra.is_empty() && max_block == dim { None } else { Some(max_block) };
    let mut family = PartitionFamily::assemble(dim, members, None)?;
    // The trivial partition and extras may exceed the cap; record it only when it holds.
    family.max_block_size = cap.filter(|&c| family.members.iter().all(|p| p.max_block_size() <= c));
    Ok(family)
}

/// Bell numbers via the recurrence `B(n+1) = Σ C(n,k) B(k)`.
pub fn bell_number(n: usize) -> u64 {
    let mut bell = vec![1u64];
    for m in 0..n {
        let mut binom = 1u64;
        let mut next = 0u64;
        for (k, b) in bell.iter().enumerate() {
            next += binom * b;
            binom = binom * (m - k) as u64 / (k as u64 + 1);
        }
        bell.push(next);
    }
    bell[n]
}
