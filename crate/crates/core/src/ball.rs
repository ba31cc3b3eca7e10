//! Ball enumeration and integer indexing of balls.
//!
//! Balls are produced shell by shell. Free-group balls are indexed
//! arithmetically: a reduced word of length `L` is a mixed-radix number whose
//! first digit ranges over the `2k` letters and every later digit over the
//! `2k - 1` non-backtracking continuations. Indices are shell ordered, so the
//! ball of radius `r` is always a prefix of the ball of radius `r + 1`.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::group::{FreeWord, GroupElement, GroupSpec, Letter};

/// Lamplighter balls are only enumerated up to this radius.
pub const MAX_LAMPLIGHTER_RADIUS: usize = 8;

/// `|B(r)|` in the free group of rank `k`, or `None` on overflow.
pub fn free_ball_size(rank: usize, r: usize) -> Option<usize> {
    let mut total: usize = 1;
    let mut shell: usize = 2 * rank;
    for _ in 0..r {
        total = total.checked_add(shell)?;
        shell = shell.checked_mul(2 * rank - 1)?;
    }
    Some(total)
}

/// All elements of word length `<= r`, each exactly once, in shortlex order.
pub fn ball(spec: &GroupSpec, r: usize) -> Result<Vec<GroupElement>> {
    let mut out = Vec::new();
    for shell in BallShells::new(spec, r)? {
        out.extend(shell);
    }
    Ok(out)
}

/// Streams the spheres `S(0), S(1), ..., S(r)`.
pub struct BallShells {
    spec: GroupSpec,
    generators: Vec<GroupElement>,
    radius: usize,
    next_radius: usize,
    previous: HashSet<GroupElement>,
    current: Vec<GroupElement>,
}

impl BallShells {
    pub fn new(spec: &GroupSpec, radius: usize) -> Result<Self> {
        if matches!(spec, GroupSpec::Lamplighter) && radius > MAX_LAMPLIGHTER_RADIUS {
            return Err(Error::Capability(format!(
                "lamplighter balls are limited to radius {MAX_LAMPLIGHTER_RADIUS}, requested {radius}"
            )));
        }
        Ok(BallShells {
            spec: spec.clone(),
            generators: spec.generators(),
            radius,
            next_radius: 0,
            previous: HashSet::new(),
            current: Vec::new(),
        })
    }

    fn advance(&mut self) -> Vec<GroupElement> {
        if self.next_radius == 0 {
            return vec![self.spec.identity()];
        }
        if let GroupSpec::Free { .. } = self.spec {
            // Non-backtracking extension; no deduplication needed on a tree.
            let mut shell = Vec::new();
            for w in &self.current {
                let word = w.as_free().expect("free element");
                for g in &self.generators {
                    let l = g.as_free().expect("free generator").letters()[0];
                    if word.last() == Some(l.inverse()) {
                        continue;
                    }
                    let mut next = word.clone();
                    next.push(l);
                    shell.push(GroupElement::Free(next));
                }
            }
            return shell;
        }
        // Breadth-first: the next sphere is the set of neighbours of the
        // current sphere lying in neither the current nor the previous sphere.
        let current_set: HashSet<&GroupElement> = self.current.iter().collect();
        let mut seen = HashSet::new();
        let mut shell = Vec::new();
        for x in &self.current {
            for g in &self.generators {
                let y = self.spec.multiply(x, g).expect("same spec");
                if self.previous.contains(&y) || current_set.contains(&y) {
                    continue;
                }
                if seen.insert(y.clone()) {
                    shell.push(y);
                }
            }
        }
        shell.sort();
        shell
    }
}

impl Iterator for BallShells {
    type Item = Vec<GroupElement>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_radius > self.radius {
            return None;
        }
        let shell = self.advance();
        if !matches!(self.spec, GroupSpec::Free { .. }) {
            self.previous = std::mem::take(&mut self.current).into_iter().collect();
        }
        self.current = shell.clone();
        self.next_radius += 1;
        Some(shell)
    }
}

/// Index of a reduced word of length `m` among all reduced words of that length.
pub fn encode_reduced(letters: &[Letter], rank: usize) -> usize {
    let q = 2 * rank - 1;
    let mut iter = letters.iter();
    let Some(first) = iter.next() else { return 0 };
    let mut local = first.code();
    let mut prev = *first;
    for &l in iter {
        local = local * q + digit(l, prev);
        prev = l;
    }
    local
}

/// Inverse of [`encode_reduced`].
pub fn decode_reduced(local: usize, m: usize, rank: usize) -> Vec<Letter> {
    if m == 0 {
        return Vec::new();
    }
    let q = 2 * rank - 1;
    let mut digits = vec![0usize; m];
    let mut rest = local;
    for d in digits[1..].iter_mut().rev() {
        *d = rest % q;
        rest /= q;
    }
    digits[0] = rest;
    let mut out = Vec::with_capacity(m);
    let mut prev = Letter(digits[0] as u8);
    out.push(prev);
    for &d in &digits[1..] {
        let l = undigit(d, prev);
        out.push(l);
        prev = l;
    }
    out
}

/// Number of reduced words of length `m` (`m >= 1`).
pub fn reduced_count(rank: usize, m: usize) -> usize {
    if m == 0 {
        return 1;
    }
    2 * rank * (2 * rank - 1).pow(m as u32 - 1)
}

#[inline]
fn digit(l: Letter, prev: Letter) -> usize {
    let forbidden = prev.inverse().code();
    let c = l.code();
    debug_assert_ne!(c, forbidden, "word is not reduced");
    if c < forbidden {
        c
    } else {
        c - 1
    }
}

#[inline]
fn undigit(d: usize, prev: Letter) -> Letter {
    let forbidden = prev.inverse().code();
    Letter(if d < forbidden { d } else { d + 1 } as u8)
}

/// Arithmetic index of a free-group ball.
#[derive(Debug, Clone)]
pub struct TreeBall {
    rank: usize,
    radius: usize,
    offsets: Vec<usize>,
    lengths: Vec<u8>,
    last: Vec<u8>,
}

impl TreeBall {
    pub fn new(rank: usize, radius: usize) -> Self {
        let q = 2 * rank - 1;
        let mut offsets = vec![0, 1];
        for r in 1..=radius {
            offsets.push(offsets[r] + reduced_count(rank, r));
        }
        let size = offsets[radius + 1];
        let mut lengths = vec![0u8; size];
        let mut last = vec![0u8; size];
        for r in 1..=radius {
            let start = offsets[r];
            if r == 1 {
                for c in 0..2 * rank {
                    lengths[start + c] = 1;
                    last[start + c] = c as u8;
                }
                continue;
            }
            let parent_start = offsets[r - 1];
            for j in 0..reduced_count(rank, r - 1) {
                let prev = Letter(last[parent_start + j]);
                for d in 0..q {
                    let i = start + j * q + d;
                    lengths[i] = r as u8;
                    last[i] = undigit(d, prev).0;
                }
            }
        }
        TreeBall {
            rank,
            radius,
            offsets,
            lengths,
            last,
        }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of elements of length `<= r`.
    pub fn prefix_len(&self, r: usize) -> usize {
        self.offsets[r.min(self.radius) + 1]
    }

    pub fn length_of(&self, i: usize) -> usize {
        self.lengths[i] as usize
    }

    pub fn index_of(&self, letters: &[Letter]) -> Option<usize> {
        if letters.len() > self.radius {
            return None;
        }
        Some(self.offsets[letters.len()] + encode_reduced(letters, self.rank))
    }

    pub fn word(&self, i: usize) -> FreeWord {
        let m = self.length_of(i);
        FreeWord::reduce(decode_reduced(i - self.offsets[m], m, self.rank))
    }

    fn parent(&self, i: usize) -> usize {
        let m = self.length_of(i);
        if m <= 1 {
            return 0;
        }
        self.offsets[m - 1] + (i - self.offsets[m]) / (2 * self.rank - 1)
    }

    /// Index of `word(i) * l`, or `None` if it leaves the ball.
    #[inline]
    pub fn step_letter(&self, i: usize, l: Letter) -> Option<usize> {
        let m = self.length_of(i);
        if m == 0 {
            return (self.radius >= 1).then_some(1 + l.code());
        }
        let prev = Letter(self.last[i]);
        if prev == l.inverse() {
            return Some(self.parent(i));
        }
        if m >= self.radius {
            return None;
        }
        let local = i - self.offsets[m];
        Some(self.offsets[m + 1] + local * (2 * self.rank - 1) + digit(l, prev))
    }

    /// Index of `word(i) * g`. On a tree the path from `x` to `xg` never leaves
    /// the ball of radius `max(|x|, |xg|)`, so letter-by-letter stepping is exact.
    pub fn step(&self, i: usize, g: &FreeWord) -> Option<usize> {
        let mut at = i;
        for &l in g.letters() {
            at = self.step_letter(at, l)?;
        }
        Some(at)
    }
}

/// A ball with integer indices in shell order.
#[derive(Debug, Clone)]
pub enum IndexedBall {
    Tree(TreeBall),
    Hashed {
        spec: GroupSpec,
        radius: usize,
        offsets: Vec<usize>,
        elements: Vec<GroupElement>,
        index: HashMap<GroupElement, usize>,
    },
}

impl IndexedBall {
    /// Builds the largest ball of radius in `min_radius..=radius` with at most `cap` elements.
    pub fn build_capped(spec: &GroupSpec, min_radius: usize, radius: usize, cap: usize) -> Result<Self> {
        if let GroupSpec::Free { rank } = spec {
            let rank = *rank as usize;
            let fits = |r| free_ball_size(rank, r).is_some_and(|n| n <= cap);
            if !fits(min_radius) {
                return Err(Error::Resource {
                    what: format!("ball of radius {min_radius} in {spec}"),
                    needed: free_ball_size(rank, min_radius).unwrap_or(usize::MAX),
                    cap,
                });
            }
            let mut r = min_radius;
            while r < radius && fits(r + 1) {
                r += 1;
            }
            return Ok(IndexedBall::Tree(TreeBall::new(rank, r)));
        }
        let mut offsets = vec![0];
        let mut elements = Vec::new();
        let mut reached = 0;
        for (r, shell) in BallShells::new(spec, radius.min(MAX_LAMPLIGHTER_RADIUS.max(min_radius)))?
            .take(radius + 1)
            .enumerate()
        {
            if elements.len() + shell.len() > cap {
                if r <= min_radius {
                    return Err(Error::Resource {
                        what: format!("ball of radius {min_radius} in {spec}"),
                        needed: elements.len() + shell.len(),
                        cap,
                    });
                }
                break;
            }
            elements.extend(shell);
            offsets.push(elements.len());
            reached = r;
        }
        let index = elements.iter().cloned().enumerate().map(|(i, g)| (g, i)).collect();
        Ok(IndexedBall::Hashed {
            spec: spec.clone(),
            radius: reached,
            offsets,
            elements,
            index,
        })
    }

    pub fn len(&self) -> usize {
        match self {
            IndexedBall::Tree(t) => t.len(),
            IndexedBall::Hashed { elements, .. } => elements.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn radius(&self) -> usize {
        match self {
            IndexedBall::Tree(t) => t.radius(),
            IndexedBall::Hashed { radius, .. } => *radius,
        }
    }

    /// Number of elements of length `<= r`.
    pub fn prefix_len(&self, r: usize) -> usize {
        match self {
            IndexedBall::Tree(t) => t.prefix_len(r),
            IndexedBall::Hashed { offsets, radius, .. } => offsets[r.min(*radius) + 1],
        }
    }

    pub fn index_of(&self, g: &GroupElement) -> Option<usize> {
        match (self, g) {
            (IndexedBall::Tree(t), GroupElement::Free(w)) => t.index_of(w.letters()),
            (IndexedBall::Hashed { index, .. }, g) => index.get(g).copied(),
            _ => None,
        }
    }

    pub fn element(&self, i: usize) -> GroupElement {
        match self {
            IndexedBall::Tree(t) => GroupElement::Free(t.word(i)),
            IndexedBall::Hashed { elements, .. } => elements[i].clone(),
        }
    }

    /// Index of `element(i) * g`, if inside the ball.
    pub fn step(&self, i: usize, g: &GroupElement) -> Option<usize> {
        match (self, g) {
            (IndexedBall::Tree(t), GroupElement::Free(w)) => t.step(i, w),
            (IndexedBall::Hashed { spec, elements, index, .. }, g) => {
                let y = spec.multiply(&elements[i], g).ok()?;
                index.get(&y).copied()
            }
            _ => None,
        }
    }
}
