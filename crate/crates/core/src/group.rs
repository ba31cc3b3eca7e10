//! Exact arithmetic for the groups the lab supports.
//!
//! Three families are implemented, each with a canonical form that makes
//! equality a plain structural comparison:
//!
//! * free groups `F_k`: freely reduced words over `a, a-, b, b-, ...`;
//! * free products of finite cyclic groups: alternating syllables `x^p`
//!   with `0 < p < order`;
//! * the lamplighter `Z wr Z`: a finitely supported lamp configuration
//!   together with the walker position.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_FACTORS: usize = 26;

/// Which group a computation runs in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GroupSpec {
    Free { rank: u8 },
    FreeProduct { orders: Vec<u32> },
    Lamplighter,
}

impl GroupSpec {
    pub fn free(rank: usize) -> Result<Self> {
        if !(2..=MAX_FACTORS).contains(&rank) {
            return Err(Error::Domain(format!(
                "free group rank must be in 2..={MAX_FACTORS}, got {rank}"
            )));
        }
        Ok(GroupSpec::Free { rank: rank as u8 })
    }

    pub fn free_product(orders: Vec<u32>) -> Result<Self> {
        if orders.len() < 2 || orders.len() > MAX_FACTORS {
            return Err(Error::Domain(format!(
                "a free product needs 2..={MAX_FACTORS} factors, got {}",
                orders.len()
            )));
        }
        if let Some(&bad) = orders.iter().find(|&&n| n < 2) {
            return Err(Error::Domain(format!("cyclic factor order must be >= 2, got {bad}")));
        }
        // Z/2 contributes one Cayley-graph edge per vertex, larger factors two.
        let degree: u32 = orders.iter().map(|&n| if n == 2 { 1 } else { 2 }).sum();
        if degree < 3 {
            return Err(Error::Domain(
                "free product must have Cayley-graph degree >= 3 (Z/2 * Z/2 is elementary)".into(),
            ));
        }
        Ok(GroupSpec::FreeProduct { orders })
    }

    pub fn lamplighter() -> Self {
        GroupSpec::Lamplighter
    }

    pub fn is_free(&self) -> bool {
        matches!(self, GroupSpec::Free { .. })
    }

    /// Free groups and free products of finite cyclic groups are hyperbolic; the lamplighter is not.
    pub fn is_hyperbolic(&self) -> bool {
        !matches!(self, GroupSpec::Lamplighter)
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            GroupSpec::Free { rank } => Some(*rank as usize),
            _ => None,
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            GroupSpec::Free { .. } => GroupElement::Free(FreeWord::identity()),
            GroupSpec::FreeProduct { .. } => GroupElement::Product(ProductWord::default()),
            GroupSpec::Lamplighter => GroupElement::Lamp(LampState::default()),
        }
    }

    /// The standard symmetric generating set, closed under inversion.
    pub fn generators(&self) -> Vec<GroupElement> {
        match self {
            GroupSpec::Free { rank } => (0..2 * rank)
                .map(|c| GroupElement::Free(FreeWord::from_letter(Letter(c))))
                .collect(),
            GroupSpec::FreeProduct { orders } => {
                let mut gens = Vec::new();
                for (f, &n) in orders.iter().enumerate() {
                    gens.push(GroupElement::Product(ProductWord::syllable(f as u8, 1)));
                    if n > 2 {
                        gens.push(GroupElement::Product(ProductWord::syllable(f as u8, n - 1)));
                    }
                }
                gens
            }
            GroupSpec::Lamplighter => vec![
                GroupElement::Lamp(LampState::shift(1)),
                GroupElement::Lamp(LampState::shift(-1)),
                GroupElement::Lamp(LampState::toggle(1)),
                GroupElement::Lamp(LampState::toggle(-1)),
            ],
        }
    }

    pub fn generator_labels(&self) -> Vec<String> {
        self.generators().iter().map(|g| self.display(g)).collect()
    }

    /// Returns an error if `g` is not a canonical element of this group.
    pub fn check(&self, g: &GroupElement) -> Result<()> {
        match (self, g) {
            (GroupSpec::Free { rank }, GroupElement::Free(w)) => {
                if let Some(l) = w.letters().iter().find(|l| l.generator() >= *rank as usize) {
                    return Err(Error::Domain(format!(
                        "letter {l} is outside the free group of rank {rank}"
                    )));
                }
                Ok(())
            }
            (GroupSpec::FreeProduct { orders }, GroupElement::Product(w)) => {
                for s in w.syllables() {
                    let order = orders.get(s.factor as usize).ok_or_else(|| {
                        Error::Domain(format!("factor {} is outside the free product", s.factor))
                    })?;
                    if s.power == 0 || s.power >= *order {
                        return Err(Error::Domain(format!(
                            "syllable power {} is not canonical mod {order}",
                            s.power
                        )));
                    }
                }
                Ok(())
            }
            (GroupSpec::Lamplighter, GroupElement::Lamp(_)) => Ok(()),
            _ => Err(Error::Domain(format!("element {g} does not belong to group {self}"))),
        }
    }

    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        self.check(b)?;
        let mut out = a.clone();
        self.right_mul_assign(&mut out, b)?;
        Ok(out)
    }

    /// `a <- a * b` without re-validating canonical forms.
    pub fn right_mul_assign(&self, a: &mut GroupElement, b: &GroupElement) -> Result<()> {
        match (self, a, b) {
            (GroupSpec::Free { .. }, GroupElement::Free(x), GroupElement::Free(y)) => {
                x.right_mul_assign(y);
            }
            (GroupSpec::FreeProduct { orders }, GroupElement::Product(x), GroupElement::Product(y)) => {
                x.right_mul_assign(y, orders);
            }
            (GroupSpec::Lamplighter, GroupElement::Lamp(x), GroupElement::Lamp(y)) => {
                x.right_mul_assign(y);
            }
            (_, a, b) => {
                return Err(Error::Domain(format!(
                    "cannot multiply {a} and {b} in group {self}"
                )))
            }
        }
        Ok(())
    }

    pub fn invert(&self, g: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        Ok(match (self, g) {
            (_, GroupElement::Free(w)) => GroupElement::Free(w.inverse()),
            (GroupSpec::FreeProduct { orders }, GroupElement::Product(w)) => {
                GroupElement::Product(w.inverse(orders))
            }
            (_, GroupElement::Lamp(s)) => GroupElement::Lamp(s.inverse()),
            _ => unreachable!("checked above"),
        })
    }

    /// Geodesic word length with respect to [`GroupSpec::generators`].
    pub fn word_length(&self, g: &GroupElement) -> Result<u64> {
        self.check(g)?;
        Ok(match (self, g) {
            (_, GroupElement::Free(w)) => w.len() as u64,
            (GroupSpec::FreeProduct { orders }, GroupElement::Product(w)) => w.length(orders),
            (_, GroupElement::Lamp(s)) => s.word_length(),
            _ => unreachable!("checked above"),
        })
    }

    /// Parses an element: dot-separated generator tokens (`a.b-.a^3`), `e` for the
    /// identity, or for the lamplighter also the state form `lamps{-1:1,1:1}@0`.
    pub fn parse_element(&self, s: &str) -> Result<GroupElement> {
        let s = s.trim();
        if let GroupSpec::Lamplighter = self {
            if s.starts_with("lamps{") {
                return LampState::parse(s).map(GroupElement::Lamp);
            }
        }
        let mut out = self.identity();
        if s.is_empty() || s == "e" {
            return Ok(out);
        }
        let mut offset = 0;
        for token in s.split('.') {
            let (name, power) = parse_token(token, offset)?;
            let base = self.generator_by_name(name).ok_or_else(|| {
                Error::parse(offset, format!("unknown generator '{name}' for group {self}"))
            })?;
            let step = if power < 0 { self.invert(&base)? } else { base };
            for _ in 0..power.unsigned_abs() {
                self.right_mul_assign(&mut out, &step)?;
            }
            offset += token.len() + 1;
        }
        Ok(out)
    }

    fn generator_by_name(&self, name: char) -> Option<GroupElement> {
        match self {
            GroupSpec::Free { rank } => {
                let g = (name as u32).checked_sub('a' as u32)?;
                (g < *rank as u32)
                    .then(|| GroupElement::Free(FreeWord::from_letter(Letter::new(g as usize, false))))
            }
            GroupSpec::FreeProduct { orders } => {
                let f = (name as u32).checked_sub('a' as u32)? as usize;
                (f < orders.len()).then(|| GroupElement::Product(ProductWord::syllable(f as u8, 1)))
            }
            GroupSpec::Lamplighter => match name {
                't' => Some(GroupElement::Lamp(LampState::shift(1))),
                'a' => Some(GroupElement::Lamp(LampState::toggle(1))),
                _ => None,
            },
        }
    }

    /// Group-aware rendering (free-product inverses print as `a-`).
    pub fn display(&self, g: &GroupElement) -> String {
        match (self, g) {
            (GroupSpec::FreeProduct { orders }, GroupElement::Product(w)) if !w.is_identity() => w
                .syllables()
                .iter()
                .map(|s| {
                    let name = (b'a' + s.factor) as char;
                    let order = orders.get(s.factor as usize).copied().unwrap_or(0);
                    match s.power {
                        1 => name.to_string(),
                        p if p + 1 == order => format!("{name}-"),
                        p => format!("{name}^{p}"),
                    }
                })
                .collect::<Vec<_>>()
                .join("."),
            (GroupSpec::Lamplighter, GroupElement::Lamp(s)) if *s == LampState::shift(1) => "t".into(),
            (GroupSpec::Lamplighter, GroupElement::Lamp(s)) if *s == LampState::shift(-1) => "t-".into(),
            (GroupSpec::Lamplighter, GroupElement::Lamp(s)) if *s == LampState::toggle(1) => "a".into(),
            (GroupSpec::Lamplighter, GroupElement::Lamp(s)) if *s == LampState::toggle(-1) => "a-".into(),
            _ => g.to_string(),
        }
    }
}

fn parse_token(token: &str, offset: usize) -> Result<(char, i64)> {
    let mut chars = token.chars();
    let name = chars
        .next()
        .filter(|c| c.is_ascii_lowercase())
        .ok_or_else(|| Error::parse(offset, format!("expected a generator letter in '{token}'")))?;
    let rest = chars.as_str();
    let power = match rest {
        "" => 1,
        "-" => -1,
        _ => {
            let digits = rest
                .strip_prefix('^')
                .ok_or_else(|| Error::parse(offset + 1, format!("unexpected suffix '{rest}'")))?;
            digits
                .parse::<i64>()
                .map_err(|_| Error::parse(offset + 2, format!("bad exponent '{digits}'")))?
        }
    };
    Ok((name, power))
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSpec::Free { rank } => write!(f, "free:{rank}"),
            GroupSpec::FreeProduct { orders } => {
                let parts: Vec<String> = orders.iter().map(|n| n.to_string()).collect();
                write!(f, "freeprod:{}", parts.join(","))
            }
            GroupSpec::Lamplighter => write!(f, "zwrz"),
        }
    }
}

impl FromStr for GroupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "zwrz" {
            return Ok(GroupSpec::Lamplighter);
        }
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::parse(0, format!("expected 'free:k', 'freeprod:n,m,...' or 'zwrz', got '{s}'")))?;
        let arg_start = kind.len() + 1;
        match kind {
            "free" => {
                let rank = args
                    .parse::<usize>()
                    .map_err(|_| Error::parse(arg_start, format!("bad rank '{args}'")))?;
                GroupSpec::free(rank)
            }
            "freeprod" => {
                let mut orders = Vec::new();
                let mut pos = arg_start;
                for part in args.split(',') {
                    let n = part
                        .parse::<u32>()
                        .map_err(|_| Error::parse(pos, format!("bad factor order '{part}'")))?;
                    orders.push(n);
                    pos += part.len() + 1;
                }
                GroupSpec::free_product(orders)
            }
            other => Err(Error::parse(0, format!("unknown group kind '{other}'"))),
        }
    }
}

impl TryFrom<String> for GroupSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GroupSpec> for String {
    fn from(g: GroupSpec) -> String {
        g.to_string()
    }
}

/// A free-group letter: generator `i` is code `2i`, its inverse `2i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter(pub u8);

impl Letter {
    pub fn new(generator: usize, inverse: bool) -> Self {
        Letter((2 * generator + inverse as usize) as u8)
    }

    pub fn code(self) -> usize {
        self.0 as usize
    }

    pub fn generator(self) -> usize {
        (self.0 >> 1) as usize
    }

    pub fn is_inverse(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn inverse(self) -> Letter {
        Letter(self.0 ^ 1)
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = (b'a' + self.generator() as u8) as char;
        if self.is_inverse() {
            write!(f, "{name}-")
        } else {
            write!(f, "{name}")
        }
    }
}

/// A freely reduced word.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct FreeWord(Vec<Letter>);

impl FreeWord {
    pub fn identity() -> Self {
        FreeWord(Vec::new())
    }

    pub fn from_letter(l: Letter) -> Self {
        FreeWord(vec![l])
    }

    /// Reduces an arbitrary letter sequence.
    pub fn reduce(letters: impl IntoIterator<Item = Letter>) -> Self {
        let mut w = FreeWord::identity();
        for l in letters {
            w.push(l);
        }
        w
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<Letter> {
        self.0.last().copied()
    }

    /// Right-multiplies by one letter; returns `true` if it cancelled.
    pub fn push(&mut self, l: Letter) -> bool {
        if self.0.last() == Some(&l.inverse()) {
            self.0.pop();
            true
        } else {
            self.0.push(l);
            false
        }
    }

    /// `self <- self * g`; returns the shortest length reached during cancellation.
    pub fn right_mul_assign(&mut self, g: &FreeWord) -> usize {
        let mut cancelled = 0;
        for &l in &g.0 {
            if self.0.last() != Some(&l.inverse()) {
                break;
            }
            self.0.pop();
            cancelled += 1;
        }
        let low = self.0.len();
        self.0.extend_from_slice(&g.0[cancelled..]);
        low
    }

    pub fn inverse(&self) -> FreeWord {
        FreeWord(self.0.iter().rev().map(|l| l.inverse()).collect())
    }

    pub fn prefix(&self, m: usize) -> &[Letter] {
        &self.0[..m.min(self.0.len())]
    }

    pub fn common_prefix_len(&self, other: &[Letter]) -> usize {
        common_prefix_len(&self.0, other)
    }
}

pub(crate) fn common_prefix_len(a: &[Letter], b: &[Letter]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

impl From<Vec<Letter>> for FreeWord {
    fn from(v: Vec<Letter>) -> Self {
        FreeWord::reduce(v)
    }
}

/// `x_f^p` with `0 < p < order(f)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Syllable {
    pub factor: u8,
    pub power: u32,
}

/// A reduced word in a free product of cyclic groups: adjacent syllables come from distinct factors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ProductWord(Vec<Syllable>);

impl ProductWord {
    pub fn syllable(factor: u8, power: u32) -> Self {
        ProductWord(vec![Syllable { factor, power }])
    }

    pub fn syllables(&self) -> &[Syllable] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    fn push(&mut self, s: Syllable, orders: &[u32]) {
        match self.0.last_mut() {
            Some(last) if last.factor == s.factor => {
                let order = orders[s.factor as usize];
                let p = (last.power + s.power) % order;
                if p == 0 {
                    self.0.pop();
                } else {
                    last.power = p;
                }
            }
            _ => self.0.push(s),
        }
    }

    fn right_mul_assign(&mut self, g: &ProductWord, orders: &[u32]) {
        for &s in &g.0 {
            self.push(s, orders);
        }
    }

    fn inverse(&self, orders: &[u32]) -> ProductWord {
        ProductWord(
            self.0
                .iter()
                .rev()
                .map(|s| Syllable {
                    factor: s.factor,
                    power: orders[s.factor as usize] - s.power,
                })
                .collect(),
        )
    }

    fn length(&self, orders: &[u32]) -> u64 {
        self.0
            .iter()
            .map(|s| {
                let n = orders[s.factor as usize];
                s.power.min(n - s.power) as u64
            })
            .sum()
    }
}

/// Lamplighter element: integer lamps with finite support (no stored zeros) and a walker.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LampState {
    lamps: BTreeMap<i64, i64>,
    position: i64,
}

impl LampState {
    pub fn new(lamps: impl IntoIterator<Item = (i64, i64)>, position: i64) -> Self {
        let mut state = LampState {
            lamps: BTreeMap::new(),
            position,
        };
        for (site, value) in lamps {
            state.add_lamp(site, value);
        }
        state
    }

    /// The generator `t^k`: move the walker by `k`.
    pub fn shift(k: i64) -> Self {
        LampState::new([], k)
    }

    /// The generator `a^k`: add `k` to the lamp under the walker.
    pub fn toggle(k: i64) -> Self {
        LampState::new([(0, k)], 0)
    }

    pub fn lamps(&self) -> &BTreeMap<i64, i64> {
        &self.lamps
    }

    pub fn position(&self) -> i64 {
        self.position
    }

    fn add_lamp(&mut self, site: i64, value: i64) {
        if value == 0 {
            return;
        }
        let entry = self.lamps.entry(site).or_insert(0);
        *entry += value;
        if *entry == 0 {
            self.lamps.remove(&site);
        }
    }

    /// `(f, p)(f', p') = (f + f'(. - p), p + p')`.
    pub fn right_mul_assign(&mut self, g: &LampState) {
        for (&site, &value) in &g.lamps {
            self.add_lamp(site + self.position, value);
        }
        self.position += g.position;
    }

    pub fn inverse(&self) -> LampState {
        LampState::new(
            self.lamps.iter().map(|(&i, &v)| (i - self.position, -v)),
            -self.position,
        )
    }

    /// Lamp moves plus the shortest tour from 0 covering the support and ending at the walker.
    pub fn word_length(&self) -> u64 {
        let lamp_moves: u64 = self.lamps.values().map(|v| v.unsigned_abs()).sum();
        let p = self.position;
        let lo = self.lamps.keys().next().copied().unwrap_or(0).min(0).min(p);
        let hi = self.lamps.keys().next_back().copied().unwrap_or(0).max(0).max(p);
        let travel = 2 * (hi - lo) - p.abs();
        lamp_moves + travel as u64
    }

    fn parse(s: &str) -> Result<Self> {
        let body = s
            .strip_prefix("lamps{")
            .ok_or_else(|| Error::parse(0, "expected 'lamps{'"))?;
        let (inner, rest) = body
            .split_once('}')
            .ok_or_else(|| Error::parse(s.len(), "missing '}'"))?;
        let pos_str = rest
            .strip_prefix('@')
            .ok_or_else(|| Error::parse(s.len() - rest.len(), "expected '@position'"))?;
        let position = pos_str
            .parse::<i64>()
            .map_err(|_| Error::parse(s.len() - pos_str.len(), format!("bad position '{pos_str}'")))?;
        let mut lamps = Vec::new();
        let mut offset = "lamps{".len();
        for entry in inner.split(',').filter(|e| !e.is_empty()) {
            let (site, value) = entry
                .split_once(':')
                .ok_or_else(|| Error::parse(offset, format!("expected 'site:value' in '{entry}'")))?;
            let site = site
                .trim()
                .parse::<i64>()
                .map_err(|_| Error::parse(offset, format!("bad site '{site}'")))?;
            let value = value
                .trim()
                .parse::<i64>()
                .map_err(|_| Error::parse(offset, format!("bad value '{value}'")))?;
            lamps.push((site, value));
            offset += entry.len() + 1;
        }
        Ok(LampState::new(lamps, position))
    }
}

impl fmt::Display for LampState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let entries: Vec<String> = self.lamps.iter().map(|(i, v)| format!("{i}:{v}")).collect();
        write!(f, "lamps{{{}}}@{}", entries.join(","), self.position)
    }
}

/// Canonical form of a group element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroupElement {
    Free(FreeWord),
    Product(ProductWord),
    Lamp(LampState),
}

impl GroupElement {
    pub fn as_free(&self) -> Option<&FreeWord> {
        match self {
            GroupElement::Free(w) => Some(w),
            _ => None,
        }
    }

    pub fn free_letters(letters: &[Letter]) -> GroupElement {
        GroupElement::Free(FreeWord::reduce(letters.iter().copied()))
    }

    pub fn is_identity(&self) -> bool {
        match self {
            GroupElement::Free(w) => w.is_empty(),
            GroupElement::Product(w) => w.is_identity(),
            GroupElement::Lamp(s) => s.lamps.is_empty() && s.position == 0,
        }
    }

    fn variant_rank(&self) -> u8 {
        match self {
            GroupElement::Free(_) => 0,
            GroupElement::Product(_) => 1,
            GroupElement::Lamp(_) => 2,
        }
    }
}

impl Ord for GroupElement {
    /// Shortlex on words; lamplighter states by position, then lamps.
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (GroupElement::Free(a), GroupElement::Free(b)) => {
                a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0))
            }
            (GroupElement::Product(a), GroupElement::Product(b)) => {
                a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0))
            }
            (GroupElement::Lamp(a), GroupElement::Lamp(b)) => a
                .position
                .cmp(&b.position)
                .then_with(|| a.lamps.iter().cmp(b.lamps.iter())),
            _ => self.variant_rank().cmp(&other.variant_rank()),
        }
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Free(w) if w.is_empty() => write!(f, "e"),
            GroupElement::Free(w) => {
                let parts: Vec<String> = w.0.iter().map(|l| l.to_string()).collect();
                write!(f, "{}", parts.join("."))
            }
            GroupElement::Product(w) if w.is_identity() => write!(f, "e"),
            GroupElement::Product(w) => {
                let parts: Vec<String> = w
                    .0
                    .iter()
                    .map(|s| {
                        let name = (b'a' + s.factor) as char;
                        if s.power == 1 {
                            name.to_string()
                        } else {
                            format!("{name}^{}", s.power)
                        }
                    })
                    .collect();
                write!(f, "{}", parts.join("."))
            }
            GroupElement::Lamp(s) => write!(f, "{s}"),
        }
    }
}

/// A left-invariant metric on a group.
pub trait Metric {
    fn distance(&self, x: &GroupElement, y: &GroupElement) -> Result<f64>;

    fn norm(&self, x: &GroupElement) -> Result<f64>;
}

/// The word metric of the standard generating set.
#[derive(Debug, Clone, Copy)]
pub struct WordMetric<'a>(pub &'a GroupSpec);

impl Metric for WordMetric<'_> {
    fn distance(&self, x: &GroupElement, y: &GroupElement) -> Result<f64> {
        let z = self.0.multiply(&self.0.invert(x)?, y)?;
        Ok(self.0.word_length(&z)? as f64)
    }

    fn norm(&self, x: &GroupElement) -> Result<f64> {
        Ok(self.0.word_length(x)? as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> GroupSpec {
        GroupSpec::free(2).unwrap()
    }

    fn el(spec: &GroupSpec, s: &str) -> GroupElement {
        spec.parse_element(s).unwrap()
    }

    #[test]
    fn free_cancellation() {
        let g = f2();
        assert_eq!(g.multiply(&el(&g, "a"), &el(&g, "a-")).unwrap(), g.identity());
        assert_eq!(
            g.multiply(&el(&g, "a.b"), &el(&g, "b-.a")).unwrap(),
            el(&g, "a.a")
        );
        assert_eq!(el(&g, "a^2"), el(&g, "a.a"));
        assert_eq!(el(&g, "a^-2"), el(&g, "a-.a-"));
    }

    #[test]
    fn free_inverse_and_length() {
        let g = f2();
        assert_eq!(g.invert(&el(&g, "a.b")).unwrap(), el(&g, "b-.a-"));
        assert_eq!(g.invert(&g.identity()).unwrap(), g.identity());
        assert_eq!(g.word_length(&el(&g, "a.b.a-")).unwrap(), 3);
    }

    #[test]
    fn right_mul_reports_cancellation_depth() {
        let mut w = FreeWord::reduce([Letter(0), Letter(2), Letter(2)]);
        let g = FreeWord::reduce([Letter(3), Letter(3), Letter(1)]);
        let low = w.right_mul_assign(&g);
        assert_eq!(low, 0);
        assert!(w.is_empty());
        let mut w = FreeWord::reduce([Letter(0)]);
        let low = w.right_mul_assign(&FreeWord::reduce([Letter(2)]));
        assert_eq!(low, 1);
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn lamplighter_generator_semantics() {
        let g = GroupSpec::lamplighter();
        let x = el(&g, "t.a");
        assert_eq!(x, GroupElement::Lamp(LampState::new([(1, 1)], 1)));
        let y = GroupElement::Lamp(LampState::new([(0, 1)], 1));
        let inv = g.invert(&y).unwrap();
        assert_eq!(inv, GroupElement::Lamp(LampState::new([(-1, -1)], -1)));
        assert!(g.multiply(&y, &inv).unwrap().is_identity());
        assert_eq!(
            g.word_length(&GroupElement::Lamp(LampState::new([(0, 1)], 0))).unwrap(),
            1
        );
    }

    #[test]
    fn lamp_state_drops_zeros() {
        let g = GroupSpec::lamplighter();
        let x = el(&g, "a.a-");
        assert!(x.is_identity());
        assert_eq!(el(&g, "lamps{-1:1,1:1}@0").to_string(), "lamps{-1:1,1:1}@0");
    }

    #[test]
    fn free_product_arithmetic() {
        let g = GroupSpec::free_product(vec![2, 3]).unwrap();
        let a = el(&g, "a");
        assert!(g.multiply(&a, &a).unwrap().is_identity());
        let b2 = el(&g, "b^2");
        assert_eq!(b2, el(&g, "b-"));
        assert_eq!(g.word_length(&b2).unwrap(), 1);
        assert_eq!(g.word_length(&el(&g, "a.b.a.b-")).unwrap(), 4);
        assert_eq!(g.generators().len(), 3);
        assert_eq!(g.display(&b2), "b-");
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("free:2".parse::<GroupSpec>().unwrap(), f2());
        assert_eq!("zwrz".parse::<GroupSpec>().unwrap(), GroupSpec::Lamplighter);
        assert_eq!(
            "freeprod:2,3".parse::<GroupSpec>().unwrap(),
            GroupSpec::FreeProduct { orders: vec![2, 3] }
        );
        match "freeprod:2,x".parse::<GroupSpec>() {
            Err(Error::Parse { position, .. }) => assert_eq!(position, 11),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!("free:1".parse::<GroupSpec>(), Err(Error::Domain(_))));
        assert!(matches!("freeprod:2,2".parse::<GroupSpec>(), Err(Error::Domain(_))));
        assert!(matches!("torus".parse::<GroupSpec>(), Err(Error::Parse { .. })));
    }

    #[test]
    fn mixed_operands_are_rejected() {
        let g = f2();
        let lamp = GroupSpec::lamplighter().identity();
        assert!(matches!(g.multiply(&g.identity(), &lamp), Err(Error::Domain(_))));
        let c = el(&GroupSpec::free(3).unwrap(), "c");
        assert!(matches!(g.multiply(&c, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn generators_closed_under_inversion() {
        for spec in [f2(), GroupSpec::free_product(vec![2, 3]).unwrap(), GroupSpec::lamplighter()] {
            let gens = spec.generators();
            for g in &gens {
                assert!(gens.contains(&spec.invert(g).unwrap()), "{spec}: {g}");
            }
            let labels = spec.generator_labels();
            let mut dedup = labels.clone();
            dedup.sort();
            dedup.dedup();
            assert_eq!(dedup.len(), labels.len());
        }
    }
}
