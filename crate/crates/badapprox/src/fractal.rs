//! Cantor-series coding of the cube K, trees with evaporation rates and the
//! dimension bounds they give, box counting, and the two tree builders.

use std::collections::HashSet;
use std::f64::consts::LN_2;

use bitvec::prelude::*;

use crate::core_theory::{ApproxFunction, DimFunction, Dimensions};
use crate::error::{invalid, Error, Result};
use crate::rng::{shard_rng, unit};
use crate::scheduler::Schedule;
use crate::tolerances::{CYLINDER_MARGIN, NODE_BUDGET, SHRINK};

/// A word ω = (ω_1, …, ω_k); each letter holds D = m·n digits in row-major
/// order, digit j of letter i lying in [0, N_{i+1}).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word {
    pub letters: Vec<Vec<u64>>,
}

impl Word {
    pub fn empty() -> Self {
        Word::default()
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn child(&self, letter: Vec<u64>) -> Word {
        let mut w = self.clone();
        w.letters.push(letter);
        w
    }

    /// Letters as ':'-separated digit groups, digits within a letter joined by '.'.
    pub fn digits(&self) -> String {
        self.letters
            .iter()
            .map(|l| l.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("."))
            .collect::<Vec<_>>()
            .join(":")
    }
}

/// The (N_k)-adic coding of K = [0,1]^D given by a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingScheme {
    schedule: Schedule,
    dims: Dimensions,
}

impl CodingScheme {
    pub fn new(schedule: Schedule, dims: Dimensions) -> Self {
        CodingScheme { schedule, dims }
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    /// D = m·n.
    pub fn big_d(&self) -> usize {
        self.dims.big_d()
    }

    pub fn depth(&self) -> usize {
        self.schedule.len()
    }

    /// log2 N_{k+1}.
    pub fn base_log2(&self, k: usize) -> u64 {
        self.schedule.exponent(k)
    }

    /// log2 N^k.
    pub fn log2_nk(&self, k: usize) -> u64 {
        self.schedule.log2_nprod(k)
    }

    pub fn validate(&self, word: &Word) -> Result<()> {
        if word.len() > self.depth() {
            return invalid(format!("word of length {} exceeds schedule depth {}", word.len(), self.depth()));
        }
        for (k, letter) in word.letters.iter().enumerate() {
            if letter.len() != self.big_d() {
                return invalid(format!("letter {k} has {} digits, expected {}", letter.len(), self.big_d()));
            }
            let e = self.base_log2(k);
            if e < 64 && letter.iter().any(|&d| d >> e != 0) {
                return invalid(format!("digit out of range at level {}", k + 1));
            }
        }
        Ok(())
    }

    /// π(ω) = Σ_k ω_k / N^k, the lower corner of K_ω.
    pub fn encode(&self, word: &Word) -> Result<Vec<f64>> {
        self.validate(word)?;
        let mut x = vec![0.0; self.big_d()];
        for (k, letter) in word.letters.iter().enumerate() {
            let scale = (-(self.log2_nk(k + 1) as f64)).exp2();
            for (xi, &d) in x.iter_mut().zip(letter) {
                *xi += d as f64 * scale;
            }
        }
        Ok(x)
    }

    /// N^k·π(ω) as exact integers (one per matrix entry).
    pub fn offset(&self, word: &Word) -> Result<Vec<u128>> {
        self.validate(word)?;
        let k = word.len();
        let total = self.log2_nk(k);
        if total > 127 {
            return Err(Error::Precision(format!("N^k = 2^{total} does not fit in 128 bits")));
        }
        let mut c = vec![0u128; self.big_d()];
        for (j, letter) in word.letters.iter().enumerate() {
            let shift = total - self.log2_nk(j + 1);
            for (ci, &d) in c.iter_mut().zip(letter) {
                *ci += (d as u128) << shift;
            }
        }
        Ok(c)
    }

    /// Φ_ω(y) = π(ω) + y/N^k, the affine bijection K → K_ω.
    pub fn phi(&self, word: &Word, y: &[f64]) -> Result<Vec<f64>> {
        let base = self.encode(word)?;
        let s = (-(self.log2_nk(word.len()) as f64)).exp2();
        Ok(base.iter().zip(y).map(|(b, v)| b + v * s).collect())
    }

    /// The unique k with 1/N^{k+1} < ρ ≤ 1/N^k.
    pub fn k_of_rho(&self, rho: f64) -> Result<usize> {
        if !(rho > 0.0 && rho <= 1.0) {
            return invalid(format!("rho must lie in (0,1], got {rho}"));
        }
        let l = -rho.log2();
        for k in 0..self.depth() {
            if (self.log2_nk(k + 1) as f64) > l {
                return Ok(k);
            }
        }
        invalid(format!("rho={rho} is finer than the schedule resolves"))
    }
}


/// log2 of the largest per-node child set the builders handle.
pub const MAX_CHILD_BITS: u64 = 30;

/// Upper limit on Farey fractions visited for one node.
pub const FAREY_BUDGET: f64 = 2e9;

/// Largest q scanned directly while qψ(q) ≥ 1/2.
const SMALL_Q_LIMIT: u64 = 1 << 20;

/// Child index → letter: D digits of `bits` bits each, most significant first.
fn letter_of(index: u64, digit_bits: u64, d: usize) -> Vec<u64> {
    let mask = if digit_bits >= 64 { u64::MAX } else { (1u64 << digit_bits) - 1 };
    (0..d).map(|j| (index >> (digit_bits * (d - 1 - j) as u64)) & mask).collect()
}

/// Position of the r-th zero bit.
fn select_zero(bits: &BitVec<u64, Lsb0>, mut r: u64) -> Option<usize> {
    let len = bits.len();
    for (w, &word) in bits.as_raw_slice().iter().enumerate() {
        let mut zeros = !word;
        let base = w * 64;
        if base + 64 > len {
            let valid = len - base;
            zeros &= if valid == 64 { u64::MAX } else { (1u64 << valid) - 1 };
        }
        let c = zeros.count_ones() as u64;
        if r < c {
            for _ in 0..r {
                zeros &= zeros - 1;
            }
            return Some(base + zeros.trailing_zeros() as usize);
        }
        r -= c;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeKind {
    /// Built from an explicit child rule.
    Rule,
    /// Children removed when certified inside W_ψ.
    Survivor,
    /// Children removed when they meet a slab of the block window.
    Avoidance,
}

impl std::fmt::Display for TreeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TreeKind::Rule => "rule",
            TreeKind::Survivor => "survivor",
            TreeKind::Avoidance => "avoidance (unconditional-geometry variant)",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub word: Word,
    /// #T_ω; None on the deepest level.
    pub kept: Option<u128>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub depth: usize,
    pub node_budget: u128,
    /// Nodes kept per level once the budget forces sampling.
    pub samples: usize,
    pub seed: u64,
}

impl BuildOptions {
    pub fn new(depth: usize) -> Self {
        BuildOptions { depth, node_budget: NODE_BUDGET, samples: 8, seed: 0 }
    }
}

/// A finite tree T^0, …, T^depth in E^*, with its evaporation rates.
///
/// Levels up to `exhaustive_levels` are complete; deeper levels hold
/// sampled nodes only and the rates there are estimates over the sample.
#[derive(Debug, Clone)]
pub struct Tree {
    scheme: CodingScheme,
    kind: TreeKind,
    levels: Vec<Vec<TreeNode>>,
    /// first child of node i of level k sits at starts[k][i] in level k+1
    starts: Vec<Vec<usize>>,
    p_plus: Vec<f64>,
    p_minus: Vec<f64>,
    exhaustive_levels: usize,
    truncated: bool,
    died_at: Option<usize>,
}

impl Tree {
    /// Builds a tree level by level; `removed` returns, for a node, the set
    /// of removed children indexed by letter (digits read most significant first).
    pub fn build<F>(scheme: &CodingScheme, kind: TreeKind, opts: &BuildOptions, mut removed: F) -> Result<Tree>
    where
        F: FnMut(&Word) -> Result<BitVec<u64, Lsb0>>,
    {
        if opts.depth > scheme.depth() {
            return invalid(format!("depth {} exceeds schedule depth {}", opts.depth, scheme.depth()));
        }
        let d = scheme.big_d();
        let mut levels = vec![vec![TreeNode { word: Word::empty(), kept: None }]];
        let mut starts = Vec::new();
        let (mut p_plus, mut p_minus) = (Vec::new(), Vec::new());
        let mut used: u128 = 1;
        let mut sampled = false;
        let mut exhaustive_levels = 0;
        let mut died_at = None;
        for k in 0..opts.depth {
            let digit_bits = scheme.base_log2(k);
            let bits = digit_bits * d as u64;
            if bits > MAX_CHILD_BITS {
                return Err(Error::Unsupported(format!("{bits} bits of children per node at level {k}")));
            }
            let total = 1u64 << bits;
            let mut rng = shard_rng(opts.seed, k as u64);
            let count = levels[k].len();
            let mut quota = vec![if sampled { 1usize } else { 0 }; count];
            if !sampled {
                for _ in 0..opts.samples {
                    quota[((unit(&mut rng) * count as f64) as usize).min(count - 1)] += 1;
                }
            }
            let mut all_ok = !sampled;
            let mut next_all = Vec::new();
            let mut next_starts = Vec::new();
            let mut next_sampled = Vec::new();
            let (mut pmax, mut pmin) = (0.0f64, 1.0f64);
            for (i, node) in levels[k].iter_mut().enumerate() {
                let rem = removed(&node.word)?;
                if rem.len() as u64 != total {
                    return invalid("removal set has the wrong length");
                }
                let kept = total - rem.count_ones() as u64;
                node.kept = Some(kept as u128);
                let frac = (total - kept) as f64 / total as f64;
                pmax = pmax.max(frac);
                pmin = pmin.min(frac);
                if kept == 0 && died_at.is_none() {
                    died_at = Some(k + 1);
                }
                if all_ok {
                    if used + next_all.len() as u128 + kept as u128 > opts.node_budget {
                        all_ok = false;
                        next_all = Vec::new();
                        next_starts = Vec::new();
                    } else {
                        next_starts.push(next_all.len());
                        for idx in rem.iter_zeros() {
                            next_all.push(TreeNode { word: node.word.child(letter_of(idx as u64, digit_bits, d)), kept: None });
                        }
                    }
                }
                for _ in 0..quota[i] {
                    if kept > 0 {
                        let r = ((unit(&mut rng) * kept as f64) as u64).min(kept - 1);
                        let idx = select_zero(&rem, r).expect("r < number of zeros");
                        next_sampled.push(TreeNode { word: node.word.child(letter_of(idx as u64, digit_bits, d)), kept: None });
                    }
                }
            }
            p_plus.push(pmax);
            p_minus.push(pmin);
            let next = if all_ok {
                exhaustive_levels = k + 1;
                used += next_all.len() as u128;
                starts.push(next_starts);
                next_all
            } else {
                sampled = true;
                next_sampled
            };
            let empty = next.is_empty();
            levels.push(next);
            if empty {
                break;
            }
        }
        Ok(Tree {
            scheme: scheme.clone(),
            kind,
            levels,
            starts,
            p_plus,
            p_minus,
            exhaustive_levels,
            truncated: sampled,
            died_at,
        })
    }

    /// Keeps the children listed by `rule` (letters) at every node.
    pub fn from_rule<R>(scheme: &CodingScheme, opts: &BuildOptions, rule: R) -> Result<Tree>
    where
        R: Fn(&Word) -> Vec<Vec<u64>>,
    {
        let d = scheme.big_d();
        Tree::build(scheme, TreeKind::Rule, opts, |w| {
            let digit_bits = scheme.base_log2(w.len());
            let total = 1usize << (digit_bits * d as u64);
            let mut rem = bitvec![u64, Lsb0; 1; total];
            for letter in rule(w) {
                if letter.len() != d || letter.iter().any(|&x| x >> digit_bits != 0) {
                    return invalid("rule produced an invalid letter");
                }
                let idx = letter.iter().fold(0u64, |acc, &x| (acc << digit_bits) | x);
                rem.set(idx as usize, false);
            }
            Ok(rem)
        })
    }

    pub fn scheme(&self) -> &CodingScheme {
        &self.scheme
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn levels(&self) -> &[Vec<TreeNode>] {
        &self.levels
    }

    /// Number of levels with known evaporation rates.
    pub fn resolved_depth(&self) -> usize {
        self.p_plus.len()
    }

    pub fn exhaustive_levels(&self) -> usize {
        self.exhaustive_levels
    }

    /// True when the node budget forced sampling.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// First level at which some node lost every child.
    pub fn died_at(&self) -> Option<usize> {
        self.died_at
    }

    /// P_k^+, k ≥ 1.
    pub fn p_plus(&self, k: usize) -> f64 {
        self.p_plus[k - 1]
    }

    /// P_k^−, k ≥ 1.
    pub fn p_minus(&self, k: usize) -> f64 {
        self.p_minus[k - 1]
    }

    fn children_total(&self, k: usize) -> f64 {
        ((self.scheme.base_log2(k - 1) * self.scheme.big_d() as u64) as f64).exp2()
    }

    /// M_k^− = (N_k)^D (1 − P_k^+).
    pub fn m_minus(&self, k: usize) -> f64 {
        self.children_total(k) * (1.0 - self.p_plus(k))
    }

    /// M_k^+ = (N_k)^D (1 − P_k^−).
    pub fn m_plus(&self, k: usize) -> f64 {
        self.children_total(k) * (1.0 - self.p_minus(k))
    }

    /// ln f_± at ρ = e^l, from k(ρ) and the rates up to it.
    fn ln_f(&self, l: f64, upper: bool) -> Result<f64> {
        if !(l <= 0.0) {
            return invalid(format!("rho must lie in (0,1], got e^{l}"));
        }
        let x = -l / LN_2 + 1e-9;
        let depth = self.resolved_depth();
        let k = (0..=depth).take_while(|&k| self.scheme.log2_nk(k) as f64 <= x).last().unwrap_or(0);
        let beyond = if k < self.scheme.depth() {
            self.scheme.log2_nk(k + 1) as f64 <= x
        } else {
            x > self.scheme.log2_nk(k) as f64 + 2e-9
        };
        if beyond {
            return Err(Error::Precondition(format!("rho is finer than the {depth} resolved levels")));
        }
        let rates = if upper { &self.p_plus } else { &self.p_minus };
        let excess: f64 = rates[..k].iter().map(|p| -(1.0 - p).ln()).sum();
        Ok(self.scheme.big_d() as f64 * l + excess)
    }

    /// f_+(ρ) = ρ^D Π_{j ≤ k(ρ)} 1/(1 − P_j^+).
    pub fn f_plus(&self, rho: f64) -> Result<f64> {
        Ok(self.ln_f(rho.ln(), true)?.exp())
    }

    /// f_−(ρ) = ρ^D Π_{j ≤ k(ρ)} 1/(1 − P_j^−).
    pub fn f_minus(&self, rho: f64) -> Result<f64> {
        Ok(self.ln_f(rho.ln(), false)?.exp())
    }

    /// One line per node: `level,word-digits,children-kept` (kept empty on the last level).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, level) in self.levels.iter().enumerate() {
            for node in level {
                let kept = node.kept.map(|x| x.to_string()).unwrap_or_default();
                out.push_str(&format!("{k},{},{kept}\n", node.word.digits()));
            }
        }
        out
    }

    /// Midpoint of K_ω as an exact fraction (numerator, denominator), for D = 1.
    pub fn midpoint(&self, word: &Word) -> Result<(u128, u128)> {
        if self.scheme.big_d() != 1 {
            return Err(Error::Unsupported("midpoints as fractions need D = 1".into()));
        }
        let bits = self.scheme.log2_nk(word.len());
        if bits > 126 {
            return Err(Error::Precision("midpoint denominator exceeds 128 bits".into()));
        }
        let c = self.scheme.offset(word)?[0];
        Ok((2 * c + 1, 1u128 << (bits + 1)))
    }
}

/// The output of [`dimension_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionBounds {
    /// sup P_k^+ < 1, so the mass distribution bound applies.
    pub lower_valid: bool,
    pub upper_valid: bool,
    /// min of f/f_+ over the deeper half of the resolved scales.
    pub hausdorff_lower: f64,
    /// min of f/f_− over the same scales.
    pub box_upper: f64,
    /// Exponent of f_+ at the deepest level (a lower bound for the dimension).
    pub s_lower: f64,
    /// Exponent of f_− at the deepest level (an upper bound for the dimension).
    pub s_upper: f64,
    pub depth: usize,
}

pub fn dimension_bounds(tree: &Tree, f: &DimFunction) -> Result<DimensionBounds> {
    let depth = tree.resolved_depth();
    if depth == 0 {
        return Err(Error::Precondition("tree has no resolved levels".into()));
    }
    if f.dims().big_d() != tree.scheme.big_d() {
        return invalid("dimension function and tree disagree on D");
    }
    let d = tree.scheme.big_d() as f64;
    let lower_valid = tree.p_plus.iter().all(|&p| p < 1.0);
    let bits = tree.scheme.log2_nk(depth) as f64 * LN_2;
    let exponent = |rates: &[f64]| d - rates.iter().map(|p| -(1.0 - p).ln()).sum::<f64>() / bits;
    let s_lower = if lower_valid { exponent(&tree.p_plus).max(0.0) } else { 0.0 };
    let s_upper = exponent(&tree.p_minus).max(0.0);
    let mut lo = f64::INFINITY;
    let mut up = f64::INFINITY;
    for k in (depth / 2).max(1)..=depth {
        let mut ls = vec![-(tree.scheme.log2_nk(k) as f64) * LN_2];
        if k < tree.scheme.depth() {
            ls.push(-(tree.scheme.log2_nk(k + 1) as f64) * LN_2 + 1e-9);
        }
        for l in ls {
            let fl = f.ln_eval(l);
            if lower_valid {
                lo = lo.min(fl - tree.ln_f(l, true)?);
            }
            up = up.min(fl - tree.ln_f(l, false)?);
        }
    }
    Ok(DimensionBounds {
        lower_valid,
        upper_valid: true,
        hausdorff_lower: if lower_valid { lo.exp() } else { 0.0 },
        box_upper: up.exp(),
        s_lower,
        s_upper,
        depth,
    })
}

/// Number of aligned grid cells of side 2ρ needed to cover the points;
/// a point on a cell boundary is assigned to the lower cell.
pub fn box_count_points(points: &[Vec<f64>], rho: f64) -> Result<u64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return invalid(format!("rho must lie in (0,1], got {rho}"));
    }
    let c = 2.0 * rho;
    let cells: HashSet<Vec<i64>> = points
        .iter()
        .map(|x| x.iter().map(|&v| ((v / c).ceil() as i64 - 1).max((v / c).floor() as i64 - 1).max(0)).collect())
        .collect();
    Ok(cells.len() as u64)
}

/// Number of closed grid cells of side 2ρ meeting the interior of some
/// cylinder of the first level with side ≤ 2ρ. These cells cover the
/// closure of the limit set.
pub fn box_count_tree(tree: &Tree, rho: f64) -> Result<u64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return invalid(format!("rho must lie in (0,1], got {rho}"));
    }
    let c = 2.0 * rho;
    let k = (0..tree.levels.len())
        .find(|&k| (-(tree.scheme.log2_nk(k) as f64)).exp2() <= c)
        .ok_or_else(|| Error::Precondition("tree is too shallow for this rho".into()))?;
    if k > tree.exhaustive_levels {
        return Err(Error::Precondition(format!("level {k} is sampled, not complete")));
    }
    let side = (-(tree.scheme.log2_nk(k) as f64)).exp2();
    let mut cells = HashSet::new();
    for node in &tree.levels[k] {
        let x = tree.scheme.encode(&node.word)?;
        let ranges: Vec<(i64, i64)> = x
            .iter()
            .map(|&v| {
                let a = (v / c).floor() as i64;
                let b = (((v + side) / c).ceil() as i64 - 1).max(a);
                (a, b)
            })
            .collect();
        let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            cells.insert(idx.clone());
            let mut i = 0;
            loop {
                if i == idx.len() {
                    break;
                }
                if idx[i] < ranges[i].1 {
                    idx[i] += 1;
                    break;
                }
                idx[i] = ranges[i].0;
                i += 1;
            }
            if i == idx.len() {
                break;
            }
        }
    }
    Ok(cells.len() as u64)
}

/// Upper estimate of μ(B(x,ρ)) for the measure that splits mass evenly
/// among kept children: the mass of level-(k(ρ)+1) cylinders meeting the
/// closed sup-norm ball.
pub fn ball_mass(tree: &Tree, center: &[f64], rho: f64) -> Result<f64> {
    let d = tree.scheme.big_d();
    if center.len() != d {
        return invalid("center has the wrong dimension");
    }
    let target = (tree.scheme.k_of_rho(rho)? + 1).min(tree.exhaustive_levels);
    let mut total = 0.0;
    let mut stack = vec![(0usize, 0usize, 1.0f64)];
    while let Some((k, i, mass)) = stack.pop() {
        let node = &tree.levels[k][i];
        let x = tree.scheme.encode(&node.word)?;
        let side = (-(tree.scheme.log2_nk(k) as f64)).exp2();
        let meets = x.iter().zip(center).all(|(&a, &c)| a <= c + rho && a + side >= c - rho);
        if !meets {
            continue;
        }
        if k == target {
            total += mass;
            continue;
        }
        let kept = node.kept.unwrap_or(0) as usize;
        let start = tree.starts[k][i];
        for j in start..start + kept {
            stack.push((k + 1, j, mass / kept as f64));
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Removal {
    Contained,
    Meets,
}

/// Brackets a/b ≤ x < c/d of x = num/den in the Farey sequence of order
/// qmax, calling `visit` on the Stern–Brocot records met on the way.
fn farey_bracket(num: i128, den: i128, qmax: i128, visit: &mut impl FnMut(i128, i128)) -> (i128, i128, i128, i128) {
    let fl = num.div_euclid(den);
    let (mut a, mut b, mut c, mut d) = (fl, 1i128, fl + 1, 1i128);
    visit(a, b);
    visit(c, d);
    let batch = |kk: i128, visit: &mut dyn FnMut(i128)| {
        let mut j = 1;
        while j < kk {
            visit(j);
            j *= 2;
        }
        visit(kk);
    };
    while b + d <= qmax {
        let s = num * b - a * den;
        let t = c * den - num * d;
        if (a + c) * den <= num * (b + d) {
            let kk = (s / t).min((qmax - b) / d);
            batch(kk, &mut |j| visit(a + j * c, b + j * d));
            a += kk * c;
            b += kk * d;
        } else {
            let kk = if s == 0 { (qmax - d) / b } else { ((t - 1) / s).min((qmax - d) / b) };
            batch(kk, &mut |j| visit(c + j * a, d + j * b));
            c += kk * a;
            d += kk * b;
        }
    }
    (a, b, c, d)
}

/// Children of a one-dimensional node touched by the slabs
/// |qx − p| ≤ ψ(q), q ∈ [q_lo, q_hi], under the given rule.
fn slab_children(
    scheme: &CodingScheme,
    word: &Word,
    psi: &ApproxFunction,
    q_lo: u64,
    q_hi: u64,
    rule: Removal,
) -> Result<BitVec<u64, Lsb0>> {
    let k = word.len();
    let bits_k = scheme.log2_nk(k);
    let child_bits = scheme.base_log2(k);
    if bits_k > 60 {
        return Err(Error::Precision(format!("N^k = 2^{bits_k} exceeds the 2^60 node limit")));
    }
    if child_bits > MAX_CHILD_BITS {
        return Err(Error::Unsupported(format!("2^{child_bits} children per node")));
    }
    let nc = 1u64 << child_bits;
    let mut removed = bitvec![u64, Lsb0; 0; nc as usize];
    if q_hi < q_lo.max(1) || matches!(psi.family(), crate::core_theory::PsiFamily::Zero) {
        return Ok(removed);
    }
    if q_hi >= 1 << 60 {
        return Err(Error::Precision("denominators beyond 2^60".into()));
    }
    let span = 1.0 / (bits_k as f64).exp2();
    let estimate = 0.31 * (q_hi as f64).powi(2) * span;
    if estimate > FAREY_BUDGET {
        return Err(Error::BudgetExceeded { required: estimate as u128, limit: FAREY_BUDGET as u128 });
    }
    let c0 = scheme.offset(word)?[0] as i128;
    let den = 1i128 << bits_k;
    let nk = (bits_k as f64).exp2();
    let ncf = nc as f64;
    let factor = match rule {
        Removal::Contained => 1.0 - SHRINK,
        Removal::Meets => 1.0 + SHRINK,
    };
    let thickness = |q: f64| match psi.family() {
        crate::core_theory::PsiFamily::PowerLaw { kappa } => kappa / (q * q),
        _ => psi.big_psi(q),
    };
    let mut mark = |p: i128, q: i128| {
        if q < q_lo as i128 || q > q_hi as i128 || q <= 0 {
            return;
        }
        let e = p * den - c0 * q;
        let qf = q as f64;
        let y = e as f64 / qf * ncf;
        let h = thickness(qf) * factor * nk * ncf;
        let (lo, hi) = match rule {
            Removal::Contained => ((y - h + CYLINDER_MARGIN).ceil(), (y + h - CYLINDER_MARGIN).floor() - 1.0),
            Removal::Meets => ((y - h - CYLINDER_MARGIN).ceil() - 1.0, (y + h + CYLINDER_MARGIN).floor()),
        };
        let lo = lo.max(0.0);
        let hi = hi.min(ncf - 1.0);
        if lo <= hi {
            removed[lo as usize..=hi as usize].fill(true);
        }
    };
    // Slabs with qψ(q) ≥ 1/2 are scanned directly; past them a slab that
    // meets the node with its centre outside contains an endpoint, so its
    // centre is a convergent of that endpoint and shows up as a record.
    let mut q_small = q_lo;
    while q_small <= q_hi && psi.phi(q_small as f64) * factor >= 0.49 {
        if q_small > SMALL_Q_LIMIT {
            return Err(Error::Unsupported("q·psi(q) stays above 1/2 for too long".into()));
        }
        let qf = q_small as f64;
        let reach = psi.psi(qf) * factor + 1.0;
        let lo = (qf * c0 as f64 / nk - reach).floor() as i128;
        let hi = (qf * (c0 + 1) as f64 / nk + reach).ceil() as i128;
        for p in lo..=hi {
            mark(p, q_small as i128);
        }
        q_small += 1;
    }
    let qmax = q_hi as i128;
    let (lo_num, hi_num) = (c0, c0 + 1);
    farey_bracket(hi_num, den, qmax, &mut mark);
    let (a, b, c, d) = farey_bracket(lo_num, den, qmax, &mut mark);
    // walk F_qmax upward across [x_lo, x_hi]
    let (mut a, mut b, mut c, mut d) = (a as i64, b as i64, c as i64, d as i64);
    let q64 = q_hi as i64;
    while (c as i128) * den <= hi_num * d as i128 {
        mark(c as i128, d as i128);
        let kk = (q64 + b) / d;
        let (e, f) = (kk * c - a, kk * d - b);
        (a, b, c, d) = (c, d, e, f);
    }
    Ok(removed)
}

fn one_dim(psi: &ApproxFunction, scheme: &CodingScheme) -> Result<()> {
    if psi.dims() != scheme.dims() {
        return invalid("psi and coding scheme disagree on (m, n)");
    }
    if scheme.big_d() != 1 && !matches!(psi.family(), crate::core_theory::PsiFamily::Zero) {
        return Err(Error::Unsupported("slab trees are implemented for m = n = 1".into()));
    }
    Ok(())
}

/// Largest q whose slab is thick enough to contain a cylinder with
/// log2 side −bits.
fn containment_q_max(psi: &ApproxFunction, bits: u64) -> u64 {
    let side = (-(bits as f64)).exp2();
    let ok = |q: u64| 2.0 * psi.psi(q as f64) * (1.0 - SHRINK) / q as f64 >= side;
    if !ok(1) {
        return 0;
    }
    let (mut lo, mut hi) = (1u64, 2u64);
    while ok(hi) {
        if hi >= 1 << 59 {
            return hi;
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// The tree of cylinders meeting B_{ψ,Q0}: a child is removed only when it
/// is certified to lie inside one slab |qx − p| ≤ ψ(q) with q ≥ Q0.
pub fn build_survivor_tree(psi: &ApproxFunction, q0: f64, scheme: &CodingScheme, opts: &BuildOptions) -> Result<Tree> {
    one_dim(psi, scheme)?;
    if !(q0 >= 1.0) {
        return invalid(format!("Q0 must be at least 1, got {q0}"));
    }
    if scheme.big_d() != 1 {
        return Tree::build(scheme, TreeKind::Survivor, opts, |w| {
            let total = 1usize << (scheme.base_log2(w.len()) * scheme.big_d() as u64);
            Ok(bitvec![u64, Lsb0; 0; total])
        });
    }
    let q_lo = q0.ceil() as u64;
    Tree::build(scheme, TreeKind::Survivor, opts, |w| {
        let q_hi = containment_q_max(psi, scheme.log2_nk(w.len() + 1));
        slab_children(scheme, w, psi, q_lo, q_hi, Removal::Contained)
    })
}

/// Block-window avoidance: a child of a level-k node is removed when it
/// meets a slab with q ∈ [max(Q0, Q^k), Q^{k+1}).
pub fn build_avoidance_tree(psi: &ApproxFunction, q0: f64, scheme: &CodingScheme, opts: &BuildOptions) -> Result<Tree> {
    one_dim(psi, scheme)?;
    if !(q0 >= 1.0) {
        return invalid(format!("Q0 must be at least 1, got {q0}"));
    }
    if scheme.big_d() != 1 {
        return Tree::build(scheme, TreeKind::Avoidance, opts, |w| {
            let total = 1usize << (scheme.base_log2(w.len()) * scheme.big_d() as u64);
            Ok(bitvec![u64, Lsb0; 0; total])
        });
    }
    let sched = scheme.schedule();
    Tree::build(scheme, TreeKind::Avoidance, opts, |w| {
        let k = w.len();
        let q_lo = q0.max(sched.q(k)).ceil() as u64;
        let top = sched.q(k + 1);
        let q_hi = if top >= (1u64 << 60) as f64 { 1u64 << 60 } else { (top.ceil() as u64).saturating_sub(1) };
        slab_children(scheme, w, psi, q_lo, q_hi, Removal::Meets)
    })
}
