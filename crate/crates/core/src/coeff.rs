//! Chain-rule expansion of `∂xⁿ[f(∂x³u, …, u, x, t)]` and the coefficients of
//! the differentiated equation
//! `∂xⁿf = a₃ ∂x^{n+3}u + a₂ ∂x^{n+2}u + a₁ ∂x^{n+1}u + a₀ ∂xⁿu + f̃ₙ`.
//!
//! A term of the expansion is `C · f_{j₁…j_k} · ∂^{i₁}z_{j₁} ⋯ ∂^{i_k}z_{j_k}`
//! with `z_j = ∂x^j u` for `j ≥ 0` and `z_{−1} = x`.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{arg, ForgeError, Result};
use crate::nonlinearity::{evaluate_rhs, Jet, NonlinearitySpec, PartialKey};
use crate::spectral::{derivative, StateFunction};

pub const MAX_ORDER: usize = 11;

/// Which index tuples [`enumerate_indices`] returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexFilter {
    /// Every tuple of the formal expansion, including ones that vanish because
    /// `∂x^i x = 0` for `i ≥ 2`.
    Unrestricted,
    /// Tuples with `max(j, 1 − i) ≥ 0` for every pair.
    NonVanishing,
    /// Nonvanishing tuples that also satisfy `i + j < n` for every pair.
    Remainder,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct IndexTuple {
    /// `i₁ ≥ i₂ ≥ … ≥ i_k ≥ 1`.
    pub orders: Vec<u8>,
    /// `j_l ∈ {−1, …, 3}`, paired with `orders`.
    pub slots: Vec<i8>,
    pub multiplicity: u64,
}

impl IndexTuple {
    pub fn k(&self) -> usize {
        self.orders.len()
    }

    pub fn n(&self) -> usize {
        self.orders.iter().map(|&i| i as usize).sum()
    }

    pub fn is_nonvanishing(&self) -> bool {
        self.orders
            .iter()
            .zip(&self.slots)
            .all(|(&i, &j)| j >= 0 || i == 1)
    }

    pub fn is_remainder(&self, n: usize) -> bool {
        self.is_nonvanishing()
            && self
                .orders
                .iter()
                .zip(&self.slots)
                .all(|(&i, &j)| (i as i64 + j as i64) < n as i64)
    }

    pub fn partial_key(&self) -> PartialKey {
        PartialKey::from_slots(&self.slots)
    }

    /// Orders `i + j` of the `u`-derivative factors, largest first.
    pub fn monomial(&self) -> Vec<u8> {
        let mut m: Vec<u8> = self
            .orders
            .iter()
            .zip(&self.slots)
            .filter(|(_, &j)| j >= 0)
            .map(|(&i, &j)| i + j as u8)
            .collect();
        m.sort_unstable_by(|a, b| b.cmp(a));
        m
    }
}

type PairKey = Vec<(u8, i8)>;

fn canonical(mut pairs: PairKey) -> PairKey {
    pairs.sort_unstable_by(|a, b| b.cmp(a));
    pairs
}

/// Repeated symbolic differentiation: `tables[n]` maps each pair multiset of
/// `∂xⁿ f` to its multiplicity. With `prune`, pairs `(i ≥ 2, −1)` are dropped.
fn expand(prune: bool) -> Vec<BTreeMap<PairKey, u64>> {
    let mut tables = Vec::with_capacity(MAX_ORDER + 1);
    let mut cur: BTreeMap<PairKey, u64> = BTreeMap::new();
    cur.insert(Vec::new(), 1);
    tables.push(cur.clone());
    for _ in 0..MAX_ORDER {
        let mut next: BTreeMap<PairKey, u64> = BTreeMap::new();
        for (pairs, &c) in &cur {
            for j in -1i8..=3 {
                let mut p = pairs.clone();
                p.push((1, j));
                *next.entry(canonical(p)).or_insert(0) += c;
            }
            for l in 0..pairs.len() {
                let (i, j) = pairs[l];
                if prune && j == -1 {
                    continue;
                }
                let mut p = pairs.clone();
                p[l] = (i + 1, j);
                *next.entry(canonical(p)).or_insert(0) += c;
            }
        }
        tables.push(next.clone());
        cur = next;
    }
    tables
}

fn tables(prune: bool) -> &'static [BTreeMap<PairKey, u64>] {
    static PRUNED: OnceLock<Vec<BTreeMap<PairKey, u64>>> = OnceLock::new();
    static FULL: OnceLock<Vec<BTreeMap<PairKey, u64>>> = OnceLock::new();
    if prune {
        PRUNED.get_or_init(|| expand(true))
    } else {
        FULL.get_or_init(|| expand(false))
    }
}

/// Index tuples of `∂xⁿ f` with exactly `k` factors.
pub fn enumerate_indices(n: usize, k: usize, filter: IndexFilter) -> Result<Vec<IndexTuple>> {
    if n > MAX_ORDER {
        return Err(ForgeError::Regularity(n));
    }
    if k < 1 || k > n {
        return arg(format!("need 1 <= k <= n, got k = {k}, n = {n}"));
    }
    let table = &tables(filter != IndexFilter::Unrestricted)[n];
    Ok(table
        .iter()
        .filter(|(pairs, _)| pairs.len() == k)
        .map(|(pairs, &m)| IndexTuple {
            orders: pairs.iter().map(|p| p.0).collect(),
            slots: pairs.iter().map(|p| p.1).collect(),
            multiplicity: m,
        })
        .filter(|t| filter != IndexFilter::Remainder || t.is_remainder(n))
        .collect())
}

/// All tuples of `∂xⁿ f` over every `k`.
pub fn all_indices(n: usize, filter: IndexFilter) -> Result<Vec<IndexTuple>> {
    let mut out = Vec::new();
    for k in 1..=n.max(1) {
        out.extend(enumerate_indices(n, k, filter)?);
    }
    Ok(out)
}

/// One merged term `coeff · f_{partial} · Π ∂x^{m} u` over `m ∈ monomial`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Term {
    pub coeff: u64,
    pub partial: PartialKey,
    /// Factor orders, largest first.
    pub monomial: Vec<u8>,
}

impl Term {
    pub fn top_order(&self) -> Option<u8> {
        self.monomial.first().copied()
    }

    pub fn describe(&self) -> String {
        let mut s = format!("{}*{}", self.coeff, self.partial.label());
        for m in &self.monomial {
            s.push_str(&format!("*u{m}"));
        }
        s
    }
}

/// Nonvanishing terms of `∂xⁿ f`, merged on `(partial, monomial)`.
pub fn expansion_terms(n: usize) -> Result<Vec<Term>> {
    if n > MAX_ORDER {
        return Err(ForgeError::Regularity(n));
    }
    if n == 0 {
        return Ok(vec![Term {
            coeff: 1,
            partial: PartialKey::F,
            monomial: Vec::new(),
        }]);
    }
    let mut merged: BTreeMap<(PartialKey, Vec<u8>), u64> = BTreeMap::new();
    for t in all_indices(n, IndexFilter::NonVanishing)? {
        *merged.entry((t.partial_key(), t.monomial())).or_insert(0) += t.multiplicity;
    }
    Ok(merged
        .into_iter()
        .map(|((partial, monomial), coeff)| Term {
            coeff,
            partial,
            monomial,
        })
        .collect())
}

/// The printed 59-term expansion of `∂x³ f`, written out by hand.
/// Each entry is `(coefficient, partial, factor orders)`.
const APPENDIX: &[(u64, &str, &[u8])] = &[
    (1, "f_xxx", &[]),
    (3, "f_xxz0", &[1]),
    (3, "f_xxz1", &[2]),
    (3, "f_xxz2", &[3]),
    (3, "f_xxz3", &[4]),
    (3, "f_xz0", &[2]),
    (3, "f_xz0z0", &[1, 1]),
    (6, "f_xz0z1", &[2, 1]),
    (6, "f_xz0z2", &[3, 1]),
    (6, "f_xz0z3", &[4, 1]),
    (3, "f_xz1", &[3]),
    (3, "f_xz1z1", &[2, 2]),
    (6, "f_xz1z2", &[3, 2]),
    (6, "f_xz1z3", &[4, 2]),
    (3, "f_xz2", &[4]),
    (3, "f_xz2z2", &[3, 3]),
    (6, "f_xz2z3", &[4, 3]),
    (3, "f_xz3", &[5]),
    (3, "f_xz3z3", &[4, 4]),
    (1, "f_z0", &[3]),
    (3, "f_z0z0", &[2, 1]),
    (3, "f_z0z1", &[3, 1]),
    (3, "f_z0z1", &[2, 2]),
    (3, "f_z0z2", &[4, 1]),
    (3, "f_z0z2", &[3, 2]),
    (3, "f_z0z3", &[5, 1]),
    (3, "f_z0z3", &[4, 2]),
    (1, "f_z0z0z0", &[1, 1, 1]),
    (3, "f_z0z0z1", &[2, 1, 1]),
    (3, "f_z0z0z2", &[3, 1, 1]),
    (3, "f_z0z0z3", &[4, 1, 1]),
    (3, "f_z0z1z1", &[2, 2, 1]),
    (6, "f_z0z1z2", &[3, 2, 1]),
    (6, "f_z0z1z3", &[4, 2, 1]),
    (3, "f_z0z2z2", &[3, 3, 1]),
    (6, "f_z0z2z3", &[4, 3, 1]),
    (3, "f_z0z3z3", &[4, 4, 1]),
    (1, "f_z1", &[4]),
    (3, "f_z1z1", &[3, 2]),
    (3, "f_z1z2", &[4, 2]),
    // Printed with u_xxx cubed; the chain rule gives a square.
    (3, "f_z1z2", &[3, 3]),
    (3, "f_z1z3", &[5, 2]),
    (3, "f_z1z3", &[4, 3]),
    (1, "f_z1z1z1", &[2, 2, 2]),
    (3, "f_z1z1z2", &[3, 2, 2]),
    (3, "f_z1z1z3", &[4, 2, 2]),
    (3, "f_z1z2z2", &[3, 3, 2]),
    (6, "f_z1z2z3", &[4, 3, 2]),
    (3, "f_z1z3z3", &[4, 4, 2]),
    (1, "f_z2", &[5]),
    (3, "f_z2z2", &[4, 3]),
    (3, "f_z2z3", &[5, 3]),
    (3, "f_z2z3", &[4, 4]),
    (1, "f_z2z2z2", &[3, 3, 3]),
    (3, "f_z2z2z3", &[4, 3, 3]),
    (3, "f_z2z3z3", &[4, 4, 3]),
    (1, "f_z3", &[6]),
    (3, "f_z3z3", &[5, 4]),
    (1, "f_z3z3z3", &[4, 4, 4]),
];

pub fn appendix_terms() -> Vec<Term> {
    APPENDIX
        .iter()
        .map(|(c, label, mono)| Term {
            coeff: *c,
            partial: PartialKey::parse_label(label).expect("well-formed appendix label"),
            monomial: mono.to_vec(),
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct AppendixAudit {
    pub engine_terms: usize,
    pub appendix_terms: usize,
    pub matched: usize,
    pub only_in_engine: Vec<String>,
    pub only_in_appendix: Vec<String>,
}

impl AppendixAudit {
    pub fn bijective(&self) -> bool {
        self.only_in_engine.is_empty()
            && self.only_in_appendix.is_empty()
            && self.engine_terms == self.appendix_terms
            && self.matched == self.engine_terms
    }
}

/// Multiset comparison of the generated `n = 3` terms against the table.
pub fn appendix_audit() -> AppendixAudit {
    let engine = expansion_terms(3).expect("n = 3 is in range");
    let table = appendix_terms();
    let mut pool: HashMap<&Term, usize> = HashMap::new();
    for t in &table {
        *pool.entry(t).or_insert(0) += 1;
    }
    let mut matched = 0;
    let mut only_in_engine = Vec::new();
    for t in &engine {
        match pool.get_mut(t) {
            Some(c) if *c > 0 => {
                *c -= 1;
                matched += 1;
            }
            _ => only_in_engine.push(t.describe()),
        }
    }
    let mut only_in_appendix: Vec<String> = pool
        .iter()
        .flat_map(|(t, &c)| std::iter::repeat(t.describe()).take(c))
        .collect();
    only_in_appendix.sort();
    AppendixAudit {
        engine_terms: engine.len(),
        appendix_terms: table.len(),
        matched,
        only_in_engine,
        only_in_appendix,
    }
}

/// Record layout for JSON export of index tuples.
#[derive(Clone, Debug, Serialize)]
pub struct TermRecord {
    pub partials: Vec<i8>,
    pub orders: Vec<u8>,
    pub coeff: u64,
}

pub fn term_records(n: usize, filter: IndexFilter) -> Result<Vec<TermRecord>> {
    Ok(all_indices(n, filter)?
        .into_iter()
        .map(|t| TermRecord {
            partials: t.slots,
            orders: t.orders,
            coeff: t.multiplicity,
        })
        .collect())
}

/// Evaluates term lists on one state, caching partial-derivative fields.
struct TermEvaluator<'a> {
    spec: &'a NonlinearitySpec,
    jet: Jet,
    partials: HashMap<PartialKey, Option<Vec<f64>>>,
}

impl<'a> TermEvaluator<'a> {
    fn new(spec: &'a NonlinearitySpec, u: &StateFunction, order: usize) -> Result<Self> {
        Ok(Self {
            spec,
            jet: Jet::new(u, order, true)?,
            partials: HashMap::new(),
        })
    }

    fn partial(&mut self, key: &PartialKey) -> Result<Option<&Vec<f64>>> {
        if !self.partials.contains_key(key) {
            let field = self.spec.partial_field(key, &self.jet)?;
            self.partials.insert(*key, field);
        }
        Ok(self.partials[key].as_ref())
    }

    /// Adds `coeff · f_key · Π_{m ∈ factors} ∂^m u` into `acc`.
    fn accumulate(&mut self, acc: &mut [f64], coeff: f64, key: &PartialKey, factors: &[u8]) -> Result<()> {
        let Some(p) = self.partial(key)?.cloned() else {
            return Ok(());
        };
        let derivs = &self.jet.derivs;
        for (i, a) in acc.iter_mut().enumerate() {
            let mut v = coeff * p[i];
            for &m in factors {
                v *= derivs[m as usize][i];
            }
            *a += v;
        }
        Ok(())
    }
}

/// `∂x³ f` evaluated from the hand-written table.
pub fn third_derivative_rhs(spec: &NonlinearitySpec, u: &StateFunction) -> Result<StateFunction> {
    if spec.max_order() < 3 {
        return Err(ForgeError::Config(format!(
            "`{}` stores partials only through order {}",
            spec.name(),
            spec.max_order()
        )));
    }
    let mut ev = TermEvaluator::new(spec, u, 6)?;
    let mut acc = vec![0.0; u.grid().n()];
    for t in appendix_terms() {
        ev.accumulate(&mut acc, t.coeff as f64, &t.partial, &t.monomial)?;
    }
    StateFunction::from_values(u.grid(), acc, u.time())
}

#[derive(Clone, Debug)]
pub struct LinearizedCoefficients {
    pub order: usize,
    pub a3: StateFunction,
    pub a2: StateFunction,
    pub a1: StateFunction,
    pub a0: StateFunction,
    pub remainder: StateFunction,
    pub epsilon: f64,
}

impl LinearizedCoefficients {
    /// `a₃∂^{n+3}u + a₂∂^{n+2}u + a₁∂^{n+1}u + a₀∂ⁿu + f̃ₙ`.
    pub fn reconstruct(&self, u: &StateFunction) -> Result<StateFunction> {
        let n = self.order;
        let jet = Jet::new(u, n + 3, true)?;
        let d = &jet.derivs;
        let values = (0..u.grid().n())
            .map(|i| {
                self.a3.values()[i] * d[n + 3][i]
                    + self.a2.values()[i] * d[n + 2][i]
                    + self.a1.values()[i] * d[n + 1][i]
                    + self.a0.values()[i] * d[n][i]
                    + self.remainder.values()[i]
            })
            .collect();
        StateFunction::from_values(u.grid(), values, u.time())
    }

    /// Advances `n → n + 1` by differentiating the identity once.
    fn next(&self, u: &StateFunction) -> Result<LinearizedCoefficients> {
        let n = self.order;
        let d = |f: &StateFunction| derivative(f, 1);
        let dn = Jet::new(u, n, true)?.derivs.pop().expect("nonempty jet");
        let da0 = d(&self.a0)?;
        let remainder_vals: Vec<f64> = d(&self.remainder)?
            .values()
            .iter()
            .zip(da0.values())
            .zip(&dn)
            .map(|((r, a), w)| r + a * w)
            .collect();
        Ok(LinearizedCoefficients {
            order: n + 1,
            a3: self.a3.clone(),
            a2: self.a2.axpy(1.0, &d(&self.a3)?)?,
            a1: self.a1.axpy(1.0, &d(&self.a2)?)?,
            a0: self.a0.axpy(1.0, &d(&self.a1)?)?,
            remainder: StateFunction::from_values(u.grid(), remainder_vals, u.time())?,
            epsilon: self.epsilon,
        })
    }
}

/// Buckets every term of `∂xⁿ f` by its highest factor order.
pub fn explicit_coefficients(
    spec: &NonlinearitySpec,
    u: &StateFunction,
    n: usize,
    epsilon: f64,
) -> Result<LinearizedCoefficients> {
    if !(3..=MAX_ORDER).contains(&n) {
        return arg(format!("coefficient order must lie in [3, 11], got {n}"));
    }
    if spec.max_order() < n {
        return Err(ForgeError::Config(format!(
            "`{}` stores partials only through order {}, order {n} is needed",
            spec.name(),
            spec.max_order()
        )));
    }
    let terms = if n == 3 { appendix_terms() } else { expansion_terms(n)? };
    let mut ev = TermEvaluator::new(spec, u, n + 3)?;
    let len = u.grid().n();
    let mut buckets = vec![vec![0.0; len]; 5];
    for t in &terms {
        match t.top_order() {
            Some(top) if top as usize >= n => {
                let slot = top as usize - n;
                ev.accumulate(&mut buckets[slot], t.coeff as f64, &t.partial, &t.monomial[1..])?;
            }
            _ => ev.accumulate(&mut buckets[4], t.coeff as f64, &t.partial, &t.monomial)?,
        }
    }
    let mut fields = Vec::with_capacity(5);
    for b in buckets {
        fields.push(StateFunction::from_values(u.grid(), b, u.time())?);
    }
    let remainder = fields.pop().unwrap();
    let a3 = fields.pop().unwrap();
    let a2 = fields.pop().unwrap();
    let a1 = fields.pop().unwrap();
    let a0 = fields.pop().unwrap();
    Ok(LinearizedCoefficients {
        order: n,
        a3,
        a2,
        a1,
        a0,
        remainder,
        epsilon,
    })
}

/// Coefficients of the `n`-times differentiated equation. Orders 3 and 7 are
/// assembled term by term; the others follow from the nearest lower base by
/// the one-step recursion.
pub fn linearized_coefficients(
    spec: &NonlinearitySpec,
    u: &StateFunction,
    n: usize,
    epsilon: f64,
) -> Result<LinearizedCoefficients> {
    if !(3..=MAX_ORDER).contains(&n) {
        return arg(format!("coefficient order must lie in [3, 11], got {n}"));
    }
    let base = if n >= 7 && spec.max_order() >= 7 { 7 } else { 3 };
    let mut c = explicit_coefficients(spec, u, base, epsilon)?;
    while c.order < n {
        c = c.next(u)?;
    }
    Ok(c)
}

/// Only `a₃ = f_z3` and `a₂ = f_z2 + n ∂x f_z3`, which is all the gauge needs.
pub fn leading_coefficients(
    spec: &NonlinearitySpec,
    u: &StateFunction,
    n: usize,
) -> Result<(StateFunction, StateFunction)> {
    let jet = Jet::new(u, 3, true)?;
    let zeros = || vec![0.0; u.grid().n()];
    let f3 = spec.partial_field(&PartialKey::z(3), &jet)?.unwrap_or_else(zeros);
    let f2 = spec.partial_field(&PartialKey::z(2), &jet)?.unwrap_or_else(zeros);
    let a3 = StateFunction::from_values(u.grid(), f3, u.time())?;
    let da3 = derivative(&a3, 1)?;
    let a2 = StateFunction::from_values(u.grid(), f2, u.time())?.axpy(n as f64, &da3)?;
    Ok((a3, a2))
}

/// Relative `L²` mismatch between the bucketed identity and spectral `∂xⁿ f`.
pub fn reconstruction_error(spec: &NonlinearitySpec, u: &StateFunction, n: usize) -> Result<f64> {
    let c = linearized_coefficients(spec, u, n, 0.0)?;
    let lhs = c.reconstruct(u)?;
    let rhs = derivative(&evaluate_rhs(spec, u)?, n)?;
    let scale = rhs.l2_norm();
    let err = lhs.sub(&rhs)?.l2_norm();
    Ok(if scale > 0.0 { err / scale } else { err })
}

#[derive(Clone, Debug, Serialize)]
pub struct RemainderRow {
    pub h7: f64,
    /// `‖u‖_{H⁸}` for `n = 8`, `‖u‖_{H¹¹}` for `n = 11`, 1 for `n = 7`.
    pub majorant: f64,
    pub remainder_l2: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RemainderReport {
    pub order: usize,
    pub rows: Vec<RemainderRow>,
    /// Log-log slope of `ratio` against `‖u‖_{H⁷}`: the growth of the empirical constant.
    pub growth_exponent: Option<f64>,
    pub bounded: bool,
}

/// `‖f̃ₙ‖_{L²}` against its majorant over a family of states.
///
/// `bounded` holds when every ratio is finite and the ratio grows no faster
/// than `‖u‖_{H⁷}^{max_growth}` across the family, i.e. the constant depends
/// on the low norm only.
pub fn remainder_norm_check(
    spec: &NonlinearitySpec,
    states: &[StateFunction],
    n: usize,
    max_growth: f64,
) -> Result<RemainderReport> {
    if ![7, 8, 11].contains(&n) {
        return arg(format!("remainder check is defined for n in {{7, 8, 11}}, got {n}"));
    }
    let mut rows = Vec::with_capacity(states.len());
    for u in states {
        let c = linearized_coefficients(spec, u, n, 0.0)?;
        let remainder_l2 = c.remainder.l2_norm();
        let majorant = match n {
            7 => 1.0,
            8 => u.h_norm(8),
            _ => u.h_norm(11),
        };
        let ratio = if majorant > 0.0 { remainder_l2 / majorant } else { 0.0 };
        rows.push(RemainderRow {
            h7: u.h_norm(7),
            majorant,
            remainder_l2,
            ratio,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.h7).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let growth_exponent = crate::mollify::log_log_slope(&xs, &ys);
    let finite = rows.iter().all(|r| r.ratio.is_finite());
    let bounded = finite && growth_exponent.map_or(true, |g| g <= max_growth);
    Ok(RemainderReport {
        order: n,
        rows,
        growth_exponent,
        bounded,
    })
}
