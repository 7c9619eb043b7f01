//! Equation specifications `u_t = f(u_xxx, u_xx, u_x, u, x, t)` and the
//! pointwise quantities derived from them.

mod admissibility;
mod config;
mod presets;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{arg, ForgeError, Result};
use crate::expr::{Expr, FieldEnv, Var};
use crate::spectral::StateFunction;

pub use admissibility::{
    check_admissibility, check_admissibility_with, AdmissibilityOptions, AdmissibilityReport,
    ConditionOutcome,
};
pub use config::{load_spec_file, parse_spec_toml, SpecFile};
pub use presets::{preset, preset_names, Preset};

/// Highest partial-derivative order any consumer may request.
pub const MAX_PARTIAL_ORDER: usize = 11;

/// Multi-index of a partial derivative of `f`.
///
/// Slot 0 counts `∂x`, slots 1–4 count `∂z0 … ∂z3`, slot 5 counts `∂t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PartialKey {
    counts: [u8; 6],
}

impl PartialKey {
    pub const F: PartialKey = PartialKey { counts: [0; 6] };

    /// Key from jet slots `j ∈ {−1, 0, 1, 2, 3}` where `−1` stands for `x`.
    pub fn from_slots(slots: &[i8]) -> Self {
        let mut key = Self::F;
        for &j in slots {
            key.counts[(j + 1) as usize] += 1;
        }
        key
    }

    pub fn z(j: usize) -> Self {
        Self::F.with(Var::z(j))
    }

    fn index(v: Var) -> usize {
        match v {
            Var::X => 0,
            Var::Z0 => 1,
            Var::Z1 => 2,
            Var::Z2 => 3,
            Var::Z3 => 4,
            Var::T => 5,
        }
    }

    fn var_at(i: usize) -> Var {
        [Var::X, Var::Z0, Var::Z1, Var::Z2, Var::Z3, Var::T][i]
    }

    pub fn with(mut self, v: Var) -> Self {
        self.counts[Self::index(v)] += 1;
        self
    }

    pub fn count(&self, v: Var) -> usize {
        self.counts[Self::index(v)] as usize
    }

    pub fn order(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    /// Differentiation variables in canonical order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::with_capacity(self.order());
        for (i, &c) in self.counts.iter().enumerate() {
            for _ in 0..c {
                out.push(Self::var_at(i));
            }
        }
        out
    }

    /// Jet slots with `x ↦ −1`; `t` is not a jet slot and is skipped.
    pub fn slots(&self) -> Vec<i8> {
        let mut out = Vec::new();
        for i in 0..5 {
            for _ in 0..self.counts[i] {
                out.push(i as i8 - 1);
            }
        }
        out
    }

    /// The key with its last canonical variable removed, and that variable.
    pub fn parent(&self) -> Option<(PartialKey, Var)> {
        let i = (0..6).rev().find(|&i| self.counts[i] > 0)?;
        let mut p = *self;
        p.counts[i] -= 1;
        Some((p, Self::var_at(i)))
    }

    pub fn label(&self) -> String {
        if self.order() == 0 {
            return "f".into();
        }
        let names: Vec<&str> = self.vars().iter().map(|v| v.name()).collect();
        format!("f_{}", names.join(""))
    }

    /// Inverse of [`Self::label`]; also accepts `_` separators such as `f_z0_z3`.
    pub fn parse_label(label: &str) -> Result<Self> {
        let rest = label.trim();
        let rest = rest.strip_prefix('f').ok_or_else(|| {
            ForgeError::Config(format!("partial key `{label}` must start with `f`"))
        })?;
        let mut key = Self::F;
        let mut chars = rest.chars().filter(|c| *c != '_').peekable();
        while let Some(c) = chars.next() {
            let v = match c {
                'x' => Var::X,
                't' => Var::T,
                'z' => match chars.next() {
                    Some('0') => Var::Z0,
                    Some('1') => Var::Z1,
                    Some('2') => Var::Z2,
                    Some('3') => Var::Z3,
                    _ => return Err(ForgeError::Config(format!("bad jet index in `{label}`"))),
                },
                _ => return Err(ForgeError::Config(format!("bad character `{c}` in `{label}`"))),
            };
            key = key.with(v);
        }
        Ok(key)
    }
}

impl fmt::Display for PartialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `g_M = ∂x[g_D(u_xx, u_x, u, x, t)] + g_H(u_xxx, …, u, x, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub g_d: Expr,
    pub g_h: Expr,
}

/// An equation `u_t = f(…)` together with its partial derivatives.
#[derive(Clone, Debug)]
pub struct NonlinearitySpec {
    name: String,
    f: Expr,
    partials: BTreeMap<PartialKey, Expr>,
    max_order: usize,
    supplied: Vec<PartialKey>,
    decomposition: Option<Decomposition>,
    claims_a2: bool,
    claims_a3: bool,
    note: Option<String>,
}

impl NonlinearitySpec {
    /// Builds a spec whose partials through `max_order` (in `x` and the jet
    /// slots, plus `f_t`) are derived symbolically from `f`.
    pub fn from_expr(name: impl Into<String>, f: Expr, max_order: usize) -> Result<Self> {
        if max_order < 3 || max_order > MAX_PARTIAL_ORDER {
            return arg(format!("partial order budget must lie in [3, 11], got {max_order}"));
        }
        let partials = derive_partials(&f, max_order);
        Ok(Self {
            name: name.into(),
            f,
            partials,
            max_order,
            supplied: Vec::new(),
            decomposition: None,
            claims_a2: false,
            claims_a3: false,
            note: None,
        })
    }

    /// Replaces a derived partial with a user-supplied closed form.
    pub fn with_partial(mut self, key: PartialKey, e: Expr) -> Result<Self> {
        if key.order() == 0 || key.order() > self.max_order || key.count(Var::T) > 1 {
            return Err(ForgeError::Config(format!("partial {key} is outside the stored range")));
        }
        if e.is_zero() {
            self.partials.remove(&key);
        } else {
            self.partials.insert(key, e);
        }
        if !self.supplied.contains(&key) {
            self.supplied.push(key);
        }
        Ok(self)
    }

    pub fn with_decomposition(mut self, g_d: Expr, g_h: Expr) -> Result<Self> {
        if g_d.depends_on(Var::Z3) {
            return Err(ForgeError::Config("g_D may not depend on z3".into()));
        }
        self.decomposition = Some(Decomposition { g_d, g_h });
        Ok(self)
    }

    pub fn with_claims(mut self, a2: bool, a3: bool) -> Self {
        self.claims_a2 = a2;
        self.claims_a3 = a3;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn f(&self) -> &Expr {
        &self.f
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn decomposition(&self) -> Option<&Decomposition> {
        self.decomposition.as_ref()
    }

    pub fn claims_a2(&self) -> bool {
        self.claims_a2
    }

    pub fn claims_a3(&self) -> bool {
        self.claims_a3
    }

    pub fn note(&self) -> Option<&str> {
        self.note.as_deref()
    }

    pub fn supplied_partials(&self) -> &[PartialKey] {
        &self.supplied
    }

    /// Nonzero stored partials.
    pub fn partials(&self) -> impl Iterator<Item = (&PartialKey, &Expr)> {
        self.partials.iter()
    }

    /// `Ok(None)` means the partial vanishes identically.
    pub fn partial(&self, key: &PartialKey) -> Result<Option<&Expr>> {
        if key.order() == 0 {
            return Ok(Some(&self.f));
        }
        let xz = key.order() - key.count(Var::T);
        if xz > self.max_order || key.count(Var::T) > 1 {
            return Err(ForgeError::Config(format!(
                "partial {key} is beyond the stored order {} of `{}`",
                self.max_order, self.name
            )));
        }
        Ok(self.partials.get(key))
    }

    /// The equation run backwards in time: `f ↦ −f(…, −t)`.
    pub fn time_reversed(&self) -> NonlinearitySpec {
        let flip = |e: &Expr| Expr::neg(e.reflect_time());
        let partials = self
            .partials
            .iter()
            .map(|(k, e)| {
                let mut g = flip(e);
                if k.count(Var::T) % 2 == 1 {
                    g = Expr::neg(g);
                }
                (*k, g)
            })
            .collect();
        let decomposition = self.decomposition.as_ref().map(|d| Decomposition {
            g_d: d.g_d.reflect_time(),
            g_h: d.g_h.reflect_time(),
        });
        NonlinearitySpec {
            name: format!("{}_reversed", self.name),
            f: flip(&self.f),
            partials,
            max_order: self.max_order,
            supplied: self.supplied.clone(),
            decomposition,
            claims_a2: self.claims_a2,
            claims_a3: self.claims_a3,
            note: self.note.clone(),
        }
    }

    pub fn eval_point(&self, key: &PartialKey, args: &[f64; 6]) -> Result<f64> {
        Ok(self.partial(key)?.map_or(0.0, |e| e.eval(args)))
    }

    /// Field of the partial `key` on a jet; `None` when it vanishes identically.
    pub fn partial_field(&self, key: &PartialKey, jet: &Jet) -> Result<Option<Vec<f64>>> {
        Ok(self.partial(key)?.map(|e| e.eval_fields(&jet.env())))
    }
}

fn derive_partials(f: &Expr, max_order: usize) -> BTreeMap<PartialKey, Expr> {
    let xz = [Var::X, Var::Z0, Var::Z1, Var::Z2, Var::Z3];
    let mut out = BTreeMap::new();
    let mut frontier: Vec<(PartialKey, Expr, usize)> = vec![(PartialKey::F, f.clone(), 0)];
    for _ in 0..max_order {
        let mut next = Vec::new();
        for (key, e, last) in &frontier {
            for (i, v) in xz.iter().enumerate().skip(*last) {
                let d = e.diff(*v);
                if d.is_zero() {
                    continue;
                }
                let k = key.with(*v);
                out.insert(k, d.clone());
                next.push((k, d, i));
            }
        }
        frontier = next;
    }
    let ft = f.diff(Var::T);
    if !ft.is_zero() {
        out.insert(PartialKey::F.with(Var::T), ft);
    }
    out
}

/// Dealiased spatial derivatives `∂x^m u` for `m = 0..=order` plus node coordinates.
#[derive(Clone, Debug)]
pub struct Jet {
    pub derivs: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub t: f64,
}

impl Jet {
    pub fn new(u: &StateFunction, order: usize, dealias: bool) -> Result<Jet> {
        let base = if dealias { u.dealiased() } else { u.clone() };
        let mut derivs = Vec::with_capacity(order + 1);
        for m in 0..=order {
            derivs.push(base.derivative(m)?.into_values());
        }
        Ok(Jet {
            derivs,
            x: u.grid().nodes(),
            t: u.time(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn env(&self) -> FieldEnv<'_> {
        FieldEnv::new(
            [&self.derivs[0], &self.derivs[1], &self.derivs[2], &self.derivs[3]],
            &self.x,
            self.t,
        )
    }
}

fn finite_field(u: &StateFunction, values: Vec<f64>) -> Result<StateFunction> {
    StateFunction::from_values(u.grid(), values, u.time())
}

/// Pointwise `f(∂x³u, ∂x²u, ∂xu, u, x, t)` with 2/3-rule dealiased inputs.
pub fn evaluate_rhs(spec: &NonlinearitySpec, u: &StateFunction) -> Result<StateFunction> {
    let jet = Jet::new(u, 3, true)?;
    finite_field(u, spec.f.eval_fields(&jet.env()))
}

/// Same as [`evaluate_rhs`] on an already-built jet, returning raw values.
pub fn evaluate_rhs_on(spec: &NonlinearitySpec, jet: &Jet) -> Vec<f64> {
    spec.f.eval_fields(&jet.env())
}

const DEGENERATE: f64 = 1e-14;

/// `max_x 1/|f_z3|`, or `+∞` when `f_z3` vanishes somewhere on the grid.
pub fn dispersion_lambda(spec: &NonlinearitySpec, u: &StateFunction) -> f64 {
    match Jet::new(u, 3, true) {
        Ok(jet) => dispersion_lambda_on(spec, &jet),
        Err(_) => f64::INFINITY,
    }
}

pub fn dispersion_lambda_on(spec: &NonlinearitySpec, jet: &Jet) -> f64 {
    let field = match spec.partial_field(&PartialKey::z(3), jet) {
        Ok(Some(v)) => v,
        _ => return f64::INFINITY,
    };
    let mut lam = 0.0f64;
    for v in field {
        if !(v.abs() > DEGENERATE) {
            return f64::INFINITY;
        }
        lam = lam.max(1.0 / v.abs());
    }
    lam
}

/// `g_M = f_z2 / f_z3` as a field.
pub fn modified_diffusion_ratio(spec: &NonlinearitySpec, u: &StateFunction) -> Result<StateFunction> {
    let jet = Jet::new(u, 3, true)?;
    let values = modified_diffusion_ratio_on(spec, &jet)?;
    finite_field(u, values)
}

pub fn modified_diffusion_ratio_on(spec: &NonlinearitySpec, jet: &Jet) -> Result<Vec<f64>> {
    let a3 = spec
        .partial_field(&PartialKey::z(3), jet)?
        .ok_or_else(|| ForgeError::Degeneracy(format!("f_z3 of `{}` vanishes identically", spec.name)))?;
    let a2 = spec
        .partial_field(&PartialKey::z(2), jet)?
        .unwrap_or_else(|| vec![0.0; jet.len()]);
    let mut out = Vec::with_capacity(a3.len());
    for (i, (n, d)) in a2.iter().zip(&a3).enumerate() {
        if !(d.abs() > DEGENERATE) {
            return Err(ForgeError::Degeneracy(format!(
                "f_z3 vanishes at node {i} (x = {})",
                jet.x[i]
            )));
        }
        out.push(n / d);
    }
    Ok(out)
}
