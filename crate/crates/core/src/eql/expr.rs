use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, Mat};
use crate::ndiff::{Activation, Unit};

use super::net::EqlNet;
use super::Dataset;

/// Readouts with more terms than this are rejected.
pub const MAX_TERMS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Sin,
    Cos,
    Sinh,
}

impl Func {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sinh => x.sinh(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
        }
    }
}

/// Factor of a term. `Func` arguments may only refer to earlier atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Atom {
    Var(usize),
    Func { func: Func, inner: Vec<Term> },
}

/// `coef * prod(atom ^ power)`; factors sorted by atom index, powers >= 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub factors: Vec<(usize, u32)>,
}

/// Sum of terms over a shared atom table, with like terms collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicExpr {
    pub names: Vec<String>,
    pub atoms: Vec<Atom>,
    pub terms: Vec<Term>,
}

type Monomial = Vec<(usize, u32)>;
type Poly = BTreeMap<Monomial, f64>;

fn eval_terms(terms: &[Term], atom_vals: &[f64]) -> f64 {
    terms.iter().map(|t| t.coef * factor_value(&t.factors, atom_vals)).sum()
}

fn factor_value(factors: &[(usize, u32)], atom_vals: &[f64]) -> f64 {
    factors.iter().map(|&(a, p)| atom_vals[a].powi(p as i32)).product()
}

impl SymbolicExpr {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Free coefficients: one per term plus one per inner term of every
    /// function atom the expression uses.
    pub fn n_params(&self) -> usize {
        let mut used = vec![false; self.atoms.len()];
        for t in &self.terms {
            t.factors.iter().for_each(|&(a, _)| used[a] = true);
        }
        // Inner terms only reference earlier atoms.
        let mut inner = 0;
        for a in (0..self.atoms.len()).rev() {
            if let (true, Atom::Func { inner: terms, .. }) = (used[a], &self.atoms[a]) {
                inner += terms.len();
                terms.iter().flat_map(|t| &t.factors).for_each(|&(b, _)| used[b] = true);
            }
        }
        self.terms.len() + inner
    }

    fn atom_values(&self, x: &[f64]) -> Vec<f64> {
        let mut vals = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let v = match a {
                Atom::Var(i) => x[*i],
                Atom::Func { func, inner } => func.apply(eval_terms(inner, &vals)),
            };
            vals.push(v);
        }
        vals
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        eval_terms(&self.terms, &self.atom_values(x))
    }

    pub fn mse(&self, data: &Dataset) -> f64 {
        data.x.iter().zip(&data.y).map(|(x, y)| (self.eval(x) - y).powi(2)).sum::<f64>() / data.len().max(1) as f64
    }

    /// Coefficient of the pure monomial `prod x_i ^ powers[i]` (0 if absent).
    pub fn monomial_coefficient(&self, powers: &[u32]) -> f64 {
        let want: Monomial = powers
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0)
            .map(|(i, &p)| (self.var_atom(i).unwrap_or(usize::MAX), p))
            .collect();
        self.terms.iter().find(|t| t.factors == want).map_or(0.0, |t| t.coef)
    }

    fn var_atom(&self, i: usize) -> Option<usize> {
        self.atoms.iter().position(|a| *a == Atom::Var(i))
    }

    /// Every factor of every term is an input variable.
    pub fn is_polynomial(&self) -> bool {
        self.terms.iter().all(|t| t.factors.iter().all(|&(a, _)| matches!(self.atoms[a], Atom::Var(_))))
    }

    /// `target = rhs` display line.
    pub fn equation(&self, target: &str) -> String {
        format!("{target} = {self}")
    }

    fn fmt_terms(&self, terms: &[Term], f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if terms.is_empty() {
            return f.write_str("0");
        }
        for (k, t) in terms.iter().enumerate() {
            let c = round_sig(t.coef, 4);
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            match (k, sign) {
                (0, "-") => f.write_str("-")?,
                (0, _) => {}
                _ => write!(f, " {sign} ")?,
            }
            let mut parts = Vec::new();
            if t.factors.is_empty() || mag != 1.0 {
                parts.push(format!("{mag}"));
            }
            for &(a, p) in &t.factors {
                let base = match &self.atoms[a] {
                    Atom::Var(i) => self.names.get(*i).cloned().unwrap_or_else(|| format!("x{}", i + 1)),
                    Atom::Func { func, inner } => {
                        let mut s = String::new();
                        fmt::write(&mut s, format_args!("{}(", func.name()))?;
                        s.push_str(&InnerDisplay(self, inner).to_string());
                        s.push(')');
                        s
                    }
                };
                parts.push(if p == 1 { base } else { format!("{base}^{p}") });
            }
            f.write_str(&parts.join("*"))?;
        }
        Ok(())
    }
}

struct InnerDisplay<'a>(&'a SymbolicExpr, &'a [Term]);

impl fmt::Display for InnerDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt_terms(self.1, f)
    }
}

/// Terms by descending total degree; coefficients at 4 significant digits.
impl fmt::Display for SymbolicExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms = self.terms.clone();
        terms.sort_by(|a, b| {
            let deg = |t: &Term| t.factors.iter().map(|f| f.1).sum::<u32>();
            deg(b).cmp(&deg(a)).then_with(|| a.factors.cmp(&b.factors))
        });
        self.fmt_terms(&terms, f)
    }
}

/// `v` rounded to `digits` significant digits.
pub(crate) fn round_sig(v: f64, digits: usize) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.*e}", digits - 1, v).parse().unwrap_or(v)
}

struct Builder {
    atoms: Vec<Atom>,
}

impl Builder {
    fn intern(&mut self, atom: Atom) -> usize {
        if let Some(i) = self.atoms.iter().position(|a| *a == atom) {
            return i;
        }
        self.atoms.push(atom);
        self.atoms.len() - 1
    }
}

fn to_terms(p: &Poly) -> Vec<Term> {
    p.iter().filter(|(_, c)| **c != 0.0).map(|(m, c)| Term { coef: *c, factors: m.clone() }).collect()
}

fn constant(c: f64) -> Poly {
    let mut p = Poly::new();
    if c != 0.0 {
        p.insert(Vec::new(), c);
    }
    p
}

fn mul(a: &Poly, b: &Poly) -> Result<Poly> {
    let mut out = Poly::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let mut m: BTreeMap<usize, u32> = ma.iter().copied().collect();
            for &(k, p) in mb {
                *m.entry(k).or_insert(0) += p;
            }
            *out.entry(m.into_iter().collect()).or_insert(0.0) += ca * cb;
        }
    }
    if out.len() > 8 * MAX_TERMS {
        return Err(Error::TermExplosion(out.len(), MAX_TERMS));
    }
    Ok(out)
}

/// Expand the (pruned) network into a sum of terms that evaluates to the same
/// function. Masked parameters are exact zeros and contribute nothing.
pub fn readout_equation(net: &EqlNet, names: &[String]) -> Result<SymbolicExpr> {
    let n = net.spec.n_inputs;
    readout_equation_affine(net, names, &vec![0.0; n], &vec![1.0; n])
}

/// Readout of a network trained on inputs `(x_i - shift_i) / scale_i`,
/// expressed in the raw inputs `x_i`.
pub fn readout_equation_affine(net: &EqlNet, names: &[String], shift: &[f64], scale: &[f64]) -> Result<SymbolicExpr> {
    let n = net.spec.n_inputs;
    if names.len() != n || shift.len() != n || scale.len() != n {
        return Err(Error::Shape(format!("{} names, {} shifts, {} scales for {n} inputs", names.len(), shift.len(), scale.len())));
    }
    if scale.iter().any(|s| !(s.abs() > 0.0) || !s.is_finite()) || shift.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidArgument("input scales must be finite and nonzero".into()));
    }
    let mut b = Builder { atoms: (0..n).map(Atom::Var).collect() };
    let mut h: Vec<Poly> = (0..n)
        .map(|i| {
            let mut p = BTreeMap::from([(vec![(i, 1)], 1.0 / scale[i])]);
            if shift[i] != 0.0 {
                p.insert(Vec::new(), -shift[i] / scale[i]);
            }
            p
        })
        .collect();
    let plans = net.plans();
    for (l, plan) in plans.iter().enumerate() {
        let z = affine(&net.layers[l], &h);
        h = plan
            .iter()
            .map(|u| match *u {
                Unit::Product { a, b: c } => mul(&z[a], &z[c]),
                Unit::Single { act: Activation::Identity, input } => Ok(z[input].clone()),
                Unit::Single { act: Activation::Square, input } => mul(&z[input], &z[input]),
                Unit::Single { act, input } => {
                    let func = match act {
                        Activation::Sin => Func::Sin,
                        Activation::Cos => Func::Cos,
                        Activation::Sinh => Func::Sinh,
                        other => return Err(Error::InvalidArgument(format!("no readout for {}", other.name()))),
                    };
                    let p = &z[input];
                    if p.keys().all(|m| m.is_empty()) {
                        return Ok(constant(func.apply(p.values().sum())));
                    }
                    // Odd functions absorb a negative leading coefficient of
                    // the argument into the outer sign; cos is even.
                    let mut inner = to_terms(p);
                    let mut sign = 1.0;
                    if inner.iter().find(|t| !t.factors.is_empty()).is_some_and(|t| t.coef < 0.0) {
                        inner.iter_mut().for_each(|t| t.coef = -t.coef);
                        if func != Func::Cos {
                            sign = -1.0;
                        }
                    }
                    let idx = b.intern(Atom::Func { func, inner });
                    Ok(BTreeMap::from([(vec![(idx, 1)], sign)]))
                }
            })
            .collect::<Result<_>>()?;
    }
    let out = affine(&net.layers[2], &h).pop().expect("one output");
    let terms = to_terms(&out);
    if terms.len() > MAX_TERMS {
        return Err(Error::TermExplosion(terms.len(), MAX_TERMS));
    }
    Ok(SymbolicExpr { names: names.to_vec(), atoms: b.atoms, terms })
}

fn affine(layer: &crate::ndiff::Dense<f64>, h: &[Poly]) -> Vec<Poly> {
    (0..layer.fan_out())
        .map(|j| {
            let mut acc = constant(layer.bias.get(0, j));
            for (i, p) in h.iter().enumerate() {
                let w = layer.weight.get(i, j);
                if w == 0.0 {
                    continue;
                }
                for (m, c) in p {
                    *acc.entry(m.clone()).or_insert(0.0) += w * c;
                }
            }
            acc
        })
        .collect()
}

/// Greedy backward elimination with least-squares refits of the surviving
/// coefficients: a term is dropped while the refit MSE stays within
/// `(1 + tau)` times the reference MSE (plus 1e-10 of the mean square target,
/// so exact fits can still shed redundant terms). The reference is the
/// smaller of the MSE of `expr` and of its full refit.
pub fn simplify_equation(expr: &SymbolicExpr, data: &Dataset, tau: f64) -> Result<SymbolicExpr> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tau}")));
    }
    let cols: Vec<Vec<f64>> = {
        let vals: Vec<Vec<f64>> = data.x.iter().map(|x| expr.atom_values(x)).collect();
        expr.terms.iter().map(|t| vals.iter().map(|v| factor_value(&t.factors, v)).collect()).collect()
    };
    let n = data.len() as f64;
    let scale = data.y.iter().map(|y| y * y).sum::<f64>() / n;
    let fit = |active: &[usize]| -> Result<(Vec<f64>, f64)> {
        if active.is_empty() {
            return Ok((Vec::new(), scale));
        }
        let a = Mat::from_fn(data.len(), active.len(), |i, j| cols[active[j]][i]);
        let coef = lstsq(&a, &data.y)?;
        let mse = (0..data.len())
            .map(|i| (active.iter().zip(&coef).map(|(&k, c)| c * cols[k][i]).sum::<f64>() - data.y[i]).powi(2))
            .sum::<f64>()
            / n;
        Ok((coef, mse))
    };
    let mut active: Vec<usize> = (0..expr.terms.len()).collect();
    let (mut coef, refit_mse) = fit(&active)?;
    let given_mse = expr.mse(data);
    if !(refit_mse <= given_mse) {
        // Only numerically degenerate columns make the refit worse.
        coef = active.iter().map(|&k| expr.terms[k].coef).collect();
    }
    let allowed = (1.0 + tau) * refit_mse.min(given_mse) + 1e-10 * scale;
    loop {
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for drop in 0..active.len() {
            let trial: Vec<usize> = active.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, &k)| k).collect();
            let (c, m) = fit(&trial)?;
            if best.as_ref().is_none_or(|b| m < b.2) {
                best = Some((drop, c, m));
            }
        }
        match best {
            Some((drop, c, m)) if m <= allowed => {
                active.remove(drop);
                coef = c;
            }
            _ => break,
        }
    }
    let terms = active
        .iter()
        .zip(&coef)
        .filter(|(_, c)| **c != 0.0)
        .map(|(&k, &c)| Term { coef: c, factors: expr.terms[k].factors.clone() })
        .collect();
    Ok(SymbolicExpr { names: expr.names.clone(), atoms: expr.atoms.clone(), terms })
}
