//! UAI competition file formats: `.uai` Bayesian network models, `.evid`
//! evidence and `.MPE` result files.
//!
//! A [`UaiModel`] keeps tables exactly as written (linear probabilities, file
//! scope order), so parsing and serializing round-trip. Conversion to a
//! [`DiscreteNetwork`] moves to log space and sorted scopes.

use std::fmt::Write as _;

use ibia_core::{Assignment, DiscreteNetwork, Factor, VarId};

use crate::error::{Error, Result};

/// One whitespace-separated token and the 1-based line it sits on.
struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    what: &'static str,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str, what: &'static str) -> Self {
        let items =
            text.lines().enumerate().flat_map(|(i, line)| line.split_whitespace().map(move |t| (i + 1, t))).collect();
        Tokens { items, pos: 0, what }
    }

    fn line(&self) -> usize {
        self.items.get(self.pos).or(self.items.last()).map_or(1, |t| t.0)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { what: self.what, line: self.line(), msg: msg.into() }
    }

    fn next(&mut self, expect: &str) -> Result<&'a str> {
        let t =
            self.items.get(self.pos).ok_or_else(|| self.err(format!("unexpected end of input, expected {expect}")))?;
        self.pos += 1;
        Ok(t.1)
    }

    fn usize(&mut self, expect: &str) -> Result<usize> {
        let t = self.next(expect)?;
        t.parse().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected {expect}, found {t:?}"))
        })
    }

    fn f64(&mut self, expect: &str) -> Result<f64> {
        let t = self.next(expect)?;
        match t.parse::<f64>() {
            Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
            _ => {
                self.pos -= 1;
                Err(self.err(format!("expected {expect}, found {t:?}")))
            }
        }
    }

    fn finish(&self) -> Result<()> {
        match self.items.get(self.pos) {
            None => Ok(()),
            Some(&(line, t)) => Err(Error::Parse { what: self.what, line, msg: format!("trailing token {t:?}") }),
        }
    }
}

/// A BAYES model as written in a `.uai` file.
#[derive(Clone, Debug, PartialEq)]
pub struct UaiModel {
    pub cards: Vec<usize>,
    /// Function scopes in file order; the child is the last variable.
    pub scopes: Vec<Vec<VarId>>,
    /// Linear-space tables, row-major over the file scope order.
    pub tables: Vec<Vec<f64>>,
}

impl UaiModel {
    pub fn parse(text: &str) -> Result<Self> {
        let mut tok = Tokens::new(text, "model");
        let preamble = tok.next("preamble")?;
        if preamble != "BAYES" {
            tok.pos -= 1;
            return Err(tok.err(format!("only BAYES models are supported, found {preamble:?}")));
        }
        let n = tok.usize("variable count")?;
        let mut cards = Vec::with_capacity(n);
        for _ in 0..n {
            let c = tok.usize("cardinality")?;
            if c == 0 {
                tok.pos -= 1;
                return Err(tok.err("cardinality must be positive"));
            }
            cards.push(c);
        }
        let m = tok.usize("function count")?;
        let mut scopes = Vec::with_capacity(m);
        for _ in 0..m {
            let k = tok.usize("scope size")?;
            if k == 0 {
                tok.pos -= 1;
                return Err(tok.err("empty function scope"));
            }
            let mut scope = Vec::with_capacity(k);
            for _ in 0..k {
                let v = tok.usize("variable id")?;
                if v >= n {
                    tok.pos -= 1;
                    return Err(tok.err(format!("variable {v} out of range (model has {n})")));
                }
                scope.push(v);
            }
            scopes.push(scope);
        }
        let mut tables = Vec::with_capacity(m);
        for scope in &scopes {
            let len = tok.usize("table length")?;
            let want: usize = scope.iter().map(|&v| cards[v]).product();
            if len != want {
                tok.pos -= 1;
                return Err(tok.err(format!("table length {len} does not match scope state space {want}")));
            }
            let mut table = Vec::with_capacity(len);
            for _ in 0..len {
                table.push(tok.f64("probability")?);
            }
            tables.push(table);
        }
        tok.finish()?;
        Ok(UaiModel { cards, scopes, tables })
    }

    pub fn serialize(&self) -> String {
        let mut s = String::from("BAYES\n");
        let _ = writeln!(s, "{}", self.cards.len());
        let _ = writeln!(s, "{}", join(&self.cards));
        let _ = writeln!(s, "{}", self.scopes.len());
        for scope in &self.scopes {
            let _ = writeln!(s, "{} {}", scope.len(), join(scope));
        }
        for table in &self.tables {
            let _ = writeln!(s, "\n{}", table.len());
            let _ = writeln!(s, " {}", join(table));
        }
        s
    }

    /// Log-space network. Every variable needs exactly one function in which it
    /// is the last scope entry.
    pub fn to_network(&self) -> Result<DiscreteNetwork> {
        let n = self.cards.len();
        let mut slot: Vec<Option<usize>> = vec![None; n];
        for (i, scope) in self.scopes.iter().enumerate() {
            let child = *scope.last().expect("scopes are nonempty");
            if slot[child].replace(i).is_some() {
                return Err(Error::Model(format!("variable {child} is the child of more than one function")));
            }
        }
        let mut parents = Vec::with_capacity(n);
        let mut cpds = Vec::with_capacity(n);
        for (v, s) in slot.iter().enumerate() {
            let i = s.ok_or_else(|| Error::Model(format!("variable {v} has no conditional table")))?;
            let scope = &self.scopes[i];
            let mut ps = scope[..scope.len() - 1].to_vec();
            let cards = scope.iter().map(|&u| self.cards[u]).collect();
            let values = self.tables[i].iter().map(|p| p.ln()).collect();
            cpds.push(Factor::new(scope.clone(), cards, values)?);
            ps.sort_unstable();
            parents.push(ps);
        }
        Ok(DiscreteNetwork::new(self.cards.clone(), parents, cpds)?)
    }

    /// File form of a network: one function per variable in id order, parents
    /// ascending and the child last.
    pub fn from_network(net: &DiscreteNetwork) -> Self {
        let mut scopes = Vec::with_capacity(net.num_vars());
        let mut tables = Vec::with_capacity(net.num_vars());
        for v in 0..net.num_vars() {
            let mut scope = net.parents(v).to_vec();
            scope.push(v);
            let values = net.cpd(v).values_in_order(&scope).expect("scope matches CPD");
            tables.push(values.iter().map(|x| x.exp()).collect());
            scopes.push(scope);
        }
        UaiModel { cards: net.cards().to_vec(), scopes, tables }
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    let mut s = String::new();
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x}");
    }
    s
}

/// Evidence as `k v s v s ...`. The older multi-sample form, a leading sample
/// count of 1 followed by one such record, is accepted too.
pub fn parse_evidence(text: &str, cards: &[usize]) -> Result<Assignment> {
    let mut tok = Tokens::new(text, "evidence");
    if tok.items.is_empty() {
        return Ok(Assignment::new());
    }
    let mut k = tok.usize("evidence count")?;
    let rest = tok.items.len() - 1;
    if k == 1 && rest != 2 && rest >= 1 {
        k = tok.usize("evidence count")?;
    }
    let mut out = Assignment::new();
    for _ in 0..k {
        let v = tok.usize("variable id")?;
        let s = tok.usize("state")?;
        if v >= cards.len() {
            tok.pos -= 2;
            return Err(tok.err(format!("variable {v} out of range (model has {})", cards.len())));
        }
        if s >= cards[v] {
            tok.pos -= 1;
            return Err(tok.err(format!("state {s} out of range for variable {v} with {} states", cards[v])));
        }
        if out.insert(v, s).is_some() {
            tok.pos -= 2;
            return Err(tok.err(format!("variable {v} listed twice")));
        }
    }
    tok.finish()?;
    Ok(out)
}

pub fn serialize_evidence(evidence: &Assignment) -> String {
    let mut s = evidence.len().to_string();
    for (v, st) in evidence.iter() {
        let _ = write!(s, " {v} {st}");
    }
    s.push('\n');
    s
}

/// `MPE` followed by the variable count and one state per variable.
pub fn serialize_mpe(states: &[usize]) -> String {
    format!("MPE\n{} {}\n", states.len(), join(states)).replace(" \n", "\n")
}

pub fn parse_mpe(text: &str) -> Result<Vec<usize>> {
    let mut tok = Tokens::new(text, "result");
    let head = tok.next("MPE header")?;
    if head != "MPE" {
        tok.pos -= 1;
        return Err(tok.err(format!("expected MPE header, found {head:?}")));
    }
    let n = tok.usize("variable count")?;
    let states = (0..n).map(|_| tok.usize("state")).collect::<Result<Vec<_>>>()?;
    tok.finish()?;
    Ok(states)
}
