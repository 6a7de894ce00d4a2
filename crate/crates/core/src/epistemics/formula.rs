//! Formulas over designated atoms and custom propositions.
//!
//! Text grammar, loosest binding first:
//!
//! ```text
//! formula := disj ( "->" formula )?
//! disj    := conj ( "|" conj )*
//! conj    := unary ( "&" unary )*
//! unary   := "!" unary
//!          | ("K" | "B" | "H") "[" agent "]" "(" formula ")"
//!          | "G" "(" formula ")"
//!          | "(" formula ")"
//!          | "true" | "false" | "#" name
//!          | "group" "(" k "," hap ")"
//!          | atom
//! ```
//!
//! Atoms are written as in [`DesignatedAtom`]'s display form, e.g.
//! `faulty(2)`, `occ_c(3,ext(o))`, `init(1,s0)`. `G` is "always" (up to the
//! horizon). `group(k,o)` abbreviates the disjunction over all `k`-sets of
//! agents `G` of `⋀_{j∈G} G(correct(j) & B[j](occ_c(o)))` and needs the
//! agent count.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;
use crate::error::{Error, Result};
use crate::model::{parse_atom_body, parse_local, DesignatedAtom, Hap, Name, ATOM_HEADS};
use crate::syntax::Cursor;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    False,
    Atom(DesignatedAtom),
    Prop(Name),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Know(AgentId, Box<Formula>),
    /// `B_i φ`, evaluated as `K_i(correct(i) → φ)`.
    Believe(AgentId, Box<Formula>),
    /// `H_i φ`, evaluated as `correct(i) → B_i φ`.
    Hope(AgentId, Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    pub fn atom(a: DesignatedAtom) -> Formula {
        Formula::Atom(a)
    }

    pub fn correct(i: AgentId) -> Formula {
        Formula::Atom(DesignatedAtom::Correct(i))
    }

    pub fn faulty(i: AgentId) -> Formula {
        Formula::Atom(DesignatedAtom::Faulty(i))
    }

    pub fn negate(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(vec![a, b])
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(vec![a, b])
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn know(i: AgentId, f: Formula) -> Formula {
        Formula::Know(i, Box::new(f))
    }

    pub fn believe(i: AgentId, f: Formula) -> Formula {
        Formula::Believe(i, Box::new(f))
    }

    pub fn hope(i: AgentId, f: Formula) -> Formula {
        Formula::Hope(i, Box::new(f))
    }

    pub fn always(f: Formula) -> Formula {
        Formula::Always(Box::new(f))
    }

    /// `⋁_{|G|=k} ⋀_{j∈G} □(correct(j) ∧ B_j occ_c(o))` over agents `1..=n`,
    /// with groups in lexicographic order.
    pub fn group_occurrence(n: usize, k: usize, o: &Hap) -> Formula {
        let inner = |j: AgentId| {
            Formula::always(Formula::and(
                Formula::correct(j),
                Formula::believe(j, Formula::Atom(DesignatedAtom::OccCAny(o.clone()))),
            ))
        };
        let mut disjuncts = Vec::new();
        let mut group = Vec::with_capacity(k);
        fn rec(
            start: usize,
            n: usize,
            k: usize,
            group: &mut Vec<usize>,
            out: &mut Vec<Formula>,
            inner: &dyn Fn(AgentId) -> Formula,
        ) {
            if group.len() == k {
                out.push(flat(Formula::And, group.iter().map(|&j| inner(AgentId::new(j))).collect()));
                return;
            }
            for j in start..=n {
                group.push(j);
                rec(j + 1, n, k, group, out, inner);
                group.pop();
            }
        }
        rec(1, n, k, &mut group, &mut disjuncts, &inner);
        flat(Formula::Or, disjuncts)
    }

    pub fn parse(s: &str) -> Result<Formula> {
        Self::parse_with(s, None)
    }

    /// Parses with the agent count known, which enables `group(k,o)`.
    pub fn parse_with(s: &str, n: Option<usize>) -> Result<Formula> {
        let mut p = Parser {
            c: Cursor::new(s, "formula"),
            n,
        };
        let f = p.implication()?;
        p.c.finish()?;
        Ok(f)
    }

    /// Direct subformulas.
    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) | Formula::Prop(_) => vec![],
            Formula::Not(f)
            | Formula::Know(_, f)
            | Formula::Believe(_, f)
            | Formula::Hope(_, f)
            | Formula::Always(f) => vec![f],
            Formula::And(fs) | Formula::Or(fs) => fs.iter().collect(),
            Formula::Implies(a, b) => vec![a, b],
        }
    }

    /// Visits every subformula, this one included.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    pub fn props(&self) -> Vec<&Name> {
        let mut out = Vec::new();
        self.visit(&mut |g| {
            if let Formula::Prop(p) = g {
                out.push(p);
            }
        });
        out
    }

    /// Largest agent id mentioned anywhere in the formula.
    pub fn max_agent(&self) -> Option<AgentId> {
        let mut m = None;
        self.visit(&mut |g| {
            let here = match g {
                Formula::Atom(a) => a.max_agent(),
                Formula::Know(i, _) | Formula::Believe(i, _) | Formula::Hope(i, _) => Some(*i),
                _ => None,
            };
            m = m.max(here);
        });
        m
    }

    pub fn has_modality(&self) -> bool {
        let mut found = false;
        self.visit(&mut |g| {
            found |= matches!(
                g,
                Formula::Know(..) | Formula::Believe(..) | Formula::Hope(..) | Formula::Always(_)
            )
        });
        found
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(v) if v.len() > 1 => 2,
            Formula::And(v) if v.len() > 1 => 3,
            _ => 4,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.precedence() < min;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Formula::True => f.write_str("true")?,
            Formula::False => f.write_str("false")?,
            Formula::Atom(a) => write!(f, "{a}")?,
            Formula::Prop(p) => write!(f, "#{p}")?,
            Formula::Not(g) => {
                f.write_str("!")?;
                g.fmt_at(f, 4)?;
            }
            Formula::And(v) | Formula::Or(v) if v.is_empty() => {
                f.write_str(if matches!(self, Formula::And(_)) { "true" } else { "false" })?
            }
            Formula::And(v) | Formula::Or(v) if v.len() == 1 => v[0].fmt_at(f, min)?,
            Formula::And(v) | Formula::Or(v) => {
                let (sep, level) = if matches!(self, Formula::And(_)) {
                    (" & ", 4)
                } else {
                    (" | ", 3)
                };
                for (k, g) in v.iter().enumerate() {
                    if k > 0 {
                        f.write_str(sep)?;
                    }
                    g.fmt_at(f, level)?;
                }
            }
            Formula::Implies(a, b) => {
                a.fmt_at(f, 2)?;
                f.write_str(" -> ")?;
                b.fmt_at(f, 1)?;
            }
            Formula::Know(i, g) => write!(f, "K[{i}]({g})")?,
            Formula::Believe(i, g) => write!(f, "B[{i}]({g})")?,
            Formula::Hope(i, g) => write!(f, "H[{i}]({g})")?,
            Formula::Always(g) => write!(f, "G({g})")?,
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Builds a conjunction or disjunction, leaving a single operand bare so
/// the result survives a text round trip.
fn flat(op: fn(Vec<Formula>) -> Formula, mut fs: Vec<Formula>) -> Formula {
    if fs.len() == 1 {
        fs.pop().unwrap()
    } else {
        op(fs)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 1)
    }
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Formula::parse(s)
    }
}

impl Serialize for Formula {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    c: Cursor<'a>,
    n: Option<usize>,
}

impl Parser<'_> {
    fn implication(&mut self) -> Result<Formula> {
        let lhs = self.disjunction()?;
        if self.c.eat("->") {
            let rhs = self.implication()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula> {
        let mut parts = vec![self.conjunction()?];
        while self.c.eat("|") {
            parts.push(self.conjunction()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::Or(parts)
        })
    }

    fn conjunction(&mut self) -> Result<Formula> {
        let mut parts = vec![self.unary()?];
        while self.c.eat("&") {
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::And(parts)
        })
    }

    fn bracketed(&mut self) -> Result<Formula> {
        self.c.expect("(")?;
        let f = self.implication()?;
        self.c.expect(")")?;
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula> {
        if self.c.eat("!") {
            return Ok(Formula::negate(self.unary()?));
        }
        if self.c.starts_with("(") {
            return self.bracketed();
        }
        if self.c.eat("#") {
            return Ok(Formula::Prop(Name::new(self.c.ident()?)));
        }
        let head = self.c.ident()?;
        match head {
            "true" => Ok(Formula::True),
            "false" => Ok(Formula::False),
            "K" | "B" | "H" => {
                self.c.expect("[")?;
                let i = self.c.agent()?;
                self.c.expect("]")?;
                let g = Box::new(self.bracketed()?);
                Ok(match head {
                    "K" => Formula::Know(i, g),
                    "B" => Formula::Believe(i, g),
                    _ => Formula::Hope(i, g),
                })
            }
            "G" => Ok(Formula::always(self.bracketed()?)),
            "group" => {
                let n = self
                    .n
                    .ok_or_else(|| self.c.error("`group` needs the agent count"))?;
                self.c.expect("(")?;
                let k = self.c.uint()? as usize;
                self.c.expect(",")?;
                let o = parse_local(&mut self.c)?;
                self.c.expect(")")?;
                if k == 0 || k > n {
                    return Err(self.c.error(format!("group size {k} outside 1..={n}")));
                }
                Ok(Formula::group_occurrence(n, k, &o))
            }
            h if ATOM_HEADS.contains(&h) => Ok(Formula::Atom(parse_atom_body(h, &mut self.c)?)),
            other => Err(self.c.error(format!("unknown formula head `{other}`"))),
        }
    }
}
