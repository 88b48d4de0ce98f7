//! Boolean predicates over state propositions.
//!
//! The same predicate language is used for goal predicates (evaluated on
//! arena states) and for entry predicates (evaluated on world snapshots).

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    True,
    False,
    /// Holds when the proposition is present.
    Prop(String),
    /// Holds on the state with this name; never holds on a snapshot.
    State(String),
    Not(Box<Predicate>),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("predicate syntax error at byte {pos}: {msg}")]
pub struct PredicateParseError {
    pub pos: usize,
    pub msg: String,
}

impl Predicate {
    pub fn prop(p: impl Into<String>) -> Self {
        Predicate::Prop(p.into())
    }

    pub fn negate(self) -> Self {
        match self {
            Predicate::True => Predicate::False,
            Predicate::False => Predicate::True,
            Predicate::Not(inner) => *inner,
            p => Predicate::Not(Box::new(p)),
        }
    }

    pub fn and(parts: impl IntoIterator<Item = Predicate>) -> Self {
        let mut v: Vec<Predicate> = Vec::new();
        for p in parts {
            match p {
                Predicate::True => {}
                Predicate::False => return Predicate::False,
                Predicate::And(inner) => v.extend(inner),
                p => v.push(p),
            }
        }
        match v.len() {
            0 => Predicate::True,
            1 => v.pop().unwrap(),
            _ => Predicate::And(v),
        }
    }

    pub fn or(parts: impl IntoIterator<Item = Predicate>) -> Self {
        let mut v: Vec<Predicate> = Vec::new();
        for p in parts {
            match p {
                Predicate::False => {}
                Predicate::True => return Predicate::True,
                Predicate::Or(inner) => v.extend(inner),
                p => v.push(p),
            }
        }
        match v.len() {
            0 => Predicate::False,
            1 => v.pop().unwrap(),
            _ => Predicate::Or(v),
        }
    }

    fn eval_with(&self, atom: &dyn Fn(&Predicate) -> bool) -> bool {
        match self {
            Predicate::True => true,
            Predicate::False => false,
            Predicate::Prop(_) | Predicate::State(_) => atom(self),
            Predicate::Not(p) => !p.eval_with(atom),
            Predicate::And(ps) => ps.iter().all(|p| p.eval_with(atom)),
            Predicate::Or(ps) => ps.iter().any(|p| p.eval_with(atom)),
        }
    }

    pub fn eval_state(&self, name: &str, props: &BTreeSet<String>) -> bool {
        self.eval_with(&|a| match a {
            Predicate::Prop(p) => props.contains(p),
            Predicate::State(s) => s == name,
            _ => unreachable!(),
        })
    }

    pub fn eval_facts(&self, facts: &BTreeSet<String>) -> bool {
        self.eval_with(&|a| match a {
            Predicate::Prop(p) => facts.contains(p),
            _ => false,
        })
    }

    /// Parses `a & !(b | state:s1)`. `&` binds tighter than `|`.
    pub fn parse(text: &str) -> Result<Predicate, PredicateParseError> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
        };
        let out = p.or_expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("trailing input"));
        }
        Ok(out)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> PredicateParseError {
        PredicateParseError {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn or_expr(&mut self) -> Result<Predicate, PredicateParseError> {
        let mut parts = vec![self.and_expr()?];
        while self.eat(b'|') {
            parts.push(self.and_expr()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Predicate::Or(parts)
        })
    }

    fn and_expr(&mut self) -> Result<Predicate, PredicateParseError> {
        let mut parts = vec![self.unary()?];
        while self.eat(b'&') {
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Predicate::And(parts)
        })
    }

    fn unary(&mut self) -> Result<Predicate, PredicateParseError> {
        if self.eat(b'!') {
            return Ok(Predicate::Not(Box::new(self.unary()?)));
        }
        if self.eat(b'(') {
            let inner = self.or_expr()?;
            if !self.eat(b')') {
                return Err(self.err("expected `)`"));
            }
            return Ok(inner);
        }
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && !b" \t\r\n()!&|".contains(&self.src[self.pos]) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected atom"));
        }
        let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii delimiters");
        Ok(match word {
            "true" => Predicate::True,
            "false" => Predicate::False,
            w => match w.strip_prefix("state:") {
                Some(s) => Predicate::State(s.to_string()),
                None => Predicate::Prop(w.to_string()),
            },
        })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, ps: &[Predicate], sep: &str) -> fmt::Result {
            f.write_str("(")?;
            for (i, p) in ps.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                write!(f, "{p}")?;
            }
            f.write_str(")")
        }
        match self {
            Predicate::True => f.write_str("true"),
            Predicate::False => f.write_str("false"),
            Predicate::Prop(p) => f.write_str(p),
            Predicate::State(s) => write!(f, "state:{s}"),
            Predicate::Not(p) => write!(f, "!{p}"),
            Predicate::And(ps) => join(f, ps, " & "),
            Predicate::Or(ps) => join(f, ps, " | "),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_display() {
        let p = Predicate::parse("a & !b | state:s1").unwrap();
        let props: BTreeSet<String> = ["a".to_string()].into();
        assert!(p.eval_state("x", &props));
        assert!(p.eval_state("s1", &BTreeSet::new()));
        assert!(!p.eval_state("x", &BTreeSet::new()));
        assert_eq!(Predicate::parse(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn state_atoms_never_hold_on_facts() {
        let p = Predicate::parse("state:s1").unwrap();
        assert!(!p.eval_facts(&BTreeSet::new()));
    }

    #[test]
    fn parse_errors() {
        assert!(Predicate::parse("a &").is_err());
        assert!(Predicate::parse("(a").is_err());
    }
}
