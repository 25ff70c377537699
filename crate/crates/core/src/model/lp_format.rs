//! Text export in the common "LP file" dialect and a small parser for it.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{MiqpModel, Sense, VarKind};
use crate::error::{Error, Result};

const WRAP: usize = 200;

struct Writer {
    out: String,
    line: usize,
}

impl Writer {
    fn token(&mut self, t: &str) {
        if self.line + t.len() + 1 > WRAP {
            self.out.push_str("\n   ");
            self.line = 3;
        }
        self.out.push(' ');
        self.out.push_str(t);
        self.line += t.len() + 1;
    }

    fn term(&mut self, coef: f64, var: &str) {
        self.token(if coef < 0.0 { "-" } else { "+" });
        self.token(&format!("{:?}", coef.abs()));
        self.token(var);
    }

    fn newline(&mut self) {
        self.out.push('\n');
        self.line = 0;
    }
}

fn sense_token(s: Sense) -> &'static str {
    match s {
        Sense::Le => "<=",
        Sense::Ge => ">=",
        Sense::Eq => "=",
    }
}

/// Renders the model; variable and constraint order follow the model.
pub fn export_lp_text(model: &MiqpModel) -> String {
    let names: Vec<&str> = model.variables.iter().map(|v| v.name.as_str()).collect();
    let mut w = Writer { out: String::new(), line: 0 };
    w.out.push_str("Minimize\n");
    w.token("obj:");
    for &(v, c) in &model.objective {
        w.term(c, names[v]);
    }
    w.newline();
    w.out.push_str("Subject To\n");
    for c in &model.linear {
        w.token(&format!("{}:", c.name));
        for &(v, a) in &c.coefs {
            w.term(a, names[v]);
        }
        w.token(sense_token(c.sense));
        w.token(&format!("{:?}", c.rhs));
        w.newline();
    }
    for c in &model.quadratic {
        w.token(&format!("{}:", c.name));
        for &(v, a) in &c.linear {
            w.term(a, names[v]);
        }
        w.token("+");
        w.token("[");
        for (&(a, b), &q) in &c.quad {
            w.token(if q < 0.0 { "-" } else { "+" });
            w.token(&format!("{:?}", q.abs()));
            if a == b {
                w.token(names[a]);
                w.token("^");
                w.token("2");
            } else {
                w.token(names[a]);
                w.token("*");
                w.token(names[b]);
            }
        }
        w.token("]");
        w.token(sense_token(c.sense));
        w.token(&format!("{:?}", c.rhs));
        w.newline();
    }
    w.out.push_str("Bounds\n");
    for v in &model.variables {
        if v.kind == VarKind::Continuous {
            let _ = writeln!(w.out, " {:?} <= {} <= {:?}", v.lower, v.name, v.upper);
        }
    }
    w.out.push_str("Binaries\n");
    w.line = 0;
    for v in model.variables.iter().filter(|v| v.kind == VarKind::Binary) {
        w.token(&v.name);
    }
    w.newline();
    w.out.push_str("End\n");
    w.out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConstraint {
    pub name: String,
    pub linear: Vec<(String, f64)>,
    pub quad: Vec<(String, String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Contents of an LP-dialect file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLp {
    pub objective: Vec<(String, f64)>,
    pub constraints: Vec<ParsedConstraint>,
    pub bounds: BTreeMap<String, (f64, f64)>,
    pub binaries: Vec<String>,
}

impl ParsedLp {
    pub fn num_linear(&self) -> usize {
        self.constraints.iter().filter(|c| c.quad.is_empty()).count()
    }

    pub fn num_quadratic(&self) -> usize {
        self.constraints.iter().filter(|c| !c.quad.is_empty()).count()
    }
}

fn number(tok: Option<&str>) -> Result<f64> {
    let t = tok.ok_or_else(|| Error::Parse("unexpected end of input".into()))?;
    t.parse().map_err(|_| Error::Parse(format!("expected a number, got '{t}'")))
}

fn is_section(t: &str) -> bool {
    matches!(t, "Subject" | "Bounds" | "Binaries" | "End")
}

/// Parses text produced by [`export_lp_text`].
pub fn parse_lp_text(text: &str) -> Result<ParsedLp> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let mut p = ParsedLp::default();
    let mut i = 0;
    let expect = |i: usize, want: &str| -> Result<()> {
        match toks.get(i) {
            Some(t) if *t == want => Ok(()),
            other => Err(Error::Parse(format!("expected '{want}', got {other:?}"))),
        }
    };
    expect(i, "Minimize")?;
    i += 1;
    if toks.get(i).is_some_and(|t| t.ends_with(':')) {
        i += 1;
    }
    while i < toks.len() && !is_section(toks[i]) {
        let sign = if toks[i] == "-" { -1.0 } else { 1.0 };
        let c = number(toks.get(i + 1).copied())?;
        let v = toks.get(i + 2).ok_or_else(|| Error::Parse("dangling objective term".into()))?;
        p.objective.push((v.to_string(), sign * c));
        i += 3;
    }
    expect(i, "Subject")?;
    expect(i + 1, "To")?;
    i += 2;
    while i < toks.len() && !is_section(toks[i]) {
        let name = toks[i]
            .strip_suffix(':')
            .ok_or_else(|| Error::Parse(format!("expected constraint name, got '{}'", toks[i])))?
            .to_string();
        i += 1;
        let mut linear = Vec::new();
        let mut quad = Vec::new();
        let sense = loop {
            match toks.get(i).copied() {
                Some("<=") => break Sense::Le,
                Some(">=") => break Sense::Ge,
                Some("=") => break Sense::Eq,
                Some("+") if toks.get(i + 1) == Some(&"[") => {
                    i += 2;
                    while toks.get(i) != Some(&"]") {
                        let sign = if toks.get(i) == Some(&"-") { -1.0 } else { 1.0 };
                        let c = number(toks.get(i + 1).copied())?;
                        let a = toks.get(i + 2).ok_or_else(|| Error::Parse("dangling term".into()))?;
                        match toks.get(i + 3).copied() {
                            Some("^") => {
                                quad.push((a.to_string(), a.to_string(), sign * c));
                                i += 5;
                            }
                            Some("*") => {
                                let b = toks.get(i + 4).ok_or_else(|| Error::Parse("dangling product".into()))?;
                                quad.push((a.to_string(), b.to_string(), sign * c));
                                i += 5;
                            }
                            other => return Err(Error::Parse(format!("bad quadratic term near {other:?}"))),
                        }
                    }
                    i += 1;
                }
                Some(s @ ("+" | "-")) => {
                    let sign = if s == "-" { -1.0 } else { 1.0 };
                    let c = number(toks.get(i + 1).copied())?;
                    let v = toks.get(i + 2).ok_or_else(|| Error::Parse("dangling term".into()))?;
                    linear.push((v.to_string(), sign * c));
                    i += 3;
                }
                other => return Err(Error::Parse(format!("unexpected token {other:?} in '{name}'"))),
            }
        };
        let rhs = number(toks.get(i + 1).copied())?;
        i += 2;
        p.constraints.push(ParsedConstraint { name, linear, quad, sense, rhs });
    }
    expect(i, "Bounds")?;
    i += 1;
    while i < toks.len() && !is_section(toks[i]) {
        let lo = number(toks.get(i).copied())?;
        let name = toks.get(i + 2).ok_or_else(|| Error::Parse("dangling bound".into()))?;
        let hi = number(toks.get(i + 4).copied())?;
        if toks.get(i + 1) != Some(&"<=") || toks.get(i + 3) != Some(&"<=") {
            return Err(Error::Parse(format!("malformed bound for '{name}'")));
        }
        p.bounds.insert(name.to_string(), (lo, hi));
        i += 5;
    }
    expect(i, "Binaries")?;
    i += 1;
    while i < toks.len() && toks[i] != "End" {
        p.binaries.push(toks[i].to_string());
        i += 1;
    }
    expect(i, "End")?;
    Ok(p)
}
