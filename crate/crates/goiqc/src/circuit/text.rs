//! The `.qc` line format.
//!
//! ```text
//! zero () -> l1
//! new l1 -> l2
//! # meas-index 0
//! meas l2 -> l3
//! if l3 {
//!   H a -> a
//! } else {
//! }
//! ```

use thiserror::Error;

use super::{Circuit, GateApp, Label};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("circuit syntax error at line {line}: {msg}")]
pub struct CircuitSyntaxError {
    pub line: usize,
    pub msg: String,
}

pub fn serialize(c: &Circuit) -> String {
    let mut out = String::new();
    write_circuit(c, 0, &mut out);
    out
}

pub(crate) fn write_circuit(c: &Circuit, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match c {
        Circuit::Gate(g) => {
            if let Some(i) = g.meas_index {
                out.push_str(&format!("{pad}# meas-index {i}\n"));
            }
            out.push_str(&format!("{pad}{} {} -> {}\n", g.gate, side(&g.inputs), side(&g.outputs)));
        }
        Circuit::Seq { items } => items.iter().for_each(|c| write_circuit(c, indent, out)),
        Circuit::Ite { guard, then_branch, else_branch } => {
            out.push_str(&format!("{pad}if {guard} {{\n"));
            write_circuit(then_branch, indent + 1, out);
            out.push_str(&format!("{pad}}} else {{\n"));
            write_circuit(else_branch, indent + 1, out);
            out.push_str(&format!("{pad}}}\n"));
        }
    }
}

fn side(ls: &[Label]) -> String {
    if ls.is_empty() {
        "()".to_string()
    } else {
        ls.iter().map(|l| l.0.as_str()).collect::<Vec<_>>().join(",")
    }
}

pub(crate) enum Stmt {
    Gate(GateApp),
    Ite(Label, Vec<Stmt>, Vec<Stmt>),
    Branch(Label, Vec<Stmt>, Vec<Stmt>),
}

pub(crate) struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(text: &'a str) -> Lines<'a> {
        let lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty()).collect();
        Lines { lines, pos: 0 }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, CircuitSyntaxError> {
        let line = self.lines.get(self.pos).map(|l| l.0).unwrap_or_else(|| self.lines.last().map_or(1, |l| l.0));
        Err(CircuitSyntaxError { line, msg: msg.into() })
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.lines.len()
    }

    /// Statements until a line starting with `}` (not consumed) or end of input.
    pub(crate) fn block(&mut self, allow_branch: bool) -> Result<Vec<Stmt>, CircuitSyntaxError> {
        let mut out = Vec::new();
        let mut pending_meas: Option<usize> = None;
        while let Some(&(_, line)) = self.lines.get(self.pos) {
            if line.starts_with('}') {
                break;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(n) = rest.strip_prefix("meas-index") {
                    match n.trim().parse::<usize>() {
                        Ok(i) => pending_meas = Some(i),
                        Err(_) => return self.err("bad meas index"),
                    }
                }
                self.pos += 1;
                continue;
            }
            if matches!(out.last(), Some(Stmt::Branch(..))) {
                return self.err("a branch must end its block");
            }
            if let Some(rest) = line.strip_prefix("if ") {
                let guard = self.open_brace(rest)?;
                self.pos += 1;
                let a = self.block(false)?;
                self.expect_line("} else {")?;
                let b = self.block(false)?;
                self.expect_line("}")?;
                out.push(Stmt::Ite(guard, a, b));
            } else if let Some(rest) = line.strip_prefix("branch ") {
                if !allow_branch {
                    return self.err("`branch` is only allowed in extended circuits");
                }
                let guard = self.open_brace(rest)?;
                self.pos += 1;
                let a = self.block(true)?;
                self.expect_line("} {")?;
                let b = self.block(true)?;
                self.expect_line("}")?;
                out.push(Stmt::Branch(guard, a, b));
            } else {
                let mut g = self.gate_line(line)?;
                if g.gate == "meas" {
                    g.meas_index = pending_meas.take();
                } else if pending_meas.is_some() {
                    return self.err("meas-index comment not followed by meas");
                }
                out.push(Stmt::Gate(g));
                self.pos += 1;
            }
        }
        if pending_meas.is_some() {
            return self.err("dangling meas-index comment");
        }
        Ok(out)
    }

    fn open_brace(&self, rest: &str) -> Result<Label, CircuitSyntaxError> {
        let Some(name) = rest.strip_suffix('{') else {
            return self.err("expected `{`");
        };
        let name = name.trim();
        if !valid_label(name) {
            return self.err(format!("bad label `{name}`"));
        }
        Ok(Label::from(name))
    }

    fn expect_line(&mut self, want: &str) -> Result<(), CircuitSyntaxError> {
        match self.lines.get(self.pos) {
            Some(&(_, l)) if l.split_whitespace().collect::<Vec<_>>() == want.split_whitespace().collect::<Vec<_>>() => {
                self.pos += 1;
                Ok(())
            }
            _ => self.err(format!("expected `{want}`")),
        }
    }

    fn gate_line(&self, line: &str) -> Result<GateApp, CircuitSyntaxError> {
        let Some((lhs, rhs)) = line.split_once("->") else {
            return self.err("expected `gate inputs -> outputs`");
        };
        let lhs = lhs.trim();
        let Some((name, ins)) = lhs.split_once(char::is_whitespace) else {
            return self.err("missing gate inputs");
        };
        if super::gates::lookup(name).is_none() {
            return self.err(format!("unknown gate `{name}`"));
        }
        Ok(GateApp { gate: name.to_string(), inputs: self.labels(ins.trim())?, outputs: self.labels(rhs.trim())?, meas_index: None })
    }

    fn labels(&self, s: &str) -> Result<Vec<Label>, CircuitSyntaxError> {
        if s == "()" {
            return Ok(vec![]);
        }
        s.split(',')
            .map(|p| {
                let p = p.trim();
                if valid_label(p) {
                    Ok(Label::from(p))
                } else {
                    self.err(format!("bad label `{p}`"))
                }
            })
            .collect()
    }
}

fn valid_label(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn stmts_to_circuit(stmts: Vec<Stmt>) -> Circuit {
    Circuit::seq(
        stmts
            .into_iter()
            .map(|s| match s {
                Stmt::Gate(g) => Circuit::Gate(g),
                Stmt::Ite(l, a, b) => Circuit::ite(l, stmts_to_circuit(a), stmts_to_circuit(b)),
                Stmt::Branch(..) => unreachable!("branches rejected by the parser"),
            })
            .collect(),
    )
}

pub fn parse_circuit(text: &str) -> Result<Circuit, CircuitSyntaxError> {
    let mut lines = Lines::new(text);
    let stmts = lines.block(false)?;
    if !lines.at_end() {
        return lines.err("unmatched `}`");
    }
    Ok(stmts_to_circuit(stmts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_line_format() {
        let c = Circuit::Gate(GateApp::new("H", &["l1"], &["l2"]));
        assert_eq!(serialize(&c), "H l1 -> l2\n");
        let c = Circuit::Gate(GateApp::new("zero", &[], &["l2"]));
        assert_eq!(serialize(&c), "zero () -> l2\n");
    }

    #[test]
    fn round_trip_with_blocks_and_meas() {
        let mut m = GateApp::new("meas", &["a"], &["b"]);
        m.meas_index = Some(7);
        let c = Circuit::seq(vec![
            Circuit::Gate(GateApp::new("H", &["a"], &["a"])),
            Circuit::Gate(m),
            Circuit::ite("b".into(), Circuit::Gate(GateApp::new("zero", &[], &["c"])), Circuit::Gate(GateApp::new("one", &[], &["c"]))),
            Circuit::ite("c".into(), Circuit::empty(), Circuit::empty()),
        ]);
        let text = serialize(&c);
        assert!(text.contains("# meas-index 7\nmeas a -> b\n"));
        assert!(text.contains("if b {\n  zero () -> c\n} else {\n  one () -> c\n}\n"));
        let back = parse_circuit(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(serialize(&back), text);
    }

    #[test]
    fn errors_carry_lines() {
        let e = parse_circuit("H a -> b\nFOO a -> b\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(parse_circuit("if a {\nH a -> a\n").is_err());
        assert!(parse_circuit("}\n").is_err());
        assert!(parse_circuit("branch l {\n} {\n}\n").is_err());
    }
}
