//! PPDDL emission and parsing for grounded models.
//!
//! The dialect is the subset the grounded operators need: one predicate per
//! vocabulary symbol plus `notfailed`, a numeric fluent `partition`, and one
//! `(:action ...)` per grounded operator with `probabilistic` effects where a
//! rule has more than one outcome. Branch probabilities come from the
//! portable rule's outcomes; each branch assigns the most frequent end label
//! observed for that outcome from this start partition (falling back to the
//! row's dominant end label when the outcome went unobserved here).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground::GroundedModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpddlDomain {
    pub name: String,
    pub predicates: Vec<String>,
    pub actions: Vec<PpddlAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpddlAction {
    pub name: String,
    /// Required value of the `partition` fluent, from `(= (partition) n)`.
    pub partition: Option<u64>,
    /// AND of OR-groups of predicate names.
    pub precondition: Vec<Vec<String>>,
    pub notfailed: bool,
    pub effect: Vec<PpddlBranch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpddlBranch {
    pub probability: f64,
    pub adds: Vec<String>,
    pub dels: Vec<String>,
    pub assign_partition: Option<u64>,
}

/// The operator structure a grounded model denotes; emission prints this and
/// parsing must reconstruct it exactly.
pub fn domain_structure(gm: &GroundedModel) -> PpddlDomain {
    let sym_name = |id: usize| -> String {
        gm.vocabulary
            .get(id)
            .name
            .clone()
            .unwrap_or_else(|| format!("symbol_{id}"))
    };
    let mut predicates: Vec<String> = gm.vocabulary.symbols.iter().map(|s| sym_name(s.id)).collect();
    predicates.push("notfailed".to_string());

    let mut actions = Vec::new();
    for op in &gm.operators {
        let rule = gm
            .rule(&op.option_id, op.ego_label)
            .expect("operator references an existing rule");
        let precondition: Vec<Vec<String>> = rule
            .precondition
            .conjunction
            .iter()
            .map(|group| group.iter().map(|&id| sym_name(id)).collect())
            .collect();

        // Per-outcome end label: most frequent observed, falling back to the
        // row's dominant end label.
        let row_dominant = op
            .branches
            .iter()
            .max_by(|a, b| a.probability.partial_cmp(&b.probability).unwrap())
            .map(|b| b.end_label);
        let end_label_for = |outcome: usize| -> Option<u64> {
            let mut best: Option<(f64, usize)> = None;
            for b in op.branches.iter().filter(|b| b.outcome_index == outcome) {
                if best.map_or(true, |(p, _)| b.probability > p) {
                    best = Some((b.probability, b.end_label));
                }
            }
            best.map(|(_, l)| l as u64)
                .or(row_dominant.map(|l| l as u64))
        };

        // Precondition symbols invalidated by an outcome: any whose mask
        // overlaps a written mask.
        let effect: Vec<PpddlBranch> = rule
            .outcomes
            .iter()
            .enumerate()
            .map(|(k, outcome)| {
                let mut written: Vec<usize> = Vec::new();
                for &sid in &outcome.symbols {
                    written.extend(gm.vocabulary.get(sid).mask.iter().copied());
                }
                let adds: Vec<String> = outcome.symbols.iter().map(|&id| sym_name(id)).collect();
                let mut dels: Vec<String> = Vec::new();
                for group in &rule.precondition.conjunction {
                    for &pid in group {
                        if outcome.symbols.contains(&pid) {
                            continue;
                        }
                        let mask = &gm.vocabulary.get(pid).mask;
                        if mask.iter().any(|d| written.contains(d)) {
                            dels.push(sym_name(pid));
                        }
                    }
                }
                dels.sort();
                dels.dedup();
                PpddlBranch {
                    probability: outcome.probability,
                    adds,
                    dels,
                    assign_partition: end_label_for(k),
                }
            })
            .collect();

        actions.push(PpddlAction {
            name: format!("{}_{}_p{}", op.option_id, op.ego_label, op.start_label),
            partition: Some(op.start_label as u64),
            precondition,
            notfailed: true,
            effect,
        });
    }
    PpddlDomain {
        name: format!("{}-portable", gm.domain_family),
        predicates,
        actions,
    }
}

pub fn emit_ppddl(gm: &GroundedModel) -> String {
    print_domain(&domain_structure(gm))
}

pub fn print_domain(d: &PpddlDomain) -> String {
    let mut out = String::new();
    writeln!(out, "(define (domain {})", d.name).unwrap();
    writeln!(out, "  (:requirements :probabilistic-effects :fluents)").unwrap();
    write!(out, "  (:predicates").unwrap();
    for p in &d.predicates {
        write!(out, " ({p})").unwrap();
    }
    writeln!(out, ")").unwrap();
    writeln!(out, "  (:functions (partition))").unwrap();
    for a in &d.actions {
        writeln!(out, "  (:action {}", a.name).unwrap();
        writeln!(out, "   :parameters ()").unwrap();
        write!(out, "   :precondition (and").unwrap();
        if let Some(p) = a.partition {
            write!(out, " (= (partition) {p})").unwrap();
        }
        for group in &a.precondition {
            if group.len() == 1 {
                write!(out, " ({})", group[0]).unwrap();
            } else {
                write!(out, " (or").unwrap();
                for s in group {
                    write!(out, " ({s})").unwrap();
                }
                write!(out, ")").unwrap();
            }
        }
        if a.notfailed {
            write!(out, " (notfailed)").unwrap();
        }
        writeln!(out, ")").unwrap();
        if a.effect.len() == 1 {
            writeln!(out, "   :effect {})", print_branch(&a.effect[0])).unwrap();
        } else {
            write!(out, "   :effect (probabilistic").unwrap();
            for b in &a.effect {
                write!(out, " {} {}", b.probability, print_branch(b)).unwrap();
            }
            writeln!(out, "))").unwrap();
        }
    }
    writeln!(out, ")").unwrap();
    out
}

fn print_branch(b: &PpddlBranch) -> String {
    let mut s = String::from("(and");
    for a in &b.adds {
        write!(s, " ({a})").unwrap();
    }
    for d in &b.dels {
        write!(s, " (not ({d}))").unwrap();
    }
    if let Some(p) = b.assign_partition {
        write!(s, " (assign (partition) {p})").unwrap();
    }
    s.push(')');
    s
}

// ---------------------------------------------------------------------------
// Parser: accepts exactly the emitted subset, with line/column errors.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Sym(String),
}

struct Lexer<'a> {
    src: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            src: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.src.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn next_tok(&mut self) -> Option<(Tok, usize, usize)> {
        loop {
            let (line, col) = (self.line, self.col);
            match self.src.peek() {
                None => return None,
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(';') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('(') => {
                    self.bump();
                    return Some((Tok::Open, line, col));
                }
                Some(')') => {
                    self.bump();
                    return Some((Tok::Close, line, col));
                }
                Some(_) => {
                    let mut s = String::new();
                    while let Some(&c) = self.src.peek() {
                        if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                            break;
                        }
                        s.push(c);
                        self.bump();
                    }
                    return Some((Tok::Sym(s), line, col));
                }
            }
        }
    }

}

struct Parser<'a> {
    lex: Lexer<'a>,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, expected: &str, found: String, line: usize, col: usize) -> Result<T> {
        Err(Error::PpddlParse {
            line,
            col,
            expected: expected.to_string(),
            found,
        })
    }

    fn next(&mut self, expected: &str) -> Result<(Tok, usize, usize)> {
        match self.lex.next_tok() {
            Some(t) => Ok(t),
            None => self.err(expected, "end of input".into(), self.lex.line, self.lex.col),
        }
    }

    fn expect_open(&mut self) -> Result<()> {
        let (t, l, c) = self.next("`(`")?;
        if t == Tok::Open {
            Ok(())
        } else {
            self.err("`(`", format!("{t:?}"), l, c)
        }
    }

    fn expect_close(&mut self) -> Result<()> {
        let (t, l, c) = self.next("`)`")?;
        if t == Tok::Close {
            Ok(())
        } else {
            self.err("`)`", format!("{t:?}"), l, c)
        }
    }

    fn expect_sym(&mut self, what: &str) -> Result<String> {
        let (t, l, c) = self.next(what)?;
        match t {
            Tok::Sym(s) => Ok(s),
            other => self.err(what, format!("{other:?}"), l, c),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        let (t, l, c) = self.next(kw)?;
        match t {
            Tok::Sym(ref s) if s == kw => Ok(()),
            other => self.err(kw, format!("{other:?}"), l, c),
        }
    }

    /// `(name)` with nothing else inside.
    fn parse_atom(&mut self) -> Result<String> {
        self.expect_open()?;
        let name = self.expect_sym("predicate name")?;
        self.expect_close()?;
        Ok(name)
    }

    fn parse_domain(&mut self) -> Result<PpddlDomain> {
        self.expect_open()?;
        self.expect_keyword("define")?;
        self.expect_open()?;
        self.expect_keyword("domain")?;
        let name = self.expect_sym("domain name")?;
        self.expect_close()?;

        let mut predicates = Vec::new();
        let mut actions = Vec::new();
        loop {
            let (t, l, c) = self.next("`(` or `)`")?;
            match t {
                Tok::Close => break,
                Tok::Open => {
                    let section = self.expect_sym("section keyword")?;
                    match section.as_str() {
                        ":requirements" => loop {
                            let (t, l2, c2) = self.next("requirement or `)`")?;
                            match t {
                                Tok::Close => break,
                                Tok::Sym(_) => continue,
                                other => return self.err("requirement", format!("{other:?}"), l2, c2),
                            }
                        },
                        ":predicates" => loop {
                            let (t, _, _) = self.next("`(` or `)`")?;
                            match t {
                                Tok::Close => break,
                                Tok::Open => {
                                    let p = self.expect_sym("predicate name")?;
                                    self.expect_close()?;
                                    predicates.push(p);
                                }
                                other => {
                                    return self.err("predicate", format!("{other:?}"), l, c)
                                }
                            }
                        },
                        ":functions" => {
                            let f = self.parse_atom()?;
                            if f != "partition" {
                                return self.err("`partition` fluent", f, l, c);
                            }
                            self.expect_close()?;
                        }
                        ":action" => actions.push(self.parse_action()?),
                        other => return self.err("domain section", other.to_string(), l, c),
                    }
                }
                other => return self.err("`(` or `)`", format!("{other:?}"), l, c),
            }
        }
        Ok(PpddlDomain {
            name,
            predicates,
            actions,
        })
    }

    fn parse_action(&mut self) -> Result<PpddlAction> {
        let name = self.expect_sym("action name")?;
        self.expect_keyword(":parameters")?;
        self.expect_open()?;
        self.expect_close()?;
        self.expect_keyword(":precondition")?;
        self.expect_open()?;
        self.expect_keyword("and")?;
        let mut partition = None;
        let mut precondition = Vec::new();
        let mut notfailed = false;
        loop {
            let (t, l, c) = self.next("precondition term or `)`")?;
            match t {
                Tok::Close => break,
                Tok::Open => {
                    let head = self.expect_sym("predicate, `or`, or `=`")?;
                    match head.as_str() {
                        "=" => {
                            let f = self.parse_atom()?;
                            if f != "partition" {
                                return self.err("`partition`", f, l, c);
                            }
                            let n = self.expect_sym("partition number")?;
                            partition = Some(n.parse::<u64>().map_err(|e| Error::PpddlParse {
                                line: l,
                                col: c,
                                expected: "integer partition".into(),
                                found: format!("{n} ({e})"),
                            })?);
                            self.expect_close()?;
                        }
                        "or" => {
                            let mut group = Vec::new();
                            loop {
                                let (t, _, _) = self.next("`(` or `)`")?;
                                match t {
                                    Tok::Close => break,
                                    Tok::Open => {
                                        let p = self.expect_sym("predicate name")?;
                                        self.expect_close()?;
                                        group.push(p);
                                    }
                                    other => {
                                        return self.err("predicate", format!("{other:?}"), l, c)
                                    }
                                }
                            }
                            precondition.push(group);
                        }
                        "notfailed" => {
                            notfailed = true;
                            self.expect_close()?;
                        }
                        pred => {
                            self.expect_close()?;
                            precondition.push(vec![pred.to_string()]);
                        }
                    }
                }
                other => return self.err("precondition term", format!("{other:?}"), l, c),
            }
        }
        self.expect_keyword(":effect")?;
        self.expect_open()?;
        let (t, l, c) = self.next("`and` or `probabilistic`")?;
        let effect = match t {
            Tok::Sym(ref s) if s == "and" => vec![self.parse_branch_body(1.0)?],
            Tok::Sym(ref s) if s == "probabilistic" => {
                let mut branches = Vec::new();
                loop {
                    let (t, l2, c2) = self.next("probability or `)`")?;
                    match t {
                        Tok::Close => break,
                        Tok::Sym(p) => {
                            let prob = p.parse::<f64>().map_err(|e| Error::PpddlParse {
                                line: l2,
                                col: c2,
                                expected: "probability".into(),
                                found: format!("{p} ({e})"),
                            })?;
                            self.expect_open()?;
                            self.expect_keyword("and")?;
                            branches.push(self.parse_branch_body(prob)?);
                        }
                        other => {
                            return self.err("probability", format!("{other:?}"), l2, c2)
                        }
                    }
                }
                branches
            }
            other => return self.err("`and` or `probabilistic`", format!("{other:?}"), l, c),
        };
        self.expect_close()?; // close :action
        Ok(PpddlAction {
            name,
            partition,
            precondition,
            notfailed,
            effect,
        })
    }

    /// Parses the items of an `(and ...)` effect branch; the opening paren
    /// and the `and` keyword have already been consumed.
    fn parse_branch_body(&mut self, probability: f64) -> Result<PpddlBranch> {
        let mut adds = Vec::new();
        let mut dels = Vec::new();
        let mut assign_partition = None;
        loop {
            let (t, l, c) = self.next("effect item or `)`")?;
            match t {
                Tok::Close => break,
                Tok::Open => {
                    let head = self.expect_sym("predicate, `not`, or `assign`")?;
                    match head.as_str() {
                        "not" => {
                            dels.push(self.parse_atom()?);
                            self.expect_close()?;
                        }
                        "assign" => {
                            let f = self.parse_atom()?;
                            if f != "partition" {
                                return self.err("`partition`", f, l, c);
                            }
                            let n = self.expect_sym("partition number")?;
                            assign_partition =
                                Some(n.parse::<u64>().map_err(|e| Error::PpddlParse {
                                    line: l,
                                    col: c,
                                    expected: "integer partition".into(),
                                    found: format!("{n} ({e})"),
                                })?);
                            self.expect_close()?;
                        }
                        pred => {
                            self.expect_close()?;
                            adds.push(pred.to_string());
                        }
                    }
                }
                other => return self.err("effect item", format!("{other:?}"), l, c),
            }
        }
        Ok(PpddlBranch {
            probability,
            adds,
            dels,
            assign_partition,
        })
    }
}

/// Parse a PPDDL domain in the emitted subset.
pub fn parse_ppddl(text: &str) -> Result<PpddlDomain> {
    let mut p = Parser {
        lex: Lexer::new(text),
    };
    let domain = p.parse_domain()?;
    Ok(domain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_domain() -> PpddlDomain {
        PpddlDomain {
            name: "corridor-portable".into(),
            predicates: vec![
                "symbol_0".into(),
                "symbol_1".into(),
                "symbol_2".into(),
                "notfailed".into(),
            ],
            actions: vec![
                PpddlAction {
                    name: "Clockwise_0_p2".into(),
                    partition: Some(2),
                    precondition: vec![vec!["symbol_2".into()]],
                    notfailed: true,
                    effect: vec![PpddlBranch {
                        probability: 1.0,
                        adds: vec!["symbol_1".into()],
                        dels: vec!["symbol_2".into()],
                        assign_partition: Some(3),
                    }],
                },
                PpddlAction {
                    name: "Inward_0_p0".into(),
                    partition: Some(0),
                    precondition: vec![vec!["symbol_0".into()]],
                    notfailed: true,
                    effect: vec![
                        PpddlBranch {
                            probability: 0.5201612903225806,
                            adds: vec!["symbol_1".into()],
                            dels: vec!["symbol_0".into()],
                            assign_partition: Some(2),
                        },
                        PpddlBranch {
                            probability: 0.4798387096774194,
                            adds: vec!["symbol_2".into()],
                            dels: vec!["symbol_0".into()],
                            assign_partition: Some(3),
                        },
                    ],
                },
                PpddlAction {
                    name: "Outward_0_p2".into(),
                    partition: Some(2),
                    precondition: vec![vec!["symbol_1".into(), "symbol_2".into()]],
                    notfailed: true,
                    effect: vec![PpddlBranch {
                        probability: 1.0,
                        adds: vec!["symbol_0".into()],
                        dels: vec!["symbol_1".into(), "symbol_2".into()],
                        assign_partition: Some(0),
                    }],
                },
            ],
        }
    }

    #[test]
    fn print_parse_round_trip_is_identity() {
        let d = sample_domain();
        let text = print_domain(&d);
        let parsed = parse_ppddl(&text).unwrap();
        assert_eq!(d, parsed);
    }

    #[test]
    fn parse_reports_line_and_column() {
        let text = "(define (domain x)\n  (:predicates (a))\n  (:action foo\n   :parameters ()\n   :precondition (banana\n";
        let err = parse_ppddl(text).unwrap_err();
        match err {
            Error::PpddlParse { line, col, expected, .. } => {
                assert_eq!(line, 5);
                assert!(col > 0);
                assert!(!expected.is_empty());
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn disjunctive_preconditions_round_trip() {
        let d = sample_domain();
        let text = print_domain(&d);
        assert!(text.contains("(or (symbol_1) (symbol_2))"));
        let parsed = parse_ppddl(&text).unwrap();
        assert_eq!(parsed.actions[2].precondition, vec![vec![
            "symbol_1".to_string(),
            "symbol_2".to_string()
        ]]);
    }

    #[test]
    fn probabilities_round_trip_bit_exact() {
        let d = sample_domain();
        let parsed = parse_ppddl(&print_domain(&d)).unwrap();
        let p0 = parsed.actions[1].effect[0].probability;
        assert_eq!(p0, 0.5201612903225806);
    }
}
