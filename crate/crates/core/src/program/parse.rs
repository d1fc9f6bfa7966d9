use std::collections::HashMap;

use thiserror::Error;

use super::{CmpOp, Cond, Expr, Instruction, Loc, Operand, Program, Reg, Thread, Tid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("backward branch to label `{0}`")]
    BackwardBranch(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("register `{0}` may be used before it is set")]
    UnsetRegister(String),
    #[error("duplicate thread id {0}")]
    DuplicateThread(Tid),
    #[error("thread ids must be contiguous from 1 (missing {0})")]
    NonContiguousThreads(Tid),
    #[error("instruction outside of a thread block")]
    OutsideThread,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    col: usize,
}

const SYMBOLS: [&str; 8] = ["==", "!=", "<=", "<", "=", "+", "-", ":"];

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Spanned>, ParseError> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let col = i + 1;
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Spanned { tok: Tok::Ident(line[start..i].to_string()), col });
        } else if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let text = &line[start..i];
            let v = text.parse::<i64>().or_else(|_| {
                // allow the magnitude of i64::MIN after a minus sign
                if text == "9223372036854775808" {
                    Ok(i64::MIN)
                } else {
                    Err(())
                }
            });
            let v = v.map_err(|_| ParseError {
                line: lineno,
                col,
                kind: ParseErrorKind::Syntax(format!("integer `{text}` out of range")),
            })?;
            out.push(Spanned { tok: Tok::Int(v), col });
        } else {
            let rest = &line[i..];
            let sym = SYMBOLS.iter().find(|s| rest.starts_with(**s)).ok_or_else(|| ParseError {
                line: lineno,
                col,
                kind: ParseErrorKind::Syntax(format!("unexpected character `{}`", c as char)),
            })?;
            i += sym.len();
            out.push(Spanned { tok: Tok::Sym(sym), col });
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Spanned],
    pos: usize,
    line: usize,
    eol_col: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|s| s.col).unwrap_or(self.eol_col)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { line: self.line, col: self.col(), kind: ParseErrorKind::Syntax(msg.into()) }
    }

    fn next(&mut self) -> Option<&'a Tok> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !is_keyword(s) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{kw}`"))),
        }
    }

    fn sym(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let neg = self.sym("-");
        match self.next() {
            Some(Tok::Int(v)) => Ok(if neg { v.wrapping_neg() } else { *v }),
            _ => {
                self.pos -= usize::from(self.pos > 0 && !neg && self.pos <= self.toks.len());
                Err(self.err("expected integer"))
            }
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing tokens"))
        }
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "thread" | "read" | "write" | "if" | "goto" | "assume")
}

/// A branch or assume before label resolution.
enum RawInstr {
    Read { reg: Reg, loc: Loc },
    Write { loc: Loc, expr: Expr },
    Branch { cond: Cond, label: String, line: usize, col: usize },
    Assume(Cond),
}

struct ThreadBuilder {
    tid: Tid,
    header_line: usize,
    instrs: Vec<(RawInstr, usize)>,
    registers: Vec<String>,
    /// register uses per instruction: (reg, line, col)
    uses: Vec<Vec<(Reg, usize, usize)>>,
    labels: HashMap<String, usize>,
}

impl ThreadBuilder {
    fn reg(&mut self, name: &str) -> Reg {
        if let Some(i) = self.registers.iter().position(|r| r == name) {
            Reg(i as u16)
        } else {
            self.registers.push(name.to_string());
            Reg((self.registers.len() - 1) as u16)
        }
    }
}

struct Parser {
    locations: Vec<String>,
    threads: Vec<ThreadBuilder>,
}

impl Parser {
    fn loc(&mut self, name: &str) -> Loc {
        if let Some(i) = self.locations.iter().position(|l| l == name) {
            Loc(i as u32)
        } else {
            self.locations.push(name.to_string());
            Loc((self.locations.len() - 1) as u32)
        }
    }

    fn operand(
        cur: &mut Cursor<'_>,
        th: &mut ThreadBuilder,
        uses: &mut Vec<(Reg, usize, usize)>,
    ) -> Result<Operand, ParseError> {
        let col = cur.col();
        match cur.peek() {
            Some(Tok::Ident(_)) => {
                let name = cur.ident("register")?;
                let r = th.reg(&name);
                uses.push((r, cur.line, col));
                Ok(Operand::Reg(r))
            }
            _ => Ok(Operand::Const(cur.int()?)),
        }
    }

    fn cond(
        cur: &mut Cursor<'_>,
        th: &mut ThreadBuilder,
        uses: &mut Vec<(Reg, usize, usize)>,
    ) -> Result<Cond, ParseError> {
        let lhs = Self::operand(cur, th, uses)?;
        let op = match cur.next() {
            Some(Tok::Sym("==")) => CmpOp::Eq,
            Some(Tok::Sym("!=")) => CmpOp::Ne,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            _ => {
                cur.pos = cur.pos.saturating_sub(1);
                return Err(cur.err("expected comparison operator (==, !=, <, <=)"));
            }
        };
        let rhs = Self::operand(cur, th, uses)?;
        Ok(Cond { lhs, op, rhs })
    }

    fn expr(
        cur: &mut Cursor<'_>,
        th: &mut ThreadBuilder,
        uses: &mut Vec<(Reg, usize, usize)>,
    ) -> Result<Expr, ParseError> {
        let col = cur.col();
        match cur.peek() {
            Some(Tok::Ident(_)) => {
                let name = cur.ident("register")?;
                let r = th.reg(&name);
                uses.push((r, cur.line, col));
                if cur.sym("+") {
                    Ok(Expr::Add(r, cur.int()?))
                } else if cur.sym("-") {
                    Ok(Expr::Add(r, cur.int()?.wrapping_neg()))
                } else {
                    Ok(Expr::Reg(r))
                }
            }
            _ => Ok(Expr::Const(cur.int()?)),
        }
    }

    fn line(&mut self, toks: &[Spanned], lineno: usize, eol_col: usize) -> Result<(), ParseError> {
        let mut cur = Cursor { toks, pos: 0, line: lineno, eol_col };
        if matches!(cur.peek(), Some(Tok::Ident(s)) if s == "thread") {
            cur.pos += 1;
            let col = cur.col();
            let tid = match cur.next() {
                Some(Tok::Int(v)) if *v >= 1 && *v <= u32::MAX as i64 => *v as Tid,
                _ => return Err(ParseError { line: lineno, col, kind: ParseErrorKind::Syntax("expected positive thread id".into()) }),
            };
            cur.expect_end()?;
            if self.threads.iter().any(|t| t.tid == tid) {
                return Err(ParseError { line: lineno, col, kind: ParseErrorKind::DuplicateThread(tid) });
            }
            self.threads.push(ThreadBuilder {
                tid,
                header_line: lineno,
                instrs: Vec::new(),
                registers: Vec::new(),
                uses: Vec::new(),
                labels: HashMap::new(),
            });
            return Ok(());
        }

        let Some(mut th) = self.threads.pop() else {
            return Err(ParseError { line: lineno, col: cur.col(), kind: ParseErrorKind::OutsideThread });
        };
        let result = self.instruction(&mut cur, &mut th);
        self.threads.push(th);
        result
    }

    fn instruction(&mut self, cur: &mut Cursor<'_>, th: &mut ThreadBuilder) -> Result<(), ParseError> {
        // leading labels
        while matches!(cur.toks.get(cur.pos + 1).map(|s| &s.tok), Some(Tok::Sym(":"))) {
            let col = cur.col();
            let name = cur.ident("label")?;
            cur.pos += 1;
            if th.labels.insert(name.clone(), th.instrs.len()).is_some() {
                return Err(ParseError { line: cur.line, col, kind: ParseErrorKind::DuplicateLabel(name) });
            }
        }
        if cur.at_end() {
            return Ok(());
        }
        let mut uses = Vec::new();
        let instr = match cur.peek() {
            Some(Tok::Ident(s)) if s == "write" => {
                cur.pos += 1;
                let loc_name = cur.ident("location")?;
                let loc = self.loc(&loc_name);
                let expr = Self::expr(cur, th, &mut uses)?;
                RawInstr::Write { loc, expr }
            }
            Some(Tok::Ident(s)) if s == "if" => {
                cur.pos += 1;
                let cond = Self::cond(cur, th, &mut uses)?;
                cur.keyword("goto")?;
                let col = cur.col();
                let label = cur.ident("label")?;
                RawInstr::Branch { cond, label, line: cur.line, col }
            }
            Some(Tok::Ident(s)) if s == "assume" => {
                cur.pos += 1;
                RawInstr::Assume(Self::cond(cur, th, &mut uses)?)
            }
            Some(Tok::Ident(_)) => {
                let reg_name = cur.ident("register")?;
                if !cur.sym("=") {
                    return Err(cur.err("expected `=`"));
                }
                cur.keyword("read")?;
                let loc_name = cur.ident("location")?;
                let loc = self.loc(&loc_name);
                let reg = th.reg(&reg_name);
                RawInstr::Read { reg, loc }
            }
            _ => return Err(cur.err("expected instruction")),
        };
        cur.expect_end()?;
        th.instrs.push((instr, cur.line));
        th.uses.push(uses);
        Ok(())
    }
}

fn finish_thread(th: ThreadBuilder) -> Result<Thread, ParseError> {
    let mut instructions = Vec::with_capacity(th.instrs.len());
    for (idx, (raw, _)) in th.instrs.iter().enumerate() {
        let ins = match raw {
            RawInstr::Read { reg, loc } => Instruction::Read { reg: *reg, loc: *loc },
            RawInstr::Write { loc, expr } => Instruction::Write { loc: *loc, expr: *expr },
            RawInstr::Assume(c) => Instruction::Assume(*c),
            RawInstr::Branch { cond, label, line, col } => {
                let target = *th.labels.get(label).ok_or_else(|| ParseError {
                    line: *line,
                    col: *col,
                    kind: ParseErrorKind::UndefinedLabel(label.clone()),
                })?;
                if target <= idx {
                    return Err(ParseError { line: *line, col: *col, kind: ParseErrorKind::BackwardBranch(label.clone()) });
                }
                Instruction::Branch { cond: *cond, target }
            }
        };
        instructions.push(ins);
    }

    // Definite assignment over the forward-only control-flow graph.
    let n = instructions.len();
    let nregs = th.registers.len();
    let mut defined: Vec<Option<Vec<bool>>> = vec![None; n + 1];
    defined[0] = Some(vec![false; nregs]);
    for idx in 0..n {
        let Some(state) = defined[idx].clone() else { continue };
        for &(r, line, col) in &th.uses[idx] {
            if !state[r.0 as usize] {
                return Err(ParseError {
                    line,
                    col,
                    kind: ParseErrorKind::UnsetRegister(th.registers[r.0 as usize].clone()),
                });
            }
        }
        let mut out = state;
        let mut succs = vec![idx + 1];
        match &instructions[idx] {
            Instruction::Read { reg, .. } => out[reg.0 as usize] = true,
            Instruction::Branch { target, .. } => succs.push(*target),
            _ => {}
        }
        for s in succs {
            defined[s] = Some(match defined[s].take() {
                None => out.clone(),
                Some(prev) => prev.iter().zip(&out).map(|(a, b)| *a && *b).collect(),
            });
        }
    }

    Ok(Thread { tid: th.tid, instructions, registers: th.registers })
}

/// Parses DSL source into a validated [`Program`].
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut parser = Parser { locations: Vec::new(), threads: Vec::new() };
    for (n, raw_line) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = raw_line.split('#').next().unwrap_or("");
        let toks = tokenize(line, lineno)?;
        if toks.is_empty() {
            continue;
        }
        parser.line(&toks, lineno, line.trim_end().len() + 1)?;
    }

    let mut builders = parser.threads;
    builders.sort_by_key(|t| t.tid);
    for (i, b) in builders.iter().enumerate() {
        let expected = i as Tid + 1;
        if b.tid != expected {
            return Err(ParseError { line: b.header_line, col: 1, kind: ParseErrorKind::NonContiguousThreads(expected) });
        }
    }
    let threads = builders.into_iter().map(finish_thread).collect::<Result<Vec<_>, _>>()?;
    Ok(Program { threads, locations: parser.locations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_r_w_w() {
        let p = parse_program("thread 1\n  a = read x\nthread 2\n  write x 1\nthread 3\n  write x 2\n").unwrap();
        assert_eq!(p.threads.len(), 3);
        assert!(p.threads.iter().all(|t| t.instructions.len() == 1));
        assert_eq!(p.locations, vec!["x".to_string()]);
    }

    #[test]
    fn empty_source_is_empty_program() {
        let p = parse_program("").unwrap();
        assert_eq!(p.threads.len(), 0);
        let p = parse_program("# only a comment\n\n").unwrap();
        assert_eq!(p.threads.len(), 0);
    }

    #[test]
    fn rejects_backward_branch() {
        let src = "thread 1\n  L: r = read x\n  if r == 1 goto L\n";
        let err = parse_program(src).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::BackwardBranch(ref l) if l == "L"), "{err}");
        assert_eq!(err.line, 3);
    }

    #[test]
    fn rejects_self_branch() {
        let src = "thread 1\n  r = read x\n  L: if r == 1 goto L\n";
        let err = parse_program(src).unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::BackwardBranch(_)));
    }

    #[test]
    fn rejects_unset_register() {
        let err = parse_program("thread 1\n  write x a\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnsetRegister("a".into()));
        assert_eq!((err.line, err.col), (2, 11));
    }

    #[test]
    fn rejects_register_unset_on_one_path() {
        let src = "thread 1\n  a = read x\n  if a == 0 goto L\n  b = read y\n  L: write z b\n";
        let err = parse_program(src).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnsetRegister("b".into()));
    }

    #[test]
    fn rejects_duplicate_and_gapped_threads() {
        let err = parse_program("thread 1\n  write x 1\nthread 1\n  write x 2\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateThread(1));
        let err = parse_program("thread 2\n  write x 1\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonContiguousThreads(1));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_program("thread 1\n  a = reed x\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.col, 7);
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
        let err = parse_program("  write x 1\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::OutsideThread);
    }

    #[test]
    fn labels_may_point_past_the_end() {
        let src = "thread 1\n  a = read x\n  if a != 2 goto done\n  b = read y\n  done:\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.threads[0].instructions[1], Instruction::Branch {
            cond: Cond { lhs: Operand::Reg(Reg(0)), op: CmpOp::Ne, rhs: Operand::Const(2) },
            target: 3,
        });
    }

    #[test]
    fn expressions_and_negative_constants() {
        let src = "thread 1\n  a = read x\n  write x a+1\n  write y a - 3\n  write z -7\n  assume -1 <= a\n";
        let p = parse_program(src).unwrap();
        let ins = &p.threads[0].instructions;
        assert_eq!(ins[1], Instruction::Write { loc: Loc(0), expr: Expr::Add(Reg(0), 1) });
        assert_eq!(ins[2], Instruction::Write { loc: Loc(1), expr: Expr::Add(Reg(0), -3) });
        assert_eq!(ins[3], Instruction::Write { loc: Loc(2), expr: Expr::Const(-7) });
        let again = parse_program(&p.to_string()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn spec_example_file_parses() {
        let src = "# comment\nthread 1\n  a = read x\n  if a == 2 goto L\n  write y 1\n  L: assume a < 3\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.threads[0].instructions.len(), 4);
        assert_eq!(parse_program(&p.to_string()).unwrap(), p);
    }
}
