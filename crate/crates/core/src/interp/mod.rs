//! Straight-line arithmetic programs.
//!
//! A program is a list of statements, one per line, each either an
//! assignment `ident = expr`, a `print(ident)` or a `#` comment. A `;` also
//! ends a statement, which lets a program travel as a single token
//! sequence; a comment runs to the end of its statement. Arithmetic is
//! double precision with true division, and the first printed value is the
//! program's answer.

mod exec;
mod parse;

pub use exec::{check_answer, execute, ExecError, ExecResult, DEFAULT_STEP_LIMIT};
pub use parse::{parse, ParseError, MAX_DEPTH, MAX_LINES};

use std::fmt;

use crate::seq::{tokenize, TokenSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Statement {
    Assign(String, Expr),
    Print(String),
    Comment(String),
}

/// A statement plus an optional trailing `#` comment.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub stmt: Statement,
    pub comment: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    pub lines: Vec<Line>,
}

impl Program {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parent: u8, right: bool) -> fmt::Result {
    let needs_parens = match e {
        Expr::Bin(op, ..) => op.precedence() < parent || (right && op.precedence() == parent),
        _ => false,
    };
    if needs_parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(n) => write!(f, "{n}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Neg(inner) => match **inner {
                Expr::Bin(..) | Expr::Neg(_) => write!(f, "-({inner})"),
                _ => write!(f, "-{inner}"),
            },
            Expr::Bin(op, l, r) => {
                write_operand(f, l, op.precedence(), false)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, r, op.precedence(), true)
            }
        }
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.stmt {
            Statement::Assign(name, e) => write!(f, "{name} = {e}")?,
            Statement::Print(name) => write!(f, "print({name})")?,
            Statement::Comment(text) => return write!(f, "#{text}"),
        }
        if let Some(c) = &self.comment {
            write!(f, " #{c}")?;
        }
        Ok(())
    }
}

/// Pretty-prints one statement per line.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, line) in self.lines.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Token form of program text: each non-blank line is tokenized and lines
/// are joined with a `;` token.
pub fn program_tokens(text: &str) -> TokenSeq {
    let mut out = TokenSeq::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if !out.is_empty() {
            out.push(";");
        }
        out.extend_from(&tokenize(line));
    }
    out
}

/// Inverse of [`program_tokens`] up to whitespace: the parser accepts `;`
/// as a statement separator.
pub fn program_text(tokens: &TokenSeq) -> String {
    tokens.detokenize()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_form_reparses() {
        let src = "a=20*2\nb=a*30\nc=b/60 #fix\nanswer=c\nprint(answer)";
        let toks = program_tokens(src);
        assert_eq!(
            toks.detokenize(),
            "a = 20*2 ; b = a*30 ; c = b/60 #fix ; answer = c ; print ( answer )"
        );
        let direct = parse(src).unwrap();
        let via_tokens = parse(&program_text(&toks)).unwrap();
        assert_eq!(direct, via_tokens);
    }

    #[test]
    fn pretty_print_minimal_parens() {
        let p = parse("x = (1 - (2 - 3)) * -(4 + 5) / 6").unwrap();
        assert_eq!(p.to_string(), "x = (1 - (2 - 3)) * -(4 + 5) / 6");
        let p = parse("y = 1 + 2 * 3 #note").unwrap();
        assert_eq!(p.to_string(), "y = 1 + 2 * 3 #note");
    }
}
