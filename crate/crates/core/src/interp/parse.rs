use thiserror::Error;

use super::{BinOp, Expr, Line, Program, Statement};

pub const MAX_LINES: usize = 100;
pub const MAX_DEPTH: usize = 32;
// Parser frames per parenthesis level: expr -> term -> factor. Redundant
// parentheses are allowed up to twice the tree depth.
const RECURSION_LIMIT: usize = 3 * 2 * MAX_DEPTH + 3;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("parse error on line {line}: {reason}")]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Eq,
}

fn lex(code: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = code.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let n = text
                    .parse::<f64>()
                    .ok()
                    .filter(|_| text.matches('.').count() <= 1 && text != ".")
                    .ok_or_else(|| format!("invalid number '{text}'"))?;
                out.push(Tok::Num(n));
            }
            'a'..='z' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_lowercase() || chars[i].is_ascii_digit() || chars[i] == '_')
                {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            '+' | '-' | '*' | '/' => {
                out.push(Tok::Op(c));
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            '=' => {
                out.push(Tok::Eq);
                i += 1;
            }
            other => return Err(format!("unexpected character '{other}'")),
        }
    }
    Ok(out)
}

struct ExprParser<'a> {
    toks: &'a [Tok],
    pos: usize,
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, String> {
        if depth > RECURSION_LIMIT {
            return Err(format!("expression nested deeper than {MAX_DEPTH}"));
        }
        let mut lhs = self.term(depth + 1)?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term(depth + 1)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self, depth: usize) -> Result<Expr, String> {
        let mut lhs = self.factor(depth + 1)?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.factor(depth + 1)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self, depth: usize) -> Result<Expr, String> {
        if depth > RECURSION_LIMIT {
            return Err(format!("expression nested deeper than {MAX_DEPTH}"));
        }
        match self.bump().cloned() {
            Some(Tok::Num(n)) => Ok(Expr::Num(n)),
            Some(Tok::Ident(name)) => {
                if name == "print" {
                    Err("'print' is not a value".into())
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Tok::LParen) => {
                let inner = self.expr(depth + 1)?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err("expected ')'".into()),
                }
            }
            Some(Tok::Op('-')) => Ok(Expr::Neg(Box::new(self.factor(depth + 1)?))),
            Some(t) => Err(format!("unexpected {t:?} in expression")),
            None => Err("unexpected end of expression".into()),
        }
    }
}

fn tree_depth(e: &Expr) -> usize {
    match e {
        Expr::Num(_) | Expr::Var(_) => 1,
        Expr::Neg(inner) => 1 + tree_depth(inner),
        Expr::Bin(_, l, r) => 1 + tree_depth(l).max(tree_depth(r)),
    }
}

fn parse_statement(code: &str) -> Result<Statement, String> {
    let toks = lex(code)?;
    match toks.as_slice() {
        [Tok::Ident(kw), Tok::LParen, Tok::Ident(name), Tok::RParen] if kw == "print" => {
            Ok(Statement::Print(name.clone()))
        }
        [Tok::Ident(name), Tok::Eq, rest @ ..] => {
            if name == "print" {
                return Err("cannot assign to 'print'".into());
            }
            let mut p = ExprParser { toks: rest, pos: 0 };
            let e = p.expr(1)?;
            if p.pos != rest.len() {
                return Err(format!("trailing input after expression: {:?}", &rest[p.pos..]));
            }
            if tree_depth(&e) > MAX_DEPTH {
                return Err(format!("expression tree deeper than {MAX_DEPTH}"));
            }
            Ok(Statement::Assign(name.clone(), e))
        }
        [] => Err("empty statement".into()),
        _ => Err("expected 'ident = expr' or 'print(ident)'".into()),
    }
}

/// Parses program text. Statements are separated by newlines or `;`;
/// blank statements are skipped.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let mut lines = Vec::new();
    for (idx, segment) in text.split(['\n', ';']).enumerate() {
        let line_no = idx + 1;
        let err = |reason: String| ParseError {
            line: line_no,
            reason,
        };
        let trimmed = segment.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (code, comment) = match trimmed.find('#') {
            Some(i) => (trimmed[..i].trim(), Some(trimmed[i + 1..].to_owned())),
            None => (trimmed, None),
        };
        let line = if code.is_empty() {
            Line {
                stmt: Statement::Comment(comment.unwrap_or_default()),
                comment: None,
            }
        } else {
            Line {
                stmt: parse_statement(code).map_err(err)?,
                comment,
            }
        };
        lines.push(line);
        if lines.len() > MAX_LINES {
            return Err(err(format!("program longer than {MAX_LINES} lines")));
        }
    }
    Ok(Program { lines })
}
