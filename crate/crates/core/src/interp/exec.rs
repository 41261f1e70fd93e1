use std::collections::BTreeMap;

use thiserror::Error;

use super::{BinOp, Expr, Program, Statement};

pub const DEFAULT_STEP_LIMIT: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("undefined variable '{0}'")]
    UndefinedVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("step limit exceeded")]
    StepLimitExceeded,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExecResult {
    pub printed: Vec<f64>,
    pub env: BTreeMap<String, f64>,
    pub steps_used: usize,
}

struct Machine {
    env: BTreeMap<String, f64>,
    steps: usize,
    limit: usize,
}

impl Machine {
    fn tick(&mut self) -> Result<(), ExecError> {
        self.steps += 1;
        if self.steps > self.limit {
            Err(ExecError::StepLimitExceeded)
        } else {
            Ok(())
        }
    }

    fn lookup(&self, name: &str) -> Result<f64, ExecError> {
        self.env
            .get(name)
            .copied()
            .ok_or_else(|| ExecError::UndefinedVariable(name.to_owned()))
    }

    fn eval(&mut self, e: &Expr) -> Result<f64, ExecError> {
        self.tick()?;
        match e {
            Expr::Num(n) => Ok(*n),
            Expr::Var(name) => self.lookup(name),
            Expr::Neg(inner) => Ok(-self.eval(inner)?),
            Expr::Bin(op, l, r) => {
                let a = self.eval(l)?;
                let b = self.eval(r)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div if b == 0.0 => Err(ExecError::DivisionByZero),
                    BinOp::Div => Ok(a / b),
                }
            }
        }
    }
}

/// Runs the program top to bottom. Each statement and each expression node
/// costs one step.
pub fn execute(program: &Program, step_limit: usize) -> Result<ExecResult, ExecError> {
    let mut m = Machine {
        env: BTreeMap::new(),
        steps: 0,
        limit: step_limit,
    };
    let mut printed = Vec::new();
    for line in &program.lines {
        m.tick()?;
        match &line.stmt {
            Statement::Assign(name, e) => {
                let v = m.eval(e)?;
                m.env.insert(name.clone(), v);
            }
            Statement::Print(name) => printed.push(m.lookup(name)?),
            Statement::Comment(_) => {}
        }
    }
    Ok(ExecResult {
        printed,
        env: m.env,
        steps_used: m.steps,
    })
}

/// True iff the first printed value is within `max(1e-6, 1e-6·|gold|)` of
/// the gold answer.
pub fn check_answer(result: &ExecResult, gold: f64) -> bool {
    match result.printed.first() {
        Some(&v) => (v - gold).abs() <= f64::max(1e-6, 1e-6 * gold.abs()),
        None => false,
    }
}
