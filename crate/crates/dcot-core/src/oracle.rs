//! Exact task oracles over arbitrary-precision rationals: determinants,
//! rank, trace identities, linear-combination solves, a small arithmetic
//! evaluator, and canonical answer rendering. No floating point anywhere.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::scripted::ScriptedTrace;

/// Exact rational scalar; always reduced, denominator positive.
pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("expected a square matrix, got {rows}×{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix data length {got} does not fill {rows}×{cols}")]
    BadDataLength { rows: usize, cols: usize, got: usize },
    #[error("expression error at byte {at}: {msg}")]
    Expr { at: usize, msg: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("bad rational literal {0:?}")]
    BadRational(String),
}

pub fn rational_int(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

pub fn rational_frac(num: i64, den: i64) -> Rational {
    Rational::new(num.into(), den.into())
}

/// Parse a rational literal: `p`, `-p`, or `p/q`.
pub fn parse_rational(text: &str) -> Result<Rational, OracleError> {
    text.trim()
        .parse::<Rational>()
        .map_err(|_| OracleError::BadRational(text.to_string()))
}

/// Dense matrix of rationals, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<Rational>,
}

impl RatMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Rational>) -> Result<Self, OracleError> {
        if data.len() != rows * cols {
            return Err(OracleError::BadDataLength {
                rows,
                cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_i64(rows: &[&[i64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        let data = rows
            .iter()
            .flat_map(|row| row.iter().map(|&v| rational_int(v)))
            .collect();
        Self::new(r, c, data).expect("literal rows are rectangular")
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![Rational::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = Rational::one();
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> &Rational {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Rational) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zero(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.at(r, c).clone());
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self, OracleError> {
        if self.cols != other.rows {
            return Err(OracleError::ShapeMismatch(format!(
                "{}×{} · {}×{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zero(self.rows, other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = Rational::zero();
                for k in 0..self.cols {
                    acc += self.at(r, k) * other.at(k, c);
                }
                out.set(r, c, acc);
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Rational]) -> Result<Vec<Rational>, OracleError> {
        if v.len() != self.cols {
            return Err(OracleError::ShapeMismatch(format!(
                "{}×{} · vector of {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| self.at(r, c) * &v[c])
                    .fold(Rational::zero(), |a, b| a + b)
            })
            .collect())
    }

    pub fn trace(&self) -> Result<Rational, OracleError> {
        if !self.is_square() {
            return Err(OracleError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok((0..self.rows)
            .map(|i| self.at(i, i).clone())
            .fold(Rational::zero(), |a, b| a + b))
    }
}

/// Exact determinant by cofactor expansion along the first row. Meant for
/// the desk-scale sizes the tasks use (≤ 4×4), where the expansion is tiny.
pub fn det(m: &RatMatrix) -> Result<Rational, OracleError> {
    if !m.is_square() {
        return Err(OracleError::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    fn minor(m: &RatMatrix, skip_col: usize) -> RatMatrix {
        let n = m.rows;
        let mut data = Vec::with_capacity((n - 1) * (n - 1));
        for r in 1..n {
            for c in 0..n {
                if c != skip_col {
                    data.push(m.at(r, c).clone());
                }
            }
        }
        RatMatrix::new(n - 1, n - 1, data).expect("minor is square")
    }
    fn go(m: &RatMatrix) -> Rational {
        match m.rows {
            0 => Rational::one(),
            1 => m.at(0, 0).clone(),
            _ => {
                let mut acc = Rational::zero();
                for c in 0..m.cols {
                    if m.at(0, c).is_zero() {
                        continue;
                    }
                    let term = m.at(0, c) * go(&minor(m, c));
                    if c % 2 == 0 {
                        acc += term;
                    } else {
                        acc -= term;
                    }
                }
                acc
            }
        }
    }
    Ok(go(m))
}

/// Reduced row echelon form; returns the pivot column per pivot row.
fn rref(m: &mut RatMatrix) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..m.cols {
        if row == m.rows {
            break;
        }
        let Some(p) = (row..m.rows).find(|&r| !m.at(r, col).is_zero()) else {
            continue;
        };
        if p != row {
            for c in 0..m.cols {
                let a = m.at(row, c).clone();
                let b = m.at(p, c).clone();
                m.set(row, c, b);
                m.set(p, c, a);
            }
        }
        let inv = m.at(row, col).clone();
        for c in 0..m.cols {
            let v = m.at(row, c) / &inv;
            m.set(row, c, v);
        }
        for r in 0..m.rows {
            if r != row && !m.at(r, col).is_zero() {
                let factor = m.at(r, col).clone();
                for c in 0..m.cols {
                    let v = m.at(r, c) - &factor * m.at(row, c);
                    m.set(r, c, v);
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    pivots
}

/// Exact rank via Gaussian elimination over the rationals.
pub fn rank(m: &RatMatrix) -> usize {
    let mut work = m.clone();
    rref(&mut work).len()
}

/// Result of the trace-identity evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceIdentity {
    /// All four evaluation routes agreed exactly.
    pub equal: bool,
    /// The common value `xᵀ·A·x`.
    pub value: Rational,
}

/// Verify `trace(A·x·xᵀ) = trace(x·xᵀ·A) = xᵀ·A·x` exactly, evaluating the
/// quadratic form both directly and in the two-pass order `(Aᵀx)·x`.
pub fn trace_identity_check(a: &RatMatrix, x: &[Rational]) -> Result<TraceIdentity, OracleError> {
    if !a.is_square() {
        return Err(OracleError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    if x.len() != a.rows {
        return Err(OracleError::ShapeMismatch(format!(
            "matrix {}×{} with vector of {}",
            a.rows,
            a.cols,
            x.len()
        )));
    }
    let n = x.len();
    // Outer product x·xᵀ.
    let mut outer = RatMatrix::zero(n, n);
    for r in 0..n {
        for c in 0..n {
            outer.set(r, c, &x[r] * &x[c]);
        }
    }
    let t1 = a.mul(&outer)?.trace()?;
    let t2 = outer.mul(a)?.trace()?;
    // Direct quadratic form Σ_r Σ_c x_r·A[r,c]·x_c.
    let mut direct = Rational::zero();
    for r in 0..n {
        for c in 0..n {
            direct += &x[r] * a.at(r, c) * &x[c];
        }
    }
    // Two-pass order: w = Aᵀx, then w·x.
    let w = a.transpose().mul_vec(x)?;
    let two_pass = w
        .iter()
        .zip(x)
        .map(|(a, b)| a * b)
        .fold(Rational::zero(), |acc, v| acc + v);
    let equal = t1 == t2 && t2 == direct && direct == two_pass;
    Ok(TraceIdentity {
        equal,
        value: direct,
    })
}

/// All solutions of `Σ c_i·a_i = x` over the rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Solution {
    Inconsistent,
    Family {
        /// One solution (free coefficients set to zero).
        particular: Vec<Rational>,
        /// One basis vector per free coefficient.
        nullspace: Vec<Vec<Rational>>,
    },
}

/// Row-reduce `[a_1 … a_k | x]` and describe every coefficient vector that
/// combines the columns into the target.
pub fn solve_combination(columns: &[Vec<Rational>], target: &[Rational]) -> Result<Solution, OracleError> {
    let k = columns.len();
    let n = target.len();
    for (i, col) in columns.iter().enumerate() {
        if col.len() != n {
            return Err(OracleError::ShapeMismatch(format!(
                "column {i} has {} entries, target has {n}",
                col.len()
            )));
        }
    }
    let mut aug = RatMatrix::zero(n, k + 1);
    for r in 0..n {
        for (c, col) in columns.iter().enumerate() {
            aug.set(r, c, col[r].clone());
        }
        aug.set(r, k, target[r].clone());
    }
    let pivots = rref(&mut aug);
    if pivots.contains(&k) {
        return Ok(Solution::Inconsistent);
    }
    let mut particular = vec![Rational::zero(); k];
    for (row, &col) in pivots.iter().enumerate() {
        particular[col] = aug.at(row, k).clone();
    }
    let free: Vec<usize> = (0..k).filter(|c| !pivots.contains(c)).collect();
    let mut nullspace = Vec::with_capacity(free.len());
    for &f in &free {
        let mut basis = vec![Rational::zero(); k];
        basis[f] = Rational::one();
        for (row, &col) in pivots.iter().enumerate() {
            basis[col] = -aug.at(row, f).clone();
        }
        nullspace.push(basis);
    }
    Ok(Solution::Family {
        particular,
        nullspace,
    })
}

/// Evaluate a small arithmetic expression (`+ - * /`, parentheses, rational
/// literals) exactly.
pub fn eval_expr(expr: &str) -> Result<Rational, OracleError> {
    struct Parser<'a> {
        bytes: &'a [u8],
        pos: usize,
    }
    impl<'a> Parser<'a> {
        fn skip_ws(&mut self) {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
        }
        fn peek(&mut self) -> Option<u8> {
            self.skip_ws();
            self.bytes.get(self.pos).copied()
        }
        fn expr(&mut self) -> Result<Rational, OracleError> {
            let mut acc = self.term()?;
            while let Some(op) = self.peek() {
                match op {
                    b'+' => {
                        self.pos += 1;
                        acc += self.term()?;
                    }
                    b'-' => {
                        self.pos += 1;
                        acc -= self.term()?;
                    }
                    _ => break,
                }
            }
            Ok(acc)
        }
        fn term(&mut self) -> Result<Rational, OracleError> {
            let mut acc = self.factor()?;
            while let Some(op) = self.peek() {
                match op {
                    b'*' => {
                        self.pos += 1;
                        acc *= self.factor()?;
                    }
                    b'/' => {
                        self.pos += 1;
                        let rhs = self.factor()?;
                        if rhs.is_zero() {
                            return Err(OracleError::DivisionByZero);
                        }
                        acc /= rhs;
                    }
                    _ => break,
                }
            }
            Ok(acc)
        }
        fn factor(&mut self) -> Result<Rational, OracleError> {
            match self.peek() {
                Some(b'-') => {
                    self.pos += 1;
                    Ok(-self.factor()?)
                }
                Some(b'(') => {
                    self.pos += 1;
                    let inner = self.expr()?;
                    if self.peek() != Some(b')') {
                        return Err(OracleError::Expr {
                            at: self.pos,
                            msg: "expected ')'".to_string(),
                        });
                    }
                    self.pos += 1;
                    Ok(inner)
                }
                Some(c) if c.is_ascii_digit() => {
                    let start = self.pos;
                    while self
                        .bytes
                        .get(self.pos)
                        .map(|b| b.is_ascii_digit())
                        .unwrap_or(false)
                    {
                        self.pos += 1;
                    }
                    let text = core::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
                    parse_rational(text)
                }
                other => Err(OracleError::Expr {
                    at: self.pos,
                    msg: format!("unexpected {other:?}"),
                }),
            }
        }
    }
    let mut p = Parser {
        bytes: expr.as_bytes(),
        pos: 0,
    };
    let value = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(OracleError::Expr {
            at: p.pos,
            msg: "trailing input".to_string(),
        });
    }
    Ok(value)
}

/// Task categories the benchmark knows how to score exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    ArithEval,
    Determinant,
    Rank,
    TraceIdentity,
    LinearCombination,
    Scripted,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ArithEval => "arith",
            TaskKind::Determinant => "det",
            TaskKind::Rank => "rank",
            TaskKind::TraceIdentity => "trace",
            TaskKind::LinearCombination => "combo",
            TaskKind::Scripted => "scripted",
        }
    }
}

/// Payload backing a task's oracle answer.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskPayload {
    Expr(String),
    Matrix(RatMatrix),
    MatVec { a: RatMatrix, x: Vec<Rational> },
    Vectors {
        columns: Vec<Vec<Rational>>,
        target: Vec<Rational>,
    },
    Scripted(ScriptedTrace),
}

/// One benchmark task with its machine-computed oracle answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub prompt: String,
    pub kind: TaskKind,
    pub payload: TaskPayload,
    pub oracle_answer: String,
}

impl Task {
    /// Build a task, deriving `kind` and computing the oracle answer from
    /// the payload (answers for computed kinds are never hand-typed).
    pub fn new(id: &str, prompt: &str, kind: TaskKind, payload: TaskPayload) -> Result<Self, OracleError> {
        let oracle_answer = oracle_answer(kind, &payload)?;
        Ok(Self {
            id: id.to_string(),
            prompt: prompt.to_string(),
            kind,
            payload,
            oracle_answer,
        })
    }
}

/// Canonical answer rendering per task kind: reduced rationals, fixed
/// separators, no whitespace.
pub fn oracle_answer(kind: TaskKind, payload: &TaskPayload) -> Result<String, OracleError> {
    let render_vec = |v: &[Rational]| -> String {
        let parts: Vec<String> = v.iter().map(|r| r.to_string()).collect();
        format!("({})", parts.join(","))
    };
    match (kind, payload) {
        (TaskKind::ArithEval, TaskPayload::Expr(e)) => Ok(eval_expr(e)?.to_string()),
        (TaskKind::Determinant, TaskPayload::Matrix(m)) => Ok(format!("det={}", det(m)?)),
        (TaskKind::Rank, TaskPayload::Matrix(m)) => Ok(format!("rank={}", rank(m))),
        (TaskKind::TraceIdentity, TaskPayload::MatVec { a, x }) => {
            let t = trace_identity_check(a, x)?;
            debug_assert!(t.equal);
            Ok(format!("trace={}", t.value))
        }
        (TaskKind::LinearCombination, TaskPayload::Vectors { columns, target }) => {
            match solve_combination(columns, target)? {
                Solution::Inconsistent => Ok("inconsistent".to_string()),
                Solution::Family {
                    particular,
                    nullspace,
                } => {
                    let mut out = format!("c={}", render_vec(&particular));
                    for (i, basis) in nullspace.iter().enumerate() {
                        out.push_str(&format!("+t{}*{}", i + 1, render_vec(basis)));
                    }
                    Ok(out)
                }
            }
        }
        (TaskKind::Scripted, TaskPayload::Scripted(trace)) => Ok(trace.answer().to_string()),
        (kind, _) => Err(OracleError::ShapeMismatch(format!(
            "payload does not fit task kind {}",
            kind.as_str()
        ))),
    }
}
