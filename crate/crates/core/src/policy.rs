//! Access-control policies: parsing, the two-stack satisfaction judge used
//! on-ledger, a recursive reference evaluator, and monotone-formula to LSSS
//! conversion.
//!
//! Policies are space-delimited infix expressions over attribute words with
//! binary `AND` / `OR` gates and parentheses. There is **no operator
//! precedence**: `a AND b OR c` is `(a AND b) OR c` and `a OR b AND c` is
//! `(a OR b) AND c`. Evaluation proceeds strictly left to right, with
//! parentheses as the only grouping, exactly as the stack judge does it.

use std::collections::BTreeSet;
use std::fmt;

use ark_ff::{Field, One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Scalar;

pub const AND: &str = "AND";
pub const OR: &str = "OR";
const OPEN: &str = "(";
const CLOSE: &str = ")";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("empty policy")]
    Empty,
    #[error("empty token at position {0} (tokens must be separated by single spaces)")]
    EmptyToken(usize),
    #[error("unbalanced parentheses at token {0}")]
    UnbalancedParens(usize),
    #[error("adjacent operators at token {0}")]
    AdjacentOperators(usize),
    #[error("adjacent operands at token {0}")]
    AdjacentOperands(usize),
    #[error("operator without operand at token {0}")]
    MissingOperand(usize),
    #[error("empty parentheses at token {0}")]
    EmptyGroup(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    #[serde(rename = "AND")]
    And,
    #[serde(rename = "OR")]
    Or,
}

impl Gate {
    fn as_str(&self) -> &'static str {
        match self {
            Gate::And => AND,
            Gate::Or => OR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyAst {
    Leaf(String),
    Gate {
        op: Gate,
        left: Box<PolicyAst>,
        right: Box<PolicyAst>,
    },
}

impl PolicyAst {
    pub fn leaf(word: impl Into<String>) -> Self {
        PolicyAst::Leaf(word.into())
    }

    pub fn and(left: PolicyAst, right: PolicyAst) -> Self {
        PolicyAst::Gate { op: Gate::And, left: Box::new(left), right: Box::new(right) }
    }

    pub fn or(left: PolicyAst, right: PolicyAst) -> Self {
        PolicyAst::Gate { op: Gate::Or, left: Box::new(left), right: Box::new(right) }
    }

    /// Attribute leaves in left-to-right order (duplicates kept).
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            PolicyAst::Leaf(w) => out.push(w),
            PolicyAst::Gate { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            PolicyAst::Leaf(_) => 1,
            PolicyAst::Gate { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Renders a policy string that parses back to the same tree under the
/// left-to-right rule (every gate operand is parenthesised).
impl fmt::Display for PolicyAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn operand(ast: &PolicyAst, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match ast {
                PolicyAst::Leaf(w) => f.write_str(w),
                gate => write!(f, "( {gate} )"),
            }
        }
        match self {
            PolicyAst::Leaf(w) => f.write_str(w),
            PolicyAst::Gate { op, left, right } => {
                operand(left, f)?;
                write!(f, " {} ", op.as_str())?;
                operand(right, f)
            }
        }
    }
}

/// A set of attribute words, compared byte-exactly.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeSet(BTreeSet<String>);

impl AttributeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    /// Returns whether the word was newly inserted.
    pub fn insert(&mut self, word: impl Into<String>) -> bool {
        self.0.insert(word.into())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for AttributeSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        AttributeSet(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Token<'a> {
    Gate(Gate),
    Open,
    Close,
    Word(&'a str),
}

fn tokenize(text: &str) -> Result<Vec<Token<'_>>, PolicyError> {
    if text.is_empty() {
        return Err(PolicyError::Empty);
    }
    text.split(' ')
        .enumerate()
        .map(|(i, w)| match w {
            "" => Err(PolicyError::EmptyToken(i)),
            AND => Ok(Token::Gate(Gate::And)),
            OR => Ok(Token::Gate(Gate::Or)),
            OPEN => Ok(Token::Open),
            CLOSE => Ok(Token::Close),
            word => Ok(Token::Word(word)),
        })
        .collect()
}

/// Grammar check: alternation of operands and operators, balanced groups.
fn validate(tokens: &[Token<'_>]) -> Result<(), PolicyError> {
    let mut expect_operand = true;
    let mut open: Vec<usize> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        match tok {
            Token::Word(_) => {
                if !expect_operand {
                    return Err(PolicyError::AdjacentOperands(i));
                }
                expect_operand = false;
            }
            Token::Open => {
                if !expect_operand {
                    return Err(PolicyError::AdjacentOperands(i));
                }
                open.push(i);
            }
            Token::Gate(_) => {
                if expect_operand {
                    return Err(match i.checked_sub(1).map(|j| &tokens[j]) {
                        Some(Token::Gate(_)) => PolicyError::AdjacentOperators(i),
                        _ => PolicyError::MissingOperand(i),
                    });
                }
                expect_operand = true;
            }
            Token::Close => {
                let Some(opened) = open.pop() else {
                    return Err(PolicyError::UnbalancedParens(i));
                };
                if expect_operand {
                    return Err(if opened + 1 == i {
                        PolicyError::EmptyGroup(i)
                    } else {
                        PolicyError::MissingOperand(i)
                    });
                }
            }
        }
    }
    if let Some(&i) = open.last() {
        return Err(PolicyError::UnbalancedParens(i));
    }
    if expect_operand {
        return Err(PolicyError::MissingOperand(tokens.len()));
    }
    Ok(())
}

/// Parse a policy string into a tree with the judge's left-to-right
/// grouping.
pub fn parse_policy(text: &str) -> Result<PolicyAst, PolicyError> {
    let tokens = tokenize(text)?;
    validate(&tokens)?;

    // Same two-stack discipline as `judge_attrs`, with trees as values.
    let mut ops: Vec<Token<'_>> = Vec::new();
    let mut values: Vec<PolicyAst> = Vec::new();
    fn reduce(ops: &mut Vec<Token<'_>>, values: &mut Vec<PolicyAst>) {
        let (Some(Token::Gate(op)), Some(right), Some(left)) = (ops.pop(), values.pop(), values.pop()) else {
            unreachable!("validated token stream");
        };
        values.push(PolicyAst::Gate { op, left: Box::new(left), right: Box::new(right) });
    }
    for tok in tokens {
        match tok {
            Token::Gate(_) => {
                if matches!(ops.last(), Some(Token::Gate(_))) {
                    reduce(&mut ops, &mut values);
                }
                ops.push(tok);
            }
            Token::Open => ops.push(tok),
            Token::Close => {
                while matches!(ops.last(), Some(Token::Gate(_))) {
                    reduce(&mut ops, &mut values);
                }
                ops.pop();
            }
            Token::Word(w) => values.push(PolicyAst::Leaf(w.to_string())),
        }
    }
    while !ops.is_empty() {
        reduce(&mut ops, &mut values);
    }
    debug_assert_eq!(values.len(), 1);
    Ok(values.pop().expect("validated policy yields one tree"))
}

/// One stack mutation of the judge, recorded by [`judge_attrs_traced`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StackEvent {
    PushOp(String),
    PopOp(String),
    PushResult(bool),
    PopResult(bool),
}

struct Judge<'t> {
    ops: Vec<&'static str>,
    result: Vec<bool>,
    trace: Option<&'t mut Vec<StackEvent>>,
}

impl Judge<'_> {
    fn log(&mut self, ev: impl FnOnce() -> StackEvent) {
        if let Some(t) = self.trace.as_deref_mut() {
            t.push(ev());
        }
    }

    fn push_op(&mut self, op: &'static str) {
        self.log(|| StackEvent::PushOp(op.to_string()));
        self.ops.push(op);
    }

    fn pop_op(&mut self) -> Option<&'static str> {
        let op = self.ops.pop();
        if let Some(op) = op {
            self.log(|| StackEvent::PopOp(op.to_string()));
        }
        op
    }

    fn push_result(&mut self, v: bool) {
        self.log(|| StackEvent::PushResult(v));
        self.result.push(v);
    }

    fn pop_result(&mut self) -> bool {
        let v = self.result.pop().expect("calc checked the stack height");
        self.log(|| StackEvent::PopResult(v));
        v
    }

    /// Pop two values and push their combination under the top operator.
    /// Returns false, touching nothing, when fewer than two values exist.
    fn calc(&mut self) -> bool {
        if self.result.len() < 2 {
            return false;
        }
        let op = self.pop_op();
        let t1 = self.pop_result();
        let t2 = self.pop_result();
        match op {
            Some(AND) => self.push_result(t1 & t2),
            Some(OR) => self.push_result(t1 | t2),
            _ => {}
        }
        true
    }
}

fn judge(attrs: &AttributeSet, policy: &str, trace: Option<&mut Vec<StackEvent>>) -> Result<bool, PolicyError> {
    // The literal stack machine assumes a well-formed expression.
    validate(&tokenize(policy)?)?;

    let mut j = Judge { ops: Vec::new(), result: Vec::new(), trace };
    for word in policy.split(' ') {
        match word {
            AND | OR => {
                if matches!(j.ops.last(), Some(&top) if top != OPEN) {
                    j.calc();
                }
                j.push_op(if word == AND { AND } else { OR });
            }
            OPEN => j.push_op(OPEN),
            CLOSE => {
                while j.ops.last().is_some_and(|&top| top != OPEN) {
                    if !j.calc() {
                        break;
                    }
                }
                j.pop_op();
            }
            _ => j.push_result(attrs.contains(word)),
        }
    }
    while !j.ops.is_empty() {
        if !j.calc() {
            break;
        }
    }
    Ok(j.result[0])
}

/// Whether `attrs` satisfies `policy`, evaluated with per-call `ops` /
/// `result` stacks in a single left-to-right scan.
pub fn judge_attrs(attrs: &AttributeSet, policy: &str) -> Result<bool, PolicyError> {
    judge(attrs, policy, None)
}

/// [`judge_attrs`] that also returns every stack push and pop it performed.
pub fn judge_attrs_traced(attrs: &AttributeSet, policy: &str) -> Result<(bool, Vec<StackEvent>), PolicyError> {
    let mut trace = Vec::new();
    let v = judge(attrs, policy, Some(&mut trace))?;
    Ok((v, trace))
}

/// Recursive truth evaluation of a policy tree.
pub fn eval_ast_oracle(attrs: &AttributeSet, ast: &PolicyAst) -> bool {
    match ast {
        PolicyAst::Leaf(w) => attrs.contains(w),
        PolicyAst::Gate { op: Gate::And, left, right } => eval_ast_oracle(attrs, left) && eval_ast_oracle(attrs, right),
        PolicyAst::Gate { op: Gate::Or, left, right } => eval_ast_oracle(attrs, left) || eval_ast_oracle(attrs, right),
    }
}

// ---------------------------------------------------------------------------
// LSSS

/// Share-generating matrix of a monotone formula. Entries are in {-1, 0, 1};
/// row `x` belongs to attribute `row_attr[x]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LsssMatrix {
    pub rows: Vec<Vec<i64>>,
    pub row_attr: Vec<String>,
}

impl LsssMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn entry(&self, row: usize, col: usize) -> Scalar {
        to_scalar(self.rows[row][col])
    }

    /// `row_x · v` over Z_p.
    pub fn row_dot(&self, row: usize, v: &[Scalar]) -> Scalar {
        self.rows[row]
            .iter()
            .zip(v)
            .fold(Scalar::zero(), |acc, (&a, b)| match a {
                0 => acc,
                1 => acc + b,
                -1 => acc - b,
                a => acc + to_scalar(a) * b,
            })
    }
}

fn to_scalar(a: i64) -> Scalar {
    if a < 0 {
        -Scalar::from(a.unsigned_abs())
    } else {
        Scalar::from(a as u64)
    }
}

/// Vector-labelling conversion: the root is `(1)`, an OR gate hands its label
/// to both children, an AND gate with label `v` gives `v||0..0||1` to the left
/// child and `0..0||-1` to the right, consuming one fresh coordinate.
pub fn policy_to_lsss(ast: &PolicyAst) -> LsssMatrix {
    fn label(node: &PolicyAst, v: Vec<i64>, counter: &mut usize, rows: &mut Vec<Vec<i64>>, attrs: &mut Vec<String>) {
        match node {
            PolicyAst::Leaf(w) => {
                rows.push(v);
                attrs.push(w.clone());
            }
            PolicyAst::Gate { op: Gate::Or, left, right } => {
                label(left, v.clone(), counter, rows, attrs);
                label(right, v, counter, rows, attrs);
            }
            PolicyAst::Gate { op: Gate::And, left, right } => {
                let mut lv = v;
                lv.resize(*counter, 0);
                lv.push(1);
                let mut rv = vec![0; *counter];
                rv.push(-1);
                *counter += 1;
                label(left, lv, counter, rows, attrs);
                label(right, rv, counter, rows, attrs);
            }
        }
    }
    let mut counter = 1;
    let mut rows = Vec::new();
    let mut row_attr = Vec::new();
    label(ast, vec![1], &mut counter, &mut rows, &mut row_attr);
    for r in &mut rows {
        r.resize(counter, 0);
    }
    LsssMatrix { rows, row_attr }
}

/// Coefficients `c_x` with `Σ c_x · row_x = (1, 0, …, 0)` using only rows
/// whose attribute is in `s`. The returned vector is indexed by row; rows not
/// used carry zero. `None` when `s` is not authorised.
pub fn reconstruction_coeffs(m: &LsssMatrix, s: &AttributeSet) -> Option<Vec<Scalar>> {
    let selected: Vec<usize> = (0..m.num_rows()).filter(|&x| s.contains(&m.row_attr[x])).collect();
    let n = m.num_cols();
    let k = selected.len();
    if k == 0 || n == 0 {
        return None;
    }
    // Solve A_S^T c = e1: n equations (columns), k unknowns (selected rows).
    let mut aug: Vec<Vec<Scalar>> = (0..n)
        .map(|j| {
            let mut eq: Vec<Scalar> = selected.iter().map(|&x| m.entry(x, j)).collect();
            eq.push(if j == 0 { Scalar::one() } else { Scalar::zero() });
            eq
        })
        .collect();

    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut r = 0;
    for col in 0..k {
        let Some(p) = (r..n).find(|&i| !aug[i][col].is_zero()) else {
            continue;
        };
        aug.swap(r, p);
        let inv = aug[r][col].inverse().expect("pivot is nonzero");
        for v in aug[r][col..].iter_mut() {
            *v *= inv;
        }
        let pivot_row = aug[r].clone();
        for (i, row) in aug.iter_mut().enumerate() {
            if i != r && !row[col].is_zero() {
                let f = row[col];
                for (v, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *v -= *p * f;
                }
            }
        }
        pivots.push((r, col));
        r += 1;
        if r == n {
            break;
        }
    }
    if aug[r..].iter().any(|eq| !eq[k].is_zero()) {
        return None;
    }
    let mut coeffs = vec![Scalar::zero(); m.num_rows()];
    for (row, col) in pivots {
        coeffs[selected[col]] = aug[row][k];
    }
    Some(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    pub const GAMEFI: &str = "( level25@AUTH1 OR cityLA@AUTH2 ) AND female@AUTH3";

    fn set(words: &[&str]) -> AttributeSet {
        words.iter().copied().collect()
    }

    fn random_ast(rng: &mut impl Rng, leaves: usize, alphabet: usize) -> PolicyAst {
        if leaves == 1 {
            return PolicyAst::leaf(format!("x{}@A{}", rng.gen_range(0..alphabet), rng.gen_range(0..3)));
        }
        let l = rng.gen_range(1..leaves);
        let left = random_ast(rng, l, alphabet);
        let right = random_ast(rng, leaves - l, alphabet);
        if rng.gen_bool(0.5) {
            PolicyAst::and(left, right)
        } else {
            PolicyAst::or(left, right)
        }
    }

    fn distinct(ast: &PolicyAst) -> Vec<String> {
        let s: BTreeSet<String> = ast.leaves().into_iter().map(String::from).collect();
        s.into_iter().collect()
    }

    fn subset(words: &[String], mask: u32) -> AttributeSet {
        words.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, w)| w.clone()).collect()
    }

    #[test]
    fn parses_simple_and() {
        assert_eq!(parse_policy("a@A1 AND b@A2").unwrap(), PolicyAst::and(PolicyAst::leaf("a@A1"), PolicyAst::leaf("b@A2")));
    }

    #[test]
    fn parses_gamefi_policy() {
        let expected = PolicyAst::and(
            PolicyAst::or(PolicyAst::leaf("level25@AUTH1"), PolicyAst::leaf("cityLA@AUTH2")),
            PolicyAst::leaf("female@AUTH3"),
        );
        assert_eq!(parse_policy(GAMEFI).unwrap(), expected);
    }

    #[test]
    fn no_precedence_left_to_right() {
        let a = PolicyAst::leaf("a");
        let b = PolicyAst::leaf("b");
        let c = PolicyAst::leaf("c");
        assert_eq!(parse_policy("a AND b OR c").unwrap(), PolicyAst::or(PolicyAst::and(a.clone(), b.clone()), c.clone()));
        assert_eq!(parse_policy("a OR b AND c").unwrap(), PolicyAst::and(PolicyAst::or(a, b), c));
        // Conventional precedence would make this true.
        assert!(!judge_attrs(&set(&["a"]), "a OR b AND c").unwrap());
    }

    #[test]
    fn parse_errors_are_distinct() {
        assert_eq!(parse_policy(""), Err(PolicyError::Empty));
        assert_eq!(parse_policy("a@A1 AND"), Err(PolicyError::MissingOperand(2)));
        assert_eq!(parse_policy("a AND OR b"), Err(PolicyError::AdjacentOperators(2)));
        assert_eq!(parse_policy("( a AND b"), Err(PolicyError::UnbalancedParens(0)));
        assert_eq!(parse_policy("a AND b )"), Err(PolicyError::UnbalancedParens(3)));
        assert_eq!(parse_policy("a b"), Err(PolicyError::AdjacentOperands(1)));
        assert_eq!(parse_policy("a  AND b"), Err(PolicyError::EmptyToken(1)));
        assert_eq!(parse_policy("( )"), Err(PolicyError::EmptyGroup(1)));
        assert_eq!(parse_policy("AND a"), Err(PolicyError::MissingOperand(0)));
        assert!(judge_attrs(&set(&["a"]), "a AND").is_err());
    }

    #[test]
    fn gamefi_players() {
        let p2 = set(&["level25@AUTH1", "cityPHX@AUTH2", "female@AUTH3"]);
        let p3 = set(&["level28@AUTH1", "cityLA@AUTH2", "male@AUTH3"]);
        assert!(judge_attrs(&p2, GAMEFI).unwrap());
        assert!(!judge_attrs(&p3, GAMEFI).unwrap());
        assert!(!judge_attrs(&AttributeSet::new(), "a@A1 OR b@A1").unwrap());
    }

    #[test]
    fn gamefi_stack_trace_matches_two_stack_scan() {
        use StackEvent::*;
        let p2 = set(&["level25@AUTH1", "cityPHX@AUTH2", "female@AUTH3"]);
        let (v, trace) = judge_attrs_traced(&p2, GAMEFI).unwrap();
        assert!(v);
        let expected = vec![
            PushOp("(".into()),
            PushResult(true),
            PushOp("OR".into()),
            PushResult(false),
            // ")" reduces the OR, then removes "("
            PopOp("OR".into()),
            PopResult(false),
            PopResult(true),
            PushResult(true),
            PopOp("(".into()),
            PushOp("AND".into()),
            PushResult(true),
            // end of input
            PopOp("AND".into()),
            PopResult(true),
            PopResult(true),
            PushResult(true),
        ];
        assert_eq!(trace, expected);
    }

    #[test]
    fn judge_is_stateless() {
        let p2 = set(&["level25@AUTH1", "female@AUTH3"]);
        let first = judge_attrs(&p2, GAMEFI).unwrap();
        for _ in 0..10 {
            assert_eq!(judge_attrs(&p2, GAMEFI).unwrap(), first);
            assert!(!judge_attrs(&AttributeSet::new(), GAMEFI).unwrap());
        }
    }

    #[test]
    fn oracle_basics() {
        assert!(eval_ast_oracle(&set(&["a@A1"]), &PolicyAst::leaf("a@A1")));
        assert!(!eval_ast_oracle(&set(&["x"]), &PolicyAst::and(PolicyAst::leaf("x"), PolicyAst::leaf("y"))));
    }

    #[test]
    fn judge_matches_oracle_on_random_formulas() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..150 {
            let leaves = rng.gen_range(1..=8);
            let ast = random_ast(&mut rng, leaves, 6);
            let text = ast.to_string();
            assert_eq!(parse_policy(&text).unwrap(), ast, "{text}");
            let words = distinct(&ast);
            for mask in 0..(1u32 << words.len()) {
                let s = subset(&words, mask);
                assert_eq!(judge_attrs(&s, &text).unwrap(), eval_ast_oracle(&s, &ast), "{text} {s:?}");
            }
        }
    }

    #[test]
    fn lsss_leaf_and_or() {
        let m = policy_to_lsss(&PolicyAst::leaf("a"));
        assert_eq!(m.rows, vec![vec![1]]);
        assert_eq!(m.row_attr, vec!["a".to_string()]);
        assert_eq!(reconstruction_coeffs(&m, &set(&["a"])), Some(vec![Scalar::one()]));

        let m = policy_to_lsss(&parse_policy("a OR b").unwrap());
        assert_eq!(m.rows, vec![vec![1], vec![1]]);
        assert!(reconstruction_coeffs(&m, &set(&["b"])).is_some());
    }

    #[test]
    fn lsss_and_needs_both() {
        let m = policy_to_lsss(&parse_policy("a AND b").unwrap());
        assert_eq!(m.rows, vec![vec![1, 1], vec![0, -1]]);
        assert_eq!(reconstruction_coeffs(&m, &set(&["a"])), None);
        let c = reconstruction_coeffs(&m, &set(&["a", "b"])).unwrap();
        assert_eq!(c, vec![Scalar::one(), Scalar::one()]);
    }

    #[test]
    fn lsss_shape_invariants() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..100 {
            let leaves = rng.gen_range(1..=12);
            let ast = random_ast(&mut rng, leaves, 20);
            let m = policy_to_lsss(&ast);
            assert_eq!(m.num_rows(), leaves);
            assert!(m.num_cols() <= m.num_rows() + 1);
            assert_eq!(m.row_attr, ast.leaves());
        }
    }

    #[test]
    fn lsss_reconstruction_iff_satisfied() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..60 {
            let leaves = rng.gen_range(1..=7);
            let ast = random_ast(&mut rng, leaves, 5);
            let m = policy_to_lsss(&ast);
            let words = distinct(&ast);
            for mask in 0..(1u32 << words.len()) {
                let s = subset(&words, mask);
                let coeffs = reconstruction_coeffs(&m, &s);
                assert_eq!(coeffs.is_some(), eval_ast_oracle(&s, &ast));
                if let Some(c) = coeffs {
                    for col in 0..m.num_cols() {
                        let sum = (0..m.num_rows()).fold(Scalar::zero(), |acc, x| acc + c[x] * m.entry(x, col));
                        assert_eq!(sum, if col == 0 { Scalar::one() } else { Scalar::zero() });
                    }
                    for (cx, attr) in c.iter().zip(&m.row_attr) {
                        assert!(cx.is_zero() || s.contains(attr));
                    }
                }
            }
        }
    }

    #[test]
    fn ast_json_round_trip() {
        let ast = parse_policy(GAMEFI).unwrap();
        let js = serde_json::to_string(&ast).unwrap();
        assert_eq!(serde_json::from_str::<PolicyAst>(&js).unwrap(), ast);
    }
}
