//! Symbolic functions of one particle θ = (c, w^{2,1..N₁}, w^{1,1..N₁}).
//!
//! Expressions are immutable DAGs with structural 128-bit keys. Sums and
//! products are flattened, constant-folded and sorted by key at construction,
//! so equal expressions built in different orders share a key. Partial
//! derivatives are symbolic and memoized per thread.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::activation::Activation;
use crate::error::{Error, Result};

/// Deepest derivative level a test function may reach.
pub const MAX_DERIVATIVE_ORDER: usize = 3;

const MEMO_LIMIT: usize = 1 << 21;

/// A coordinate of the particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    C,
    /// w^{2,j}.
    W2(usize),
    /// Component k of w^{1,j}.
    W1(usize, usize),
}

#[derive(Debug)]
pub(crate) enum Kind {
    Const(f64),
    Var(Var),
    /// w^{1,j}·x.
    Dot {
        j: usize,
        x: Arc<[f64]>,
    },
    /// σ^{(order)}(arg).
    Act {
        act: Activation,
        order: u32,
        arg: TestFunction,
    },
    Sum(Vec<TestFunction>),
    Prod(Vec<TestFunction>),
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) kind: Kind,
    key: u128,
    deps: Arc<[Var]>,
    order: usize,
}

/// A smooth function of one particle.
#[derive(Clone)]
pub struct TestFunction(pub(crate) Arc<Node>);

fn hash_with(salt: u64, f: impl Fn(&mut std::collections::hash_map::DefaultHasher)) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    salt.hash(&mut h);
    f(&mut h);
    h.finish()
}

fn key_of(f: impl Fn(&mut std::collections::hash_map::DefaultHasher)) -> u128 {
    let hi = hash_with(0x9e37_79b9_7f4a_7c15, &f);
    let lo = hash_with(0xc2b2_ae3d_27d4_eb4f, &f);
    (u128::from(hi) << 64) | u128::from(lo)
}

fn f64_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn merge_deps<'a>(children: impl Iterator<Item = &'a TestFunction>) -> Arc<[Var]> {
    let mut all: Vec<Var> = children.flat_map(|c| c.0.deps.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    all.into()
}

impl TestFunction {
    fn make(kind: Kind, order: usize) -> Self {
        let (key, deps) = match &kind {
            Kind::Const(v) => (key_of(|h| (0u8, f64_bits(*v)).hash(h)), Arc::from(Vec::new())),
            Kind::Var(v) => (key_of(|h| (1u8, v).hash(h)), Arc::from(vec![*v])),
            Kind::Dot { j, x } => {
                let key = key_of(|h| {
                    2u8.hash(h);
                    j.hash(h);
                    x.iter().for_each(|v| f64_bits(*v).hash(h));
                });
                let deps: Vec<Var> = x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, _)| Var::W1(*j, k)).collect();
                (key, Arc::from(deps))
            }
            Kind::Act { act, order, arg } => (key_of(|h| (3u8, *act, *order, arg.key()).hash(h)), arg.0.deps.clone()),
            Kind::Sum(items) => (key_of(|h| (4u8, items.iter().map(|c| c.key()).collect::<Vec<_>>()).hash(h)), merge_deps(items.iter())),
            Kind::Prod(items) => (key_of(|h| (5u8, items.iter().map(|c| c.key()).collect::<Vec<_>>()).hash(h)), merge_deps(items.iter())),
        };
        TestFunction(Arc::new(Node { kind, key, deps, order }))
    }

    pub fn constant(v: f64) -> Self {
        Self::make(Kind::Const(v), 0)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn var(v: Var) -> Self {
        Self::make(Kind::Var(v), 0)
    }

    /// The outer weight c.
    pub fn c() -> Self {
        Self::var(Var::C)
    }

    /// w^{2,j}.
    pub fn w2(j: usize) -> Self {
        Self::var(Var::W2(j))
    }

    /// Component k of w^{1,j}.
    pub fn w1(j: usize, k: usize) -> Self {
        Self::var(Var::W1(j, k))
    }

    /// w^{1,j}·x.
    pub fn dot(j: usize, x: &[f64]) -> Self {
        if x.iter().all(|v| *v == 0.0) {
            return Self::zero();
        }
        Self::make(Kind::Dot { j, x: Arc::from(x) }, 0)
    }

    /// σ^{(order)}(arg).
    pub fn act(act: Activation, order: u32, arg: TestFunction) -> Self {
        if let Some(v) = arg.as_const() {
            return Self::constant(act.deriv(v, order));
        }
        let o = arg.order();
        Self::make(Kind::Act { act, order, arg }, o)
    }

    pub fn sigma(act: Activation, arg: TestFunction) -> Self {
        Self::act(act, 0, arg)
    }

    /// Flattened, like terms combined, constants folded, zeros dropped, sorted by key.
    pub fn sum(items: Vec<TestFunction>) -> Self {
        let level = items.iter().map(TestFunction::order).max().unwrap_or(0);
        let mut constant = 0.0;
        let mut terms: Vec<(f64, TestFunction)> = Vec::new();
        let mut index: HashMap<u128, usize> = HashMap::new();
        let mut push = |coef: f64, base: TestFunction, terms: &mut Vec<(f64, TestFunction)>| {
            if let Some(&i) = index.get(&base.key()) {
                terms[i].0 += coef;
                if base.order() > terms[i].1.order() {
                    terms[i].1 = base;
                }
            } else {
                index.insert(base.key(), terms.len());
                terms.push((coef, base));
            }
        };
        let mut stack: Vec<TestFunction> = items;
        stack.reverse();
        while let Some(item) = stack.pop() {
            match &item.0.kind {
                Kind::Const(v) => constant += v,
                Kind::Sum(children) => stack.extend(children.iter().rev().cloned()),
                _ => {
                    let (coef, base) = item.split_coefficient();
                    push(coef, base, &mut terms);
                }
            }
        }
        let mut parts: Vec<TestFunction> = terms.into_iter().filter(|(c, _)| *c != 0.0).map(|(c, b)| b.scaled_raw(c)).collect();
        if constant != 0.0 {
            parts.push(Self::constant(constant));
        }
        match parts.len() {
            0 => Self::zero(),
            1 => {
                let only = parts.pop().expect("one element");
                if only.as_const().is_some() {
                    only
                } else {
                    only.with_order(level)
                }
            }
            _ => {
                parts.sort_by_key(TestFunction::key);
                Self::make(Kind::Sum(parts), level)
            }
        }
    }

    /// Flattened, constants folded, ones dropped, zero-annihilating, sorted by key.
    pub fn prod(items: Vec<TestFunction>) -> Self {
        let level = items.iter().map(TestFunction::order).max().unwrap_or(0);
        let mut coef = 1.0;
        let mut factors: Vec<TestFunction> = Vec::new();
        let mut stack = items;
        while let Some(item) = stack.pop() {
            match &item.0.kind {
                Kind::Const(v) => coef *= v,
                Kind::Prod(children) => stack.extend(children.iter().cloned()),
                _ => factors.push(item),
            }
        }
        if coef == 0.0 {
            return Self::zero();
        }
        if factors.is_empty() {
            return Self::constant(coef);
        }
        factors.sort_by_key(TestFunction::key);
        let base = if factors.len() == 1 { factors.pop().expect("one element").with_order(level) } else { Self::make(Kind::Prod(factors), level) };
        base.scaled_raw(coef)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::prod(vec![Self::constant(s), self.clone()])
    }

    /// s·base without re-flattening. `base` must not be a constant or carry a coefficient.
    fn scaled_raw(self, s: f64) -> Self {
        if s == 1.0 {
            return self;
        }
        let order = self.order();
        let mut factors = vec![Self::constant(s)];
        match &self.0.kind {
            Kind::Prod(children) => factors.extend(children.iter().cloned()),
            _ => factors.push(self),
        }
        factors.sort_by_key(TestFunction::key);
        Self::make(Kind::Prod(factors), order)
    }

    /// Splits a term into (constant coefficient, non-constant base).
    fn split_coefficient(&self) -> (f64, TestFunction) {
        if let Kind::Prod(children) = &self.0.kind {
            if let Some(pos) = children.iter().position(|c| c.as_const().is_some()) {
                let coef = children[pos].as_const().expect("checked");
                let rest: Vec<TestFunction> = children.iter().enumerate().filter(|(i, _)| *i != pos).map(|(_, c)| c.clone()).collect();
                let base = if rest.len() == 1 { rest[0].clone() } else { Self::make(Kind::Prod(rest), self.order()) };
                return (coef, base);
            }
        }
        (1.0, self.clone())
    }

    pub fn key(&self) -> u128 {
        self.0.key
    }

    /// Derivative level: how many partial derivatives produced this function.
    pub fn order(&self) -> usize {
        self.0.order
    }

    /// Coordinates the function may depend on.
    pub fn deps(&self) -> &[Var] {
        &self.0.deps
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.0.deps.binary_search(&v).is_ok()
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.0.kind {
            Kind::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// The same function tagged with a different derivative level.
    fn with_order(&self, order: usize) -> Self {
        if order == self.order() {
            return self.clone();
        }
        let kind = match &self.0.kind {
            Kind::Const(v) => Kind::Const(*v),
            Kind::Var(v) => Kind::Var(*v),
            Kind::Dot { j, x } => Kind::Dot { j: *j, x: x.clone() },
            Kind::Act { act, order, arg } => Kind::Act { act: *act, order: *order, arg: arg.clone() },
            Kind::Sum(c) => Kind::Sum(c.clone()),
            Kind::Prod(c) => Kind::Prod(c.clone()),
        };
        TestFunction(Arc::new(Node { kind, key: self.0.key, deps: self.0.deps.clone(), order }))
    }

    /// ∂f/∂v. Fails once the derivative level would exceed [`MAX_DERIVATIVE_ORDER`].
    pub fn partial(&self, v: Var) -> Result<TestFunction> {
        let requested = self.order() + 1;
        if requested > MAX_DERIVATIVE_ORDER {
            return Err(Error::DerivativeOrder { requested, cap: MAX_DERIVATIVE_ORDER });
        }
        Ok(self.diff(v).with_order(requested))
    }

    fn diff(&self, v: Var) -> TestFunction {
        if !self.depends_on(v) {
            return Self::zero();
        }
        let memo_key = (self.key(), v);
        if let Some(hit) = MEMO.with(|m| m.borrow().get(&memo_key).cloned()) {
            return hit;
        }
        let out = match &self.0.kind {
            Kind::Const(_) => Self::zero(),
            Kind::Var(u) => Self::constant(if *u == v { 1.0 } else { 0.0 }),
            Kind::Dot { j, x } => match v {
                Var::W1(jj, k) if jj == *j => Self::constant(x[k]),
                _ => Self::zero(),
            },
            Kind::Act { act, order, arg } => {
                let inner = arg.diff(v);
                if inner.is_zero() {
                    Self::zero()
                } else {
                    Self::prod(vec![Self::act(*act, order + 1, arg.clone()), inner])
                }
            }
            Kind::Sum(items) => Self::sum(items.iter().map(|c| c.diff(v)).collect()),
            Kind::Prod(items) => {
                let mut terms = Vec::new();
                for (i, item) in items.iter().enumerate() {
                    let d = item.diff(v);
                    if d.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<TestFunction> = items.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, c)| c.clone()).collect();
                    factors.push(d);
                    terms.push(Self::prod(factors));
                }
                Self::sum(terms)
            }
        };
        MEMO.with(|m| {
            let mut m = m.borrow_mut();
            if m.len() > MEMO_LIMIT {
                m.clear();
            }
            m.insert(memo_key, out.clone());
        });
        out
    }

    /// Direct recursive evaluation on one particle. `w1` is row-major N₁×d.
    pub fn eval(&self, c: f64, w2: &[f64], w1: &[f64]) -> f64 {
        let d = if w2.is_empty() { 0 } else { w1.len() / w2.len() };
        self.eval_rec(c, w2, w1, d)
    }

    fn eval_rec(&self, c: f64, w2: &[f64], w1: &[f64], d: usize) -> f64 {
        match &self.0.kind {
            Kind::Const(v) => *v,
            Kind::Var(Var::C) => c,
            Kind::Var(Var::W2(j)) => w2[*j],
            Kind::Var(Var::W1(j, k)) => w1[j * d + k],
            Kind::Dot { j, x } => w1[j * d..(j + 1) * d].iter().zip(x.iter()).map(|(a, b)| a * b).sum(),
            Kind::Act { act, order, arg } => act.deriv(arg.eval_rec(c, w2, w1, d), *order),
            Kind::Sum(items) => items.iter().map(|i| i.eval_rec(c, w2, w1, d)).sum(),
            Kind::Prod(items) => items.iter().map(|i| i.eval_rec(c, w2, w1, d)).product(),
        }
    }
}

thread_local! {
    static MEMO: RefCell<HashMap<(u128, Var), TestFunction>> = RefCell::new(HashMap::new());
}

impl PartialEq for TestFunction {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for TestFunction {}

impl Hash for TestFunction {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, items: &[TestFunction], sep: &str| -> fmt::Result {
            write!(f, "(")?;
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    write!(f, "{sep}")?;
                }
                write!(f, "{item}")?;
            }
            write!(f, ")")
        };
        match &self.0.kind {
            Kind::Const(v) => write!(f, "{v}"),
            Kind::Var(Var::C) => write!(f, "c"),
            Kind::Var(Var::W2(j)) => write!(f, "w2[{j}]"),
            Kind::Var(Var::W1(j, k)) => write!(f, "w1[{j},{k}]"),
            Kind::Dot { j, x } => write!(f, "<w1[{j}],{x:?}>"),
            Kind::Act { act, order, arg } => write!(f, "{act}^({order})[{arg}]"),
            Kind::Sum(items) => join(f, items, " + "),
            Kind::Prod(items) => join(f, items, " * "),
        }
    }
}

impl Add for TestFunction {
    type Output = TestFunction;
    fn add(self, rhs: TestFunction) -> TestFunction {
        TestFunction::sum(vec![self, rhs])
    }
}

impl Sub for TestFunction {
    type Output = TestFunction;
    fn sub(self, rhs: TestFunction) -> TestFunction {
        TestFunction::sum(vec![self, rhs.scale(-1.0)])
    }
}

impl Mul for TestFunction {
    type Output = TestFunction;
    fn mul(self, rhs: TestFunction) -> TestFunction {
        TestFunction::prod(vec![self, rhs])
    }
}

impl Neg for TestFunction {
    type Output = TestFunction;
    fn neg(self) -> TestFunction {
        self.scale(-1.0)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    C,
    W2(usize),
    W1(usize, usize),
    Dot { j: usize, x: Arc<[f64]> },
    Act { act: Activation, order: u32, arg: usize },
    Sum { start: usize, len: usize },
    Prod { start: usize, len: usize },
}

/// A flattened evaluation program for a list of test functions sharing subexpressions.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    args: Vec<usize>,
    roots: Vec<usize>,
    deps: Vec<Var>,
}

impl Tape {
    pub fn compile(fs: &[TestFunction]) -> Self {
        let mut tape = Tape { ops: Vec::new(), args: Vec::new(), roots: Vec::new(), deps: Vec::new() };
        let mut index: HashMap<u128, usize> = HashMap::new();
        for f in fs {
            let r = tape.emit(f, &mut index);
            tape.roots.push(r);
        }
        tape.deps = merge_deps(fs.iter()).to_vec();
        tape
    }

    fn emit(&mut self, f: &TestFunction, index: &mut HashMap<u128, usize>) -> usize {
        if let Some(&i) = index.get(&f.key()) {
            return i;
        }
        let op = match &f.0.kind {
            Kind::Const(v) => Op::Const(*v),
            Kind::Var(Var::C) => Op::C,
            Kind::Var(Var::W2(j)) => Op::W2(*j),
            Kind::Var(Var::W1(j, k)) => Op::W1(*j, *k),
            Kind::Dot { j, x } => Op::Dot { j: *j, x: x.clone() },
            Kind::Act { act, order, arg } => {
                let a = self.emit(arg, index);
                Op::Act { act: *act, order: *order, arg: a }
            }
            Kind::Sum(items) | Kind::Prod(items) => {
                let children: Vec<usize> = items.iter().map(|c| self.emit(c, index)).collect();
                let start = self.args.len();
                self.args.extend(&children);
                if matches!(f.0.kind, Kind::Sum(_)) {
                    Op::Sum { start, len: children.len() }
                } else {
                    Op::Prod { start, len: children.len() }
                }
            }
        };
        self.ops.push(op);
        let i = self.ops.len() - 1;
        index.insert(f.key(), i);
        i
    }

    pub fn roots(&self) -> usize {
        self.roots.len()
    }

    /// Coordinates any root may depend on.
    pub fn deps(&self) -> &[Var] {
        &self.deps
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.ops.len()]
    }

    /// Evaluates every op; root values are then read with [`Tape::root_values`].
    pub fn run(&self, scratch: &mut [f64], c: f64, w2: &[f64], w1: &[f64]) {
        let d = if w2.is_empty() { 0 } else { w1.len() / w2.len() };
        for (i, op) in self.ops.iter().enumerate() {
            let v = match op {
                Op::Const(v) => *v,
                Op::C => c,
                Op::W2(j) => w2[*j],
                Op::W1(j, k) => w1[j * d + k],
                Op::Dot { j, x } => w1[j * d..(j + 1) * d].iter().zip(x.iter()).map(|(a, b)| a * b).sum(),
                Op::Act { act, order, arg } => act.deriv(scratch[*arg], *order),
                Op::Sum { start, len } => self.args[*start..start + len].iter().map(|&a| scratch[a]).sum(),
                Op::Prod { start, len } => self.args[*start..start + len].iter().map(|&a| scratch[a]).product(),
            };
            scratch[i] = v;
        }
    }

    pub fn root_values<'a>(&'a self, scratch: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.roots.iter().map(move |&r| scratch[r])
    }

    /// Root values at one particle.
    pub fn eval(&self, scratch: &mut [f64], c: f64, w2: &[f64], w1: &[f64]) -> Vec<f64> {
        self.run(scratch, c, w2, w1);
        self.root_values(scratch).collect()
    }
}
