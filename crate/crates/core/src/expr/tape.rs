//! Flat instruction tapes with common subexpressions merged.

use std::collections::HashMap;
use std::sync::Arc;

use super::jet::{Jet, JetSpace};
use super::{apply_func, excerpt, EvalError, Expr, Func, Node};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Instr {
    Const(f64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    PowI(usize, i32),
    PowF(usize, f64),
    Pow(usize, usize),
    Call(Func, usize),
}

#[derive(Hash, PartialEq, Eq)]
enum Key {
    Const(u64),
    Var(usize),
    Neg(usize),
    Bin(u8, usize, usize),
    PowI(usize, i32),
    PowF(usize, u64),
    Call(Func, usize),
}

/// A batch of expressions compiled for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Tape {
    instrs: Vec<Instr>,
    sources: Vec<Expr>,
    outputs: Vec<usize>,
    arity: usize,
}

struct Builder {
    instrs: Vec<Instr>,
    sources: Vec<Expr>,
    by_ptr: HashMap<usize, usize>,
    by_key: HashMap<Key, usize>,
}

impl Builder {
    fn push(&mut self, key: Key, instr: Instr, source: &Expr) -> usize {
        if let Some(&slot) = self.by_key.get(&key) {
            return slot;
        }
        let slot = self.instrs.len();
        self.instrs.push(instr);
        self.sources.push(source.clone());
        self.by_key.insert(key, slot);
        slot
    }

    fn lower(&mut self, root: &Expr) -> usize {
        // Iterative post-order so deep trees do not overflow the stack.
        let mut stack: Vec<(Expr, bool)> = vec![(root.clone(), false)];
        while let Some((e, expanded)) = stack.pop() {
            let ptr = Arc::as_ptr(&e.0) as usize;
            if self.by_ptr.contains_key(&ptr) {
                continue;
            }
            if !expanded {
                stack.push((e.clone(), true));
                e.for_each_child(|c| {
                    if !self.by_ptr.contains_key(&(Arc::as_ptr(&c.0) as usize)) {
                        stack.push((c.clone(), false));
                    }
                });
                continue;
            }
            let slot_of = |b: &Builder, c: &Expr| b.by_ptr[&(Arc::as_ptr(&c.0) as usize)];
            let slot = match e.node() {
                Node::Const(c) => self.push(Key::Const(c.to_bits()), Instr::Const(*c), &e),
                Node::Var(i) => self.push(Key::Var(*i), Instr::Var(*i), &e),
                Node::Neg(a) => {
                    let a = slot_of(self, a);
                    self.push(Key::Neg(a), Instr::Neg(a), &e)
                }
                Node::Add(a, b) => {
                    let (a, b) = (slot_of(self, a), slot_of(self, b));
                    let (lo, hi) = (a.min(b), a.max(b));
                    self.push(Key::Bin(0, lo, hi), Instr::Add(lo, hi), &e)
                }
                Node::Sub(a, b) => {
                    let (a, b) = (slot_of(self, a), slot_of(self, b));
                    self.push(Key::Bin(1, a, b), Instr::Sub(a, b), &e)
                }
                Node::Mul(a, b) => {
                    let (a, b) = (slot_of(self, a), slot_of(self, b));
                    let (lo, hi) = (a.min(b), a.max(b));
                    self.push(Key::Bin(2, lo, hi), Instr::Mul(lo, hi), &e)
                }
                Node::Div(a, b) => {
                    let (a, b) = (slot_of(self, a), slot_of(self, b));
                    self.push(Key::Bin(3, a, b), Instr::Div(a, b), &e)
                }
                Node::Pow(a, b) => {
                    let sa = slot_of(self, a);
                    match b.as_const() {
                        Some(c) if c.fract() == 0.0 && c.abs() <= 1024.0 => {
                            let n = c as i32;
                            self.push(Key::PowI(sa, n), Instr::PowI(sa, n), &e)
                        }
                        Some(c) => self.push(Key::PowF(sa, c.to_bits()), Instr::PowF(sa, c), &e),
                        None => {
                            let sb = slot_of(self, b);
                            self.push(Key::Bin(4, sa, sb), Instr::Pow(sa, sb), &e)
                        }
                    }
                }
                Node::Call(f, a) => {
                    let a = slot_of(self, a);
                    self.push(Key::Call(*f, a), Instr::Call(*f, a), &e)
                }
            };
            self.by_ptr.insert(ptr, slot);
        }
        self.by_ptr[&(Arc::as_ptr(&root.0) as usize)]
    }
}

impl Tape {
    pub fn compile(exprs: &[Expr]) -> Tape {
        let mut b = Builder {
            instrs: Vec::new(),
            sources: Vec::new(),
            by_ptr: HashMap::new(),
            by_key: HashMap::new(),
        };
        let outputs = exprs.iter().map(|e| b.lower(e)).collect();
        let arity = exprs.iter().map(Expr::arity).max().unwrap_or(0);
        Tape {
            instrs: b.instrs,
            sources: b.sources,
            outputs,
            arity,
        }
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Number of coordinates the tape reads.
    pub fn arity(&self) -> usize {
        self.arity
    }

    fn err_div(&self, slot: usize) -> EvalError {
        EvalError::DivisionByZero {
            subtree: excerpt(&self.sources[slot]),
        }
    }

    fn err_domain(&self, slot: usize, op: &'static str, arg: f64) -> EvalError {
        EvalError::Domain {
            op,
            arg,
            subtree: excerpt(&self.sources[slot]),
        }
    }

    /// Evaluate every output at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        if x.len() < self.arity {
            return Err(EvalError::MissingCoordinate {
                index: self.arity,
                dim: x.len(),
            });
        }
        let mut v = vec![0.0; self.instrs.len()];
        for (slot, instr) in self.instrs.iter().enumerate() {
            let value = match *instr {
                Instr::Const(c) => c,
                Instr::Var(i) => x[i],
                Instr::Neg(a) => -v[a],
                Instr::Add(a, b) => v[a] + v[b],
                Instr::Sub(a, b) => v[a] - v[b],
                Instr::Mul(a, b) => v[a] * v[b],
                Instr::Div(a, b) => {
                    if v[b] == 0.0 {
                        return Err(self.err_div(slot));
                    }
                    v[a] / v[b]
                }
                Instr::PowI(a, n) => {
                    if n < 0 && v[a] == 0.0 {
                        return Err(self.err_div(slot));
                    }
                    v[a].powi(n)
                }
                Instr::PowF(a, p) => {
                    if v[a] < 0.0 {
                        return Err(self.err_domain(slot, "^", v[a]));
                    }
                    if v[a] == 0.0 && p < 0.0 {
                        return Err(self.err_div(slot));
                    }
                    v[a].powf(p)
                }
                Instr::Pow(a, b) => {
                    if v[a] > 0.0 {
                        (v[b] * v[a].ln()).exp()
                    } else if v[a] == 0.0 && v[b] > 0.0 {
                        0.0
                    } else {
                        return Err(self.err_domain(slot, "^", v[a]));
                    }
                }
                Instr::Call(f, a) => {
                    apply_func(f, v[a]).map_err(|op| self.err_domain(slot, op, v[a]))?
                }
            };
            if !value.is_finite() {
                return Err(EvalError::NonFinite {
                    subtree: excerpt(&self.sources[slot]),
                });
            }
            v[slot] = value;
        }
        Ok(self.outputs.iter().map(|&o| v[o]).collect())
    }

    /// Evaluate every output as a truncated Taylor series around `x0`.
    pub fn eval_jet(&self, space: &JetSpace, x0: &[f64]) -> Result<Vec<Jet>, EvalError> {
        if x0.len() < self.arity {
            return Err(EvalError::MissingCoordinate {
                index: self.arity,
                dim: x0.len(),
            });
        }
        let mut v: Vec<Jet> = Vec::with_capacity(self.instrs.len());
        for (slot, instr) in self.instrs.iter().enumerate() {
            let value = match *instr {
                Instr::Const(c) => space.constant(c),
                Instr::Var(i) => {
                    if i < space.nvars() {
                        space.variable(i, x0[i])
                    } else {
                        space.constant(x0[i])
                    }
                }
                Instr::Neg(a) => v[a].neg(),
                Instr::Add(a, b) => v[a].add(&v[b]),
                Instr::Sub(a, b) => v[a].sub(&v[b]),
                Instr::Mul(a, b) => space.mul(&v[a], &v[b]),
                Instr::Div(a, b) => {
                    if v[b].value() == 0.0 {
                        return Err(self.err_div(slot));
                    }
                    space.mul(&v[a], &space.recip(&v[b]))
                }
                Instr::PowI(a, n) => {
                    if n < 0 && v[a].value() == 0.0 {
                        return Err(self.err_div(slot));
                    }
                    space.powi(&v[a], n as i64)
                }
                Instr::PowF(a, p) => {
                    if v[a].value() <= 0.0 {
                        return Err(self.err_domain(slot, "^", v[a].value()));
                    }
                    space.powf(&v[a], p)
                }
                Instr::Pow(a, b) => {
                    if v[a].value() <= 0.0 {
                        return Err(self.err_domain(slot, "^", v[a].value()));
                    }
                    let log_a = space.ln(&v[a]);
                    space.exp(&space.mul(&v[b], &log_a))
                }
                Instr::Call(f, a) => {
                    let a0 = v[a].value();
                    match f {
                        Func::Exp => space.exp(&v[a]),
                        Func::Log if a0 > 0.0 => space.ln(&v[a]),
                        Func::Sin => space.sin(&v[a]),
                        Func::Cos => space.cos(&v[a]),
                        Func::Sqrt if a0 > 0.0 => space.powf(&v[a], 0.5),
                        _ => return Err(self.err_domain(slot, f.name(), a0)),
                    }
                }
            };
            if value.c.iter().any(|c| !c.is_finite()) {
                return Err(EvalError::NonFinite {
                    subtree: excerpt(&self.sources[slot]),
                });
            }
            v.push(value);
        }
        Ok(self.outputs.iter().map(|&o| v[o].clone()).collect())
    }
}
