//! LSTM cells on the tape.
//!
//! One step, with `z = W [x; h] + b` split into four blocks of size `H`:
//!
//! ```text
//! i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! ```
//!
//! The forget-gate bias starts at 1, everything else uniform in ±0.1 with
//! zero biases.

use crate::rng::SplitMix64;

use super::params::{Init, ParamId, ParameterStore};
use super::tape::{Graph, Var};

pub const INIT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParameterStore, name: &str, input: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        let w = store.add(&format!("{name}.w"), 4 * hidden, input + hidden, Init::Uniform(INIT_SCALE), rng);
        let b = store.add(&format!("{name}.b"), 4 * hidden, 1, Init::Zeros, rng);
        store.get_mut(b).data[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        Self { w, b, input, hidden }
    }

    pub fn zeros<'g>(&self, g: &'g Graph<'g>) -> (Var<'g>, Var<'g>) {
        (g.constant(vec![0.0; self.hidden]), g.constant(vec![0.0; self.hidden]))
    }

    /// Returns the new `(h, c)`.
    pub fn step<'g>(&self, g: &'g Graph<'g>, x: Var<'g>, h: Var<'g>, c: Var<'g>) -> (Var<'g>, Var<'g>) {
        let n = self.hidden;
        let z = g.affine(self.w, Some(self.b), g.concat(&[x, h]));
        let i = z.slice(0, n).sigmoid();
        let f = z.slice(n, n).sigmoid();
        let gg = z.slice(2 * n, n).tanh();
        let o = z.slice(3 * n, n).sigmoid();
        let c2 = f.mul(c).add(i.mul(gg));
        (o.mul(c2.tanh()), c2)
    }
}

/// A single-layer bidirectional LSTM.
#[derive(Clone, Copy, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

/// Per-position `[h_fwd; h_bwd]` plus the two final states.
pub struct BiOutput<'g> {
    pub states: Vec<Var<'g>>,
    pub fwd: Vec<Var<'g>>,
    pub bwd: Vec<Var<'g>>,
}

impl BiLstm {
    pub fn new(store: &mut ParameterStore, name: &str, input: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        Self {
            fwd: Lstm::new(store, &format!("{name}.fwd"), input, hidden, rng),
            bwd: Lstm::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn run<'g>(&self, g: &'g Graph<'g>, xs: &[Var<'g>]) -> BiOutput<'g> {
        let (mut h, mut c) = self.fwd.zeros(g);
        let mut fwd = Vec::with_capacity(xs.len());
        for x in xs {
            (h, c) = self.fwd.step(g, *x, h, c);
            fwd.push(h);
        }
        let (mut h, mut c) = self.bwd.zeros(g);
        let mut bwd = vec![h; xs.len()];
        for (t, x) in xs.iter().enumerate().rev() {
            (h, c) = self.bwd.step(g, *x, h, c);
            bwd[t] = h;
        }
        let states = fwd.iter().zip(&bwd).map(|(a, b)| g.concat(&[*a, *b])).collect();
        BiOutput { states, fwd, bwd }
    }
}
