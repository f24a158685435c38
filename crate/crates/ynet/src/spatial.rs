//! Dynamic graph convolution: an EvolveGCN branch whose weight matrix is
//! carried through time by a matrix GRU, plus a bidirectional diffusion
//! branch over forward/backward transition matrices.

use dan_tensor::{Activation, ParamId, ParamStore, Tape, Tensor, Var};

use crate::error::{shape_mismatch, Result};
use crate::init::Initializer;

/// GRU over a `(rows, cols)` weight matrix where the previous weight is both
/// the input and the hidden state:
///
/// ```text
/// z  = sigmoid(Wz h + Uz h + Bz)
/// r  = sigmoid(Wr h + Ur h + Br)
/// h~ = tanh(Wh h + Uh (r ⊙ h) + Bh)
/// h' = h + z ⊙ (h~ - h)
/// ```
#[derive(Debug, Clone)]
pub struct MatrixGru {
    pub w_update: ParamId,
    pub u_update: ParamId,
    pub b_update: ParamId,
    pub w_reset: ParamId,
    pub u_reset: ParamId,
    pub b_reset: ParamId,
    pub w_candidate: ParamId,
    pub u_candidate: ParamId,
    pub b_candidate: ParamId,
}

impl MatrixGru {
    pub fn new(store: &mut ParamStore, name: &str, rows: usize, cols: usize, init: &mut Initializer) -> Self {
        let mut sq = |store: &mut ParamStore, tag: &str| {
            store.add(format!("{name}.{tag}"), init.uniform(&[rows, rows], rows))
        };
        let w_update = sq(store, "w_update");
        let u_update = sq(store, "u_update");
        let w_reset = sq(store, "w_reset");
        let u_reset = sq(store, "u_reset");
        let w_candidate = sq(store, "w_candidate");
        let u_candidate = sq(store, "u_candidate");
        let zero = || Tensor::zeros(&[rows, cols]);
        Self {
            w_update,
            u_update,
            b_update: store.add(format!("{name}.b_update"), zero()),
            w_reset,
            u_reset,
            b_reset: store.add(format!("{name}.b_reset"), zero()),
            w_candidate,
            u_candidate,
            b_candidate: store.add(format!("{name}.b_candidate"), zero()),
        }
    }

    fn gate(store: &ParamStore, tape: &mut Tape, x: Var, h: Var, (w, u, b): (ParamId, ParamId, ParamId)) -> Result<Var> {
        let w = tape.param(store, w);
        let u = tape.param(store, u);
        let b = tape.param(store, b);
        let wx = tape.matmul(w, x)?;
        let uh = tape.matmul(u, h)?;
        let s = tape.add(wx, uh)?;
        Ok(tape.add(s, b)?)
    }

    pub fn step(&self, store: &ParamStore, tape: &mut Tape, h: Var) -> Result<Var> {
        let z = Self::gate(store, tape, h, h, (self.w_update, self.u_update, self.b_update))?;
        let z = tape.sigmoid(z);
        let r = Self::gate(store, tape, h, h, (self.w_reset, self.u_reset, self.b_reset))?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h)?;
        let cand = Self::gate(store, tape, h, rh, (self.w_candidate, self.u_candidate, self.b_candidate))?;
        let cand = tape.tanh(cand);
        let delta = tape.sub(cand, h)?;
        let delta = tape.mul(z, delta)?;
        Ok(tape.add(h, delta)?)
    }

    /// Sets the update gate shut so every step returns its input unchanged.
    pub fn freeze(&self, store: &mut ParamStore) {
        let rows = store.value(self.w_update).shape()[0];
        let cols = store.value(self.b_update).shape()[1];
        store.set_value(self.w_update, Tensor::zeros(&[rows, rows]));
        store.set_value(self.u_update, Tensor::zeros(&[rows, rows]));
        store.set_value(self.b_update, Tensor::full(&[rows, cols], -1.0e3));
    }
}

/// `x_t' = act(Ã_t x_t w_t)` with `w_1` learned and `w_{t+1} = GRU(w_t)`.
#[derive(Debug, Clone)]
pub struct EvolveGcn {
    pub initial_weight: ParamId,
    pub gru: MatrixGru,
    pub activation: Activation,
}

impl EvolveGcn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        init: &mut Initializer,
    ) -> Self {
        Self {
            initial_weight: store.add(format!("{name}.w1"), init.uniform(&[input, output], input)),
            gru: MatrixGru::new(store, &format!("{name}.gru"), input, output, init),
            activation,
        }
    }

    /// `x` is `(T, N, C)` and `normalized[t]` is `Ã_t`; output `(T, N, C')`.
    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, normalized: &[Var]) -> Result<Var> {
        let t = tape.shape(x)[0];
        if normalized.len() != t {
            return Err(shape_mismatch("evolve_gcn snapshots", &[t], &[normalized.len()]));
        }
        let mut w = tape.param(store, self.initial_weight);
        let mut outs = Vec::with_capacity(t);
        for (step, &adj) in normalized.iter().enumerate() {
            if step > 0 {
                w = self.gru.step(store, tape, w)?;
            }
            let xt = tape.select(x, step)?;
            let ax = tape.matmul(adj, xt)?;
            let axw = tape.matmul(ax, w)?;
            outs.push(tape.activate(axw, self.activation));
        }
        Ok(tape.stack(&outs)?)
    }
}

/// `sum_{k=0}^{K} (P_f^k x W_{k,1} + P_b^k x W_{k,2})` per snapshot.
#[derive(Debug, Clone)]
pub struct Diffusion {
    /// `(forward, backward)` weight pair for each power `k = 0..=K`.
    pub weights: Vec<(ParamId, ParamId)>,
}

impl Diffusion {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, steps: usize, init: &mut Initializer) -> Self {
        let weights = (0..=steps)
            .map(|k| {
                let f = store.add(format!("{name}.fwd{k}"), init.uniform(&[input, output], input));
                let b = store.add(format!("{name}.bwd{k}"), init.uniform(&[input, output], input));
                (f, b)
            })
            .collect();
        Self { weights }
    }

    pub fn steps(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn forward_snapshot(&self, store: &ParamStore, tape: &mut Tape, x: Var, pf: Var, pb: Var) -> Result<Var> {
        let (mut zf, mut zb) = (x, x);
        let mut acc: Option<Var> = None;
        for (k, &(wf, wb)) in self.weights.iter().enumerate() {
            if k > 0 {
                zf = tape.matmul(pf, zf)?;
                zb = tape.matmul(pb, zb)?;
            }
            let wf = tape.param(store, wf);
            let wb = tape.param(store, wb);
            let tf = tape.matmul(zf, wf)?;
            let tb = tape.matmul(zb, wb)?;
            let term = tape.add(tf, tb)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, term)?,
                None => term,
            });
        }
        Ok(acc.expect("at least the k = 0 term"))
    }
}

/// Sum of the EvolveGCN and diffusion branches.
#[derive(Debug, Clone)]
pub struct Dgcn {
    pub evolve: EvolveGcn,
    pub diffusion: Diffusion,
}

/// Per-snapshot operators derived from a `(T, N, N)` adjacency stream.
pub struct SnapshotOperators {
    pub normalized: Vec<Var>,
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
}

impl SnapshotOperators {
    pub fn build(tape: &mut Tape, a: Var) -> Result<Self> {
        let t = tape.shape(a)[0];
        let mut ops = Self {
            normalized: Vec::with_capacity(t),
            forward: Vec::with_capacity(t),
            backward: Vec::with_capacity(t),
        };
        for step in 0..t {
            let at = tape.select(a, step)?;
            ops.normalized.push(tape.normalize_adjacency(at)?);
            ops.forward.push(tape.row_normalize(at)?);
            let att = tape.transpose(at)?;
            ops.backward.push(tape.row_normalize(att)?);
        }
        Ok(ops)
    }
}

impl Dgcn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        diffusion_steps: usize,
        activation: Activation,
        init: &mut Initializer,
    ) -> Self {
        Self {
            evolve: EvolveGcn::new(store, &format!("{name}.evolve"), input, output, activation, init),
            diffusion: Diffusion::new(store, &format!("{name}.diffusion"), input, output, diffusion_steps, init),
        }
    }

    pub fn diffusion_branch(&self, store: &ParamStore, tape: &mut Tape, x: Var, ops: &SnapshotOperators) -> Result<Var> {
        let t = tape.shape(x)[0];
        let mut outs = Vec::with_capacity(t);
        for step in 0..t {
            let xt = tape.select(x, step)?;
            outs.push(
                self.diffusion
                    .forward_snapshot(store, tape, xt, ops.forward[step], ops.backward[step])?,
            );
        }
        Ok(tape.stack(&outs)?)
    }

    /// `x` is `(T, N, C)`, `a` is `(T, N, N)` with nonnegative entries.
    pub fn forward(&self, store: &ParamStore, tape: &mut Tape, x: Var, a: Var) -> Result<Var> {
        let (xs, as_) = (tape.shape(x).to_vec(), tape.shape(a).to_vec());
        if xs.len() != 3 || as_.len() != 3 || xs[0] != as_[0] || xs[1] != as_[1] || as_[1] != as_[2] {
            return Err(shape_mismatch("dgcn inputs", &xs, &as_));
        }
        let ops = SnapshotOperators::build(tape, a)?;
        let evolved = self.evolve.forward(store, tape, x, &ops.normalized)?;
        let diffused = self.diffusion_branch(store, tape, x, &ops)?;
        Ok(tape.add(evolved, diffused)?)
    }

    pub fn apply(&self, store: &ParamStore, x: &Tensor, a: &Tensor) -> Result<Tensor> {
        crate::graph::check_nonnegative(a)?;
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let av = tape.constant(a.clone());
        let y = self.forward(store, &mut tape, xv, av)?;
        Ok(tape.value(y).clone())
    }
}
