//! Dense, tanh-MLP and LSTM layers with explicit reverse passes.

use ndarray::{s, Array1, Array2, Axis, Zip};

use super::Real;

/// Affine map `y = x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<R> {
    pub weight: Array2<R>,
    pub bias: Array1<R>,
}

impl<R: Real> Dense<R> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((input, output)), bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &Array2<R>) -> Array2<R> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Accumulates parameter gradients into `grad`, returns `dL/dx`.
    pub fn backward(&self, x: &Array2<R>, dy: &Array2<R>, grad: &mut Dense<R>) -> Array2<R> {
        grad.weight += &x.t().dot(dy);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

/// Stack of dense layers, each followed by tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<R> {
    pub layers: Vec<Dense<R>>,
}

pub struct MlpTape<R> {
    /// `activations[0]` is the input, `activations[k+1]` the output of layer `k`.
    activations: Vec<Array2<R>>,
}

impl<R> MlpTape<R> {
    pub fn output(&self) -> &Array2<R> {
        self.activations.last().expect("tape holds the input")
    }
}

impl<R: Real> Mlp<R> {
    pub fn zeros(input: usize, hidden: &[usize]) -> Self {
        let mut prev = input;
        let layers = hidden
            .iter()
            .map(|&h| {
                let d = Dense::zeros(prev, h);
                prev = h;
                d
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input_dim())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim())
    }

    pub fn forward(&self, x: &Array2<R>) -> Array2<R> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h).mapv_into(|v| v.tanh());
        }
        h
    }

    pub fn forward_tape(&self, x: &Array2<R>) -> MlpTape<R> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let h = layer.forward(activations.last().unwrap()).mapv_into(|v| v.tanh());
            activations.push(h);
        }
        MlpTape { activations }
    }

    pub fn backward(&self, tape: &MlpTape<R>, dy: Array2<R>, grad: &mut Mlp<R>) -> Array2<R> {
        let mut delta = dy;
        for (k, layer) in self.layers.iter().enumerate().rev() {
            Zip::from(&mut delta).and(&tape.activations[k + 1]).for_each(|d, &y| *d = *d * (R::one() - y * y));
            delta = layer.backward(&tape.activations[k], &delta, &mut grad.layers[k]);
        }
        delta
    }
}

fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

/// LSTM cell; gate blocks ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<R> {
    pub w_input: Array2<R>,
    pub w_hidden: Array2<R>,
    pub bias: Array1<R>,
}

/// Hidden and cell state, one row per (environment, robot).
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState<R> {
    pub h: Array2<R>,
    pub c: Array2<R>,
}

impl<R: Real> RecurrentState<R> {
    pub fn zeros(rows: usize, width: usize) -> Self {
        Self { h: Array2::zeros((rows, width)), c: Array2::zeros((rows, width)) }
    }

    pub fn rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn reset_row(&mut self, row: usize) {
        self.h.row_mut(row).fill(R::zero());
        self.c.row_mut(row).fill(R::zero());
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { h: self.h.select(Axis(0), rows), c: self.c.select(Axis(0), rows) }
    }
}

struct LstmStepCache<R> {
    h_prev: Array2<R>,
    c_prev: Array2<R>,
    /// Activated gates `[i, f, g, o]`, `B × 4H`.
    gates: Array2<R>,
    c_tanh: Array2<R>,
}

pub struct LstmTape<R> {
    steps: Vec<LstmStepCache<R>>,
    resets: Vec<Vec<bool>>,
    input_proj_rows: usize,
}

impl<R: Real> Lstm<R> {
    pub fn zeros(input: usize, width: usize) -> Self {
        Self {
            w_input: Array2::zeros((input, 4 * width)),
            w_hidden: Array2::zeros((width, 4 * width)),
            bias: Array1::zeros(4 * width),
        }
    }

    pub fn width(&self) -> usize {
        self.w_hidden.nrows()
    }

    fn activate(&self, pre: Array2<R>, c_prev: &Array2<R>) -> (Array2<R>, Array2<R>, Array2<R>, Array2<R>) {
        let hw = self.width();
        let mut gates = pre;
        gates.slice_mut(s![.., 0..2 * hw]).mapv_inplace(sigmoid);
        gates.slice_mut(s![.., 2 * hw..3 * hw]).mapv_inplace(|v| v.tanh());
        gates.slice_mut(s![.., 3 * hw..]).mapv_inplace(sigmoid);
        let i = gates.slice(s![.., 0..hw]);
        let f = gates.slice(s![.., hw..2 * hw]);
        let g = gates.slice(s![.., 2 * hw..3 * hw]);
        let o = gates.slice(s![.., 3 * hw..]);
        let c = &f * c_prev + &i * &g;
        let c_tanh = c.mapv(|v| v.tanh());
        let h = &o * &c_tanh;
        (gates, c, c_tanh, h)
    }

    /// One step for a batch of rows.
    pub fn step(&self, x: &Array2<R>, state: &RecurrentState<R>) -> RecurrentState<R> {
        let mut pre = x.dot(&self.w_input) + state.h.dot(&self.w_hidden);
        pre += &self.bias;
        let (_, c, _, h) = self.activate(pre, &state.c);
        RecurrentState { h, c }
    }

    /// Runs `L` steps over `B` sequences. `xs` is time-major (`L·B` rows,
    /// row `t·B + b`); `resets[t][b]` zeroes that sequence's state before step
    /// `t`. Returns hidden outputs in the same row order.
    pub fn forward_seq(
        &self,
        xs: &Array2<R>,
        init: &RecurrentState<R>,
        resets: &[Vec<bool>],
    ) -> (Array2<R>, LstmTape<R>) {
        let b = init.rows();
        let steps = resets.len();
        let hw = self.width();
        let mut proj = xs.dot(&self.w_input);
        proj += &self.bias;
        let mut h = init.h.clone();
        let mut c = init.c.clone();
        let mut outputs = Array2::zeros((steps * b, hw));
        let mut caches = Vec::with_capacity(steps);
        for t in 0..steps {
            for (row, &reset) in resets[t].iter().enumerate() {
                if reset {
                    h.row_mut(row).fill(R::zero());
                    c.row_mut(row).fill(R::zero());
                }
            }
            let pre = proj.slice(s![t * b..(t + 1) * b, ..]).to_owned() + h.dot(&self.w_hidden);
            let (gates, c_new, c_tanh, h_new) = self.activate(pre, &c);
            outputs.slice_mut(s![t * b..(t + 1) * b, ..]).assign(&h_new);
            caches.push(LstmStepCache { h_prev: h, c_prev: c, gates, c_tanh });
            h = h_new;
            c = c_new;
        }
        (outputs, LstmTape { steps: caches, resets: resets.to_vec(), input_proj_rows: steps * b })
    }

    /// Back-propagation through time. `dh_out` matches the row layout of the
    /// forward outputs. Returns `dL/dxs`.
    pub fn backward_seq(&self, xs: &Array2<R>, tape: &LstmTape<R>, dh_out: &Array2<R>, grad: &mut Lstm<R>) -> Array2<R> {
        let steps = tape.steps.len();
        let hw = self.width();
        let b = if steps == 0 { 0 } else { tape.input_proj_rows / steps };
        let mut dpre_all = Array2::<R>::zeros((steps * b, 4 * hw));
        let mut dh_next = Array2::<R>::zeros((b, hw));
        let mut dc_next = Array2::<R>::zeros((b, hw));
        for t in (0..steps).rev() {
            let cache = &tape.steps[t];
            let dh = &dh_out.slice(s![t * b..(t + 1) * b, ..]) + &dh_next;
            let i = cache.gates.slice(s![.., 0..hw]);
            let f = cache.gates.slice(s![.., hw..2 * hw]);
            let g = cache.gates.slice(s![.., 2 * hw..3 * hw]);
            let o = cache.gates.slice(s![.., 3 * hw..]);
            let one = R::one();
            let dc = &dc_next + &(&dh * &o * &cache.c_tanh.mapv(|v| one - v * v));
            let mut dpre = dpre_all.slice_mut(s![t * b..(t + 1) * b, ..]);
            // Pre-activation gradients of each gate.
            Zip::from(dpre.slice_mut(s![.., 0..hw])).and(&dc).and(&g).and(&i).for_each(|d, &dc, &g, &i| {
                *d = dc * g * i * (one - i);
            });
            Zip::from(dpre.slice_mut(s![.., hw..2 * hw])).and(&dc).and(&cache.c_prev).and(&f).for_each(
                |d, &dc, &cp, &f| {
                    *d = dc * cp * f * (one - f);
                },
            );
            Zip::from(dpre.slice_mut(s![.., 2 * hw..3 * hw])).and(&dc).and(&i).and(&g).for_each(|d, &dc, &i, &g| {
                *d = dc * i * (one - g * g);
            });
            Zip::from(dpre.slice_mut(s![.., 3 * hw..])).and(&dh).and(&cache.c_tanh).and(&o).for_each(
                |d, &dh, &ct, &o| {
                    *d = dh * ct * o * (one - o);
                },
            );
            let dpre = dpre.to_owned();
            grad.w_hidden += &cache.h_prev.t().dot(&dpre);
            dh_next = dpre.dot(&self.w_hidden.t());
            dc_next = &dc * &f;
            for (row, &reset) in tape.resets[t].iter().enumerate() {
                if reset {
                    dh_next.row_mut(row).fill(R::zero());
                    dc_next.row_mut(row).fill(R::zero());
                }
            }
        }
        grad.w_input += &xs.t().dot(&dpre_all);
        grad.bias += &dpre_all.sum_axis(Axis(0));
        dpre_all.dot(&self.w_input.t())
    }
}
