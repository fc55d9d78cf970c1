//! Actor and critic networks and their parameter set.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dist::{distribution, ActionDistribution, HeadKind};
use super::layers::{Dense, Lstm, LstmTape, Mlp, MlpTape, RecurrentState};
use super::{check_dim, NetError, Real};

/// Shapes and input layouts of all four networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub hidden: Vec<usize>,
    pub lstm_width: usize,
    pub hi_input_dim: usize,
    pub hi_input_tag: String,
    pub hi_head: HeadKind,
    pub lo_input_dim: usize,
    pub lo_input_tag: String,
    pub hi_critic_input_dim: usize,
    pub hi_critic_tag: String,
    pub lo_critic_input_dim: usize,
    pub lo_critic_tag: String,
}

/// Named flat access to parameter tensors, in a fixed order.
pub trait Tensors<R> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [R])>);
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [R]>);

    fn tensors(&self) -> Vec<(String, Vec<usize>, &[R])> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [R]> {
        let mut out = Vec::new();
        self.collect_mut(&mut out);
        out
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<R: Real> Tensors<R> for Dense<R> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [R])>) {
        out.push((join(prefix, "weight"), self.weight.shape().to_vec(), self.weight.as_slice().unwrap()));
        out.push((join(prefix, "bias"), self.bias.shape().to_vec(), self.bias.as_slice().unwrap()));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [R]>) {
        out.push(self.weight.as_slice_mut().unwrap());
        out.push(self.bias.as_slice_mut().unwrap());
    }
}

impl<R: Real> Tensors<R> for Mlp<R> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [R])>) {
        for (k, layer) in self.layers.iter().enumerate() {
            layer.collect(&join(prefix, &k.to_string()), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [R]>) {
        for layer in &mut self.layers {
            layer.collect_mut(out);
        }
    }
}

impl<R: Real> Tensors<R> for Lstm<R> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [R])>) {
        out.push((join(prefix, "w_input"), self.w_input.shape().to_vec(), self.w_input.as_slice().unwrap()));
        out.push((join(prefix, "w_hidden"), self.w_hidden.shape().to_vec(), self.w_hidden.as_slice().unwrap()));
        out.push((join(prefix, "bias"), self.bias.shape().to_vec(), self.bias.as_slice().unwrap()));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [R]>) {
        out.push(self.w_input.as_slice_mut().unwrap());
        out.push(self.w_hidden.as_slice_mut().unwrap());
        out.push(self.bias.as_slice_mut().unwrap());
    }
}

/// Task-allocation actor: tanh trunk, LSTM cell, logits head.
#[derive(Debug, Clone, PartialEq)]
pub struct HiActor<R> {
    pub trunk: Mlp<R>,
    pub lstm: Lstm<R>,
    pub head: Dense<R>,
    pub kind: HeadKind,
}

pub struct HiTape<R> {
    trunk: MlpTape<R>,
    lstm: LstmTape<R>,
    lstm_out: Array2<R>,
}

impl<R: Real> HiActor<R> {
    pub fn zeros(input: usize, hidden: &[usize], width: usize, kind: HeadKind) -> Self {
        let trunk = Mlp::zeros(input, hidden);
        let lstm = Lstm::zeros(trunk.output_dim(), width);
        Self { trunk, lstm, head: Dense::zeros(width, kind.logits()), kind }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn width(&self) -> usize {
        self.lstm.width()
    }

    /// One decision step for a batch of rows.
    pub fn step(&self, x: &Array2<R>, state: &RecurrentState<R>) -> Result<(Array2<R>, RecurrentState<R>), NetError> {
        check_dim("task-allocation actor", self.input_dim(), x.ncols())?;
        check_dim("recurrent state rows", x.nrows(), state.rows())?;
        let features = self.trunk.forward(x);
        let next = self.lstm.step(&features, state);
        Ok((self.head.forward(&next.h), next))
    }

    /// Sequence forward for training; see [`Lstm::forward_seq`] for the row
    /// layout.
    pub fn forward_train(&self, xs: &Array2<R>, init: &RecurrentState<R>, resets: &[Vec<bool>]) -> (Array2<R>, HiTape<R>) {
        let trunk = self.trunk.forward_tape(xs);
        let (lstm_out, lstm) = self.lstm.forward_seq(trunk.output(), init, resets);
        let logits = self.head.forward(&lstm_out);
        (logits, HiTape { trunk, lstm, lstm_out })
    }

    pub fn backward(&self, tape: &HiTape<R>, d_logits: &Array2<R>) -> HiActor<R> {
        let mut grad = self.zeros_like();
        let d_h = self.head.backward(&tape.lstm_out, d_logits, &mut grad.head);
        let d_features = self.lstm.backward_seq(tape.trunk.output(), &tape.lstm, &d_h, &mut grad.lstm);
        self.trunk.backward(&tape.trunk, d_features, &mut grad.trunk);
        grad
    }

    pub fn zeros_like(&self) -> Self {
        let hidden: Vec<usize> = self.trunk.layers.iter().map(|l| l.output_dim()).collect();
        Self::zeros(self.input_dim(), &hidden, self.width(), self.kind)
    }
}

impl<R: Real> Tensors<R> for HiActor<R> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [R])>) {
        self.trunk.collect(&join(prefix, "trunk"), out);
        self.lstm.collect(&join(prefix, "lstm"), out);
        self.head.collect(&join(prefix, "head"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [R]>) {
        self.trunk.collect_mut(out);
        self.lstm.collect_mut(out);
        self.head.collect_mut(out);
    }
}

/// Robot-control actor: tanh trunk and a move/turn head.
#[derive(Debug, Clone, PartialEq)]
pub struct LoActor<R> {
    pub trunk: Mlp<R>,
    pub head: Dense<R>,
}

pub struct LoTape<R> {
    trunk: MlpTape<R>,
}

impl<R: Real> LoActor<R> {
    pub fn zeros(input: usize, hidden: &[usize]) -> Self {
        let trunk = Mlp::zeros(input, hidden);
        let head = Dense::zeros(trunk.output_dim(), HeadKind::MoveTurn.logits());
        Self { trunk, head }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn logits(&self, x: &Array2<R>) -> Result<Array2<R>, NetError> {
        check_dim("robot-control actor", self.input_dim(), x.ncols())?;
        Ok(self.head.forward(&self.trunk.forward(x)))
    }

    pub fn forward_train(&self, x: &Array2<R>) -> (Array2<R>, LoTape<R>) {
        let trunk = self.trunk.forward_tape(x);
        let logits = self.head.forward(trunk.output());
        (logits, LoTape { trunk })
    }

    pub fn backward(&self, tape: &LoTape<R>, d_logits: &Array2<R>) -> LoActor<R> {
        let hidden: Vec<usize> = self.trunk.layers.iter().map(|l| l.output_dim()).collect();
        let mut grad = LoActor::zeros(self.input_dim(), &hidden);
        let d_features = self.head.backward(tape.trunk.output(), d_logits, &mut grad.head);
        self.trunk.backward(&tape.trunk, d_features, &mut grad.trunk);
        grad
    }
}

impl<R: Real> Tensors<R> for LoActor<R> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [R])>) {
        self.trunk.collect(&join(prefix, "trunk"), out);
        self.head.collect(&join(prefix, "head"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [R]>) {
        self.trunk.collect_mut(out);
        self.head.collect_mut(out);
    }
}

/// State-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic<R> {
    pub trunk: Mlp<R>,
    pub head: Dense<R>,
}

pub struct CriticTape<R> {
    trunk: MlpTape<R>,
}

impl<R: Real> Critic<R> {
    pub fn zeros(input: usize, hidden: &[usize]) -> Self {
        let trunk = Mlp::zeros(input, hidden);
        let head = Dense::zeros(trunk.output_dim(), 1);
        Self { trunk, head }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn values(&self, x: &Array2<R>) -> Result<Array1<R>, NetError> {
        check_dim("critic", self.input_dim(), x.ncols())?;
        Ok(self.head.forward(&self.trunk.forward(x)).index_axis_move(Axis(1), 0))
    }

    pub fn forward_train(&self, x: &Array2<R>) -> (Array1<R>, CriticTape<R>) {
        let trunk = self.trunk.forward_tape(x);
        let v = self.head.forward(trunk.output()).index_axis_move(Axis(1), 0);
        (v, CriticTape { trunk })
    }

    /// Parameter gradients and `dL/dx` for upstream value gradients.
    pub fn backward(&self, tape: &CriticTape<R>, d_values: &Array1<R>) -> (Critic<R>, Array2<R>) {
        let hidden: Vec<usize> = self.trunk.layers.iter().map(|l| l.output_dim()).collect();
        let mut grad = Critic::zeros(self.input_dim(), &hidden);
        let dv = d_values.clone().insert_axis(Axis(1));
        let d_features = self.head.backward(tape.trunk.output(), &dv, &mut grad.head);
        let dx = self.trunk.backward(&tape.trunk, d_features, &mut grad.trunk);
        (grad, dx)
    }
}

impl<R: Real> Tensors<R> for Critic<R> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [R])>) {
        self.trunk.collect(&join(prefix, "trunk"), out);
        self.head.collect(&join(prefix, "head"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [R]>) {
        self.trunk.collect_mut(out);
        self.head.collect_mut(out);
    }
}

/// All trainable parameters of one policy variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<R> {
    pub spec: NetSpec,
    pub hi_actor: HiActor<R>,
    pub lo_actor: LoActor<R>,
    pub hi_critic: Critic<R>,
    pub lo_critic: Critic<R>,
}

impl<R: Real> ParamSet<R> {
    pub fn zeros(spec: &NetSpec) -> Self {
        Self {
            hi_actor: HiActor::zeros(spec.hi_input_dim, &spec.hidden, spec.lstm_width, spec.hi_head),
            lo_actor: LoActor::zeros(spec.lo_input_dim, &spec.hidden),
            hi_critic: Critic::zeros(spec.hi_critic_input_dim, &spec.hidden),
            lo_critic: Critic::zeros(spec.lo_critic_input_dim, &spec.hidden),
            spec: spec.clone(),
        }
    }

    /// Same parameters in another float type.
    pub fn cast<S: Real>(&self) -> ParamSet<S> {
        let mut out = ParamSet::<S>::zeros(&self.spec);
        let src = self.tensors();
        for ((_, _, from), to) in src.iter().zip(out.tensors_mut()) {
            for (d, s) in to.iter_mut().zip(from.iter()) {
                *d = S::from_f64(s.to_f64().unwrap()).unwrap();
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }
}

impl<R: Real> Tensors<R> for ParamSet<R> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [R])>) {
        self.hi_actor.collect(&join(prefix, "hi_actor"), out);
        self.lo_actor.collect(&join(prefix, "lo_actor"), out);
        self.hi_critic.collect(&join(prefix, "hi_critic"), out);
        self.lo_critic.collect(&join(prefix, "lo_critic"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [R]>) {
        self.hi_actor.collect_mut(out);
        self.lo_actor.collect_mut(out);
        self.hi_critic.collect_mut(out);
        self.lo_critic.collect_mut(out);
    }
}

/// Gains of the orthogonal initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitGains {
    pub hidden: f64,
    pub recurrent: f64,
    pub actor_head: f64,
    pub critic_head: f64,
}

impl Default for InitGains {
    fn default() -> Self {
        Self { hidden: std::f64::consts::SQRT_2, recurrent: 1.0, actor_head: 0.01, critic_head: 1.0 }
    }
}

/// Scaled matrix with orthonormal rows or columns (whichever is fewer), from
/// Gram-Schmidt on a Gaussian draw.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let mut a = Array2::<f64>::zeros((tall, short));
    a.mapv_inplace(|_| StandardNormal.sample(rng));
    for j in 0..short {
        for k in 0..j {
            let proj = a.column(j).dot(&a.column(k));
            let basis = a.column(k).to_owned();
            a.column_mut(j).scaled_add(-proj, &basis);
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        a.column_mut(j).mapv_inplace(|v| v / norm);
    }
    a.mapv_inplace(|v| v * gain);
    if rows >= cols {
        a
    } else {
        a.reversed_axes().as_standard_layout().to_owned()
    }
}

fn cast_matrix<R: Real>(m: Array2<f64>) -> Array2<R> {
    m.mapv(|v| R::from_f64(v).unwrap())
}

fn init_dense<R: Real>(layer: &mut Dense<R>, gain: f64, rng: &mut ChaCha8Rng) {
    let (i, o) = layer.weight.dim();
    layer.weight = cast_matrix(orthogonal(i, o, gain, rng));
    layer.bias.fill(R::zero());
}

fn init_mlp<R: Real>(mlp: &mut Mlp<R>, gain: f64, rng: &mut ChaCha8Rng) {
    for layer in &mut mlp.layers {
        init_dense(layer, gain, rng);
    }
}

fn init_lstm<R: Real>(lstm: &mut Lstm<R>, gain: f64, rng: &mut ChaCha8Rng) {
    let width = lstm.width();
    let input = lstm.w_input.nrows();
    for gate in 0..4 {
        let wi = cast_matrix::<R>(orthogonal(input, width, gain, rng));
        lstm.w_input.slice_mut(ndarray::s![.., gate * width..(gate + 1) * width]).assign(&wi);
        let wh = cast_matrix::<R>(orthogonal(width, width, gain, rng));
        lstm.w_hidden.slice_mut(ndarray::s![.., gate * width..(gate + 1) * width]).assign(&wh);
    }
    lstm.bias.fill(R::zero());
}

pub fn init_params<R: Real>(spec: &NetSpec, seed: u64) -> ParamSet<R> {
    init_params_with(spec, seed, InitGains::default())
}

/// Deterministic orthogonal initialization with zero biases.
pub fn init_params_with<R: Real>(spec: &NetSpec, seed: u64, gains: InitGains) -> ParamSet<R> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::<R>::zeros(spec);
    init_mlp(&mut p.hi_actor.trunk, gains.hidden, &mut rng);
    init_lstm(&mut p.hi_actor.lstm, gains.recurrent, &mut rng);
    init_dense(&mut p.hi_actor.head, gains.actor_head, &mut rng);
    init_mlp(&mut p.lo_actor.trunk, gains.hidden, &mut rng);
    init_dense(&mut p.lo_actor.head, gains.actor_head, &mut rng);
    init_mlp(&mut p.hi_critic.trunk, gains.hidden, &mut rng);
    init_dense(&mut p.hi_critic.head, gains.critic_head, &mut rng);
    init_mlp(&mut p.lo_critic.trunk, gains.hidden, &mut rng);
    init_dense(&mut p.lo_critic.head, gains.critic_head, &mut rng);
    p
}

fn row<R: Real>(x: &[f64]) -> Array2<R> {
    Array2::from_shape_fn((1, x.len()), |(_, j)| R::from_f64(x[j]).unwrap())
}

/// Single-observation task-allocation step. `mask` marks active Bernoulli
/// dims or valid categorical entries.
pub fn hi_actor_forward<R: Real>(
    params: &ParamSet<R>,
    obs: &[f64],
    mask: &[bool],
    state: &RecurrentState<R>,
) -> Result<(Option<ActionDistribution>, RecurrentState<R>), NetError> {
    let (logits, next) = params.hi_actor.step(&row(obs), state)?;
    let logits = logits.row(0).to_vec();
    Ok((distribution(params.hi_actor.kind, &logits, mask), next))
}

pub fn lo_actor_forward<R: Real>(params: &ParamSet<R>, obs: &[f64]) -> Result<ActionDistribution, NetError> {
    let logits = params.lo_actor.logits(&row(obs))?.row(0).to_vec();
    Ok(distribution(HeadKind::MoveTurn, &logits, &[]).expect("move/turn heads are always defined"))
}

/// Value of one critic input. `extra` is appended (robot and target one-hots
/// for the control critic).
pub fn critic_forward<R: Real>(critic: &Critic<R>, global: &[f64], extra: &[f64]) -> Result<f64, NetError> {
    let x: Vec<f64> = global.iter().chain(extra).copied().collect();
    Ok(critic.values(&row(&x))?[0].to_f64().unwrap())
}
