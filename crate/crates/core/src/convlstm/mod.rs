//! Single-layer convolutional LSTM predictor trained online on PDD maps.
//!
//! The network reads a batch of PDD maps oldest first, starting from a zero
//! state, and maps the last hidden tensor through a 1x1 read-out to one
//! predicted map. Gates are ordered input, forget, cell, output.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod loss;

use std::collections::VecDeque;

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PddMap};
use crate::scalar::Real;

pub use adam::{adam_update, AdamHyper};
pub use loss::{jsd_loss, kl_loss, loss_and_grad, LossKind};

use conv::{col2im, im2col};

/// Kernels and biases. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmParams<T: Real> {
    pub filters: usize,
    /// `4F x 1 x 3 x 3`.
    pub input_kernel: Array4<T>,
    /// `4F x F x 3 x 3`.
    pub hidden_kernel: Array4<T>,
    /// `4F`.
    pub bias: Array1<T>,
    /// 1x1 read-out weights, `F`.
    pub readout: Array1<T>,
    pub readout_bias: T,
}

impl<T: Real> ConvLstmParams<T> {
    pub fn zeros(filters: usize) -> Self {
        Self {
            filters,
            input_kernel: Array4::zeros((4 * filters, 1, 3, 3)),
            hidden_kernel: Array4::zeros((4 * filters, filters, 3, 3)),
            bias: Array1::zeros(4 * filters),
            readout: Array1::zeros(filters),
            readout_bias: T::zero(),
        }
    }

    /// Kernels uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(filters: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(filters);
        let gate_bound = 1.0 / ((9 * (1 + filters)) as f64).sqrt();
        let read_bound = 1.0 / (filters as f64).sqrt();
        for x in p.input_kernel.iter_mut().chain(p.hidden_kernel.iter_mut()) {
            *x = T::lit(rng.random_range(-gate_bound..gate_bound));
        }
        for x in p.readout.iter_mut() {
            *x = T::lit(rng.random_range(-read_bound..read_bound));
        }
        // keeps a ReLU readout off its floor at the start; the min-shifted
        // loss does not see a constant offset otherwise
        p.readout_bias = T::one();
        p
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Parameter tensors as flat slices in a fixed order.
    pub fn slices(&self) -> [&[T]; 5] {
        [
            self.input_kernel.as_slice().expect("standard layout"),
            self.hidden_kernel.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
            self.readout.as_slice().expect("standard layout"),
            std::slice::from_ref(&self.readout_bias),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [T]; 5] {
        [
            self.input_kernel.as_slice_mut().expect("standard layout"),
            self.hidden_kernel.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
            self.readout.as_slice_mut().expect("standard layout"),
            std::slice::from_mut(&mut self.readout_bias),
        ]
    }

    pub fn check(&self) -> Result<()> {
        let f = self.filters;
        let ok = self.input_kernel.dim() == (4 * f, 1, 3, 3)
            && self.hidden_kernel.dim() == (4 * f, f, 3, 3)
            && self.bias.len() == 4 * f
            && self.readout.len() == f;
        if !ok {
            return Err(Error::ShapeMismatch(format!("inconsistent parameter shapes for {f} filters")));
        }
        Ok(())
    }

    /// `[K_x | K_h]` as a `4F x 9(1+F)` matrix matching [`im2col`] rows.
    fn combined_weight(&self) -> Array2<T> {
        let f = self.filters;
        let mut w = Array2::zeros((4 * f, 9 * (1 + f)));
        w.slice_mut(s![.., 0..9])
            .assign(&self.input_kernel.view().into_shape_with_order((4 * f, 9)).expect("standard layout"));
        w.slice_mut(s![.., 9..])
            .assign(&self.hidden_kernel.view().into_shape_with_order((4 * f, 9 * f)).expect("standard layout"));
        w
    }

    fn kernels_sq_norm(&self) -> T {
        let sq = |a: &[T]| a.iter().fold(T::zero(), |acc, &x| acc + x * x);
        let [kx, kh, _, ro, _] = self.slices();
        sq(kx) + sq(kh) + sq(ro)
    }

    pub fn dot(&self, other: &Self) -> T {
        self.slices()
            .iter()
            .zip(other.slices().iter())
            .fold(T::zero(), |acc, (a, b)| a.iter().zip(b.iter()).fold(acc, |acc, (&x, &y)| acc + x * y))
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }
}

/// Hidden and cell tensors, each `F x rows x cols`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmState<T: Real> {
    pub h: Array3<T>,
    pub c: Array3<T>,
}

impl<T: Real> ConvLstmState<T> {
    pub fn zeros(filters: usize, rows: usize, cols: usize) -> Self {
        Self { h: Array3::zeros((filters, rows, cols)), c: Array3::zeros((filters, rows, cols)) }
    }
}

/// The most recent PDD maps, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct PddBatch<T: Real> {
    capacity: usize,
    maps: VecDeque<PddMap<T>>,
}

impl<T: Real> PddBatch<T> {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), maps: VecDeque::with_capacity(capacity) }
    }

    pub fn from_maps(capacity: usize, maps: impl IntoIterator<Item = PddMap<T>>) -> Result<Self> {
        let mut b = Self::new(capacity);
        for m in maps {
            b.push(m)?;
        }
        Ok(b)
    }

    /// Appends `map`, dropping the oldest one when full.
    pub fn push(&mut self, map: PddMap<T>) -> Result<()> {
        if let Some(first) = self.maps.front() {
            if first.grid != map.grid {
                return Err(Error::GridMismatch("PDD batch".into()));
            }
        }
        if self.maps.len() == self.capacity {
            self.maps.pop_front();
        }
        self.maps.push_back(map);
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.maps.len() == self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &PddMap<T>> {
        self.maps.iter()
    }

    pub fn last(&self) -> Option<&PddMap<T>> {
        self.maps.back()
    }

    pub fn grid(&self) -> Option<&GridSpec<T>> {
        self.maps.front().map(|m| &m.grid)
    }

    /// Factor applied to every input map: one over the largest magnitude.
    pub fn input_scale(&self) -> T {
        let peak = self
            .maps
            .iter()
            .flat_map(|m| m.values.iter())
            .fold(T::zero(), |acc, &v| acc.max(v.abs()));
        if peak > T::zero() {
            T::one() / peak
        } else {
            T::one()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real> {
    pub m: ConvLstmParams<T>,
    pub v: ConvLstmParams<T>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl<T: Real> AdamState<T> {
    pub fn new(filters: usize) -> Self {
        Self::with_hyper(filters, AdamHyper::default())
    }

    pub fn with_hyper(filters: usize, hyper: AdamHyper) -> Self {
        Self { m: ConvLstmParams::zeros(filters), v: ConvLstmParams::zeros(filters), t: 0, hyper }
    }
}

/// Training objective: `scale * (loss + kernel_l2 * sum K^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective<T> {
    pub loss: LossKind,
    pub kernel_l2: T,
    pub scale: T,
    pub relu_output: bool,
}

impl<T: Real> Objective<T> {
    pub fn new(loss: LossKind) -> Self {
        Self { loss, kernel_l2: T::lit(1e-4), scale: T::one(), relu_output: true }
    }
}

struct StepCache<T: Real> {
    cols: Array2<T>,
    /// Activated gates, `4F x P`.
    gates: Array2<T>,
    c_prev: Array2<T>,
    tanh_c: Array2<T>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// One recurrence on flattened `F x P` tensors.
fn step_flat<T: Real>(
    w: &Array2<T>,
    bias: &Array1<T>,
    x: ArrayView2<T>,
    h: &Array2<T>,
    c: &Array2<T>,
    rows: usize,
    cols: usize,
) -> (Array2<T>, Array2<T>, StepCache<T>) {
    let f = h.nrows();
    let cells = rows * cols;
    let mut stacked = Array2::zeros((1 + f, cells));
    stacked.slice_mut(s![0..1, ..]).assign(&x);
    stacked.slice_mut(s![1.., ..]).assign(h);
    let col = im2col(stacked.view(), rows, cols);
    let mut gates = w.dot(&col);
    for (mut row, &b) in gates.axis_iter_mut(Axis(0)).zip(bias.iter()) {
        row.mapv_inplace(|v| v + b);
    }
    gates.slice_mut(s![0..2 * f, ..]).mapv_inplace(sigmoid);
    gates.slice_mut(s![2 * f..3 * f, ..]).mapv_inplace(|v| v.tanh());
    gates.slice_mut(s![3 * f.., ..]).mapv_inplace(sigmoid);

    let mut c_new = Array2::zeros((f, cells));
    Zip::from(&mut c_new)
        .and(gates.slice(s![0..f, ..]))
        .and(gates.slice(s![f..2 * f, ..]))
        .and(gates.slice(s![2 * f..3 * f, ..]))
        .and(c)
        .for_each(|cn, &i, &fg, &g, &cp| *cn = fg * cp + i * g);
    let tanh_c = c_new.mapv(|v| v.tanh());
    let h_new = &gates.slice(s![3 * f.., ..]) * &tanh_c;
    (h_new, c_new, StepCache { cols: col, gates, c_prev: c.clone(), tanh_c })
}

fn flatten<T: Real>(a: &Array3<T>) -> Array2<T> {
    let (f, r, c) = a.dim();
    a.to_owned().into_shape_with_order((f, r * c)).expect("standard layout")
}

/// One ConvLSTM recurrence on a `rows x cols` input.
pub fn forward_step<T: Real>(
    params: &ConvLstmParams<T>,
    state: &ConvLstmState<T>,
    input: ArrayView2<T>,
) -> Result<ConvLstmState<T>> {
    params.check()?;
    let (rows, cols) = input.dim();
    let f = params.filters;
    if state.h.dim() != (f, rows, cols) || state.c.dim() != (f, rows, cols) {
        return Err(Error::ShapeMismatch(format!(
            "state {:?} vs input {:?} with {f} filters",
            state.h.dim(),
            input.dim()
        )));
    }
    let x = input.to_owned().into_shape_with_order((1, rows * cols)).expect("standard layout");
    let (h, c, _) =
        step_flat(&params.combined_weight(), &params.bias, x.view(), &flatten(&state.h), &flatten(&state.c), rows, cols);
    Ok(ConvLstmState {
        h: h.into_shape_with_order((f, rows, cols)).expect("standard layout"),
        c: c.into_shape_with_order((f, rows, cols)).expect("standard layout"),
    })
}

struct Forward<T: Real> {
    caches: Vec<StepCache<T>>,
    h_last: Array2<T>,
    /// Read-out before the optional ReLU, length `P`.
    pre_out: Array1<T>,
    output: Array2<T>,
}

fn run_forward<T: Real>(params: &ConvLstmParams<T>, batch: &PddBatch<T>, relu: bool) -> Result<Forward<T>> {
    params.check()?;
    let grid = batch.grid().ok_or(Error::ColdStart)?;
    let (rows, cols) = grid.shape();
    let f = params.filters;
    let scale = batch.input_scale();
    let w = params.combined_weight();
    let mut h = Array2::zeros((f, rows * cols));
    let mut c = Array2::zeros((f, rows * cols));
    let mut caches = Vec::with_capacity(batch.len());
    for map in batch.iter() {
        let x = map.values.mapv(|v| v * scale).into_shape_with_order((1, rows * cols)).expect("standard layout");
        let (hn, cn, cache) = step_flat(&w, &params.bias, x.view(), &h, &c, rows, cols);
        h = hn;
        c = cn;
        caches.push(cache);
    }
    let pre_out = params.readout.dot(&h).mapv(|v| v + params.readout_bias);
    let out = if relu { pre_out.mapv(|v| v.max(T::zero())) } else { pre_out.clone() };
    let output = out.into_shape_with_order((rows, cols)).expect("standard layout");
    Ok(Forward { caches, h_last: h, pre_out, output })
}

/// Many-to-one prediction of the next PDD map from the batch.
///
/// Inputs are multiplied by [`PddBatch::input_scale`], so the output is on
/// an arbitrary scale; [`decode_prediction`] maps it back to map units.
pub fn predict<T: Real>(params: &ConvLstmParams<T>, batch: &PddBatch<T>, relu_output: bool) -> Result<Array2<T>> {
    Ok(run_forward(params, batch, relu_output)?.output)
}

/// Rescales a scale-free prediction so that its min-shifted normalisation is
/// kept and its minimum and min-shifted total equal those of `reference`.
pub fn decode_prediction<T: Real>(pred: ArrayView2<T>, reference: &PddMap<T>) -> Array2<T> {
    let (p, _, _) = loss::normalize(pred);
    let (_, _, sum) = loss::normalize(reference.values.view());
    let min = reference.values.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b));
    let eps = T::lit(loss::EPS);
    p.mapv(|v| v * sum + min - eps)
}

/// Loss at `params` and its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<T: Real> {
    pub loss: T,
    pub grads: ConvLstmParams<T>,
}

/// Objective value and analytic gradient by backpropagation through time.
pub fn grad<T: Real>(
    params: &ConvLstmParams<T>,
    batch: &PddBatch<T>,
    target: &PddMap<T>,
    objective: &Objective<T>,
) -> Result<Gradient<T>> {
    let fwd = run_forward(params, batch, objective.relu_output)?;
    let grid = batch.grid().expect("non-empty batch");
    if target.grid != *grid {
        return Err(Error::GridMismatch("training target".into()));
    }
    let (rows, cols) = grid.shape();
    let cells = rows * cols;
    let f = params.filters;

    let scaled_target = target.values.mapv(|v| v * batch.input_scale());
    let (value, d_out) = loss_and_grad(objective.loss, fwd.output.view(), scaled_target.view());
    let mut dy = d_out.into_shape_with_order(cells).expect("standard layout").mapv(|v| v * objective.scale);
    if objective.relu_output {
        Zip::from(&mut dy).and(&fwd.pre_out).for_each(|d, &y| {
            if y <= T::zero() {
                *d = T::zero();
            }
        });
    }

    let mut g = ConvLstmParams::zeros(f);
    g.readout = fwd.h_last.dot(&dy);
    g.readout_bias = dy.sum();

    let w = params.combined_weight();
    let wt = w.t();
    let mut dw = Array2::<T>::zeros(w.dim());
    let mut db = Array1::<T>::zeros(4 * f);
    let mut dh = Array2::from_shape_fn((f, cells), |(k, p)| params.readout[k] * dy[p]);
    let mut dc = Array2::<T>::zeros((f, cells));
    let one = T::one();

    for (t, cache) in fwd.caches.iter().enumerate().rev() {
        let gates = &cache.gates;
        let mut dpre = Array2::<T>::zeros((4 * f, cells));
        // elementwise gate backward, row block by row block
        for k in 0..f {
            let i = gates.row(k);
            let fg = gates.row(f + k);
            let gg = gates.row(2 * f + k);
            let o = gates.row(3 * f + k);
            let tc = cache.tanh_c.row(k);
            let cp = cache.c_prev.row(k);
            let dhk = dh.row(k);
            let mut dck = dc.row_mut(k);
            let mut out = [Array1::zeros(cells), Array1::zeros(cells), Array1::zeros(cells), Array1::zeros(cells)];
            for p in 0..cells {
                let d_o = dhk[p] * tc[p];
                let dcp = dck[p] + dhk[p] * o[p] * (one - tc[p] * tc[p]);
                out[0][p] = dcp * gg[p] * i[p] * (one - i[p]);
                out[1][p] = dcp * cp[p] * fg[p] * (one - fg[p]);
                out[2][p] = dcp * i[p] * (one - gg[p] * gg[p]);
                out[3][p] = d_o * o[p] * (one - o[p]);
                dck[p] = dcp * fg[p];
            }
            for (blk, row) in out.into_iter().enumerate() {
                dpre.row_mut(blk * f + k).assign(&row);
            }
        }
        dw = dw + dpre.dot(&cache.cols.t());
        db = db + dpre.sum_axis(Axis(1));
        if t > 0 {
            let dcols = wt.dot(&dpre);
            let dstack = col2im(dcols.view(), 1 + f, rows, cols);
            dh = dstack.slice(s![1.., ..]).to_owned();
        }
    }

    g.input_kernel = dw.slice(s![.., 0..9]).to_owned().into_shape_with_order((4 * f, 1, 3, 3)).expect("layout");
    g.hidden_kernel = dw.slice(s![.., 9..]).to_owned().into_shape_with_order((4 * f, f, 3, 3)).expect("layout");
    g.bias = db;

    let mut total = value;
    if objective.kernel_l2 > T::zero() {
        let two_l = objective.kernel_l2 * T::lit(2.0) * objective.scale;
        Zip::from(&mut g.input_kernel).and(&params.input_kernel).for_each(|d, &k| *d += two_l * k);
        Zip::from(&mut g.hidden_kernel).and(&params.hidden_kernel).for_each(|d, &k| *d += two_l * k);
        Zip::from(&mut g.readout).and(&params.readout).for_each(|d, &k| *d += two_l * k);
        total += objective.kernel_l2 * params.kernels_sq_norm();
    }
    Ok(Gradient { loss: total * objective.scale, grads: g })
}

/// Objective value without the gradient.
pub fn objective_value<T: Real>(
    params: &ConvLstmParams<T>,
    batch: &PddBatch<T>,
    target: &PddMap<T>,
    objective: &Objective<T>,
) -> Result<T> {
    let fwd = run_forward(params, batch, objective.relu_output)?;
    let scaled = target.values.mapv(|v| v * batch.input_scale());
    let l = loss::loss(objective.loss, fwd.output.view(), scaled.view());
    Ok(objective.scale * (l + objective.kernel_l2 * params.kernels_sq_norm()))
}

/// One ADAM update of every parameter tensor.
pub fn adam_step<T: Real>(params: &mut ConvLstmParams<T>, grads: &ConvLstmParams<T>, opt: &mut AdamState<T>) {
    opt.t += 1;
    let hp = opt.hyper;
    let t = opt.t;
    let AdamState { m, v, .. } = opt;
    for (((p, g), m), v) in
        params.slices_mut().into_iter().zip(grads.slices()).zip(m.slices_mut()).zip(v.slices_mut())
    {
        adam_update(&hp, t, p, g, m, v);
    }
}

/// Fits the `batch -> target` pair for `epochs` ADAM steps.
///
/// Returns the objective value measured before each step.
pub fn train_online<T: Real>(
    params: &mut ConvLstmParams<T>,
    opt: &mut AdamState<T>,
    batch: &PddBatch<T>,
    target: &PddMap<T>,
    epochs: usize,
    objective: &Objective<T>,
) -> Result<Vec<T>> {
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let g = grad(params, batch, target, objective)?;
        if !g.loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        losses.push(g.loss);
        adam_step(params, &g.grads, opt);
    }
    Ok(losses)
}
