use super::conv::{same_padding, Conv1dGeom, Conv2dGeom};
use super::{conv1d_output_len, Gradients, KernelError, Padding, Parameter, Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Value<'a, T> {
    Owned(Tensor<T>),
    Borrowed(&'a Tensor<T>),
}

impl<T> Value<'_, T> {
    fn get(&self) -> &Tensor<T> {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op<'a, T> {
    Input,
    Param(&'a Parameter<T>),
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: Conv1dGeom,
    },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: Conv2dGeom,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    Mul(Var, Var),
    Reshape(Var),
    GlobalAvgPool(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<T>,
    },
}

struct Node<'a, T> {
    value: Value<'a, T>,
    op: Op<'a, T>,
    requires_grad: bool,
}

/// Records a forward computation for later reverse-mode differentiation.
///
/// Parameters are borrowed, not copied, so a tape must not outlive the
/// networks it reads from. One tape per sample and per thread.
pub struct Tape<'a, T> {
    nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Real> Default for Tape<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<'a, T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input. No gradient flows into it.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: Op::Input,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a parameter leaf. Frozen parameters behave as constants.
    pub fn param(&mut self, p: &'a Parameter<T>) -> Var {
        self.nodes.push(Node {
            value: Value::Borrowed(&p.value),
            op: Op::Param(p),
            requires_grad: !p.is_frozen(),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.nodes[v.0].value.get()
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn expect_shape(
        &self,
        op: &'static str,
        v: Var,
        expected: &[usize],
    ) -> Result<(), KernelError> {
        if self.shape(v) != expected {
            return Err(KernelError::ShapeMismatch {
                op,
                expected: expected.to_vec(),
                actual: self.shape(v).to_vec(),
            });
        }
        Ok(())
    }

    /// 1-D cross-correlation of `input [cin, len]` with `weight [cout, cin, k]`.
    pub fn conv1d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: Padding,
    ) -> Result<Var, KernelError> {
        let wshape = self.shape(weight).to_vec();
        if wshape.len() != 3 {
            return Err(KernelError::InvalidArgument {
                op: "conv1d",
                detail: format!("weight must be [cout, cin, k], got {wshape:?}"),
            });
        }
        let (cout, cin, k) = (wshape[0], wshape[1], wshape[2]);
        let ishape = self.shape(input).to_vec();
        if ishape.len() != 2 || ishape[0] != cin {
            return Err(KernelError::ShapeMismatch {
                op: "conv1d",
                expected: vec![cin, ishape.last().copied().unwrap_or(0)],
                actual: ishape,
            });
        }
        self.expect_shape("conv1d bias", bias, &[cout])?;
        if stride == 0 {
            return Err(KernelError::InvalidArgument {
                op: "conv1d",
                detail: "stride must be at least 1".into(),
            });
        }
        let len = ishape[1];
        let out_len = conv1d_output_len(len, k, stride, padding).ok_or_else(|| {
            KernelError::InvalidArgument {
                op: "conv1d",
                detail: format!("kernel {k} does not fit input length {len}"),
            }
        })?;
        let pad_left = match padding {
            Padding::Same => same_padding(len, k, stride),
            Padding::Valid => 0,
        };
        let geom = Conv1dGeom {
            cin,
            cout,
            len,
            kernel: k,
            stride,
            pad_left,
            out_len,
        };
        let mut out = Tensor::zeros(&[cout, out_len]);
        geom.forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            out.data_mut(),
        );
        Ok(self.push(
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
                geom,
            },
            &[input, weight, bias],
        ))
    }

    /// Stride-1 same-padded dilated 2-D cross-correlation of
    /// `input [cin, rows, cols]` with `weight [cout, cin, k_rows, k_cols]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        dilation: (usize, usize),
    ) -> Result<Var, KernelError> {
        let wshape = self.shape(weight).to_vec();
        if wshape.len() != 4 {
            return Err(KernelError::InvalidArgument {
                op: "conv2d",
                detail: format!("weight must be [cout, cin, kr, kc], got {wshape:?}"),
            });
        }
        if dilation.0 == 0 || dilation.1 == 0 {
            return Err(KernelError::InvalidArgument {
                op: "conv2d",
                detail: "dilation must be at least 1".into(),
            });
        }
        let ishape = self.shape(input).to_vec();
        if ishape.len() != 3 || ishape[0] != wshape[1] {
            return Err(KernelError::ShapeMismatch {
                op: "conv2d",
                expected: vec![
                    wshape[1],
                    ishape.get(1).copied().unwrap_or(0),
                    ishape.get(2).copied().unwrap_or(0),
                ],
                actual: ishape,
            });
        }
        self.expect_shape("conv2d bias", bias, &[wshape[0]])?;
        let geom = Conv2dGeom {
            cin: wshape[1],
            cout: wshape[0],
            rows: ishape[1],
            cols: ishape[2],
            k_rows: wshape[2],
            k_cols: wshape[3],
            dil_rows: dilation.0,
            dil_cols: dilation.1,
        };
        let mut out = Tensor::zeros(&[geom.cout, geom.rows, geom.cols]);
        geom.forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            out.data_mut(),
        );
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            &[input, weight, bias],
        ))
    }

    /// Affine map `weight [d_out, d_in] * input [d_in] + bias [d_out]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, KernelError> {
        let wshape = self.shape(weight).to_vec();
        if wshape.len() != 2 {
            return Err(KernelError::InvalidArgument {
                op: "dense",
                detail: format!("weight must be [d_out, d_in], got {wshape:?}"),
            });
        }
        let (d_out, d_in) = (wshape[0], wshape[1]);
        self.expect_shape("dense", input, &[d_in])?;
        self.expect_shape("dense bias", bias, &[d_out])?;
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let b = self.value(bias).data();
        let out: Vec<T> = (0..d_out)
            .map(|o| {
                let row = &w[o * d_in..(o + 1) * d_in];
                b[o] + row.iter().zip(x).map(|(&wi, &xi)| wi * xi).sum::<T>()
            })
            .collect();
        Ok(self.push(
            Tensor::from_vec(out),
            Op::Dense {
                input,
                weight,
                bias,
            },
            &[input, weight, bias],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(out, Op::Relu(x), &[x])
    }

    /// Logistic sigmoid. Outputs saturate at the representable values
    /// nearest to 0 and 1, never reaching them.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x), &[x])
    }

    /// Elementwise product of two equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let shape = self.shape(a).to_vec();
        self.expect_shape("mul", b, &shape)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, KernelError> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Per-channel mean over time: `[channels, len] -> [channels]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var, KernelError> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(KernelError::InvalidArgument {
                op: "global_avg_pool",
                detail: format!("expected [channels, len], got {shape:?}"),
            });
        }
        let (c, len) = (shape[0], shape[1]);
        let inv = T::one() / T::of(len as f64);
        let data = self.value(x).data();
        let out: Vec<T> = (0..c)
            .map(|i| data[i * len..(i + 1) * len].iter().copied().sum::<T>() * inv)
            .collect();
        Ok(self.push(Tensor::from_vec(out), Op::GlobalAvgPool(x), &[x]))
    }

    /// Softmax followed by cross-entropy against a one-hot target. Returns a
    /// one-element loss tensor.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var, KernelError> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 1 {
            return Err(KernelError::InvalidArgument {
                op: "softmax_cross_entropy",
                detail: format!("logits must be 1-D, got {shape:?}"),
            });
        }
        let k = shape[0];
        if label >= k {
            return Err(KernelError::LabelOutOfRange { label, classes: k });
        }
        let (loss, probs) = softmax_cross_entropy(self.value(logits).data(), label);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
            &[logits],
        ))
    }

    /// Reverse pass from a scalar `loss`. Returns gradients for every
    /// non-frozen parameter reachable from it.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, KernelError> {
        if loss.0 >= self.nodes.len() {
            return Err(KernelError::NoForward);
        }
        if self.value(loss).len() != 1 {
            return Err(KernelError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::filled(self.shape(loss), T::one()));
        let mut out = Gradients::new();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Input => {}
                Op::Param(p) => out.add(p.name(), g),
                Op::Relu(x) => {
                    let y = node.value.get();
                    let mut gx = g;
                    for (gv, &yv) in gx.data_mut().iter_mut().zip(y.data()) {
                        if yv <= T::zero() {
                            *gv = T::zero();
                        }
                    }
                    self.send(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let y = node.value.get();
                    let mut gx = g;
                    for (gv, &yv) in gx.data_mut().iter_mut().zip(y.data()) {
                        *gv *= yv * (T::one() - yv);
                    }
                    self.send(&mut grads, *x, gx);
                }
                Op::Mul(a, b) => {
                    for (target, other) in [(*a, *b), (*b, *a)] {
                        if self.needs(target) {
                            let mut gt = g.clone();
                            for (gv, &ov) in gt.data_mut().iter_mut().zip(self.value(other).data())
                            {
                                *gv *= ov;
                            }
                            self.send(&mut grads, target, gt);
                        }
                    }
                }
                Op::Reshape(x) => {
                    let gx = g.reshape(self.shape(*x))?;
                    self.send(&mut grads, *x, gx);
                }
                Op::GlobalAvgPool(x) => {
                    let shape = self.shape(*x);
                    let (c, len) = (shape[0], shape[1]);
                    let inv = T::one() / T::of(len as f64);
                    let mut gx = Tensor::zeros(shape);
                    for ch in 0..c {
                        let v = g.data()[ch] * inv;
                        gx.data_mut()[ch * len..(ch + 1) * len]
                            .iter_mut()
                            .for_each(|e| *e = v);
                    }
                    self.send(&mut grads, *x, gx);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    label,
                    probs,
                } => {
                    let scale = g.data()[0];
                    let mut gx: Vec<T> = probs.iter().map(|&q| q * scale).collect();
                    gx[*label] = gx[*label] - scale;
                    self.send(&mut grads, *logits, Tensor::from_vec(gx));
                }
                Op::Dense {
                    input,
                    weight,
                    bias,
                } => {
                    let x = self.value(*input).data();
                    let w = self.value(*weight).data();
                    let (d_out, d_in) = (g.len(), x.len());
                    let gd = g.data();
                    if self.needs(*input) {
                        let mut gx = vec![T::zero(); d_in];
                        for o in 0..d_out {
                            let go = gd[o];
                            for (gxi, &wi) in gx.iter_mut().zip(&w[o * d_in..(o + 1) * d_in]) {
                                *gxi += go * wi;
                            }
                        }
                        self.send(&mut grads, *input, Tensor::from_vec(gx));
                    }
                    if self.needs(*weight) {
                        let mut gw = Tensor::zeros(&[d_out, d_in]);
                        for (o, row) in gw.data_mut().chunks_mut(d_in).enumerate() {
                            let go = gd[o];
                            for (gwi, &xi) in row.iter_mut().zip(x) {
                                *gwi = go * xi;
                            }
                        }
                        self.send(&mut grads, *weight, gw);
                    }
                    if self.needs(*bias) {
                        self.send(&mut grads, *bias, g);
                    }
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    geom,
                } => {
                    let (gi, gw) = self.conv_grads(*input, *weight, *bias, |x, w, gi, gw| {
                        geom.backward(x, w, g.data(), gi, gw)
                    });
                    self.dispatch_conv(&mut grads, (*input, *weight, *bias), gi, gw);
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geom,
                } => {
                    let (gi, gw) = self.conv_grads(*input, *weight, *bias, |x, w, gi, gw| {
                        geom.backward(x, w, g.data(), gi, gw)
                    });
                    self.dispatch_conv(&mut grads, (*input, *weight, *bias), gi, gw);
                }
            }
        }
        Ok(out)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn send(&self, grads: &mut [Option<Tensor<T>>], to: Var, g: Tensor<T>) {
        if !self.needs(to) {
            return;
        }
        match &mut grads[to.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    #[allow(clippy::type_complexity)]
    fn conv_grads(
        &self,
        input: Var,
        weight: Var,
        bias: Var,
        run: impl FnOnce(&[T], &[T], Option<&mut [T]>, Option<(&mut [T], &mut [T])>),
    ) -> (Option<Tensor<T>>, Option<(Tensor<T>, Tensor<T>)>) {
        let mut gi = self.needs(input).then(|| Tensor::zeros(self.shape(input)));
        let mut gw = (self.needs(weight) || self.needs(bias)).then(|| {
            (
                Tensor::zeros(self.shape(weight)),
                Tensor::zeros(self.shape(bias)),
            )
        });
        run(
            self.value(input).data(),
            self.value(weight).data(),
            gi.as_mut().map(|t| t.data_mut()),
            gw.as_mut().map(|(w, b)| (w.data_mut(), b.data_mut())),
        );
        (gi, gw)
    }

    fn dispatch_conv(
        &self,
        grads: &mut [Option<Tensor<T>>],
        (input, weight, bias): (Var, Var, Var),
        gi: Option<Tensor<T>>,
        gw: Option<(Tensor<T>, Tensor<T>)>,
    ) {
        if let Some(gi) = gi {
            self.send(grads, input, gi);
        }
        if let Some((gw, gb)) = gw {
            self.send(grads, weight, gw);
            self.send(grads, bias, gb);
        }
    }
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    let y = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let top = T::one() - T::epsilon() / T::of(2.0);
    y.max(T::min_positive_value()).min(top)
}

/// Numerically stable `(-log softmax(logits)[label], softmax(logits))`.
pub(crate) fn softmax_cross_entropy<T: Real>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let probs = exps.iter().map(|&e| e / total).collect();
    let loss = (max + total.ln()) - logits[label];
    (loss.max(T::zero()), probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(name: &str, shape: &[usize], data: &[f64]) -> Parameter<f64> {
        Parameter::new(name, Tensor::new(shape.to_vec(), data.to_vec()).unwrap())
    }

    #[test]
    fn conv1d_valid_hand_example() {
        let w = p("w", &[1, 1, 2], &[1.0, 1.0]);
        let b = p("b", &[1], &[0.0]);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let (wv, bv) = (tape.param(&w), tape.param(&b));
        let y = tape.conv1d(x, wv, bv, 1, Padding::Valid).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn conv1d_identity_kernel() {
        let w = p("w", &[1, 1, 1], &[1.0]);
        let b = p("b", &[1], &[0.0]);
        let mut tape = Tape::new();
        let data = vec![0.5, -1.0, 2.0, 7.0, 3.0];
        let x = tape.input(Tensor::new(vec![1, 5], data.clone()).unwrap());
        let (wv, bv) = (tape.param(&w), tape.param(&b));
        let y = tape.conv1d(x, wv, bv, 1, Padding::Same).unwrap();
        assert_eq!(tape.value(y).data(), &data[..]);
    }

    #[test]
    fn conv1d_stride_two_same_length() {
        let w = p("w", &[1, 1, 7], &[0.1; 7]);
        let b = p("b", &[1], &[0.0]);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[1, 298]));
        let (wv, bv) = (tape.param(&w), tape.param(&b));
        let y = tape.conv1d(x, wv, bv, 2, Padding::Same).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 149]);
    }

    #[test]
    fn conv1d_rejects_channel_mismatch() {
        let w = p("w", &[1, 2, 3], &[0.0; 6]);
        let b = p("b", &[1], &[0.0]);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[3, 10]));
        let (wv, bv) = (tape.param(&w), tape.param(&b));
        assert!(matches!(
            tape.conv1d(x, wv, bv, 1, Padding::Same),
            Err(KernelError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn conv2d_dilated_taps_land_two_apart() {
        // 3x1 kernel (1, 0, 1) with row dilation 2 on a 7x1 unit impulse at row 3.
        let w = p("w", &[1, 1, 3, 1], &[1.0, 0.0, 1.0]);
        let b = p("b", &[1], &[0.0]);
        let mut impulse = vec![0.0; 7];
        impulse[3] = 1.0;
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(vec![1, 7, 1], impulse).unwrap());
        let (wv, bv) = (tape.param(&w), tape.param(&b));
        let y = tape.conv2d(x, wv, bv, (2, 1)).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn dense_hand_example() {
        let w = p("w", &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = p("b", &[2], &[0.0, 0.0]);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::from_vec(vec![1.0, 1.0]));
        let (wv, bv) = (tape.param(&w), tape.param(&b));
        let y = tape.dense(x, wv, bv).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 7.0]);
    }

    #[test]
    fn relu_and_sigmoid_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = tape.input(Tensor::from_vec(vec![0.0, 30.0, -30.0, 800.0, -800.0]));
        let s = tape.sigmoid(z);
        let s = tape.value(s).data();
        assert_eq!(s[0], 0.5);
        assert!((s[1] - 1.0).abs() < 1e-9 && s[1] < 1.0);
        assert!(s[2] < 1e-9 && s[2] > 0.0);
        assert!(s[3] < 1.0 && s[4] > 0.0);
    }

    #[test]
    fn pool_mean() {
        let mut tape = Tape::<f64>::new();
        let x = tape
            .input(Tensor::new(vec![2, 4], vec![1.0, 2.0, 3.0, 4.0, 5.0, 5.0, 5.0, 5.0]).unwrap());
        let y = tape.global_avg_pool(x).unwrap();
        assert_eq!(tape.value(y).data(), &[2.5, 5.0]);
    }

    #[test]
    fn cross_entropy_values() {
        let (l, _) = softmax_cross_entropy(&[0.0f64, 0.0], 0);
        assert!((l - 2f64.ln()).abs() < 1e-12);
        let (l, q) = softmax_cross_entropy(&[1000.0f64, 0.0], 0);
        assert!(l.is_finite() && l.abs() < 1e-12);
        assert!(q.iter().all(|v| v.is_finite()));
        let (l, _) = softmax_cross_entropy(&[1.0f64, 2.0, 3.0], 2);
        assert!((l - 0.40760596444438).abs() < 1e-9);
    }

    #[test]
    fn label_out_of_range() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::from_vec(vec![0.0, 0.0]));
        assert!(matches!(
            tape.softmax_cross_entropy(x, 2),
            Err(KernelError::LabelOutOfRange {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn backward_without_forward() {
        let tape = Tape::<f64>::new();
        assert!(matches!(tape.backward(Var(0)), Err(KernelError::NoForward)));
    }

    #[test]
    fn dense_cross_entropy_logit_gradient_is_q_minus_p() {
        let w = p("w", &[3, 2], &[0.3, -0.2, 0.1, 0.5, -0.4, 0.25]);
        let b = p("b", &[3], &[0.0, 0.1, -0.1]);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::from_vec(vec![1.0, 0.0]));
        let (wv, bv) = (tape.param(&w), tape.param(&b));
        let logits = tape.dense(x, wv, bv).unwrap();
        let loss = tape.softmax_cross_entropy(logits, 1).unwrap();
        let grads = tape.backward(loss).unwrap();
        // With x = e0 and bias gradients equal to dL/dlogits, check q - p.
        let (_, q) = softmax_cross_entropy(tape.value(logits).data(), 1);
        let gb = grads.get("b").unwrap().data();
        for c in 0..3 {
            let expected = q[c] - if c == 1 { 1.0 } else { 0.0 };
            assert!((gb[c] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_and_unused_parameters_get_no_gradient() {
        let mut w = p("w", &[1, 1], &[2.0]);
        let b = p("b", &[1], &[0.0]);
        let unused = p("unused", &[1], &[1.0]);
        w.set_frozen(true);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::from_vec(vec![1.0]));
        let (wv, bv) = (tape.param(&w), tape.param(&b));
        let _ = tape.param(&unused);
        let y = tape.dense(x, wv, bv).unwrap();
        let grads = tape.backward(y).unwrap();
        assert!(grads.get("w").is_none());
        assert!(grads.get("unused").is_none());
        assert_eq!(grads.get("b").unwrap().data(), &[1.0]);
    }

    #[test]
    fn relu_gradient_zero_for_negative_preactivation() {
        let w = p("w", &[1, 1], &[1.0]);
        let b = p("b", &[1], &[-3.0]);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::from_vec(vec![1.0]));
        let (wv, bv) = (tape.param(&w), tape.param(&b));
        let y = tape.dense(x, wv, bv).unwrap();
        let r = tape.relu(y);
        let grads = tape.backward(r).unwrap();
        assert_eq!(grads.get("w").unwrap().data(), &[0.0]);
        assert_eq!(grads.get("b").unwrap().data(), &[0.0]);
    }
}
