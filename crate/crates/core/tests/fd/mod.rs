//! Central finite-difference checks of every tape operation and of both
//! networks, in double precision. Shared by the gradient tests and the
//! acceptance runner.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use speaker_mlt::kernel::{Gradients, Padding, ParamStore, Tape, Tensor, Var};
use speaker_mlt::mlt::LabelScheme;
use speaker_mlt::models::{
    compose, EnhancementNet, EnhancementNetConfig, SpeakerIdNet, SpeakerIdNetConfig,
};

const H: f64 = 1e-4;
const RTOL: f64 = 1e-4;
const ATOL: f64 = 1e-9;
pub const INSTANCES: usize = 20;

/// A scalar function of the parameters in a store.
trait Objective {
    fn store_mut(&mut self) -> &mut ParamStore<f64>;
    fn eval(&self) -> (f64, Gradients<f64>);
}

#[derive(Default, Debug)]
pub struct Stats {
    pub checked: usize,
    pub kinks: usize,
    pub failures: Vec<String>,
}

fn agree(a: f64, n: f64) -> bool {
    (a - n).abs() <= RTOL * a.abs().max(n.abs()) + ATOL
}

fn central(obj: &mut dyn Objective, name: &str, k: usize, h: f64) -> f64 {
    let orig = obj.store_mut().get(name).unwrap().value.data()[k];
    obj.store_mut().get_mut(name).unwrap().value.data_mut()[k] = orig + h;
    let up = obj.eval().0;
    obj.store_mut().get_mut(name).unwrap().value.data_mut()[k] = orig - h;
    let down = obj.eval().0;
    obj.store_mut().get_mut(name).unwrap().value.data_mut()[k] = orig;
    (up - down) / (2.0 * h)
}

/// Compares analytic and numeric gradients on up to `per_tensor` random
/// coordinates of every parameter. On a mismatch the step shrinks tenfold
/// at a time. The check passes once the estimate reaches the analytic value
/// and fails if it settles somewhere else; an estimate that never settles
/// means a ReLU kink inside every stencil and is counted separately.
fn check(
    obj: &mut dyn Objective,
    names: &[String],
    per_tensor: usize,
    rng: &mut ChaCha8Rng,
    stats: &mut Stats,
) {
    let (_, grads) = obj.eval();
    for name in names {
        let len = obj.store_mut().get(name).unwrap().value.len();
        let coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|_| rng.gen_range(0..len)).collect()
        };
        for k in coords {
            let analytic = grads.get(name).map_or(0.0, |g| g.data()[k]);
            stats.checked += 1;
            let mut h = H;
            let mut prev = central(obj, name, k, h);
            let mut verdict = None;
            while verdict.is_none() && !agree(analytic, prev) {
                if h < H * 1e-3 {
                    verdict = Some(false);
                    break;
                }
                h /= 10.0;
                let next = central(obj, name, k, h);
                if agree(prev, next) && !agree(analytic, next) {
                    verdict = Some(true);
                }
                prev = next;
            }
            match verdict {
                Some(true) => stats.failures.push(format!(
                    "{name}[{k}]: analytic {analytic:e}, numeric {prev:e}"
                )),
                Some(false) => stats.kinks += 1,
                None => {}
            }
        }
    }
}

/// `Ok` with a summary when nothing failed and at most 2% of the
/// coordinates sat on kinks.
pub fn verdict(what: &str, stats: &Stats) -> Result<String, String> {
    if !stats.failures.is_empty() {
        return Err(format!("{what}: {:#?}", stats.failures));
    }
    if stats.kinks * 50 > stats.checked {
        return Err(format!(
            "{what}: {} of {} coordinates sat on kinks",
            stats.kinks, stats.checked
        ));
    }
    Ok(format!(
        "{what}: {} coordinates, {} kinks",
        stats.checked, stats.kinks
    ))
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Values bounded away from zero, so ReLU is differentiable at every input.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    random_tensor(shape, rng).map(|v| if v >= 0.0 { v + 0.05 } else { v - 0.05 })
}

#[derive(Debug, Clone, Copy)]
enum OpKind {
    Conv1d { stride: usize, padding: Padding },
    Conv2d { dilation: (usize, usize) },
    Dense,
    Relu,
    Sigmoid,
    Mul,
    Reshape,
    GlobalAvgPool,
    SoftmaxCrossEntropy { label: usize },
}

/// One operation on parameter inputs, reduced to a scalar by a random
/// linear probe (except cross-entropy, which is already scalar).
struct OpCase {
    kind: OpKind,
    store: ParamStore<f64>,
}

impl OpCase {
    fn new(kind: OpKind, inputs: Vec<(&str, Tensor<f64>)>, rng: &mut ChaCha8Rng) -> Self {
        let mut store = ParamStore::new();
        for (name, t) in inputs {
            store.insert(name, t).unwrap();
        }
        let mut case = Self { kind, store };
        if !matches!(kind, OpKind::SoftmaxCrossEntropy { .. }) {
            let n = case.forward_len();
            case.store
                .insert("probe.w", random_tensor(&[1, n], rng))
                .unwrap();
            case.store
                .insert("probe.b", random_tensor(&[1], rng))
                .unwrap();
        }
        case
    }

    fn forward_len(&self) -> usize {
        let mut tape = Tape::new();
        let out = self.op(&mut tape);
        tape.value(out).len()
    }

    fn op<'a>(&'a self, tape: &mut Tape<'a, f64>) -> Var {
        let p = |tape: &mut Tape<'a, f64>, name: &str| tape.param(self.store.get(name).unwrap());
        let x = p(tape, "x");
        match self.kind {
            OpKind::Conv1d { stride, padding } => {
                let (w, b) = (p(tape, "w"), p(tape, "b"));
                tape.conv1d(x, w, b, stride, padding).unwrap()
            }
            OpKind::Conv2d { dilation } => {
                let (w, b) = (p(tape, "w"), p(tape, "b"));
                tape.conv2d(x, w, b, dilation).unwrap()
            }
            OpKind::Dense => {
                let (w, b) = (p(tape, "w"), p(tape, "b"));
                tape.dense(x, w, b).unwrap()
            }
            OpKind::Relu => tape.relu(x),
            OpKind::Sigmoid => tape.sigmoid(x),
            OpKind::Mul => {
                let y = p(tape, "y");
                tape.mul(x, y).unwrap()
            }
            OpKind::Reshape => {
                let shape = tape.value(x).shape().to_vec();
                tape.reshape(x, &[shape[1], shape[0]]).unwrap()
            }
            OpKind::GlobalAvgPool => tape.global_avg_pool(x).unwrap(),
            OpKind::SoftmaxCrossEntropy { label } => tape.softmax_cross_entropy(x, label).unwrap(),
        }
    }
}

impl Objective for OpCase {
    fn store_mut(&mut self) -> &mut ParamStore<f64> {
        &mut self.store
    }

    fn eval(&self) -> (f64, Gradients<f64>) {
        let mut tape = Tape::new();
        let out = self.op(&mut tape);
        let loss = if matches!(self.kind, OpKind::SoftmaxCrossEntropy { .. }) {
            out
        } else {
            let n = tape.value(out).len();
            let flat = tape.reshape(out, &[n]).unwrap();
            let w = tape.param(self.store.get("probe.w").unwrap());
            let b = tape.param(self.store.get("probe.b").unwrap());
            tape.dense(flat, w, b).unwrap()
        };
        (tape.value(loss).data()[0], tape.backward(loss).unwrap())
    }
}

fn run_op(
    kind_of: impl Fn(&mut ChaCha8Rng) -> (OpKind, Vec<(&'static str, Tensor<f64>)>),
    seed: u64,
) -> Stats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Stats::default();
    for _ in 0..INSTANCES {
        let (kind, inputs) = kind_of(&mut rng);
        let names: Vec<String> = inputs.iter().map(|(n, _)| n.to_string()).collect();
        let mut case = OpCase::new(kind, inputs, &mut rng);
        check(&mut case, &names, 12, &mut rng, &mut stats);
    }
    stats
}

pub fn conv1d() -> Stats {
    run_op(
        |rng| {
            let (cin, cout, k) = (
                rng.gen_range(1..4),
                rng.gen_range(1..4),
                rng.gen_range(1..6),
            );
            let stride = rng.gen_range(1..4);
            let padding = if rng.gen_bool(0.5) {
                Padding::Same
            } else {
                Padding::Valid
            };
            let len = rng.gen_range(k..k + 9);
            let kind = OpKind::Conv1d { stride, padding };
            (
                kind,
                vec![
                    ("x", random_tensor(&[cin, len], rng)),
                    ("w", random_tensor(&[cout, cin, k], rng)),
                    ("b", random_tensor(&[cout], rng)),
                ],
            )
        },
        1,
    )
}

pub fn conv2d() -> Stats {
    run_op(
        |rng| {
            let (cin, cout) = (rng.gen_range(1..5), rng.gen_range(1..4));
            let (kr, kc) = match rng.gen_range(0..3) {
                0 => (7, 1),
                1 => (1, 7),
                _ => (rng.gen_range(1..8), rng.gen_range(1..8)),
            };
            let dilation = (rng.gen_range(1..5), rng.gen_range(1..5));
            let (f, t) = (rng.gen_range(2..18), rng.gen_range(2..25));
            (
                OpKind::Conv2d { dilation },
                vec![
                    ("x", random_tensor(&[cin, f, t], rng)),
                    ("w", random_tensor(&[cout, cin, kr, kc], rng)),
                    ("b", random_tensor(&[cout], rng)),
                ],
            )
        },
        2,
    )
}

pub fn dense() -> Stats {
    run_op(
        |rng| {
            let (din, dout) = (rng.gen_range(1..7), rng.gen_range(1..6));
            (
                OpKind::Dense,
                vec![
                    ("x", random_tensor(&[din], rng)),
                    ("w", random_tensor(&[dout, din], rng)),
                    ("b", random_tensor(&[dout], rng)),
                ],
            )
        },
        3,
    )
}

fn shape(rng: &mut ChaCha8Rng) -> Vec<usize> {
    vec![rng.gen_range(1..4), rng.gen_range(1..6)]
}

pub fn relu() -> Stats {
    run_op(
        |rng| (OpKind::Relu, vec![("x", away_from_zero(&shape(rng), rng))]),
        4,
    )
}

pub fn sigmoid() -> Stats {
    run_op(
        |rng| {
            (
                OpKind::Sigmoid,
                vec![("x", random_tensor(&shape(rng), rng).map(|v| 4.0 * v))],
            )
        },
        5,
    )
}

pub fn mul() -> Stats {
    run_op(
        |rng| {
            let s = shape(rng);
            (
                OpKind::Mul,
                vec![("x", random_tensor(&s, rng)), ("y", random_tensor(&s, rng))],
            )
        },
        6,
    )
}

pub fn reshape() -> Stats {
    run_op(
        |rng| {
            (
                OpKind::Reshape,
                vec![("x", random_tensor(&shape(rng), rng))],
            )
        },
        7,
    )
}

pub fn global_avg_pool() -> Stats {
    run_op(
        |rng| {
            (
                OpKind::GlobalAvgPool,
                vec![("x", random_tensor(&shape(rng), rng))],
            )
        },
        8,
    )
}

pub fn softmax_cross_entropy() -> Stats {
    run_op(
        |rng| {
            let k = rng.gen_range(2..9);
            let label = rng.gen_range(0..k);
            let logits = random_tensor(&[k], rng).map(|v| 3.0 * v);
            (OpKind::SoftmaxCrossEntropy { label }, vec![("x", logits)])
        },
        9,
    )
}

const BINS: usize = 17;
const FRAMES: usize = 24;

fn toy_sid(scheme: &LabelScheme, seed: u64) -> SpeakerIdNet<f64> {
    let cfg = SpeakerIdNetConfig::for_scheme(BINS, [32, 32, 32, 64], vec![1500], scheme);
    SpeakerIdNet::new(cfg, seed).unwrap()
}

/// Zero-initialized biases leave whole dead regions with pre-activations of
/// exactly zero, where ReLU has no derivative. Random biases move the check
/// to a generic point.
fn randomize_biases(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
    for p in store.iter_mut().filter(|p| p.name().ends_with(".bias")) {
        for v in p.value.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
}

fn spectrogram_like(rng: &mut ChaCha8Rng) -> Tensor<f64> {
    random_tensor(&[BINS, FRAMES], rng).map(|v| (v.abs() + 0.1).powf(0.3))
}

struct SidCase {
    net: SpeakerIdNet<f64>,
    input: Tensor<f64>,
    label: usize,
}

impl Objective for SidCase {
    fn store_mut(&mut self) -> &mut ParamStore<f64> {
        self.net.params_mut()
    }

    fn eval(&self) -> (f64, Gradients<f64>) {
        let mut tape = Tape::new();
        let x = tape.input(self.input.clone());
        let out = self.net.forward(&mut tape, x).unwrap();
        let loss = tape.softmax_cross_entropy(out.logits, self.label).unwrap();
        (tape.value(loss).data()[0], tape.backward(loss).unwrap())
    }
}

pub fn speaker_id_network() -> Stats {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut stats = Stats::default();
    for i in 0..INSTANCES {
        let scheme = LabelScheme::new(rng.gen_range(2..6), rng.gen_range(1..4)).unwrap();
        let mut net = toy_sid(&scheme, i as u64);
        randomize_biases(net.params_mut(), &mut rng);
        let names: Vec<String> = net.params().iter().map(|p| p.name().to_string()).collect();
        let mut case = SidCase {
            net,
            input: spectrogram_like(&mut rng),
            label: rng.gen_range(0..scheme.num_labels()),
        };
        check(&mut case, &names, 4, &mut rng, &mut stats);
    }
    stats
}

/// Enhancement followed by a frozen speaker-ID network; only the
/// enhancement parameters are perturbed.
struct ComposedCase {
    enh: EnhancementNet<f64>,
    sid: SpeakerIdNet<f64>,
    input: Tensor<f64>,
    label: usize,
}

impl Objective for ComposedCase {
    fn store_mut(&mut self) -> &mut ParamStore<f64> {
        self.enh.params_mut()
    }

    fn eval(&self) -> (f64, Gradients<f64>) {
        let mut tape = Tape::new();
        let out = compose(&self.enh, &self.sid, &mut tape, self.input.clone()).unwrap();
        let loss = tape
            .softmax_cross_entropy(out.sid.logits, self.label)
            .unwrap();
        (tape.value(loss).data()[0], tape.backward(loss).unwrap())
    }
}

pub fn enhancement_network() -> Stats {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut stats = Stats::default();
    for i in 0..INSTANCES {
        let scheme = LabelScheme::new(3, 2).unwrap();
        let mut sid = toy_sid(&scheme, 100 + i as u64);
        randomize_biases(sid.params_mut(), &mut rng);
        sid.params_mut().set_frozen(true);
        let cfg = EnhancementNetConfig {
            channels: 4,
            mask_bias_init: rng.gen_range(-1.0..1.0),
        };
        let mut enh = EnhancementNet::new(cfg, i as u64).unwrap();
        randomize_biases(enh.params_mut(), &mut rng);
        let names: Vec<String> = enh.params().iter().map(|p| p.name().to_string()).collect();
        let mut case = ComposedCase {
            enh,
            sid,
            input: spectrogram_like(&mut rng),
            label: rng.gen_range(0..scheme.num_labels()),
        };
        let (_, grads) = case.eval();
        assert!(grads.iter().all(|(name, _)| name.starts_with("enh.")));
        check(&mut case, &names, 4, &mut rng, &mut stats);
    }
    stats
}

/// Every suite by name.
pub const SUITES: [(&str, fn() -> Stats); 11] = [
    ("conv1d", conv1d),
    ("conv2d", conv2d),
    ("dense", dense),
    ("relu", relu),
    ("sigmoid", sigmoid),
    ("mul", mul),
    ("reshape", reshape),
    ("global_avg_pool", global_avg_pool),
    ("softmax_cross_entropy", softmax_cross_entropy),
    ("speaker-ID network", speaker_id_network),
    ("enhancement network", enhancement_network),
];
