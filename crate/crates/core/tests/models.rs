use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use speaker_mlt::kernel::{Tape, Tensor};
use speaker_mlt::mlt::LabelScheme;
use speaker_mlt::models::{
    compose, EnhancementNet, EnhancementNetConfig, SpeakerIdNet, SpeakerIdNetConfig,
    ENHANCEMENT_LAYERS, SID_KERNELS, SID_STRIDES,
};

fn enh(channels: usize, mask_bias_init: f64, seed: u64) -> EnhancementNet<f64> {
    EnhancementNet::new(
        EnhancementNetConfig {
            channels,
            mask_bias_init,
        },
        seed,
    )
    .unwrap()
}

#[test]
fn layer_geometry_matches_the_published_architecture() {
    let kernels: Vec<(usize, usize)> = ENHANCEMENT_LAYERS.iter().map(|l| l.0).collect();
    let dilations: Vec<(usize, usize)> = ENHANCEMENT_LAYERS.iter().map(|l| l.1).collect();
    let mut expected_kernels = vec![(1, 7), (7, 1)];
    expected_kernels.extend([(5, 5); 8]);
    expected_kernels.push((1, 1));
    assert_eq!(kernels, expected_kernels);
    assert_eq!(
        dilations,
        [(1, 1), (1, 1), (1, 1), (2, 1), (4, 1), (8, 1), (1, 1), (2, 2), (4, 4), (8, 8), (1, 1)]
    );
    assert_eq!(EnhancementNetConfig::default().channels, 48);
    assert_eq!(SID_KERNELS, [5, 7, 1, 1]);
    assert_eq!(SID_STRIDES, [1, 2, 1, 1]);
}

fn nonneg(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(0.0..2.0)).collect(),
    )
    .unwrap()
}

#[test]
fn enhancement_parameter_count_has_closed_form() {
    for c in [1usize, 4, 16, 48] {
        let expected = 8 * c + (7 * c + 1) * c + 8 * (25 * c + 1) * c + (c + 1);
        assert_eq!(
            enh(c, 0.0, 0).params().num_values(),
            expected,
            "channels {c}"
        );
    }
    assert_eq!(ENHANCEMENT_LAYERS.len(), 11);
}

#[test]
fn speaker_id_parameter_count_has_closed_form() {
    let cases: [(usize, [usize; 4], Vec<usize>, usize, usize); 3] = [
        (257, [1000, 1000, 1000, 1500], vec![1500], 1251, 2),
        (17, [32, 32, 32, 64], vec![1500], 20, 3),
        (40, [8, 8, 8, 16], vec![32, 24], 5, 1),
    ];
    for (bins, filters, fc, speakers, n) in cases {
        let scheme = LabelScheme::new(speakers, n).unwrap();
        let cfg = SpeakerIdNetConfig::for_scheme(bins, filters, fc.clone(), &scheme);
        let mut expected = 0;
        let mut cin = bins;
        for (f, k) in filters.iter().zip(SID_KERNELS) {
            expected += (cin * k + 1) * f;
            cin = *f;
        }
        for d in &fc {
            expected += (cin + 1) * d;
            cin = *d;
        }
        expected += (cin + 1) * speakers * n;
        let net = SpeakerIdNet::<f32>::new(cfg, 0).unwrap();
        assert_eq!(net.params().num_values(), expected);
    }
}

#[test]
fn mask_stays_open_and_never_amplifies() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..20 {
        let net = enh(4, rng.gen_range(-3.0..3.0), i);
        let input = nonneg(&[1, 17, 30], &mut rng);
        let mut tape = Tape::new();
        let x = tape.input(input.clone());
        let out = net.forward(&mut tape, x).unwrap();
        let mask = tape.value(out.mask);
        assert_eq!(mask.shape(), input.shape());
        assert!(mask.data().iter().all(|&m| m > 0.0 && m < 1.0));
        for ((&y, &x), &m) in tape
            .value(out.enhanced)
            .data()
            .iter()
            .zip(input.data())
            .zip(mask.data())
        {
            assert!(y <= x);
            assert_eq!(y, m * x);
        }
    }
}

#[test]
fn saturated_mask_stays_inside_the_open_interval() {
    for bias in [-800.0, 800.0] {
        let mut net = enh(2, bias, 1);
        zero_weights(&mut net);
        let mut tape = Tape::new();
        let x = tape.input(Tensor::filled(&[1, 5, 6], 1.0));
        let out = net.forward(&mut tape, x).unwrap();
        assert!(tape
            .value(out.mask)
            .data()
            .iter()
            .all(|&m| m > 0.0 && m < 1.0));
    }
}

#[test]
fn enhancement_preserves_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = EnhancementNet::<f32>::new(
        EnhancementNetConfig {
            channels: 4,
            mask_bias_init: 0.0,
        },
        2,
    )
    .unwrap();
    for bins in [17, 257] {
        for frames in [64, 298] {
            let input = nonneg(&[1, bins, frames], &mut rng).cast::<f32>();
            let mut tape = Tape::new();
            let x = tape.input(input);
            let out = net.forward(&mut tape, x).unwrap();
            assert_eq!(tape.value(out.mask).shape(), &[1, bins, frames]);
            assert_eq!(tape.value(out.enhanced).shape(), &[1, bins, frames]);
        }
    }
}

fn zero_weights(net: &mut EnhancementNet<f64>) {
    for p in net.params_mut().iter_mut() {
        if p.name() != "enh.conv11.bias" {
            p.value = Tensor::zeros(p.value.shape());
        }
    }
}

#[test]
fn composition_with_an_open_or_closed_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scheme = LabelScheme::new(6, 2).unwrap();
    let sid = SpeakerIdNet::<f64>::new(
        SpeakerIdNetConfig::for_scheme(17, [8, 8, 8, 16], vec![32], &scheme),
        9,
    )
    .unwrap();
    let input = nonneg(&[17, 40], &mut rng);
    let plain = sid.logits(input.clone()).unwrap();
    let silent = sid.logits(Tensor::zeros(&[17, 40])).unwrap();
    for (bias, reference) in [(30.0, &plain), (-30.0, &silent)] {
        let mut net = enh(4, bias, 0);
        zero_weights(&mut net);
        let mut tape = Tape::new();
        let out = compose(&net, &sid, &mut tape, input.clone()).unwrap();
        let logits = tape.value(out.sid.logits);
        assert_eq!(logits.shape(), &[scheme.num_labels()]);
        for (a, b) in logits.data().iter().zip(reference.data()) {
            assert!((a - b).abs() < 1e-9, "bias {bias}: {a} vs {b}");
        }
    }
}

#[test]
fn output_layer_spans_the_expanded_label_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (c, n) in [(10, 1), (10, 2), (10, 3), (1251, 2)] {
        let scheme = LabelScheme::new(c, n).unwrap();
        let cfg = SpeakerIdNetConfig::for_scheme(17, [8, 8, 8, 16], vec![32], &scheme);
        assert_eq!(cfg.output_dim, c * n);
        let net = SpeakerIdNet::<f32>::new(cfg, 1).unwrap();
        let logits = net.logits(nonneg(&[17, 25], &mut rng).cast()).unwrap();
        assert_eq!(logits.shape(), &[c * n]);
        assert_eq!(
            net.params().get("sid.out.weight").unwrap().value.shape(),
            &[c * n, 32]
        );
        let emb = net
            .extract_embedding(nonneg(&[17, 25], &mut rng).cast())
            .unwrap();
        assert_eq!(emb.shape(), &[32]);
    }
}

#[test]
fn checkpoints_rebuild_identical_networks() {
    let scheme = LabelScheme::new(4, 3).unwrap();
    let sid = SpeakerIdNet::<f32>::new(
        SpeakerIdNetConfig::for_scheme(9, [4, 4, 4, 8], vec![16], &scheme),
        3,
    )
    .unwrap();
    let back = SpeakerIdNet::<f32>::from_checkpoint(&sid.to_checkpoint([7; 32])).unwrap();
    assert_eq!(back.config(), sid.config());
    let input = Tensor::filled(&[9, 12], 0.5f32);
    assert_eq!(
        back.logits(input.clone()).unwrap(),
        sid.logits(input).unwrap()
    );
    assert!(EnhancementNet::<f32>::from_checkpoint(&sid.to_checkpoint([7; 32])).is_err());

    let e = EnhancementNet::<f32>::new(EnhancementNetConfig::default(), 4).unwrap();
    let back = EnhancementNet::<f32>::from_checkpoint(&e.to_checkpoint([1; 32])).unwrap();
    assert_eq!(back.config(), e.config());
    for (a, b) in back.params().iter().zip(e.params().iter()) {
        assert_eq!(a.value, b.value);
    }
}
