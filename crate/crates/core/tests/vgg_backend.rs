use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, TensorView};
use stylemask::backend::{Backend, FeatureMap, FeatureSet, VggArchitecture, VggBackend};
use stylemask::imagecore::ImageTensor;
use stylemask::Error;

fn small_arch() -> VggArchitecture {
    VggArchitecture {
        blocks: vec![vec![4, 4], vec![6, 6], vec![8; 2], vec![8; 2], vec![8; 2]],
        classifier: vec![16, 16, 10],
        pool_size: 1,
        classify_size: 32,
    }
}

/// Random He-style weights keyed like a torchvision checkpoint.
fn archive(arch: &VggArchitecture, with_classifier: bool, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, scale: f32, rng: &mut ChaCha8Rng| {
        let n: usize = shape.iter().product();
        let bytes = (0..n)
            .flat_map(|_| (scale * rng.random_range(-1.0f32..1.0)).to_le_bytes())
            .collect();
        tensors.push((name, shape, bytes));
    };
    let (mut module, mut cin) = (0, 3);
    for block in &arch.blocks {
        for &cout in block {
            let scale = (6.0 / (9 * cin) as f32).sqrt();
            push(
                format!("features.{module}.weight"),
                vec![cout, cin, 3, 3],
                scale,
                &mut rng,
            );
            push(
                format!("features.{module}.bias"),
                vec![cout],
                0.05,
                &mut rng,
            );
            cin = cout;
            module += 2;
        }
        module += 1;
    }
    if with_classifier {
        let mut fan_in = cin * arch.pool_size * arch.pool_size;
        for (i, &out) in arch.classifier.iter().enumerate() {
            let scale = (6.0 / fan_in as f32).sqrt();
            push(
                format!("classifier.{}.weight", 3 * i),
                vec![out, fan_in],
                scale,
                &mut rng,
            );
            push(
                format!("classifier.{}.bias", 3 * i),
                vec![out],
                0.05,
                &mut rng,
            );
            fan_in = out;
        }
    }
    let views: HashMap<String, TensorView<'_>> = tensors
        .iter()
        .map(|(name, shape, bytes)| {
            (
                name.clone(),
                TensorView::new(Dtype::F32, shape.clone(), bytes).unwrap(),
            )
        })
        .collect();
    safetensors::serialize(&views, None).unwrap()
}

fn backend(with_classifier: bool) -> VggBackend {
    let arch = small_arch();
    let desc = arch.default_descriptor();
    VggBackend::from_bytes(&archive(&arch, with_classifier, 1), arch, desc).unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
}

#[test]
fn loads_from_file_with_stable_checksum() {
    let arch = small_arch();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.safetensors");
    std::fs::write(&path, archive(&arch, true, 1)).unwrap();
    let a = VggBackend::load(&path, arch.clone(), arch.default_descriptor()).unwrap();
    let b = VggBackend::load(&path, arch.clone(), arch.default_descriptor()).unwrap();
    assert_eq!(a.checksum(), b.checksum());
    assert_eq!(a.checksum().len(), 64);
    assert!(a.has_classifier());

    std::fs::write(&path, archive(&arch, true, 2)).unwrap();
    let c = VggBackend::load(&path, arch.clone(), arch.default_descriptor()).unwrap();
    assert_ne!(a.checksum(), c.checksum());
}

#[test]
fn missing_file_is_an_io_error() {
    let arch = small_arch();
    let err = VggBackend::load(
        "/nonexistent/net.safetensors",
        arch.clone(),
        arch.default_descriptor(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

#[test]
fn truncated_archive_is_a_weight_format_error() {
    let arch = small_arch();
    let bytes = archive(&arch, true, 1);
    let err = VggBackend::from_bytes(
        &bytes[..bytes.len() / 2],
        arch.clone(),
        arch.default_descriptor(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::WeightFormat(_)), "{err}");
}

#[test]
fn wrong_tensor_shape_is_a_weight_format_error() {
    let arch = small_arch();
    let mut wider = arch.clone();
    wider.blocks[0][0] = 5;
    let bytes = archive(&wider, true, 1);
    let err = VggBackend::from_bytes(&bytes, arch.clone(), arch.default_descriptor()).unwrap_err();
    assert!(matches!(err, Error::WeightFormat(_)), "{err}");
}

#[test]
fn features_only_archive_cannot_classify() {
    let net = backend(false);
    assert!(!net.has_classifier());
    let img = ImageTensor::filled(32, 32, [0.5; 3]).unwrap();
    assert!(matches!(net.classify(&img), Err(Error::Config(_))));
    // features still work
    net.extract_features(&img, &["conv1_1"]).unwrap();
}

#[test]
fn feature_shapes_follow_the_pooling_schedule() {
    let net = backend(false);
    let img = ImageTensor::filled(48, 32, [0.3, 0.6, 0.9]).unwrap();
    let feats = net
        .extract_features(
            &img,
            &["conv1_1", "conv2_2", "conv3_1", "conv4_2", "conv5_1"],
        )
        .unwrap();
    assert_eq!(feats["conv1_1"].shape(), (4, 48, 32));
    assert_eq!(feats["conv2_2"].shape(), (6, 24, 16));
    assert_eq!(feats["conv3_1"].shape(), (8, 12, 8));
    assert_eq!(feats["conv4_2"].shape(), (8, 6, 4));
    assert_eq!(feats["conv5_1"].shape(), (8, 3, 2));
    // outputs are post-activation
    assert!(feats.values().all(|f| f.data().iter().all(|&v| v >= 0.0)));
}

#[test]
fn unknown_layer_is_rejected() {
    let net = backend(false);
    let img = ImageTensor::filled(32, 32, [0.5; 3]).unwrap();
    assert!(matches!(
        net.extract_features(&img, &["fc7"]),
        Err(Error::Config(_))
    ));
}

#[test]
fn classify_produces_a_distribution() {
    let net = backend(true);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (h, w) in [(32, 32), (40, 24)] {
        let p = net.classify(&random_image(&mut rng, h, w)).unwrap();
        assert_eq!(p.len(), 10);
        let sum: f64 = p.probabilities().iter().sum();
        assert!((sum - 1.0).abs() < 1e-5);
    }
}

#[test]
fn batch_matches_single_calls_and_is_deterministic() {
    let net = backend(true);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let images: Vec<_> = (0..5).map(|_| random_image(&mut rng, 32, 32)).collect();
    let batch = net.classify_batch(&images).unwrap();
    let again = net.classify_batch(&images).unwrap();
    assert_eq!(batch, again);
    for (img, b) in images.iter().zip(&batch) {
        let single = net.classify(img).unwrap();
        for (x, y) in single.probabilities().iter().zip(b.probabilities()) {
            assert!((x - y).abs() <= 1e-5);
        }
    }
}

#[test]
fn pullback_matches_finite_differences() {
    let net = backend(false);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = ImageTensor::from_fn(16, 16, |_, _| {
        [
            0.2 + 0.6 * rng.random::<f64>(),
            0.2 + 0.6 * rng.random::<f64>(),
            0.2 + 0.6 * rng.random::<f64>(),
        ]
    })
    .unwrap();
    let layers = ["conv1_2", "conv3_1"];
    let (feats, pb) = net.trace_features(&x, &layers).unwrap();
    // random linear functional L = sum_l <R_l, F_l>
    let mut cot = FeatureSet::new();
    for (name, f) in &feats {
        let (c, h, w) = f.shape();
        let r = (0..c * h * w)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        cot.insert(name.clone(), FeatureMap::new(name, c, h, w, r).unwrap());
    }
    let functional = |img: &ImageTensor| -> f64 {
        let f = net.extract_features(img, &layers).unwrap();
        cot.iter()
            .map(|(name, r)| {
                r.data()
                    .iter()
                    .zip(f[name].data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum()
    };
    let grad = pb.pullback(&cot).unwrap();
    assert_eq!(grad.len(), x.data().len());

    // ReLU and max-pool switches make a few coordinates non-smooth at any
    // finite step, so most, not all, samples must agree
    let eps = 1e-3;
    let samples = 40;
    let mut close = 0;
    for _ in 0..samples {
        let i = rng.random_range(0..grad.len());
        let shifted = |d: f64| {
            let mut v = x.data().to_vec();
            v[i] += d;
            ImageTensor::new(16, 16, v).unwrap()
        };
        let fd = (functional(&shifted(eps)) - functional(&shifted(-eps))) / (2.0 * eps);
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-2);
        if rel < 1e-2 {
            close += 1;
        }
    }
    assert!(
        close * 10 >= samples * 9,
        "{close} of {samples} coordinates agree"
    );
}

fn reference_arch() -> VggArchitecture {
    VggArchitecture {
        blocks: vec![vec![4, 4], vec![6, 6], vec![8, 8], vec![8, 8], vec![8, 8]],
        classifier: vec![16, 16, 10],
        pool_size: 3,
        classify_size: 64,
    }
}

fn tensor_f64(st: &safetensors::SafeTensors<'_>, key: &str) -> Vec<f64> {
    let t = st.tensor(key).unwrap();
    match t.dtype() {
        Dtype::F64 => t
            .data()
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
        Dtype::F32 => t
            .data()
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect(),
        other => panic!("{key}: unexpected dtype {other:?}"),
    }
}

/// Weights, inputs and outputs produced by PyTorch for a narrow network with
/// torchvision's VGG layout; see tests/data/make_vgg_reference.py.
#[test]
fn matches_pytorch_reference() {
    let data = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let arch = reference_arch();
    let net = VggBackend::load(
        data.join("vgg_small.safetensors"),
        arch.clone(),
        arch.default_descriptor(),
    )
    .unwrap();
    let bytes = std::fs::read(data.join("vgg_small_reference.safetensors")).unwrap();
    let reference = safetensors::SafeTensors::deserialize(&bytes).unwrap();

    let image = ImageTensor::new(40, 48, tensor_f64(&reference, "features_input")).unwrap();
    let layers = [
        "conv1_1", "conv1_2", "conv2_2", "conv3_1", "conv4_2", "conv5_1",
    ];
    let feats = net.extract_features(&image, &layers).unwrap();
    for layer in layers {
        let expected = tensor_f64(&reference, layer);
        let got = feats[layer].data();
        assert_eq!(got.len(), expected.len(), "{layer}");
        let scale = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(scale > 1.0, "{layer} reference is degenerate");
        let err = got
            .iter()
            .zip(&expected)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(
            err <= 1e-4 * scale,
            "{layer}: max error {err}, scale {scale}"
        );
    }

    let image = ImageTensor::new(64, 64, tensor_f64(&reference, "classify_input")).unwrap();
    let probs = net.classify(&image).unwrap();
    let expected = tensor_f64(&reference, "probabilities");
    for (p, q) in probs.probabilities().iter().zip(&expected) {
        assert!(
            (p - q).abs() <= 1e-5,
            "{:?} vs {expected:?}",
            probs.probabilities()
        );
    }
}

#[test]
fn pullback_matches_pytorch_autograd() {
    let data = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let arch = reference_arch();
    let net = VggBackend::load(
        data.join("vgg_small.safetensors"),
        arch.clone(),
        arch.default_descriptor(),
    )
    .unwrap();
    let bytes = std::fs::read(data.join("vgg_small_reference.safetensors")).unwrap();
    let reference = safetensors::SafeTensors::deserialize(&bytes).unwrap();

    let image = ImageTensor::new(40, 48, tensor_f64(&reference, "features_input")).unwrap();
    let layers = ["conv1_2", "conv3_1", "conv5_1"];
    let (feats, pb) = net.trace_features(&image, &layers).unwrap();
    let cot: FeatureSet = layers
        .iter()
        .map(|&l| {
            let (c, h, w) = feats[l].shape();
            let r = tensor_f64(&reference, &format!("cotangent.{l}"));
            (l.to_string(), FeatureMap::new(l, c, h, w, r).unwrap())
        })
        .collect();
    let grad = pb.pullback(&cot).unwrap();
    let expected = tensor_f64(&reference, "input_gradient");
    assert_eq!(grad.len(), expected.len());
    let scale = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = grad
        .iter()
        .zip(&expected)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err <= 1e-4 * scale, "max error {err}, scale {scale}");
}
