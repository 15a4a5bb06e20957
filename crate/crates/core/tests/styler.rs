use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stylemask::backend::{
    Backend, BackendDescriptor, ClassDistribution, FeatureMap, FeatureSet, Pullback, ToyBackend,
};
use stylemask::imagecore::{AlphaMap, ImageTensor};
use stylemask::styler::{
    content_loss, gram, loss_and_gradient, stylize, total_loss, trace_to_csv,
    weighted_content_loss, InitMode, StyleConfig, StyleTargets,
};
use stylemask::Error;

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageTensor {
    ImageTensor::from_fn(h, w, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
}

fn toy_config(iterations: usize) -> StyleConfig {
    let mut cfg = StyleConfig::for_backend(ToyBackend::new().descriptor());
    cfg.iterations = iterations;
    cfg
}

/// Smooth content image: horizontal gradient with a brighter disk.
fn content_fixture(side: usize) -> ImageTensor {
    let c = side as f64 / 2.0;
    ImageTensor::from_fn(side, side, |y, x| {
        let d = ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt();
        let base = 0.2 + 0.4 * x as f64 / side as f64;
        if d < side as f64 / 4.0 {
            [0.9, 0.8, base]
        } else {
            [base, 0.3, 0.5]
        }
    })
    .unwrap()
}

/// High-contrast stripes.
fn style_fixture(side: usize) -> ImageTensor {
    ImageTensor::from_fn(side, side, |y, x| {
        if (x / 4 + y / 8) % 2 == 0 {
            [0.95, 0.9, 0.1]
        } else {
            [0.05, 0.1, 0.3]
        }
    })
    .unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let backend = ToyBackend::new();
    // keep pixels away from 0/1 so the perturbed images stay valid
    let x = ImageTensor::from_fn(8, 8, |_, _| {
        [
            0.1 + 0.8 * rng.random::<f64>(),
            0.1 + 0.8 * rng.random::<f64>(),
            0.1 + 0.8 * rng.random::<f64>(),
        ]
    })
    .unwrap();
    let content = random_image(&mut rng, 8, 8);
    let style = random_image(&mut rng, 8, 8);
    let alpha = AlphaMap::from_fn(8, 8, |_, _| rng.random_range(0.0f32..5.0)).unwrap();
    let cfg = toy_config(0);
    let targets = StyleTargets::compute(&content, &style, &cfg, &backend).unwrap();
    let (_, grad) = loss_and_gradient(&x, &targets, &alpha, &cfg, &backend).unwrap();
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let i = rng.random_range(0..x.data().len());
        let eval = |delta: f64| {
            let mut d = x.data().to_vec();
            d[i] += delta;
            let img = ImageTensor::new(8, 8, d).unwrap();
            total_loss(&img, &targets, &alpha, &cfg, &backend)
                .unwrap()
                .total
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-3, "max relative error {worst}");
}

#[test]
fn constant_alpha_reduces_to_scalar_content_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let backend = ToyBackend::new();
    let cfg = toy_config(0);
    let content = random_image(&mut rng, 16, 16);
    let style = random_image(&mut rng, 16, 16);
    let x = random_image(&mut rng, 16, 16);
    let targets = StyleTargets::compute(&content, &style, &cfg, &backend).unwrap();
    let c = 3.5f32;
    let uniform = total_loss(
        &x,
        &targets,
        &AlphaMap::constant(16, 16, c).unwrap(),
        &cfg,
        &backend,
    )
    .unwrap();
    let feats = backend.extract_features(&x, &["gray"]).unwrap();
    let baseline =
        f64::from(c) * content_loss(&feats["gray"], &targets.content["gray"], 1.0).unwrap();
    assert!((uniform.content - baseline).abs() <= 1e-9 * baseline.abs());

    let zero = total_loss(
        &x,
        &targets,
        &AlphaMap::constant(16, 16, 0.0).unwrap(),
        &cfg,
        &backend,
    )
    .unwrap();
    assert_eq!(zero.content, 0.0);
    assert_eq!(zero.total, cfg.style_weight * zero.style);
}

#[test]
fn identical_images_have_zero_loss() {
    let img = content_fixture(16);
    let backend = ToyBackend::new();
    let cfg = toy_config(0);
    let targets = StyleTargets::compute(&img, &img, &cfg, &backend).unwrap();
    let loss = total_loss(
        &img,
        &targets,
        &AlphaMap::constant(16, 16, 5.0).unwrap(),
        &cfg,
        &backend,
    )
    .unwrap();
    assert_eq!(loss.total, 0.0);
}

#[test]
fn zero_iterations_return_the_content_image() {
    let content = content_fixture(24);
    let out = stylize(
        &content,
        &style_fixture(24),
        &AlphaMap::constant(24, 24, 5.0).unwrap(),
        &toy_config(0),
        &ToyBackend::new(),
    )
    .unwrap();
    assert_eq!(out.image, content);
    assert_eq!(out.trace.len(), 1);
}

#[test]
fn starting_at_the_optimum_stays_there() {
    let content = content_fixture(24);
    let out = stylize(
        &content,
        &content,
        &AlphaMap::constant(24, 24, 1.0).unwrap(),
        &toy_config(10),
        &ToyBackend::new(),
    )
    .unwrap();
    assert_eq!(out.trace[0].loss.total, 0.0);
    assert_eq!(out.image, content);
}

#[test]
fn heavier_content_weight_keeps_closer_to_content() {
    let content = content_fixture(32);
    let style = style_fixture(32);
    let backend = ToyBackend::new();
    let cfg = toy_config(50);
    let targets = StyleTargets::compute(&content, &style, &cfg, &backend).unwrap();
    let content_distance = |alpha: f32| {
        let out = stylize(
            &content,
            &style,
            &AlphaMap::constant(32, 32, alpha).unwrap(),
            &cfg,
            &backend,
        )
        .unwrap();
        let unit = AlphaMap::constant(32, 32, 1.0).unwrap();
        total_loss(&out.image, &targets, &unit, &cfg, &backend)
            .unwrap()
            .content
    };
    let free = content_distance(0.0);
    let anchored = content_distance(100.0);
    assert!(anchored < free, "alpha 100: {anchored}, alpha 0: {free}");
}

#[test]
fn trace_is_finite_and_decreasing_overall() {
    let content = content_fixture(32);
    let out = stylize(
        &content,
        &checker(32, 2),
        &AlphaMap::constant(32, 32, 1.0).unwrap(),
        &toy_config(100),
        &ToyBackend::new(),
    )
    .unwrap();
    assert_eq!(out.trace.len(), 101);
    assert!(out.trace.iter().all(|r| r.loss.total.is_finite()));
    assert!(out.trace.last().unwrap().loss.total <= out.trace[0].loss.total);
    assert!(out.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let csv = trace_to_csv(&out.trace);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("iteration,content_loss,style_loss,total_loss")
    );
    assert_eq!(lines.count(), 101);
}

#[test]
fn random_init_is_reproducible_per_seed() {
    let content = content_fixture(16);
    let style = style_fixture(16);
    let alpha = AlphaMap::constant(16, 16, 1.0).unwrap();
    let mut cfg = toy_config(5);
    cfg.init_mode = InitMode::Random;
    cfg.seed = 7;
    let backend = ToyBackend::new();
    let a = stylize(&content, &style, &alpha, &cfg, &backend).unwrap();
    let b = stylize(&content, &style, &alpha, &cfg, &backend).unwrap();
    assert_eq!(a.image, b.image);
    cfg.seed = 8;
    let c = stylize(&content, &style, &alpha, &cfg, &backend).unwrap();
    assert_ne!(a.image, c.image);
}

#[test]
fn mismatched_alpha_is_rejected() {
    let content = content_fixture(16);
    let err = stylize(
        &content,
        &content,
        &AlphaMap::constant(8, 16, 1.0).unwrap(),
        &toy_config(1),
        &ToyBackend::new(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Argument(_)));
}

/// Toy network with features blown up far past f64 range once squared.
struct Overflowing(ToyBackend);

struct ScaledPullback<'a>(Box<dyn Pullback + 'a>);

const BLOWUP: f64 = 1e200;

impl Pullback for ScaledPullback<'_> {
    fn pullback(&self, cotangents: &FeatureSet) -> stylemask::Result<Vec<f64>> {
        let g = self.0.pullback(cotangents)?;
        Ok(g.into_iter().map(|v| v * BLOWUP).collect())
    }
}

impl Backend for Overflowing {
    fn descriptor(&self) -> &BackendDescriptor {
        self.0.descriptor()
    }

    fn classify(&self, image: &ImageTensor) -> stylemask::Result<ClassDistribution> {
        self.0.classify(image)
    }

    fn trace_features<'a>(
        &'a self,
        image: &ImageTensor,
        layers: &[&str],
    ) -> stylemask::Result<(FeatureSet, Box<dyn Pullback + 'a>)> {
        let (mut feats, pb) = self.0.trace_features(image, layers)?;
        for f in feats.values_mut() {
            f.data_mut().iter_mut().for_each(|v| *v *= BLOWUP);
        }
        Ok((feats, Box::new(ScaledPullback(pb))))
    }
}

#[test]
fn non_finite_loss_reports_divergence() {
    let content = content_fixture(16);
    let alpha = AlphaMap::constant(16, 16, 1.0).unwrap();
    let mut cfg = toy_config(3);
    cfg.init_mode = InitMode::Random;
    let err = stylize(
        &content,
        &style_fixture(16),
        &alpha,
        &cfg,
        &Overflowing(ToyBackend::new()),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Divergence { iteration: 0 }), "{err}");
}

fn feature(c: usize, h: usize, w: usize, vals: &[f64]) -> FeatureMap {
    FeatureMap::new("f", c, h, w, vals[..c * h * w].to_vec()).unwrap()
}

proptest! {
    #[test]
    fn weighted_loss_with_constant_map_scales_plain_loss(
        c in 1usize..4, h in 1usize..5, w in 1usize..5,
        a in proptest::collection::vec(-3.0f64..3.0, 64),
        b in proptest::collection::vec(-3.0f64..3.0, 64),
        k in 0.0f32..50.0,
    ) {
        let (f, p) = (feature(c, h, w, &a), feature(c, h, w, &b));
        let weighted = weighted_content_loss(&f, &p, &AlphaMap::constant(h, w, k).unwrap()).unwrap();
        let plain = f64::from(k) * content_loss(&f, &p, 1.0).unwrap();
        prop_assert!((weighted - plain).abs() <= 1e-6 * plain.abs().max(1e-12));
    }

    #[test]
    fn gram_is_symmetric_psd(
        c in 1usize..6, h in 1usize..5, w in 1usize..5,
        a in proptest::collection::vec(-3.0f64..3.0, 6 * 16),
    ) {
        let g = gram(&feature(c, h, w, &a));
        let m = nalgebra::DMatrix::from_row_slice(c, c, g.data());
        prop_assert_eq!(&m, &m.transpose());
        let eig = m.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&e| e >= -1e-8), "{eig}");
    }
}

/// Binary checkerboard with square cells.
fn checker(side: usize, cell: usize) -> ImageTensor {
    ImageTensor::from_fn(side, side, |y, x| {
        if (x / cell + y / cell).is_multiple_of(2) {
            [1.0; 3]
        } else {
            [0.0; 3]
        }
    })
    .unwrap()
}
