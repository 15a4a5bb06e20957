use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::imagecore::{write_atomic, AlphaMap, ImageTensor};
use crate::styler::objective::{check_alpha, evaluate, layer_alphas};
use crate::styler::{InitMode, LossBreakdown, StyleConfig, StyleTargets};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Losses of one iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct StylizeOutput {
    pub image: ImageTensor,
    /// `iterations + 1` records: the starting point, then the iterate after
    /// each step. The last record belongs to `image`.
    pub trace: Vec<LossRecord>,
}

pub fn initial_image(content: &ImageTensor, mode: InitMode, seed: u64) -> ImageTensor {
    match mode {
        InitMode::Content => content.clone(),
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..content.data().len())
                .map(|_| rng.random::<f64>())
                .collect();
            ImageTensor::new(content.height(), content.width(), data)
                .expect("uniform samples lie in [0, 1)")
        }
    }
}

/// Minimizes the alpha-weighted style objective over the pixels of `x` with
/// Adam, clamping to `[0, 1]` after every step.
pub fn stylize(
    content: &ImageTensor,
    style: &ImageTensor,
    alpha: &AlphaMap,
    config: &StyleConfig,
    backend: &dyn Backend,
) -> Result<StylizeOutput> {
    stylize_with_observer(content, style, alpha, config, backend, |_| {})
}

/// [`stylize`], calling `observer` with every loss record as it is produced.
pub fn stylize_with_observer(
    content: &ImageTensor,
    style: &ImageTensor,
    alpha: &AlphaMap,
    config: &StyleConfig,
    backend: &dyn Backend,
    mut observer: impl FnMut(&LossRecord),
) -> Result<StylizeOutput> {
    config.validate()?;
    check_alpha(content, alpha)?;
    let targets = StyleTargets::compute(content, style, config, backend)?;
    let alphas = layer_alphas(alpha, &targets, config)?;

    let (h, w) = content.dims();
    let mut x = initial_image(content, config.init_mode, config.seed).into_data();
    let mut m = vec![0.0f64; x.len()];
    let mut v = vec![0.0f64; x.len()];
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let mut record =
        |iteration: usize, loss: LossBreakdown, trace: &mut Vec<LossRecord>| -> Result<()> {
            if !loss.total.is_finite() {
                return Err(Error::Divergence { iteration });
            }
            let r = LossRecord { iteration, loss };
            observer(&r);
            trace.push(r);
            Ok(())
        };

    for t in 1..=config.iterations {
        let image = ImageTensor::new(h, w, x.clone())?;
        let (loss, grad) = evaluate(&image, &targets, &alphas, config, backend, true)?;
        record(t - 1, loss, &mut trace)?;
        let grad = grad.expect("gradient requested");
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { iteration: t - 1 });
        }
        let bias1 = 1.0 - BETA1.powi(t as i32);
        let bias2 = 1.0 - BETA2.powi(t as i32);
        for i in 0..x.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            let step = config.step_size * (m[i] / bias1) / ((v[i] / bias2).sqrt() + EPSILON);
            x[i] = (x[i] - step).clamp(0.0, 1.0);
        }
    }
    let image = ImageTensor::new(h, w, x)?;
    let (loss, _) = evaluate(&image, &targets, &alphas, config, backend, false)?;
    record(config.iterations, loss, &mut trace)?;
    Ok(StylizeOutput { image, trace })
}

pub const TRACE_HEADER: &str = "iteration,content_loss,style_loss,total_loss";

pub fn trace_to_csv(trace: &[LossRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.iteration, r.loss.content, r.loss.style, r.loss.total
        );
    }
    out
}

pub fn write_trace_csv(trace: &[LossRecord], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), trace_to_csv(trace).as_bytes())
}
