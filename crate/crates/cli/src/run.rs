use std::path::{Path, PathBuf};

use stylemask::backend::{
    load_pretrained, weights_path_from_env, Backend, BackendDescriptor, ToyBackend,
    VggArchitecture, VGG19_WEIGHTS_FILE,
};
use stylemask::imagecore::{
    load_image, load_label_map, read_alphamap, resample_alpha, save_alphamap_png, save_image,
    write_alphamap, AlphaMap, ImageTensor, RegionPartition,
};
use stylemask::saliency::{generate_mask_with_report, MaskMethod, MaskMethodConfig};
use stylemask::styler::{stylize_with_observer, write_trace_csv, StyleConfig};

use crate::args::{
    BackendKind, ClassifyArgs, CommonArgs, MaskArgs, MaskFlags, Rgb, ShiftList, StylizeArgs,
    SuperpixelList,
};
use crate::settings::ConfigFile;
use crate::CliError;

const DEFAULT_MAX_SIDE: usize = 512;
const DEFAULT_TOPK: usize = 5;

struct BackendChoice {
    kind: BackendKind,
    weights_dir: Option<PathBuf>,
}

impl BackendChoice {
    fn resolve(common: &CommonArgs, cfg: &ConfigFile) -> Result<Self, CliError> {
        Ok(Self {
            kind: cfg
                .pick(common.backend, "backend")?
                .unwrap_or(BackendKind::Vgg),
            weights_dir: cfg.pick(common.weights_dir.clone(), "weights-dir")?,
        })
    }

    /// Descriptor known without loading any weights.
    fn descriptor(&self) -> BackendDescriptor {
        match self.kind {
            BackendKind::Toy => ToyBackend::new().descriptor().clone(),
            BackendKind::Vgg => VggArchitecture::vgg19().default_descriptor(),
        }
    }

    fn load(&self) -> Result<Box<dyn Backend>, CliError> {
        match self.kind {
            BackendKind::Toy => Ok(Box::new(ToyBackend::new())),
            BackendKind::Vgg => {
                let path = match &self.weights_dir {
                    Some(dir) => dir.join(VGG19_WEIGHTS_FILE),
                    None => weights_path_from_env().ok_or_else(|| {
                        CliError::Runtime(format!(
                            "vgg backend needs {VGG19_WEIGHTS_FILE}: pass --weights-dir or set {}",
                            stylemask::backend::WEIGHTS_DIR_ENV
                        ))
                    })?,
                };
                let net = load_pretrained(&path, self.descriptor())?;
                eprintln!("loaded {} (sha256 {})", path.display(), net.checksum());
                Ok(Box::new(net))
            }
        }
    }
}

/// An input image at working resolution, remembering its file size.
struct WorkingImage {
    image: ImageTensor,
    original: (usize, usize),
}

fn load_working(path: &Path, max_side: usize) -> Result<WorkingImage, CliError> {
    let image = load_image(path)?;
    let original = image.dims();
    let (h, w) = original;
    if h.max(w) <= max_side {
        return Ok(WorkingImage { image, original });
    }
    let scale = max_side as f64 / h.max(w) as f64;
    let (nh, nw) = (
        ((h as f64 * scale).round() as usize).max(1),
        ((w as f64 * scale).round() as usize).max(1),
    );
    eprintln!(
        "{}: resizing {h}x{w} to {nh}x{nw} (max side {max_side})",
        path.display()
    );
    Ok(WorkingImage {
        image: image.resized(nh, nw)?,
        original,
    })
}

/// Nearest-neighbor resampling keeps label values intact.
fn resample_labels(seg: &RegionPartition, h: usize, w: usize) -> Result<RegionPartition, CliError> {
    let (sh, sw) = seg.dims();
    let raw: Vec<u32> = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            seg.label(((y * sh) / h).min(sh - 1), ((x * sw) / w).min(sw - 1))
        })
        .collect();
    Ok(RegionPartition::from_raw_labels(h, w, &raw)?)
}

fn load_segmentation(path: &Path, content: &WorkingImage) -> Result<RegionPartition, CliError> {
    let seg = load_label_map(path)?;
    let working = content.image.dims();
    if seg.dims() == working {
        Ok(seg)
    } else if seg.dims() == content.original {
        resample_labels(&seg, working.0, working.1)
    } else {
        Err(CliError::Runtime(format!(
            "segmentation map {} is {}x{} but the content image is {}x{}",
            path.display(),
            seg.height(),
            seg.width(),
            content.original.0,
            content.original.1
        )))
    }
}

/// Mask settings merged from flags and config, validated up front.
struct MaskPlan {
    config: MaskMethodConfig,
    segmentation: Option<PathBuf>,
}

impl MaskPlan {
    fn resolve(flags: &MaskFlags, cfg: &ConfigFile) -> Result<Self, CliError> {
        let method = cfg
            .pick(flags.method, "method")?
            .unwrap_or(MaskMethod::PatchAveraged);
        let mut config = MaskMethodConfig::new(method);
        config.patch_size = cfg.pick(flags.patch_size, "patch-size")?;
        if let Some(ShiftList(s)) = cfg.pick(flags.shifts.clone(), "shifts")? {
            config.grid_shifts = Some(s);
        }
        if let Some(SuperpixelList(p)) =
            cfg.pick(flags.superpixel_params.clone(), "superpixel-params")?
        {
            config.superpixel_params = p;
        }
        config.fill_color = cfg.pick(flags.fill_color, "fill-color")?.map(|Rgb(c)| c);
        if let Some(a) = cfg.pick(flags.alpha_min, "alpha-min")? {
            config.alpha_min = a;
        }
        if let Some(a) = cfg.pick(flags.alpha_max, "alpha-max")? {
            config.alpha_max = a;
        }
        config
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;

        let segmentation = cfg.pick(flags.segmentation_map.clone(), "segmentation-map")?;
        match (method, &segmentation) {
            (MaskMethod::Segmentation, None) => {
                return Err(CliError::Usage(
                    "--method segmentation requires --segmentation-map".into(),
                ))
            }
            (MaskMethod::Segmentation, Some(_)) | (_, None) => {}
            (_, Some(_)) => {
                return Err(CliError::Usage(
                    "--segmentation-map is only used with --method segmentation".into(),
                ))
            }
        }
        Ok(Self {
            config,
            segmentation,
        })
    }

    fn run(&self, content: &WorkingImage, backend: &dyn Backend) -> Result<AlphaMap, CliError> {
        let seg = match &self.segmentation {
            Some(p) => Some(load_segmentation(p, content)?),
            None => None,
        };
        let outcome =
            generate_mask_with_report(&content.image, &self.config, backend, seg.as_ref())?;
        for pass in &outcome.passes {
            println!(
                "{}: {} regions, importance [{:.6}, {:.6}], top region {}",
                pass.description,
                pass.region_count,
                pass.min_importance,
                pass.max_importance,
                pass.top_region
            );
        }
        println!(
            "mask {}x{}: raw [{:.6}, {:.6}] -> alpha [{}, {}]",
            outcome.mask.height(),
            outcome.mask.width(),
            outcome.raw.min(),
            outcome.raw.max(),
            outcome.mask.min(),
            outcome.mask.max()
        );
        Ok(outcome.mask)
    }
}

/// `base` with `ext` appended; a trailing `.alphamap` or `.png` is dropped first.
fn with_suffix(base: &Path, ext: &str) -> PathBuf {
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("alphamap" | "png") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    let mut s = stem.into_os_string();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn save_mask_pair(mask: &AlphaMap, base: &Path) -> Result<(), CliError> {
    let (bin, png) = (with_suffix(base, "alphamap"), with_suffix(base, "png"));
    write_alphamap(mask, &bin)?;
    save_alphamap_png(mask, &png)?;
    eprintln!("wrote {} and {}", bin.display(), png.display());
    Ok(())
}

fn max_side(common: &CommonArgs, cfg: &ConfigFile) -> Result<usize, CliError> {
    let side = cfg
        .pick(common.max_side, "max-side")?
        .unwrap_or(DEFAULT_MAX_SIDE);
    if side == 0 {
        return Err(CliError::Usage("--max-side must be positive".into()));
    }
    Ok(side)
}

pub fn mask(args: MaskArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let content_path: PathBuf = cfg.require(args.content, "content")?;
    let output: PathBuf = cfg.require(args.output, "output")?;
    let plan = MaskPlan::resolve(&args.mask, &cfg)?;
    let backend = BackendChoice::resolve(&args.common, &cfg)?;
    let side = max_side(&args.common, &cfg)?;

    let content = load_working(&content_path, side)?;
    let backend = backend.load()?;
    let mask = plan.run(&content, backend.as_ref())?;
    save_mask_pair(&mask, &output)
}

enum AlphaSource {
    Uniform(f32),
    File(PathBuf),
    Generate(MaskPlan),
}

pub fn stylize(args: StylizeArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let content_path: PathBuf = cfg.require(args.content, "content")?;
    let style_path: PathBuf = cfg.require(args.style, "style")?;
    let output: PathBuf = cfg.require(args.output, "output")?;
    let uniform = cfg.pick(args.uniform_alpha, "uniform-alpha")?;
    let mask_file = cfg.pick(args.mask, "mask")?;
    let source = match (uniform, mask_file) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--uniform-alpha and --mask are mutually exclusive".into(),
            ))
        }
        (Some(a), None) if !(a.is_finite() && a >= 0.0) => {
            return Err(CliError::Usage(format!(
                "--uniform-alpha must be finite and >= 0, got {a}"
            )))
        }
        (Some(a), None) => AlphaSource::Uniform(a),
        (None, Some(p)) => AlphaSource::File(p),
        (None, None) => AlphaSource::Generate(MaskPlan::resolve(&args.mask_flags, &cfg)?),
    };
    let save_mask: Option<PathBuf> = cfg.pick(args.save_mask, "save-mask")?;
    let trace: Option<PathBuf> = cfg.pick(args.trace, "trace")?;
    let backend = BackendChoice::resolve(&args.common, &cfg)?;
    let side = max_side(&args.common, &cfg)?;

    let mut style_config = StyleConfig::for_backend(&backend.descriptor());
    if let Some(n) = cfg.pick(args.iterations, "iterations")? {
        style_config.iterations = n;
    }
    if let Some(s) = cfg.pick(args.step_size, "step-size")? {
        style_config.step_size = s;
    }
    if let Some(w) = cfg.pick(args.style_weight, "style-weight")? {
        style_config.style_weight = w;
    }
    if let Some(m) = cfg.pick(args.init, "init")? {
        style_config.init_mode = m;
    }
    if let Some(s) = cfg.pick(args.seed, "seed")? {
        style_config.seed = s;
    }
    style_config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let content = load_working(&content_path, side)?;
    let style = load_working(&style_path, side)?;
    let (h, w) = content.image.dims();
    let preloaded = match &source {
        AlphaSource::File(p) => Some(load_mask_file(p, &content)?),
        _ => None,
    };
    let backend = backend.load()?;
    let alpha = match source {
        AlphaSource::Uniform(a) => AlphaMap::constant(h, w, a)?,
        AlphaSource::File(_) => preloaded.expect("mask file loaded above"),
        AlphaSource::Generate(plan) => plan.run(&content, backend.as_ref())?,
    };
    if let Some(base) = &save_mask {
        save_mask_pair(&alpha, base)?;
    }

    let every = (style_config.iterations / 10).max(1);
    let out = stylize_with_observer(
        &content.image,
        &style.image,
        &alpha,
        &style_config,
        backend.as_ref(),
        |r| {
            if r.iteration % every == 0 || r.iteration == style_config.iterations {
                eprintln!(
                    "iteration {:>5}: content {:.6e} style {:.6e} total {:.6e}",
                    r.iteration, r.loss.content, r.loss.style, r.loss.total
                );
            }
        },
    )?;
    save_image(&out.image, &output)?;
    if let Some(p) = &trace {
        write_trace_csv(&out.trace, p)?;
    }
    eprintln!("wrote {}", output.display());
    Ok(())
}

fn load_mask_file(path: &Path, content: &WorkingImage) -> Result<AlphaMap, CliError> {
    let mask = read_alphamap(path)?;
    let working = content.image.dims();
    if mask.dims() == working {
        Ok(mask)
    } else if mask.dims() == content.original {
        Ok(resample_alpha(&mask, working.0, working.1)?)
    } else {
        Err(CliError::Runtime(format!(
            "mask {} is {}x{} but the content image is {}x{}",
            path.display(),
            mask.height(),
            mask.width(),
            content.original.0,
            content.original.1
        )))
    }
}

pub fn classify(args: ClassifyArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let path: PathBuf = cfg.require(args.content, "content")?;
    let k = cfg.pick(args.topk, "topk")?.unwrap_or(DEFAULT_TOPK);
    if k == 0 {
        return Err(CliError::Usage("--topk must be at least 1".into()));
    }
    let backend = BackendChoice::resolve(&args.common, &cfg)?;
    let side = max_side(&args.common, &cfg)?;

    let image = load_working(&path, side)?;
    let backend = backend.load()?;
    let probs = backend.classify(&image.image)?;
    let desc = backend.descriptor();
    for (class, p) in probs.top_k(k) {
        let name = desc
            .class_name(class)
            .map_or_else(|| format!("class{class}"), str::to_string);
        println!("{class}\t{name}\t{p:.6}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes_replace_known_extensions_only() {
        assert_eq!(
            with_suffix(Path::new("out/m"), "png"),
            PathBuf::from("out/m.png")
        );
        assert_eq!(
            with_suffix(Path::new("m.alphamap"), "png"),
            PathBuf::from("m.png")
        );
        assert_eq!(
            with_suffix(Path::new("m.v2"), "alphamap"),
            PathBuf::from("m.v2.alphamap")
        );
    }

    #[test]
    fn label_resampling_keeps_regions() {
        let seg = RegionPartition::from_raw_labels(2, 2, &[0, 1, 2, 3]).unwrap();
        let up = resample_labels(&seg, 4, 4).unwrap();
        assert_eq!(up.region_count(), 4);
        assert_eq!(up.label(3, 0), seg.label(1, 0));
        assert_eq!(up.label(1, 3), seg.label(0, 1));
    }
}
