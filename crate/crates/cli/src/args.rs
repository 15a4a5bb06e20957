use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use stylemask::saliency::{MaskMethod, SuperpixelParams};
use stylemask::styler::InitMode;

#[derive(Parser, Debug)]
#[command(
    name = "stylemask",
    version,
    about = "Style transfer whose strength follows an occlusion-saliency mask"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build an importance mask and write <output>.alphamap and <output>.png
    Mask(MaskArgs),
    /// Stylize a content image with a mask, a uniform alpha, or an inline mask
    Stylize(StylizeArgs),
    /// Print the backend's top classes for an image
    Classify(ClassifyArgs),
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Flat `key = value` file; flags take precedence over its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Classifier: toy (built in) or vgg (needs vgg19.safetensors)
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// Directory holding vgg19.safetensors (else $STYLEMASK_WEIGHTS_DIR)
    #[arg(long)]
    pub weights_dir: Option<PathBuf>,
    /// Images larger than this on either side are downscaled first
    #[arg(long)]
    pub max_side: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct MaskFlags {
    /// patch, patch-avg, superpixel or segmentation
    #[arg(long)]
    pub method: Option<MaskMethod>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Grid offsets for patch-avg, e.g. "0,0;16,0;0,16;16,16"
    #[arg(long)]
    pub shifts: Option<ShiftList>,
    /// SLIC passes as "segments,compactness;...", e.g. "50,10;100,10"
    #[arg(long)]
    pub superpixel_params: Option<SuperpixelList>,
    /// Occlusion color "r,g,b" in [0, 1]; defaults to the image mean
    #[arg(long)]
    pub fill_color: Option<Rgb>,
    #[arg(long)]
    pub alpha_min: Option<f32>,
    #[arg(long)]
    pub alpha_max: Option<f32>,
    /// 8- or 16-bit grayscale PNG label map (segmentation method)
    #[arg(long)]
    pub segmentation_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    #[arg(long)]
    pub content: Option<PathBuf>,
    /// Output base name; ".alphamap" and ".png" are appended
    #[arg(long, visible_alias = "out")]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub mask: MaskFlags,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct StylizeArgs {
    #[arg(long)]
    pub content: Option<PathBuf>,
    #[arg(long)]
    pub style: Option<PathBuf>,
    #[arg(long, visible_alias = "out")]
    pub output: Option<PathBuf>,
    /// Use this alpha everywhere instead of a saliency mask
    #[arg(long, conflicts_with = "mask")]
    pub uniform_alpha: Option<f32>,
    /// Precomputed .alphamap file
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Also write the mask used, as <path>.alphamap and <path>.png
    #[arg(long)]
    pub save_mask: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub style_weight: Option<f64>,
    /// content or random
    #[arg(long)]
    pub init: Option<InitMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the per-iteration losses as CSV
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub mask_flags: MaskFlags,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub content: Option<PathBuf>,
    #[arg(long)]
    pub topk: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    Toy,
    Vgg,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "toy" => Ok(Self::Toy),
            "vgg" | "vgg19" => Ok(Self::Vgg),
            other => Err(format!("unknown backend {other:?} (expected toy or vgg)")),
        }
    }
}

fn items(s: &str) -> impl Iterator<Item = &str> {
    s.split(';').map(str::trim).filter(|p| !p.is_empty())
}

fn pair<A: FromStr, B: FromStr>(s: &str) -> Option<(A, B)> {
    let (a, b) = s.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftList(pub Vec<(usize, usize)>);

impl FromStr for ShiftList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let shifts = items(s)
            .map(|p| pair(p).ok_or_else(|| format!("bad shift {p:?}, expected dy,dx")))
            .collect::<Result<Vec<_>, _>>()?;
        if shifts.is_empty() {
            return Err("shift list is empty".into());
        }
        Ok(Self(shifts))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelList(pub Vec<SuperpixelParams>);

impl FromStr for SuperpixelList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let params = items(s)
            .map(|p| {
                pair(p)
                    .map(|(segment_count, compactness)| SuperpixelParams {
                        segment_count,
                        compactness,
                    })
                    .ok_or_else(|| {
                        format!("bad superpixel pass {p:?}, expected segments,compactness")
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if params.is_empty() {
            return Err("superpixel parameter list is empty".into());
        }
        Ok(Self(params))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rgb(pub [f64; 3]);

impl FromStr for Rgb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("bad color {s:?}, expected r,g,b"))?;
        match parts[..] {
            [r, g, b] if parts.iter().all(|v| (0.0..=1.0).contains(v)) => Ok(Self([r, g, b])),
            [_, _, _] => Err(format!("color {s:?} has channels outside [0, 1]")),
            _ => Err(format!("bad color {s:?}, expected r,g,b")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists() {
        assert_eq!(
            "0,0; 16,0;0,16".parse::<ShiftList>().unwrap().0,
            vec![(0, 0), (16, 0), (0, 16)]
        );
        let sp = "50,10;200,20.5".parse::<SuperpixelList>().unwrap().0;
        assert_eq!(
            sp[1],
            SuperpixelParams {
                segment_count: 200,
                compactness: 20.5
            }
        );
        assert_eq!("0,0.5,1".parse::<Rgb>().unwrap().0, [0.0, 0.5, 1.0]);
    }

    #[test]
    fn rejects_malformed_values() {
        for bad in ["", "1", "1,2,3", "a,b", "-1,0"] {
            assert!(bad.parse::<ShiftList>().is_err(), "{bad}");
        }
        assert!("10".parse::<SuperpixelList>().is_err());
        assert!("255,0,0".parse::<Rgb>().is_err());
        assert!("0,0".parse::<Rgb>().is_err());
        assert!("gpu".parse::<BackendKind>().is_err());
    }

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
