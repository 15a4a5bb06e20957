//! VGG feature extractor and classifier backed by a safetensors archive.
//!
//! The archive uses torchvision's parameter names: `features.{i}.weight` /
//! `features.{i}.bias` for the convolutions (where `i` counts conv, ReLU and
//! pooling modules in order) and `classifier.{0,3,6}.weight` / `.bias` for the
//! dense head. All tensors must be little-endian `F32`. The dense head is
//! optional; an archive without it supports feature extraction only.
//!
//! Inputs in `[0, 1]` are normalized with the ImageNet channel statistics
//! before the first convolution. Named layers (`conv1_1` ... `conv5_4`)
//! expose the activation after the ReLU that follows each convolution.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use safetensors::{Dtype, SafeTensors};
use sha2::{Digest, Sha256};

use crate::backend::conv;
use crate::backend::{
    check_cotangent, Backend, BackendDescriptor, ClassDistribution, FeatureMap, FeatureSet,
    InputSizePolicy, Pullback,
};
use crate::error::{Error, Result};
use crate::imagecore::ImageTensor;

pub const WEIGHTS_DIR_ENV: &str = "STYLEMASK_WEIGHTS_DIR";
pub const VGG19_WEIGHTS_FILE: &str = "vgg19.safetensors";

const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// `$STYLEMASK_WEIGHTS_DIR/vgg19.safetensors`, if the variable is set.
pub fn weights_path_from_env() -> Option<PathBuf> {
    std::env::var_os(WEIGHTS_DIR_ENV).map(|d| PathBuf::from(d).join(VGG19_WEIGHTS_FILE))
}

/// Channel layout of a VGG-style network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VggArchitecture {
    /// Output channels of every convolution, grouped by pooling block.
    pub blocks: Vec<Vec<usize>>,
    /// Widths of the dense layers; the last entry is the class count.
    pub classifier: Vec<usize>,
    /// Side of the adaptive average pool in front of the dense head.
    pub pool_size: usize,
    /// Side of the square classification input.
    pub classify_size: usize,
}

struct ConvSpec {
    name: String,
    key: String,
    cin: usize,
    cout: usize,
}

impl VggArchitecture {
    pub fn vgg19() -> Self {
        Self {
            blocks: vec![
                vec![64, 64],
                vec![128, 128],
                vec![256; 4],
                vec![512; 4],
                vec![512; 4],
            ],
            classifier: vec![4096, 4096, 1000],
            pool_size: 7,
            classify_size: 224,
        }
    }

    pub fn class_count(&self) -> usize {
        self.classifier.last().copied().unwrap_or(0)
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.conv_specs().into_iter().map(|c| c.name).collect()
    }

    /// The conventional descriptor: content `conv4_2`, style `conv{1..5}_1`.
    pub fn default_descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: format!(
                "vgg{}",
                self.blocks.iter().map(Vec::len).sum::<usize>() + self.classifier.len()
            ),
            class_count: self.class_count(),
            class_names: Vec::new(),
            layers: self.layer_names(),
            content_layers: vec!["conv4_2".into()],
            style_layers: (1..=5).map(|b| format!("conv{b}_1")).collect(),
            input_size_policy: InputSizePolicy::Fixed {
                height: self.classify_size,
                width: self.classify_size,
            },
        }
    }

    fn conv_specs(&self) -> Vec<ConvSpec> {
        let mut specs = Vec::new();
        let mut module = 0;
        let mut cin = 3;
        for (b, block) in self.blocks.iter().enumerate() {
            for (k, &cout) in block.iter().enumerate() {
                specs.push(ConvSpec {
                    name: format!("conv{}_{}", b + 1, k + 1),
                    key: format!("features.{module}"),
                    cin,
                    cout,
                });
                cin = cout;
                module += 2;
            }
            module += 1;
        }
        specs
    }

    fn dense_specs(&self) -> Vec<(String, usize, usize)> {
        let last_channels = self
            .blocks
            .last()
            .and_then(|b| b.last())
            .copied()
            .unwrap_or(3);
        let mut fan_in = last_channels * self.pool_size * self.pool_size;
        self.classifier
            .iter()
            .enumerate()
            .map(|(i, &out)| {
                let spec = (format!("classifier.{}", 3 * i), fan_in, out);
                fan_in = out;
                spec
            })
            .collect()
    }
}

struct ConvLayer {
    name: String,
    cin: usize,
    cout: usize,
    /// Last convolution of its pooling block.
    pools_after: bool,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

struct Dense {
    weight: Vec<f32>,
    bias: Vec<f32>,
}

/// A loaded VGG network.
pub struct VggBackend {
    arch: VggArchitecture,
    descriptor: BackendDescriptor,
    convs: Vec<ConvLayer>,
    classifier: Option<Vec<Dense>>,
    checksum: String,
}

impl std::fmt::Debug for VggBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VggBackend")
            .field("descriptor", &self.descriptor)
            .field("classifier_loaded", &self.classifier.is_some())
            .field("checksum", &self.checksum)
            .finish()
    }
}

/// Loads VGG-19 from a safetensors archive.
pub fn load_pretrained(
    weights_path: impl AsRef<Path>,
    descriptor: BackendDescriptor,
) -> Result<VggBackend> {
    VggBackend::load(weights_path, VggArchitecture::vgg19(), descriptor)
}

fn read_f32(st: &SafeTensors<'_>, key: &str, shape: &[usize]) -> Result<Vec<f32>> {
    let view = st
        .tensor(key)
        .map_err(|_| Error::WeightFormat(format!("missing tensor {key}")))?;
    if view.dtype() != Dtype::F32 {
        return Err(Error::WeightFormat(format!(
            "tensor {key} has dtype {:?}, expected F32",
            view.dtype()
        )));
    }
    if view.shape() != shape {
        return Err(Error::WeightFormat(format!(
            "tensor {key} has shape {:?}, expected {shape:?}",
            view.shape()
        )));
    }
    let values: Vec<f32> = view
        .data()
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::WeightFormat(format!(
            "tensor {key} has non-finite values"
        )));
    }
    Ok(values)
}

impl VggBackend {
    pub fn load(
        weights_path: impl AsRef<Path>,
        arch: VggArchitecture,
        descriptor: BackendDescriptor,
    ) -> Result<Self> {
        let path = weights_path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, arch, descriptor)
    }

    pub fn from_bytes(
        bytes: &[u8],
        arch: VggArchitecture,
        descriptor: BackendDescriptor,
    ) -> Result<Self> {
        descriptor.validate()?;
        if descriptor.layers != arch.layer_names() {
            return Err(Error::Config(
                "descriptor layer set does not match the architecture".into(),
            ));
        }
        if descriptor.class_count != arch.class_count() {
            return Err(Error::Config(format!(
                "descriptor declares {} classes, architecture has {}",
                descriptor.class_count,
                arch.class_count()
            )));
        }
        let checksum = hex::encode(Sha256::digest(bytes));
        let st = SafeTensors::deserialize(bytes)
            .map_err(|e| Error::WeightFormat(format!("unreadable safetensors archive: {e}")))?;

        let specs = arch.conv_specs();
        let mut convs = Vec::with_capacity(specs.len());
        let block_ends: Vec<usize> = arch
            .blocks
            .iter()
            .scan(0, |n, b| {
                *n += b.len();
                Some(*n - 1)
            })
            .collect();
        for (i, spec) in specs.into_iter().enumerate() {
            convs.push(ConvLayer {
                weight: read_f32(
                    &st,
                    &format!("{}.weight", spec.key),
                    &[spec.cout, spec.cin, 3, 3],
                )?,
                bias: read_f32(&st, &format!("{}.bias", spec.key), &[spec.cout])?,
                name: spec.name,
                cin: spec.cin,
                cout: spec.cout,
                pools_after: block_ends.contains(&i),
            });
        }

        let dense = arch.dense_specs();
        let present = dense
            .iter()
            .filter(|(key, _, _)| st.tensor(&format!("{key}.weight")).is_ok())
            .count();
        let classifier = match present {
            0 => None,
            n if n == dense.len() => Some(
                dense
                    .iter()
                    .map(|(key, fan_in, out)| {
                        Ok(Dense {
                            weight: read_f32(&st, &format!("{key}.weight"), &[*out, *fan_in])?,
                            bias: read_f32(&st, &format!("{key}.bias"), &[*out])?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => {
                return Err(Error::WeightFormat(
                    "classifier tensors are incomplete".into(),
                ))
            }
        };

        Ok(Self {
            arch,
            descriptor,
            convs,
            classifier,
            checksum,
        })
    }

    /// SHA-256 of the weight archive, hex encoded.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn architecture(&self) -> &VggArchitecture {
        &self.arch
    }

    pub fn has_classifier(&self) -> bool {
        self.classifier.is_some()
    }

    fn normalized_input(image: &ImageTensor) -> Vec<f32> {
        let (h, w) = image.dims();
        let mut out = vec![0.0f32; 3 * h * w];
        for (p, px) in image.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * h * w + p] = (px[c] as f32 - IMAGENET_MEAN[c]) / IMAGENET_STD[c];
            }
        }
        out
    }

    /// Runs convolutions `0..=last`, handing every step to `visit`.
    fn run(&self, image: &ImageTensor, last: usize, mut visit: impl FnMut(Step)) -> Result<()> {
        let (mut h, mut w) = image.dims();
        let mut x = Self::normalized_input(image);
        for (i, layer) in self.convs.iter().enumerate().take(last + 1) {
            if h == 0 || w == 0 {
                return Err(Error::Argument(format!(
                    "image {}x{} is too small to reach layer {}",
                    image.height(),
                    image.width(),
                    layer.name
                )));
            }
            let mut y = conv::conv3x3(&x, layer.cin, h, w, &layer.weight, &layer.bias);
            conv::relu_inplace(&mut y);
            visit(Step::Conv {
                index: i,
                height: h,
                width: w,
                output: y.clone(),
            });
            x = y;
            if layer.pools_after && i < last {
                let (pooled, argmax) = conv::maxpool2(&x, layer.cout, h, w);
                visit(Step::Pool {
                    input_len: x.len(),
                    argmax,
                });
                x = pooled;
                h /= 2;
                w /= 2;
            }
        }
        Ok(())
    }

    fn logits(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        let dense = self.classifier.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "{}: classifier weights not loaded",
                self.descriptor.name
            ))
        })?;
        let side = self.arch.classify_size;
        let input = image.resized(side, side)?;
        let last = self.convs.len() - 1;
        let mut final_act = Vec::new();
        let (mut h, mut w) = (side, side);
        self.run(&input, last, |step| match step {
            Step::Conv {
                output,
                height,
                width,
                ..
            } => {
                final_act = output;
                h = height;
                w = width;
            }
            Step::Pool { .. } => {}
        })?;
        let channels = self.convs[last].cout;
        let (pooled, _) = conv::maxpool2(&final_act, channels, h, w);
        let (ph, pw) = (h / 2, w / 2);
        if ph == 0 || pw == 0 {
            return Err(Error::Config(
                "classify_size too small for this architecture".into(),
            ));
        }
        let mut x = conv::adaptive_avg_pool(&pooled, channels, ph, pw, self.arch.pool_size);
        for (i, layer) in dense.iter().enumerate() {
            x = conv::linear(&x, &layer.weight, &layer.bias);
            if i + 1 < dense.len() {
                conv::relu_inplace(&mut x);
            }
        }
        Ok(x.into_iter().map(f64::from).collect())
    }
}

enum Step {
    Conv {
        index: usize,
        height: usize,
        width: usize,
        /// Post-ReLU activation.
        output: Vec<f32>,
    },
    Pool {
        input_len: usize,
        argmax: Vec<u32>,
    },
}

struct VggTrace<'a> {
    net: &'a VggBackend,
    image_dims: (usize, usize),
    steps: Vec<Step>,
    shapes: BTreeMap<String, FeatureMap>,
}

impl Pullback for VggTrace<'_> {
    fn pullback(&self, cotangents: &FeatureSet) -> Result<Vec<f64>> {
        for (name, cot) in cotangents {
            let traced = self
                .shapes
                .get(name)
                .ok_or_else(|| Error::Argument(format!("layer {name} was not traced")))?;
            check_cotangent(traced, cot)?;
        }
        let mut grad: Option<Vec<f32>> = None;
        for step in self.steps.iter().rev() {
            match step {
                Step::Conv {
                    index,
                    height,
                    width,
                    output,
                } => {
                    let layer = &self.net.convs[*index];
                    if let Some(cot) = cotangents.get(&layer.name) {
                        let g = grad.get_or_insert_with(|| vec![0.0; output.len()]);
                        for (gi, c) in g.iter_mut().zip(cot.data()) {
                            *gi += *c as f32;
                        }
                    }
                    if let Some(g) = grad.as_mut() {
                        for (gi, o) in g.iter_mut().zip(output) {
                            if *o <= 0.0 {
                                *gi = 0.0;
                            }
                        }
                        grad = Some(conv::conv3x3_backward_input(
                            g,
                            layer.cin,
                            *height,
                            *width,
                            &layer.weight,
                            layer.cout,
                        ));
                    }
                }
                Step::Pool { input_len, argmax } => {
                    if let Some(g) = grad.as_ref() {
                        grad = Some(conv::maxpool2_backward(g, argmax, *input_len));
                    }
                }
            }
        }
        let (h, w) = self.image_dims;
        let mut pixel_grad = vec![0.0f64; h * w * 3];
        if let Some(g) = grad {
            for p in 0..h * w {
                for c in 0..3 {
                    pixel_grad[p * 3 + c] = f64::from(g[c * h * w + p] / IMAGENET_STD[c]);
                }
            }
        }
        Ok(pixel_grad)
    }
}

impl Backend for VggBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn classify(&self, image: &ImageTensor) -> Result<ClassDistribution> {
        ClassDistribution::from_logits(&self.logits(image)?)
    }

    fn trace_features<'a>(
        &'a self,
        image: &ImageTensor,
        layers: &[&str],
    ) -> Result<(FeatureSet, Box<dyn Pullback + 'a>)> {
        self.descriptor.check_layers(layers)?;
        let wanted: Vec<usize> = layers
            .iter()
            .map(|l| {
                self.convs
                    .iter()
                    .position(|c| c.name == *l)
                    .expect("checked")
            })
            .collect();
        let mut steps = Vec::new();
        let mut features = FeatureSet::new();
        if let Some(&last) = wanted.iter().max() {
            self.run(image, last, |step| {
                if let Step::Conv {
                    index,
                    height,
                    width,
                    output,
                } = &step
                {
                    if wanted.contains(index) {
                        let layer = &self.convs[*index];
                        let data = output.iter().map(|&v| f64::from(v)).collect();
                        let fm = FeatureMap::new(&layer.name, layer.cout, *height, *width, data)
                            .expect("relu outputs are finite");
                        features.insert(layer.name.clone(), fm);
                    }
                }
                steps.push(step);
            })?;
        }
        let trace = VggTrace {
            net: self,
            image_dims: image.dims(),
            steps,
            shapes: features.clone(),
        };
        Ok((features, Box::new(trace)))
    }
}
