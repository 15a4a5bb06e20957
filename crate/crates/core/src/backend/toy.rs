use crate::backend::{
    check_cotangent, Backend, BackendDescriptor, ClassDistribution, FeatureMap, FeatureSet,
    InputSizePolicy, Pullback,
};
use crate::error::Result;
use crate::imagecore::ImageTensor;

const SIDE: usize = 16;
const HALF: usize = SIDE / 2;
const LOGIT_SCALE: f64 = 10.0;

const EDGE_KERNELS: [[[f64; 3]; 3]; 3] = [
    [[1.0 / 9.0; 3]; 3],
    [[0.0, 0.0, 0.0], [-0.5, 0.0, 0.5], [0.0, 0.0, 0.0]],
    [[0.0, -0.5, 0.0], [0.0, 0.0, 0.0], [0.0, 0.5, 0.0]],
];
const EDGE_BIASES: [f64; 3] = [0.1, -0.2, 0.3];

/// A tiny fixed network whose every output can be checked by hand.
///
/// The input is reduced to a 16x16 luminance grid (channel mean, exact area
/// averaging). On top of that grid it exposes three layers:
///
/// * `gray`: the 1x16x16 grid itself
/// * `quadrants`: 4x8x8, channel `q` is quadrant `q` of the grid
///   (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right)
/// * `edges`: 3x16x16, `tanh` of fixed zero-padded 3x3 convolutions
///   (box blur, horizontal and vertical central difference) plus biases
///   `[0.1, -0.2, 0.3]`
///
/// Class `q`'s logit is 10 times the mean of quadrant `q`; probabilities are
/// the softmax of the four logits.
#[derive(Clone, Debug)]
pub struct ToyBackend {
    descriptor: BackendDescriptor,
}

impl Default for ToyBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl ToyBackend {
    pub const LAYERS: [&'static str; 3] = ["gray", "quadrants", "edges"];

    pub fn new() -> Self {
        Self {
            descriptor: BackendDescriptor {
                name: "toy".into(),
                class_count: 4,
                class_names: ["top-left", "top-right", "bottom-left", "bottom-right"]
                    .map(String::from)
                    .to_vec(),
                layers: Self::LAYERS.map(String::from).to_vec(),
                content_layers: vec!["gray".into()],
                style_layers: vec!["edges".into(), "quadrants".into()],
                input_size_policy: InputSizePolicy::Fixed {
                    height: SIDE,
                    width: SIDE,
                },
            },
        }
    }

    pub fn edge_biases() -> [f64; 3] {
        EDGE_BIASES
    }

    fn forward(&self, image: &ImageTensor) -> Forward {
        let rows = area_weights(image.height());
        let cols = area_weights(image.width());
        let lum = image.luminance();
        let w = image.width();
        let mut gray = [[0.0; SIDE]; SIDE];
        for (u, rw) in rows.iter().enumerate() {
            for (v, cw) in cols.iter().enumerate() {
                let mut acc = 0.0;
                for &(y, wy) in rw {
                    for &(x, wx) in cw {
                        acc += wy * wx * lum[y * w + x];
                    }
                }
                gray[u][v] = acc;
            }
        }
        let mut edges = [[[0.0; SIDE]; SIDE]; 3];
        for (k, kernel) in EDGE_KERNELS.iter().enumerate() {
            for u in 0..SIDE {
                for v in 0..SIDE {
                    let mut acc = EDGE_BIASES[k];
                    for (dy, krow) in kernel.iter().enumerate() {
                        for (dx, &kv) in krow.iter().enumerate() {
                            if let Some(g) = padded(&gray, u + dy, v + dx) {
                                acc += kv * g;
                            }
                        }
                    }
                    edges[k][u][v] = acc.tanh();
                }
            }
        }
        Forward {
            height: image.height(),
            width: image.width(),
            rows,
            cols,
            gray,
            edges,
        }
    }
}

/// `gray[u - 1][v - 1]` with zero padding, taking indices shifted by one.
fn padded(gray: &[[f64; SIDE]; SIDE], u1: usize, v1: usize) -> Option<f64> {
    let (u, v) = (u1.checked_sub(1)?, v1.checked_sub(1)?);
    (u < SIDE && v < SIDE).then(|| gray[u][v])
}

/// For each of the 16 output cells, the input indices it overlaps and the
/// overlap fraction of the cell. Each cell's weights sum to one.
fn area_weights(len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = len as f64 / SIDE as f64;
    (0..SIDE)
        .map(|u| {
            let (lo, hi) = (u as f64 * scale, (u + 1) as f64 * scale);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(len);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                    (overlap > 0.0).then_some((i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

struct Forward {
    height: usize,
    width: usize,
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
    gray: [[f64; SIDE]; SIDE],
    edges: [[[f64; SIDE]; SIDE]; 3],
}

impl Forward {
    fn quadrant_means(&self) -> [f64; 4] {
        let mut means = [0.0; 4];
        for (q, m) in means.iter_mut().enumerate() {
            let (qy, qx) = (q / 2, q % 2);
            let mut acc = 0.0;
            for i in 0..HALF {
                for j in 0..HALF {
                    acc += self.gray[qy * HALF + i][qx * HALF + j];
                }
            }
            *m = acc / (HALF * HALF) as f64;
        }
        means
    }

    fn layer(&self, name: &str) -> FeatureMap {
        let (channels, side, data): (usize, usize, Vec<f64>) = match name {
            "gray" => (1, SIDE, self.gray.iter().flatten().copied().collect()),
            "quadrants" => {
                let mut data = Vec::with_capacity(SIDE * SIDE);
                for q in 0..4 {
                    let (qy, qx) = (q / 2, q % 2);
                    for i in 0..HALF {
                        for j in 0..HALF {
                            data.push(self.gray[qy * HALF + i][qx * HALF + j]);
                        }
                    }
                }
                (4, HALF, data)
            }
            "edges" => (
                3,
                SIDE,
                self.edges.iter().flatten().flatten().copied().collect(),
            ),
            other => unreachable!("layer {other} was validated against the descriptor"),
        };
        FeatureMap::new(name, channels, side, side, data).expect("toy features are finite")
    }
}

impl Pullback for Forward {
    fn pullback(&self, cotangents: &FeatureSet) -> Result<Vec<f64>> {
        let mut dgray = [[0.0; SIDE]; SIDE];
        for (name, cot) in cotangents {
            check_cotangent(&self.layer(name), cot)?;
            match name.as_str() {
                "gray" => {
                    for u in 0..SIDE {
                        for v in 0..SIDE {
                            dgray[u][v] += cot.get(0, u, v);
                        }
                    }
                }
                "quadrants" => {
                    for q in 0..4 {
                        let (qy, qx) = (q / 2, q % 2);
                        for i in 0..HALF {
                            for j in 0..HALF {
                                dgray[qy * HALF + i][qx * HALF + j] += cot.get(q, i, j);
                            }
                        }
                    }
                }
                "edges" => {
                    for (k, kernel) in EDGE_KERNELS.iter().enumerate() {
                        for u in 0..SIDE {
                            for v in 0..SIDE {
                                let t = self.edges[k][u][v];
                                let dpre = cot.get(k, u, v) * (1.0 - t * t);
                                for (dy, krow) in kernel.iter().enumerate() {
                                    for (dx, &kv) in krow.iter().enumerate() {
                                        let (gu, gv) = (u + dy, v + dx);
                                        if gu >= 1 && gv >= 1 && gu <= SIDE && gv <= SIDE {
                                            dgray[gu - 1][gv - 1] += kv * dpre;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                _ => unreachable!("check_cotangent rejects unknown layers"),
            }
        }
        let mut grad = vec![0.0; self.height * self.width * 3];
        for (u, rw) in self.rows.iter().enumerate() {
            for (v, cw) in self.cols.iter().enumerate() {
                let g = dgray[u][v] / 3.0;
                if g == 0.0 {
                    continue;
                }
                for &(y, wy) in rw {
                    for &(x, wx) in cw {
                        let i = (y * self.width + x) * 3;
                        let d = wy * wx * g;
                        grad[i] += d;
                        grad[i + 1] += d;
                        grad[i + 2] += d;
                    }
                }
            }
        }
        Ok(grad)
    }
}

impl Backend for ToyBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn classify(&self, image: &ImageTensor) -> Result<ClassDistribution> {
        let logits = self
            .forward(image)
            .quadrant_means()
            .map(|m| LOGIT_SCALE * m);
        ClassDistribution::from_logits(&logits)
    }

    fn trace_features<'a>(
        &'a self,
        image: &ImageTensor,
        layers: &[&str],
    ) -> Result<(FeatureSet, Box<dyn Pullback + 'a>)> {
        self.descriptor.check_layers(layers)?;
        let fwd = self.forward(image);
        let features = layers
            .iter()
            .map(|&l| (l.to_string(), fwd.layer(l)))
            .collect();
        Ok((features, Box::new(fwd)))
    }
}
