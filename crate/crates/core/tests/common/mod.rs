#![allow(dead_code)]

use stylemask::imagecore::ImageTensor;

pub const BACKGROUND: f64 = 0.3;
pub const SQUARE: (usize, usize, usize) = (6, 38, 20); // top, left, side

/// 64x64 gray image with a white 20x20 square inside the top-right quadrant.
pub fn planted_fixture() -> ImageTensor {
    let (top, left, side) = SQUARE;
    ImageTensor::from_fn(64, 64, |y, x| {
        if (top..top + side).contains(&y) && (left..left + side).contains(&x) {
            [1.0; 3]
        } else {
            [BACKGROUND; 3]
        }
    })
    .unwrap()
}

fn softmax(logits: &[f64; 4]) -> [f64; 4] {
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    logits.map(|l| l.exp() / z)
}

/// Occlusion scores of the four 32x32 quadrants of the planted fixture
/// under black fill, from the toy network's definition: logit q is
/// 10 x (mean gray level of quadrant q).
pub fn planted_quadrant_oracle() -> [f64; 4] {
    let (_, _, side) = SQUARE;
    let bright = (side * side) as f64;
    let mut means = [BACKGROUND; 4];
    means[1] = (bright * 1.0 + (1024.0 - bright) * BACKGROUND) / 1024.0;
    let reference = softmax(&means.map(|m| 10.0 * m));
    let mut scores = [0.0; 4];
    for q in 0..4 {
        let mut occluded = means;
        occluded[q] = 0.0;
        let p = softmax(&occluded.map(|m| 10.0 * m));
        scores[q] = reference
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
    }
    scores
}
