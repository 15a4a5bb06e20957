//! f32 kernels for VGG-style networks: 3x3 same-padded convolution, 2x2
//! max pooling, adaptive average pooling and dense layers, plus the
//! input-gradient halves needed for pixel-space optimization.
//!
//! Tensors are channel-major `C x H x W` slices.

/// Upper bound on im2col buffer size, in floats.
const COL_BUDGET: usize = 1 << 23;

/// `c = a * b + beta * c` for row-major `a: m x k`, `b: k x n`, `c: m x n`
/// where each operand carries its own row stride.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    rsb: usize,
    c: &mut [f32],
    rsc: usize,
    beta: f32,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k.max(1) - 1) * csa);
    assert!(k == 0 || b.len() >= (k - 1) * rsb + n);
    assert!(c.len() >= (m - 1) * rsc + n);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            1,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

fn rows_per_chunk(cin: usize, height: usize, width: usize) -> usize {
    (COL_BUDGET / (cin * 9 * width).max(1)).clamp(1, height)
}

fn im2col(
    input: &[f32],
    cin: usize,
    height: usize,
    width: usize,
    r0: usize,
    r1: usize,
    col: &mut [f32],
) {
    let n = (r1 - r0) * width;
    for ci in 0..cin {
        let plane = &input[ci * height * width..(ci + 1) * height * width];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * n..][..n];
                for (ri, r) in (r0..r1).enumerate() {
                    let dst = &mut row[ri * width..(ri + 1) * width];
                    let sy = r as isize + ky as isize - 1;
                    if sy < 0 || sy >= height as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * width..(sy as usize + 1) * width];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + kx as isize - 1;
                        *d = if sx < 0 || sx >= width as isize {
                            0.0
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add(
    col: &[f32],
    cin: usize,
    height: usize,
    width: usize,
    r0: usize,
    r1: usize,
    grad: &mut [f32],
) {
    let n = (r1 - r0) * width;
    for ci in 0..cin {
        let plane = &mut grad[ci * height * width..(ci + 1) * height * width];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * n..][..n];
                for (ri, r) in (r0..r1).enumerate() {
                    let sy = r as isize + ky as isize - 1;
                    if sy < 0 || sy >= height as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * width..(sy as usize + 1) * width];
                    for x in 0..width {
                        let sx = x as isize + kx as isize - 1;
                        if sx >= 0 && sx < width as isize {
                            dst[sx as usize] += row[ri * width + x];
                        }
                    }
                }
            }
        }
    }
}

/// 3x3 convolution, stride 1, zero padding 1. `weight` is `[cout, cin, 3, 3]`.
pub(crate) fn conv3x3(
    input: &[f32],
    cin: usize,
    height: usize,
    width: usize,
    weight: &[f32],
    bias: &[f32],
) -> Vec<f32> {
    let cout = bias.len();
    let hw = height * width;
    let mut out = vec![0.0f32; cout * hw];
    for (co, b) in bias.iter().enumerate() {
        out[co * hw..(co + 1) * hw].fill(*b);
    }
    let chunk = rows_per_chunk(cin, height, width);
    let mut col = vec![0.0f32; cin * 9 * chunk * width];
    let mut r0 = 0;
    while r0 < height {
        let r1 = (r0 + chunk).min(height);
        let n = (r1 - r0) * width;
        im2col(input, cin, height, width, r0, r1, &mut col);
        gemm(
            cout,
            cin * 9,
            n,
            weight,
            (cin * 9, 1),
            &col,
            n,
            &mut out[r0 * width..],
            hw,
            1.0,
        );
        r0 = r1;
    }
    out
}

/// Gradient of [`conv3x3`] with respect to its input.
pub(crate) fn conv3x3_backward_input(
    grad_out: &[f32],
    cin: usize,
    height: usize,
    width: usize,
    weight: &[f32],
    cout: usize,
) -> Vec<f32> {
    let hw = height * width;
    let mut grad_in = vec![0.0f32; cin * hw];
    let chunk = rows_per_chunk(cin, height, width);
    let mut col = vec![0.0f32; cin * 9 * chunk * width];
    let mut r0 = 0;
    while r0 < height {
        let r1 = (r0 + chunk).min(height);
        let n = (r1 - r0) * width;
        // col = W^T * grad_out[:, rows]; W^T is read through swapped strides.
        gemm(
            cin * 9,
            cout,
            n,
            weight,
            (1, cin * 9),
            &grad_out[r0 * width..],
            hw,
            &mut col,
            n,
            0.0,
        );
        col2im_add(
            &col[..cin * 9 * n],
            cin,
            height,
            width,
            r0,
            r1,
            &mut grad_in,
        );
        r0 = r1;
    }
    grad_in
}

pub(crate) fn relu_inplace(x: &mut [f32]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// 2x2 max pooling with stride 2, flooring odd sizes. Returns the pooled
/// tensor and, for each output cell, the flat input index that won.
pub(crate) fn maxpool2(
    input: &[f32],
    channels: usize,
    height: usize,
    width: usize,
) -> (Vec<f32>, Vec<u32>) {
    let (oh, ow) = (height / 2, width / 2);
    let mut out = Vec::with_capacity(channels * oh * ow);
    let mut arg = Vec::with_capacity(channels * oh * ow);
    for c in 0..channels {
        let base = c * height * width;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * width + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * width + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward(grad_out: &[f32], argmax: &[u32], input_len: usize) -> Vec<f32> {
    let mut grad = vec![0.0f32; input_len];
    for (g, &i) in grad_out.iter().zip(argmax) {
        grad[i as usize] += g;
    }
    grad
}

/// Adaptive average pooling to `out x out` using the usual
/// `[floor(i*in/out), ceil((i+1)*in/out))` windows.
pub(crate) fn adaptive_avg_pool(
    input: &[f32],
    channels: usize,
    height: usize,
    width: usize,
    out: usize,
) -> Vec<f32> {
    let window = |i: usize, len: usize| (i * len / out, ((i + 1) * len).div_ceil(out));
    let mut res = Vec::with_capacity(channels * out * out);
    for c in 0..channels {
        let plane = &input[c * height * width..(c + 1) * height * width];
        for oy in 0..out {
            let (y0, y1) = window(oy, height);
            for ox in 0..out {
                let (x0, x1) = window(ox, width);
                let mut acc = 0.0f32;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += plane[y * width + x];
                    }
                }
                res.push(acc / ((y1 - y0) * (x1 - x0)) as f32);
            }
        }
    }
    res
}

/// Dense layer `y = W x + b` with `W: [out, in]`.
pub(crate) fn linear(x: &[f32], weight: &[f32], bias: &[f32]) -> Vec<f32> {
    let mut y = bias.to_vec();
    gemm(
        bias.len(),
        x.len(),
        1,
        weight,
        (x.len(), 1),
        x,
        1,
        &mut y,
        1,
        1.0,
    );
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(
        input: &[f32],
        cin: usize,
        h: usize,
        w: usize,
        weight: &[f32],
        bias: &[f32],
    ) -> Vec<f32> {
        let cout = bias.len();
        let mut out = vec![0.0; cout * h * w];
        for co in 0..cout {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = x as isize + kx as isize - 1;
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                    acc += weight[((co * cin + ci) * 3 + ky) * 3 + kx]
                                        * input[(ci * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                    }
                    out[(co * h + y) * w + x] = acc;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: u32) -> Vec<f32> {
        (0..n)
            .map(|i| {
                (((i as u32).wrapping_mul(2654435761).wrapping_add(seed) >> 8) % 1000) as f32
                    / 500.0
                    - 1.0
            })
            .collect()
    }

    #[test]
    fn conv_matches_direct_summation() {
        let (cin, cout, h, w) = (3, 5, 7, 6);
        let input = pseudo(cin * h * w, 1);
        let weight = pseudo(cout * cin * 9, 2);
        let bias = pseudo(cout, 3);
        let fast = conv3x3(&input, cin, h, w, &weight, &bias);
        let slow = naive_conv(&input, cin, h, w, &weight, &bias);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn conv_backward_is_the_adjoint() {
        // <conv(x) - b, g> == <x, conv_backward(g)>
        let (cin, cout, h, w) = (2, 3, 5, 4);
        let x = pseudo(cin * h * w, 7);
        let weight = pseudo(cout * cin * 9, 8);
        let g = pseudo(cout * h * w, 9);
        let y = conv3x3(&x, cin, h, w, &weight, &vec![0.0; cout]);
        let gx = conv3x3_backward_input(&g, cin, h, w, &weight, cout);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| f64::from(a * b)).sum();
        let rhs: f64 = x.iter().zip(&gx).map(|(a, b)| f64::from(a * b)).sum();
        assert!((lhs - rhs).abs() < 1e-4 * (1.0 + lhs.abs()));
    }

    #[test]
    fn maxpool_picks_maximum_and_routes_gradient() {
        let input = vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 8.0, 7.0];
        let (out, arg) = maxpool2(&input, 1, 3, 3);
        assert_eq!(out, vec![5.0]);
        assert_eq!(arg, vec![1]);
        let g = maxpool2_backward(&[2.0], &arg, 9);
        assert_eq!(g[1], 2.0);
        assert_eq!(g.iter().sum::<f32>(), 2.0);
    }

    #[test]
    fn adaptive_pool_replicates_small_inputs() {
        let out = adaptive_avg_pool(&[3.0], 1, 1, 1, 7);
        assert_eq!(out, vec![3.0; 49]);
        let out = adaptive_avg_pool(&[1.0, 2.0, 3.0, 4.0], 1, 2, 2, 1);
        assert_eq!(out, vec![2.5]);
    }

    #[test]
    fn linear_layer() {
        let y = linear(&[1.0, 2.0], &[1.0, 0.0, 0.5, -1.0], &[0.0, 1.0]);
        assert_eq!(y, vec![1.0, -0.5]);
    }
}
