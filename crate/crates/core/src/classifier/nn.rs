//! Minimal CNN building blocks with explicit forward/backward passes.
//!
//! Convolutions run as im2col + matrix multiply per sample; everything is
//! f32 and single-threaded, so identical inputs give bit-identical outputs.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView3, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }
}

/// 2-D convolution. Weights are stored flattened as (out_ch, in_ch*k*k) so
/// the forward pass is a single GEMM against the im2col buffer.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub shape: ConvShape,
    pub w: Array2<f32>,
    pub b: Array1<f32>,
    pub gw: Array2<f32>,
    pub gb: Array1<f32>,
}

impl Conv2d {
    pub fn new(shape: ConvShape, rng: &mut ChaCha8Rng) -> Conv2d {
        let fan_in = shape.in_ch * shape.kernel * shape.kernel;
        let limit = (6.0 / fan_in as f32).sqrt();
        let w = Array2::from_shape_fn((shape.out_ch, fan_in), |_| rng.random_range(-limit..limit));
        Conv2d {
            shape,
            w,
            b: Array1::zeros(shape.out_ch),
            gw: Array2::zeros((shape.out_ch, fan_in)),
            gb: Array1::zeros(shape.out_ch),
        }
    }

    fn im2col(&self, x: &ArrayView3<f32>) -> Array2<f32> {
        let ConvShape {
            in_ch,
            kernel,
            stride,
            pad,
            ..
        } = self.shape;
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let (oh, ow) = self.shape.out_hw(h, w);
        let mut cols = Array2::<f32>::zeros((in_ch * kernel * kernel, oh * ow));
        for c in 0..in_ch {
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let row = (c * kernel + ky) * kernel + kx;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cols[(row, oy * ow + ox)] = x[(c, iy as usize, ix as usize)];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, gcols: &Array2<f32>, h: usize, w: usize) -> Array3<f32> {
        let ConvShape {
            in_ch,
            kernel,
            stride,
            pad,
            ..
        } = self.shape;
        let (oh, ow) = self.shape.out_hw(h, w);
        let mut gx = Array3::<f32>::zeros((in_ch, h, w));
        for c in 0..in_ch {
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let row = (c * kernel + ky) * kernel + kx;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            gx[(c, iy as usize, ix as usize)] += gcols[(row, oy * ow + ox)];
                        }
                    }
                }
            }
        }
        gx
    }

    pub fn forward(&self, x: &Array4<f32>) -> Array4<f32> {
        let (n, _, h, w) = x.dim();
        let (oh, ow) = self.shape.out_hw(h, w);
        let mut y = Array4::<f32>::zeros((n, self.shape.out_ch, oh, ow));
        for i in 0..n {
            let cols = self.im2col(&x.index_axis(Axis(0), i));
            let out = self.w.dot(&cols);
            for oc in 0..self.shape.out_ch {
                let bias = self.b[oc];
                for oy in 0..oh {
                    for ox in 0..ow {
                        y[(i, oc, oy, ox)] = out[(oc, oy * ow + ox)] + bias;
                    }
                }
            }
        }
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array4<f32>, gy: &Array4<f32>) -> Array4<f32> {
        let (n, _, h, w) = x.dim();
        let (oh, ow) = self.shape.out_hw(h, w);
        let mut gx = Array4::<f32>::zeros(x.dim());
        for i in 0..n {
            let cols = self.im2col(&x.index_axis(Axis(0), i));
            let mut gy_mat = Array2::<f32>::zeros((self.shape.out_ch, oh * ow));
            for oc in 0..self.shape.out_ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        gy_mat[(oc, oy * ow + ox)] = gy[(i, oc, oy, ox)];
                    }
                }
            }
            self.gw += &gy_mat.dot(&cols.t());
            self.gb += &gy_mat.sum_axis(Axis(1));
            let gcols = self.w.t().dot(&gy_mat);
            gx.index_axis_mut(Axis(0), i).assign(&self.col2im(&gcols, h, w));
        }
        gx
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    pub fn parameter_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Fully connected layer, `y = x W^T + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f32>,
    pub b: Array1<f32>,
    pub gw: Array2<f32>,
    pub gb: Array1<f32>,
}

impl Linear {
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Linear {
        let limit = (1.0 / in_dim as f32).sqrt();
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-limit..limit));
        Linear {
            w,
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((out_dim, in_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    pub fn forward(&self, x: &Array2<f32>) -> Array2<f32> {
        x.dot(&self.w.t()) + &self.b
    }

    pub fn backward(&mut self, x: &Array2<f32>, gy: &Array2<f32>) -> Array2<f32> {
        self.gw += &gy.t().dot(x);
        self.gb += &gy.sum_axis(Axis(0));
        gy.dot(&self.w)
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    pub fn parameter_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

pub fn relu(x: &Array4<f32>) -> Array4<f32> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward(pre: &Array4<f32>, gy: &Array4<f32>) -> Array4<f32> {
    let mut gx = gy.clone();
    gx.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    gx
}

pub fn global_avg_pool(x: &Array4<f32>) -> Array2<f32> {
    let (n, c, h, w) = x.dim();
    let scale = 1.0 / (h * w) as f32;
    let mut y = Array2::<f32>::zeros((n, c));
    for i in 0..n {
        for ch in 0..c {
            let mut s = 0.0;
            for yy in 0..h {
                for xx in 0..w {
                    s += x[(i, ch, yy, xx)];
                }
            }
            y[(i, ch)] = s * scale;
        }
    }
    y
}

pub fn global_avg_pool_backward(gy: &Array2<f32>, dim: (usize, usize, usize, usize)) -> Array4<f32> {
    let (n, c, h, w) = dim;
    let scale = 1.0 / (h * w) as f32;
    let mut gx = Array4::<f32>::zeros(dim);
    for i in 0..n {
        for ch in 0..c {
            let g = gy[(i, ch)] * scale;
            for yy in 0..h {
                for xx in 0..w {
                    gx[(i, ch, yy, xx)] = g;
                }
            }
        }
    }
    gx
}

/// Compact reference feature extractor: three strided convolutions with
/// ReLU and a global average pool, 224x224x3 in, 32 features out. Small
/// enough that every trainer and evaluator contract is exercisable on a CPU.
#[derive(Debug, Clone)]
pub struct SmallCnn {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub conv3: Conv2d,
    cache: Option<CnnCache>,
}

#[derive(Debug, Clone)]
struct CnnCache {
    x: Array4<f32>,
    pre1: Array4<f32>,
    a1: Array4<f32>,
    pre2: Array4<f32>,
    a2: Array4<f32>,
    pre3: Array4<f32>,
}

pub const SMALL_CNN_FEATURES: usize = 32;

impl SmallCnn {
    pub fn new(seed: u64) -> SmallCnn {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv = |o, i, k, s, p, rng: &mut ChaCha8Rng| {
            Conv2d::new(
                ConvShape {
                    out_ch: o,
                    in_ch: i,
                    kernel: k,
                    stride: s,
                    pad: p,
                },
                rng,
            )
        };
        SmallCnn {
            conv1: conv(8, 3, 7, 4, 3, &mut rng),
            conv2: conv(16, 8, 3, 2, 1, &mut rng),
            conv3: conv(32, 16, 3, 2, 1, &mut rng),
            cache: None,
        }
    }

    fn forward_inner(&self, x: &Array4<f32>) -> (Array2<f32>, CnnCache) {
        let pre1 = self.conv1.forward(x);
        let a1 = relu(&pre1);
        let pre2 = self.conv2.forward(&a1);
        let a2 = relu(&pre2);
        let pre3 = self.conv3.forward(&a2);
        let a3 = relu(&pre3);
        let feats = global_avg_pool(&a3);
        (
            feats,
            CnnCache {
                x: x.clone(),
                pre1,
                a1,
                pre2,
                a2,
                pre3,
            },
        )
    }

    pub fn infer(&self, x: &Array4<f32>) -> Array2<f32> {
        self.forward_inner(x).0
    }

    pub fn forward_train(&mut self, x: &Array4<f32>) -> Array2<f32> {
        let (feats, cache) = self.forward_inner(x);
        self.cache = Some(cache);
        feats
    }

    pub fn backward(&mut self, grad_features: &Array2<f32>) {
        let cache = self.cache.take().expect("forward_train before backward");
        let dim3 = {
            let (n, _, h, w) = cache.pre3.dim();
            (n, self.conv3.shape.out_ch, h, w)
        };
        let g_a3 = global_avg_pool_backward(grad_features, dim3);
        let g_pre3 = relu_backward(&cache.pre3, &g_a3);
        let g_a2 = self.conv3.backward(&cache.a2, &g_pre3);
        let g_pre2 = relu_backward(&cache.pre2, &g_a2);
        let g_a1 = self.conv2.backward(&cache.a1, &g_pre2);
        let g_pre1 = relu_backward(&cache.pre1, &g_a1);
        let _ = self.conv1.backward(&cache.x, &g_pre1);
    }

    pub fn zero_grad(&mut self) {
        self.conv1.zero_grad();
        self.conv2.zero_grad();
        self.conv3.zero_grad();
    }

    pub fn parameter_count(&self) -> usize {
        self.conv1.parameter_count() + self.conv2.parameter_count() + self.conv3.parameter_count()
    }

    pub fn convs_mut(&mut self) -> [(&'static str, &mut Conv2d); 3] {
        [
            ("conv1", &mut self.conv1),
            ("conv2", &mut self.conv2),
            ("conv3", &mut self.conv3),
        ]
    }

    pub fn convs(&self) -> [(&'static str, &Conv2d); 3] {
        [
            ("conv1", &self.conv1),
            ("conv2", &self.conv2),
            ("conv3", &self.conv3),
        ]
    }
}
