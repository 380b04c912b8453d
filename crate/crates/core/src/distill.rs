//! Feature distillation at desk scale: a teacher maps an image to a coarse
//! token grid, a single strided convolution acts as the student, and the
//! student is regressed onto the upsampled teacher features by SGD.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{interpolate, Frame, Kernel};

/// Side of the square teacher patch.
pub const TEACHER_PATCH: usize = 16;
pub const STUDENT_STRIDE: usize = 8;
pub const DEFAULT_KERNEL_SIZE: usize = 8;
pub const DEFAULT_CHANNELS: usize = 384;

/// An `h x w x c` grid stored row-major with channels innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        FeatureMap {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_data(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::shape(format!("{} values ({h}x{w}x{c})", h * w * c), data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature map contains non-finite values"));
        }
        Ok(FeatureMap { h, w, c, data })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    #[inline]
    fn cell_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let start = (y * self.w + x) * self.c;
        &mut self.data[start..start + self.c]
    }
}

/// Token grid dimensions for an `height x width` image.
pub fn teacher_dims(height: usize, width: usize) -> (usize, usize) {
    (height / TEACHER_PATCH, width / TEACHER_PATCH)
}

pub fn student_dims(height: usize, width: usize) -> (usize, usize) {
    (height / STUDENT_STRIDE, width / STUDENT_STRIDE)
}

/// Lays out `c` rows of `T` tokens (channel-major, tokens in row-major patch
/// order) as a `floor(H/16) x floor(W/16) x c` map.
pub fn reshape_tokens(tokens: &[Vec<f64>], height: usize, width: usize) -> Result<FeatureMap> {
    let (gh, gw) = teacher_dims(height, width);
    let t = gh * gw;
    let c = tokens.len();
    if c == 0 {
        return Err(Error::invalid("token tensor has no channels"));
    }
    for row in tokens {
        if row.len() != t {
            return Err(Error::shape(
                format!("{t} tokens ({gh}x{gw} for {height}x{width})"),
                format!("{} tokens", row.len()),
            ));
        }
    }
    let mut data = vec![0.0; t * c];
    for (ch, row) in tokens.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            data[i * c + ch] = *v;
        }
    }
    FeatureMap::from_data(gh, gw, c, data)
}

/// Per-channel upsampling with align-corners sampling: output cell `i` reads
/// source coordinate `i * (src - 1) / (dst - 1)`.
pub fn upsample_features(fm: &FeatureMap, target_h: usize, target_w: usize, kernel: Kernel) -> Result<FeatureMap> {
    if target_h < fm.h || target_w < fm.w {
        return Err(Error::invalid(format!(
            "upsample target {target_h}x{target_w} is smaller than source {}x{}",
            fm.h, fm.w
        )));
    }
    if fm.h == 0 || fm.w == 0 {
        return Err(Error::invalid("cannot upsample an empty feature map"));
    }
    if (target_h, target_w) == (fm.h, fm.w) {
        return Ok(fm.clone());
    }
    let coord = |i: usize, src: usize, dst: usize| {
        if dst <= 1 {
            0.0
        } else {
            i as f64 * (src - 1) as f64 / (dst - 1) as f64
        }
    };
    let mut out = FeatureMap::zeros(target_h, target_w, fm.c);
    for y in 0..target_h {
        let sy = coord(y, fm.h, target_h);
        for x in 0..target_w {
            let sx = coord(x, fm.w, target_w);
            for ch in 0..fm.c {
                let v = interpolate(fm.w, fm.h, |xx, yy| fm.get(yy, xx, ch), sx, sy, kernel);
                out.cell_mut(y, x)[ch] = v;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    SumSq,
    #[default]
    MeanSq,
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum_sq" => Ok(Reduction::SumSq),
            "mean_sq" => Ok(Reduction::MeanSq),
            other => Err(Error::invalid(format!("unknown reduction {other:?}; expected sum_sq or mean_sq"))),
        }
    }
}

/// Squared-error regression loss and its gradient with respect to `z`.
pub fn distill_loss(z: &FeatureMap, target: &FeatureMap, reduction: Reduction) -> Result<(f64, FeatureMap)> {
    if z.dims() != target.dims() {
        return Err(Error::shape(format!("{:?}", target.dims()), format!("{:?}", z.dims())));
    }
    let n = z.data.len().max(1) as f64;
    let scale = match reduction {
        Reduction::SumSq => 1.0,
        Reduction::MeanSq => 1.0 / n,
    };
    let mut loss = 0.0;
    let grad = z
        .data
        .iter()
        .zip(&target.data)
        .map(|(a, b)| {
            let d = a - b;
            loss += d * d;
            2.0 * d * scale
        })
        .collect();
    Ok((
        loss * scale,
        FeatureMap {
            h: z.h,
            w: z.w,
            c: z.c,
            data: grad,
        },
    ))
}

/// `theta -= eta * grad`, element-wise.
pub fn sgd_step(params: &mut [f64], grads: &[f64], eta: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(params.len(), grads.len()));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid(format!("eta must be positive, got {eta}")));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= eta * g;
    }
    Ok(())
}

fn check_rgb(image: &Frame, min_side: usize, who: &str) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::shape("3 channels", format!("{} channels", image.channels())));
    }
    if image.width() < min_side || image.height() < min_side {
        return Err(Error::invalid(format!(
            "{who} needs images of at least {min_side}x{min_side}, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Single strided convolution, `k x k x 3 -> c`, stride 8, zero padding
/// past the image edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyStudent {
    k: usize,
    c: usize,
    /// Indexed `((ky * k + kx) * 3 + ci) * c + co`.
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentGrad {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl StudentGrad {
    fn zeros(student: &ToyStudent) -> Self {
        StudentGrad {
            kernel: vec![0.0; student.kernel.len()],
            bias: vec![0.0; student.bias.len()],
        }
    }

    fn add_scaled(&mut self, other: &StudentGrad, s: f64) {
        self.kernel.iter_mut().zip(&other.kernel).for_each(|(a, b)| *a += s * b);
        self.bias.iter_mut().zip(&other.bias).for_each(|(a, b)| *a += s * b);
    }
}

impl ToyStudent {
    /// Uniform init in `+-1/sqrt(fan_in)`, zero bias.
    pub fn new(k: usize, c: usize, seed: u64) -> Result<Self> {
        if k == 0 || c == 0 {
            return Err(Error::invalid("kernel size and channel count must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / ((k * k * 3) as f64).sqrt();
        let kernel = (0..k * k * 3 * c).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(ToyStudent {
            k,
            c,
            kernel,
            bias: vec![0.0; c],
        })
    }

    pub fn from_params(k: usize, c: usize, kernel: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if k == 0 || c == 0 {
            return Err(Error::invalid("kernel size and channel count must be positive"));
        }
        if kernel.len() != k * k * 3 * c {
            return Err(Error::shape(k * k * 3 * c, kernel.len()));
        }
        if bias.len() != c {
            return Err(Error::shape(c, bias.len()));
        }
        Ok(ToyStudent { k, c, kernel, bias })
    }

    pub fn kernel_size(&self) -> usize {
        self.k
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn num_params(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }

    /// Flat parameter `i`: kernel entries first, then bias.
    pub fn param(&self, i: usize) -> f64 {
        if i < self.kernel.len() {
            self.kernel[i]
        } else {
            self.bias[i - self.kernel.len()]
        }
    }

    pub fn param_mut(&mut self, i: usize) -> &mut f64 {
        let nk = self.kernel.len();
        if i < nk {
            &mut self.kernel[i]
        } else {
            &mut self.bias[i - nk]
        }
    }

    fn window(&self, image: &Frame, oy: usize, ox: usize, buf: &mut [f64]) {
        let (w, h) = (image.width(), image.height());
        for ky in 0..self.k {
            let y = oy * STUDENT_STRIDE + ky;
            for kx in 0..self.k {
                let x = ox * STUDENT_STRIDE + kx;
                let base = (ky * self.k + kx) * 3;
                for ci in 0..3 {
                    buf[base + ci] = if x < w && y < h { image.get(x, y, ci) as f64 } else { 0.0 };
                }
            }
        }
    }

    pub fn forward(&self, image: &Frame) -> Result<FeatureMap> {
        check_rgb(image, STUDENT_STRIDE, "student")?;
        let (oh, ow) = student_dims(image.height(), image.width());
        let mut out = FeatureMap::zeros(oh, ow, self.c);
        let mut x = vec![0.0; self.k * self.k * 3];
        for oy in 0..oh {
            for ox in 0..ow {
                self.window(image, oy, ox, &mut x);
                let cell = out.cell_mut(oy, ox);
                cell.copy_from_slice(&self.bias);
                for (i, xi) in x.iter().enumerate() {
                    if *xi == 0.0 {
                        continue;
                    }
                    let row = &self.kernel[i * self.c..(i + 1) * self.c];
                    for (o, wv) in cell.iter_mut().zip(row) {
                        *o += xi * wv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Parameter gradient given `dL/dz` for the forward pass on `image`.
    pub fn backward(&self, image: &Frame, grad_out: &FeatureMap) -> Result<StudentGrad> {
        check_rgb(image, STUDENT_STRIDE, "student")?;
        let (oh, ow) = student_dims(image.height(), image.width());
        if grad_out.dims() != (oh, ow, self.c) {
            return Err(Error::shape(format!("{:?}", (oh, ow, self.c)), format!("{:?}", grad_out.dims())));
        }
        let mut g = StudentGrad::zeros(self);
        let mut x = vec![0.0; self.k * self.k * 3];
        for oy in 0..oh {
            for ox in 0..ow {
                self.window(image, oy, ox, &mut x);
                let go = &grad_out.data[(oy * ow + ox) * self.c..(oy * ow + ox + 1) * self.c];
                for (b, gv) in g.bias.iter_mut().zip(go) {
                    *b += gv;
                }
                for (i, xi) in x.iter().enumerate() {
                    if *xi == 0.0 {
                        continue;
                    }
                    let row = &mut g.kernel[i * self.c..(i + 1) * self.c];
                    for (r, gv) in row.iter_mut().zip(go) {
                        *r += xi * gv;
                    }
                }
            }
        }
        Ok(g)
    }

    pub fn apply_sgd(&mut self, grad: &StudentGrad, eta: f64) -> Result<()> {
        sgd_step(&mut self.kernel, &grad.kernel, eta)?;
        sgd_step(&mut self.bias, &grad.bias, eta)
    }
}

/// Anything that maps an image to a deterministic feature map.
pub trait TeacherProvider: Sync {
    fn features(&self, image: &Frame) -> Result<FeatureMap>;
}

/// Fixed seeded linear projection of non-overlapping 16x16 patches; the
/// trailing partial patches are dropped.
#[derive(Debug, Clone)]
pub struct MockTeacher {
    c: usize,
    /// Indexed `((py * 16 + px) * 3 + ci) * c + co`.
    projection: Vec<f64>,
}

impl MockTeacher {
    pub fn new(c: usize, seed: u64) -> Result<Self> {
        if c == 0 {
            return Err(Error::invalid("teacher channel count must be positive"));
        }
        let dim = TEACHER_PATCH * TEACHER_PATCH * 3;
        let bound = 1.0 / (dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..dim * c).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(MockTeacher { c, projection })
    }

    pub fn channels(&self) -> usize {
        self.c
    }
}

impl TeacherProvider for MockTeacher {
    fn features(&self, image: &Frame) -> Result<FeatureMap> {
        check_rgb(image, TEACHER_PATCH, "teacher")?;
        let (gh, gw) = teacher_dims(image.height(), image.width());
        let mut tokens = vec![vec![0.0; gh * gw]; self.c];
        let mut acc = vec![0.0; self.c];
        for ty in 0..gh {
            for tx in 0..gw {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for py in 0..TEACHER_PATCH {
                    for px in 0..TEACHER_PATCH {
                        for ci in 0..3 {
                            let v = image.get(tx * TEACHER_PATCH + px, ty * TEACHER_PATCH + py, ci) as f64;
                            let i = (py * TEACHER_PATCH + px) * 3 + ci;
                            let row = &self.projection[i * self.c..(i + 1) * self.c];
                            for (a, p) in acc.iter_mut().zip(row) {
                                *a += v * p;
                            }
                        }
                    }
                }
                for (ch, a) in acc.iter().enumerate() {
                    tokens[ch][ty * gw + tx] = *a;
                }
            }
        }
        reshape_tokens(&tokens, image.height(), image.width())
    }
}

/// A frozen student used as its own teacher.
impl TeacherProvider for ToyStudent {
    fn features(&self, image: &Frame) -> Result<FeatureMap> {
        self.forward(image)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub channels: usize,
    pub kernel_size: usize,
    pub eta: f64,
    pub epochs: usize,
    pub batch: usize,
    pub reduction: Reduction,
    pub upsample_kernel: Kernel,
    pub teacher_seed: u64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            channels: DEFAULT_CHANNELS,
            kernel_size: DEFAULT_KERNEL_SIZE,
            eta: 1e-3,
            epochs: 200,
            batch: 32,
            reduction: Reduction::MeanSq,
            upsample_kernel: Kernel::Bicubic,
            teacher_seed: 0,
            init_seed: 1,
            shuffle_seed: 2,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.kernel_size == 0 {
            return Err(Error::invalid("channels and kernel_size must be positive"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillOutcome {
    /// Mean of the per-step batch losses in each epoch, measured before the
    /// step's update.
    pub trace: Vec<EpochLoss>,
    /// Dataset loss before the first update.
    pub initial_loss: f64,
    /// Dataset loss after the last update.
    pub final_loss: f64,
}

/// Loss and parameter gradient for one image.
pub fn image_loss_and_grad(
    teacher: &dyn TeacherProvider,
    student: &ToyStudent,
    image: &Frame,
    reduction: Reduction,
    upsample_kernel: Kernel,
) -> Result<(f64, StudentGrad)> {
    let zt = teacher.features(image)?;
    let z = student.forward(image)?;
    let zt_up = upsample_features(&zt, z.h, z.w, upsample_kernel)?;
    let (loss, g) = distill_loss(&z, &zt_up, reduction)?;
    Ok((loss, student.backward(image, &g)?))
}

/// Mean loss over `images` without updating anything.
pub fn dataset_loss(
    teacher: &dyn TeacherProvider,
    student: &ToyStudent,
    images: &[Frame],
    reduction: Reduction,
    upsample_kernel: Kernel,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let losses = images
        .par_iter()
        .map(|img| {
            let zt = teacher.features(img)?;
            let z = student.forward(img)?;
            let zt_up = upsample_features(&zt, z.h, z.w, upsample_kernel)?;
            Ok(distill_loss(&z, &zt_up, reduction)?.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / images.len() as f64)
}

/// Minibatch SGD of `student` onto `teacher`. Batches come from a seeded
/// per-epoch shuffle; batch loss and gradient are means over the batch,
/// summed in index order so the trace is bit-reproducible.
pub fn distill(
    teacher: &dyn TeacherProvider,
    student: &mut ToyStudent,
    dataset: &[Frame],
    config: &DistillConfig,
) -> Result<DistillOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    if (student.channels(), student.kernel_size()) != (config.channels, config.kernel_size) {
        return Err(Error::shape(
            format!("student with {} channels, kernel {}", config.channels, config.kernel_size),
            format!("student with {} channels, kernel {}", student.channels(), student.kernel_size()),
        ));
    }
    let initial_loss = dataset_loss(teacher, student, dataset, config.reduction, config.upsample_kernel)?;
    if !initial_loss.is_finite() {
        return Err(Error::Divergence {
            eta: config.eta,
            epoch: 0,
            step: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for (step, batch) in order.chunks(config.batch).enumerate() {
            let per_image = batch
                .par_iter()
                .map(|&i| {
                    image_loss_and_grad(teacher, student, &dataset[i], config.reduction, config.upsample_kernel)
                })
                .collect::<Result<Vec<_>>>()?;
            let inv = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            let mut grad = StudentGrad::zeros(student);
            for (l, g) in &per_image {
                loss += l * inv;
                grad.add_scaled(g, inv);
            }
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    eta: config.eta,
                    epoch,
                    step,
                });
            }
            student.apply_sgd(&grad, config.eta)?;
            epoch_loss += loss;
            steps += 1;
        }
        trace.push(EpochLoss {
            epoch,
            mean_loss: epoch_loss / steps as f64,
        });
    }
    let final_loss = dataset_loss(teacher, student, dataset, config.reduction, config.upsample_kernel)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            eta: config.eta,
            epoch: config.epochs,
            step: 0,
        });
    }
    Ok(DistillOutcome {
        trace,
        initial_loss,
        final_loss,
    })
}

pub fn loss_trace_csv(trace: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for e in trace {
        out.push_str(&format!("{},{}\n", e.epoch, e.mean_loss));
    }
    out
}

/// Constant-colour RGB images with seeded colours. The student can fit the
/// mock teacher exactly on these, so distillation onto them is a convex
/// problem with zero minimum.
pub fn constant_colour_images(n: usize, height: usize, width: usize, seed: u64) -> Result<Vec<Frame>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let rgb: [f32; 3] = [rng.random(), rng.random(), rng.random()];
            let data = (0..height * width).flat_map(|_| rgb).collect();
            Frame::from_data(width, height, crate::raster::Band::Rgb, data)
        })
        .collect()
}
