//! Backward passes against central differences of the f64 reference
//! implementations. Each case records `(label, relative error)`.

use super::*;
use rangeseg::nn::*;
use rangeseg::objectives::*;

pub type Checks = Vec<(String, f64)>;

const EPS: f64 = 1e-3;
pub const TOL: f64 = 1e-3;

fn check(out: &mut Checks, label: &str, analytic: &[f32], f: &mut dyn FnMut(&[f64]) -> f64, at: &[f64]) {
    let coords = sample_coords(at.len(), 64);
    let numeric = numeric_grad(f, at, &coords, EPS);
    let picked: Vec<f64> = coords.iter().map(|&i| f64::from(analytic[i])).collect();
    out.push((label.to_string(), rel_err(&picked, &numeric)));
}

#[allow(clippy::too_many_arguments)]
fn slc_case(
    out: &mut Checks,
    seed: u64,
    shape: [usize; 4],
    k: usize,
    co: usize,
    alpha: usize,
    stride: usize,
    mode: WidthPadding,
) {
    let mut g = rng(seed);
    let ci = shape[3];
    let x = random_tensor(&mut g, shape);
    let dims = [k, k, ci, co, alpha];
    let kernel = SlcKernel::from_parts(
        dims,
        random_vec(&mut g, k * k * ci * co * alpha),
        random_vec(&mut g, co * alpha),
    )
    .unwrap();
    let pad = PadSpec::same(k, k, mode);
    let (y, grads) = if alpha == 1 && stride != 1 {
        let ck = ConvKernel::from_parts([k, k, ci, co], kernel.weights().to_vec(), kernel.bias().to_vec()).unwrap();
        let y = conv_forward(&x, &ck, stride, &pad).unwrap();
        let r = random_tensor(&mut g, y.shape());
        (r.clone(), conv_backward(&x, &ck, stride, &pad, &r).unwrap())
    } else {
        let y = slc_forward(&x, &kernel, &pad).unwrap();
        let r = random_tensor(&mut g, y.shape());
        (r.clone(), slc_backward(&x, &kernel, &pad, &r).unwrap())
    };
    let r = to_f64(y.data());
    let (xd, wd, bd) = (to_f64(x.data()), to_f64(kernel.weights()), to_f64(kernel.bias()));
    let label = format!("slc k={k} alpha={alpha} stride={stride} {mode:?}");

    let mut fx = |v: &[f64]| {
        let xx = Dense {
            shape,
            data: v.to_vec(),
        };
        project(&slc_reference(&xx, &wd, &bd, dims, stride, mode).data, &r)
    };
    check(out, &format!("{label} input"), grads.input.data(), &mut fx, &xd);
    let xx = Dense::from_tensor(&x);
    let mut fw = |v: &[f64]| project(&slc_reference(&xx, v, &bd, dims, stride, mode).data, &r);
    check(out, &format!("{label} weights"), &grads.weights, &mut fw, &wd);
    let mut fb = |v: &[f64]| project(&slc_reference(&xx, &wd, v, dims, stride, mode).data, &r);
    check(out, &format!("{label} bias"), &grads.bias, &mut fb, &bd);
}

pub fn slc_all_alphas(out: &mut Checks) {
    let h = 6;
    for (i, alpha) in [1, 2, h].into_iter().enumerate() {
        for mode in [WidthPadding::Cyclic, WidthPadding::Zeros] {
            slc_case(out, 10 + i as u64, [2, h, 8, 3], 3, 4, alpha, 1, mode);
        }
    }
    slc_case(out, 20, [1, 5, 7, 2], 5, 3, 2, 1, WidthPadding::Cyclic);
    slc_case(out, 21, [1, 4, 6, 3], 1, 2, 4, 1, WidthPadding::Zeros);
}

pub fn strided_convolution(out: &mut Checks) {
    slc_case(out, 30, [2, 4, 8, 3], 3, 4, 1, 2, WidthPadding::Cyclic);
    slc_case(out, 31, [1, 4, 9, 2], 3, 3, 1, 2, WidthPadding::Zeros);
    slc_case(out, 32, [1, 3, 12, 2], 3, 2, 1, 3, WidthPadding::Cyclic);
}

pub fn softmax_gradient(out: &mut Checks) {
    let mut g = rng(40);
    let logits = random_tensor(&mut g, [1, 2, 3, 5]).map(|v| 3.0 * v);
    let r = random_tensor(&mut g, logits.shape());
    let p = softmax(&logits);
    let analytic = softmax_backward(&p, &r).unwrap();
    let rd = to_f64(r.data());
    let mut f = |v: &[f64]| project(&softmax_reference(v, 5), &rd);
    check(out, "softmax", analytic.data(), &mut f, &to_f64(logits.data()));
}

pub fn cross_entropy_gradient(out: &mut Checks) {
    let mut g = rng(41);
    let logits = random_tensor(&mut g, [2, 2, 3, 4]).map(|v| 2.0 * v);
    let targets: Vec<u16> = (0..12).map(|i| (i * 7 % 4) as u16).collect();
    for opts in [LossOptions::no_ignore(), LossOptions::default()] {
        let ce = cross_entropy(&softmax(&logits), &targets, &opts).unwrap();
        let ignore = opts.ignore_index;
        let mut f = |v: &[f64]| cross_entropy_reference(&softmax_reference(v, 4), 4, &targets, ignore);
        check(out, "cross entropy", ce.grad.data(), &mut f, &to_f64(logits.data()));
    }
}

pub fn dice_gradient(out: &mut Checks) {
    let mut g = rng(42);
    let logits = random_tensor(&mut g, [1, 3, 4, 4]).map(|v| 2.0 * v);
    let targets: Vec<u16> = (0..12).map(|i| (i * 5 % 4) as u16).collect();
    for opts in [LossOptions::no_ignore(), LossOptions::default()] {
        let ignore = opts.ignore_index;
        let probs = softmax(&logits);
        let d = dice_loss(&probs, &targets, &opts).unwrap();
        let mut fp = |v: &[f64]| dice_reference(v, 4, &targets, ignore);
        check(out, "dice wrt probs", d.grad.data(), &mut fp, &to_f64(probs.data()));
        let through = softmax_backward(&probs, &d.grad).unwrap();
        let mut fl = |v: &[f64]| dice_reference(&softmax_reference(v, 4), 4, &targets, ignore);
        check(out, "dice wrt logits", through.data(), &mut fl, &to_f64(logits.data()));
    }
}

pub fn normalization_gradient(out: &mut Checks) {
    let mut g = rng(43);
    let x = random_tensor(&mut g, [2, 3, 4, 3]);
    let gamma = random_vec(&mut g, 3);
    let beta = random_vec(&mut g, 3);
    let r = random_tensor(&mut g, x.shape());
    let (_, cache) = batch_stats_norm(&x, &gamma, &beta).unwrap();
    let grads = batch_stats_norm_backward(&cache, &gamma, &r).unwrap();
    let (rd, gd, bd) = (to_f64(r.data()), to_f64(&gamma), to_f64(&beta));
    let shape = x.shape();
    let mut fx = |v: &[f64]| {
        project(
            &norm_reference(
                &Dense {
                    shape,
                    data: v.to_vec(),
                },
                &gd,
                &bd,
                1e-5,
            )
            .data,
            &rd,
        )
    };
    check(out, "norm input", grads.input.data(), &mut fx, &to_f64(x.data()));
    let xd = Dense::from_tensor(&x);
    let mut fg = |v: &[f64]| project(&norm_reference(&xd, v, &bd, 1e-5).data, &rd);
    check(out, "norm gamma", &grads.gamma, &mut fg, &gd);
    let mut fb = |v: &[f64]| project(&norm_reference(&xd, &gd, v, 1e-5).data, &rd);
    check(out, "norm beta", &grads.beta, &mut fb, &bd);
}

pub fn upsample_gradient(out: &mut Checks) {
    let mut g = rng(44);
    let x = random_tensor(&mut g, [2, 2, 3, 2]);
    let y = upsample_width(&x, 3).unwrap();
    out.push((
        "upsample forward".into(),
        upsample_reference(&Dense::from_tensor(&x), 3).max_abs_diff(&y),
    ));
    let r = random_tensor(&mut g, y.shape());
    let analytic = upsample_width_backward(&r, 3).unwrap();
    let rd = to_f64(r.data());
    let shape = x.shape();
    let mut f = |v: &[f64]| {
        project(
            &upsample_reference(
                &Dense {
                    shape,
                    data: v.to_vec(),
                },
                3,
            )
            .data,
            &rd,
        )
    };
    check(out, "upsample", analytic.data(), &mut f, &to_f64(x.data()));
}

pub fn relu_and_add_gradients(out: &mut Checks) {
    let mut g = rng(45);
    let x = random_tensor(&mut g, [1, 2, 4, 3]);
    let r = random_tensor(&mut g, x.shape());
    let analytic = relu_backward(&x, &r).unwrap();
    let rd = to_f64(r.data());
    let mut f = |v: &[f64]| v.iter().zip(&rd).map(|(a, b)| a.max(0.0) * b).sum();
    check(out, "relu", analytic.data(), &mut f, &to_f64(x.data()));
    let s = add(&x, &r).unwrap();
    let add_err = (0..s.len())
        .map(|i| f64::from((s.data()[i] - (x.data()[i] + r.data()[i])).abs()))
        .fold(0.0, f64::max);
    out.push(("add".into(), add_err));
}

pub type Case = (&'static str, fn(&mut Checks));

pub const CASES: [Case; 8] = [
    ("slc", slc_all_alphas),
    ("strided conv", strided_convolution),
    ("softmax", softmax_gradient),
    ("cross entropy", cross_entropy_gradient),
    ("dice", dice_gradient),
    ("normalization", normalization_gradient),
    ("upsample", upsample_gradient),
    ("relu/add", relu_and_add_gradients),
];
