//! Check suites reused by the acceptance runner.

use spect_interp::nn::ops;
use spect_interp::nn::{Tape, Tensor, Var};
use spect_interp::rng::Stream;

use super::{dot, max_relative_error, naive_strided_conv, numeric_gradient, random_tensor, random_tensor_away_from_zero};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const MSE_FD_TOLERANCE: f64 = 1e-6;
/// Gradient entries smaller than this are compared absolutely.
pub const FD_FLOOR: f64 = 1e-8;

pub type Builder = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>;

#[derive(Debug)]
pub struct GradCheck {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

fn loss_value(build: &Builder, inputs: &[Tensor<f64>]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let root = build(&mut tape, &vars);
    tape.value(root).data()[0]
}

/// Compares tape gradients of every input with central differences.
pub fn check(name: &str, build: Builder, inputs: Vec<Tensor<f64>>, tolerance: f64) -> GradCheck {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let root = build(&mut tape, &vars);
    let grads = tape.backward(root).expect("backward");
    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).expect("leaf gradient").data().to_vec();
        let f = |x: &Tensor<f64>| {
            let mut probe = inputs.clone();
            probe[i] = x.clone();
            loss_value(&build, &probe)
        };
        let numeric = numeric_gradient(&f, &inputs[i], FD_STEP);
        worst = worst.max(max_relative_error(&analytic, &numeric, FD_FLOOR));
    }
    GradCheck {
        name: name.to_owned(),
        max_error: worst,
        tolerance,
    }
}

/// Finite-difference checks of every differentiable op on random tensors.
pub fn gradient_checks(seed: u64) -> Vec<GradCheck> {
    let mut rng = Stream::new(seed, 0);
    let mut out = Vec::new();

    let x = random_tensor(&[2, 3, 8, 8], &mut rng);
    let k = random_tensor(&[4, 3, 3, 3], &mut rng);
    let b = random_tensor(&[4], &mut rng);
    let t = random_tensor(&[2, 4, 8, 8], &mut rng);
    out.push(check(
        "conv2d 3x3",
        Box::new(move |tp, v| {
            let y = tp.conv2d(v[0], v[1], v[2]).unwrap();
            let t = tp.leaf(t.clone(), false);
            tp.mse_loss(y, t).unwrap()
        }),
        vec![x, k, b],
        FD_TOLERANCE,
    ));

    let x = random_tensor(&[2, 3, 4, 6], &mut rng);
    let k = random_tensor(&[2, 3, 1, 1], &mut rng);
    let b = random_tensor(&[2], &mut rng);
    let t = random_tensor(&[2, 2, 4, 6], &mut rng);
    out.push(check(
        "conv2d 1x1",
        Box::new(move |tp, v| {
            let y = tp.conv2d(v[0], v[1], v[2]).unwrap();
            let t = tp.leaf(t.clone(), false);
            tp.mse_loss(y, t).unwrap()
        }),
        vec![x, k, b],
        FD_TOLERANCE,
    ));

    for stride in [(2, 2), (2, 1), (1, 2), (1, 1)] {
        let x = random_tensor(&[2, 3, 4, 4], &mut rng);
        let k = random_tensor(&[3, 2, 2, 2], &mut rng);
        let b = random_tensor(&[2], &mut rng);
        let t = random_tensor(&[2, 2, 4 * stride.0, 4 * stride.1], &mut rng);
        out.push(check(
            &format!("conv_transpose2d stride {stride:?}"),
            Box::new(move |tp, v| {
                let y = tp.conv_transpose2d(v[0], v[1], v[2], stride).unwrap();
                let t = tp.leaf(t.clone(), false);
                tp.mse_loss(y, t).unwrap()
            }),
            vec![x, k, b],
            FD_TOLERANCE,
        ));
    }

    let x = random_tensor(&[2, 3, 6, 8], &mut rng);
    let t = random_tensor(&[2, 3, 3, 4], &mut rng);
    out.push(check(
        "avgpool2x2",
        Box::new(move |tp, v| {
            let y = tp.avgpool2x2(v[0]).unwrap();
            let t = tp.leaf(t.clone(), false);
            tp.mse_loss(y, t).unwrap()
        }),
        vec![x],
        FD_TOLERANCE,
    ));

    let x = random_tensor_away_from_zero(&[2, 3, 5, 5], &mut rng);
    let t = random_tensor(&[2, 3, 5, 5], &mut rng);
    out.push(check(
        "relu",
        Box::new(move |tp, v| {
            let y = tp.relu(v[0]);
            let t = tp.leaf(t.clone(), false);
            tp.mse_loss(y, t).unwrap()
        }),
        vec![x],
        FD_TOLERANCE,
    ));

    let a = random_tensor(&[2, 3, 4, 4], &mut rng);
    let b = random_tensor(&[2, 5, 4, 4], &mut rng);
    let t = random_tensor(&[2, 8, 4, 4], &mut rng);
    out.push(check(
        "concat_channels",
        Box::new(move |tp, v| {
            let y = tp.concat_channels(v[0], v[1]).unwrap();
            let t = tp.leaf(t.clone(), false);
            tp.mse_loss(y, t).unwrap()
        }),
        vec![a, b],
        FD_TOLERANCE,
    ));

    let p = random_tensor(&[3, 7], &mut rng);
    let t = random_tensor(&[3, 7], &mut rng);
    out.push(check(
        "mse_loss",
        Box::new(|tp, v| tp.mse_loss(v[0], v[1]).unwrap()),
        vec![p, t],
        MSE_FD_TOLERANCE,
    ));

    // a miniature encoder/decoder touching every op at once
    let x = random_tensor(&[1, 1, 8, 8], &mut rng);
    let k1 = random_tensor(&[2, 1, 3, 3], &mut rng);
    let b1 = random_tensor(&[2], &mut rng);
    let ku = random_tensor(&[2, 2, 2, 2], &mut rng);
    let bu = random_tensor(&[2], &mut rng);
    let kh = random_tensor(&[1, 4, 1, 1], &mut rng);
    let bh = random_tensor(&[1], &mut rng);
    let t = random_tensor(&[1, 1, 8, 8], &mut rng);
    out.push(check(
        "composite network",
        Box::new(move |tp, v| {
            let h = tp.conv2d(v[0], v[1], v[2]).unwrap();
            let h = tp.relu(h);
            let p = tp.avgpool2x2(h).unwrap();
            let u = tp.conv_transpose2d(p, v[3], v[4], (2, 2)).unwrap();
            let c = tp.concat_channels(u, h).unwrap();
            let y = tp.conv2d(c, v[5], v[6]).unwrap();
            let t = tp.leaf(t.clone(), false);
            tp.mse_loss(y, t).unwrap()
        }),
        vec![x, k1, b1, ku, bu, kh, bh],
        FD_TOLERANCE,
    ));
    out
}

/// Largest `|<A x, y> - <x, A^T y>|` over `trials` random draws, for the
/// transposed convolution against a direct strided convolution, and for the
/// 3x3 convolution against its input gradient.
pub fn adjoint_gap(trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = Stream::new(seed, 1);
    let (mut worst_t, mut worst_c) = (0.0f64, 0.0f64);
    let strides = [(2, 2), (2, 1), (1, 2), (1, 1)];
    for trial in 0..trials {
        let stride = strides[trial % strides.len()];
        let b = rng.int_inclusive(1, 2) as usize;
        let ci = rng.int_inclusive(1, 4) as usize;
        let co = rng.int_inclusive(1, 4) as usize;
        let h = rng.int_inclusive(1, 6) as usize;
        let w = rng.int_inclusive(1, 6) as usize;

        let x = random_tensor(&[b, ci, h, w], &mut rng);
        let k = random_tensor(&[ci, co, 2, 2], &mut rng);
        let y = random_tensor(&[b, co, stride.0 * h, stride.1 * w], &mut rng);
        let zero = Tensor::zeros(&[co]);
        let tx = ops::conv_transpose2d(&x, &k, &zero, stride).unwrap();
        let cy = naive_strided_conv(&y, &k, stride);
        worst_t = worst_t.max((dot(tx.data(), y.data()) - dot(x.data(), cy.data())).abs());

        let hh = 2 * h;
        let x = random_tensor(&[b, ci, hh, w], &mut rng);
        let k = random_tensor(&[co, ci, 3, 3], &mut rng);
        let y = random_tensor(&[b, co, hh, w], &mut rng);
        let zero = Tensor::zeros(&[co]);
        let ax = ops::conv2d(&x, &k, &zero).unwrap();
        let aty = ops::conv2d_backward(&x, &k, &zero, &y, true).unwrap().input.unwrap();
        worst_c = worst_c.max((dot(ax.data(), y.data()) - dot(x.data(), aty.data())).abs());
    }
    (worst_t, worst_c)
}
