use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};
use crate::rng::Stream;

/// A trainable tensor with its gradient slot and Adam moments.
#[derive(Debug, Clone)]
pub struct Parameter<T: Real = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
    first_moment: Vec<T>,
    second_moment: Vec<T>,
    step: u64,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let n = value.len();
        Self {
            name: name.into(),
            value,
            grad: None,
            first_moment: vec![T::ZERO; n],
            second_moment: vec![T::ZERO; n],
            step: 0,
        }
    }

    /// Zero tensor of the given shape.
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, Tensor::zeros(shape))
    }

    /// He-uniform initialisation: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    pub fn he_uniform(name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut Stream) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64(rng.range(-bound, bound))).collect();
        Self::new(name, Tensor::from_parts(shape.to_vec(), data))
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.first_moment, &self.second_moment)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    /// Applies one update to every parameter and clears the gradients.
    ///
    /// Nothing is modified unless every parameter carries a gradient.
    pub fn step<T: Real>(&self, params: &mut [Parameter<T>]) -> Result<()> {
        if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
            return Err(Error::MissingGradient(p.name.clone()));
        }
        for p in params.iter_mut() {
            let grad = p.grad.take().expect("checked above");
            if grad.shape() != p.value.shape() {
                return Err(Error::shape("adam_step", grad.shape(), p.value.shape()));
            }
            p.step += 1;
            let t = p.step as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
            let (ob1, ob2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
            let step_size = T::from_f64(self.lr / c1);
            let inv_c2 = T::from_f64(1.0 / c2);
            let eps = T::from_f64(self.eps);
            for (((w, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(p.first_moment.iter_mut())
                .zip(p.second_moment.iter_mut())
            {
                *m = b1 * *m + ob1 * g;
                *v = b2 * *v + ob2 * g * g;
                let denom = (*v * inv_c2).sqrt() + eps;
                *w = *w - step_size * *m / denom;
            }
        }
        Ok(())
    }
}
