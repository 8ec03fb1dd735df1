use rand::Rng;

use crate::error::Result;
use crate::nn::{
    batchnorm2d, batchnorm2d_backward, batchnorm2d_eval, conv2d, conv2d_backward, relu_backward,
    relu_inplace, BatchNormCache, Mode, Parameter, Tensor,
};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Scalar> Conv2d<T> {
    /// He-style uniform init: `U(-b, b)` with `b = sqrt(6 / fan_in)`, zero bias.
    pub fn new<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (cin * 9) as f64).sqrt();
        Conv2d {
            weight: Parameter::new(
                format!("{name}.weight"),
                Tensor::uniform(&[cout, cin, 3, 3], -bound, bound, rng),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[cout])),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(x, &self.weight.value, &self.bias.value)
    }

    /// Accumulates parameter gradients, returns the input gradient.
    pub fn backward(&mut self, input: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = conv2d_backward(input, &self.weight.value, grad)?;
        self.weight.accumulate(&g.weight)?;
        self.bias.accumulate(&g.bias)?;
        Ok(g.input)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub name: String,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::ones(&[channels])),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::ones(&[channels]),
            name: name.to_string(),
        }
    }
}

/// 3x3 conv -> batch norm -> ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

pub struct BlockTape<T> {
    input: Tensor<T>,
    bn: BatchNormCache<T>,
    output: Tensor<T>,
}

impl<T: Scalar> ConvBlock<T> {
    pub fn new<R: Rng + ?Sized>(
        conv_name: &str,
        bn_name: &str,
        cin: usize,
        cout: usize,
        rng: &mut R,
    ) -> Self {
        ConvBlock {
            conv: Conv2d::new(conv_name, cin, cout, rng),
            bn: BatchNorm2d::new(bn_name, cout),
        }
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let z = self.conv.forward(x)?;
        let bn = &self.bn;
        let mut y = batchnorm2d_eval(
            &z,
            &bn.gamma.value,
            &bn.beta.value,
            &bn.running_mean,
            &bn.running_var,
        )?;
        relu_inplace(&mut y);
        Ok(y)
    }

    /// Train-mode forward: batch statistics, running stats updated.
    pub fn forward_train(&mut self, x: Tensor<T>) -> Result<(Tensor<T>, BlockTape<T>)> {
        let z = self.conv.forward(&x)?;
        let bn = &mut self.bn;
        let (mut y, cache) = batchnorm2d(
            &z,
            &bn.gamma.value,
            &bn.beta.value,
            &mut bn.running_mean,
            &mut bn.running_var,
            Mode::Train,
        )?;
        relu_inplace(&mut y);
        let tape = BlockTape {
            input: x,
            bn: cache.expect("train mode returns a cache"),
            output: y.clone(),
        };
        Ok((y, tape))
    }

    pub fn backward(&mut self, tape: BlockTape<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let g = relu_backward(&tape.output, grad)?;
        let (dz, dgamma, dbeta) = batchnorm2d_backward(&tape.bn, &self.bn.gamma.value, &g)?;
        self.bn.gamma.accumulate(&dgamma)?;
        self.bn.beta.accumulate(&dbeta)?;
        self.conv.backward(&tape.input, &dz)
    }

    pub fn parameters(&self) -> [&Parameter<T>; 4] {
        [
            &self.conv.weight,
            &self.conv.bias,
            &self.bn.gamma,
            &self.bn.beta,
        ]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter<T>; 4] {
        [
            &mut self.conv.weight,
            &mut self.conv.bias,
            &mut self.bn.gamma,
            &mut self.bn.beta,
        ]
    }
}
