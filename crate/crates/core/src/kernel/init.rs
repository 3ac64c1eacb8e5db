use rand::Rng;

use super::{Real, Tensor};

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// U(-sqrt(6/fan_in), +sqrt(6/fan_in)); for layers feeding a ReLU.
    HeUniform,
    /// U(-sqrt(6/(fan_in+fan_out)), +..); for sigmoid and linear outputs.
    GlorotUniform,
    Constant(f64),
}

impl Init {
    pub fn bound(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            Init::HeUniform => (6.0 / fan_in as f64).sqrt(),
            Init::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            Init::Constant(_) => 0.0,
        }
    }

    pub fn sample<T: Real, R: Rng + ?Sized>(
        self,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Tensor<T> {
        if let Init::Constant(c) = self {
            return Tensor::filled(shape, T::of(c));
        }
        let bound = self.bound(fan_in, fan_out);
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::of(rng.gen_range(-bound..=bound)))
            .collect();
        Tensor::new(shape.to_vec(), data).expect("shape and length agree")
    }
}
