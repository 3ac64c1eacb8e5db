use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, NetworkMeta};
use crate::kernel::{Checkpoint, Init, ParamStore, Real, Tape, Tensor, Var};

/// `(kernel rows x cols, dilation rows x cols)` of the eleven mask layers.
/// Rows run over frequency bins, columns over frames.
pub const ENHANCEMENT_LAYERS: [((usize, usize), (usize, usize)); 11] = [
    ((1, 7), (1, 1)),
    ((7, 1), (1, 1)),
    ((5, 5), (1, 1)),
    ((5, 5), (2, 1)),
    ((5, 5), (4, 1)),
    ((5, 5), (8, 1)),
    ((5, 5), (1, 1)),
    ((5, 5), (2, 2)),
    ((5, 5), (4, 4)),
    ((5, 5), (8, 8)),
    ((1, 1), (1, 1)),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhancementNetConfig {
    /// Feature maps in layers 1 to 10. The last layer always has one.
    pub channels: usize,
    /// Initial bias of the mask layer; large positive values start the
    /// network near an all-pass mask.
    pub mask_bias_init: f64,
}

impl Default for EnhancementNetConfig {
    fn default() -> Self {
        Self {
            channels: 48,
            mask_bias_init: 0.0,
        }
    }
}

impl EnhancementNetConfig {
    /// `(in_channels, out_channels)` of layer `i` (0-based).
    pub fn layer_channels(&self, i: usize) -> (usize, usize) {
        let last = ENHANCEMENT_LAYERS.len() - 1;
        let cin = if i == 0 { 1 } else { self.channels };
        let cout = if i == last { 1 } else { self.channels };
        (cin, cout)
    }
}

pub struct EnhOutput {
    pub mask: Var,
    pub enhanced: Var,
}

/// Dilated 2-D convolution stack producing a sigmoid ratio mask that is
/// multiplied into its own input.
pub struct EnhancementNet<T> {
    config: EnhancementNetConfig,
    params: ParamStore<T>,
}

impl<T: Real> EnhancementNet<T> {
    pub fn new(config: EnhancementNetConfig, seed: u64) -> Result<Self, ModelError> {
        if config.channels == 0 {
            return Err(ModelError::Config(
                "enhancement channels must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let last = ENHANCEMENT_LAYERS.len() - 1;
        for (i, &((kr, kc), _)) in ENHANCEMENT_LAYERS.iter().enumerate() {
            let (cin, cout) = config.layer_channels(i);
            let (init, bias) = if i == last {
                (Init::GlorotUniform, config.mask_bias_init)
            } else {
                (Init::HeUniform, 0.0)
            };
            let w = init.sample(
                &[cout, cin, kr, kc],
                cin * kr * kc,
                cout * kr * kc,
                &mut rng,
            );
            params.insert(format!("enh.conv{}.weight", i + 1), w)?;
            params.insert(
                format!("enh.conv{}.bias", i + 1),
                Tensor::filled(&[cout], T::of(bias)),
            )?;
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &EnhancementNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Runs the mask stack on `input [1, bins, frames]`.
    pub fn forward<'a>(
        &'a self,
        tape: &mut Tape<'a, T>,
        input: Var,
    ) -> Result<EnhOutput, ModelError> {
        let shape = tape.value(input).shape().to_vec();
        if shape.len() != 3 || shape[0] != 1 {
            return Err(ModelError::Config(format!(
                "enhancement input must be [1, bins, frames], got {shape:?}"
            )));
        }
        let last = ENHANCEMENT_LAYERS.len() - 1;
        let mut h = input;
        for (i, &(_, dilation)) in ENHANCEMENT_LAYERS.iter().enumerate() {
            let w = tape.param(self.param(&format!("enh.conv{}.weight", i + 1)));
            let b = tape.param(self.param(&format!("enh.conv{}.bias", i + 1)));
            h = tape.conv2d(h, w, b, dilation)?;
            h = if i == last {
                tape.sigmoid(h)
            } else {
                tape.relu(h)
            };
        }
        let enhanced = tape.mul(h, input)?;
        Ok(EnhOutput { mask: h, enhanced })
    }

    fn param(&self, name: &str) -> &crate::kernel::Parameter<T> {
        self.params
            .get(name)
            .expect("parameter registered at construction")
    }

    pub fn to_checkpoint(&self, config_hash: [u8; 32]) -> Checkpoint {
        Checkpoint::from_store(
            &self.params,
            config_hash,
            NetworkMeta::Enhancement(self.config).to_json(),
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        match NetworkMeta::from_json(&ckpt.metadata)? {
            NetworkMeta::Enhancement(config) => {
                let mut net = Self::new(config, 0)?;
                ckpt.load_into(&mut net.params)?;
                Ok(net)
            }
            other => Err(ModelError::Metadata(format!(
                "expected an enhancement checkpoint, found {other:?}"
            ))),
        }
    }
}
