use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, NetworkMeta};
use crate::kernel::{
    conv1d_output_len, Checkpoint, Init, Padding, ParamStore, Parameter, Real, Tape, Tensor, Var,
};
use crate::mlt::LabelScheme;

pub const SID_KERNELS: [usize; 4] = [5, 7, 1, 1];
pub const SID_STRIDES: [usize; 4] = [1, 2, 1, 1];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerIdNetConfig {
    /// Frequency bins, consumed as input channels by the first convolution.
    pub n_bins: usize,
    pub conv_filters: [usize; 4],
    /// Hidden fully connected widths; the last one is the embedding.
    pub fc_dims: Vec<usize>,
    /// Size of the expanded label space.
    pub output_dim: usize,
}

impl SpeakerIdNetConfig {
    pub fn for_scheme(
        n_bins: usize,
        conv_filters: [usize; 4],
        fc_dims: Vec<usize>,
        scheme: &LabelScheme,
    ) -> Self {
        Self {
            n_bins,
            conv_filters,
            fc_dims,
            output_dim: scheme.num_labels(),
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.n_bins == 0 || self.output_dim == 0 {
            return Err(ModelError::Config(
                "bins and output_dim must be positive".into(),
            ));
        }
        if self.conv_filters.contains(&0) || self.fc_dims.contains(&0) {
            return Err(ModelError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        self.fc_dims.last().copied().unwrap_or(self.conv_filters[3])
    }

    /// Time length after each convolution for an input of `frames` frames.
    pub fn conv_lengths(&self, frames: usize) -> [usize; 4] {
        let mut len = frames;
        let mut out = [0; 4];
        for i in 0..4 {
            len = conv1d_output_len(len, SID_KERNELS[i], SID_STRIDES[i], Padding::Same)
                .expect("same padding always fits");
            out[i] = len;
        }
        out
    }
}

pub struct SidOutput {
    /// Globally pooled convolution features.
    pub pooled: Var,
    /// Post-ReLU activation of the last hidden layer.
    pub embedding: Var,
    pub logits: Var,
}

/// Four 1-D convolutions over time with all frequency bins as channels,
/// global average pooling, a fully connected stack and a linear output
/// layer over the expanded label space.
pub struct SpeakerIdNet<T> {
    config: SpeakerIdNetConfig,
    params: ParamStore<T>,
}

impl<T: Real> SpeakerIdNet<T> {
    pub fn new(config: SpeakerIdNetConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut cin = config.n_bins;
        for i in 0..4 {
            let (cout, k) = (config.conv_filters[i], SID_KERNELS[i]);
            let w = Init::HeUniform.sample(&[cout, cin, k], cin * k, cout * k, &mut rng);
            params.insert(format!("sid.conv{}.weight", i + 1), w)?;
            params.insert(format!("sid.conv{}.bias", i + 1), Tensor::zeros(&[cout]))?;
            cin = cout;
        }
        let mut d_in = cin;
        for (i, &d_out) in config.fc_dims.iter().enumerate() {
            let w = Init::HeUniform.sample(&[d_out, d_in], d_in, d_out, &mut rng);
            params.insert(format!("sid.fc{}.weight", i + 1), w)?;
            params.insert(format!("sid.fc{}.bias", i + 1), Tensor::zeros(&[d_out]))?;
            d_in = d_out;
        }
        let w = Init::GlorotUniform.sample(
            &[config.output_dim, d_in],
            d_in,
            config.output_dim,
            &mut rng,
        );
        params.insert("sid.out.weight", w)?;
        params.insert("sid.out.bias", Tensor::zeros(&[config.output_dim]))?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &SpeakerIdNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    fn param(&self, name: &str) -> &Parameter<T> {
        self.params
            .get(name)
            .expect("parameter registered at construction")
    }

    /// Forward pass on `input [bins, frames]`.
    pub fn forward<'a>(
        &'a self,
        tape: &mut Tape<'a, T>,
        input: Var,
    ) -> Result<SidOutput, ModelError> {
        let shape = tape.value(input).shape().to_vec();
        if shape.len() != 2 || shape[0] != self.config.n_bins {
            return Err(ModelError::Config(format!(
                "speaker-ID input must be [{}, frames], got {shape:?}",
                self.config.n_bins
            )));
        }
        let mut h = input;
        for i in 0..4 {
            let w = tape.param(self.param(&format!("sid.conv{}.weight", i + 1)));
            let b = tape.param(self.param(&format!("sid.conv{}.bias", i + 1)));
            h = tape.conv1d(h, w, b, SID_STRIDES[i], Padding::Same)?;
            h = tape.relu(h);
        }
        let pooled = tape.global_avg_pool(h)?;
        let mut h = pooled;
        for i in 0..self.config.fc_dims.len() {
            let w = tape.param(self.param(&format!("sid.fc{}.weight", i + 1)));
            let b = tape.param(self.param(&format!("sid.fc{}.bias", i + 1)));
            h = tape.dense(h, w, b)?;
            h = tape.relu(h);
        }
        let embedding = h;
        let w = tape.param(self.param("sid.out.weight"));
        let b = tape.param(self.param("sid.out.bias"));
        let logits = tape.dense(h, w, b)?;
        Ok(SidOutput {
            pooled,
            embedding,
            logits,
        })
    }

    /// Logits for a single `[bins, frames]` input.
    pub fn logits(&self, input: Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let x = tape.input(input);
        let out = self.forward(&mut tape, x)?;
        Ok(tape.value(out.logits).clone())
    }

    /// Activation of the last hidden fully connected layer.
    pub fn extract_embedding(&self, input: Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let x = tape.input(input);
        let out = self.forward(&mut tape, x)?;
        Ok(tape.value(out.embedding).clone())
    }

    pub fn to_checkpoint(&self, config_hash: [u8; 32]) -> Checkpoint {
        Checkpoint::from_store(
            &self.params,
            config_hash,
            NetworkMeta::SpeakerId(self.config.clone()).to_json(),
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        match NetworkMeta::from_json(&ckpt.metadata)? {
            NetworkMeta::SpeakerId(config) => {
                let mut net = Self::new(config, 0)?;
                ckpt.load_into(&mut net.params)?;
                Ok(net)
            }
            other => Err(ModelError::Metadata(format!(
                "expected a speaker-ID checkpoint, found {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_lengths_follow_strides() {
        let scheme = LabelScheme::new(10, 2).unwrap();
        let cfg = SpeakerIdNetConfig::for_scheme(257, [4, 4, 4, 8], vec![16], &scheme);
        assert_eq!(cfg.conv_lengths(298), [298, 149, 149, 149]);
        assert_eq!(cfg.output_dim, 20);
        assert_eq!(cfg.embedding_dim(), 16);
    }

    #[test]
    fn rejects_zero_widths() {
        let scheme = LabelScheme::new(10, 1).unwrap();
        let cfg = SpeakerIdNetConfig::for_scheme(257, [4, 0, 4, 8], vec![16], &scheme);
        assert!(SpeakerIdNet::<f32>::new(cfg, 0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_restores_outputs() {
        let scheme = LabelScheme::new(3, 2).unwrap();
        let cfg = SpeakerIdNetConfig::for_scheme(9, [4, 4, 4, 6], vec![5], &scheme);
        let net = SpeakerIdNet::<f64>::new(cfg, 11).unwrap();
        let input = Tensor::new(
            vec![9, 12],
            (0..108).map(|i| (i as f64 * 0.37).sin().abs()).collect(),
        )
        .unwrap();
        let ckpt = net.to_checkpoint([1; 32]);
        let back = SpeakerIdNet::<f64>::from_checkpoint(
            &Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap(),
        )
        .unwrap();
        assert_eq!(
            net.logits(input.clone()).unwrap(),
            back.logits(input).unwrap()
        );
    }
}
