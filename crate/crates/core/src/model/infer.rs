use super::config::ModelConfig;
use super::network::{classify, decode, embed_inputs, encode, LatentStats, SegmentInput};
use super::params::{check_layout, Bound, Parameters};
use crate::error::{Error, Result};
use crate::preprocess::NormStats;
use crate::tensor::{Array, Tape};

/// A trained network with its normalisation statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub norm: NormStats,
    pub params: Parameters,
}

/// Encoder output, score and reconstruction for one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub stats: LatentStats,
    /// Classifier score at the posterior mean.
    pub score: f64,
    /// Standardised reconstruction decoded from the posterior mean.
    pub recon: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig, norm: NormStats, params: Parameters) -> Result<Self> {
        config.validate()?;
        check_layout(&config, &params)?;
        Ok(Self { config, norm, params })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Read-only evaluation context reusing one bound copy of the weights.
    pub fn session(&self) -> Session<'_> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let base = tape.len();
        Session {
            model: self,
            tape,
            bound,
            base,
        }
    }

    pub fn encode(&self, input: &SegmentInput) -> Result<LatentStats> {
        self.session().encode(input)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.session().decode(z)
    }

    pub fn classify(&self, z: &[f64]) -> Result<f64> {
        self.session().classify(z)
    }

    /// Encodes, scores and reconstructs every input at its posterior mean.
    pub fn infer(&self, inputs: &[SegmentInput]) -> Result<Vec<Inference>> {
        let mut s = self.session();
        inputs.iter().map(|x| s.infer(x)).collect()
    }
}

pub struct Session<'a> {
    model: &'a Model,
    tape: Tape<f64>,
    bound: Bound,
    base: usize,
}

impl Session<'_> {
    fn latent(&mut self, z: &[f64]) -> Result<crate::tensor::Var> {
        let l = self.model.config.latent_dim;
        if z.len() != l {
            return Err(Error::Mismatch(format!("latent vector of length {} for latent_dim {l}", z.len())));
        }
        Ok(self.tape.constant(Array::row_vector(z.to_vec())))
    }

    pub fn encode(&mut self, input: &SegmentInput) -> Result<LatentStats> {
        self.tape.truncate(self.base);
        let cfg = &self.model.config;
        let (a, b) = embed_inputs(&mut self.tape, &self.bound, cfg, input)?;
        let (mu, lv) = encode(&mut self.tape, &self.bound, cfg, a, b)?;
        Ok(LatentStats {
            mu: self.tape.value(mu).data().to_vec(),
            logvar: self.tape.value(lv).data().to_vec(),
        })
    }

    /// Standardised reconstruction of latent `z`.
    pub fn decode(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        self.tape.truncate(self.base);
        let zv = self.latent(z)?;
        let out = decode(&mut self.tape, &self.bound, &self.model.config, zv)?;
        Ok(self.tape.value(out).data().to_vec())
    }

    /// Reconstruction of `z` in bpm.
    pub fn decode_raw(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        let norm = self.model.norm;
        Ok(self.decode(z)?.into_iter().map(|v| norm.unstandardize_value(v)).collect())
    }

    pub fn classify(&mut self, z: &[f64]) -> Result<f64> {
        self.tape.truncate(self.base);
        let zv = self.latent(z)?;
        let s = classify(&mut self.tape, &self.bound, zv)?;
        Ok(self.tape.value(s).item())
    }

    pub fn infer(&mut self, input: &SegmentInput) -> Result<Inference> {
        let stats = self.encode(input)?;
        let score = self.classify(&stats.mu)?;
        let recon = self.decode(&stats.mu)?;
        Ok(Inference { stats, score, recon })
    }
}
