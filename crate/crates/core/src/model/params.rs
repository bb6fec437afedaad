use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{Array, Real, Tape, Var};

/// Named parameter arrays in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    entries: Vec<(String, Array<f64>)>,
    index: HashMap<String, usize>,
}

impl Parameters {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array<f64>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidInput(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Array<f64>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array<f64>> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array<f64>)> {
        self.entries.iter().map(|(n, a)| (n.as_str(), a))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars.
    pub fn size(&self) -> usize {
        self.entries.iter().map(|(_, a)| a.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|(_, a)| a.data().iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.size(), "flat parameter length mismatch");
        let mut offset = 0;
        for (_, a) in &mut self.entries {
            let n = a.len();
            a.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// Places every parameter on `tape`, as leaves when `trainable`.
    pub fn bind<T: Real>(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|(_, a)| {
                let v = a.cast::<T>();
                if trainable {
                    tape.leaf(v)
                } else {
                    tape.constant(v)
                }
            })
            .collect();
        Bound {
            vars,
            index: self.index.clone(),
        }
    }
}

impl Default for Parameters {
    fn default() -> Self {
        Self::new()
    }
}

/// Tape handles of a bound [`Parameters`] set.
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter {name}")))
    }

    /// Handles in parameter order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Expected `(name, rows, cols)` layout for a configuration.
pub fn layout(cfg: &ModelConfig) -> Vec<(String, usize, usize)> {
    let (d, p, l, h) = (cfg.d_model, cfg.token_patch, cfg.latent_dim, cfg.ffn_hidden());
    let (t, tf) = (cfg.fhr_tokens(), cfg.fft_tokens());
    let mut out: Vec<(String, usize, usize)> = vec![
        ("fhr.embed.w".into(), p, d),
        ("fhr.embed.b".into(), 1, d),
        ("fhr.embed.missing".into(), p, d),
        ("fhr.embed.pad".into(), p, d),
        ("fhr.pos".into(), t, d),
        ("fft.embed.w".into(), p, d),
        ("fft.embed.b".into(), 1, d),
        ("fft.pos".into(), tf, d),
    ];
    let block = |prefix: &str, out: &mut Vec<(String, usize, usize)>| {
        for (name, r, c) in [
            ("ln1.g", 1, d),
            ("ln1.b", 1, d),
            ("wq", d, d),
            ("wk", d, d),
            ("wv", d, d),
            ("wo", d, d),
            ("ln2.g", 1, d),
            ("ln2.b", 1, d),
            ("ff1.w", d, h),
            ("ff1.b", 1, h),
            ("ff2.w", h, d),
            ("ff2.b", 1, d),
        ] {
            out.push((format!("{prefix}.{name}"), r, c));
        }
    };
    block("enc.fhr", &mut out);
    block("enc.fft", &mut out);
    out.push(("latent.w".into(), 2 * d, 2 * l));
    out.push(("latent.b".into(), 1, 2 * l));
    out.push(("dec.expand.w".into(), l, t * d));
    out.push(("dec.expand.b".into(), 1, t * d));
    block("dec.block", &mut out);
    out.push(("dec.out.w".into(), d, p));
    out.push(("dec.out.b".into(), 1, p));
    out.push(("cls.w".into(), l, 1));
    out.push(("cls.b".into(), 1, 1));
    out
}

/// Random initialisation: scaled normal weights (variance `1 / fan_in`),
/// zero biases, unit layer-norm gains and small embeddings.
pub fn init_parameters(cfg: &ModelConfig) -> Result<Parameters> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = Parameters::new();
    for (name, rows, cols) in layout(cfg) {
        let std = if name.ends_with(".g") {
            None
        } else if name.ends_with(".b") {
            Some(0.0)
        } else if name.ends_with("pos") || name.ends_with("missing") || name.ends_with("pad") {
            Some(0.02)
        } else {
            Some((1.0 / rows as f64).sqrt())
        };
        let value = match std {
            None => Array::filled(rows, cols, 1.0),
            Some(s) if s == 0.0 => Array::zeros(rows, cols),
            Some(s) => {
                let normal = Normal::new(0.0, s).map_err(|e| Error::Config(e.to_string()))?;
                Array::from_fn(rows, cols, |_, _| normal.sample(&mut rng))
            }
        };
        params.insert(name, value)?;
    }
    Ok(params)
}

/// Checks that `params` matches the layout of `cfg` exactly.
pub fn check_layout(cfg: &ModelConfig, params: &Parameters) -> Result<()> {
    let expected = layout(cfg);
    if expected.len() != params.len() {
        return Err(Error::Mismatch(format!(
            "expected {} parameter blocks, found {}",
            expected.len(),
            params.len()
        )));
    }
    for ((name, r, c), (pname, arr)) in expected.iter().zip(params.iter()) {
        if name != pname || arr.shape() != [*r, *c] {
            return Err(Error::Mismatch(format!(
                "parameter {pname} {:?} does not match configuration ({name} [{r}, {c}])",
                arr.shape()
            )));
        }
    }
    Ok(())
}
