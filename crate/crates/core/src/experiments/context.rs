use crate::error::{Error, Result};
use crate::experiments::RunConfig;
use crate::jacobian::LinearOperator;
use crate::model::{init_weights, load_cifar10, load_weights, Network, NetworkSpec, Overrides, WeightStore};
use crate::rng::RngStream;
use crate::spectra::Spectrum;
use crate::tensor::Tensor;

/// Stream ids carved out of the run seed so independent draws never overlap.
pub const STREAM_INIT: u64 = 0;
pub const STREAM_IMAGES: u64 = 1 << 32;
pub const STREAM_RANDOM_PERTURBATION: u64 = 2 << 32;
pub const STREAM_LANCZOS: u64 = 3 << 32;

/// One selected input image with its label. Synthetic images carry the label
/// the network predicts for them.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub image: Tensor<f64>,
    pub label: usize,
}

/// A validated config with its weights and images loaded.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub spec: NetworkSpec,
    pub store: WeightStore,
    pub samples: Vec<Sample>,
}

/// Seeded pixel-space image with entries in `(0, 1)`.
pub fn synthetic_image(seed: u64, id: usize) -> Tensor<f64> {
    let mut rng = RngStream::new(seed, STREAM_IMAGES + id as u64);
    let data = (0..3 * 32 * 32).map(|_| rng.next_open01()).collect();
    Tensor::from_vec(&[3, 32, 32], data).expect("fixed shape")
}

impl Context {
    pub fn load(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.network_spec()?;
        let store = match &config.weights {
            Some(p) => load_weights(p)?,
            None => init_weights(&spec, &RngStream::new(config.seed, STREAM_INIT)),
        };
        store.validate(&spec)?;
        let mut ctx = Self {
            config,
            spec,
            store,
            samples: Vec::new(),
        };
        ctx.samples = match &ctx.config.data {
            Some(path) => {
                let items = load_cifar10(path)?;
                ctx.config
                    .images
                    .iter()
                    .map(|&i| {
                        let item = items.get(i).ok_or_else(|| {
                            Error::Dataset(format!("image index {i} out of range for {} records", items.len()))
                        })?;
                        Ok(Sample {
                            id: i,
                            image: item.image.cast(),
                            label: item.label,
                        })
                    })
                    .collect::<Result<_>>()?
            }
            None => {
                let net = ctx.network(Overrides::new())?;
                ctx.config
                    .images
                    .iter()
                    .map(|&i| {
                        let image = synthetic_image(ctx.config.seed, i);
                        let label = net.predict(&image)?;
                        Ok(Sample { id: i, image, label })
                    })
                    .collect::<Result<_>>()?
            }
        };
        Ok(ctx)
    }

    pub fn network(&self, overrides: Overrides) -> Result<Network<f64>> {
        Network::with_options(&self.spec, &self.store, self.config.normalization, overrides)
    }

    /// Spectrum of `op` with the configured solver.
    pub fn spectrum(&self, op: &dyn LinearOperator, with_vectors: bool) -> Result<Spectrum> {
        let mut rng = RngStream::new(self.config.seed, STREAM_LANCZOS);
        self.config
            .svd
            .compute(op, self.config.materialize_cap, with_vectors, &mut rng)
    }
}
