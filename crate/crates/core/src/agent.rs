//! The trainable bundle: actor-critic network plus an optional curiosity
//! module, laid out in one parameter set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::icm::{Icm, IcmConfig};
use crate::policy::{ActorCritic, NetworkConfig};
use crate::snapshot::{Snapshot, SnapshotError};
use crate::tensor::{ParamSet, ParamSetBuilder, TensorError};

pub const NET_PREFIX: &str = "ac";
pub const ICM_PREFIX: &str = "icm";

#[derive(Debug, Clone)]
pub struct Agent {
    pub net: ActorCritic,
    pub icm: Option<Icm>,
}

impl Agent {
    /// Registers all parameters, initialized from `seed`.
    pub fn build(
        network: &NetworkConfig,
        icm: Option<&IcmConfig>,
        seed: u64,
    ) -> Result<(Agent, ParamSet), TensorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut builder = ParamSetBuilder::new(&mut rng);
        let net = ActorCritic::register(network, NET_PREFIX, &mut builder)?;
        let icm = icm
            .map(|cfg| Icm::register(cfg, ICM_PREFIX, &mut builder))
            .transpose()?;
        Ok((Agent { net, icm }, builder.finish()))
    }

    /// Builds the layout for the given configs and checks `params` against it.
    pub fn bind(
        network: &NetworkConfig,
        icm: Option<&IcmConfig>,
        params: &ParamSet,
    ) -> Result<Agent, TensorError> {
        let (agent, template) = Agent::build(network, icm, 0)?;
        template.check_layout(params)?;
        Ok(agent)
    }

    /// Rebuilds the agent described by a snapshot's `network` and `icm`
    /// metadata and checks the stored tensors against it.
    pub fn from_snapshot(snapshot: &Snapshot) -> Result<Agent, SnapshotError> {
        let meta = |key: &str| {
            snapshot
                .metadata
                .get(key)
                .ok_or_else(|| SnapshotError::Mismatch(format!("missing `{key}` metadata")))
        };
        let network: NetworkConfig = serde_json::from_str(meta("network")?)
            .map_err(|e| SnapshotError::Mismatch(format!("bad network metadata: {e}")))?;
        let icm: Option<IcmConfig> = match meta("icm")?.as_str() {
            "none" => None,
            text => Some(
                serde_json::from_str(text).map_err(|e| SnapshotError::Mismatch(format!("bad icm metadata: {e}")))?,
            ),
        };
        network.validate().map_err(SnapshotError::Mismatch)?;
        if let Some(icm) = &icm {
            icm.validate().map_err(SnapshotError::Mismatch)?;
        }
        Agent::bind(&network, icm.as_ref(), &snapshot.params).map_err(|e| SnapshotError::Mismatch(e.to_string()))
    }
}
