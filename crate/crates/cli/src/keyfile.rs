//! Private key material written by `psi setup` and read by `psi serve`.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use psi_core::{DsType, RevealPolicy, Scalar, ServerState, SetupParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DsName {
    Bloom,
    Gcs,
}

impl From<DsName> for DsType {
    fn from(d: DsName) -> Self {
        match d {
            DsName::Bloom => DsType::Bloom,
            DsName::Gcs => DsType::Gcs,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    #[default]
    Any,
    Psi,
    Cardinality,
}

impl From<PolicyName> for RevealPolicy {
    fn from(p: PolicyName) -> Self {
        match p {
            PolicyName::Any => RevealPolicy::AcceptAny,
            PolicyName::Psi => RevealPolicy::Pinned(true),
            PolicyName::Cardinality => RevealPolicy::Pinned(false),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyFile {
    /// Hex-encoded 32-byte big-endian scalar.
    pub key: String,
    pub dataset_size: usize,
    pub max_queries: usize,
    pub fpr: f64,
    pub ds: DsName,
    #[serde(default)]
    pub reveal_policy: PolicyName,
}

impl KeyFile {
    pub fn new(state: &ServerState, ds: DsName, policy: PolicyName) -> Self {
        let params = state.params();
        KeyFile {
            key: hex::encode(state.key().to_bytes()),
            dataset_size: state.dataset_size(),
            max_queries: params.max_client_queries,
            fpr: params.total_fp,
            ds,
            reveal_policy: policy,
        }
    }

    pub fn scalar(&self) -> Result<Scalar> {
        let bytes: [u8; 32] = hex::decode(&self.key)
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| CliError::Usage("key file: key must be 64 hex digits".into()))?;
        Ok(Scalar::from_bytes(&bytes)?)
    }

    pub fn params(&self) -> SetupParams {
        SetupParams::new(self.max_queries, self.fpr, self.ds.into())
    }

    pub fn server_state(&self) -> Result<ServerState> {
        Ok(
            ServerState::from_key(self.scalar()?, self.dataset_size, self.params())?
                .with_reveal_policy(self.reveal_policy.into()),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("key file {}: {e}", path.display())))
    }

    /// Writes the file readable by the owner only.
    pub fn save(&self, path: &Path) -> Result<()> {
        let ctx = || format!("writing {}", path.display());
        let mut opts = OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(path).map_err(|e| CliError::io(ctx(), e))?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            f.set_permissions(fs::Permissions::from_mode(0o600))
                .map_err(|e| CliError::io(ctx(), e))?;
        }
        let text = serde_json::to_string_pretty(self).expect("key file serializes");
        f.write_all(text.as_bytes())
            .and_then(|_| f.write_all(b"\n"))
            .map_err(|e| CliError::io(ctx(), e))
    }
}
