//! Checkpoint directory layout:
//!
//! * `model.json`  — architecture record plus scalar state (`A`, lengths),
//! * `params.bin`  — little-endian `f64` blob: generator parameters `θ`
//!   followed by energy parameters `ψ`,
//!
//! plus whatever the producing command wrote alongside (`history.csv`,
//! `config-echo.json`). Loading rebuilds the models from the architecture
//! record and splices the blob back into their parameter vectors.

use crate::config::{BaseCfg, EnergyCfg, MethodCfg};
use crate::error::LabError;
use crate::formats;
use gebm_core::kale::EnergyState;
use gebm_core::models::{BaseModel, Energy};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub method: MethodCfg,
    pub data_dim: usize,
    pub base: BaseCfg,
    pub energy: EnergyCfg,
    /// Trained log-partition estimate (0 when the method has none).
    pub a: f64,
    pub theta_len: usize,
    pub psi_len: usize,
}

pub struct LoadedCheckpoint {
    pub record: ModelRecord,
    pub base: BaseModel,
    pub energy: Energy,
    pub energy_state: EnergyState,
}

/// Writes `model.json` + `params.bin` into `dir`.
pub fn save_checkpoint(
    dir: &Path,
    record: &ModelRecord,
    theta: &[f64],
    psi: &[f64],
) -> Result<(), LabError> {
    debug_assert_eq!(record.theta_len, theta.len());
    debug_assert_eq!(record.psi_len, psi.len());
    formats::write_json(&dir.join("model.json"), record)?;
    let mut all = Vec::with_capacity(theta.len() + psi.len());
    all.extend_from_slice(theta);
    all.extend_from_slice(psi);
    formats::write_params_bin(&dir.join("params.bin"), &all)
}

/// Reads a checkpoint directory back into live models.
pub fn load_checkpoint(dir: &Path) -> Result<LoadedCheckpoint, LabError> {
    let record: ModelRecord = formats::read_json_config(&dir.join("model.json"))
        .map_err(|e| match e {
            LabError::Io { path, source } => LabError::Checkpoint {
                path,
                message: format!("missing model record ({source})"),
            },
            LabError::Config { path, message } => LabError::Checkpoint { path, message },
            other => other,
        })?;
    let mut base = record.base.build(record.data_dim, 0);
    let mut energy = record
        .energy
        .build(record.data_dim, &base)
        .map_err(|m| LabError::Checkpoint {
            path: dir.to_path_buf(),
            message: m,
        })?;
    if base.theta.len() != record.theta_len {
        return Err(LabError::Checkpoint {
            path: dir.to_path_buf(),
            message: format!(
                "architecture has {} generator parameters but the record says {}",
                base.theta.len(),
                record.theta_len
            ),
        });
    }
    let mut psi = energy.init_params(0);
    if psi.len() != record.psi_len {
        return Err(LabError::Checkpoint {
            path: dir.to_path_buf(),
            message: format!(
                "architecture has {} energy parameters but the record says {}",
                psi.len(),
                record.psi_len
            ),
        });
    }
    let blob = formats::read_params_bin(
        &dir.join("params.bin"),
        record.theta_len + record.psi_len,
    )?;
    base.theta
        .data_mut()
        .copy_from_slice(&blob[..record.theta_len]);
    psi.data_mut().copy_from_slice(&blob[record.theta_len..]);
    // The flow-diff reference must track the restored generator parameters.
    if matches!(energy, Energy::FlowDiff { .. }) {
        energy.set_reference_params(base.theta.clone());
    }
    Ok(LoadedCheckpoint {
        base,
        energy,
        energy_state: EnergyState::new(psi, record.a),
        record,
    })
}
