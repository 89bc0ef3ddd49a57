//! Field snapshots: a self-describing JSON container with the mesh
//! descriptor (meshes regenerate from it), a parameter echo, a format
//! version, and the nodal values as base64-encoded little-endian f64.

use crate::error::MeshError;
use crate::fem::{DiscreteField, Mesh, MeshDescriptor};
use crate::tensor::GrowthParams;
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

pub const SNAPSHOT_VERSION: u32 = 1;

/// Decoding guard: refuse to rebuild absurdly large meshes from untrusted
/// snapshots.
const MAX_CELLS_PER_AXIS: usize = 4096;

#[derive(Error, Debug)]
pub enum SnapshotError {
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("malformed snapshot json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("values are not valid base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("value byte length {got} does not match {expected} dofs")]
    Length { got: usize, expected: usize },
    #[error("mesh too large to restore ({0} cells per axis)")]
    TooLarge(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Params(#[from] crate::error::ModelError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSnapshot {
    pub format_version: u32,
    pub mesh: MeshDescriptor,
    pub params: GrowthParams,
    /// Nodal values, node-major, little-endian f64, base64.
    pub values_le_f64: String,
}

pub fn snapshot_field(field: &DiscreteField, params: &GrowthParams) -> FieldSnapshot {
    let mut bytes = Vec::with_capacity(field.values.len() * 8);
    for v in &field.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    FieldSnapshot {
        format_version: SNAPSHOT_VERSION,
        mesh: field.mesh.descriptor(),
        params: *params,
        values_le_f64: base64::engine::general_purpose::STANDARD.encode(bytes),
    }
}

pub fn snapshot_to_json(snap: &FieldSnapshot) -> String {
    serde_json::to_string_pretty(snap).expect("snapshot serialization cannot fail")
}

pub fn snapshot_from_json(bytes: &[u8]) -> Result<FieldSnapshot, SnapshotError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Rebuilds the mesh from the descriptor and restores the field.
pub fn restore_field(snap: &FieldSnapshot) -> Result<(DiscreteField, GrowthParams), SnapshotError> {
    if snap.format_version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Version(snap.format_version));
    }
    if snap.mesh.cells_per_axis > MAX_CELLS_PER_AXIS {
        return Err(SnapshotError::TooLarge(snap.mesh.cells_per_axis));
    }
    // revalidate the parameter echo
    let params =
        GrowthParams::new(snap.params.p, snap.params.mu, snap.params.kappa, snap.params.dim)?;
    if snap.mesh.box_lo.len() < snap.mesh.dim || snap.mesh.box_hi.len() < snap.mesh.dim {
        return Err(SnapshotError::Mesh(MeshError::BadDomain { axis: 0, lo: 0.0, hi: 0.0 }));
    }
    let mesh = Arc::new(Mesh::from_descriptor(&snap.mesh)?);
    let bytes = base64::engine::general_purpose::STANDARD.decode(&snap.values_le_f64)?;
    let expected = mesh.num_dofs();
    if bytes.len() != expected * 8 {
        return Err(SnapshotError::Length { got: bytes.len(), expected });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk size 8")))
        .collect();
    Ok((DiscreteField { mesh, values }, params))
}

/// Total decode path used by the fuzz target: arbitrary bytes in, either a
/// restored field or an error out, never a panic.
pub fn decode_snapshot_bytes(bytes: &[u8]) -> Result<(DiscreteField, GrowthParams), SnapshotError> {
    let snap = snapshot_from_json(bytes)?;
    restore_field(&snap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_mesh;

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let mesh = Arc::new(build_mesh(2, &[0.0, -1.0], &[2.0, 1.0], 5).unwrap());
        let params = GrowthParams::new(3.0, 1.0, 2.0, 2).unwrap();
        let field = DiscreteField::interpolate(mesh, |x| {
            vec![x[0].sin() * 1e-17 + x[1], x[0] / 3.0]
        });
        let snap = snapshot_field(&field, &params);
        let json = snapshot_to_json(&snap);
        let (restored, rparams) = decode_snapshot_bytes(json.as_bytes()).unwrap();
        assert_eq!(restored.values, field.values);
        assert_eq!(rparams, params);
        for n in 0..field.mesh.num_nodes() {
            assert_eq!(restored.mesh.node(n), field.mesh.node(n));
        }
    }

    #[test]
    fn corrupted_payloads_error_cleanly() {
        assert!(decode_snapshot_bytes(b"not json").is_err());
        assert!(decode_snapshot_bytes(b"{}").is_err());
        // wrong value length
        let mesh = Arc::new(build_mesh(2, &[0.0, 0.0], &[1.0, 1.0], 2).unwrap());
        let params = GrowthParams::new(2.0, 0.0, 0.0, 2).unwrap();
        let field = DiscreteField::zeros(mesh);
        let mut snap = snapshot_field(&field, &params);
        snap.values_le_f64 = base64::engine::general_purpose::STANDARD.encode([1u8, 2, 3]);
        let json = snapshot_to_json(&snap);
        assert!(matches!(
            decode_snapshot_bytes(json.as_bytes()),
            Err(SnapshotError::Length { .. })
        ));
        // absurd mesh size is refused before allocation
        let mut snap = snapshot_field(&field, &params);
        snap.mesh.cells_per_axis = 100_000_000;
        let json = snapshot_to_json(&snap);
        assert!(matches!(decode_snapshot_bytes(json.as_bytes()), Err(SnapshotError::TooLarge(_))));
        // future versions are refused
        let mut snap = snapshot_field(&field, &params);
        snap.format_version = 99;
        let json = snapshot_to_json(&snap);
        assert!(matches!(decode_snapshot_bytes(json.as_bytes()), Err(SnapshotError::Version(99))));
    }
}
