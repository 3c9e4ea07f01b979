//! Versioned binary parameter checkpoints.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "VDNC"
//! 4       4     format version (u32, currently 1)
//! 8       8     architecture spec hash (u64, must match the flag byte)
//! 16      1     architecture flag byte (see below)
//! 17      3     reserved, zero
//! 20      4     parameter count (u32)
//! 24      4·n   parameters (f32, declared visit order)
//! ```
//!
//! Flag byte: bit 0 value decomposition, bit 1 shared weights, bit 2 role
//! info, bit 3 low-bandwidth channel, bit 4 high-bandwidth channel, bit 5
//! centralized; bits 6–7 reserved, zero. The spec hash is redundant with the
//! flag byte on purpose: a mismatch flags header corruption.

use std::path::Path;

use crate::agents::{AgentSpec, PolicyNetwork};
use crate::error::{Result, VdnError};
use crate::neuralcore::Scalar;

pub const MAGIC: [u8; 4] = *b"VDNC";
pub const FORMAT_VERSION: u32 = 1;
/// Header size in bytes; parameters start here.
pub const HEADER_LEN: usize = 24;

fn flags_to_byte(spec: AgentSpec) -> u8 {
    (spec.value_decomposition as u8)
        | (spec.shared_weights as u8) << 1
        | (spec.role_info as u8) << 2
        | (spec.low_comm as u8) << 3
        | (spec.high_comm as u8) << 4
        | (spec.centralized as u8) << 5
}

fn flags_from_byte(b: u8) -> Result<AgentSpec> {
    if b & 0b1100_0000 != 0 {
        return Err(VdnError::Checkpoint(format!("reserved flag bits set: {b:#04x}")));
    }
    Ok(AgentSpec {
        value_decomposition: b & 1 != 0,
        shared_weights: b & 2 != 0,
        role_info: b & 4 != 0,
        low_comm: b & 8 != 0,
        high_comm: b & 16 != 0,
        centralized: b & 32 != 0,
    })
}

/// Serializes a network into the documented blob.
pub fn encode<S: Scalar>(net: &PolicyNetwork<S>) -> Vec<u8> {
    let spec = net.spec;
    let params = net.export_params();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * params.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&spec.spec_hash().to_le_bytes());
    out.push(flags_to_byte(spec));
    out.extend_from_slice(&[0u8; 3]);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

/// Parses and fully validates a checkpoint blob. Returns the architecture and
/// the parameter vector in declared order.
pub fn decode(bytes: &[u8]) -> Result<(AgentSpec, Vec<f32>)> {
    let fail = |msg: String| Err(VdnError::Checkpoint(msg));
    if bytes.len() < HEADER_LEN {
        return fail(format!("truncated header: {} bytes, need {HEADER_LEN}", bytes.len()));
    }
    if bytes[..4] != MAGIC {
        return fail(format!("bad magic {:02x?}, expected \"VDNC\"", &bytes[..4]));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return fail(format!("unsupported format version {version}"));
    }
    let hash = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let spec = flags_from_byte(bytes[16])?;
    if bytes[17..20] != [0, 0, 0] {
        return fail("reserved header bytes are not zero".into());
    }
    if spec.spec_hash() != hash {
        return fail(format!(
            "spec hash {hash:#018x} does not match flags {:#018x} ({})",
            spec.spec_hash(),
            spec.flag_string(),
        ));
    }
    let count = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * count {
        return fail(format!(
            "payload holds {} bytes, header declares {count} parameters ({} bytes)",
            payload.len(),
            4 * count,
        ));
    }
    let mut params = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return fail(format!("non-finite parameter at index {}", params.len()));
        }
        params.push(v);
    }
    Ok((spec, params))
}

/// Rebuilds a network from a checkpoint blob (validates the parameter count
/// against the architecture).
pub fn to_network<S: Scalar>(bytes: &[u8]) -> Result<PolicyNetwork<S>> {
    let (spec, params) = decode(bytes)?;
    let mut net = PolicyNetwork::build_with_override(spec, 0)?;
    let vals: Vec<f64> = params.iter().map(|&p| p as f64).collect();
    net.import_params(&vals)?;
    Ok(net)
}

pub fn save<S: Scalar>(net: &PolicyNetwork<S>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(net)).map_err(|e| VdnError::io(path, e))
}

pub fn load<S: Scalar>(path: &Path) -> Result<PolicyNetwork<S>> {
    let bytes = std::fs::read(path).map_err(|e| VdnError::io(path, e))?;
    to_network(&bytes)
}
