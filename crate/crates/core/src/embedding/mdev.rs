//! `MDEV1` vector files: magic line, ASCII `n d` header line, then `n*d`
//! little-endian `f32` values in row-major order.

use std::io::Write;

use super::EmbedError;

pub const MAGIC: &[u8] = b"MDEV1\n";

pub fn encode(n: usize, d: usize, values: &[f32]) -> Vec<u8> {
    assert_eq!(values.len(), n * d, "value count must equal n*d");
    let mut out = Vec::with_capacity(MAGIC.len() + 24 + values.len() * 4);
    out.extend_from_slice(MAGIC);
    write!(out, "{n} {d}\n").expect("write to vec");
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>), EmbedError> {
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| EmbedError::Format("missing MDEV1 magic".into()))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| EmbedError::Format("unterminated header".into()))?;
    let header = std::str::from_utf8(&rest[..nl]).map_err(|_| EmbedError::Format("header is not ASCII".into()))?;
    let mut parts = header.split(' ');
    let mut field = |name: &str| -> Result<usize, EmbedError> {
        parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| EmbedError::Format(format!("bad {name} in header `{header}`")))
    };
    let n = field("n")?;
    let d = field("d")?;
    let body = &rest[nl + 1..];
    if body.len() != n * d * 4 {
        return Err(EmbedError::Format(format!(
            "expected {} bytes of vector data, found {}",
            n * d * 4,
            body.len()
        )));
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((n, d, values))
}
