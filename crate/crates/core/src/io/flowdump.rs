//! Binary flow fields: 8-byte magic, u32 width and height (little-endian),
//! then interleaved f32 `(dx, dy)` pairs in row-major order.

use std::path::Path;

use crate::align::FlowField;
use crate::error::{Error, Result};
use crate::image::ImagePlane;

pub const FLOW_MAGIC: [u8; 8] = *b"BFLOW\0\x01\0";

pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(16 + w * h * 8);
    out.extend_from_slice(&FLOW_MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    for (dx, dy) in flow.dx.data().iter().zip(flow.dy.data()) {
        out.extend_from_slice(&(*dx as f32).to_le_bytes());
        out.extend_from_slice(&(*dy as f32).to_le_bytes());
    }
    out
}

pub fn decode_flow(buf: &[u8]) -> Result<FlowField> {
    if buf.len() < 16 || buf[..8] != FLOW_MAGIC {
        return Err(Error::Validation("not a flow dump".into()));
    }
    let w = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    if buf.len() != 16 + w * h * 8 {
        return Err(Error::Validation(format!("flow dump size does not match {w}x{h}")));
    }
    let f = |i: usize| f32::from_le_bytes(buf[16 + 4 * i..20 + 4 * i].try_into().unwrap()) as f64;
    Ok(FlowField {
        dx: ImagePlane::from_fn(w, h, |x, y| f(2 * (y * w + x))),
        dy: ImagePlane::from_fn(w, h, |x, y| f(2 * (y * w + x) + 1)),
    })
}

pub fn write_flow(flow: &FlowField, path: &Path) -> Result<()> {
    std::fs::write(path, encode_flow(flow)).map_err(|e| Error::io(path, e))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    decode_flow(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
