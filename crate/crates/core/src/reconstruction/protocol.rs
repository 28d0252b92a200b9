//! Binary score-service messages.
//!
//! All integers are unsigned 32-bit little-endian and all samples are IEEE-754
//! binary32 little-endian, row-major.
//!
//! ```text
//! request payload : k | height | width | height*width samples
//! response payload: status | body
//!                   status 0 -> body is height*width samples
//!                   otherwise -> body is a UTF-8 message
//! stream frame    : payload length | payload
//! ```
//!
//! Over a stream socket every payload travels inside a frame. Over HTTP the
//! request payload is the body of `POST /score` and the response payload is
//! the body of the reply.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::Image;

pub const STATUS_OK: u32 = 0;
pub const STATUS_BAD_REQUEST: u32 = 1;
pub const STATUS_UNSUPPORTED: u32 = 2;
pub const STATUS_INTERNAL: u32 = 3;

/// Frames above this size are rejected before allocation.
pub const MAX_FRAME_BYTES: u32 = 1 << 28;

const HEADER_BYTES: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRequest {
    pub k: u32,
    pub state: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreResponse {
    Score(Image),
    Failure { status: u32, message: String },
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(offset as u64, "message ends inside a 32-bit field"))
}

fn push_samples(out: &mut Vec<u8>, image: &Image) {
    for &v in image.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn read_samples(bytes: &[u8], offset: usize, count: usize) -> Result<Vec<f64>> {
    let body = &bytes[offset..];
    if body.len() != 4 * count {
        return Err(Error::format(
            offset as u64,
            format!("expected {} sample bytes, found {}", 4 * count, body.len()),
        ));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect())
}

fn dimension(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::input(format!("{what} {v} does not fit the wire format")))
}

pub fn encode_request(k: usize, state: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_BYTES + 4 * state.len());
    push_u32(&mut out, dimension(k, "step")?);
    push_u32(&mut out, dimension(state.height(), "height")?);
    push_u32(&mut out, dimension(state.width(), "width")?);
    push_samples(&mut out, state);
    Ok(out)
}

pub fn decode_request(bytes: &[u8]) -> Result<ScoreRequest> {
    let k = read_u32(bytes, 0)?;
    let height = read_u32(bytes, 4)? as usize;
    let width = read_u32(bytes, 8)? as usize;
    if height == 0 || width == 0 {
        return Err(Error::format(4, "request dimensions must be positive"));
    }
    let count = height
        .checked_mul(width)
        .ok_or_else(|| Error::format(4, "request dimensions overflow"))?;
    let data = read_samples(bytes, HEADER_BYTES, count)?;
    Ok(ScoreRequest {
        k,
        state: Image::new(width, height, data)?,
    })
}

pub fn encode_response(response: &ScoreResponse) -> Vec<u8> {
    let mut out = Vec::new();
    match response {
        ScoreResponse::Score(image) => {
            push_u32(&mut out, STATUS_OK);
            push_samples(&mut out, image);
        }
        ScoreResponse::Failure { status, message } => {
            push_u32(&mut out, *status);
            out.extend_from_slice(message.as_bytes());
        }
    }
    out
}

/// Decodes a response to a request of the given shape.
pub fn decode_response(bytes: &[u8], width: usize, height: usize) -> Result<ScoreResponse> {
    let status = read_u32(bytes, 0)?;
    if status != STATUS_OK {
        return Ok(ScoreResponse::Failure {
            status,
            message: String::from_utf8_lossy(&bytes[4..]).into_owned(),
        });
    }
    let data = read_samples(bytes, 4, width * height)?;
    Ok(ScoreResponse::Score(Image::new(width, height, data)?))
}

pub fn write_frame<W: Write + ?Sized>(writer: &mut W, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l <= MAX_FRAME_BYTES)
        .ok_or_else(|| Error::input(format!("payload of {} bytes is too large for one frame", payload.len())))?;
    // one write, so a socket never sends the length prefix on its own
    let mut framed = Vec::with_capacity(4 + payload.len());
    framed.extend_from_slice(&len.to_le_bytes());
    framed.extend_from_slice(payload);
    writer.write_all(&framed)?;
    writer.flush()?;
    Ok(())
}

pub fn read_frame<R: Read + ?Sized>(reader: &mut R) -> Result<Vec<u8>> {
    let mut len = [0u8; 4];
    reader.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len);
    if len > MAX_FRAME_BYTES {
        return Err(Error::format(
            0,
            format!("frame length {len} exceeds the {MAX_FRAME_BYTES} byte limit"),
        ));
    }
    let mut payload = vec![0u8; len as usize];
    reader.read_exact(&mut payload)?;
    Ok(payload)
}

pub fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + payload.len());
    write_frame(&mut out, payload).expect("payload fits one frame");
    out
}
