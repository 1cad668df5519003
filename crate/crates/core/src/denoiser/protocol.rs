//! Denoiser wire protocol, version 1.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! request:  "NSMI" | version u8 = 1 | msg_type u8 = 1 | t u32 | n_channels u8
//!           | height u32 | width u32 | n_channels·H·W f32
//! response: "NSMI" | version u8 | msg_type u8 = 2 | status u8
//!           | H·W f32            (status 0)
//!           | len u32 | UTF-8    (status 1)
//! ```
//!
//! Channel 0 of a request is x_t; channel 1, when present, is the condition.

use std::io::{ErrorKind, Read, Write};

use super::DenoiserError;

pub const MAGIC: &[u8; 4] = b"NSMI";
pub const VERSION: u8 = 1;
pub const MSG_REQUEST: u8 = 1;
pub const MSG_RESPONSE: u8 = 2;
pub const STATUS_OK: u8 = 0;
pub const STATUS_ERROR: u8 = 1;

/// Upper bound on accepted payload sizes, guarding against garbage headers.
pub const MAX_PIXELS: usize = 1 << 26;
const MAX_MESSAGE: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub t: u32,
    pub height: u32,
    pub width: u32,
    pub x_t: Vec<f32>,
    pub condition: Option<Vec<f32>>,
}

impl Request {
    pub fn pixel_count(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn n_channels(&self) -> u8 {
        if self.condition.is_some() {
            2
        } else {
            1
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let channels = self.n_channels() as usize;
        let mut buf = Vec::with_capacity(19 + 4 * channels * self.pixel_count());
        buf.extend_from_slice(MAGIC);
        buf.push(VERSION);
        buf.push(MSG_REQUEST);
        buf.extend_from_slice(&self.t.to_le_bytes());
        buf.push(self.n_channels());
        buf.extend_from_slice(&self.height.to_le_bytes());
        buf.extend_from_slice(&self.width.to_le_bytes());
        put_f32s(&mut buf, &self.x_t);
        if let Some(c) = &self.condition {
            put_f32s(&mut buf, c);
        }
        buf
    }

    /// Reads one request. Returns `Ok(None)` on a clean end of stream
    /// before the first byte.
    pub fn read_from<R: Read>(reader: &mut R) -> Result<Option<Request>, DenoiserError> {
        let mut magic = [0u8; 4];
        match read_exact_or_eof(reader, &mut magic)? {
            0 => return Ok(None),
            4 => {}
            n => return Err(DenoiserError::protocol("truncated request header", &magic[..n])),
        }
        let mut head = [0u8; 15];
        reader.read_exact(&mut head)?;
        check_preamble(&magic, head[0], head[1], MSG_REQUEST)?;
        let t = u32::from_le_bytes(head[2..6].try_into().unwrap());
        let channels = head[6];
        let height = u32::from_le_bytes(head[7..11].try_into().unwrap());
        let width = u32::from_le_bytes(head[11..15].try_into().unwrap());
        if channels != 1 && channels != 2 {
            return Err(DenoiserError::protocol(
                format!("n_channels must be 1 or 2, got {channels}"),
                &head[6..7],
            ));
        }
        let pixels = height as usize * width as usize;
        if pixels == 0 || pixels > MAX_PIXELS {
            return Err(DenoiserError::protocol(
                format!("unsupported image size {height}x{width}"),
                &head[7..15],
            ));
        }
        let x_t = read_f32s(reader, pixels)?;
        let condition = if channels == 2 {
            Some(read_f32s(reader, pixels)?)
        } else {
            None
        };
        Ok(Some(Request {
            t,
            height,
            width,
            x_t,
            condition,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Ok(Vec<f32>),
    Error(String),
}

impl Response {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.push(VERSION);
        buf.push(MSG_RESPONSE);
        match self {
            Response::Ok(eps) => {
                buf.push(STATUS_OK);
                put_f32s(&mut buf, eps);
            }
            Response::Error(msg) => {
                buf.push(STATUS_ERROR);
                buf.extend_from_slice(&(msg.len() as u32).to_le_bytes());
                buf.extend_from_slice(msg.as_bytes());
            }
        }
        buf
    }

    /// Reads one response whose ok-payload holds `pixels` values.
    pub fn read_from<R: Read>(reader: &mut R, pixels: usize) -> Result<Response, DenoiserError> {
        let mut head = [0u8; 7];
        let got = read_exact_or_eof(reader, &mut head)?;
        if got < head.len() {
            return Err(DenoiserError::protocol(
                "connection closed inside response header",
                &head[..got],
            ));
        }
        check_preamble(head[..4].try_into().unwrap(), head[4], head[5], MSG_RESPONSE)?;
        match head[6] {
            STATUS_OK => Ok(Response::Ok(read_f32s(reader, pixels)?)),
            STATUS_ERROR => {
                let mut len = [0u8; 4];
                reader.read_exact(&mut len)?;
                let n = u32::from_le_bytes(len) as usize;
                if n > MAX_MESSAGE {
                    return Err(DenoiserError::protocol("error message too long", &len));
                }
                let mut msg = vec![0u8; n];
                reader.read_exact(&mut msg)?;
                String::from_utf8(msg)
                    .map(Response::Error)
                    .map_err(|e| DenoiserError::protocol("error message is not UTF-8", e.as_bytes()))
            }
            other => Err(DenoiserError::protocol(
                format!("unknown status {other}"),
                &head,
            )),
        }
    }
}

fn check_preamble(magic: &[u8; 4], version: u8, msg_type: u8, want: u8) -> Result<(), DenoiserError> {
    if magic != MAGIC {
        return Err(DenoiserError::protocol("bad magic", magic));
    }
    if version != VERSION {
        return Err(DenoiserError::protocol(
            format!("unsupported version {version}"),
            &[version],
        ));
    }
    if msg_type != want {
        return Err(DenoiserError::protocol(
            format!("expected message type {want}, got {msg_type}"),
            &[msg_type],
        ));
    }
    Ok(())
}

fn put_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_f32s<R: Read>(reader: &mut R, count: usize) -> Result<Vec<f32>, DenoiserError> {
    let mut raw = vec![0u8; 4 * count];
    reader.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Like `read_exact`, but reports how many bytes arrived before EOF.
fn read_exact_or_eof<R: Read>(reader: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn write_message<W: Write>(writer: &mut W, bytes: &[u8]) -> Result<(), DenoiserError> {
    writer.write_all(bytes)?;
    writer.flush()?;
    Ok(())
}
