//! Binary notification format and stream framing.
//!
//! A notification is a fixed 29-byte little-endian header followed by filler
//! bytes that pad it to the requested size:
//!
//! ```text
//! offset  size  field
//!      0     1  version (1)
//!      1     1  priority (0 = high)
//!      2     1  event_type
//!      3     4  stream_id
//!      7     8  sequence
//!     15     8  send_ts_ns (wall clock, ns since Unix epoch)
//!     23     4  symbol_id
//!     27     2  attr_count
//!     29     n  filler
//! ```
//!
//! Filler is the little-endian bytes of `stream_id ^ sequence` repeated, with
//! the last filler byte replaced by the XOR of every preceding byte of the
//! notification. Receivers check both, so payload corruption is detected.
//!
//! On byte streams each notification travels as a frame: a `u32` little-endian
//! length followed by that many bytes.

use std::io::{self, Read, Write};

pub const HEADER_LEN: usize = 29;
pub const WIRE_VERSION: u8 = 1;
pub const MAX_NOTIFICATION_LEN: usize = 31_744 + HEADER_LEN;
pub const LENGTH_PREFIX_LEN: usize = 4;

const OFF_PRIORITY: usize = 1;
const OFF_EVENT_TYPE: usize = 2;
const OFF_STREAM: usize = 3;
const OFF_SEQUENCE: usize = 7;
const OFF_SEND_TS: usize = 15;
const OFF_SYMBOL: usize = 23;
const OFF_ATTRS: usize = 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NotificationHeader {
    pub priority: u8,
    pub event_type: u8,
    pub stream_id: u32,
    pub sequence: u64,
    pub send_ts_ns: u64,
    pub symbol_id: u32,
    pub attr_count: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("notification of {0} bytes is shorter than the {HEADER_LEN}-byte header")]
    Short(usize),
    #[error("notification of {0} bytes exceeds the {MAX_NOTIFICATION_LEN}-byte maximum")]
    TooLarge(usize),
    #[error("unknown wire version {0}")]
    UnknownVersion(u8),
    #[error("filler mismatch at byte {0}")]
    Corrupt(usize),
}

impl NotificationHeader {
    fn write_to(&self, out: &mut [u8]) {
        out[0] = WIRE_VERSION;
        out[OFF_PRIORITY] = self.priority;
        out[OFF_EVENT_TYPE] = self.event_type;
        out[OFF_STREAM..OFF_SEQUENCE].copy_from_slice(&self.stream_id.to_le_bytes());
        out[OFF_SEQUENCE..OFF_SEND_TS].copy_from_slice(&self.sequence.to_le_bytes());
        out[OFF_SEND_TS..OFF_SYMBOL].copy_from_slice(&self.send_ts_ns.to_le_bytes());
        out[OFF_SYMBOL..OFF_ATTRS].copy_from_slice(&self.symbol_id.to_le_bytes());
        out[OFF_ATTRS..HEADER_LEN].copy_from_slice(&self.attr_count.to_le_bytes());
    }

    fn read_from(b: &[u8]) -> Self {
        Self {
            priority: b[OFF_PRIORITY],
            event_type: b[OFF_EVENT_TYPE],
            stream_id: u32::from_le_bytes(b[OFF_STREAM..OFF_SEQUENCE].try_into().unwrap()),
            sequence: u64::from_le_bytes(b[OFF_SEQUENCE..OFF_SEND_TS].try_into().unwrap()),
            send_ts_ns: u64::from_le_bytes(b[OFF_SEND_TS..OFF_SYMBOL].try_into().unwrap()),
            symbol_id: u32::from_le_bytes(b[OFF_SYMBOL..OFF_ATTRS].try_into().unwrap()),
            attr_count: u16::from_le_bytes(b[OFF_ATTRS..HEADER_LEN].try_into().unwrap()),
        }
    }

    fn filler_pattern(&self) -> [u8; 8] {
        (self.stream_id as u64 ^ self.sequence).to_le_bytes()
    }
}

fn check_size(total_size: usize) -> Result<(), CodecError> {
    if total_size < HEADER_LEN {
        Err(CodecError::Short(total_size))
    } else if total_size > MAX_NOTIFICATION_LEN {
        Err(CodecError::TooLarge(total_size))
    } else {
        Ok(())
    }
}

/// Encodes `header` padded to `total_size` bytes.
pub fn encode_notification(header: &NotificationHeader, total_size: usize) -> Result<Vec<u8>, CodecError> {
    let mut buf = Vec::with_capacity(total_size);
    encode_into(header, total_size, &mut buf)?;
    Ok(buf)
}

/// Encodes into `buf`, replacing its contents. Reuses the allocation.
pub fn encode_into(header: &NotificationHeader, total_size: usize, buf: &mut Vec<u8>) -> Result<(), CodecError> {
    check_size(total_size)?;
    buf.clear();
    buf.resize(total_size, 0);
    header.write_to(&mut buf[..HEADER_LEN]);
    if total_size > HEADER_LEN {
        let pattern = header.filler_pattern();
        let filler = &mut buf[HEADER_LEN..total_size - 1];
        for chunk in filler.chunks_mut(8) {
            chunk.copy_from_slice(&pattern[..chunk.len()]);
        }
        buf[total_size - 1] = xor_all(&buf[..total_size - 1]);
    }
    Ok(())
}

#[inline]
fn xor_all(bytes: &[u8]) -> u8 {
    // fold eight bytes at a time, then collapse the lanes
    let mut chunks = bytes.chunks_exact(8);
    let mut acc = 0u64;
    for c in &mut chunks {
        acc ^= u64::from_le_bytes(c.try_into().unwrap());
    }
    let mut x = acc.to_le_bytes().iter().fold(0u8, |a, b| a ^ b);
    for b in chunks.remainder() {
        x ^= b;
    }
    x
}

/// Decodes a notification, returning its header and the number of bytes
/// after the header.
pub fn decode_notification(bytes: &[u8]) -> Result<(NotificationHeader, usize), CodecError> {
    check_size(bytes.len())?;
    if bytes[0] != WIRE_VERSION {
        return Err(CodecError::UnknownVersion(bytes[0]));
    }
    let header = NotificationHeader::read_from(bytes);
    let n = bytes.len();
    if n > HEADER_LEN {
        let pattern = header.filler_pattern();
        let filler = &bytes[HEADER_LEN..n - 1];
        for (i, chunk) in filler.chunks(8).enumerate() {
            if chunk != &pattern[..chunk.len()] {
                let at = chunk.iter().zip(pattern).position(|(a, b)| *a != b).unwrap_or(0);
                return Err(CodecError::Corrupt(HEADER_LEN + i * 8 + at));
            }
        }
        if bytes[n - 1] != xor_all(&bytes[..n - 1]) {
            return Err(CodecError::Corrupt(n - 1));
        }
    }
    Ok((header, n - HEADER_LEN))
}

/// Reads `(stream_id, sequence)` without validating anything else.
#[inline]
pub fn peek_stream_sequence(bytes: &[u8]) -> Option<(u32, u64)> {
    if bytes.len() < HEADER_LEN {
        return None;
    }
    Some((
        u32::from_le_bytes(bytes[OFF_STREAM..OFF_SEQUENCE].try_into().unwrap()),
        u64::from_le_bytes(bytes[OFF_SEQUENCE..OFF_SEND_TS].try_into().unwrap()),
    ))
}

/// Overwrites the send timestamp of an encoded notification and refreshes its
/// checksum byte.
pub fn restamp(bytes: &mut [u8], send_ts_ns: u64) -> Result<(), CodecError> {
    check_size(bytes.len())?;
    let old: [u8; 8] = bytes[OFF_SEND_TS..OFF_SYMBOL].try_into().unwrap();
    let new = send_ts_ns.to_le_bytes();
    bytes[OFF_SEND_TS..OFF_SYMBOL].copy_from_slice(&new);
    let n = bytes.len();
    if n > HEADER_LEN {
        let delta = old.iter().zip(new).fold(0u8, |a, (o, n)| a ^ o ^ n);
        bytes[n - 1] ^= delta;
    }
    Ok(())
}

/// Writes a length-prefixed frame.
pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    w.write_all(&(body.len() as u32).to_le_bytes())?;
    w.write_all(body)
}

/// Result of reading one frame from a byte stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameRead {
    Frame,
    /// Clean end of stream on a frame boundary.
    Eof,
}

/// Reads one length-prefixed frame into `buf`.
///
/// An end of stream inside a frame is `UnexpectedEof`; a length above the
/// maximum notification size is `InvalidData`.
pub fn read_frame<R: Read>(r: &mut R, buf: &mut Vec<u8>) -> io::Result<FrameRead> {
    let mut len = [0u8; LENGTH_PREFIX_LEN];
    let mut got = 0;
    while got < LENGTH_PREFIX_LEN {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(FrameRead::Eof),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_NOTIFICATION_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame length {len} exceeds {MAX_NOTIFICATION_LEN}"),
        ));
    }
    buf.clear();
    buf.resize(len, 0);
    r.read_exact(buf)?;
    Ok(FrameRead::Frame)
}
