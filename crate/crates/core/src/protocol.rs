//! Binary wire protocol for master/worker calls.
//!
//! Every message travels in exactly one frame:
//!
//! ```text
//! [4B magic "PCB1"][1B version = 1][1B msg type][4B payload len][payload]
//! ```
//!
//! All multi-byte integers are big-endian; floats are IEEE-754 bit
//! patterns, big-endian. The payload length is validated against an
//! upper bound before any buffering, and again against the size implied
//! by the message type, so a malformed frame yields a typed error
//! rather than a crash or an oversized allocation. Frames are
//! self-delimiting: concatenated frames decode back to the original
//! sequence.
//!
//! Message types:
//!
//! | type | message        | payload |
//! |------|----------------|---------|
//! | 0x01 | Ping           | (empty) |
//! | 0x02 | Pong           | (empty) |
//! | 0x03 | Warmup         | (empty) |
//! | 0x04 | WarmupDone     | (empty) |
//! | 0x10 | MatvecRequest  | `[4B start_row][4B rows][4B cols][rows*cols f64][cols f64]` |
//! | 0x11 | MatvecResponse | `[4B start_row][4B rows][rows f64]` |
//! | 0x20 | PiRequest      | `[8B samples][4B threads][8B base_seed][8B stream_base]` |
//! | 0x21 | PiResponse     | `[8B estimate f64][8B samples]` |
//! | 0x7F | ErrorReply     | `[2B code][UTF-8 message]` |
//!
//! The connection discipline is one request in flight at a time: a peer
//! writes one frame and reads one frame back. On a protocol error the
//! connection is closed; kernel-level failures travel as `ErrorReply`
//! and leave the connection usable.

use std::io::{Read, Write};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"PCB1";
pub const VERSION: u8 = 1;
/// Frame header: magic + version + msg type + payload length.
pub const HEADER_LEN: usize = 10;
/// Upper bound on the payload length field.
pub const MAX_PAYLOAD_LEN: u64 = 1 << 31;

pub const MSG_PING: u8 = 0x01;
pub const MSG_PONG: u8 = 0x02;
pub const MSG_WARMUP: u8 = 0x03;
pub const MSG_WARMUP_DONE: u8 = 0x04;
pub const MSG_MATVEC_REQUEST: u8 = 0x10;
pub const MSG_MATVEC_RESPONSE: u8 = 0x11;
pub const MSG_PI_REQUEST: u8 = 0x20;
pub const MSG_PI_RESPONSE: u8 = 0x21;
pub const MSG_ERROR_REPLY: u8 = 0x7F;

/// Error codes carried by `ErrorReply`.
pub const ERR_INVALID_ARGUMENT: u16 = 1;
pub const ERR_UNEXPECTED_MESSAGE: u16 = 2;
pub const ERR_INTERNAL: u16 = 3;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type 0x{0:02x}")]
    UnknownMsgType(u8),
    #[error("frame truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("payload length {declared} does not match message type 0x{msg_type:02x} (expected {expected})")]
    LengthMismatch {
        msg_type: u8,
        declared: u64,
        expected: u64,
    },
    #[error("payload length {0} exceeds the {MAX_PAYLOAD_LEN} byte limit")]
    PayloadTooLarge(u64),
    #[error("error reply message is not valid UTF-8")]
    InvalidUtf8,
    #[error("payload size overflows the frame format")]
    Overflow,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One request or reply.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Ping,
    Pong,
    Warmup,
    WarmupDone,
    MatvecRequest {
        start_row: u32,
        rows: u32,
        cols: u32,
        /// Row-major shard data, `rows * cols` values.
        row_data: Vec<f64>,
        /// Full multiplicand vector, `cols` values.
        vector: Vec<f64>,
    },
    MatvecResponse {
        start_row: u32,
        rows: u32,
        result: Vec<f64>,
    },
    PiRequest {
        samples: u64,
        threads: u32,
        base_seed: u64,
        stream_base: u64,
    },
    PiResponse {
        estimate: f64,
        samples: u64,
    },
    ErrorReply {
        code: u16,
        message: String,
    },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::Ping => MSG_PING,
            Message::Pong => MSG_PONG,
            Message::Warmup => MSG_WARMUP,
            Message::WarmupDone => MSG_WARMUP_DONE,
            Message::MatvecRequest { .. } => MSG_MATVEC_REQUEST,
            Message::MatvecResponse { .. } => MSG_MATVEC_RESPONSE,
            Message::PiRequest { .. } => MSG_PI_REQUEST,
            Message::PiResponse { .. } => MSG_PI_RESPONSE,
            Message::ErrorReply { .. } => MSG_ERROR_REPLY,
        }
    }

    /// Short name for log lines.
    pub fn name(&self) -> &'static str {
        match self {
            Message::Ping => "Ping",
            Message::Pong => "Pong",
            Message::Warmup => "Warmup",
            Message::WarmupDone => "WarmupDone",
            Message::MatvecRequest { .. } => "MatvecRequest",
            Message::MatvecResponse { .. } => "MatvecResponse",
            Message::PiRequest { .. } => "PiRequest",
            Message::PiResponse { .. } => "PiResponse",
            Message::ErrorReply { .. } => "ErrorReply",
        }
    }

    fn payload_len(&self) -> Result<u64, ProtocolError> {
        let len = match self {
            Message::Ping | Message::Pong | Message::Warmup | Message::WarmupDone => 0,
            Message::MatvecRequest { rows, cols, .. } => {
                let floats = (*rows as u64)
                    .checked_mul(*cols as u64)
                    .and_then(|rc| rc.checked_add(*cols as u64))
                    .ok_or(ProtocolError::Overflow)?;
                floats
                    .checked_mul(8)
                    .and_then(|b| b.checked_add(12))
                    .ok_or(ProtocolError::Overflow)?
            }
            Message::MatvecResponse { rows, .. } => 8 + (*rows as u64) * 8,
            Message::PiRequest { .. } => 28,
            Message::PiResponse { .. } => 16,
            Message::ErrorReply { message, .. } => 2 + message.len() as u64,
        };
        if len > MAX_PAYLOAD_LEN {
            return Err(ProtocolError::PayloadTooLarge(len));
        }
        Ok(len)
    }
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_be_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_be_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_bits().to_be_bytes());
}

fn put_f64_slice(buf: &mut Vec<u8>, vs: &[f64]) {
    for &v in vs {
        put_f64(buf, v);
    }
}

/// Serializes a message into exactly one frame.
pub fn encode(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    let payload_len = msg.payload_len()?;
    let mut buf = Vec::with_capacity(HEADER_LEN + payload_len as usize);
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    buf.push(msg.msg_type());
    put_u32(&mut buf, payload_len as u32);

    match msg {
        Message::Ping | Message::Pong | Message::Warmup | Message::WarmupDone => {}
        Message::MatvecRequest {
            start_row,
            rows,
            cols,
            row_data,
            vector,
        } => {
            debug_assert_eq!(row_data.len() as u64, *rows as u64 * *cols as u64);
            debug_assert_eq!(vector.len(), *cols as usize);
            put_u32(&mut buf, *start_row);
            put_u32(&mut buf, *rows);
            put_u32(&mut buf, *cols);
            put_f64_slice(&mut buf, row_data);
            put_f64_slice(&mut buf, vector);
        }
        Message::MatvecResponse {
            start_row,
            rows,
            result,
        } => {
            debug_assert_eq!(result.len(), *rows as usize);
            put_u32(&mut buf, *start_row);
            put_u32(&mut buf, *rows);
            put_f64_slice(&mut buf, result);
        }
        Message::PiRequest {
            samples,
            threads,
            base_seed,
            stream_base,
        } => {
            put_u64(&mut buf, *samples);
            put_u32(&mut buf, *threads);
            put_u64(&mut buf, *base_seed);
            put_u64(&mut buf, *stream_base);
        }
        Message::PiResponse { estimate, samples } => {
            put_f64(&mut buf, *estimate);
            put_u64(&mut buf, *samples);
        }
        Message::ErrorReply { code, message } => {
            buf.extend_from_slice(&code.to_be_bytes());
            buf.extend_from_slice(message.as_bytes());
        }
    }
    debug_assert_eq!(buf.len(), HEADER_LEN + payload_len as usize);
    Ok(buf)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ProtocolError> {
        let end = self.pos.checked_add(n).ok_or(ProtocolError::Overflow)?;
        if end > self.data.len() {
            return Err(ProtocolError::Truncated {
                needed: end,
                available: self.data.len(),
            });
        }
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ProtocolError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn f64_vec(&mut self, count: usize) -> Result<Vec<f64>, ProtocolError> {
        let raw = self.take(count.checked_mul(8).ok_or(ProtocolError::Overflow)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_be_bytes(c.try_into().unwrap())))
            .collect())
    }
}

fn parse_payload(msg_type: u8, payload: &[u8]) -> Result<Message, ProtocolError> {
    let declared = payload.len() as u64;
    let mismatch = |expected: u64| ProtocolError::LengthMismatch {
        msg_type,
        declared,
        expected,
    };
    let mut cur = Cursor::new(payload);
    let msg = match msg_type {
        MSG_PING | MSG_PONG | MSG_WARMUP | MSG_WARMUP_DONE => {
            if declared != 0 {
                return Err(mismatch(0));
            }
            match msg_type {
                MSG_PING => Message::Ping,
                MSG_PONG => Message::Pong,
                MSG_WARMUP => Message::Warmup,
                _ => Message::WarmupDone,
            }
        }
        MSG_MATVEC_REQUEST => {
            if declared < 12 {
                return Err(mismatch(12));
            }
            let start_row = cur.u32()?;
            let rows = cur.u32()?;
            let cols = cur.u32()?;
            let floats = (rows as u64) * (cols as u64) + cols as u64;
            let expected = match floats.checked_mul(8).and_then(|b| b.checked_add(12)) {
                Some(e) => e,
                None => return Err(mismatch(u64::MAX)),
            };
            if declared != expected {
                return Err(mismatch(expected));
            }
            let row_data = cur.f64_vec((rows as u64 * cols as u64) as usize)?;
            let vector = cur.f64_vec(cols as usize)?;
            Message::MatvecRequest {
                start_row,
                rows,
                cols,
                row_data,
                vector,
            }
        }
        MSG_MATVEC_RESPONSE => {
            if declared < 8 {
                return Err(mismatch(8));
            }
            let start_row = cur.u32()?;
            let rows = cur.u32()?;
            let expected = 8 + rows as u64 * 8;
            if declared != expected {
                return Err(mismatch(expected));
            }
            let result = cur.f64_vec(rows as usize)?;
            Message::MatvecResponse {
                start_row,
                rows,
                result,
            }
        }
        MSG_PI_REQUEST => {
            if declared != 28 {
                return Err(mismatch(28));
            }
            Message::PiRequest {
                samples: cur.u64()?,
                threads: cur.u32()?,
                base_seed: cur.u64()?,
                stream_base: cur.u64()?,
            }
        }
        MSG_PI_RESPONSE => {
            if declared != 16 {
                return Err(mismatch(16));
            }
            Message::PiResponse {
                estimate: cur.f64()?,
                samples: cur.u64()?,
            }
        }
        MSG_ERROR_REPLY => {
            if declared < 2 {
                return Err(mismatch(2));
            }
            let code = u16::from_be_bytes(cur.take(2)?.try_into().unwrap());
            let message = std::str::from_utf8(cur.take(payload.len() - 2)?)
                .map_err(|_| ProtocolError::InvalidUtf8)?
                .to_string();
            Message::ErrorReply { code, message }
        }
        other => return Err(ProtocolError::UnknownMsgType(other)),
    };
    Ok(msg)
}

/// Validated frame header fields.
fn parse_header(header: &[u8; HEADER_LEN]) -> Result<(u8, u64), ProtocolError> {
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    if header[4] != VERSION {
        return Err(ProtocolError::UnsupportedVersion(header[4]));
    }
    let msg_type = header[5];
    let payload_len = u32::from_be_bytes(header[6..10].try_into().unwrap()) as u64;
    if payload_len > MAX_PAYLOAD_LEN {
        return Err(ProtocolError::PayloadTooLarge(payload_len));
    }
    Ok((msg_type, payload_len))
}

/// Decodes one frame from the front of `buf`, returning the message and
/// the number of bytes consumed.
pub fn decode(buf: &[u8]) -> Result<(Message, usize), ProtocolError> {
    if buf.len() < HEADER_LEN {
        return Err(ProtocolError::Truncated {
            needed: HEADER_LEN,
            available: buf.len(),
        });
    }
    let header: [u8; HEADER_LEN] = buf[..HEADER_LEN].try_into().unwrap();
    let (msg_type, payload_len) = parse_header(&header)?;
    let total = HEADER_LEN + payload_len as usize;
    if buf.len() < total {
        return Err(ProtocolError::Truncated {
            needed: total,
            available: buf.len(),
        });
    }
    let msg = parse_payload(msg_type, &buf[HEADER_LEN..total])?;
    Ok((msg, total))
}

/// Reads one frame from a stream. Returns `Ok(None)` on a clean EOF at
/// a frame boundary (the peer closed the connection).
pub fn read_message_opt<R: Read>(r: &mut R) -> Result<Option<Message>, ProtocolError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        let n = r.read(&mut header[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(ProtocolError::Truncated {
                needed: HEADER_LEN,
                available: filled,
            });
        }
        filled += n;
    }
    let (msg_type, payload_len) = parse_header(&header)?;
    // Length was validated against MAX_PAYLOAD_LEN above, so this
    // allocation is bounded.
    let mut payload = vec![0u8; payload_len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some(parse_payload(msg_type, &payload)?))
}

/// Reads one frame from a stream, treating EOF as an error.
pub fn read_message<R: Read>(r: &mut R) -> Result<Message, ProtocolError> {
    read_message_opt(r)?.ok_or(ProtocolError::Truncated {
        needed: HEADER_LEN,
        available: 0,
    })
}

/// Writes one frame to a stream.
pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), ProtocolError> {
    let bytes = encode(msg)?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Logical payload sizes used by the transfer-time model.
///
/// These count application bits only, framing excluded. The pi entries
/// use the compact accounting the offload analysis is based on: a
/// request is two 32-bit integers (sample count and thread count), a
/// response is one 64-bit float. The live protocol carries wider
/// fields (64-bit sample counts so budgets above 2^31 fit); for cost
/// modeling the compact form is what matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    /// Pi requests to `workers` workers: two 32-bit integers each.
    PiRequest32 { workers: u64 },
    /// Pi responses from `workers` workers: one 64-bit float each.
    PiResponse64 { workers: u64 },
    /// Full request/response round trip for the pi task.
    PiRoundTrip { workers: u64 },
    /// Matrix task: the matrix shipped out and the result collected
    /// back, both counted at full `rows x cols` size in 64-bit floats.
    MatvecFullTask { rows: u64, cols: u64 },
}

/// Application-payload size in bits for one task shape.
pub fn payload_bits(kind: PayloadKind) -> Result<u64, ProtocolError> {
    let bits = match kind {
        PayloadKind::PiRequest32 { workers } => workers.checked_mul(2 * 32),
        PayloadKind::PiResponse64 { workers } => workers.checked_mul(64),
        PayloadKind::PiRoundTrip { workers } => workers.checked_mul(64 + 64),
        PayloadKind::MatvecFullTask { rows, cols } => rows
            .checked_mul(cols)
            .and_then(|cells| cells.checked_mul(64))
            .and_then(|bits| bits.checked_mul(2)),
    };
    bits.ok_or(ProtocolError::Overflow)
}
