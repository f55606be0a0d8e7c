//! TCP demo service.
//!
//! Every frame on the socket is a little-endian `u32` length followed by that
//! many bytes. A client sends an encoded request; the server answers with an
//! encoded response or an error frame:
//!
//! ```text
//! error: "PSI1" | version | 0x7f | u8 code | UTF-8 diagnostic
//! ```
//!
//! A bad frame gets an error frame and the connection stays open. Once the
//! request budget is spent every request is refused with
//! [`ErrorCode::RotationRequired`] until the operator rotates the key.

use std::fmt;
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;

use psi_core::message::{MAGIC, MAX_ELEMENTS, REQUEST_HEADER_LEN, VERSION};
use psi_core::{Error, RequestBudget, ServerState};

pub const MSG_ERROR: u8 = 0x7f;

/// Hard cap on any frame a client will accept.
pub const MAX_FRAME_LEN: usize = REQUEST_HEADER_LEN + 33 * MAX_ELEMENTS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    Malformed = 1,
    TooManyElements = 2,
    RevealModeMismatch = 3,
    RotationRequired = 4,
    FrameTooLarge = 5,
    Other = 255,
}

impl ErrorCode {
    fn from_u8(b: u8) -> Self {
        match b {
            1 => ErrorCode::Malformed,
            2 => ErrorCode::TooManyElements,
            3 => ErrorCode::RevealModeMismatch,
            4 => ErrorCode::RotationRequired,
            5 => ErrorCode::FrameTooLarge,
            _ => ErrorCode::Other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RemoteError {
    pub code: ErrorCode,
    pub message: String,
}

impl fmt::Display for RemoteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

impl std::error::Error for RemoteError {}

pub fn encode_error(code: ErrorCode, message: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + message.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(MSG_ERROR);
    out.push(code as u8);
    out.extend_from_slice(message.as_bytes());
    out
}

/// Returns the remote error if `frame` is an error frame.
pub fn decode_error(frame: &[u8]) -> Option<RemoteError> {
    if frame.len() < 7 || frame[..4] != MAGIC || frame[5] != MSG_ERROR {
        return None;
    }
    Some(RemoteError {
        code: ErrorCode::from_u8(frame[6]),
        message: String::from_utf8_lossy(&frame[7..]).into_owned(),
    })
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let len = u32::try_from(payload.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame exceeds 4 GiB"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

pub enum Frame {
    Data(Vec<u8>),
    /// Length prefix exceeded the limit; the payload was read and dropped.
    Oversize(usize),
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R, max_len: usize) -> io::Result<Option<Frame>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > max_len {
        io::copy(&mut r.take(len as u64), &mut io::sink())?;
        return Ok(Some(Frame::Oversize(len)));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(Frame::Data(buf)))
}

/// Shared server: read-only protocol state plus the request counter.
pub struct Service {
    state: ServerState,
    budget: RequestBudget,
}

impl Service {
    pub fn new(state: ServerState, max_requests: Option<u64>) -> Self {
        Service {
            state,
            budget: RequestBudget::new(max_requests),
        }
    }

    pub fn requests_served(&self) -> u64 {
        self.budget.used()
    }

    fn max_frame_len(&self) -> usize {
        REQUEST_HEADER_LEN + 33 * self.state.params().max_client_queries.min(MAX_ELEMENTS)
    }

    /// Answers one request frame with a response frame or an error frame.
    pub fn handle(&self, request: &[u8]) -> Vec<u8> {
        let req = match psi_core::RequestMessage::decode(request) {
            Ok(r) => r,
            Err(e) => return encode_error(ErrorCode::Malformed, &e.to_string()),
        };
        if !self.budget.try_acquire() {
            return encode_error(
                ErrorCode::RotationRequired,
                "request limit for this key reached; rotate the server key",
            );
        }
        match self.state.process_request(&req) {
            Ok(resp) => resp.encode(),
            Err(e @ Error::TooManyElements { .. }) => {
                encode_error(ErrorCode::TooManyElements, &e.to_string())
            }
            Err(e @ Error::RevealModeMismatch) => {
                encode_error(ErrorCode::RevealModeMismatch, &e.to_string())
            }
            Err(e) => encode_error(ErrorCode::Other, &e.to_string()),
        }
    }

    fn serve_connection(&self, mut stream: TcpStream) -> io::Result<()> {
        let max = self.max_frame_len();
        while let Some(frame) = read_frame(&mut stream, max)? {
            let reply = match frame {
                Frame::Data(bytes) => self.handle(&bytes),
                Frame::Oversize(len) => encode_error(
                    ErrorCode::FrameTooLarge,
                    &format!("frame of {len} bytes exceeds limit {max}"),
                ),
            };
            write_frame(&mut stream, &reply)?;
        }
        Ok(())
    }

    /// Accepts connections forever, one thread each. Connection errors only
    /// end that connection.
    pub fn serve(self: Arc<Self>, listener: TcpListener) -> io::Result<()> {
        for stream in listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    continue;
                }
            };
            let svc = Arc::clone(&self);
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = svc.serve_connection(stream) {
                    eprintln!("connection {peer:?}: {e}");
                }
            });
        }
        Ok(())
    }
}

/// Client side of one connection.
pub struct Connection {
    stream: TcpStream,
}

#[derive(Debug)]
pub enum QueryError {
    Io(io::Error),
    Remote(RemoteError),
}

impl From<io::Error> for QueryError {
    fn from(e: io::Error) -> Self {
        QueryError::Io(e)
    }
}

impl Connection {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        Ok(Connection {
            stream: TcpStream::connect(addr)?,
        })
    }

    /// Sends one raw frame and returns the raw reply.
    pub fn round_trip(&mut self, frame: &[u8]) -> io::Result<Vec<u8>> {
        write_frame(&mut self.stream, frame)?;
        match read_frame(&mut self.stream, MAX_FRAME_LEN)? {
            Some(Frame::Data(reply)) => Ok(reply),
            Some(Frame::Oversize(len)) => Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("reply of {len} bytes exceeds limit"),
            )),
            None => Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "server closed the connection",
            )),
        }
    }

    /// Sends an encoded request; returns the encoded response.
    pub fn request(&mut self, request: &[u8]) -> Result<Vec<u8>, QueryError> {
        let reply = self.round_trip(request)?;
        match decode_error(&reply) {
            Some(e) => Err(QueryError::Remote(e)),
            None => Ok(reply),
        }
    }
}
