//! Ordered, reliable message channels between the two parties and the
//! wire codec that runs over them.
//!
//! Frames on a byte stream are a 4-byte big-endian payload length followed by
//! the payload. A payload is one ASCII tag byte followed by comma-separated
//! decimal field elements, UTF-8 encoded.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, Sender};
use std::time::Duration;

use crate::field::Fp;

/// Refuse frames above this size instead of allocating whatever the peer
/// claims.
pub const MAX_FRAME_LEN: usize = 256 << 20;

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("peer disconnected")]
    Disconnected,
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_LEN} byte limit")]
    FrameTooLarge(usize),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// A bidirectional FIFO channel carrying whole messages.
pub trait Transport: Send {
    fn send(&mut self, payload: &[u8]) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Vec<u8>, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, payload: &[u8]) -> Result<(), TransportError> {
        (**self).send(payload)
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        (**self).recv()
    }
}

/// In-process duplex channel; one end per party.
pub struct ChannelTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl ChannelTransport {
    pub fn pair() -> (ChannelTransport, ChannelTransport) {
        let (tx_a, rx_b) = mpsc::channel();
        let (tx_b, rx_a) = mpsc::channel();
        (ChannelTransport { tx: tx_a, rx: rx_a }, ChannelTransport { tx: tx_b, rx: rx_b })
    }
}

impl Transport for ChannelTransport {
    fn send(&mut self, payload: &[u8]) -> Result<(), TransportError> {
        self.tx.send(payload.to_vec()).map_err(|_| TransportError::Disconnected)
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        self.rx.recv().map_err(|_| TransportError::Disconnected)
    }
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<(), TransportError> {
    if payload.len() > MAX_FRAME_LEN {
        return Err(TransportError::FrameTooLarge(payload.len()));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Vec<u8>, TransportError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(TransportError::Disconnected),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(TransportError::FrameTooLarge(len));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TransportError::Disconnected,
        _ => e.into(),
    })?;
    Ok(payload)
}

/// Length-prefixed framing over TCP. No authentication or encryption; the
/// deployment network is expected to provide both.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        Ok(TcpTransport { stream })
    }

    /// Connects, retrying until `timeout` so the peer may start second.
    pub fn connect<A: ToSocketAddrs + Clone>(addr: A, timeout: Duration) -> io::Result<Self> {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            match TcpStream::connect(addr.clone()) {
                Ok(stream) => return TcpTransport::new(stream),
                Err(e) if std::time::Instant::now() >= deadline => return Err(e),
                Err(_) => std::thread::sleep(Duration::from_millis(50)),
            }
        }
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, payload: &[u8]) -> Result<(), TransportError> {
        write_frame(&mut self.stream, payload)
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        read_frame(&mut self.stream)
    }
}

/// Message tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Handshake,
    Linkage,
    Budget,
    /// Masked differences of a Beaver multiplication round.
    Open,
    Reveal,
    Abort,
}

impl Tag {
    pub fn byte(self) -> u8 {
        match self {
            Tag::Handshake => b'H',
            Tag::Linkage => b'L',
            Tag::Budget => b'B',
            Tag::Open => b'M',
            Tag::Reveal => b'R',
            Tag::Abort => b'X',
        }
    }

    pub fn from_byte(b: u8) -> Option<Tag> {
        Some(match b {
            b'H' => Tag::Handshake,
            b'L' => Tag::Linkage,
            b'B' => Tag::Budget,
            b'M' => Tag::Open,
            b'R' => Tag::Reveal,
            b'X' => Tag::Abort,
            _ => return None,
        })
    }
}

/// Encodes a tagged list of field elements.
pub fn encode_message<const P: u64>(tag: Tag, elements: &[Fp<P>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + elements.len() * 20);
    out.push(tag.byte());
    for (i, e) in elements.iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        out.extend_from_slice(e.to_decimal().as_bytes());
    }
    out
}

pub fn decode_message<const P: u64>(payload: &[u8]) -> Result<(Tag, Vec<Fp<P>>), TransportError> {
    let (&tag_byte, body) = payload
        .split_first()
        .ok_or_else(|| TransportError::Malformed("empty payload".into()))?;
    let tag = Tag::from_byte(tag_byte)
        .ok_or_else(|| TransportError::Malformed(format!("unknown tag byte 0x{tag_byte:02x}")))?;
    if body.is_empty() {
        return Ok((tag, Vec::new()));
    }
    let text = std::str::from_utf8(body).map_err(|e| TransportError::Malformed(e.to_string()))?;
    let elements = text
        .split(',')
        .map(|s| s.parse::<Fp<P>>().map_err(|e| TransportError::Malformed(e.to_string())))
        .collect::<Result<_, _>>()?;
    Ok((tag, elements))
}
