//! Blocking line-protocol client used by the emulators and tests.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use thiserror::Error;

use super::protocol::{decode, encode_line, DeviceKind, Message, ProtocolError};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to {addr}: {source}")]
    ConnectionRefused { addr: SocketAddr, source: io::Error },
    #[error("server rejected hello: {code}: {detail}")]
    Rejected { code: String, detail: String },
    #[error("expected welcome, got {0}")]
    UnexpectedReply(&'static str),
    #[error("connection closed by server")]
    Closed,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Rejected { code, .. } => Some(code),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub struct LineClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    session: u64,
    buf: Vec<u8>,
}

impl LineClient {
    /// Connects, sends `hello` and waits for the welcome.
    pub fn connect(addr: SocketAddr, kind: DeviceKind) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr).map_err(|source| ClientError::ConnectionRefused { addr, source })?;
        stream.set_nodelay(true)?;
        let mut c = LineClient {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            session: 0,
            buf: Vec::new(),
        };
        c.send(&Message::hello(kind))?;
        c.set_read_timeout(Some(Duration::from_secs(5)))?;
        match c.recv()? {
            Some(Message::Welcome { session, .. }) => c.session = session,
            Some(Message::Error { code, detail }) => return Err(ClientError::Rejected { code, detail }),
            Some(other) => return Err(ClientError::UnexpectedReply(other.type_name())),
            None => return Err(ClientError::Closed),
        }
        c.set_read_timeout(None)?;
        Ok(c)
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn set_read_timeout(&self, t: Option<Duration>) -> io::Result<()> {
        self.writer.set_read_timeout(t)
    }

    pub fn send(&mut self, m: &Message) -> io::Result<()> {
        self.writer.write_all(encode_line(m).as_bytes())
    }

    /// Writes `line` untouched; include the trailing newline.
    pub fn send_raw(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(line.as_bytes())
    }

    /// Next message; `Ok(None)` on a clean close. A read timeout surfaces as
    /// an `Io` error of kind `WouldBlock` or `TimedOut`, and keeps any partial line.
    pub fn recv(&mut self) -> Result<Option<Message>, ClientError> {
        loop {
            let n = self.reader.read_until(b'\n', &mut self.buf)?;
            if n == 0 && self.buf.is_empty() {
                return Ok(None);
            }
            if self.buf.last() != Some(&b'\n') && n != 0 {
                continue;
            }
            let line = String::from_utf8_lossy(&self.buf).into_owned();
            self.buf.clear();
            if line.trim().is_empty() {
                if n == 0 {
                    return Ok(None);
                }
                continue;
            }
            return Ok(Some(decode(&line)?));
        }
    }

    pub fn shutdown(&self) {
        let _ = self.writer.shutdown(std::net::Shutdown::Both);
    }
}

pub fn is_timeout(e: &ClientError) -> bool {
    matches!(e, ClientError::Io(io) if matches!(io.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut))
}
