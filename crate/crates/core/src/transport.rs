//! Message transports: a synchronous in-memory channel pair and a
//! line-delimited TCP stream. Both deliver messages in order, exactly once.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use thiserror::Error;

use crate::wire::{self, Message, WireError};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer closed the connection")]
    Closed,
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error(transparent)]
    Codec(#[from] WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait Transport {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError>;
    fn receive(&mut self) -> Result<Message, TransportError>;
}

/// One end of a paired in-process queue.
#[derive(Debug)]
pub struct InMemoryTransport {
    tx: Sender<Message>,
    rx: Receiver<Message>,
    timeout: Option<Duration>,
}

/// Two connected in-memory endpoints.
pub fn in_memory_pair() -> (InMemoryTransport, InMemoryTransport) {
    let (atx, arx) = channel();
    let (btx, brx) = channel();
    (
        InMemoryTransport { tx: atx, rx: brx, timeout: None },
        InMemoryTransport { tx: btx, rx: arx, timeout: None },
    )
}

impl InMemoryTransport {
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }
}

impl Transport for InMemoryTransport {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.tx.send(msg.clone()).map_err(|_| TransportError::Closed)
    }

    fn receive(&mut self) -> Result<Message, TransportError> {
        match self.timeout {
            None => self.rx.recv().map_err(|_| TransportError::Closed),
            Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => TransportError::Timeout,
                RecvTimeoutError::Disconnected => TransportError::Closed,
            }),
        }
    }
}

/// Wire-encoded messages over a TCP byte stream, one per line.
#[derive(Debug)]
pub struct StreamTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    lines_read: usize,
}

impl StreamTransport {
    pub fn connect(
        addr: impl ToSocketAddrs,
        timeout: Option<Duration>,
    ) -> Result<Self, TransportError> {
        Self::from_stream(TcpStream::connect(addr)?, timeout)
    }

    /// Wraps an accepted or connected socket.
    pub fn from_stream(
        stream: TcpStream,
        timeout: Option<Duration>,
    ) -> Result<Self, TransportError> {
        stream.set_read_timeout(timeout)?;
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(Self { reader: BufReader::new(stream), writer, lines_read: 0 })
    }
}

impl Transport for StreamTransport {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        let mut line = wire::encode(msg);
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    fn receive(&mut self) -> Result<Message, TransportError> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => Err(TransportError::Closed),
            Ok(_) => {
                self.lines_read += 1;
                Ok(wire::decode_line(&line, self.lines_read)?)
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                Err(TransportError::Timeout)
            }
            Err(e) => Err(e.into()),
        }
    }
}
