//! Byte-stream links between a device and a host.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::thread;
use std::time::Duration;

/// A reliable, ordered byte stream. `try_recv` never blocks.
pub trait Transport: Send {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()>;

    /// Bytes that have arrived since the last call; empty when none.
    fn try_recv(&mut self) -> io::Result<Vec<u8>>;

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// One end of an in-process duplex pipe.
#[derive(Debug)]
pub struct PipeEnd {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected pipe ends; bytes sent on one arrive on the other in order.
pub fn duplex() -> (PipeEnd, PipeEnd) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        PipeEnd { tx: a_tx, rx: a_rx },
        PipeEnd { tx: b_tx, rx: b_rx },
    )
}

impl PipeEnd {
    /// Blocks until bytes arrive or the peer hangs up (`None`).
    pub fn recv(&mut self) -> Option<Vec<u8>> {
        self.rx.recv().ok()
    }

    pub fn recv_timeout(&mut self, timeout: Duration) -> Option<Vec<u8>> {
        self.rx.recv_timeout(timeout).ok()
    }

    pub fn sender(&self) -> Sender<Vec<u8>> {
        self.tx.clone()
    }
}

impl Transport for PipeEnd {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.tx
            .send(bytes.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "pipe peer dropped"))
    }

    fn try_recv(&mut self) -> io::Result<Vec<u8>> {
        let mut out = Vec::new();
        loop {
            match self.rx.try_recv() {
                Ok(chunk) => out.extend_from_slice(&chunk),
                Err(TryRecvError::Empty) => break,
                // a closed peer is only an error for senders
                Err(TryRecvError::Disconnected) => break,
            }
        }
        Ok(out)
    }
}

/// TCP client. A reader thread forwards inbound bytes over a channel so
/// the device loop never blocks on the socket.
#[derive(Debug)]
pub struct TcpTransport {
    stream: TcpStream,
    inbound: Receiver<io::Result<Vec<u8>>>,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> io::Result<Self> {
        let mut last = io::Error::new(io::ErrorKind::InvalidInput, "address resolved to nothing");
        for a in addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(s) => return Self::from_stream(s),
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    pub fn from_stream(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let mut reader = stream.try_clone()?;
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut buf = [0u8; 4096];
            loop {
                match reader.read(&mut buf) {
                    Ok(0) => break,
                    Ok(n) => {
                        if tx.send(Ok(buf[..n].to_vec())).is_err() {
                            break;
                        }
                    }
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Ok(Self { stream, inbound: rx })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.stream.write_all(bytes)
    }

    fn try_recv(&mut self) -> io::Result<Vec<u8>> {
        let mut out = Vec::new();
        loop {
            match self.inbound.try_recv() {
                Ok(Ok(chunk)) => out.extend_from_slice(&chunk),
                Ok(Err(e)) => return Err(e),
                Err(_) => break,
            }
        }
        Ok(out)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.stream.flush()
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipe_preserves_order() {
        let (mut a, mut b) = duplex();
        a.send(b"ab").unwrap();
        a.send(b"cd").unwrap();
        assert_eq!(b.try_recv().unwrap(), b"abcd");
        assert!(b.try_recv().unwrap().is_empty());
        drop(b);
        assert!(a.send(b"x").is_err());
    }
}
