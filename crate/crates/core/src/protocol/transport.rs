//! Byte links between node and gateway: an in-process pipe and UDP with one
//! frame per datagram.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::time::Duration;

pub trait FrameSink {
    fn send_frame(&mut self, frame: &[u8]) -> io::Result<()>;
}

pub trait ByteSource {
    /// Next chunk of received bytes, or `None` when nothing is waiting.
    fn try_recv_bytes(&mut self) -> io::Result<Option<Vec<u8>>>;
}

/// Single-producer single-consumer pipe.
pub fn pipe() -> (PipeSender, PipeReceiver) {
    let (tx, rx) = mpsc::channel();
    (PipeSender { tx }, PipeReceiver { rx })
}

#[derive(Debug)]
pub struct PipeSender {
    tx: Sender<Vec<u8>>,
}

#[derive(Debug)]
pub struct PipeReceiver {
    rx: Receiver<Vec<u8>>,
}

impl FrameSink for PipeSender {
    fn send_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        self.tx.send(frame.to_vec()).map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "pipe receiver dropped"))
    }
}

impl ByteSource for PipeReceiver {
    fn try_recv_bytes(&mut self) -> io::Result<Option<Vec<u8>>> {
        match self.rx.try_recv() {
            Ok(b) => Ok(Some(b)),
            Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => Ok(None),
        }
    }
}

impl PipeReceiver {
    /// Everything currently queued, concatenated.
    pub fn drain(&mut self) -> Vec<u8> {
        let mut out = Vec::new();
        while let Ok(b) = self.rx.try_recv() {
            out.extend(b);
        }
        out
    }
}

pub struct UdpSender {
    socket: UdpSocket,
    peer: SocketAddr,
}

impl UdpSender {
    pub fn connect(peer: impl ToSocketAddrs) -> io::Result<Self> {
        let peer = peer
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no peer address"))?;
        let bind: SocketAddr = if peer.is_ipv4() { "0.0.0.0:0".parse().unwrap() } else { "[::]:0".parse().unwrap() };
        Ok(UdpSender { socket: UdpSocket::bind(bind)?, peer })
    }
}

impl FrameSink for UdpSender {
    fn send_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        self.socket.send_to(frame, self.peer).map(|_| ())
    }
}

pub struct UdpReceiver {
    socket: UdpSocket,
    buf: Vec<u8>,
}

impl UdpReceiver {
    pub fn bind(addr: impl ToSocketAddrs, read_timeout: Option<Duration>) -> io::Result<Self> {
        let socket = UdpSocket::bind(addr)?;
        socket.set_read_timeout(read_timeout)?;
        Ok(UdpReceiver { socket, buf: vec![0; 2048] })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }
}

impl ByteSource for UdpReceiver {
    fn try_recv_bytes(&mut self) -> io::Result<Option<Vec<u8>>> {
        match self.socket.recv_from(&mut self.buf) {
            Ok((n, _)) => Ok(Some(self.buf[..n].to_vec())),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e),
        }
    }
}
