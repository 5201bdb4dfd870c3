//! Datagram transports: UDP sockets and an in-memory loopback pair.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::frame::MAX_FRAME_LEN;

/// Plant-to-autopilot default port.
pub const PLANT_TO_AUTOPILOT_PORT: u16 = 47800;
/// Autopilot-to-plant default port.
pub const AUTOPILOT_TO_PLANT_PORT: u16 = 47801;

pub const ENV_HOST: &str = "DEADSTICK_SITL_HOST";
pub const ENV_PLANT_PORT: &str = "DEADSTICK_PLANT_PORT";
pub const ENV_AUTOPILOT_PORT: &str = "DEADSTICK_AUTOPILOT_PORT";

/// Unreliable datagram link.
pub trait Transport {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()>;
    /// Waits up to `timeout` for one datagram; `Ok(None)` on timeout.
    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>>;
}

/// One end of an in-memory datagram pipe.
#[derive(Debug)]
pub struct Loopback {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected loopback ends.
pub fn loopback_pair() -> (Loopback, Loopback) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (
        Loopback { tx: a_tx, rx: a_rx },
        Loopback { tx: b_tx, rx: b_rx },
    )
}

impl Transport for Loopback {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        // A vanished peer is just a lost datagram.
        let _ = self.tx.send(datagram.to_vec());
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        match self.rx.recv_timeout(timeout) {
            Ok(d) => Ok(Some(d)),
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => Ok(None),
        }
    }
}

/// Drops each outgoing datagram with probability `loss`, from a seeded stream.
#[derive(Debug)]
pub struct Lossy<T> {
    pub inner: T,
    loss: f64,
    rng: ChaCha8Rng,
    pub dropped: u64,
}

impl<T> Lossy<T> {
    pub fn new(inner: T, loss: f64, seed: u64) -> Self {
        Self {
            inner,
            loss: loss.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
            dropped: 0,
        }
    }

    /// Draws one keep/drop decision.
    pub fn keep(&mut self) -> bool {
        let keep = self.rng.random::<f64>() >= self.loss;
        if !keep {
            self.dropped += 1;
        }
        keep
    }
}

impl<T: Transport> Transport for Lossy<T> {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        if self.keep() {
            self.inner.send(datagram)
        } else {
            Ok(())
        }
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        self.inner.recv(timeout)
    }
}

/// UDP endpoint bound locally and sending to a fixed peer.
#[derive(Debug)]
pub struct Udp {
    socket: UdpSocket,
    peer: SocketAddr,
}

impl Udp {
    pub fn bind(local: SocketAddr, peer: SocketAddr) -> io::Result<Self> {
        let socket = UdpSocket::bind(local)?;
        Ok(Self { socket, peer })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }
}

impl Transport for Udp {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        match self.socket.send_to(datagram, self.peer) {
            Ok(_) => Ok(()),
            // Nobody listening yet: the datagram is lost, as UDP allows.
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => Ok(()),
            Err(e) => Err(e),
        }
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        self.socket
            .set_read_timeout(Some(timeout.max(Duration::from_micros(1))))?;
        let mut buf = [0u8; MAX_FRAME_LEN + 1];
        match self.socket.recv_from(&mut buf) {
            Ok((n, _)) => Ok(Some(buf[..n].to_vec())),
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock
                        | io::ErrorKind::TimedOut
                        | io::ErrorKind::ConnectionRefused
                ) =>
            {
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

/// Addresses of both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SitlAddrs {
    /// Where the autopilot listens (plant to autopilot traffic).
    pub autopilot: SocketAddr,
    /// Where the plant listens (autopilot to plant traffic).
    pub plant: SocketAddr,
}

impl SitlAddrs {
    pub fn new(host: &str, plant_to_autopilot: u16, autopilot_to_plant: u16) -> io::Result<Self> {
        let resolve = |port: u16| {
            (host, port).to_socket_addrs()?.next().ok_or_else(|| {
                io::Error::new(io::ErrorKind::NotFound, format!("cannot resolve {host}"))
            })
        };
        Ok(Self {
            autopilot: resolve(plant_to_autopilot)?,
            plant: resolve(autopilot_to_plant)?,
        })
    }

    /// Defaults, overridden by `DEADSTICK_SITL_HOST`, `DEADSTICK_PLANT_PORT`
    /// (plant to autopilot) and `DEADSTICK_AUTOPILOT_PORT` (autopilot to plant).
    pub fn from_env() -> io::Result<Self> {
        let host = std::env::var(ENV_HOST).unwrap_or_else(|_| "127.0.0.1".to_string());
        let port = |name: &str, default: u16| -> io::Result<u16> {
            match std::env::var(name) {
                Ok(v) => v.parse().map_err(|_| {
                    io::Error::new(io::ErrorKind::InvalidInput, format!("{name}={v} is not a port"))
                }),
                Err(_) => Ok(default),
            }
        };
        Self::new(
            &host,
            port(ENV_PLANT_PORT, PLANT_TO_AUTOPILOT_PORT)?,
            port(ENV_AUTOPILOT_PORT, AUTOPILOT_TO_PLANT_PORT)?,
        )
    }

    pub fn plant_transport(&self) -> io::Result<Udp> {
        Udp::bind(self.plant, self.autopilot)
    }

    pub fn autopilot_transport(&self) -> io::Result<Udp> {
        Udp::bind(self.autopilot, self.plant)
    }
}
