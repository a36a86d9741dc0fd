use std::io;
use std::mem::MaybeUninit;
use std::net::{IpAddr, SocketAddr};
use std::time::Duration;

use socket2::{Domain, Protocol, SockAddr, Socket, Type};

use crate::icmp::{parse_header, Family};

use super::transport::{Clock, Received, SystemClock, Transport, TransportError};

const RECV_BUFFER: usize = 2048;

/// Raw ICMP / ICMPv6 socket bound to one local address.
///
/// Received IPv4 datagrams have their IP header stripped so that both
/// families hand the prober a bare ICMP message.
pub struct RawIcmpTransport {
    local: IpAddr,
    socket: Socket,
    clock: SystemClock,
}

fn open_socket(local: IpAddr) -> Result<Socket, TransportError> {
    let (domain, protocol) = match local {
        IpAddr::V4(_) => (Domain::IPV4, Protocol::ICMPV4),
        IpAddr::V6(_) => (Domain::IPV6, Protocol::ICMPV6),
    };
    let socket = Socket::new(domain, Type::RAW, Some(protocol)).map_err(classify)?;
    socket
        .bind(&SockAddr::from(SocketAddr::new(local, 0)))
        .map_err(classify)?;
    Ok(socket)
}

fn classify(e: io::Error) -> TransportError {
    match e.kind() {
        io::ErrorKind::PermissionDenied => TransportError::PermissionDenied(e),
        _ => TransportError::Io(e),
    }
}

impl RawIcmpTransport {
    /// Open a raw socket for `local`. Needs CAP_NET_RAW or root.
    pub fn open(local: IpAddr, clock: SystemClock) -> Result<Self, TransportError> {
        Ok(Self {
            local,
            socket: open_socket(local)?,
            clock,
        })
    }
}

impl Transport for RawIcmpTransport {
    fn family(&self) -> Family {
        Family::of(self.local)
    }

    fn local_address(&self) -> IpAddr {
        self.local
    }

    fn send(&mut self, message: &[u8], ttl: u8, destination: IpAddr) -> Result<(), TransportError> {
        match self.local {
            IpAddr::V4(_) => self.socket.set_ttl_v4(u32::from(ttl))?,
            IpAddr::V6(_) => self.socket.set_unicast_hops_v6(u32::from(ttl))?,
        }
        let to = SockAddr::from(SocketAddr::new(destination, 0));
        self.socket.send_to(message, &to).map_err(classify)?;
        Ok(())
    }

    fn receive(&mut self, deadline_us: u64) -> Result<Option<Received>, TransportError> {
        let mut buf = [MaybeUninit::<u8>::uninit(); RECV_BUFFER];
        loop {
            let now = self.clock.now_us();
            if now >= deadline_us {
                return Ok(None);
            }
            self.socket
                .set_read_timeout(Some(Duration::from_micros(deadline_us - now)))?;
            let (n, from) = match self.socket.recv_from(&mut buf) {
                Ok(r) => r,
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) =>
                {
                    return Ok(None)
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(classify(e)),
            };
            let timestamp = self.clock.now_us();
            // SAFETY: recv_from initialised the first n bytes.
            let data: Vec<u8> = buf[..n]
                .iter()
                .map(|b| unsafe { b.assume_init() })
                .collect();
            let Some(source) = from.as_socket().map(|s| s.ip()) else {
                continue;
            };
            let bytes = match self.family() {
                Family::V4 => match parse_header(&data, Family::V4) {
                    Ok(h) => data[h.header_len..].to_vec(),
                    Err(_) => continue,
                },
                Family::V6 => data,
            };
            return Ok(Some(Received {
                bytes,
                source,
                timestamp,
            }));
        }
    }

    fn reopen(&mut self) -> Result<(), TransportError> {
        self.socket = open_socket(self.local)?;
        Ok(())
    }
}
