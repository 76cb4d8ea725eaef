//! Length-delimited packets over a byte stream.
//!
//! Each packet is preceded by its encoded length as a little-endian u32.
//! The hub accepts a fixed number of camera connections; every connection
//! gets a reader thread feeding one bounded queue, so a slow consumer
//! blocks the readers instead of growing memory.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread::JoinHandle;

use super::{decode, encode, FramePacket};

/// Upper bound on a framed packet; a maximal packet is about 3 MB.
const MAX_FRAME: u32 = 4 << 20;

pub fn write_packet<W: Write>(mut w: W, p: &FramePacket) -> io::Result<()> {
    let bytes = encode(p).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(&bytes)
}

/// Read one framed packet; `Ok(None)` on a clean end of stream.
pub fn read_packet<R: Read>(mut r: R) -> io::Result<Option<FramePacket>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_FRAME {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    decode(&buf)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Packets arriving from camera connections.
pub struct PacketServer {
    pub local_addr: SocketAddr,
    pub packets: Receiver<FramePacket>,
    acceptor: JoinHandle<io::Result<()>>,
}

impl PacketServer {
    /// Listen on `addr`, accept `connections` clients and forward their
    /// packets through a queue of `capacity` entries. The receiver
    /// disconnects once every client has closed its stream.
    pub fn bind<A: ToSocketAddrs>(addr: A, connections: usize, capacity: usize) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let local_addr = listener.local_addr()?;
        let (tx, rx) = sync_channel(capacity);
        let acceptor = std::thread::spawn(move || {
            for _ in 0..connections {
                let (stream, peer) = listener.accept()?;
                stream.set_nodelay(true)?;
                let tx = tx.clone();
                std::thread::spawn(move || {
                    let mut reader = io::BufReader::new(stream);
                    loop {
                        match read_packet(&mut reader) {
                            Ok(Some(p)) => {
                                if tx.send(p).is_err() {
                                    break;
                                }
                            }
                            Ok(None) => break,
                            Err(e) => {
                                tracing::warn!("dropping connection from {peer}: {e}");
                                break;
                            }
                        }
                    }
                });
            }
            Ok(())
        });
        Ok(Self {
            local_addr,
            packets: rx,
            acceptor,
        })
    }

    /// Wait for the accept loop; reports accept errors.
    pub fn join(self) -> io::Result<()> {
        self.acceptor
            .join()
            .map_err(|_| io::Error::other("acceptor thread panicked"))?
    }
}

/// Client side: a buffered connection to the hub.
pub struct PacketSender {
    stream: io::BufWriter<TcpStream>,
}

impl PacketSender {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            stream: io::BufWriter::new(stream),
        })
    }

    /// Send and flush one packet.
    pub fn send(&mut self, p: &FramePacket) -> io::Result<()> {
        write_packet(&mut self.stream, p)?;
        self.stream.flush()
    }
}
