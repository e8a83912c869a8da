use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport is closed")]
    TransportClosed,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A full-duplex byte stream that can be divided into independently owned
/// directions.
pub trait Transport {
    fn split(self) -> Result<DuplexLink, TransportError>;
}

/// The two directions of one connection. `tx` goes to the outbound loop and
/// `rx` to the inbound loop; neither is shared.
pub struct DuplexLink {
    pub tx: Box<dyn Write + Send>,
    pub rx: Box<dyn Read + Send>,
    pub closer: LinkCloser,
}

impl DuplexLink {
    pub fn new(tx: impl Write + Send + 'static, rx: impl Read + Send + 'static, closer: LinkCloser) -> DuplexLink {
        DuplexLink {
            tx: Box::new(tx),
            rx: Box::new(rx),
            closer,
        }
    }
}

/// Shuts both directions of a link. Idempotent; cloning shares the latch.
#[derive(Clone)]
pub struct LinkCloser {
    closed: Arc<AtomicBool>,
    action: Arc<dyn Fn() + Send + Sync>,
}

impl LinkCloser {
    pub fn new(action: impl Fn() + Send + Sync + 'static) -> LinkCloser {
        LinkCloser {
            closed: Arc::new(AtomicBool::new(false)),
            action: Arc::new(action),
        }
    }

    pub fn close(&self) {
        if !self.closed.swap(true, Ordering::SeqCst) {
            (self.action)();
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }
}

impl std::fmt::Debug for LinkCloser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinkCloser").field("closed", &self.is_closed()).finish()
    }
}

/// How long a blocked socket write may stall before it is treated as a
/// transport fault.
pub const TCP_WRITE_TIMEOUT: Duration = Duration::from_secs(30);

impl Transport for TcpStream {
    fn split(self) -> Result<DuplexLink, TransportError> {
        if self.peer_addr().is_err() {
            return Err(TransportError::TransportClosed);
        }
        if let Ok(Some(_)) | Err(_) = self.take_error() {
            return Err(TransportError::TransportClosed);
        }
        self.set_nodelay(true)?;
        self.set_write_timeout(Some(TCP_WRITE_TIMEOUT))?;
        let rx = self.try_clone()?;
        let control = self.try_clone()?;
        let closer = LinkCloser::new(move || {
            let _ = control.shutdown(Shutdown::Both);
        });
        Ok(DuplexLink::new(self, rx, closer))
    }
}
