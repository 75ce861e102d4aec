//! Frame-aware relay that can corrupt traffic in flight. Used by tests and
//! the attack harness to sit between two framed endpoints.

use std::io::Write;
use std::net::TcpStream;
use std::sync::Arc;
use std::time::Duration;

use super::client::{connect, ClientOptions};
use super::{read_frame, spawn_listener, write_frame, ServerHandle, SourceNetError};

type Rewrite = Arc<dyn Fn(&[u8]) -> Vec<u8> + Send + Sync>;

#[derive(Clone)]
pub enum Fault {
    PassThrough,
    /// Announce the full response length, send half the body, then close.
    TruncateResponse,
    /// Replace each response payload (the frame is re-lengthed).
    RewriteResponse(Rewrite),
    /// Close the client connection without answering.
    DropConnection,
}

impl Fault {
    pub fn rewrite(f: impl Fn(&[u8]) -> Vec<u8> + Send + Sync + 'static) -> Self {
        Fault::RewriteResponse(Arc::new(f))
    }
}

pub struct FaultProxy {
    handle: ServerHandle,
}

impl FaultProxy {
    /// Listens on a fresh loopback port and relays to `upstream`.
    pub fn start(upstream: &str, fault: Fault) -> Result<Self, SourceNetError> {
        let upstream = upstream.to_string();
        let handle = spawn_listener("127.0.0.1:0", move |client| {
            relay(client, &upstream, &fault);
        })
        .map_err(|e| SourceNetError::BindFailure {
            endpoint: "127.0.0.1:0".to_string(),
            reason: e.to_string(),
        })?;
        Ok(FaultProxy { handle })
    }

    pub fn endpoint(&self) -> String {
        self.handle.endpoint()
    }

    pub fn shutdown(&mut self) {
        self.handle.shutdown();
    }
}

fn relay(mut client: TcpStream, upstream: &str, fault: &Fault) {
    let opts = ClientOptions {
        deadline: Duration::from_secs(10),
    };
    let Ok(mut server) = connect(upstream, opts) else {
        return;
    };
    while let Ok(request) = read_frame(&mut client) {
        if write_frame(&mut server, &request).is_err() {
            return;
        }
        let Ok(response) = read_frame(&mut server) else {
            return;
        };
        match fault {
            Fault::PassThrough => {
                if write_frame(&mut client, &response).is_err() {
                    return;
                }
            }
            Fault::RewriteResponse(f) => {
                if write_frame(&mut client, &f(&response)).is_err() {
                    return;
                }
            }
            Fault::TruncateResponse => {
                let mut partial = (response.len() as u32).to_be_bytes().to_vec();
                partial.extend_from_slice(&response[..response.len() / 2]);
                let _ = client.write_all(&partial);
                let _ = client.flush();
                return;
            }
            Fault::DropConnection => return,
        }
    }
}
