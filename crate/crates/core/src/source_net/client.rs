use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::{
    read_frame, write_frame, FetchRequest, FetchResponse, FrameError, SourceNetError,
    WireErrorCode, WireResponse,
};
use crate::canonical::Canonical;

#[derive(Debug, Clone, Copy)]
pub struct ClientOptions {
    /// Applied to connect, read and write separately.
    pub deadline: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            deadline: Duration::from_secs(5),
        }
    }
}

pub(crate) fn connect(endpoint: &str, opts: ClientOptions) -> Result<TcpStream, SourceNetError> {
    let fail = |reason: String| SourceNetError::ConnectFailure {
        endpoint: endpoint.to_string(),
        reason,
    };
    let addrs = endpoint
        .to_socket_addrs()
        .map_err(|e| fail(e.to_string()))?;
    let mut last = "no address resolved".to_string();
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, opts.deadline) {
            Ok(stream) => {
                stream
                    .set_read_timeout(Some(opts.deadline))
                    .and_then(|_| stream.set_write_timeout(Some(opts.deadline)))
                    .map_err(|e| fail(e.to_string()))?;
                let _ = stream.set_nodelay(true);
                return Ok(stream);
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(fail(last))
}

pub(crate) fn frame_error(err: FrameError) -> SourceNetError {
    if err.is_timeout() {
        return SourceNetError::Timeout;
    }
    SourceNetError::MalformedFrame(err.to_string())
}

/// Sends one request frame and returns the raw response frame.
pub fn exchange(endpoint: &str, request: &[u8], opts: ClientOptions) -> Result<Vec<u8>, SourceNetError> {
    let mut stream = connect(endpoint, opts)?;
    write_frame(&mut stream, request).map_err(frame_error)?;
    read_frame(&mut stream).map_err(frame_error)
}

/// Decodes a response frame, surfacing wire errors as typed errors.
pub fn parse_response(bytes: &[u8]) -> Result<FetchResponse, SourceNetError> {
    let reply = WireResponse::from_canonical_bytes(bytes)
        .map_err(|e| SourceNetError::MalformedFrame(e.to_string()))?;
    match reply {
        WireResponse::Record {
            record,
            source_signature,
        } => Ok(FetchResponse {
            record,
            source_signature,
        }),
        WireResponse::Error { code } => Err(match code {
            WireErrorCode::AuthDenied => SourceNetError::AuthDenied,
            WireErrorCode::NotFound => SourceNetError::NotFound,
            WireErrorCode::Malformed => {
                SourceNetError::MalformedFrame("server rejected request".to_string())
            }
        }),
    }
}

pub fn fetch(endpoint: &str, request: &FetchRequest, opts: ClientOptions) -> Result<FetchResponse, SourceNetError> {
    let bytes = exchange(endpoint, &request.canonical_bytes(), opts)?;
    parse_response(&bytes)
}
