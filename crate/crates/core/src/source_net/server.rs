use std::net::TcpStream;
use std::sync::Arc;

use super::{
    read_frame, spawn_listener, write_frame, FetchRequest, FrameError, RecordStore, ServerHandle,
    SourceDescriptor, SourceNetError, SourceSignature, WireErrorCode, WireResponse,
};
use crate::attestor::{AttestationBody, AttestationMode};
use crate::canonical::Canonical;
use crate::crypto::SecretKey;
use crate::record::DataRecord;

/// Request handling state shared by connection threads.
pub struct SourceServer {
    descriptor: SourceDescriptor,
    store: RecordStore,
    key: SecretKey,
}

impl SourceServer {
    pub fn new(descriptor: SourceDescriptor, store: RecordStore, key: SecretKey) -> Self {
        SourceServer {
            descriptor,
            store,
            key,
        }
    }

    pub fn descriptor(&self) -> &SourceDescriptor {
        &self.descriptor
    }

    /// Maps one request frame to one response frame.
    pub fn respond(&self, request_bytes: &[u8]) -> WireResponse {
        let Ok(request) = FetchRequest::from_canonical_bytes(request_bytes) else {
            return WireResponse::Error {
                code: WireErrorCode::Malformed,
            };
        };
        if !self.store.authorize(&request.credential, &request.subject_id) {
            return WireResponse::Error {
                code: WireErrorCode::AuthDenied,
            };
        }
        let Some(stored) = self.store.lookup(&request.subject_id, &request.record_type) else {
            return WireResponse::Error {
                code: WireErrorCode::NotFound,
            };
        };
        let record = DataRecord {
            source_id: self.descriptor.source_id.clone(),
            subject_id: stored.subject_id.clone(),
            content: stored.content.clone(),
            content_type: stored.record_type.clone(),
            fetched_at: stored.as_of,
        };
        let source_signature = self
            .descriptor
            .signing_enabled
            .then(|| self.sign(&request, &record));
        WireResponse::Record {
            record,
            source_signature,
        }
    }

    fn sign(&self, request: &FetchRequest, record: &DataRecord) -> SourceSignature {
        let issued_at = crate::unix_now();
        let body = AttestationBody::for_fetch(
            AttestationMode::SourceSigned,
            self.key.identity(),
            request,
            &self.descriptor.source_id,
            record,
            issued_at,
        );
        SourceSignature {
            issued_at,
            signature: body.sign(&self.key).signature,
        }
    }

    fn handle(&self, mut stream: TcpStream) {
        loop {
            let request = match read_frame(&mut stream) {
                Ok(bytes) => bytes,
                Err(FrameError::Closed) => return,
                Err(_) => {
                    let reply = WireResponse::Error {
                        code: WireErrorCode::Malformed,
                    };
                    let _ = write_frame(&mut stream, &reply.canonical_bytes());
                    return;
                }
            };
            let reply = self.respond(&request);
            if write_frame(&mut stream, &reply.canonical_bytes()).is_err() {
                return;
            }
        }
    }
}

/// Binds `descriptor.listen_endpoint` and serves until the handle is shut
/// down. Port 0 picks a free port; see [`ServerHandle::local_addr`].
pub fn serve(
    descriptor: SourceDescriptor,
    store: RecordStore,
    key: SecretKey,
) -> Result<ServerHandle, SourceNetError> {
    let endpoint = descriptor.listen_endpoint.clone();
    let server = Arc::new(SourceServer::new(descriptor, store, key));
    spawn_listener(endpoint.as_str(), move |stream| server.handle(stream)).map_err(|e| {
        SourceNetError::BindFailure {
            endpoint,
            reason: e.to_string(),
        }
    })
}
