use std::io::Write;
use std::net::TcpStream;
use std::time::Duration;

use super::*;
use crate::attestor::{AttestationBody, AttestationMode};
use crate::canonical::Canonical;
use crate::crypto::{verify_sig, DomainTag, KeyRole, SecretKey};
use crate::fixtures::{self, EHR_RECORD_TYPE, EHR_SOURCE_ID, EHR_SUBJECT, EHR_TOKEN};

fn source_key() -> SecretKey {
    SecretKey::from_seed(KeyRole::Source, [7; 32])
}

fn descriptor(endpoint: &str, signing: bool) -> SourceDescriptor {
    SourceDescriptor {
        source_id: EHR_SOURCE_ID.to_string(),
        listen_endpoint: endpoint.to_string(),
        source_identity: source_key().identity(),
        signing_enabled: signing,
    }
}

fn start(signing: bool) -> ServerHandle {
    serve(descriptor("127.0.0.1:0", signing), fixtures::ehr_store(), source_key()).unwrap()
}

fn request(subject: &str, token: &str) -> FetchRequest {
    FetchRequest {
        subject_id: subject.to_string(),
        credential: token.to_string(),
        record_type: EHR_RECORD_TYPE.to_string(),
    }
}

fn opts() -> ClientOptions {
    ClientOptions {
        deadline: Duration::from_secs(2),
    }
}

#[test]
fn fetch_returns_stored_record() {
    let server = start(false);
    let resp = fetch(&server.endpoint(), &request(EHR_SUBJECT, EHR_TOKEN), opts()).unwrap();
    assert_eq!(resp.record, fixtures::ehr_record());
    assert!(resp.source_signature.is_none());
}

#[test]
fn wrong_token_is_denied() {
    let server = start(false);
    let err = fetch(&server.endpoint(), &request(EHR_SUBJECT, "guess"), opts()).unwrap_err();
    assert!(matches!(err, SourceNetError::AuthDenied), "{err:?}");
    let err = fetch(&server.endpoint(), &request(EHR_SUBJECT, ""), opts()).unwrap_err();
    assert!(matches!(err, SourceNetError::AuthDenied), "{err:?}");
}

#[test]
fn token_is_scoped_to_its_subject() {
    let server = start(false);
    let err = fetch(&server.endpoint(), &request("carol", EHR_TOKEN), opts()).unwrap_err();
    assert!(matches!(err, SourceNetError::AuthDenied), "{err:?}");
}

#[test]
fn authorized_subject_without_record_is_not_found() {
    let server = start(false);
    let store = fixtures::ehr_store();
    let carol = store
        .credentials
        .iter()
        .find(|c| c.subject_id == "carol")
        .expect("fixture has a token for carol")
        .token
        .clone();
    let err = fetch(&server.endpoint(), &request("carol", &carol), opts()).unwrap_err();
    assert!(matches!(err, SourceNetError::NotFound), "{err:?}");

    let mut wrong_type = request(EHR_SUBJECT, EHR_TOKEN);
    wrong_type.record_type = "imaging".to_string();
    let err = fetch(&server.endpoint(), &wrong_type, opts()).unwrap_err();
    assert!(matches!(err, SourceNetError::NotFound), "{err:?}");
}

#[test]
fn signed_response_covers_attestation_body() {
    let server = start(true);
    let req = request(EHR_SUBJECT, EHR_TOKEN);
    let resp = fetch(&server.endpoint(), &req, opts()).unwrap();
    let sig = resp.source_signature.expect("signing enabled");
    let body = AttestationBody::for_fetch(
        AttestationMode::SourceSigned,
        source_key().identity(),
        &req,
        EHR_SOURCE_ID,
        &resp.record,
        sig.issued_at,
    );
    let id = source_key().identity();
    assert!(verify_sig(&id, DomainTag::SourceAttestation, &body.canonical_bytes(), &sig.signature));
    let mut other = resp.record.clone();
    other.fetched_at += 1;
    let body = AttestationBody::for_fetch(
        AttestationMode::SourceSigned,
        id.clone(),
        &req,
        EHR_SOURCE_ID,
        &other,
        sig.issued_at,
    );
    assert!(!verify_sig(&id, DomainTag::SourceAttestation, &body.canonical_bytes(), &sig.signature));
}

#[test]
fn garbage_request_frame_is_malformed() {
    let server = start(false);
    let reply = exchange(&server.endpoint(), b"{\"subject_id\":1}", opts()).unwrap();
    assert_eq!(
        WireResponse::from_canonical_bytes(&reply).unwrap(),
        WireResponse::Error {
            code: WireErrorCode::Malformed
        }
    );
    let err = parse_response(&reply).unwrap_err();
    assert!(matches!(err, SourceNetError::MalformedFrame(_)), "{err:?}");
}

#[test]
fn oversized_length_prefix_is_rejected() {
    let server = start(false);
    let mut stream = TcpStream::connect(server.local_addr()).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    stream.write_all(&(MAX_FRAME_LEN as u32 + 1).to_be_bytes()).unwrap();
    let reply = read_frame(&mut stream).unwrap();
    assert_eq!(
        WireResponse::from_canonical_bytes(&reply).unwrap(),
        WireResponse::Error {
            code: WireErrorCode::Malformed
        }
    );
}

#[test]
fn truncated_response_is_malformed_frame() {
    let server = start(false);
    let proxy = FaultProxy::start(&server.endpoint(), Fault::TruncateResponse).unwrap();
    let err = fetch(&proxy.endpoint(), &request(EHR_SUBJECT, EHR_TOKEN), opts()).unwrap_err();
    assert!(matches!(err, SourceNetError::MalformedFrame(_)), "{err:?}");
}

#[test]
fn dropped_connection_is_an_error() {
    let server = start(false);
    let proxy = FaultProxy::start(&server.endpoint(), Fault::DropConnection).unwrap();
    assert!(fetch(&proxy.endpoint(), &request(EHR_SUBJECT, EHR_TOKEN), opts()).is_err());
}

#[test]
fn pass_through_proxy_is_transparent() {
    let server = start(false);
    let proxy = FaultProxy::start(&server.endpoint(), Fault::PassThrough).unwrap();
    let direct = exchange(&server.endpoint(), &request(EHR_SUBJECT, EHR_TOKEN).canonical_bytes(), opts()).unwrap();
    let relayed = exchange(&proxy.endpoint(), &request(EHR_SUBJECT, EHR_TOKEN).canonical_bytes(), opts()).unwrap();
    assert_eq!(direct, relayed);
}

#[test]
fn silent_server_times_out() {
    let mut handle = spawn_listener("127.0.0.1:0", |stream| {
        std::thread::sleep(Duration::from_millis(800));
        drop(stream);
    })
    .unwrap();
    let short = ClientOptions {
        deadline: Duration::from_millis(200),
    };
    let err = fetch(&handle.endpoint(), &request(EHR_SUBJECT, EHR_TOKEN), short).unwrap_err();
    assert!(matches!(err, SourceNetError::Timeout), "{err:?}");
    handle.shutdown();
}

#[test]
fn shutdown_is_idempotent_and_frees_the_port() {
    let mut server = start(false);
    let endpoint = server.endpoint();
    assert!(server.is_running());
    server.shutdown();
    server.shutdown();
    assert!(!server.is_running());
    let err = fetch(&endpoint, &request(EHR_SUBJECT, EHR_TOKEN), opts()).unwrap_err();
    assert!(matches!(err, SourceNetError::ConnectFailure { .. }), "{err:?}");

    let again = serve(descriptor(&endpoint, false), fixtures::ehr_store(), source_key()).unwrap();
    assert_eq!(again.endpoint(), endpoint);
    fetch(&endpoint, &request(EHR_SUBJECT, EHR_TOKEN), opts()).unwrap();
}

#[test]
fn bind_conflict_is_reported() {
    let server = start(false);
    let err = serve(descriptor(&server.endpoint(), false), fixtures::ehr_store(), source_key()).unwrap_err();
    assert!(matches!(err, SourceNetError::BindFailure { .. }), "{err:?}");
}

#[test]
fn concurrent_clients_are_served() {
    let server = start(true);
    let endpoint = server.endpoint();
    let workers: Vec<_> = (0..8)
        .map(|_| {
            let endpoint = endpoint.clone();
            std::thread::spawn(move || fetch(&endpoint, &request(EHR_SUBJECT, EHR_TOKEN), opts()).unwrap())
        })
        .collect();
    for w in workers {
        assert_eq!(w.join().unwrap().record, fixtures::ehr_record());
    }
}

#[test]
fn credential_is_not_in_debug_output() {
    let dbg = format!("{:?}", request(EHR_SUBJECT, EHR_TOKEN));
    assert!(!dbg.contains(EHR_TOKEN));
}
