//! Wire-protocol conformance against the recorded vectors in `tests/vectors`,
//! plus live sessions over TCP, Unix sockets and a child process.
//!
//! Set `NSMI_RECORD_VECTORS=1` to rewrite the vector files.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use nsmi_core::cli::{stub_model, StubModel};
use nsmi_core::denoiser::protocol::{Request, Response};
use nsmi_core::denoiser::{
    gaussian_predict_eps, serve, ConditionImage, Denoiser, DenoiserError, ExternalDenoiser, GaussianPrior,
};
use nsmi_core::phantom::family;
use nsmi_core::schedule::NoiseSchedule;
use nsmi_core::Image;

fn vector_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/vectors")
}

fn recording() -> bool {
    std::env::var_os("NSMI_RECORD_VECTORS").is_some()
}

fn check_or_record(name: &str, bytes: &[u8]) {
    let path = vector_dir().join(name);
    if recording() {
        std::fs::write(&path, bytes).unwrap();
    }
    let recorded = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(recorded, bytes, "{name} differs from the recorded vector");
}

fn small_request() -> Request {
    Request {
        t: 17,
        height: 2,
        width: 3,
        x_t: vec![0.0, 1.0, -1.5, 0.25, 3.0e-8, -2.0],
        condition: None,
    }
}

fn conditioned_request() -> Request {
    Request {
        t: 2000,
        height: 3,
        width: 2,
        x_t: vec![0.5, -0.5, 1.0, -1.0, 2.0, -2.0],
        condition: Some(vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]),
    }
}

/// Sends raw request bytes to an echo server and returns the raw reply.
fn echo_round_trip(request: &[u8]) -> Vec<u8> {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = thread::spawn(move || {
        let (mut conn, _) = listener.accept().unwrap();
        let _ = serve(&mut conn, |r: &Request| Ok(r.x_t.clone()));
        // unread input would turn the close into a reset
        let _ = std::io::copy(&mut conn, &mut std::io::sink());
    });
    let mut client = TcpStream::connect(addr).unwrap();
    client.write_all(request).unwrap();
    let _ = client.shutdown(std::net::Shutdown::Write);
    let mut reply = Vec::new();
    client.read_to_end(&mut reply).unwrap();
    server.join().unwrap();
    reply
}

#[test]
fn request_encodings_match_vectors() {
    check_or_record("request_t17_2x3.bin", &small_request().encode());
    check_or_record("request_t2000_3x2_cond.bin", &conditioned_request().encode());
    let bytes = std::fs::read(vector_dir().join("request_t17_2x3.bin")).unwrap();
    // header: magic, version, type, t, channels, height, width
    assert_eq!(&bytes[..4], b"NSMI");
    assert_eq!(&bytes[4..6], &[1, 1]);
    assert_eq!(&bytes[6..10], &17u32.to_le_bytes());
    assert_eq!(bytes[10], 1);
    assert_eq!(bytes.len(), 19 + 6 * 4);
}

#[test]
fn echo_server_replies_match_vectors() {
    for (req, resp) in [
        ("request_t17_2x3.bin", "response_t17_2x3_echo.bin"),
        ("request_t2000_3x2_cond.bin", "response_t2000_3x2_echo.bin"),
    ] {
        let request = std::fs::read(vector_dir().join(req)).unwrap();
        check_or_record(resp, &echo_round_trip(&request));
    }
    let ok = std::fs::read(vector_dir().join("response_t17_2x3_echo.bin")).unwrap();
    let expected = Response::Ok(small_request().x_t).encode();
    assert_eq!(ok, expected);
}

#[test]
fn malformed_request_gets_error_status() {
    let mut bad = small_request().encode();
    bad[..4].copy_from_slice(b"XSMI");
    check_or_record("request_bad_magic.bin", &bad);
    let reply = echo_round_trip(&bad);
    check_or_record("response_bad_magic.bin", &reply);
    assert_eq!(&reply[..7], &[b'N', b'S', b'M', b'I', 1, 2, 1]);
    let message = String::from_utf8_lossy(&reply[11..]);
    assert!(message.contains("58 53 4d 49"), "{message}");
}

#[test]
fn error_response_vector() {
    check_or_record(
        "response_error_remote.bin",
        &Response::Error("model failed".into()).encode(),
    );
}

#[test]
fn manifest_lists_every_vector() {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(vector_dir().join("manifest.json")).unwrap()).unwrap();
    for case in manifest["cases"].as_array().unwrap() {
        for key in ["request", "response"] {
            if let Some(name) = case[key].as_str() {
                assert!(vector_dir().join(name).exists(), "{name}");
            }
        }
    }
}

fn spawn_tcp_stub<F>(model: F) -> (String, thread::JoinHandle<()>)
where
    F: FnMut(&Request) -> Result<Vec<f32>, String> + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || {
        let (mut conn, _) = listener.accept().unwrap();
        let _ = serve(&mut conn, model);
    });
    (addr, handle)
}

#[test]
fn external_denoiser_over_tcp_matches_gaussian() {
    let schedule = Arc::new(NoiseSchedule::linear(100, 1e-3, 0.05).unwrap());
    let (addr, handle) = spawn_tcp_stub(stub_model(StubModel::Gaussian, schedule.clone(), 20, 7));
    let mut remote = ExternalDenoiser::connect(&format!("tcp://{addr}"), Some(Duration::from_secs(30))).unwrap();
    let prior = GaussianPrior::fit(&family(16, 20, 7).unwrap(), 1e-3).unwrap();
    let x = Image::new(16, 16, (0..256).map(|i| ((i % 17) as f64 - 8.0) / 8.0).collect()).unwrap();
    for t in [1, 50, 100] {
        let got = remote.predict_eps(&x, t, None).unwrap();
        let want = gaussian_predict_eps(&prior, &schedule, &x, t).unwrap();
        for (a, b) in got.pixels().iter().zip(want.pixels()) {
            // f32 transport of both input and output
            assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "t={t}: {a} vs {b}");
        }
    }
    drop(remote);
    handle.join().unwrap();
}

#[test]
fn zero_stub_with_condition() {
    let (addr, handle) = spawn_tcp_stub(|r: &Request| {
        assert!(r.condition.is_some());
        Ok(vec![0.0; r.pixel_count()])
    });
    let mut remote = ExternalDenoiser::connect(&addr, None).unwrap();
    let x = Image::filled(4, 3, 0.7);
    let m = ConditionImage::new(Image::filled(4, 3, 0.1));
    let eps = remote.predict_eps(&x, 3, Some(&m)).unwrap();
    assert_eq!(eps, Image::zeros(4, 3));
    drop(remote);
    handle.join().unwrap();
}

#[test]
fn remote_errors_and_wrong_lengths_are_reported() {
    let mut calls = 0;
    let (addr, handle) = spawn_tcp_stub(move |r: &Request| {
        calls += 1;
        match calls {
            1 => Err("model exploded".into()),
            _ => Ok(vec![0.0; r.pixel_count() + 1]),
        }
    });
    let mut remote = ExternalDenoiser::connect(&addr, None).unwrap();
    let x = Image::zeros(2, 2);
    match remote.predict_eps(&x, 5, None) {
        Err(DenoiserError::Remote(m)) => assert_eq!(m, "model exploded"),
        other => panic!("unexpected {other:?}"),
    }
    match remote.predict_eps(&x, 5, None) {
        Err(DenoiserError::Remote(m)) => assert!(m.contains("5 values for 4 pixels"), "{m}"),
        other => panic!("unexpected {other:?}"),
    }
    drop(remote);
    handle.join().unwrap();
}

#[test]
fn garbage_server_is_a_protocol_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || {
        let (mut conn, _) = listener.accept().unwrap();
        let mut buf = [0u8; 64];
        let _ = conn.read(&mut buf);
        conn.write_all(b"HTTP/1.1 400 Bad Request\r\n\r\n").unwrap();
    });
    let mut remote = ExternalDenoiser::connect(&addr, Some(Duration::from_secs(5))).unwrap();
    let err = remote.predict_eps(&Image::zeros(2, 2), 1, None).unwrap_err();
    match err {
        DenoiserError::Protocol { bytes, .. } => assert_eq!(&bytes[..4], b"HTTP"),
        other => panic!("unexpected {other:?}"),
    }
    handle.join().unwrap();
}

#[test]
fn silent_server_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || {
        let (conn, _) = listener.accept().unwrap();
        thread::sleep(Duration::from_millis(600));
        drop(conn);
    });
    let mut remote = ExternalDenoiser::connect(&addr, Some(Duration::from_millis(100))).unwrap();
    let err = remote.predict_eps(&Image::zeros(2, 2), 1, None).unwrap_err();
    assert!(matches!(err, DenoiserError::Timeout), "{err:?}");
    handle.join().unwrap();
}

#[test]
fn connection_refused() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = ExternalDenoiser::connect(&format!("127.0.0.1:{port}"), None).unwrap_err();
    assert!(matches!(err, DenoiserError::Connection(_)), "{err:?}");
}

#[cfg(unix)]
#[test]
fn unix_socket_session() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.sock");
    let listener = std::os::unix::net::UnixListener::bind(&path).unwrap();
    let handle = thread::spawn(move || {
        let (mut conn, _) = listener.accept().unwrap();
        let _ = serve(&mut conn, |r: &Request| Ok(r.x_t.iter().map(|v| 2.0 * v).collect()));
    });
    let mut remote = ExternalDenoiser::connect(&format!("unix:{}", path.display()), None).unwrap();
    let x = Image::new(2, 1, vec![0.25, -1.0]).unwrap();
    assert_eq!(remote.predict_eps(&x, 9, None).unwrap().pixels(), &[0.5, -2.0]);
    drop(remote);
    handle.join().unwrap();
}

#[test]
fn child_process_over_stdio() {
    let args: Vec<String> = ["serve", "--model", "echo"].iter().map(|s| s.to_string()).collect();
    let mut remote = ExternalDenoiser::spawn(env!("CARGO_BIN_EXE_nsmi"), &args).unwrap();
    let x = Image::new(3, 1, vec![0.125, -0.5, 4.0]).unwrap();
    for t in [1, 2, 3] {
        assert_eq!(remote.predict_eps(&x, t, None).unwrap(), x);
    }
}
