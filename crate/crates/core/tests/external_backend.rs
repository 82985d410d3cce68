use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;

use facebreed_core::generator::{ExternalEndpoint, Generator, GeneratorDescriptor, GeneratorKind, SyntheticGenerator};
use facebreed_core::latent::{sample_standard, RandomStream};
use facebreed_core::Error;

const DIM: usize = 16;

fn descriptor(endpoint: ExternalEndpoint, timeout_ms: u64, retries: u32) -> GeneratorDescriptor {
    GeneratorDescriptor {
        kind: GeneratorKind::ExternalModel {
            model: "fixture".into(),
            endpoint,
            timeout_ms,
            retries,
        },
        dim: DIM,
        width: 24,
        height: 24,
    }
}

fn shell(script: String) -> ExternalEndpoint {
    ExternalEndpoint::Command {
        program: "sh".into(),
        args: vec!["-c".into(), script],
    }
}

fn fixture_png(dir: &Path, size: u32) -> (std::path::PathBuf, Vec<u8>) {
    let g = SyntheticGenerator::new(1, DIM, size, size).unwrap();
    let z = sample_standard(&mut RandomStream::new(2), DIM).unwrap();
    let png = g.generate(&z).unwrap().to_png().unwrap();
    let path = dir.join(format!("face{size}.png"));
    std::fs::write(&path, &png).unwrap();
    (path, png)
}

fn latent() -> facebreed_core::latent::LatentVector {
    sample_standard(&mut RandomStream::new(3), DIM).unwrap()
}

#[test]
fn subprocess_backend_renders_and_receives_the_request() {
    let dir = tempfile::tempdir().unwrap();
    let (png_path, png) = fixture_png(dir.path(), 24);
    let request = dir.path().join("request.json");
    let script = format!("cat > '{}'; cat '{}'", request.display(), png_path.display());
    let g = Generator::from_descriptor(&descriptor(shell(script), 5000, 0)).unwrap();
    let z = latent();
    let img = g.generate(&z).unwrap();
    assert_eq!(img.to_png().unwrap(), png);
    let sent: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&request).unwrap()).unwrap();
    assert_eq!(sent["dim"], DIM);
    let sent_latent: Vec<f64> = serde_json::from_value(sent["latent"].clone()).unwrap();
    assert_eq!(sent_latent, z.as_slice());
}

#[test]
fn failures_are_retried_then_reported_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let count = dir.path().join("count");
    let script = format!("cat > /dev/null; echo x >> '{}'; exit 3", count.display());
    let g = Generator::from_descriptor(&descriptor(shell(script), 5000, 2)).unwrap();
    assert!(matches!(g.generate(&latent()), Err(Error::BackendUnavailable(_))));
    assert_eq!(std::fs::read_to_string(&count).unwrap().lines().count(), 3);
}

#[test]
fn slow_backends_time_out() {
    let g = Generator::from_descriptor(&descriptor(shell("sleep 5".into()), 200, 0)).unwrap();
    let start = std::time::Instant::now();
    match g.generate(&latent()) {
        Err(Error::BackendUnavailable(msg)) => assert!(msg.contains("timed out"), "{msg}"),
        other => panic!("expected a timeout, got {other:?}"),
    }
    assert!(start.elapsed() < std::time::Duration::from_secs(4));
}

#[test]
fn wrong_size_images_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (png_path, _) = fixture_png(dir.path(), 20);
    let script = format!("cat > /dev/null; cat '{}'", png_path.display());
    let g = Generator::from_descriptor(&descriptor(shell(script), 5000, 0)).unwrap();
    match g.generate(&latent()) {
        Err(Error::BackendUnavailable(msg)) => assert!(msg.contains("20x20"), "{msg}"),
        other => panic!("expected a size error, got {other:?}"),
    }
}

#[test]
fn missing_program_is_unavailable() {
    let endpoint = ExternalEndpoint::Command {
        program: "/nonexistent/backend".into(),
        args: vec![],
    };
    let g = Generator::from_descriptor(&descriptor(endpoint, 1000, 0)).unwrap();
    assert!(matches!(g.generate(&latent()), Err(Error::BackendUnavailable(_))));
}

/// Answers one POST with `png`, returning the request body it received.
fn serve_once(png: Vec<u8>) -> (String, std::thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/render", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 200 OK\r\ncontent-type: image/png\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
            png.len()
        )
        .unwrap();
        stream.write_all(&png).unwrap();
        String::from_utf8(body).unwrap()
    });
    (url, handle)
}

#[test]
fn http_backend_renders() {
    let dir = tempfile::tempdir().unwrap();
    let (_, png) = fixture_png(dir.path(), 24);
    let (url, handle) = serve_once(png.clone());
    let g = Generator::from_descriptor(&descriptor(ExternalEndpoint::Http { url }, 5000, 0)).unwrap();
    let z = latent();
    assert_eq!(g.generate(&z).unwrap().to_png().unwrap(), png);
    let body: serde_json::Value = serde_json::from_str(&handle.join().unwrap()).unwrap();
    assert_eq!(body["dim"], DIM);
}

#[test]
fn unreachable_http_backend_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}/render");
    let g = Generator::from_descriptor(&descriptor(ExternalEndpoint::Http { url }, 1000, 1)).unwrap();
    assert!(matches!(g.generate(&latent()), Err(Error::BackendUnavailable(_))));
}

#[test]
fn oracle_functions_need_the_synthetic_backend() {
    let g = Generator::from_descriptor(&descriptor(shell("true".into()), 1000, 0)).unwrap();
    assert!(matches!(g.ground_truth_axes(), Err(Error::Unsupported(_))));
    assert!(matches!(g.synthetic_params(&latent()), Err(Error::Unsupported(_))));
}
