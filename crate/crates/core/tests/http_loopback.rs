//! Drives the HTTP backend against a loopback server wrapping the simulator
//! and checks the runs mirror the direct simulator exactly.

mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use ccq_core::crowd::{
    AccuracyDistribution, CcqHandle, CrowdBackend, CrowdError, HttpBackend, HttpConfig, SimConfig,
    SimCrowd,
};
use ccq_core::frameworks::{run_with_strategy, RunOptions, SelectionStrategy};
use ccq_core::model::CorrespondenceId;
use ccq_core::{AccuracyModel, WorkerAccuracy};

fn sim_config(seed: u64) -> SimConfig {
    let mut config = SimConfig::new(
        seed,
        AccuracyDistribution::uniform_half_one(),
        vec![0, 1, 2, 3],
    );
    config.lambda = 1.0;
    config
}

struct Request {
    method: String,
    path: String,
    body: Vec<u8>,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    if reader.read_line(&mut line).ok()? == 0 {
        return None;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();

    let mut content_length = 0usize;
    let mut chunked = false;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim();
        if header.is_empty() {
            break;
        }
        let lower = header.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            content_length = v.trim().parse().ok()?;
        }
        if lower.starts_with("transfer-encoding:") && lower.contains("chunked") {
            chunked = true;
        }
    }

    let mut body = Vec::new();
    if chunked {
        loop {
            let mut size_line = String::new();
            reader.read_line(&mut size_line).ok()?;
            let size = usize::from_str_radix(size_line.trim(), 16).ok()?;
            let mut chunk = vec![0u8; size + 2]; // chunk + CRLF
            reader.read_exact(&mut chunk).ok()?;
            if size == 0 {
                break;
            }
            body.extend_from_slice(&chunk[..size]);
        }
    } else if content_length > 0 {
        body = vec![0u8; content_length];
        reader.read_exact(&mut body).ok()?;
    }
    Some(Request { method, path, body })
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.flush();
}

/// Wraps a simulator behind the wire protocol. Time advances only on
/// `POST /step`, so client runs replay deterministically.
fn spawn_server(config: SimConfig) -> (String, Arc<AtomicBool>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);

    std::thread::spawn(move || {
        let mut sim = SimCrowd::new(config).expect("valid sim config");
        let mut events: Vec<ccq_core::crowd::CrowdEvent> = Vec::new();
        'accept: for stream in listener.incoming() {
            if stop_flag.load(Ordering::Relaxed) {
                break;
            }
            let Ok(mut stream) = stream else { continue };
            // the client may keep the connection alive; serve it until EOF
            while let Some(request) = read_request(&mut stream) {
                if stop_flag.load(Ordering::Relaxed) {
                    break 'accept;
                }
                match (request.method.as_str(), request.path.as_str()) {
                    ("POST", "/ccqs") => {
                        let parsed: serde_json::Value =
                            serde_json::from_slice(&request.body).unwrap_or_default();
                        let ccq = parsed["ccq"].as_u64().unwrap_or(0) as u32;
                        let acc = parsed["predicted_acc"].as_f64().unwrap_or(1.0);
                        match sim.publish(
                            CorrespondenceId(ccq),
                            WorkerAccuracy::new_relaxed(acc).expect("valid accuracy on wire"),
                        ) {
                            Ok(handle) => respond(
                                &mut stream,
                                "200 OK",
                                &format!("{{\"handle\":{}}}", handle.0),
                            ),
                            Err(_) => respond(&mut stream, "500 Internal Server Error", "{}"),
                        }
                    }
                    ("POST", "/step") => {
                        events.extend(sim.step());
                        respond(&mut stream, "200 OK", "{}");
                    }
                    ("POST", "/shutdown") => {
                        respond(&mut stream, "200 OK", "{}");
                        break 'accept;
                    }
                    ("GET", path) if path.starts_with("/events") => {
                        let since: u64 = path
                            .split_once("since=")
                            .and_then(|(_, v)| v.parse().ok())
                            .unwrap_or(0);
                        let visible: Vec<&ccq_core::crowd::CrowdEvent> =
                            events.iter().filter(|e| e.tick > since).collect();
                        respond(
                            &mut stream,
                            "200 OK",
                            &serde_json::to_string(&visible).unwrap(),
                        );
                    }
                    ("DELETE", path) if path.starts_with("/ccqs/") => {
                        let handle: u64 = path["/ccqs/".len()..].parse().unwrap_or(u64::MAX);
                        match sim.withdraw(CcqHandle(handle)) {
                            Ok(withdrawn) => {
                                // drop the confirmation event; the response body
                                // already carries the outcome
                                events.extend(sim.poll().unwrap_or_default().into_iter().filter(
                                    |e| {
                                        !matches!(
                                            e.kind,
                                            ccq_core::crowd::CrowdEventKind::WithdrawConfirmed
                                        )
                                    },
                                ));
                                respond(
                                    &mut stream,
                                    "200 OK",
                                    &format!("{{\"withdrawn\":{withdrawn}}}"),
                                );
                            }
                            Err(CrowdError::AlreadyWithdrawn(_)) => {
                                respond(&mut stream, "200 OK", "{\"withdrawn\":false}")
                            }
                            Err(_) => respond(&mut stream, "404 Not Found", "{}"),
                        }
                    }
                    _ => respond(&mut stream, "404 Not Found", "{}"),
                }
            }
        }
    });

    (addr, stop)
}

fn shutdown(addr: &str, stop: &Arc<AtomicBool>) {
    stop.store(true, Ordering::Relaxed);
    let _ = ureq_shutdown(addr);
}

fn ureq_shutdown(addr: &str) -> Result<(), std::io::Error> {
    // plain TCP poke so the accept loop observes the stop flag
    let target = addr.trim_start_matches("http://");
    let mut stream = TcpStream::connect(target)?;
    let _ = stream.write_all(b"POST /shutdown HTTP/1.1\r\nContent-Length: 0\r\n\r\n");
    Ok(())
}

fn http_backend(addr: &str) -> HttpBackend {
    let mut config = HttpConfig::new(addr);
    config.advance_via_step = true;
    config.retries = 1;
    config.backoff_ms = 1;
    HttpBackend::new(
        config,
        vec!["a".into(), "b".into(), "c".into(), "d".into(), "e".into()],
    )
}

#[test]
fn publish_poll_answer_round_trip() {
    let mut config = sim_config(3);
    config.accept_prob = Some(1.0);
    config.lambda = 0.0;
    let (addr, stop) = spawn_server(config);
    let mut backend = http_backend(&addr);

    let handle = backend
        .publish(CorrespondenceId(0), WorkerAccuracy::new(0.8).unwrap())
        .unwrap();
    assert!(backend.poll().unwrap().is_empty());

    backend.advance().unwrap(); // POST /step
    let events = backend.poll().unwrap();
    assert_eq!(events.len(), 2);
    assert_eq!(events[0].handle, handle);
    assert!(matches!(
        events[1].kind,
        ccq_core::crowd::CrowdEventKind::Answered { .. }
    ));
    // delivered exactly once
    assert!(backend.poll().unwrap().is_empty());

    shutdown(&addr, &stop);
}

#[test]
fn unknown_handle_maps_to_404() {
    let (addr, stop) = spawn_server(sim_config(4));
    let mut backend = http_backend(&addr);
    let err = backend.withdraw(CcqHandle(999)).unwrap_err();
    assert!(matches!(err, CrowdError::UnknownHandle(h) if h.0 == 999));
    shutdown(&addr, &stop);
}

#[test]
fn withdraw_round_trip_is_idempotent_on_the_wire() {
    let mut config = sim_config(5);
    config.accept_prob = Some(0.0); // stays waiting
    let (addr, stop) = spawn_server(config);
    let mut backend = http_backend(&addr);
    let handle = backend
        .publish(CorrespondenceId(1), WorkerAccuracy::new(0.8).unwrap())
        .unwrap();
    assert!(backend.withdraw(handle).unwrap());
    assert!(!backend.withdraw(handle).unwrap());
    shutdown(&addr, &stop);
}

#[test]
fn http_run_mirrors_direct_simulation() {
    let rs = common::table1();
    let model = AccuracyModel::constant(0.8).unwrap();
    let options = RunOptions::default();

    let mut direct = SimCrowd::new(sim_config(11)).unwrap();
    let direct_trace = run_with_strategy(
        &rs,
        4,
        2,
        &mut direct,
        &model,
        SelectionStrategy::Greedy,
        &options,
    );

    let (addr, stop) = spawn_server(sim_config(11));
    let mut remote = http_backend(&addr);
    let remote_trace = run_with_strategy(
        &rs,
        4,
        2,
        &mut remote,
        &model,
        SelectionStrategy::Greedy,
        &options,
    );
    shutdown(&addr, &stop);

    assert_eq!(direct_trace.outcome, remote_trace.outcome);
    assert_eq!(direct_trace.selections, remote_trace.selections);
    assert_eq!(direct_trace.answers, remote_trace.answers);
    assert_eq!(direct_trace.final_beliefs, remote_trace.final_beliefs);
    assert_eq!(direct_trace.to_json(), remote_trace.to_json());
}
