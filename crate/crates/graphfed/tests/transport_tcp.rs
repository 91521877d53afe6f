//! Cross-transport behavior over real loopback sockets.

use std::thread;
use std::time::Duration;

use graphfed::{
    generate_sbm, run_worker_with_retry, train_distributed, EpochReport, LocalPool, ModelConfig,
    SbmConfig, TcpMaster, TrainConfig, WorkerPool,
};

fn tiny_dataset(seed: u64) -> graphfed::Dataset {
    generate_sbm(&SbmConfig {
        n: 60,
        k: 3,
        p_in: 0.3,
        p_out: 0.03,
        feature_dim: 5,
        noise_sigma: 0.3,
        split_fractions: (0.6, 0.2, 0.2),
        seed,
    })
    .unwrap()
}

fn tiny_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        seed: 11,
        ..TrainConfig::new(ModelConfig {
            hidden_dim: 8,
            ..ModelConfig::kw_gcn()
        })
    }
}

fn spawn_workers(addr: std::net::SocketAddr, m: usize) -> Vec<thread::JoinHandle<graphfed::Result<()>>> {
    (0..m as u32)
        .map(|id| {
            thread::spawn(move || {
                run_worker_with_retry(&addr.to_string(), id, Duration::from_secs(5))
            })
        })
        .collect()
}

fn strip(r: &EpochReport) -> (usize, Option<f64>, Option<f64>, Option<f64>, u64) {
    (r.epoch, r.train_loss, r.val_f1, r.test_f1, r.bytes_exchanged)
}

#[test]
fn tcp_run_matches_in_process_run() {
    let d = tiny_dataset(2);
    let cfg = tiny_cfg(5);

    let mut inproc = LocalPool::threaded(2);
    let a = train_distributed(&d, 2, 0.1, &cfg, &mut inproc).unwrap();

    let master = TcpMaster::bind("127.0.0.1:0").unwrap();
    let handles = spawn_workers(master.local_addr(), 2);
    let mut tcp = master.accept_workers(2, Duration::from_secs(10)).unwrap();
    let b = train_distributed(&d, 2, 0.1, &cfg, &mut tcp).unwrap();

    // identical seeds, identical arithmetic: exactly equal
    assert_eq!(a.params.max_abs_diff(&b.params), 0.0);
    assert_eq!(
        a.reports.iter().map(strip).collect::<Vec<_>>(),
        b.reports.iter().map(strip).collect::<Vec<_>>()
    );

    // master shutdown lets every worker exit cleanly
    for h in handles {
        h.join().unwrap().unwrap();
    }
}

#[test]
fn duplicate_worker_id_is_rejected() {
    let master = TcpMaster::bind("127.0.0.1:0").unwrap();
    let addr = master.local_addr();

    let first = thread::spawn(move || {
        run_worker_with_retry(&addr.to_string(), 0, Duration::from_secs(5))
    });
    // give the first Hello(0) time to land, then offer a duplicate
    thread::sleep(Duration::from_millis(150));
    let dup = thread::spawn(move || {
        run_worker_with_retry(&addr.to_string(), 0, Duration::from_secs(5))
    });
    thread::sleep(Duration::from_millis(150));
    let second = thread::spawn(move || {
        run_worker_with_retry(&addr.to_string(), 1, Duration::from_secs(5))
    });

    let mut pool = master.accept_workers(2, Duration::from_secs(10)).unwrap();
    assert_eq!(pool.num_workers(), 2);

    let d = tiny_dataset(3);
    let cfg = tiny_cfg(2);
    train_distributed(&d, 2, 0.0, &cfg, &mut pool).unwrap();

    first.join().unwrap().unwrap();
    second.join().unwrap().unwrap();
    // the duplicate's connection was dropped before any assignment
    assert!(dup.join().unwrap().is_err());
}

#[test]
fn hello_timeout_aborts() {
    let master = TcpMaster::bind("127.0.0.1:0").unwrap();
    let err = master
        .accept_workers(1, Duration::from_millis(200))
        .err()
        .expect("no worker ever connects");
    assert!(err.to_string().contains("timed out"), "{err}");
}

#[test]
fn lost_worker_aborts_the_run() {
    let d = tiny_dataset(4);
    let cfg = tiny_cfg(50);

    let master = TcpMaster::bind("127.0.0.1:0").unwrap();
    let addr = master.local_addr();
    // worker 0 is honest; worker 1 disappears after its hello
    let _good = thread::spawn(move || {
        let _ = run_worker_with_retry(&addr.to_string(), 0, Duration::from_secs(5));
    });
    let quitter = thread::spawn(move || {
        use std::io::Write;
        let mut s = std::net::TcpStream::connect(addr).unwrap();
        let hello = graphfed::encode_frame(graphfed::FrameKind::Hello, &1u32.to_le_bytes()).unwrap();
        s.write_all(&hello).unwrap();
        // linger long enough to be accepted, then vanish
        thread::sleep(Duration::from_millis(300));
    });
    let mut pool = master.accept_workers(2, Duration::from_secs(10)).unwrap();
    quitter.join().unwrap();
    let err = train_distributed(&d, 2, 0.0, &cfg, &mut pool).unwrap_err();
    assert!(err.to_string().contains("worker"), "{err}");
}
