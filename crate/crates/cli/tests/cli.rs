use std::path::{Path, PathBuf};

use falcon_cli::bench::bench;
use falcon_cli::costmodel::Dims;
use falcon_cli::infer::infer;
use falcon_cli::runner::{RunConfig, Runner};
use falcon_cli::train::{train, TrainConfig};
use falcon_core::nn::{load_dataset, read_idx, save_dataset, Checkpoint, Dataset, NetworkSpec};
use falcon_core::{Error, RingParams, SessionConfig, ThreatModel};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn mnist() -> Dataset {
    load_dataset(&data_dir().join("mnist-10k-images-idx3-ubyte.gz")).unwrap()
}

fn runner(ell: u32, threat: ThreatModel) -> Runner {
    Runner::local(SessionConfig::new(RingParams::with_bits(ell, 13).unwrap(), threat))
}

#[test]
fn bench_examples() {
    let semi = runner(32, ThreatModel::SemiHonest);
    let relu = bench(&semi, "relu", Dims::N(1000)).unwrap();
    assert_eq!(relu.rounds, 10);
    assert_eq!(relu.predicted.unwrap().bytes, 16000);
    let mm = bench(&semi, "matmul", Dims::MatMul(4, 4, 4)).unwrap();
    assert_eq!(mm.rounds, 1);
    let pc = bench(&semi, "pc", Dims::N(1)).unwrap();
    let pcm = bench(&runner(32, ThreatModel::Malicious), "pc", Dims::N(1)).unwrap();
    assert_eq!(pcm.bytes, 2 * pc.bytes);
    assert!(bench(&semi, "nope", Dims::N(1)).is_err());
}

#[test]
fn ingest_mnist_store() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset::from_idx(
        &data_dir().join("mnist-10k-images-idx3-ubyte.gz"),
        &data_dir().join("mnist-10k-labels-idx1-ubyte.gz"),
    )
    .unwrap();
    assert_eq!((ds.len(), ds.rows, ds.cols), (10000, 28, 28));
    assert_eq!(ds.images.len(), 10000 * 28 * 28);
    let out = dir.path().join("mnist.store");
    save_dataset(&ds, &out).unwrap();
    assert_eq!(load_dataset(&out).unwrap(), ds);

    let prm = RingParams::with_bits(32, 13).unwrap();
    let white = Dataset {
        rows: 1,
        cols: 1,
        images: vec![255],
        labels: vec![0],
    };
    assert_eq!(white.batch_raw(&[0], prm.fp), vec![prm.constant(255.0 / 256.0)]);
}

#[test]
fn truncated_idx_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let (dims, body) = read_idx(&data_dir().join("mnist-10k-images-idx3-ubyte.gz"), 0x0000_0803).unwrap();
    let mut bytes = vec![0, 0, 8, 3];
    for d in dims {
        bytes.extend((d as u32).to_be_bytes());
    }
    bytes.extend(body);
    let labels = data_dir().join("mnist-10k-labels-idx1-ubyte.gz");
    let whole = dir.path().join("whole-images-idx3-ubyte");
    std::fs::write(&whole, &bytes).unwrap();
    assert_eq!(Dataset::from_idx(&whole, &labels).unwrap().len(), 10000);

    let short = dir.path().join("short-images-idx3-ubyte");
    std::fs::write(&short, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(Dataset::from_idx(&short, &labels), Err(Error::Format(_))));
    let bad_magic = dir.path().join("magic-images-idx3-ubyte");
    bytes[3] = 0x01;
    std::fs::write(&bad_magic, &bytes).unwrap();
    assert!(matches!(Dataset::from_idx(&bad_magic, &labels), Err(Error::Format(_))));
}

#[test]
fn corrupted_checkpoint_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = NetworkSpec::network_a();
    let ck = Checkpoint::load(&data_dir().join("pretrained/network-a.ckpt")).unwrap();
    let mut bytes = ck.to_bytes();
    let path = dir.path().join("bad.ckpt");
    bytes.truncate(bytes.len() - 10);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Format(_))));
    let mut flipped = ck.to_bytes();
    flipped[0] ^= 0xff;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Format(_))));
    assert!(ck.to_float(&NetworkSpec::network_b()).is_err());
    assert!(ck.to_float(&spec).is_ok());
}

#[test]
fn one_image_semi_and_malicious_agree() {
    let spec = NetworkSpec::network_a();
    let w = Checkpoint::load(&data_dir().join("pretrained/network-a.ckpt"))
        .unwrap()
        .to_float(&spec)
        .unwrap();
    let data = mnist();
    let semi = infer(&runner(32, ThreatModel::SemiHonest), &spec, &w, &data, &[9000], 1).unwrap();
    let mal = infer(&runner(32, ThreatModel::Malicious), &spec, &w, &data, &[9000], 1).unwrap();
    assert_eq!(semi.images[0].secure, mal.images[0].secure);
    assert_eq!(semi.images[0].secure, semi.images[0].float);
    let ratio = mal.online.bytes as f64 / semi.online.bytes as f64;
    assert!((ratio - 2.0).abs() < 0.05, "malicious/semi-honest bytes {ratio}");
}

fn tiny_train(seed: u64, iters: usize) -> (f64, f64, Vec<u8>) {
    let spec = NetworkSpec::network_a();
    let mut r = runner(64, ThreatModel::SemiHonest);
    r.session.seed = seed;
    let cfg = TrainConfig {
        iters,
        batch: 4,
        seed,
        eval_every: 0,
        test: 8000..8200,
        ..TrainConfig::default()
    };
    let rep = train(&r, &spec, &mnist(), &cfg).unwrap();
    let ck = Checkpoint::from_raw(&spec, &r.session.params, &rep.weights).unwrap();
    (rep.initial_accuracy, rep.final_accuracy, ck.to_bytes())
}

#[test]
fn training_is_deterministic_and_zero_iterations_is_chance() {
    let (init, fin, bytes) = tiny_train(3, 0);
    assert_eq!(init, fin);
    assert!((0.03..0.2).contains(&fin), "untrained accuracy {fin}");
    let a = tiny_train(5, 2).2;
    let b = tiny_train(5, 2).2;
    assert_eq!(a, b);
    assert_ne!(a, bytes);
}

#[test]
fn run_config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "threat = \"malicious\"\nring_bits = 64\nfp_bits = 16\nseed = 4\n").unwrap();
    let file = RunConfig::load(&path).unwrap();
    let merged = file.merge(RunConfig {
        seed: Some(9),
        ..RunConfig::default()
    });
    let r = merged.runner(32).unwrap();
    assert_eq!(r.session.threat, ThreatModel::Malicious);
    assert_eq!((r.session.params.ell, r.session.params.fp), (64, 16));
    assert_eq!(r.session.seed, 9);
    std::fs::write(&path, "colour = 3\n").unwrap();
    assert!(RunConfig::load(&path).is_err());
    let bad = RunConfig {
        threat: Some("sneaky".into()),
        ..RunConfig::default()
    };
    assert!(bad.runner(32).is_err());
}
