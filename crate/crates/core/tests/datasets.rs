//! Parsers against synthesised files, and the real MNIST files when present.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use talu_core::datasets::{
    load_mnist, parse_cifar_batch, parse_idx_images, parse_idx_labels, subset, CIFAR_PLANE, CIFAR_RECORDS_PER_FILE,
    CIFAR_RECORD_LEN, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, NUM_CLASSES,
};
use talu_core::{Error, Split};

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut b = Vec::new();
    for v in [IDX_IMAGES_MAGIC, n, rows, cols] {
        b.extend(v.to_be_bytes());
    }
    b.extend(pixels);
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
    b.extend((labels.len() as u32).to_be_bytes());
    b.extend(labels);
    b
}

#[test]
fn idx_round_trip_recovers_every_pixel() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (n, r, c) = (7usize, 5usize, 3usize);
    let pixels: Vec<u8> = (0..n * r * c).map(|_| rng.gen()).collect();
    let images = parse_idx_images(&idx_images(n as u32, r as u32, c as u32, &pixels), Path::new("x")).unwrap();
    assert_eq!(images.shape(), &[n, r, c, 1]);
    let back: Vec<u8> = images.data().iter().map(|v| (v * 255.0).round() as u8).collect();
    assert_eq!(back, pixels);

    let labels: Vec<u8> = (0..n).map(|i| (i % NUM_CLASSES) as u8).collect();
    assert_eq!(parse_idx_labels(&idx_labels(&labels), Path::new("y")).unwrap(), labels);
}

#[test]
fn cifar_round_trip_reassembles_planes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bytes = vec![0u8; CIFAR_RECORDS_PER_FILE * CIFAR_RECORD_LEN];
    // nhwc[i][p][ch] is what the parser must produce for record i
    let probes = [0usize, 1, 4242, CIFAR_RECORDS_PER_FILE - 1];
    let mut expect = Vec::new();
    for (i, rec) in bytes.chunks_exact_mut(CIFAR_RECORD_LEN).enumerate() {
        rec[0] = (i * 7 % NUM_CLASSES) as u8;
        rng.fill(&mut rec[1..]);
        if probes.contains(&i) {
            let nhwc: Vec<u8> = (0..CIFAR_PLANE)
                .flat_map(|p| (0..3).map(move |ch| (p, ch)))
                .map(|(p, ch)| rec[1 + ch * CIFAR_PLANE + p])
                .collect();
            expect.push((i, rec[0], nhwc));
        }
    }
    let (pixels, labels) = parse_cifar_batch(&bytes, Path::new("data_batch_1.bin")).unwrap();
    assert_eq!(labels.len(), CIFAR_RECORDS_PER_FILE);
    let per = 3 * CIFAR_PLANE;
    for (i, label, nhwc) in expect {
        assert_eq!(labels[i], label);
        let got: Vec<u8> = pixels[i * per..(i + 1) * per]
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect();
        assert_eq!(got, nhwc, "record {i}");
    }
}

#[test]
fn mnist_loader_rejects_wrong_counts_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, bytes: Vec<u8>| std::fs::write(dir.path().join(name), bytes).unwrap();
    write("train-images-idx3-ubyte", idx_images(10, 28, 28, &[0; 7840]));
    write("train-labels-idx1-ubyte", idx_labels(&[1; 10]));
    write("t10k-images-idx3-ubyte", idx_images(10, 28, 28, &[0; 7840]));
    write("t10k-labels-idx1-ubyte", idx_labels(&[1; 10]));
    match load_mnist(dir.path()).unwrap_err() {
        Error::Format { path, .. } => assert!(path.ends_with("train-images-idx3-ubyte")),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn mnist_loader_reports_missing_files_as_io() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_mnist(dir.path()).unwrap_err(), Error::Io { .. }));
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR").map_or_else(
        || Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"),
        PathBuf::from,
    )
}

#[test]
fn real_mnist_when_available() {
    let dir = mnist_dir();
    if !dir.join("t10k-labels-idx1-ubyte").exists() {
        eprintln!("skipped: no MNIST files in {}", dir.display());
        return;
    }
    let (train, test) = load_mnist(&dir).unwrap();
    assert_eq!((train.len(), test.len()), (60_000, 10_000));
    assert_eq!(train.image_shape(), [28, 28, 1]);
    assert!(train.class_histogram().iter().all(|&c| c > 0));
    assert!(test.class_histogram().iter().all(|&c| c > 0));
    assert_eq!(train.split, Split::Train);

    let desk = subset(&train, 600, 0).unwrap();
    assert_eq!(desk.len(), 6000);
    assert_eq!(desk.class_histogram(), [600; NUM_CLASSES]);
}
