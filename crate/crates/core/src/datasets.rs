//! MNIST (IDX) and CIFAR-10 (binary batch) loaders.
//!
//! Both readers are strict: headers and byte lengths are validated before any
//! image tensor is allocated, and pixels are scaled to `[0, 1]` by `1/255`.
//! Nothing is downloaded; see the README for where to put the files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 10;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub const CIFAR_RECORDS_PER_FILE: usize = 10_000;
pub const CIFAR_PLANE: usize = 32 * 32;
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * CIFAR_PLANE;
const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const CIFAR_TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DatasetName {
    #[default]
    Mnist,
    Cifar10,
}

impl DatasetName {
    pub fn name(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Cifar10 => "cifar10",
        }
    }

    /// `[H, W, C]` of one image.
    pub fn image_shape(self) -> [usize; 3] {
        match self {
            DatasetName::Mnist => [28, 28, 1],
            DatasetName::Cifar10 => [32, 32, 3],
        }
    }

    /// Sizes of the full (train, test) splits.
    pub fn split_sizes(self) -> (usize, usize) {
        match self {
            DatasetName::Mnist => (60_000, 10_000),
            DatasetName::Cifar10 => (50_000, 10_000),
        }
    }

    pub fn load(self, dir: &Path) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetName::Mnist => load_mnist(dir),
            DatasetName::Cifar10 => load_cifar10(dir),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "cifar10" | "cifar-10" | "cifar" => Ok(DatasetName::Cifar10),
            other => Err(Error::Contract(format!(
                "unknown dataset {other:?}; expected mnist or cifar10"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Images `[N, H, W, C]` in `[0, 1]` with labels in `0..10`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: DatasetName,
    pub split: Split,
    pub images: Tensor,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(name: DatasetName, split: Split, images: Tensor, labels: Vec<u8>) -> Result<Self> {
        if images.rank() != 4 || images.shape()[0] != labels.len() {
            return Err(Error::dim("dataset", images.shape(), &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Data(format!("label {bad} out of range 0..{NUM_CLASSES}")));
        }
        Ok(Dataset {
            name,
            split,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    /// Images and labels at `indices`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let images = self.images.gather_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i] as usize).collect();
        Ok((images, labels))
    }

    pub fn class_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_len(path: &Path, bytes: &[u8], expected: u64) -> Result<()> {
    if bytes.len() as u64 != expected {
        return Err(Error::Length {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}

fn scale_pixels(bytes: &[u8]) -> Vec<f64> {
    bytes.iter().map(|&b| f64::from(b) / 255.0).collect()
}

/// Parses an IDX3 image file into `[N, rows, cols, 1]`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    if bytes.len() < 16 {
        return Err(Error::Length {
            path: path.to_path_buf(),
            expected: 16,
            actual: bytes.len() as u64,
        });
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let (n, rows, cols) = (
        be_u32(bytes, 4) as usize,
        be_u32(bytes, 8) as usize,
        be_u32(bytes, 12) as usize,
    );
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("zero dimension in header ({n}, {rows}, {cols})"),
        });
    }
    check_len(path, bytes, 16 + (n * rows * cols) as u64)?;
    Tensor::new([n, rows, cols, 1], scale_pixels(&bytes[16..]))
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(Error::Length {
            path: path.to_path_buf(),
            expected: 8,
            actual: bytes.len() as u64,
        });
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let n = be_u32(bytes, 4) as usize;
    check_len(path, bytes, 8 + n as u64)?;
    let labels = bytes[8..].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(Error::Data(format!(
            "{}: label {bad} out of range 0..{NUM_CLASSES}",
            path.display()
        )));
    }
    Ok(labels)
}

fn load_idx_split(dir: &Path, prefix: &str, split: Split, expected_n: usize) -> Result<Dataset> {
    let img_path = dir.join(format!("{prefix}-images-idx3-ubyte"));
    let lbl_path = dir.join(format!("{prefix}-labels-idx1-ubyte"));
    let images = parse_idx_images(&read(&img_path)?, &img_path)?;
    let labels = parse_idx_labels(&read(&lbl_path)?, &lbl_path)?;
    let shape = images.shape();
    if shape[1..] != DatasetName::Mnist.image_shape() || shape[0] != expected_n {
        return Err(Error::Format {
            path: img_path,
            reason: format!("header dims {shape:?}, expected [{expected_n}, 28, 28, 1]"),
        });
    }
    if labels.len() != expected_n {
        return Err(Error::Format {
            path: lbl_path,
            reason: format!("{} labels, expected {expected_n}", labels.len()),
        });
    }
    Dataset::new(DatasetName::Mnist, split, images, labels)
}

/// Reads the four uncompressed MNIST IDX files from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let (n_train, n_test) = DatasetName::Mnist.split_sizes();
    Ok((
        load_idx_split(dir, "train", Split::Train, n_train)?,
        load_idx_split(dir, "t10k", Split::Test, n_test)?,
    ))
}

/// Parses one CIFAR-10 batch file: 10000 records of a label byte followed by
/// the R, G and B planes (1024 bytes each, row-major). Returns NHWC pixels.
pub fn parse_cifar_batch(bytes: &[u8], path: &Path) -> Result<(Vec<f64>, Vec<u8>)> {
    check_len(path, bytes, (CIFAR_RECORDS_PER_FILE * CIFAR_RECORD_LEN) as u64)?;
    let mut pixels = Vec::with_capacity(CIFAR_RECORDS_PER_FILE * 3 * CIFAR_PLANE);
    let mut labels = Vec::with_capacity(CIFAR_RECORDS_PER_FILE);
    for record in bytes.chunks_exact(CIFAR_RECORD_LEN) {
        let label = record[0];
        if label as usize >= NUM_CLASSES {
            return Err(Error::Data(format!(
                "{}: label {label} out of range 0..{NUM_CLASSES}",
                path.display()
            )));
        }
        labels.push(label);
        let planes = &record[1..];
        for p in 0..CIFAR_PLANE {
            for c in 0..3 {
                pixels.push(f64::from(planes[c * CIFAR_PLANE + p]) / 255.0);
            }
        }
    }
    Ok((pixels, labels))
}

fn cifar_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("cifar-10-batches-bin");
    if !dir.join(CIFAR_TEST_FILE).exists() && nested.join(CIFAR_TEST_FILE).exists() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn load_cifar_files(dir: &Path, files: &[&str], split: Split) -> Result<Dataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for f in files {
        let path = dir.join(f);
        let (p, l) = parse_cifar_batch(&read(&path)?, &path)?;
        pixels.extend(p);
        labels.extend(l);
    }
    let images = Tensor::new([labels.len(), 32, 32, 3], pixels)?;
    Dataset::new(DatasetName::Cifar10, split, images, labels)
}

/// Reads the five training batches and the test batch of the binary CIFAR-10
/// distribution from `dir` (or its `cifar-10-batches-bin` subdirectory).
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let dir = cifar_dir(dir);
    Ok((
        load_cifar_files(&dir, &CIFAR_TRAIN_FILES, Split::Train)?,
        load_cifar_files(&dir, &[CIFAR_TEST_FILE], Split::Test)?,
    ))
}

/// Class-balanced sample of `n_per_class` images per class, shuffled.
pub fn subset(d: &Dataset, n_per_class: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::Data("subset needs at least one image per class".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, &l) in d.labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    if let Some((class, have)) = by_class
        .iter()
        .enumerate()
        .map(|(c, v)| (c, v.len()))
        .find(|&(_, n)| n < n_per_class)
    {
        return Err(Error::Data(format!(
            "subset of {n_per_class}/class requested but class {class} has {have}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n_per_class * NUM_CLASSES);
    for mut members in by_class {
        members.shuffle(&mut rng);
        picked.extend_from_slice(&members[..n_per_class]);
    }
    picked.shuffle(&mut rng);
    let (images, labels) = d.batch(&picked)?;
    Dataset::new(
        d.name,
        d.split,
        images,
        labels.into_iter().map(|l| l as u8).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = IDX_IMAGES_MAGIC.to_be_bytes().to_vec();
        for d in [n, rows, cols] {
            b.extend(d.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        b.extend((labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    fn path() -> PathBuf {
        PathBuf::from("train-images-idx3-ubyte")
    }

    #[test]
    fn idx_header_and_scaling() {
        let bytes = idx_images(2, 2, 2, &[0, 255, 51, 102, 0, 0, 0, 255]);
        assert_eq!(&bytes[..4], &[0x00, 0x00, 0x08, 0x03]);
        let t = parse_idx_images(&bytes, &path()).unwrap();
        assert_eq!(t.shape(), &[2, 2, 2, 1]);
        assert_eq!(&t.data()[..4], &[0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn idx_wrong_magic_names_file() {
        let mut bytes = idx_images(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        let err = parse_idx_images(&bytes, &path()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("train-images-idx3-ubyte"));
    }

    #[test]
    fn idx_truncated_is_length_error() {
        let bytes = idx_images(2, 2, 2, &[0; 7]);
        assert!(matches!(
            parse_idx_images(&bytes, &path()),
            Err(Error::Length { expected: 24, actual: 23, .. })
        ));
        assert!(matches!(
            parse_idx_images(&bytes[..10], &path()),
            Err(Error::Length { .. })
        ));
    }

    #[test]
    fn idx_label_out_of_range() {
        let p = PathBuf::from("labels");
        assert_eq!(parse_idx_labels(&idx_labels(&[0, 9, 3]), &p).unwrap(), vec![0, 9, 3]);
        assert!(matches!(parse_idx_labels(&idx_labels(&[0, 10]), &p), Err(Error::Data(_))));
        let mut bad = idx_labels(&[1]);
        bad[3] = 0x03;
        assert!(matches!(parse_idx_labels(&bad, &p), Err(Error::Format { .. })));
    }

    #[test]
    fn cifar_length_checked() {
        let p = PathBuf::from("data_batch_1.bin");
        assert!(matches!(
            parse_cifar_batch(&[0u8; CIFAR_RECORD_LEN * 3], &p),
            Err(Error::Length { .. })
        ));
    }

    #[test]
    fn cifar_label_and_saturated_record() {
        let mut bytes = vec![0u8; CIFAR_RECORDS_PER_FILE * CIFAR_RECORD_LEN];
        bytes[0] = 6;
        bytes[1..CIFAR_RECORD_LEN].fill(255);
        let (pixels, labels) = parse_cifar_batch(&bytes, Path::new("x")).unwrap();
        assert_eq!(labels[0], 6);
        assert!(pixels[..3 * CIFAR_PLANE].iter().all(|&v| v == 1.0));
        assert!(pixels[3 * CIFAR_PLANE..6 * CIFAR_PLANE].iter().all(|&v| v == 0.0));
    }

    fn toy(labels: &[u8]) -> Dataset {
        let n = labels.len();
        let images = Tensor::new([n, 1, 1, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::new(DatasetName::Mnist, Split::Train, images, labels.to_vec()).unwrap()
    }

    #[test]
    fn subset_one_per_class() {
        let labels: Vec<u8> = (0..50).map(|i| (i % 10) as u8).collect();
        let d = toy(&labels);
        let s = subset(&d, 1, 3).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.class_histogram(), [1; 10]);
        // each image still carries its own label
        for (img, &l) in s.images.data().iter().zip(&s.labels) {
            assert_eq!(d.labels[*img as usize], l);
        }
    }

    #[test]
    fn subset_is_seeded() {
        let labels: Vec<u8> = (0..200).map(|i| (i * 7 % 10) as u8).collect();
        let d = toy(&labels);
        assert_eq!(subset(&d, 5, 11).unwrap(), subset(&d, 5, 11).unwrap());
        assert_ne!(subset(&d, 5, 11).unwrap(), subset(&d, 5, 12).unwrap());
    }

    #[test]
    fn subset_oversubscription() {
        let labels: Vec<u8> = (0..30).map(|i| (i % 10) as u8).collect();
        assert!(matches!(subset(&toy(&labels), 4, 0), Err(Error::Data(_))));
        assert!(matches!(subset(&toy(&labels), 0, 0), Err(Error::Data(_))));
    }

    #[test]
    fn names_parse() {
        assert_eq!("mnist".parse::<DatasetName>().unwrap(), DatasetName::Mnist);
        assert_eq!("cifar10".parse::<DatasetName>().unwrap(), DatasetName::Cifar10);
        assert!("svhn".parse::<DatasetName>().is_err());
    }
}
