//! IDX ingestion (the MNIST / Fashion-MNIST container format).
//!
//! Layout: 4-byte big-endian magic `0x0000_08NN` where `NN` is the number of
//! dimensions, then one big-endian `u32` per dimension, then unsigned bytes.

use std::path::Path;

use super::Dataset;
use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxArray<'a> {
    dims: Vec<usize>,
    payload: &'a [u8],
}

fn parse_header<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<IdxArray<'a>> {
    let fail = |reason: String| Error::IdxParse {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 {
        return Err(fail(format!("file too short for magic ({} bytes)", bytes.len())));
    }
    let found = u32::from_be_bytes(bytes[0..4].try_into().expect("4 bytes"));
    if found != magic {
        return Err(fail(format!("bad magic {found:#010x}, expected {magic:#010x}")));
    }
    let ndims = (magic & 0xff) as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(fail("truncated dimension header".into()));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| {
            let s = 4 + 4 * i;
            u32::from_be_bytes(bytes[s..s + 4].try_into().expect("4 bytes")) as usize
        })
        .collect();
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(fail(format!(
            "payload has {} bytes, dimensions {dims:?} require {expected}",
            payload.len()
        )));
    }
    Ok(IdxArray { dims, payload })
}

/// Parse in-memory image and label files. Pixels are scaled to `[0, 1]`.
pub fn parse_idx(images: &[u8], labels: &[u8], source: &Path) -> Result<Dataset> {
    let img = parse_header(images, IMAGES_MAGIC, source)?;
    let lab = parse_header(labels, LABELS_MAGIC, source)?;
    if img.dims[0] != lab.dims[0] {
        return Err(Error::IdxParse {
            path: source.to_path_buf(),
            reason: format!("{} images but {} labels", img.dims[0], lab.dims[0]),
        });
    }
    let dim = img.dims[1] * img.dims[2];
    if dim == 0 {
        return Err(Error::IdxParse {
            path: source.to_path_buf(),
            reason: "zero-sized images".into(),
        });
    }
    let labels: Vec<usize> = lab.payload.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().copied().max().map_or(10, |m| (m + 1).max(10));
    let features = img.payload.iter().map(|&b| b as f64 / 255.0).collect();
    Dataset::new(dim, classes, features, labels)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = std::fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let labels = std::fs::read(lp).map_err(|e| Error::io(lp, e))?;
    parse_idx(&images, &labels, ip)
}

pub fn encode_idx_images(pixels: &[u8], count: usize, rows: usize, cols: usize) -> Vec<u8> {
    let mut out = IMAGES_MAGIC.to_be_bytes().to_vec();
    for d in [count, rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = LABELS_MAGIC.to_be_bytes().to_vec();
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_files() -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..3 * 2 * 2).map(|v| (v * 20) as u8).collect();
        (encode_idx_images(&pixels, 3, 2, 2), encode_idx_labels(&[7, 0, 9]))
    }

    #[test]
    fn header_constants_are_big_endian() {
        let (img, lab) = sample_files();
        assert_eq!(&img[..4], &[0, 0, 8, 3]);
        assert_eq!(&lab[..4], &[0, 0, 8, 1]);
        assert_eq!(&img[4..8], &[0, 0, 0, 3]);
    }

    #[test]
    fn parses_and_scales() {
        let (img, lab) = sample_files();
        let d = parse_idx(&img, &lab, Path::new("mem")).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 4);
        assert_eq!(d.labels(), &[7, 0, 9]);
        assert_eq!(d.features(0)[1], 20.0 / 255.0);
        assert_eq!(d.classes(), 10);
    }

    #[test]
    fn bad_magic_is_an_error() {
        let (mut img, lab) = sample_files();
        img[3] = 0x02;
        assert!(matches!(parse_idx(&img, &lab, Path::new("m")), Err(Error::IdxParse { .. })));
        assert!(parse_idx(&lab, &img, Path::new("m")).is_err());
    }

    #[test]
    fn truncation_is_an_error_not_a_panic() {
        let (img, lab) = sample_files();
        for cut in 0..img.len() {
            assert!(parse_idx(&img[..cut], &lab, Path::new("m")).is_err());
        }
        for cut in 0..lab.len() {
            assert!(parse_idx(&img, &lab[..cut], Path::new("m")).is_err());
        }
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let (img, _) = sample_files();
        let lab = encode_idx_labels(&[1, 2]);
        assert!(parse_idx(&img, &lab, Path::new("m")).is_err());
    }

    #[test]
    fn loads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = sample_files();
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lab.idx");
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        assert_eq!(load_idx(&ip, &lp).unwrap().len(), 3);
        assert!(matches!(load_idx(dir.path().join("nope"), &lp), Err(Error::Io { .. })));
    }

    #[test]
    fn published_fmnist_train_file_if_present() {
        let dir = match std::env::var("FMNIST_DIR") {
            Ok(d) => std::path::PathBuf::from(d),
            Err(_) => return,
        };
        let d = load_idx(
            dir.join("train-images-idx3-ubyte"),
            dir.join("train-labels-idx1-ubyte"),
        )
        .unwrap();
        assert_eq!(d.len(), 60000);
        assert_eq!(d.dim(), 784);
    }
}
