//! MNIST in the IDX format.
//!
//! Images are `0x00000803, count, rows, cols` followed by `count * rows * cols`
//! unsigned bytes; labels are `0x00000801, count` followed by `count` bytes.
//! All integers are big-endian. Files ending in `.gz` are inflated first.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::cnn::IMAGE_SIDE;
use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Grayscale `28 x 28 x 1` images with pixels in `[0, 1]` and labels `0..=9`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub images: Vec<Tensor3>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Vec<Tensor3>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::contract(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        for (i, image) in images.iter().enumerate() {
            if image.dims() != (IMAGE_SIDE, IMAGE_SIDE, 1) {
                return Err(Error::contract(format!("image {i} has shape {:?}", image.dims())));
            }
            if image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::contract(format!("image {i} has pixels outside [0, 1]")));
            }
        }
        if let Some(i) = labels.iter().position(|&l| l > 9) {
            return Err(Error::contract(format!("label {i} is {}", labels[i])));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// The first `n` samples (all of them if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

fn parse_error(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset: offset as u64,
        message: message.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
}

impl Header<'_> {
    fn u32_at(&self, offset: usize, what: &str) -> Result<u32> {
        self.bytes
            .get(offset..offset + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| parse_error(self.bytes.len(), format!("truncated header: missing {what}")))
    }

    fn magic(&self, expected: u32) -> Result<()> {
        let magic = self.u32_at(0, "magic number")?;
        if magic != expected {
            return Err(parse_error(
                0,
                format!("bad magic number {magic:#010x}, expected {expected:#010x}"),
            ));
        }
        Ok(())
    }

    /// The payload starting at `offset`, which must hold exactly `len` bytes.
    fn payload(&self, offset: usize, len: Option<usize>) -> Result<&[u8]> {
        let have = self.bytes.len() - offset;
        match len {
            Some(len) if len == have => Ok(&self.bytes[offset..]),
            Some(len) if len > have => Err(parse_error(
                self.bytes.len(),
                format!("truncated payload: expected {len} bytes, found {have}"),
            )),
            Some(len) => Err(parse_error(offset + len, format!("{} trailing bytes", have - len))),
            None => Err(parse_error(4, "declared size overflows")),
        }
    }
}

/// Decode an image file. Pixels are scaled by `1/255`.
pub fn parse_images(bytes: &[u8]) -> Result<Vec<Tensor3>> {
    let header = Header { bytes };
    header.magic(IMAGE_MAGIC)?;
    let count = header.u32_at(4, "image count")? as usize;
    let rows = header.u32_at(8, "row count")? as usize;
    let cols = header.u32_at(12, "column count")? as usize;
    if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE) {
        return Err(parse_error(8, format!("expected 28x28 images, found {rows}x{cols}")));
    }
    let size = rows * cols;
    let payload = header.payload(16, count.checked_mul(size))?;
    Ok(payload
        .chunks_exact(size)
        .map(|px| {
            let data = px.iter().map(|&b| f64::from(b) / 255.0).collect();
            Tensor3::from_vec(rows, cols, 1, data).expect("chunk holds one image")
        })
        .collect())
}

/// Decode a label file.
pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let header = Header { bytes };
    header.magic(LABEL_MAGIC)?;
    let count = header.u32_at(4, "label count")? as usize;
    let payload = header.payload(8, Some(count))?;
    if let Some(i) = payload.iter().position(|&l| l > 9) {
        return Err(parse_error(8 + i, format!("label {} is not a digit", payload[i])));
    }
    Ok(payload.to_vec())
}

/// Encode images in the IDX format, rounding pixels to the nearest of 256 levels.
pub fn encode_images(images: &[Tensor3]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * IMAGE_SIDE * IMAGE_SIDE);
    for v in [IMAGE_MAGIC, images.len() as u32, IMAGE_SIDE as u32, IMAGE_SIDE as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for image in images {
        out.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Read a whole file, inflating it when the name ends in `.gz`.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| parse_error(0, format!("{}: gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Load a matching pair of image and label files.
pub fn load_mnist(images: &Path, labels: &Path) -> Result<Dataset> {
    let imgs = parse_images(&read_maybe_gz(images)?)?;
    let labs = parse_labels(&read_maybe_gz(labels)?)?;
    if imgs.len() != labs.len() {
        return Err(parse_error(
            4,
            format!("{} holds {} images but {} holds {} labels", images.display(), imgs.len(), labels.display(), labs.len()),
        ));
    }
    Ok(Dataset {
        images: imgs,
        labels: labs,
    })
}

/// Which half of the conventional file pair to load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Paths of `{train,test}-{images-idx3,labels-idx1}-ubyte[.gz]` under `dir`,
/// preferring uncompressed files. The test split also accepts the `t10k`
/// prefix of the original distribution.
pub fn split_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefixes: &[&str] = match split {
        Split::Train => &["train"],
        Split::Test => &["test", "t10k"],
    };
    let pick = |kind: &str| {
        let candidates: Vec<PathBuf> = prefixes
            .iter()
            .flat_map(|p| {
                let stem = format!("{p}-{kind}-ubyte");
                [dir.join(&stem), dir.join(format!("{stem}.gz"))]
            })
            .collect();
        candidates
            .iter()
            .find(|p| p.exists())
            .cloned()
            .unwrap_or_else(|| candidates[1].clone())
    };
    (pick("images-idx3"), pick("labels-idx1"))
}

pub fn load_split(dir: &Path, split: Split) -> Result<Dataset> {
    let (images, labels) = split_paths(dir, split);
    load_mnist(&images, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_image() -> Tensor3 {
        Tensor3::from_fn(28, 28, 1, |i, j, _| ((i * 28 + j) % 256) as f64 / 255.0)
    }

    #[test]
    fn roundtrip_single_image() {
        let image = one_image();
        let parsed = parse_images(&encode_images(std::slice::from_ref(&image))).unwrap();
        assert_eq!(parsed.len(), 1);
        assert!(parsed[0].max_abs_diff(&image) < 1e-12);
        assert_eq!(parse_labels(&encode_labels(&[7])).unwrap(), vec![7]);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_images(&[one_image()]);
        bytes[3] = 0x02;
        assert!(matches!(parse_images(&bytes), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(parse_labels(&bytes), Err(Error::Parse { offset: 0, .. })));
        assert!(matches!(parse_labels(&encode_images(&[])), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_images(&[one_image()]);
        let cut = &bytes[..100];
        assert!(matches!(parse_images(cut), Err(Error::Parse { offset: 100, .. })));
        assert!(matches!(parse_images(&bytes[..6]), Err(Error::Parse { offset: 6, .. })));
        let mut long = encode_labels(&[1, 2]);
        long.push(3);
        assert!(matches!(parse_labels(&long), Err(Error::Parse { offset: 10, .. })));
    }

    #[test]
    fn rejects_non_digit_labels() {
        assert!(matches!(parse_labels(&encode_labels(&[1, 12])), Err(Error::Parse { offset: 9, .. })));
    }

    #[test]
    fn count_mismatch_between_files() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("i.idx");
        let labels = dir.path().join("l.idx");
        std::fs::write(&images, encode_images(&[one_image()])).unwrap();
        std::fs::write(&labels, encode_labels(&[1, 2])).unwrap();
        assert!(matches!(load_mnist(&images, &labels), Err(Error::Parse { .. })));
    }

    #[test]
    fn gzip_files_are_inflated() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let gz = |name: &str, bytes: Vec<u8>| {
            let path = dir.path().join(name);
            let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(&bytes).unwrap();
            std::fs::write(&path, enc.finish().unwrap()).unwrap();
            path
        };
        gz("test-images-idx3-ubyte.gz", encode_images(&[one_image()]));
        gz("test-labels-idx1-ubyte.gz", encode_labels(&[4]));
        let data = load_split(dir.path(), Split::Test).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data.labels, vec![4]);
    }

    #[test]
    fn dataset_invariants() {
        assert!(Dataset::new(vec![one_image()], vec![]).is_err());
        assert!(Dataset::new(vec![Tensor3::zeros(2, 2, 1)], vec![0]).is_err());
        assert!(Dataset::new(vec![one_image().map(|v| v + 1.0)], vec![0]).is_err());
        assert!(Dataset::new(vec![one_image()], vec![10]).is_err());
        assert_eq!(Dataset::new(vec![one_image()], vec![3]).unwrap().head(5).len(), 1);
    }

    #[test]
    fn test_split_accepts_original_file_names() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t10k-images-idx3-ubyte"), encode_images(&[one_image()])).unwrap();
        std::fs::write(dir.path().join("t10k-labels-idx1-ubyte"), encode_labels(&[4])).unwrap();
        let data = load_split(dir.path(), Split::Test).unwrap();
        assert_eq!(data.labels, vec![4]);
        assert!(load_split(dir.path(), Split::Train).is_err());
    }
}
