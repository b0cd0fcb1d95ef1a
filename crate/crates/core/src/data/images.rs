use std::path::{Path, PathBuf};

use super::idx::{self, IdxData};
use crate::{Error, Real, Result, Tensor};

/// An image scaled to `[0, 1]` in `[C, H, W]` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: Tensor,
    pub label: usize,
    pub id: u64,
}

/// A dataset's predefined training and test splits ("pre-train" / "pre-test").
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
    pub classes: usize,
}

/// Loads an image file and its label file. Ids start at `first_id`.
///
/// Three-dimensional image files are `[N, H, W]` (one channel); four
/// dimensional files are `[N, H, W, C]` and are transposed to `[C, H, W]`.
pub fn load_idx_dataset(images: &Path, labels: &Path, first_id: u64) -> Result<Vec<LabeledImage>> {
    let img = idx::read_idx(images)?;
    let lab = idx::read_idx(labels)?;
    let (h, w, c) = match img.dims.as_slice() {
        [_, h, w] => (*h, *w, 1),
        [_, h, w, c] => (*h, *w, *c),
        d => return Err(Error::parse(images, format!("expected 3 or 4 image dimensions, got {d:?}"))),
    };
    let count = img.dims[0];
    let IdxData::U8(label_bytes) = &lab.data else {
        return Err(Error::parse(labels, "labels must be unsigned bytes"));
    };
    if lab.dims.len() != 1 {
        return Err(Error::parse(labels, "labels must be one-dimensional"));
    }
    if lab.dims[0] != count {
        return Err(Error::parse(
            labels,
            format!("label count {} does not match image count {count}", lab.dims[0]),
        ));
    }
    let values = img.to_unit_f64();
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::parse(images, "pixel values outside [0, 1]"));
    }
    let per = h * w * c;
    let mut out = Vec::with_capacity(count);
    for (n, label) in label_bytes.iter().enumerate() {
        let src = &values[n * per..(n + 1) * per];
        let mut chw = vec![0.0 as Real; per];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    chw[(ch * h + y) * w + x] = src[(y * w + x) * c + ch] as Real;
                }
            }
        }
        out.push(LabeledImage {
            pixels: Tensor::new(vec![c, h, w], chw)?,
            label: *label as usize,
            id: first_id + n as u64,
        });
    }
    Ok(out)
}

fn find(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [dir.join(stem), dir.join(format!("{stem}.gz"))] {
        if candidate.exists() {
            return Ok(candidate);
        }
    }
    Err(Error::MissingArtifact(dir.join(stem)))
}

/// Loads `train-{images-idx3,labels-idx1}-ubyte[.gz]` and the matching
/// `t10k-*` files from `dir`. Four-dimensional image files may use the
/// `idx4` infix instead of `idx3`. Test ids continue after the training ids.
pub fn load_dataset_dir(dir: &Path, name: &str) -> Result<Dataset> {
    let images = |prefix: &str| {
        find(dir, &format!("{prefix}-images-idx3-ubyte")).or_else(|_| find(dir, &format!("{prefix}-images-idx4-ubyte")))
    };
    let train = load_idx_dataset(&images("train")?, &find(dir, "train-labels-idx1-ubyte")?, 0)?;
    let test = load_idx_dataset(
        &images("t10k")?,
        &find(dir, "t10k-labels-idx1-ubyte")?,
        train.len() as u64,
    )?;
    let classes = train.iter().chain(&test).map(|i| i.label).max().unwrap_or(0) + 1;
    Ok(Dataset {
        name: name.to_string(),
        train,
        test,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::idx::{write_idx, IdxArray};

    #[test]
    fn label_image_count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i");
        let lp = dir.path().join("l");
        write_idx(&ip, &IdxArray { dims: vec![2, 2, 2], data: IdxData::U8(vec![0; 8]) }).unwrap();
        write_idx(&lp, &IdxArray { dims: vec![3], data: IdxData::U8(vec![0; 3]) }).unwrap();
        let err = load_idx_dataset(&ip, &lp, 0).unwrap_err().to_string();
        assert!(err.contains("does not match"), "{err}");
    }

    #[test]
    fn four_dimensional_images_become_channel_first() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i");
        let lp = dir.path().join("l");
        // one 1x2 image with 3 channels, HWC order
        let hwc = vec![10, 20, 30, 40, 50, 60];
        write_idx(&ip, &IdxArray { dims: vec![1, 1, 2, 3], data: IdxData::U8(hwc) }).unwrap();
        write_idx(&lp, &IdxArray { dims: vec![1], data: IdxData::U8(vec![4]) }).unwrap();
        let imgs = load_idx_dataset(&ip, &lp, 7).unwrap();
        assert_eq!(imgs[0].pixels.shape(), &[3, 1, 2]);
        let expect: Vec<Real> = [10, 40, 20, 50, 30, 60].iter().map(|&v| v as Real / 255.0).collect();
        assert_eq!(imgs[0].pixels.data(), expect.as_slice());
        assert_eq!((imgs[0].label, imgs[0].id), (4, 7));
    }
}
