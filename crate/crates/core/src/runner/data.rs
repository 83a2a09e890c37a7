use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::checkpoint::read_u32;
use crate::nn::LabeledSample;

/// Shape of an ingested dataset and the normalisation applied to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dim: usize,
    pub classes: usize,
    pub train_size: usize,
    pub heldout_size: usize,
    /// Whether raw values fell outside `[0, 1]` and were min-max mapped.
    pub normalized: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub feature_min: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub feature_max: Vec<f64>,
}

/// Members (`train`) and non-members (`heldout`) of a target model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledSample>,
    pub heldout: Vec<LabeledSample>,
    pub manifest: DatasetManifest,
}

/// Isotropic unit-variance Gaussian blobs around means drawn from
/// `N(0, separation² I)`, `n_per_class` samples per class in each split.
/// Features are mapped affinely into `[0, 1]^d` with one shared per-feature
/// mapping for both splits.
pub fn generate_synthetic_dataset(
    n_per_class: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || classes < 2 || dim == 0 {
        return Err(Error::Config(format!(
            "synthetic data needs positive counts and at least 2 classes \
             (n_per_class {n_per_class}, classes {classes}, dim {dim})"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::Config(format!(
            "invalid class separation {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| separation * gauss(&mut rng)).collect())
        .collect();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<LabeledSample> {
        let mut out = Vec::with_capacity(n_per_class * classes);
        for (c, mu) in means.iter().enumerate() {
            for _ in 0..n_per_class {
                let x = mu.iter().map(|m| m + gauss(rng)).collect();
                out.push(LabeledSample::new(x, c));
            }
        }
        out.shuffle(rng);
        out
    };
    let mut train = draw(&mut rng);
    let mut heldout = draw(&mut rng);
    let (lo, hi) = feature_ranges(train.iter().chain(&heldout), dim);
    for s in train.iter_mut().chain(heldout.iter_mut()) {
        apply_min_max(&mut s.features, &lo, &hi);
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            dim,
            classes,
            train_size: train.len(),
            heldout_size: heldout.len(),
            normalized: true,
            feature_min: lo,
            feature_max: hi,
        },
        train,
        heldout,
    })
}

fn feature_ranges<'a>(
    samples: impl Iterator<Item = &'a LabeledSample>,
    dim: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for s in samples {
        for (j, v) in s.features.iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    (lo, hi)
}

fn apply_min_max(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for (v, (l, h)) in x.iter_mut().zip(lo.iter().zip(hi)) {
        *v = if h > l { (*v - l) / (h - l) } else { 0.0 };
    }
}

/// Min-max maps both splits jointly when any value lies outside `[0, 1]`.
fn finish(
    mut train: Vec<LabeledSample>,
    mut heldout: Vec<LabeledSample>,
    dim: usize,
    classes: usize,
) -> Result<Dataset> {
    for s in train.iter().chain(&heldout) {
        if s.label >= classes {
            return Err(Error::Validation(format!(
                "label {} is not below the class count {classes}",
                s.label
            )));
        }
    }
    let outside = train
        .iter()
        .chain(&heldout)
        .flat_map(|s| s.features.iter())
        .any(|v| !(0.0..=1.0).contains(v));
    let (mut feature_min, mut feature_max) = (Vec::new(), Vec::new());
    if outside {
        (feature_min, feature_max) = feature_ranges(train.iter().chain(&heldout), dim);
        for s in train.iter_mut().chain(heldout.iter_mut()) {
            apply_min_max(&mut s.features, &feature_min, &feature_max);
        }
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            dim,
            classes,
            train_size: train.len(),
            heldout_size: heldout.len(),
            normalized: outside,
            feature_min,
            feature_max,
        },
        train,
        heldout,
    })
}

/// Reads a CSV split: header row, columns `f0 … f{d-1}`, then an integer
/// label column.
pub fn read_csv_split(r: impl Read) -> Result<Vec<LabeledSample>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let header = reader.headers().map_err(crate::scores::csv_error)?.clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "expected at least one feature column and a label column".into(),
        });
    }
    let width = header.len();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(crate::scores::csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} columns, found {}", row.len()),
            });
        }
        let features = row
            .iter()
            .take(width - 1)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("invalid feature value `{f}`"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let raw = &row[width - 1];
        let label = raw.trim().parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("invalid label `{raw}`"),
        })?;
        out.push(LabeledSample::new(features, label));
    }
    if out.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(out)
}

pub fn write_csv_split(samples: &[LabeledSample], w: impl Write) -> Result<()> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    let mut writer = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..dim).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    writer
        .write_record(&header)
        .map_err(crate::scores::csv_error)?;
    for s in samples {
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.push(s.label.to_string());
        writer
            .write_record(&row)
            .map_err(crate::scores::csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

const DATA_MAGIC: &[u8; 8] = b"ADVMIADS";
const DATA_VERSION: u32 = 1;

/// Binary split: magic, u32 version, d, K, n, then `n·d` f32 features and
/// `n` u32 labels, all little-endian.
pub fn write_binary_split(
    samples: &[LabeledSample],
    classes: usize,
    w: &mut impl Write,
) -> Result<()> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    w.write_all(DATA_MAGIC)?;
    for v in [
        DATA_VERSION,
        dim as u32,
        classes as u32,
        samples.len() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::shape(dim, s.features.len()));
        }
        for v in &s.features {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    for s in samples {
        w.write_all(&(s.label as u32).to_le_bytes())?;
    }
    Ok(())
}

/// Returns the samples and the declared class count.
pub fn read_binary_split(r: &mut impl Read) -> Result<(Vec<LabeledSample>, usize)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Parse {
        line: 0,
        message: "file too short for a dataset header".into(),
    })?;
    if &magic != DATA_MAGIC {
        return Err(Error::Parse {
            line: 0,
            message: "not a binary dataset".into(),
        });
    }
    let header = (0..4)
        .map(|_| read_u32(r))
        .collect::<Result<Vec<u32>>>()
        .map_err(|_| Error::Parse {
            line: 0,
            message: "truncated dataset header".into(),
        })?;
    if header[0] != DATA_VERSION {
        return Err(Error::Parse {
            line: 0,
            message: format!("unsupported dataset version {}", header[0]),
        });
    }
    let (dim, classes, n) = (header[1] as usize, header[2] as usize, header[3] as usize);
    let mut buf = vec![0u8; n * dim * 4];
    r.read_exact(&mut buf).map_err(|_| Error::Parse {
        line: 0,
        message: "truncated feature block".into(),
    })?;
    let values: Vec<f64> = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let mut lbuf = vec![0u8; n * 4];
    r.read_exact(&mut lbuf).map_err(|_| Error::Parse {
        line: 0,
        message: "truncated label block".into(),
    })?;
    let samples = lbuf
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let label = u32::from_le_bytes(c.try_into().unwrap()) as usize;
            LabeledSample::new(values[i * dim..(i + 1) * dim].to_vec(), label)
        })
        .collect();
    Ok((samples, classes))
}

fn check_dims(train: &[LabeledSample], heldout: &[LabeledSample]) -> Result<usize> {
    let dim = train.first().map_or(0, |s| s.features.len());
    if let Some(bad) = train
        .iter()
        .chain(heldout)
        .find(|s| s.features.len() != dim)
    {
        return Err(Error::Validation(format!(
            "feature dimension {} differs from {dim}",
            bad.features.len()
        )));
    }
    Ok(dim)
}

pub fn load_csv_dataset(train: &Path, heldout: &Path, classes: usize) -> Result<Dataset> {
    let tr = read_csv_split(std::fs::File::open(train)?)?;
    let ho = read_csv_split(std::fs::File::open(heldout)?)?;
    let dim = check_dims(&tr, &ho)?;
    finish(tr, ho, dim, classes)
}

pub fn load_binary_dataset(train: &Path, heldout: &Path) -> Result<Dataset> {
    let (tr, k1) = read_binary_split(&mut std::fs::File::open(train)?)?;
    let (ho, k2) = read_binary_split(&mut std::fs::File::open(heldout)?)?;
    if k1 != k2 {
        return Err(Error::Validation(format!(
            "class counts differ: {k1} vs {k2}"
        )));
    }
    let dim = check_dims(&tr, &ho)?;
    finish(tr, ho, dim, k1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic_and_in_unit_box() {
        let a = generate_synthetic_dataset(5, 3, 4, 2.0, 11).unwrap();
        let b = generate_synthetic_dataset(5, 3, 4, 2.0, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 15);
        assert_eq!(a.heldout.len(), 15);
        assert!(a
            .train
            .iter()
            .chain(&a.heldout)
            .all(|s| s.features.iter().all(|v| (0.0..=1.0).contains(v))));
        for c in 0..3 {
            assert_eq!(a.train.iter().filter(|s| s.label == c).count(), 5);
        }
        assert_ne!(a, generate_synthetic_dataset(5, 3, 4, 2.0, 12).unwrap());
    }

    #[test]
    fn synthetic_rejects_invalid_counts() {
        assert!(matches!(
            generate_synthetic_dataset(0, 3, 4, 1.0, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate_synthetic_dataset(3, 1, 4, 1.0, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            generate_synthetic_dataset(3, 3, 4, -1.0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn csv_binary_round_trip() {
        let csv = "f0,f1,label\n0.25,0.5,1\n0.125,1,0\n";
        let samples = read_csv_split(csv.as_bytes()).unwrap();
        let mut bin = Vec::new();
        write_binary_split(&samples, 2, &mut bin).unwrap();
        let (back, k) = read_binary_split(&mut bin.as_slice()).unwrap();
        assert_eq!(k, 2);
        assert_eq!(back, samples);
        let mut out = Vec::new();
        write_csv_split(&back, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }

    #[test]
    fn csv_errors_name_the_line() {
        assert!(matches!(
            read_csv_split("".as_bytes()),
            Err(Error::Parse { .. })
        ));
        let text = "f0,f1,label\n0,0,0\n0,0,0\n0,0,0\n0,0,0\n0,0,0\n0,0\n";
        match read_csv_split(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        let text = "f0,label\n0.5,x\n";
        assert!(matches!(
            read_csv_split(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn out_of_range_labels_and_values() {
        let s = vec![LabeledSample::new(vec![0.5], 3)];
        assert!(matches!(
            finish(s.clone(), s, 1, 3),
            Err(Error::Validation(_))
        ));
        let tr = vec![
            LabeledSample::new(vec![2.0], 0),
            LabeledSample::new(vec![4.0], 1),
        ];
        let ho = vec![LabeledSample::new(vec![3.0], 0)];
        let d = finish(tr, ho, 1, 2).unwrap();
        assert!(d.manifest.normalized);
        assert_eq!(d.train[1].features, vec![1.0]);
        assert_eq!(d.heldout[0].features, vec![0.5]);
    }
}
