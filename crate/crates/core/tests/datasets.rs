use std::path::{Path, PathBuf};

use cvnn_core::datasets::{
    idx_images_bytes, load_idx, parse_idx_images, subsample, synthetic_regression, Dataset, IdxImages, Split,
};
use cvnn_core::network::{LayerSpec, LossKind, Network, Shape, Targets, ThresholdMode};

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn mnist_train() -> Dataset {
    let dir = mnist_dir();
    load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        Split::Train,
    )
    .unwrap()
}

fn histogram(ds: &Dataset) -> Vec<usize> {
    let mut h = vec![0; ds.classes];
    for &l in ds.labels().unwrap() {
        h[l] += 1;
    }
    h
}

#[test]
fn mnist_files_load_and_round_trip() {
    let dir = mnist_dir();
    let ds = mnist_train();
    assert_eq!(ds.len(), 8000);
    assert_eq!(ds.inputs.cols(), 784);
    assert_eq!(ds.shape, Shape::new(1, 28, 28));
    assert_eq!(ds.classes, 10);
    assert!(ds.inputs.data().iter().all(|z| (0.0..=1.0).contains(&z.re) && z.im == 0.0));
    let (img, lab) = ds.to_idx().unwrap();
    assert!(img == std::fs::read(dir.join("train-images-idx3-ubyte")).unwrap());
    assert!(lab == std::fs::read(dir.join("train-labels-idx1-ubyte")).unwrap());
}

#[test]
fn idx_parse_write_is_byte_identical() {
    let images = IdxImages {
        count: 3,
        rows: 4,
        cols: 5,
        pixels: (0..60).map(|i| (i * 37 % 256) as u8).collect(),
    };
    let bytes = idx_images_bytes(&images);
    let parsed = parse_idx_images(&bytes, Path::new("mem")).unwrap();
    assert_eq!(parsed, images);
    assert_eq!(idx_images_bytes(&parsed), bytes);
}

#[test]
fn stratified_subsample_keeps_proportions() {
    let ds = mnist_train();
    let full = histogram(&ds);
    for (n_keep, seed) in [(4000, 1), (4000, 2), (1234, 3)] {
        let sub = subsample(&ds, n_keep, seed).unwrap();
        assert_eq!(sub.len(), n_keep);
        for (c, &k) in histogram(&sub).iter().enumerate() {
            let exact = full[c] as f64 * n_keep as f64 / ds.len() as f64;
            assert!((k as f64 - exact).abs() <= 1.0, "class {c}: {k} vs {exact}");
        }
    }
    let a = subsample(&ds, 4000, 1).unwrap();
    let b = subsample(&ds, 4000, 2).unwrap();
    assert_eq!(histogram(&a), histogram(&b));
    assert_ne!(a.inputs, b.inputs);
    assert_eq!(subsample(&ds, 4000, 1).unwrap().inputs, a.inputs);

    let same = subsample(&ds, ds.len(), 5).unwrap();
    assert_eq!(same.inputs, ds.inputs);
    assert!(subsample(&ds, ds.len() + 1, 5).is_err());
}

#[test]
fn synthetic_regression_properties() {
    let teacher = Network::new(
        Shape::new(1, 1, 10),
        &[LayerSpec::dense(10, 3, None)],
        ThresholdMode::Zero,
        4,
    )
    .unwrap();
    let ds = synthetic_regression(1000, 10, &teacher, 0.0, 8).unwrap();
    let energy = ds.inputs.frobenius_norm().powi(2) / (1000.0 * 10.0);
    assert!((energy - 1.0).abs() < 0.05, "energy {energy}");
    let out = teacher.backward(&ds.inputs, &ds.targets, LossKind::L2).unwrap();
    assert_eq!(out.loss, 0.0);
    let noisy = synthetic_regression(1000, 10, &teacher, 0.5, 8).unwrap();
    assert!(teacher.backward(&noisy.inputs, &noisy.targets, LossKind::L2).unwrap().loss > 0.0);
    assert!(matches!(noisy.targets, Targets::Complex(_)));
}
