use std::path::PathBuf;

use liquid_core::data::idx::{parse_images, parse_labels, read_maybe_gz};
use liquid_core::data::nmnist::{encode_event, load_sample, parse_events};
use liquid_core::data::{load_idx, load_idx_dir, load_nmnist, Event};

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

const PIXELS: [[u8; 6]; 3] = [[0, 255, 128, 1, 2, 3], [10, 20, 30, 40, 50, 60], [255; 6]];

#[test]
pub fn idx_images_decode_byte_for_byte() {
    let bytes = std::fs::read(fixture("images-idx3-ubyte")).unwrap();
    let (rows, cols, images) = parse_images(&bytes).unwrap();
    assert_eq!((rows, cols), (2, 3));
    assert_eq!(images.len(), 3);
    for (got, want) in images.iter().zip(PIXELS) {
        assert_eq!(*got, &want[..]);
    }
    let labels = parse_labels(&std::fs::read(fixture("labels-idx1-ubyte")).unwrap()).unwrap();
    assert_eq!(labels, vec![7, 0, 9]);
}

#[test]
pub fn gzip_and_plain_files_agree() {
    for name in ["images-idx3-ubyte", "labels-idx1-ubyte"] {
        let plain = read_maybe_gz(&fixture(name)).unwrap();
        let gz = read_maybe_gz(&fixture(&format!("gz/{name}.gz"))).unwrap();
        assert_eq!(plain, gz);
    }
    assert_eq!(load_idx_dir(&fixture(""), None).unwrap(), load_idx_dir(&fixture("gz"), None).unwrap());
}

#[test]
pub fn idx_samples_are_scaled_to_unit_range() {
    let s = load_idx(&fixture("images-idx3-ubyte"), &fixture("labels-idx1-ubyte")).unwrap();
    assert_eq!(s.len(), 3);
    assert_eq!(s[0].label, 7);
    assert_eq!(s[0].pixels, vec![0.0, 1.0, 128.0 / 255.0, 1.0 / 255.0, 2.0 / 255.0, 3.0 / 255.0]);
    assert!(s[2].pixels.iter().all(|&p| p == 1.0));
}

#[test]
pub fn truncated_or_mislabelled_idx_is_rejected() {
    let bytes = std::fs::read(fixture("images-idx3-ubyte")).unwrap();
    assert!(parse_images(&bytes[..bytes.len() - 1]).is_err());
    assert!(parse_images(&bytes[..10]).is_err());
    let labels = std::fs::read(fixture("labels-idx1-ubyte")).unwrap();
    assert!(parse_images(&labels).is_err());
    assert!(parse_labels(&bytes).is_err());
}

#[test]
pub fn nmnist_sample_decodes_and_sorts_by_time() {
    let s = load_sample(&fixture("nmnist/Train/3/00001.bin"), 3).unwrap();
    assert_eq!(s.label, 3);
    assert_eq!(
        s.events,
        vec![
            Event { x: 33, y: 12, polarity: 0, t_us: 1200 },
            Event { x: 0, y: 0, polarity: 1, t_us: 5000 },
            Event { x: 7, y: 33, polarity: 1, t_us: (1 << 23) - 1 },
        ]
    );
    let raw = std::fs::read(fixture("nmnist/Train/3/00001.bin")).unwrap();
    let reencoded: Vec<u8> = parse_events(&raw).unwrap().iter().flat_map(encode_event).collect();
    assert_eq!(reencoded, raw);
}

#[test]
pub fn nmnist_directory_keeps_empty_files_and_skips_others() {
    let set = load_nmnist(&fixture("nmnist/Train")).unwrap();
    assert_eq!(set.samples.len(), 3);
    assert_eq!(set.samples.iter().map(|s| s.label).collect::<Vec<_>>(), vec![3, 5, 5]);
    assert_eq!(set.empty.len(), 1);
    assert!(set.empty[0].ends_with("5/00003.bin"));
    assert!(set.samples[2].events.is_empty());
}
