mod oracles;

use oracles::parse_pgm;
use proptest::prelude::*;
use spect_interp::image::{Image, SinoGeometry, Sinogram};
use spect_interp::io::{
    decode_raw, decode_tomo, encode_image, encode_pgm, encode_sinogram, export_pgm, import_raw, read_image,
    read_sinogram, write_image, write_sinogram, Manifest, ManifestEntry, RawDtype, TomoData,
};
use spect_interp::Error;

fn sino(n_angles: usize, n_bins: usize, data: Vec<f32>) -> Sinogram {
    let g = SinoGeometry {
        n_angles,
        n_bins,
        start_angle_deg: 1.5,
        angular_range_deg: 360.0,
        bin_width: 0.75,
    };
    Sinogram::new(g, data).unwrap()
}

#[test]
fn sinogram_header_layout() {
    let s = sino(32, 128, vec![0.0; 32 * 128]);
    let bytes = encode_sinogram(&s);
    assert_eq!(bytes.len(), 44 + 4 * 32 * 128);
    assert_eq!(&bytes[..8], b"SPTB0001");
    assert_eq!(&bytes[8..12], &[1, 0, 2, 0]);
    assert_eq!(&bytes[12..16], &32u32.to_le_bytes());
    assert_eq!(&bytes[16..20], &128u32.to_le_bytes());
    assert_eq!(&bytes[20..28], &1.5f64.to_le_bytes());
    assert_eq!(&bytes[28..36], &360.0f64.to_le_bytes());
    assert_eq!(&bytes[36..44], &0.75f64.to_le_bytes());
}

#[test]
fn image_header_layout() {
    let img = Image::new(3, 2, 2.0, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let bytes = encode_image(&img);
    assert_eq!(bytes[8], 0);
    // dims are stored rows first
    assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
    assert_eq!(&bytes[16..20], &3u32.to_le_bytes());
    assert_eq!(&bytes[20..28], &2.0f64.to_le_bytes());
    assert_eq!(&bytes[44..48], &0.0f32.to_le_bytes());
    assert_eq!(&bytes[48..52], &1.0f32.to_le_bytes());
}

#[test]
fn file_round_trips_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = sino(4, 8, (0..32).map(|i| i as f32 * 0.37).collect());
    let p = dir.path().join("s.sptb");
    write_sinogram(&p, &s).unwrap();
    assert_eq!(read_sinogram(&p).unwrap(), s);
    assert_eq!(std::fs::read(&p).unwrap(), encode_sinogram(&s));

    let img = Image::new(5, 3, 1.0, (0..15).map(|i| i as f32).collect()).unwrap();
    let q = dir.path().join("i.sptb");
    write_image(&q, &img).unwrap();
    assert_eq!(read_image(&q).unwrap(), img);
    // kind is checked when a specific type is requested
    assert!(read_sinogram(&q).is_err());
}

#[test]
fn header_errors_are_distinct() {
    let mut bytes = encode_sinogram(&sino(2, 2, vec![1.0; 4]));
    let mut v2 = bytes.clone();
    v2[7] = b'2';
    assert!(matches!(decode_tomo(&v2), Err(Error::Version { .. })));
    let mut bad = bytes.clone();
    bad[0] = b'Q';
    assert!(matches!(decode_tomo(&bad), Err(Error::BadMagic { .. })));
    let err = decode_tomo(&bytes[..30]).unwrap_err();
    assert!(matches!(err, Error::Truncated { .. }), "{err}");
    bytes[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
    bytes[16..20].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(matches!(decode_tomo(&bytes), Err(Error::DimOverflow { .. })));
}

#[test]
fn raw_import_contract() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("zeros.raw");
    std::fs::write(&p, vec![0u8; 32 * 128 * 4]).unwrap();
    let s = import_raw(&p, 32, 128, RawDtype::F32Le, 0.0, 360.0).unwrap();
    assert!(s.data().iter().all(|&v| v == 0.0));
    assert_eq!((s.n_angles(), s.n_bins(), s.geometry().angular_range_deg), (32, 128, 360.0));

    std::fs::write(&p, vec![0u8; 32 * 128 * 4 - 1]).unwrap();
    let err = import_raw(&p, 32, 128, RawDtype::F32Le, 0.0, 360.0).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("16384") && text.contains("16383"), "{text}");

    let u = decode_raw(&[0xff, 0xff, 0x01, 0x00], 1, 2, RawDtype::U16Le, 0.0, 180.0).unwrap();
    assert_eq!(u.data(), &[65535.0, 1.0]);

    let neg = (-1.0f32).to_le_bytes();
    assert!(matches!(
        decode_raw(&neg, 1, 1, RawDtype::F32Le, 0.0, 360.0),
        Err(Error::NegativeValue { .. })
    ));
    assert!("u16le".parse::<RawDtype>().is_ok() && "f32le".parse::<RawDtype>().is_ok());
    assert!("f64".parse::<RawDtype>().is_err());
}

#[test]
fn pgm_export_examples() {
    let img = Image::new(2, 1, 1.0, vec![0.0, 1.0]).unwrap();
    let bytes = encode_pgm(&img);
    assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
    let (w, h, maxval, samples) = parse_pgm(&bytes).unwrap();
    assert_eq!((w, h, maxval), (2, 1, 65535));
    assert_eq!(samples, vec![0, 65535]);

    let flat = Image::new(3, 2, 1.0, vec![7.0; 6]).unwrap();
    assert_eq!(parse_pgm(&encode_pgm(&flat)).unwrap().3, vec![32768; 6]);

    let dir = tempfile::tempdir().unwrap();
    let s = sino(3, 4, (0..12).map(|i| i as f32).collect());
    let p = dir.path().join("s.pgm");
    export_pgm(&s, &p).unwrap();
    let (w, h, _, samples) = parse_pgm(&std::fs::read(&p).unwrap()).unwrap();
    assert_eq!((w, h), (4, 3));
    assert_eq!((samples[0], samples[11]), (0, 65535));
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manifest {
        root: dir.path().to_path_buf(),
        entries: (0..3)
            .map(|i| ManifestEntry {
                index: i,
                input: format!("input_{i:06}.sptb"),
                target: format!("target_{i:06}.sptb"),
                phantom: format!("phantom_{i:06}.sptb"),
                seed: 11,
                noise: "low".to_owned(),
            })
            .collect(),
    };
    let path = dir.path().join("manifest.jsonl");
    m.write(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(Manifest::read(&path).unwrap(), m);
    std::fs::write(&path, "{\"index\": 0}\n").unwrap();
    assert!(matches!(Manifest::read(&path), Err(Error::Manifest(_))));
}

proptest! {
    #[test]
    fn encoded_sinograms_round_trip(
        a in 1usize..6,
        b in 1usize..9,
        start in -180.0f64..180.0,
        seed in any::<u32>(),
    ) {
        let data: Vec<f32> = (0..a * b).map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 * 1e-6).collect();
        let g = SinoGeometry { n_angles: a, n_bins: b, start_angle_deg: start, angular_range_deg: 180.0, bin_width: 1.25 };
        let s = Sinogram::new(g, data).unwrap();
        let bytes = encode_sinogram(&s);
        match decode_tomo(&bytes).unwrap() {
            TomoData::Sinogram(back) => {
                prop_assert_eq!(encode_sinogram(&back), bytes);
                prop_assert_eq!(back, s);
            }
            TomoData::Image(_) => prop_assert!(false, "decoded as image"),
        }
    }

    #[test]
    fn corrupt_input_never_panics(cut in 0usize..80, flip in 0usize..80, byte in any::<u8>()) {
        let mut bytes = encode_image(&Image::new(2, 3, 1.0, vec![0.5; 6]).unwrap());
        if flip < bytes.len() {
            bytes[flip] = byte;
        }
        let cut = cut.min(bytes.len());
        let _ = decode_tomo(&bytes[..cut]);
    }
}
