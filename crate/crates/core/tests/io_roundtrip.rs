use haar_tsvd::io::{load, store};
use haar_tsvd::{Error, ImageTensor, Profile};

#[test]
fn eight_bit_formats_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let gray = ImageTensor::from_fn(9, 7, 1, |r, c, _| (r * 20 + c * 3) as f64);
    let rgb = ImageTensor::from_fn(5, 6, 3, |r, c, ch| (r * 40 + c * 5 + ch * 2) as f64);
    for (img, name) in [
        (&gray, "g.png"),
        (&gray, "g.pgm"),
        (&rgb, "c.png"),
        (&rgb, "c.ppm"),
    ] {
        let path = dir.path().join(name);
        store(img, &path).unwrap();
        assert_eq!(&load(&path).unwrap(), img, "{name}");
    }
}

#[test]
fn eight_bit_output_rounds_and_clamps() {
    let dir = tempfile::tempdir().unwrap();
    let img = ImageTensor::new(1, 4, 1, vec![-3.0, 10.4, 10.6, 300.0]).unwrap();
    let path = dir.path().join("x.png");
    store(&img, &path).unwrap();
    assert_eq!(load(&path).unwrap().data(), &[0.0, 10.0, 11.0, 255.0]);
}

#[test]
fn htsv_roundtrip_keeps_multiband_values() {
    let dir = tempfile::tempdir().unwrap();
    let cube = ImageTensor::from_fn(4, 5, 7, |r, c, b| {
        r as f64 * 0.5 - c as f64 + b as f64 * 0.25
    });
    let path = dir.path().join("cube.htsv");
    store(&cube, &path).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back.profile(), Profile::Multiband);
    assert_eq!(back.data(), cube.data());
}

#[test]
fn unsupported_inputs_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cube = ImageTensor::zeros(4, 4, 5);
    assert!(matches!(
        store(&cube, &dir.path().join("x.png")),
        Err(Error::Format(_))
    ));
    assert!(matches!(
        store(&cube, &dir.path().join("x.bmp")),
        Err(Error::Format(_))
    ));
    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not an image").unwrap();
    assert!(matches!(load(&junk), Err(Error::Format(_))));
    assert!(matches!(
        load(&dir.path().join("missing.png")),
        Err(Error::Io(_))
    ));
}
