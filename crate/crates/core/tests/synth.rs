use std::fs;

use maga_core::synth::{
    composite, gen_hairline_foreground, make_dataset, read_manifest, read_pgm, read_ppm, read_trimap, trimap_from_alpha,
    write_dataset, HairlineParams, TrimapParams,
};
use maga_core::Tensor;

#[test]
fn cores_reproduce_foreground_and_background_exactly() {
    for p in make_dataset(8, 1, 32, 32).unwrap() {
        assert!(p.composite_error() < 1e-12);
        let plane = 32 * 32;
        for (i, t) in p.trimap.data().iter().enumerate() {
            for c in 0..3 {
                let k = c * plane + i;
                if *t == 1.0 {
                    assert_eq!(p.image.data()[k], p.fg.data()[k]);
                } else if *t == 0.0 {
                    assert_eq!(p.image.data()[k], p.bg.data()[k]);
                }
            }
        }
    }
}

#[test]
fn composite_identities() {
    let pair = &make_dataset(1, 2, 16, 16).unwrap()[0];
    assert_eq!(composite(&pair.fg, &pair.bg, &Tensor::ones(&[1, 16, 16])).unwrap(), pair.fg);
    assert_eq!(composite(&pair.fg, &pair.bg, &Tensor::zeros(&[1, 16, 16])).unwrap(), pair.bg);
}

#[test]
fn trimap_partitions_every_pixel() {
    for p in make_dataset(10, 3, 32, 48).unwrap() {
        let (mut zero, mut half, mut one) = (0, 0, 0);
        for v in p.trimap.data() {
            match *v {
                0.0 => zero += 1,
                0.5 => half += 1,
                1.0 => one += 1,
                other => panic!("trimap value {other}"),
            }
        }
        assert_eq!(zero + half + one, 32 * 48);
        for (t, a) in p.trimap.data().iter().zip(p.alpha.data()) {
            if *t == 1.0 {
                assert_eq!(*a, 1.0);
            }
            if *t == 0.0 {
                assert_eq!(*a, 0.0);
            }
        }
    }
}

#[test]
fn diagonal_stroke_neighborhood_is_unknown() {
    let (h, w) = (20, 24);
    let on = |i: usize, j: usize| i == j;
    let alpha = Tensor::from_fn(&[1, h, w], |k| if on(k / w, k % w) { 1.0 } else { 0.0 });
    let t = trimap_from_alpha(&alpha, &TrimapParams::default()).unwrap();
    for i in 0..h {
        for j in 0..w {
            // any stroke pixel inside the 7x7 window around (i, j)
            let near = (0..h).any(|y| (0..w).any(|x| on(y, x) && y.abs_diff(i) <= 3 && x.abs_diff(j) <= 3));
            let v = t.data()[i * w + j];
            assert_eq!(v, if near { 0.5 } else { 0.0 }, "({i}, {j})");
        }
    }
}

#[test]
fn unknown_fraction_stays_in_range_over_a_hundred_seeds() {
    for seed in 0..100 {
        let p = &make_dataset(1, seed, 32, 32).unwrap()[0];
        let f = p.unknown_fraction();
        assert!(f > 0.0 && f < 0.6, "seed {seed}: {f}");
    }
}

#[test]
fn strands_have_fractional_edges() {
    let (_, alpha) = gen_hairline_foreground(0, 32, 32, 1, &HairlineParams::default()).unwrap();
    assert!(alpha.data().iter().any(|a| *a > 0.0 && *a < 1.0));
    assert!(alpha.data().iter().any(|a| *a == 1.0));
    assert!(gen_hairline_foreground(0, 32, 32, 0, &HairlineParams::default()).is_err());
    let again = gen_hairline_foreground(0, 32, 32, 1, &HairlineParams::default()).unwrap().1;
    assert_eq!(alpha, again);
}

#[test]
fn written_dataset_has_files_manifest_and_stable_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pairs = make_dataset(4, 7, 32, 32).unwrap();
    let manifest = write_dataset(a.path(), &pairs).unwrap();
    write_dataset(b.path(), &make_dataset(4, 7, 32, 32).unwrap()).unwrap();

    let mut names: Vec<String> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 13);
    assert!(names.contains(&"manifest.txt".to_string()));
    for n in &names {
        assert_eq!(fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap(), "{n}");
    }

    let entries = read_manifest(&manifest).unwrap();
    assert_eq!(entries.len(), 4);
    for (e, p) in entries.iter().zip(&pairs) {
        assert_eq!(read_pgm(&e.alpha).unwrap(), p.alpha);
        assert_eq!(read_trimap(&e.trimap).unwrap(), p.trimap);
        let img = read_ppm(&e.image).unwrap();
        assert!(img.max_abs_diff(&p.image) <= 0.5 / 255.0 + 1e-12);
    }
}
