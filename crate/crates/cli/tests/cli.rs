use std::path::Path;
use std::process::{Command, Output};

use tsr_core::shapeio::encode_pgm;
use tsr_core::synth::gallery;

fn tsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsr"))
        .args(args)
        .env("TSR_THREADS", "1")
        .output()
        .expect("run tsr")
}

fn write_gallery(dir: &Path) {
    for s in gallery(&["bone", "star", "cup"], 3, 0.5, 4) {
        std::fs::write(dir.join(format!("{}.pgm", s.id)), encode_pgm(&s)).unwrap();
    }
}

fn build(dir: &Path, index: &Path) -> Output {
    tsr(&[
        "build",
        "--dataset",
        dir.to_str().unwrap(),
        "--out",
        index.to_str().unwrap(),
        "--M",
        "3",
        "--trees",
        "10",
        "--seed",
        "3",
    ])
}

#[test]
fn build_query_benchmark_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_gallery(&data);
    let idx = tmp.path().join("g.idx");
    let out = build(&data, &idx);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // identical inputs give an identical index file
    let idx2 = tmp.path().join("g2.idx");
    assert!(build(&data, &idx2).status.success());
    assert_eq!(std::fs::read(&idx).unwrap(), std::fs::read(&idx2).unwrap());

    let q = data.join("star-1.pgm");
    let out = tsr(&[
        "query",
        idx.to_str().unwrap(),
        q.to_str().unwrap(),
        "--mode",
        "local-only",
        "--top",
        "4",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("1\tstar-1\t"), "{}", lines[1]);

    let out = tsr(&[
        "query",
        idx.to_str().unwrap(),
        q.to_str().unwrap(),
        "--mode",
        "tsr+dp",
    ]);
    assert!(out.status.success());

    let run = |d: &str| {
        tsr(&[
            "benchmark",
            idx.to_str().unwrap(),
            "--dataset",
            data.to_str().unwrap(),
            "--metric",
            "topn",
            "--out",
            tmp.path().join(d).to_str().unwrap(),
        ])
    };
    let (a, b) = (run("r1"), run("r2"));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let topn = String::from_utf8(a.stdout.clone()).unwrap();
    assert!(topn.starts_with("n,count\n1,"));
    assert_eq!(topn.lines().count(), 9);
    assert_eq!(a.stdout, b.stdout);
    for f in [
        "summary.txt",
        "bullseye.csv",
        "topn.csv",
        "pr.csv",
        "queries.csv",
    ] {
        assert_eq!(
            std::fs::read(tmp.path().join("r1").join(f)).unwrap(),
            std::fs::read(tmp.path().join("r2").join(f)).unwrap()
        );
    }

    let out = tsr(&["dump-features", idx.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 10);
    let out = tsr(&[
        "dump-clusters",
        idx.to_str().unwrap(),
        "--query",
        q.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 4);
}

#[test]
fn convert_reads_other_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let shape = &gallery(&["cross"], 1, 0.0, 1)[0];
    let img = image::GrayImage::from_fn(shape.width as u32, shape.height as u32, |x, y| {
        image::Luma([if shape.at(x as usize, y as usize) {
            0
        } else {
            255
        }])
    });
    let bmp = tmp.path().join("cross-1.bmp");
    img.save(&bmp).unwrap();
    let out = tsr(&[
        "convert",
        bmp.to_str().unwrap(),
        "--invert",
        "--out",
        tmp.path().join("pgm").to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let back = tsr_core::shapeio::load_shape(tmp.path().join("pgm/cross-1.pgm"), 128).unwrap();
    assert_eq!(back.grid, shape.grid);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(tsr(&["build", "--bogus"]).status.code(), Some(1));
    assert_eq!(tsr(&[]).status.code(), Some(1));
    let missing = tmp.path().join("none.idx");
    let out = tsr(&["dump-features", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);

    let junk = tmp.path().join("junk.idx");
    std::fs::write(&junk, b"TSRINDEX\x07\0\0\0").unwrap();
    assert_eq!(
        tsr(&["dump-clusters", junk.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_gallery(&data);
    let out = tsr(&[
        "build",
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        tmp.path().join("x.idx").to_str().unwrap(),
        "--M",
        "50",
    ]);
    assert_eq!(out.status.code(), Some(1));
}
