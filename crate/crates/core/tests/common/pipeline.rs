use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use umforge::io::{write_hu_png, write_segmask, HuSidecar};
use umforge::metrics::FeatureSet;
use umforge::{GrayImage, SegMask};

pub fn write_features(dir: &Path, sets: &[FeatureSet]) {
    for f in sets {
        f.write(&dir.join(format!("{}_{}.umft", f.scale, f.task))).unwrap();
    }
}

/// Axial body slice: soft tissue disc with two low-density lungs whose size
/// varies with `z`.
pub fn body_slice(n: usize, z: usize) -> GrayImage {
    let c = n as f64 / 2.0;
    let lung_r = n as f64 * (0.08 + 0.015 * (z % 7) as f64);
    let px = (0..n * n)
        .map(|i| {
            let (x, y) = ((i % n) as f64 + 0.5, (i / n) as f64 + 0.5);
            let body = ((x - c).powi(2) + (y - c).powi(2)).sqrt() < 0.45 * n as f64;
            let lung = [c - 0.2 * n as f64, c + 0.2 * n as f64]
                .iter()
                .any(|&lx| ((x - lx).powi(2) + (y - c).powi(2)).sqrt() < lung_r);
            match (body, lung) {
                (_, true) if body => -820.0 + (z as f32) * 3.0,
                (true, _) => 40.0,
                _ => -1000.0,
            }
        })
        .collect();
    GrayImage::from_hu(n, n, px).unwrap()
}

pub fn lung_mask(slice: &GrayImage) -> SegMask {
    let labels = slice.pixels().iter().map(|&v| u8::from(v < -500.0 && v > -950.0)).collect();
    SegMask::new(slice.width(), slice.height(), labels).unwrap()
}

/// Series manifest, slices and a few masks under `dir`.
pub fn write_corpus(dir: &Path) {
    let mut manifest = Vec::new();
    for (p, with_masks) in [("p001", true), ("p002", false), ("p003", true)] {
        let mut slices = Vec::new();
        let mut masks = Vec::new();
        for z in 0..10 {
            let s = body_slice(48, z + p.len() * 3);
            let rel = format!("ct/{p}/{z:03}.png");
            write_hu_png(&dir.join(&rel), &s, HuSidecar::default()).unwrap();
            slices.push(rel);
            if with_masks {
                let rel = format!("ct/{p}/{z:03}_lung.png");
                write_segmask(&dir.join(&rel), &lung_mask(&s)).unwrap();
                masks.push(rel);
            }
        }
        let mut entry = serde_json::json!({"patient_id": p, "slice_paths": slices});
        if with_masks {
            entry["lung_mask_paths"] = serde_json::json!(masks);
        }
        manifest.push(entry);
    }
    std::fs::write(dir.join("series.json"), serde_json::to_vec_pretty(&manifest).unwrap()).unwrap();
    std::fs::create_dir_all(dir.join("feats/real")).unwrap();
    std::fs::create_dir_all(dir.join("feats/synth")).unwrap();
    write_features(&dir.join("feats/real"), &super::feature_grid(1, "real", 40, 6));
    write_features(&dir.join("feats/synth"), &super::feature_grid(2, "synth", 40, 6));
    std::fs::write(
        dir.join("sweep.json"),
        r#"[{"patch": "ellipse:30,30,6,4", "values": [0, 100, 250], "name": "ggo"},
            {"patch": "polygon:5,5,20,5,12,18", "values": [50]}]"#,
    )
    .unwrap();
}

pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn run_pipeline(dir: &Path, threads: Option<&str>) {
    let steps: [&[&str]; 8] = [
        &["--seed", "42", "--manifest", "m/01.json", "prep", "montage", "--series", "series.json", "--slice-size", "48"],
        &["--manifest", "m/02.json", "umask", "gen", "--input", "montage", "--superpixels", "64", "--labels"],
        &["--manifest", "m/03.json", "edit", "sweep", "--mask", "umask/p001.png", "--batch", "sweep.json"],
        &["--manifest", "m/04.json", "eval", "mmfid", "--real", "feats/real", "--synth", "feats/synth", "--out", "grids/fid.json"],
        &["--manifest", "m/05.json", "eval", "mmfid", "--real", "feats/real", "--synth", "feats/real", "--out", "grids/self.json"],
        &["--manifest", "m/06.json", "eval", "mmstd", "--features", "feats/synth", "--out", "grids/std.json"],
        &["--manifest", "m/07.json", "eval", "avgsize", "--input", "montage", "--average-out", "avg.png", "--out", "avg.json"],
        &["--manifest", "m/08.json", "report", "--grid", "grids/fid.json", "--grid", "grids/self.json", "--normalize", "--out", "report.txt"],
    ];
    for args in steps {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_umforge"));
        cmd.arg("--workdir").arg(dir).args(args).env_remove("UMFORGE_THREADS");
        match threads {
            Some(t) if t.starts_with("env=") => {
                cmd.env("UMFORGE_THREADS", &t[4..]);
            }
            Some(t) => {
                cmd.args(["--threads", t]);
            }
            None => {}
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
