//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use umforge::metrics::{
    dice, frechet_distance, gaussian_summary, kl_divergence, kl_hu_histogram, mm_fid, mm_std, normalize_grids,
    wilcoxon_signed_rank, EvalGrid, FeatureSet, GaussianSummary, GridKind, Scale, Task, WilcoxonMethod,
};
use umforge::umask::{
    assign_mean_intensity, boundary_recall, generate_unsupervised_mask, quantize_superclusters, slic, SlicParams,
};
use umforge::{Error, SegMask};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pseudocode_conformance() -> Check {
    let img = common::quadrant_phantom(1024);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let mask = pool
        .install(|| generate_unsupervised_mask(&img, &SlicParams::new(512), 50))
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(mask.supercluster_values() == [0, 50, 150, 250], || {
        format!("supercluster values {:?}", mask.supercluster_values())
    })?;
    ensure(elapsed < Duration::from_secs(2), || format!("took {elapsed:.2?} on one thread"))?;
    Ok(format!("values {{0,50,150,250}} in {elapsed:.2?} on one thread"))
}

fn gauss(mean: &[f64], var: &[f64]) -> GaussianSummary {
    GaussianSummary {
        mean: DVector::from_column_slice(mean),
        cov: DMatrix::from_diagonal(&DVector::from_column_slice(var)),
        n: 2,
    }
}

fn frechet_oracles() -> Check {
    let fd = |a: &GaussianSummary, b: &GaussianSummary| frechet_distance(a, b).map(|d| d.value).map_err(|e| e.to_string());

    // 1-D: (mu_a - mu_b)^2 + (sigma_a - sigma_b)^2.
    let one_d = fd(&gauss(&[2.0], &[9.0]), &gauss(&[-1.0], &[0.25]))?;
    ensure((one_d - (9.0 + 2.5f64.powi(2))).abs() <= 1e-9, || format!("1-D value {one_d}"))?;
    let unit = fd(&gauss(&[0.0], &[1.0]), &gauss(&[1.0], &[1.0]))?;
    ensure((unit - 1.0).abs() <= 1e-9, || format!("1-D unit shift {unit}"))?;
    let diag = fd(&gauss(&[0.0, 0.0], &[1.0, 1.0]), &gauss(&[1.0, 1.0], &[4.0, 4.0]))?;
    ensure((diag - 4.0).abs() <= 1e-9, || format!("diagonal 2-D value {diag}"))?;

    let mut rng = common::rng(2024);
    let mut worst: f64 = 0.0;
    for d in 1..=8 {
        let (ma, ca) = common::random_gaussian(&mut rng, d);
        let (mb, cb) = common::random_gaussian(&mut rng, d);
        let truth = common::frechet_by_eigenvalues(&ma, &ca, &mb, &cb);
        let n = 100_000;
        let fa = FeatureSet::new(n, d, common::sample_gaussian(&mut rng, &ma, &ca, n), Scale::S128, Task::Sex, "a")
            .map_err(|e| e.to_string())?;
        let fb = FeatureSet::new(n, d, common::sample_gaussian(&mut rng, &mb, &cb, n), Scale::S128, Task::Sex, "b")
            .map_err(|e| e.to_string())?;
        let est = fd(&gaussian_summary(&fa).unwrap(), &gaussian_summary(&fb).unwrap())?;
        let rel = (est - truth).abs() / truth;
        worst = worst.max(rel);
        ensure(rel <= 0.05, || format!("Monte-Carlo D={d}: {est} vs {truth} ({:.2}%)", rel * 100.0))?;
    }

    let real = common::feature_grid(7, "real", 200, 16);
    let grid = mm_fid(&real, &real).map_err(|e| e.to_string())?;
    let max_cell = grid.values().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(max_cell < 1e-6, || format!("identity grid cell {max_cell}"))?;
    Ok(format!(
        "closed forms exact, Monte-Carlo worst {:.2}% (D<=8, 1e5 samples), identity grid max {max_cell:.1e}",
        worst * 100.0
    ))
}

fn grid_contract() -> Check {
    let real = common::feature_grid(1, "real", 50, 6);
    let synth = common::feature_grid(2, "synth", 50, 6);
    let fid = mm_fid(&real, &synth).map_err(|e| e.to_string())?;
    let std = mm_std(&synth).map_err(|e| e.to_string())?;
    for g in [&fid, &std] {
        ensure(g.scales == Scale::ALL && g.tasks == Task::ALL, || "axes differ from 4 scales x 4 tasks".into())?;
        ensure(g.cells.len() == 4 && g.cells.iter().all(|r| r.len() == 4), || "not 4x4".into())?;
        g.validate().map_err(|e| e.to_string())?;
    }
    ensure(
        Scale::ALL.iter().map(|s| s.pixels()).collect::<Vec<_>>() == [128, 256, 512, 1024],
        || "scale order".into(),
    )?;
    ensure(
        Task::ALL.iter().map(|t| t.id()).collect::<Vec<_>>() == ["imagenet", "sex", "age", "real-vs-synth"],
        || "task order".into(),
    )?;
    let audit = std.per_dimension_std.as_ref().ok_or("MM-STD lacks per-dimension values")?;
    ensure(audit.iter().flatten().all(|v| v.len() == 6), || "per-dimension std shape".into())?;
    // Each cell is computed from its own feature files.
    for s in Scale::ALL {
        for t in Task::ALL {
            let a = real.iter().find(|f| f.scale == s && f.task == t).unwrap();
            let b = synth.iter().find(|f| f.scale == s && f.task == t).unwrap();
            let direct = frechet_distance(&gaussian_summary(a).unwrap(), &gaussian_summary(b).unwrap())
                .unwrap()
                .value;
            ensure((fid.cell(s, t) - direct).abs() <= 1e-12 * direct.max(1.0), || format!("cell {s}/{t}"))?;
        }
    }
    let partial: Vec<FeatureSet> = real.iter().skip(1).cloned().collect();
    match mm_fid(&partial, &synth) {
        Err(Error::IncompleteGrid { missing }) if missing == ["real 128/imagenet"] => {}
        other => return Err(format!("missing cell not reported: {other:?}")),
    }

    let mut rng = common::rng(99);
    for _ in 0..300 {
        let methods = rng.random_range(2..6usize);
        let grids: Vec<EvalGrid> = (0..methods)
            .map(|_| {
                let mut cells = [[0.0; 4]; 4];
                for c in cells.iter_mut().flatten() {
                    // Small integer range makes ties common.
                    *c = f64::from(rng.random_range(0..6u32)) * 1.5;
                }
                EvalGrid::new(GridKind::Fid, cells)
            })
            .collect();
        let norm = normalize_grids(&grids).map_err(|e| e.to_string())?;
        for i in 0..4 {
            for j in 0..4 {
                for a in 0..methods {
                    let v = norm[a].cells[i][j];
                    ensure((0.0..=1.0).contains(&v), || format!("normalized value {v}"))?;
                    for b in 0..methods {
                        let raw = grids[a].cells[i][j].partial_cmp(&grids[b].cells[i][j]);
                        ensure(raw == v.partial_cmp(&norm[b].cells[i][j]), || "ranking changed".into())?;
                    }
                }
            }
        }
    }
    Ok("4x4 layout, per-cell provenance, incomplete-grid error, normalization over 300 method sets".into())
}

fn quantization_properties() -> Check {
    let mut rng = common::rng(1);
    let mut merges = 0usize;
    for i in 0..1000 {
        let (w, h) = (rng.random_range(8..48usize), rng.random_range(8..48usize));
        let img = common::random_image(&mut rng, w, h);
        let m = rng.random_range(1..=(w * h).min(128));
        let labeling = slic(&img, &SlicParams::new(m)).map_err(|e| e.to_string())?;
        let mean = assign_mean_intensity(&labeling, &img).map_err(|e| e.to_string())?;
        let t1 = rng.random_range(1..=127u32);
        let t2 = t1 * rng.random_range(2..=255 / t1);

        let q1 = quantize_superclusters(&mean, t1).map_err(|e| e.to_string())?;
        let again = quantize_superclusters(q1.values(), t1).map_err(|e| e.to_string())?;
        ensure(again.bytes() == q1.bytes(), || format!("image {i}: quantization not idempotent at t={t1}"))?;

        let q2 = quantize_superclusters(&mean, t2).map_err(|e| e.to_string())?;
        let mut parent = [None; 256];
        for (a, b) in q1.bytes().into_iter().zip(q2.bytes()) {
            let slot = &mut parent[usize::from(a)];
            ensure(slot.is_none_or(|p| p == b), || {
                format!("image {i}: t={t1} supercluster {a} split by t={t2}")
            })?;
            *slot = Some(b);
        }
        let (c1, c2) = (q1.supercluster_values().len(), q2.supercluster_values().len());
        ensure(c2 <= c1, || format!("image {i}: {c2} superclusters at t={t2} vs {c1} at t={t1}"))?;
        merges += usize::from(c2 < c1);
    }
    Ok(format!("1000 images; coarser t merged superclusters in {merges}"))
}

fn slic_partition() -> Check {
    let mut rng = common::rng(2);
    for i in 0..500 {
        let (w, h) = (rng.random_range(4..64usize), rng.random_range(4..64usize));
        let img = common::random_image(&mut rng, w, h);
        let m = rng.random_range(1..=(w * h).min(256));
        let l = slic(&img, &SlicParams::new(m)).map_err(|e| format!("image {i}: {e}"))?;
        let sizes = l.sizes();
        ensure(l.labels().len() == w * h && sizes.iter().sum::<usize>() == w * h, || format!("image {i}: coverage"))?;
        ensure(sizes.iter().all(|&s| s > 0), || format!("image {i}: unused label"))?;
        ensure(l.is_connected(), || format!("image {i}: disconnected superpixel"))?;
        ensure(l.count() <= m, || format!("image {i}: K={} > M={m}", l.count()))?;
    }
    let mut recalls = Vec::new();
    for (n, m) in [(64, 4), (256, 64), (256, 512)] {
        let l = slic(&common::quadrant_phantom(n), &SlicParams::new(m)).map_err(|e| e.to_string())?;
        let r = boundary_recall(&l, &common::quadrant_labels(n), 0).map_err(|e| e.to_string())?;
        ensure(r == 1.0, || format!("quadrant boundary recall {r} at {n}^2, M={m}"))?;
        recalls.push(format!("M={m}"));
    }
    Ok(format!("500 images covered, connected, K<=M; quadrant recall 1.0 ({})", recalls.join(", ")))
}

fn statistics_oracles() -> Check {
    let mut rng = common::rng(3);
    let mut fixtures = 0;
    for n in 5..=12 {
        for _ in 0..60 {
            let a: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u32))).collect();
            let b: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u32))).collect();
            let nonzero = a.iter().zip(&b).filter(|(x, y)| x != y).count();
            if nonzero < 5 {
                continue;
            }
            let r = wilcoxon_signed_rank(&a, &b).map_err(|e| e.to_string())?;
            let (ge, le) = common::brute_force_wilcoxon(&a, &b);
            ensure(r.method == WilcoxonMethod::Exact, || "expected the exact path".into())?;
            ensure((r.p_greater - ge).abs() < 1e-12 && (r.p_less - le).abs() < 1e-12, || {
                format!("{a:?} vs {b:?}: ({}, {}) != ({ge}, {le})", r.p_greater, r.p_less)
            })?;
            fixtures += 1;
        }
    }
    let r = wilcoxon_signed_rank(&[3.0, 4.0, 5.0, 6.0, 7.0], &[0.0; 5]).map_err(|e| e.to_string())?;
    ensure(r.p_greater == 1.0 / 32.0, || format!("one-sided all-positive p = {}", r.p_greater))?;

    let a = SegMask::new(4, 2, vec![2, 2, 2, 0, 0, 0, 2, 0]).unwrap();
    let b = SegMask::new(4, 2, vec![0, 2, 2, 2, 0, 0, 2, 2]).unwrap();
    // |A| = 4, |B| = 5, |A n B| = 3: 6/9.
    let d = dice(&a, &b, 2).map_err(|e| e.to_string())?.value;
    ensure((d - 2.0 / 3.0).abs() <= 1e-9, || format!("Dice {d}"))?;

    let expected = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
    let kl = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).map_err(|e| e.to_string())?;
    ensure((kl - expected).abs() <= 1e-6, || format!("KL {kl} vs {expected}"))?;
    let kl = kl_hu_histogram(&[-1000.0, -100.0], &[-1000.0, -100.0, -100.0, -100.0], 800.0, (-1500.0, 100.0))
        .map_err(|e| e.to_string())?;
    ensure((kl - expected).abs() <= 1e-6, || format!("HU histogram KL {kl} vs {expected}"))?;
    Ok(format!("{fixtures} Wilcoxon fixtures (n<=12) match enumeration; 1/32 case; Dice and KL fixtures"))
}

fn cli_determinism() -> Check {
    let base = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut snaps = Vec::new();
    for threads in ["1", "8"] {
        for rerun in 0..2 {
            let dir = base.path().join(format!("t{threads}-{rerun}"));
            common::pipeline::write_corpus(&dir);
            common::pipeline::run_pipeline(&dir, Some(threads));
            snaps.push(common::pipeline::snapshot(&dir));
        }
    }
    let files = snaps[0].len();
    for s in &snaps[1..] {
        ensure(s.keys().eq(snaps[0].keys()), || "different file sets".into())?;
        for (k, v) in s {
            ensure(v == &snaps[0][k], || format!("{} differs", Path::new(k).display()))?;
        }
    }
    Ok(format!("{files} artifacts bit-identical across reruns at 1 and 8 threads"))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("unsupervised mask on the quadrant phantom", pseudocode_conformance),
        ("Frechet distance oracles", frechet_oracles),
        ("evaluation grid contract", grid_contract),
        ("quantization properties", quantization_properties),
        ("SLIC partition suite", slic_partition),
        ("statistics oracles", statistics_oracles),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
