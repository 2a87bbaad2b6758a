use kscope::corruption::*;
use kscope::detector::*;
use kscope::phantom::*;

fn detector_run(seed: u64, grid: usize, train_slices: (usize, usize), test_slices: (usize, usize), epochs: usize) -> (f64, f64, f64, usize) {
    let cfg = PhantomConfig { grid, coils: 1, seed: seed * 1000 + 1, ..PhantomConfig::default() };
    let train_ds = make_phantom_dataset(&cfg, train_slices.0, train_slices.1, None).unwrap();
    let test_cfg = PhantomConfig { seed: seed * 1000 + 2, ..cfg.clone() };
    let test_ds = make_phantom_dataset(&test_cfg, test_slices.0, test_slices.1, None).unwrap();
    let ccfg = CorruptionConfig { fraction: 0.3, ..CorruptionConfig::default() };
    let mcfg = MaskConfig { min_lines: 16, acs_fraction: 0.08 };
    let (train, _) = make_corruption_dataset(&train_ds, &mcfg, &ccfg, seed * 1000 + 3).unwrap();
    let (test, _) = make_corruption_dataset(&test_ds, &mcfg, &ccfg, seed * 1000 + 4).unwrap();
    let n_pairs: usize = train.slices.iter().map(|s| s.lines.len() * s.acs[0].len()).sum();
    let hyper = DetectorHyper { epochs, seed: seed * 1000 + 5, ..Default::default() };
    let (net, _) = detector_train(&train, None, &hyper).unwrap();
    let (scores, labels) = line_scores(&net, &test).unwrap();
    let report = evaluate_classifier(&scores, &labels, 0.1).unwrap();
    // baseline on the same held-out set
    let mut b_scores = Vec::new();
    for sl in &test.slices {
        for line in &sl.lines {
            b_scores.push(baseline_score(&line.k_h, &sl.acs[line.coil], &line.k_h_nominal).unwrap());
        }
    }
    let b = evaluate_classifier(&b_scores, &labels, 1.5).unwrap();
    (report.auroc, report.f2, b.auroc, n_pairs)
}

#[test]
fn probe_detector() {
    for seed in [1u64, 2, 3] {
        let t0 = std::time::Instant::now();
        let (auroc, f2, b_auroc, pairs) = detector_run(seed, 64, (8, 6), (3, 6), 16);
        println!("seed {seed}: pairs={pairs} auroc={auroc:.3} f2@0.1={f2:.3} baseline={b_auroc:.3} ({:.0?})", t0.elapsed());
    }
}
