//! End-to-end acceptance checks. Each test prints a single pass/fail line;
//! run with `--nocapture` to see them.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use relubits::attacks::{fgsm, AttackConfig};
use relubits::bits::{extract_bits, hamming, BitVector, LayerLayout};
use relubits::data::{
    load_idx, split, write_idx, DatasetMeta, LabeledDataset, Normalization, SplitSpec,
};
use relubits::detector::{build_detector, sweep, uniform_grid, Thresholds};
use relubits::error::Error;
use relubits::geometry::{grid_census, region_of, segment_walk};
use relubits::linalg::Matrix;
use relubits::net::{cross_entropy, NetworkSpec, TrainConfig};
use relubits::stats::{ActivationDataset, Tag};

fn report(name: &str, ok: bool) {
    println!("{name}: {}", if ok { "pass" } else { "fail" });
    assert!(ok, "{name} failed");
}

#[test]
fn a1_input_gradient_matches_finite_differences() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0usize;
    let mut max_rel = 0.0f64;
    while checked < 100 {
        let net = NetworkSpec::random(vec![4, 8, 6, 3], rng.gen(), 1.5).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let trace = net.forward(&x).unwrap();
        // stay away from ReLU kinks so the loss is differentiable at x
        if trace
            .pre_activations
            .iter()
            .any(|layer| layer.iter().any(|z| z.abs() <= 1e-3))
        {
            continue;
        }
        let label = rng.gen_range(0..3);
        let g = net.input_gradient(&x, label).unwrap();
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += 1e-5;
            xm[k] -= 1e-5;
            let fd = (cross_entropy(&net.forward(&xp).unwrap().logits, label).unwrap()
                - cross_entropy(&net.forward(&xm).unwrap().logits, label).unwrap())
                / 2e-5;
            let rel = (g[k] - fd).abs() / fd.abs().max(1e-6);
            max_rel = max_rel.max(rel);
        }
        checked += 1;
    }
    let elapsed = t0.elapsed();
    report(
        "A1 gradient vs finite differences",
        max_rel <= 1e-4 && elapsed.as_secs_f64() < 10.0,
    );
}

#[test]
fn a2_bit_extraction_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..1000 {
        let dims = vec![3, rng.gen_range(1..20), rng.gen_range(1..20), 4];
        let net = NetworkSpec::random(dims, rng.gen(), 2.0).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let trace = net.forward(&x).unwrap();
        let layout = Arc::new(LayerLayout::new(net.hidden_widths()).unwrap());
        let bits = extract_bits(&trace, &layout).unwrap();
        for (l, layer) in trace.post_activations.iter().enumerate() {
            for (j, &post) in layer.iter().enumerate() {
                let k = layout.offsets()[l] + j;
                let pre = trace.pre_activations[l][j];
                // strict positivity and the ReLU masking identity, exactly
                assert_eq!(bits.get(k), post > 0.0);
                assert_eq!(post, pre.max(0.0));
            }
        }
    }
    report("A2 bit extraction exactness (1000 traces)", true);
}

/// Draws a synthetic activation dataset whose per-node frequencies are
/// themselves random, giving diverse threshold behavior.
fn random_bit_data(
    layout: &Arc<LayerLayout>,
    n: usize,
    tag: Tag,
    rng: &mut ChaCha8Rng,
) -> ActivationDataset {
    let probs: Vec<f64> = (0..layout.total()).map(|_| rng.gen::<f64>()).collect();
    let rows: Vec<BitVector> = (0..n)
        .map(|_| {
            let mut v = BitVector::zeros(Arc::clone(layout));
            for (k, &p) in probs.iter().enumerate() {
                v.set(k, rng.gen::<f64>() < p);
            }
            v
        })
        .collect();
    ActivationDataset::new(rows, vec![tag; n], vec![0; n], Arc::clone(layout)).unwrap()
}

fn frequencies(ds: &ActivationDataset) -> Vec<f64> {
    let n = ds.len() as f64;
    (0..ds.layout().total())
        .map(|k| ds.rows().iter().filter(|r| r.get(k)).count() as f64 / n)
        .collect()
}

#[test]
fn a3_detector_matches_naive_threshold_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let layout = Arc::new(LayerLayout::new(vec![40, 24]).unwrap());
    for _ in 0..50 {
        let orig = random_bit_data(&layout, 200, Tag::Original, &mut rng);
        let adv = random_bit_data(&layout, 200, Tag::Adversarial, &mut rng);
        let p = frequencies(&orig);
        let q = frequencies(&adv);
        for &lambda in &[0.5, 0.6, 0.77] {
            // written straight from the selection rule definitions
            let mut c_a: Vec<usize> = (0..layout.total())
                .filter(|&k| p[k] >= lambda && 1.0 - q[k] >= lambda)
                .collect();
            let mut c_b: Vec<usize> = (0..layout.total())
                .filter(|&k| q[k] >= lambda && 1.0 - p[k] >= lambda)
                .collect();
            let shared: Vec<usize> = c_a.iter().copied().filter(|k| c_b.contains(k)).collect();
            c_a.retain(|k| !shared.contains(k));
            c_b.retain(|k| !shared.contains(k));

            match build_detector(&orig, &adv, &Thresholds::uniform(lambda)) {
                Ok(model) => {
                    assert_eq!(model.c_a(), &c_a[..], "lambda {lambda}");
                    assert_eq!(model.c_b(), &c_b[..], "lambda {lambda}");
                    let mut expect_vec = vec![true; c_a.len()];
                    expect_vec.extend(std::iter::repeat_n(false, c_b.len()));
                    assert_eq!(model.classifier_vector(), expect_vec);
                }
                Err(Error::EmptyDiscriminator) => {
                    assert!(c_a.is_empty() && c_b.is_empty(), "lambda {lambda}");
                }
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
    }
    report("A3 threshold selection vs naive rule (50 matrices x 3 lambdas)", true);
}

#[test]
fn a4_planted_discriminator_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let layout = Arc::new(LayerLayout::new(vec![64]).unwrap());
    let planted = [3usize, 17, 31, 46, 60];
    let n = 500;
    let mut make = |on: bool, tag: Tag| {
        let rows: Vec<BitVector> = (0..n)
            .map(|_| {
                let mut v = BitVector::zeros(Arc::clone(&layout));
                for k in 0..64 {
                    if planted.contains(&k) {
                        v.set(k, on);
                    } else {
                        v.set(k, rng.gen::<bool>());
                    }
                }
                v
            })
            .collect();
        ActivationDataset::new(rows, vec![tag; n], vec![0; n], Arc::clone(&layout)).unwrap()
    };
    let orig = make(true, Tag::Original);
    let adv = make(false, Tag::Adversarial);
    let model = build_detector(&orig, &adv, &Thresholds::uniform(0.99)).unwrap();
    let exact = model.c_a() == planted && model.c_b().is_empty();
    let eval = model.evaluate(&orig, &adv).unwrap();
    report(
        "A4 planted discriminator recovery at lambda 0.99",
        exact && eval.accuracy == 1.0,
    );
}

#[test]
fn a5_selected_bits_shrink_as_lambda_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let layout = Arc::new(LayerLayout::new(vec![48, 16]).unwrap());
    let mut ok = true;
    for _ in 0..10 {
        let orig = random_bit_data(&layout, 300, Tag::Original, &mut rng);
        let adv = random_bit_data(&layout, 300, Tag::Adversarial, &mut rng);
        let p = frequencies(&orig);
        let q = frequencies(&adv);

        // raw selected-set sizes, before shared indices are removed: these
        // are non-increasing on any grid because each membership test is a
        // `>=` against lambda
        let raw_size = |lambda: f64| -> usize {
            let a = (0..layout.total())
                .filter(|&k| p[k] >= lambda && 1.0 - q[k] >= lambda)
                .count();
            let b = (0..layout.total())
                .filter(|&k| q[k] >= lambda && 1.0 - p[k] >= lambda)
                .count();
            a + b
        };
        let grid = uniform_grid(0.2, 1.0, 17);
        for w in grid.windows(2) {
            ok &= raw_size(w[0]) >= raw_size(w[1]);
        }

        // fitted models: above 0.5 no index can satisfy both directions, so
        // shared-index removal is a no-op and the count stays monotone
        let grid = uniform_grid(0.505, 0.995, 15);
        let counts: Vec<usize> = grid
            .iter()
            .map(
                |&l| match build_detector(&orig, &adv, &Thresholds::uniform(l)) {
                    Ok(m) => m.n_bits(),
                    Err(Error::EmptyDiscriminator) => 0,
                    Err(e) => panic!("unexpected error: {e}"),
                },
            )
            .collect();
        for w in counts.windows(2) {
            ok &= w[0] >= w[1];
        }
    }
    report("A5 selected bit count non-increasing in lambda", ok);
}

/// Synthetic digit-like images: 28x28, ten classes with sparse "stroke"
/// prototypes, pixel noise, and a small fraction of corrupted labels so the
/// trained classifier keeps a spread softmax.
fn synth_digits(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let protos: Vec<Vec<f64>> = (0..10)
        .map(|_| {
            (0..784)
                .map(|_| if rng.gen::<f64>() < 0.10 { 0.30 } else { 0.0 })
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 10;
        xs.push(
            protos[c]
                .iter()
                .map(|&p| {
                    let v: f64 = p + noise.sample(&mut rng);
                    ((v.clamp(0.0, 1.0) * 255.0).round()) / 255.0
                })
                .collect(),
        );
        let label = if rng.gen::<f64>() < 0.08 {
            (c + rng.gen_range(1..10)) % 10
        } else {
            c
        };
        ys.push(label);
    }
    (xs, ys)
}

#[test]
fn a6_end_to_end_detection_pipeline() {
    let t0 = Instant::now();
    let (xs, ys) = synth_digits(10_000, 1234);
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("images.idx");
    let lab = dir.path().join("labels.idx");
    let meta = DatasetMeta {
        source: "synthetic".into(),
        normalization: Normalization::None,
        seed: 1234,
    };
    let full = LabeledDataset::new(xs, ys, meta).unwrap();
    write_idx(&full, 28, 28, &img, &lab).unwrap();
    let ds = load_idx(&img, &lab).unwrap();
    let (tr, va, te) = split(&ds, &SplitSpec::new(0.8, 0.1, 0.1, 77).unwrap()).unwrap();
    assert_eq!((tr.len(), va.len(), te.len()), (8000, 1000, 1000));

    let net = NetworkSpec::random(vec![784, 64, 32, 10], 9, 0.15).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        learning_rate: 0.05,
        batch_size: 32,
        seed: 9,
        weight_init_scale: 1.0,
    };
    let net = net.train(&tr.features, &tr.labels, &cfg).unwrap().net;

    let accuracy = |xs: &[Vec<f64>], ys: &[usize]| -> f64 {
        let hits = xs
            .iter()
            .zip(ys)
            .filter(|(x, &y)| net.predict(x).unwrap() == y)
            .count();
        hits as f64 / xs.len() as f64
    };
    let clean_acc = accuracy(&te.features, &te.labels);

    let atk = AttackConfig::fgsm(0.1);
    let attack_all = |xs: &[Vec<f64>], ys: &[usize]| -> Vec<Vec<f64>> {
        xs.iter()
            .zip(ys)
            .map(|(x, &y)| fgsm(&net, x, y, &atk).unwrap())
            .collect()
    };
    let adv_te = attack_all(&te.features, &te.labels);
    let adv_acc = accuracy(&adv_te, &te.labels);

    let layout = Arc::new(LayerLayout::new(net.hidden_widths()).unwrap());
    let as_bits = |xs: &[Vec<f64>], ys: &[usize], tag: Tag| -> ActivationDataset {
        let rows: Vec<BitVector> = xs
            .iter()
            .map(|x| extract_bits(&net.forward(x).unwrap(), &layout).unwrap())
            .collect();
        ActivationDataset::new(rows, vec![tag; xs.len()], ys.to_vec(), Arc::clone(&layout))
            .unwrap()
    };
    let adv_tr = attack_all(&tr.features, &tr.labels);
    let adv_va = attack_all(&va.features, &va.labels);
    let tr_o = as_bits(&tr.features, &tr.labels, Tag::Original);
    let tr_a = as_bits(&adv_tr, &tr.labels, Tag::Adversarial);
    let va_o = as_bits(&va.features, &va.labels, Tag::Original);
    let va_a = as_bits(&adv_va, &va.labels, Tag::Adversarial);
    let te_o = as_bits(&te.features, &te.labels, Tag::Original);
    let te_a = as_bits(&adv_te, &te.labels, Tag::Adversarial);

    let grid = uniform_grid(0.20, 0.77, 20);
    let result = sweep(&tr_o, &tr_a, &va_o, &va_a, &grid).unwrap();
    let eval = result.selected_model.evaluate(&te_o, &te_a).unwrap();
    let elapsed = t0.elapsed();
    println!(
        "A6 detail: clean {:.4}, attacked {:.4}, detection {:.4} \
         (tp {:.3}, tn {:.3}, lambda {:.3}, {} bits, {:.1}s)",
        clean_acc,
        adv_acc,
        eval.accuracy,
        eval.tp_rate,
        eval.tn_rate,
        result.selected_lambda,
        eval.n_bits,
        elapsed.as_secs_f64()
    );
    // regression fixture from the first verified run of this seeded pipeline
    assert!((clean_acc - 0.9130).abs() < 1e-9, "clean accuracy drifted: {clean_acc}");
    assert!((eval.accuracy - 0.7990).abs() < 1e-9, "detection accuracy drifted: {}", eval.accuracy);
    report(
        "A6 end-to-end pipeline (accuracy, attack, detection, runtime)",
        clean_acc >= 0.90
            && adv_acc < 0.30
            && eval.accuracy >= 0.70
            && elapsed.as_secs_f64() < 300.0,
    );
}

#[test]
fn a7_segment_walk_flip_count_bounds_hamming_distance() {
    let net = NetworkSpec::random(vec![2, 16, 16, 2], 707, 1.5).unwrap();
    let layout = Arc::new(LayerLayout::new(net.hidden_widths()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(708);
    let mut ok = true;
    for _ in 0..100 {
        let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let walk = segment_walk(&net, &a, &b, 1e-4).unwrap();
        let ra = region_of(&net, &layout, &a).unwrap();
        let rb = region_of(&net, &layout, &b).unwrap();
        let dist = hamming(&ra.bits, &rb.bits).unwrap();
        ok &= walk.total_flips() >= dist;
    }
    report("A7 walk flip count >= endpoint Hamming distance (100 pairs)", ok);
}

#[test]
fn a8_three_line_arrangement_has_seven_regions() {
    let w = Matrix::from_rows(vec![
        vec![1.0, 0.17],
        vec![0.13, 1.0],
        vec![1.0, -1.0],
    ]);
    let net = NetworkSpec::new(
        vec![2, 3, 2],
        vec![w, Matrix::zeros(2, 3)],
        vec![vec![0.071, -0.113, 0.157], vec![0.0; 2]],
        0,
    )
    .unwrap();
    let census = grid_census(&net, -2.0, 2.0, 8).unwrap();
    report("A8 census of 3-line arrangement finds 7 regions", census.len() == 7);
}

#[test]
fn a9_hamming_axioms_and_packing_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut ok = true;
    for _ in 0..1000 {
        let n_layers = rng.gen_range(1..4);
        let widths: Vec<usize> = (0..n_layers).map(|_| rng.gen_range(1..64)).collect();
        let layout = Arc::new(LayerLayout::new(widths).unwrap());
        let random_vec = |rng: &mut ChaCha8Rng| {
            let mut v = BitVector::zeros(Arc::clone(&layout));
            for k in 0..layout.total() {
                v.set(k, rng.gen::<bool>());
            }
            v
        };
        let u = random_vec(&mut rng);
        let v = random_vec(&mut rng);
        let w = random_vec(&mut rng);

        let duv = hamming(&u, &v).unwrap();
        let dvu = hamming(&v, &u).unwrap();
        let duw = hamming(&u, &w).unwrap();
        let dwv = hamming(&w, &v).unwrap();
        ok &= duv == dvu;
        ok &= hamming(&u, &u).unwrap() == 0;
        ok &= (duv == 0) == (u == v);
        ok &= duv <= duw + dwv;

        let back = BitVector::from_bytes(&u.to_bytes(), Arc::clone(&layout)).unwrap();
        ok &= back == u;
    }
    report("A9 Hamming metric axioms and packing round trips (1000 cases)", ok);
}
