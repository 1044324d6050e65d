mod support;

use std::cell::Cell;
use std::fs;

use rand::Rng;
use smearscope_core::analysis::{analyze_image, PipelineConfig};
use smearscope_core::classification::*;
use smearscope_core::dataset::*;
use smearscope_core::evaluation::*;
use smearscope_core::rng::seeded;
use smearscope_core::segmentation::SegmentationConfig;
use smearscope_core::Result;

/// Ground-truth-box features from in-memory smears.
fn smear_features(cfg: &SynthConfig, images: u64) -> Vec<(FeatureVector, StageLabel)> {
    let mut out = Vec::new();
    for i in 0..images {
        let (img, cells) = generate_smear(&SynthConfig {
            seed: cfg.seed + i,
            ..cfg.clone()
        })
        .unwrap();
        for c in cells {
            let crop = extract_crop(&img, &c.bbox, "t", &CropConfig::default()).unwrap();
            out.push((extract_features(&crop), c.label));
        }
    }
    out
}

fn infected_rich() -> SynthConfig {
    SynthConfig {
        class_mix: [0.4, 0.15, 0.15, 0.15, 0.15],
        ..Default::default()
    }
}

#[test]
fn corpus_round_trips_through_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        seed: 3,
        ..Default::default()
    };
    let written = generate_corpus(&cfg, 3, dir.path()).unwrap();
    let loaded = load_manifest(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded.images, written.images);
    assert_eq!(loaded.images.len(), 3);
    for e in &loaded.images {
        assert!(dir.path().join(&e.path).exists());
        let img = loaded.load_image(e).unwrap();
        let (regen, cells) = generate_smear(&SynthConfig {
            seed: 3 + e.image_id[4..].parse::<u64>().unwrap(),
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(img, regen);
        assert_eq!(cells, e.cells);
    }

    let again = tempfile::tempdir().unwrap();
    generate_corpus(&cfg, 3, again.path()).unwrap();
    let a = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    let b = fs::read_to_string(again.path().join(MANIFEST_FILE)).unwrap();
    // only the directory differs, and it is not serialized
    assert_eq!(a, b);
}

#[test]
fn class_frequencies_follow_the_mix() {
    let cfg = SynthConfig::default();
    let mut counts = [0usize; 5];
    let mut total = 0;
    let mut images = 0;
    for seed in 0.. {
        let (_, cells) = generate_smear(&SynthConfig {
            seed,
            ..cfg.clone()
        })
        .unwrap();
        images += 1;
        for c in cells {
            counts[c.label.id()] += 1;
            total += 1;
        }
        if total >= 1000 {
            break;
        }
    }
    for (c, expected) in counts.iter().zip(cfg.class_mix) {
        let observed = *c as f64 / total as f64;
        assert!((observed - expected).abs() <= 0.03, "{counts:?}");
    }
    let mean = total as f64 / images as f64;
    assert!((100.0..=122.0).contains(&mean), "{mean}");
}

#[test]
fn exact_label_counts() {
    let cfg = SynthConfig {
        label_counts: Some([40, 10, 0, 0, 0]),
        ..Default::default()
    };
    let (_, cells) = generate_smear(&cfg).unwrap();
    assert_eq!(cells.len(), 50);
    assert_eq!(
        cells.iter().filter(|c| c.label == StageLabel::Ring).count(),
        10
    );
}

#[test]
fn end_to_end_infected_count() {
    let train = smear_features(
        &SynthConfig {
            seed: 500,
            ..infected_rich()
        },
        8,
    );
    let model = StageModel::Cascade(train_cascade(&train, &HyperParams::default()).unwrap());
    let cfg = SynthConfig {
        label_counts: Some([40, 10, 0, 0, 0]),
        seed: 9001,
        ..Default::default()
    };
    let (img, _) = generate_smear(&cfg).unwrap();
    let result = analyze_image(&img, &PipelineConfig::default(), &model).unwrap();
    assert!(result.infected_cells <= result.total_cells);
    assert!(
        result.total_cells.abs_diff(50) <= 2,
        "{}",
        result.total_cells
    );
    assert!(
        result.infected_cells.abs_diff(10) <= 2,
        "{}",
        result.infected_cells
    );
}

#[test]
fn training_is_bit_deterministic() {
    let data = smear_features(
        &SynthConfig {
            seed: 40,
            ..infected_rich()
        },
        2,
    );
    let hp = HyperParams {
        seed: 4,
        epochs: 50,
        ..Default::default()
    };
    assert_eq!(
        train_cascade(&data, &hp).unwrap(),
        train_cascade(&data, &hp).unwrap()
    );
    assert_eq!(
        train_single(&data, &hp).unwrap(),
        train_single(&data, &hp).unwrap()
    );
}

#[test]
fn memorizes_separable_training_set() {
    // one tight cluster per class around distinct random centres
    let mut rng = seeded(70);
    let centres: Vec<FeatureVector> = (0..5).map(|_| support::random_features(&mut rng)).collect();
    let mut data = Vec::new();
    for (label, centre) in StageLabel::ALL.iter().zip(&centres) {
        let n = if *label == StageLabel::Healthy {
            200
        } else {
            12
        };
        for _ in 0..n {
            let mut f = *centre;
            for v in f.0.iter_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
            data.push((f, *label));
        }
    }
    for arch in [Architecture::Ssc, Architecture::Tsc] {
        let model = train_model(arch, &data, &HyperParams::default()).unwrap();
        let acc = macro_average_accuracy(&score_model(&model, &data).unwrap()).unwrap();
        assert!(acc >= 0.95, "{arch}: {acc}");
    }
}

struct Counting<'a> {
    inner: &'a SoftmaxClassifier,
    calls: Cell<usize>,
}

impl ProbabilisticClassifier for Counting<'_> {
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn predict(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.predict(f)
    }
}

#[test]
fn cascade_routing_contract() {
    let train = smear_features(
        &SynthConfig {
            seed: 900,
            ..infected_rich()
        },
        2,
    );
    let cascade = train_cascade(&train, &HyperParams::default()).unwrap();
    let stage2 = Counting {
        inner: cascade.stage2(),
        calls: Cell::new(0),
    };
    let mut gate_infected = 0;
    for (f, _) in &train {
        let out = classify_tsc(cascade.stage1(), &stage2, f).unwrap();
        if argmax(&out.stage1_probs) == 1 {
            gate_infected += 1;
        } else {
            assert_eq!(out.label, StageLabel::Healthy);
            assert!(out.stage2_probs.is_none());
        }
    }
    assert!(gate_infected > 0 && gate_infected < train.len());
    assert_eq!(stage2.calls.get(), gate_infected);
}

#[test]
fn ssc_label_has_max_probability() {
    let mut rng = seeded(8);
    let model = SoftmaxClassifier::seeded_init(StageLabel::class_names(), FEATURE_DIM, 8);
    for _ in 0..200 {
        let f = support::random_features(&mut rng);
        let out = classify_ssc(&model, &f).unwrap();
        let max = out.stage1_probs.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(out.stage1_probs[out.label.id()], max);
        assert!((out.stage1_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn macro_accuracy_duplication_invariance() {
    let mut rng = seeded(12);
    for _ in 0..50 {
        let n = rng.random_range(5..40);
        let gt: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let cm = confusion_matrix(&gt, &pred, 4).unwrap();
        for c in 0..4 {
            assert_eq!(cm.row_sum(c), gt.iter().filter(|&&g| g == c).count());
        }
        // duplicate only the samples of class 0
        let (mut gt2, mut pred2) = (gt.clone(), pred.clone());
        for (g, p) in gt.iter().zip(&pred) {
            if *g == 0 {
                gt2.push(*g);
                pred2.push(*p);
            }
        }
        let cm2 = confusion_matrix(&gt2, &pred2, 4).unwrap();
        let (a, b) = (
            macro_average_accuracy(&cm).unwrap(),
            macro_average_accuracy(&cm2).unwrap(),
        );
        assert!((a - b).abs() < 1e-12);
    }
    // micro accuracy does move under the same duplication
    let cm = confusion_matrix(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
    let dup = confusion_matrix(&[0, 0, 1, 1], &[0, 0, 0, 1], 2).unwrap();
    assert_eq!(
        macro_average_accuracy(&cm).unwrap(),
        macro_average_accuracy(&dup).unwrap()
    );
    assert_ne!(cm.overall_accuracy(), dup.overall_accuracy());
}

#[test]
fn split_partitions_for_random_sizes() {
    let mut rng = seeded(99);
    for _ in 0..100 {
        let n = rng.random_range(3..400);
        let ids: Vec<String> = (0..n).map(|i| format!("{i}")).collect();
        let s = split_dataset(&ids, DEFAULT_SPLIT, rng.random()).unwrap();
        let mut all: Vec<&String> = s.train.iter().chain(&s.test).chain(&s.val).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
        assert_eq!(s.train.len() + s.test.len() + s.val.len(), n);
    }
}

#[test]
fn classification_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        width: 300,
        height: 240,
        cells_min: 25,
        cells_max: 30,
        seed: 31,
        ..infected_rich()
    };
    let manifest = generate_corpus(&cfg, 10, dir.path()).unwrap();
    let ids: Vec<String> = manifest.images.iter().map(|e| e.image_id.clone()).collect();
    let split = split_dataset(&ids, DEFAULT_SPLIT, 1).unwrap();
    let opts = ClassificationOptions {
        arch: Architecture::Tsc,
        hyper_params: HyperParams::default(),
        crop_source: CropSource::default(),
        segmentation: SegmentationConfig::default(),
        crop: CropConfig::default(),
    };
    let (a, model_a) = evaluate_classification(&manifest, &split, &opts).unwrap();
    let (b, model_b) = evaluate_classification(&manifest, &split, &opts).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(model_a, model_b);
    assert_eq!(a.confusion_matrix.total(), a.test_cells);

    let e2e = ClassificationOptions {
        crop_source: CropSource {
            end_to_end: true,
            ..Default::default()
        },
        ..opts
    };
    let (r, _) = evaluate_classification(&manifest, &split, &e2e).unwrap();
    assert!(r.test_cells > 0 && r.test_cells <= a.test_cells);
}

#[test]
fn missing_class_in_training_names_the_class() {
    let data: Vec<(FeatureVector, StageLabel)> = smear_features(
        &SynthConfig {
            seed: 1,
            ..infected_rich()
        },
        1,
    )
    .into_iter()
    .filter(|(_, l)| *l != StageLabel::Gametocyte)
    .collect();
    let err = train_single(&data, &HyperParams::default()).unwrap_err();
    assert!(err.to_string().contains("gametocyte"), "{err}");
}

#[test]
fn empty_manifest_is_rejected() {
    let m = Manifest::parse(r#"{"format":"smearscope-manifest-v1","images":[]}"#, ".").unwrap();
    assert!(matches!(
        evaluate_localization(&m, &SegmentationConfig::default(), 0.5),
        Err(smearscope_core::Error::NoImages)
    ));
}

#[test]
fn localization_on_small_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        seed: 12,
        ..Default::default()
    };
    let m = generate_corpus(&cfg, 2, dir.path()).unwrap();
    let r = evaluate_localization(&m, &SegmentationConfig::default(), 0.5).unwrap();
    assert!(r.f1 >= 0.9, "{r:?}");
    assert_eq!(r.tp + r.fn_, m.cell_count());
}
