//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`). Criteria cover kernel
//! correctness against reference implementations, protocol sanity on
//! synthetic corpora, report shape, and desk-scale throughput.
//!
//! Run with `cargo test -p dialign --test acceptance`. Criterion 8 is the
//! long pole: it executes the full 78-site benchmark and finishes in
//! minutes on a multicore machine, bounded at 30.

use std::collections::BTreeMap;
use std::time::Instant;

use dialign::corpus::Subgroup;
use dialign::embed::random_unit_sequence;
use dialign::features::{
    compute_fbank, mel_center_frequencies_hz, AudioBuffer, FbankConfig,
};
use dialign::pipeline::{run_pipeline, ProviderConfig, RunConfig};
use dialign::report::{render_csv, ReportProvenance};
use dialign::retrieval::{RecallCell, RecallMatrix, RetrievalPolicy};
use dialign::seqsim::{dot, seqsim_fast, seqsim_naive};
use dialign::synth::{make_synthetic_corpus, SynthConfig, SynthMode};
use dialign::textnorm::{cer, edit_distance, normalize_text, NormalizationConfig, TokenSequence};
use dialign::{BaselineConfig, EmbeddingSequence};

struct Criterion {
    label: &'static str,
    start: Instant,
}

impl Criterion {
    fn new(label: &'static str) -> Self {
        Criterion {
            label,
            start: Instant::now(),
        }
    }

    fn pass(self) {
        println!(
            "ACCEPTANCE {}: PASS ({:.1}s)",
            self.label,
            self.start.elapsed().as_secs_f64()
        );
    }
}

fn tones(seed: u64, t: usize, d: usize) -> (EmbeddingSequence, EmbeddingSequence) {
    (
        random_unit_sequence(seed * 2 + 1, t, d),
        random_unit_sequence(seed * 2 + 2, t, d),
    )
}

#[test]
fn criterion_1_seqsim_correctness() {
    let criterion = Criterion::new("1 seqsim correctness");
    let start = Instant::now();

    // 1,000 seeded random pairs, T and D in [1, 64]
    for trial in 0..1000u64 {
        let t1 = 1 + (trial as usize * 7 + 3) % 64;
        let t2 = 1 + (trial as usize * 13 + 5) % 64;
        let d = 1 + (trial as usize * 31 + 1) % 64;
        let x = random_unit_sequence(trial * 3 + 11, t1, d);
        let y = random_unit_sequence(trial * 3 + 12, t2, d);
        let naive = seqsim_naive(&x, &y).unwrap();
        let fast = seqsim_fast(&x, &y).unwrap();
        assert!((naive.recall_seq - fast.recall_seq).abs() < 1e-5, "trial {trial}");
        assert!((naive.precision_seq - fast.precision_seq).abs() < 1e-5, "trial {trial}");
        assert!((naive.f1 - fast.f1).abs() < 1e-5, "trial {trial}");
    }

    // self-similarity of unit-norm sequences
    for seed in 0..20u64 {
        let (x, _) = tones(seed, 16 + seed as usize, 24);
        let score = seqsim_fast(&x, &x).unwrap();
        assert!((score.f1 - 1.0).abs() < 1e-6, "self-similarity {}", score.f1);
    }

    // hand case: X = {(1,0), (0,1)}, Y = {(1,0)} -> f1 = 2/3 exactly
    let x = EmbeddingSequence::from_parts(vec![1.0, 0.0, 0.0, 1.0], 2, 2, 25.0, true);
    let y = EmbeddingSequence::from_parts(vec![1.0, 0.0], 1, 2, 25.0, true);
    for score in [seqsim_naive(&x, &y).unwrap(), seqsim_fast(&x, &y).unwrap()] {
        assert_eq!(score.recall_seq, 0.5);
        assert_eq!(score.precision_seq, 1.0);
        assert_eq!(score.f1, 2.0 / 3.0);
    }

    // single-frame sequences reduce to the bare dot product on both paths
    let a = EmbeddingSequence::from_parts(vec![0.6, 0.8], 1, 2, 25.0, true);
    let b = EmbeddingSequence::from_parts(vec![0.8, 0.6], 1, 2, 25.0, true);
    let expected = dot(&[0.6, 0.8], &[0.8, 0.6]) as f64;
    assert_eq!(seqsim_naive(&a, &b).unwrap().f1, expected);
    assert_eq!(seqsim_fast(&a, &b).unwrap().f1, expected);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 1 took {elapsed:.1}s, budget 30s");
    criterion.pass();
}

#[test]
fn criterion_2_seqsim_properties() {
    let criterion = Criterion::new("2 seqsim properties");

    for trial in 0..200u64 {
        let t1 = 1 + (trial as usize * 5) % 48;
        let t2 = 1 + (trial as usize * 11) % 48;
        let d = 2 + (trial as usize * 3) % 32;
        let x = random_unit_sequence(trial + 10_000, t1, d);
        let y = random_unit_sequence(trial + 20_000, t2, d);

        // symmetry: f1 unchanged under operand swap, Re/Pr exchange roles
        let xy = seqsim_fast(&x, &y).unwrap();
        let yx = seqsim_fast(&y, &x).unwrap();
        assert!((xy.f1 - yx.f1).abs() < 1e-9);
        assert!((xy.recall_seq - yx.precision_seq).abs() < 1e-9);

        // frame-permutation invariance: reverse and interleave X's frames
        let mut permuted = Vec::with_capacity(x.data().len());
        for t in (0..x.frames()).rev() {
            permuted.extend_from_slice(x.row(t));
        }
        let xp = EmbeddingSequence::from_parts(permuted, x.frames(), x.dim(), 25.0, true);
        let pxy = seqsim_fast(&xp, &y).unwrap();
        assert!((pxy.f1 - xy.f1).abs() < 1e-9);
        assert!((pxy.recall_seq - xy.recall_seq).abs() < 1e-9);
        assert!((pxy.precision_seq - xy.precision_seq).abs() < 1e-9);

        // scale invariance under the normalize-then-score pipeline
        let c = 0.001 + (trial as f32) * 0.37;
        let scaled = EmbeddingSequence::from_parts(
            x.data().iter().map(|v| v * c).collect(),
            x.frames(),
            x.dim(),
            25.0,
            false,
        );
        let sxy = seqsim_fast(&scaled.l2_normalized().0, &y).unwrap();
        assert!((sxy.f1 - xy.f1).abs() < 1e-6, "c={c}: {} vs {}", sxy.f1, xy.f1);
    }
    criterion.pass();
}

#[test]
fn criterion_3_retrieval_sanity() {
    let criterion = Criterion::new("3 retrieval sanity");
    let start = Instant::now();

    // clone-mode corpus: 4 sites, 2 subgroups, 10 sentences -> recall 1.0
    let clone_dir = tempfile::tempdir().unwrap();
    make_synthetic_corpus(
        &SynthConfig {
            n_subgroups: 2,
            sites_per_subgroup: 2,
            n_sentences: 10,
            mode: SynthMode::Clone,
            seed: 3,
            duration_s: 1.0,
        },
        &clone_dir.path().join("corpus"),
    )
    .unwrap();
    let cfg = RunConfig {
        manifest: clone_dir.path().join("corpus/corpus.jsonl"),
        out_dir: clone_dir.path().join("out"),
        features: FbankConfig::default(),
        provider: ProviderConfig {
            baseline: Some(BaselineConfig::default()),
            import: None,
        },
        normalize: true,
        retrieval: RetrievalPolicy::default(),
        workers: 0,
        strict: false,
    };
    let clone_output = run_pipeline(&cfg).unwrap();
    assert!(!clone_output.report.cells.is_empty());
    for cell in &clone_output.report.cells {
        assert_eq!(
            cell.mean_recall, 1.0,
            "clone cell {} -> {} below 1.0",
            cell.source, cell.target
        );
    }

    // random-mode corpus: 50 sentences, 150 ordered city pairs; the mean
    // recall must land in the 99% binomial interval around chance (1/50)
    let random_dir = tempfile::tempdir().unwrap();
    make_synthetic_corpus(
        &SynthConfig {
            n_subgroups: 3,
            sites_per_subgroup: 5,
            n_sentences: 50,
            mode: SynthMode::Random,
            seed: 7,
            duration_s: 1.0,
        },
        &random_dir.path().join("corpus"),
    )
    .unwrap();
    let cfg = RunConfig {
        manifest: random_dir.path().join("corpus/corpus.jsonl"),
        out_dir: random_dir.path().join("out"),
        features: FbankConfig::default(),
        provider: ProviderConfig {
            baseline: Some(BaselineConfig::default()),
            import: None,
        },
        normalize: true,
        retrieval: RetrievalPolicy::default(),
        workers: 0,
        strict: false,
    };
    let random_output = run_pipeline(&cfg).unwrap();
    let n_pairs = random_output.pairs.len();
    assert!(n_pairs >= 100, "need >= 100 city pairs, got {n_pairs}");
    let trials: usize = random_output.pairs.iter().map(|p| p.n_sentences).sum();
    let mean_recall =
        random_output.pairs.iter().map(|p| p.recall).sum::<f64>() / n_pairs as f64;
    let p = 0.02f64;
    let half_width = 2.5758 * (p * (1.0 - p) / trials as f64).sqrt();
    assert!(
        (mean_recall - p).abs() <= half_width,
        "mean recall {mean_recall:.4} outside 99% interval {:.4}..{:.4}",
        p - half_width,
        p + half_width
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "criterion 3 took {elapsed:.0}s, budget 300s");
    criterion.pass();
}

#[test]
fn criterion_4_report_shape() {
    let criterion = Criterion::new("4 report shape");

    let subgroups = vec![
        Subgroup::MandarinStd,
        Subgroup::MandarinDialect,
        Subgroup::Min,
        Subgroup::Wu,
        Subgroup::Yue,
        Subgroup::Xiang,
        Subgroup::Gan,
    ];
    let mut cells = BTreeMap::new();
    for src in &subgroups {
        for tgt in &subgroups {
            if src == tgt {
                continue;
            }
            cells.insert(
                (src.clone(), tgt.clone()),
                RecallCell {
                    mean_recall: 0.876,
                    n_pairs: 121,
                },
            );
        }
    }
    let matrix = RecallMatrix {
        subgroups,
        cells,
        include_diagonal: false,
        skipped: Vec::new(),
    };
    let csv = render_csv(&matrix, &ReportProvenance::new("hash", "provider", true));
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();

    // header plus 7 source rows (then the pair-count block repeats the shape)
    assert_eq!(
        body[0],
        "source\\target,Mandarin (Std),Mandarin (Dialect),Min,Wu,Yue,Xiang,Gan"
    );
    for (i, row) in body[1..8].iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 8, "row {i} width");
        for (j, field) in fields.iter().enumerate().skip(1) {
            if j == i + 1 {
                assert_eq!(*field, "--", "diagonal cell ({i}, {j})");
            } else {
                assert_eq!(*field, "87.6", "off-diagonal cell ({i}, {j})");
            }
        }
    }
    criterion.pass();
}

#[test]
fn criterion_5_cer_oracle() {
    let criterion = Criterion::new("5 CER oracle");

    // DP against exhaustive recursion, 200 random pairs of length <= 8
    fn exhaustive(a: &[String], b: &[String]) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        let cost = usize::from(a[0] != b[0]);
        (exhaustive(&a[1..], b) + 1)
            .min(exhaustive(a, &b[1..]) + 1)
            .min(exhaustive(&a[1..], &b[1..]) + cost)
    }
    let mut state = 0x5eed_cafeu64;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 33) as usize
    };
    for _ in 0..200 {
        let len_a = next() % 9;
        let len_b = next() % 9;
        let a: Vec<String> = (0..len_a)
            .map(|_| char::from(b'a' + (next() % 3) as u8).to_string())
            .collect();
        let b: Vec<String> = (0..len_b)
            .map(|_| char::from(b'a' + (next() % 3) as u8).to_string())
            .collect();
        assert_eq!(edit_distance(&a, &b), exhaustive(&a, &b), "a={a:?} b={b:?}");
    }

    // reference of 3 vs disjoint hypothesis of 7 -> CER 7/3
    let reference = TokenSequence {
        tokens: vec!["一".into(), "二".into(), "三".into()],
    };
    let hypothesis = TokenSequence {
        tokens: ["四", "五", "六", "七", "八", "九", "十"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let rate = cer(&reference, &hypothesis).unwrap();
    assert_eq!(rate, 7.0 / 3.0);

    // idempotence fuzz over 1,000 mixed strings
    let cfg = NormalizationConfig::default();
    let alphabet: Vec<char> = "謝謝語寶话儿兒女婴幼花鳥马東西 ，。！？abcXYZ0189,.!? 一二三四五儿儿"
        .chars()
        .collect();
    for case in 0..1000 {
        let len = next() % 24;
        let s: String = (0..len).map(|_| alphabet[next() % alphabet.len()]).collect();
        let once = normalize_text(&s, &cfg);
        let twice = normalize_text(&once.render(), &cfg);
        assert_eq!(once, twice, "case {case}: input {s:?}");
    }
    criterion.pass();
}

#[test]
fn criterion_6_fbank_checks() {
    let criterion = Criterion::new("6 FBANK checks");

    // 1 s at 16 kHz, 25/10 ms framing -> exactly 98 frames
    let silence = AudioBuffer {
        samples: vec![0.0; 16_000],
        sample_rate_hz: 16_000,
    };
    let cfg = FbankConfig::default();
    assert_eq!(compute_fbank(&silence, &cfg).unwrap().frames(), 98);

    // a 440 Hz tone's per-frame argmax equals the analytically nearest
    // mel-center bin
    let tone = AudioBuffer {
        samples: (0..16_000)
            .map(|i| (std::f64::consts::TAU * 440.0 * i as f64 / 16_000.0).sin() as f32 * 0.7)
            .collect(),
        sample_rate_hz: 16_000,
    };
    let features = compute_fbank(&tone, &cfg).unwrap();
    let centers = mel_center_frequencies_hz(cfg.bins, 16_000, cfg.low_freq_hz);
    let expected_bin = centers
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| (*a - 440.0).abs().partial_cmp(&(*b - 440.0).abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    for t in 0..features.frames() {
        let row = features.row(t);
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert_eq!(argmax, expected_bin, "frame {t}");
    }

    // gain covariance: scaling samples by c shifts every cell by 2 ln c
    // (powers of two keep the f32 input scaling exact)
    let base = compute_fbank(&tone, &cfg).unwrap();
    for c in [2.0f32, 0.5, 8.0] {
        let scaled = AudioBuffer {
            samples: tone.samples.iter().map(|s| s * c).collect(),
            sample_rate_hz: 16_000,
        };
        let shifted = compute_fbank(&scaled, &cfg).unwrap();
        let shift = 2.0 * (c as f64).ln();
        let floor = 1e-10f64.ln();
        let mut checked = 0;
        for (a, b) in base.data().iter().zip(shifted.data()) {
            if *a > floor + 1.0 && *b > floor + 1.0 {
                assert!((b - a - shift).abs() < 1e-6, "c={c}: {a} vs {b}");
                checked += 1;
            }
        }
        assert!(checked > 100, "c={c}: too few cells above floor");
    }
    criterion.pass();
}

#[test]
fn criterion_7_run_determinism() {
    let criterion = Criterion::new("7 run determinism");

    let dir = tempfile::tempdir().unwrap();
    make_synthetic_corpus(
        &SynthConfig {
            n_subgroups: 2,
            sites_per_subgroup: 2,
            n_sentences: 8,
            mode: SynthMode::Perturbed { snr_db: 5.0 },
            seed: 11,
            duration_s: 1.0,
        },
        &dir.path().join("corpus"),
    )
    .unwrap();
    let cfg = RunConfig {
        manifest: dir.path().join("corpus/corpus.jsonl"),
        out_dir: dir.path().join("out"),
        features: FbankConfig::default(),
        provider: ProviderConfig {
            baseline: Some(BaselineConfig::default()),
            import: None,
        },
        normalize: true,
        retrieval: RetrievalPolicy::default(),
        workers: 0,
        strict: false,
    };

    run_pipeline(&cfg).unwrap();
    let report_dir = dir.path().join("out/report");
    let csv_one = std::fs::read(report_dir.join("recall_matrix.csv")).unwrap();
    let pairs_one = std::fs::read(report_dir.join("pairs.jsonl")).unwrap();

    // a second identical invocation from scratch
    std::fs::remove_dir_all(dir.path().join("out")).unwrap();
    run_pipeline(&cfg).unwrap();
    let csv_two = std::fs::read(report_dir.join("recall_matrix.csv")).unwrap();
    let pairs_two = std::fs::read(report_dir.join("pairs.jsonl")).unwrap();

    assert_eq!(csv_one, csv_two, "recall_matrix.csv differs between runs");
    assert_eq!(pairs_one, pairs_two, "pairs.jsonl differs between runs");
    criterion.pass();
}

/// The desk-scale benchmark: 78 sites with 50 parallel sentences each,
/// ~4 s of audio per utterance so sequences come out near 100 frames after
/// baseline encoding, full ordered-pair retrieval (78*77 = 6,006 city pairs,
/// 2,500 sequence comparisons each). Budget: 30 minutes.
#[test]
fn criterion_8_desk_scale_throughput() {
    let criterion = Criterion::new("8 desk-scale throughput");
    let start = Instant::now();

    let dir = tempfile::tempdir().unwrap();
    make_synthetic_corpus(
        &SynthConfig {
            n_subgroups: 6,
            sites_per_subgroup: 13,
            n_sentences: 50,
            mode: SynthMode::Random,
            seed: 99,
            duration_s: 4.05,
        },
        &dir.path().join("corpus"),
    )
    .unwrap();
    let cfg = RunConfig {
        manifest: dir.path().join("corpus/corpus.jsonl"),
        out_dir: dir.path().join("out"),
        features: FbankConfig::default(),
        provider: ProviderConfig {
            baseline: Some(BaselineConfig::default()),
            import: None,
        },
        normalize: true,
        retrieval: RetrievalPolicy {
            include_diagonal: true,
            topk: 1,
        },
        workers: 0,
        strict: false,
    };
    let output = run_pipeline(&cfg).unwrap();

    assert_eq!(output.pairs.len(), 78 * 77, "ordered city pairs");
    for pair in &output.pairs {
        assert_eq!(pair.n_sentences, 50);
    }
    // sequences really are ~100 frames: 4.05s -> 403 fbank frames -> 101
    let probe = dialign::embed::read_sequence(
        &dir.path().join("out/embeddings/g00s00__1.sqe"),
    )
    .unwrap();
    assert_eq!(probe.dim(), 64);
    assert!(
        (95..=105).contains(&probe.frames()),
        "expected ~100 frames, got {}",
        probe.frames()
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < 1800.0,
        "benchmark took {elapsed:.0}s, budget 1800s"
    );
    println!(
        "  78 sites / 6006 ordered pairs / {} seqsim evaluations in {elapsed:.0}s",
        6006 * 2500
    );
    criterion.pass();
}
