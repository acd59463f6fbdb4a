//! `dialign` command line: corpus validation, feature extraction, embedding,
//! similarity, retrieval and CER scoring, plus the one-shot `run` pipeline.
//!
//! Exit codes: 0 success, 1 input/validation error, 2 runtime error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dialign::corpus::{corpus_stats, load_manifest};
use dialign::embed::{
    import_embeddings, parse_sqe_filename, read_sequence, EmbeddingSequence, EmbeddingStore,
};
use dialign::error::Error;
use dialign::features::wav_duration_s;
use dialign::hash::sha256_hex_file;
use dialign::pipeline::{
    baseline_embed_stage, extract_features_stage, run_pipeline, RunConfig,
};
use dialign::report::{render_csv, render_markdown, ReportProvenance};
use dialign::retrieval::{recall_matrix, RetrievalPolicy};
use dialign::seqsim::seqsim_fast_with_block;
use dialign::synth::{make_synthetic_corpus, SynthConfig, SynthMode};
use dialign::textnorm::{corpus_cer, NormalizationConfig};
use dialign::{BaselineConfig, FbankConfig};

#[derive(Parser)]
#[command(name = "dialign", version, about = "Cross-dialect speech retrieval evaluation")]
struct Cli {
    /// Resolve relative paths against this directory.
    #[arg(long, global = true)]
    root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus manifest.
    Validate {
        manifest: PathBuf,
        /// Treat missing audio files as errors instead of warnings.
        #[arg(long)]
        strict: bool,
    },
    /// Print corpus statistics (site/utterance counts, durations).
    Stats { manifest: PathBuf },
    /// Acoustic feature operations.
    #[command(subcommand)]
    Features(FeaturesCommand),
    /// Embedding providers and import.
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Sequence similarity.
    #[command(subcommand)]
    Seqsim(SeqsimCommand),
    /// Retrieval protocol.
    #[command(subcommand)]
    Retrieve(RetrieveCommand),
    /// Character error rate scoring.
    #[command(subcommand)]
    Cer(CerCommand),
    /// Synthetic corpora.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Run the full pipeline from a config file.
    Run {
        /// TOML config; paths inside are resolved against --root, or the
        /// config file's directory when --root is absent.
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum FeaturesCommand {
    /// Extract log-mel features, one file per utterance.
    Extract {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fbank: FbankArgs,
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Args)]
struct FbankArgs {
    #[arg(long, default_value_t = 80)]
    bins: usize,
    #[arg(long, default_value_t = 25.0)]
    frame_length_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    frame_shift_ms: f64,
    #[arg(long, default_value_t = 20.0)]
    low_freq_hz: f64,
}

impl FbankArgs {
    fn to_config(&self) -> FbankConfig {
        FbankConfig {
            bins: self.bins,
            frame_length_ms: self.frame_length_ms,
            frame_shift_ms: self.frame_shift_ms,
            low_freq_hz: self.low_freq_hz,
        }
    }
}

#[derive(Subcommand)]
enum EmbedCommand {
    /// Encode feature files with the deterministic baseline encoder.
    Baseline {
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 4)]
        stack: usize,
        #[arg(long, default_value_t = 4)]
        stride: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        /// Frame length metadata for feature files (ms).
        #[arg(long, default_value_t = 25.0)]
        frame_length_ms: f64,
    },
    /// Validate a directory of embedding files and print a summary.
    Import {
        #[arg(long)]
        dir: PathBuf,
        /// Cross-check coverage against a manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SeqsimCommand {
    /// Score one pair of embedding files.
    Pair {
        file1: PathBuf,
        file2: PathBuf,
        /// Skip L2 normalization of frames before scoring.
        #[arg(long)]
        no_normalize: bool,
        /// Tile edge (frames) for the blocked kernel.
        #[arg(long, default_value_t = dialign::seqsim::DEFAULT_BLOCK)]
        block: usize,
    },
    /// All-pairs score matrix between two directories of embedding files.
    Matrix {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_normalize: bool,
        /// Tile edge (frames) for the blocked kernel.
        #[arg(long, default_value_t = dialign::seqsim::DEFAULT_BLOCK)]
        block: usize,
    },
}

#[derive(Subcommand)]
enum RetrieveCommand {
    /// Run retrieval over all site pairs and write the recall report.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        include_diagonal: bool,
        #[arg(long, default_value_t = 1)]
        topk: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_normalize: bool,
    },
}

#[derive(Subcommand)]
enum CerCommand {
    /// Score hypothesis against reference transcripts.
    Score {
        /// Reference TSV: `<utt_key>\t<text>` per line.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Hypothesis TSV, same keys in the same order.
        #[arg(long)]
        hyp: PathBuf,
        /// Traditional-to-simplified table; the builtin one when absent.
        #[arg(long)]
        trad2simp: Option<PathBuf>,
        #[arg(long)]
        no_erhua: bool,
        /// Write per-utterance details here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Generate a synthetic corpus (manifest plus audio directory).
    Make {
        #[arg(long, default_value_t = 2)]
        subgroups: usize,
        #[arg(long, default_value_t = 2)]
        sites_per_subgroup: usize,
        #[arg(long, default_value_t = 10)]
        sentences: u32,
        /// clone | perturbed | random
        #[arg(long, default_value = "clone")]
        mode: String,
        /// SNR in dB for perturbed mode.
        #[arg(long, default_value_t = 20.0)]
        snr_db: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        duration_s: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(root: &Option<PathBuf>, path: &Path) -> PathBuf {
    match root {
        Some(root) if path.is_relative() => root.join(path),
        _ => path.to_path_buf(),
    }
}

fn load_sqe_dir(dir: &Path, normalize: bool) -> Result<Vec<(String, EmbeddingSequence)>, Error> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| entry.file_name().into_string().ok())
        .filter(|name| name.ends_with(".sqe"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let seq = read_sequence(&dir.join(&name))?;
            let seq = if normalize { seq.l2_normalized().0 } else { seq };
            Ok((name, seq))
        })
        .collect()
}

fn read_tsv(path: &Path) -> Result<Vec<(String, String)>, Error> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (key, text) = line.split_once('\t').unwrap_or((line, ""));
        if key.is_empty() {
            return Err(Error::ManifestParse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: "empty utterance key".to_string(),
            });
        }
        rows.push((key.to_string(), text.to_string()));
    }
    Ok(rows)
}

fn run(cli: Cli) -> Result<(), Error> {
    let root = &cli.root;
    match cli.command {
        Command::Validate { manifest, strict } => {
            let path = resolve(root, &manifest);
            let (m, warnings) = load_manifest(&path, strict)?;
            for warning in &warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "ok: {} sites / {} utterances ({} warnings)",
                m.sites.len(),
                m.utterances.len(),
                warnings.len()
            );
        }
        Command::Stats { manifest } => {
            let path = resolve(root, &manifest);
            let (mut m, _) = load_manifest(&path, false)?;
            // fill missing durations from audio headers where possible
            for utt in &mut m.utterances {
                if utt.duration_s.is_none() {
                    let audio = m.audio_root.join(&utt.audio_path);
                    if let Ok(d) = wav_duration_s(&audio) {
                        utt.duration_s = Some(d);
                    }
                }
            }
            print!("{}", corpus_stats(&m).render());
        }
        Command::Features(FeaturesCommand::Extract {
            manifest,
            out,
            fbank,
            strict,
        }) => {
            let (m, _) = load_manifest(&resolve(root, &manifest), strict)?;
            let stats = extract_features_stage(&m, &fbank.to_config(), &resolve(root, &out), strict)?;
            for warning in &stats.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "features: {} computed, {} cached, {} skipped",
                stats.computed, stats.cached, stats.skipped
            );
        }
        Command::Embed(EmbedCommand::Baseline {
            manifest,
            features,
            out,
            dim,
            stack,
            stride,
            seed,
            frame_length_ms,
        }) => {
            let (m, _) = load_manifest(&resolve(root, &manifest), false)?;
            let cfg = BaselineConfig {
                out_dim: dim,
                stack,
                stride,
                seed,
            };
            let stats = baseline_embed_stage(
                &m,
                &resolve(root, &features),
                &cfg,
                &resolve(root, &out),
                frame_length_ms,
            )?;
            for warning in &stats.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "embeddings: {} computed, {} cached, {} skipped",
                stats.computed, stats.cached, stats.skipped
            );
        }
        Command::Embed(EmbedCommand::Import { dir, manifest }) => {
            let dir = resolve(root, &dir);
            match manifest {
                Some(manifest) => {
                    let (m, _) = load_manifest(&resolve(root, &manifest), false)?;
                    let (store, warnings) = import_embeddings(&dir, &m)?;
                    for warning in &warnings {
                        eprintln!("warning: {warning}");
                    }
                    println!(
                        "store: {} sequences, dimension {} ({} missing)",
                        store.len(),
                        store.dim(),
                        warnings.len()
                    );
                }
                None => {
                    let entries = load_sqe_dir(&dir, false)?;
                    let mut keyed = Vec::new();
                    for (name, seq) in entries {
                        match parse_sqe_filename(&name) {
                            Some(key) => keyed.push((key, seq)),
                            None => {
                                return Err(Error::EmbeddingFormat {
                                    path: dir.join(&name),
                                    msg: "file name is not <site>__<sentence>.sqe".to_string(),
                                })
                            }
                        }
                    }
                    let store = EmbeddingStore::build(format!("import:{}", dir.display()), keyed)?;
                    let total_frames: usize = store.iter().map(|(_, s)| s.frames()).sum();
                    println!(
                        "store: {} sequences, dimension {}, {} frames total",
                        store.len(),
                        store.dim(),
                        total_frames
                    );
                }
            }
        }
        Command::Seqsim(SeqsimCommand::Pair {
            file1,
            file2,
            no_normalize,
            block,
        }) => {
            let load = |p: &PathBuf| -> Result<EmbeddingSequence, Error> {
                let seq = read_sequence(&resolve(root, p))?;
                Ok(if no_normalize { seq } else { seq.l2_normalized().0 })
            };
            let score = seqsim_fast_with_block(&load(&file1)?, &load(&file2)?, block)?;
            println!(
                "Re_seq={:.6} Pr_seq={:.6} F1={:.6}",
                score.recall_seq, score.precision_seq, score.f1
            );
        }
        Command::Seqsim(SeqsimCommand::Matrix {
            queries,
            targets,
            out,
            no_normalize,
            block,
        }) => {
            let q = load_sqe_dir(&resolve(root, &queries), !no_normalize)?;
            let t = load_sqe_dir(&resolve(root, &targets), !no_normalize)?;
            let q_seqs: Vec<EmbeddingSequence> = q.iter().map(|(_, s)| s.clone()).collect();
            let t_seqs: Vec<EmbeddingSequence> = t.iter().map(|(_, s)| s.clone()).collect();
            let scores = dialign::seqsim::seqsim_batch_with_block(&q_seqs, &t_seqs, block)?;
            let mut csv = String::from("query\\target");
            for (name, _) in &t {
                csv.push(',');
                csv.push_str(name);
            }
            csv.push('\n');
            for (row, (name, _)) in scores.iter().zip(&q) {
                csv.push_str(name);
                for value in row {
                    csv.push_str(&format!(",{value:.6}"));
                }
                csv.push('\n');
            }
            let out = resolve(root, &out);
            std::fs::write(&out, csv).map_err(|e| Error::io(&out, e))?;
            println!("wrote {} x {} scores to {}", q.len(), t.len(), out.display());
        }
        Command::Retrieve(RetrieveCommand::Run {
            manifest,
            embeddings,
            include_diagonal,
            topk,
            out,
            no_normalize,
        }) => {
            let manifest_path = resolve(root, &manifest);
            let (m, _) = load_manifest(&manifest_path, false)?;
            let dir = resolve(root, &embeddings);
            let (store, warnings) = import_embeddings(&dir, &m)?;
            for warning in &warnings {
                eprintln!("warning: {warning}");
            }
            let store = if no_normalize {
                store
            } else {
                let provider = store.provider_id.clone();
                EmbeddingStore::build(
                    provider,
                    store
                        .iter()
                        .map(|(k, s)| (k.clone(), if s.normalized { s.clone() } else { s.l2_normalized().0 }))
                        .collect(),
                )?
            };
            let policy = RetrievalPolicy {
                include_diagonal,
                topk,
            };
            let (matrix, pairs) = recall_matrix(&store, &m, &policy)?;
            let out = resolve(root, &out);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let provenance = ReportProvenance::new(
                sha256_hex_file(&manifest_path)?,
                format!("import:{}", dir.display()),
                !no_normalize,
            );
            let csv_path = out.join("recall_matrix.csv");
            std::fs::write(&csv_path, render_csv(&matrix, &provenance))
                .map_err(|e| Error::io(&csv_path, e))?;
            let md_path = out.join("recall_matrix.md");
            std::fs::write(&md_path, render_markdown(&matrix, &provenance))
                .map_err(|e| Error::io(&md_path, e))?;
            let pairs_path = out.join("pairs.jsonl");
            let mut body = String::new();
            for pair in &pairs {
                body.push_str(&serde_json::to_string(pair).expect("pair serializes"));
                body.push('\n');
            }
            std::fs::write(&pairs_path, body).map_err(|e| Error::io(&pairs_path, e))?;
            println!(
                "retrieval: {} pairs over {} subgroups -> {}",
                pairs.len(),
                matrix.subgroups.len(),
                out.display()
            );
        }
        Command::Cer(CerCommand::Score {
            reference,
            hyp,
            trad2simp,
            no_erhua,
            out,
        }) => {
            let refs = read_tsv(&resolve(root, &reference))?;
            let hyps = read_tsv(&resolve(root, &hyp))?;
            if refs.len() != hyps.len() {
                return Err(Error::LengthMismatch {
                    refs: refs.len(),
                    hyps: hyps.len(),
                });
            }
            for (idx, ((rk, _), (hk, _))) in refs.iter().zip(&hyps).enumerate() {
                if rk != hk {
                    return Err(Error::Config(format!(
                        "utterance key mismatch at line {}: `{rk}` vs `{hk}`",
                        idx + 1
                    )));
                }
            }
            let mut cfg = match trad2simp {
                Some(path) => NormalizationConfig::with_table_file(&resolve(root, &path))?,
                None => NormalizationConfig::default(),
            };
            if no_erhua {
                cfg = cfg.without_erhua();
            }
            let ref_texts: Vec<String> = refs.iter().map(|(_, t)| t.clone()).collect();
            let hyp_texts: Vec<String> = hyps.iter().map(|(_, t)| t.clone()).collect();
            let (overall, per) = corpus_cer(&ref_texts, &hyp_texts, &cfg)?;
            println!(
                "CER {:.4} over {} utterances (table: {}, erhua: {})",
                overall,
                per.len(),
                cfg.table_id,
                if cfg.erhua_enabled { "on" } else { "off" }
            );
            if let Some(out) = out {
                let out = resolve(root, &out);
                let mut body = String::from("utt_key\tref_tokens\tdistance\tcer\n");
                for detail in &per {
                    let cer_text = detail
                        .cer
                        .map(|c| format!("{c:.4}"))
                        .unwrap_or_else(|| "n/a".to_string());
                    body.push_str(&format!(
                        "{}\t{}\t{}\t{}\n",
                        refs[detail.index].0, detail.ref_tokens, detail.distance, cer_text
                    ));
                }
                std::fs::write(&out, body).map_err(|e| Error::io(&out, e))?;
            }
        }
        Command::Synth(SynthCommand::Make {
            subgroups,
            sites_per_subgroup,
            sentences,
            mode,
            snr_db,
            seed,
            duration_s,
            out,
        }) => {
            let mode = match mode.as_str() {
                "clone" => SynthMode::Clone,
                "perturbed" => SynthMode::Perturbed { snr_db },
                "random" => SynthMode::Random,
                other => {
                    return Err(Error::Config(format!(
                        "unknown synth mode `{other}` (clone|perturbed|random)"
                    )))
                }
            };
            let cfg = SynthConfig {
                n_subgroups: subgroups,
                sites_per_subgroup,
                n_sentences: sentences,
                mode,
                seed,
                duration_s,
            };
            let manifest = make_synthetic_corpus(&cfg, &resolve(root, &out))?;
            println!("wrote {}", manifest.display());
        }
        Command::Run { config } => {
            let config_path = resolve(root, &config);
            let mut cfg = RunConfig::load(&config_path)?;
            // paths in the config resolve against --root, else the config dir
            let base = root.clone().unwrap_or_else(|| {
                config_path
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let rebase = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
            cfg.manifest = rebase(&cfg.manifest);
            cfg.out_dir = rebase(&cfg.out_dir);
            if let Some(import) = &mut cfg.provider.import {
                import.dir = rebase(&import.dir);
            }
            let output = run_pipeline(&cfg)?;
            for warning in &output.report.warnings {
                eprintln!("warning: {warning}");
            }
            let mut by_stage: BTreeMap<&str, f64> = BTreeMap::new();
            for timing in &output.report.timings {
                *by_stage.entry(timing.stage.as_str()).or_default() += timing.seconds;
            }
            for (stage, seconds) in by_stage {
                println!("{stage:>16}: {seconds:8.2}s");
            }
            println!(
                "report: {} cells, {} pairs -> {}",
                output.report.cells.len(),
                output.pairs.len(),
                cfg.out_dir.join("report").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
