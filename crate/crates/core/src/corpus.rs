//! Parallel-corpus data model and manifest ingest.
//!
//! A corpus is a set of survey sites, each contributing utterances keyed by a
//! sentence id. Utterances sharing a sentence id across sites are translations
//! of one another; that id is the ground truth for retrieval. Manifests are
//! line-delimited JSON, one record per line, so they stream and diff cleanly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Top-level cluster of related dialects; the unit between which retrieval
/// recall is aggregated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subgroup {
    MandarinStd,
    MandarinDialect,
    Min,
    Wu,
    Yue,
    Xiang,
    Gan,
    Hakka,
    Other(String),
}

impl Subgroup {
    /// Parse a label, case-insensitively; spaces and underscores are treated
    /// as dashes. Unrecognized labels become `Other` with the normalized name.
    pub fn parse(label: &str) -> Subgroup {
        let norm: String = label
            .trim()
            .chars()
            .map(|c| match c {
                '_' | ' ' => '-',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        match norm.as_str() {
            "mandarin-std" | "mandarin-standard" => Subgroup::MandarinStd,
            "mandarin-dialect" | "mandarin" => Subgroup::MandarinDialect,
            "min" => Subgroup::Min,
            "wu" => Subgroup::Wu,
            "yue" => Subgroup::Yue,
            "xiang" => Subgroup::Xiang,
            "gan" => Subgroup::Gan,
            "hakka" => Subgroup::Hakka,
            _ => Subgroup::Other(norm),
        }
    }

    /// Canonical wire label (round-trips through `parse`).
    pub fn label(&self) -> &str {
        match self {
            Subgroup::MandarinStd => "mandarin-std",
            Subgroup::MandarinDialect => "mandarin-dialect",
            Subgroup::Min => "min",
            Subgroup::Wu => "wu",
            Subgroup::Yue => "yue",
            Subgroup::Xiang => "xiang",
            Subgroup::Gan => "gan",
            Subgroup::Hakka => "hakka",
            Subgroup::Other(name) => name,
        }
    }

    /// Human-readable name used in report tables.
    pub fn display_name(&self) -> String {
        match self {
            Subgroup::MandarinStd => "Mandarin (Std)".to_string(),
            Subgroup::MandarinDialect => "Mandarin (Dialect)".to_string(),
            Subgroup::Min => "Min".to_string(),
            Subgroup::Wu => "Wu".to_string(),
            Subgroup::Yue => "Yue".to_string(),
            Subgroup::Xiang => "Xiang".to_string(),
            Subgroup::Gan => "Gan".to_string(),
            Subgroup::Hakka => "Hakka".to_string(),
            Subgroup::Other(name) => name.clone(),
        }
    }

    /// Report ordering: the standard variety first, then the major subgroups,
    /// then anything else alphabetically.
    pub fn sort_key(&self) -> (u8, &str) {
        match self {
            Subgroup::MandarinStd => (0, ""),
            Subgroup::MandarinDialect => (1, ""),
            Subgroup::Min => (2, ""),
            Subgroup::Wu => (3, ""),
            Subgroup::Yue => (4, ""),
            Subgroup::Xiang => (5, ""),
            Subgroup::Gan => (6, ""),
            Subgroup::Hakka => (7, ""),
            Subgroup::Other(name) => (8, name),
        }
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Subgroup {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Subgroup {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let label = String::deserialize(deserializer)?;
        Ok(Subgroup::parse(&label))
    }
}

/// A survey location contributing one speaker's parallel sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub site_id: String,
    pub display_name: String,
    pub subgroup: Subgroup,
}

/// One spoken sentence at one site. `sentence_id` is the cross-site semantic
/// alignment key.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub site_id: String,
    pub sentence_id: u32,
    pub audio_path: String,
    pub transcript: Option<String>,
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub sites: Vec<Site>,
    pub utterances: Vec<Utterance>,
    /// Directory audio paths are resolved against (the manifest's directory
    /// when loaded from disk).
    pub audio_root: PathBuf,
}

// Wire records. One JSON object per line, discriminated by "kind".
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum Record {
    #[serde(rename = "site")]
    Site {
        site_id: String,
        name: String,
        subgroup: String,
    },
    #[serde(rename = "utt")]
    Utt {
        site_id: String,
        sentence_id: u32,
        audio: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        duration_s: Option<f64>,
    },
}

/// Load and validate a manifest. Returns the manifest plus a list of
/// non-fatal warnings; in strict mode a missing audio file is an error
/// instead of a warning.
pub fn load_manifest(path: &Path, strict: bool) -> Result<(Manifest, Vec<String>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let audio_root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let mut sites: Vec<Site> = Vec::new();
    let mut site_lines: HashMap<String, usize> = HashMap::new();
    let mut utterances: Vec<Utterance> = Vec::new();
    let mut utt_lines: HashMap<(String, u32), usize> = HashMap::new();
    let mut warnings = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::ManifestParse {
            path: path.to_path_buf(),
            line: line_no,
            msg: e.to_string(),
        })?;
        match record {
            Record::Site {
                site_id,
                name,
                subgroup,
            } => {
                if let Some(&first) = site_lines.get(&site_id) {
                    return Err(Error::ManifestParse {
                        path: path.to_path_buf(),
                        line: line_no,
                        msg: format!("duplicate site id `{site_id}` (first declared at line {first})"),
                    });
                }
                site_lines.insert(site_id.clone(), line_no);
                sites.push(Site {
                    site_id,
                    display_name: name,
                    subgroup: Subgroup::parse(&subgroup),
                });
            }
            Record::Utt {
                site_id,
                sentence_id,
                audio,
                text,
                duration_s,
            } => {
                if sentence_id == 0 {
                    return Err(Error::ManifestParse {
                        path: path.to_path_buf(),
                        line: line_no,
                        msg: "sentence_id must be >= 1".to_string(),
                    });
                }
                if let Some(d) = duration_s {
                    if d <= 0.0 || !d.is_finite() {
                        return Err(Error::ManifestParse {
                            path: path.to_path_buf(),
                            line: line_no,
                            msg: format!("duration_s must be positive, got {d}"),
                        });
                    }
                }
                let key = (site_id.clone(), sentence_id);
                if let Some(&first) = utt_lines.get(&key) {
                    return Err(Error::DuplicateUtterance {
                        site: site_id,
                        sentence: sentence_id,
                        first_line: first,
                        second_line: line_no,
                    });
                }
                utt_lines.insert(key, line_no);
                utterances.push(Utterance {
                    site_id,
                    sentence_id,
                    audio_path: audio,
                    transcript: text,
                    duration_s,
                });
            }
        }
    }

    // Every utterance must reference a declared site.
    for utt in &utterances {
        if !site_lines.contains_key(&utt.site_id) {
            let line = utt_lines[&(utt.site_id.clone(), utt.sentence_id)];
            return Err(Error::ManifestParse {
                path: path.to_path_buf(),
                line,
                msg: format!("unknown site id `{}`", utt.site_id),
            });
        }
    }

    let std_sites: Vec<&str> = sites
        .iter()
        .filter(|s| s.subgroup == Subgroup::MandarinStd)
        .map(|s| s.site_id.as_str())
        .collect();
    if std_sites.len() > 1 {
        warnings.push(format!(
            "{} sites carry the standard-Mandarin subgroup (expected at most one): {}",
            std_sites.len(),
            std_sites.join(", ")
        ));
    }

    let manifest = Manifest {
        sites,
        utterances,
        audio_root,
    };

    for utt in &manifest.utterances {
        let audio = manifest.resolve_audio(utt);
        if !audio.is_file() {
            if strict {
                return Err(Error::MissingAudio { path: audio });
            }
            warnings.push(format!("missing audio file: {}", audio.display()));
        }
    }

    Ok((manifest, warnings))
}

/// Write a manifest in the same line-delimited format `load_manifest` reads.
pub fn save_manifest(m: &Manifest, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    for site in &m.sites {
        let rec = Record::Site {
            site_id: site.site_id.clone(),
            name: site.display_name.clone(),
            subgroup: site.subgroup.label().to_string(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::ManifestParse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    for utt in &m.utterances {
        let rec = Record::Utt {
            site_id: utt.site_id.clone(),
            sentence_id: utt.sentence_id,
            audio: utt.audio_path.clone(),
            text: utt.transcript.clone(),
            duration_s: utt.duration_s,
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::ManifestParse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

impl Manifest {
    pub fn site(&self, site_id: &str) -> Option<&Site> {
        self.sites.iter().find(|s| s.site_id == site_id)
    }

    pub fn resolve_audio(&self, utt: &Utterance) -> PathBuf {
        self.audio_root.join(&utt.audio_path)
    }

    /// Sentence ids present at a site, sorted ascending.
    pub fn sentence_ids(&self, site_id: &str) -> BTreeSet<u32> {
        self.utterances
            .iter()
            .filter(|u| u.site_id == site_id)
            .map(|u| u.sentence_id)
            .collect()
    }

    /// Sites grouped by subgroup, in report order.
    pub fn sites_by_subgroup(&self) -> BTreeMap<Subgroup, Vec<&Site>> {
        let mut map: BTreeMap<Subgroup, Vec<&Site>> = BTreeMap::new();
        for site in &self.sites {
            map.entry(site.subgroup.clone()).or_default().push(site);
        }
        map
    }
}

/// Sorted intersection of the two sites' sentence-id sets. Sites with fewer
/// sentences are handled here, at pair time, so retrieval always compares
/// like-for-like sentence pools.
pub fn aligned_sentence_ids(m: &Manifest, a: &str, b: &str) -> Result<Vec<u32>> {
    for site in [a, b] {
        if m.site(site).is_none() {
            return Err(Error::UnknownSite {
                site: site.to_string(),
            });
        }
    }
    let set_a = m.sentence_ids(a);
    let set_b = m.sentence_ids(b);
    Ok(set_a.intersection(&set_b).copied().collect())
}

/// Corpus-level summary. `std_s` is the population standard deviation
/// (divide by N), which the stats report header states explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub site_count: usize,
    pub utterance_count: usize,
    pub known_durations: usize,
    pub total_duration_s: f64,
    pub mean_duration_s: Option<f64>,
    pub std_duration_s: Option<f64>,
}

pub fn corpus_stats(m: &Manifest) -> CorpusStats {
    let durations: Vec<f64> = m.utterances.iter().filter_map(|u| u.duration_s).collect();
    let total: f64 = durations.iter().sum();
    let (mean, std) = if durations.is_empty() {
        (None, None)
    } else {
        let n = durations.len() as f64;
        let mean = total / n;
        let var = durations.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        (Some(mean), Some(var.sqrt()))
    };
    CorpusStats {
        site_count: m.sites.len(),
        utterance_count: m.utterances.len(),
        known_durations: durations.len(),
        total_duration_s: total,
        mean_duration_s: mean,
        std_duration_s: std,
    }
}

impl CorpusStats {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("# duration statistics use the population std (divide by N)\n");
        out.push_str(&format!(
            "{} sites / {} utterances\n",
            self.site_count, self.utterance_count
        ));
        match (self.mean_duration_s, self.std_duration_s) {
            (Some(mean), Some(std)) => {
                let total = self.total_duration_s;
                let h = (total / 3600.0).floor();
                let m = ((total - h * 3600.0) / 60.0).floor();
                let s = total - h * 3600.0 - m * 60.0;
                out.push_str(&format!(
                    "total duration: {total:.1} s ({h:.0} h {m:.0} min {s:.0} s)\n"
                ));
                out.push_str(&format!("duration per utterance: {mean:.1} +/- {std:.1} s\n"));
                let unknown = self.utterance_count - self.known_durations;
                if unknown > 0 {
                    out.push_str(&format!("durations unknown for {unknown} utterances\n"));
                }
            }
            _ => out.push_str("durations unknown\n"),
        }
        out
    }
}
