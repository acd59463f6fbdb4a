//! Rendering of recall matrices as CSV and markdown tables.
//!
//! Source subgroups are rows, targets are columns, recalls are percentages
//! to one decimal, cells that were not computed show "--". Every rendering
//! starts with a provenance header so a table can be traced back to the
//! exact inputs that produced it.

use crate::retrieval::RecallMatrix;

#[derive(Debug, Clone)]
pub struct ReportProvenance {
    pub manifest_hash: String,
    pub provider_id: String,
    pub frames_normalized: bool,
    pub toolkit_version: String,
    pub config_hash: Option<String>,
}

impl ReportProvenance {
    pub fn new(manifest_hash: impl Into<String>, provider_id: impl Into<String>, frames_normalized: bool) -> Self {
        ReportProvenance {
            manifest_hash: manifest_hash.into(),
            provider_id: provider_id.into(),
            frames_normalized,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: None,
        }
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.config_hash = Some(hash.into());
        self
    }

    fn lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("toolkit_version: {}", self.toolkit_version),
            format!("manifest_hash: {}", self.manifest_hash),
            format!("embedding_provider: {}", self.provider_id),
            format!("frames_normalized: {}", self.frames_normalized),
        ];
        if let Some(hash) = &self.config_hash {
            lines.push(format!("config_hash: {hash}"));
        }
        lines
    }
}

fn csv_field(name: &str) -> String {
    if name.contains(',') || name.contains('"') {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_string()
    }
}

fn percent(recall: f64) -> String {
    format!("{:.1}", recall * 100.0)
}

pub fn render_csv(matrix: &RecallMatrix, provenance: &ReportProvenance) -> String {
    let mut out = String::new();
    for line in provenance.lines() {
        out.push_str("# ");
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("# values: recall percent to 1 decimal; -- = not computed\n");

    let names: Vec<String> = matrix
        .subgroups
        .iter()
        .map(|sg| csv_field(&sg.display_name()))
        .collect();
    let header = std::iter::once("source\\target".to_string())
        .chain(names.iter().cloned())
        .collect::<Vec<_>>()
        .join(",");
    out.push_str(&header);
    out.push('\n');
    for src in &matrix.subgroups {
        let mut row = vec![csv_field(&src.display_name())];
        for tgt in &matrix.subgroups {
            row.push(match matrix.cell(src, tgt) {
                Some(cell) => percent(cell.mean_recall),
                None => "--".to_string(),
            });
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }

    out.push_str("# pair counts\n");
    out.push_str(&header);
    out.push('\n');
    for src in &matrix.subgroups {
        let mut row = vec![csv_field(&src.display_name())];
        for tgt in &matrix.subgroups {
            row.push(match matrix.cell(src, tgt) {
                Some(cell) => cell.n_pairs.to_string(),
                None => "--".to_string(),
            });
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    for note in &matrix.skipped {
        out.push_str("# skipped: ");
        out.push_str(note);
        out.push('\n');
    }
    out
}

pub fn render_markdown(matrix: &RecallMatrix, provenance: &ReportProvenance) -> String {
    let mut out = String::from("# Speech-to-speech retrieval recall\n\n");
    for line in provenance.lines() {
        out.push_str("- ");
        out.push_str(&line);
        out.push('\n');
    }
    out.push('\n');

    let names: Vec<String> = matrix
        .subgroups
        .iter()
        .map(|sg| sg.display_name())
        .collect();
    out.push_str("Recall (%), source rows by target columns:\n\n");
    out.push_str("| source \\ target |");
    for name in &names {
        out.push_str(&format!(" {name} |"));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &names {
        out.push_str("---|");
    }
    out.push('\n');
    for src in &matrix.subgroups {
        out.push_str(&format!("| {} |", src.display_name()));
        for tgt in &matrix.subgroups {
            let cell = match matrix.cell(src, tgt) {
                Some(cell) => percent(cell.mean_recall),
                None => "--".to_string(),
            };
            out.push_str(&format!(" {cell} |"));
        }
        out.push('\n');
    }

    out.push_str("\nCity pairs per cell:\n\n");
    out.push_str("| source \\ target |");
    for name in &names {
        out.push_str(&format!(" {name} |"));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &names {
        out.push_str("---|");
    }
    out.push('\n');
    for src in &matrix.subgroups {
        out.push_str(&format!("| {} |", src.display_name()));
        for tgt in &matrix.subgroups {
            let cell = match matrix.cell(src, tgt) {
                Some(cell) => cell.n_pairs.to_string(),
                None => "--".to_string(),
            };
            out.push_str(&format!(" {cell} |"));
        }
        out.push('\n');
    }

    if !matrix.skipped.is_empty() {
        out.push_str("\nSkipped pairs:\n\n");
        for note in &matrix.skipped {
            out.push_str(&format!("- {note}\n"));
        }
    }
    out
}

/// Parse the recall table back out of `render_csv` output. Used by tests to
/// check the round trip; ignores provenance comments and the counts block.
pub fn parse_csv_recalls(csv: &str) -> Vec<(String, String, f64)> {
    let mut rows = Vec::new();
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = match lines.next() {
        Some(h) => h.split(',').collect(),
        None => return rows,
    };
    for line in lines {
        if line.starts_with("source\\target") {
            break; // reached the counts block header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            break;
        }
        for (k, field) in fields.iter().enumerate().skip(1) {
            if *field == "--" {
                continue;
            }
            if let Ok(pct) = field.parse::<f64>() {
                rows.push((fields[0].to_string(), header[k].to_string(), pct / 100.0));
            }
        }
    }
    rows
}
