//! File-level driver: sanitizes a plain-text or TSV corpus line by line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::sanitizer::{tokenize, Record, SanitizeError, Sanitizer, TokenCounts};

const BATCH_LINES: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusFormat {
    /// One record per line.
    PlainText,
    /// Tab-separated rows; only `column` is sanitized.
    Tsv { column: usize, header: bool },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub lines: u64,
    pub counts: TokenCounts,
}

struct Line {
    /// Cells of a TSV row; empty for plain text.
    cells: Vec<String>,
    record: Record,
}

/// Reads `input`, writes the sanitized corpus to `output` with the same line
/// structure, and returns token counts.
pub fn sanitize_corpus(
    input: &Path,
    output: &Path,
    sanitizer: &Sanitizer<'_>,
    format: CorpusFormat,
) -> Result<RunSummary, SanitizeError> {
    let reader = BufReader::new(File::open(input)?);
    let mut writer = BufWriter::new(File::create(output)?);
    let summary = sanitize_stream(reader, &mut writer, sanitizer, format)?;
    writer.flush()?;
    Ok(summary)
}

pub fn sanitize_stream<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    sanitizer: &Sanitizer<'_>,
    format: CorpusFormat,
) -> Result<RunSummary, SanitizeError> {
    let lowercase = sanitizer.config().lowercase;
    let mut summary = RunSummary::default();
    let mut expected_columns = None;
    let mut batch: Vec<Line> = Vec::with_capacity(BATCH_LINES);
    let mut record_index = 0u64;

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let line_no = i + 1;
        summary.lines += 1;
        match format {
            CorpusFormat::PlainText => batch.push(Line {
                cells: Vec::new(),
                record: tokenize(line, lowercase),
            }),
            CorpusFormat::Tsv { column, header } => {
                let cells: Vec<String> = line.split('\t').map(str::to_owned).collect();
                let expected = *expected_columns.get_or_insert(cells.len());
                if cells.len() != expected {
                    return Err(SanitizeError::ColumnCount {
                        line: line_no,
                        expected,
                        found: cells.len(),
                    });
                }
                if column >= cells.len() {
                    return Err(SanitizeError::MissingColumn {
                        line: line_no,
                        column,
                        found: cells.len(),
                    });
                }
                if header && line_no == 1 {
                    writeln!(writer, "{line}")?;
                    continue;
                }
                let record = tokenize(&cells[column], lowercase);
                batch.push(Line { cells, record });
            }
        }
        if batch.len() == BATCH_LINES {
            flush_batch(&mut writer, sanitizer, format, &mut batch, &mut record_index, &mut summary)?;
        }
    }
    flush_batch(&mut writer, sanitizer, format, &mut batch, &mut record_index, &mut summary)?;
    Ok(summary)
}

fn flush_batch<W: Write>(
    writer: &mut W,
    sanitizer: &Sanitizer<'_>,
    format: CorpusFormat,
    batch: &mut Vec<Line>,
    record_index: &mut u64,
    summary: &mut RunSummary,
) -> Result<(), SanitizeError> {
    let records: Vec<Record> = batch.iter_mut().map(|l| std::mem::take(&mut l.record)).collect();
    let sanitized = sanitizer.sanitize_records(*record_index, &records)?;
    for (line, out) in batch.iter_mut().zip(&sanitized) {
        let text = out.text();
        match format {
            CorpusFormat::PlainText => writeln!(writer, "{text}")?,
            CorpusFormat::Tsv { column, .. } => {
                line.cells[column] = text;
                writeln!(writer, "{}", line.cells.join("\t"))?;
            }
        }
        summary.counts.records += 1;
        for a in &out.actions {
            summary.counts.add(*a);
        }
    }
    *record_index += batch.len() as u64;
    batch.clear();
    Ok(())
}
