//! Table rendering: plain text, CSV and Markdown.

use std::fmt::Write as _;

use super::{BenchError, BenchReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self, BenchError> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(BenchError::UnknownConfig(format!("report format `{other}`"))),
        }
    }
}

const HEADER: [&str; 3] = ["Configuration", "Time (s)", "Speedup"];

fn rows(report: &BenchReport) -> Vec<[String; 3]> {
    report
        .results
        .iter()
        .map(|r| [r.config.name().to_string(), format!("{:.4}", r.seconds), format!("{:.2}", r.speedup)])
        .collect()
}

pub fn render(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => text(report),
        ReportFormat::Csv => csv(report),
        ReportFormat::Markdown => markdown(report),
    }
}

fn text(report: &BenchReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<18} {:>10} {:>9}", HEADER[0], HEADER[1], HEADER[2]);
    for [c, t, s] in rows(report) {
        let _ = writeln!(out, "{c:<18} {t:>10} {s:>9}");
    }
    for r in &report.results {
        if let Some(b) = &r.breakdown {
            let _ = writeln!(
                out,
                "\n{} time = DMA in {:.6} s + compute {:.6} s ({} cycles at {:.0} MHz) + DMA out {:.6} s + host {:.6} s",
                r.config,
                b.dma_in_seconds,
                b.compute_seconds,
                b.pipeline_cycles,
                b.fabric_clock_hz / 1e6,
                b.dma_out_seconds,
                b.host_overhead_seconds,
            );
        }
    }
    if let Some(first) = report.results.first() {
        let _ = writeln!(out, "\noutput digest (sha256, all configurations): {}", first.digest);
    }
    let _ = writeln!(out, "baseline: {}", report.baseline);
    for n in &report.notices {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

fn csv(report: &BenchReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("writing to memory");
    for row in rows(report) {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}

fn markdown(report: &BenchReport) -> String {
    let mut out = format!("| {} | {} | {} |\n|---|---:|---:|\n", HEADER[0], HEADER[1], HEADER[2]);
    for [c, t, s] in rows(report) {
        let _ = writeln!(out, "| {c} | {t} | {s} |");
    }
    out
}
