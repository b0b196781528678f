//! Report serialization and SVG figures.

mod report;
mod svg;

pub use report::{
    emit_report, parse_records_csv, parse_report_json, quantile, read_report, round_sig,
    summarize, AnalysisReport, ImageRecord, ReportFormat, Summary, TableRow, SCHEMA_VERSION,
    SIGNIFICANT_DIGITS,
};
pub use svg::{colormap, render_attention_map, render_attention_svg, render_bar_chart, render_line_chart};
