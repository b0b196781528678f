mod args;
mod checkpoints;
mod commands;
mod pipeline;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use vip_core::model::{MlpKind, Model, ModelConfig};
use vip_core::reporting::{emit_report, ReportFormat};
use vip_core::{Result, VipError};

use args::{Cli, Command, CommonArgs, Format, SynthArgs};
use pipeline::Context;

/// Process exit code for each error kind. Usage errors exit with 2 (clap).
fn exit_code(e: &VipError) -> u8 {
    match e {
        VipError::InvalidArgument(_) => 10,
        VipError::MissingTensor(_) | VipError::ShapeMismatch { .. } => 11,
        VipError::Format(_) | VipError::Serde(_) => 12,
        VipError::Decode { .. } => 13,
        VipError::Preprocess(_) => 14,
        VipError::EmptyDataset(_) => 15,
        VipError::InvalidDataset(_) => 16,
        VipError::UndefinedResult(_) => 17,
        VipError::Io { .. } => 18,
        VipError::NonFinite(_) => 19,
    }
}

fn write_report(
    report: &mut vip_core::reporting::AnalysisReport,
    args: &CommonArgs,
) -> Result<()> {
    report.finalize();
    let format = match args.format {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    let path = args
        .out
        .join(format!("{}.{}", report.command, format.extension()));
    emit_report(report, format, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| VipError::Io {
        path: out.to_path_buf(),
        source: e,
    })
}

fn analysis(args: &CommonArgs, run: impl FnOnce(&Context) -> Result<vip_core::reporting::AnalysisReport>) -> Result<()> {
    let ctx = Context::new(args)?;
    create_out(&args.out)?;
    let mut report = run(&ctx)?;
    write_report(&mut report, args)
}

fn synth_model(a: &SynthArgs) -> Result<()> {
    let config = ModelConfig {
        patch_size: a.patch_size,
        pos_grid: [a.grid, a.grid],
        mlp_hidden: a.mlp_hidden.unwrap_or(2 * a.dim),
        mlp_kind: if a.swiglu { MlpKind::Swiglu } else { MlpKind::GeluMlp },
        layerscale: a.layerscale,
        ..ModelConfig::tiny(a.depth, a.dim, a.heads, a.registers)
    };
    let model = Model::random(config, a.seed)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_out(dir)?;
    }
    model.save(&a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Partition(a) => analysis(&a, commands::partition),
        Command::Decompose(a) => analysis(&a, commands::decompose),
        Command::Cka(a) => analysis(&a, commands::cka),
        Command::Probe(a) => analysis(&a.common, |ctx| commands::probe(ctx, &a)),
        Command::Layers(a) => analysis(&a, |ctx| commands::layers(ctx, &a.out)),
        Command::Norms(a) => analysis(&a.common, |ctx| commands::norms(ctx, &a, &a.common.out)),
        Command::Render(a) => analysis(&a, |ctx| commands::render(ctx, &a.out)),
        Command::SynthModel(a) => synth_model(&a),
        Command::Checkpoints => {
            for c in checkpoints::manifest() {
                println!("{}\t{}\t{}", c.name, c.source, c.file);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
