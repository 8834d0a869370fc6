//! `dfecs` — command-line front end for the DFECS toolkit.

mod config;
mod error;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use dfecs_core::eval::{
    compare_au_sets, encode_dataset, interpretability_metric, ve_curve_by_k, ve_curve_by_l1,
    EncodingMode, InterpretabilityRecord, VarianceCurve,
};
use dfecs_core::geometry::{IdentityFrontalizer, StandardizedFrame, Template};
use dfecs_core::io::{
    au_gallery_svg, au_arrows_svg, curve_svg, load_au_matrix, load_frames, load_model, save_frames,
    save_model, write_curve,
};
use dfecs_core::pipeline::{
    build_kpm, fit_pipeline, standardize_dataset, standardize_with_template, FitOptions,
    PipelineWarning,
};

use config::{resolve, RunFlags};
use error::CliError;

#[derive(Parser)]
#[command(name = "dfecs", version, about = "Data-driven facial expression coding toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonFlags {
    /// TOML config file; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Variance budget in (0, 1)
    #[arg(long)]
    beta: Option<f64>,
    /// Hyperparameter grid preset: default | paper-si
    #[arg(long)]
    grid: Option<String>,
    /// Base RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Subsample this many KPM columns before fitting
    #[arg(long)]
    sample_count: Option<usize>,
    /// Affine anchor set: default | no-jawline
    #[arg(long)]
    anchors: Option<String>,
    /// Subject whose neutral frame defines the template
    #[arg(long)]
    reference: Option<String>,
    /// Output directory (default: $DFECS_OUT, then .)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonFlags {
    fn into_run_flags(self) -> RunFlags {
        RunFlags {
            config: self.config,
            beta: self.beta,
            grid: self.grid,
            seed: self.seed,
            sample_count: self.sample_count,
            anchors: self.anchors,
            reference_subject: self.reference,
            output_dir: self.out,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Standardize raw keypoint frames into template coordinates
    Standardize {
        /// Input frames CSV
        input: PathBuf,
        /// Output CSV (default: <out>/standardized.csv)
        #[arg(long)]
        output: Option<PathBuf>,
        /// Take the template from an existing model archive instead of a
        /// reference subject
        #[arg(long)]
        template_from: Option<PathBuf>,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Fit the full two-level model and write a model archive
    Fit {
        input: PathBuf,
        /// Output archive (default: <out>/model.dfecs)
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Encode frames against a fitted model or an external AU matrix
    Encode {
        input: PathBuf,
        /// Model archive providing AUs and the template
        #[arg(long)]
        model: Option<PathBuf>,
        /// External AU matrix file (needs --template-from or --standardized)
        #[arg(long)]
        au_matrix: Option<PathBuf>,
        /// Archive to borrow the template from when using --au-matrix
        #[arg(long)]
        template_from: Option<PathBuf>,
        /// Treat the input as already standardized
        #[arg(long)]
        standardized: bool,
        /// Encode at this fixed sparsity penalty instead of the full path
        #[arg(long)]
        alpha: Option<f64>,
        /// Largest active-AU budget for the VE curve
        #[arg(long)]
        max_k: Option<usize>,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Summarize curve files and score interpretability votes
    Evaluate {
        /// Curve CSV files produced by encode/compare
        #[arg(long)]
        curves: Vec<PathBuf>,
        /// Interpretability votes CSV: au,vote1,vote2,vote3
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Render the AUs of a model archive as SVG
    Visualize {
        model: PathBuf,
        /// Displacement amplification
        #[arg(long, default_value_t = 8.0)]
        scale: f64,
        /// Minimum displacement magnitude (after scaling) to draw an arrow
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Gallery columns
        #[arg(long, default_value_t = 4)]
        columns: usize,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Encode one dataset against two AU sources and compare the curves
    Compare {
        input: PathBuf,
        /// First AU source: model archive or AU matrix file
        #[arg(long)]
        left: PathBuf,
        /// Second AU source
        #[arg(long)]
        right: PathBuf,
        /// Treat the input as already standardized
        #[arg(long)]
        standardized: bool,
        #[arg(long)]
        max_k: Option<usize>,
        #[command(flatten)]
        common: CommonFlags,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("dfecs-error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Standardize {
            input,
            output,
            template_from,
            common,
        } => standardize_cmd(input, output, template_from, common),
        Command::Fit {
            input,
            output,
            common,
        } => fit_cmd(input, output, common),
        Command::Encode {
            input,
            model,
            au_matrix,
            template_from,
            standardized,
            alpha,
            max_k,
            common,
        } => encode_cmd(
            input,
            model,
            au_matrix,
            template_from,
            standardized,
            alpha,
            max_k,
            common,
        ),
        Command::Evaluate { curves, labels } => evaluate_cmd(curves, labels),
        Command::Visualize {
            model,
            scale,
            threshold,
            columns,
            common,
        } => visualize_cmd(model, scale, threshold, columns, common),
        Command::Compare {
            input,
            left,
            right,
            standardized,
            max_k,
            common,
        } => compare_cmd(input, left, right, standardized, max_k, common),
    }
}

fn report_warnings(warnings: &[PipelineWarning]) {
    let mut skipped_parts = 0usize;
    for w in warnings {
        match w {
            PipelineWarning::SubjectExcluded { subject_id, reason } => {
                eprintln!("warning: subject {subject_id} excluded ({reason})");
            }
            PipelineWarning::PartSkipped { .. } => skipped_parts += 1,
        }
    }
    if skipped_parts > 0 {
        eprintln!("warning: {skipped_parts} part registration steps skipped");
    }
}

fn standardize_cmd(
    input: PathBuf,
    output: Option<PathBuf>,
    template_from: Option<PathBuf>,
    common: CommonFlags,
) -> Result<(), CliError> {
    let cfg = resolve(common.into_run_flags())?;
    let frames = load_frames(&input)?;
    let dataset = match template_from {
        Some(archive) => {
            let model = load_model(&archive)?;
            let template = model
                .template
                .ok_or_else(|| CliError::Archive("archive carries no template".into()))?;
            standardize_with_template(&frames, &template, cfg.anchors, &IdentityFrontalizer)?
        }
        None => standardize_dataset(
            &frames,
            cfg.anchors,
            cfg.reference_subject.as_deref(),
            &IdentityFrontalizer,
        )?,
    };
    report_warnings(&dataset.warnings);
    let out = output.unwrap_or_else(|| cfg.output_dir.join("standardized.csv"));
    ensure_parent(&out)?;
    let raw: Vec<_> = dataset.frames.iter().map(|f| f.to_raw()).collect();
    save_frames(&out, &raw)?;
    println!("standardized {} frames -> {}", raw.len(), out.display());
    Ok(())
}

fn fit_cmd(input: PathBuf, output: Option<PathBuf>, common: CommonFlags) -> Result<(), CliError> {
    let cfg = resolve(common.into_run_flags())?;
    let frames = load_frames(&input)?;
    let options = FitOptions {
        beta: cfg.beta,
        grids: cfg.grids.clone(),
        solver: cfg.solver.clone(),
        anchors: cfg.anchors,
        reference_subject: cfg.reference_subject.clone(),
        sample: cfg.sample_count.map(|n| (n, cfg.solver.seed)),
    };
    let fit = fit_pipeline(&frames, &options)?;
    report_warnings(&fit.warnings);
    for p in &fit.model.parts {
        println!(
            "part {}: k = {}, alpha = {}, VE = {:.2}{}",
            p.part.name(),
            p.k,
            p.alpha,
            p.ve,
            if p.grid_exhausted { " (grid exhausted)" } else { "" }
        );
    }
    let h = &fit.model.hier;
    println!(
        "hierarchy: q = {}, alpha_A = {}, alpha_B = {}, VE = {:.2}{}",
        h.q,
        h.alpha_a,
        h.alpha_b,
        h.ve,
        if h.grid_exhausted { " (grid exhausted)" } else { "" }
    );
    println!("VE(train) = {:.4}", fit.model.ve_train);
    let out = output.unwrap_or_else(|| cfg.output_dir.join("model.dfecs"));
    ensure_parent(&out)?;
    save_model(&out, &fit.model)?;
    println!(
        "model with {} AUs written to {}",
        fit.model.num_aus(),
        out.display()
    );
    Ok(())
}

/// Resolve frames + an AU dictionary (and its template) for encode/compare.
fn load_au_source(path: &Path) -> Result<(DMatrix<f64>, Option<Template>, String), CliError> {
    if path.extension().and_then(|e| e.to_str()) == Some("dfecs") {
        let model = load_model(path)?;
        let name = format!("archive {}", path.display());
        Ok((model.u_prime, model.template, name))
    } else {
        let set = load_au_matrix(path)?;
        let name = format!("{} ({})", path.display(), set.source);
        Ok((set.matrix, None, name))
    }
}

fn standardized_frames(
    frames: &[dfecs_core::geometry::RawFrame],
    template: Option<&Template>,
    standardized: bool,
    cfg: &config::RunConfig,
) -> Result<Vec<StandardizedFrame>, CliError> {
    if standardized {
        return Ok(frames
            .iter()
            .map(|f| StandardizedFrame::assume_standardized(f.clone()))
            .collect());
    }
    let template = template.ok_or_else(|| {
        CliError::Config(
            "no template available: pass --standardized, a model archive, or --template-from"
                .into(),
        )
    })?;
    let ds = standardize_with_template(frames, template, cfg.anchors, &IdentityFrontalizer)?;
    report_warnings(&ds.warnings);
    Ok(ds.frames)
}

#[allow(clippy::too_many_arguments)]
fn encode_cmd(
    input: PathBuf,
    model: Option<PathBuf>,
    au_matrix: Option<PathBuf>,
    template_from: Option<PathBuf>,
    standardized: bool,
    alpha: Option<f64>,
    max_k: Option<usize>,
    common: CommonFlags,
) -> Result<(), CliError> {
    let cfg = resolve(common.into_run_flags())?;
    let source = match (&model, &au_matrix) {
        (Some(m), None) => m.clone(),
        (None, Some(a)) => a.clone(),
        _ => {
            return Err(CliError::Config(
                "pass exactly one of --model or --au-matrix".into(),
            ))
        }
    };
    let (dictionary, mut template, name) = load_au_source(&source)?;
    if let Some(archive) = &template_from {
        template = load_model(archive)?.template;
    }
    let frames = load_frames(&input)?;
    let std_frames = standardized_frames(&frames, template.as_ref(), standardized, &cfg)?;
    let (kpm, warnings) = build_kpm(&std_frames, cfg.sample_count.map(|n| (n, cfg.solver.seed)))?;
    report_warnings(&warnings);

    let mode = match alpha {
        Some(a) => EncodingMode::FixedAlpha(a),
        None => EncodingMode::FullPath,
    };
    let enc = encode_dataset(&dictionary, &kpm.x, mode)?;
    println!(
        "encoded {} frames against {name}: VE = {:.4}, mean L0 = {:.2}, mean L1 = {:.3}",
        kpm.x.ncols(),
        enc.ve,
        enc.mean_l0,
        enc.mean_l1
    );

    std::fs::create_dir_all(&cfg.output_dir)?;
    write_codes_csv(
        &cfg.output_dir.join("encodings.csv"),
        &enc.codes,
        &kpm.columns,
    )?;

    let k_cap = max_k.unwrap_or(dictionary.ncols()).max(1);
    let k_curve = ve_curve_by_k(&dictionary, &kpm.x, k_cap)?;
    emit_curve(&cfg.output_dir, "ve_by_k", &k_curve, "active AUs", "VE (%)")?;

    let full_l1 = enc.mean_l1.max(1e-9);
    let budgets: Vec<f64> = (0..=10).map(|i| i as f64 * 0.2 * full_l1).collect();
    let l1_curve = ve_curve_by_l1(&dictionary, &kpm.x, &budgets)?;
    emit_curve(&cfg.output_dir, "ve_by_l1", &l1_curve, "L1 budget", "VE (%)")?;
    Ok(())
}

fn write_codes_csv(
    path: &Path,
    codes: &DMatrix<f64>,
    columns: &[dfecs_core::kpm::ColumnMeta],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.to_string()))?;
    let mut header = vec!["subject".to_string(), "frame".to_string()];
    header.extend((0..codes.nrows()).map(|i| format!("c{i}")));
    w.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
    for (c, meta) in columns.iter().enumerate() {
        let mut rec = vec![meta.subject_id.clone(), meta.frame_index.to_string()];
        rec.extend((0..codes.nrows()).map(|r| format!("{}", codes[(r, c)])));
        w.write_record(&rec).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    println!("encodings -> {}", path.display());
    Ok(())
}

fn emit_curve(
    dir: &Path,
    stem: &str,
    curve: &VarianceCurve,
    x_label: &str,
    y_label: &str,
) -> Result<(), CliError> {
    let data = dir.join(format!("{stem}.csv"));
    write_curve(&data, curve)?;
    let svg = dir.join(format!("{stem}.svg"));
    std::fs::write(&svg, curve_svg(curve, x_label, y_label)?)?;
    println!("curve -> {} / {}", data.display(), svg.display());
    Ok(())
}

fn evaluate_cmd(curves: Vec<PathBuf>, labels: Option<PathBuf>) -> Result<(), CliError> {
    if curves.is_empty() && labels.is_none() {
        return Err(CliError::Config(
            "pass at least one --curves file or --labels".into(),
        ));
    }
    for path in &curves {
        let curve = read_curve(path)?;
        let best = curve.ve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "curve {}: {} points, axis {} .. {}, peak VE = {best}, samples = {}",
            path.display(),
            curve.axis.len(),
            curve.axis.first().unwrap(),
            curve.axis.last().unwrap(),
            curve.sample_count
        );
    }
    if let Some(path) = labels {
        let records = read_labels(&path)?;
        let score = interpretability_metric(&records)?;
        println!("interpretability = {score}");
    }
    Ok(())
}

fn read_curve(path: &Path) -> Result<VarianceCurve, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("axis,mean_ve,sample_count") => {}
        other => {
            return Err(CliError::Parse(format!(
                "{}: unexpected curve header {other:?}",
                path.display()
            )))
        }
    }
    let mut axis = Vec::new();
    let mut ve = Vec::new();
    let mut sample_count = 0;
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CliError::Parse(format!(
                "{}: row {} has {} fields",
                path.display(),
                i + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|e| CliError::Parse(format!("{}: row {}: {e}", path.display(), i + 2)))
        };
        axis.push(parse(fields[0])?);
        ve.push(parse(fields[1])?);
        sample_count = parse(fields[2])? as usize;
    }
    if axis.is_empty() {
        return Err(CliError::Parse(format!("{}: empty curve", path.display())));
    }
    Ok(VarianceCurve {
        axis,
        ve,
        sample_count,
    })
}

fn read_labels(path: &Path) -> Result<Vec<InterpretabilityRecord>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Parse(e.to_string()))?;
        if rec.len() != 4 {
            return Err(CliError::Parse(format!(
                "labels row {} has {} fields, expected au,vote1,vote2,vote3",
                i + 2,
                rec.len()
            )));
        }
        let au_index: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| CliError::Parse(format!("labels row {}: {e}", i + 2)))?;
        let mut votes = [false; 3];
        for (v, field) in votes.iter_mut().zip(rec.iter().skip(1)) {
            *v = match field.trim() {
                "1" | "true" | "yes" => true,
                "0" | "false" | "no" => false,
                other => {
                    return Err(CliError::Parse(format!(
                        "labels row {}: bad vote {other:?}",
                        i + 2
                    )))
                }
            };
        }
        records.push(InterpretabilityRecord { au_index, votes });
    }
    Ok(records)
}

fn visualize_cmd(
    model_path: PathBuf,
    scale: f64,
    threshold: f64,
    columns: usize,
    common: CommonFlags,
) -> Result<(), CliError> {
    let cfg = resolve(common.into_run_flags())?;
    let model = load_model(&model_path)?;
    let template = model
        .template
        .as_ref()
        .ok_or_else(|| CliError::Archive("archive carries no template".into()))?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    for j in 0..model.u_prime.ncols() {
        let col: Vec<f64> = model.u_prime.column(j).iter().copied().collect();
        let svg = au_arrows_svg(template, &col, scale, threshold)?;
        let path = cfg.output_dir.join(format!("au_{:02}.svg", j + 1));
        std::fs::write(&path, svg)?;
    }
    let gallery = au_gallery_svg(template, &model.u_prime, scale, threshold, columns)?;
    let path = cfg.output_dir.join("au_gallery.svg");
    std::fs::write(&path, gallery)?;
    println!(
        "{} AU renderings + gallery -> {}",
        model.u_prime.ncols(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn compare_cmd(
    input: PathBuf,
    left: PathBuf,
    right: PathBuf,
    standardized: bool,
    max_k: Option<usize>,
    common: CommonFlags,
) -> Result<(), CliError> {
    let cfg = resolve(common.into_run_flags())?;
    let (left_aus, left_template, left_name) = load_au_source(&left)?;
    let (right_aus, right_template, right_name) = load_au_source(&right)?;
    let template = left_template.or(right_template);
    let frames = load_frames(&input)?;
    let std_frames = standardized_frames(&frames, template.as_ref(), standardized, &cfg)?;
    let (kpm, warnings) = build_kpm(&std_frames, cfg.sample_count.map(|n| (n, cfg.solver.seed)))?;
    report_warnings(&warnings);

    let k_cap = max_k
        .unwrap_or_else(|| left_aus.ncols().max(right_aus.ncols()))
        .max(1);
    let left_curve = ve_curve_by_k(&left_aus, &kpm.x, k_cap)?;
    let right_curve = ve_curve_by_k(&right_aus, &kpm.x, k_cap)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    emit_curve(&cfg.output_dir, "compare_left", &left_curve, "active AUs", "VE (%)")?;
    emit_curve(&cfg.output_dir, "compare_right", &right_curve, "active AUs", "VE (%)")?;

    println!("left:  {left_name} ({} AUs)", left_aus.ncols());
    println!("right: {right_name} ({} AUs)", right_aus.ncols());
    let matched = compare_au_sets(&left_aus, &right_aus)?;
    println!(
        "best-match cosine (right AUs against left): mean = {:.4}",
        matched.mean_cosine
    );
    let identical = left_curve == right_curve;
    println!(
        "curves {}",
        if identical { "identical" } else { "differ" }
    );
    for (k, (l, r)) in left_curve.ve.iter().zip(&right_curve.ve).enumerate() {
        println!("k = {k}: left VE = {l:.4}, right VE = {r:.4}");
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}
