//! `gpa`: fit the GPA model, run its tests, report FDR decisions and drive
//! the simulation lab from the command line.
//!
//! Exit status: 0 success, 2 usage or configuration error, 3 data error,
//! 4 numerical failure. Failures print one tab-separated line
//! `error<TAB>kind=<kind><TAB>message=<text>` on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpa_core::em::fit;
use gpa_core::inference::fdr::fdr_report_from_posteriors;
use gpa_core::inference::lrt::{enrichment_from_fits, pleiotropy_from_fits, pooled_annotation_loglik};
use gpa_core::io::{
    read_annotation, read_json, read_pvalues, write_decisions, write_json, write_posteriors, AnnotationReport,
    FitDocument, IngestionReport, InputRecord, LrtDocument, RunSettings, SCHEMA_VERSION,
};
use gpa_core::io::serialize::write_atomic;
use gpa_core::sim::{run_benchmark, simulate_study_pair, BenchmarkConfig, BenchmarkManifest, SimConfig};
use gpa_core::{e_step, standard_errors, AnnotationMatrix, EmOptions, GpaError, PValueMatrix};

#[derive(Parser)]
#[command(name = "gpa", version, about = "Joint analysis of GWAS p-values with functional annotations")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "GPA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model and write a JSON result document.
    Fit(FitArgs),
    /// Test for pleiotropy between two studies.
    TestPleiotropy(TestArgs),
    /// Test one annotation for enrichment among associated SNPs.
    TestEnrichment(EnrichmentArgs),
    /// Local fdr and global FDR decisions from a fitted model.
    Fdr(FdrArgs),
    /// Simulate a case-control study pair under the liability threshold model.
    Simulate(SimulateArgs),
    /// Run the analysis-mode benchmark over simulated data.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct InputArgs {
    /// P-value TSV (SNP id first); repeat to join several files on SNP id.
    #[arg(long = "pvalues", required = true)]
    pvalues: Vec<PathBuf>,
    /// Study columns to use (default: every non-id column).
    #[arg(long = "pvalue-cols", value_delimiter = ',')]
    pvalue_cols: Option<Vec<String>>,
    /// Annotation TSV of 0/1 entries (SNP id first).
    #[arg(long)]
    annotation: Option<PathBuf>,
    /// Annotation columns to use (default: every non-id column).
    #[arg(long = "ann-cols", value_delimiter = ',', requires = "annotation")]
    ann_cols: Option<Vec<String>>,
    /// Value for analysis SNPs missing from the annotation file.
    #[arg(long = "fill-missing", requires = "annotation", value_parser = clap::value_parser!(u8).range(0..=1))]
    fill_missing: Option<u8>,
}

#[derive(Args)]
struct EmArgs {
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long = "max-iters", default_value_t = 10_000)]
    max_iters: usize,
    /// Recorded with the fit; the default initialization is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Rows per reduction chunk; results are bit-reproducible for a fixed value.
    #[arg(long = "chunk-size", default_value_t = gpa_core::reduce::DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
}

impl EmArgs {
    fn options(&self) -> EmOptions {
        EmOptions {
            tol: self.tol,
            max_iters: self.max_iters,
            seed: self.seed,
            chunk_size: self.chunk_size,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-SNP state posteriors as TSV.
    #[arg(long)]
    posteriors: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnrichmentArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    em: EmArgs,
    /// Annotation column to test, by name or 1-based position.
    #[arg(long = "ann-col")]
    ann_col: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FdrArgs {
    /// Fit document written by `gpa fit`; its recorded inputs are re-read.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML simulation settings; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for pvalues.tsv, annotation.tsv, truth.tsv and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// TOML benchmark settings; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

struct Loaded {
    pvalues: PValueMatrix,
    annotation: Option<AnnotationMatrix>,
    ingestion: IngestionReport,
    annotation_ingestion: Option<AnnotationReport>,
    record: InputRecord,
}

fn load(input: &InputArgs) -> Result<Loaded, GpaError> {
    let (pvalues, ingestion) = read_pvalues(&input.pvalues, input.pvalue_cols.as_deref())?;
    let (annotation, annotation_ingestion) = match &input.annotation {
        Some(path) => {
            let (a, r) = read_annotation(path, input.ann_cols.as_deref(), &pvalues, input.fill_missing)?;
            (Some(a), Some(r))
        }
        None => (None, None),
    };
    let record = InputRecord {
        pvalue_files: input.pvalues.iter().map(|p| p.display().to_string()).collect(),
        pvalue_columns: input.pvalue_cols.clone(),
        annotation_file: input.annotation.as_ref().map(|p| p.display().to_string()),
        annotation_columns: input.ann_cols.clone(),
        fill_missing: input.fill_missing,
    };
    Ok(Loaded {
        pvalues,
        annotation,
        ingestion,
        annotation_ingestion,
        record,
    })
}

fn run_settings(em: &EmArgs) -> RunSettings {
    RunSettings {
        threads: rayon::current_num_threads(),
        chunk_size: em.chunk_size,
    }
}

fn cmd_fit(args: &FitArgs) -> Result<(), GpaError> {
    let data = load(&args.input)?;
    let opts = args.em.options();
    let mut result = fit(&data.pvalues, data.annotation.as_ref(), &opts, false)?;
    result.std_errors = match standard_errors(&result, &data.pvalues, data.annotation.as_ref()) {
        Ok(se) => Some(se),
        Err(GpaError::Numerical(msg)) => {
            eprintln!("warning\tkind=numerical\tmessage=standard errors unavailable: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    let labels = data
        .annotation
        .as_ref()
        .map(|a| a.annotation_labels().to_vec())
        .unwrap_or_default();
    let doc = FitDocument::new(
        &result,
        &data.pvalues,
        labels,
        data.record,
        data.ingestion,
        data.annotation_ingestion,
        run_settings(&args.em),
    );
    write_json(&args.out, &doc)?;
    if let Some(path) = &args.posteriors {
        write_posteriors(path, data.pvalues.snp_ids(), &result.posteriors)?;
    }
    println!(
        "fit\tsnps={}\tstudies={}\tloglik={}\titerations={}\tconverged={}",
        data.pvalues.n_snps(),
        data.pvalues.n_studies(),
        doc.loglik,
        doc.iterations,
        doc.converged
    );
    Ok(())
}

fn cmd_pleiotropy(args: &TestArgs) -> Result<(), GpaError> {
    let data = load(&args.input)?;
    if data.pvalues.n_studies() != 2 {
        return Err(GpaError::Config(format!(
            "pleiotropy is tested between 2 studies, got {}",
            data.pvalues.n_studies()
        )));
    }
    let opts = args.em.options();
    let alt = fit(&data.pvalues, data.annotation.as_ref(), &opts, false)?;
    let null = fit(&data.pvalues, data.annotation.as_ref(), &opts, true)?;
    let res = pleiotropy_from_fits(&alt, &null)?;
    write_json(&args.out, &LrtDocument::new(&res, data.record, run_settings(&args.em)))?;
    println!("test-pleiotropy\tstatistic={}\tdf={}\tp={}", res.statistic, res.df, res.p_value);
    Ok(())
}

fn cmd_enrichment(args: &EnrichmentArgs) -> Result<(), GpaError> {
    let mut data = load(&args.input)?;
    let ann = data
        .annotation
        .take()
        .ok_or_else(|| GpaError::Config("test-enrichment needs --annotation".into()))?;
    let labels = ann.annotation_labels();
    let d = match labels.iter().position(|l| *l == args.ann_col) {
        Some(d) => d,
        None => match args.ann_col.parse::<usize>() {
            Ok(i) if (1..=labels.len()).contains(&i) => i - 1,
            _ => {
                return Err(GpaError::Config(format!(
                    "annotation column '{}' not found among {}",
                    args.ann_col,
                    labels.join(", ")
                )))
            }
        },
    };
    let column = ann.column(d)?;
    pooled_annotation_loglik(&column)?;
    let opts = args.em.options();
    let alt = fit(&data.pvalues, Some(&column), &opts, false)?;
    let null = fit(&data.pvalues, None, &opts, false)?;
    let res = enrichment_from_fits(&alt, &null, &column)?;
    data.record.annotation_columns = Some(vec![column.annotation_labels()[0].clone()]);
    write_json(&args.out, &LrtDocument::new(&res, data.record, run_settings(&args.em)))?;
    println!("test-enrichment\tstatistic={}\tdf={}\tp={}", res.statistic, res.df, res.p_value);
    Ok(())
}

fn cmd_fdr(args: &FdrArgs) -> Result<(), GpaError> {
    let doc: FitDocument = read_json(&args.fit)?;
    let input = InputArgs {
        pvalues: doc.inputs.pvalue_files.iter().map(PathBuf::from).collect(),
        pvalue_cols: doc.inputs.pvalue_columns.clone(),
        annotation: doc.inputs.annotation_file.as_ref().map(PathBuf::from),
        ann_cols: doc.inputs.annotation_columns.clone(),
        fill_missing: doc.inputs.fill_missing,
    };
    let data = load(&input)?;
    if data.ingestion != doc.ingestion || data.pvalues.study_labels() != doc.study_labels.as_slice() {
        return Err(GpaError::Data(format!(
            "inputs recorded in {} changed since the fit",
            args.fit.display()
        )));
    }
    let posteriors = e_step(&data.pvalues, data.annotation.as_ref(), &doc.params)?;
    let report = fdr_report_from_posteriors(&posteriors, data.pvalues.n_studies(), args.tau)?;
    write_decisions(&args.out, data.pvalues.snp_ids(), data.pvalues.study_labels(), &report)?;
    let declared: Vec<String> = (0..data.pvalues.n_studies())
        .map(|k| report.decisions.column(k).iter().filter(|&&d| d).count().to_string())
        .collect();
    println!("fdr\ttau={}\tdeclared={}", args.tau, declared.join(","));
    Ok(())
}

fn read_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, GpaError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| GpaError::io(p, e))?;
            toml::from_str(&text).map_err(|e| {
                GpaError::Config(format!("{}: {}", p.display(), e.to_string().replace('\n', " ")))
            })
        }
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), GpaError> {
    let cfg: SimConfig = read_toml(args.config.as_deref())?;
    let sim = simulate_study_pair(&cfg)?;
    fs::create_dir_all(&args.out).map_err(|e| GpaError::io(&args.out, e))?;
    let ids = sim.pvalues.snp_ids();
    let labels = sim.pvalues.study_labels();
    let t = &sim.truth;
    write_atomic(args.out.join("pvalues.tsv"), |w| {
        writeln!(w, "snp_id\t{}", labels.join("\t"))?;
        for (id, row) in ids.iter().zip(sim.pvalues.values().rows()) {
            write!(w, "{id}")?;
            for p in row {
                write!(w, "\t{p}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_atomic(args.out.join("annotation.tsv"), |w| {
        writeln!(w, "snp_id\t{}", sim.annotation.annotation_labels().join("\t"))?;
        for (id, row) in ids.iter().zip(sim.annotation.values().rows()) {
            write!(w, "{id}")?;
            for a in row {
                write!(w, "\t{a}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    let mut effects = vec![vec![None; ids.len()]; t.effects.len()];
    for (trait_effects, out) in t.effects.iter().zip(effects.iter_mut()) {
        for &(j, beta) in trait_effects {
            out[j] = Some(beta);
        }
    }
    write_atomic(args.out.join("truth.tsv"), |w| {
        write!(w, "snp_id\tmaf\tannotated")?;
        for l in labels {
            write!(w, "\tcausal_{l}\teffect_{l}")?;
        }
        writeln!(w)?;
        for (j, id) in ids.iter().enumerate() {
            write!(w, "{id}\t{}\t{}", t.mafs[j], u8::from(t.annotation[j]))?;
            for (c, e) in t.causal.iter().zip(&effects) {
                let e = e[j].map_or("0".to_string(), |b| b.to_string());
                write!(w, "\t{}\t{e}", u8::from(c[j]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    let manifest = serde_json::json!({
        "gpa_spec_version": SCHEMA_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "threads": rayon::current_num_threads(),
        "n_shared": t.n_shared,
        "case_fraction": t.case_fraction,
        "cohort_size": t.cohort_size,
    });
    write_json(args.out.join("manifest.json"), &manifest)?;
    println!("simulate\tsnps={}\tstudies={}\tshared={}", ids.len(), labels.len(), t.n_shared);
    Ok(())
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<(), GpaError> {
    let cfg: BenchmarkConfig = read_toml(args.config.as_deref())?;
    let table = run_benchmark(&cfg)?;
    let tsv = table.to_tsv();
    write_atomic(&args.out, |w| w.write_all(tsv.as_bytes()))?;
    if let Some(path) = &args.manifest {
        let mut manifest = serde_json::to_value(BenchmarkManifest::new(&cfg, rayon::current_num_threads()))
            .map_err(|e| GpaError::Numerical(e.to_string()))?;
        manifest["gpa_spec_version"] = SCHEMA_VERSION.into();
        write_json(path, &manifest)?;
    }
    let failed: usize = table.summary.iter().map(|s| s.n_failed).sum();
    println!("benchmark\trows={}\tfailed={failed}", table.rows.len());
    Ok(())
}

fn exit_code(e: &GpaError) -> (u8, &'static str) {
    match e {
        GpaError::Config(_) | GpaError::Domain(_) => (2, "usage"),
        GpaError::Data(_) | GpaError::Io { .. } => (3, "data"),
        GpaError::Numerical(_) => (4, "numerical"),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error\tkind=usage\tmessage={}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error\tkind=usage\tmessage=--threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error\tkind=usage\tmessage={}", one_line(&e.to_string()));
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::TestPleiotropy(a) => cmd_pleiotropy(a),
        Command::TestEnrichment(a) => cmd_enrichment(a),
        Command::Fdr(a) => cmd_fdr(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = exit_code(&e);
            eprintln!("error\tkind={kind}\tmessage={}", one_line(&e.to_string()));
            ExitCode::from(code)
        }
    }
}
