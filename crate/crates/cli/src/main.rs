//! Command-line surface of the permission-gap toolkit.
//!
//! Machine-readable JSON goes to stdout (or `--out`); human diagnostics go
//! to stderr. Exit codes: 0 success, 1 operational error, 2 a permission
//! gap was found (`gap`), 3 a soundness violation row was found (`diff`).

use anyhow::{Context, Result, bail};
use clap::{Args, Parser, Subcommand, ValueEnum};
use permgap_core::callgraph::{Mode, build_call_graph};
use permgap_core::ir::{
    Manifest, Program, ServiceTable, SinkConfig, parse_manifest, parse_program,
    parse_service_table, parse_sink_config, serialize_manifest, serialize_program,
    serialize_service_table, serialize_sink_config,
};
use permgap_core::mapper::PermissionAccessMatrix;
use permgap_core::oracle::corpus::{CorpusBundle, GenSpec, generate_corpus};
use permgap_core::oracle::{ExecConfig, ExecTrace, execute};
use permgap_core::pipeline::{
    DEFAULT_ASCENT_BUDGET, MapOptions, analyze_app, analyze_framework, diff_map_vs_traces,
    diff_maps, run_gap,
};
use permgap_core::space::AnalysisSpace;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "permgap",
    version,
    about = "Permission maps, access vectors and permission-gap reports for PBIR programs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the framework's entry-point-to-permission map
    Map(MapArgs),
    /// Extract the framework entry points an application may call
    Scan(ScanArgs),
    /// Report the application's permission gap against its manifest
    Gap(GapArgs),
    /// Run the bounded exhaustive interpreter over a bundle
    Exec(ExecArgs),
    /// Generate a seeded corpus bundle
    Gen(GenArgs),
    /// Compare two maps, or a map against recorded execution traces
    Diff(DiffArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Cha,
    Rta,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Cha => Mode::Cha,
            ModeArg::Rta => Mode::Rta,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Args)]
struct InputArgs {
    /// Directory holding framework.json, app.json, manifest.json,
    /// services.json and sinks.json; explicit paths override its entries
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    framework: Option<PathBuf>,
    #[arg(long)]
    app: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    services: Option<PathBuf>,
    #[arg(long)]
    sinks: Option<PathBuf>,
}

impl InputArgs {
    fn resolve(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        if let Some(p) = explicit {
            return Ok(p.clone());
        }
        if let Some(dir) = &self.bundle {
            return Ok(dir.join(name));
        }
        bail!("missing --{} (or --bundle)", name.trim_end_matches(".json"));
    }

    fn framework(&self) -> Result<Program> {
        load(&self.resolve(&self.framework, "framework.json")?, parse_program)
    }

    fn app(&self) -> Result<Program> {
        load(&self.resolve(&self.app, "app.json")?, parse_program)
    }

    fn manifest(&self) -> Result<Manifest> {
        load(&self.resolve(&self.manifest, "manifest.json")?, parse_manifest)
    }

    fn services(&self) -> Result<ServiceTable> {
        load(&self.resolve(&self.services, "services.json")?, parse_service_table)
    }

    fn sinks(&self) -> Result<SinkConfig> {
        load(&self.resolve(&self.sinks, "sinks.json")?, parse_sink_config)
    }
}

fn load<T, E: std::error::Error + Send + Sync + 'static>(
    path: &Path,
    parse: impl Fn(&[u8]) -> Result<T, E>,
) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&bytes).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Args)]
struct AnalysisArgs {
    /// Dispatch mode: class hierarchy (cha) or rapid type analysis (rta)
    #[arg(long, value_enum, default_value = "rta")]
    mode: ModeArg,
    /// Attribute the whole vocabulary to unresolved check sites instead of
    /// excluding them
    #[arg(long)]
    strict: bool,
    /// Analyze programs with dynamic features anyway (stamps the report)
    #[arg(long)]
    force: bool,
    /// Do not explore call chains deeper than this from each root
    #[arg(long)]
    max_depth: Option<u32>,
    /// Caller-ascent levels for permission-string recovery
    #[arg(long, default_value_t = DEFAULT_ASCENT_BUDGET)]
    ascent_budget: u32,
    /// Analysis worker threads (default: PERMGAP_JOBS or 1)
    #[arg(long)]
    jobs: Option<usize>,
}

impl AnalysisArgs {
    fn options(&self) -> MapOptions {
        let jobs = self
            .jobs
            .or_else(|| std::env::var("PERMGAP_JOBS").ok().and_then(|v| v.parse().ok()))
            .unwrap_or(1)
            .max(1);
        MapOptions {
            mode: self.mode.into(),
            strict: self.strict,
            max_depth: self.max_depth,
            ascent_budget: self.ascent_budget,
            jobs,
            force: self.force,
        }
    }
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump one call graph per entry point into this directory
    #[arg(long)]
    dump_graphs: Option<PathBuf>,
    /// Graph dump format
    #[arg(long, value_enum, default_value = "dot")]
    dump_format: DumpFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DumpFormat {
    Dot,
    Json,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    analysis: AnalysisArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GapArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Reuse a map artifact written by `map` instead of re-analyzing the
    /// framework
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExecArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[arg(long, default_value_t = 3)]
    loop_bound: u32,
    #[arg(long, default_value_t = 100_000)]
    path_budget: u64,
    #[arg(long, default_value_t = 10_000)]
    step_budget: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    /// Directory the bundle documents are written into
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 24)]
    methods: usize,
    #[arg(long, default_value_t = 8)]
    perms: usize,
    #[arg(long, default_value_t = 1)]
    services: usize,
    #[arg(long, default_value_t = 0.35)]
    p_branch: f64,
    #[arg(long, default_value_t = 0.3)]
    p_identity: f64,
    /// Forbid loops and recursion (enables exact ground truth)
    #[arg(long)]
    acyclic: bool,
    /// Restrict emission so rapid-type-analysis results are exact
    #[arg(long)]
    monomorphic: bool,
}

#[derive(Args)]
struct DiffArgs {
    /// Left map artifact (the over-approximating side)
    #[arg(long, requires = "right", conflicts_with_all = ["map", "traces"])]
    left: Option<PathBuf>,
    /// Right map artifact
    #[arg(long)]
    right: Option<PathBuf>,
    /// Map artifact to compare against execution traces
    #[arg(long, requires = "traces")]
    map: Option<PathBuf>,
    /// Directory of trace documents written by `exec`
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn emit(out: &Option<PathBuf>, payload: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, payload).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{payload}"),
    }
    Ok(())
}

fn dump_graphs(
    dir: &Path,
    fw: &Program,
    st: &ServiceTable,
    sc: &SinkConfig,
    mode: Mode,
    max_depth: Option<u32>,
    format: DumpFormat,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let space = AnalysisSpace::build(fw, None, st, sc)?;
    for entry in permgap_core::ir::entry_points(fw)? {
        let graph = build_call_graph(&space, &entry, mode, max_depth)?;
        let (payload, ext) = match format {
            DumpFormat::Dot => (graph.to_dot(sc), "dot"),
            DumpFormat::Json => (graph.to_json(sc), "json"),
        };
        let file =
            format!("{}.{ext}", entry.to_string().replace("::", "__").replace('/', "_"));
        std::fs::write(dir.join(file), payload)?;
    }
    Ok(())
}

fn cmd_map(args: &MapArgs) -> Result<u8> {
    let fw = args.inputs.framework()?;
    let st = args.inputs.services()?;
    let sc = args.inputs.sinks()?;
    let opts = args.analysis.options();
    let outcome = analyze_framework(&fw, &st, &sc, &opts)?;
    for line in &outcome.diagnostics {
        eprintln!("{line}");
    }
    let stats = outcome.matrix.stats();
    let payload = match args.format {
        Format::Json => outcome.matrix.to_json_with_stats(),
        Format::Csv => outcome.matrix.to_csv(),
        Format::Text => {
            let mut s = String::new();
            use std::fmt::Write as _;
            let _ = writeln!(s, "framework:            {}", outcome.matrix.framework);
            let _ = writeln!(s, "mode:                 {}", outcome.matrix.mode.as_str());
            let _ = writeln!(s, "entry points:         {}", stats.entry_points);
            let _ = writeln!(s, "rows with perms:      {}", stats.mapped_rows);
            let _ = writeln!(s, "median perms per row: {}", stats.median_perms_per_mapped_row);
            let _ = writeln!(s, "max perms per row:    {}", stats.max_perms_per_mapped_row);
            let _ = writeln!(s, "set bits:             {}", stats.total_set_bits);
            let _ = writeln!(s, "unresolved rows:      {}", stats.unresolved_rows);
            s
        }
    };
    if args.format != Format::Text {
        eprintln!(
            "map: {} entries, {} mapped rows, median {}, max {}, {} set bits",
            stats.entry_points,
            stats.mapped_rows,
            stats.median_perms_per_mapped_row,
            stats.max_perms_per_mapped_row,
            stats.total_set_bits
        );
    }
    emit(&args.out, &payload)?;
    if let Some(dir) = &args.dump_graphs {
        dump_graphs(dir, &fw, &st, &sc, opts.mode, opts.max_depth, args.dump_format)?;
    }
    Ok(0)
}

fn cmd_scan(args: &ScanArgs) -> Result<u8> {
    let fw = args.inputs.framework()?;
    let app = args.inputs.app()?;
    let manifest = args.inputs.manifest()?;
    let st = args.inputs.services()?;
    let sc = args.inputs.sinks()?;
    let scan = analyze_app(&fw, &app, &manifest, &st, &sc, &args.analysis.options())?;
    let payload = match args.format {
        Format::Json | Format::Csv => scan.to_json(),
        Format::Text => {
            let mut s = String::new();
            use std::fmt::Write as _;
            let set: Vec<String> =
                scan.av.bits.iter_ones().map(|i| scan.av.rows[i].to_string()).collect();
            let _ = writeln!(s, "entry points reached: {} of {}", set.len(), scan.av.rows.len());
            for e in set {
                let _ = writeln!(s, "  {e}");
            }
            let _ = writeln!(s, "boundary call sites:  {}", scan.boundary_sites.len());
            s
        }
    };
    emit(&args.out, &payload)?;
    Ok(0)
}

fn cmd_gap(args: &GapArgs) -> Result<u8> {
    let fw = args.inputs.framework()?;
    let app = args.inputs.app()?;
    let manifest = args.inputs.manifest()?;
    let st = args.inputs.services()?;
    let sc = args.inputs.sinks()?;
    let cached = match &args.map {
        Some(path) => Some(load(path, PermissionAccessMatrix::from_json)?),
        None => None,
    };
    let outcome = run_gap(&fw, &app, &manifest, &st, &sc, &args.analysis.options(), cached)?;
    for line in &outcome.diagnostics {
        eprintln!("{line}");
    }
    let payload = match args.format {
        Format::Json | Format::Csv => outcome.report.to_json(),
        Format::Text => outcome.report.to_text(),
    };
    emit(&args.out, &payload)?;
    Ok(if outcome.report.gap.is_empty() { 0 } else { 2 })
}

fn cmd_exec(args: &ExecArgs) -> Result<u8> {
    let fw = args.inputs.framework()?;
    let app = args.inputs.app()?;
    let manifest = args.inputs.manifest()?;
    let st = args.inputs.services()?;
    let sc = args.inputs.sinks()?;
    for (program, companion) in [(&fw, None), (&app, Some(&fw))] {
        let report = permgap_core::ir::validate(program, companion, Some(&st), &sc);
        if !report.is_clean() {
            bail!("validation failed:\n{report}");
        }
    }
    let report = permgap_core::ir::validate_manifest(&manifest, &app, &sc);
    if !report.is_clean() {
        bail!("validation failed:\n{report}");
    }
    let space = AnalysisSpace::build(&fw, Some(&app), &st, &sc)?;
    let cfg = ExecConfig {
        loop_bound: args.loop_bound,
        path_budget: args.path_budget,
        step_budget: args.step_budget,
    };
    let trace = execute(&space, &manifest, &cfg)?;
    emit(&args.out, &trace.to_json())?;
    Ok(0)
}

fn write_bundle(dir: &Path, bundle: &CorpusBundle) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let write = |name: &str, payload: String| -> Result<()> {
        std::fs::write(dir.join(name), payload).with_context(|| format!("writing {name}"))
    };
    write("framework.json", serialize_program(&bundle.framework))?;
    write("app.json", serialize_program(&bundle.application))?;
    write("manifest.json", serialize_manifest(&bundle.manifest))?;
    write("services.json", serialize_service_table(&bundle.services))?;
    write("sinks.json", serialize_sink_config(&bundle.sinks))?;
    let mut truth = serde_json::to_string_pretty(&serde_json::json!({
        "required": bundle.ground_truth.as_slice(),
    }))
    .expect("serialization cannot fail");
    truth.push('\n');
    write("ground_truth.json", truth)?;
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<u8> {
    let spec = GenSpec {
        n_classes: args.classes,
        n_methods: args.methods,
        n_permissions: args.perms,
        n_services: args.services,
        p_branch: args.p_branch,
        p_identity_region: args.p_identity,
        acyclic: args.acyclic,
        monomorphic: args.monomorphic,
    };
    let bundle = generate_corpus(args.seed, &spec)?;
    write_bundle(&args.out_dir, &bundle)?;
    eprintln!(
        "gen: seed {} -> {} ({} classes, ground truth {})",
        args.seed,
        args.out_dir.display(),
        bundle.framework.classes.len(),
        bundle.ground_truth
    );
    Ok(0)
}

fn cmd_diff(args: &DiffArgs) -> Result<u8> {
    let report = match (&args.left, &args.right, &args.map, &args.traces) {
        (Some(left), Some(right), None, None) => {
            let left = load(left, PermissionAccessMatrix::from_json)?;
            let right = load(right, PermissionAccessMatrix::from_json)?;
            diff_maps(&left, &right)?
        }
        (None, None, Some(map), Some(traces)) => {
            let map = load(map, PermissionAccessMatrix::from_json)?;
            let mut entries: Vec<PathBuf> = std::fs::read_dir(traces)
                .with_context(|| format!("reading {}", traces.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            let mut loaded = Vec::new();
            for path in entries {
                let trace = load(&path, ExecTrace::from_json)?;
                loaded.push((path.display().to_string(), trace));
            }
            if loaded.is_empty() {
                bail!("no trace documents found in {}", traces.display());
            }
            diff_map_vs_traces(&map, &loaded)?
        }
        _ => bail!("pass either --left/--right or --map/--traces"),
    };
    let payload = match args.format {
        Format::Json | Format::Csv => report.to_json(),
        Format::Text => report.to_text(),
    };
    print!("{payload}");
    Ok(if report.subset > 0 { 3 } else { 0 })
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::Map(args) => cmd_map(args),
        Cmd::Scan(args) => cmd_scan(args),
        Cmd::Gap(args) => cmd_gap(args),
        Cmd::Exec(args) => cmd_exec(args),
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Diff(args) => cmd_diff(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e:#}");
            ExitCode::from(1)
        }
    }
}
