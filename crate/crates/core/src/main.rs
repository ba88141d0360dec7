use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use cobranch::artifacts::{
    read_clusters, read_json, read_plan, BranchSummary, ClusterFile, CostModelFile, PlanFile,
    SimulationFile, CLUSTERS_FORMAT, FORMAT_VERSION, PLAN_FORMAT, SIMULATION_FORMAT,
};
use cobranch::branch_design::{compress_template, plan_branches, HeadTemplate};
use cobranch::clustering::Linkage;
use cobranch::cooccurrence::{DEFAULT_QUORUM, DEFAULT_TAU_COMMON};
use cobranch::ingest::{load_annotations, Dataset};
use cobranch::layout::LayoutParams;
use cobranch::manifest::RunManifest;
use cobranch::pareto::{
    build_grouped_report, build_report, load_points, points_to_csv, render_grouped_report,
    render_report, ConfigPoint, CostAxis, ReportFormat,
};
use cobranch::pipeline::{cluster_dataset, ClusterParams};
use cobranch::runtime_sim::{
    calibrate_controller, simulate_sweep, ControllerModel, ModelPlan, RoutingPolicy,
    SimulationReport,
};

/// Category co-occurrence clustering, branch sizing and routing simulation.
#[derive(Parser)]
#[command(name = "cobranch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse COCO-style annotations into a dataset snapshot.
    Ingest(IngestArgs),
    /// Cluster categories into spatial contexts.
    Cluster(ClusterArgs),
    /// Size one compressed head per context.
    Design(DesignArgs),
    /// Simulate the routed runtime over a dataset.
    Simulate(SimulateArgs),
    /// Percent deltas, efficiency and Pareto flags against a baseline.
    Report(ReportArgs),
    /// Run every stage from one TOML config.
    Pipeline(PipelineArgs),
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct IngestArgs {
    /// TOML file providing defaults for any flag ([ingest] section or top level).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct ClusterArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Dataset snapshot written by `ingest`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of spatial contexts (default 2).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tau_common: Option<f64>,
    #[arg(long)]
    quorum: Option<f64>,
    #[arg(long)]
    layout_iterations: Option<usize>,
    #[arg(long)]
    layout_seed: Option<u64>,
    #[arg(long)]
    layout_area: Option<f64>,
    /// ward (default), single, complete or average.
    #[arg(long)]
    linkage: Option<String>,
    /// Directory for co-occurrence, correlation and layout CSVs.
    #[arg(long)]
    export_dir: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct DesignArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    image_size: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    backbone_params: Option<u64>,
    #[arg(long)]
    backbone_macs: Option<u64>,
    #[arg(long)]
    controller_params: Option<u64>,
    #[arg(long)]
    controller_macs: Option<u64>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long)]
    plan: Option<PathBuf>,
    /// single or multi.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    threshold: Option<f64>,
    /// oracle or noisy.
    #[arg(long)]
    controller: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Calibrate sigma so the noisy controller reaches this top-1 accuracy (0..1).
    #[arg(long)]
    target_accuracy: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Coefficients or (GMACs, value) samples to fit, as JSON.
    #[arg(long)]
    cost_model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep per-image rows in the report.
    #[arg(long)]
    per_image: bool,
    /// Simulate single mode plus multi mode at every `--thresholds` value.
    #[arg(long)]
    sweep: bool,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// CSV of configuration points (plus the static baseline) for `report`.
    #[arg(long)]
    points_out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
struct ReportArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// CSV or JSON configuration points.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    baseline: Option<String>,
    /// energy (default) or latency.
    #[arg(long)]
    cost_axis: Option<String>,
    /// text (default), csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Only use points of this group.
    #[arg(long)]
    group: Option<String>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out-dir` from the config (default: `out` next to the config).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Stage(&'static str, anyhow::Error),
}

type StageResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

trait StageContext<T> {
    fn stage(self, name: &'static str) -> StageResult<T>;
}

impl<T, E: Into<anyhow::Error>> StageContext<T> for Result<T, E> {
    fn stage(self, name: &'static str) -> StageResult<T> {
        self.map_err(|e| Failure::Stage(name, e.into()))
    }
}

fn required<T: Clone>(value: &Option<T>, flag: &str) -> StageResult<T> {
    value.clone().ok_or_else(|| {
        usage(format!(
            "the following required argument was not provided: --{flag}"
        ))
    })
}

const PATH_KEYS: &[&str] = &[
    "annotations",
    "out",
    "dataset",
    "export-dir",
    "clusters",
    "template",
    "plan",
    "cost-model",
    "points",
    "points-out",
    "out-dir",
];

/// Loads a TOML config, returning the table for `section` (or the top level
/// when the section is absent) with relative paths rebased on the config's
/// directory.
fn config_section(path: &Path, section: &str) -> anyhow::Result<Value> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let root: toml::Value =
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let root = serde_json::to_value(root)?;
    let table = match root.get(section) {
        Some(v) => v.clone(),
        None => {
            let mut top = root.clone();
            if let Value::Object(map) = &mut top {
                map.retain(|_, v| !v.is_object());
            }
            top
        }
    };
    Ok(rebase_paths(table, path.parent().unwrap_or(Path::new("."))))
}

fn rebase_paths(mut table: Value, dir: &Path) -> Value {
    if let Value::Object(map) = &mut table {
        for key in PATH_KEYS {
            if let Some(Value::String(p)) = map.get(*key) {
                let pb = PathBuf::from(p);
                if pb.is_relative() {
                    map.insert(
                        key.to_string(),
                        Value::String(dir.join(pb).display().to_string()),
                    );
                }
            }
        }
    }
    table
}

/// Flags win over config values; unset flags (None / false) fall through.
fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Value) -> anyhow::Result<T> {
    let mut merged = match config {
        Value::Object(map) => map,
        Value::Null => Default::default(),
        other => bail!("config section must be a table, got {other}"),
    };
    if let Value::Object(cli) = serde_json::to_value(flags)? {
        for (k, v) in cli {
            if !(v.is_null() || v == Value::Bool(false)) {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).context("invalid config values")
}

fn with_config<T: Serialize + DeserializeOwned>(
    flags: T,
    config: &Option<PathBuf>,
    section: &'static str,
) -> StageResult<T> {
    match config {
        None => Ok(flags),
        Some(path) => {
            let table = config_section(path, section).map_err(|e| usage(format!("{e:#}")))?;
            merge(&flags, table).map_err(|e| usage(format!("{e:#}")))
        }
    }
}

fn flags_value<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn run_ingest(args: IngestArgs) -> StageResult {
    const STAGE: &str = "ingest";
    let annotations = required(&args.annotations, "annotations")?;
    let out = required(&args.out, "out")?;
    let dataset = load_annotations(&annotations).stage(STAGE)?;

    let mut manifest = RunManifest::new(STAGE).with_flags(&flags_value(&args));
    manifest
        .add_input("annotations", &annotations)
        .stage(STAGE)?;
    let mref = manifest.write_for(&out).stage(STAGE)?;
    let mut snapshot = dataset.to_snapshot();
    snapshot["manifest"] = serde_json::to_value(&mref).stage(STAGE)?;
    write_file(&out, &to_json(&snapshot).stage(STAGE)?).stage(STAGE)?;

    let instances: usize = dataset.images().iter().map(|im| im.instances.len()).sum();
    println!(
        "ingested {} images, {} categories, {} instances -> {}",
        dataset.n_images(),
        dataset.n_categories(),
        instances,
        out.display()
    );
    Ok(())
}

fn run_cluster(args: ClusterArgs) -> StageResult {
    const STAGE: &str = "cluster";
    let dataset_path = required(&args.dataset, "dataset")?;
    let out = required(&args.out, "out")?;
    let linkage: Linkage = args
        .linkage
        .as_deref()
        .unwrap_or("ward")
        .parse()
        .map_err(|e: cobranch::Error| usage(e.to_string()))?;
    let defaults = LayoutParams::default();
    let params = ClusterParams {
        k: args.k.unwrap_or(2),
        tau_common: args.tau_common.unwrap_or(DEFAULT_TAU_COMMON),
        quorum: args.quorum.unwrap_or(DEFAULT_QUORUM),
        layout: LayoutParams {
            iterations: args.layout_iterations.unwrap_or(defaults.iterations),
            area: args.layout_area.unwrap_or(defaults.area),
            initial_temperature: None,
        },
        layout_seed: args.layout_seed.unwrap_or(0),
        linkage,
    };

    let dataset = Dataset::read_snapshot(&dataset_path).stage(STAGE)?;
    let outcome = cluster_dataset(&dataset, &params).stage(STAGE)?;
    let names = dataset.category_names();

    let mut manifest = RunManifest::new(STAGE).with_flags(&flags_value(&args));
    manifest.add_input("dataset", &dataset_path).stage(STAGE)?;
    manifest.add_seed("layout", params.layout_seed);
    let mref = manifest.write_for(&out).stage(STAGE)?;

    let a = &outcome.assignment;
    let file = ClusterFile {
        format: CLUSTERS_FORMAT.into(),
        version: FORMAT_VERSION,
        manifest: Some(mref),
        categories: dataset.categories().to_vec(),
        params: params.clone(),
        common: outcome.common.clone(),
        cluster_names: a
            .clusters
            .iter()
            .map(|c| c.iter().map(|&i| names[i].clone()).collect())
            .collect(),
        common_names: a.common.iter().map(|&i| names[i].clone()).collect(),
        assignment: a.clone(),
        layout: outcome.layout.clone(),
    };
    write_file(&out, &to_json(&file).stage(STAGE)?).stage(STAGE)?;

    if let Some(dir) = &args.export_dir {
        write_file(
            &dir.join("cooccurrence.csv"),
            &outcome.cooccurrence.to_csv(&names),
        )
        .stage(STAGE)?;
        write_file(
            &dir.join("correlation.csv"),
            &outcome.correlation.to_csv(&names),
        )
        .stage(STAGE)?;
        write_file(&dir.join("layout.csv"), &outcome.layout.to_csv(&names)).stage(STAGE)?;
    }

    println!("common objects: {}", file.common_names.join(", "));
    for (i, c) in file.cluster_names.iter().enumerate() {
        println!("cluster {i} ({} classes): {}", c.len(), c.join(", "));
    }
    Ok(())
}

fn run_design(args: DesignArgs) -> StageResult {
    const STAGE: &str = "design";
    let clusters_path = required(&args.clusters, "clusters")?;
    let template_path = required(&args.template, "template")?;
    let image_size = required(&args.image_size, "image-size")?;
    let out = required(&args.out, "out")?;

    let clusters = read_clusters(&clusters_path).stage(STAGE)?;
    let template = HeadTemplate::load(&template_path)
        .and_then(|t| t.at_image_size(image_size))
        .stage(STAGE)?;
    let branches = plan_branches(&clusters.assignment, &template).stage(STAGE)?;
    let total_classes = clusters.assignment.n_categories;
    let full = compress_template(&template, 1.0, total_classes as u64).stage(STAGE)?;

    let model = ModelPlan {
        backbone_params: args.backbone_params.unwrap_or(0),
        backbone_macs: args.backbone_macs.unwrap_or(0),
        controller_params: args.controller_params.unwrap_or(0),
        controller_macs: args.controller_macs.unwrap_or(0),
        branches,
    };

    let mut manifest = RunManifest::new(STAGE).with_flags(&flags_value(&args));
    manifest
        .add_input("clusters", &clusters_path)
        .stage(STAGE)?;
    manifest
        .add_input("template", &template_path)
        .stage(STAGE)?;
    let mref = manifest.write_for(&out).stage(STAGE)?;

    let file = PlanFile {
        format: PLAN_FORMAT.into(),
        version: FORMAT_VERSION,
        manifest: Some(mref),
        template: template.name.clone(),
        image_size,
        total_classes,
        template_params: full.params,
        template_macs: full.macs,
        summary: model
            .branches
            .iter()
            .map(|b| BranchSummary {
                branch_id: b.branch_id,
                classes: b.classes.len(),
                factor: b.factor,
                params: b.params,
                macs: b.macs,
            })
            .collect(),
        model,
    };
    write_file(&out, &to_json(&file).stage(STAGE)?).stage(STAGE)?;

    println!(
        "{} at {image_size}px: full head {:.3} M params, {:.3} GMACs",
        file.template,
        full.params as f64 / 1e6,
        full.macs as f64 / 1e9
    );
    for s in &file.summary {
        println!(
            "branch {}: {} classes, factor {:.4}, {:.3} M params, {:.3} GMACs",
            s.branch_id,
            s.classes,
            s.factor,
            s.params as f64 / 1e6,
            s.macs as f64 / 1e9
        );
    }
    Ok(())
}

fn config_point(name: String, report: &SimulationReport) -> ConfigPoint {
    let a = &report.aggregates;
    ConfigPoint {
        name,
        group: String::new(),
        accuracy: 100.0 * a.mean_coverage,
        latency_ms: a.mean_latency_ms,
        energy_mj: a.mean_energy_mj,
        sparam_m: a.static_params as f64 / 1e6,
        dparam_m: a.mean_dynamic_params / 1e6,
        gmacs: a.mean_dynamic_macs / 1e9,
    }
}

fn run_simulate(args: SimulateArgs) -> StageResult {
    const STAGE: &str = "simulate";
    let dataset_path = required(&args.dataset, "dataset")?;
    let clusters_path = required(&args.clusters, "clusters")?;
    let plan_path = required(&args.plan, "plan")?;
    let cost_path = required(&args.cost_model, "cost-model")?;
    let out = required(&args.out, "out")?;
    let seed = args.seed.unwrap_or(0);

    let policies: Vec<RoutingPolicy> = if args.sweep {
        let thresholds = args
            .thresholds
            .clone()
            .unwrap_or_else(|| vec![0.1, 0.3, 0.5]);
        std::iter::once(RoutingPolicy::single())
            .chain(thresholds.into_iter().map(RoutingPolicy::multi))
            .collect()
    } else {
        match args.mode.as_deref().unwrap_or("single") {
            "single" => vec![RoutingPolicy::single()],
            "multi" => vec![RoutingPolicy::multi(required(
                &args.threshold,
                "threshold",
            )?)],
            other => return Err(usage(format!("unknown --mode {other:?} (single|multi)"))),
        }
    };

    let dataset = Dataset::read_snapshot(&dataset_path).stage(STAGE)?;
    let clusters = read_clusters(&clusters_path).stage(STAGE)?;
    let plan = read_plan(&plan_path).stage(STAGE)?;
    let cost = read_json::<CostModelFile>(&cost_path)
        .and_then(|f| f.resolve())
        .stage(STAGE)?;
    if clusters.categories != dataset.categories() {
        return Err(Failure::Stage(
            STAGE,
            anyhow!("clusters file and dataset use different category sets"),
        ));
    }

    let controller = match args.controller.as_deref().unwrap_or("oracle") {
        "oracle" => ControllerModel::oracle(),
        "noisy" => match (args.sigma, args.target_accuracy) {
            (Some(sigma), _) => ControllerModel::noisy(sigma, seed),
            (None, Some(target)) => {
                let cal = calibrate_controller(&dataset, &clusters.assignment, target, seed)
                    .stage(STAGE)?;
                println!(
                    "calibrated sigma {:.6} -> controller accuracy {:.4} (target {target})",
                    cal.sigma, cal.accuracy
                );
                ControllerModel {
                    target_accuracy: Some(target),
                    ..ControllerModel::noisy(cal.sigma, seed)
                }
            }
            (None, None) => {
                return Err(usage("noisy controller needs --sigma or --target-accuracy"))
            }
        },
        other => {
            return Err(usage(format!(
                "unknown --controller {other:?} (oracle|noisy)"
            )))
        }
    };

    let mut reports = simulate_sweep(
        &dataset,
        &clusters.assignment,
        &plan.model,
        &controller,
        &policies,
        &cost,
    )
    .stage(STAGE)?;

    let mut manifest = RunManifest::new(STAGE).with_flags(&flags_value(&args));
    manifest.add_input("dataset", &dataset_path).stage(STAGE)?;
    manifest
        .add_input("clusters", &clusters_path)
        .stage(STAGE)?;
    manifest.add_input("plan", &plan_path).stage(STAGE)?;
    manifest.add_input("cost-model", &cost_path).stage(STAGE)?;
    manifest.add_seed("controller", seed);

    if let Some(points_path) = &args.points_out {
        let k = clusters.assignment.k;
        let static_params = plan.model.backbone_params + plan.template_params;
        let static_macs = plan.model.backbone_macs + plan.template_macs;
        let mut points = vec![ConfigPoint {
            name: "static".into(),
            group: String::new(),
            accuracy: 100.0,
            latency_ms: cost.latency(static_macs),
            energy_mj: cost.energy(static_macs),
            sparam_m: static_params as f64 / 1e6,
            dparam_m: static_params as f64 / 1e6,
            gmacs: static_macs as f64 / 1e9,
        }];
        points.extend(
            reports
                .iter()
                .map(|r| config_point(format!("k{k}-{}", r.policy), r)),
        );
        let pref = manifest.write_for(points_path).stage(STAGE)?;
        let mut csv = format!("# manifest: {} sha256:{}\n", pref.file, pref.digest);
        csv.push_str(&points_to_csv(&points));
        write_file(points_path, &csv).stage(STAGE)?;
    }

    for r in &reports {
        let a = &r.aggregates;
        println!(
            "{:<10} coverage {:.4}  controller acc {:.4}  branches {:.3}  {:.3} GMACs  {:.1} ms  {:.1} mJ",
            r.policy.to_string(),
            a.mean_coverage,
            a.controller_accuracy,
            a.mean_branches_executed,
            a.mean_dynamic_macs / 1e9,
            a.mean_latency_ms,
            a.mean_energy_mj
        );
    }
    if !args.per_image {
        for r in &mut reports {
            r.images.clear();
        }
    }
    let mref = manifest.write_for(&out).stage(STAGE)?;
    let file = SimulationFile {
        format: SIMULATION_FORMAT.into(),
        version: FORMAT_VERSION,
        manifest: Some(mref),
        cost_model: cost,
        reports,
    };
    write_file(&out, &to_json(&file).stage(STAGE)?).stage(STAGE)?;
    Ok(())
}

fn run_report(args: ReportArgs) -> StageResult {
    const STAGE: &str = "report";
    let points_path = required(&args.points, "points")?;
    let baseline = required(&args.baseline, "baseline")?;
    let axis: CostAxis = args
        .cost_axis
        .as_deref()
        .unwrap_or("energy")
        .parse()
        .map_err(|e: cobranch::Error| usage(e.to_string()))?;
    let format: ReportFormat = args
        .format
        .as_deref()
        .unwrap_or("text")
        .parse()
        .map_err(|e: cobranch::Error| usage(e.to_string()))?;

    let mut points = load_points(&points_path).stage(STAGE)?;
    if let Some(group) = &args.group {
        points.retain(|p| &p.group == group);
        if points.is_empty() {
            return Err(Failure::Stage(
                STAGE,
                anyhow!("no points in group {group:?}"),
            ));
        }
    }
    let mut groups: Vec<&str> = points.iter().map(|p| p.group.as_str()).collect();
    groups.sort_unstable();
    groups.dedup();
    let (rendered, json) = if groups.len() > 1 {
        let report = build_grouped_report(&points, &baseline, axis).stage(STAGE)?;
        (
            render_grouped_report(&report, format),
            serde_json::to_value(&report).stage(STAGE)?,
        )
    } else {
        let report = build_report(&points, &baseline, axis).stage(STAGE)?;
        (
            render_report(&report, format),
            serde_json::to_value(&report).stage(STAGE)?,
        )
    };

    match &args.out {
        None => print!("{rendered}"),
        Some(out) => {
            let mut manifest = RunManifest::new(STAGE).with_flags(&flags_value(&args));
            manifest.add_input("points", &points_path).stage(STAGE)?;
            let mref = manifest.write_for(out).stage(STAGE)?;
            let text = match format {
                ReportFormat::Json => {
                    let mut v = json;
                    v["manifest"] = serde_json::to_value(&mref).stage(STAGE)?;
                    to_json(&v).stage(STAGE)?
                }
                ReportFormat::Csv => format!(
                    "# manifest: {} sha256:{}\n{rendered}",
                    mref.file, mref.digest
                ),
                ReportFormat::Text => {
                    format!("{rendered}manifest: {} sha256:{}\n", mref.file, mref.digest)
                }
            };
            write_file(out, &text).stage(STAGE)?;
            println!("report written to {}", out.display());
        }
    }
    Ok(())
}

#[derive(Deserialize, Default)]
#[serde(default, rename_all = "kebab-case")]
struct PipelineConfig {
    out_dir: Option<String>,
    ingest: Option<toml::Value>,
    cluster: Option<toml::Value>,
    design: Option<toml::Value>,
    simulate: Option<toml::Value>,
    report: Option<toml::Value>,
}

fn section<T: Serialize + DeserializeOwned + Default>(
    value: &Option<toml::Value>,
    dir: &Path,
) -> StageResult<T> {
    let table = match value {
        None => Value::Null,
        Some(v) => rebase_paths(
            serde_json::to_value(v).map_err(|e| usage(e.to_string()))?,
            dir,
        ),
    };
    merge(&T::default(), table).map_err(|e| usage(format!("{e:#}")))
}

fn run_pipeline(args: PipelineArgs) -> StageResult {
    let dir = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = fs::read_to_string(&args.config)
        .map_err(|e| usage(format!("reading config {}: {e}", args.config.display())))?;
    let cfg: PipelineConfig = toml::from_str(&text)
        .map_err(|e| usage(format!("parsing config {}: {e}", args.config.display())))?;
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| dir.join(cfg.out_dir.as_deref().unwrap_or("out")));

    let dataset = out_dir.join("dataset.json");
    let clusters = out_dir.join("clusters.json");
    let plan = out_dir.join("plan.json");
    let simulation = out_dir.join("simulation.json");
    let points = out_dir.join("points.csv");

    let mut ingest: IngestArgs = section(&cfg.ingest, &dir)?;
    ingest.out = Some(dataset.clone());
    run_ingest(ingest)?;

    let mut cluster: ClusterArgs = section(&cfg.cluster, &dir)?;
    cluster.dataset = Some(dataset.clone());
    cluster.out = Some(clusters.clone());
    cluster
        .export_dir
        .get_or_insert_with(|| out_dir.join("exports"));
    run_cluster(cluster)?;

    let mut design: DesignArgs = section(&cfg.design, &dir)?;
    design.clusters = Some(clusters.clone());
    design.out = Some(plan.clone());
    run_design(design)?;

    let mut sim: SimulateArgs = section(&cfg.simulate, &dir)?;
    sim.dataset = Some(dataset);
    sim.clusters = Some(clusters);
    sim.plan = Some(plan);
    sim.out = Some(simulation);
    sim.points_out = Some(points.clone());
    run_simulate(sim)?;

    let mut report: ReportArgs = section(&cfg.report, &dir)?;
    report.points = Some(points);
    report.baseline.get_or_insert_with(|| "static".into());
    let ext = match report.format.as_deref().unwrap_or("text") {
        "csv" => "csv",
        "json" => "json",
        _ => "txt",
    };
    report.out = Some(out_dir.join(format!("report.{ext}")));
    run_report(report)?;
    println!("pipeline outputs in {}", out_dir.display());
    Ok(())
}

fn dispatch(command: Command) -> StageResult {
    match command {
        Command::Ingest(a) => {
            let cfg = a.config.clone();
            run_ingest(with_config(a, &cfg, "ingest")?)
        }
        Command::Cluster(a) => {
            let cfg = a.config.clone();
            run_cluster(with_config(a, &cfg, "cluster")?)
        }
        Command::Design(a) => {
            let cfg = a.config.clone();
            run_design(with_config(a, &cfg, "design")?)
        }
        Command::Simulate(a) => {
            let cfg = a.config.clone();
            run_simulate(with_config(a, &cfg, "simulate")?)
        }
        Command::Report(a) => {
            let cfg = a.config.clone();
            run_report(with_config(a, &cfg, "report")?)
        }
        Command::Pipeline(a) => run_pipeline(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            let _ = Cli::command()
                .error(ErrorKind::MissingRequiredArgument, msg)
                .print();
            ExitCode::from(2)
        }
        Err(Failure::Stage(stage, err)) => {
            eprintln!("error: stage `{stage}` failed: {err:#}");
            ExitCode::from(1)
        }
    }
}
