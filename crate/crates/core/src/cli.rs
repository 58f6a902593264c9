//! The `umforge` command line.
//!
//! Exit codes: 0 success, 1 data or validation error, 2 usage error. Every run
//! that gets past `--help`/`--version` leaves a run manifest behind, failed
//! runs included.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::edit::{insert_patch, intensity_sweep, PatchShape, PatchSpec};
use crate::error::{Error, Result};
use crate::image::{GrayImage, SegMask, ValueSpace};
use crate::imaging::{build_montage, hu_window, resize, resize_mask, CtSeries, LungFractionSource, ResizeMode};
use crate::io;
use crate::metrics::{
    avg_image_compressed_size, dice, kl_hu_histogram, mm_fid, mm_std, normalize_grids, utility_score,
    wilcoxon_signed_rank, EvalGrid, FeatureSet, GridKind, UMFT_VERSION,
};
use crate::umask::{boundary_recall, generate_with_labeling, under_segmentation_error};

pub const THREADS_ENV: &str = "UMFORGE_THREADS";
pub const DEFAULT_MANIFEST: &str = "run-manifest.json";

#[derive(Debug, Parser)]
#[command(name = "umforge", version, about = "Unsupervised superpixel masks and synthetic CT evaluation")]
struct Cli {
    /// Base directory for every relative path.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Pipeline config file (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for per-patient slice draws.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Falls back to $UMFORGE_THREADS, then the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run manifest location [default: run-manifest.json].
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Report failures as JSON on stdout.
    #[arg(long, global = true)]
    error_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// CT preprocessing.
    #[command(subcommand)]
    Prep(PrepCmd),
    /// Unsupervised mask generation and superpixel quality.
    #[command(subcommand)]
    Umask(UmaskCmd),
    /// Lesion patches on unsupervised masks.
    #[command(subcommand)]
    Edit(EditCmd),
    /// Fidelity, variety and utility measures.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Render evaluation grids as tables.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PrepCmd {
    /// One windowed 2x2 montage per series in a series manifest.
    Montage(MontageArgs),
}

#[derive(Debug, Args, Serialize)]
struct MontageArgs {
    /// JSON list of {patient_id, slice_paths, lung_mask_paths?}.
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value = "montage")]
    out_dir: PathBuf,
    /// Slices are resized to this side length before tiling.
    #[arg(long, default_value_t = 512)]
    slice_size: usize,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum UmaskCmd {
    /// Masks for one image or every PNG in a directory.
    Gen(GenArgs),
    /// Under-segmentation error and boundary recall of a superpixel labelling.
    Useg(UsegArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    /// 8-bit PNG, 16-bit HU PNG with sidecar, or a directory of them.
    #[arg(long)]
    input: PathBuf,
    /// Requested superpixel count M.
    #[arg(long)]
    superpixels: Option<usize>,
    /// Quantization step t.
    #[arg(long)]
    threshold: Option<u32>,
    #[arg(long, default_value = "umask")]
    out_dir: PathBuf,
    /// Also write the superpixel labels as `<stem>.labels.png`.
    #[arg(long)]
    labels: bool,
}

#[derive(Debug, Args, Serialize)]
struct UsegArgs {
    /// Superpixel labels written by `umask gen --labels`.
    #[arg(long)]
    labels: PathBuf,
    /// Ground-truth label mask (8-bit PNG).
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 2)]
    tolerance: usize,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum EditCmd {
    /// Insert one patch.
    Patch(PatchArgs),
    /// One edited mask per intensity value.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
struct PatchArgs {
    /// Unsupervised mask PNG with its sidecar.
    #[arg(long)]
    mask: PathBuf,
    /// `ellipse:cx,cy,rx,ry` or `polygon:x1,y1,x2,y2,...`.
    #[arg(long, value_parser = check_patch_arg)]
    patch: String,
    /// Patch value; must be a multiple of the mask's t.
    #[arg(long)]
    intensity: u8,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["batch", "patch"]))]
struct SweepArgs {
    /// Unsupervised mask PNG with its sidecar.
    #[arg(long)]
    mask: PathBuf,
    /// JSON list of {patch, values, name?}.
    #[arg(long)]
    batch: Option<PathBuf>,
    #[arg(long, value_parser = check_patch_arg, requires = "values")]
    patch: Option<String>,
    /// Comma-separated intensities for --patch.
    #[arg(long, value_delimiter = ',', requires = "patch")]
    values: Vec<u8>,
    #[arg(long, default_value = "sweep")]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum EvalCmd {
    /// Fréchet distance grid between real and synthetic feature directories.
    Mmfid(MmfidArgs),
    /// Feature standard-deviation grid of one feature directory.
    Mmstd(MmstdArgs),
    Dice(DiceArgs),
    /// KL divergence between HU histograms of real and synthetic images.
    Kl(KlArgs),
    /// Compressed size of the average image.
    Avgsize(AvgsizeArgs),
    /// Paired signed-rank test on two JSON lists of numbers.
    Wilcoxon(WilcoxonArgs),
}

#[derive(Debug, Args, Serialize)]
struct MmfidArgs {
    /// Directory of real UMFT feature files.
    #[arg(long)]
    real: PathBuf,
    /// Directory of synthetic UMFT feature files.
    #[arg(long)]
    synth: PathBuf,
    #[arg(long, default_value = "mmfid.json")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct MmstdArgs {
    /// Directory of UMFT feature files.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "mmstd.json")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DiceArgs {
    /// First label mask (8-bit PNG).
    #[arg(long)]
    a: PathBuf,
    /// Second label mask (8-bit PNG).
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = SegMask::LESION)]
    label: u8,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct KlArgs {
    /// HU image or directory of HU images.
    #[arg(long)]
    real: PathBuf,
    /// HU image or directory of HU images.
    #[arg(long)]
    synth: PathBuf,
    /// Histogram bin width in HU.
    #[arg(long, default_value_t = crate::metrics::DEFAULT_BIN_WIDTH)]
    bin_width: f64,
    /// `lo,hi`; defaults to the config HU window.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    range: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AvgsizeArgs {
    /// Directory of images of equal size.
    #[arg(long)]
    input: PathBuf,
    /// Also write the average image as an 8-bit PNG.
    #[arg(long)]
    average_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct WilcoxonArgs {
    /// JSON list of numbers.
    #[arg(long)]
    a: PathBuf,
    /// JSON list of numbers, paired with --a.
    #[arg(long)]
    b: PathBuf,
    /// Treat `a` as augmented and `b` as baseline Dice scores and report the utility score.
    #[arg(long)]
    utility: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ReportFormat {
    Table,
    Csv,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// Grid JSON written by `eval mmfid` or `eval mmstd`; repeat for several methods.
    #[arg(long = "grid", required = true)]
    grids: Vec<PathBuf>,
    /// Per-cell min-max normalization across the given grids.
    #[arg(long)]
    normalize: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn check_patch_arg(s: &str) -> std::result::Result<String, String> {
    parse_patch_shape(s).map(|_| s.to_string())
}

/// Parses `ellipse:cx,cy,rx,ry` or `polygon:x1,y1,...`.
pub fn parse_patch_shape(s: &str) -> std::result::Result<PatchShape, String> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| format!("patch {s:?} must look like ellipse:cx,cy,rx,ry"))?;
    let nums = rest
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad number {v:?} in patch {s:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    match kind {
        "ellipse" if nums.len() == 4 => Ok(PatchShape::Ellipse {
            cx: nums[0],
            cy: nums[1],
            rx: nums[2],
            ry: nums[3],
        }),
        "ellipse" => Err(format!("ellipse takes 4 numbers, got {}", nums.len())),
        "polygon" if nums.len() >= 6 && nums.len() % 2 == 0 => {
            Ok(PatchShape::Polygon(nums.chunks(2).map(|c| (c[0], c[1])).collect()))
        }
        "polygon" => Err("polygon takes at least 3 x,y pairs".into()),
        _ => Err(format!("unknown patch shape {kind:?}")),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesEntry {
    patient_id: String,
    slice_paths: Vec<PathBuf>,
    #[serde(default)]
    lung_mask_paths: Option<Vec<PathBuf>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepEntry {
    patch: String,
    values: Vec<u8>,
    #[serde(default)]
    name: Option<String>,
}

#[derive(Debug, Serialize)]
struct MontageSidecar<'a> {
    patient_id: &'a str,
    source_slice_indices: [usize; 4],
    seed: u64,
    lung_fraction_source: LungFractionSource,
    eligible_slices: usize,
    hu_window: (f64, f64),
}

#[derive(Debug, Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct ErrorReport {
    kind: String,
    message: String,
}

#[derive(Debug, Serialize)]
struct Versions {
    umforge: &'static str,
    umft: u16,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    status: &'static str,
    exit_code: i32,
    command: Option<serde_json::Value>,
    /// Effective config without `parallelism`, which never affects results.
    config: Option<serde_json::Value>,
    config_hash: Option<String>,
    versions: Versions,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    flags: Vec<String>,
    error: Option<ErrorReport>,
}

impl RunManifest {
    fn new(exit_code: i32) -> Self {
        Self {
            status: if exit_code == 0 { "ok" } else { "failed" },
            exit_code,
            command: None,
            config: None,
            config_hash: None,
            versions: Versions {
                umforge: env!("CARGO_PKG_VERSION"),
                umft: UMFT_VERSION,
            },
            inputs: Vec::new(),
            outputs: Vec::new(),
            flags: Vec::new(),
            error: None,
        }
    }
}

/// Files touched and flags raised during one run. Paths are recorded as given,
/// relative to the workdir, so manifests compare across machines.
struct Run {
    workdir: PathBuf,
    config: PipelineConfig,
    inputs: Mutex<BTreeMap<String, String>>,
    outputs: Mutex<BTreeMap<String, String>>,
    flags: Mutex<BTreeSet<String>>,
}

impl Run {
    fn path(&self, rel: &Path) -> PathBuf {
        self.workdir.join(rel)
    }

    fn record(map: &Mutex<BTreeMap<String, String>>, rel: &Path, abs: &Path) -> Result<()> {
        let sha = io::sha256_hex(&io::read_bytes(abs)?);
        map.lock()
            .expect("record lock")
            .insert(rel.to_string_lossy().into_owned(), sha);
        Ok(())
    }

    /// Records `rel` and its JSON sidecar, if present, as inputs.
    fn input(&self, rel: &Path) -> Result<PathBuf> {
        let abs = self.path(rel);
        Self::record(&self.inputs, rel, &abs)?;
        let side = io::sidecar_path(&abs);
        if side.is_file() && side != abs {
            Self::record(&self.inputs, &io::sidecar_path(rel), &side)?;
        }
        Ok(abs)
    }

    fn output(&self, rel: &Path) -> Result<()> {
        Self::record(&self.outputs, rel, &self.path(rel))?;
        let side = io::sidecar_path(&self.path(rel));
        if side.is_file() && side != self.path(rel) {
            Self::record(&self.outputs, &io::sidecar_path(rel), &side)?;
        }
        Ok(())
    }

    fn flag(&self, flag: impl Into<String>) {
        self.flags.lock().expect("flag lock").insert(flag.into());
    }

    /// Sorted regular files in `rel` with the given extension.
    fn list_dir(&self, rel: &Path, ext: &str) -> Result<Vec<PathBuf>> {
        let abs = self.path(rel);
        let entries = std::fs::read_dir(&abs).map_err(|e| Error::io(&abs, e))?;
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&abs, e))?;
            let p = entry.path();
            let is_ext = p.extension().is_some_and(|e| e == ext);
            let is_labels = p
                .file_stem()
                .and_then(|s| Path::new(s).extension())
                .is_some_and(|e| e == "labels");
            if p.is_file() && is_ext && !is_labels {
                names.push(entry.file_name());
            }
        }
        names.sort();
        Ok(names.into_iter().map(|n| rel.join(n)).collect())
    }

    /// A single file, or every matching file of a directory.
    fn expand(&self, rel: &Path, ext: &str) -> Result<Vec<PathBuf>> {
        if self.path(rel).is_dir() {
            let files = self.list_dir(rel, ext)?;
            if files.is_empty() {
                return Err(Error::InsufficientData(format!("no .{ext} files in {}", rel.display())));
            }
            Ok(files)
        } else {
            Ok(vec![rel.to_path_buf()])
        }
    }

    fn write_json<T: Serialize>(&self, rel: &Path, value: &T) -> Result<()> {
        io::write_json(&self.path(rel), value)?;
        self.output(rel)
    }

    /// Prints `value` as JSON and, with `out`, writes it there too.
    fn emit<T: Serialize>(&self, out: Option<&Path>, value: &T) -> Result<()> {
        print!("{}", io::to_json_string(value));
        match out {
            Some(rel) => self.write_json(rel, value),
            None => Ok(()),
        }
    }

    fn load_image(&self, rel: &Path) -> Result<GrayImage> {
        io::read_gray_image(&self.input(rel)?)
    }

    /// Loads an image as Unit8, windowing HU rasters with the config window.
    fn load_unit8(&self, rel: &Path) -> Result<GrayImage> {
        let img = self.load_image(rel)?;
        match img.value_space() {
            ValueSpace::Unit8 => Ok(img),
            ValueSpace::Hu => {
                let (lo, hi) = self.config.hu_window;
                hu_window(&img, lo as f32, hi as f32)
            }
        }
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => return usage_failure(&argv, e),
    };
    let manifest_rel = cli.manifest.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_MANIFEST));
    let manifest_path = cli.workdir.join(&manifest_rel);
    let mut manifest = RunManifest::new(0);
    manifest.command = serde_json::to_value(&cli.command).ok();

    let outcome = prepare(&cli).and_then(|(run, threads)| {
        manifest.config_hash = Some(run.config.hash());
        manifest.config = serde_json::to_value(&run.config).ok().map(|mut v| {
            if let Some(obj) = v.as_object_mut() {
                obj.remove("parallelism");
            }
            v
        });
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        let result = pool.install(|| execute(&run, &cli.command));
        manifest.inputs = records(run.inputs.into_inner().expect("inputs lock"));
        manifest.outputs = records(run.outputs.into_inner().expect("outputs lock"));
        manifest.flags = run.flags.into_inner().expect("flags lock").into_iter().collect();
        result
    });

    let code = match outcome {
        Ok(()) => 0,
        Err(e) => {
            report_error(cli.error_json, e.kind(), &e.to_string());
            manifest.status = "failed";
            manifest.exit_code = 1;
            manifest.error = Some(ErrorReport {
                kind: e.kind().into(),
                message: e.to_string(),
            });
            1
        }
    };
    match io::write_json(&manifest_path, &manifest) {
        Ok(()) => code,
        Err(e) => {
            log::error!("could not write run manifest: {e}");
            code.max(1)
        }
    }
}

fn records(map: BTreeMap<String, String>) -> Vec<FileRecord> {
    map.into_iter().map(|(path, sha256)| FileRecord { path, sha256 }).collect()
}

fn report_error(as_json: bool, kind: &str, message: &str) {
    if as_json {
        let report = serde_json::json!({ "error": { "kind": kind, "message": message } });
        print!("{}", io::to_json_string(&report));
    } else {
        eprintln!("error: {message}");
    }
}

/// Value of `--name X` or `--name=X` in raw arguments, for runs clap rejected.
fn raw_option(argv: &[OsString], name: &str) -> Option<PathBuf> {
    let long = format!("--{name}");
    let prefix = format!("--{name}=");
    let mut it = argv.iter().skip(1).map(|a| a.to_string_lossy());
    while let Some(a) = it.next() {
        if a == long {
            return it.next().map(|v| PathBuf::from(v.as_ref()));
        }
        if let Some(v) = a.strip_prefix(&prefix) {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn usage_failure(argv: &[OsString], err: clap::Error) -> i32 {
    use clap::error::ErrorKind;
    if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        let _ = err.print();
        return 0;
    }
    let as_json = argv.iter().any(|a| a == "--error-json");
    if as_json {
        report_error(true, "usage", err.render().to_string().trim_end());
    } else {
        let _ = err.print();
    }
    let workdir = raw_option(argv, "workdir").unwrap_or_else(|| PathBuf::from("."));
    let rel = raw_option(argv, "manifest").unwrap_or_else(|| PathBuf::from(DEFAULT_MANIFEST));
    let mut manifest = RunManifest::new(2);
    manifest.error = Some(ErrorReport {
        kind: "usage".into(),
        message: err.render().to_string().trim_end().to_string(),
    });
    if let Err(e) = io::write_json(&workdir.join(rel), &manifest) {
        log::error!("could not write run manifest: {e}");
    }
    2
}

/// Effective config (defaults, then file, then flags) and worker count.
fn prepare(cli: &Cli) -> Result<(Run, usize)> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(&cli.workdir.join(p))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Command::Umask(UmaskCmd::Gen(g)) = &cli.command {
        if let Some(m) = g.superpixels {
            config.superpixels_m = m;
        }
        if let Some(t) = g.threshold {
            config.threshold_t = t;
        }
    }
    let env_threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parameter(format!("{THREADS_ENV}={v:?} is not a worker count")))?,
        ),
        Err(_) => None,
    };
    if let Some(n) = cli.threads.or(env_threads) {
        config.parallelism = n;
    }
    config.validate()?;
    let threads = config.parallelism;
    let run = Run {
        workdir: cli.workdir.clone(),
        config,
        inputs: Mutex::default(),
        outputs: Mutex::default(),
        flags: Mutex::default(),
    };
    if let Some(p) = &cli.config {
        run.input(p)?;
    }
    Ok((run, threads))
}

fn execute(run: &Run, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Prep(PrepCmd::Montage(a)) => prep_montage(run, a),
        Command::Umask(UmaskCmd::Gen(a)) => umask_gen(run, a),
        Command::Umask(UmaskCmd::Useg(a)) => umask_useg(run, a),
        Command::Edit(EditCmd::Patch(a)) => edit_patch(run, a),
        Command::Edit(EditCmd::Sweep(a)) => edit_sweep(run, a),
        Command::Eval(EvalCmd::Mmfid(a)) => eval_mmfid(run, a),
        Command::Eval(EvalCmd::Mmstd(a)) => eval_mmstd(run, a),
        Command::Eval(EvalCmd::Dice(a)) => eval_dice(run, a),
        Command::Eval(EvalCmd::Kl(a)) => eval_kl(run, a),
        Command::Eval(EvalCmd::Avgsize(a)) => eval_avgsize(run, a),
        Command::Eval(EvalCmd::Wilcoxon(a)) => eval_wilcoxon(run, a),
        Command::Report(a) => report(run, a),
    }
}

fn file_stem(rel: &Path) -> Result<String> {
    rel.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Parameter(format!("{} has no file name", rel.display())))
}

fn check_item_name(name: &str) -> Result<()> {
    let ok = !name.is_empty() && name != "." && name != ".." && !name.contains(['/', '\\']);
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name:?} cannot be used as a file name")))
    }
}

/// Runs `f` over `items` in parallel and returns results in input order; the
/// first error by position wins, whatever the scheduling.
fn par_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    items.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

fn prep_montage(run: &Run, a: &MontageArgs) -> Result<()> {
    if a.slice_size == 0 {
        return Err(Error::Parameter("--slice-size must be positive".into()));
    }
    let entries: Vec<SeriesEntry> = io::read_json(&run.input(&a.series)?)?;
    if entries.is_empty() {
        return Err(Error::InsufficientData("series manifest is empty".into()));
    }
    let mut seen = BTreeSet::new();
    for e in &entries {
        check_item_name(&e.patient_id)?;
        if !seen.insert(e.patient_id.as_str()) {
            return Err(Error::Validation(format!("patient {:?} listed twice", e.patient_id)));
        }
    }
    let (lo, hi) = run.config.hu_window;
    let n = a.slice_size;
    par_ordered(&entries, |e| {
        let slices = e
            .slice_paths
            .iter()
            .map(|p| {
                let img = run.load_image(p)?;
                img.require(ValueSpace::Hu)?;
                if img.dims() == (n, n) {
                    Ok(img)
                } else {
                    resize(&img, n, n, ResizeMode::Bilinear)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let masks = match &e.lung_mask_paths {
            Some(paths) => Some(
                paths
                    .iter()
                    .map(|p| {
                        let m = io::read_segmask(&run.input(p)?)?;
                        if m.dims() == (n, n) {
                            Ok(m)
                        } else {
                            resize_mask(&m, n, n)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let series = CtSeries::new(e.patient_id.clone(), slices, masks)?;
        let montage = build_montage(&series, run.config.seed)?;
        if montage.lung_fraction_source == LungFractionSource::IntensityHeuristic {
            run.flag(format!("lung-fraction-heuristic:{}", e.patient_id));
        }
        let windowed = hu_window(&montage.image, lo as f32, hi as f32)?;
        let rel = a.out_dir.join(format!("{}.png", e.patient_id));
        io::write_gray8(&run.path(&rel), &windowed)?;
        io::write_json(
            &io::sidecar_path(&run.path(&rel)),
            &MontageSidecar {
                patient_id: &e.patient_id,
                source_slice_indices: montage.source_slice_indices,
                seed: montage.seed,
                lung_fraction_source: montage.lung_fraction_source,
                eligible_slices: montage.eligible_slices,
                hu_window: run.config.hu_window,
            },
        )?;
        run.output(&rel)
    })?;
    Ok(())
}

fn umask_gen(run: &Run, a: &GenArgs) -> Result<()> {
    let files = run.expand(&a.input, "png")?;
    let mut stems = BTreeSet::new();
    for f in &files {
        if !stems.insert(file_stem(f)?) {
            return Err(Error::Validation(format!("duplicate input stem {}", f.display())));
        }
    }
    let params = run.config.slic_params();
    let t = run.config.threshold_t;
    par_ordered(&files, |f| {
        let img = run.load_unit8(f)?;
        let (mask, labeling) = generate_with_labeling(&img, &params, t)?;
        let stem = file_stem(f)?;
        let rel = a.out_dir.join(format!("{stem}.png"));
        io::write_umask(&run.path(&rel), &mask)?;
        run.output(&rel)?;
        if a.labels {
            let rel = a.out_dir.join(format!("{stem}.labels.png"));
            io::write_labeling(&run.path(&rel), &labeling)?;
            run.output(&rel)?;
        }
        Ok(())
    })?;
    Ok(())
}

fn umask_useg(run: &Run, a: &UsegArgs) -> Result<()> {
    let labeling = io::read_labeling(&run.input(&a.labels)?)?;
    let gt = io::read_segmask(&run.input(&a.gt)?)?;
    let result = serde_json::json!({
        "superpixels": labeling.count(),
        "under_segmentation_error": under_segmentation_error(&labeling, &gt)?,
        "boundary_recall": boundary_recall(&labeling, &gt, a.tolerance)?,
        "tolerance": a.tolerance,
    });
    run.emit(a.out.as_deref(), &result)
}

fn build_patch(spec: &str, intensity: u8) -> Result<PatchSpec> {
    let shape = parse_patch_shape(spec).map_err(Error::Parameter)?;
    Ok(PatchSpec {
        shape,
        intensity,
        blend: Default::default(),
    })
}

fn edit_patch(run: &Run, a: &PatchArgs) -> Result<()> {
    let mask = io::read_umask(&run.input(&a.mask)?)?;
    let edited = insert_patch(&mask, &build_patch(&a.patch, a.intensity)?)?;
    if edited.footprint_pixels == 0 {
        run.flag("empty-footprint");
    }
    io::write_umask(&run.path(&a.out), &edited.mask)?;
    run.output(&a.out)
}

fn edit_sweep(run: &Run, a: &SweepArgs) -> Result<()> {
    let mask = io::read_umask(&run.input(&a.mask)?)?;
    let entries = match (&a.batch, &a.patch) {
        (Some(batch), _) => io::read_json::<Vec<SweepEntry>>(&run.input(batch)?)?,
        (None, Some(patch)) => vec![SweepEntry {
            patch: patch.clone(),
            values: a.values.clone(),
            name: None,
        }],
        (None, None) => unreachable!("clap requires --batch or --patch"),
    };
    let stem = file_stem(&a.mask)?;
    let mut names = BTreeSet::new();
    for (i, e) in entries.iter().enumerate() {
        let name = e.name.clone().unwrap_or_else(|| format!("p{i}"));
        check_item_name(&name)?;
        if !names.insert(name.clone()) {
            return Err(Error::Validation(format!("sweep name {name:?} used twice")));
        }
        if e.values.is_empty() {
            return Err(Error::Parameter(format!("sweep {name:?} has no values")));
        }
        let patch = build_patch(&e.patch, e.values[0])?;
        if crate::edit::rasterize(&patch.shape, 0, mask.dims().0, mask.dims().1)?.is_empty() {
            run.flag(format!("empty-footprint:{name}"));
        }
        for (v, m) in e.values.iter().zip(intensity_sweep(&mask, &patch, &e.values)?) {
            let rel = a.out_dir.join(format!("{stem}_{name}_v{v:03}.png"));
            io::write_umask(&run.path(&rel), &m)?;
            run.output(&rel)?;
        }
    }
    Ok(())
}

fn load_features(run: &Run, dir: &Path) -> Result<Vec<FeatureSet>> {
    let files = run.list_dir(dir, "umft")?;
    let sets = par_ordered(&files, |f| FeatureSet::read(&run.input(f)?))?;
    Ok(sets
        .into_iter()
        .filter(|s| run.config.scales.contains(&s.scale) && run.config.tasks.contains(&s.task))
        .collect())
}

fn write_grid(run: &Run, rel: &Path, grid: &EvalGrid) -> Result<()> {
    for f in &grid.flags {
        run.flag(f.clone());
    }
    io::write_bytes(&run.path(rel), grid.to_json().as_bytes())?;
    run.output(rel)
}

fn eval_mmfid(run: &Run, a: &MmfidArgs) -> Result<()> {
    let real = load_features(run, &a.real)?;
    let synth = load_features(run, &a.synth)?;
    write_grid(run, &a.out, &mm_fid(&real, &synth)?)
}

fn eval_mmstd(run: &Run, a: &MmstdArgs) -> Result<()> {
    let sets = load_features(run, &a.features)?;
    write_grid(run, &a.out, &mm_std(&sets)?)
}

fn eval_dice(run: &Run, a: &DiceArgs) -> Result<()> {
    let ma = io::read_segmask(&run.input(&a.a)?)?;
    let mb = io::read_segmask(&run.input(&a.b)?)?;
    let score = dice(&ma, &mb, a.label)?;
    if score.both_empty {
        run.flag("dice-both-empty");
    }
    run.emit(a.out.as_deref(), &score)
}

fn hu_values(run: &Run, rel: &Path) -> Result<Vec<f64>> {
    let files = run.expand(rel, "png")?;
    let images = par_ordered(&files, |f| {
        let img = run.load_image(f)?;
        img.require(ValueSpace::Hu)?;
        Ok(img)
    })?;
    Ok(images
        .iter()
        .flat_map(|img| img.pixels().iter().map(|&v| f64::from(v)))
        .collect())
}

fn eval_kl(run: &Run, a: &KlArgs) -> Result<()> {
    let range = match a.range.as_slice() {
        [] => run.config.hu_window,
        [lo, hi] => (*lo, *hi),
        _ => return Err(Error::Parameter("--range takes exactly lo,hi".into())),
    };
    let real = hu_values(run, &a.real)?;
    let synth = hu_values(run, &a.synth)?;
    let kl = kl_hu_histogram(&real, &synth, a.bin_width, range)?;
    let result = serde_json::json!({
        "kl_nats": kl,
        "bin_width": a.bin_width,
        "range": [range.0, range.1],
        "real_pixels": real.len(),
        "synth_pixels": synth.len(),
    });
    run.emit(a.out.as_deref(), &result)
}

fn eval_avgsize(run: &Run, a: &AvgsizeArgs) -> Result<()> {
    let files = run.expand(&a.input, "png")?;
    let images = par_ordered(&files, |f| run.load_unit8(f))?;
    let avg = avg_image_compressed_size(&images)?;
    if let Some(rel) = &a.average_out {
        io::write_gray8(&run.path(rel), &avg.average)?;
        run.output(rel)?;
    }
    let result = serde_json::json!({
        "bytes": avg.bytes,
        "codec": avg.codec,
        "images": images.len(),
    });
    run.emit(a.out.as_deref(), &result)
}

fn eval_wilcoxon(run: &Run, a: &WilcoxonArgs) -> Result<()> {
    let xs: Vec<f64> = io::read_json(&run.input(&a.a)?)?;
    let ys: Vec<f64> = io::read_json(&run.input(&a.b)?)?;
    if a.utility {
        let u = utility_score(&xs, &ys)?;
        if u.degenerate {
            run.flag("utility-all-differences-zero");
        }
        run.emit(a.out.as_deref(), &u)
    } else {
        run.emit(a.out.as_deref(), &wilcoxon_signed_rank(&xs, &ys)?)
    }
}

/// Fixed-width text table of one grid, with the across-cell mean and std.
pub fn render_table(name: &str, grid: &EvalGrid) -> String {
    let kind = match grid.kind {
        GridKind::Fid => "MM-FID",
        GridKind::Std => "MM-STD",
    };
    let norm = if grid.normalized { ", normalized" } else { "" };
    let mut out = format!("{name} ({kind}{norm})\n");
    out.push_str(&format!("{:>6}", "scale"));
    for t in &grid.tasks {
        out.push_str(&format!(" {:>14}", t.id()));
    }
    out.push('\n');
    for (s, row) in grid.scales.iter().zip(&grid.cells) {
        out.push_str(&format!("{:>6}", s.to_string()));
        for v in row {
            out.push_str(&format!(" {v:>14.6}"));
        }
        out.push('\n');
    }
    let (mean, std) = grid.cell_mean_std();
    out.push_str(&format!("mean ± std over 16 cells: {mean:.6} ± {std:.6}\n"));
    if !grid.flags.is_empty() {
        out.push_str(&format!("flags: {}\n", grid.flags.join(", ")));
    }
    out
}

fn report(run: &Run, a: &ReportArgs) -> Result<()> {
    let mut names = Vec::new();
    let mut grids = Vec::new();
    for p in &a.grids {
        let text = io::read_bytes(&run.input(p)?)?;
        let text = String::from_utf8(text).map_err(|_| Error::Format(format!("{}: not UTF-8", p.display())))?;
        grids.push(EvalGrid::from_json(&text)?);
        names.push(file_stem(p)?);
    }
    if a.normalize {
        grids = normalize_grids(&grids)?;
    }
    let body: Vec<String> = names
        .iter()
        .zip(&grids)
        .map(|(name, g)| match a.format {
            ReportFormat::Table => render_table(name, g),
            ReportFormat::Csv => format!("# {name}\n{}", g.to_csv()),
        })
        .collect();
    let text = body.join("\n");
    print!("{text}");
    if let Some(rel) = &a.out {
        io::write_bytes(&run.path(rel), text.as_bytes())?;
        run.output(rel)?;
    }
    Ok(())
}
