use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use prnu_core::attribution::{decide, test_query_complete, test_query_quick, Decision, QueryResult, Strategy};
use prnu_core::evaluation::{self, build_experiment, sample_frames, summarize, CameraEntry, ExperimentConfig, QueryEntry};
use prnu_core::fingerprint::{
    aggregate_video_fingerprint, convert_image_fingerprint, estimate_image_to_video_params, estimate_prnu_from_images,
    Domain, Fingerprint, Provenance, DEFAULT_PCE_THRESHOLD,
};
use prnu_core::geometry::SearchRanges;
use prnu_core::imaging::FrameSet;
use prnu_core::synthcam::{build_scenario, ScenarioConfig};
use prnu_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{parse_interval, residual_config, swarm, FileConfig};

const DEFAULT_DELTA: usize = 10;
const DEFAULT_DENOISER: &str = "gaussian";

#[derive(Args, Debug)]
pub struct FingerprintImagesArgs {
    /// Directory of frame_NNNNNN.png/.pgm still images
    image_dir: PathBuf,
    /// Output PRNF file (a .meta sidecar is written next to it)
    out: PathBuf,
    /// Residual denoiser: gaussian or wiener [default: gaussian]
    #[arg(long)]
    denoiser: Option<String>,
}

#[derive(Args, Debug)]
pub struct ConvertIvArgs {
    /// Image-domain fingerprint (PRNF)
    fingerprint: PathBuf,
    /// Directory of video frames; frame 1 is skipped
    frames_dir: PathBuf,
    /// Output video-domain fingerprint (PRNF)
    out: PathBuf,
    /// Scale search range, lo:hi [default: 0.3:0.85]
    #[arg(long)]
    scale_range: Option<String>,
    /// Per-frame PCE a frame needs to count toward the estimate [default: 60]
    #[arg(long)]
    pce_threshold: Option<f64>,
    /// Optimizer seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Swarm size [default: 24]
    #[arg(long)]
    particles: Option<usize>,
    /// Swarm iterations [default: 40]
    #[arg(long)]
    iterations: Option<usize>,
    /// Residual denoiser: gaussian or wiener [default: gaussian]
    #[arg(long)]
    denoiser: Option<String>,
    /// Print the full per-frame estimate as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
pub struct FingerprintVideoArgs {
    /// Directory of video frames; frame 1 is skipped
    frames_dir: PathBuf,
    /// Output PRNF file; the aggregation log goes to <out>.state.json
    out: PathBuf,
    /// Largest accepted shift, in pixels, along each axis [default: 10]
    #[arg(long)]
    delta: Option<usize>,
    /// Also write the running fingerprint after every admitted frame
    #[arg(long)]
    snapshots: bool,
    /// Residual denoiser: gaussian or wiener [default: gaussian]
    #[arg(long)]
    denoiser: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Complete,
    Quick,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    /// Video-domain fingerprint (PRNF)
    fingerprint: PathBuf,
    /// Directory of query frames; frame 1 is never used
    frames_dir: PathBuf,
    /// Complete searches a warp per frame, quick tries the shift only [default: complete]
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Number of frames drawn at random (all when omitted or larger)
    #[arg(long)]
    frames: Option<usize>,
    /// Optimizer seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Attribution threshold on the query PCE [default: 60]
    #[arg(long)]
    threshold: Option<f64>,
    /// Scale search range, lo:hi [default: 0.99:1.01]
    #[arg(long)]
    scale_range: Option<String>,
    /// Rotation search range in radians, lo:hi [default: -0.15:0.15]
    #[arg(long)]
    theta_range: Option<String>,
    /// Swarm size [default: 24]
    #[arg(long)]
    particles: Option<usize>,
    /// Swarm iterations [default: 40]
    #[arg(long)]
    iterations: Option<usize>,
    /// Residual denoiser: gaussian or wiener [default: gaussian]
    #[arg(long)]
    denoiser: Option<String>,
    /// Machine-readable report on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
pub struct RocArgs {
    /// Experiment description (JSON); relative paths resolve against its directory
    experiment: PathBuf,
    /// Directory for scores, curves and the summary
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scenario description (JSON); omitted keys take defaults
    scenario: PathBuf,
    /// Output directory
    out_dir: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Input(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("fingerprint")
        .to_string()
}

fn load_video(dir: &Path) -> Result<FrameSet> {
    FrameSet::load_dir(dir, dir.display().to_string())?.without_first_frame()
}

pub fn fingerprint_images(a: FingerprintImagesArgs, file: &FileConfig) -> Result<()> {
    let residual = residual_config(a.denoiser.as_deref().or(file.denoiser.as_deref()).unwrap_or(DEFAULT_DENOISER))?;
    let images = FrameSet::load_dir(&a.image_dir, a.image_dir.display().to_string())?;
    let mut fp = estimate_prnu_from_images(&images, &residual)?;
    fp.label = file_label(&a.out);
    fp.save(&a.out)?;
    let (h, w) = fp.dims();
    println!("fingerprint {} {h}x{w} from {} images", a.out.display(), fp.frames_used);
    Ok(())
}

pub fn convert_iv(a: ConvertIvArgs, file: &FileConfig) -> Result<()> {
    let scale = match a.scale_range.as_deref().or(file.scale_range.as_deref()) {
        Some(t) => parse_interval(t)?,
        None => SearchRanges::image_to_video().scale,
    };
    let threshold = a.pce_threshold.or(file.pce_threshold).unwrap_or(DEFAULT_PCE_THRESHOLD);
    let cfg = swarm(a.seed.or(file.seed).unwrap_or(0), a.particles.or(file.particles), a.iterations.or(file.iterations))?;
    let residual = residual_config(a.denoiser.as_deref().or(file.denoiser.as_deref()).unwrap_or(DEFAULT_DENOISER))?;
    let k = Fingerprint::load(&a.fingerprint)?;
    let frames = load_video(&a.frames_dir)?;
    let est = estimate_image_to_video_params(&k, &frames, scale, threshold, &cfg, &residual)?;
    let mut kiv = convert_image_fingerprint(&k, &est.params, frames.dims())?;
    kiv.label = file_label(&a.out);
    kiv.metadata.insert("pce_threshold".into(), format!("{threshold:?}"));
    kiv.metadata.insert("scale_range".into(), format!("{:?}:{:?}", scale.lo, scale.hi));
    kiv.metadata.insert("accepted_frames".into(), est.accepted.len().to_string());
    kiv.save(&a.out)?;
    if a.json || file.json.unwrap_or(false) {
        println!("{}", serde_json::to_string_pretty(&est).expect("estimate serializes"));
    } else {
        let p = est.params;
        println!("s={:.3} cx={:.0} cy={:.0}", p.s, p.cx, p.cy);
        eprintln!("{} of {} frames above PCE {threshold}", est.accepted.len(), frames.len());
    }
    Ok(())
}

pub fn fingerprint_video(a: FingerprintVideoArgs, file: &FileConfig) -> Result<()> {
    let delta = a.delta.or(file.delta).unwrap_or(DEFAULT_DELTA);
    let snapshots = a.snapshots || file.snapshots.unwrap_or(false);
    let residual = residual_config(a.denoiser.as_deref().or(file.denoiser.as_deref()).unwrap_or(DEFAULT_DENOISER))?;
    let frames = load_video(&a.frames_dir)?;
    let (mut kv, state) = aggregate_video_fingerprint(&frames, delta, snapshots, &residual)?;
    kv.label = file_label(&a.out);
    kv.save(&a.out)?;
    let mut state_path = a.out.as_os_str().to_owned();
    state_path.push(".state.json");
    let state_path = PathBuf::from(state_path);
    write_text(&state_path, &serde_json::to_string_pretty(&state).expect("state serializes"))?;
    if let Some(snaps) = &state.snapshots {
        let mut dir = a.out.as_os_str().to_owned();
        dir.push(".snapshots");
        let dir = PathBuf::from(dir);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for (i, s) in snaps.iter().enumerate() {
            let mut fp = Fingerprint::new(s.clone(), Domain::Video, Provenance::Videos, i + 1, residual.id());
            fp.label = format!("{}-snapshot-{}", kv.label, i + 1);
            fp.save(dir.join(format!("snapshot_{:04}.prnf", i + 1)))?;
        }
    }
    if state.degenerate {
        eprintln!("warning: no frame pair matched within delta {delta}; fingerprint is a single residual");
    }
    println!(
        "fingerprint {} from {} of {} frames (reference frame {}, {} iterations)",
        a.out.display(),
        state.member_indices.len(),
        frames.len(),
        state.reference_index,
        state.iterations
    );
    Ok(())
}

#[derive(Serialize)]
struct TestReport<'a> {
    decision: Decision,
    threshold: f64,
    #[serde(flatten)]
    result: &'a QueryResult,
}

fn query_ranges(scale: Option<&str>, theta: Option<&str>) -> Result<SearchRanges> {
    let mut r = SearchRanges::query();
    if let Some(t) = scale {
        r.scale = parse_interval(t)?;
    }
    if let Some(t) = theta {
        r.theta = parse_interval(t)?;
    }
    r.validate()?;
    Ok(r)
}

pub fn test(a: TestArgs, file: &FileConfig) -> Result<()> {
    let strategy = match (a.strategy, file.strategy.as_deref()) {
        (Some(StrategyArg::Complete), _) | (None, None | Some("complete")) => Strategy::Complete,
        (Some(StrategyArg::Quick), _) | (None, Some("quick")) => Strategy::Quick,
        (None, Some(other)) => return Err(Error::Parameter(format!("unknown strategy '{other}'"))),
    };
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let threshold = a.threshold.or(file.threshold).unwrap_or(DEFAULT_PCE_THRESHOLD);
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::Parameter(format!("threshold {threshold} must be positive")));
    }
    let ranges = query_ranges(
        a.scale_range.as_deref().or(file.scale_range.as_deref()),
        a.theta_range.as_deref().or(file.theta_range.as_deref()),
    )?;
    let cfg = swarm(seed, a.particles.or(file.particles), a.iterations.or(file.iterations))?;
    let residual = residual_config(a.denoiser.as_deref().or(file.denoiser.as_deref()).unwrap_or(DEFAULT_DENOISER))?;
    let k = Fingerprint::load(&a.fingerprint)?;
    let all = load_video(&a.frames_dir)?;
    let frames = match a.frames.or(file.frames) {
        Some(n) => sample_frames(&all, n, seed)?,
        None => all,
    };
    let result = match strategy {
        Strategy::Quick => test_query_quick(&k, &frames, &residual)?,
        Strategy::Complete => test_query_complete(&k, &frames, &ranges, &cfg, &residual)?,
    };
    let decision = decide(&result, threshold)?;
    if a.json || file.json.unwrap_or(false) {
        let report = TestReport {
            decision,
            threshold,
            result: &result,
        };
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("frame      P_f      s         theta     cx    cy");
        for f in &result.per_frame {
            match f.params {
                Some(p) => println!("{:>5} {:>10.2} {:>9.5} {:>9.5} {:>5.0} {:>5.0}", f.index, f.p_f, p.s, p.theta, p.cx, p.cy),
                None => println!("{:>5} {:>10.2}   shift ({}, {})", f.index, f.p_f, f.peak_shift.0, f.peak_shift.1),
            }
        }
        let verdict = match decision {
            Decision::Attributed => "attributed",
            Decision::Rejected => "rejected",
        };
        println!("p_q = {:.2} ({verdict}, threshold {threshold})", result.p_q);
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    cameras: Vec<CameraFile>,
    queries: Vec<QueryFile>,
    #[serde(default = "default_strategy")]
    strategy: Strategy,
    #[serde(default = "default_frames")]
    frames: usize,
    #[serde(default)]
    seed: u64,
    scale_range: Option<String>,
    theta_range: Option<String>,
    particles: Option<usize>,
    iterations: Option<usize>,
    denoiser: Option<String>,
}

fn default_strategy() -> Strategy {
    Strategy::Complete
}

fn default_frames() -> usize {
    5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    id: String,
    fingerprint: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryFile {
    id: String,
    camera: String,
    frames: PathBuf,
}

pub fn roc(a: RocArgs, _file: &FileConfig) -> Result<()> {
    let text = fs::read_to_string(&a.experiment).map_err(|e| io_err(&a.experiment, e))?;
    let exp: ExperimentFile =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", a.experiment.display())))?;
    let base = a.experiment.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let cameras = exp
        .cameras
        .iter()
        .map(|c| {
            Ok(CameraEntry {
                camera_id: c.id.clone(),
                fingerprint: Fingerprint::load(resolve(&c.fingerprint))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let queries = exp
        .queries
        .iter()
        .map(|q| {
            Ok(QueryEntry {
                query_id: q.id.clone(),
                camera_id: q.camera.clone(),
                frames: load_video(&resolve(&q.frames))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = ExperimentConfig {
        strategy: exp.strategy,
        frames_per_query: exp.frames,
        seed: exp.seed,
        ranges: query_ranges(exp.scale_range.as_deref(), exp.theta_range.as_deref())?,
        swarm: swarm(exp.seed, exp.particles, exp.iterations)?,
    };
    let residual = residual_config(exp.denoiser.as_deref().unwrap_or(DEFAULT_DENOISER))?;
    let scores = build_experiment(&cameras, &queries, &cfg, &residual)?;
    let (summary, curves, grid) = summarize(&scores)?;

    fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    write_text(&a.out_dir.join("scores.csv"), &evaluation::scores_csv(&scores))?;
    for (cam, c) in &curves {
        write_text(&a.out_dir.join(format!("roc_{cam}.csv")), &evaluation::curve_csv(c))?;
    }
    write_text(&a.out_dir.join("roc_average.csv"), &evaluation::grid_csv(&grid))?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&a.out_dir.join("summary.json"), &json)?;
    println!("{json}");
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&a.scenario).map_err(|e| io_err(&a.scenario, e))?;
    let cfg: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", a.scenario.display())))?;
    let sc = build_scenario(&cfg)?;
    let out = &a.out_dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_text(&out.join("scenario.json"), &serde_json::to_string_pretty(&cfg).expect("config serializes"))?;

    let truth = |plane, domain, label: &str| {
        let mut fp = Fingerprint::new(plane, domain, Provenance::Images, 1, "synthetic");
        fp.label = label.to_string();
        fp.metadata.insert("source".into(), "synthcam".into());
        fp
    };
    truth(sc.camera.k_true_image.clone(), Domain::Image, "k_true").save(out.join("camera.prnf"))?;
    let mut kv = truth(sc.camera.k_true_video(), Domain::Video, "k_true_video");
    kv.params = Some(sc.camera.conversion);
    kv.save(out.join("camera_video.prnf"))?;

    if let Some(images) = &sc.images {
        images.save_dir(out.join("images"))?;
    }
    let mut index = BTreeMap::new();
    for (i, v) in sc.videos.iter().enumerate() {
        let dir = out.join(format!("video_{i:03}"));
        v.frames.save_dir(&dir)?;
        write_text(&dir.join("trace.json"), &v.trace.to_json())?;
        index.insert(format!("video_{i:03}"), v.frames.len());
    }
    println!(
        "synthetic camera {} -> {} ({} images, {} videos)",
        cfg.seed,
        out.display(),
        sc.images.as_ref().map_or(0, |s| s.len()),
        index.len()
    );
    Ok(())
}
