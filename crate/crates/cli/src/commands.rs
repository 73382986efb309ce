use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use semtraj::classify::{
    default_mock_rules, read_classifications, write_classifications, Backend, ChatCompletionBackend,
    ClassificationCache, Classifier, HttpBackend, MockBackend, PoiClassification, PromptSpec,
};
use semtraj::config::{Artifact, BackendKind, PipelineConfig};
use semtraj::eval::{
    add_noise, classification_metrics, generate_synthetic_world, inference_metrics, render_summary, EvalReport,
    NoiseConfig, NoiseTarget, PoiTruth, StayTruth,
};
use semtraj::infer::{
    read_annotations, write_annotations, write_annotations_geojson, Annotator, ClassifiedPois, TemporalProfile,
};
use semtraj::poi::{parse_poi_file, write_csv, PoiDataset, PoiError, PoiFormat};
use semtraj::staypoint::{extract_all, read_staypoints, read_trajectories, write_staypoints, write_trajectories, PersonStay};
use semtraj::{read_json_lines, stage_seed, Execution, LonLat};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const INFER_META: &str = "infer_meta.json";

#[derive(Debug, Serialize, Deserialize)]
struct InferMeta {
    noise_sd_m: f64,
    noise_target: NoiseTarget,
    seed: u64,
}

fn reader(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::data(path, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::data(path, e))
}

/// Writes through a temporary sibling so a crash never leaves a torn file.
fn write_atomic<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), String>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::data(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(|e| CliError::data(&tmp, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| CliError::data(path, e))?;
    w.flush().map_err(|e| CliError::data(path, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| CliError::data(path, e))
}

fn str_err<E: ToString>(e: E) -> String {
    e.to_string()
}

fn load_pois(cfg: &PipelineConfig) -> Result<PoiDataset, CliError> {
    let path = cfg.path(Artifact::Pois);
    let format = cfg
        .poi
        .format
        .or_else(|| PoiFormat::from_path(&path))
        .ok_or_else(|| CliError::Usage(format!("cannot tell the format of {}; pass --format", path.display())))?;
    let rejections_path = cfg.output_dir.join("rejections.tsv");
    let parsed = match parse_poi_file(&path, format, &cfg.poi.columns) {
        Ok(p) => p,
        Err(PoiError::Quality { report, rejected, total, .. }) => {
            write_atomic(&rejections_path, |w| report.write_tsv(w).map_err(str_err))?;
            return Err(CliError::Data {
                message: format!(
                    "{rejected} of {total} rows rejected in {}; see {}",
                    path.display(),
                    rejections_path.display()
                ),
                path: Some(path),
            });
        }
        Err(e) => return Err(CliError::data(&path, e)),
    };
    let rej = &parsed.rejections;
    if !rej.rejections.is_empty() {
        log::warn!(
            "{} of {} POI rows rejected; details in {}",
            rej.rejections.len(),
            rej.total_rows,
            rejections_path.display()
        );
        write_atomic(&rejections_path, |w| rej.write_tsv(w).map_err(str_err))?;
    }
    Ok(parsed.dataset)
}

fn load_classifications(cfg: &PipelineConfig) -> Result<Vec<PoiClassification>, CliError> {
    let path = cfg.path(Artifact::Classifications);
    read_classifications(reader(&path)?).map_err(|e| CliError::data(&path, e))
}

fn load_profile(path: &Path) -> Result<TemporalProfile, CliError> {
    TemporalProfile::from_json(&read_text(path)?).map_err(|e| CliError::data(path, e))
}

pub fn classify(cfg: &PipelineConfig) -> Result<(), CliError> {
    let ds = load_pois(cfg)?;
    let c = &cfg.classify;
    let timeout = Duration::from_secs(c.timeout_s);
    let endpoint = c.endpoint.clone().unwrap_or_default();
    match c.backend {
        BackendKind::Mock => run_classify(cfg, &ds, MockBackend::new(default_mock_rules())),
        BackendKind::Http => run_classify(cfg, &ds, HttpBackend::new(endpoint, timeout)),
        BackendKind::Openai => {
            let backend = ChatCompletionBackend::from_env(endpoint, c.model.clone(), timeout)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            run_classify(cfg, &ds, backend)
        }
    }
}

fn run_classify<B: Backend>(cfg: &PipelineConfig, ds: &PoiDataset, backend: B) -> Result<(), CliError> {
    let spec = PromptSpec::default().with_hints(cfg.classify.hints.iter().cloned());
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let cache_path = cfg.path(Artifact::Cache);
    if let Some(dir) = cache_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::data(dir, e))?;
    }
    let cache = ClassificationCache::open(&cache_path).map_err(|e| CliError::data(&cache_path, e))?;
    let classifier = Classifier::new(spec, backend, cache, cfg.classify.options());
    let (report, aborted) = match classifier.classify_batch(ds, None) {
        Ok(r) => (r, None),
        Err(a) => {
            let msg = a.to_string();
            (a.report, Some(msg))
        }
    };
    for f in &report.failures {
        log::warn!("{}", f.error);
    }
    let out = cfg.path(Artifact::Classifications);
    write_atomic(&out, |w| write_classifications(&report.classifications, w).map_err(str_err))?;
    log::info!(
        "classified {} of {} POIs ({} cached, {} backend calls, {} retries) -> {}",
        report.classifications.len(),
        ds.len(),
        report.cache_hits,
        report.backend_calls,
        report.retries,
        out.display()
    );
    match aborted {
        Some(msg) => Err(CliError::Backend(msg)),
        None => Ok(()),
    }
}

fn extract(cfg: &PipelineConfig, exec: Execution) -> Result<Vec<PersonStay>, CliError> {
    let path = cfg.path(Artifact::Trajectories);
    let trajectories = read_trajectories(reader(&path)?).map_err(|e| CliError::data(&path, e))?;
    extract_all(&trajectories, cfg.staypoint, exec).map_err(|e| CliError::data(&path, e))
}

pub fn staypoints(cfg: &PipelineConfig, exec: Execution) -> Result<(), CliError> {
    let stays = extract(cfg, exec)?;
    let out = cfg.path(Artifact::Staypoints);
    write_atomic(&out, |w| write_staypoints(&stays, w).map_err(str_err))?;
    log::info!("{} stay points -> {}", stays.len(), out.display());
    Ok(())
}

fn load_stays(cfg: &PipelineConfig, exec: Execution) -> Result<Vec<PersonStay>, CliError> {
    let path = cfg.path(Artifact::Staypoints);
    if cfg.paths.staypoints.is_some() || path.exists() {
        log::debug!("reading stay points from {}", path.display());
        return read_staypoints(reader(&path)?).map_err(|e| CliError::data(&path, e));
    }
    extract(cfg, exec)
}

pub fn infer(cfg: &PipelineConfig, exec: Execution) -> Result<(), CliError> {
    let ds = load_pois(cfg)?;
    let classes = load_classifications(cfg)?;
    let mut pois = ClassifiedPois::join(&ds, &classes)
        .map_err(|e| CliError::data(&cfg.path(Artifact::Classifications), e))?;
    let profile_path = cfg.path(Artifact::Profile);
    let profile = load_profile(&profile_path)?;
    let mut stays = load_stays(cfg, exec)?;

    let noise = NoiseConfig::new(cfg.noise.sd_m, stage_seed(cfg.seed, "noise"))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if noise.sd_m > 0.0 {
        match cfg.noise.target {
            NoiseTarget::Pois => pois = pois.with_positions(&add_noise(&pois.positions(), &noise)),
            NoiseTarget::StayPoints => {
                let pts: Vec<LonLat> = stays.iter().map(|s| s.stay.position()).collect();
                for (s, p) in stays.iter_mut().zip(add_noise(&pts, &noise)) {
                    s.stay.lon = p.lon;
                    s.stay.lat = p.lat;
                }
            }
        }
    }

    let annotator = Annotator::new(&pois, &profile, cfg.infer).map_err(|e| CliError::data(&profile_path, e))?;
    let annotations = annotator.annotate(&stays, exec);
    let out = cfg.path(Artifact::Annotations);
    write_atomic(&out, |w| write_annotations(&annotations, w).map_err(str_err))?;
    let meta = InferMeta {
        noise_sd_m: cfg.noise.sd_m,
        noise_target: cfg.noise.target,
        seed: cfg.seed,
    };
    write_atomic(&cfg.output_dir.join(INFER_META), |w| {
        serde_json::to_writer_pretty(w, &meta).map_err(str_err)
    })?;
    log::info!("annotated {} stay points -> {}", annotations.len(), out.display());
    Ok(())
}

fn wanted(explicit: &Option<PathBuf>, path: &Path) -> bool {
    explicit.is_some() || path.exists()
}

pub fn evaluate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let mut report = EvalReport::default();
    let poi_truth = cfg.path(Artifact::PoiTruth);
    let stay_truth = cfg.path(Artifact::StayTruth);

    if wanted(&cfg.paths.poi_truth, &poi_truth) {
        let truth: Vec<PoiTruth> = read_json_lines(reader(&poi_truth)?).map_err(|e| CliError::data(&poi_truth, e))?;
        let preds = load_classifications(cfg)?;
        let r = classification_metrics(&preds, &truth).map_err(|e| CliError::data(&poi_truth, e))?;
        report.classification = Some(r);
    }
    if wanted(&cfg.paths.stay_truth, &stay_truth) {
        let truth: Vec<StayTruth> =
            read_json_lines(reader(&stay_truth)?).map_err(|e| CliError::data(&stay_truth, e))?;
        let ann_path = cfg.path(Artifact::Annotations);
        let annotations = read_annotations(reader(&ann_path)?).map_err(|e| CliError::data(&ann_path, e))?;
        let r = inference_metrics(&annotations, &truth, cfg.eval.alignment_tolerance_s)
            .map_err(|e| CliError::data(&stay_truth, e))?;
        report.inference = Some(r);
    }
    if report.classification.is_none() && report.inference.is_none() {
        return Err(CliError::data_msg(format!(
            "no truth to evaluate against: neither {} nor {} exists",
            poi_truth.display(),
            stay_truth.display()
        )));
    }

    let meta_path = cfg.output_dir.join(INFER_META);
    if report.inference.is_some() && meta_path.exists() {
        let meta: InferMeta =
            serde_json::from_str(&read_text(&meta_path)?).map_err(|e| CliError::data(&meta_path, e))?;
        report.noise_sd_m = Some(meta.noise_sd_m);
    }
    report.check().map_err(|e| CliError::data_msg(format!("metric invariant violated: {e}")))?;

    let out = cfg.path(Artifact::Report);
    write_atomic(&out, |w| serde_json::to_writer_pretty(w, &report).map_err(str_err))?;
    let table = report.render_table();
    write_atomic(&out.with_extension("txt"), |w| w.write_all(table.as_bytes()).map_err(str_err))?;
    if report.inference.is_some() {
        let csv_path = out.with_file_name("per_type.csv");
        write_atomic(&csv_path, |w| report.write_per_type_csv(w).map_err(str_err))?;
    }
    print!("{table}");
    Ok(())
}

pub fn synth(cfg: &PipelineConfig) -> Result<(), CliError> {
    let profile_path = cfg.path(Artifact::Profile);
    let profile = match &cfg.paths.profile {
        Some(p) => load_profile(p)?,
        None => TemporalProfile::synthetic_default(),
    };
    let scfg = cfg.synth.with_seed(stage_seed(cfg.seed, "synth"));
    let world = generate_synthetic_world(&scfg, &profile).map_err(|e| CliError::Usage(e.to_string()))?;

    if cfg.paths.profile.is_none() {
        write_atomic(&profile_path, |w| w.write_all(profile.to_json().as_bytes()).map_err(str_err))?;
    }
    write_atomic(&cfg.path(Artifact::Pois), |w| write_csv(&world.pois, w).map_err(str_err))?;
    write_atomic(&cfg.path(Artifact::Classifications), |w| {
        write_classifications(&world.classifications, w).map_err(str_err)
    })?;
    write_atomic(&cfg.path(Artifact::PoiTruth), |w| write_lines(&world.poi_truth, w))?;
    write_atomic(&cfg.path(Artifact::Trajectories), |w| {
        write_trajectories(&world.trajectories, w).map_err(str_err)
    })?;
    write_atomic(&cfg.path(Artifact::StayTruth), |w| write_lines(&world.stay_truth, w))?;
    if world.skipped_visits > 0 {
        log::warn!("{} scripted visits had no feasible POI and were skipped", world.skipped_visits);
    }
    log::info!(
        "synthetic world: {} POIs, {} trajectories, {} labelled stays -> {}",
        world.pois.len(),
        world.trajectories.len(),
        world.stay_truth.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn write_lines<T: Serialize, W: io::Write>(items: &[T], mut w: W) -> Result<(), String> {
    for it in items {
        serde_json::to_writer(&mut w, it).map_err(str_err)?;
        w.write_all(b"\n").map_err(str_err)?;
    }
    Ok(())
}

pub struct ReportPlan {
    pub reports: Vec<PathBuf>,
    pub annotations_explicit: bool,
    pub geojson: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

pub fn report(cfg: &PipelineConfig, plan: &ReportPlan) -> Result<(), CliError> {
    let paths = if plan.reports.is_empty() {
        vec![cfg.path(Artifact::Report)]
    } else {
        plan.reports.clone()
    };
    let mut runs = Vec::with_capacity(paths.len());
    for p in &paths {
        let r: EvalReport = serde_json::from_str(&read_text(p)?).map_err(|e| CliError::data(p, e))?;
        let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
        runs.push((name, r));
    }
    let summary = render_summary(&runs);
    let summary_path = plan.summary.clone().unwrap_or_else(|| cfg.output_dir.join("summary.txt"));
    write_atomic(&summary_path, |w| w.write_all(summary.as_bytes()).map_err(str_err))?;
    print!("{summary}");

    let ann_path = cfg.path(Artifact::Annotations);
    if plan.annotations_explicit || cfg.paths.annotations.is_some() || ann_path.exists() {
        let annotations = read_annotations(reader(&ann_path)?).map_err(|e| CliError::data(&ann_path, e))?;
        let geo = plan.geojson.clone().unwrap_or_else(|| cfg.output_dir.join("annotations.geojson"));
        write_atomic(&geo, |w| write_annotations_geojson(&annotations, w).map_err(str_err))?;
        log::info!("{} annotated stays -> {}", annotations.len(), geo.display());
    }
    Ok(())
}
