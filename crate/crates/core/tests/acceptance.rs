//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. A positional argument filters checks by name.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semtraj::classify::{
    build_prompt, default_mock_rules, parse_response, write_classifications, Backend, BackendError,
    ClassificationCache, Classifier, ClassifyOptions, MockBackend, PoiClassification, PromptSpec, RankedActivity, Top3,
    CATEGORY_HEADER, HINT_HEADER, OBSERVATION_HEADER, TASK_HEADER,
};
use semtraj::eval::{
    add_noise, classification_metrics, generate_synthetic_world, inference_metrics, EvalReport, InferenceReport,
    NoiseConfig, PoiTruth, SynthConfig, SyntheticWorld,
};
use semtraj::geo::{haversine_m, offset_m, LonLat};
use semtraj::infer::{
    score_activities, select_activity, AnnotatedStayPoint, Annotator, CandidatePoi, ClassifiedPoi, ClassifiedPois,
    InferParams, Provenance, SpatialIndex, TemporalProfile, HOURS,
};
use semtraj::poi::{PoiDataset, PoiRecord};
use semtraj::staypoint::{extract_all, extract_staypoints, GpsPoint, PersonStay, StayPoint, StayPointParams, Trajectory};
use semtraj::{ActivityCode, Execution};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn code(c: u64) -> ActivityCode {
    ActivityCode::new(c).unwrap()
}

fn within(limit: Duration, started: Instant, what: &str) -> Result<Duration, String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("{what} took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

// ---------------------------------------------------------------- scoring

fn random_profile(rng: &mut ChaCha8Rng, quantized: bool) -> (TemporalProfile, Vec<[f64; HOURS]>) {
    let mut profile = TemporalProfile::empty();
    let mut table = Vec::new();
    for c in ActivityCode::all() {
        let mut h = [0.0; HOURS];
        if quantized {
            h = [1.0 / HOURS as f64; HOURS];
        } else {
            for v in h.iter_mut() {
                *v = rng.gen_range(0.0..1.0);
            }
            let s: f64 = h.iter().sum();
            for v in h.iter_mut() {
                *v /= s;
            }
        }
        profile.set(c, h).unwrap();
        table.push(*profile.histogram(c).unwrap());
    }
    (profile, table)
}

fn random_top3(rng: &mut ChaCha8Rng, quantized: bool) -> Top3 {
    let n = rng.gen_range(1..=3);
    let mut codes: Vec<u64> = Vec::new();
    while codes.len() < n {
        let c = rng.gen_range(1..=15);
        if !codes.contains(&c) {
            codes.push(c);
        }
    }
    let mut probs: Vec<f64> = (0..n)
        .map(|_| if quantized { rng.gen_range(1..=3) as f64 / 10.0 } else { rng.gen_range(0.0..1.0) })
        .collect();
    let s: f64 = probs.iter().sum();
    if s > 1.0 {
        probs.iter_mut().for_each(|p| *p /= s);
    }
    Top3::from_pairs(codes.into_iter().zip(probs).map(|(c, p)| RankedActivity::new(code(c), p)).collect())
        .unwrap()
        .0
}

type Key = (f64, f64, u8);

fn better(a: Key, b: Key) -> bool {
    a.0 > b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)))
}

fn score_oracle() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut entries_checked = 0usize;
    let mut tied = 0usize;
    for instance in 0..1000 {
        let quantized = instance % 5 == 0;
        let (profile, table) = random_profile(&mut rng, quantized);
        let k = rng.gen_range(1..=10);
        let mut priors: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        if quantized {
            priors = vec![1.0; k];
        }
        let ps: f64 = priors.iter().sum();
        let cands: Vec<(CandidatePoi, Top3)> = (0..k)
            .map(|i| {
                let d = if quantized { (i % 2) as f64 } else { rng.gen_range(0.0..50.0) };
                (CandidatePoi { poi_id: format!("c{i}"), distance_m: d, prior: priors[i] / ps }, random_top3(&mut rng, quantized))
            })
            .collect();
        let hour = rng.gen_range(0..HOURS);
        let refs: Vec<(CandidatePoi, &Top3)> = cands.iter().map(|(c, t)| (c.clone(), t)).collect();
        let matrix = score_activities(hour, &refs, &profile).map_err(|e| e.to_string())?;

        // brute force: every (candidate, code) pair from the raw tables
        let mut best: Option<(Key, usize)> = None;
        let mut per_code: BTreeMap<u8, Key> = BTreeMap::new();
        for (row, (cand, top3)) in cands.iter().enumerate() {
            for ra in top3.as_slice() {
                let expected = table[ra.code.index()][hour] * ra.prob * cand.prior;
                let got = matrix.rows[row]
                    .entries
                    .iter()
                    .find(|e| e.code == ra.code)
                    .ok_or_else(|| format!("instance {instance}: entry ({row}, {}) missing", ra.code.get()))?
                    .score;
                ensure((got - expected).abs() <= 1e-12, || format!("instance {instance}: {got} vs {expected}"))?;
                entries_checked += 1;
                let key = (expected, cand.distance_m, ra.code.get());
                if best.is_none_or(|(b, _)| better(key, b)) {
                    best = Some((key, row));
                }
                let slot = per_code.entry(ra.code.get()).or_insert(key);
                if better(key, *slot) {
                    *slot = key;
                }
            }
            ensure(matrix.rows[row].entries.len() == top3.as_slice().len(), || format!("instance {instance}: row {row} size"))?;
        }
        let ((score, _, c), row) = best.unwrap();
        let sel = select_activity(&matrix).ok_or("empty selection")?;
        ensure(sel.activity.get() == c && sel.row == row && sel.score == score, || {
            format!("instance {instance}: selected ({}, row {}) expected ({c}, row {row})", sel.activity.get(), sel.row)
        })?;
        let mut ranked: Vec<Key> = per_code.into_values().collect();
        ranked.sort_by(|a, b| if better(*a, *b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
        ranked.truncate(3);
        let got: Vec<(u8, f64)> = sel.ranked_alternatives.iter().map(|a| (a.code.get(), a.score)).collect();
        let want: Vec<(u8, f64)> = ranked.iter().map(|k| (k.2, k.0)).collect();
        ensure(got == want, || format!("instance {instance}: alternatives {got:?} vs {want:?}"))?;
        let top_scores = matrix.rows.iter().flat_map(|r| &r.entries).filter(|e| e.score == score).count();
        if top_scores > 1 {
            tied += 1;
        }
    }
    let took = within(Duration::from_secs(5), started, "oracle")?;
    Ok(format!("1000 instances, {entries_checked} entries within 1e-12, {tied} with a tied maximum, {took:.2?}"))
}

// ---------------------------------------------------------------- metrics

fn metric_identity() -> Result<String, String> {
    // Hit@1/2/3 = 61.6/22.6/6.1 per cent of 1000 POIs
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    for i in 0..1000 {
        let order: [u64; 3] = match i {
            0..=615 => [5, 6, 7],
            616..=841 => [6, 5, 7],
            842..=902 => [6, 7, 5],
            _ => [6, 7, 8],
        };
        let top3 = Top3::from_pairs(order.iter().zip([0.5, 0.3, 0.2]).map(|(&c, p)| RankedActivity::new(code(c), p)).collect())
            .unwrap()
            .0;
        preds.push(PoiClassification { poi_id: format!("p{i}"), top3, raw_response: String::new(), reordered: false });
        truth.push(PoiTruth { poi_id: format!("p{i}"), code: code(5) });
    }
    let r = classification_metrics(&preds, &truth).map_err(|e| e.to_string())?;
    let sum: f64 = r.hit_at.iter().sum();
    ensure((r.accuracy - 0.903).abs() < 1e-9, || format!("accuracy {}", r.accuracy))?;
    ensure((sum - r.accuracy).abs() < 1e-9, || format!("sum {sum} vs {}", r.accuracy))?;
    EvalReport { classification: Some(r.clone()), ..EvalReport::default() }.check()?;

    // the identity on a synthetic world with a noisy classifier
    let w = world(3, 20)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noisy: Vec<PoiClassification> = w
        .classifications
        .iter()
        .map(|c| {
            let mut c = c.clone();
            if rng.gen_bool(0.3) {
                c.top3 = random_top3(&mut rng, false);
            }
            c
        })
        .collect();
    let r2 = classification_metrics(&noisy, &w.poi_truth).map_err(|e| e.to_string())?;
    EvalReport { classification: Some(r2.clone()), ..EvalReport::default() }.check()?;
    Ok(format!(
        "1000-POI tally fixture {:.1}+{:.1}+{:.1} = {:.1}; perturbed world of {} POIs Accuracy {:.4} = sum Hit@n",
        100.0 * r.hit_at[0],
        100.0 * r.hit_at[1],
        100.0 * r.hit_at[2],
        100.0 * r.accuracy,
        r2.n,
        r2.accuracy
    ))
}

// ---------------------------------------------------------------- synthetic benchmark

fn world(seed: u64, agents: usize) -> Result<SyntheticWorld, String> {
    let cfg = SynthConfig { agents, seed, ..SynthConfig::default() };
    generate_synthetic_world(&cfg, &TemporalProfile::synthetic_default()).map_err(|e| e.to_string())
}

fn infer_world(w: &SyntheticWorld, sd_m: f64, noise_seed: u64) -> Result<InferenceReport, String> {
    let profile = TemporalProfile::synthetic_default();
    let stays = extract_all(&w.trajectories, StayPointParams::default(), Execution::Parallel).map_err(|e| e.to_string())?;
    let pois = ClassifiedPois::join(&w.pois, &w.classifications).map_err(|e| e.to_string())?;
    let noisy = pois.with_positions(&add_noise(&pois.positions(), &NoiseConfig::new(sd_m, noise_seed).unwrap()));
    let annotator = Annotator::new(&noisy, &profile, InferParams::default()).map_err(|e| e.to_string())?;
    let annotations = annotator.annotate(&stays, Execution::Parallel);
    let report = inference_metrics(&annotations, &w.stay_truth, 120).map_err(|e| e.to_string())?;
    EvalReport { noise_sd_m: Some(sd_m), classification: None, inference: Some(report.clone()) }.check()?;
    Ok(report)
}

fn synthetic_benchmark() -> Result<String, String> {
    let started = Instant::now();
    let base = world(0, 100)?;
    ensure(base.trajectories.len() == 100, || "agent count".into())?;
    let clean = infer_world(&base, 0.0, 0)?;
    let a0 = clean.non_mandatory.acc_at[0];
    ensure(a0 == 1.0, || format!("(a) noise-free non-mandatory Acc@1 {a0}"))?;
    let five = infer_world(&base, 5.0, 1)?;
    let a5 = five.non_mandatory.acc_at[0];
    ensure(a5 >= 0.95, || format!("(b) 5 m Acc@1 {a5}"))?;

    let sds = [5.0, 10.0, 20.0];
    let mut means = [0.0; 3];
    for seed in 0..10u64 {
        let w = world(100 + seed, 100)?;
        for (i, &sd) in sds.iter().enumerate() {
            means[i] += infer_world(&w, sd, 1000 + seed)?.non_mandatory.acc_at[0] / 10.0;
        }
    }
    for i in 1..3 {
        ensure(means[i] <= means[i - 1] + 0.02, || format!("(c) mean Acc@1 rises {:?}", means))?;
    }
    let took = within(Duration::from_secs(60), started, "benchmark")?;
    Ok(format!(
        "n={} visits; Acc@1 sd0 {:.1}%, sd5 {:.1}%; 10-seed means 5/10/20 m = {:.1}/{:.1}/{:.1}%; {took:.1?}",
        clean.non_mandatory.n,
        100.0 * a0,
        100.0 * a5,
        100.0 * means[0],
        100.0 * means[1],
        100.0 * means[2]
    ))
}

// ---------------------------------------------------------------- mandatory rules

const MONDAY: i64 = 1_493_596_800;

/// GPS at 2-minute intervals dwelling at each (position, start hour, end hour, day).
fn trace(person: &str, visits: &[(LonLat, i64, f64, f64)]) -> Trajectory {
    let mut pts = Vec::new();
    for &(p, day, from, to) in visits {
        let (a, b) = (MONDAY + day * 86_400 + (from * 3600.0) as i64, MONDAY + day * 86_400 + (to * 3600.0) as i64);
        let mut t = a;
        while t <= b {
            pts.push(GpsPoint::new(t, p.lon, p.lat));
            t += 120;
        }
    }
    Trajectory::new(person, pts).unwrap()
}

fn week_visits(home: LonLat, work: LonLat, weekend: bool) -> Vec<(LonLat, i64, f64, f64)> {
    let mut v = vec![(home, 0, 0.0, 8.0)];
    for d in 0..7 {
        if d < 5 {
            v.push((work, d, 9.0, 17.0));
            v.push((home, d, 18.0, 31.5));
        } else if weekend {
            v.push((offset_m(home, 0.0, 900.0), d, 8.5, 10.0));
            v.push((home, d, 11.0, 31.5));
        }
    }
    v
}

fn annotate_traces(trajs: &[Trajectory], pois: Vec<ClassifiedPoi>) -> Result<Vec<AnnotatedStayPoint>, String> {
    let profile = TemporalProfile::synthetic_default();
    let stays = extract_all(trajs, StayPointParams::default(), Execution::Sequential).map_err(|e| e.to_string())?;
    let pois = ClassifiedPois::new(pois);
    let annotator = Annotator::new(&pois, &profile, InferParams::default()).map_err(|e| e.to_string())?;
    Ok(annotator.annotate(&stays, Execution::Sequential))
}

fn mandatory_labels(out: &[AnnotatedStayPoint]) -> BTreeMap<String, u8> {
    out.iter()
        .filter(|a| a.provenance == Provenance::MandatoryRule)
        .map(|a| (format!("{:.5},{:.5}", a.stay.lon, a.stay.lat), a.activity.get()))
        .collect()
}

fn mandatory_rules() -> Result<String, String> {
    let home = LonLat::new(-118.30, 34.05);
    let work = offset_m(home, 4000.0, 3000.0);
    let full = annotate_traces(&[trace("p", &week_visits(home, work, true))], vec![])?;
    let labels = mandatory_labels(&full);
    let kinds: std::collections::BTreeSet<u8> = labels.values().copied().collect();
    ensure(kinds == [1, 2].into(), || format!("labels {labels:?}"))?;
    for a in &full {
        let want = if haversine_m(a.stay.position(), home) < 1.0 {
            Some(1)
        } else if haversine_m(a.stay.position(), work) < 1.0 {
            Some(2)
        } else {
            None
        };
        match want {
            Some(c) => ensure(a.activity.get() == c && a.provenance == Provenance::MandatoryRule, || format!("stay {:?}", a.stay))?,
            None => ensure(a.provenance != Provenance::MandatoryRule, || "weekend outing labelled mandatory".into())?,
        }
    }
    let weekday_only = annotate_traces(&[trace("p", &week_visits(home, work, false))], vec![])?;
    ensure(mandatory_labels(&weekday_only) == labels, || "labels changed without weekend data".into())?;

    let campus = offset_m(home, 2500.0, 0.0);
    let mut student = vec![(home, 0, 0.0, 7.5)];
    for d in 0..5 {
        student.push((campus, d, 8.0, 15.0));
        student.push((home, d, 16.0, 31.5));
    }
    let school_top3 = Top3::from_pairs(vec![RankedActivity::new(ActivityCode::SCHOOL, 0.9)]).unwrap().0;
    let out = annotate_traces(
        &[trace("s", &student)],
        vec![ClassifiedPoi { id: "school-1".into(), position: offset_m(campus, 30.0, 20.0), top3: school_top3 }],
    )?;
    let at_campus: Vec<&AnnotatedStayPoint> = out.iter().filter(|a| haversine_m(a.stay.position(), campus) < 1.0).collect();
    ensure(at_campus.len() == 5, || format!("{} campus stays", at_campus.len()))?;
    ensure(
        at_campus.iter().all(|a| a.activity == ActivityCode::SCHOOL && a.matched_poi.as_deref() == Some("school-1")),
        || "campus stays not labelled School".into(),
    )?;
    ensure(out.iter().all(|a| a.activity != ActivityCode::WORK), || "student has a Work place".into())?;
    Ok(format!("7-day trace {} stays -> {{Home, Work}}; weekend removal unchanged; 5 campus stays -> School", full.len()))
}

// ---------------------------------------------------------------- prompt and parse

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn poi(id: &str, name: Option<&str>, tags: &[(&str, &str)]) -> PoiRecord {
    let features = tags.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    PoiRecord::new(id, name.map(String::from), 31.23, 30.04, features).unwrap()
}

fn prompt_round_trip() -> Result<String, String> {
    let cases = [
        ("restaurant.txt", PromptSpec::default(), poi("n1", Some("Koshary Abou Tarek"), &[("amenity", "restaurant")])),
        (
            "hints.txt",
            PromptSpec::default().with_hints(["Names are transliterated from Arabic.", "Mosques are common."]),
            poi("n2", None, &[("amenity", "place_of_worship"), ("building", "mosque")]),
        ),
        ("sparse.txt", PromptSpec::default(), poi("n3", Some("Zamalek Club"), &[])),
    ];
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for (file, spec, poi) in &cases {
        let prompt = build_prompt(spec, poi);
        let path = golden_dir().join(file);
        if update {
            fs::write(&path, &prompt).map_err(|e| e.to_string())?;
        }
        let golden = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure(prompt == golden, || format!("{file} differs from golden"))?;
        let pos: Vec<Option<usize>> = [TASK_HEADER, CATEGORY_HEADER, OBSERVATION_HEADER].iter().map(|h| prompt.find(h)).collect();
        ensure(pos.iter().all(Option::is_some) && pos.windows(2).all(|w| w[0] < w[1]), || format!("{file}: sections out of order"))?;
        if let Some(h) = prompt.find(HINT_HEADER) {
            ensure(pos[1].unwrap() < h && h < pos[2].unwrap(), || format!("{file}: hints misplaced"))?;
        }
    }

    // fuzz: random bytes, printable noise and mangled near-replies
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut typed_errors = 0;
    let alphabet = b"0123456789:.,=%()[]{}\" \n\t-eE+abc";
    for i in 0..10_000 {
        let len = rng.gen_range(0..200);
        let bytes: Vec<u8> = match i % 3 {
            0 => (0..len).map(|_| rng.gen()).collect(),
            1 => (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect(),
            _ => {
                let mut s = format!("{}: 0.{}\n{}: 0.{}", rng.gen_range(0..20), rng.gen_range(0..99), rng.gen_range(0..20), rng.gen_range(0..99))
                    .into_bytes();
                for _ in 0..rng.gen_range(0..4) {
                    let at = rng.gen_range(0..s.len());
                    s[at] = alphabet[rng.gen_range(0..alphabet.len())];
                }
                s
            }
        };
        let text = String::from_utf8_lossy(&bytes).into_owned();
        match panic::catch_unwind(|| parse_response(&text)) {
            Ok(Ok(reply)) => {
                let sum = reply.top3.sum();
                ensure(reply.top3.as_slice().len() <= 3 && sum <= 1.0 + 1e-6, || format!("accepted invalid reply {text:?}"))?;
            }
            Ok(Err(_)) => typed_errors += 1,
            Err(_) => return Err(format!("parse_response panicked on {text:?}")),
        }
    }

    let (calls, det) = mock_batch()?;
    Ok(format!("3 golden prompts; 10000 fuzz inputs, {typed_errors} typed errors, no panics; {det}; resumed run needed {calls} backend calls"))
}

struct KillAfter<'a> {
    inner: MockBackend,
    calls: &'a AtomicUsize,
    limit: usize,
    cancel: &'a AtomicBool,
}

impl Backend for KillAfter<'_> {
    fn submit(&self, prompt: &str) -> Result<String, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) + 1 >= self.limit {
            self.cancel.store(true, Ordering::SeqCst);
        }
        self.inner.submit(prompt)
    }
}

fn mock_pois(n: usize) -> PoiDataset {
    let kinds = [
        ("amenity", "restaurant"),
        ("shop", "supermarket"),
        ("amenity", "school"),
        ("amenity", "clinic"),
        ("leisure", "fitness_centre"),
        ("amenity", "place_of_worship"),
        ("building", "yes"),
        ("amenity", "bank"),
    ];
    let records = (0..n)
        .map(|i| {
            let (k, v) = kinds[i % kinds.len()];
            PoiRecord::new(format!("m{i}"), Some(format!("Place {i}")), 31.0 + i as f64 * 1e-4, 30.0, [(k.to_string(), v.to_string())].into())
                .unwrap()
        })
        .collect();
    PoiDataset::new("mock", vec![], records).unwrap()
}

fn render(items: &[PoiClassification]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_classifications(items, &mut buf).unwrap();
    buf
}

fn mock_batch() -> Result<(usize, String), String> {
    let ds = mock_pois(1000);
    let options = ClassifyOptions { concurrency: 8, initial_backoff_ms: 0, ..ClassifyOptions::default() };
    let run = || {
        let c = Classifier::new(PromptSpec::default(), MockBackend::new(default_mock_rules()), ClassificationCache::in_memory(), options.clone());
        c.classify_batch(&ds, None).map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    ensure(a.classifications.len() == 1000 && render(&a.classifications) == render(&b.classifications), || "mock batch not deterministic".into())?;

    // run until about 40% is done, then stop as a kill would, tearing the last cache line
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache_path = dir.path().join("cache.jsonl");
    let calls = AtomicUsize::new(0);
    let cancel = AtomicBool::new(false);
    {
        let backend = KillAfter { inner: MockBackend::new(default_mock_rules()), calls: &calls, limit: 400, cancel: &cancel };
        let cache = ClassificationCache::open(&cache_path).map_err(|e| e.to_string())?;
        let partial = Classifier::new(PromptSpec::default(), backend, cache, options.clone())
            .classify_batch(&ds, Some(&cancel))
            .map_err(|e| e.to_string())?;
        ensure(partial.interrupted(), || "batch was not interrupted".into())?;
    }
    let mut text = fs::read(&cache_path).map_err(|e| e.to_string())?;
    text.extend_from_slice(b"{\"prompt_hash\":\"dead");
    fs::write(&cache_path, &text).map_err(|e| e.to_string())?;

    let cache = ClassificationCache::open(&cache_path).map_err(|e| e.to_string())?;
    let cached = cache.len();
    let resumed_calls = AtomicUsize::new(0);
    let backend = KillAfter { inner: MockBackend::new(default_mock_rules()), calls: &resumed_calls, limit: usize::MAX, cancel: &AtomicBool::new(false) };
    let resumed = Classifier::new(PromptSpec::default(), backend, cache, options)
        .classify_batch(&ds, None)
        .map_err(|e| e.to_string())?;
    ensure(render(&resumed.classifications) == render(&a.classifications), || "resumed output differs".into())?;
    let unique_prompts = ds.records().iter().map(|p| build_prompt(&PromptSpec::default(), p)).collect::<std::collections::HashSet<_>>().len();
    let n = resumed_calls.load(Ordering::SeqCst);
    ensure(n + cached == unique_prompts && cached >= 400, || format!("{n} calls after {cached} cached of {unique_prompts}"))?;
    Ok((n, format!("1000-POI mock batch identical twice, {cached} cached at kill")))
}

// ---------------------------------------------------------------- stay points

fn staypoint_fixtures() -> Result<String, String> {
    let d = haversine_m(LonLat::new(0.0, 0.0), LonLat::new(0.0, 1.0));
    ensure((d - 111_195.0).abs() <= 1.0, || format!("haversine {d}"))?;

    // 20 min at A, a 5 km / 10 min drive, 30 min at B, with 10 m jitter
    let a = LonLat::new(-118.25, 34.05);
    let b = offset_m(a, 5000.0, 0.0);
    let mut pts = Vec::new();
    let jitter = |i: i64| ((i % 3) as f64 - 1.0) * 10.0;
    for i in 0..=20 {
        let p = offset_m(a, jitter(i), jitter(i + 1));
        pts.push(GpsPoint::new(i * 60, p.lon, p.lat));
    }
    for i in 1..10 {
        let p = offset_m(a, 500.0 * i as f64, 0.0);
        pts.push(GpsPoint::new(1200 + i * 60, p.lon, p.lat));
    }
    for i in 0..=30 {
        let p = offset_m(b, jitter(i), jitter(i + 2));
        pts.push(GpsPoint::new(1800 + i * 60, p.lon, p.lat));
    }
    let stays = extract_staypoints(&Trajectory::new("x", pts).unwrap(), StayPointParams::default()).map_err(|e| e.to_string())?;
    let want = [(0, 1200, a), (1800, 3600, b)];
    ensure(stays.len() == 2, || format!("{} stays", stays.len()))?;
    for (s, (t0, t1, at)) in stays.iter().zip(want) {
        ensure(s.t_start == t0 && s.t_end == t1, || format!("times {s:?}"))?;
        ensure(haversine_m(s.position(), at) < 5.0, || format!("centroid off by {}", haversine_m(s.position(), at)))?;
    }
    Ok(format!("two-cluster trace -> 2 stays [0,1200] and [1800,3600]; haversine 1 deg = {d:.1} m"))
}

// ---------------------------------------------------------------- performance

fn performance() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let origin = LonLat::new(-118.25, 34.05);
    // 100k POIs over roughly 30 x 30 km
    let pois: Vec<ClassifiedPoi> = (0..100_000)
        .map(|i| ClassifiedPoi {
            id: format!("p{i}"),
            position: offset_m(origin, rng.gen_range(-15_000.0..15_000.0), rng.gen_range(-15_000.0..15_000.0)),
            top3: random_top3(&mut rng, false),
        })
        .collect();
    let t_index = Instant::now();
    let pois = ClassifiedPois::new(pois);
    let index_time = t_index.elapsed();

    let stays: Vec<PersonStay> = (0..10_000)
        .map(|i| {
            let p = offset_m(origin, rng.gen_range(-15_000.0..15_000.0), rng.gen_range(-15_000.0..15_000.0));
            let t = MONDAY + (i % 10) as i64 * 86_400 + rng.gen_range(8..20) * 3600;
            PersonStay { person_id: format!("u{}", i / 10), stay: StayPoint { t_start: t, t_end: t + 1800, lon: p.lon, lat: p.lat } }
        })
        .collect();
    let profile = TemporalProfile::synthetic_default();
    let annotator = Annotator::new(&pois, &profile, InferParams::default()).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let out = annotator.annotate(&stays, Execution::Sequential);
    let took = within(Duration::from_secs(5), started, "sequential annotation")?;
    ensure(out.len() == 10_000, || "annotation count".into())?;
    let parallel = annotator.annotate(&stays, Execution::Parallel);
    ensure(parallel == out, || "parallel annotation differs".into())?;

    let positions = pois.positions();
    let index = SpatialIndex::new(positions.clone());
    for probe in 0..500 {
        let c = offset_m(origin, rng.gen_range(-16_000.0..16_000.0), rng.gen_range(-16_000.0..16_000.0));
        let radius = rng.gen_range(10.0..400.0);
        let k = rng.gen_range(1..=20);
        let got = index.query(c, radius, k);
        let want = SpatialIndex::linear_scan(&positions, c, radius, k);
        ensure(got == want, || format!("probe {probe}: index and scan differ"))?;
    }
    let bayesian = out.iter().filter(|a| a.provenance == Provenance::Bayesian).count();
    Ok(format!("10000 stays x 100000 POIs in {took:.2?} single-threaded (index build {index_time:.2?}, {bayesian} with candidates); 500 probes match linear scan"))
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let checks: [(&str, Check); 7] = [
        ("score_oracle", score_oracle),
        ("metric_identity", metric_identity),
        ("synthetic_benchmark", synthetic_benchmark),
        ("mandatory_rules", mandatory_rules),
        ("prompt_parse_round_trip", prompt_round_trip),
        ("staypoint_fixtures", staypoint_fixtures),
        ("performance", performance),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in checks {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        ran += 1;
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
