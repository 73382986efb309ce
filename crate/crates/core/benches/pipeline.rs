use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semtraj::classify::{RankedActivity, Top3};
use semtraj::eval::{generate_synthetic_world, SynthConfig};
use semtraj::geo::{offset_m, LonLat};
use semtraj::infer::{Annotator, ClassifiedPoi, ClassifiedPois, InferParams, TemporalProfile};
use semtraj::staypoint::{extract_all, PersonStay, StayPoint, StayPointParams};
use semtraj::{ActivityCode, Execution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn dense_city(n_pois: usize, n_stays: usize) -> (ClassifiedPois, Vec<PersonStay>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let origin = LonLat::new(-118.25, 34.05);
    let spot = |rng: &mut ChaCha8Rng| offset_m(origin, rng.gen_range(-5000.0..5000.0), rng.gen_range(-5000.0..5000.0));
    let pois = (0..n_pois)
        .map(|i| {
            let c = ActivityCode::new(rng.gen_range(4..=13)).unwrap();
            ClassifiedPoi {
                id: format!("p{i}"),
                position: spot(&mut rng),
                top3: Top3::from_pairs(vec![RankedActivity::new(c, 0.8), RankedActivity::new(ActivityCode::SOMETHING_ELSE, 0.1)])
                    .unwrap()
                    .0,
            }
        })
        .collect();
    let stays = (0..n_stays)
        .map(|i| {
            let p = spot(&mut rng);
            let t = 1_493_596_800 + (i % 7) as i64 * 86_400 + rng.gen_range(8..21) * 3600;
            PersonStay {
                person_id: format!("u{}", i / 20),
                stay: StayPoint { t_start: t, t_end: t + 1800, lon: p.lon, lat: p.lat },
            }
        })
        .collect();
    (ClassifiedPois::new(pois), stays)
}

fn annotate(c: &mut Criterion) {
    let (pois, stays) = dense_city(100_000, 20_000);
    let profile = TemporalProfile::synthetic_default();
    let annotator = Annotator::new(&pois, &profile, InferParams::default()).unwrap();
    let mut group = c.benchmark_group("annotate");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| b.iter(|| annotator.annotate(&stays, exec)));
    }
    group.finish();
}

fn staypoints(c: &mut Criterion) {
    let cfg = SynthConfig { agents: 50, ..SynthConfig::default() };
    let world = generate_synthetic_world(&cfg, &TemporalProfile::synthetic_default()).unwrap();
    let mut group = c.benchmark_group("staypoints");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| extract_all(&world.trajectories, StayPointParams::default(), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, annotate, staypoints);
criterion_main!(benches);
