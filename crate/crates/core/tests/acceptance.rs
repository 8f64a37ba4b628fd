//! Acceptance criteria 1 to 9. Runs without the libtest harness so every
//! `criterion N: PASS|FAIL` line shows up in plain `cargo test` output.
//! Exits non-zero if any criterion fails.
//!
//! Criteria 6, 7 and 8 share one set of training runs (five variants,
//! three seeds, 15 epochs on 2 000 scenes), computed once per process.

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jam_core::geometry::{Point, RigidTransform};
use jam_core::harness::{
    checkpoint_meta, compare_frameworks, evaluate, load_checkpoint, train_on, write_metrics_csv, ResultsTable,
    RunConfig,
};
use jam_core::metrics::{
    average_precision, is_hit, min_ade_joint, min_fde_joint, miss_rate_joint, Gate, RankedMode,
};
use jam_core::model::{pair_targets, GaussianTrajectory, JamModel, JointMode, JointPrediction, ModeSet, Variant};
use jam_core::objective::{
    ade, nll_gmm, select_best_mode, set_loss, total_loss, GaussianSeq, Targets,
};
use jam_core::scene::{
    decode_dataset, encode_dataset, generate_dataset, generate_scene, uniform_mix, Dataset, DatasetSpec, ScenarioKind,
    SceneDims, SynthOptions,
};
use jam_core::taxonomy::{classify_trajectory, Scheme};
use jam_core::tensor::gradcheck::GradCheckOptions;
use jam_core::tensor::checkpoint::{decode as decode_checkpoint, encode as encode_checkpoint};
use jam_core::tensor::{check_gradients, ParamStore, Tape, Tensor};

const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const NLL_TOL: f64 = 1e-9;
const EQUIVARIANCE_TOL: f64 = 1e-6;
const TRAIN_REDUCTION: f64 = 0.5;
const TRAIN_BUDGET: Duration = Duration::from_secs(30 * 60);
const MIN_UTURN_RATE: f64 = 0.10;
const SEEDS: [u64; 3] = [0, 1, 2];
const TRAIN_SCENES: usize = 2000;
const VALID_SCENES: usize = 500;
const UTURN_RATE: f64 = 0.2;

static REPORTED: AtomicBool = AtomicBool::new(false);

fn report(n: usize, ok: bool, detail: &str) {
    REPORTED.store(true, Ordering::SeqCst);
    println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn dataset(n: usize, seed: u64) -> Dataset {
    generate_dataset(&DatasetSpec {
        n_scenes: n,
        dims: SceneDims::micro(),
        mix: uniform_mix(),
        uturn_rate: UTURN_RATE,
        seed,
    })
    .expect("dataset")
}

fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut cfg = RunConfig::desk(Variant::Jam);
        cfg.model.seed = seed;
        let mut m = JamModel::new(cfg.model_config().unwrap()).unwrap();
        let kind = ScenarioKind::ALL[seed as usize % ScenarioKind::ALL.len()];
        let scene = generate_scene(kind, seed, &SynthOptions::new(SceneDims::micro())).unwrap();
        let inp = m.inputs(&scene).unwrap();
        let targets = Targets::new(&scene, Scheme::Behavior8, None).unwrap();
        let net = m.net.clone();
        let r = check_gradients(
            &mut m.params,
            |t| {
                let out = net.forward(t, &inp);
                total_loss(t, &out, &targets, 1).total
            },
            seed,
            &GradCheckOptions::default(),
        );
        worst = worst.max(r.max_rel_error);
    }
    let elapsed = start.elapsed();
    let ok = worst < GRAD_TOL && elapsed < GRAD_BUDGET;
    report(1, ok, &format!("max relative error {worst:.3e} over 5 seeds in {:.1} s", elapsed.as_secs_f64()));
    assert!(ok);
}

/// The mixture objective written out term by term, independent of the library.
fn straight_line_nll(means: &[Vec<Point>], sigmas: &[Vec<[f64; 2]>], gt: &[Vec<Point>], p: f64) -> f64 {
    let mut total = 0.0;
    for a in 0..means.len() {
        for t in 0..gt[a].len() {
            let dx = gt[a][t][0] - means[a][t][0];
            let dy = gt[a][t][1] - means[a][t][1];
            let (sx, sy) = (sigmas[a][t][0], sigmas[a][t][1]);
            total += sx.ln() + sy.ln() + 0.5 * ((dx / sx) * (dx / sx) + (dy / sy) * (dy / sy));
        }
    }
    total - p.ln()
}

fn criterion_2_eq1_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let agents = rng.gen_range(1..=2);
        let steps = rng.gen_range(1..=16);
        let mut pts = |lo: f64, hi: f64| -> Vec<Vec<Point>> {
            (0..agents)
                .map(|_| (0..steps).map(|_| [rng.gen_range(lo..hi), rng.gen_range(lo..hi)]).collect())
                .collect()
        };
        let means = pts(-20.0, 20.0);
        let gt = pts(-20.0, 20.0);
        let sigmas: Vec<Vec<[f64; 2]>> = pts(0.05, 8.0).into_iter().map(|a| a.into_iter().collect()).collect();
        let p = rng.gen_range(1e-3..1.0);
        let seqs: Vec<GaussianSeq> = (0..agents)
            .map(|a| GaussianSeq {
                means: &means[a],
                sigmas: &sigmas[a],
            })
            .collect();
        let got = nll_gmm(&seqs, &gt, p).unwrap();
        worst = worst.max((got - straight_line_nll(&means, &sigmas, &gt, p)).abs());
    }

    // indicator structure on the tape: marginal and joint sets
    let mut gated = true;
    for case in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let (cats, per_cat, steps) = (4, 2, 5);
        let modes = cats * per_cat;
        let joint = case % 2 == 1;
        let mut store = ParamStore::new();
        let mut rand_param = |name: &str, rows: usize, cols: usize, lo: f64, hi: f64| {
            let v = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
            store.add(name, Tensor::matrix(rows, cols, v))
        };
        let mu = [rand_param("mu0", modes, 2 * steps, -4.0, 4.0), rand_param("mu1", modes, 2 * steps, -4.0, 4.0)];
        let raw = [rand_param("s0", modes, 2 * steps, -1.0, 1.0), rand_param("s1", modes, 2 * steps, -1.0, 1.0)];
        let lg = [rand_param("l0", 1, modes, -1.0, 1.0), rand_param("l1", 1, modes, -1.0, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(100 + case);
        let gt: [Vec<Point>; 2] =
            [0, 1].map(|_| (0..steps).map(|_| [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]).collect());
        let targets = Targets {
            gt: gt.clone(),
            category: [rng.gen_range(0..cats), rng.gen_range(0..cats)],
        };
        let mut t = Tape::new(&store);
        let mu_v = mu.map(|p| t.param(p));
        let raw_v = raw.map(|p| t.param(p));
        let sigma = raw_v.map(|r| t.clamp_exp(r, 1e-3, 1e3));
        let logits = lg.map(|p| t.param(p));
        let set = ModeSet {
            mu: mu_v,
            sigma,
            logits: if joint { [logits[0], logits[0]] } else { logits },
            content: mu_v,
            joint,
        };
        let (nll, ce) = set_loss(&mut t, &set, &targets, per_cat);
        let loss = t.add(nll, ce);
        let grads = t.backward(loss).unwrap();

        // expected selections and NLL from a direct scan
        let rows = |id| -> Vec<Vec<Point>> {
            store.get(id).data().chunks(2 * steps).map(|r| r.chunks(2).map(|c| [c[0], c[1]]).collect()).collect()
        };
        let means = [rows(mu[0]), rows(mu[1])];
        let sig = [0, 1].map(|s| -> Vec<Vec<[f64; 2]>> {
            t.value(sigma[s]).data().chunks(2 * steps).map(|r| r.chunks(2).map(|c| [c[0], c[1]]).collect()).collect()
        });
        let chosen: [usize; 2] = if joint {
            let score = |m: usize| ade(&means[0][m], &gt[0]) + ade(&means[1][m], &gt[1]);
            let best = (0..modes).fold(0, |b, m| if score(m) < score(b) { m } else { b });
            [best, best]
        } else {
            [0, 1].map(|s| {
                let y = targets.category[s];
                let score = |m: usize| ade(&means[s][m], &gt[s]);
                (y * per_cat..(y + 1) * per_cat).fold(y * per_cat, |b, m| if score(m) < score(b) { m } else { b })
            })
        };
        let expected_nll: f64 = (0..2)
            .map(|s| {
                straight_line_nll(
                    &[means[s][chosen[s]].clone()],
                    &[sig[s][chosen[s]].clone()],
                    &[gt[s].clone()],
                    1.0,
                )
            })
            .sum();
        worst = worst.max((t.value(nll).item() - expected_nll).abs());
        for s in 0..2 {
            let g = grads.dense(mu[s], &store);
            for (m, row) in g.chunks(2 * steps).enumerate() {
                if m == chosen[s] {
                    gated &= row.iter().any(|v| *v != 0.0);
                } else {
                    gated &= row.iter().all(|v| *v == 0.0);
                }
            }
            if !joint || s == 0 {
                gated &= grads.dense(lg[s], &store).iter().all(|v| *v != 0.0);
            }
        }
    }
    let ok = worst < NLL_TOL && gated;
    report(
        2,
        ok,
        &format!("max |nll - oracle| {worst:.2e} on 100 cases; indicator gating holds on 10 cases: {gated}"),
    );
    assert!(ok);
}

fn random_joint(rng: &mut ChaCha8Rng, modes: usize, steps: usize) -> JointPrediction {
    let traj = |rng: &mut ChaCha8Rng| GaussianTrajectory {
        means: (0..steps).map(|_| [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]).collect(),
        sigmas: vec![[1.0, 1.0]; steps],
        score: 0.0,
    };
    JointPrediction {
        modes: (0..modes)
            .map(|_| JointMode {
                agents: [traj(rng), traj(rng)],
                score: rng.gen(),
            })
            .collect(),
    }
}

fn brute_dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// (minADE, minFDE, hit) by exhaustive scan with the metric's arithmetic.
fn brute_metrics(p: &JointPrediction, gt: &[Vec<Point>; 2], step: usize, gates: &[Gate]) -> (f64, f64, bool) {
    let mut best_ade = f64::INFINITY;
    let mut best_fde = f64::INFINITY;
    let mut hit = false;
    for m in &p.modes {
        let mut sum = 0.0;
        for a in 0..2 {
            for t in 0..=step {
                sum += brute_dist(m.agents[a].means[t], gt[a][t]);
            }
        }
        let ade = sum / (2 * (step + 1)) as f64;
        let fde = 0.5 * (brute_dist(m.agents[0].means[step], gt[0][step]) + brute_dist(m.agents[1].means[step], gt[1][step]));
        if ade < best_ade {
            best_ade = ade;
        }
        if fde < best_fde {
            best_fde = fde;
        }
        let mut all = true;
        for g in gates {
            for a in 0..2 {
                if brute_dist(m.agents[a].means[g.step], gt[a][g.step]) > g.threshold {
                    all = false;
                }
            }
        }
        hit |= all;
    }
    (best_ade, best_fde, hit)
}

/// Frozen values from an exact-rational enumeration of the PR curves.
const MAP_FIXTURES: [(&str, f64, f64); 5] = [
    ("five_two", 0.5656565656565656, 0.5757575757575758),
    ("two_cats", 0.5515151515151515, 0.5833333333333334),
    ("dup_hits", 0.7454545454545455, 0.7844155844155845),
    ("ties", 0.3484848484848485, 0.3484848484848485),
    ("sparse", 0.3434343434343434, 0.3434343434343434),
];

fn map_fixture(name: &str) -> Vec<(usize, Vec<(f64, bool)>)> {
    let (t, f) = (true, false);
    match name {
        "five_two" => vec![
            (0, vec![(0.9, t), (0.1, f)]),
            (0, vec![(0.8, f), (0.2, t)]),
            (0, vec![(0.7, t), (0.3, t)]),
            (0, vec![(0.6, f), (0.4, f)]),
            (0, vec![(0.55, f), (0.45, t)]),
        ],
        "two_cats" => vec![
            (1, vec![(0.6, t), (0.4, f)]),
            (3, vec![(0.9, f), (0.1, f)]),
            (1, vec![(0.5, f), (0.5, t)]),
            (3, vec![(0.7, t), (0.3, t)]),
            (3, vec![(0.2, t), (0.8, f)]),
        ],
        "dup_hits" => vec![
            (2, vec![(0.5, t), (0.5, t)]),
            (2, vec![(0.9, t), (0.1, t)]),
            (2, vec![(0.3, t), (0.7, t)]),
            (2, vec![(0.6, t), (0.4, f)]),
            (2, vec![(0.95, f), (0.05, t)]),
        ],
        "ties" => vec![
            (0, vec![(0.5, f), (0.5, t)]),
            (0, vec![(0.5, t), (0.5, f)]),
            (0, vec![(0.5, f), (0.5, f)]),
            (5, vec![(0.5, t), (0.5, t)]),
            (5, vec![(0.25, f), (0.75, f)]),
        ],
        "sparse" => vec![
            (0, vec![(0.99, f), (0.01, f)]),
            (4, vec![(0.3, f), (0.7, t)]),
            (7, vec![(0.4, f), (0.6, f)]),
            (4, vec![(0.45, t), (0.55, f)]),
            (0, vec![(0.15, t), (0.85, f)]),
        ],
        _ => unreachable!(),
    }
}

/// mAP through the public API: one joint mode per (score, hit), placed at
/// the ground truth or 100 m away.
fn fixture_map(scenes: &[(usize, Vec<(f64, bool)>)]) -> (f64, f64) {
    let gt: [Vec<Point>; 2] = [vec![[0.0, 0.0]], vec![[5.0, 0.0]]];
    let gates = [Gate { step: 0, threshold: 1.0 }];
    let preds: Vec<JointPrediction> = scenes
        .iter()
        .map(|(_, modes)| JointPrediction {
            modes: modes
                .iter()
                .map(|&(score, hit)| {
                    let off = if hit { 0.0 } else { 100.0 };
                    let tr = |p: Point| GaussianTrajectory {
                        means: vec![[p[0] + off, p[1]]],
                        sigmas: vec![[1.0, 1.0]],
                        score,
                    };
                    JointMode {
                        agents: [tr(gt[0][0]), tr(gt[1][0])],
                        score,
                    }
                })
                .collect(),
        })
        .collect();
    let gts = vec![gt; scenes.len()];
    let cats: Vec<usize> = scenes.iter().map(|s| s.0).collect();
    jam_core::metrics::map_score(&preds, &gts, &cats, &gates).unwrap()
}

fn criterion_3_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let modes = rng.gen_range(1..=6);
        let steps = rng.gen_range(1..=6);
        let p = random_joint(&mut rng, modes, steps);
        let gt: [Vec<Point>; 2] =
            [0, 1].map(|_| (0..steps).map(|_| [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]).collect());
        let step = rng.gen_range(0..steps);
        let gates: Vec<Gate> = (0..rng.gen_range(1..=3))
            .map(|_| Gate {
                step: rng.gen_range(0..steps),
                threshold: rng.gen_range(0.5..6.0),
            })
            .collect();
        let (ba, bf, bh) = brute_metrics(&p, &gt, step, &gates);
        let mr = miss_rate_joint(&[p.clone()], &[gt.clone()], &gates).unwrap();
        let any_hit = p.modes.iter().any(|m| is_hit(m, &gt, &gates));
        if min_ade_joint(&p, &gt, step).unwrap() != ba
            || min_fde_joint(&p, &gt, step).unwrap() != bf
            || mr != if bh { 0.0 } else { 1.0 }
            || any_hit != bh
        {
            mismatches += 1;
        }
        // best-mode selection: summed per-agent ADE over the full horizon
        let as_modes: Vec<Vec<Vec<Point>>> = p
            .modes
            .iter()
            .map(|m| vec![m.agents[0].means.clone(), m.agents[1].means.clone()])
            .collect();
        let mut best = 0;
        let mut best_v = f64::INFINITY;
        for (k, m) in as_modes.iter().enumerate() {
            let v = ade(&m[0], &gt[0]) + ade(&m[1], &gt[1]);
            if v < best_v {
                best_v = v;
                best = k;
            }
        }
        if select_best_mode(&as_modes, &gt).unwrap() != best {
            mismatches += 1;
        }
    }

    let mut map_err: f64 = 0.0;
    for (name, hard, soft) in MAP_FIXTURES {
        let (h, s) = fixture_map(&map_fixture(name));
        map_err = map_err.max((h - hard).abs()).max((s - soft).abs());
    }
    // and once directly on a ranked list
    let ranked = [
        RankedMode { score: 0.9, scene: 0, mode: 0, hit: true },
        RankedMode { score: 0.8, scene: 0, mode: 1, hit: true },
        RankedMode { score: 0.7, scene: 1, mode: 0, hit: true },
    ];
    map_err = map_err.max((average_precision(&ranked, 2, false) - (6.0 + 5.0 * 2.0 / 3.0) / 11.0).abs());

    let ok = mismatches == 0 && map_err < 1e-12;
    report(
        3,
        ok,
        &format!("{mismatches} mismatches in 10000 brute-force instances; max mAP fixture error {map_err:.1e} on 5 fixtures"),
    );
    assert!(ok);
}

fn criterion_4_equivariance() {
    let cfg = RunConfig::desk(Variant::Jam);
    let model = JamModel::new(cfg.model_config().unwrap()).unwrap();
    let opts = SynthOptions::new(SceneDims::micro());
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let kind = ScenarioKind::ALL[i as usize % ScenarioKind::ALL.len()];
        let scene = generate_scene(kind, 1000 + i, &opts).unwrap();
        let g = RigidTransform::new(
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            [rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0)],
        );
        let a = model.predict(&scene).unwrap();
        let b = model.predict(&scene.transformed(&g)).unwrap();
        let mut cmp = |x: &GaussianTrajectory, y: &GaussianTrajectory| {
            for (p, q) in x.means.iter().zip(&y.means) {
                let gp = g.apply_point(*p);
                worst = worst.max((gp[0] - q[0]).abs()).max((gp[1] - q[1]).abs());
            }
            for (p, q) in x.sigmas.iter().zip(&y.sigmas) {
                worst = worst.max((p[0] - q[0]).abs()).max((p[1] - q[1]).abs());
            }
            worst = worst.max((x.score - y.score).abs());
        };
        for s in 0..2 {
            for (p, q) in a.proposals[s].iter().zip(&b.proposals[s]) {
                cmp(&p.trajectory, &q.trajectory);
            }
        }
        let (ra, rb) = (a.refined.unwrap(), b.refined.unwrap());
        for (p, q) in ra.modes.iter().zip(&rb.modes) {
            cmp(&p.agents[0], &q.agents[0]);
            cmp(&p.agents[1], &q.agents[1]);
        }
    }
    let ok = worst < EQUIVARIANCE_TOL;
    report(4, ok, &format!("max deviation {worst:.2e} m over 50 rigid transforms, both stages"));
    assert!(ok);
}

fn criterion_5_structural_coverage() {
    let valid = dataset(VALID_SCENES, 2);
    let mut covered = 0;
    let mut total = 0;
    for variant in [Variant::Jam, Variant::MarginalAware] {
        let cfg = RunConfig::desk(variant);
        let mc = cfg.model_config().unwrap();
        let model = JamModel::new(mc.clone()).unwrap();
        let want: HashSet<(usize, usize)> = (0..mc.y_m).flat_map(|y| (0..mc.k_m).map(move |k| (y, k))).collect();
        for scene in &valid.scenes {
            let p = model.predict(scene).unwrap();
            for s in 0..2 {
                total += 1;
                let tags: Vec<(usize, usize)> = p.proposals[s].iter().map(|q| (q.tag.category, q.tag.mode)).collect();
                let set: HashSet<(usize, usize)> = tags.iter().copied().collect();
                if tags.len() == mc.y_m * mc.k_m && set == want && p.proposals[s].iter().all(|q| q.tag.agent == s) {
                    covered += 1;
                }
            }
        }
    }
    let ok = covered == total;
    report(5, ok, &format!("{covered}/{total} agent proposal sets cover every (category, mode) tag"));
    assert!(ok);
}

struct Runs {
    table: ResultsTable,
    init_min_ade: Vec<f64>,
    jam_time: Duration,
    uturn_share: f64,
}

fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let train = dataset(TRAIN_SCENES, 1);
        let valid = dataset(VALID_SCENES, 2);
        let uturns = train
            .scenes
            .iter()
            .filter(|s| {
                pair_targets(s)
                    .iter()
                    .any(|g| classify_trajectory(g, None).map(|c| c.is_uturn()).unwrap_or(false))
            })
            .count();
        let base = RunConfig::desk(Variant::Jam);
        let init_min_ade = SEEDS
            .iter()
            .map(|&seed| {
                let mut c = base.clone();
                c.model.seed = seed;
                let m = JamModel::new(c.model_config().unwrap()).unwrap();
                evaluate(&m, "init", &valid, &c.eval).unwrap().overall().min_ade
            })
            .collect();
        let start = Instant::now();
        let mut table = compare_frameworks(&base, &[Variant::Jam], &SEEDS, &train, &valid, None, None).unwrap();
        let jam_time = start.elapsed();
        let rest = compare_frameworks(
            &base,
            &[
                Variant::JointOnestep,
                Variant::MarginalAware,
                Variant::JamNoKeypoints,
                Variant::JamNoClassification,
            ],
            &SEEDS,
            &train,
            &valid,
            None,
            None,
        )
        .unwrap();
        table.complete &= rest.complete;
        table.variants.extend(rest.variants);
        for v in &table.variants {
            println!(
                "  {:<22} minADE per seed {:?}  mean miss rate {:.4}",
                v.variant.name(),
                v.min_ade_per_seed(),
                v.mean_overall().miss_rate
            );
        }
        Runs {
            table,
            init_min_ade,
            jam_time,
            uturn_share: uturns as f64 / train.scenes.len() as f64,
        }
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_6_training_signal() {
    let r = runs();
    let jam = r.table.get(Variant::Jam).expect("jam trained");
    let trained = jam.min_ade_per_seed();
    let reduced = trained
        .iter()
        .zip(&r.init_min_ade)
        .all(|(t, i)| *t <= (1.0 - TRAIN_REDUCTION) * i);
    let ok = reduced && r.jam_time < TRAIN_BUDGET;
    let ratios: Vec<String> = trained.iter().zip(&r.init_min_ade).map(|(t, i)| format!("{:.3}", t / i)).collect();
    report(
        6,
        ok,
        &format!(
            "trained/initial minADE per seed [{}], 3 runs in {:.1} min",
            ratios.join(", "),
            r.jam_time.as_secs_f64() / 60.0
        ),
    );
    assert!(ok);
}

fn criterion_7_framework_trend() {
    let r = runs();
    let get = |v| r.table.get(v).expect("variant trained");
    let ade = |v| mean(&get(v).min_ade_per_seed());
    let mr = |v| get(v).mean_overall().miss_rate;
    let (jam, one, aware) = (ade(Variant::Jam), ade(Variant::JointOnestep), ade(Variant::MarginalAware));
    let (mr_jam, mr_one, mr_aware) = (mr(Variant::Jam), mr(Variant::JointOnestep), mr(Variant::MarginalAware));
    let ok = r.uturn_share >= MIN_UTURN_RATE && jam <= one && jam <= aware && mr_jam <= mr_aware && mr_one <= mr_aware;
    report(
        7,
        ok,
        &format!(
            "U-turn share {:.3}; mean minADE jam {jam:.4}, joint-onestep {one:.4}, marginal-aware {aware:.4}; \
             miss rate jam {mr_jam:.4}, joint-onestep {mr_one:.4}, marginal-aware {mr_aware:.4}",
            r.uturn_share
        ),
    );
    assert!(ok);
}

fn criterion_8_ablation() {
    let r = runs();
    let per_seed = |v| r.table.get(v).expect("variant trained").min_ade_per_seed();
    let jam = per_seed(Variant::Jam);
    let no_kp = per_seed(Variant::JamNoKeypoints);
    let no_cls = per_seed(Variant::JamNoClassification);
    let kp_ok = mean(&no_kp) >= mean(&jam);
    let worse = jam.iter().zip(&no_cls).filter(|(j, n)| n > j).count();
    let ok = kp_ok && worse >= 2;
    report(
        8,
        ok,
        &format!(
            "mean minADE jam {:.4} vs no-keypoints {:.4}; no-classification worse in {worse}/3 seeds",
            mean(&jam),
            mean(&no_kp)
        ),
    );
    assert!(ok);
}

fn criterion_9_determinism_and_persistence() {
    let train = dataset(64, 7);
    let valid = dataset(32, 8);
    let mut cfg = RunConfig::desk(Variant::Jam);
    cfg.train.epochs = 2;
    cfg.train.batch_size = 16;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut ckpts = Vec::new();
    let mut csvs = Vec::new();
    for d in &dirs {
        let out = train_on(&cfg, &train, None, Some(d.path())).unwrap();
        ckpts.push(std::fs::read(out.checkpoints.last().unwrap()).unwrap());
        let ev = evaluate(&out.model, "jam", &valid, &cfg.eval).unwrap();
        let path = d.path().join("metrics.csv");
        let rows: Vec<_> = ev.rows.iter().chain(&ev.summary).cloned().collect();
        write_metrics_csv(&path, &rows).unwrap();
        csvs.push(std::fs::read(&path).unwrap());
    }
    let same_runs = ckpts[0] == ckpts[1] && csvs[0] == csvs[1];

    let bytes = encode_dataset(&valid);
    let dataset_rt = encode_dataset(&decode_dataset(&bytes).unwrap()) == bytes;
    let ck = decode_checkpoint(&ckpts[0]).unwrap();
    let ckpt_rt = encode_checkpoint(&ck.params, &ck.metadata) == ckpts[0];

    // a reloaded checkpoint evaluates to identical metrics
    let path = dirs[0].path().join("epoch-002.ckpt");
    let (meta, reloaded) = load_checkpoint(&path).unwrap();
    let direct = train_on(&cfg, &train, None, None).unwrap().model;
    let metrics_rt = evaluate(&reloaded, "jam", &valid, &cfg.eval).unwrap()
        == evaluate(&direct, "jam", &valid, &cfg.eval).unwrap()
        && meta.epoch == 2
        && checkpoint_meta(&cfg, 2).contains("variant = \"jam\"");

    let ok = same_runs && dataset_rt && ckpt_rt && metrics_rt;
    report(
        9,
        ok,
        &format!(
            "identical reruns {same_runs}, dataset round trip {dataset_rt}, checkpoint round trip {ckpt_rt}, \
             reload metrics {metrics_rt}"
        ),
    );
    assert!(ok);
}

fn main() {
    let criteria: [(usize, fn()); 9] = [
        (1, criterion_1_gradient_correctness),
        (2, criterion_2_eq1_oracle),
        (3, criterion_3_metric_oracles),
        (4, criterion_4_equivariance),
        (5, criterion_5_structural_coverage),
        (6, criterion_6_training_signal),
        (7, criterion_7_framework_trend),
        (8, criterion_8_ablation),
        (9, criterion_9_determinism_and_persistence),
    ];
    if std::env::args().any(|a| a == "--list") {
        for (n, _) in criteria {
            println!("criterion_{n}: test");
        }
        return;
    }
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (n, f) in criteria {
        let name = format!("criterion_{n}");
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        // a criterion reports its own line before asserting
        REPORTED.store(false, Ordering::SeqCst);
        if let Err(e) = std::panic::catch_unwind(f) {
            if !REPORTED.load(Ordering::SeqCst) {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                report(n, false, &format!("panicked: {msg}"));
            }
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
