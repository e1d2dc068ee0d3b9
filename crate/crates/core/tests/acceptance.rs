//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use advdrive::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
use advdrive::config::RunConfig;
use advdrive::metrics::{aggregate, compare, episode_metrics, Column, Metric, MetricsReport};
use advdrive::nn::layers::{conv_relu_backward, conv_relu_forward, dense_backward, dense_forward, ConvGeometry};
use advdrive::nn::{adam_update, AdamConfig, AdamState, Architecture, NetworkParams, ACTION_COUNT};
use advdrive::orchestrator::{
    derive_seed, run_episode, run_training_phase, ActionMode, AgentPolicy, AgentSummary, EpisodeLog, EpisodeSpec,
    Learner, Phase, PhaseHooks, PhasePlan, TrainSettings,
};
use advdrive::pipeline::{attack_label, frozen_checksums, retrained_label, verify_frozen, DemoOutcome, Pipeline};
use advdrive::ppo::{
    adapt_kl_coef, max_ratio_deviation, ppo_loss, ppo_loss_and_grad, update_policy, PpoHyper, RolloutBatch, Sample,
    Trajectory, ON_POLICY_TOLERANCE,
};
use advdrive::raster::{ObsMode, RasterConfig};
use advdrive::reward::{RewardKind, RewardParams};
use advdrive::scenario::{Role, ScenarioConfig, VICTIM_1};
use advdrive::world::StepFlags;
use advdrive::{CheckpointError, Error};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

const REWARD_TOL: f64 = 1e-9;
const GRAD_SUITE_LIMIT_S: f64 = 120.0;
const CORRIDOR_SEEDS: [u64; 3] = [1, 2, 3];
const CORRIDOR_EPISODES: usize = 150;
const CORRIDOR_LIMIT_S: f64 = 15.0 * 60.0;
const TREND_SEEDS: [u64; 3] = [1, 2, 3];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Ctx {
    demos: BTreeMap<String, (DemoOutcome, PathBuf)>,
}

impl Ctx {
    fn demo(&mut self, seed: u64, run: &str) -> Result<&(DemoOutcome, PathBuf), String> {
        let key = format!("seed{seed}-{run}");
        if !self.demos.contains_key(&key) {
            let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(&key);
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
            }
            let mut cfg = RunConfig::demo();
            cfg.seed = seed;
            cfg.output_dir = dir.clone();
            let t = Instant::now();
            let mut p = Pipeline::new(cfg, &dir, "demo").map_err(|e| e.to_string())?;
            let outcome = p.run_demo().map_err(|e| format!("demo seed {seed}: {e}"))?;
            println!("       (demo seed {seed} run {run}: {:.0} s)", t.elapsed().as_secs_f64());
            self.demos.insert(key.clone(), (outcome, dir));
        }
        Ok(&self.demos[&key])
    }
}

// ---------------------------------------------------------------- 1

struct RewardCase {
    kind: RewardKind,
    d_prev: f64,
    d_cur: f64,
    speed: f64,
    flags: [bool; 4],
    beta: f64,
    expected: f64,
}

fn case(kind: RewardKind, d: (f64, f64), speed: f64, flags: &str, beta: f64, expected: f64) -> RewardCase {
    RewardCase {
        kind,
        d_prev: d.0,
        d_cur: d.1,
        speed,
        flags: [flags.contains("CV"), flags.contains("CO"), flags.contains("IO,") || flags.ends_with("IO"), flags.contains("IOL")],
        beta,
        expected,
    }
}

/// Hand-evaluated rewards; flags are listed as "CV,CO,IO,IOL".
fn reward_cases() -> Vec<RewardCase> {
    use RewardKind::*;
    vec![
        case(Victim, (10.0, 9.5), 5.0, "CV", 0.0, -99.0),
        case(Victim, (10.0, 10.0), 0.0, "", 0.5, 0.5),
        case(Victim, (20.0, 19.8), 6.0, "IO,IOL", 0.0, -0.2),
        case(Victim, (50.0, 49.0), 10.0, "", 0.5, 2.5),
        case(Victim, (30.0, 30.0), 0.0, "CO", 0.5, -99.5),
        case(Victim, (30.0, 29.9), 2.0, "CV,CO", 0.5, -199.2),
        case(Victim, (15.0, 15.2), 0.0, "IOL", 0.5, -0.7),
        case(Victim, (8.0, 7.75), 5.0, "IO", 0.5, 0.75),
        case(Victim, (5.0, 0.0), 4.0, "", 1.0, 6.4),
        case(Victim, (12.0, 11.7), 3.0, "CV,CO,IO,IOL", 0.5, -200.4),
        case(AdvCollision, (10.0, 9.8), 4.0, "CV,IO", 0.5, 5.65),
        case(AdvCollision, (10.0, 10.0), 0.0, "", 0.5, 0.0),
        case(AdvCollision, (10.0, 10.0), 0.0, "CV,CO,IO,IOL", 0.5, 10.1),
        case(AdvCollision, (40.0, 39.0), 10.0, "", 0.5, 2.0),
        case(AdvCollision, (40.0, 40.0), 0.0, "CO", 0.5, 5.0),
        case(AdvCollision, (7.0, 7.3), 0.0, "IOL", 0.5, -0.25),
        case(AdvCollision, (25.0, 24.5), 5.0, "CV", 0.5, 6.0),
        case(AdvCollision, (25.0, 24.95), 1.5, "IO,IOL", 0.5, 0.3),
        case(AdvCollision, (3.0, 0.0), 2.0, "CV,CO", 0.5, 13.2),
        case(AdvCollision, (60.0, 59.4), 12.0, "IOL", 0.5, 1.85),
        case(AdvOffroad, (10.0, 9.8), 4.0, "IO,IOL", 0.5, 0.7),
        case(AdvOffroad, (10.0, 10.0), 0.0, "CV", 0.5, 0.0),
        case(AdvOffroad, (10.0, 10.0), 10.0, "", 0.5, 1.0),
        case(AdvOffroad, (10.0, 10.0), 0.0, "CV,CO,IO,IOL", 0.5, 0.1),
        case(AdvOffroad, (40.0, 39.0), 10.0, "", 0.5, 2.0),
        case(AdvOffroad, (7.0, 7.3), 0.0, "IOL", 0.5, -0.25),
        case(AdvOffroad, (25.0, 24.5), 5.0, "CV,CO", 0.5, 1.0),
        case(AdvOffroad, (18.0, 17.6), 8.0, "IO", 0.5, 1.25),
        case(AdvOffroad, (3.0, 0.0), 2.0, "IOL", 0.5, 3.25),
        case(AdvOffroad, (60.0, 59.4), 12.0, "CO,IO", 0.5, 1.85),
    ]
}

fn criterion_1(_: &mut Ctx) -> Outcome {
    let cases = reward_cases();
    let mut worst = 0.0f64;
    for (i, c) in cases.iter().enumerate() {
        let prev = StepFlags {
            remaining: c.d_prev,
            ..StepFlags::default()
        };
        let cur = StepFlags {
            cv: c.flags[0],
            co: c.flags[1],
            io: c.flags[2],
            iol: c.flags[3],
            forward_speed: c.speed,
            remaining: c.d_cur,
        };
        let got = c.kind.reward(&prev, &cur, &RewardParams { beta: c.beta });
        let err = (got - c.expected).abs();
        worst = worst.max(err);
        ensure(err <= REWARD_TOL, || {
            format!("case {} ({}): got {got}, expected {}", i + 1, c.kind, c.expected)
        })?;
    }
    Ok(format!("{}/{} cases within {REWARD_TOL:e} (worst {worst:.1e})", cases.len(), cases.len()))
}

// ---------------------------------------------------------------- 2

fn layer_checks() -> Result<f64, String> {
    let arch = Architecture::lite21();
    let mut worst = 0.0f64;
    let mut r = rng(21);
    for (li, g) in arch.conv_geometries().into_iter().enumerate() {
        let mut input = uniform_vec(&mut r, g.input_len(), 0.0, 1.0);
        let mut w = uniform_vec(&mut r, g.weight_len(), -0.3, 0.3);
        let mut b = uniform_vec(&mut r, g.out_channels, -0.1, 0.1);
        let up = uniform_vec(&mut r, g.output_len(), -1.0, 1.0);
        let loss = |g: &ConvGeometry, x: &[f64], w: &[f64], b: &[f64]| {
            let mut out = vec![0.0; g.output_len()];
            conv_relu_forward(g, x, w, b, &mut out);
            dot(&out, &up)
        };
        let mut out = vec![0.0; g.output_len()];
        conv_relu_forward(&g, &input, &w, &b, &mut out);
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; b.len()];
        let mut dx = vec![0.0; input.len()];
        conv_relu_backward(&g, &input, &w, &out, &up, &mut dw, &mut db, Some(&mut dx));
        let (ix, bx) = (input.clone(), b.clone());
        let (e1, _) = check_vector(&mut w, &dw, |w| loss(&g, &ix, w, &bx));
        let wx = w.clone();
        let (e2, _) = check_vector(&mut b, &db, |b| loss(&g, &ix, &wx, b));
        let (e3, _) = check_vector(&mut input, &dx, |x| loss(&g, x, &wx, &bx));
        let e = e1.max(e2).max(e3);
        ensure(e < GRAD_TOL, || format!("conv{} relative error {e:.2e}", li + 1))?;
        worst = worst.max(e);
    }
    for (name, n_in, n_out, relu) in [
        ("dense", arch.flat_len(), arch.hidden, true),
        ("policy head", arch.hidden, ACTION_COUNT, false),
        ("value head", arch.hidden, 1, false),
    ] {
        let mut input = uniform_vec(&mut r, n_in, -1.0, 1.0);
        let mut w = uniform_vec(&mut r, n_in * n_out, -0.3, 0.3);
        let mut b = uniform_vec(&mut r, n_out, -0.1, 0.1);
        let up = uniform_vec(&mut r, n_out, -1.0, 1.0);
        let loss = |x: &[f64], w: &[f64], b: &[f64]| {
            let mut out = vec![0.0; n_out];
            dense_forward(x, w, b, relu, &mut out);
            dot(&out, &up)
        };
        let mut out = vec![0.0; n_out];
        dense_forward(&input, &w, &b, relu, &mut out);
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; n_out];
        let mut dx = vec![0.0; n_in];
        dense_backward(&input, &w, &out, relu, &up, &mut dw, &mut db, Some(&mut dx));
        let (ix, bx) = (input.clone(), b.clone());
        let (e1, _) = check_vector(&mut w, &dw, |w| loss(&ix, w, &bx));
        let wx = w.clone();
        let (e2, _) = check_vector(&mut b, &db, |b| loss(&ix, &wx, b));
        let (e3, _) = check_vector(&mut input, &dx, |x| loss(x, &wx, &bx));
        let e = e1.max(e2).max(e3);
        ensure(e < GRAD_TOL, || format!("{name} relative error {e:.2e}"))?;
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Random input whose ReLU pre-activations all sit at least `margin` from zero.
fn input_away_from_kinks(params: &NetworkParams, r: &mut ChaCha8Rng, margin: f64) -> Vec<f64> {
    for _ in 0..1000 {
        let x = uniform_vec(r, params.architecture().input_len(), 0.0, 1.0);
        if naive_forward(params, &x).2 >= margin {
            return x;
        }
    }
    panic!("no input found away from ReLU kinks");
}

const KINK_MARGIN: f64 = 1e-4;

fn network_check() -> Result<f64, String> {
    let params = NetworkParams::init(&Architecture::lite21(), &mut rng(31));
    let mut r = rng(32);
    let x = input_away_from_kinks(&params, &mut r, KINK_MARGIN);
    let out = params.forward_input(x.clone()).map_err(|e| e.to_string())?;
    let (logits, value, _) = naive_forward(&params, &x);
    for (a, b) in out.logits.iter().zip(&logits) {
        ensure((a - b).abs() < 1e-10, || format!("forward logits {a} vs oracle {b}"))?;
    }
    ensure((out.value - value).abs() < 1e-10, || "forward value differs from oracle".into())?;
    let up = uniform_vec(&mut r, ACTION_COUNT, -1.0, 1.0);
    let up_v = 0.7;
    let mut grads = params.zeros_like();
    params.backward(&out.cache, &up, up_v, &mut grads);
    let (e, at) = check_params(&params, &grads, |p| {
        let o = p.forward_input(x.clone()).unwrap();
        dot(&o.logits, &up) + up_v * o.value
    });
    ensure(e < GRAD_TOL, || format!("end-to-end network relative error {e:.2e} at {at}"))?;
    Ok(e)
}

fn ppo_samples(params: &NetworkParams, r: &mut ChaCha8Rng, ratios: &[(f64, f64)]) -> Vec<Sample> {
    let old = {
        let mut p = params.clone();
        for t in p.tensors_mut() {
            for v in &mut t.data {
                *v += r.random_range(-0.02..0.02);
            }
        }
        p
    };
    ratios
        .iter()
        .enumerate()
        .map(|(i, &(ratio, adv))| {
            let input = input_away_from_kinks(params, r, KINK_MARGIN);
            let (new_logits, _, _) = naive_forward(params, &input);
            let (old_logits, old_value, _) = naive_forward(&old, &input);
            let action = (i * 4 + 1) % ACTION_COUNT;
            let lp_new = log_softmax(&new_logits)[action];
            Sample {
                input,
                action,
                old_log_prob: lp_new - ratio.ln(),
                old_logits,
                old_value,
                advantage: adv,
                ret: old_value + r.random_range(-1.0..1.0),
            }
        })
        .collect()
}

fn ppo_gradient_check() -> Result<f64, String> {
    let params = NetworkParams::init(&Architecture::lite21(), &mut rng(41));
    let mut r = rng(42);
    // Unclipped, clipped above, unclipped below, clipped below.
    let samples = ppo_samples(&params, &mut r, &[(1.1, 0.8), (1.5, 1.2), (0.9, -0.6), (0.5, -1.1)]);
    let refs: Vec<&Sample> = samples.iter().collect();
    let hyper = PpoHyper::default();
    let kl_coef = 0.3;
    let (_, grads) = ppo_loss_and_grad(&params, &refs, &hyper, kl_coef).map_err(|e| e.to_string())?;
    let (e, at) = check_params(&params, &grads, |p| ppo_loss(p, &refs, &hyper, kl_coef).unwrap().total);
    ensure(e < GRAD_TOL, || format!("ppo_loss relative error {e:.2e} at {at}"))?;
    Ok(e)
}

fn criterion_2(_: &mut Ctx) -> Outcome {
    let t = Instant::now();
    let layers = layer_checks()?;
    let net = network_check()?;
    let loss = ppo_gradient_check()?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < GRAD_SUITE_LIMIT_S, || format!("gradient suite took {secs:.1} s (limit {GRAD_SUITE_LIMIT_S} s)"))?;
    Ok(format!(
        "worst relative error: layers {layers:.1e}, network {net:.1e}, ppo_loss {loss:.1e} (tol {GRAD_TOL:e}, h {FD_STEP:e}); {secs:.1} s"
    ))
}

// ---------------------------------------------------------------- 3

/// The adaptive-KL rule applied by hand.
fn hand_kl_rule(coef: f64, kl: f64, target: f64) -> f64 {
    if kl > 2.0 * target {
        coef * 1.5
    } else if kl < target / 2.0 {
        coef * 0.5
    } else {
        coef
    }
}

fn corridor_batch(params: &NetworkParams, seed: u64) -> Result<(Vec<Trajectory>, RolloutBatch), String> {
    let sc = ScenarioConfig::corridor();
    let raster = RasterConfig {
        resolution_mode: ObsMode::Lite21,
        ..RasterConfig::default()
    };
    let policy = AgentPolicy {
        agent_id: VICTIM_1.into(),
        role: Role::Victim,
        reward_kind: RewardKind::Victim,
        params: params.clone(),
        frozen: false,
    };
    let spec = EpisodeSpec {
        scenario: &sc,
        raster: &raster,
        reward: &RewardParams::default(),
        max_steps: 120,
        seed,
        episode: 0,
        action_mode: ActionMode::Sample,
    };
    let out = run_episode(&[policy], &spec).map_err(|e| e.to_string())?;
    let trajs: Vec<Trajectory> = out.trajectories.into_values().collect();
    let batch = RolloutBatch::from_trajectories(&trajs, params.architecture(), &PpoHyper::default())
        .map_err(|e| e.to_string())?;
    Ok((trajs, batch))
}

fn criterion_3(_: &mut Ctx) -> Outcome {
    let hyper = PpoHyper::default();
    ensure(hyper.clip == 0.3, || format!("default clip is {}", hyper.clip))?;

    // On-policy ratio identity on a freshly collected batch.
    let mut params = NetworkParams::init(&Architecture::lite21(), &mut rng(51));
    let (_, batch) = corridor_batch(&params, 52)?;
    let dev = max_ratio_deviation(&params, &batch).map_err(|e| e.to_string())?;
    ensure(dev <= ON_POLICY_TOLERANCE, || format!("ratio deviates from 1 by {dev:e} at batch start"))?;

    // Clipped surrogate at the boundaries, every other loss term switched off.
    let bare = PpoHyper {
        vf_coef: 0.0,
        ent_coef: 0.0,
        ..hyper.clone()
    };
    let clip_cases: [(f64, f64, f64); 10] = [
        (1.5, 1.0, -1.3),
        (1.3, 1.0, -1.3),
        (1.2, 1.0, -1.2),
        (1.31, 2.0, -2.6),
        (0.5, 1.0, -0.5),
        (0.5, -1.0, 0.7),
        (0.7, -1.0, 0.7),
        (0.6, -2.0, 1.4),
        (1.5, -1.0, 1.5),
        (1.0, 2.0, -2.0),
    ];
    let mut r = rng(53);
    for (ratio, adv, expected) in clip_cases {
        let s = ppo_samples(&params, &mut r, &[(ratio, adv)]).remove(0);
        let (parts, grads) = ppo_loss_and_grad(&params, &[&s], &bare, 0.0).map_err(|e| e.to_string())?;
        ensure((parts.total - expected).abs() < 1e-9, || {
            format!("ratio {ratio}, advantage {adv}: loss {} expected {expected}", parts.total)
        })?;
        let flat = (ratio > 1.3 && adv > 0.0) || (ratio < 0.7 && adv < 0.0);
        let zero = grads.tensors().iter().all(|t| t.data.iter().all(|v| *v == 0.0));
        ensure(flat == zero, || {
            format!("ratio {ratio}, advantage {adv}: gradient zero = {zero}, expected {flat}")
        })?;
    }

    // Adaptive KL coefficient.
    let kl_cases = [
        (0.3, 0.07),
        (0.3, 0.0149),
        (0.3, 0.03),
        (0.3, 0.06),
        (0.3, 0.015),
        (0.45, 0.1),
        (0.2, 0.0),
    ];
    for (coef, kl) in kl_cases {
        let got = adapt_kl_coef(coef, kl, hyper.kl_target);
        let want = hand_kl_rule(coef, kl, 0.03);
        ensure(got == want, || format!("kl coef {coef} at kl {kl}: got {got}, rule gives {want}"))?;
    }
    let mut adam = AdamState::new(&params);
    let mut kl_coef = hyper.kl_coef_init;
    ensure(kl_coef == 0.3 && hyper.kl_target == 0.03, || "KL defaults differ".into())?;
    let stats = update_policy(&mut params, &mut adam, &batch, &hyper, &mut kl_coef, &mut rng(54))
        .map_err(|e| e.to_string())?;
    ensure(stats.kl_coef == hand_kl_rule(stats.kl_coef_before, stats.kl, 0.03), || {
        format!("update moved kl coef {} -> {} at kl {}", stats.kl_coef_before, stats.kl_coef, stats.kl)
    })?;
    // The old batch is no longer on-policy for the updated weights.
    let stale = update_policy(&mut params.clone(), &mut adam.clone(), &batch, &hyper, &mut kl_coef, &mut rng(55));
    ensure(matches!(stale, Err(Error::Contract(_))), || "stale batch was accepted".into())?;

    Ok(format!(
        "ratio identity {dev:.1e} (tol {ON_POLICY_TOLERANCE:e}); {} clip cases at eps 0.3; {} KL rule cases plus a live update (kl {:.4}, coef {} -> {})",
        clip_cases.len(),
        kl_cases.len(),
        stats.kl,
        stats.kl_coef_before,
        stats.kl_coef
    ))
}

// ---------------------------------------------------------------- 4

fn criterion_4(_: &mut Ctx) -> Outcome {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join("freeze");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
    }
    let mut cfg = RunConfig::demo();
    cfg.seed = 11;
    for b in [&mut cfg.phases.baseline, &mut cfg.phases.adversary, &mut cfg.phases.retraining] {
        b.episodes = 3;
        b.max_steps = 40;
    }
    cfg.ppo.train_batch = 32;
    cfg.ppo.minibatch = 16;
    cfg.ppo.epochs = 2;
    let mut p = Pipeline::new(cfg, &dir, "freeze-check").map_err(|e| e.to_string())?;
    let victims = p.train_baseline().map_err(|e| e.to_string())?;
    let victim_paths: Vec<PathBuf> = victims.iter().map(|c| c.path.clone()).collect();
    let read = |p: &Path| std::fs::read(p).unwrap();
    let victim_bytes: Vec<Vec<u8>> = victim_paths.iter().map(|p| read(p)).collect();

    let adv = p.train_adversary(&victim_paths, RewardKind::AdvOffroad).map_err(|e| e.to_string())?;
    let record = p.manifest.phases.last().unwrap().clone();
    ensure(record.updates > 0, || "adversary phase made no update".into())?;
    for (path, before) in victim_paths.iter().zip(&victim_bytes) {
        ensure(read(path) == *before, || format!("{} changed during adversary training", path.display()))?;
    }
    for c in &victims {
        ensure(record.frozen_after.get(&c.agent_id) == Some(&c.sha256), || {
            format!("manifest checksum for {} differs", c.agent_id)
        })?;
    }

    let adv_bytes = read(&adv.path);
    p.retrain(&victim_paths, &adv.path, "retrained").map_err(|e| e.to_string())?;
    let record = p.manifest.phases.last().unwrap().clone();
    ensure(record.updates > 0, || "retraining phase made no update".into())?;
    ensure(read(&adv.path) == adv_bytes, || "adversary checkpoint changed during retraining".into())?;
    ensure(record.frozen_after.get(&adv.agent_id) == Some(&adv.sha256), || "manifest adversary checksum differs".into())?;

    // A frozen file that changes mid-phase aborts the phase.
    let files = vec![(adv.agent_id.clone(), adv.path.clone())];
    let before = frozen_checksums(&files).map_err(|e| e.to_string())?;
    let mut tampered = adv_bytes.clone();
    let mid = tampered.len() / 2;
    tampered[mid] ^= 0x01;
    std::fs::write(&adv.path, &tampered).map_err(|e| e.to_string())?;
    let verdict = verify_frozen(Phase::Retraining, &files, &before);
    ensure(matches!(verdict, Err(Error::Freeze(_))), || "modified frozen checkpoint was not detected".into())?;
    let class = verdict.unwrap_err().class();
    ensure(class == "freeze", || format!("error class {class}"))?;
    Ok("adversary training and retraining left frozen checkpoints byte-identical; a modified frozen file aborts with class=freeze".into())
}

// ---------------------------------------------------------------- 5

fn tree_files(root: &Path, sub: &str) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(&root.join(sub), root, &mut out);
    out
}

fn criterion_5(ctx: &mut Ctx) -> Outcome {
    let a_dir = ctx.demo(1, "a")?.1.clone();
    let b_dir = ctx.demo(1, "b")?.1.clone();
    let mut count = 0;
    for sub in ["checkpoints", "reports"] {
        let a = tree_files(&a_dir, sub);
        let b = tree_files(&b_dir, sub);
        ensure(!a.is_empty(), || format!("no files under {sub}"))?;
        ensure(a.keys().eq(b.keys()), || format!("{sub} file sets differ"))?;
        for (k, v) in &a {
            ensure(b[k] == *v, || format!("{} differs between runs", k.display()))?;
        }
        count += a.len();
    }
    Ok(format!("two seed-1 demo runs: {count} checkpoint and report files byte-identical"))
}

// ---------------------------------------------------------------- 6

struct RewardLog(Vec<f64>);

impl PhaseHooks for RewardLog {
    fn on_episode(&mut self, _episode: u64, log: &EpisodeLog) -> advdrive::Result<()> {
        self.0.push(log.agents[0].total_reward);
        Ok(())
    }
}

fn corridor_run(seed: u64) -> Result<(f64, f64), String> {
    let sc = ScenarioConfig::corridor();
    let arch = Architecture::lite21();
    let params = NetworkParams::init(&arch, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[100, 0])));
    let adam = AdamState::new(&params);
    let policy = AgentPolicy {
        agent_id: VICTIM_1.into(),
        role: Role::Victim,
        reward_kind: RewardKind::Victim,
        params,
        frozen: false,
    };
    let hyper = PpoHyper::default();
    let mut learners = vec![Learner::new(policy, adam, hyper.kl_coef_init, derive_seed(seed, &[200, 1, 0]))];
    let plan = PhasePlan {
        phase: Phase::Baseline,
        episodes: CORRIDOR_EPISODES,
        max_steps: sc.sim.max_steps,
        step_budget: None,
        trainable: vec![VICTIM_1.into()],
        frozen: vec![],
    };
    let settings = TrainSettings {
        hyper,
        raster: RasterConfig {
            resolution_mode: ObsMode::Lite21,
            ..RasterConfig::default()
        },
        reward: RewardParams::default(),
        seed,
        episodes_per_round: 1,
        checkpoint_every: 0,
    };
    let mut log = RewardLog(Vec::new());
    run_training_phase(&plan, &sc, &mut learners, &[], &settings, &mut log).map_err(|e| e.to_string())?;
    let n = log.0.len() / 10;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((mean(&log.0[..n]), mean(&log.0[log.0.len() - n..])))
}

fn criterion_6(_: &mut Ctx) -> Outcome {
    let t = Instant::now();
    let mut improved = 0;
    let mut detail = Vec::new();
    for seed in CORRIDOR_SEEDS {
        let (first, last) = corridor_run(seed)?;
        if last > first {
            improved += 1;
        }
        detail.push(format!("seed {seed}: {first:.1} -> {last:.1}"));
    }
    let secs = t.elapsed().as_secs_f64();
    let summary = format!(
        "{improved}/3 seeds improved first->last decile mean reward over {CORRIDOR_EPISODES} episodes [{}]; {secs:.0} s",
        detail.join(", ")
    );
    ensure(improved >= 2, || summary.clone())?;
    ensure(secs < CORRIDOR_LIMIT_S, || format!("{summary} exceeds {CORRIDOR_LIMIT_S} s"))?;
    Ok(summary)
}

// ---------------------------------------------------------------- 7

fn composite(outcome: &DemoOutcome, label: &str) -> Result<f64, String> {
    outcome
        .report(label)
        .map(MetricsReport::mean_composite)
        .ok_or_else(|| format!("missing report {label}"))
}

fn criterion_7(ctx: &mut Ctx) -> Outcome {
    let off = RewardKind::AdvOffroad;
    let col = RewardKind::AdvCollision;
    let (mut a_hits, mut b_hits, mut c_hits) = (0, 0, 0);
    let mut rows = Vec::new();
    for seed in TREND_SEEDS {
        let (outcome, _) = ctx.demo(seed, "a")?;
        let base = composite(outcome, "baseline")?;
        let attack = composite(outcome, &attack_label(off))?;
        let retrained = composite(outcome, &retrained_label(off))?;
        let attack_col = composite(outcome, &attack_label(col))?;
        if attack > base {
            a_hits += 1;
        }
        if retrained < attack {
            b_hits += 1;
        }
        if attack - base > attack_col - base {
            c_hits += 1;
        }
        rows.push(format!(
            "seed {seed}: baseline {base:.4}, attack_offroad {attack:.4}, retrained_offroad {retrained:.4}, attack_collision {attack_col:.4}"
        ));
    }
    for r in &rows {
        println!("       {r}");
    }
    println!(
        "       (c) offroad adversary degraded the composite more than the collision adversary in {c_hits}/3 seeds (reported, not gated)"
    );
    let summary = format!("(a) attack > baseline in {a_hits}/3 seeds; (b) retrained < attack in {b_hits}/3 seeds");
    ensure(a_hits >= 2 && b_hits >= 2, || summary.clone())?;
    Ok(summary)
}

// ---------------------------------------------------------------- 8

fn clean_log() -> EpisodeLog {
    let summary = |id: &str, ticks, iol| AgentSummary {
        agent_id: id.into(),
        role: Role::Victim,
        reward_kind: RewardKind::Victim,
        ticks,
        cv_ticks: 0,
        co_ticks: 0,
        io_ticks: 0,
        iol_ticks: iol,
        first_collision_tick: None,
        total_reward: 0.0,
        termination: None,
    };
    EpisodeLog {
        seed: 0,
        dt: 0.05,
        ticks: 400,
        map: ScenarioConfig::default().map,
        agents: vec![summary("victim1", 400, 12), summary("victim2", 400, 0)],
        positions: vec![],
        events: vec![],
    }
}

fn criterion_8(ctx: &mut Ctx) -> Outcome {
    // No-collision runs leave TTFC absent and render it as "-".
    let m = episode_metrics(0, &clean_log());
    ensure(m.victims.iter().all(|v| v.ttfc.is_none()), || "clean episode has a TTFC".into())?;
    let agg = aggregate(&[m.clone(), episode_metrics(1, &clean_log())]);
    ensure(agg.iter().all(|v| v.ttfc.is_none() && v.collided_episodes == 0), || "clean aggregate has a TTFC".into())?;
    ensure((agg[0].os_rate - 12.0 / 400.0).abs() < 1e-15, || "offroad rate of clean log".into())?;
    let report = MetricsReport {
        label: "clean".into(),
        fingerprint: "f".into(),
        episodes: 2,
        max_steps: 400,
        seed: 0,
        action_mode: ActionMode::Sample,
        opponents: vec![],
        victims: agg,
        per_episode: vec![m],
    };
    let table = compare(&Column::chain(std::slice::from_ref(&report))).map_err(|e| e.to_string())?;
    let text = table.render_text();
    let ttfc_line = text.lines().find(|l| l.starts_with(Metric::Ttfc.title())).unwrap_or("");
    ensure(ttfc_line.split_whitespace().any(|w| w == "-"), || format!("TTFC not rendered as '-': {ttfc_line}"))?;

    // Rates within [0, 1] and order-independent aggregation on real reports.
    let mut checked = 0;
    let seeds: Vec<u64> = ctx.demos.keys().filter_map(|k| k.strip_prefix("seed")?.split('-').next()?.parse().ok()).collect();
    let seeds = if seeds.is_empty() { vec![1] } else { seeds };
    for seed in seeds {
        let (outcome, _) = ctx.demo(seed, "a")?;
        for r in &outcome.reports {
            for v in &r.victims {
                for x in [v.cv_rate, v.co_rate, v.os_rate] {
                    ensure((0.0..=1.0).contains(&x), || format!("{} rate {x} outside [0, 1]", r.label))?;
                }
            }
            for e in &r.per_episode {
                for v in &e.victims {
                    for x in [v.cv_rate, v.co_rate, v.os_rate] {
                        ensure((0.0..=1.0).contains(&x), || format!("{} episode rate {x} outside [0, 1]", r.label))?;
                    }
                }
            }
            let mut shuffled = r.per_episode.clone();
            let mut prng = rng(checked as u64);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, prng.random_range(0..=i));
            }
            ensure(aggregate(&shuffled) == r.victims, || format!("{} aggregate depends on episode order", r.label))?;
            checked += 1;
        }
    }
    Ok(format!("clean run TTFC absent and shown as '-'; {checked} reports with rates in [0, 1] and order-independent aggregates"))
}

// ---------------------------------------------------------------- 9

fn criterion_9(_: &mut Ctx) -> Outcome {
    let arch = Architecture::lite21();
    let mut params = NetworkParams::init(&arch, &mut rng(91));
    let mut adam = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut r = rng(92);
    for t in grads.tensors_mut() {
        for v in &mut t.data {
            *v = r.random_range(-1.0..1.0);
        }
    }
    adam_update(&mut params, &grads, &mut adam, 0.0006, &AdamConfig::default()).map_err(|e| e.to_string())?;
    let ckpt = Checkpoint {
        meta: CheckpointMeta {
            agent_id: VICTIM_1.into(),
            role: Role::Victim,
            reward_kind: RewardKind::Victim,
            architecture: arch.clone(),
            episodes: 3,
            steps: 456,
            adam_step: Some(adam.step),
            kl_coef: Some(0.45),
        },
        params: params.clone(),
        adam: Some(adam),
    };
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join("persistence");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let path = dir.join("victim1.ckpt");
    save_checkpoint(&path, &ckpt).map_err(|e| e.to_string())?;
    let loaded = load_checkpoint(&path).map_err(|e| e.to_string())?;
    ensure(loaded.meta == ckpt.meta && loaded.adam == ckpt.adam, || "metadata or optimiser state changed".into())?;
    let bits = |p: &NetworkParams| -> Vec<u64> { p.tensors().iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect() };
    ensure(bits(&loaded.params) == bits(&params), || "parameters not bit-identical".into())?;
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    ensure(loaded.to_bytes() == bytes, || "re-serialisation differs".into())?;
    let x = uniform_vec(&mut r, arch.input_len(), 0.0, 1.0);
    let a = params.forward_input(x.clone()).unwrap();
    let b = loaded.params.forward_input(x).unwrap();
    ensure(
        a.logits.iter().map(|v| v.to_bits()).eq(b.logits.iter().map(|v| v.to_bits())) && a.value.to_bits() == b.value.to_bits(),
        || "forward outputs differ after reload".into(),
    )?;

    // Corruption: every header byte, sampled payload bytes, every checksum byte, truncations.
    let mut positions: Vec<usize> = (0..256.min(bytes.len())).collect();
    positions.extend((0..200).map(|_| r.random_range(0..bytes.len())));
    positions.extend(bytes.len() - 32..bytes.len());
    for &i in &positions {
        let mut bad = bytes.clone();
        bad[i] ^= 0x5a;
        ensure(Checkpoint::from_bytes(&bad).is_err(), || format!("flipped byte {i} went unnoticed"))?;
    }
    let mut bad = bytes.clone();
    bad[bytes.len() / 2] ^= 0x01;
    ensure(Checkpoint::from_bytes(&bad).err() == Some(CheckpointError::Checksum), || "payload flip not a checksum error".into())?;
    for cut in [0, 7, 12, 100, bytes.len() / 2, bytes.len() - 1] {
        ensure(Checkpoint::from_bytes(&bytes[..cut]).is_err(), || format!("truncation to {cut} bytes accepted"))?;
    }

    // Configuration defaults against the published hyperparameter tables.
    let c = RunConfig::default();
    let checks: [(&str, f64, f64); 18] = [
        ("minibatch", c.ppo.minibatch as f64, 64.0),
        ("epochs", c.ppo.epochs as f64, 8.0),
        ("gamma", c.ppo.gamma, 0.99),
        ("clip", c.ppo.clip, 0.3),
        ("kl_target", c.ppo.kl_target, 0.03),
        ("kl_coef_init", c.ppo.kl_coef_init, 0.3),
        ("vf_coef", c.ppo.vf_coef, 1.0),
        ("ent_coef", c.ppo.ent_coef, 0.01),
        ("lr", c.ppo.lr, 0.0006),
        ("train_batch", c.ppo.train_batch as f64, 128.0),
        ("baseline episodes", c.phases.baseline.episodes as f64, 610.0),
        ("adversary episodes", c.phases.adversary.episodes as f64, 101.0),
        ("retraining episodes", c.phases.retraining.episodes as f64, 306.0),
        ("baseline steps", c.phases.baseline.step_cap.unwrap_or(0) as f64, 300672.0),
        ("adversary steps", c.phases.adversary.step_cap.unwrap_or(0) as f64, 57728.0),
        ("retraining steps", c.phases.retraining.step_cap.unwrap_or(0) as f64, 133888.0),
        ("eval episodes", c.eval.episodes as f64, 50.0),
        ("eval max_steps", c.eval.max_steps as f64, 2000.0),
    ];
    for (name, got, want) in checks {
        ensure(got == want, || format!("default {name} = {got}, expected {want}"))?;
    }
    ensure(RunConfig::from_toml("").map_err(|e| e.to_string())? == c, || "empty config differs from defaults".into())?;
    Ok(format!(
        "round-trip bit-exact; {} corrupted variants and 6 truncations rejected; {} defaults match",
        positions.len() + 1,
        checks.len()
    ))
}

// ----------------------------------------------------------------

type Criterion = fn(&mut Ctx) -> Outcome;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("reward oracle suite", criterion_1),
        ("gradient checks", criterion_2),
        ("PPO mechanics", criterion_3),
        ("freeze contracts", criterion_4),
        ("demo determinism", criterion_5),
        ("corridor learning sanity", criterion_6),
        ("directional trend over 3 seeds", criterion_7),
        ("metrics edge cases", criterion_8),
        ("persistence and config defaults", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut ctx = Ctx { demos: BTreeMap::new() };
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let number = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&number) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| f(&mut ctx))).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {number}. {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {number}. {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
