//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Criteria 5, 9 and 11 drive the `hemoscope` binary end to end on the
//! default configuration; the rest run in-process.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hemoscope::energy::{check_reference, cycle_energy, reference_cases, scenario_compare, EnergyBasis};
use hemoscope::nn::{gradient_check, ModelParams, Sample, TrainedModel, FLAT_FEATURES, HIDDEN_UNITS, PARAM_COUNT};
use hemoscope::quant::{footprint_report, QuantizedModel};
use hemoscope::sim::{
    medium_background, physics_check, read_dataset, windowize, FlowClass, InfusionScenario, Simulator, Split,
    MEDIUM_SGF, MEDIUM_WATER,
};
use hemoscope::spectral::transmit;
use hemoscope::telemetry::{decode, decode_exact, Payload, TelemetryFrame};
use hemoscope::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const TABLE_REL_TOL: f64 = 1e-3;
const CASE2_REL_TOL: f64 = 0.02;
const SCENARIO_ABS_TOL_UAH: f64 = 0.01;
const REDUCTION_TARGET_PCT: f64 = 88.4;
const REDUCTION_TOL_PP: f64 = 0.1;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_FD_STEP: f64 = 1e-4;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(60);
const MIN_ACCURACY: f64 = 0.95;
const MIN_INTERFERENCE_RECALL: f64 = 0.99;
const TRAIN_TIME_LIMIT: Duration = Duration::from_secs(600);
const BEER_LAMBERT_REL_TOL: f64 = 1e-12;
const BEER_LAMBERT_CASES: usize = 100_000;
const MEDIUM_Z_TOL: f64 = 1e-9;
const MEDIUM_LOGIT_TOL: f64 = 1e-9;
const MIN_AGREEMENT: f64 = 0.98;
const TELEMETRY_ROUND_TRIPS: usize = 10_000;
const TELEMETRY_FUZZ_FRAMES: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn hemoscope(dir: &Path, args: &[&str]) -> Result<(String, Duration), String> {
    hemoscope_env(dir, args, &[])
}

fn hemoscope_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Result<(String, Duration), String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_hemoscope"))
        .args(args)
        .current_dir(dir)
        .envs(env.iter().copied())
        .output()
        .map_err(|e| format!("spawning hemoscope: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "`hemoscope {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok((String::from_utf8_lossy(&out.stdout).into_owned(), start.elapsed()))
}

/// Relative path -> bytes for every file below `root`.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if let Ok(bytes) = std::fs::read(&p) {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), bytes);
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Artifacts of one default end-to-end run, produced by the binary.
struct Pipeline {
    dir: PathBuf,
    train_time: Duration,
    eval_line: String,
    qeval_line: String,
}

fn pipeline(dir: &Path, with_eval: bool) -> Result<Pipeline, String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    hemoscope(dir, &["gen", "--seed", "42", "--out", "data"])?;
    let (_, train_time) = hemoscope(dir, &["train", "--seed", "42", "--data", "data", "--out", "model"])?;
    let eval_line = if with_eval {
        hemoscope(dir, &["eval", "--model", "model/model.json", "--data", "data", "--out", "eval"])?.0
    } else {
        String::new()
    };
    hemoscope(dir, &["quantize", "--model", "model/model.json", "--data", "data", "--out", "quant"])?;
    let qargs = ["qeval", "--model", "model/model.json", "--qmodel", "quant/model.hsq8", "--data", "data"];
    let qeval_line = hemoscope(dir, &[&qargs[..], &["--out", "qeval"]].concat())?.0;
    Ok(Pipeline { dir: dir.to_path_buf(), train_time, eval_line, qeval_line })
}

fn c1_energy_table() -> Outcome {
    let cases = reference_cases();
    let get = |n: &str| cases.iter().find(|c| c.name == n).expect("case present");
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, uah, uc) in [("1", 0.09144, 329.17), ("3", 1.09798, 3952.73)] {
        let e = cycle_energy(get(name)).unwrap();
        let pass = rel(e.total_energy_uah, uah) <= TABLE_REL_TOL && rel(e.total_charge_uc, uc) <= TABLE_REL_TOL;
        ok &= pass;
        parts.push(format!("case {name} {:.5} uAh / {:.2} uC", e.total_energy_uah, e.total_charge_uc));
    }
    let chk = check_reference(get("2")).unwrap().unwrap();
    ok &= chk.relative_error.abs() <= CASE2_REL_TOL && chk.flagged;
    parts.push(format!(
        "case 2 {:.5} uAh ({:+.2}%, flagged={})",
        chk.computed_uah,
        100.0 * chk.relative_error,
        chk.flagged
    ));
    outcome(ok, parts.join("; "))
}

fn c2_energy_tradeoff() -> Outcome {
    let cases = reference_cases();
    let cmp = scenario_compare(&cases[0], &cases[1], 9, 1, EnergyBasis::Reference).unwrap();
    let pct = 100.0 * cmp.reduction;
    let ok = (cmp.energy_mixed_uah - 5.96).abs() <= SCENARIO_ABS_TOL_UAH
        && (cmp.energy_all_tx_uah - 51.35).abs() <= SCENARIO_ABS_TOL_UAH
        && (pct - REDUCTION_TARGET_PCT).abs() <= REDUCTION_TOL_PP;
    outcome(ok, format!("{:.5} uAh vs {:.5} uAh, reduction {pct:.3}%", cmp.energy_mixed_uah, cmp.energy_all_tx_uah))
}

fn c3_architecture() -> Outcome {
    let fw = ModelParams::init(1).forward(&[0.5; 144]).unwrap();
    let shape = |s: &str| fw.stage(s).map(|t| t.shape().to_vec()).unwrap_or_default();
    let fp = footprint_report();
    let ok = shape("pool1") == [4, 3, 12]
        && shape("pool2") == [8, 1, 6]
        && shape("flatten") == [FLAT_FEATURES]
        && FLAT_FEATURES == 48
        && shape("fc1") == [HIDDEN_UNITS]
        && HIDDEN_UNITS == 64
        && shape("fc2") == [6]
        && fp.parameter_count == 3862
        && PARAM_COUNT == 3862
        && fp.macs == 19_008;
    outcome(
        ok,
        format!(
            "pool1 {:?}, pool2 {:?}, flatten {:?}, fc1 {:?}, out {:?}, params {}, MACs {}",
            shape("pool1"),
            shape("pool2"),
            shape("flatten"),
            shape("fc1"),
            shape("fc2"),
            fp.parameter_count,
            fp.macs
        ),
    )
}

fn c4_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let data: Vec<(Vec<f64>, usize)> =
        (0..4).map(|_| ((0..144).map(|_| rng.random_range(-2.0..2.0)).collect(), rng.random_range(0..6))).collect();
    let batch: Vec<Sample> = data.iter().map(|(x, y)| Sample { input: x, label: *y }).collect();
    let check = gradient_check(&ModelParams::init(2024), &batch, GRAD_FD_STEP, Exec::Parallel).unwrap();
    let took = start.elapsed();
    let ok = check.params_checked == PARAM_COUNT && check.max_relative_error < GRAD_REL_TOL && took < GRAD_TIME_LIMIT;
    outcome(
        ok,
        format!(
            "max rel error {:.2e} over {} params (worst #{}), {:.1} s",
            check.max_relative_error,
            check.params_checked,
            check.worst_index,
            took.as_secs_f64()
        ),
    )
}

/// Parses `key=value` pairs from a `a=1, b=2` summary line.
fn field(line: &str, key: &str) -> Option<f64> {
    line.split(',').find_map(|kv| {
        let (k, v) = kv.trim().split_once('=')?;
        (k == key).then(|| v.split_whitespace().next()?.parse().ok()).flatten()
    })
}

fn c5_classification(run: &Pipeline) -> Outcome {
    let report: serde_json::Value =
        match std::fs::read_to_string(run.dir.join("eval/eval_report.json")).map(|t| serde_json::from_str(&t)) {
            Ok(Ok(v)) => v,
            _ => return outcome(false, "eval report missing"),
        };
    let acc = field(&run.eval_line, "accuracy").unwrap_or(0.0);
    let recall = field(&run.eval_line, "interference_recall").unwrap_or(0.0);
    let non_adjacent = report["non_adjacent_errors"].as_u64().unwrap_or(u64::MAX);
    let ok = acc >= MIN_ACCURACY
        && recall >= MIN_INTERFERENCE_RECALL
        && non_adjacent == 0
        && run.train_time < TRAIN_TIME_LIMIT;
    outcome(
        ok,
        format!(
            "accuracy {acc:.4}, interference recall {recall:.4}, non-adjacent errors {non_adjacent}, training {:.1} s",
            run.train_time.as_secs_f64()
        ),
    )
}

fn c6_physics() -> Outcome {
    let check = physics_check(120.0, 1.0).unwrap();
    outcome(
        check.passed(),
        format!(
            "{} bleeding series decreasing, flow 0 constant={}, ordering violation {:?}",
            5 - check.not_decreasing.len(),
            check.blank_constant,
            check.order_violation
        ),
    )
}

fn c7_beer_lambert() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..BEER_LAMBERT_CASES {
        let i0 = rng.random_range(1.0..65535.0);
        let mu = rng.random_range(0.0..5.0);
        let c = rng.random_range(0.0..2.0);
        let l = rng.random_range(0.1..10.0);
        let t1 = transmit(i0, mu, c, l).unwrap() / i0;
        let t2 = transmit(i0, mu, 2.0 * c, l).unwrap() / i0;
        worst = worst.max(rel(t2, t1 * t1));
    }
    outcome(worst <= BEER_LAMBERT_REL_TOL, format!("max rel error {worst:.2e} over {BEER_LAMBERT_CASES} draws"))
}

fn c8_medium_invariance(run: &Pipeline) -> Outcome {
    let model = match TrainedModel::load(&run.dir.join("model/model.json")) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("loading model: {e}")),
    };
    let sim = Simulator::noiseless();
    let (mut dz, mut dl, mut same_class, mut n) = (0.0f64, 0.0f64, true, 0);
    for class in FlowClass::ALL {
        let mut recs = [MEDIUM_WATER, MEDIUM_SGF].map(|medium| {
            let mut s = InfusionScenario::bleeding(class, 99);
            s.medium = medium.into();
            s.background_transmission = medium_background(medium);
            windowize(&sim.run_recording(medium, &s).unwrap(), 6, 6).unwrap()
        });
        let [water, sgf] = &mut recs;
        for (a, b) in water.iter().zip(sgf.iter()) {
            let (za, zb) = (model.normalizer.normalize(a), model.normalizer.normalize(b));
            dz = za.iter().zip(&zb).fold(dz, |m, (x, y)| m.max((x - y).abs()));
            let (la, lb) = (model.params.logits(&za).unwrap(), model.params.logits(&zb).unwrap());
            dl = la.iter().zip(&lb).fold(dl, |m, (x, y)| m.max((x - y).abs()));
            let argmax = |l: &[f64; 6]| (0..6).fold(0, |best, k| if l[k] > l[best] { k } else { best });
            same_class &= argmax(&la) == argmax(&lb);
            n += 1;
        }
    }
    outcome(
        dz <= MEDIUM_Z_TOL && dl <= MEDIUM_LOGIT_TOL && same_class,
        format!("{n} window pairs: max |dz| {dz:.1e}, max |dlogit| {dl:.1e}, same argmax={same_class}"),
    )
}

fn c9_quantization(run: &Pipeline) -> Outcome {
    let agreement = field(&run.qeval_line, "agreement").unwrap_or(0.0);
    let qargs = ["qeval", "--model", "model/model.json", "--qmodel", "quant/model.hsq8", "--data", "data"];
    // (output dir, extra flags, environment)
    type Variant<'a> = (&'a str, &'a [&'a str], &'a [(&'a str, &'a str)]);
    let variants: [Variant; 3] = [
        ("qeval-t1", &[], &[("RAYON_NUM_THREADS", "1")]),
        ("qeval-t4", &[], &[("RAYON_NUM_THREADS", "4")]),
        ("qeval-seq", &["--sequential"], &[]),
    ];
    let reference = tree(&run.dir.join("qeval"));
    let mut identical = !reference.is_empty();
    for (out, extra, env) in variants {
        let args = [&qargs[..], extra, &["--out", out]].concat();
        if let Err(e) = hemoscope_env(&run.dir, &args, env) {
            return outcome(false, e);
        }
        identical &= tree(&run.dir.join(out)) == reference;
    }

    // In-process: integer traces of every test window, twice, in both modes.
    let q = QuantizedModel::load(&run.dir.join("quant/model.hsq8")).unwrap();
    let windows = read_dataset(&run.dir.join("data")).unwrap().windows(Split::Test).unwrap();
    let traces = |exec: Exec| {
        exec.map(&windows, |w| {
            let f = q.qforward(&q.normalizer.normalize(w)).unwrap();
            (f.trace, f.accumulators)
        })
    };
    let a = traces(Exec::Parallel);
    identical &= a == traces(Exec::Parallel) && a == traces(Exec::Sequential);

    outcome(
        agreement >= MIN_AGREEMENT && identical,
        format!(
            "top-1 agreement {agreement:.4}; int8 outputs identical across runs, 1/4 threads, sequential: {identical}"
        ),
    )
}

fn random_frame(rng: &mut ChaCha8Rng) -> TelemetryFrame {
    let payload = if rng.random_bool(0.5) {
        Payload::Raw(std::array::from_fn(|_| rng.random()))
    } else {
        Payload::Result { class: rng.random_range(0..6), confidence_q8: rng.random() }
    };
    TelemetryFrame { seq: rng.random(), timestamp_ms: rng.random(), payload }
}

fn c10_telemetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let round_trips = (0..TELEMETRY_ROUND_TRIPS)
        .filter(|_| {
            let f = random_frame(&mut rng);
            let bytes = f.encode().unwrap();
            decode(&bytes).ok() == Some((f, bytes.len()))
        })
        .count();
    let (mut flips, mut rejected) = (0usize, 0usize);
    for _ in 0..TELEMETRY_FUZZ_FRAMES {
        let bytes = random_frame(&mut rng).encode().unwrap();
        for bit in 0..bytes.len() * 8 {
            let mut bad = bytes.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            flips += 1;
            rejected += usize::from(decode_exact(&bad).is_err());
        }
    }
    let raw_len = TelemetryFrame { seq: 0, timestamp_ms: 0, payload: Payload::Raw([0; 24]) }.encode().unwrap().len();
    outcome(
        round_trips == TELEMETRY_ROUND_TRIPS && rejected == flips && raw_len == 60,
        format!(
            "{round_trips}/{TELEMETRY_ROUND_TRIPS} round trips, {rejected}/{flips} bit flips rejected, raw frame {raw_len} bytes"
        ),
    )
}

fn c11_determinism(a: &Pipeline, b: &Pipeline) -> Outcome {
    let mut differing = Vec::new();
    let mut files = 0;
    for sub in ["data", "model", "quant", "qeval"] {
        let (ta, tb) = (tree(&a.dir.join(sub)), tree(&b.dir.join(sub)));
        files += ta.len();
        if ta.is_empty() || ta != tb {
            differing.push(sub);
        }
    }
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("gen/train/quantize/qeval: {files} files byte-identical across reruns")
        } else {
            format!("differing outputs: {}", differing.join(", "))
        },
    )
}

fn main() {
    // Cargo passes harness flags such as `--nocapture`; nothing here takes arguments.
    let started = Instant::now();
    let work = tempfile::tempdir().expect("temp dir");
    let run_a = pipeline(&work.path().join("a"), true);
    let run_b = pipeline(&work.path().join("b"), false);

    let failed_run = |e: &String| outcome(false, e.clone());
    let results: Vec<(&str, Outcome)> = vec![
        ("energy-table", c1_energy_table()),
        ("energy-tradeoff", c2_energy_tradeoff()),
        ("architecture", c3_architecture()),
        ("gradients", c4_gradients()),
        ("classification", run_a.as_ref().map_or_else(failed_run, c5_classification)),
        ("physics", c6_physics()),
        ("beer-lambert", c7_beer_lambert()),
        ("medium-invariance", run_a.as_ref().map_or_else(failed_run, c8_medium_invariance)),
        ("quantization", run_a.as_ref().map_or_else(failed_run, c9_quantization)),
        ("telemetry", c10_telemetry()),
        (
            "determinism",
            match (&run_a, &run_b) {
                (Ok(a), Ok(b)) => c11_determinism(a, b),
                (Err(e), _) | (_, Err(e)) => failed_run(e),
            },
        ),
    ];

    let mut failures = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failures += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failures} failed ({:.0} s)",
        results.len() - failures,
        started.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
