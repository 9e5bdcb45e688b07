//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;
#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::io::Cursor;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use cane_core::curation::{augmentation_plan, dedup, scan_corpus, NEAR_DUPLICATE_THRESHOLD};
use cane_core::gradcam::{gradcam_map, head_gradient};
use cane_core::hpo::{
    cosine_lr, label_smooth_ce, suggest, synthetic_objective, Assignment, EarlyStopping, SearchSpace, TpeConfig,
    TrialRecord, TrialState,
};
use cane_core::metrics::{accuracy, confusion, macro_f1, one_vs_rest_accuracy, precision_recall_f1, roc_auc, wilson_ci, Z_95};
use cane_core::model::{build_model, container_size, profile, save_weights_to_file, HeadView, Linear};
use cane_core::{ModelConfig, ModelGraph, Tensor, CLASS_NAMES, NUM_CLASSES};
use cane_serve::bench::{run_bench, REFERENCE_MMACS, REFERENCE_PARAMS_M};
use cane_serve::{load_model, router, AppState, Prediction, RecoProvider};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn curation_plan() -> Outcome {
    let counts: Vec<(String, usize)> = common::TABLE_COUNTS.iter().map(|r| (r.0.to_string(), r.1)).collect();
    let plan = augmentation_plan(&counts);
    ensure(plan.classes.len() == 17, || format!("{} classes", plan.classes.len()))?;
    for (row, &(class, original, train, factor, fin)) in plan.classes.iter().zip(&common::TABLE_COUNTS) {
        let got = (row.class.as_str(), row.original, row.train, row.factor, row.final_train);
        ensure(got == (class, original, train, factor, fin), || {
            format!("{class}: got {got:?}, want {:?}", (class, original, train, factor, fin))
        })?;
    }
    let totals = (plan.total_original(), plan.total_train(), plan.total_final());
    ensure(totals == (7037, 5623, 11_314), || format!("totals {totals:?}"))?;
    let (before, after) = (plan.original_imbalance(), plan.final_imbalance());
    ensure((before - 26.3).abs() <= 0.1, || format!("original imbalance {before}"))?;
    ensure((after - 3.80).abs() <= 0.01, || format!("final imbalance {after}"))?;
    Ok(format!("17 rows exact, imbalance {before:.2} -> {after:.3}"))
}

fn dedup_fixture() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::write_dedup_fixture(dir.path(), "Red Rot");
    let scan = scan_corpus(dir.path()).map_err(|e| e.to_string())?;
    let out = dedup(scan.entries, NEAR_DUPLICATE_THRESHOLD);
    let names: Vec<String> = out
        .survivors
        .iter()
        .map(|e| e.path.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    ensure(names == ["f1.png", "f4.png", "f5.png"], || format!("survivors {names:?}"))?;
    let again = dedup(out.survivors.clone(), NEAR_DUPLICATE_THRESHOLD);
    ensure(again.removals.is_empty() && again.survivors == out.survivors, || "second pass removed files".into())?;
    Ok(format!("survivors {names:?}, second pass idempotent"))
}

fn kernel_oracles() -> Outcome {
    let stats = oracle::kernel_sweep(200, 5)?;
    ensure(stats.conv_cases >= 100, || format!("{} shapes", stats.conv_cases))?;
    let pairs = oracle::shuffle_identity_sweep(64)?;
    Ok(format!(
        "{} conv shapes ({} grouped, {} depthwise) + pool/gap/linear, max rel err {:.1e} <= {:.0e}; shuffle identity on {pairs} (C, g) pairs",
        stats.conv_cases,
        stats.grouped_cases,
        stats.depthwise_cases,
        stats.max_rel_err,
        oracle::KERNEL_REL_TOL
    ))
}

fn random_head(c: usize, hidden: usize, classes: usize, rng: &mut ChaCha8Rng) -> (Linear, Linear) {
    let mut fc1 = Linear::new("fc1", c, hidden, true);
    let mut fc2 = Linear::new("fc2", hidden, classes, false);
    for v in fc1.weight.iter_mut().chain(&mut fc1.bias).chain(&mut fc2.weight).chain(&mut fc2.bias) {
        *v = rng.random_range(-1.0..1.0);
    }
    (fc1, fc2)
}

fn hidden_pre(fc1: &Linear, pooled: &[f64]) -> Vec<f64> {
    (0..fc1.out_features)
        .map(|j| fc1.bias[j] as f64 + fc1.row(j).iter().zip(pooled).map(|(&w, &p)| w as f64 * p).sum::<f64>())
        .collect()
}

fn head_logit(fc1: &Linear, fc2: &Linear, a: &[f64], hw: usize, class: usize) -> f64 {
    let pooled: Vec<f64> = a.chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
    let hidden = hidden_pre(fc1, &pooled);
    fc2.bias[class] as f64 + fc2.row(class).iter().zip(&hidden).map(|(&w, &z)| w as f64 * z.max(0.0)).sum::<f64>()
}

fn gradcam_checks() -> Outcome {
    const FD_TOL: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut heads = 0;
    let mut worst = 0f64;
    for trial in 0..100 {
        if heads == 60 {
            break;
        }
        let (c, hidden, classes) = (rng.random_range(1..=6), rng.random_range(1..=8), rng.random_range(2..=5));
        let (h, w) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let (fc1, fc2) = random_head(c, hidden, classes, &mut rng);
        let a = Tensor::from_fn([1, c, h, w], |_| rng.random_range(0.0..2.0));
        let class = rng.random_range(0..classes);
        let hw = h * w;
        let base: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
        let pooled: Vec<f64> = base.chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
        // central differences straddling a ReLU kink are meaningless
        if hidden_pre(&fc1, &pooled).iter().any(|z| z.abs() < 1e-4) {
            continue;
        }
        let g = head_gradient(HeadView { hidden: &fc1, output: &fc2 }, &a, class).map_err(|e| e.to_string())?;
        let step = 1e-3;
        for i in 0..base.len() {
            let (mut plus, mut minus) = (base.clone(), base.clone());
            plus[i] += step;
            minus[i] -= step;
            let fd = (head_logit(&fc1, &fc2, &plus, hw, class) - head_logit(&fc1, &fc2, &minus, hw, class)) / (2.0 * step);
            let err = (g.data()[i] as f64 - fd).abs() / fd.abs().max(1e-3);
            worst = worst.max(err);
            ensure(err <= FD_TOL, || format!("trial {trial} element {i}: analytic {} vs fd {fd}", g.data()[i]))?;
        }
        heads += 1;
    }
    ensure(heads >= 50, || format!("only {heads} heads checked"))?;

    let model = build_model(&ModelConfig::small(), 8).map_err(|e| e.to_string())?;
    let input = Tensor::from_fn([1, 3, 32, 32], |[_, c, y, x]| ((x * 7 + y * 3 + c * 11) % 17) as f32 / 8.0 - 1.0);
    let (class, a) = (0..NUM_CLASSES)
        .filter_map(|c| gradcam_map(&model, &input, Some(c)).ok().map(|m| (c, m)))
        .find(|(_, m)| m.raw_map.iter().any(|&v| v > 0.0))
        .ok_or("every class produced an empty map")?;
    let mut scaled = model.clone();
    let (_, fc2) = scaled.head_mut();
    let n = fc2.in_features;
    fc2.weight[class * n..(class + 1) * n].iter_mut().for_each(|v| *v *= 3.0);
    let b = gradcam_map(&scaled, &input, Some(class)).map_err(|e| e.to_string())?;
    for (x, y) in a.raw_map.iter().zip(&b.raw_map) {
        ensure((3.0 * x - y).abs() <= 1e-5 * y.abs().max(1.0), || format!("raw map {x} scaled to {y}"))?;
    }
    ensure(a.normalized_map == b.normalized_map, || "normalised map changed under scaling".into())?;
    Ok(format!("{heads} heads vs central differences (max rel err {worst:.1e} <= {FD_TOL:.0e}); scaling invariance on class {class}"))
}

fn profiler() -> Outcome {
    let skeleton = ModelGraph::skeleton(&ModelConfig::default()).map_err(|e| e.to_string())?;
    let cost = profile(&skeleton);
    let stem = cost.layers.iter().find(|l| l.kind == "conv").ok_or("no conv layer")?;
    ensure((stem.params, stem.macs) == (648, 8_128_512), || format!("stem {} params {} MACs", stem.params, stem.macs))?;
    let (params, macs) = (cost.total_params, cost.total_macs);
    ensure((2_000_000..=2_450_000).contains(&params), || format!("params {params}"))?;
    ensure((140_000_000..=165_000_000).contains(&macs), || format!("MACs {macs}"))?;

    let model = build_model(&ModelConfig::default(), 0).map_err(|e| e.to_string())?;
    let report = run_bench(&model, container_size(&model), 30, 10).map_err(|e| e.to_string())?;
    ensure(report.samples_ms.len() >= 30, || format!("{} samples", report.samples_ms.len()))?;
    ensure(report.p95_ms >= report.median_ms, || format!("p95 {} < median {}", report.p95_ms, report.median_ms))?;
    ensure(report.median_ms < 100.0, || format!("median forward {:.1} ms", report.median_ms))?;
    Ok(format!(
        "stem 648/8128512; params {:.3}M (published {REFERENCE_PARAMS_M}M), MACs {:.2}M (published {REFERENCE_MMACS}M); \
         forward median {:.2} ms, p95 {:.2} ms over {} runs",
        cost.params_millions(),
        cost.mmacs(),
        report.median_ms,
        report.p95_ms,
        report.samples_ms.len()
    ))
}

fn metrics_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let k = NUM_CLASSES;
    for set in 0..120 {
        let n = rng.random_range(1..400);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = truth.iter().map(|&t| if rng.random_bool(0.7) { t } else { rng.random_range(0..k) }).collect();
        let cm = confusion(&truth, &pred, k).map_err(|e| e.to_string())?;
        let per = precision_recall_f1(&cm).map_err(|e| e.to_string())?;
        let mut f1_sum = 0.0;
        for (c, m) in per.iter().enumerate() {
            let tp = truth.iter().zip(&pred).filter(|&(&t, &p)| t == c && p == c).count() as u64;
            let fp = truth.iter().zip(&pred).filter(|&(&t, &p)| t != c && p == c).count() as u64;
            let fn_ = truth.iter().zip(&pred).filter(|&(&t, &p)| t == c && p != c).count() as u64;
            let r = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let want = (r(tp, tp + fp), r(tp, tp + fn_), r(2 * tp, 2 * tp + fp + fn_));
            let tn = n as u64 - tp - fp - fn_;
            let ovr = one_vs_rest_accuracy(&cm, c).map_err(|e| e.to_string())?;
            ensure(ovr == r(tp + tn, n as u64), || format!("set {set} class {c}: one-vs-rest accuracy {ovr}"))?;
            ensure((m.precision, m.recall, m.f1) == want, || format!("set {set} class {c}: {m:?} vs {want:?}"))?;
            f1_sum += want.2;
        }
        let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
        let acc = accuracy(&cm).map_err(|e| e.to_string())?;
        ensure(acc == correct as f64 / n as f64, || format!("set {set}: accuracy {acc}"))?;
        let mf1 = macro_f1(&cm).map_err(|e| e.to_string())?;
        ensure((mf1 - f1_sum / k as f64).abs() <= 1e-12, || format!("set {set}: macro F1 {mf1}"))?;

        let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..50) as f64) / 50.0).collect();
        let positive: Vec<bool> = truth.iter().map(|&t| t == set % k).collect();
        let (pos, neg) = (positive.iter().filter(|&&p| p).count(), positive.iter().filter(|&&p| !p).count());
        if pos > 0 && neg > 0 {
            let mut wins = 0.0;
            for (i, &pi) in positive.iter().enumerate() {
                for (j, &pj) in positive.iter().enumerate() {
                    if pi && !pj {
                        wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                            std::cmp::Ordering::Greater => 1.0,
                            std::cmp::Ordering::Equal => 0.5,
                            std::cmp::Ordering::Less => 0.0,
                        };
                    }
                }
            }
            let want = wins / (pos * neg) as f64;
            let auc = roc_auc(&scores, &positive).map_err(|e| e.to_string())?.auc;
            ensure((auc - want).abs() <= 1e-9, || format!("set {set}: AUC {auc} vs pair count {want}"))?;
        }
    }
    let (lo, hi) = wilson_ci(95, 100, Z_95).map_err(|e| e.to_string())?;
    ensure((lo - 0.888).abs() <= 1e-3 && (hi - 0.978).abs() <= 1e-3, || format!("Wilson (95, 100) = ({lo}, {hi})"))?;
    Ok(format!("120 random 17-class sets exact, AUC within 1e-9 of pair counts, Wilson(95,100) = ({lo:.4}, {hi:.4})"))
}

fn tpe_history(transform: impl Fn(f64) -> f64, cfg: &TpeConfig, n: usize) -> Result<Vec<TrialRecord>, String> {
    let space = SearchSpace::default();
    let mut history: Vec<TrialRecord> = Vec::new();
    for number in 0..n {
        let a: Assignment = suggest(&history, &space, cfg).map_err(|e| e.to_string())?;
        space.check(&a).map_err(|e| format!("trial {number} out of bounds: {e}"))?;
        let objective = transform(synthetic_objective(&a));
        history.push(TrialRecord {
            number,
            assignment: a,
            objective,
            state: TrialState::Completed,
        });
    }
    Ok(history)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    (v[v.len() / 2 - 1] + v[v.len() / 2]) / 2.0
}

fn tpe_checks() -> Outcome {
    let cfg = TpeConfig { seed: 11, ..TpeConfig::default() };
    let assignments = |h: Vec<TrialRecord>| h.into_iter().map(|t| t.assignment).collect::<Vec<_>>();
    let base = assignments(tpe_history(|x| x, &cfg, 30)?);
    ensure(base == assignments(tpe_history(|x| (2.0 * x + 1.0).exp(), &cfg, 30)?), || "exp transform changed suggestions".into())?;
    ensure(base == assignments(tpe_history(|x| x.sqrt() - 4.0, &cfg, 30)?), || "sqrt transform changed suggestions".into())?;

    let best = |cfg: TpeConfig| -> Result<f64, String> {
        Ok(tpe_history(|x| x, &cfg, 40)?.iter().map(|t| t.objective).fold(f64::INFINITY, f64::min))
    };
    let mut tpe = Vec::new();
    let mut random = Vec::new();
    for seed in 0..20 {
        tpe.push(best(TpeConfig { seed, ..TpeConfig::default() })?);
        random.push(best(TpeConfig { seed, n_startup: usize::MAX, ..TpeConfig::default() })?);
    }
    let (t, r) = (median(tpe), median(random));
    ensure(t <= r, || format!("TPE median best {t:.4} vs random {r:.4}"))?;
    Ok(format!("monotone-transform invariant; median best-of-40 TPE {t:.4} <= random {r:.4}; all suggestions in bounds"))
}

fn protocol_math() -> Outcome {
    let (max, min) = (6.17e-4, 1e-6);
    let at = |t| cosine_lr(t, 100, max, min).map_err(|e| e.to_string());
    let (start, end) = (at(0)?, at(100)?);
    ensure((start - max).abs() <= 1e-12 && (end - min).abs() <= 1e-12, || format!("cosine endpoints {start} {end}"))?;
    let mid = at(50)?;
    ensure((mid - (max + min) / 2.0).abs() <= 1e-12, || format!("cosine midpoint {mid}"))?;

    let mut es = EarlyStopping::new(10).map_err(|e| e.to_string())?;
    ensure(!es.step(1.0), || "stopped on first epoch".into())?;
    for epoch in 1..=10 {
        let stop = es.step(1.0 + epoch as f64 * 0.01);
        ensure(stop == (epoch == 10), || format!("stop = {stop} after non-improving epoch {epoch}"))?;
    }
    let ce = label_smooth_ce(&[0.0; 17], 3, 0.052).map_err(|e| e.to_string())?;
    ensure((ce - 17f64.ln()).abs() <= 1e-9, || format!("uniform-logit loss {ce}"))?;
    Ok(format!("cosine 0/50/100 ok; early stop at 10th flat epoch; uniform CE {ce:.9} = ln 17"))
}

fn leaf_png() -> Vec<u8> {
    let img = image::RgbImage::from_fn(64, 48, |x, y| image::Rgb([40 + (x * 2) as u8, 120 + y as u8, 30]));
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png).unwrap();
    out
}

async fn call(app: &Router, req: Request<Body>) -> Result<(StatusCode, Value), String> {
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.map_err(|e| e.to_string())?;
    Ok((status, serde_json::from_slice(&bytes).unwrap_or(Value::Null)))
}

async fn service_contract() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.cnew");
    let model = build_model(&ModelConfig::small(), 4).map_err(|e| e.to_string())?;
    save_weights_to_file(&model, &path).map_err(|e| e.to_string())?;
    let loaded = load_model(&path, None).map_err(|e| e.to_string())?;
    // a closed port: the provider is unreachable
    let dead = std::net::TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let url = format!("http://{}/advice", dead.local_addr().map_err(|e| e.to_string())?);
    drop(dead);
    let app = router(AppState::with_model(loaded, RecoProvider::new(Some(url), None, Duration::from_secs(5))), None);

    let boundary = "acceptance-boundary";
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"leaf.png\"\r\nContent-Type: image/png\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(&leaf_png());
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let req = Request::post("/predict")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .map_err(|e| e.to_string())?;
    let (status, v) = call(&app, req).await?;
    ensure(status == StatusCode::OK, || format!("/predict {status}: {v}"))?;
    let p: Prediction = serde_json::from_value(v).map_err(|e| e.to_string())?;
    ensure(p.top5.len() == 5 && p.top5.windows(2).all(|w| w[0].confidence >= w[1].confidence), || "top5 not descending".into())?;
    let sum: f64 = p.top5.iter().map(|s| s.confidence as f64).sum();
    ensure(sum <= 1.0 + 1e-6, || format!("top5 sum {sum}"))?;
    let png = base64::engine::general_purpose::STANDARD.decode(&p.gradcam).map_err(|e| e.to_string())?;
    image::load_from_memory(&png).map_err(|e| format!("gradcam PNG: {e}"))?;

    let (status, v) = call(&app, Request::get("/classes").body(Body::empty()).unwrap()).await?;
    let n = v.as_array().map_or(0, Vec::len);
    ensure(status == StatusCode::OK && n == 17, || format!("/classes {status} with {n} names"))?;

    for name in CLASS_NAMES {
        let req = Request::post("/recommend")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(json!({ "disease": name }).to_string()))
            .unwrap();
        let (status, v) = call(&app, req).await?;
        ensure(status == StatusCode::OK, || format!("/recommend {name}: {status}"))?;
        ensure(v["source"] == "local", || format!("{name}: source {}", v["source"]))?;
        for s in ["cause", "immediate_steps", "long_term_control"] {
            ensure(v["sections"][s].as_str().is_some_and(|t| !t.trim().is_empty()), || format!("{name}: empty {s}"))?;
        }
    }
    Ok(format!("top5 sum {sum:.4}, PNG decodes, 17 classes, 17 local recommendations with the provider unreachable"))
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    let criteria: Vec<Criterion> = vec![
        ("curation plan reproduces per-class counts", Duration::from_secs(1), Box::new(curation_plan)),
        ("dedup fixture keeps f1, f4, f5", Duration::from_secs(1), Box::new(dedup_fixture)),
        ("tensor kernels match naive oracles", Duration::from_secs(60), Box::new(kernel_oracles)),
        ("grad-cam gradient and scaling invariance", Duration::from_secs(60), Box::new(gradcam_checks)),
        ("profiler counts and forward latency", Duration::from_secs(120), Box::new(profiler)),
        ("metrics against direct counting", Duration::from_secs(60), Box::new(metrics_checks)),
        ("tpe invariance and random-search baseline", Duration::from_secs(120), Box::new(tpe_checks)),
        ("training protocol math", Duration::from_secs(1), Box::new(protocol_math)),
        ("http service contract", Duration::from_secs(60), Box::new(|| rt.block_on(service_contract()))),
    ];
    let mut failed = 0;
    for (name, budget, check) in &criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *budget => Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}  [{elapsed:.2?}]  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}  [{elapsed:.2?}]  {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
