//! `cane` subcommands. Each prints a summary and writes its outputs to files.

use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cane_core::curation::{curate, CurateOptions, CurationPlan};
use cane_core::hpo::{best, synthetic_objective, SearchSpace, Study, TpeConfig, TrialState};
use cane_core::metrics::{confusion, report};
use cane_core::model::{build_model, export_embeddings, profile, save_weights_to_file, EmbeddingItem};
use cane_core::{class_index, ModelConfig, CLASS_NAMES, NUM_CLASSES};

use crate::bench::run_bench;
use crate::infer::{explain_bytes, load_model, read_config, top_k, LoadedModel};
use crate::reco::{RecoProvider, DEFAULT_TIMEOUT};
use crate::server::{serve, ServeOptions};

/// A bad argument discovered after parsing; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "cane", version, about = "Sugarcane leaf-disease toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Weight container (.cnew)
    pub model: PathBuf,
    /// Model config JSON; by default the standard and small layouts are tried
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> anyhow::Result<LoadedModel> {
        let cfg = self.config.as_ref().map(read_config).transpose()?;
        load_model(&self.model, cfg.as_ref())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deduplicate, split, rename and augment a `<class>/<image>` corpus
    Curate {
        input: PathBuf,
        #[arg(long, default_value = "curated")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// Largest dHash distance treated as a near duplicate
        #[arg(long, default_value_t = 5)]
        threshold: u32,
        /// Only write the plan, no augmented images
        #[arg(long)]
        no_augment: bool,
    },
    /// Split and augmentation plan from a `class,count` CSV
    SplitPlan {
        counts: PathBuf,
        #[arg(long, default_value = "split_plan.json")]
        out: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
    /// Metrics from prediction and label CSVs joined on `id`
    Eval {
        /// `id,predicted[,<class>...]` with optional per-class probability columns
        preds: PathBuf,
        /// `id,label`
        labels: PathBuf,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Single-image latency and cost report
    Bench {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(30..))]
        runs: u64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(10..))]
        warmup: u64,
        #[arg(long, default_value = "bench.json")]
        out: PathBuf,
    },
    /// Grad-CAM overlay for one image
    Explain {
        #[command(flatten)]
        model: ModelArgs,
        image: PathBuf,
        /// Class name or index; the predicted class when omitted
        class: Option<String>,
        #[arg(long, default_value = "explain.png")]
        out: PathBuf,
    },
    /// HTTP API and static UI
    Serve {
        /// Weight container
        #[arg(env = "MODEL_PATH")]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::UNSPECIFIED))]
        host: IpAddr,
        #[arg(long, env = "RECO_ENDPOINT")]
        reco_endpoint: Option<String>,
        #[arg(long, env = "RECO_KEY", hide_env_values = true)]
        reco_key: Option<String>,
        /// Built web UI bundle
        #[arg(long, default_value = "web-ui/dist")]
        static_dir: PathBuf,
    },
    /// Write a randomly initialised weight container
    Init {
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Narrow 32×32 variant
        #[arg(long)]
        small: bool,
    },
    /// Penultimate features for every image under `<dir>/<class>/`
    Embed {
        #[command(flatten)]
        model: ModelArgs,
        dir: PathBuf,
        #[arg(long, default_value = "embeddings.csv")]
        out: PathBuf,
    },
    /// Per-layer parameter and MAC table
    Profile {
        /// Weight container; the default layout when omitted
        model: Option<PathBuf>,
        #[arg(long)]
        small: bool,
        #[arg(long, default_value = "profile.json")]
        out: PathBuf,
    },
    /// Hyperparameter search on the synthetic objective
    Tune {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON-lines study file; resumed if it exists
        #[arg(long, default_value = "study.jsonl")]
        study: PathBuf,
    },
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Curate {
            input,
            out,
            seed,
            train_fraction,
            threshold,
            no_augment,
        } => cmd_curate(&input, &out, seed, train_fraction, threshold, !no_augment),
        Command::SplitPlan { counts, out, train_fraction } => cmd_split_plan(&counts, &out, train_fraction),
        Command::Eval { preds, labels, out } => cmd_eval(&preds, &labels, &out),
        Command::Bench { model, runs, warmup, out } => {
            let loaded = model.load()?;
            let r = run_bench(&loaded.model, loaded.file_size, runs as usize, warmup as usize)?;
            println!("{r}");
            write_json(&out, &r)
        }
        Command::Explain { model, image, class, out } => cmd_explain(&model, &image, class.as_deref(), &out),
        Command::Serve {
            model,
            config,
            port,
            host,
            reco_endpoint,
            reco_key,
            static_dir,
        } => {
            let config = config.as_ref().map(read_config).transpose()?;
            let opts = ServeOptions {
                model_path: model,
                config,
                addr: SocketAddr::new(host, port),
                static_dir: Some(static_dir),
                reco: RecoProvider::new(reco_endpoint, reco_key, DEFAULT_TIMEOUT),
            };
            tokio::runtime::Runtime::new()?.block_on(serve(opts))
        }
        Command::Init { out, seed, small } => {
            let cfg = if small { ModelConfig::small() } else { ModelConfig::default() };
            let model = build_model(&cfg, seed)?;
            save_weights_to_file(&model, &out)?;
            println!("wrote {} ({} bytes)", out.display(), std::fs::metadata(&out)?.len());
            Ok(())
        }
        Command::Embed { model, dir, out } => cmd_embed(&model, &dir, &out),
        Command::Profile { model, small, out } => {
            let graph = match model {
                Some(path) => load_model(path, None)?.model,
                None => cane_core::model::ModelGraph::skeleton(&if small { ModelConfig::small() } else { ModelConfig::default() })?,
            };
            let r = profile(&graph);
            for l in &r.layers {
                println!("{:<28}{:<9}{:>10}{:>14}  {:?}", l.name, l.kind, l.params, l.macs, l.output);
            }
            println!("total: {:.3}M params, {:.2} MMac, {:.2} MB", r.params_millions(), r.mmacs(), r.file_size_mb());
            write_json(&out, &r)
        }
        Command::Tune { trials, seed, study } => {
            let config = TpeConfig { seed, ..TpeConfig::default() };
            let mut s = Study::open(&study, SearchSpace::default(), config)?;
            while s.history.len() < trials {
                let a = s.ask()?;
                let y = synthetic_objective(&a);
                let t = s.tell(a, y, TrialState::Completed)?;
                println!("trial {:>3}  objective {:.6}", t.number, t.objective);
            }
            let b = best(&s.history)?;
            println!("best trial {} objective {:.6}", b.number, b.objective);
            println!("{}", serde_json::to_string_pretty(&b.assignment)?);
            Ok(())
        }
    }
}

fn cmd_curate(input: &Path, out: &Path, seed: u64, train_fraction: f64, threshold: u32, augment: bool) -> anyhow::Result<()> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(usage(format!("--train-fraction {train_fraction} must lie in (0, 1)")));
    }
    let opts = CurateOptions {
        seed,
        train_fraction,
        threshold,
        augment,
    };
    let r = curate(input, out, &opts)?;
    println!("scanned {} images, skipped {}", r.scanned, r.skipped.len());
    println!("removed {} exact and {} near duplicates; {} survivors", r.exact_removed, r.near_removed, r.survivors);
    println!("train {} test {}; {} augmented images written", r.plan.total_train(), r.plan.total_test(), r.augmented_written);
    println!("removal report: {}", out.join("removals.csv").display());
    Ok(())
}

fn print_plan(plan: &CurationPlan) {
    println!("{:<18}{:>9}{:>7}{:>7}{:>8}{:>8}", "class", "original", "train", "test", "factor", "final");
    for c in &plan.classes {
        println!("{:<18}{:>9}{:>7}{:>7}{:>8}{:>8}", c.class, c.original, c.train, c.test, c.factor, c.final_train);
    }
    println!(
        "{:<18}{:>9}{:>7}{:>7}{:>8}{:>8}",
        "total",
        plan.total_original(),
        plan.total_train(),
        plan.total_test(),
        "",
        plan.total_final()
    );
    println!("imbalance {:.2}:1 -> {:.2}:1", plan.original_imbalance(), plan.final_imbalance());
}

fn cmd_split_plan(counts: &Path, out: &Path, train_fraction: f64) -> anyhow::Result<()> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(usage(format!("--train-fraction {train_fraction} must lie in (0, 1)")));
    }
    let mut reader = csv::Reader::from_path(counts).with_context(|| format!("reading {}", counts.display()))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let (Some(class), Some(n)) = (rec.get(0), rec.get(1)) else {
            bail!("{}: expected class,count rows", counts.display());
        };
        let n: usize = n.trim().parse().with_context(|| format!("count {n:?} for {class}"))?;
        rows.push((class.trim().to_string(), n));
    }
    let plan = CurationPlan::skeleton(&rows, train_fraction).with_augmentation();
    print_plan(&plan);
    write_json(out, &plan)
}

fn resolve_class(value: &str) -> anyhow::Result<usize> {
    class_index(value).ok_or_else(|| anyhow!("unknown class {value:?}"))
}

fn cmd_eval(preds: &Path, labels: &Path, out: &Path) -> anyhow::Result<()> {
    let mut lr = csv::Reader::from_path(labels).with_context(|| format!("reading {}", labels.display()))?;
    let lh = lr.headers()?.clone();
    let (Some(id_col), Some(label_col)) = (lh.iter().position(|h| h == "id"), lh.iter().position(|h| h == "label")) else {
        bail!("{}: need id and label columns", labels.display());
    };
    let mut truth_by_id = HashMap::new();
    for rec in lr.records() {
        let rec = rec?;
        truth_by_id.insert(rec[id_col].to_string(), resolve_class(&rec[label_col])?);
    }

    let mut pr = csv::Reader::from_path(preds).with_context(|| format!("reading {}", preds.display()))?;
    let ph = pr.headers()?.clone();
    let id_col = ph.iter().position(|h| h == "id").ok_or_else(|| anyhow!("{}: no id column", preds.display()))?;
    let pred_col = ph
        .iter()
        .position(|h| h == "predicted")
        .ok_or_else(|| anyhow!("{}: no predicted column", preds.display()))?;
    let mut score_cols = vec![None; NUM_CLASSES];
    for (i, h) in ph.iter().enumerate() {
        if i != id_col && i != pred_col {
            if let Some(c) = class_index(h).filter(|_| h.parse::<usize>().is_err()) {
                score_cols[c] = Some(i);
            }
        }
    }
    let have_scores = score_cols.iter().all(Option::is_some);

    let (mut truth, mut predicted, mut scores) = (Vec::new(), Vec::new(), Vec::new());
    for rec in pr.records() {
        let rec = rec?;
        let id = &rec[id_col];
        let t = *truth_by_id.get(id).ok_or_else(|| anyhow!("prediction {id:?} has no label"))?;
        truth.push(t);
        predicted.push(resolve_class(&rec[pred_col])?);
        if have_scores {
            let row = score_cols
                .iter()
                .map(|c| rec[c.expect("all present")].trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("scores for {id:?}"))?;
            scores.push(row);
        }
    }
    if truth.len() != truth_by_id.len() {
        bail!("{} labels but {} predictions", truth_by_id.len(), truth.len());
    }
    let cm = confusion(&truth, &predicted, NUM_CLASSES)?;
    let r = report(&cm, &CLASS_NAMES, have_scores.then_some((scores.as_slice(), truth.as_slice())))?;
    println!("samples {}", r.samples);
    println!("accuracy {:.4}", r.accuracy);
    println!("macro_f1 {:.4}", r.macro_f1);
    println!("weighted_f1 {:.4}", r.weighted_f1);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("report.json"), r.to_json())?;
    std::fs::write(out.join("report.csv"), r.to_csv())?;
    let mut w = csv::Writer::from_path(out.join("confusion.csv"))?;
    w.write_record(std::iter::once("truth").chain(CLASS_NAMES))?;
    for (i, row) in cm.rows().iter().enumerate() {
        w.write_record(std::iter::once(CLASS_NAMES[i].to_string()).chain(row.iter().map(u64::to_string)))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ExplainSummary {
    image: String,
    target_class: String,
    target_index: usize,
    top5: Vec<(String, f32)>,
    cam_height: usize,
    cam_width: usize,
    overlay: String,
}

fn cmd_explain(model: &ModelArgs, image: &Path, class: Option<&str>, out: &Path) -> anyhow::Result<()> {
    let target = class
        .map(|c| class_index(c).ok_or_else(|| usage(format!("unknown class {c:?}"))))
        .transpose()?;
    let loaded = model.load()?;
    let bytes = std::fs::read(image).with_context(|| format!("reading {}", image.display()))?;
    let cam = explain_bytes(&loaded.model, &bytes, target)?;
    std::fs::write(out, cam.overlay_png()).with_context(|| format!("writing {}", out.display()))?;
    let summary = ExplainSummary {
        image: image.display().to_string(),
        target_class: CLASS_NAMES[cam.target_class].to_string(),
        target_index: cam.target_class,
        top5: top_k(&cam.probabilities, 5)
            .into_iter()
            .map(|i| (CLASS_NAMES[i].to_string(), cam.probabilities[i]))
            .collect(),
        cam_height: cam.height,
        cam_width: cam.width,
        overlay: out.display().to_string(),
    };
    println!("explained class: {} ({})", summary.target_class, summary.target_index);
    println!("overlay: {}", out.display());
    write_json(&out.with_extension("json"), &summary)
}

fn cmd_embed(model: &ModelArgs, dir: &Path, out: &Path) -> anyhow::Result<()> {
    let loaded = model.load()?;
    let mut items = Vec::new();
    let mut classes: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .collect::<std::io::Result<Vec<_>>>()?;
    classes.sort_by_key(|e| e.path());
    for class_dir in classes.into_iter().filter(|e| e.path().is_dir()) {
        let label = class_dir.file_name().to_string_lossy().into_owned();
        let mut files: Vec<PathBuf> = std::fs::read_dir(class_dir.path())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for path in files {
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            items.push(EmbeddingItem {
                id,
                label: label.clone(),
                path,
            });
        }
    }
    let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let summary = export_embeddings(&loaded.model, &items, std::io::BufWriter::new(file))?;
    println!("{} rows of {} features written to {}; {} skipped", summary.rows, summary.dims, out.display(), summary.skipped.len());
    Ok(())
}
