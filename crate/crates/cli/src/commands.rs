use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sctc_core::builder::{self, BuildConfig, Corpus};
use sctc_core::eval::{evaluate_split, render_table, write_rank_dump, EvalContext, MetricsReport};
use sctc_core::event::Split;
use sctc_core::model::{self, write_train_log, LogoModel, ModelConfig, TrainOutcome, VariantRegistry};
use sctc_core::synthetic;
use sctc_core::Dataset;
use sctc_extract::{self as extract, Hierarchy, TransportRegistry};
use serde::{Deserialize, Serialize};

use crate::config::{config_err, existing, RunConfig};
use crate::CliError;

/// Order of the rows in the ablation table.
const ABLATION_ORDER: [&str; 5] = ["local", "global", "share", "late", "full"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write(&out.join("resolved_config.toml"), cfg.to_toml())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let dir = existing("dataset.dir", cfg.dataset.dir.as_ref())?;
    let ds = Dataset::load(&dir)?;
    ds.validate()?;
    Ok(ds)
}

/// Everything needed to rebuild a model before loading its checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelFile {
    seed: u64,
    entities: usize,
    relations: usize,
    model: ModelConfig,
}

/// Plain-text metric report. Floats use the shortest exact decimal form so
/// equal reports mean bitwise-equal numbers.
fn metrics_text(split: Split, m: &MetricsReport) -> String {
    format!(
        "split\t{split}\nqueries\t{}\nmrr\t{}\nhit@1\t{}\nhit@3\t{}\nhit@10\t{}\n",
        m.n_queries, m.mrr, m.hit1, m.hit3, m.hit10
    )
}

struct TrainedRun {
    outcome: TrainOutcome,
    test: MetricsReport,
}

/// Trains with `cfg`, writes the run artifacts into `out` and scores the
/// best checkpoint on the test split.
fn train_into(ds: &Dataset, cfg: &RunConfig, out: &Path) -> Result<TrainedRun, CliError> {
    prepare_out(out, cfg)?;
    let registry = VariantRegistry::builtin();
    let started = Instant::now();
    let outcome = model::train_with(ds, &cfg.model, &cfg.train_config(), &registry, |e| {
        log::info!(
            "[{}] epoch {:>3}  loss {:.5}  val MRR {:.4}",
            cfg.model.variant,
            e.epoch,
            e.train_loss,
            e.val_mrr
        );
    })?;
    log::info!(
        "[{}] best epoch {} val MRR {:.4} after {:.1}s",
        cfg.model.variant,
        outcome.best_epoch,
        outcome.best_val_mrr,
        started.elapsed().as_secs_f64()
    );

    let mf = ModelFile {
        seed: cfg.seed,
        entities: ds.vocab.num_entities(),
        relations: ds.vocab.num_relations(),
        model: cfg.model.clone(),
    };
    write(&out.join("model.toml"), toml::to_string_pretty(&mf).expect("model file serializes"))?;
    let ckpt = out.join("model.ckpt");
    outcome.model.save_params(create(&ckpt)?)?;
    write_train_log(create(&out.join("train_log.tsv"))?, &outcome.log).map_err(io_err(out))?;

    let ctx = EvalContext::new(ds);
    let test = evaluate_split(&outcome.model, &ctx, ds, Split::Test)?;
    let mut report = format!("best_epoch\t{}\nbest_val_mrr\t{}\n", outcome.best_epoch, outcome.best_val_mrr);
    report.push_str(&metrics_text(Split::Test, &test.report));
    write(&out.join("metrics.txt"), report)?;
    write_rank_dump(create(&out.join("ranks.tsv"))?, &test.ranks).map_err(io_err(out))?;
    Ok(TrainedRun {
        outcome,
        test: test.report,
    })
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(cfg)?;
    let run = train_into(&ds, cfg, out)?;
    print!(
        "{}",
        render_table(&[(cfg.model.variant.clone(), run.test)])
    );
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ckpt_dir = existing("eval.checkpoint", cfg.eval.checkpoint.as_ref())?;
    let split: Split = cfg
        .eval
        .split
        .parse()
        .map_err(|_| config_err("eval.split", format!("expected train, val or test, got {:?}", cfg.eval.split)))?;
    let ds = load_dataset(cfg)?;

    let mf_path = ckpt_dir.join("model.toml");
    let text = fs::read_to_string(&mf_path).map_err(io_err(&mf_path))?;
    let mf: ModelFile = toml::from_str(&text).map_err(|e| CliError::Config {
        field: mf_path.display().to_string(),
        reason: e.message().to_string(),
    })?;
    if (mf.entities, mf.relations) != (ds.vocab.num_entities(), ds.vocab.num_relations()) {
        return Err(config_err(
            "dataset.dir",
            format!(
                "checkpoint expects {} entities and {} relations, dataset has {} and {}",
                mf.entities,
                mf.relations,
                ds.vocab.num_entities(),
                ds.vocab.num_relations()
            ),
        ));
    }
    if mf.model.variant != cfg.model.variant {
        log::info!("using the checkpoint's variant {:?}", mf.model.variant);
    }
    let mut model = LogoModel::new(mf.model.clone(), mf.entities, mf.relations, &VariantRegistry::builtin(), mf.seed)?;
    let ckpt = ckpt_dir.join("model.ckpt");
    model.load_params(fs::File::open(&ckpt).map_err(io_err(&ckpt))?)?;

    prepare_out(out, cfg)?;
    let ctx = EvalContext::new(&ds);
    let ev = evaluate_split(&model, &ctx, &ds, split)?;
    write(&out.join("metrics.txt"), metrics_text(split, &ev.report))?;
    write_rank_dump(create(&out.join("ranks.tsv"))?, &ev.ranks).map_err(io_err(out))?;
    print!("{}", render_table(&[(mf.model.variant, ev.report)]));
    Ok(())
}

pub fn ablate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let ds = load_dataset(cfg)?;
    prepare_out(out, cfg)?;
    let mut rows = Vec::new();
    let mut tsv = String::from("variant\tbest_epoch\tval_mrr\tmrr\thit@1\thit@3\thit@10\n");
    for variant in ABLATION_ORDER {
        let mut c = cfg.clone();
        c.model.variant = variant.to_string();
        let run = train_into(&ds, &c, &out.join(variant))?;
        let t = run.test;
        let _ = writeln!(
            tsv,
            "{variant}\t{}\t{}\t{}\t{}\t{}\t{}",
            run.outcome.best_epoch, run.outcome.best_val_mrr, t.mrr, t.hit1, t.hit3, t.hit10
        );
        rows.push((variant.to_string(), t));
    }
    let table = render_table(&rows);
    write(&out.join("ablation.txt"), &table)?;
    write(&out.join("ablation.tsv"), tsv)?;
    print!("{table}");
    Ok(())
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

pub fn grid_search(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let g = &cfg.grid;
    if g.lr.is_empty() && g.weight_decay.is_empty() && g.history.is_empty() && g.layers.is_empty() {
        return Err(config_err("grid", "give at least one of lr, weight_decay, history, layers"));
    }
    let ds = load_dataset(cfg)?;
    prepare_out(out, cfg)?;

    let mut trials = Vec::new();
    for &lr in &or_base(&g.lr, cfg.train.lr) {
        for &wd in &or_base(&g.weight_decay, cfg.train.weight_decay) {
            for &hist in &or_base(&g.history, cfg.model.history_local) {
                for &layers in &or_base(&g.layers, cfg.model.layers_local) {
                    let mut c = cfg.clone();
                    c.train.lr = lr;
                    c.train.weight_decay = wd;
                    if !g.history.is_empty() {
                        c.model.history_local = hist;
                        c.model.history_global = hist;
                    }
                    if !g.layers.is_empty() {
                        c.model.layers_local = layers;
                        c.model.layers_global = layers;
                    }
                    trials.push(c);
                }
            }
        }
    }

    let mut results = Vec::new();
    for (i, c) in trials.iter().enumerate() {
        log::info!("trial {}/{}: lr {} wd {}", i + 1, trials.len(), c.train.lr, c.train.weight_decay);
        let run = train_into(&ds, c, &out.join(format!("trial_{i:02}")))?;
        results.push(run);
    }
    // Strictly greater wins, so the earliest trial keeps ties.
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.outcome.best_val_mrr > results[best].outcome.best_val_mrr {
            best = i;
        }
    }

    let mut tsv = String::from("trial\tlr\tweight_decay\thistory\tlayers\tbest_epoch\tval_mrr\ttest_mrr\tbest\n");
    for (i, (c, r)) in trials.iter().zip(&results).enumerate() {
        let _ = writeln!(
            tsv,
            "{i}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.train.lr,
            c.train.weight_decay,
            c.model.history_local,
            c.model.layers_local,
            r.outcome.best_epoch,
            r.outcome.best_val_mrr,
            r.test.mrr,
            if i == best { "*" } else { "" }
        );
    }
    write(&out.join("grid.tsv"), &tsv)?;
    print!("{tsv}");
    Ok(())
}

pub fn build_dataset(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let b = &cfg.build;
    let docs = builder::read_docs(&existing("build.docs", b.docs.as_ref())?)?;
    let embeddings = builder::read_embeddings(&existing("build.embeddings", b.embeddings.as_ref())?)?;
    let events = builder::read_doc_events(&existing("build.events", b.events.as_ref())?)?;
    let corpus = Corpus {
        docs,
        embeddings,
        events,
    };
    let bc = BuildConfig {
        cluster: b.cluster,
        split: b.split,
        filter: b.filter,
    };
    let built = builder::build_dataset(&corpus, &bc, b.epoch)?;
    prepare_out(out, cfg)?;
    built.dataset.save(out)?;
    builder::write_assignment(&out.join("assignment.tsv"), &corpus.docs, &built.assignment)?;

    let reloaded = Dataset::load(out)?;
    reloaded.validate()?;
    let clusters: BTreeSet<usize> = built.assignment.iter().flatten().copied().collect();
    let noise = built.assignment.iter().filter(|a| a.is_none()).count();
    println!(
        "{} documents: {} clusters, {} outlier documents",
        corpus.docs.len(),
        clusters.len(),
        noise
    );
    for split in Split::ALL {
        println!(
            "{split}: {} CEs, {} events",
            reloaded.splits.get(split).len(),
            reloaded.split_events(split).len()
        );
    }
    println!("outliers: {} events", reloaded.outliers.len());
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let s = &cfg.synth;
    match s.kind.as_str() {
        "modular" => {
            synthetic::modular_dataset(s.modular, cfg.seed)?.save(out)?;
        }
        "contradiction" => {
            synthetic::contradiction_dataset(s.contradiction, cfg.seed)?.save(out)?;
        }
        "documents" => {
            let corpus = synthetic::document_corpus(s.documents, cfg.seed);
            fs::create_dir_all(out).map_err(io_err(out))?;
            builder::write_docs(&out.join("docs.tsv"), &corpus.docs)?;
            builder::write_embeddings(&out.join("embeddings.bin"), &corpus.embeddings)?;
            let path = out.join("events.tsv");
            builder::write_doc_events(create(&path)?, &corpus.events).map_err(io_err(&path))?;
        }
        other => {
            return Err(config_err(
                "synth.kind",
                format!("expected modular, contradiction or documents, got {other:?}"),
            ))
        }
    }
    write(&out.join("resolved_config.toml"), cfg.to_toml())?;
    println!("wrote {} corpus to {}", s.kind, out.display());
    Ok(())
}

fn transport(cfg: &RunConfig) -> Result<std::sync::Arc<dyn extract::Transport>, CliError> {
    let t = &cfg.transport;
    if let Some(p) = &t.path {
        existing("transport.path", Some(p))?;
    }
    Ok(TransportRegistry::builtin().create(&t.name, &t.settings())?)
}

pub fn extract(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let e = &cfg.extract;
    let articles = extract::read_articles(&existing("extract.articles", e.articles.as_ref())?)?;
    let hierarchy = match &e.hierarchy {
        Some(dir) => Hierarchy::load(&existing("extract.hierarchy", Some(dir))?)?,
        None => Hierarchy::cameo_roots(),
    };
    let transport = transport(cfg)?;
    prepare_out(out, cfg)?;
    let result = extract::extract_corpus(&articles, &hierarchy, transport.as_ref(), e.workers)?;

    let docs = articles
        .iter()
        .map(|a| {
            let day = (a.date - e.epoch).num_days();
            let day = u32::try_from(day)
                .map_err(|_| config_err("extract.epoch", format!("article {} predates the epoch", a.doc_id)))?;
            Ok(builder::DocRecord {
                id: a.doc_id.clone(),
                day,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    builder::write_docs(&out.join("docs.tsv"), &docs)?;
    let path = out.join("events.tsv");
    builder::write_doc_events(create(&path)?, &result.doc_events()).map_err(io_err(&path))?;

    let mut report = format!(
        "articles\t{}\ncalls\t{}\nevents\t{}\nwarnings\t{}\n",
        articles.len(),
        result.calls(),
        result.events(),
        result.warnings()
    );
    let failures: Vec<&str> = result.failures().collect();
    let _ = writeln!(report, "failures\t{}", failures.len());
    for f in &failures {
        let _ = writeln!(report, "#\t{f}");
    }
    write(&out.join("extraction_report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

pub fn link_entities(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let path: PathBuf = existing("link.events", cfg.link.events.as_ref())?;
    let events = builder::read_doc_events(&path)?;
    let names: Vec<String> = events
        .iter()
        .flat_map(|e| [e.subject.clone(), e.object.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let transport = transport(cfg)?;
    prepare_out(out, cfg)?;
    let report = extract::link_entities(&names, &cfg.linking_config(), transport.as_ref())?;
    let map_path = out.join("link_map.json");
    write(&map_path, serde_json::to_string_pretty(&report.map).expect("map serializes") + "\n")?;
    let linked = out.join("events.tsv");
    builder::write_doc_events(create(&linked)?, &report.map.apply(&events)).map_err(io_err(&linked))?;
    for (i, r) in report.rounds.iter().enumerate() {
        println!(
            "round {}: {} batches, {} merged, {} malformed, {} failed",
            i + 1,
            r.batches,
            r.merged,
            r.malformed,
            r.failures
        );
    }
    println!("{} names -> {} canonical entities", names.len(), report.map.canonical.len());
    Ok(())
}
