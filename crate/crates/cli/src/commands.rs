use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use georeason_core::eval::micro_f1;
use georeason_core::geodata::{load_corpus, load_gazetteer, load_triples, annotate_corpus, EntityClass, Gazetteer};
use georeason_core::io;
use georeason_core::model::{load_checkpoint, save_checkpoint, Model, Vocab};
use georeason_core::pipeline::{
    build_corpus, corpus_vocab, evaluate_recognition, linking_recall, load_corpus_dir, run_demo, save_corpus, training_pairs,
    Corpus, CorpusFiles, Summarizer,
};
use georeason_core::pretrain::pretrain;
use georeason_core::summarizer::{raw_description, summarize_template, RemoteConfig, RemoteSummarizer, SummaryCache, SummarySource};
use georeason_core::synth::{generate_synthetic_world, write_world, WorldFiles};
use georeason_core::tasks::{
    build_linking_index, finetune_recognition, finetune_typing, link_toponym, load_typing_records, predict_type,
    recognition_examples, split_train_test, typing_samples, LinkingIndex, TypingSample,
};
use georeason_core::text::find_folded;
use serde::Serialize;
use serde_json::json;

use crate::{Ablate, Cli, Command, Failure, Manifest, RunConfig};

/// Artifact locations inside the output directory.
struct Layout {
    out: PathBuf,
}

impl Layout {
    fn world(&self) -> WorldFiles {
        WorldFiles::in_dir(&self.out.join("world"))
    }
    fn heldout_world(&self) -> PathBuf {
        self.out.join("world").join("heldout.jsonl")
    }
    fn corpus(&self) -> CorpusFiles {
        CorpusFiles::in_dir(&self.out)
    }
    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

struct Run<'a> {
    cfg: RunConfig,
    layout: Layout,
    manifest: Manifest,
    stdout: &'a mut dyn Write,
}

fn require(path: &Path, what: &str, hint: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::new(
            "missing_input",
            format!("{what} not found at {} (produced by `{hint}`)", path.display()),
        ))
    }
}

fn or_default(configured: &Option<PathBuf>, fallback: PathBuf) -> PathBuf {
    configured.clone().unwrap_or(fallback)
}

impl Run<'_> {
    fn gazetteer_path(&self) -> PathBuf {
        or_default(&self.cfg.paths.gazetteer, self.layout.world().gazetteer)
    }

    fn typing_path(&self) -> PathBuf {
        or_default(&self.cfg.paths.typing, self.layout.world().typing)
    }

    fn gazetteer(&mut self) -> Result<Gazetteer, Failure> {
        let p = self.gazetteer_path();
        require(&p, "gazetteer", "build-corpus --synthetic")?;
        self.manifest.input("gazetteer", &p)?;
        Ok(load_gazetteer(&p)?)
    }

    fn vocab(&mut self) -> Result<Vocab, Failure> {
        let p = self.layout.file("vocab.jsonl");
        require(&p, "vocabulary", "build-corpus")?;
        self.manifest.input("vocab", &p)?;
        Ok(Vocab::load(&p)?)
    }

    fn corpus(&mut self) -> Result<Corpus, Failure> {
        let files = self.layout.corpus();
        for (name, p) in ["paragraphs", "contexts", "descriptions"].into_iter().zip(files.all()) {
            require(p, name, "build-corpus")?;
            self.manifest.input(name, p)?;
        }
        Ok(load_corpus_dir(&self.layout.out)?)
    }

    fn model(&mut self, name: &str, hint: &str) -> Result<Model, Failure> {
        let p = self.layout.file(name);
        require(&p, "checkpoint", hint)?;
        self.manifest.input(name, &p)?;
        Ok(load_checkpoint(&p)?)
    }

    fn typing(&mut self, gaz: &Gazetteer) -> Result<(Vec<TypingSample>, Vec<TypingSample>), Failure> {
        let p = self.typing_path();
        require(&p, "typing records", "build-corpus --synthetic")?;
        self.manifest.input("typing", &p)?;
        let samples = typing_samples(gaz, &load_typing_records(&p)?, &self.cfg.corpus.linearizer)?;
        Ok(split_train_test(&samples, self.cfg.seed))
    }

    fn index(&mut self) -> Result<LinkingIndex, Failure> {
        let p = self.layout.file("index.bin");
        require(&p, "linking index", "build-index")?;
        self.manifest.input("index", &p)?;
        self.manifest.input("index_ids", &LinkingIndex::ids_path(&p))?;
        Ok(LinkingIndex::load(&p)?)
    }

    fn emit<T: Serialize>(&mut self, value: &T) -> Result<(), Failure> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::new("json", e.to_string()))?;
        s.push('\n');
        self.stdout
            .write_all(s.as_bytes())
            .map_err(|e| Failure::new("io", format!("writing stdout: {e}")))
    }

    /// Writes a JSON report atomically and records it as an output.
    fn report<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let p = self.layout.file(name);
        io::write_json(&p, value)?;
        self.manifest.output(name, &p)
    }

    fn finish(self) -> Result<(), Failure> {
        let p = self.layout.out.join("manifests").join(format!("{}.json", self.manifest.command));
        io::write_json(&p, &self.manifest)?;
        Ok(())
    }
}

pub(crate) fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    let ablate: BTreeSet<Ablate> = cli.common.ablate.iter().copied().collect();
    for flags in [&mut cfg.training.ablation, &mut cfg.recognition.ablation, &mut cfg.typing.ablation] {
        flags.no_contrastive |= ablate.contains(&Ablate::Contrastive);
        flags.no_mlm |= ablate.contains(&Ablate::Mlm);
        flags.no_spatial |= ablate.contains(&Ablate::Spatial);
        flags.no_summarizer |= ablate.contains(&Ablate::Summarizer);
    }
    cfg.training.seed = cfg.seed;
    cfg.recognition.seed = cfg.seed;
    cfg.typing.seed = cfg.seed;
    cfg.validate()?;
    let config_json = serde_json::to_vec(&cfg).map_err(|e| Failure::new("json", e.to_string()))?;
    let manifest = Manifest::new(
        cli.command.name(),
        cfg.seed,
        &config_json,
        ablate.iter().map(|a| a.name().to_string()).collect(),
    );
    let mut run = Run {
        cfg,
        layout: Layout {
            out: cli.common.out.clone(),
        },
        manifest,
        stdout,
    };
    if let Some(p) = &cli.common.config {
        run.manifest.input("config", p)?;
    }
    match &cli.command {
        Command::BuildCorpus { synthetic } => build(&mut run, *synthetic)?,
        Command::Summarize => summarize(&mut run)?,
        Command::Pretrain => pretrain_cmd(&mut run)?,
        Command::FinetuneRec => finetune_rec(&mut run)?,
        Command::FinetuneType => finetune_type(&mut run)?,
        Command::BuildIndex => build_index(&mut run)?,
        Command::Link { text, mention, k } => link(&mut run, text, mention, *k)?,
        Command::Eval { k } => eval(&mut run, *k)?,
        Command::Demo => demo(&mut run)?,
    }
    run.finish()
}

fn build(run: &mut Run<'_>, synthetic: bool) -> Result<(), Failure> {
    if synthetic {
        let s = run.cfg.synthetic;
        let world = generate_synthetic_world(run.cfg.seed, s.n_entities, s.n_docs)?;
        let files = write_world(&run.layout.out.join("world"), &world)?;
        let heldout = world.documents(run.cfg.seed.wrapping_add(1), s.n_heldout_docs, "heldout");
        io::write_jsonl(&run.layout.heldout_world(), &heldout)?;
        for (name, p) in [
            ("world_gazetteer", &files.gazetteer),
            ("world_corpus", &files.corpus),
            ("world_typing", &files.typing),
            ("world_triples", &files.triples),
        ] {
            run.manifest.output(name, p)?;
        }
        run.manifest.output("world_heldout", &run.layout.heldout_world())?;
        run.cfg.paths.gazetteer = Some(files.gazetteer);
        run.cfg.paths.corpus = Some(files.corpus);
        run.cfg.paths.triples = Some(files.triples);
    }
    let gaz = run.gazetteer()?;
    let corpus_path = or_default(&run.cfg.paths.corpus, run.layout.world().corpus);
    require(&corpus_path, "corpus", "build-corpus --synthetic")?;
    run.manifest.input("corpus", &corpus_path)?;
    let docs = load_corpus(&corpus_path)?;
    let triples_path = or_default(&run.cfg.paths.triples, run.layout.world().triples);
    let triples = if triples_path.exists() {
        run.manifest.input("triples", &triples_path)?;
        load_triples(&triples_path)?
    } else {
        Vec::new()
    };
    let summarizer = if run.cfg.training.ablation.no_summarizer {
        Summarizer::Raw
    } else {
        Summarizer::Template
    };
    let corpus = build_corpus(&gaz, &docs, &triples, &run.cfg.corpus, summarizer)?;
    let files = save_corpus(&run.layout.out, &corpus)?;
    let vocab = corpus_vocab(&corpus, &gaz, run.cfg.corpus.vocab_size)?;
    let vocab_path = run.layout.file("vocab.jsonl");
    vocab.save(&vocab_path)?;
    for (name, p) in ["paragraphs", "contexts", "descriptions"].into_iter().zip(files.all()) {
        run.manifest.output(name, p)?;
    }
    run.manifest.output("vocab", &vocab_path)?;
    run.emit(&json!({
        "documents": docs.len(),
        "paragraphs": corpus.annotation.paragraphs.len(),
        "dropped_paragraphs": corpus.annotation.dropped,
        "descriptions": corpus.descriptions.len(),
        "vocab_size": vocab.len(),
    }))
}

fn summarize(run: &mut Run<'_>) -> Result<(), Failure> {
    let mut corpus = run.corpus()?;
    let gaz = run.gazetteer()?;
    let max_sentences = run.cfg.corpus.max_sentences;
    let mut sources: BTreeMap<&str, usize> = BTreeMap::new();
    if run.cfg.training.ablation.no_summarizer {
        for (d, ctx) in corpus.descriptions.iter_mut().zip(&corpus.contexts) {
            *d = raw_description(ctx, max_sentences)?;
        }
        sources.insert("raw", corpus.descriptions.len());
    } else if let Some(remote) = RemoteConfig::from_env() {
        let cache_dir = or_default(&run.cfg.paths.summary_cache, run.layout.file("summary_cache"));
        let cache = SummaryCache::open(&cache_dir)?;
        let mut s = RemoteSummarizer::new(Some(remote), Some(cache), max_sentences);
        for (d, ctx) in corpus.descriptions.iter_mut().zip(&corpus.contexts) {
            let (desc, source) = s.summarize(ctx)?;
            *d = desc;
            let tag = match source {
                SummarySource::Remote => "remote",
                SummarySource::Cache => "cache",
                SummarySource::Fallback(_) => "fallback",
            };
            *sources.entry(tag).or_default() += 1;
        }
    } else {
        log::warn!("no summarization endpoint configured; using the template summarizer");
        for (d, ctx) in corpus.descriptions.iter_mut().zip(&corpus.contexts) {
            *d = summarize_template(ctx, max_sentences)?;
        }
        sources.insert("template", corpus.descriptions.len());
    }
    let files = save_corpus(&run.layout.out, &corpus)?;
    let vocab = corpus_vocab(&corpus, &gaz, run.cfg.corpus.vocab_size)?;
    let vocab_path = run.layout.file("vocab.jsonl");
    vocab.save(&vocab_path)?;
    run.manifest.output("descriptions", &files.descriptions)?;
    run.manifest.output("vocab", &vocab_path)?;
    run.emit(&json!({ "descriptions": corpus.descriptions.len(), "sources": sources, "vocab_size": vocab.len() }))
}

fn pretrain_cmd(run: &mut Run<'_>) -> Result<(), Failure> {
    let corpus = run.corpus()?;
    let vocab = run.vocab()?;
    let gaz = run.gazetteer()?;
    let cfg = run.cfg.training.clone();
    let pairs = training_pairs(&corpus, &vocab, cfg.max_seq_len);
    let mut model = Model::new(cfg.model_config(vocab.len()), cfg.seed)?;
    let metrics = run.layout.file("metrics.jsonl");
    let history = pretrain(&mut model, &pairs, &gaz, &cfg, Some(&metrics))?;
    let ckpt = run.layout.file("model.ckpt");
    save_checkpoint(&ckpt, &model)?;
    run.manifest.output("metrics", &metrics)?;
    run.manifest.output("model", &ckpt)?;
    run.emit(&json!({ "training_pairs": pairs.len(), "steps": history.len(), "last": history.last() }))
}

fn finetune_rec(run: &mut Run<'_>) -> Result<(), Failure> {
    let corpus = run.corpus()?;
    let vocab = run.vocab()?;
    let mut model = run.model("model.ckpt", "pretrain")?;
    let examples = recognition_examples(&corpus.annotation.paragraphs, &vocab, model.config().max_seq_len)?;
    let losses = finetune_recognition(&mut model, &examples, &run.cfg.recognition)?;
    let ckpt = run.layout.file("recognition.ckpt");
    save_checkpoint(&ckpt, &model)?;
    run.manifest.output("recognition", &ckpt)?;
    run.emit(&json!({ "examples": examples.len(), "steps": losses.len(), "last_loss": losses.last() }))
}

fn finetune_type(run: &mut Run<'_>) -> Result<(), Failure> {
    let vocab = run.vocab()?;
    let gaz = run.gazetteer()?;
    let mut model = run.model("model.ckpt", "pretrain")?;
    let (train, test) = run.typing(&gaz)?;
    let losses = finetune_typing(&mut model, &vocab, &train, &run.cfg.typing)?;
    let ckpt = run.layout.file("typing.ckpt");
    save_checkpoint(&ckpt, &model)?;
    run.manifest.output("typing", &ckpt)?;
    run.emit(&json!({ "train": train.len(), "test": test.len(), "steps": losses.len(), "last_loss": losses.last() }))
}

fn build_index(run: &mut Run<'_>) -> Result<(), Failure> {
    let vocab = run.vocab()?;
    let gaz = run.gazetteer()?;
    let model = run.model("model.ckpt", "pretrain")?;
    let index = build_linking_index(&model, &gaz, &vocab, &run.cfg.corpus.linearizer, &run.cfg.training.ablation)?;
    let p = run.layout.file("index.bin");
    index.save(&p)?;
    run.manifest.output("index", &p)?;
    run.manifest.output("index_ids", &LinkingIndex::ids_path(&p))?;
    run.emit(&json!({ "entities": index.len(), "dim": index.dim() }))
}

fn link(run: &mut Run<'_>, text: &str, mention: &str, k: usize) -> Result<(), Failure> {
    if k == 0 {
        return Err(Failure::new("invalid", "--k must be at least 1"));
    }
    let span = find_folded(text, mention)
        .ok_or_else(|| Failure::new("invalid", format!("mention `{mention}` does not occur in the text")))?;
    let vocab = run.vocab()?;
    let gaz = run.gazetteer()?;
    let model = run.model("model.ckpt", "pretrain")?;
    let index = run.index()?;
    let candidates: Vec<_> = link_toponym(&model, &vocab, text, span, &index, k, &run.cfg.training.ablation)?
        .into_iter()
        .map(|c| {
            let e = gaz.get(&c.entity_id);
            json!({
                "entity_id": c.entity_id,
                "score": c.score,
                "name": e.map(|e| e.name.clone()),
                "lat": e.map(|e| e.lat),
                "lon": e.map(|e| e.lon),
            })
        })
        .collect();
    let result = json!({ "mention": mention, "span": [span.0, span.1], "candidates": candidates });
    run.report("link.json", &result)?;
    run.emit(&result)
}

fn eval(run: &mut Run<'_>, k: Option<usize>) -> Result<(), Failure> {
    let mut ks = run.cfg.ks.clone();
    if let Some(k) = k {
        if k == 0 {
            return Err(Failure::new("invalid", "--k must be at least 1"));
        }
        ks.push(k);
    }
    ks.sort_unstable();
    ks.dedup();
    let corpus = run.corpus()?;
    let vocab = run.vocab()?;
    let gaz = run.gazetteer()?;
    let flags = run.cfg.training.ablation;
    let mut report = serde_json::Map::new();

    let model = run.model("model.ckpt", "pretrain")?;
    let index = run.index()?;
    let recall = linking_recall(&model, &vocab, &corpus.descriptions, &index, &ks, &flags)?;
    let linking: BTreeMap<String, f64> = recall.into_iter().map(|(k, v)| (format!("R@{k}"), v)).collect();
    report.insert("linking".into(), json!(linking));

    if run.layout.file("recognition.ckpt").exists() {
        let rec = run.model("recognition.ckpt", "finetune-rec")?;
        let train = evaluate_recognition(&rec, &vocab, &corpus.annotation.paragraphs, &flags)?;
        report.insert("recognition_train".into(), json!(train));
        let heldout = or_default(&run.cfg.paths.heldout, run.layout.heldout_world());
        if heldout.exists() {
            run.manifest.input("heldout", &heldout)?;
            let paragraphs = annotate_corpus(&load_corpus(&heldout)?, &gaz)?.paragraphs;
            report.insert("recognition_heldout".into(), json!(evaluate_recognition(&rec, &vocab, &paragraphs, &flags)?));
        }
    }

    if run.layout.file("typing.ckpt").exists() {
        let typ = run.model("typing.ckpt", "finetune-type")?;
        let (_, test) = run.typing(&gaz)?;
        let pred: Vec<EntityClass> = test
            .iter()
            .map(|s| predict_type(&typ, &vocab, &s.pseudo, &flags))
            .collect::<georeason_core::Result<_>>()?;
        let gold: Vec<EntityClass> = test.iter().map(|s| s.class).collect();
        let m = micro_f1(&pred, &gold, &EntityClass::AMENITY)?;
        let per_class: BTreeMap<String, f64> = m.per_class.iter().map(|(c, r)| (c.to_string(), r.f1)).collect();
        report.insert(
            "typing".into(),
            json!({ "test": test.len(), "micro_f1": m.micro.f1, "per_class_f1": per_class }),
        );
    }
    let report = serde_json::Value::Object(report);
    run.report("report.json", &report)?;
    run.emit(&report)
}

fn demo(run: &mut Run<'_>) -> Result<(), Failure> {
    let report = run_demo(run.cfg.seed, &run.cfg.demo())?;
    run.report("demo_report.json", &report)?;
    run.emit(&report)
}
