//! The pipeline behind the subcommands: load and split, train latent
//! features on the training split, encode, train FM and report.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Instant;

use latentfm_core::corpus::{self, build_item_documents, build_user_documents, ColdStart};
use latentfm_core::eval::{summarize, SummaryRow};
use latentfm_core::fm::{self, encode_baseline, encode_topic, encode_vector, EpochMetrics};
use latentfm_core::{
    embed, lda, Dataset, Example, FeatureLayout, FmModel, ItemDocument, ItemVector, MetricsRecord, Split,
    TopicVector, UserDocument, Variant,
};
use log::info;
use serde::Serialize;

use crate::config::{ExperimentConfig, TopicSides, VariantSpec};
use crate::error::{Error, Result};
use crate::formats;

/// A loaded and split dataset with the training-split documents.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub split: Split,
    pub user_docs: Vec<UserDocument>,
    pub item_docs: Vec<ItemDocument>,
}

impl Prepared {
    pub fn n_users(&self) -> usize {
        self.dataset.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.dataset.n_items()
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let ds = &config.dataset;
    let dataset = formats::load_ratings(&ds.path, ds.format, ds.scale)?;
    info!(
        "loaded {} ratings from {} users and {} items",
        dataset.len(),
        dataset.n_users(),
        dataset.n_items()
    );
    let split = corpus::split(&dataset, config.split.policy())?;
    corpus::check_disjoint(&split.train, &split.test)?;
    let user_docs = build_user_documents(&split.train);
    let item_docs = build_item_documents(&split.train);
    info!("split into {} train / {} test ratings", split.train.len(), split.test.len());
    Ok(Prepared { dataset, split, user_docs, item_docs })
}

/// Dataset statistics written by `prepare`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub cold_start_test: usize,
    pub density: f64,
    pub mean_rating: Option<f64>,
    pub has_timestamps: bool,
}

impl Stats {
    pub fn of(p: &Prepared) -> Self {
        let cells = (p.n_users() * p.n_items()).max(1) as f64;
        Stats {
            n_users: p.n_users(),
            n_items: p.n_items(),
            n_ratings: p.dataset.len(),
            n_train: p.split.train.len(),
            n_test: p.split.test.len(),
            cold_start_test: p.split.cold_start.iter().filter(|c| c.any()).count(),
            density: p.dataset.len() as f64 / cells,
            mean_rating: p.dataset.mean_rating(),
            has_timestamps: p.dataset.has_timestamps(),
        }
    }
}

/// Latent features per dense id. Unused blocks stay empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Features {
    pub user_topics: Vec<Option<TopicVector>>,
    pub item_topics: Vec<Option<TopicVector>>,
    pub item_vectors: Vec<Option<ItemVector>>,
}

fn scatter<T>(n: usize, ids: impl Iterator<Item = usize>, values: Vec<T>) -> Vec<Option<T>> {
    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    for (id, v) in ids.zip(values) {
        out[id] = Some(v);
    }
    out
}

/// LDA topic proportions for the requested sides, keyed by dense id. The two
/// sides are sampled concurrently.
pub fn train_topics(p: &Prepared, config: &ExperimentConfig, k: usize, sides: TopicSides) -> Result<Features> {
    let lda_config = lda::LdaConfig { k, ..config.lda };
    let (users, items) = thread::scope(|s| {
        let users = s.spawn(|| {
            sides
                .user()
                .then(|| lda::train_lda(&p.user_docs, p.n_items(), &lda_config))
                .transpose()
        });
        let items = s.spawn(|| {
            sides
                .item()
                .then(|| lda::train_lda(&p.item_docs, p.n_users(), &lda_config))
                .transpose()
        });
        (users.join().expect("lda thread panicked"), items.join().expect("lda thread panicked"))
    });
    let mut f = Features::default();
    if let Some(theta) = users? {
        f.user_topics = scatter(p.n_users(), p.user_docs.iter().map(|d| d.user), theta);
    }
    if let Some(theta) = items? {
        f.item_topics = scatter(p.n_items(), p.item_docs.iter().map(|d| d.item), theta);
    }
    Ok(f)
}

/// Skip-gram item vectors of width `dim` learned from the user histories.
/// Items without training history are left out.
pub fn train_vectors(p: &Prepared, config: &ExperimentConfig, dim: usize) -> Result<Features> {
    let sg_config = embed::SkipGramConfig { dim, ..config.skipgram };
    let vectors = embed::train_skipgram(&p.user_docs, p.n_items(), &sg_config)?;
    let mut seen = vec![false; p.n_items()];
    for d in &p.item_docs {
        seen[d.item] = true;
    }
    let item_vectors = vectors.into_iter().zip(seen).map(|(v, s)| s.then_some(v)).collect();
    Ok(Features { item_vectors, ..Features::default() })
}

pub fn train_features(p: &Prepared, config: &ExperimentConfig, spec: VariantSpec) -> Result<Features> {
    match spec.variant {
        Variant::Baseline => Ok(Features::default()),
        Variant::Topic => train_topics(p, config, spec.latent_dim, config.topic_sides),
        Variant::Vector => train_vectors(p, config, spec.latent_dim),
    }
}

pub fn layout_for(spec: VariantSpec, sides: TopicSides, n_users: usize, n_items: usize) -> FeatureLayout {
    let k = spec.latent_dim;
    match spec.variant {
        Variant::Baseline => FeatureLayout::baseline(n_users, n_items),
        Variant::Topic => FeatureLayout::topic(
            n_users,
            n_items,
            if sides.user() { k } else { 0 },
            if sides.item() { k } else { 0 },
        ),
        Variant::Vector => FeatureLayout::vector(n_users, n_items, k),
    }
}

fn lookup<T, F: Fn(&T) -> &[f64]>(table: &[Option<T>], id: Option<usize>, get: F) -> Option<&[f64]> {
    id.and_then(|i| table.get(i)).and_then(Option::as_ref).map(get)
}

/// Encodes every record of `ds`. With `cold`, sides unseen in training are
/// encoded as unknown.
pub fn encode_dataset(
    ds: &Dataset,
    cold: Option<&[ColdStart]>,
    layout: &FeatureLayout,
    features: &Features,
) -> Result<Vec<Example>> {
    ds.records()
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            let c = cold.map(|c| c[idx]).unwrap_or_default();
            let user = (!c.user).then_some(r.user);
            let item = (!c.item).then_some(r.item);
            let x = match layout.variant() {
                Variant::Baseline => encode_baseline(user, item, layout),
                Variant::Topic => encode_topic(
                    user,
                    item,
                    lookup(&features.user_topics, user, TopicVector::as_slice),
                    lookup(&features.item_topics, item, TopicVector::as_slice),
                    layout,
                ),
                Variant::Vector => encode_vector(
                    user,
                    item,
                    lookup(&features.item_vectors, item, ItemVector::as_slice),
                    layout,
                ),
            }?;
            Ok(Example { x, rating: r.rating })
        })
        .collect()
}

pub fn encode_split(p: &Prepared, layout: &FeatureLayout, features: &Features) -> Result<(Vec<Example>, Vec<Example>)> {
    let train = encode_dataset(&p.split.train, None, layout, features)?;
    let test = encode_dataset(&p.split.test, Some(&p.split.cold_start), layout, features)?;
    Ok((train, test))
}

pub fn topics_file(dir: &Path, side: &str, k: usize) -> PathBuf {
    dir.join(format!("topics_{side}_k{k}.txt"))
}

pub fn vectors_file(dir: &Path, dim: usize) -> PathBuf {
    dir.join(format!("item_vectors_d{dim}.txt"))
}

pub fn write_features(p: &Prepared, dir: &Path, spec: VariantSpec, f: &Features) -> Result<()> {
    let k = spec.latent_dim;
    let users = p.dataset.user_map();
    let items = p.dataset.item_map();
    let io = |path: PathBuf, r: std::io::Result<()>| r.map_err(|e| Error::io(path, e));
    if !f.user_topics.is_empty() {
        let path = topics_file(dir, "user", k);
        io(path.clone(), formats::write_topic_vectors(formats::create(&path)?, &f.user_topics, users))?;
    }
    if !f.item_topics.is_empty() {
        let path = topics_file(dir, "item", k);
        io(path.clone(), formats::write_topic_vectors(formats::create(&path)?, &f.item_topics, items))?;
    }
    if !f.item_vectors.is_empty() {
        let path = vectors_file(dir, k);
        let mut known = corpus::IdMap::new();
        let mut rows = Vec::new();
        for (idx, v) in f.item_vectors.iter().enumerate() {
            if let Some(v) = v {
                known.get_or_insert(items.external(idx).unwrap_or_default());
                rows.push(v.clone());
            }
        }
        io(path.clone(), formats::write_word2vec(formats::create(&path)?, &rows, &known))?;
    }
    Ok(())
}

/// Reads the feature files for `spec` from `dir`, or `None` if any is missing.
pub fn read_features(p: &Prepared, dir: &Path, spec: VariantSpec, sides: TopicSides) -> Result<Option<Features>> {
    let k = spec.latent_dim;
    let mut f = Features::default();
    match spec.variant {
        Variant::Baseline => {}
        Variant::Topic => {
            let user = topics_file(dir, "user", k);
            let item = topics_file(dir, "item", k);
            if (sides.user() && !user.exists()) || (sides.item() && !item.exists()) {
                return Ok(None);
            }
            if sides.user() {
                f.user_topics = formats::read_topic_vectors(&user, p.dataset.user_map(), k)?;
            }
            if sides.item() {
                f.item_topics = formats::read_topic_vectors(&item, p.dataset.item_map(), k)?;
            }
        }
        Variant::Vector => {
            let path = vectors_file(dir, k);
            if !path.exists() {
                return Ok(None);
            }
            f.item_vectors = formats::read_word2vec(&path, p.dataset.item_map())?;
        }
    }
    Ok(Some(f))
}

/// Feature files in `dir` are reused when present; otherwise the features are
/// trained and written there.
pub fn load_or_train_features(p: &Prepared, config: &ExperimentConfig, spec: VariantSpec, dir: &Path) -> Result<Features> {
    if let Some(f) = read_features(p, dir, spec, config.topic_sides)? {
        info!("reusing {spec} features from {}", dir.display());
        return Ok(f);
    }
    let f = train_features(p, config, spec)?;
    write_features(p, dir, spec, &f)?;
    Ok(f)
}

#[derive(Serialize)]
struct MetricsLine {
    variant: Variant,
    latent_dim: usize,
    epoch: usize,
    train_rmse: f64,
    test_rmse: f64,
}

#[derive(Serialize)]
struct TimingLine {
    variant: Variant,
    latent_dim: usize,
    epoch: usize,
    wall_seconds: f64,
}

/// Streams per-epoch records to `metrics.jsonl` and `timing.jsonl`, flushing
/// after every epoch. Wall-clock time goes only to the timing file so that
/// the metrics file is reproducible byte for byte.
pub struct MetricsSink {
    metrics: (PathBuf, fs::File),
    timing: (PathBuf, fs::File),
}

impl MetricsSink {
    pub fn create(dir: &Path) -> Result<Self> {
        let open = |name: &str| -> Result<(PathBuf, fs::File)> {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            Ok((path, file))
        };
        Ok(Self { metrics: open("metrics.jsonl")?, timing: open("timing.jsonl")? })
    }

    pub fn emit(&mut self, r: &MetricsRecord) -> Result<()> {
        let m = MetricsLine {
            variant: r.variant,
            latent_dim: r.latent_dim,
            epoch: r.epoch,
            train_rmse: r.train_rmse,
            test_rmse: r.test_rmse,
        };
        let t = TimingLine { variant: r.variant, latent_dim: r.latent_dim, epoch: r.epoch, wall_seconds: r.wall_seconds };
        for ((path, file), text) in [(&mut self.metrics, json_line(&m)), (&mut self.timing, json_line(&t))] {
            file.write_all(text.as_bytes()).and_then(|_| file.flush()).map_err(|e| Error::io(&*path, e))?;
        }
        Ok(())
    }
}

fn json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("metrics serialize");
    s.push('\n');
    s
}

/// Trains one FM on already-encoded data, reporting every epoch to `on_record`.
pub fn train_variant(
    spec: VariantSpec,
    layout: FeatureLayout,
    train: &[Example],
    test: &[Example],
    config: &ExperimentConfig,
    mut on_record: impl FnMut(&MetricsRecord) -> Result<()>,
) -> Result<(FmModel, Vec<MetricsRecord>)> {
    let start = Instant::now();
    let mut records = Vec::with_capacity(config.fm.epochs);
    let mut sink_error = None;
    let result = fm::train_fm(layout, train, test, &config.fm, Some(config.dataset.scale), |m: &EpochMetrics| {
        let r = MetricsRecord {
            variant: spec.variant,
            latent_dim: spec.latent_dim,
            epoch: m.epoch,
            train_rmse: m.train_rmse,
            test_rmse: m.test_rmse,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        info!("{spec} epoch {}: train {:.6} test {:.6}", r.epoch, r.train_rmse, r.test_rmse);
        if sink_error.is_none() {
            if let Err(e) = on_record(&r) {
                sink_error = Some(e);
            }
        }
        records.push(r);
    });
    if let Some(e) = sink_error {
        return Err(e);
    }
    let (model, _) = result?;
    Ok((model, records))
}

/// Runs every configured variant on one shared split and writes
/// `metrics.jsonl`, `timing.jsonl`, `summary.txt`, `summary.csv` and
/// `convergence.csv` under the output directory. Records already produced
/// stay on disk if a later variant fails.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    let p = prepare(config)?;
    let out = &config.output;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut sink = MetricsSink::create(out)?;
    let mut all = Vec::new();
    for &spec in &config.variants {
        let t = Instant::now();
        let features = train_features(&p, config, spec)?;
        let layout = layout_for(spec, config.topic_sides, p.n_users(), p.n_items());
        let (train, test) = encode_split(&p, &layout, &features)?;
        info!("{spec}: latent features ready in {:.2}s", t.elapsed().as_secs_f64());
        let (_, records) = train_variant(spec, layout, &train, &test, config, |r| sink.emit(r))?;
        all.extend(records);
    }
    if !config.summary_epochs.is_empty() {
        let rows = summarize(&all, &config.summary_epochs)?;
        write_text(&out.join("summary.txt"), &summary_table(&rows))?;
        write_text(&out.join("summary.csv"), &summary_csv(&rows))?;
    }
    write_text(&out.join("convergence.csv"), &convergence_csv(&all))?;
    Ok(all)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Aligned plain-text table, one row per variant, one column per epoch.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let Some(first) = rows.first() else { return String::new() };
    let width = rows.iter().map(|r| r.label().len()).max().unwrap_or(0).max("variant".len());
    let mut s = format!("{:<width$}", "variant");
    for (epoch, _) in &first.values {
        s += &format!("  {:>10}", format!("iter={epoch}"));
    }
    s.push('\n');
    for r in rows {
        s += &format!("{:<width$}", r.label());
        for (_, v) in &r.values {
            s += &format!("  {v:>10.6}");
        }
        s.push('\n');
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("variant,latent_dim");
    if let Some(first) = rows.first() {
        for (epoch, _) in &first.values {
            s += &format!(",iter={epoch}");
        }
    }
    s.push('\n');
    for r in rows {
        s += &format!("{},{}", r.variant, r.latent_dim);
        for (_, v) in &r.values {
            s += &format!(",{v}");
        }
        s.push('\n');
    }
    s
}

/// Test RMSE per epoch, one column per variant.
pub fn convergence_csv(records: &[MetricsRecord]) -> String {
    let mut keys: Vec<(Variant, usize)> = Vec::new();
    let mut max_epoch = 0;
    for r in records {
        if !keys.contains(&(r.variant, r.latent_dim)) {
            keys.push((r.variant, r.latent_dim));
        }
        max_epoch = max_epoch.max(r.epoch);
    }
    let mut s = String::from("epoch");
    for &(v, d) in &keys {
        s += &format!(",{}", latentfm_core::eval::label(v, d));
    }
    s.push('\n');
    for epoch in 1..=max_epoch {
        s += &epoch.to_string();
        for &(v, d) in &keys {
            s.push(',');
            if let Some(r) = records.iter().find(|r| r.variant == v && r.latent_dim == d && r.epoch == epoch) {
                s += &r.test_rmse.to_string();
            }
        }
        s.push('\n');
    }
    s
}
