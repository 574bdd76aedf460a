//! Text file formats: rating files, history documents, topic vectors,
//! word2vec-style item vectors and serialized FM models.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use latentfm_core::corpus::IdMap;
use latentfm_core::fm::{FeatureLayout, Variant};
use latentfm_core::{Dataset, FmModel, ItemDocument, ItemVector, RatingRecord, RatingScale, TopicVector, UserDocument};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layout of a rating file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    /// `user::item::rating::timestamp`, as in MovieLens 1M/10M.
    #[serde(rename = "movielens-colon")]
    MovielensColon,
    /// `user<TAB>item<TAB>rating<TAB>timestamp`, as in MovieLens 100K.
    #[serde(rename = "tsv")]
    Tsv,
    /// `user,item,rating[,timestamp]` after one header line.
    #[serde(rename = "csv")]
    Csv,
}

impl DataFormat {
    fn fields<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            DataFormat::MovielensColon => line.split("::").collect(),
            DataFormat::Tsv => line.split('\t').collect(),
            DataFormat::Csv => line.split(',').collect(),
        }
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub(crate) type Writer = BufWriter<File>;

pub(crate) fn create(path: &Path) -> Result<Writer> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Reads a rating file and builds the dataset.
pub fn load_ratings(path: &Path, format: DataFormat, scale: RatingScale) -> Result<Dataset> {
    parse_ratings(open(path)?, format, scale, path)
}

/// Parses ratings from `reader`; `origin` names the source in errors.
pub fn parse_ratings<R: BufRead>(reader: R, format: DataFormat, scale: RatingScale, origin: &Path) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut header_pending = format == DataFormat::Csv;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields: Vec<&str> = format.fields(line).into_iter().map(str::trim).collect();
        if !(3..=4).contains(&fields.len()) || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(origin, lineno, format!("expected user, item, rating[, timestamp]: {line:?}")));
        }
        let rating: f64 = fields[2]
            .parse()
            .ok()
            .filter(|r: &f64| r.is_finite())
            .ok_or_else(|| Error::parse(origin, lineno, format!("bad rating {:?}", fields[2])))?;
        if !scale.contains(rating) {
            return Err(Error::Validation {
                path: origin.into(),
                line: lineno,
                message: format!("rating {rating} outside the scale [{}, {}]", scale.min, scale.max),
            });
        }
        let timestamp = match fields.get(3) {
            None => None,
            Some(raw) => {
                let ts: i64 = raw
                    .parse()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad timestamp {raw:?}")))?;
                if ts < 0 {
                    return Err(Error::Validation {
                        path: origin.into(),
                        line: lineno,
                        message: format!("negative timestamp {ts}"),
                    });
                }
                Some(ts as u64)
            }
        };
        records.push(RatingRecord { user: fields[0].into(), item: fields[1].into(), rating, timestamp });
    }
    Ok(Dataset::from_records(records, scale)?)
}

/// Writes `user<TAB>item<TAB>rating[<TAB>timestamp]` with external ids.
pub fn write_ratings<W: Write>(mut w: W, ds: &Dataset) -> std::io::Result<()> {
    for r in ds.records() {
        let user = ds.user_map().external(r.user).unwrap_or_default();
        let item = ds.item_map().external(r.item).unwrap_or_default();
        match r.timestamp {
            Some(ts) => writeln!(w, "{user}\t{item}\t{}\t{ts}", r.rating)?,
            None => writeln!(w, "{user}\t{item}\t{}", r.rating)?,
        }
    }
    w.flush()
}

fn write_document<W: Write>(w: &mut W, id: &str, tokens: impl Iterator<Item = String>) -> std::io::Result<()> {
    write!(w, "{id}:")?;
    for t in tokens {
        write!(w, " {t}")?;
    }
    writeln!(w)
}

/// One line per user: `user: item item ...` (external ids).
pub fn write_user_documents<W: Write>(mut w: W, docs: &[UserDocument], ds: &Dataset) -> std::io::Result<()> {
    for doc in docs {
        let id = ds.user_map().external(doc.user).unwrap_or_default();
        let tokens = doc.items.iter().map(|&i| ds.item_map().external(i).unwrap_or_default().to_string());
        write_document(&mut w, id, tokens)?;
    }
    w.flush()
}

/// One line per item: `item: user user ...` (external ids).
pub fn write_item_documents<W: Write>(mut w: W, docs: &[ItemDocument], ds: &Dataset) -> std::io::Result<()> {
    for doc in docs {
        let id = ds.item_map().external(doc.item).unwrap_or_default();
        let tokens = doc.users.iter().map(|&u| ds.user_map().external(u).unwrap_or_default().to_string());
        write_document(&mut w, id, tokens)?;
    }
    w.flush()
}

fn write_row<W: Write>(w: &mut W, id: &str, values: &[f64]) -> std::io::Result<()> {
    write!(w, "{id}")?;
    for v in values {
        write!(w, " {v}")?;
    }
    writeln!(w)
}

/// One line per document: `doc_id θ_1 ... θ_K`. Entries of `theta` that are
/// `None` are skipped.
pub fn write_topic_vectors<W: Write>(mut w: W, theta: &[Option<TopicVector>], ids: &IdMap) -> std::io::Result<()> {
    for (idx, t) in theta.iter().enumerate() {
        if let Some(t) = t {
            write_row(&mut w, ids.external(idx).unwrap_or_default(), t.as_slice())?;
        }
    }
    w.flush()
}

fn parse_row(path: &Path, lineno: usize, line: &str, width: usize) -> Result<(String, Vec<f64>)> {
    let mut parts = line.split_whitespace();
    let id = parts.next().ok_or_else(|| Error::parse(path, lineno, "empty row"))?;
    let values = parts
        .map(|p| p.parse::<f64>().map_err(|_| Error::parse(path, lineno, format!("bad number {p:?}"))))
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != width {
        return Err(Error::parse(path, lineno, format!("expected {width} values, found {}", values.len())));
    }
    Ok((id.to_string(), values))
}

fn lookup(ids: &IdMap, path: &Path, lineno: usize, id: &str) -> Result<usize> {
    ids.index_of(id).ok_or_else(|| Error::parse(path, lineno, format!("unknown id {id:?}")))
}

/// Reads topic vectors of width `k`, indexed by the ids' dense index.
pub fn read_topic_vectors(path: &Path, ids: &IdMap, k: usize) -> Result<Vec<Option<TopicVector>>> {
    let mut out = vec![None; ids.len()];
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, values) = parse_row(path, idx + 1, &line, k)?;
        let theta = TopicVector::from_proportions(values)
            .ok_or_else(|| Error::parse(path, idx + 1, "topic proportions must be non-negative and sum to 1"))?;
        out[lookup(ids, path, idx + 1, &id)?] = Some(theta);
    }
    Ok(out)
}

/// word2vec text format: `count dim`, then `item v_1 ... v_dim` per item.
pub fn write_word2vec<W: Write>(mut w: W, vectors: &[ItemVector], ids: &IdMap) -> std::io::Result<()> {
    let dim = vectors.first().map_or(0, ItemVector::len);
    writeln!(w, "{} {dim}", vectors.len())?;
    for (idx, v) in vectors.iter().enumerate() {
        write_row(&mut w, ids.external(idx).unwrap_or_default(), v.as_slice())?;
    }
    w.flush()
}

pub fn read_word2vec(path: &Path, ids: &IdMap) -> Result<Vec<Option<ItemVector>>> {
    let mut lines = open(path)?.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let dims: Vec<usize> = header.split_whitespace().filter_map(|p| p.parse().ok()).collect();
    let [count, dim] = dims[..] else {
        return Err(Error::parse(path, 1, "header must be `count dim`"));
    };
    let mut out = vec![None; ids.len()];
    let mut seen = 0;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, values) = parse_row(path, lineno, &line, dim)?;
        let v = ItemVector::new(values).ok_or_else(|| Error::parse(path, lineno, "non-finite value"))?;
        out[lookup(ids, path, lineno, &id)?] = Some(v);
        seen += 1;
    }
    if seen != count {
        return Err(Error::parse(path, 1, format!("header announces {count} vectors, found {seen}")));
    }
    Ok(out)
}

const MODEL_MAGIC: &str = "fm-model v1";

/// ```text
/// fm-model v1
/// layout N M K_U K_I variant
/// rank f
/// w0
/// w_0          (one line per feature)
/// V_0 row      (space separated, one line per feature)
/// ```
pub fn write_model<W: Write>(mut w: W, model: &FmModel) -> std::io::Result<()> {
    let l = model.layout();
    writeln!(w, "{MODEL_MAGIC}")?;
    writeln!(
        w,
        "layout {} {} {} {} {}",
        l.n_users(),
        l.n_items(),
        l.k_user_topics(),
        l.k_item_latents(),
        l.variant()
    )?;
    writeln!(w, "rank {}", model.rank())?;
    writeln!(w, "{}", model.w0())?;
    for x in model.weights() {
        writeln!(w, "{x}")?;
    }
    for row in model.factor_matrix().chunks(model.rank().max(1)) {
        let strs: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{}", strs.join(" "))?;
    }
    w.flush()
}

pub fn read_model(path: &Path) -> Result<FmModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, path)
}

pub fn parse_model(text: &str, path: &Path) -> Result<FmModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| lines.next().ok_or_else(|| Error::parse(path, 0, format!("truncated before {what}")));
    let num = |lineno: usize, s: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::parse(path, lineno, format!("bad number {s:?}")))
    };

    let (lineno, magic) = next("header")?;
    if magic != MODEL_MAGIC {
        return Err(Error::parse(path, lineno, format!("expected {MODEL_MAGIC:?}")));
    }

    let (lineno, layout_line) = next("layout")?;
    let parts: Vec<&str> = layout_line.split_whitespace().collect();
    let layout = match parts[..] {
        ["layout", n, m, ku, ki, variant] => {
            let dims: Vec<usize> = [n, m, ku, ki]
                .iter()
                .map(|s| s.parse().map_err(|_| Error::parse(path, lineno, format!("bad size {s:?}"))))
                .collect::<Result<_>>()?;
            let variant: Variant =
                variant.parse().map_err(|_| Error::parse(path, lineno, format!("unknown variant {variant:?}")))?;
            FeatureLayout::new(variant, dims[0], dims[1], dims[2], dims[3])
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?
        }
        _ => return Err(Error::parse(path, lineno, "expected `layout N M K_U K_I variant`")),
    };

    let (lineno, rank_line) = next("rank")?;
    let rank: usize = match rank_line.split_whitespace().collect::<Vec<_>>()[..] {
        ["rank", r] => r.parse().map_err(|_| Error::parse(path, lineno, "bad rank"))?,
        _ => return Err(Error::parse(path, lineno, "expected `rank f`")),
    };

    let (lineno, w0_line) = next("w0")?;
    let w0 = num(lineno, w0_line)?;
    let dim = layout.dim();
    let mut w = Vec::with_capacity(dim);
    for _ in 0..dim {
        let (lineno, l) = next("linear weights")?;
        w.push(num(lineno, l)?);
    }
    let mut v = Vec::with_capacity(dim * rank);
    for _ in 0..dim {
        let (lineno, l) = next("factor rows")?;
        let row: Vec<f64> = l.split_whitespace().map(|s| num(lineno, s)).collect::<Result<_>>()?;
        if row.len() != rank {
            return Err(Error::parse(path, lineno, format!("expected {rank} factors, found {}", row.len())));
        }
        v.extend(row);
    }
    let model = FmModel::from_parts(layout, rank, w0, w, v)?;
    if !model.is_finite() {
        return Err(Error::parse(path, 0, "model contains non-finite parameters"));
    }
    Ok(model)
}
