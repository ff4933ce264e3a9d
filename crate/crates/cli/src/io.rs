//! Interaction ingest and the prepared-split file formats.
//!
//! A prepared directory holds tab-separated, newline-terminated files:
//!
//! | file                                | columns                                        |
//! |-------------------------------------|------------------------------------------------|
//! | `train.tsv`, `valid.tsv`, `test.tsv`| user index, item index, timestamp              |
//! | `negatives.tsv`                     | user index, stage, 99 space-separated items    |
//! | `idmap.tsv`                         | raw key, dense index, entity kind (`user`/`item`) |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};
use uipc_core::data::{EvalCase, Fingerprint, Interaction, RawInteraction, SplitBundle, Stage};

/// Field separator of an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delimiter {
    /// `::` if present on the first line, else tab, else comma, else whitespace.
    Auto,
    Whitespace,
    Text(String),
}

impl std::str::FromStr for Delimiter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "auto" => Delimiter::Auto,
            "whitespace" | "space" => Delimiter::Whitespace,
            "tab" | "\\t" => Delimiter::Text("\t".into()),
            "comma" => Delimiter::Text(",".into()),
            "" => return Err("empty delimiter".into()),
            other => Delimiter::Text(other.into()),
        })
    }
}

impl Delimiter {
    fn resolve(&self, first_line: &str) -> Self {
        match self {
            Delimiter::Auto if first_line.contains("::") => Delimiter::Text("::".into()),
            Delimiter::Auto if first_line.contains('\t') => Delimiter::Text("\t".into()),
            Delimiter::Auto if first_line.contains(',') => Delimiter::Text(",".into()),
            Delimiter::Auto => Delimiter::Whitespace,
            other => other.clone(),
        }
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Delimiter::Text(sep) => line.split(sep.as_str()).map(str::trim).collect(),
            _ => line.split_whitespace().collect(),
        }
    }
}

/// Non-empty lines with their 1-based numbers, plus the resolved delimiter.
fn delimited_lines<'a>(text: &'a str, delimiter: &Delimiter) -> (Delimiter, Vec<(usize, &'a str)>) {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let resolved = delimiter.resolve(lines.first().map_or("", |l| l.1));
    (resolved, lines)
}

/// Reads `user, item[, rating], timestamp` rows.
///
/// The first non-empty line is skipped as a header when its timestamp column
/// is not an integer. Errors name the file and line.
pub fn read_raw_interactions(path: &Path, delimiter: &Delimiter) -> Result<Vec<RawInteraction>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read input {}", path.display()))?;
    let (sep, lines) = delimited_lines(&text, delimiter);
    let mut rows = Vec::with_capacity(lines.len());
    for (pos, (lineno, line)) in lines.into_iter().enumerate() {
        let fields = sep.split(line);
        let at = || format!("{}:{lineno}", path.display());
        let (user, item, rating, ts) = match fields.as_slice() {
            [u, i, t] => (*u, *i, None, *t),
            [u, i, r, t, ..] => (*u, *i, Some(*r), *t),
            _ => bail!("{}: expected 3 or more fields, found {}", at(), fields.len()),
        };
        let Ok(timestamp) = ts.parse::<i64>() else {
            if pos == 0 {
                continue;
            }
            bail!("{}: timestamp {ts:?} is not an integer", at());
        };
        let rating = match rating {
            Some(r) => Some(r.parse::<f64>().map_err(|_| anyhow!("{}: rating {r:?} is not a number", at()))?),
            None => None,
        };
        if user.is_empty() || item.is_empty() {
            bail!("{}: empty user or item key", at());
        }
        rows.push(RawInteraction::new(user, item, rating, timestamp));
    }
    Ok(rows)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Splits with the key tables needed to read and write them.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub splits: SplitBundle,
    pub user_keys: Vec<String>,
    pub item_keys: Vec<String>,
}

impl PreparedData {
    pub fn user_index(&self, key: &str) -> Option<usize> {
        self.user_keys.iter().position(|k| k == key)
    }

    pub fn item_index(&self, key: &str) -> Option<usize> {
        self.item_keys.iter().position(|k| k == key)
    }
}

pub const SPLIT_FILES: [&str; 5] = ["train.tsv", "valid.tsv", "test.tsv", "negatives.tsv", "idmap.tsv"];

fn stage_file(stage: Stage) -> &'static str {
    match stage {
        Stage::Validation => "valid.tsv",
        Stage::Test => "test.tsv",
    }
}

fn stage_tag(stage: Stage) -> &'static str {
    match stage {
        Stage::Validation => "valid",
        Stage::Test => "test",
    }
}

fn write_file(path: &Path, body: &str) -> Result<PathBuf> {
    fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path.to_path_buf())
}

/// Writes every split file into `dir`; returns their paths.
pub fn write_prepared(dir: &Path, data: &PreparedData) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();

    let mut body = String::new();
    for it in &data.splits.train {
        writeln!(body, "{}\t{}\t{}", it.user, it.item, it.timestamp)?;
    }
    written.push(write_file(&dir.join("train.tsv"), &body)?);

    let mut negatives = String::new();
    for stage in [Stage::Validation, Stage::Test] {
        let mut body = String::new();
        for case in data.splits.stage(stage) {
            writeln!(body, "{}\t{}\t{}", case.user, case.item, case.timestamp)?;
            let items: Vec<String> = case.negatives.iter().map(usize::to_string).collect();
            writeln!(negatives, "{}\t{}\t{}", case.user, stage_tag(stage), items.join(" "))?;
        }
        written.push(write_file(&dir.join(stage_file(stage)), &body)?);
    }
    written.push(write_file(&dir.join("negatives.tsv"), &negatives)?);

    let mut body = String::new();
    for (kind, keys) in [("user", &data.user_keys), ("item", &data.item_keys)] {
        for (i, key) in keys.iter().enumerate() {
            if key.contains(['\t', '\n', '\r']) {
                bail!("{kind} key {key:?} contains a tab or newline and cannot be written to idmap.tsv");
            }
            writeln!(body, "{key}\t{i}\t{kind}")?;
        }
    }
    written.push(write_file(&dir.join("idmap.tsv"), &body)?);
    Ok(written)
}

fn parse_index(field: &str, what: &str, len: usize, at: &dyn Fn() -> String) -> Result<usize> {
    let v: usize = field.parse().map_err(|_| anyhow!("{}: bad {what} index {field:?}", at()))?;
    if v >= len {
        bail!("{}: {what} index {v} out of range ({len} known)", at());
    }
    Ok(v)
}

fn tsv_lines(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 1, l.split('\t').map(str::to_owned).collect()))
        .collect())
}

fn read_idmap(path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let mut users = BTreeMap::new();
    let mut items = BTreeMap::new();
    for (lineno, f) in tsv_lines(path)? {
        let at = || format!("{}:{lineno}", path.display());
        let [key, index, kind] = f.as_slice() else {
            bail!("{}: expected key, index, kind", at());
        };
        let index: usize = index.parse().map_err(|_| anyhow!("{}: bad index {index:?}", at()))?;
        let table = match kind.as_str() {
            "user" => &mut users,
            "item" => &mut items,
            other => bail!("{}: unknown entity kind {other:?}", at()),
        };
        if table.insert(index, key.clone()).is_some() {
            bail!("{}: duplicate {kind} index {index}", at());
        }
    }
    let dense = |m: BTreeMap<usize, String>, kind: &str| -> Result<Vec<String>> {
        if m.keys().enumerate().any(|(i, &k)| i != k) {
            bail!("{}: {kind} indices are not 0..{}", path.display(), m.len());
        }
        Ok(m.into_values().collect())
    };
    Ok((dense(users, "user")?, dense(items, "item")?))
}

/// Reads a directory written by [`write_prepared`].
pub fn read_prepared(dir: &Path) -> Result<PreparedData> {
    for f in SPLIT_FILES {
        if !dir.join(f).is_file() {
            bail!("{} is not a prepared data directory: missing {f}", dir.display());
        }
    }
    let (user_keys, item_keys) = read_idmap(&dir.join("idmap.tsv"))?;
    let (n_users, n_items) = (user_keys.len(), item_keys.len());

    let triples = |path: &Path| -> Result<Vec<(usize, usize, i64)>> {
        let mut out = Vec::new();
        for (lineno, f) in tsv_lines(path)? {
            let at = || format!("{}:{lineno}", path.display());
            let [u, t, ts] = f.as_slice() else {
                bail!("{}: expected 3 fields", at());
            };
            let ts = ts.parse().map_err(|_| anyhow!("{}: bad timestamp {ts:?}", at()))?;
            out.push((parse_index(u, "user", n_users, &at)?, parse_index(t, "item", n_items, &at)?, ts));
        }
        Ok(out)
    };

    let neg_path = dir.join("negatives.tsv");
    let mut negatives: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
    for (lineno, f) in tsv_lines(&neg_path)? {
        let at = || format!("{}:{lineno}", neg_path.display());
        let [u, stage, items] = f.as_slice() else {
            bail!("{}: expected user, stage, negatives", at());
        };
        let stage = match stage.as_str() {
            "valid" => "valid",
            "test" => "test",
            other => bail!("{}: unknown stage {other:?}", at()),
        };
        let user = parse_index(u, "user", n_users, &at)?;
        let items = items
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|t| parse_index(t, "item", n_items, &at))
            .collect::<Result<Vec<_>>>()?;
        if negatives.insert((stage, user), items).is_some() {
            bail!("{}: duplicate negatives for user {user}", at());
        }
    }

    let train = triples(&dir.join("train.tsv"))?
        .into_iter()
        .map(|(user, item, timestamp)| Interaction { user, item, timestamp })
        .collect();
    let mut stage_cases = |stage: Stage| -> Result<Vec<EvalCase>> {
        triples(&dir.join(stage_file(stage)))?
            .into_iter()
            .map(|(user, item, timestamp)| {
                let negatives = negatives
                    .remove(&(stage_tag(stage), user))
                    .ok_or_else(|| anyhow!("{}: no {} negatives for user {user}", neg_path.display(), stage_tag(stage)))?;
                Ok(EvalCase { user, item, timestamp, negatives })
            })
            .collect()
    };
    let validation = stage_cases(Stage::Validation)?;
    let test = stage_cases(Stage::Test)?;
    if let Some(((stage, user), _)) = negatives.first_key_value() {
        bail!("{}: {stage} negatives for user {user} have no matching case", neg_path.display());
    }
    Ok(PreparedData {
        splits: SplitBundle {
            n_users,
            n_items,
            fingerprint: Fingerprint::of_keys(&user_keys, &item_keys),
            train,
            validation,
            test,
        },
        user_keys,
        item_keys,
    })
}

/// Item key to display name, from a delimited sidecar whose first column is
/// the key. Remaining columns are joined with ` / `.
pub fn read_metadata(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read metadata {}", path.display()))?;
    let (sep, lines) = delimited_lines(&text, &Delimiter::Auto);
    let mut out = BTreeMap::new();
    for (_, line) in lines {
        if let [key, rest @ ..] = sep.split(line).as_slice() {
            let display = if rest.is_empty() { key.to_string() } else { rest.join(" / ") };
            out.insert(key.to_string(), display);
        }
    }
    Ok(out)
}
