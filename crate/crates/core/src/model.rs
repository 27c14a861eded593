//! Domain data model: schema/entity items, candidate pairs, mapping pools,
//! and dataset statistics, plus the JSONL load/save conventions shared by the
//! rest of the pipeline.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which matching task a pool (and everything derived from it) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "SM")]
    Sm,
    #[serde(rename = "EM")]
    Em,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Sm => write!(f, "SM"),
            TaskKind::Em => write!(f, "EM"),
        }
    }
}

/// A binary match verdict. Shared by reasoning construction, voting, and
/// scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
}

impl Verdict {
    pub fn as_bool(self) -> bool {
        self == Verdict::Yes
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Yes
        } else {
            Verdict::No
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Yes => write!(f, "yes"),
            Verdict::No => write!(f, "no"),
        }
    }
}

/// One schema element: a table/column name pair with their descriptions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaItem {
    #[serde(rename = "table")]
    pub table_name: String,
    #[serde(rename = "column")]
    pub column_name: String,
    #[serde(rename = "table_desc", default)]
    pub table_description: String,
    #[serde(rename = "column_desc", default)]
    pub column_description: String,
}

impl SchemaItem {
    pub fn new(
        table_name: impl Into<String>,
        column_name: impl Into<String>,
        table_description: impl Into<String>,
        column_description: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let item = SchemaItem {
            table_name: table_name.into(),
            column_name: column_name.into(),
            table_description: table_description.into(),
            column_description: column_description.into(),
        };
        item.validate()?;
        Ok(item)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.table_name.is_empty() {
            return Err(ModelError::InvalidItem("empty table name".into()));
        }
        if self.column_name.is_empty() {
            return Err(ModelError::InvalidItem("empty column name".into()));
        }
        Ok(())
    }

    /// Recover a schema item from its rendered `name`/`description` form.
    /// The first dash splits table from column; the first semicolon splits
    /// the descriptions.
    pub fn from_rendered(name_text: &str, description_text: &str) -> Result<Self, ModelError> {
        let (table, column) = name_text
            .split_once('-')
            .ok_or_else(|| ModelError::InvalidItem(format!("no dash in name {name_text:?}")))?;
        let (table_desc, column_desc) = description_text.split_once(';').ok_or_else(|| {
            ModelError::InvalidItem(format!("no semicolon in description {description_text:?}"))
        })?;
        SchemaItem::new(table, column, table_desc, column_desc)
    }
}

/// One entity record: a name plus an ordered list of attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityItem {
    pub name: String,
    #[serde(default)]
    pub attrs: Vec<Attr>,
}

/// A single entity attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attr {
    pub k: String,
    pub v: String,
}

impl EntityItem {
    pub fn new(
        name: impl Into<String>,
        attrs: Vec<(String, String)>,
    ) -> Result<Self, ModelError> {
        let item = EntityItem {
            name: name.into(),
            attrs: attrs.into_iter().map(|(k, v)| Attr { k, v }).collect(),
        };
        item.validate()?;
        Ok(item)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.name.is_empty() {
            return Err(ModelError::InvalidItem("empty entity name".into()));
        }
        let mut seen = HashSet::new();
        for attr in &self.attrs {
            if !seen.insert(attr.k.as_str()) {
                return Err(ModelError::InvalidItem(format!(
                    "duplicate attribute key {:?}",
                    attr.k
                )));
            }
        }
        Ok(())
    }
}

/// Either side of a candidate pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Schema(SchemaItem),
    Entity(EntityItem),
}

impl Item {
    pub fn kind(&self) -> TaskKind {
        match self {
            Item::Schema(_) => TaskKind::Sm,
            Item::Entity(_) => TaskKind::Em,
        }
    }
}

/// Render an item into its `(name_text, description_text)` serialization.
///
/// Schema items join table and column with a dash and the two descriptions
/// with a semicolon. Entity items keep the name as-is and join attributes as
/// `key: value` segments separated by `; `.
pub fn render_item(item: &Item) -> (String, String) {
    match item {
        Item::Schema(s) => (
            format!("{}-{}", s.table_name, s.column_name),
            format!("{};{}", s.table_description, s.column_description),
        ),
        Item::Entity(e) => (
            e.name.clone(),
            e.attrs
                .iter()
                .map(|a| format!("{}: {}", a.k, a.v))
                .collect::<Vec<_>>()
                .join("; "),
        ),
    }
}

/// Manual error-analysis tag. Stored when present in input files, never
/// produced by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorTag {
    #[serde(rename = "IR")]
    IncorrectReasoning,
    #[serde(rename = "OM")]
    OverMatching,
    #[serde(rename = "PM")]
    PositionMismatching,
}

/// One candidate mapping: the unit of classification.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub id: String,
    pub left: Item,
    pub right: Item,
    pub label: Option<bool>,
    pub error_tag: Option<ErrorTag>,
}

impl CandidatePair {
    pub fn new(
        id: impl Into<String>,
        left: Item,
        right: Item,
        label: Option<bool>,
    ) -> Result<Self, ModelError> {
        let pair = CandidatePair {
            id: id.into(),
            left,
            right,
            label,
            error_tag: None,
        };
        if pair.left.kind() != pair.right.kind() {
            return Err(ModelError::InvalidItem(format!(
                "pair {} mixes item kinds",
                pair.id
            )));
        }
        Ok(pair)
    }

    pub fn kind(&self) -> TaskKind {
        self.left.kind()
    }

    /// Content digest used as the cache key for retrieved knowledge. Keyed by
    /// the rendered content, not the pair id, so renamed datasets reuse
    /// cached knowledge.
    pub fn content_digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let (ln, ld) = render_item(&self.left);
        let (rn, rd) = render_item(&self.right);
        let mut hasher = Sha256::new();
        hasher.update(self.kind().to_string().as_bytes());
        for part in [&ln, &ld, &rn, &rd] {
            hasher.update([0x1f]);
            hasher.update(part.as_bytes());
        }
        hex_string(&hasher.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// An ordered pool of candidate pairs, all of one task kind.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingPool {
    pub task_kind: TaskKind,
    pub pairs: Vec<CandidatePair>,
}

impl MappingPool {
    pub fn new(task_kind: TaskKind, pairs: Vec<CandidatePair>) -> Result<Self, ModelError> {
        let mut ids = HashSet::new();
        for pair in &pairs {
            if pair.kind() != task_kind {
                return Err(ModelError::KindMismatch {
                    id: pair.id.clone(),
                    expected: task_kind,
                    found: pair.kind(),
                });
            }
            if !ids.insert(pair.id.as_str()) {
                return Err(ModelError::DuplicateId(pair.id.clone()));
            }
        }
        Ok(MappingPool { task_kind, pairs })
    }

    pub fn get(&self, id: &str) -> Option<&CandidatePair> {
        self.pairs.iter().find(|p| p.id == id)
    }
}

/// Instance/positive counts and the imbalance ratio of a labeled pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_instances: usize,
    pub n_positive: usize,
    /// `n_instances / n_positive`; absent when there are no positives.
    pub imbalance_ratio: Option<f64>,
}

/// Count labels and compute the imbalance ratio. Errors if any pair is
/// unlabeled.
pub fn pool_stats(pool: &MappingPool) -> Result<DatasetStats, ModelError> {
    let mut positive = 0usize;
    for pair in &pool.pairs {
        match pair.label {
            Some(true) => positive += 1,
            Some(false) => {}
            None => return Err(ModelError::MissingLabel(pair.id.clone())),
        }
    }
    let n = pool.pairs.len();
    Ok(DatasetStats {
        n_instances: n,
        n_positive: positive,
        imbalance_ratio: (positive > 0).then(|| n as f64 / positive as f64),
    })
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record ({detail})")]
    Malformed { line: usize, detail: String },
    #[error("line {line}: record {id:?} has kind {found}, expected {expected}")]
    RecordKindMismatch {
        line: usize,
        id: String,
        expected: TaskKind,
        found: TaskKind,
    },
    #[error("pair {id:?} has kind {found}, expected {expected}")]
    KindMismatch {
        id: String,
        expected: TaskKind,
        found: TaskKind,
    },
    #[error("duplicate pair id {0:?}")]
    DuplicateId(String),
    #[error("invalid item: {0}")]
    InvalidItem(String),
    #[error("pair {0:?} is missing a label")]
    MissingLabel(String),
}

/// On-disk JSONL record for one candidate pair.
#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    id: String,
    kind: TaskKind,
    left: serde_json::Value,
    right: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_tag: Option<ErrorTag>,
}

fn parse_item(value: &serde_json::Value, kind: TaskKind) -> Result<Item, String> {
    match kind {
        TaskKind::Sm => {
            let item: SchemaItem =
                serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
            item.validate().map_err(|e| e.to_string())?;
            Ok(Item::Schema(item))
        }
        TaskKind::Em => {
            let item: EntityItem =
                serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
            item.validate().map_err(|e| e.to_string())?;
            Ok(Item::Entity(item))
        }
    }
}

fn item_to_value(item: &Item) -> serde_json::Value {
    match item {
        Item::Schema(s) => serde_json::to_value(s).expect("schema item serializes"),
        Item::Entity(e) => serde_json::to_value(e).expect("entity item serializes"),
    }
}

/// Serialize one pair as the JSON record shape used in pool files.
pub fn pair_record_to_value(pair: &CandidatePair) -> serde_json::Value {
    let record = PairRecord {
        id: pair.id.clone(),
        kind: pair.kind(),
        left: item_to_value(&pair.left),
        right: item_to_value(&pair.right),
        label: pair.label,
        error_tag: pair.error_tag,
    };
    serde_json::to_value(record).expect("pair record serializes")
}

/// Parse one pair from the JSON record shape used in pool files.
pub fn pair_record_from_value(value: &serde_json::Value) -> Result<CandidatePair, String> {
    let record: PairRecord = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
    let left = parse_item(&record.left, record.kind).map_err(|e| format!("field left: {e}"))?;
    let right = parse_item(&record.right, record.kind).map_err(|e| format!("field right: {e}"))?;
    let mut pair =
        CandidatePair::new(record.id, left, right, record.label).map_err(|e| e.to_string())?;
    pair.error_tag = record.error_tag;
    Ok(pair)
}

/// Load a JSONL pool, checking every record against the requested task kind.
/// Record order and labels are preserved.
pub fn load_pool(path: impl AsRef<Path>, task_kind: TaskKind) -> Result<MappingPool, ModelError> {
    let file = fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PairRecord =
            serde_json::from_str(&line).map_err(|e| ModelError::Malformed {
                line: line_no,
                detail: e.to_string(),
            })?;
        if record.kind != task_kind {
            return Err(ModelError::RecordKindMismatch {
                line: line_no,
                id: record.id,
                expected: task_kind,
                found: record.kind,
            });
        }
        let left = parse_item(&record.left, record.kind).map_err(|detail| {
            ModelError::Malformed {
                line: line_no,
                detail: format!("field left: {detail}"),
            }
        })?;
        let right = parse_item(&record.right, record.kind).map_err(|detail| {
            ModelError::Malformed {
                line: line_no,
                detail: format!("field right: {detail}"),
            }
        })?;
        let mut pair = CandidatePair::new(record.id, left, right, record.label)?;
        pair.error_tag = record.error_tag;
        pairs.push(pair);
    }
    MappingPool::new(task_kind, pairs)
}

/// Write a pool back out as JSONL, one record per pair, in pool order.
pub fn save_pool(pool: &MappingPool, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let mut out = fs::File::create(path.as_ref())?;
    for pair in &pool.pairs {
        let record = PairRecord {
            id: pair.id.clone(),
            kind: pool.task_kind,
            left: item_to_value(&pair.left),
            right: item_to_value(&pair.right),
            label: pair.label,
            error_tag: pair.error_tag,
        };
        let line = serde_json::to_string(&record).expect("pair record serializes");
        writeln!(out, "{line}")?;
    }
    Ok(())
}
