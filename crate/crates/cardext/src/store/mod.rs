//! In-memory columnar store with an exact executor.
//!
//! The executor computes bag cardinality, set-theoretic cardinality and the
//! uniqueness rate for a query, and serves as the ground-truth oracle for
//! every estimator in the crate. Databases are immutable after load; all
//! read operations are safe to call concurrently.

mod exec;

pub use exec::{execute, execute_general, require_conjunctive};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::QualifiedColumn;

/// Declared column: name plus the value range the generator promises.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

/// Database schema: table definitions plus the declared joinable column
/// pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub tables: Vec<TableDef>,
    pub join_edges: Vec<(QualifiedColumn, QualifiedColumn)>,
}

impl Schema {
    /// Checks the schema invariants: unique table names, unique column
    /// names within a table, join edges referencing existing columns.
    pub fn validate(&self) -> Result<()> {
        let mut seen_tables = HashSet::new();
        for t in &self.tables {
            if !seen_tables.insert(&t.name) {
                return Err(Error::SchemaMismatch(format!(
                    "duplicate table name {}",
                    t.name
                )));
            }
            let mut seen_cols = HashSet::new();
            for c in &t.columns {
                if !seen_cols.insert(&c.name) {
                    return Err(Error::SchemaMismatch(format!(
                        "duplicate column {} in table {}",
                        c.name, t.name
                    )));
                }
                if c.min > c.max {
                    return Err(Error::SchemaMismatch(format!(
                        "column {}.{} has min > max",
                        t.name, c.name
                    )));
                }
            }
        }
        for (a, b) in &self.join_edges {
            for side in [a, b] {
                if self.column(side).is_none() {
                    return Err(Error::SchemaMismatch(format!(
                        "join edge references unknown column {side}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn column(&self, col: &QualifiedColumn) -> Option<&ColumnDef> {
        self.table(&col.table)
            .and_then(|t| t.columns.iter().find(|c| c.name == col.column))
    }

    /// Number of tables in the whole database.
    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    /// Number of columns in the whole database.
    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    /// Every column of every table, in (table, column) order.
    pub fn all_columns(&self) -> Vec<QualifiedColumn> {
        let mut cols: Vec<QualifiedColumn> = self
            .tables
            .iter()
            .flat_map(|t| {
                t.columns
                    .iter()
                    .map(|c| QualifiedColumn::new(t.name.clone(), c.name.clone()))
            })
            .collect();
        cols.sort();
        cols
    }

    pub fn from_json_file(path: &Path) -> Result<Schema> {
        let text = std::fs::read_to_string(path)?;
        let schema: Schema = serde_json::from_str(&text)
            .map_err(|e| Error::SchemaMismatch(format!("bad schema file: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::SchemaMismatch(format!("schema serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// One table: dense integer column arrays, all of equal length.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    columns: Vec<(String, Vec<i64>)>,
    col_index: HashMap<String, usize>,
    row_count: usize,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<(String, Vec<i64>)>) -> Result<Table> {
        let name = name.into();
        let row_count = columns.first().map(|(_, v)| v.len()).unwrap_or(0);
        for (cname, values) in &columns {
            if values.len() != row_count {
                return Err(Error::SchemaMismatch(format!(
                    "column {cname} in table {name} has {} rows, expected {row_count}",
                    values.len()
                )));
            }
        }
        let col_index = columns
            .iter()
            .enumerate()
            .map(|(i, (c, _))| (c.clone(), i))
            .collect();
        Ok(Table {
            name,
            columns,
            col_index,
            row_count,
        })
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column(&self, name: &str) -> Option<&[i64]> {
        self.col_index
            .get(name)
            .map(|&i| self.columns[i].1.as_slice())
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }
}

/// Exact per-column statistics computed at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: i64,
    pub max: i64,
    pub distinct_count: usize,
}

/// Result of executing a query: bag count, set count and the uniqueness
/// rate `card_distinct / card_dup` (0 for empty results).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecResult {
    pub card_dup: u64,
    pub card_distinct: u64,
    pub uniqueness_rate: f64,
}

impl ExecResult {
    pub fn new(card_dup: u64, card_distinct: u64) -> ExecResult {
        debug_assert!(card_distinct <= card_dup);
        let uniqueness_rate = if card_dup > 0 {
            card_distinct as f64 / card_dup as f64
        } else {
            0.0
        };
        ExecResult {
            card_dup,
            card_distinct,
            uniqueness_rate,
        }
    }
}

/// An immutable snapshot of a loaded database.
#[derive(Debug, Clone)]
pub struct Database {
    schema: Schema,
    tables: BTreeMap<String, Table>,
    stats: BTreeMap<QualifiedColumn, ColumnStats>,
}

impl Database {
    /// Builds a database from in-memory tables. All schema tables must be
    /// present and agree with their definitions.
    pub fn new(schema: Schema, tables: Vec<Table>) -> Result<Database> {
        schema.validate()?;
        let mut map = BTreeMap::new();
        for t in tables {
            map.insert(t.name.clone(), t);
        }
        for def in &schema.tables {
            let table = map.get(&def.name).ok_or_else(|| {
                Error::SchemaMismatch(format!("missing table {}", def.name))
            })?;
            let expected: Vec<&str> = def.columns.iter().map(|c| c.name.as_str()).collect();
            let actual: Vec<&str> = table.column_names().collect();
            if expected != actual {
                return Err(Error::SchemaMismatch(format!(
                    "table {} columns {actual:?} do not match definition {expected:?}",
                    def.name
                )));
            }
        }
        let mut stats = BTreeMap::new();
        for def in &schema.tables {
            let table = &map[&def.name];
            for cdef in &def.columns {
                let values = table.column(&cdef.name).unwrap();
                if let Some(s) = compute_stats(values) {
                    stats.insert(
                        QualifiedColumn::new(def.name.clone(), cdef.name.clone()),
                        s,
                    );
                }
            }
        }
        Ok(Database {
            schema,
            tables: map,
            stats,
        })
    }

    /// Loads `schema.json` plus one `<table>.csv` per table from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Database> {
        let schema = Schema::from_json_file(&dir.join("schema.json"))?;
        let mut tables = Vec::new();
        for def in &schema.tables {
            let table = load_csv(&dir.join(format!("{}.csv", def.name)), def)?;
            tables.push(table);
        }
        Database::new(schema, tables)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    /// Exact min/max/distinct for a non-empty column.
    pub fn column_stats(&self, col: &QualifiedColumn) -> Result<ColumnStats> {
        if self.schema.column(col).is_none() {
            return Err(Error::ValidationError(format!("unknown column {col}")));
        }
        self.stats
            .get(col)
            .copied()
            .ok_or_else(|| Error::EmptyColumn(col.to_string()))
    }

    /// Min/max per column for featurization: actual stats where the column
    /// is non-empty, declared range otherwise.
    pub fn column_ranges(&self) -> ColumnRanges {
        let mut ranges = BTreeMap::new();
        for t in &self.schema.tables {
            for c in &t.columns {
                let qcol = QualifiedColumn::new(t.name.clone(), c.name.clone());
                let (min, max) = match self.stats.get(&qcol) {
                    Some(s) => (s.min, s.max),
                    None => (c.min, c.max),
                };
                ranges.insert(qcol, (min, max));
            }
        }
        ColumnRanges { ranges }
    }
}

/// Immutable min/max snapshot used to normalize predicate constants.
/// Serializes as a list of entries (JSON maps need string keys).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnRanges {
    ranges: BTreeMap<QualifiedColumn, (i64, i64)>,
}

#[derive(Serialize, Deserialize)]
struct RangeEntry {
    table: String,
    column: String,
    min: i64,
    max: i64,
}

impl Serialize for ColumnRanges {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<RangeEntry> = self
            .ranges
            .iter()
            .map(|(col, &(min, max))| RangeEntry {
                table: col.table.clone(),
                column: col.column.clone(),
                min,
                max,
            })
            .collect();
        entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ColumnRanges {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<ColumnRanges, D::Error> {
        let entries = Vec::<RangeEntry>::deserialize(deserializer)?;
        Ok(ColumnRanges {
            ranges: entries
                .into_iter()
                .map(|e| (QualifiedColumn::new(e.table, e.column), (e.min, e.max)))
                .collect(),
        })
    }
}

impl ColumnRanges {
    pub fn new(ranges: BTreeMap<QualifiedColumn, (i64, i64)>) -> Self {
        ColumnRanges { ranges }
    }

    pub fn get(&self, col: &QualifiedColumn) -> Option<(i64, i64)> {
        self.ranges.get(col).copied()
    }

    /// Maps a constant into [0,1] using the column range; a constant
    /// column maps everything to 0.
    pub fn normalize(&self, col: &QualifiedColumn, value: i64) -> Option<f64> {
        let (min, max) = self.get(col)?;
        if min == max {
            return Some(0.0);
        }
        let x = (value - min) as f64 / (max - min) as f64;
        Some(x.clamp(0.0, 1.0))
    }
}

fn compute_stats(values: &[i64]) -> Option<ColumnStats> {
    if values.is_empty() {
        return None;
    }
    let mut min = i64::MAX;
    let mut max = i64::MIN;
    let mut distinct = HashSet::new();
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        distinct.insert(v);
    }
    Some(ColumnStats {
        min,
        max,
        distinct_count: distinct.len(),
    })
}

/// Loads a comma-separated UTF-8 file whose header row must match the
/// table definition exactly. Data rows are 1-based in error messages.
pub fn load_csv(path: &Path, def: &TableDef) -> Result<Table> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);

    let mut header = String::new();
    if reader.read_line(&mut header)? == 0 {
        return Err(Error::SchemaMismatch(format!(
            "{}: file is empty, expected a header row",
            path.display()
        )));
    }
    let header_cols: Vec<&str> = header.trim_end_matches(['\r', '\n']).split(',').collect();
    let expected: Vec<&str> = def.columns.iter().map(|c| c.name.as_str()).collect();
    if header_cols != expected {
        return Err(Error::SchemaMismatch(format!(
            "{}: header {header_cols:?} does not match definition {expected:?}",
            path.display()
        )));
    }

    let mut columns: Vec<Vec<i64>> = vec![Vec::new(); expected.len()];
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let row = idx + 1;
        let cells: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if cells.len() != expected.len() {
            return Err(Error::ParseError {
                row,
                column: String::new(),
                message: format!("expected {} cells, found {}", expected.len(), cells.len()),
            });
        }
        for (ci, cell) in cells.iter().enumerate() {
            let value: i64 = cell.trim().parse().map_err(|_| Error::ParseError {
                row,
                column: expected[ci].to_string(),
                message: format!("cannot parse {cell:?} as an integer"),
            })?;
            columns[ci].push(value);
        }
    }

    Table::new(
        def.name.clone(),
        expected
            .iter()
            .map(|n| n.to_string())
            .zip(columns)
            .collect(),
    )
}

#[cfg(test)]
pub mod test_fixtures {
    //! Tiny schemas and databases shared across unit tests.

    use super::*;

    /// R(a,b), S(b,c), join edge R.b = S.b.
    pub fn two_table_schema() -> Schema {
        Schema {
            tables: vec![
                TableDef {
                    name: "R".into(),
                    columns: vec![
                        ColumnDef {
                            name: "a".into(),
                            min: 0,
                            max: 100,
                        },
                        ColumnDef {
                            name: "b".into(),
                            min: 0,
                            max: 100,
                        },
                    ],
                },
                TableDef {
                    name: "S".into(),
                    columns: vec![
                        ColumnDef {
                            name: "b".into(),
                            min: 0,
                            max: 100,
                        },
                        ColumnDef {
                            name: "c".into(),
                            min: 0,
                            max: 100,
                        },
                    ],
                },
            ],
            join_edges: vec![(
                QualifiedColumn::new("R", "b"),
                QualifiedColumn::new("S", "b"),
            )],
        }
    }

    /// The toy join fixture: R={(1,1),(1,2),(2,2)}, S={(1,10),(2,20),(2,30)}.
    pub fn toy_join_db() -> Database {
        let schema = two_table_schema();
        let r = Table::new(
            "R",
            vec![
                ("a".into(), vec![1, 1, 2]),
                ("b".into(), vec![1, 2, 2]),
            ],
        )
        .unwrap();
        let s = Table::new(
            "S",
            vec![
                ("b".into(), vec![1, 2, 2]),
                ("c".into(), vec![10, 20, 30]),
            ],
        )
        .unwrap();
        Database::new(schema, vec![r, s]).unwrap()
    }

    /// Single table W(v) whose sole column holds 10 ones, 4 twos, 1 three.
    pub fn skewed_single_column_db() -> Database {
        let schema = Schema {
            tables: vec![TableDef {
                name: "W".into(),
                columns: vec![ColumnDef {
                    name: "v".into(),
                    min: 1,
                    max: 3,
                }],
            }],
            join_edges: vec![],
        };
        let mut values = vec![1i64; 10];
        values.extend([2i64; 4]);
        values.push(3);
        let w = Table::new("W", vec![("v".into(), values)]).unwrap();
        Database::new(schema, vec![w]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_fixtures::*;
    use super::*;

    #[test]
    fn load_csv_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("R.csv");
        std::fs::write(&path, "a,b\n1,2\n3,4\n5,6\n").unwrap();
        let def = two_table_schema().tables[0].clone();
        let table = load_csv(&path, &def).unwrap();
        assert_eq!(table.row_count(), 3);
        assert_eq!(table.column("a").unwrap(), &[1, 3, 5]);
    }

    #[test]
    fn load_csv_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("R.csv");
        std::fs::write(&path, "a,b\n").unwrap();
        let def = two_table_schema().tables[0].clone();
        let table = load_csv(&path, &def).unwrap();
        assert_eq!(table.row_count(), 0);
    }

    #[test]
    fn load_csv_reports_bad_cell_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("R.csv");
        std::fs::write(&path, "a,b\n1,2\nx,4\n").unwrap();
        let def = two_table_schema().tables[0].clone();
        match load_csv(&path, &def) {
            Err(Error::ParseError { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("R.csv");
        std::fs::write(&path, "a,z\n1,2\n").unwrap();
        let def = two_table_schema().tables[0].clone();
        assert!(matches!(
            load_csv(&path, &def),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn column_stats_exact() {
        let db = toy_join_db();
        let s = db
            .column_stats(&QualifiedColumn::new("R", "b"))
            .unwrap();
        assert_eq!((s.min, s.max, s.distinct_count), (1, 2, 2));
    }

    #[test]
    fn column_stats_constant_column() {
        let schema = Schema {
            tables: vec![TableDef {
                name: "T".into(),
                columns: vec![ColumnDef {
                    name: "x".into(),
                    min: 0,
                    max: 10,
                }],
            }],
            join_edges: vec![],
        };
        let t = Table::new("T", vec![("x".into(), vec![5, 5])]).unwrap();
        let db = Database::new(schema, vec![t]).unwrap();
        let s = db.column_stats(&QualifiedColumn::new("T", "x")).unwrap();
        assert_eq!((s.min, s.max, s.distinct_count), (5, 5, 1));
    }

    #[test]
    fn column_stats_empty_column_errors() {
        let schema = Schema {
            tables: vec![TableDef {
                name: "T".into(),
                columns: vec![ColumnDef {
                    name: "x".into(),
                    min: 0,
                    max: 10,
                }],
            }],
            join_edges: vec![],
        };
        let t = Table::new("T", vec![("x".into(), vec![])]).unwrap();
        let db = Database::new(schema, vec![t]).unwrap();
        assert!(matches!(
            db.column_stats(&QualifiedColumn::new("T", "x")),
            Err(Error::EmptyColumn(_))
        ));
    }

    #[test]
    fn normalize_maps_range_endpoints() {
        let db = skewed_single_column_db();
        let ranges = db.column_ranges();
        let col = QualifiedColumn::new("W", "v");
        assert_eq!(ranges.normalize(&col, 1), Some(0.0));
        assert_eq!(ranges.normalize(&col, 3), Some(1.0));
        assert_eq!(ranges.normalize(&col, 2), Some(0.5));
    }
}
