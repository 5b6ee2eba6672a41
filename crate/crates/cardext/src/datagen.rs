//! Synthetic database and workload generation, plus ground-truth labeling.
//!
//! The database generator builds integer tables with per-column Zipf skew
//! and within-table correlations. The workload generator draws conjunctive
//! queries whose join atoms form a random spanning tree over the declared
//! join edges, then optionally rewrites predicates with OR/NOT to hit a
//! requested DNF-list size. Everything is a pure function of (config,
//! seed).

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::dnf::get_dnf_list;
use crate::error::{Error, Result};
use crate::punq::LabeledSample;
use crate::query::{
    to_conjunctive, BoolExpr, CmpOp, JoinAtom, PredAtom, QualifiedColumn, QueryAst, SelectList,
};
use crate::store::{
    execute_general, ColumnDef, ColumnRanges, Database, Schema, Table, TableDef,
};

/// One generated column: value range plus Zipf skew (`zipf_s = 0` draws
/// uniformly).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnGenSpec {
    pub name: String,
    pub min: i64,
    pub max: i64,
    pub zipf_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableGenSpec {
    pub name: String,
    pub rows: usize,
    pub columns: Vec<ColumnGenSpec>,
}

/// Mixes `target` towards `source` (same table, defined earlier): with
/// probability `strength` a row copies the source value clamped into the
/// target range, otherwise it draws independently.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub source: QualifiedColumn,
    pub target: QualifiedColumn,
    pub strength: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DbGenConfig {
    pub tables: Vec<TableGenSpec>,
    pub join_edges: Vec<(QualifiedColumn, QualifiedColumn)>,
    pub correlations: Vec<CorrelationSpec>,
    pub seed: u64,
}

impl DbGenConfig {
    pub fn validate(&self) -> Result<()> {
        for t in &self.tables {
            for c in &t.columns {
                if c.min > c.max {
                    return Err(Error::ConfigError(format!(
                        "{}.{}: min > max",
                        t.name, c.name
                    )));
                }
                if c.zipf_s < 0.0 || c.zipf_s.is_nan() {
                    return Err(Error::ConfigError(format!(
                        "{}.{}: zipf_s must be >= 0",
                        t.name, c.name
                    )));
                }
            }
        }
        let col_pos = |q: &QualifiedColumn| -> Option<usize> {
            self.tables
                .iter()
                .find(|t| t.name == q.table)
                .and_then(|t| t.columns.iter().position(|c| c.name == q.column))
        };
        for corr in &self.correlations {
            if !(0.0..=1.0).contains(&corr.strength) {
                return Err(Error::ConfigError(format!(
                    "correlation strength {} outside [0,1]",
                    corr.strength
                )));
            }
            if corr.source.table != corr.target.table {
                return Err(Error::ConfigError(format!(
                    "correlation {} -> {} crosses tables",
                    corr.source, corr.target
                )));
            }
            let (s, t) = match (col_pos(&corr.source), col_pos(&corr.target)) {
                (Some(s), Some(t)) => (s, t),
                _ => {
                    return Err(Error::ConfigError(format!(
                        "correlation references unknown column {} or {}",
                        corr.source, corr.target
                    )))
                }
            };
            if s >= t {
                return Err(Error::ConfigError(format!(
                    "correlation source {} must be defined before target {}",
                    corr.source, corr.target
                )));
            }
        }
        for (a, b) in &self.join_edges {
            if col_pos(a).is_none() || col_pos(b).is_none() {
                return Err(Error::ConfigError(format!(
                    "join edge {a} = {b} references unknown columns"
                )));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        Schema {
            tables: self
                .tables
                .iter()
                .map(|t| TableDef {
                    name: t.name.clone(),
                    columns: t
                        .columns
                        .iter()
                        .map(|c| ColumnDef {
                            name: c.name.clone(),
                            min: c.min,
                            max: c.max,
                        })
                        .collect(),
                })
                .collect(),
            join_edges: self.join_edges.clone(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<DbGenConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: DbGenConfig = serde_json::from_str(&text)
            .map_err(|e| Error::ConfigError(format!("bad generator config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The built-in desk-scale database: six joinable tables, skewed
    /// columns, a few within-table correlations.
    pub fn desk_default(seed: u64) -> DbGenConfig {
        let col = |name: &str, min: i64, max: i64, s: f64| ColumnGenSpec {
            name: name.into(),
            min,
            max,
            zipf_s: s,
        };
        let q = |t: &str, c: &str| QualifiedColumn::new(t, c);
        DbGenConfig {
            tables: vec![
                TableGenSpec {
                    name: "users".into(),
                    rows: 1500,
                    columns: vec![
                        col("id", 0, 1499, 0.0),
                        col("age", 18, 80, 0.6),
                        col("city", 1, 50, 1.0),
                    ],
                },
                TableGenSpec {
                    name: "items".into(),
                    rows: 800,
                    columns: vec![
                        col("id", 0, 799, 0.0),
                        col("cat", 1, 20, 0.9),
                        col("price", 1, 1000, 0.5),
                    ],
                },
                TableGenSpec {
                    name: "orders".into(),
                    rows: 3000,
                    columns: vec![
                        col("id", 0, 2999, 0.0),
                        col("user_id", 0, 1499, 0.7),
                        col("item_id", 0, 799, 0.9),
                        col("qty", 1, 20, 1.2),
                    ],
                },
                TableGenSpec {
                    name: "reviews".into(),
                    rows: 2000,
                    columns: vec![
                        col("user_id", 0, 1499, 0.5),
                        col("item_id", 0, 799, 0.7),
                        col("score", 1, 10, 0.8),
                    ],
                },
                TableGenSpec {
                    name: "sessions".into(),
                    rows: 1800,
                    columns: vec![
                        col("user_id", 0, 1499, 0.6),
                        col("dur", 1, 5000, 0.9),
                        col("device", 1, 5, 0.5),
                    ],
                },
                TableGenSpec {
                    name: "shipments".into(),
                    rows: 1500,
                    columns: vec![
                        col("order_id", 0, 2999, 0.4),
                        col("region", 1, 12, 0.7),
                        col("delay", 0, 30, 0.3),
                    ],
                },
            ],
            join_edges: vec![
                (q("orders", "user_id"), q("users", "id")),
                (q("orders", "item_id"), q("items", "id")),
                (q("reviews", "user_id"), q("users", "id")),
                (q("reviews", "item_id"), q("items", "id")),
                (q("sessions", "user_id"), q("users", "id")),
                (q("shipments", "order_id"), q("orders", "id")),
            ],
            correlations: vec![
                CorrelationSpec {
                    source: q("users", "age"),
                    target: q("users", "city"),
                    strength: 0.35,
                },
                CorrelationSpec {
                    source: q("items", "cat"),
                    target: q("items", "price"),
                    strength: 0.3,
                },
                CorrelationSpec {
                    source: q("shipments", "region"),
                    target: q("shipments", "delay"),
                    strength: 0.4,
                },
            ],
            seed,
        }
    }
}

fn draw_value(rng: &mut ChaCha8Rng, spec: &ColumnGenSpec) -> i64 {
    let n = (spec.max - spec.min + 1) as u64;
    if spec.zipf_s == 0.0 || n == 1 {
        rng.gen_range(spec.min..=spec.max)
    } else {
        let z = Zipf::new(n, spec.zipf_s).expect("validated zipf params");
        let rank = z.sample(rng) as i64;
        spec.min + (rank - 1)
    }
}

/// Generates the database described by `cfg`. Deterministic per seed.
pub fn gen_db(cfg: &DbGenConfig) -> Result<Database> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tables = Vec::new();
    for tspec in &cfg.tables {
        let mut columns: Vec<(String, Vec<i64>)> = Vec::new();
        for cspec in &tspec.columns {
            let correlation = cfg
                .correlations
                .iter()
                .find(|c| c.target.table == tspec.name && c.target.column == cspec.name);
            let values: Vec<i64> = match correlation {
                None => (0..tspec.rows).map(|_| draw_value(&mut rng, cspec)).collect(),
                Some(corr) => {
                    let source: Vec<i64> = columns
                        .iter()
                        .find(|(n, _)| *n == corr.source.column)
                        .expect("validated source ordering")
                        .1
                        .clone();
                    (0..tspec.rows)
                        .map(|row| {
                            if rng.gen::<f64>() < corr.strength {
                                source[row].clamp(cspec.min, cspec.max)
                            } else {
                                draw_value(&mut rng, cspec)
                            }
                        })
                        .collect()
                }
            };
            columns.push((cspec.name.clone(), values));
        }
        tables.push(Table::new(tspec.name.clone(), columns)?);
    }
    Database::new(cfg.schema(), tables)
}

/// Writes `schema.json` plus one CSV per table. Output bytes are a pure
/// function of the database contents.
pub fn write_db_dir(db: &Database, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    db.schema().to_json_file(&dir.join("schema.json"))?;
    for def in &db.schema().tables {
        let table = db.table(&def.name).expect("schema table present");
        let mut out = std::io::BufWriter::new(std::fs::File::create(
            dir.join(format!("{}.csv", def.name)),
        )?);
        let header: Vec<&str> = def.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(out, "{}", header.join(","))?;
        let cols: Vec<&[i64]> = header.iter().map(|n| table.column(n).unwrap()).collect();
        for row in 0..table.row_count() {
            let cells: Vec<String> = cols.iter().map(|c| c[row].to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
    }
    Ok(())
}

/// Shape of one generated workload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub count: usize,
    /// Queries cycle through these join counts, giving an even split.
    pub join_counts: Vec<usize>,
    /// For general workloads: target DNF-list sizes, evenly distributed
    /// within each join count. Ignored for conjunctive workloads.
    pub dnf_sizes: Vec<usize>,
    pub max_preds_per_table: usize,
    /// Fraction of queries carrying the DISTINCT keyword.
    pub distinct_rate: f64,
    /// When false, queries stay purely conjunctive.
    pub general: bool,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn conjunctive(count: usize, join_counts: Vec<usize>, seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            count,
            join_counts,
            dnf_sizes: vec![1],
            max_preds_per_table: 2,
            distinct_rate: 0.0,
            general: false,
            seed,
        }
    }

    pub fn general(count: usize, join_counts: Vec<usize>, seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            count,
            join_counts,
            dnf_sizes: vec![1, 2, 3, 4, 5],
            max_preds_per_table: 2,
            distinct_rate: 0.0,
            general: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.join_counts.is_empty() {
            return Err(Error::ConfigError(
                "workload needs a count and at least one join count".into(),
            ));
        }
        if self.general && self.dnf_sizes.is_empty() {
            return Err(Error::ConfigError("general workload needs DNF sizes".into()));
        }
        if !(0.0..=1.0).contains(&self.distinct_rate) {
            return Err(Error::ConfigError("distinct rate outside [0,1]".into()));
        }
        Ok(())
    }
}

const DRAW_RETRIES: usize = 100;

/// Draws queries against one schema, with constants confined to the
/// actual value ranges of the database columns.
pub struct WorkloadGenerator<'a> {
    schema: &'a Schema,
    ranges: ColumnRanges,
    tables: Vec<String>,
}

impl<'a> WorkloadGenerator<'a> {
    pub fn new(schema: &'a Schema, ranges: ColumnRanges) -> WorkloadGenerator<'a> {
        let tables = schema.tables.iter().map(|t| t.name.clone()).collect();
        WorkloadGenerator {
            schema,
            ranges,
            tables,
        }
    }

    /// Random connected table subset of the requested size, via the
    /// declared join edges; returns the tree's join atoms.
    fn draw_tables(
        &self,
        rng: &mut ChaCha8Rng,
        want: usize,
    ) -> Result<(BTreeSet<String>, Vec<JoinAtom>)> {
        if want > self.tables.len() {
            return Err(Error::GenError(format!(
                "cannot draw {want} tables from a schema with {}",
                self.tables.len()
            )));
        }
        'attempt: for _ in 0..DRAW_RETRIES {
            let start = self.tables[rng.gen_range(0..self.tables.len())].clone();
            let mut chosen: BTreeSet<String> = [start].into_iter().collect();
            let mut atoms = Vec::new();
            while chosen.len() < want {
                let frontier: Vec<&(QualifiedColumn, QualifiedColumn)> = self
                    .schema
                    .join_edges
                    .iter()
                    .filter(|(a, b)| chosen.contains(&a.table) != chosen.contains(&b.table))
                    .collect();
                if frontier.is_empty() {
                    continue 'attempt;
                }
                let (a, b) = frontier[rng.gen_range(0..frontier.len())];
                atoms.push(JoinAtom::new(a.clone(), CmpOp::Eq, b.clone()));
                let newcomer = if chosen.contains(&a.table) {
                    &b.table
                } else {
                    &a.table
                };
                chosen.insert(newcomer.clone());
            }
            return Ok((chosen, atoms));
        }
        Err(Error::GenError(format!(
            "no connected table subset of size {want} found"
        )))
    }

    fn random_pred(&self, rng: &mut ChaCha8Rng, table: &str) -> PredAtom {
        let def = self.schema.table(table).expect("known table");
        let cdef = &def.columns[rng.gen_range(0..def.columns.len())];
        let col = QualifiedColumn::new(table, cdef.name.clone());
        let op = match rng.gen_range(0..3) {
            0 => CmpOp::Lt,
            1 => CmpOp::Eq,
            _ => CmpOp::Gt,
        };
        let (min, max) = self.ranges.get(&col).unwrap_or((cdef.min, cdef.max));
        let value = rng.gen_range(min..=max);
        PredAtom::new(col, op, value)
    }

    /// One conjunctive query with `joins` join atoms. `min_preds` forces a
    /// minimum total predicate count (used when OR/NOT rewrites need raw
    /// material).
    pub fn gen_conjunctive(
        &self,
        rng: &mut ChaCha8Rng,
        joins: usize,
        max_preds_per_table: usize,
        min_preds: usize,
        distinct_rate: f64,
    ) -> Result<QueryAst> {
        let (tables, join_atoms) = self.draw_tables(rng, joins + 1)?;

        let mut preds: Vec<PredAtom> = Vec::new();
        for t in &tables {
            let p_t = rng.gen_range(0..=max_preds_per_table);
            for _ in 0..p_t {
                preds.push(self.random_pred(rng, t));
            }
        }
        let table_list: Vec<&String> = tables.iter().collect();
        while preds.len() < min_preds {
            let t = table_list[rng.gen_range(0..table_list.len())];
            preds.push(self.random_pred(rng, t));
        }

        // SELECT: pick c distinct columns from the chosen tables
        let mut all_cols: Vec<QualifiedColumn> = Vec::new();
        for t in &tables {
            for c in &self.schema.table(t).unwrap().columns {
                all_cols.push(QualifiedColumn::new(t.clone(), c.name.clone()));
            }
        }
        let c = rng.gen_range(1..=all_cols.len());
        all_cols.shuffle(rng);
        let select: Vec<QualifiedColumn> = all_cols.into_iter().take(c).collect();

        let mut conjuncts: Vec<BoolExpr> = Vec::new();
        conjuncts.extend(join_atoms.into_iter().map(BoolExpr::Join));
        conjuncts.extend(preds.into_iter().map(BoolExpr::Pred));
        let where_clause = match conjuncts.len() {
            0 => None,
            1 => Some(conjuncts.pop().unwrap()),
            _ => Some(BoolExpr::And(conjuncts)),
        };

        Ok(QueryAst::new(
            rng.gen::<f64>() < distinct_rate,
            SelectList::Columns(select),
            tables,
            where_clause,
        ))
    }

    /// Fresh predicate that differs syntactically from `p`: at least one of
    /// column, operator and constant is changed.
    fn mutate_pred(
        &self,
        rng: &mut ChaCha8Rng,
        p: &PredAtom,
        tables: &BTreeSet<String>,
    ) -> PredAtom {
        let table_list: Vec<&String> = tables.iter().collect();
        loop {
            let mut candidate = p.clone();
            if rng.gen::<f64>() < 0.5 {
                let t = table_list[rng.gen_range(0..table_list.len())];
                let def = self.schema.table(t).unwrap();
                let cdef = &def.columns[rng.gen_range(0..def.columns.len())];
                candidate.col = QualifiedColumn::new(t.clone(), cdef.name.clone());
            }
            if rng.gen::<f64>() < 0.5 {
                candidate.op = match rng.gen_range(0..3) {
                    0 => CmpOp::Lt,
                    1 => CmpOp::Eq,
                    _ => CmpOp::Gt,
                };
            }
            if rng.gen::<f64>() < 0.5 {
                let (min, max) = self
                    .ranges
                    .get(&candidate.col)
                    .expect("generated column has a range");
                candidate.value = rng.gen_range(min..=max);
            } else if candidate.col != p.col {
                // constant must stay inside the new column's range
                let (min, max) = self.ranges.get(&candidate.col).unwrap();
                candidate.value = candidate.value.clamp(min, max);
            }
            if candidate != *p {
                return candidate;
            }
        }
    }

    /// General query with an exact target DNF-list size: grows OR chains
    /// over the base query's predicates and NOT-wraps individual column
    /// predicates, sized so the rewrite hits `target_dnf`.
    pub fn gen_general(
        &self,
        rng: &mut ChaCha8Rng,
        joins: usize,
        target_dnf: usize,
        max_preds_per_table: usize,
        distinct_rate: f64,
    ) -> Result<QueryAst> {
        let min_preds = if target_dnf > 1 { 1 } else { 0 };
        let base =
            self.gen_conjunctive(rng, joins, max_preds_per_table, min_preds, distinct_rate)?;
        if target_dnf == 1 {
            return Ok(base);
        }

        // split the base WHERE back into joins and predicates
        let base_cq = to_conjunctive(&base, self.schema).expect("generator output is conjunctive");
        let joins_vec: Vec<JoinAtom> = base_cq.joins.iter().cloned().collect();
        let preds_vec: Vec<PredAtom> = base_cq.preds.iter().cloned().collect();
        debug_assert!(!preds_vec.is_empty());

        // A predicate group of L OR-ed leaves with N of them NOT-wrapped
        // contributes L + N disjuncts after the NOT split, and groups
        // multiply. Factor the target over the available groups, then
        // build each group to its factor.
        let factors: Vec<usize> = match target_dnf {
            4 if preds_vec.len() >= 2 && rng.gen::<f64>() < 0.5 => vec![2, 2],
            f => vec![f],
        };
        let mut group_targets = vec![1usize; preds_vec.len()];
        let mut slots: Vec<usize> = (0..preds_vec.len()).collect();
        slots.shuffle(rng);
        for (slot, f) in slots.iter().zip(&factors) {
            group_targets[*slot] = *f;
        }

        let mut groups: Vec<Vec<(PredAtom, bool)>> = Vec::new();
        for (p, &goal) in preds_vec.iter().zip(&group_targets) {
            // choose leaf count L and NOT count N with L + N = goal
            let min_leaves = goal.div_ceil(2);
            let leaves = rng.gen_range(min_leaves..=goal);
            let nots = goal - leaves;
            let mut group = vec![(p.clone(), false)];
            while group.len() < leaves {
                let source = group[rng.gen_range(0..group.len())].0.clone();
                group.push((self.mutate_pred(rng, &source, &base.from), false));
            }
            let mut order: Vec<usize> = (0..leaves).collect();
            order.shuffle(rng);
            for &i in order.iter().take(nots) {
                group[i].1 = true;
            }
            groups.push(group);
        }

        let dnf_size: usize = groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|(_, not)| if *not { 2 } else { 1 })
                    .sum::<usize>()
            })
            .product();
        debug_assert_eq!(dnf_size, target_dnf);

        let mut conjuncts: Vec<BoolExpr> =
            joins_vec.iter().cloned().map(BoolExpr::Join).collect();
        for group in groups {
            let leaves: Vec<BoolExpr> = group
                .into_iter()
                .map(|(p, not)| {
                    let leaf = BoolExpr::Pred(p);
                    if not {
                        BoolExpr::Not(Box::new(leaf))
                    } else {
                        leaf
                    }
                })
                .collect();
            conjuncts.push(if leaves.len() == 1 {
                leaves.into_iter().next().unwrap()
            } else {
                BoolExpr::Or(leaves)
            });
        }
        let where_clause = match conjuncts.len() {
            0 => None,
            1 => Some(conjuncts.into_iter().next().unwrap()),
            _ => Some(BoolExpr::And(conjuncts)),
        };
        let ast = QueryAst {
            where_clause,
            ..base.clone()
        };
        debug_assert_eq!(
            get_dnf_list(&ast, self.schema).map(|l| l.len()).ok(),
            Some(target_dnf)
        );
        Ok(ast)
    }

    /// Generates a full workload: join counts cycle, DNF sizes cycle
    /// within each join count.
    pub fn gen_workload(&self, spec: &WorkloadSpec) -> Result<Vec<QueryAst>> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut out = Vec::with_capacity(spec.count);
        let jn = spec.join_counts.len();
        for i in 0..spec.count {
            let joins = spec.join_counts[i % jn];
            let query = if spec.general {
                let target = spec.dnf_sizes[(i / jn) % spec.dnf_sizes.len()];
                self.gen_general(
                    &mut rng,
                    joins,
                    target,
                    spec.max_preds_per_table,
                    spec.distinct_rate,
                )?
            } else {
                self.gen_conjunctive(
                    &mut rng,
                    joins,
                    spec.max_preds_per_table,
                    0,
                    spec.distinct_rate,
                )?
            };
            out.push(query);
        }
        Ok(out)
    }
}

/// Per-query ground truth, written alongside workload files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: usize,
    pub card_dup: u64,
    pub card_distinct: u64,
    pub uniqueness: f64,
    pub joins: usize,
    pub dnf_size: usize,
    pub empty: bool,
}

/// Executes every query on the oracle and records true cardinalities,
/// uniqueness rates, join counts and DNF sizes.
pub fn label_workload(db: &Database, queries: &[QueryAst]) -> Result<Vec<TruthRecord>> {
    let schema = db.schema();
    queries
        .iter()
        .enumerate()
        .map(|(id, q)| {
            let result = execute_general(db, q)?;
            let joins = count_join_atoms(q);
            let dnf_size = get_dnf_list(q, schema)?.len();
            Ok(TruthRecord {
                id,
                card_dup: result.card_dup,
                card_distinct: result.card_distinct,
                uniqueness: result.uniqueness_rate,
                joins,
                dnf_size,
                empty: result.card_dup == 0,
            })
        })
        .collect()
}

fn count_join_atoms(q: &QueryAst) -> usize {
    let mut atoms: BTreeSet<JoinAtom> = BTreeSet::new();
    fn walk(e: &BoolExpr, atoms: &mut BTreeSet<JoinAtom>) {
        match e {
            BoolExpr::And(cs) | BoolExpr::Or(cs) => cs.iter().for_each(|c| walk(c, atoms)),
            BoolExpr::Not(c) => walk(c, atoms),
            BoolExpr::Join(j) => {
                atoms.insert(j.clone());
            }
            BoolExpr::Pred(_) => {}
        }
    }
    if let Some(w) = &q.where_clause {
        walk(w, &mut atoms);
    }
    atoms.len()
}

/// Extracts the uniqueness-rate training set from a labeled conjunctive
/// workload: empty-result queries are excluded (their label would sit
/// outside the loss domain), as are non-conjunctive queries.
pub fn punq_samples(
    schema: &Schema,
    queries: &[QueryAst],
    records: &[TruthRecord],
) -> Result<Vec<LabeledSample>> {
    let mut out = Vec::new();
    for (q, r) in queries.iter().zip(records) {
        if r.empty || r.dnf_size != 1 {
            continue;
        }
        let cq = to_conjunctive(q, schema)?;
        out.push(LabeledSample {
            query: cq,
            uniqueness: r.uniqueness,
        });
    }
    Ok(out)
}

/// Writes one query per line.
pub fn write_workload(path: &Path, queries: &[QueryAst]) -> Result<()> {
    let mut out = String::new();
    for q in queries {
        out.push_str(&crate::parser::render(q));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_labels(path: &Path, records: &[TruthRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(records)
        .map_err(|e| Error::ConfigError(format!("label serialize: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<TruthRecord>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::ConfigError(format!("bad label file: {e}")))
}
