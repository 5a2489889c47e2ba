//! Domain-topic tables and the topic/term selection rules behind them.
//!
//! A table for a focus block lists, for the focus and each of its children,
//! the opposite-side level-1 blocks that characterize it: common ones
//! (commonality) for blocks above level 1, specific ones (specificity) at
//! level 1. Each listed block carries its selected level-0 items. The same
//! construction applied to a metadata block gives a transposed table, with
//! domains in the topic role.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Side;
use crate::measures::{Block, Profile, TargetMeasure};
use crate::model::Model;

pub const TABLE_SCHEMA_VERSION: u32 = 1;

fn descending<K: Ord>(values: &[(K, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .1
            .partial_cmp(&values[a].1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| values[a].0.cmp(&values[b].0))
    });
    order
}

fn positive_sum<K>(values: &[(K, f64)]) -> f64 {
    values.iter().map(|v| v.1).filter(|&x| x > 0.0).sum()
}

/// Indices of the shortest run of highest values whose sum reaches half the
/// sum of positive values. Ties go to the smaller key. Empty when no value
/// is positive.
pub fn select_topics<K: Ord>(values: &[(K, f64)]) -> Vec<usize> {
    let total = positive_sum(values);
    if total <= 0.0 {
        return Vec::new();
    }
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in descending(values) {
        if values[i].1 <= 0.0 {
            break;
        }
        acc += values[i].1;
        out.push(i);
        if acc >= 0.5 * total {
            break;
        }
    }
    out
}

/// Indices of the values strictly above half the highest one, descending.
pub fn select_terms<K: Ord>(values: &[(K, f64)]) -> Vec<usize> {
    let max = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    descending(values)
        .into_iter()
        .filter(|&i| values[i].1 > 0.5 * max)
        .collect()
}

/// Percentage of the positive total carried by `value`; `None` for
/// non-positive values.
pub fn percent_share(value: f64, values: &[f64]) -> Option<f64> {
    let total: f64 = values.iter().filter(|&&x| x > 0.0).sum();
    (value > 0.0 && total > 0.0).then(|| 100.0 * value / total)
}

/// Integer percentage for display, rounded half up.
pub fn display_percent(p: f64) -> u64 {
    (p + 0.5).floor() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Specificity,
    Commonality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    /// Term (or other level-0 element) label.
    pub name: String,
    pub value: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    /// Code of the selected opposite-side level-1 block.
    pub code: String,
    pub value: f64,
    pub percent: f64,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub code: String,
    /// Left empty for analysts to fill.
    pub label: String,
    pub level: usize,
    /// Number of documents (or metadata values) in the block.
    pub size: u32,
    pub measure: Measure,
    pub entries: Vec<Entry>,
    /// Level-1 subblocks, for rows above level 1.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subrows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub schema_version: u32,
    pub model_config_hash: String,
    /// `domain-topic` for document blocks, `transposed` otherwise.
    pub kind: String,
    /// The focus block with its common entries.
    pub focus: Row,
    /// One row per child of the focus.
    pub rows: Vec<Row>,
}

/// Computes the selected entries of blocks of one model.
pub struct Characterizer<'a> {
    prof: Profile<'a>,
}

impl<'a> Characterizer<'a> {
    pub fn new(model: &'a Model) -> Self {
        Characterizer {
            prof: Profile::new(model),
        }
    }

    /// Specificity at level 1, commonality above.
    pub fn measure_for(block: Block) -> Measure {
        if block.0 == 1 {
            Measure::Specificity
        } else {
            Measure::Commonality
        }
    }

    /// Selected opposite-side level-1 blocks of `block` under `measure`,
    /// with their selected items (for document blocks only). Empty for
    /// blocks without edges.
    pub fn entries(&self, block: Block, measure: Measure) -> Result<Vec<Entry>> {
        let pick = |m: &TargetMeasure| match measure {
            Measure::Specificity => m.specificity,
            Measure::Commonality => m.commonality,
        };
        let topics = match self.prof.measure(block, 1) {
            Ok(t) => t,
            Err(Error::ZeroEdgeBlock(_)) => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let values: Vec<(String, f64)> = topics
            .iter()
            .map(|m| (m.label.clone(), pick(m).unwrap_or(0.0)))
            .collect();
        let all: Vec<f64> = values.iter().map(|v| v.1).collect();
        let terms = if self.prof.side(block) == Side::Left {
            self.prof.measure(block, 0)?
        } else {
            Vec::new()
        };

        let mut out = Vec::new();
        for i in select_topics(&values) {
            let topic = topics[i].target;
            let inside: Vec<&TargetMeasure> = terms
                .iter()
                .filter(|m| self.prof.level1_of(m.target as usize) == topic)
                .collect();
            let tv: Vec<(String, f64)> = inside
                .iter()
                .map(|m| (m.label.clone(), pick(m).unwrap_or(0.0)))
                .collect();
            let tall: Vec<f64> = tv.iter().map(|v| v.1).collect();
            let items = select_terms(&tv)
                .into_iter()
                .map(|j| Item {
                    name: tv[j].0.clone(),
                    value: tv[j].1,
                    percent: percent_share(tv[j].1, &tall).unwrap_or(0.0),
                })
                .collect();
            out.push(Entry {
                code: values[i].0.clone(),
                value: values[i].1,
                percent: percent_share(values[i].1, &all).unwrap_or(0.0),
                items,
            });
        }
        Ok(out)
    }

    fn row(&self, block: Block, with_subrows: bool) -> Result<Row> {
        let measure = Self::measure_for(block);
        let mut subrows = Vec::new();
        if with_subrows && block.0 > 1 {
            let p = self.prof.partition();
            let side = self.prof.side(block);
            for b in p.blocks_on(1, side) {
                if p.ancestors(1, b)?.contains(&block) {
                    subrows.push(self.row((1, b), false)?);
                }
            }
        }
        Ok(Row {
            code: self.prof.code(block).to_string(),
            label: String::new(),
            level: block.0,
            size: self.prof.size(block),
            measure,
            entries: self.entries(block, measure)?,
            subrows,
        })
    }
}

/// Table for a focus block above level 1. Children are taken on the
/// collapsed hierarchy; each child above level 1 lists its level-1
/// subblocks.
pub fn domain_topic_table(model: &Model, focus: &str) -> Result<Table> {
    let block = model.resolve_str(focus)?;
    if block.0 == 1 {
        return Err(Error::InvalidArgument(format!(
            "{focus} is a level-1 block; use `measure` to list its specific topics"
        )));
    }
    let side = model.partition().side(block.0, block.1);
    let b = Characterizer::new(model);
    let children = b.prof.children(block);
    if children.is_empty() {
        return Err(Error::NoChildren(focus.to_string()));
    }
    let mut focus_row = b.row(block, false)?;
    focus_row.measure = Measure::Commonality;
    let mut rows = children
        .iter()
        .map(|&c| b.row(c, true))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.code.parse::<crate::BlockRef>().map(|c| c.index).unwrap_or(0));
    Ok(Table {
        schema_version: TABLE_SCHEMA_VERSION,
        model_config_hash: model.config_hash.clone(),
        kind: if side == Side::Left { "domain-topic" } else { "transposed" }.into(),
        focus: focus_row,
        rows,
    })
}

fn entries_text(entries: &[Entry], sep: &str) -> String {
    entries
        .iter()
        .map(|e| {
            let items: Vec<String> = e
                .items
                .iter()
                .map(|i| format!("{} ({}%)", i.name, display_percent(i.percent)))
                .collect();
            if items.is_empty() {
                format!("{} {}%", e.code, display_percent(e.percent))
            } else {
                format!("{} {}%: {}", e.code, display_percent(e.percent), items.join(", "))
            }
        })
        .collect::<Vec<_>>()
        .join(sep)
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

impl Table {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_markdown(&self) -> String {
        let f = &self.focus;
        let mut s = String::new();
        let _ = writeln!(s, "## {} (N = {})\n", f.code, f.size);
        let _ = writeln!(s, "Common to its subblocks: {}\n", md_cell(&entries_text(&f.entries, "; ")));
        s.push_str("| Block | N | Common | Level-1 block | N | Specific |\n");
        s.push_str("|---|---|---|---|---|---|\n");
        for r in &self.rows {
            if r.subrows.is_empty() {
                let _ = writeln!(
                    s,
                    "|  |  |  | {} | {} | {} |",
                    r.code,
                    r.size,
                    md_cell(&entries_text(&r.entries, "<br>"))
                );
                continue;
            }
            for (i, sub) in r.subrows.iter().enumerate() {
                let (code, size, common) = if i == 0 {
                    (r.code.clone(), r.size.to_string(), entries_text(&r.entries, "<br>"))
                } else {
                    Default::default()
                };
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} |",
                    code,
                    size,
                    md_cell(&common),
                    sub.code,
                    sub.size,
                    md_cell(&entries_text(&sub.entries, "<br>"))
                );
            }
        }
        s
    }

    /// One line per (row, entry): row code, parent row, level, size,
    /// measure, entry code, value, percent and the selected items.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["block", "parent", "level", "size", "measure", "entry", "value", "percent", "items"])
            .map_err(csv_err)?;
        let mut emit = |r: &Row, parent: &str| -> Result<()> {
            let measure = match r.measure {
                Measure::Specificity => "specificity",
                Measure::Commonality => "commonality",
            };
            let base = [r.code.clone(), parent.to_string(), r.level.to_string(), r.size.to_string(), measure.into()];
            if r.entries.is_empty() {
                let mut rec = base.to_vec();
                rec.extend([String::new(), String::new(), String::new(), String::new()]);
                return w.write_record(&rec).map_err(csv_err);
            }
            for e in &r.entries {
                let items: Vec<String> = e.items.iter().map(|i| i.name.clone()).collect();
                let mut rec = base.to_vec();
                rec.extend([e.code.clone(), e.value.to_string(), e.percent.to_string(), items.join(";")]);
                w.write_record(&rec).map_err(csv_err)?;
            }
            Ok(())
        };
        emit(&self.focus, "")?;
        for r in &self.rows {
            emit(r, &self.focus.code)?;
            for sub in &r.subrows {
                emit(sub, &r.code)?;
            }
        }
        drop(emit);
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::BlockRef;
    use proptest::prelude::*;

    fn keyed(v: &[f64]) -> Vec<(usize, f64)> {
        v.iter().copied().enumerate().collect()
    }

    #[test]
    fn topic_rule_examples() {
        assert_eq!(select_topics(&keyed(&[0.6, 0.3, 0.1])), vec![0]);
        assert_eq!(select_topics(&keyed(&[0.25, 0.25, 0.25, 0.25])), vec![0, 1]);
        assert!(select_topics(&keyed(&[0.0, 0.0])).is_empty());
        assert!(select_topics(&keyed(&[f64::NEG_INFINITY, -1.0])).is_empty());
        assert_eq!(select_topics(&keyed(&[f64::NEG_INFINITY, 0.2, 0.5])), vec![2]);
    }

    #[test]
    fn term_rule_examples() {
        assert_eq!(select_terms(&keyed(&[1.0, 0.6, 0.4])), vec![0, 1]);
        assert_eq!(select_terms(&keyed(&[0.3])), vec![0]);
        assert!(select_terms(&keyed(&[-0.3, 0.0])).is_empty());
        // exactly half is not above half
        assert_eq!(select_terms(&keyed(&[1.0, 0.5])), vec![0]);
    }

    #[test]
    fn percent_examples() {
        let v = [0.6, 0.3, 0.1];
        assert_eq!(display_percent(percent_share(0.6, &v).unwrap()), 60);
        assert_eq!(percent_share(0.4, &[0.4, -1.0]), Some(100.0));
        assert_eq!(percent_share(-0.1, &v), None);
        assert_eq!(display_percent(12.5), 13);
    }

    #[test]
    fn codes_round_trip() {
        let c: BlockRef = "L2T29".parse().unwrap();
        assert_eq!(c, BlockRef::new(crate::BlockKind::T, 2, 29));
        assert_eq!(BlockRef::new(crate::BlockKind::D, 3, 44).to_string(), "L3D44");
    }

    proptest! {
        #[test]
        fn ties_break_by_key(n in 1usize..6) {
            let v: Vec<(usize, f64)> = (0..n).map(|i| (n - i, 1.0)).collect();
            let sel = select_topics(&v);
            let keys: Vec<usize> = sel.iter().map(|&i| v[i].0).collect();
            let mut sorted = keys.clone();
            sorted.sort();
            prop_assert_eq!(keys, sorted);
        }
    }
}
