//! Append-only tuple tables with tombstones and per-signature hash indexes.
//!
//! Rows are appended in derivation order and never move, so a row id range
//! identifies "everything derived before round k". Displaced rows stay in
//! place with their alive flag cleared.

use std::ops::Range;

use indexmap::IndexSet;
use rustc_hash::{FxBuildHasher, FxHashMap};

use crate::model::{Tuple, Value};

pub(crate) type RowId = u32;

#[derive(Debug, Default)]
struct Index {
    cols: Vec<usize>,
    map: FxHashMap<Vec<Value>, Vec<RowId>>,
}

#[derive(Debug, Default)]
pub(crate) struct Table {
    rows: IndexSet<Tuple, FxBuildHasher>,
    step: Vec<u32>,
    alive: Vec<bool>,
    live: usize,
    indexes: Vec<Index>,
    /// Extremum bookkeeping: group key to its current best row.
    pub best: FxHashMap<Vec<Value>, RowId>,
}

impl Table {
    pub fn len(&self) -> RowId {
        self.rows.len() as RowId
    }

    pub fn live(&self) -> usize {
        self.live
    }

    pub fn row(&self, id: RowId) -> &Tuple {
        &self.rows[id as usize]
    }

    pub fn is_alive(&self, id: RowId) -> bool {
        self.alive[id as usize]
    }

    #[allow(dead_code)]
    pub fn step_of(&self, id: RowId) -> u32 {
        self.step[id as usize]
    }

    pub fn position(&self, tuple: &[Value]) -> Option<RowId> {
        self.rows.get_index_of(tuple).map(|i| i as RowId)
    }

    pub fn contains_alive(&self, tuple: &[Value]) -> bool {
        self.position(tuple).is_some_and(|i| self.is_alive(i))
    }

    /// Builds (or finds) the index on `cols` and returns its id.
    pub fn ensure_index(&mut self, cols: &[usize]) -> usize {
        if let Some(i) = self.indexes.iter().position(|ix| ix.cols == cols) {
            return i;
        }
        let mut ix = Index {
            cols: cols.to_vec(),
            map: FxHashMap::default(),
        };
        for (id, t) in self.rows.iter().enumerate() {
            ix.map
                .entry(cols.iter().map(|&c| t[c].clone()).collect())
                .or_default()
                .push(id as RowId);
        }
        self.indexes.push(ix);
        self.indexes.len() - 1
    }

    pub fn index_of(&self, cols: &[usize]) -> Option<usize> {
        self.indexes.iter().position(|ix| ix.cols == cols)
    }

    /// Row ids with `key` on the index columns, ascending.
    pub fn lookup(&self, index: usize, key: &[Value]) -> &[RowId] {
        self.indexes[index].map.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Appends `tuple`; `None` if it was already present (alive or not).
    pub fn insert(&mut self, tuple: Tuple, step: u32) -> Option<RowId> {
        let (i, fresh) = self.rows.insert_full(tuple);
        if !fresh {
            return None;
        }
        let id = i as RowId;
        self.step.push(step);
        self.alive.push(true);
        self.live += 1;
        let t = &self.rows[i];
        for ix in &mut self.indexes {
            ix.map.entry(ix.cols.iter().map(|&c| t[c].clone()).collect()).or_default().push(id);
        }
        Some(id)
    }

    pub fn kill(&mut self, id: RowId) {
        if std::mem::replace(&mut self.alive[id as usize], false) {
            self.live -= 1;
        }
    }

    pub fn alive_rows(&self) -> impl Iterator<Item = &Tuple> {
        self.rows.iter().zip(&self.alive).filter(|(_, a)| **a).map(|(t, _)| t)
    }
}

/// Restricts an ascending id list to `range`.
pub(crate) fn clip<'a>(ids: &'a [RowId], range: &Range<RowId>) -> &'a [RowId] {
    let lo = ids.partition_point(|&x| x < range.start);
    let hi = ids.partition_point(|&x| x < range.end);
    &ids[lo..hi]
}

#[derive(Debug, Default)]
pub(crate) struct Store {
    pub tables: Vec<Table>,
}

impl Store {
    pub fn with_predicates(n: usize) -> Self {
        Store {
            tables: (0..n).map(|_| Table::default()).collect(),
        }
    }

    pub fn live(&self) -> usize {
        self.tables.iter().map(Table::live).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(xs: &[i64]) -> Tuple {
        xs.iter().map(|&x| Value::Int(x)).collect()
    }

    #[test]
    fn index_tracks_inserts_and_ranges() {
        let mut tb = Table::default();
        tb.insert(t(&[1, 2]), 0);
        let ix = tb.ensure_index(&[0]);
        tb.insert(t(&[1, 3]), 1);
        tb.insert(t(&[2, 3]), 1);
        assert!(tb.insert(t(&[1, 3]), 2).is_none());
        let ids = tb.lookup(ix, &[Value::Int(1)]);
        assert_eq!(ids, &[0, 1]);
        assert_eq!(clip(ids, &(1..3)), &[1]);
    }

    #[test]
    fn kill_is_a_tombstone() {
        let mut tb = Table::default();
        let id = tb.insert(t(&[1]), 0).unwrap();
        tb.kill(id);
        tb.kill(id);
        assert_eq!(tb.live(), 0);
        assert!(!tb.contains_alive(&t(&[1])));
        assert!(tb.insert(t(&[1]), 1).is_none());
    }
}
