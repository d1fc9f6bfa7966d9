//! Execution graphs under sequential consistency.
//!
//! Events are stored in insertion order; position 0 is always the init
//! event. `rf` and `mo` refer to events by position. Each per-location `mo`
//! list starts with the init event (position 0).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::program::{Loc, Tid};

/// Graphs are limited to this many events (bitset width).
pub const MAX_EVENTS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Label {
    Init,
    Write { loc: Loc, val: i64 },
    Read { loc: Loc, val: i64 },
}

impl Label {
    pub fn loc(&self) -> Option<Loc> {
        match self {
            Label::Init => None,
            Label::Write { loc, .. } | Label::Read { loc, .. } => Some(*loc),
        }
    }

    pub fn val(&self) -> Option<i64> {
        match self {
            Label::Init => None,
            Label::Write { val, .. } | Label::Read { val, .. } => Some(*val),
        }
    }

    pub fn is_read(&self) -> bool {
        matches!(self, Label::Read { .. })
    }

    /// Init counts as a write to every location.
    pub fn is_write(&self) -> bool {
        matches!(self, Label::Write { .. } | Label::Init)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Event {
    pub tid: Tid,
    /// 1-based position within the thread; 0 for init.
    pub idx: u32,
    pub label: Label,
}

impl Event {
    pub const INIT: Event = Event { tid: 0, idx: 0, label: Label::Init };

    pub fn is_init(&self) -> bool {
        self.tid == 0
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.label {
            Label::Init => write!(f, "init"),
            Label::Write { loc, val } => write!(f, "t{}.{}:W(l{},{})", self.tid, self.idx, loc.0, val),
            Label::Read { loc, val } => write!(f, "t{}.{}:R(l{},{})", self.tid, self.idx, loc.0, val),
        }
    }
}

/// A set of event positions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct EventSet(pub u128);

impl EventSet {
    pub const EMPTY: EventSet = EventSet(0);

    pub fn full(n: usize) -> EventSet {
        if n >= 128 {
            EventSet(u128::MAX)
        } else {
            EventSet((1u128 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> EventSet {
        EventSet(1u128 << i)
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1u128 << i;
    }

    pub fn remove(&mut self, i: usize) {
        self.0 &= !(1u128 << i);
    }

    pub fn union(self, other: EventSet) -> EventSet {
        EventSet(self.0 | other.0)
    }

    pub fn minus(self, other: EventSet) -> EventSet {
        EventSet(self.0 & !other.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl FromIterator<usize> for EventSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = EventSet::EMPTY;
        for i in iter {
            s.insert(i);
        }
        s
    }
}

/// A binary relation over event positions, as successor sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    succ: Vec<EventSet>,
}

impl Relation {
    pub fn empty(n: usize) -> Self {
        Relation { succ: vec![EventSet::EMPTY; n] }
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn add(&mut self, a: usize, b: usize) {
        self.succ[a].insert(b);
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.succ[a].contains(b)
    }

    pub fn successors(&self, a: usize) -> EventSet {
        self.succ[a]
    }

    pub fn union(&self, other: &Relation) -> Relation {
        Relation { succ: self.succ.iter().zip(&other.succ).map(|(a, b)| a.union(*b)).collect() }
    }

    /// Transitive closure (Warshall over bitset rows).
    pub fn closure(&self) -> Relation {
        let mut succ = self.succ.clone();
        for k in 0..succ.len() {
            let row_k = succ[k];
            for row in succ.iter_mut() {
                if row.contains(k) {
                    *row = row.union(row_k);
                }
            }
        }
        Relation { succ }
    }

    pub fn is_irreflexive(&self) -> bool {
        self.succ.iter().enumerate().all(|(i, s)| !s.contains(i))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ.iter().enumerate().flat_map(|(a, s)| s.iter().map(move |b| (a, b)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("read {read} would lose its rf source {source_event}")]
    DanglingRf { read: String, source_event: String },
    #[error("graph would exceed {MAX_EVENTS} events")]
    TooManyEvents,
    #[error("restriction must keep the init event")]
    MissingInit,
}

/// Comparable, hashable identity of a graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(Vec<i64>);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionGraph {
    events: Vec<Event>,
    rf: Vec<Option<usize>>,
    mo: BTreeMap<Loc, Vec<usize>>,
}

impl Default for ExecutionGraph {
    fn default() -> Self {
        Self::initial()
    }
}

impl ExecutionGraph {
    /// The graph containing only the init event.
    pub fn initial() -> Self {
        ExecutionGraph { events: vec![Event::INIT], rf: vec![None], mo: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_initial(&self) -> bool {
        self.events.len() == 1
    }

    /// Events in insertion order.
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event(&self, pos: usize) -> &Event {
        &self.events[pos]
    }

    pub fn position(&self, tid: Tid, idx: u32) -> Option<usize> {
        self.events.iter().position(|e| e.tid == tid && e.idx == idx)
    }

    pub fn all(&self) -> EventSet {
        EventSet::full(self.len())
    }

    pub fn rf(&self, read: usize) -> Option<usize> {
        self.rf[read]
    }

    /// Modification order at `loc`, init first.
    pub fn mo(&self, loc: Loc) -> &[usize] {
        const INIT_ONLY: &[usize] = &[0];
        self.mo.get(&loc).map(Vec::as_slice).unwrap_or(INIT_ONLY)
    }

    pub fn locations(&self) -> impl Iterator<Item = Loc> + '_ {
        self.mo.keys().copied()
    }

    /// The mo-maximal write at `loc` (init if there is none).
    pub fn mo_max(&self, loc: Loc) -> usize {
        *self.mo(loc).last().unwrap_or(&0)
    }

    pub fn mo_position(&self, loc: Loc, write: usize) -> Option<usize> {
        self.mo(loc).iter().position(|&w| w == write)
    }

    /// Reads at `loc`, in insertion order.
    pub fn reads_at(&self, loc: Loc) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| matches!(self.events[i].label, Label::Read { loc: l, .. } if l == loc))
            .collect()
    }

    /// Events of `tid`, by idx.
    pub fn thread_events(&self, tid: Tid) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.len()).filter(|&i| self.events[i].tid == tid).collect();
        v.sort_by_key(|&i| self.events[i].idx);
        v
    }

    fn push(&mut self, ev: Event, rf: Option<usize>) -> Result<usize, GraphError> {
        if self.events.len() >= MAX_EVENTS {
            return Err(GraphError::TooManyEvents);
        }
        self.events.push(ev);
        self.rf.push(rf);
        Ok(self.events.len() - 1)
    }

    /// Appends a read of `loc` reading from `source`; its value is taken from the source.
    pub fn add_read(&mut self, tid: Tid, idx: u32, loc: Loc, source: usize) -> Result<usize, GraphError> {
        let val = self.write_value(source);
        self.push(Event { tid, idx, label: Label::Read { loc, val } }, Some(source))
    }

    /// Appends a write, placing it immediately after `anchor` in `mo`.
    pub fn add_write(&mut self, tid: Tid, idx: u32, loc: Loc, val: i64, anchor: usize) -> Result<usize, GraphError> {
        let pos = self.push(Event { tid, idx, label: Label::Write { loc, val } }, None)?;
        let list = self.mo.entry(loc).or_insert_with(|| vec![0]);
        let at = list.iter().position(|&w| w == anchor).expect("mo anchor must be a write at the location");
        list.insert(at + 1, pos);
        Ok(pos)
    }

    /// Appends a write at the end of `mo`.
    pub fn add_write_last(&mut self, tid: Tid, idx: u32, loc: Loc, val: i64) -> Result<usize, GraphError> {
        let anchor = self.mo_max(loc);
        self.add_write(tid, idx, loc, val, anchor)
    }

    /// Points `read` at `source`, updating its label value.
    pub fn set_rf(&mut self, read: usize, source: usize) {
        let val = self.write_value(source);
        if let Label::Read { val: v, .. } = &mut self.events[read].label {
            *v = val;
        }
        self.rf[read] = Some(source);
    }

    fn write_value(&self, w: usize) -> i64 {
        match self.events[w].label {
            Label::Init => 0,
            Label::Write { val, .. } => val,
            Label::Read { .. } => panic!("rf source must be a write"),
        }
    }

    /// Program order: init before everything, same-thread events by idx.
    pub fn po(&self) -> Relation {
        let mut r = Relation::empty(self.len());
        for i in 1..self.len() {
            r.add(0, i);
            for j in 1..self.len() {
                if self.events[i].tid == self.events[j].tid && self.events[i].idx < self.events[j].idx {
                    r.add(i, j);
                }
            }
        }
        r
    }

    pub fn rf_relation(&self) -> Relation {
        let mut r = Relation::empty(self.len());
        for (read, src) in self.rf.iter().enumerate() {
            if let Some(w) = src {
                r.add(*w, read);
            }
        }
        r
    }

    pub fn mo_relation(&self) -> Relation {
        let mut r = Relation::empty(self.len());
        for list in self.mo.values() {
            for (i, &a) in list.iter().enumerate() {
                for &b in &list[i + 1..] {
                    r.add(a, b);
                }
            }
        }
        r
    }

    /// fr = rf⁻¹ ; mo
    pub fn fr(&self) -> Relation {
        let mut r = Relation::empty(self.len());
        for (read, src) in self.rf.iter().enumerate() {
            let (Some(w), Some(loc)) = (src, self.events[read].label.loc()) else { continue };
            let list = self.mo(loc);
            if let Some(p) = list.iter().position(|x| x == w) {
                for &later in &list[p + 1..] {
                    r.add(read, later);
                }
            }
        }
        r
    }

    pub fn porf(&self) -> Relation {
        self.po().union(&self.rf_relation()).closure()
    }

    /// Immediate edges whose closure equals sc: po successors, rf, immediate mo and fr.
    fn sc_base(&self) -> Vec<EventSet> {
        let n = self.len();
        let mut succ = vec![EventSet::EMPTY; n];
        let mut last_in_thread: BTreeMap<Tid, (u32, usize)> = BTreeMap::new();
        let mut by_thread: Vec<(Tid, u32, usize)> = (1..n).map(|i| (self.events[i].tid, self.events[i].idx, i)).collect();
        by_thread.sort_unstable();
        for &(tid, idx, i) in &by_thread {
            match last_in_thread.get(&tid) {
                Some(&(_, prev)) => succ[prev].insert(i),
                None => succ[0].insert(i),
            }
            last_in_thread.insert(tid, (idx, i));
        }
        let mut mo_next = vec![None; n];
        for list in self.mo.values() {
            for w in list.windows(2) {
                succ[w[0]].insert(w[1]);
                if w[0] != 0 {
                    mo_next[w[0]] = Some(w[1]);
                }
            }
        }
        for read in 1..n {
            if let Some(w) = self.rf[read] {
                succ[w].insert(read);
                let next = if w == 0 {
                    self.events[read].label.loc().and_then(|loc| self.mo(loc).get(1).copied())
                } else {
                    mo_next[w]
                };
                if let Some(nx) = next {
                    succ[read].insert(nx);
                }
            }
        }
        succ
    }

    /// sc = (po ∪ rf ∪ mo ∪ fr)+
    pub fn sc(&self) -> Relation {
        Relation { succ: self.sc_base() }.closure()
    }

    /// True iff sc is irreflexive, checked by topological elimination.
    pub fn is_sc_consistent(&self) -> bool {
        let succ = self.sc_base();
        let n = succ.len();
        let mut indeg = vec![0u32; n];
        for s in &succ {
            for j in s.iter() {
                indeg[j] += 1;
            }
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = stack.pop() {
            seen += 1;
            for j in succ[i].iter() {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    stack.push(j);
                }
            }
        }
        seen == n
    }

    /// Events with no outgoing sc edge.
    pub fn sc_maximal(&self) -> EventSet {
        self.sc_base().iter().enumerate().filter(|(_, s)| s.is_empty()).map(|(i, _)| i).collect()
    }

    /// Events x with (x, e) ∈ porf.
    pub fn porf_prefix(&self, e: usize) -> EventSet {
        let mut seen = EventSet::EMPTY;
        let mut stack = vec![e];
        while let Some(x) = stack.pop() {
            let ev = self.events[x];
            let mut preds = Vec::new();
            if x != 0 {
                preds.push(0);
                for (j, o) in self.events.iter().enumerate() {
                    if o.tid == ev.tid && o.idx < ev.idx && j != 0 {
                        preds.push(j);
                    }
                }
            }
            if let Some(w) = self.rf[x] {
                preds.push(w);
            }
            for p in preds {
                if !seen.contains(p) {
                    seen.insert(p);
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// The subgraph on `keep`, preserving insertion and mo order.
    pub fn restrict(&self, keep: EventSet) -> Result<ExecutionGraph, GraphError> {
        if !keep.contains(0) {
            return Err(GraphError::MissingInit);
        }
        let mut remap = vec![usize::MAX; self.len()];
        let mut events = Vec::with_capacity(keep.len());
        for (i, slot) in remap.iter_mut().enumerate() {
            if keep.contains(i) {
                *slot = events.len();
                events.push(self.events[i]);
            }
        }
        let mut rf = Vec::with_capacity(events.len());
        for i in 0..self.len() {
            if !keep.contains(i) {
                continue;
            }
            rf.push(match self.rf[i] {
                Some(w) if !keep.contains(w) => {
                    return Err(GraphError::DanglingRf {
                        read: self.events[i].to_string(),
                        source_event: self.events[w].to_string(),
                    })
                }
                Some(w) => Some(remap[w]),
                None => None,
            });
        }
        let mut mo = BTreeMap::new();
        for (loc, list) in &self.mo {
            let kept: Vec<usize> = list.iter().filter(|&&w| keep.contains(w)).map(|&w| remap[w]).collect();
            if kept.len() > 1 {
                mo.insert(*loc, kept);
            }
        }
        Ok(ExecutionGraph { events, rf, mo })
    }

    fn encode_event(out: &mut Vec<i64>, e: &Event) {
        out.push(e.tid as i64);
        out.push(e.idx as i64);
        match e.label {
            Label::Init => out.extend([0, 0, 0]),
            Label::Write { loc, val } => out.extend([1, loc.0 as i64, val]),
            Label::Read { loc, val } => out.extend([2, loc.0 as i64, val]),
        }
    }

    fn encode_relations(&self, out: &mut Vec<i64>, order: &[usize]) {
        out.push(-1);
        for &i in order {
            if let Some(w) = self.rf[i] {
                let (r, s) = (self.events[i], self.events[w]);
                out.extend([r.tid as i64, r.idx as i64, s.tid as i64, s.idx as i64]);
            }
        }
        for (loc, list) in &self.mo {
            out.extend([-2, loc.0 as i64]);
            for &w in list {
                out.extend([self.events[w].tid as i64, self.events[w].idx as i64]);
            }
        }
    }

    /// Identity modulo insertion order.
    pub fn canonical_key(&self) -> CanonicalKey {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| (self.events[i].tid, self.events[i].idx));
        let mut out = Vec::with_capacity(self.len() * 9);
        for &i in &order {
            Self::encode_event(&mut out, &self.events[i]);
        }
        self.encode_relations(&mut out, &order);
        CanonicalKey(out)
    }

    /// Identity including insertion order.
    pub fn ordered_key(&self) -> CanonicalKey {
        let order: Vec<usize> = (0..self.len()).collect();
        let mut out = Vec::with_capacity(self.len() * 9);
        for e in &self.events {
            Self::encode_event(&mut out, e);
        }
        self.encode_relations(&mut out, &order);
        CanonicalKey(out)
    }

    /// Stable text form: events in insertion order, then rf and mo edges.
    ///
    /// ```text
    /// events:
    ///   0 init
    ///   1 t1.1:R(l0,0)
    /// rf:
    ///   0 -> 1
    /// mo l0: 0
    /// ```
    pub fn debug_text(&self) -> String {
        let mut s = String::from("events:\n");
        for (i, e) in self.events.iter().enumerate() {
            let _ = writeln!(s, "  {i} {e}");
        }
        s.push_str("rf:\n");
        for (i, src) in self.rf.iter().enumerate() {
            if let Some(w) = src {
                let _ = writeln!(s, "  {w} -> {i}");
            }
        }
        for (loc, list) in &self.mo {
            let items: Vec<String> = list.iter().map(|w| w.to_string()).collect();
            let _ = writeln!(s, "mo l{}: {}", loc.0, items.join(" "));
        }
        s
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const X: Loc = Loc(0);
    const Y: Loc = Loc(1);

    fn store_buffering() -> ExecutionGraph {
        let mut g = ExecutionGraph::initial();
        g.add_write_last(1, 1, X, 1).unwrap();
        g.add_read(1, 2, Y, 0).unwrap();
        g.add_write_last(2, 1, Y, 1).unwrap();
        g.add_read(2, 2, X, 0).unwrap();
        g
    }

    /// Pairwise closure by repeated relational composition.
    fn naive_closure(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<bool>> {
        let mut m = vec![vec![false; n]; n];
        for &(a, b) in pairs {
            m[a][b] = true;
        }
        loop {
            let mut changed = false;
            for a in 0..n {
                for b in 0..n {
                    if m[a][b] {
                        for c in 0..n {
                            if m[b][c] && !m[a][c] {
                                m[a][c] = true;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                return m;
            }
        }
    }

    fn naive_sc_pairs(g: &ExecutionGraph) -> Vec<(usize, usize)> {
        let n = g.len();
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let (ea, eb) = (g.event(a), g.event(b));
                let po = (a == 0 && b != 0) || (ea.tid == eb.tid && ea.tid != 0 && ea.idx < eb.idx);
                let rf = g.rf(b) == Some(a);
                let mo = match (ea.label.loc().or(eb.label.loc()), ea.label.is_write() && eb.label.is_write()) {
                    (Some(loc), true) => {
                        matches!((g.mo_position(loc, a), g.mo_position(loc, b)), (Some(i), Some(j)) if i < j)
                    }
                    _ => false,
                };
                // fr: rf(a) precedes b in mo
                let fr = match (g.rf(a), eb.label) {
                    (Some(w), Label::Write { loc, .. }) if ea.label.loc() == Some(loc) => {
                        matches!((g.mo_position(loc, w), g.mo_position(loc, b)), (Some(i), Some(j)) if i < j)
                    }
                    _ => false,
                };
                if po || rf || mo || fr {
                    pairs.push((a, b));
                }
            }
        }
        pairs
    }

    #[test]
    fn initial_graph_is_consistent() {
        let g = ExecutionGraph::initial();
        assert!(g.is_sc_consistent());
        assert_eq!(g.sc_maximal(), EventSet::singleton(0));
        assert_eq!(g.mo_max(X), 0);
    }

    #[test]
    fn store_buffering_is_inconsistent() {
        let g = store_buffering();
        assert!(!g.is_sc_consistent());
        let m = naive_closure(g.len(), &naive_sc_pairs(&g));
        assert!((0..g.len()).any(|i| m[i][i]));
        assert!(!g.sc().is_irreflexive());
    }

    #[test]
    fn sc_maximal_of_r_w_w_leaf() {
        // read from init, mo init < w1 < w2: the read has fr edges to both writes
        let mut g = ExecutionGraph::initial();
        let r = g.add_read(1, 1, X, 0).unwrap();
        g.add_write_last(2, 1, X, 1).unwrap();
        let w2 = g.add_write_last(3, 1, X, 2).unwrap();
        assert!(g.is_sc_consistent());
        assert!(g.fr().contains(r, w2));
        assert_eq!(g.sc_maximal(), EventSet::singleton(w2));
    }

    #[test]
    fn sc_maximal_of_r_rr_leaf() {
        let mut g = ExecutionGraph::initial();
        let a = g.add_read(1, 1, X, 0).unwrap();
        g.add_read(2, 1, X, 0).unwrap();
        let c = g.add_read(2, 2, X, 0).unwrap();
        assert_eq!(g.sc_maximal().iter().collect::<Vec<_>>(), vec![a, c]);
    }

    #[test]
    fn mo_max_tracks_appends() {
        let mut g = ExecutionGraph::initial();
        g.add_write_last(1, 1, X, 1).unwrap();
        let w2 = g.add_write_last(2, 1, X, 2).unwrap();
        assert_eq!(g.mo_max(X), w2);
        assert_eq!(g.mo_max(Y), 0);
    }

    #[test]
    fn canonical_key_ignores_insertion_order() {
        let mut a = ExecutionGraph::initial();
        a.add_read(1, 1, X, 0).unwrap();
        a.add_read(2, 1, X, 0).unwrap();
        let mut b = ExecutionGraph::initial();
        b.add_read(2, 1, X, 0).unwrap();
        b.add_read(1, 1, X, 0).unwrap();
        assert_eq!(a.canonical_key(), b.canonical_key());
        assert_ne!(a.ordered_key(), b.ordered_key());

        let mut c = ExecutionGraph::initial();
        let w = c.add_write_last(2, 1, X, 1).unwrap();
        c.add_read(1, 1, X, 0).unwrap();
        let mut d = c.clone();
        d.set_rf(2, w);
        assert_ne!(c.canonical_key(), d.canonical_key());
    }

    #[test]
    fn restrict_identity_and_deletion() {
        let mut g = ExecutionGraph::initial();
        let r = g.add_read(1, 1, X, 0).unwrap();
        let w = g.add_write_last(2, 1, X, 1).unwrap();
        assert_eq!(g.restrict(g.all()).unwrap(), g);
        let h = g.restrict(g.all().minus(EventSet::singleton(w))).unwrap();
        assert_eq!(h.len(), 2);
        assert!(h.event(r).label.is_read());
        assert_eq!(h.mo(X), &[0]);

        let mut g2 = ExecutionGraph::initial();
        let w = g2.add_write_last(2, 1, X, 1).unwrap();
        g2.add_read(1, 1, X, w).unwrap();
        let err = g2.restrict(g2.all().minus(EventSet::singleton(w))).unwrap_err();
        assert!(matches!(err, GraphError::DanglingRf { .. }));
    }

    #[test]
    fn porf_prefix_follows_rf_and_po() {
        let mut g = ExecutionGraph::initial();
        let w = g.add_write_last(1, 1, X, 1).unwrap();
        let r = g.add_read(2, 1, X, w).unwrap();
        let w2 = g.add_write_last(2, 2, Y, 1).unwrap();
        let pre = g.porf_prefix(w2);
        assert!(pre.contains(0) && pre.contains(w) && pre.contains(r));
        assert!(!pre.contains(w2));
        let porf = g.porf();
        assert!(porf.contains(w, w2));
    }

    #[test]
    fn debug_text_is_stable() {
        let mut g = ExecutionGraph::initial();
        g.add_read(1, 1, X, 0).unwrap();
        g.add_write_last(2, 1, X, 1).unwrap();
        assert_eq!(
            g.debug_text(),
            "events:\n  0 init\n  1 t1.1:R(l0,0)\n  2 t2.1:W(l0,1)\nrf:\n  0 -> 1\nmo l0: 0 2\n"
        );
    }

    /// Random well-formed graph over two locations with arbitrary rf and mo.
    fn arb_graph() -> impl Strategy<Value = ExecutionGraph> {
        let step = (1u32..4, any::<bool>(), 0u32..2, any::<prop::sample::Index>(), any::<prop::sample::Index>());
        prop::collection::vec(step, 0..9).prop_map(|steps| {
            let mut g = ExecutionGraph::initial();
            let mut next_idx = [0u32; 4];
            for (tid, is_write, loc, a, b) in steps {
                next_idx[tid as usize] += 1;
                let idx = next_idx[tid as usize];
                let loc = Loc(loc);
                if is_write {
                    let list = g.mo(loc).to_vec();
                    let anchor = list[a.index(list.len())];
                    g.add_write(tid, idx, loc, b.index(5) as i64, anchor).unwrap();
                } else {
                    let list = g.mo(loc).to_vec();
                    g.add_read(tid, idx, loc, list[a.index(list.len())]).unwrap();
                }
            }
            g
        })
    }

    proptest! {
        #[test]
        fn consistency_matches_naive_closure(g in arb_graph()) {
            let m = naive_closure(g.len(), &naive_sc_pairs(&g));
            let cyclic = (0..g.len()).any(|i| m[i][i]);
            prop_assert_eq!(g.is_sc_consistent(), !cyclic);
            let sc = g.sc();
            for a in 0..g.len() {
                for b in 0..g.len() {
                    prop_assert_eq!(sc.contains(a, b), m[a][b]);
                }
            }
        }

        #[test]
        fn sc_maximal_matches_definition(g in arb_graph()) {
            prop_assume!(g.is_sc_consistent());
            let sc = g.sc();
            let maxi = g.sc_maximal();
            prop_assert!(!maxi.is_empty());
            for a in 0..g.len() {
                prop_assert_eq!(maxi.contains(a), sc.successors(a).is_empty());
            }
        }

        #[test]
        fn fr_matches_pair_enumeration(g in arb_graph()) {
            let fr = g.fr();
            for r in 0..g.len() {
                for w in 0..g.len() {
                    let expected = match (g.rf(r), g.event(w).label) {
                        (Some(src), Label::Write { loc, .. }) if g.event(r).label.loc() == Some(loc) => {
                            g.mo_position(loc, src).unwrap() < g.mo_position(loc, w).unwrap()
                        }
                        _ => false,
                    };
                    prop_assert_eq!(fr.contains(r, w), expected);
                }
            }
        }

        #[test]
        fn read_values_match_sources(g in arb_graph()) {
            for i in 1..g.len() {
                if let Label::Read { val, .. } = g.event(i).label {
                    let src = g.rf(i).unwrap();
                    prop_assert_eq!(val, g.event(src).label.val().unwrap_or(0));
                }
            }
        }

        #[test]
        fn restrict_preserves_relations(g in arb_graph(), mask in any::<u16>()) {
            let keep: EventSet = (0..g.len()).filter(|&i| i == 0 || mask >> (i % 16) & 1 == 1).collect();
            let kept: Vec<usize> = keep.iter().collect();
            match g.restrict(keep) {
                Ok(h) => {
                    prop_assert_eq!(h.len(), kept.len());
                    let (gpo, grf, gmo) = (g.po(), g.rf_relation(), g.mo_relation());
                    let (hpo, hrf, hmo) = (h.po(), h.rf_relation(), h.mo_relation());
                    for (a2, &a) in kept.iter().enumerate() {
                        prop_assert_eq!(h.event(a2), g.event(a));
                        for (b2, &b) in kept.iter().enumerate() {
                            prop_assert_eq!(hpo.contains(a2, b2), gpo.contains(a, b));
                            prop_assert_eq!(hrf.contains(a2, b2), grf.contains(a, b));
                            prop_assert_eq!(hmo.contains(a2, b2), gmo.contains(a, b));
                        }
                    }
                    prop_assert_eq!(h.restrict(h.all()).unwrap(), h);
                }
                Err(GraphError::DanglingRf { .. }) => {
                    prop_assert!(kept.iter().any(|&i| g.rf(i).is_some_and(|w| !keep.contains(w))));
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
