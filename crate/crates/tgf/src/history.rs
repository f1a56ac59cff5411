//! Weighted history graphs over a sliding window of the link stream, with
//! constant-time per-link feature extraction.
//!
//! A graph windows the stream either by duration (all occurrences within the
//! trailing `d` time units) or by size (the last `s` occurrences). Node
//! degrees, weighted degrees and link weights are each tracked by a DSC, so
//! the whole 30-feature row of a link is read off in O(1).

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::dsc::Dsc;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("link {index} has timestamp {t} older than previous timestamp {prev}")]
    OutOfOrder { index: usize, t: f64, prev: f64 },
}

/// One stream element: an interaction between `u` and `v` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampedLink {
    pub t: f64,
    pub u: String,
    pub v: String,
}

impl TimestampedLink {
    pub fn new(t: f64, u: impl Into<String>, v: impl Into<String>) -> Self {
        TimestampedLink { t, u: u.into(), v: v.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowKind {
    /// Keep occurrences with `t_now - t' <= d`.
    ByDuration(f64),
    /// Keep the last `s` occurrences.
    BySize(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryConfig {
    pub id: String,
    pub kind: WindowKind,
}

impl HistoryConfig {
    pub fn by_size(s: usize) -> Self {
        HistoryConfig { id: format!("H{s}"), kind: WindowKind::BySize(s) }
    }

    pub fn by_duration(d: f64) -> Self {
        HistoryConfig { id: format!("G{d}"), kind: WindowKind::ByDuration(d) }
    }
}

pub const FEATURE_COUNT: usize = 30;

/// Column names, in output order: the graph family first, then the link
/// family with endpoints ordered so that `u_deg <= v_deg`.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "n",
    "m",
    "mu",
    "deg1_count",
    "deg2_count",
    "deg_max",
    "deg_median",
    "wdeg1_count",
    "wdeg2_count",
    "wdeg_max",
    "wdeg_median",
    "w1_count",
    "w2_count",
    "w_max",
    "w_median",
    "u_deg",
    "v_deg",
    "u_deg_count",
    "v_deg_count",
    "u_deg_gt",
    "v_deg_gt",
    "u_wdeg",
    "v_wdeg",
    "u_wdeg_count",
    "v_wdeg_count",
    "u_wdeg_gt",
    "v_wdeg_gt",
    "uv_w",
    "uv_w_count",
    "uv_w_gt",
];

/// The 30 features of one link against one history graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FeatureRow {
    pub n: u64,
    pub m: u64,
    pub mu: u64,
    pub deg1_count: u64,
    pub deg2_count: u64,
    pub deg_max: u64,
    pub deg_median: u64,
    pub wdeg1_count: u64,
    pub wdeg2_count: u64,
    pub wdeg_max: u64,
    pub wdeg_median: u64,
    pub w1_count: u64,
    pub w2_count: u64,
    pub w_max: u64,
    pub w_median: u64,
    pub u_deg: u64,
    pub v_deg: u64,
    pub u_deg_count: u64,
    pub v_deg_count: u64,
    pub u_deg_gt: u64,
    pub v_deg_gt: u64,
    pub u_wdeg: u64,
    pub v_wdeg: u64,
    pub u_wdeg_count: u64,
    pub v_wdeg_count: u64,
    pub u_wdeg_gt: u64,
    pub v_wdeg_gt: u64,
    pub uv_w: u64,
    pub uv_w_count: u64,
    pub uv_w_gt: u64,
}

impl FeatureRow {
    pub fn values(&self) -> [u64; FEATURE_COUNT] {
        [
            self.n,
            self.m,
            self.mu,
            self.deg1_count,
            self.deg2_count,
            self.deg_max,
            self.deg_median,
            self.wdeg1_count,
            self.wdeg2_count,
            self.wdeg_max,
            self.wdeg_median,
            self.w1_count,
            self.w2_count,
            self.w_max,
            self.w_median,
            self.u_deg,
            self.v_deg,
            self.u_deg_count,
            self.v_deg_count,
            self.u_deg_gt,
            self.v_deg_gt,
            self.u_wdeg,
            self.v_wdeg,
            self.u_wdeg_count,
            self.v_wdeg_count,
            self.u_wdeg_gt,
            self.v_wdeg_gt,
            self.uv_w,
            self.uv_w_count,
            self.uv_w_gt,
        ]
    }
}

type NodeId = u32;

fn pair_key(a: NodeId, b: NodeId) -> u64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

/// One weighted undirected history graph over a sliding window.
pub struct HistoryGraph {
    config: HistoryConfig,
    // occurrences currently in the window, oldest first
    queue: VecDeque<(f64, NodeId, NodeId)>,
    degrees: Dsc<NodeId>,
    weighted_degrees: Dsc<NodeId>,
    link_weights: Dsc<u64>,
    names: Vec<String>,
    ids: HashMap<String, NodeId>,
    last_t: Option<f64>,
    observed: usize,
}

impl HistoryGraph {
    pub fn new(config: HistoryConfig) -> Self {
        HistoryGraph {
            config,
            queue: VecDeque::new(),
            degrees: Dsc::new(),
            weighted_degrees: Dsc::new(),
            link_weights: Dsc::new(),
            names: Vec::new(),
            ids: HashMap::new(),
            last_t: None,
            observed: 0,
        }
    }

    pub fn config(&self) -> &HistoryConfig {
        &self.config
    }

    pub fn window_len(&self) -> usize {
        self.queue.len()
    }

    /// Raw window contents as (t, u, v), oldest first. Test support.
    pub fn window_contents(&self) -> Vec<(f64, String, String)> {
        self.queue
            .iter()
            .map(|&(t, a, b)| (t, self.names[a as usize].clone(), self.names[b as usize].clone()))
            .collect()
    }

    fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as NodeId;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    /// Process the next link of the stream: evict expired occurrences,
    /// compute the feature row against the state strictly before this link,
    /// then insert the occurrence (and, for size windows, evict the oldest
    /// occurrence beyond the size bound).
    pub fn observe(&mut self, link: &TimestampedLink) -> Result<FeatureRow, HistoryError> {
        if let Some(prev) = self.last_t {
            if link.t < prev {
                return Err(HistoryError::OutOfOrder { index: self.observed, t: link.t, prev });
            }
        }
        self.last_t = Some(link.t);
        self.observed += 1;

        if let WindowKind::ByDuration(d) = self.config.kind {
            while let Some(&(t_old, a, b)) = self.queue.front() {
                if link.t - t_old > d {
                    self.queue.pop_front();
                    self.remove_occurrence(a, b);
                } else {
                    break;
                }
            }
        }

        let u = self.intern(&link.u);
        let v = self.intern(&link.v);
        let row = self.features_for(u, v);

        self.queue.push_back((link.t, u, v));
        self.add_occurrence(u, v);

        if let WindowKind::BySize(s) = self.config.kind {
            if self.queue.len() > s {
                let (_, a, b) = self.queue.pop_front().unwrap();
                self.remove_occurrence(a, b);
            }
        }

        Ok(row)
    }

    /// Feature row for a (possibly absent) node pair against the current
    /// graph state, without touching the window.
    pub fn compute_features(&self, u: &str, v: &str) -> FeatureRow {
        let ui = self.ids.get(u).copied();
        let vi = self.ids.get(v).copied();
        match (ui, vi) {
            (Some(a), Some(b)) => self.features_for(a, b),
            (one, other) => {
                // at least one endpoint never seen by this graph
                let known = one.or(other);
                self.features_absent(known)
            }
        }
    }

    fn add_occurrence(&mut self, u: NodeId, v: NodeId) {
        let key = pair_key(u, v);
        let w = self.link_weights.increase(key);
        if w == 1 {
            self.degrees.increase(u);
            self.degrees.increase(v);
        }
        self.weighted_degrees.increase(u);
        self.weighted_degrees.increase(v);
    }

    fn remove_occurrence(&mut self, u: NodeId, v: NodeId) {
        let key = pair_key(u, v);
        let w = self.link_weights.decrease(&key).expect("window weight");
        if w == 0 {
            self.degrees.decrease(&u).expect("window degree");
            self.degrees.decrease(&v).expect("window degree");
        }
        self.weighted_degrees.decrease(&u).expect("window wdegree");
        self.weighted_degrees.decrease(&v).expect("window wdegree");
    }

    fn graph_family(&self, row: &mut FeatureRow) {
        row.n = self.degrees.size() as u64;
        row.m = self.link_weights.size() as u64;
        row.mu = self.link_weights.sum();
        row.deg1_count = self.degrees.count_with_value(1) as u64;
        row.deg2_count = self.degrees.count_with_value(2) as u64;
        row.deg_max = self.degrees.max_value();
        row.deg_median = self.degrees.median_value();
        row.wdeg1_count = self.weighted_degrees.count_with_value(1) as u64;
        row.wdeg2_count = self.weighted_degrees.count_with_value(2) as u64;
        row.wdeg_max = self.weighted_degrees.max_value();
        row.wdeg_median = self.weighted_degrees.median_value();
        row.w1_count = self.link_weights.count_with_value(1) as u64;
        row.w2_count = self.link_weights.count_with_value(2) as u64;
        row.w_max = self.link_weights.max_value();
        row.w_median = self.link_weights.median_value();
    }

    // count / strictly-greater queries with the absence conventions:
    // count_with_value(0) = 0, count_greater_than(0) = all live counters.
    fn count_gt<K: std::hash::Hash + Eq + Clone + std::fmt::Debug>(dsc: &Dsc<K>, v: u64) -> u64 {
        dsc.count_greater_than(v).expect("value live in DSC") as u64
    }

    fn features_for(&self, u: NodeId, v: NodeId) -> FeatureRow {
        let mut row = FeatureRow::default();
        self.graph_family(&mut row);

        let du = self.degrees.value(&u);
        let dv = self.degrees.value(&v);
        let wu = self.weighted_degrees.value(&u);
        let wv = self.weighted_degrees.value(&v);
        // order endpoints by degree, then weighted degree, then name
        let swap = match du.cmp(&dv) {
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal => match wu.cmp(&wv) {
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => self.names[u as usize] > self.names[v as usize],
            },
        };
        let (da, db) = if swap { (dv, du) } else { (du, dv) };
        let (wa, wb) = if swap { (wv, wu) } else { (wu, wv) };

        row.u_deg = da;
        row.v_deg = db;
        row.u_deg_count = self.degrees.count_with_value(da) as u64;
        row.v_deg_count = self.degrees.count_with_value(db) as u64;
        row.u_deg_gt = Self::count_gt(&self.degrees, da);
        row.v_deg_gt = Self::count_gt(&self.degrees, db);
        row.u_wdeg = wa;
        row.v_wdeg = wb;
        row.u_wdeg_count = self.weighted_degrees.count_with_value(wa) as u64;
        row.v_wdeg_count = self.weighted_degrees.count_with_value(wb) as u64;
        row.u_wdeg_gt = Self::count_gt(&self.weighted_degrees, wa);
        row.v_wdeg_gt = Self::count_gt(&self.weighted_degrees, wb);

        let w = self.link_weights.value(&pair_key(u, v));
        row.uv_w = w;
        row.uv_w_count = self.link_weights.count_with_value(w) as u64;
        row.uv_w_gt = Self::count_gt(&self.link_weights, w);
        row
    }

    // Pair where at least one endpoint is unknown to the graph: degree and
    // weight conventions collapse to zero, pair weight is zero.
    fn features_absent(&self, known: Option<NodeId>) -> FeatureRow {
        let mut row = FeatureRow::default();
        self.graph_family(&mut row);
        let (dk, wk) = known.map_or((0, 0), |id| {
            (self.degrees.value(&id), self.weighted_degrees.value(&id))
        });
        // unknown endpoint has degree 0 <= any live degree, so it sorts first
        row.u_deg = 0;
        row.v_deg = dk;
        row.u_deg_count = 0;
        row.v_deg_count = self.degrees.count_with_value(dk) as u64;
        row.u_deg_gt = row.n;
        row.v_deg_gt = Self::count_gt(&self.degrees, dk);
        row.u_wdeg = 0;
        row.v_wdeg = wk;
        row.u_wdeg_count = 0;
        row.v_wdeg_count = self.weighted_degrees.count_with_value(wk) as u64;
        row.u_wdeg_gt = row.n;
        row.v_wdeg_gt = Self::count_gt(&self.weighted_degrees, wk);
        row.uv_w = 0;
        row.uv_w_count = 0;
        row.uv_w_gt = row.m;
        row
    }
}

/// A set of history graphs observed in lockstep, producing one concatenated
/// feature vector per link.
pub struct Pipeline {
    graphs: Vec<HistoryGraph>,
}

impl Pipeline {
    pub fn new(configs: Vec<HistoryConfig>) -> Self {
        Pipeline { graphs: configs.into_iter().map(HistoryGraph::new).collect() }
    }

    pub fn graph_count(&self) -> usize {
        self.graphs.len()
    }

    pub fn feature_width(&self) -> usize {
        self.graphs.len() * FEATURE_COUNT
    }

    /// Column names "<graph_id>.<feature>", in configuration order.
    pub fn header(&self) -> Vec<String> {
        self.graphs
            .iter()
            .flat_map(|g| {
                let id = g.config().id.clone();
                FEATURE_NAMES.iter().map(move |f| format!("{id}.{f}"))
            })
            .collect()
    }

    pub fn observe(&mut self, link: &TimestampedLink) -> Result<Vec<u64>, HistoryError> {
        let mut out = Vec::with_capacity(self.feature_width());
        for g in &mut self.graphs {
            out.extend_from_slice(&g.observe(link)?.values());
        }
        Ok(out)
    }
}
