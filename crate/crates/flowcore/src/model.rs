//! Game instances, flows, payoffs and feasibility.
//!
//! A game instance is a connected node-capacitated supply graph `G` together
//! with a commodity list: unordered node pairs `uv` with demands `d_uv >= 0`.
//! A flow assigns amounts to paths joining commodity endpoints; the payoff of
//! a node is the total flow terminating at it, so each routed unit credits
//! both endpoints of its commodity.

use crate::error::{Error, Result};
use crate::rational::{format_rational, parse_rational, Capacity, Rational};
use num_traits::Zero;
use serde_json::{json, Map, Value};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Players are 1-based consecutive integers; on a path, ids follow the path.
pub type Node = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topology {
    Path,
    Spider { root: Node },
    General,
}

/// An unordered demand pair, stored with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commodity {
    pub u: Node,
    pub v: Node,
    pub demand: Rational,
}

impl Commodity {
    pub fn pair(&self) -> (Node, Node) {
        (self.u, self.v)
    }
}

#[derive(Debug, Clone)]
pub struct GameInstance {
    n: usize,
    topology: Topology,
    edges: Vec<(Node, Node)>,
    capacities: Vec<Capacity>,
    commodities: Vec<Commodity>,
    adjacency: Vec<Vec<Node>>,
    // Spider bookkeeping: leg index per node (root has none) and distance
    // from the root, both in supply-edge hops.
    leg_of: Vec<Option<usize>>,
    depth: Vec<usize>,
    legs: Vec<Vec<Node>>,
}

fn normalize_pair(u: Node, v: Node) -> (Node, Node) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

fn build_adjacency(n: usize, edges: &[(Node, Node)]) -> Vec<Vec<Node>> {
    let mut adjacency = vec![Vec::new(); n + 1];
    for &(u, v) in edges {
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    for list in adjacency.iter_mut() {
        list.sort_unstable();
    }
    adjacency
}

fn connected(n: usize, adjacency: &[Vec<Node>]) -> bool {
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n + 1];
    let mut queue = VecDeque::from([1]);
    seen[1] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &w in &adjacency[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n
}

impl GameInstance {
    /// A path `1-2-...-n`; supply edges are implied by the node ordering.
    pub fn path(capacities: Vec<Capacity>, commodities: Vec<(Node, Node, Rational)>) -> Result<Self> {
        let n = capacities.len();
        let edges = (1..n).map(|i| (i, i + 1)).collect();
        Self::build(n, Topology::Path, edges, capacities, commodities)
    }

    /// A spider: a tree with at most one node of degree greater than two,
    /// which must be the declared root.
    pub fn spider(
        root: Node,
        edges: Vec<(Node, Node)>,
        capacities: Vec<Capacity>,
        commodities: Vec<(Node, Node, Rational)>,
    ) -> Result<Self> {
        let n = capacities.len();
        Self::build(n, Topology::Spider { root }, edges, capacities, commodities)
    }

    pub fn general(
        edges: Vec<(Node, Node)>,
        capacities: Vec<Capacity>,
        commodities: Vec<(Node, Node, Rational)>,
    ) -> Result<Self> {
        let n = capacities.len();
        Self::build(n, Topology::General, edges, capacities, commodities)
    }

    fn build(
        n: usize,
        topology: Topology,
        edges: Vec<(Node, Node)>,
        capacities: Vec<Capacity>,
        commodities: Vec<(Node, Node, Rational)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInstance("instance needs at least one node".into()));
        }
        let mut edge_set = BTreeSet::new();
        for &(u, v) in &edges {
            if u == 0 || v == 0 || u > n || v > n {
                return Err(Error::InvalidInstance(format!("edge {u}-{v} out of range")));
            }
            if u == v {
                return Err(Error::InvalidInstance(format!("self-loop at {u}")));
            }
            if !edge_set.insert(normalize_pair(u, v)) {
                return Err(Error::InvalidInstance(format!("duplicate edge {u}-{v}")));
            }
        }
        let edges: Vec<(Node, Node)> = edge_set.into_iter().collect();
        let adjacency = build_adjacency(n, &edges);
        if !connected(n, &adjacency) {
            return Err(Error::InvalidInstance("supply graph is disconnected".into()));
        }
        for cap in &capacities {
            if let Capacity::Finite(c) = cap {
                if c < &Rational::zero() {
                    return Err(Error::InvalidInstance("negative capacity".into()));
                }
            }
        }

        let mut seen_pairs = BTreeSet::new();
        let mut commodity_list = Vec::with_capacity(commodities.len());
        for (u, v, demand) in commodities {
            if u == 0 || v == 0 || u > n || v > n {
                return Err(Error::InvalidInstance(format!("commodity {u}-{v} out of range")));
            }
            if u == v {
                return Err(Error::InvalidInstance(format!(
                    "commodity {u}-{v} joins a node to itself"
                )));
            }
            if demand < Rational::zero() {
                return Err(Error::InvalidInstance(format!("negative demand on {u}-{v}")));
            }
            let (u, v) = normalize_pair(u, v);
            if !seen_pairs.insert((u, v)) {
                return Err(Error::InvalidInstance(format!("duplicate commodity {u}-{v}")));
            }
            commodity_list.push(Commodity { u, v, demand });
        }
        commodity_list.sort_by_key(|c| (c.u, c.v));

        let mut instance = GameInstance {
            n,
            topology,
            edges,
            capacities,
            commodities: commodity_list,
            adjacency,
            leg_of: Vec::new(),
            depth: Vec::new(),
            legs: Vec::new(),
        };
        instance.check_topology()?;
        if let Topology::Spider { root } = instance.topology {
            instance.index_spider(root);
        }
        Ok(instance)
    }

    fn check_topology(&self) -> Result<()> {
        match self.topology {
            Topology::Path => {
                let want: Vec<(Node, Node)> = (1..self.n).map(|i| (i, i + 1)).collect();
                if self.edges != want {
                    return Err(Error::InvalidInstance(
                        "path topology requires exactly the edges i-(i+1)".into(),
                    ));
                }
            }
            Topology::Spider { root } => {
                if root == 0 || root > self.n {
                    return Err(Error::InvalidInstance("spider root out of range".into()));
                }
                if self.edges.len() != self.n - 1 {
                    return Err(Error::InvalidInstance("spider supply graph must be a tree".into()));
                }
                for v in 1..=self.n {
                    if v != root && self.adjacency[v].len() > 2 {
                        return Err(Error::InvalidInstance(format!(
                            "node {v} has degree > 2 but is not the declared root"
                        )));
                    }
                }
            }
            Topology::General => {}
        }
        Ok(())
    }

    fn index_spider(&mut self, root: Node) {
        self.leg_of = vec![None; self.n + 1];
        self.depth = vec![0; self.n + 1];
        self.legs.clear();
        for &first in self.adjacency[root].clone().iter() {
            let leg_idx = self.legs.len();
            let mut leg = Vec::new();
            let mut prev = root;
            let mut cur = first;
            let mut d = 1;
            loop {
                self.leg_of[cur] = Some(leg_idx);
                self.depth[cur] = d;
                leg.push(cur);
                let next = self.adjacency[cur].iter().copied().find(|&w| w != prev);
                match next {
                    Some(w) => {
                        prev = cur;
                        cur = w;
                        d += 1;
                    }
                    None => break,
                }
            }
            self.legs.push(leg);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> {
        1..=self.n
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn is_tree_topology(&self) -> bool {
        !matches!(self.topology, Topology::General)
    }

    pub fn edges(&self) -> &[(Node, Node)] {
        &self.edges
    }

    pub fn capacity(&self, v: Node) -> &Capacity {
        &self.capacities[v - 1]
    }

    pub fn capacities(&self) -> &[Capacity] {
        &self.capacities
    }

    pub fn commodities(&self) -> &[Commodity] {
        &self.commodities
    }

    pub fn demand(&self, u: Node, v: Node) -> Option<&Rational> {
        let key = normalize_pair(u, v);
        self.commodities
            .binary_search_by_key(&key, |c| c.pair())
            .ok()
            .map(|i| &self.commodities[i].demand)
    }

    pub fn neighbors(&self, v: Node) -> &[Node] {
        &self.adjacency[v]
    }

    pub fn spider_root(&self) -> Option<Node> {
        match self.topology {
            Topology::Spider { root } => Some(root),
            _ => None,
        }
    }

    /// Legs of a spider, each ordered from the root outward.
    pub fn spider_legs(&self) -> &[Vec<Node>] {
        &self.legs
    }

    pub fn spider_leg_of(&self, v: Node) -> Option<usize> {
        self.leg_of.get(v).copied().flatten()
    }

    /// Hop distance between two nodes on a tree topology.
    pub fn tree_distance(&self, u: Node, v: Node) -> Option<usize> {
        self.unique_path(u, v).map(|p| p.len() - 1)
    }

    /// The unique simple path joining `u` and `v` on Path/Spider topologies,
    /// as the node sequence from `u` to `v` inclusive.
    pub fn unique_path(&self, u: Node, v: Node) -> Option<Vec<Node>> {
        match self.topology {
            Topology::Path => {
                let (lo, hi) = normalize_pair(u, v);
                let seq: Vec<Node> = (lo..=hi).collect();
                if u <= v {
                    Some(seq)
                } else {
                    Some(seq.into_iter().rev().collect())
                }
            }
            Topology::Spider { root } => {
                let up = |mut x: Node| {
                    // walk toward the root collecting nodes
                    let mut out = vec![x];
                    while x != root {
                        let leg = &self.legs[self.leg_of[x].unwrap()];
                        let d = self.depth[x];
                        x = if d == 1 { root } else { leg[d - 2] };
                        out.push(x);
                    }
                    out
                };
                if u == v {
                    return Some(vec![u]);
                }
                let a = up(u);
                let b = up(v);
                // trim the shared suffix down to the meeting node
                let mut ai = a.len();
                let mut bi = b.len();
                while ai > 1 && bi > 1 && a[ai - 2] == b[bi - 2] {
                    ai -= 1;
                    bi -= 1;
                }
                let mut path = a[..ai].to_vec();
                path.extend(b[..bi - 1].iter().rev());
                Some(path)
            }
            Topology::General => None,
        }
    }

    /// All simple `u`-`v` paths whose nodes stay inside `within` (pass the
    /// full node set for paths in `G`). Hard error beyond `limit` paths.
    pub fn simple_paths(
        &self,
        u: Node,
        v: Node,
        within: &BTreeSet<Node>,
        limit: usize,
    ) -> Result<Vec<Vec<Node>>> {
        if !within.contains(&u) || !within.contains(&v) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let mut stack = vec![u];
        let mut on_path = vec![false; self.n + 1];
        on_path[u] = true;
        self.dfs_paths(u, v, within, limit, &mut stack, &mut on_path, &mut out)?;
        Ok(out)
    }

    fn dfs_paths(
        &self,
        cur: Node,
        target: Node,
        within: &BTreeSet<Node>,
        limit: usize,
        stack: &mut Vec<Node>,
        on_path: &mut Vec<bool>,
        out: &mut Vec<Vec<Node>>,
    ) -> Result<()> {
        if cur == target {
            if out.len() >= limit {
                return Err(Error::PathBudgetExceeded {
                    u: stack[0],
                    v: target,
                    limit,
                });
            }
            out.push(stack.clone());
            return Ok(());
        }
        for &w in &self.adjacency[cur] {
            if !on_path[w] && within.contains(&w) {
                on_path[w] = true;
                stack.push(w);
                self.dfs_paths(w, target, within, limit, stack, on_path, out)?;
                stack.pop();
                on_path[w] = false;
            }
        }
        Ok(())
    }

    /// Is `set` connected in the supply graph?
    pub fn is_connected_subset(&self, set: &BTreeSet<Node>) -> bool {
        let Some(&start) = set.iter().next() else {
            return false;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &w in &self.adjacency[u] {
                if set.contains(&w) && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen.len() == set.len()
    }

    /// The subgame induced by `coalition`: supply graph `G[S]`, commodities
    /// with both endpoints in `S`, nodes relabeled `1..|S|` in ascending
    /// order of their old ids. Returns the relabeling as `new -> old`.
    pub fn induced_subgame(&self, coalition: &BTreeSet<Node>) -> Result<(GameInstance, Vec<Node>)> {
        if coalition.is_empty() {
            return Err(Error::EmptyCoalition);
        }
        for &v in coalition {
            if v == 0 || v > self.n {
                return Err(Error::Structural(format!("node {v} out of range")));
            }
        }
        if !self.is_connected_subset(coalition) {
            return Err(Error::DisconnectedSubgame);
        }
        let new_to_old: Vec<Node> = coalition.iter().copied().collect();
        let mut old_to_new = BTreeMap::new();
        for (i, &old) in new_to_old.iter().enumerate() {
            old_to_new.insert(old, i + 1);
        }
        let edges: Vec<(Node, Node)> = self
            .edges
            .iter()
            .filter(|(u, v)| coalition.contains(u) && coalition.contains(v))
            .map(|(u, v)| (old_to_new[u], old_to_new[v]))
            .collect();
        let capacities: Vec<Capacity> = new_to_old.iter().map(|&v| self.capacity(v).clone()).collect();
        let commodities: Vec<(Node, Node, Rational)> = self
            .commodities
            .iter()
            .filter(|c| coalition.contains(&c.u) && coalition.contains(&c.v))
            .map(|c| (old_to_new[&c.u], old_to_new[&c.v], c.demand.clone()))
            .collect();
        let topology = classify_topology(new_to_old.len(), &edges);
        let sub = GameInstance::build(new_to_old.len(), topology, edges, capacities, commodities)?;
        Ok((sub, new_to_old))
    }

    pub fn to_json_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("n".into(), json!(self.n));
        let topo = match &self.topology {
            Topology::Path => "path",
            Topology::Spider { .. } => "spider",
            Topology::General => "general",
        };
        obj.insert("topology".into(), json!(topo));
        if let Topology::Spider { root } = self.topology {
            obj.insert("root".into(), json!(root));
        }
        if !matches!(self.topology, Topology::Path) {
            let edges: Vec<Value> = self.edges.iter().map(|&(u, v)| json!([u, v])).collect();
            obj.insert("edges".into(), Value::Array(edges));
        }
        obj.insert(
            "capacity".into(),
            Value::Array(self.capacities.iter().map(capacity_to_json).collect()),
        );
        obj.insert(
            "commodities".into(),
            Value::Array(
                self.commodities
                    .iter()
                    .map(|c| {
                        let mut m = Map::new();
                        m.insert("d".into(), rational_to_json(&c.demand));
                        m.insert("u".into(), json!(c.u));
                        m.insert("v".into(), json!(c.v));
                        Value::Object(m)
                    })
                    .collect(),
            ),
        );
        Value::Object(obj)
    }

    /// Canonical JSON: sorted keys, rationals as integers or "p/q" strings.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Json("instance must be a JSON object".into()))?;
        let n = obj
            .get("n")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Json("missing integer field n".into()))? as usize;
        let topo_name = obj
            .get("topology")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Json("missing topology".into()))?;
        let topology = match topo_name {
            "path" => Topology::Path,
            "spider" => {
                let root = obj
                    .get("root")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| Error::Json("spider requires root".into()))?;
                Topology::Spider { root: root as usize }
            }
            "general" => Topology::General,
            other => return Err(Error::Json(format!("unknown topology {other:?}"))),
        };
        let edges = match (&topology, obj.get("edges")) {
            (Topology::Path, None) => (1..n).map(|i| (i, i + 1)).collect(),
            (Topology::Path, Some(_)) => {
                return Err(Error::Json("path instances must omit edges".into()))
            }
            (_, Some(Value::Array(list))) => {
                let mut edges = Vec::with_capacity(list.len());
                for e in list {
                    let pair = e
                        .as_array()
                        .filter(|p| p.len() == 2)
                        .ok_or_else(|| Error::Json("edge must be [u,v]".into()))?;
                    let u = pair[0].as_u64().ok_or_else(|| Error::Json("bad edge".into()))?;
                    let v = pair[1].as_u64().ok_or_else(|| Error::Json("bad edge".into()))?;
                    edges.push((u as usize, v as usize));
                }
                edges
            }
            _ => return Err(Error::Json("missing edges".into())),
        };
        let caps_json = obj
            .get("capacity")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Json("missing capacity array".into()))?;
        if caps_json.len() != n {
            return Err(Error::Json("capacity array must have length n".into()));
        }
        let capacities = caps_json
            .iter()
            .map(capacity_from_json)
            .collect::<Result<Vec<_>>>()?;
        let mut commodities = Vec::new();
        if let Some(list) = obj.get("commodities").and_then(Value::as_array) {
            for c in list {
                let m = c
                    .as_object()
                    .ok_or_else(|| Error::Json("commodity must be an object".into()))?;
                let u = m
                    .get("u")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| Error::Json("commodity missing u".into()))? as usize;
                let v = m
                    .get("v")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| Error::Json("commodity missing v".into()))? as usize;
                let d = m
                    .get("d")
                    .ok_or_else(|| Error::Json("commodity missing d".into()))?;
                commodities.push((u, v, rational_from_json(d)?));
            }
        }
        Self::build(n, topology, edges, capacities, commodities)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Json(e.to_string()))?;
        Self::from_json_value(&value)
    }
}

/// Classifies a connected graph: `Path` when the edges are exactly
/// `i-(i+1)`, `Spider` for trees with at most one node of degree > 2,
/// otherwise `General`.
pub fn classify_topology(n: usize, edges: &[(Node, Node)]) -> Topology {
    let path_edges: Vec<(Node, Node)> = (1..n).map(|i| (i, i + 1)).collect();
    let mut sorted: Vec<(Node, Node)> = edges.iter().map(|&(u, v)| normalize_pair(u, v)).collect();
    sorted.sort_unstable();
    if sorted == path_edges {
        return Topology::Path;
    }
    if edges.len() == n - 1 {
        let adjacency = build_adjacency(n, edges);
        let high: Vec<Node> = (1..=n).filter(|&v| adjacency[v].len() > 2).collect();
        match high.len() {
            0 => {
                // Tree with max degree two: a path whose ids are out of
                // order. Root it at the smallest endpoint.
                let root = (1..=n).find(|&v| adjacency[v].len() <= 1).unwrap_or(1);
                return Topology::Spider { root };
            }
            1 => return Topology::Spider { root: high[0] },
            _ => {}
        }
    }
    Topology::General
}

pub fn rational_to_json(r: &Rational) -> Value {
    use num_traits::ToPrimitive;
    if r.denom() == &num_bigint::BigInt::from(1) {
        if let Some(i) = r.numer().to_i64() {
            return json!(i);
        }
    }
    json!(format_rational(r))
}

pub fn rational_from_json(value: &Value) -> Result<Rational> {
    match value {
        Value::Number(n) => parse_rational(&n.to_string()).map_err(Error::Json),
        Value::String(s) => parse_rational(s).map_err(Error::Json),
        other => Err(Error::Json(format!("expected rational, got {other}"))),
    }
}

pub fn capacity_to_json(c: &Capacity) -> Value {
    match c {
        Capacity::Finite(r) => rational_to_json(r),
        Capacity::Unbounded => json!("inf"),
    }
}

pub fn capacity_from_json(value: &Value) -> Result<Capacity> {
    if value.as_str() == Some("inf") {
        return Ok(Capacity::Unbounded);
    }
    rational_from_json(value).map(Capacity::Finite)
}

/// One routed path in general mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathFlow {
    pub u: Node,
    pub v: Node,
    pub path: Vec<Node>,
    pub amount: Rational,
}

/// Routed amounts: per commodity on unique-path topologies, per explicit
/// node path on general graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Flow {
    Unique(BTreeMap<(Node, Node), Rational>),
    General(Vec<PathFlow>),
}

impl Flow {
    pub fn zero_unique() -> Self {
        Flow::Unique(BTreeMap::new())
    }

    pub fn unique_from(pairs: &[(Node, Node, Rational)]) -> Self {
        let mut map = BTreeMap::new();
        for (u, v, amount) in pairs {
            let entry = map
                .entry(normalize_pair(*u, *v))
                .or_insert_with(Rational::zero);
            *entry += amount;
        }
        Flow::Unique(map)
    }

    /// Total routed amount for the commodity `uv`.
    pub fn amount(&self, u: Node, v: Node) -> Rational {
        let key = normalize_pair(u, v);
        match self {
            Flow::Unique(map) => map.get(&key).cloned().unwrap_or_else(Rational::zero),
            Flow::General(paths) => paths
                .iter()
                .filter(|p| normalize_pair(p.u, p.v) == key)
                .map(|p| p.amount.clone())
                .sum(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Flow::Unique(map) => map.values().all(Rational::is_zero),
            Flow::General(paths) => paths.iter().all(|p| p.amount.is_zero()),
        }
    }

    /// Componentwise `self + factor * other`; both flows must be in the
    /// same mode.
    pub fn add_scaled(&self, other: &Flow, factor: &Rational) -> Result<Flow> {
        match (self, other) {
            (Flow::Unique(a), Flow::Unique(b)) => {
                let mut out = a.clone();
                for (key, amount) in b {
                    let entry = out.entry(*key).or_insert_with(Rational::zero);
                    *entry += amount * factor;
                }
                Ok(Flow::Unique(out))
            }
            (Flow::General(a), Flow::General(b)) => {
                let mut out = a.clone();
                for p in b {
                    out.push(PathFlow {
                        u: p.u,
                        v: p.v,
                        path: p.path.clone(),
                        amount: &p.amount * factor,
                    });
                }
                Ok(Flow::General(merge_path_flows(out)))
            }
            _ => Err(Error::Structural("cannot combine flows of different modes".into())),
        }
    }

    pub fn scaled(&self, factor: &Rational) -> Flow {
        match self {
            Flow::Unique(map) => Flow::Unique(
                map.iter()
                    .map(|(k, amount)| (*k, amount * factor))
                    .collect(),
            ),
            Flow::General(paths) => Flow::General(
                paths
                    .iter()
                    .map(|p| PathFlow {
                        u: p.u,
                        v: p.v,
                        path: p.path.clone(),
                        amount: &p.amount * factor,
                    })
                    .collect(),
            ),
        }
    }

    pub fn to_json_value(&self) -> Value {
        let mut obj = Map::new();
        match self {
            Flow::Unique(map) => {
                obj.insert("mode".into(), json!("unique"));
                let mut amounts = Map::new();
                for ((u, v), amount) in map {
                    amounts.insert(format!("{u}-{v}"), rational_to_json(amount));
                }
                obj.insert("amounts".into(), Value::Object(amounts));
            }
            Flow::General(paths) => {
                obj.insert("mode".into(), json!("paths"));
                obj.insert(
                    "paths".into(),
                    Value::Array(
                        paths
                            .iter()
                            .map(|p| {
                                let mut m = Map::new();
                                m.insert("f".into(), rational_to_json(&p.amount));
                                m.insert("path".into(), json!(p.path));
                                m.insert("u".into(), json!(p.u));
                                m.insert("v".into(), json!(p.v));
                                Value::Object(m)
                            })
                            .collect(),
                    ),
                );
            }
        }
        Value::Object(obj)
    }

    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json_value(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Json("flow must be a JSON object".into()))?;
        match obj.get("mode").and_then(Value::as_str) {
            Some("unique") => {
                let amounts = obj
                    .get("amounts")
                    .and_then(Value::as_object)
                    .ok_or_else(|| Error::Json("unique flow needs an amounts object".into()))?;
                let mut map = BTreeMap::new();
                for (key, v) in amounts {
                    let (u, w) = key
                        .split_once('-')
                        .ok_or_else(|| Error::Json(format!("bad commodity key {key:?}")))?;
                    let u: Node = u.parse().map_err(|_| Error::Json(format!("bad key {key:?}")))?;
                    let w: Node = w.parse().map_err(|_| Error::Json(format!("bad key {key:?}")))?;
                    map.insert(normalize_pair(u, w), rational_from_json(v)?);
                }
                Ok(Flow::Unique(map))
            }
            Some("paths") => {
                let list = obj
                    .get("paths")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::Json("path flow needs a paths array".into()))?;
                let mut paths = Vec::new();
                for p in list {
                    let m = p
                        .as_object()
                        .ok_or_else(|| Error::Json("path entry must be an object".into()))?;
                    let u = m.get("u").and_then(Value::as_u64).ok_or_else(|| Error::Json("missing u".into()))?
                        as usize;
                    let v = m.get("v").and_then(Value::as_u64).ok_or_else(|| Error::Json("missing v".into()))?
                        as usize;
                    let path = m
                        .get("path")
                        .and_then(Value::as_array)
                        .ok_or_else(|| Error::Json("missing path".into()))?
                        .iter()
                        .map(|x| x.as_u64().map(|x| x as usize).ok_or_else(|| Error::Json("bad path".into())))
                        .collect::<Result<Vec<_>>>()?;
                    let amount = rational_from_json(
                        m.get("f").ok_or_else(|| Error::Json("missing f".into()))?,
                    )?;
                    paths.push(PathFlow { u, v, path, amount });
                }
                Ok(Flow::General(merge_path_flows(paths)))
            }
            _ => Err(Error::Json("flow mode must be \"unique\" or \"paths\"".into())),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Json(e.to_string()))?;
        Self::from_json_value(&value)
    }
}

fn merge_path_flows(paths: Vec<PathFlow>) -> Vec<PathFlow> {
    let mut merged: BTreeMap<(Node, Node, Vec<Node>), Rational> = BTreeMap::new();
    for p in paths {
        let (u, v) = normalize_pair(p.u, p.v);
        let path = if p.path.first() == Some(&u) {
            p.path
        } else {
            p.path.into_iter().rev().collect()
        };
        *merged.entry((u, v, path)).or_insert_with(Rational::zero) += p.amount;
    }
    merged
        .into_iter()
        .map(|((u, v, path), amount)| PathFlow { u, v, path, amount })
        .collect()
}

/// Per-node utilities under a flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayoffVector {
    pay: Vec<Rational>,
}

impl PayoffVector {
    pub fn zeros(n: usize) -> Self {
        PayoffVector {
            pay: vec![Rational::zero(); n],
        }
    }

    pub fn from_vec(pay: Vec<Rational>) -> Self {
        PayoffVector { pay }
    }

    pub fn n(&self) -> usize {
        self.pay.len()
    }

    pub fn get(&self, v: Node) -> &Rational {
        &self.pay[v - 1]
    }

    pub fn as_slice(&self) -> &[Rational] {
        &self.pay
    }

    pub fn social_welfare(&self) -> Rational {
        self.pay.iter().sum()
    }

    pub fn min_over<'a>(&'a self, nodes: impl Iterator<Item = Node>) -> Option<&'a Rational> {
        nodes.map(|v| self.get(v)).min()
    }

    pub fn scaled(&self, factor: &Rational) -> PayoffVector {
        PayoffVector {
            pay: self.pay.iter().map(|p| p * factor).collect(),
        }
    }
}

fn check_structural(instance: &GameInstance, flow: &Flow) -> Result<()> {
    match flow {
        Flow::Unique(map) => {
            if !instance.is_tree_topology() {
                return Err(Error::Structural(
                    "unique-path flows require path or spider topology".into(),
                ));
            }
            for ((u, v), amount) in map {
                if instance.demand(*u, *v).is_none() {
                    return Err(Error::Structural(format!("unknown commodity {u}-{v}")));
                }
                if amount < &Rational::zero() {
                    return Err(Error::Structural(format!("negative flow on {u}-{v}")));
                }
            }
        }
        Flow::General(paths) => {
            for p in paths {
                if instance.demand(p.u, p.v).is_none() {
                    return Err(Error::Structural(format!("unknown commodity {}-{}", p.u, p.v)));
                }
                if p.amount < Rational::zero() {
                    return Err(Error::Structural(format!(
                        "negative flow on a {}-{} path",
                        p.u, p.v
                    )));
                }
                let ok_ends = (p.path.first() == Some(&p.u) && p.path.last() == Some(&p.v))
                    || (p.path.first() == Some(&p.v) && p.path.last() == Some(&p.u));
                if !ok_ends {
                    return Err(Error::Structural(format!(
                        "path for {}-{} does not join its endpoints",
                        p.u, p.v
                    )));
                }
                let distinct: BTreeSet<&Node> = p.path.iter().collect();
                if distinct.len() != p.path.len() {
                    return Err(Error::Structural("path revisits a node".into()));
                }
                for w in p.path.windows(2) {
                    if !instance.neighbors(w[0]).contains(&w[1]) {
                        return Err(Error::Structural(format!(
                            "missing supply edge {}-{}",
                            w[0], w[1]
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Node usage: total flow on paths touching each node (transits and
/// terminations both consume capacity).
pub fn node_usage(instance: &GameInstance, flow: &Flow) -> Result<Vec<Rational>> {
    check_structural(instance, flow)?;
    let mut usage = vec![Rational::zero(); instance.n() + 1];
    match flow {
        Flow::Unique(map) => {
            for ((u, v), amount) in map {
                if amount.is_zero() {
                    continue;
                }
                let path = instance
                    .unique_path(*u, *v)
                    .ok_or_else(|| Error::Structural("missing unique path".into()))?;
                for node in path {
                    usage[node] += amount;
                }
            }
        }
        Flow::General(paths) => {
            for p in paths {
                for &node in &p.path {
                    usage[node] += &p.amount;
                }
            }
        }
    }
    usage.remove(0);
    Ok(usage)
}

/// The payoff vector of a flow: each node is credited every unit of flow
/// terminating at it, so the social welfare is exactly twice the total
/// routed amount.
pub fn payoff(instance: &GameInstance, flow: &Flow) -> Result<PayoffVector> {
    check_structural(instance, flow)?;
    let mut pay = vec![Rational::zero(); instance.n()];
    match flow {
        Flow::Unique(map) => {
            for ((u, v), amount) in map {
                pay[u - 1] += amount;
                pay[v - 1] += amount;
            }
        }
        Flow::General(paths) => {
            for p in paths {
                pay[p.u - 1] += &p.amount;
                pay[p.v - 1] += &p.amount;
            }
        }
    }
    Ok(PayoffVector { pay })
}

/// The first violated constraint of an infeasible flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Demand {
        u: Node,
        v: Node,
        routed: Rational,
        demand: Rational,
    },
    NodeCapacity {
        node: Node,
        used: Rational,
        capacity: Rational,
    },
}

/// Exact feasibility: demand constraints checked first (in commodity
/// order), then node capacities in node order. `None` means feasible.
pub fn is_feasible(instance: &GameInstance, flow: &Flow) -> Result<Option<Violation>> {
    check_structural(instance, flow)?;
    for c in instance.commodities() {
        let routed = flow.amount(c.u, c.v);
        if routed > c.demand {
            return Ok(Some(Violation::Demand {
                u: c.u,
                v: c.v,
                routed,
                demand: c.demand.clone(),
            }));
        }
    }
    let usage = node_usage(instance, flow)?;
    for v in instance.nodes() {
        if let Capacity::Finite(cap) = instance.capacity(v) {
            if &usage[v - 1] > cap {
                return Ok(Some(Violation::NodeCapacity {
                    node: v,
                    used: usage[v - 1].clone(),
                    capacity: cap.clone(),
                }));
            }
        }
    }
    Ok(None)
}

pub fn feasible(instance: &GameInstance, flow: &Flow) -> Result<bool> {
    Ok(is_feasible(instance, flow)?.is_none())
}

/// Remaining capacities during an algorithm run.
#[derive(Debug, Clone)]
pub struct ResidualState {
    residual: Vec<Capacity>,
}

impl ResidualState {
    pub fn new(instance: &GameInstance) -> Self {
        ResidualState {
            residual: instance.capacities().to_vec(),
        }
    }

    pub fn get(&self, v: Node) -> &Capacity {
        &self.residual[v - 1]
    }

    /// Smallest residual along `path`, or `None` when every node on the
    /// path is unbounded.
    pub fn bottleneck(&self, path: &[Node]) -> Option<(Rational, Node)> {
        let mut best: Option<(&Rational, Node)> = None;
        for &v in path {
            if let Capacity::Finite(c) = self.get(v) {
                match best {
                    Some((b, _)) if b <= c => {}
                    _ => best = Some((c, v)),
                }
            }
        }
        best.map(|(c, v)| (c.clone(), v))
    }

    pub fn decrease_along(&mut self, path: &[Node], amount: &Rational) {
        if amount.is_zero() {
            return;
        }
        for &v in path {
            self.residual[v - 1].decrease(amount);
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::rational::int;

    /// Four-node path, capacities (inf, 2, 2, inf), demands
    /// 12:1, 13:2, 23:2, 24:2, 34:1.
    pub fn four_node_regression() -> GameInstance {
        GameInstance::path(
            vec![
                Capacity::Unbounded,
                Capacity::finite(int(2)),
                Capacity::finite(int(2)),
                Capacity::Unbounded,
            ],
            vec![
                (1, 2, int(1)),
                (1, 3, int(2)),
                (2, 3, int(2)),
                (2, 4, int(2)),
                (3, 4, int(1)),
            ],
        )
        .unwrap()
    }

    /// P4 with unit capacities and demands 14:1, 23:1.
    pub fn p4_unit_caps() -> GameInstance {
        GameInstance::path(
            vec![Capacity::finite(int(1)); 4],
            vec![(1, 4, int(1)), (2, 3, int(1))],
        )
        .unwrap()
    }

    /// Six-node path whose nested greedy flow is not in the core:
    /// capacities (2, 2, 4, 4, 2, 2), demands 12:1, 56:1, 13:1, 46:1,
    /// 24:2, 35:2.
    pub fn six_node_counterexample() -> GameInstance {
        GameInstance::path(
            vec![
                Capacity::finite(int(2)),
                Capacity::finite(int(2)),
                Capacity::finite(int(4)),
                Capacity::finite(int(4)),
                Capacity::finite(int(2)),
                Capacity::finite(int(2)),
            ],
            vec![
                (1, 2, int(1)),
                (5, 6, int(1)),
                (1, 3, int(1)),
                (4, 6, int(1)),
                (2, 4, int(2)),
                (3, 5, int(2)),
            ],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::rational::{int, rat};

    #[test]
    fn payoff_credits_both_endpoints() {
        let instance = four_node_regression();
        let flow = Flow::unique_from(&[(1, 2, int(1)), (1, 3, int(1)), (3, 4, int(1))]);
        let pay = payoff(&instance, &flow).unwrap();
        assert_eq!(pay.as_slice(), &[int(2), int(1), int(2), int(1)]);
        assert_eq!(pay.social_welfare(), int(6));
    }

    #[test]
    fn zero_flow_has_zero_payoff_and_is_feasible() {
        let instance = four_node_regression();
        let flow = Flow::zero_unique();
        let pay = payoff(&instance, &flow).unwrap();
        assert!(pay.as_slice().iter().all(Rational::is_zero));
        assert!(feasible(&instance, &flow).unwrap());
    }

    #[test]
    fn p4_flow_payoff() {
        let instance = p4_unit_caps();
        let flow = Flow::unique_from(&[(2, 3, int(1))]);
        let pay = payoff(&instance, &flow).unwrap();
        assert_eq!(pay.as_slice(), &[int(0), int(1), int(1), int(0)]);
    }

    #[test]
    fn unknown_commodity_is_structural_error() {
        let instance = p4_unit_caps();
        let flow = Flow::unique_from(&[(1, 2, int(1))]);
        assert!(matches!(payoff(&instance, &flow), Err(Error::Structural(_))));
    }

    #[test]
    fn feasibility_flags_demand_before_capacity() {
        let instance = four_node_regression();
        let flow = Flow::unique_from(&[(2, 3, int(3))]);
        match is_feasible(&instance, &flow).unwrap() {
            Some(Violation::Demand { u: 2, v: 3, .. }) => {}
            other => panic!("expected demand violation, got {other:?}"),
        }
    }

    #[test]
    fn feasibility_flags_capacity() {
        let instance = p4_unit_caps();
        let flow = Flow::unique_from(&[(1, 4, int(1)), (2, 3, int(1))]);
        match is_feasible(&instance, &flow).unwrap() {
            Some(Violation::NodeCapacity { node: 2, used, capacity }) => {
                assert_eq!(used, int(2));
                assert_eq!(capacity, int(1));
            }
            other => panic!("expected capacity violation at node 2, got {other:?}"),
        }
    }

    #[test]
    fn regression_flow_is_feasible() {
        let instance = four_node_regression();
        let flow = Flow::unique_from(&[(1, 2, int(1)), (1, 3, int(1)), (3, 4, int(1))]);
        assert!(feasible(&instance, &flow).unwrap());
        let convex = Flow::unique_from(&[
            (1, 2, int(1)),
            (1, 3, rat(1, 2)),
            (2, 4, rat(1, 2)),
            (3, 4, int(1)),
        ]);
        assert!(feasible(&instance, &convex).unwrap());
        assert_eq!(
            payoff(&instance, &convex).unwrap().as_slice(),
            &[rat(3, 2), rat(3, 2), rat(3, 2), rat(3, 2)]
        );
    }

    #[test]
    fn induced_subgame_restricts_commodities() {
        let instance = four_node_regression();
        let s = BTreeSet::from([2, 3]);
        let (sub, map) = instance.induced_subgame(&s).unwrap();
        assert_eq!(sub.n(), 2);
        assert_eq!(map, vec![2, 3]);
        assert_eq!(sub.commodities().len(), 1);
        assert_eq!(sub.commodities()[0].demand, int(2));
        // identity when S = V
        let all: BTreeSet<Node> = instance.nodes().collect();
        let (same, _) = instance.induced_subgame(&all).unwrap();
        assert_eq!(same.commodities().len(), instance.commodities().len());
        assert_eq!(same.n(), 4);
    }

    #[test]
    fn induced_subgame_of_counterexample_keeps_inner_demands() {
        let instance = six_node_counterexample();
        let s = BTreeSet::from([2, 3, 4, 5]);
        let (sub, map) = instance.induced_subgame(&s).unwrap();
        assert_eq!(map, vec![2, 3, 4, 5]);
        let pairs: Vec<(Node, Node)> = sub.commodities().iter().map(Commodity::pair).collect();
        // 24 -> 13, 35 -> 24 after relabeling
        assert_eq!(pairs, vec![(1, 3), (2, 4)]);
    }

    #[test]
    fn induced_subgame_rejects_empty_and_disconnected() {
        let instance = four_node_regression();
        assert!(matches!(
            instance.induced_subgame(&BTreeSet::new()),
            Err(Error::EmptyCoalition)
        ));
        assert!(matches!(
            instance.induced_subgame(&BTreeSet::from([1, 3])),
            Err(Error::DisconnectedSubgame)
        ));
    }

    #[test]
    fn rejects_self_demand_and_duplicates() {
        let caps = vec![Capacity::finite(int(1)); 3];
        assert!(GameInstance::path(caps.clone(), vec![(2, 2, int(1))]).is_err());
        assert!(GameInstance::path(caps, vec![(1, 2, int(1)), (2, 1, int(1))]).is_err());
    }

    #[test]
    fn spider_paths_and_legs() {
        // root 1 with legs 2-3 and 4-5
        let instance = GameInstance::spider(
            1,
            vec![(1, 2), (2, 3), (1, 4), (4, 5)],
            vec![Capacity::finite(int(1)); 5],
            vec![(3, 5, int(1)), (1, 4, int(1))],
        )
        .unwrap();
        assert_eq!(instance.unique_path(3, 5), Some(vec![3, 2, 1, 4, 5]));
        assert_eq!(instance.unique_path(2, 3), Some(vec![2, 3]));
        assert_eq!(instance.tree_distance(3, 5), Some(4));
        assert_eq!(instance.spider_legs().len(), 2);
        assert_eq!(instance.spider_leg_of(3), Some(0));
        assert_eq!(instance.spider_leg_of(1), None);
    }

    #[test]
    fn spider_requires_declared_root() {
        let bad = GameInstance::spider(
            2,
            vec![(1, 2), (1, 3), (1, 4)],
            vec![Capacity::finite(int(1)); 4],
            vec![],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn json_round_trip_is_byte_equal() {
        let instance = four_node_regression();
        let text = instance.to_canonical_json();
        let loaded = GameInstance::from_json_str(&text).unwrap();
        assert_eq!(loaded.to_canonical_json(), text);
    }

    #[test]
    fn json_parses_decimals_exactly() {
        let text = r#"{"n":2,"topology":"path","capacity":[0.5,"3/4"],"commodities":[{"u":1,"v":2,"d":0.1}]}"#;
        let instance = GameInstance::from_json_str(text).unwrap();
        assert_eq!(instance.capacity(1), &Capacity::finite(rat(1, 2)));
        assert_eq!(instance.capacity(2), &Capacity::finite(rat(3, 4)));
        assert_eq!(instance.demand(1, 2), Some(&rat(1, 10)));
    }

    #[test]
    fn simple_paths_enumeration_respects_budget() {
        let instance = GameInstance::general(
            vec![(1, 2), (2, 3), (1, 3)],
            vec![Capacity::finite(int(1)); 3],
            vec![(1, 3, int(1))],
        )
        .unwrap();
        let all: BTreeSet<Node> = instance.nodes().collect();
        let paths = instance.simple_paths(1, 3, &all, 10).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(matches!(
            instance.simple_paths(1, 3, &all, 1),
            Err(Error::PathBudgetExceeded { .. })
        ));
    }

    #[test]
    fn payoff_is_monotone_in_flow() {
        let instance = four_node_regression();
        let small = Flow::unique_from(&[(1, 2, rat(1, 2)), (3, 4, int(1))]);
        let big = Flow::unique_from(&[(1, 2, int(1)), (3, 4, int(1)), (2, 3, int(1))]);
        let ps = payoff(&instance, &small).unwrap();
        let pb = payoff(&instance, &big).unwrap();
        for v in instance.nodes() {
            assert!(ps.get(v) <= pb.get(v));
        }
    }
}
