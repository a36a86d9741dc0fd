use std::collections::{BTreeMap, HashMap};
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::icmp::Family;

use super::SimError;

pub type NodeIdx = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Host,
    Router,
}

/// How a node answers probes that end at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Responsive,
    Silent,
    /// At most `n` ICMP responses per simulated second (token bucket).
    RateLimit(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub addresses: Vec<IpAddr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asn: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default)]
    pub policy: Policy,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    pub latency_us: u64,
    #[serde(default = "yes")]
    pub bidirectional: bool,
}

/// Next-hop candidates at `node` for packets to `destination` (a node id,
/// or `*` for every destination without a more specific route).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub node: String,
    pub destination: String,
    pub via: Vec<String>,
    /// Relative share of hash space per candidate; equal when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChangeSpec {
    SetRoute(RouteSpec),
    ClearRoute {
        node: String,
        destination: String,
    },
    SetLatency {
        from: String,
        to: String,
        latency_us: u64,
        #[serde(default = "yes")]
        bidirectional: bool,
    },
    AddLink(LinkSpec),
    RemoveLink {
        from: String,
        to: String,
        #[serde(default = "yes")]
        bidirectional: bool,
    },
    SetPolicy {
        node: String,
        policy: Policy,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    /// Seconds after the start of the scenario.
    pub at_s: f64,
    pub change: ChangeSpec,
}

/// Topology file as written by hand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    /// Permit events that cut a host pair off.
    #[serde(default)]
    pub allow_unreachable: bool,
    #[serde(default, rename = "node")]
    pub nodes: Vec<NodeSpec>,
    #[serde(default, rename = "link")]
    pub links: Vec<LinkSpec>,
    #[serde(default, rename = "route")]
    pub routes: Vec<RouteSpec>,
    #[serde(default, rename = "event")]
    pub events: Vec<EventSpec>,
}

impl TopologyFile {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub addresses: Vec<IpAddr>,
    pub country: Option<String>,
    pub asn: Option<u32>,
    pub as_name: Option<String>,
    pub coordinates: Option<(f64, f64)>,
}

impl Node {
    pub fn address(&self, family: Family) -> Option<IpAddr> {
        self.addresses
            .iter()
            .copied()
            .find(|a| Family::of(*a) == family)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Change {
    SetRoute {
        node: NodeIdx,
        destination: Option<NodeIdx>,
        group: Vec<NodeIdx>,
    },
    ClearRoute {
        node: NodeIdx,
        destination: Option<NodeIdx>,
    },
    SetLatency {
        from: NodeIdx,
        to: NodeIdx,
        latency_us: u64,
        bidirectional: bool,
    },
    AddLink {
        from: NodeIdx,
        to: NodeIdx,
        latency_us: u64,
        bidirectional: bool,
    },
    RemoveLink {
        from: NodeIdx,
        to: NodeIdx,
        bidirectional: bool,
    },
    SetPolicy {
        node: NodeIdx,
        policy: Policy,
    },
}

/// Validated topology together with its mutable routing state.
///
/// Invariants: every link latency is > 0, every route group is non-empty,
/// events are sorted by time, and (unless `allow_unreachable`) every host
/// reaches every other host before and after each event.
#[derive(Debug, Clone)]
pub struct SimTopology {
    nodes: Vec<Node>,
    index: HashMap<String, NodeIdx>,
    by_address: HashMap<IpAddr, NodeIdx>,
    pub(crate) links: BTreeMap<(NodeIdx, NodeIdx), u64>,
    pub(crate) routes: BTreeMap<(NodeIdx, Option<NodeIdx>), Vec<NodeIdx>>,
    pub(crate) policies: Vec<Policy>,
    pub(crate) events: Vec<(u64, Change)>,
    allow_unreachable: bool,
}

fn expand_group(
    via: &[NodeIdx],
    weights: Option<&[u32]>,
    ctx: &str,
) -> Result<Vec<NodeIdx>, SimError> {
    if via.is_empty() {
        return Err(SimError::Invalid(format!(
            "{ctx}: route needs at least one next hop"
        )));
    }
    let Some(weights) = weights else {
        return Ok(via.to_vec());
    };
    if weights.len() != via.len() {
        return Err(SimError::Invalid(format!(
            "{ctx}: {} weights for {} next hops",
            weights.len(),
            via.len()
        )));
    }
    if weights.contains(&0) {
        return Err(SimError::Invalid(format!("{ctx}: weights must be >= 1")));
    }
    Ok(via
        .iter()
        .zip(weights)
        .flat_map(|(n, w)| std::iter::repeat_n(*n, *w as usize))
        .collect())
}

impl SimTopology {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        Self::new(TopologyFile::from_toml(text)?)
    }

    pub fn new(file: TopologyFile) -> Result<Self, SimError> {
        let mut index = HashMap::new();
        let mut by_address = HashMap::new();
        let mut nodes = Vec::with_capacity(file.nodes.len());
        let mut policies = Vec::with_capacity(file.nodes.len());
        for (i, spec) in file.nodes.into_iter().enumerate() {
            if index.insert(spec.id.clone(), i).is_some() {
                return Err(SimError::Invalid(format!(
                    "duplicate node id {:?}",
                    spec.id
                )));
            }
            for a in &spec.addresses {
                if by_address.insert(*a, i).is_some() {
                    return Err(SimError::Invalid(format!("address {a} assigned twice")));
                }
            }
            let coordinates = match (spec.lat, spec.lon) {
                (Some(lat), Some(lon)) if lat.abs() <= 90.0 && lon.abs() <= 180.0 => {
                    Some((lat, lon))
                }
                (None, None) => None,
                _ => {
                    return Err(SimError::Invalid(format!(
                        "node {:?}: bad or partial coordinates",
                        spec.id
                    )))
                }
            };
            policies.push(spec.policy);
            nodes.push(Node {
                id: spec.id,
                kind: spec.kind,
                addresses: spec.addresses,
                country: spec.country,
                asn: spec.asn,
                as_name: spec.as_name,
                coordinates,
            });
        }
        let mut topo = Self {
            nodes,
            index,
            by_address,
            links: BTreeMap::new(),
            routes: BTreeMap::new(),
            policies,
            events: Vec::new(),
            allow_unreachable: file.allow_unreachable,
        };
        for l in &file.links {
            let c = topo.compile_link(&l.from, &l.to, l.latency_us, l.bidirectional, true)?;
            topo.apply(&c)?;
        }
        for r in &file.routes {
            let c = topo.compile_route(r)?;
            topo.apply(&c)?;
        }
        let mut last = 0.0;
        for e in &file.events {
            if e.at_s.is_nan() || e.at_s < last {
                return Err(SimError::Invalid(format!(
                    "event at {} s is out of order",
                    e.at_s
                )));
            }
            last = e.at_s;
            let change = topo.compile_change(&e.change)?;
            topo.events.push(((e.at_s * 1e6).round() as u64, change));
        }
        topo.check_reachable()?;
        let mut probe = topo.clone();
        for (at, change) in &topo.events {
            probe
                .apply(change)
                .map_err(|e| SimError::Invalid(format!("event at {at} µs: {e}")))?;
            probe
                .check_reachable()
                .map_err(|e| SimError::Invalid(format!("after event at {at} µs: {e}")))?;
        }
        Ok(topo)
    }

    fn node(&self, id: &str) -> Result<NodeIdx, SimError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| SimError::Invalid(format!("unknown node {id:?}")))
    }

    fn destination(&self, id: &str) -> Result<Option<NodeIdx>, SimError> {
        if id == "*" {
            Ok(None)
        } else {
            self.node(id).map(Some)
        }
    }

    fn compile_link(
        &self,
        from: &str,
        to: &str,
        latency_us: u64,
        bidirectional: bool,
        add: bool,
    ) -> Result<Change, SimError> {
        let (from, to) = (self.node(from)?, self.node(to)?);
        if latency_us == 0 {
            return Err(SimError::Invalid(format!(
                "link {from}->{to}: latency must be > 0"
            )));
        }
        if from == to {
            return Err(SimError::Invalid(format!(
                "self-link at node {}",
                self.nodes[from].id
            )));
        }
        Ok(if add {
            Change::AddLink {
                from,
                to,
                latency_us,
                bidirectional,
            }
        } else {
            Change::SetLatency {
                from,
                to,
                latency_us,
                bidirectional,
            }
        })
    }

    fn compile_route(&self, r: &RouteSpec) -> Result<Change, SimError> {
        let node = self.node(&r.node)?;
        let destination = self.destination(&r.destination)?;
        let via = r
            .via
            .iter()
            .map(|v| self.node(v))
            .collect::<Result<Vec<_>, _>>()?;
        let group = expand_group(&via, r.weights.as_deref(), &format!("route at {}", r.node))?;
        Ok(Change::SetRoute {
            node,
            destination,
            group,
        })
    }

    fn compile_change(&self, c: &ChangeSpec) -> Result<Change, SimError> {
        Ok(match c {
            ChangeSpec::SetRoute(r) => self.compile_route(r)?,
            ChangeSpec::ClearRoute { node, destination } => Change::ClearRoute {
                node: self.node(node)?,
                destination: self.destination(destination)?,
            },
            ChangeSpec::SetLatency {
                from,
                to,
                latency_us,
                bidirectional,
            } => self.compile_link(from, to, *latency_us, *bidirectional, false)?,
            ChangeSpec::AddLink(l) => {
                self.compile_link(&l.from, &l.to, l.latency_us, l.bidirectional, true)?
            }
            ChangeSpec::RemoveLink {
                from,
                to,
                bidirectional,
            } => Change::RemoveLink {
                from: self.node(from)?,
                to: self.node(to)?,
                bidirectional: *bidirectional,
            },
            ChangeSpec::SetPolicy { node, policy } => Change::SetPolicy {
                node: self.node(node)?,
                policy: *policy,
            },
        })
    }

    pub(crate) fn apply(&mut self, change: &Change) -> Result<(), SimError> {
        let pairs = |from: NodeIdx, to: NodeIdx, both: bool| {
            let mut v = vec![(from, to)];
            if both {
                v.push((to, from));
            }
            v
        };
        match change {
            Change::SetRoute {
                node,
                destination,
                group,
            } => {
                self.routes.insert((*node, *destination), group.clone());
            }
            Change::ClearRoute { node, destination } => {
                self.routes.remove(&(*node, *destination));
            }
            Change::AddLink {
                from,
                to,
                latency_us,
                bidirectional,
            } => {
                for k in pairs(*from, *to, *bidirectional) {
                    self.links.insert(k, *latency_us);
                }
            }
            Change::SetLatency {
                from,
                to,
                latency_us,
                bidirectional,
            } => {
                for k in pairs(*from, *to, *bidirectional) {
                    let slot = self
                        .links
                        .get_mut(&k)
                        .ok_or_else(|| SimError::Invalid(format!("no link {}->{}", k.0, k.1)))?;
                    *slot = *latency_us;
                }
            }
            Change::RemoveLink {
                from,
                to,
                bidirectional,
            } => {
                for k in pairs(*from, *to, *bidirectional) {
                    self.links
                        .remove(&k)
                        .ok_or_else(|| SimError::Invalid(format!("no link {}->{}", k.0, k.1)))?;
                }
            }
            Change::SetPolicy { node, policy } => self.policies[*node] = *policy,
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_index(&self, id: &str) -> Option<NodeIdx> {
        self.index.get(id).copied()
    }

    pub fn node_by_address(&self, address: IpAddr) -> Option<NodeIdx> {
        self.by_address.get(&address).copied()
    }

    pub fn policy(&self, node: NodeIdx) -> Policy {
        self.policies[node]
    }

    pub fn latency(&self, from: NodeIdx, to: NodeIdx) -> Option<u64> {
        self.links.get(&(from, to)).copied()
    }

    pub fn hosts(&self) -> impl Iterator<Item = NodeIdx> + '_ {
        (0..self.nodes.len()).filter(|i| self.nodes[*i].kind == NodeKind::Host)
    }

    fn forwards_to(&self, next: NodeIdx, destination: NodeIdx) -> bool {
        next == destination || self.nodes[next].kind == NodeKind::Router
    }

    /// Shortest one-way latency from every node to `destination`
    /// (`u64::MAX` when unreachable). Hosts never forward.
    pub fn distances_to(&self, destination: NodeIdx) -> Vec<u64> {
        let mut dist = vec![u64::MAX; self.nodes.len()];
        let mut done = vec![false; self.nodes.len()];
        let mut reverse: Vec<Vec<(NodeIdx, u64)>> = vec![Vec::new(); self.nodes.len()];
        for (&(u, v), &lat) in &self.links {
            reverse[v].push((u, lat));
        }
        let mut heap = std::collections::BinaryHeap::new();
        dist[destination] = 0;
        heap.push(std::cmp::Reverse((0u64, destination)));
        while let Some(std::cmp::Reverse((d, v))) = heap.pop() {
            if done[v] {
                continue;
            }
            done[v] = true;
            if !self.forwards_to(v, destination) {
                continue;
            }
            for &(u, lat) in &reverse[v] {
                let nd = d.saturating_add(lat);
                if nd < dist[u] {
                    dist[u] = nd;
                    heap.push(std::cmp::Reverse((nd, u)));
                }
            }
        }
        dist
    }

    /// Ordered next-hop group at `node` toward `destination`: the most
    /// specific configured route, otherwise all equal-cost shortest-path
    /// neighbours in node order. `dist` must come from [`distances_to`].
    ///
    /// [`distances_to`]: Self::distances_to
    pub fn candidates(&self, node: NodeIdx, destination: NodeIdx, dist: &[u64]) -> Vec<NodeIdx> {
        if let Some(g) = self
            .routes
            .get(&(node, Some(destination)))
            .or_else(|| self.routes.get(&(node, None)))
        {
            return g.clone();
        }
        if dist[node] == u64::MAX {
            return Vec::new();
        }
        self.links
            .range((node, 0)..=(node, usize::MAX))
            .filter(|(&(_, v), &lat)| {
                self.forwards_to(v, destination)
                    && dist[v] != u64::MAX
                    && dist[v].saturating_add(lat) == dist[node]
            })
            .map(|(&(_, v), _)| v)
            .collect()
    }

    /// Every host reaches every other host along every candidate choice.
    fn check_reachable(&self) -> Result<(), SimError> {
        if self.allow_unreachable {
            return Ok(());
        }
        let hosts: Vec<NodeIdx> = self.hosts().collect();
        for &d in &hosts {
            let dist = self.distances_to(d);
            // 0 = unvisited, 1 = on stack, 2 = reaches d.
            let mut state = vec![0u8; self.nodes.len()];
            for &s in &hosts {
                if s != d {
                    self.walk(s, s, d, &dist, &mut state)?;
                }
            }
        }
        Ok(())
    }

    fn walk(
        &self,
        node: NodeIdx,
        origin: NodeIdx,
        d: NodeIdx,
        dist: &[u64],
        state: &mut [u8],
    ) -> Result<(), SimError> {
        let name = |i: NodeIdx| self.nodes[i].id.as_str();
        if node == d || state[node] == 2 {
            return Ok(());
        }
        if state[node] == 1 {
            return Err(SimError::Invalid(format!(
                "routing loop through {} toward {}",
                name(node),
                name(d)
            )));
        }
        if node != origin && self.nodes[node].kind == NodeKind::Host {
            return Err(SimError::Invalid(format!(
                "{} -> {} transits host {}",
                name(origin),
                name(d),
                name(node)
            )));
        }
        state[node] = 1;
        let group = self.candidates(node, d, dist);
        if group.is_empty() {
            return Err(SimError::Invalid(format!(
                "{} cannot reach {} from {}",
                name(origin),
                name(d),
                name(node)
            )));
        }
        for next in group {
            if !self.links.contains_key(&(node, next)) {
                return Err(SimError::Invalid(format!(
                    "route at {} uses missing link to {}",
                    name(node),
                    name(next)
                )));
            }
            self.walk(next, origin, d, dist, state)?;
        }
        state[node] = 2;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"
        [[node]]
        id = "a"
        kind = "host"
        addresses = ["10.0.0.1"]

        [[node]]
        id = "r1"
        kind = "router"
        addresses = ["10.0.1.1"]
        policy = { rate_limit = 2 }

        [[node]]
        id = "b"
        kind = "host"
        addresses = ["10.0.0.2"]
        policy = "silent"

        [[link]]
        from = "a"
        to = "r1"
        latency_us = 100

        [[link]]
        from = "r1"
        to = "b"
        latency_us = 200
    "#;

    #[test]
    fn parses_policies_and_links() {
        let t = SimTopology::from_toml(LINE).unwrap();
        assert_eq!(t.policy(1), Policy::RateLimit(2));
        assert_eq!(t.policy(2), Policy::Silent);
        assert_eq!(t.latency(2, 1), Some(200));
        assert_eq!(t.distances_to(2), vec![300, 200, 0]);
        assert_eq!(t.candidates(0, 2, &t.distances_to(2)), vec![1]);
    }

    #[test]
    fn rejects_bad_topologies() {
        let zero = LINE.replace("latency_us = 200", "latency_us = 0");
        assert!(SimTopology::from_toml(&zero).is_err());
        let cut = format!("{LINE}\n[[event]]\nat_s = 5\nchange = {{ kind = \"remove_link\", from = \"r1\", to = \"b\" }}\n");
        assert!(matches!(
            SimTopology::from_toml(&cut),
            Err(SimError::Invalid(_))
        ));
        let allowed = format!("allow_unreachable = true\n{cut}");
        assert!(SimTopology::from_toml(&allowed).is_ok());
        let unsorted = format!(
            "{LINE}\n[[event]]\nat_s = 5\nchange = {{ kind = \"set_policy\", node = \"r1\", policy = \"silent\" }}\n\
             [[event]]\nat_s = 1\nchange = {{ kind = \"set_policy\", node = \"r1\", policy = \"responsive\" }}\n"
        );
        assert!(SimTopology::from_toml(&unsorted).is_err());
        let empty_group =
            format!("{LINE}\n[[route]]\nnode = \"r1\"\ndestination = \"*\"\nvia = []\n");
        assert!(SimTopology::from_toml(&empty_group).is_err());
        let typo = LINE.replace("latency_us = 100", "latency = 100");
        assert!(matches!(
            SimTopology::from_toml(&typo),
            Err(SimError::Parse(_))
        ));
    }

    #[test]
    fn weights_expand_groups() {
        assert_eq!(
            expand_group(&[4, 7], Some(&[3, 1]), "t").unwrap(),
            vec![4, 4, 4, 7]
        );
        assert!(expand_group(&[4, 7], Some(&[1]), "t").is_err());
        assert!(expand_group(&[4], Some(&[0]), "t").is_err());
    }

    #[test]
    fn equal_cost_paths_form_a_group() {
        let mut f = TopologyFile::default();
        let node = |id: &str, kind| NodeSpec {
            id: id.into(),
            kind,
            addresses: vec![],
            country: None,
            asn: None,
            as_name: None,
            lat: None,
            lon: None,
            policy: Policy::Responsive,
        };
        f.nodes = vec![
            node("s", NodeKind::Host),
            node("x", NodeKind::Router),
            node("y", NodeKind::Router),
            node("d", NodeKind::Host),
        ];
        let link = |a: &str, b: &str, l| LinkSpec {
            from: a.into(),
            to: b.into(),
            latency_us: l,
            bidirectional: true,
        };
        f.links = vec![
            link("s", "x", 5),
            link("s", "y", 3),
            link("x", "d", 5),
            link("y", "d", 7),
        ];
        let t = SimTopology::new(f).unwrap();
        assert_eq!(t.candidates(0, 3, &t.distances_to(3)), vec![1, 2]);
    }
}
