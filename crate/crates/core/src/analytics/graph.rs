use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::links::LinkObservation;
use super::stats::Share;
use crate::enrich::EnrichedHop;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFormat {
    Dot,
    Geojson,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphOptions {
    /// Minimum share in percent.
    pub threshold: f64,
    /// Draw links between different ASes dashed (the default) rather than
    /// links within one AS.
    pub inter_as_dashed: bool,
    pub exclude_implausible: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            inter_as_dashed: true,
            exclude_implausible: false,
        }
    }
}

/// Rendered graph plus the routers that could not be placed on a map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphExport {
    pub document: String,
    /// Ascending, deduplicated.
    pub unlocatable: Vec<IpAddr>,
}

impl GraphExport {
    /// One address per line.
    pub fn sidecar(&self) -> String {
        self.unlocatable.iter().map(|a| format!("{a}\n")).collect()
    }
}

/// Line width for a share: 1 at 0.1 %, 4 at 100 %, logarithmic between.
pub fn thickness(share: Share) -> f64 {
    let p = share.percent().clamp(0.1, 100.0);
    1.0 + (p / 0.1).log10()
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Colour keyed by the link's source AS.
pub fn color_key(from: &EnrichedHop) -> (String, &'static str) {
    match from.asn {
        Some(asn) => (format!("AS{asn}"), PALETTE[asn as usize % PALETTE.len()]),
        None => ("unknown".to_string(), "#000000"),
    }
}

fn dashed(obs: &LinkObservation, opts: &GraphOptions) -> bool {
    obs.is_inter_as() == opts.inter_as_dashed
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn node_label(h: &EnrichedHop) -> String {
    match h.as_label() {
        Some(l) => format!("{}\\n{}", h.address, dot_escape(&l)),
        None => h.address.to_string(),
    }
}

/// Route graph of the links at or above the threshold. Output is a pure
/// function of the input set: edges are ordered by relation and endpoints.
pub fn export_route_graph(
    observations: &[LinkObservation],
    opts: &GraphOptions,
    format: GraphFormat,
) -> GraphExport {
    let mut edges: Vec<&LinkObservation> = observations
        .iter()
        .filter(|o| o.share().at_least(opts.threshold))
        .filter(|o| !(opts.exclude_implausible && o.flagged_implausible()))
        .collect();
    edges.sort_by(|a, b| {
        (&a.relation, a.from.address, a.to.address).cmp(&(
            &b.relation,
            b.from.address,
            b.to.address,
        ))
    });
    let mut nodes: BTreeMap<IpAddr, &EnrichedHop> = BTreeMap::new();
    for e in &edges {
        nodes.entry(e.from.address).or_insert(&e.from);
        nodes.entry(e.to.address).or_insert(&e.to);
    }
    let unlocatable: BTreeSet<IpAddr> = nodes
        .values()
        .filter(|h| h.geo.is_none())
        .map(|h| h.address)
        .collect();
    let document = match format {
        GraphFormat::Dot => dot(&edges, &nodes, opts),
        GraphFormat::Geojson => geojson(&edges, &nodes, opts),
        GraphFormat::Csv => csv_doc(&edges, opts),
    };
    GraphExport {
        document,
        unlocatable: unlocatable.into_iter().collect(),
    }
}

fn dot(
    edges: &[&LinkObservation],
    nodes: &BTreeMap<IpAddr, &EnrichedHop>,
    opts: &GraphOptions,
) -> String {
    let mut out = String::from("digraph routes {\n");
    for h in nodes.values() {
        let _ = write!(out, "  \"{}\" [label=\"{}\"", h.address, node_label(h));
        if let Some(g) = &h.geo {
            let _ = write!(out, ", pos=\"{},{}!\"", g.longitude, g.latitude);
        }
        out.push_str("];\n");
    }
    for e in edges {
        let (key, color) = color_key(&e.from);
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [relation=\"{}\", share=\"{}\", penwidth={:.3}, style={}, color=\"{}\", colorkey=\"{}\"];",
            e.from.address,
            e.to.address,
            dot_escape(&e.relation.to_string()),
            e.share(),
            thickness(e.share()),
            if dashed(e, opts) { "dashed" } else { "solid" },
            color,
            key,
        );
    }
    out.push_str("}\n");
    out
}

fn geojson(
    edges: &[&LinkObservation],
    nodes: &BTreeMap<IpAddr, &EnrichedHop>,
    opts: &GraphOptions,
) -> String {
    let mut features = Vec::new();
    for h in nodes.values() {
        let Some(g) = &h.geo else { continue };
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": [g.longitude, g.latitude] },
            "properties": {
                "address": h.address.to_string(),
                "as": h.as_label(),
                "country": g.country,
            },
        }));
    }
    for e in edges {
        let (Some(a), Some(b)) = (&e.from.geo, &e.to.geo) else {
            continue;
        };
        let (key, color) = color_key(&e.from);
        features.push(json!({
            "type": "Feature",
            "geometry": {
                "type": "LineString",
                "coordinates": [[a.longitude, a.latitude], [b.longitude, b.latitude]],
            },
            "properties": {
                "relation": e.relation.to_string(),
                "from": e.from.address.to_string(),
                "to": e.to.address.to_string(),
                "share": e.share().to_string(),
                "runs_observed": e.runs_observed(),
                "runs_total": e.runs_total,
                "thickness": format!("{:.3}", thickness(e.share())),
                "inter_as": e.is_inter_as(),
                "style": if dashed(e, opts) { "dashed" } else { "solid" },
                "color": color,
                "color_key": key,
            },
        }));
    }
    let doc = json!({ "type": "FeatureCollection", "features": features });
    let mut s = serde_json::to_string_pretty(&doc).expect("json value serialises");
    s.push('\n');
    s
}

fn csv_doc(edges: &[&LinkObservation], opts: &GraphOptions) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let coord = |h: &EnrichedHop| match &h.geo {
        Some(g) => (g.latitude.to_string(), g.longitude.to_string()),
        None => (String::new(), String::new()),
    };
    w.write_record([
        "relation",
        "from",
        "to",
        "from_as",
        "to_as",
        "share",
        "runs_observed",
        "runs_total",
        "thickness",
        "style",
        "color_key",
        "from_lat",
        "from_lon",
        "to_lat",
        "to_lon",
    ])
    .expect("in-memory write");
    for e in edges {
        let (fl, fo) = coord(&e.from);
        let (tl, to) = coord(&e.to);
        w.write_record([
            e.relation.to_string(),
            e.from.address.to_string(),
            e.to.address.to_string(),
            e.from.as_label().unwrap_or_default(),
            e.to.as_label().unwrap_or_default(),
            e.share().to_string(),
            e.runs_observed().to_string(),
            e.runs_total.to_string(),
            format!("{:.3}", thickness(e.share())),
            (if dashed(e, opts) { "dashed" } else { "solid" }).to_string(),
            color_key(&e.from).0,
            fl,
            fo,
            tl,
            to,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
