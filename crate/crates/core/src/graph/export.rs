use std::collections::HashMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{GraphError, GraphNode, SegmentGraph};

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Nine significant digits.
fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// GraphML document; nodes in graph order, edges in `(i, j)` order.
pub fn to_graphml(g: &SegmentGraph) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    s.push_str("  <key id=\"k\" for=\"graph\" attr.name=\"k\" attr.type=\"int\"/>\n");
    s.push_str("  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n");
    s.push_str("  <key id=\"expectancy\" for=\"node\" attr.name=\"expectancy\" attr.type=\"double\"/>\n");
    s.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
    let _ = writeln!(s, "  <graph id=\"{}\" edgedefault=\"undirected\">", escape(&g.piece_id));
    let _ = writeln!(s, "    <data key=\"k\">{}</data>", g.k);
    for node in &g.nodes {
        let _ = writeln!(s, "    <node id=\"{}\">", escape(&node.id));
        if let Some(label) = &node.label {
            let _ = writeln!(s, "      <data key=\"label\">{}</data>", escape(label));
        }
        if let Some(e) = node.expectancy {
            let _ = writeln!(s, "      <data key=\"expectancy\">{}</data>", sig9(e));
        }
        s.push_str("    </node>\n");
    }
    for (&(a, b), &w) in &g.edges {
        let _ = writeln!(
            s,
            "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{}</data></edge>",
            escape(&g.nodes[a].id),
            escape(&g.nodes[b].id),
            sig9(w)
        );
    }
    s.push_str("  </graph>\n</graphml>\n");
    s
}

/// Reads a document written by [`to_graphml`].
pub fn from_graphml(text: &str) -> Result<SegmentGraph, GraphError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| GraphError::Format(e.to_string()))?;
    let graph = doc
        .descendants()
        .find(|n| n.has_tag_name("graph"))
        .ok_or_else(|| GraphError::Format("no <graph> element".into()))?;
    let data = |n: roxmltree::Node, key: &str| {
        n.children()
            .find(|c| c.has_tag_name("data") && c.attribute("key") == Some(key))
            .and_then(|c| c.text())
            .map(str::to_string)
    };
    let number = |text: String| text.trim().parse::<f64>().map_err(|e| GraphError::Format(format!("{text}: {e}")));

    let k = data(graph, "k")
        .map(|t| t.trim().parse::<usize>().map_err(|e| GraphError::Format(e.to_string())))
        .transpose()?
        .unwrap_or(0);
    let mut nodes = Vec::new();
    for n in graph.children().filter(|c| c.has_tag_name("node")) {
        let id = n.attribute("id").ok_or_else(|| GraphError::Format("node without id".into()))?;
        nodes.push(GraphNode {
            id: id.to_string(),
            label: data(n, "label"),
            expectancy: data(n, "expectancy").map(number).transpose()?,
        });
    }
    let index: HashMap<String, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
    let mut g = SegmentGraph::new(graph.attribute("id").unwrap_or_default(), k, nodes);
    for e in graph.children().filter(|c| c.has_tag_name("edge")) {
        let end = |attr: &str| {
            e.attribute(attr)
                .and_then(|id| index.get(id).copied())
                .ok_or_else(|| GraphError::Format(format!("edge {attr} refers to unknown node")))
        };
        let (a, b) = (end("source")?, end("target")?);
        let w = data(e, "weight").map(number).transpose()?.unwrap_or(1.0);
        g.add_edge(a, b, w);
    }
    Ok(g)
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn to_dot(g: &SegmentGraph) -> String {
    let mut s = format!("graph {} {{\n", dot_quote(&g.piece_id));
    for node in &g.nodes {
        let label = node.label.as_deref().unwrap_or(&node.id);
        let _ = writeln!(s, "  {} [label={}];", dot_quote(&node.id), dot_quote(label));
    }
    for (&(a, b), &w) in &g.edges {
        let _ = writeln!(s, "  {} -- {} [weight={}];", dot_quote(&g.nodes[a].id), dot_quote(&g.nodes[b].id), sig9(w));
    }
    s.push_str("}\n");
    s
}

#[derive(Serialize, Deserialize)]
struct JsonEdge {
    source: String,
    target: String,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonGraph {
    piece_id: String,
    k: usize,
    nodes: Vec<GraphNode>,
    edges: Vec<JsonEdge>,
}

/// Adjacency dump: ids, labels and weighted edges.
pub fn to_json(g: &SegmentGraph) -> String {
    let edges = g
        .edges
        .iter()
        .map(|(&(a, b), &weight)| JsonEdge {
            source: g.nodes[a].id.clone(),
            target: g.nodes[b].id.clone(),
            weight,
        })
        .collect();
    let doc = JsonGraph { piece_id: g.piece_id.clone(), k: g.k, nodes: g.nodes.clone(), edges };
    serde_json::to_string_pretty(&doc).expect("graph serializes")
}

/// Reads a [`to_json`] dump back; weights round-trip exactly.
pub fn from_json(text: &str) -> Result<SegmentGraph, GraphError> {
    let doc: JsonGraph = serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
    let index: HashMap<&str, usize> = doc.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut g = SegmentGraph::new(doc.piece_id.clone(), doc.k, doc.nodes.clone());
    for e in &doc.edges {
        let (Some(&a), Some(&b)) = (index.get(e.source.as_str()), index.get(e.target.as_str())) else {
            return Err(GraphError::Format(format!("edge {}-{} names an unknown node", e.source, e.target)));
        };
        g.add_edge(a, b, e.weight);
    }
    Ok(g)
}
