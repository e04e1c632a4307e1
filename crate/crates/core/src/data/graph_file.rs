//! Role-graph text format. Human-editable so broken fixtures can be made
//! by hand. One directive per line:
//!
//! ```text
//! relations <count>
//! node <index> <role> <token-id> [<token-id> ...]
//! edge <src-index> <dst-index> <relation-id>
//! ```
//!
//! Node indices must appear in order starting at 0. Blank lines and lines
//! starting with `#` are ignored. Parsing is followed by full structural
//! validation, so a successfully loaded graph is always usable.

use crate::error::{Result, SrxError};
use crate::text_encoder::{GraphEdge, GraphNode, Role, RoleGraph};
use std::fmt::Write as _;
use std::path::Path;

pub fn encode_role_graph(g: &RoleGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "relations {}", g.n_relations);
    for (i, node) in g.nodes.iter().enumerate() {
        let _ = write!(out, "node {} {}", i, node.role.as_str());
        for t in &node.tokens {
            let _ = write!(out, " {t}");
        }
        out.push('\n');
    }
    for e in &g.edges {
        let _ = writeln!(out, "edge {} {} {}", e.src, e.dst, e.relation);
    }
    out
}

fn parse_usize(tok: &str, offset: usize, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| {
        SrxError::format(offset, format!("{what} '{tok}' is not a non-negative integer"))
    })
}

pub fn parse_role_graph(text: &str) -> Result<RoleGraph> {
    let mut n_relations: Option<usize> = None;
    let mut nodes: Vec<GraphNode> = Vec::new();
    let mut edges: Vec<GraphEdge> = Vec::new();
    let mut offset = 0usize;
    for line in text.split('\n') {
        let at = offset;
        offset += line.len() + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let directive = toks.next().unwrap();
        let rest: Vec<&str> = toks.collect();
        match directive {
            "relations" => {
                if n_relations.is_some() {
                    return Err(SrxError::format(at, "duplicate relations line"));
                }
                if rest.len() != 1 {
                    return Err(SrxError::format(at, "relations takes one count"));
                }
                n_relations = Some(parse_usize(rest[0], at, "relation count")?);
            }
            "node" => {
                if rest.len() < 2 {
                    return Err(SrxError::format(at, "node needs an index and a role"));
                }
                let idx = parse_usize(rest[0], at, "node index")?;
                if idx != nodes.len() {
                    return Err(SrxError::format(
                        at,
                        format!("node index {idx} out of order, expected {}", nodes.len()),
                    ));
                }
                let role = Role::parse(rest[1])
                    .map_err(|e| SrxError::format(at, e.to_string()))?;
                let tokens = rest[2..]
                    .iter()
                    .map(|t| parse_usize(t, at, "token id").map(|v| v as u32))
                    .collect::<Result<Vec<u32>>>()?;
                nodes.push(GraphNode { role, tokens });
            }
            "edge" => {
                if rest.len() != 3 {
                    return Err(SrxError::format(at, "edge takes src, dst, relation"));
                }
                edges.push(GraphEdge {
                    src: parse_usize(rest[0], at, "edge source")?,
                    dst: parse_usize(rest[1], at, "edge target")?,
                    relation: parse_usize(rest[2], at, "edge relation")?,
                });
            }
            other => {
                return Err(SrxError::format(at, format!("unknown directive '{other}'")));
            }
        }
    }
    let n_relations =
        n_relations.ok_or_else(|| SrxError::format(0, "missing relations line"))?;
    let graph = RoleGraph { nodes, edges, n_relations };
    graph.validate()?;
    Ok(graph)
}

pub fn write_role_graph(path: &Path, g: &RoleGraph) -> Result<()> {
    g.validate()?;
    Ok(std::fs::write(path, encode_role_graph(g))?)
}

pub fn read_role_graph(path: &Path) -> Result<RoleGraph> {
    parse_role_graph(&String::from_utf8_lossy(&std::fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> RoleGraph {
        RoleGraph {
            nodes: vec![
                GraphNode { role: Role::Event, tokens: vec![0, 1] },
                GraphNode { role: Role::Action, tokens: vec![2] },
                GraphNode { role: Role::Entity, tokens: vec![3] },
            ],
            edges: vec![
                GraphEdge { src: 1, dst: 0, relation: 0 },
                GraphEdge { src: 2, dst: 1, relation: 1 },
            ],
            n_relations: 2,
        }
    }

    #[test]
    fn minimal_graph_round_trips_byte_identically() {
        let g = minimal();
        let text = encode_role_graph(&g);
        let back = parse_role_graph(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(encode_role_graph(&back), text);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# fixture\n\nrelations 2\nnode 0 event 0\n\nnode 1 action 1\nnode 2 entity 2\nedge 1 0 0\nedge 2 1 1\n";
        let g = parse_role_graph(text).unwrap();
        assert_eq!(g.nodes.len(), 3);
    }

    #[test]
    fn two_event_nodes_are_rejected_by_validation() {
        let text = "relations 1\nnode 0 event 0\nnode 1 event 1\nnode 2 action 2\nnode 3 entity 3\nedge 2 0 0\nedge 3 2 0\n";
        let err = parse_role_graph(text).unwrap_err();
        assert!(matches!(err, SrxError::Validation(_)), "{err}");
        assert!(err.to_string().contains("event"), "{err}");
    }

    #[test]
    fn edge_to_unknown_node_is_rejected() {
        let text = "relations 1\nnode 0 event 0\nnode 1 action 1\nnode 2 entity 2\nedge 1 0 0\nedge 2 9 0\n";
        let err = parse_role_graph(text).unwrap_err();
        assert!(matches!(err, SrxError::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_lines_are_format_errors_with_offsets() {
        let err = parse_role_graph("relations 1\nnode 0 event zero\n").unwrap_err();
        match err {
            SrxError::Format { offset, .. } => assert_eq!(offset, 12),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_role_graph("node 0 event 0\n").is_err(), "missing relations");
        assert!(parse_role_graph("relations 1\nblob x\n").is_err());
        assert!(parse_role_graph("relations 1\nnode 1 event 0\n").is_err(), "index gap");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.graph");
        let g = minimal();
        write_role_graph(&path, &g).unwrap();
        assert_eq!(read_role_graph(&path).unwrap(), g);
    }
}
