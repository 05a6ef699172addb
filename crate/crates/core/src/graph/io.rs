//! Line-oriented graph text format.
//!
//! ```text
//! n m
//! i j        (m lines, sorted by (i, j))
//! positions  (optional section)
//! i x y      (n lines)
//! ```

use std::fmt::Write as _;

use super::{GraphError, InfluenceGraph};

pub fn write_graph_text(graph: &InfluenceGraph, positions: Option<&[[f64; 2]]>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", graph.n(), graph.edge_count());
    for (i, j) in graph.edges() {
        let _ = writeln!(s, "{i} {j}");
    }
    if let Some(pos) = positions {
        s.push_str("positions\n");
        for (i, p) in pos.iter().enumerate() {
            let _ = writeln!(s, "{i} {:?} {:?}", p[0], p[1]);
        }
    }
    s
}

fn perr(line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        msg: msg.into(),
    }
}

fn fields<const K: usize>(line_no: usize, line: &str) -> Result<[&str; K], GraphError> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    parts
        .try_into()
        .map_err(|_| perr(line_no, format!("expected {K} fields")))
}

fn num<T: std::str::FromStr>(line_no: usize, s: &str) -> Result<T, GraphError> {
    s.parse().map_err(|_| perr(line_no, format!("bad number {s:?}")))
}

pub fn parse_graph_text(text: &str) -> Result<(InfluenceGraph, Option<Vec<[f64; 2]>>), GraphError> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
    let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
    let [n, m] = fields::<2>(ln, header)?;
    let (n, m): (usize, usize) = (num(ln, n)?, num(ln, m)?);
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, l) = lines.next().ok_or_else(|| perr(ln, "missing edge lines"))?;
        let [i, j] = fields::<2>(ln, l)?;
        edges.push((num(ln, i)?, num(ln, j)?));
    }
    let graph = InfluenceGraph::from_edges(n, &edges)?;
    let positions = match lines.next() {
        None => None,
        Some((_, "")) => None,
        Some((ln, "positions")) => {
            let mut pos = vec![[0.0; 2]; n];
            for _ in 0..n {
                let (ln, l) = lines.next().ok_or_else(|| perr(ln, "missing position lines"))?;
                let [i, x, y] = fields::<3>(ln, l)?;
                let i: usize = num(ln, i)?;
                if i >= n {
                    return Err(perr(ln, "position index out of range"));
                }
                pos[i] = [num(ln, x)?, num(ln, y)?];
            }
            Some(pos)
        }
        Some((ln, other)) => return Err(perr(ln, format!("unexpected line {other:?}"))),
    };
    Ok((graph, positions))
}
