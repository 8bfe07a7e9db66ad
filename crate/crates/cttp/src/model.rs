//! Hypergraph instances and the `.hg` interchange format.
//!
//! Vertices are dense 1-based integers `1..=n`; the vertex order fixes the
//! systematic-scan order. Edges keep their input order (it fixes the
//! edge-decomposition order and the lowest-index tie-break in boundary
//! searches) and store their vertices sorted ascending for canonical
//! serialisation. Duplicate edges are legal constraints and merely flagged
//! in the stats; isolated vertices are allowed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based vertex id.
pub type Vertex = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("line {line}: malformed header, expected \"n m k\"")]
    MalformedHeader { line: usize },
    #[error("line {line}: expected an integer, found {token:?}")]
    BadInteger { line: usize, token: String },
    #[error("line {line}: vertex id {id} out of range 1..={n}")]
    VertexOutOfRange { line: usize, id: usize, n: usize },
    #[error("line {line}: duplicate vertex {id} within an edge")]
    DuplicateVertex { line: usize, id: usize },
    #[error("line {line}: edge has {got} vertices, declared k is {want}")]
    EdgeSize { line: usize, got: usize, want: usize },
    #[error("expected {want} edges, found {got}")]
    EdgeCount { want: usize, got: usize },
    #[error("vertex index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("edge prefix length {index} out of range 0..={m}")]
    PrefixOutOfRange { index: usize, m: usize },
}

/// A k-uniform hypergraph on vertices `1..=n` with ordered edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypergraph {
    n: usize,
    k: usize,
    edges: Vec<Vec<Vertex>>,
    /// Indices into `edges` of the edges containing each vertex (1-based
    /// slot 0 unused).
    incident: Vec<Vec<usize>>,
}

/// Recomputable summary statistics of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceStats {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub max_degree: usize,
    /// Every pair of distinct edges shares at most one vertex.
    pub is_linear: bool,
    pub isolated_vertex_count: usize,
    pub duplicate_edge_count: usize,
}

impl Hypergraph {
    /// Builds a hypergraph, validating ranges, distinctness within each
    /// edge, and k-uniformity. Edge order is preserved; vertex lists are
    /// sorted ascending.
    pub fn new(n: usize, k: usize, edges: Vec<Vec<Vertex>>) -> Result<Self, ModelError> {
        let mut sorted_edges = Vec::with_capacity(edges.len());
        for e in edges {
            let mut e = e;
            e.sort_unstable();
            if e.len() != k {
                return Err(ModelError::EdgeSize { line: 0, got: e.len(), want: k });
            }
            for w in e.windows(2) {
                if w[0] == w[1] {
                    return Err(ModelError::DuplicateVertex { line: 0, id: w[0] });
                }
            }
            for &v in &e {
                if v == 0 || v > n {
                    return Err(ModelError::VertexOutOfRange { line: 0, id: v, n });
                }
            }
            sorted_edges.push(e);
        }
        let mut incident = vec![Vec::new(); n + 1];
        for (i, e) in sorted_edges.iter().enumerate() {
            for &v in e {
                incident[v].push(i);
            }
        }
        Ok(Hypergraph { n, k, edges: sorted_edges, incident })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[Vec<Vertex>] {
        &self.edges
    }

    pub fn edge(&self, i: usize) -> &[Vertex] {
        &self.edges[i]
    }

    /// Indices of the edges containing `v`, in stored edge order.
    pub fn incident_edges(&self, v: Vertex) -> &[usize] {
        &self.incident[v]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.incident[v].len()
    }

    pub fn max_degree(&self) -> usize {
        (1..=self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn stats(&self) -> InstanceStats {
        let mut is_linear = true;
        'outer: for i in 0..self.edges.len() {
            for j in (i + 1)..self.edges.len() {
                let shared = self.edges[i].iter().filter(|v| self.edges[j].contains(v)).count();
                if shared > 1 {
                    is_linear = false;
                    break 'outer;
                }
            }
        }
        let mut dup = 0;
        for i in 0..self.edges.len() {
            for j in (i + 1)..self.edges.len() {
                if self.edges[i] == self.edges[j] {
                    dup += 1;
                }
            }
        }
        InstanceStats {
            n: self.n,
            m: self.m(),
            k: self.k,
            max_degree: self.max_degree(),
            is_linear,
            isolated_vertex_count: (1..=self.n).filter(|&v| self.degree(v) == 0).count(),
            duplicate_edge_count: dup,
        }
    }

    /// Serialises to the `.hg` format: header `n m k`, then edges in
    /// stored order with ascending vertex ids. Round-trips byte-identically
    /// with [`parse_hypergraph`] on canonical input.
    pub fn to_hg(&self) -> String {
        let mut out = format!("{} {} {}\n", self.n, self.m(), self.k);
        for e in &self.edges {
            let ids: Vec<String> = e.iter().map(|v| v.to_string()).collect();
            out.push_str(&ids.join(" "));
            out.push('\n');
        }
        out
    }
}

fn parse_usize(tok: &str, line: usize) -> Result<usize, ModelError> {
    tok.parse::<usize>().map_err(|_| ModelError::BadInteger { line, token: tok.to_string() })
}

/// Parses the `.hg` text format. Lines starting with `#` are comments;
/// blank lines are skipped. The first data line is the header `n m k`,
/// followed by `m` lines of `k` distinct space-separated vertex ids.
/// Errors carry 1-based line numbers.
pub fn parse_hypergraph(text: &str) -> Result<Hypergraph, ModelError> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut edges: Vec<Vec<Vertex>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match header {
            None => {
                if toks.len() != 3 {
                    return Err(ModelError::MalformedHeader { line: line_no });
                }
                let n = parse_usize(toks[0], line_no)?;
                let m = parse_usize(toks[1], line_no)?;
                let k = parse_usize(toks[2], line_no)?;
                header = Some((n, m, k));
            }
            Some((n, _, k)) => {
                if toks.len() != k {
                    return Err(ModelError::EdgeSize { line: line_no, got: toks.len(), want: k });
                }
                let mut e = Vec::with_capacity(k);
                for t in &toks {
                    let v = parse_usize(t, line_no)?;
                    if v == 0 || v > n {
                        return Err(ModelError::VertexOutOfRange { line: line_no, id: v, n });
                    }
                    if e.contains(&v) {
                        return Err(ModelError::DuplicateVertex { line: line_no, id: v });
                    }
                    e.push(v);
                }
                edges.push(e);
            }
        }
    }
    let (n, m, k) = header.ok_or(ModelError::MalformedHeader { line: 1 })?;
    if edges.len() != m {
        return Err(ModelError::EdgeCount { want: m, got: edges.len() });
    }
    Hypergraph::new(n, k, edges)
}

/// Sub-instance on the vertex suffix `{v_i..v_n}`, re-indexed so that
/// `v_i` becomes vertex 1, keeping exactly the edges fully contained in
/// the suffix. Preserves k-uniformity, never increases the maximum
/// degree, and preserves linearity.
pub fn prune_for_vertex_decomposition(h: &Hypergraph, i: Vertex) -> Result<Hypergraph, ModelError> {
    if i == 0 || i > h.n() {
        return Err(ModelError::IndexOutOfRange { index: i, n: h.n() });
    }
    let kept: Vec<Vec<Vertex>> = h
        .edges()
        .iter()
        .filter(|e| e.iter().all(|&v| v >= i))
        .map(|e| e.iter().map(|&v| v - i + 1).collect())
        .collect();
    Hypergraph::new(h.n() - i + 1, h.k(), kept)
}

/// Same vertex set, first `i` edges in stored order.
pub fn edge_prefix(h: &Hypergraph, i: usize) -> Result<Hypergraph, ModelError> {
    if i > h.m() {
        return Err(ModelError::PrefixOutOfRange { index: i, m: h.m() });
    }
    Hypergraph::new(h.n(), h.k(), h.edges()[..i].to_vec())
}

/// Seeded random instance helper for tests: draws up to `m_target`
/// distinct k-subsets subject to the degree cap. Deterministic in `seed`.
pub fn random_hypergraph(
    seed: u64,
    n: usize,
    k: usize,
    max_degree: usize,
    m_target: usize,
) -> Hypergraph {
    assert!(k >= 1 && k <= n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degrees = vec![0usize; n + 1];
    let mut edges: Vec<Vec<Vertex>> = Vec::new();
    let mut attempts = 0usize;
    while edges.len() < m_target && attempts < 200 * (m_target + 1) {
        attempts += 1;
        let mut e: Vec<Vertex> = Vec::with_capacity(k);
        while e.len() < k {
            let v = rng.random_range(1..=n);
            if !e.contains(&v) {
                e.push(v);
            }
        }
        e.sort_unstable();
        if e.iter().any(|&v| degrees[v] + 1 > max_degree) || edges.contains(&e) {
            continue;
        }
        for &v in &e {
            degrees[v] += 1;
        }
        edges.push(e);
    }
    Hypergraph::new(n, k, edges).expect("generator respects invariants")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_instance() {
        let h = parse_hypergraph("2 1 2\n1 2\n").unwrap();
        assert_eq!(h.n(), 2);
        assert_eq!(h.m(), 1);
        assert_eq!(h.k(), 2);
        assert_eq!(h.edge(0), &[1, 2]);
    }

    #[test]
    fn parses_empty_edge_set() {
        let h = parse_hypergraph("3 0 2\n").unwrap();
        assert_eq!(h.n(), 3);
        assert_eq!(h.m(), 0);
        assert_eq!(h.k(), 2);
    }

    #[test]
    fn path_stats() {
        let h = parse_hypergraph("3 2 2\n1 2\n2 3\n").unwrap();
        let s = h.stats();
        assert_eq!(s.max_degree, 2);
        assert!(s.is_linear);
        assert_eq!(s.isolated_vertex_count, 0);
        assert_eq!(s.duplicate_edge_count, 0);
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let h = parse_hypergraph("# instance\n\n3 1 2\n# edge\n2 3\n").unwrap();
        assert_eq!(h.edge(0), &[2, 3]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_hypergraph("2 1 2\n1 5\n") {
            Err(ModelError::VertexOutOfRange { line, id, n }) => {
                assert_eq!((line, id, n), (2, 5, 2));
            }
            other => panic!("unexpected: {other:?}"),
        }
        match parse_hypergraph("2 1 2\n1 1\n") {
            Err(ModelError::DuplicateVertex { line, id }) => assert_eq!((line, id), (2, 1)),
            other => panic!("unexpected: {other:?}"),
        }
        match parse_hypergraph("3 1 3\n1 2\n") {
            Err(ModelError::EdgeSize { line, got, want }) => {
                assert_eq!((line, got, want), (2, 2, 3));
            }
            other => panic!("unexpected: {other:?}"),
        }
        assert!(matches!(
            parse_hypergraph("2 2 2\n1 2\n"),
            Err(ModelError::EdgeCount { want: 2, got: 1 })
        ));
        assert!(matches!(parse_hypergraph("x\n"), Err(ModelError::MalformedHeader { line: 1 })));
    }

    #[test]
    fn round_trip_is_byte_identical_on_canonical_input() {
        let text = "3 2 2\n1 2\n2 3\n";
        let h = parse_hypergraph(text).unwrap();
        assert_eq!(h.to_hg(), text);
    }

    #[test]
    fn prune_identity_and_removal() {
        let h = parse_hypergraph("2 1 2\n1 2\n").unwrap();
        let same = prune_for_vertex_decomposition(&h, 1).unwrap();
        assert_eq!(same, h);
        let pruned = prune_for_vertex_decomposition(&h, 2).unwrap();
        assert_eq!(pruned.n(), 1);
        assert_eq!(pruned.m(), 0);
    }

    #[test]
    fn prune_reindexes_surviving_edges() {
        let h = parse_hypergraph("3 2 2\n1 2\n2 3\n").unwrap();
        let p = prune_for_vertex_decomposition(&h, 2).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.edges(), &[vec![1, 2]]);
    }

    #[test]
    fn edge_prefix_cases() {
        let h = parse_hypergraph("3 2 2\n1 2\n2 3\n").unwrap();
        assert_eq!(edge_prefix(&h, 0).unwrap().m(), 0);
        assert_eq!(edge_prefix(&h, 2).unwrap(), h);
        assert_eq!(edge_prefix(&h, 1).unwrap().edges(), &[vec![1, 2]]);
        assert!(edge_prefix(&h, 3).is_err());
    }

    #[test]
    fn duplicate_edges_are_flagged_not_rejected() {
        let h = Hypergraph::new(2, 2, vec![vec![1, 2], vec![2, 1]]).unwrap();
        let s = h.stats();
        assert_eq!(s.duplicate_edge_count, 1);
        assert!(!s.is_linear);
    }

    #[test]
    fn random_instances_respect_bounds() {
        for seed in 0..20 {
            let h = random_hypergraph(seed, 8, 3, 2, 5);
            let s = h.stats();
            assert!(s.max_degree <= 2);
            assert_eq!(s.k, 3);
            assert!(h.m() <= 5);
        }
    }
}
