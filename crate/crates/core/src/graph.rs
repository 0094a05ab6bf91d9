//! Undirected graphs in CSR form and the matrices derived from them.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Node index lists for the three data splits.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::Parameter(format!("split index {i} out of range for n={n}")));
            }
            if seen[i] {
                return Err(Error::Parameter(format!("node {i} appears in more than one split")));
            }
            seen[i] = true;
        }
        Ok(())
    }

    pub fn mask(&self, which: SplitKind, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in self.get(which) {
            m[i] = true;
        }
        m
    }

    pub fn get(&self, which: SplitKind) -> &[usize] {
        match which {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LaplacianKind {
    /// `I − D^{-1/2} A D^{-1/2}`
    #[default]
    Sym,
    /// `D − A`
    Unnormalized,
}

impl std::fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LaplacianKind::Sym => "sym",
            LaplacianKind::Unnormalized => "unnormalized",
        })
    }
}

impl std::str::FromStr for LaplacianKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym" => Ok(Self::Sym),
            "unnormalized" => Ok(Self::Unnormalized),
            _ => Err(Error::Config(format!("unknown laplacian `{s}` (sym|unnormalized)"))),
        }
    }
}

/// Undirected simple graph with node features, labels and splits.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    splits: Splits,
}

impl Graph {
    /// Validates and builds a graph. Each undirected edge is listed once, in
    /// either orientation.
    pub fn new(
        n: usize,
        edges: &[(usize, usize)],
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        splits: Splits,
    ) -> Result<Self> {
        if features.rows() != n || !features.is_matrix() {
            return Err(Error::Parameter(format!(
                "features shape {:?} does not match n={n}",
                features.shape()
            )));
        }
        if labels.len() != n {
            return Err(Error::Parameter(format!("{} labels for n={n}", labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes.max(1)) {
            return Err(Error::Parameter(format!("label {l} ≥ num_classes {num_classes}")));
        }
        splits.validate(n)?;

        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Parameter(format!("edge ({u},{v}) out of range for n={n}")));
            }
            if u == v {
                return Err(Error::Parameter(format!("self-loop at node {u}")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(2 * edges.len());
        offsets.push(0);
        for (u, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::Parameter(format!("duplicate edge ({u},{})", w[0])));
            }
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Ok(Self {
            n,
            offsets,
            targets,
            features,
            labels,
            num_classes,
            splits,
        })
    }

    /// Structure-only graph: single-column zero features, all labels 0.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(n, edges, Tensor::zeros(n, 1), vec![0; n], 1, Splits::default())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    fn require_no_isolated(&self) -> Result<()> {
        match (0..self.n).find(|&u| self.degree(u) == 0) {
            Some(node) => Err(Error::DegenerateDegree { node }),
            None => Ok(()),
        }
    }

    pub fn adjacency(&self) -> CsrMatrix {
        CsrMatrix::from_rows(
            self.n,
            (0..self.n)
                .map(|u| self.neighbors(u).iter().map(|&v| (v, 1.0)).collect())
                .collect(),
        )
    }

    /// Random-walk matrix `Â = A D⁻¹`; columns sum to one.
    pub fn rw_matrix(&self) -> Result<CsrMatrix> {
        self.require_no_isolated()?;
        Ok(CsrMatrix::from_rows(
            self.n,
            (0..self.n)
                .map(|u| {
                    self.neighbors(u)
                        .iter()
                        .map(|&v| (v, 1.0 / self.degree(v) as f64))
                        .collect()
                })
                .collect(),
        ))
    }

    /// Dense graph Laplacian of the requested kind.
    pub fn laplacian(&self, kind: LaplacianKind) -> Result<Tensor> {
        self.require_no_isolated()?;
        let n = self.n;
        let mut l = Tensor::zeros(n, n);
        match kind {
            LaplacianKind::Sym => {
                let inv_sqrt: Vec<f64> =
                    (0..n).map(|u| 1.0 / (self.degree(u) as f64).sqrt()).collect();
                for u in 0..n {
                    l.set(u, u, 1.0);
                    for &v in self.neighbors(u) {
                        l.set(u, v, -inv_sqrt[u] * inv_sqrt[v]);
                    }
                }
            }
            LaplacianKind::Unnormalized => {
                for u in 0..n {
                    l.set(u, u, self.degree(u) as f64);
                    for &v in self.neighbors(u) {
                        l.set(u, v, -1.0);
                    }
                }
            }
        }
        Ok(l)
    }

    pub fn sym_norm_laplacian(&self) -> Result<Tensor> {
        self.laplacian(LaplacianKind::Sym)
    }

    /// `D̃^{-1/2}(A + I)D̃^{-1/2}` with `D̃ = deg(A + I)`.
    pub fn gcn_norm(&self) -> CsrMatrix {
        let inv_sqrt: Vec<f64> = (0..self.n)
            .map(|u| 1.0 / ((self.degree(u) + 1) as f64).sqrt())
            .collect();
        CsrMatrix::from_rows(
            self.n,
            (0..self.n)
                .map(|u| {
                    let mut row: Vec<(usize, f64)> = self
                        .neighbors(u)
                        .iter()
                        .map(|&v| (v, inv_sqrt[u] * inv_sqrt[v]))
                        .collect();
                    row.push((u, inv_sqrt[u] * inv_sqrt[u]));
                    row
                })
                .collect(),
        )
    }

    /// Connected components by BFS, each sorted, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                        queue.push_back(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Induced subgraph on `nodes` (structure only), relabeled `0..len` in
    /// the given order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let mut index = vec![usize::MAX; self.n];
        for (i, &u) in nodes.iter().enumerate() {
            index[u] = i;
        }
        let mut edges = Vec::new();
        for (i, &u) in nodes.iter().enumerate() {
            for &v in self.neighbors(u) {
                let j = index[v];
                if j != usize::MAX && i < j {
                    edges.push((i, j));
                }
            }
        }
        Graph::from_edges(nodes.len(), &edges)
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::Parameter("permutation length".into()));
        }
        let mut inv = vec![0; self.n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let edges: Vec<(usize, usize)> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        let features = self.features.select_rows(&inv);
        let labels = inv.iter().map(|&i| self.labels[i]).collect();
        let map = |v: &[usize]| -> Vec<usize> {
            let mut out: Vec<usize> = v.iter().map(|&i| perm[i]).collect();
            out.sort_unstable();
            out
        };
        let splits = Splits {
            train: map(&self.splits.train),
            val: map(&self.splits.val),
            test: map(&self.splits.test),
        };
        Graph::new(self.n, &edges, features, labels, self.num_classes, splits)
    }

    /// Plain-text serialization; see [`parse_graph`].
    pub fn to_text(&self) -> String {
        let d = self.features.cols();
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.n, d, self.num_classes);
        for u in 0..self.n {
            s.push_str(&self.labels[u].to_string());
            for x in self.features.row(u) {
                let _ = write!(s, " {x}");
            }
            s.push('\n');
        }
        for (u, v) in self.edges() {
            let _ = writeln!(s, "{u} {v}");
        }
        for list in [&self.splits.train, &self.splits.val, &self.splits.test] {
            let line: Vec<String> = list.iter().map(|i| i.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {what} `{tok}`"),
    })
}

/// Parses the text format written by [`Graph::to_text`]:
///
/// ```text
/// n d num_classes
/// <label> <d floats>        (n lines)
/// <u> <v>                   (one line per undirected edge)
/// <train indices>
/// <val indices>
/// <test indices>
/// ```
pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    let header: Vec<&str> = lines
        .first()
        .ok_or(Error::Parse { line: 1, msg: "empty file".into() })?
        .split_whitespace()
        .collect();
    if header.len() != 3 {
        return Err(Error::Parse {
            line: 1,
            msg: "header must be `n d num_classes`".into(),
        });
    }
    let n: usize = parse_num(header[0], 1, "n")?;
    let d: usize = parse_num(header[1], 1, "d")?;
    let classes: usize = parse_num(header[2], 1, "num_classes")?;
    if lines.len() < 1 + n + 3 {
        return Err(Error::Parse {
            line: lines.len(),
            msg: "file truncated".into(),
        });
    }
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (i, line) in lines[1..=n].iter().enumerate() {
        let lno = i + 2;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != d + 1 {
            return Err(Error::Parse {
                line: lno,
                msg: format!("expected label + {d} features"),
            });
        }
        labels.push(parse_num(toks[0], lno, "label")?);
        for t in &toks[1..] {
            features.push(parse_num::<f64>(t, lno, "feature")?);
        }
    }
    let edge_end = lines.len() - 3;
    let mut edges = Vec::new();
    for (i, line) in lines[n + 1..edge_end].iter().enumerate() {
        let lno = n + 2 + i;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                line: lno,
                msg: "edge lines hold exactly two node ids".into(),
            });
        }
        edges.push((parse_num(toks[0], lno, "node")?, parse_num(toks[1], lno, "node")?));
    }
    let mut split_lists = Vec::with_capacity(3);
    for (i, line) in lines[edge_end..].iter().enumerate() {
        let lno = edge_end + 1 + i;
        let list = line
            .split_whitespace()
            .map(|t| parse_num(t, lno, "node"))
            .collect::<Result<Vec<usize>>>()?;
        split_lists.push(list);
    }
    let test = split_lists.pop().unwrap_or_default();
    let val = split_lists.pop().unwrap_or_default();
    let train = split_lists.pop().unwrap_or_default();
    Graph::new(
        n,
        &edges,
        Tensor::matrix(n, d, features),
        labels,
        classes,
        Splits { train, val, test },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn p2() -> Graph {
        Graph::from_edges(2, &[(0, 1)]).unwrap()
    }

    /// Dense `A` and degree vector built straight from the edge list.
    fn dense_adj(n: usize, edges: &[(usize, usize)]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut a = vec![vec![0.0; n]; n];
        for &(u, v) in edges {
            a[u][v] = 1.0;
            a[v][u] = 1.0;
        }
        let deg = a.iter().map(|r| r.iter().sum()).collect();
        (a, deg)
    }

    #[test]
    fn rw_matrix_small_cases() {
        assert_eq!(
            p2().rw_matrix().unwrap().to_dense(),
            Tensor::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
        );
        let m = k3().rw_matrix().unwrap().to_dense();
        let (a, deg) = dense_adj(3, &[(0, 1), (1, 2), (0, 2)]);
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(m.get(u, v), a[u][v] / deg[v]);
            }
        }
        for s in k3().rw_matrix().unwrap().column_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_node_is_rejected() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        assert!(matches!(g.rw_matrix(), Err(Error::DegenerateDegree { node: 2 })));
        assert!(matches!(g.sym_norm_laplacian(), Err(Error::DegenerateDegree { node: 2 })));
    }

    #[test]
    fn laplacian_small_cases() {
        let l = k3().sym_norm_laplacian().unwrap();
        for u in 0..3 {
            for v in 0..3 {
                let want = if u == v { 1.0 } else { -0.5 };
                assert!((l.get(u, v) - want).abs() < 1e-15);
            }
        }
        assert_eq!(
            p2().sym_norm_laplacian().unwrap(),
            Tensor::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]])
        );
        // D^{1/2}·1 is in the kernel
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)]).unwrap();
        let l = g.sym_norm_laplacian().unwrap();
        let v = Tensor::matrix(5, 1, (0..5).map(|u| (g.degree(u) as f64).sqrt()).collect());
        assert!(l.matmul(&v).unwrap().max_abs() < 1e-12);
        assert_eq!(
            p2().laplacian(LaplacianKind::Unnormalized).unwrap(),
            Tensor::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]])
        );
    }

    #[test]
    fn gcn_norm_small_cases() {
        let single = Graph::from_edges(1, &[]).unwrap();
        assert_eq!(single.gcn_norm().to_dense(), Tensor::from_rows(&[&[1.0]]));
        let p = p2().gcn_norm().to_dense();
        assert!(p.data().iter().all(|&x| (x - 0.5).abs() < 1e-15));
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
        let d = g.gcn_norm().to_dense();
        assert_eq!(d, d.transpose());
    }

    #[test]
    fn construction_rejects_bad_edges() {
        assert!(Graph::from_edges(2, &[(0, 0)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_edges(2, &[(0, 2)]).is_err());
        let overlap = Splits { train: vec![0], val: vec![0], test: vec![] };
        assert!(Graph::new(2, &[(0, 1)], Tensor::zeros(2, 1), vec![0, 0], 1, overlap).is_err());
    }

    #[test]
    fn components_and_subgraphs() {
        let g = Graph::from_edges(5, &[(0, 3), (1, 2), (3, 4)]).unwrap();
        assert_eq!(g.connected_components(), vec![vec![0, 3, 4], vec![1, 2]]);
        let sub = g.induced_subgraph(&[0, 3, 4]).unwrap();
        assert_eq!(sub.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn text_round_trip() {
        let g = Graph::new(
            3,
            &[(2, 0), (0, 1)],
            Tensor::matrix(3, 2, vec![0.1, -2.5e-7, 1.0, 0.0, 3.0000000000000004, -0.0]),
            vec![1, 0, 1],
            2,
            Splits { train: vec![0, 2], val: vec![1], test: vec![] },
        )
        .unwrap();
        let text = g.to_text();
        let back = parse_graph(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.features().data(), g.features().data());
        assert!(parse_graph("3 1 1\n0 0\n").is_err());
    }

    #[test]
    fn permute_relabels_everything() {
        let g = Graph::new(
            3,
            &[(0, 1)],
            Tensor::matrix(3, 1, vec![10.0, 11.0, 12.0]),
            vec![0, 1, 0],
            2,
            Splits { train: vec![0], val: vec![1], test: vec![2] },
        )
        .unwrap();
        let p = g.permute(&[2, 0, 1]).unwrap();
        assert!(p.has_edge(2, 0));
        assert_eq!(p.features().data(), &[11.0, 12.0, 10.0]);
        assert_eq!(p.labels(), &[1, 0, 0]);
        assert_eq!(p.splits().train, vec![2]);
    }
}
