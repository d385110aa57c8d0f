use crate::error::{Error, Result};
use crate::graph_build::ChannelGraph;
use crate::matrix::{pairwise_sum, Matrix};

/// One or more graphs flattened into shared vertex and edge matrices. Edge
/// endpoints are global row indices into `vertices`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub vertices: Matrix,
    pub edge_features: Matrix,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// `(vertex_count, edge_count)` per member graph.
    pub sizes: Vec<(usize, usize)>,
    pub time_indices: Vec<usize>,
    /// Per vertex, incoming edge indices sorted by ascending source.
    incoming: Vec<Vec<usize>>,
}

/// A batch whose features live in the latent space of the network.
pub type LatentGraph = GraphBatch;

impl GraphBatch {
    pub fn from_graphs(graphs: &[&ChannelGraph]) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| Error::invalid("empty graph batch"))?;
        let (fv, fe) = (first.vertex_dim(), first.edge_dim());
        if graphs
            .iter()
            .any(|g| g.vertex_dim() != fv || g.edge_dim() != fe)
        {
            return Err(Error::invalid(
                "graphs in a batch must share feature dimensions",
            ));
        }
        let nv: usize = graphs.iter().map(|g| g.n_vertices()).sum();
        let ne: usize = graphs.iter().map(|g| g.n_edges()).sum();
        let mut vdata = Vec::with_capacity(nv * fv);
        let mut edata = Vec::with_capacity(ne * fe);
        let mut src = Vec::with_capacity(ne);
        let mut dst = Vec::with_capacity(ne);
        let mut sizes = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for g in graphs {
            vdata.extend_from_slice(g.vertices.as_slice());
            edata.extend_from_slice(g.edge_features.as_slice());
            for &(s, d) in &g.edges {
                if s >= g.n_vertices() || d >= g.n_vertices() {
                    return Err(Error::invalid("edge endpoint out of range"));
                }
                src.push(offset + s);
                dst.push(offset + d);
            }
            sizes.push((g.n_vertices(), g.n_edges()));
            offset += g.n_vertices();
        }
        let incoming = incoming_lists(nv, &src, &dst);
        Ok(Self {
            vertices: Matrix::from_vec(nv, fv, vdata)?,
            edge_features: Matrix::from_vec(ne, fe, edata)?,
            src,
            dst,
            sizes,
            time_indices: graphs.iter().map(|g| g.time_index).collect(),
            incoming,
        })
    }

    pub fn from_graph(graph: &ChannelGraph) -> Result<Self> {
        Self::from_graphs(&[graph])
    }

    /// Same topology, new features.
    pub fn with_features(&self, vertices: Matrix, edge_features: Matrix) -> Self {
        debug_assert_eq!(vertices.rows(), self.vertices.rows());
        debug_assert_eq!(edge_features.rows(), self.edge_features.rows());
        Self {
            vertices,
            edge_features,
            src: self.src.clone(),
            dst: self.dst.clone(),
            sizes: self.sizes.clone(),
            time_indices: self.time_indices.clone(),
            incoming: self.incoming.clone(),
        }
    }

    pub fn n_graphs(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.rows()
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    pub fn same_topology(&self, other: &GraphBatch) -> bool {
        self.src == other.src && self.dst == other.dst && self.sizes == other.sizes
    }

    /// Splits back into per-graph [`ChannelGraph`]s with local indices.
    pub fn to_graphs(&self) -> Vec<ChannelGraph> {
        let mut out = Vec::with_capacity(self.n_graphs());
        let (mut v0, mut e0) = (0, 0);
        for (&(nv, ne), &t) in self.sizes.iter().zip(&self.time_indices) {
            let vrows: Vec<usize> = (v0..v0 + nv).collect();
            let erows: Vec<usize> = (e0..e0 + ne).collect();
            out.push(ChannelGraph {
                vertices: self.vertices.gather_rows(&vrows),
                edges: erows
                    .iter()
                    .map(|&e| (self.src[e] - v0, self.dst[e] - v0))
                    .collect(),
                edge_features: self.edge_features.gather_rows(&erows),
                time_index: t,
            });
            v0 += nv;
            e0 += ne;
        }
        out
    }

    /// Per-vertex sum of edge rows over incoming edges, summed pairwise in
    /// ascending source order.
    pub fn aggregate_incoming(&self, edge_values: &Matrix) -> Matrix {
        let cols = edge_values.cols();
        let mut out = Matrix::zeros(self.n_vertices(), cols);
        let mut buf = Vec::new();
        for (v, inc) in self.incoming.iter().enumerate() {
            if inc.is_empty() {
                continue;
            }
            let row = out.row_mut(v);
            for (c, slot) in row.iter_mut().enumerate() {
                buf.clear();
                buf.extend(inc.iter().map(|&e| edge_values.get(e, c)));
                *slot = pairwise_sum(&buf);
            }
        }
        out
    }
}

fn incoming_lists(n_vertices: usize, src: &[usize], dst: &[usize]) -> Vec<Vec<usize>> {
    let mut inc: Vec<Vec<usize>> = vec![Vec::new(); n_vertices];
    for (e, &d) in dst.iter().enumerate() {
        inc[d].push(e);
    }
    for list in &mut inc {
        list.sort_by_key(|&e| (src[e], e));
    }
    inc
}
