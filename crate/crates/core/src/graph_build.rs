//! Channel graphs: one vertex per antenna carrying `[Re, Im]` of the LS
//! estimate, one directed edge per ordered antenna pair carrying the windowed
//! Pearson correlation of the real and imaginary parts.
//!
//! Edges are always stored in canonical order, sorted by `(src, dst)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel_sim::LsSeries;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Denominators below this are treated as zero variance.
pub const CORRELATION_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGraph {
    /// `n_vertices × vertex_dim`.
    pub vertices: Matrix,
    /// `(src, dst)` pairs in canonical order.
    pub edges: Vec<(usize, usize)>,
    /// `n_edges × edge_dim`, row `e` belongs to `edges[e]`.
    pub edge_features: Matrix,
    pub time_index: usize,
}

impl ChannelGraph {
    pub fn n_vertices(&self) -> usize {
        self.vertices.rows()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_dim(&self) -> usize {
        self.vertices.cols()
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_features.cols()
    }

    /// Position of edge `(src, dst)` in a complete graph's canonical order.
    pub fn complete_edge_position(n_vertices: usize, src: usize, dst: usize) -> usize {
        debug_assert!(src != dst);
        src * (n_vertices - 1) + if dst < src { dst } else { dst - 1 }
    }

    pub fn edge_feature(&self, src: usize, dst: usize) -> Option<&[f64]> {
        self.edges
            .binary_search(&(src, dst))
            .ok()
            .map(|e| self.edge_features.row(e))
    }

    /// Relabels antennas: old vertex `i` becomes vertex `perm[i]`. Edges are
    /// re-sorted into canonical order.
    pub fn permute_antennas(&self, perm: &[usize]) -> Result<ChannelGraph> {
        let n = self.n_vertices();
        check_permutation(perm, n)?;
        let mut vertices = Matrix::zeros(n, self.vertex_dim());
        for (i, &p) in perm.iter().enumerate() {
            vertices.row_mut(p).copy_from_slice(self.vertices.row(i));
        }
        let mut relabeled: Vec<((usize, usize), usize)> = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &(s, d))| ((perm[s], perm[d]), e))
            .collect();
        relabeled.sort_unstable_by_key(|&(k, _)| k);
        let edges = relabeled.iter().map(|&(k, _)| k).collect();
        let order: Vec<usize> = relabeled.iter().map(|&(_, e)| e).collect();
        Ok(ChannelGraph {
            vertices,
            edges,
            edge_features: self.edge_features.gather_rows(&order),
            time_index: self.time_index,
        })
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::invalid(
            "permutation length differs from vertex count",
        ));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::invalid("not a permutation"));
        }
        seen[p] = true;
    }
    Ok(())
}

/// The `L` most recent LS estimates, newest first, split into per-antenna
/// real and imaginary rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphWindow {
    n_antennas: usize,
    window_len: usize,
    newest: Vec<Complex64>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl GraphWindow {
    /// `columns[0]` is `h_LS(n)`, `columns[l]` is `h_LS(n − l)`.
    pub fn from_columns(columns: &[Vec<Complex64>]) -> Result<Self> {
        let window_len = columns.len();
        if window_len < 2 {
            return Err(Error::invalid("window length must be at least 2"));
        }
        let n_antennas = columns[0].len();
        if columns.iter().any(|c| c.len() != n_antennas) {
            return Err(Error::invalid("window columns differ in length"));
        }
        let mut re = vec![0.0; n_antennas * window_len];
        let mut im = vec![0.0; n_antennas * window_len];
        for (l, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                re[i * window_len + l] = v.re;
                im[i * window_len + l] = v.im;
            }
        }
        Ok(Self {
            n_antennas,
            window_len,
            newest: columns[0].clone(),
            re,
            im,
        })
    }

    /// Window ending at `n`. Indices before 0 repeat the earliest column.
    pub fn from_series(series: &LsSeries, n: usize, window_len: usize) -> Result<Self> {
        if n >= series.len() {
            return Err(Error::invalid(format!(
                "time index {n} outside LS series of length {}",
                series.len()
            )));
        }
        let columns: Vec<Vec<Complex64>> = (0..window_len)
            .map(|l| series.estimates[n.saturating_sub(l)].clone())
            .collect();
        Self::from_columns(&columns)
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn newest(&self) -> &[Complex64] {
        &self.newest
    }

    pub fn real_row(&self, i: usize) -> &[f64] {
        &self.re[i * self.window_len..(i + 1) * self.window_len]
    }

    pub fn imag_row(&self, i: usize) -> &[f64] {
        &self.im[i * self.window_len..(i + 1) * self.window_len]
    }
}

/// Vertex `i` is `[Re h_i, Im h_i]`.
pub fn build_vertices(h: &[Complex64]) -> Matrix {
    let mut m = Matrix::zeros(h.len(), 2);
    for (i, v) in h.iter().enumerate() {
        m.set(i, 0, v.re);
        m.set(i, 1, v.im);
    }
    m
}

/// Inverse of [`build_vertices`].
pub fn readout(vertices: &Matrix) -> Result<Vec<Complex64>> {
    if vertices.cols() != 2 {
        return Err(Error::invalid(format!(
            "readout needs 2 features per vertex, got {}",
            vertices.cols()
        )));
    }
    Ok((0..vertices.rows())
        .map(|i| Complex64::new(vertices.get(i, 0), vertices.get(i, 1)))
        .collect())
}

fn centered(row: &[f64]) -> Vec<f64> {
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    row.iter().map(|v| v - mean).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn correlation_of_centered(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    let denom = na * nb;
    if denom < CORRELATION_GUARD {
        return 0.0;
    }
    let num: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (num / denom).clamp(-1.0, 1.0)
}

/// `[corr(Re_i, Re_j), corr(Im_i, Im_j)]` over the window, with each row's
/// window mean removed. Zero-variance rows give 0.
pub fn edge_correlation(window: &GraphWindow, i: usize, j: usize) -> Result<[f64; 2]> {
    if i == j {
        return Err(Error::invalid("edge correlation needs distinct antennas"));
    }
    if i >= window.n_antennas() || j >= window.n_antennas() {
        return Err(Error::invalid("antenna index out of range"));
    }
    let (ri, rj) = (centered(window.real_row(i)), centered(window.real_row(j)));
    let (qi, qj) = (centered(window.imag_row(i)), centered(window.imag_row(j)));
    Ok([
        correlation_of_centered(&ri, norm(&ri), &rj, norm(&rj)),
        correlation_of_centered(&qi, norm(&qi), &qj, norm(&qj)),
    ])
}

/// Complete directed graph without self-loops for the window's newest column.
pub fn build_graph(window: &GraphWindow, time_index: usize) -> ChannelGraph {
    let n = window.n_antennas();
    let re: Vec<Vec<f64>> = (0..n).map(|i| centered(window.real_row(i))).collect();
    let im: Vec<Vec<f64>> = (0..n).map(|i| centered(window.imag_row(i))).collect();
    let re_norm: Vec<f64> = re.iter().map(|r| norm(r)).collect();
    let im_norm: Vec<f64> = im.iter().map(|r| norm(r)).collect();

    let n_edges = n * n.saturating_sub(1);
    let mut edges = Vec::with_capacity(n_edges);
    let mut feats = Matrix::zeros(n_edges, 2);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let e = edges.len();
            if j < i {
                // Pearson is symmetric; reuse the (j, i) entry.
                let mirror = ChannelGraph::complete_edge_position(n, j, i);
                let (a, b) = (feats.get(mirror, 0), feats.get(mirror, 1));
                feats.set(e, 0, a);
                feats.set(e, 1, b);
            } else {
                feats.set(
                    e,
                    0,
                    correlation_of_centered(&re[i], re_norm[i], &re[j], re_norm[j]),
                );
                feats.set(
                    e,
                    1,
                    correlation_of_centered(&im[i], im_norm[i], &im[j], im_norm[j]),
                );
            }
            edges.push((i, j));
        }
    }
    ChannelGraph {
        vertices: build_vertices(window.newest()),
        edges,
        edge_features: feats,
        time_index,
    }
}

/// Stacks the features of `now` and `past` per vertex and per edge.
pub fn concat_graphs(now: &ChannelGraph, past: &ChannelGraph) -> Result<ChannelGraph> {
    if now.n_vertices() != past.n_vertices() {
        return Err(Error::invalid(format!(
            "cannot concatenate graphs with {} and {} vertices",
            now.n_vertices(),
            past.n_vertices()
        )));
    }
    if now.edges != past.edges {
        return Err(Error::invalid(
            "cannot concatenate graphs with different edge sets",
        ));
    }
    Ok(ChannelGraph {
        vertices: Matrix::hstack(&[&now.vertices, &past.vertices])?,
        edges: now.edges.clone(),
        edge_features: Matrix::hstack(&[&now.edge_features, &past.edge_features])?,
        time_index: now.time_index,
    })
}
