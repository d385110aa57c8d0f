//! Encoder–core–decoder graph network over channel graphs.
//!
//! The encoder lifts every vertex and edge independently into a latent space,
//! the core runs GN blocks (edge update, sum over incoming edges, vertex
//! update) with weights shared across rounds, and the decoder projects every
//! vertex back to `[Re, Im]`.

mod batch;

pub use batch::{GraphBatch, LatentGraph};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_build::{concat_graphs, readout, ChannelGraph};
use crate::matrix::Matrix;
use crate::nn::{
    accumulate_grads, loss_mse_l2, Checkpoint, LossOutput, Mlp, MlpParams, MlpSpec, MlpTape, Mode,
};
use crate::tracker::{ChannelTracker, GraphPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnConfig {
    /// Vertex and edge feature width of the concatenated input graph.
    pub raw_feature_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub core_hidden: Vec<usize>,
    /// ReLU widths followed by the batch-normalised width; a linear layer of
    /// `decoder_out` units comes last.
    pub decoder_hidden: Vec<usize>,
    pub decoder_out: usize,
    pub core_rounds: usize,
    pub relu_before_bn: bool,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            raw_feature_dim: 4,
            latent_dim: 8,
            encoder_hidden: vec![16, 16],
            core_hidden: vec![16, 16],
            decoder_hidden: vec![16, 16, 8],
            decoder_out: 2,
            core_rounds: 1,
            relu_before_bn: false,
            bn_momentum: 0.99,
            bn_epsilon: 1e-5,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.raw_feature_dim > 0
            && self.latent_dim > 0
            && self.core_rounds > 0
            && !self.decoder_hidden.is_empty()
            && self
                .encoder_hidden
                .iter()
                .chain(&self.core_hidden)
                .chain(&self.decoder_hidden)
                .all(|&d| d > 0);
        if !positive {
            return Err(Error::invalid(
                "GNN dimensions and core_rounds must be positive",
            ));
        }
        if self.decoder_out != 2 {
            return Err(Error::invalid(
                "decoder_out must be 2 (real and imaginary part)",
            ));
        }
        Ok(())
    }

    fn spec(&self, input: usize, hidden: &[usize], output: usize) -> MlpSpec {
        let mut s = MlpSpec::new(input, hidden, output).with_output_batchnorm();
        s.relu_before_bn = self.relu_before_bn;
        s
    }

    pub fn encoder_spec(&self) -> MlpSpec {
        self.spec(self.raw_feature_dim, &self.encoder_hidden, self.latent_dim)
    }

    pub fn core_edge_spec(&self) -> MlpSpec {
        self.spec(3 * self.latent_dim, &self.core_hidden, self.latent_dim)
    }

    pub fn core_vertex_spec(&self) -> MlpSpec {
        self.spec(2 * self.latent_dim, &self.core_hidden, self.latent_dim)
    }

    pub fn decoder_spec(&self) -> MlpSpec {
        let (hidden, last) = self.decoder_hidden.split_at(self.decoder_hidden.len() - 1);
        self.spec(self.latent_dim, hidden, last[0])
            .with_final_linear(self.decoder_out)
    }
}

/// The six MLPs, in flatten / checkpoint order.
pub const MLP_NAMES: [&str; 6] = [
    "encoder_edge",
    "encoder_vertex",
    "core_edge",
    "core_vertex",
    "decoder_edge",
    "decoder_vertex",
];

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub encoder_edge: Mlp,
    pub encoder_vertex: Mlp,
    pub core_edge: Mlp,
    pub core_vertex: Mlp,
    pub decoder_edge: Mlp,
    pub decoder_vertex: Mlp,
}

struct BlockTape {
    edge: MlpTape,
    vertex: MlpTape,
    /// Rows of the edge-MLP input: `[ε; υ_src; υ_dst]` widths.
    edge_widths: [usize; 3],
    vertex_widths: [usize; 2],
}

/// Everything a training-mode forward pass needs for backward.
pub struct GnnTape {
    batch: GraphBatch,
    encoder_edge: MlpTape,
    encoder_vertex: MlpTape,
    core: Vec<BlockTape>,
    decoder_vertex: MlpTape,
}

fn check_block_dims(graph: &GraphBatch, edge_mlp: &Mlp, vertex_mlp: &Mlp) -> Result<()> {
    let (fv, fe) = (graph.vertices.cols(), graph.edge_features.cols());
    let le = edge_mlp.spec.final_dim();
    if edge_mlp.spec.input_dim != fe + 2 * fv {
        return Err(Error::invalid(format!(
            "edge MLP expects {} inputs, graph provides {}",
            edge_mlp.spec.input_dim,
            fe + 2 * fv
        )));
    }
    if vertex_mlp.spec.input_dim != le + fv {
        return Err(Error::invalid(format!(
            "vertex MLP expects {} inputs, block provides {}",
            vertex_mlp.spec.input_dim,
            le + fv
        )));
    }
    Ok(())
}

fn block_forward(
    graph: &GraphBatch,
    edge_mlp: &mut Mlp,
    vertex_mlp: &mut Mlp,
    mode: Mode,
) -> Result<(GraphBatch, BlockTape)> {
    check_block_dims(graph, edge_mlp, vertex_mlp)?;
    let v = &graph.vertices;
    let edge_in = Matrix::hstack(&[
        &graph.edge_features,
        &v.gather_rows(&graph.src),
        &v.gather_rows(&graph.dst),
    ])?;
    let le = edge_mlp.spec.final_dim();
    let (new_edges, edge_tape) = if graph.n_edges() > 0 {
        edge_mlp.forward(&edge_in, mode)?
    } else {
        (Matrix::zeros(0, le), MlpTape::empty())
    };
    let aggregate = graph.aggregate_incoming(&new_edges);
    let vertex_in = Matrix::hstack(&[&aggregate, v])?;
    let (new_vertices, vertex_tape) = vertex_mlp.forward(&vertex_in, mode)?;
    Ok((
        graph.with_features(new_vertices, new_edges),
        BlockTape {
            edge: edge_tape,
            vertex: vertex_tape,
            edge_widths: [graph.edge_features.cols(), v.cols(), v.cols()],
            vertex_widths: [le, v.cols()],
        },
    ))
}

/// Returns `(d vertices_in, d edges_in)` and accumulates MLP gradients.
#[allow(clippy::too_many_arguments)]
fn block_backward(
    graph: &GraphBatch,
    tape: &mut BlockTape,
    edge_mlp: &Mlp,
    vertex_mlp: &Mlp,
    d_vertices_out: &Matrix,
    d_edges_out: &Matrix,
    edge_grads: &mut MlpParams,
    vertex_grads: &mut MlpParams,
) -> Result<(Matrix, Matrix)> {
    let (gv, d_vertex_in) = vertex_mlp.backward(&mut tape.vertex, d_vertices_out)?;
    accumulate_grads(vertex_grads, &gv);
    let mut parts = d_vertex_in.hsplit(&tape.vertex_widths);
    let mut d_vertices = parts.pop().expect("two parts");
    let d_aggregate = parts.pop().expect("two parts");

    let [fe, fv, _] = tape.edge_widths;
    if graph.n_edges() == 0 {
        return Ok((d_vertices, Matrix::zeros(0, fe)));
    }
    let mut d_edges_new = d_aggregate.gather_rows(&graph.dst);
    for (a, b) in d_edges_new
        .as_mut_slice()
        .iter_mut()
        .zip(d_edges_out.as_slice())
    {
        *a += b;
    }
    let (ge, d_edge_in) = edge_mlp.backward(&mut tape.edge, &d_edges_new)?;
    accumulate_grads(edge_grads, &ge);
    let parts = d_edge_in.hsplit(&[fe, fv, fv]);
    parts[1].scatter_add_rows(&graph.src, &mut d_vertices);
    parts[2].scatter_add_rows(&graph.dst, &mut d_vertices);
    Ok((d_vertices, parts[0].clone()))
}

/// One GN block in inference mode: edge update on `[ε; υ_src; υ_dst]`, sum of
/// updated edges into their destination vertex, vertex update on
/// `[aggregate; υ]`.
pub fn gn_block(graph: &GraphBatch, edge_mlp: &Mlp, vertex_mlp: &Mlp) -> Result<GraphBatch> {
    check_block_dims(graph, edge_mlp, vertex_mlp)?;
    let v = &graph.vertices;
    let le = edge_mlp.spec.final_dim();
    let new_edges = if graph.n_edges() > 0 {
        let edge_in = Matrix::hstack(&[
            &graph.edge_features,
            &v.gather_rows(&graph.src),
            &v.gather_rows(&graph.dst),
        ])?;
        edge_mlp.infer(&edge_in)?
    } else {
        Matrix::zeros(0, le)
    };
    let aggregate = graph.aggregate_incoming(&new_edges);
    let new_vertices = vertex_mlp.infer(&Matrix::hstack(&[&aggregate, v])?)?;
    Ok(graph.with_features(new_vertices, new_edges))
}

impl GnnModel {
    pub fn new<R: Rng + ?Sized>(config: GnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut mk = |spec: MlpSpec| -> Result<Mlp> {
            let mut m = Mlp::new(spec, rng)?;
            m.set_batchnorm_hyper(config.bn_momentum, config.bn_epsilon);
            Ok(m)
        };
        Ok(Self {
            encoder_edge: mk(config.encoder_spec())?,
            encoder_vertex: mk(config.encoder_spec())?,
            core_edge: mk(config.core_edge_spec())?,
            core_vertex: mk(config.core_vertex_spec())?,
            decoder_edge: mk(config.decoder_spec())?,
            decoder_vertex: mk(config.decoder_spec())?,
            config,
        })
    }

    pub fn mlps(&self) -> [&Mlp; 6] {
        [
            &self.encoder_edge,
            &self.encoder_vertex,
            &self.core_edge,
            &self.core_vertex,
            &self.decoder_edge,
            &self.decoder_vertex,
        ]
    }

    pub fn mlps_mut(&mut self) -> [&mut Mlp; 6] {
        [
            &mut self.encoder_edge,
            &mut self.encoder_vertex,
            &mut self.core_edge,
            &mut self.core_vertex,
            &mut self.decoder_edge,
            &mut self.decoder_vertex,
        ]
    }

    fn check_raw(&self, graph: &GraphBatch) -> Result<()> {
        let f = self.config.raw_feature_dim;
        if graph.vertices.cols() != f || graph.edge_features.cols() != f {
            return Err(Error::invalid(format!(
                "encoder expects {f} vertex and edge features, got {} and {}",
                graph.vertices.cols(),
                graph.edge_features.cols()
            )));
        }
        Ok(())
    }

    /// Per-element encoding; no message passing.
    pub fn encode(&self, graph: &GraphBatch) -> Result<LatentGraph> {
        self.check_raw(graph)?;
        let edges = if graph.n_edges() > 0 {
            self.encoder_edge.infer(&graph.edge_features)?
        } else {
            Matrix::zeros(0, self.config.latent_dim)
        };
        let vertices = self.encoder_vertex.infer(&graph.vertices)?;
        Ok(graph.with_features(vertices, edges))
    }

    /// `rounds` GN blocks sharing the core MLPs.
    pub fn core(&self, latent: &LatentGraph, rounds: usize) -> Result<LatentGraph> {
        if rounds == 0 {
            return Err(Error::invalid("core needs at least one round"));
        }
        let mut g = gn_block(latent, &self.core_edge, &self.core_vertex)?;
        for _ in 1..rounds {
            g = gn_block(&g, &self.core_edge, &self.core_vertex)?;
        }
        Ok(g)
    }

    /// Per-element decoding to two features per vertex and per edge.
    pub fn decode(&self, latent: &LatentGraph) -> Result<GraphBatch> {
        let edges = if latent.n_edges() > 0 {
            self.decoder_edge.infer(&latent.edge_features)?
        } else {
            Matrix::zeros(0, self.config.decoder_out)
        };
        let vertices = self.decoder_vertex.infer(&latent.vertices)?;
        Ok(latent.with_features(vertices, edges))
    }

    /// Full inference pipeline on concatenated graphs, returning the decoded
    /// batch.
    pub fn run_concatenated(&self, graph: &GraphBatch) -> Result<GraphBatch> {
        let latent = self.encode(graph)?;
        let processed = self.core(&latent, self.config.core_rounds)?;
        self.decode(&processed)
    }

    /// `readout(decode(core(encode(concat(now, past)))))`.
    pub fn predict(&self, now: &ChannelGraph, past: &ChannelGraph) -> Result<Vec<Complex64>> {
        let g = concat_graphs(now, past)?;
        let out = self.run_concatenated(&GraphBatch::from_graph(&g)?)?;
        readout(&out.vertices)
    }

    fn concat_batch(&self, pairs: &[GraphPair]) -> Result<GraphBatch> {
        let graphs = pairs
            .iter()
            .map(|p| concat_graphs(p.now, p.past))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&ChannelGraph> = graphs.iter().collect();
        GraphBatch::from_graphs(&refs)
    }

    /// Forward pass recording tapes. The decoder's edge head is skipped since
    /// nothing downstream reads it.
    pub fn forward_tape(&mut self, pairs: &[GraphPair], mode: Mode) -> Result<(Matrix, GnnTape)> {
        let batch = self.concat_batch(pairs)?;
        self.check_raw(&batch)?;
        let (edges, encoder_edge) = if batch.n_edges() > 0 {
            self.encoder_edge.forward(&batch.edge_features, mode)?
        } else {
            (Matrix::zeros(0, self.config.latent_dim), MlpTape::empty())
        };
        let (vertices, encoder_vertex) = self.encoder_vertex.forward(&batch.vertices, mode)?;
        let mut g = batch.with_features(vertices, edges);
        let mut core = Vec::with_capacity(self.config.core_rounds);
        for _ in 0..self.config.core_rounds {
            let (next, t) = block_forward(&g, &mut self.core_edge, &mut self.core_vertex, mode)?;
            core.push(t);
            g = next;
        }
        let (out, decoder_vertex) = self.decoder_vertex.forward(&g.vertices, mode)?;
        Ok((
            out,
            GnnTape {
                batch,
                encoder_edge,
                encoder_vertex,
                core,
                decoder_vertex,
            },
        ))
    }

    /// Gradients for all six MLPs given `∂loss/∂(decoded vertices)`.
    pub fn backward(&self, tape: &mut GnnTape, d_out: &Matrix) -> Result<[MlpParams; 6]> {
        let mut grads = self.mlps().map(|m| MlpParams::zeros(&m.spec));
        let (gdv, mut d_vertices) = self
            .decoder_vertex
            .backward(&mut tape.decoder_vertex, d_out)?;
        grads[5] = gdv;
        let mut d_edges = Matrix::zeros(tape.batch.n_edges(), self.config.latent_dim);
        let [_, _, core_edge_g, core_vertex_g, _, _] = &mut grads;
        for block in tape.core.iter_mut().rev() {
            let (dv, de) = block_backward(
                &tape.batch,
                block,
                &self.core_edge,
                &self.core_vertex,
                &d_vertices,
                &d_edges,
                core_edge_g,
                core_vertex_g,
            )?;
            d_vertices = dv;
            d_edges = de;
        }
        let (g1, _) = self
            .encoder_vertex
            .backward(&mut tape.encoder_vertex, &d_vertices)?;
        grads[1] = g1;
        if tape.batch.n_edges() > 0 {
            let (g0, _) = self
                .encoder_edge
                .backward(&mut tape.encoder_edge, &d_edges)?;
            grads[0] = g0;
        }
        Ok(grads)
    }

    pub fn to_checkpoint_tensors(&self, ck: &mut Checkpoint) {
        for (name, mlp) in MLP_NAMES.iter().zip(self.mlps()) {
            ck.push_mlp(name, mlp);
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: GnnConfig = serde_json::from_value(
            ck.manifest
                .get("gnn_config")
                .cloned()
                .ok_or_else(|| Error::Format("checkpoint manifest lacks gnn_config".into()))?,
        )?;
        config.validate()?;
        let template = Mlp::zeroed(config.encoder_spec()).map(|mut m| {
            m.set_batchnorm_hyper(config.bn_momentum, config.bn_epsilon);
            m
        })?;
        let t = Some(&template);
        Ok(Self {
            encoder_edge: ck.read_mlp(MLP_NAMES[0], &config.encoder_spec(), t)?,
            encoder_vertex: ck.read_mlp(MLP_NAMES[1], &config.encoder_spec(), t)?,
            core_edge: ck.read_mlp(MLP_NAMES[2], &config.core_edge_spec(), t)?,
            core_vertex: ck.read_mlp(MLP_NAMES[3], &config.core_vertex_spec(), t)?,
            decoder_edge: ck.read_mlp(MLP_NAMES[4], &config.decoder_spec(), t)?,
            decoder_vertex: ck.read_mlp(MLP_NAMES[5], &config.decoder_spec(), t)?,
            config,
        })
    }
}

fn complex_from_rows(m: &Matrix) -> Vec<Complex64> {
    (0..m.rows())
        .map(|i| Complex64::new(m.get(i, 0), m.get(i, 1)))
        .collect()
}

impl ChannelTracker for GnnModel {
    fn kind(&self) -> &'static str {
        "gnn"
    }

    fn predict_batch(&self, pairs: &[GraphPair]) -> Result<Vec<Complex64>> {
        let batch = self.concat_batch(pairs)?;
        let out = self.run_concatenated(&batch)?;
        Ok(complex_from_rows(&out.vertices))
    }

    fn train_step_grads(
        &mut self,
        pairs: &[GraphPair],
        targets: &[Complex64],
        kappa: f64,
    ) -> Result<(LossOutput, Vec<f64>)> {
        let (out, mut tape) = self.forward_tape(pairs, Mode::Train)?;
        let pred = complex_from_rows(&out);
        let n_antennas = pairs.first().map_or(0, |p| p.now.n_vertices());
        let weights = self.weights_flat();
        let loss = loss_mse_l2(&pred, targets, n_antennas, &weights, kappa)?;
        let mut d_out = Matrix::zeros(out.rows(), 2);
        for (i, g) in loss.grad_pred.iter().enumerate() {
            d_out.set(i, 0, g.re);
            d_out.set(i, 1, g.im);
        }
        let grads = self.backward(&mut tape, &d_out)?;
        let mut flat = Vec::with_capacity(self.n_params());
        for g in &grads {
            g.flatten_into(&mut flat);
        }
        add_weight_penalty_grad(&mut flat, &self.weight_mask(), &loss.grad_weights);
        Ok((loss, flat))
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for m in self.mlps() {
            m.params.flatten_into(&mut flat);
        }
        flat
    }

    fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::invalid("flat parameter length mismatch"));
        }
        let mut off = 0;
        for m in self.mlps_mut() {
            off += m.params.unflatten_from(&flat[off..])?;
        }
        Ok(())
    }

    fn weight_mask(&self) -> Vec<bool> {
        let mut mask = Vec::new();
        for m in self.mlps() {
            m.params.weight_mask_into(&mut mask);
        }
        mask
    }

    fn to_checkpoint(&self, manifest: serde_json::Value) -> Checkpoint {
        let mut manifest = manifest;
        if let serde_json::Value::Object(map) = &mut manifest {
            map.insert("model".into(), "gnn".into());
            map.insert(
                "gnn_config".into(),
                serde_json::to_value(&self.config).expect("config serialises"),
            );
        }
        let mut ck = Checkpoint::new(manifest);
        self.to_checkpoint_tensors(&mut ck);
        ck
    }
}

/// Adds the penalty gradient onto the weight entries of a full gradient.
pub(crate) fn add_weight_penalty_grad(flat: &mut [f64], mask: &[bool], grad_weights: &[f64]) {
    let mut k = 0;
    for (g, &m) in flat.iter_mut().zip(mask) {
        if m {
            *g += grad_weights[k];
            k += 1;
        }
    }
}
