use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::baselines::ls_baseline_predict;
use crate::channel_sim::{build_ls_series, simulate_frame, PathSet};
use crate::error::{Error, Result};
use crate::graph_build::{build_graph, ChannelGraph, GraphWindow};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, Stream};
use crate::tracker::GraphPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Eval,
}

impl Split {
    pub fn stream(self) -> Stream {
        match self {
            Split::Train => Stream::TrainFrames,
            Split::Validation => Stream::ValidationFrames,
            Split::Eval => Stream::EvalFrames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    /// Position within the frame.
    pub n: usize,
    pub snr_db: f64,
    pub user_speed: f64,
    pub frame_index: u64,
    pub frame_seed: u64,
    /// Path realisation of the frame, enough to regenerate the target.
    pub paths: PathSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub now: ChannelGraph,
    pub past: ChannelGraph,
    /// True channel `h(n)`.
    pub target: Vec<Complex64>,
    /// Held LS estimate at `n`.
    pub ls: Vec<Complex64>,
    pub meta: SampleMeta,
}

impl DatasetSample {
    pub fn pair(&self) -> GraphPair<'_> {
        GraphPair {
            now: &self.now,
            past: &self.past,
        }
    }
}

/// Simulates `n_samples / samples_per_frame` (rounded up) independent frames
/// seeded from the split's stream and draws samples at data positions
/// `n ≥ max(L, K)`.
pub fn generate_dataset(
    cfg: &ExperimentConfig,
    split: Split,
    n_samples: usize,
) -> Result<Vec<DatasetSample>> {
    cfg.validate()?;
    let (l, k) = (cfg.graph.window_len, cfg.lag());
    let eligible: Vec<usize> = (cfg.first_sample_index()..cfg.layout.len())
        .filter(|&n| !cfg.layout.is_pilot(n))
        .collect();
    let per_frame = cfg.training.samples_per_frame;
    let mut out = Vec::with_capacity(n_samples);
    let mut frame_index = 0u64;
    while out.len() < n_samples {
        let frame_seed = derive_seed(cfg.system.seed, split.stream(), frame_index);
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed);
        let frame = simulate_frame(&cfg.system, &cfg.layout, &mut rng)?;
        let series = build_ls_series(&frame)?;
        for _ in 0..per_frame.min(n_samples - out.len()) {
            let n = eligible[rng.random_range(0..eligible.len())];
            let now = build_graph(&GraphWindow::from_series(&series, n, l)?, n);
            let past = build_graph(&GraphWindow::from_series(&series, n - k, l)?, n - k);
            out.push(DatasetSample {
                now,
                past,
                target: frame.channels[n].clone(),
                ls: ls_baseline_predict(&series, n)?,
                meta: SampleMeta {
                    n,
                    snr_db: cfg.system.snr_db,
                    user_speed: cfg.system.user_speed,
                    frame_index,
                    frame_seed,
                    paths: frame.process.paths().clone(),
                },
            });
        }
        frame_index += 1;
    }
    Ok(out)
}

const MAGIC: &[u8; 8] = b"CHTDSET1";

#[derive(Debug, Serialize, Deserialize)]
struct ArtifactHeader {
    n_samples: usize,
    /// Free-form provenance, typically the generating config.
    info: serde_json::Value,
}

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        self.u64(vs.len() as u64)?;
        vs.iter().try_for_each(|&v| self.f64(v))
    }
    fn complex(&mut self, vs: &[Complex64]) -> Result<()> {
        self.u64(vs.len() as u64)?;
        vs.iter().try_for_each(|c| {
            self.f64(c.re)?;
            self.f64(c.im)
        })
    }
    fn matrix(&mut self, m: &Matrix) -> Result<()> {
        self.u64(m.rows() as u64)?;
        self.u64(m.cols() as u64)?;
        m.as_slice().iter().try_for_each(|&v| self.f64(v))
    }
    fn graph(&mut self, g: &ChannelGraph) -> Result<()> {
        self.u64(g.time_index as u64)?;
        self.matrix(&g.vertices)?;
        self.u64(g.edges.len() as u64)?;
        for &(s, d) in &g.edges {
            self.u64(s as u64)?;
            self.u64(d as u64)?;
        }
        self.matrix(&g.edge_features)
    }
}

struct In<R: Read>(R);

/// Upper bound on any single length field, to fail fast on corrupt files.
const MAX_LEN: u64 = 1 << 32;

impl<R: Read> In<R> {
    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > MAX_LEN {
            return Err(Error::Format(format!("implausible length {v} in dataset")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn complex(&mut self) -> Result<Vec<Complex64>> {
        let n = self.len()?;
        (0..n)
            .map(|_| Ok(Complex64::new(self.f64()?, self.f64()?)))
            .collect()
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let (r, c) = (self.len()?, self.len()?);
        let data = (0..r * c).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(r, c, data)
    }
    fn graph(&mut self) -> Result<ChannelGraph> {
        let time_index = self.len()?;
        let vertices = self.matrix()?;
        let ne = self.len()?;
        let edges = (0..ne)
            .map(|_| Ok((self.len()?, self.len()?)))
            .collect::<Result<Vec<_>>>()?;
        let edge_features = self.matrix()?;
        if edge_features.rows() != ne
            || edges
                .iter()
                .any(|&(s, d)| s >= vertices.rows() || d >= vertices.rows())
        {
            return Err(Error::Format("inconsistent graph in dataset".into()));
        }
        Ok(ChannelGraph {
            vertices,
            edges,
            edge_features,
            time_index,
        })
    }
}

/// Writes the binary dataset container.
///
/// Layout, all integers `u64` and all reals `f64`, little-endian:
/// magic `CHTDSET1`, header length and JSON header, then per sample the
/// meta fields (`n`, `snr_db`, `user_speed`, `frame_index`, `frame_seed`,
/// path gains, Doppler shifts, angles), the current and the lagged graph
/// (time index, vertex matrix, edge list, edge matrix), the target and the
/// held LS estimate. Vectors and matrices are length-prefixed; complex
/// values are `(re, im)` pairs.
pub fn write_dataset(
    path: &Path,
    samples: &[DatasetSample],
    info: serde_json::Value,
) -> Result<()> {
    let mut w = Out(BufWriter::new(std::fs::File::create(path)?));
    w.0.write_all(MAGIC)?;
    let header = serde_json::to_vec(&ArtifactHeader {
        n_samples: samples.len(),
        info,
    })?;
    w.u64(header.len() as u64)?;
    w.0.write_all(&header)?;
    for s in samples {
        let m = &s.meta;
        w.u64(m.n as u64)?;
        w.f64(m.snr_db)?;
        w.f64(m.user_speed)?;
        w.u64(m.frame_index)?;
        w.u64(m.frame_seed)?;
        w.complex(&m.paths.gains)?;
        w.f64s(&m.paths.doppler_freqs)?;
        w.f64s(&m.paths.aoas)?;
        w.graph(&s.now)?;
        w.graph(&s.past)?;
        w.complex(&s.target)?;
        w.complex(&s.ls)?;
    }
    w.0.flush()?;
    Ok(())
}

/// Reads a container written by [`write_dataset`], returning the samples and
/// the header's provenance value.
pub fn read_dataset(path: &Path) -> Result<(Vec<DatasetSample>, serde_json::Value)> {
    let mut r = In(BufReader::new(std::fs::File::open(path)?));
    let mut magic = [0u8; 8];
    r.0.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{} is not a dataset file",
            path.display()
        )));
    }
    let hlen = r.len()?;
    let mut hbuf = vec![0u8; hlen];
    r.0.read_exact(&mut hbuf)?;
    let header: ArtifactHeader = serde_json::from_slice(&hbuf)?;
    let mut samples = Vec::with_capacity(header.n_samples.min(1 << 20));
    for _ in 0..header.n_samples {
        let n = r.len()?;
        let snr_db = r.f64()?;
        let user_speed = r.f64()?;
        let frame_index = r.u64()?;
        let frame_seed = r.u64()?;
        let paths = PathSet {
            gains: r.complex()?,
            doppler_freqs: r.f64s()?,
            aoas: r.f64s()?,
        };
        let now = r.graph()?;
        let past = r.graph()?;
        let target = r.complex()?;
        let ls = r.complex()?;
        samples.push(DatasetSample {
            now,
            past,
            target,
            ls,
            meta: SampleMeta {
                n,
                snr_db,
                user_speed,
                frame_index,
                frame_seed,
                paths,
            },
        });
    }
    let mut extra = [0u8; 1];
    if r.0.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after dataset".into()));
    }
    Ok((samples, header.info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_sim::sample_channel;
    use crate::rng::stream_of;

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.system.n_antennas = 4;
        c.system.n_paths = 5;
        c.training.samples_per_frame = 3;
        c
    }

    #[test]
    fn zero_samples_gives_empty_dataset() {
        assert!(generate_dataset(&small_config(), Split::Train, 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn same_seed_same_dataset() {
        let c = small_config();
        let a = generate_dataset(&c, Split::Train, 7).unwrap();
        let b = generate_dataset(&c, Split::Train, 7).unwrap();
        assert_eq!(a, b);
        let other = generate_dataset(&c.with_seed(1), Split::Train, 7).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn samples_respect_layout_and_lag() {
        let mut c = small_config();
        c.layout.group_len = 5;
        c.graph.window_len = 8;
        for s in generate_dataset(&c, Split::Eval, 20).unwrap() {
            assert!(s.meta.n >= 8);
            assert!(!c.layout.is_pilot(s.meta.n));
            assert_eq!(s.now.time_index, s.meta.n);
            assert_eq!(s.past.time_index + 5, s.now.time_index);
            assert_eq!(s.target.len(), 4);
            assert_eq!(stream_of(s.meta.frame_seed), Stream::EvalFrames as u64);
        }
    }

    #[test]
    fn targets_regenerate_from_stored_paths() {
        let c = small_config();
        for s in generate_dataset(&c, Split::Train, 6).unwrap() {
            let h = sample_channel(&s.meta.paths, &c.system, s.meta.n);
            assert_eq!(h, s.target);
        }
    }

    #[test]
    fn splits_use_disjoint_frames() {
        let c = small_config();
        let train = generate_dataset(&c, Split::Train, 9).unwrap();
        let eval = generate_dataset(&c, Split::Eval, 9).unwrap();
        for a in &train {
            assert!(eval.iter().all(|b| b.meta.frame_seed != a.meta.frame_seed));
        }
    }

    #[test]
    fn artifact_round_trip_is_exact() {
        let c = small_config();
        let data = generate_dataset(&c, Split::Train, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_dataset(&path, &data, serde_json::json!({"k": 1})).unwrap();
        let (back, info) = read_dataset(&path).unwrap();
        assert_eq!(back, data);
        assert_eq!(info["k"], 1);
    }

    #[test]
    fn corrupt_artifact_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOTADATASET").unwrap();
        assert!(read_dataset(&path).is_err());
        let data = generate_dataset(&small_config(), Split::Train, 2).unwrap();
        write_dataset(&path, &data, serde_json::Value::Null).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_dataset(&path).is_err());
    }
}
