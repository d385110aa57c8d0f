use chantrack::graph_build::{build_graph, build_vertices, concat_graphs, readout, GraphWindow};
use chantrack::rng::{derive_seed, stream_of, Stream};
use num_complex::Complex64;
use proptest::prelude::*;

fn window_strategy() -> impl Strategy<Value = Vec<Vec<Complex64>>> {
    (2usize..7, 2usize..10).prop_flat_map(|(nr, l)| {
        prop::collection::vec(
            prop::collection::vec(
                (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| Complex64::new(a, b)),
                nr,
            ),
            l,
        )
    })
}

proptest! {
    #[test]
    fn graphs_are_complete_canonical_and_bounded(cols in window_strategy()) {
        let nr = cols[0].len();
        let g = build_graph(&GraphWindow::from_columns(&cols).unwrap(), 3);
        prop_assert_eq!(g.n_vertices(), nr);
        prop_assert_eq!(g.n_edges(), nr * (nr - 1));
        prop_assert!(g.edges.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(g.edges.iter().all(|&(s, d)| s != d));
        for &(s, d) in &g.edges {
            let f = g.edge_feature(s, d).unwrap();
            prop_assert!(f.iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert_eq!(f, g.edge_feature(d, s).unwrap());
        }
        prop_assert_eq!(readout(&g.vertices).unwrap(), cols[0].clone());
    }

    #[test]
    fn correlation_ignores_affine_rescaling(cols in window_strategy(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let g = build_graph(&GraphWindow::from_columns(&cols).unwrap(), 0);
        let moved: Vec<Vec<Complex64>> = cols
            .iter()
            .map(|c| c.iter().map(|v| v * scale + Complex64::new(shift, -shift)).collect())
            .collect();
        let h = build_graph(&GraphWindow::from_columns(&moved).unwrap(), 0);
        for (a, b) in g.edge_features.as_slice().iter().zip(h.edge_features.as_slice()) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn concatenation_stacks_features(cols in window_strategy()) {
        let w = GraphWindow::from_columns(&cols).unwrap();
        let g = build_graph(&w, 1);
        let c = concat_graphs(&g, &g).unwrap();
        prop_assert_eq!(c.vertex_dim(), 4);
        prop_assert_eq!(c.edge_dim(), 4);
        for i in 0..g.n_vertices() {
            prop_assert_eq!(&c.vertices.row(i)[..2], g.vertices.row(i));
            prop_assert_eq!(&c.vertices.row(i)[2..], g.vertices.row(i));
        }
    }

    #[test]
    fn vertex_round_trip(h in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40)) {
        let h: Vec<Complex64> = h.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
        prop_assert_eq!(readout(&build_vertices(&h)).unwrap(), h);
    }

    #[test]
    fn streams_never_collide(seed_a in any::<u64>(), seed_b in any::<u64>(), i in any::<u64>(), j in any::<u64>()) {
        let streams = [Stream::TrainFrames, Stream::ValidationFrames, Stream::EvalFrames, Stream::Init, Stream::Shuffle];
        for (x, &sa) in streams.iter().enumerate() {
            prop_assert_eq!(stream_of(derive_seed(seed_a, sa, i)), sa as u64);
            for &sb in &streams[x + 1..] {
                prop_assert_ne!(derive_seed(seed_a, sa, i), derive_seed(seed_b, sb, j));
            }
        }
    }
}
