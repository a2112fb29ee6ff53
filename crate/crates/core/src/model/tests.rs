use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::geometry::{Coordinates, DirectionalAnnotation};
use crate::graph::{build_dual_graph, Edge, GraphConfig};
use crate::loss::{total_loss, LossConfig, LossTargets};
use crate::rng::rng_for;
use crate::tensor::sigmoid;

struct Fixture {
    coords: Vec<Coordinates>,
    features: Tensor,
    graph: DualGraph,
}

fn fixture(n: usize, f: usize, seed: u64) -> Fixture {
    let mut rng = rng_for(seed, 99);
    let coords: Vec<Coordinates> = (0..n)
        .map(|_| Coordinates::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let features = Tensor::matrix(n, f, (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let cfg = GraphConfig {
        epsilon: Some(1.0),
        k: 3.min(n - 1),
        ..GraphConfig::default()
    };
    let graph = build_dual_graph(&coords, &features, &cfg).unwrap();
    Fixture { coords, features, graph }
}

fn model(f: usize, d: usize, task: Task, variant: Variant, seed: u64) -> SddGat {
    SddGat::new(
        ModelConfig {
            input_dim: f,
            hidden_dim: d,
            task,
        },
        variant,
        seed,
    )
    .unwrap()
}

fn run(m: &SddGat, fx: &Fixture) -> (Tape, ForwardOutput) {
    let mut tape = Tape::new();
    let out = m.forward(&mut tape, &fx.features, &GraphInputs::new(&fx.graph, m.variant)).unwrap();
    (tape, out)
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn edges(n: usize, list: &[Edge]) -> EdgeArrays {
    EdgeArrays::new(n, list)
}

fn edge(src: usize, dst: usize, coords: &[Coordinates]) -> Edge {
    Edge {
        src,
        dst,
        weight: 1.0,
        annotation: DirectionalAnnotation::between(coords[dst], coords[src]),
    }
}

fn layer_on(tape: &mut Tape, w: Tensor, a: Vec<f64>, directional: bool) -> DirectionalAttentionLayer {
    DirectionalAttentionLayer {
        weight: tape.param(w).unwrap(),
        att: tape.param(Tensor::vector(a)).unwrap(),
        directional,
        leaky_slope: LEAKY_SLOPE,
    }
}

#[test]
fn zero_attention_vector_gives_uniform_weights() {
    let fx = fixture(12, 3, 1);
    let e = EdgeArrays::new(12, &fx.graph.spatial_edges);
    let mut tape = Tape::new();
    let h = tape.constant(fx.features.clone()).unwrap();
    let l = layer_on(&mut tape, Tensor::filled(&[3, 4], 0.3), vec![0.0; 11], true);
    let (wh, scores) = l.attention_scores(&mut tape, h, &e).unwrap();
    assert!(tape.value(scores).data().iter().all(|&s| s == 0.0));
    let (alpha, _) = l.attention_aggregate(&mut tape, scores, wh, &e, false).unwrap();
    let mut deg = vec![0usize; 12];
    for &d in e.dst.iter() {
        deg[d] += 1;
    }
    for (k, &a) in tape.value(alpha).data().iter().enumerate() {
        assert!((a - 1.0 / deg[e.dst[k]] as f64).abs() < 1e-15);
    }
}

#[test]
fn cosine_slot_alone_scores_bearing() {
    let fx = fixture(10, 2, 2);
    let e = EdgeArrays::new(10, &fx.graph.spatial_edges);
    let d = 3;
    let mut a = vec![0.0; 2 * d + 3];
    a[2 * d] = 1.0;
    let mut tape = Tape::new();
    let h = tape.constant(fx.features.clone()).unwrap();
    let l = layer_on(&mut tape, Tensor::filled(&[2, d], 1.0), a, true);
    let (_, scores) = l.attention_scores(&mut tape, h, &e).unwrap();
    for (k, &s) in tape.value(scores).data().iter().enumerate() {
        let (i, j) = (e.dst[k], e.src[k]);
        let expect = if i == j {
            1.0
        } else {
            let (dx, dy) = (fx.coords[j].lon - fx.coords[i].lon, fx.coords[j].lat - fx.coords[i].lat);
            leaky(dx / dx.hypot(dy))
        };
        assert!((s - expect).abs() < 1e-12, "edge {} {} vs {}", k, s, expect);
    }
}

#[test]
fn isolated_node_keeps_its_own_projection() {
    let coords = vec![Coordinates::new(0.0, 0.0), Coordinates::new(1.0, 0.0), Coordinates::new(9.0, 9.0)];
    let list = vec![Edge::self_loop(0), edge(1, 0, &coords), Edge::self_loop(1), edge(0, 1, &coords), Edge::self_loop(2)];
    let e = edges(3, &list);
    let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, -0.7]]).unwrap();
    let w = Tensor::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
    let mut tape = Tape::new();
    let h = tape.constant(x.clone()).unwrap();
    let l = layer_on(&mut tape, w.clone(), vec![0.7, -0.2, 0.1, 0.4, 0.3, -0.5, 0.9], true);
    let (wh, scores) = l.attention_scores(&mut tape, h, &e).unwrap();
    let (alpha, out) = l.attention_aggregate(&mut tape, scores, wh, &e, false).unwrap();
    assert_eq!(tape.value(alpha).data()[4], 1.0);
    let own = [0.3 * 0.5 - 0.7 * 2.0, 0.3 * -1.0 - 0.7 * 0.25];
    assert!((tape.value(out).row(2)[0] - own[0]).abs() < 1e-15);
    assert!((tape.value(out).row(2)[1] - own[1]).abs() < 1e-15);
}

#[test]
fn equal_scores_split_evenly() {
    let coords = vec![Coordinates::new(0.0, 0.0), Coordinates::new(1.0, 0.0)];
    let list = vec![Edge::self_loop(0), edge(1, 0, &coords)];
    let e = edges(2, &list);
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::from_rows(&[vec![1.0], vec![3.0]]).unwrap()).unwrap();
    let l = layer_on(&mut tape, Tensor::from_rows(&[vec![1.0]]).unwrap(), vec![0.0, 0.0], false);
    let (wh, scores) = l.attention_scores(&mut tape, h, &e).unwrap();
    let (alpha, out) = l.attention_aggregate(&mut tape, scores, wh, &e, false).unwrap();
    assert_eq!(tape.value(alpha).data(), &[0.5, 0.5]);
    assert_eq!(tape.value(out).row(0), &[2.0]);
}

/// Three nodes, edges into node 0 from 1 and 2. The layer output is
/// recomputed with explicit loops over the concatenated attention input.
#[test]
fn three_node_layer_matches_hand_computation() {
    let coords = vec![Coordinates::new(0.0, 0.0), Coordinates::new(1.0, 1.0), Coordinates::new(-2.0, 0.5)];
    let list = vec![
        Edge::self_loop(0),
        edge(1, 0, &coords),
        edge(2, 0, &coords),
        Edge::self_loop(1),
        Edge::self_loop(2),
    ];
    let e = edges(3, &list);
    let x = [[0.2, -1.0], [1.5, 0.3], [-0.4, 0.8]];
    let w = [[0.6, -0.3], [0.1, 0.9]];
    let a = [0.5, -0.4, 0.3, 0.2, 0.8, -0.6, 0.25];
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::from_rows(&x.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()).unwrap();
    let l = layer_on(
        &mut tape,
        Tensor::from_rows(&w.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap(),
        a.to_vec(),
        true,
    );
    let (wh, scores) = l.attention_scores(&mut tape, h, &e).unwrap();
    let (_, out) = l.attention_aggregate(&mut tape, scores, wh, &e, true).unwrap();

    let proj = |r: usize| [x[r][0] * w[0][0] + x[r][1] * w[1][0], x[r][0] * w[0][1] + x[r][1] * w[1][1]];
    let score = |i: usize, j: usize| {
        let (c, s, d) = if i == j {
            (1.0, 0.0, 0.0)
        } else {
            let (dx, dy) = (coords[j].lon - coords[i].lon, coords[j].lat - coords[i].lat);
            let dist = (dx * dx + dy * dy).sqrt();
            (dx / dist, dy / dist, dist)
        };
        let input = [proj(i)[0], proj(i)[1], proj(j)[0], proj(j)[1], c, s, d];
        leaky(input.iter().zip(&a).map(|(u, v)| u * v).sum())
    };
    let nbrs = [0usize, 1, 2];
    let ex: Vec<f64> = nbrs.iter().map(|&j| score(0, j).exp()).collect();
    let z: f64 = ex.iter().sum();
    for c in 0..2 {
        let agg: f64 = nbrs.iter().zip(&ex).map(|(&j, w)| w / z * proj(j)[c]).sum();
        assert!((tape.value(out).row(0)[c] - leaky(agg)).abs() < 1e-12);
    }
}

#[test]
fn attention_length_checked() {
    let fx = fixture(6, 2, 3);
    let e = EdgeArrays::new(6, &fx.graph.spatial_edges);
    let mut tape = Tape::new();
    let h = tape.constant(fx.features.clone()).unwrap();
    let l = layer_on(&mut tape, Tensor::filled(&[2, 3], 0.1), vec![0.0; 6], true);
    assert!(matches!(l.attention_scores(&mut tape, h, &e), Err(Error::Config(_))));
}

#[test]
fn fusion_limits() {
    let fx = fixture(15, 4, 4);
    let mut m = model(4, 6, Task::Dual, Variant::Full, 4);
    for (raw, weight) in [(20.0, 1.0), (-20.0, 0.0), (0.0, 0.5)] {
        m.param_mut("fusion.alpha_raw").unwrap().data_mut()[0] = raw;
        let (tape, out) = run(&m, &fx);
        let hs = tape.value(out.h_spatial).data();
        let hf = tape.value(out.h_feature.unwrap()).data();
        for ((&f, &s), &g) in tape.value(out.h_final).data().iter().zip(hs).zip(hf) {
            if weight == 0.5 {
                assert_eq!(f, 0.5 * s + 0.5 * g);
            } else {
                let target = if weight == 1.0 { s } else { g };
                assert!((f - target).abs() < 1e-6);
            }
        }
        assert!((m.fusion_weight() - sigmoid(raw)).abs() < 1e-15);
    }
}

#[test]
fn identical_branches_make_fusion_irrelevant() {
    let fx = fixture(10, 3, 5);
    let mut g = fx.graph.clone();
    g.feature_edges = g.spatial_edges.clone();
    let mut m = model(3, 4, Task::Regression, Variant::Full, 5);
    for layer in 0..2 {
        for kind in ["weight", "att"] {
            let v = m.param(&format!("spatial.{}.{}", layer, kind)).unwrap().clone();
            *m.param_mut(&format!("feature.{}.{}", layer, kind)).unwrap() = v;
        }
    }
    let inputs = GraphInputs::new(&g, m.variant);
    let base = m.predict(&fx.features, &inputs).unwrap();
    m.param_mut("fusion.alpha_raw").unwrap().data_mut()[0] = 1.7;
    let moved = m.predict(&fx.features, &inputs).unwrap();
    for (a, b) in base.0.iter().zip(&moved.0) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn variant_parameter_layouts() {
    let d = 5;
    let nd = model(4, d, Task::Regression, Variant::NoDirection, 1);
    for l in 0..2 {
        assert_eq!(nd.param(&format!("spatial.{}.att", l)).unwrap().shape(), &[2 * d]);
        assert_eq!(nd.param(&format!("feature.{}.att", l)).unwrap().shape(), &[2 * d]);
    }
    let full = model(4, d, Task::Regression, Variant::Full, 1);
    assert_eq!(full.param("spatial.0.att").unwrap().shape(), &[2 * d + 3]);
    let single = model(4, d, Task::Regression, Variant::SingleGraph, 1);
    assert!(single.param("feature.0.weight").is_none());
    assert!(single.param("fusion.alpha_raw").is_none());
    assert_eq!(single.fusion_weight(), 1.0);
    assert!("bogus".parse::<Variant>().is_err());
}

#[test]
fn single_graph_ignores_feature_edges() {
    let fx = fixture(14, 3, 6);
    let m = model(3, 4, Task::Dual, Variant::SingleGraph, 6);
    let base = m.predict(&fx.features, &GraphInputs::new(&fx.graph, m.variant)).unwrap();
    let mut g = fx.graph.clone();
    g.feature_edges.retain(|e| e.is_loop());
    assert_eq!(m.predict(&fx.features, &GraphInputs::new(&g, m.variant)).unwrap(), base);
}

#[test]
fn knn_only_uses_feature_edges_everywhere() {
    let fx = fixture(14, 3, 7);
    let inputs = GraphInputs::new(&fx.graph, Variant::KnnOnly);
    assert_eq!(inputs.spatial_branch.src, inputs.feature_branch.src);
    assert_eq!(inputs.smoothness.dst, inputs.feature_branch.dst);
    let full = GraphInputs::new(&fx.graph, Variant::Full);
    assert_eq!(full.smoothness.src, full.spatial_branch.src);
}

#[test]
fn full_and_no_smooth_agree_without_smoothness() {
    use crate::data::Split;
    use crate::training::{train, TrainConfig};
    let fx = fixture(20, 3, 8);
    let table = crate::data::NodeTable::from_columns(
        (0..20).map(|i| i.to_string()).collect(),
        fx.coords.clone(),
        (0..20).map(|r| [fx.features.get2(r, 0), fx.features.get2(r, 1), fx.features.get2(r, 2)]).collect(),
        vec!["a".into(); 20],
        (0..20).map(|r| (fx.features.get2(r, 0) + 1.0).abs()).collect(),
        vec![0; 20],
    )
    .unwrap();
    let graph = build_dual_graph(&fx.coords, &table.features, &GraphConfig { epsilon: Some(1.0), k: 3, ..GraphConfig::default() }).unwrap();
    let split = Split {
        train: (0..14).collect(),
        val: (14..20).collect(),
        test: vec![],
    };
    let cfg = TrainConfig {
        max_epochs: 10,
        lambda_smooth: 0.0,
        ..TrainConfig::new(Task::Regression, 3)
    };
    let a = model(4, 4, Task::Regression, Variant::Full, 3);
    let b = model(4, 4, Task::Regression, Variant::NoSmooth, 3);
    let (ta, la) = train(&a, &table, &graph, &split, &cfg).unwrap();
    let (tb, lb) = train(&b, &table, &graph, &split, &cfg).unwrap();
    assert_eq!(ta.params(), tb.params());
    assert!(la.same_trajectory(&lb));
}

fn transformed(fx: &Fixture, f: impl Fn(Coordinates) -> Coordinates) -> DualGraph {
    let coords: Vec<Coordinates> = fx.coords.iter().map(|&p| f(p)).collect();
    build_dual_graph(&coords, &fx.features, &fx.graph.config).unwrap()
}

#[test]
fn translation_invariant() {
    let fx = fixture(16, 3, 9);
    let m = model(3, 4, Task::Dual, Variant::Full, 9);
    let base = m.predict(&fx.features, &GraphInputs::new(&fx.graph, m.variant)).unwrap();
    let g = transformed(&fx, |p| Coordinates::new(p.lon + 0.375, p.lat - 0.25));
    let moved = m.predict(&fx.features, &GraphInputs::new(&g, m.variant)).unwrap();
    for (a, b) in base.0.iter().zip(&moved.0).chain(base.1.iter().zip(&moved.1)) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn no_direction_is_rotation_invariant() {
    let fx = fixture(16, 3, 10);
    let m = model(3, 4, Task::Dual, Variant::NoDirection, 10);
    let base = m.predict(&fx.features, &GraphInputs::new(&fx.graph, m.variant)).unwrap();
    let (c, s) = (0.6f64, 0.8f64);
    let g = transformed(&fx, |p| Coordinates::new(c * p.lon - s * p.lat, s * p.lon + c * p.lat));
    assert_eq!(g.spatial_edges.len(), fx.graph.spatial_edges.len());
    let moved = m.predict(&fx.features, &GraphInputs::new(&g, m.variant)).unwrap();
    for (a, b) in base.0.iter().zip(&moved.0) {
        assert!((a - b).abs() < 1e-12);
    }
    // the directional model does see the rotation
    let full = model(3, 4, Task::Dual, Variant::Full, 10);
    let b0 = full.predict(&fx.features, &GraphInputs::new(&fx.graph, full.variant)).unwrap();
    let b1 = full.predict(&fx.features, &GraphInputs::new(&g, full.variant)).unwrap();
    assert!(b0.0.iter().zip(&b1.0).any(|(a, b)| (a - b).abs() > 1e-9));
}

#[test]
fn permutation_equivariant() {
    let fx = fixture(12, 3, 11);
    let m = model(3, 4, Task::Dual, Variant::Full, 11);
    let base = m.predict(&fx.features, &GraphInputs::new(&fx.graph, m.variant)).unwrap();
    let perm: Vec<usize> = (0..12).map(|i| (i * 5 + 3) % 12).collect();
    let coords: Vec<Coordinates> = perm.iter().map(|&p| fx.coords[p]).collect();
    let rows: Vec<Vec<f64>> = perm.iter().map(|&p| fx.features.row(p).to_vec()).collect();
    let features = Tensor::from_rows(&rows).unwrap();
    let g = build_dual_graph(&coords, &features, &fx.graph.config).unwrap();
    let out = m.predict(&features, &GraphInputs::new(&g, m.variant)).unwrap();
    for (k, &p) in perm.iter().enumerate() {
        assert!((out.0[k] - base.0[p]).abs() < 1e-12);
        assert!((out.1[k] - base.1[p]).abs() < 1e-12);
    }
}

#[test]
fn feature_dimension_checked() {
    let fx = fixture(8, 3, 12);
    let m = model(4, 4, Task::Dual, Variant::Full, 12);
    assert!(matches!(
        m.predict(&fx.features, &GraphInputs::new(&fx.graph, m.variant)),
        Err(Error::Dimension { .. })
    ));
}

/// Total loss as a plain function of one parameter entry.
fn loss_at(m: &SddGat, fx: &Fixture, targets: &LossTargets, cfg: &LossConfig) -> f64 {
    let mut tape = Tape::new();
    let out = m.forward(&mut tape, &fx.features, &GraphInputs::new(&fx.graph, m.variant)).unwrap();
    let parts = total_loss(&mut tape, &out, targets, cfg).unwrap();
    tape.value(parts.total).item()
}

fn gradient_check(variant: Variant, seed: u64) -> f64 {
    let fx = fixture(8, 4, seed);
    let mut m = model(4, 5, Task::Dual, variant, seed);
    if let Some(a) = m.param_mut("fusion.alpha_raw") {
        a.data_mut()[0] = 0.3;
    }
    let mut rng = rng_for(seed, 7);
    let dfi: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..4.0)).collect();
    let targets = LossTargets {
        rows: (0..8).collect::<Vec<usize>>().into(),
        labels: dfi.iter().map(|&d| if d > 1.5 { 1.0 } else { 0.0 }).collect(),
        dfi,
        smooth_edges: EdgeArrays::new(8, &fx.graph.spatial_edges),
    };
    let cfg = LossConfig {
        lambda_smooth: 0.1,
        ..LossConfig::new(Task::Dual)
    };

    let mut tape = Tape::new();
    let out = m.forward(&mut tape, &fx.features, &GraphInputs::new(&fx.graph, m.variant)).unwrap();
    let parts = total_loss(&mut tape, &out, &targets, &cfg).unwrap();
    let mut grads = tape.backward(parts.total).unwrap();
    let analytic = m.collect_grads(&out, &mut grads);

    let h = 1e-5;
    let mut worst = 0.0f64;
    for p in 0..m.params().len() {
        for k in 0..m.params()[p].value.len() {
            let orig = m.params()[p].value.data()[k];
            m.params_mut()[p].value.data_mut()[k] = orig + h;
            let up = loss_at(&m, &fx, &targets, &cfg);
            m.params_mut()[p].value.data_mut()[k] = orig - h;
            let down = loss_at(&m, &fx, &targets, &cfg);
            m.params_mut()[p].value.data_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let g = analytic[p].data()[k];
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for variant in Variant::ALL {
        let worst = gradient_check(variant, 21);
        assert!(worst < 1e-4, "{}: max relative error {}", variant, worst);
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let m = model(6, 7, Task::Classification, Variant::NoDirection, 13);
    let ck = Checkpoint::new(m.clone()).with_meta("graph.k", 8).with_meta("note", "a=b");
    let text = ck.to_text();
    let back = Checkpoint::parse(&text).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.to_text(), text);
    assert_eq!(back.meta("note"), Some("a=b"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap().model, m);
    assert!(Checkpoint::parse(&text.replace("end\n", "")).is_err());
    assert!(Checkpoint::parse("garbage").is_err());
}

#[test]
fn shape_mismatch_in_params_rejected() {
    let m = model(3, 4, Task::Dual, Variant::Full, 1);
    let mut params = m.params().to_vec();
    params[0].value = Tensor::zeros(&[3, 5]);
    assert!(SddGat::from_params(m.config, m.variant, params).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn attention_sums_to_one_per_node(seed in 0u64..10_000, n in 3usize..20, variant_ix in 0usize..5) {
        let fx = fixture(n, 3, seed);
        let m = model(3, 4, Task::Dual, Variant::ALL[variant_ix], seed);
        let (tape, out) = run(&m, &fx);
        let expected_layers = if m.variant.has_feature_branch() { 4 } else { 2 };
        prop_assert_eq!(out.attention.len(), expected_layers);
        let inputs = GraphInputs::new(&fx.graph, m.variant);
        for (name, alpha) in &out.attention {
            let e = if name.starts_with("spatial") { &inputs.spatial_branch } else { &inputs.feature_branch };
            let mut sums = vec![0.0; n];
            for (k, &a) in tape.value(*alpha).data().iter().enumerate() {
                prop_assert!(a >= 0.0);
                sums[e.dst[k]] += a;
            }
            for s in sums {
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

}
