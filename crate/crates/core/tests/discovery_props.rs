mod common;

use std::collections::BTreeSet;

use pns_core::discovery::{
    ci_test, complete_orientation, discover, learn_skeleton, true_cpdag, CpdagResult, DEFAULT_ALPHA,
};
use pns_core::estimate::tabulate;
use pns_core::scm_oracle::{sample, ScmSpec};
use pns_core::{CausalGraph, DiscreteDataset};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn pair(a: &str, b: &str) -> (String, String) {
    if a < b {
        (a.into(), b.into())
    } else {
        (b.into(), a.into())
    }
}

/// The DAG's skeleton with a random subset of edges oriented as in the DAG.
fn partial_orientation(g: &CausalGraph, rng: &mut ChaCha8Rng) -> CpdagResult {
    let mut directed = BTreeSet::new();
    let mut undirected = BTreeSet::new();
    for (p, c) in g.edges() {
        if rng.random_bool(0.3) {
            directed.insert((p.to_string(), c.to_string()));
        } else {
            undirected.insert(pair(p, c));
        }
    }
    CpdagResult {
        nodes: g.nodes().to_vec(),
        directed,
        undirected,
        sepsets: Default::default(),
        alpha: DEFAULT_ALPHA,
        conflicts: Default::default(),
    }
}

fn skeleton_of(c: &CpdagResult) -> BTreeSet<(String, String)> {
    c.directed
        .iter()
        .map(|(a, b)| pair(a, b))
        .chain(c.undirected.iter().cloned())
        .collect()
}

/// Kolmogorov-Smirnov distance between a sample and Uniform(0, 1).
fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max)
}

fn reversed(d: &DiscreteDataset) -> DiscreteDataset {
    DiscreteDataset::from_columns(
        d.variable_names()
            .map(|v| {
                let mut c = d.column(v).unwrap().to_vec();
                c.reverse();
                (v.to_string(), c)
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn completion_is_acyclic_idempotent_and_monotone(seed in any::<u64>(), n in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dag(&mut rng, n, 0.4);
        let partial = partial_orientation(&g, &mut rng);
        let done = complete_orientation(&partial);
        prop_assert!(!done.directed_cyclic());
        prop_assert!(partial.directed.is_subset(&done.directed));
        prop_assert_eq!(skeleton_of(&done), skeleton_of(&partial));
        prop_assert!(complete_orientation(&done).same_pattern(&done));
    }

    #[test]
    fn true_cpdag_agrees_with_its_dag(seed in any::<u64>(), n in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_dag(&mut rng, n, 0.4);
        let c = true_cpdag(&g).unwrap();
        prop_assert!(c.conflicts.is_empty());
        let dag_edges: BTreeSet<(String, String)> = g.edges().map(|(a, b)| (a.into(), b.into())).collect();
        prop_assert!(c.directed.is_subset(&dag_edges));
        prop_assert_eq!(skeleton_of(&c), dag_edges.iter().map(|(a, b)| pair(a, b)).collect());
        prop_assert!(complete_orientation(&c).same_pattern(&c));
        // every unshielded collider of the DAG is oriented
        for v in g.nodes() {
            let parents = g.parents(v).unwrap().to_vec();
            for (i, a) in parents.iter().enumerate() {
                for b in &parents[i + 1..] {
                    if !g.has_edge(a, b) && !g.has_edge(b, a) {
                        prop_assert!(c.has_directed(a, v) && c.has_directed(b, v));
                    }
                }
            }
        }
    }

    #[test]
    fn cpdag_text_round_trip(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = true_cpdag(&random_dag(&mut rng, n, 0.4)).unwrap();
        let back = CpdagResult::from_text(&c.to_text(), c.alpha).unwrap();
        prop_assert!(back.same_pattern(&c));
        prop_assert_eq!(back.nodes, c.nodes);
    }
}

#[test]
fn markov_equivalent_dags_share_a_cpdag() {
    let chain = CausalGraph::new(["A", "B", "C"], [("A", "B"), ("B", "C")]).unwrap();
    let back = CausalGraph::new(["A", "B", "C"], [("C", "B"), ("B", "A")]).unwrap();
    let fork = CausalGraph::new(["A", "B", "C"], [("B", "A"), ("B", "C")]).unwrap();
    let collider = CausalGraph::new(["A", "B", "C"], [("A", "B"), ("C", "B")]).unwrap();
    let c = true_cpdag(&chain).unwrap();
    assert!(c.same_pattern(&true_cpdag(&back).unwrap()));
    assert!(c.same_pattern(&true_cpdag(&fork).unwrap()));
    assert!(!c.same_pattern(&true_cpdag(&collider).unwrap()));
    assert_eq!(c.undirected.len(), 2);
}

fn null_p_values(m: &ScmSpec, a: &str, b: &str, cond: &[&str], n: usize, reps: u64) -> Vec<f64> {
    (0..reps)
        .map(|seed| {
            let d = sample(m, n, 1000 + seed);
            let mut vars = vec![a, b];
            vars.extend(cond);
            let t = tabulate(&d, &vars).unwrap();
            ci_test(&t, a, b, cond, 0.05).unwrap().p_value
        })
        .collect()
}

#[test]
fn marginal_null_p_values_are_uniform() {
    let p = null_p_values(&coins_scm(), "A", "B", &[], 10_000, 500);
    let d = ks_uniform(p.clone());
    assert!(d < 0.1, "KS distance {d}");
    let rejected = p.iter().filter(|&&v| v < 0.05).count();
    assert!(rejected <= 40, "{rejected} of 500 rejected at 0.05");
}

#[test]
fn conditional_null_p_values_are_uniform() {
    let p = null_p_values(&chain_scm(), "X", "Y", &["M"], 10_000, 300);
    let d = ks_uniform(p);
    assert!(d < 0.1, "KS distance {d}");
}

#[test]
fn dependence_is_detected() {
    let d = sample(&chain_scm(), 2000, 5);
    let t = tabulate(&d, &["X", "M", "Y"]).unwrap();
    assert!(!ci_test(&t, "X", "M", &[], 0.01).unwrap().independent);
    assert!(!ci_test(&t, "X", "Y", &[], 0.01).unwrap().independent);

    let d = sample(&collider_scm(), 100_000, 6);
    let t = tabulate(&d, &["X", "Y", "C"]).unwrap();
    assert!(ci_test(&t, "X", "Y", &[], 0.01).unwrap().independent);
    assert!(!ci_test(&t, "X", "Y", &["C"], 0.01).unwrap().independent);
}

#[test]
fn row_order_does_not_change_the_result() {
    let d = sample(&collider_scm(), 20_000, 8);
    let r = reversed(&d);
    let vars = ["X", "Y", "C"];
    let a = discover(&tabulate(&d, &vars).unwrap(), DEFAULT_ALPHA, 3).unwrap();
    let b = discover(&tabulate(&r, &vars).unwrap(), DEFAULT_ALPHA, 3).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn chain_skeleton_and_sepset() {
    let d = sample(&chain_scm(), 50_000, 9);
    let s = learn_skeleton(&tabulate(&d, &["X", "M", "Y"]).unwrap(), DEFAULT_ALPHA, 3).unwrap();
    assert!(s.adjacent("X", "M") && s.adjacent("M", "Y") && !s.adjacent("X", "Y"));
    assert_eq!(s.sepset("X", "Y").unwrap().to_vec(), vec!["M".to_string()]);
}

#[test]
fn collider_is_oriented() {
    let d = sample(&collider_scm(), 50_000, 10);
    let c = discover(&tabulate(&d, &["X", "Y", "C"]).unwrap(), DEFAULT_ALPHA, 3).unwrap();
    assert!(c.has_directed("X", "C") && c.has_directed("Y", "C"));
    assert!(c.undirected.is_empty());
    assert!(c.to_dot().contains("\"X\" -> \"C\""));
}
