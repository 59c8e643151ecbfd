use liquid_core::analysis::{
    branching_factor, branching_tally, ei_rate_balance, ei_weight_balance, net_current, spike_autocorrelation,
    BranchingConfig,
};
use liquid_core::data::InputRaster;
use liquid_core::dynamics::{Connectivity, Raster};
use liquid_core::seed;
use liquid_core::topology::{Edge, LiquidGraph, NeuronMeta, Weights};
use proptest::prelude::*;
use rand::Rng;

fn graph(n: usize, n_input: usize, ll: Vec<(u32, u32)>, il: Vec<(u32, u32)>, inhibitory: &[usize]) -> LiquidGraph {
    LiquidGraph {
        neurons: (0..n).map(|i| NeuronMeta { index: i, coord: [0, 0, i], is_excitatory: !inhibitory.contains(&i) }).collect(),
        dims: [1, 1, n],
        n_input,
        il_edges: il.into_iter().map(|(pre, post)| Edge { pre, post, sign: 1 }).collect(),
        ll_edges: ll
            .into_iter()
            .map(|(pre, post)| Edge { pre, post, sign: if inhibitory.contains(&(pre as usize)) { -1 } else { 1 } })
            .collect(),
        clamp: Default::default(),
    }
}

fn raster(n: usize, duration: usize, events: &[(u32, u32)]) -> Raster {
    let mut r = Raster::new(n);
    for t in 0..duration as u32 {
        let s: Vec<u32> = events.iter().filter(|e| e.0 == t).map(|e| e.1).collect();
        r.push_step(&s);
    }
    r
}

fn no_input() -> BranchingConfig {
    BranchingConfig { include_input: false, ..Default::default() }
}

#[test]
pub fn chain_of_single_triggers_has_unit_branching() {
    // 0 -> 1 -> 2 -> ... -> 9, each spike one step after its parent.
    let n = 10;
    let g = graph(n, 1, (0..n as u32 - 1).map(|i| (i, i + 1)).collect(), vec![], &[]);
    let conn = Connectivity::new(&g);
    let r = raster(n, 20, &(0..n as u32).map(|i| (i, i)).collect::<Vec<_>>());
    // All ten spikes have full 4 ms windows; all but the last have exactly
    // one descendant.
    let tally = branching_tally(&conn, &r, None, &no_input()).unwrap();
    assert_eq!(tally.ancestors, 10);
    assert_eq!(tally.sigma(), Some(0.9));
    let r = raster(n, 40, &(0..n as u32 - 1).map(|i| (i, i)).collect::<Vec<_>>());
    // Drop the last spike: neuron 8 now has no descendant either.
    assert_eq!(branching_factor(&conn, &r, None, &no_input()).unwrap(), Some(8.0 / 9.0));
}

/// Brute-force count straight from the definition, for any raster.
fn brute_force(g: &LiquidGraph, r: &Raster, delta: usize) -> Option<f64> {
    let n = g.n_liquid();
    let dur = r.duration;
    let fired = |t: usize, i: usize| r.events.iter().any(|&(s, j)| s as usize == t && j as usize == i);
    let pre_of = |j: usize| g.ll_edges.iter().filter(|e| e.post as usize == j).map(|e| e.pre as usize).collect::<Vec<_>>();
    let (mut anc, mut desc) = (0usize, 0.0f64);
    for t in 0..dur {
        if t + delta >= dur {
            continue;
        }
        for i in 0..n {
            if !fired(t, i) {
                continue;
            }
            anc += 1;
            for e in g.ll_edges.iter().filter(|e| e.pre as usize == i) {
                let j = e.post as usize;
                let co = pre_of(j).into_iter().filter(|&k| fired(t, k)).count();
                for s in t + 1..=t + delta {
                    if fired(s, j) {
                        desc += 1.0 / co as f64;
                    }
                }
            }
        }
    }
    (anc > 0).then(|| desc / anc as f64)
}

#[test]
pub fn binary_tree_branches_by_two() {
    // Each spike triggers both children one step later.
    let depth = 6;
    let n = (1 << depth) - 1;
    let edges: Vec<(u32, u32)> = (0..n as u32).flat_map(|i| [(i, 2 * i + 1), (i, 2 * i + 2)]).filter(|e| (e.1 as usize) < n).collect();
    let g = graph(n, 1, edges, vec![], &[]);
    let conn = Connectivity::new(&g);
    let mut ev = Vec::new();
    for i in 0..n as u32 {
        let level = 31 - (i + 1).leading_zeros();
        ev.push((level, i));
    }
    let r = raster(n, depth, &ev);
    let cfg = BranchingConfig { delta: 1, ..no_input() };
    let sigma = branching_factor(&conn, &r, None, &cfg).unwrap();
    assert_eq!(sigma, Some(2.0));
    assert_eq!(sigma, brute_force(&g, &r, 1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branching_matches_brute_force(seed in 0u64..1000, p in 0.05f64..0.4) {
        let n = 8;
        let mut rng = seed::rng(seed, 1);
        let edges: Vec<(u32, u32)> = (0..n as u32)
            .flat_map(|i| (0..n as u32).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j)
            .filter(|_| rng.random_bool(0.4))
            .collect();
        let g = graph(n, 1, edges, vec![], &[]);
        let conn = Connectivity::new(&g);
        let mut ev = Vec::new();
        for t in 0..30u32 {
            for i in 0..n as u32 {
                if rng.random_bool(p) {
                    ev.push((t, i));
                }
            }
        }
        let r = raster(n, 30, &ev);
        let got = branching_factor(&conn, &r, None, &no_input()).unwrap();
        let want = brute_force(&g, &r, 4);
        match (got, want) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b),
            (a, b) => prop_assert_eq!(a, b),
        }
    }
}

#[test]
pub fn poisson_raster_meets_chance_level() {
    // Dense graph, independent spikes: every target spike in the window is
    // shared among the target's co-active presynaptic neurons, so
    // sigma = (N - 1) delta p E[1 / (1 + B)], B ~ Bin(N - 2, p).
    let n = 40usize;
    let p = 0.01f64;
    let delta = 4usize;
    let edges: Vec<(u32, u32)> =
        (0..n as u32).flat_map(|i| (0..n as u32).map(move |j| (i, j))).filter(|&(i, j)| i != j).collect();
    let g = graph(n, 1, edges, vec![], &[]);
    let conn = Connectivity::new(&g);
    let mut rng = seed::rng(77, 0);
    let mut r = Raster::new(n);
    for _ in 0..60_000 {
        let s: Vec<u32> = (0..n as u32).filter(|_| rng.random_bool(p)).collect();
        r.push_step(&s);
    }
    let sigma = branching_factor(&conn, &r, None, &BranchingConfig { delta, ..no_input() }).unwrap().unwrap();

    let m = n - 2;
    let mut e_inv = 0.0;
    let mut binom = 1.0f64;
    for b in 0..=m {
        if b > 0 {
            binom *= (m - b + 1) as f64 / b as f64;
        }
        e_inv += binom * p.powi(b as i32) * (1.0 - p).powi((m - b) as i32) / (1 + b) as f64;
    }
    let chance = (n - 1) as f64 * delta as f64 * p * e_inv;
    assert!((sigma - chance).abs() / chance < 0.05, "sigma {sigma}, chance {chance}");
}

#[test]
pub fn autocorrelation_zero_lag_is_density() {
    let mut rng = seed::rng(5, 0);
    for _ in 0..20 {
        let n = rng.random_range(1..12);
        let t = rng.random_range(1..150);
        let mut r = Raster::new(n);
        for _ in 0..t {
            let s: Vec<u32> = (0..n as u32).filter(|_| rng.random_bool(0.2)).collect();
            r.push_step(&s);
        }
        let a = spike_autocorrelation(&r, 5);
        assert_eq!(a[0], r.n_spikes() as f64 / (n * t) as f64);
    }
}

#[test]
pub fn autocorrelation_counts_overlaps() {
    // Train 1 0 1 1 0 1 over six steps: overlaps 4, 1, 2, 2 at lags 0..3.
    let r = raster(1, 6, &[(0, 0), (2, 0), (3, 0), (5, 0)]);
    let a = spike_autocorrelation(&r, 3);
    assert_eq!(a, vec![4.0 / 6.0, 1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0]);
}

#[test]
pub fn weight_balance_hand_cases() {
    assert_eq!(ei_weight_balance(&[1.0, -1.0, 2.0, -0.5]), Some(0.0));
    assert_eq!(ei_weight_balance(&[0.3, 2.0, 3.0]), Some(1.0));
    assert_eq!(ei_weight_balance(&[-0.3, 0.0, -3.0]), Some(-1.0));
    assert_eq!(ei_weight_balance(&[1.0, 1.0, 1.0, -1.0, 0.0]), Some(0.5));
    assert_eq!(ei_weight_balance(&[0.0, 0.0]), None);
}

#[test]
pub fn rate_balance_hand_cases() {
    // Neurons 0, 1 excitatory, 2, 3 inhibitory.
    let g = graph(4, 1, vec![], vec![], &[2, 3]);
    // Equal E and I rates.
    let r = raster(4, 10, &[(0, 0), (1, 1), (2, 2), (3, 3)]);
    assert_eq!(ei_rate_balance(&r, &g), Some(0.0));
    // E: 4 spikes, I: 0 -> f_e = 4/20, f_i = 0, f_l = 4/40.
    let r = raster(4, 10, &[(0, 0), (1, 0), (2, 1), (3, 1)]);
    assert_eq!(ei_rate_balance(&r, &g), Some(2.0));
    // E: 1 spike, I: 3 spikes -> |1/20 - 3/20| / (4/40) = 1.
    let r = raster(4, 10, &[(0, 0), (1, 2), (2, 3), (3, 2)]);
    assert!((ei_rate_balance(&r, &g).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(ei_rate_balance(&raster(4, 10, &[]), &g), None);
}

#[test]
pub fn net_current_hand_case() {
    // Input 0 -> neuron 0 (w 2), neuron 0 -> neuron 1 (w 1.5), neuron 2 -> 1 (w -1).
    let g = graph(3, 1, vec![(0, 1), (2, 1)], vec![(0, 0)], &[2]);
    let conn = Connectivity::new(&g);
    let w = Weights::from_values(&g, vec![2.0, 1.5, -1.0]).unwrap();
    let mut input = InputRaster::empty(1, 3);
    input.steps[0].push(0);
    // Neuron 0 fires at 0, neuron 2 at 1: step 1 sees +1.5 on neuron 1,
    // step 2 sees -1.
    let r = raster(3, 3, &[(0, 0), (1, 2)]);
    let s = net_current(&conn, w.as_slice(), &input, &r);
    let values = [2.0, 0.0, 0.0, 0.0, 1.5, 0.0, 0.0, -1.0, 0.0];
    let mean = values.iter().sum::<f64>() / 9.0;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
    assert_eq!(s.n, 9);
    assert!((s.mean - mean).abs() < 1e-15);
    assert!((s.std - var.sqrt()).abs() < 1e-12);
}

#[test]
pub fn input_units_share_descendants() {
    // Input 0 and neuron 0 both project to neuron 1. The input spike at
    // t + 1 arrives with neuron 0's spike at t, so neuron 1's spike is split.
    let g = graph(2, 1, vec![(0, 1)], vec![(0, 1)], &[]);
    let conn = Connectivity::new(&g);
    let r = raster(2, 8, &[(0, 0), (1, 1)]);
    let mut input = InputRaster::empty(1, 8);
    input.steps[1].push(0);
    let with = BranchingConfig::default();
    let tally = branching_tally(&conn, &r, Some(&input), &with).unwrap();
    assert_eq!(tally.ancestors, 2);
    assert_eq!(tally.descendants, 0.5);
    let without = branching_tally(&conn, &r, Some(&input), &no_input()).unwrap();
    assert_eq!(without.descendants, 1.0);
}
