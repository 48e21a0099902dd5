use fifo_routing::equilibria::{
    enumerate_equilibria, is_ufr_equilibrium, sequential_equilibrium, TieBreakPolicy,
};
use fifo_routing::extensions::{check_flow_feasible, state_to_flow};
use fifo_routing::model::{GameFile, StateFile};
use fifo_routing::optimum::{max_packets, min_horizon, optimal_state};
use fifo_routing::{
    kth_cheapest_path, load_with, path_length, Game, LinearMultigraph, PathChoice, State, Stepping,
    Time,
};
use proptest::prelude::*;

fn layers(max_layers: usize, max_edges: usize) -> impl Strategy<Value = Vec<Vec<Time>>> {
    prop::collection::vec(
        prop::collection::vec(1..=5u64, 1..=max_edges).prop_map(|mut l| {
            l.sort_unstable();
            l
        }),
        1..=max_layers,
    )
}

fn game(max_layers: usize, max_edges: usize, max_n: usize) -> impl Strategy<Value = Game> {
    (layers(max_layers, max_edges), 1..=max_n, any::<bool>())
        .prop_flat_map(|(layers, n, zero)| {
            let pattern = if zero {
                Just(vec![0; n]).boxed()
            } else {
                prop::collection::vec(0..=3u64, n)
                    .prop_map(|mut p| {
                        p.sort_unstable();
                        p
                    })
                    .boxed()
            };
            (Just(layers), pattern)
        })
        .prop_map(|(layers, pattern)| Game::with_pattern(LinearMultigraph::new(layers), pattern))
}

fn game_and_state(
    max_layers: usize,
    max_edges: usize,
    max_n: usize,
) -> impl Strategy<Value = (Game, State)> {
    game(max_layers, max_edges, max_n).prop_flat_map(|g| {
        let path = g
            .graph
            .layers()
            .iter()
            .map(|l| 1..=l.len())
            .collect::<Vec<_>>()
            .prop_map(PathChoice::new);
        let n = g.n;
        (Just(g), prop::collection::vec(path, n).prop_map(State::new))
    })
}

fn with_capacities() -> impl Strategy<Value = (Game, State)> {
    game_and_state(3, 4, 6).prop_flat_map(|(g, s)| {
        let shape: Vec<usize> = g.graph.layers().iter().map(|l| l.len()).collect();
        let caps = shape
            .into_iter()
            .map(|len| prop::collection::vec(1..=3u64, len))
            .collect::<Vec<_>>();
        (Just(g), Just(s), caps).prop_map(|(g, s, caps)| {
            let graph = LinearMultigraph::with_capacities(g.graph.transits(), caps);
            (Game::with_pattern(graph, g.starting_pattern), s)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn event_stepping_matches_every_step((g, s) in with_capacities()) {
        let fast = load_with(&g, &s, Stepping::EventTimes).unwrap();
        let slow = load_with(&g, &s, Stepping::EveryStep).unwrap();
        prop_assert_eq!(&fast.arrivals, &slow.arrivals);
        prop_assert_eq!(&fast.waiting, &slow.waiting);
        for t in 0..=fast.makespan {
            prop_assert_eq!(fast.queue_sum(t), slow.queue_sum(t));
        }
    }

    #[test]
    fn queues_are_fifo_and_respect_capacity((g, s) in with_capacities()) {
        let r = load_with(&g, &s, Stepping::EventTimes).unwrap();
        for log in r.edge_logs() {
            for w in log.entries.windows(2) {
                prop_assert!((w[0].enqueue, w[0].player) < (w[1].enqueue, w[1].player));
                prop_assert!(w[0].depart <= w[1].depart);
            }
            let mut per_step = std::collections::BTreeMap::new();
            for q in &log.entries {
                prop_assert!(q.depart >= q.enqueue);
                *per_step.entry(q.depart).or_insert(0u64) += 1;
            }
            prop_assert!(per_step.values().all(|&c| c <= log.edge.capacity));
        }
    }

    #[test]
    fn timeline_is_consistent((g, s) in with_capacities()) {
        let r = load_with(&g, &s, Stepping::EventTimes).unwrap();
        for i in 0..g.n {
            let mut t = g.starting_pattern[i];
            for l in 1..=g.graph.num_layers() {
                let e = g.graph.edge(l, s.paths[i].at(l)).unwrap();
                prop_assert_eq!(r.latency[i][l - 1], e.transit + r.waiting[i][l - 1]);
                t += r.latency[i][l - 1];
                prop_assert_eq!(r.arrivals[l][i], t);
            }
            prop_assert_eq!(r.completions[i], t);
        }
        prop_assert_eq!(r.makespan, *r.completions.iter().max().unwrap());
        prop_assert_eq!(r.queue_sum(r.makespan), 0);
    }

    #[test]
    fn loading_is_deterministic((g, s) in with_capacities()) {
        let a = load_with(&g, &s, Stepping::EventTimes).unwrap();
        let b = load_with(&g, &s, Stepping::EventTimes).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn files_round_trip((g, s) in with_capacities()) {
        prop_assert_eq!(Game::from_json(&g.to_json()).unwrap(), g.clone());
        prop_assert_eq!(State::from_json(&s.to_json()).unwrap(), s.clone());
        let file = GameFile::from(&g);
        prop_assert_eq!(serde_json::from_str::<GameFile>(&serde_json::to_string(&file).unwrap()).unwrap(), file);
        let paths = StateFile::from(&s);
        prop_assert_eq!(serde_json::from_str::<StateFile>(&serde_json::to_string(&paths).unwrap()).unwrap(), paths);
    }

    #[test]
    fn cheapest_paths_are_ordered_and_minimal(layers in layers(3, 4)) {
        let graph = LinearMultigraph::new(layers);
        let depth = graph.layers().iter().map(|l| l.len()).min().unwrap();
        let lengths: Vec<Time> = (1..=depth)
            .map(|j| path_length(&graph, &kth_cheapest_path(&graph, j).unwrap()).unwrap())
            .collect();
        prop_assert!(lengths.windows(2).all(|w| w[0] <= w[1]));
        let best = PathChoice::all(&graph)
            .iter()
            .map(|p| path_length(&graph, p).unwrap())
            .min()
            .unwrap();
        prop_assert_eq!(lengths[0], best);
        prop_assert!(kth_cheapest_path(&graph, depth + 1).is_err());
    }

    #[test]
    fn packet_count_is_monotone_then_affine(layers in layers(3, 4)) {
        let graph = LinearMultigraph::new(layers);
        let depth = graph.layers().iter().map(|l| l.len()).min().unwrap() as u64;
        let longest = path_length(&graph, &kth_cheapest_path(&graph, depth as usize).unwrap()).unwrap();
        for c in 0..longest + 6 {
            prop_assert!(max_packets(&graph, c) <= max_packets(&graph, c + 1));
            if c >= longest {
                prop_assert_eq!(max_packets(&graph, c + 1) - max_packets(&graph, c), depth);
            }
        }
    }

    #[test]
    fn sequential_states_are_ufr(g in game(3, 3, 5), seed in any::<u64>()) {
        let mut policies = TieBreakPolicy::ALL_DETERMINISTIC.to_vec();
        policies.push(TieBreakPolicy::Seeded(seed));
        for policy in policies {
            let s = sequential_equilibrium(&g, policy).unwrap();
            prop_assert!(is_ufr_equilibrium(&g, &s, 1_000).unwrap().is_equilibrium(), "{} {}", policy, s);
        }
    }

    #[test]
    fn seeded_policy_is_reproducible(g in game(3, 4, 6), seed in any::<u64>()) {
        let a = sequential_equilibrium(&g, TieBreakPolicy::Seeded(seed)).unwrap();
        let b = sequential_equilibrium(&g, TieBreakPolicy::Seeded(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn enumeration_matches_brute_force(g in game(2, 3, 3)) {
        let paths = PathChoice::all(&g.graph);
        let mut brute = Vec::new();
        let mut digits = vec![0usize; g.n];
        loop {
            let s = State::new(digits.iter().map(|&d| paths[d].clone()).collect());
            if is_ufr_equilibrium(&g, &s, 1_000).unwrap().is_equilibrium() {
                brute.push(s);
            }
            let Some(p) = digits.iter().rposition(|&d| d + 1 < paths.len()) else { break };
            digits[p] += 1;
            digits[p + 1..].iter_mut().for_each(|d| *d = 0);
        }
        prop_assert_eq!(enumerate_equilibria(&g, 100_000).unwrap(), brute);
    }

    #[test]
    fn optimum_beats_every_state((g, _) in game_and_state(2, 3, 4)) {
        let g = Game::new(g.graph, g.n);
        let c = min_horizon(&g).unwrap();
        let plan = optimal_state(&g).unwrap();
        prop_assert_eq!(plan.counts.iter().sum::<u64>(), g.n as u64);
        prop_assert_eq!(load_with(&g, &plan.state, Stepping::EventTimes).unwrap().makespan, c);
        let paths = PathChoice::all(&g.graph);
        let mut digits = vec![0usize; g.n];
        loop {
            let s = State::new(digits.iter().map(|&d| paths[d].clone()).collect());
            prop_assert!(load_with(&g, &s, Stepping::EventTimes).unwrap().makespan >= c);
            let Some(p) = digits.iter().rposition(|&d| d + 1 < paths.len()) else { break };
            digits[p] += 1;
            digits[p + 1..].iter_mut().for_each(|d| *d = 0);
        }
    }

    #[test]
    fn any_state_embeds_as_feasible_flow((g, s) in with_capacities()) {
        let r = load_with(&g, &s, Stepping::EventTimes).unwrap();
        let flow = state_to_flow(&g, &r);
        prop_assert_eq!(check_flow_feasible(&g.graph, &flow, Some(g.n as u64)), Ok(g.n as u64));
    }
}
