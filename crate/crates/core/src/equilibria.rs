//! Uniformly-fastest-route (UFR) equilibria: sequential construction,
//! exact verification, and exhaustive enumeration on tiny instances.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loading::{arrival_pattern, ArrivalLoader};
use crate::model::{ensure_valid, Edge, Game, PathChoice, State, Time};

/// How a deciding player picks among edges of equal minimal latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TieBreakPolicy {
    /// Longest queue, then lowest edge index.
    GreedyQueue,
    LowestIndex,
    /// Shortest queue, then lowest edge index.
    ShortestQueue,
    /// Uniform among tied edges, driven by a seeded PRNG.
    Seeded(u64),
}

impl TieBreakPolicy {
    pub const ALL_DETERMINISTIC: [TieBreakPolicy; 3] = [
        TieBreakPolicy::GreedyQueue,
        TieBreakPolicy::LowestIndex,
        TieBreakPolicy::ShortestQueue,
    ];
}

impl fmt::Display for TieBreakPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TieBreakPolicy::GreedyQueue => f.write_str("greedy-queue"),
            TieBreakPolicy::LowestIndex => f.write_str("lowest-index"),
            TieBreakPolicy::ShortestQueue => f.write_str("shortest-queue"),
            TieBreakPolicy::Seeded(seed) => write!(f, "seeded:{seed}"),
        }
    }
}

impl FromStr for TieBreakPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy-queue" => Ok(TieBreakPolicy::GreedyQueue),
            "lowest-index" => Ok(TieBreakPolicy::LowestIndex),
            "shortest-queue" => Ok(TieBreakPolicy::ShortestQueue),
            _ => s
                .strip_prefix("seeded:")
                .and_then(|seed| seed.parse().ok())
                .map(TieBreakPolicy::Seeded)
                .ok_or_else(|| Error::InvalidParameters(format!("unknown policy `{s}`"))),
        }
    }
}

/// Queue history of one edge while players are inserted in index order.
struct EdgeBook {
    edge: Edge,
    depart: Vec<Time>,
}

impl EdgeBook {
    /// Departure of a new player reaching the tail at `t`, behind everyone
    /// already recorded.
    fn departure_for(&self, t: Time) -> Time {
        let cap = self.edge.capacity as usize;
        let mut d = t;
        if let Some(&last) = self.depart.last() {
            d = d.max(last);
        }
        if self.depart.len() >= cap {
            d = d.max(self.depart[self.depart.len() - cap] + 1);
        }
        d
    }

    /// Players still waiting on the edge when a new player arrives at `t`.
    fn queue_len(&self, t: Time) -> usize {
        self.depart.len() - self.depart.partition_point(|&d| d < t)
    }
}

/// Builds an equilibrium by letting players choose in index order; each one
/// walks layer by layer, always entering an edge of minimal current latency.
pub fn sequential_equilibrium(game: &Game, policy: TieBreakPolicy) -> Result<State> {
    ensure_valid(game)?;
    let graph = &game.graph;
    let m = graph.num_layers();
    let mut books: Vec<Vec<EdgeBook>> = graph
        .layers()
        .iter()
        .map(|l| {
            l.iter()
                .map(|&edge| EdgeBook {
                    edge,
                    depart: Vec::new(),
                })
                .collect()
        })
        .collect();
    let mut rng = match policy {
        TieBreakPolicy::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut latest = vec![0; m + 1];
    let mut tied: Vec<(usize, usize)> = Vec::new();
    let mut paths = Vec::with_capacity(game.n);

    for (i, &start) in game.starting_pattern.iter().enumerate() {
        let mut t = start;
        let mut choice = Vec::with_capacity(m);
        for (l, layer) in books.iter_mut().enumerate() {
            // Later players must never reach a node before earlier ones,
            // otherwise the recorded queues would no longer be final.
            if t < latest[l] {
                return Err(Error::OrderingViolated {
                    player: i + 1,
                    node: l,
                });
            }
            latest[l] = t;

            let mut best = Time::MAX;
            tied.clear();
            for (e, book) in layer.iter().enumerate() {
                let latency = book.edge.transit + book.departure_for(t) - t;
                if latency < best {
                    best = latency;
                    tied.clear();
                }
                if latency == best {
                    tied.push((e, book.queue_len(t)));
                }
            }
            let pick = match policy {
                TieBreakPolicy::LowestIndex => tied[0].0,
                TieBreakPolicy::GreedyQueue => {
                    // max_by_key keeps the last maximum; iterate in reverse so
                    // the lowest index wins ties.
                    tied.iter().rev().max_by_key(|&&(_, q)| q).unwrap().0
                }
                TieBreakPolicy::ShortestQueue => tied.iter().min_by_key(|&&(_, q)| q).unwrap().0,
                TieBreakPolicy::Seeded(_) => {
                    let rng = rng.as_mut().expect("seeded policy has an rng");
                    if tied.len() == 1 {
                        tied[0].0
                    } else {
                        tied[rng.gen_range(0..tied.len())].0
                    }
                }
            };
            let book = &mut layer[pick];
            let d = book.departure_for(t);
            book.depart.push(d);
            choice.push(pick + 1);
            t = d + book.edge.transit;
        }
        if t < latest[m] {
            return Err(Error::OrderingViolated {
                player: i + 1,
                node: m,
            });
        }
        latest[m] = t;
        paths.push(PathChoice::new(choice));
    }
    Ok(State::new(paths))
}

/// The equilibrium built by the greedy queue policy, whose completion time is
/// the largest among all equilibria.
pub fn worst_equilibrium(game: &Game) -> Result<State> {
    sequential_equilibrium(game, TieBreakPolicy::GreedyQueue)
}

/// A unilateral deviation that reaches some node strictly earlier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UfrWitness {
    /// 0-based player index.
    pub player: usize,
    /// Node `v_node`, `1 <= node <= layers`.
    pub node: usize,
    pub deviation: PathChoice,
    pub original_arrival: Time,
    pub improved_arrival: Time,
}

impl fmt::Display for UfrWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "player {} reaches v_{} at {} instead of {} by switching to {}",
            self.player + 1,
            self.node,
            self.improved_arrival,
            self.original_arrival,
            self.deviation
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UfrVerdict {
    Equilibrium,
    Witness(UfrWitness),
}

impl UfrVerdict {
    pub fn is_equilibrium(&self) -> bool {
        matches!(self, UfrVerdict::Equilibrium)
    }
}

/// Exact check: every player tries every alternative path, the profile is
/// reloaded, and arrivals at all nodes are compared. Witnesses are reported in
/// (player, node, path) order, so the first one found names the earliest node
/// at which the lowest-index improvable player can gain.
pub fn is_ufr_equilibrium(game: &Game, state: &State, path_budget: u64) -> Result<UfrVerdict> {
    ensure_valid(game)?;
    state.check(game)?;
    let graph = &game.graph;
    let count = graph.path_count().ok_or_else(|| Error::TooLarge {
        size: "overflow".into(),
        budget: path_budget,
    })?;
    if count > path_budget {
        return Err(Error::TooLarge {
            size: count.to_string(),
            budget: path_budget,
        });
    }
    let m = graph.num_layers();
    let paths = PathChoice::all(graph);
    let base = arrival_pattern(game, state)?;
    let mut loader = ArrivalLoader::new(graph);
    let mut buf = vec![Vec::new(); m + 1];
    buf[0] = game.starting_pattern.clone();
    let mut deviated: Vec<Vec<Time>> = Vec::with_capacity(paths.len());

    for i in 0..game.n {
        deviated.clear();
        for p in &paths {
            loader.fill(&mut buf, m, |pl, l| {
                if pl == i {
                    p.edge_indices[l] - 1
                } else {
                    state.paths[pl].edge_indices[l] - 1
                }
            });
            deviated.push((1..=m).map(|j| buf[j][i]).collect());
        }
        for node in 1..=m {
            for (p, arrivals) in paths.iter().zip(&deviated) {
                if arrivals[node - 1] < base[node][i] {
                    return Ok(UfrVerdict::Witness(UfrWitness {
                        player: i,
                        node,
                        deviation: p.clone(),
                        original_arrival: base[node][i],
                        improved_arrival: arrivals[node - 1],
                    }));
                }
            }
        }
    }
    Ok(UfrVerdict::Equilibrium)
}

/// `|paths|^n`, or `None` on overflow.
pub fn state_space_size(game: &Game) -> Option<u64> {
    let paths = game.graph.path_count()?;
    (0..game.n).try_fold(1u64, |acc, _| acc.checked_mul(paths))
}

/// All equilibria of `game`, sorted lexicographically.
///
/// Arrival times at `v_j` depend only on the choices in layers `1..=j`, so the
/// equilibrium condition at `v_j` can be decided as soon as every player has
/// fixed its first `j` edges. The search assigns one layer for all players at
/// a time and discards prefixes that already admit an improving deviation;
/// the surviving leaves are exactly the states accepted by
/// [`is_ufr_equilibrium`].
pub fn enumerate_equilibria(game: &Game, state_budget: u64) -> Result<Vec<State>> {
    ensure_valid(game)?;
    match state_space_size(game) {
        Some(size) if size <= state_budget => {}
        size => {
            return Err(Error::TooLarge {
                size: size.map_or_else(|| "overflow".into(), |s| s.to_string()),
                budget: state_budget,
            })
        }
    }
    let m = game.graph.num_layers();
    let mut search = Search {
        game,
        loader: ArrivalLoader::new(&game.graph),
        sizes: game.graph.layers().iter().map(Vec::len).collect(),
        choices: vec![vec![0; m]; game.n],
        arrivals: vec![game.starting_pattern.clone(); m + 1],
        scratch: vec![game.starting_pattern.clone(); m + 1],
        found: Vec::new(),
    };
    search.descend(0);
    let mut found = search.found;
    found.sort();
    Ok(found)
}

struct Search<'g> {
    game: &'g Game,
    loader: ArrivalLoader<'g>,
    sizes: Vec<usize>,
    /// `choices[i][l]`: 0-based edge of player `i` in layer `l`.
    choices: Vec<Vec<usize>>,
    arrivals: Vec<Vec<Time>>,
    scratch: Vec<Vec<Time>>,
    found: Vec<State>,
}

impl Search<'_> {
    fn descend(&mut self, l: usize) {
        let n = self.game.n;
        let m = self.sizes.len();
        if l == m {
            self.found.push(State::new(
                self.choices
                    .iter()
                    .map(|c| PathChoice::new(c.iter().map(|e| e + 1).collect()))
                    .collect(),
            ));
            return;
        }
        for c in &mut self.choices {
            c[l] = 0;
        }
        loop {
            let choices = &self.choices;
            self.loader
                .fill(&mut self.arrivals, l + 1, |i, r| choices[i][r]);
            if self.stable_at(l) {
                self.descend(l + 1);
            }
            // odometer over all players' choices in layer l
            let mut i = 0;
            while i < n {
                self.choices[i][l] += 1;
                if self.choices[i][l] < self.sizes[l] {
                    break;
                }
                self.choices[i][l] = 0;
                i += 1;
            }
            if i == n {
                return;
            }
        }
    }

    /// No player can reach `v_{l+1}` earlier by changing edges in layers
    /// `0..=l`.
    fn stable_at(&mut self, l: usize) -> bool {
        let node = l + 1;
        let mut deviation = vec![0usize; node];
        for i in 0..self.game.n {
            deviation.iter_mut().for_each(|d| *d = 0);
            loop {
                if deviation[..] != self.choices[i][..node] {
                    let choices = &self.choices;
                    let dev = &deviation;
                    self.loader.fill(&mut self.scratch, node, |pl, r| {
                        if pl == i {
                            dev[r]
                        } else {
                            choices[pl][r]
                        }
                    });
                    if self.scratch[node][i] < self.arrivals[node][i] {
                        return false;
                    }
                }
                let mut r = 0;
                while r < node {
                    deviation[r] += 1;
                    if deviation[r] < self.sizes[r] {
                        break;
                    }
                    deviation[r] = 0;
                    r += 1;
                }
                if r == node {
                    break;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loading::load;
    use crate::model::tests::two_layer_game;
    use crate::model::LinearMultigraph;

    fn overtaking_game() -> (Game, State) {
        let game = Game::new(
            LinearMultigraph::new(vec![vec![1, 1, 1, 4], vec![1, 1], vec![1]]),
            9,
        );
        let state = State::from_rows(&[
            &[1, 1, 1],
            &[2, 2, 1],
            &[3, 1, 1],
            &[1, 2, 1],
            &[2, 1, 1],
            &[3, 2, 1],
            &[1, 1, 1],
            &[4, 2, 1],
            &[2, 2, 1],
        ]);
        (game, state)
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [
            TieBreakPolicy::GreedyQueue,
            TieBreakPolicy::LowestIndex,
            TieBreakPolicy::ShortestQueue,
            TieBreakPolicy::Seeded(42),
        ] {
            assert_eq!(p.to_string().parse::<TieBreakPolicy>().unwrap(), p);
        }
        assert!("seeded:x".parse::<TieBreakPolicy>().is_err());
        assert!("fastest".parse::<TieBreakPolicy>().is_err());
    }

    #[test]
    fn two_layer_greedy_queue() {
        let game = two_layer_game();
        let s = sequential_equilibrium(&game, TieBreakPolicy::GreedyQueue).unwrap();
        assert_eq!(s, State::from_rows(&[&[1, 1], &[1, 1], &[2, 1]]));
        let r = load(&game, &s).unwrap();
        assert_eq!(r.completions, vec![3, 4, 5]);
        assert_eq!(r.makespan, 5);
        assert!(is_ufr_equilibrium(&game, &s, 100).unwrap().is_equilibrium());
    }

    #[test]
    fn two_layer_example_state_is_equilibrium() {
        let s = State::from_rows(&[&[1, 1], &[2, 1], &[1, 1]]);
        assert!(is_ufr_equilibrium(&two_layer_game(), &s, 100)
            .unwrap()
            .is_equilibrium());
    }

    #[test]
    fn single_player_takes_cheapest_path() {
        let game = Game::new(LinearMultigraph::new(vec![vec![2, 3], vec![1, 7]]), 1);
        for policy in TieBreakPolicy::ALL_DETERMINISTIC {
            let s = sequential_equilibrium(&game, policy).unwrap();
            assert_eq!(s, State::from_rows(&[&[1, 1]]));
            assert_eq!(load(&game, &s).unwrap().makespan, 3);
            assert!(is_ufr_equilibrium(&game, &s, 10).unwrap().is_equilibrium());
        }
    }

    #[test]
    fn overtaking_profile_has_witness_for_player_8() {
        let (game, state) = overtaking_game();
        let r = load(&game, &state).unwrap();
        // one arrival per step at d; player 9 overtakes the detouring player 8
        let mut pattern = r.completions.clone();
        pattern.sort_unstable();
        assert_eq!(pattern, (3..=11).collect::<Vec<_>>());
        assert_eq!(r.completions[7], 11);
        assert_eq!(r.completions[8], 10);
        assert!(r.arrivals[1][7] > r.arrivals[1][8]);
        match is_ufr_equilibrium(&game, &state, 100).unwrap() {
            UfrVerdict::Witness(w) => {
                assert_eq!(w.player, 7);
                assert_eq!(w.node, 1);
                assert_eq!(w.deviation.at(1), 2);
                assert_eq!(w.original_arrival, 4);
                assert_eq!(w.improved_arrival, 3);
            }
            other => panic!("expected witness, got {other:?}"),
        }
    }

    #[test]
    fn path_budget_is_enforced() {
        let (game, state) = overtaking_game();
        assert!(matches!(
            is_ufr_equilibrium(&game, &state, 7),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn two_layer_enumeration() {
        let game = two_layer_game();
        let all = enumerate_equilibria(&game, 1000).unwrap();
        assert!(!all.is_empty());
        for s in &all {
            let r = load(&game, s).unwrap();
            assert_eq!(r.arrivals[2], vec![3, 4, 5]);
        }
        assert!(matches!(
            enumerate_equilibria(&game, 7),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn enumeration_matches_filtering_every_state() {
        let game = Game::with_pattern(
            LinearMultigraph::new(vec![vec![1, 2, 2], vec![1, 3]]),
            vec![0, 0, 1],
        );
        let paths = PathChoice::all(&game.graph);
        let mut expected = Vec::new();
        for a in &paths {
            for b in &paths {
                for c in &paths {
                    let s = State::new(vec![a.clone(), b.clone(), c.clone()]);
                    if is_ufr_equilibrium(&game, &s, 100).unwrap().is_equilibrium() {
                        expected.push(s);
                    }
                }
            }
        }
        assert_eq!(enumerate_equilibria(&game, 1_000_000).unwrap(), expected);
    }

    #[test]
    fn single_edge_layers_have_one_equilibrium() {
        let game = Game::new(LinearMultigraph::new(vec![vec![2], vec![3]]), 3);
        let all = enumerate_equilibria(&game, 10).unwrap();
        assert_eq!(all, vec![State::from_rows(&[&[1, 1], &[1, 1], &[1, 1]])]);
    }

    #[test]
    fn seeded_policy_is_deterministic() {
        let game = Game::new(LinearMultigraph::new(vec![vec![1, 1, 1], vec![2, 2]]), 7);
        let a = sequential_equilibrium(&game, TieBreakPolicy::Seeded(9)).unwrap();
        let b = sequential_equilibrium(&game, TieBreakPolicy::Seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(is_ufr_equilibrium(&game, &a, 10).unwrap().is_equilibrium());
    }

    #[test]
    fn shortest_queue_prefers_slow_empty_edge() {
        // Player 2 ties between waiting one step on edge 1 and edge 2.
        let game = Game::new(LinearMultigraph::new(vec![vec![1, 2]]), 2);
        let greedy = sequential_equilibrium(&game, TieBreakPolicy::GreedyQueue).unwrap();
        let short = sequential_equilibrium(&game, TieBreakPolicy::ShortestQueue).unwrap();
        assert_eq!(greedy, State::from_rows(&[&[1], &[1]]));
        assert_eq!(short, State::from_rows(&[&[1], &[2]]));
    }
}
