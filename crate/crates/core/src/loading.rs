//! Discrete-time FIFO network loading.
//!
//! At every time `t` the engine first appends to each edge's queue the players
//! reaching its tail at `t` (lower player index first), then removes the first
//! `capacity` players of every non-empty queue. A player leaving a queue at
//! `t` reaches the head of the edge at `t + transit`.
//!
//! Player indices in this module are 0-based vector positions.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::{ensure_valid, Edge, Game, LinearMultigraph, State, Time};

/// How the loading loop advances time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepping {
    /// Jump directly to the next time at which something can happen.
    EventTimes,
    /// Visit every integer time from 0 to the end of the run.
    EveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueEntry {
    pub player: usize,
    pub enqueue: Time,
    pub depart: Time,
}

/// Everything that happened on one edge, in FIFO order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeLog {
    pub edge: Edge,
    pub entries: Vec<QueueEntry>,
}

impl EdgeLog {
    /// Departure time of a fictional player joining at `t` behind everyone who
    /// reached the tail no later than `t`.
    fn fictional_departure(&self, t: Time) -> Time {
        let ahead = self.entries.partition_point(|q| q.enqueue <= t);
        let cap = self.edge.capacity as usize;
        let mut d = t;
        if ahead > 0 {
            d = d.max(self.entries[ahead - 1].depart);
            if ahead >= cap {
                d = d.max(self.entries[ahead - cap].depart + 1);
            }
        }
        d
    }

    /// Players in the queue after the removal step at `t`, front first.
    pub fn queue_at(&self, t: Time) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|q| q.enqueue <= t && t < q.depart)
            .map(|q| q.player)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TraceKind {
    Arrive,
    Enqueue,
    Depart,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceKind::Arrive => "arrive",
            TraceKind::Enqueue => "enqueue",
            TraceKind::Depart => "depart",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TraceEvent {
    pub time: Time,
    pub kind: TraceKind,
    pub layer: usize,
    pub index: usize,
    pub player: usize,
}

/// Complete timeline of one loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadingResult {
    /// `enqueue[i][j]`: time player `i` reaches the tail of its layer-`j+1` edge.
    pub enqueue: Vec<Vec<Time>>,
    /// `depart[i][j]`: time player `i` leaves that edge's queue.
    pub depart: Vec<Vec<Time>>,
    pub waiting: Vec<Vec<Time>>,
    pub latency: Vec<Vec<Time>>,
    /// `arrivals[j][i]`: arrival of player `i` at node `v_j`; row 0 is the
    /// starting pattern.
    pub arrivals: Vec<Vec<Time>>,
    pub completions: Vec<Time>,
    pub makespan: Time,
    edge_logs: Vec<Vec<EdgeLog>>,
    /// Change points `(t, Q(t))` of the total queue length.
    queue_steps: Vec<(Time, u64)>,
}

impl LoadingResult {
    pub fn edge_log(&self, layer: usize, index: usize) -> Option<&EdgeLog> {
        self.edge_logs
            .get(layer.checked_sub(1)?)?
            .get(index.checked_sub(1)?)
    }

    pub fn edge_logs(&self) -> impl Iterator<Item = &EdgeLog> {
        self.edge_logs.iter().flatten()
    }

    /// Latency a fictional lowest-priority player entering the edge at `t`
    /// would experience. Past the last event the final queue stays frozen, so
    /// the value settles at the transit time.
    pub fn workload(&self, layer: usize, index: usize, t: Time) -> Result<Time> {
        let log = self
            .edge_log(layer, index)
            .ok_or(Error::NoSuchEdge { layer, index })?;
        Ok(log.edge.transit + log.fictional_departure(t) - t)
    }

    pub fn queue_at(&self, layer: usize, index: usize, t: Time) -> Result<Vec<usize>> {
        self.edge_log(layer, index)
            .map(|log| log.queue_at(t))
            .ok_or(Error::NoSuchEdge { layer, index })
    }

    /// Total number of queued players after the removal step at `t`.
    pub fn queue_sum(&self, t: Time) -> u64 {
        match self.queue_steps.partition_point(|&(s, _)| s <= t) {
            0 => 0,
            p => self.queue_steps[p - 1].1,
        }
    }

    /// 1-based position of `player` in the FIFO order of its layer-`layer` edge.
    pub fn queue_position(&self, player: usize, layer: usize, index: usize) -> Option<usize> {
        self.edge_log(layer, index)?
            .entries
            .iter()
            .position(|q| q.player == player)
            .map(|p| p + 1)
    }

    /// Number of players arriving at node `v_j` at each time.
    pub fn inflow(&self, node: usize) -> BTreeMap<Time, usize> {
        let mut out = BTreeMap::new();
        for &a in &self.arrivals[node] {
            *out.entry(a).or_insert(0) += 1;
        }
        out
    }

    pub fn trace(&self) -> Vec<TraceEvent> {
        let mut events = Vec::new();
        for log in self.edge_logs() {
            let (layer, index) = (log.edge.layer, log.edge.index);
            for q in &log.entries {
                let ev = |time, kind| TraceEvent {
                    time,
                    kind,
                    layer,
                    index,
                    player: q.player,
                };
                events.push(ev(q.enqueue, TraceKind::Enqueue));
                events.push(ev(q.depart, TraceKind::Depart));
                events.push(ev(q.depart + log.edge.transit, TraceKind::Arrive));
            }
        }
        events.sort();
        events
    }

    /// Writes the event trace as CSV with a `time,edge,event,player` header.
    /// Players are reported 1-based.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,edge,event,player")?;
        for ev in self.trace() {
            writeln!(
                out,
                "{},{}:{},{},{}",
                ev.time,
                ev.layer,
                ev.index,
                ev.kind,
                ev.player + 1
            )?;
        }
        Ok(())
    }
}

pub fn load(game: &Game, state: &State) -> Result<LoadingResult> {
    load_with(game, state, Stepping::EventTimes)
}

pub fn load_with(game: &Game, state: &State, stepping: Stepping) -> Result<LoadingResult> {
    ensure_valid(game)?;
    state.check(game)?;
    let (enqueue, depart) = run(game, state, stepping)?;
    Ok(assemble(game, state, enqueue, depart))
}

/// Upper bound on any completion time, used to guarantee termination.
pub fn horizon_bound(game: &Game) -> Time {
    let longest: Time = game
        .graph
        .layers()
        .iter()
        .map(|l| l.iter().map(|e| e.transit).max().unwrap_or(0))
        .sum();
    let last_start = game.starting_pattern.iter().copied().max().unwrap_or(0);
    last_start + (game.n as Time).max(1) * longest
}

type Schedule = (Vec<Vec<Time>>, Vec<Vec<Time>>);

fn run(game: &Game, state: &State, stepping: Stepping) -> Result<Schedule> {
    let graph = &game.graph;
    let m = graph.num_layers();
    let n = game.n;
    let bound = horizon_bound(game);

    let mut enqueue = vec![vec![0; m]; n];
    let mut depart = vec![vec![0; m]; n];
    let mut pending: BTreeMap<Time, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, &a) in game.starting_pattern.iter().enumerate() {
        pending.entry(a).or_default().push((i, 0));
    }
    let mut queues: Vec<Vec<VecDeque<usize>>> = graph
        .layers()
        .iter()
        .map(|l| vec![VecDeque::new(); l.len()])
        .collect();
    let mut queued = 0usize;

    let mut t = match stepping {
        Stepping::EventTimes => pending.keys().next().copied().unwrap_or(0),
        Stepping::EveryStep => 0,
    };
    loop {
        if t > bound {
            return Err(Error::HorizonExceeded { bound });
        }
        if let Some(mut arriving) = pending.remove(&t) {
            arriving.sort_unstable();
            for (p, l) in arriving {
                let e = state.paths[p].edge_indices[l] - 1;
                enqueue[p][l] = t;
                queues[l][e].push_back(p);
                queued += 1;
            }
        }
        for (l, layer) in queues.iter_mut().enumerate() {
            for (e, queue) in layer.iter_mut().enumerate() {
                let edge = &graph.layers()[l][e];
                for _ in 0..edge.capacity {
                    let Some(p) = queue.pop_front() else { break };
                    queued -= 1;
                    depart[p][l] = t;
                    if l + 1 < m {
                        pending
                            .entry(t + edge.transit)
                            .or_default()
                            .push((p, l + 1));
                    }
                }
            }
        }
        t = if queued > 0 {
            t + 1
        } else {
            match (stepping, pending.keys().next()) {
                (_, None) => break,
                (Stepping::EventTimes, Some(&next)) => next,
                (Stepping::EveryStep, Some(_)) => t + 1,
            }
        };
    }
    Ok((enqueue, depart))
}

fn assemble(
    game: &Game,
    state: &State,
    enqueue: Vec<Vec<Time>>,
    depart: Vec<Vec<Time>>,
) -> LoadingResult {
    let graph = &game.graph;
    let m = graph.num_layers();
    let n = game.n;
    let transit =
        |i: usize, l: usize| graph.layers()[l][state.paths[i].edge_indices[l] - 1].transit;

    let waiting: Vec<Vec<Time>> = (0..n)
        .map(|i| (0..m).map(|l| depart[i][l] - enqueue[i][l]).collect())
        .collect();
    let latency: Vec<Vec<Time>> = (0..n)
        .map(|i| (0..m).map(|l| waiting[i][l] + transit(i, l)).collect())
        .collect();
    let mut arrivals = vec![game.starting_pattern.clone()];
    arrivals.extend((0..m).map(|l| (0..n).map(|i| depart[i][l] + transit(i, l)).collect()));
    let completions = arrivals[m].clone();
    let makespan = completions.iter().copied().max().unwrap_or(0);

    let mut edge_logs: Vec<Vec<EdgeLog>> = graph
        .layers()
        .iter()
        .map(|l| {
            l.iter()
                .map(|&edge| EdgeLog {
                    edge,
                    entries: Vec::new(),
                })
                .collect()
        })
        .collect();
    let mut deltas: BTreeMap<Time, i64> = BTreeMap::new();
    for i in 0..n {
        for l in 0..m {
            let e = state.paths[i].edge_indices[l] - 1;
            edge_logs[l][e].entries.push(QueueEntry {
                player: i,
                enqueue: enqueue[i][l],
                depart: depart[i][l],
            });
            if depart[i][l] > enqueue[i][l] {
                *deltas.entry(enqueue[i][l]).or_insert(0) += 1;
                *deltas.entry(depart[i][l]).or_insert(0) -= 1;
            }
        }
    }
    for log in edge_logs.iter_mut().flatten() {
        log.entries.sort_by_key(|q| (q.enqueue, q.player));
    }
    let mut level = 0i64;
    let queue_steps = deltas
        .into_iter()
        .map(|(t, d)| {
            level += d;
            (t, level as u64)
        })
        .collect();

    LoadingResult {
        enqueue,
        depart,
        waiting,
        latency,
        arrivals,
        completions,
        makespan,
        edge_logs,
        queue_steps,
    }
}

/// Arrival-only loader used by the equilibrium checks.
///
/// Because every edge connects consecutive nodes, the timeline can be built
/// one layer at a time: inside a layer each edge is a FIFO server whose
/// customers are ordered by (arrival at the tail, player index).
pub(crate) struct ArrivalLoader<'g> {
    graph: &'g LinearMultigraph,
    order: Vec<usize>,
    served: Vec<Vec<Time>>,
}

impl<'g> ArrivalLoader<'g> {
    pub(crate) fn new(graph: &'g LinearMultigraph) -> Self {
        let widest = graph.layers().iter().map(Vec::len).max().unwrap_or(0);
        Self {
            graph,
            order: Vec::new(),
            served: vec![Vec::new(); widest],
        }
    }

    /// Fills `arrivals[j]` for `1 <= j <= upto` given `arrivals[0]`; `choice`
    /// yields the 0-based edge of a player in a 0-based layer.
    pub(crate) fn fill(
        &mut self,
        arrivals: &mut [Vec<Time>],
        upto: usize,
        choice: impl Fn(usize, usize) -> usize,
    ) {
        let n = arrivals[0].len();
        for l in 0..upto {
            let layer = &self.graph.layers()[l];
            self.order.clear();
            self.order.extend(0..n);
            let prev = &arrivals[l];
            self.order.sort_by_key(|&i| (prev[i], i));
            for s in &mut self.served[..layer.len()] {
                s.clear();
            }
            let mut next = std::mem::take(&mut arrivals[l + 1]);
            next.resize(n, 0);
            for &i in &self.order {
                let e = choice(i, l);
                let edge = &layer[e];
                let served = &mut self.served[e];
                let cap = edge.capacity as usize;
                let mut d = arrivals[l][i];
                if let Some(&last) = served.last() {
                    d = d.max(last);
                }
                if served.len() >= cap {
                    d = d.max(served[served.len() - cap] + 1);
                }
                served.push(d);
                next[i] = d + edge.transit;
            }
            arrivals[l + 1] = next;
        }
    }
}

/// Arrival times at every node, computed layer by layer.
pub fn arrival_pattern(game: &Game, state: &State) -> Result<Vec<Vec<Time>>> {
    ensure_valid(game)?;
    state.check(game)?;
    let m = game.graph.num_layers();
    let mut arrivals = vec![Vec::new(); m + 1];
    arrivals[0] = game.starting_pattern.clone();
    ArrivalLoader::new(&game.graph)
        .fill(&mut arrivals, m, |i, l| state.paths[i].edge_indices[l] - 1);
    Ok(arrivals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::two_layer_game;
    use crate::model::{LinearMultigraph, PathChoice};

    fn two_layer_state() -> State {
        State::from_rows(&[&[1, 1], &[2, 1], &[1, 1]])
    }

    #[test]
    fn two_layer_timeline() {
        let r = load(&two_layer_game(), &two_layer_state()).unwrap();
        assert_eq!(r.arrivals[1], vec![1, 2, 2]);
        assert_eq!(r.arrivals[2], vec![3, 4, 5]);
        assert_eq!(r.makespan, 5);
        assert_eq!(r.waiting[2][0], 1);
        assert_eq!(r.waiting[0][0], 0);
        assert_eq!(r.waiting[1][0], 0);
        assert_eq!(r.latency[1][0], 2);
        assert_eq!(r.latency[2][0], 2);
        assert_eq!(r.waiting[2][1], 1);
        assert_eq!(r.latency[2][1], 3);
    }

    #[test]
    fn two_layer_workloads() {
        let r = load(&two_layer_game(), &two_layer_state()).unwrap();
        assert_eq!(r.workload(1, 1, 0).unwrap(), 3);
        assert_eq!(r.workload(1, 2, 0).unwrap(), 3);
        let second: Vec<_> = (0..4).map(|t| r.workload(2, 1, t).unwrap()).collect();
        assert_eq!(second, vec![2, 3, 4, 3]);
        // beyond the last event
        assert_eq!(r.workload(2, 1, 100).unwrap(), 2);
        assert!(r.workload(3, 1, 0).is_err());
    }

    #[test]
    fn unused_edge_workload_is_transit() {
        let game = Game::new(LinearMultigraph::new(vec![vec![1, 4]]), 2);
        let r = load(&game, &State::from_rows(&[&[1], &[1]])).unwrap();
        for t in 0..6 {
            assert_eq!(r.workload(1, 2, t).unwrap(), 4);
        }
    }

    #[test]
    fn single_player_no_contention() {
        let game = Game::new(LinearMultigraph::new(vec![vec![5]]), 1);
        let r = load(&game, &State::from_rows(&[&[1]])).unwrap();
        assert_eq!(r.completions, vec![5]);
        assert!(r.waiting.iter().flatten().all(|&w| w == 0));
        assert_eq!(r.queue_sum(0), 0);
    }

    #[test]
    fn two_layer_queue_sum_and_contents() {
        let r = load(&two_layer_game(), &two_layer_state()).unwrap();
        assert_eq!(r.queue_sum(0), 1);
        assert_eq!(r.queue_at(1, 1, 0).unwrap(), vec![2]);
        assert_eq!(r.queue_sum(1), 0);
        assert_eq!(r.queue_sum(2), 1);
        assert_eq!(r.queue_at(2, 1, 2).unwrap(), vec![2]);
        assert_eq!(r.queue_sum(50), 0);
        assert_eq!(r.queue_position(2, 1, 1), Some(2));
    }

    #[test]
    fn capacity_releases_several_per_step() {
        let game = Game::new(
            LinearMultigraph::with_capacities(vec![vec![1]], vec![vec![2]]),
            3,
        );
        let r = load(&game, &State::from_rows(&[&[1], &[1], &[1]])).unwrap();
        assert_eq!(r.completions, vec![1, 1, 2]);
        assert_eq!(r.workload(1, 1, 0).unwrap(), 2);
    }

    #[test]
    fn starting_pattern_delays_entry() {
        let game = Game::with_pattern(LinearMultigraph::new(vec![vec![2]]), vec![3, 3, 10]);
        let r = load(&game, &State::from_rows(&[&[1], &[1], &[1]])).unwrap();
        assert_eq!(r.completions, vec![5, 6, 12]);
        assert_eq!(r.arrivals[0], vec![3, 3, 10]);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        assert!(load(&two_layer_game(), &State::from_rows(&[&[1, 1]])).is_err());
        assert!(load(
            &two_layer_game(),
            &State::from_rows(&[&[1, 2], &[1, 1], &[1, 1]])
        )
        .is_err());
    }

    #[test]
    fn trace_csv_format() {
        let game = Game::new(LinearMultigraph::new(vec![vec![1]]), 2);
        let r = load(&game, &State::new(vec![PathChoice::new(vec![1]); 2])).unwrap();
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "time,edge,event,player\n\
             0,1:1,enqueue,1\n0,1:1,enqueue,2\n0,1:1,depart,1\n\
             1,1:1,arrive,1\n1,1:1,depart,2\n2,1:1,arrive,2\n"
        );
    }

    #[test]
    fn arrival_loader_matches_engine_on_two_layer() {
        let a = arrival_pattern(&two_layer_game(), &two_layer_state()).unwrap();
        let r = load(&two_layer_game(), &two_layer_state()).unwrap();
        assert_eq!(a, r.arrivals);
    }
}
