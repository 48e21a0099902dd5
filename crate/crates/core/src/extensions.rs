//! Capacity splitting and the embedding of packet states as flows over time.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loading::LoadingResult;
use crate::model::{Game, LinearMultigraph, PathChoice, State, Time};

/// Where the unit-capacity copies of each original edge live in the split
/// graph. Copies of one edge are contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMap {
    copies: Vec<Vec<Range<usize>>>,
}

impl SplitMap {
    /// 1-based indices of the copies of edge `index` in `layer`.
    pub fn copies(&self, layer: usize, index: usize) -> Option<Range<usize>> {
        self.copies
            .get(layer.checked_sub(1)?)?
            .get(index.checked_sub(1)?)
            .cloned()
    }

    /// The original edge a split-graph edge was copied from.
    pub fn original(&self, layer: usize, copy: usize) -> Option<usize> {
        self.copies
            .get(layer.checked_sub(1)?)?
            .iter()
            .position(|r| r.contains(&copy))
            .map(|p| p + 1)
    }

    pub fn is_identity(&self) -> bool {
        self.copies
            .iter()
            .all(|layer| layer.iter().all(|r| r.len() == 1))
    }
}

/// Replaces every edge of capacity `c` by `c` unit-capacity copies with the
/// same transit. Sortedness is preserved because copies stay adjacent.
pub fn split_capacities(game: &Game) -> (Game, SplitMap) {
    let mut transits = Vec::new();
    let mut copies = Vec::new();
    for layer in game.graph.layers() {
        let mut t = Vec::new();
        let mut ranges = Vec::new();
        for e in layer {
            let first = t.len() + 1;
            t.extend(std::iter::repeat_n(e.transit, e.capacity as usize));
            ranges.push(first..t.len() + 1);
        }
        transits.push(t);
        copies.push(ranges);
    }
    let graph = LinearMultigraph::new(transits);
    let split = Game::with_pattern(graph, game.starting_pattern.clone());
    (split, SplitMap { copies })
}

/// Sends the `q`-th player served by an edge of capacity `c` to copy
/// `((q - 1) mod c) + 1`.
pub fn map_state_to_split(
    game: &Game,
    state: &State,
    loading: &LoadingResult,
    map: &SplitMap,
) -> Result<State> {
    state.check(game)?;
    let layers = game.graph.num_layers();
    let mut paths: Vec<Vec<usize>> = vec![vec![0; layers]; game.n];
    for log in loading.edge_logs() {
        let (layer, index) = (log.edge.layer, log.edge.index);
        let range = map
            .copies(layer, index)
            .ok_or(Error::NoSuchEdge { layer, index })?;
        let cap = range.len();
        for (pos, q) in log.entries.iter().enumerate() {
            paths[q.player][layer - 1] = range.start + pos % cap;
        }
    }
    if paths.iter().flatten().any(|&e| e == 0) {
        return Err(Error::StateMismatch(
            "loading does not cover every player".into(),
        ));
    }
    Ok(State::new(paths.into_iter().map(PathChoice::new).collect()))
}

/// Piecewise-constant rate on one edge. The rate set at a breakpoint holds
/// until the next breakpoint; before the first one it is zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeFlow {
    pub layer: usize,
    pub index: usize,
    pub breakpoints: Vec<(Time, u64)>,
}

impl EdgeFlow {
    fn rate_segments(&self) -> impl Iterator<Item = (Time, Option<Time>, u64)> + '_ {
        self.breakpoints.iter().enumerate().map(|(p, &(t, r))| {
            let end = self.breakpoints.get(p + 1).map(|b| b.0);
            (t, end, r)
        })
    }

    /// Integral of the rate over `[0, t)`. An unterminated positive final
    /// rate keeps accumulating.
    pub fn cumulative(&self, t: Time) -> u64 {
        self.rate_segments()
            .map(|(start, end, r)| {
                let stop = end.map_or(t, |e| e.min(t));
                stop.saturating_sub(start) * r
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowOverTime {
    pub horizon: Time,
    pub edges: Vec<EdgeFlow>,
}

impl FlowOverTime {
    pub fn edge(&self, layer: usize, index: usize) -> Option<&EdgeFlow> {
        self.edges
            .iter()
            .find(|e| e.layer == layer && e.index == index)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("flows serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Each queue departure at `t` becomes rate 1 on `[t, t + 1)` at the edge
/// tail; the horizon is one past the makespan.
pub fn state_to_flow(game: &Game, loading: &LoadingResult) -> FlowOverTime {
    let mut edges = Vec::new();
    for layer in game.graph.layers() {
        for e in layer {
            let mut departures: Vec<Time> = loading
                .edge_log(e.layer, e.index)
                .map(|log| log.entries.iter().map(|q| q.depart).collect())
                .unwrap_or_default();
            departures.sort_unstable();
            let mut breakpoints: Vec<(Time, u64)> = Vec::new();
            let mut p = 0;
            while p < departures.len() {
                let t = departures[p];
                let run = departures[p..].partition_point(|&d| d == t);
                p += run;
                match breakpoints.last_mut() {
                    Some(last) if last.0 == t => last.1 = run as u64,
                    _ => breakpoints.push((t, run as u64)),
                }
                if departures.get(p) != Some(&(t + 1)) {
                    breakpoints.push((t + 1, 0));
                }
            }
            // merge consecutive equal rates
            breakpoints.dedup_by(|later, earlier| later.1 == earlier.1);
            edges.push(EdgeFlow {
                layer: e.layer,
                index: e.index,
                breakpoints,
            });
        }
    }
    FlowOverTime {
        horizon: loading.makespan + 1,
        edges,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowViolation {
    UnknownEdge {
        layer: usize,
        index: usize,
    },
    MissingEdge {
        layer: usize,
        index: usize,
    },
    BreakpointOrder {
        layer: usize,
        index: usize,
        time: Time,
    },
    Capacity {
        layer: usize,
        index: usize,
        time: Time,
        rate: u64,
        capacity: u64,
    },
    HorizonTail {
        layer: usize,
        index: usize,
        time: Time,
    },
    Conservation {
        node: usize,
        time: Time,
        inflow: u64,
        outflow: u64,
    },
    Value {
        expected: u64,
        actual: u64,
    },
}

impl fmt::Display for FlowViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowViolation::UnknownEdge { layer, index } => {
                write!(f, "flow on unknown edge {layer}:{index}")
            }
            FlowViolation::MissingEdge { layer, index } => {
                write!(f, "edge {layer}:{index} has no rate function")
            }
            FlowViolation::BreakpointOrder { layer, index, time } => write!(
                f,
                "breakpoints of edge {layer}:{index} not strictly increasing at t = {time}"
            ),
            FlowViolation::Capacity {
                layer,
                index,
                time,
                rate,
                capacity,
            } => write!(
                f,
                "capacity: edge {layer}:{index} carries rate {rate} > {capacity} from t = {time}"
            ),
            FlowViolation::HorizonTail { layer, index, time } => write!(
                f,
                "edge {layer}:{index} carries flow at t = {time}, too late to arrive by the horizon"
            ),
            FlowViolation::Conservation {
                node,
                time,
                inflow,
                outflow,
            } => write!(
                f,
                "conservation at v_{node}, t = {time}: outflow {outflow} exceeds inflow {inflow}"
            ),
            FlowViolation::Value { expected, actual } => {
                write!(f, "flow value {actual}, expected {expected}")
            }
        }
    }
}

/// Checks capacities, the horizon tail, weak flow conservation at every
/// internal node, and optionally the flow value (arrivals at the sink by the
/// horizon). Returns the flow value on success.
pub fn check_flow_feasible(
    graph: &LinearMultigraph,
    flow: &FlowOverTime,
    expected_value: Option<u64>,
) -> std::result::Result<u64, Vec<FlowViolation>> {
    let mut violations = Vec::new();
    let horizon = flow.horizon;

    for ef in &flow.edges {
        let (layer, index) = (ef.layer, ef.index);
        let Some(edge) = graph.edge(layer, index) else {
            violations.push(FlowViolation::UnknownEdge { layer, index });
            continue;
        };
        for w in ef.breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                violations.push(FlowViolation::BreakpointOrder {
                    layer,
                    index,
                    time: w[1].0,
                });
            }
        }
        let last_start = horizon.saturating_sub(edge.transit);
        for (start, end, rate) in ef.rate_segments() {
            if rate == 0 || end.is_some_and(|e| e <= start) {
                continue;
            }
            if rate > edge.capacity {
                violations.push(FlowViolation::Capacity {
                    layer,
                    index,
                    time: start,
                    rate,
                    capacity: edge.capacity,
                });
            }
            if end.is_none_or(|e| e > last_start) {
                violations.push(FlowViolation::HorizonTail {
                    layer,
                    index,
                    time: start.max(last_start),
                });
            }
        }
    }
    for e in graph.edges() {
        if flow.edge(e.layer, e.index).is_none() {
            violations.push(FlowViolation::MissingEdge {
                layer: e.layer,
                index: e.index,
            });
        }
    }
    if !violations.is_empty() {
        return Err(violations);
    }

    let layer_flows = |l: usize| -> Vec<(&EdgeFlow, Time)> {
        graph
            .layer(l)
            .iter()
            .map(|e| (flow.edge(e.layer, e.index).expect("checked"), e.transit))
            .collect()
    };
    // cumulative arrivals into the node at the head of a layer
    let inflow_at = |flows: &[(&EdgeFlow, Time)], t: Time| -> u64 {
        flows
            .iter()
            .map(|(ef, tau)| ef.cumulative(t.saturating_sub(*tau)))
            .sum()
    };
    let outflow_at = |flows: &[(&EdgeFlow, Time)], t: Time| -> u64 {
        flows.iter().map(|(ef, _)| ef.cumulative(t)).sum()
    };

    for node in 1..graph.num_layers() {
        let incoming = layer_flows(node);
        let outgoing = layer_flows(node + 1);
        // both sides are piecewise linear; their kinks are all we need
        let mut times: BTreeSet<Time> = BTreeSet::from([horizon]);
        for (ef, tau) in &incoming {
            times.extend(ef.breakpoints.iter().map(|b| b.0 + tau));
        }
        for (ef, _) in &outgoing {
            times.extend(ef.breakpoints.iter().map(|b| b.0));
        }
        for t in times {
            let (inflow, outflow) = (inflow_at(&incoming, t), outflow_at(&outgoing, t));
            if outflow > inflow {
                violations.push(FlowViolation::Conservation {
                    node,
                    time: t,
                    inflow,
                    outflow,
                });
                break;
            }
        }
    }

    let value = inflow_at(&layer_flows(graph.num_layers()), horizon);
    if let Some(expected) = expected_value {
        if value != expected {
            violations.push(FlowViolation::Value {
                expected,
                actual: value,
            });
        }
    }
    if violations.is_empty() {
        Ok(value)
    } else {
        Err(violations)
    }
}
