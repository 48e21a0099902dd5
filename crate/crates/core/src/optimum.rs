//! Minimum-makespan states built from a temporally repeated path
//! decomposition.
//!
//! In a linear multigraph the shortest-path deletion sequence is just "edge
//! `j` of every sorted layer", so the maximum number of packets that reach the
//! destination by time `C` has the closed form
//! `sum over j with len(P_j) <= C of (C - len(P_j) + 1)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::loading::load;
use crate::model::{
    disjoint_path_count, ensure_valid, kth_cheapest_path, path_length, Game, LinearMultigraph,
    PathChoice, State, Time,
};

/// Lengths of the edge-disjoint cheapest paths `P_1, P_2, ...`, non-decreasing.
pub fn cheapest_path_lengths(graph: &LinearMultigraph) -> Vec<Time> {
    (1..=disjoint_path_count(graph))
        .map(|j| {
            graph
                .layers()
                .iter()
                .map(|layer| layer[j - 1].transit)
                .sum()
        })
        .collect()
}

/// Packets a temporally repeated flow delivers by `horizon`, given sorted path
/// lengths.
pub fn max_packets_for_lengths(lengths: &[Time], horizon: Time) -> u64 {
    lengths
        .iter()
        .take_while(|&&len| len <= horizon)
        .map(|&len| horizon - len + 1)
        .sum()
}

/// Maximum number of packets that can reach the destination by `horizon`.
/// Capacities are ignored; split them first.
pub fn max_packets(graph: &LinearMultigraph, horizon: Time) -> u64 {
    max_packets_for_lengths(&cheapest_path_lengths(graph), horizon)
}

fn require_plain(game: &Game) -> Result<()> {
    ensure_valid(game)?;
    if !game.graph.has_unit_capacities() {
        return Err(Error::NonUnitCapacity);
    }
    if !game.has_zero_pattern() {
        return Err(Error::NonZeroStartingPattern);
    }
    Ok(())
}

/// Smallest horizon for a given packet count over sorted path lengths, via
/// doubling and bisection on the monotone packet function.
pub fn min_horizon_for_lengths(lengths: &[Time], n: u64) -> Time {
    let Some(&shortest) = lengths.first() else {
        return 0;
    };
    let feasible = |c: Time| max_packets_for_lengths(lengths, c) >= n;
    if feasible(shortest) {
        return shortest;
    }
    let mut lo = shortest;
    let mut step = 1;
    let mut hi = shortest + step;
    while !feasible(hi) {
        lo = hi;
        step *= 2;
        hi = shortest + step;
    }
    // invariant: !feasible(lo) && feasible(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// The optimal makespan of `game`.
pub fn min_horizon(game: &Game) -> Result<Time> {
    require_plain(game)?;
    Ok(min_horizon_for_lengths(
        &cheapest_path_lengths(&game.graph),
        game.n as u64,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Certificate {
    /// Packets deliverable by `horizon - 1`; must be below `n`.
    pub below: u64,
    /// Packets deliverable by `horizon`; must reach `n`.
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptimalPlan {
    /// Cheapest edge-disjoint paths of length at most the horizon.
    pub paths: Vec<PathChoice>,
    pub lengths: Vec<Time>,
    pub horizon: Time,
    /// Packets sent along each path.
    pub counts: Vec<u64>,
    /// Rounding slack of paths `2..`; the first path carries none.
    pub deltas: Vec<u64>,
    pub state: State,
    pub certificate: Certificate,
}

pub fn optimal_state(game: &Game) -> Result<OptimalPlan> {
    require_plain(game)?;
    let graph = &game.graph;
    let all_lengths = cheapest_path_lengths(graph);
    let n = game.n as u64;
    let horizon = min_horizon_for_lengths(&all_lengths, n);
    let usable = all_lengths.iter().take_while(|&&l| l <= horizon).count();
    let lengths = all_lengths[..usable].to_vec();
    let paths = (1..=usable)
        .map(|j| kth_cheapest_path(graph, j))
        .collect::<Result<Vec<_>>>()?;

    // Full schedule sends horizon - len + 1 packets on every path; the first
    // path keeps its last slot, the others give theirs back from the top.
    let full: u64 = lengths.iter().map(|&l| horizon - l + 1).sum();
    let base = full - (usable as u64 - 1);
    let mut slack = n.checked_sub(base).ok_or_else(|| {
        Error::InvalidParameters(format!("horizon {horizon} cannot place {n} packets"))
    })?;
    let mut deltas = vec![0; usable - 1];
    for d in &mut deltas {
        if slack == 0 {
            break;
        }
        *d = 1;
        slack -= 1;
    }
    if slack != 0 {
        return Err(Error::InvalidParameters(format!(
            "{n} packets exceed the capacity of horizon {horizon}"
        )));
    }
    let counts: Vec<u64> = lengths
        .iter()
        .enumerate()
        .map(|(j, &l)| match j {
            0 => horizon + 1 - l,
            _ => horizon + deltas[j - 1] - l,
        })
        .collect();

    let mut slots: Vec<(u64, usize)> = counts
        .iter()
        .enumerate()
        .flat_map(|(j, &c)| (0..c).map(move |r| (r, j)))
        .collect();
    slots.sort_unstable();
    let state = State::new(slots.iter().map(|&(_, j)| paths[j].clone()).collect());
    let certificate = Certificate {
        below: horizon
            .checked_sub(1)
            .map_or(0, |c| max_packets_for_lengths(&all_lengths, c)),
        at: max_packets_for_lengths(&all_lengths, horizon),
    };
    Ok(OptimalPlan {
        paths,
        lengths,
        horizon,
        counts,
        deltas,
        state,
        certificate,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CertificateViolation {
    HorizonNotMinimal {
        below: u64,
        n: u64,
    },
    HorizonInfeasible {
        at: u64,
        n: u64,
    },
    CountMismatch {
        planned: u64,
        n: u64,
    },
    PathTooLong {
        path: PathChoice,
        length: Time,
    },
    Makespan {
        loaded: Time,
        horizon: Time,
    },
    Queueing {
        player: usize,
        layer: usize,
        wait: Time,
    },
    Invalid(String),
}

impl fmt::Display for CertificateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertificateViolation::HorizonNotMinimal { below, n } => write!(
                f,
                "horizon not minimal: {below} packets already fit one step earlier (n = {n})"
            ),
            CertificateViolation::HorizonInfeasible { at, n } => {
                write!(f, "horizon infeasible: only {at} of {n} packets fit")
            }
            CertificateViolation::CountMismatch { planned, n } => {
                write!(f, "plan sends {planned} packets, game has {n} players")
            }
            CertificateViolation::PathTooLong { path, length } => {
                write!(f, "path {path} of length {length} exceeds the horizon")
            }
            CertificateViolation::Makespan { loaded, horizon } => {
                write!(f, "loaded makespan {loaded} differs from horizon {horizon}")
            }
            CertificateViolation::Queueing {
                player,
                layer,
                wait,
            } => write!(f, "player {} waits {wait} in layer {layer}", player + 1),
            CertificateViolation::Invalid(msg) => write!(f, "plan does not load: {msg}"),
        }
    }
}

/// Re-derives every claim of `plan` from scratch.
pub fn optimality_certificate(
    plan: &OptimalPlan,
    game: &Game,
) -> std::result::Result<(), CertificateViolation> {
    let n = game.n as u64;
    let graph = &game.graph;
    let below = plan
        .horizon
        .checked_sub(1)
        .map_or(0, |c| max_packets(graph, c));
    if below >= n {
        return Err(CertificateViolation::HorizonNotMinimal { below, n });
    }
    let at = max_packets(graph, plan.horizon);
    if at < n {
        return Err(CertificateViolation::HorizonInfeasible { at, n });
    }
    let planned: u64 = plan.counts.iter().sum();
    if planned != n {
        return Err(CertificateViolation::CountMismatch { planned, n });
    }
    for path in &plan.paths {
        let length =
            path_length(graph, path).map_err(|e| CertificateViolation::Invalid(e.to_string()))?;
        if length > plan.horizon {
            return Err(CertificateViolation::PathTooLong {
                path: path.clone(),
                length,
            });
        }
    }
    let loaded =
        load(game, &plan.state).map_err(|e| CertificateViolation::Invalid(e.to_string()))?;
    if loaded.makespan != plan.horizon {
        return Err(CertificateViolation::Makespan {
            loaded: loaded.makespan,
            horizon: plan.horizon,
        });
    }
    for (player, waits) in loaded.waiting.iter().enumerate() {
        if let Some((l, &wait)) = waits.iter().enumerate().skip(1).find(|(_, &w)| w > 0) {
            return Err(CertificateViolation::Queueing {
                player,
                layer: l + 1,
                wait,
            });
        }
    }
    Ok(())
}
