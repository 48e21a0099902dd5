//! Graphs, games and strategy profiles.
//!
//! Edge and layer indices are 1-based throughout the public API, matching the
//! game and state file formats. Layers are stored sorted by non-decreasing
//! transit time; ties between equal-transit edges are resolved everywhere by
//! the index within the layer.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete time and transit durations.
pub type Time = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub layer: usize,
    pub index: usize,
    pub transit: Time,
    pub capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearMultigraph {
    layers: Vec<Vec<Edge>>,
    /// `input_order[j][p]` is the 1-based input position of the edge stored at
    /// sorted position `p` of layer `j`.
    input_order: Vec<Vec<usize>>,
}

impl LinearMultigraph {
    /// Builds a unit-capacity graph keeping the layers exactly as given.
    pub fn new(transits: Vec<Vec<Time>>) -> Self {
        let capacities = transits.iter().map(|l| vec![1; l.len()]).collect();
        Self::with_capacities(transits, capacities)
    }

    /// Builds a graph keeping the layers exactly as given; no sorting and no
    /// validation happens here (see [`validate_game`]).
    ///
    /// Missing capacity entries default to 1.
    pub fn with_capacities(transits: Vec<Vec<Time>>, capacities: Vec<Vec<u64>>) -> Self {
        let layers: Vec<Vec<Edge>> = transits
            .iter()
            .enumerate()
            .map(|(j, layer)| {
                layer
                    .iter()
                    .enumerate()
                    .map(|(p, &transit)| Edge {
                        layer: j + 1,
                        index: p + 1,
                        transit,
                        capacity: capacities
                            .get(j)
                            .and_then(|c| c.get(p))
                            .copied()
                            .unwrap_or(1),
                    })
                    .collect()
            })
            .collect();
        let input_order = layers.iter().map(|l| (1..=l.len()).collect()).collect();
        Self {
            layers,
            input_order,
        }
    }

    /// Builds a graph whose layers are stably sorted by transit time, recording
    /// where each edge sat in the input.
    pub fn sorted(transits: Vec<Vec<Time>>, capacities: Vec<Vec<u64>>) -> Self {
        let mut layers = Vec::with_capacity(transits.len());
        let mut input_order = Vec::with_capacity(transits.len());
        for (j, layer) in transits.iter().enumerate() {
            let mut order: Vec<usize> = (0..layer.len()).collect();
            order.sort_by_key(|&p| layer[p]);
            layers.push(
                order
                    .iter()
                    .enumerate()
                    .map(|(pos, &p)| Edge {
                        layer: j + 1,
                        index: pos + 1,
                        transit: layer[p],
                        capacity: capacities
                            .get(j)
                            .and_then(|c| c.get(p))
                            .copied()
                            .unwrap_or(1),
                    })
                    .collect(),
            );
            input_order.push(order.iter().map(|p| p + 1).collect());
        }
        Self {
            layers,
            input_order,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<Edge>] {
        &self.layers
    }

    /// Edges of the 1-based layer `layer`.
    pub fn layer(&self, layer: usize) -> &[Edge] {
        &self.layers[layer - 1]
    }

    pub fn edge(&self, layer: usize, index: usize) -> Option<&Edge> {
        self.layers
            .get(layer.checked_sub(1)?)?
            .get(index.checked_sub(1)?)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.layers.iter().flatten()
    }

    /// 1-based input position of the edge stored at `(layer, index)`.
    pub fn input_index(&self, layer: usize, index: usize) -> Option<usize> {
        self.input_order
            .get(layer.checked_sub(1)?)?
            .get(index.checked_sub(1)?)
            .copied()
    }

    /// Whether any layer was reordered relative to the input.
    pub fn was_reordered(&self) -> bool {
        self.input_order
            .iter()
            .any(|l| l.iter().enumerate().any(|(p, &q)| p + 1 != q))
    }

    pub fn has_unit_capacities(&self) -> bool {
        self.edges().all(|e| e.capacity == 1)
    }

    /// Number of distinct s-d paths, or `None` on overflow.
    pub fn path_count(&self) -> Option<u64> {
        self.layers
            .iter()
            .try_fold(1u64, |acc, l| acc.checked_mul(l.len() as u64))
    }

    pub fn transits(&self) -> Vec<Vec<Time>> {
        self.layers
            .iter()
            .map(|l| l.iter().map(|e| e.transit).collect())
            .collect()
    }

    pub fn capacities(&self) -> Vec<Vec<u64>> {
        self.layers
            .iter()
            .map(|l| l.iter().map(|e| e.capacity).collect())
            .collect()
    }

    /// Returns a copy of the graph without one edge; later edges of that layer
    /// shift down by one index.
    pub fn without_edge(&self, layer: usize, index: usize) -> Result<Self> {
        let edge = self
            .edge(layer, index)
            .ok_or(Error::NoSuchEdge { layer, index })?;
        let mut transits = self.transits();
        let mut capacities = self.capacities();
        transits[edge.layer - 1].remove(edge.index - 1);
        capacities[edge.layer - 1].remove(edge.index - 1);
        Ok(Self::with_capacities(transits, capacities))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Game {
    pub graph: LinearMultigraph,
    pub n: usize,
    pub starting_pattern: Vec<Time>,
}

impl Game {
    /// A game where all players start at time 0.
    pub fn new(graph: LinearMultigraph, n: usize) -> Self {
        Self {
            graph,
            n,
            starting_pattern: vec![0; n],
        }
    }

    pub fn with_pattern(graph: LinearMultigraph, starting_pattern: Vec<Time>) -> Self {
        Self {
            graph,
            n: starting_pattern.len(),
            starting_pattern,
        }
    }

    pub fn has_zero_pattern(&self) -> bool {
        self.starting_pattern.iter().all(|&a| a == 0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GameFile = serde_json::from_str(text)?;
        Ok(file.into())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&GameFile::from(self)).expect("game serializes")
    }
}

/// One edge choice per layer, as 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathChoice {
    pub edge_indices: Vec<usize>,
}

impl PathChoice {
    pub fn new(edge_indices: Vec<usize>) -> Self {
        Self { edge_indices }
    }

    pub fn uniform(index: usize, layers: usize) -> Self {
        Self::new(vec![index; layers])
    }

    pub fn len(&self) -> usize {
        self.edge_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_indices.is_empty()
    }

    /// Edge index chosen in the 1-based `layer`.
    pub fn at(&self, layer: usize) -> usize {
        self.edge_indices[layer - 1]
    }

    /// Checks that the path picks an existing edge in every layer.
    pub fn check(&self, graph: &LinearMultigraph) -> Result<()> {
        if self.len() != graph.num_layers() {
            return Err(Error::StateMismatch(format!(
                "path {self} has {} entries, graph has {} layers",
                self.len(),
                graph.num_layers()
            )));
        }
        for (j, &index) in self.edge_indices.iter().enumerate() {
            graph.edge(j + 1, index).ok_or(Error::NoSuchEdge {
                layer: j + 1,
                index,
            })?;
        }
        Ok(())
    }

    /// Every path of `graph` in lexicographic order.
    pub fn all(graph: &LinearMultigraph) -> Vec<PathChoice> {
        let mut out = vec![PathChoice::new(Vec::new())];
        for layer in graph.layers() {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (1..=layer.len()).map(move |e| {
                        let mut v = p.edge_indices.clone();
                        v.push(e);
                        PathChoice::new(v)
                    })
                })
                .collect();
        }
        out
    }
}

impl fmt::Display for PathChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (p, e) in self.edge_indices.iter().enumerate() {
            if p > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State {
    pub paths: Vec<PathChoice>,
}

impl State {
    pub fn new(paths: Vec<PathChoice>) -> Self {
        Self { paths }
    }

    /// Builds a state from rows of 1-based edge indices.
    pub fn from_rows(rows: &[&[usize]]) -> Self {
        Self::new(rows.iter().map(|r| PathChoice::new(r.to_vec())).collect())
    }

    pub fn check(&self, game: &Game) -> Result<()> {
        if self.paths.len() != game.n {
            return Err(Error::StateMismatch(format!(
                "state has {} paths, game has {} players",
                self.paths.len(),
                game.n
            )));
        }
        self.paths.iter().try_for_each(|p| p.check(&game.graph))
    }

    pub fn with_path(&self, player: usize, path: PathChoice) -> Self {
        let mut next = self.clone();
        next.paths[player] = path;
        next
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StateFile = serde_json::from_str(text)?;
        Ok(file.into())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&StateFile::from(self)).expect("state serializes")
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.paths.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

/// On-disk game format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameFile {
    pub layers: Vec<Vec<Time>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacities: Option<Vec<Vec<u64>>>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starting_pattern: Option<Vec<Time>>,
}

impl From<GameFile> for Game {
    fn from(file: GameFile) -> Self {
        let capacities = file.capacities.unwrap_or_default();
        let graph = LinearMultigraph::sorted(file.layers, capacities);
        let starting_pattern = file.starting_pattern.unwrap_or_else(|| vec![0; file.n]);
        Game {
            graph,
            n: file.n,
            starting_pattern,
        }
    }
}

impl From<&Game> for GameFile {
    fn from(game: &Game) -> Self {
        GameFile {
            layers: game.graph.transits(),
            capacities: (!game.graph.has_unit_capacities()).then(|| game.graph.capacities()),
            n: game.n,
            starting_pattern: (!game.has_zero_pattern()).then(|| game.starting_pattern.clone()),
        }
    }
}

/// On-disk state format: one row of 1-based edge indices per player.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateFile {
    pub paths: Vec<Vec<usize>>,
}

impl From<StateFile> for State {
    fn from(file: StateFile) -> Self {
        State::new(file.paths.into_iter().map(PathChoice::new).collect())
    }
}

impl From<&State> for StateFile {
    fn from(state: &State) -> Self {
        StateFile {
            paths: state.paths.iter().map(|p| p.edge_indices.clone()).collect(),
        }
    }
}

/// A broken game invariant, with its location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoLayers,
    EmptyLayer {
        layer: usize,
    },
    LayerNotSorted {
        layer: usize,
    },
    ZeroTransit {
        layer: usize,
        index: usize,
    },
    ZeroCapacity {
        layer: usize,
        index: usize,
    },
    BadEdgeIndex {
        layer: usize,
        position: usize,
        found: usize,
    },
    NoPlayers,
    PatternLength {
        expected: usize,
        found: usize,
    },
    PatternNotMonotone {
        player: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoLayers => write!(f, "graph has no layers"),
            Violation::EmptyLayer { layer } => write!(f, "layer {layer} is empty"),
            Violation::LayerNotSorted { layer } => write!(f, "layer {layer} not sorted"),
            Violation::ZeroTransit { layer, index } => {
                write!(f, "edge {layer}:{index} has zero transit time")
            }
            Violation::ZeroCapacity { layer, index } => {
                write!(f, "edge {layer}:{index} has zero capacity")
            }
            Violation::BadEdgeIndex {
                layer,
                position,
                found,
            } => write!(
                f,
                "layer {layer} position {position} carries edge index {found}"
            ),
            Violation::NoPlayers => write!(f, "game has no players"),
            Violation::PatternLength { expected, found } => write!(
                f,
                "starting pattern has length {found}, expected {expected}"
            ),
            Violation::PatternNotMonotone { player } => {
                write!(f, "starting pattern not non-decreasing (player {player})")
            }
        }
    }
}

/// Collects every broken invariant of `game`; an empty list means the game is
/// valid.
pub fn validate_game(game: &Game) -> Vec<Violation> {
    let mut out = Vec::new();
    let graph = &game.graph;
    if graph.num_layers() == 0 {
        out.push(Violation::NoLayers);
    }
    for (j, layer) in graph.layers().iter().enumerate() {
        let lj = j + 1;
        if layer.is_empty() {
            out.push(Violation::EmptyLayer { layer: lj });
        }
        for (p, e) in layer.iter().enumerate() {
            if e.index != p + 1 || e.layer != lj {
                out.push(Violation::BadEdgeIndex {
                    layer: lj,
                    position: p + 1,
                    found: e.index,
                });
            }
            if e.transit == 0 {
                out.push(Violation::ZeroTransit {
                    layer: lj,
                    index: e.index,
                });
            }
            if e.capacity == 0 {
                out.push(Violation::ZeroCapacity {
                    layer: lj,
                    index: e.index,
                });
            }
        }
        if layer.windows(2).any(|w| w[0].transit > w[1].transit) {
            out.push(Violation::LayerNotSorted { layer: lj });
        }
    }
    if game.n == 0 {
        out.push(Violation::NoPlayers);
    }
    if game.starting_pattern.len() != game.n {
        out.push(Violation::PatternLength {
            expected: game.n,
            found: game.starting_pattern.len(),
        });
    }
    if let Some(p) = game.starting_pattern.windows(2).position(|w| w[0] > w[1]) {
        out.push(Violation::PatternNotMonotone { player: p + 2 });
    }
    out
}

/// [`validate_game`] as a `Result`, for operations that require a valid game.
pub fn ensure_valid(game: &Game) -> Result<()> {
    let violations = validate_game(game);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidGame(violations))
    }
}

pub fn path_length(graph: &LinearMultigraph, path: &PathChoice) -> Result<Time> {
    path.edge_indices
        .iter()
        .enumerate()
        .map(|(j, &index)| {
            graph
                .edge(j + 1, index)
                .map(|e| e.transit)
                .ok_or(Error::NoSuchEdge {
                    layer: j + 1,
                    index,
                })
        })
        .sum()
}

/// The j-th path of the shortest-path deletion sequence. Path length
/// decomposes over layers, so this is edge `j` of every sorted layer.
pub fn kth_cheapest_path(graph: &LinearMultigraph, j: usize) -> Result<PathChoice> {
    if j == 0 {
        return Err(Error::InvalidParameters("path rank starts at 1".into()));
    }
    if let Some(layer) = graph.layers().iter().position(|l| l.len() < j) {
        return Err(Error::DecompositionExhausted {
            j,
            layer: layer + 1,
        });
    }
    Ok(PathChoice::uniform(j, graph.num_layers()))
}

/// Number of edge-disjoint paths in the deletion sequence.
pub fn disjoint_path_count(graph: &LinearMultigraph) -> usize {
    graph.layers().iter().map(Vec::len).min().unwrap_or(0)
}
