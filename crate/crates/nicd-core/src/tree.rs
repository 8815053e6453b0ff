//! NICD instances on trees and their exact evaluation.
//!
//! One vertex of a tree receives a uniform n-bit string and every edge
//! acts as an independent binary symmetric channel with correlation
//! `rho`. The induced joint law on sign vectors per coordinate is
//! `P(alpha) = 1/2 (1/2 + rho/2)^A (1/2 - rho/2)^B` with `A`/`B` the
//! number of agreeing/disagreeing neighbor pairs. Players sit on a
//! subset of vertices, each applies a balanced Boolean function to its
//! string, and the protocol succeeds when all outputs coincide.
//!
//! Success probabilities are computed exactly by message passing over
//! the tree (cost `O(|V| n 2^n)`), with a full `2^(n |V|)` enumeration
//! kept alongside as an independent oracle. On top of the evaluator sit
//! the closed forms for paths and stars, Kleitman-style monotone
//! shifting, exhaustive protocol searches, and the star-plus-path scan
//! that exhibits instances where no single shared function is optimal.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use crate::cube::{BooleanFunction, CorrelationParam, CubeError, noise_in_place};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TreeError {
    #[error("edge set does not form a tree: {0}")]
    NotATree(String),
    #[error("instance needs at least one player")]
    NoPlayers,
    #[error("vertex {0} outside the vertex range")]
    BadVertex(usize),
    #[error("function at vertex {vertex} has {got} coordinates, instance wants {expected}")]
    ArityMismatch {
        vertex: usize,
        expected: usize,
        got: usize,
    },
    #[error("player {0} has no function in the protocol")]
    MissingPlayerFunction(usize),
    #[error("protocol assigns a function to non-player vertex {0}")]
    UnexpectedPlayerFunction(usize),
    #[error("function at vertex {0} is unbalanced; pass the explicit override to allow this")]
    UnbalancedFunction(usize),
    #[error("brute force needs n * |V| <= 24 bits, got {bits}")]
    TooLargeForBruteForce { bits: usize },
    #[error("family {family} is not enumerable at n = {n}")]
    FamilyTooLarge { family: String, n: usize },
    #[error("exhaustive joint search limited to n <= 2 and at most 4 players")]
    SearchTooLarge,
    #[error(transparent)]
    Encoding(#[from] CubeError),
    #[error("bad instance file: {0}")]
    BadFile(String),
}

/// An NICD instance: tree, channel correlation, string length, players.
#[derive(Debug, Clone)]
pub struct NicdInstance {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    rho: CorrelationParam,
    n: usize,
    players: BTreeSet<usize>,
}

impl NicdInstance {
    pub fn new(
        vertex_count: usize,
        edges: Vec<(usize, usize)>,
        rho: CorrelationParam,
        n: usize,
        players: BTreeSet<usize>,
    ) -> Result<Self, TreeError> {
        if vertex_count == 0 {
            return Err(TreeError::NotATree("no vertices".into()));
        }
        if edges.len() != vertex_count - 1 {
            return Err(TreeError::NotATree(format!(
                "{} edges on {vertex_count} vertices",
                edges.len()
            )));
        }
        let mut adjacency = vec![Vec::new(); vertex_count];
        let mut seen = BTreeSet::new();
        for &(u, v) in &edges {
            if u >= vertex_count || v >= vertex_count {
                return Err(TreeError::BadVertex(u.max(v)));
            }
            if u == v {
                return Err(TreeError::NotATree(format!("self-loop at {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(TreeError::NotATree(format!("duplicate edge {u}-{v}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        // Connectivity: |E| = |V| - 1 plus connected means tree.
        let mut visited = vec![false; vertex_count];
        let mut stack = vec![0usize];
        visited[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adjacency[u] {
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        if count != vertex_count {
            return Err(TreeError::NotATree("graph is disconnected".into()));
        }
        if players.is_empty() {
            return Err(TreeError::NoPlayers);
        }
        if let Some(&bad) = players.iter().find(|&&v| v >= vertex_count) {
            return Err(TreeError::BadVertex(bad));
        }
        if n == 0 || n > crate::cube::MAX_COORDS {
            return Err(TreeError::Encoding(CubeError::BadCoordinateCount(n)));
        }
        Ok(NicdInstance {
            vertex_count,
            edges,
            adjacency,
            rho,
            n,
            players,
        })
    }

    /// Path with `edge_count` edges; vertices 0..=edge_count in a line.
    /// `players = None` puts a player on every vertex.
    pub fn path(
        edge_count: usize,
        rho: CorrelationParam,
        n: usize,
        players: Option<BTreeSet<usize>>,
    ) -> Result<Self, TreeError> {
        let vertex_count = edge_count + 1;
        let edges = (0..edge_count).map(|i| (i, i + 1)).collect();
        let players = players.unwrap_or_else(|| (0..vertex_count).collect());
        Self::new(vertex_count, edges, rho, n, players)
    }

    /// Star with `leaves` leaves around center 0; players default to the
    /// leaves only.
    pub fn star(
        leaves: usize,
        rho: CorrelationParam,
        n: usize,
        players: Option<BTreeSet<usize>>,
    ) -> Result<Self, TreeError> {
        let vertex_count = leaves + 1;
        let edges = (1..=leaves).map(|v| (0, v)).collect();
        let players = players.unwrap_or_else(|| (1..=leaves).collect());
        Self::new(vertex_count, edges, rho, n, players)
    }

    /// Star with `k1` leaves at center 0 plus a path of `k2` extra
    /// vertices hanging off the center; every vertex is a player.
    pub fn star_plus_path(
        k1: usize,
        k2: usize,
        rho: CorrelationParam,
        n: usize,
    ) -> Result<Self, TreeError> {
        let vertex_count = 1 + k1 + k2;
        let mut edges: Vec<(usize, usize)> = (1..=k1).map(|v| (0, v)).collect();
        for i in 0..k2 {
            let from = if i == 0 { 0 } else { k1 + i };
            edges.push((from, k1 + i + 1));
        }
        let players = (0..vertex_count).collect();
        Self::new(vertex_count, edges, rho, n, players)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn rho(&self) -> CorrelationParam {
        self.rho
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn players(&self) -> &BTreeSet<usize> {
        &self.players
    }
}

/// Assignment of one balanced Boolean function to each player vertex.
/// Unbalanced functions are rejected unless the explicit override
/// constructor is used; the override is recorded and surfaced.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    functions: BTreeMap<usize, BooleanFunction>,
    allow_unbalanced: bool,
}

impl Protocol {
    pub fn new(functions: BTreeMap<usize, BooleanFunction>) -> Result<Self, TreeError> {
        if let Some((&v, _)) = functions.iter().find(|(_, f)| !f.is_balanced()) {
            return Err(TreeError::UnbalancedFunction(v));
        }
        Ok(Protocol {
            functions,
            allow_unbalanced: false,
        })
    }

    /// Exploratory constructor that admits unbalanced functions.
    pub fn new_with_unbalanced(functions: BTreeMap<usize, BooleanFunction>) -> Self {
        Protocol {
            functions,
            allow_unbalanced: true,
        }
    }

    /// Every player applies the same function.
    pub fn simple(players: &BTreeSet<usize>, f: BooleanFunction) -> Result<Self, TreeError> {
        Self::new(players.iter().map(|&v| (v, f.clone())).collect())
    }

    pub fn function(&self, vertex: usize) -> Option<&BooleanFunction> {
        self.functions.get(&vertex)
    }

    pub fn functions(&self) -> &BTreeMap<usize, BooleanFunction> {
        &self.functions
    }

    pub fn allows_unbalanced(&self) -> bool {
        self.allow_unbalanced
    }

    pub fn is_simple(&self) -> bool {
        let mut iter = self.functions.values();
        match iter.next() {
            None => true,
            Some(first) => iter.all(|f| f.as_cube() == first.as_cube()),
        }
    }

    /// All players' functions negated (success is invariant under this).
    pub fn negated(&self) -> Protocol {
        Protocol {
            functions: self
                .functions
                .iter()
                .map(|(&v, f)| (v, f.negated()))
                .collect(),
            allow_unbalanced: self.allow_unbalanced,
        }
    }
}

fn validate_protocol(inst: &NicdInstance, prot: &Protocol) -> Result<(), TreeError> {
    for &v in &inst.players {
        match prot.function(v) {
            None => return Err(TreeError::MissingPlayerFunction(v)),
            Some(f) if f.n() != inst.n => {
                return Err(TreeError::ArityMismatch {
                    vertex: v,
                    expected: inst.n,
                    got: f.n(),
                });
            }
            _ => {}
        }
    }
    if let Some((&v, _)) = prot
        .functions
        .iter()
        .find(|(v, _)| !inst.players.contains(v))
    {
        return Err(TreeError::UnexpectedPlayerFunction(v));
    }
    Ok(())
}

/// Probability that all players output the same bit, by message passing
/// from the leaves to `root`. The value does not depend on the root.
pub fn success_probability_rooted(
    inst: &NicdInstance,
    prot: &Protocol,
    root: usize,
) -> Result<f64, TreeError> {
    validate_protocol(inst, prot)?;
    if root >= inst.vertex_count {
        return Err(TreeError::BadVertex(root));
    }
    let len = 1usize << inst.n;
    let rho = inst.rho.rho();

    // Iterative post-order: parents listed after all their children.
    let mut parent = vec![usize::MAX; inst.vertex_count];
    let mut order = Vec::with_capacity(inst.vertex_count);
    let mut stack = vec![root];
    let mut seen = vec![false; inst.vertex_count];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        order.push(u);
        for &v in &inst.adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = u;
                stack.push(v);
            }
        }
    }

    let mut total = 0.0;
    for b in [1.0, -1.0] {
        let mut messages: Vec<Option<Vec<f64>>> = vec![None; inst.vertex_count];
        for &u in order.iter().rev() {
            let mut msg = match prot.function(u) {
                Some(f) => f.level_set_indicator(b).values().to_vec(),
                None => vec![1.0; len],
            };
            for &v in &inst.adjacency[u] {
                if v != parent[u] {
                    let mut child = messages[v].take().expect("post-order guarantees children");
                    noise_in_place(&mut child, inst.n, rho);
                    for (m, c) in msg.iter_mut().zip(&child) {
                        *m *= c;
                    }
                }
            }
            messages[u] = Some(msg);
        }
        let root_msg = messages[root].take().expect("root message");
        total += root_msg.iter().sum::<f64>() / len as f64;
    }
    Ok(total)
}

/// Probability that the protocol succeeds (all outputs agree).
pub fn success_probability(inst: &NicdInstance, prot: &Protocol) -> Result<f64, TreeError> {
    let root = *inst.players.iter().next().expect("validated nonempty");
    success_probability_rooted(inst, prot, root)
}

/// Independent oracle: enumerate all `2^(n |V|)` joint string
/// assignments under the product channel measure and add up the success
/// events. Exponential; capped at 24 bits total.
pub fn brute_force_success(inst: &NicdInstance, prot: &Protocol) -> Result<f64, TreeError> {
    validate_protocol(inst, prot)?;
    let bits = inst.n * inst.vertex_count;
    if bits > 24 {
        return Err(TreeError::TooLargeForBruteForce { bits });
    }
    let rho = inst.rho.rho();
    let agree = 0.5 + 0.5 * rho;
    let disagree = 0.5 - 0.5 * rho;
    let max_pairs = inst.n * inst.edges.len();
    let mut pow_a = vec![1.0; max_pairs + 1];
    let mut pow_d = vec![1.0; max_pairs + 1];
    for i in 1..=max_pairs {
        pow_a[i] = pow_a[i - 1] * agree;
        pow_d[i] = pow_d[i - 1] * disagree;
    }
    let string_mask = (1usize << inst.n) - 1;
    let base = 1.0 / (1usize << inst.n) as f64;
    let players: Vec<(usize, &BooleanFunction)> = inst
        .players
        .iter()
        .map(|&v| (v, prot.function(v).expect("validated")))
        .collect();

    let mut total = 0.0;
    for joint in 0..1usize << bits {
        let string = |v: usize| joint >> (v * inst.n) & string_mask;
        let first = players[0].1.value(string(players[0].0));
        if players[1..]
            .iter()
            .all(|(v, f)| f.value(string(*v)) == first)
        {
            let mut disagreements = 0usize;
            for &(u, v) in &inst.edges {
                disagreements += (string(u) ^ string(v)).count_ones() as usize;
            }
            total += base * pow_a[max_pairs - disagreements] * pow_d[disagreements];
        }
    }
    Ok(total)
}

/// `prod_j (1/2 + rho^gap_j / 2)`: the success probability of a simple
/// dictator protocol on a path whose consecutive players sit `gap_j`
/// edges apart. Accumulated in log space so very long paths do not
/// underflow prematurely.
pub fn path_closed_form(gaps: &[usize], rho: CorrelationParam) -> f64 {
    assert!(!gaps.is_empty(), "need at least one gap");
    let r = rho.rho();
    let log_sum: f64 = gaps
        .iter()
        .map(|&g| {
            assert!(g >= 1, "gaps are positive");
            (0.5 + 0.5 * r.powi(g as i32)).ln()
        })
        .sum();
    log_sum.exp()
}

/// `(1/2 + rho/2)^k + (1/2 - rho/2)^k`: success of the simple dictator
/// protocol on a star with players at the `k` leaves.
pub fn star_dictator_closed_form(k: usize, rho: CorrelationParam) -> f64 {
    assert!(k >= 1);
    let a = 0.5 + 0.5 * rho.rho();
    let b = 0.5 - 0.5 * rho.rho();
    let first = (k as f64 * a.ln()).exp();
    let second = if b == 0.0 {
        0.0
    } else {
        (k as f64 * b.ln()).exp()
    };
    first + second
}

/// Success of the simple protocol `f` on a star with players at the `k`
/// leaves only: `E[q_+^k] + E[q_-^k]` with `q_b = T_rho 1_{f=b}` on the
/// center string.
pub fn star_leaves_simple_success(f: &BooleanFunction, rho: CorrelationParam, k: usize) -> f64 {
    assert!(k >= 1);
    let mut total = 0.0;
    for b in [1.0, -1.0] {
        let mut q = f.level_set_indicator(b).values().to_vec();
        noise_in_place(&mut q, f.n(), rho.rho());
        total += q.iter().map(|v| v.powi(k as i32)).sum::<f64>() / q.len() as f64;
    }
    total
}

/// Success of the simple protocol `f` on a star with all `k + 1`
/// vertices (center included) playing: `2 E[1_{f=+1} q_+^k]` by the
/// antisymmetry of the two agreement events... computed for both signs
/// explicitly so unbalanced exploratory functions stay correct.
pub fn star_all_vertices_simple_success(
    f: &BooleanFunction,
    rho: CorrelationParam,
    k: usize,
) -> f64 {
    assert!(k >= 1);
    let mut total = 0.0;
    for b in [1.0, -1.0] {
        let ind = f.level_set_indicator(b);
        let mut q = ind.values().to_vec();
        noise_in_place(&mut q, f.n(), rho.rho());
        total += ind
            .values()
            .iter()
            .zip(&q)
            .map(|(i, v)| i * v.powi(k as i32))
            .sum::<f64>()
            / q.len() as f64;
    }
    total
}

/// One Kleitman down-shift on `coordinate` (1-based): wherever a player
/// function takes opposite values on a pair differing only there, the
/// pair is reordered to `-1` on the low side and `+1` on the high side.
/// Balance is preserved; iterating over all coordinates yields monotone
/// functions without ever lowering the success probability.
pub fn monotone_shift(prot: &Protocol, coordinate: usize) -> Protocol {
    assert!(coordinate >= 1);
    let functions = prot
        .functions
        .iter()
        .map(|(&v, f)| (v, shift_function(f, coordinate)))
        .collect();
    Protocol {
        functions,
        allow_unbalanced: prot.allow_unbalanced,
    }
}

fn shift_function(f: &BooleanFunction, coordinate: usize) -> BooleanFunction {
    let bit = 1usize << (coordinate - 1);
    let mut values = f.as_cube().values().to_vec();
    let mut changed = false;
    for high in 0..values.len() {
        if high & bit == 0 {
            // Index with the bit clear is the x_j = +1 point.
            let low = high | bit;
            if values[high] != values[low] && values[high] < values[low] {
                values[low] = -1.0;
                values[high] = 1.0;
                changed = true;
            }
        }
    }
    if !changed {
        return f.clone();
    }
    BooleanFunction::from_table(crate::cube::CubeFunction::new(f.n(), values).expect("same shape"))
        .expect("shift keeps values in {-1,1}")
}

/// Shift every coordinate in turn until a full pass changes nothing.
/// Returns the shifted protocol and the number of changing passes.
pub fn make_monotone(prot: &Protocol, n: usize) -> (Protocol, usize) {
    let mut current = prot.clone();
    let mut passes = 0;
    loop {
        let mut next = current.clone();
        for j in 1..=n {
            next = monotone_shift(&next, j);
        }
        if next == current {
            return (current, passes);
        }
        current = next;
        passes += 1;
    }
}

/// Candidate families for simple-protocol searches.
#[derive(Debug, Clone)]
pub enum ProtocolFamily {
    /// Every balanced function; enumerable for n <= 4.
    AllBalanced,
    /// Every monotone balanced function; enumerable for n <= 5.
    MonotoneBalanced,
    /// An explicit list.
    Named(Vec<BooleanFunction>),
}

/// All balanced functions on n coordinates, ordered by truth table.
pub fn enumerate_balanced(n: usize) -> Result<Vec<BooleanFunction>, TreeError> {
    if n == 0 || n > 4 {
        return Err(TreeError::FamilyTooLarge {
            family: "all balanced".into(),
            n,
        });
    }
    let len = 1usize << n;
    let half = len / 2;
    let mut out = Vec::new();
    for mask in 0..1u64 << len {
        if mask.count_ones() as usize == half {
            out.push(BooleanFunction::from_mask(n, mask)?);
        }
    }
    out.sort_by_key(|a| a.truth_table());
    Ok(out)
}

/// All monotone balanced functions on n coordinates (n <= 5), built by
/// the recursive pairing of monotone functions on one fewer coordinate.
pub fn enumerate_monotone_balanced(n: usize) -> Result<Vec<BooleanFunction>, TreeError> {
    if n == 0 || n > 5 {
        return Err(TreeError::FamilyTooLarge {
            family: "monotone balanced".into(),
            n,
        });
    }
    // Work in subset space: h(mask) monotone under inclusion, where
    // mask bit set means coordinate = -1; the cube function is
    // f(index) = h(full ^ index) mapped back through the complement, so
    // enumerate g with g(S) <= g(T) for S subset of T and anti-map.
    fn monotone_tables(vars: usize) -> Vec<u64> {
        if vars == 0 {
            return vec![0b0, 0b1];
        }
        let prev = monotone_tables(vars - 1);
        let half = 1u64 << (vars - 1);
        let mut out = Vec::new();
        for &lo in &prev {
            for &hi in &prev {
                // Adding the new element may only raise the value.
                if lo & !hi == 0 {
                    out.push(lo | (hi << half));
                }
            }
        }
        out
    }
    let len = 1usize << n;
    let half = (len / 2) as u32;
    let mut out = Vec::new();
    for table in monotone_tables(n) {
        if table.count_ones() != half {
            continue;
        }
        // table is monotone in "set of raised coordinates"; our index
        // convention lowers a coordinate per set bit, so complement.
        let mut mask = 0u64;
        for index in 0..len {
            let raised = (len - 1) ^ index;
            if table >> raised & 1 == 1 {
                mask |= 1 << index;
            }
        }
        out.push(BooleanFunction::from_mask(n, mask)?);
    }
    debug_assert!(out.iter().all(|f| f.is_monotone() && f.is_balanced()));
    out.sort_by_key(|a| a.truth_table());
    Ok(out)
}

/// Best simple protocol over a candidate family: the argmax and its
/// success probability. Ties break toward the smallest truth table, so
/// the result is deterministic.
pub fn best_simple_protocol(
    inst: &NicdInstance,
    family: &ProtocolFamily,
) -> Result<(BooleanFunction, f64), TreeError> {
    let candidates = match family {
        ProtocolFamily::AllBalanced => enumerate_balanced(inst.n)?,
        ProtocolFamily::MonotoneBalanced => enumerate_monotone_balanced(inst.n)?,
        ProtocolFamily::Named(list) => list.clone(),
    };
    if candidates.is_empty() {
        return Err(TreeError::FamilyTooLarge {
            family: "empty family".into(),
            n: inst.n,
        });
    }
    let mut best: Option<(BooleanFunction, f64)> = None;
    for f in candidates {
        let prot = Protocol::simple(&inst.players, f.clone())?;
        let value = success_probability(inst, &prot)?;
        let better = match &best {
            None => true,
            Some((bf, bv)) => value > *bv || (value == *bv && f.truth_table() < bf.truth_table()),
        };
        if better {
            best = Some((f, value));
        }
    }
    Ok(best.expect("nonempty family"))
}

/// Result of the exhaustive joint search over all balanced protocols.
#[derive(Debug, Clone)]
pub struct ExhaustiveSearch {
    /// The candidate functions, in truth-table order.
    pub candidates: Vec<BooleanFunction>,
    /// Maximum success probability.
    pub max: f64,
    /// Every assignment attaining the maximum within 1e-12, as candidate
    /// indices in player order.
    pub maximizers: Vec<Vec<usize>>,
}

/// Search the full product family (every player choosing any balanced
/// function independently). Exponential: restricted to n <= 2 and at
/// most 4 players.
pub fn best_protocol_exhaustive(inst: &NicdInstance) -> Result<ExhaustiveSearch, TreeError> {
    if inst.n > 2 || inst.players.len() > 4 {
        return Err(TreeError::SearchTooLarge);
    }
    let candidates = enumerate_balanced(inst.n)?;
    let players: Vec<usize> = inst.players.iter().copied().collect();
    let mut assignment = vec![0usize; players.len()];
    let mut values: Vec<(Vec<usize>, f64)> = Vec::new();
    loop {
        let functions: BTreeMap<usize, BooleanFunction> = players
            .iter()
            .zip(&assignment)
            .map(|(&v, &c)| (v, candidates[c].clone()))
            .collect();
        let prot = Protocol::new(functions)?;
        let value = success_probability(inst, &prot)?;
        values.push((assignment.clone(), value));

        let mut pos = 0;
        loop {
            if pos == assignment.len() {
                let max = values.iter().map(|(_, v)| *v).fold(f64::MIN, f64::max);
                let maximizers = values
                    .iter()
                    .filter(|(_, v)| (v - max).abs() <= 1e-12)
                    .map(|(a, _)| a.clone())
                    .collect();
                return Ok(ExhaustiveSearch {
                    candidates,
                    max,
                    maximizers,
                });
            }
            assignment[pos] += 1;
            if assignment[pos] < candidates.len() {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// One hit of the counterexample scan: a star-plus-path instance where
/// the mixed protocol strictly beats every simple balanced protocol.
#[derive(Debug, Clone)]
pub struct CounterexampleRow {
    pub k1: usize,
    pub k2: usize,
    pub mixed: f64,
    pub best_simple: f64,
    /// Truth table of the best simple competitor.
    pub best_encoding: String,
}

#[derive(Debug, Clone)]
pub struct CounterexampleReport {
    pub rho: f64,
    pub n: usize,
    pub k1_max: usize,
    pub k2_max: usize,
    pub rows: Vec<CounterexampleRow>,
}

/// Success table of a star-plus-path protocol that applies `leaf` at
/// the `k1` leaves and `anchor` at the center and the `k2` path
/// vertices, for every `k1 <= k1_max`, `k2 <= k2_max` at once.
///
/// Rooted at the center, the message product factorizes as
/// `E[1_{anchor=b} q_b^k1 h_{b,k2}]` with `q_b = T_rho 1_{leaf=b}` and
/// `h_(b,j) = T_rho (1_{anchor=b} h_(b,j-1))`, which the scan fills
/// incrementally. Indexing: `table[k1 * (k2_max+1) + k2]`.
fn star_path_success_table(
    leaf: &BooleanFunction,
    anchor: &BooleanFunction,
    rho: f64,
    k1_max: usize,
    k2_max: usize,
) -> Vec<f64> {
    let n = leaf.n();
    let len = 1usize << n;
    let cols = k2_max + 1;
    let mut table = vec![0.0; (k1_max + 1) * cols];
    for b in [1.0, -1.0] {
        let leaf_ind = leaf.level_set_indicator(b);
        let anchor_ind = anchor.level_set_indicator(b);
        let mut q = leaf_ind.values().to_vec();
        noise_in_place(&mut q, n, rho);
        let mut h = vec![1.0; len];
        let mut g = vec![0.0; len];
        for k2 in 0..=k2_max {
            if k2 > 0 {
                for (hv, av) in h.iter_mut().zip(anchor_ind.values()) {
                    *hv *= av;
                }
                noise_in_place(&mut h, n, rho);
            }
            for ((gv, hv), av) in g.iter_mut().zip(&h).zip(anchor_ind.values()) {
                *gv = hv * av;
            }
            for k1 in 0..=k1_max {
                if k1 > 0 {
                    for (gv, qv) in g.iter_mut().zip(&q) {
                        *gv *= qv;
                    }
                }
                table[k1 * cols + k2] += g.iter().sum::<f64>() / len as f64;
            }
        }
    }
    table
}

/// Scan star-plus-path instances (players everywhere) comparing the
/// mixed protocol -- dictator of coordinate 1 on the center and path,
/// majority of the last three coordinates on the leaves -- against the
/// best simple protocol over all balanced functions on `n` bits.
/// Reports every `(k1, k2)` in range where mixed strictly wins.
///
/// `jobs` bounds worker parallelism; results are identical for every
/// value because partial maxima merge by (value, truth-table) order.
pub fn counterexample_search(
    rho: CorrelationParam,
    n: usize,
    k1_max: usize,
    k2_max: usize,
    jobs: usize,
) -> Result<CounterexampleReport, TreeError> {
    assert!(n >= 4, "the mixed protocol needs n >= 4");
    let candidates = enumerate_balanced(n)?;
    // Success is invariant under global sign flips, so one
    // representative per {f, -f} pair suffices: keep f(all +1) = +1.
    let representatives: Vec<&BooleanFunction> =
        candidates.iter().filter(|f| f.value(0) == 1.0).collect();

    let cols = k2_max + 1;
    let cells = (k1_max + 1) * cols;
    let merge = |best: &mut Vec<(f64, String)>, table: &[f64], encoding: &str| {
        for (cell, &value) in best.iter_mut().zip(table) {
            if value > cell.0 || (value == cell.0 && *encoding < *cell.1) {
                *cell = (value, encoding.to_string());
            }
        }
    };

    let jobs = jobs.max(1).min(representatives.len());
    let chunk_size = representatives.len().div_ceil(jobs);
    let partials: Vec<Vec<(f64, String)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = representatives
            .chunks(chunk_size)
            .map(|chunk| {
                scope.spawn(move || {
                    let mut best = vec![(f64::MIN, String::new()); cells];
                    for f in chunk {
                        let table = star_path_success_table(f, f, rho.rho(), k1_max, k2_max);
                        // Report the lexicographically smaller of the
                        // sign pair; both attain the same value.
                        let enc = f.truth_table().min(f.negated().truth_table());
                        merge(&mut best, &table, &enc);
                    }
                    best
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scan worker"))
            .collect()
    });
    let mut best = vec![(f64::MIN, String::new()); cells];
    for partial in partials {
        for (cell, candidate) in best.iter_mut().zip(partial) {
            if candidate.0 > cell.0 || (candidate.0 == cell.0 && candidate.1 < cell.1) {
                *cell = candidate;
            }
        }
    }

    let leaf = BooleanFunction::majority_of(n, &[n - 2, n - 1, n])?;
    let anchor = BooleanFunction::dictator(n, 1)?;
    let mixed_table = star_path_success_table(&leaf, &anchor, rho.rho(), k1_max, k2_max);

    let mut rows = Vec::new();
    for k1 in 0..=k1_max {
        for k2 in 0..=k2_max {
            let mixed = mixed_table[k1 * cols + k2];
            let (simple, ref encoding) = best[k1 * cols + k2];
            if mixed > simple + 1e-12 {
                rows.push(CounterexampleRow {
                    k1,
                    k2,
                    mixed,
                    best_simple: simple,
                    best_encoding: encoding.clone(),
                });
            }
        }
    }
    Ok(CounterexampleReport {
        rho: rho.rho(),
        n,
        k1_max,
        k2_max,
        rows,
    })
}

/// On-disk instance description. Vertices are 0-based; the optional
/// protocol maps vertex ids (as strings, JSON-object style) to the
/// textual function encodings of [`BooleanFunction::parse`].
#[derive(Debug, Clone, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub rho: f64,
    pub edges: Vec<[usize; 2]>,
    pub players: Vec<usize>,
    #[serde(default)]
    pub protocol: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub allow_unbalanced: bool,
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, TreeError> {
        serde_json::from_str(text).map_err(|e| TreeError::BadFile(e.to_string()))
    }

    pub fn to_instance(&self) -> Result<(NicdInstance, Option<Protocol>), TreeError> {
        let vertex_count = self
            .edges
            .iter()
            .flat_map(|e| e.iter().copied())
            .chain(self.players.iter().copied())
            .max()
            .map_or(1, |m| m + 1);
        let rho = CorrelationParam::new(self.rho).map_err(TreeError::Encoding)?;
        let inst = NicdInstance::new(
            vertex_count,
            self.edges.iter().map(|e| (e[0], e[1])).collect(),
            rho,
            self.n,
            self.players.iter().copied().collect(),
        )?;
        let prot = match &self.protocol {
            None => None,
            Some(map) => {
                let mut functions = BTreeMap::new();
                for (key, encoding) in map {
                    let vertex: usize = key
                        .parse()
                        .map_err(|_| TreeError::BadFile(format!("bad vertex id {key:?}")))?;
                    functions.insert(vertex, BooleanFunction::parse(self.n, encoding)?);
                }
                Some(if self.allow_unbalanced {
                    Protocol::new_with_unbalanced(functions)
                } else {
                    Protocol::new(functions)?
                })
            }
        };
        Ok((inst, prot))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn corr(rho: f64) -> CorrelationParam {
        CorrelationParam::new(rho).unwrap()
    }

    fn dict(n: usize, j: usize) -> BooleanFunction {
        BooleanFunction::dictator(n, j).unwrap()
    }

    fn random_balanced(rng: &mut Rng, n: usize) -> BooleanFunction {
        let len = 1usize << n;
        let mut values = vec![1.0; len / 2];
        values.extend(vec![-1.0; len / 2]);
        rng.shuffle(&mut values);
        BooleanFunction::from_table(crate::cube::CubeFunction::new(n, values).unwrap()).unwrap()
    }

    fn random_tree(rng: &mut Rng, vertices: usize) -> Vec<(usize, usize)> {
        (1..vertices).map(|v| (rng.below(v), v)).collect()
    }

    #[test]
    fn tree_validation_rejects_malformed_graphs() {
        let rho = corr(0.5);
        // Cycle: 3 vertices, 3 edges.
        let err = NicdInstance::new(3, vec![(0, 1), (1, 2), (2, 0)], rho, 1, [0].into());
        assert!(matches!(err, Err(TreeError::NotATree(_))));
        // Disconnected: 4 vertices split in two pairs plus a duplicate.
        let err = NicdInstance::new(4, vec![(0, 1), (2, 3), (0, 1)], rho, 1, [0].into());
        assert!(matches!(err, Err(TreeError::NotATree(_))));
        let err = NicdInstance::new(2, vec![(0, 0)], rho, 1, [0].into());
        assert!(matches!(err, Err(TreeError::NotATree(_))));
        let err = NicdInstance::new(2, vec![(0, 1)], rho, 1, BTreeSet::new());
        assert!(matches!(err, Err(TreeError::NoPlayers)));
    }

    #[test]
    fn protocol_balance_is_enforced() {
        let n = 2;
        let unbalanced = BooleanFunction::parse(n, "tt:1110").unwrap();
        let err = Protocol::new([(0, unbalanced.clone())].into());
        assert!(matches!(err, Err(TreeError::UnbalancedFunction(0))));
        let prot = Protocol::new_with_unbalanced([(0, unbalanced)].into());
        assert!(prot.allows_unbalanced());
    }

    #[test]
    fn single_player_always_succeeds() {
        let inst = NicdInstance::path(2, corr(0.3), 2, Some([1].into())).unwrap();
        let prot = Protocol::simple(inst.players(), dict(2, 1)).unwrap();
        let p = success_probability(&inst, &prot).unwrap();
        assert!((p - 1.0).abs() < 1e-15, "p = {p}");
    }

    #[test]
    fn adjacent_dictators_agree_with_channel_probability() {
        let inst = NicdInstance::path(1, corr(0.5), 3, None).unwrap();
        let prot = Protocol::simple(inst.players(), dict(3, 1)).unwrap();
        let p = success_probability(&inst, &prot).unwrap();
        assert!((p - 0.75).abs() < 1e-12, "p = {p}");
    }

    #[test]
    fn star_two_leaves_dictators() {
        let inst = NicdInstance::star(2, corr(0.5), 1, None).unwrap();
        let prot = Protocol::simple(inst.players(), dict(1, 1)).unwrap();
        let p = success_probability(&inst, &prot).unwrap();
        assert!((p - 0.625).abs() < 1e-12, "p = {p}");
        let oracle = brute_force_success(&inst, &prot).unwrap();
        assert!((p - oracle).abs() < 1e-12);
    }

    #[test]
    fn brute_force_known_values() {
        // Path of 3 vertices, dictators: (3/4)^2.
        let inst = NicdInstance::path(2, corr(0.5), 1, None).unwrap();
        let prot = Protocol::simple(inst.players(), dict(1, 1)).unwrap();
        let p = brute_force_success(&inst, &prot).unwrap();
        assert!((p - 0.5625).abs() < 1e-12, "p = {p}");

        // Independent strings agree with probability 1/2.
        let inst = NicdInstance::star(2, corr(0.0), 2, None).unwrap();
        let prot = Protocol::simple(inst.players(), dict(2, 1)).unwrap();
        let p = brute_force_success(&inst, &prot).unwrap();
        assert!((p - 0.5).abs() < 1e-12, "p = {p}");

        // Noiseless channel: everyone sees the same string.
        let inst = NicdInstance::star(3, corr(1.0), 2, None).unwrap();
        let prot = Protocol::simple(
            inst.players(),
            BooleanFunction::parse(2, "tt:0110").unwrap(),
        )
        .unwrap();
        let p = brute_force_success(&inst, &prot).unwrap();
        assert!((p - 1.0).abs() < 1e-12, "p = {p}");

        let inst = NicdInstance::path(6, corr(0.5), 4, None).unwrap();
        let prot = Protocol::simple(inst.players(), dict(4, 1)).unwrap();
        assert!(matches!(
            brute_force_success(&inst, &prot),
            Err(TreeError::TooLargeForBruteForce { bits: 28 })
        ));
    }

    #[test]
    fn message_passing_matches_brute_force_on_random_instances() {
        let mut rng = Rng::new(424242);
        for trial in 0..60 {
            let vertices = 2 + rng.below(5);
            let n = 1 + rng.below(3.min(16 / vertices).max(1));
            if n * vertices > 16 {
                continue;
            }
            let edges = random_tree(&mut rng, vertices);
            let mut players: BTreeSet<usize> = (0..vertices).filter(|_| rng.coin()).collect();
            players.insert(rng.below(vertices));
            let rho = corr(rng.uniform());
            let inst = NicdInstance::new(vertices, edges, rho, n, players).unwrap();
            let functions: BTreeMap<usize, BooleanFunction> = inst
                .players()
                .iter()
                .map(|&v| (v, random_balanced(&mut rng, n)))
                .collect();
            let prot = Protocol::new(functions).unwrap();
            let fast = success_probability(&inst, &prot).unwrap();
            let oracle = brute_force_success(&inst, &prot).unwrap();
            assert!(
                (fast - oracle).abs() < 1e-10,
                "trial {trial}: message passing {fast} vs enumeration {oracle}"
            );
        }
    }

    #[test]
    fn success_is_root_independent() {
        let mut rng = Rng::new(7);
        for _ in 0..20 {
            let vertices = 3 + rng.below(6);
            let edges = random_tree(&mut rng, vertices);
            let mut players: BTreeSet<usize> = (0..vertices).filter(|_| rng.coin()).collect();
            players.insert(0);
            let inst = NicdInstance::new(vertices, edges, corr(rng.uniform()), 3, players).unwrap();
            let functions: BTreeMap<usize, BooleanFunction> = inst
                .players()
                .iter()
                .map(|&v| (v, random_balanced(&mut rng, 3)))
                .collect();
            let prot = Protocol::new(functions).unwrap();
            let reference = success_probability_rooted(&inst, &prot, 0).unwrap();
            for root in 1..vertices {
                let other = success_probability_rooted(&inst, &prot, root).unwrap();
                assert!(
                    (reference - other).abs() < 1e-12,
                    "root {root}: {other} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn success_invariant_under_global_sign_flip() {
        let mut rng = Rng::new(99);
        for _ in 0..20 {
            let vertices = 2 + rng.below(5);
            let edges = random_tree(&mut rng, vertices);
            let inst = NicdInstance::new(
                vertices,
                edges,
                corr(rng.uniform()),
                2,
                (0..vertices).collect(),
            )
            .unwrap();
            let functions: BTreeMap<usize, BooleanFunction> = inst
                .players()
                .iter()
                .map(|&v| (v, random_balanced(&mut rng, 2)))
                .collect();
            let prot = Protocol::new(functions).unwrap();
            let p = success_probability(&inst, &prot).unwrap();
            let q = success_probability(&inst, &prot.negated()).unwrap();
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn success_invariant_under_coordinate_relabeling() {
        // Permute coordinates consistently across all players.
        fn permute(f: &BooleanFunction, perm: &[usize]) -> BooleanFunction {
            let n = f.n();
            let len = 1usize << n;
            let mut values = vec![0.0; len];
            for (index, slot) in values.iter_mut().enumerate() {
                let mut source = 0usize;
                for (j, &image) in perm.iter().enumerate() {
                    if index >> j & 1 == 1 {
                        source |= 1 << image;
                    }
                }
                *slot = f.value(source);
            }
            BooleanFunction::from_table(crate::cube::CubeFunction::new(n, values).unwrap()).unwrap()
        }
        let mut rng = Rng::new(321);
        let inst = NicdInstance::star(3, corr(0.6), 3, None).unwrap();
        for _ in 0..10 {
            let functions: BTreeMap<usize, BooleanFunction> = inst
                .players()
                .iter()
                .map(|&v| (v, random_balanced(&mut rng, 3)))
                .collect();
            let prot = Protocol::new(functions.clone()).unwrap();
            let mut perm = vec![0usize, 1, 2];
            rng.shuffle(&mut perm);
            let permuted = Protocol::new(
                functions
                    .iter()
                    .map(|(&v, f)| (v, permute(f, &perm)))
                    .collect(),
            )
            .unwrap();
            let p = success_probability(&inst, &prot).unwrap();
            let q = success_probability(&inst, &permuted).unwrap();
            assert!((p - q).abs() < 1e-12, "perm {perm:?}: {p} vs {q}");
        }
    }

    #[test]
    fn path_closed_form_examples() {
        assert!((path_closed_form(&[1], corr(0.5)) - 0.75).abs() < 1e-15);
        assert!((path_closed_form(&[2], corr(0.5)) - 0.625).abs() < 1e-15);
        let v = path_closed_form(&[1, 1, 1], corr(0.9));
        assert!((v - 0.857375).abs() < 1e-12, "v = {v}");
        // Against the evaluator on a path with a gap pattern.
        let inst = NicdInstance::path(5, corr(0.7), 2, Some([0, 2, 3, 5].into())).unwrap();
        let prot = Protocol::simple(inst.players(), dict(2, 2)).unwrap();
        let dp = success_probability(&inst, &prot).unwrap();
        let closed = path_closed_form(&[2, 1, 2], corr(0.7));
        assert!((dp - closed).abs() < 1e-12, "dp {dp} closed {closed}");
        // Long product stays finite and positive in log space.
        let long = path_closed_form(&vec![1; 1000], corr(0.9));
        assert!(long > 0.0 && long < 1.0);
    }

    #[test]
    fn star_closed_form_examples() {
        assert!((star_dictator_closed_form(1, corr(0.3)) - 1.0).abs() < 1e-15);
        let v = star_dictator_closed_form(2, corr(0.5));
        assert!((v - 0.625).abs() < 1e-15);
        let inst = NicdInstance::star(2, corr(0.5), 1, None).unwrap();
        let prot = Protocol::simple(inst.players(), dict(1, 1)).unwrap();
        let oracle = brute_force_success(&inst, &prot).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        assert!((star_dictator_closed_form(3, corr(0.0)) - 0.25).abs() < 1e-15);
        assert!((star_dictator_closed_form(5, corr(1.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn star_helpers_match_message_passing() {
        let rho = corr(0.65);
        let maj = BooleanFunction::majority(3, 3).unwrap();
        for k in [1usize, 2, 4] {
            let leaves_inst = NicdInstance::star(k, rho, 3, None).unwrap();
            let prot = Protocol::simple(leaves_inst.players(), maj.clone()).unwrap();
            let dp = success_probability(&leaves_inst, &prot).unwrap();
            let fast = star_leaves_simple_success(&maj, rho, k);
            assert!((dp - fast).abs() < 1e-12, "leaves k {k}: {dp} vs {fast}");

            let all_inst = NicdInstance::star(k, rho, 3, Some((0..=k).collect())).unwrap();
            let prot = Protocol::simple(all_inst.players(), maj.clone()).unwrap();
            let dp = success_probability(&all_inst, &prot).unwrap();
            let fast = star_all_vertices_simple_success(&maj, rho, k);
            assert!((dp - fast).abs() < 1e-12, "all k {k}: {dp} vs {fast}");
        }
        // All-vertices dictator star is the closed form (1/2 + rho/2)^k.
        let d = dict(2, 1);
        for k in [1usize, 3, 7] {
            let fast = star_all_vertices_simple_success(&d, rho, k);
            let expect = (0.5 + 0.5 * rho.rho()).powi(k as i32);
            assert!((fast - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_shift_examples() {
        let players: BTreeSet<usize> = [0, 1].into();
        // Dictators on the shifted coordinate are already monotone there.
        let prot = Protocol::simple(&players, dict(3, 1)).unwrap();
        let shifted = monotone_shift(&prot, 1);
        assert_eq!(shifted, prot);
        // Anti-dictators get forced into dictators.
        let anti = dict(3, 1).negated();
        let prot = Protocol::simple(&players, anti).unwrap();
        let shifted = monotone_shift(&prot, 1);
        for f in shifted.functions().values() {
            assert_eq!(f.truth_table(), dict(3, 1).truth_table());
        }
    }

    #[test]
    fn monotone_shift_never_decreases_success() {
        let mut rng = Rng::new(1234);
        for trial in 0..40 {
            let inst = NicdInstance::path(1, corr(rng.uniform()), 3, None).unwrap();
            let functions: BTreeMap<usize, BooleanFunction> = inst
                .players()
                .iter()
                .map(|&v| (v, random_balanced(&mut rng, 3)))
                .collect();
            let prot = Protocol::new(functions).unwrap();
            let before = success_probability(&inst, &prot).unwrap();
            for j in 1..=3 {
                let shifted = monotone_shift(&prot, j);
                let after = success_probability(&inst, &shifted).unwrap();
                assert!(
                    after >= before - 1e-12,
                    "trial {trial} coord {j}: {before} -> {after}"
                );
                for f in shifted.functions().values() {
                    assert!(f.is_balanced(), "shift broke balance");
                }
            }
            let (mono, passes) = make_monotone(&prot, 3);
            assert!(passes <= 3, "{passes} passes");
            for f in mono.functions().values() {
                assert!(f.is_monotone());
            }
            let after = success_probability(&inst, &mono).unwrap();
            assert!(after >= before - 1e-12);
        }
    }

    #[test]
    fn balanced_enumerations_have_expected_sizes() {
        assert_eq!(enumerate_balanced(1).unwrap().len(), 2);
        assert_eq!(enumerate_balanced(2).unwrap().len(), 6);
        assert_eq!(enumerate_balanced(3).unwrap().len(), 70);
        assert_eq!(enumerate_balanced(4).unwrap().len(), 12870);
        assert!(enumerate_balanced(5).is_err());
        // Monotone balanced: all Dedekind-function tables that are
        // balanced; spot checks against direct filtering.
        for n in 1..=4 {
            let by_recursion = enumerate_monotone_balanced(n).unwrap();
            let by_filter: Vec<String> = enumerate_balanced(n)
                .unwrap()
                .into_iter()
                .filter(|f| f.is_monotone())
                .map(|f| f.truth_table())
                .collect();
            let recursed: Vec<String> = by_recursion.iter().map(|f| f.truth_table()).collect();
            assert_eq!(recursed, by_filter, "n = {n}");
        }
        let five = enumerate_monotone_balanced(5).unwrap();
        assert!(!five.is_empty());
        assert!(five.iter().all(|f| f.is_monotone() && f.is_balanced()));
        assert!(enumerate_monotone_balanced(6).is_err());
    }

    #[test]
    fn best_simple_protocol_on_path_is_dictator() {
        let inst = NicdInstance::path(2, corr(0.5), 2, None).unwrap();
        let (best, value) = best_simple_protocol(&inst, &ProtocolFamily::AllBalanced).unwrap();
        assert!((value - 0.5625).abs() < 1e-12, "value {value}");
        let dict_tables: Vec<String> = [
            dict(2, 1),
            dict(2, 1).negated(),
            dict(2, 2),
            dict(2, 2).negated(),
        ]
        .iter()
        .map(|f| f.truth_table())
        .collect();
        assert!(
            dict_tables.contains(&best.truth_table()),
            "got {}",
            best.encoding()
        );
    }

    #[test]
    fn best_simple_protocol_on_star_is_dictator_class() {
        let inst = NicdInstance::star(3, corr(0.5), 2, None).unwrap();
        let (best, value) = best_simple_protocol(&inst, &ProtocolFamily::AllBalanced).unwrap();
        let dict_value = star_leaves_simple_success(&dict(2, 1), corr(0.5), 3);
        assert!((value - dict_value).abs() < 1e-12);
        let dict_tables: Vec<String> = [
            dict(2, 1),
            dict(2, 1).negated(),
            dict(2, 2),
            dict(2, 2).negated(),
        ]
        .iter()
        .map(|f| f.truth_table())
        .collect();
        assert!(dict_tables.contains(&best.truth_table()));
    }

    #[test]
    fn best_simple_protocol_singleton_family() {
        let inst = NicdInstance::star(2, corr(0.4), 3, None).unwrap();
        let d = dict(3, 1);
        let (best, value) =
            best_simple_protocol(&inst, &ProtocolFamily::Named(vec![d.clone()])).unwrap();
        assert_eq!(best.truth_table(), d.truth_table());
        let expect = star_dictator_closed_form(2, corr(0.4));
        assert!((value - expect).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_search_matches_small_s_uniqueness() {
        // Two players one edge apart, n = 2: the four +-dictator simple
        // protocols are exactly the maximizers.
        let inst = NicdInstance::path(1, corr(0.5), 2, None).unwrap();
        let search = best_protocol_exhaustive(&inst).unwrap();
        assert!((search.max - 0.75).abs() < 1e-12);
        let mut found = BTreeSet::new();
        for assignment in &search.maximizers {
            let tables: Vec<String> = assignment
                .iter()
                .map(|&c| search.candidates[c].truth_table())
                .collect();
            assert_eq!(tables[0], tables[1], "maximizer is not simple: {tables:?}");
            let f = &search.candidates[assignment[0]];
            let coeffs = f.as_cube().walsh_hadamard();
            let level_one: f64 = coeffs.value(0b01).abs().max(coeffs.value(0b10).abs());
            assert!(
                (level_one - 1.0).abs() < 1e-12,
                "maximizer is not a dictator"
            );
            found.insert(tables[0].clone());
        }
        assert_eq!(
            found.len(),
            4,
            "expected the 4 signed dictators, got {found:?}"
        );
    }

    #[test]
    fn exhaustive_search_star_three_players() {
        // Three leaf players, n = 2: the full 6^3 product family is
        // maximized exactly by the simple signed dictators.
        let inst = NicdInstance::star(3, corr(0.5), 2, None).unwrap();
        let search = best_protocol_exhaustive(&inst).unwrap();
        let dict_value = star_leaves_simple_success(&dict(2, 1), corr(0.5), 3);
        assert!((search.max - dict_value).abs() < 1e-12);
        let mut winners = BTreeSet::new();
        for assignment in &search.maximizers {
            assert!(assignment.iter().all(|&c| c == assignment[0]), "not simple");
            let f = &search.candidates[assignment[0]];
            let coeffs = f.as_cube().walsh_hadamard();
            let level_one = coeffs.value(0b01).abs().max(coeffs.value(0b10).abs());
            assert!(
                (level_one - 1.0).abs() < 1e-12,
                "not a dictator: {}",
                f.encoding()
            );
            winners.insert(f.truth_table());
        }
        assert_eq!(winners.len(), 4, "{winners:?}");
    }

    #[test]
    fn counterexample_small_ranges_are_clean() {
        // Pure paths (k1 = 0) and pure stars (k2 = 0) never appear in
        // the report, and small mixed ranges stay clean too.
        let report = counterexample_search(corr(0.9), 4, 6, 6, 2).unwrap();
        assert!(report.rows.is_empty(), "unexpected hits: {:?}", report.rows);
    }

    #[test]
    fn counterexample_tables_match_message_passing() {
        let rho = corr(0.8);
        let n = 4;
        let leaf = BooleanFunction::majority_of(n, &[n - 2, n - 1, n]).unwrap();
        let anchor = dict(n, 1);
        let table = star_path_success_table(&leaf, &anchor, rho.rho(), 3, 3);
        for (k1, k2) in [(0usize, 2usize), (2, 0), (3, 2), (1, 3)] {
            let inst = NicdInstance::star_plus_path(k1, k2, rho, n).unwrap();
            let mut functions = BTreeMap::new();
            for v in 0..inst.vertex_count() {
                let f = if (1..=k1).contains(&v) {
                    leaf.clone()
                } else {
                    anchor.clone()
                };
                functions.insert(v, f);
            }
            let prot = Protocol::new(functions).unwrap();
            let dp = success_probability(&inst, &prot).unwrap();
            let fast = table[k1 * 4 + k2];
            assert!(
                (dp - fast).abs() < 1e-12,
                "(k1,k2) = ({k1},{k2}): dp {dp} vs table {fast}"
            );
        }
        // Simple-protocol tables agree with the evaluator as well.
        let f = BooleanFunction::parse(n, "tt:1100101011010010").unwrap();
        let table = star_path_success_table(&f, &f, rho.rho(), 2, 2);
        for (k1, k2) in [(1usize, 1usize), (2, 2)] {
            let inst = NicdInstance::star_plus_path(k1, k2, rho, n).unwrap();
            let prot = Protocol::simple(inst.players(), f.clone()).unwrap();
            let dp = success_probability(&inst, &prot).unwrap();
            let fast = table[k1 * 3 + k2];
            assert!(
                (dp - fast).abs() < 1e-12,
                "simple ({k1},{k2}): {dp} vs {fast}"
            );
        }
    }

    #[test]
    fn counterexample_parallel_matches_serial() {
        // A window known to contain hits, so the comparison is not
        // vacuous; worker count must not change a single field.
        let serial = counterexample_search(corr(0.9), 4, 50, 80, 1).unwrap();
        let parallel = counterexample_search(corr(0.9), 4, 50, 80, 5).unwrap();
        assert!(!serial.rows.is_empty());
        assert_eq!(serial.rows.len(), parallel.rows.len());
        for (a, b) in serial.rows.iter().zip(&parallel.rows) {
            assert_eq!((a.k1, a.k2), (b.k1, b.k2));
            assert_eq!(a.mixed.to_bits(), b.mixed.to_bits());
            assert_eq!(a.best_simple.to_bits(), b.best_simple.to_bits());
            assert_eq!(a.best_encoding, b.best_encoding);
        }
    }

    #[test]
    fn instance_file_round_trip() {
        let text = r#"{
            "n": 2,
            "rho": 0.5,
            "edges": [[0, 1], [1, 2]],
            "players": [0, 2],
            "protocol": {"0": "dict:1", "2": "dict:1"}
        }"#;
        let file = InstanceFile::parse(text).unwrap();
        let (inst, prot) = file.to_instance().unwrap();
        assert_eq!(inst.vertex_count(), 3);
        let prot = prot.unwrap();
        let p = success_probability(&inst, &prot).unwrap();
        let closed = path_closed_form(&[2], corr(0.5));
        assert!((p - closed).abs() < 1e-12);
        assert!(InstanceFile::parse("{").is_err());
        // Unbalanced content without the flag is rejected.
        let text = r#"{
            "n": 1, "rho": 0.5, "edges": [[0, 1]], "players": [0, 1],
            "protocol": {"0": "tt:11", "1": "dict:1"}
        }"#;
        let file = InstanceFile::parse(text).unwrap();
        assert!(matches!(
            file.to_instance(),
            Err(TreeError::UnbalancedFunction(0))
        ));
    }

    #[test]
    fn protocol_validation_errors() {
        let inst = NicdInstance::path(1, corr(0.5), 2, None).unwrap();
        // Missing a player.
        let prot = Protocol::new([(0, dict(2, 1))].into()).unwrap();
        assert!(matches!(
            success_probability(&inst, &prot),
            Err(TreeError::MissingPlayerFunction(1))
        ));
        // Wrong arity.
        let prot = Protocol::new([(0, dict(3, 1)), (1, dict(3, 1))].into()).unwrap();
        assert!(matches!(
            success_probability(&inst, &prot),
            Err(TreeError::ArityMismatch {
                vertex: 0,
                expected: 2,
                got: 3
            })
        ));
        // Function on a non-player.
        let inst = NicdInstance::path(2, corr(0.5), 2, Some([0, 1].into())).unwrap();
        let prot =
            Protocol::new([(0, dict(2, 1)), (1, dict(2, 1)), (2, dict(2, 1))].into()).unwrap();
        assert!(matches!(
            success_probability(&inst, &prot),
            Err(TreeError::UnexpectedPlayerFunction(2))
        ));
    }
}
