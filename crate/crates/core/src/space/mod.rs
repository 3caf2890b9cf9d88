//! Truncated belief-state space and the finite belief-MDP built on it.
//!
//! Starting from a root belief, every action and every reception outcome is
//! expanded breadth-first for `depth` steps. Beliefs reached after the last
//! step are not added; each is mapped to the enumerated node with the
//! smallest mean-square distance, which closes the graph. Nodes carry the
//! reception tag of the update that produced them, but projection compares
//! beliefs only.

mod kdtree;
mod mdp;

pub use kdtree::KdTree;
pub use mdp::{build_mdp, BeliefMdp, CostModel};

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::belief::{condition_and_predict, predict, JointBelief, ReceptionTag};
use crate::error::{check_probability, Error, Result};
use crate::source::{partial_kernel, stationary_distribution, JointConfig, SourceParams, TransitionKernel};

pub const DEFAULT_EPSILON_DEDUPE: f64 = 1e-9;
pub const DEFAULT_NODE_CAP: usize = 500_000;

/// Initial belief of the enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootBelief {
    #[default]
    Stationary,
    Uniform,
    PointMass(usize),
}

impl RootBelief {
    pub fn resolve(&self, kernel: &TransitionKernel) -> Result<JointBelief> {
        let k = kernel.sources();
        match *self {
            Self::Stationary => JointBelief::new(k, stationary_distribution(kernel)?),
            Self::Uniform => Ok(JointBelief::uniform(k)),
            Self::PointMass(idx) if idx < kernel.size() => {
                Ok(JointBelief::point_mass(JointConfig::from_index(k, idx)))
            }
            Self::PointMass(idx) => Err(Error::InvalidBelief(format!(
                "point mass on configuration {idx} with K = {k}"
            ))),
        }
    }
}

/// Everything that determines a belief graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub source: SourceParams,
    pub p_s: f64,
    /// Truncation depth N.
    pub depth: usize,
    #[serde(default)]
    pub root: RootBelief,
    pub epsilon_dedupe: f64,
    pub node_cap: usize,
}

impl GraphSpec {
    pub fn new(source: SourceParams, p_s: f64, depth: usize) -> Self {
        Self {
            source,
            p_s,
            depth,
            root: RootBelief::Stationary,
            epsilon_dedupe: DEFAULT_EPSILON_DEDUPE,
            node_cap: DEFAULT_NODE_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        check_probability("p_s", self.p_s)?;
        if self.depth == 0 {
            return Err(Error::InvalidParameter {
                name: "N",
                value: 0.0,
                reason: "truncation depth must be at least 1",
            });
        }
        if !(self.epsilon_dedupe >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon_dedupe",
                value: self.epsilon_dedupe,
                reason: "must be non-negative",
            });
        }
        Ok(())
    }

    /// Content hash of the generating parameters.
    pub fn key(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("graph spec serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn build(&self) -> Result<BeliefGraph> {
        self.validate()?;
        let kernel = partial_kernel(&self.source)?;
        let root = self.root.resolve(&kernel)?;
        enumerate(&root, &kernel, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefNode {
    pub id: usize,
    pub belief: JointBelief,
    pub tag: ReceptionTag,
    pub depth: usize,
}

/// One outcome of taking an action in a belief state.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub prob: f64,
    pub belief: JointBelief,
    pub tag: ReceptionTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub prob: f64,
    pub succ: usize,
}

/// Successor distribution of a belief under one action.
///
/// Idle moves to the predicted belief with probability 1. Requesting source
/// `k` fails with probability `1 - p_s` (predicted belief, no tag) or
/// delivers bit `m` with probability `Pr(X_k = m) p_s` (conditioned belief,
/// tag `m`). Zero-probability outcomes are omitted.
pub fn branch(
    belief: &JointBelief,
    action: usize,
    kernel: &TransitionKernel,
    p_s: f64,
) -> Result<Vec<Branch>> {
    let mut out = Vec::with_capacity(3);
    if action == 0 {
        out.push(Branch {
            prob: 1.0,
            belief: predict(belief, kernel),
            tag: ReceptionTag::None,
        });
        return Ok(out);
    }
    let source = action - 1;
    if source >= belief.sources() {
        return Err(Error::Unknown {
            what: "action",
            value: action.to_string(),
        });
    }
    if p_s < 1.0 {
        out.push(Branch {
            prob: 1.0 - p_s,
            belief: predict(belief, kernel),
            tag: ReceptionTag::None,
        });
    }
    if p_s > 0.0 {
        for bit in [0u8, 1] {
            let prob = belief.bit_probability(source, bit) * p_s;
            if prob > 0.0 {
                out.push(Branch {
                    prob,
                    belief: condition_and_predict(belief, source, bit, kernel)?,
                    tag: ReceptionTag::from_bit(bit),
                });
            }
        }
    }
    Ok(out)
}

/// Finite belief graph with resolved transitions for every (node, action).
#[derive(Debug, Clone)]
pub struct BeliefGraph {
    spec: GraphSpec,
    kernel: TransitionKernel,
    nodes: Vec<BeliefNode>,
    /// Indexed by `node * actions + action`.
    edges: Vec<Vec<Edge>>,
    root: usize,
    index: KdTree,
}

/// Hash-bucketed lookup for near-identical beliefs during enumeration.
///
/// Beliefs are bucketed by their projection onto a fixed unit direction;
/// two beliefs within `eps` in L2 land in the same or adjacent buckets.
struct DedupeIndex {
    eps: f64,
    direction: Vec<f64>,
    buckets: HashMap<(ReceptionTag, i64), Vec<usize>>,
}

impl DedupeIndex {
    fn new(dim: usize, eps: f64) -> Self {
        let raw: Vec<f64> = (0..dim)
            .map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() + 0.1)
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            eps,
            direction: raw.into_iter().map(|v| v / norm).collect(),
            buckets: HashMap::new(),
        }
    }

    fn bucket(&self, b: &JointBelief) -> i64 {
        let proj: f64 = b.probs().iter().zip(&self.direction).map(|(a, w)| a * w).sum();
        if self.eps > 0.0 {
            (proj / self.eps).floor() as i64
        } else {
            proj.to_bits() as i64
        }
    }

    fn find(&self, b: &JointBelief, tag: ReceptionTag, nodes: &[BeliefNode]) -> Option<usize> {
        let key = self.bucket(b);
        let span = if self.eps > 0.0 { -1..=1 } else { 0..=0 };
        let limit = self.eps * self.eps;
        span.filter_map(|off| self.buckets.get(&(tag, key + off)))
            .flatten()
            .copied()
            .filter(|&id| {
                let d = b.sq_distance(nodes[id].belief.probs());
                if self.eps > 0.0 {
                    d < limit
                } else {
                    d == 0.0
                }
            })
            .min()
    }

    fn insert(&mut self, b: &JointBelief, tag: ReceptionTag, id: usize) {
        let key = self.bucket(b);
        self.buckets.entry((tag, key)).or_default().push(id);
    }
}

fn push_edge(list: &mut Vec<Edge>, succ: usize, prob: f64) {
    match list.iter_mut().find(|e| e.succ == succ) {
        Some(e) => e.prob += prob,
        None => list.push(Edge { prob, succ }),
    }
}

/// Breadth-first enumeration of all belief trajectories up to `spec.depth`.
pub fn enumerate(
    initial: &JointBelief,
    kernel: &TransitionKernel,
    spec: &GraphSpec,
) -> Result<BeliefGraph> {
    spec.validate()?;
    if !initial.is_valid() {
        return Err(Error::InvalidBelief("initial belief off the simplex".into()));
    }
    let actions = kernel.sources() + 1;
    let mut nodes = vec![BeliefNode {
        id: 0,
        belief: initial.clone(),
        tag: ReceptionTag::None,
        depth: 0,
    }];
    let mut edges: Vec<Vec<Edge>> = vec![Vec::new(); actions];
    let mut dedupe = DedupeIndex::new(kernel.size(), spec.epsilon_dedupe);
    dedupe.insert(initial, ReceptionTag::None, 0);

    let mut frontier = 0..1;
    for depth in 0..spec.depth {
        let level_end = nodes.len();
        for id in frontier.clone() {
            for action in 0..actions {
                for br in branch(&nodes[id].belief, action, kernel, spec.p_s)? {
                    let succ = match dedupe.find(&br.belief, br.tag, &nodes) {
                        Some(existing) => existing,
                        None => {
                            let new_id = nodes.len();
                            if new_id >= spec.node_cap {
                                return Err(Error::NodeCapExceeded { cap: spec.node_cap });
                            }
                            dedupe.insert(&br.belief, br.tag, new_id);
                            nodes.push(BeliefNode {
                                id: new_id,
                                belief: br.belief,
                                tag: br.tag,
                                depth: depth + 1,
                            });
                            edges.extend(std::iter::repeat_with(Vec::new).take(actions));
                            new_id
                        }
                    };
                    push_edge(&mut edges[id * actions + action], succ, br.prob);
                }
            }
        }
        frontier = level_end..nodes.len();
    }

    let index = build_index(&nodes, kernel.size());
    for id in frontier {
        for action in 0..actions {
            for br in branch(&nodes[id].belief, action, kernel, spec.p_s)? {
                let succ = nearest(&index, &br.belief);
                push_edge(&mut edges[id * actions + action], succ, br.prob);
            }
        }
    }

    let graph = BeliefGraph {
        spec: *spec,
        kernel: kernel.clone(),
        nodes,
        edges,
        root: 0,
        index,
    };
    graph.check_closed()?;
    Ok(graph)
}

fn build_index(nodes: &[BeliefNode], dim: usize) -> KdTree {
    let coords = nodes
        .iter()
        .flat_map(|n| n.belief.probs().iter().copied())
        .collect();
    KdTree::build(dim, coords)
}

fn nearest(index: &KdTree, b: &JointBelief) -> usize {
    index
        .nearest(b.probs())
        .expect("belief graph always holds its root")
        .0
}

impl BeliefGraph {
    pub fn spec(&self) -> &GraphSpec {
        &self.spec
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn nodes(&self) -> &[BeliefNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &BeliefNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn sources(&self) -> usize {
        self.kernel.sources()
    }

    /// Number of actions, `K + 1`.
    pub fn actions(&self) -> usize {
        self.kernel.sources() + 1
    }

    pub fn edges(&self, node: usize, action: usize) -> &[Edge] {
        &self.edges[node * self.actions() + action]
    }

    /// Nearest node by mean-square error over the joint belief; ties go to
    /// the lowest id. The tag is accepted for symmetry with the node type
    /// but does not restrict the candidates.
    pub fn project(&self, belief: &JointBelief, _tag: ReceptionTag) -> usize {
        nearest(&self.index, belief)
    }

    pub fn check_closed(&self) -> Result<()> {
        let actions = self.actions();
        for node in 0..self.nodes.len() {
            for action in 0..actions {
                let list = self.edges(node, action);
                let total: f64 = list.iter().map(|e| e.prob).sum();
                if list.is_empty() || list.iter().any(|e| e.succ >= self.nodes.len()) {
                    return Err(Error::GraphNotClosed { node, action });
                }
                if (total - 1.0).abs() > 1e-10 {
                    return Err(Error::MdpNotStochastic {
                        state: node,
                        action,
                        sum: total,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> GraphFile {
        let actions = self.actions();
        let edges = self
            .edges
            .iter()
            .enumerate()
            .flat_map(|(slot, list)| {
                list.iter().map(move |e| EdgeRecord {
                    state: slot / actions,
                    action: slot % actions,
                    successor: e.succ,
                    probability: e.prob,
                })
            })
            .collect();
        GraphFile {
            spec: self.spec,
            root_id: self.root,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id,
                    belief: n.belief.probs().to_vec(),
                    tag: n.tag,
                    depth: n.depth,
                })
                .collect(),
            edges,
        }
    }

    pub fn from_file(file: GraphFile) -> Result<Self> {
        file.spec.validate()?;
        let kernel = partial_kernel(&file.spec.source)?;
        let k = kernel.sources();
        let actions = k + 1;
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for (pos, rec) in file.nodes.into_iter().enumerate() {
            if rec.id != pos {
                return Err(Error::InvalidBelief(format!(
                    "node ids must be dense and ordered (found {} at {pos})",
                    rec.id
                )));
            }
            nodes.push(BeliefNode {
                id: rec.id,
                belief: JointBelief::new(k, rec.belief)?,
                tag: rec.tag,
                depth: rec.depth,
            });
        }
        let mut edges = vec![Vec::new(); nodes.len() * actions];
        for e in file.edges {
            if e.state >= nodes.len() || e.action >= actions {
                return Err(Error::GraphNotClosed {
                    node: e.state,
                    action: e.action,
                });
            }
            edges[e.state * actions + e.action].push(Edge {
                prob: e.probability,
                succ: e.successor,
            });
        }
        let index = build_index(&nodes, kernel.size());
        let graph = Self {
            spec: file.spec,
            kernel,
            nodes,
            edges,
            root: file.root_id,
            index,
        };
        graph.check_closed()?;
        Ok(graph)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &self.to_file())?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let parsed: GraphFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        Self::from_file(parsed)
    }
}

/// JSON layout of a belief graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub spec: GraphSpec,
    pub root_id: usize,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub belief: Vec<f64>,
    pub tag: ReceptionTag,
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub state: usize,
    pub action: usize,
    pub successor: usize,
    pub probability: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::marginalize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(k: usize, lambda: f64, p_s: f64, depth: usize) -> GraphSpec {
        GraphSpec::new(SourceParams::new(k, 0.8, 0.5, lambda), p_s, depth)
    }

    #[test]
    fn idle_branch_is_certain() {
        let kernel = partial_kernel(&SourceParams::new(2, 0.8, 0.5, 0.4)).unwrap();
        let b = JointBelief::uniform(2);
        let br = branch(&b, 0, &kernel, 0.8).unwrap();
        assert_eq!(br.len(), 1);
        assert_eq!(br[0].prob, 1.0);
        assert_eq!(br[0].tag, ReceptionTag::None);
    }

    #[test]
    fn perfect_channel_has_two_outcomes() {
        let kernel = partial_kernel(&SourceParams::new(2, 0.8, 0.5, 0.4)).unwrap();
        let b = JointBelief::new(2, vec![0.4, 0.1, 0.3, 0.2]).unwrap();
        let br = branch(&b, 2, &kernel, 1.0).unwrap();
        assert_eq!(br.len(), 2);
        let m = marginalize(&b);
        assert!((br[0].prob - m.per_source[1][0]).abs() < 1e-15);
        assert!((br[1].prob - m.per_source[1][1]).abs() < 1e-15);
    }

    #[test]
    fn lossy_channel_split() {
        let kernel = partial_kernel(&SourceParams::new(2, 0.8, 0.5, 0.4)).unwrap();
        let b = JointBelief::uniform(2);
        let br = branch(&b, 1, &kernel, 0.8).unwrap();
        let probs: Vec<(ReceptionTag, f64)> = br.iter().map(|b| (b.tag, b.prob)).collect();
        assert_eq!(probs.len(), 3);
        assert_eq!(probs[0].0, ReceptionTag::None);
        assert!((probs[0].1 - 0.2).abs() < 1e-15);
        assert!((probs[1].1 - 0.4).abs() < 1e-15);
        assert!((probs[2].1 - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_mass_reception_skipped() {
        let kernel = partial_kernel(&SourceParams::new(2, 0.8, 0.5, 0.4)).unwrap();
        let b = JointBelief::point_mass(JointConfig::from_bits(&[1, 0]));
        let br = branch(&b, 1, &kernel, 0.5).unwrap();
        assert_eq!(br.len(), 2);
        assert_eq!(br[1].tag, ReceptionTag::One);
    }

    #[test]
    fn one_step_single_source_tree() {
        // K = 1, N = 1, p_s = 1: idle gives pi P = pi (dedupes onto the root
        // only if the tag matches, which it does), requests give two point
        // masses propagated once.
        let g = spec(1, 0.0, 1.0, 1).build().unwrap();
        assert!(g.len() <= 1 + 3);
        assert_eq!(g.len(), 3);
        assert_eq!(g.edges(0, 0), &[Edge { prob: 1.0, succ: 0 }]);
        let tags: Vec<_> = g.nodes().iter().map(|n| n.tag).collect();
        assert_eq!(tags, vec![ReceptionTag::None, ReceptionTag::Zero, ReceptionTag::One]);
    }

    #[test]
    fn tree_bound_and_closure() {
        for k in 1..=3 {
            for depth in 1..=3 {
                let g = spec(k, 0.4, 0.8, depth).build().unwrap();
                let bound: usize = (0..=depth).map(|d| (1 + 3 * k).pow(d as u32)).sum();
                assert!(g.len() <= bound);
                g.check_closed().unwrap();
                for n in g.nodes() {
                    assert!(n.depth <= depth);
                    for a in 0..g.actions() {
                        assert!(g.edges(n.id, a).len() <= 3);
                    }
                }
            }
        }
    }

    #[test]
    fn projection_is_idempotent_on_nodes() {
        let g = spec(2, 0.4, 0.8, 3).build().unwrap();
        for n in g.nodes() {
            let hit = g.project(&n.belief, n.tag);
            assert!(hit <= n.id);
            assert_eq!(g.node(hit).belief.sq_distance(n.belief.probs()), 0.0);
            if n.tag == g.node(hit).tag {
                assert_eq!(hit, n.id);
            }
        }
    }

    #[test]
    fn projection_matches_exhaustive_scan() {
        let g = spec(2, 0.6, 0.8, 3).build().unwrap();
        assert!(g.len() >= 100);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let b = JointBelief::new(2, raw.iter().map(|v| v / s).collect()).unwrap();
            let mut best = (usize::MAX, f64::INFINITY);
            for n in g.nodes() {
                let mse = b.sq_distance(n.belief.probs()) / 4.0;
                if mse < best.1 {
                    best = (n.id, mse);
                }
            }
            assert_eq!(g.project(&b, ReceptionTag::None), best.0);
        }
    }

    #[test]
    fn dedupe_soundness() {
        let s = spec(2, 0.4, 0.8, 4);
        let g = s.build().unwrap();
        let eps2 = s.epsilon_dedupe * s.epsilon_dedupe;
        let nodes = g.nodes();
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                if nodes[i].tag == nodes[j].tag {
                    assert!(nodes[i].belief.sq_distance(nodes[j].belief.probs()) >= eps2);
                }
            }
        }
    }

    #[test]
    fn deeper_enumeration_refines() {
        let shallow = spec(2, 0.4, 0.8, 3).build().unwrap();
        let deep = spec(2, 0.4, 0.8, 4).build().unwrap();
        assert!(deep.len() > shallow.len());
        for (a, b) in shallow.nodes().iter().zip(deep.nodes()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn node_cap_is_enforced() {
        let mut s = spec(3, 0.4, 0.8, 4);
        s.node_cap = 50;
        assert!(matches!(s.build(), Err(Error::NodeCapExceeded { cap: 50 })));
    }

    #[test]
    fn rejects_depth_zero() {
        assert!(spec(2, 0.4, 0.8, 0).build().is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = spec(2, 0.4, 0.8, 2).build().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        g.save_json(&path).unwrap();
        let back = BeliefGraph::load_json(&path).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        for n in 0..g.len() {
            for a in 0..g.actions() {
                assert_eq!(back.edges(n, a), g.edges(n, a));
            }
        }
    }

    #[test]
    fn key_changes_with_theta() {
        let a = spec(2, 0.4, 0.8, 6);
        let mut b = a;
        b.source.theta = 0.2;
        assert_eq!(a.key(), spec(2, 0.4, 0.8, 6).key());
        assert_ne!(a.key(), b.key());
    }
}
