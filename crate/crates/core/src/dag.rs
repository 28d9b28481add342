//! The semantic layer: rooted expression DAGs over arithmetic or boolean
//! operators, their evaluation, and their topological orders.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DagError {
    #[error("depth must be at least 1, got {0}")]
    InvalidDepth(usize),
    #[error("cycle detected involving node `{0}`")]
    Cycle(String),
    #[error("node `{name}` has {found} parents but its operator takes {expected}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("leaf `{0}` has parents but no operator")]
    LeafWithParents(String),
    #[error("node `{node}` references unknown node index {parent}")]
    DanglingParent { node: String, parent: usize },
    #[error("node at position {position} carries id {id}")]
    IdMismatch { position: usize, id: usize },
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("root index {0} is out of range")]
    RootOutOfRange(usize),
    #[error("arithmetic and logical operators mixed in one graph")]
    MixedTasks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Arithmetic,
    Logical,
}

impl Task {
    /// Operator set sampled from when generating, in a fixed order.
    pub fn operators(self) -> &'static [Operator] {
        match self {
            Task::Arithmetic => &[Operator::Add, Operator::Sub, Operator::Mul, Operator::Square],
            Task::Logical => &[Operator::And, Operator::Or, Operator::Not],
        }
    }

    /// Number of distinct leaf values: 0..=10 for arithmetic, {0, 1} for logical.
    pub fn leaf_value_count(self) -> usize {
        match self {
            Task::Arithmetic => 11,
            Task::Logical => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Arithmetic => "arithmetic",
            Task::Logical => "logical",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "arithmetic" => Ok(Task::Arithmetic),
            "logical" => Ok(Task::Logical),
            other => Err(format!("unknown task `{other}` (expected arithmetic or logical)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Square,
    And,
    Or,
    Not,
}

impl Operator {
    pub fn arity(self) -> usize {
        match self {
            Operator::Square | Operator::Not => 1,
            _ => 2,
        }
    }

    pub fn task(self) -> Task {
        match self {
            Operator::Add | Operator::Sub | Operator::Mul | Operator::Square => Task::Arithmetic,
            Operator::And | Operator::Or | Operator::Not => Task::Logical,
        }
    }

    /// Whether swapping the two operands leaves the result unchanged.
    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            Operator::Add | Operator::Mul | Operator::And | Operator::Or
        )
    }

    /// Applies the operator. `Sub` takes `[minuend, subtrahend]`; boolean
    /// operators read any nonzero operand as true and produce 0 or 1.
    ///
    /// # Panics
    /// Panics if `args.len()` differs from the arity.
    pub fn apply(self, args: &[BigInt]) -> BigInt {
        assert_eq!(args.len(), self.arity(), "operand count for {self:?}");
        let bit = |b: bool| if b { BigInt::one() } else { BigInt::zero() };
        match self {
            Operator::Add => &args[0] + &args[1],
            Operator::Sub => &args[0] - &args[1],
            Operator::Mul => &args[0] * &args[1],
            Operator::Square => &args[0] * &args[0],
            Operator::And => bit(!args[0].is_zero() && !args[1].is_zero()),
            Operator::Or => bit(!args[0].is_zero() || !args[1].is_zero()),
            Operator::Not => bit(args[0].is_zero()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Leaf,
    Internal,
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    /// `None` for leaves.
    pub op: Option<Operator>,
    /// Ordered operands; `Sub` stores `[minuend, subtrahend]`.
    pub parents: Vec<NodeId>,
    #[serde(with = "crate::serde_bigint")]
    pub value: BigInt,
}

impl Node {
    pub fn leaf(id: NodeId, name: impl Into<String>, value: BigInt) -> Self {
        Self {
            id,
            name: name.into(),
            op: None,
            parents: Vec::new(),
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.op.is_none()
    }
}

/// A node table with a designated root. Nodes outside the root's
/// ancestor-closure (redundant distractors) may share the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    nodes: Vec<Node>,
    root: NodeId,
}

impl Dag {
    /// Builds a node table after structural checks (ids, arity, names,
    /// operator family). Cycles are reported by the ordering functions.
    pub fn new(nodes: Vec<Node>, root: NodeId) -> Result<Self, DagError> {
        if root.0 >= nodes.len() {
            return Err(DagError::RootOutOfRange(root.0));
        }
        let mut names = HashSet::with_capacity(nodes.len());
        let mut task = None;
        for (position, node) in nodes.iter().enumerate() {
            if node.id.0 != position {
                return Err(DagError::IdMismatch {
                    position,
                    id: node.id.0,
                });
            }
            if !names.insert(node.name.as_str()) {
                return Err(DagError::DuplicateName(node.name.clone()));
            }
            match node.op {
                None if !node.parents.is_empty() => {
                    return Err(DagError::LeafWithParents(node.name.clone()))
                }
                None => {}
                Some(op) => {
                    if op.arity() != node.parents.len() {
                        return Err(DagError::Arity {
                            name: node.name.clone(),
                            expected: op.arity(),
                            found: node.parents.len(),
                        });
                    }
                    match task {
                        None => task = Some(op.task()),
                        Some(t) if t != op.task() => return Err(DagError::MixedTasks),
                        Some(_) => {}
                    }
                }
            }
            if let Some(p) = node.parents.iter().find(|p| p.0 >= nodes.len()) {
                return Err(DagError::DanglingParent {
                    node: node.name.clone(),
                    parent: p.0,
                });
            }
        }
        Ok(Self { nodes, root })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn root_node(&self) -> &Node {
        self.node(self.root)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Operator family of the graph, if it has any operator at all.
    pub fn task(&self) -> Option<Task> {
        self.nodes.iter().find_map(|n| n.op.map(Operator::task))
    }

    pub fn role(&self, id: NodeId) -> Role {
        if id == self.root {
            Role::Root
        } else if self.node(id).is_leaf() {
            Role::Leaf
        } else {
            Role::Internal
        }
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    pub fn name_index(&self) -> HashMap<&str, NodeId> {
        self.nodes.iter().map(|n| (n.name.as_str(), n.id)).collect()
    }

    /// Membership mask of the root's ancestor-closure (root included).
    pub fn relevant_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut mask[id.0], true) {
                continue;
            }
            stack.extend(self.node(id).parents.iter().copied());
        }
        mask
    }

    /// The root's ancestor-closure as its own graph, ids renumbered in the
    /// original id order.
    pub fn relevant_subgraph(&self) -> Dag {
        let mask = self.relevant_mask();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for node in self.nodes.iter().filter(|n| mask[n.id.0]) {
            remap[node.id.0] = nodes.len();
            nodes.push(node.clone());
        }
        for node in &mut nodes {
            node.id = NodeId(remap[node.id.0]);
            for p in &mut node.parents {
                *p = NodeId(remap[p.0]);
            }
        }
        let root = NodeId(remap[self.root.0]);
        Dag { nodes, root }
    }

    /// Number of non-leaf levels on the longest path from the root to a leaf.
    pub fn depth(&self) -> usize {
        fn walk(dag: &Dag, id: NodeId, on_path: &mut Vec<bool>) -> usize {
            let node = dag.node(id);
            if node.is_leaf() || on_path[id.0] {
                return 0;
            }
            on_path[id.0] = true;
            let below = node
                .parents
                .iter()
                .map(|&p| walk(dag, p, on_path))
                .max()
                .unwrap_or(0);
            on_path[id.0] = false;
            1 + below
        }
        walk(self, self.root, &mut vec![false; self.nodes.len()])
    }

    /// Replaces stored node values with freshly evaluated ones.
    pub fn reevaluate(&mut self) -> Result<(), DagError> {
        let values = evaluate(self)?;
        for (node, value) in self.nodes.iter_mut().zip(values) {
            node.value = value;
        }
        Ok(())
    }

    fn push(&mut self, node: Node) {
        self.nodes.push(node);
    }
}

/// Computes every node's value from the leaf values in a topological pass.
pub fn evaluate(dag: &Dag) -> Result<Vec<BigInt>, DagError> {
    let order = topological_order(dag)?;
    let mut values: Vec<Option<BigInt>> = vec![None; dag.len()];
    for id in order {
        let node = dag.node(id);
        let value = match node.op {
            None => node.value.clone(),
            Some(op) => {
                let args: Vec<BigInt> = node
                    .parents
                    .iter()
                    .map(|p| values[p.0].clone().expect("parents precede children"))
                    .collect();
                op.apply(&args)
            }
        };
        values[id.0] = Some(value);
    }
    Ok(values.into_iter().map(|v| v.expect("every node ordered")).collect())
}

/// Canonical order: Kahn's method taking the lowest available id each step.
pub fn topological_order(dag: &Dag) -> Result<Vec<NodeId>, DagError> {
    kahn(dag, |available: &mut BinaryHeap<Reverse<usize>>| {
        available.pop().map(|Reverse(i)| i)
    })
}

/// Kahn's method choosing uniformly among the currently available nodes,
/// which are kept sorted by id (`rng.below(len)` indexes into that list).
pub fn sample_topological_order(dag: &Dag, rng: &mut SplitMix64) -> Result<Vec<NodeId>, DagError> {
    let (children, mut pending) = edge_counts(dag);
    let mut available: Vec<usize> = (0..dag.len()).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(dag.len());
    while !available.is_empty() {
        let next = available.remove(rng.below(available.len()));
        order.push(NodeId(next));
        for &c in &children[next] {
            pending[c] -= 1;
            if pending[c] == 0 {
                let at = available.partition_point(|&a| a < c);
                available.insert(at, c);
            }
        }
    }
    finish(dag, order, &pending)
}

fn kahn<F>(dag: &Dag, mut pick: F) -> Result<Vec<NodeId>, DagError>
where
    F: FnMut(&mut BinaryHeap<Reverse<usize>>) -> Option<usize>,
{
    let (children, mut pending) = edge_counts(dag);
    let mut available: BinaryHeap<Reverse<usize>> = (0..dag.len())
        .filter(|&i| pending[i] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(dag.len());
    while let Some(next) = pick(&mut available) {
        order.push(NodeId(next));
        for &c in &children[next] {
            pending[c] -= 1;
            if pending[c] == 0 {
                available.push(Reverse(c));
            }
        }
    }
    finish(dag, order, &pending)
}

/// Child adjacency and unresolved-parent counts. A node listing the same
/// parent twice counts that edge twice.
fn edge_counts(dag: &Dag) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut children = vec![Vec::new(); dag.len()];
    let mut pending = vec![0usize; dag.len()];
    for node in dag.nodes() {
        for p in &node.parents {
            children[p.0].push(node.id.0);
            pending[node.id.0] += 1;
        }
    }
    (children, pending)
}

fn finish(dag: &Dag, order: Vec<NodeId>, pending: &[usize]) -> Result<Vec<NodeId>, DagError> {
    if order.len() == dag.len() {
        return Ok(order);
    }
    let stuck = pending
        .iter()
        .position(|&p| p > 0)
        .expect("an unordered node still has pending parents");
    Err(DagError::Cycle(dag.node(NodeId(stuck)).name.clone()))
}

/// Base-26 node names: `aaa`, `aab`, …, `zzz`, then `aaaa`, ….
pub fn node_name(mut index: usize) -> String {
    let mut width = 3;
    let mut block = 26usize.pow(3);
    while index >= block {
        index -= block;
        width += 1;
        block *= 26;
    }
    let mut letters = vec![b'a'; width];
    for slot in letters.iter_mut().rev() {
        *slot = b'a' + (index % 26) as u8;
        index /= 26;
    }
    String::from_utf8(letters).expect("ascii")
}

/// Hands out names from the base-26 sequence, skipping names already taken.
#[derive(Debug, Clone)]
pub struct NameGen {
    next: usize,
    taken: HashSet<String>,
}

impl NameGen {
    pub fn new() -> Self {
        Self {
            next: 0,
            taken: HashSet::new(),
        }
    }

    pub fn avoiding<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            next: 0,
            taken: names.into_iter().map(str::to_owned).collect(),
        }
    }

    pub fn fresh(&mut self) -> String {
        loop {
            let name = node_name(self.next);
            self.next += 1;
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }
}

impl Default for NameGen {
    fn default() -> Self {
        Self::new()
    }
}

/// Generates a complete tree of the given depth, root first.
///
/// Each non-leaf samples its operator (`rng.below(|ops|)`) before recursing
/// into its 1 or 2 parents; nodes are created, and named, once their parents
/// exist, so ids follow post-order. Leaf values are drawn afterwards in id
/// order and the tree is evaluated bottom-up.
pub fn generate_dag(task: Task, depth: usize, rng: &mut SplitMix64) -> Result<Dag, DagError> {
    if depth == 0 {
        return Err(DagError::InvalidDepth(depth));
    }
    fn build(
        level: usize,
        depth: usize,
        ops: &[Operator],
        rng: &mut SplitMix64,
        nodes: &mut Vec<Node>,
    ) -> NodeId {
        let op = (level <= depth).then(|| ops[rng.below(ops.len())]);
        let parents = match op {
            Some(op) => (0..op.arity())
                .map(|_| build(level + 1, depth, ops, rng, nodes))
                .collect(),
            None => Vec::new(),
        };
        let id = NodeId(nodes.len());
        nodes.push(Node {
            id,
            name: node_name(id.0),
            op,
            parents,
            value: BigInt::zero(),
        });
        id
    }
    let mut nodes = Vec::new();
    let root = build(1, depth, task.operators(), rng, &mut nodes);
    for node in nodes.iter_mut().filter(|n| n.is_leaf()) {
        node.value = BigInt::from(rng.below(task.leaf_value_count()));
    }
    let mut dag = Dag::new(nodes, root)?;
    dag.reevaluate()?;
    Ok(dag)
}

/// One distractor dependency: an internal node over 1–2 fresh leaves, none
/// of which reach the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundantUnit {
    pub internal: NodeId,
    pub leaves: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub task: Task,
    pub depth: usize,
    #[serde(with = "crate::serde_u64_string")]
    pub seed: u64,
    pub dag: Dag,
    pub redundant_units: Vec<RedundantUnit>,
}

impl Problem {
    /// Regenerates the problem for `(task, depth, redundancy, seed)`: one
    /// stream seeded with `seed` drives tree generation and then redundancy.
    pub fn generate(task: Task, depth: usize, redundancy: usize, seed: u64) -> Result<Self, DagError> {
        let mut rng = SplitMix64::new(seed);
        let dag = generate_dag(task, depth, &mut rng)?;
        let problem = Problem {
            task,
            depth,
            seed,
            dag,
            redundant_units: Vec::new(),
        };
        Ok(attach_redundancy(problem, redundancy, &mut rng))
    }

    pub fn difficulty(&self) -> usize {
        difficulty(&self.dag)
    }

    pub fn answer(&self) -> &BigInt {
        &self.dag.root_node().value
    }
}

/// A freshly drawn distractor unit, before it is placed in any graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitDraw {
    pub op: Operator,
    pub leaves: Vec<(String, BigInt)>,
    pub internal: String,
}

impl UnitDraw {
    pub fn value(&self) -> BigInt {
        let args: Vec<BigInt> = self.leaves.iter().map(|(_, v)| v.clone()).collect();
        self.op.apply(&args)
    }
}

/// Draws one unit: operator first, then one value per fresh leaf. Leaves
/// are named before their internal node.
pub fn draw_unit(task: Task, names: &mut NameGen, rng: &mut SplitMix64) -> UnitDraw {
    let ops = task.operators();
    let op = ops[rng.below(ops.len())];
    let leaves = (0..op.arity())
        .map(|_| {
            let value = BigInt::from(rng.below(task.leaf_value_count()));
            (names.fresh(), value)
        })
        .collect();
    UnitDraw {
        op,
        leaves,
        internal: names.fresh(),
    }
}

/// Appends `count` disconnected units drawn with [`draw_unit`].
pub fn attach_redundancy(mut problem: Problem, count: usize, rng: &mut SplitMix64) -> Problem {
    let mut names = NameGen::avoiding(problem.dag.nodes().iter().map(|n| n.name.as_str()));
    for _ in 0..count {
        let draw = draw_unit(problem.task, &mut names, rng);
        let value = draw.value();
        let mut leaves = Vec::with_capacity(draw.leaves.len());
        for (name, value) in draw.leaves {
            let id = NodeId(problem.dag.len());
            problem.dag.push(Node::leaf(id, name, value));
            leaves.push(id);
        }
        let internal = NodeId(problem.dag.len());
        problem.dag.push(Node {
            id: internal,
            name: draw.internal,
            op: Some(draw.op),
            parents: leaves.clone(),
            value,
        });
        problem.redundant_units.push(RedundantUnit { internal, leaves });
    }
    problem
}

/// Number of computation steps: non-leaf nodes in the root's ancestor-closure.
pub fn difficulty(dag: &Dag) -> usize {
    let mask = dag.relevant_mask();
    dag.nodes()
        .iter()
        .filter(|n| mask[n.id.0] && !n.is_leaf())
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(id: usize, name: &str, v: i64) -> Node {
        Node::leaf(NodeId(id), name, BigInt::from(v))
    }

    fn op(id: usize, name: &str, op: Operator, parents: &[usize]) -> Node {
        Node {
            id: NodeId(id),
            name: name.into(),
            op: Some(op),
            parents: parents.iter().map(|&p| NodeId(p)).collect(),
            value: BigInt::zero(),
        }
    }

    #[test]
    fn operator_semantics() {
        let b = |v: i64| BigInt::from(v);
        assert_eq!(Operator::Sub.apply(&[b(8), b(2)]), b(6));
        assert_eq!(Operator::Mul.apply(&[b(6), b(8)]), b(48));
        assert_eq!(Operator::Square.apply(&[b(7)]), b(49));
        assert_eq!(Operator::Or.apply(&[b(1), b(0)]), b(1));
        assert_eq!(Operator::And.apply(&[b(1), b(1)]), b(1));
        assert_eq!(Operator::And.apply(&[b(1), b(0)]), b(0));
        assert_eq!(Operator::Not.apply(&[b(1)]), b(0));
        assert_eq!(Operator::Sub.apply(&[b(5), b(5)]), b(0));
        assert_eq!(Operator::Add.apply(&[b(-3), b(10)]), b(7));
    }

    #[test]
    fn names_follow_base26() {
        assert_eq!(node_name(0), "aaa");
        assert_eq!(node_name(1), "aab");
        assert_eq!(node_name(25), "aaz");
        assert_eq!(node_name(26), "aba");
        assert_eq!(node_name(26 * 26 * 26 - 1), "zzz");
        assert_eq!(node_name(26 * 26 * 26), "aaaa");
        let mut gen = NameGen::avoiding(["aaa", "aac"]);
        assert_eq!(gen.fresh(), "aab");
        assert_eq!(gen.fresh(), "aad");
    }

    #[test]
    fn chain_has_a_unique_canonical_order() {
        let dag = Dag::new(
            vec![
                leaf(0, "a", 3),
                op(1, "b", Operator::Square, &[0]),
                op(2, "c", Operator::Square, &[1]),
            ],
            NodeId(2),
        )
        .unwrap();
        assert_eq!(
            topological_order(&dag).unwrap(),
            vec![NodeId(0), NodeId(1), NodeId(2)]
        );
        assert_eq!(evaluate(&dag).unwrap()[2], BigInt::from(81));
        for seed in 0..20 {
            let mut rng = SplitMix64::new(seed);
            assert_eq!(
                sample_topological_order(&dag, &mut rng).unwrap(),
                topological_order(&dag).unwrap()
            );
        }
    }

    #[test]
    fn canonical_order_respects_partial_order() {
        // D,E -> B ; F -> C ; B,C -> root
        let dag = Dag::new(
            vec![
                op(0, "root", Operator::Mul, &[1, 2]),
                op(1, "b", Operator::Add, &[3, 4]),
                op(2, "c", Operator::Square, &[5]),
                leaf(3, "d", 1),
                leaf(4, "e", 2),
                leaf(5, "f", 3),
            ],
            NodeId(0),
        )
        .unwrap();
        let order = topological_order(&dag).unwrap();
        let pos = |i: usize| order.iter().position(|n| n.0 == i).unwrap();
        assert!(pos(3) < pos(1) && pos(4) < pos(1));
        assert!(pos(5) < pos(2));
        assert_eq!(pos(0), 5);
        assert_eq!(order[..3], [NodeId(3), NodeId(4), NodeId(1)]);
    }

    #[test]
    fn diamond_has_exactly_two_orders() {
        let dag = Dag::new(
            vec![leaf(0, "x", 1), leaf(1, "y", 2), op(2, "z", Operator::Add, &[0, 1])],
            NodeId(2),
        )
        .unwrap();
        let mut seen = HashSet::new();
        let mut rng = SplitMix64::new(11);
        for _ in 0..200 {
            seen.insert(sample_topological_order(&dag, &mut rng).unwrap());
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn cycles_are_reported() {
        let dag = Dag::new(
            vec![
                op(0, "p", Operator::Square, &[1]),
                op(1, "q", Operator::Square, &[0]),
            ],
            NodeId(0),
        )
        .unwrap();
        assert!(matches!(evaluate(&dag), Err(DagError::Cycle(_))));
        assert!(matches!(topological_order(&dag), Err(DagError::Cycle(_))));
        let mut rng = SplitMix64::new(0);
        assert!(matches!(
            sample_topological_order(&dag, &mut rng),
            Err(DagError::Cycle(_))
        ));
    }

    #[test]
    fn structural_errors() {
        let bad_arity = Dag::new(vec![leaf(0, "a", 1), op(1, "b", Operator::Add, &[0])], NodeId(1));
        assert!(matches!(bad_arity, Err(DagError::Arity { .. })));
        let dup = Dag::new(vec![leaf(0, "a", 1), op(1, "a", Operator::Square, &[0])], NodeId(1));
        assert!(matches!(dup, Err(DagError::DuplicateName(_))));
        let mixed = Dag::new(
            vec![
                leaf(0, "a", 1),
                op(1, "b", Operator::Square, &[0]),
                op(2, "c", Operator::Not, &[1]),
            ],
            NodeId(2),
        );
        assert_eq!(mixed, Err(DagError::MixedTasks));
        let mut rng = SplitMix64::new(0);
        assert_eq!(
            generate_dag(Task::Logical, 0, &mut rng),
            Err(DagError::InvalidDepth(0))
        );
    }

    #[test]
    fn depth_one_is_a_single_operator() {
        for seed in 0..50 {
            let dag = generate_dag(Task::Arithmetic, 1, &mut SplitMix64::new(seed)).unwrap();
            let internal: Vec<_> = dag.nodes().iter().filter(|n| !n.is_leaf()).collect();
            assert_eq!(internal.len(), 1);
            assert_eq!(internal[0].id, dag.root());
            assert!((2..=3).contains(&dag.len()));
            assert_eq!(difficulty(&dag), 1);
            assert_eq!(dag.depth(), 1);
        }
    }

    #[test]
    fn redundancy_never_touches_the_root() {
        let base = Problem::generate(Task::Arithmetic, 3, 0, 99).unwrap();
        let extended = attach_redundancy(base.clone(), 40, &mut SplitMix64::new(5));
        assert_eq!(extended.redundant_units.len(), 40);
        assert_eq!(extended.answer(), base.answer());
        let mask = extended.dag.relevant_mask();
        for unit in &extended.redundant_units {
            assert!(!mask[unit.internal.0]);
            assert!(unit.leaves.iter().all(|l| !mask[l.0]));
        }
        assert_eq!(evaluate(&extended.dag).unwrap()[extended.dag.root().0], *base.answer());
        let same = attach_redundancy(base.clone(), 0, &mut SplitMix64::new(5));
        assert_eq!(same, base);
    }

    fn listing(dag: &Dag) -> Vec<(String, Option<Operator>, Vec<String>, i64)> {
        dag.nodes()
            .iter()
            .map(|n| {
                let parents = n.parents.iter().map(|&p| dag.node(p).name.clone()).collect();
                let value = i64::try_from(&n.value).unwrap();
                (n.name.clone(), n.op, parents, value)
            })
            .collect()
    }

    fn row(name: &str, op: Option<Operator>, parents: &[&str], v: i64) -> (String, Option<Operator>, Vec<String>, i64) {
        (name.into(), op, parents.iter().map(|p| p.to_string()).collect(), v)
    }

    // Frozen from an independent re-implementation of the generator over the
    // same splitmix64 stream.
    #[test]
    fn arithmetic_depth_two_seed_42() {
        use Operator::*;
        let dag = generate_dag(Task::Arithmetic, 2, &mut SplitMix64::new(42)).unwrap();
        assert_eq!(
            listing(&dag),
            vec![
                row("aaa", None, &[], 1),
                row("aab", Some(Square), &["aaa"], 1),
                row("aac", None, &[], 2),
                row("aad", None, &[], 9),
                row("aae", Some(Mul), &["aac", "aad"], 18),
                row("aaf", Some(Sub), &["aab", "aae"], -17),
            ]
        );
        assert_eq!(dag.root_node().name, "aaf");
    }

    #[test]
    fn logical_depth_three_is_a_complete_binary_tree_for_seed_7() {
        use Operator::*;
        let dag = generate_dag(Task::Logical, 3, &mut SplitMix64::new(7)).unwrap();
        let got = listing(&dag);
        assert_eq!(got.len(), 15);
        assert_eq!(got[6], row("aag", Some(And), &["aac", "aaf"], 0));
        assert_eq!(got[13], row("aan", Some(Or), &["aaj", "aam"], 0));
        assert_eq!(got[14], row("aao", Some(And), &["aag", "aan"], 0));
        assert_eq!(dag.depth(), 3);
        assert_eq!(difficulty(&dag), 7);
    }
}
