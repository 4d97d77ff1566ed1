//! A fully enumerable cell search space: a 4-node DAG with one of five
//! dense-world operations on each of its six edges, giving 5^6 = 15625
//! architectures.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Activation, Graph, GraphBuilder, Model, NodeId};

pub const NUM_EDGES: usize = 6;
pub const NUM_OPS: usize = 5;
pub const NUM_NODES: usize = 4;
/// Number of distinct architectures in the space.
pub const SPACE_SIZE: u32 = 15625;

/// `(source, destination)` node of each edge, in encoding order.
pub const EDGES: [(usize, usize); NUM_EDGES] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Op {
    Zero = 0,
    SkipConnect = 1,
    DenseRelu = 2,
    DenseTanh = 3,
    DenseIdentity = 4,
}

impl Op {
    pub const ALL: [Op; NUM_OPS] = [Op::Zero, Op::SkipConnect, Op::DenseRelu, Op::DenseTanh, Op::DenseIdentity];

    pub fn from_index(i: usize) -> Option<Op> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Zero => "zero",
            Op::SkipConnect => "skip_connect",
            Op::DenseRelu => "dense_relu",
            Op::DenseTanh => "dense_tanh",
            Op::DenseIdentity => "dense_identity",
        }
    }

    fn activation(self) -> Option<Activation> {
        match self {
            Op::DenseRelu => Some(Activation::Relu),
            Op::DenseTanh => Some(Activation::Tanh),
            Op::DenseIdentity => Some(Activation::Identity),
            Op::Zero | Op::SkipConnect => None,
        }
    }
}

/// One operation per cell edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellArch {
    ops: [Op; NUM_EDGES],
}

impl CellArch {
    pub fn new(ops: [Op; NUM_EDGES]) -> Self {
        Self { ops }
    }

    pub fn from_indices(ops: [usize; NUM_EDGES]) -> Result<Self> {
        let mut out = [Op::Zero; NUM_EDGES];
        for (slot, &i) in out.iter_mut().zip(&ops) {
            *slot = Op::from_index(i).ok_or_else(|| Error::InvalidArgument(format!("op id {i} >= {NUM_OPS}")))?;
        }
        Ok(Self { ops: out })
    }

    pub fn ops(&self) -> &[Op; NUM_EDGES] {
        &self.ops
    }

    pub fn op_indices(&self) -> [usize; NUM_EDGES] {
        self.ops.map(Op::index)
    }

    /// `Σ ops[e]·5^e`.
    pub fn id(&self) -> u32 {
        self.ops.iter().rev().fold(0u32, |acc, op| acc * NUM_OPS as u32 + op.index() as u32)
    }

    pub fn hamming(&self, other: &CellArch) -> usize {
        self.ops.iter().zip(&other.ops).filter(|(a, b)| a != b).count()
    }

    pub fn has_relu(&self) -> bool {
        self.ops.contains(&Op::DenseRelu)
    }
}

impl fmt::Display for CellArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.ops.iter().map(|o| o.name()).collect();
        write!(f, "{}", names.join("|"))
    }
}

pub fn decode_arch(id: u64) -> Result<CellArch> {
    if id >= SPACE_SIZE as u64 {
        return Err(Error::ArchIdOutOfRange(id));
    }
    let mut rest = id as usize;
    let mut ops = [Op::Zero; NUM_EDGES];
    for slot in ops.iter_mut() {
        *slot = Op::ALL[rest % NUM_OPS];
        rest /= NUM_OPS;
    }
    Ok(CellArch { ops })
}

pub fn encode_arch(arch: &CellArch) -> u32 {
    arch.id()
}

/// Uniform draw over the whole space.
pub fn random_arch<R: Rng + ?Sized>(rng: &mut R) -> CellArch {
    let id = rng.gen_range(0..SPACE_SIZE);
    decode_arch(id as u64).expect("id drawn inside the space")
}

/// Reassigns one uniformly chosen edge to a uniformly chosen different op.
pub fn mutate_arch<R: Rng + ?Sized>(parent: &CellArch, rng: &mut R) -> CellArch {
    let edge = rng.gen_range(0..NUM_EDGES);
    let shift = rng.gen_range(1..NUM_OPS);
    let mut ops = parent.ops;
    ops[edge] = Op::ALL[(ops[edge].index() + shift) % NUM_OPS];
    CellArch { ops }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpaceSpec {
    pub cell_width: usize,
    pub num_cells: usize,
}

impl Default for SearchSpaceSpec {
    fn default() -> Self {
        Self { cell_width: 16, num_cells: 2 }
    }
}

impl SearchSpaceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cell_width == 0 {
            return Err(Error::Config { field: "space.cell_width".into(), message: "must be >= 1".into() });
        }
        if self.num_cells == 0 {
            return Err(Error::Config { field: "space.num_cells".into(), message: "must be >= 1".into() });
        }
        Ok(())
    }
}

/// A cell architecture compiled to a runnable graph: dense identity stem,
/// `num_cells` stacked cells and a biased dense classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct ExecutableArch {
    arch: CellArch,
    space: SearchSpaceSpec,
    input_dim: usize,
    num_classes: usize,
    graph: Graph,
}

impl ExecutableArch {
    pub fn arch(&self) -> &CellArch {
        &self.arch
    }

    pub fn space(&self) -> &SearchSpaceSpec {
        &self.space
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

impl Model for ExecutableArch {
    fn graph(&self) -> &Graph {
        &self.graph
    }

    fn arch_id(&self) -> Option<u32> {
        Some(self.arch.id())
    }
}

/// Node `j` of each cell is the sum of `op_e(node_src(e))` over its incoming
/// edges. Parameters are laid out stem, then cells in order with their dense
/// edges in edge order, then the head.
pub fn materialize(arch: &CellArch, space: &SearchSpaceSpec, input_dim: usize, num_classes: usize) -> ExecutableArch {
    let w = space.cell_width;
    let mut b = GraphBuilder::new(input_dim);
    let mut cur = b.dense("stem", b.input(), w, Activation::Identity, true);
    for c in 0..space.num_cells {
        let mut nodes: Vec<NodeId> = vec![cur];
        for j in 1..NUM_NODES {
            let mut incoming = Vec::new();
            for (e, &(src, dst)) in EDGES.iter().enumerate() {
                if dst != j {
                    continue;
                }
                let op = arch.ops[e];
                match op.activation() {
                    Some(act) => {
                        let label = format!("cell{c}.edge{e}.{}", op.name());
                        incoming.push(b.dense(label, nodes[src], w, act, true));
                    }
                    None if op == Op::SkipConnect => incoming.push(nodes[src]),
                    None => {}
                }
            }
            let node = b.sum(format!("cell{c}.node{j}"), &incoming, w).expect("cell nodes share the width");
            nodes.push(node);
        }
        cur = nodes[NUM_NODES - 1];
    }
    let head = b.dense("head", cur, num_classes, Activation::Identity, true);
    ExecutableArch { arch: *arch, space: *space, input_dim, num_classes, graph: b.finish(head) }
}
