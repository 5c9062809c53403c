//! Line and grid topologies with globally consistent orientation.

use serde::Serialize;

use crate::error::{Error, Result};

pub type AgentId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Left, Direction::Right, Direction::Up, Direction::Down];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Direction::Left | Direction::Right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Line,
    Grid,
}

/// Agents are numbered row-major: `id = row * a + col`. A line is a single row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    kind: TopologyKind,
    a: usize,
    b: usize,
    neighbors: Vec<[Option<AgentId>; 4]>,
}

pub fn build_line(n: usize) -> Result<Topology> {
    if n == 0 {
        return Err(Error::InvalidSize("line needs at least one agent".into()));
    }
    Ok(Topology::rows_by_cols(TopologyKind::Line, n, 1))
}

/// `a` columns by `b` rows.
pub fn build_grid(a: usize, b: usize) -> Result<Topology> {
    if a == 0 || b == 0 {
        return Err(Error::InvalidSize(format!("grid {a}x{b} has a zero dimension")));
    }
    Ok(Topology::rows_by_cols(TopologyKind::Grid, a, b))
}

impl Topology {
    fn rows_by_cols(kind: TopologyKind, a: usize, b: usize) -> Topology {
        let mut neighbors = Vec::with_capacity(a * b);
        for row in 0..b {
            for col in 0..a {
                let id = row * a + col;
                let mut nb = [None; 4];
                if col > 0 {
                    nb[Direction::Left.index()] = Some(id - 1);
                }
                if col + 1 < a {
                    nb[Direction::Right.index()] = Some(id + 1);
                }
                if row > 0 {
                    nb[Direction::Up.index()] = Some(id - a);
                }
                if row + 1 < b {
                    nb[Direction::Down.index()] = Some(id + a);
                }
                neighbors.push(nb);
            }
        }
        Topology { kind, a, b, neighbors }
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.a
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.b
    }

    pub fn neighbor(&self, id: AgentId, dir: Direction) -> Option<AgentId> {
        self.neighbors[id][dir.index()]
    }

    pub fn degree(&self, id: AgentId) -> usize {
        self.neighbors[id].iter().flatten().count()
    }

    pub fn position(&self, id: AgentId) -> (usize, usize) {
        (id % self.a, id / self.a)
    }

    pub fn id_at(&self, col: usize, row: usize) -> AgentId {
        row * self.a + col
    }

    pub fn check(&self, id: AgentId) -> Result<()> {
        if id < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: id, len: self.len() })
        }
    }
}
