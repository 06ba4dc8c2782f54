use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Neg, Sub};

/// A lattice point of `Z^d` for `d` in `{1, 2}`.
///
/// One-dimensional modes keep their second slot at zero so that arithmetic
/// and ordering work the same way for both dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    dim: u8,
    comps: [i32; 2],
}

impl ModeIndex {
    pub const fn new_1d(n: i32) -> Self {
        ModeIndex {
            dim: 1,
            comps: [n, 0],
        }
    }

    pub const fn new_2d(n1: i32, n2: i32) -> Self {
        ModeIndex {
            dim: 2,
            comps: [n1, n2],
        }
    }

    /// Builds a mode from its components, panicking on lengths other than 1 or 2.
    pub fn from_components(c: &[i32]) -> Self {
        match c {
            [a] => Self::new_1d(*a),
            [a, b] => Self::new_2d(*a, *b),
            _ => panic!("mode dimension must be 1 or 2, got {}", c.len()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn components(&self) -> &[i32] {
        &self.comps[..self.dim as usize]
    }

    pub fn first(&self) -> i32 {
        self.comps[0]
    }

    pub fn second(&self) -> i32 {
        self.comps[1]
    }

    /// Membership in `D^d`: the first component is nonzero.
    pub fn is_active(&self) -> bool {
        self.comps[0] != 0
    }

    /// The mode size `|n| = sum_j |n_j|`.
    pub fn l1(&self) -> i64 {
        self.comps.iter().map(|c| (*c as i64).abs()).sum()
    }

    pub fn euclid_sq(&self) -> i64 {
        self.comps.iter().map(|c| (*c as i64) * (*c as i64)).sum()
    }

    pub fn max_abs(&self) -> i32 {
        self.comps[0].abs().max(self.comps[1].abs())
    }

    pub fn scale(&self, factor: i32) -> Self {
        ModeIndex {
            dim: self.dim,
            comps: [self.comps[0] * factor, self.comps[1] * factor],
        }
    }

    /// `Some(n / 2)` when every component is even.
    pub fn half(&self) -> Option<Self> {
        if self.comps.iter().all(|c| c % 2 == 0) {
            Some(ModeIndex {
                dim: self.dim,
                comps: [self.comps[0] / 2, self.comps[1] / 2],
            })
        } else {
            None
        }
    }

    /// Components joined by `;`, the column format used in reports.
    pub fn joined(&self) -> String {
        self.components()
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dim {
            1 => write!(f, "({})", self.comps[0]),
            _ => write!(f, "({},{})", self.comps[0], self.comps[1]),
        }
    }
}

impl Neg for ModeIndex {
    type Output = ModeIndex;
    fn neg(self) -> ModeIndex {
        ModeIndex {
            dim: self.dim,
            comps: [-self.comps[0], -self.comps[1]],
        }
    }
}

impl Add for ModeIndex {
    type Output = ModeIndex;
    fn add(self, rhs: ModeIndex) -> ModeIndex {
        debug_assert_eq!(self.dim, rhs.dim);
        ModeIndex {
            dim: self.dim,
            comps: [self.comps[0] + rhs.comps[0], self.comps[1] + rhs.comps[1]],
        }
    }
}

impl Sub for ModeIndex {
    type Output = ModeIndex;
    fn sub(self, rhs: ModeIndex) -> ModeIndex {
        self + (-rhs)
    }
}
