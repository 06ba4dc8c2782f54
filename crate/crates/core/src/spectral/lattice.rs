use super::ModeIndex;
use serde::{Deserialize, Serialize};

/// The truncated square lattice `|n_j| <= nmax` in dimension 1 or 2.
///
/// Only the half-lattice `n_1 > 0` is stored; stored modes are numbered in
/// lexicographic order (`n_1` major, `n_2` from `-nmax` to `nmax`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    dim: usize,
    nmax: i32,
}

impl Lattice {
    pub fn new(dim: usize, nmax: i32) -> Self {
        assert!(dim == 1 || dim == 2, "dimension must be 1 or 2");
        assert!(nmax >= 1, "cutoff must be positive");
        Lattice { dim, nmax }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nmax(&self) -> i32 {
        self.nmax
    }

    fn row_len(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            2 * self.nmax as usize + 1
        }
    }

    /// Number of stored (`n_1 > 0`) modes.
    pub fn len(&self) -> usize {
        self.nmax as usize * self.row_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: ModeIndex) -> bool {
        n.dim() == self.dim && n.max_abs() <= self.nmax
    }

    /// The stored slot of `n`, for `n_1 > 0` modes inside the box.
    pub fn index_of(&self, n: ModeIndex) -> Option<usize> {
        if !self.contains(n) || n.first() <= 0 {
            return None;
        }
        let row = (n.first() - 1) as usize;
        let col = if self.dim == 1 {
            0
        } else {
            (n.second() + self.nmax) as usize
        };
        Some(row * self.row_len() + col)
    }

    pub fn mode(&self, index: usize) -> ModeIndex {
        let row = index / self.row_len();
        let col = index % self.row_len();
        if self.dim == 1 {
            ModeIndex::new_1d(row as i32 + 1)
        } else {
            ModeIndex::new_2d(row as i32 + 1, col as i32 - self.nmax)
        }
    }

    /// Stored modes in slot order.
    pub fn stored_modes(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        (0..self.len()).map(move |i| self.mode(i))
    }

    /// Every mode of `D^d` inside the box, both half-lattices, lexicographic.
    pub fn active_modes(&self) -> Vec<ModeIndex> {
        let m = self.nmax;
        let mut out = Vec::with_capacity(2 * self.len());
        for n1 in -m..=m {
            if n1 == 0 {
                continue;
            }
            if self.dim == 1 {
                out.push(ModeIndex::new_1d(n1));
            } else {
                for n2 in -m..=m {
                    out.push(ModeIndex::new_2d(n1, n2));
                }
            }
        }
        out
    }

    /// Pairs `(k, l)` of active in-box modes with `k + l = n`.
    pub fn triads_of(&self, n: ModeIndex) -> impl Iterator<Item = (ModeIndex, ModeIndex)> + '_ {
        let m = self.nmax;
        let dim = self.dim;
        let n1 = n.first();
        let n2 = n.second();
        let k1_lo = (n1 - m).max(-m);
        let k1_hi = (n1 + m).min(m);
        let (k2_lo, k2_hi) = if dim == 1 {
            (0, 0)
        } else {
            ((n2 - m).max(-m), (n2 + m).min(m))
        };
        (k1_lo..=k1_hi)
            .filter(move |&k1| k1 != 0 && k1 != n1)
            .flat_map(move |k1| {
                (k2_lo..=k2_hi).map(move |k2| {
                    if dim == 1 {
                        (ModeIndex::new_1d(k1), ModeIndex::new_1d(n1 - k1))
                    } else {
                        (
                            ModeIndex::new_2d(k1, k2),
                            ModeIndex::new_2d(n1 - k1, n2 - k2),
                        )
                    }
                })
            })
    }
}
