//! Periodic d-dimensional square lattice.
//!
//! Sites are flattened row-major with axis 0 fastest:
//! `index = c0 + N*c1 + N^2*c2 + ...`.

use crate::error::{Error, Result};

/// Geometry of a periodic hypercubic lattice with `n` sites per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeGeometry {
    dim: usize,
    n: usize,
    volume: usize,
}

impl LatticeGeometry {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::contract("lattice dimension must be >= 1"));
        }
        if n < 2 {
            return Err(Error::contract("lattice size N must be >= 2"));
        }
        let exp = u32::try_from(dim).map_err(|_| Error::contract("lattice dimension too large"))?;
        let volume = n
            .checked_pow(exp)
            .ok_or_else(|| Error::contract(format!("N^d overflows the site index ({n}^{dim})")))?;
        Ok(Self { dim, n, volume })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sites per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of sites, `N^d`.
    pub fn volume(&self) -> usize {
        self.volume
    }

    pub fn flatten(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.dim {
            return Err(Error::contract(format!(
                "expected {} coordinates, got {}",
                self.dim,
                coords.len()
            )));
        }
        let mut index = 0;
        let mut stride = 1;
        for (axis, &c) in coords.iter().enumerate() {
            if c >= self.n {
                return Err(Error::contract(format!(
                    "coordinate {c} on axis {axis} outside [0, {})",
                    self.n
                )));
            }
            index += c * stride;
            stride *= self.n;
        }
        Ok(index)
    }

    pub fn unflatten(&self, site: usize) -> Result<Vec<usize>> {
        self.check_site(site)?;
        let mut rest = site;
        Ok((0..self.dim)
            .map(|_| {
                let c = rest % self.n;
                rest /= self.n;
                c
            })
            .collect())
    }

    /// The `2d` nearest neighbours of `site`, ordered (axis 0 +, axis 0 -, axis 1 +, ...).
    ///
    /// For `N = 2` the + and - neighbours along an axis coincide and both are kept.
    pub fn neighbors(&self, site: usize) -> Result<Vec<usize>> {
        self.check_site(site)?;
        let mut out = Vec::with_capacity(2 * self.dim);
        self.neighbors_into(site, &mut out);
        Ok(out)
    }

    /// Unchecked variant used in the hot loop; appends to `out`.
    pub(crate) fn neighbors_into(&self, site: usize, out: &mut Vec<usize>) {
        let mut stride = 1;
        for _ in 0..self.dim {
            let c = (site / stride) % self.n;
            let base = site - c * stride;
            let up = if c + 1 == self.n { 0 } else { c + 1 };
            let down = if c == 0 { self.n - 1 } else { c - 1 };
            out.push(base + up * stride);
            out.push(base + down * stride);
            stride *= self.n;
        }
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.volume {
            return Err(Error::contract(format!(
                "site {site} outside [0, {})",
                self.volume
            )));
        }
        Ok(())
    }
}
