//! Dense two-dimensional arrays indexed by `(x, y)`.
//!
//! Storage is column-major (`x` outer) because the region miner sweeps the
//! grid one column at a time.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    nx: usize,
    ny: usize,
    cells: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(nx: usize, ny: usize, value: T) -> Self {
        Grid {
            nx,
            ny,
            cells: vec![value; nx * ny],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut cells = Vec::with_capacity(nx * ny);
        for x in 0..nx {
            for y in 0..ny {
                cells.push(f(x, y));
            }
        }
        Grid { nx, ny, cells }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> &T {
        assert!(x < self.nx && y < self.ny, "cell ({x}, {y}) out of bounds");
        &self.cells[x * self.ny + y]
    }

    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        assert!(x < self.nx && y < self.ny, "cell ({x}, {y}) out of bounds");
        &mut self.cells[x * self.ny + y]
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        *self.get_mut(x, y) = value;
    }

    /// Cells of column `x`, ordered by `y`.
    pub fn column(&self, x: usize) -> &[T] {
        &self.cells[x * self.ny..(x + 1) * self.ny]
    }

    /// Iterates `(x, y, &value)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let ny = self.ny;
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, v)| (i / ny, i % ny, v))
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            nx: self.nx,
            ny: self.ny,
            cells: self.cells.iter().map(&mut f).collect(),
        }
    }

    /// Swaps the roles of `x` and `y`.
    pub fn transpose(&self) -> Grid<T>
    where
        T: Clone,
    {
        Grid::from_fn(self.ny, self.nx, |x, y| self.get(y, x).clone())
    }
}

/// Ordinal coordinate values of the two configuration axes, in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Axes {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Axes { x, y }
    }

    /// The same `lo..=hi` lattice on both axes.
    pub fn square(lo: i32, hi: i32, step: i32) -> Self {
        let values = lattice(lo, hi, step);
        Axes {
            x: values.clone(),
            y: values,
        }
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn ny(&self) -> usize {
        self.y.len()
    }

    /// Index of the `y` coordinate equal to `x[ix]`, if any.
    pub fn mirror_of(&self, ix: usize, iy: usize) -> Option<(usize, usize)> {
        let mx = self.x.iter().position(|v| *v == self.y[iy])?;
        let my = self.y.iter().position(|v| *v == self.x[ix])?;
        Some((mx, my))
    }
}

/// `lo, lo + step, ..., hi` (inclusive when `hi - lo` is a multiple of `step`).
pub fn lattice(lo: i32, hi: i32, step: i32) -> Vec<f64> {
    assert!(step > 0, "lattice step must be positive");
    (lo..=hi).step_by(step as usize).map(f64::from).collect()
}
