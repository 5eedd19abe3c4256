use crate::error::{Error, Result};
use crate::halfspace::{BaseGrid, Point};

/// Open subset of the base box: the interior of a union of closed grid
/// cells. Everything outside the box counts as complement.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenSet {
    grid: BaseGrid,
    mask: Vec<bool>,
    /// Cells outside the set that touch it (including diagonally). The
    /// nearest complement point of any point of the set lies in one of them
    /// or on the box boundary.
    rim: Vec<usize>,
}

impl OpenSet {
    pub fn from_mask(grid: BaseGrid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::ValueLength { expected: grid.len(), got: mask.len() });
        }
        let rim = rim_cells(&grid, &mask);
        Ok(Self { grid, mask, rim })
    }

    pub fn empty(grid: BaseGrid) -> Self {
        let mask = vec![false; grid.len()];
        Self { grid, mask, rim: Vec::new() }
    }

    pub fn from_cells(grid: BaseGrid, cells: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; grid.len()];
        for c in cells {
            if c >= grid.len() {
                return Err(Error::InvalidParameter(format!("cell {c} outside the base grid")));
            }
            mask[c] = true;
        }
        Self::from_mask(grid, mask)
    }

    /// Cells whose centers satisfy `pred`.
    pub fn from_centers(grid: BaseGrid, pred: impl Fn(&Point) -> bool) -> Self {
        let mask = (0..grid.len()).map(|c| pred(&grid.center(c))).collect();
        Self::from_mask(grid, mask).expect("mask built with grid length")
    }

    /// Cells with center in `(a, b)`; on an aligned grid this is exactly the interval.
    pub fn interval(grid: BaseGrid, a: f64, b: f64) -> Self {
        Self::from_centers(grid, |p| p[0] > a && p[0] < b)
    }

    /// Cells with center in the open ball.
    pub fn ball(grid: BaseGrid, center: Point, radius: f64) -> Self {
        Self::from_centers(grid, |p| crate::halfspace::dist(p, &center) < radius)
    }

    pub fn grid(&self) -> &BaseGrid {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains_cell(&self, cell: usize) -> bool {
        self.mask[cell]
    }

    /// Sorted cell indices.
    pub fn cells(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn measure(&self) -> f64 {
        self.cell_count() as f64 * self.grid.cell_volume()
    }

    pub fn rim(&self) -> &[usize] {
        &self.rim
    }

    pub fn is_subset_of(&self, other: &OpenSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &OpenSet) -> Result<OpenSet> {
        self.check_grid(other)?;
        let mask = self.mask.iter().zip(&other.mask).map(|(&a, &b)| a || b).collect();
        OpenSet::from_mask(self.grid.clone(), mask)
    }

    fn check_grid(&self, other: &OpenSet) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("open sets live on different base grids".into()));
        }
        Ok(())
    }

    /// Distance from `p` to the complement; zero when `p` is not in the set.
    pub fn dist_to_complement(&self, p: &Point) -> f64 {
        let Some(cell) = self.grid.locate(p) else {
            return 0.0;
        };
        if !self.mask[cell] {
            return 0.0;
        }
        self.rim
            .iter()
            .map(|&c| self.grid.distance_to_cell(p, c))
            .fold(self.grid.distance_to_box_exterior(p), f64::min)
    }

    pub fn contains_point(&self, p: &Point) -> bool {
        self.dist_to_complement(p) > 0.0
    }

    /// `dist_to_complement` at every base-cell center.
    pub fn center_distances(&self) -> Vec<f64> {
        crate::par::map_range(self.grid.len(), |c| {
            if self.mask[c] {
                self.dist_to_complement(&self.grid.center(c))
            } else {
                0.0
            }
        })
    }

    /// Deepest point of the set: `max dist_to_complement` over centers.
    pub fn inradius(&self) -> f64 {
        self.center_distances().into_iter().fold(0.0, f64::max)
    }

    /// True when the set touches the boundary of the base box.
    pub fn touches_box(&self) -> bool {
        let (rows, cols) = (self.grid.rows(), self.grid.cols());
        self.cells().into_iter().any(|c| {
            let (r, k) = self.grid.row_col(c);
            k == 0 || k + 1 == cols || (self.grid.dim() == 2 && (r == 0 || r + 1 == rows))
        })
    }
}

fn rim_cells(grid: &BaseGrid, mask: &[bool]) -> Vec<usize> {
    let (rows, cols) = (grid.rows() as isize, grid.cols() as isize);
    let mut out = Vec::new();
    for c in 0..grid.len() {
        if mask[c] {
            continue;
        }
        let (r, k) = grid.row_col(c);
        let (r, k) = (r as isize, k as isize);
        let touches = (-1..=1).any(|dr| {
            (-1..=1).any(|dk| {
                let (rr, kk) = (r + dr, k + dk);
                rr >= 0 && rr < rows && kk >= 0 && kk < cols && mask[(rr * cols + kk) as usize]
            })
        });
        if touches {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> BaseGrid {
        BaseGrid::new(1, 4.0, 1.0 / 16.0).unwrap()
    }

    #[test]
    fn unit_interval_is_exact() {
        let e = OpenSet::interval(line(), 0.0, 1.0);
        assert_eq!(e.cell_count(), 16);
        assert!((e.measure() - 1.0).abs() < 1e-15);
        assert!((e.dist_to_complement(&[0.5, 0.0]) - 0.5).abs() < 1e-15);
        assert!((e.dist_to_complement(&[0.2, 0.0]) - 0.2).abs() < 1e-15);
        assert_eq!(e.dist_to_complement(&[1.0, 0.0]), 0.0);
        assert_eq!(e.dist_to_complement(&[-0.1, 0.0]), 0.0);
    }

    #[test]
    fn box_boundary_is_complement() {
        let g = line();
        let e = OpenSet::from_cells(g.clone(), 0..4).unwrap();
        assert!(e.touches_box());
        assert!((e.dist_to_complement(&g.center(0)) - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn square_distance_uses_corners() {
        let g = BaseGrid::new(2, 2.0, 0.5).unwrap();
        // Single cell [0, 0.5]^2 plus its right neighbour.
        let a = g.locate(&[0.25, 0.25]).unwrap();
        let b = g.locate(&[0.25, 0.75]).unwrap();
        let e = OpenSet::from_cells(g, [a, b]).unwrap();
        assert!((e.dist_to_complement(&[0.25, 0.5]) - 0.25).abs() < 1e-15);
        assert!((e.inradius() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_set() {
        let e = OpenSet::empty(line());
        assert!(e.is_empty());
        assert_eq!(e.measure(), 0.0);
        assert_eq!(e.dist_to_complement(&[0.0, 0.0]), 0.0);
    }
}
