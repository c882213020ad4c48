use crate::error::{Error, Result};

/// A time grid on `[s, t]` that is uniform between forced nodes.
///
/// Every forced node (typically a breakpoint of some input function) inside
/// `(s, t)` is a grid node, and each segment between consecutive forced nodes
/// is split into equal cells no longer than the requested step.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(s: f64, t: f64, h: f64, forced: &[f64]) -> Result<Self> {
        if !(s.is_finite() && t.is_finite()) {
            return Err(Error::invalid(format!("non-finite interval [{s}, {t}]")));
        }
        if s > t {
            return Err(Error::invalid(format!(
                "interval start {s} exceeds end {t}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("step must be positive, got {h}")));
        }
        let mut anchors: Vec<f64> = forced.iter().copied().filter(|&x| x > s && x < t).collect();
        anchors.sort_by(f64::total_cmp);
        anchors.dedup();
        anchors.insert(0, s);
        anchors.push(t);
        anchors.dedup();

        let mut nodes = vec![s];
        for w in anchors.windows(2) {
            let (a, b) = (w[0], w[1]);
            let cells = (((b - a) / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let step = (b - a) / cells as f64;
            for c in 1..cells {
                nodes.push(a + c as f64 * step);
            }
            nodes.push(b);
        }
        Ok(Grid { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().expect("grid has at least one node")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cells(&self) -> impl DoubleEndedIterator<Item = (f64, f64)> + ExactSizeIterator + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn cell_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index of the node equal to `x` (up to a relative 1e-12).
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let tol = 1e-12 * x.abs().max(1.0);
        let i = self.nodes.partition_point(|&n| n < x - tol);
        (i < self.nodes.len() && (self.nodes[i] - x).abs() <= tol).then_some(i)
    }

    /// Index of the cell containing `x`, with cells closed on the left.
    pub fn cell_of(&self, x: f64) -> usize {
        let i = self.nodes.partition_point(|&n| n <= x);
        i.saturating_sub(1).min(self.cell_count().saturating_sub(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breakpoints_become_nodes() {
        let g = Grid::new(0.0, 70.0, 1.0 / 256.0, &[25.0]).unwrap();
        assert_eq!(g.cell_count(), 70 * 256);
        assert_eq!(g.index_of(25.0), Some(25 * 256));
        assert_eq!(g.nodes()[10 * 256], 10.0);
    }

    #[test]
    fn uneven_segments_use_smaller_cells() {
        let g = Grid::new(0.0, 1.0, 0.3, &[0.5, 7.0]).unwrap();
        assert_eq!(g.nodes().len(), 5);
        assert!(g.cells().all(|(a, b)| b - a <= 0.3 + 1e-15));
        assert_eq!(g.index_of(0.5), Some(2));
    }

    #[test]
    fn degenerate_interval() {
        let g = Grid::new(3.0, 3.0, 0.1, &[]).unwrap();
        assert_eq!(g.nodes(), &[3.0]);
        assert_eq!(g.cell_count(), 0);
        assert!(Grid::new(3.0, 2.0, 0.1, &[]).is_err());
        assert!(Grid::new(0.0, 2.0, 0.0, &[]).is_err());
    }
}
