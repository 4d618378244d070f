use alloc::vec::Vec;

use super::LocalizationError;
use crate::geometry::{orient, Point2};

/// Convex hull vertices in counter-clockwise order.
#[derive(Debug, Clone, PartialEq)]
pub struct Hull {
    pub vertices: Vec<Point2>,
    /// Index of each vertex in the input slice.
    pub indices: Vec<usize>,
}

impl Hull {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Inside or on the boundary.
    pub fn contains(&self, p: Point2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| orient(self.vertices[i], self.vertices[(i + 1) % n], p) >= 0.0)
    }
}

/// Graham scan. Points on a hull edge between two vertices are not vertices.
pub fn graham_hull(points: &[Point2]) -> Result<Hull, LocalizationError> {
    if points.len() < 3 {
        return Err(LocalizationError::TooFewPoints(points.len()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(LocalizationError::NonFinite);
    }
    let pivot = (0..points.len())
        .min_by(|&a, &b| {
            let (p, q) = (points[a], points[b]);
            p.y.total_cmp(&q.y).then(p.x.total_cmp(&q.x))
        })
        .expect("non-empty");
    let o = points[pivot];
    let mut order: Vec<usize> = (0..points.len()).filter(|&i| i != pivot && points[i] != o).collect();
    // By polar angle around the pivot, nearer first on ties.
    order.sort_by(|&a, &b| {
        let turn = orient(o, points[a], points[b]);
        if turn > 0.0 {
            core::cmp::Ordering::Less
        } else if turn < 0.0 {
            core::cmp::Ordering::Greater
        } else {
            o.distance(points[a]).total_cmp(&o.distance(points[b]))
        }
    });

    let mut stack: Vec<usize> = alloc::vec![pivot];
    for &i in &order {
        while stack.len() >= 2 && orient(points[stack[stack.len() - 2]], points[stack[stack.len() - 1]], points[i]) <= 0.0 {
            stack.pop();
        }
        stack.push(i);
    }
    // The last sorted points may be collinear with the closing edge.
    while stack.len() >= 3 && orient(points[stack[stack.len() - 2]], points[stack[stack.len() - 1]], o) <= 0.0 {
        stack.pop();
    }
    if stack.len() < 3 {
        return Err(LocalizationError::Collinear);
    }
    Ok(Hull { vertices: stack.iter().map(|&i| points[i]).collect(), indices: stack })
}

/// Whether `md` lies inside or on the hull of `anchors`, i.e. it does not
/// become a hull vertex when added. Collinear anchors give `false`.
pub fn md_inside(anchors: &[Point2], md: Point2) -> bool {
    if anchors.contains(&md) {
        return graham_hull(anchors).is_ok();
    }
    if graham_hull(anchors).is_err() {
        return false;
    }
    let mut pts = anchors.to_vec();
    pts.push(md);
    match graham_hull(&pts) {
        Ok(h) => !h.indices.contains(&anchors.len()),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn square_with_center() {
        let pts = [p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(0.0, 10.0), p(5.0, 5.0)];
        let h = graham_hull(&pts).unwrap();
        assert_eq!(h.indices, [0, 1, 2, 3]);
    }

    #[test]
    fn circle_points_are_all_vertices() {
        let pts: Vec<Point2> = (0..5)
            .map(|k| {
                let a = k as f64 * core::f64::consts::TAU / 5.0;
                p(a.cos(), a.sin())
            })
            .collect();
        assert_eq!(graham_hull(&pts).unwrap().len(), 5);
    }

    #[test]
    fn collinear_boundary_points_excluded() {
        let pts = [p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0), p(2.0, 2.0), p(1.0, 1.0), p(0.0, 2.0), p(0.0, 1.0)];
        let h = graham_hull(&pts).unwrap();
        assert_eq!(h.indices, [0, 2, 3, 5]);
        assert_eq!(graham_hull(&[p(0.0, 0.0), p(1.0, 1.0), p(2.0, 2.0)]), Err(LocalizationError::Collinear));
    }

    #[test]
    fn inside_examples() {
        let sq = [p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(0.0, 10.0)];
        assert!(md_inside(&sq, p(5.0, 5.0)));
        assert!(!md_inside(&sq, p(11.0, 5.0)));
        assert!(md_inside(&sq, p(0.0, 5.0)));
        assert!(md_inside(&sq, p(10.0, 10.0)));
        assert!(!md_inside(&sq, p(0.0, 11.0)));
        assert!(!md_inside(&[p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0), p(3.0, 0.0)], p(1.5, 0.0)));
    }
}
