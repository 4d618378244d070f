//! Plan-view geometry helpers.

use core::ops::{Add, Mul, Sub};
#[allow(unused_imports)] // float methods are inherent once std is linked
use num_traits::Float;

/// A point in the 2-D plan view, metres.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product of `self` and `other`.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

/// Orientation of the triple `(a, b, c)`: positive for a counter-clockwise
/// turn, negative for clockwise, zero when collinear.
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

/// Arithmetic mean of a non-empty point set.
pub fn centroid<I: IntoIterator<Item = Point2>>(points: I) -> Option<Point2> {
    let mut n = 0usize;
    let mut acc = Point2::default();
    for p in points {
        acc = acc + p;
        n += 1;
    }
    (n > 0).then(|| acc * (1.0 / n as f64))
}

/// Axis-aligned rectangle, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub const fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn from_corner(origin: Point2, width: f64, height: f64) -> Self {
        Self::new(origin, Point2::new(origin.x + width, origin.y + height))
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.width() > 0.0 && self.height() > 0.0
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation_signs() {
        let a = Point2::new(0.0, 0.0);
        let b = Point2::new(1.0, 0.0);
        assert!(orient(a, b, Point2::new(0.0, 1.0)) > 0.0);
        assert!(orient(a, b, Point2::new(0.0, -1.0)) < 0.0);
        assert_eq!(orient(a, b, Point2::new(3.0, 0.0)), 0.0);
    }

    #[test]
    fn rect_containment_is_closed() {
        let r = Rect::from_corner(Point2::new(6.0, 7.0), 1.0, 2.0);
        assert!(r.contains(Point2::new(6.0, 7.0)));
        assert!(r.contains(Point2::new(7.0, 9.0)));
        assert!(!r.contains(Point2::new(7.01, 8.0)));
        assert_eq!(r.center(), Point2::new(6.5, 8.0));
    }
}
