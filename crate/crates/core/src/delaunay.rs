//! Delaunay triangulation of small 2D point sets.
//!
//! Backed by `spade`'s incremental triangulation, which evaluates its
//! orientation and in-circle predicates with adaptive-precision arithmetic.

use spade::{DelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

use crate::graph::Adjacency;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelaunayError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("all points are collinear")]
    CollinearInput,
    #[error("point {0} duplicates an earlier point")]
    DuplicatePoint(usize),
    #[error("point {0} is not finite")]
    NonFinitePoint(usize),
}

/// Adjacency of the Delaunay edge set of `points`.
pub fn triangulate(points: &[[f64; 2]]) -> Result<Adjacency, DelaunayError> {
    if points.len() < 3 {
        return Err(DelaunayError::TooFewPoints(points.len()));
    }
    let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    for (i, p) in points.iter().enumerate() {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(DelaunayError::NonFinitePoint(i));
        }
        let handle = tri
            .insert(Point2::new(p[0], p[1]))
            .map_err(|_| DelaunayError::NonFinitePoint(i))?;
        if handle.index() != i {
            return Err(DelaunayError::DuplicatePoint(i));
        }
    }
    if tri.num_inner_faces() == 0 {
        return Err(DelaunayError::CollinearInput);
    }
    let mut adj = Adjacency::empty(points.len());
    for edge in tri.undirected_edges() {
        let [a, b] = edge.vertices();
        adj.insert(a.fix().index(), b.fix().index())
            .expect("triangulation edges join distinct input points");
    }
    Ok(adj)
}
