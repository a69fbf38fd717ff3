//! Density-based clustering over embedding vectors.
//!
//! Classic DBSCAN with euclidean distance. A point's ε-neighborhood includes
//! the point itself; a point is a core point when its neighborhood holds at
//! least `min_pts` points. Border points are claimed by the first cluster
//! that reaches them, clusters being seeded in input order, so the labeling
//! is deterministic for a fixed input order.

use num_traits::Float;

use crate::numeric;

/// Cluster assignment for one input point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    /// Not density-reachable from any core point.
    Noise,
    /// Member of the cluster with this index (dense from 0, in discovery
    /// order).
    Cluster(usize),
}

/// Run DBSCAN over `points`. All rows must share a dimension.
pub fn dbscan<F: Float>(points: &[&[F]], eps: F, min_pts: usize) -> Vec<Label> {
    const UNVISITED: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;

    let n = points.len();
    let neighborhood = |p: usize| -> Vec<usize> {
        (0..n)
            .filter(|&q| numeric::euclidean(points[p], points[q]) <= eps)
            .collect()
    };

    let mut labels = vec![UNVISITED; n];
    let mut next_cluster = 0usize;
    for p in 0..n {
        if labels[p] != UNVISITED {
            continue;
        }
        let neighbors = neighborhood(p);
        if neighbors.len() < min_pts {
            labels[p] = NOISE;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[p] = cluster;
        let mut queue: std::collections::VecDeque<usize> =
            neighbors.into_iter().filter(|&q| q != p).collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cluster; // border point claimed
                continue;
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = cluster;
            let q_neighbors = neighborhood(q);
            if q_neighbors.len() >= min_pts {
                queue.extend(q_neighbors.into_iter().filter(|&r| labels[r] == UNVISITED || labels[r] == NOISE));
            }
        }
    }

    labels
        .into_iter()
        .map(|l| if l == NOISE { Label::Noise } else { Label::Cluster(l) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Label> {
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        dbscan(&refs, eps, min_pts)
    }

    #[test]
    fn three_near_points_plus_outlier() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.0, 0.1],
            vec![0.1, 0.0],
            vec![10.0, 10.0],
        ];
        let labels = run(&pts, 0.5, 2);
        assert_eq!(labels[0], Label::Cluster(0));
        assert_eq!(labels[1], Label::Cluster(0));
        assert_eq!(labels[2], Label::Cluster(0));
        assert_eq!(labels[3], Label::Noise);
    }

    #[test]
    fn single_point_is_noise_when_min_pts_exceeds_one() {
        assert_eq!(run(&[vec![1.0]], 0.5, 2), vec![Label::Noise]);
        assert_eq!(run(&[vec![1.0]], 0.5, 1), vec![Label::Cluster(0)]);
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = vec![vec![2.0, 2.0]; 5];
        let labels = run(&pts, 0.1, 5);
        assert!(labels.iter().all(|&l| l == Label::Cluster(0)));
    }

    #[test]
    fn chain_connectivity() {
        // 0-1-2 form a chain where the ends are not directly within eps but
        // are density-connected through the middle core point.
        let pts = vec![vec![0.0], vec![0.4], vec![0.8], vec![5.0]];
        let labels = run(&pts, 0.5, 2);
        assert_eq!(labels[0], Label::Cluster(0));
        assert_eq!(labels[1], Label::Cluster(0));
        assert_eq!(labels[2], Label::Cluster(0));
        assert_eq!(labels[3], Label::Noise);
    }

    #[test]
    fn two_separate_clusters_in_discovery_order() {
        let pts = vec![vec![10.0], vec![10.1], vec![0.0], vec![0.1]];
        let labels = run(&pts, 0.2, 2);
        assert_eq!(labels[0], Label::Cluster(0));
        assert_eq!(labels[1], Label::Cluster(0));
        assert_eq!(labels[2], Label::Cluster(1));
        assert_eq!(labels[3], Label::Cluster(1));
    }

    #[test]
    fn border_point_goes_to_first_discovered_cluster() {
        // Point 8 sits between two dense groups, within eps of one core
        // point of each but not core itself.
        let pts = vec![
            vec![0.0],
            vec![0.1],
            vec![0.2],
            vec![0.3],
            vec![2.0],
            vec![2.1],
            vec![2.2],
            vec![2.3],
            vec![1.15],
        ];
        let labels = run(&pts, 0.85, 4);
        assert_eq!(labels[8], Label::Cluster(0));
        assert_eq!(labels[0], Label::Cluster(0));
        assert_eq!(labels[4], Label::Cluster(1));
    }
}
