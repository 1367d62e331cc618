//! Fixtures shared by the benchmarks.

use mrf_core::grf::{deconvolve_alpha, heat_alpha, DEFAULT_MAX_TERMS};
use mrf_core::manifolds::sample_surface;
use mrf_core::{Bandwidth, KnnGraph, ModulationFunction, PointCloud, SurfaceSpec, WeightedGraph};

pub fn sphere(n: usize) -> PointCloud {
    sample_surface(&SurfaceSpec::sphere(), n).expect("valid sphere size")
}

pub fn sphere_knn(n: usize, k: usize) -> KnnGraph {
    mrf_core::graph::build_knn_graph(&sphere(n), k, Bandwidth::MedianEdge).expect("kNN graph")
}

/// Normalized adjacency of a periodic grid, the operator of the grid study.
pub fn grid_operator(n: usize, d: u32) -> WeightedGraph {
    let grid = mrf_core::graph::build_grid_graph(n, d).expect("grid");
    grid.graph().scaled(1.0 / (2 * d) as f64).expect("finite scale")
}

pub fn heat_modulation(t: f64) -> ModulationFunction {
    deconvolve_alpha(&heat_alpha(t, DEFAULT_MAX_TERMS).expect("heat series")).expect("deconvolution")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        assert_eq!(sphere(100).len(), 100);
        assert!(!sphere_knn(100, 8).disconnected);
        assert_eq!(grid_operator(5, 2).num_nodes(), 25);
        assert!(heat_modulation(1.0).support() > 10);
    }
}
