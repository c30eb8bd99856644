#pragma once

#include "coxforge/grid.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <utility>
#include <vector>

namespace coxforge {

/// Intrinsic (graph Laplacian) precision of a Besag field.
struct SparsePrecision {
    Eigen::SparseMatrix<double> q;  // compressed column, sorted indices

    Eigen::Index dim() const { return q.rows(); }

    /// Laplacian of an arbitrary undirected graph on n vertices.
    static SparsePrecision from_edges(Eigen::Index n, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& edges);
    /// Number of connected components of the adjacency graph.
    int components() const;
};

/// Queen adjacency (shared edge or corner) on the coarse lattice.
SparsePrecision besag_precision(const GridSpec& grid);
SparsePrecision besag_precision(int nx, int ny);

/// Sum of logs of the dim-1 positive eigenvalues. Uses the matrix-tree
/// identity |Q|_* = n * det(Q with one row and column removed), so only a
/// sparse Cholesky of the reduced matrix is needed. Throws a numeric error if
/// the graph is disconnected.
double log_gen_det(const SparsePrecision& q);

/// Sum over adjacent pairs of (v_i - v_j)^2, i.e. v'Qv.
double laplacian_quadratic(const SparsePrecision& q, const Eigen::VectorXd& v);

struct ConstrainedGaussian {
    SparsePrecision precision;
    double tau = 1.0;
};

/// Draw from N(0, (tau Q)^+) restricted to 1'x = 0: sample the field pinned at
/// its last vertex, then project onto the sum-zero subspace.
Eigen::VectorXd sample_constrained(const ConstrainedGaussian& g, std::uint64_t seed);

/// Matrix-market text of Q (debug dumps).
void write_matrix_market(const std::string& path, const SparsePrecision& q);

}  // namespace coxforge
