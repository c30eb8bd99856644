#include "coxforge/gmrf.hpp"

#include "coxforge/error.hpp"
#include "coxforge/random.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <fstream>
#include <numeric>

namespace coxforge {

SparsePrecision SparsePrecision::from_edges(Eigen::Index n,
                                            const std::vector<std::pair<Eigen::Index, Eigen::Index>>& edges) {
    require(n >= 1, ErrorKind::dimension, "precision dimension must be positive");
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(edges.size() * 4);
    for (const auto& [i, j] : edges) {
        require(i >= 0 && j >= 0 && i < n && j < n && i != j, ErrorKind::dimension, "invalid adjacency edge");
        trips.emplace_back(i, j, -1.0);
        trips.emplace_back(j, i, -1.0);
        trips.emplace_back(i, i, 1.0);
        trips.emplace_back(j, j, 1.0);
    }
    SparsePrecision out;
    out.q.resize(n, n);
    out.q.setFromTriplets(trips.begin(), trips.end());
    out.q.makeCompressed();
    return out;
}

int SparsePrecision::components() const {
    const auto n = dim();
    std::vector<Eigen::Index> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), Eigen::Index{0});
    auto find = [&](Eigen::Index x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    int comps = static_cast<int>(n);
    for (Eigen::Index col = 0; col < q.outerSize(); ++col) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(q, col); it; ++it) {
            if (it.row() == col || it.value() == 0.0) continue;
            const auto a = find(it.row()), b = find(col);
            if (a != b) {
                parent[static_cast<std::size_t>(a)] = b;
                --comps;
            }
        }
    }
    return comps;
}

SparsePrecision besag_precision(int nx, int ny) {
    require(nx >= 1 && ny >= 1, ErrorKind::dimension, "grid dimensions must be positive");
    std::vector<std::pair<Eigen::Index, Eigen::Index>> edges;
    auto id = [nx](int c, int r) { return static_cast<Eigen::Index>(r) * nx + c; };
    for (int r = 0; r < ny; ++r) {
        for (int c = 0; c < nx; ++c) {
            // Forward half of the queen neighbourhood; each edge once.
            if (c + 1 < nx) edges.emplace_back(id(c, r), id(c + 1, r));
            if (r + 1 < ny) {
                edges.emplace_back(id(c, r), id(c, r + 1));
                if (c + 1 < nx) edges.emplace_back(id(c, r), id(c + 1, r + 1));
                if (c - 1 >= 0) edges.emplace_back(id(c, r), id(c - 1, r + 1));
            }
        }
    }
    return SparsePrecision::from_edges(static_cast<Eigen::Index>(nx) * ny, edges);
}

SparsePrecision besag_precision(const GridSpec& grid) { return besag_precision(grid.nx, grid.ny); }

double log_gen_det(const SparsePrecision& q) {
    const auto n = q.dim();
    require(q.components() == 1, ErrorKind::numeric,
            "generalized determinant needs a connected graph (zero eigenvalue has multiplicity " +
                std::to_string(q.components()) + ")");
    if (n == 1) return 0.0;
    const Eigen::SparseMatrix<double> reduced = q.q.topLeftCorner(n - 1, n - 1);
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt(reduced);
    require(llt.info() == Eigen::Success, ErrorKind::numeric, "Cholesky of the reduced precision failed");
    double logdet = 0.0;
    const Eigen::VectorXd diag = Eigen::SparseMatrix<double>(llt.matrixL()).diagonal();
    for (Eigen::Index i = 0; i < diag.size(); ++i) logdet += 2.0 * std::log(diag[i]);
    return std::log(static_cast<double>(n)) + logdet;
}

double laplacian_quadratic(const SparsePrecision& q, const Eigen::VectorXd& v) {
    require(v.size() == q.dim(), ErrorKind::dimension, "vector does not match the precision");
    return v.dot(q.q * v);
}

Eigen::VectorXd sample_constrained(const ConstrainedGaussian& g, std::uint64_t seed) {
    require(g.tau > 0.0, ErrorKind::parameter, "precision scale tau must be positive");
    const auto n = g.precision.dim();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (n == 1) return x;
    NormalSource normal(seed);
    const Eigen::SparseMatrix<double> reduced = g.tau * g.precision.q.topLeftCorner(n - 1, n - 1);
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt(reduced);
    require(llt.info() == Eigen::Success, ErrorKind::numeric, "Cholesky of the reduced precision failed");
    // With P Q P' = L L', x = P' L^{-T} z has covariance Q^{-1}.
    Eigen::VectorXd z(n - 1);
    for (Eigen::Index i = 0; i < n - 1; ++i) z[i] = normal();
    Eigen::VectorXd w = llt.matrixU().solve(z);
    x.head(n - 1) = llt.permutationPinv() * w;
    x.array() -= x.mean();
    return x;
}

void write_matrix_market(const std::string& path, const SparsePrecision& q) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write '" + path + "'");
    out << "%%MatrixMarket matrix coordinate real symmetric\n";
    long nnz = 0;
    for (Eigen::Index col = 0; col < q.q.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(q.q, col); it; ++it)
            if (it.row() >= col) ++nnz;
    out << q.dim() << ' ' << q.dim() << ' ' << nnz << '\n';
    for (Eigen::Index col = 0; col < q.q.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(q.q, col); it; ++it)
            if (it.row() >= col) out << it.row() + 1 << ' ' << col + 1 << ' ' << it.value() << '\n';
}

}  // namespace coxforge
