#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace n1grid {

struct SingularMatrixError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major real matrix. The grids handled here top out at a few
/// hundred unknowns, so no sparse machinery.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

/// Solves A x = b by in-place LU with partial pivoting. Throws
/// SingularMatrixError when the best available pivot falls below pivot_tol.
inline std::vector<double> lu_solve(Matrix A, std::vector<double> b, double pivot_tol = 1e-12) {
    const int n = A.rows;
    if (A.cols != n || static_cast<int>(b.size()) != n)
        throw std::invalid_argument("lu_solve: dimension mismatch");

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;

    for (int col = 0; col < n; ++col) {
        int pivot = col;
        double best = std::abs(A.at(col, col));
        for (int r = col + 1; r < n; ++r) {
            const double v = std::abs(A.at(r, col));
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best < pivot_tol) throw SingularMatrixError("pivot below threshold");
        if (pivot != col) {
            for (int c = 0; c < n; ++c) std::swap(A.at(col, c), A.at(pivot, c));
            std::swap(b[col], b[pivot]);
        }
        const double d = A.at(col, col);
        for (int r = col + 1; r < n; ++r) {
            const double factor = A.at(r, col) / d;
            if (factor == 0.0) continue;
            A.at(r, col) = 0.0;
            for (int c = col + 1; c < n; ++c) A.at(r, c) -= factor * A.at(col, c);
            b[r] -= factor * b[col];
        }
    }

    std::vector<double> x(n);
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < n; ++c) acc -= A.at(r, c) * x[c];
        x[r] = acc / A.at(r, r);
    }
    return x;
}

}  // namespace n1grid
