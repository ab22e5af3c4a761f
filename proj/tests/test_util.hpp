#pragma once

#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "n1grid/case_io.hpp"
#include "n1grid/grid_model.hpp"
#include "n1grid/pf_solver.hpp"

namespace testutil {

inline std::string data_dir() { return N1GRID_DATA_DIR; }
inline std::string test_data_dir() { return N1GRID_TEST_DATA_DIR; }

inline nlohmann::json load_fixture(const std::string& name) {
    const std::string path = test_data_dir() + "/" + name;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing fixture: " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

inline n1grid::GridCase load_case(const std::string& name) {
    return n1grid::load_matpower_case(data_dir() + "/" + name);
}

/// Slack + one PQ bus behind a lossless x = 0.1 line; load (0.5, 0.2) pu.
inline n1grid::GridCase two_bus_case(double p_load = 0.5, double q_load = 0.2) {
    n1grid::GridCase grid;
    grid.name = "twobus";
    n1grid::Bus slack;
    slack.id = 0;
    slack.external_id = 1;
    slack.kind = n1grid::BusKind::Slack;
    slack.vm_setpoint = 1.0;
    n1grid::Bus load;
    load.id = 1;
    load.external_id = 2;
    load.kind = n1grid::BusKind::PQ;
    load.p_load = p_load;
    load.q_load = q_load;
    grid.buses = {slack, load};
    n1grid::Branch line;
    line.id = 0;
    line.from_bus = 0;
    line.to_bus = 1;
    line.x = 0.1;
    grid.branches = {line};
    return grid;
}

/// Path graph 0-1-2 with unit-reactance lines, slack at one end.
inline n1grid::GridCase path3_case() {
    n1grid::GridCase grid;
    grid.name = "path3";
    for (int i = 0; i < 3; ++i) {
        n1grid::Bus b;
        b.id = i;
        b.external_id = i + 1;
        b.kind = i == 0 ? n1grid::BusKind::Slack : n1grid::BusKind::PQ;
        grid.buses.push_back(b);
    }
    for (int i = 0; i < 2; ++i) {
        n1grid::Branch br;
        br.id = i;
        br.from_bus = i;
        br.to_bus = i + 1;
        br.x = 0.1;
        grid.branches.push_back(br);
    }
    return grid;
}

/// Independent reachability oracle: recursive depth-first search over an
/// explicit edge list (deliberately not the implementation's BFS).
inline void dfs_visit(int bus, const std::vector<std::pair<int, int>>& edges,
                      std::vector<bool>& seen) {
    seen[static_cast<std::size_t>(bus)] = true;
    for (const auto& [a, b] : edges) {
        if (a == bus && !seen[static_cast<std::size_t>(b)]) dfs_visit(b, edges, seen);
        if (b == bus && !seen[static_cast<std::size_t>(a)]) dfs_visit(a, edges, seen);
    }
}

inline bool dfs_all_reachable(const n1grid::GridCase& grid, const n1grid::Topology& topo) {
    std::vector<std::pair<int, int>> edges;
    for (const n1grid::Branch& br : grid.branches)
        if (topo.in_service(br.id)) edges.emplace_back(br.from_bus, br.to_bus);
    std::vector<bool> seen(grid.buses.size(), false);
    dfs_visit(grid.slack_index(), edges, seen);
    for (bool s : seen)
        if (!s) return false;
    return true;
}

/// Separately coded injection equations: S_i = V_i conj(sum_k Y_ik V_k),
/// complex arithmetic instead of the solver's trigonometric form.
inline void indep_injections(const n1grid::AdmittanceMatrix& ybus, const n1grid::PFState& state,
                             std::vector<double>& p, std::vector<double>& q) {
    const int n = ybus.n;
    std::vector<std::complex<double>> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = std::polar(state.vm[static_cast<std::size_t>(i)],
                                                    state.va[static_cast<std::size_t>(i)]);
    p.assign(static_cast<std::size_t>(n), 0.0);
    q.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        std::complex<double> current{0.0, 0.0};
        for (int k = 0; k < n; ++k) current += ybus.at(i, k) * v[static_cast<std::size_t>(k)];
        const std::complex<double> s = v[static_cast<std::size_t>(i)] * std::conj(current);
        p[static_cast<std::size_t>(i)] = s.real();
        q[static_cast<std::size_t>(i)] = s.imag();
    }
}

/// Central finite differences of the mismatch with respect to the unknown
/// vector [theta(pv+pq); vm(pq)].
inline n1grid::Matrix fd_jacobian(const n1grid::GridCase& grid,
                                  const n1grid::AdmittanceMatrix& ybus,
                                  const n1grid::PFState& state, double step = 1e-6) {
    const n1grid::BusPartition part = n1grid::BusPartition::of(grid);
    const int dim = part.n_unknowns();
    n1grid::Matrix J(dim, dim);

    auto perturbed = [&](int unknown, double delta) {
        n1grid::PFState s = state;
        int k = 0;
        for (int i : part.pv) {
            if (k == unknown) s.va[static_cast<std::size_t>(i)] += delta;
            ++k;
        }
        for (int i : part.pq) {
            if (k == unknown) s.va[static_cast<std::size_t>(i)] += delta;
            ++k;
        }
        for (int i : part.pq) {
            if (k == unknown) s.vm[static_cast<std::size_t>(i)] += delta;
            ++k;
        }
        return n1grid::compute_mismatch(grid, ybus, s);
    };

    for (int c = 0; c < dim; ++c) {
        const std::vector<double> fp = perturbed(c, step);
        const std::vector<double> fm = perturbed(c, -step);
        for (int r = 0; r < dim; ++r) J.at(r, c) = (fp[static_cast<std::size_t>(r)] -
                                                    fm[static_cast<std::size_t>(r)]) /
                                                   (2.0 * step);
    }
    return J;
}

// --- regularized incomplete gamma, for the chi-square tail probability ---

inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1e300;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::abs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

/// Upper tail P(X > x) for chi-square with k degrees of freedom.
inline double chi_square_pvalue(double x, int k) {
    const double a = k / 2.0, half = x / 2.0;
    if (half <= 0.0) return 1.0;
    if (half < a + 1.0) return 1.0 - gamma_p_series(a, half);
    return gamma_q_contfrac(a, half);
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace testutil
