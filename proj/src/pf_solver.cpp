#include "n1grid/pf_solver.hpp"

#include <algorithm>
#include <cmath>

namespace n1grid {

BusPartition BusPartition::of(const GridCase& grid) {
    BusPartition part;
    part.slack = grid.slack_index();
    part.pv = grid.pv_indices();
    part.pq = grid.pq_indices();
    return part;
}

void compute_power_injections(const AdmittanceMatrix& ybus, const PFState& state,
                              std::vector<double>& p, std::vector<double>& q) {
    const int n = ybus.n;
    if (static_cast<int>(state.vm.size()) != n || static_cast<int>(state.va.size()) != n)
        throw std::invalid_argument("state dimension does not match admittance matrix");
    p.assign(static_cast<std::size_t>(n), 0.0);
    q.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double pi = 0.0, qi = 0.0;
        for (int k = 0; k < n; ++k) {
            const std::complex<double> yik = ybus.at(i, k);
            if (yik == std::complex<double>{0.0, 0.0}) continue;
            const double theta = state.va[i] - state.va[k];
            const double ct = std::cos(theta), st = std::sin(theta);
            pi += state.vm[k] * (yik.real() * ct + yik.imag() * st);
            qi += state.vm[k] * (yik.real() * st - yik.imag() * ct);
        }
        p[i] = state.vm[i] * pi;
        q[i] = state.vm[i] * qi;
    }
}

std::vector<double> compute_mismatch(const GridCase& grid, const AdmittanceMatrix& ybus,
                                     const PFState& state) {
    const BusPartition part = BusPartition::of(grid);
    std::vector<double> p, q;
    compute_power_injections(ybus, state, p, q);

    std::vector<double> f;
    f.reserve(static_cast<std::size_t>(part.n_unknowns()));
    for (int i : part.pv) f.push_back(grid.scheduled_p(i) - p[static_cast<std::size_t>(i)]);
    for (int i : part.pq) f.push_back(grid.scheduled_p(i) - p[static_cast<std::size_t>(i)]);
    for (int i : part.pq) f.push_back(grid.scheduled_q(i) - q[static_cast<std::size_t>(i)]);
    return f;
}

Matrix build_jacobian(const AdmittanceMatrix& ybus, const PFState& state,
                      const BusPartition& part) {
    const int np = part.n_p_rows();
    const int npq = static_cast<int>(part.pq.size());
    const int dim = np + npq;
    Matrix J(dim, dim);

    std::vector<double> p, q;
    compute_power_injections(ybus, state, p, q);

    std::vector<int> rows = part.pv;
    rows.insert(rows.end(), part.pq.begin(), part.pq.end());

    // Mismatch is scheduled - calculated, so every entry is the negated
    // classical injection derivative.
    auto dP_dth = [&](int i, int k) {
        if (i == k) return -q[i] - ybus.at(i, i).imag() * state.vm[i] * state.vm[i];
        const double t = state.va[i] - state.va[k];
        return state.vm[i] * state.vm[k] *
               (ybus.at(i, k).real() * std::sin(t) - ybus.at(i, k).imag() * std::cos(t));
    };
    auto dP_dvm = [&](int i, int k) {
        if (i == k) return p[i] / state.vm[i] + ybus.at(i, i).real() * state.vm[i];
        const double t = state.va[i] - state.va[k];
        return state.vm[i] *
               (ybus.at(i, k).real() * std::cos(t) + ybus.at(i, k).imag() * std::sin(t));
    };
    auto dQ_dth = [&](int i, int k) {
        if (i == k) return p[i] - ybus.at(i, i).real() * state.vm[i] * state.vm[i];
        const double t = state.va[i] - state.va[k];
        return -state.vm[i] * state.vm[k] *
               (ybus.at(i, k).real() * std::cos(t) + ybus.at(i, k).imag() * std::sin(t));
    };
    auto dQ_dvm = [&](int i, int k) {
        if (i == k) return q[i] / state.vm[i] - ybus.at(i, i).imag() * state.vm[i];
        const double t = state.va[i] - state.va[k];
        return state.vm[i] *
               (ybus.at(i, k).real() * std::sin(t) - ybus.at(i, k).imag() * std::cos(t));
    };

    for (int r = 0; r < np; ++r) {
        const int i = rows[static_cast<std::size_t>(r)];
        for (int c = 0; c < np; ++c)
            J.at(r, c) = -dP_dth(i, rows[static_cast<std::size_t>(c)]);
        for (int c = 0; c < npq; ++c)
            J.at(r, np + c) = -dP_dvm(i, part.pq[static_cast<std::size_t>(c)]);
    }
    for (int r = 0; r < npq; ++r) {
        const int i = part.pq[static_cast<std::size_t>(r)];
        for (int c = 0; c < np; ++c)
            J.at(np + r, c) = -dQ_dth(i, rows[static_cast<std::size_t>(c)]);
        for (int c = 0; c < npq; ++c)
            J.at(np + r, np + c) = -dQ_dvm(i, part.pq[static_cast<std::size_t>(c)]);
    }
    return J;
}

namespace {

PFState initial_state(const GridCase& grid, const SolverOptions& opts) {
    PFState state;
    const std::size_t n = grid.buses.size();
    state.vm.resize(n);
    state.va.resize(n);
    const double slack_angle = grid.buses[static_cast<std::size_t>(grid.slack_index())].va_slack;
    for (const Bus& b : grid.buses) {
        const std::size_t i = static_cast<std::size_t>(b.id);
        if (b.kind == BusKind::PQ) {
            state.vm[i] = opts.flat_start ? 1.0 : b.vm_init;
            state.va[i] = opts.flat_start ? slack_angle : b.va_init;
        } else {
            state.vm[i] = b.vm_setpoint;
            state.va[i] = b.kind == BusKind::Slack
                              ? b.va_slack
                              : (opts.flat_start ? slack_angle : b.va_init);
        }
    }
    return state;
}

double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

PFSolution newton_raphson_solve(const GridCase& grid, const Topology& topo,
                                const SolverOptions& opts) {
    if (opts.tolerance <= 0.0 || opts.max_iterations < 1)
        throw std::invalid_argument("solver options out of range");
    validate_case(grid);
    if (topo.size() != grid.branches.size())
        throw std::invalid_argument("topology length does not match branch count");
    if (!is_slack_connected(grid, topo))
        throw IslandedGridError("grid is islanded under the requested topology");

    const AdmittanceMatrix ybus = build_ybus(grid, topo);
    const BusPartition part = BusPartition::of(grid);

    PFSolution sol;
    sol.state = initial_state(grid, opts);

    bool converged = false;
    for (int iter = 0; iter <= opts.max_iterations; ++iter) {
        const std::vector<double> f = compute_mismatch(grid, ybus, sol.state);
        const double mm = inf_norm(f);
        sol.mismatch_trace.push_back(mm);
        sol.max_mismatch = mm;
        sol.iterations = iter;
        if (mm < opts.tolerance) {
            converged = true;
            break;
        }
        if (iter == opts.max_iterations) break;

        const Matrix J = build_jacobian(ybus, sol.state, part);
        std::vector<double> step;
        try {
            step = lu_solve(J, f, 1e-12);
        } catch (const SingularMatrixError&) {
            throw SingularJacobianError("singular Jacobian at iteration " + std::to_string(iter));
        }

        // x <- x - J^{-1} F over [theta(pv+pq); vm(pq)]
        int k = 0;
        for (int i : part.pv) sol.state.va[static_cast<std::size_t>(i)] -= step[k++];
        for (int i : part.pq) sol.state.va[static_cast<std::size_t>(i)] -= step[k++];
        for (int i : part.pq) sol.state.vm[static_cast<std::size_t>(i)] -= step[k++];
    }
    if (!converged) throw NonConvergenceError(opts.max_iterations, sol.max_mismatch);

    compute_power_injections(ybus, sol.state, sol.p, sol.q);
    sol.inj_current = bus_injection_currents(ybus, sol.state);
    branch_currents(grid, topo, sol.state, sol.br_i_or, sol.br_i_ex);
    return sol;
}

void branch_currents(const GridCase& grid, const Topology& topo, const PFState& state,
                     std::vector<double>& i_or, std::vector<double>& i_ex) {
    if (topo.size() != grid.branches.size())
        throw std::invalid_argument("topology length does not match branch count");
    i_or.assign(grid.branches.size(), 0.0);
    i_ex.assign(grid.branches.size(), 0.0);
    for (const Branch& br : grid.branches) {
        if (!topo.in_service(br.id)) continue;
        const BranchAdmittance st = branch_admittance(br);
        const std::complex<double> vf =
            std::polar(state.vm[static_cast<std::size_t>(br.from_bus)],
                       state.va[static_cast<std::size_t>(br.from_bus)]);
        const std::complex<double> vt =
            std::polar(state.vm[static_cast<std::size_t>(br.to_bus)],
                       state.va[static_cast<std::size_t>(br.to_bus)]);
        i_or[static_cast<std::size_t>(br.id)] = std::abs(st.yff * vf + st.yft * vt);
        i_ex[static_cast<std::size_t>(br.id)] = std::abs(st.ytf * vf + st.ytt * vt);
    }
}

std::vector<double> bus_injection_currents(const AdmittanceMatrix& ybus, const PFState& state) {
    const int n = ybus.n;
    if (static_cast<int>(state.vm.size()) != n)
        throw std::invalid_argument("state dimension does not match admittance matrix");
    std::vector<std::complex<double>> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] =
            std::polar(state.vm[static_cast<std::size_t>(i)], state.va[static_cast<std::size_t>(i)]);
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        std::complex<double> acc{0.0, 0.0};
        for (int k = 0; k < n; ++k) acc += ybus.at(i, k) * v[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(i)] = std::abs(acc);
    }
    return out;
}

CurrentSet solution_to_currents(const GridCase& grid, const Topology& topo,
                                std::span<const double> p, std::span<const double> q,
                                std::span<const double> vm, std::span<const double> va) {
    (void)p;
    (void)q;
    if (vm.size() != grid.buses.size() || va.size() != grid.buses.size())
        throw std::invalid_argument("voltage vectors incomplete");
    PFState state;
    state.vm.assign(vm.begin(), vm.end());
    state.va.assign(va.begin(), va.end());
    CurrentSet out;
    out.inj = bus_injection_currents(build_ybus(grid, topo), state);
    branch_currents(grid, topo, state, out.br_or, out.br_ex);
    return out;
}

}  // namespace n1grid
