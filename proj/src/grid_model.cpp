#include "n1grid/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace n1grid {

int GridCase::slack_index() const {
    for (const Bus& b : buses)
        if (b.kind == BusKind::Slack) return b.id;
    throw std::logic_error("grid has no slack bus");
}

std::vector<int> GridCase::pv_indices() const {
    std::vector<int> out;
    for (const Bus& b : buses)
        if (b.kind == BusKind::PV) out.push_back(b.id);
    return out;
}

std::vector<int> GridCase::pq_indices() const {
    std::vector<int> out;
    for (const Bus& b : buses)
        if (b.kind == BusKind::PQ) out.push_back(b.id);
    return out;
}

void validate_case(const GridCase& grid) {
    int slack_count = 0;
    for (const Bus& b : grid.buses) {
        if (b.kind == BusKind::Slack) {
            ++slack_count;
            if (!std::isfinite(b.va_slack))
                throw std::invalid_argument("slack bus angle must be finite");
        }
        if (b.kind != BusKind::PQ && b.vm_setpoint <= 0.0)
            throw std::invalid_argument("voltage setpoint must be positive on bus " +
                                        std::to_string(b.external_id));
    }
    if (slack_count != 1)
        throw std::invalid_argument("grid must have exactly one slack bus, found " +
                                    std::to_string(slack_count));
    for (const Branch& br : grid.branches) {
        if (br.from_bus == br.to_bus)
            throw std::invalid_argument("branch " + std::to_string(br.id) + " is a self-loop");
        if (br.from_bus < 0 || br.from_bus >= grid.n_bus() || br.to_bus < 0 ||
            br.to_bus >= grid.n_bus())
            throw std::invalid_argument("branch " + std::to_string(br.id) +
                                        " references a missing bus");
        if (br.r == 0.0 && br.x == 0.0)
            throw std::invalid_argument("branch " + std::to_string(br.id) + " has r = x = 0");
        if (br.tap_ratio <= 0.0)
            throw std::invalid_argument("branch " + std::to_string(br.id) +
                                        " has non-positive tap ratio");
    }
    if (grid.total_generation < 0.0)
        throw std::invalid_argument("total generation must be non-negative");
}

int Topology::n_in_service() const {
    int n = 0;
    for (std::uint8_t b : bits_) n += b;
    return n;
}

BranchAdmittance branch_admittance(const Branch& br) {
    if (br.r == 0.0 && br.x == 0.0)
        throw std::invalid_argument("branch " + std::to_string(br.id) + " has r = x = 0");
    const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
    const std::complex<double> ysh(0.0, br.b_charging / 2.0);
    const double t = br.tap_ratio;
    const std::complex<double> shift = std::polar(1.0, br.phase_shift);
    BranchAdmittance out;
    out.yff = (ys + ysh) / (t * t);
    out.ytt = ys + ysh;
    out.yft = -ys / (t * std::conj(shift));
    out.ytf = -ys / (t * shift);
    return out;
}

AdmittanceMatrix build_ybus(const GridCase& grid, const Topology& topo) {
    if (topo.size() != grid.branches.size())
        throw std::invalid_argument("topology length does not match branch count");

    AdmittanceMatrix Y;
    Y.n = grid.n_bus();
    Y.y.assign(static_cast<std::size_t>(Y.n) * Y.n, {0.0, 0.0});
    Y.y_series.assign(grid.branches.size(), {0.0, 0.0});

    for (const Branch& br : grid.branches) {
        if (!topo.in_service(br.id)) continue;
        const BranchAdmittance st = branch_admittance(br);
        Y.y_series[static_cast<std::size_t>(br.id)] = 1.0 / std::complex<double>(br.r, br.x);
        Y.at(br.from_bus, br.from_bus) += st.yff;
        Y.at(br.to_bus, br.to_bus) += st.ytt;
        Y.at(br.from_bus, br.to_bus) += st.yft;
        Y.at(br.to_bus, br.from_bus) += st.ytf;
    }
    for (const Bus& b : grid.buses) Y.at(b.id, b.id) += std::complex<double>(b.gs, b.bs);
    return Y;
}

std::vector<int> node_degrees(const GridCase& grid, const Topology& topo) {
    if (topo.size() != grid.branches.size())
        throw std::invalid_argument("topology length does not match branch count");
    std::vector<int> deg(grid.buses.size(), 0);
    for (const Branch& br : grid.branches) {
        if (!topo.in_service(br.id)) continue;
        ++deg[static_cast<std::size_t>(br.from_bus)];
        ++deg[static_cast<std::size_t>(br.to_bus)];
    }
    return deg;
}

bool is_slack_connected(const GridCase& grid, const Topology& topo) {
    const int n = grid.n_bus();
    if (n == 0) return true;

    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const Branch& br : grid.branches) {
        if (!topo.in_service(br.id)) continue;
        adj[static_cast<std::size_t>(br.from_bus)].push_back(br.to_bus);
        adj[static_cast<std::size_t>(br.to_bus)].push_back(br.from_bus);
    }

    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> queue{grid.slack_index()};
    seen[static_cast<std::size_t>(queue[0])] = 1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        for (int next : adj[static_cast<std::size_t>(queue[head])]) {
            if (!seen[static_cast<std::size_t>(next)]) {
                seen[static_cast<std::size_t>(next)] = 1;
                queue.push_back(next);
            }
        }
    }
    return static_cast<int>(queue.size()) == n;
}

Topology apply_line_cut(const Topology& topo, int branch_id) {
    if (branch_id < 0 || static_cast<std::size_t>(branch_id) >= topo.size())
        throw std::out_of_range("branch id " + std::to_string(branch_id) + " out of range");
    if (!topo.in_service(branch_id))
        throw std::invalid_argument("branch " + std::to_string(branch_id) +
                                    " is already out of service");
    Topology out = topo;
    out.set(branch_id, false);
    return out;
}

}  // namespace n1grid
