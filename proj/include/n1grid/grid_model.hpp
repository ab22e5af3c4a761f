#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace n1grid {

enum class BusKind { Slack, PV, PQ };

/// One grid node. Quantities are per-unit on the case base. Loads are
/// stored as consumption (positive = consuming); net scheduled injection
/// is generation minus load.
struct Bus {
    int id = 0;           // dense 0-based index
    int external_id = 0;  // numbering from the source case file
    BusKind kind = BusKind::PQ;
    double p_load = 0.0;
    double q_load = 0.0;
    double p_gen = 0.0;        // scheduled dispatch (PV; slack dispatch is informational)
    double q_gen = 0.0;        // scheduled reactive dispatch on PQ buses (rare)
    double vm_setpoint = 1.0;  // Slack and PV
    double va_slack = 0.0;     // radians, Slack only
    double gs = 0.0;           // shunt conductance
    double bs = 0.0;           // shunt susceptance
    double vm_init = 1.0;      // warm-start profile from the case file
    double va_init = 0.0;
};

/// Transmission line or transformer, standard pi-model.
struct Branch {
    int id = 0;
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;  // total line charging susceptance
    double tap_ratio = 1.0;   // 1.0 = no transformer
    double phase_shift = 0.0; // radians
};

struct GridCase {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    double total_generation = 0.0;  // per-unit sum of scheduled dispatch

    int n_bus() const { return static_cast<int>(buses.size()); }
    int n_branch() const { return static_cast<int>(branches.size()); }
    int slack_index() const;
    std::vector<int> pv_indices() const;
    std::vector<int> pq_indices() const;
    double scheduled_p(int bus) const { return buses[bus].p_gen - buses[bus].p_load; }
    double scheduled_q(int bus) const { return buses[bus].q_gen - buses[bus].q_load; }
};

/// Throws std::invalid_argument when a structural invariant is broken
/// (slack count, branch endpoints, impedances, taps, setpoints).
void validate_case(const GridCase& grid);

/// Per-branch in-service bit vector; the object the cutting agent mutates.
class Topology {
  public:
    Topology() = default;
    explicit Topology(std::size_t n_branches, bool all_in_service = true)
        : bits_(n_branches, all_in_service ? 1 : 0) {}
    static Topology full(const GridCase& grid) { return Topology(grid.branches.size()); }

    bool in_service(int branch) const { return bits_[static_cast<std::size_t>(branch)] != 0; }
    void set(int branch, bool on) { bits_[static_cast<std::size_t>(branch)] = on ? 1 : 0; }
    std::size_t size() const { return bits_.size(); }
    int n_in_service() const;
    const std::vector<std::uint8_t>& bits() const { return bits_; }

    friend bool operator==(const Topology&, const Topology&) = default;

  private:
    std::vector<std::uint8_t> bits_;
};

/// Complex nodal admittance matrix, dense (desk-scale grids).
struct AdmittanceMatrix {
    int n = 0;
    std::vector<std::complex<double>> y;         // row-major n x n
    std::vector<std::complex<double>> y_series;  // per branch; 0 when out of service

    std::complex<double>& at(int i, int k) { return y[static_cast<std::size_t>(i) * n + k]; }
    std::complex<double> at(int i, int k) const { return y[static_cast<std::size_t>(i) * n + k]; }
};

/// The four pi-model stamps of one branch.
struct BranchAdmittance {
    std::complex<double> yff, yft, ytf, ytt;
};
BranchAdmittance branch_admittance(const Branch& br);

/// Stamps all in-service branches plus bus shunts.
/// Throws std::invalid_argument on topology length mismatch or an r = x = 0 branch.
AdmittanceMatrix build_ybus(const GridCase& grid, const Topology& topo);

/// In-service incident branch count per bus; parallel branches each count.
std::vector<int> node_degrees(const GridCase& grid, const Topology& topo);

/// True iff every bus is reachable from the slack over in-service branches.
bool is_slack_connected(const GridCase& grid, const Topology& topo);

/// Returns a copy with one more branch out of service; the input is untouched.
/// Throws std::out_of_range / std::invalid_argument on a bad or already-cut id.
Topology apply_line_cut(const Topology& topo, int branch_id);

}  // namespace n1grid
