#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "n1grid/grid_model.hpp"
#include "n1grid/linalg.hpp"

namespace n1grid {

/// Voltage state: per-bus magnitude (pu) and angle (rad).
struct PFState {
    std::vector<double> vm;
    std::vector<double> va;
};

struct SolverOptions {
    double tolerance = 1e-8;  // infinity norm of the mismatch, pu
    int max_iterations = 20;
    bool flat_start = true;   // false: warm start from the case voltage profile
};

/// Full solved record: state, net injections, currents, and convergence info.
struct PFSolution {
    PFState state;
    std::vector<double> p, q;           // per-bus net injections
    std::vector<double> inj_current;    // per-bus |I_i|
    std::vector<double> br_i_or, br_i_ex;
    int iterations = 0;
    double max_mismatch = 0.0;
    std::vector<double> mismatch_trace;  // infinity norm per iterate, starting at the initial guess
};

struct NonConvergenceError : std::runtime_error {
    NonConvergenceError(int iters, double mismatch)
        : std::runtime_error("power flow did not converge in " + std::to_string(iters) +
                             " iterations (max mismatch " + std::to_string(mismatch) + ")"),
          iterations(iters),
          final_mismatch(mismatch) {}
    int iterations;
    double final_mismatch;
};

struct SingularJacobianError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IslandedGridError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Index sets defining the mismatch/unknown layout: P rows over PV then PQ
/// buses in bus order, Q rows over PQ buses; unknowns are the matching
/// angles and PQ magnitudes.
struct BusPartition {
    int slack = 0;
    std::vector<int> pv;
    std::vector<int> pq;

    static BusPartition of(const GridCase& grid);
    int n_p_rows() const { return static_cast<int>(pv.size() + pq.size()); }
    int n_unknowns() const { return n_p_rows() + static_cast<int>(pq.size()); }
};

/// Net injections from the Kirchhoff equations:
///   P_i = V_i sum_k V_k (G_ik cos t_ik + B_ik sin t_ik)
///   Q_i = V_i sum_k V_k (G_ik sin t_ik - B_ik cos t_ik)
void compute_power_injections(const AdmittanceMatrix& ybus, const PFState& state,
                              std::vector<double>& p, std::vector<double>& q);

/// Mismatch F = scheduled - calculated, stacked [dP(pv+pq); dQ(pq)].
std::vector<double> compute_mismatch(const GridCase& grid, const AdmittanceMatrix& ybus,
                                     const PFState& state);

/// Jacobian of the mismatch with respect to the unknowns [theta(pv+pq); vm(pq)].
Matrix build_jacobian(const AdmittanceMatrix& ybus, const PFState& state,
                      const BusPartition& part);

/// Newton-Raphson oracle. Throws IslandedGridError, SingularJacobianError or
/// NonConvergenceError.
PFSolution newton_raphson_solve(const GridCase& grid, const Topology& topo,
                                const SolverOptions& opts = {});

/// Pi-model end current magnitudes per branch; out-of-service branches give 0.
void branch_currents(const GridCase& grid, const Topology& topo, const PFState& state,
                     std::vector<double>& i_or, std::vector<double>& i_ex);

/// |sum_k Y_ik V_k| per bus.
std::vector<double> bus_injection_currents(const AdmittanceMatrix& ybus, const PFState& state);

struct CurrentSet {
    std::vector<double> inj;
    std::vector<double> br_or;
    std::vector<double> br_ex;
};

/// Converts a (P, Q, Vm, theta) record to currents. Only the voltages and
/// the topology matter; P and Q are accepted for interface parity with
/// frameworks that predict them.
CurrentSet solution_to_currents(const GridCase& grid, const Topology& topo,
                                std::span<const double> p, std::span<const double> q,
                                std::span<const double> vm, std::span<const double> va);

}  // namespace n1grid
