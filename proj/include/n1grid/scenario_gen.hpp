#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "n1grid/case_io.hpp"
#include "n1grid/grid_model.hpp"
#include "n1grid/rng.hpp"

namespace n1grid {

struct SamplingConfig {
    double load_sigma = 0.1;       // std dev of the load/voltage perturbation, pu
    double cut_probability = 0.0;  // p: chance of cutting one line per instance
    std::uint64_t seed = 0;
    int n_instances = 1;
    double dirichlet_alpha = 1.0;  // concentration per generator
};

/// Sampled per-PQ-bus loads and per-PV-bus voltage setpoints, in bus order.
struct LoadProfile {
    std::vector<double> pq_p;
    std::vector<double> pq_q;
    std::vector<double> pv_vm;  // clamped to [0.9, 1.1]
};

/// Draws each value from Normal(|nominal|, sigma^2); loads with a nonzero
/// nominal are redrawn until positive.
LoadProfile sample_load_profile(const GridCase& grid, double sigma, Rng& rng);

/// Splits total generation over the non-slack generators with Dirichlet(alpha)
/// weights; the sum equals the case's total_generation.
std::vector<double> sample_generation_dispatch(const GridCase& grid, double alpha, Rng& rng);

struct CutResult {
    Topology topo;
    std::optional<int> cut_branch;
    bool cut_impossible = false;  // agent fired but every single cut would island
};

/// With probability p cuts one line chosen uniformly among the cuts that keep
/// the grid slack-connected; otherwise returns the topology unchanged.
CutResult random_agent_cut(const GridCase& grid, const Topology& topo, double p, Rng& rng);

struct GenerationReport {
    int discarded = 0;       // non-convergent or islanded draws that were redrawn
    int cut_impossible = 0;  // instances where the agent fired but no admissible cut existed
};

/// Samples, labels with the Newton-Raphson oracle, and returns n_instances
/// records ordered by instance id. Per-instance streams derive from
/// child_seed(seed, id), so results are identical for any worker count.
/// Throws when an instance keeps failing or the overall discard rate
/// exceeds 50%.
std::vector<ScenarioRecord> generate_dataset(const GridCase& grid, const SamplingConfig& cfg,
                                             GenerationReport* report = nullptr, int jobs = 1);

}  // namespace n1grid
