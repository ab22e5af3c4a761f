#include "n1grid/scenario_gen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "n1grid/pf_solver.hpp"

namespace n1grid {
namespace {

// Normal around the signed nominal; draws are kept positive only where the
// nominal itself is positive (a few benchmark buses carry negative loads).
double load_normal(double nominal, double sigma, Rng& rng) {
    if (nominal <= 0.0) return rng.normal(nominal, sigma);
    for (int tries = 0; tries < 1000; ++tries) {
        const double v = rng.normal(nominal, sigma);
        if (v > 0.0) return v;
    }
    throw std::runtime_error("load resampling failed to produce a positive draw");
}

void check_config(const SamplingConfig& cfg) {
    if (cfg.cut_probability < 0.0 || cfg.cut_probability > 1.0)
        throw std::invalid_argument("cut probability must be in [0, 1]");
    if (cfg.load_sigma < 0.0) throw std::invalid_argument("load sigma must be non-negative");
    if (cfg.n_instances < 1) throw std::invalid_argument("n_instances must be at least 1");
    if (cfg.dirichlet_alpha <= 0.0)
        throw std::invalid_argument("dirichlet alpha must be positive");
}

}  // namespace

LoadProfile sample_load_profile(const GridCase& grid, double sigma, Rng& rng) {
    LoadProfile out;
    for (const Bus& b : grid.buses) {
        if (b.kind != BusKind::PQ) continue;
        out.pq_p.push_back(load_normal(b.p_load, sigma, rng));
        out.pq_q.push_back(load_normal(b.q_load, sigma, rng));
    }
    for (const Bus& b : grid.buses) {
        if (b.kind != BusKind::PV) continue;
        const double vm = rng.normal(b.vm_setpoint, sigma);
        out.pv_vm.push_back(std::clamp(vm, 0.9, 1.1));
    }
    return out;
}

std::vector<double> sample_generation_dispatch(const GridCase& grid, double alpha, Rng& rng) {
    const std::vector<int> pv = grid.pv_indices();
    if (pv.empty()) throw std::invalid_argument("case has no non-slack generators");
    if (grid.total_generation <= 0.0)
        throw std::invalid_argument("case has no generation to dispatch");

    std::vector<double> w(pv.size());
    if (pv.size() == 1) {
        w[0] = 1.0;
    } else {
        double sum = 0.0;
        for (double& wi : w) {
            wi = rng.gamma(alpha);
            sum += wi;
        }
        for (double& wi : w) wi /= sum;
    }
    for (double& wi : w) wi *= grid.total_generation;
    return w;
}

CutResult random_agent_cut(const GridCase& grid, const Topology& topo, double p, Rng& rng) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("cut probability must be in [0, 1]");
    CutResult out{topo, std::nullopt, false};
    if (rng.uniform() >= p) return out;

    std::vector<int> admissible;
    for (const Branch& br : grid.branches) {
        if (!topo.in_service(br.id)) continue;
        if (is_slack_connected(grid, apply_line_cut(topo, br.id))) admissible.push_back(br.id);
    }
    if (admissible.empty()) {
        out.cut_impossible = true;
        return out;
    }
    const int pick = admissible[rng.below(admissible.size())];
    out.topo = apply_line_cut(topo, pick);
    out.cut_branch = pick;
    return out;
}

namespace {

/// One fully sampled and solved instance; returns nullopt when the oracle
/// rejects the draw (non-convergence or islanding).
std::optional<ScenarioRecord> try_instance(const GridCase& base, const SamplingConfig& cfg,
                                           int instance_id, int attempt, bool& cut_impossible) {
    Rng rng(child_seed(child_seed(cfg.seed, static_cast<std::uint64_t>(instance_id)),
                       static_cast<std::uint64_t>(attempt)));

    // draw order is fixed: loads/voltages, dispatch, then the cutting agent.
    // sigma == 0 is the fully nominal mode: loads, setpoints and dispatch all
    // stay at the case values (a degenerate config reproduces the nominal
    // solved case; with p > 0 it yields a topology-only dataset).
    LoadProfile profile;
    std::vector<double> dispatch;
    if (cfg.load_sigma == 0.0) {
        for (const Bus& b : base.buses) {
            if (b.kind == BusKind::PQ) {
                profile.pq_p.push_back(b.p_load);
                profile.pq_q.push_back(b.q_load);
            } else if (b.kind == BusKind::PV) {
                profile.pv_vm.push_back(b.vm_setpoint);
                dispatch.push_back(b.p_gen);
            }
        }
    } else {
        profile = sample_load_profile(base, cfg.load_sigma, rng);
        dispatch = sample_generation_dispatch(base, cfg.dirichlet_alpha, rng);
    }
    const CutResult cut =
        random_agent_cut(base, Topology::full(base), cfg.cut_probability, rng);
    cut_impossible = cut.cut_impossible;

    GridCase grid = base;
    std::size_t iq = 0, ig = 0;
    for (Bus& b : grid.buses) {
        if (b.kind == BusKind::PQ) {
            b.p_load = profile.pq_p[iq];
            b.q_load = profile.pq_q[iq];
            ++iq;
        } else if (b.kind == BusKind::PV) {
            b.vm_setpoint = profile.pv_vm[ig];
            b.p_gen = dispatch[ig];
            ++ig;
        }
    }

    PFSolution sol;
    try {
        sol = newton_raphson_solve(grid, cut.topo, SolverOptions{});
    } catch (const NonConvergenceError&) {
        return std::nullopt;
    } catch (const IslandedGridError&) {
        return std::nullopt;
    } catch (const SingularJacobianError&) {
        return std::nullopt;
    }

    ScenarioRecord rec;
    rec.instance_id = instance_id;
    rec.in_service = cut.topo.bits();
    rec.cut_branch = cut.cut_branch;
    rec.input_pg = dispatch;
    rec.input_vm = profile.pv_vm;
    rec.input_pl = profile.pq_p;
    rec.input_ql = profile.pq_q;
    rec.bus_p = sol.p;
    rec.bus_q = sol.q;
    rec.bus_vm = sol.state.vm;
    rec.bus_va = sol.state.va;
    rec.inj_current = sol.inj_current;
    rec.br_i_or = sol.br_i_or;
    rec.br_i_ex = sol.br_i_ex;
    return rec;
}

constexpr int kMaxAttempts = 16;

}  // namespace

std::vector<ScenarioRecord> generate_dataset(const GridCase& grid, const SamplingConfig& cfg,
                                             GenerationReport* report, int jobs) {
    check_config(cfg);
    validate_case(grid);
    if (jobs < 1) jobs = 1;

    std::vector<ScenarioRecord> records(static_cast<std::size_t>(cfg.n_instances));
    std::atomic<int> discarded{0};
    std::atomic<int> cut_impossible_count{0};
    std::atomic<int> failed_instance{-1};

    auto worker = [&](int lo, int hi) {
        for (int id = lo; id < hi; ++id) {
            if (failed_instance.load(std::memory_order_relaxed) >= 0) return;
            bool done = false;
            for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
                bool impossible = false;
                auto rec = try_instance(grid, cfg, id, attempt, impossible);
                if (impossible) cut_impossible_count.fetch_add(1);
                if (rec) {
                    records[static_cast<std::size_t>(id)] = std::move(*rec);
                    done = true;
                    break;
                }
                discarded.fetch_add(1);
            }
            if (!done) {
                failed_instance.store(id);
                return;
            }
        }
    };

    if (jobs == 1) {
        worker(0, cfg.n_instances);
    } else {
        const int chunk = (cfg.n_instances + jobs - 1) / jobs;
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) {
            const int lo = j * chunk;
            const int hi = std::min(cfg.n_instances, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(worker, lo, hi);
        }
        for (std::thread& t : pool) t.join();
    }

    if (failed_instance.load() >= 0)
        throw std::runtime_error("instance " + std::to_string(failed_instance.load()) +
                                 " failed to converge after " + std::to_string(kMaxAttempts) +
                                 " redraws; check the sampling configuration");
    if (discarded.load() > cfg.n_instances)
        throw std::runtime_error("discard rate exceeds 50% (" + std::to_string(discarded.load()) +
                                 " discards for " + std::to_string(cfg.n_instances) +
                                 " instances); check the sampling configuration");

    if (report) {
        report->discarded = discarded.load();
        report->cut_impossible = cut_impossible_count.load();
    }
    return records;
}

}  // namespace n1grid
