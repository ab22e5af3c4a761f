#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "n1grid/scenario_gen.hpp"
#include "n1grid/pf_solver.hpp"
#include "test_util.hpp"

using namespace n1grid;
using doctest::Approx;

TEST_CASE("zero sigma reproduces the nominal values exactly") {
    const GridCase grid = testutil::load_case("case14.m");
    Rng rng(1);
    const LoadProfile profile = sample_load_profile(grid, 0.0, rng);
    std::size_t iq = 0, ig = 0;
    for (const Bus& b : grid.buses) {
        if (b.kind == BusKind::PQ) {
            CHECK(profile.pq_p[iq] == b.p_load);
            CHECK(profile.pq_q[iq] == b.q_load);  // bus 4 has a negative Q load
            ++iq;
        } else if (b.kind == BusKind::PV) {
            CHECK(profile.pv_vm[ig] == b.vm_setpoint);
            ++ig;
        }
    }
}

TEST_CASE("load draws follow the law of large numbers") {
    GridCase grid = testutil::two_bus_case(0.5, 0.2);
    Rng rng(99);
    const double sigma = 0.05;  // small enough that positivity truncation is negligible
    const int n = 10000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const LoadProfile profile = sample_load_profile(grid, sigma, rng);
        sum += profile.pq_p[0];
        sum_sq += profile.pq_p[0] * profile.pq_p[0];
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean - 0.5) < 3.0 * sigma / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - sigma * sigma) / (sigma * sigma) < 0.05);
}

TEST_CASE("voltage samples are clamped") {
    GridCase grid = testutil::two_bus_case();
    grid.buses[1].kind = BusKind::PV;
    grid.buses[1].vm_setpoint = 1.0;
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const LoadProfile profile = sample_load_profile(grid, 0.1, rng);
        CHECK(profile.pv_vm[0] >= 0.9);
        CHECK(profile.pv_vm[0] <= 1.1);
    }
}

TEST_CASE("dispatch sampling") {
    SUBCASE("single generator receives the whole budget") {
        GridCase grid = testutil::two_bus_case();
        grid.buses[1].kind = BusKind::PV;
        grid.total_generation = 2.5;
        Rng rng(3);
        const std::vector<double> d = sample_generation_dispatch(grid, 1.0, rng);
        REQUIRE(d.size() == 1);
        CHECK(d[0] == 2.5);
    }
    SUBCASE("the simplex constraint binds to 1e-12") {
        const GridCase grid = testutil::load_case("case118.m");
        Rng rng(17);
        for (int trial = 0; trial < 50; ++trial) {
            const std::vector<double> d = sample_generation_dispatch(grid, 1.0, rng);
            CHECK(d.size() == grid.pv_indices().size());
            double sum = 0.0;
            for (double v : d) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(std::abs(sum - grid.total_generation) < 1e-12);
        }
    }
    SUBCASE("two generators at alpha 1 have uniform weights") {
        GridCase grid = testutil::path3_case();
        grid.buses[1].kind = BusKind::PV;
        grid.buses[2].kind = BusKind::PV;
        grid.total_generation = 1.0;
        Rng rng(123);
        double sum = 0.0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) sum += sample_generation_dispatch(grid, 1.0, rng)[0];
        CHECK(std::abs(sum / n - 0.5) < 0.015);  // Beta(1,1) marginal mean
    }
    SUBCASE("no generators is an error") {
        const GridCase grid = testutil::two_bus_case();
        Rng rng(1);
        CHECK_THROWS_AS(sample_generation_dispatch(grid, 1.0, rng), std::invalid_argument);
    }
}

TEST_CASE("random agent cut") {
    const GridCase grid = testutil::load_case("case14.m");
    const Topology full = Topology::full(grid);

    SUBCASE("p = 0 never cuts") {
        Rng rng(8);
        for (int i = 0; i < 100; ++i) {
            const CutResult res = random_agent_cut(grid, full, 0.0, rng);
            CHECK(res.topo == full);
            CHECK_FALSE(res.cut_branch.has_value());
        }
    }
    SUBCASE("p = 1 cuts exactly one admissible line") {
        Rng rng(9);
        for (int i = 0; i < 200; ++i) {
            const CutResult res = random_agent_cut(grid, full, 1.0, rng);
            REQUIRE(res.cut_branch.has_value());
            CHECK(res.topo.n_in_service() == full.n_in_service() - 1);
            CHECK(is_slack_connected(grid, res.topo));
        }
    }
    SUBCASE("cut histogram is uniform over the admissible set") {
        // admissible single cuts by enumeration
        std::vector<int> admissible;
        for (const Branch& br : grid.branches)
            if (testutil::dfs_all_reachable(grid, apply_line_cut(full, br.id)))
                admissible.push_back(br.id);
        REQUIRE(admissible.size() == 19);

        Rng rng(10);
        std::map<int, int> histogram;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const CutResult res = random_agent_cut(grid, full, 1.0, rng);
            ++histogram[*res.cut_branch];
        }
        CHECK(histogram.size() == admissible.size());
        const double expected = static_cast<double>(n) / admissible.size();
        double chi2 = 0.0;
        for (int id : admissible) {
            const double diff = histogram[id] - expected;
            chi2 += diff * diff / expected;
        }
        const double pvalue =
            testutil::chi_square_pvalue(chi2, static_cast<int>(admissible.size()) - 1);
        CHECK(pvalue > 0.01);
    }
    SUBCASE("a grid with no admissible cut reports the flag") {
        const GridCase twobus = testutil::two_bus_case();
        Rng rng(11);
        const CutResult res = random_agent_cut(twobus, Topology::full(twobus), 1.0, rng);
        CHECK(res.cut_impossible);
        CHECK_FALSE(res.cut_branch.has_value());
        CHECK(res.topo == Topology::full(twobus));
    }
}

TEST_CASE("generate_dataset basics") {
    const GridCase grid = testutil::load_case("case14.m");

    SUBCASE("deterministic degenerate config equals the nominal solve") {
        SamplingConfig cfg;
        cfg.load_sigma = 0.0;
        cfg.cut_probability = 0.0;
        cfg.n_instances = 1;
        const std::vector<ScenarioRecord> records = generate_dataset(grid, cfg);
        REQUIRE(records.size() == 1);
        const PFSolution nominal = newton_raphson_solve(grid, Topology::full(grid));
        CHECK(records[0].bus_vm == nominal.state.vm);
        CHECK(records[0].br_i_or == nominal.br_i_or);
        CHECK_FALSE(records[0].cut_branch.has_value());
    }

    SUBCASE("same seed twice is bitwise identical") {
        SamplingConfig cfg;
        cfg.seed = 42;
        cfg.n_instances = 40;
        cfg.cut_probability = 0.5;
        const auto a = generate_dataset(grid, cfg);
        const auto b = generate_dataset(grid, cfg);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }

    SUBCASE("worker count does not change the output") {
        SamplingConfig cfg;
        cfg.seed = 7;
        cfg.n_instances = 64;
        cfg.cut_probability = 0.3;
        const auto serial = generate_dataset(grid, cfg, nullptr, 1);
        const auto parallel = generate_dataset(grid, cfg, nullptr, 4);
        REQUIRE(serial.size() == parallel.size());
        for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i] == parallel[i]);
    }

    SUBCASE("p = 1 marks every record and the labels re-verify") {
        SamplingConfig cfg;
        cfg.seed = 13;
        cfg.n_instances = 50;
        cfg.cut_probability = 1.0;
        const auto records = generate_dataset(grid, cfg);
        for (const ScenarioRecord& rec : records) {
            REQUIRE(rec.cut_branch.has_value());
            Topology topo(grid.branches.size());
            REQUIRE(rec.in_service.size() == topo.size());
            for (std::size_t b = 0; b < rec.in_service.size(); ++b)
                topo.set(static_cast<int>(b), rec.in_service[b] != 0);
            CHECK_FALSE(topo == Topology::full(grid));

            // independent re-verification of the stored solution:
            // S(V) from the record's voltages must match the stored P, Q,
            // and at PQ buses the schedule from the sampled inputs
            const AdmittanceMatrix Y = build_ybus(grid, topo);
            PFState state;
            state.vm = rec.bus_vm;
            state.va = rec.bus_va;
            std::vector<double> p, q;
            testutil::indep_injections(Y, state, p, q);
            std::size_t iq = 0;
            for (const Bus& b : grid.buses) {
                CHECK(std::abs(p[static_cast<std::size_t>(b.id)] -
                               rec.bus_p[static_cast<std::size_t>(b.id)]) < 1e-8);
                CHECK(std::abs(q[static_cast<std::size_t>(b.id)] -
                               rec.bus_q[static_cast<std::size_t>(b.id)]) < 1e-8);
                if (b.kind == BusKind::PQ) {
                    CHECK(std::abs(p[static_cast<std::size_t>(b.id)] + rec.input_pl[iq]) < 1e-8);
                    CHECK(std::abs(q[static_cast<std::size_t>(b.id)] + rec.input_ql[iq]) < 1e-8);
                    ++iq;
                }
            }
        }
    }

    SUBCASE("p = 0 keeps the full topology everywhere") {
        SamplingConfig cfg;
        cfg.seed = 14;
        cfg.n_instances = 20;
        const auto records = generate_dataset(grid, cfg);
        for (const ScenarioRecord& rec : records) {
            CHECK_FALSE(rec.cut_branch.has_value());
            for (std::uint8_t bit : rec.in_service) CHECK(bit == 1);
        }
    }

    SUBCASE("dispatch sums match the case budget on every record") {
        SamplingConfig cfg;
        cfg.seed = 15;
        cfg.n_instances = 30;
        for (const ScenarioRecord& rec : generate_dataset(grid, cfg)) {
            double sum = 0.0;
            for (double v : rec.input_pg) sum += v;
            CHECK(std::abs(sum - grid.total_generation) < 1e-12);
        }
    }

    SUBCASE("bad configs are rejected") {
        SamplingConfig cfg;
        cfg.cut_probability = 1.5;
        CHECK_THROWS_AS(generate_dataset(grid, cfg), std::invalid_argument);
        cfg.cut_probability = 0.0;
        cfg.n_instances = 0;
        CHECK_THROWS_AS(generate_dataset(grid, cfg), std::invalid_argument);
    }

    SUBCASE("a badly scaled config aborts") {
        SamplingConfig cfg;
        cfg.load_sigma = 80.0;  // absurd loads: the oracle cannot label these
        cfg.n_instances = 4;
        CHECK_THROWS_AS(generate_dataset(grid, cfg), std::runtime_error);
    }
}
