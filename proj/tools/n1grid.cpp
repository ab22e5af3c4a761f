#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "n1grid/analysis.hpp"
#include "n1grid/case_io.hpp"
#include "n1grid/pf_solver.hpp"
#include "n1grid/scenario_gen.hpp"
#include "n1grid/surrogate.hpp"

namespace fs = std::filesystem;
using namespace n1grid;

namespace {

// exit-code contract: 0 ok, 1 usage/input, 2 numeric failure, 3 infeasible input
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitInfeasible = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_readable(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw UsageError(std::string(what) + " not found: " + path);
}

int cmd_solve(const std::string& case_path, const std::vector<int>& cuts, double tol,
              int max_iter, bool warm_start, const std::string& out_path) {
    require_readable(case_path, "case file");
    const GridCase grid = load_matpower_case(case_path);

    Topology topo = Topology::full(grid);
    for (int id : cuts) topo = apply_line_cut(topo, id);

    SolverOptions opts;
    opts.tolerance = tol;
    opts.max_iterations = max_iter;
    opts.flat_start = !warm_start;

    const auto t0 = std::chrono::steady_clock::now();
    const PFSolution sol = newton_raphson_solve(grid, topo, opts);
    const auto elapsed =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    std::cout << grid.name << ": converged in " << sol.iterations
              << " iterations, max mismatch = " << sol.max_mismatch << " pu (" << elapsed
              << " ms)\n";

    if (!out_path.empty()) {
        nlohmann::json j;
        j["case"] = grid.name;
        j["iterations"] = sol.iterations;
        j["max_mismatch"] = sol.max_mismatch;
        j["vm"] = sol.state.vm;
        j["va"] = sol.state.va;
        j["p"] = sol.p;
        j["q"] = sol.q;
        j["inj_current"] = sol.inj_current;
        j["br_i_or"] = sol.br_i_or;
        j["br_i_ex"] = sol.br_i_ex;
        std::ofstream out(out_path);
        if (!out) throw UsageError("cannot write solution file: " + out_path);
        out << j.dump(2) << '\n';
        std::cout << "solution written to " << out_path << '\n';
    }
    return kExitOk;
}

int cmd_generate(const std::string& case_path, const SamplingConfig& cfg, int jobs,
                 const std::string& out_path) {
    require_readable(case_path, "case file");
    const GridCase grid = load_matpower_case(case_path);

    GenerationReport rep;
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<ScenarioRecord> records = generate_dataset(grid, cfg, &rep, jobs);
    const auto secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_dataset(records, out_path);

    std::cout << "wrote " << records.size() << " records to " << out_path << " in " << secs
              << " s\n";
    std::cout << "discarded " << rep.discarded << " non-convergent/islanded draws";
    if (rep.cut_impossible > 0)
        std::cout << "; " << rep.cut_impossible << " instances had no admissible cut";
    std::cout << '\n';
    return kExitOk;
}

int cmd_train(const std::string& data_path, const std::string& variant_name_arg,
              const TrainConfig& cfg, const std::string& out_path) {
    require_readable(data_path, "dataset");
    const Variant variant = variant_from_name(variant_name_arg);
    const std::vector<ScenarioRecord> records = read_dataset(data_path);
    if (records.empty()) throw UsageError("dataset is empty: " + data_path);

    const TrainResult result = train(records, cfg, variant);
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
        std::cout << "epoch " << e + 1 << "/" << result.epoch_loss.size()
                  << " train loss = " << result.epoch_loss[e] << '\n';
    save_checkpoint(result.model, out_path);
    std::cout << "checkpoint written to " << out_path << '\n';
    return kExitOk;
}

void check_dims(const Surrogate& model, const std::vector<ScenarioRecord>& records,
                const std::string& what) {
    const auto raw = FeatureCodec::raw_input(records.front());
    if (static_cast<int>(raw.size()) != model.codec.input_dim())
        throw UsageError("checkpoint expects input dimension " +
                         std::to_string(model.codec.input_dim()) + " but " + what +
                         " provides " + std::to_string(raw.size()));
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path,
                 const std::string& csv_path) {
    require_readable(ckpt_path, "checkpoint");
    require_readable(data_path, "dataset");
    const Surrogate model = load_checkpoint(ckpt_path);
    const std::vector<ScenarioRecord> records = read_dataset(data_path);
    if (records.empty()) throw UsageError("dataset is empty: " + data_path);
    check_dims(model, records, "dataset");

    const double mse = evaluate_mse(model, records);
    std::cout << "mse = " << std::setprecision(17) << mse << '\n';

    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw UsageError("cannot write csv: " + csv_path);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", mse);
        out << "model,dataset,mse\n"
            << variant_name(model.params.variant) << ',' << fs::path(data_path).stem().string()
            << ',' << buf << '\n';
    }
    return kExitOk;
}

int cmd_analyze(const std::string& case_path, const std::vector<std::string>& model_specs,
                const std::string& n_data, const std::string& n1_data,
                const std::vector<std::string>& mix_specs, const std::string& out_dir) {
    // validate every referenced artifact before doing any work
    std::vector<std::string> missing;
    auto note_missing = [&](const std::string& p) {
        if (!fs::exists(p)) missing.push_back(p);
    };
    note_missing(case_path);
    note_missing(n_data);
    note_missing(n1_data);

    auto split_spec = [](const std::string& spec, char sep) {
        const auto pos = spec.find(sep);
        if (pos == std::string::npos)
            throw UsageError("bad spec '" + spec + "', expected <key>" + sep + "<path>");
        return std::make_pair(spec.substr(0, pos), spec.substr(pos + 1));
    };
    for (const std::string& spec : model_specs) note_missing(split_spec(spec, '=').second);
    for (const std::string& spec : mix_specs) note_missing(split_spec(spec, '=').second);
    if (!missing.empty()) {
        std::cerr << "error: missing inputs:\n";
        for (const std::string& p : missing) std::cerr << "  " << p << '\n';
        return kExitUsage;
    }

    const GridCase grid = load_matpower_case(case_path);
    const std::vector<ScenarioRecord> n_records = read_dataset(n_data);
    const std::vector<ScenarioRecord> n1_records = read_dataset(n1_data);
    if (n_records.empty() || n1_records.empty())
        throw UsageError("evaluation datasets must be non-empty");

    std::vector<NamedModel> models;
    for (const std::string& spec : model_specs) {
        auto [name, path] = split_spec(spec, '=');
        models.push_back({name, load_checkpoint(path)});
        check_dims(models.back().model, n_records, "N dataset");
        check_dims(models.back().model, n1_records, "N-1 dataset");
    }
    std::vector<MixModel> mixes;
    for (const std::string& spec : mix_specs) {
        auto [p_str, path] = split_spec(spec, '=');
        MixModel mix;
        mix.p = std::stod(p_str);
        mix.name = fs::path(path).stem().string();
        mix.model = load_checkpoint(path);
        check_dims(mix.model, n1_records, "N-1 dataset");
        mixes.push_back(std::move(mix));
    }

    const EvalReport report = robustness_report(grid, models, n_records, n1_records, mixes);
    write_report_csvs(report, out_dir);

    for (const ModelScore& s : report.models)
        std::cout << s.model << ": n_mse = " << s.n_mse << ", n1_mse = " << s.n1_mse
                  << ", gap ratio = " << s.gap_ratio << '\n';
    std::cout << "degree table (model " << report.degree_model << "):\n";
    for (const DegreeCluster& c : report.clusters)
        std::cout << "  " << c.role << " degree " << c.degree << ": count = " << c.count
                  << ", mse = " << c.mse << '\n';
    for (const MixRow& row : report.mix_table)
        std::cout << "mix " << row.model << " (p = " << row.p << "): n1_mse = " << row.n1_mse
                  << '\n';
    std::cout << "tables written to " << out_dir << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AC power flow oracle, scenario generation, surrogate training and "
                 "N-1 robustness evaluation"};
    app.set_config("--config");
    app.require_subcommand(1);

    std::function<int()> action;

    // solve
    auto* solve = app.add_subcommand("solve", "run the Newton-Raphson oracle on a case");
    {
        auto opts = std::make_shared<std::tuple<std::string, std::vector<int>, double, int, bool,
                                                std::string>>();
        auto& [case_path, cuts, tol, max_iter, warm, out] = *opts;
        tol = 1e-8;
        max_iter = 20;
        warm = false;
        solve->add_option("--case", case_path, "MATPOWER case file")->required();
        solve->add_option("--cut", cuts, "branch id to take out of service (repeatable)");
        solve->add_option("--tol", tol, "mismatch tolerance, pu");
        solve->add_option("--max-iter", max_iter, "iteration cap");
        solve->add_flag("--warm-start", warm, "start from the case voltage profile");
        solve->add_option("--out", out, "write the solution as JSON");
        solve->callback([opts, &action] {
            action = [opts] {
                const auto& [case_path, cuts, tol, max_iter, warm, out] = *opts;
                return cmd_solve(case_path, cuts, tol, max_iter, warm, out);
            };
        });
    }

    // generate
    auto* gen = app.add_subcommand("generate", "sample and label a scenario dataset");
    {
        struct GenArgs {
            std::string case_path, out;
            SamplingConfig cfg;
            int jobs = 1;
        };
        auto args = std::make_shared<GenArgs>();
        gen->add_option("--case", args->case_path, "MATPOWER case file")->required();
        gen->add_option("--n", args->cfg.n_instances, "number of instances")
            ->check(CLI::PositiveNumber);
        gen->add_option("--p", args->cfg.cut_probability, "line-cut probability per instance")
            ->check(CLI::Range(0.0, 1.0));
        gen->add_option("--sigma", args->cfg.load_sigma, "load/voltage perturbation std dev, pu")
            ->check(CLI::NonNegativeNumber);
        gen->add_option("--alpha", args->cfg.dirichlet_alpha, "Dirichlet concentration")
            ->check(CLI::PositiveNumber);
        gen->add_option("--seed", args->cfg.seed, "master seed")->envname("NMINUS1_SEED");
        gen->add_option("--jobs", args->jobs, "parallel workers")->check(CLI::PositiveNumber);
        gen->add_option("--out", args->out, "output dataset path")->required();
        gen->callback([args, &action] {
            action = [args] {
                return cmd_generate(args->case_path, args->cfg, args->jobs, args->out);
            };
        });
    }

    // train
    auto* tr = app.add_subcommand("train", "train the residual MLP surrogate");
    {
        struct TrainArgs {
            std::string data, variant = "small", out;
            TrainConfig cfg;
        };
        auto args = std::make_shared<TrainArgs>();
        tr->add_option("--data", args->data, "training dataset")->required();
        tr->add_option("--variant", args->variant, "small | medium")
            ->check(CLI::IsMember({"small", "medium"}));
        tr->add_option("--epochs", args->cfg.epochs, "training epochs")
            ->check(CLI::NonNegativeNumber);
        tr->add_option("--lr", args->cfg.learning_rate, "Adam learning rate");
        tr->add_option("--batch-size", args->cfg.batch_size, "mini-batch size")
            ->check(CLI::PositiveNumber);
        tr->add_option("--scheduler-step", args->cfg.scheduler_step,
                       "epochs between learning-rate decays")
            ->check(CLI::PositiveNumber);
        tr->add_option("--scheduler-gamma", args->cfg.scheduler_gamma, "decay factor");
        tr->add_option("--seed", args->cfg.seed, "training seed")->envname("NMINUS1_SEED");
        tr->add_option("--out", args->out, "checkpoint path")->required();
        tr->callback([args, &action] {
            action = [args] { return cmd_train(args->data, args->variant, args->cfg, args->out); };
        });
    }

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "MSE of a checkpoint on a dataset");
    {
        auto args = std::make_shared<std::array<std::string, 3>>();
        ev->add_option("--ckpt", (*args)[0], "model checkpoint")->required();
        ev->add_option("--data", (*args)[1], "evaluation dataset")->required();
        ev->add_option("--csv", (*args)[2], "also append a CSV row here");
        ev->callback([args, &action] {
            action = [args] { return cmd_evaluate((*args)[0], (*args)[1], (*args)[2]); };
        });
    }

    // analyze
    auto* an = app.add_subcommand("analyze", "emit table1/2/3 robustness reports");
    {
        struct AnalyzeArgs {
            std::string case_path, n_data, n1_data, out_dir = ".";
            std::vector<std::string> models, mixes;
        };
        auto args = std::make_shared<AnalyzeArgs>();
        an->add_option("--case", args->case_path, "MATPOWER case file")->required();
        an->add_option("--model", args->models, "name=checkpoint (repeatable)")->required();
        an->add_option("--n-data", args->n_data, "N evaluation dataset")->required();
        an->add_option("--n1-data", args->n1_data, "N-1 evaluation dataset")->required();
        an->add_option("--mix", args->mixes, "p=checkpoint rows for table3 (repeatable)");
        an->add_option("--out", args->out_dir, "output directory for the CSVs");
        an->callback([args, &action] {
            action = [args] {
                return cmd_analyze(args->case_path, args->models, args->n_data, args->n1_data,
                                   args->mixes, args->out_dir);
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        return action();
    } catch (const IslandedGridError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const NonConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const SingularJacobianError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    }
}
