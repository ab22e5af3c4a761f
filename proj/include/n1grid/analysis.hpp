#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "n1grid/case_io.hpp"
#include "n1grid/grid_model.hpp"
#include "n1grid/surrogate.hpp"

namespace n1grid {

/// MSE over the current outputs of one record, denormalized per-unit space.
double record_mse(const Surrogate& model, const ScenarioRecord& rec);

/// Grand mean over all current outputs of all records.
double evaluate_mse(const Surrogate& model, std::span<const ScenarioRecord> records);

struct DegreeCluster {
    std::string role;  // "max" or "median"
    int degree = 0;    // degree of that node under the record's cut topology
    int count = 0;
    double mse = 0.0;

    friend bool operator==(const DegreeCluster&, const DegreeCluster&) = default;
};

/// Locates the highest-degree and median-degree nodes of the full topology
/// (ties to the lowest bus id; median is the upper median of the sorted
/// degree sequence), then groups N-1 records by the degree those nodes have
/// after the record's cut. Throws when a record lacks cut_branch.
std::vector<DegreeCluster> degree_cluster_analysis(const Surrogate& model, const GridCase& grid,
                                                   std::span<const ScenarioRecord> n1_records);

struct ModelScore {
    std::string model;
    double n_mse = 0.0;
    double n1_mse = 0.0;
    double gap_ratio = 0.0;  // n1_mse / n_mse

    friend bool operator==(const ModelScore&, const ModelScore&) = default;
};

struct MixRow {
    std::string model;
    double p = 0.0;
    double n1_mse = 0.0;

    friend bool operator==(const MixRow&, const MixRow&) = default;
};

struct NamedModel {
    std::string name;
    Surrogate model;
};

struct MixModel {
    std::string name;
    double p = 0.0;
    Surrogate model;
};

struct EvalReport {
    std::string dataset;
    std::vector<ModelScore> models;
    std::string degree_model;  // the lowest-N-MSE model, used for the degree table
    std::vector<DegreeCluster> clusters;
    std::vector<MixRow> mix_table;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Aggregates N/N-1 scores for every model, the degree table for the model
/// with the lowest N MSE, and the mixed-training table.
EvalReport robustness_report(const GridCase& grid, std::span<const NamedModel> models,
                             std::span<const ScenarioRecord> n_records,
                             std::span<const ScenarioRecord> n1_records,
                             std::span<const MixModel> mix_models);

/// table1.csv: model,dataset,n_mse,n1_mse
/// table2.csv: role,degree,count,mse
/// table3.csv: model,p,n1_mse
void write_report_csvs(const EvalReport& report, const std::filesystem::path& out_dir);

std::vector<ModelScore> parse_table1(const std::filesystem::path& path, std::string* dataset = nullptr);
std::vector<DegreeCluster> parse_table2(const std::filesystem::path& path);
std::vector<MixRow> parse_table3(const std::filesystem::path& path);

}  // namespace n1grid
