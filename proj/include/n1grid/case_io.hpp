#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "n1grid/grid_model.hpp"

namespace n1grid {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One sampled, oracle-labeled grid instance: the dataset row.
struct ScenarioRecord {
    int instance_id = 0;
    std::vector<std::uint8_t> in_service;  // topology bits, one per branch
    std::optional<int> cut_branch;         // absent for N instances

    // model inputs, per-unit
    std::vector<double> input_pg;  // per PV bus, in bus order
    std::vector<double> input_vm;  // per PV bus
    std::vector<double> input_pl;  // per PQ bus
    std::vector<double> input_ql;  // per PQ bus

    // oracle outputs, per-unit
    std::vector<double> bus_p, bus_q, bus_vm, bus_va;
    std::vector<double> inj_current;
    std::vector<double> br_i_or, br_i_ex;

    friend bool operator==(const ScenarioRecord&, const ScenarioRecord&) = default;
};

/// Parses the MATPOWER text subset (baseMVA, bus, gen, branch). Bus ids are
/// re-indexed densely; MW/MVAr columns are converted to per-unit; angles to
/// radians; a zero tap column normalizes to 1.0.
GridCase parse_matpower_case(const std::string& text, const std::string& name = "");

/// parse_matpower_case on a file's contents; the case name defaults to the stem.
GridCase load_matpower_case(const std::filesystem::path& path);

/// Line-delimited records, one JSON object per line. All records must share
/// one grid's dimensions.
void write_dataset(const std::vector<ScenarioRecord>& records,
                   const std::filesystem::path& path);
std::vector<ScenarioRecord> read_dataset(const std::filesystem::path& path);

/// Serialization of a single record (one line, no trailing newline).
std::string record_to_json_line(const ScenarioRecord& rec);
ScenarioRecord record_from_json_line(const std::string& line);

}  // namespace n1grid
