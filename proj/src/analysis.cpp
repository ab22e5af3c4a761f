#include "n1grid/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace n1grid {
namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& tok, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("bad number '" + tok + "' in " + where);
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != expected_header)
        throw std::runtime_error("unexpected header in " + path.string());
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

}  // namespace

double record_mse(const Surrogate& model, const ScenarioRecord& rec) {
    const std::vector<double> predicted = predict(model, rec);
    const std::vector<double> truth = FeatureCodec::raw_output(rec);
    return mse_loss(predicted, truth);
}

double evaluate_mse(const Surrogate& model, std::span<const ScenarioRecord> records) {
    if (records.empty()) throw std::invalid_argument("evaluate_mse: empty record list");
    double acc = 0.0;
    for (const ScenarioRecord& rec : records) acc += record_mse(model, rec);
    return acc / static_cast<double>(records.size());
}

namespace {

int upper_median(std::vector<int> values) {
    std::sort(values.begin(), values.end());
    return values[values.size() / 2];
}

int find_bus_with_degree(const std::vector<int>& degrees, int wanted) {
    for (std::size_t i = 0; i < degrees.size(); ++i)
        if (degrees[i] == wanted) return static_cast<int>(i);
    throw std::logic_error("no bus with the requested degree");
}

int degree_under(const GridCase& grid, const std::vector<std::uint8_t>& in_service, int bus) {
    int deg = 0;
    for (const Branch& br : grid.branches) {
        if (!in_service[static_cast<std::size_t>(br.id)]) continue;
        if (br.from_bus == bus || br.to_bus == bus) ++deg;
    }
    return deg;
}

}  // namespace

std::vector<DegreeCluster> degree_cluster_analysis(const Surrogate& model, const GridCase& grid,
                                                   std::span<const ScenarioRecord> n1_records) {
    const std::vector<int> full_deg = node_degrees(grid, Topology::full(grid));
    const int max_deg = *std::max_element(full_deg.begin(), full_deg.end());
    const int med_deg = upper_median(full_deg);
    const int bus_max = find_bus_with_degree(full_deg, max_deg);
    const int bus_med = find_bus_with_degree(full_deg, med_deg);

    struct Acc {
        int count = 0;
        double sum = 0.0;
    };
    std::map<int, Acc> by_degree_max, by_degree_med;

    for (const ScenarioRecord& rec : n1_records) {
        if (!rec.cut_branch)
            throw std::invalid_argument("degree clustering requires N-1 records (cut_branch set)");
        if (rec.in_service.size() != grid.branches.size())
            throw std::invalid_argument("record does not match the case dimensions");
        const double mse = record_mse(model, rec);
        Acc& am = by_degree_max[degree_under(grid, rec.in_service, bus_max)];
        am.count += 1;
        am.sum += mse;
        Acc& ad = by_degree_med[degree_under(grid, rec.in_service, bus_med)];
        ad.count += 1;
        ad.sum += mse;
    }

    std::vector<DegreeCluster> out;
    for (auto it = by_degree_max.rbegin(); it != by_degree_max.rend(); ++it)
        out.push_back({"max", it->first, it->second.count, it->second.sum / it->second.count});
    for (auto it = by_degree_med.rbegin(); it != by_degree_med.rend(); ++it)
        out.push_back({"median", it->first, it->second.count, it->second.sum / it->second.count});
    return out;
}

EvalReport robustness_report(const GridCase& grid, std::span<const NamedModel> models,
                             std::span<const ScenarioRecord> n_records,
                             std::span<const ScenarioRecord> n1_records,
                             std::span<const MixModel> mix_models) {
    if (models.empty()) throw std::invalid_argument("robustness_report: no models");
    EvalReport report;
    report.dataset = grid.name;

    const NamedModel* best = nullptr;
    double best_n_mse = 0.0;
    for (const NamedModel& entry : models) {
        ModelScore score;
        score.model = entry.name;
        score.n_mse = evaluate_mse(entry.model, n_records);
        score.n1_mse = evaluate_mse(entry.model, n1_records);
        score.gap_ratio = score.n1_mse / score.n_mse;
        report.models.push_back(score);
        if (!best || score.n_mse < best_n_mse) {
            best = &entry;
            best_n_mse = score.n_mse;
        }
    }
    report.degree_model = best->name;
    report.clusters = degree_cluster_analysis(best->model, grid, n1_records);

    for (const MixModel& mix : mix_models)
        report.mix_table.push_back({mix.name, mix.p, evaluate_mse(mix.model, n1_records)});
    return report;
}

void write_report_csvs(const EvalReport& report, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);

    {
        std::ofstream out(out_dir / "table1.csv");
        out << "model,dataset,n_mse,n1_mse\n";
        for (const ModelScore& s : report.models)
            out << s.model << ',' << report.dataset << ',' << fmt_double(s.n_mse) << ','
                << fmt_double(s.n1_mse) << '\n';
    }
    {
        std::ofstream out(out_dir / "table2.csv");
        out << "role,degree,count,mse\n";
        for (const DegreeCluster& c : report.clusters)
            out << c.role << ',' << c.degree << ',' << c.count << ',' << fmt_double(c.mse) << '\n';
    }
    {
        std::ofstream out(out_dir / "table3.csv");
        out << "model,p,n1_mse\n";
        for (const MixRow& row : report.mix_table)
            out << row.model << ',' << fmt_double(row.p) << ',' << fmt_double(row.n1_mse) << '\n';
    }
}

std::vector<ModelScore> parse_table1(const std::filesystem::path& path, std::string* dataset) {
    std::vector<ModelScore> out;
    for (const auto& row : read_csv(path, "model,dataset,n_mse,n1_mse")) {
        if (row.size() != 4) throw std::runtime_error("bad row in " + path.string());
        ModelScore s;
        s.model = row[0];
        if (dataset) *dataset = row[1];
        s.n_mse = parse_double(row[2], path.string());
        s.n1_mse = parse_double(row[3], path.string());
        s.gap_ratio = s.n1_mse / s.n_mse;
        out.push_back(s);
    }
    return out;
}

std::vector<DegreeCluster> parse_table2(const std::filesystem::path& path) {
    std::vector<DegreeCluster> out;
    for (const auto& row : read_csv(path, "role,degree,count,mse")) {
        if (row.size() != 4) throw std::runtime_error("bad row in " + path.string());
        DegreeCluster c;
        c.role = row[0];
        c.degree = static_cast<int>(parse_double(row[1], path.string()));
        c.count = static_cast<int>(parse_double(row[2], path.string()));
        c.mse = parse_double(row[3], path.string());
        out.push_back(c);
    }
    return out;
}

std::vector<MixRow> parse_table3(const std::filesystem::path& path) {
    std::vector<MixRow> out;
    for (const auto& row : read_csv(path, "model,p,n1_mse")) {
        if (row.size() != 3) throw std::runtime_error("bad row in " + path.string());
        MixRow r;
        r.model = row[0];
        r.p = parse_double(row[1], path.string());
        r.n1_mse = parse_double(row[2], path.string());
        out.push_back(r);
    }
    return out;
}

}  // namespace n1grid
