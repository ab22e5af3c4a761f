#include "n1grid/case_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace n1grid {
namespace {

constexpr double kPi = 3.14159265358979323846;

struct Section {
    std::vector<std::vector<double>> rows;
    std::vector<int> line_numbers;
};

std::string strip_comment(const std::string& line) {
    const auto pos = line.find('%');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

double parse_number(const std::string& tok, int line_no) {
    double value = 0.0;
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        throw ParseError("malformed number '" + tok + "' on line " + std::to_string(line_no));
    return value;
}

/// Extracts `mpc.<name> = [ ... ];` as a row-per-line numeric table.
/// Rows end at ';' or at a newline; whitespace between tokens is free-form.
Section parse_section(const std::vector<std::string>& lines, const std::string& name) {
    Section sec;
    const std::string open = "mpc." + name;
    bool in_section = false;
    std::vector<double> row;
    int row_line = 0;

    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string text = strip_comment(lines[i]);
        const int line_no = static_cast<int>(i) + 1;
        if (!in_section) {
            auto pos = text.find(open);
            if (pos == std::string::npos) continue;
            pos = text.find('[', pos);
            if (pos == std::string::npos) continue;
            in_section = true;
            text = text.substr(pos + 1);
        }
        std::istringstream ss(text);
        std::string tok;
        while (ss >> tok) {
            bool row_done = false;
            bool table_done = false;
            while (!tok.empty() && (tok.back() == ';' || tok.back() == ']')) {
                if (tok.back() == ';') row_done = true;
                if (tok.back() == ']') table_done = true;
                tok.pop_back();
            }
            if (!tok.empty()) {
                if (row.empty()) row_line = line_no;
                row.push_back(parse_number(tok, line_no));
            }
            if (row_done || table_done) {
                if (!row.empty()) {
                    sec.rows.push_back(row);
                    sec.line_numbers.push_back(row_line);
                    row.clear();
                }
            }
            if (table_done) return sec;
        }
        // newline also terminates a row (tolerates files without ';')
        if (!row.empty()) {
            sec.rows.push_back(row);
            sec.line_numbers.push_back(row_line);
            row.clear();
        }
    }
    throw ParseError("section mpc." + name + " not found or not terminated");
}

double parse_base_mva(const std::vector<std::string>& lines) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string text = strip_comment(lines[i]);
        auto pos = text.find("mpc.baseMVA");
        if (pos == std::string::npos) continue;
        pos = text.find('=', pos);
        if (pos == std::string::npos) continue;
        std::string rest = text.substr(pos + 1);
        if (auto semi = rest.find(';'); semi != std::string::npos) rest = rest.substr(0, semi);
        std::istringstream ss(rest);
        std::string tok;
        if (!(ss >> tok)) break;
        return parse_number(tok, static_cast<int>(i) + 1);
    }
    throw ParseError("mpc.baseMVA not found");
}

}  // namespace

GridCase parse_matpower_case(const std::string& text, const std::string& name) {
    std::vector<std::string> lines;
    {
        std::istringstream ss(text);
        std::string line;
        while (std::getline(ss, line)) lines.push_back(line);
    }

    GridCase grid;
    grid.name = name;
    if (grid.name.empty()) {
        for (const std::string& line : lines) {
            const auto pos = strip_comment(line).find("function mpc =");
            if (pos != std::string::npos) {
                std::istringstream ss(line.substr(pos + 14));
                ss >> grid.name;
                break;
            }
        }
    }
    grid.base_mva = parse_base_mva(lines);
    if (grid.base_mva <= 0.0) throw ParseError("baseMVA must be positive");

    const Section bus = parse_section(lines, "bus");
    const Section gen = parse_section(lines, "gen");
    const Section branch = parse_section(lines, "branch");

    std::map<int, int> index_of;
    for (std::size_t i = 0; i < bus.rows.size(); ++i) {
        const auto& row = bus.rows[i];
        if (row.size() < 9)
            throw ParseError("bus row too short on line " + std::to_string(bus.line_numbers[i]));
        Bus b;
        b.id = static_cast<int>(i);
        b.external_id = static_cast<int>(row[0]);
        const int type = static_cast<int>(row[1]);
        switch (type) {
            case 3: b.kind = BusKind::Slack; break;
            case 2: b.kind = BusKind::PV; break;
            case 1: b.kind = BusKind::PQ; break;
            default:
                throw ParseError("unknown bus type " + std::to_string(type) + " on line " +
                                 std::to_string(bus.line_numbers[i]));
        }
        b.p_load = row[2] / grid.base_mva;
        b.q_load = row[3] / grid.base_mva;
        b.gs = row[4] / grid.base_mva;
        b.bs = row[5] / grid.base_mva;
        b.vm_init = row[7];
        b.va_init = row[8] * kPi / 180.0;
        b.vm_setpoint = b.vm_init > 0.0 ? b.vm_init : 1.0;
        if (b.kind == BusKind::Slack) b.va_slack = b.va_init;
        if (index_of.count(b.external_id))
            throw ParseError("duplicate bus id " + std::to_string(b.external_id));
        index_of[b.external_id] = b.id;
        grid.buses.push_back(b);
    }

    std::vector<char> has_unit(grid.buses.size(), 0);
    for (std::size_t i = 0; i < gen.rows.size(); ++i) {
        const auto& row = gen.rows[i];
        if (row.size() < 8)
            throw ParseError("gen row too short on line " + std::to_string(gen.line_numbers[i]));
        if (row[7] <= 0.0) continue;  // out-of-service unit
        const auto it = index_of.find(static_cast<int>(row[0]));
        if (it == index_of.end())
            throw ParseError("gen references unknown bus " +
                             std::to_string(static_cast<int>(row[0])));
        Bus& b = grid.buses[static_cast<std::size_t>(it->second)];
        b.p_gen += row[1] / grid.base_mva;
        if (b.kind == BusKind::PQ) b.q_gen += row[2] / grid.base_mva;
        // units on one bus aggregate; the voltage setpoint comes from the first
        if (b.kind != BusKind::PQ && !has_unit[static_cast<std::size_t>(b.id)])
            b.vm_setpoint = row[5];
        has_unit[static_cast<std::size_t>(b.id)] = 1;
        grid.total_generation += row[1] / grid.base_mva;
    }

    for (std::size_t i = 0; i < branch.rows.size(); ++i) {
        const auto& row = branch.rows[i];
        if (row.size() < 11)
            throw ParseError("branch row too short on line " +
                             std::to_string(branch.line_numbers[i]));
        Branch br;
        br.id = static_cast<int>(grid.branches.size());
        const auto from = index_of.find(static_cast<int>(row[0]));
        const auto to = index_of.find(static_cast<int>(row[1]));
        if (from == index_of.end() || to == index_of.end())
            throw ParseError("branch endpoint unknown on line " +
                             std::to_string(branch.line_numbers[i]));
        br.from_bus = from->second;
        br.to_bus = to->second;
        br.r = row[2];
        br.x = row[3];
        br.b_charging = row[4];
        br.tap_ratio = row[8] != 0.0 ? row[8] : 1.0;
        br.phase_shift = row[9] * kPi / 180.0;
        grid.branches.push_back(br);
    }

    validate_case(grid);
    return grid;
}

GridCase load_matpower_case(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open case file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_matpower_case(ss.str(), path.stem().string());
}

namespace {

using nlohmann::json;

json vec_to_json(const std::vector<double>& v) { return json(v); }

std::vector<double> json_to_vec(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_array())
        throw ParseError(std::string("missing or invalid field: ") + field);
    return j[field].get<std::vector<double>>();
}

void check_same_dims(const ScenarioRecord& a, const ScenarioRecord& b) {
    const bool ok = a.in_service.size() == b.in_service.size() &&
                    a.input_pg.size() == b.input_pg.size() &&
                    a.input_vm.size() == b.input_vm.size() &&
                    a.input_pl.size() == b.input_pl.size() &&
                    a.input_ql.size() == b.input_ql.size() && a.bus_p.size() == b.bus_p.size() &&
                    a.br_i_or.size() == b.br_i_or.size();
    if (!ok) throw std::invalid_argument("records do not share one grid's dimensions");
}

}  // namespace

std::string record_to_json_line(const ScenarioRecord& rec) {
    json j;
    j["instance_id"] = rec.instance_id;
    j["in_service"] = rec.in_service;
    if (rec.cut_branch)
        j["cut_branch"] = *rec.cut_branch;
    else
        j["cut_branch"] = nullptr;
    j["bus_p"] = vec_to_json(rec.bus_p);
    j["bus_q"] = vec_to_json(rec.bus_q);
    j["bus_vm"] = vec_to_json(rec.bus_vm);
    j["bus_va"] = vec_to_json(rec.bus_va);
    j["inj_current"] = vec_to_json(rec.inj_current);
    j["br_i_or"] = vec_to_json(rec.br_i_or);
    j["br_i_ex"] = vec_to_json(rec.br_i_ex);
    j["input_pg"] = vec_to_json(rec.input_pg);
    j["input_vm"] = vec_to_json(rec.input_vm);
    j["input_pl"] = vec_to_json(rec.input_pl);
    j["input_ql"] = vec_to_json(rec.input_ql);
    return j.dump();
}

ScenarioRecord record_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    ScenarioRecord rec;
    rec.instance_id = j.at("instance_id").get<int>();
    rec.in_service = j.at("in_service").get<std::vector<std::uint8_t>>();
    if (j.contains("cut_branch") && !j["cut_branch"].is_null())
        rec.cut_branch = j["cut_branch"].get<int>();
    rec.bus_p = json_to_vec(j, "bus_p");
    rec.bus_q = json_to_vec(j, "bus_q");
    rec.bus_vm = json_to_vec(j, "bus_vm");
    rec.bus_va = json_to_vec(j, "bus_va");
    rec.inj_current = json_to_vec(j, "inj_current");
    rec.br_i_or = json_to_vec(j, "br_i_or");
    rec.br_i_ex = json_to_vec(j, "br_i_ex");
    rec.input_pg = json_to_vec(j, "input_pg");
    rec.input_vm = json_to_vec(j, "input_vm");
    rec.input_pl = json_to_vec(j, "input_pl");
    rec.input_ql = json_to_vec(j, "input_ql");
    return rec;
}

void write_dataset(const std::vector<ScenarioRecord>& records,
                   const std::filesystem::path& path) {
    for (std::size_t i = 1; i < records.size(); ++i) check_same_dims(records[0], records[i]);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    for (const ScenarioRecord& rec : records) out << record_to_json_line(rec) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<ScenarioRecord> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset: " + path.string());
    std::vector<ScenarioRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(record_from_json_line(line));
        } catch (const std::exception& e) {
            throw ParseError("unreadable record on line " + std::to_string(line_no) + ": " +
                             e.what());
        }
        if (records.size() > 1) {
            try {
                check_same_dims(records.front(), records.back());
            } catch (const std::exception&) {
                throw ParseError("dimension mismatch on line " + std::to_string(line_no));
            }
        }
    }
    return records;
}

}  // namespace n1grid
