#include "star/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace star {

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    if (values.empty()) throw ShapeError("mean_std: empty input");
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double acc = 0.0;
        for (double v : values) acc += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(acc / static_cast<double>(values.size() - 1));
    }
    return out;
}

ReportFormat report_format_from_name(const std::string& name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    if (name == "markdown" || name == "md") return ReportFormat::Markdown;
    throw ConfigError("unknown report format '" + name + "'");
}

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

std::string full(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string opt_full(const std::optional<double>& v) { return v ? full(*v) : std::string(); }

std::string disp(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
}

void write_csv(const ExperimentReport& r, std::ostream& out) {
    if (r.task == Task::Regression)
        out << "name,d,seeds,mse_mean,mse_std,mae,r2,train_mse,budget_epochs,time_sec,error\n";
    else
        out << "name,d,seeds,accuracy_mean,accuracy_std,entropy_mean,entropy_std,"
               "train_entropy,budget_epochs,time_sec,error\n";
    for (const auto& row : r.rows) {
        out << row.name << ',' << row.d << ',' << row.seed_count << ',' << full(row.primary_mean)
            << ',' << full(row.primary_std) << ',';
        if (r.task == Task::Regression)
            out << opt_full(row.mae) << ',' << opt_full(row.r2) << ',';
        else
            out << opt_full(row.entropy_mean) << ',' << opt_full(row.entropy_std) << ',';
        out << full(row.train_metric) << ',' << row.budget_epochs << ',' << full(row.time_sec)
            << ',' << row.error << '\n';
    }
}

void write_markdown(const ExperimentReport& r, std::ostream& out) {
    if (r.task == Task::Regression) {
        out << "| Name | d | MSE | MAE | R2 | TRAIN MSE | TIME (sec) |\n";
        out << "|---|---|---|---|---|---|---|\n";
        for (const auto& row : r.rows) {
            out << "| " << row.name << " | " << row.d << " | ";
            if (row.error.empty()) {
                out << disp(row.primary_mean) << "\xC2\xB1" << disp(row.primary_std) << " | "
                    << (row.mae ? disp(*row.mae) : "-") << " | "
                    << (row.r2 ? disp(*row.r2) : "-") << " | " << disp(row.train_metric)
                    << " | " << disp(row.time_sec) << " |\n";
            } else {
                out << "failed: " << row.error << " | - | - | - | - |\n";
            }
        }
    } else {
        out << "| Name | d | accuracy | entropy | TIME (sec) |\n";
        out << "|---|---|---|---|---|\n";
        for (const auto& row : r.rows) {
            out << "| " << row.name << " | " << row.d << " | ";
            if (row.error.empty()) {
                out << disp(row.primary_mean) << "\xC2\xB1" << disp(row.primary_std) << " | "
                    << (row.entropy_mean ? disp(*row.entropy_mean) : "-")
                    << "\xC2\xB1" << (row.entropy_std ? disp(*row.entropy_std) : "-") << " | "
                    << disp(row.time_sec) << " |\n";
            } else {
                out << "failed: " << row.error << " | - | - |\n";
            }
        }
    }
}

void write_json(const ExperimentReport& r, std::ostream& out) {
    nlohmann::ordered_json j;
    j["task"] = r.task == Task::Regression ? "regression" : "classification";
    j["config_hash"] = r.config_hash;
    j["seeds"] = r.seeds;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : r.rows) {
        nlohmann::ordered_json o;
        o["name"] = row.name;
        o["d"] = row.d;
        o["seeds"] = row.seed_count;
        o["primary_mean"] = row.primary_mean;
        o["primary_std"] = row.primary_std;
        if (row.mae) o["mae"] = *row.mae;
        o["r2"] = row.r2 ? nlohmann::ordered_json(*row.r2) : nlohmann::ordered_json(nullptr);
        if (row.entropy_mean) o["entropy_mean"] = *row.entropy_mean;
        if (row.entropy_std) o["entropy_std"] = *row.entropy_std;
        o["train_metric"] = row.train_metric;
        o["budget_epochs"] = row.budget_epochs;
        o["time_sec"] = row.time_sec;
        if (!row.error.empty()) o["error"] = row.error;
        j["rows"].push_back(o);
    }
    out << j.dump(2) << '\n';
}

}  // namespace

void emit_report(const ExperimentReport& report, ReportFormat format, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report to '" + path + "'");
    switch (format) {
        case ReportFormat::Csv: write_csv(report, out); break;
        case ReportFormat::Json: write_json(report, out); break;
        case ReportFormat::Markdown: write_markdown(report, out); break;
    }
    if (!out) throw IoError("write failed: " + path);
}

ExperimentReport read_report_csv(const std::string& path, Task task) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report '" + path + "'");
    ExperimentReport r;
    r.task = task;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else if (c != '\r') {
                cur += c;
            }
        }
        cells.push_back(cur);
        if (cells.size() != 11) throw IoError("malformed report row: " + line);
        ExperimentRow row;
        row.name = cells[0];
        row.d = std::stoi(cells[1]);
        row.seed_count = std::stoi(cells[2]);
        row.primary_mean = std::stod(cells[3]);
        row.primary_std = std::stod(cells[4]);
        if (task == Task::Regression) {
            if (!cells[5].empty()) row.mae = std::stod(cells[5]);
            if (!cells[6].empty()) row.r2 = std::stod(cells[6]);
        } else {
            if (!cells[5].empty()) row.entropy_mean = std::stod(cells[5]);
            if (!cells[6].empty()) row.entropy_std = std::stod(cells[6]);
        }
        row.train_metric = std::stod(cells[7]);
        row.budget_epochs = std::stol(cells[8]);
        row.time_sec = std::stod(cells[9]);
        row.error = cells[10];
        r.rows.push_back(std::move(row));
    }
    return r;
}

}  // namespace star
