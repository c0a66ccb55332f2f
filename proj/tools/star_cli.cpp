#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "star/experiment.hpp"
#include "star/theory_suite.hpp"

namespace {

std::map<std::string, std::string> read_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw star::IoError("cannot open '" + path + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            std::size_t a = 0, b = s.size();
            while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
            while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
            return s.substr(a, b - a);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw star::ConfigError("expected key = value: " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
    const star::RunConfig cfg = star::parse_run_config(config_path);
    const star::ExperimentReport report = star::run_experiment(cfg);
    std::filesystem::create_directories(out_dir);
    star::emit_report(report, star::ReportFormat::Csv, out_dir + "/report.csv");
    star::emit_report(report, star::ReportFormat::Json, out_dir + "/report.json");
    star::emit_report(report, star::ReportFormat::Markdown, out_dir + "/report.md");

    for (const auto& row : report.rows) {
        std::cout << row.name << " (d=" << row.d << "): ";
        if (!row.error.empty()) {
            std::cout << "FAILED: " << row.error << "\n";
            continue;
        }
        std::cout << (report.task == star::Task::Regression ? "mse " : "accuracy ")
                  << row.primary_mean << " +/- " << row.primary_std
                  << "  train " << row.train_metric << "  budget " << row.budget_epochs
                  << " epochs  time " << row.time_sec << "s\n";
    }
    bool any_failed = false;
    for (const auto& row : report.rows)
        if (!row.error.empty()) any_failed = true;
    return any_failed ? 1 : 0;
}

int cmd_theory(const std::string& suite, std::size_t trials, std::uint64_t seed,
               const std::string& out_path) {
    const star::theory::SuiteReport report = star::theory::run_theory_suite(suite, trials, seed);
    if (!out_path.empty()) star::theory::write_suite_report(report, out_path);
    for (const auto& c : report.checks)
        std::cout << c.name << ": " << c.instances << " instances, " << c.violations
                  << " violations, min margin " << c.min_margin << "\n";
    const std::size_t violations = report.violations_total();
    std::cout << (violations == 0 ? "OK" : "VIOLATIONS") << " (" << violations << ")\n";
    return violations == 0 ? 0 : 1;
}

int cmd_synth(const std::string& spec_path, std::size_t n, std::uint64_t seed,
              const std::string& out_path) {
    const auto kv = read_kv_file(spec_path);
    star::SyntheticSpec synth;

    star::NetworkSpec teacher;
    {
        const auto it = kv.find("teacher.widths");
        if (it == kv.end()) throw star::ConfigError("synth spec: teacher.widths required");
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) teacher.widths.push_back(std::stoi(tok));
        teacher.depth = static_cast<int>(teacher.widths.size()) - 2;
        teacher.validate();
    }
    std::uint64_t teacher_seed = 1;
    if (kv.count("teacher.seed")) teacher_seed = std::stoull(kv.at("teacher.seed"));
    star::Rng teacher_rng(teacher_seed);
    if (kv.count("teacher.init") && kv.at("teacher.init") == "sparse") {
        const std::size_t s = kv.count("teacher.s") ? std::stoul(kv.at("teacher.s"))
                                                    : teacher.total_entries() / 2;
        synth.teacher_params = star::sample_sparse_network<double>(teacher, s, teacher_rng);
    } else {
        synth.teacher_params = star::init_params<double>(teacher, teacher_rng);
    }
    synth.teacher_spec = teacher;
    if (kv.count("noise_std")) synth.noise_std = std::stod(kv.at("noise_std"));
    if (kv.count("input"))
        synth.input = kv.at("input") == "normal" ? star::InputDist::StandardNormal
                                                 : star::InputDist::UniformCube;

    const star::SyntheticDataset data = star::synthetic_regression(synth, n, seed);
    star::save_csv(data.data, out_path, "target");
    std::cout << "wrote " << n << " rows to " << out_path
              << " (noise variance " << data.noise_variance << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Star ensembling lab: experiment runner and theory checks"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    auto* run = app.add_subcommand("run", "run experiment variants from a config file");
    run->add_option("--config", config_path, "flat key=value config file")->required();
    run->add_option("--out", out_dir, "output directory for reports");

    std::string suite = "all", theory_out;
    std::size_t trials = 200;
    std::uint64_t seed = 1;
    auto* theory = app.add_subcommand("theory", "run brute-force theory checks");
    theory->add_option("--suite", suite, "geometric|offset|cover|isometry|corollary3|all");
    theory->add_option("--trials", trials, "fuzz instances per check");
    theory->add_option("--seed", seed, "root seed");
    theory->add_option("--out", theory_out, "JSON report path");

    auto* data = app.add_subcommand("data", "dataset utilities");
    data->require_subcommand(1);
    std::string synth_spec, synth_out = "synth.csv";
    std::size_t synth_n = 1000;
    std::uint64_t synth_seed = 1;
    auto* synth = data->add_subcommand("synth", "generate a teacher-network regression task");
    synth->add_option("--spec", synth_spec, "teacher spec file")->required();
    synth->add_option("--n", synth_n, "sample count");
    synth->add_option("--seed", synth_seed, "sampling seed");
    synth->add_option("--out", synth_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir);
        if (theory->parsed()) return cmd_theory(suite, trials, seed, theory_out);
        if (synth->parsed()) return cmd_synth(synth_spec, synth_n, synth_seed, synth_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
