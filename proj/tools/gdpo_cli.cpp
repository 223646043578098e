// gdpo: generate data, train (SFT / DPO / GDPO / KTO-GDPO), evaluate, report.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gdpo/error.hpp"
#include "gdpo/evalkit.hpp"
#include "gdpo/run_config.hpp"
#include "gdpo/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kOutEnv = "GDPO_OUT";

struct Common {
    std::string config;
    std::string out;
    std::vector<std::string> set;
};

fs::path default_out_root() {
    const char* env = std::getenv(kOutEnv);
    return env && *env ? fs::path(env) : fs::path("runs");
}

// --set section.key=value, value parsed as JSON when possible.
json overrides_from(const std::vector<std::string>& assignments) {
    json patch = json::object();
    for (const std::string& a : assignments) {
        const auto eq = a.find('=');
        const auto dot = a.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
            throw gdpo::ConfigError("--set expects section.key=value, got \"" + a + "\"");
        }
        const std::string section = a.substr(0, dot);
        const std::string key = a.substr(dot + 1, eq - dot - 1);
        const std::string text = a.substr(eq + 1);
        json value;
        try {
            value = json::parse(text);
        } catch (const json::exception&) {
            value = text;
        }
        patch[section][key] = value;
    }
    return patch;
}

// Commands that read a dataset take the data section from its manifest.
gdpo::RunConfig load_config(const Common& c, json patch, std::optional<gdpo::DatasetManifest> data = {}) {
    patch.merge_patch(overrides_from(c.set));
    gdpo::RunConfig cfg = c.config.empty() ? gdpo::parse_run_config("{}", patch.dump())
                                           : gdpo::load_run_config(c.config, patch.dump());
    if (data) {
        cfg.data = *data;
        cfg.validate();
    }
    return cfg;
}

fs::path run_dir(const Common& c, const gdpo::RunConfig& cfg) {
    return c.out.empty() ? default_out_root() / gdpo::config_hash(cfg) : fs::path(c.out);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw gdpo::DataError("cannot create " + dir.string() + ": " + ec.message());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) {
        throw gdpo::DataError("cannot write " + path.string());
    }
}

gdpo::LoadedDataset load_split(const fs::path& data_dir, gdpo::Split split) {
    return gdpo::load_dataset(data_dir / (std::string(gdpo::to_string(split)) + ".jsonl"));
}

std::vector<gdpo::Topic> topics_of(const gdpo::DatasetManifest& m) {
    return gdpo::generate_topics(m.topic_config(), m.seed);
}

int cmd_gen_data(const Common& c) {
    const gdpo::RunConfig cfg = load_config(c, json::object());
    const fs::path dir = run_dir(c, cfg);
    ensure_dir(dir);
    const gdpo::GeneratedData data = gdpo::generate_dataset(cfg.data);
    gdpo::serialize_dataset(data.train, cfg.data, dir / "train.jsonl");
    gdpo::serialize_dataset(data.eval, cfg.data, dir / "eval.jsonl");
    gdpo::serialize_dataset(data.test, cfg.data, dir / "test.jsonl");
    write_text(dir / "config.json", gdpo::to_json_text(cfg) + "\n");

    std::cout << "topics " << cfg.data.topics << ", beliefs " << cfg.data.beliefs << ", styles " << cfg.data.styles
              << "\n";
    std::cout << "split  examples  per-topic\n";
    const auto q = static_cast<std::size_t>(cfg.data.topics);
    for (auto [name, n] : {std::pair{"train", data.train.size()}, std::pair{"eval", data.eval.size()},
                           std::pair{"test", data.test.size()}}) {
        std::cout << name << "  " << n << "  " << n / q << "\n";
    }
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

int cmd_sft(const Common& c, const std::string& data_dir, bool uniform) {
    const gdpo::LoadedDataset train = load_split(data_dir, gdpo::Split::train);
    const gdpo::LoadedDataset eval = load_split(data_dir, gdpo::Split::eval);
    const gdpo::RunConfig cfg = load_config(c, json::object(), train.manifest);
    const fs::path dir = run_dir(c, cfg);
    ensure_dir(dir);
    const auto topics = topics_of(train.manifest);
    gdpo::Policy init = gdpo::make_policy(cfg.model, topics);
    gdpo::TrainResult r = uniform ? gdpo::run_uniform_sft(std::move(init), topics, train.examples, eval.examples, cfg.sft)
                                  : gdpo::run_sft(std::move(init), train.examples, eval.examples, cfg.sft);
    const std::string name = uniform ? "sft-uniform" : "sft";
    gdpo::save_checkpoint(r.policy, dir / (name + ".ckpt"));
    gdpo::write_trace_csv(r.trace, dir / ("trace_" + name + ".csv"));
    write_text(dir / "config.json", gdpo::to_json_text(cfg) + "\n");
    std::cout << name << ": " << r.trace.points.size() << " eval points, final avg_jsd "
              << r.trace.points.back().avg_jsd << "\nwrote " << (dir / (name + ".ckpt")).string() << "\n";
    return 0;
}

int cmd_align(const Common& c, const std::string& data_dir, const std::string& checkpoint, const std::string& method,
              std::optional<double> beta, std::optional<double> calibration_weight) {
    const gdpo::LoadedDataset train = load_split(data_dir, gdpo::Split::train);
    const gdpo::LoadedDataset eval = load_split(data_dir, gdpo::Split::eval);
    json patch = json::object();
    if (!method.empty()) {
        patch["align"]["method"] = method;
    }
    if (beta) {
        patch["align"]["beta"] = *beta;
    }
    if (calibration_weight) {
        patch["align"]["calibration_weight"] = *calibration_weight;
    }
    const gdpo::RunConfig cfg = load_config(c, patch, train.manifest);
    const fs::path dir = run_dir(c, cfg);
    ensure_dir(dir);
    const gdpo::Policy sft = gdpo::load_checkpoint(checkpoint);
    const gdpo::Method m = cfg.align.align.method;
    const gdpo::TrainResult r = gdpo::run_alignment(m, sft, train.examples, eval.examples, cfg.align);
    const std::string name(gdpo::to_string(m));
    gdpo::save_checkpoint(r.policy, dir / (name + ".ckpt"));
    gdpo::write_trace_csv(r.trace, dir / ("trace_" + name + ".csv"));
    write_text(dir / "config.json", gdpo::to_json_text(cfg) + "\n");
    std::cout << name << ": " << r.trace.points.size() << " eval points, final avg_jsd "
              << r.trace.points.back().avg_jsd << "\nwrote " << (dir / (name + ".ckpt")).string() << "\n";
    return 0;
}

int cmd_eval(const Common& c, const std::string& data_dir, const std::string& checkpoint, std::string method) {
    const gdpo::LoadedDataset test = load_split(data_dir, gdpo::Split::test);
    const gdpo::RunConfig cfg = load_config(c, json::object(), test.manifest);
    const fs::path dir = run_dir(c, cfg);
    ensure_dir(dir);
    const gdpo::Policy policy = gdpo::load_checkpoint(checkpoint);
    if (method.empty()) {
        method = fs::path(checkpoint).stem().string();
    }
    const auto topics = topics_of(test.manifest);
    const gdpo::MetricReport rep = gdpo::evaluate_policy(method, policy, topics, test.examples, cfg.eval);
    const std::vector<gdpo::MetricReport> reps{rep};
    gdpo::write_metrics_csv(reps, dir / ("metrics_" + method + ".csv"));
    std::cout << "method,jsd,cbc,bpc,rs,n\n"
              << rep.method << "," << rep.jsd << "," << rep.cbc << "," << rep.bpc << "," << rep.rs << "," << rep.n
              << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& traces, const std::vector<std::string>& metrics,
               const std::string& out) {
    std::vector<gdpo::NamedTrace> named;
    for (const std::string& t : traces) {
        std::string stem = fs::path(t).stem().string();
        if (stem.rfind("trace_", 0) == 0) {
            stem = stem.substr(6);
        }
        named.push_back({stem, gdpo::parse_trace_csv(t)});
    }
    std::vector<gdpo::MetricReport> reports;
    for (const std::string& m : metrics) {
        for (gdpo::MetricReport& r : gdpo::parse_metrics_csv(m)) {
            reports.push_back(std::move(r));
        }
    }
    const fs::path dir = out.empty() ? default_out_root() / "report" : fs::path(out);
    gdpo::emit_report(named, reports, dir);
    std::cout << "wrote " << dir.string() << "\n";
    return 0;
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON run config (defaults apply to missing keys)");
    app->add_option("--out", c.out, std::string("output directory (default: $") + kOutEnv +
                                        " or ./runs, plus the config hash)");
    app->add_option("--set", c.set, "override a config key, e.g. --set align.beta=0.2 (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group-distributional preference alignment laboratory"};
    app.require_subcommand(1);

    Common gen_c, sft_c, align_c, eval_c;
    std::string data_dir, checkpoint, method, eval_method, report_out;
    bool uniform = false;
    std::optional<double> beta, calibration_weight;
    std::vector<std::string> report_traces, report_metrics;

    CLI::App* gen = app.add_subcommand("gen-data", "generate train/eval/test preference datasets");
    add_common(gen, gen_c);

    CLI::App* sft = app.add_subcommand("sft", "supervised fine-tuning on accepted responses");
    add_common(sft, sft_c);
    sft->add_option("--data", data_dir, "directory with train.jsonl and eval.jsonl")->required();
    sft->add_flag("--uniform", uniform, "resample accepted beliefs uniformly before training");

    CLI::App* align = app.add_subcommand("align", "preference alignment from an SFT checkpoint");
    add_common(align, align_c);
    align->add_option("--data", data_dir, "directory with train.jsonl and eval.jsonl")->required();
    align->add_option("--checkpoint", checkpoint, "SFT checkpoint (also the frozen reference)")->required();
    align->add_option("--method", method, "dpo, gdpo or kto-gdpo (default from config: gdpo)");
    align->add_option("--beta", beta, "preference temperature (default 0.1)");
    align->add_option("--calibration-weight", calibration_weight, "weight of the KL calibration term (default 1)");

    CLI::App* eval = app.add_subcommand("eval", "JSD, CBC, BPC and RS of a checkpoint on the test split");
    add_common(eval, eval_c);
    eval->add_option("--data", data_dir, "directory with test.jsonl")->required();
    eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
    eval->add_option("--method", eval_method, "row label in the metrics file (default: checkpoint name)");

    CLI::App* report = app.add_subcommand("report", "collect traces and metrics into report files");
    report->add_option("--trace", report_traces, "trace CSV (repeatable)");
    report->add_option("--metrics", report_metrics, "metrics CSV (repeatable)");
    report->add_option("--out", report_out, std::string("report directory (default: $") + kOutEnv + "/report)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_data(gen_c);
        }
        if (sft->parsed()) {
            return cmd_sft(sft_c, data_dir, uniform);
        }
        if (align->parsed()) {
            return cmd_align(align_c, data_dir, checkpoint, method, beta, calibration_weight);
        }
        if (eval->parsed()) {
            return cmd_eval(eval_c, data_dir, checkpoint, eval_method);
        }
        if (report->parsed()) {
            return cmd_report(report_traces, report_metrics, report_out);
        }
    } catch (const gdpo::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case gdpo::ErrorKind::config:
                return 2;
            case gdpo::ErrorKind::data:
                return 3;
            case gdpo::ErrorKind::numeric:
                return 4;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
