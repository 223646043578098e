#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gdpo/error.hpp"
#include "gdpo/evalkit.hpp"

namespace gdpo {

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_number(const std::string& text, const std::filesystem::path& path, std::size_t line) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size()) {
        throw DataError(path.string() + ":" + std::to_string(line) + ": bad number \"" + text + "\"");
    }
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

std::string join_csv(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) {
            out += ',';
        }
        out += cells[i];
    }
    return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return in;
}

const char* kPlotScript = R"(# Plots avg_jsd per method against the baseline lines in plot_data.json.
import json
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "plot_data.json"
with open(path) as f:
    data = json.load(f)

for s in data["series"]:
    style = "--" if s["kind"] == "baseline" else "-"
    plt.plot(s["x"], s["y"], style, label=s["name"])
plt.xlabel(data["x_label"])
plt.ylabel(data["y_label"])
plt.legend()
plt.savefig(path.replace(".json", ".png"))
)";

}  // namespace

const std::vector<std::string>& trace_columns() {
    static const std::vector<std::string> cols{"step",
                                               "avg_jsd",
                                               "jsd_majority_baseline",
                                               "jsd_reverse_baseline",
                                               "jsd_uniform_baseline",
                                               "jsd_noise_baseline",
                                               "margin_majority",
                                               "margin_minority",
                                               "margin_other",
                                               "loss_total",
                                               "loss_kl",
                                               "loss_pref",
                                               "loss_nll"};
    return cols;
}

void write_trace_csv(const TrainingTrace& trace, const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    out << join_csv(trace_columns()) << '\n';
    for (const TracePoint& p : trace.points) {
        out << join_csv({std::to_string(p.step), fmt(p.avg_jsd), fmt(p.jsd_majority_baseline),
                         fmt(p.jsd_reverse_baseline), fmt(p.jsd_uniform_baseline), fmt(p.jsd_noise_baseline),
                         fmt(p.margin_majority), fmt(p.margin_minority), fmt(p.margin_other), fmt(p.loss_total),
                         fmt(p.loss_kl), fmt(p.loss_pref), fmt(p.loss_nll)})
            << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

TrainingTrace parse_trace_csv(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || split_csv(line) != trace_columns()) {
        throw DataError(path.string() + ":1: unexpected trace header");
    }
    TrainingTrace trace;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != trace_columns().size()) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(trace_columns().size()) + " columns");
        }
        std::vector<double> v;
        for (const auto& c : cells) {
            v.push_back(parse_number(c, path, line_no));
        }
        TracePoint p;
        p.step = static_cast<std::size_t>(v[0]);
        p.avg_jsd = v[1];
        p.jsd_majority_baseline = v[2];
        p.jsd_reverse_baseline = v[3];
        p.jsd_uniform_baseline = v[4];
        p.jsd_noise_baseline = v[5];
        p.margin_majority = v[6];
        p.margin_minority = v[7];
        p.margin_other = v[8];
        p.loss_total = v[9];
        p.loss_kl = v[10];
        p.loss_pref = v[11];
        p.loss_nll = v[12];
        trace.points.push_back(p);
    }
    return trace;
}

void write_metrics_csv(std::span<const MetricReport> reports, const std::filesystem::path& path) {
    std::ofstream out = open_out(path);
    out << "method,jsd,cbc,bpc,rs,n\n";
    for (const MetricReport& r : reports) {
        out << join_csv({r.method, fmt(r.jsd), fmt(r.cbc), fmt(r.bpc), fmt(r.rs), std::to_string(r.n)}) << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

std::vector<MetricReport> parse_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != "method,jsd,cbc,bpc,rs,n") {
        throw DataError(path.string() + ":1: unexpected metrics header");
    }
    std::vector<MetricReport> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto c = split_csv(line);
        if (c.size() != 6) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 6 columns");
        }
        out.push_back({c[0], parse_number(c[1], path, line_no), parse_number(c[2], path, line_no),
                       parse_number(c[3], path, line_no), parse_number(c[4], path, line_no),
                       static_cast<std::size_t>(parse_number(c[5], path, line_no))});
    }
    return out;
}

void emit_report(std::span<const NamedTrace> traces, std::span<const MetricReport> reports,
                 const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
    }
    for (const NamedTrace& t : traces) {
        write_trace_csv(t.trace, out_dir / ("trace_" + t.method + ".csv"));
    }
    write_metrics_csv(reports, out_dir / "metrics.csv");

    using nlohmann::json;
    json series = json::array();
    for (const NamedTrace& t : traces) {
        json x = json::array(), y = json::array();
        for (const TracePoint& p : t.trace.points) {
            x.push_back(p.step);
            y.push_back(p.avg_jsd);
        }
        series.push_back({{"name", t.method}, {"kind", "method"}, {"x", x}, {"y", y}});
    }
    if (!traces.empty()) {
        const auto& points = traces.front().trace.points;
        const std::pair<const char*, double TracePoint::*> baselines[] = {
            {"majority", &TracePoint::jsd_majority_baseline},
            {"reverse", &TracePoint::jsd_reverse_baseline},
            {"uniform", &TracePoint::jsd_uniform_baseline},
            {"noise", &TracePoint::jsd_noise_baseline}};
        for (const auto& [name, member] : baselines) {
            json x = json::array(), y = json::array();
            for (const TracePoint& p : points) {
                x.push_back(p.step);
                y.push_back(p.*member);
            }
            series.push_back({{"name", name}, {"kind", "baseline"}, {"x", x}, {"y", y}});
        }
    }
    const json plot{{"x_label", "step"}, {"y_label", "avg_jsd"}, {"series", series}};
    std::ofstream out = open_out(out_dir / "plot_data.json");
    out << plot.dump(2) << '\n';
    std::ofstream script = open_out(out_dir / "plot_traces.py");
    script << kPlotScript;
}

}  // namespace gdpo
