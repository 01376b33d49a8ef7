#include "flowsentry/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "flowsentry/csv.hpp"
#include "flowsentry/error.hpp"

namespace flowsentry {

namespace {

const std::vector<std::string> kRunColumns = {"model",          "dataset",      "scenario",  "phase",
                                              "config",         "accuracy",     "macro_precision",
                                              "macro_recall",   "macro_fpr",    "macro_f1",  "wall_time_s"};

std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string opt_fixed(const std::optional<double>& v) { return v ? fixed(*v) : ""; }

double parse_number(const std::string& text, std::size_t line) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, "not a number: '" + text + "'");
    }
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

const std::vector<std::string> kPalette = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                           "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

void write_runs_csv(std::ostream& out, std::span<const EvalRun> runs) {
    for (std::size_t i = 0; i < kRunColumns.size(); ++i) out << (i ? "," : "") << kRunColumns[i];
    out << '\n';
    for (const auto& r : runs) {
        out << csv::escape(r.model) << ',' << csv::escape(r.dataset) << ',' << to_string(r.scenario) << ','
            << to_string(r.phase) << ',' << csv::escape(r.config.dump()) << ',' << csv::format_double(r.scores.accuracy)
            << ',' << csv::format_double(r.scores.macro_precision) << ',' << csv::format_double(r.scores.macro_recall)
            << ',' << csv::format_double(r.scores.macro_fpr) << ',' << csv::format_double(r.scores.macro_f1) << ','
            << csv::format_double(r.wall_time_s) << '\n';
    }
}

std::vector<EvalRun> read_runs_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(0, "runs file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (csv::split(line) != kRunColumns) throw ParseError(1, "unexpected runs header");
    std::vector<EvalRun> runs;
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = csv::split(line);
        if (f.size() != kRunColumns.size()) throw ParseError(number, "expected " + std::to_string(kRunColumns.size()) + " fields");
        EvalRun r;
        r.model = f[0];
        r.dataset = f[1];
        try {
            r.scenario = parse_scenario(f[2]);
            r.phase = parse_phase(f[3]);
            r.config = nlohmann::json::parse(f[4]);
        } catch (const std::exception& e) {
            throw ParseError(number, e.what());
        }
        r.scores.accuracy = parse_number(f[5], number);
        r.scores.macro_precision = parse_number(f[6], number);
        r.scores.macro_recall = parse_number(f[7], number);
        r.scores.macro_fpr = parse_number(f[8], number);
        r.scores.macro_f1 = parse_number(f[9], number);
        r.wall_time_s = parse_number(f[10], number);
        runs.push_back(std::move(r));
    }
    return runs;
}

void write_deltas_csv(std::ostream& out, std::span<const DeltaRow> deltas) {
    out << "model,dataset,scenario,phase,produced,reference,delta,status\n";
    for (const auto& d : deltas) {
        out << csv::escape(d.model) << ',' << csv::escape(d.dataset) << ',' << to_string(d.scenario) << ','
            << to_string(d.phase) << ',' << (d.produced ? csv::format_double(*d.produced) : "") << ','
            << (d.reference ? csv::format_double(*d.reference) : "") << ','
            << (d.delta ? csv::format_double(*d.delta) : "") << ',' << d.status() << '\n';
    }
}

std::string render_delta_table(std::span<const DeltaRow> deltas) {
    std::ostringstream out;
    out << "| Model | Dataset | Scenario | Phase | Produced | Reference | Delta | Status |\n";
    out << "|---|---|---|---|---:|---:|---:|---|\n";
    for (const auto& d : deltas) {
        out << "| " << d.model << " | " << d.dataset << " | " << to_string(d.scenario) << " | " << to_string(d.phase)
            << " | " << opt_fixed(d.produced) << " | " << opt_fixed(d.reference) << " | " << opt_fixed(d.delta)
            << " | " << d.status() << " |\n";
    }
    return out.str();
}

std::string render_markdown(std::span<const EvalRun> runs, std::span<const DeltaRow> deltas) {
    std::ostringstream out;
    out << "# Detection results\n\n";
    for (auto scenario : {Scenario::Binary, Scenario::Multiclass}) {
        for (auto phase : {Phase::Cv, Phase::Eval}) {
            std::vector<const EvalRun*> rows;
            for (const auto& r : runs) {
                if (r.scenario == scenario && r.phase == phase) rows.push_back(&r);
            }
            if (rows.empty()) continue;
            out << "## " << to_string(scenario) << " / " << to_string(phase) << "\n\n";
            out << "| Model | Dataset | Accuracy | Macro precision | Macro recall | Macro FPR | Macro F1 | Time (s) | Config |\n";
            out << "|---|---|---:|---:|---:|---:|---:|---:|---|\n";
            for (const auto* r : rows) {
                out << "| " << r->model << " | " << r->dataset << " | " << fixed(r->scores.accuracy) << " | "
                    << fixed(r->scores.macro_precision) << " | " << fixed(r->scores.macro_recall) << " | "
                    << fixed(r->scores.macro_fpr) << " | " << fixed(r->scores.macro_f1) << " | "
                    << fixed(r->wall_time_s, 1) << " | `" << r->config.dump() << "` |\n";
            }
            out << '\n';
        }
    }
    std::vector<DeltaRow> matched;
    for (const auto& d : deltas) {
        if (d.produced) matched.push_back(d);
    }
    out << "## Comparison with published scores\n\n";
    const auto missing = deltas.size() - matched.size();
    out << render_delta_table(matched);
    out << "\n" << missing << " published cells have no produced run (see deltas.csv).\n";
    return out.str();
}

std::string render_svg(std::span<const EvalRun> runs, Scenario scenario) {
    std::vector<const EvalRun*> cells;
    for (const auto& r : runs) {
        if (r.scenario == scenario && r.phase == Phase::Eval) cells.push_back(&r);
    }
    std::vector<EvalRun> sorted;
    for (const auto* c : cells) sorted.push_back(*c);
    sort_runs(sorted);

    std::vector<std::string> models;
    std::vector<std::string> datasets;
    for (const auto& r : sorted) {
        if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
    }
    std::sort(datasets.begin(), datasets.end(), [](const std::string& a, const std::string& b) {
        return std::make_pair(dataset_rank(a), a) < std::make_pair(dataset_rank(b), b);
    });
    std::map<std::pair<std::string, std::string>, double> value;
    for (const auto& r : sorted) value[{r.model, r.dataset}] = r.scores.macro_f1;

    const int bar = 14;
    const int gap = 24;
    const int left = 60;
    const int top = 40;
    const int plot_h = 300;
    const int group_w = static_cast<int>(std::max<std::size_t>(1, datasets.size())) * bar + gap;
    const int width = left + static_cast<int>(std::max<std::size_t>(1, models.size())) * group_w + 20;
    const int legend_y = top + plot_h + 50;
    const int height = legend_y + 20 * static_cast<int>(std::max<std::size_t>(1, datasets.size())) + 10;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">"
        << (scenario == Scenario::Binary ? "Binary evaluation F1 (%)" : "Multi-class evaluation macro-F1 (%)")
        << "</text>\n";
    for (int tick = 0; tick <= 100; tick += 20) {
        const int y = top + plot_h - tick * plot_h / 100;
        out << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << width - 20 << "\" y2=\"" << y
            << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << tick << "</text>\n";
    }
    for (std::size_t m = 0; m < models.size(); ++m) {
        const int gx = left + static_cast<int>(m) * group_w + gap / 2;
        for (std::size_t d = 0; d < datasets.size(); ++d) {
            auto it = value.find({models[m], datasets[d]});
            if (it == value.end()) continue;
            const double v = std::clamp(it->second, 0.0, 100.0);
            const double h = v * plot_h / 100.0;
            out << "<rect x=\"" << gx + static_cast<int>(d) * bar << "\" y=\"" << fixed(top + plot_h - h) << "\" width=\""
                << bar - 2 << "\" height=\"" << fixed(h) << "\" fill=\"" << kPalette[d % kPalette.size()]
                << "\"><title>" << xml_escape(models[m] + " " + datasets[d] + ": " + fixed(it->second))
                << "</title></rect>\n";
        }
        out << "<text x=\"" << gx + static_cast<int>(datasets.size()) * bar / 2 << "\" y=\"" << top + plot_h + 18
            << "\" text-anchor=\"middle\">" << xml_escape(models[m]) << "</text>\n";
    }
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const int y = legend_y + 20 * static_cast<int>(d);
        out << "<rect x=\"" << left << "\" y=\"" << y - 10 << "\" width=\"12\" height=\"12\" fill=\""
            << kPalette[d % kPalette.size()] << "\"/>\n";
        out << "<text x=\"" << left + 18 << "\" y=\"" << y << "\">" << xml_escape(datasets[d]) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

void render_report(std::span<const EvalRun> runs, std::span<const DeltaRow> deltas,
                   const std::filesystem::path& out_dir) {
    if (runs.empty()) throw InvalidArgument("report needs at least one run");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());
    std::vector<EvalRun> sorted(runs.begin(), runs.end());
    sort_runs(sorted);

    std::ostringstream runs_csv;
    write_runs_csv(runs_csv, sorted);
    write_file(out_dir / "runs.csv", runs_csv.str());
    std::ostringstream deltas_csv;
    write_deltas_csv(deltas_csv, deltas);
    write_file(out_dir / "deltas.csv", deltas_csv.str());
    write_file(out_dir / "report.md", render_markdown(sorted, deltas));
    write_file(out_dir / "binary.svg", render_svg(sorted, Scenario::Binary));
    write_file(out_dir / "multiclass.svg", render_svg(sorted, Scenario::Multiclass));
}

}  // namespace flowsentry
