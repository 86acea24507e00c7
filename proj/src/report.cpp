#include "ssmi/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ssmi/container.hpp"

namespace ssmi {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

}  // namespace

std::string format_report(const EvalReport& rep) {
    std::string out = "# ssmi report v1\n";
    out += "mode = " + rep.mode + "\n";
    out += "stage = " + rep.stage + "\n";
    out += "aggregation = " + rep.aggregation + "\n";
    std::string seeds;
    for (std::size_t i = 0; i < rep.seeds.size(); ++i) {
        if (i) seeds += ",";
        seeds += std::to_string(rep.seeds[i]);
    }
    out += "seeds = " + seeds + "\n";
    out += "trainable_ratio = " + fmt(rep.trainable_ratio) + "\n";
    out += "efficiency_target_ratio = " + fmt(rep.efficiency_target_ratio) + "\n";
    out += "chance_accuracy = " + fmt(rep.chance_accuracy) + "\n";
    out += "degradation_monotone = " +
           std::string(rep.degradation_monotone < 0 ? "n/a"
                       : rep.degradation_monotone   ? "true"
                                                    : "false") +
           "\n";
    out += "[rows]\n";
    for (const auto& r : rep.rows) {
        out += "ablation=" + r.ablation + " sigma=" + fmt(r.sigma) + " freeze=" + r.freeze +
               " accuracy=" + fmt(r.accuracy) + " bleu4=" + fmt(r.bleu4) + " mse=" + fmt(r.mse) +
               " delta_accuracy=" + fmt(r.delta_accuracy) + "\n";
    }
    return out;
}

EvalReport parse_report(const std::string& text) {
    std::istringstream ss(text);
    std::string line;
    if (!std::getline(ss, line) || line != "# ssmi report v1") {
        throw ParseError("report: missing '# ssmi report v1' header");
    }
    EvalReport rep;
    bool in_rows = false;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        if (line == "[rows]") {
            in_rows = true;
            continue;
        }
        if (!in_rows) {
            const auto eq = line.find(" = ");
            if (eq == std::string::npos) throw ParseError("report: bad key line '" + line + "'");
            const std::string key = line.substr(0, eq);
            const std::string val = line.substr(eq + 3);
            if (key == "mode") rep.mode = val;
            else if (key == "stage") rep.stage = val;
            else if (key == "aggregation") rep.aggregation = val;
            else if (key == "seeds") {
                std::istringstream vs(val);
                std::string tok;
                while (std::getline(vs, tok, ',')) {
                    if (!tok.empty()) rep.seeds.push_back(std::stoull(tok));
                }
            } else if (key == "trainable_ratio") rep.trainable_ratio = std::stod(val);
            else if (key == "efficiency_target_ratio") rep.efficiency_target_ratio = std::stod(val);
            else if (key == "chance_accuracy") rep.chance_accuracy = std::stod(val);
            else if (key == "degradation_monotone")
                rep.degradation_monotone = val == "n/a" ? -1 : val == "true" ? 1 : 0;
            else throw ParseError("report: unknown key '" + key + "'");
        } else {
            MetricRow row;
            for (const auto& tok : split_ws(line)) {
                const auto eq = tok.find('=');
                if (eq == std::string::npos) throw ParseError("report: bad row token '" + tok + "'");
                const std::string key = tok.substr(0, eq);
                const std::string val = tok.substr(eq + 1);
                if (key == "ablation") row.ablation = val;
                else if (key == "sigma") row.sigma = std::stod(val);
                else if (key == "freeze") row.freeze = val;
                else if (key == "accuracy") row.accuracy = std::stod(val);
                else if (key == "bleu4") row.bleu4 = std::stod(val);
                else if (key == "mse") row.mse = std::stod(val);
                else if (key == "delta_accuracy") row.delta_accuracy = std::stod(val);
                else throw ParseError("report: unknown row key '" + key + "'");
            }
            rep.rows.push_back(row);
        }
    }
    return rep;
}

void write_report(const EvalReport& rep, const std::string& path) {
    write_file_atomic(path, format_report(rep));
}

EvalReport read_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open report file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_report(ss.str());
}

std::string pretty_report(const EvalReport& rep) {
    char line[256];
    std::string out;
    out += "mode: " + rep.mode + "   stage: " + rep.stage + "\n";
    std::snprintf(line, sizeof(line),
                  "trainable ratio: %.6f   (SSMI reference target: %.4f)\n", rep.trainable_ratio,
                  rep.efficiency_target_ratio);
    out += line;
    std::snprintf(line, sizeof(line), "chance accuracy: %.6f\n", rep.chance_accuracy);
    out += line;
    if (!rep.seeds.empty()) {
        out += "seeds:";
        for (auto s : rep.seeds) out += " " + std::to_string(s);
        out += "   aggregation: " + rep.aggregation + "\n";
    }
    if (rep.degradation_monotone >= 0) {
        out += std::string("degradation monotone: ") +
               (rep.degradation_monotone ? "true" : "false") + "\n";
    }
    std::snprintf(line, sizeof(line), "%-20s %8s %-14s %10s %10s %12s %10s\n", "ablation", "sigma",
                  "freeze", "accuracy", "bleu4", "mse", "delta_acc");
    out += line;
    for (const auto& r : rep.rows) {
        std::snprintf(line, sizeof(line), "%-20s %8.3f %-14s %10.4f %10.4f %12.6f %10.4f\n",
                      r.ablation.c_str(), r.sigma, r.freeze.c_str(), r.accuracy, r.bleu4, r.mse,
                      r.delta_accuracy);
        out += line;
    }
    return out;
}

}  // namespace ssmi
