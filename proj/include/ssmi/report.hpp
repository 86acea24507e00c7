#pragma once

#include <string>

#include "ssmi/eval.hpp"

namespace ssmi {

// Plain-text report format, consumed by the `report` subcommand:
//
//   # ssmi report v1
//   key = value            (one per line; doubles printed with %.17g)
//   [rows]
//   ablation=<s> sigma=<f> freeze=<s> accuracy=<f> bleu4=<f> mse=<f> delta_accuracy=<f>
//
std::string format_report(const EvalReport& rep);
EvalReport parse_report(const std::string& text);

void write_report(const EvalReport& rep, const std::string& path);
EvalReport read_report(const std::string& path);

// Aligned human-readable rendering for the CLI.
std::string pretty_report(const EvalReport& rep);

}  // namespace ssmi
