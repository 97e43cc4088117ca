/*
 * Copyright 2026 The attnx Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "attnx/report.h"

#include <cmath>
#include <cstdio>

#include "attnx/error.h"

namespace attnx {

std::vector<ReportUnit> report_units(const TokenSequence& seq,
                                     const Interpretation& interp,
                                     std::span<const SentenceSpan> spans) {
  std::vector<ReportUnit> out;
  if (interp.granularity == Granularity::kToken) {
    if (interp.weights.size() != seq.size()) {
      throw ContractError("report: weights do not match the sequence length");
    }
    for (std::size_t i = 0; i < seq.size(); ++i) {
      ReportUnit unit{seq.tokens()[i], std::nullopt};
      if (!seq.is_special(i)) unit.weight = interp.weights[i];
      out.push_back(std::move(unit));
    }
    return out;
  }
  if (interp.weights.size() != spans.size()) {
    throw ContractError("report: one sentence weight per span required");
  }
  std::size_t pos = 0;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    for (; pos < spans[k].begin; ++pos) {
      out.push_back({seq.tokens()[pos], std::nullopt});
    }
    std::string text;
    for (; pos < spans[k].end; ++pos) {
      if (!text.empty()) text += ' ';
      text += seq.tokens()[pos];
    }
    out.push_back({text, interp.weights[k]});
  }
  for (; pos < seq.size(); ++pos) out.push_back({seq.tokens()[pos], std::nullopt});
  return out;
}

namespace {

std::string fixed(double value, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", digits, value);
  return buffer;
}

double max_magnitude(const std::vector<ReportUnit>& units) {
  double m = 0.0;
  for (const ReportUnit& u : units) {
    if (u.weight) m = std::max(m, std::fabs(*u.weight));
  }
  return m;
}

std::string escape_html(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      case '\'':
        out += "&#39;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string header_line(const ExplainReport& r) {
  return "instance " + r.instance_id + " | technique " + r.technique +
         " | variant " + to_string(r.variant) + " | combo " +
         (r.combo ? to_string(*r.combo) : std::string("-")) + " | label " +
         r.label_name + " (p=" + fixed(r.probability, 4) + ") | " + r.metric +
         " " + fixed(r.score, 6);
}

}  // namespace

std::string render_text(const ExplainReport& report) {
  std::string out = header_line(report) + "\n";
  const double scale = max_magnitude(report.units);
  for (const ReportUnit& u : report.units) {
    if (!u.weight) {
      out += "  " + u.text + "\n";
      continue;
    }
    const double w = *u.weight;
    const int bars =
        scale > 0.0 ? static_cast<int>(std::lround(10.0 * std::fabs(w) / scale))
                    : 0;
    std::string bar(static_cast<std::size_t>(bars), w > 0.0 ? '+' : '-');
    out += "  " + u.text + "\t" + (w >= 0.0 ? "+" : "") + fixed(w, 6) + "\t" +
           bar + "\n";
  }
  return out;
}

std::string render_html(const ExplainReport& report) {
  const double scale = max_magnitude(report.units);
  std::string out =
      "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>" +
      escape_html(report.instance_id) +
      "</title>\n</head>\n<body style=\"font-family:sans-serif\">\n<p>" +
      escape_html(header_line(report)) + "</p>\n<p style=\"line-height:2\">";
  for (std::size_t i = 0; i < report.units.size(); ++i) {
    const ReportUnit& u = report.units[i];
    if (i > 0) out += ' ';
    const std::string text = escape_html(u.text);
    if (!u.weight || *u.weight == 0.0 || scale == 0.0) {
      out += "<span>" + text + "</span>";
      continue;
    }
    const double w = *u.weight;
    const std::string alpha = fixed(std::fabs(w) / scale, 3);
    const std::string rgb = w > 0.0 ? "255,0,0" : "0,0,255";
    out += "<span style=\"background-color:rgba(" + rgb + "," + alpha +
           ")\" title=\"" + fixed(w, 6) + "\">" + text + "</span>";
  }
  out += "</p>\n</body>\n</html>\n";
  return out;
}

}  // namespace attnx
