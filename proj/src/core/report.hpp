#pragma once

#include <string>
#include <vector>

#include "core/sweep.hpp"

namespace dapt {

struct ReportOptions {
  std::string baseline_variant = "baseline";
  // Which SweepResult field the table shows: macro_f1 | weighted_f1 | accuracy.
  std::string score_field = "macro_f1";
  // Optional filters; empty matches everything.
  std::string task;
  std::string arch;
};

struct RenderedReport {
  std::string text;  // aligned table for humans
  std::string tsv;   // full-precision rows for machines
};

// Two-decimal score formatting (round half up) and the signed compact delta
// used in table cells: +.03, -.01, +.00 (the leading zero is dropped).
std::string format_score2(double score);
std::string format_delta2(double score, double baseline);

// Renders one row per fraction (descending 100 -> 10) and one column per
// variant. Non-baseline cells carry their delta against the baseline column
// at matching fraction, computed on the two-decimal values; per-row maxima
// are marked with '*'. Scores are averaged over seeds first. Throws
// DataError when a fraction lacks a baseline row.
RenderedReport render_report(const std::vector<SweepResult>& results,
                             const ReportOptions& options);

}  // namespace dapt
