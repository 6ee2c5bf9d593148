#include "core/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "core/util.hpp"

namespace dapt {

namespace {

// Scores live in [0,1]; two-decimal work happens on integer hundredths so
// the rendered deltas match the rendered scores exactly.
long long to_cents(double score) {
  return std::llround(round_half_up(score, 2) * 100.0);
}

double pick_score(const SweepResult& r, const std::string& field) {
  if (field == "macro_f1") return r.macro_f1;
  if (field == "weighted_f1") return r.weighted_f1;
  if (field == "accuracy") return r.accuracy;
  throw ConfigError("report: unknown score field '" + field +
                    "' (expected macro_f1, weighted_f1, or accuracy)");
}

std::string cents_str(long long cents) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld.%02lld", cents / 100, cents % 100);
  return buf;
}

}  // namespace

std::string format_score2(double score) {
  return cents_str(to_cents(score));
}

std::string format_delta2(double score, double baseline) {
  long long delta = to_cents(score) - to_cents(baseline);
  char sign = delta < 0 ? '-' : '+';
  long long a = delta < 0 ? -delta : delta;
  char buf[32];
  if (a < 100) {
    std::snprintf(buf, sizeof(buf), "%c.%02lld", sign, a);
  } else {
    std::snprintf(buf, sizeof(buf), "%c%lld.%02lld", sign, a / 100, a % 100);
  }
  return buf;
}

RenderedReport render_report(const std::vector<SweepResult>& results,
                             const ReportOptions& options) {
  // Seed-averaged score per (variant, fraction), variants in first-seen
  // order with the baseline forced to the front.
  std::vector<std::string> variants;
  auto variant_index = [&](const std::string& name) {
    for (size_t i = 0; i < variants.size(); ++i) {
      if (variants[i] == name) return i;
    }
    variants.push_back(name);
    return variants.size() - 1;
  };
  variant_index(options.baseline_variant);

  struct Agg {
    double sum = 0.0;
    int n = 0;
  };
  std::map<std::pair<std::string, int>, Agg> cells;
  std::vector<int> fractions;
  for (const SweepResult& r : results) {
    if (!options.task.empty() && r.task != options.task) continue;
    if (!options.arch.empty() && r.arch != options.arch) continue;
    variant_index(r.variant);
    Agg& agg = cells[{r.variant, r.fraction_pct}];
    agg.sum += pick_score(r, options.score_field);
    ++agg.n;
    if (std::find(fractions.begin(), fractions.end(), r.fraction_pct) ==
        fractions.end()) {
      fractions.push_back(r.fraction_pct);
    }
  }
  if (fractions.empty()) {
    throw DataError("report: no sweep results match task='" + options.task +
                    "' arch='" + options.arch + "'");
  }
  std::sort(fractions.rbegin(), fractions.rend());

  auto mean_of = [&](const std::string& variant, int pct, double* out) {
    auto it = cells.find({variant, pct});
    if (it == cells.end()) return false;
    *out = it->second.sum / it->second.n;
    return true;
  };

  // Text table.
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"train%"};
  header.insert(header.end(), variants.begin(), variants.end());
  grid.push_back(header);

  std::ostringstream tsv;
  tsv << "task\tarch\tfraction_pct\tvariant\tseeds\tscore_mean\tscore_2dp"
         "\tdelta_2dp\trow_best\n";

  for (int pct : fractions) {
    double baseline_mean = 0.0;
    if (!mean_of(options.baseline_variant, pct, &baseline_mean)) {
      throw DataError("report: no '" + options.baseline_variant +
                      "' row for fraction " + std::to_string(pct) + "%");
    }
    // Row maximum on the displayed (two-decimal) values.
    long long best_cents = -1;
    for (const std::string& v : variants) {
      double mean = 0.0;
      if (mean_of(v, pct, &mean)) {
        best_cents = std::max(best_cents, to_cents(mean));
      }
    }

    std::vector<std::string> row{std::to_string(pct)};
    for (const std::string& v : variants) {
      double mean = 0.0;
      if (!mean_of(v, pct, &mean)) {
        row.push_back("-");
        continue;
      }
      std::string cell = format_score2(mean);
      if (v != options.baseline_variant) {
        cell += " (" + format_delta2(mean, baseline_mean) + ")";
      }
      bool best = to_cents(mean) == best_cents;
      if (best) cell += " *";
      row.push_back(cell);

      char mean_buf[40];
      std::snprintf(mean_buf, sizeof(mean_buf), "%.17g", mean);
      tsv << (options.task.empty() ? "-" : options.task) << '\t'
          << (options.arch.empty() ? "-" : options.arch) << '\t' << pct << '\t'
          << v << '\t' << cells[{v, pct}].n << '\t' << mean_buf << '\t'
          << format_score2(mean) << '\t'
          << (v == options.baseline_variant ? std::string("")
                                            : format_delta2(mean, baseline_mean))
          << '\t' << (best ? 1 : 0) << '\n';
    }
    grid.push_back(std::move(row));
  }

  std::vector<size_t> widths(grid[0].size(), 0);
  for (const auto& row : grid) {
    for (size_t c = 0; c < row.size(); ++c) {
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  std::ostringstream text;
  for (size_t r = 0; r < grid.size(); ++r) {
    for (size_t c = 0; c < grid[r].size(); ++c) {
      text << grid[r][c];
      if (c + 1 < grid[r].size()) {
        text << std::string(widths[c] - grid[r][c].size() + 2, ' ');
      }
    }
    text << '\n';
    if (r == 0) {
      for (size_t c = 0; c < widths.size(); ++c) {
        text << std::string(widths[c], '-');
        if (c + 1 < widths.size()) text << "  ";
      }
      text << '\n';
    }
  }

  return {text.str(), tsv.str()};
}

}  // namespace dapt
