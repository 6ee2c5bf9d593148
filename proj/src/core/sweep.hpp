#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/training.hpp"
#include "core/wordpiece.hpp"

namespace dapt {

// One sweep cell outcome. Fractions are kept as integer percents so that
// result keys compare exactly across writes, reloads, and reruns.
struct SweepResult {
  std::string task;
  std::string variant;  // "baseline" or a post-trained variant name
  std::string arch;
  int fraction_pct = 100;
  uint64_t seed = 0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
};

// Append-only tab-separated store with a schema line; reopening picks up
// every previously finished cell, which is what makes sweeps resumable after
// an interruption.
class ResultsStore {
 public:
  static constexpr int kSchemaVersion = 1;

  // Loads existing rows when the file exists; otherwise the first append
  // creates it with the schema and header lines.
  explicit ResultsStore(std::string path);

  bool contains(const std::string& task, const std::string& variant,
                const std::string& arch, int fraction_pct,
                uint64_t seed) const;
  void append(const SweepResult& result);
  const std::vector<SweepResult>& rows() const { return rows_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<SweepResult> rows_;
};

struct SweepVariant {
  std::string name;
  std::string checkpoint_path;  // headless encoder checkpoint
};

struct SweepPlan {
  std::string task;
  std::string arch;
  std::vector<SweepVariant> variants;  // baseline listed like any other
  std::vector<int> fractions_pct;      // rendered descending later
  std::vector<uint64_t> seeds;
  TrainConfig finetune;  // per-cell recipe; seeds are derived per cell
  int num_labels = 0;
  int eval_batch_size = 32;
};

// Runs every (variant x fraction x seed) cell not already in the store:
// subset the train split, fine-tune from the variant's checkpoint, evaluate
// on the fixed test split, append. The subset and fine-tune seeds derive
// from (cell seed, fraction) only — never from the variant — so any two
// variants face identical fine-tuning subsets (paired comparison).
// `workers` > 1 runs cells concurrently; results are keyed, so completion
// order does not affect content.
std::vector<SweepResult> run_sweep(const SweepPlan& plan,
                                   const Vocabulary& vocab,
                                   const LabeledDataset& ds,
                                   ResultsStore& store, std::ostream* log,
                                   int workers = 1);

// Seed derivations shared with tests.
uint64_t sweep_subset_seed(uint64_t cell_seed, int fraction_pct);
uint64_t sweep_finetune_seed(uint64_t cell_seed, int fraction_pct);

}  // namespace dapt
