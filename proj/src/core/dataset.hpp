#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dapt {

struct LabeledExample {
  std::string text;
  int label = 0;
};

// A classification dataset with named labels and optional train/val/test
// index sets. Splits, when present, are disjoint and cover all examples.
struct LabeledDataset {
  std::vector<LabeledExample> examples;
  std::vector<std::string> label_names;  // label id -> display name
  std::vector<int64_t> train, val, test;

  int64_t size() const { return static_cast<int64_t>(examples.size()); }
  int num_labels() const { return static_cast<int>(label_names.size()); }
  bool has_splits() const { return !train.empty() || !val.empty() || !test.empty(); }
};

// Throws DataError if a label id is out of range or the splits fail to
// partition the example indices.
void validate_dataset(const LabeledDataset& ds);

// Per-class example counts over one index set.
std::vector<int64_t> label_histogram(const LabeledDataset& ds,
                                     const std::vector<int64_t>& indices);

struct SplitRatios {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

// Seeded shuffle followed by a contiguous partition. The boundaries sit at
// round-half-up of the cumulative ratios — round(N*r_train) and
// round(N*(r_train+r_val)) — with the remainder going to test, so the three
// sizes always sum to N. Stratified mode applies the same rule per class and
// concatenates the per-class pieces in label order.
// Throws ConfigError for bad ratios and DataError if any split comes out
// empty.
LabeledDataset make_splits(const LabeledDataset& ds, SplitRatios ratios,
                           uint64_t seed, bool stratified);

// On-disk layout, all rooted at `csv_path`:
//   <csv_path>         delimited text, header "text,label", RFC 4180 quoting
//   <csv_path>.labels  one "id<TAB>name" line per label
//   <csv_path>.train / .val / .test   one example index per line (written
//                                     only when the dataset has splits)
void save_dataset(const LabeledDataset& ds, const std::string& csv_path);
LabeledDataset load_dataset(const std::string& csv_path);

}  // namespace dapt
